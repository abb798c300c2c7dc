//! Operating-record ingestion, consistency filtering and the synthetic
//! boundary-condition year.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics::{OperatingRecord, SUBLOOPS};

/// kg/s per US gallon per minute of water.
pub const GPM_TO_KG_S: f64 = 0.0631;

/// Offset used to reconstruct a missing wet-bulb from the supply temperature, K.
pub const WETBULB_RECONSTRUCTION_OFFSET: f64 = 4.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: cannot parse `{value}` in column `{column}`")]
    Parse { line: u64, column: String, value: String },
    #[error("invalid synthetic-year spec field `{field}`: {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error("spec file: {0}")]
    SpecFormat(#[from] toml::de::Error),
    #[error("no rows with positive per-subloop flows")]
    NoFlowData,
}

pub fn gpm_to_kg_s(flow_gpm: f64) -> f64 {
    flow_gpm * GPM_TO_KG_S
}

/// One unfiltered telemetry row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub timestamp: NaiveDateTime,
    pub t_supply: f64,
    /// Per-subloop flows, kg/s.
    pub flows: [f64; SUBLOOPS],
    pub q: [f64; SUBLOOPS],
    pub t_return: Option<[f64; SUBLOOPS]>,
    pub t_wetbulb: Option<f64>,
}

impl RawRecord {
    pub fn total_flow(&self) -> f64 {
        self.flows.iter().sum()
    }

    pub fn total_load(&self) -> f64 {
        self.q.iter().sum()
    }
}

impl From<&OperatingRecord> for RawRecord {
    fn from(r: &OperatingRecord) -> Self {
        let flows = r.subloop_flows.unwrap_or_else(|| {
            let third = r.m_total / 3.0;
            [third, third, r.m_total - 2.0 * third]
        });
        Self {
            timestamp: r.timestamp,
            t_supply: r.t_supply,
            flows,
            q: r.q_subloop,
            t_return: r.t_return_measured,
            t_wetbulb: if r.wetbulb_reconstructed { None } else { Some(r.t_wetbulb) },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FilterReason {
    NonFinite,
    ReturnBelowSupply,
    LoadAboveMax,
    SupplyBelowMin,
    FlowBelowMin,
}

impl FilterReason {
    pub fn code(self) -> &'static str {
        match self {
            FilterReason::NonFinite => "NON_FINITE",
            FilterReason::ReturnBelowSupply => "RETURN_BELOW_SUPPLY",
            FilterReason::LoadAboveMax => "LOAD_ABOVE_MAX",
            FilterReason::SupplyBelowMin => "SUPPLY_BELOW_MIN",
            FilterReason::FlowBelowMin => "FLOW_BELOW_MIN",
        }
    }
}

impl fmt::Display for FilterReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterLimits {
    /// Largest plausible total load, W.
    pub q_total_max: f64,
    /// Smallest plausible supply temperature, °C.
    pub t_supply_min: f64,
    /// Smallest plausible total flow, kg/s.
    pub flow_total_min: f64,
}

impl Default for FilterLimits {
    fn default() -> Self {
        Self { q_total_max: 15.0e6, t_supply_min: 5.0, flow_total_min: 30.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// Zero-based position in the raw input.
    pub row: usize,
    pub reason: FilterReason,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterOutcome {
    pub clean: Vec<OperatingRecord>,
    pub rejections: Vec<Rejection>,
}

impl FilterOutcome {
    /// Line-delimited `REASON,row` log.
    pub fn rejection_log(&self) -> String {
        self.rejections.iter().map(|r| format!("{},{}\n", r.reason.code(), r.row)).collect()
    }

    pub fn count_by_reason(&self) -> HashMap<FilterReason, usize> {
        let mut counts = HashMap::new();
        for r in &self.rejections {
            *counts.entry(r.reason).or_insert(0) += 1;
        }
        counts
    }
}

/// First consistency rule the row breaks, if any.
pub fn check_record(raw: &RawRecord, limits: &FilterLimits) -> Option<FilterReason> {
    let finite = raw.t_supply.is_finite()
        && raw.flows.iter().all(|v| v.is_finite())
        && raw.q.iter().all(|v| v.is_finite())
        && raw.t_return.is_none_or(|t| t.iter().all(|v| v.is_finite()))
        && raw.t_wetbulb.is_none_or(f64::is_finite);
    if !finite || raw.q.iter().any(|&q| q < 0.0) {
        return Some(FilterReason::NonFinite);
    }
    if raw.t_return.is_some_and(|t| t.iter().any(|&tr| tr < raw.t_supply)) {
        return Some(FilterReason::ReturnBelowSupply);
    }
    if raw.total_load() > limits.q_total_max {
        return Some(FilterReason::LoadAboveMax);
    }
    if raw.t_supply < limits.t_supply_min {
        return Some(FilterReason::SupplyBelowMin);
    }
    if raw.total_flow() < limits.flow_total_min {
        return Some(FilterReason::FlowBelowMin);
    }
    None
}

pub fn to_operating_record(raw: &RawRecord) -> OperatingRecord {
    let (t_wetbulb, wetbulb_reconstructed) = match raw.t_wetbulb {
        Some(t) => (t, false),
        None => (raw.t_supply - WETBULB_RECONSTRUCTION_OFFSET, true),
    };
    OperatingRecord {
        timestamp: raw.timestamp,
        t_supply: raw.t_supply,
        m_total: raw.total_flow(),
        q_subloop: raw.q,
        t_return_measured: raw.t_return,
        subloop_flows: Some(raw.flows),
        t_wetbulb,
        wetbulb_reconstructed,
    }
}

/// Drops physically inconsistent rows, logging the first broken rule of each.
pub fn filter_records(raw: &[RawRecord], limits: &FilterLimits) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for (row, r) in raw.iter().enumerate() {
        match check_record(r, limits) {
            Some(reason) => out.rejections.push(Rejection { row, reason }),
            None => out.clean.push(to_operating_record(r)),
        }
    }
    out
}

/// Time-mean per-subloop flow share, renormalized. Rows without positive
/// total flow are skipped.
pub fn estimate_flow_fractions(records: &[OperatingRecord]) -> Result<[f64; SUBLOOPS], DataError> {
    let mut acc = [0.0; SUBLOOPS];
    let mut rows = 0usize;
    for flows in records.iter().filter_map(|r| r.subloop_flows) {
        let total: f64 = flows.iter().sum();
        if total > 0.0 && flows.iter().all(|f| f.is_finite() && *f >= 0.0) {
            for (a, f) in acc.iter_mut().zip(flows) {
                *a += f / total;
            }
            rows += 1;
        }
    }
    if rows == 0 {
        return Err(DataError::NoFlowData);
    }
    let sum: f64 = acc.iter().sum();
    Ok(acc.map(|a| a / sum))
}

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t);
        }
    }
    chrono::DateTime::parse_from_rfc3339(s).ok().map(|t| t.naive_utc())
}

struct Columns {
    timestamp: usize,
    t_supply: usize,
    flows: [usize; SUBLOOPS],
    flows_in_gpm: bool,
    q: [usize; SUBLOOPS],
    t_return: Option<[usize; SUBLOOPS]>,
    t_wetbulb: Option<usize>,
}

impl Columns {
    fn locate(headers: &csv::StringRecord) -> Result<Self, DataError> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let need = |name: String| find(&name).ok_or(DataError::MissingColumn(name));
        let triple = |fmt: &dyn Fn(usize) -> String| -> Option<[usize; SUBLOOPS]> {
            let v: Vec<usize> = (1..=SUBLOOPS).filter_map(|i| find(&fmt(i))).collect();
            v.try_into().ok()
        };
        let (flows, flows_in_gpm) = match (triple(&|i| format!("flow_{i}_kgs")), triple(&|i| format!("flow_{i}_gpm"))) {
            (Some(f), _) => (f, false),
            (None, Some(f)) => (f, true),
            (None, None) => return Err(DataError::MissingColumn("flow_1_kgs..flow_3_kgs".into())),
        };
        let q = [need("q_1_w".into())?, need("q_2_w".into())?, need("q_3_w".into())?];
        Ok(Self {
            timestamp: need("timestamp".into())?,
            t_supply: need("t_supply_c".into())?,
            flows,
            flows_in_gpm,
            q,
            t_return: triple(&|i| format!("t_return_{i}_c")),
            t_wetbulb: find("t_wetbulb_c"),
        })
    }
}

/// Reads the telemetry CSV schema. Unknown columns are ignored; blank
/// optional cells are treated as absent.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<RawRecord>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let cols = Columns::locate(rdr.headers()?)?;
    let headers = rdr.headers()?.clone();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let cell = |i: usize| row.get(i).unwrap_or("");
        let bad = |i: usize| DataError::Parse {
            line,
            column: headers.get(i).unwrap_or("?").to_string(),
            value: cell(i).to_string(),
        };
        let num = |i: usize| cell(i).parse::<f64>().map_err(|_| bad(i));
        let opt = |i: usize| if cell(i).is_empty() { Ok(None) } else { num(i).map(Some) };

        let timestamp = parse_timestamp(cell(cols.timestamp)).ok_or_else(|| bad(cols.timestamp))?;
        let mut flows = [0.0; SUBLOOPS];
        let mut q = [0.0; SUBLOOPS];
        for k in 0..SUBLOOPS {
            let f = num(cols.flows[k])?;
            flows[k] = if cols.flows_in_gpm { gpm_to_kg_s(f) } else { f };
            q[k] = num(cols.q[k])?;
        }
        let t_return = match cols.t_return {
            Some(idx) => {
                let vals = [opt(idx[0])?, opt(idx[1])?, opt(idx[2])?];
                match vals {
                    [Some(a), Some(b), Some(c)] => Some([a, b, c]),
                    _ => None,
                }
            }
            None => None,
        };
        let t_wetbulb = match cols.t_wetbulb {
            Some(i) => opt(i)?,
            None => None,
        };
        out.push(RawRecord { timestamp, t_supply: num(cols.t_supply)?, flows, q, t_return, t_wetbulb });
    }
    Ok(out)
}

pub fn read_csv_path(path: &Path) -> Result<Vec<RawRecord>, DataError> {
    read_csv(std::fs::File::open(path)?)
}

pub const CSV_HEADER: [&str; 12] = [
    "timestamp",
    "t_supply_c",
    "flow_1_kgs",
    "flow_2_kgs",
    "flow_3_kgs",
    "q_1_w",
    "q_2_w",
    "q_3_w",
    "t_return_1_c",
    "t_return_2_c",
    "t_return_3_c",
    "t_wetbulb_c",
];

/// Writes records in the telemetry schema. Floats use the shortest
/// representation that reads back to the same value.
pub fn write_csv<W: Write>(writer: W, records: &[OperatingRecord]) -> Result<(), DataError> {
    let raw: Vec<RawRecord> = records.iter().map(RawRecord::from).collect();
    write_raw_csv(writer, &raw)
}

pub fn write_raw_csv<W: Write>(writer: W, records: &[RawRecord]) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for raw in records {
        let mut row = Vec::with_capacity(CSV_HEADER.len());
        row.push(raw.timestamp.format(TIMESTAMP_FORMAT).to_string());
        row.push(raw.t_supply.to_string());
        row.extend(raw.flows.iter().map(f64::to_string));
        row.extend(raw.q.iter().map(f64::to_string));
        match raw.t_return {
            Some(t) => row.extend(t.iter().map(f64::to_string)),
            None => row.extend(std::iter::repeat_n(String::new(), SUBLOOPS)),
        }
        row.push(raw.t_wetbulb.map(|t| t.to_string()).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Parameters of the synthetic boundary-condition year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticYearSpec {
    pub seed: u64,
    pub start: NaiveDate,
    pub days: u32,
    pub cadence_minutes: u32,

    /// Mean total IT load, W.
    pub load_mean_w: f64,
    /// Hard clip on the total load, W.
    pub load_band_w: (f64, f64),
    /// Slow load wander: standard deviation, W, and correlation time, h.
    pub load_wander_sigma_w: f64,
    pub load_wander_hours: f64,
    /// Job-mix level shifts: mean hours between changes and level spread, W.
    pub job_change_hours: f64,
    pub job_level_sigma_w: f64,
    /// Relative white noise on loads.
    pub load_noise_rel: f64,
    pub load_shares: [f64; SUBLOOPS],

    pub flow_fractions: [f64; SUBLOOPS],
    /// Relative noise on each record's flow split.
    pub flow_fraction_noise_rel: f64,
    pub winter_flow_kgs: f64,
    pub winter_flow_sigma_kgs: f64,
    pub summer_flow_kgs: f64,
    pub summer_flow_sigma_kgs: f64,
    pub flow_wander_hours: f64,
    pub flow_noise_kgs: f64,
    /// (month, day) on which the high-flow regime starts and ends.
    pub high_flow_window: ((u32, u32), (u32, u32)),
    /// Baseline flow never lets a modelled return exceed this, °C.
    pub flow_safety_return_c: f64,
    /// Specific heat behind the flow safety rule, J/(kg K).
    pub model_c_p: f64,

    pub wetbulb_mean_c: f64,
    pub wetbulb_amplitude_k: f64,
    /// Day of year (0-based) of the seasonal wet-bulb minimum.
    pub wetbulb_coldest_day: f64,
    pub wetbulb_diurnal_k: f64,
    /// Hour of the diurnal wet-bulb peak.
    pub wetbulb_peak_hour: f64,
    pub weather_sigma_k: f64,
    pub weather_hours: f64,
    pub temperature_noise_k: f64,
    /// White noise on the measured return temperatures, K.
    pub return_noise_k: f64,

    /// Supply-minus-wet-bulb offset at the coldest and warmest point, K.
    pub supply_offset_winter_k: f64,
    pub supply_offset_summer_k: f64,
    pub supply_clip_c: (f64, f64),

    /// Specific heat behind the synthetic measured returns, J/(kg K).
    pub dataset_c_p: f64,
}

impl Default for SyntheticYearSpec {
    fn default() -> Self {
        Self {
            seed: 42,
            start: NaiveDate::from_ymd_opt(2023, 1, 1).expect("valid date"),
            days: 365,
            cadence_minutes: 10,
            load_mean_w: 9.5e6,
            load_band_w: (7.2e6, 11.8e6),
            load_wander_sigma_w: 0.9e6,
            load_wander_hours: 48.0,
            job_change_hours: 6.0,
            job_level_sigma_w: 0.8e6,
            load_noise_rel: 0.02,
            load_shares: [0.181, 0.194, 0.625],
            flow_fractions: [0.244, 0.258, 0.498],
            flow_fraction_noise_rel: 0.01,
            winter_flow_kgs: 200.0,
            winter_flow_sigma_kgs: 5.0,
            summer_flow_kgs: 375.0,
            summer_flow_sigma_kgs: 12.0,
            flow_wander_hours: 120.0,
            flow_noise_kgs: 2.0,
            high_flow_window: ((5, 25), (10, 1)),
            flow_safety_return_c: 41.0,
            model_c_p: 3500.0,
            wetbulb_mean_c: 4.75,
            wetbulb_amplitude_k: 17.75,
            wetbulb_coldest_day: 20.0,
            wetbulb_diurnal_k: 1.5,
            wetbulb_peak_hour: 16.0,
            weather_sigma_k: 2.0,
            weather_hours: 72.0,
            temperature_noise_k: 0.3,
            return_noise_k: 0.25,
            supply_offset_winter_k: 32.0,
            supply_offset_summer_k: 6.0,
            supply_clip_c: (10.6, 33.6),
            dataset_c_p: 3709.0,
        }
    }
}

fn spec_err(field: &'static str, reason: impl Into<String>) -> DataError {
    DataError::InvalidSpec { field, reason: reason.into() }
}

impl SyntheticYearSpec {
    pub fn from_toml(text: &str) -> Result<Self, DataError> {
        let spec: Self = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn records_per_day(&self) -> usize {
        (24 * 60 / self.cadence_minutes.max(1)) as usize
    }

    pub fn record_count(&self) -> usize {
        self.days as usize * self.records_per_day()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.cadence_minutes == 0 {
            return Err(spec_err("cadence_minutes", "must be positive"));
        }
        if 1440 % self.cadence_minutes != 0 {
            return Err(spec_err("cadence_minutes", "must divide a day evenly"));
        }
        if self.days == 0 {
            return Err(spec_err("days", "must be positive"));
        }
        let (lo, hi) = self.load_band_w;
        if !(lo >= 0.0 && lo < hi) {
            return Err(spec_err("load_band_w", "must be ordered and non-negative"));
        }
        if !(self.load_mean_w >= lo && self.load_mean_w <= hi) {
            return Err(spec_err("load_mean_w", "must lie inside load_band_w"));
        }
        let (slo, shi) = self.supply_clip_c;
        if !(slo < shi) {
            return Err(spec_err("supply_clip_c", "must be ordered"));
        }
        if !(shi < self.flow_safety_return_c) {
            return Err(spec_err("flow_safety_return_c", "must exceed the supply clip"));
        }
        let ((m1, d1), (m2, d2)) = self.high_flow_window;
        let valid = |m: u32, d: u32| NaiveDate::from_ymd_opt(2023, m, d).is_some();
        if !valid(m1, d1) || !valid(m2, d2) || (m1, d1) >= (m2, d2) {
            return Err(spec_err("high_flow_window", "must be two ordered (month, day) pairs"));
        }
        if !(self.winter_flow_kgs > 0.0 && self.summer_flow_kgs > 0.0) {
            return Err(spec_err("winter_flow_kgs", "flow levels must be positive"));
        }
        for (field, v) in [("load_shares", self.load_shares), ("flow_fractions", self.flow_fractions)] {
            if v.iter().any(|&x| !(x > 0.0)) || (v.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(spec_err(field, "entries must be positive and sum to 1"));
            }
        }
        let non_negative = [
            ("load_wander_sigma_w", self.load_wander_sigma_w),
            ("job_level_sigma_w", self.job_level_sigma_w),
            ("load_noise_rel", self.load_noise_rel),
            ("flow_fraction_noise_rel", self.flow_fraction_noise_rel),
            ("winter_flow_sigma_kgs", self.winter_flow_sigma_kgs),
            ("summer_flow_sigma_kgs", self.summer_flow_sigma_kgs),
            ("flow_noise_kgs", self.flow_noise_kgs),
            ("wetbulb_diurnal_k", self.wetbulb_diurnal_k),
            ("weather_sigma_k", self.weather_sigma_k),
            ("temperature_noise_k", self.temperature_noise_k),
            ("return_noise_k", self.return_noise_k),
        ];
        for (field, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(spec_err(field, "must be finite and non-negative"));
            }
        }
        let positive = [
            ("load_wander_hours", self.load_wander_hours),
            ("job_change_hours", self.job_change_hours),
            ("flow_wander_hours", self.flow_wander_hours),
            ("weather_hours", self.weather_hours),
            ("model_c_p", self.model_c_p),
            ("dataset_c_p", self.dataset_c_p),
        ];
        for (field, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(spec_err(field, "must be positive"));
            }
        }
        Ok(())
    }
}

/// First-order autoregressive noise with stationary standard deviation
/// `sigma` and correlation time `tau` steps, started at zero.
struct Ar1 {
    phi: f64,
    innovation: Normal<f64>,
    state: f64,
}

impl Ar1 {
    fn new(sigma: f64, tau_steps: f64) -> Self {
        let phi = (-1.0 / tau_steps).exp();
        let sd = sigma * (1.0 - phi * phi).sqrt();
        Self { phi, innovation: Normal::new(0.0, sd).expect("finite sd"), state: 0.0 }
    }

    fn next(&mut self, rng: &mut ChaCha20Rng) -> f64 {
        let out = self.state;
        self.state = self.phi * self.state + self.innovation.sample(rng);
        out
    }
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("finite sd")
}

/// Generates a full boundary-condition year with measured returns and
/// per-subloop flows. Identical specs give bit-identical output.
pub fn synthesize_year(spec: &SyntheticYearSpec) -> Result<Vec<OperatingRecord>, DataError> {
    spec.validate()?;
    let n = spec.record_count();
    let steps_per_hour = 60.0 / spec.cadence_minutes as f64;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut sensor_rng = ChaCha20Rng::seed_from_u64(spec.seed);
    sensor_rng.set_stream(1);

    let mut weather = Ar1::new(spec.weather_sigma_k, spec.weather_hours * steps_per_hour);
    let mut winter_flow = Ar1::new(spec.winter_flow_sigma_kgs, spec.flow_wander_hours * steps_per_hour);
    let mut summer_flow = Ar1::new(spec.summer_flow_sigma_kgs, spec.flow_wander_hours * steps_per_hour);
    let mut load_wander = Ar1::new(spec.load_wander_sigma_w, spec.load_wander_hours * steps_per_hour);
    let temp_noise = normal(spec.temperature_noise_k);
    let return_noise = normal(spec.return_noise_k);
    let flow_noise = normal(spec.flow_noise_kgs);
    let load_noise = normal(spec.load_noise_rel);
    let split_noise = normal(spec.flow_fraction_noise_rel);
    let job_level = normal(spec.job_level_sigma_w);
    let job_change_p = 1.0 / (spec.job_change_hours * steps_per_hour);
    let mut job_offset = 0.0;

    let start = spec.start.and_hms_opt(0, 0, 0).expect("midnight");
    let cadence = Duration::minutes(spec.cadence_minutes as i64);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let timestamp = start + cadence * i as i32;
        let day = (i / spec.records_per_day()) as f64 + (i % spec.records_per_day()) as f64 / spec.records_per_day() as f64;
        let hour = timestamp.hour() as f64 + timestamp.minute() as f64 / 60.0;
        let phase = 2.0 * PI * (day - spec.wetbulb_coldest_day) / 365.0;
        // 0 at the coldest point of the year, 1 at the warmest
        let warmth = 0.5 - 0.5 * phase.cos();

        let t_wetbulb = spec.wetbulb_mean_c - spec.wetbulb_amplitude_k * phase.cos()
            + spec.wetbulb_diurnal_k * (2.0 * PI * (hour - spec.wetbulb_peak_hour + 6.0) / 24.0).sin()
            + weather.next(&mut rng)
            + temp_noise.sample(&mut rng);
        let offset = spec.supply_offset_winter_k + (spec.supply_offset_summer_k - spec.supply_offset_winter_k) * warmth;
        let t_supply = (t_wetbulb + offset + temp_noise.sample(&mut rng)).clamp(spec.supply_clip_c.0, spec.supply_clip_c.1);

        let month_day = (timestamp.month(), timestamp.day());
        let summer = month_day >= spec.high_flow_window.0 && month_day < spec.high_flow_window.1;
        let wf = winter_flow.next(&mut rng);
        let sf = summer_flow.next(&mut rng);
        let level = if summer { spec.summer_flow_kgs + sf } else { spec.winter_flow_kgs + wf };
        let m_raw = level + flow_noise.sample(&mut rng);

        let wander = load_wander.next(&mut rng);
        if rng.random::<f64>() < job_change_p {
            job_offset = job_level.sample(&mut rng);
        }
        let q_total = (spec.load_mean_w + wander + job_offset).clamp(spec.load_band_w.0, spec.load_band_w.1)
            * (1.0 + load_noise.sample(&mut rng));
        let q_subloop = spec.load_shares.map(|s| q_total * s);

        let need = (0..SUBLOOPS)
            .map(|k| q_subloop[k] / (spec.flow_fractions[k] * spec.model_c_p * (spec.flow_safety_return_c - t_supply)))
            .fold(0.0, f64::max);
        let m_target = m_raw.max(need);

        let mut split = spec.flow_fractions;
        if spec.flow_fraction_noise_rel > 0.0 {
            for f in &mut split {
                *f *= 1.0 + split_noise.sample(&mut rng);
            }
        }
        let split_sum: f64 = split.iter().sum();
        let flows = split.map(|f| m_target * f / split_sum);
        let m_total: f64 = flows.iter().sum();
        let t_return = std::array::from_fn(|k| {
            t_supply + q_subloop[k] / (flows[k] * spec.dataset_c_p) + return_noise.sample(&mut sensor_rng)
        });

        out.push(OperatingRecord {
            timestamp,
            t_supply,
            m_total,
            q_subloop,
            t_return_measured: Some(t_return),
            subloop_flows: Some(flows),
            t_wetbulb,
            wetbulb_reconstructed: false,
        });
    }
    Ok(out)
}

/// Inserts `count` corrupted copies of clean rows at random positions, one
/// filter rule broken per copy, cycling through the rules.
pub fn plant_violations(clean: &[OperatingRecord], count: usize, seed: u64) -> Vec<RawRecord> {
    let limits = FilterLimits::default();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut raw: Vec<RawRecord> = clean.iter().map(RawRecord::from).collect();
    if clean.is_empty() {
        return raw;
    }
    for k in 0..count {
        let src = rng.random_range(0..raw.len());
        let mut bad = raw[src].clone();
        match k % 5 {
            0 => {
                let mut t = bad.t_return.unwrap_or([bad.t_supply; SUBLOOPS]);
                t[k % SUBLOOPS] = bad.t_supply - 0.1 - rng.random::<f64>();
                bad.t_return = Some(t);
            }
            1 => {
                let scale = (limits.q_total_max * 1.01 + rng.random::<f64>() * 1e6) / bad.total_load().max(1.0);
                bad.q = bad.q.map(|q| q * scale);
            }
            2 => {
                bad.t_supply = limits.t_supply_min - 0.5 - rng.random::<f64>() * 3.0;
                bad.t_return = None;
            }
            3 => {
                let scale = (limits.flow_total_min * 0.9) / bad.total_flow().max(1.0);
                bad.flows = bad.flows.map(|f| f * scale);
            }
            _ => bad.q[k % SUBLOOPS] = f64::NAN,
        }
        let pos = rng.random_range(0..=raw.len());
        raw.insert(pos, bad);
    }
    raw
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;

    fn raw(t_supply: f64, flows: [f64; 3], q: [f64; 3], t_return: [f64; 3]) -> RawRecord {
        RawRecord {
            timestamp: NaiveDate::from_ymd_opt(2023, 3, 1).unwrap().and_hms_opt(12, 0, 0).unwrap(),
            t_supply,
            flows,
            q,
            t_return: Some(t_return),
            t_wetbulb: Some(8.0),
        }
    }

    fn small_spec(days: u32) -> SyntheticYearSpec {
        SyntheticYearSpec { days, ..Default::default() }
    }

    #[test]
    fn filter_examples() {
        let limits = FilterLimits::default();
        let r = raw(20.0, [50.0, 50.0, 100.0], [1e6, 1e6, 3e6], [25.0, 19.9, 30.0]);
        assert_eq!(check_record(&r, &limits), Some(FilterReason::ReturnBelowSupply));

        let r = raw(5.1, [10.0, 10.0, 11.0], [4.0e6, 4.0e6, 6.9e6], [6.0, 6.0, 6.0]);
        assert_eq!(check_record(&r, &limits), None);

        let r = raw(20.0, [50.0, 50.0, 100.0], [5e6, 5e6, 5.1e6], [30.0; 3]);
        assert_eq!(check_record(&r, &limits), Some(FilterReason::LoadAboveMax));
        let r = raw(4.9, [50.0, 50.0, 100.0], [1e6; 3], [30.0; 3]);
        assert_eq!(check_record(&r, &limits), Some(FilterReason::SupplyBelowMin));
        let r = raw(20.0, [10.0, 10.0, 9.0], [1e6; 3], [30.0; 3]);
        assert_eq!(check_record(&r, &limits), Some(FilterReason::FlowBelowMin));
        let r = raw(20.0, [10.0, f64::NAN, 9.0], [1e6; 3], [30.0; 3]);
        assert_eq!(check_record(&r, &limits), Some(FilterReason::NonFinite));
    }

    #[test]
    fn filter_logs_every_drop() {
        let limits = FilterLimits::default();
        let rows = vec![
            raw(20.0, [50.0, 50.0, 100.0], [1e6, 1e6, 3e6], [25.0, 19.9, 30.0]),
            raw(20.0, [50.0, 50.0, 100.0], [1e6, 1e6, 3e6], [25.0, 25.0, 30.0]),
            raw(4.0, [50.0, 50.0, 100.0], [1e6, 1e6, 3e6], [25.0, 25.0, 30.0]),
        ];
        let out = filter_records(&rows, &limits);
        assert_eq!(out.clean.len(), 1);
        assert_eq!(out.clean[0].m_total, 200.0);
        assert_eq!(out.rejection_log(), "RETURN_BELOW_SUPPLY,0\nSUPPLY_BELOW_MIN,2\n");
    }

    #[test]
    fn gpm_examples() {
        assert_eq!(gpm_to_kg_s(0.0), 0.0);
        assert_relative_eq!(gpm_to_kg_s(1000.0), 63.1, max_relative = 1e-14);
        assert_relative_eq!(gpm_to_kg_s(3170.4), 200.05224, max_relative = 1e-12);
    }

    #[test]
    fn flow_fraction_examples() {
        let mut r = to_operating_record(&raw(20.0, [25.0, 25.0, 50.0], [1e6; 3], [30.0; 3]));
        assert_eq!(estimate_flow_fractions(std::slice::from_ref(&r)).unwrap(), [0.25, 0.25, 0.5]);
        let r2 = OperatingRecord { subloop_flows: Some([10.0, 10.0, 20.0]), ..r.clone() };
        assert_eq!(estimate_flow_fractions(&[r.clone(), r2]).unwrap(), [0.25, 0.25, 0.5]);
        r.subloop_flows = Some([0.0; 3]);
        assert!(matches!(estimate_flow_fractions(&[r]), Err(DataError::NoFlowData)));
    }

    #[test]
    fn noiseless_flow_split_round_trips() {
        let spec = SyntheticYearSpec { flow_fraction_noise_rel: 0.0, return_noise_k: 0.0, ..small_spec(10) };
        let year = synthesize_year(&spec).unwrap();
        let f = estimate_flow_fractions(&year).unwrap();
        for (k, fk) in f.iter().enumerate() {
            assert!((fk - spec.flow_fractions[k]).abs() <= 1e-12);
        }
    }

    #[test]
    fn noisy_flow_split_recovered() {
        let year = synthesize_year(&small_spec(60)).unwrap();
        let f = estimate_flow_fractions(&year).unwrap();
        for (est, truth) in f.iter().zip([0.244, 0.258, 0.498]) {
            assert!((est - truth).abs() <= 0.005);
        }
    }

    #[test]
    fn synthetic_records_pass_the_filter() {
        let year = synthesize_year(&small_spec(30)).unwrap();
        assert_eq!(year.len(), 30 * 144);
        let raw: Vec<RawRecord> = year.iter().map(RawRecord::from).collect();
        let out = filter_records(&raw, &FilterLimits::default());
        assert!(out.rejections.is_empty());
        assert_eq!(out.clean, year);
    }

    #[test]
    fn generator_is_deterministic() {
        let a = synthesize_year(&small_spec(3)).unwrap();
        let b = synthesize_year(&small_spec(3)).unwrap();
        assert_eq!(a, b);
        let c = synthesize_year(&SyntheticYearSpec { seed: 7, ..small_spec(3) }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn spec_validation() {
        let e = SyntheticYearSpec { cadence_minutes: 0, ..Default::default() }.validate().unwrap_err();
        assert!(e.to_string().contains("cadence_minutes"));
        assert!(SyntheticYearSpec { load_band_w: (12e6, 7e6), ..Default::default() }.validate().is_err());
        assert!(SyntheticYearSpec { high_flow_window: ((10, 5), (5, 1)), ..Default::default() }.validate().is_err());
        assert!(SyntheticYearSpec { high_flow_window: ((2, 30), (5, 1)), ..Default::default() }.validate().is_err());
        let spec = SyntheticYearSpec::from_toml("seed = 9\ndays = 2\n").unwrap();
        assert_eq!(spec.seed, 9);
        assert_eq!(spec.record_count(), 288);
        assert!(SyntheticYearSpec::from_toml("cadence_minutes = 0").is_err());
        assert!(SyntheticYearSpec::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let year = synthesize_year(&small_spec(1)).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &year).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        let clean = filter_records(&back, &FilterLimits::default());
        assert_eq!(clean.clean, year);
    }

    #[test]
    fn csv_gpm_unknown_columns_and_missing_wetbulb() {
        let text = "timestamp,extra,t_supply_c,flow_1_gpm,flow_2_gpm,flow_3_gpm,q_1_w,q_2_w,q_3_w\n\
                    2023-01-01T00:00:00,zz,20.0,1000,1000,2000,1e6,1e6,2e6\n";
        let rows = read_csv(text.as_bytes()).unwrap();
        assert_relative_eq!(rows[0].flows[0], 63.1, max_relative = 1e-14);
        assert_eq!(rows[0].t_return, None);
        let rec = to_operating_record(&rows[0]);
        assert!(rec.wetbulb_reconstructed);
        assert_eq!(rec.t_wetbulb, 16.0);
    }

    #[test]
    fn csv_errors() {
        let missing = "timestamp,t_supply_c,q_1_w,q_2_w,q_3_w\n";
        assert!(matches!(read_csv(missing.as_bytes()), Err(DataError::MissingColumn(_))));
        let bad = "timestamp,t_supply_c,flow_1_kgs,flow_2_kgs,flow_3_kgs,q_1_w,q_2_w,q_3_w\n\
                   2023-01-01T00:00:00,abc,1,1,1,1,1,1\n";
        let e = read_csv(bad.as_bytes()).unwrap_err();
        assert!(e.to_string().contains("t_supply_c"), "{e}");
    }

    #[test]
    fn planted_violations_are_all_caught() {
        let year = synthesize_year(&small_spec(5)).unwrap();
        let raw = plant_violations(&year, 101, 3);
        assert_eq!(raw.len(), year.len() + 101);
        let out = filter_records(&raw, &FilterLimits::default());
        assert_eq!(out.clean, year);
        assert_eq!(out.rejections.len(), 101);
        assert_eq!(out.count_by_reason().len(), 5);
    }

    fn arb_raw() -> impl Strategy<Value = RawRecord> {
        (
            0.0f64..40.0,
            prop::array::uniform3(0.0f64..200.0),
            prop::array::uniform3(0.0f64..7.0e6),
            prop::option::of(prop::array::uniform3(0.0f64..50.0)),
            prop::option::of(-20.0f64..30.0),
        )
            .prop_map(|(t_supply, flows, q, t_return, t_wetbulb)| RawRecord {
                timestamp: NaiveDate::from_ymd_opt(2023, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap(),
                t_supply,
                flows,
                q,
                t_return,
                t_wetbulb,
            })
    }

    proptest! {
        #[test]
        fn filter_is_idempotent(rows in prop::collection::vec(arb_raw(), 0..60)) {
            let limits = FilterLimits::default();
            let once = filter_records(&rows, &limits);
            let again_raw: Vec<RawRecord> = once.clean.iter().map(RawRecord::from).collect();
            let twice = filter_records(&again_raw, &limits);
            prop_assert!(twice.rejections.is_empty());
            prop_assert_eq!(twice.clean, once.clean);
        }
    }
}
