//! Energy aggregation, savings tables, envelope and ramp statistics, and the
//! file outputs (CSV, aligned text, run manifest).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::physics::{OperatingRecord, PlantParameters};
use crate::stats;
use crate::strategies::{self, ControlSetpoint, StrategyConfig, StrategyError, StrategyLabel, StrategyTrajectory};

pub const DEFAULT_CADENCE_MINUTES: i64 = 10;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("record {index} breaks the {cadence_minutes}-minute cadence")]
    Cadence { index: usize, cadence_minutes: i64 },
    #[error("trajectories have different lengths or timestamps")]
    Misaligned,
    #[error("no pump exponents supplied")]
    NoExponents,
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyTotals {
    pub pump_kwh: f64,
    pub ct_kwh: f64,
    pub total_kwh: f64,
}

/// Checks that every timestamp step is a positive whole number of cadence
/// intervals. Gaps left by filtering are allowed.
pub fn check_cadence(trajectory: &StrategyTrajectory, cadence_minutes: i64) -> Result<(), ReportError> {
    let cadence = Duration::minutes(cadence_minutes);
    for (i, w) in trajectory.steps.windows(2).enumerate() {
        let dt = w[1].timestamp - w[0].timestamp;
        let whole = dt.num_seconds() % cadence.num_seconds() == 0;
        if dt <= Duration::zero() || !whole {
            return Err(ReportError::Cadence { index: i + 1, cadence_minutes });
        }
    }
    Ok(())
}

/// Smallest positive spacing between consecutive records, in minutes.
pub fn infer_cadence_minutes(records: &[OperatingRecord]) -> Option<i64> {
    records
        .windows(2)
        .map(|w| (w[1].timestamp - w[0].timestamp).num_minutes())
        .filter(|&m| m > 0)
        .min()
}

/// Integrates power over the trajectory; each record stands for one
/// cadence interval.
pub fn energy_integrate_with(trajectory: &StrategyTrajectory, cadence_minutes: i64) -> Result<EnergyTotals, ReportError> {
    check_cadence(trajectory, cadence_minutes)?;
    let hours = cadence_minutes as f64 / 60.0;
    let (pump, ct) = trajectory
        .steps
        .iter()
        .fold((0.0, 0.0), |(p, c), s| (p + s.output.p_pump, c + s.output.p_ct));
    let pump_kwh = pump * hours / 1000.0;
    let ct_kwh = ct * hours / 1000.0;
    Ok(EnergyTotals { pump_kwh, ct_kwh, total_kwh: pump_kwh + ct_kwh })
}

pub fn energy_integrate(trajectory: &StrategyTrajectory) -> Result<EnergyTotals, ReportError> {
    energy_integrate_with(trajectory, DEFAULT_CADENCE_MINUTES)
}

fn savings_pct(base: f64, value: f64) -> f64 {
    if base == 0.0 {
        0.0
    } else {
        (base - value) / base * 100.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub label: StrategyLabel,
    pub energy: EnergyTotals,
    pub pump_savings_pct: f64,
    pub ct_savings_pct: f64,
    pub total_savings_pct: f64,
    pub mean_flow_kgs: f64,
    pub mean_t_sp_c: f64,
    pub max_t_return_c: f64,
    pub thermal_violations: usize,
    pub ramp_overrides: usize,
    pub solver_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySummary {
    pub cadence_minutes: i64,
    pub rows: Vec<StrategySummary>,
}

impl EnergySummary {
    pub fn get(&self, label: StrategyLabel) -> Option<&StrategySummary> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn total_kwh(&self, label: StrategyLabel) -> Option<f64> {
        self.get(label).map(|r| r.energy.total_kwh)
    }

    pub fn savings(&self, label: StrategyLabel) -> Option<f64> {
        self.get(label).map(|r| r.total_savings_pct)
    }
}

fn aligned(a: &StrategyTrajectory, b: &StrategyTrajectory) -> bool {
    a.len() == b.len() && a.steps.iter().zip(&b.steps).all(|(x, y)| x.timestamp == y.timestamp)
}

/// Energy table with every strategy measured against the same baseline.
pub fn energy_summary(
    baseline: &StrategyTrajectory,
    strategies: &[&StrategyTrajectory],
    cadence_minutes: i64,
) -> Result<EnergySummary, ReportError> {
    let base = energy_integrate_with(baseline, cadence_minutes)?;
    let mut rows = Vec::with_capacity(strategies.len() + 1);
    for traj in std::iter::once(baseline).chain(strategies.iter().copied()) {
        if !aligned(baseline, traj) {
            return Err(ReportError::Misaligned);
        }
        let e = energy_integrate_with(traj, cadence_minutes)?;
        let n = traj.len().max(1) as f64;
        rows.push(StrategySummary {
            label: traj.label,
            energy: e,
            pump_savings_pct: savings_pct(base.pump_kwh, e.pump_kwh),
            ct_savings_pct: savings_pct(base.ct_kwh, e.ct_kwh),
            total_savings_pct: savings_pct(base.total_kwh, e.total_kwh),
            mean_flow_kgs: traj.steps.iter().map(|s| s.setpoint.m).sum::<f64>() / n,
            mean_t_sp_c: traj.steps.iter().map(|s| s.setpoint.t_sp).sum::<f64>() / n,
            max_t_return_c: traj.steps.iter().map(|s| s.output.max_return()).fold(f64::NEG_INFINITY, f64::max),
            thermal_violations: traj.thermal_violations(),
            ramp_overrides: traj.overrides(),
            solver_fallbacks: traj.fallbacks(),
        });
    }
    Ok(EnergySummary { cadence_minutes, rows })
}

pub const SEASONS: [&str; 4] = ["Winter", "Spring", "Summer", "Autumn"];

/// Meteorological season of a calendar month. December is grouped with
/// January and February.
pub fn season_of(month: u32) -> &'static str {
    match month {
        12 | 1 | 2 => SEASONS[0],
        3..=5 => SEASONS[1],
        6..=8 => SEASONS[2],
        _ => SEASONS[3],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub bucket: String,
    pub label: StrategyLabel,
    pub records: usize,
    pub baseline_kwh: f64,
    pub strategy_kwh: f64,
    pub savings_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Rollup {
    pub monthly: Vec<BucketRow>,
    pub seasonal: Vec<BucketRow>,
}

/// Per-month and per-season energy and savings. Buckets pool all years, so
/// a single-year dataset puts its December with its own January and
/// February.
pub fn seasonal_monthly_rollup(
    baseline: &StrategyTrajectory,
    strategies: &[&StrategyTrajectory],
    cadence_minutes: i64,
) -> Result<Rollup, ReportError> {
    check_cadence(baseline, cadence_minutes)?;
    let hours = cadence_minutes as f64 / 60.0;
    let mut out = Rollup::default();
    for traj in strategies {
        if !aligned(baseline, traj) {
            return Err(ReportError::Misaligned);
        }
        let mut months: BTreeMap<u32, (usize, f64, f64)> = BTreeMap::new();
        let mut seasons: BTreeMap<usize, (usize, f64, f64)> = BTreeMap::new();
        for (b, s) in baseline.steps.iter().zip(&traj.steps) {
            let month = b.timestamp.month();
            let season = SEASONS.iter().position(|&x| x == season_of(month)).expect("known season");
            for slot in [months.entry(month).or_default(), seasons.entry(season).or_default()] {
                slot.0 += 1;
                slot.1 += b.output.p_total * hours / 1000.0;
                slot.2 += s.output.p_total * hours / 1000.0;
            }
        }
        let row = |bucket: String, (records, base, strat): (usize, f64, f64)| BucketRow {
            bucket,
            label: traj.label,
            records,
            baseline_kwh: base,
            strategy_kwh: strat,
            savings_pct: savings_pct(base, strat),
        };
        out.monthly.extend(months.into_iter().map(|(m, v)| row(format!("{m:02}"), v)));
        out.seasonal.extend(seasons.into_iter().map(|(s, v)| row(SEASONS[s].to_string(), v)));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeStats {
    pub mean_m: f64,
    pub mean_t_sp: f64,
    /// 5, 50 and 95 % quantiles.
    pub m_quantiles: [f64; 3],
    pub t_sp_quantiles: [f64; 3],
}

pub fn envelope_stats(trajectory: &StrategyTrajectory) -> Option<EnvelopeStats> {
    let m: Vec<f64> = trajectory.steps.iter().map(|s| s.setpoint.m).collect();
    let t: Vec<f64> = trajectory.steps.iter().map(|s| s.setpoint.t_sp).collect();
    let qs = [0.05, 0.5, 0.95];
    let mq = stats::quantiles(&m, &qs)?;
    let tq = stats::quantiles(&t, &qs)?;
    Some(EnvelopeStats {
        mean_m: stats::mean(&m)?,
        mean_t_sp: stats::mean(&t)?,
        m_quantiles: [mq[0], mq[1], mq[2]],
        t_sp_quantiles: [tq[0], tq[1], tq[2]],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RampCompliance {
    pub max_abs_dm: f64,
    pub max_abs_dt_sp: f64,
    /// Non-override steps whose flow change exceeds the limit.
    pub m_violations: usize,
    /// Non-override steps whose setpoint change exceeds the limit.
    pub t_violations: usize,
    pub override_steps: usize,
    /// Override steps whose flow change exceeds the limit.
    pub override_m_exceedances: usize,
}

const RAMP_SLACK: f64 = 1e-9;

pub fn ramp_compliance(trajectory: &StrategyTrajectory, cfg: &StrategyConfig) -> RampCompliance {
    let mut out = RampCompliance::default();
    for w in trajectory.steps.windows(2) {
        let dm = (w[1].setpoint.m - w[0].setpoint.m).abs();
        let dt = (w[1].setpoint.t_sp - w[0].setpoint.t_sp).abs();
        out.max_abs_dm = out.max_abs_dm.max(dm);
        out.max_abs_dt_sp = out.max_abs_dt_sp.max(dt);
        let m_over = dm > cfg.ramp_m_max + RAMP_SLACK;
        let t_over = dt > cfg.ramp_t_max + RAMP_SLACK;
        if w[1].ramp_override {
            out.override_steps += 1;
            out.override_m_exceedances += m_over as usize;
        } else {
            out.m_violations += m_over as usize;
            out.t_violations += t_over as usize;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationPoint {
    /// Fraction of time the power is at or above this value.
    pub exceedance: f64,
    pub pump_w: f64,
}

/// Pump power sorted from highest to lowest.
pub fn duration_curve(trajectory: &StrategyTrajectory) -> Vec<DurationPoint> {
    let mut p: Vec<f64> = trajectory.steps.iter().map(|s| s.output.p_pump).collect();
    p.sort_by(|a, b| b.total_cmp(a));
    let n = p.len() as f64;
    p.into_iter()
        .enumerate()
        .map(|(k, pump_w)| DurationPoint { exceedance: (k + 1) as f64 / n, pump_w })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub exponent: f64,
    pub pump_power_nom_w: f64,
    pub savings_a: f64,
    pub savings_b: f64,
    pub savings_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityTable {
    pub rows: Vec<SensitivityRow>,
}

impl SensitivityTable {
    /// Savings never decrease with the exponent, for every strategy.
    pub fn monotone(&self) -> bool {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| a.exponent.total_cmp(&b.exponent));
        rows.windows(2).all(|w| {
            w[1].savings_a >= w[0].savings_a && w[1].savings_b >= w[0].savings_b && w[1].savings_c >= w[0].savings_c
        })
    }
}

/// Pump rating for exponent `n` that keeps the baseline pump energy equal
/// to that of `params` on `records`.
pub fn reanchored_pump_power(params: &PlantParameters<f64>, records: &[OperatingRecord], n: f64) -> f64 {
    let shape = |e: f64| records.iter().map(|r| (r.m_total / params.m_nom).powf(e)).sum::<f64>();
    let denom = shape(n);
    if denom > 0.0 {
        params.pump_power_nom * shape(params.pump_exponent) / denom
    } else {
        params.pump_power_nom
    }
}

/// Full baseline/A/B/C run and its energy summary.
pub struct StrategyRun {
    pub baseline: StrategyTrajectory,
    pub a: StrategyTrajectory,
    pub b: StrategyTrajectory,
    pub c: StrategyTrajectory,
    pub summary: EnergySummary,
}

pub fn run_all(
    params: &PlantParameters<f64>,
    cfg: &StrategyConfig,
    records: &[OperatingRecord],
    cadence_minutes: i64,
) -> Result<StrategyRun, ReportError> {
    let baseline = strategies::baseline(params, cfg, records)?;
    let a = strategies::strategy_a(params, cfg, records)?;
    let b = strategies::strategy_b(params, cfg, records)?;
    let c = strategies::strategy_c(params, cfg, records, initial_setpoint(cfg, records))?;
    let summary = energy_summary(&baseline, &[&a, &b, &c], cadence_minutes)?;
    Ok(StrategyRun { baseline, a, b, c, summary })
}

/// The plant's measured state at the first record, clamped into the boxes.
pub fn initial_setpoint(cfg: &StrategyConfig, records: &[OperatingRecord]) -> ControlSetpoint<f64> {
    let first = records.first().map(|r| r.baseline_setpoint()).unwrap_or(ControlSetpoint { m: cfg.m_bounds.0, t_sp: cfg.t_sp_bounds.0 });
    ControlSetpoint {
        m: first.m.clamp(cfg.m_bounds.0, cfg.m_bounds.1),
        t_sp: first.t_sp.clamp(cfg.t_sp_bounds.0, cfg.t_sp_bounds.1),
    }
}

/// Reruns every strategy per pump exponent, re-anchoring the pump rating
/// so the baseline pump energy is the same in every row.
pub fn sensitivity_sweep(
    params: &PlantParameters<f64>,
    cfg: &StrategyConfig,
    records: &[OperatingRecord],
    exponents: &[f64],
    cadence_minutes: i64,
) -> Result<SensitivityTable, ReportError> {
    if exponents.is_empty() {
        return Err(ReportError::NoExponents);
    }
    let mut rows = Vec::with_capacity(exponents.len());
    for &n in exponents {
        let p = PlantParameters {
            pump_exponent: n,
            pump_power_nom: reanchored_pump_power(params, records, n),
            ..*params
        };
        let run = run_all(&p, cfg, records, cadence_minutes)?;
        let s = |l| run.summary.savings(l).expect("strategy present");
        rows.push(SensitivityRow {
            exponent: n,
            pump_power_nom_w: p.pump_power_nom,
            savings_a: s(StrategyLabel::A),
            savings_b: s(StrategyLabel::B),
            savings_c: s(StrategyLabel::C),
        });
    }
    Ok(SensitivityTable { rows })
}

/// A rectangular table rendered either as CSV or as aligned text.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Self { headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, ReportError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))
    }

    pub fn to_text(&self) -> String {
        let cols = self.headers.len();
        let mut width = vec![0; cols];
        for row in std::iter::once(&self.headers).chain(&self.rows) {
            for (w, cell) in width.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |row: &Vec<String>| {
            let cells: Vec<String> = row
                .iter()
                .zip(&width)
                .enumerate()
                .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            cells.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(&self.headers);
        out.push_str(&width.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("  "));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
        }
        out
    }
}

fn f(v: f64, digits: usize) -> String {
    format!("{v:.digits$}")
}

pub fn energy_table(summary: &EnergySummary) -> Table {
    let mut t = Table::new(&[
        "strategy",
        "pump_kwh",
        "ct_kwh",
        "total_kwh",
        "pump_savings_pct",
        "ct_savings_pct",
        "total_savings_pct",
        "mean_flow_kgs",
        "mean_t_sp_c",
        "max_t_return_c",
        "thermal_violations",
        "ramp_overrides",
        "solver_fallbacks",
    ]);
    for r in &summary.rows {
        t.push(vec![
            r.label.name().to_string(),
            f(r.energy.pump_kwh, 1),
            f(r.energy.ct_kwh, 1),
            f(r.energy.total_kwh, 1),
            f(r.pump_savings_pct, 2),
            f(r.ct_savings_pct, 2),
            f(r.total_savings_pct, 2),
            f(r.mean_flow_kgs, 1),
            f(r.mean_t_sp_c, 2),
            f(r.max_t_return_c, 2),
            r.thermal_violations.to_string(),
            r.ramp_overrides.to_string(),
            r.solver_fallbacks.to_string(),
        ]);
    }
    t
}

pub fn bucket_table(rows: &[BucketRow]) -> Table {
    let mut t = Table::new(&["bucket", "strategy", "records", "baseline_kwh", "strategy_kwh", "savings_pct"]);
    for r in rows {
        t.push(vec![
            r.bucket.clone(),
            r.label.name().to_string(),
            r.records.to_string(),
            f(r.baseline_kwh, 1),
            f(r.strategy_kwh, 1),
            f(r.savings_pct, 2),
        ]);
    }
    t
}

pub fn sensitivity_table(table: &SensitivityTable) -> Table {
    let mut t = Table::new(&["pump_exponent", "pump_power_nom_w", "savings_a_pct", "savings_b_pct", "savings_c_pct"]);
    for r in &table.rows {
        t.push(vec![
            f(r.exponent, 2),
            f(r.pump_power_nom_w, 1),
            f(r.savings_a, 2),
            f(r.savings_b, 2),
            f(r.savings_c, 2),
        ]);
    }
    t
}

pub fn envelope_table(trajectories: &[&StrategyTrajectory]) -> Table {
    let mut t = Table::new(&[
        "strategy", "mean_m_kgs", "m_p05", "m_p50", "m_p95", "mean_t_sp_c", "t_sp_p05", "t_sp_p50", "t_sp_p95",
    ]);
    for traj in trajectories {
        if let Some(e) = envelope_stats(traj) {
            t.push(vec![
                traj.label.name().to_string(),
                f(e.mean_m, 2),
                f(e.m_quantiles[0], 2),
                f(e.m_quantiles[1], 2),
                f(e.m_quantiles[2], 2),
                f(e.mean_t_sp, 3),
                f(e.t_sp_quantiles[0], 3),
                f(e.t_sp_quantiles[1], 3),
                f(e.t_sp_quantiles[2], 3),
            ]);
        }
    }
    t
}

pub fn ramp_table(trajectories: &[&StrategyTrajectory], cfg: &StrategyConfig) -> Table {
    let mut t = Table::new(&[
        "strategy",
        "max_abs_dm_kgs",
        "max_abs_dt_sp_k",
        "m_violations",
        "t_violations",
        "override_steps",
        "override_m_exceedances",
    ]);
    for traj in trajectories {
        let r = ramp_compliance(traj, cfg);
        t.push(vec![
            traj.label.name().to_string(),
            f(r.max_abs_dm, 3),
            f(r.max_abs_dt_sp, 4),
            r.m_violations.to_string(),
            r.t_violations.to_string(),
            r.override_steps.to_string(),
            r.override_m_exceedances.to_string(),
        ]);
    }
    t
}

/// Per-step trajectory dump; also serves as the joint (m, t_sp) sample.
pub fn trajectory_table(trajectory: &StrategyTrajectory) -> Table {
    let mut t = Table::new(&[
        "timestamp",
        "m_kgs",
        "t_sp_c",
        "t_return_1_c",
        "t_return_2_c",
        "t_return_3_c",
        "p_pump_w",
        "p_ct_w",
        "p_total_w",
        "thermal_violation",
        "ramp_override",
        "solver_fallback",
    ]);
    for s in &trajectory.steps {
        let o = &s.output;
        t.push(vec![
            s.timestamp.format("%Y-%m-%dT%H:%M:%S").to_string(),
            s.setpoint.m.to_string(),
            s.setpoint.t_sp.to_string(),
            o.t_return[0].to_string(),
            o.t_return[1].to_string(),
            o.t_return[2].to_string(),
            o.p_pump.to_string(),
            o.p_ct.to_string(),
            o.p_total.to_string(),
            (s.thermal_violation as u8).to_string(),
            (s.ramp_override as u8).to_string(),
            (s.solver_fallback as u8).to_string(),
        ]);
    }
    t
}

pub fn duration_table(trajectories: &[&StrategyTrajectory]) -> Table {
    let mut headers = vec!["exceedance".to_string()];
    headers.extend(trajectories.iter().map(|t| format!("{}_pump_w", t.label.name())));
    let curves: Vec<Vec<DurationPoint>> = trajectories.iter().map(|t| duration_curve(t)).collect();
    let n = curves.iter().map(Vec::len).min().unwrap_or(0);
    let mut t = Table { headers, rows: Vec::with_capacity(n) };
    for k in 0..n {
        let mut row = vec![curves[0][k].exceedance.to_string()];
        row.extend(curves.iter().map(|c| f(c[k].pump_w, 3)));
        t.push(row);
    }
    t
}

/// Month-by-strategy savings matrix.
pub fn monthly_heatmap_table(rollup: &Rollup) -> Table {
    let mut labels: Vec<StrategyLabel> = rollup.monthly.iter().map(|r| r.label).collect();
    labels.dedup();
    let mut headers = vec!["month".to_string()];
    headers.extend(labels.iter().map(|l| format!("{}_savings_pct", l.name())));
    let mut months: Vec<&str> = rollup.monthly.iter().map(|r| r.bucket.as_str()).collect();
    months.sort_unstable();
    months.dedup();
    let mut t = Table { headers, rows: Vec::new() };
    for m in months {
        let mut row = vec![m.to_string()];
        for l in &labels {
            let v = rollup.monthly.iter().find(|r| r.bucket == m && r.label == *l);
            row.push(v.map(|r| f(r.savings_pct, 2)).unwrap_or_default());
        }
        t.push(row);
    }
    t
}

/// Per-step flow and setpoint changes.
pub fn ramp_diff_table(trajectories: &[&StrategyTrajectory]) -> Table {
    let mut headers = vec!["timestamp".to_string()];
    for t in trajectories {
        headers.push(format!("{}_dm_kgs", t.label.name()));
        headers.push(format!("{}_dt_sp_k", t.label.name()));
    }
    let n = trajectories.iter().map(|t| t.len()).min().unwrap_or(0);
    let mut table = Table { headers, rows: Vec::new() };
    for k in 1..n {
        let mut row = vec![trajectories[0].steps[k].timestamp.format("%Y-%m-%dT%H:%M:%S").to_string()];
        for t in trajectories {
            row.push(f(t.steps[k].setpoint.m - t.steps[k - 1].setpoint.m, 4));
            row.push(f(t.steps[k].setpoint.t_sp - t.steps[k - 1].setpoint.t_sp, 5));
        }
        table.push(row);
    }
    table
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ReportError> {
    let io = |source| ReportError::Io { path: path.to_path_buf(), source };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result.map_err(io)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

/// Collects output files for one run directory and records their digests.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<FileDigest>,
}

impl OutputDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into(), written: Vec::new() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, ReportError> {
        let path = self.root.join(name);
        write_atomic(&path, bytes)?;
        self.written.push(FileDigest { path: name.to_string(), sha256: sha256_hex(bytes) });
        Ok(path)
    }

    /// Writes `<stem>.csv` and `<stem>.txt`.
    pub fn write_table(&mut self, stem: &str, table: &Table) -> Result<(), ReportError> {
        self.write(&format!("{stem}.csv"), &table.to_csv()?)?;
        self.write(&format!("{stem}.txt"), table.to_text().as_bytes())?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), ReportError> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)?;
        Ok(())
    }

    /// Writes `manifest.json` listing every file written so far.
    pub fn finish(self, mut manifest: Manifest) -> Result<PathBuf, ReportError> {
        manifest.outputs = self.written;
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        let path = self.root.join("manifest.json");
        write_atomic(&path, &bytes)?;
        Ok(path)
    }
}
