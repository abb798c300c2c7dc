//! Steady-state plant surrogate.
//!
//! Three parallel HTW subloops share one variable-speed pump train and a
//! bank of mechanical-draft cooling towers. Every relation here is a closed
//! form; the optimizers evaluate exactly the same functions that the
//! validation harness uses.
//!
//! Absolute temperatures are carried in °C. Every relation consumes them
//! only through differences, so no Kelvin offset is ever applied.

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::strategies::ControlSetpoint;

/// Number of active HTW subloops.
pub const SUBLOOPS: usize = 3;

/// Exponent of the Dittus-Boelter flow dependence of the UA product.
pub const UA_FLOW_EXPONENT: f64 = 0.8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("mass flow must be positive, got {0} kg/s")]
    NonPositiveFlow(f64),
    #[error("heat load must be non-negative, got {0} W")]
    NegativeLoad(f64),
    #[error("approach must be positive, got {0} K")]
    NonPositiveApproach(f64),
    #[error("subloop index {0} out of range (0..3)")]
    SubloopIndex(usize),
    #[error("invalid plant parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("calibration needs at least one record")]
    EmptyCalibrationSet,
}

/// Calibrated physical constants of the plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParameters<T> {
    /// Specific heat used by the energy balance, J/(kg K).
    pub c_p: T,
    /// Share of total HTW flow through each subloop.
    pub flow_fractions: [T; SUBLOOPS],
    pub eps_cdu_htw: T,
    pub eps_htw_ctw: T,
    /// Overall UA at `m_nom`, W/K.
    pub ua_nom: T,
    /// Reference mass flow, kg/s.
    pub m_nom: T,
    /// Pump power at `m_nom`, W.
    pub pump_power_nom: T,
    pub pump_exponent: T,
    /// Fan power at the design rejection rate and nominal approach, W.
    pub ct_power_nom: T,
    /// Design heat-rejection rate, W.
    pub q_rej_nom: T,
    /// Nominal tower approach, K.
    pub approach_nom: T,
    /// Fan power scaling exponent on the approach ratio.
    pub gamma: T,
    /// Temperature drop across the HTW-to-CTW exchanger, K.
    pub hx_approach: T,
    /// Smallest approach the tower model will accept, K.
    pub approach_floor: T,
}

/// Nominals obtained by [`calibrate_nominals`] on the default synthetic year.
pub mod calibrated {
    pub const PUMP_POWER_NOM_W: f64 = 15_626.5;
    pub const CT_POWER_NOM_W: f64 = 412_521.8;
    pub const Q_REJ_NOM_W: f64 = 9_480_869.9;
}

impl<T: Scalar> Default for PlantParameters<T> {
    fn default() -> Self {
        Self {
            c_p: T::lit(3500.0),
            flow_fractions: [T::lit(0.244), T::lit(0.258), T::lit(0.498)],
            eps_cdu_htw: T::lit(0.65),
            eps_htw_ctw: T::lit(0.75),
            ua_nom: T::lit(2.252e6),
            m_nom: T::lit(190.0),
            pump_power_nom: T::lit(calibrated::PUMP_POWER_NOM_W),
            pump_exponent: T::lit(3.0),
            ct_power_nom: T::lit(calibrated::CT_POWER_NOM_W),
            q_rej_nom: T::lit(calibrated::Q_REJ_NOM_W),
            approach_nom: T::lit(4.0),
            gamma: T::lit(1.0),
            hx_approach: T::lit(2.0),
            approach_floor: T::lit(0.5),
        }
    }
}

fn invalid(name: &'static str, reason: impl Into<String>) -> PhysicsError {
    PhysicsError::InvalidParameter { name, reason: reason.into() }
}

impl<T: Scalar> PlantParameters<T> {
    /// Alternative flow split quoted alongside the load shares. The quoted
    /// values sum to 1.001 and are renormalized here.
    pub fn alternate_flow_fractions() -> [T; SUBLOOPS] {
        let raw = [0.246, 0.260, 0.495];
        let sum: f64 = raw.iter().sum();
        raw.map(|f| T::lit(f / sum))
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        let sum = self.flow_fractions.iter().fold(T::zero(), |acc, &f| acc + f);
        if (sum - T::one()).abs() > T::lit(1e-9).max(T::epsilon() * T::lit(8.0)) {
            return Err(invalid("flow_fractions", format!("must sum to 1, got {sum}")));
        }
        if self.flow_fractions.iter().any(|&f| !(f > T::zero() && f < T::one())) {
            return Err(invalid("flow_fractions", "each fraction must lie in (0, 1)"));
        }
        for (name, eps) in [("eps_cdu_htw", self.eps_cdu_htw), ("eps_htw_ctw", self.eps_htw_ctw)] {
            if !(eps > T::zero() && eps <= T::one()) {
                return Err(invalid(name, format!("effectiveness must lie in (0, 1], got {eps}")));
            }
        }
        let positive = [
            ("c_p", self.c_p),
            ("m_nom", self.m_nom),
            ("ua_nom", self.ua_nom),
            ("pump_power_nom", self.pump_power_nom),
            ("ct_power_nom", self.ct_power_nom),
            ("q_rej_nom", self.q_rej_nom),
            ("approach_nom", self.approach_nom),
            ("approach_floor", self.approach_floor),
        ];
        for (name, value) in positive {
            if !(value > T::zero()) || !value.is_finite() {
                return Err(invalid(name, format!("must be positive and finite, got {value}")));
            }
        }
        if !(self.pump_exponent >= T::lit(1.5) && self.pump_exponent <= T::lit(3.5)) {
            return Err(invalid("pump_exponent", format!("must lie in [1.5, 3.5], got {}", self.pump_exponent)));
        }
        if !self.gamma.is_finite() || self.gamma < T::zero() {
            return Err(invalid("gamma", "must be finite and non-negative"));
        }
        if !self.hx_approach.is_finite() {
            return Err(invalid("hx_approach", "must be finite"));
        }
        Ok(())
    }
}

/// Per-subloop energy balance: supply temperature plus the load carried by
/// that branch's share of the flow.
pub fn return_temperature<T: Scalar>(
    params: &PlantParameters<T>,
    t_supply: T,
    m_total: T,
    q: T,
    subloop: usize,
) -> Result<T, PhysicsError> {
    let fraction = *params.flow_fractions.get(subloop).ok_or(PhysicsError::SubloopIndex(subloop))?;
    if !(m_total > T::zero()) {
        return Err(PhysicsError::NonPositiveFlow(m_total.to_f64_lossy()));
    }
    if q < T::zero() {
        return Err(PhysicsError::NegativeLoad(q.to_f64_lossy()));
    }
    Ok(t_supply + q / (fraction * m_total * params.c_p))
}

/// Heat duty of a constant-effectiveness exchanger. Sign follows the inlet
/// temperature difference.
pub fn hx_heat_transfer<T: Scalar>(
    eps: T,
    c_min: T,
    t_hot_in: T,
    t_cold_in: T,
) -> Result<T, PhysicsError> {
    if !(eps > T::zero() && eps <= T::one()) {
        return Err(invalid("eps", format!("effectiveness must lie in (0, 1], got {eps}")));
    }
    if !(c_min > T::zero()) {
        return Err(invalid("c_min", format!("capacity rate must be positive, got {c_min}")));
    }
    Ok(eps * c_min * (t_hot_in - t_cold_in))
}

/// UA product at flow `m`, scaled with the 0.8 power of the flow ratio.
pub fn ua_scaled<T: Scalar>(params: &PlantParameters<T>, m: T) -> Result<T, PhysicsError> {
    if !(m > T::zero()) {
        return Err(PhysicsError::NonPositiveFlow(m.to_f64_lossy()));
    }
    Ok(params.ua_nom * (m / params.m_nom).powf(T::lit(UA_FLOW_EXPONENT)))
}

/// Affinity-law pump power. Negative flow is treated as zero.
pub fn pump_power<T: Scalar>(params: &PlantParameters<T>, m: T) -> T {
    let m = m.max(T::zero());
    params.pump_power_nom * (m / params.m_nom).powf(params.pump_exponent)
}

pub fn ct_outlet_temperature<T: Scalar>(params: &PlantParameters<T>, t_wetbulb: T) -> T {
    t_wetbulb + params.approach_nom
}

/// Operating approach of the towers for a given HTW supply setpoint.
///
/// The CTW supply needed to hold `t_sp` sits `hx_approach` below it, so the
/// tower approach is what remains above wet-bulb, floored at `approach_floor`.
pub fn effective_approach<T: Scalar>(params: &PlantParameters<T>, t_sp: T, t_wetbulb: T) -> T {
    (t_sp - params.hx_approach - t_wetbulb).max(params.approach_floor)
}

pub fn ct_fan_power<T: Scalar>(
    params: &PlantParameters<T>,
    q_rejected: T,
    approach: T,
) -> Result<T, PhysicsError> {
    if !(approach > T::zero()) {
        return Err(PhysicsError::NonPositiveApproach(approach.to_f64_lossy()));
    }
    if q_rejected < T::zero() {
        return Err(PhysicsError::NegativeLoad(q_rejected.to_f64_lossy()));
    }
    Ok(params.ct_power_nom
        * (q_rejected / params.q_rej_nom)
        * (params.approach_nom / approach).powf(params.gamma))
}

/// Model response at one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceOutput<T> {
    pub t_return: [T; SUBLOOPS],
    pub p_pump: T,
    pub p_ct: T,
    pub p_total: T,
    pub q_rejected: T,
    pub approach_effective: T,
}

impl<T: Scalar> PerformanceOutput<T> {
    pub fn max_return(&self) -> T {
        self.t_return.iter().fold(T::neg_infinity(), |acc, &t| acc.max(t))
    }
}

/// Composes the sub-models for one operating point given explicit loads.
pub fn evaluate<T: Scalar>(
    params: &PlantParameters<T>,
    loads: &[T; SUBLOOPS],
    t_wetbulb: T,
    m: T,
    t_sp: T,
) -> Result<PerformanceOutput<T>, PhysicsError> {
    let mut t_return = [T::zero(); SUBLOOPS];
    for (i, slot) in t_return.iter_mut().enumerate() {
        *slot = return_temperature(params, t_sp, m, loads[i], i)?;
    }
    let p_pump = pump_power(params, m);
    let q_it = loads.iter().fold(T::zero(), |acc, &q| acc + q);
    let q_rejected = q_it + p_pump;
    let approach_effective = effective_approach(params, t_sp, t_wetbulb);
    let p_ct = ct_fan_power(params, q_rejected, approach_effective)?;
    Ok(PerformanceOutput {
        t_return,
        p_pump,
        p_ct,
        p_total: p_pump + p_ct,
        q_rejected,
        approach_effective,
    })
}

/// One boundary-condition sample at the plant's 10-minute cadence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingRecord {
    pub timestamp: NaiveDateTime,
    /// Measured HTW supply temperature, °C.
    pub t_supply: f64,
    /// Measured total HTW flow, kg/s.
    pub m_total: f64,
    /// Subloop heat loads, W.
    pub q_subloop: [f64; SUBLOOPS],
    /// Measured subloop returns, °C, when available.
    pub t_return_measured: Option<[f64; SUBLOOPS]>,
    /// Measured subloop flows, kg/s, when available.
    pub subloop_flows: Option<[f64; SUBLOOPS]>,
    /// Ambient wet-bulb temperature, °C.
    pub t_wetbulb: f64,
    /// Set when the wet-bulb value was reconstructed from the supply temperature.
    #[serde(default)]
    pub wetbulb_reconstructed: bool,
}

impl OperatingRecord {
    pub fn total_load(&self) -> f64 {
        self.q_subloop.iter().sum()
    }

    /// The measured operating point, used as the baseline control.
    pub fn baseline_setpoint(&self) -> ControlSetpoint<f64> {
        ControlSetpoint { m: self.m_total, t_sp: self.t_supply }
    }
}

pub fn evaluate_plant(
    params: &PlantParameters<f64>,
    record: &OperatingRecord,
    setpoint: &ControlSetpoint<f64>,
) -> Result<PerformanceOutput<f64>, PhysicsError> {
    evaluate(params, &record.q_subloop, record.t_wetbulb, setpoint.m, setpoint.t_sp)
}

/// Mean baseline powers that the calibration reproduces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationTargets {
    pub mean_pump_power_w: f64,
    pub mean_ct_power_w: f64,
}

impl Default for CalibrationTargets {
    /// Annual baseline split of 488,857 kWh pump and 1,324,797 kWh fan energy
    /// over 8,760 h.
    fn default() -> Self {
        Self {
            mean_pump_power_w: 488_857.0 / 8_760.0 * 1_000.0,
            mean_ct_power_w: 1_324_797.0 / 8_760.0 * 1_000.0,
        }
    }
}

/// Fits `pump_power_nom`, `q_rej_nom` and `ct_power_nom` so that the measured
/// operating points reproduce the target mean pump and fan powers.
///
/// `q_rej_nom` is set to the mean baseline rejection rate; only the ratio
/// `ct_power_nom / q_rej_nom` affects fan power.
pub fn calibrate_nominals(
    params: &PlantParameters<f64>,
    records: &[OperatingRecord],
    targets: CalibrationTargets,
) -> Result<PlantParameters<f64>, PhysicsError> {
    if records.is_empty() {
        return Err(PhysicsError::EmptyCalibrationSet);
    }
    let n = records.len() as f64;
    let mut out = *params;

    let mean_shape = records
        .iter()
        .map(|r| (r.m_total / params.m_nom).powf(params.pump_exponent))
        .sum::<f64>()
        / n;
    if !(mean_shape > 0.0) {
        return Err(invalid("pump_power_nom", "baseline flows give zero pump power"));
    }
    out.pump_power_nom = targets.mean_pump_power_w / mean_shape;

    let q_rej: Vec<f64> = records.iter().map(|r| r.total_load() + pump_power(&out, r.m_total)).collect();
    out.q_rej_nom = q_rej.iter().sum::<f64>() / n;
    if !(out.q_rej_nom > 0.0) {
        return Err(invalid("q_rej_nom", "baseline records carry no heat"));
    }

    let mean_fan_shape = records
        .iter()
        .zip(&q_rej)
        .map(|(r, &q)| {
            let approach = effective_approach(&out, r.t_supply, r.t_wetbulb);
            (q / out.q_rej_nom) * (out.approach_nom / approach).powf(out.gamma)
        })
        .sum::<f64>()
        / n;
    out.ct_power_nom = targets.mean_ct_power_w / mean_fan_shape;
    out.validate()?;
    Ok(out)
}
