//! Calibration metrics and the model-versus-measurement harness.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics::{return_temperature, OperatingRecord, PhysicsError, PlantParameters, SUBLOOPS};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidateError {
    #[error("series lengths differ ({measured} measured vs {predicted} predicted)")]
    LengthMismatch { measured: usize, predicted: usize },
    #[error("need more samples than parameters (n = {n}, p = {p})")]
    TooFewSamples { n: usize, p: usize },
    #[error("measured mean is zero; normalized metric undefined")]
    ZeroMean,
    #[error("record {index} has no measured return temperatures")]
    MissingMeasuredReturns { index: usize },
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}

fn check<T: Scalar>(measured: &[T], predicted: &[T], p: usize) -> Result<(T, T), ValidateError> {
    if measured.len() != predicted.len() {
        return Err(ValidateError::LengthMismatch { measured: measured.len(), predicted: predicted.len() });
    }
    let n = measured.len();
    if n <= p {
        return Err(ValidateError::TooFewSamples { n, p });
    }
    let mean = measured.iter().fold(T::zero(), |acc, &y| acc + y) / T::from_usize(n).expect("count fits");
    let dof = T::from_usize(n - p).expect("count fits");
    Ok((mean, dof))
}

fn sse<T: Scalar>(measured: &[T], predicted: &[T]) -> T {
    measured.iter().zip(predicted).fold(T::zero(), |acc, (&y, &yh)| acc + (y - yh) * (y - yh))
}

/// Coefficient of variation of the RMSE, in percent, with `n - p` degrees
/// of freedom.
pub fn cv_rmse<T: Scalar>(measured: &[T], predicted: &[T], p: usize) -> Result<T, ValidateError> {
    let (mean, dof) = check(measured, predicted, p)?;
    if mean == T::zero() {
        return Err(ValidateError::ZeroMean);
    }
    Ok((sse(measured, predicted) / dof).sqrt() / mean.abs() * T::lit(100.0))
}

/// Normalized mean bias error in percent. Positive when the model
/// under-predicts (`y - ŷ` summed).
pub fn nmbe<T: Scalar>(measured: &[T], predicted: &[T], p: usize) -> Result<T, ValidateError> {
    let (mean, dof) = check(measured, predicted, p)?;
    if mean == T::zero() {
        return Err(ValidateError::ZeroMean);
    }
    let bias = measured.iter().zip(predicted).fold(T::zero(), |acc, (&y, &yh)| acc + (y - yh));
    Ok(bias / (dof * mean) * T::lit(100.0))
}

/// Plain root-mean-square error over all `n` samples.
pub fn rmse<T: Scalar>(measured: &[T], predicted: &[T]) -> Result<T, ValidateError> {
    check(measured, predicted, 0)?;
    let n = T::from_usize(measured.len()).expect("count fits");
    Ok((sse(measured, predicted) / n).sqrt())
}

/// `1 - SSE/SST`. A constant measured series gives 1 for a perfect fit and
/// negative infinity otherwise.
pub fn r_squared<T: Scalar>(measured: &[T], predicted: &[T]) -> Result<T, ValidateError> {
    let (mean, _) = check(measured, predicted, 0)?;
    let sse = sse(measured, predicted);
    let sst = measured.iter().fold(T::zero(), |acc, &y| acc + (y - mean) * (y - mean));
    if sst == T::zero() {
        return Ok(if sse == T::zero() { T::one() } else { T::neg_infinity() });
    }
    Ok(T::one() - sse / sst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubloopMetrics {
    pub cv_rmse: f64,
    pub nmbe: f64,
    pub rmse: f64,
    pub r_squared: f64,
}

impl SubloopMetrics {
    pub fn compute(measured: &[f64], predicted: &[f64], p: usize) -> Result<Self, ValidateError> {
        Ok(Self {
            cv_rmse: cv_rmse(measured, predicted, p)?,
            nmbe: nmbe(measured, predicted, p)?,
            rmse: rmse(measured, predicted)?,
            r_squared: r_squared(measured, predicted)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub cv_rmse_max: f64,
    pub nmbe_abs_max: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { cv_rmse_max: 5.0, nmbe_abs_max: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub subloops: [SubloopMetrics; SUBLOOPS],
    pub n: usize,
    pub p: usize,
    pub thresholds: Thresholds,
}

impl ValidationReport {
    pub fn subloop_passes(&self, i: usize) -> bool {
        let m = &self.subloops[i];
        m.cv_rmse <= self.thresholds.cv_rmse_max && m.nmbe.abs() <= self.thresholds.nmbe_abs_max
    }

    pub fn passes(&self) -> bool {
        (0..SUBLOOPS).all(|i| self.subloop_passes(i))
    }
}

/// Per-subloop returns predicted from the measured supply temperature,
/// flow and loads.
pub fn predict_returns(
    params: &PlantParameters<f64>,
    records: &[OperatingRecord],
) -> Result<[Vec<f64>; SUBLOOPS], ValidateError> {
    let mut out: [Vec<f64>; SUBLOOPS] = std::array::from_fn(|_| Vec::with_capacity(records.len()));
    for r in records {
        for (i, series) in out.iter_mut().enumerate() {
            series.push(return_temperature(params, r.t_supply, r.m_total, r.q_subloop[i], i)?);
        }
    }
    Ok(out)
}

pub fn measured_returns(records: &[OperatingRecord]) -> Result<[Vec<f64>; SUBLOOPS], ValidateError> {
    let mut out: [Vec<f64>; SUBLOOPS] = std::array::from_fn(|_| Vec::with_capacity(records.len()));
    for (index, r) in records.iter().enumerate() {
        let t = r.t_return_measured.ok_or(ValidateError::MissingMeasuredReturns { index })?;
        for (series, v) in out.iter_mut().zip(t) {
            series.push(v);
        }
    }
    Ok(out)
}

pub fn validate_twin(
    params: &PlantParameters<f64>,
    records: &[OperatingRecord],
    p: usize,
    thresholds: Thresholds,
) -> Result<ValidationReport, ValidateError> {
    let measured = measured_returns(records)?;
    let predicted = predict_returns(params, records)?;
    let mut subloops = [SubloopMetrics { cv_rmse: 0.0, nmbe: 0.0, rmse: 0.0, r_squared: 0.0 }; SUBLOOPS];
    for i in 0..SUBLOOPS {
        subloops[i] = SubloopMetrics::compute(&measured[i], &predicted[i], p)?;
    }
    Ok(ValidationReport { subloops, n: records.len(), p, thresholds })
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn exact_arithmetic() {
        let y = [10.0, 10.0, 10.0, 10.0];
        let yh = [11.0, 9.0, 11.0, 9.0];
        assert_abs_diff_eq!(cv_rmse(&y, &yh, 1).unwrap(), 0.1 * (4.0f64 / 3.0).sqrt() * 100.0, epsilon = 1e-10);
        assert_abs_diff_eq!(cv_rmse(&y, &yh, 1).unwrap(), 11.547005383792516, epsilon = 1e-10);
        assert_eq!(cv_rmse(&y, &y, 1).unwrap(), 0.0);
        assert_eq!(nmbe(&y, &y, 1).unwrap(), 0.0);

        let y: Vec<f64> = (0..101).map(|i| 25.0 + (i as f64 - 50.0) * 0.01).collect();
        let yh: Vec<f64> = y.iter().map(|v| v - 0.5).collect();
        assert_abs_diff_eq!(nmbe(&y, &yh, 1).unwrap(), 0.5 * 101.0 / (100.0 * 25.0) * 100.0, epsilon = 1e-10);
        assert_abs_diff_eq!(nmbe(&y, &yh, 1).unwrap(), 2.02, epsilon = 1e-10);
        assert_abs_diff_eq!(rmse(&y, &yh).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn error_paths() {
        assert!(matches!(cv_rmse(&[1.0, 2.0], &[1.0], 1), Err(ValidateError::LengthMismatch { .. })));
        assert!(matches!(cv_rmse(&[1.0], &[1.0], 1), Err(ValidateError::TooFewSamples { .. })));
        assert!(matches!(nmbe(&[1.0, -1.0], &[0.0, 0.0], 1), Err(ValidateError::ZeroMean)));
        assert_eq!(r_squared(&[2.0, 2.0], &[2.0, 2.0]).unwrap(), 1.0);
        assert_eq!(r_squared(&[2.0, 2.0], &[2.0, 3.0]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn generic_over_f32() {
        let v = cv_rmse(&[10.0f32, 10.0, 10.0, 10.0], &[11.0, 9.0, 11.0, 9.0], 1).unwrap();
        assert!((v - 11.547).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn cv_rmse_is_scale_free(
            pairs in prop::collection::vec((1.0f64..50.0, 1.0f64..50.0), 3..40),
            alpha in 0.01f64..100.0,
        ) {
            let (y, yh): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let ys: Vec<f64> = y.iter().map(|v| v * alpha).collect();
            let yhs: Vec<f64> = yh.iter().map(|v| v * alpha).collect();
            let a = cv_rmse(&y, &yh, 1).unwrap();
            let b = cv_rmse(&ys, &yhs, 1).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300) + 1e-12);
        }

        #[test]
        fn under_prediction_gives_positive_nmbe(
            y in prop::collection::vec(1.0f64..50.0, 3..40),
            d in prop::collection::vec(0.001f64..5.0, 40),
        ) {
            let yh: Vec<f64> = y.iter().zip(&d).map(|(v, e)| v - e).collect();
            prop_assert!(nmbe(&y, &yh, 1).unwrap() > 0.0);
        }

        #[test]
        fn r_squared_is_one_only_for_exact_fit(
            y in prop::collection::vec(-50.0f64..50.0, 3..40),
            k in 0usize..40,
            e in 0.001f64..5.0,
        ) {
            prop_assert_eq!(r_squared(&y, &y).unwrap(), 1.0);
            let mut yh = y.clone();
            let idx = k % yh.len();
            yh[idx] += e;
            let r2 = r_squared(&y, &yh).unwrap();
            prop_assert!(r2 < 1.0);
        }
    }
}
