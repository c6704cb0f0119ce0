//! Post-hoc detection scores computed from classifier outputs.
//!
//! Every score is "higher means more acceptable": an example is accepted when
//! its score is strictly above the threshold. All kernels subtract the row
//! maximum before exponentiating, so large logits never overflow.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classes::{allowed_columns, ClassMask, MaskError};
use crate::matrix::Matrix;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Msp,
    Mls,
    Energy,
    Gradnorm,
    Vim,
    OdinT,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::Msp, Method::Mls, Method::Energy, Method::Gradnorm, Method::Vim, Method::OdinT];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Msp => "msp",
            Method::Mls => "mls",
            Method::Energy => "energy",
            Method::Gradnorm => "gradnorm",
            Method::Vim => "vim",
            Method::OdinT => "odin_t",
        }
    }

    pub fn needs_features(self) -> bool {
        matches!(self, Method::Gradnorm | Method::Vim)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method {s:?} (expected one of msp, mls, energy, gradnorm, vim, odin_t)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodParams {
    pub energy_temperature: f64,
    pub odin_temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_mask: Option<ClassMask>,
}

impl Default for MethodParams {
    fn default() -> Self {
        Self { energy_temperature: 1.0, odin_temperature: 1000.0, class_mask: None }
    }
}

/// Parameters a score was computed with, echoed into reports.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub principal_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masked_classes: Option<usize>,
}

/// Per-example scores of one method over one partition.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector<T> {
    pub method: Method,
    pub values: Vec<T>,
    pub params: ScoreParams,
}

impl<T> ScoreVector<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoringError {
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("scoring needs at least 2 classes after masking, got {0}")]
    TooFewClasses(usize),
    #[error("non-finite input at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("temperature must be positive and finite, got {0}")]
    BadTemperature(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Allowed columns with the C ≥ 2 precondition and a finiteness scan.
fn prepare<T: Real>(logits: &Matrix<T>, mask: Option<&ClassMask>) -> Result<Vec<usize>, ScoringError> {
    let cols = allowed_columns(mask, logits.cols())?;
    if cols.len() < 2 {
        return Err(ScoringError::TooFewClasses(cols.len()));
    }
    check_finite(logits, &cols)?;
    Ok(cols)
}

fn check_finite<T: Real>(m: &Matrix<T>, cols: &[usize]) -> Result<(), ScoringError> {
    for (row, values) in m.iter_rows().enumerate() {
        if let Some(&col) = cols.iter().find(|&&c| !values[c].is_finite()) {
            return Err(ScoringError::NonFinite { row, col });
        }
    }
    Ok(())
}

fn check_temperature(t: f64) -> Result<(), ScoringError> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(ScoringError::BadTemperature(t))
    }
}

#[inline]
pub(crate) fn masked_max<T: Real>(row: &[T], cols: &[usize]) -> T {
    cols.iter().map(|&c| row[c]).fold(T::neg_infinity(), T::max)
}

/// `Σ_c exp((x_c − max)/t)` over the allowed columns; always in `[1, |cols|]`.
#[inline]
fn shifted_exp_sum<T: Real>(row: &[T], cols: &[usize], max: T, t: T) -> T {
    cols.iter().map(|&c| ((row[c] - max) / t).exp()).sum()
}

/// `t · log Σ_c exp(x_c / t)` via the max-shift identity.
#[inline]
pub fn log_sum_exp<T: Real>(row: &[T], cols: &[usize], t: T) -> T {
    let max = masked_max(row, cols);
    max + t * shifted_exp_sum(row, cols, max, t).ln()
}

fn per_row<T: Real>(logits: &Matrix<T>, f: impl Fn(&[T]) -> T) -> Vec<T> {
    logits.iter_rows().map(f).collect()
}

fn masked_count(mask: Option<&ClassMask>) -> Option<usize> {
    mask.map(ClassMask::len)
}

/// Maximum softmax probability.
pub fn score_msp<T: Real>(logits: &Matrix<T>, mask: Option<&ClassMask>) -> Result<ScoreVector<T>, ScoringError> {
    let cols = prepare(logits, mask)?;
    let values = per_row(logits, |row| {
        let max = masked_max(row, &cols);
        shifted_exp_sum(row, &cols, max, T::one()).recip()
    });
    Ok(ScoreVector {
        method: Method::Msp,
        values,
        params: ScoreParams { masked_classes: masked_count(mask), ..Default::default() },
    })
}

/// Maximum logit.
pub fn score_mls<T: Real>(logits: &Matrix<T>, mask: Option<&ClassMask>) -> Result<ScoreVector<T>, ScoringError> {
    let cols = prepare(logits, mask)?;
    let values = per_row(logits, |row| masked_max(row, &cols));
    Ok(ScoreVector {
        method: Method::Mls,
        values,
        params: ScoreParams { masked_classes: masked_count(mask), ..Default::default() },
    })
}

/// Energy score `T · log Σ exp(f_c / T)`.
pub fn score_energy<T: Real>(
    logits: &Matrix<T>,
    temperature: f64,
    mask: Option<&ClassMask>,
) -> Result<ScoreVector<T>, ScoringError> {
    check_temperature(temperature)?;
    let cols = prepare(logits, mask)?;
    let t = T::lit(temperature);
    let values = per_row(logits, |row| log_sum_exp(row, &cols, t));
    Ok(ScoreVector {
        method: Method::Energy,
        values,
        params: ScoreParams {
            temperature: Some(temperature),
            masked_classes: masked_count(mask),
            ..Default::default()
        },
    })
}

/// GradNorm in closed form.
///
/// For a linear head the class-averaged cross-entropy gradient w.r.t. the
/// weights is the outer product `(p − 1/C)·zᵀ`, so its L1 norm factorizes into
/// `‖z‖₁ · Σ_c |p_c − 1/C|`.
pub fn score_gradnorm<T: Real>(
    logits: &Matrix<T>,
    features: &Matrix<T>,
    mask: Option<&ClassMask>,
) -> Result<ScoreVector<T>, ScoringError> {
    if logits.rows() != features.rows() {
        return Err(ScoringError::DimensionMismatch(format!(
            "{} logit rows but {} feature rows",
            logits.rows(),
            features.rows()
        )));
    }
    let cols = prepare(logits, mask)?;
    check_finite(features, &(0..features.cols()).collect::<Vec<_>>())?;
    let uniform = T::one() / T::from_usize(cols.len()).unwrap();
    let values = logits
        .iter_rows()
        .zip(features.iter_rows())
        .map(|(row, z)| {
            let max = masked_max(row, &cols);
            let sum = shifted_exp_sum(row, &cols, max, T::one());
            let deviation: T = cols.iter().map(|&c| ((row[c] - max).exp() / sum - uniform).abs()).sum();
            let l1: T = z.iter().map(|v| v.abs()).sum();
            l1 * deviation
        })
        .collect();
    Ok(ScoreVector {
        method: Method::Gradnorm,
        values,
        params: ScoreParams { masked_classes: masked_count(mask), ..Default::default() },
    })
}

/// Temperature-scaled maximum softmax probability (ODIN without input perturbation).
pub fn score_odin_t<T: Real>(
    logits: &Matrix<T>,
    temperature: f64,
    mask: Option<&ClassMask>,
) -> Result<ScoreVector<T>, ScoringError> {
    check_temperature(temperature)?;
    let cols = prepare(logits, mask)?;
    let t = T::lit(temperature);
    let values = per_row(logits, |row| {
        let max = masked_max(row, &cols);
        shifted_exp_sum(row, &cols, max, t).recip()
    });
    Ok(ScoreVector {
        method: Method::OdinT,
        values,
        params: ScoreParams {
            temperature: Some(temperature),
            masked_classes: masked_count(mask),
            ..Default::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(row: &[f64]) -> Matrix<f64> {
        Matrix::from_rows(&[row]).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9
    }

    #[test]
    fn msp_analytic() {
        assert!(close(score_msp(&one(&[0.0; 4]), None).unwrap().values[0], 0.25));
        assert!(close(score_msp(&one(&[2f64.ln(), 0.0]), None).unwrap().values[0], 2.0 / 3.0));
        assert!(close(score_msp(&one(&[1007.0; 4]), None).unwrap().values[0], 0.25));
    }

    #[test]
    fn mls_analytic() {
        assert_eq!(score_mls(&one(&[2.0, -1.0, 0.5]), None).unwrap().values[0], 2.0);
        assert_eq!(score_mls(&one(&[-3.25; 3]), None).unwrap().values[0], -3.25);
    }

    #[test]
    fn energy_analytic() {
        let two = one(&[0.0, 0.0]);
        assert!(close(score_energy(&two, 1.0, None).unwrap().values[0], 2f64.ln()));
        assert!(close(score_energy(&two, 2.0, None).unwrap().values[0], 2.0 * 2f64.ln()));
        assert_eq!(score_energy(&one(&[1000.0, 0.0]), 1.0, None).unwrap().values[0], 1000.0);
        assert_eq!(score_energy(&two, 0.0, None).unwrap_err(), ScoringError::BadTemperature(0.0));
        assert!(score_energy(&two, -1.0, None).is_err());
    }

    #[test]
    fn gradnorm_analytic() {
        let f = one(&[1.0, -2.0, 3.0]);
        assert_eq!(score_gradnorm(&one(&[0.7; 5]), &one(&[1.0, 2.0, 3.0, 4.0, 5.0]), None).unwrap().values[0], 0.0);
        let v = score_gradnorm(&one(&[50.0, -50.0]), &f, None).unwrap().values[0];
        assert!((v - 6.0).abs() < 1e-9, "{v}");
        assert!(score_gradnorm(&one(&[0.0, 1.0]), &Matrix::<f64>::zeros(2, 3), None).is_err());
    }

    #[test]
    fn odin_reduces_to_msp_at_unit_temperature() {
        let m = Matrix::from_rows(&[[0.3, -1.2, 4.0], [9.0, 9.0, -2.0]]).unwrap();
        assert_eq!(score_odin_t(&m, 1.0, None).unwrap().values, score_msp(&m, None).unwrap().values);
        let hot = score_odin_t(&one(&[2f64.ln(), 0.0]), 1000.0, None).unwrap().values[0];
        assert!(hot > 0.5 && hot < 0.5002, "{hot}");
        assert!(close(score_odin_t(&one(&[3.0; 7]), 1000.0, None).unwrap().values[0], 1.0 / 7.0));
    }

    #[test]
    fn mask_restricts_columns() {
        let m = Matrix::from_rows(&[[10.0, 0.0, 1.0, 2.0]]).unwrap();
        let mask = ClassMask::new(vec![1, 3]).unwrap();
        let sub = m.select_columns(&[1, 3]);
        assert_eq!(score_mls(&m, Some(&mask)).unwrap().values, score_mls(&sub, None).unwrap().values);
        assert_eq!(score_msp(&m, Some(&mask)).unwrap().values, score_msp(&sub, None).unwrap().values);
        let single = ClassMask::new(vec![2]).unwrap();
        assert_eq!(score_msp(&m, Some(&single)).unwrap_err(), ScoringError::TooFewClasses(1));
        let bad = ClassMask::new(vec![4]).unwrap();
        assert!(matches!(score_mls(&m, Some(&bad)), Err(ScoringError::Mask(_))));
    }

    #[test]
    fn non_finite_logits_rejected() {
        let m = Matrix::from_rows(&[[0.0, 1.0], [f64::NAN, 0.0]]).unwrap();
        assert_eq!(score_msp(&m, None).unwrap_err(), ScoringError::NonFinite { row: 1, col: 0 });
        // masked-out columns are not inspected
        let mask = ClassMask::new(vec![1, 2]).unwrap();
        let m = Matrix::from_rows(&[[f64::INFINITY, 1.0, 0.0]]).unwrap();
        assert!(score_mls(&m, Some(&mask)).is_ok());
    }

    #[test]
    fn single_precision_instantiation() {
        let m: Matrix<f32> = Matrix::from_rows(&[[0.0f32, 0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(score_msp(&m, None).unwrap().values[0], 0.25f32);
    }
}
