//! Virtual-logit matching: principal subspace of training features, residual
//! norm outside it, and the combined score `logsumexp(logits) − α·res(x)`.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classes::{allowed_columns, ClassMask};
use crate::container::{read_array, write_array, ArrayBlock, ContainerError};
use crate::head::LinearHead;
use crate::linalg::{eigh_symmetric, min_norm_solve, EigenError};
use crate::matrix::{dot, Matrix};
use crate::scalar::Real;
use crate::scoring::{log_sum_exp, masked_max, Method, ScoreParams, ScoreVector, ScoringError};

/// Σ res(x) below this fraction of Σ ‖x − u‖ counts as "no residual at all".
pub const DEGENERATE_RESIDUAL_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// Offset is the column mean of the training features.
    #[default]
    FeatureMean,
    /// Offset is `−pinv(W)·b`, the feature-space point the head maps to zero logits.
    HeadOrigin,
}

impl fmt::Display for Centering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Centering::FeatureMean => "feature_mean",
            Centering::HeadOrigin => "head_origin",
        })
    }
}

impl std::str::FromStr for Centering {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "feature_mean" => Ok(Centering::FeatureMean),
            "head_origin" => Ok(Centering::HeadOrigin),
            other => Err(format!("unknown centering {other:?} (expected feature_mean or head_origin)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VimError {
    #[error("principal dimension {dim} out of range: need 0 < D < {feature_dim}")]
    PrincipalDim { dim: usize, feature_dim: usize },
    #[error("no training features provided")]
    EmptyTraining,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("training features lie inside the principal subspace (sum of residuals is zero); alpha is undefined")]
    DegenerateResidual,
    #[error("alpha = {0} is not positive: the summed training max-logit must be positive")]
    NonPositiveAlpha(f64),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
}

/// `round(d / 4)`, clamped into `[1, d − 1]`.
pub fn default_principal_dim(feature_dim: usize) -> usize {
    ((feature_dim + 2) / 4).clamp(1, feature_dim.saturating_sub(1).max(1))
}

/// Offset plus orthonormal principal/complement bases of the training features.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace<T> {
    pub offset: Vec<T>,
    /// d×D, columns span the top-D covariance eigenvectors.
    pub principal_basis: Matrix<T>,
    /// d×(d−D), the remaining eigenvectors.
    pub complement_basis: Matrix<T>,
    /// Covariance eigenvalues, descending.
    pub eigenvalues: Vec<T>,
}

/// Fitted ViM state.
#[derive(Debug, Clone, PartialEq)]
pub struct VimProjector<T> {
    pub offset: Vec<T>,
    pub principal_basis: Matrix<T>,
    pub complement_basis: Matrix<T>,
    pub principal_dim: usize,
    pub alpha: T,
    pub centering: Centering,
}

pub fn fit_subspace<T: Real>(
    train_features: &Matrix<T>,
    head: &LinearHead<T>,
    principal_dim: usize,
    centering: Centering,
) -> Result<Subspace<T>, VimError> {
    let (m, d) = train_features.shape();
    if m == 0 {
        return Err(VimError::EmptyTraining);
    }
    if head.feature_dim() != d {
        return Err(VimError::DimensionMismatch(format!(
            "head expects {} features, training features have {d}",
            head.feature_dim()
        )));
    }
    if principal_dim == 0 || principal_dim >= d {
        return Err(VimError::PrincipalDim { dim: principal_dim, feature_dim: d });
    }
    if m <= d {
        log::warn!("fitting ViM subspace from {m} training rows in {d} dimensions; covariance is rank-deficient");
    }

    let offset = match centering {
        Centering::FeatureMean => train_features.column_means(),
        Centering::HeadOrigin => {
            let neg_bias: Vec<T> = head.bias().iter().map(|&b| -b).collect();
            min_norm_solve(head.weight(), &neg_bias)?
        }
    };

    // upper triangle of (X − u)ᵀ(X − u) / M, mirrored afterwards
    let mut cov = Matrix::zeros(d, d);
    let mut centered = vec![T::zero(); d];
    for row in train_features.iter_rows() {
        for ((c, &x), &u) in centered.iter_mut().zip(row).zip(&offset) {
            *c = x - u;
        }
        for i in 0..d {
            let ci = centered[i];
            if ci == T::zero() {
                continue;
            }
            let cov_row = cov.row_mut(i);
            for j in i..d {
                cov_row[j] = cov_row[j] + ci * centered[j];
            }
        }
    }
    let inv_m = T::one() / T::from_usize(m).unwrap();
    for i in 0..d {
        for j in i..d {
            let v = cov.get(i, j) * inv_m;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }

    let eig = eigh_symmetric(&cov)?;
    let principal: Vec<usize> = (0..principal_dim).collect();
    let complement: Vec<usize> = (principal_dim..d).collect();
    Ok(Subspace {
        offset,
        principal_basis: eig.vectors.select_columns(&principal),
        complement_basis: eig.vectors.select_columns(&complement),
        eigenvalues: eig.values,
    })
}

/// Fit the subspace, then set `α = Σ max_c f_c(x_i) / Σ res(x_i)` over the
/// training rows, with logits recomputed through the head.
pub fn fit_projector<T: Real>(
    train_features: &Matrix<T>,
    head: &LinearHead<T>,
    principal_dim: usize,
    centering: Centering,
) -> Result<VimProjector<T>, VimError> {
    let sub = fit_subspace(train_features, head, principal_dim, centering)?;
    let mut projector = VimProjector {
        offset: sub.offset,
        principal_basis: sub.principal_basis,
        complement_basis: sub.complement_basis,
        principal_dim,
        alpha: T::one(),
        centering,
    };

    let all_classes: Vec<usize> = (0..head.num_classes()).collect();
    let mut max_logit_sum = T::zero();
    let mut residual_sum = T::zero();
    let mut distance_sum = T::zero();
    for z in train_features.iter_rows() {
        max_logit_sum = max_logit_sum + masked_max(&head.logits_row(z), &all_classes);
        residual_sum = residual_sum + projector.residual(z)?;
        distance_sum =
            distance_sum + z.iter().zip(&projector.offset).map(|(&x, &u)| (x - u) * (x - u)).sum::<T>().sqrt();
    }
    if distance_sum == T::zero() || residual_sum <= distance_sum * T::lit(DEGENERATE_RESIDUAL_RATIO) {
        return Err(VimError::DegenerateResidual);
    }
    let alpha = max_logit_sum / residual_sum;
    if !(alpha > T::zero()) {
        return Err(VimError::NonPositiveAlpha(alpha.as_f64()));
    }
    projector.alpha = alpha;
    Ok(projector)
}

impl<T: Real> VimProjector<T> {
    pub fn feature_dim(&self) -> usize {
        self.offset.len()
    }

    /// Replace the fitted α with a fixed hyperparameter value.
    pub fn with_alpha(mut self, alpha: T) -> Self {
        self.alpha = alpha;
        self
    }

    fn check_dim(&self, feature: &[T]) -> Result<(), VimError> {
        if feature.len() != self.feature_dim() {
            return Err(VimError::DimensionMismatch(format!(
                "projector has {} dimensions, feature has {}",
                self.feature_dim(),
                feature.len()
            )));
        }
        Ok(())
    }

    fn projection_norm(basis: &Matrix<T>, centered: &[T]) -> T {
        let k = basis.cols();
        let mut coeffs = vec![T::zero(); k];
        for (row, &x) in basis.iter_rows().zip(centered) {
            for (c, &b) in coeffs.iter_mut().zip(row) {
                *c = *c + b * x;
            }
        }
        dot(&coeffs, &coeffs).sqrt()
    }

    fn centered(&self, feature: &[T]) -> Vec<T> {
        feature.iter().zip(&self.offset).map(|(&x, &u)| x - u).collect()
    }

    /// `‖Rᵀ(x − u)‖₂`.
    pub fn residual(&self, feature: &[T]) -> Result<T, VimError> {
        self.check_dim(feature)?;
        Ok(Self::projection_norm(&self.complement_basis, &self.centered(feature)))
    }

    /// Norm of the component of `x − u` inside the principal subspace.
    pub fn principal_norm(&self, feature: &[T]) -> Result<T, VimError> {
        self.check_dim(feature)?;
        Ok(Self::projection_norm(&self.principal_basis, &self.centered(feature)))
    }
}

/// `log Σ_c exp(f_c) − α · res(x)` per row.
pub fn score_vim<T: Real>(
    logits: &Matrix<T>,
    features: &Matrix<T>,
    projector: &VimProjector<T>,
    mask: Option<&ClassMask>,
) -> Result<ScoreVector<T>, VimError> {
    if logits.rows() != features.rows() {
        return Err(VimError::DimensionMismatch(format!(
            "{} logit rows but {} feature rows",
            logits.rows(),
            features.rows()
        )));
    }
    let cols = allowed_columns(mask, logits.cols()).map_err(ScoringError::from)?;
    if cols.len() < 2 {
        return Err(ScoringError::TooFewClasses(cols.len()).into());
    }
    let mut values = Vec::with_capacity(logits.rows());
    for (r, (row, z)) in logits.iter_rows().zip(features.iter_rows()).enumerate() {
        if let Some(&col) = cols.iter().find(|&&c| !row[c].is_finite()) {
            return Err(ScoringError::NonFinite { row: r, col }.into());
        }
        values.push(log_sum_exp(row, &cols, T::one()) - projector.alpha * projector.residual(z)?);
    }
    Ok(ScoreVector {
        method: Method::Vim,
        values,
        params: ScoreParams {
            alpha: Some(projector.alpha.as_f64()),
            principal_dim: Some(projector.principal_dim),
            masked_classes: mask.map(ClassMask::len),
            ..Default::default()
        },
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct ProjectorManifest {
    feature_dim: usize,
    principal_dim: usize,
    alpha: f64,
    centering: Centering,
    offset: String,
    principal_basis: String,
    complement_basis: String,
}

pub const PROJECTOR_FILE: &str = "vim_projector.json";

impl VimProjector<f64> {
    /// Store as `vim_projector.json` plus three `MSOB` arrays inside `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), ContainerError> {
        fs::create_dir_all(dir).map_err(|source| ContainerError::Io { path: dir.to_path_buf(), source })?;
        let m = ProjectorManifest {
            feature_dim: self.feature_dim(),
            principal_dim: self.principal_dim,
            alpha: self.alpha,
            centering: self.centering,
            offset: "vim_offset.msob".into(),
            principal_basis: "vim_principal.msob".into(),
            complement_basis: "vim_complement.msob".into(),
        };
        write_array(&ArrayBlock::column_f64(&self.offset), &dir.join(&m.offset))?;
        write_array(&ArrayBlock::from_f64(&self.principal_basis), &dir.join(&m.principal_basis))?;
        write_array(&ArrayBlock::from_f64(&self.complement_basis), &dir.join(&m.complement_basis))?;
        let path = dir.join(PROJECTOR_FILE);
        let text = serde_json::to_string_pretty(&m).expect("projector manifest serializes") + "\n";
        fs::write(&path, text).map_err(|source| ContainerError::Io { path, source })
    }

    pub fn read(dir: &Path) -> Result<Self, ContainerError> {
        let path = dir.join(PROJECTOR_FILE);
        let text = fs::read_to_string(&path).map_err(|source| ContainerError::Io { path: path.clone(), source })?;
        let m: ProjectorManifest =
            serde_json::from_str(&text).map_err(|source| ContainerError::ManifestParse { path, source })?;
        let offset = read_array(&dir.join(&m.offset))?.to_matrix_f64()?.into_vec();
        let principal_basis = read_array(&dir.join(&m.principal_basis))?.to_matrix_f64()?;
        let complement_basis = read_array(&dir.join(&m.complement_basis))?.to_matrix_f64()?;
        let d = m.feature_dim;
        if offset.len() != d
            || principal_basis.shape() != (d, m.principal_dim)
            || complement_basis.shape() != (d, d - m.principal_dim.min(d))
        {
            return Err(ContainerError::ShapeMismatch {
                context: "vim projector".into(),
                expected: format!(
                    "offset {d}, principal {d}x{}, complement {d}x{}",
                    m.principal_dim,
                    d.saturating_sub(m.principal_dim)
                ),
                actual: format!(
                    "offset {}, principal {:?}, complement {:?}",
                    offset.len(),
                    principal_basis.shape(),
                    complement_basis.shape()
                ),
            });
        }
        Ok(Self {
            offset,
            principal_basis,
            complement_basis,
            principal_dim: m.principal_dim,
            alpha: m.alpha,
            centering: m.centering,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::score_energy;

    fn plane_data() -> (Matrix<f64>, LinearHead<f64>) {
        // rows spanning only e1, e2 in R^3
        let rows: Vec<[f64; 3]> = vec![
            [1.0, 2.0, 0.0],
            [-3.0, 0.5, 0.0],
            [2.0, -1.0, 0.0],
            [0.5, 4.0, 0.0],
            [-1.0, -2.5, 0.0],
            [3.0, 1.0, 0.0],
        ];
        let head =
            LinearHead::new(Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap(), vec![5.0, 5.0]).unwrap();
        (Matrix::from_rows(&rows).unwrap(), head)
    }

    #[test]
    fn exact_subspace_has_zero_residual() {
        let (x, head) = plane_data();
        let sub = fit_subspace(&x, &head, 2, Centering::FeatureMean).unwrap();
        let r = &sub.complement_basis;
        assert_eq!(r.shape(), (3, 1));
        assert!(r.get(0, 0).abs() < 1e-12 && r.get(1, 0).abs() < 1e-12);
        assert!((r.get(2, 0).abs() - 1.0).abs() < 1e-12);

        let projector = VimProjector {
            offset: sub.offset,
            principal_basis: sub.principal_basis,
            complement_basis: sub.complement_basis,
            principal_dim: 2,
            alpha: 1.0,
            centering: Centering::FeatureMean,
        };
        for row in x.iter_rows() {
            assert!(projector.residual(row).unwrap() < 1e-12);
        }
        assert_eq!(fit_projector(&x, &head, 2, Centering::FeatureMean).unwrap_err(), VimError::DegenerateResidual);
    }

    #[test]
    fn residual_along_complement() {
        let projector = VimProjector {
            offset: vec![1.0, 1.0, 1.0],
            principal_basis: Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap(),
            complement_basis: Matrix::from_rows(&[[0.0], [0.0], [1.0]]).unwrap(),
            principal_dim: 2,
            alpha: 2.0,
            centering: Centering::FeatureMean,
        };
        assert_eq!(projector.residual(&[1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(projector.residual(&[1.0, 1.0, 6.0]).unwrap(), 5.0);
        assert!(projector.residual(&[1.0, 1.0]).is_err());

        // logits [0,0], α = 2, res = 1 → ln 2 − 2
        let logits = Matrix::from_rows(&[[0.0, 0.0]]).unwrap();
        let feats = Matrix::from_rows(&[[1.0, 1.0, 2.0]]).unwrap();
        let s = score_vim(&logits, &feats, &projector, None).unwrap().values[0];
        assert!((s - (2f64.ln() - 2.0)).abs() < 1e-12, "{s}");
    }

    #[test]
    fn zero_residual_reduces_to_energy() {
        let projector = VimProjector {
            offset: vec![0.0, 0.0],
            principal_basis: Matrix::from_rows(&[[1.0], [0.0]]).unwrap(),
            complement_basis: Matrix::from_rows(&[[0.0], [1.0]]).unwrap(),
            principal_dim: 1,
            alpha: 3.0,
            centering: Centering::FeatureMean,
        };
        let logits = Matrix::from_rows(&[[1.0, 2.0, -0.5], [30.0, 0.0, 0.0]]).unwrap();
        let feats = Matrix::from_rows(&[[4.0, 0.0], [-2.0, 0.0]]).unwrap();
        let vim = score_vim(&logits, &feats, &projector, None).unwrap().values;
        assert_eq!(vim, score_energy(&logits, 1.0, None).unwrap().values);
    }

    #[test]
    fn alpha_is_ratio_of_sums() {
        // covariance diag(16, 1.5625), D = 1 keeps e1; every residual is 1.25 → Σ res = 5
        let x = Matrix::<f64>::from_rows(&[[4.0, 1.25], [-4.0, 1.25], [4.0, -1.25], [-4.0, -1.25]]).unwrap();
        // max logits 4.5, 0.5, 4.5, 0.5 → Σ = 10
        let head = LinearHead::new(Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap(), vec![0.5, 0.5]).unwrap();
        let p = fit_projector(&x, &head, 1, Centering::FeatureMean).unwrap();
        assert!((p.alpha - 2.0).abs() < 1e-12, "{}", p.alpha);

        let negative =
            LinearHead::new(Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap(), vec![-10.0, -10.0]).unwrap();
        assert!(matches!(fit_projector(&x, &negative, 1, Centering::FeatureMean), Err(VimError::NonPositiveAlpha(_))));
    }

    #[test]
    fn principal_dim_bounds() {
        let (x, head) = plane_data();
        assert!(matches!(fit_subspace(&x, &head, 0, Centering::FeatureMean), Err(VimError::PrincipalDim { .. })));
        assert!(matches!(fit_subspace(&x, &head, 3, Centering::FeatureMean), Err(VimError::PrincipalDim { .. })));
        assert_eq!(default_principal_dim(2048), 512);
        assert_eq!(default_principal_dim(6), 2);
        assert_eq!(default_principal_dim(2), 1);
    }

    #[test]
    fn head_origin_maps_to_zero_logits() {
        let (x, _) = plane_data();
        let head =
            LinearHead::new(Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]]).unwrap(), vec![-1.0, 4.0]).unwrap();
        let sub = fit_subspace(&x, &head, 2, Centering::HeadOrigin).unwrap();
        assert!(
            (sub.offset[0] - 1.0).abs() < 1e-12 && (sub.offset[1] + 2.0).abs() < 1e-12 && sub.offset[2].abs() < 1e-12
        );
    }

    #[test]
    fn projector_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let projector = VimProjector {
            offset: vec![0.5, -1.0, 2.0],
            principal_basis: Matrix::from_rows(&[[1.0], [0.0], [0.0]]).unwrap(),
            complement_basis: Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap(),
            principal_dim: 1,
            alpha: 0.75,
            centering: Centering::HeadOrigin,
        };
        projector.write(dir.path()).unwrap();
        assert_eq!(VimProjector::read(dir.path()).unwrap(), projector);
    }
}
