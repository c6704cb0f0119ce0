//! Model-specific ground truth: an example should be accepted (`z = +1`) iff the
//! deployed classifier gets it right. Semantic-shift examples are always rejected.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::classes::{allowed_columns, ClassMask, MaskError};
use crate::container::Role;
use crate::matrix::Matrix;
use crate::scalar::Real;

/// Evaluation subset of one example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    IdPos,
    IdNeg,
    CoodPos,
    CoodNeg,
    Sood,
}

impl Subset {
    pub const ALL: [Subset; 5] = [Subset::IdPos, Subset::IdNeg, Subset::CoodPos, Subset::CoodNeg, Subset::Sood];

    /// Ground-truth acceptance label.
    pub fn z(self) -> i8 {
        match self {
            Subset::IdPos | Subset::CoodPos => 1,
            Subset::IdNeg | Subset::CoodNeg | Subset::Sood => -1,
        }
    }

    pub fn role(self) -> Role {
        match self {
            Subset::IdPos | Subset::IdNeg => Role::Id,
            Subset::CoodPos | Subset::CoodNeg => Role::Cood,
            Subset::Sood => Role::Sood,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Subset::IdPos => "id_pos",
            Subset::IdNeg => "id_neg",
            Subset::CoodPos => "cood_pos",
            Subset::CoodNeg => "cood_neg",
            Subset::Sood => "sood",
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LabelingError {
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("{0} partition requires ground-truth labels")]
    MissingLabels(Role),
    #[error("{labels} labels for {rows} logit rows")]
    LengthMismatch { labels: usize, rows: usize },
    #[error("accuracy of an empty {0} partition is undefined")]
    EmptyPartition(Role),
}

/// Per-example labeling of one partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MsLabeling {
    pub role: Role,
    pub z: Vec<i8>,
    pub subset: Vec<Subset>,
    pub predicted_class: Vec<usize>,
}

impl MsLabeling {
    pub fn len(&self) -> usize {
        self.subset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subset.is_empty()
    }

    pub fn count(&self, subset: Subset) -> usize {
        self.subset.iter().filter(|&&s| s == subset).count()
    }

    pub fn accepted_count(&self) -> usize {
        self.z.iter().filter(|&&z| z == 1).count()
    }
}

/// Argmax over the allowed classes; ties go to the lowest class index.
pub fn predict<T: Real>(logits: &Matrix<T>, mask: Option<&ClassMask>) -> Result<Vec<usize>, LabelingError> {
    let cols = allowed_columns(mask, logits.cols())?;
    Ok(logits
        .iter_rows()
        .map(|row| {
            let mut best = cols[0];
            for &c in &cols[1..] {
                // strict comparison keeps the earliest maximum
                if row[c] > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect())
}

pub fn assign_ms_labels<T: Real>(
    role: Role,
    logits: &Matrix<T>,
    labels: Option<&[i64]>,
    mask: Option<&ClassMask>,
) -> Result<MsLabeling, LabelingError> {
    let predicted_class = predict(logits, mask)?;
    let n = predicted_class.len();
    let subset: Vec<Subset> = match role {
        Role::Sood => vec![Subset::Sood; n],
        Role::Id | Role::Cood => {
            let labels = labels.ok_or(LabelingError::MissingLabels(role))?;
            if labels.len() != n {
                return Err(LabelingError::LengthMismatch { labels: labels.len(), rows: n });
            }
            let (pos, neg) =
                if role == Role::Id { (Subset::IdPos, Subset::IdNeg) } else { (Subset::CoodPos, Subset::CoodNeg) };
            predicted_class.iter().zip(labels).map(|(&p, &y)| if y >= 0 && p as i64 == y { pos } else { neg }).collect()
        }
    };
    let z = subset.iter().map(|s| s.z()).collect();
    Ok(MsLabeling { role, z, subset, predicted_class })
}

/// Fraction of the partition with `z = +1`.
pub fn accuracy(labeling: &MsLabeling) -> Result<f64, LabelingError> {
    if labeling.is_empty() {
        return Err(LabelingError::EmptyPartition(labeling.role));
    }
    Ok(labeling.accepted_count() as f64 / labeling.len() as f64)
}
