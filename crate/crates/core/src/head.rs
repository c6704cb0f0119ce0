use crate::matrix::{dot, Matrix, ShapeError};
use crate::scalar::Real;

/// Final fully-connected layer: `logits = W·z + b` with `W` of shape C×d.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead<T> {
    weight: Matrix<T>,
    bias: Vec<T>,
}

impl<T: Real> LinearHead<T> {
    pub fn new(weight: Matrix<T>, bias: Vec<T>) -> Result<Self, ShapeError> {
        if bias.len() != weight.rows() {
            return Err(ShapeError {
                expected: format!("bias of length {}", weight.rows()),
                actual: format!("{}", bias.len()),
            });
        }
        Ok(Self { weight, bias })
    }

    pub fn weight(&self) -> &Matrix<T> {
        &self.weight
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn num_classes(&self) -> usize {
        self.weight.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn logits_row(&self, feature: &[T]) -> Vec<T> {
        self.weight.iter_rows().zip(&self.bias).map(|(w, &b)| dot(w, feature) + b).collect()
    }

    pub fn logits(&self, features: &Matrix<T>) -> Result<Matrix<T>, ShapeError> {
        if features.cols() != self.feature_dim() {
            return Err(ShapeError {
                expected: format!("{} feature columns", self.feature_dim()),
                actual: format!("{}", features.cols()),
            });
        }
        let mut data = Vec::with_capacity(features.rows() * self.num_classes());
        for z in features.iter_rows() {
            data.extend(self.logits_row(z));
        }
        Matrix::from_vec(features.rows(), self.num_classes(), data)
    }
}
