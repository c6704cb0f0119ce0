//! Evaluation engine for model-specific OOD detection.
//!
//! A bundle of logits, penultimate features and a linear head goes in; post-hoc
//! scores, model-specific acceptance labels, thresholds and framework metrics
//! come out. The numeric core is generic over [`scalar::Real`]; the aliases
//! below fix it to `f64`, which is what bundles and reports use.

pub mod classes;
pub mod container;
pub mod fixtures;
pub mod frameworks;
pub mod head;
pub mod labeling;
pub mod linalg;
pub mod matrix;
pub mod metrics;
pub mod pipeline;
pub mod reporting;
pub mod scalar;
pub mod scoring;
pub mod vim;

pub use classes::ClassMask;
pub use container::{Bundle, ContainerError, Role};
pub use frameworks::{evaluate_framework, FrameworkKind};
pub use labeling::{assign_ms_labels, MsLabeling, Subset};
pub use metrics::{evaluate, select_threshold, MetricReport, ThresholdSpec};
pub use scalar::Real;
pub use scoring::Method;
pub use vim::Centering;

pub type Matrix = matrix::Matrix<f64>;
pub type Matrix32 = matrix::Matrix<f32>;
pub type LinearHead = head::LinearHead<f64>;
pub type ScoreVector = scoring::ScoreVector<f64>;
pub type VimProjector = vim::VimProjector<f64>;
