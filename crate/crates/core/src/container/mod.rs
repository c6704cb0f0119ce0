//! On-disk bundle container: a directory holding `manifest.json` plus one
//! `MSOB` file per array.

use std::path::PathBuf;

mod array;
mod bundle;
mod manifest;

pub use array::{read_array, write_array, ArrayBlock, DType, DecodeError, Payload, HEADER_LEN, MAGIC, VERSION};
pub use bundle::{Bundle, PartitionData};
pub use manifest::{
    read_manifest, resolve_manifest_path, validate_bundle, HeadRef, Manifest, PartitionEntry, Role, TrainStatsRef,
    ValidationReport, Violation, FORMAT_VERSION, MANIFEST_FILE,
};

#[derive(Debug, thiserror::Error)]
pub enum ContainerError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {kind}", path.display())]
    Decode { path: PathBuf, kind: DecodeError },
    #[error("{}: invalid manifest: {source}", path.display())]
    ManifestParse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{context}: shape mismatch, expected {expected}, got {actual}")]
    ShapeMismatch { context: String, expected: String, actual: String },
    #[error("wrong dtype: expected {expected}, found {actual}")]
    WrongDType { expected: &'static str, actual: &'static str },
    #[error("bundle failed validation:\n{0}")]
    Invalid(ValidationReport),
}
