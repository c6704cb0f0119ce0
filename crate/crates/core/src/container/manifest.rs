use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classes::ClassMask;
use crate::container::array::{read_array, ArrayBlock, DType};
use crate::container::ContainerError;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Dataset role of a partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// In-distribution test data.
    Id,
    /// Covariate shift: classes inside the label space, shifted inputs.
    Cood,
    /// Semantic shift: classes outside the label space.
    Sood,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Id => "id",
            Role::Cood => "cood",
            Role::Sood => "sood",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionEntry {
    pub name: String,
    pub role: Role,
    pub logits: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadRef {
    pub weight: String,
    pub bias: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStatsRef {
    pub features: String,
}

/// `manifest.json` at the root of a bundle directory. Array references are
/// paths relative to that directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub model_id: String,
    pub num_classes: usize,
    pub feature_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_mask: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<HeadRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_stats_ref: Option<TrainStatsRef>,
    pub partitions: Vec<PartitionEntry>,
    /// Producer metadata (seeds, source datasets, ...), carried through untouched.
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// The validated class mask, if any. Invalid masks surface as violations in
    /// [`validate_bundle`]; here they are reported as `None`.
    pub fn mask(&self) -> Option<ClassMask> {
        let m = ClassMask::new(self.class_mask.clone()?).ok()?;
        m.check_range(self.num_classes).ok()?;
        Some(m)
    }

    pub fn partition(&self, name: &str) -> Option<&PartitionEntry> {
        self.partitions.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// File or manifest field the problem was found in.
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { location: location.into(), message: message.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return writeln!(f, "bundle is valid");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Arrays read while validating, reused by [`crate::container::Bundle::load`].
#[derive(Debug, Default)]
pub(crate) struct LoadedArrays {
    pub partitions: Vec<LoadedPartition>,
    pub head: Option<(ArrayBlock, ArrayBlock)>,
    pub train_features: Option<ArrayBlock>,
}

#[derive(Debug)]
pub(crate) struct LoadedPartition {
    pub logits: Option<ArrayBlock>,
    pub features: Option<ArrayBlock>,
    pub labels: Option<ArrayBlock>,
}

/// Accepts either a bundle directory or the path of its `manifest.json`.
pub fn resolve_manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

pub fn read_manifest(manifest_path: &Path) -> Result<Manifest, ContainerError> {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|source| ContainerError::Io { path: manifest_path.to_path_buf(), source })?;
    Manifest::from_json(&text)
        .map_err(|source| ContainerError::ManifestParse { path: manifest_path.to_path_buf(), source })
}

/// Check a bundle for structural problems. An empty violation list means valid.
pub fn validate_bundle(manifest_path: &Path) -> Result<ValidationReport, ContainerError> {
    let manifest_path = resolve_manifest_path(manifest_path);
    let manifest = read_manifest(&manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    Ok(inspect(&manifest, dir).0)
}

pub(crate) fn inspect(manifest: &Manifest, dir: &Path) -> (ValidationReport, LoadedArrays) {
    let mut report = ValidationReport::default();
    let mut loaded = LoadedArrays::default();
    let c = manifest.num_classes;
    let d = manifest.feature_dim;

    if manifest.format_version != FORMAT_VERSION {
        report.push("manifest.format_version", format!("unsupported format_version {}", manifest.format_version));
    }
    if c < 2 {
        report.push("manifest.num_classes", format!("num_classes must be at least 2, got {c}"));
    }
    if d == 0 {
        report.push("manifest.feature_dim", "feature_dim must be positive");
    }

    let mask = match &manifest.class_mask {
        None => None,
        Some(classes) => match ClassMask::new(classes.clone()) {
            Err(e) => {
                report.push("manifest.class_mask", e.to_string());
                None
            }
            Ok(m) => {
                for &cls in classes.iter().filter(|&&cls| cls >= c) {
                    report.push("manifest.class_mask", format!("class {cls} out of range for {c} classes"));
                }
                Some(m)
            }
        },
    };

    let id_count = manifest.partitions.iter().filter(|p| p.role == Role::Id).count();
    if id_count != 1 {
        report.push("manifest.partitions", format!("expected exactly one partition with role id, found {id_count}"));
    }
    let mut seen = HashSet::new();
    for p in &manifest.partitions {
        if !seen.insert(p.name.as_str()) {
            report.push(format!("partition {}", p.name), "duplicate partition name");
        }
        if p.name.is_empty() || p.name.contains(['/', '\\']) || p.name.starts_with('.') {
            report.push(format!("partition {:?}", p.name), "partition name must be a plain file-name component");
        }
    }

    let read = |rel: &str, report: &mut ValidationReport| -> Option<ArrayBlock> {
        let path = dir.join(rel);
        if !path.is_file() {
            report.push(rel, "missing file");
            return None;
        }
        match read_array(&path) {
            Ok(block) => Some(block),
            Err(e) => {
                report.push(rel, format!("unreadable array: {e}"));
                None
            }
        }
    };

    for p in &manifest.partitions {
        let logits = read(&p.logits, &mut report);
        let mut n = None;
        if let Some(block) = &logits {
            check_float(block, &p.logits, &mut report);
            if block.cols() != c as u64 {
                report.push(
                    &p.logits,
                    format!("shape mismatch: logits must be Nx{c}, found {}x{}", block.rows(), block.cols()),
                );
            }
            n = Some(block.rows());
        }

        let features = p.features.as_ref().and_then(|rel| {
            let block = read(rel, &mut report)?;
            check_float(&block, rel, &mut report);
            check_rows(&block, n, d as u64, "features", rel, &mut report);
            Some(block)
        });

        let labels = match (&p.labels, p.role) {
            (None, Role::Sood) => None,
            (None, role) => {
                report.push(format!("partition {}", p.name), format!("{role} partition requires labels"));
                None
            }
            (Some(rel), role) => read(rel, &mut report).inspect(|block| {
                check_rows(block, n, 1, "labels", rel, &mut report);
                match block.to_i64_vec() {
                    Err(_) => {
                        report.push(rel.as_str(), format!("labels must be int64, found {}", block.dtype().name()))
                    }
                    Ok(values) if role != Role::Sood => check_labels(&values, c, mask.as_ref(), rel, &mut report),
                    Ok(_) => {}
                }
            }),
        };

        loaded.partitions.push(LoadedPartition { logits, features, labels });
    }

    if let Some(head) = &manifest.head {
        let weight = read(&head.weight, &mut report);
        let bias = read(&head.bias, &mut report);
        if let Some(w) = &weight {
            check_float(w, &head.weight, &mut report);
            if (w.rows(), w.cols()) != (c as u64, d as u64) {
                report.push(
                    &head.weight,
                    format!("shape mismatch: head weight must be {c}x{d}, found {}x{}", w.rows(), w.cols()),
                );
            }
        }
        if let Some(b) = &bias {
            check_float(b, &head.bias, &mut report);
            if (b.rows(), b.cols()) != (c as u64, 1) {
                report.push(
                    &head.bias,
                    format!("shape mismatch: head bias must be {c}x1, found {}x{}", b.rows(), b.cols()),
                );
            }
        }
        loaded.head = weight.zip(bias);
    }

    if let Some(stats) = &manifest.train_stats_ref {
        loaded.train_features = read(&stats.features, &mut report).inspect(|block| {
            check_float(block, &stats.features, &mut report);
            if block.cols() != d as u64 {
                report.push(
                    &stats.features,
                    format!("shape mismatch: training features must be Mx{d}, found {}x{}", block.rows(), block.cols()),
                );
            }
        });
    }

    (report, loaded)
}

fn check_float(block: &ArrayBlock, rel: &str, report: &mut ValidationReport) {
    if block.dtype() == DType::I64 {
        report.push(rel, "expected a float32 or float64 array, found int64");
    }
}

fn check_rows(block: &ArrayBlock, n: Option<u64>, cols: u64, what: &str, rel: &str, report: &mut ValidationReport) {
    let rows_ok = n.is_none_or(|n| block.rows() == n);
    if !rows_ok || block.cols() != cols {
        let expected_rows = n.map_or_else(|| "N".to_string(), |n| n.to_string());
        report.push(
            rel,
            format!("shape mismatch: {what} must be {expected_rows}x{cols}, found {}x{}", block.rows(), block.cols()),
        );
    }
}

fn check_labels(values: &[i64], c: usize, mask: Option<&ClassMask>, rel: &str, report: &mut ValidationReport) {
    if let Some((row, &y)) = values.iter().enumerate().find(|(_, &y)| y < 0 || y as u64 >= c as u64) {
        report.push(rel, format!("label out of range: row {row} has label {y}, expected [0, {c})"));
        return;
    }
    if let Some(mask) = mask {
        if let Some((row, &y)) = values.iter().enumerate().find(|(_, &y)| !mask.contains(y as usize)) {
            report.push(rel, format!("label outside class mask: row {row} has label {y}"));
        }
    }
}
