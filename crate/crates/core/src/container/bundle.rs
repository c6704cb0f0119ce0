use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::classes::ClassMask;
use crate::container::array::{write_array, ArrayBlock};
use crate::container::manifest::{
    inspect, read_manifest, resolve_manifest_path, HeadRef, Manifest, PartitionEntry, Role, TrainStatsRef,
    FORMAT_VERSION, MANIFEST_FILE,
};
use crate::container::ContainerError;
use crate::head::LinearHead;
use crate::matrix::Matrix;

/// Arrays of one dataset partition, widened to 64-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionData {
    pub name: String,
    pub role: Role,
    pub logits: Matrix<f64>,
    pub features: Option<Matrix<f64>>,
    pub labels: Option<Vec<i64>>,
}

impl PartitionData {
    pub fn len(&self) -> usize {
        self.logits.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.rows() == 0
    }
}

/// A fully loaded evaluation bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub model_id: String,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub class_mask: Option<ClassMask>,
    pub partitions: Vec<PartitionData>,
    pub head: Option<LinearHead<f64>>,
    pub train_features: Option<Matrix<f64>>,
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Bundle {
    /// Load and validate a bundle from its directory (or its manifest path).
    pub fn load(path: &Path) -> Result<Self, ContainerError> {
        let manifest_path = resolve_manifest_path(path);
        let manifest = read_manifest(&manifest_path)?;
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        let (report, loaded) = inspect(&manifest, dir);
        if !report.is_valid() {
            return Err(ContainerError::Invalid(report));
        }

        let mut partitions = Vec::with_capacity(manifest.partitions.len());
        for (entry, arrays) in manifest.partitions.iter().zip(loaded.partitions) {
            let logits = arrays.logits.expect("validated").to_matrix_f64()?;
            let features = arrays.features.map(|b| b.to_matrix_f64()).transpose()?;
            let labels = arrays.labels.map(|b| b.to_i64_vec()).transpose()?;
            partitions.push(PartitionData { name: entry.name.clone(), role: entry.role, logits, features, labels });
        }
        let head = match loaded.head {
            Some((w, b)) => {
                let bias = b.to_matrix_f64()?.into_vec();
                Some(LinearHead::new(w.to_matrix_f64()?, bias).map_err(|e| ContainerError::ShapeMismatch {
                    context: "head".into(),
                    expected: e.expected,
                    actual: e.actual,
                })?)
            }
            None => None,
        };
        let train_features = loaded.train_features.map(|b| b.to_matrix_f64()).transpose()?;

        Ok(Self {
            model_id: manifest.model_id.clone(),
            num_classes: manifest.num_classes,
            feature_dim: manifest.feature_dim,
            class_mask: manifest.mask(),
            partitions,
            head,
            train_features,
            extra: manifest.extra,
        })
    }

    /// Manifest describing this bundle with the default file naming used by [`Bundle::write`].
    pub fn manifest(&self) -> Manifest {
        Manifest {
            format_version: FORMAT_VERSION,
            model_id: self.model_id.clone(),
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
            class_mask: self.class_mask.as_ref().map(|m| m.classes().to_vec()),
            head: self
                .head
                .as_ref()
                .map(|_| HeadRef { weight: "head_weight.msob".into(), bias: "head_bias.msob".into() }),
            train_stats_ref: self
                .train_features
                .as_ref()
                .map(|_| TrainStatsRef { features: "train_features.msob".into() }),
            partitions: self
                .partitions
                .iter()
                .map(|p| PartitionEntry {
                    name: p.name.clone(),
                    role: p.role,
                    logits: format!("{}.logits.msob", p.name),
                    features: p.features.as_ref().map(|_| format!("{}.features.msob", p.name)),
                    labels: p.labels.as_ref().map(|_| format!("{}.labels.msob", p.name)),
                })
                .collect(),
            extra: self.extra.clone(),
        }
    }

    /// Write the bundle into `dir` (created if needed), all floats as float64.
    pub fn write(&self, dir: &Path) -> Result<Manifest, ContainerError> {
        fs::create_dir_all(dir).map_err(|source| ContainerError::Io { path: dir.to_path_buf(), source })?;
        let manifest = self.manifest();
        for (p, entry) in self.partitions.iter().zip(&manifest.partitions) {
            write_array(&ArrayBlock::from_f64(&p.logits), &dir.join(&entry.logits))?;
            if let (Some(f), Some(rel)) = (&p.features, &entry.features) {
                write_array(&ArrayBlock::from_f64(f), &dir.join(rel))?;
            }
            if let (Some(l), Some(rel)) = (&p.labels, &entry.labels) {
                write_array(&ArrayBlock::column_i64(l), &dir.join(rel))?;
            }
        }
        if let (Some(head), Some(refs)) = (&self.head, &manifest.head) {
            write_array(&ArrayBlock::from_f64(head.weight()), &dir.join(&refs.weight))?;
            write_array(&ArrayBlock::column_f64(head.bias()), &dir.join(&refs.bias))?;
        }
        if let (Some(t), Some(refs)) = (&self.train_features, &manifest.train_stats_ref) {
            write_array(&ArrayBlock::from_f64(t), &dir.join(&refs.features))?;
        }
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, manifest.to_json()).map_err(|source| ContainerError::Io { path, source })?;
        Ok(manifest)
    }

    pub fn partition(&self, name: &str) -> Option<&PartitionData> {
        self.partitions.iter().find(|p| p.name == name)
    }

    pub fn partitions_with_role(&self, role: Role) -> impl Iterator<Item = &PartitionData> + '_ {
        self.partitions.iter().filter(move |p| p.role == role)
    }
}
