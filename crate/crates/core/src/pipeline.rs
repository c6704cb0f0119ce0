//! Bundle-level orchestration: score every partition, persist score tables,
//! label partitions once and evaluate each method under each framework.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{read_array, write_array, ArrayBlock, Bundle, ContainerError, Role};
use crate::frameworks::{
    evaluate_framework, paired_sood_comparison, FrameworkError, FrameworkKind, PairedSoodComparison,
};
use crate::labeling::{assign_ms_labels, LabelingError, MsLabeling};
use crate::metrics::{ConfigEcho, MetricReport, ReportContext, ScoredPartition};
use crate::scoring::{
    score_energy, score_gradnorm, score_mls, score_msp, score_odin_t, Method, MethodParams, ScoringError,
};
use crate::vim::{default_principal_dim, fit_projector, score_vim, Centering, VimError, VimProjector};

pub const SCORE_INDEX_FILE: &str = "score_index.json";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("{method} on partition {partition}: {source}")]
    Scoring {
        method: Method,
        partition: String,
        #[source]
        source: ScoringError,
    },
    #[error("vim: {0}")]
    Vim(#[from] VimError),
    #[error("labeling partition {partition}: {source}")]
    Labeling {
        partition: String,
        #[source]
        source: LabelingError,
    },
    #[error(transparent)]
    Framework(#[from] FrameworkError),
    #[error("{method} needs penultimate features, but partition {partition} has none; add a features file to the manifest or drop {method}")]
    MissingFeatures { method: Method, partition: String },
    #[error("vim needs the linear head; add head.weight and head.bias to the manifest or drop vim")]
    MissingHead,
    #[error(
        "vim needs training features to fit its subspace; add train_stats_ref.features to the manifest or drop vim"
    )]
    MissingTrainFeatures,
    #[error("no {method} scores for partition {partition}; run score with this method first")]
    MissingScores { method: Method, partition: String },
    #[error("scores were computed for model {scores:?}, bundle is {bundle:?}")]
    ModelMismatch { scores: String, bundle: String },
    #[error("{}: {source}", path.display())]
    Index {
        path: std::path::PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub methods: Vec<Method>,
    pub energy_temperature: f64,
    pub odin_temperature: f64,
    /// `None` picks `round(d / 4)`.
    #[serde(default)]
    pub vim_principal_dim: Option<usize>,
    #[serde(default)]
    pub vim_centering: Centering,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        let p = MethodParams::default();
        Self {
            methods: Method::ALL.to_vec(),
            energy_temperature: p.energy_temperature,
            odin_temperature: p.odin_temperature,
            vim_principal_dim: None,
            vim_centering: Centering::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VimSummary {
    pub alpha: f64,
    pub principal_dim: usize,
    pub centering: Centering,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub method: Method,
    pub partition: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub model_id: String,
    pub config: ScoreConfig,
    pub class_mask_size: Option<usize>,
    pub projector: Option<VimProjector<f64>>,
    /// Method-major, partitions in bundle order.
    pub tables: Vec<ScoreTable>,
}

impl ScoreSet {
    pub fn get(&self, method: Method, partition: &str) -> Option<&[f64]> {
        self.tables.iter().find(|t| t.method == method && t.partition == partition).map(|t| t.values.as_slice())
    }

    pub fn methods(&self) -> Vec<Method> {
        let mut out: Vec<Method> = Vec::new();
        for t in &self.tables {
            if !out.contains(&t.method) {
                out.push(t.method);
            }
        }
        out
    }

    pub fn vim_summary(&self) -> Option<VimSummary> {
        self.projector.as_ref().map(|p| VimSummary {
            alpha: p.alpha,
            principal_dim: p.principal_dim,
            centering: p.centering,
        })
    }

    /// Knob values echoed into every report.
    pub fn config_echo(&self) -> ConfigEcho {
        let vim = self.vim_summary();
        ConfigEcho {
            energy_temperature: Some(self.config.energy_temperature),
            odin_temperature: Some(self.config.odin_temperature),
            vim_principal_dim: vim.map(|v| v.principal_dim),
            vim_centering: vim.map(|v| v.centering.to_string()),
            vim_alpha: vim.map(|v| v.alpha),
            class_mask_size: self.class_mask_size,
            ..ConfigEcho::default()
        }
    }
}

fn table_file(method: Method, partition: &str) -> String {
    format!("{method}__{partition}.msob")
}

pub fn score_bundle(bundle: &Bundle, config: &ScoreConfig) -> Result<ScoreSet, PipelineError> {
    let mask = bundle.class_mask.as_ref();
    for &method in &config.methods {
        if method.needs_features() {
            if let Some(p) = bundle.partitions.iter().find(|p| p.features.is_none()) {
                return Err(PipelineError::MissingFeatures { method, partition: p.name.clone() });
            }
        }
    }

    let projector = if config.methods.contains(&Method::Vim) {
        let head = bundle.head.as_ref().ok_or(PipelineError::MissingHead)?;
        let train = bundle.train_features.as_ref().ok_or(PipelineError::MissingTrainFeatures)?;
        let dim = config.vim_principal_dim.unwrap_or_else(|| default_principal_dim(bundle.feature_dim));
        Some(fit_projector(train, head, dim, config.vim_centering)?)
    } else {
        None
    };

    let mut tables = Vec::new();
    for &method in &config.methods {
        for p in &bundle.partitions {
            let err = |source| PipelineError::Scoring { method, partition: p.name.clone(), source };
            let features = p.features.as_ref();
            let values = match method {
                Method::Msp => score_msp(&p.logits, mask).map_err(err)?,
                Method::Mls => score_mls(&p.logits, mask).map_err(err)?,
                Method::Energy => score_energy(&p.logits, config.energy_temperature, mask).map_err(err)?,
                Method::OdinT => score_odin_t(&p.logits, config.odin_temperature, mask).map_err(err)?,
                Method::Gradnorm => score_gradnorm(&p.logits, features.expect("checked above"), mask).map_err(err)?,
                Method::Vim => {
                    let projector = projector.as_ref().expect("fitted above");
                    score_vim(&p.logits, features.expect("checked above"), projector, mask)?
                }
            }
            .values;
            tables.push(ScoreTable { method, partition: p.name.clone(), values });
        }
    }
    Ok(ScoreSet {
        model_id: bundle.model_id.clone(),
        config: config.clone(),
        class_mask_size: bundle.class_mask.as_ref().map(|m| m.len()),
        projector,
        tables,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    method: Method,
    partition: String,
    file: String,
    rows: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoreIndex {
    model_id: String,
    config: ScoreConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class_mask_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vim: Option<VimSummary>,
    tables: Vec<IndexEntry>,
}

/// One `N×1` float64 file per (method, partition), an index, and the ViM projector if fitted.
pub fn write_scores(set: &ScoreSet, dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|source| ContainerError::Io { path: dir.to_path_buf(), source })?;
    let mut entries = Vec::new();
    for t in &set.tables {
        let file = table_file(t.method, &t.partition);
        write_array(&ArrayBlock::column_f64(&t.values), &dir.join(&file))?;
        entries.push(IndexEntry { method: t.method, partition: t.partition.clone(), file, rows: t.values.len() });
    }
    if let Some(p) = &set.projector {
        p.write(dir)?;
    }
    let index = ScoreIndex {
        model_id: set.model_id.clone(),
        config: set.config.clone(),
        class_mask_size: set.class_mask_size,
        vim: set.vim_summary(),
        tables: entries,
    };
    let path = dir.join(SCORE_INDEX_FILE);
    let text = serde_json::to_string_pretty(&index).expect("index serializes") + "\n";
    fs::write(&path, text).map_err(|source| ContainerError::Io { path, source })?;
    Ok(())
}

pub fn read_scores(dir: &Path) -> Result<ScoreSet, PipelineError> {
    let path = dir.join(SCORE_INDEX_FILE);
    let text = fs::read_to_string(&path).map_err(|source| ContainerError::Io { path: path.clone(), source })?;
    let index: ScoreIndex = serde_json::from_str(&text).map_err(|source| PipelineError::Index { path, source })?;
    let mut tables = Vec::with_capacity(index.tables.len());
    for e in index.tables {
        let file = dir.join(&e.file);
        let values = read_array(&file)?.to_matrix_f64()?;
        if values.shape() != (e.rows, 1) {
            return Err(ContainerError::ShapeMismatch {
                context: file.display().to_string(),
                expected: format!("{}x1", e.rows),
                actual: format!("{}x{}", values.rows(), values.cols()),
            }
            .into());
        }
        tables.push(ScoreTable { method: e.method, partition: e.partition, values: values.into_vec() });
    }
    let projector = match index.vim {
        Some(_) => Some(VimProjector::<f64>::read(dir)?),
        None => None,
    };
    Ok(ScoreSet {
        model_id: index.model_id,
        config: index.config,
        class_mask_size: index.class_mask_size,
        projector,
        tables,
    })
}

/// Model-specific labeling of every partition, in bundle order.
pub fn label_bundle(bundle: &Bundle) -> Result<Vec<MsLabeling>, PipelineError> {
    bundle
        .partitions
        .iter()
        .map(|p| {
            assign_ms_labels(p.role, &p.logits, p.labels.as_deref(), bundle.class_mask.as_ref())
                .map_err(|source| PipelineError::Labeling { partition: p.name.clone(), source })
        })
        .collect()
}

/// Pair each partition's labeling with its `method` scores.
pub fn scored_partitions<'a>(
    bundle: &'a Bundle,
    labelings: &'a [MsLabeling],
    scores: &'a ScoreSet,
    method: Method,
) -> Result<Vec<ScoredPartition<'a>>, PipelineError> {
    bundle
        .partitions
        .iter()
        .zip(labelings)
        .map(|(p, labeling)| {
            let values = scores
                .get(method, &p.name)
                .ok_or_else(|| PipelineError::MissingScores { method, partition: p.name.clone() })?;
            Ok(ScoredPartition { name: &p.name, labeling, scores: values })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// One report per (method, framework), method-major.
    pub reports: Vec<MetricReport>,
    /// One TPR(ID)-vs-TPR(ID+) comparison per method.
    pub paired: Vec<PairedSoodComparison>,
}

pub fn evaluate_scores(
    bundle: &Bundle,
    scores: &ScoreSet,
    frameworks: &[FrameworkKind],
    target_tpr: f64,
) -> Result<Evaluation, PipelineError> {
    if scores.model_id != bundle.model_id {
        return Err(PipelineError::ModelMismatch { scores: scores.model_id.clone(), bundle: bundle.model_id.clone() });
    }
    let has_cood = bundle.partitions.iter().any(|p| p.role == Role::Cood);
    if let Some(&framework) = frameworks.iter().find(|f| f.requires_cood() && !has_cood) {
        return Err(FrameworkError::MissingPartition { framework, role: Role::Cood }.into());
    }
    let labelings = label_bundle(bundle)?;
    let mut out = Evaluation { reports: Vec::new(), paired: Vec::new() };
    for method in scores.methods() {
        let parts = scored_partitions(bundle, &labelings, scores, method)?;
        let ctx = ReportContext { model_id: bundle.model_id.clone(), method, config: scores.config_echo() };
        for &kind in frameworks {
            out.reports.push(evaluate_framework(kind, &ctx, &parts, target_tpr)?);
        }
        out.paired.push(paired_sood_comparison(&ctx, &parts, target_tpr)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{gen_fixture, FixtureSpec};

    #[test]
    fn scores_round_trip_through_disk() {
        let bundle = gen_fixture(&FixtureSpec::small(3)).unwrap();
        let set = score_bundle(&bundle, &ScoreConfig::default()).unwrap();
        assert_eq!(set.tables.len(), Method::ALL.len() * bundle.partitions.len());
        let dir = tempfile::tempdir().unwrap();
        write_scores(&set, dir.path()).unwrap();
        assert_eq!(read_scores(dir.path()).unwrap(), set);
    }

    #[test]
    fn missing_inputs_are_reported() {
        let mut bundle = gen_fixture(&FixtureSpec::small(3)).unwrap();
        bundle.train_features = None;
        let cfg = ScoreConfig { methods: vec![Method::Vim], ..Default::default() };
        assert!(matches!(score_bundle(&bundle, &cfg), Err(PipelineError::MissingTrainFeatures)));
        bundle.partitions[1].features = None;
        let cfg = ScoreConfig { methods: vec![Method::Gradnorm], ..Default::default() };
        assert!(matches!(score_bundle(&bundle, &cfg), Err(PipelineError::MissingFeatures { .. })));
    }

    #[test]
    fn one_report_per_method_and_framework() {
        let bundle = gen_fixture(&FixtureSpec::small(5)).unwrap();
        let cfg = ScoreConfig { methods: vec![Method::Msp, Method::Energy], ..Default::default() };
        let set = score_bundle(&bundle, &cfg).unwrap();
        let eval = evaluate_scores(&bundle, &set, &FrameworkKind::ALL, 0.95).unwrap();
        assert_eq!(eval.reports.len(), 10);
        assert_eq!(eval.paired.len(), 2);
        assert_eq!(eval.reports[0].config.energy_temperature, Some(1.0));
    }
}
