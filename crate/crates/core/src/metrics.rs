//! Threshold selection and per-subset rates.
//!
//! An example is accepted iff `score > τ`. The threshold is chosen on a
//! reference subset so that at least `k = ceil(target_tpr · N)` reference
//! examples are accepted, and is the largest threshold (among the reference
//! scores and −∞) that does so.

use serde::{Deserialize, Serialize};

use crate::container::Role;
use crate::frameworks::FrameworkKind;
use crate::labeling::{MsLabeling, Subset};
use crate::scoring::Method;

pub const DEFAULT_TARGET_TPR: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("reference subset {0:?} is empty")]
    EmptyReference(Vec<Subset>),
    #[error("target TPR must lie in (0, 1], got {0}")]
    BadTarget(f64),
    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),
    #[error("partition {partition}: {scores} scores for {examples} labeled examples")]
    LengthMismatch { partition: String, scores: usize, examples: usize },
    #[error("precision/recall requires a cood partition, got {0}")]
    NotCood(Role),
}

/// Number of reference examples that must be accepted: the smallest `k` with
/// `k / n >= target_tpr`, evaluated in floating point so that the achieved rate
/// is never reported below the target. Agrees with `ceil(target_tpr · n)`
/// except where the product is off by rounding, e.g. 0.95 · 100.
pub fn required_accepts(n: usize, target_tpr: f64) -> usize {
    let meets = |k: usize| k as f64 / n as f64 >= target_tpr;
    let mut k = ((target_tpr * n as f64).ceil().max(0.0) as usize).min(n);
    while k > 0 && meets(k - 1) {
        k -= 1;
    }
    while k < n && !meets(k) {
        k += 1;
    }
    k
}

fn check_target(target_tpr: f64) -> Result<(), MetricsError> {
    if target_tpr > 0.0 && target_tpr <= 1.0 {
        Ok(())
    } else {
        Err(MetricsError::BadTarget(target_tpr))
    }
}

/// Largest `τ ∈ scores ∪ {−∞}` with `|{g > τ}| ≥ k`, `k` from [`required_accepts`].
///
/// Without ties at the cut this is the `(k+1)`-th largest score. When the
/// `k`-th and `(k+1)`-th scores tie, the threshold drops to the next distinct
/// score below them (or −∞), since ties at τ are rejected.
pub fn select_threshold(reference_scores: &[f64], target_tpr: f64) -> Result<f64, MetricsError> {
    check_target(target_tpr)?;
    if reference_scores.is_empty() {
        return Err(MetricsError::EmptyReference(Vec::new()));
    }
    if let Some(i) = reference_scores.iter().position(|s| s.is_nan()) {
        return Err(MetricsError::NonFiniteScore(i));
    }
    let mut sorted = reference_scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let k = required_accepts(sorted.len(), target_tpr).max(1);
    let kth = sorted[k - 1];
    Ok(sorted[k..].iter().copied().find(|&s| s < kth).unwrap_or(f64::NEG_INFINITY))
}

/// Accepted count over a subset, with the rate left empty when the subset is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rate {
    pub accepted: usize,
    pub total: usize,
}

impl Rate {
    pub fn value(&self) -> Option<f64> {
        (self.total > 0).then(|| self.accepted as f64 / self.total as f64)
    }

    pub fn is_degenerate(&self) -> bool {
        self.total == 0
    }
}

impl Serialize for RateView {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Rate", 3)?;
        st.serialize_field("accepted", &self.0.accepted)?;
        st.serialize_field("total", &self.0.total)?;
        st.serialize_field("rate", &self.0.value())?;
        st.end()
    }
}

/// Serialization wrapper that also emits the derived `rate` field.
struct RateView(Rate);

mod rate_serde {
    use super::*;

    pub fn serialize<S: serde::Serializer>(rate: &Rate, s: S) -> Result<S::Ok, S::Error> {
        RateView(*rate).serialize(s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Rate, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            accepted: usize,
            total: usize,
        }
        let raw = Raw::deserialize(d)?;
        Ok(Rate { accepted: raw.accepted, total: raw.total })
    }
}

mod opt_rate_serde {
    use super::*;

    pub fn serialize<S: serde::Serializer>(rate: &Option<Rate>, s: S) -> Result<S::Ok, S::Error> {
        rate.map(RateView).serialize(s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<Rate>, D::Error> {
        #[derive(Deserialize)]
        struct Wrap(#[serde(with = "rate_serde")] Rate);
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

/// `−∞` is written as the string `"-inf"`; JSON has no infinity literal.
mod threshold_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *t == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(*t)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Str(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("invalid threshold {s:?}"))),
        }
    }
}

/// Fraction of `scores` strictly above `tau`.
pub fn rate_above(scores: &[f64], tau: f64) -> Rate {
    Rate { accepted: scores.iter().filter(|&&g| g > tau).count(), total: scores.len() }
}

/// Precision/recall/F1 for picking C-OOD+ out of a C-OOD partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when a denominator was zero and the affected values were reported as 0.
    pub degenerate: bool,
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { None } else { Some(num as f64 / den as f64) };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let (p, r) = (precision.unwrap_or(0.0), recall.unwrap_or(0.0));
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        Self {
            tp,
            fp,
            fn_,
            precision: p,
            recall: r,
            f1,
            degenerate: precision.is_none() || recall.is_none() || p + r == 0.0,
        }
    }
}

pub fn cood_prf(labeling: &MsLabeling, scores: &[f64], tau: f64) -> Result<Prf, MetricsError> {
    if labeling.role != Role::Cood {
        return Err(MetricsError::NotCood(labeling.role));
    }
    if scores.len() != labeling.len() {
        return Err(MetricsError::LengthMismatch {
            partition: "cood".into(),
            scores: scores.len(),
            examples: labeling.len(),
        });
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&g, &s) in scores.iter().zip(&labeling.subset) {
        match (g > tau, s) {
            (true, Subset::CoodPos) => tp += 1,
            (true, Subset::CoodNeg) => fp += 1,
            (false, Subset::CoodPos) => fn_ += 1,
            _ => {}
        }
    }
    Ok(Prf::from_counts(tp, fp, fn_))
}

/// Which subsets the threshold is calibrated on, and at what TPR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub reference: Vec<Subset>,
    pub target_tpr: f64,
}

impl ThresholdSpec {
    /// TPR(ID+) reference.
    pub fn id_pos(target_tpr: f64) -> Self {
        Self { reference: vec![Subset::IdPos], target_tpr }
    }

    /// TPR(ID) reference: correct and misclassified ID together.
    pub fn id(target_tpr: f64) -> Self {
        Self { reference: vec![Subset::IdPos, Subset::IdNeg], target_tpr }
    }

    /// TPR over ID and C-OOD together.
    pub fn id_and_cood(target_tpr: f64) -> Self {
        Self { reference: vec![Subset::IdPos, Subset::IdNeg, Subset::CoodPos, Subset::CoodNeg], target_tpr }
    }
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        Self::id_pos(DEFAULT_TARGET_TPR)
    }
}

/// One partition's labeling paired with one method's scores.
#[derive(Debug, Clone, Copy)]
pub struct ScoredPartition<'a> {
    pub name: &'a str,
    pub labeling: &'a MsLabeling,
    pub scores: &'a [f64],
}

/// Settings echoed into every report so it is self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub odin_temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vim_principal_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vim_centering: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vim_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_mask_size: Option<usize>,
    pub acceptance_rule: String,
    pub threshold_rule: String,
    pub argmax_ties: String,
}

impl Default for ConfigEcho {
    fn default() -> Self {
        Self {
            energy_temperature: None,
            odin_temperature: None,
            vim_principal_dim: None,
            vim_centering: None,
            vim_alpha: None,
            class_mask_size: None,
            acceptance_rule: "accept iff score > threshold".into(),
            threshold_rule:
                "k = ceil(target_tpr * N_ref); threshold = largest value in reference scores or -inf accepting >= k"
                    .into(),
            argmax_ties: "lowest class index".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IdMetrics {
    #[serde(default, with = "opt_rate_serde", skip_serializing_if = "Option::is_none")]
    pub tpr_id_pos: Option<Rate>,
    #[serde(default, with = "opt_rate_serde", skip_serializing_if = "Option::is_none")]
    pub fpr_id_neg: Option<Rate>,
    /// Acceptance over all ID examples (the conventional TPR(ID)).
    #[serde(default, with = "opt_rate_serde", skip_serializing_if = "Option::is_none")]
    pub tpr_id: Option<Rate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoodMetrics {
    pub partition: String,
    #[serde(default, with = "opt_rate_serde", skip_serializing_if = "Option::is_none")]
    pub tpr_cood_pos: Option<Rate>,
    #[serde(default, with = "opt_rate_serde", skip_serializing_if = "Option::is_none")]
    pub fpr_cood_neg: Option<Rate>,
    /// All C-OOD treated as should-reject.
    #[serde(default, with = "opt_rate_serde", skip_serializing_if = "Option::is_none")]
    pub fpr_cood: Option<Rate>,
    /// All C-OOD treated as should-accept.
    #[serde(default, with = "opt_rate_serde", skip_serializing_if = "Option::is_none")]
    pub tpr_cood: Option<Rate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prf: Option<Prf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoodMetrics {
    pub partition: String,
    #[serde(with = "rate_serde")]
    pub fpr: Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionAccuracy {
    pub partition: String,
    /// `None` for an empty partition.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Accuracies {
    pub id: Option<f64>,
    pub cood: Vec<PartitionAccuracy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model_id: String,
    pub method: Method,
    /// `None` when every metric is populated rather than one framework's selection.
    pub framework: Option<FrameworkKind>,
    pub target_tpr: f64,
    pub reference: Vec<Subset>,
    #[serde(with = "threshold_serde")]
    pub threshold: f64,
    #[serde(with = "rate_serde")]
    pub reference_rate: Rate,
    pub id: IdMetrics,
    pub cood: Vec<CoodMetrics>,
    pub sood: Vec<SoodMetrics>,
    pub accuracy: Accuracies,
    pub config: ConfigEcho,
}

impl MetricReport {
    pub fn sood_fpr(&self, partition: &str) -> Option<f64> {
        self.sood.iter().find(|s| s.partition == partition).and_then(|s| s.fpr.value())
    }

    /// Mean FPR over all S-OOD partitions with a defined rate.
    pub fn mean_sood_fpr(&self) -> Option<f64> {
        let values: Vec<f64> = self.sood.iter().filter_map(|s| s.fpr.value()).collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }

    pub fn cood_metrics(&self, partition: &str) -> Option<&CoodMetrics> {
        self.cood.iter().find(|c| c.partition == partition)
    }

    pub fn cood_accuracy(&self, partition: &str) -> Option<f64> {
        self.accuracy.cood.iter().find(|a| a.partition == partition).and_then(|a| a.accuracy)
    }
}

/// Identification of the model and method a report belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportContext {
    pub model_id: String,
    pub method: Method,
    pub config: ConfigEcho,
}

fn accuracy_of(count_pos: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| count_pos as f64 / total as f64)
}

/// Select τ on the reference subsets, then compute every subset rate at τ.
pub fn evaluate(
    ctx: &ReportContext,
    partitions: &[ScoredPartition<'_>],
    spec: &ThresholdSpec,
) -> Result<MetricReport, MetricsError> {
    check_target(spec.target_tpr)?;
    for p in partitions {
        if p.scores.len() != p.labeling.len() {
            return Err(MetricsError::LengthMismatch {
                partition: p.name.to_string(),
                scores: p.scores.len(),
                examples: p.labeling.len(),
            });
        }
    }

    let scores_in = |subsets: &[Subset], roles: Option<Role>| -> Vec<f64> {
        partitions
            .iter()
            .filter(|p| roles.is_none_or(|r| p.labeling.role == r))
            .flat_map(|p| p.scores.iter().zip(&p.labeling.subset))
            .filter(|(_, s)| subsets.contains(s))
            .map(|(&g, _)| g)
            .collect()
    };

    let reference = scores_in(&spec.reference, None);
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference(spec.reference.clone()));
    }
    let threshold = select_threshold(&reference, spec.target_tpr)?;

    let id_pos = scores_in(&[Subset::IdPos], None);
    let id_neg = scores_in(&[Subset::IdNeg], None);
    let id = IdMetrics {
        tpr_id_pos: Some(rate_above(&id_pos, threshold)),
        fpr_id_neg: Some(rate_above(&id_neg, threshold)),
        tpr_id: Some(rate_above(&scores_in(&[Subset::IdPos, Subset::IdNeg], None), threshold)),
    };

    let mut cood = Vec::new();
    let mut cood_acc = Vec::new();
    let mut sood = Vec::new();
    for p in partitions {
        match p.labeling.role {
            Role::Id => {}
            Role::Cood => {
                let single = [*p];
                let pos = scores_in_partition(&single, Subset::CoodPos);
                let neg = scores_in_partition(&single, Subset::CoodNeg);
                let all = rate_above(p.scores, threshold);
                cood.push(CoodMetrics {
                    partition: p.name.to_string(),
                    tpr_cood_pos: Some(rate_above(&pos, threshold)),
                    fpr_cood_neg: Some(rate_above(&neg, threshold)),
                    fpr_cood: Some(all),
                    tpr_cood: Some(all),
                    prf: Some(cood_prf(p.labeling, p.scores, threshold)?),
                });
                cood_acc.push(PartitionAccuracy {
                    partition: p.name.to_string(),
                    accuracy: accuracy_of(p.labeling.accepted_count(), p.labeling.len()),
                });
            }
            Role::Sood => {
                sood.push(SoodMetrics { partition: p.name.to_string(), fpr: rate_above(p.scores, threshold) })
            }
        }
    }

    Ok(MetricReport {
        model_id: ctx.model_id.clone(),
        method: ctx.method,
        framework: None,
        target_tpr: spec.target_tpr,
        reference: spec.reference.clone(),
        threshold,
        reference_rate: rate_above(&reference, threshold),
        id,
        cood,
        sood,
        accuracy: Accuracies { id: accuracy_of(id_pos.len(), id_pos.len() + id_neg.len()), cood: cood_acc },
        config: ctx.config.clone(),
    })
}

fn scores_in_partition(partitions: &[ScoredPartition<'_>], subset: Subset) -> Vec<f64> {
    partitions
        .iter()
        .flat_map(|p| p.scores.iter().zip(&p.labeling.subset))
        .filter(|(_, &s)| s == subset)
        .map(|(&g, _)| g)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeling(role: Role, subsets: &[Subset]) -> MsLabeling {
        MsLabeling {
            role,
            z: subsets.iter().map(|s| s.z()).collect(),
            subset: subsets.to_vec(),
            predicted_class: vec![0; subsets.len()],
        }
    }

    fn ctx() -> ReportContext {
        ReportContext { model_id: "m".into(), method: Method::Msp, config: ConfigEcho::default() }
    }

    #[test]
    fn one_to_twenty_at_95() {
        let scores: Vec<f64> = (1..=20).map(f64::from).collect();
        let tau = select_threshold(&scores, 0.95).unwrap();
        assert_eq!(tau, 1.0);
        assert_eq!(rate_above(&scores, tau).value(), Some(0.95));
    }

    #[test]
    fn ties_and_boundaries() {
        assert_eq!(select_threshold(&[0.3; 10], 0.95).unwrap(), f64::NEG_INFINITY);
        assert_eq!(select_threshold(&[0.3], 0.95).unwrap(), f64::NEG_INFINITY);
        // k = 2 with s2 = s3: τ must drop below the tie
        assert_eq!(select_threshold(&[5.0, 4.0, 4.0, 1.0], 0.5).unwrap(), 1.0);
        assert_eq!(select_threshold(&[5.0, 4.0, 3.0], 1.0).unwrap(), f64::NEG_INFINITY);
        assert!(matches!(select_threshold(&[], 0.95), Err(MetricsError::EmptyReference(_))));
        assert_eq!(select_threshold(&[1.0], 0.0), Err(MetricsError::BadTarget(0.0)));
        assert_eq!(select_threshold(&[1.0], 1.5), Err(MetricsError::BadTarget(1.5)));
        assert_eq!(select_threshold(&[1.0, f64::NAN], 0.5), Err(MetricsError::NonFiniteScore(1)));
    }

    #[test]
    fn required_accepts_handles_decimal_targets() {
        assert_eq!(required_accepts(100, 0.95), 95);
        assert_eq!(required_accepts(20, 0.95), 19);
        assert_eq!(required_accepts(21, 0.95), 20);
        assert_eq!(required_accepts(1, 0.95), 1);
        assert_eq!(required_accepts(1000, 0.9), 900);
    }

    #[test]
    fn rate_above_basics() {
        assert_eq!(rate_above(&[0.1, 0.9], 0.5).value(), Some(0.5));
        assert_eq!(rate_above(&[0.1, 0.9], f64::NEG_INFINITY).value(), Some(1.0));
        assert_eq!(rate_above(&[0.1, 0.9], f64::INFINITY).value(), Some(0.0));
        let empty = rate_above(&[], 0.0);
        assert!(empty.is_degenerate() && empty.value().is_none());
    }

    #[test]
    fn prf_counting() {
        // 10 cood_pos (8 accepted), 2 cood_neg (both accepted)
        let mut subsets = vec![Subset::CoodPos; 10];
        subsets.extend([Subset::CoodNeg; 2]);
        let l = labeling(Role::Cood, &subsets);
        let mut scores = vec![1.0; 8];
        scores.extend([-1.0, -1.0, 1.0, 1.0]);
        let prf = cood_prf(&l, &scores, 0.0).unwrap();
        assert_eq!((prf.tp, prf.fp, prf.fn_), (8, 2, 2));
        assert!(
            (prf.precision - 0.8).abs() < 1e-15 && (prf.recall - 0.8).abs() < 1e-15 && (prf.f1 - 0.8).abs() < 1e-15
        );
        assert!(!prf.degenerate);

        let none = cood_prf(&l, &vec![-1.0; 12], 0.0).unwrap();
        assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));
        assert!(none.degenerate);

        let id = labeling(Role::Id, &[Subset::IdPos]);
        assert_eq!(cood_prf(&id, &[1.0], 0.0), Err(MetricsError::NotCood(Role::Id)));
    }

    #[test]
    fn separated_id_neg_has_zero_fpr() {
        let mut subsets = vec![Subset::IdPos; 20];
        subsets.extend([Subset::IdNeg; 5]);
        let l = labeling(Role::Id, &subsets);
        let mut scores: Vec<f64> = (10..30).map(f64::from).collect();
        scores.extend([1.0, 2.0, 3.0, 4.0, 5.0]);
        let p = [ScoredPartition { name: "id", labeling: &l, scores: &scores }];
        let r = evaluate(&ctx(), &p, &ThresholdSpec::id_pos(0.95)).unwrap();
        assert_eq!(r.threshold, 10.0);
        assert_eq!(r.id.fpr_id_neg.unwrap().value(), Some(0.0));
        assert_eq!(r.id.tpr_id_pos.unwrap().value(), Some(0.95));
        assert_eq!(r.accuracy.id, Some(0.8));
    }

    #[test]
    fn sood_matching_id_pos_tracks_tpr() {
        let l = labeling(Role::Id, &[Subset::IdPos; 40]);
        let s = labeling(Role::Sood, &[Subset::Sood; 40]);
        let scores: Vec<f64> = (0..40).map(|i| f64::from(i) * 0.25).collect();
        let p = [
            ScoredPartition { name: "id", labeling: &l, scores: &scores },
            ScoredPartition { name: "s", labeling: &s, scores: &scores },
        ];
        let r = evaluate(&ctx(), &p, &ThresholdSpec::default()).unwrap();
        assert_eq!(r.sood_fpr("s"), r.id.tpr_id_pos.unwrap().value());
        assert_eq!(r.sood_fpr("s"), Some(0.95));
    }

    #[test]
    fn empty_reference_is_an_error() {
        let l = labeling(Role::Id, &[Subset::IdNeg; 3]);
        let p = [ScoredPartition { name: "id", labeling: &l, scores: &[1.0, 2.0, 3.0] }];
        assert!(matches!(evaluate(&ctx(), &p, &ThresholdSpec::id_pos(0.95)), Err(MetricsError::EmptyReference(_))));
    }

    #[test]
    fn report_json_round_trip_with_infinite_threshold() {
        let l = labeling(Role::Id, &[Subset::IdPos; 2]);
        let p = [ScoredPartition { name: "id", labeling: &l, scores: &[1.0, 1.0] }];
        let r = evaluate(&ctx(), &p, &ThresholdSpec::id_pos(0.95)).unwrap();
        assert_eq!(r.threshold, f64::NEG_INFINITY);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"threshold\":\"-inf\""), "{json}");
        assert!(json.contains("\"rate\":1.0"), "{json}");
        let back: MetricReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
