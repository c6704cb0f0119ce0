//! Synthetic bundles in a linear-head world, plus brute-force oracles.
//!
//! # Generator
//!
//! All randomness comes from one SplitMix64 stream seeded with `spec.seed`
//! (state = seed, `next = mix(state += 0x9e3779b97f4a7c15)`). Derived values:
//!
//! - uniform in `[0, 1)`: `(next >> 11) · 2⁻⁵³`
//! - standard normal: `u1 = ((next >> 11) + 1) · 2⁻⁵³`, `u2 = (next >> 11) · 2⁻⁵³`,
//!   `sqrt(−2 ln u1) · cos(2π u2)`; one normal per two draws, `ln`/`cos` from `libm`
//!
//! Draw order: class centers (`C × d` normals, each row rescaled to length
//! `separation`), then training rows, then ID rows, then each C-OOD partition,
//! then each S-OOD partition, in spec order. Row `i` of every labeled
//! partition belongs to class `i mod C`; each feature is
//! `center + offset + noise · normal`, drawn coordinate by coordinate.
//!
//! The head is `W = centers`, `b_c = −‖μ_c‖² / 2`, so the argmax of
//! `W·z + b` is the nearest center.

use std::collections::BTreeMap;

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::container::{Bundle, PartitionData, Role};
use crate::head::LinearHead;
use crate::matrix::Matrix;

/// The fixture's random stream.
#[derive(Debug, Clone)]
pub struct FixtureRng(SplitMix64);

impl FixtureRng {
    pub fn new(seed: u64) -> Self {
        Self(SplitMix64::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * std::f64::consts::PI * u2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixturePartition {
    pub name: String,
    pub size: usize,
    /// Replaces the spec-level offset for this partition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<f64>>,
}

impl FixturePartition {
    pub fn new(name: &str, size: usize) -> Self {
        Self { name: name.into(), size, offset: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub seed: u64,
    #[serde(default = "default_model_id")]
    pub model_id: String,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub id_size: usize,
    #[serde(default)]
    pub cood: Vec<FixturePartition>,
    #[serde(default)]
    pub sood: Vec<FixturePartition>,
    #[serde(default)]
    pub train_size: usize,
    pub separation: f64,
    pub noise: f64,
    /// Added to C-OOD features; empty means zero.
    #[serde(default)]
    pub cood_shift: Vec<f64>,
    /// Center of S-OOD features; empty means the origin.
    #[serde(default)]
    pub sood_offset: Vec<f64>,
}

fn default_model_id() -> String {
    "synthetic".into()
}

impl FixtureSpec {
    /// A small fixture with one partition of each role.
    pub fn small(seed: u64) -> Self {
        let d = 16;
        Self {
            seed,
            model_id: default_model_id(),
            num_classes: 5,
            feature_dim: d,
            id_size: 300,
            cood: vec![FixturePartition::new("cood", 200)],
            sood: vec![FixturePartition::new("sood", 200)],
            train_size: 400,
            separation: 3.0,
            noise: 1.0,
            cood_shift: vec![0.4; d],
            sood_offset: vec![0.0; d],
        }
    }

    pub fn validate(&self) -> Result<(), FixtureError> {
        if self.num_classes < 2 {
            return Err(FixtureError::Invalid(format!("num_classes must be >= 2, got {}", self.num_classes)));
        }
        if self.feature_dim == 0 {
            return Err(FixtureError::Invalid("feature_dim must be > 0".into()));
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return Err(FixtureError::Invalid(format!("separation must be finite and >= 0, got {}", self.separation)));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(FixtureError::Invalid(format!("noise must be finite and >= 0, got {}", self.noise)));
        }
        let check_offset = |what: &str, v: &[f64]| {
            if !v.is_empty() && v.len() != self.feature_dim {
                return Err(FixtureError::Invalid(format!(
                    "{what} has length {}, expected {}",
                    v.len(),
                    self.feature_dim
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(FixtureError::Invalid(format!("{what} has non-finite entries")));
            }
            Ok(())
        };
        check_offset("cood_shift", &self.cood_shift)?;
        check_offset("sood_offset", &self.sood_offset)?;
        let mut names = vec!["id"];
        for p in self.cood.iter().chain(&self.sood) {
            if let Some(o) = &p.offset {
                check_offset(&format!("offset of {}", p.name), o)?;
            }
            if names.contains(&p.name.as_str()) {
                return Err(FixtureError::Invalid(format!("duplicate partition name {:?}", p.name)));
            }
            names.push(&p.name);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FixtureError {
    #[error("invalid fixture spec: {0}")]
    Invalid(String),
}

fn sample_rows(
    rng: &mut FixtureRng,
    n: usize,
    centers: Option<&Matrix<f64>>,
    offset: &[f64],
    noise: f64,
) -> Matrix<f64> {
    let d = offset.len();
    let mut out = Matrix::zeros(n, d);
    for i in 0..n {
        let center = centers.map(|c| c.row(i % c.rows()));
        for j in 0..d {
            let base = center.map_or(0.0, |c| c[j]) + offset[j];
            out.set(i, j, base + noise * rng.normal());
        }
    }
    out
}

pub fn gen_fixture(spec: &FixtureSpec) -> Result<Bundle, FixtureError> {
    spec.validate()?;
    let (c, d) = (spec.num_classes, spec.feature_dim);
    let mut rng = FixtureRng::new(spec.seed);
    let or_zero = |v: &[f64]| if v.is_empty() { vec![0.0; d] } else { v.to_vec() };

    let mut centers = Matrix::zeros(c, d);
    for k in 0..c {
        let g: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (j, x) in g.iter().enumerate() {
            let unit = if norm > 0.0 {
                x / norm
            } else if j == k % d {
                1.0
            } else {
                0.0
            };
            centers.set(k, j, spec.separation * unit);
        }
    }
    let bias = centers.iter_rows().map(|mu| -0.5 * mu.iter().map(|x| x * x).sum::<f64>()).collect();
    let head = LinearHead::new(centers.clone(), bias).expect("bias matches class count");

    let zero = vec![0.0; d];
    let train = sample_rows(&mut rng, spec.train_size, Some(&centers), &zero, spec.noise);
    let labels = |n: usize| (0..n).map(|i| (i % c) as i64).collect::<Vec<_>>();
    let partition = |name: &str, role: Role, features: Matrix<f64>, labeled: bool| PartitionData {
        name: name.to_string(),
        role,
        logits: head.logits(&features).expect("feature width matches head"),
        labels: labeled.then(|| labels(features.rows())),
        features: Some(features),
    };

    let mut partitions = Vec::new();
    let id = sample_rows(&mut rng, spec.id_size, Some(&centers), &zero, spec.noise);
    partitions.push(partition("id", Role::Id, id, true));
    let shift = or_zero(&spec.cood_shift);
    for p in &spec.cood {
        let offset = p.offset.clone().unwrap_or_else(|| shift.clone());
        let x = sample_rows(&mut rng, p.size, Some(&centers), &offset, spec.noise);
        partitions.push(partition(&p.name, Role::Cood, x, true));
    }
    let sood_offset = or_zero(&spec.sood_offset);
    for p in &spec.sood {
        let offset = p.offset.clone().unwrap_or_else(|| sood_offset.clone());
        let x = sample_rows(&mut rng, p.size, None, &offset, spec.noise);
        partitions.push(partition(&p.name, Role::Sood, x, false));
    }

    let mut extra = BTreeMap::new();
    extra.insert("fixture".to_string(), serde_json::to_value(spec).expect("spec serializes"));
    Ok(Bundle {
        model_id: spec.model_id.clone(),
        num_classes: c,
        feature_dim: d,
        class_mask: None,
        partitions,
        head: Some(head),
        train_features: (spec.train_size > 0).then_some(train),
        extra,
    })
}

/// Brute-force references. Nothing here calls into scoring, labeling or metrics code.
pub mod oracle {
    use crate::container::{Bundle, Role};
    use crate::labeling::Subset;
    use crate::metrics::{
        Accuracies, CoodMetrics, IdMetrics, MetricReport, PartitionAccuracy, Prf, Rate, ReportContext, SoodMetrics,
        ThresholdSpec,
    };

    pub const GRADNORM_STEP: f64 = 1e-5;

    /// `(1/C) Σ_c −log softmax(l)_c`.
    pub fn mean_cross_entropy(logits: &[f64]) -> f64 {
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        logits.iter().map(|l| lse - l).sum::<f64>() / logits.len() as f64
    }

    /// L1 norm of the mean cross-entropy gradient w.r.t. a linear head's weights,
    /// each of the `C × d` entries by central differences. Nudging `W[c][j]` by
    /// `h` moves logit `c` by `h · z_j`.
    pub fn oracle_gradnorm(logits: &[f64], feature: &[f64]) -> f64 {
        let h = GRADNORM_STEP;
        let mut work = logits.to_vec();
        let mut total = 0.0;
        for c in 0..logits.len() {
            for &zj in feature {
                work[c] = logits[c] + h * zj;
                let up = mean_cross_entropy(&work);
                work[c] = logits[c] - h * zj;
                let down = mean_cross_entropy(&work);
                work[c] = logits[c];
                total += ((up - down) / (2.0 * h)).abs();
            }
        }
        total
    }

    /// Largest candidate in `scores ∪ {−∞}` whose acceptance fraction reaches the target.
    pub fn oracle_threshold(scores: &[f64], target_tpr: f64) -> f64 {
        let n = scores.len() as f64;
        let admissible = |t: f64| scores.iter().filter(|&&g| g > t).count() as f64 / n >= target_tpr;
        let mut best = f64::NEG_INFINITY;
        for &t in scores {
            if t > best && admissible(t) {
                best = t;
            }
        }
        best
    }

    fn argmax(row: &[f64], allowed: &dyn Fn(usize) -> bool) -> usize {
        let mut best: Option<usize> = None;
        for c in 0..row.len() {
            if allowed(c) && best.is_none_or(|b| row[c] > row[b]) {
                best = Some(c);
            }
        }
        best.expect("at least one allowed class")
    }

    fn subsets_of(bundle: &Bundle) -> Vec<Vec<Subset>> {
        let allowed = |c: usize| bundle.class_mask.as_ref().is_none_or(|m| m.contains(c));
        bundle
            .partitions
            .iter()
            .map(|p| {
                (0..p.len())
                    .map(|i| {
                        let correct =
                            p.labels.as_ref().is_some_and(|y| y[i] == argmax(p.logits.row(i), &allowed) as i64);
                        match (p.role, correct) {
                            (Role::Id, true) => Subset::IdPos,
                            (Role::Id, false) => Subset::IdNeg,
                            (Role::Cood, true) => Subset::CoodPos,
                            (Role::Cood, false) => Subset::CoodNeg,
                            (Role::Sood, _) => Subset::Sood,
                        }
                    })
                    .collect()
            })
            .collect()
    }

    fn count(parts: &[(&[Subset], &[f64])], wanted: &[Subset], tau: f64) -> Rate {
        let mut rate = Rate { accepted: 0, total: 0 };
        for (subsets, scores) in parts {
            for i in 0..subsets.len() {
                if wanted.contains(&subsets[i]) {
                    rate.total += 1;
                    if scores[i] > tau {
                        rate.accepted += 1;
                    }
                }
            }
        }
        rate
    }

    /// Every report field by literal enumeration at the given threshold.
    /// `scores[i]` belongs to `bundle.partitions[i]`.
    pub fn oracle_metrics(
        bundle: &Bundle,
        scores: &[Vec<f64>],
        tau: f64,
        spec: &ThresholdSpec,
        ctx: &ReportContext,
    ) -> MetricReport {
        let subsets = subsets_of(bundle);
        let all: Vec<(&[Subset], &[f64])> =
            subsets.iter().map(|s| s.as_slice()).zip(scores.iter().map(|s| s.as_slice())).collect();
        let ratio = |a: usize, b: usize| if b == 0 { None } else { Some(a as f64 / b as f64) };

        let id_pos = count(&all, &[Subset::IdPos], tau);
        let id_neg = count(&all, &[Subset::IdNeg], tau);
        let mut cood = Vec::new();
        let mut cood_acc = Vec::new();
        let mut sood = Vec::new();
        for (i, p) in bundle.partitions.iter().enumerate() {
            let one = [all[i]];
            match p.role {
                Role::Id => {}
                Role::Cood => {
                    let pos = count(&one, &[Subset::CoodPos], tau);
                    let neg = count(&one, &[Subset::CoodNeg], tau);
                    let both = count(&one, &[Subset::CoodPos, Subset::CoodNeg], tau);
                    let (tp, fp, fn_) = (pos.accepted, neg.accepted, pos.total - pos.accepted);
                    let precision = ratio(tp, tp + fp);
                    let recall = ratio(tp, tp + fn_);
                    let (pr, rc) = (precision.unwrap_or(0.0), recall.unwrap_or(0.0));
                    let f1 = if pr + rc > 0.0 { 2.0 * pr * rc / (pr + rc) } else { 0.0 };
                    cood.push(CoodMetrics {
                        partition: p.name.clone(),
                        tpr_cood_pos: Some(pos),
                        fpr_cood_neg: Some(neg),
                        fpr_cood: Some(both),
                        tpr_cood: Some(both),
                        prf: Some(Prf {
                            tp,
                            fp,
                            fn_,
                            precision: pr,
                            recall: rc,
                            f1,
                            degenerate: precision.is_none() || recall.is_none() || pr + rc == 0.0,
                        }),
                    });
                    cood_acc
                        .push(PartitionAccuracy { partition: p.name.clone(), accuracy: ratio(pos.total, both.total) });
                }
                Role::Sood => {
                    sood.push(SoodMetrics { partition: p.name.clone(), fpr: count(&one, &[Subset::Sood], tau) })
                }
            }
        }

        MetricReport {
            model_id: ctx.model_id.clone(),
            method: ctx.method,
            framework: None,
            target_tpr: spec.target_tpr,
            reference: spec.reference.clone(),
            threshold: tau,
            reference_rate: count(&all, &spec.reference, tau),
            id: IdMetrics {
                tpr_id_pos: Some(id_pos),
                fpr_id_neg: Some(id_neg),
                tpr_id: Some(count(&all, &[Subset::IdPos, Subset::IdNeg], tau)),
            },
            cood,
            sood,
            accuracy: Accuracies { id: ratio(id_pos.total, id_pos.total + id_neg.total), cood: cood_acc },
            config: ctx.config.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::*;
    use super::*;
    use crate::labeling::{accuracy, assign_ms_labels};

    fn acc(b: &Bundle, name: &str) -> f64 {
        let p = b.partition(name).unwrap();
        accuracy(&assign_ms_labels(p.role, &p.logits, p.labels.as_deref(), None).unwrap()).unwrap()
    }

    #[test]
    fn same_seed_same_bundle() {
        let a = gen_fixture(&FixtureSpec::small(42)).unwrap();
        let b = gen_fixture(&FixtureSpec::small(42)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_fixture(&FixtureSpec::small(43)).unwrap());
    }

    #[test]
    fn first_draws_are_pinned() {
        // splitmix64 reference outputs for seed 0
        let mut rng = FixtureRng::new(0);
        assert_eq!(rng.next_u64(), 0xe220a8397b1dcdaf);
        assert_eq!(rng.next_u64(), 0x6e789e6aa1b965f4);
    }

    #[test]
    fn noiseless_fixture_is_fully_correct() {
        let mut spec = FixtureSpec::small(7);
        spec.noise = 0.0;
        spec.separation = 1e3;
        let b = gen_fixture(&spec).unwrap();
        assert_eq!(acc(&b, "id"), 1.0);
    }

    #[test]
    fn zero_shift_cood_matches_id_accuracy() {
        let mut spec = FixtureSpec::small(11);
        spec.id_size = 5000;
        spec.cood[0].size = 5000;
        spec.cood_shift.clear();
        spec.separation = 2.0;
        let b = gen_fixture(&spec).unwrap();
        let (a_id, a_cood) = (acc(&b, "id"), acc(&b, "cood"));
        assert!(a_id > 0.2 && a_id < 0.99, "{a_id}");
        // two-proportion standard error at p ≈ 0.5, n = 5000 is ≈ 0.01
        assert!((a_id - a_cood).abs() < 0.04, "{a_id} vs {a_cood}");
    }

    #[test]
    fn invalid_specs() {
        let mut s = FixtureSpec::small(1);
        s.num_classes = 1;
        assert!(gen_fixture(&s).is_err());
        let mut s = FixtureSpec::small(1);
        s.cood_shift = vec![1.0; 3];
        assert!(gen_fixture(&s).is_err());
        let mut s = FixtureSpec::small(1);
        s.sood[0].name = "cood".into();
        assert!(gen_fixture(&s).is_err());
        let mut s = FixtureSpec::small(1);
        s.noise = -1.0;
        assert!(gen_fixture(&s).is_err());
    }

    #[test]
    fn gradnorm_oracle_examples() {
        assert!(oracle_gradnorm(&[0.3; 6], &[1.0, -4.0, 2.5]).abs() < 1e-8);
        assert!((oracle_gradnorm(&[50.0, -50.0], &[1.0, -2.0, 3.0]) - 6.0).abs() < 1e-3);
    }

    #[test]
    fn threshold_oracle_examples() {
        let s: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(oracle_threshold(&s, 0.95), 1.0);
        assert_eq!(oracle_threshold(&[2.0; 5], 0.95), f64::NEG_INFINITY);
    }
}
