//! Analysis artifacts: metric tables, per-subset histograms, top/bottom-k
//! listings and scatter points. Everything is emitted as CSV or JSON data.
//!
//! Floats are written with Rust's shortest round-trip formatting; undefined
//! values (empty subsets) are written as empty CSV cells or JSON `null`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::frameworks::{FrameworkKind, PairedSoodComparison};
use crate::labeling::Subset;
use crate::metrics::{MetricReport, ScoredPartition};
use crate::scoring::Method;

pub const DEFAULT_BINS: usize = 50;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("histograms need at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("no scores to bin")]
    NoScores,
    #[error("non-finite score in partition {partition} at index {index}")]
    NonFiniteScore { partition: String, index: usize },
    #[error("k = {k} exceeds the {size} examples in partition {partition}")]
    KTooLarge { k: usize, size: usize, partition: String },
    #[error("report {model_id}/{method}: {what} is not available")]
    MissingValue { model_id: String, method: Method, what: String },
    #[error("invalid selector {0:?}")]
    BadSelector(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetHistogram {
    pub subset: Subset,
    pub count: usize,
    pub counts: Vec<usize>,
    /// `counts / count`; sums to 1.
    pub masses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSet {
    /// `bins + 1` shared edges. Bin `i` is `[edges[i], edges[i+1])`, the last bin is closed.
    pub edges: Vec<f64>,
    pub subsets: Vec<SubsetHistogram>,
    /// Subsets with no examples; left out of `subsets`.
    pub empty_subsets: Vec<Subset>,
}

/// Equal-width edges over the pooled score range, normalized per subset.
pub fn emit_histograms(partitions: &[ScoredPartition<'_>], bins: usize) -> Result<HistogramSet, ReportError> {
    if bins < 2 {
        return Err(ReportError::TooFewBins(bins));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in partitions {
        for (index, &g) in p.scores.iter().enumerate() {
            if !g.is_finite() {
                return Err(ReportError::NonFiniteScore { partition: p.name.to_string(), index });
            }
            lo = lo.min(g);
            hi = hi.max(g);
        }
    }
    if lo > hi {
        return Err(ReportError::NoScores);
    }
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + width * i as f64).collect();
    edges.push(hi);

    let mut counts = [(); 5].map(|_| vec![0usize; bins]);
    for p in partitions {
        for (&g, &s) in p.scores.iter().zip(&p.labeling.subset) {
            let bin = (edges.partition_point(|&e| e <= g) - 1).min(bins - 1);
            counts[subset_slot(s)][bin] += 1;
        }
    }

    let mut subsets = Vec::new();
    let mut empty_subsets = Vec::new();
    for s in Subset::ALL {
        let c = std::mem::take(&mut counts[subset_slot(s)]);
        let total: usize = c.iter().sum();
        if total == 0 {
            empty_subsets.push(s);
            continue;
        }
        let masses = c.iter().map(|&n| n as f64 / total as f64).collect();
        subsets.push(SubsetHistogram { subset: s, count: total, counts: c, masses });
    }
    Ok(HistogramSet { edges, subsets, empty_subsets })
}

fn subset_slot(s: Subset) -> usize {
    Subset::ALL.iter().position(|&t| t == s).expect("every subset is listed")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedExample {
    pub index: usize,
    pub score: f64,
    pub subset: Subset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionExtremes {
    pub partition: String,
    /// Highest scores first.
    pub top: Vec<RankedExample>,
    /// Lowest scores first.
    pub bottom: Vec<RankedExample>,
}

/// The `k` highest- and `k` lowest-scoring examples of each partition; ties go to the lower index.
pub fn emit_topk(partitions: &[ScoredPartition<'_>], k: usize) -> Result<Vec<PartitionExtremes>, ReportError> {
    partitions
        .iter()
        .map(|p| {
            let n = p.scores.len();
            if k > n {
                return Err(ReportError::KTooLarge { k, size: n, partition: p.name.to_string() });
            }
            if let Some(index) = p.scores.iter().position(|g| g.is_nan()) {
                return Err(ReportError::NonFiniteScore { partition: p.name.to_string(), index });
            }
            let entry = |i: usize| RankedExample { index: i, score: p.scores[i], subset: p.labeling.subset[i] };
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| p.scores[b].total_cmp(&p.scores[a]));
            let top = order[..k].iter().map(|&i| entry(i)).collect();
            order.sort_by(|&a, &b| p.scores[a].total_cmp(&p.scores[b]).then(a.cmp(&b)));
            let bottom = order[..k].iter().map(|&i| entry(i)).collect();
            Ok(PartitionExtremes { partition: p.name.to_string(), top, bottom })
        })
        .collect()
}

/// Horizontal axis of a scatter plot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AccuracySelector {
    Id,
    Cood(String),
}

/// Vertical axis of a scatter plot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetricSelector {
    FprIdNeg,
    TprIdPos,
    TprId,
    SoodFpr(String),
    MeanSoodFpr,
    CoodF1(String),
    CoodPrecision(String),
    CoodRecall(String),
    CoodTprPos(String),
    CoodFprNeg(String),
    FprCood(String),
    TprCood(String),
}

impl FromStr for AccuracySelector {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "acc_id" => Ok(Self::Id),
            Some(("acc_cood", name)) if !name.is_empty() => Ok(Self::Cood(name.to_string())),
            _ => Err(ReportError::BadSelector(s.to_string())),
        }
    }
}

impl fmt::Display for AccuracySelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Id => f.write_str("acc_id"),
            Self::Cood(n) => write!(f, "acc_cood:{n}"),
        }
    }
}

impl FromStr for MetricSelector {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ReportError::BadSelector(s.to_string());
        let (key, name) = match s.split_once(':') {
            Some((k, n)) if !n.is_empty() => (k, Some(n.to_string())),
            Some(_) => return Err(bad()),
            None => (s, None),
        };
        Ok(match (key, name) {
            ("fpr_id_neg", None) => Self::FprIdNeg,
            ("tpr_id_pos", None) => Self::TprIdPos,
            ("tpr_id", None) => Self::TprId,
            ("mean_sood_fpr", None) => Self::MeanSoodFpr,
            ("sood_fpr", Some(n)) => Self::SoodFpr(n),
            ("f1", Some(n)) => Self::CoodF1(n),
            ("precision", Some(n)) => Self::CoodPrecision(n),
            ("recall", Some(n)) => Self::CoodRecall(n),
            ("tpr_cood_pos", Some(n)) => Self::CoodTprPos(n),
            ("fpr_cood_neg", Some(n)) => Self::CoodFprNeg(n),
            ("fpr_cood", Some(n)) => Self::FprCood(n),
            ("tpr_cood", Some(n)) => Self::TprCood(n),
            _ => return Err(bad()),
        })
    }
}

impl fmt::Display for MetricSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::FprIdNeg => f.write_str("fpr_id_neg"),
            Self::TprIdPos => f.write_str("tpr_id_pos"),
            Self::TprId => f.write_str("tpr_id"),
            Self::MeanSoodFpr => f.write_str("mean_sood_fpr"),
            Self::SoodFpr(n) => write!(f, "sood_fpr:{n}"),
            Self::CoodF1(n) => write!(f, "f1:{n}"),
            Self::CoodPrecision(n) => write!(f, "precision:{n}"),
            Self::CoodRecall(n) => write!(f, "recall:{n}"),
            Self::CoodTprPos(n) => write!(f, "tpr_cood_pos:{n}"),
            Self::CoodFprNeg(n) => write!(f, "fpr_cood_neg:{n}"),
            Self::FprCood(n) => write!(f, "fpr_cood:{n}"),
            Self::TprCood(n) => write!(f, "tpr_cood:{n}"),
        }
    }
}

impl AccuracySelector {
    pub fn select(&self, r: &MetricReport) -> Option<f64> {
        match self {
            Self::Id => r.accuracy.id,
            Self::Cood(n) => r.cood_accuracy(n),
        }
    }
}

impl MetricSelector {
    pub fn select(&self, r: &MetricReport) -> Option<f64> {
        let cood = |n: &str| r.cood_metrics(n);
        match self {
            Self::FprIdNeg => r.id.fpr_id_neg?.value(),
            Self::TprIdPos => r.id.tpr_id_pos?.value(),
            Self::TprId => r.id.tpr_id?.value(),
            Self::SoodFpr(n) => r.sood_fpr(n),
            Self::MeanSoodFpr => r.mean_sood_fpr(),
            Self::CoodF1(n) => Some(cood(n)?.prf?.f1),
            Self::CoodPrecision(n) => Some(cood(n)?.prf?.precision),
            Self::CoodRecall(n) => Some(cood(n)?.prf?.recall),
            Self::CoodTprPos(n) => cood(n)?.tpr_cood_pos?.value(),
            Self::CoodFprNeg(n) => cood(n)?.fpr_cood_neg?.value(),
            Self::FprCood(n) => cood(n)?.fpr_cood?.value(),
            Self::TprCood(n) => cood(n)?.tpr_cood?.value(),
        }
    }
}

/// One scatter point; both axes in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub model_id: String,
    pub method: Method,
    pub framework: Option<FrameworkKind>,
    pub x: f64,
    pub y: f64,
}

pub fn emit_scatter(
    reports: &[MetricReport],
    x: &AccuracySelector,
    y: &MetricSelector,
) -> Result<Vec<ScatterRow>, ReportError> {
    reports
        .iter()
        .map(|r| {
            let missing =
                |what: String| ReportError::MissingValue { model_id: r.model_id.clone(), method: r.method, what };
            let xv = x.select(r).ok_or_else(|| missing(x.to_string()))?;
            let yv = y.select(r).ok_or_else(|| missing(y.to_string()))?;
            Ok(ScatterRow {
                model_id: r.model_id.clone(),
                method: r.method,
                framework: r.framework,
                x: xv * 100.0,
                y: yv * 100.0,
            })
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn threshold_cell(t: f64) -> String {
    if t == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        t.to_string()
    }
}

fn framework_cell(f: Option<FrameworkKind>) -> String {
    f.map(|k| k.to_string()).unwrap_or_default()
}

/// Flat metric table: one row per report, with an F1 column per C-OOD partition
/// and an FPR column per S-OOD partition (union over reports, first-seen order).
pub fn write_metric_table<W: Write>(reports: &[MetricReport], out: W) -> Result<(), ReportError> {
    let mut cood_names: Vec<&str> = Vec::new();
    let mut sood_names: Vec<&str> = Vec::new();
    for r in reports {
        for c in &r.cood {
            if !cood_names.contains(&c.partition.as_str()) {
                cood_names.push(&c.partition);
            }
        }
        for s in &r.sood {
            if !sood_names.contains(&s.partition.as_str()) {
                sood_names.push(&s.partition);
            }
        }
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> =
        ["model", "method", "framework", "target_tpr", "threshold", "acc_id", "tpr_id_pos", "fpr_id_neg", "tpr_id"]
            .map(String::from)
            .to_vec();
    header.extend(cood_names.iter().map(|n| format!("f1:{n}")));
    header.extend(sood_names.iter().map(|n| format!("fpr:{n}")));
    header.push("mean_sood_fpr".into());
    w.write_record(&header)?;
    for r in reports {
        let mut row = vec![
            r.model_id.clone(),
            r.method.to_string(),
            framework_cell(r.framework),
            r.target_tpr.to_string(),
            threshold_cell(r.threshold),
            cell(r.accuracy.id),
            cell(r.id.tpr_id_pos.and_then(|x| x.value())),
            cell(r.id.fpr_id_neg.and_then(|x| x.value())),
            cell(r.id.tpr_id.and_then(|x| x.value())),
        ];
        row.extend(cood_names.iter().map(|n| cell(r.cood_metrics(n).and_then(|c| c.prf).map(|p| p.f1))));
        row.extend(sood_names.iter().map(|n| cell(r.sood_fpr(n))));
        row.push(cell(r.mean_sood_fpr()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// FPR(S-OOD) with the threshold set on all ID next to the one set on ID+ only,
/// one row per S-OOD partition plus a `mean` row per comparison.
pub fn write_paired_table<W: Write>(comparisons: &[PairedSoodComparison], out: W) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "method", "target_tpr", "partition", "fpr_at_tpr_id", "fpr_at_tpr_id_pos"])?;
    for c in comparisons {
        let mut write = |partition: &str, a: Option<f64>, b: Option<f64>| {
            w.write_record([
                c.model_id.clone(),
                c.method.to_string(),
                c.target_tpr.to_string(),
                partition.to_string(),
                cell(a),
                cell(b),
            ])
        };
        for row in &c.rows {
            write(&row.partition, row.fpr_at_tpr_id, row.fpr_at_tpr_id_pos)?;
        }
        write("mean", c.mean_at_tpr_id, c.mean_at_tpr_id_pos)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram_csv<W: Write>(h: &HistogramSet, out: W) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subset", "bin", "lower", "upper", "count", "mass"])?;
    for s in &h.subsets {
        for (i, (&n, &m)) in s.counts.iter().zip(&s.masses).enumerate() {
            w.write_record([
                s.subset.to_string(),
                i.to_string(),
                h.edges[i].to_string(),
                h.edges[i + 1].to_string(),
                n.to_string(),
                m.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_topk_csv<W: Write>(listings: &[PartitionExtremes], out: W) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["partition", "end", "rank", "index", "score", "subset"])?;
    for l in listings {
        for (end, list) in [("top", &l.top), ("bottom", &l.bottom)] {
            for (rank, e) in list.iter().enumerate() {
                w.write_record([
                    l.partition.clone(),
                    end.to_string(),
                    rank.to_string(),
                    e.index.to_string(),
                    e.score.to_string(),
                    e.subset.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_scatter_csv<W: Write>(
    rows: &[ScatterRow],
    x: &AccuracySelector,
    y: &MetricSelector,
    out: W,
) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "method", "framework", &x.to_string(), &y.to_string()])?;
    for r in rows {
        w.write_record([
            r.model_id.clone(),
            r.method.to_string(),
            framework_cell(r.framework),
            r.x.to_string(),
            r.y.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<W: Write, T: Serialize + ?Sized>(value: &T, mut out: W) -> Result<(), ReportError> {
    serde_json::to_writer_pretty(&mut out, value).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::container::Role;
    use crate::labeling::MsLabeling;
    use crate::metrics::{evaluate, ConfigEcho, ReportContext, ThresholdSpec};

    fn labeling(role: Role, subsets: &[Subset]) -> MsLabeling {
        MsLabeling {
            role,
            z: subsets.iter().map(|s| s.z()).collect(),
            subset: subsets.to_vec(),
            predicted_class: vec![0; subsets.len()],
        }
    }

    #[test]
    fn constant_subset_fills_one_bin() {
        let l = labeling(Role::Sood, &[Subset::Sood; 4]);
        let p = [ScoredPartition { name: "s", labeling: &l, scores: &[2.0; 4] }];
        let h = emit_histograms(&p, 10).unwrap();
        assert_eq!(h.edges.first(), Some(&1.5));
        assert_eq!(h.edges.last(), Some(&2.5));
        let s = &h.subsets[0];
        assert_eq!(s.masses.iter().filter(|&&m| m > 0.0).count(), 1);
        assert_eq!(s.masses.iter().sum::<f64>(), 1.0);
        assert_eq!(h.empty_subsets.len(), 4);
    }

    #[test]
    fn disjoint_ranges_do_not_overlap() {
        let l = labeling(Role::Id, &[Subset::IdPos, Subset::IdPos, Subset::IdNeg, Subset::IdNeg]);
        let p = [ScoredPartition { name: "id", labeling: &l, scores: &[9.0, 10.0, 0.0, 1.0] }];
        let h = emit_histograms(&p, 5).unwrap();
        let (a, b) = (&h.subsets[0].counts, &h.subsets[1].counts);
        assert!(a.iter().zip(b).all(|(x, y)| *x == 0 || *y == 0));
        assert_eq!(a[4], 2, "max lands in the last bin");
        assert!(matches!(emit_histograms(&p, 1), Err(ReportError::TooFewBins(1))));
    }

    #[test]
    fn topk_order_and_ties() {
        let l = labeling(Role::Sood, &[Subset::Sood; 3]);
        let p = [ScoredPartition { name: "s", labeling: &l, scores: &[0.2, 0.9, 0.5] }];
        let t = emit_topk(&p, 1).unwrap();
        assert_eq!(t[0].top[0].index, 1);
        assert_eq!(t[0].bottom[0].index, 0);

        let tied = [ScoredPartition { name: "s", labeling: &l, scores: &[1.0; 3] }];
        let t = emit_topk(&tied, 2).unwrap();
        assert_eq!(t[0].top.iter().map(|e| e.index).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(t[0].bottom.iter().map(|e| e.index).collect::<Vec<_>>(), vec![0, 1]);
        assert!(matches!(emit_topk(&p, 4), Err(ReportError::KTooLarge { k: 4, size: 3, .. })));
    }

    fn report_with(acc_pos: usize, acc_neg: usize) -> MetricReport {
        let mut subsets = vec![Subset::IdPos; acc_pos];
        subsets.extend(vec![Subset::IdNeg; acc_neg]);
        let l = labeling(Role::Id, &subsets);
        let scores: Vec<f64> = (0..subsets.len()).map(|i| i as f64).collect();
        let ctx = ReportContext { model_id: "resnet".into(), method: Method::Msp, config: ConfigEcho::default() };
        evaluate(&ctx, &[ScoredPartition { name: "id", labeling: &l, scores: &scores }], &ThresholdSpec::default())
            .unwrap()
    }

    #[test]
    fn scatter_in_percent() {
        let mut r = report_with(3, 1);
        r.accuracy.id = Some(0.761);
        r.id.fpr_id_neg = Some(crate::metrics::Rate { accepted: 617, total: 1000 });
        let rows = emit_scatter(&[r], &AccuracySelector::Id, &MetricSelector::FprIdNeg).unwrap();
        assert!((rows[0].x - 76.1).abs() < 1e-9 && (rows[0].y - 61.7).abs() < 1e-9);
        assert_eq!(rows[0].method, Method::Msp);
        assert!(emit_scatter(&[], &AccuracySelector::Id, &MetricSelector::FprIdNeg).unwrap().is_empty());
        let missing =
            emit_scatter(&[report_with(2, 0)], &AccuracySelector::Cood("v2".into()), &MetricSelector::FprIdNeg);
        assert!(matches!(missing, Err(ReportError::MissingValue { .. })));
    }

    #[test]
    fn selectors_round_trip() {
        for s in ["fpr_id_neg", "mean_sood_fpr", "sood_fpr:inat", "f1:v2", "fpr_cood:v2", "tpr_id"] {
            assert_eq!(s.parse::<MetricSelector>().unwrap().to_string(), s);
        }
        for s in ["acc_id", "acc_cood:v2"] {
            assert_eq!(s.parse::<AccuracySelector>().unwrap().to_string(), s);
        }
        assert!("f1".parse::<MetricSelector>().is_err());
        assert!("acc_cood:".parse::<AccuracySelector>().is_err());
    }

    #[test]
    fn metric_table_layout() {
        let mut out = Vec::new();
        write_metric_table(&[report_with(19, 1)], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "model,method,framework,target_tpr,threshold,acc_id,tpr_id_pos,fpr_id_neg,tpr_id,mean_sood_fpr"
        );
        assert_eq!(lines.next().unwrap(), "resnet,msp,,0.95,-inf,0.95,1,1,1,");
    }
}
