//! Competing OOD evaluation protocols, each a choice of threshold reference set
//! plus the subset of metrics it reports.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::container::Role;
use crate::labeling::Subset;
use crate::metrics::{evaluate, MetricReport, MetricsError, ReportContext, ScoredPartition, ThresholdSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameworkKind {
    /// Accept all ID, reject all OOD.
    Conventional,
    /// Accept ID and covariate-shifted OOD, reject semantic shift.
    Sem,
    /// Accept ID, reject both kinds of shift.
    Godin,
    /// Accept correctly classified ID only.
    Scod,
    /// Accept whatever the model classifies correctly, across ID and covariate shift.
    Msood,
}

impl FrameworkKind {
    pub const ALL: [FrameworkKind; 5] = [
        FrameworkKind::Conventional,
        FrameworkKind::Sem,
        FrameworkKind::Godin,
        FrameworkKind::Scod,
        FrameworkKind::Msood,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FrameworkKind::Conventional => "conventional",
            FrameworkKind::Sem => "sem",
            FrameworkKind::Godin => "godin",
            FrameworkKind::Scod => "scod",
            FrameworkKind::Msood => "msood",
        }
    }

    pub fn threshold_spec(self, target_tpr: f64) -> ThresholdSpec {
        match self {
            FrameworkKind::Conventional | FrameworkKind::Godin => ThresholdSpec::id(target_tpr),
            FrameworkKind::Sem => ThresholdSpec::id_and_cood(target_tpr),
            FrameworkKind::Scod | FrameworkKind::Msood => ThresholdSpec::id_pos(target_tpr),
        }
    }

    pub fn requires_cood(self) -> bool {
        matches!(self, FrameworkKind::Sem | FrameworkKind::Godin)
    }

    /// Drop every metric this framework does not report.
    fn prune(self, report: &mut MetricReport) {
        report.framework = Some(self);
        let id = &mut report.id;
        match self {
            FrameworkKind::Conventional => {
                id.tpr_id_pos = None;
                id.fpr_id_neg = None;
                report.cood.clear();
                report.accuracy.cood.clear();
            }
            FrameworkKind::Sem | FrameworkKind::Godin => {
                id.tpr_id_pos = None;
                id.fpr_id_neg = None;
                for c in &mut report.cood {
                    c.tpr_cood_pos = None;
                    c.fpr_cood_neg = None;
                    c.prf = None;
                    if self == FrameworkKind::Sem {
                        c.fpr_cood = None;
                    } else {
                        c.tpr_cood = None;
                    }
                }
            }
            FrameworkKind::Scod => {
                id.tpr_id = None;
                report.cood.clear();
                report.accuracy.cood.clear();
            }
            FrameworkKind::Msood => {
                id.tpr_id = None;
                for c in &mut report.cood {
                    c.fpr_cood = None;
                    c.tpr_cood = None;
                }
            }
        }
    }
}

impl fmt::Display for FrameworkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FrameworkKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown framework {s:?}; expected one of conventional, sem, godin, scod, msood"))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FrameworkError {
    #[error("framework {framework} needs at least one {role} partition")]
    MissingPartition { framework: FrameworkKind, role: Role },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub fn evaluate_framework(
    kind: FrameworkKind,
    ctx: &ReportContext,
    partitions: &[ScoredPartition<'_>],
    target_tpr: f64,
) -> Result<MetricReport, FrameworkError> {
    if kind.requires_cood() && !partitions.iter().any(|p| p.labeling.role == Role::Cood) {
        return Err(FrameworkError::MissingPartition { framework: kind, role: Role::Cood });
    }
    let mut report = evaluate(ctx, partitions, &kind.threshold_spec(target_tpr))?;
    kind.prune(&mut report);
    Ok(report)
}

/// FPR on each S-OOD partition when the threshold is fixed on all ID versus on ID+ only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSoodRow {
    pub partition: String,
    pub fpr_at_tpr_id: Option<f64>,
    pub fpr_at_tpr_id_pos: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSoodComparison {
    pub model_id: String,
    pub method: crate::scoring::Method,
    pub target_tpr: f64,
    pub rows: Vec<PairedSoodRow>,
    pub mean_at_tpr_id: Option<f64>,
    pub mean_at_tpr_id_pos: Option<f64>,
}

pub fn paired_sood_comparison(
    ctx: &ReportContext,
    partitions: &[ScoredPartition<'_>],
    target_tpr: f64,
) -> Result<PairedSoodComparison, FrameworkError> {
    let all_id = evaluate_framework(FrameworkKind::Conventional, ctx, partitions, target_tpr)?;
    let id_pos = evaluate_framework(FrameworkKind::Scod, ctx, partitions, target_tpr)?;
    let rows = all_id
        .sood
        .iter()
        .map(|s| PairedSoodRow {
            partition: s.partition.clone(),
            fpr_at_tpr_id: s.fpr.value(),
            fpr_at_tpr_id_pos: id_pos.sood_fpr(&s.partition),
        })
        .collect();
    Ok(PairedSoodComparison {
        model_id: ctx.model_id.clone(),
        method: ctx.method,
        target_tpr,
        rows,
        mean_at_tpr_id: all_id.mean_sood_fpr(),
        mean_at_tpr_id_pos: id_pos.mean_sood_fpr(),
    })
}

/// The subsets a framework's threshold is calibrated on.
pub fn reference_subsets(kind: FrameworkKind) -> Vec<Subset> {
    kind.threshold_spec(1.0).reference
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::MsLabeling;
    use crate::metrics::ConfigEcho;
    use crate::scoring::Method;

    fn labeling(role: Role, subsets: &[Subset]) -> MsLabeling {
        MsLabeling {
            role,
            z: subsets.iter().map(|s| s.z()).collect(),
            subset: subsets.to_vec(),
            predicted_class: vec![0; subsets.len()],
        }
    }

    fn ctx() -> ReportContext {
        ReportContext { model_id: "m".into(), method: Method::Energy, config: ConfigEcho::default() }
    }

    #[test]
    fn requires_cood() {
        let l = labeling(Role::Id, &[Subset::IdPos; 4]);
        let p = [ScoredPartition { name: "id", labeling: &l, scores: &[1.0, 2.0, 3.0, 4.0] }];
        for kind in [FrameworkKind::Sem, FrameworkKind::Godin] {
            assert_eq!(
                evaluate_framework(kind, &ctx(), &p, 0.95).unwrap_err(),
                FrameworkError::MissingPartition { framework: kind, role: Role::Cood }
            );
        }
        for kind in [FrameworkKind::Conventional, FrameworkKind::Scod, FrameworkKind::Msood] {
            assert!(evaluate_framework(kind, &ctx(), &p, 0.95).is_ok());
        }
    }

    #[test]
    fn pruning_selects_framework_metrics() {
        let id = labeling(Role::Id, &[Subset::IdPos, Subset::IdPos, Subset::IdNeg]);
        let cood = labeling(Role::Cood, &[Subset::CoodPos, Subset::CoodNeg]);
        let sood = labeling(Role::Sood, &[Subset::Sood; 2]);
        let p = [
            ScoredPartition { name: "id", labeling: &id, scores: &[3.0, 2.0, 1.0] },
            ScoredPartition { name: "c", labeling: &cood, scores: &[2.5, 0.5] },
            ScoredPartition { name: "s", labeling: &sood, scores: &[0.0, 4.0] },
        ];
        let conv = evaluate_framework(FrameworkKind::Conventional, &ctx(), &p, 0.95).unwrap();
        assert!(conv.id.tpr_id.is_some() && conv.id.tpr_id_pos.is_none() && conv.cood.is_empty());
        let godin = evaluate_framework(FrameworkKind::Godin, &ctx(), &p, 0.95).unwrap();
        assert!(godin.cood[0].fpr_cood.is_some() && godin.cood[0].tpr_cood.is_none());
        let sem = evaluate_framework(FrameworkKind::Sem, &ctx(), &p, 0.95).unwrap();
        assert_eq!(sem.reference.len(), 4);
        assert!(sem.cood[0].tpr_cood.is_some() && sem.cood[0].prf.is_none());
        let ms = evaluate_framework(FrameworkKind::Msood, &ctx(), &p, 0.95).unwrap();
        assert!(ms.cood[0].prf.is_some() && ms.id.tpr_id.is_none());
        assert_eq!(ms.framework, Some(FrameworkKind::Msood));
    }

    #[test]
    fn parse_round_trip() {
        for k in FrameworkKind::ALL {
            assert_eq!(k.as_str().parse::<FrameworkKind>().unwrap(), k);
        }
        assert!("nope".parse::<FrameworkKind>().is_err());
    }
}
