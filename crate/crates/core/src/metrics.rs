//! Segmentation and labeling metrics.
//!
//! Voxel overlap: Dice, FPSR and FNSR share the denominator `2tp + fp + fn`,
//! so the three always sum to one. Topology: clDice compares each mask's
//! skeleton against the other mask. Labeling: per-branch voxel Dice plus a
//! branch-level detection outcome aggregated over cases.
//!
//! Empty-input conventions: `dice(∅, ∅) = 1`, both rates 0, `cldice(∅, ∅) = 1`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::connectivity::ncc;
use crate::skeleton::skeletonize;
use crate::volume::{BinaryVolume, BranchLabel, BranchLabelVolume, Grid};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

fn same(a: &Grid, b: &Grid) -> Result<(), MetricsError> {
    a.ensure_same(b)
        .map_err(|e| MetricsError::ShapeMismatch(e.to_string()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        ConfusionCounts { tp, fp, fn_ }
    }

    fn denominator(&self) -> usize {
        2 * self.tp + self.fp + self.fn_
    }
}

pub fn confusion(pred: &BinaryVolume, gt: &BinaryVolume) -> Result<ConfusionCounts, MetricsError> {
    same(pred.grid(), gt.grid())?;
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

pub fn dice(c: &ConfusionCounts) -> f64 {
    match c.denominator() {
        0 => 1.0,
        d => (2 * c.tp) as f64 / d as f64,
    }
}

pub fn fpsr(c: &ConfusionCounts) -> f64 {
    match c.denominator() {
        0 => 0.0,
        d => c.fp as f64 / d as f64,
    }
}

pub fn fnsr(c: &ConfusionCounts) -> f64 {
    match c.denominator() {
        0 => 0.0,
        d => c.fn_ as f64 / d as f64,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClDice {
    pub cldice: f64,
    pub tprec: f64,
    pub tsens: f64,
}

/// Topology precision/sensitivity from already-computed skeletons.
pub fn cldice_from_skeletons(
    pred: &BinaryVolume,
    gt: &BinaryVolume,
    pred_skeleton: &BinaryVolume,
    gt_skeleton: &BinaryVolume,
) -> Result<ClDice, MetricsError> {
    for v in [gt, pred_skeleton, gt_skeleton] {
        same(pred.grid(), v.grid())?;
    }
    if pred.is_blank() && gt.is_blank() {
        return Ok(ClDice {
            cldice: 1.0,
            tprec: 1.0,
            tsens: 1.0,
        });
    }
    let ratio = |skel: &BinaryVolume, vol: &BinaryVolume| {
        let n = skel.count();
        if n == 0 {
            return 0.0;
        }
        let hit = skel.foreground().filter(|&i| vol.data()[i]).count();
        hit as f64 / n as f64
    };
    let tprec = ratio(pred_skeleton, gt);
    let tsens = ratio(gt_skeleton, pred);
    let cldice = if tprec + tsens > 0.0 {
        2.0 * tprec * tsens / (tprec + tsens)
    } else {
        0.0
    };
    Ok(ClDice {
        cldice,
        tprec,
        tsens,
    })
}

pub fn cldice(pred: &BinaryVolume, gt: &BinaryVolume) -> Result<ClDice, MetricsError> {
    same(pred.grid(), gt.grid())?;
    cldice_from_skeletons(pred, gt, &skeletonize(pred), &skeletonize(gt))
}

/// One branch in one case. A branch counts as detected when its true-positive
/// voxels strictly outnumber both its false-positive and false-negative voxels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchOutcome {
    pub counts: ConfusionCounts,
    pub dice: f64,
    pub in_gt: bool,
    pub in_pred: bool,
    pub detected: bool,
}

impl BranchOutcome {
    pub fn from_counts(counts: ConfusionCounts) -> Self {
        let detected = counts.tp > counts.fp && counts.tp > counts.fn_;
        BranchOutcome {
            counts,
            dice: dice(&counts),
            in_gt: counts.tp + counts.fn_ > 0,
            in_pred: counts.tp + counts.fp > 0,
            detected,
        }
    }

    /// Branch-level true positive: present in the ground truth and detected.
    pub fn is_tp(&self) -> bool {
        self.in_gt && self.detected
    }

    /// Predicted but not detected.
    pub fn is_fp(&self) -> bool {
        self.in_pred && !self.detected
    }

    /// In the ground truth but not detected.
    pub fn is_fn(&self) -> bool {
        self.in_gt && !self.detected
    }
}

/// Per-branch outcomes for the seven named branches.
pub fn branch_scores(
    pred: &BranchLabelVolume,
    gt: &BranchLabelVolume,
) -> Result<BTreeMap<BranchLabel, BranchOutcome>, MetricsError> {
    same(pred.grid(), gt.grid())?;
    let mut counts = [ConfusionCounts::default(); 8];
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        if p == g {
            counts[p as usize].tp += 1;
        } else {
            counts[p as usize].fp += 1;
            counts[g as usize].fn_ += 1;
        }
    }
    Ok(BranchLabel::BRANCHES
        .iter()
        .map(|&b| (b, BranchOutcome::from_counts(counts[b as usize])))
        .collect())
}

/// Branch-level precision, recall and F1 over a set of cases.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchSummary {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub dice: MeanStd,
}

/// Precision and recall are 1 when their denominator is zero.
pub fn summarize_branches(
    cases: &[&BTreeMap<BranchLabel, BranchOutcome>],
) -> BTreeMap<BranchLabel, BranchSummary> {
    BranchLabel::BRANCHES
        .iter()
        .map(|&b| {
            let outcomes: Vec<&BranchOutcome> = cases.iter().filter_map(|c| c.get(&b)).collect();
            let tp = outcomes.iter().filter(|o| o.is_tp()).count();
            let fp = outcomes.iter().filter(|o| o.is_fp()).count();
            let fn_ = outcomes.iter().filter(|o| o.is_fn()).count();
            let precision = if tp + fp == 0 {
                1.0
            } else {
                tp as f64 / (tp + fp) as f64
            };
            let recall = if tp + fn_ == 0 {
                1.0
            } else {
                tp as f64 / (tp + fn_) as f64
            };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            let dices: Vec<f64> = outcomes
                .iter()
                .filter(|o| o.in_gt || o.in_pred)
                .map(|o| o.dice)
                .collect();
            (
                b,
                BranchSummary {
                    tp,
                    fp,
                    fn_,
                    precision,
                    recall,
                    f1,
                    dice: MeanStd::of(&dices),
                },
            )
        })
        .collect()
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return MeanStd::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MeanStd {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub case: String,
    pub counts: ConfusionCounts,
    pub dice: f64,
    pub fpsr: f64,
    pub fnsr: f64,
    pub cldice: f64,
    pub tprec: f64,
    pub tsens: f64,
    pub ncc_pred: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branches: Option<BTreeMap<BranchLabel, BranchOutcome>>,
}

impl CaseMetrics {
    pub fn from_masks(
        case: &str,
        pred: &BinaryVolume,
        gt: &BinaryVolume,
    ) -> Result<Self, MetricsError> {
        let counts = confusion(pred, gt)?;
        let cl = cldice(pred, gt)?;
        Ok(CaseMetrics {
            case: case.to_string(),
            counts,
            dice: dice(&counts),
            fpsr: fpsr(&counts),
            fnsr: fnsr(&counts),
            cldice: cl.cldice,
            tprec: cl.tprec,
            tsens: cl.tsens,
            ncc_pred: ncc(pred),
            branches: None,
        })
    }

    /// Mask metrics on the labeled foreground plus per-branch outcomes.
    pub fn from_labels(
        case: &str,
        pred: &BranchLabelVolume,
        gt: &BranchLabelVolume,
    ) -> Result<Self, MetricsError> {
        let mut m = Self::from_masks(case, &pred.foreground_mask(), &gt.foreground_mask())?;
        m.branches = Some(branch_scores(pred, gt)?);
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub cldice: MeanStd,
    pub dice: MeanStd,
    pub fpsr: MeanStd,
    pub fnsr: MeanStd,
    pub tprec: MeanStd,
    pub tsens: MeanStd,
    pub ncc_pred: MeanStd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cases: Vec<CaseMetrics>,
    pub summary: MetricsSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branches: Option<BTreeMap<BranchLabel, BranchSummary>>,
}

impl MetricsReport {
    /// Cases are sorted by name so the report does not depend on input order.
    pub fn from_cases(mut cases: Vec<CaseMetrics>) -> Self {
        cases.sort_by(|a, b| a.case.cmp(&b.case));
        let col =
            |f: fn(&CaseMetrics) -> f64| MeanStd::of(&cases.iter().map(f).collect::<Vec<_>>());
        let summary = MetricsSummary {
            cldice: col(|c| c.cldice),
            dice: col(|c| c.dice),
            fpsr: col(|c| c.fpsr),
            fnsr: col(|c| c.fnsr),
            tprec: col(|c| c.tprec),
            tsens: col(|c| c.tsens),
            ncc_pred: col(|c| c.ncc_pred as f64),
        };
        let labeled: Vec<&BTreeMap<BranchLabel, BranchOutcome>> =
            cases.iter().filter_map(|c| c.branches.as_ref()).collect();
        let branches = (!labeled.is_empty()).then(|| summarize_branches(&labeled));
        MetricsReport {
            cases,
            summary,
            branches,
        }
    }

    /// Plain-text table; ratios in percent as mean±std.
    pub fn to_table(&self) -> String {
        let pct = |m: &MeanStd| format!("{:.2}±{:.2}", 100.0 * m.mean, 100.0 * m.std);
        let s = &self.summary;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:>14} {:>14} {:>14} {:>14} {:>12}",
            "", "clDice", "Dice", "FPSR", "FNSR", "NCC"
        );
        let _ = writeln!(
            out,
            "{:<16} {:>14} {:>14} {:>14} {:>14} {:>12}",
            format!("mean (n={})", self.cases.len()),
            pct(&s.cldice),
            pct(&s.dice),
            pct(&s.fpsr),
            pct(&s.fnsr),
            format!("{:.2}±{:.2}", s.ncc_pred.mean, s.ncc_pred.std),
        );
        if let Some(branches) = &self.branches {
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "{:<16} {:>10} {:>10} {:>10} {:>14}",
                "branch", "Precision", "Recall", "F1", "Dice"
            );
            for (b, r) in branches {
                let _ = writeln!(
                    out,
                    "{:<16} {:>10.2} {:>10.2} {:>10.2} {:>14}",
                    b.name(),
                    100.0 * r.precision,
                    100.0 * r.recall,
                    100.0 * r.f1,
                    pct(&r.dice)
                );
            }
        }
        out
    }
}
