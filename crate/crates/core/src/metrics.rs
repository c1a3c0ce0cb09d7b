//! ROC/PR curves, rank AUROC, average precision, thresholded confusion
//! metrics and Youden's J.
//!
//! A score at or above the threshold predicts the positive (hallucination)
//! class.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Label;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error("invalid input: {0}")]
    Validation(String),
}

pub type Result<T> = std::result::Result<T, MetricError>;

/// Tie tolerance when comparing Youden's J between curve points.
pub const YOUDEN_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Score cut producing this point; `+inf` for the all-negative origin.
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub f1: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YoudenPoint {
    pub threshold: f64,
    pub j: f64,
    pub fpr: f64,
    pub tpr: f64,
}

fn check_inputs(scores: &[f64], labels: &[Label]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(MetricError::Validation(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricError::Validation(format!("score {i} is not finite")));
    }
    let n_pos = labels.iter().filter(|l| l.is_positive()).count();
    Ok((n_pos, labels.len() - n_pos))
}

fn require_both(n_pos: usize, n_neg: usize) -> Result<()> {
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::Undefined(format!(
            "need both classes, got {n_pos} positive and {n_neg} negative"
        )));
    }
    Ok(())
}

/// Indices sorted by descending score; order within ties is irrelevant to
/// every caller because ties are always consumed as a group.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    idx
}

/// Cumulative (tp, fp, threshold) after each distinct score, highest first.
fn threshold_steps(scores: &[f64], labels: &[Label]) -> Vec<(usize, usize, f64)> {
    let order = descending(scores);
    let mut steps = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (pos, &i) in order.iter().enumerate() {
        if labels[i].is_positive() {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = order.get(pos + 1).is_none_or(|&j| scores[j] != scores[i]);
        if last_of_group {
            steps.push((tp, fp, scores[i]));
        }
    }
    steps
}

/// Mann-Whitney AUROC with mid-ranks for ties.
pub fn auroc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let (n_pos, n_neg) = check_inputs(scores, labels)?;
    require_both(n_pos, n_neg)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        // 1-based ranks start+1..=end share their mean
        let mid = (start + 1 + end) as f64 / 2.0;
        let pos_in_group = idx[start..end].iter().filter(|&&i| labels[i].is_positive()).count();
        rank_sum += mid * pos_in_group as f64;
        start = end;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok(((rank_sum - p * (p + 1.0) / 2.0) / (p * n)).clamp(0.0, 1.0))
}

/// Average precision: sum over distinct thresholds of precision times the
/// recall increment.
pub fn auprc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let (n_pos, _) = check_inputs(scores, labels)?;
    if n_pos == 0 {
        return Err(MetricError::Undefined("average precision needs a positive example".into()));
    }
    let mut ap = 0.0;
    let mut prev_tp = 0usize;
    for (tp, fp, _) in threshold_steps(scores, labels) {
        if tp > prev_tp {
            let precision = tp as f64 / (tp + fp) as f64;
            ap += precision * (tp - prev_tp) as f64 / n_pos as f64;
            prev_tp = tp;
        }
    }
    Ok(ap.clamp(0.0, 1.0))
}

/// ROC points from (0, 0) to (1, 1), one per distinct score.
pub fn roc_curve(scores: &[f64], labels: &[Label]) -> Result<Vec<RocPoint>> {
    let (n_pos, n_neg) = check_inputs(scores, labels)?;
    require_both(n_pos, n_neg)?;
    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY }];
    points.extend(threshold_steps(scores, labels).into_iter().map(|(tp, fp, t)| RocPoint {
        fpr: fp as f64 / n_neg as f64,
        tpr: tp as f64 / n_pos as f64,
        threshold: t,
    }));
    Ok(points)
}

/// PR points by increasing recall, starting at (0, 1).
pub fn pr_curve(scores: &[f64], labels: &[Label]) -> Result<Vec<PrPoint>> {
    let (n_pos, _) = check_inputs(scores, labels)?;
    if n_pos == 0 {
        return Err(MetricError::Undefined("precision-recall curve needs a positive example".into()));
    }
    let mut points = vec![PrPoint { recall: 0.0, precision: 1.0, threshold: f64::INFINITY }];
    points.extend(threshold_steps(scores, labels).into_iter().map(|(tp, fp, t)| PrPoint {
        recall: tp as f64 / n_pos as f64,
        precision: tp as f64 / (tp + fp) as f64,
        threshold: t,
    }));
    Ok(points)
}

pub fn confusion_at(scores: &[f64], labels: &[Label], threshold: f64) -> Result<Confusion> {
    let (n_pos, n_neg) = check_inputs(scores, labels)?;
    require_both(n_pos, n_neg)?;
    let (mut tp, mut fp) = (0usize, 0usize);
    for (s, l) in scores.iter().zip(labels) {
        if *s >= threshold {
            if l.is_positive() {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    let fn_ = n_pos - tp;
    let tn = n_neg - fp;
    let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
    Ok(Confusion {
        tp,
        fp,
        tn,
        fn_,
        f1,
        sensitivity: tp as f64 / n_pos as f64,
        specificity: tn as f64 / n_neg as f64,
        accuracy: (tp + tn) as f64 / labels.len() as f64,
    })
}

/// Point maximizing J = tpr - fpr; among near-ties the lower fpr wins.
pub fn youden_optimal(points: &[RocPoint]) -> Option<YoudenPoint> {
    let mut best: Option<YoudenPoint> = None;
    for p in points {
        let j = p.tpr - p.fpr;
        let better = match best {
            None => true,
            Some(b) => j > b.j + YOUDEN_TIE_TOL || ((j - b.j).abs() <= YOUDEN_TIE_TOL && p.fpr < b.fpr),
        };
        if better {
            best = Some(YoudenPoint { threshold: p.threshold, j, fpr: p.fpr, tpr: p.tpr });
        }
    }
    best
}

/// Trapezoidal area under (x, y) points sorted by x within [0, 1].
pub fn trapezoid_auc(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(MetricError::Validation("need at least two points".into()));
    }
    for (i, &(x, y)) in points.iter().enumerate() {
        if !x.is_finite() || !y.is_finite() {
            return Err(MetricError::Validation(format!("point {i} is not finite")));
        }
        if !(0.0..=1.0).contains(&x) {
            return Err(MetricError::Validation(format!("point {i} has x = {x} outside [0, 1]")));
        }
    }
    if let Some(i) = points.windows(2).position(|w| w[1].0 < w[0].0) {
        return Err(MetricError::Validation(format!(
            "points not sorted by x at index {}",
            i + 1
        )));
    }
    Ok(points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum())
}

/// Metrics bundle. Thresholded metrics are taken at the Youden-optimal
/// threshold; `at_half` repeats them at 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auroc: f64,
    pub auprc: f64,
    pub f1: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
    pub optimal_threshold: f64,
    pub youden_j: f64,
    pub at_half: Confusion,
    pub roc_points: Vec<(f64, f64)>,
    pub pr_points: Vec<(f64, f64)>,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// A report together with the thresholded curves it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub roc: Vec<RocPoint>,
    pub pr: Vec<PrPoint>,
}

pub fn evaluate(scores: &[f64], labels: &[Label]) -> Result<Evaluation> {
    let (n_pos, n_neg) = check_inputs(scores, labels)?;
    require_both(n_pos, n_neg)?;
    let roc = roc_curve(scores, labels)?;
    let pr = pr_curve(scores, labels)?;
    let youden = youden_optimal(&roc).expect("roc curve is never empty");
    // the origin's +inf cut would not survive JSON; any value above every
    // score predicts the same all-negative split
    let threshold = if youden.threshold.is_finite() { youden.threshold } else { f64::MAX };
    let at_opt = confusion_at(scores, labels, threshold)?;
    let report = EvalReport {
        auroc: auroc(scores, labels)?,
        auprc: auprc(scores, labels)?,
        f1: at_opt.f1,
        sensitivity: at_opt.sensitivity,
        specificity: at_opt.specificity,
        accuracy: at_opt.accuracy,
        optimal_threshold: threshold,
        youden_j: youden.j,
        at_half: confusion_at(scores, labels, 0.5)?,
        roc_points: roc.iter().map(|p| (p.fpr, p.tpr)).collect(),
        pr_points: pr.iter().map(|p| (p.recall, p.precision)).collect(),
        n_pos,
        n_neg,
    };
    Ok(Evaluation { report, roc, pr })
}

impl EvalReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields are finite")
    }
}

pub fn write_roc_csv<W: Write>(mut out: W, points: &[RocPoint]) -> std::io::Result<()> {
    writeln!(out, "fpr,tpr,threshold")?;
    for p in points {
        writeln!(out, "{},{},{}", p.fpr, p.tpr, p.threshold)?;
    }
    Ok(())
}

pub fn write_pr_csv<W: Write>(mut out: W, points: &[PrPoint]) -> std::io::Result<()> {
    writeln!(out, "recall,precision,threshold")?;
    for p in points {
        writeln!(out, "{},{},{}", p.recall, p.precision, p.threshold)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(v: &[u8]) -> Vec<Label> {
        v.iter().map(|&b| Label::from(b == 1)).collect()
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.9, 0.8, 0.3, 0.2], &labels(&[1, 1, 0, 0])).unwrap(), 1.0);
        assert_eq!(auroc(&[0.1, 0.2, 0.3, 0.4], &labels(&[0, 1, 0, 1])).unwrap(), 0.75);
        assert_eq!(auroc(&[0.5; 6], &labels(&[0, 1, 0, 1, 1, 0])).unwrap(), 0.5);
        assert!(matches!(auroc(&[0.1, 0.2], &labels(&[1, 1])), Err(MetricError::Undefined(_))));
    }

    #[test]
    fn auprc_examples() {
        assert_eq!(auprc(&[0.9, 0.8, 0.3, 0.2], &labels(&[1, 1, 0, 0])).unwrap(), 1.0);
        assert_eq!(auprc(&[0.9, 0.8, 0.7, 0.1], &labels(&[0, 0, 0, 1])).unwrap(), 0.25);
        assert!(auprc(&[0.9, 0.8], &labels(&[0, 0])).is_err());
    }

    #[test]
    fn confusion_examples() {
        let y = labels(&[1, 0, 1, 0]);
        let s = [0.9, 0.6, 0.4, 0.2];
        let all_pos = confusion_at(&s, &y, 0.0).unwrap();
        assert_eq!((all_pos.sensitivity, all_pos.specificity), (1.0, 0.0));
        let all_neg = confusion_at(&s, &y, 1.0).unwrap();
        assert_eq!((all_neg.sensitivity, all_neg.specificity, all_neg.f1), (0.0, 1.0, 0.0));
        let perfect = confusion_at(&[0.9, 0.2], &labels(&[1, 0]), 0.5).unwrap();
        assert_eq!(
            (perfect.f1, perfect.sensitivity, perfect.specificity, perfect.accuracy),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn youden_examples() {
        let pts = |v: &[(f64, f64)]| -> Vec<RocPoint> {
            v.iter().map(|&(fpr, tpr)| RocPoint { fpr, tpr, threshold: f64::NAN }).collect()
        };
        let diag = youden_optimal(&pts(&[(0.0, 0.0), (0.5, 0.5), (1.0, 1.0)])).unwrap();
        assert_eq!((diag.fpr, diag.j), (0.0, 0.0));
        let y = youden_optimal(&pts(&[(0.0, 0.0), (0.1, 0.9), (1.0, 1.0)])).unwrap();
        assert!((y.j - 0.8).abs() < 1e-12);
        assert_eq!(y.fpr, 0.1);
        assert!(youden_optimal(&[]).is_none());
    }

    #[test]
    fn trapezoid_examples() {
        assert_eq!(trapezoid_auc(&[(0.0, 0.0), (1.0, 1.0)]).unwrap(), 0.5);
        assert_eq!(trapezoid_auc(&[(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]).unwrap(), 1.0);
        assert!(trapezoid_auc(&[(0.5, 0.0), (0.2, 1.0)]).is_err());
        assert!(trapezoid_auc(&[(0.0, 0.0), (1.5, 1.0)]).is_err());
    }

    #[test]
    fn curves_and_report() {
        let s = [0.9, 0.8, 0.8, 0.3, 0.1];
        let y = labels(&[1, 0, 1, 0, 0]);
        let roc = roc_curve(&s, &y).unwrap();
        assert_eq!((roc[0].fpr, roc[0].tpr), (0.0, 0.0));
        let last = roc.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        assert_eq!(roc.len(), 5);
        let xy: Vec<(f64, f64)> = roc.iter().map(|p| (p.fpr, p.tpr)).collect();
        assert!((trapezoid_auc(&xy).unwrap() - auroc(&s, &y).unwrap()).abs() < 1e-12);

        let eval = evaluate(&s, &y).unwrap();
        let json = eval.report.to_json_pretty();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, eval.report);
        let mut csv = Vec::new();
        write_roc_csv(&mut csv, &eval.roc).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert!(csv.starts_with("fpr,tpr,threshold\n0,0,inf\n"));
    }
}
