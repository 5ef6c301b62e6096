//! Detector evaluation against per-timestamp ground truth.
//!
//! `range_pr_auc` is the existence-recall variant: a contiguous anomaly range
//! is recalled at a threshold as soon as any of its timestamps reaches it,
//! while precision stays point-wise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub roc_auc: f64,
    pub pr_auc: f64,
    /// range_pr_auc (existence-recall variant)
    pub range_pr_auc: f64,
    #[serde(rename = "n_ranges")]
    pub n_anomaly_ranges: usize,
}

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidConfig("NaN score".into()));
    }
    Ok(())
}

/// Indices sorted by descending score, grouped into runs of equal score.
fn descending_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in idx {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Mann-Whitney AUC; tied positive/negative pairs count one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    // walk from the lowest score up, counting negatives already passed
    let mut groups = descending_groups(scores);
    groups.reverse();
    let mut below_neg = 0usize;
    let mut wins = 0.0;
    for g in &groups {
        let p = g.iter().filter(|&&i| labels[i]).count();
        let n = g.len() - p;
        wins += p as f64 * (below_neg as f64 + 0.5 * n as f64);
        below_neg += n;
    }
    Ok(wins / (pos as f64 * neg as f64))
}

/// Step-interpolated precision-recall area: `sum (R_k - R_{k-1}) P_k` over
/// thresholds at each distinct score.
pub fn pr_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 {
        return Err(Error::NoPositives);
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for g in descending_groups(scores) {
        for &i in &g {
            if labels[i] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(area)
}

/// Maximal runs of positive labels as half-open ranges.
pub fn anomaly_ranges(labels: &[bool]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = None;
    for (t, &l) in labels.iter().enumerate() {
        match (l, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                out.push(s..t);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(s..labels.len());
    }
    out
}

/// PR area with existence-based range recall and point-wise precision.
pub fn range_pr_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let ranges = anomaly_ranges(labels);
    if ranges.is_empty() {
        return Err(Error::NoPositives);
    }
    // range r is recalled once the threshold drops to its maximum score
    let mut range_of = vec![usize::MAX; labels.len()];
    for (r, range) in ranges.iter().enumerate() {
        for t in range.clone() {
            range_of[t] = r;
        }
    }
    let mut recalled = vec![false; ranges.len()];
    let (mut tp, mut fp, mut hit) = (0usize, 0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for g in descending_groups(scores) {
        for &i in &g {
            if labels[i] {
                tp += 1;
                let r = range_of[i];
                if !recalled[r] {
                    recalled[r] = true;
                    hit += 1;
                }
            } else {
                fp += 1;
            }
        }
        let recall = hit as f64 / ranges.len() as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(area)
}

pub fn evaluate(scores: &[f64], labels: &[bool]) -> Result<EvalResult> {
    Ok(EvalResult {
        roc_auc: roc_auc(scores, labels)?,
        pr_auc: pr_auc(scores, labels)?,
        range_pr_auc: range_pr_auc(scores, labels)?,
        n_anomaly_ranges: anomaly_ranges(labels).len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(v: &[u8]) -> Vec<bool> {
        v.iter().map(|&x| x == 1).collect()
    }

    #[test]
    fn roc_examples() {
        let labels = b(&[0, 1, 1, 0, 1]);
        let perfect: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
        assert_eq!(roc_auc(&perfect, &labels).unwrap(), 1.0);
        let inverted: Vec<f64> = perfect.iter().map(|s| 1.0 - s).collect();
        assert_eq!(roc_auc(&inverted, &labels).unwrap(), 0.0);
        assert_eq!(roc_auc(&[0.1, 0.4, 0.35, 0.8], &b(&[0, 0, 1, 1])).unwrap(), 0.75);
        assert_eq!(roc_auc(&[1.0, 1.0], &b(&[0, 1])).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[1.0, 2.0], &b(&[1, 1])), Err(Error::SingleClass)));
    }

    #[test]
    fn pr_examples() {
        let labels = b(&[0, 1, 0, 1]);
        assert_eq!(pr_auc(&[0.0, 1.0, 0.0, 1.0], &labels).unwrap(), 1.0);
        assert_eq!(pr_auc(&[2.0; 4], &labels).unwrap(), 0.5);
        let v = pr_auc(&[3.0, 2.0, 1.0], &b(&[1, 0, 1])).unwrap();
        assert!((v - 5.0 / 6.0).abs() < 1e-15);
        assert!(matches!(pr_auc(&[1.0], &b(&[0])), Err(Error::NoPositives)));
    }

    #[test]
    fn range_examples() {
        let labels = b(&[0, 0, 1, 1, 1, 0, 0]);
        let scores = [0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0];
        assert_eq!(range_pr_auc(&scores, &labels).unwrap(), 1.0);

        // one timestamp per range fires, no false positives
        let labels = b(&[1, 1, 0, 0, 1, 1, 1, 0]);
        let scores = [0.0, 5.0, 0.0, 0.0, 0.0, 0.0, 4.0, 0.0];
        assert_eq!(range_pr_auc(&scores, &labels).unwrap(), 1.0);
        assert!(pr_auc(&scores, &labels).unwrap() < 1.0);
    }

    #[test]
    fn range_partial_detection() {
        // ranges [1,3) and [6,8); the detector only fires inside the first
        let labels = b(&[0, 1, 1, 0, 0, 0, 1, 1, 0, 0]);
        let scores = [0.0, 3.0, 2.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        // threshold 3: recall 1/2, precision 1
        // threshold 2, 1: recall stays 1/2
        // threshold 0: recall 1, precision 4/10
        let expected = 0.5 * 1.0 + 0.5 * 0.4;
        assert!((range_pr_auc(&scores, &labels).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn ranges() {
        assert_eq!(anomaly_ranges(&b(&[1, 0, 1, 1, 0, 1])), vec![0..1, 2..4, 5..6]);
        assert!(anomaly_ranges(&b(&[0, 0])).is_empty());
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            evaluate(&[1.0, 2.0], &b(&[0, 1, 0])),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn eval_json_names() {
        let r = evaluate(&[0.0, 1.0], &b(&[0, 1])).unwrap();
        let j = serde_json::to_value(r).unwrap();
        for key in ["roc_auc", "pr_auc", "range_pr_auc", "n_ranges"] {
            assert!(j.get(key).is_some(), "{key}");
        }
    }
}
