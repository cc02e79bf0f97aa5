use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-vs-rest metrics of a single class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub positives: usize,
    pub auroc: f64,
    pub auprc: f64,
    pub average_precision: f64,
    /// `(recall, precision)` at each distinct score threshold, descending.
    pub pr_points: Vec<(f64, f64)>,
}

/// Macro averages over classes that have both positives and negatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub auroc: f64,
    pub auprc: f64,
    pub map: f64,
    pub classes: Vec<ClassMetrics>,
    /// Classes without positives or without negatives; excluded from the averages.
    pub skipped: Vec<usize>,
    pub auprc_interpolation: String,
}

/// AUROC (trapezoidal), AUPRC (step-wise) and MAP, one-vs-rest and macro-averaged.
///
/// `scores[i]` is the class-probability row of sample `i`. Tied scores form one
/// threshold for the curves; average precision takes precision at each positive's
/// position in a stable descending order.
pub fn classification_metrics(scores: &[Vec<f64>], labels: &[usize]) -> Result<ClassificationReport> {
    if scores.len() != labels.len() {
        return Err(Error::Config(format!(
            "{} score rows but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let Some(k) = scores.first().map(Vec::len) else {
        return Err(Error::UndefinedMetric("no samples".into()));
    };
    for (i, row) in scores.iter().enumerate() {
        if row.len() != k {
            return Err(Error::Config(format!(
                "row {i} has {} classes, expected {k}",
                row.len()
            )));
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("row {i} has a non-finite score")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Numeric(format!("row {i} sums to {sum}, not 1")));
        }
        if labels[i] >= k {
            return Err(Error::Lookup(format!("label {} outside {k} classes", labels[i])));
        }
    }
    let mut present = vec![false; k];
    labels.iter().for_each(|&l| present[l] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::UndefinedMetric("labels contain fewer than two classes".into()));
    }

    let mut classes = Vec::new();
    let mut skipped = Vec::new();
    for c in 0..k {
        let column: Vec<f64> = scores.iter().map(|r| r[c]).collect();
        let positive: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        match class_metrics(c, &column, &positive) {
            Some(m) => classes.push(m),
            None => skipped.push(c),
        }
    }
    let n = classes.len() as f64;
    Ok(ClassificationReport {
        auroc: classes.iter().map(|c| c.auroc).sum::<f64>() / n,
        auprc: classes.iter().map(|c| c.auprc).sum::<f64>() / n,
        map: classes.iter().map(|c| c.average_precision).sum::<f64>() / n,
        classes,
        skipped,
        auprc_interpolation: "step-wise".into(),
    })
}

fn class_metrics(class: usize, scores: &[f64], positive: &[bool]) -> Option<ClassMetrics> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable: ties keep sample order
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut prev_fpr, mut prev_tpr, mut prev_recall) = (0.0, 0.0, 0.0);
    let (mut auroc, mut auprc, mut ap_sum) = (0.0, 0.0, 0.0);
    let mut pr_points = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if positive[order[i]] {
                tp += 1;
                ap_sum += tp as f64 / (i + 1) as f64;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let tpr = tp as f64 / n_pos as f64;
        let fpr = fp as f64 / n_neg as f64;
        auroc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        let precision = tp as f64 / (tp + fp) as f64;
        auprc += (tpr - prev_recall) * precision;
        pr_points.push((tpr, precision));
        prev_fpr = fpr;
        prev_tpr = tpr;
        prev_recall = tpr;
    }
    Some(ClassMetrics {
        class,
        positives: n_pos,
        auroc,
        auprc,
        average_precision: ap_sum / n_pos as f64,
        pr_points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(p1: &[f64]) -> Vec<Vec<f64>> {
        p1.iter().map(|&p| vec![1.0 - p, p]).collect()
    }

    #[test]
    fn separable_scores_are_perfect() {
        let r = classification_metrics(&binary(&[0.9, 0.8, 0.2, 0.1]), &[1, 1, 0, 0]).unwrap();
        assert_eq!((r.auroc, r.auprc, r.map), (1.0, 1.0, 1.0));
    }

    #[test]
    fn single_class_is_undefined() {
        let e = classification_metrics(&binary(&[0.9, 0.8]), &[1, 1]).unwrap_err();
        assert!(matches!(e, Error::UndefinedMetric(_)));
    }

    #[test]
    fn rows_must_be_distributions() {
        assert!(classification_metrics(&[vec![0.5, 0.6], vec![0.5, 0.5]], &[0, 1]).is_err());
    }

    #[test]
    fn full_tie_gives_half_auroc_and_base_rate_precision() {
        let r = classification_metrics(&binary(&[0.5; 4]), &[1, 0, 0, 0]).unwrap();
        let c1 = &r.classes[1];
        assert_eq!(c1.auroc, 0.5);
        assert_eq!(c1.auprc, 0.25);
        // stable order puts the positive first
        assert_eq!(c1.average_precision, 1.0);
    }

    #[test]
    fn classes_without_positives_are_skipped() {
        let rows = vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.3, 0.1]];
        let r = classification_metrics(&rows, &[0, 1]).unwrap();
        assert_eq!(r.skipped, vec![2]);
        assert_eq!(r.classes.len(), 2);
    }
}
