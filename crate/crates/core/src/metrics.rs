//! Classification metrics.

use crate::error::{Error, Result};

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows of `scores` (`[n, C]`, row-major) whose argmax equals
/// the label.
pub fn accuracy(scores: &[f64], num_classes: usize, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Metric("accuracy of an empty set".into()));
    }
    if scores.len() != labels.len() * num_classes {
        return Err(Error::shape("accuracy: score matrix does not match labels"));
    }
    let correct = scores
        .chunks(num_classes)
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Probability that a random positive scores above a random negative, ties
/// counting one half. Computed from midranks.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape("roc_auc: scores and labels differ in length"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Metric("roc_auc: NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric(
            "roc_auc needs both positive and negative examples".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; tied entries share the mean rank.
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Binary AUC on the class-1 probability for two classes, otherwise the
/// unweighted mean of one-vs-rest AUCs over classes present in `labels`.
pub fn multiclass_auc(probs: &[f64], num_classes: usize, labels: &[usize]) -> Result<f64> {
    if probs.len() != labels.len() * num_classes {
        return Err(Error::shape("auc: probability matrix does not match labels"));
    }
    let column = |c: usize| -> Vec<f64> { probs.chunks(num_classes).map(|r| r[c]).collect() };
    if num_classes == 2 {
        let is_pos: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
        return roc_auc(&column(1), &is_pos);
    }
    let present: Vec<usize> = (0..num_classes).filter(|c| labels.contains(c)).collect();
    if present.len() < 2 {
        return Err(Error::Metric("auc needs at least two classes present".into()));
    }
    let mut total = 0.0;
    for &c in &present {
        let is_pos: Vec<bool> = labels.iter().map(|&y| y == c).collect();
        total += roc_auc(&column(c), &is_pos)?;
    }
    Ok(total / present.len() as f64)
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        let auc = roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert!((auc - 0.75).abs() < 1e-15);
        assert_eq!(roc_auc(&[0.1, 0.2, 0.3], &[false, true, true]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5; 4], &[false, true, false, true]).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::Metric(_))));
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0.9, 0.1, 0.2, 0.8], 2, &[0, 1]).unwrap(), 1.0);
        let constant = [0.6, 0.4, 0.6, 0.4, 0.6, 0.4, 0.6, 0.4];
        assert_eq!(accuracy(&constant, 2, &[0, 1, 0, 1]).unwrap(), 0.5);
        assert_eq!(multiclass_auc(&constant, 2, &[0, 1, 0, 1]).unwrap(), 0.5);
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[0.6, 0.8]);
        assert!((m - 0.7).abs() < 1e-12 && (s - 0.1).abs() < 1e-12);
        assert_eq!(mean_std(&[0.3]).1, 0.0);
    }
}
