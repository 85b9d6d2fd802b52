//! Classification and ranking metrics.

use crate::error::{Error, Result};

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_aligned(pred.len(), truth.len())?;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Unweighted mean of per-class F1 over classes `0..num_classes`; a class
/// with no true or predicted members scores 0.
pub fn f1_macro(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<f64> {
    check_aligned(pred.len(), truth.len())?;
    if num_classes == 0 {
        return Err(Error::Metric("num_classes must be positive".into()));
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fn_ = vec![0usize; num_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= num_classes || t >= num_classes {
            return Err(Error::Metric(format!("class index out of range for {num_classes} classes")));
        }
        if p == t {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let total: f64 = (0..num_classes)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum();
    Ok(total / num_classes as f64)
}

/// Area under the ROC curve: the probability that a positive outranks a
/// negative, ties counted half. Computed from average ranks.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_aligned(scores.len(), labels.len())?;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric("AUC needs at least one positive and one negative".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Metric("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Ranks are 1-based; a tie group over ranks i+1..=j gets (i+1+j)/2.
    let mut pos_rank_sum2: u128 = 0; // twice the rank sum, kept integral
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let twice_avg = (i + 1 + j) as u128;
        for &k in &order[i..j] {
            if labels[k] {
                pos_rank_sum2 += twice_avg;
            }
        }
        i = j;
    }
    let p = pos as u128;
    let twice_u = pos_rank_sum2 - p * (p + 1);
    Ok(twice_u as f64 / (2.0 * pos as f64 * neg as f64))
}

fn check_aligned(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Metric(format!("{a} predictions vs {b} targets")));
    }
    if a == 0 {
        return Err(Error::Metric("empty input".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_worked_cases() {
        assert_eq!(accuracy(&[0, 1], &[0, 1]).unwrap(), 1.0);
        assert_eq!(f1_macro(&[0, 1], &[0, 1], 2).unwrap(), 1.0);
        assert!((accuracy(&[0, 0, 0], &[0, 0, 1]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((f1_macro(&[0, 0, 0], &[0, 0, 1], 2).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn degenerate_single_class() {
        let t = [2, 2, 2];
        assert_eq!(accuracy(&t, &t).unwrap(), 1.0);
        assert!((f1_macro(&t, &t, 3).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn auc_cases() {
        assert_eq!(auc(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 4], &[true, false, true, false]).unwrap(), 0.5);
        assert_eq!(auc(&[0.1, 0.9], &[true, false]).unwrap(), 0.0);
    }

    #[test]
    fn empty_and_misaligned_inputs_error() {
        assert!(accuracy(&[], &[]).is_err());
        assert!(f1_macro(&[0], &[0, 1], 2).is_err());
        assert!(auc(&[0.1], &[true]).is_err());
    }
}
