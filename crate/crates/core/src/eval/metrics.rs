//! Classification metrics.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Fraction of exact label matches.
pub fn top1_accuracy(pred: &[usize], labels: &[usize]) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::Input("top-1 accuracy of an empty prediction set".into()));
    }
    if pred.len() != labels.len() {
        return Err(Error::shape(format!("{} predictions for {} labels", pred.len(), labels.len())));
    }
    let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Index of the largest score (first on ties).
pub fn argmax(scores: &[f64]) -> usize {
    scores
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Area under the ROC curve of `scores` for the positive set, counted as the
/// Mann-Whitney statistic: each positive/negative pair ordered correctly
/// scores 1, each tie 1/2.
pub fn auroc_binary(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::shape(format!("{} scores for {} labels", scores.len(), positive.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite score".into()));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Input("AUROC needs both positive and negative examples".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    let (mut u, mut neg_below) = (0.0f64, 0usize);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let pos = order[i..j].iter().filter(|&&k| positive[k]).count();
        let neg = (j - i) - pos;
        u += (pos * neg_below) as f64 + 0.5 * (pos * neg) as f64;
        neg_below += neg;
        i = j;
    }
    Ok(u / (n_pos * n_neg) as f64)
}

/// Per-class one-vs-rest AUROC for `scores: [n][K]`.
pub fn auroc_per_class(scores: &[Vec<f64>], labels: &[usize]) -> Result<Vec<f64>> {
    let k = scores.first().map_or(0, Vec::len);
    if scores.is_empty() || k == 0 {
        return Err(Error::Input("AUROC of an empty score matrix".into()));
    }
    if scores.len() != labels.len() || scores.iter().any(|r| r.len() != k) {
        return Err(Error::shape(format!(
            "score matrix of {} rows (width {k}) for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Input(format!("label {bad} outside 0..{k}")));
    }
    if let Some(c) = (0..k).find(|c| !labels.contains(c)) {
        return Err(Error::DegenerateClass(c));
    }
    (0..k)
        .map(|c| {
            let col: Vec<f64> = scores.iter().map(|r| r[c]).collect();
            let pos: Vec<bool> = labels.iter().map(|&l| l == c).collect();
            auroc_binary(&col, &pos)
        })
        .collect()
}

/// Unweighted mean of the one-vs-rest AUROCs.
pub fn auroc_macro_ovr(scores: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let per = auroc_per_class(scores, labels)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(scores: &[f64], positive: &[bool]) -> f64 {
        let mut u = 0.0;
        let mut pairs = 0usize;
        for (i, &p) in positive.iter().enumerate() {
            for (j, &q) in positive.iter().enumerate() {
                if p && !q {
                    pairs += 1;
                    u += match scores[i].partial_cmp(&scores[j]).unwrap() {
                        Ordering::Greater => 1.0,
                        Ordering::Equal => 0.5,
                        Ordering::Less => 0.0,
                    };
                }
            }
        }
        u / pairs as f64
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(top1_accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(top1_accuracy(&[0, 1, 2, 3], &[0, 1, 0, 0]).unwrap(), 0.5);
        assert!(top1_accuracy(&[], &[]).is_err());
        assert!(top1_accuracy(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn worked_binary_example() {
        let a = auroc_binary(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert_eq!(a, 0.75);
    }

    #[test]
    fn separating_and_constant_scores() {
        let labels = [0, 1, 2, 3, 0, 1, 2, 3];
        let onehot: Vec<Vec<f64>> = labels
            .iter()
            .map(|&l| (0..4).map(|c| if c == l { 1.0 } else { 0.0 }).collect())
            .collect();
        assert_eq!(auroc_macro_ovr(&onehot, &labels).unwrap(), 1.0);
        let flat = vec![vec![0.25; 4]; 8];
        assert_eq!(auroc_macro_ovr(&flat, &labels).unwrap(), 0.5);
    }

    #[test]
    fn absent_class_is_named() {
        let scores = vec![vec![0.5; 4]; 3];
        assert!(matches!(auroc_macro_ovr(&scores, &[0, 1, 3]), Err(Error::DegenerateClass(2))));
    }

    #[test]
    fn argmax_prefers_first() {
        assert_eq!(argmax(&[0.1, 0.7, 0.7, 0.2]), 1);
    }

    proptest! {
        #[test]
        fn matches_pair_counting(
            rows in proptest::collection::vec((0u8..6, 0usize..4), 8..100),
        ) {
            let mut labels: Vec<usize> = rows.iter().map(|r| r.1).collect();
            labels[..4].copy_from_slice(&[0, 1, 2, 3]);
            let scores: Vec<Vec<f64>> = rows
                .iter()
                .enumerate()
                .map(|(i, r)| (0..4).map(|c| ((r.0 as usize + i * c) % 5) as f64 / 4.0).collect())
                .collect();
            let per = auroc_per_class(&scores, &labels).unwrap();
            for (c, &a) in per.iter().enumerate() {
                let col: Vec<f64> = scores.iter().map(|r| r[c]).collect();
                let pos: Vec<bool> = labels.iter().map(|&l| l == c).collect();
                prop_assert_eq!(a, brute(&col, &pos));
            }
        }
    }
}
