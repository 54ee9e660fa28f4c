//! Ranking and classification metrics.
//!
//! Everything here is pure `f64` — metrics are reported values, not training
//! signals, so they never ride the tape and never need to be generic.

/// Rank of the true candidate among `others`, counting from 1. Ties take the
/// mean rank of their block: with `b` strictly better scores and `t` ties,
/// the rank is `b + 1 + t/2`. Higher scores are better.
pub fn rank_with_ties(true_score: f64, others: impl Iterator<Item = f64>) -> f64 {
    let mut better = 0u64;
    let mut tied = 0u64;
    for s in others {
        if s > true_score {
            better += 1;
        } else if s == true_score {
            tied += 1;
        }
    }
    better as f64 + 1.0 + tied as f64 / 2.0
}

pub fn mean_reciprocal_rank(ranks: &[f64]) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().map(|r| 1.0 / r).sum::<f64>() / ranks.len() as f64
}

/// Fraction of ranks at or below `k`.
pub fn hits_at(ranks: &[f64], k: usize) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().filter(|&&r| r <= k as f64).count() as f64 / ranks.len() as f64
}

/// Area under the ROC curve by pairwise comparison; a tie counts half.
pub fn roc_auc(positive: &[f64], negative: &[f64]) -> f64 {
    if positive.is_empty() || negative.is_empty() {
        return 0.5;
    }
    let mut wins = 0.0;
    for &p in positive {
        for &n in negative {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (positive.len() * negative.len()) as f64
}

/// Macro-averaged F1 over `num_classes` classes. A class nobody predicted and
/// nobody holds contributes 0, matching the usual zero-division convention.
pub fn macro_f1(predicted: &[usize], gold: &[usize], num_classes: usize) -> f64 {
    assert_eq!(predicted.len(), gold.len(), "prediction/label length");
    assert!(num_classes > 0, "need at least one class");
    let mut tp = vec![0.0_f64; num_classes];
    let mut fp = vec![0.0_f64; num_classes];
    let mut fn_ = vec![0.0_f64; num_classes];
    for (&p, &g) in predicted.iter().zip(gold) {
        if p == g {
            tp[p] += 1.0;
        } else {
            fp[p] += 1.0;
            fn_[g] += 1.0;
        }
    }
    let mut total = 0.0;
    for c in 0..num_classes {
        let precision = if tp[c] + fp[c] > 0.0 { tp[c] / (tp[c] + fp[c]) } else { 0.0 };
        let recall = if tp[c] + fn_[c] > 0.0 { tp[c] / (tp[c] + fn_[c]) } else { 0.0 };
        if precision + recall > 0.0 {
            total += 2.0 * precision * recall / (precision + recall);
        }
    }
    total / num_classes as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reciprocal_rank_and_hits_frozen_values() {
        let ranks = [1.0, 4.0];
        assert_eq!(mean_reciprocal_rank(&ranks), 0.625);
        assert_eq!(hits_at(&ranks, 1), 0.5);
        assert_eq!(hits_at(&ranks, 3), 0.5);
        assert_eq!(hits_at(&ranks, 10), 1.0);
        assert_eq!(mean_reciprocal_rank(&[]), 0.0);
    }

    #[test]
    fn tied_scores_take_the_mean_rank_of_their_block() {
        // Better: 3.0. Tied: the two 2.0s. Ranks 2,3,4 share → mean 3.
        let others = [3.0, 2.0, 2.0, 1.0];
        assert_eq!(rank_with_ties(2.0, others.iter().copied()), 3.0);
        // All candidates identical: ranks 1..=5 share → mean 3.
        assert_eq!(rank_with_ties(0.5, [0.5; 4].iter().copied()), 3.0);
        assert_eq!(rank_with_ties(9.0, [1.0, 2.0].iter().copied()), 1.0);
    }

    #[test]
    fn auc_frozen_value_and_tie_handling() {
        assert_eq!(roc_auc(&[0.9, 0.4], &[0.5, 0.1]), 0.75);
        assert_eq!(roc_auc(&[0.5], &[0.5]), 0.5);
        assert_eq!(roc_auc(&[1.0, 1.0], &[0.0]), 1.0);
        assert_eq!(roc_auc(&[], &[1.0]), 0.5, "degenerate input defaults to chance");
    }

    #[test]
    fn macro_f1_frozen_value() {
        // class 0: P=0.5, R=1.0 ⇒ F1=2/3; class 1: P=1.0, R=2/3 ⇒ F1=0.8.
        let got = macro_f1(&[0, 0, 1, 1], &[0, 1, 1, 1], 2);
        assert!((got - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-15, "macro-F1 {got}");
        assert_eq!(macro_f1(&[1, 1], &[1, 1], 2), 0.5, "absent class drags the average");
        assert_eq!(macro_f1(&[0, 1], &[0, 1], 2), 1.0);
    }
}
