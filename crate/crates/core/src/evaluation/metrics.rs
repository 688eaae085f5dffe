use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Area under the ROC curve, with tied scores sharing their average rank.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::validation("scores and labels differ in length"));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::validation("AUC needs both positive and negative samples"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::validation("AUC scores contain NaN"));
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
        // ranks are 1-based; ties get the mean of i+1..=j+1
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] {
                rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let p = positives as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub micro: f64,
    pub macro_: f64,
}

/// Per-label confusion counts for multi-label predictions.
#[derive(Debug, Clone)]
pub struct LabelConfusion {
    tp: Vec<u64>,
    fp: Vec<u64>,
    fn_: Vec<u64>,
}

impl LabelConfusion {
    pub fn new(num_labels: usize) -> Self {
        Self {
            tp: vec![0; num_labels],
            fp: vec![0; num_labels],
            fn_: vec![0; num_labels],
        }
    }

    /// Records one node; both slices hold label indices.
    pub fn record(&mut self, truth: &[usize], predicted: &[usize]) {
        for &p in predicted {
            if truth.contains(&p) {
                self.tp[p] += 1;
            } else {
                self.fp[p] += 1;
            }
        }
        for &t in truth {
            if !predicted.contains(&t) {
                self.fn_[t] += 1;
            }
        }
    }

    /// Micro F1 pools all decisions; macro F1 averages per-label F1 over
    /// every label, with 0/0 counted as zero.
    pub fn scores(&self) -> F1Scores {
        let f1 = |tp: u64, fp: u64, fn_: u64| {
            let denom = 2 * tp + fp + fn_;
            if denom == 0 {
                0.0
            } else {
                2.0 * tp as f64 / denom as f64
            }
        };
        let (tp, fp, fn_) = (self.tp.iter().sum(), self.fp.iter().sum(), self.fn_.iter().sum());
        let labels = self.tp.len();
        let macro_ = if labels == 0 {
            0.0
        } else {
            (0..labels).map(|l| f1(self.tp[l], self.fp[l], self.fn_[l])).sum::<f64>() / labels as f64
        };
        F1Scores {
            micro: f1(tp, fp, fn_),
            macro_,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_perfect_inverted_and_tied() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &[false, false, true, true]).unwrap(), 0.0);
        assert_eq!(roc_auc(&[0.5; 4], &[false, true, false, true]).unwrap(), 0.5);
    }

    #[test]
    fn auc_matches_pair_counting() {
        let scores = [0.3, 0.7, 0.7, 0.1, 0.9, 0.4];
        let labels = [true, false, true, false, true, false];
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    wins += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        assert!((roc_auc(&scores, &labels).unwrap() - wins / pairs).abs() < 1e-15);
    }

    #[test]
    fn auc_single_class_is_an_error() {
        assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn f1_counts() {
        let mut c = LabelConfusion::new(3);
        c.record(&[0], &[0]);
        c.record(&[1], &[0]);
        c.record(&[0, 1], &[0, 1]);
        let s = c.scores();
        // tp = 3, fp = 1, fn = 1
        assert!((s.micro - 0.75).abs() < 1e-15);
        // label 0: 2tp,1fp -> 0.8; label 1: 1tp,1fn -> 2/3; label 2: 0
        assert!((s.macro_ - (0.8 + 2.0 / 3.0) / 3.0).abs() < 1e-15);
    }
}
