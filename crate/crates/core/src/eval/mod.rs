//! Score aggregation and evaluation metrics: per-class AUC via the
//! Mann-Whitney rank statistic, prevalence-weighted overall AUC, and
//! single-label accuracy.

use serde::Serialize;

use crate::error::{Error, Result};

/// Sample-level prediction scores with multi-hot ground-truth labels.
#[derive(Clone, Debug)]
pub struct ScoreTable {
    pub sample_ids: Vec<String>,
    pub n_classes: usize,
    /// Row-major (n_samples x n_classes).
    pub scores: Vec<f64>,
    /// Row-major multi-hot labels, entries in {0, 1}.
    pub labels: Vec<u8>,
}

impl ScoreTable {
    pub fn new(sample_ids: Vec<String>, n_classes: usize, scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        let n = sample_ids.len();
        if scores.len() != n * n_classes || labels.len() != n * n_classes {
            return Err(Error::data(format!(
                "score table shape mismatch: {n} samples x {n_classes} classes vs {} scores, {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::numeric("non-finite score in table"));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::data("labels must be 0 or 1"));
        }
        Ok(ScoreTable {
            sample_ids,
            n_classes,
            scores,
            labels,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    fn column(&self, class: usize) -> (Vec<f64>, Vec<u8>) {
        let scores = (0..self.n_samples())
            .map(|i| self.scores[i * self.n_classes + class])
            .collect();
        let labels = (0..self.n_samples())
            .map(|i| self.labels[i * self.n_classes + class])
            .collect();
        (scores, labels)
    }
}

/// Per-class AUC summary.
#[derive(Clone, Debug, Serialize)]
pub struct ClassAuc {
    pub class: usize,
    /// `None` when the class has no positives or no negatives in the
    /// evaluated set.
    pub auc: Option<f64>,
    pub positives: u64,
}

/// Evaluation report: per-class AUCs and the prevalence-weighted mean over
/// the classes whose AUC is defined.
#[derive(Clone, Debug, Serialize)]
pub struct AucReport {
    pub overall: f64,
    pub per_class: Vec<ClassAuc>,
    pub undefined_classes: Vec<usize>,
}

impl AucReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("auc report serialization")
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<8} {:>10} {:>10}\n", "class", "auc", "positives"));
        for c in &self.per_class {
            match c.auc {
                Some(auc) => out.push_str(&format!("{:<8} {:>10.6} {:>10}\n", c.class, auc, c.positives)),
                None => out.push_str(&format!("{:<8} {:>10} {:>10}\n", c.class, "undefined", c.positives)),
            }
        }
        out.push_str(&format!("overall (prevalence-weighted): {:.6}\n", self.overall));
        out
    }
}

/// Exact pair counts behind the Mann-Whitney statistic: positive-over-
/// negative wins, tied pairs, positive count, negative count.
///
/// Counting is done on sorted score groups in integer arithmetic, so the
/// result equals brute-force enumeration over all P*N pairs exactly.
pub fn auc_counts(scores: &[f64], labels: &[u8]) -> Result<(u64, u64, u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::data("auc: scores/labels length mismatch"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::numeric("auc: non-finite score"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    let mut wins = 0u64;
    let mut ties = 0u64;
    let mut neg_below = 0u64;
    let mut pos_total = 0u64;
    let mut neg_total = 0u64;

    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let mut group_pos = 0u64;
        let mut group_neg = 0u64;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                group_pos += 1;
            } else {
                group_neg += 1;
            }
            j += 1;
        }
        wins += group_pos * neg_below;
        ties += group_pos * group_neg;
        neg_below += group_neg;
        pos_total += group_pos;
        neg_total += group_neg;
        i = j;
    }
    Ok((wins, ties, pos_total, neg_total))
}

/// Mann-Whitney AUC: fraction of (positive, negative) pairs ranked
/// correctly, ties counting one half. `None` when undefined (single-class
/// input).
pub fn auc_binary(scores: &[f64], labels: &[u8]) -> Result<Option<f64>> {
    let (wins, ties, p, n) = auc_counts(scores, labels)?;
    if p == 0 || n == 0 {
        return Ok(None);
    }
    Ok(Some((wins as f64 + 0.5 * ties as f64) / (p as f64 * n as f64)))
}

/// Per-class AUC with prevalence weighting: the overall value is
/// `sum(prevalence_c * auc_c) / sum(prevalence_c)` over defined classes,
/// where prevalence is the positive-sample count in the evaluated set.
pub fn weighted_auc(table: &ScoreTable) -> Result<AucReport> {
    let mut per_class = Vec::with_capacity(table.n_classes);
    let mut undefined_classes = Vec::new();
    let mut weighted_sum = 0.0;
    let mut weight_total = 0.0;
    for class in 0..table.n_classes {
        let (scores, labels) = table.column(class);
        let positives = labels.iter().filter(|&&l| l == 1).count() as u64;
        let auc = auc_binary(&scores, &labels)?;
        match auc {
            Some(a) => {
                weighted_sum += positives as f64 * a;
                weight_total += positives as f64;
            }
            None => undefined_classes.push(class),
        }
        per_class.push(ClassAuc {
            class,
            auc,
            positives,
        });
    }
    if weight_total == 0.0 {
        return Err(Error::data(
            "no class has a defined AUC (every class is all-positive or all-negative)",
        ));
    }
    Ok(AucReport {
        overall: weighted_sum / weight_total,
        per_class,
        undefined_classes,
    })
}

/// Mean of segment score vectors: the sample-level score. Plain forward
/// summation divided by the count, so results are reproducible bit-for-bit.
pub fn aggregate_sample_scores(segment_scores: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = segment_scores
        .first()
        .ok_or_else(|| Error::data("sample has no scored segments"))?;
    let dim = first.len();
    let mut acc = vec![0.0f64; dim];
    for seg in segment_scores {
        if seg.len() != dim {
            return Err(Error::data("segment score dimension mismatch"));
        }
        for (a, s) in acc.iter_mut().zip(seg) {
            *a += s;
        }
    }
    let n = segment_scores.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    Ok(acc)
}

/// Single-label accuracy: fraction of samples whose argmax score hits the
/// one-hot label. Argmax ties break to the lowest class index.
pub fn accuracy(table: &ScoreTable) -> Result<f64> {
    let n = table.n_samples();
    if n == 0 {
        return Err(Error::data("empty score table"));
    }
    let mut correct = 0usize;
    for i in 0..n {
        let row = &table.labels[i * table.n_classes..(i + 1) * table.n_classes];
        let ones: Vec<usize> = row
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == 1)
            .map(|(c, _)| c)
            .collect();
        let [target] = ones.as_slice() else {
            return Err(Error::data(format!(
                "sample {} is not one-hot ({} positive labels)",
                table.sample_ids[i],
                ones.len()
            )));
        };
        let scores = &table.scores[i * table.n_classes..(i + 1) * table.n_classes];
        let mut argmax = 0usize;
        for (c, &s) in scores.iter().enumerate() {
            if s > scores[argmax] {
                argmax = c;
            }
        }
        if argmax == *target {
            correct += 1;
        }
    }
    Ok(correct as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force pair enumeration, the independent oracle for the
    /// rank-based statistic.
    pub fn auc_pairs_oracle(scores: &[f64], labels: &[u8]) -> (u64, u64, u64, u64) {
        let mut wins = 0;
        let mut ties = 0;
        let mut p = 0;
        let mut n = 0;
        for (i, &li) in labels.iter().enumerate() {
            if li == 1 {
                p += 1;
                for (j, &lj) in labels.iter().enumerate() {
                    if lj == 0 {
                        if scores[i] > scores[j] {
                            wins += 1;
                        } else if scores[i] == scores[j] {
                            ties += 1;
                        }
                    }
                }
            } else {
                n += 1;
            }
        }
        (wins, ties, p, n)
    }

    #[test]
    fn perfect_ranking() {
        let auc = auc_binary(&[0.9, 0.8, 0.1], &[1, 1, 0]).unwrap();
        assert_eq!(auc, Some(1.0));
    }

    #[test]
    fn single_tied_pair() {
        let auc = auc_binary(&[0.5, 0.5], &[1, 0]).unwrap();
        assert_eq!(auc, Some(0.5));
    }

    #[test]
    fn enumerated_four_pairs() {
        // pairs: (0.9 vs 0.7) win, (0.9 vs 0.3) win, (0.1 vs 0.7) loss,
        // (0.1 vs 0.3) loss -> 2 wins of 4 pairs.
        let auc = auc_binary(&[0.9, 0.7, 0.3, 0.1], &[1, 0, 0, 1]).unwrap();
        assert_eq!(auc, Some(0.5));
    }

    #[test]
    fn undefined_when_single_class() {
        assert_eq!(auc_binary(&[0.1, 0.9], &[1, 1]).unwrap(), None);
        assert_eq!(auc_binary(&[0.1, 0.9], &[0, 0]).unwrap(), None);
    }

    #[test]
    fn matches_pair_enumeration_with_duplicates() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.gen_range(2..200);
            // Coarse score grid forces duplicates.
            let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..10) as f64) / 10.0).collect();
            let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2) as u8).collect();
            assert_eq!(auc_counts(&scores, &labels).unwrap(), auc_pairs_oracle(&scores, &labels));
        }
    }

    #[test]
    fn weighted_auc_example() {
        // class 0: AUC 1.0 with 3 positives.
        // class 1: positive a=0.5 against negatives {0.5 tie, 0.6 loss,
        // 0.2 win} -> (1 + 0.5) / 3 = 0.5 with 1 positive.
        // overall: (3*1.0 + 1*0.5)/4 = 0.875
        let table = ScoreTable::new(
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            2,
            vec![
                0.9, 0.5, //
                0.8, 0.5, //
                0.7, 0.6, //
                0.1, 0.2,
            ],
            vec![
                1, 1, //
                1, 0, //
                1, 0, //
                0, 0,
            ],
        )
        .unwrap();
        let report = weighted_auc(&table).unwrap();
        assert!((report.overall - 0.875).abs() < 1e-12);
        assert_eq!(report.per_class[0].positives, 3);
    }

    #[test]
    fn weighted_auc_flags_undefined() {
        let table = ScoreTable::new(
            vec!["a".into(), "b".into()],
            2,
            vec![0.9, 0.3, 0.1, 0.6],
            vec![1, 1, 0, 1], // class 1 all-positive
        )
        .unwrap();
        let report = weighted_auc(&table).unwrap();
        assert_eq!(report.undefined_classes, vec![1]);
        assert_eq!(report.per_class[1].auc, None);
        assert_eq!(report.overall, 1.0); // only class 0 contributes
    }

    #[test]
    fn aggregation_mean() {
        let out = aggregate_sample_scores(&[vec![0.2], vec![0.4], vec![0.6]]).unwrap();
        assert!((out[0] - 0.4).abs() < 1e-15);
        assert!(aggregate_sample_scores(&[]).is_err());
    }

    #[test]
    fn accuracy_tie_breaks_low_index() {
        let table = ScoreTable::new(
            vec!["a".into(), "b".into()],
            3,
            vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5],
            vec![1, 0, 0, 1, 0, 0],
        )
        .unwrap();
        assert_eq!(accuracy(&table).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_rejects_multi_hot() {
        let table = ScoreTable::new(
            vec!["a".into()],
            2,
            vec![0.9, 0.1],
            vec![1, 1],
        )
        .unwrap();
        assert!(accuracy(&table).is_err());
    }
}
