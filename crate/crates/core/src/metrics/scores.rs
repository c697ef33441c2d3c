use crate::error::{Error, Result};

/// One-based ranks with ties given the average of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        // positions i+1 ..= j share the mean rank
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

fn class_counts(labels: &[u8]) -> Result<(usize, usize)> {
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "needs both classes, got {neg} negatives and {pos} positives"
        )));
    }
    Ok((neg, pos))
}

fn check_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Contract(format!("{what}: {a} scores but {b} labels")));
    }
    Ok(())
}

/// Area under the ROC curve via the Mann–Whitney statistic; ties count ½.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_len(scores.len(), labels.len(), "auroc")?;
    let (neg, pos) = class_counts(labels)?;
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &y)| y == 1).map(|(r, _)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos * neg) as f64)
}

/// Mean per-class recall over `k` classes; every class must occur in `truth`.
pub fn balanced_accuracy(pred: &[usize], truth: &[usize], k: usize) -> Result<f64> {
    let (recall, missing) = per_class_recall(pred, truth, k)?;
    if let Some(c) = missing.first() {
        return Err(Error::UndefinedMetric(format!("class {c} absent from the true labels")));
    }
    Ok(recall.iter().flatten().sum::<f64>() / k as f64)
}

/// Balanced accuracy over the classes present in `truth`, plus the classes
/// that were dropped.
pub fn balanced_accuracy_present(pred: &[usize], truth: &[usize], k: usize) -> Result<(f64, Vec<usize>)> {
    let (recall, missing) = per_class_recall(pred, truth, k)?;
    let present: Vec<f64> = recall.into_iter().flatten().collect();
    if present.is_empty() {
        return Err(Error::UndefinedMetric("no true labels".into()));
    }
    Ok((present.iter().sum::<f64>() / present.len() as f64, missing))
}

fn per_class_recall(pred: &[usize], truth: &[usize], k: usize) -> Result<(Vec<Option<f64>>, Vec<usize>)> {
    check_len(pred.len(), truth.len(), "balanced_accuracy")?;
    if let Some(&c) = pred.iter().chain(truth).find(|&&c| c >= k) {
        return Err(Error::Contract(format!("class {c} out of range for {k} classes")));
    }
    let mut hit = vec![0usize; k];
    let mut total = vec![0usize; k];
    for (&p, &t) in pred.iter().zip(truth) {
        total[t] += 1;
        hit[t] += usize::from(p == t);
    }
    let recall: Vec<Option<f64>> = (0..k)
        .map(|c| (total[c] > 0).then(|| hit[c] as f64 / total[c] as f64))
        .collect();
    let missing = (0..k).filter(|&c| total[c] == 0).collect();
    Ok((recall, missing))
}

/// Pearson correlation of average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!("spearman: lengths {} and {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::UndefinedMetric("spearman needs at least 2 points".into()));
    }
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Pearson correlation; constant inputs are undefined.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedMetric("correlation of a constant input".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// F1 from confusion counts; zero when nothing is predicted positive.
pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

/// Threshold `τ` maximizing F1 under the rule `score > τ`.
///
/// Candidates are `-∞`, the midpoints between consecutive distinct sorted
/// scores and `+∞`; among equal F1 the smallest `τ` wins.
pub fn f1_optimal_threshold(scores: &[f64], labels: &[u8]) -> Result<(f64, f64)> {
    check_len(scores.len(), labels.len(), "f1_optimal_threshold")?;
    let (_, pos) = class_counts(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // τ = -∞: everything predicted positive.
    let mut tp = pos;
    let mut fp = scores.len() - pos;
    let mut best = (f64::NEG_INFINITY, f1_from_counts(tp, fp, 0));
    let mut i = 0;
    while i < order.len() {
        let v = scores[order[i]];
        while i < order.len() && scores[order[i]] == v {
            if labels[order[i]] == 1 {
                tp -= 1;
            } else {
                fp -= 1;
            }
            i += 1;
        }
        let tau = if i < order.len() {
            0.5 * (v + scores[order[i]])
        } else {
            f64::INFINITY
        };
        let f1 = f1_from_counts(tp, fp, pos - tp);
        if f1 > best.1 {
            best = (tau, f1);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RandomSource;

    fn pairwise_auroc(s: &[f64], y: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if y[i] == 1 && y[j] == 0 {
                    den += 1.0;
                    num += if s[i] > s[j] {
                        1.0
                    } else if s[i] == s[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn auroc_cases() {
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.9, 0.8, 0.2, 0.1], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(auroc(&[0.3; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
        assert!(matches!(auroc(&[0.1, 0.2], &[1, 1]), Err(Error::UndefinedMetric(_))));
        let mut rng = RandomSource::new(1, 0);
        for _ in 0..50 {
            let s: Vec<f64> = (0..20).map(|_| rng.integer_range(0, 6).unwrap() as f64).collect();
            let y: Vec<u8> = (0..20).map(|i| (i % 3 == 0) as u8).collect();
            assert_eq!(auroc(&s, &y).unwrap(), pairwise_auroc(&s, &y));
        }
    }

    #[test]
    fn balanced_accuracy_cases() {
        assert_eq!(balanced_accuracy(&[0, 1, 2, 3], &[0, 1, 2, 3], 4).unwrap(), 1.0);
        let truth: Vec<usize> = (0..100).map(|i| usize::from(i == 0)).collect();
        assert_eq!(balanced_accuracy(&[0; 100], &truth, 2).unwrap(), 0.5);
        assert!(matches!(balanced_accuracy(&[0, 1], &[0, 0], 2), Err(Error::UndefinedMetric(_))));
        let (v, dropped) = balanced_accuracy_present(&[0, 1], &[0, 0], 4).unwrap();
        assert_eq!((v, dropped), (0.5, vec![1, 2, 3]));
        let mut rng = RandomSource::new(2, 0);
        let n = 40_000;
        let truth: Vec<usize> = (0..n).map(|_| rng.integer_range(0, 3).unwrap()).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.integer_range(0, 3).unwrap()).collect();
        assert!((balanced_accuracy(&pred, &truth, 4).unwrap() - 0.25).abs() < 0.02);
    }

    #[test]
    fn spearman_cases() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let up: Vec<f64> = a.iter().map(|x: &f64| x.exp()).collect();
        let down: Vec<f64> = a.iter().map(|x| -x * x * x).collect();
        assert!((spearman(&a, &up).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&a, &down).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(spearman(&a, &[2.0; 5]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn f1_threshold_cases() {
        let (t, f) = f1_optimal_threshold(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap();
        assert_eq!((t, f), (0.5, 1.0));
        // positives scored lowest: only τ = -∞ recovers them
        let (t, f) = f1_optimal_threshold(&[0.1, 0.9], &[1, 0]).unwrap();
        assert_eq!(t, f64::NEG_INFINITY);
        let (p, r) = (0.5, 1.0);
        assert_eq!(f, 2.0 * p * r / (p + r));
        assert!(f1_optimal_threshold(&[0.1, 0.9], &[0, 0]).is_err());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    proptest::proptest! {
        #[test]
        fn auroc_and_spearman_ignore_monotone_transforms(
            s in proptest::collection::vec(-3.0f64..3.0, 4..30),
            seed in 0u64..1000,
        ) {
            let y: Vec<u8> = (0..s.len()).map(|i| (i % 2) as u8).collect();
            let t: Vec<f64> = s.iter().map(|v| (2.0 * v).exp() + 1.0).collect();
            proptest::prop_assert_eq!(auroc(&s, &y).unwrap(), auroc(&t, &y).unwrap());
            let b = RandomSource::new(seed, 0).normal_vec(s.len());
            if let (Ok(a1), Ok(a2)) = (spearman(&s, &b), spearman(&t, &b)) {
                proptest::prop_assert!((a1 - a2).abs() < 1e-12);
            }
        }

        #[test]
        fn f1_at_returned_threshold_recomputes(
            s in proptest::collection::vec(0u8..8, 3..40),
            ybits in proptest::collection::vec(0u8..2, 3..40),
        ) {
            let n = s.len().min(ybits.len());
            let s: Vec<f64> = s[..n].iter().map(|&v| v as f64 / 8.0).collect();
            let y = &ybits[..n];
            proptest::prop_assume!(y.contains(&0) && y.contains(&1));
            let (tau, f1) = f1_optimal_threshold(&s, y).unwrap();
            let tp = (0..n).filter(|&i| s[i] > tau && y[i] == 1).count();
            let fp = (0..n).filter(|&i| s[i] > tau && y[i] == 0).count();
            let fneg = (0..n).filter(|&i| s[i] <= tau && y[i] == 1).count();
            let prec = tp as f64 / (tp + fp).max(1) as f64;
            let rec = tp as f64 / (tp + fneg) as f64;
            let expect = if tp == 0 { 0.0 } else { 2.0 * prec * rec / (prec + rec) };
            proptest::prop_assert!((f1 - expect).abs() < 1e-12);
        }

        #[test]
        fn balanced_accuracy_relabel_symmetry(
            pairs in proptest::collection::vec((0usize..4, 0usize..4), 8..60),
            seed in 0u64..100,
        ) {
            let pred: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let truth: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let perm = RandomSource::new(seed, 0).permutation(4);
            let rp: Vec<usize> = pred.iter().map(|&c| perm[c]).collect();
            let rt: Vec<usize> = truth.iter().map(|&c| perm[c]).collect();
            let a = balanced_accuracy_present(&pred, &truth, 4).unwrap().0;
            let b = balanced_accuracy_present(&rp, &rt, 4).unwrap().0;
            proptest::prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
