use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::Tier;

/// Counts for one predicted tier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TierRow {
    pub tier: Tier,
    pub count_normal: usize,
    pub count_outlier: usize,
    /// `None` when no query was predicted into this tier.
    pub mistake_fraction: Option<f64>,
}

impl TierRow {
    pub fn count(&self) -> usize {
        self.count_normal + self.count_outlier
    }

    /// Queries whose label disagrees with the side of the tier.
    pub fn mistakes(&self) -> usize {
        if self.tier.is_normal() {
            self.count_outlier
        } else {
            self.count_normal
        }
    }
}

fn check(pred: &[Tier], labels: &[u8]) -> Result<()> {
    if pred.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} predicted tiers but {} labels",
            pred.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Per predicted tier: true normals, true outliers and the fraction of
/// mistakes (a normal tier holding an outlier or vice versa).
pub fn tier_table(pred: &[Tier], labels: &[u8]) -> Result<Vec<TierRow>> {
    check(pred, labels)?;
    let mut rows: Vec<TierRow> = Tier::ALL
        .iter()
        .map(|&tier| TierRow {
            tier,
            count_normal: 0,
            count_outlier: 0,
            mistake_fraction: None,
        })
        .collect();
    for (&t, &y) in pred.iter().zip(labels) {
        let row = &mut rows[t.index()];
        if y == 1 {
            row.count_outlier += 1;
        } else {
            row.count_normal += 1;
        }
    }
    for row in &mut rows {
        if row.count() > 0 {
            row.mistake_fraction = Some(row.mistakes() as f64 / row.count() as f64);
        }
    }
    Ok(rows)
}

/// Sums tables built over several tasks and recomputes the fractions.
pub fn merge_tier_tables(tables: &[Vec<TierRow>]) -> Vec<TierRow> {
    let mut rows = tier_table(&[], &[]).expect("empty input");
    for table in tables {
        for (acc, row) in rows.iter_mut().zip(table) {
            acc.count_normal += row.count_normal;
            acc.count_outlier += row.count_outlier;
        }
    }
    for row in &mut rows {
        row.mistake_fraction = (row.count() > 0).then(|| row.mistakes() as f64 / row.count() as f64);
    }
    rows
}

/// Mean label per predicted tier; `None` for empty tiers.
pub fn outlier_fraction_by_tier(pred: &[Tier], labels: &[u8]) -> Result<[Option<f64>; 4]> {
    let table = tier_table(pred, labels)?;
    Ok(std::array::from_fn(|i| {
        let r = &table[i];
        (r.count() > 0).then(|| r.count_outlier as f64 / r.count() as f64)
    }))
}

/// Renders an optional number, with "—" for undefined values.
pub fn render(v: Option<f64>) -> String {
    v.map_or_else(|| "—".to_string(), |x| format!("{x:.16e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RandomSource;
    use Tier::*;

    #[test]
    fn table_row_shape() {
        let mut pred = vec![SN; 688];
        let mut labels = vec![0u8; 684];
        labels.extend([1; 4]);
        pred.extend([SO; 7]);
        labels.push(0);
        labels.extend([1; 6]);
        let t = tier_table(&pred, &labels).unwrap();
        assert_eq!((t[0].count_normal, t[0].count_outlier), (684, 4));
        assert!((t[0].mistake_fraction.unwrap() - 0.0058).abs() < 5e-5);
        assert!((t[3].mistake_fraction.unwrap() - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(t[1].mistake_fraction, None);
        assert_eq!(t.iter().map(TierRow::count).sum::<usize>(), pred.len());
    }

    #[test]
    fn all_surely_normal_and_correct() {
        let t = tier_table(&[SN; 5], &[0; 5]).unwrap();
        assert_eq!(t[0].mistake_fraction, Some(0.0));
    }

    #[test]
    fn outlier_fractions() {
        let f = outlier_fraction_by_tier(&[SN, SO, SN, SO], &[0, 1, 0, 1]).unwrap();
        assert_eq!(f, [Some(0.0), None, None, Some(1.0)]);
        let f = outlier_fraction_by_tier(&[LN, LO], &[1, 1]).unwrap();
        assert_eq!(f, [None, Some(1.0), Some(1.0), None]);

        let mut rng = RandomSource::new(1, 0);
        let pred: Vec<Tier> = (0..200).map(|_| Tier::from_index(rng.integer_range(0, 3).unwrap()).unwrap()).collect();
        let y: Vec<u8> = (0..200).map(|_| rng.integer_range(0, 1).unwrap() as u8).collect();
        let f = outlier_fraction_by_tier(&pred, &y).unwrap();
        for t in Tier::ALL {
            let group: Vec<f64> = (0..200).filter(|&i| pred[i] == t).map(|i| y[i] as f64).collect();
            let mean = group.iter().sum::<f64>() / group.len() as f64;
            assert_eq!(f[t.index()], Some(mean));
        }
    }

    #[test]
    fn merged_tables_sum_counts() {
        let a = tier_table(&[SN, LO], &[0, 0]).unwrap();
        let b = tier_table(&[SN], &[1]).unwrap();
        let m = merge_tier_tables(&[a, b]);
        assert_eq!((m[0].count_normal, m[0].count_outlier), (1, 1));
        assert_eq!(m[2].mistake_fraction, Some(1.0));
        assert_eq!(render(None), "—");
    }
}
