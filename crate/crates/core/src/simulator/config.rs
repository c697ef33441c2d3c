use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prior over synthetic outlier-detection tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatorConfig {
    /// Padded feature count every task is embedded into.
    pub d_max: usize,
    /// Inclusive range of active dimensionality.
    pub d_range: [usize; 2],
    /// Inclusive range of mixture component counts.
    pub m_range: [usize; 2],
    pub center_range: [f64; 2],
    /// Range of the per-component exponential eigenvalue scale.
    pub eigenvalue_scale_range: [f64; 2],
    /// Probability mass of each component's inlier ellipsoid.
    pub inlier_percentile: f64,
    pub inflation_range: [f64; 2],
    /// Fraction of eigendirections inflated per component.
    pub inflate_fraction_range: [f64; 2],
    pub n_inlier_pool: usize,
    pub n_outlier_pool: usize,
    pub n_context: usize,
    pub n_query: usize,
    /// Share of outliers among the sampled queries.
    pub query_outlier_fraction: f64,
    pub max_rejection_factor: usize,
    /// Fix every eigenbasis to the identity (axis-aligned covariances).
    pub diagonal_only: bool,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self {
            d_max: 16,
            d_range: [2, 16],
            m_range: [1, 5],
            center_range: [-5.0, 5.0],
            eigenvalue_scale_range: [0.2, 2.0],
            inlier_percentile: 0.9,
            inflation_range: [2.0, 10.0],
            inflate_fraction_range: [0.3, 1.0],
            n_inlier_pool: 400,
            n_outlier_pool: 400,
            n_context: 100,
            n_query: 100,
            query_outlier_fraction: 0.5,
            max_rejection_factor: 50,
            diagonal_only: false,
        }
    }
}

impl SimulatorConfig {
    pub fn n_query_outliers(&self) -> usize {
        (self.n_query as f64 * self.query_outlier_fraction).round() as usize
    }

    pub fn n_query_inliers(&self) -> usize {
        self.n_query - self.n_query_outliers()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("simulator: {msg}")));
        let [dlo, dhi] = self.d_range;
        if dlo == 0 || dlo > dhi {
            return bad(format!("d_range {:?} must be a nonempty range of positive integers", self.d_range));
        }
        if dhi > self.d_max {
            return bad(format!("d_range upper bound {dhi} exceeds d_max {}", self.d_max));
        }
        let [mlo, mhi] = self.m_range;
        if mlo == 0 || mlo > mhi {
            return bad(format!("m_range {:?} must be a nonempty range of positive integers", self.m_range));
        }
        for (name, [a, b]) in [
            ("center_range", self.center_range),
            ("eigenvalue_scale_range", self.eigenvalue_scale_range),
            ("inflation_range", self.inflation_range),
            ("inflate_fraction_range", self.inflate_fraction_range),
        ] {
            if !(a.is_finite() && b.is_finite() && a <= b) {
                return bad(format!("{name} [{a}, {b}] must be ordered and finite"));
            }
        }
        if self.eigenvalue_scale_range[0] <= 0.0 {
            return bad("eigenvalue scales must be positive".into());
        }
        if self.inflation_range[0] <= 1.0 {
            return bad("inflation factors must exceed 1".into());
        }
        let [flo, fhi] = self.inflate_fraction_range;
        if flo <= 0.0 || fhi > 1.0 {
            return bad("inflate_fraction_range must lie in (0, 1]".into());
        }
        if !(self.inlier_percentile > 0.0 && self.inlier_percentile < 1.0) {
            return bad(format!("inlier_percentile {} must lie in (0,1)", self.inlier_percentile));
        }
        if !(0.0..=1.0).contains(&self.query_outlier_fraction) {
            return bad("query_outlier_fraction must lie in [0,1]".into());
        }
        if self.n_context == 0 || self.n_query == 0 {
            return bad("n_context and n_query must be positive".into());
        }
        if self.n_context + self.n_query_inliers() > self.n_inlier_pool {
            return bad(format!(
                "n_context {} plus {} query inliers exceeds the inlier pool {}",
                self.n_context,
                self.n_query_inliers(),
                self.n_inlier_pool
            ));
        }
        if self.n_query_outliers() > self.n_outlier_pool {
            return bad("query outliers exceed the outlier pool".into());
        }
        if self.max_rejection_factor == 0 {
            return bad("max_rejection_factor must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SimulatorConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_ranges() {
        let mut c = SimulatorConfig {
            d_range: [5, 3],
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.d_range = [2, 20];
        assert!(c.validate().is_err());
        c.d_range = [2, 8];
        c.inlier_percentile = 1.0;
        assert!(c.validate().is_err());
        c.inlier_percentile = 0.9;
        c.n_context = 390;
        assert!(c.validate().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<SimulatorConfig>(r#"{"d_rnage": [1, 2]}"#);
        assert!(err.is_err());
        let ok: SimulatorConfig = serde_json::from_str(r#"{"m_range": [1, 3]}"#).unwrap();
        assert_eq!(ok.m_range, [1, 3]);
        assert_eq!(ok.d_max, 16);
    }
}
