use super::{Backbone, Dropout};
use crate::error::{Error, Result};
use crate::numerics::{RandomSource, Tensor};

/// Sample standard deviation with the `1/(n-1)` correction.
pub fn sample_std(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::Domain(format!("standard deviation needs at least 2 values, got {n}")));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Ok((ss / (n - 1) as f64).sqrt())
}

/// Spread of the outlier probability over `passes` stochastic forward
/// passes with dropout probability `p`. Pass `t` draws its masks from
/// `rng.derive(t)`.
pub fn mc_dropout_std(
    backbone: &Backbone,
    context: &Tensor,
    queries: &Tensor,
    passes: usize,
    p: f64,
    rng: &RandomSource,
) -> Result<Vec<f64>> {
    if passes < 2 {
        return Err(Error::Domain(format!("MC dropout needs at least 2 passes, got {passes}")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("dropout probability {p} must lie in (0,1)")));
    }
    let n = queries.rows();
    let mut samples = vec![Vec::with_capacity(passes); n];
    for t in 0..passes {
        let mut r = rng.derive(t as u64);
        let out = backbone.score(context, queries, Dropout::On(p, &mut r))?;
        for (s, v) in samples.iter_mut().zip(out.p_outlier) {
            s.push(v);
        }
    }
    samples.iter().map(|s| sample_std(s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::BackboneConfig;

    #[test]
    fn hand_computed_std() {
        assert!((sample_std(&[0.2, 0.4]).unwrap() - 0.02f64.sqrt()).abs() < 1e-15);
        assert_eq!(sample_std(&[0.3; 5]).unwrap(), 0.0);
        assert!(sample_std(&[1.0]).is_err());
    }

    #[test]
    fn seeded_and_guarded() {
        let cfg = BackboneConfig {
            d_max: 4,
            token_dim: 8,
            n_layers: 1,
            n_attn_heads: 2,
            mlp_ratio: 2,
            dropout_p: 0.1,
        };
        let mut rng = RandomSource::new(1, 0);
        let b = Backbone::init(cfg, &mut rng).unwrap();
        let ctx = Tensor::matrix(5, 4, rng.normal_vec(20)).unwrap();
        let q = Tensor::matrix(3, 4, rng.normal_vec(12)).unwrap();
        let a = mc_dropout_std(&b, &ctx, &q, 5, 0.1, &RandomSource::new(3, 3)).unwrap();
        let c = mc_dropout_std(&b, &ctx, &q, 5, 0.1, &RandomSource::new(3, 3)).unwrap();
        assert_eq!(a, c);
        assert!(a.iter().all(|&u| u > 0.0));
        assert!(matches!(mc_dropout_std(&b, &ctx, &q, 1, 0.1, &rng), Err(Error::Domain(_))));
        assert!(matches!(mc_dropout_std(&b, &ctx, &q, 3, 0.0, &rng), Err(Error::Domain(_))));
    }

    proptest::proptest! {
        #[test]
        fn std_ignores_pass_order(v in proptest::collection::vec(0.0f64..1.0, 2..12), seed in 0u64..1000) {
            let perm = RandomSource::new(seed, 0).permutation(v.len());
            let shuffled: Vec<f64> = perm.iter().map(|&i| v[i]).collect();
            let (a, b) = (sample_std(&v).unwrap(), sample_std(&shuffled).unwrap());
            proptest::prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
