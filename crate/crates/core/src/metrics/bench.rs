use std::time::Instant;

use super::Timing;
use crate::backbone::Backbone;
use crate::error::{Error, Result};
use crate::heads::{diagnose, HeadParams};
use crate::numerics::{median, Tensor};

/// Raw per-repetition timings in nanoseconds per query.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchSamples {
    pub detached: Vec<f64>,
    pub attached: Vec<f64>,
}

impl BenchSamples {
    pub fn timing(&self) -> Timing {
        let base = median(&self.detached).unwrap_or(f64::NAN);
        let with = median(&self.attached).unwrap_or(f64::NAN);
        let dev: Vec<f64> = self.detached.iter().map(|v| (v - base).abs()).collect();
        Timing {
            reps: self.detached.len(),
            backbone_ns_per_sample: base,
            with_heads_ns_per_sample: with,
            relative_overhead: (with - base) / base,
            backbone_mad_ns: median(&dev).unwrap_or(f64::NAN),
        }
    }
}

/// Times `diagnose` without and with `heads` over `reps` repetitions of
/// every task, after one warm-up pass. The two variants alternate within
/// each repetition.
pub fn bench_inference(
    backbone: &Backbone,
    heads: &[HeadParams],
    tasks: &[(Tensor, Tensor)],
    reps: usize,
) -> Result<BenchSamples> {
    if reps < 10 {
        return Err(Error::Domain(format!("benchmark needs at least 10 repetitions, got {reps}")));
    }
    if tasks.is_empty() {
        return Err(Error::Domain("benchmark needs at least one task".into()));
    }
    let n: usize = tasks.iter().map(|(_, q)| q.rows()).sum();
    let run = |hs: &[HeadParams]| -> Result<f64> {
        let t0 = Instant::now();
        for (c, q) in tasks {
            std::hint::black_box(diagnose(backbone, hs, c, q)?);
        }
        Ok(t0.elapsed().as_nanos() as f64 / n as f64)
    };
    run(heads)?;
    run(&[])?;
    let mut s = BenchSamples {
        detached: Vec::with_capacity(reps),
        attached: Vec::with_capacity(reps),
    };
    for rep in 0..reps {
        if rep % 2 == 0 {
            s.detached.push(run(&[])?);
            s.attached.push(run(heads)?);
        } else {
            s.attached.push(run(heads)?);
            s.detached.push(run(&[])?);
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::BackboneConfig;
    use crate::numerics::RandomSource;

    #[test]
    fn null_comparison_and_guards() {
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
        let tasks = vec![(
            Tensor::matrix(30, 4, rng.normal_vec(120)).unwrap(),
            Tensor::matrix(20, 4, rng.normal_vec(80)).unwrap(),
        )];
        assert!(bench_inference(&b, &[], &tasks, 5).is_err());
        let s = bench_inference(&b, &[], &tasks, 30).unwrap();
        let t = s.timing();
        assert_eq!(t.reps, 30);
        assert!(t.backbone_ns_per_sample > 0.0);
        assert!(t.relative_overhead.abs() < 0.5, "{t:?}");
    }
}
