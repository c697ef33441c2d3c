use serde::{Deserialize, Serialize};

use super::SimulatorConfig;
use crate::error::{Error, Result};
use crate::numerics::{chi2_quantile, RandomSource};

/// One Gaussian of the inlier mixture, stored in eigen form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Row-major `d×d`; column `i` is the eigenvector for `eigenvalues[i]`.
    pub basis: Vec<f64>,
    pub eigenvalues: Vec<f64>,
}

/// Variance-inflated variant of one component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inflation {
    /// Eigendirections whose variance is multiplied.
    pub directions: Vec<usize>,
    pub factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub d: usize,
    pub d_max: usize,
    pub components: Vec<GaussianComponent>,
    /// Sorted positions of the active features inside the padded space.
    pub active_features: Vec<usize>,
    pub inflation: Vec<Inflation>,
    pub inlier_percentile: f64,
    /// `χ²_d` quantile at `inlier_percentile`.
    pub region_threshold: f64,
    pub max_rejection_factor: usize,
}

impl GaussianComponent {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `‖diag(λ^{-1/2}) Qᵀ (x − μ)‖²`.
    pub fn mahalanobis_sq(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        debug_assert_eq!(x.len(), d);
        let mut total = 0.0;
        for i in 0..d {
            let mut proj = 0.0;
            for r in 0..d {
                proj += self.basis[r * d + i] * (x[r] - self.mean[r]);
            }
            total += proj * proj / self.eigenvalues[i];
        }
        total
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.dim() as f64;
        let log_det: f64 = self.eigenvalues.iter().map(|l| l.ln()).sum();
        -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + log_det + self.mahalanobis_sq(x))
    }

    /// Dense `Q diag(λ) Qᵀ`.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim();
        let mut cov = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..d {
                cov[r * d + c] = (0..d)
                    .map(|i| self.basis[r * d + i] * self.eigenvalues[i] * self.basis[c * d + i])
                    .sum();
            }
        }
        cov
    }

    /// `μ + Q diag(√(λ·s)) z`, where `s` scales selected directions.
    pub fn sample(&self, rng: &mut RandomSource, inflation: Option<&Inflation>) -> Vec<f64> {
        let d = self.dim();
        let mut x = self.mean.clone();
        for i in 0..d {
            let mut var = self.eigenvalues[i];
            if let Some(inf) = inflation {
                if inf.directions.contains(&i) {
                    var *= inf.factor;
                }
            }
            let coef = var.sqrt() * rng.standard_normal();
            for (r, xr) in x.iter_mut().enumerate() {
                *xr += self.basis[r * d + i] * coef;
            }
        }
        x
    }
}

/// Random orthonormal eigenbasis and exponential eigenvalues.
///
/// The basis is the Q factor of a Householder QR of a `d×d` standard-normal
/// matrix, with each column's sign fixed so its diagonal entry is
/// nonnegative (the covariance does not depend on column signs).
/// Eigenvalues are i.i.d. `Exponential(scale)` clamped below at `1e-4·scale`.
pub fn sample_covariance(d: usize, rng: &mut RandomSource, scale: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if d == 0 {
        return Err(Error::Domain("covariance dimension must be positive".into()));
    }
    let a = rng.normal_vec(d * d);
    let basis = householder_q(a, d);
    let floor = 1e-4 * scale;
    let eig = (0..d)
        .map(|_| rng.exponential(scale).map(|l| l.max(floor)))
        .collect::<Result<Vec<_>>>()?;
    Ok((basis, eig))
}

fn householder_q(mut a: Vec<f64>, d: usize) -> Vec<f64> {
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(d);
    for k in 0..d {
        let norm = (k..d).map(|r| a[r * d + k].powi(2)).sum::<f64>().sqrt();
        let x0 = a[k * d + k];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..d).map(|r| a[r * d + k]).collect();
        v[0] -= alpha;
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vn > 0.0 {
            v.iter_mut().for_each(|x| *x /= vn);
            for c in k..d {
                let dot: f64 = (k..d).map(|r| v[r - k] * a[r * d + c]).sum();
                for r in k..d {
                    a[r * d + c] -= 2.0 * v[r - k] * dot;
                }
            }
        }
        reflectors.push(v);
    }
    // Q = H_0 H_1 … H_{d-1} applied to the identity.
    let mut q = vec![0.0; d * d];
    for i in 0..d {
        q[i * d + i] = 1.0;
    }
    for k in (0..d).rev() {
        let v = &reflectors[k];
        for c in 0..d {
            let dot: f64 = (k..d).map(|r| v[r - k] * q[r * d + c]).sum();
            for r in k..d {
                q[r * d + c] -= 2.0 * v[r - k] * dot;
            }
        }
    }
    for c in 0..d {
        if q[c * d + c] < 0.0 {
            for r in 0..d {
                q[r * d + c] = -q[r * d + c];
            }
        }
    }
    q
}

/// Draws a hypothesis from the prior described by `cfg`.
///
/// Mixture weights are equal (`1/m`).
pub fn sample_hypothesis(cfg: &SimulatorConfig, rng: &mut RandomSource) -> Result<Hypothesis> {
    cfg.validate()?;
    let d = rng.integer_range(cfg.d_range[0], cfg.d_range[1])?;
    let m = rng.integer_range(cfg.m_range[0], cfg.m_range[1])?;
    let active_features = rng.subset(d, cfg.d_max)?;
    let [a, b] = cfg.center_range;
    let mut components = Vec::with_capacity(m);
    let mut inflation = Vec::with_capacity(m);
    for _ in 0..m {
        let mean = (0..d)
            .map(|_| if a < b { rng.uniform(a, b) } else { Ok(a) })
            .collect::<Result<Vec<_>>>()?;
        let scale = uniform_or_point(rng, cfg.eigenvalue_scale_range)?;
        let (mut basis, eigenvalues) = sample_covariance(d, rng, scale)?;
        if cfg.diagonal_only {
            basis = identity(d);
        }
        components.push(GaussianComponent {
            weight: 1.0 / m as f64,
            mean,
            basis,
            eigenvalues,
        });
        let frac = uniform_or_point(rng, cfg.inflate_fraction_range)?;
        let k = ((frac * d as f64).round() as usize).clamp(1, d);
        let directions = rng.subset(k, d)?;
        let factor = uniform_or_point(rng, cfg.inflation_range)?;
        inflation.push(Inflation { directions, factor });
    }
    Ok(Hypothesis {
        d,
        d_max: cfg.d_max,
        components,
        active_features,
        inflation,
        inlier_percentile: cfg.inlier_percentile,
        region_threshold: chi2_quantile(d, cfg.inlier_percentile)?,
        max_rejection_factor: cfg.max_rejection_factor,
    })
}

fn uniform_or_point(rng: &mut RandomSource, [a, b]: [f64; 2]) -> Result<f64> {
    if a == b {
        Ok(a)
    } else {
        rng.uniform(a, b)
    }
}

fn identity(d: usize) -> Vec<f64> {
    let mut q = vec![0.0; d * d];
    for i in 0..d {
        q[i * d + i] = 1.0;
    }
    q
}

impl Hypothesis {
    /// Inside the inlier region of at least one component.
    pub fn in_region(&self, x: &[f64]) -> bool {
        self.components
            .iter()
            .any(|c| c.mahalanobis_sq(x) <= self.region_threshold)
    }

    /// Maximum component log-density.
    pub fn log_density_max(&self, x: &[f64]) -> f64 {
        self.components
            .iter()
            .map(|c| c.log_density(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn pick_component(&self, rng: &mut RandomSource) -> usize {
        let u = rng.next_f64();
        let mut acc = 0.0;
        for (j, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                return j;
            }
        }
        self.components.len() - 1
    }

    /// Rejection-samples `n` points that lie inside the inlier region.
    pub fn sample_inliers(&self, n: usize, rng: &mut RandomSource) -> Result<Vec<Vec<f64>>> {
        self.rejection_sample(n, rng, false)
    }

    /// Rejection-samples `n` points from the inflated variant that lie
    /// outside every component's inlier region.
    pub fn sample_outliers(&self, n: usize, rng: &mut RandomSource) -> Result<Vec<Vec<f64>>> {
        self.rejection_sample(n, rng, true)
    }

    fn rejection_sample(&self, n: usize, rng: &mut RandomSource, outliers: bool) -> Result<Vec<Vec<f64>>> {
        if n == 0 {
            return Err(Error::Domain("sample count must be positive".into()));
        }
        let budget = self.max_rejection_factor * n;
        let mut out = Vec::with_capacity(n);
        for _ in 0..budget {
            let j = self.pick_component(rng);
            let inf = outliers.then(|| &self.inflation[j]);
            let x = self.components[j].sample(rng, inf);
            if self.in_region(&x) != outliers {
                out.push(x);
                if out.len() == n {
                    return Ok(out);
                }
            }
        }
        Err(Error::Simulator(format!(
            "rejection budget of {budget} draws exhausted with {} of {n} {} accepted",
            out.len(),
            if outliers { "outliers" } else { "inliers" }
        )))
    }

    /// Embeds an active-coordinate point into the padded space.
    pub fn pad(&self, x: &[f64]) -> Vec<f64> {
        let mut row = vec![0.0; self.d_max];
        for (&pos, &v) in self.active_features.iter().zip(x) {
            row[pos] = v;
        }
        row
    }
}
