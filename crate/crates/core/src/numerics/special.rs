//! Special functions: error function, Gaussian CDF, regularized incomplete
//! gamma and the chi-square quantile.

use crate::error::{Error, Result};

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Exact GELU, `x · Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

pub fn gelu_grad(x: f64) -> f64 {
    normal_cdf(x) + x * normal_pdf(x)
}

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;

/// Regularized lower incomplete gamma `P(a, x)`.
///
/// Power series below `x < a + 1`, Lentz continued fraction for `Q` above.
pub fn gamma_p(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !(x >= 0.0) {
        return Err(Error::Domain(format!("gamma_p needs a > 0, x >= 0; got a={a}, x={x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let log_prefix = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * EPS {
                break;
            }
        }
        Ok((sum * log_prefix.exp()).min(1.0))
    } else {
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < EPS {
                break;
            }
        }
        Ok((1.0 - log_prefix.exp() * h).max(0.0))
    }
}

pub fn chi2_cdf(dof: usize, t: f64) -> Result<f64> {
    if dof == 0 {
        return Err(Error::Domain("chi-square needs at least one degree of freedom".into()));
    }
    if t <= 0.0 {
        return Ok(0.0);
    }
    gamma_p(dof as f64 / 2.0, t / 2.0)
}

pub fn chi2_pdf(dof: usize, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let k = dof as f64 / 2.0;
    ((k - 1.0) * t.ln() - t / 2.0 - k * std::f64::consts::LN_2 - ln_gamma(k)).exp()
}

/// Inverse chi-square CDF: `t` with `P(χ²_dof ≤ t) = q`.
///
/// Safeguarded Newton inside a shrinking bracket; falls back to bisection
/// whenever the Newton step leaves the bracket.
pub fn chi2_quantile(dof: usize, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("quantile probability must lie in (0,1), got {q}")));
    }
    if dof == 0 {
        return Err(Error::Domain("chi-square needs at least one degree of freedom".into()));
    }
    let k = dof as f64;
    let mut lo = 0.0;
    let mut hi = k + 10.0 * (2.0 * k).sqrt() + 10.0;
    while chi2_cdf(dof, hi)? < q {
        lo = hi;
        hi *= 2.0;
    }
    // Wilson–Hilferty start, clamped into the bracket.
    let z = inverse_normal_guess(q);
    let c = 2.0 / (9.0 * k);
    let mut t = (k * (1.0 - c + z * c.sqrt()).powi(3)).clamp(lo, hi);
    if !(t > lo && t < hi) {
        t = 0.5 * (lo + hi);
    }
    for _ in 0..500 {
        let f = chi2_cdf(dof, t)? - q;
        if f == 0.0 {
            return Ok(t);
        }
        if f < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let pdf = chi2_pdf(dof, t);
        let mut next = if pdf > 0.0 { t - f / pdf } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 1e-14 * t.max(1.0) || hi - lo <= 1e-14 * t.max(1.0) {
            return Ok(next);
        }
        t = next;
    }
    Ok(t)
}

// Rough probit for seeding Newton only (Tukey lambda approximation).
fn inverse_normal_guess(q: f64) -> f64 {
    4.91 * (q.powf(0.14) - (1.0 - q).powf(0.14))
}
