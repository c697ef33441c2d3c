//! Dense numerical kernel: tensors, reverse-mode gradients, Adam, special
//! functions and the seeded random source.

mod adam;
mod graph;
mod rng;
pub mod special;
mod tensor;

pub use adam::AdamState;
pub use graph::{Gradients, Graph, ParamSet, Var, LAYER_NORM_EPS};
pub use rng::RandomSource;
pub use special::{chi2_quantile, gelu};
pub use tensor::Tensor;

/// Sample median; averages the two central values for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[cfg(test)]
mod gradcheck;
