use std::collections::BTreeMap;

use super::ParamSet;
use crate::error::{Error, Result};

/// Bias-corrected Adam moments for every trainable tensor of a [`ParamSet`].
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter with `requires_grad`, then
    /// zeroes the gradients.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        for (name, p) in params.iter() {
            if p.requires_grad && p.grad.is_none() {
                return Err(Error::Contract(format!("parameter `{name}` has no gradient")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (name, p) in params.iter_mut() {
            if !p.requires_grad {
                continue;
            }
            let n = p.len();
            let m = self.first.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let v = self.second.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let g = p.grad.take().expect("checked above");
            for (i, w) in p.data_mut().iter_mut().enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                *w -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            p.grad = Some(vec![0.0; n]);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn single(value: f64, grad: f64) -> ParamSet {
        let mut t = Tensor::new(vec![1], vec![value]).unwrap().into_param();
        t.grad = Some(vec![grad]);
        ParamSet::from([("w".to_string(), t)])
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = single(0.0, 1.0);
        let mut s = AdamState::new(0.001);
        s.step(&mut p).unwrap();
        let expected = -0.001 * 1.0 / (1.0 + 1e-8);
        assert!((p["w"].data()[0] - expected).abs() < 1e-18);
        assert_eq!(p["w"].grad.as_deref(), Some(&[0.0][..]));
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = single(3.5, 0.0);
        let mut s = AdamState::new(0.001);
        for _ in 0..5 {
            p.get_mut("w").unwrap().grad = Some(vec![0.0]);
            s.step(&mut p).unwrap();
        }
        assert_eq!(p["w"].data()[0], 3.5);
    }

    #[test]
    fn two_steps_match_unrolled_recurrence() {
        let g = 0.3;
        let lr = 0.01;
        let mut p = single(1.0, g);
        let mut s = AdamState::new(lr);
        s.step(&mut p).unwrap();
        p.get_mut("w").unwrap().grad = Some(vec![g]);
        s.step(&mut p).unwrap();

        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let mut w = 1.0;
        let (mut m, mut v) = (0.0, 0.0);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            w -= lr * mh / (vh.sqrt() + eps);
        }
        assert!((p["w"].data()[0] - w).abs() < 1e-12);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let t = Tensor::new(vec![1], vec![0.0]).unwrap().into_param();
        let mut p = ParamSet::from([("w".to_string(), t)]);
        assert!(AdamState::new(0.001).step(&mut p).is_err());
    }

    #[test]
    fn frozen_tensors_untouched() {
        let mut p = single(1.0, 1.0);
        p.insert("frozen".into(), Tensor::new(vec![1], vec![2.0]).unwrap());
        AdamState::new(0.1).step(&mut p).unwrap();
        assert_eq!(p["frozen"].data()[0], 2.0);
    }
}
