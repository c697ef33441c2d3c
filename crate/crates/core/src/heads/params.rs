use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HeadSpec;
use crate::backbone::container;
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamSet, RandomSource, Tensor, Var};

pub const HEAD_MAGIC: &[u8; 4] = b"FMXH";
const INIT_STD: f64 = 0.02;

#[derive(Serialize, Deserialize)]
struct HeadHeader {
    spec: HeadSpec,
    token_dim: usize,
}

/// Two affine layers with a GELU between: `token_dim → 2·token_dim → out`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams {
    pub spec: HeadSpec,
    pub token_dim: usize,
    pub params: ParamSet,
}

impl HeadParams {
    fn shapes(spec: &HeadSpec, token_dim: usize) -> Vec<(String, Vec<usize>)> {
        let h = 2 * token_dim;
        vec![
            ("w1".into(), vec![token_dim, h]),
            ("b1".into(), vec![h]),
            ("w2".into(), vec![h, spec.output_dim]),
            ("b2".into(), vec![spec.output_dim]),
        ]
    }

    /// Normal(0, 0.02) weights and zero biases.
    pub fn init(spec: HeadSpec, token_dim: usize, rng: &mut RandomSource) -> Result<Self> {
        if token_dim == 0 || spec.output_dim == 0 {
            return Err(Error::Contract("head dimensions must be positive".into()));
        }
        let mut params = ParamSet::new();
        for (name, shape) in Self::shapes(&spec, token_dim) {
            let n = shape.iter().product();
            let data = if name.starts_with('w') {
                rng.normal_vec(n).into_iter().map(|z| z * INIT_STD).collect()
            } else {
                vec![0.0; n]
            };
            params.insert(name, Tensor::new(shape, data)?.into_param());
        }
        Ok(Self { spec, token_dim, params })
    }

    pub fn set_trainable(&mut self, on: bool) {
        for t in self.params.values_mut() {
            t.requires_grad = on;
            t.grad = None;
        }
    }

    fn check(&self, z: &Tensor) -> Result<()> {
        if z.shape().len() != 2 || z.cols() != self.token_dim {
            return Err(Error::Contract(format!(
                "head `{}` expects width {} but embeddings have shape {:?}",
                self.spec.name,
                self.token_dim,
                z.shape()
            )));
        }
        Ok(())
    }

    pub fn forward_on(&self, g: &mut Graph, z: Var) -> Result<Var> {
        self.check(g.value(z))?;
        let p = |g: &mut Graph, n: &str| g.param(&self.params, n);
        let (w1, b1, w2, b2) = (p(g, "w1")?, p(g, "b1")?, p(g, "w2")?, p(g, "b2")?);
        let h = g.linear(z, w1, b1)?;
        let h = g.gelu(h);
        g.linear(h, w2, b2)
    }

    /// Outputs for each row of `z`, `n × output_dim`.
    pub fn forward(&self, z: &Tensor) -> Result<Tensor> {
        self.check(z)?;
        let mut g = Graph::inference();
        let zv = g.constant(z.clone());
        let out = self.forward_on(&mut g, zv)?;
        Ok(g.value(out).clone())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let json = serde_json::to_string(&HeadHeader {
            spec: self.spec.clone(),
            token_dim: self.token_dim,
        })?;
        Ok(container::encode(HEAD_MAGIC, &json, &self.params))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (json, params) = container::decode(bytes, HEAD_MAGIC)?;
        let header: HeadHeader = serde_json::from_str(&json).map_err(|e| Error::Load(format!("head header: {e}")))?;
        container::check_shapes(&params, &Self::shapes(&header.spec, header.token_dim))?;
        Ok(Self {
            spec: header.spec,
            token_dim: header.token_dim,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
