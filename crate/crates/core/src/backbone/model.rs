use std::cell::Cell;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{container, BackboneConfig};
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamSet, RandomSource, Tensor, Var};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FMX1";
pub const STD_FLOOR: f64 = 1e-8;
const INIT_STD: f64 = 0.02;

thread_local! {
    static ENCODE_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of encoder passes run on this thread so far.
pub fn encode_calls() -> u64 {
    ENCODE_CALLS.with(Cell::get)
}

/// Dropout mode of a forward pass.
pub enum Dropout<'a> {
    Off,
    On(f64, &'a mut RandomSource),
}

/// Per-feature context statistics used to standardize a task.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Standardizes context and queries with the context's per-feature mean
/// and (population) standard deviation, floored at [`STD_FLOOR`].
pub fn normalize(context: &Tensor, queries: &Tensor) -> Result<(Tensor, Tensor, NormStats)> {
    let (n, d) = (context.rows(), context.cols());
    if queries.cols() != d {
        return Err(Error::dims("normalize", context.shape(), queries.shape()));
    }
    let mut mean = vec![0.0; d];
    let mut std = vec![0.0; d];
    for j in 0..d {
        // Offset by the first row so constant columns give an exact mean.
        let x0 = context.get(0, j);
        let shift: f64 = (0..n).map(|i| context.get(i, j) - x0).sum::<f64>() / n as f64;
        let m = x0 + shift;
        let var = (0..n).map(|i| (context.get(i, j) - m).powi(2)).sum::<f64>() / n as f64;
        mean[j] = m;
        std[j] = var.sqrt().max(STD_FLOOR);
    }
    let apply = |t: &Tensor| {
        let data = t
            .data()
            .chunks(d)
            .flat_map(|row| row.iter().enumerate().map(|(j, &v)| (v - mean[j]) / std[j]).collect::<Vec<_>>())
            .collect();
        Tensor::matrix(t.rows(), d, data)
    };
    let c = apply(context)?;
    let q = apply(queries)?;
    Ok((c, q, NormStats { mean, std }))
}

/// The pretrained encoder plus its outlier head.
#[derive(Clone, Debug, PartialEq)]
pub struct Backbone {
    pub config: BackboneConfig,
    pub params: ParamSet,
}

/// Outlier-detector output for a batch of queries.
#[derive(Clone, Debug, PartialEq)]
pub struct OdOutput {
    /// `n×2`; column 1 is the outlier logit.
    pub logits: Tensor,
    pub p_outlier: Vec<f64>,
}

fn layer(i: usize, name: &str) -> String {
    format!("layer{i}.{name}")
}

impl Backbone {
    /// Names and shapes of every parameter implied by `cfg`.
    pub fn param_shapes(cfg: &BackboneConfig) -> Vec<(String, Vec<usize>)> {
        let (d, h) = (cfg.token_dim, cfg.token_dim * cfg.mlp_ratio);
        let mut out = vec![
            ("embed.w".to_string(), vec![cfg.d_max, d]),
            ("embed.b".to_string(), vec![d]),
        ];
        for i in 0..cfg.n_layers {
            for (name, shape) in [
                ("ln1.g", vec![d]),
                ("ln1.b", vec![d]),
                ("attn.wq", vec![d, d]),
                ("attn.bq", vec![d]),
                ("attn.wk", vec![d, d]),
                ("attn.bk", vec![d]),
                ("attn.wv", vec![d, d]),
                ("attn.bv", vec![d]),
                ("attn.wo", vec![d, d]),
                ("attn.bo", vec![d]),
                ("ln2.g", vec![d]),
                ("ln2.b", vec![d]),
                ("mlp.w1", vec![d, h]),
                ("mlp.b1", vec![h]),
                ("mlp.w2", vec![h, d]),
                ("mlp.b2", vec![d]),
            ] {
                out.push((layer(i, name), shape));
            }
        }
        out.extend([
            ("ln_f.g".to_string(), vec![d]),
            ("ln_f.b".to_string(), vec![d]),
            ("od.w1".to_string(), vec![d, 2 * d]),
            ("od.b1".to_string(), vec![2 * d]),
            ("od.w2".to_string(), vec![2 * d, 2]),
            ("od.b2".to_string(), vec![2]),
        ]);
        out
    }

    /// Normal(0, 0.02) weights, zero biases, unit layer-norm gains.
    pub fn init(config: BackboneConfig, rng: &mut RandomSource) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        for (name, shape) in Self::param_shapes(&config) {
            let n = shape.iter().product();
            let data = if name.ends_with(".g") {
                vec![1.0; n]
            } else if name.contains(".w") {
                rng.normal_vec(n).into_iter().map(|z| z * INIT_STD).collect()
            } else {
                vec![0.0; n]
            };
            params.insert(name, Tensor::new(shape, data)?.into_param());
        }
        Ok(Self { config, params })
    }

    pub fn n_params(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Marks every tensor trainable (`true`) or frozen.
    pub fn set_trainable(&mut self, on: bool) {
        for t in self.params.values_mut() {
            t.requires_grad = on;
            t.grad = None;
        }
    }

    fn check_inputs(&self, context: &Tensor, queries: &Tensor) -> Result<()> {
        let d = self.config.d_max;
        if context.shape().len() != 2 || context.cols() != d {
            return Err(Error::Contract(format!(
                "context shape {:?} does not have d_max = {d} columns",
                context.shape()
            )));
        }
        if queries.shape().len() != 2 || queries.cols() != d {
            return Err(Error::Contract(format!(
                "query shape {:?} does not have d_max = {d} columns",
                queries.shape()
            )));
        }
        Ok(())
    }

    /// Builds the encoder on `g` and returns the `n_query × token_dim`
    /// query embeddings. Context rows attend to all context rows; each
    /// query attends to the context only.
    pub fn encode_on(&self, g: &mut Graph, context: &Tensor, queries: &Tensor, mut dropout: Dropout) -> Result<Var> {
        self.check_inputs(context, queries)?;
        ENCODE_CALLS.with(|c| c.set(c.get() + 1));
        let (ctx, qry, _) = normalize(context, queries)?;
        let nc = ctx.rows();
        let n = nc + qry.rows();
        let mut rows = ctx.into_data();
        rows.extend_from_slice(qry.data());
        let x = g.constant(Tensor::matrix(n, self.config.d_max, rows)?);

        let p = |g: &mut Graph, name: &str| g.param(&self.params, name);
        let mut drop = |g: &mut Graph, v: Var| -> Result<Var> {
            match &mut dropout {
                Dropout::Off => Ok(v),
                Dropout::On(p, rng) => g.dropout(v, *p, rng),
            }
        };

        let (w, b) = (p(g, "embed.w")?, p(g, "embed.b")?);
        let mut h = g.linear(x, w, b)?;
        for i in 0..self.config.n_layers {
            let ln = |g: &mut Graph, h: Var, which: &str| -> Result<Var> {
                let gain = p(g, &layer(i, &format!("{which}.g")))?;
                let bias = p(g, &layer(i, &format!("{which}.b")))?;
                g.layer_norm(h, gain, bias)
            };
            let lin = |g: &mut Graph, x: Var, w: &str, b: &str| -> Result<Var> {
                let w = p(g, &layer(i, w))?;
                let b = p(g, &layer(i, b))?;
                g.linear(x, w, b)
            };
            let a = ln(g, h, "ln1")?;
            let q = lin(g, a, "attn.wq", "attn.bq")?;
            let ca = g.slice_rows(a, 0, nc)?;
            let k = lin(g, ca, "attn.wk", "attn.bk")?;
            let v = lin(g, ca, "attn.wv", "attn.bv")?;
            let att = g.attention(q, k, v, self.config.n_attn_heads)?;
            let o = lin(g, att, "attn.wo", "attn.bo")?;
            let o = drop(g, o)?;
            h = g.add(h, o)?;

            let m = ln(g, h, "ln2")?;
            let m = lin(g, m, "mlp.w1", "mlp.b1")?;
            let m = g.gelu(m);
            let m = lin(g, m, "mlp.w2", "mlp.b2")?;
            let m = drop(g, m)?;
            h = g.add(h, m)?;
        }
        let (gain, bias) = (p(g, "ln_f.g")?, p(g, "ln_f.b")?);
        let h = g.layer_norm(h, gain, bias)?;
        g.slice_rows(h, nc, n)
    }

    /// Outlier-head logits for embeddings `z`.
    pub fn od_logits_on(&self, g: &mut Graph, z: Var) -> Result<Var> {
        let p = |g: &mut Graph, name: &str| g.param(&self.params, name);
        let (w1, b1, w2, b2) = (p(g, "od.w1")?, p(g, "od.b1")?, p(g, "od.w2")?, p(g, "od.b2")?);
        let h = g.linear(z, w1, b1)?;
        let h = g.gelu(h);
        g.linear(h, w2, b2)
    }

    /// Frozen query embeddings, dropout off.
    pub fn embed(&self, context: &Tensor, queries: &Tensor) -> Result<Tensor> {
        let mut g = Graph::inference();
        let z = self.encode_on(&mut g, context, queries, Dropout::Off)?;
        Ok(g.value(z).clone())
    }

    /// Outlier head applied to precomputed embeddings.
    pub fn od_score(&self, z: &Tensor) -> Result<OdOutput> {
        if z.shape().len() != 2 || z.cols() != self.config.token_dim {
            return Err(Error::Contract(format!(
                "embedding shape {:?} does not match token_dim {}",
                z.shape(),
                self.config.token_dim
            )));
        }
        let mut g = Graph::inference();
        let zv = g.constant(z.clone());
        let l = self.od_logits_on(&mut g, zv)?;
        let logits = g.value(l).clone();
        let p_outlier = outlier_probability(&logits);
        Ok(OdOutput { logits, p_outlier })
    }

    /// Embeds and scores in one pass.
    pub fn score(&self, context: &Tensor, queries: &Tensor, dropout: Dropout) -> Result<OdOutput> {
        let mut g = Graph::inference();
        let z = self.encode_on(&mut g, context, queries, dropout)?;
        let l = self.od_logits_on(&mut g, z)?;
        let logits = g.value(l).clone();
        let p_outlier = outlier_probability(&logits);
        Ok(OdOutput { logits, p_outlier })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let json = serde_json::to_string(&self.config)?;
        Ok(container::encode(CHECKPOINT_MAGIC, &json, &self.params))
    }

    /// Decodes a checkpoint; all tensors come back frozen.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (json, params) = container::decode(bytes, CHECKPOINT_MAGIC)?;
        let config: BackboneConfig =
            serde_json::from_str(&json).map_err(|e| Error::Load(format!("checkpoint config: {e}")))?;
        config.validate().map_err(|e| Error::Load(e.to_string()))?;
        container::check_shapes(&params, &Self::param_shapes(&config))?;
        if let Some((name, _)) = params.iter().find(|(_, t)| !t.is_finite()) {
            return Err(Error::Load(format!("tensor `{name}` holds non-finite values")));
        }
        Ok(Self { config, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn fingerprint(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_bytes()?)))
    }
}

/// Softmax probability of the outlier class, computed stably.
pub fn outlier_probability(logits: &Tensor) -> Vec<f64> {
    (0..logits.rows())
        .map(|i| {
            let (a, b) = (logits.get(i, 0), logits.get(i, 1));
            let m = a.max(b);
            let (ea, eb) = ((a - m).exp(), (b - m).exp());
            eb / (ea + eb)
        })
        .collect()
}
