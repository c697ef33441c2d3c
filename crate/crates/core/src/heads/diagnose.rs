use std::path::Path;

use serde::{Deserialize, Serialize};

use super::registry::argmax;
use super::{dataset_estimate, HeadParams, HeadRegistry};
use crate::backbone::{Backbone, OdOutput};
use crate::error::{Error, Result};
use crate::metrics::render;
use crate::numerics::Tensor;
use crate::simulator::Tier;

/// Per-query diagnostic record.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryDiagnosis {
    pub p_outlier: f64,
    pub tier_probs: Option<[f64; 4]>,
    pub tier: Option<Tier>,
    pub log_u: Option<f64>,
}

/// Dataset-level summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetDiagnosis {
    pub n_query: usize,
    pub heads: Vec<String>,
    pub mean_p_outlier: f64,
    pub auroc_estimate: Option<f64>,
    pub threshold_estimate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnosis {
    pub od: OdOutput,
    pub queries: Vec<QueryDiagnosis>,
    pub dataset: DatasetDiagnosis,
}

/// Checks each head against the backbone width and the registry, and
/// rejects duplicates.
pub fn check_heads(backbone: &Backbone, heads: &[HeadParams]) -> Result<()> {
    let registry = HeadRegistry::builtin();
    for (i, h) in heads.iter().enumerate() {
        if h.token_dim != backbone.config.token_dim {
            return Err(Error::Contract(format!(
                "head `{}` has width {} but the checkpoint has token_dim {}",
                h.spec.name, h.token_dim, backbone.config.token_dim
            )));
        }
        match registry.get(&h.spec.name) {
            Some(known) if known.spec() == h.spec => {}
            _ => return Err(Error::Contract(format!("unrecognized head spec {:?}", h.spec))),
        }
        if heads[..i].iter().any(|o| o.spec.name == h.spec.name) {
            return Err(Error::Contract(format!("head `{}` attached twice", h.spec.name)));
        }
    }
    Ok(())
}

/// One encoder pass shared by the outlier head and every attached head.
pub fn diagnose(backbone: &Backbone, heads: &[HeadParams], context: &Tensor, queries: &Tensor) -> Result<Diagnosis> {
    check_heads(backbone, heads)?;
    let z = backbone.embed(context, queries)?;
    let od = backbone.od_score(&z)?;
    let n = queries.rows();
    let mut records: Vec<QueryDiagnosis> = od
        .p_outlier
        .iter()
        .map(|&p| QueryDiagnosis {
            p_outlier: p,
            tier_probs: None,
            tier: None,
            log_u: None,
        })
        .collect();
    let mut dataset = DatasetDiagnosis {
        n_query: n,
        heads: heads.iter().map(|h| h.spec.name.clone()).collect(),
        mean_p_outlier: od.p_outlier.iter().sum::<f64>() / n as f64,
        auroc_estimate: None,
        threshold_estimate: None,
    };
    for h in heads {
        let out = h.forward(&z)?;
        match h.spec.name.as_str() {
            "severity" => {
                let probs = out.softmax(1)?;
                for (i, r) in records.iter_mut().enumerate() {
                    let row: [f64; 4] = probs.row(i).try_into().expect("four tiers");
                    r.tier = Tier::from_index(argmax(&row));
                    r.tier_probs = Some(row);
                }
            }
            "uncertainty" => {
                for (r, &v) in records.iter_mut().zip(out.data()) {
                    r.log_u = Some(v);
                }
            }
            "auroc" => dataset.auroc_estimate = Some(dataset_estimate(&out)),
            "threshold" => dataset.threshold_estimate = Some(dataset_estimate(&out)),
            other => unreachable!("head `{other}` passed the registry check"),
        }
    }
    Ok(Diagnosis {
        od,
        queries: records,
        dataset,
    })
}

impl Diagnosis {
    /// `p_outlier,tier,sn,ln,lo,so,log_u`; cells of absent heads are empty.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["p_outlier", "tier", "sn", "ln", "lo", "so", "log_u"])?;
        let f = |v: f64| format!("{v:.16e}");
        for q in &self.queries {
            let mut rec = vec![f(q.p_outlier), q.tier.map(|t| t.as_str().to_string()).unwrap_or_default()];
            match q.tier_probs {
                Some(p) => rec.extend(p.iter().map(|&v| f(v))),
                None => rec.extend(std::iter::repeat_n(String::new(), 4)),
            }
            rec.push(q.log_u.map(f).unwrap_or_default());
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Contract(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Contract(e.to_string()))
    }

    pub fn write(&self, csv_path: &Path, json_path: &Path) -> Result<()> {
        std::fs::write(csv_path, self.to_csv()?).map_err(|e| Error::io(csv_path, e))?;
        let mut json = serde_json::to_string_pretty(&self.dataset)?;
        json.push('\n');
        std::fs::write(json_path, json).map_err(|e| Error::io(json_path, e))
    }

    /// Human-readable one-line summary of the dataset record.
    pub fn summary_line(&self) -> String {
        format!(
            "queries {} mean p_outlier {:.4} auroc estimate {} threshold estimate {}",
            self.dataset.n_query,
            self.dataset.mean_p_outlier,
            render(self.dataset.auroc_estimate),
            render(self.dataset.threshold_estimate)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::{encode_calls, BackboneConfig, Dropout};
    use crate::numerics::RandomSource;

    fn setup() -> (Backbone, Vec<HeadParams>, Tensor, Tensor) {
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
        let reg = HeadRegistry::builtin();
        let heads = reg
            .names()
            .iter()
            .map(|n| HeadParams::init(reg.get(n).unwrap().spec(), 8, &mut rng).unwrap())
            .collect();
        let ctx = Tensor::matrix(6, 4, rng.normal_vec(24)).unwrap();
        let q = Tensor::matrix(5, 4, rng.normal_vec(20)).unwrap();
        (b, heads, ctx, q)
    }

    #[test]
    fn no_heads_gives_only_p_outlier() {
        let (b, _, ctx, q) = setup();
        let d = diagnose(&b, &[], &ctx, &q).unwrap();
        assert!(d.queries.iter().all(|r| r.tier.is_none() && r.log_u.is_none()));
        assert_eq!(d.dataset.auroc_estimate, None);
        let csv = d.to_csv().unwrap();
        assert!(csv.lines().nth(1).unwrap().ends_with(",,,,,,"));
    }

    #[test]
    fn od_output_unchanged_by_heads_and_encode_runs_once() {
        let (b, heads, ctx, q) = setup();
        let bare = diagnose(&b, &[], &ctx, &q).unwrap();
        let calls = encode_calls();
        let full = diagnose(&b, &heads, &ctx, &q).unwrap();
        assert_eq!(encode_calls() - calls, 1);
        assert_eq!(full.od, bare.od);
        assert_eq!(b.score(&ctx, &q, Dropout::Off).unwrap(), bare.od);
        for r in &full.queries {
            let p = r.tier_probs.unwrap();
            assert_eq!(r.tier.unwrap().index(), argmax(&p));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let out = heads[2].forward(&b.embed(&ctx, &q).unwrap()).unwrap();
        let mean = out.data().iter().sum::<f64>() / out.len() as f64;
        assert_eq!(full.dataset.auroc_estimate, Some(mean));
    }

    #[test]
    fn mismatched_width_rejected() {
        let (b, _, ctx, q) = setup();
        let spec = HeadRegistry::builtin().get("severity").unwrap().spec();
        let h = HeadParams::init(spec, 16, &mut RandomSource::new(0, 0)).unwrap();
        assert!(matches!(diagnose(&b, &[h], &ctx, &q), Err(Error::Contract(_))));
    }
}
