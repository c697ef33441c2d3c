use std::collections::BTreeMap;
use std::path::Path;

use crate::backbone::{mc_dropout_std, Backbone};
use crate::dataio::{context_split, fit_to_model, load_csv};
use crate::error::{Error, Result};
use crate::heads::{dataset_targets_from_scores, diagnose, uncertainty_target, HeadParams, HeadTrainConfig};
use crate::metrics::{
    auroc, balanced_accuracy_present, merge_tier_tables, outlier_fraction_by_tier, spearman, tier_table, DatasetRow,
    EvalReport, SeverityReport,
};
use crate::numerics::{median, RandomSource, Tensor};
use crate::simulator::export::{read_task, CONTEXT_FILE};
use crate::simulator::Tier;

/// One dataset ready for the backbone: padded to its input width.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalDataset {
    pub name: String,
    pub context: Tensor,
    pub queries: Tensor,
    pub labels: Vec<u8>,
    /// Ground-truth severity tiers, known for synthetic tasks only.
    pub tiers: Option<Vec<Tier>>,
}

/// Reads one task directory, or every task directory below `dir` in name order.
pub fn load_task_dirs(dir: &Path, d_max: usize) -> Result<Vec<EvalDataset>> {
    let dirs = if dir.join(CONTEXT_FILE).is_file() {
        vec![dir.to_path_buf()]
    } else {
        let mut v: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(CONTEXT_FILE).is_file())
            .collect();
        v.sort();
        v
    };
    if dirs.is_empty() {
        return Err(Error::Load(format!("no task directories under {}", dir.display())));
    }
    dirs.iter()
        .map(|p| {
            let (_, task) = read_task(p)?;
            if task.queries.cols() > d_max {
                return Err(Error::Capacity {
                    d: task.queries.cols(),
                    d_max,
                });
            }
            let (context, queries) = if task.queries.cols() == d_max {
                (task.context, task.queries)
            } else {
                fit_to_model(&task.context, &task.queries, d_max)?
            };
            Ok(EvalDataset {
                name: p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
                context,
                queries,
                labels: task.labels,
                tiers: Some(task.tiers),
            })
        })
        .collect()
}

/// Loads a labeled CSV, splits an inlier-only context and pads to `d_max`.
/// Returns the dataset and the number of dropped rows.
pub fn load_csv_dataset(
    path: &Path,
    label_column: &str,
    context_fraction: f64,
    d_max: usize,
    rng: &mut RandomSource,
) -> Result<(EvalDataset, usize)> {
    let table = load_csv(path, label_column)?;
    if table.n_features() > d_max {
        return Err(Error::Capacity {
            d: table.n_features(),
            d_max,
        });
    }
    let split = context_split(&table, context_fraction, rng)?;
    let (context, queries) = fit_to_model(&split.context, &split.queries, d_max)?;
    let name = path.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Ok((
        EvalDataset {
            name,
            context,
            queries,
            labels: split.labels,
            tiers: None,
        },
        table.dropped_rows,
    ))
}

struct Scored {
    row: DatasetRow,
    pred_tiers: Option<Vec<Tier>>,
}

fn score_one(
    backbone: &Backbone,
    heads: &[HeadParams],
    data: &EvalDataset,
    teacher: &HeadTrainConfig,
    rng: RandomSource,
) -> Result<Scored> {
    let d = diagnose(backbone, heads, &data.context, &data.queries)?;
    let p = &d.od.p_outlier;
    let truth = dataset_targets_from_scores(p, &data.labels);
    let mut row = DatasetRow {
        dataset: data.name.clone(),
        n_query: data.labels.len(),
        auroc: auroc(p, &data.labels).ok(),
        auroc_estimate: d.dataset.auroc_estimate,
        threshold_estimate: d.dataset.threshold_estimate,
        ..Default::default()
    };
    if row.threshold_estimate.is_some() {
        row.threshold_true = truth.map(|(_, t)| t);
    }
    let pred_tiers: Option<Vec<Tier>> = d.queries.iter().map(|q| q.tier).collect();
    if let (Some(pred), Some(tiers)) = (&pred_tiers, &data.tiers) {
        let pi: Vec<usize> = pred.iter().map(|t| t.index()).collect();
        let ti: Vec<usize> = tiers.iter().map(|t| t.index()).collect();
        row.balanced_accuracy = balanced_accuracy_present(&pi, &ti, 4).ok().map(|(v, _)| v);
    }
    let log_u: Option<Vec<f64>> = d.queries.iter().map(|q| q.log_u).collect();
    if let Some(pred) = log_u {
        let u = mc_dropout_std(backbone, &data.context, &data.queries, teacher.mc_passes, teacher.mc_dropout_p, &rng)?;
        let target: Vec<f64> = u.into_iter().map(|u| uncertainty_target(u, teacher.epsilon)).collect();
        row.uncertainty_spearman = spearman(&pred, &target).ok();
    }
    Ok(Scored { row, pred_tiers })
}

/// Runs `f` over `items` on up to `threads` threads, keeping input order.
pub fn par_map<T: Sync, R: Send>(
    items: &[T],
    threads: usize,
    f: impl Fn(usize, &T) -> Result<R> + Sync,
) -> Result<Vec<R>> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let f = &f;
    let parts: Vec<Vec<(usize, Result<R>)>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|k| s.spawn(move || (k..items.len()).step_by(threads).map(|i| (i, f(i, &items[i]))).collect()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut slots: Vec<Option<Result<R>>> = (0..items.len()).map(|_| None).collect();
    for (i, r) in parts.into_iter().flatten() {
        slots[i] = Some(r);
    }
    slots.into_iter().map(|r| r.expect("every index visited")).collect()
}

fn defined_spearman(pairs: &[(Option<f64>, Option<f64>)]) -> Option<f64> {
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.iter().filter_map(|&(x, y)| Some((x?, y?))).unzip();
    spearman(&a, &b).ok()
}

/// Scores every dataset and aggregates the report.
///
/// Dataset `i` draws its teacher passes from `rng.derive(i)`.
pub fn evaluate(
    backbone: &Backbone,
    heads: &[HeadParams],
    datasets: &[EvalDataset],
    teacher: &HeadTrainConfig,
    rng: &RandomSource,
    threads: usize,
) -> Result<EvalReport> {
    let scored = par_map(datasets, threads, |i, d| score_one(backbone, heads, d, teacher, rng.derive(i as u64)))?;
    let has = |name: &str| heads.iter().any(|h| h.spec.name == name);
    let aurocs: Vec<f64> = scored.iter().filter_map(|s| s.row.auroc).collect();
    let mut report = EvalReport {
        n_datasets: datasets.len(),
        n_queries: datasets.iter().map(|d| d.labels.len()).sum(),
        auroc: (!aurocs.is_empty()).then(|| aurocs.iter().sum::<f64>() / aurocs.len() as f64),
        ..Default::default()
    };

    if has("severity") {
        let (mut pred, mut truth, mut tables) = (Vec::new(), Vec::new(), Vec::new());
        let (mut all_pred, mut all_labels) = (Vec::new(), Vec::new());
        for (s, d) in scored.iter().zip(datasets) {
            let p = s.pred_tiers.as_ref().expect("severity head attached");
            tables.push(tier_table(p, &d.labels)?);
            all_pred.extend_from_slice(p);
            all_labels.extend_from_slice(&d.labels);
            if let Some(t) = &d.tiers {
                pred.extend(p.iter().map(|t| t.index()));
                truth.extend(t.iter().map(|t| t.index()));
            }
        }
        report.severity = Some(SeverityReport {
            balanced_accuracy: balanced_accuracy_present(&pred, &truth, 4).ok().map(|(v, _)| v),
            tier_table: merge_tier_tables(&tables),
            outlier_fraction_by_tier: outlier_fraction_by_tier(&all_pred, &all_labels)?,
        });
    }
    let mut spear = BTreeMap::new();
    if has("uncertainty") {
        let per: Vec<f64> = scored.iter().filter_map(|s| s.row.uncertainty_spearman).collect();
        spear.insert("uncertainty".to_string(), median(&per));
    }
    if has("auroc") {
        let pairs: Vec<_> = scored.iter().map(|s| (s.row.auroc_estimate, s.row.auroc)).collect();
        spear.insert("auroc_head".to_string(), defined_spearman(&pairs));
    }
    if has("threshold") {
        let pairs: Vec<_> = scored.iter().map(|s| (s.row.threshold_estimate, s.row.threshold_true)).collect();
        spear.insert("threshold_head".to_string(), defined_spearman(&pairs));
    }
    report.spearman = spear;
    report.datasets = scored.into_iter().map(|s| s.row).collect();
    Ok(report)
}
