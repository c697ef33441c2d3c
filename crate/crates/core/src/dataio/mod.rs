//! Labeled CSV ingestion, inlier-only context splits and padding.

use std::path::{Path, PathBuf};

use crate::backbone::normalize;
use crate::error::{Error, Result};
use crate::numerics::{RandomSource, Tensor};

pub const DEFAULT_CONTEXT_FRACTION: f64 = 0.5;

/// Numeric feature matrix with binary labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledTable {
    pub features: Tensor,
    pub labels: Vec<u8>,
    pub columns: Vec<String>,
    pub source: PathBuf,
    /// Rows discarded because a value was not finite.
    pub dropped_rows: usize,
}

impl LabeledTable {
    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }
}

fn parse_error(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

fn parse_label(cell: &str) -> Option<u8> {
    match cell.trim() {
        "0" => Some(0),
        "1" => Some(1),
        other => {
            let v = other.parse::<f64>().ok()?;
            if v == 0.0 {
                Some(0)
            } else if v == 1.0 {
                Some(1)
            } else {
                None
            }
        }
    }
}

/// Reads a headed CSV; every column other than `label_column` is a feature.
///
/// Rows are numbered from 1 after the header. Rows holding a non-finite
/// feature are dropped and counted.
pub fn load_csv(path: &Path, label_column: &str) -> Result<LabeledTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = reader.headers()?.clone();
    if header.is_empty() || header.iter().all(|h| h.trim().is_empty()) {
        return Err(parse_error(0, "", "empty file: no header row"));
    }
    let names: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
    let label_idx = names
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| parse_error(0, label_column, "label column not found in header"))?;
    let columns: Vec<String> = names.iter().enumerate().filter(|&(j, _)| j != label_idx).map(|(_, n)| n.clone()).collect();
    if columns.is_empty() {
        return Err(parse_error(0, label_column, "no feature columns"));
    }

    let (mut data, mut labels, mut dropped) = (Vec::new(), Vec::new(), 0);
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        if rec.len() != names.len() {
            return Err(parse_error(row, "", format!("expected {} fields, found {}", names.len(), rec.len())));
        }
        let label = parse_label(&rec[label_idx])
            .ok_or_else(|| parse_error(row, label_column, format!("label `{}` is not 0 or 1", &rec[label_idx])))?;
        let mut values = Vec::with_capacity(columns.len());
        for (j, cell) in rec.iter().enumerate() {
            if j == label_idx {
                continue;
            }
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| parse_error(row, &names[j], format!("`{cell}` is not a number")))?;
            values.push(v);
        }
        if values.iter().all(|v| v.is_finite()) {
            data.extend(values);
            labels.push(label);
        } else {
            dropped += 1;
        }
    }
    if labels.is_empty() && dropped == 0 {
        return Err(parse_error(1, "", "empty file: no data rows"));
    }
    Ok(LabeledTable {
        features: Tensor::matrix(labels.len(), columns.len(), data)?,
        labels,
        columns,
        source: path.to_path_buf(),
        dropped_rows: dropped,
    })
}

/// Inlier-only context plus a labeled test set.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub context: Tensor,
    pub queries: Tensor,
    pub labels: Vec<u8>,
    /// Source row of each context row, then of each query.
    pub context_rows: Vec<usize>,
    pub query_rows: Vec<usize>,
}

/// Draws `round(fraction · inliers)` inliers (at least one, leaving one) as
/// context; every other row, in file order, becomes a query.
pub fn context_split(table: &LabeledTable, context_fraction: f64, rng: &mut RandomSource) -> Result<Split> {
    if !(context_fraction > 0.0 && context_fraction < 1.0) {
        return Err(Error::Split(format!("context fraction {context_fraction} must lie in (0,1)")));
    }
    let inliers: Vec<usize> = (0..table.n_rows()).filter(|&i| table.labels[i] == 0).collect();
    let n_out = table.n_rows() - inliers.len();
    if inliers.len() < 2 || n_out == 0 {
        return Err(Error::Split(format!(
            "need at least 2 inliers and 1 outlier, found {} and {n_out}",
            inliers.len()
        )));
    }
    let k = ((inliers.len() as f64 * context_fraction).round() as usize).clamp(1, inliers.len() - 1);
    let mut chosen: Vec<usize> = rng.subset(k, inliers.len())?.into_iter().map(|i| inliers[i]).collect();
    chosen.sort_unstable();
    let mut in_context = vec![false; table.n_rows()];
    chosen.iter().for_each(|&i| in_context[i] = true);
    let query_rows: Vec<usize> = (0..table.n_rows()).filter(|&i| !in_context[i]).collect();
    let gather = |rows: &[usize]| Tensor::from_rows(&rows.iter().map(|&i| table.features.row(i).to_vec()).collect::<Vec<_>>());
    Ok(Split {
        context: gather(&chosen)?,
        queries: gather(&query_rows)?,
        labels: query_rows.iter().map(|&i| table.labels[i]).collect(),
        context_rows: chosen,
        query_rows,
    })
}

fn pad(t: &Tensor, d_max: usize) -> Result<Tensor> {
    let d = t.cols();
    let mut data = Vec::with_capacity(t.rows() * d_max);
    for i in 0..t.rows() {
        data.extend_from_slice(t.row(i));
        data.extend(std::iter::repeat_n(0.0, d_max - d));
    }
    Tensor::matrix(t.rows(), d_max, data)
}

/// Standardizes the active columns on the context, then zero-pads to `d_max`.
pub fn fit_to_model(context: &Tensor, queries: &Tensor, d_max: usize) -> Result<(Tensor, Tensor)> {
    let d = context.cols();
    if d > d_max {
        return Err(Error::Capacity { d, d_max });
    }
    if context.rows() == 0 {
        return Err(Error::Split("empty context".into()));
    }
    let (c, q, _) = normalize(context, queries)?;
    Ok((pad(&c, d_max)?, pad(&q, d_max)?))
}
