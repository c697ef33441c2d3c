//! One directory per task: `context.csv`, `queries.csv`, `targets.csv`,
//! `dataset_targets.csv` (when teacher targets exist) and `hypothesis.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Hypothesis, Task, TeacherTargets, Tier};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const CONTEXT_FILE: &str = "context.csv";
pub const QUERIES_FILE: &str = "queries.csv";
pub const TARGETS_FILE: &str = "targets.csv";
pub const DATASET_TARGETS_FILE: &str = "dataset_targets.csv";
pub const HYPOTHESIS_FILE: &str = "hypothesis.json";

/// `hypothesis.json`: the hypothesis fields plus the class medians of the
/// query pool the tiers were split at.
#[derive(Serialize, Deserialize)]
struct HypothesisRecord {
    #[serde(flatten)]
    hypothesis: Hypothesis,
    pool_medians: [f64; 2],
}

/// Seventeen significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn write_matrix(path: &Path, m: &Tensor) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record((0..m.cols()).map(|c| format!("f{c}")))?;
    for r in 0..m.rows() {
        w.write_record(m.row(r).iter().map(|&v| fmt_float(v)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a task directory and returns the files created, in a fixed order.
pub fn write_task(dir: &Path, h: &Hypothesis, task: &Task) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();

    let p = dir.join(CONTEXT_FILE);
    write_matrix(&p, &task.context)?;
    files.push(p);
    let p = dir.join(QUERIES_FILE);
    write_matrix(&p, &task.queries)?;
    files.push(p);

    let p = dir.join(TARGETS_FILE);
    let mut w = writer(&p)?;
    let u = task.teacher.u_teacher.as_deref();
    let mut header = vec!["y", "tier", "r"];
    if u.is_some() {
        header.push("u_teacher");
    }
    w.write_record(&header)?;
    for i in 0..task.n_query() {
        let mut rec = vec![task.labels[i].to_string(), task.tiers[i].as_str().to_string(), fmt_float(task.r[i])];
        if let Some(u) = u {
            rec.push(fmt_float(u[i]));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&p, e))?;
    files.push(p);

    let t = &task.teacher;
    if t.auroc_target.is_some() || t.threshold_target.is_some() {
        let p = dir.join(DATASET_TARGETS_FILE);
        let mut w = writer(&p)?;
        w.write_record(["auroc_target", "threshold_target"])?;
        let cell = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
        w.write_record([cell(t.auroc_target), cell(t.threshold_target)])?;
        w.flush().map_err(|e| Error::io(&p, e))?;
        files.push(p);
    }

    let p = dir.join(HYPOTHESIS_FILE);
    let record = HypothesisRecord {
        hypothesis: h.clone(),
        pool_medians: [task.m0, task.m1],
    };
    let mut json = serde_json::to_string_pretty(&record)?;
    json.push('\n');
    fs::write(&p, json).map_err(|e| Error::io(&p, e))?;
    files.push(p);
    Ok(files)
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Reader::from_reader(f))
}

fn parse_f64(cell: &str, row: usize, column: &str) -> Result<f64> {
    cell.trim().parse().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        message: format!("not a number: {cell:?}"),
    })
}

fn read_matrix(path: &Path) -> Result<Tensor> {
    let mut r = reader(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        for (c, cell) in rec.iter().enumerate() {
            data.push(parse_f64(cell, i + 1, &header[c])?);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Load(format!("{} has no rows", path.display())));
    }
    Tensor::matrix(rows, header.len(), data)
}

/// Reads a task directory written by [`write_task`].
pub fn read_task(dir: &Path) -> Result<(Hypothesis, Task)> {
    let context = read_matrix(&dir.join(CONTEXT_FILE))?;
    let queries = read_matrix(&dir.join(QUERIES_FILE))?;

    let p = dir.join(TARGETS_FILE);
    let mut r = reader(&p)?;
    let has_u = r.headers()?.iter().any(|h| h == "u_teacher");
    let (mut labels, mut tiers, mut rv, mut u) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let y = match rec.get(0) {
            Some("0") => 0,
            Some("1") => 1,
            other => {
                return Err(Error::Parse {
                    row,
                    column: "y".into(),
                    message: format!("label must be 0 or 1, got {other:?}"),
                })
            }
        };
        labels.push(y);
        let tier = rec.get(1).and_then(Tier::parse).ok_or_else(|| Error::Parse {
            row,
            column: "tier".into(),
            message: "unknown tier".into(),
        })?;
        tiers.push(tier);
        rv.push(parse_f64(rec.get(2).unwrap_or(""), row, "r")?);
        if has_u {
            u.push(parse_f64(rec.get(3).unwrap_or(""), row, "u_teacher")?);
        }
    }
    if labels.len() != queries.rows() {
        return Err(Error::Load(format!(
            "{} has {} rows but there are {} queries",
            p.display(),
            labels.len(),
            queries.rows()
        )));
    }

    let mut teacher = TeacherTargets {
        u_teacher: has_u.then_some(u),
        ..Default::default()
    };
    let p = dir.join(DATASET_TARGETS_FILE);
    if p.exists() {
        let mut r = reader(&p)?;
        if let Some(rec) = r.records().next() {
            let rec = rec?;
            let opt = |i: usize, name: &str| -> Result<Option<f64>> {
                match rec.get(i) {
                    Some(s) if !s.is_empty() => parse_f64(s, 1, name).map(Some),
                    _ => Ok(None),
                }
            };
            teacher.auroc_target = opt(0, "auroc_target")?;
            teacher.threshold_target = opt(1, "threshold_target")?;
        }
    }

    let p = dir.join(HYPOTHESIS_FILE);
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let HypothesisRecord {
        hypothesis: h,
        pool_medians: [m0, m1],
    } = serde_json::from_str(&text)?;
    Ok((
        h,
        Task {
            context,
            queries,
            labels,
            tiers,
            r: rv,
            m0,
            m1,
            teacher,
        },
    ))
}
