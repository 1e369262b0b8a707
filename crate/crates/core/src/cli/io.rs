//! File formats. Rows are samples; labels are one-based on disk and
//! zero-based in memory; row indices are zero-based.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::model::Dataset;

/// Header `x1..xD[,label]`, one sample per row.
pub fn write_dataset_csv<W: Write>(data: &Dataset, out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=data.dim()).map(|d| format!("x{d}")).collect();
    if data.labels().is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for i in 0..data.len() {
        let mut row: Vec<String> = data.x().column(i).iter().map(|v| format!("{v:?}")).collect();
        if let Some(labels) = data.labels() {
            row.push((labels[i] + 1).to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_csv(path: &Path) -> anyhow::Result<Dataset> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = r.headers()?.clone();
    let has_label = headers.iter().next_back().is_some_and(|h| h.trim() == "label");
    let dim = headers.len() - usize::from(has_label);
    if dim == 0 {
        bail!("{}: no feature columns", path.display());
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != headers.len() {
            bail!("{}: row {row} has {} fields, expected {}", path.display(), rec.len(), headers.len());
        }
        for f in rec.iter().take(dim) {
            values.push(f.trim().parse::<f64>().with_context(|| format!("row {row}: bad number {f:?}"))?);
        }
        if has_label {
            let l: usize = rec[dim].trim().parse().with_context(|| format!("row {row}: bad label"))?;
            if l == 0 {
                bail!("row {row}: labels are one-based");
            }
            labels.push(l - 1);
        }
    }
    let n = values.len() / dim;
    // Row-major samples become the columns of a D×N matrix.
    let x = DMatrix::from_column_slice(dim, n, &values);
    Ok(Dataset::new(x, has_label.then_some(labels))?)
}

/// `index,label` with zero-based row index and one-based label.
pub fn write_labels_csv<W: Write>(labels: &[usize], out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "label"])?;
    for (i, l) in labels.iter().enumerate() {
        w.write_record([i.to_string(), (l + 1).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}
