//! Dataset files: a CSV with one column per node coordinate (and per
//! retained exogenous coordinate), plus a JSON sidecar with roles, dims,
//! seed and the generating DGP.
//!
//! A 1-dimensional node `A` is stored as column `A` with noise `u_A`; a
//! d-dimensional node as `A_0 … A_{d-1}` and `u_A_0 …`. Floats are written in
//! shortest round-trip form, so reading back is bit-exact.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{DgpId, Roles, SampleBatch};
use crate::error::{config, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub roles: Roles,
    pub dims: BTreeMap<String, usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub dgp: Option<DgpId>,
}

pub fn column_names(name: &str, dim: usize) -> Vec<String> {
    if dim == 1 {
        vec![name.to_string()]
    } else {
        (0..dim).map(|i| format!("{name}_{i}")).collect()
    }
}

pub fn noise_names(name: &str, dim: usize) -> Vec<String> {
    column_names(&format!("u_{name}"), dim)
}

/// Sidecar path for a CSV path: `data.csv` → `data.json`.
pub fn sidecar_path(csv: &Path) -> std::path::PathBuf {
    csv.with_extension("json")
}

pub fn write_dataset(
    batch: &SampleBatch,
    seed: Option<u64>,
    dgp: Option<&DgpId>,
    csv_path: &Path,
) -> Result<Sidecar> {
    let dims = batch.dims();
    let mut header = Vec::new();
    let mut blocks: Vec<&DMatrix<f64>> = Vec::new();
    for name in batch.order() {
        header.extend(column_names(name, dims[name]));
        blocks.push(batch.column(name)?);
    }
    if batch.has_noise() {
        for name in batch.order() {
            if let Some(m) = batch.noise_column(name) {
                header.extend(noise_names(name, dims[name]));
                blocks.push(m);
            }
        }
    }
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(csv_path)?));
    w.write_record(&header)?;
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for r in 0..batch.n() {
        record.clear();
        for b in &blocks {
            for c in 0..b.ncols() {
                record.push(format!("{}", b[(r, c)]));
            }
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    let sidecar = Sidecar {
        roles: batch.roles().clone(),
        dims,
        seed,
        dgp: dgp.cloned(),
    };
    std::fs::write(
        sidecar_path(csv_path),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(sidecar)
}

pub fn read_sidecar(csv_path: &Path) -> Result<Sidecar> {
    let text = std::fs::read_to_string(sidecar_path(csv_path))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_dataset(csv_path: &Path) -> Result<(SampleBatch, Sidecar)> {
    let sidecar = read_sidecar(csv_path)?;
    let mut reader = csv::Reader::from_path(csv_path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let position = |col: &str| header.iter().position(|h| h == col);

    let mut located: Vec<(usize, String, Vec<usize>, Option<Vec<usize>>)> = Vec::new();
    for (name, &dim) in &sidecar.dims {
        let cols = column_names(name, dim)
            .iter()
            .map(|c| {
                position(c).ok_or_else(|| Error::Config(format!("dataset is missing column `{c}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let noise: Vec<Option<usize>> =
            noise_names(name, dim).iter().map(|c| position(c)).collect();
        let noise = if noise.iter().all(Option::is_some) {
            Some(noise.into_iter().flatten().collect())
        } else if noise.iter().all(Option::is_none) {
            None
        } else {
            return config(format!("dataset has partial noise columns for `{name}`"));
        };
        located.push((cols[0], name.clone(), cols, noise));
    }
    located.sort();
    let with_noise = located.iter().all(|l| l.3.is_some());

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("row {}: `{f}` is not a number", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return config("dataset has no rows");
    }
    let gather = |idx: &[usize]| DMatrix::from_fn(rows.len(), idx.len(), |r, c| rows[r][idx[c]]);
    let order: Vec<String> = located.iter().map(|l| l.1.clone()).collect();
    let columns = located
        .iter()
        .map(|l| (l.1.clone(), gather(&l.2)))
        .collect();
    let noise = with_noise.then(|| {
        located
            .iter()
            .map(|l| (l.1.clone(), gather(l.3.as_ref().expect("checked"))))
            .collect()
    });
    let batch = SampleBatch::new(order, columns, noise, sidecar.roles.clone())?;
    Ok((batch, sidecar))
}
