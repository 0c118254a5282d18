//! File formats: training sets (CSV + JSON sidecar), density CSVs, observed
//! data, forests and reports.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::density::{DensityEstimate, Grid, Support};
use crate::error::{Error, Result};
use crate::model::{PriorSpec, TrainingSet};
use crate::qrf::Forest;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Header row followed by data rows.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Metadata stored next to a training-set CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub model_id: String,
    pub prior: PriorSpec,
    pub seed: u64,
    pub n: usize,
    pub param_names: Vec<String>,
    pub summary_names: Vec<String>,
    pub discarded: usize,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes parameters then summaries, one row per simulation, plus a JSON
/// sidecar with the prior and seed.
pub fn write_training_set(path: &Path, train: &TrainingSet) -> Result<()> {
    let header: Vec<&str> = train.param_names.iter().chain(&train.summary_names).map(|s| s.as_str()).collect();
    write_table(
        path,
        &header,
        (0..train.len()).map(|i| train.param_row(i).iter().chain(train.summary_row(i)).map(|v| v.to_string()).collect()),
    )?;
    write_json(
        &sidecar_path(path),
        &TrainingMeta {
            model_id: train.model_id.clone(),
            prior: train.prior.clone(),
            seed: train.seed,
            n: train.len(),
            param_names: train.param_names.clone(),
            summary_names: train.summary_names.clone(),
            discarded: train.discarded,
        },
    )
}

pub fn read_training_set(path: &Path) -> Result<TrainingSet> {
    let meta: TrainingMeta = read_json(&sidecar_path(path))?;
    let p = meta.param_names.len();
    let q = meta.summary_names.len();
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header: Vec<String> = r.headers().map_err(csv_err(path))?.iter().map(|s| s.to_string()).collect();
    let expected: Vec<String> = meta.param_names.iter().chain(&meta.summary_names).cloned().collect();
    if header != expected {
        return Err(Error::config(format!("{}: header does not match its sidecar", path.display())));
    }
    let mut params = Vec::with_capacity(meta.n * p);
    let mut summaries = Vec::with_capacity(meta.n * q);
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::config(format!("{}: bad number {field:?}", path.display())))?;
            if j < p {
                params.push(v);
            } else {
                summaries.push(v);
            }
        }
    }
    let train = TrainingSet::from_parts(meta.model_id, meta.prior, meta.seed, meta.summary_names, params, summaries, meta.discarded)?;
    if train.len() != meta.n {
        return Err(Error::config(format!("{}: expected {} rows, found {}", path.display(), meta.n, train.len())));
    }
    Ok(train)
}

pub fn write_density(path: &Path, d: &DensityEstimate) -> Result<()> {
    write_table(
        path,
        &["grid", "density"],
        d.grid.points().iter().zip(&d.values).map(|(x, v)| vec![x.to_string(), v.to_string()]),
    )
}

/// Several densities on one grid as columns.
pub fn write_densities(path: &Path, names: &[&str], ds: &[&DensityEstimate]) -> Result<()> {
    let first = ds.first().ok_or_else(|| Error::config("no densities to write"))?;
    if ds.iter().any(|d| d.grid != first.grid) || names.len() != ds.len() {
        return Err(Error::config("densities written together must share a grid"));
    }
    let mut header = vec!["grid"];
    header.extend_from_slice(names);
    write_table(
        path,
        &header,
        (0..first.grid.len()).map(|i| std::iter::once(first.grid.points()[i]).chain(ds.iter().map(|d| d.values[i])).map(|v| v.to_string()).collect()),
    )
}

/// Reads a density CSV (a grid column followed by one or more density
/// columns) and checks that every column integrates to one within `1e-6`.
pub fn read_densities(path: &Path, support: Support) -> Result<Vec<(String, DensityEstimate)>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let names: Vec<String> = r.headers().map_err(csv_err(path))?.iter().skip(1).map(str::to_string).collect();
    if names.is_empty() {
        return Err(Error::config(format!("{}: no density columns", path.display())));
    }
    let mut xs = Vec::new();
    let mut cols = vec![Vec::new(); names.len()];
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| Error::config(format!("{}: malformed density row", path.display())))
        };
        xs.push(parse(0)?);
        for (j, c) in cols.iter_mut().enumerate() {
            c.push(parse(j + 1)?);
        }
    }
    let grid = Grid::from_points(xs)?;
    names
        .into_iter()
        .zip(cols)
        .map(|(name, values)| {
            let d = DensityEstimate {
                grid: grid.clone(),
                values,
                support,
            };
            let mass = d.integral();
            if (mass - 1.0).abs() > 1e-6 {
                return Err(Error::numerical(format!("{}: column {name} integrates to {mass}", path.display())));
            }
            Ok((name, d))
        })
        .collect()
}

/// First density column of a density CSV, checked as in [`read_densities`].
pub fn read_density(path: &Path, support: Support) -> Result<DensityEstimate> {
    Ok(read_densities(path, support)?.swap_remove(0).1)
}

/// Observed data: numbers separated by commas, whitespace or newlines. A
/// leading non-numeric line is treated as a header.
pub fn read_observed(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_observed(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

pub fn parse_observed(text: &str) -> std::result::Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty()).collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(v) => out.extend(v),
            Err(_) if out.is_empty() && i == 0 => continue,
            Err(_) => return Err(format!("line {}: not a number", i + 1)),
        }
    }
    if out.is_empty() {
        return Err("no observations".into());
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err("non-finite observation".into());
    }
    Ok(out)
}

pub fn write_forest(path: &Path, f: &Forest) -> Result<()> {
    ensure_parent(path)?;
    let file = fs::File::create(path).map_err(io_err(path))?;
    serde_json::to_writer(std::io::BufWriter::new(file), f).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_forest(path: &Path) -> Result<Forest> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let f: Forest = serde_json::from_reader(std::io::BufReader::new(file)).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    if f.format_version != crate::qrf::FOREST_FORMAT_VERSION {
        return Err(Error::config(format!("{}: unsupported forest format {}", path.display(), f.format_version)));
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observed_parsing() {
        assert_eq!(parse_observed("0,0,0,0,5\n").unwrap(), vec![0.0, 0.0, 0.0, 0.0, 5.0]);
        assert_eq!(parse_observed("count\n1\n2\n3\n").unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(parse_observed("1\nx\n").is_err());
        assert!(parse_observed("").is_err());
    }
}
