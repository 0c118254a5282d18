//! Nearest-k rejection ABC.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{self, DensityEstimate, GridSpec, Support};
use crate::error::{Error, Result};
use crate::model::{ParameterDraw, SummaryVector, TrainingSet};
use crate::stats;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    #[default]
    Mad,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbcResult {
    /// Training rows accepted, nearest first.
    pub rows: Vec<usize>,
    pub accepted: Vec<ParameterDraw>,
    pub distances: Vec<f64>,
    /// Summary columns used for the distance.
    pub columns: Vec<usize>,
    /// Divisor applied to each entry of `columns`.
    pub scales: Vec<f64>,
}

impl AbcResult {
    pub fn param_column(&self, j: usize) -> Vec<f64> {
        self.accepted.iter().map(|d| d.values[j]).collect()
    }
}

/// Per-column scale: MAD, else SD, else `None` (column dropped).
fn column_scale(values: &[f64], scaling: Scaling) -> Option<f64> {
    match scaling {
        Scaling::None => Some(1.0),
        Scaling::Mad => {
            let mad = stats::mad(values);
            if mad > 0.0 {
                return Some(mad);
            }
            let sd = stats::sample_variance(values).sqrt();
            (sd > 0.0).then_some(sd)
        }
    }
}

/// Accepts the `k` training rows whose summaries, restricted to `columns`
/// (all columns when `None`) and scaled, are nearest to `s_obs` in
/// Euclidean distance. Ties go to the lower row index.
pub fn rejection_abc(train: &TrainingSet, s_obs: &SummaryVector, columns: Option<&[usize]>, k: usize, scaling: Scaling) -> Result<AbcResult> {
    let n = train.len();
    if k == 0 || k > n {
        return Err(Error::config(format!("k must lie in 1..={n}, got {k}")));
    }
    if s_obs.len() != train.q() {
        return Err(Error::config(format!(
            "observed summary has {} entries, training set has {}",
            s_obs.len(),
            train.q()
        )));
    }
    let requested: Vec<usize> = columns.map(|c| c.to_vec()).unwrap_or_else(|| (0..train.q()).collect());
    if requested.iter().any(|&j| j >= train.q()) {
        return Err(Error::config("ABC column index out of range"));
    }
    let mut used = Vec::new();
    let mut scales = Vec::new();
    for &j in &requested {
        if !s_obs.values[j].is_finite() {
            return Err(Error::domain(format!("observed summary {} is not finite", train.summary_names[j])));
        }
        let col: Vec<f64> = (0..n).map(|i| train.summary_row(i)[j]).collect();
        match column_scale(&col, scaling) {
            Some(s) => {
                used.push(j);
                scales.push(s);
            }
            None => warn!("summary {} is constant in the training set; dropped from the ABC distance", train.summary_names[j]),
        }
    }
    let dist: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = train.summary_row(i);
            used.iter()
                .zip(&scales)
                .map(|(&j, s)| {
                    let d = (row[j] - s_obs.values[j]) / s;
                    d * d
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    let key = |a: &usize, b: &usize| dist[*a].total_cmp(&dist[*b]).then(a.cmp(b));
    if k < n {
        order.select_nth_unstable_by(k - 1, key);
        order.truncate(k);
    }
    order.sort_unstable_by(key);
    Ok(AbcResult {
        accepted: order
            .iter()
            .map(|&i| ParameterDraw {
                values: train.param_row(i).to_vec(),
            })
            .collect(),
        distances: order.iter().map(|&i| dist[i]).collect(),
        rows: order,
        columns: used,
        scales,
    })
}

/// Unweighted Gaussian KDE with the same bandwidth and grid rules as the
/// forest posterior densities.
pub fn kde_from_samples(samples: &[f64], spec: &GridSpec, support: Support) -> Result<DensityEstimate> {
    if samples.is_empty() {
        return Err(Error::config("no samples for KDE"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite sample in KDE input"));
    }
    let pairs = density::weighted_pairs(samples, &vec![1.0; samples.len()]);
    let range = pairs[pairs.len() - 1].0 - pairs[0].0;
    let (h, _) = density::floored_bandwidth(&pairs, 1e-6 * range);
    let (lo, hi) = density::weighted_range(&pairs, spec);
    let grid = spec.layout(lo, hi, 4.0 * h, support)?;
    density::kde_on_grid(&pairs, h, &grid, support)
}
