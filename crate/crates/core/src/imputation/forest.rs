//! Iterative random-forest imputation with predictive mean matching.

use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ImputationRequest;
use crate::density::Support;
use crate::error::{Error, Result};
use crate::qrf::{FeatureMatrix, Forest, ForestHyper};
use crate::rng::{self, tag};
use crate::stats;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestImputeConfig {
    pub trees_per_fit: usize,
    pub max_sweeps: usize,
    /// Donor pool size for predictive mean matching.
    pub pmm_k: usize,
    /// Reference rows subsampled per imputation; 0 uses the whole table.
    pub max_reference: usize,
    pub min_node_size: usize,
}

impl Default for ForestImputeConfig {
    fn default() -> Self {
        ForestImputeConfig {
            trees_per_fit: 20,
            max_sweeps: 10,
            pmm_k: 5,
            max_reference: 2000,
            min_node_size: 5,
        }
    }
}

struct ColumnData {
    column: usize,
    predictors: Vec<usize>,
    x: FeatureMatrix,
    y: Vec<f64>,
    var: f64,
}

/// `req.m` completed vectors. Each imputation runs independently on its own
/// stream: missing entries start at reference medians, then every sweep
/// fits a forest per missing column on the other columns and replaces the
/// entry by a donor value drawn uniformly from the `pmm_k` reference rows
/// whose out-of-bag predictions are nearest the target's prediction.
/// Sweeps stop once the mean normalized out-of-bag error fails to improve,
/// keeping the previous sweep's values.
pub fn impute_forest(req: &ImputationRequest, cfg: &ForestImputeConfig) -> Result<Vec<Vec<f64>>> {
    req.validate()?;
    if cfg.trees_per_fit == 0 || cfg.max_sweeps == 0 || cfg.pmm_k == 0 {
        return Err(Error::config("forest imputation needs trees, sweeps and donors >= 1"));
    }
    if req.n < 2 {
        return Err(Error::config("forest imputation needs at least 2 reference rows"));
    }
    let medians: Vec<f64> = (0..req.q).map(|j| stats::median(&req.column(j))).collect();
    let mut start = req.target.clone();
    for &j in &req.part.indices_b {
        start[j] = medians[j];
    }
    (0..req.m)
        .into_par_iter()
        .map(|i| impute_one(req, cfg, &start, i as u64))
        .collect()
}

fn impute_one(req: &ImputationRequest, cfg: &ForestImputeConfig, start: &[f64], i: u64) -> Result<Vec<f64>> {
    let mut rng = rng::stream(req.seed, &[tag::IMPUTE, i]);
    let rows: Vec<usize> = if cfg.max_reference > 0 && req.n > cfg.max_reference {
        let mut r = index::sample(&mut rng, req.n, cfg.max_reference).into_vec();
        r.sort_unstable();
        r
    } else {
        (0..req.n).collect()
    };
    let columns = req
        .part
        .indices_b
        .iter()
        .map(|&column| {
            let predictors: Vec<usize> = (0..req.q).filter(|&j| j != column).collect();
            let cols: Vec<Vec<f64>> = predictors
                .iter()
                .map(|&j| rows.iter().map(|&r| req.row(r)[j]).collect())
                .collect();
            let y: Vec<f64> = rows.iter().map(|&r| req.row(r)[column]).collect();
            let var = stats::sample_variance(&y);
            Ok(ColumnData {
                column,
                predictors,
                x: FeatureMatrix::from_columns(cols)?,
                y,
                var,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut row = start.to_vec();
    let mut prev_err = f64::INFINITY;
    for sweep in 0..cfg.max_sweeps {
        let mut next = row.clone();
        let mut err = 0.0;
        for c in &columns {
            let p = c.predictors.len();
            let hyper = ForestHyper {
                n_trees: cfg.trees_per_fit,
                mtry: ((p as f64).sqrt().floor() as usize).clamp(1, p),
                min_node_size: cfg.min_node_size,
                sample_fraction: 0.632,
                max_depth: 0,
            };
            let seed = rng::derive_seed(req.seed, &[tag::IMPUTE, i, sweep as u64, c.column as u64]);
            let forest = Forest::fit(&c.x, &c.y, &hyper, seed, Support::REAL)?;
            let oob = forest.oob_predictions(&c.x);
            let mse = oob.iter().zip(&c.y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / c.y.len() as f64;
            err += if c.var > 0.0 { mse / c.var } else { 0.0 };
            let query: Vec<f64> = c.predictors.iter().map(|&j| next[j]).collect();
            let pred = forest.predict_mean(&query);
            let donor = pmm_donor(&oob, pred, cfg.pmm_k, &mut rng);
            next[c.column] = c.y[donor];
        }
        err /= columns.len() as f64;
        if err >= prev_err {
            break;
        }
        prev_err = err;
        row = next;
    }
    Ok(row)
}

/// Uniform draw among the `k` reference rows whose predictions are nearest
/// `target` (ties by row index).
pub fn pmm_donor(predictions: &[f64], target: f64, k: usize, rng: &mut crate::rng::Rng) -> usize {
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    let k = k.min(order.len());
    let key = |a: &usize, b: &usize| {
        (predictions[*a] - target)
            .abs()
            .total_cmp(&(predictions[*b] - target).abs())
            .then(a.cmp(b))
    };
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, key);
    }
    order[..k].sort_unstable_by(key);
    order[rng.random_range(0..k)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pmm_picks_from_nearest() {
        let preds = [0.0, 10.0, 1.0, 2.0, 3.0, 4.0, 5.0, 50.0];
        let mut rng = rng::stream(0, &[]);
        for _ in 0..100 {
            let d = pmm_donor(&preds, 2.2, 3, &mut rng);
            assert!([2, 3, 4].contains(&d));
        }
    }
}
