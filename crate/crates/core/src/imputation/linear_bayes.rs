//! Bayesian linear-regression imputation under the noninformative prior,
//! cycled over the missing columns as in chained equations.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;

use super::ImputationRequest;
use crate::error::{Error, Result};
use crate::rng::{self, tag, Rng};
use crate::stats;

/// Sweeps over the missing block when it has more than one column.
pub const SWEEPS: usize = 5;

/// Posterior of one column regressed on the others: centered OLS fit plus
/// the Cholesky factor of `(X'X)^{-1}` for coefficient draws.
#[derive(Clone, Debug)]
pub struct ColumnPosterior {
    pub column: usize,
    pub predictors: Vec<usize>,
    pub x_mean: Vec<f64>,
    pub y_mean: f64,
    pub beta: DVector<f64>,
    pub rss: f64,
    pub df: f64,
    pub n: usize,
    /// Lower-triangular `L` with `L L' = (X'X)^{-1}`.
    pub cov_factor: DMatrix<f64>,
    pub ridge: bool,
}

impl ColumnPosterior {
    pub fn fit(req: &ImputationRequest, column: usize) -> Result<Self> {
        let predictors: Vec<usize> = (0..req.q).filter(|&j| j != column).collect();
        let p = predictors.len();
        let n = req.n;
        let x_mean: Vec<f64> = predictors.iter().map(|&j| stats::mean(&req.column(j))).collect();
        let y = req.column(column);
        let y_mean = stats::mean(&y);
        let mut xtx = DMatrix::<f64>::zeros(p, p);
        let mut xty = DVector::<f64>::zeros(p);
        let mut xc = vec![0.0; p];
        for (i, yi) in y.iter().enumerate() {
            let row = req.row(i);
            for (a, &j) in predictors.iter().enumerate() {
                xc[a] = row[j] - x_mean[a];
            }
            let yc = yi - y_mean;
            for a in 0..p {
                xty[a] += xc[a] * yc;
                for b in 0..=a {
                    xtx[(a, b)] += xc[a] * xc[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtx[(b, a)] = xtx[(a, b)];
            }
        }
        let trace = xtx.trace();
        let mut ridge = false;
        let chol = match xtx.clone().cholesky().filter(|c| well_conditioned(c.l_dirty(), p)) {
            Some(c) => c,
            None => {
                ridge = true;
                let mut r = xtx.clone();
                let pen = 1e-8 * trace.max(f64::MIN_POSITIVE);
                for a in 0..p {
                    r[(a, a)] += pen;
                }
                r.cholesky()
                    .ok_or_else(|| Error::numerical(format!("regression for summary column {column} is singular even with ridge")))?
            }
        };
        if ridge {
            warn!("linear-Bayes imputation: ridge fallback for column {column}");
        }
        let beta = chol.solve(&xty);
        let mut rss = 0.0;
        for (i, yi) in y.iter().enumerate() {
            let row = req.row(i);
            let fit: f64 = predictors.iter().enumerate().map(|(a, &j)| (row[j] - x_mean[a]) * beta[a]).sum();
            let r = yi - y_mean - fit;
            rss += r * r;
        }
        let inv = chol.inverse();
        let inv = 0.5 * (&inv + inv.transpose());
        let cov_factor = inv
            .cholesky()
            .map(|c| c.l())
            .ok_or_else(|| Error::numerical("coefficient covariance is not positive definite"))?;
        Ok(ColumnPosterior {
            column,
            predictors,
            x_mean,
            y_mean,
            beta,
            rss,
            df: (n - p - 1) as f64,
            n,
            cov_factor,
            ridge,
        })
    }

    /// OLS prediction at `row`.
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.y_mean
            + self
                .predictors
                .iter()
                .enumerate()
                .map(|(a, &j)| (row[j] - self.x_mean[a]) * self.beta[a])
                .sum::<f64>()
    }

    /// One posterior-predictive draw at `row`: `sigma^2 = rss / chi2_df`,
    /// intercept and slopes from their conditional normals, then noise.
    pub fn draw(&self, row: &[f64], rng: &mut Rng) -> f64 {
        let chi: f64 = ChiSquared::new(self.df).expect("df > 0").sample(rng);
        let sigma = (self.rss / chi).sqrt();
        let p = self.predictors.len();
        let z = DVector::<f64>::from_fn(p, |_, _| StandardNormal.sample(rng));
        let beta = &self.beta + sigma * (&self.cov_factor * z);
        let z0: f64 = StandardNormal.sample(rng);
        let intercept = self.y_mean + sigma * z0 / (self.n as f64).sqrt();
        let eps: f64 = StandardNormal.sample(rng);
        intercept
            + self
                .predictors
                .iter()
                .enumerate()
                .map(|(a, &j)| (row[j] - self.x_mean[a]) * beta[a])
                .sum::<f64>()
            + sigma * eps
    }
}

fn well_conditioned(l: &DMatrix<f64>, p: usize) -> bool {
    let d: Vec<f64> = (0..p).map(|i| l[(i, i)].abs()).collect();
    let max = d.iter().cloned().fold(0.0, f64::max);
    let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
    p == 0 || (min.is_finite() && min > 1e-7 * max)
}

/// `req.m` completed vectors. Missing entries start at reference means;
/// with more than one missing column the columns are cycled for
/// [`SWEEPS`] sweeps, each step a fresh posterior-predictive draw.
pub fn impute_linear_bayes(req: &ImputationRequest) -> Result<Vec<Vec<f64>>> {
    req.validate()?;
    if req.n < req.q + 2 {
        return Err(Error::config(format!("linear-Bayes imputation needs at least {} reference rows", req.q + 2)));
    }
    let fits = req
        .part
        .indices_b
        .iter()
        .map(|&j| ColumnPosterior::fit(req, j))
        .collect::<Result<Vec<_>>>()?;
    let sweeps = if fits.len() > 1 { SWEEPS } else { 1 };
    let mut start = req.target.clone();
    for f in &fits {
        start[f.column] = f.y_mean;
    }
    Ok((0..req.m)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(req.seed, &[tag::IMPUTE, i as u64]);
            let mut row = start.clone();
            for _ in 0..sweeps {
                for f in &fits {
                    row[f.column] = f.draw(&row, &mut rng);
                }
            }
            row
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PartitionSpec;
    use rand_distr::Normal;

    #[test]
    fn exact_relation_is_reproduced() {
        let data: Vec<f64> = (0..50).flat_map(|i| [i as f64 * 0.3, i as f64 * 0.6]).collect();
        let req = ImputationRequest {
            reference: &data,
            n: 50,
            q: 2,
            target: vec![3.0, f64::NAN],
            part: PartitionSpec::new(vec![0], vec![1], 2).unwrap(),
            m: 20,
            seed: 1,
        };
        for row in impute_linear_bayes(&req).unwrap() {
            assert_eq!(row[0], 3.0);
            assert!((row[1] - 6.0).abs() < 1e-6, "{}", row[1]);
        }
    }

    #[test]
    fn collinear_predictors_use_ridge() {
        let mut rng = rng::stream(3, &[]);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let data: Vec<f64> = (0..100)
            .flat_map(|i| {
                let x = i as f64;
                [x, 2.0 * x, x + noise.sample(&mut rng)]
            })
            .collect();
        let req = ImputationRequest {
            reference: &data,
            n: 100,
            q: 3,
            target: vec![10.0, 20.0, 0.0],
            part: PartitionSpec::new(vec![0, 1], vec![2], 3).unwrap(),
            m: 4,
            seed: 2,
        };
        let fit = ColumnPosterior::fit(&req, 2).unwrap();
        assert!(fit.ridge);
        assert!(impute_linear_bayes(&req).unwrap().iter().all(|r| r[2].is_finite()));
    }
}
