//! Conditional-density regressors behind the diagnostics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::density::{self, DensityEstimate, Grid, GridSpec, Support};
use crate::error::{Error, Result};
use crate::model::TrainingSet;
use crate::qrf::Forest;
use crate::stats;

/// Posterior for one query point, evaluable on any grid.
#[derive(Clone, Debug, PartialEq)]
pub enum PosteriorQuery {
    /// Weighted sample `(value, weight)` sorted by value, with its bandwidth.
    Kde { pairs: Vec<(f64, f64)>, bandwidth: f64 },
    Normal { mean: f64, sd: f64 },
}

impl PosteriorQuery {
    /// Central range used to lay out a grid.
    pub fn range(&self, spec: &GridSpec) -> (f64, f64) {
        match self {
            PosteriorQuery::Kde { pairs, .. } => density::weighted_range(pairs, spec),
            PosteriorQuery::Normal { mean, sd } => (mean + sd * normal_quantile(spec.lo_quantile), mean + sd * normal_quantile(spec.hi_quantile)),
        }
    }

    pub fn scale(&self) -> f64 {
        match self {
            PosteriorQuery::Kde { bandwidth, .. } => *bandwidth,
            PosteriorQuery::Normal { sd, .. } => *sd,
        }
    }

    pub fn evaluate(&self, grid: &Grid, support: Support) -> Result<DensityEstimate> {
        match self {
            PosteriorQuery::Kde { pairs, bandwidth } => density::kde_on_grid(pairs, *bandwidth, grid, support),
            PosteriorQuery::Normal { mean, sd } => {
                let values: Vec<f64> = grid.points().iter().map(|x| stats::normal_pdf(*x, *mean, *sd)).collect();
                if values.iter().all(|v| *v == 0.0) {
                    // all mass off-grid: keep a spike at the nearest end
                    let mut v = vec![0.0; grid.len()];
                    let idx = if *mean < grid.lo() { 0 } else { grid.len() - 1 };
                    v[idx] = 1.0;
                    return DensityEstimate::normalized(grid.clone(), v, support);
                }
                DensityEstimate::normalized(grid.clone(), values, support)
            }
        }
    }
}

fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// A model of `p(parameter | features)`.
pub trait PosteriorRegressor: Sync {
    fn n_features(&self) -> usize;

    /// Prior support of the parameter.
    fn support(&self) -> Support;

    fn query(&self, s: &[f64]) -> Result<PosteriorQuery>;

    /// Density on an automatic grid around this query alone.
    fn density(&self, s: &[f64], spec: &GridSpec) -> Result<DensityEstimate> {
        let q = self.query(s)?;
        let (lo, hi) = q.range(spec);
        let grid = spec.layout(lo, hi, 4.0 * q.scale(), self.support())?;
        q.evaluate(&grid, self.support())
    }
}

fn check_query(s: &[f64], q: usize) -> Result<()> {
    if s.len() != q {
        return Err(Error::config(format!("query has {} features, regressor expects {q}", s.len())));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("query contains non-finite features"));
    }
    Ok(())
}

impl PosteriorRegressor for Forest {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn support(&self) -> Support {
        self.support
    }

    fn query(&self, s: &[f64]) -> Result<PosteriorQuery> {
        check_query(s, self.n_features)?;
        let pairs = self.response_pairs(s);
        let (bandwidth, _) = density::floored_bandwidth(&pairs, self.bandwidth_floor());
        Ok(PosteriorQuery::Kde { pairs, bandwidth })
    }
}

/// Plug-in normal predictive from a least-squares point regression:
/// `N(x' beta, sigma^2)` with `sigma^2` the residual variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalRegressor {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub intercept: f64,
    pub coef: Vec<f64>,
    pub sigma: f64,
    pub support: Support,
}

impl NormalRegressor {
    /// Ridge-stabilized least squares on standardized features.
    pub fn fit(train: &TrainingSet, target: usize, ridge: f64) -> Result<Self> {
        let n = train.len();
        let q = train.q();
        if n < q + 2 {
            return Err(Error::config("normal regressor needs more rows than features"));
        }
        let y = train.param_column(target);
        let x_mean: Vec<f64> = (0..q).map(|j| stats::mean(&(0..n).map(|i| train.summary_row(i)[j]).collect::<Vec<_>>())).collect();
        let x_scale: Vec<f64> = (0..q)
            .map(|j| {
                let sd = stats::sample_variance(&(0..n).map(|i| train.summary_row(i)[j]).collect::<Vec<_>>()).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        let y_mean = stats::mean(&y);
        let mut xtx = DMatrix::<f64>::zeros(q, q);
        let mut xty = DVector::<f64>::zeros(q);
        let mut z = vec![0.0; q];
        for i in 0..n {
            let row = train.summary_row(i);
            for j in 0..q {
                z[j] = (row[j] - x_mean[j]) / x_scale[j];
            }
            let yc = y[i] - y_mean;
            for a in 0..q {
                xty[a] += z[a] * yc;
                for b in 0..=a {
                    xtx[(a, b)] += z[a] * z[b];
                }
            }
        }
        for a in 0..q {
            for b in 0..a {
                xtx[(b, a)] = xtx[(a, b)];
            }
            xtx[(a, a)] += ridge.max(1e-8) * n as f64;
        }
        let beta = xtx
            .cholesky()
            .ok_or_else(|| Error::numerical("normal regressor design is singular"))?
            .solve(&xty);
        let mut rss = 0.0;
        for i in 0..n {
            let row = train.summary_row(i);
            let fit: f64 = (0..q).map(|j| (row[j] - x_mean[j]) / x_scale[j] * beta[j]).sum();
            rss += (y[i] - y_mean - fit).powi(2);
        }
        let sigma = (rss / (n - q - 1) as f64).sqrt();
        if !(sigma > 0.0) {
            return Err(Error::numerical("normal regressor has zero residual variance"));
        }
        Ok(NormalRegressor {
            x_mean,
            x_scale,
            intercept: y_mean,
            coef: beta.iter().copied().collect(),
            sigma,
            support: train.prior.support(target),
        })
    }

    pub fn predict(&self, s: &[f64]) -> f64 {
        self.intercept + s.iter().enumerate().map(|(j, v)| (v - self.x_mean[j]) / self.x_scale[j] * self.coef[j]).sum::<f64>()
    }
}

impl PosteriorRegressor for NormalRegressor {
    fn n_features(&self) -> usize {
        self.coef.len()
    }

    fn support(&self) -> Support {
        self.support
    }

    fn query(&self, s: &[f64]) -> Result<PosteriorQuery> {
        check_query(s, self.coef.len())?;
        Ok(PosteriorQuery::Normal {
            mean: self.predict(s),
            sd: self.sigma,
        })
    }
}

/// Elementwise transform of raw inputs before they reach a regressor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMap {
    #[default]
    Identity,
    /// `ln(1 + max(x, 0))`, for count series.
    Log1p,
}

impl FeatureMap {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            FeatureMap::Identity => x.to_vec(),
            FeatureMap::Log1p => x.iter().map(|v| v.max(0.0).ln_1p()).collect(),
        }
    }
}

/// A regressor fed through a feature map.
pub struct MappedRegressor<'a> {
    pub inner: &'a dyn PosteriorRegressor,
    pub map: FeatureMap,
}

impl PosteriorRegressor for MappedRegressor<'_> {
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    fn support(&self) -> Support {
        self.inner.support()
    }

    fn query(&self, s: &[f64]) -> Result<PosteriorQuery> {
        self.inner.query(&self.map.apply(s))
    }
}
