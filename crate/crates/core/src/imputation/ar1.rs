//! Stationary Gaussian AR(1) model and its conditional distributions.

use log::warn;
use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::stats;

pub const PHI_LIMIT: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ar1Model {
    pub mean: f64,
    pub phi: f64,
    pub innovation_var: f64,
}

impl Ar1Model {
    pub fn new(mean: f64, phi: f64, innovation_var: f64) -> Result<Self> {
        if !(phi.abs() < 1.0) || !(innovation_var > 0.0) || !mean.is_finite() {
            return Err(Error::domain(format!("invalid AR(1) model: phi={phi}, innovation variance={innovation_var}")));
        }
        Ok(Ar1Model { mean, phi, innovation_var })
    }

    pub fn marginal_var(&self) -> f64 {
        self.innovation_var / (1.0 - self.phi * self.phi)
    }

    /// Stationary covariance `sigma^2_marg * phi^|i - j|`.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.marginal_var() * self.phi.powi(i.abs_diff(j) as i32)
    }
}

/// Sample mean, lag-1 autocorrelation clamped to `[-0.99, 0.99]`, and the
/// innovation variance implied by the sample variance.
pub fn fit_ar1(x: &[f64]) -> Result<Ar1Model> {
    if x.len() < 10 {
        return Err(Error::config("AR(1) fit needs a series of length >= 10"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("series contains non-finite values"));
    }
    let mean = stats::mean(x);
    let denom: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    if !(denom > 0.0) {
        return Err(Error::numerical("cannot fit AR(1) to a constant series"));
    }
    let num: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    let phi = (num / denom).clamp(-PHI_LIMIT, PHI_LIMIT);
    let var = stats::sample_variance(x);
    Ar1Model::new(mean, phi, var * (1.0 - phi * phi))
}

/// Distribution of the window values given the rest of the patch.
#[derive(Clone, Debug)]
pub struct Ar1Conditional {
    pub window: Vec<usize>,
    pub others: Vec<usize>,
    /// `E[x_W | x_O] = mu + mean_map * (x_O - mu)`.
    pub mean_map: DMatrix<f64>,
    pub cov: DMatrix<f64>,
    cov_factor: DMatrix<f64>,
    pub jittered: bool,
}

impl Ar1Conditional {
    /// Zero-mean draw from the conditional covariance.
    pub fn sample_noise(&self, rng: &mut Rng) -> Vec<f64> {
        let k = self.window.len();
        let z: Vec<f64> = (0..k).map(|_| StandardNormal.sample(rng)).collect();
        (0..k)
            .map(|a| (0..=a).map(|b| self.cov_factor[(a, b)] * z[b]).sum())
            .collect()
    }
}

/// Schur complement `S_WW - S_WO S_OO^{-1} S_OW` of the stationary
/// covariance over `patch`, with `window` the conditioned-on-rest block.
pub fn ar1_conditional(m: &Ar1Model, patch: &[usize], window: &[usize]) -> Result<Ar1Conditional> {
    if window.is_empty() || window.iter().any(|w| !patch.contains(w)) {
        return Err(Error::config("window must be a nonempty subset of the patch"));
    }
    let others: Vec<usize> = patch.iter().copied().filter(|p| !window.contains(p)).collect();
    let s2 = m.marginal_var();
    let s_ww = DMatrix::from_fn(window.len(), window.len(), |a, b| m.covariance(window[a], window[b]));
    let mut jittered = false;
    let (mean_map, cov) = if others.is_empty() {
        (DMatrix::zeros(window.len(), 0), s_ww)
    } else {
        let mut s_oo = DMatrix::from_fn(others.len(), others.len(), |a, b| m.covariance(others[a], others[b]));
        let s_wo = DMatrix::from_fn(window.len(), others.len(), |a, b| m.covariance(window[a], others[b]));
        let chol = match s_oo.clone().cholesky() {
            Some(c) if c.l_dirty().diagonal().min() > 1e-7 * s2.sqrt() => c,
            _ => {
                jittered = true;
                warn!("AR(1) conditioning covariance is ill-conditioned; adding jitter");
                for a in 0..others.len() {
                    s_oo[(a, a)] += 1e-10 * s2;
                }
                s_oo.cholesky()
                    .ok_or_else(|| Error::numerical("AR(1) conditioning covariance is singular"))?
            }
        };
        // A = S_WO S_OO^{-1}  <=>  S_OO A' = S_OW
        let map = chol.solve(&s_wo.transpose()).transpose();
        let cov = &s_ww - &map * s_wo.transpose();
        (map, cov)
    };
    let cov = 0.5 * (&cov + cov.transpose());
    let cov_factor = match cov.clone().cholesky() {
        Some(c) => c.l(),
        None => {
            jittered = true;
            let mut c = cov.clone();
            for a in 0..window.len() {
                c[(a, a)] += 1e-10 * s2;
            }
            c.cholesky()
                .map(|c| c.l())
                .ok_or_else(|| Error::numerical("AR(1) conditional covariance is not positive semidefinite"))?
        }
    };
    Ok(Ar1Conditional {
        window: window.to_vec(),
        others,
        mean_map,
        cov,
        cov_factor,
        jittered,
    })
}
