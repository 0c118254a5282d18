//! Two-regime self-exciting threshold autoregression of order two, used to
//! turn a Ricker series into an 8-dimensional summary vector.
//!
//! `X_t = a0 + a1 X_{t-1} + a2 X_{t-2} + e_t, e_t ~ N(0, rho^2)` when
//! `X_{t-1} < c`, and the same form with `(b0, b1, b2, zeta)` otherwise.
//! Given `c`, the conditional Gaussian MLE is OLS within each regime with
//! the residual SD estimated using the regime count as divisor.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SummaryVector;
use crate::rng::Rng;
use crate::stats;

pub const SETAR_SUMMARIES: [&str; 8] = ["a0", "a1", "a2", "rho", "b0", "b1", "b2", "zeta"];

/// Fewest `(X_t, X_{t-1}, X_{t-2})` triples a regime may hold.
pub const MIN_REGIME_TRIPLES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeFit {
    /// Intercept, lag-1 and lag-2 coefficients.
    pub coef: [f64; 3],
    /// Residual SD (maximum likelihood, divisor `n`).
    pub sd: f64,
    pub n: usize,
    /// Standard errors of `(coef[0], coef[1], coef[2], sd)`.
    pub se: [f64; 4],
}

impl RegimeFit {
    fn neg_log_likelihood(&self) -> f64 {
        0.5 * self.n as f64 * ((2.0 * std::f64::consts::PI * self.sd * self.sd).ln() + 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetarFit {
    pub threshold: f64,
    pub lower: RegimeFit,
    pub upper: RegimeFit,
}

impl SetarFit {
    /// `(a0, a1, a2, rho, b0, b1, b2, zeta)`.
    pub fn summaries(&self) -> [f64; 8] {
        let (l, u) = (&self.lower, &self.upper);
        [l.coef[0], l.coef[1], l.coef[2], l.sd, u.coef[0], u.coef[1], u.coef[2], u.sd]
    }

    pub fn standard_errors(&self) -> [f64; 8] {
        let (l, u) = (&self.lower.se, &self.upper.se);
        [l[0], l[1], l[2], l[3], u[0], u[1], u[2], u[3]]
    }

    /// Pooled Gaussian negative log-likelihood of both regimes.
    pub fn neg_log_likelihood(&self) -> f64 {
        self.lower.neg_log_likelihood() + self.upper.neg_log_likelihood()
    }
}

/// OLS of `y` on `(1, lag1, lag2)`. Columns are scaled to unit RMS before
/// the SVD so that rank detection does not depend on the data's units.
fn regime_ols(y: &[f64], lag1: &[f64], lag2: &[f64]) -> Result<RegimeFit> {
    let n = y.len();
    if n < MIN_REGIME_TRIPLES {
        return Err(Error::numerical(format!("regime has {n} triples, need {MIN_REGIME_TRIPLES}")));
    }
    let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt().max(f64::MIN_POSITIVE);
    let scale = [1.0, rms(lag1), rms(lag2)];
    let design = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => lag1[i] / scale[1],
        _ => lag2[i] / scale[2],
    });
    let svd = design.svd(true, true);
    let s = &svd.singular_values;
    let (smax, smin) = (s.max(), s.min());
    if !(smin > 1e-9 * smax) {
        return Err(Error::numerical("singular SETAR design"));
    }
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let yv = DVector::from_column_slice(y);
    let uty = u.transpose() * &yv;
    let scaled = v_t.transpose() * DVector::from_fn(3, |k, _| uty[k] / s[k]);
    let coef = [scaled[0] / scale[0], scaled[1] / scale[1], scaled[2] / scale[2]];

    let rss: f64 = (0..n)
        .map(|i| {
            let r = y[i] - coef[0] - coef[1] * lag1[i] - coef[2] * lag2[i];
            r * r
        })
        .sum();
    let sd = (rss / n as f64).sqrt();
    // (X'X)^{-1} = D^{-1} V S^{-2} V' D^{-1}
    let sigma2 = if n > 3 { rss / (n - 3) as f64 } else { f64::NAN };
    let mut se = [0.0; 4];
    for (j, se_j) in se.iter_mut().take(3).enumerate() {
        let var: f64 = (0..3).map(|k| (v_t[(k, j)] / s[k]).powi(2)).sum::<f64>() / (scale[j] * scale[j]);
        *se_j = (sigma2 * var).sqrt();
    }
    se[3] = sd / (2.0 * n as f64).sqrt();
    Ok(RegimeFit { coef, sd, n, se })
}

/// Per-regime conditional MLE given threshold `c`, conditioning on the
/// first two observations.
pub fn fit_setar(x: &[f64], c: f64) -> Result<SetarFit> {
    if x.len() < 3 {
        return Err(Error::domain("SETAR fit needs at least three observations"));
    }
    let (mut lo, mut up) = ((vec![], vec![], vec![]), (vec![], vec![], vec![]));
    for t in 2..x.len() {
        let r = if x[t - 1] < c { &mut lo } else { &mut up };
        r.0.push(x[t]);
        r.1.push(x[t - 1]);
        r.2.push(x[t - 2]);
    }
    Ok(SetarFit {
        threshold: c,
        lower: regime_ols(&lo.0, &lo.1, &lo.2)?,
        upper: regime_ols(&up.0, &up.1, &up.2)?,
    })
}

/// Candidate thresholds: empirical quantiles 0.15, 0.20, ..., 0.85.
pub fn threshold_candidates(x: &[f64]) -> Vec<f64> {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut c: Vec<f64> = (0..15).map(|i| stats::quantile_sorted(&sorted, 0.15 + 0.05 * i as f64)).collect();
    c.dedup();
    c
}

/// Grid search for the threshold minimizing the pooled negative
/// log-likelihood, requiring each regime to hold at least 10% of the
/// triples. Ties go to the smaller threshold.
pub fn select_threshold(x_obs: &[f64]) -> Result<f64> {
    if x_obs.len() < 30 {
        return Err(Error::domain(format!("threshold selection needs at least 30 observations, got {}", x_obs.len())));
    }
    let triples = (x_obs.len() - 2) as f64;
    let mut best: Option<(f64, f64)> = None;
    for c in threshold_candidates(x_obs) {
        let Ok(fit) = fit_setar(x_obs, c) else { continue };
        if (fit.lower.n as f64) < 0.1 * triples || (fit.upper.n as f64) < 0.1 * triples {
            continue;
        }
        let nll = fit.neg_log_likelihood();
        if !nll.is_finite() {
            continue;
        }
        if best.is_none_or(|(_, b)| nll < b) {
            best = Some((c, nll));
        }
    }
    best.map(|b| b.0).ok_or_else(|| Error::numerical("no feasible SETAR threshold"))
}

/// SETAR estimates as a summary vector; invalid when either regime cannot
/// be fitted.
pub fn ricker_setar_summaries(x: &[f64], c: f64) -> SummaryVector {
    let names: Vec<String> = SETAR_SUMMARIES.iter().map(|s| s.to_string()).collect();
    match fit_setar(x, c) {
        Ok(fit) => SummaryVector::new(names, fit.summaries().to_vec()),
        Err(_) => SummaryVector::invalid(names),
    }
}

/// Known-parameter SETAR process, for consistency checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetarProcess {
    pub lower: [f64; 3],
    pub rho: f64,
    pub upper: [f64; 3],
    pub zeta: f64,
    pub threshold: f64,
}

impl SetarProcess {
    /// `t_len` observations after a 200-step burn-in started at the threshold.
    pub fn simulate(&self, t_len: usize, rng: &mut Rng) -> Vec<f64> {
        let burn = 200;
        let mut x = vec![self.threshold; 2];
        for t in 2..burn + t_len {
            let e: f64 = StandardNormal.sample(rng);
            let (c, sd) = if x[t - 1] < self.threshold {
                (&self.lower, self.rho)
            } else {
                (&self.upper, self.zeta)
            };
            x.push(c[0] + c[1] * x[t - 1] + c[2] * x[t - 2] + sd * e);
        }
        x.split_off(burn)
    }

    pub fn truth(&self) -> [f64; 8] {
        let (l, u) = (&self.lower, &self.upper);
        [l[0], l[1], l[2], self.rho, u[0], u[1], u[2], self.zeta]
    }
}
