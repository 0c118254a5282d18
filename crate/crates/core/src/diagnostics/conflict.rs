//! Subset posteriors, relative belief, and calibration by fresh imputation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::regressor::{PosteriorQuery, PosteriorRegressor};
use crate::density::{self, DensityEstimate, Grid, GridSpec, Support};
use crate::error::{Error, Result};
use crate::imputation::{ImputationEngine, ImputationRequest};
use crate::model::{PartitionSpec, SummaryVector, TrainingSet};
use crate::rng::{self, tag};

/// Relative floor applied to denominator densities.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Largest tolerated share of failed imputations.
pub const MAX_FAILED_SHARE: f64 = 0.2;

/// Produces completed inputs (observed block kept, deleted block imputed).
pub trait CompletionSource: Sync {
    fn complete(&self, m: usize, seed: u64) -> Result<Vec<Vec<f64>>>;
}

/// Summary-vector imputation against a training-set reference table.
pub struct SummaryCompletion<'a> {
    pub engine: ImputationEngine,
    pub train: &'a TrainingSet,
    pub s_obs: &'a SummaryVector,
    pub part: &'a PartitionSpec,
}

impl CompletionSource for SummaryCompletion<'_> {
    fn complete(&self, m: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let req = ImputationRequest::new(self.train, self.s_obs, self.part, m, seed)?;
        self.engine.impute(&req)
    }
}

/// Returns the observed vector unchanged; the zero-conflict reference case.
pub struct IdentityCompletion(pub Vec<f64>);

impl CompletionSource for IdentityCompletion {
    fn complete(&self, m: usize, _seed: u64) -> Result<Vec<Vec<f64>>> {
        Ok(vec![self.0.clone(); m])
    }
}

/// `sup log(p_num / p_den)` with where it is attained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativeBelief {
    pub value: f64,
    pub argmax: f64,
    /// The supremum sits where the denominator was raised to the floor.
    pub floored: bool,
}

fn check_pair(a: &DensityEstimate, b: &DensityEstimate) -> Result<()> {
    if a.grid != b.grid {
        return Err(Error::config("densities must share one grid"));
    }
    Ok(())
}

/// Supremum over grid points inside the support of `log(p_num / p_den)`,
/// the denominator floored at `1e-12 * max(p_den)`.
pub fn relative_belief_detail(p_num: &DensityEstimate, p_den: &DensityEstimate) -> Result<RelativeBelief> {
    check_pair(p_num, p_den)?;
    let floor = DENSITY_FLOOR * p_den.max_value();
    let mut best = RelativeBelief {
        value: f64::NEG_INFINITY,
        argmax: f64::NAN,
        floored: false,
    };
    for ((x, &a), &b) in p_num.grid.points().iter().zip(&p_num.values).zip(&p_den.values) {
        if !(p_num.support.contains(*x) && p_den.support.contains(*x)) || a <= 0.0 {
            continue;
        }
        let v = (a / b.max(floor)).ln();
        if v > best.value {
            best = RelativeBelief {
                value: v,
                argmax: *x,
                floored: b < floor,
            };
        }
    }
    if !best.value.is_finite() {
        return Err(Error::numerical("numerator density vanishes on the support grid"));
    }
    Ok(best)
}

pub fn max_log_relative_belief(p_num: &DensityEstimate, p_den: &DensityEstimate) -> Result<f64> {
    relative_belief_detail(p_num, p_den).map(|r| r.value)
}

/// `(1/(alpha-1)) log integral (p_num/p_den)^(alpha-1) p_num` by trapezoid,
/// with the same denominator floor as the relative belief.
pub fn renyi_divergence(p_num: &DensityEstimate, p_den: &DensityEstimate, alpha: f64) -> Result<f64> {
    check_pair(p_num, p_den)?;
    if !(alpha > 0.0) || alpha == 1.0 {
        return Err(Error::config("Renyi order must be positive and different from 1"));
    }
    let floor = DENSITY_FLOOR * p_den.max_value();
    let integrand: Vec<f64> = p_num
        .values
        .iter()
        .zip(&p_den.values)
        .map(|(&a, &b)| if a > 0.0 { a * (a / b.max(floor)).powf(alpha - 1.0) } else { 0.0 })
        .collect();
    let mass = crate::stats::trapezoid(p_num.grid.points(), &integrand);
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::numerical("Renyi integral is degenerate"));
    }
    Ok(mass.ln() / (alpha - 1.0))
}

/// Queries for a batch of completed inputs; failures are counted and
/// tolerated up to [`MAX_FAILED_SHARE`].
fn completed_queries(reg: &dyn PosteriorRegressor, completions: &[Vec<f64>]) -> Result<(Vec<PosteriorQuery>, usize)> {
    let results: Vec<Result<PosteriorQuery>> = completions
        .par_iter()
        .map(|c| {
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::numerical("imputation produced non-finite values"));
            }
            reg.query(c)
        })
        .collect();
    let failed = results.iter().filter(|r| r.is_err()).count();
    if failed as f64 > MAX_FAILED_SHARE * completions.len() as f64 {
        let first = results.into_iter().find_map(|r| r.err()).expect("at least one failure");
        return Err(Error::numerical(format!(
            "{failed} of {} imputations failed (first: {first})",
            completions.len()
        )));
    }
    Ok((results.into_iter().filter_map(|r| r.ok()).collect(), failed))
}

/// Grid covering both the full posterior and the imputation mixture.
fn common_grid(full: &PosteriorQuery, parts: &[PosteriorQuery], spec: &GridSpec, support: Support) -> Result<Grid> {
    let (mut lo, mut hi) = full.range(spec);
    let all_kde = parts.iter().all(|p| matches!(p, PosteriorQuery::Kde { .. }));
    if all_kde && !parts.is_empty() {
        let w = 1.0 / parts.len() as f64;
        let mut pooled: Vec<(f64, f64)> = parts
            .iter()
            .flat_map(|p| match p {
                PosteriorQuery::Kde { pairs, .. } => pairs.iter().map(|&(v, pw)| (v, pw * w)).collect::<Vec<_>>(),
                PosteriorQuery::Normal { .. } => unreachable!(),
            })
            .collect();
        pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (a, b) = density::weighted_range(&pooled, spec);
        lo = lo.min(a);
        hi = hi.max(b);
    } else {
        for p in parts {
            let (a, b) = p.range(spec);
            lo = lo.min(a);
            hi = hi.max(b);
        }
    }
    spec.layout(lo, hi, 4.0 * full.scale(), support)
}

fn mixture_on(parts: &[PosteriorQuery], grid: &Grid, support: Support) -> Result<DensityEstimate> {
    let densities = parts.par_iter().map(|q| q.evaluate(grid, support)).collect::<Result<Vec<_>>>()?;
    DensityEstimate::mixture(&densities)
}

/// Full and subset posterior on their common grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsetPosterior {
    pub full: DensityEstimate,
    pub subset: DensityEstimate,
    pub completions: Vec<Vec<f64>>,
    pub failed: usize,
}

/// Average of the full-summary posteriors at `m` completed inputs, on a grid
/// shared with the full posterior at `s_obs`. Imputations use the seed
/// derived from `(seed, IMPUTE)`.
pub fn subset_posterior_detail(
    reg: &dyn PosteriorRegressor,
    s_obs: &[f64],
    source: &dyn CompletionSource,
    m: usize,
    spec: &GridSpec,
    seed: u64,
) -> Result<SubsetPosterior> {
    if m == 0 {
        return Err(Error::config("M must be >= 1"));
    }
    let full_q = reg.query(s_obs)?;
    let completions = source.complete(m, rng::derive_seed(seed, &[tag::IMPUTE]))?;
    let (parts, failed) = completed_queries(reg, &completions)?;
    let grid = common_grid(&full_q, &parts, spec, reg.support())?;
    Ok(SubsetPosterior {
        full: full_q.evaluate(&grid, reg.support())?,
        subset: mixture_on(&parts, &grid, reg.support())?,
        completions,
        failed,
    })
}

pub fn subset_posterior(
    reg: &dyn PosteriorRegressor,
    s_obs: &[f64],
    source: &dyn CompletionSource,
    m: usize,
    spec: &GridSpec,
    seed: u64,
) -> Result<DensityEstimate> {
    subset_posterior_detail(reg, s_obs, source, m, spec, seed).map(|s| s.subset)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub parameter: String,
    pub observed_names: Vec<String>,
    pub imputed_names: Vec<String>,
    pub r_obs: f64,
    pub r_obs_argmax: f64,
    pub r_obs_floored: bool,
    pub r_ref: Vec<f64>,
    /// Reference statistics whose supremum came from the density floor.
    pub r_ref_floored: usize,
    pub p_tilde: f64,
    pub m: usize,
    pub m_star: usize,
    pub failed_imputations: usize,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_points: usize,
    pub seed: u64,
    #[serde(skip)]
    pub full: Option<DensityEstimate>,
    #[serde(skip)]
    pub subset: Option<DensityEstimate>,
}

/// Fraction of reference statistics at or above the observed one.
pub fn tail_fraction(r_ref: &[f64], r_obs: f64) -> f64 {
    r_ref.iter().filter(|r| **r >= r_obs).count() as f64 / r_ref.len() as f64
}

/// Observed statistic against the subset posterior, calibrated by `m_star`
/// fresh imputations (seed `(seed, REFERENCE)`) that each act as a
/// pseudo-observed input with the same subset posterior as denominator.
pub fn calibrate_conflict(
    reg: &dyn PosteriorRegressor,
    s_obs: &[f64],
    source: &dyn CompletionSource,
    m: usize,
    m_star: usize,
    spec: &GridSpec,
    seed: u64,
) -> Result<ConflictReport> {
    if m_star == 0 {
        return Err(Error::config("M* must be >= 1"));
    }
    let sp = subset_posterior_detail(reg, s_obs, source, m, spec, seed)?;
    let obs = relative_belief_detail(&sp.full, &sp.subset)?;
    let fresh = source.complete(m_star, rng::derive_seed(seed, &[tag::REFERENCE]))?;
    let (queries, failed_ref) = completed_queries(reg, &fresh)?;
    let refs = queries
        .par_iter()
        .map(|q| relative_belief_detail(&q.evaluate(&sp.full.grid, reg.support())?, &sp.subset))
        .collect::<Result<Vec<_>>>()?;
    let r_ref: Vec<f64> = refs.iter().map(|r| r.value).collect();
    Ok(ConflictReport {
        parameter: String::new(),
        observed_names: Vec::new(),
        imputed_names: Vec::new(),
        r_obs: obs.value,
        r_obs_argmax: obs.argmax,
        r_obs_floored: obs.floored,
        p_tilde: tail_fraction(&r_ref, obs.value),
        r_ref_floored: refs.iter().filter(|r| r.floored).count(),
        r_ref,
        m,
        m_star,
        failed_imputations: sp.failed + failed_ref,
        grid_lo: sp.full.grid.lo(),
        grid_hi: sp.full.grid.hi(),
        grid_points: sp.full.grid.len(),
        seed,
        full: Some(sp.full),
        subset: Some(sp.subset),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::normal_pdf;

    fn gauss(grid: &Grid, mu: f64, sd: f64) -> DensityEstimate {
        let v = grid.points().iter().map(|x| normal_pdf(*x, mu, sd)).collect();
        DensityEstimate::normalized(grid.clone(), v, Support::REAL).unwrap()
    }

    #[test]
    fn identical_densities_give_zero() {
        let g = Grid::uniform(-5.0, 5.0, 401).unwrap();
        let p = gauss(&g, 0.3, 1.2);
        assert!(max_log_relative_belief(&p, &p).unwrap().abs() < 1e-12);
        for a in [0.5, 2.0, 5.0] {
            assert!(renyi_divergence(&p, &p, a).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn shifted_gaussians_on_truncated_grid() {
        let g = Grid::uniform(-6.0, 9.0, 1501).unwrap();
        let num = gauss(&g, 3.0, 1.0);
        let den = gauss(&g, 0.0, 1.0);
        // log N(x;3,1)/N(x;0,1) = 3x - 4.5 increases in x, so the sup sits at
        // the last grid point where the denominator is above its floor; grid
        // normalization shifts it by log(Z_den / Z_num)
        let raw = |mu: f64| g.points().iter().map(|x| normal_pdf(*x, mu, 1.0)).collect::<Vec<_>>();
        let zn = crate::stats::trapezoid(g.points(), &raw(3.0));
        let zd = crate::stats::trapezoid(g.points(), &raw(0.0));
        let peak = normal_pdf(0.0, 0.0, 1.0) / zd;
        let x_star = g
            .points()
            .iter()
            .copied()
            .filter(|x| normal_pdf(*x, 0.0, 1.0) / zd >= DENSITY_FLOOR * peak)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(x_star > 7.0 && x_star < 9.0);
        let expected = 3.0 * x_star - 4.5 + (zd / zn).ln();
        let r = relative_belief_detail(&num, &den).unwrap();
        assert_eq!(r.argmax, x_star);
        assert!((r.value - expected).abs() < 1e-9, "{} vs {expected}", r.value);
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = gauss(&Grid::uniform(-5.0, 5.0, 101).unwrap(), 0.0, 1.0);
        let b = gauss(&Grid::uniform(-5.0, 5.0, 102).unwrap(), 0.0, 1.0);
        assert!(max_log_relative_belief(&a, &b).is_err());
        assert!(renyi_divergence(&a, &a, 1.0).is_err());
    }

    #[test]
    fn tail_fraction_bounds() {
        assert_eq!(tail_fraction(&[1.0, 2.0, 3.0], 0.0), 1.0);
        assert_eq!(tail_fraction(&[1.0, 2.0, 3.0], 2.0), 2.0 / 3.0);
        assert_eq!(tail_fraction(&[1.0, 2.0, 3.0], 9.0), 0.0);
    }
}
