//! The three generative models: i.i.d. Poisson counts, a stereological
//! inclusion surrogate (Poisson count of generalized-Pareto diameters) and
//! the Ricker population model observed through Poisson counts.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, GenerativeModel, PriorSpec, SummaryVector};
use crate::rng::{self, tag, Rng};
use crate::setar;
use crate::stats::{self, ln_gamma};

/// One Poisson(`lambda`) variate: sequential inversion below 30, Hörmann's
/// transformed rejection (PTRS) above.
pub fn poisson_draw(lambda: f64, rng: &mut Rng) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    if lambda < 30.0 {
        let mut p = (-lambda).exp();
        let mut cdf = p;
        let u: f64 = rng.random();
        let mut k = 0u64;
        while u > cdf {
            k += 1;
            p *= lambda / k as f64;
            let next = cdf + p;
            if next == cdf {
                break;
            }
            cdf = next;
        }
        return k;
    }
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln() <= -lambda + k * loglam - ln_gamma(k + 1.0) {
            return k as u64;
        }
    }
}

/// `n` i.i.d. Poisson(`eta`) counts.
pub fn poisson_simulate(eta: f64, n: usize, seed: u64) -> Result<Vec<u64>> {
    let mut rng = rng::stream(seed, &[tag::SIMULATE]);
    poisson_counts(eta, n, &mut rng)
}

fn poisson_counts(eta: f64, n: usize, rng: &mut Rng) -> Result<Vec<u64>> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::domain(format!("Poisson mean must be positive, got {eta}")));
    }
    Ok((0..n).map(|_| poisson_draw(eta, rng)).collect())
}

pub const POISSON_SUMMARIES: [&str; 2] = ["ybar", "s2"];

/// Sample mean and unbiased sample variance.
pub fn poisson_summaries(y: &[u64]) -> Result<SummaryVector> {
    if y.len() < 2 {
        return Err(Error::domain("sample variance needs at least two counts"));
    }
    let x: Vec<f64> = y.iter().map(|c| *c as f64).collect();
    Ok(SummaryVector::new(
        POISSON_SUMMARIES.iter().map(|s| s.to_string()).collect(),
        vec![stats::mean(&x), stats::sample_variance(&x)],
    ))
}

/// Generalized Pareto exceedances over a fixed threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpdParams {
    pub scale: f64,
    pub shape: f64,
    pub threshold: f64,
}

/// Diameters below this many micrometres are not recorded.
pub const STEREO_THRESHOLD: f64 = 5.0;

impl GpdParams {
    pub fn new(scale: f64, shape: f64, threshold: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite() && shape.is_finite() && threshold.is_finite()) {
            return Err(Error::domain(format!("invalid GPD scale {scale} / shape {shape}")));
        }
        Ok(GpdParams { scale, shape, threshold })
    }

    /// Inverse CDF at `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let tail = 1.0 - u;
        if self.shape.abs() > 1e-8 {
            self.threshold + self.scale / self.shape * (tail.powf(-self.shape) - 1.0)
        } else {
            self.threshold - self.scale * tail.ln()
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let z = (x - self.threshold) / self.scale;
        if z <= 0.0 {
            return 0.0;
        }
        if self.shape.abs() > 1e-8 {
            let base = 1.0 + self.shape * z;
            if base <= 0.0 {
                return 1.0;
            }
            1.0 - base.powf(-1.0 / self.shape)
        } else {
            1.0 - (-z).exp()
        }
    }

    /// Finite upper endpoint when the shape is negative.
    pub fn upper_endpoint(&self) -> f64 {
        if self.shape < 0.0 {
            self.threshold - self.scale / self.shape
        } else {
            f64::INFINITY
        }
    }
}

pub fn gpd_sample(g: &GpdParams, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, &[tag::SIMULATE]);
    gpd_draws(g, n, &mut rng)
}

fn gpd_draws(g: &GpdParams, n: usize, rng: &mut Rng) -> Vec<f64> {
    let end = g.upper_endpoint();
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            // rounding can land exactly on the endpoint; keep draws inside
            g.quantile(u).min(end)
        })
        .collect()
}

/// Surrogate for the stereological inclusion model: `K ~ Poisson(lambda)`
/// diameters, each `threshold + GPD(scale, shape)`. The planar sectioning
/// geometry of the full elliptical model is not simulated; `theta` keeps
/// its roles (intensity, scale, shape).
pub fn stereo_simulate(theta: &[f64], seed: u64) -> Result<Vec<f64>> {
    let mut rng = rng::stream(seed, &[tag::SIMULATE]);
    stereo_draw(theta, &mut rng)
}

fn stereo_draw(theta: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
    let [lambda, scale, shape] = theta else {
        return Err(Error::domain("stereo model takes (lambda, sigma, xi)"));
    };
    if !(*lambda >= 0.0) {
        return Err(Error::domain("intensity must be nonnegative"));
    }
    let g = GpdParams::new(*scale, *shape, STEREO_THRESHOLD)?;
    let k = poisson_draw(*lambda, rng) as usize;
    Ok(gpd_draws(&g, k, rng))
}

pub const STEREO_LEVELS: [f64; 8] = [0.0, 0.05, 0.1, 0.2, 0.8, 0.9, 0.95, 1.0];
pub const STEREO_SUMMARIES: [&str; 9] = ["N", "q000", "q005", "q010", "q020", "q080", "q090", "q095", "q100"];

/// Count plus type-7 quantiles at [`STEREO_LEVELS`]; invalid when empty.
pub fn stereo_summaries(d: &[f64]) -> SummaryVector {
    let names: Vec<String> = STEREO_SUMMARIES.iter().map(|s| s.to_string()).collect();
    if d.is_empty() {
        return SummaryVector::invalid(names);
    }
    let mut sorted = d.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut values = vec![d.len() as f64];
    values.extend(STEREO_LEVELS.iter().map(|&q| stats::quantile_sorted(&sorted, q)));
    SummaryVector::new(names, values)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RickerConfig {
    /// Length of the observed series.
    pub t_len: usize,
    /// Initial latent population.
    pub n0: f64,
    pub burn_in: usize,
}

impl Default for RickerConfig {
    fn default() -> Self {
        RickerConfig {
            t_len: 250,
            n0: 1.0,
            burn_in: 50,
        }
    }
}

impl RickerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_len < 10 || !(self.n0 > 0.0 && self.n0.is_finite()) {
            return Err(Error::config("Ricker config needs T >= 10 and N0 > 0"));
        }
        Ok(())
    }
}

/// Latent log-population path `log N_1 .. log N_{burn_in + T}` for
/// `N_{t+1} = r N_t exp(-N_t + e_{t+1})`, with the log growth rate allowed
/// to depend on the current state. Working in logs keeps `N_t > 0` for any
/// finite noise.
fn ricker_log_latent(
    log_n0: f64,
    steps: usize,
    sigma: f64,
    log_growth: impl Fn(f64) -> f64,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let mut log_n = log_n0;
    let mut path = Vec::with_capacity(steps);
    for _ in 0..steps {
        let e: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
        let n = log_n.exp();
        log_n = log_growth(n) + log_n - n + e;
        if !log_n.is_finite() || log_n > 700.0 {
            return Err(Error::numerical("Ricker latent state overflowed"));
        }
        path.push(log_n);
    }
    Ok(path)
}

fn observe(log_latent: &[f64], log_phi: f64, rng: &mut Rng) -> Result<Vec<u64>> {
    log_latent
        .iter()
        .map(|&ln| {
            let mean = (log_phi + ln).exp();
            if !(mean.is_finite() && mean < 1e15) {
                return Err(Error::numerical("Ricker observation mean overflowed"));
            }
            Ok(poisson_draw(mean, rng))
        })
        .collect()
}

/// Ricker counts for `theta = (log phi, log r, log sigma)`: the latent
/// recursion runs `burn_in + T` steps and the last `T` states are observed
/// as `Poisson(phi N_t)`.
pub fn ricker_simulate(theta: &[f64], cfg: &RickerConfig, seed: u64) -> Result<Vec<u64>> {
    let mut rng = rng::stream(seed, &[tag::SIMULATE]);
    ricker_draw(theta, cfg, &mut rng)
}

fn ricker_draw(theta: &[f64], cfg: &RickerConfig, rng: &mut Rng) -> Result<Vec<u64>> {
    let [log_phi, log_r, log_sigma] = theta else {
        return Err(Error::domain("Ricker model takes (log phi, log r, log sigma)"));
    };
    cfg.validate()?;
    let sigma = log_sigma.exp();
    let path = ricker_log_latent(cfg.n0.ln(), cfg.burn_in + cfg.t_len, sigma, |_| *log_r, rng)?;
    observe(&path[cfg.burn_in..], *log_phi, rng)
}

/// Replaces `len` values from 0-based `start` with a constant spike at
/// `factor` times the series maximum. Returns the 1-based times hit.
pub fn inject_spike(series: &mut [f64], start: usize, len: usize, factor: f64) -> Result<Vec<usize>> {
    if len == 0 || start + len > series.len() {
        return Err(Error::domain("spike segment must lie inside the series"));
    }
    let level = factor * series.iter().cloned().fold(0.0, f64::max).max(1.0);
    series[start..start + len].iter_mut().for_each(|v| *v = level.round());
    Ok((start + 1..=start + len).collect())
}

/// Latent path with zero environmental noise, for fixed-point checks.
pub fn ricker_deterministic_latent(log_r: f64, n0: f64, steps: usize) -> Vec<f64> {
    let mut rng = rng::stream(0, &[]);
    ricker_log_latent(n0.ln(), steps, 0.0, |_| log_r, &mut rng)
        .expect("noise-free Ricker path is finite")
        .into_iter()
        .map(f64::exp)
        .collect()
}

/// Latent log-states of a Ricker path (same stream layout as
/// [`ricker_simulate`]), mainly for tests.
pub fn ricker_latent(theta: &[f64], cfg: &RickerConfig, seed: u64) -> Result<Vec<f64>> {
    let mut rng = rng::stream(seed, &[tag::SIMULATE]);
    let sigma = theta[2].exp();
    let path = ricker_log_latent(cfg.n0.ln(), cfg.burn_in + cfg.t_len, sigma, |_| theta[1], &mut rng)?;
    Ok(path[cfg.burn_in..].to_vec())
}

/// A Ricker variant whose growth rate differs between low and high latent
/// states: `log r` from `theta` while `N_t < switch_level`, `log_r_upper`
/// otherwise. Data from it cannot be matched by a single growth rate.
pub fn ricker_simulate_switching(
    theta: &[f64],
    cfg: &RickerConfig,
    switch_level: f64,
    log_r_upper: f64,
    seed: u64,
) -> Result<Vec<u64>> {
    let [log_phi, log_r, log_sigma] = theta else {
        return Err(Error::domain("Ricker model takes (log phi, log r, log sigma)"));
    };
    cfg.validate()?;
    let mut rng = rng::stream(seed, &[tag::SIMULATE]);
    let growth = |n: f64| if n < switch_level { *log_r } else { log_r_upper };
    let path = ricker_log_latent(cfg.n0.ln(), cfg.burn_in + cfg.t_len, log_sigma.exp(), growth, &mut rng)?;
    observe(&path[cfg.burn_in..], *log_phi, &mut rng)
}

/// Poisson counts with `n_obs` observations and a Gamma prior on the mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoissonModel {
    pub n_obs: usize,
}

impl PoissonModel {
    pub fn default_prior() -> PriorSpec {
        PriorSpec::new(vec![PriorSpec::gamma("eta", 1.0, 1.0)]).expect("valid prior")
    }
}

impl GenerativeModel for PoissonModel {
    fn id(&self) -> &str {
        "poisson"
    }

    fn summary_names(&self) -> Vec<String> {
        POISSON_SUMMARIES.iter().map(|s| s.to_string()).collect()
    }

    fn simulate(&self, theta: &[f64], rng: &mut Rng) -> Result<Dataset> {
        Ok(Dataset::Counts(poisson_counts(theta[0], self.n_obs, rng)?))
    }

    fn summarize(&self, data: &Dataset) -> SummaryVector {
        match data {
            Dataset::Counts(y) => poisson_summaries(y).unwrap_or_else(|_| SummaryVector::invalid(self.summary_names())),
            _ => SummaryVector::invalid(self.summary_names()),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StereoModel;

impl StereoModel {
    pub fn default_prior() -> PriorSpec {
        PriorSpec::new(vec![
            PriorSpec::uniform("lambda", 2.0, 200.0),
            PriorSpec::uniform("sigma", 0.0, 10.0),
            PriorSpec::uniform("xi", -5.0, 5.0),
        ])
        .expect("valid prior")
    }
}

impl GenerativeModel for StereoModel {
    fn id(&self) -> &str {
        "stereo"
    }

    fn summary_names(&self) -> Vec<String> {
        STEREO_SUMMARIES.iter().map(|s| s.to_string()).collect()
    }

    fn simulate(&self, theta: &[f64], rng: &mut Rng) -> Result<Dataset> {
        Ok(Dataset::Diameters(stereo_draw(theta, rng)?))
    }

    fn summarize(&self, data: &Dataset) -> SummaryVector {
        match data {
            Dataset::Diameters(d) => stereo_summaries(d),
            _ => SummaryVector::invalid(self.summary_names()),
        }
    }
}

/// How a Ricker series is reduced to features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RickerSummary {
    /// Two-regime SETAR estimates at a fixed threshold.
    Setar { threshold: f64 },
    /// The series itself, one feature per time point.
    RawSeries,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RickerModel {
    pub config: RickerConfig,
    pub summary: RickerSummary,
}

impl RickerModel {
    pub fn default_prior() -> PriorSpec {
        PriorSpec::new(vec![
            PriorSpec::uniform("log_phi", 11.0, 13.0),
            PriorSpec::uniform("log_r", -0.02, 0.04),
            PriorSpec::uniform("log_sigma", -2.0, -0.5),
        ])
        .expect("valid prior")
    }
}

impl GenerativeModel for RickerModel {
    fn id(&self) -> &str {
        "ricker"
    }

    fn summary_names(&self) -> Vec<String> {
        match self.summary {
            RickerSummary::Setar { .. } => setar::SETAR_SUMMARIES.iter().map(|s| s.to_string()).collect(),
            RickerSummary::RawSeries => (1..=self.config.t_len).map(|t| format!("d{t}")).collect(),
        }
    }

    fn simulate(&self, theta: &[f64], rng: &mut Rng) -> Result<Dataset> {
        Ok(Dataset::Counts(ricker_draw(theta, &self.config, rng)?))
    }

    fn summarize(&self, data: &Dataset) -> SummaryVector {
        let x = data.to_f64();
        match self.summary {
            RickerSummary::Setar { threshold } => setar::ricker_setar_summaries(&x, threshold),
            RickerSummary::RawSeries => SummaryVector::new(self.summary_names(), x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observed_poisson_summaries() {
        let s = poisson_summaries(&[0, 0, 0, 0, 5]).unwrap();
        assert_eq!(s.values, vec![1.0, 5.0]);
        assert_eq!(poisson_summaries(&[3, 3, 3]).unwrap().values, vec![3.0, 0.0]);
        assert_eq!(poisson_summaries(&[0, 2]).unwrap().values, vec![1.0, 2.0]);
        assert!(poisson_summaries(&[4]).is_err());
    }

    #[test]
    fn poisson_moments_and_limits() {
        let n = 100_000;
        let y = poisson_simulate(1.0, n, 5).unwrap();
        let m = y.iter().sum::<u64>() as f64 / n as f64;
        assert!((m - 1.0).abs() < 3.0 / (n as f64).sqrt(), "mean {m}");
        assert!(poisson_simulate(1e-8, 5, 1).unwrap().iter().all(|c| *c == 0));
        assert_eq!(poisson_simulate(2.0, 5, 9).unwrap(), poisson_simulate(2.0, 5, 9).unwrap());
        assert!(poisson_simulate(0.0, 5, 1).is_err());
    }

    #[test]
    fn ptrs_branch_moments() {
        let mut rng = rng::stream(1, &[]);
        let n = 50_000;
        for lambda in [30.0, 250.0, 1e5] {
            let x: Vec<f64> = (0..n).map(|_| poisson_draw(lambda, &mut rng) as f64).collect();
            let m = stats::mean(&x);
            let v = stats::sample_variance(&x);
            let se = (lambda / n as f64).sqrt();
            assert!((m - lambda).abs() < 4.0 * se, "lambda {lambda}: mean {m}");
            assert!((v / lambda - 1.0).abs() < 0.05, "lambda {lambda}: var {v}");
        }
    }

    #[test]
    fn gpd_exponential_limit_and_endpoints() {
        let g = GpdParams::new(1.0, 0.0, 0.0).unwrap();
        let x = gpd_sample(&g, 100_000, 2);
        assert!((stats::mean(&x) - 1.0).abs() < 0.01);
        let g = GpdParams::new(1.0, -0.5, STEREO_THRESHOLD).unwrap();
        assert!(gpd_sample(&g, 10_000, 3).iter().all(|d| *d < STEREO_THRESHOLD + 2.0 + 1e-12));
        assert_eq!(g.quantile(0.0), STEREO_THRESHOLD);
        assert_eq!(GpdParams::new(2.0, 0.0, 5.0).unwrap().quantile(0.0), 5.0);
        assert!(GpdParams::new(0.0, 0.1, 5.0).is_err());
    }

    #[test]
    fn stereo_count_moments() {
        let reps = 10_000;
        let theta = [50.0, 1.0, 0.1];
        let total: usize = (0..reps).map(|i| stereo_simulate(&theta, i as u64).unwrap().len()).sum();
        let m = total as f64 / reps as f64;
        assert!((m - 50.0).abs() < 3.0 * 50f64.sqrt() / 100.0, "mean K {m}");
        assert!(stereo_simulate(&[1e-9, 1.0, 0.1], 1).unwrap().is_empty());
        assert!(!stereo_summaries(&[]).valid);
    }

    #[test]
    fn stereo_summary_layout() {
        let s = stereo_summaries(&[8.0, 6.0, 10.0, 7.0, 9.0]);
        assert_eq!(s.values[0], 5.0);
        assert_eq!(s.values[1], 6.0);
        assert_eq!(s.values[8], 10.0);
        assert_eq!(s.len(), 9);
    }

    #[test]
    fn ricker_noise_free_dynamics() {
        // r = 1: N_{t+1} = N_t exp(-N_t) decreases towards zero
        let path = ricker_deterministic_latent(0.0, 0.5, 200);
        assert!(path.windows(2).all(|w| w[1] < w[0]));
        assert!(path[199] < 0.01);
        // equilibrium N* = log r is a fixed point
        let log_r = 1.5f64;
        let path = ricker_deterministic_latent(log_r, log_r, 50);
        assert!(path.iter().all(|n| (n - log_r).abs() < 1e-12));
    }

    #[test]
    fn ricker_observation_mean_tracks_latent() {
        let cfg = RickerConfig {
            t_len: 5000,
            ..Default::default()
        };
        let theta = [3.0, 1.0, -1.0];
        let latent = ricker_latent(&theta, &cfg, 4).unwrap();
        let counts = ricker_simulate(&theta, &cfg, 4).unwrap();
        assert!(latent.iter().all(|l| l.exp() > 0.0));
        let phi = 3f64.exp();
        let mean_n = latent.iter().map(|l| l.exp()).sum::<f64>() / latent.len() as f64;
        let mean_d = counts.iter().sum::<u64>() as f64 / counts.len() as f64;
        assert!((mean_d / (phi * mean_n) - 1.0).abs() < 0.02, "{mean_d} vs {}", phi * mean_n);
    }
}
