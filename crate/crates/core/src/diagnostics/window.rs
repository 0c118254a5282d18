//! Window-averaged diagnostic for a raw time series.
//!
//! Every window of width `k` is deleted in turn and multiply imputed. For a
//! time `t`, the statistic averages the per-window maximum log relative
//! belief over the windows containing `t`; its reference distribution
//! averages per-window reference statistics from independent fresh
//! imputations.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::conflict::{calibrate_conflict, tail_fraction, CompletionSource};
use super::regressor::PosteriorRegressor;
use crate::density::GridSpec;
use crate::error::{Error, Result};
use crate::imputation::window::WindowImputer;
use crate::rng::{self, tag};

/// Windows `{l, ..., l + k - 1}` inside `1..=t_len` that contain `t`, as
/// inclusive 1-based `(first, last)` pairs.
pub fn window_set(t: usize, k: usize, t_len: usize) -> Vec<(usize, usize)> {
    if t == 0 || t > t_len || k == 0 || k > t_len {
        return Vec::new();
    }
    let first = t.saturating_sub(k - 1).max(1);
    let last = t.min(t_len - k + 1);
    (first..=last).map(|l| (l, l + k - 1)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowScanConfig {
    pub k: usize,
    pub m: usize,
    pub m_star: usize,
    pub grid: GridSpec,
    /// Times with `p_tilde` below this are flagged.
    pub flag_level: f64,
}

impl Default for WindowScanConfig {
    fn default() -> Self {
        WindowScanConfig {
            k: 4,
            m: 100,
            m_star: 100,
            grid: GridSpec::default(),
            flag_level: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowStat {
    /// 1-based first index of the window.
    pub start: usize,
    pub r_obs: f64,
    pub floored: bool,
    pub skipped: bool,
    #[serde(skip)]
    pub r_ref: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    /// 1-based time index.
    pub t: usize,
    pub r_obs: f64,
    pub p_tilde: f64,
    /// Windows that contributed (after skips).
    pub n_windows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowScanReport {
    pub k: usize,
    pub m: usize,
    pub m_star: usize,
    pub t_len: usize,
    pub points: Vec<ScanPoint>,
    pub windows: Vec<WindowStat>,
    pub flagged: Vec<usize>,
    pub flag_level: f64,
    pub seed: u64,
}

struct WindowCompletion<'a> {
    imputer: &'a WindowImputer,
    start: usize,
    k: usize,
}

impl CompletionSource for WindowCompletion<'_> {
    fn complete(&self, m: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .imputer
            .impute(self.start, self.k, m, seed)?
            .iter()
            .map(|w| self.imputer.complete(self.start, w))
            .collect())
    }
}

/// Scans every time point of `imputer.series`. The regressor takes whole
/// series as its input. Window `l` draws its imputations from the seed
/// `(seed, WINDOW, l)`, and its reference statistics are shared by all the
/// times it contains.
pub fn window_scan(reg: &dyn PosteriorRegressor, imputer: &WindowImputer, cfg: &WindowScanConfig, seed: u64) -> Result<WindowScanReport> {
    let t_len = imputer.series.len();
    if cfg.k == 0 || cfg.k >= t_len {
        return Err(Error::config(format!("window width {} must lie in 1..{t_len}", cfg.k)));
    }
    if cfg.m == 0 || cfg.m_star == 0 {
        return Err(Error::config("M and M* must be >= 1"));
    }
    if reg.n_features() != t_len {
        return Err(Error::config(format!(
            "regressor expects series of length {}, observed series has {t_len}",
            reg.n_features()
        )));
    }
    let n_windows = t_len - cfg.k + 1;
    let windows: Vec<WindowStat> = (0..n_windows)
        .into_par_iter()
        .map(|l| {
            let source = WindowCompletion {
                imputer,
                start: l,
                k: cfg.k,
            };
            let wseed = rng::derive_seed(seed, &[tag::WINDOW, l as u64]);
            match calibrate_conflict(reg, &imputer.series, &source, cfg.m, cfg.m_star, &cfg.grid, wseed) {
                Ok(rep) if rep.r_ref.len() == cfg.m_star => WindowStat {
                    start: l + 1,
                    r_obs: rep.r_obs,
                    floored: rep.r_obs_floored,
                    skipped: false,
                    r_ref: rep.r_ref,
                },
                outcome => {
                    if let Err(e) = outcome {
                        warn!("window starting at {} skipped: {e}", l + 1);
                    }
                    WindowStat {
                        start: l + 1,
                        r_obs: f64::NAN,
                        floored: false,
                        skipped: true,
                        r_ref: Vec::new(),
                    }
                }
            }
        })
        .collect();
    let points: Vec<ScanPoint> = (1..=t_len)
        .map(|t| {
            let used: Vec<&WindowStat> = window_set(t, cfg.k, t_len)
                .iter()
                .map(|(l, _)| &windows[l - 1])
                .filter(|w| !w.skipped)
                .collect();
            if used.is_empty() {
                return ScanPoint {
                    t,
                    r_obs: f64::NAN,
                    p_tilde: f64::NAN,
                    n_windows: 0,
                };
            }
            let n = used.len() as f64;
            let r_obs = used.iter().map(|w| w.r_obs).sum::<f64>() / n;
            let r_ref: Vec<f64> = (0..cfg.m_star).map(|i| used.iter().map(|w| w.r_ref[i]).sum::<f64>() / n).collect();
            ScanPoint {
                t,
                r_obs,
                p_tilde: tail_fraction(&r_ref, r_obs),
                n_windows: used.len(),
            }
        })
        .collect();
    let flagged = points.iter().filter(|p| p.p_tilde < cfg.flag_level).map(|p| p.t).collect();
    Ok(WindowScanReport {
        k: cfg.k,
        m: cfg.m,
        m_star: cfg.m_star,
        t_len,
        points,
        windows,
        flagged,
        flag_level: cfg.flag_level,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_sets() {
        assert_eq!(window_set(1, 4, 100), vec![(1, 4)]);
        assert_eq!(window_set(50, 4, 100).iter().map(|w| w.0).collect::<Vec<_>>(), vec![47, 48, 49, 50]);
        assert_eq!(window_set(100, 4, 100), vec![(97, 100)]);
        for t in 1..=10 {
            let n = window_set(t, 4, 10).len();
            assert_eq!(n, t.min(10 - t + 1).min(4).min(10 - 4 + 1));
        }
    }
}
