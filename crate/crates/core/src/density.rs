//! Densities on fixed parameter grids and the weighted Gaussian KDE that
//! produces them.
//!
//! Every posterior in the crate is a [`DensityEstimate`]: values on a
//! strictly increasing grid, normalized to unit trapezoid mass. Ratio
//! statistics require both densities to share one grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{self, weighted_mean_sd, weighted_quantile_sorted, INV_SQRT_2PI};

/// Interval support of a scalar parameter; either end may be infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub lo: f64,
    pub hi: f64,
}

impl Support {
    pub const REAL: Support = Support {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        Support { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// How an automatic grid is laid out around a weighted sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub points: usize,
    pub lo_quantile: f64,
    pub hi_quantile: f64,
    /// Fraction of the quantile span added on each side.
    pub expand: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            points: 512,
            lo_quantile: 0.001,
            hi_quantile: 0.999,
            expand: 0.1,
        }
    }
}

impl GridSpec {
    /// Grid covering `[lo, hi]` widened by `expand` of the span on each side
    /// (or by `min_half_width` around a degenerate range), clipped to `support`.
    pub fn layout(&self, lo: f64, hi: f64, min_half_width: f64, support: Support) -> Result<Grid> {
        if self.points < 2 {
            return Err(Error::config("grid needs at least 2 points"));
        }
        let span = hi - lo;
        let pad = (self.expand * span).max(0.0);
        let (mut a, mut b) = if span > 0.0 {
            (lo - pad, hi + pad)
        } else {
            let w = if min_half_width > 0.0 { min_half_width } else { 1e-6 * lo.abs().max(1.0) };
            (lo - w, hi + w)
        };
        a = a.max(support.lo);
        b = b.min(support.hi);
        if !(a < b) {
            return Err(Error::numerical(format!(
                "grid range [{lo}, {hi}] does not intersect support [{}, {}]",
                support.lo, support.hi
            )));
        }
        Grid::uniform(a, b, self.points)
    }
}

/// Strictly increasing evaluation grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) || n < 2 {
            return Err(Error::config(format!("invalid grid [{lo}, {hi}] with {n} points")));
        }
        let step = (hi - lo) / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
        points[n - 1] = hi;
        Ok(Grid { points })
    }

    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 || points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::config("grid points must be strictly increasing"));
        }
        Ok(Grid { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.points[0]
    }

    pub fn hi(&self) -> f64 {
        self.points[self.points.len() - 1]
    }
}

/// Normalized density values on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub support: Support,
}

impl DensityEstimate {
    /// Normalizes `values` to unit trapezoid mass on `grid`.
    pub fn normalized(grid: Grid, mut values: Vec<f64>, support: Support) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::config("density values and grid differ in length"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::numerical("density values must be finite and nonnegative"));
        }
        let mass = stats::trapezoid(grid.points(), &values);
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::numerical("density has zero mass on its grid"));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Ok(DensityEstimate { grid, values, support })
    }

    pub fn integral(&self) -> f64 {
        stats::trapezoid(self.grid.points(), &self.values)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Equal-weight average of densities sharing one grid.
    pub fn mixture(parts: &[DensityEstimate]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::config("empty mixture"))?;
        let mut acc = vec![0.0; first.values.len()];
        for p in parts {
            if p.grid != first.grid {
                return Err(Error::config("mixture components must share a grid"));
            }
            acc.iter_mut().zip(&p.values).for_each(|(a, v)| *a += v);
        }
        let n = parts.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        DensityEstimate::normalized(first.grid.clone(), acc, first.support)
    }

    /// Total variation distance `0.5 * integral |p - q|` on a shared grid.
    pub fn total_variation(&self, other: &DensityEstimate) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::config("total variation needs a shared grid"));
        }
        let diff: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).collect();
        Ok(0.5 * stats::trapezoid(self.grid.points(), &diff))
    }
}

/// Weighted Silverman bandwidth `1.06 * s * n_eff^(-1/5)` with
/// `s = min(weighted SD, weighted IQR / 1.349)` and `n_eff = 1 / sum(w^2)`.
/// `pairs` are `(value, weight)` sorted by value with weights summing to one.
pub fn silverman_bandwidth(pairs: &[(f64, f64)]) -> f64 {
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let n_eff = total * total / pairs.iter().map(|p| p.1 * p.1).sum::<f64>();
    let (_, sd) = weighted_mean_sd(pairs);
    let iqr = weighted_quantile_sorted(pairs, 0.75) - weighted_quantile_sorted(pairs, 0.25);
    let robust = iqr / 1.349;
    let spread = match (sd > 0.0, robust > 0.0) {
        (true, true) => sd.min(robust),
        (true, false) => sd,
        (false, true) => robust,
        (false, false) => 0.0,
    };
    1.06 * spread * n_eff.powf(-0.2)
}

/// Weighted Gaussian KDE with bandwidth fixed by the caller, evaluated on
/// `grid` and renormalized there. When the kernel mass misses every grid
/// point (a spike narrower than the grid spacing) the mass is assigned to
/// the nearest grid node.
pub fn kde_on_grid(pairs: &[(f64, f64)], bandwidth: f64, grid: &Grid, support: Support) -> Result<DensityEstimate> {
    if !(bandwidth > 0.0) {
        return Err(Error::numerical("KDE bandwidth must be positive"));
    }
    let cutoff = 9.0 * bandwidth;
    let values: Vec<f64> = grid
        .points()
        .iter()
        .map(|&x| {
            let start = pairs.partition_point(|p| p.0 < x - cutoff);
            pairs[start..]
                .iter()
                .take_while(|p| p.0 <= x + cutoff)
                .map(|&(v, w)| {
                    let z = (x - v) / bandwidth;
                    w * (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * INV_SQRT_2PI
                / bandwidth
        })
        .collect();
    if stats::trapezoid(grid.points(), &values) > 0.0 {
        return DensityEstimate::normalized(grid.clone(), values, support);
    }
    let mut spike = vec![0.0; grid.len()];
    for &(v, w) in pairs {
        let i = grid.points().partition_point(|g| *g < v).min(grid.len() - 1);
        let i = if i > 0 && (v - grid.points()[i - 1]).abs() < (grid.points()[i] - v).abs() { i - 1 } else { i };
        spike[i] += w;
    }
    DensityEstimate::normalized(grid.clone(), spike, support)
}

/// Sorted, normalized `(value, weight)` pairs with zero weights dropped.
pub fn weighted_pairs(values: &[f64], weights: &[f64]) -> Vec<(f64, f64)> {
    let total: f64 = weights.iter().sum();
    let mut pairs: Vec<(f64, f64)> = values
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(v, w)| (*v, w / total))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// Bandwidth after applying the degenerate-spike floor.
pub fn floored_bandwidth(pairs: &[(f64, f64)], floor: f64) -> (f64, bool) {
    let h = silverman_bandwidth(pairs);
    if h >= floor && h > 0.0 {
        (h, false)
    } else {
        let f = if floor > 0.0 { floor } else { 1e-6 * pairs.first().map(|p| p.0.abs()).unwrap_or(1.0).max(1.0) };
        (f, true)
    }
}

/// Range `[q_lo, q_hi]` of a sorted weighted sample.
pub fn weighted_range(pairs: &[(f64, f64)], spec: &GridSpec) -> (f64, f64) {
    (
        weighted_quantile_sorted(pairs, spec.lo_quantile),
        weighted_quantile_sorted(pairs, spec.hi_quantile),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_endpoints() {
        let g = Grid::uniform(-1.0, 1.0, 5).unwrap();
        assert_eq!(g.points(), &[-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert!(Grid::uniform(1.0, 1.0, 5).is_err());
    }

    #[test]
    fn kde_normalizes_and_spikes() {
        let g = Grid::uniform(-5.0, 5.0, 101).unwrap();
        let d = kde_on_grid(&[(0.0, 0.5), (1.0, 0.5)], 0.5, &g, Support::REAL).unwrap();
        assert!((d.integral() - 1.0).abs() < 1e-12);
        // bandwidth far below the grid spacing
        let s = kde_on_grid(&[(0.03, 1.0)], 1e-9, &g, Support::REAL).unwrap();
        assert!((s.integral() - 1.0).abs() < 1e-12);
        assert_eq!(s.values.iter().filter(|v| **v > 0.0).count(), 1);
    }

    #[test]
    fn silverman_matches_unweighted_rule() {
        // n = 4 equal weights, sd = sqrt(1.25), iqr (generalized inverse) = 3 - 1 = 2
        let pairs: Vec<(f64, f64)> = [0.0, 1.0, 2.0, 3.0].iter().map(|v| (*v, 0.25)).collect();
        let sd = 1.25f64.sqrt();
        let expect = 1.06 * sd.min(2.0 / 1.349) * 4f64.powf(-0.2);
        assert!((silverman_bandwidth(&pairs) - expect).abs() < 1e-12);
    }

    #[test]
    fn mixture_requires_shared_grid() {
        let g1 = Grid::uniform(0.0, 1.0, 3).unwrap();
        let g2 = Grid::uniform(0.0, 2.0, 3).unwrap();
        let a = DensityEstimate::normalized(g1, vec![1.0; 3], Support::REAL).unwrap();
        let b = DensityEstimate::normalized(g2, vec![1.0; 3], Support::REAL).unwrap();
        assert!(DensityEstimate::mixture(&[a, b]).is_err());
    }
}
