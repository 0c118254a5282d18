//! Small descriptive-statistics helpers shared across modules.

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with divisor `n - 1`.
pub fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Type-7 quantile (linear interpolation of order statistics) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Type-7 quantile of unsorted data.
pub fn quantile(x: &[f64], q: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, q)
}

pub fn median(x: &[f64]) -> f64 {
    quantile(x, 0.5)
}

/// Median absolute deviation scaled by 1.4826 (consistent for the normal SD).
pub fn mad(x: &[f64]) -> f64 {
    let m = median(x);
    let dev: Vec<f64> = x.iter().map(|v| (v - m).abs()).collect();
    1.4826 * median(&dev)
}

/// Generalized inverse of a weighted empirical CDF: the smallest support
/// point whose cumulative weight reaches `q`. `pairs` must be sorted by value.
pub fn weighted_quantile_sorted(pairs: &[(f64, f64)], q: f64) -> f64 {
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let target = q * total;
    let mut acc = 0.0;
    for &(v, w) in pairs {
        acc += w;
        // relative slack so that e.g. two weights of 0.5 reach q = 0.5
        if acc >= target - 1e-12 * total {
            return v;
        }
    }
    pairs.last().map(|p| p.0).unwrap_or(f64::NAN)
}

/// Weighted mean and standard deviation (weights normalized internally).
pub fn weighted_mean_sd(pairs: &[(f64, f64)]) -> (f64, f64) {
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let m = pairs.iter().map(|(v, w)| v * w).sum::<f64>() / total;
    let var = pairs.iter().map(|(v, w)| w * (v - m).powi(2)).sum::<f64>() / total;
    (m, var.max(0.0).sqrt())
}

/// Trapezoid rule on an arbitrary increasing grid.
pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(g, v)| 0.5 * (g[1] - g[0]) * (v[0] + v[1]))
        .sum()
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn normal_pdf(x: f64, mu: f64, sd: f64) -> f64 {
    let z = (x - mu) / sd;
    INV_SQRT_2PI / sd * (-0.5 * z * z).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_quantiles_by_hand() {
        let d = [6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(quantile(&d, 0.0), 6.0);
        assert_eq!(quantile(&d, 1.0), 10.0);
        assert_eq!(quantile(&d, 0.5), 8.0);
        // h = 4 * 0.1 = 0.4 -> 6 + 0.4
        assert!((quantile(&d, 0.1) - 6.4).abs() < 1e-12);
    }

    #[test]
    fn weighted_quantile_generalized_inverse() {
        let pairs = [(1.0, 0.5), (3.0, 0.5)];
        assert_eq!(weighted_quantile_sorted(&pairs, 0.5), 1.0);
        assert_eq!(weighted_quantile_sorted(&pairs, 0.51), 3.0);
    }

    #[test]
    fn sample_variance_uses_n_minus_one() {
        assert_eq!(sample_variance(&[0.0, 2.0]), 2.0);
    }
}
