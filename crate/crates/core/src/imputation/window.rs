//! Imputation of a deleted window of a time series: spline conditional mean
//! plus AR(1) conditional Gaussian noise over a surrounding patch.

use rayon::prelude::*;

use super::ar1::{ar1_conditional, fit_ar1, Ar1Conditional, Ar1Model};
use super::spline::NaturalSpline;
use crate::error::{Error, Result};
use crate::rng::{self, tag};

pub const DEFAULT_PATCH_PAD: usize = 8;

/// Window imputer for one observed series; the AR(1) noise model is fitted
/// once to the whole series.
#[derive(Clone, Debug)]
pub struct WindowImputer {
    pub series: Vec<f64>,
    pub ar1: Ar1Model,
    pub patch_pad: usize,
}

impl WindowImputer {
    pub fn new(series: &[f64], patch_pad: usize) -> Result<Self> {
        Ok(WindowImputer {
            series: series.to_vec(),
            ar1: fit_ar1(series)?,
            patch_pad,
        })
    }

    pub fn with_model(series: &[f64], ar1: Ar1Model, patch_pad: usize) -> Self {
        WindowImputer {
            series: series.to_vec(),
            ar1,
            patch_pad,
        }
    }

    fn check(&self, start: usize, k: usize) -> Result<()> {
        let t = self.series.len();
        if k == 0 || start + k > t {
            return Err(Error::config(format!("window {start}..{} outside series of length {t}", start + k)));
        }
        if k >= t {
            return Err(Error::config("window covers the whole series"));
        }
        Ok(())
    }

    /// Spline mean of the window with its values treated as missing. Windows
    /// touching an end of the series repeat the single available neighbor.
    pub fn conditional_mean(&self, start: usize, k: usize) -> Result<Vec<f64>> {
        self.check(start, k)?;
        let t = self.series.len();
        let end = start + k;
        if start == 0 {
            return Ok(vec![self.series[end]; k]);
        }
        if end == t {
            return Ok(vec![self.series[start - 1]; k]);
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = (0..t)
            .filter(|&i| i < start || i >= end)
            .map(|i| (i as f64, self.series[i]))
            .unzip();
        let spline = NaturalSpline::new(&xs, &ys)?;
        Ok((start..end).map(|i| spline.eval(i as f64)).collect())
    }

    /// Patch indices around the window, clipped to the series.
    pub fn patch(&self, start: usize, k: usize) -> Vec<usize> {
        let lo = start.saturating_sub(self.patch_pad);
        let hi = (start + k + self.patch_pad).min(self.series.len());
        (lo..hi).collect()
    }

    pub fn conditional(&self, start: usize, k: usize) -> Result<Ar1Conditional> {
        self.check(start, k)?;
        let window: Vec<usize> = (start..start + k).collect();
        ar1_conditional(&self.ar1, &self.patch(start, k), &window)
    }

    /// `m` imputed windows; imputation `i` uses stream `(seed, IMPUTE, i)`.
    pub fn impute(&self, start: usize, k: usize, m: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        if m == 0 {
            return Err(Error::config("number of imputations must be >= 1"));
        }
        let mean = self.conditional_mean(start, k)?;
        let cond = self.conditional(start, k)?;
        Ok((0..m)
            .into_par_iter()
            .map(|i| {
                let mut rng = rng::stream(seed, &[tag::IMPUTE, i as u64]);
                let noise = cond.sample_noise(&mut rng);
                mean.iter().zip(noise).map(|(a, b)| a + b).collect()
            })
            .collect())
    }

    /// The observed series with the window replaced by `values`.
    pub fn complete(&self, start: usize, values: &[f64]) -> Vec<f64> {
        let mut s = self.series.clone();
        s[start..start + values.len()].copy_from_slice(values);
        s
    }
}

/// One-shot window imputation with the AR(1) model fitted to `d_obs`.
pub fn impute_window(d_obs: &[f64], start: usize, k: usize, patch_pad: usize, m: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    WindowImputer::new(d_obs, patch_pad)?.impute(start, k, m, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_windows_repeat_neighbor() {
        let s: Vec<f64> = (0..30).map(|i| ((i * 7) % 11) as f64).collect();
        let w = WindowImputer::new(&s, 8).unwrap();
        assert_eq!(w.conditional_mean(0, 4).unwrap(), vec![s[4]; 4]);
        assert_eq!(w.conditional_mean(26, 4).unwrap(), vec![s[25]; 4]);
        assert!(w.conditional_mean(0, 30).is_err());
    }

    #[test]
    fn linear_interior_mean_is_exact() {
        let s: Vec<f64> = (0..40).map(|i| 2.0 + 0.25 * i as f64).collect();
        // a straight line has a degenerate AR(1) fit, so supply one
        let w = WindowImputer::with_model(&s, Ar1Model::new(0.0, 0.5, 1e-300).unwrap(), 8);
        let imp = w.impute(10, 4, 3, 7).unwrap();
        for row in imp {
            for (j, v) in row.iter().enumerate() {
                assert!((v - (2.0 + 0.25 * (10 + j) as f64)).abs() < 1e-9);
            }
        }
    }
}
