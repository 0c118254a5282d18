//! Natural cubic spline interpolation.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct NaturalSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots; zero at both ends.
    m: Vec<f64>,
}

impl NaturalSpline {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::config("spline needs at least two knots"));
        }
        if x.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::config("spline knots must be strictly increasing"));
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // tridiagonal system for interior second derivatives (Thomas algorithm)
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                diag[i - 1] = 2.0 * (h0 + h1);
                upper[i - 1] = h1;
                rhs[i - 1] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
            }
            for i in 1..k {
                let lower = x[i + 1] - x[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Ok(NaturalSpline {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        })
    }

    /// Value at `t`; linear beyond the end knots.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let i = self.x.partition_point(|v| *v <= t).clamp(1, n - 1) - 1;
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        if t < self.x[0] || t > self.x[n - 1] {
            let slope = (self.y[i + 1] - self.y[i]) / h - h * (2.0 * m0 + m1) / 6.0;
            let end_slope = if t < self.x[0] { slope } else { slope + h * (m0 + m1) / 2.0 };
            let (xe, ye) = if t < self.x[0] { (x0, self.y[i]) } else { (x1, self.y[i + 1]) };
            return ye + end_slope * (t - xe);
        }
        let a = (x1 - t) / h;
        let b = (t - x0) / h;
        a * self.y[i] + b * self.y[i + 1] + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_lines_and_knots() {
        let x = [0.0, 1.0, 2.5, 4.0, 7.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        let s = NaturalSpline::new(&x, &y).unwrap();
        for t in [0.0, 0.3, 2.0, 5.5, 7.0, -1.0, 9.0] {
            assert!((s.eval(t) - (3.0 - 0.5 * t)).abs() < 1e-12);
        }
        let y2 = [1.0, -2.0, 0.5, 4.0, 0.0];
        let s2 = NaturalSpline::new(&x, &y2).unwrap();
        for (xi, yi) in x.iter().zip(&y2) {
            assert!((s2.eval(*xi) - yi).abs() < 1e-12);
        }
    }

    #[test]
    fn natural_end_conditions() {
        // second derivative vanishes at the ends: check by finite differences
        let x = [0.0, 1.0, 2.0, 3.0];
        let s = NaturalSpline::new(&x, &[0.0, 1.0, 0.0, 1.0]).unwrap();
        let e = 1e-4;
        let d2 = (s.eval(2.0 * e) - 2.0 * s.eval(e) + s.eval(0.0)) / (e * e);
        assert!(d2.abs() < 1e-2, "{d2}");
    }
}
