//! Ordinary least-squares line fits.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination; 1 for a perfect fit (or a constant `y`).
    pub r2: f64,
}

/// Fits `y = slope * x + intercept`. Returns `None` with fewer than two
/// points, non-finite data, or constant `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n || x.iter().chain(y).any(|v| !v.is_finite()) {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Some(LinearFit { slope, intercept, r2 })
}

/// Fits `ln |y| = -rate * x + c` and returns `rate`.
pub fn exponential_rate(x: &[f64], y: &[f64]) -> Option<f64> {
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    linear_fit(x, &ly).map(|f| -f.slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let f = linear_fit(&[0.0, 1.0, 2.0, 3.0], &[1.0, 3.0, 5.0, 7.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-15 && (f.intercept - 1.0).abs() < 1e-15 && (f.r2 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn noisy_line_has_lower_r2() {
        let f = linear_fit(&[0.0, 1.0, 2.0, 3.0], &[0.0, 2.0, 1.0, 3.0]).unwrap();
        assert!(f.r2 < 1.0 && f.r2 > 0.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(linear_fit(&[1.0], &[1.0]).is_none());
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 2.0]).is_none());
        assert!(linear_fit(&[0.0, 1.0], &[0.0, f64::NAN]).is_none());
    }

    #[test]
    fn rate_of_exponential() {
        let x = [1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 5.0 * (-0.7 * v).exp()).collect();
        assert!((exponential_rate(&x, &y).unwrap() - 0.7).abs() < 1e-12);
    }
}
