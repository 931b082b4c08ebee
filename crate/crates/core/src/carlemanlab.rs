//! Discrete Carleman ratios `[tau^3 |e^{tau phi} u|^2 + tau |e^{tau phi} grad u|^2] / |e^{tau phi} P u|^2`
//! over families of test functions, and the discretely conjugated operator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fieldlang::{ExprAst, FieldError};
use crate::geodist::GridDomain;
use crate::wavesolve::smooth_bump;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("operator grids must be 1D or 2D, got {0}D")]
    Dimension(usize),
    #[error("array has {got} entries, grid has {expected}")]
    Size { expected: usize, got: usize },
    #[error("tau = {tau} exceeds the admissible bound {max}")]
    Inadmissible { tau: f64, max: f64 },
    #[error("test function {0} comes within 3 cells of the boundary")]
    NearBoundary(usize),
    #[error("empty test family or tau grid")]
    Empty,
    #[error("weight range {0:e} overflows the plain exponential")]
    Overflow(f64),
}

pub type Result<T> = std::result::Result<T, LabError>;

/// `P_h u = -Lap_h u + b . grad_h u + c u` with 3-point (per axis) central
/// differences and homogeneous Dirichlet data outside the interior.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    dom: GridDomain,
    b: Vec<Vec<f64>>,
    c: Vec<f64>,
}

impl DiscreteOperator {
    pub fn laplacian(dom: GridDomain) -> Result<Self> {
        let d = dom.dim();
        if d > 2 {
            return Err(LabError::Dimension(d));
        }
        let n = dom.len();
        Ok(Self { dom, b: vec![vec![0.0; n]; d], c: vec![0.0; n] })
    }

    /// Adds the lower-order part `b . grad + c`.
    pub fn with_lower_order(mut self, b: &[ExprAst], c: Option<&ExprAst>) -> Result<Self> {
        let n = self.dom.len();
        for (k, bk) in b.iter().enumerate().take(self.dom.dim()) {
            self.b[k] = (0..n).map(|i| bk.eval(&self.dom.point(i))).collect::<std::result::Result<_, _>>()?;
        }
        if let Some(c) = c {
            self.c = (0..n).map(|i| c.eval(&self.dom.point(i))).collect::<std::result::Result<_, _>>()?;
        }
        Ok(self)
    }

    pub fn domain(&self) -> &GridDomain {
        &self.dom
    }

    fn interior(&self, i: usize) -> bool {
        self.dom.multi_index(i).iter().zip(self.dom.shape()).all(|(&m, &k)| m > 0 && m + 1 < k)
    }

    /// Stencil of row `i` as `(column, coefficient)` pairs.
    fn row(&self, i: usize) -> Vec<(usize, f64)> {
        let h = self.dom.spacing();
        let shape = self.dom.shape();
        let mut out = vec![(i, self.c[i])];
        for axis in 0..self.dom.dim() {
            let stride: usize = shape[axis + 1..].iter().product();
            let h2 = h[axis] * h[axis];
            let b = self.b[axis][i] / (2.0 * h[axis]);
            out[0].1 += 2.0 / h2;
            out.push((i - stride, -1.0 / h2 - b));
            out.push((i + stride, -1.0 / h2 + b));
        }
        out
    }

    fn check(&self, a: &[f64]) -> Result<()> {
        if a.len() != self.dom.len() {
            return Err(LabError::Size { expected: self.dom.len(), got: a.len() });
        }
        Ok(())
    }

    /// `P_h u` on interior points (zero on the boundary).
    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check(u)?;
        Ok((0..self.dom.len())
            .map(|i| if self.interior(i) { self.row(i).iter().map(|&(j, a)| a * u[j]).sum() } else { 0.0 })
            .collect())
    }

    fn weights(&self, phi: &ExprAst, tau: f64) -> Result<Vec<f64>> {
        Ok((0..self.dom.len()).map(|i| phi.eval(&self.dom.point(i)).map(|p| tau * p)).collect::<std::result::Result<_, _>>()?)
    }

    /// `e^{tau phi} P_h (e^{-tau phi} v)` with entries `P_ij e^{tau (phi_i - phi_j)}`,
    /// which stays finite whatever the range of `tau phi`.
    pub fn conjugated_apply(&self, phi: &ExprAst, tau: f64, v: &[f64]) -> Result<Vec<f64>> {
        self.check(v)?;
        let w = self.weights(phi, tau)?;
        Ok((0..self.dom.len())
            .map(|i| if self.interior(i) { self.row(i).iter().map(|&(j, a)| a * (w[i] - w[j]).exp() * v[j]).sum() } else { 0.0 })
            .collect())
    }

    /// Same quantity computed as written: multiply, apply, multiply. Switches
    /// to a shifted exponent when the range of `tau phi` exceeds 600.
    pub fn conjugated_apply_direct(&self, phi: &ExprAst, tau: f64, v: &[f64]) -> Result<Vec<f64>> {
        self.check(v)?;
        let w = self.weights(phi, tau)?;
        let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
        if hi - lo > 600.0 {
            return self.conjugated_apply(phi, tau, v);
        }
        let shift = 0.5 * (hi + lo);
        let u: Vec<f64> = v.iter().zip(&w).map(|(x, wi)| x * (-(wi - shift)).exp()).collect();
        let pu = self.apply(&u)?;
        Ok(pu.iter().zip(&w).map(|(x, wi)| x * (wi - shift).exp()).collect())
    }

    /// Dense matrix of the conjugated operator restricted to interior points.
    pub fn conjugated_matrix(&self, phi: &ExprAst, tau: f64) -> Result<Vec<Vec<f64>>> {
        let w = self.weights(phi, tau)?;
        let n = self.dom.len();
        let mut m = vec![vec![0.0; n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            if self.interior(i) {
                for (j, a) in self.row(i) {
                    row[j] += a * (w[i] - w[j]).exp();
                }
            }
        }
        Ok(m)
    }
}

/// Which side of the change of unknown `v = e^{tau phi} u` the numerator is measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatioForm {
    /// `tau^3 |e^{tau phi} u|^2 + tau |e^{tau phi} grad u|^2`.
    Weighted,
    /// `tau^3 |v|^2 + tau |grad v|^2`.
    Conjugated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioCurve {
    pub tau_grid: Vec<f64>,
    pub ratios: Vec<f64>,
    pub test_family: String,
    pub h: f64,
    pub tau_max_admissible: f64,
    /// Test functions dropped because `|e^{tau phi} P u|` underflowed.
    pub skipped: usize,
}

impl RatioCurve {
    fn stats(&self) -> (f64, f64, f64) {
        let mut s = self.ratios.clone();
        s.sort_by(f64::total_cmp);
        let median = if s.len() % 2 == 1 { s[s.len() / 2] } else { 0.5 * (s[s.len() / 2 - 1] + s[s.len() / 2]) };
        (s[0], median, s[s.len() - 1])
    }

    /// `max <= 3 median`.
    pub fn bounded(&self) -> bool {
        let (_, med, max) = self.stats();
        max <= 3.0 * med
    }

    /// `max / min`.
    pub fn growth(&self) -> f64 {
        let (min, _, max) = self.stats();
        max / min
    }

    pub fn max_over_median(&self) -> f64 {
        let (_, med, max) = self.stats();
        max / med
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,ratio\n");
        for (t, r) in self.tau_grid.iter().zip(&self.ratios) {
            out.push_str(&format!("{t},{r}\n"));
        }
        out
    }
}

/// `tau * h <= 0.5`.
pub fn tau_max_admissible(h: f64) -> f64 {
    0.5 / h
}

/// `count` smooth bumps with random centers and widths in `[w_min, w_max]`
/// (radial in 2D), all at least 3 cells inside the grid.
pub fn random_bumps(dom: &GridDomain, count: usize, w_min: f64, w_max: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = dom.spacing();
    let margin = 3.0 * h.iter().copied().fold(0.0, f64::max);
    (0..count)
        .map(|_| {
            let w: f64 = rng.gen_range(w_min..w_max);
            let center: Vec<f64> = dom.bounds().iter().map(|&(lo, hi)| rng.gen_range(lo + w + margin..hi - w - margin)).collect();
            (0..dom.len())
                .map(|i| {
                    let r = dom.point(i).iter().zip(&center).map(|(x, c)| (x - c).powi(2)).sum::<f64>().sqrt();
                    smooth_bump(r / w)
                })
                .collect()
        })
        .collect()
}

fn ratio_one(op: &DiscreteOperator, w: &[f64], tau: f64, u: &[f64], form: RatioForm) -> Option<f64> {
    let dom = &op.dom;
    let h = dom.spacing();
    let cell: f64 = h.iter().product();
    let shape = dom.shape();
    // Shift the exponent by its maximum near the support of u.
    let shift = (0..u.len()).filter(|&i| u[i] != 0.0).map(|i| w[i]).fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return None;
    }
    let e = |i: usize| (w[i] - shift).exp();
    let pu = op.apply(u).ok()?;
    let den: f64 = (0..u.len()).map(|i| (e(i) * pu[i]).powi(2)).sum::<f64>() * cell;
    let mass: f64 = (0..u.len()).map(|i| (e(i) * u[i]).powi(2)).sum::<f64>() * cell;
    let mut grad = 0.0;
    for axis in 0..dom.dim() {
        let stride: usize = shape[axis + 1..].iter().product();
        for i in 0..u.len() {
            if dom.multi_index(i)[axis] + 1 == shape[axis] {
                continue;
            }
            let j = i + stride;
            let g = match form {
                RatioForm::Weighted => (0.5 * (w[i] + w[j]) - shift).exp() * (u[j] - u[i]) / h[axis],
                RatioForm::Conjugated => (e(j) * u[j] - e(i) * u[i]) / h[axis],
            };
            grad += g * g;
        }
    }
    grad *= cell;
    let num = tau.powi(3) * mass + tau * grad;
    if !(den > 1e-300 * num.max(1e-300)) {
        return None;
    }
    Some(num / den)
}

/// Largest ratio over the family at each `tau`.
pub fn carleman_ratio(
    op: &DiscreteOperator,
    phi: &ExprAst,
    family: &[Vec<f64>],
    family_name: &str,
    taus: &[f64],
    form: RatioForm,
) -> Result<RatioCurve> {
    let h = op.dom.spacing().into_iter().fold(0.0, f64::max);
    let max = tau_max_admissible(h);
    if family.is_empty() || taus.is_empty() {
        return Err(LabError::Empty);
    }
    for &tau in taus {
        if !(tau > 0.0 && tau <= max * (1.0 + 1e-12)) {
            return Err(LabError::Inadmissible { tau, max });
        }
    }
    ratio_curve_unchecked(op, phi, family, family_name, taus, form, h, max)
}

/// As [`carleman_ratio`] but without the `tau h <= 0.5` restriction; used to
/// show what happens past it.
pub fn carleman_ratio_unrestricted(
    op: &DiscreteOperator,
    phi: &ExprAst,
    family: &[Vec<f64>],
    family_name: &str,
    taus: &[f64],
    form: RatioForm,
) -> Result<RatioCurve> {
    let h = op.dom.spacing().into_iter().fold(0.0, f64::max);
    ratio_curve_unchecked(op, phi, family, family_name, taus, form, h, tau_max_admissible(h))
}

#[allow(clippy::too_many_arguments)]
fn ratio_curve_unchecked(
    op: &DiscreteOperator,
    phi: &ExprAst,
    family: &[Vec<f64>],
    family_name: &str,
    taus: &[f64],
    form: RatioForm,
    h: f64,
    tau_max: f64,
) -> Result<RatioCurve> {
    for (k, u) in family.iter().enumerate() {
        op.check(u)?;
        let shape = op.dom.shape();
        let near = (0..u.len()).any(|i| u[i] != 0.0 && op.dom.multi_index(i).iter().zip(shape).any(|(&m, &n)| m < 3 || m + 4 > n));
        if near {
            return Err(LabError::NearBoundary(k));
        }
    }
    let unit = op.weights(phi, 1.0)?;
    let rows: Vec<(f64, usize)> = taus
        .par_iter()
        .map(|&tau| {
            let w: Vec<f64> = unit.iter().map(|p| tau * p).collect();
            let mut best = 0.0f64;
            let mut skipped = 0;
            for u in family {
                match ratio_one(op, &w, tau, u, form) {
                    Some(r) => best = best.max(r),
                    None => skipped += 1,
                }
            }
            (best, skipped)
        })
        .collect();
    Ok(RatioCurve {
        tau_grid: taus.to_vec(),
        ratios: rows.iter().map(|r| r.0).collect(),
        test_family: family_name.to_string(),
        h,
        tau_max_admissible: tau_max,
        skipped: rows.iter().map(|r| r.1).max().unwrap_or(0),
    })
}

/// `count` points spaced geometrically over `[lo, hi]`.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count).map(|k| lo * (hi / lo).powf(k as f64 / (count - 1) as f64)).collect()
}
