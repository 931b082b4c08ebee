//! Explicit finite-difference wave solver in 1D/2D with Dirichlet boundary,
//! variable coefficients and a potential, plus free-space oracles.
//!
//! The spatial operator comes from a discrete energy, so its matrix is exactly
//! symmetric. Time stepping is velocity Verlet, the one-step form of leapfrog.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fieldlang::{ExprAst, FieldError};
use crate::geodist::GridDomain;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("wave solver supports 1D and 2D grids, got {0}D")]
    Dimension(usize),
    #[error("coefficient matrix must be {0}x{0} and symmetric")]
    CoeffShape(usize),
    #[error("coefficients are not positive definite at grid index {0}")]
    NotElliptic(usize),
    #[error("CFL number {cfl:.4} exceeds {limit}")]
    Cfl { cfl: f64, limit: f64 },
    #[error("state became non-finite at t = {0}")]
    NonFinite(f64),
    #[error("array has {got} entries, grid has {expected}")]
    Size { expected: usize, got: usize },
    #[error("time must be positive, got {0}")]
    BadTime(f64),
    #[error("sphere quadrature order must be at least 17, got {0}")]
    BadOrder(usize),
}

pub type Result<T> = std::result::Result<T, WaveError>;

pub const CFL_LIMIT: f64 = 0.95;

/// Symmetric sparse matrix in compressed-row form over the unknowns.
#[derive(Debug, Clone)]
struct Csr {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            for (c, v) in r {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self { row_ptr, cols, vals }
    }

    fn mul(&self, x: &[f64], out: &mut [f64]) {
        let row = |i: usize| -> f64 { (self.row_ptr[i]..self.row_ptr[i + 1]).map(|k| self.vals[k] * x[self.cols[k]]).sum() };
        if out.len() > 4096 {
            out.par_iter_mut().enumerate().for_each(|(i, o)| *o = row(i));
        } else {
            out.iter_mut().enumerate().for_each(|(i, o)| *o = row(i));
        }
    }
}

fn add_entry(rows: &mut [Vec<(usize, f64)>], i: usize, j: usize, v: f64) {
    if let Some(e) = rows[i].iter_mut().find(|e| e.0 == j) {
        e.1 += v;
    } else {
        rows[i].push((j, v));
    }
}

/// `u` and `v = du/dt` over every grid point; boundary and unmasked points stay zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub time: f64,
}

/// Discretized `d_t^2 u = div(A grad u) - q u + f` on a [`GridDomain`].
#[derive(Debug, Clone)]
pub struct WaveSolver {
    dom: GridDomain,
    /// Grid index of each unknown.
    unknowns: Vec<usize>,
    /// Unknown number of each grid index, `usize::MAX` for fixed points.
    slot: Vec<usize>,
    stiffness: Csr,
    q: Vec<f64>,
    c_max: f64,
}

impl WaveSolver {
    /// `coeffs` defaults to the identity (unit speed); `q` to zero.
    pub fn new(dom: GridDomain, coeffs: Option<&[Vec<ExprAst>]>, q: Option<&ExprAst>) -> Result<Self> {
        let d = dom.dim();
        if d > 2 {
            return Err(WaveError::Dimension(d));
        }
        let shape = dom.shape().to_vec();
        let h = dom.spacing();
        let mut samples = Vec::with_capacity(dom.len());
        let mut c2_max = 0.0f64;
        for idx in 0..dom.len() {
            let x = dom.point(idx);
            let a = match coeffs {
                None => DMatrix::identity(d, d),
                Some(c) => {
                    if c.len() != d || c.iter().any(|r| r.len() != d) {
                        return Err(WaveError::CoeffShape(d));
                    }
                    let mut m = DMatrix::zeros(d, d);
                    for i in 0..d {
                        for j in 0..d {
                            m[(i, j)] = c[i][j].eval(&x)?;
                        }
                    }
                    if (0..d).any(|i| (0..d).any(|j| (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * (1.0 + m[(i, j)].abs()))) {
                        return Err(WaveError::CoeffShape(d));
                    }
                    m
                }
            };
            if dom.mask()[idx] {
                let eig = a.clone().symmetric_eigenvalues();
                if !(eig.min() > 0.0) {
                    return Err(WaveError::NotElliptic(idx));
                }
                c2_max = c2_max.max(eig.max());
            }
            samples.push(a);
        }
        let q: Vec<f64> = match q {
            None => vec![0.0; dom.len()],
            Some(f) => (0..dom.len()).map(|i| f.eval(&dom.point(i))).collect::<std::result::Result<_, _>>()?,
        };

        let on_boundary = |m: &[usize]| m.iter().zip(&shape).any(|(&i, &k)| i == 0 || i == k - 1);
        let mut slot = vec![usize::MAX; dom.len()];
        let mut unknowns = Vec::new();
        for idx in 0..dom.len() {
            if dom.mask()[idx] && !on_boundary(&dom.multi_index(idx)) {
                slot[idx] = unknowns.len();
                unknowns.push(idx);
            }
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); unknowns.len()];
        // Energy 1/2 sum_faces a_kk (D_k u)^2 per unit cell: face-averaged diagonal terms.
        for axis in 0..d {
            let stride: usize = shape[axis + 1..].iter().product();
            for i in 0..dom.len() {
                if dom.multi_index(i)[axis] + 1 == shape[axis] {
                    continue;
                }
                let j = i + stride;
                let w = 0.5 * (samples[i][(axis, axis)] + samples[j][(axis, axis)]) / (h[axis] * h[axis]);
                let (si, sj) = (slot[i], slot[j]);
                if si != usize::MAX {
                    add_entry(&mut rows, si, si, w);
                }
                if sj != usize::MAX {
                    add_entry(&mut rows, sj, sj, w);
                }
                if si != usize::MAX && sj != usize::MAX {
                    add_entry(&mut rows, si, sj, -w);
                    add_entry(&mut rows, sj, si, -w);
                }
            }
        }
        // Cross term a_12 G_x G_y per cell, with cell-averaged differences.
        if d == 2 && samples.iter().any(|a| a[(0, 1)] != 0.0) {
            let nx = shape[1];
            for i in 0..shape[0] - 1 {
                for j in 0..shape[1] - 1 {
                    let c = [i * nx + j, i * nx + j + 1, (i + 1) * nx + j, (i + 1) * nx + j + 1];
                    let a12 = c.iter().map(|&k| samples[k][(0, 1)]).sum::<f64>() / 4.0;
                    if a12 == 0.0 {
                        continue;
                    }
                    // Axis 0 runs over i, axis 1 over j.
                    let g0 = [-1.0, -1.0, 1.0, 1.0].map(|s| s / (2.0 * h[0]));
                    let g1 = [-1.0, 1.0, -1.0, 1.0].map(|s| s / (2.0 * h[1]));
                    for a in 0..4 {
                        let sa = slot[c[a]];
                        if sa == usize::MAX {
                            continue;
                        }
                        for b in 0..4 {
                            let sb = slot[c[b]];
                            if sb != usize::MAX {
                                add_entry(&mut rows, sa, sb, a12 * (g0[a] * g1[b] + g1[a] * g0[b]));
                            }
                        }
                    }
                }
            }
        }
        Ok(Self { dom, unknowns, slot, stiffness: Csr::from_rows(rows), q, c_max: c2_max.sqrt() })
    }

    pub fn domain(&self) -> &GridDomain {
        &self.dom
    }

    pub fn c_max(&self) -> f64 {
        self.c_max
    }

    /// `c_max dt sqrt(sum_k 1/h_k^2)`.
    pub fn cfl(&self, dt: f64) -> f64 {
        self.c_max * dt * self.dom.spacing().iter().map(|h| 1.0 / (h * h)).sum::<f64>().sqrt()
    }

    /// Largest step of the form `t / k` with CFL number at most `target`.
    pub fn stable_dt(&self, t: f64, target: f64) -> (f64, usize) {
        let dt_max = target / self.cfl(1.0);
        let k = (t / dt_max).ceil().max(1.0) as usize;
        (t / k as f64, k)
    }

    /// Grid indices of the unknowns (interior masked points).
    pub fn unknowns(&self) -> &[usize] {
        &self.unknowns
    }

    fn check(&self, a: &[f64]) -> Result<()> {
        if a.len() != self.dom.len() {
            return Err(WaveError::Size { expected: self.dom.len(), got: a.len() });
        }
        Ok(())
    }

    /// State with the given data; values at fixed points are dropped.
    pub fn state(&self, u0: &[f64], u1: &[f64]) -> Result<WaveState> {
        self.check(u0)?;
        self.check(u1)?;
        let keep = |a: &[f64]| -> Vec<f64> { (0..a.len()).map(|i| if self.slot[i] == usize::MAX { 0.0 } else { a[i] }).collect() };
        Ok(WaveState { u: keep(u0), v: keep(u1), time: 0.0 })
    }

    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.dom.len()).map(|i| f(&self.dom.point(i))).collect()
    }

    fn gather(&self, a: &[f64]) -> Vec<f64> {
        self.unknowns.iter().map(|&i| a[i]).collect()
    }

    /// `(A + q) u` on the unknowns, in unknown numbering.
    fn operator(&self, u: &[f64]) -> Vec<f64> {
        let x = self.gather(u);
        let mut y = vec![0.0; x.len()];
        self.stiffness.mul(&x, &mut y);
        y.iter_mut().zip(&self.unknowns).zip(&x).for_each(|((y, &i), x)| *y += self.q[i] * x);
        y
    }

    /// Applies the discrete `-div(A grad) + q` to a grid function.
    pub fn apply_operator(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check(u)?;
        let y = self.operator(u);
        let mut out = vec![0.0; self.dom.len()];
        for (k, &i) in self.unknowns.iter().enumerate() {
            out[i] = y[k];
        }
        Ok(out)
    }

    fn accel(&self, u: &[f64], f: Option<&[f64]>) -> Vec<f64> {
        let mut a: Vec<f64> = self.operator(u).into_iter().map(|v| -v).collect();
        if let Some(f) = f {
            a.iter_mut().zip(&self.unknowns).for_each(|(a, &i)| *a += f[i]);
        }
        a
    }

    /// One step. `forcing` holds the source at the current and the next time.
    pub fn step_leapfrog(&self, s: &mut WaveState, dt: f64, forcing: Option<(&[f64], &[f64])>) -> Result<()> {
        let cfl = self.cfl(dt.abs());
        if cfl > CFL_LIMIT {
            return Err(WaveError::Cfl { cfl, limit: CFL_LIMIT });
        }
        if let Some((a, b)) = forcing {
            self.check(a)?;
            self.check(b)?;
        }
        let a0 = self.accel(&s.u, forcing.map(|f| f.0));
        for (k, &i) in self.unknowns.iter().enumerate() {
            s.v[i] += 0.5 * dt * a0[k];
            s.u[i] += dt * s.v[i];
        }
        let a1 = self.accel(&s.u, forcing.map(|f| f.1));
        for (k, &i) in self.unknowns.iter().enumerate() {
            s.v[i] += 0.5 * dt * a1[k];
        }
        s.time += dt;
        if self.unknowns.iter().any(|&i| !s.u[i].is_finite() || !s.v[i].is_finite()) {
            return Err(WaveError::NonFinite(s.time));
        }
        Ok(())
    }

    /// Runs `steps` unforced steps.
    pub fn run(&self, s: &mut WaveState, dt: f64, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step_leapfrog(s, dt, None)?;
        }
        Ok(())
    }

    fn cell(&self) -> f64 {
        self.dom.spacing().iter().product()
    }

    /// `1/2 int (v^2 + A grad u . grad u + q u^2)`.
    pub fn energy(&self, s: &WaveState) -> f64 {
        let x = self.gather(&s.u);
        let au = self.operator(&s.u);
        let kin: f64 = self.unknowns.iter().map(|&i| s.v[i] * s.v[i]).sum();
        0.5 * self.cell() * (kin + x.iter().zip(&au).map(|(a, b)| a * b).sum::<f64>())
    }

    /// Energy minus `dt^2/8 |(A + q) u|^2`; exactly invariant under unforced
    /// Verlet steps of size `dt`.
    pub fn modified_energy(&self, s: &WaveState, dt: f64) -> f64 {
        let au = self.operator(&s.u);
        self.energy(s) - self.cell() * dt * dt / 8.0 * au.iter().map(|v| v * v).sum::<f64>()
    }

    /// Discrete `L^2` inner product over the grid.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.cell() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }
}

/// `1/2 (u0(x - t) + u0(x + t)) + 1/2 int_{x-t}^{x+t} u1`.
pub fn dalembert_oracle(u0: impl Fn(f64) -> f64, u1: impl Fn(f64) -> f64, t: f64, x: f64) -> f64 {
    let gl = GaussLegendre::new(NonZeroUsize::new(16).expect("nonzero"));
    let pieces = 64;
    let (a, b) = (x - t, x + t);
    let w = (b - a) / pieces as f64;
    let integral: f64 = (0..pieces).map(|k| gl.integrate(a + k as f64 * w, a + (k + 1) as f64 * w, &u1)).sum();
    0.5 * (u0(x - t) + u0(x + t)) + 0.5 * integral
}

/// Product rule on the unit sphere, exact for spherical polynomials of degree
/// `order`: Gauss-Legendre in `cos(theta)` times the trapezoid rule in `phi`.
pub fn sphere_rule(order: usize) -> Vec<([f64; 3], f64)> {
    let n_theta = order / 2 + 1;
    let n_phi = order + 1;
    let gl = GaussLegendre::new(NonZeroUsize::new(n_theta).expect("nonzero"));
    let mut out = Vec::with_capacity(n_theta * n_phi);
    for &(z, w) in gl.as_node_weight_pairs() {
        let s = (1.0 - z * z).max(0.0).sqrt();
        for k in 0..n_phi {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / n_phi as f64;
            out.push(([s * phi.cos(), s * phi.sin(), z], w * 2.0 * std::f64::consts::PI / n_phi as f64));
        }
    }
    out
}

/// Free-space solution in 3D with `u(0) = 0`, `du/dt(0) = u1`:
/// `t` times the mean of `u1` over the sphere of radius `t` about `x`.
pub fn kirchhoff_oracle(u1: impl Fn(&[f64; 3]) -> f64, t: f64, x: [f64; 3], order: usize) -> Result<f64> {
    if !(t > 0.0) {
        return Err(WaveError::BadTime(t));
    }
    if order < 17 {
        return Err(WaveError::BadOrder(order));
    }
    let sum: f64 = sphere_rule(order)
        .iter()
        .map(|(s, w)| w * u1(&[x[0] - t * s[0], x[1] - t * s[1], x[2] - t * s[2]]))
        .sum();
    Ok(t * sum / (4.0 * std::f64::consts::PI))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteSpeedReport {
    pub r0: f64,
    /// Largest `|u|` seen inside the shrinking cone over all steps.
    pub max_in_cone: f64,
    pub data_norm: f64,
    pub ratio: f64,
    /// Whether the data vanish on `|x - center| <= r0`.
    pub data_vanish: bool,
    pub passed: bool,
}

/// Evolves `s` and records `max |u|` over `{|x - center| <= r0 - c_max t - 2h}`.
pub fn finite_speed_check(solver: &WaveSolver, mut s: WaveState, dt: f64, steps: usize, center: &[f64], r0: f64) -> Result<FiniteSpeedReport> {
    let dom = solver.domain();
    let h = dom.spacing().into_iter().fold(0.0, f64::max);
    let radius: Vec<f64> = (0..dom.len())
        .map(|i| dom.point(i).iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .collect();
    let data_vanish = radius.iter().zip(s.u.iter().zip(&s.v)).all(|(&r, (a, b))| r > r0 || (*a == 0.0 && *b == 0.0));
    let data_norm = s.u.iter().chain(&s.v).map(|v| v.abs()).fold(0.0, f64::max);
    let mut max_in_cone = 0.0f64;
    for _ in 0..steps {
        solver.step_leapfrog(&mut s, dt, None)?;
        let limit = r0 - solver.c_max() * s.time - 2.0 * h;
        if limit < 0.0 {
            break;
        }
        for (i, &r) in radius.iter().enumerate() {
            if r <= limit {
                max_in_cone = max_in_cone.max(s.u[i].abs());
            }
        }
    }
    let ratio = if data_norm > 0.0 { max_in_cone / data_norm } else { 0.0 };
    Ok(FiniteSpeedReport { r0, max_in_cone, data_norm, ratio, data_vanish, passed: ratio <= 1e-8 })
}

/// `exp(-s^2)` cut to exactly zero where it falls below `1e-20`.
pub fn truncated_gaussian(s: f64) -> f64 {
    let v = (-s * s).exp();
    if v < 1e-20 {
        0.0
    } else {
        v
    }
}

/// `exp(-1 / (1 - s^2))` on `|s| < 1`, zero elsewhere.
pub fn smooth_bump(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldlang::parse;

    fn line(lo: f64, hi: f64, n: usize) -> GridDomain {
        GridDomain::new(vec![(lo, hi)], vec![n]).unwrap()
    }

    fn gaussian_1d_error(n: usize) -> (f64, f64) {
        let dom = line(-4.0, 4.0, n);
        let h = dom.spacing()[0];
        let solver = WaveSolver::new(dom, None, None).unwrap();
        let u0 = |x: f64| (-8.0 * x * x).exp();
        let mut s = solver.state(&solver.sample(|x| u0(x[0])), &vec![0.0; n]).unwrap();
        let (dt, k) = solver.stable_dt(1.0, 0.5);
        solver.run(&mut s, dt, k).unwrap();
        let err = (0..n)
            .map(|i| {
                let x = solver.domain().point(i)[0];
                (s.u[i] - dalembert_oracle(u0, |_| 0.0, 1.0, x)).abs()
            })
            .fold(0.0, f64::max);
        (h, err)
    }

    #[test]
    fn second_order_convergence() {
        let pts: Vec<(f64, f64)> = [201, 401, 801, 1601].iter().map(|&n| gaussian_1d_error(n)).collect();
        let (x, y): (Vec<f64>, Vec<f64>) = pts.iter().map(|(h, e)| (h.ln(), e.ln())).unzip();
        let order = crate::fit::linear_fit(&x, &y).unwrap().slope;
        assert!((order - 2.0).abs() <= 0.1, "{order} {pts:?}");
    }

    #[test]
    fn dalembert_with_velocity() {
        // u1 = cos gives u = sin(t) cos(x) in free space.
        let v = dalembert_oracle(|_| 0.0, f64::cos, 0.7, 0.3);
        assert!((v - 0.7f64.sin() * 0.3f64.cos()).abs() < 1e-14);
    }

    #[test]
    fn zero_data_stays_zero() {
        let dom = GridDomain::new(vec![(0.0, 1.0); 2], vec![21, 21]).unwrap();
        let solver = WaveSolver::new(dom, None, Some(&parse("1 + x1", 2).unwrap())).unwrap();
        let mut s = solver.state(&vec![0.0; 441], &vec![0.0; 441]).unwrap();
        solver.run(&mut s, 0.02, 50).unwrap();
        assert!(s.u.iter().chain(&s.v).all(|&v| v == 0.0));
    }

    #[test]
    fn standing_mode_period() {
        let n = 401;
        let solver = WaveSolver::new(line(0.0, 1.0, n), None, None).unwrap();
        let u0 = solver.sample(|x| (std::f64::consts::PI * x[0]).sin());
        let mut s = solver.state(&u0, &vec![0.0; n]).unwrap();
        let (dt, k) = solver.stable_dt(2.0, 0.9);
        solver.run(&mut s, dt, k).unwrap();
        let err = s.u.iter().zip(&u0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
    }

    fn variable_2d() -> (WaveSolver, WaveState, f64) {
        let dom = GridDomain::new(vec![(0.0, 1.0); 2], vec![61, 61]).unwrap();
        let g = vec![
            vec![parse("1 + 0.3*x1", 2).unwrap(), parse("0.1*x1*x2", 2).unwrap()],
            vec![parse("0.1*x1*x2", 2).unwrap(), parse("1 + 0.2*sin(3*x2)", 2).unwrap()],
        ];
        let solver = WaveSolver::new(dom, Some(&g), Some(&parse("2 + x1", 2).unwrap())).unwrap();
        let u0 = solver.sample(|x| (-40.0 * ((x[0] - 0.4).powi(2) + (x[1] - 0.6).powi(2))).exp());
        let u1 = solver.sample(|x| (-30.0 * ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2))).exp() * x[0]);
        let s = solver.state(&u0, &u1).unwrap();
        let dt = 0.9 / solver.cfl(1.0);
        (solver, s, dt)
    }

    #[test]
    fn energy_conservation() {
        let (solver, mut s, dt) = variable_2d();
        let e0 = solver.modified_energy(&s, dt);
        let plain0 = solver.energy(&s);
        let mut plain_dev = 0.0f64;
        for _ in 0..1000 {
            solver.step_leapfrog(&mut s, dt, None).unwrap();
            plain_dev = plain_dev.max((solver.energy(&s) - plain0).abs());
        }
        assert!((solver.modified_energy(&s, dt) - e0).abs() <= 1e-6 * e0);
        // The plain energy oscillates by O(dt^2) but does not drift.
        assert!(plain_dev <= 0.05 * plain0, "{}", plain_dev / plain0);
    }

    #[test]
    fn operator_is_symmetric() {
        let (solver, _, _) = variable_2d();
        let a = solver.sample(|x| (5.0 * x[0]).sin() * x[1]);
        let b = solver.sample(|x| (x[0] * x[1] * 7.0).cos());
        let (aa, ab) = (solver.apply_operator(&a).unwrap(), solver.apply_operator(&b).unwrap());
        let l = solver.inner(&aa, &b);
        let r = solver.inner(&a, &ab);
        assert!((l - r).abs() < 1e-12 * l.abs().max(1.0));
    }

    #[test]
    fn time_reversal() {
        let (solver, s0, dt) = variable_2d();
        let mut s = s0.clone();
        solver.run(&mut s, dt, 300).unwrap();
        solver.run(&mut s, -dt, 300).unwrap();
        let scale = s0.u.iter().chain(&s0.v).map(|v| v.abs()).fold(0.0, f64::max);
        let err = s.u.iter().zip(&s0.u).chain(s.v.iter().zip(&s0.v)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-8 * scale, "{err}");
    }

    #[test]
    fn cfl_violation_rejected() {
        let solver = WaveSolver::new(line(0.0, 1.0, 11), None, None).unwrap();
        let mut s = solver.state(&[0.0; 11], &[0.0; 11]).unwrap();
        assert!(matches!(solver.step_leapfrog(&mut s, 0.2, None), Err(WaveError::Cfl { .. })));
    }

    #[test]
    fn discrete_domain_of_dependence() {
        let n = 201;
        let solver = WaveSolver::new(line(0.0, 1.0, n), None, None).unwrap();
        let mut u0 = vec![0.0; n];
        u0[100] = 1.0;
        let mut s = solver.state(&u0, &vec![0.0; n]).unwrap();
        for k in 1..=40 {
            solver.step_leapfrog(&mut s, 0.004, None).unwrap();
            for i in 0..n {
                if i.abs_diff(100) > k {
                    assert_eq!(s.u[i], 0.0);
                }
            }
            assert!(s.u[100 + k] != 0.0);
        }
    }

    #[test]
    fn finite_speed_1d() {
        let n = 801;
        let solver = WaveSolver::new(line(-2.0, 2.0, n), None, None).unwrap();
        let bump = |x: f64| truncated_gaussian((x.abs() - 1.3) / 0.08);
        let s = solver.state(&solver.sample(|x| bump(x[0])), &vec![0.0; n]).unwrap();
        let (dt, _) = solver.stable_dt(1.0, 0.5);
        let r = finite_speed_check(&solver, s, dt, 400, &[0.0], 0.7).unwrap();
        assert!(r.data_vanish && r.max_in_cone < 1e-10, "{r:?}");
    }

    #[test]
    fn finite_speed_2d_radial() {
        let dom = GridDomain::new(vec![(-2.0, 2.0); 2], vec![321, 321]).unwrap();
        let solver = WaveSolver::new(dom, None, None).unwrap();
        let u0 = solver.sample(|x| truncated_gaussian(((x[0] * x[0] + x[1] * x[1]).sqrt() - 1.25) / 0.07));
        let s = solver.state(&u0, &vec![0.0; u0.len()]).unwrap();
        let (dt, _) = solver.stable_dt(1.0, 0.6);
        let r = finite_speed_check(&solver, s, dt, 200, &[0.0, 0.0], 0.7).unwrap();
        assert!(r.data_vanish && r.passed, "{r:?}");
    }

    #[test]
    fn zero_data_cone() {
        let solver = WaveSolver::new(line(-1.0, 1.0, 101), None, None).unwrap();
        let s = solver.state(&vec![0.0; 101], &vec![0.0; 101]).unwrap();
        let r = finite_speed_check(&solver, s, 0.01, 30, &[0.0], 0.5).unwrap();
        assert_eq!(r.max_in_cone, 0.0);
    }

    #[test]
    fn sphere_rule_exactness() {
        let rule = sphere_rule(23);
        let total: f64 = rule.iter().map(|p| p.1).sum();
        assert!((total - 4.0 * std::f64::consts::PI).abs() < 1e-13);
        // Mean of z^22 over the sphere is 1/23; x^10 y^12 also integrates exactly.
        let m: f64 = rule.iter().map(|(s, w)| w * s[2].powi(22)).sum::<f64>() / (4.0 * std::f64::consts::PI);
        assert!((m - 1.0 / 23.0).abs() < 1e-14);
        let odd: f64 = rule.iter().map(|(s, w)| w * s[0].powi(7) * s[1] * s[2]).sum();
        assert!(odd.abs() < 1e-14);
    }

    #[test]
    fn kirchhoff_huygens_zeros() {
        let r = 0.5;
        let u1 = |y: &[f64; 3]| smooth_bump((y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt() / r);
        let t = 2.0;
        for x in [[0.0, 0.0, 0.0], [1.0, 0.2, 0.3], [0.0, 1.4, 0.0], [2.6, 0.0, 0.0], [0.0, 2.0, 2.0]] {
            let v = kirchhoff_oracle(u1, t, x, 23).unwrap();
            assert!(v.abs() <= 1e-10, "{x:?}: {v}");
        }
        assert!(kirchhoff_oracle(u1, t, [2.0, 0.0, 0.0], 41).unwrap() > 0.0);
    }

    #[test]
    fn kirchhoff_radial_oracle() {
        // Radial u1 = exp(-|y|^2) gives u = (exp(-(r-t)^2) - exp(-(r+t)^2)) / (4r).
        let u1 = |y: &[f64; 3]| (-(y[0] * y[0] + y[1] * y[1] + y[2] * y[2])).exp();
        for (t, x) in [(0.5f64, [0.3f64, 0.2, -0.1]), (1.0, [1.0, 0.5, 0.0]), (0.8, [0.0, 0.0, 2.0])] {
            let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
            let exact = ((-(r - t) * (r - t)).exp() - (-(r + t) * (r + t)).exp()) / (4.0 * r);
            let v = kirchhoff_oracle(u1, t, x, 41).unwrap();
            assert!((v - exact).abs() < 1e-10, "{v} {exact}");
        }
    }

    #[test]
    fn kirchhoff_constant_integrand() {
        let v = kirchhoff_oracle(|_| 1.0, 1.7, [0.1, 0.2, 0.3], 17).unwrap();
        assert!((v - 1.7).abs() < 1e-14);
        assert!(kirchhoff_oracle(|_| 1.0, 0.0, [0.0; 3], 23).is_err());
        assert!(kirchhoff_oracle(|_| 1.0, 1.0, [0.0; 3], 9).is_err());
    }
}
