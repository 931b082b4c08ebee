//! Approximate controllability of the discrete wave equation by duality:
//! the final-value map, its transpose through the backward free wave, and
//! Tikhonov-regularized controls computed by conjugate gradients.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodist::{distance_field, GeoError};
use crate::wavesolve::{WaveError, WaveSolver, WaveState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HumError {
    #[error(transparent)]
    Wave(#[from] WaveError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
    #[error("precision must be positive, got {0}")]
    BadPrecision(f64),
    #[error("control region is empty")]
    EmptyRegion,
    #[error("expected {expected} entries, got {got}")]
    Size { expected: usize, got: usize },
    #[error("conjugate gradients stalled after {iterations} iterations, relative residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("no regularization weight reaches the requested precision (best error {best:e}, wanted {wanted:e})")]
    Unreachable { best: f64, wanted: f64 },
}

pub type Result<T> = std::result::Result<T, HumError>;

/// Space-time grid function sampled at the time nodes `k dt`, `k = 0..=steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTime {
    pub dt: f64,
    pub slices: Vec<Vec<f64>>,
}

impl SpaceTime {
    pub fn zeros(dt: f64, steps: usize, len: usize) -> Self {
        Self { dt, slices: vec![vec![0.0; len]; steps + 1] }
    }

    fn trapezoid(&self, k: usize) -> f64 {
        if k == 0 || k + 1 == self.slices.len() {
            0.5 * self.dt
        } else {
            self.dt
        }
    }

    fn axpy(&mut self, a: f64, other: &SpaceTime) {
        for (s, o) in self.slices.iter_mut().zip(&other.slices) {
            s.iter_mut().zip(o).for_each(|(x, y)| *x += a * y);
        }
    }

    fn scaled(&self, a: f64) -> SpaceTime {
        SpaceTime { dt: self.dt, slices: self.slices.iter().map(|s| s.iter().map(|x| a * x).collect()).collect() }
    }
}

/// Smooth cutoff with `0 <= chi <= 1`, positive exactly on `omega`, rising
/// to 1 over `width` from the complement.
pub fn smooth_cutoff(solver: &WaveSolver, omega: &[bool], width: f64) -> Result<Vec<f64>> {
    let dom = solver.domain();
    if omega.len() != dom.len() {
        return Err(HumError::Size { expected: dom.len(), got: omega.len() });
    }
    if !omega.iter().any(|&b| b) {
        return Err(HumError::EmptyRegion);
    }
    let outside: Vec<bool> = omega.iter().map(|b| !b).collect();
    if !outside.iter().any(|&b| b) {
        return Ok(vec![1.0; dom.len()]);
    }
    let d = distance_field(dom, &outside)?;
    Ok(d.values.iter().zip(omega).map(|(&r, &inside)| if inside { smooth_step(r / width) } else { 0.0 }).collect())
}

/// C-infinity step: 0 at `s <= 0`, 1 at `s >= 1`.
fn smooth_step(s: f64) -> f64 {
    let f = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    if s >= 1.0 {
        1.0
    } else {
        f(s) / (f(s) + f(1.0 - s))
    }
}

#[derive(Debug, Clone)]
pub struct ControlProblem {
    solver: WaveSolver,
    pub omega: Vec<bool>,
    pub chi: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub steps: usize,
    pub target: WaveState,
    pub eps: f64,
    /// Starting regularization weight for the bisection.
    pub tikhonov: f64,
}

/// Bisection and CG limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlConfig {
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub bisection_steps: usize,
    /// Accept an error in `[accept * eps |target|, eps |target|]`.
    pub accept: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self { cg_tol: 1e-11, cg_max_iter: 5000, bisection_steps: 60, accept: 0.97 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlResult {
    pub f: SpaceTime,
    pub achieved_error: f64,
    pub target_norm: f64,
    pub cost: f64,
    pub alpha: f64,
    /// CG iterations summed over the bisection.
    pub iterations: usize,
}

impl ControlProblem {
    /// Builds the problem with the time step chosen at CFL number `cfl`
    /// (at most the solver limit) and `chi` from [`smooth_cutoff`] with a
    /// ramp of four cells.
    pub fn new(solver: WaveSolver, omega: Vec<bool>, horizon: f64, target: WaveState, eps: f64, cfl: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(HumError::BadHorizon(horizon));
        }
        if !(eps > 0.0) {
            return Err(HumError::BadPrecision(eps));
        }
        let n = solver.domain().len();
        if target.u.len() != n || target.v.len() != n {
            return Err(HumError::Size { expected: n, got: target.u.len().min(target.v.len()) });
        }
        let h = solver.domain().spacing().into_iter().fold(0.0, f64::max);
        let chi = smooth_cutoff(&solver, &omega, 4.0 * h)?;
        let (dt, steps) = solver.stable_dt(horizon, cfl.min(crate::wavesolve::CFL_LIMIT));
        let target = solver.state(&target.u, &target.v)?;
        Ok(Self { solver, omega, chi, horizon, dt, steps, target, eps, tikhonov: 1e-2 })
    }

    pub fn solver(&self) -> &WaveSolver {
        &self.solver
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Self { eps, ..self.clone() }
    }

    pub fn zero_control(&self) -> SpaceTime {
        SpaceTime::zeros(self.dt, self.steps, self.solver.domain().len())
    }

    fn check_control(&self, f: &SpaceTime) -> Result<()> {
        let n = self.solver.domain().len();
        if f.slices.len() != self.steps + 1 {
            return Err(HumError::Size { expected: self.steps + 1, got: f.slices.len() });
        }
        if let Some(s) = f.slices.iter().find(|s| s.len() != n) {
            return Err(HumError::Size { expected: n, got: s.len() });
        }
        Ok(())
    }

    /// Final state `(u(T), du/dt(T))` of the wave forced by `chi f` from rest.
    pub fn apply_ft(&self, f: &SpaceTime) -> Result<WaveState> {
        self.check_control(f)?;
        let n = self.solver.domain().len();
        let mut s = WaveState { u: vec![0.0; n], v: vec![0.0; n], time: 0.0 };
        let force = |k: usize| -> Vec<f64> { f.slices[k].iter().zip(&self.chi).map(|(a, c)| a * c).collect() };
        let mut cur = force(0);
        for k in 0..self.steps {
            let next = force(k + 1);
            self.solver.step_leapfrog(&mut s, self.dt, Some((&cur, &next)))?;
            cur = next;
        }
        Ok(s)
    }

    /// `chi w` where `w` runs the free wave backward from `(w0, w1)` at time `T`.
    pub fn apply_ft_transpose(&self, w0: &[f64], w1: &[f64]) -> Result<SpaceTime> {
        let mut s = self.solver.state(w0, w1)?;
        let mut out = self.zero_control();
        let mask = |u: &[f64]| -> Vec<f64> { u.iter().zip(&self.chi).map(|(a, c)| a * c).collect() };
        out.slices[self.steps] = mask(&s.u);
        for k in (0..self.steps).rev() {
            self.solver.step_leapfrog(&mut s, -self.dt, None)?;
            out.slices[k] = mask(&s.u);
        }
        Ok(out)
    }

    /// `<v, w0> - <u, w1>`.
    pub fn pairing(&self, s: &WaveState, w0: &[f64], w1: &[f64]) -> f64 {
        self.solver.inner(&s.v, w0) - self.solver.inner(&s.u, w1)
    }

    /// Trapezoid-in-time, grid `L^2`-in-space inner product.
    pub fn st_inner(&self, f: &SpaceTime, g: &SpaceTime) -> f64 {
        (0..f.slices.len()).map(|k| f.trapezoid(k) * self.solver.inner(&f.slices[k], &g.slices[k])).sum()
    }

    pub fn st_norm(&self, f: &SpaceTime) -> f64 {
        self.st_inner(f, f).sqrt()
    }

    pub fn state_norm(&self, s: &WaveState) -> f64 {
        (self.solver.inner(&s.u, &s.u) + self.solver.inner(&s.v, &s.v)).sqrt()
    }

    fn unknowns(&self) -> &[usize] {
        self.solver.unknowns()
    }

    fn split(&self, mu: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.solver.domain().len();
        let m = self.unknowns().len();
        let (mut w0, mut w1) = (vec![0.0; n], vec![0.0; n]);
        for (k, &i) in self.unknowns().iter().enumerate() {
            w0[i] = mu[k];
            w1[i] = mu[m + k];
        }
        (w0, w1)
    }

    /// `(v, -u)` on the unknowns, so that the Euclidean product with `(w0, w1)`
    /// is the pairing up to the cell volume.
    fn rotate(&self, s: &WaveState) -> Vec<f64> {
        let mut out: Vec<f64> = self.unknowns().iter().map(|&i| s.v[i]).collect();
        out.extend(self.unknowns().iter().map(|&i| -s.u[i]));
        out
    }

    /// Control produced by the dual variable `mu`.
    fn control_of(&self, mu: &[f64]) -> Result<SpaceTime> {
        let (w0, w1) = self.split(mu);
        self.apply_ft_transpose(&w0, &w1)
    }

    /// `G mu`: rotated `F_T tF_T mu`. Symmetric positive semidefinite.
    pub fn gram_apply(&self, mu: &[f64]) -> Result<Vec<f64>> {
        let f = self.control_of(mu)?;
        Ok(self.rotate(&self.apply_ft(&f)?))
    }

    /// Dense Gram matrix on the `2m` final-data unknowns.
    pub fn gram_matrix(&self) -> Result<DMatrix<f64>> {
        let m2 = 2 * self.unknowns().len();
        let cols: Vec<Vec<f64>> = (0..m2)
            .into_par_iter()
            .map(|j| {
                let mut e = vec![0.0; m2];
                e[j] = 1.0;
                self.gram_apply(&e)
            })
            .collect::<Result<_>>()?;
        let mut g = DMatrix::from_fn(m2, m2, |i, j| cols[j][i]);
        // Symmetrize roundoff.
        g = (&g + g.transpose()) * 0.5;
        Ok(g)
    }

    /// Smallest and largest Gram eigenvalues.
    pub fn gram_extremes(&self) -> Result<(f64, f64)> {
        let eig = self.gram_matrix()?.symmetric_eigenvalues();
        Ok((eig.min(), eig.max()))
    }

    /// Solves `(G + alpha I) mu = b` by conjugate gradients.
    fn cg(&self, alpha: f64, b: &[f64], x0: Vec<f64>, cfg: &ControlConfig) -> Result<(Vec<f64>, usize)> {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let op = |x: &[f64]| -> Result<Vec<f64>> {
            let mut y = self.gram_apply(x)?;
            y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
            Ok(y)
        };
        let bnorm = dot(b, b).sqrt();
        if bnorm == 0.0 {
            return Ok((vec![0.0; b.len()], 0));
        }
        let mut x = x0;
        let ax = op(&x)?;
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        for it in 0..cfg.cg_max_iter {
            if rr.sqrt() <= cfg.cg_tol * bnorm {
                return Ok((x, it));
            }
            let ap = op(&p)?;
            let a = rr / dot(&p, &ap);
            x.iter_mut().zip(&p).for_each(|(x, p)| *x += a * p);
            r.iter_mut().zip(&ap).for_each(|(r, q)| *r -= a * q);
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            p.iter_mut().zip(&r).for_each(|(p, r)| *p = r + beta * *p);
            rr = rr_new;
        }
        if rr.sqrt() <= cfg.cg_tol * bnorm {
            return Ok((x, cfg.cg_max_iter));
        }
        Err(HumError::NoConvergence { iterations: cfg.cg_max_iter, residual: rr.sqrt() / bnorm })
    }

    /// Regularized control at a fixed weight: `(f, final error, CG iterations, mu)`.
    pub fn control_at(&self, alpha: f64, cfg: &ControlConfig) -> Result<(SpaceTime, f64, usize)> {
        let (f, err, it, _) = self.control_warm(alpha, None, cfg)?;
        Ok((f, err, it))
    }

    fn control_warm(&self, alpha: f64, warm: Option<&[f64]>, cfg: &ControlConfig) -> Result<(SpaceTime, f64, usize, Vec<f64>)> {
        let b = self.rotate(&self.target);
        let x0 = warm.map(|w| w.to_vec()).unwrap_or_else(|| vec![0.0; b.len()]);
        let (mu, it) = self.cg(alpha, &b, x0, cfg)?;
        let f = self.control_of(&mu)?;
        let reached = self.apply_ft(&f)?;
        let miss = WaveState {
            u: reached.u.iter().zip(&self.target.u).map(|(a, b)| a - b).collect(),
            v: reached.v.iter().zip(&self.target.v).map(|(a, b)| a - b).collect(),
            time: reached.time,
        };
        Ok((f, self.state_norm(&miss), it, mu))
    }

    /// Control with final error at most `eps |target|`, choosing the
    /// regularization weight by bisection in `log alpha`.
    pub fn compute_control(&self, cfg: &ControlConfig) -> Result<ControlResult> {
        let target_norm = self.state_norm(&self.target);
        let wanted = self.eps * target_norm;
        let mut total = 0;
        if target_norm == 0.0 {
            return Ok(ControlResult { f: self.zero_control(), achieved_error: 0.0, target_norm, cost: 0.0, alpha: self.tikhonov, iterations: 0 });
        }
        let mut warm: Option<Vec<f64>> = None;
        let mut eval = |alpha: f64, warm: &mut Option<Vec<f64>>| -> Result<(SpaceTime, f64)> {
            let (f, err, it, mu) = self.control_warm(alpha, warm.as_deref(), cfg)?;
            total += it;
            *warm = Some(mu);
            Ok((f, err))
        };
        // Bracket: err(lo) <= wanted < err(hi).
        let mut alpha = self.tikhonov;
        let (mut f, mut err) = eval(alpha, &mut warm)?;
        let (mut lo, mut hi);
        let mut best: Option<(f64, SpaceTime, f64)>;
        if err <= wanted {
            best = Some((alpha, f.clone(), err));
            lo = alpha;
            loop {
                alpha *= 10.0;
                if alpha > 1e12 {
                    hi = alpha;
                    break;
                }
                (f, err) = eval(alpha, &mut warm)?;
                if err > wanted {
                    hi = alpha;
                    break;
                }
                lo = alpha;
                best = Some((alpha, f.clone(), err));
            }
        } else {
            hi = alpha;
            loop {
                alpha /= 10.0;
                if alpha < 1e-16 {
                    return Err(HumError::Unreachable { best: err, wanted });
                }
                (f, err) = eval(alpha, &mut warm)?;
                if err <= wanted {
                    lo = alpha;
                    best = Some((alpha, f.clone(), err));
                    break;
                }
                hi = alpha;
            }
        }
        for _ in 0..cfg.bisection_steps {
            if best.as_ref().is_some_and(|b| b.2 >= cfg.accept * wanted) || hi / lo < 1.0 + 1e-9 {
                break;
            }
            let mid = (lo * hi).sqrt();
            let (f, err) = eval(mid, &mut warm)?;
            if err <= wanted {
                lo = mid;
                best = Some((mid, f, err));
            } else {
                hi = mid;
            }
        }
        let (alpha, f, err) = best.expect("bracket holds a feasible weight");
        let cost = self.st_norm(&f);
        Ok(ControlResult { f, achieved_error: err, target_norm, cost, alpha, iterations: total })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostPoint {
    pub eps: f64,
    pub cost: f64,
    pub achieved_error: f64,
    pub iterations: usize,
}

/// Costs over a list of precisions, computed concurrently.
pub fn cost_curve(problem: &ControlProblem, eps: &[f64], cfg: &ControlConfig) -> Result<Vec<CostPoint>> {
    eps.par_iter()
        .map(|&e| {
            let r = problem.with_eps(e).compute_control(cfg)?;
            Ok(CostPoint { eps: e, cost: r.cost, achieved_error: r.achieved_error, iterations: r.iterations })
        })
        .collect()
}

pub fn cost_csv(points: &[CostPoint]) -> String {
    let mut out = String::from("eps,cost,achieved_error,iterations\n");
    for p in points {
        out.push_str(&format!("{},{},{},{}\n", p.eps, p.cost, p.achieved_error, p.iterations));
    }
    out
}

/// Scales a control; used to build reachable targets.
pub fn scale_control(f: &SpaceTime, a: f64) -> SpaceTime {
    f.scaled(a)
}

/// `f + a g`.
pub fn add_controls(f: &SpaceTime, a: f64, g: &SpaceTime) -> SpaceTime {
    let mut out = f.clone();
    out.axpy(a, g);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodist::GridDomain;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(n: usize, omega: (f64, f64), horizon: f64) -> ControlProblem {
        let dom = GridDomain::new(vec![(0.0, 1.0)], vec![n]).unwrap();
        let solver = WaveSolver::new(dom, None, None).unwrap();
        let omega = solver.domain().select(|x| x[0] >= omega.0 && x[0] <= omega.1);
        let u = solver.sample(|x| (-((x[0] - 0.2) / 0.05).powi(2)).exp());
        let zero = vec![0.0; u.len()];
        ControlProblem::new(solver, omega, horizon, WaveState { u, v: zero, time: 0.0 }, 0.1, 0.9).unwrap()
    }

    fn random_control(p: &ControlProblem, rng: &mut ChaCha8Rng) -> SpaceTime {
        let mut f = p.zero_control();
        f.slices.iter_mut().for_each(|s| s.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0)));
        f
    }

    #[test]
    fn cutoff_is_positive_exactly_on_omega() {
        let p = problem(81, (0.4, 0.6), 1.0);
        for (c, &o) in p.chi.iter().zip(&p.omega) {
            assert!((0.0..=1.0).contains(c));
            assert_eq!(*c > 0.0, o);
        }
        assert!(p.chi.contains(&1.0));
    }

    #[test]
    fn zero_control_gives_rest() {
        let p = problem(41, (0.4, 0.6), 1.0);
        let s = p.apply_ft(&p.zero_control()).unwrap();
        assert!(s.u.iter().chain(&s.v).all(|&x| x == 0.0));
        let n = p.solver().domain().len();
        let g = p.apply_ft_transpose(&vec![0.0; n], &vec![0.0; n]).unwrap();
        assert!(g.slices.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn final_map_is_linear() {
        let p = problem(61, (0.4, 0.6), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (f1, f2) = (random_control(&p, &mut rng), random_control(&p, &mut rng));
        let a = p.apply_ft(&add_controls(&f1, 1.0, &f2)).unwrap();
        let (b1, b2) = (p.apply_ft(&f1).unwrap(), p.apply_ft(&f2).unwrap());
        let scale = p.state_norm(&a);
        for i in 0..a.u.len() {
            assert!((a.u[i] - b1.u[i] - b2.u[i]).abs() <= 1e-10 * scale);
            assert!((a.v[i] - b1.v[i] - b2.v[i]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn adjoint_identity() {
        let p = problem(61, (0.4, 0.6), 1.3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = p.solver().domain().len();
        for _ in 0..20 {
            let f = random_control(&p, &mut rng);
            let w0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w1: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lhs = p.pairing(&p.apply_ft(&f).unwrap(), &w0, &w1);
            let g = p.apply_ft_transpose(&w0, &w1).unwrap();
            let rhs = p.st_inner(&f, &g);
            let scale = p.st_norm(&f) * p.st_norm(&g);
            assert!((lhs - rhs).abs() <= 1e-8 * scale.max(lhs.abs()), "{lhs} {rhs}");
        }
    }

    #[test]
    fn full_region_transpose_is_injective() {
        let p = problem(17, (0.0, 1.0), 1.0);
        let (min, max) = p.gram_extremes().unwrap();
        assert!(min > 1e-8 * max, "{min} {max}");
    }

    #[test]
    fn reachable_target_costs_at_most_the_known_control() {
        let mut p = problem(41, (0.4, 0.6), 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fstar = random_control(&p, &mut rng);
        p.target = p.apply_ft(&fstar).unwrap();
        p.eps = 1e-3;
        let cfg = ControlConfig::default();
        let r = p.compute_control(&cfg).unwrap();
        assert!(r.achieved_error <= p.eps * r.target_norm * 1.05);
        assert!(r.cost <= 1.1 * p.st_norm(&fstar));
        // Smaller weights drive the error down.
        let e1 = p.control_at(1e-4, &cfg).unwrap().1;
        let e2 = p.control_at(1e-8, &cfg).unwrap().1;
        assert!(e2 < e1);
    }

    #[test]
    fn precision_contract_and_monotone_cost() {
        let p = problem(81, (0.4, 0.6), 2.5);
        let cfg = ControlConfig::default();
        let pts = cost_curve(&p, &[0.2, 0.1, 0.05], &cfg).unwrap();
        for w in pts.windows(2) {
            assert!(w[1].cost >= w[0].cost);
        }
        let norm = p.state_norm(&p.target);
        for q in &pts {
            assert!(q.achieved_error <= q.eps * norm * 1.05);
        }
        assert!(cost_csv(&pts).starts_with("eps,cost,achieved_error,iterations\n0.2,"));
    }

    #[test]
    fn short_horizon_has_null_gram_directions() {
        let p = problem(41, (0.45, 0.55), 0.04);
        let (min, max) = p.gram_extremes().unwrap();
        assert!(min.abs() < 1e-12 * max);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = problem(21, (0.4, 0.6), 1.0);
        let solver = p.solver().clone();
        let none = vec![false; solver.domain().len()];
        assert!(matches!(ControlProblem::new(solver.clone(), none, 1.0, p.target.clone(), 0.1, 0.9), Err(HumError::EmptyRegion)));
        assert!(matches!(ControlProblem::new(solver.clone(), p.omega.clone(), 0.0, p.target.clone(), 0.1, 0.9), Err(HumError::BadHorizon(_))));
        assert!(matches!(ControlProblem::new(solver, p.omega.clone(), 1.0, p.target.clone(), 0.0, 0.9), Err(HumError::BadPrecision(_))));
        assert!(p.apply_ft(&SpaceTime::zeros(p.dt, 3, 21)).is_err());
    }
}
