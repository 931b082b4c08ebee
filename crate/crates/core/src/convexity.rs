//! Characteristic and pseudoconvexity checks, subellipticity constants and
//! convexification of weights.
//!
//! All sign conditions live on the compact set `|xi|^2 + tau^2 = 1, tau >= 0`.
//! Condition sets such as `{p = 0, {p, psi} = 0}` are thin, so samples are
//! first projected onto them by Gauss-Newton steps (the constraints are
//! homogeneous, so renormalizing after each step keeps the zero set), then the
//! positivity quantity is minimized over samples whose residual is below the
//! feasibility tolerance and the worst ones are polished by Nelder-Mead.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fieldlang::{ExprAst, Node, VarConvention};
use crate::optim::nelder_mead;
use crate::sampling::sphere_points;
use crate::symbolcalc::{Hypersurface, Local, PrincipalSymbol, SymbolError, WeightJet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConvexityError {
    #[error(transparent)]
    Symbol(#[from] SymbolError),
    #[error("the xi_t = 0 mode needs a wave-type symbol")]
    NotWaveType,
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("schedule exhausted: {0}")]
    ScheduleExhausted(String),
}

pub type Result<T> = std::result::Result<T, ConvexityError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Vacuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Full,
    Xit0,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub xi: Vec<f64>,
    pub tau: f64,
}

/// Verdict with its margin, failing point and any located constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub verdict: Verdict,
    /// Minimum of the tested quantity on the unit half-sphere; `None` when vacuous.
    pub margin: Option<f64>,
    pub witness: Option<Witness>,
    pub constants: BTreeMap<String, f64>,
}

impl CheckReport {
    fn vacuous() -> Self {
        CheckReport { verdict: Verdict::Vacuous, margin: None, witness: None, constants: BTreeMap::new() }
    }

    pub fn passed(&self) -> bool {
        self.verdict != Verdict::Fail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaMargin {
    pub delta: f64,
    pub margin: Option<f64>,
}

/// One of the two sign conditions (real `tau = 0` or complex `tau > 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    #[serde(flatten)]
    pub report: CheckReport,
    pub feasible: usize,
    pub margin_by_delta: Vec<DeltaMargin>,
    pub polish_converged: bool,
}

/// Result of a surface or function pseudoconvexity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoconvexityReport {
    #[serde(flatten)]
    pub report: CheckReport,
    pub mode: Mode,
    /// Number of sphere samples the verdict rests on.
    pub samples: usize,
    pub real: ConditionReport,
    pub complex: ConditionReport,
    /// The real condition passed but the complex one failed.
    pub numerical_inconsistency: bool,
    /// Noncharacteristic point where `{p, {p, psi}} < 0` on the tangent
    /// characteristic set (surface checks only).
    pub alinhac_negation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckConfig {
    pub samples: usize,
    pub delta: f64,
    pub deltas: [f64; 3],
    pub polish: usize,
    pub projection_steps: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig { samples: 1 << 14, delta: 1e-3, deltas: [1e-2, 1e-3, 1e-4], polish: 32, projection_steps: 40 }
    }
}

/// Tolerance on `|p(dpsi)| / |dpsi|^2` below which a surface is characteristic.
pub const TOL_CHAR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cond {
    SurfaceReal,
    SurfaceComplex,
    FunctionReal,
    FunctionComplex,
}

impl Cond {
    fn complex(self) -> bool {
        matches!(self, Cond::SurfaceComplex | Cond::FunctionComplex)
    }
}

/// Maps free sphere coordinates to `(xi, tau)`.
#[derive(Debug, Clone, Copy)]
struct Space {
    n: usize,
    complex: bool,
    xit0: bool,
}

impl Space {
    fn k(&self) -> usize {
        self.n - usize::from(self.xit0) + usize::from(self.complex)
    }

    fn embed(&self, y: &[f64]) -> (Vec<f64>, f64) {
        let (body, tau) = if self.complex { (&y[..y.len() - 1], y[y.len() - 1]) } else { (y, 0.0) };
        let xi = if self.xit0 { std::iter::once(0.0).chain(body.iter().copied()).collect() } else { body.to_vec() };
        (xi, tau)
    }
}

fn constraints(local: &Local, cond: Cond, xi: &[f64], tau: f64) -> Vec<f64> {
    match cond {
        Cond::SurfaceReal => vec![local.p2(xi), local.b1(xi)],
        Cond::FunctionReal => vec![local.p2(xi)],
        Cond::SurfaceComplex => {
            let c = local.conj(xi, tau);
            let b = local.bracket_pw(xi, tau);
            vec![c.re, c.im, b.re, b.im]
        }
        Cond::FunctionComplex => {
            let c = local.conj(xi, tau);
            vec![c.re, c.im]
        }
    }
}

fn objective(local: &Local, cond: Cond, xi: &[f64], tau: f64) -> f64 {
    if cond.complex() {
        local.c(xi, tau.abs())
    } else {
        local.b2(xi)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn normalize(y: &mut [f64]) {
    let n = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        for v in y {
            *v /= n;
        }
    }
}

/// Gauss-Newton projection onto the zero set of the constraints, staying on the sphere.
fn project(local: &Local, cond: Cond, space: Space, y0: &[f64], steps: usize) -> (Vec<f64>, f64) {
    let k = y0.len();
    let mut y = y0.to_vec();
    let eval = |y: &[f64]| {
        let (xi, tau) = space.embed(y);
        constraints(local, cond, &xi, tau)
    };
    let mut r = eval(&y);
    let h = 1e-7;
    for _ in 0..steps {
        if max_abs(&r) < 1e-13 {
            break;
        }
        let m = r.len();
        let mut jac = vec![vec![0.0; k]; m];
        let mut yp = y.clone();
        for j in 0..k {
            yp[j] = y[j] + h;
            let fp = eval(&yp);
            yp[j] = y[j] - h;
            let fm = eval(&yp);
            yp[j] = y[j];
            for i in 0..m {
                jac[i][j] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        // Minimal-norm step: dy = J^T (J J^T + mu I)^{-1} r.
        let mut g = nalgebra::DMatrix::<f64>::zeros(m, m);
        for a in 0..m {
            for b in 0..m {
                g[(a, b)] = (0..k).map(|j| jac[a][j] * jac[b][j]).sum();
            }
        }
        let scale = (0..m).map(|a| g[(a, a)]).fold(0.0, f64::max).max(1e-300);
        for a in 0..m {
            g[(a, a)] += 1e-12 * scale;
        }
        let rhs = nalgebra::DVector::from_vec(r.clone());
        let z = match g.lu().solve(&rhs) {
            Some(z) => z,
            None => break,
        };
        let mut trial = y.clone();
        for j in 0..k {
            trial[j] -= (0..m).map(|a| jac[a][j] * z[a]).sum::<f64>();
        }
        normalize(&mut trial);
        let rt = eval(&trial);
        if max_abs(&rt) >= max_abs(&r) {
            break;
        }
        y = trial;
        r = rt;
    }
    (y, max_abs(&r))
}

struct Sampled {
    y: Vec<f64>,
    residual: f64,
    value: f64,
}

fn run_condition(local: &Local, cond: Cond, space: Space, cfg: &CheckConfig) -> ConditionReport {
    let k = space.k();
    let base = sphere_points(k, cfg.samples);
    let mut sampled: Vec<Sampled> = base
        .par_iter()
        .map(|y0| {
            let (mut y, residual) = project(local, cond, space, y0, cfg.projection_steps);
            if space.complex {
                let last = y.len() - 1;
                y[last] = y[last].abs();
            }
            let (xi, tau) = space.embed(&y);
            let value = objective(local, cond, &xi, tau);
            Sampled { y, residual, value }
        })
        .collect();
    if space.complex {
        sampled.retain(|s| s.y[s.y.len() - 1] > 0.0);
    }

    let penalized = |y: &[f64], delta: f64| -> Option<(f64, Vec<f64>)> {
        let mut yy = y.to_vec();
        normalize(&mut yy);
        if space.complex {
            let last = yy.len() - 1;
            yy[last] = yy[last].abs();
            if yy[last] <= 0.0 {
                return None;
            }
        }
        let (xi, tau) = space.embed(&yy);
        if max_abs(&constraints(local, cond, &xi, tau)) > delta {
            return None;
        }
        Some((objective(local, cond, &xi, tau), yy))
    };

    let mut polish_converged = true;
    let mut minimize = |delta: f64| -> (usize, Option<(f64, Vec<f64>)>) {
        let mut feasible: Vec<&Sampled> = sampled.iter().filter(|s| s.residual <= delta).collect();
        feasible.sort_by(|a, b| a.value.total_cmp(&b.value));
        let mut best: Option<(f64, Vec<f64>)> = feasible.first().map(|s| (s.value, s.y.clone()));
        let polished: Vec<_> = feasible[..feasible.len().min(cfg.polish)]
            .par_iter()
            .map(|s| {
                let f = |y: &[f64]| penalized(y, delta).map(|(v, _)| v).unwrap_or(f64::INFINITY);
                let r = nelder_mead(f, &s.y, 1e-3, 1e-14, 1e-10, 400 * k);
                (r.converged, penalized(&r.x, delta))
            })
            .collect();
        for (conv, res) in polished {
            polish_converged &= conv;
            if let Some((v, y)) = res {
                if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                    best = Some((v, y));
                }
            }
        }
        (feasible.len(), best)
    };
    let (main_feasible, main) = minimize(cfg.delta);
    let best_by_delta: Vec<DeltaMargin> = cfg
        .deltas
        .iter()
        .map(|&delta| {
            let margin = if delta == cfg.delta { main.as_ref().map(|b| b.0) } else { minimize(delta).1.map(|b| b.0) };
            DeltaMargin { delta, margin }
        })
        .collect();

    let report = match main {
        None => CheckReport::vacuous(),
        Some((value, y)) => {
            let (xi, tau) = space.embed(&y);
            if value > 0.0 {
                CheckReport { verdict: Verdict::Pass, margin: Some(value), witness: None, constants: BTreeMap::new() }
            } else {
                CheckReport {
                    verdict: Verdict::Fail,
                    margin: Some(value),
                    witness: Some(Witness { xi, tau }),
                    constants: BTreeMap::new(),
                }
            }
        }
    };
    ConditionReport { report, feasible: main_feasible, margin_by_delta: best_by_delta, polish_converged }
}

fn combine(real: ConditionReport, complex: ConditionReport, mode: Mode, samples: usize, alinhac_possible: bool) -> PseudoconvexityReport {
    let r = &real.report;
    let c = &complex.report;
    let verdict = if r.verdict == Verdict::Fail || c.verdict == Verdict::Fail {
        Verdict::Fail
    } else if r.verdict == Verdict::Vacuous && c.verdict == Verdict::Vacuous {
        Verdict::Vacuous
    } else {
        Verdict::Pass
    };
    let margin = match (r.margin, c.margin) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    let witness = if r.verdict == Verdict::Fail { r.witness.clone() } else { c.witness.clone() };
    let numerical_inconsistency = r.verdict == Verdict::Pass && c.verdict == Verdict::Fail;
    let alinhac_negation = alinhac_possible && r.verdict == Verdict::Fail;
    PseudoconvexityReport {
        report: CheckReport { verdict, margin, witness, constants: BTreeMap::new() },
        mode,
        samples,
        real,
        complex,
        numerical_inconsistency,
        alinhac_negation,
    }
}

fn space_for(p: &PrincipalSymbol, mode: Mode, complex: bool) -> Result<Space> {
    if mode == Mode::Xit0 && !p.is_wave_type() {
        return Err(ConvexityError::NotWaveType);
    }
    Ok(Space { n: p.dim(), complex, xit0: mode == Mode::Xit0 })
}

fn normalized_char_value(local: &Local) -> f64 {
    let d = &local.w.d;
    let n2: f64 = d.iter().map(|v| v * v).sum();
    local.sym.p(d) / n2
}

/// Noncharacteristic iff `|p(x0, dpsi)| > TOL_CHAR |dpsi|^2`.
pub fn check_noncharacteristic(p: &PrincipalSymbol, s: &Hypersurface) -> Result<CheckReport> {
    let local = Local::new(p, &s.psi, &s.base_point)?;
    let value = normalized_char_value(&local);
    let mut report = CheckReport { verdict: Verdict::Pass, margin: Some(value), witness: None, constants: BTreeMap::new() };
    if value.abs() <= TOL_CHAR {
        let n = local.w.d.iter().map(|v| v * v).sum::<f64>().sqrt();
        report.verdict = Verdict::Fail;
        report.witness = Some(Witness { xi: local.w.d.iter().map(|v| v / n).collect(), tau: 0.0 });
    }
    Ok(report)
}

/// Strong pseudoconvexity of the oriented surface `{psi = psi(x0)}`.
pub fn check_surface_pseudoconvex(p: &PrincipalSymbol, s: &Hypersurface, mode: Mode, cfg: &CheckConfig) -> Result<PseudoconvexityReport> {
    let local = Local::new(p, &s.psi, &s.base_point)?;
    Ok(surface_from_local(&local, space_for(p, mode, false)?, space_for(p, mode, true)?, mode, cfg))
}

fn surface_from_local(local: &Local, real: Space, complex: Space, mode: Mode, cfg: &CheckConfig) -> PseudoconvexityReport {
    let r = run_condition(local, Cond::SurfaceReal, real, cfg);
    let c = run_condition(local, Cond::SurfaceComplex, complex, cfg);
    let noncharacteristic = normalized_char_value(local).abs() > TOL_CHAR;
    combine(r, c, mode, cfg.samples, noncharacteristic)
}

/// Pseudoconvexity of a weight function at `x0`.
pub fn check_function_pseudoconvex(p: &PrincipalSymbol, phi: &ExprAst, x0: &[f64], mode: Mode, cfg: &CheckConfig) -> Result<PseudoconvexityReport> {
    let local = Local::new(p, phi, x0)?;
    Ok(function_from_local(&local, space_for(p, mode, false)?, space_for(p, mode, true)?, mode, cfg))
}

fn function_from_local(local: &Local, real: Space, complex: Space, mode: Mode, cfg: &CheckConfig) -> PseudoconvexityReport {
    let r = run_condition(local, Cond::FunctionReal, real, cfg);
    let c = run_condition(local, Cond::FunctionComplex, complex, cfg);
    combine(r, c, mode, cfg.samples, false)
}

/// Doubling schedule `1, 2, 4, ..., 2^20` for `C1`.
pub fn c1_schedule() -> impl Iterator<Item = f64> {
    (0..=20).map(|k| 2f64.powi(k))
}

/// Locates `C1, C2` with `C1 |p_phi|^2 / (|xi|^2+tau^2) + {Re p_phi, Im p_phi}/tau >= C2`
/// on the unit half-sphere.
pub fn subellipticity_constants(p: &PrincipalSymbol, phi: &ExprAst, x0: &[f64], cfg: &CheckConfig) -> Result<CheckReport> {
    let local = Local::new(p, phi, x0)?;
    let space = Space { n: p.dim(), complex: true, xit0: false };
    let k = space.k();
    let fg = |y: &[f64]| -> (f64, f64) {
        let mut yy = y.to_vec();
        normalize(&mut yy);
        let (xi, tau) = space.embed(&yy);
        let tau = tau.abs();
        let c = local.conj(&xi, tau);
        (c.re * c.re + c.im * c.im, 0.5 * local.c(&xi, tau))
    };
    let pts: Vec<(Vec<f64>, f64, f64)> = sphere_points(k, cfg.samples)
        .into_par_iter()
        .map(|mut y| {
            let last = y.len() - 1;
            y[last] = y[last].abs();
            let (f, g) = fg(&y);
            (y, f, g)
        })
        .collect();
    let mut worst_trace = (f64::NEG_INFINITY, None::<Witness>);
    for c1 in c1_schedule() {
        let mut order: Vec<usize> = (0..pts.len()).collect();
        let val = |i: usize| c1 * pts[i].1 + pts[i].2;
        order.sort_by(|&a, &b| val(a).total_cmp(&val(b)));
        let mut best = val(order[0]);
        let mut best_y = pts[order[0]].0.clone();
        if best > 0.0 {
            let polished: Vec<_> = order
                .iter()
                .take(cfg.polish)
                .collect::<Vec<_>>()
                .par_iter()
                .map(|&&i| {
                    let f = |y: &[f64]| {
                        let (f, g) = fg(y);
                        c1 * f + g
                    };
                    nelder_mead(f, &pts[i].0, 1e-3, 1e-14, 1e-10, 400 * k)
                })
                .collect();
            for r in polished {
                if r.value < best {
                    best = r.value;
                    let mut y = r.x.clone();
                    normalize(&mut y);
                    best_y = y;
                }
            }
        }
        let (xi, tau) = space.embed(&best_y);
        if best > 0.0 {
            let mut constants = BTreeMap::new();
            constants.insert("C1".to_string(), c1);
            constants.insert("C2".to_string(), best);
            return Ok(CheckReport { verdict: Verdict::Pass, margin: Some(best), witness: None, constants });
        }
        if best > worst_trace.0 || worst_trace.1.is_none() {
            worst_trace = (best, Some(Witness { xi, tau: tau.abs() }));
        }
    }
    Ok(CheckReport { verdict: Verdict::Fail, margin: Some(worst_trace.0), witness: worst_trace.1, constants: BTreeMap::new() })
}

/// Doubling schedule `2^-4, ..., 2^20` for the convexification parameter.
pub fn lambda_schedule() -> impl Iterator<Item = f64> {
    (-4..=20).map(|k| 2f64.powi(k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticConvexification {
    pub lambda0: f64,
    pub weight: ExprAst,
    pub report: PseudoconvexityReport,
    /// Largest relative residual of the `c_phi` / `c_psi` identity on random points.
    pub identity_residual: f64,
    /// `(lambda, margin)` for every schedule entry tried.
    pub trace: Vec<(f64, Option<f64>)>,
}

/// `exp(lambda (psi - psi(x0)))`.
pub fn exp_weight(s: &Hypersurface, lambda: f64) -> ExprAst {
    let shifted = s.psi.sub(&ExprAst::constant(s.level, s.dim(), s.psi.convention()));
    shifted.scale(lambda).exp()
}

/// Relative residual of `c_phi(xi,tau) = lambda c_psi(xi, lambda tau) + 2 lambda^2 |{p_psi, psi}(xi, lambda tau)|^2`
/// for `phi = exp(lambda (psi - psi(x0)))`, maximized over `count` random points of the half-sphere.
pub fn convexification_identity_residual(p: &PrincipalSymbol, s: &Hypersurface, lambda: f64, count: usize, seed: u64) -> Result<f64> {
    let psi = Local::new(p, &s.psi, &s.base_point)?;
    let phi = Local::new(p, &exp_weight(s, lambda), &s.base_point)?;
    let n = p.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let mut y: Vec<f64> = (0..=n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        normalize(&mut y);
        let tau = y[n].abs();
        let xi = &y[..n];
        let lhs = phi.c(xi, tau);
        let cpsi = lambda * psi.c(xi, lambda * tau);
        let bracket = 2.0 * lambda * lambda * psi.bracket_pw(xi, lambda * tau).norm_sqr();
        let scale = lhs.abs().max(cpsi.abs()).max(bracket).max(f64::MIN_POSITIVE);
        worst = worst.max((lhs - cpsi - bracket).abs() / scale);
    }
    Ok(worst)
}

/// Smallest `lambda` in [`lambda_schedule`] for which `exp(lambda (psi - psi(x0)))`
/// is a pseudoconvex function.
pub fn convexify_analytic(p: &PrincipalSymbol, s: &Hypersurface, mode: Mode, cfg: &CheckConfig) -> Result<AnalyticConvexification> {
    let surface = check_surface_pseudoconvex(p, s, mode, cfg)?;
    if surface.report.verdict == Verdict::Fail {
        return Err(ConvexityError::Precondition("surface is not strongly pseudoconvex".into()));
    }
    let mut trace = Vec::new();
    for lambda in lambda_schedule() {
        let weight = exp_weight(s, lambda);
        let mut report = check_function_pseudoconvex(p, &weight, &s.base_point, mode, cfg)?;
        trace.push((lambda, report.report.margin));
        if report.report.passed() {
            let identity_residual = convexification_identity_residual(p, s, lambda, 200, 0x5eed)?;
            report.report.constants.insert("lambda0".into(), lambda);
            return Ok(AnalyticConvexification { lambda0: lambda, weight, report, identity_residual, trace });
        }
    }
    Err(ConvexityError::ScheduleExhausted(format!("no lambda up to 2^20 works; margins {trace:?}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometricVariant {
    Shift,
    Quadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricConvexification {
    pub field: ExprAst,
    pub eps: f64,
    /// Radius below which the quadratic weight separates `{phi <= 0}` (quadratic variant).
    pub r0: Option<f64>,
    pub report: PseudoconvexityReport,
    /// `max |phi_T - phi|` over the sampled ball of radius `r0` (quadratic variant).
    pub taylor_residual: Option<f64>,
}

/// Halving schedule `1, 1/2, ..., 2^-30`.
pub fn eps_schedule() -> impl Iterator<Item = f64> {
    (0..=30).map(|k| 2f64.powi(-k))
}

fn ball_samples(x0: &[f64], radius: f64, rings: usize, dirs: usize) -> Vec<(f64, Vec<f64>)> {
    let pts = sphere_points(x0.len(), dirs);
    let mut out = Vec::new();
    for r in 1..=rings {
        let rad = radius * r as f64 / rings as f64;
        for d in &pts {
            out.push((rad, x0.iter().zip(d).map(|(a, b)| a + rad * b).collect()));
        }
    }
    out
}

/// Perturbs a pseudoconvex weight so its level set through `x0` bends into
/// `{phi > 0}`: `phi - eps |x - x0|^2` (shift) or the second-order Taylor
/// polynomial minus `eps |x - x0|^2` (quadratic).
pub fn convexify_geometric(
    phi: &ExprAst,
    x0: &[f64],
    p: &PrincipalSymbol,
    variant: GeometricVariant,
    mode: Mode,
    cfg: &CheckConfig,
) -> Result<GeometricConvexification> {
    let conv = phi.convention();
    let base = match variant {
        GeometricVariant::Shift => phi.clone(),
        GeometricVariant::Quadratic => ExprAst::taylor2(&phi.eval_jet2(x0).map_err(SymbolError::from)?, x0, conv),
    };
    let dist2 = ExprAst::squared_distance(x0, conv);
    for eps in eps_schedule() {
        let field = base.sub(&dist2.scale(eps));
        let report = check_function_pseudoconvex(p, &field, x0, mode, cfg)?;
        if !report.report.passed() {
            continue;
        }
        let mut out = GeometricConvexification { field, eps, r0: None, report, taylor_residual: None };
        out.report.report.constants.insert("eps_geo".into(), eps);
        if variant == GeometricVariant::Quadratic {
            let (r0, resid) = taylor_radius(phi, &base, x0, eps);
            let eta = eps * r0 * r0 / 8.0;
            if !separation_holds(phi, &out.field, x0, r0, eta) {
                return Err(ConvexityError::Precondition("separation bound failed on ring samples".into()));
            }
            out.r0 = Some(r0);
            out.taylor_residual = Some(resid);
            out.report.report.constants.insert("eta".into(), eta);
        }
        return Ok(out);
    }
    Err(ConvexityError::ScheduleExhausted("no eps down to 2^-30 keeps the weight pseudoconvex".into()))
}

// Largest radius in a halving schedule with |phi_T - phi| <= eps |x - x0|^2 / 2 on samples.
fn taylor_radius(phi: &ExprAst, taylor: &ExprAst, x0: &[f64], eps: f64) -> (f64, f64) {
    let mut r = 1.0;
    for _ in 0..40 {
        let samples = ball_samples(x0, r, 8, 256);
        let mut ok = true;
        let mut worst: f64 = 0.0;
        for (rad, x) in &samples {
            let (a, b) = match (phi.eval(x), taylor.eval(x)) {
                (Ok(a), Ok(b)) => (a, b),
                _ => {
                    ok = false;
                    break;
                }
            };
            worst = worst.max((a - b).abs());
            if (a - b).abs() > eps * rad * rad / 2.0 {
                ok = false;
                break;
            }
        }
        if ok {
            return (r, worst);
        }
        r *= 0.5;
    }
    (r, f64::NAN)
}

/// Checks `field <= -eta(R)` with `eta(R) = eps R^2 / 8` on `{phi <= 0}` in rings
/// `R/2 <= |x - x0| <= R` for `R = r0, r0/2, r0/4`.
fn separation_holds(phi: &ExprAst, field: &ExprAst, x0: &[f64], r0: f64, eta0: f64) -> bool {
    let dirs = sphere_points(x0.len(), 512);
    for k in 0..3 {
        let r = r0 / 2f64.powi(k);
        let eta = eta0 / 4f64.powi(k);
        for j in 0..=8 {
            let rad = r * (0.5 + 0.5 * j as f64 / 8.0);
            for d in &dirs {
                let x: Vec<f64> = x0.iter().zip(d).map(|(a, b)| a + rad * b).collect();
                if matches!(phi.eval(&x), Ok(v) if v <= 0.0) && !matches!(field.eval(&x), Ok(v) if v <= -eta * (1.0 - 1e-12)) {
                    return false;
                }
            }
        }
    }
    true
}

/// `h * (psi - psi(x0))` for a positive field `h`.
pub fn rescaled_surface(s: &Hypersurface, h: &ExprAst) -> std::result::Result<Hypersurface, SymbolError> {
    let shifted = s.psi.sub(&ExprAst::constant(s.level, s.dim(), s.psi.convention()));
    Hypersurface::new(h.mul(&shifted), s.base_point.clone())
}

/// Quadratic constant-coefficient weight as an expression, handy for tests and scenarios.
pub fn quadratic_field(jet: &WeightJet, x0: &[f64], conv: VarConvention) -> ExprAst {
    let n = x0.len();
    let mut root = Node::Const(jet.value);
    for i in 0..n {
        let dx = Node::Sub(Box::new(Node::Var(i)), Box::new(Node::Const(x0[i])));
        root = Node::Add(Box::new(root), Box::new(Node::Mul(Box::new(Node::Const(jet.d[i])), Box::new(dx))));
        for j in 0..n {
            let c = 0.5 * jet.hess[i * n + j];
            if c == 0.0 {
                continue;
            }
            let a = Node::Sub(Box::new(Node::Var(i)), Box::new(Node::Const(x0[i])));
            let b = Node::Sub(Box::new(Node::Var(j)), Box::new(Node::Const(x0[j])));
            root = Node::Add(
                Box::new(root),
                Box::new(Node::Mul(Box::new(Node::Const(c)), Box::new(Node::Mul(Box::new(a), Box::new(b))))),
            );
        }
    }
    ExprAst::from_node(root, n, conv).expect("indices in range")
}
