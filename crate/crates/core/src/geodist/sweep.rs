//! Family of hypersurfaces `psi_eps(t, w, l) = eps * ell0 * zeta(r) - l`,
//! `r = sqrt((w/b)^2 + (t/t0)^2)`, in coordinates where the cometric near the
//! path `{w = 0}` is `diag(m'(l), 1)` plus a term of order `|w|`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GeoError, Result};
use crate::fieldlang::{ExprAst, VarConvention};
use crate::symbolcalc::{Frozen, PrincipalSymbol};

/// Even bump: the triangle `max(0, 1 - |s|/s1)` smoothed by the biweight
/// kernel of half-width `width`, rescaled so that `zeta(0) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaProfile {
    pub s1: f64,
    pub width: f64,
    norm: f64,
}

/// Mean of `|u|` under the unit biweight kernel.
const BIWEIGHT_ABS_MEAN: f64 = 0.3125;

impl ZetaProfile {
    /// Profile whose steepest slope is `0.98 * alpha`.
    pub fn new(alpha: f64) -> Result<Self> {
        let target = 0.98 * alpha;
        let room = (1.0 - 1.0 / target) / (1.0 + BIWEIGHT_ABS_MEAN);
        if !(room > 0.0) {
            return Err(GeoError::Family(format!("slope bound {alpha} leaves no room for a bump on [-1, 1]")));
        }
        let width = 0.05f64.min(0.9 * room);
        let s1 = BIWEIGHT_ABS_MEAN * width + 1.0 / target;
        Ok(Self { s1, width, norm: 1.0 - BIWEIGHT_ABS_MEAN * width / s1 })
    }

    fn cdf(&self, v: f64) -> f64 {
        let x = (v / self.width).clamp(-1.0, 1.0);
        0.5 + 15.0 / 16.0 * (x - 2.0 * x.powi(3) / 3.0 + x.powi(5) / 5.0)
    }

    fn cdf_integral(&self, v: f64) -> f64 {
        if v <= -self.width {
            return 0.0;
        }
        if v >= self.width {
            return v;
        }
        let x = v / self.width;
        self.width * (0.5 * (x + 1.0) + 15.0 / 16.0 * (x * x / 2.0 - x.powi(4) / 6.0 + x.powi(6) / 30.0 - 11.0 / 30.0))
    }

    pub fn eval(&self, s: f64) -> f64 {
        let s1 = self.s1;
        let raw = (self.cdf_integral(s + s1) - 2.0 * self.cdf_integral(s) + self.cdf_integral(s - s1)) / s1;
        (raw / self.norm).max(0.0)
    }

    pub fn deriv(&self, s: f64) -> f64 {
        let s1 = self.s1;
        (self.cdf(s + s1) - 2.0 * self.cdf(s) + self.cdf(s - s1)) / (s1 * self.norm)
    }

    /// Verifies the profile constraints on `samples + 1` equispaced points.
    pub fn check(&self, alpha: f64, samples: usize) -> ZetaCheck {
        let pts: Vec<f64> = (0..=samples).map(|i| -1.0 + 2.0 * i as f64 / samples as f64).collect();
        let max_slope = pts.iter().map(|&s| self.deriv(s).abs()).fold(0.0, f64::max);
        let min_value = pts.iter().map(|&s| self.eval(s)).fold(f64::INFINITY, f64::min);
        let even_error = pts.iter().map(|&s| (self.eval(s) - self.eval(-s)).abs()).fold(0.0, f64::max);
        let zeta0 = self.eval(0.0);
        let zeta_end = self.eval(1.0).abs().max(self.eval(-1.0).abs());
        let ok = (zeta0 - 1.0).abs() < 1e-12 && zeta_end < 1e-12 && min_value >= 0.0 && even_error < 1e-12 && max_slope <= alpha;
        ZetaCheck { samples: pts.len(), zeta0, zeta_end, min_value, even_error, max_slope, slope_margin: alpha - max_slope, ok }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaCheck {
    pub samples: usize,
    pub zeta0: f64,
    pub zeta_end: f64,
    pub min_value: f64,
    pub even_error: f64,
    pub max_slope: f64,
    pub slope_margin: f64,
    pub ok: bool,
}

#[derive(Debug, Clone)]
pub struct SweepFamily {
    pub ell0: f64,
    pub t0: f64,
    pub alpha: f64,
    pub b: f64,
    pub delta: f64,
    pub zeta: ZetaProfile,
    /// `m'(l)` as a field over `(t, w, l)`; only `l` may appear.
    pub m_prime: ExprAst,
    /// Coefficient `k` of the `k w` off-diagonal perturbation (0 for the exact normal form).
    pub cross: f64,
}

impl SweepFamily {
    pub fn new(ell0: f64, t0: f64, alpha: f64, b: f64, delta: f64) -> Result<Self> {
        for (name, v) in [("ell0", ell0), ("t0", t0), ("alpha", alpha), ("b", b), ("delta", delta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(GeoError::Family(format!("{name} must be positive, got {v}")));
            }
        }
        if b >= delta {
            return Err(GeoError::Family(format!("b = {b} must be below delta = {delta}")));
        }
        Ok(Self {
            ell0,
            t0,
            alpha,
            b,
            delta,
            zeta: ZetaProfile::new(alpha)?,
            m_prime: ExprAst::constant(1.0, 3, VarConvention::SpaceTime),
            cross: 0.0,
        })
    }

    pub fn with_m_prime(mut self, m: ExprAst) -> Result<Self> {
        if m.dim() != 3 || m.uses_var(0) || m.uses_var(1) {
            return Err(GeoError::Family("m' must be a field of l = x2 alone over (t, x1, x2)".into()));
        }
        for k in 0..=256 {
            let l = self.ell0 * k as f64 / 256.0;
            let v = m.eval(&[0.0, 0.0, l])?;
            if !(v > 0.0) {
                return Err(GeoError::Family(format!("m'({l}) = {v} is not positive")));
            }
        }
        self.m_prime = m;
        Ok(self)
    }

    pub fn with_cross(mut self, k: f64) -> Self {
        self.cross = k;
        self
    }

    /// Whether `1 < alpha < t0 / ell0`.
    pub fn hypothesis_holds(&self) -> bool {
        1.0 < self.alpha && self.alpha < self.t0 / self.ell0
    }

    /// Lower bound on the margin along `w = 0`: `1 - alpha^2 ell0^2 / t0^2`.
    pub fn eta_pred(&self) -> f64 {
        1.0 - (self.alpha * self.ell0 / self.t0).powi(2)
    }

    /// Wave symbol `-xi_t^2 + m(w, l) xi . xi` over `(t, w, l)`.
    pub fn symbol(&self) -> PrincipalSymbol {
        let c = |v: f64| ExprAst::constant(v, 3, VarConvention::SpaceTime);
        let w = crate::fieldlang::parse_with("x1", 3, VarConvention::SpaceTime).expect("static source");
        let off = w.scale(self.cross);
        PrincipalSymbol::wave_type(vec![vec![self.m_prime.clone(), off.clone()], vec![off, c(1.0)]]).expect("shapes are fixed")
    }

    /// `(d_t G, d_w G)` at `(t, w)` for parameter `eps`.
    pub fn grad_g(&self, t: f64, w: f64, eps: f64) -> (f64, f64) {
        let r = ((w / self.b).powi(2) + (t / self.t0).powi(2)).sqrt();
        if r == 0.0 {
            return (0.0, 0.0);
        }
        let k = eps * self.ell0 * self.zeta.deriv(r) / r;
        (k * t / (self.t0 * self.t0), k * w / (self.b * self.b))
    }

    pub fn psi(&self, t: f64, w: f64, l: f64, eps: f64) -> f64 {
        let r = ((w / self.b).powi(2) + (t / self.t0).powi(2)).sqrt();
        eps * self.ell0 * self.zeta.eval(r.min(1.0)) - l
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Points per axis on `D x [0, ell0]`.
    pub grid: usize,
    /// Number of equispaced `eps` values in `[0, 1]`.
    pub eps_count: usize,
    pub zeta_samples: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { grid: 64, eps_count: 33, zeta_samples: 10_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepWitness {
    pub t: f64,
    pub w: f64,
    pub l: f64,
    pub eps: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub eps_grid: Vec<f64>,
    pub min_margin_by_eps: Vec<f64>,
    pub min_margin: f64,
    pub noncharacteristic: bool,
    pub witness: SweepWitness,
    pub hypothesis_holds: bool,
    pub eta_pred: f64,
    /// Minimum over the path `w = 0` (all `t`, `l`, `eps`).
    pub ideal_min: f64,
    pub max_jump: f64,
    /// `max_k sup_x |p_{eps_{k+1}} - p_{eps_k}|`, which bounds every jump.
    pub lipschitz_estimate: f64,
    pub zeta: ZetaCheck,
}

/// Evaluates `p(w, l, d psi_eps)` over the grid and reports its minimum.
pub fn build_sweep(family: &SweepFamily, p: &PrincipalSymbol, cfg: &SweepConfig) -> Result<SweepReport> {
    if p.dim() != 3 || !p.is_wave_type() {
        return Err(GeoError::Family("symbol must be of wave type over (t, w, l)".into()));
    }
    if cfg.grid < 2 || cfg.eps_count < 2 {
        return Err(GeoError::Family("grid and eps_count must be at least 2".into()));
    }
    let zeta = family.zeta.check(family.alpha, cfg.zeta_samples);
    if !zeta.ok {
        return Err(GeoError::Family(format!("profile constraints fail: {zeta:?}")));
    }
    let lin = |lo: f64, hi: f64, k: usize| -> Vec<f64> { (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect() };
    let ts = lin(-family.t0, family.t0, cfg.grid);
    let ws = lin(-family.b, family.b, cfg.grid);
    let ls = lin(0.0, family.ell0, cfg.grid);
    let eps_grid = lin(0.0, 1.0, cfg.eps_count);
    let ne = eps_grid.len();

    let frozen: Vec<(f64, f64, Frozen)> = ws
        .iter()
        .flat_map(|&w| ls.iter().map(move |&l| (w, l)))
        .map(|(w, l)| Ok((w, l, p.freeze(&[0.0, w, l]).map_err(|e| GeoError::Family(e.to_string()))?)))
        .collect::<Result<_>>()?;

    #[derive(Clone)]
    struct Acc {
        mins: Vec<SweepWitness>,
        lips: Vec<f64>,
    }
    let empty = || Acc {
        mins: vec![SweepWitness { t: 0.0, w: 0.0, l: 0.0, eps: 0.0, value: f64::INFINITY }; ne],
        lips: vec![0.0; ne - 1],
    };
    let visit = |acc: &mut Acc, t: f64, w: f64, l: f64, fz: &Frozen| {
        let mut prev = f64::NAN;
        for (k, &eps) in eps_grid.iter().enumerate() {
            let (gt, gw) = family.grad_g(t, w, eps);
            let v = fz.p(&[gt, gw, -1.0]);
            if v < acc.mins[k].value {
                acc.mins[k] = SweepWitness { t, w, l, eps, value: v };
            }
            if k > 0 {
                acc.lips[k - 1] = acc.lips[k - 1].max((v - prev).abs());
            }
            prev = v;
        }
    };
    let merge = |mut a: Acc, b: Acc| {
        for k in 0..ne {
            if b.mins[k].value < a.mins[k].value {
                a.mins[k] = b.mins[k];
            }
        }
        for k in 0..ne - 1 {
            a.lips[k] = a.lips[k].max(b.lips[k]);
        }
        a
    };
    let acc = ts
        .par_iter()
        .fold(empty, |mut acc, &t| {
            for (w, l, fz) in &frozen {
                if (w / family.b).powi(2) + (t / family.t0).powi(2) <= 1.0 {
                    visit(&mut acc, t, *w, *l, fz);
                }
            }
            acc
        })
        .reduce(empty, merge);

    // The path w = 0 is off an even grid; sample it separately and include it.
    let path: Vec<(f64, f64, Frozen)> = ls
        .iter()
        .map(|&l| Ok((0.0, l, p.freeze(&[0.0, 0.0, l]).map_err(|e| GeoError::Family(e.to_string()))?)))
        .collect::<Result<_>>()?;
    let mut ideal = empty();
    for &t in &ts {
        for (w, l, fz) in &path {
            visit(&mut ideal, t, *w, *l, fz);
        }
    }
    let ideal_min = ideal.mins.iter().map(|m| m.value).fold(f64::INFINITY, f64::min);
    let acc = merge(acc, ideal);

    let min_margin_by_eps: Vec<f64> = acc.mins.iter().map(|m| m.value).collect();
    let witness = *acc.mins.iter().min_by(|a, b| a.value.total_cmp(&b.value)).expect("eps grid is nonempty");
    let max_jump = min_margin_by_eps.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    let lipschitz_estimate = acc.lips.iter().copied().fold(0.0, f64::max);
    Ok(SweepReport {
        eps_grid,
        min_margin: witness.value,
        noncharacteristic: witness.value > 0.0,
        min_margin_by_eps,
        witness,
        hypothesis_holds: family.hypothesis_holds(),
        eta_pred: family.eta_pred(),
        ideal_min,
        max_jump,
        lipschitz_estimate,
        zeta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn family(alpha: f64) -> SweepFamily {
        SweepFamily::new(1.0, 1.3, alpha, 0.1, 0.2).unwrap()
    }

    #[test]
    fn profile_constraints() {
        for alpha in [1.05, 1.2, 1.5, 3.0] {
            let z = ZetaProfile::new(alpha).unwrap();
            let c = z.check(alpha, 10_000);
            assert!(c.ok, "{alpha}: {c:?}");
            assert!((c.max_slope - 0.98 * alpha).abs() < 1e-3 * alpha, "{c:?}");
        }
        assert!(ZetaProfile::new(1.0).is_err());
    }

    #[test]
    fn profile_derivative_matches_difference_quotient() {
        let z = ZetaProfile::new(1.2).unwrap();
        for s in [-0.9, -0.5, -0.02, 0.01, 0.3, 0.84, 0.88] {
            let h = 1e-6;
            let fd = (z.eval(s + h) - z.eval(s - h)) / (2.0 * h);
            assert!((fd - z.deriv(s)).abs() < 1e-6, "{s}: {fd} vs {}", z.deriv(s));
        }
    }

    #[test]
    fn reference_parameters_are_noncharacteristic() {
        let f = family(1.2);
        let r = build_sweep(&f, &f.symbol(), &SweepConfig { grid: 32, ..Default::default() }).unwrap();
        assert!(r.hypothesis_holds);
        assert!(r.noncharacteristic && r.min_margin > 0.0);
        assert!(r.eta_pred > 0.0 && r.ideal_min >= r.eta_pred);
        assert!(r.max_jump <= r.lipschitz_estimate + 1e-15);
    }

    #[test]
    fn eps_zero_slice_is_one() {
        let f = family(1.2);
        let r = build_sweep(&f, &f.symbol(), &SweepConfig { grid: 16, eps_count: 5, zeta_samples: 1000 }).unwrap();
        assert!((r.min_margin_by_eps[0] - 1.0).abs() < 1e-15);
        assert_eq!(f.psi(0.3, 0.05, 0.7, 0.0), -0.7);
    }

    #[test]
    fn violated_hypothesis_yields_witness() {
        let f = family(1.5);
        let r = build_sweep(&f, &f.symbol(), &SweepConfig { grid: 32, ..Default::default() }).unwrap();
        assert!(!r.hypothesis_holds);
        assert!(!r.noncharacteristic && r.min_margin <= 0.0);
        let (gt, gw) = f.grad_g(r.witness.t, r.witness.w, r.witness.eps);
        let v = f.symbol().eval(&[r.witness.t, r.witness.w, r.witness.l], &[gt, gw, -1.0]).unwrap();
        assert!((v - r.witness.value).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_psi() {
        let f = family(1.2);
        let (t, w, l, eps) = (0.4, 0.03, 0.5, 0.7);
        let (gt, gw) = f.grad_g(t, w, eps);
        let h = 1e-7;
        let dt = (f.psi(t + h, w, l, eps) - f.psi(t - h, w, l, eps)) / (2.0 * h);
        let dw = (f.psi(t, w + h, l, eps) - f.psi(t, w - h, l, eps)) / (2.0 * h);
        assert!((dt - gt).abs() < 1e-6 && (dw - gw).abs() < 1e-5);
    }

    #[test]
    fn varying_normal_form() {
        let m = crate::fieldlang::parse_with("1 + 0.5*x2", 3, VarConvention::SpaceTime).unwrap();
        let f = family(1.2).with_m_prime(m).unwrap().with_cross(0.3);
        let r = build_sweep(&f, &f.symbol(), &SweepConfig { grid: 24, ..Default::default() }).unwrap();
        assert!(r.noncharacteristic);
        let bad = crate::fieldlang::parse_with("x1", 3, VarConvention::SpaceTime).unwrap();
        assert!(family(1.2).with_m_prime(bad).is_err());
    }

    #[test]
    fn invalid_family() {
        assert!(SweepFamily::new(1.0, 1.3, 1.2, 0.3, 0.2).is_err());
        assert!(SweepFamily::new(-1.0, 1.3, 1.2, 0.1, 0.2).is_err());
    }
}
