//! Hamiltonian flow of a phase-space symbol and tangency of its projection
//! against a hypersurface.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fieldlang::{ExprAst, FieldError};
use crate::symbolcalc::Hypersurface;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("step must be positive, got {0}")]
    BadStep(f64),
    #[error("symbol has dimension {got}, expected 2 x {n}")]
    Dimension { n: usize, got: usize },
    #[error("trajectory left the domain box at s = {s}")]
    LeftDomain { s: f64 },
    #[error("start point is off the surface by {offset:e}")]
    OffSurface { offset: f64 },
    #[error("trajectory needs at least five samples on one side of s = 0")]
    TooShort,
}

pub type Result<T> = std::result::Result<T, FlowError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub s: f64,
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
}

/// Samples of `(x_s, xi_s)` in increasing `s`, with the symbol value at each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub samples: Vec<FlowSample>,
    pub p2_values: Vec<f64>,
    pub step: f64,
}

impl FlowTrajectory {
    /// `max_s |p(x_s, xi_s) - p(x_0, xi_0)|`, measured from the `s = 0` sample.
    pub fn max_drift(&self) -> f64 {
        let i0 = self.index_of_zero();
        let p0 = self.p2_values[i0];
        self.p2_values.iter().map(|v| (v - p0).abs()).fold(0.0, f64::max)
    }

    /// Whether the drift stays within `tol (1 + |p(x_0, xi_0)|)`.
    pub fn conserves(&self, tol: f64) -> bool {
        let p0 = self.p2_values[self.index_of_zero()];
        self.max_drift() <= tol * (1.0 + p0.abs())
    }

    fn index_of_zero(&self) -> usize {
        self.samples
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.s.abs().total_cmp(&b.1.s.abs()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    pub fn to_csv(&self) -> String {
        let n = self.samples.first().map_or(0, |s| s.x.len());
        let mut out = String::from("s");
        for i in 1..=n {
            out.push_str(&format!(",x{i}"));
        }
        for i in 1..=n {
            out.push_str(&format!(",xi{i}"));
        }
        out.push_str(",p2\n");
        for (smp, p) in self.samples.iter().zip(&self.p2_values) {
            out.push_str(&format!("{}", smp.s));
            for v in smp.x.iter().chain(&smp.xi) {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(",{p}\n"));
        }
        out
    }
}

fn hamilton_field(h: &ExprAst, z: &[f64]) -> Result<Vec<f64>> {
    let n = z.len() / 2;
    let jet = h.eval_jet2(z)?;
    let mut out = vec![0.0; 2 * n];
    for i in 0..n {
        out[i] = jet.gradient[n + i];
        out[n + i] = -jet.gradient[i];
    }
    Ok(out)
}

fn rk4_step(h: &ExprAst, z: &[f64], dt: f64) -> Result<Vec<f64>> {
    let add = |a: &[f64], b: &[f64], c: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + c * y).collect() };
    let k1 = hamilton_field(h, z)?;
    let k2 = hamilton_field(h, &add(z, &k1, dt / 2.0))?;
    let k3 = hamilton_field(h, &add(z, &k2, dt / 2.0))?;
    let k4 = hamilton_field(h, &add(z, &k3, dt))?;
    Ok((0..z.len()).map(|i| z[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

fn run(h: &ExprAst, z0: &[f64], s_end: f64, step: f64, bounds: Option<&[(f64, f64)]>) -> Result<Vec<(f64, Vec<f64>)>> {
    let steps = (s_end.abs() / step).round() as usize;
    let dt = if s_end < 0.0 { -step } else { step };
    let n = z0.len() / 2;
    let mut out = Vec::with_capacity(steps + 1);
    let mut z = z0.to_vec();
    out.push((0.0, z.clone()));
    for k in 1..=steps {
        z = rk4_step(h, &z, dt)?;
        let s = k as f64 * dt;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::Field(FieldError::NonFinite));
        }
        if let Some(b) = bounds {
            if (0..n).any(|i| z[i] < b[i].0 || z[i] > b[i].1) {
                return Err(FlowError::LeftDomain { s });
            }
        }
        out.push((s, z.clone()));
    }
    Ok(out)
}

/// Classical RK4 for `dx/ds = d_xi h`, `dxi/ds = -d_x h` from `s = 0` to
/// `s_max` (which may be negative). `h` lives on phase space `(x, xi)`.
pub fn integrate(h: &ExprAst, x0: &[f64], xi0: &[f64], s_max: f64, step: f64, bounds: Option<&[(f64, f64)]>) -> Result<FlowTrajectory> {
    integrate_span(h, x0, xi0, s_max.min(0.0), s_max.max(0.0), step, bounds)
}

/// Integrates both ways from `s = 0`, covering `[s_min, s_max]`.
pub fn integrate_span(
    h: &ExprAst,
    x0: &[f64],
    xi0: &[f64],
    s_min: f64,
    s_max: f64,
    step: f64,
    bounds: Option<&[(f64, f64)]>,
) -> Result<FlowTrajectory> {
    if !(step > 0.0) {
        return Err(FlowError::BadStep(step));
    }
    let n = x0.len();
    if h.dim() != 2 * n || xi0.len() != n {
        return Err(FlowError::Dimension { n, got: h.dim() });
    }
    let z0: Vec<f64> = x0.iter().chain(xi0).copied().collect();
    let mut points = Vec::new();
    if s_min < 0.0 {
        let back = run(h, &z0, s_min, step, bounds)?;
        points.extend(back.into_iter().skip(1).rev());
    }
    points.extend(run(h, &z0, s_max, step, bounds)?);
    let mut samples = Vec::with_capacity(points.len());
    let mut p2_values = Vec::with_capacity(points.len());
    for (s, z) in points {
        p2_values.push(h.eval(&z)?);
        samples.push(FlowSample { s, x: z[..n].to_vec(), xi: z[n..].to_vec() });
    }
    Ok(FlowTrajectory { samples, p2_values, step })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tangency {
    Transversal,
    ConvexTangent,
    ConcaveTangent,
    HigherOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangencyReport {
    pub c0: f64,
    pub c_dot0: f64,
    pub c_ddot0: f64,
    pub class: Tangency,
}

/// Threshold on `|c'(0)|` and `|c''(0)|` used by [`classify_tangency`].
pub const TANGENCY_TOL: f64 = 1e-8;

/// Derivatives of `c(s) = psi(x_s)` at `s = 0` by finite differences along
/// the trajectory, and the resulting tangency class.
pub fn classify_tangency(traj: &FlowTrajectory, s: &Hypersurface) -> Result<TangencyReport> {
    let i0 = traj.index_of_zero();
    let start = &traj.samples[i0];
    let c0 = s.psi.eval(&start.x)?;
    let offset = (c0 - s.level).abs();
    if offset > 1e-10 {
        return Err(FlowError::OffSurface { offset });
    }
    let c = |k: isize| -> Result<f64> { Ok(s.psi.eval(&traj.samples[(i0 as isize + k) as usize].x)?) };
    let h = traj.step;
    let before = i0;
    let after = traj.samples.len() - 1 - i0;
    let (c_dot0, c_ddot0) = if before >= 2 && after >= 2 {
        let (m2, m1, z, p1, p2) = (c(-2)?, c(-1)?, c(0)?, c(1)?, c(2)?);
        (
            (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h),
            (-m2 + 16.0 * m1 - 30.0 * z + 16.0 * p1 - p2) / (12.0 * h * h),
        )
    } else if after >= 4 || before >= 4 {
        let dir: isize = if after >= 4 { 1 } else { -1 };
        let v: Vec<f64> = (0..5).map(|k| c(dir * k)).collect::<Result<_>>()?;
        let d1 = (-25.0 * v[0] + 48.0 * v[1] - 36.0 * v[2] + 16.0 * v[3] - 3.0 * v[4]) / (12.0 * h);
        let d2 = (35.0 * v[0] - 104.0 * v[1] + 114.0 * v[2] - 56.0 * v[3] + 11.0 * v[4]) / (12.0 * h * h);
        (d1 * dir as f64, d2)
    } else {
        return Err(FlowError::TooShort);
    };
    let class = if c_dot0.abs() > TANGENCY_TOL {
        Tangency::Transversal
    } else if c_ddot0.abs() <= TANGENCY_TOL {
        Tangency::HigherOrder
    } else if c_ddot0 > 0.0 {
        Tangency::ConvexTangent
    } else {
        Tangency::ConcaveTangent
    };
    Ok(TangencyReport { c0, c_dot0, c_ddot0, class })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldlang::{parse_with, VarConvention};
    use crate::symbolcalc::{iterated_bracket, lift_to_phase, poisson_bracket, Local, PrincipalSymbol};

    fn st(s: &str, n: usize) -> ExprAst {
        parse_with(s, n, VarConvention::SpaceTime).unwrap()
    }

    fn variable_symbol() -> PrincipalSymbol {
        PrincipalSymbol::wave_type(vec![
            vec![st("1 + 0.3*sin(x1)*x2", 3), st("0.2*x1*x2", 3)],
            vec![st("0.2*x1*x2", 3), st("exp(0.5*x2)", 3)],
        ])
        .unwrap()
    }

    #[test]
    fn constant_coefficients_are_straight_lines() {
        let p = PrincipalSymbol::constant(&[vec![2.0, 0.5], vec![0.5, 1.0]], false).unwrap();
        let h = p.to_phase_expr();
        let traj = integrate(&h, &[0.1, -0.2], &[0.7, 0.3], 1.0, 1e-3, None).unwrap();
        let last = traj.samples.last().unwrap();
        let axi = [2.0 * 0.7 + 0.5 * 0.3, 0.5 * 0.7 + 0.3];
        for i in 0..2 {
            let exact = [0.1, -0.2][i] + 2.0 * last.s * axi[i];
            assert!((last.x[i] - exact).abs() < 1e-12);
            assert_eq!(last.xi[i], [0.7, 0.3][i]);
        }
    }

    #[test]
    fn zero_covector_is_stationary() {
        let h = variable_symbol().to_phase_expr();
        let traj = integrate(&h, &[0.0, 0.3, 0.1], &[0.0; 3], 0.5, 1e-3, None).unwrap();
        assert!(traj.samples.iter().all(|s| s.x == vec![0.0, 0.3, 0.1] && s.xi == vec![0.0; 3]));
    }

    #[test]
    fn conservation_variable_coefficients() {
        let h = variable_symbol().to_phase_expr();
        let traj = integrate(&h, &[0.0, 0.3, 0.1], &[0.8, -0.4, 0.6], 1.0, 1e-3, None).unwrap();
        assert_eq!(traj.samples.len(), 1001);
        assert!(traj.conserves(1e-8), "{}", traj.max_drift());
    }

    #[test]
    fn parabola_is_concave_tangent() {
        let h = parse_with("xi1", 4, VarConvention::Phase).unwrap();
        let s = Hypersurface::new(crate::parse("x2 - x1^2", 2).unwrap(), vec![0.0, 0.0]).unwrap();
        let traj = integrate_span(&h, &[0.0, 0.0], &[1.0, 0.0], -0.01, 0.01, 1e-3, None).unwrap();
        let r = classify_tangency(&traj, &s).unwrap();
        assert_eq!(r.class, Tangency::ConcaveTangent);
        assert!((r.c_ddot0 + 2.0).abs() < 1e-6);
        assert!(r.c_dot0.abs() < 1e-8);
        // One-sided stencil gives the same answer.
        let fwd = integrate(&h, &[0.0, 0.0], &[1.0, 0.0], 0.01, 1e-3, None).unwrap();
        let r = classify_tangency(&fwd, &s).unwrap();
        assert!((r.c_ddot0 + 2.0).abs() < 1e-6);
    }

    #[test]
    fn hyperboloid_null_tangent_is_convex() {
        let m = PrincipalSymbol::minkowski(3);
        let s = Hypersurface::new(st("x1^2 + x2^2 - 0.25*t^2 - 1", 3), vec![0.0, 1.0, 0.0]).unwrap();
        let xi = [1.0, 0.0, 1.0];
        let traj = integrate_span(&m.to_phase_expr(), &s.base_point, &xi, -0.01, 0.01, 1e-3, None).unwrap();
        let r = classify_tangency(&traj, &s).unwrap();
        assert_eq!(r.class, Tangency::ConvexTangent);
        let local = Local::new(&m, &s.psi, &s.base_point).unwrap();
        assert!((r.c_ddot0 - local.b2(&xi)).abs() < 1e-6 * local.b2(&xi).abs());
    }

    #[test]
    fn transversal_matches_b1() {
        let m = PrincipalSymbol::minkowski(3);
        let s = Hypersurface::new(st("x1^2 + x2^2 - 0.25*t^2 - 1", 3), vec![0.0, 1.0, 0.0]).unwrap();
        let xi = [0.3, 0.9, -0.2];
        let traj = integrate_span(&m.to_phase_expr(), &s.base_point, &xi, -0.01, 0.01, 1e-3, None).unwrap();
        let r = classify_tangency(&traj, &s).unwrap();
        assert_eq!(r.class, Tangency::Transversal);
        let b1 = Local::new(&m, &s.psi, &s.base_point).unwrap().b1(&xi);
        assert!((r.c_dot0 - b1).abs() < 1e-6 * b1.abs());
    }

    #[test]
    fn derivatives_match_brackets_variable_coefficients() {
        let p = variable_symbol();
        let psi = st("x1^2 + x2 - 0.3*t^2 + t*x1", 3);
        let x0 = [0.2, 0.3, 0.4];
        let s = Hypersurface::new(psi.clone(), x0.to_vec()).unwrap();
        let h = p.to_phase_expr();
        for xi in [[0.5, 0.2, -0.7], [1.0, -0.3, 0.4], [0.1, 0.9, 0.2]] {
            let traj = integrate_span(&h, &x0, &xi, -0.01, 0.01, 1e-3, None).unwrap();
            let r = classify_tangency(&traj, &s).unwrap();
            let z: Vec<f64> = x0.iter().chain(xi.iter()).copied().collect();
            let b1 = poisson_bracket(&h, &lift_to_phase(&psi), &z).unwrap();
            let b2 = iterated_bracket(&h, &lift_to_phase(&psi), &z).unwrap();
            assert!((r.c_dot0 - b1).abs() <= 1e-5 * b1.abs().max(1.0));
            assert!((r.c_ddot0 - b2).abs() <= 1e-5 * b2.abs().max(1.0), "{} {}", r.c_ddot0, b2);
        }
    }

    #[test]
    fn time_reversal() {
        let h = variable_symbol().to_phase_expr();
        let x0 = [0.0, 0.3, 0.1];
        let xi0 = [0.8, -0.4, 0.6];
        let back = integrate(&h, &x0, &xi0, -0.5, 5e-4, None).unwrap();
        let end = back.samples.first().unwrap();
        let fwd = integrate(&h, &end.x, &end.xi, 0.5, 5e-4, None).unwrap();
        let last = fwd.samples.last().unwrap();
        for i in 0..3 {
            assert!((last.x[i] - x0[i]).abs() < 1e-9);
            assert!((last.xi[i] - xi0[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn errors() {
        let h = parse_with("xi1", 4, VarConvention::Phase).unwrap();
        assert!(matches!(integrate(&h, &[0.0, 0.0], &[1.0, 0.0], 1.0, 0.0, None), Err(FlowError::BadStep(_))));
        let b = [(-0.5, 0.5), (-1.0, 1.0)];
        assert!(matches!(integrate(&h, &[0.0, 0.0], &[1.0, 0.0], 1.0, 1e-3, Some(&b)), Err(FlowError::LeftDomain { .. })));
        let s = Hypersurface::new(crate::parse("x2 - x1^2 - 1", 2).unwrap(), vec![0.0, 1.0]).unwrap();
        let traj = integrate(&h, &[0.0, 0.0], &[1.0, 0.0], 0.01, 1e-3, None).unwrap();
        assert!(matches!(classify_tangency(&traj, &s), Err(FlowError::OffSurface { .. })));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let h = parse_with("xi1", 4, VarConvention::Phase).unwrap();
        let traj = integrate(&h, &[0.0, 0.0], &[1.0, 0.0], 0.003, 1e-3, None).unwrap();
        let csv = traj.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "s,x1,x2,xi1,xi2,p2");
        assert_eq!(lines.len(), 5);
    }
}
