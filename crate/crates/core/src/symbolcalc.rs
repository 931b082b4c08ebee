//! Principal symbols of real second-order operators and the bracket
//! quantities built from them.
//!
//! A symbol is `p(x, xi) = sum a^{ij}(x) xi_i xi_j`. Everything the checkers
//! need is a closed-form expansion in `xi` involving `a`, its first
//! x-derivatives and the 2-jet of a weight, so evaluation goes through a
//! [`Local`] snapshot frozen at one base point.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fieldlang::{self, ExprAst, FieldError, Jet2, Node, VarConvention};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymbolError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coefficient matrix is not symmetric at ({i}, {j})")]
    NotSymmetric { i: usize, j: usize },
    #[error("wave-type spatial coefficient depends on t")]
    TimeDependentCoefficient,
    #[error("degenerate surface: |dPsi| = {norm:e} at the base point")]
    DegenerateSurface { norm: f64 },
}

pub type Result<T> = std::result::Result<T, SymbolError>;

fn check_len(v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(SymbolError::DimensionMismatch { expected: n, got: v.len() });
    }
    Ok(())
}

/// `p(x, xi) = sum_{ij} a^{ij}(x) xi_i xi_j` with symmetric field coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipalSymbol {
    dim: usize,
    includes_time: bool,
    /// Upper triangle, row-major.
    coeff: Vec<ExprAst>,
}

fn upper_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

impl PrincipalSymbol {
    /// Builds a symbol from a full matrix, which must be structurally symmetric.
    pub fn from_matrix(entries: Vec<Vec<ExprAst>>, includes_time: bool) -> Result<Self> {
        let n = entries.len();
        let mut coeff = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            check_len(&vec![0.0; entries[i].len()], n)?;
            for j in i..n {
                if entries[i][j] != entries[j][i] {
                    return Err(SymbolError::NotSymmetric { i, j });
                }
                if entries[i][j].dim() != n {
                    return Err(SymbolError::DimensionMismatch { expected: n, got: entries[i][j].dim() });
                }
                coeff.push(entries[i][j].clone());
            }
        }
        Ok(PrincipalSymbol { dim: n, includes_time, coeff })
    }

    /// Parses a matrix of expression strings. Names follow the space-time
    /// convention when `includes_time` is set.
    pub fn parse_matrix(rows: &[Vec<String>], includes_time: bool) -> Result<Self> {
        let n = rows.len();
        let conv = if includes_time { VarConvention::SpaceTime } else { VarConvention::Space };
        let entries = rows
            .iter()
            .map(|r| r.iter().map(|s| fieldlang::parse_with(s, n, conv)).collect::<std::result::Result<Vec<_>, _>>())
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::from_matrix(entries, includes_time)
    }

    pub fn constant(matrix: &[Vec<f64>], includes_time: bool) -> Result<Self> {
        let n = matrix.len();
        let conv = if includes_time { VarConvention::SpaceTime } else { VarConvention::Space };
        let entries = matrix
            .iter()
            .map(|r| r.iter().map(|&c| ExprAst::constant(c, n, conv)).collect())
            .collect();
        Self::from_matrix(entries, includes_time)
    }

    /// `-xi_t^2 + |xi_x|^2` in total dimension `dim` (time slot first).
    pub fn minkowski(dim: usize) -> Self {
        let m: Vec<Vec<f64>> = (0..dim)
            .map(|i| (0..dim).map(|j| if i != j { 0.0 } else if i == 0 { -1.0 } else { 1.0 }).collect())
            .collect();
        Self::constant(&m, true).expect("diagonal matrix")
    }

    /// `|xi|^2` in `dim` space variables.
    pub fn laplacian(dim: usize) -> Self {
        let m: Vec<Vec<f64>> = (0..dim).map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Self::constant(&m, false).expect("identity")
    }

    /// `-xi_t^2 + g^{ij}(x) xi_i xi_j`, the symbol of `d_t^2 + Q`. The spatial
    /// block is given over the full space-time variable set and must not
    /// depend on `t`.
    pub fn wave_type(spatial: Vec<Vec<ExprAst>>) -> Result<Self> {
        let d = spatial.len();
        let n = d + 1;
        let mut entries = vec![vec![ExprAst::constant(0.0, n, VarConvention::SpaceTime); n]; n];
        entries[0][0] = ExprAst::constant(-1.0, n, VarConvention::SpaceTime);
        for i in 0..d {
            if spatial[i].len() != d {
                return Err(SymbolError::DimensionMismatch { expected: d, got: spatial[i].len() });
            }
            for j in 0..d {
                let e = &spatial[i][j];
                if e.dim() != n {
                    return Err(SymbolError::DimensionMismatch { expected: n, got: e.dim() });
                }
                if e.uses_var(0) {
                    return Err(SymbolError::TimeDependentCoefficient);
                }
                entries[i + 1][j + 1] = e.clone();
            }
        }
        Self::from_matrix(entries, true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn includes_time(&self) -> bool {
        self.includes_time
    }

    pub fn entry(&self, i: usize, j: usize) -> &ExprAst {
        &self.coeff[upper_index(self.dim, i, j)]
    }

    /// Whether the symbol has the form `-xi_t^2 + q(x, xi_x)` with
    /// t-independent `q`.
    pub fn is_wave_type(&self) -> bool {
        if !self.includes_time {
            return false;
        }
        if self.entry(0, 0).as_constant() != Some(-1.0) {
            return false;
        }
        (1..self.dim).all(|j| self.entry(0, j).as_constant() == Some(0.0))
            && (1..self.dim).all(|i| (i..self.dim).all(|j| !self.entry(i, j).uses_var(0)))
    }

    /// Coefficients and their first derivatives at `x`.
    pub fn freeze(&self, x: &[f64]) -> Result<Frozen> {
        check_len(x, self.dim)?;
        let n = self.dim;
        let mut a = vec![0.0; n * n];
        let mut da = vec![vec![0.0; n * n]; n];
        for i in 0..n {
            for j in i..n {
                let jet = self.entry(i, j).eval_jet2(x)?;
                a[i * n + j] = jet.value;
                a[j * n + i] = jet.value;
                for k in 0..n {
                    da[k][i * n + j] = jet.gradient[k];
                    da[k][j * n + i] = jet.gradient[k];
                }
            }
        }
        Ok(Frozen { n, a, da })
    }

    /// The symbol as one field on phase space `(x, xi)` of dimension `2 dim`.
    pub fn to_phase_expr(&self) -> ExprAst {
        let n = self.dim;
        let mut root: Option<Node> = None;
        for i in 0..n {
            for j in i..n {
                let c = self.entry(i, j).root().clone();
                if matches!(c, Node::Const(v) if v == 0.0) {
                    continue;
                }
                let weight = if i == j { 1.0 } else { 2.0 };
                let mono = Node::Mul(Box::new(Node::Var(n + i)), Box::new(Node::Var(n + j)));
                let term = Node::Mul(
                    Box::new(Node::Mul(Box::new(Node::Const(weight)), Box::new(c))),
                    Box::new(mono),
                );
                root = Some(match root {
                    None => term,
                    Some(r) => Node::Add(Box::new(r), Box::new(term)),
                });
            }
        }
        ExprAst::from_node(root.unwrap_or(Node::Const(0.0)), 2 * n, VarConvention::Phase).expect("indices in range")
    }

    pub fn eval(&self, x: &[f64], xi: &[f64]) -> Result<f64> {
        check_len(xi, self.dim)?;
        Ok(self.freeze(x)?.p(xi))
    }
}

/// Symmetric `n x n` matrix stored dense, row-major.
fn quad(m: &[f64], n: usize, u: &[f64], v: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += m[i * n + j] * v[j];
        }
        s += u[i] * row;
    }
    s
}

fn matvec(m: &[f64], n: usize, v: &[f64]) -> Vec<f64> {
    (0..n).map(|i| (0..n).map(|j| m[i * n + j] * v[j]).sum()).collect()
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Symbol coefficients `a(x0)` and `d_k a(x0)`.
#[derive(Debug, Clone)]
pub struct Frozen {
    pub n: usize,
    pub a: Vec<f64>,
    pub da: Vec<Vec<f64>>,
}

impl Frozen {
    pub fn p(&self, xi: &[f64]) -> f64 {
        quad(&self.a, self.n, xi, xi)
    }

    /// Polar form `a(u, v)`.
    pub fn polar(&self, u: &[f64], v: &[f64]) -> f64 {
        quad(&self.a, self.n, u, v)
    }
}

/// Gradient and Hessian of a weight (or defining function) at `x0`.
#[derive(Debug, Clone)]
pub struct WeightJet {
    pub value: f64,
    pub d: Vec<f64>,
    pub hess: Vec<f64>,
}

impl From<&Jet2> for WeightJet {
    fn from(j: &Jet2) -> Self {
        let n = j.dim();
        let mut hess = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                hess[i * n + k] = j.hess(i, k);
            }
        }
        WeightJet { value: j.value, d: j.gradient.clone(), hess }
    }
}

impl WeightJet {
    /// Jet of `exp(lambda (w - w(x0)))` at `x0`.
    pub fn exp_convexified(&self, lambda: f64) -> WeightJet {
        let n = self.d.len();
        let d: Vec<f64> = self.d.iter().map(|g| lambda * g).collect();
        let mut hess = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                hess[i * n + k] = lambda * self.hess[i * n + k] + lambda * lambda * self.d[i] * self.d[k];
            }
        }
        WeightJet { value: 1.0, d, hess }
    }
}

/// Conjugated symbol split into real and imaginary parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConjValue {
    pub re: f64,
    pub im_over_tau: f64,
    pub im: f64,
}

impl ConjValue {
    pub fn abs(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// Symbol and weight frozen at one point.
#[derive(Debug, Clone)]
pub struct Local {
    pub sym: Frozen,
    pub w: WeightJet,
}

/// Below this `tau / (|xi| + 1)` the commutator density uses its `tau = 0` limit.
pub const TAU_SWITCH: f64 = 1e-6;

impl Local {
    pub fn new(p: &PrincipalSymbol, weight: &ExprAst, x: &[f64]) -> Result<Self> {
        let sym = p.freeze(x)?;
        if weight.dim() != p.dim() {
            return Err(SymbolError::DimensionMismatch { expected: p.dim(), got: weight.dim() });
        }
        let w = WeightJet::from(&weight.eval_jet2(x)?);
        Ok(Local { sym, w })
    }

    pub fn n(&self) -> usize {
        self.sym.n
    }

    pub fn with_weight(&self, w: WeightJet) -> Local {
        Local { sym: self.sym.clone(), w }
    }

    pub fn p2(&self, xi: &[f64]) -> f64 {
        self.sym.p(xi)
    }

    /// `p(x, xi + i tau dw)`.
    pub fn conj(&self, xi: &[f64], tau: f64) -> ConjValue {
        let d = &self.w.d;
        let re = self.sym.p(xi) - tau * tau * self.sym.p(d);
        let im_over_tau = 2.0 * self.sym.polar(xi, d);
        ConjValue { re, im_over_tau, im: tau * im_over_tau }
    }

    /// `{p, w} = d_xi p . d_x w`.
    pub fn b1(&self, xi: &[f64]) -> f64 {
        2.0 * self.sym.polar(xi, &self.w.d)
    }

    /// `{p, {p, w}}`.
    pub fn b2(&self, xi: &[f64]) -> f64 {
        let n = self.n();
        let axi = matvec(&self.sym.a, n, xi);
        let ad = matvec(&self.sym.a, n, &self.w.d);
        let mut s = 4.0 * quad(&self.w.hess, n, &axi, &axi);
        for k in 0..n {
            let ak = &self.sym.da[k];
            s += 4.0 * axi[k] * quad(ak, n, xi, &self.w.d) - 2.0 * ad[k] * quad(ak, n, xi, xi);
        }
        s
    }

    /// `{p_w, w}` at `(xi, tau)`, complex.
    pub fn bracket_pw(&self, xi: &[f64], tau: f64) -> Complex64 {
        let d = &self.w.d;
        Complex64::new(2.0 * self.sym.polar(xi, d), 2.0 * tau * self.sym.polar(d, d))
    }

    /// Commutator density `(1/(i tau)) {conj(p_w), p_w}`; equals `2 b2` at `tau = 0`.
    pub fn c(&self, xi: &[f64], tau: f64) -> f64 {
        let norm = dot(xi, xi).sqrt();
        if tau < TAU_SWITCH * (norm + 1.0) {
            return 2.0 * self.b2(xi);
        }
        self.c_expanded(xi, tau)
    }

    /// The expanded formula without the small-tau switch.
    pub fn c_expanded(&self, xi: &[f64], tau: f64) -> f64 {
        let n = self.n();
        let d = &self.w.d;
        let axi = matvec(&self.sym.a, n, xi);
        let ad = matvec(&self.sym.a, n, d);
        let mut im_a_over_tau = 0.0;
        for k in 0..n {
            let ak = &self.sym.da[k];
            let r = quad(ak, n, xi, xi) - tau * tau * quad(ak, n, d, d);
            im_a_over_tau += 2.0 * (2.0 * axi[k] * quad(ak, n, xi, d) - ad[k] * r);
        }
        let hess = 8.0 * (quad(&self.w.hess, n, &axi, &axi) + tau * tau * quad(&self.w.hess, n, &ad, &ad));
        2.0 * im_a_over_tau + hess
    }
}

/// `p2(x, xi)`.
pub fn eval_p2(p: &PrincipalSymbol, x: &[f64], xi: &[f64]) -> Result<f64> {
    p.eval(x, xi)
}

/// Splits `p(x, xi + i tau dphi(x))` into real and imaginary parts.
pub fn conjugate_symbol(p: &PrincipalSymbol, phi: &ExprAst, x: &[f64], xi: &[f64], tau: f64) -> Result<ConjValue> {
    check_len(xi, p.dim())?;
    Ok(Local::new(p, phi, x)?.conj(xi, tau))
}

/// Level set of `psi` through a base point, oriented towards `{psi > psi(x0)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypersurface {
    pub psi: ExprAst,
    pub base_point: Vec<f64>,
    pub level: f64,
}

impl Hypersurface {
    pub fn new(psi: ExprAst, base_point: Vec<f64>) -> Result<Self> {
        check_len(&base_point, psi.dim())?;
        let jet = psi.eval_jet2(&base_point)?;
        let norm = dot(&jet.gradient, &jet.gradient).sqrt();
        if norm <= 1e-12 {
            return Err(SymbolError::DegenerateSurface { norm });
        }
        Ok(Hypersurface { psi, base_point, level: jet.value })
    }

    pub fn dim(&self) -> usize {
        self.psi.dim()
    }

    /// Same surface with the opposite orientation.
    pub fn reversed(&self) -> Hypersurface {
        Hypersurface { psi: self.psi.neg(), base_point: self.base_point.clone(), level: -self.level }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketSuite {
    pub p2: f64,
    pub b1: f64,
    pub b2: f64,
    pub p_psi: ConjValue,
    pub b_psi_psi: (f64, f64),
    pub c_psi: f64,
}

/// Bracket quantities of `p` against the surface defining function at `x`.
pub fn bracket_suite(p: &PrincipalSymbol, s: &Hypersurface, x: &[f64], xi: &[f64], tau: f64) -> Result<BracketSuite> {
    check_len(xi, p.dim())?;
    let local = Local::new(p, &s.psi, x)?;
    let norm = dot(&local.w.d, &local.w.d).sqrt();
    if norm <= 1e-12 {
        return Err(SymbolError::DegenerateSurface { norm });
    }
    let bpp = local.bracket_pw(xi, tau);
    Ok(BracketSuite {
        p2: local.p2(xi),
        b1: local.b1(xi),
        b2: local.b2(xi),
        p_psi: local.conj(xi, tau),
        b_psi_psi: (bpp.re, bpp.im),
        c_psi: local.c(xi, tau),
    })
}

/// Commutator density of a weight, `c_phi(x, xi, tau)`.
pub fn c_phi(p: &PrincipalSymbol, phi: &ExprAst, x: &[f64], xi: &[f64], tau: f64) -> Result<f64> {
    check_len(xi, p.dim())?;
    Ok(Local::new(p, phi, x)?.c(xi, tau))
}

/// Poisson bracket `{f, g}` of two phase-space fields (dimension `2n`,
/// positions first) at `point`, from their first derivatives.
pub fn poisson_bracket(f: &ExprAst, g: &ExprAst, point: &[f64]) -> std::result::Result<f64, FieldError> {
    let jf = f.eval_jet2(point)?;
    let jg = g.eval_jet2(point)?;
    Ok(bracket_from_gradients(&jf.gradient, &jg.gradient))
}

fn bracket_from_gradients(df: &[f64], dg: &[f64]) -> f64 {
    let n = df.len() / 2;
    (0..n).map(|j| df[n + j] * dg[j] - df[j] * dg[n + j]).sum()
}

/// `{f, {f, g}}` from 2-jets: differentiating the inner bracket needs only
/// Hessians of `f` and `g`.
pub fn iterated_bracket(f: &ExprAst, g: &ExprAst, point: &[f64]) -> std::result::Result<f64, FieldError> {
    let jf = f.eval_jet2(point)?;
    let jg = g.eval_jet2(point)?;
    let m = point.len();
    let n = m / 2;
    // Gradient of h = sum_j f_{xi_j} g_{x_j} - f_{x_j} g_{xi_j}.
    let dh: Vec<f64> = (0..m)
        .map(|k| {
            (0..n)
                .map(|j| {
                    jf.hess(k, n + j) * jg.gradient[j] + jf.gradient[n + j] * jg.hess(k, j)
                        - jf.hess(k, j) * jg.gradient[n + j]
                        - jf.gradient[j] * jg.hess(k, n + j)
                })
                .sum()
        })
        .collect();
    Ok(bracket_from_gradients(&jf.gradient, &dh))
}

/// Lifts a position-space field to phase space of dimension `2 dim`.
pub fn lift_to_phase(f: &ExprAst) -> ExprAst {
    ExprAst::from_node(f.root().clone(), 2 * f.dim(), VarConvention::Phase).expect("indices shift into range")
}
