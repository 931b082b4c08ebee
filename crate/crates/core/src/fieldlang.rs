//! Scalar field expressions and second-order forward differentiation.
//!
//! Every coefficient, weight and hypersurface defining function in the crate is
//! an [`ExprAst`] parsed from a small infix language:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' integer)*
//! atom    := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! Functions are `exp`, `sin` and `cos`; `pi` is a named constant. Variables
//! follow a [`VarConvention`] fixed at parse time.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("negative exponent at offset {offset}")]
    NegativeExponent { offset: usize },
    #[error("variable index {index} out of range for dimension {dim}")]
    VariableOutOfRange { index: usize, dim: usize },
    #[error("point has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite result")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, FieldError>;

/// How identifiers map to variable slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarConvention {
    /// `x1..x{dim}` map to slots `0..dim`.
    Space,
    /// `t` is slot 0 and `x1..x{dim-1}` are slots `1..dim`.
    SpaceTime,
    /// Phase space of dimension `2n`: `x1..xn` then `xi1..xin`.
    Phase,
}

impl VarConvention {
    fn slot(self, name: &str, dim: usize) -> Option<usize> {
        match self {
            VarConvention::Space => index_suffix(name, "x").filter(|&k| k >= 1 && k <= dim).map(|k| k - 1),
            VarConvention::SpaceTime => {
                if name == "t" {
                    Some(0)
                } else {
                    index_suffix(name, "x").filter(|&k| k >= 1 && k < dim)
                }
            }
            VarConvention::Phase => {
                let n = dim / 2;
                if let Some(k) = index_suffix(name, "xi") {
                    (k >= 1 && k <= n).then(|| n + k - 1)
                } else {
                    index_suffix(name, "x").filter(|&k| k >= 1 && k <= n).map(|k| k - 1)
                }
            }
        }
    }

    /// Canonical name of a slot, used by the printer.
    pub fn name(self, slot: usize, dim: usize) -> String {
        match self {
            VarConvention::Space => format!("x{}", slot + 1),
            VarConvention::SpaceTime => {
                if slot == 0 {
                    "t".to_string()
                } else {
                    format!("x{slot}")
                }
            }
            VarConvention::Phase => {
                let n = dim / 2;
                if slot < n {
                    format!("x{}", slot + 1)
                } else {
                    format!("xi{}", slot - n + 1)
                }
            }
        }
    }
}

fn index_suffix(name: &str, prefix: &str) -> Option<usize> {
    let rest = name.strip_prefix(prefix)?;
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) || rest.starts_with('0') {
        return None;
    }
    rest.parse().ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Func {
    Exp,
    Sin,
    Cos,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }

    /// Value, first and second derivative at `x`.
    fn eval3(self, x: f64) -> (f64, f64, f64) {
        match self {
            Func::Exp => {
                let e = x.exp();
                (e, e, e)
            }
            Func::Sin => {
                let (s, c) = x.sin_cos();
                (s, c, -s)
            }
            Func::Cos => {
                let (s, c) = x.sin_cos();
                (c, -s, -c)
            }
        }
    }
}

/// Expression tree node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Const(f64),
    Var(usize),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, u32),
    Call(Func, Box<Node>),
}

/// A parsed scalar field over a fixed number of variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExprAst {
    root: Node,
    dim: usize,
    convention: VarConvention,
}

/// Value, gradient and Hessian of a scalar field at a point.
///
/// The Hessian is stored as its upper triangle, row-major, so symmetry holds
/// by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub gradient: Vec<f64>,
    upper: Vec<f64>,
}

#[inline]
fn tri_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

impl Jet2 {
    pub fn constant(value: f64, n: usize) -> Self {
        Jet2 { value, gradient: vec![0.0; n], upper: vec![0.0; n * (n + 1) / 2] }
    }

    pub fn variable(value: f64, slot: usize, n: usize) -> Self {
        let mut j = Jet2::constant(value, n);
        j.gradient[slot] = 1.0;
        j
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.upper[tri_index(self.dim(), i, j)]
    }

    /// Dense copy of the Hessian.
    pub fn hessian(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..n).map(|i| (0..n).map(|j| self.hess(i, j)).collect()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.gradient.iter().all(|v| v.is_finite()) && self.upper.iter().all(|v| v.is_finite())
    }

    fn zip(&self, other: &Jet2, value: f64, fg: impl Fn(f64, f64) -> f64) -> Jet2 {
        Jet2 {
            value,
            gradient: self.gradient.iter().zip(&other.gradient).map(|(a, b)| fg(*a, *b)).collect(),
            upper: self.upper.iter().zip(&other.upper).map(|(a, b)| fg(*a, *b)).collect(),
        }
    }

    pub fn add(&self, other: &Jet2) -> Jet2 {
        self.zip(other, self.value + other.value, |a, b| a + b)
    }

    pub fn sub(&self, other: &Jet2) -> Jet2 {
        self.zip(other, self.value - other.value, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Jet2 {
        Jet2 {
            value: self.value * s,
            gradient: self.gradient.iter().map(|g| g * s).collect(),
            upper: self.upper.iter().map(|h| h * s).collect(),
        }
    }

    pub fn mul(&self, other: &Jet2) -> Jet2 {
        let n = self.dim();
        let (f, g) = (self.value, other.value);
        let gradient = (0..n).map(|i| self.gradient[i] * g + f * other.gradient[i]).collect();
        let mut upper = vec![0.0; self.upper.len()];
        for i in 0..n {
            for j in i..n {
                let k = tri_index(n, i, j);
                upper[k] = self.upper[k] * g
                    + f * other.upper[k]
                    + self.gradient[i] * other.gradient[j]
                    + self.gradient[j] * other.gradient[i];
            }
        }
        Jet2 { value: f * g, gradient, upper }
    }

    /// Compose with a scalar function given its value and first two derivatives.
    pub fn chain(&self, phi: (f64, f64, f64)) -> Jet2 {
        let n = self.dim();
        let (v, d1, d2) = phi;
        let gradient = self.gradient.iter().map(|g| d1 * g).collect();
        let mut upper = vec![0.0; self.upper.len()];
        for i in 0..n {
            for j in i..n {
                let k = tri_index(n, i, j);
                upper[k] = d1 * self.upper[k] + d2 * self.gradient[i] * self.gradient[j];
            }
        }
        Jet2 { value: v, gradient, upper }
    }

    pub fn powi(&self, e: u32) -> Jet2 {
        let n = self.dim();
        match e {
            0 => Jet2::constant(1.0, n),
            1 => self.clone(),
            _ => {
                let f = self.value;
                let ef = e as f64;
                let v = f.powi(e as i32);
                let d1 = ef * f.powi(e as i32 - 1);
                let d2 = ef * (ef - 1.0) * f.powi(e as i32 - 2);
                self.chain((v, d1, d2))
            }
        }
    }
}

impl ExprAst {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn convention(&self) -> VarConvention {
        self.convention
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Wraps a node built programmatically; checks variable indices.
    pub fn from_node(root: Node, dim: usize, convention: VarConvention) -> Result<Self> {
        check_vars(&root, dim)?;
        Ok(ExprAst { root, dim, convention })
    }

    pub fn constant(c: f64, dim: usize, convention: VarConvention) -> Self {
        ExprAst { root: Node::Const(c), dim, convention }
    }

    /// Whether the expression references the given slot.
    pub fn uses_var(&self, slot: usize) -> bool {
        fn walk(n: &Node, s: usize) -> bool {
            match n {
                Node::Const(_) => false,
                Node::Var(k) => *k == s,
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => walk(a, s) || walk(b, s),
                Node::Pow(a, _) | Node::Call(_, a) => walk(a, s),
            }
        }
        walk(&self.root, slot)
    }

    /// Constant value if the expression has no variables.
    pub fn as_constant(&self) -> Option<f64> {
        (0..self.dim).all(|k| !self.uses_var(k)).then(|| eval_node(&self.root, &[]).ok()).flatten()
    }

    fn check_point(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.dim {
            return Err(FieldError::DimensionMismatch { expected: self.dim, got: point.len() });
        }
        Ok(())
    }

    /// Plain evaluation.
    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        self.check_point(point)?;
        let v = eval_node(&self.root, point)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(FieldError::NonFinite)
        }
    }

    /// Value, gradient and Hessian at `point`.
    pub fn eval_jet2(&self, point: &[f64]) -> Result<Jet2> {
        self.check_point(point)?;
        let j = jet_node(&self.root, point)?;
        if j.is_finite() {
            Ok(j)
        } else {
            Err(FieldError::NonFinite)
        }
    }

    /// Third derivatives by one central difference of Hessians, step
    /// `eps^(1/3) * (1 + |x|)`. Entry `[i][j][k]` is `d^3 f / dx_i dx_j dx_k`.
    pub fn third_derivatives_fd(&self, point: &[f64]) -> Result<Vec<Vec<Vec<f64>>>> {
        self.check_point(point)?;
        let n = self.dim;
        let norm = point.iter().map(|v| v * v).sum::<f64>().sqrt();
        let h = f64::EPSILON.cbrt() * (1.0 + norm);
        let mut out = vec![vec![vec![0.0; n]; n]; n];
        let mut p = point.to_vec();
        for i in 0..n {
            p[i] = point[i] + h;
            let plus = self.eval_jet2(&p)?;
            p[i] = point[i] - h;
            let minus = self.eval_jet2(&p)?;
            p[i] = point[i];
            for j in 0..n {
                for k in 0..n {
                    out[i][j][k] = (plus.hess(j, k) - minus.hess(j, k)) / (2.0 * h);
                }
            }
        }
        Ok(out)
    }

    // Builders used when weights are derived from other fields.

    pub fn add(&self, other: &ExprAst) -> ExprAst {
        self.binary(other, Node::Add)
    }

    pub fn sub(&self, other: &ExprAst) -> ExprAst {
        self.binary(other, Node::Sub)
    }

    pub fn mul(&self, other: &ExprAst) -> ExprAst {
        self.binary(other, Node::Mul)
    }

    pub fn scale(&self, c: f64) -> ExprAst {
        ExprAst { root: Node::Mul(Box::new(Node::Const(c)), Box::new(self.root.clone())), ..self.clone() }
    }

    pub fn exp(&self) -> ExprAst {
        ExprAst { root: Node::Call(Func::Exp, Box::new(self.root.clone())), ..self.clone() }
    }

    pub fn neg(&self) -> ExprAst {
        ExprAst { root: Node::Sub(Box::new(Node::Const(0.0)), Box::new(self.root.clone())), ..self.clone() }
    }

    /// `sum_k (x_k - center_k)^2`.
    pub fn squared_distance(center: &[f64], convention: VarConvention) -> ExprAst {
        let dim = center.len();
        let mut root: Option<Node> = None;
        for (k, c) in center.iter().enumerate() {
            let d = Node::Sub(Box::new(Node::Var(k)), Box::new(Node::Const(*c)));
            let sq = Node::Pow(Box::new(d), 2);
            root = Some(match root {
                None => sq,
                Some(r) => Node::Add(Box::new(r), Box::new(sq)),
            });
        }
        ExprAst { root: root.unwrap_or(Node::Const(0.0)), dim, convention }
    }

    /// Second-order Taylor polynomial of `jet` around `center`.
    pub fn taylor2(jet: &Jet2, center: &[f64], convention: VarConvention) -> ExprAst {
        let n = center.len();
        let dx = |k: usize| Node::Sub(Box::new(Node::Var(k)), Box::new(Node::Const(center[k])));
        let mut root = Node::Const(jet.value);
        for k in 0..n {
            let g = jet.gradient[k];
            if g != 0.0 {
                root = Node::Add(Box::new(root), Box::new(Node::Mul(Box::new(Node::Const(g)), Box::new(dx(k)))));
            }
        }
        for i in 0..n {
            for j in i..n {
                let h = jet.hess(i, j);
                if h == 0.0 {
                    continue;
                }
                let coef = if i == j { 0.5 * h } else { h };
                let mono = if i == j {
                    Node::Pow(Box::new(dx(i)), 2)
                } else {
                    Node::Mul(Box::new(dx(i)), Box::new(dx(j)))
                };
                root = Node::Add(Box::new(root), Box::new(Node::Mul(Box::new(Node::Const(coef)), Box::new(mono))));
            }
        }
        ExprAst { root, dim: n, convention }
    }

    fn binary(&self, other: &ExprAst, f: impl Fn(Box<Node>, Box<Node>) -> Node) -> ExprAst {
        assert_eq!(self.dim, other.dim, "combining fields of different dimension");
        ExprAst { root: f(Box::new(self.root.clone()), Box::new(other.root.clone())), ..self.clone() }
    }
}

fn check_vars(n: &Node, dim: usize) -> Result<()> {
    match n {
        Node::Const(_) => Ok(()),
        Node::Var(k) => {
            if *k < dim {
                Ok(())
            } else {
                Err(FieldError::VariableOutOfRange { index: *k, dim })
            }
        }
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
            check_vars(a, dim)?;
            check_vars(b, dim)
        }
        Node::Pow(a, _) | Node::Call(_, a) => check_vars(a, dim),
    }
}

fn eval_node(n: &Node, x: &[f64]) -> Result<f64> {
    Ok(match n {
        Node::Const(c) => *c,
        Node::Var(k) => x[*k],
        Node::Add(a, b) => eval_node(a, x)? + eval_node(b, x)?,
        Node::Sub(a, b) => eval_node(a, x)? - eval_node(b, x)?,
        Node::Mul(a, b) => eval_node(a, x)? * eval_node(b, x)?,
        Node::Div(a, b) => {
            let d = eval_node(b, x)?;
            if d == 0.0 {
                return Err(FieldError::DivisionByZero);
            }
            eval_node(a, x)? / d
        }
        Node::Pow(a, e) => eval_node(a, x)?.powi(*e as i32),
        Node::Call(f, a) => f.eval3(eval_node(a, x)?).0,
    })
}

fn jet_node(n: &Node, x: &[f64]) -> Result<Jet2> {
    let dim = x.len();
    Ok(match n {
        Node::Const(c) => Jet2::constant(*c, dim),
        Node::Var(k) => Jet2::variable(x[*k], *k, dim),
        Node::Add(a, b) => jet_node(a, x)?.add(&jet_node(b, x)?),
        Node::Sub(a, b) => jet_node(a, x)?.sub(&jet_node(b, x)?),
        Node::Mul(a, b) => jet_node(a, x)?.mul(&jet_node(b, x)?),
        Node::Div(a, b) => {
            let d = jet_node(b, x)?;
            if d.value == 0.0 {
                return Err(FieldError::DivisionByZero);
            }
            let g = d.value;
            let recip = d.chain((1.0 / g, -1.0 / (g * g), 2.0 / (g * g * g)));
            jet_node(a, x)?.mul(&recip)
        }
        Node::Pow(a, e) => jet_node(a, x)?.powi(*e),
        Node::Call(f, a) => {
            let inner = jet_node(a, x)?;
            inner.chain(f.eval3(inner.value))
        }
    })
}

/// Parse with the [`VarConvention::Space`] convention.
pub fn parse(source: &str, dim: usize) -> Result<ExprAst> {
    parse_with(source, dim, VarConvention::Space)
}

pub fn parse_with(source: &str, dim: usize, convention: VarConvention) -> Result<ExprAst> {
    let mut p = Parser { src: source.as_bytes(), pos: 0, dim, convention };
    let root = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.err(format!("unexpected `{}`", p.src[p.pos] as char)));
    }
    Ok(ExprAst { root, dim, convention })
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
    convention: VarConvention,
}

impl Parser<'_> {
    fn err(&self, message: String) -> FieldError {
        FieldError::Syntax { offset: self.pos, message }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if c == b'+' { Node::Add(Box::new(lhs), Box::new(rhs)) } else { Node::Sub(Box::new(lhs), Box::new(rhs)) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if c == b'*' { Node::Mul(Box::new(lhs), Box::new(rhs)) } else { Node::Div(Box::new(lhs), Box::new(rhs)) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(match inner {
                Node::Const(c) => Node::Const(-c),
                other => Node::Sub(Box::new(Node::Const(0.0)), Box::new(other)),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let mut base = self.atom()?;
        while self.peek() == Some(b'^') {
            self.pos += 1;
            let start = {
                self.skip_ws();
                self.pos
            };
            if self.peek() == Some(b'-') {
                return Err(FieldError::NegativeExponent { offset: start });
            }
            let (value, text) = self.number()?;
            if text.contains(['.', 'e', 'E']) || value > u32::MAX as f64 {
                return Err(FieldError::Syntax { offset: start, message: "exponent must be a nonnegative integer".into() });
            }
            base = Node::Pow(Box::new(base), value as u32);
        }
        Ok(base)
    }

    fn number(&mut self) -> Result<(f64, String)> {
        self.skip_ws();
        let start = self.pos;
        let s = self.src;
        let mut i = self.pos;
        while i < s.len() && (s[i].is_ascii_digit() || s[i] == b'.') {
            i += 1;
        }
        if i < s.len() && (s[i] == b'e' || s[i] == b'E') {
            let mut j = i + 1;
            if j < s.len() && (s[j] == b'+' || s[j] == b'-') {
                j += 1;
            }
            if j < s.len() && s[j].is_ascii_digit() {
                while j < s.len() && s[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        if i == start {
            return Err(self.err(if start >= s.len() { "unexpected end of input".into() } else { "expected number".into() }));
        }
        let text = std::str::from_utf8(&s[start..i]).expect("ascii").to_string();
        let value = text.parse::<f64>().map_err(|_| FieldError::Syntax { offset: start, message: format!("bad number `{text}`") })?;
        self.pos = i;
        Ok((value, text))
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek() {
            None => Err(self.err("unexpected end of input".into())),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected `)`".into()));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => Ok(Node::Const(self.number()?.0)),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii").to_string();
                let func = match name.as_str() {
                    "exp" => Some(Func::Exp),
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    _ => None,
                };
                if let Some(f) = func {
                    if self.peek() != Some(b'(') {
                        return Err(self.err(format!("expected `(` after `{name}`")));
                    }
                    self.pos += 1;
                    let arg = self.expr()?;
                    if self.peek() != Some(b')') {
                        return Err(self.err("expected `)`".into()));
                    }
                    self.pos += 1;
                    return Ok(Node::Call(f, Box::new(arg)));
                }
                if name == "pi" {
                    return Ok(Node::Const(std::f64::consts::PI));
                }
                self.convention
                    .slot(&name, self.dim)
                    .map(Node::Var)
                    .ok_or(FieldError::UnknownIdentifier { name, offset: start })
            }
            Some(c) => Err(self.err(format!("unexpected `{}`", c as char))),
        }
    }
}

impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.root, self.dim, self.convention)
    }
}

// Fully parenthesized so that reparsing yields the same tree.
fn write_node(f: &mut fmt::Formatter<'_>, n: &Node, dim: usize, conv: VarConvention) -> fmt::Result {
    match n {
        Node::Const(c) => {
            if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                write!(f, "(-{})", -c)
            } else {
                write!(f, "{c}")
            }
        }
        Node::Var(k) => write!(f, "{}", conv.name(*k, dim)),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
            let op = match n {
                Node::Add(..) => '+',
                Node::Sub(..) => '-',
                Node::Mul(..) => '*',
                _ => '/',
            };
            write!(f, "(")?;
            write_node(f, a, dim, conv)?;
            write!(f, " {op} ")?;
            write_node(f, b, dim, conv)?;
            write!(f, ")")
        }
        Node::Pow(a, e) => {
            write!(f, "(")?;
            write_node(f, a, dim, conv)?;
            write!(f, ")^{e}")
        }
        Node::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_node(f, a, dim, conv)?;
            write!(f, ")")
        }
    }
}
