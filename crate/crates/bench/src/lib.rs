//! Shared fixtures for the kernel benchmarks.

use carleman_core::geodist::GridDomain;
use carleman_core::{parse_with, ExprAst, Hypersurface, VarConvention};

pub fn hyperboloid(gamma: f64) -> Hypersurface {
    let psi = parse_with(&format!("x1^2 + x2^2 - {}*t^2 - 1", gamma * gamma), 3, VarConvention::SpaceTime).unwrap();
    Hypersurface::new(psi, vec![0.0, 1.0, 0.0]).unwrap()
}

pub fn square(n: usize) -> GridDomain {
    GridDomain::new(vec![(0.0, 1.0), (0.0, 1.0)], vec![n, n]).unwrap()
}

pub fn field(source: &str, dim: usize) -> ExprAst {
    parse_with(source, dim, VarConvention::Space).unwrap()
}
