//! Computational tools around Carleman estimates for wave-type operators.
//!
//! The crate is organised bottom-up: [`fieldlang`] provides scalar fields and
//! their second-order jets, [`symbolcalc`] evaluates principal symbols and
//! brackets, [`convexity`] decides pseudoconvexity and builds weights, and the
//! remaining modules run numerical experiments on grids.

pub mod bicharflow;
pub mod carlemanlab;
pub mod convexity;
pub mod fieldlang;
pub mod fit;
pub mod gaussmult;
pub mod hum;
pub mod geodist;
pub mod optim;
pub mod sampling;
pub mod symbolcalc;
pub mod wavesolve;

pub use fieldlang::{parse, parse_with, ExprAst, FieldError, Jet2, VarConvention};
pub use symbolcalc::{ConjValue, Hypersurface, PrincipalSymbol};
pub use convexity::{CheckConfig, CheckReport, Mode, PseudoconvexityReport, Verdict, Witness};
