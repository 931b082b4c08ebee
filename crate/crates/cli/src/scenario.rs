//! TOML scenario schema. Expressions are strings in the core expression
//! language; sets are written as `expr <= 0`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    CheckSurface,
    Convexify,
    Flow,
    Distance,
    Sweep,
    Multiplier,
    Simulate,
    CarlemanRatio,
    Control,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::CheckSurface => "check-surface",
            Kind::Convexify => "convexify",
            Kind::Flow => "flow",
            Kind::Distance => "distance",
            Kind::Sweep => "sweep",
            Kind::Multiplier => "multiplier",
            Kind::Simulate => "simulate",
            Kind::CarlemanRatio => "carleman-ratio",
            Kind::Control => "control",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expect {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: Option<Kind>,
    pub name: Option<String>,
    pub expect: Option<Expect>,
    pub seed: Option<u64>,
    pub operator: Option<OperatorSpec>,
    pub surface: Option<SurfaceSpec>,
    pub check: Option<CheckSpec>,
    pub convexify: Option<ConvexifySpec>,
    pub flow: Option<FlowSpec>,
    pub grid: Option<GridSpec>,
    pub distance: Option<DistanceSpec>,
    pub sweep: Option<SweepSpec>,
    pub multiplier: Option<MultiplierSpec>,
    pub wave: Option<WaveSpec>,
    pub carleman: Option<CarlemanSpec>,
    pub control: Option<ControlSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Minkowski,
    Laplacian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeSpec {
    #[default]
    Full,
    Xit0,
}

/// Exactly one of `preset` (with `dim`), `matrix` or `wave_type`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    pub preset: Option<Preset>,
    pub dim: Option<usize>,
    /// Full coefficient matrix of the symbol.
    pub matrix: Option<Vec<Vec<String>>>,
    /// Whether slot 0 of `matrix` is time (`t`).
    #[serde(default)]
    pub includes_time: bool,
    /// Spatial block of `-xi_t^2 + ...`; variables `t, x1, ...`.
    pub wave_type: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub mode: ModeSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    pub psi: String,
    pub base_point: Vec<f64>,
    #[serde(default)]
    pub reversed: bool,
    /// Positive field `h`; the surface is replaced by `h (psi - psi(x0))`.
    pub rescale: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_samples() -> usize {
    1 << 14
}

fn default_delta() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometricSpec {
    Shift,
    Quadratic,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvexifySpec {
    pub geometric: Option<GeometricSpec>,
    #[serde(default)]
    pub subellipticity: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub x0: Vec<f64>,
    pub xi0: Vec<f64>,
    pub s_max: f64,
    #[serde(default)]
    pub s_min: f64,
    pub step: f64,
    pub bounds: Option<Vec<[f64; 2]>>,
    /// Classify tangency against `[surface]` (its base point must be `x0`).
    #[serde(default)]
    pub tangency: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub bounds: Vec<[f64; 2]>,
    pub n: Vec<usize>,
    /// Keep points where `mask <= 0`.
    pub mask: Option<String>,
    pub metric: Option<Vec<Vec<String>>>,
    pub stencil: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceSpec {
    /// Source set `source <= 0`.
    pub source: String,
    /// Optional set `target <= 0` for the sup-distance.
    pub target: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub ell0: f64,
    pub t0: f64,
    pub alpha: f64,
    pub b: f64,
    pub delta: f64,
    #[serde(default = "default_sweep_grid")]
    pub grid: usize,
    #[serde(default = "default_eps_count")]
    pub eps_count: usize,
    #[serde(default = "default_zeta_samples")]
    pub zeta_samples: usize,
    /// Coefficient of `xi_w^2` as a field of `(t, x1 = w, x2 = l)`.
    pub m_prime: Option<String>,
    pub cross: Option<f64>,
}

fn default_sweep_grid() -> usize {
    64
}

fn default_eps_count() -> usize {
    33
}

fn default_zeta_samples() -> usize {
    10_000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MultModeSpec {
    Spectral,
    Convolution,
    Both,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplierSpec {
    pub t0: f64,
    pub ht: f64,
    pub n: usize,
    /// Signal as a function of `t`.
    pub signal: String,
    pub eps: f64,
    pub tau: f64,
    pub mode: MultModeSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveSpec {
    pub coeffs: Option<Vec<Vec<String>>>,
    pub q: Option<String>,
    pub u0: String,
    #[serde(default = "zero")]
    pub u1: String,
    pub t_final: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_record")]
    pub record_every: usize,
}

fn zero() -> String {
    "0".into()
}

fn default_cfl() -> f64 {
    0.9
}

fn default_record() -> usize {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormSpec {
    #[default]
    Weighted,
    Conjugated,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarlemanSpec {
    pub bounds: Vec<[f64; 2]>,
    pub n: Vec<usize>,
    pub phi: String,
    #[serde(default = "default_bumps")]
    pub bumps: usize,
    #[serde(default = "default_w_min")]
    pub w_min: f64,
    #[serde(default = "default_w_max")]
    pub w_max: f64,
    #[serde(default = "default_tau_min")]
    pub tau_min: f64,
    /// Defaults to the admissible bound `0.5 / h`.
    pub tau_max: Option<f64>,
    #[serde(default = "default_tau_count")]
    pub tau_count: usize,
    #[serde(default)]
    pub b: Vec<String>,
    pub c: Option<String>,
    #[serde(default)]
    pub form: FormSpec,
}

fn default_bumps() -> usize {
    50
}

fn default_w_min() -> f64 {
    0.02
}

fn default_w_max() -> f64 {
    0.15
}

fn default_tau_min() -> f64 {
    5.0
}

fn default_tau_count() -> usize {
    24
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    /// Control region `omega <= 0`.
    pub omega: String,
    /// Absolute horizon; exclusive with `horizon_factor`.
    pub horizon: Option<f64>,
    /// Horizon as a multiple of `L(M, omega)`.
    pub horizon_factor: Option<f64>,
    pub target_u: String,
    #[serde(default = "zero")]
    pub target_v: String,
    pub eps: Vec<f64>,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Also report the Gram extreme eigenvalues (small grids only).
    #[serde(default)]
    pub gram: bool,
}
