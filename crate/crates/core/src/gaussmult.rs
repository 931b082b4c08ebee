//! The Gaussian time-frequency multiplier `exp(-eps |D_t|^2 / (2 tau))`, its
//! commutation with `t`, off-support decay of the heat kernel, and the
//! imaginary-axis pairing `<f, v exp(tau phi)>`.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fieldlang::{ExprAst, FieldError};
use crate::geodist::GridDomain;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("signal needs at least 8 samples per slice, got {0}")]
    TooShort(usize),
    #[error("slices have unequal lengths")]
    Ragged,
    #[error("signal contains non-finite samples")]
    NonFinite,
    #[error("padding factor must be at least 2, got {0}")]
    Padding(usize),
    #[error("window supports overlap or touch (gap {0})")]
    Overlap(f64),
    #[error("array has {got} entries, grid has {expected}")]
    Size { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, MultError>;

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(MultError::NonPositive { name, value })
    }
}

/// Real samples on a uniform time grid `t0 + k ht`, one series per spatial slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSignal {
    pub t0: f64,
    pub ht: f64,
    pub slices: Vec<Vec<f64>>,
    /// Zero-padding factor used by the spectral mode.
    pub padding: usize,
}

impl TimeSignal {
    pub fn new(t0: f64, ht: f64, slices: Vec<Vec<f64>>) -> Result<Self> {
        positive("ht", ht)?;
        let n = slices.first().map_or(0, Vec::len);
        if n < 8 {
            return Err(MultError::TooShort(n));
        }
        if slices.iter().any(|s| s.len() != n) {
            return Err(MultError::Ragged);
        }
        if slices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(MultError::NonFinite);
        }
        Ok(Self { t0, ht, slices, padding: 2 })
    }

    /// Single-slice signal sampling `f` at `n` points starting from `t0`.
    pub fn sample(t0: f64, ht: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(t0, ht, vec![(0..n).map(|k| f(t0 + k as f64 * ht)).collect()])
    }

    pub fn with_padding(mut self, p: usize) -> Result<Self> {
        if p < 2 {
            return Err(MultError::Padding(p));
        }
        self.padding = p;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.slices[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.t0 + k as f64 * self.ht).collect()
    }

    /// Discrete `L^2` norm over all slices.
    pub fn norm(&self) -> f64 {
        (self.ht * self.slices.iter().flatten().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn dot(&self, other: &TimeSignal) -> f64 {
        self.ht * self.slices.iter().flatten().zip(other.slices.iter().flatten()).map(|(a, b)| a * b).sum::<f64>()
    }

    fn with_slices(&self, slices: Vec<Vec<f64>>) -> TimeSignal {
        TimeSignal { slices, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MultMode {
    Spectral,
    Convolution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub signal: TimeSignal,
    /// Spectral mode: largest fraction of output energy found in the outer
    /// 10% of the padded window. Zero in convolution mode.
    pub boundary_fraction: f64,
    pub warning: bool,
}

/// Kernel truncation in standard deviations for the convolution mode.
pub const KERNEL_SIGMAS: f64 = 12.0;
const TAPER_FRACTION: f64 = 0.05;
const BOUNDARY_LIMIT: f64 = 1e-8;

struct Spectral {
    n: usize,
    m: usize,
    offset: usize,
    ht: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Spectral {
    fn new(n: usize, padding: usize, ht: f64) -> Self {
        let m = n * padding;
        let mut planner = FftPlanner::new();
        Self { n, m, offset: (m - n) / 2, ht, fwd: planner.plan_fft_forward(m), inv: planner.plan_fft_inverse(m) }
    }

    fn freq(&self, k: usize) -> f64 {
        let kk = if k <= self.m / 2 { k as f64 } else { k as f64 - self.m as f64 };
        2.0 * std::f64::consts::PI * kk / (self.m as f64 * self.ht)
    }

    /// Zero-padded copy with a raised-cosine taper over the outer 5% of the data.
    fn pad(&self, u: &[f64]) -> Vec<Complex64> {
        let taper = ((TAPER_FRACTION * self.n as f64).ceil() as usize).max(1);
        let mut out = vec![Complex64::new(0.0, 0.0); self.m];
        for (k, &v) in u.iter().enumerate() {
            let edge = k.min(self.n - 1 - k);
            let w = if edge < taper { 0.5 * (1.0 - (std::f64::consts::PI * (edge as f64 + 0.5) / taper as f64).cos()) } else { 1.0 };
            out[self.offset + k] = Complex64::new(v * w, 0.0);
        }
        out
    }

    fn forward(&self, buf: &mut [Complex64]) {
        self.fwd.process(buf);
    }

    fn inverse(&self, buf: &mut [Complex64]) {
        self.inv.process(buf);
        let s = 1.0 / self.m as f64;
        buf.iter_mut().for_each(|v| *v *= s);
    }

    fn gauss(&self, buf: &mut [Complex64], sigma2: f64) {
        for (k, v) in buf.iter_mut().enumerate() {
            *v *= (-0.5 * sigma2 * self.freq(k).powi(2)).exp();
        }
    }

    /// `d/dt` in frequency space; the Nyquist mode is dropped.
    fn derivative(&self, buf: &mut [Complex64]) {
        for (k, v) in buf.iter_mut().enumerate() {
            *v *= if 2 * k == self.m { Complex64::new(0.0, 0.0) } else { Complex64::new(0.0, self.freq(k)) };
        }
    }

    fn time(&self, t0: f64, j: usize) -> f64 {
        t0 + (j as f64 - self.offset as f64) * self.ht
    }
}

fn spectral_slice(sp: &Spectral, u: &[f64], sigma2: f64) -> (Vec<f64>, f64) {
    let mut buf = sp.pad(u);
    sp.forward(&mut buf);
    sp.gauss(&mut buf, sigma2);
    sp.inverse(&mut buf);
    let total: f64 = buf.iter().map(|v| v.norm_sqr()).sum();
    let edge = (0.1 * sp.m as f64 / 2.0).ceil() as usize;
    let outer: f64 = buf[..edge].iter().chain(&buf[sp.m - edge..]).map(|v| v.norm_sqr()).sum();
    let frac = if total > 0.0 { outer / total } else { 0.0 };
    (buf[sp.offset..sp.offset + sp.n].iter().map(|v| v.re).collect(), frac)
}

fn gaussian_kernel(sigma2: f64, ht: f64) -> Vec<f64> {
    let half = (KERNEL_SIGMAS * sigma2.sqrt() / ht).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * half)
        .map(|j| {
            let s = (j as f64 - half as f64) * ht;
            (-s * s / (2.0 * sigma2)).exp()
        })
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

fn convolve(u: &[f64], kernel: &[f64]) -> Vec<f64> {
    let half = kernel.len() / 2;
    let n = u.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            (lo..=hi).map(|j| kernel[j + half - i] * u[j]).sum()
        })
        .collect()
}

/// `exp(-eps |D_t|^2 / (2 tau))` applied along time, slice by slice. This is
/// convolution with a Gaussian of variance `eps / tau`.
pub fn apply_multiplier(u: &TimeSignal, eps: f64, tau: f64, mode: MultMode) -> Result<Filtered> {
    positive("eps", eps)?;
    positive("tau", tau)?;
    gaussian_filter(u, eps / tau, mode)
}

/// Convolution with the centered Gaussian of variance `sigma2`.
pub fn gaussian_filter(u: &TimeSignal, sigma2: f64, mode: MultMode) -> Result<Filtered> {
    positive("variance", sigma2)?;
    match mode {
        MultMode::Spectral => {
            let sp = Spectral::new(u.len(), u.padding, u.ht);
            let parts: Vec<(Vec<f64>, f64)> = u.slices.par_iter().map(|s| spectral_slice(&sp, s, sigma2)).collect();
            let boundary_fraction = parts.iter().map(|p| p.1).fold(0.0, f64::max);
            let slices = parts.into_iter().map(|p| p.0).collect();
            Ok(Filtered { signal: u.with_slices(slices), boundary_fraction, warning: boundary_fraction > BOUNDARY_LIMIT })
        }
        MultMode::Convolution => {
            let kernel = gaussian_kernel(sigma2, u.ht);
            let slices = u.slices.par_iter().map(|s| convolve(s, &kernel)).collect();
            Ok(Filtered { signal: u.with_slices(slices), boundary_fraction: 0.0, warning: false })
        }
    }
}

/// `|| Q(t^k u) - (t + (eps/tau) d/dt)^k Q u || / ||u||`, computed spectrally on
/// the padded window.
pub fn commutation_residual_k(u: &TimeSignal, eps: f64, tau: f64, k: u32) -> Result<f64> {
    positive("eps", eps)?;
    positive("tau", tau)?;
    let norm = u.norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let sp = Spectral::new(u.len(), u.padding, u.ht);
    let s2 = eps / tau;
    let sq: f64 = u
        .slices
        .par_iter()
        .map(|s| {
            let base = sp.pad(s);
            let ts: Vec<f64> = (0..sp.m).map(|j| sp.time(u.t0, j)).collect();
            let mut lhs: Vec<Complex64> = base.iter().zip(&ts).map(|(v, t)| v * t.powi(k as i32)).collect();
            sp.forward(&mut lhs);
            sp.gauss(&mut lhs, s2);
            sp.inverse(&mut lhs);
            let mut rhs = base;
            sp.forward(&mut rhs);
            sp.gauss(&mut rhs, s2);
            sp.inverse(&mut rhs);
            for _ in 0..k {
                let mut d = rhs.clone();
                sp.forward(&mut d);
                sp.derivative(&mut d);
                sp.inverse(&mut d);
                rhs = rhs.iter().zip(&d).zip(&ts).map(|((f, df), t)| f * t + df * s2).collect();
            }
            lhs.iter().zip(&rhs).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() * u.ht
        })
        .sum();
    Ok(sq.sqrt() / norm)
}

pub fn commutation_residual(u: &TimeSignal, eps: f64, tau: f64) -> Result<f64> {
    commutation_residual_k(u, eps, tau, 1)
}

/// Indicator of the closed time interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }

    pub fn gap(&self, other: &Window) -> f64 {
        (other.lo - self.hi).max(self.lo - other.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub distance: f64,
    pub points: Vec<(f64, f64)>,
    /// `-slope` of `ln ratio` against `lambda`; `None` if some ratio vanishes.
    pub rate: Option<f64>,
}

/// `|| chi1 exp(-|D_t|^2 / lambda) (chi2 u) || / ||u||` for each `lambda`. The
/// heat kernel (variance `2 / lambda`) is summed directly without truncation,
/// so ratios far below machine epsilon relative to `u` are still resolved.
pub fn decay_ratio(chi1: Window, chi2: Window, u: &TimeSignal, lambdas: &[f64]) -> Result<DecayReport> {
    let distance = chi1.gap(&chi2);
    if !(distance > 0.0) {
        return Err(MultError::Overlap(distance));
    }
    for &l in lambdas {
        positive("lambda", l)?;
    }
    let norm = u.norm();
    let ts = u.times();
    let i1: Vec<usize> = (0..ts.len()).filter(|&i| chi1.contains(ts[i])).collect();
    let i2: Vec<usize> = (0..ts.len()).filter(|&i| chi2.contains(ts[i])).collect();
    let points: Vec<(f64, f64)> = lambdas
        .par_iter()
        .map(|&lambda| {
            if norm == 0.0 {
                return (lambda, 0.0);
            }
            let s2 = 2.0 / lambda;
            let c = u.ht / (2.0 * std::f64::consts::PI * s2).sqrt();
            let mut sq = 0.0;
            for s in &u.slices {
                for &i in &i1 {
                    let v: f64 = i2.iter().map(|&j| (-(ts[i] - ts[j]).powi(2) / (2.0 * s2)).exp() * s[j]).sum::<f64>() * c;
                    sq += v * v;
                }
            }
            (lambda, (sq * u.ht).sqrt() / norm)
        })
        .collect();
    let rate = if points.iter().all(|p| p.1 > 0.0) {
        let (x, y): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
        crate::fit::exponential_rate(&x, &y)
    } else {
        None
    };
    Ok(DecayReport { distance, points, rate })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HfPoint {
    pub tau: f64,
    /// `<f, v exp(tau phi)>` by the rectangle rule.
    pub pairing: f64,
    /// `sup exp(eps xi_t^2 / (2 tau))` over the time band of `f`.
    pub multiplier_sup: f64,
    pub f_norm: f64,
    pub q_norm: f64,
    pub bound: f64,
}

/// Imaginary-axis quantities for `h_f`: the pairing and the product bound
/// `sup_band exp(eps xi^2 / 2tau) ||f|| ||Q v||` with `Q` the weighted
/// multiplier. Axis 0 of `dom` is time; `phi` is a field over the grid coordinates.
pub fn hf_imaginary_axis(dom: &GridDomain, v: &[f64], f: &[f64], phi: &ExprAst, eps: f64, taus: &[f64]) -> Result<Vec<HfPoint>> {
    positive("eps", eps)?;
    for a in [v, f] {
        if a.len() != dom.len() {
            return Err(MultError::Size { expected: dom.len(), got: a.len() });
        }
    }
    let h = dom.spacing();
    let cell: f64 = h.iter().product();
    let nt = dom.shape()[0];
    let lines = dom.len() / nt;
    let phis: Vec<f64> = (0..dom.len()).map(|i| phi.eval(&dom.point(i))).collect::<std::result::Result<_, _>>()?;
    let t0 = dom.bounds()[0].0;
    let column = |a: &[f64], line: usize| -> Vec<f64> { (0..nt).map(|k| a[k * lines + line]).collect() };

    // Highest time frequency carried by f (relative threshold 1e-12).
    let sp = Spectral::new(nt, 2, h[0]);
    let mut band = 0.0f64;
    let mut peak = 0.0f64;
    let spectra: Vec<Vec<Complex64>> = (0..lines)
        .map(|line| {
            let mut buf = vec![Complex64::new(0.0, 0.0); sp.m];
            for (k, x) in column(f, line).into_iter().enumerate() {
                buf[sp.offset + k] = Complex64::new(x, 0.0);
            }
            sp.forward(&mut buf);
            buf
        })
        .collect();
    for s in &spectra {
        peak = s.iter().map(|c| c.norm()).fold(peak, f64::max);
    }
    for s in &spectra {
        for (k, c) in s.iter().enumerate() {
            if c.norm() > 1e-12 * peak {
                band = band.max(sp.freq(k).abs());
            }
        }
    }
    let f_norm = (cell * f.iter().map(|x| x * x).sum::<f64>()).sqrt();

    taus.iter()
        .map(|&tau| {
            positive("tau", tau)?;
            let weighted: Vec<f64> = v.iter().zip(&phis).map(|(a, p)| a * (tau * p).exp()).collect();
            let pairing = cell * f.iter().zip(&weighted).map(|(a, b)| a * b).sum::<f64>();
            let signal = TimeSignal::new(t0, h[0], (0..lines).map(|l| column(&weighted, l)).collect())?;
            let q = apply_multiplier(&signal, eps, tau, MultMode::Spectral)?.signal;
            let q_norm = (cell / h[0]).sqrt() * q.norm();
            let multiplier_sup = (eps * band * band / (2.0 * tau)).exp();
            Ok(HfPoint { tau, pairing, multiplier_sup, f_norm, q_norm, bound: multiplier_sup * f_norm * q_norm })
        })
        .collect()
}
