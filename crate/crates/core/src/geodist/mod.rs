//! Riemannian distances on uniform grids, sup-distances between sets, the
//! region of dependence, and the noncharacteristic sweep near a path.

mod io;
pub mod sweep;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fieldlang::{ExprAst, FieldError};

pub use io::{GridArray, IoError};
pub use sweep::{build_sweep, SweepConfig, SweepFamily, SweepReport, SweepWitness, ZetaCheck, ZetaProfile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("dimension must be 1, 2 or 3, got {0}")]
    BadDimension(usize),
    #[error("axis {axis}: need max > min and at least two points")]
    BadAxis { axis: usize },
    #[error("mask has {got} entries, grid has {expected}")]
    MaskSize { expected: usize, got: usize },
    #[error("metric must be a symmetric {0}x{0} matrix of fields over the space variables")]
    MetricShape(usize),
    #[error("metric is not positive definite at grid index {index} (smallest eigenvalue {min_eig:e})")]
    NotPositiveDefinite { index: usize, min_eig: f64 },
    #[error("source set is empty inside the mask")]
    EmptySet,
    #[error("time horizon must be positive, got {0}")]
    BadHorizon(f64),
    #[error("stencil radius must be at least 1")]
    BadStencil,
    #[error("sweep family: {0}")]
    Family(String),
}

pub type Result<T> = std::result::Result<T, GeoError>;

/// Uniform tensor grid over a box, with an optional Riemannian metric and a
/// mask selecting the points that belong to the manifold. Row-major layout:
/// the last axis varies fastest.
#[derive(Debug, Clone)]
pub struct GridDomain {
    bounds: Vec<(f64, f64)>,
    n: Vec<usize>,
    mask: Vec<bool>,
    /// Upper-triangle metric samples per grid point; `None` is the identity.
    metric: Option<Vec<Vec<f64>>>,
    stencil: usize,
}

impl GridDomain {
    pub fn new(bounds: Vec<(f64, f64)>, n: Vec<usize>) -> Result<Self> {
        let d = bounds.len();
        if !(1..=3).contains(&d) || n.len() != d {
            return Err(GeoError::BadDimension(d));
        }
        for (axis, (&(lo, hi), &k)) in bounds.iter().zip(&n).enumerate() {
            if !(hi > lo) || k < 2 || !lo.is_finite() || !hi.is_finite() {
                return Err(GeoError::BadAxis { axis });
            }
        }
        let total = n.iter().product();
        Ok(Self { bounds, n, mask: vec![true; total], metric: None, stencil: 1 })
    }

    /// Replaces the mask.
    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.len() {
            return Err(GeoError::MaskSize { expected: self.len(), got: mask.len() });
        }
        self.mask = mask;
        self.check_metric()?;
        Ok(self)
    }

    /// Sets the metric `g_ij(x)`; fields use the space convention.
    pub fn with_metric(mut self, g: &[Vec<ExprAst>]) -> Result<Self> {
        let d = self.dim();
        if g.len() != d || g.iter().any(|r| r.len() != d) {
            return Err(GeoError::MetricShape(d));
        }
        let mut samples = Vec::with_capacity(self.len());
        for idx in 0..self.len() {
            let x = self.point(idx);
            let mut upper = Vec::with_capacity(d * (d + 1) / 2);
            for i in 0..d {
                for j in i..d {
                    if g[i][j].dim() != d {
                        return Err(GeoError::MetricShape(d));
                    }
                    let v = g[i][j].eval(&x)?;
                    if i != j && (v - g[j][i].eval(&x)?).abs() > 1e-12 * (1.0 + v.abs()) {
                        return Err(GeoError::MetricShape(d));
                    }
                    upper.push(v);
                }
            }
            samples.push(upper);
        }
        self.metric = Some(samples);
        self.check_metric()?;
        Ok(self)
    }

    /// Neighborhood order: radius 1 is the 2/8/26-neighbor stencil, larger
    /// radii add every primitive lattice direction of sup-norm at most `r`.
    pub fn with_stencil(mut self, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(GeoError::BadStencil);
        }
        self.stencil = r;
        Ok(self)
    }

    fn check_metric(&self) -> Result<()> {
        let Some(samples) = &self.metric else { return Ok(()) };
        let d = self.dim();
        for (index, up) in samples.iter().enumerate() {
            if !self.mask[index] {
                continue;
            }
            let m = DMatrix::from_fn(d, d, |i, j| up[tri(i.min(j), i.max(j), d)]);
            let min_eig = m.symmetric_eigenvalues().min();
            if !(min_eig > 0.0) {
                return Err(GeoError::NotPositiveDefinite { index, min_eig });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn shape(&self) -> &[usize] {
        &self.n
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.bounds.iter().zip(&self.n).map(|(&(lo, hi), &k)| (hi - lo) / (k - 1) as f64).collect()
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            out[a] = idx % self.n[a];
            idx /= self.n[a];
        }
        out
    }

    pub fn flat_index(&self, m: &[usize]) -> usize {
        m.iter().zip(&self.n).fold(0, |acc, (&i, &k)| acc * k + i)
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        let h = self.spacing();
        self.multi_index(idx).iter().enumerate().map(|(a, &i)| self.bounds[a].0 + i as f64 * h[a]).collect()
    }

    /// Grid point closest to `x` (clamped to the box).
    pub fn nearest(&self, x: &[f64]) -> usize {
        let h = self.spacing();
        let m: Vec<usize> = (0..self.dim())
            .map(|a| (((x[a] - self.bounds[a].0) / h[a]).round().max(0.0) as usize).min(self.n[a] - 1))
            .collect();
        self.flat_index(&m)
    }

    /// Mask of the points where `f` holds.
    pub fn select(&self, f: impl Fn(&[f64]) -> bool) -> Vec<bool> {
        (0..self.len()).map(|i| f(&self.point(i))).collect()
    }

    fn offsets(&self) -> Vec<Vec<isize>> {
        let d = self.dim();
        let r = self.stencil as isize;
        let side = (2 * r + 1) as usize;
        let mut out = Vec::new();
        for code in 0..side.pow(d as u32) {
            let mut c = code;
            let v: Vec<isize> = (0..d)
                .map(|_| {
                    let k = (c % side) as isize - r;
                    c /= side;
                    k
                })
                .collect();
            let g = v.iter().fold(0usize, |g, &k| gcd(g, k.unsigned_abs()));
            if g == 1 {
                out.push(v);
            }
        }
        out
    }

    fn edge_length(&self, a: usize, b: usize, disp: &[f64]) -> f64 {
        match &self.metric {
            None => disp.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Some(g) => {
                let d = self.dim();
                let mut q = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        let k = tri(i.min(j), i.max(j), d);
                        q += 0.5 * (g[a][k] + g[b][k]) * disp[i] * disp[j];
                    }
                }
                q.sqrt()
            }
        }
    }
}

fn tri(i: usize, j: usize, d: usize) -> usize {
    i * d - i * (i + 1) / 2 + j
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Distances to a source set. Points outside the mask, and masked points not
/// connected to the source, hold `+inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceField {
    pub values: Vec<f64>,
    /// Number of masked points that could not be reached.
    pub unreachable: usize,
}

#[derive(Clone, Copy, PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra over the lattice graph of `dom`, seeded with every masked point of `e0`.
pub fn distance_field(dom: &GridDomain, e0: &[bool]) -> Result<DistanceField> {
    if e0.len() != dom.len() {
        return Err(GeoError::MaskSize { expected: dom.len(), got: e0.len() });
    }
    let d = dom.dim();
    let h = dom.spacing();
    let offsets = dom.offsets();
    let disp: Vec<Vec<f64>> = offsets.iter().map(|o| o.iter().zip(&h).map(|(&k, &s)| k as f64 * s).collect()).collect();
    let mut dist = vec![f64::INFINITY; dom.len()];
    let mut done = vec![false; dom.len()];
    let mut heap = BinaryHeap::new();
    for i in 0..dom.len() {
        if e0[i] && dom.mask[i] {
            dist[i] = 0.0;
            heap.push(Item(0.0, i));
        }
    }
    if heap.is_empty() {
        return Err(GeoError::EmptySet);
    }
    let shape: Vec<isize> = dom.n.iter().map(|&k| k as isize).collect();
    let mut m = vec![0isize; d];
    while let Some(Item(du, u)) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        let base = dom.multi_index(u);
        'edges: for (o, dv) in offsets.iter().zip(&disp) {
            for a in 0..d {
                m[a] = base[a] as isize + o[a];
                if m[a] < 0 || m[a] >= shape[a] {
                    continue 'edges;
                }
            }
            let v = m.iter().zip(&dom.n).fold(0usize, |acc, (&i, &k)| acc * k + i as usize);
            if done[v] || !dom.mask[v] {
                continue;
            }
            let cand = du + dom.edge_length(u, v, dv);
            if cand < dist[v] {
                dist[v] = cand;
                heap.push(Item(cand, v));
            }
        }
    }
    let unreachable = (0..dom.len()).filter(|&i| dom.mask[i] && !dist[i].is_finite()).count();
    Ok(DistanceField { values: dist, unreachable })
}

/// `sup_{x in E1} dist(x, E0)`.
pub fn sup_distance(dom: &GridDomain, e1: &[bool], e0: &[bool]) -> Result<f64> {
    if e1.len() != dom.len() {
        return Err(GeoError::MaskSize { expected: dom.len(), got: e1.len() });
    }
    if !e1.iter().zip(&dom.mask).any(|(&a, &b)| a && b) {
        return Err(GeoError::EmptySet);
    }
    let field = distance_field(dom, e0)?;
    Ok((0..dom.len()).filter(|&i| e1[i] && dom.mask[i]).map(|i| field.values[i]).fold(0.0, f64::max))
}

/// For each time in `t_samples`, the mask `{x : dist(x, omega) < T - |t|}`.
pub fn region_of_dependence(dom: &GridDomain, omega: &[bool], horizon: f64, t_samples: &[f64]) -> Result<Vec<Vec<bool>>> {
    if !(horizon > 0.0) {
        return Err(GeoError::BadHorizon(horizon));
    }
    let field = distance_field(dom, omega)?;
    Ok(t_samples
        .iter()
        .map(|t| {
            let r = horizon - t.abs();
            field.values.iter().map(|&v| v < r).collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldlang::parse;
    use proptest::prelude::*;

    fn square(n: usize) -> GridDomain {
        GridDomain::new(vec![(0.0, 1.0); 2], vec![n, n]).unwrap()
    }

    fn single(dom: &GridDomain, x: &[f64]) -> Vec<bool> {
        let mut m = vec![false; dom.len()];
        m[dom.nearest(x)] = true;
        m
    }

    fn max_rel_error_from_origin(dom: &GridDomain) -> f64 {
        let f = distance_field(dom, &single(dom, &vec![0.0; dom.dim()])).unwrap();
        (0..dom.len())
            .filter_map(|i| {
                let r = dom.point(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                (r > 0.0).then(|| (f.values[i] - r) / r)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn diagonal_of_square() {
        let dom = square(101);
        let f = distance_field(&dom, &single(&dom, &[0.0, 0.0])).unwrap();
        let v = f.values[dom.nearest(&[1.0, 1.0])];
        let s = 2f64.sqrt();
        assert!(v >= s - 1e-12 && v <= s * 1.09);
    }

    #[test]
    fn lattice_bound_2d() {
        // Worst direction of the 8-neighbor stencil: sqrt(4 - 2 sqrt 2) - 1.
        let bound = (4.0 - 2.0 * 2f64.sqrt()).sqrt() - 1.0;
        let e = max_rel_error_from_origin(&square(81));
        assert!(e <= 0.083 && e <= bound + 1e-12, "{e}");
        assert!(e > 0.07);
    }

    #[test]
    fn lattice_bound_3d_and_enrichment() {
        let dom = GridDomain::new(vec![(0.0, 1.0); 3], vec![31; 3]).unwrap();
        let bound = (1.0 + (2f64.sqrt() - 1.0).powi(2) + (3f64.sqrt() - 2f64.sqrt()).powi(2)).sqrt() - 1.0;
        let e1 = max_rel_error_from_origin(&dom);
        assert!(e1 <= bound + 1e-12, "{e1} vs {bound}");
        let e2 = max_rel_error_from_origin(&dom.clone().with_stencil(2).unwrap());
        let e3 = max_rel_error_from_origin(&dom.with_stencil(3).unwrap());
        assert!(e2 <= 0.09, "{e2}");
        assert!(e3 < e2 && e2 < e1);
    }

    #[test]
    fn enrichment_in_2d_converges() {
        let errs: Vec<f64> = (1..=4).map(|r| max_rel_error_from_origin(&square(61).with_stencil(r).unwrap())).collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
        assert!(errs[3] < 0.01);
    }

    #[test]
    fn one_dimensional_is_exact() {
        let dom = GridDomain::new(vec![(0.0, 2.0)], vec![201]).unwrap();
        let e0 = dom.select(|x| (x[0] - 0.5).abs() < 1e-9 || (x[0] - 1.7).abs() < 1e-9);
        let f = distance_field(&dom, &e0).unwrap();
        for i in 0..dom.len() {
            let x = dom.point(i)[0];
            let exact = (x - 0.5).abs().min((x - 1.7).abs());
            assert!((f.values[i] - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn whole_domain_source() {
        let dom = square(11);
        let f = distance_field(&dom, &vec![true; dom.len()]).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conformal_metric_scales_distance() {
        let dom = square(41);
        let four = parse("4", 2).unwrap();
        let zero = parse("0", 2).unwrap();
        let g = vec![vec![four.clone(), zero.clone()], vec![zero, four]];
        let scaled = dom.clone().with_metric(&g).unwrap();
        let e0 = single(&dom, &[0.0, 0.0]);
        let a = distance_field(&dom, &e0).unwrap();
        let b = distance_field(&scaled, &e0).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((2.0 * x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_metric_rejected() {
        let g = vec![vec![parse("1", 2).unwrap(), parse("0", 2).unwrap()], vec![parse("0", 2).unwrap(), parse("x1 - 0.5", 2).unwrap()]];
        assert!(matches!(square(11).with_metric(&g), Err(GeoError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn disconnected_components_flagged() {
        let dom = square(21);
        let mask = dom.select(|x| (x[0] - 0.5).abs() > 0.2);
        let dom = dom.with_mask(mask).unwrap();
        let f = distance_field(&dom, &single(&dom, &[0.0, 0.0])).unwrap();
        assert!(f.unreachable > 0);
        assert!(f.values[dom.nearest(&[1.0, 1.0])].is_infinite());
    }

    #[test]
    fn empty_source_is_error() {
        let dom = square(5);
        assert_eq!(distance_field(&dom, &[false; 25]), Err(GeoError::EmptySet));
    }

    #[test]
    fn sup_distance_cases() {
        let dom = square(51);
        let left = dom.select(|x| x[0] == 0.0);
        assert_eq!(sup_distance(&dom, &left, &left).unwrap(), 0.0);
        let all = vec![true; dom.len()];
        let l = sup_distance(&dom, &all, &left).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        let p = single(&dom, &[0.0, 0.0]);
        let two = dom.select(|x| (x[0] == 0.0 && x[1] == 0.0) || (x[0] == 1.0 && x[1] == 0.0));
        let a = sup_distance(&dom, &two, &p).unwrap();
        let b = sup_distance(&dom, &p, &two).unwrap();
        assert!((a - 1.0).abs() < 1e-12 && b == 0.0);
    }

    #[test]
    fn region_of_dependence_slices() {
        let dom = square(41);
        let omega = single(&dom, &[0.5, 0.5]);
        let ts = [0.0, 0.1, -0.2, 0.3, 0.5, 0.7];
        let r = region_of_dependence(&dom, &omega, 0.5, &ts).unwrap();
        let f = distance_field(&dom, &omega).unwrap();
        assert!(r[0].iter().zip(&f.values).all(|(&m, &v)| m == (v < 0.5)));
        assert!(r[4].iter().all(|&m| !m) && r[5].iter().all(|&m| !m));
        for (a, b) in [(0, 1), (1, 2), (2, 3), (3, 4)] {
            assert!(r[b].iter().zip(&r[a]).all(|(&inner, &outer)| !inner || outer));
        }
        assert_eq!(region_of_dependence(&dom, &omega, 0.0, &ts), Err(GeoError::BadHorizon(0.0)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn adding_sources_never_increases(a in 0usize..441, b in 0usize..441) {
            let dom = square(21);
            let mut e0 = vec![false; dom.len()];
            e0[a] = true;
            let before = distance_field(&dom, &e0).unwrap();
            e0[b] = true;
            let after = distance_field(&dom, &e0).unwrap();
            prop_assert!(after.values.iter().zip(&before.values).all(|(x, y)| x <= y));
            prop_assert_eq!(after.values[a], 0.0);
            prop_assert_eq!(after.values[b], 0.0);
        }

        #[test]
        fn zero_sup_distance_iff_subset(a in 0usize..121, b in 0usize..121, c in 0usize..121) {
            let dom = square(11);
            let mut e0 = vec![false; dom.len()];
            e0[a] = true;
            e0[b] = true;
            let mut e1 = vec![false; dom.len()];
            e1[c] = true;
            let l = sup_distance(&dom, &e1, &e0).unwrap();
            prop_assert_eq!(l == 0.0, c == a || c == b);
        }
    }
}
