use std::hint::black_box;

use carleman_bench::{field, hyperboloid, square};
use carleman_core::bicharflow::integrate;
use carleman_core::carlemanlab::{carleman_ratio, geometric_grid, random_bumps, DiscreteOperator, RatioForm};
use carleman_core::convexity::check_surface_pseudoconvex;
use carleman_core::gaussmult::{apply_multiplier, MultMode, TimeSignal};
use carleman_core::geodist::{distance_field, GridDomain};
use carleman_core::hum::ControlProblem;
use carleman_core::wavesolve::{WaveSolver, WaveState};
use carleman_core::{CheckConfig, Mode, PrincipalSymbol};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn pseudoconvexity(c: &mut Criterion) {
    let m = PrincipalSymbol::minkowski(3);
    let mut g = c.benchmark_group("check_surface");
    g.sample_size(10);
    for samples in [1024usize, 16384] {
        let cfg = CheckConfig { samples, ..CheckConfig::default() };
        for gamma in [0.5, 2.0] {
            let s = hyperboloid(gamma);
            g.bench_with_input(BenchmarkId::new(format!("gamma {gamma}"), samples), &cfg, |b, cfg| {
                b.iter(|| check_surface_pseudoconvex(&m, black_box(&s), Mode::Full, cfg).unwrap())
            });
        }
    }
    g.finish();
}

fn bicharacteristics(c: &mut Criterion) {
    let h = PrincipalSymbol::minkowski(3).to_phase_expr();
    c.bench_function("rk4 1000 steps", |b| b.iter(|| integrate(&h, &[0.0, 0.3, 0.1], &[0.8, -0.4, 0.6], 1.0, 1e-3, None).unwrap()));
}

fn geodesics(c: &mut Criterion) {
    let mut g = c.benchmark_group("distance_field");
    for n in [65usize, 129, 257] {
        let dom = square(n);
        let src = dom.select(|x| x[0] < 0.05);
        g.bench_with_input(BenchmarkId::from_parameter(n), &dom, |b, dom| b.iter(|| distance_field(dom, &src).unwrap()));
    }
    g.finish();
}

fn multiplier(c: &mut Criterion) {
    let u = TimeSignal::sample(-20.0, 0.01, 4001, |t| (-t * t / 2.0).exp() * (3.0 * t).cos()).unwrap();
    let mut g = c.benchmark_group("gaussian_multiplier");
    for (name, mode) in [("spectral", MultMode::Spectral), ("convolution", MultMode::Convolution)] {
        g.bench_function(name, |b| b.iter(|| apply_multiplier(black_box(&u), 0.2, 2.0, mode).unwrap()));
    }
    g.finish();
}

fn wave(c: &mut Criterion) {
    let dom = square(129);
    let solver = WaveSolver::new(dom.clone(), None, None).unwrap();
    let u0: Vec<f64> = (0..dom.len()).map(|i| dom.point(i)).map(|x| (-80.0 * ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2))).exp()).collect();
    let start = solver.state(&u0, &vec![0.0; dom.len()]).unwrap();
    let (dt, _) = solver.stable_dt(1.0, 0.9);
    c.bench_function("leapfrog 129x129 x100", |b| {
        b.iter(|| {
            let mut s = start.clone();
            for _ in 0..100 {
                solver.step_leapfrog(&mut s, dt, None).unwrap();
            }
            s
        })
    });
}

fn carleman(c: &mut Criterion) {
    let op = DiscreteOperator::laplacian(GridDomain::new(vec![(-0.3, 0.3)], vec![241]).unwrap()).unwrap();
    let fam = random_bumps(op.domain(), 50, 0.02, 0.15, 2024);
    let taus = geometric_grid(5.0, 200.0, 24);
    let phi = field("x1 + x1^2", 1);
    c.bench_function("carleman ratio 50x24", |b| b.iter(|| carleman_ratio(&op, &phi, &fam, "bumps", &taus, RatioForm::Weighted).unwrap()));
}

fn gram(c: &mut Criterion) {
    let dom = GridDomain::new(vec![(0.0, 1.0)], vec![101]).unwrap();
    let omega = dom.select(|x| (x[0] - 0.5).abs() <= 0.1);
    let target = WaveState { u: vec![0.0; dom.len()], v: vec![0.0; dom.len()], time: 0.0 };
    let p = ControlProblem::new(WaveSolver::new(dom.clone(), None, None).unwrap(), omega, 1.0, target, 0.1, 0.9).unwrap();
    let mu = vec![1.0; 2 * dom.len()];
    c.bench_function("gram apply n=101 T=1", |b| b.iter(|| p.gram_apply(black_box(&mu)).unwrap()));
}

criterion_group!(benches, pseudoconvexity, bicharacteristics, geodesics, multiplier, wave, carleman, gram);
criterion_main!(benches);
