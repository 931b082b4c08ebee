//! Flows that cross module boundaries.

use carleman_core::bicharflow::integrate;
use carleman_core::carlemanlab::{carleman_ratio, geometric_grid, random_bumps, DiscreteOperator, RatioForm};
use carleman_core::convexity::{check_function_pseudoconvex, check_surface_pseudoconvex, convexify_analytic};
use carleman_core::geodist::{distance_field, sup_distance, GridArray, GridDomain};
use carleman_core::hum::{ControlConfig, ControlProblem};
use carleman_core::wavesolve::{WaveSolver, WaveState};
use carleman_core::{parse, parse_with, CheckConfig, Hypersurface, Mode, PrincipalSymbol, VarConvention};

#[test]
fn distance_field_survives_binary_roundtrip() {
    let dom = GridDomain::new(vec![(-1.0, 1.0), (0.0, 2.0)], vec![33, 17]).unwrap();
    let src = dom.select(|x| x[0] < -0.9);
    let field = distance_field(&dom, &src).unwrap();
    let arr = GridArray::from_field(&dom, field.values.clone());
    let back = GridArray::read_from(&mut arr.to_bytes().as_slice()).unwrap();
    assert_eq!(back, arr);
    let csv = arr.to_csv().unwrap();
    assert_eq!(csv.lines().count(), 1 + dom.len());
}

#[test]
fn analytic_weight_is_pseudoconvex_as_a_function() {
    let m = PrincipalSymbol::minkowski(3);
    let psi = parse_with("x1^2 + x2^2 - 0.25*t^2 - 1", 3, VarConvention::SpaceTime).unwrap();
    let s = Hypersurface::new(psi, vec![0.0, 1.0, 0.0]).unwrap();
    let cfg = CheckConfig::default();
    assert!(check_surface_pseudoconvex(&m, &s, Mode::Full, &cfg).unwrap().report.passed());
    let a = convexify_analytic(&m, &s, Mode::Full, &cfg).unwrap();
    let r = check_function_pseudoconvex(&m, &a.weight, &s.base_point, Mode::Full, &cfg).unwrap();
    assert!(r.report.passed());
}

#[test]
fn null_bicharacteristics_travel_at_unit_speed() {
    // The wave solver and the Hamiltonian flow share the same propagation speed.
    let h = PrincipalSymbol::minkowski(2).to_phase_expr();
    let traj = integrate(&h, &[0.0, 0.0], &[-1.0, 1.0], 0.5, 1e-3, None).unwrap();
    let last = traj.samples.last().unwrap();
    assert!((last.x[1].abs() / last.x[0].abs() - 1.0).abs() < 1e-10);

    let dom = GridDomain::new(vec![(-2.0, 2.0)], vec![801]).unwrap();
    let solver = WaveSolver::new(dom.clone(), None, None).unwrap();
    let u0: Vec<f64> = (0..dom.len()).map(|i| (-200.0 * dom.point(i)[0].powi(2)).exp()).collect();
    let mut s = solver.state(&u0, &vec![0.0; dom.len()]).unwrap();
    let (dt, k) = solver.stable_dt(1.0, 0.9);
    for _ in 0..k {
        solver.step_leapfrog(&mut s, dt, None).unwrap();
    }
    let right = (0..dom.len()).filter(|&i| dom.point(i)[0] > 0.0).max_by(|&a, &b| s.u[a].total_cmp(&s.u[b])).unwrap();
    assert!((dom.point(right)[0] - 1.0).abs() < 0.02);
}

#[test]
fn geodesic_radius_sets_the_control_horizon() {
    let dom = GridDomain::new(vec![(0.0, 1.0)], vec![41]).unwrap();
    let omega = dom.select(|x| (x[0] - 0.5).abs() <= 0.1);
    let l = sup_distance(&dom, &vec![true; dom.len()], &omega).unwrap();
    assert!((l - 0.4).abs() < 0.03, "{l}");
    let target = WaveState { u: (0..dom.len()).map(|i| (-100.0 * (dom.point(i)[0] - 0.2).powi(2)).exp()).collect(), v: vec![0.0; dom.len()], time: 0.0 };
    let solver = WaveSolver::new(dom, None, None).unwrap();
    let p = ControlProblem::new(solver, omega, 2.5 * l, target, 0.1, 0.9).unwrap();
    let r = p.compute_control(&ControlConfig::default()).unwrap();
    assert!(r.achieved_error <= 0.1 * r.target_norm * 1.0001);
    let reached = p.apply_ft(&r.f).unwrap();
    let sub = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
    let miss = WaveState { u: sub(&reached.u, &p.target.u), v: sub(&reached.v, &p.target.v), time: 0.0 };
    assert!((p.state_norm(&miss) - r.achieved_error).abs() <= 1e-8 * r.target_norm);
}

#[test]
fn carleman_curve_exports_every_tau() {
    let op = DiscreteOperator::laplacian(GridDomain::new(vec![(-0.3, 0.3)], vec![121]).unwrap()).unwrap();
    let fam = random_bumps(op.domain(), 8, 0.04, 0.12, 11);
    let taus = geometric_grid(2.0, 50.0, 6);
    let r = carleman_ratio(&op, &parse("x1 + x1^2", 1).unwrap(), &fam, "bumps", &taus, RatioForm::Conjugated).unwrap();
    let csv = r.to_csv();
    assert_eq!(csv.lines().count(), 1 + taus.len());
    assert!(csv.starts_with("tau,ratio\n"));
}
