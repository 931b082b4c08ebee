//! One runner per scenario kind. Each validates its inputs first (schema
//! errors), then computes (runtime errors) and writes artifacts.

use std::path::Path;

use carleman_core::bicharflow::{classify_tangency, integrate_span};
use carleman_core::carlemanlab::{carleman_ratio, carleman_ratio_unrestricted, geometric_grid, random_bumps, tau_max_admissible, DiscreteOperator, RatioForm};
use carleman_core::convexity::{
    check_surface_pseudoconvex, convexify_analytic, convexify_geometric, rescaled_surface, subellipticity_constants, GeometricVariant,
};
use carleman_core::fit::linear_fit;
use carleman_core::gaussmult::{apply_multiplier, commutation_residual, MultMode, TimeSignal};
use carleman_core::geodist::{build_sweep, distance_field, sup_distance, GridArray, GridDomain, SweepConfig, SweepFamily};
use carleman_core::hum::{cost_csv, cost_curve, ControlConfig, ControlProblem};
use carleman_core::wavesolve::{WaveSolver, WaveState};
use carleman_core::{parse_with, CheckConfig, ExprAst, Hypersurface, Mode, PrincipalSymbol, VarConvention};
use serde_json::{json, Value};

use crate::scenario::*;
use crate::svg::{line_plot, Series};
use crate::{runtime, schema, CliError, Outcome};

type Res<T> = Result<T, CliError>;

pub fn dispatch(kind: Kind, sc: &Scenario, seed: u64, out: &Path) -> Res<Outcome> {
    match kind {
        Kind::CheckSurface => check_surface(sc, out),
        Kind::Convexify => convexify(sc, out),
        Kind::Flow => flow(sc, out),
        Kind::Distance => distance(sc, out),
        Kind::Sweep => sweep(sc, out),
        Kind::Multiplier => multiplier(sc, out),
        Kind::Simulate => simulate(sc, out),
        Kind::CarlemanRatio => carleman(sc, seed, out),
        Kind::Control => control(sc, out),
    }
}

fn need<'a, T>(section: &'a Option<T>, name: &str) -> Res<&'a T> {
    section.as_ref().ok_or_else(|| CliError::Schema(format!("missing section [{name}]")))
}

fn expr(source: &str, dim: usize, conv: VarConvention, what: &str) -> Res<ExprAst> {
    parse_with(source, dim, conv).map_err(|e| schema(what, e))
}

fn to_json<T: serde::Serialize>(v: &T) -> Res<Value> {
    serde_json::to_value(v).map_err(|e| runtime("serialize", e))
}

fn write(out: &Path, name: &str, data: &[u8], artifacts: &mut Vec<String>) -> Res<()> {
    std::fs::write(out.join(name), data).map_err(|e| runtime(name, e))?;
    artifacts.push(name.to_string());
    Ok(())
}

fn positive(v: f64, what: &str) -> Res<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Schema(format!("{what} must be positive, got {v}")))
    }
}

struct Op {
    symbol: PrincipalSymbol,
    conv: VarConvention,
    mode: Mode,
}

fn operator(spec: &OperatorSpec) -> Res<Op> {
    let mode = match spec.mode {
        ModeSpec::Full => Mode::Full,
        ModeSpec::Xit0 => Mode::Xit0,
    };
    let given = [spec.preset.is_some(), spec.matrix.is_some(), spec.wave_type.is_some()].iter().filter(|&&b| b).count();
    if given != 1 {
        return Err(CliError::Schema("[operator] needs exactly one of `preset`, `matrix`, `wave_type`".into()));
    }
    if let Some(p) = spec.preset {
        let dim = spec.dim.ok_or_else(|| CliError::Schema("[operator] preset needs `dim`".into()))?;
        if dim == 0 || (p == Preset::Minkowski && dim < 2) {
            return Err(CliError::Schema(format!("[operator] dim = {dim} is too small")));
        }
        return Ok(match p {
            Preset::Minkowski => Op { symbol: PrincipalSymbol::minkowski(dim), conv: VarConvention::SpaceTime, mode },
            Preset::Laplacian => Op { symbol: PrincipalSymbol::laplacian(dim), conv: VarConvention::Space, mode },
        });
    }
    if let Some(m) = &spec.matrix {
        let symbol = PrincipalSymbol::parse_matrix(m, spec.includes_time).map_err(|e| schema("operator.matrix", e))?;
        let conv = if spec.includes_time { VarConvention::SpaceTime } else { VarConvention::Space };
        return Ok(Op { symbol, conv, mode });
    }
    let block = spec.wave_type.as_ref().expect("counted above");
    let n = block.len() + 1;
    let rows = block
        .iter()
        .map(|r| {
            if r.len() != block.len() {
                return Err(CliError::Schema("operator.wave_type must be square".into()));
            }
            r.iter().map(|s| expr(s, n, VarConvention::SpaceTime, "operator.wave_type")).collect()
        })
        .collect::<Res<Vec<Vec<ExprAst>>>>()?;
    let symbol = PrincipalSymbol::wave_type(rows).map_err(|e| schema("operator.wave_type", e))?;
    Ok(Op { symbol, conv: VarConvention::SpaceTime, mode })
}

fn surface(spec: &SurfaceSpec, op: &Op) -> Res<Hypersurface> {
    let n = op.symbol.dim();
    if spec.base_point.len() != n {
        return Err(CliError::Schema(format!("surface.base_point has {} entries, operator has dimension {n}", spec.base_point.len())));
    }
    let psi = expr(&spec.psi, n, op.conv, "surface.psi")?;
    let mut s = Hypersurface::new(psi, spec.base_point.clone()).map_err(|e| schema("surface", e))?;
    if let Some(h) = &spec.rescale {
        let h = expr(h, n, op.conv, "surface.rescale")?;
        let hv = h.eval(&s.base_point).map_err(|e| schema("surface.rescale", e))?;
        if !(hv > 0.0) {
            return Err(CliError::Schema(format!("surface.rescale must be positive, is {hv} at the base point")));
        }
        s = rescaled_surface(&s, &h).map_err(|e| schema("surface.rescale", e))?;
    }
    if spec.reversed {
        s = s.reversed();
    }
    Ok(s)
}

fn check_config(spec: Option<&CheckSpec>) -> Res<CheckConfig> {
    let mut cfg = CheckConfig::default();
    if let Some(c) = spec {
        if c.samples < 16 {
            return Err(CliError::Schema(format!("check.samples = {} is below 16", c.samples)));
        }
        positive(c.delta, "check.delta")?;
        cfg.samples = c.samples;
        cfg.delta = c.delta;
    }
    Ok(cfg)
}

fn check_surface(sc: &Scenario, out: &Path) -> Res<Outcome> {
    let op = operator(need(&sc.operator, "operator")?)?;
    let s = surface(need(&sc.surface, "surface")?, &op)?;
    let cfg = check_config(sc.check.as_ref())?;
    let r = check_surface_pseudoconvex(&op.symbol, &s, op.mode, &cfg).map_err(|e| runtime("check-surface", e))?;
    let _ = out;
    Ok(Outcome { verdict: Some(r.report.passed()), details: to_json(&r)?, artifacts: vec![] })
}

fn convexify(sc: &Scenario, out: &Path) -> Res<Outcome> {
    let op = operator(need(&sc.operator, "operator")?)?;
    let s = surface(need(&sc.surface, "surface")?, &op)?;
    let cfg = check_config(sc.check.as_ref())?;
    let spec = sc.convexify.clone().unwrap_or(ConvexifySpec { geometric: None, subellipticity: false });
    let _ = out;
    let a = match convexify_analytic(&op.symbol, &s, op.mode, &cfg) {
        Ok(a) => a,
        // A surface that is not pseudoconvex cannot be convexified; that is a verdict, not a crash.
        Err(carleman_core::convexity::ConvexityError::Precondition(m)) => {
            return Ok(Outcome { verdict: Some(false), details: json!({ "analytic": null, "reason": m }), artifacts: vec![] });
        }
        Err(e) => return Err(runtime("convexify", e)),
    };
    let mut details = json!({
        "lambda0": a.lambda0,
        "weight": a.weight.to_string(),
        "identity_residual": a.identity_residual,
        "trace": a.trace,
        "report": to_json(&a.report)?,
    });
    let mut ok = a.report.report.passed() && a.identity_residual <= 1e-8;
    if let Some(g) = spec.geometric {
        let one = carleman_core::ExprAst::constant(1.0, op.symbol.dim(), op.conv);
        let phi = a.weight.sub(&one);
        let variant = match g {
            GeometricSpec::Shift => GeometricVariant::Shift,
            GeometricSpec::Quadratic => GeometricVariant::Quadratic,
        };
        let r = convexify_geometric(&phi, &s.base_point, &op.symbol, variant, op.mode, &cfg).map_err(|e| runtime("convexify.geometric", e))?;
        ok &= r.report.report.passed();
        details["geometric"] = json!({ "field": r.field.to_string(), "eps": r.eps, "r0": r.r0, "taylor_residual": r.taylor_residual });
    }
    if spec.subellipticity {
        let r = subellipticity_constants(&op.symbol, &a.weight, &s.base_point, &cfg).map_err(|e| runtime("subellipticity", e))?;
        ok &= r.passed();
        details["subellipticity"] = to_json(&r)?;
    }
    Ok(Outcome { verdict: Some(ok), details, artifacts: vec![] })
}

fn flow(sc: &Scenario, out: &Path) -> Res<Outcome> {
    let op = operator(need(&sc.operator, "operator")?)?;
    let f = need(&sc.flow, "flow")?;
    let n = op.symbol.dim();
    if f.x0.len() != n || f.xi0.len() != n {
        return Err(CliError::Schema(format!("flow.x0 and flow.xi0 need {n} entries")));
    }
    positive(f.step, "flow.step")?;
    if !(f.s_min <= 0.0 && f.s_max >= 0.0 && f.s_max > f.s_min) {
        return Err(CliError::Schema("flow needs s_min <= 0 <= s_max with s_min < s_max".into()));
    }
    let bounds: Option<Vec<(f64, f64)>> = f.bounds.as_ref().map(|b| b.iter().map(|p| (p[0], p[1])).collect());
    let surf = if f.tangency { Some(surface(need(&sc.surface, "surface")?, &op)?) } else { None };
    let h = op.symbol.to_phase_expr();
    let traj = integrate_span(&h, &f.x0, &f.xi0, f.s_min, f.s_max, f.step, bounds.as_deref()).map_err(|e| runtime("flow", e))?;
    let mut artifacts = Vec::new();
    write(out, "trajectory.csv", traj.to_csv().as_bytes(), &mut artifacts)?;
    let p0 = traj.p2_values[0];
    let drift: Vec<(f64, f64)> = traj.samples.iter().zip(&traj.p2_values).map(|(s, p)| (s.s, (p - p0).abs())).collect();
    let path: Vec<(f64, f64)> = traj.samples.iter().map(|s| (s.x[0], s.x[n.min(2) - 1])).collect();
    let svg = line_plot("bicharacteristic", "first coordinate", "last plotted coordinate", &[Series { label: "x(s)", points: path }], false);
    write(out, "trajectory.svg", svg.as_bytes(), &mut artifacts)?;
    let svg = line_plot("symbol drift", "s", "|p2(s) - p2(0)|", &[Series { label: "drift", points: drift }], false);
    write(out, "drift.svg", svg.as_bytes(), &mut artifacts)?;
    let mut details = json!({ "samples": traj.samples.len(), "max_drift": traj.max_drift(), "p2_initial": p0 });
    if let Some(s) = surf {
        let r = classify_tangency(&traj, &s).map_err(|e| runtime("tangency", e))?;
        details["tangency"] = to_json(&r)?;
    }
    Ok(Outcome { verdict: Some(traj.conserves(1e-8)), details, artifacts })
}

fn grid(spec: &GridSpec) -> Res<GridDomain> {
    if spec.bounds.len() != spec.n.len() {
        return Err(CliError::Schema("grid.bounds and grid.n differ in length".into()));
    }
    let d = spec.n.len();
    let mut dom = GridDomain::new(spec.bounds.iter().map(|b| (b[0], b[1])).collect(), spec.n.clone()).map_err(|e| schema("grid", e))?;
    if let Some(m) = &spec.mask {
        let e = expr(m, d, VarConvention::Space, "grid.mask")?;
        let mask = set_of(&dom, &e, "grid.mask")?;
        dom = dom.with_mask(mask).map_err(|e| schema("grid.mask", e))?;
    }
    if let Some(g) = &spec.metric {
        let rows = g
            .iter()
            .map(|r| r.iter().map(|s| expr(s, d, VarConvention::Space, "grid.metric")).collect())
            .collect::<Res<Vec<Vec<ExprAst>>>>()?;
        dom = dom.with_metric(&rows).map_err(|e| schema("grid.metric", e))?;
    }
    if let Some(r) = spec.stencil {
        dom = dom.with_stencil(r).map_err(|e| schema("grid.stencil", e))?;
    }
    Ok(dom)
}

fn set_of(dom: &GridDomain, e: &ExprAst, what: &str) -> Res<Vec<bool>> {
    (0..dom.len()).map(|i| e.eval(&dom.point(i)).map(|v| v <= 0.0).map_err(|err| schema(what, err))).collect()
}

fn distance(sc: &Scenario, out: &Path) -> Res<Outcome> {
    let dom = grid(need(&sc.grid, "grid")?)?;
    let spec = need(&sc.distance, "distance")?;
    let d = dom.dim();
    let src = set_of(&dom, &expr(&spec.source, d, VarConvention::Space, "distance.source")?, "distance.source")?;
    let tgt = match &spec.target {
        Some(t) => Some(set_of(&dom, &expr(t, d, VarConvention::Space, "distance.target")?, "distance.target")?),
        None => None,
    };
    let field = distance_field(&dom, &src).map_err(|e| runtime("distance", e))?;
    let mut artifacts = Vec::new();
    let arr = GridArray::from_field(&dom, field.values.clone());
    write(out, "distance.bin", &arr.to_bytes(), &mut artifacts)?;
    if let Ok(csv) = arr.to_csv() {
        write(out, "distance.csv", csv.as_bytes(), &mut artifacts)?;
    }
    let max = field.values.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    let mut details = json!({ "points": dom.len(), "unreachable": field.unreachable, "max_distance": max });
    if let Some(t) = tgt {
        let l = sup_distance(&dom, &t, &src).map_err(|e| runtime("sup_distance", e))?;
        if !l.is_finite() {
            return Err(CliError::Runtime("part of the target set is unreachable from the source".into()));
        }
        details["sup_distance"] = json!(l);
    }
    Ok(Outcome { verdict: None, details, artifacts })
}

fn sweep(sc: &Scenario, out: &Path) -> Res<Outcome> {
    let s = need(&sc.sweep, "sweep")?;
    let mut fam = SweepFamily::new(s.ell0, s.t0, s.alpha, s.b, s.delta).map_err(|e| schema("sweep", e))?;
    if let Some(m) = &s.m_prime {
        fam = fam.with_m_prime(expr(m, 3, VarConvention::SpaceTime, "sweep.m_prime")?).map_err(|e| schema("sweep.m_prime", e))?;
    }
    if let Some(k) = s.cross {
        fam = fam.with_cross(k);
    }
    if s.grid < 2 || s.eps_count < 2 {
        return Err(CliError::Schema("sweep.grid and sweep.eps_count must be at least 2".into()));
    }
    let cfg = SweepConfig { grid: s.grid, eps_count: s.eps_count, zeta_samples: s.zeta_samples };
    let r = build_sweep(&fam, &fam.symbol(), &cfg).map_err(|e| runtime("sweep", e))?;
    let mut artifacts = Vec::new();
    let mut csv = String::from("eps,min_margin\n");
    for (e, m) in r.eps_grid.iter().zip(&r.min_margin_by_eps) {
        csv.push_str(&format!("{e},{m}\n"));
    }
    write(out, "sweep.csv", csv.as_bytes(), &mut artifacts)?;
    let pts = r.eps_grid.iter().copied().zip(r.min_margin_by_eps.iter().copied()).collect();
    let svg = line_plot("noncharacteristic margin", "eps", "min p(d psi_eps)", &[Series { label: "min margin", points: pts }], false);
    write(out, "sweep.svg", svg.as_bytes(), &mut artifacts)?;
    Ok(Outcome { verdict: Some(r.noncharacteristic), details: to_json(&r)?, artifacts })
}

fn multiplier(sc: &Scenario, out: &Path) -> Res<Outcome> {
    let m = need(&sc.multiplier, "multiplier")?;
    positive(m.ht, "multiplier.ht")?;
    positive(m.eps, "multiplier.eps")?;
    positive(m.tau, "multiplier.tau")?;
    let f = expr(&m.signal, 1, VarConvention::SpaceTime, "multiplier.signal")?;
    let vals: Vec<f64> = (0..m.n).map(|k| f.eval(&[m.t0 + k as f64 * m.ht])).collect::<Result<_, _>>().map_err(|e| schema("multiplier.signal", e))?;
    let u = TimeSignal::new(m.t0, m.ht, vec![vals]).map_err(|e| schema("multiplier", e))?;
    let modes: Vec<MultMode> = match m.mode {
        MultModeSpec::Spectral => vec![MultMode::Spectral],
        MultModeSpec::Convolution => vec![MultMode::Convolution],
        MultModeSpec::Both => vec![MultMode::Spectral, MultMode::Convolution],
    };
    let outs = modes.iter().map(|&md| apply_multiplier(&u, m.eps, m.tau, md).map_err(|e| runtime("multiplier", e))).collect::<Res<Vec<_>>>()?;
    let comm = commutation_residual(&u, m.eps, m.tau).map_err(|e| runtime("commutation", e))?;
    let mut artifacts = Vec::new();
    let times = u.times();
    let mut csv = String::from("t,input");
    for md in &modes {
        csv.push_str(if *md == MultMode::Spectral { ",spectral" } else { ",convolution" });
    }
    csv.push('\n');
    for k in 0..times.len() {
        csv.push_str(&format!("{},{}", times[k], u.slices[0][k]));
        for o in &outs {
            csv.push_str(&format!(",{}", o.signal.slices[0][k]));
        }
        csv.push('\n');
    }
    write(out, "multiplier.csv", csv.as_bytes(), &mut artifacts)?;
    let mut series = vec![Series { label: "input", points: times.iter().copied().zip(u.slices[0].iter().copied()).collect() }];
    for (md, o) in modes.iter().zip(&outs) {
        let label = if *md == MultMode::Spectral { "spectral" } else { "convolution" };
        series.push(Series { label, points: times.iter().copied().zip(o.signal.slices[0].iter().copied()).collect() });
    }
    write(out, "multiplier.svg", line_plot("Gaussian time multiplier", "t", "value", &series, false).as_bytes(), &mut artifacts)?;
    let warning = outs.iter().any(|o| o.warning);
    let mut details = json!({
        "commutation_residual": comm,
        "boundary_fraction": outs.iter().map(|o| o.boundary_fraction).fold(0.0, f64::max),
        "warning": warning,
    });
    if outs.len() == 2 {
        let diff = outs[0].signal.slices[0].iter().zip(&outs[1].signal.slices[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        details["mode_difference"] = json!(diff);
    }
    Ok(Outcome { verdict: Some(!warning), details, artifacts })
}

fn coeff_rows(rows: &[Vec<String>], d: usize, what: &str) -> Res<Vec<Vec<ExprAst>>> {
    rows.iter().map(|r| r.iter().map(|s| expr(s, d, VarConvention::Space, what)).collect()).collect()
}

fn simulate(sc: &Scenario, out: &Path) -> Res<Outcome> {
    let dom = grid(need(&sc.grid, "grid")?)?;
    let w = need(&sc.wave, "wave")?;
    let d = dom.dim();
    positive(w.t_final, "wave.t_final")?;
    positive(w.cfl, "wave.cfl")?;
    if w.record_every == 0 {
        return Err(CliError::Schema("wave.record_every must be at least 1".into()));
    }
    let coeffs = w.coeffs.as_ref().map(|c| coeff_rows(c, d, "wave.coeffs")).transpose()?;
    let q = w.q.as_ref().map(|q| expr(q, d, VarConvention::Space, "wave.q")).transpose()?;
    let u0 = expr(&w.u0, d, VarConvention::Space, "wave.u0")?;
    let u1 = expr(&w.u1, d, VarConvention::Space, "wave.u1")?;
    let solver = WaveSolver::new(dom.clone(), coeffs.as_deref(), q.as_ref()).map_err(|e| schema("wave", e))?;
    let sample = |e: &ExprAst| -> Res<Vec<f64>> { (0..dom.len()).map(|i| e.eval(&dom.point(i))).collect::<Result<_, _>>().map_err(|err| schema("wave data", err)) };
    let mut s = solver.state(&sample(&u0)?, &sample(&u1)?).map_err(|e| runtime("simulate", e))?;
    let (dt, steps) = solver.stable_dt(w.t_final, w.cfl.min(carleman_core::wavesolve::CFL_LIMIT));
    let e0 = solver.modified_energy(&s, dt);
    let mut rows = vec![(0.0, solver.energy(&s), e0)];
    for k in 1..=steps {
        solver.step_leapfrog(&mut s, dt, None).map_err(|e| runtime("simulate", e))?;
        if k % w.record_every == 0 || k == steps {
            rows.push((s.time, solver.energy(&s), solver.modified_energy(&s, dt)));
        }
    }
    let drift = rows.iter().map(|r| (r.2 - e0).abs()).fold(0.0, f64::max) / e0.abs().max(f64::MIN_POSITIVE);
    let mut artifacts = Vec::new();
    let mut csv = String::from("time,energy,shadow_energy\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{}\n", r.0, r.1, r.2));
    }
    write(out, "energy.csv", csv.as_bytes(), &mut artifacts)?;
    write(out, "final_u.bin", &GridArray::from_field(&dom, s.u.clone()).to_bytes(), &mut artifacts)?;
    write(out, "final_v.bin", &GridArray::from_field(&dom, s.v.clone()).to_bytes(), &mut artifacts)?;
    let series = [
        Series { label: "energy", points: rows.iter().map(|r| (r.0, r.1)).collect() },
        Series { label: "shadow energy", points: rows.iter().map(|r| (r.0, r.2)).collect() },
    ];
    write(out, "energy.svg", line_plot("discrete energy", "t", "E", &series, false).as_bytes(), &mut artifacts)?;
    let details = json!({ "dt": dt, "steps": steps, "cfl": solver.cfl(dt), "energy0": rows[0].1, "shadow_drift": drift });
    Ok(Outcome { verdict: Some(drift <= 1e-8), details, artifacts })
}

fn carleman(sc: &Scenario, seed: u64, out: &Path) -> Res<Outcome> {
    let c = need(&sc.carleman, "carleman")?;
    if c.bounds.len() != c.n.len() {
        return Err(CliError::Schema("carleman.bounds and carleman.n differ in length".into()));
    }
    let dom = GridDomain::new(c.bounds.iter().map(|b| (b[0], b[1])).collect(), c.n.clone()).map_err(|e| schema("carleman", e))?;
    let d = dom.dim();
    let phi = expr(&c.phi, d, VarConvention::Space, "carleman.phi")?;
    let b = c.b.iter().map(|s| expr(s, d, VarConvention::Space, "carleman.b")).collect::<Res<Vec<_>>>()?;
    let cc = c.c.as_ref().map(|s| expr(s, d, VarConvention::Space, "carleman.c")).transpose()?;
    let mut op = DiscreteOperator::laplacian(dom).map_err(|e| schema("carleman", e))?;
    if !b.is_empty() || cc.is_some() {
        op = op.with_lower_order(&b, cc.as_ref()).map_err(|e| schema("carleman", e))?;
    }
    if c.bumps == 0 || c.tau_count == 0 {
        return Err(CliError::Schema("carleman.bumps and carleman.tau_count must be positive".into()));
    }
    positive(c.w_min, "carleman.w_min")?;
    if c.w_max <= c.w_min {
        return Err(CliError::Schema("carleman.w_max must exceed w_min".into()));
    }
    positive(c.tau_min, "carleman.tau_min")?;
    let h = op.domain().spacing().into_iter().fold(0.0, f64::max);
    let admissible = tau_max_admissible(h);
    let tau_max = c.tau_max.unwrap_or(admissible);
    if tau_max < c.tau_min {
        return Err(CliError::Schema("carleman.tau_max is below tau_min".into()));
    }
    let form = match c.form {
        FormSpec::Weighted => RatioForm::Weighted,
        FormSpec::Conjugated => RatioForm::Conjugated,
    };
    let family = random_bumps(op.domain(), c.bumps, c.w_min, c.w_max, seed);
    let taus = geometric_grid(c.tau_min, tau_max, c.tau_count);
    let name = format!("{} bumps, widths [{}, {}], seed {seed}", c.bumps, c.w_min, c.w_max);
    let curve = if tau_max <= admissible {
        carleman_ratio(&op, &phi, &family, &name, &taus, form)
    } else {
        carleman_ratio_unrestricted(&op, &phi, &family, &name, &taus, form)
    }
    .map_err(|e| runtime("carleman-ratio", e))?;
    let mut artifacts = Vec::new();
    write(out, "ratio.csv", curve.to_csv().as_bytes(), &mut artifacts)?;
    let pts = curve.tau_grid.iter().copied().zip(curve.ratios.iter().copied()).collect();
    write(out, "ratio.svg", line_plot("Carleman ratio", "tau", "ratio", &[Series { label: "max over family", points: pts }], true).as_bytes(), &mut artifacts)?;
    let mut details = to_json(&curve)?;
    details["max_over_median"] = json!(curve.max_over_median());
    details["growth"] = json!(curve.growth());
    details["bounded"] = json!(curve.bounded());
    details["beyond_admissible"] = json!(tau_max > admissible);
    Ok(Outcome { verdict: Some(curve.bounded()), details, artifacts })
}

fn control(sc: &Scenario, out: &Path) -> Res<Outcome> {
    let dom = grid(need(&sc.grid, "grid")?)?;
    let c = need(&sc.control, "control")?;
    let d = dom.dim();
    let omega = set_of(&dom, &expr(&c.omega, d, VarConvention::Space, "control.omega")?, "control.omega")?;
    if !omega.iter().any(|&b| b) {
        return Err(CliError::Schema("control.omega selects no grid point".into()));
    }
    if c.eps.is_empty() || c.eps.iter().any(|&e| !(e > 0.0)) {
        return Err(CliError::Schema("control.eps must be a nonempty list of positive numbers".into()));
    }
    positive(c.cfl, "control.cfl")?;
    let tu = expr(&c.target_u, d, VarConvention::Space, "control.target_u")?;
    let tv = expr(&c.target_v, d, VarConvention::Space, "control.target_v")?;
    let sample = |e: &ExprAst| -> Res<Vec<f64>> { (0..dom.len()).map(|i| e.eval(&dom.point(i))).collect::<Result<_, _>>().map_err(|err| schema("control target", err)) };
    let target = WaveState { u: sample(&tu)?, v: sample(&tv)?, time: 0.0 };
    let l = sup_distance(&dom, &vec![true; dom.len()], &omega).map_err(|e| runtime("sup_distance", e))?;
    let horizon = match (c.horizon, c.horizon_factor) {
        (Some(t), None) => t,
        (None, Some(k)) => k * l,
        _ => return Err(CliError::Schema("[control] needs exactly one of `horizon`, `horizon_factor`".into())),
    };
    positive(horizon, "control horizon")?;
    let solver = WaveSolver::new(dom.clone(), None, None).map_err(|e| schema("control", e))?;
    let problem = ControlProblem::new(solver, omega, horizon, target, c.eps[0], c.cfl).map_err(|e| schema("control", e))?;
    let cfg = ControlConfig::default();
    let pts = cost_curve(&problem, &c.eps, &cfg).map_err(|e| runtime("control", e))?;
    let norm = problem.state_norm(&problem.target);
    let contract = pts.iter().all(|p| p.achieved_error <= p.eps * norm * 1.05);
    let mut sorted = pts.clone();
    sorted.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    let monotone = sorted.windows(2).all(|w| w[1].cost >= w[0].cost);
    let x: Vec<f64> = pts.iter().map(|p| 1.0 / p.eps).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.cost.ln()).collect();
    let fit = linear_fit(&x, &y);
    let mut artifacts = Vec::new();
    write(out, "cost.csv", cost_csv(&pts).as_bytes(), &mut artifacts)?;
    let series = [Series { label: "cost", points: x.iter().copied().zip(pts.iter().map(|p| p.cost)).collect() }];
    write(out, "cost.svg", line_plot("control cost", "1 / eps", "cost", &series, true).as_bytes(), &mut artifacts)?;
    let mut details = json!({
        "L": l,
        "horizon": horizon,
        "dt": problem.dt,
        "steps": problem.steps,
        "target_norm": norm,
        "points": pts,
        "precision_contract": contract,
        "monotone": monotone,
        "fit": fit,
    });
    if c.gram {
        let (min, max) = problem.gram_extremes().map_err(|e| runtime("gram", e))?;
        details["gram"] = json!({ "min": min, "max": max });
    }
    Ok(Outcome { verdict: Some(contract && monotone), details, artifacts })
}
