use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use spinrad::clifford::verify_algebra;
use spinrad::diagnostics::{charge_balance_defect, evolve_charge_balance, ghost_weight_check, ks_ratio, DiagnosticsLog};
use spinrad::grid::{charge, make_superposition, write_dump};
use spinrad::propagate::evolve;
use spinrad::radiation::{extract_free, isometry_defect, radiation_summary_csv, write_radiation_dump};
use spinrad::scattering::{
    apply_adjoint, apply_forward, forward_nonlinear, forward_nonlinear_direct, forward_values, invert_linear,
    invert_nonlinear, LinearMapHandle,
};
use spinrad::{
    fit, EvolveConfig, Grid, Nonlinearity, NullGrid, RadiationField, RunHandle, Sphere, Spinor, SpinorField,
    TimeDirection, C64,
};

use crate::config::ExperimentConfig;
use crate::output::{num, quote, Output};
use crate::CliError;

type Res = Result<(), CliError>;

fn initial_data(cfg: &ExperimentConfig) -> Result<SpinorField, CliError> {
    Ok(make_superposition(cfg.grid().map_err(CliError::Config)?, &cfg.data)?)
}

fn evolve_config(cfg: &ExperimentConfig) -> EvolveConfig {
    let e = &cfg.evolve;
    let nl = if e.nonlinear { Nonlinearity::NullForm(cfg.scatter.coeffs) } else { Nonlinearity::None };
    EvolveConfig::new(cfg.dt(), e.t_final)
        .with_snapshot_every(e.snapshot_every)
        .with_direction(e.direction)
        .with_nonlinearity(nl)
}

fn run(cfg: &ExperimentConfig) -> Result<RunHandle, CliError> {
    Ok(evolve(&initial_data(cfg)?, &evolve_config(cfg), None)?)
}

fn handle(cfg: &ExperimentConfig) -> Result<LinearMapHandle, CliError> {
    cfg.handle().map_err(CliError::Config)
}

fn dump_radiation(out: &mut Output, f: &RadiationField, stem: &str) -> Res {
    write_radiation_dump(f, &out.dir().join(stem), &out.meta())?;
    for ext in ["meta", "nodes.csv", "bin"] {
        out.register(format!("{stem}.{ext}"));
    }
    out.csv(&format!("{stem}.csv"), &radiation_summary_csv(f))?;
    Ok(())
}

fn dump_field(out: &mut Output, f: &SpinorField, stem: &str) -> Res {
    write_dump(f, &out.dir().join(stem), &out.meta())?;
    out.register(format!("{stem}.meta"));
    out.register(format!("{stem}.bin"));
    Ok(())
}

pub fn verify_algebra_cmd(cfg: &ExperimentConfig, out: &mut Output) -> Res {
    let mut csv = String::from("check,exact,defect,tolerance,passed\n");
    for c in verify_algebra(cfg.seed, cfg.algebra.samples) {
        let _ = writeln!(csv, "{},{},{},{},{}", quote(&c.name), c.exact, num(c.defect), num(c.tolerance), c.passed());
        if c.exact {
            out.check_eq(format!("{} [exact]", c.name), c.defect, 0.0);
        } else {
            out.check_le(c.name, c.defect, c.tolerance);
        }
    }
    out.csv("algebra.csv", &csv)?;
    Ok(())
}

pub fn evolve_cmd(cfg: &ExperimentConfig, out: &mut Output) -> Res {
    let run = run(cfg)?;
    let q0 = charge(run.initial());
    let mut csv = String::from("index,t,charge,max_abs\n");
    let mut drift: f64 = 0.0;
    for (i, s) in run.snapshots.iter().enumerate() {
        let q = charge(s);
        drift = drift.max(if q0 > 0.0 { (q - q0).abs() / q0 } else { q });
        let _ = writeln!(csv, "{i},{},{},{}", num(s.time), num(q), num(s.max_abs()));
        if cfg.evolve.dump_snapshots {
            dump_field(out, s, &format!("snapshot_{i:04}"))?;
        }
    }
    out.csv("evolve.csv", &csv)?;
    out.report("steps", run.config.steps() as f64);
    out.report("dt", run.config.dt);
    out.report("box horizon", run.box_horizon());
    out.report("containment time", run.containment_time);
    out.check_eq("all snapshots finite", run.snapshots.iter().filter(|s| !s.is_finite()).count() as f64, 0.0);
    if !cfg.evolve.nonlinear {
        out.check_le("free charge drift", drift, cfg.tolerances.free_charge_drift);
    }
    Ok(())
}

pub fn diagnostics_cmd(cfg: &ExperimentConfig, out: &mut Output) -> Res {
    let run = run(cfg)?;
    let log = DiagnosticsLog::collect(&run, cfg.evolve.energy_order, &cfg.diagnostics)?;
    out.csv("diagnostics.csv", &log.to_csv())?;

    let balance = charge_balance_defect(&run)?;
    let tol = if cfg.evolve.nonlinear { cfg.tolerances.forced_balance } else { cfg.tolerances.free_balance };
    out.check_le("charge balance defect", balance, tol);

    let (lhs, rhs) = ghost_weight_check(&run, &cfg.diagnostics)?;
    out.report("ghost weight lhs", lhs);
    out.report("ghost weight rhs", rhs);
    out.check_le("ghost weight lhs - rhs", lhs - rhs, 0.0);

    let mut ks = String::from("t,ks_ratio\n");
    let mut ratios = Vec::new();
    for &t in &cfg.evolve.ks_times {
        let r = ks_ratio(&run, t)?;
        let _ = writeln!(ks, "{},{}", num(t), num(r));
        ratios.push(r);
    }
    out.csv("ks.csv", &ks)?;
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    if lo > 0.0 && ratios.len() > 1 {
        out.check_le("Klainerman-Sobolev spread", hi / lo, cfg.tolerances.ks_spread);
    }
    Ok(())
}

pub fn radiation_cmd(cfg: &ExperimentConfig, out: &mut Output) -> Res {
    let h = handle(cfg)?;
    let phi0 = initial_data(cfg)?;
    let f = if cfg.scatter.nonlinear {
        forward_nonlinear_direct(&cfg.scatter_config(), &h, &phi0)?
    } else {
        apply_forward(&h, &phi0)?
    };
    dump_radiation(out, &f, "radiation")?;
    out.report("norm", f.norm());
    out.report("error estimate norm", f.error_norm());
    out.report("membership defect", f.membership_defect());
    out.check_eq("non-finite samples", if f.is_finite() { 0.0 } else { 1.0 }, 0.0);
    if !cfg.scatter.nonlinear {
        out.check_le("isometry defect", isometry_defect(&f, &phi0), cfg.tolerances.isometry);
    }
    Ok(())
}

pub fn scatter_forward_cmd(cfg: &ExperimentConfig, out: &mut Output) -> Res {
    let h = handle(cfg)?;
    let phi0 = initial_data(cfg)?;
    if cfg.scatter.nonlinear {
        let r = forward_nonlinear(&cfg.scatter_config(), &h, &phi0)?;
        dump_radiation(out, &r.direct, "forward")?;
        out.report("norm", r.direct.norm());
        out.report("duhamel norm", r.duhamel.norm());
        out.report("combined error", r.combined_error);
        out.check_le("pipeline discrepancy / combined error", r.discrepancy / r.combined_error.max(f64::MIN_POSITIVE), 3.0);
    } else {
        let f = forward_values(&h, &phi0)?;
        dump_radiation(out, &f, "forward")?;
        out.report("norm", f.norm());
        out.report("data norm", charge(&phi0).sqrt());
        out.check_le("isometry defect", isometry_defect(&f, &phi0), cfg.tolerances.isometry);
    }
    Ok(())
}

fn random_field(g: Grid, rng: &mut ChaCha8Rng) -> SpinorField {
    let mut x = SpinorField::zeros(g, 0.0);
    for z in x.data.iter_mut() {
        *z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    x
}

fn random_radiation(h: &LinearMapHandle, rng: &mut ChaCha8Rng) -> RadiationField {
    let mut y = RadiationField::zeros(h.null_grid.clone(), h.radius());
    for s in y.data.iter_mut() {
        let mut c = || C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        *s = Spinor::new(c(), c(), c(), c());
    }
    y
}

pub fn scatter_inverse_cmd(cfg: &ExperimentConfig, out: &mut Output) -> Res {
    let h = handle(cfg)?;
    let phi0 = initial_data(cfg)?;
    let rep = if cfg.scatter.nonlinear {
        let scfg = cfg.scatter_config();
        let target = forward_nonlinear_direct(&scfg, &h, &phi0)?;
        invert_nonlinear(&scfg, &h, &target)?
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let x = random_field(h.grid, &mut rng);
        let y = random_radiation(&h, &mut rng);
        let ax = forward_values(&h, &x)?;
        let aty = apply_adjoint(&h, &y)?;
        let dot = (ax.dot(&y) - x.dot(&aty)).norm() / (ax.norm() * y.norm());
        out.check_le("adjoint dot-product defect", dot, cfg.tolerances.adjoint);
        let target = forward_values(&h, &phi0)?;
        invert_linear(&h, &target, &cfg.scatter.cg)?
    };
    out.csv("inversion.csv", &rep.to_csv())?;
    dump_field(out, &rep.solution, "solution")?;
    out.report("iterations", rep.iterations() as f64);
    out.report("final residual", rep.final_residual());
    out.check_le("round trip", rep.solution.rel_diff(&phi0), cfg.tolerances.round_trip);
    Ok(())
}

struct Ladder {
    name: &'static str,
    param: &'static str,
    points: Vec<(f64, f64)>,
    fitted: &'static str,
    value: f64,
    bound: f64,
}

fn splitting_ladder(cfg: &ExperimentConfig) -> Result<Ladder, CliError> {
    let phi0 = initial_data(cfg)?;
    let h = phi0.grid.h();
    let conv = &cfg.convergence;
    let coarse = h / conv.steps_per_cell.iter().cloned().fold(f64::INFINITY, f64::min);
    let t_final = (conv.splitting_t_final / coarse).round() * coarse;
    let points = conv
        .steps_per_cell
        .par_iter()
        .map(|k| {
            let dt = h / k;
            let ecfg = EvolveConfig::new(dt, t_final).with_nonlinearity(Nonlinearity::NullForm(cfg.scatter.coeffs));
            Ok((dt, evolve_charge_balance(&phi0, &ecfg, None)?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let (x, y): (Vec<f64>, Vec<f64>) = points.iter().cloned().unzip();
    Ok(Ladder {
        name: "splitting",
        param: "dt",
        points,
        fitted: "order",
        value: fit::order(&x, &y).unwrap_or(f64::NAN),
        bound: cfg.tolerances.splitting_order,
    })
}

fn extraction_ladder(cfg: &ExperimentConfig) -> Result<Ladder, CliError> {
    let phi0 = initial_data(cfg)?;
    let g = phi0.grid;
    let conv = &cfg.convergence;
    let w = conv.half_window;
    let points = conv
        .radii
        .par_iter()
        .map(|&m| {
            let sphere = Sphere::new(cfg.null_grid.n_theta, cfg.null_grid.n_phi)?;
            let ng = NullGrid::with_step(-w, w, cfg.null_grid.ds_cells * g.h(), sphere)?;
            let f = extract_free(&phi0, 0.0, &ng, &[m, 2.0 * m], TimeDirection::Forward)?;
            let (near, far) = (f.at_radius(0), f.at_radius(1));
            let d = match (near, far) {
                (Some(a), Some(b)) => a.rel_diff(&b),
                _ => f64::NAN,
            };
            Ok((m, d))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let (x, y): (Vec<f64>, Vec<f64>) = points.iter().cloned().unzip();
    Ok(Ladder {
        name: "extraction",
        param: "M",
        points,
        fitted: "exponent",
        value: -fit::power_law(&x, &y).unwrap_or(f64::NAN),
        bound: cfg.tolerances.extraction_exponent,
    })
}

fn isometry_ladder(cfg: &ExperimentConfig) -> Result<Ladder, CliError> {
    let points = cfg
        .convergence
        .isometry
        .par_iter()
        .map(|&(c, n, l)| {
            let g = Grid::new(n, l)?;
            let phi0 = make_superposition(g, &cfg.data)?;
            let m = 10.0 * c;
            let sphere = Sphere::new((20.0 * c).round() as usize, (40.0 * c).round() as usize)?;
            let ng = NullGrid::with_step(-5.0 * c, 5.0 * c, g.h(), sphere)?;
            let h = LinearMapHandle::new(g, ng, &[0.5 * m, m])?;
            let f = forward_values(&h, &phi0)?;
            Ok((g.h(), isometry_defect(&f, &phi0)))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let (x, y): (Vec<f64>, Vec<f64>) = points.iter().cloned().unzip();
    Ok(Ladder {
        name: "isometry",
        param: "h",
        points,
        fitted: "order",
        value: fit::order(&x, &y).unwrap_or(f64::NAN),
        bound: cfg.tolerances.isometry_order,
    })
}

pub fn convergence_cmd(cfg: &ExperimentConfig, out: &mut Output) -> Res {
    let mut points = String::from("ladder,parameter,value,defect\n");
    let mut fits = String::from("ladder,fitted,value,bound,passed\n");
    for name in &cfg.convergence.ladders {
        let ladder = match name.as_str() {
            "splitting" => splitting_ladder(cfg)?,
            "extraction" => extraction_ladder(cfg)?,
            "isometry" => isometry_ladder(cfg)?,
            other => return Err(CliError::Config(format!("unknown ladder '{other}'"))),
        };
        for (x, y) in &ladder.points {
            let _ = writeln!(points, "{},{},{},{}", ladder.name, ladder.param, num(*x), num(*y));
        }
        let passed = ladder.value >= ladder.bound;
        let _ = writeln!(fits, "{},{},{},{},{}", ladder.name, ladder.fitted, num(ladder.value), num(ladder.bound), passed);
        out.check_ge(format!("{} {}", ladder.name, ladder.fitted), ladder.value, ladder.bound);
    }
    out.csv("ladders.csv", &points)?;
    out.csv("fits.csv", &fits)?;
    Ok(())
}
