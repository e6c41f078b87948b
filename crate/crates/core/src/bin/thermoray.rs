//! Batch front-end: experiment configs in, residual reports and plot-ready
//! CSV out.
//!
//! Exit codes: 0 all asserted tolerances met; 1 an assertion failed;
//! 2 config or chart/identity incompatibility.

use std::path::PathBuf;
use std::process::ExitCode;
use std::rc::Rc;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use thermoray::config::ExperimentConfig;
use thermoray::expr::Expr;
use thermoray::field::ScalarField;
use thermoray::flow::{
    check_linearized_flow, flow_endpoint, integrate_flow, FlowSystem, TangentData, DEFAULT_DT,
};
use thermoray::frame::{standard_battery, verify_commutators};
use thermoray::geometry::{SmPoint, Surface, ThermostatParams};
use thermoray::pestov::{
    integrated_pestov, pointwise_pestov_max, remark56_identity, uhlmann_pestov,
};
use thermoray::report::{IdentityReport, RunReport};
use thermoray::riccati::{weak_bundles_along_orbit, DEFAULT_T_WARMUP};
use thermoray::tomography::{
    d_op, find_closed_orbit, solenoidal_decompose, xray_transform, PotentialPair, TensorPair,
};
use thermoray::util::{random_band_limited, random_smfield, rng, thread_limit};
use thermoray::{Result, SmField, ThermoError};

#[derive(Parser)]
#[command(name = "thermoray", about = "thermostat ray-transform experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for reports and CSV tables.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check one of the integral/pointwise identities on seeded random data.
    Verify {
        #[command(flatten)]
        common: Common,
        /// commutators | pestov | pestov-int | uhlmann | remark56
        #[arg(long)]
        identity: Option<String>,
    },
    /// Weak stable/unstable Riccati solutions along an orbit; CSV output.
    Riccati {
        #[command(flatten)]
        common: Common,
        /// torus | halfplane (overrides the config chart)
        #[arg(long)]
        chart: Option<String>,
        /// Half-plane thermostat strength: stream (S/2) ln y, so |e| = S/2.
        /// Normalized so the whole dial [0, 1] stays inside the hyperbolic
        /// regime of this noncompact model.
        #[arg(long, default_value_t = 0.0)]
        e_scale: f64,
        /// Orbit length over which the bundles are reported.
        #[arg(long, default_value_t = 3.0)]
        t: f64,
    },
    /// Integrate one thermostat orbit; report reversibility diagnostics.
    Flow {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5.0)]
        t: f64,
        /// Write the trajectory as CSV (t, x, y, omega).
        #[arg(long)]
        dump_orbit: bool,
    },
    /// Jacobi-equation cross-check of the linearized flow.
    Jacobi {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3.0)]
        t: f64,
    },
    /// Solenoidal-potential decomposition of a seeded random pair.
    Decompose {
        #[command(flatten)]
        common: Common,
    },
    /// X-ray transform of a potential pair over a closed orbit.
    Xray {
        #[command(flatten)]
        common: Common,
    },
    /// Convergence sweeps; CSV of (level, residual) plus fitted order.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// flow | spectral | constant
        #[arg(long, default_value = "flow")]
        kind: String,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(tol) = common.tol {
        cfg.tol = tol;
    }
    Ok(cfg)
}

fn emit(report: &RunReport, common: &Common, extra: &[(&str, String)]) -> Result<()> {
    let json = report.to_json();
    println!("{json}");
    if let Some(dir) = &common.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{}.json", report.command)), &json)?;
        for (name, body) in extra {
            std::fs::write(dir.join(name), body)?;
        }
    }
    Ok(())
}

fn run_verify(common: &Common, identity: Option<String>) -> Result<bool> {
    let cfg = load_config(common)?;
    let identity = identity
        .or_else(|| cfg.identity.clone())
        .unwrap_or_else(|| "pestov".into());
    let surface = cfg.surface.build()?;
    let params = cfg.thermostat.build(&surface)?;
    let mut report = RunReport::new("verify");
    report.seed = Some(cfg.seed);
    let mut rng = rng(cfg.seed);

    match identity.as_str() {
        "commutators" => {
            let battery = standard_battery(&surface);
            let res = verify_commutators(&surface, &battery)?;
            report.checks.push(
                IdentityReport::new("commutators", res.max(), 0.0).with_abs_tolerance(cfg.tol),
            );
        }
        "pestov" => {
            if !surface.chart.is_torus() {
                return Err(ThermoError::Incompatible(
                    "pointwise Pestov audit needs the torus chart".into(),
                ));
            }
            let mut worst: f64 = 0.0;
            for _ in 0..10 {
                let u = random_smfield(&surface, 3, 2, 1.0, &mut rng);
                let c = SmField::scalar(&surface, random_band_limited(&surface, 2, 0.3, &mut rng));
                worst = worst.max(pointwise_pestov_max(&surface, &params, &u, &c)?);
            }
            report
                .checks
                .push(IdentityReport::new("pestov-pointwise-max", worst, 0.0)
                    .with_abs_tolerance(cfg.tol));
        }
        "pestov-int" => {
            if !surface.chart.is_torus() {
                return Err(ThermoError::Incompatible(
                    "integrated Pestov identity needs the torus chart".into(),
                ));
            }
            let u = random_smfield(&surface, 3, 2, 1.0, &mut rng);
            let c = SmField::scalar(&surface, random_band_limited(&surface, 2, 0.3, &mut rng));
            report
                .checks
                .push(integrated_pestov(&surface, &params, &u, &c)?.with_rel_tolerance(cfg.tol));
        }
        "uhlmann" => {
            let u = random_smfield(&surface, 3, 2, 1.0, &mut rng);
            let c = SmField::scalar(&surface, random_band_limited(&surface, 2, 0.3, &mut rng));
            report
                .checks
                .push(uhlmann_pestov(&surface, &params, &u, &c, false)?
                    .with_rel_tolerance(cfg.tol));
        }
        "remark56" => {
            let u = random_smfield(&surface, 3, 2, 1.0, &mut rng);
            report
                .checks
                .push(remark56_identity(&surface, &params, &u, false)?
                    .with_rel_tolerance(cfg.tol));
        }
        other => {
            return Err(ThermoError::Config(format!("unknown identity '{other}'")));
        }
    }
    emit(&report, common, &[])?;
    Ok(report.all_pass())
}

fn run_riccati(common: &Common, chart: Option<String>, e_scale: f64, t: f64) -> Result<bool> {
    let cfg = load_config(common)?;
    let chart = chart.unwrap_or_else(|| cfg.surface.chart.clone());
    let (surface, params, p0): (Rc<Surface>, ThermostatParams, SmPoint) = match chart.as_str() {
        "halfplane" => {
            let s = Rc::new(Surface::hyperbolic_halfplane());
            let params = ThermostatParams::pure(
                Expr::scale(&Expr::ln(&Expr::y()), 0.5 * e_scale),
                Some(&s),
            );
            (s, params, SmPoint::new(0.0, 1.0, 0.4))
        }
        "torus" => {
            let s = cfg.surface.build()?;
            let params = cfg.thermostat.build(&s)?;
            (s, params, SmPoint::new(0.3, 1.1, 0.7))
        }
        other => return Err(ThermoError::Config(format!("unknown chart '{other}'"))),
    };
    let system = FlowSystem::new(&surface, &params);
    let samples = weak_bundles_along_orbit(&system, p0, t, DEFAULT_DT, DEFAULT_T_WARMUP)?;

    let mut csv = String::from("t,c_s,c_u,theta,rc,product\n");
    for s in &samples {
        csv.push_str(&format!(
            "{:.6e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            s.t,
            s.c_s,
            s.c_u,
            s.theta,
            s.rc_midpoint(&system),
            s.product()
        ));
    }

    let mut report = RunReport::new("riccati");
    let last = samples.last().expect("orbit has samples");
    report
        .checks
        .push(IdentityReport::new("c_u-final", last.c_u, 0.0).term("c_s-final", last.c_s));
    let worst_identity = samples
        .iter()
        .map(|s| s.midpoint_identity_residual(&system))
        .fold(0.0_f64, f64::max);
    report.checks.push(
        IdentityReport::new("midpoint-identity-max", worst_identity, 0.0)
            .with_abs_tolerance(cfg.tol.max(1e-6)),
    );
    if params.is_pure() {
        let worst_sign = samples.iter().map(|s| s.product()).fold(f64::MIN, f64::max);
        report.checks.push(
            IdentityReport::new("product-max", worst_sign, 0.0)
                .term("negative", if worst_sign < 0.0 { 1.0 } else { 0.0 }),
        );
    }
    emit(&report, common, &[("riccati.csv", csv)])?;
    Ok(report.all_pass())
}

fn run_flow(common: &Common, t: f64, dump_orbit: bool) -> Result<bool> {
    let cfg = load_config(common)?;
    let surface = cfg.surface.build()?;
    let params = cfg.thermostat.build(&surface)?;
    let system = FlowSystem::new(&surface, &params);
    let p0 = SmPoint::new(0.4, 1.3, 0.9);
    let traj = integrate_flow(&system, p0, t, DEFAULT_DT)?;

    let mut report = RunReport::new("flow");
    report.checks.push(
        IdentityReport::new("dt-within-limit", DEFAULT_DT, 0.0)
            .term("dt_max", system.dt_max())
            .with_abs_tolerance(system.dt_max()),
    );
    // Forward-then-reversed integration returns to the start for pure
    // thermostats; reported (not asserted) otherwise.
    let defect = thermoray::flow::reversibility_defect(&system, p0, t, DEFAULT_DT)?;
    let rev = IdentityReport::new("reversibility-defect", defect, 0.0);
    report.checks.push(if params.is_pure() {
        rev.with_abs_tolerance(cfg.tol.max(1e-6))
    } else {
        rev
    });

    let extra = if dump_orbit {
        vec![("orbit.csv", traj.to_csv())]
    } else {
        Vec::new()
    };
    emit(&report, common, &extra)?;
    Ok(report.all_pass())
}

fn run_jacobi(common: &Common, t: f64) -> Result<bool> {
    let cfg = load_config(common)?;
    let surface = cfg.surface.build()?;
    let params = cfg.thermostat.build(&surface)?;
    let system = FlowSystem::new(&surface, &params);
    let mut rng = rng(cfg.seed);
    let mut report = RunReport::new("jacobi");
    report.seed = Some(cfg.seed);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let p0 = random_point(&surface, &mut rng);
        let xi = TangentData {
            horizontal: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            vertical: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
        };
        worst = worst.max(check_linearized_flow(&system, p0, &xi, t, DEFAULT_DT, 1e-6)?);
    }
    report.checks.push(
        IdentityReport::new("jacobi-vs-fd-max", worst, 0.0).with_abs_tolerance(cfg.tol.max(1e-5)),
    );
    emit(&report, common, &[])?;
    Ok(report.all_pass())
}

fn random_point(surface: &Surface, rng: &mut impl rand::Rng) -> SmPoint {
    match surface.grid_shape() {
        Some((_, lx, ly)) => SmPoint::new(
            rng.gen_range(0.0..lx),
            rng.gen_range(0.0..ly),
            rng.gen_range(0.0..std::f64::consts::TAU),
        ),
        None => SmPoint::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(0.5..2.0),
            rng.gen_range(0.0..std::f64::consts::TAU),
        ),
    }
}

fn grid_json(name: &str, f: &ScalarField) -> String {
    let g = match f {
        ScalarField::Grid(g) => g,
        ScalarField::Expr(_, _) => return format!("{{\"{name}\": \"analytic\"}}"),
    };
    let vals: Vec<f64> = g.coefficients().iter().map(|c| c.re).collect();
    serde_json::to_string(&serde_json::json!({ name: vals })).expect("grid serialization")
}

fn run_decompose(common: &Common) -> Result<bool> {
    let cfg = load_config(common)?;
    if !cfg.surface.is_torus() {
        return Err(ThermoError::NonCompactChart);
    }
    let surface = cfg.surface.build()?;
    let params = cfg.thermostat.build(&surface)?;
    let mut rng = rng(cfg.seed);
    let pair = TensorPair {
        surface: Rc::clone(&surface),
        q11: random_band_limited(&surface, 2, 1.0, &mut rng),
        q12: random_band_limited(&surface, 2, 1.0, &mut rng),
        q22: random_band_limited(&surface, 2, 1.0, &mut rng),
        s1: random_band_limited(&surface, 2, 1.0, &mut rng),
        s2: random_band_limited(&surface, 2, 1.0, &mut rng),
    };
    let dec = solenoidal_decompose(&pair, &params, 1e-10, 10_000)?;
    let mut report = RunReport::new("decompose");
    report.seed = Some(cfg.seed);
    report.checks.push(
        IdentityReport::new("solenoidal-residual", dec.divergence_ratio, 0.0)
            .term("iterations", dec.iterations as f64)
            .term("cg-residual", dec.cg_residual)
            .term("|f|", pair.norm_sq()?.sqrt())
            .term("|f_s|", dec.f_s.norm_sq()?.sqrt())
            .term("|w|", dec.w.norm_sq()?.sqrt())
            .with_abs_tolerance(cfg.tol.max(1e-6)),
    );
    let extra = vec![
        ("w_h.json", grid_json("h", &dec.w.h)),
        ("fs_q11.json", grid_json("q11", &dec.f_s.q11)),
    ];
    emit(&report, common, &extra)?;
    Ok(report.all_pass())
}

fn run_xray(common: &Common) -> Result<bool> {
    let cfg = load_config(common)?;
    if !cfg.surface.is_torus() {
        return Err(ThermoError::NonCompactChart);
    }
    let surface = cfg.surface.build()?;
    // A constant-magnetic thermostat has circular orbits of known period;
    // the closed-orbit search refines one and the potential-pair kernel is
    // audited on it.
    let kappa = 0.8;
    let params = ThermostatParams::magnetic(Expr::constant(kappa), Some(&surface));
    let system = FlowSystem::new(&surface, &params);
    let orbit = find_closed_orbit(
        &system,
        SmPoint::new(1.0, 2.0, 0.5),
        std::f64::consts::TAU / kappa,
        DEFAULT_DT,
    )?;
    let mut rng = rng(cfg.seed);
    let w = PotentialPair {
        surface: Rc::clone(&surface),
        psi1: random_band_limited(&surface, 2, 1.0, &mut rng),
        psi2: random_band_limited(&surface, 2, 1.0, &mut rng),
        h: random_band_limited(&surface, 2, 1.0, &mut rng),
    };
    let p = d_op(&w, &params)?.restriction();
    let res = xray_transform(&p, &orbit.trajectory);
    let mut report = RunReport::new("xray");
    report.seed = Some(cfg.seed);
    report.checks.push(
        IdentityReport::new("potential-pair-kernel", res.integral, 0.0)
            .term("closure-defect", res.closure_defect)
            .term("period", orbit.period)
            .with_abs_tolerance(cfg.tol.max(1e-6)),
    );
    emit(&report, common, &[])?;
    Ok(report.all_pass())
}

/// Least-squares slope of log(residual) against log(level).
fn fitted_order(levels: &[f64], residuals: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = levels
        .iter()
        .zip(residuals)
        .filter(|(_, &r)| r > 0.0)
        .map(|(&l, &r)| (l.ln(), r.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn run_sweep(common: &Common, kind: &str) -> Result<bool> {
    let cfg = load_config(common)?;
    let mut report = RunReport::new("sweep");
    let mut csv = String::from("level,residual\n");
    match kind {
        "flow" => {
            // Self-convergence of the RK4 endpoint under dt halving.
            let surface = Rc::new(Surface::torus(
                std::f64::consts::TAU,
                std::f64::consts::TAU,
                32,
                Expr::scale(&Expr::mul(&Expr::cos(&Expr::x()), &Expr::sin(&Expr::y())), 0.1),
            ));
            let params = ThermostatParams::from_exprs(
                Expr::scale(&Expr::cos(&Expr::x()), 0.3),
                Expr::scale(&Expr::sin(&Expr::y()), 0.2),
                Some(&surface),
            );
            let system = FlowSystem::new(&surface, &params);
            let p0 = SmPoint::new(0.4, 1.3, 0.9);
            let t = 2.0;
            // Steps large enough that the O(dt^4) error is well above the
            // roundoff floor, but below the step-size guard.
            let dts = [1e-1, 5e-2, 2.5e-2, 1.25e-2];
            let mut levels = Vec::new();
            let mut residuals = Vec::new();
            for &dt in &dts {
                let a = flow_endpoint(&system, p0, t, dt)?;
                let b = flow_endpoint(&system, p0, t, dt / 2.0)?;
                let r = surface.sm_distance(&a, &b);
                csv.push_str(&format!("{dt:e},{r:e}\n"));
                levels.push(dt);
                residuals.push(r);
            }
            let order = fitted_order(&levels, &residuals);
            report.checks.push(
                IdentityReport::new("flow-self-convergence-order", order, 4.0)
                    .with_abs_tolerance(0.3),
            );
        }
        "spectral" => {
            // Commutator residual on an analytic curved torus versus N.
            let mut floor = f64::INFINITY;
            for &n in &[16usize, 32, 64] {
                let surface = Rc::new(Surface::torus(
                    std::f64::consts::TAU,
                    std::f64::consts::TAU,
                    n,
                    Expr::scale(
                        &Expr::mul(&Expr::cos(&Expr::x()), &Expr::sin(&Expr::y())),
                        0.1,
                    ),
                ));
                let battery = standard_battery(&surface);
                let r = verify_commutators(&surface, &battery)?.max();
                csv.push_str(&format!("{n},{r:e}\n"));
                floor = floor.min(r);
            }
            report.checks.push(
                IdentityReport::new("spectral-floor-by-64", floor, 0.0)
                    .with_abs_tolerance(1e-10),
            );
        }
        "constant" => {
            // Constant fields are annihilated by the whole frame at every
            // resolution.
            let mut worst: f64 = 0.0;
            for &n in &[16usize, 32, 64] {
                let surface = Rc::new(Surface::flat_torus(
                    std::f64::consts::TAU,
                    std::f64::consts::TAU,
                    n,
                ));
                let u = SmField::constant(&surface, 1.5);
                let r = u
                    .x_op()?
                    .max_mode_abs()
                    .max(u.h_op()?.max_mode_abs())
                    .max(u.v_op().max_mode_abs());
                csv.push_str(&format!("{n},{r:e}\n"));
                worst = worst.max(r);
            }
            report
                .checks
                .push(IdentityReport::new("constant-sweep-max", worst, 0.0)
                    .with_abs_tolerance(1e-14));
        }
        other => return Err(ThermoError::Config(format!("unknown sweep '{other}'"))),
    }
    let _ = cfg;
    emit(&report, common, &[("sweep.csv", csv)])?;
    Ok(report.all_pass())
}

fn dispatch(cli: Cli) -> Result<bool> {
    // Everything below is single-threaded; the env var is validated and
    // capped here so misconfiguration fails early.
    let _threads = thread_limit();
    match cli.command {
        Command::Verify { common, identity } => run_verify(&common, identity),
        Command::Riccati {
            common,
            chart,
            e_scale,
            t,
        } => run_riccati(&common, chart, e_scale, t),
        Command::Flow {
            common,
            t,
            dump_orbit,
        } => run_flow(&common, t, dump_orbit),
        Command::Jacobi { common, t } => run_jacobi(&common, t),
        Command::Decompose { common } => run_decompose(&common),
        Command::Xray { common } => run_xray(&common),
        Command::Sweep { common, kind } => run_sweep(&common, &kind),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(
            e @ (ThermoError::Config(_)
            | ThermoError::Incompatible(_)
            | ThermoError::NonCompactChart
            | ThermoError::Json(_)),
        ) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

