//! Command implementations: each produces a report value tree plus an exit
//! status classifying borderline numerics.

use crate::config::{Command, RunConfig};
use crate::report::Value;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twistorlab_core::chart::MetricChart;
use twistorlab_core::error::EvalError;
use twistorlab_core::taming::GridSpec;
use twistorlab_core::twistor::TwistorPoint;
use twistorlab_core::{curves, taming, twistor};

/// Outcome classification mapped to process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Degenerate margins or spectral gaps: a legitimate scientific result,
    /// flagged distinctly (exit code 3).
    Inconclusive,
}

pub struct CommandOutput {
    pub report: Value,
    pub status: Status,
}

fn conventions() -> Value {
    let mut v = Value::object();
    v.set(
        "curvature_normalization",
        Value::Str("unit round 4-sphere has A = Id, C = Id, R = 12; tr A = tr C = R/4".into()),
    );
    v.set(
        "wedge_inner_product",
        Value::Str("simple wedges of orthonormal covectors are orthonormal (no 1/2 factor)".into()),
    );
    v.set(
        "fibre_orientation",
        Value::Str(
            "vertical block of the natural 2-form is the positive area form; \
             sign pinned by J+ taming on the round 4-sphere (toolkit convention)"
                .into(),
        ),
    );
    v.set(
        "b_block",
        Value::Str(
            "B identified with trace-free Ricci through the sigma bases; \
             overall constant is a toolkit convention"
                .into(),
        ),
    );
    v
}

fn config_echo(config: &RunConfig) -> Value {
    let mut v = Value::object();
    for (key, val) in config.echo() {
        v.set(&key, Value::Str(val));
    }
    v
}

fn report_shell(config: &RunConfig) -> Value {
    let mut root = Value::object();
    root.set("tool_version", Value::Str(env!("CARGO_PKG_VERSION").into()));
    root.set("config_echo", config_echo(config));
    root.set("conventions", conventions());
    root
}

fn verdict_value(verdict: &taming::TamingVerdict) -> Value {
    let mut v = Value::object();
    v.set("margin", Value::Float(verdict.margin));
    v.set("det_a", Value::Float(verdict.det_a));
    v.set("class", Value::Str(verdict.class.to_string()));
    v.set("degenerate", Value::Bool(verdict.degenerate));
    v.set(
        "argmin_theta",
        Value::floats(&[
            verdict.argmin_theta.x,
            verdict.argmin_theta.y,
            verdict.argmin_theta.z,
        ]),
    );
    v
}

pub fn run(config: &RunConfig) -> Result<CommandOutput, EvalError> {
    let mut root = report_shell(config);
    let status = match config.command {
        Command::Analyze => analyze(config, &mut root)?,
        Command::TamingScan => taming_scan(config, &mut root)?,
        Command::Nijenhuis => nijenhuis_cmd(config, &mut root)?,
        Command::ReznikovCheck => reznikov_check(config, &mut root)?,
        Command::SphereRegularity => sphere_regularity(config, &mut root)?,
        Command::MechanismDemo => mechanism_demo_cmd(config, &mut root)?,
    };
    Ok(CommandOutput {
        report: root,
        status,
    })
}

fn resolve(config: &RunConfig) -> Result<MetricChart, EvalError> {
    config
        .resolve_metric()
        .map_err(|e| EvalError::Argument(e))
}

fn grid_of(config: &RunConfig) -> GridSpec {
    GridSpec {
        center: config.center,
        half: config.half,
        n: config.grid_n,
    }
}

fn analyze(config: &RunConfig, root: &mut Value) -> Result<Status, EvalError> {
    let chart = resolve(config)?;
    let scan = taming::region_scan(&chart, &grid_of(config))?;
    let mut points = Vec::new();
    for p in &scan.points {
        let mut v = Value::object();
        v.set("x", Value::floats(&p.x));
        let mut blocks = Value::object();
        blocks.set("A", Value::matrix3(&p.blocks.a));
        blocks.set("B", Value::matrix3(&p.blocks.b));
        blocks.set("C", Value::matrix3(&p.blocks.c));
        v.set("blocks", blocks);
        v.set("scalar", Value::Float(p.blocks.scalar));
        v.set("verdict", verdict_value(&p.verdict));
        points.push(v);
    }
    root.set("per_point", Value::Array(points));
    summaries(root, &scan, &chart);
    Ok(scan_status(&scan))
}

fn taming_scan(config: &RunConfig, root: &mut Value) -> Result<Status, EvalError> {
    let chart = resolve(config)?;
    let scan = taming::region_scan(&chart, &grid_of(config))?;
    let mut points = Vec::new();
    for p in &scan.points {
        let mut v = Value::object();
        v.set("x", Value::floats(&p.x));
        v.set("verdict", verdict_value(&p.verdict));
        points.push(v);
    }
    root.set("per_point", Value::Array(points));
    summaries(root, &scan, &chart);
    Ok(scan_status(&scan))
}

fn summaries(root: &mut Value, scan: &taming::RegionReport, chart: &MetricChart) {
    let mut s = Value::object();
    s.set("metric", Value::Str(chart.name().into()));
    s.set("region_class", Value::Str(scan.class.to_string()));
    s.set("min_margin", Value::Float(scan.min_margin));
    s.set("points_evaluated", Value::Int(scan.points.len() as i64));
    s.set("points_skipped", Value::Int(scan.skipped.len() as i64));
    if !scan.skipped.is_empty() {
        let items: Vec<Value> = scan
            .skipped
            .iter()
            .map(|(x, msg)| {
                let mut o = Value::object();
                o.set("x", Value::floats(x));
                o.set("error", Value::Str(msg.clone()));
                o
            })
            .collect();
        s.set("skipped", Value::Array(items));
    }
    root.set("summaries", s);
}

fn scan_status(scan: &taming::RegionReport) -> Status {
    if scan.points.iter().any(|p| p.verdict.degenerate) {
        Status::Inconclusive
    } else {
        Status::Ok
    }
}

fn sample_points(
    chart: &MetricChart,
    count: usize,
    seed: u64,
) -> Vec<([f64; 4], Vector3<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let x = chart.domain().sample(&mut rng);
            let theta = loop {
                let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0_f64));
                if v.norm() > 1e-3 {
                    break v.normalize();
                }
            };
            (x, theta)
        })
        .collect()
}

fn nijenhuis_cmd(config: &RunConfig, root: &mut Value) -> Result<Status, EvalError> {
    let chart = resolve(config)?;
    let mut points = Vec::new();
    let mut max_plus: f64 = 0.0;
    let mut min_minus = f64::INFINITY;
    for (x, theta) in sample_points(&chart, config.samples, config.seed) {
        let p = TwistorPoint::new(x, theta)?;
        let n_plus = twistor::nijenhuis(&chart, &p, 1.0)?;
        let n_minus = twistor::nijenhuis(&chart, &p, -1.0)?;
        max_plus = max_plus.max(n_plus);
        min_minus = min_minus.min(n_minus);
        let mut v = Value::object();
        v.set("x", Value::floats(&x));
        v.set("theta", Value::floats(&[theta.x, theta.y, theta.z]));
        v.set("nijenhuis_j_plus", Value::Float(n_plus));
        v.set("nijenhuis_j_minus", Value::Float(n_minus));
        points.push(v);
    }
    root.set("per_point", Value::Array(points));
    let mut s = Value::object();
    s.set("metric", Value::Str(chart.name().into()));
    s.set("max_nijenhuis_j_plus", Value::Float(max_plus));
    s.set("min_nijenhuis_j_minus", Value::Float(min_minus));
    s.set(
        "j_plus_integrable",
        Value::Bool(max_plus < 1e-4),
    );
    root.set("summaries", s);
    Ok(Status::Ok)
}

fn reznikov_check(config: &RunConfig, root: &mut Value) -> Result<Status, EvalError> {
    let chart = resolve(config)?;
    let mut points = Vec::new();
    let mut worst_integral: f64 = 0.0;
    let mut worst_domega: f64 = 0.0;
    let mut taming_positive = true;
    let mut max_horizontal: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    for (x, theta) in sample_points(&chart, config.samples, config.seed) {
        let p = TwistorPoint::new(x, theta)?;
        let integral = twistor::fibre_integral(&chart, &x)?;
        let domega = twistor::d_omega_check(&chart, &p, 1e-3)?;
        worst_integral = worst_integral.max((integral - 4.0 * std::f64::consts::PI).abs());
        worst_domega = worst_domega.max(domega);

        let ctx = twistor::TwistorContext::new(&chart, &x)?;
        // Taming sample along J+ directions and horizontal degeneracy probe.
        let mut u = twistor::ZTangent {
            x_dot: nalgebra::Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0)),
            theta_dot: Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
        };
        u.theta_dot -= theta * u.theta_dot.dot(&theta);
        let ju = ctx.acs_apply(&theta, 1.0, &u);
        let tame = ctx.omega(&theta, &u, &ju);
        let h1 = ctx.horizontal_lift(&theta, nalgebra::Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0)));
        let h2 = ctx.horizontal_lift(&theta, nalgebra::Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0)));
        let horizontal = ctx.omega(&theta, &h1, &h2);
        max_horizontal = max_horizontal.max(horizontal.abs());
        if tame <= 0.0 {
            taming_positive = false;
        }

        let mut v = Value::object();
        v.set("x", Value::floats(&x));
        v.set("fibre_integral", Value::Float(integral));
        v.set("d_omega", Value::Float(domega));
        v.set("omega_u_j_plus_u", Value::Float(tame));
        v.set("omega_horizontal", Value::Float(horizontal));
        points.push(v);
    }
    root.set("per_point", Value::Array(points));
    let mut s = Value::object();
    s.set("metric", Value::Str(chart.name().into()));
    s.set("max_fibre_integral_deviation", Value::Float(worst_integral));
    s.set("max_d_omega", Value::Float(worst_domega));
    s.set("all_j_plus_samples_positive", Value::Bool(taming_positive));
    s.set("max_horizontal_omega", Value::Float(max_horizontal));
    root.set("summaries", s);
    Ok(Status::Ok)
}

fn sphere_regularity(config: &RunConfig, root: &mut Value) -> Result<Status, EvalError> {
    let chart = twistorlab_core::catalog("eguchi-hanson-bolt")?;
    let triple = twistorlab_core::hyperkahler::hk_triple(&chart)?;
    let map = curves::bolt_lift(&chart, config.sphere_n)?;
    let j = curves::ProductJ {
        triple: &triple,
        sign: 1.0,
    };
    let residual = curves::cr_residual(&map, &j)?;
    let op = match curves::linearize(&map, &j) {
        Ok(op) => op,
        Err(EvalError::Inconclusive(msg)) => {
            let mut s = Value::object();
            s.set("inconclusive", Value::Str(msg));
            root.set("summaries", s);
            return Ok(Status::Inconclusive);
        }
        Err(e) => return Err(e),
    };
    let (k, c, gap) = op.kernel_cokernel(config.gap_factor)?;
    let angles = curves::kernel_moebius_angles(&op, &map);

    let mut s = Value::object();
    s.set("grid_n", Value::Int(config.sphere_n as i64));
    s.set("lift_residual_sup", Value::Float(residual.sup));
    s.set("kernel", Value::Int(k as i64));
    s.set("cokernel", Value::Int(c as i64));
    s.set("gap_ratio", Value::Float(gap.ratio));
    s.set("sigma_max", Value::Float(gap.sigma_max));
    s.set("largest_near_kernel_sigma", Value::Float(gap.largest_tiny));
    s.set("smallest_retained_sigma", Value::Float(gap.smallest_retained));
    s.set(
        "obstruction_singular_values",
        Value::floats(&gap.obstruction_singular_values),
    );
    s.set(
        "moebius_principal_angles",
        Value::floats(&angles),
    );
    s.set(
        "index_6_minus_6g",
        Value::Int(6),
    );
    root.set("summaries", s);
    let status = if gap.ratio > 100.0 { Status::Ok } else { Status::Inconclusive };
    Ok(status)
}

fn mechanism_demo_cmd(config: &RunConfig, root: &mut Value) -> Result<Status, EvalError> {
    let report = curves::mechanism_demo(&config.t_values, config.sphere_n)?;
    let mut rows = Vec::new();
    let mut all_converged = true;
    for row in &report.rows {
        all_converged &= row.converged;
        let mut v = Value::object();
        v.set("t", Value::Float(row.t));
        v.set("converged", Value::Bool(row.converged));
        v.set("newton_iterations", Value::Int(row.iterations as i64));
        v.set("residual_sup", Value::Float(row.residual_sup));
        v.set("omega_integral", Value::Float(row.omega_integral));
        v.set("taming_min_margin", Value::Float(row.taming_min_margin));
        rows.push(v);
    }
    root.set("rows", Value::Array(rows));
    let mut s = Value::object();
    s.set("grid_n", Value::Int(report.grid_n as i64));
    s.set("perturbation", Value::Str(report.perturbation.clone()));
    s.set("all_converged", Value::Bool(all_converged));
    root.set("summaries", s);
    Ok(if all_converged { Status::Ok } else { Status::Inconclusive })
}
