//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (visible with `--nocapture`). Run via
//! `cargo test -p twistorlab-cli --test acceptance`.

use nalgebra::{Matrix3, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::process::Command;
use twistorlab_core::chart::CATALOG_NAMES;
use twistorlab_core::taming::{self, TamingClass};
use twistorlab_core::twistor::{self, TwistorContext, TwistorPoint, ZTangent};
use twistorlab_core::{catalog, curvature, curves, hyperkahler};

struct Criterion {
    number: usize,
    summary: &'static str,
}

impl Criterion {
    fn new(number: usize, summary: &'static str) -> Self {
        Criterion { number, summary }
    }

    fn check(&self, ok: bool, detail: &str) {
        if ok {
            println!("[PASS] criterion {}: {} ({detail})", self.number, self.summary);
        } else {
            println!("[FAIL] criterion {}: {} ({detail})", self.number, self.summary);
            panic!("criterion {} failed: {detail}", self.number);
        }
    }
}

fn random_theta<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        if v.norm() > 1e-3 {
            return v.normalize();
        }
    }
}

#[test]
fn criterion_01_trace_identities() {
    let criterion = Criterion::new(1, "tr A = tr C = R/4 over the catalog");
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for name in CATALOG_NAMES {
        let chart = catalog(name).unwrap();
        for _ in 0..50 {
            let x = chart.domain().sample(&mut rng);
            let b = curvature::blocks_at(&chart, &x).unwrap();
            let scale = b.scalar.abs().max(1.0);
            worst = worst.max((b.a.trace() - b.scalar / 4.0).abs() / scale);
            worst = worst.max((b.c.trace() - b.scalar / 4.0).abs() / scale);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    criterion.check(
        worst < 1e-8 && elapsed < 5.0,
        &format!("max deviation {worst:.2e}, {elapsed:.2} s"),
    );
}

#[test]
fn criterion_02_constant_curvature_blocks() {
    let criterion = Criterion::new(2, "space-form blocks (Id, 0, 12) and (-Id, 0, -12)");
    let round = catalog("round-s4").unwrap();
    let b = curvature::blocks_at(&round, &[0.21, -0.4, 0.13, 0.33]).unwrap();
    let mut worst = (b.a - Matrix3::identity()).norm();
    worst = worst.max(b.b.norm());
    worst = worst.max((b.scalar - 12.0).abs());

    let hyper = catalog("hyperbolic-h4").unwrap();
    let b = curvature::blocks_at(&hyper, &[0.2, 0.1, -0.25, 0.05]).unwrap();
    worst = worst.max((b.a + Matrix3::identity()).norm());
    worst = worst.max(b.b.norm());
    worst = worst.max((b.scalar + 12.0).abs());
    criterion.check(worst < 1e-8, &format!("max deviation {worst:.2e}"));
}

#[test]
fn criterion_03_taming_classification() {
    let criterion = Criterion::new(3, "taming classes across the catalog");
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut detail = String::new();
    let mut ok = true;

    let case = |name: &str, rng: &mut ChaCha8Rng| {
        let chart = catalog(name).unwrap();
        let x = chart.domain().sample(rng);
        taming::classify(&curvature::blocks_at(&chart, &x).unwrap())
    };
    let v = case("round-s4", &mut rng);
    ok &= v.class == TamingClass::TamedJPlus && (v.margin - 1.0).abs() < 1e-8;
    let v = case("hyperbolic-h4", &mut rng);
    ok &= v.class == TamingClass::TamedJMinus && (v.margin - 1.0).abs() < 1e-8;
    let v = case("complex-hyperbolic-ch2", &mut rng);
    ok &= v.class == TamingClass::TamedJMinus && v.margin > 0.0;
    detail.push_str(&format!("ch2 margin {:.3}; ", v.margin));
    for name in ["eguchi-hanson", "flat"] {
        let v = case(name, &mut rng);
        ok &= v.class == TamingClass::NotTamed && v.margin.abs() < 1e-6;
        detail.push_str(&format!("{name} margin {:.2e}; ", v.margin));
    }
    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < 10.0;
    criterion.check(ok, &format!("{detail}{elapsed:.2} s"));
}

#[test]
fn criterion_04_margin_oracle_equivalence() {
    let criterion = Criterion::new(4, "lattice+polish margin matches the dense-scan oracle");
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let a_raw = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let a = (a_raw + a_raw.transpose()) * 0.5;
        let b = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let (fast, _) = taming::taming_margin(&a, &b);
        let brute = taming::oracle::dense_margin(&a, &b);
        worst = worst.max((fast - brute).abs());
    }
    criterion.check(worst < 1e-4, &format!("max deviation {worst:.2e}"));
}

#[test]
fn criterion_05_reznikov_form() {
    let criterion = Criterion::new(5, "fibre integral 4pi, closedness, taming and degeneracy");
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut worst_integral: f64 = 0.0;
    for name in CATALOG_NAMES {
        let chart = catalog(name).unwrap();
        let x = chart.domain().sample(&mut rng);
        let integral = twistor::fibre_integral(&chart, &x).unwrap();
        worst_integral = worst_integral.max((integral - 4.0 * std::f64::consts::PI).abs());
    }

    let mut worst_domega: f64 = 0.0;
    for name in ["flat", "round-s4", "s2xs2", "eguchi-hanson-bolt"] {
        let chart = catalog(name).unwrap();
        let x = chart.domain().sample(&mut rng);
        let p = TwistorPoint::new(x, random_theta(&mut rng)).unwrap();
        worst_domega = worst_domega.max(twistor::d_omega_check(&chart, &p, 1e-3).unwrap());
    }

    let round = catalog("round-s4").unwrap();
    let mut taming_ok = true;
    for _ in 0..100 {
        let x = round.domain().sample(&mut rng);
        let ctx = TwistorContext::new(&round, &x).unwrap();
        let theta = random_theta(&mut rng);
        let mut u = ZTangent {
            x_dot: Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0)),
            theta_dot: Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
        };
        u.theta_dot -= theta * u.theta_dot.dot(&theta);
        if u.x_dot.norm() + u.theta_dot.norm() < 1e-3 {
            continue;
        }
        let ju = ctx.acs_apply(&theta, 1.0, &u);
        taming_ok &= ctx.omega(&theta, &u, &ju) > 0.0;
    }

    let eh = catalog("eguchi-hanson").unwrap();
    let mut worst_horizontal: f64 = 0.0;
    for _ in 0..50 {
        let x = eh.domain().sample(&mut rng);
        let ctx = TwistorContext::new(&eh, &x).unwrap();
        let theta = random_theta(&mut rng);
        let h1 = ctx.horizontal_lift(&theta, Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0)));
        let h2 = ctx.horizontal_lift(&theta, Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0)));
        worst_horizontal = worst_horizontal.max(ctx.omega(&theta, &h1, &h2).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    criterion.check(
        worst_integral < 1e-6
            && worst_domega < 1e-5
            && taming_ok
            && worst_horizontal < 1e-6
            && elapsed < 60.0,
        &format!(
            "integral dev {worst_integral:.2e}, d-omega {worst_domega:.2e}, \
             horizontal {worst_horizontal:.2e}, {elapsed:.1} s"
        ),
    );
}

#[test]
fn criterion_06_integrability_dichotomy() {
    let criterion = Criterion::new(6, "Nijenhuis dichotomy for J+ and J-");
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut ok = true;
    let mut detail = String::new();
    for name in ["round-s4", "hyperbolic-h4"] {
        let chart = catalog(name).unwrap();
        let x = chart.domain().sample(&mut rng);
        let p = TwistorPoint::new(x, random_theta(&mut rng)).unwrap();
        let n = twistor::nijenhuis(&chart, &p, 1.0).unwrap();
        ok &= n < 1e-4;
        detail.push_str(&format!("{name} N+ {n:.1e}; "));
    }
    let chart = catalog("s2xs2").unwrap();
    let x = chart.domain().sample(&mut rng);
    let p = TwistorPoint::new(x, random_theta(&mut rng)).unwrap();
    let n = twistor::nijenhuis(&chart, &p, 1.0).unwrap();
    ok &= n > 1e-2;
    detail.push_str(&format!("s2xs2 N+ {n:.1e}; "));
    let mut min_minus = f64::INFINITY;
    for name in CATALOG_NAMES {
        let chart = catalog(name).unwrap();
        let x = chart.domain().sample(&mut rng);
        let p = TwistorPoint::new(x, random_theta(&mut rng)).unwrap();
        let n = twistor::nijenhuis(&chart, &p, -1.0).unwrap();
        min_minus = min_minus.min(n);
    }
    ok &= min_minus > 1e-2;
    detail.push_str(&format!("min N- {min_minus:.1e}"));
    criterion.check(ok, &detail);
}

#[test]
fn criterion_07_hyperkaehler_triple() {
    let criterion = Criterion::new(7, "quaternion relations, parallel triple, EH self-check");
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let mut worst_quat: f64 = 0.0;
    let mut worst_parallel: f64 = 0.0;
    for name in ["eguchi-hanson", "eguchi-hanson-bolt"] {
        let chart = catalog(name).unwrap();
        let triple = hyperkahler::hk_triple(&chart).unwrap();
        for _ in 0..10 {
            let x = chart.domain().sample(&mut rng);
            let geo = curvature::geometry_at(&chart, &x).unwrap();
            worst_quat = worst_quat.max(triple.check_at(&geo));
            for k in 0..3 {
                worst_parallel = worst_parallel.max(triple.parallelism_defect(&x, k).unwrap());
            }
        }
    }

    let chart = catalog("eguchi-hanson").unwrap();
    let samples: Vec<[f64; 4]> = (0..32)
        .map(|_| {
            let v = Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0_f64)).normalize();
            let r = rng.random_range(1.2..4.0);
            [v[0] * r, v[1] * r, v[2] * r, v[3] * r]
        })
        .collect();
    let report = hyperkahler::eh_selfcheck(&chart, &samples).unwrap();
    criterion.check(
        worst_quat < 1e-5 && worst_parallel < 1e-5 && report.passed,
        &format!(
            "quaternion {worst_quat:.1e}, parallel {worst_parallel:.1e}, \
             self-check max {:.1e}",
            report.max_ricci.max(report.max_a_block).max(report.max_b_block)
        ),
    );
}

#[test]
fn criterion_08_bolt_lift_regularity() {
    let criterion = Criterion::new(8, "bolt operator: kernel 6, cokernel 0, stable gap");
    let start = std::time::Instant::now();
    let chart = catalog("eguchi-hanson-bolt").unwrap();
    let triple = hyperkahler::hk_triple(&chart).unwrap();
    let mut ok = true;
    let mut detail = String::new();
    for n in [16usize, 24, 32] {
        let map = curves::bolt_lift(&chart, n).unwrap();
        let j = curves::ProductJ {
            triple: &triple,
            sign: 1.0,
        };
        let op = curves::linearize(&map, &j).unwrap();
        let (k, c, gap) = op.kernel_cokernel(1e-5).unwrap();
        ok &= (k, c) == (6, 0) && gap.ratio > 100.0;
        if n == 24 {
            let angles = curves::kernel_moebius_angles(&op, &map);
            let max_angle = angles.last().copied().unwrap_or(f64::NAN);
            ok &= max_angle < 0.15;
            detail.push_str(&format!("angles<= {max_angle:.3} rad; "));
        }
        detail.push_str(&format!("n={n}: ({k},{c}) gap {:.1e}; ", gap.ratio));
    }
    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < 600.0;
    criterion.check(ok, &format!("{detail}{elapsed:.0} s"));
}

#[test]
fn criterion_09_continuation_mechanism() {
    let criterion = Criterion::new(9, "continued spheres keep zero area; no taming margin");
    let start = std::time::Instant::now();
    let report = curves::mechanism_demo(&[0.0, 1e-3, 1e-2], 24).unwrap();
    let mut ok = true;
    let mut detail = String::new();
    for row in &report.rows {
        ok &= row.converged && row.residual_sup < 1e-8;
        ok &= row.omega_integral.abs() < 5e-3;
        ok &= row.taming_min_margin <= 1e-9;
        detail.push_str(&format!(
            "t={:.0e}: it {}, res {:.1e}, integral {:.1e}, margin {:.1e}; ",
            row.t, row.iterations, row.residual_sup, row.omega_integral, row.taming_min_margin
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < 900.0;
    criterion.check(ok, &format!("{detail}{elapsed:.0} s"));
}

#[test]
fn criterion_10_cli_determinism() {
    let criterion = Criterion::new(10, "identical configs give byte-identical JSON");
    let exe = env!("CARGO_BIN_EXE_twistorlab");
    let runs: Vec<Vec<&str>> = vec![
        vec![
            "analyze",
            "--metric",
            "fubini-study-cp2",
            "--grid",
            "2",
            "--half",
            "0.4,0.4,0.4,0.4",
            "--seed",
            "11",
        ],
        vec!["nijenhuis", "--metric", "s2xs2", "--samples", "2", "--seed", "3"],
        vec!["reznikov-check", "--metric", "eguchi-hanson", "--samples", "2"],
    ];
    let mut ok = true;
    for args in &runs {
        let out1 = Command::new(exe).args(args).output().expect("run CLI");
        let out2 = Command::new(exe).args(args).output().expect("run CLI");
        ok &= out1.stdout == out2.stdout && !out1.stdout.is_empty();
    }
    // Validation errors exit with code 2.
    let bad = Command::new(exe)
        .args(["analyze", "--metric", "nosuch"])
        .output()
        .expect("run CLI");
    ok &= bad.status.code() == Some(2);
    criterion.check(ok, "three command repeats byte-identical; exit codes honoured");
}
