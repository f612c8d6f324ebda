//! Hyperkaehler structure of the flat and Eguchi-Hanson charts: the triple
//! of parallel complex structures, their Kaehler forms, the holomorphic
//! symplectic form, and the product description of the twistor space.
//!
//! On each of these charts the holomorphic symplectic form is a constant
//! multiple of `dz ^ dw` in the chart coordinates, so `I2` and `I3` come
//! from raising an index of its real and imaginary parts with the metric,
//! and `I1` is the integrable chart complex structure.

use crate::chart::MetricChart;
use crate::curvature::{self, PointGeometry};
use crate::error::{EvalError, Result};
use nalgebra::{Matrix4, Vector3, Vector4};

/// Constant matrix of the chart complex structure (multiplication by `i`
/// in `z1 = x1 + i x2`, `z2 = x3 + i x4`).
pub fn chart_complex_structure() -> Matrix4<f64> {
    let mut j = Matrix4::zeros();
    j[(1, 0)] = 1.0;
    j[(0, 1)] = -1.0;
    j[(3, 2)] = 1.0;
    j[(2, 3)] = -1.0;
    j
}

/// Coordinate component matrices of `Re(lambda dz ^ dw)` and
/// `Im(lambda dz ^ dw)` for a real constant `lambda`.
fn holomorphic_symplectic_parts(lambda: f64) -> [Matrix4<f64>; 2] {
    let mut re = Matrix4::zeros();
    re[(0, 2)] = lambda;
    re[(2, 0)] = -lambda;
    re[(1, 3)] = -lambda;
    re[(3, 1)] = lambda;
    let mut im = Matrix4::zeros();
    im[(0, 3)] = lambda;
    im[(3, 0)] = -lambda;
    im[(1, 2)] = lambda;
    im[(2, 1)] = -lambda;
    [re, im]
}

/// A hyperkaehler triple on a chart: evaluators for the three complex
/// structures and their Kaehler forms.
#[derive(Clone, Debug)]
pub struct HyperkaehlerTriple {
    pub chart: MetricChart,
    /// Constant coordinate forms `omega_2`, `omega_3`.
    omega_23: [Matrix4<f64>; 2],
}

/// Build the triple for a hyperkaehler catalog chart. The normalisation of
/// the holomorphic symplectic form is fixed by the Monge-Ampere equation of
/// each chart's potential; the quaternion relations are spot-checked at
/// construction.
pub fn hk_triple(chart: &MetricChart) -> Result<HyperkaehlerTriple> {
    let lambda = match chart.name() {
        "flat" | "eguchi-hanson" => 1.0,
        "eguchi-hanson-bolt" => 0.5,
        other => {
            return Err(EvalError::Argument(format!(
                "chart '{other}' is not in the hyperkaehler catalog"
            )))
        }
    };
    let triple = HyperkaehlerTriple {
        chart: chart.clone(),
        omega_23: holomorphic_symplectic_parts(lambda),
    };
    // Light construction check; the full invariant suite lives in verify().
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x4b1d);
    for _ in 0..4 {
        let x = chart.domain().sample(&mut rng);
        let geo = curvature::geometry_at(chart, &x)?;
        let report = triple.check_at(&geo);
        if report > 1e-9 {
            return Err(EvalError::Validity {
                point: x,
                detail: format!("quaternion relations fail by {report}: chart not hyperkaehler"),
            });
        }
    }
    Ok(triple)
}

impl HyperkaehlerTriple {
    /// Constant coordinate forms of the real and imaginary parts of the
    /// holomorphic symplectic form.
    pub fn symplectic_parts(&self) -> [Matrix4<f64>; 2] {
        self.omega_23
    }

    /// `I_k` for `k = 0, 1, 2` (the triple indices 1, 2, 3).
    pub fn complex_structure(&self, geo: &PointGeometry, k: usize) -> Matrix4<f64> {
        match k {
            0 => chart_complex_structure(),
            1 | 2 => {
                // g(I u, v) = omega(u, v)  =>  I = -g^{-1} W.
                -(geo.g_inv * self.omega_23[k - 1])
            }
            _ => panic!("triple index out of range"),
        }
    }

    /// Kaehler form component matrix of `I_k`.
    pub fn kahler_form(&self, geo: &PointGeometry, k: usize) -> Matrix4<f64> {
        match k {
            0 => self.complex_structure(geo, 0).transpose() * geo.g,
            1 | 2 => self.omega_23[k - 1],
            _ => panic!("triple index out of range"),
        }
    }

    /// `I_a = a_1 I_1 + a_2 I_2 + a_3 I_3` for a unit sphere point `a`.
    pub fn acs(&self, geo: &PointGeometry, a: &Vector3<f64>) -> Matrix4<f64> {
        self.complex_structure(geo, 0) * a.x
            + self.complex_structure(geo, 1) * a.y
            + self.complex_structure(geo, 2) * a.z
    }

    /// Max quaternion-relation and orthogonality defect at one point.
    pub fn check_at(&self, geo: &PointGeometry) -> f64 {
        let i1 = self.complex_structure(geo, 0);
        let i2 = self.complex_structure(geo, 1);
        let i3 = self.complex_structure(geo, 2);
        let id = Matrix4::identity();
        let mut worst = (i1 * i1 + id).norm();
        worst = worst.max((i2 * i2 + id).norm());
        worst = worst.max((i3 * i3 + id).norm());
        worst = worst.max((i1 * i2 - i3).norm());
        worst = worst.max((i2 * i3 - i1).norm());
        worst = worst.max((i3 * i1 - i2).norm());
        for i in [i1, i2, i3] {
            worst = worst.max((i.transpose() * geo.g * i - geo.g).norm());
        }
        worst
    }

    /// Covariant-derivative defect `max_k |nabla_k I_a|` at a point by
    /// central differences of the structure field.
    pub fn parallelism_defect(&self, x: &[f64; 4], k: usize) -> Result<f64> {
        let h = 1e-4;
        let geo = curvature::geometry_at(&self.chart, x)?;
        let mut worst: f64 = 0.0;
        for dir in 0..4 {
            let mut xp = *x;
            xp[dir] += h;
            let mut xm = *x;
            xm[dir] -= h;
            let ip = self.complex_structure(&curvature::geometry_at(&self.chart, &xp)?, k);
            let im = self.complex_structure(&curvature::geometry_at(&self.chart, &xm)?, k);
            let di = (ip - im) / (2.0 * h);
            let i0 = self.complex_structure(&geo, k);
            // (nabla_dir I)^i_j = d_dir I^i_j + Gamma^i_{dir m} I^m_j
            //                      - I^i_m Gamma^m_{dir j}
            let mut nabla = di;
            for i in 0..4 {
                for j in 0..4 {
                    let mut s = 0.0;
                    for m in 0..4 {
                        s += geo.gamma[i][dir][m] * i0[(m, j)] - i0[(i, m)] * geo.gamma[m][dir][j];
                    }
                    nabla[(i, j)] += s;
                }
            }
            worst = worst.max(nabla.norm());
        }
        Ok(worst)
    }

    /// Closedness defect of the Kaehler form `omega_k` by a finite
    /// difference exterior derivative.
    pub fn closedness_defect(&self, x: &[f64; 4], k: usize) -> Result<f64> {
        let h = 1e-4;
        let form = |y: &[f64; 4]| -> Result<Matrix4<f64>> {
            Ok(self.kahler_form(&curvature::geometry_at(&self.chart, y)?, k))
        };
        let mut dw = [Matrix4::zeros(); 4];
        for (dir, slot) in dw.iter_mut().enumerate() {
            let mut xp = *x;
            xp[dir] += h;
            let mut xm = *x;
            xm[dir] -= h;
            *slot = (form(&xp)? - form(&xm)?) / (2.0 * h);
        }
        let mut worst: f64 = 0.0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                for l in (j + 1)..4 {
                    let v = dw[i][(j, l)] - dw[j][(i, l)] + dw[l][(i, j)];
                    worst = worst.max(v.abs());
                }
            }
        }
        Ok(worst)
    }

    /// Fibre coordinate of `I_a` in the `sigma^+` trivialisation of the
    /// chart at `x`: the unit self-dual components of its Kaehler form.
    pub fn fibre_theta(&self, geo: &PointGeometry, a: &Vector3<f64>) -> Result<Vector3<f64>> {
        let i_a = self.acs(geo, a);
        let w = i_a.transpose() * geo.g;
        let f = &geo.frame.frame;
        let w_frame = f * w * f.transpose();
        let sig = curvature::sigma_plus();
        let raw = Vector3::from_fn(|i, _| 0.5 * w_frame.component_mul(&sig[i]).sum());
        let n = raw.norm();
        if (n - std::f64::consts::SQRT_2).abs() > 1e-6 {
            return Err(EvalError::Numerical(format!(
                "Kaehler form is not self-dual unit: |theta_raw| = {n}"
            )));
        }
        Ok(raw / n)
    }
}

/// The product twistor structure `J_(x,a) = sign * I_a (+) a x .` applied
/// to a tangent `(x_dot, a_dot)` of the product of the chart with the
/// sphere of complex structures.
pub fn product_twistor_acs(
    triple: &HyperkaehlerTriple,
    geo: &PointGeometry,
    a: &Vector3<f64>,
    sign: f64,
    x_dot: &Vector4<f64>,
    a_dot: &Vector3<f64>,
) -> Result<(Vector4<f64>, Vector3<f64>)> {
    if (a.norm() - 1.0).abs() > 1e-9 {
        return Err(EvalError::Argument(format!(
            "sphere coordinate must be unit, |a| = {}",
            a.norm()
        )));
    }
    Ok((triple.acs(geo, a) * x_dot * sign, a.cross(a_dot)))
}

/// Report of [`eh_selfcheck`]: the acceptance gate for the Eguchi-Hanson
/// charts is Ricci-flatness plus anti-self-duality at every sample.
#[derive(Clone, Debug)]
pub struct SelfCheckReport {
    pub max_ricci: f64,
    pub max_a_block: f64,
    pub max_b_block: f64,
    pub passed: bool,
}

/// Tolerance of the Eguchi-Hanson self-check.
pub const EH_SELFCHECK_TOL: f64 = 1e-6;

/// Verify `max(|Ric|, |A|, |B|) < 1e-6` over the samples.
pub fn eh_selfcheck(chart: &MetricChart, samples: &[[f64; 4]]) -> Result<SelfCheckReport> {
    let mut report = SelfCheckReport {
        max_ricci: 0.0,
        max_a_block: 0.0,
        max_b_block: 0.0,
        passed: false,
    };
    for x in samples {
        let blocks = curvature::blocks_at(chart, x)?;
        report.max_ricci = report.max_ricci.max(blocks.ricci.norm());
        report.max_a_block = report.max_a_block.max(blocks.a.norm());
        report.max_b_block = report.max_b_block.max(blocks.b.norm());
    }
    report.passed = report.max_ricci < EH_SELFCHECK_TOL
        && report.max_a_block < EH_SELFCHECK_TOL
        && report.max_b_block < EH_SELFCHECK_TOL;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::catalog;
    use crate::twistor::{self, TwistorContext, ZTangent};
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flat_triple_is_standard_and_constant() {
        let chart = catalog("flat").unwrap();
        let triple = hk_triple(&chart).unwrap();
        for x in [[0.0; 4], [0.4, -0.2, 0.3, 0.6]] {
            let geo = curvature::geometry_at(&chart, &x).unwrap();
            assert!(triple.check_at(&geo) < 1e-14);
            let i1 = triple.complex_structure(&geo, 0);
            assert_relative_eq!((i1 - chart_complex_structure()).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn triple_endpoints_of_the_sphere() {
        let chart = catalog("eguchi-hanson").unwrap();
        let triple = hk_triple(&chart).unwrap();
        let geo = curvature::geometry_at(&chart, &[2.0, 0.1, -0.3, 0.4]).unwrap();
        let i1 = triple.acs(&geo, &Vector3::x());
        assert_relative_eq!(
            (i1 - triple.complex_structure(&geo, 0)).norm(),
            0.0,
            epsilon = 1e-14
        );
        let i3 = triple.acs(&geo, &Vector3::z());
        assert_relative_eq!(
            (i3 - triple.complex_structure(&geo, 2)).norm(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn quaternion_relations_on_eh_charts() {
        let mut rng = ChaCha8Rng::seed_from_u64(113);
        for name in ["eguchi-hanson", "eguchi-hanson-bolt"] {
            let chart = catalog(name).unwrap();
            let triple = hk_triple(&chart).unwrap();
            for _ in 0..50 {
                let x = chart.domain().sample(&mut rng);
                let geo = curvature::geometry_at(&chart, &x).unwrap();
                let defect = triple.check_at(&geo);
                assert!(defect < 1e-9, "{name} at {x:?}: defect {defect}");
            }
        }
    }

    #[test]
    fn triple_is_parallel_and_closed() {
        let mut rng = ChaCha8Rng::seed_from_u64(127);
        for name in ["eguchi-hanson", "eguchi-hanson-bolt"] {
            let chart = catalog(name).unwrap();
            let triple = hk_triple(&chart).unwrap();
            for _ in 0..6 {
                let x = chart.domain().sample(&mut rng);
                for k in 0..3 {
                    let par = triple.parallelism_defect(&x, k).unwrap();
                    assert!(par < 1e-5, "{name} I_{k} at {x:?}: |nabla I| = {par}");
                    let cls = triple.closedness_defect(&x, k).unwrap();
                    assert!(cls < 1e-5, "{name} omega_{k} at {x:?}: |d omega| = {cls}");
                }
            }
        }
    }

    #[test]
    fn non_hyperkaehler_chart_is_rejected() {
        let chart = catalog("round-s4").unwrap();
        assert!(hk_triple(&chart).is_err());
    }

    #[test]
    fn product_acs_squares_to_minus_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(131);
        let chart = catalog("eguchi-hanson-bolt").unwrap();
        let triple = hk_triple(&chart).unwrap();
        for _ in 0..20 {
            let x = chart.domain().sample(&mut rng);
            let geo = curvature::geometry_at(&chart, &x).unwrap();
            let a = {
                let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
                v.normalize()
            };
            let xd = Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let ad = {
                let raw = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
                raw - a * raw.dot(&a)
            };
            for sign in [1.0, -1.0] {
                let (jx, ja) = product_twistor_acs(&triple, &geo, &a, sign, &xd, &ad).unwrap();
                let (jjx, jja) = product_twistor_acs(&triple, &geo, &a, sign, &jx, &ja).unwrap();
                assert_relative_eq!((jjx + xd).norm(), 0.0, epsilon = 1e-10);
                assert_relative_eq!((jja + ad).norm(), 0.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn product_acs_matches_twistor_acs_on_flat() {
        // Two constructions of the same structure; on the flat chart the
        // sigma basis trivialisation and the triple sphere coincide.
        let chart = catalog("flat").unwrap();
        let triple = hk_triple(&chart).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(137);
        for _ in 0..10 {
            let x = chart.domain().sample(&mut rng);
            let geo = curvature::geometry_at(&chart, &x).unwrap();
            let ctx = TwistorContext::new(&chart, &x).unwrap();
            let a = {
                let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
                v.normalize()
            };
            let theta = triple.fibre_theta(&geo, &a).unwrap();
            let xd = Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let ad = {
                let raw = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
                raw - a * raw.dot(&a)
            };
            let (jx, _) = product_twistor_acs(&triple, &geo, &a, 1.0, &xd, &ad).unwrap();
            let jt = ctx.acs_apply(&theta, 1.0, &ZTangent::base(xd));
            assert_relative_eq!((jt.x_dot - jx).norm(), 0.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn bolt_zero_section_is_i1_holomorphic_in_each_chart() {
        // The fibre point of I1 is constant over the chart, so horizontal
        // lifts at a = e1 are exactly the zero-section tangents.
        let chart = catalog("eguchi-hanson-bolt").unwrap();
        let triple = hk_triple(&chart).unwrap();
        let geo = curvature::geometry_at(&chart, &[0.4, -0.3, 0.0, 0.0]).unwrap();
        let i1 = triple.acs(&geo, &Vector3::x());
        // The zero section w = 0 is I1-invariant: I1 maps (dx1, dx2) span
        // to itself there.
        let v = Vector4::new(1.0, 0.0, 0.0, 0.0);
        let iv = i1 * v;
        assert_relative_eq!(iv[2].abs() + iv[3].abs(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn eh_selfcheck_passes_on_both_charts_and_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(139);
        // Double cover: shell samples 1.2 < r < 4.
        let chart = catalog("eguchi-hanson").unwrap();
        let samples: Vec<[f64; 4]> = (0..32)
            .map(|_| {
                let v = Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0_f64)).normalize();
                let r = rng.random_range(1.2..4.0);
                [v[0] * r, v[1] * r, v[2] * r, v[3] * r]
            })
            .collect();
        let report = eh_selfcheck(&chart, &samples).unwrap();
        assert!(report.passed, "{report:?}");

        // Bolt chart: samples near the zero section.
        let chart = catalog("eguchi-hanson-bolt").unwrap();
        let samples: Vec<[f64; 4]> = (0..32)
            .map(|_| {
                [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-0.9..0.9),
                    rng.random_range(-0.9..0.9),
                ]
            })
            .collect();
        let report = eh_selfcheck(&chart, &samples).unwrap();
        assert!(report.passed, "{report:?}");

        // Flat chart: vacuously hyperkaehler.
        let chart = catalog("flat").unwrap();
        let report = eh_selfcheck(&chart, &[[0.2, -0.1, 0.4, 0.3]]).unwrap();
        assert!(report.passed);
    }

    #[test]
    fn fibre_theta_identifies_triple_with_sigma_basis() {
        // On hyperkaehler charts the map a -> theta is a rotation; check it
        // preserves lengths of differences (isometry of the sphere).
        let chart = catalog("eguchi-hanson-bolt").unwrap();
        let triple = hk_triple(&chart).unwrap();
        let geo = curvature::geometry_at(&chart, &[0.3, 0.2, 0.25, -0.15]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(149);
        let mut prev: Option<(Vector3<f64>, Vector3<f64>)> = None;
        for _ in 0..10 {
            let a = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize();
            let theta = triple.fibre_theta(&geo, &a).unwrap();
            assert_relative_eq!(theta.norm(), 1.0, epsilon = 1e-10);
            if let Some((a0, t0)) = prev {
                assert_relative_eq!(a.dot(&a0), theta.dot(&t0), epsilon = 1e-9);
            }
            prev = Some((a, theta));
        }
    }

    #[test]
    fn horizontal_lift_of_triple_point_is_omega_degenerate() {
        // The 2-form vanishes on horizontal lifts at the fibre point of a
        // hyperkaehler structure; this is the degeneracy driving the main
        // integral argument.
        let chart = catalog("eguchi-hanson-bolt").unwrap();
        let triple = hk_triple(&chart).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(151);
        for _ in 0..10 {
            let x = chart.domain().sample(&mut rng);
            let geo = curvature::geometry_at(&chart, &x).unwrap();
            let ctx = TwistorContext::new(&chart, &x).unwrap();
            let theta = triple.fibre_theta(&geo, &Vector3::x()).unwrap();
            let h1 = ctx.horizontal_lift(&theta, Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0)));
            let h2 = ctx.horizontal_lift(&theta, Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0)));
            let val = twistor::reznikov_form(
                &ctx,
                &twistor::TwistorPoint::new(x, theta).unwrap(),
                &h1,
                &h2,
            );
            assert!(val.abs() < 1e-7, "omega on horizontals = {val}");
        }
    }
}
