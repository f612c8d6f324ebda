//! Gauss-Newton continuation of holomorphic spheres under deformed twistor
//! structures, and the integral table that realises the degeneration
//! mechanism: continued spheres keep zero symplectic area while the
//! deformed metrics never satisfy the taming inequality near the bolt.

use super::grid::{bolt_lift, apply_tangent, DiscretizedSphereMap, MapValue};
use super::operator::{
    chart_sphere_coordinate, christoffels, cr_residual, linearize, AcsField, ProductJ,
};
use crate::chart::{perturb, MetricChart, PerturbationSpec};
use crate::curvature;
use crate::error::{EvalError, Result};
use crate::expr::{parse_expr, ExprAst};
use crate::hyperkahler::{hk_triple, HyperkaehlerTriple};
use crate::jet::NSYM;
use crate::taming;
use crate::twistor::{ComparisonDifferential, ComparisonMap, TwistorContext, TwistorPoint, ZTangent};
use nalgebra::{SMatrix, Vector3, Vector4};
use std::cell::RefCell;
use std::collections::HashMap;

/// One Gauss-Newton iteration record.
#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub residual_sup: f64,
    pub residual_l2: f64,
    pub step_norm: f64,
}

/// Successful continuation output.
pub struct ContinuationResult {
    pub map: DiscretizedSphereMap,
    pub iterations: usize,
    pub residual_sup: f64,
    pub trace: Vec<IterationRecord>,
}

/// Controlled failure: the deformation left the Newton basin.
#[derive(Debug)]
pub struct DivergenceReport {
    pub trace: Vec<IterationRecord>,
    pub message: String,
}

pub enum ContinuationOutcome {
    Converged(ContinuationResult),
    Diverged(DivergenceReport),
}

/// Minimum-norm Gauss-Newton on the collocation system: iterate
/// `u <- exp_u(xi)` with `xi` the least-squares update through the
/// gauge-fixing spectrum truncation.
pub fn newton_continue(
    u0: &DiscretizedSphereMap,
    acs: &dyn AcsField,
    max_iter: usize,
    tol: f64,
) -> Result<ContinuationOutcome> {
    let mut map = u0.clone();
    let mut trace: Vec<IterationRecord> = Vec::new();

    for it in 0..=max_iter {
        let res = cr_residual(&map, acs)?;
        let grew = trace
            .last()
            .is_some_and(|last| !res.sup.is_finite() || res.sup > 4.0 * last.residual_sup.max(tol));
        if grew {
            let last = trace.last().map_or(f64::NAN, |r| r.residual_sup);
            return Ok(ContinuationOutcome::Diverged(DivergenceReport {
                message: format!(
                    "residual grew from {last:.3e} to {:.3e} at iteration {it}",
                    res.sup
                ),
                trace,
            }));
        }
        if res.sup < tol {
            return Ok(ContinuationOutcome::Converged(ContinuationResult {
                residual_sup: res.sup,
                iterations: it,
                trace,
                map,
            }));
        }
        if it == max_iter {
            return Ok(ContinuationOutcome::Diverged(DivergenceReport {
                trace,
                message: format!("residual {:.3e} above tolerance {tol:e} after {max_iter} iterations", res.sup),
            }));
        }

        let op = linearize(&map, acs)?;
        // Full system right-hand side: residual rows plus consistency rows.
        let mut rhs = vec![0.0; 6 * map.grid.nodes.len()];
        for (id, node) in map.grid.nodes.iter().enumerate() {
            if node.owned {
                let r = res.per_node[id].expect("owned node has residual");
                rhs[6 * id..6 * id + 6].copy_from_slice(&r);
            } else {
                // Consistency rows are exactly satisfied by construction of
                // the update, but the current map may carry drift.
                let defect = super::operator::consistency_defect(&map, id);
                rhs[6 * id..6 * id + 6].copy_from_slice(&defect);
            }
        }
        for v in rhs.iter_mut() {
            *v = -*v;
        }
        let xi = op.solve_min_norm(&rhs);
        let step_norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        trace.push(IterationRecord {
            residual_sup: res.sup,
            residual_l2: res.l2,
            step_norm,
        });
        let target = map.target.clone();
        map = apply_tangent(&map, &xi, &mut |_, x| christoffels(&target, x))?;
    }
    unreachable!("loop returns before exhausting iterations");
}

/// Estimated `C^1` distance between two structure fields over the nodes of
/// a map: sup of value differences plus finite-difference first
/// derivatives along the base coordinates.
pub fn acs_c1_distance(
    a: &dyn AcsField,
    b: &dyn AcsField,
    map: &DiscretizedSphereMap,
) -> Result<f64> {
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for (id, node) in map.grid.nodes.iter().enumerate() {
        if !node.owned || (node.i + node.j) % 5 != 0 {
            continue;
        }
        let v = map.values[id];
        let basis: [Vector4<f64>; 2] = [Vector4::x(), Vector4::ith(2, 1.0)];
        let (t1, _) = crate::linalg::tangent_basis(&v.a);
        for xd in basis {
            let da = t1;
            let (ax, aa) = a.apply(&v, &xd, &da)?;
            let (bx, ba) = b.apply(&v, &xd, &da)?;
            worst = worst.max((ax - bx).norm() + (aa - ba).norm());
            for dir in 0..4 {
                let mut vp = v;
                vp.x[dir] += h;
                let mut vm = v;
                vm.x[dir] -= h;
                let (axp, aap) = a.apply(&vp, &xd, &da)?;
                let (axm, aam) = a.apply(&vm, &xd, &da)?;
                let (bxp, bap) = b.apply(&vp, &xd, &da)?;
                let (bxm, bam) = b.apply(&vm, &xd, &da)?;
                let da_dx = ((axp - axm) - (bxp - bxm)).norm() / (2.0 * h)
                    + ((aap - aam) - (bap - bam)).norm() / (2.0 * h);
                worst = worst.max(da_dx);
            }
        }
    }
    Ok(worst)
}

/// Per-node pullback data cached by exact value bits.
struct NodePullback {
    /// Jacobian of `(x, a-tangent) -> theta` on the 6 canonical directions.
    theta_jac: SMatrix<f64, 3, 6>,
    diff: ComparisonDifferential,
    dst_ctx: TwistorContext,
}

/// The deformed twistor structure pulled back to the product coordinates
/// through the fibre comparison map.
pub struct PulledBackJ<'a> {
    pub src: &'a MetricChart,
    pub dst: MetricChart,
    pub triple: &'a HyperkaehlerTriple,
    pub sign: f64,
    cache: RefCell<HashMap<[u64; 7], std::rc::Rc<NodePullback>>>,
}

impl<'a> PulledBackJ<'a> {
    pub fn new(
        src: &'a MetricChart,
        dst: MetricChart,
        triple: &'a HyperkaehlerTriple,
        sign: f64,
    ) -> Self {
        PulledBackJ {
            src,
            dst,
            triple,
            sign,
            cache: RefCell::new(HashMap::new()),
        }
    }

    fn key(value: &MapValue) -> [u64; 7] {
        [
            value.x[0].to_bits(),
            value.x[1].to_bits(),
            value.x[2].to_bits(),
            value.x[3].to_bits(),
            value.a.x.to_bits(),
            value.a.y.to_bits(),
            value.a.z.to_bits() ^ (value.target_chart as u64) << 1,
        ]
    }

    fn node_data(&self, value: &MapValue) -> Result<std::rc::Rc<NodePullback>> {
        let key = Self::key(value);
        if let Some(hit) = self.cache.borrow().get(&key) {
            return Ok(hit.clone());
        }
        let a_eff = chart_sphere_coordinate(value);
        let theta_of = |x: &[f64; 4], a: &Vector3<f64>| -> Result<Vector3<f64>> {
            let geo = curvature::geometry_at(self.src, x)?;
            self.triple.fibre_theta(&geo, a)
        };
        let theta = theta_of(&value.x, &a_eff)?;
        // Jacobian of the fibre identification along base and fibre moves.
        let h = 1e-6;
        let (b1, b2) = crate::linalg::tangent_basis(&value.a);
        let mut theta_jac = SMatrix::<f64, 3, 6>::zeros();
        for dir in 0..4 {
            let mut xp = value.x;
            xp[dir] += h;
            let mut xm = value.x;
            xm[dir] -= h;
            let d = (theta_of(&xp, &a_eff)? - theta_of(&xm, &a_eff)?) / (2.0 * h);
            theta_jac.set_column(dir, &d);
        }
        for (slot, dir) in [b1, b2].into_iter().enumerate() {
            let dir_eff = if value.target_chart == 0 {
                dir
            } else {
                Vector3::new(dir.x, -dir.y, -dir.z)
            };
            let ap = (a_eff + dir_eff * h).normalize();
            let am = (a_eff - dir_eff * h).normalize();
            let d = (theta_of(&value.x, &ap)? - theta_of(&value.x, &am)?) / (2.0 * h);
            theta_jac.set_column(4 + slot, &d);
        }
        let p = TwistorPoint::new(value.x, theta)?;
        let cmp = ComparisonMap::new(self.src, &self.dst);
        let diff = cmp.differential(&p)?;
        let dst_ctx = TwistorContext::new(&self.dst, &value.x)?;
        let data = std::rc::Rc::new(NodePullback {
            theta_jac,
            diff,
            dst_ctx,
        });
        self.cache.borrow_mut().insert(key, data.clone());
        Ok(data)
    }

    /// Tangent conversion `(x_dot, a_dot) -> (x_dot, theta_dot)`.
    fn to_twistor_tangent(
        &self,
        data: &NodePullback,
        value: &MapValue,
        x_dot: &Vector4<f64>,
        a_dot: &Vector3<f64>,
    ) -> ZTangent {
        let (b1, b2) = crate::linalg::tangent_basis(&value.a);
        let coords = nalgebra::SVector::<f64, 6>::from_iterator(
            [
                x_dot[0],
                x_dot[1],
                x_dot[2],
                x_dot[3],
                a_dot.dot(&b1),
                a_dot.dot(&b2),
            ]
            .into_iter(),
        );
        ZTangent {
            x_dot: *x_dot,
            theta_dot: data.theta_jac * coords,
        }
    }

    /// Inverse tangent conversion at the same point.
    fn from_twistor_tangent(
        &self,
        data: &NodePullback,
        value: &MapValue,
        t: &ZTangent,
    ) -> Result<(Vector4<f64>, Vector3<f64>)> {
        // theta_dot = J_x x_dot + J_a a_coords: solve the 2x2 fibre block.
        let jx = data.theta_jac.fixed_view::<3, 4>(0, 0);
        let ja = data.theta_jac.fixed_view::<3, 2>(0, 4).into_owned();
        let rhs = t.theta_dot - jx * t.x_dot;
        let ata = (ja.transpose() * ja)
            .try_inverse()
            .ok_or_else(|| EvalError::Numerical("fibre identification degenerate".into()))?;
        let coords = ata * (ja.transpose() * rhs);
        let (b1, b2) = crate::linalg::tangent_basis(&value.a);
        Ok((t.x_dot, b1 * coords.x + b2 * coords.y))
    }

    /// The pulled-back 2-form on two product tangents at a map value.
    pub fn omega(
        &self,
        value: &MapValue,
        u: (&Vector4<f64>, &Vector3<f64>),
        v: (&Vector4<f64>, &Vector3<f64>),
    ) -> Result<f64> {
        let data = self.node_data(value)?;
        let tu = self.to_twistor_tangent(&data, value, u.0, u.1);
        let tv = self.to_twistor_tangent(&data, value, v.0, v.1);
        let pu = data.diff.push(&tu);
        let pv = data.diff.push(&tv);
        Ok(data.dst_ctx.omega(&data.diff.image.theta, &pu, &pv))
    }
}

impl AcsField for PulledBackJ<'_> {
    fn apply(
        &self,
        value: &MapValue,
        x_dot: &Vector4<f64>,
        a_dot: &Vector3<f64>,
    ) -> Result<(Vector4<f64>, Vector3<f64>)> {
        let data = self.node_data(value)?;
        let t = self.to_twistor_tangent(&data, value, x_dot, a_dot);
        let pushed = data.diff.push(&t);
        let j_pushed = data
            .dst_ctx
            .acs_apply(&data.diff.image.theta, self.sign, &pushed);
        let pulled = data.diff.pull(&j_pushed)?;
        self.from_twistor_tangent(&data, value, &pulled)
    }
}

/// Deformation direction used by the mechanism table: a bump in the
/// invariant fibre-norm function times the pulled-back base metric, so the
/// same component expressions define one global tensor in both bolt
/// charts. The profile vanishes to all orders at the bolt itself.
pub fn mechanism_perturbation() -> [ExprAst; NSYM] {
    perturbation_with_profile("bump(((x3^2+x4^2)*(1+x1^2+x2^2)^2-0.8)/0.8)")
}

/// Variant whose support contains the bolt; used to exercise a genuinely
/// nontrivial continuation.
pub fn overlapping_perturbation() -> [ExprAst; NSYM] {
    perturbation_with_profile("bump((x3^2+x4^2)*(1+x1^2+x2^2)^2/1.44)")
}

fn perturbation_with_profile(profile: &str) -> [ExprAst; NSYM] {
    let fs = "(1/(1+x1^2+x2^2)^2)";
    std::array::from_fn(|k| {
        // Packed order: (1,1) at 0 and (2,2) at 4 are the base-plane slots.
        let text = match k {
            0 | 4 => format!("{profile}*{fs}"),
            _ => "0".to_string(),
        };
        parse_expr(&text).expect("static expression parses")
    })
}

/// One row of the mechanism table.
#[derive(Clone, Debug)]
pub struct MechanismRow {
    pub t: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual_sup: f64,
    /// Integral of the deformed 2-form over the continued sphere.
    pub omega_integral: f64,
    /// Minimum taming margin of the deformed metric near the bolt.
    pub taming_min_margin: f64,
}

#[derive(Clone, Debug)]
pub struct MechanismReport {
    pub grid_n: usize,
    pub rows: Vec<MechanismRow>,
    pub perturbation: String,
}

/// Integral of the source-metric 2-form over a discretized sphere map.
pub fn omega_integral_source(
    map: &DiscretizedSphereMap,
    triple: &HyperkaehlerTriple,
) -> Result<f64> {
    map.clone().integrate_pullback(|_, v, dx, da| {
        let geo = curvature::geometry_at(&map.target, &v.x)?;
        let ctx = TwistorContext::from_geometry(geo.clone());
        let a_eff = chart_sphere_coordinate(v);
        let theta = triple.fibre_theta(&geo, &a_eff)?;
        // Convert fibre velocities through the identification by finite
        // differences of the theta map.
        let h = 1e-6;
        let mut tangents = [ZTangent::default(); 2];
        for axis in 0..2 {
            let xd = Vector4::new(dx[(0, axis)], dx[(1, axis)], dx[(2, axis)], dx[(3, axis)]);
            let ad = Vector3::new(da[(0, axis)], da[(1, axis)], da[(2, axis)]);
            let ad_eff = if v.target_chart == 0 {
                ad
            } else {
                Vector3::new(ad.x, -ad.y, -ad.z)
            };
            let eval = |s: f64| -> Result<Vector3<f64>> {
                let x = std::array::from_fn(|i| v.x[i] + s * xd[i]);
                let a = (a_eff + ad_eff * s).normalize();
                let geo_s = curvature::geometry_at(&map.target, &x)?;
                triple.fibre_theta(&geo_s, &a)
            };
            let theta_dot = (eval(h)? - eval(-h)?) / (2.0 * h);
            tangents[axis] = ZTangent {
                x_dot: xd,
                theta_dot,
            };
        }
        Ok(ctx.omega(&theta, &tangents[0], &tangents[1]))
    })
}

/// Integral of a pulled-back deformed 2-form over a discretized map.
pub fn omega_integral_pulled(map: &DiscretizedSphereMap, j: &PulledBackJ<'_>) -> Result<f64> {
    map.clone().integrate_pullback(|_, v, dx, da| {
        let u = (
            Vector4::new(dx[(0, 0)], dx[(1, 0)], dx[(2, 0)], dx[(3, 0)]),
            Vector3::new(da[(0, 0)], da[(1, 0)], da[(2, 0)]),
        );
        let w = (
            Vector4::new(dx[(0, 1)], dx[(1, 1)], dx[(2, 1)], dx[(3, 1)]),
            Vector3::new(da[(0, 1)], da[(1, 1)], da[(2, 1)]),
        );
        j.omega(v, (&u.0, &u.1), (&w.0, &w.1))
    })
}

/// Run the full mechanism table: for each deformation amplitude, continue
/// the bolt sphere, integrate the deformed 2-form over it, and scan the
/// taming margin of the deformed metric near the bolt.
pub fn mechanism_demo(t_values: &[f64], grid_n: usize) -> Result<MechanismReport> {
    let chart = crate::chart::catalog("eguchi-hanson-bolt")?;
    let triple = hk_triple(&chart)?;
    let direction = mechanism_perturbation();
    let lift = bolt_lift(&chart, grid_n)?;

    let mut rows = Vec::new();
    for &t in t_values {
        let (outcome, integral) = if t == 0.0 {
            let j = ProductJ {
                triple: &triple,
                sign: 1.0,
            };
            let outcome = newton_continue(&lift, &j, 8, 1e-8)?;
            let map = match &outcome {
                ContinuationOutcome::Converged(res) => &res.map,
                ContinuationOutcome::Diverged(_) => &lift,
            };
            let integral = omega_integral_source(map, &triple)?;
            (outcome, integral)
        } else {
            let deformed = perturb(&PerturbationSpec {
                base: chart.clone(),
                direction: direction.clone(),
                amplitude: t,
            })?;
            let j = PulledBackJ::new(&chart, deformed.clone(), &triple, 1.0);
            let outcome = newton_continue(&lift, &j, 8, 1e-8)?;
            let map = match &outcome {
                ContinuationOutcome::Converged(res) => &res.map,
                ContinuationOutcome::Diverged(_) => &lift,
            };
            let integral = omega_integral_pulled(map, &j)?;
            (outcome, integral)
        };

        let deformed = perturb(&PerturbationSpec {
            base: chart.clone(),
            direction: direction.clone(),
            amplitude: t,
        })?;
        let scan = taming::region_scan(
            &deformed,
            &taming::GridSpec {
                center: [0.0, 0.0, 0.0, 0.0],
                half: [0.6, 0.6, 0.12, 0.12],
                n: 3,
            },
        )?;

        let (converged, iterations, residual_sup) = match &outcome {
            ContinuationOutcome::Converged(res) => (true, res.iterations, res.residual_sup),
            ContinuationOutcome::Diverged(rep) => (
                false,
                rep.trace.len(),
                rep.trace.last().map_or(f64::NAN, |r| r.residual_sup),
            ),
        };
        rows.push(MechanismRow {
            t,
            converged,
            iterations,
            residual_sup,
            omega_integral: integral,
            taming_min_margin: scan.min_margin,
        });
    }
    Ok(MechanismReport {
        grid_n,
        rows,
        perturbation: "bump((u-0.8)/0.8) * base-plane metric, u = |w|^2 (1+|z|^2)^2".into(),
    })
}
