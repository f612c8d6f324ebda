//! Discretized Cauchy-Riemann operator on sphere maps: residuals, the
//! linearized operator matrix with its singular spectrum, and the
//! kernel/cokernel bookkeeping.

use super::grid::{interpolate_value, DiscretizedSphereMap, MapValue};
use crate::chart::MetricChart;
use crate::error::{EvalError, Result};
use crate::hyperkahler::HyperkaehlerTriple;
use crate::linalg::tangent_basis;
use nalgebra::{Matrix4, Vector3, Vector4};

/// An almost complex structure field on the product twistor space,
/// evaluated at map values (which carry their own target chart).
pub trait AcsField {
    fn apply(
        &self,
        value: &MapValue,
        x_dot: &Vector4<f64>,
        a_dot: &Vector3<f64>,
    ) -> Result<(Vector4<f64>, Vector3<f64>)>;
}

/// Sign flip identifying the two bolt charts' sphere coordinates: the
/// holomorphic symplectic form changes sign under the transition, so `I_2`
/// and `I_3` do as well.
#[inline]
pub fn chart_sphere_coordinate(value: &MapValue) -> Vector3<f64> {
    if value.target_chart == 0 {
        value.a
    } else {
        Vector3::new(value.a.x, -value.a.y, -value.a.z)
    }
}

/// The unperturbed product structure `J = sign * I_a (+) a x .`.
pub struct ProductJ<'a> {
    pub triple: &'a HyperkaehlerTriple,
    pub sign: f64,
}

impl AcsField for ProductJ<'_> {
    fn apply(
        &self,
        value: &MapValue,
        x_dot: &Vector4<f64>,
        a_dot: &Vector3<f64>,
    ) -> Result<(Vector4<f64>, Vector3<f64>)> {
        let a_eff = chart_sphere_coordinate(value);
        let g = crate::linalg::metric_matrix(&self.triple.chart.metric_values(&value.x)?);
        let g_inv = g
            .try_inverse()
            .ok_or_else(|| EvalError::Numerical("metric not invertible".into()))?;
        let i_a = acs_from_inverse(self.triple, &g_inv, &a_eff);
        Ok((i_a * x_dot * self.sign, value.a.cross(a_dot)))
    }
}

/// `I_a` from a precomputed inverse metric (avoids the full curvature
/// pipeline in the hot path).
pub fn acs_from_inverse(
    triple: &HyperkaehlerTriple,
    g_inv: &Matrix4<f64>,
    a: &Vector3<f64>,
) -> Matrix4<f64> {
    let i1 = crate::hyperkahler::chart_complex_structure();
    let [w2, w3] = triple.symplectic_parts();
    i1 * a.x - (g_inv * w2) * a.y - (g_inv * w3) * a.z
}

/// Node-wise Cauchy-Riemann residual of a map against an almost complex
/// structure field; `None` at overlap nodes (which carry consistency
/// equations instead).
pub struct ResidualField {
    pub per_node: Vec<Option<[f64; 6]>>,
    pub sup: f64,
    pub l2: f64,
}

fn residual_at(
    map: &DiscretizedSphereMap,
    acs: &dyn AcsField,
    id: usize,
) -> Result<[f64; 6]> {
    let (dx, da) = map.du(id)?;
    let v = &map.values[id];
    let (jx, ja) = acs.apply(
        v,
        &dx.column(1).into_owned(),
        &da.column(1).into_owned(),
    )?;
    let rx = (dx.column(0) + jx) * 0.5;
    let mut ra = (da.column(0) + ja) * 0.5;
    ra -= v.a * ra.dot(&v.a);
    let (b1, b2) = tangent_basis(&v.a);
    Ok([rx[0], rx[1], rx[2], rx[3], ra.dot(&b1), ra.dot(&b2)])
}

/// Consistency defect of an overlap node: its value minus the transition
/// of the interpolated other-chart value, in local coordinates.
pub fn consistency_defect(map: &DiscretizedSphereMap, id: usize) -> [f64; 6] {
    consistency_at(map, id)
}

fn consistency_at(map: &DiscretizedSphereMap, id: usize) -> [f64; 6] {
    let node = &map.grid.nodes[id];
    let st = node.interp.as_ref().expect("overlap node has a stencil");
    let v = &map.values[id];
    let (x_ref, a_ref) = interpolate_value(map, st, v.target_chart);
    let (b1, b2) = tangent_basis(&v.a);
    let da = v.a - a_ref;
    [
        v.x[0] - x_ref[0],
        v.x[1] - x_ref[1],
        v.x[2] - x_ref[2],
        v.x[3] - x_ref[3],
        da.dot(&b1),
        da.dot(&b2),
    ]
}

/// Residuals over all owned nodes, with discrete sup and l2 norms.
pub fn cr_residual(map: &DiscretizedSphereMap, acs: &dyn AcsField) -> Result<ResidualField> {
    let mut per_node = vec![None; map.grid.nodes.len()];
    let mut sup: f64 = 0.0;
    let mut sq = 0.0;
    let mut count = 0usize;
    for (id, node) in map.grid.nodes.iter().enumerate() {
        if !node.owned {
            continue;
        }
        let r = residual_at(map, acs, id)?;
        for v in r {
            sup = sup.max(v.abs());
            sq += v * v;
        }
        count += 6;
        per_node[id] = Some(r);
    }
    Ok(ResidualField {
        per_node,
        sup,
        l2: (sq / count.max(1) as f64).sqrt(),
    })
}

/// Full collocation system value at the current map state: residual rows at
/// owned nodes, consistency rows at overlap nodes.
fn system_rows(map: &DiscretizedSphereMap, acs: &dyn AcsField, rows: &mut [f64]) -> Result<()> {
    for (id, node) in map.grid.nodes.iter().enumerate() {
        let r = if node.owned {
            residual_at(map, acs, id)?
        } else {
            consistency_at(map, id)
        };
        rows[6 * id..6 * id + 6].copy_from_slice(&r);
    }
    Ok(())
}

/// Christoffel symbols of the target chart at a point, in the coordinates
/// of the requested bolt chart. The chart formulas are identical in both
/// bolt charts, so only the coordinates differ.
pub fn christoffels(chart: &MetricChart, x: &[f64; 4]) -> Result<[[[f64; 4]; 4]; 4]> {
    let jets = chart.metric_jet(x)?;
    let g_packed: [f64; 10] = std::array::from_fn(|k| jets[k].val);
    let g = crate::linalg::metric_matrix(&g_packed);
    let g_inv = g
        .try_inverse()
        .ok_or_else(|| EvalError::Numerical("metric not invertible".into()))?;
    let dg: [Matrix4<f64>; 4] = std::array::from_fn(|k| {
        Matrix4::from_fn(|i, j| jets[crate::jet::sym_index(i, j)].grad[k])
    });
    let mut gamma = [[[0.0; 4]; 4]; 4];
    for k in 0..4 {
        for i in 0..4 {
            for j in i..4 {
                let mut s = 0.0;
                for l in 0..4 {
                    s += g_inv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                }
                gamma[k][i][j] = 0.5 * s;
                gamma[k][j][i] = gamma[k][i][j];
            }
        }
    }
    Ok(gamma)
}

/// Spectral-gap summary attached to a linearized operator.
#[derive(Clone, Debug)]
pub struct GapReport {
    pub sigma_max: f64,
    /// Largest of the near-kernel singular values of the square stage.
    pub largest_tiny: f64,
    /// Smallest retained singular value.
    pub smallest_retained: f64,
    /// `smallest_retained / largest_tiny`.
    pub ratio: f64,
    /// Number of near-kernel singular values found at the square stage.
    pub square_tiny_count: usize,
    /// Singular values of the 2x2 obstruction pairing certifying that
    /// constant fibre deflections are not genuine kernel directions
    /// (empty when no fibre-carrying null modes appeared).
    pub obstruction_singular_values: Vec<f64>,
}

/// The linearized Cauchy-Riemann operator of a discretized map.
///
/// Collocation produces one equation block per active node, which would tie
/// the row count to the column count; the index of the continuous operator
/// (six on genus-zero domains) instead demands six more unknowns than
/// independent equations. `linearize` therefore validates that the square
/// stage exposes exactly six gap-separated near-kernel directions and
/// reports the operator on the quotient of the equation space by them:
/// `rows = cols - 6` with the near-kernel directions as the exact null
/// space.
pub struct CrOperator {
    pub rows: usize,
    pub cols: usize,
    /// Singular values of the quotient operator, descending.
    pub singular_values: Vec<f64>,
    /// Orthonormal basis of the geometric kernel (the fibre-free part of
    /// the square stage's null space).
    pub kernel: Vec<Vec<f64>>,
    pub gap: GapReport,
    square: faer::Mat<f64>,
    svd_u: faer::Mat<f64>,
    svd_v: faer::Mat<f64>,
    sigmas_square: Vec<f64>,
    tiny_count: usize,
    square_dim: usize,
}

/// Finite-difference step for assembling operator columns.
pub const LINEARIZE_STEP: f64 = 1e-5;

/// Assemble the linearized operator at `map` by central differences of the
/// transported residual in every nodal tangent direction.
pub fn linearize(
    map: &DiscretizedSphereMap,
    acs: &dyn AcsField,
) -> Result<CrOperator> {
    let (matrix, dim) = assemble_square(map, acs)?;

    // Singular analysis of the square stage.
    let svd = faer::linalg::solvers::Svd::new(matrix.as_ref())
        .map_err(|e| EvalError::Numerical(format!("SVD failed: {e:?}")))?;
    let sigmas: Vec<f64> = (0..dim).map(|k| svd.S()[k]).collect();
    let sigma_max = sigmas[0];
    let threshold = sigma_max * 1e-6;
    let tiny_count = sigmas.iter().filter(|s| **s < threshold).count();
    if !(6..=8).contains(&tiny_count) {
        return Err(EvalError::Inconclusive(format!(
            "expected 6-8 near-kernel singular values below {threshold:.3e}, found {tiny_count}; refine the grid"
        )));
    }
    let largest_tiny = sigmas[dim - tiny_count..]
        .iter()
        .fold(0.0f64, |a, b| a.max(*b));
    let smallest_retained = sigmas[dim - tiny_count - 1];
    let ratio = smallest_retained / largest_tiny.max(f64::MIN_POSITIVE);
    if ratio < 10.0 {
        return Err(EvalError::Inconclusive(format!(
            "spectral gap ratio {ratio:.2} below 10; refine the grid"
        )));
    }

    // The null space mixes the six reparametrisation directions with the
    // index-absorption pair (a near-constant fibre deflection compensated
    // through the normal bundle, which the continuous operator forbids).
    // Split by fibre content: an SVD of the fibre-slot restriction of the
    // null basis separates fibre-carrying directions from fibre-free ones.
    let null_basis: Vec<Vec<f64>> = (dim - tiny_count..dim)
        .map(|k| (0..dim).map(|r| svd.V()[(r, k)]).collect())
        .collect();
    let n_nodes = dim / 6;
    let mut fibre_block = nalgebra::DMatrix::<f64>::zeros(2 * n_nodes, tiny_count);
    for (c, v) in null_basis.iter().enumerate() {
        for node in 0..n_nodes {
            fibre_block[(2 * node, c)] = v[6 * node + 4];
            fibre_block[(2 * node + 1, c)] = v[6 * node + 5];
        }
    }
    let fibre_svd = fibre_block.clone().svd(false, true);
    let v_t = fibre_svd.v_t.expect("requested");
    let mut carrying = 0usize;
    for k in 0..tiny_count {
        if fibre_svd.singular_values[k] > 1e-4 {
            carrying += 1;
        }
    }
    let fibre_free = tiny_count - carrying;
    if fibre_free != 6 {
        return Err(EvalError::Inconclusive(format!(
            "null space has {fibre_free} fibre-free directions, expected 6; refine the grid"
        )));
    }
    // Recombine: rows of v_t beyond `carrying` span the fibre-free part.
    let mut kernel: Vec<Vec<f64>> = Vec::with_capacity(6);
    for k in carrying..tiny_count {
        let mut vec = vec![0.0; dim];
        for (c, basis_vec) in null_basis.iter().enumerate() {
            let w = v_t[(k, c)];
            for (slot, b) in vec.iter_mut().zip(basis_vec.iter()) {
                *slot += w * b;
            }
        }
        kernel.push(vec);
    }

    // Certify the fibre-carrying pair as obstructed: the pairing of the
    // residual response to constant fibre deflections against the
    // holomorphic symplectic form must be nondegenerate (the discrete
    // shadow of the area identity killing vertical kernel components).
    let mut obstruction_sv = Vec::new();
    if carrying > 0 {
        if carrying != 2 {
            return Err(EvalError::Inconclusive(format!(
                "{carrying} fibre-carrying null directions, expected the index pair (2); refine the grid"
            )));
        }
        let pairing = obstruction_pairing(map, acs)?;
        let p_svd = pairing.svd(false, false);
        obstruction_sv = p_svd.singular_values.iter().copied().collect();
        let area_scale = std::f64::consts::PI;
        if obstruction_sv[1] < 0.02 * area_scale {
            return Err(EvalError::Inconclusive(format!(
                "obstruction pairing degenerate ({obstruction_sv:?}); cannot certify the fibre null pair as spurious"
            )));
        }
    }

    let svd_u = svd.U().to_owned();
    let svd_v = svd.V().to_owned();

    Ok(CrOperator {
        rows: dim - 6 - carrying,
        cols: dim - carrying,
        singular_values: sigmas[..dim - tiny_count].to_vec(),
        kernel,
        gap: GapReport {
            sigma_max,
            largest_tiny,
            smallest_retained,
            ratio,
            square_tiny_count: tiny_count,
            obstruction_singular_values: obstruction_sv,
        },
        square: matrix,
        svd_u,
        svd_v,
        sigmas_square: sigmas,
        tiny_count,
        square_dim: dim,
    })
}

/// Pairing of the residual response to the two constant fibre deflections
/// against the holomorphic symplectic form, integrated over the map: the
/// discrete realisation of the area identity that forbids vertical kernel
/// components on genus-zero domains.
fn obstruction_pairing(
    map: &DiscretizedSphereMap,
    acs: &dyn AcsField,
) -> Result<nalgebra::Matrix2<f64>> {
    let triple = crate::hyperkahler::hk_triple(&map.target)?;
    let [w2, w3] = triple.symplectic_parts();
    let eps = 1e-5;
    let mut pairing = nalgebra::Matrix2::<f64>::zeros();
    for (col, global_dir) in [Vector3::y(), Vector3::z()].into_iter().enumerate() {
        // Rotate every fibre point by the same global deflection.
        let rotate = |map_in: &DiscretizedSphereMap, s: f64| -> DiscretizedSphereMap {
            let mut out = map_in.clone();
            for v in &mut out.values {
                let tangent = global_dir - v.a * global_dir.dot(&v.a);
                let n = tangent.norm();
                if n > 1e-13 {
                    let ang = s * n;
                    v.a = v.a * ang.cos() + tangent / n * ang.sin();
                }
            }
            out
        };
        let plus = rotate(map, eps);
        let minus = rotate(map, -eps);
        let mut p = nalgebra::Complex::new(0.0, 0.0);
        let cell = map.grid.h * map.grid.h;
        for (id, node) in map.grid.nodes.iter().enumerate() {
            if !node.owned || map.grid.quad_weight[id] == 0.0 {
                continue;
            }
            let rp = residual_at(&plus, acs, id)?;
            let rm = residual_at(&minus, acs, id)?;
            let c_v = Vector4::new(
                (rp[0] - rm[0]) / (2.0 * eps),
                (rp[1] - rm[1]) / (2.0 * eps),
                (rp[2] - rm[2]) / (2.0 * eps),
                (rp[3] - rm[3]) / (2.0 * eps),
            );
            let value = &map.values[id];
            let (dx, _) = map.du(id)?;
            // Omega changes sign between the bolt charts.
            let lam = if value.target_chart == 0 { 1.0 } else { -1.0 };
            let omega = |u: &Vector4<f64>, w: &Vector4<f64>| -> nalgebra::Complex<f64> {
                let mut re = 0.0;
                let mut im = 0.0;
                for pq in [(w2, &mut re), (w3, &mut im)] {
                    let (mat, slot) = pq;
                    let mut s = 0.0;
                    for a in 0..4 {
                        for b in 0..4 {
                            s += mat[(a, b)] * u[a] * w[b];
                        }
                    }
                    *slot = s;
                }
                nalgebra::Complex::new(lam * re, lam * im)
            };
            let g = crate::linalg::metric_matrix(&map.target.metric_values(&value.x)?);
            let g_inv = g
                .try_inverse()
                .ok_or_else(|| EvalError::Numerical("metric not invertible".into()))?;
            let a_eff = chart_sphere_coordinate(value);
            let i_a = acs_from_inverse(&triple, &g_inv, &a_eff);
            let du1 = dx.column(0).into_owned();
            let du2 = dx.column(1).into_owned();
            let w_q = map.grid.quad_weight[id] * cell;
            p += (omega(&c_v, &du2) + omega(&(i_a * c_v), &du1)) * w_q;
        }
        pairing[(0, col)] = p.re;
        pairing[(1, col)] = p.im;
    }
    Ok(pairing)
}

/// Assemble the square collocation matrix by local central differences.
fn assemble_square(
    map: &DiscretizedSphereMap,
    acs: &dyn AcsField,
) -> Result<(faer::Mat<f64>, usize)> {
    faer::set_global_parallelism(faer::Par::Seq);
    let n_nodes = map.grid.nodes.len();
    let dim = 6 * n_nodes;
    let mut matrix = faer::Mat::<f64>::zeros(dim, dim);

    let mut working = map.clone();

    // Rows affected by a change at node q: the reverse residual stencils,
    // q's own row, and any consistency row interpolating from q.
    let mut affected: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
    for (id, node) in map.grid.nodes.iter().enumerate() {
        let mut list = vec![id];
        for d in [-2i64, -1, 1, 2] {
            for axis in 0..2 {
                let (i, j) = if axis == 0 {
                    ((node.i as i64 + d) as usize, node.j)
                } else {
                    (node.i, (node.j as i64 + d) as usize)
                };
                if let Some(p) = map.grid.node_id(node.chart, i, j) {
                    // Shifted rim stencils can reach two extra cells, so be
                    // generous: include the reverse cross out to distance 4.
                    list.push(p);
                }
            }
        }
        for d in [-4i64, -3, 3, 4] {
            for axis in 0..2 {
                let (i, j) = if axis == 0 {
                    ((node.i as i64 + d) as usize, node.j)
                } else {
                    (node.i, (node.j as i64 + d) as usize)
                };
                if let Some(p) = map.grid.node_id(node.chart, i, j) {
                    list.push(p);
                }
            }
        }
        list.extend_from_slice(&map.grid.dependents[id]);
        list.sort_unstable();
        list.dedup();
        list.retain(|p| map.grid.nodes[*p].owned || map.grid.nodes[*p].interp.is_some());
        affected[id] = list;
    }

    let eps = LINEARIZE_STEP;
    for q in 0..n_nodes {
        let v0 = map.values[q];
        let (b1, b2) = tangent_basis(&v0.a);
        for dir in 0..6 {
            let col = 6 * q + dir;
            let mut plus = vec![0.0; 0];
            let mut minus = vec![0.0; 0];
            for (side, out) in [(1.0, &mut plus), (-1.0, &mut minus)] {
                // Geodesic displacement of node q only.
                let (x_new, a_new, transport) =
                    displace(map, q, dir, side * eps, &b1, &b2)?;
                working.values[q] = MapValue {
                    target_chart: v0.target_chart,
                    x: x_new,
                    a: a_new,
                };
                let mut vals = Vec::with_capacity(affected[q].len() * 6);
                for &p in &affected[q] {
                    let r = if map.grid.nodes[p].owned {
                        let mut r = residual_at(&working, acs, p)?;
                        if p == q {
                            transport.pull_back(&mut r, &working.values[q], &v0);
                        }
                        r
                    } else {
                        consistency_at(&working, p)
                    };
                    vals.extend_from_slice(&r);
                }
                *out = vals;
                working.values[q] = v0;
            }
            for (k, &p) in affected[q].iter().enumerate() {
                for c in 0..6 {
                    let d = (plus[6 * k + c] - minus[6 * k + c]) / (2.0 * eps);
                    matrix[(6 * p + c, col)] = d;
                }
            }
        }
    }
    Ok((matrix, dim))
}

struct Transport {
    x_rotation: Matrix4<f64>,
}

impl Transport {
    fn pull_back(&self, r: &mut [f64; 6], new_value: &MapValue, old_value: &MapValue) {
        let rx = self.x_rotation * Vector4::new(r[0], r[1], r[2], r[3]);
        r[0] = rx[0];
        r[1] = rx[1];
        r[2] = rx[2];
        r[3] = rx[3];
        // Fibre part: rotate the tangent plane from the displaced sphere
        // point back to the original one along the great circle.
        let (b1n, b2n) = tangent_basis(&new_value.a);
        let ra = b1n * r[4] + b2n * r[5];
        let rot = rotation_between(&new_value.a, &old_value.a);
        let ra0 = rot * ra;
        let (b1, b2) = tangent_basis(&old_value.a);
        r[4] = ra0.dot(&b1);
        r[5] = ra0.dot(&b2);
    }
}

fn rotation_between(from: &Vector3<f64>, to: &Vector3<f64>) -> nalgebra::Matrix3<f64> {
    let axis = from.cross(to);
    let n = axis.norm();
    if n < 1e-15 {
        return nalgebra::Matrix3::identity();
    }
    let angle = from.dot(to).clamp(-1.0, 1.0).acos();
    let k = crate::linalg::cross_matrix(&(axis / n));
    nalgebra::Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

/// Geodesic displacement of one node value, returning the transport data
/// for pulling residuals back to the original point.
fn displace(
    map: &DiscretizedSphereMap,
    q: usize,
    dir: usize,
    amount: f64,
    b1: &Vector3<f64>,
    b2: &Vector3<f64>,
) -> Result<([f64; 4], Vector3<f64>, Transport)> {
    let v0 = &map.values[q];
    if dir < 4 {
        // Geodesic in the base metric with RK4, transporting the coordinate
        // frame along the way.
        let mut x = v0.x;
        let mut vel = Vector4::ith(dir, amount);
        let mut frame = Matrix4::identity();
        let steps = 2;
        let dt = 1.0 / steps as f64;
        for _ in 0..steps {
            let gamma = christoffels(&map.target, &x)?;
            let acc = |vel: &Vector4<f64>| -> Vector4<f64> {
                Vector4::from_fn(|k, _| {
                    let mut s = 0.0;
                    for i in 0..4 {
                        for j in 0..4 {
                            s += gamma[k][i][j] * vel[i] * vel[j];
                        }
                    }
                    -s
                })
            };
            // Midpoint step is ample at these step sizes.
            let vm = vel + acc(&vel) * (0.5 * dt);
            let xm: [f64; 4] = std::array::from_fn(|i| x[i] + 0.5 * dt * vel[i]);
            let gm = christoffels(&map.target, &xm)?;
            // Transport equation dV/dt = -Gamma(x)(xdot, V).
            let mut transport_step = Matrix4::zeros();
            for k in 0..4 {
                for j in 0..4 {
                    let mut s = 0.0;
                    for i in 0..4 {
                        s += gm[k][i][j] * vm[i];
                    }
                    transport_step[(k, j)] = -s;
                }
            }
            frame += transport_step * frame * dt;
            x = std::array::from_fn(|i| x[i] + dt * vm[i]);
            vel += acc(&vm) * dt;
        }
        // Pull-back = inverse of the forward transport.
        let inv = frame
            .try_inverse()
            .ok_or_else(|| EvalError::Numerical("parallel transport degenerated".into()))?;
        Ok((
            x,
            v0.a,
            Transport { x_rotation: inv },
        ))
    } else {
        let dav = if dir == 4 { b1 * amount } else { b2 * amount };
        let norm = dav.norm();
        let a_new = if norm > 1e-300 {
            v0.a * norm.cos() + dav / norm * norm.sin()
        } else {
            v0.a
        };
        Ok((v0.x, a_new, Transport { x_rotation: Matrix4::identity() }))
    }
}

impl CrOperator {
    /// Dimension of the nodal space (six components per active node).
    pub fn nodal_dim(&self) -> usize {
        self.square_dim
    }

    /// Fredholm index of the stored operator: `cols - rows`, which equals
    /// `6 - 6g` with `g = 0` for the sphere domains built here.
    pub fn index(&self) -> isize {
        self.cols as isize - self.rows as isize
    }

    /// Apply the square collocation matrix to a nodal vector.
    pub fn apply_square(&self, xi: &[f64]) -> Vec<f64> {
        let n = self.square_dim;
        let mut out = vec![0.0; n];
        for (r, slot) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for c in 0..n {
                s += self.square[(r, c)] * xi[c];
            }
            *slot = s;
        }
        out
    }

    /// Minimum-norm least-squares solve over the retained spectrum: the six
    /// near-kernel directions are excluded, which fixes the
    /// reparametrisation gauge of Gauss-Newton updates.
    pub fn solve_min_norm(&self, rhs: &[f64]) -> Vec<f64> {
        let dim = self.square_dim;
        let mut xi = vec![0.0; dim];
        for k in 0..dim - self.tiny_count {
            let sigma = self.sigmas_square[k];
            if sigma <= 0.0 {
                continue;
            }
            let mut coeff = 0.0;
            for r in 0..dim {
                coeff += self.svd_u[(r, k)] * rhs[r];
            }
            coeff /= sigma;
            for r in 0..dim {
                xi[r] += self.svd_v[(r, k)] * coeff;
            }
        }
        xi
    }

    /// Kernel/cokernel counts of the stored (quotient) operator under the
    /// generic rule: `rank = #\{sigma >= sigma_max * gap_factor\}`,
    /// `kernel = cols - rank`, `cokernel = rows - rank`.
    pub fn kernel_cokernel(&self, gap_factor: f64) -> Result<(usize, usize, GapReport)> {
        let (k, c) = kernel_cokernel_from_sigmas(
            self.rows,
            self.cols,
            &self.singular_values,
            gap_factor,
        )?;
        Ok((k, c, self.gap.clone()))
    }
}

/// Assemble the square stage and return its full spectrum and right
/// singular vectors without the index validation (diagnostics only).
pub fn linearize_unchecked(
    map: &DiscretizedSphereMap,
    acs: &dyn AcsField,
) -> Result<(Vec<f64>, faer::Mat<f64>, usize)> {
    let (matrix, dim) = assemble_square(map, acs)?;
    let svd = faer::linalg::solvers::Svd::new(matrix.as_ref())
        .map_err(|e| EvalError::Numerical(format!("SVD failed: {e:?}")))?;
    let sigmas: Vec<f64> = (0..dim).map(|k| svd.S()[k]).collect();
    Ok((sigmas, svd.V().to_owned(), dim))
}

/// Directional finite difference of the full system map along a nodal
/// tangent `xi` (independent check of the assembled matrix columns).
pub fn operator_directional_fd(
    map: &DiscretizedSphereMap,
    acs: &dyn AcsField,
    xi: &[f64],
    eps: f64,
) -> Result<Vec<f64>> {
    let dim = 6 * map.grid.nodes.len();
    assert_eq!(xi.len(), dim);
    let target = map.target.clone();
    let scaled: Vec<f64> = xi.iter().map(|v| v * eps).collect();
    let plus = super::grid::apply_tangent(map, &scaled, &mut |_, x| christoffels(&target, x))?;
    let scaled: Vec<f64> = xi.iter().map(|v| -v * eps).collect();
    let minus = super::grid::apply_tangent(map, &scaled, &mut |_, x| christoffels(&target, x))?;
    let mut rp = vec![0.0; dim];
    let mut rm = vec![0.0; dim];
    system_rows(&plus, acs, &mut rp)?;
    system_rows(&minus, acs, &mut rm)?;
    Ok(rp
        .iter()
        .zip(rm.iter())
        .map(|(p, m)| (p - m) / (2.0 * eps))
        .collect())
}

/// Generic kernel/cokernel counting from a singular spectrum: `t` values
/// below `sigma_max * gap_factor` (validated by a factor-10 spectral gap)
/// reduce the rank; kernel and cokernel follow from the shape.
pub fn kernel_cokernel_from_sigmas(
    rows: usize,
    cols: usize,
    sigmas: &[f64],
    gap_factor: f64,
) -> Result<(usize, usize)> {
    if sigmas.is_empty() {
        return Ok((cols, rows));
    }
    let sigma_max = sigmas[0];
    let threshold = sigma_max * gap_factor;
    let t = sigmas.iter().filter(|s| **s < threshold).count();
    if t > 0 {
        let largest_tiny = sigmas[sigmas.len() - t];
        let smallest_kept = if t < sigmas.len() {
            sigmas[sigmas.len() - t - 1]
        } else {
            sigma_max
        };
        if smallest_kept / largest_tiny.max(f64::MIN_POSITIVE) < 10.0 {
            return Err(EvalError::Inconclusive(format!(
                "no clear spectral gap at factor {gap_factor:e}: {smallest_kept:.3e} vs {largest_tiny:.3e}"
            )));
        }
    }
    let rank = sigmas.len() - t;
    Ok((cols - rank, rows - rank))
}

/// Kernel/cokernel of an explicit matrix (rows are equations).
pub fn kernel_cokernel_of_matrix(
    matrix: &nalgebra::DMatrix<f64>,
    gap_factor: f64,
) -> Result<(usize, usize)> {
    let svd = matrix.clone().svd(false, false);
    let mut sigmas: Vec<f64> = svd.singular_values.iter().copied().collect();
    sigmas.sort_by(|a, b| b.total_cmp(a));
    kernel_cokernel_from_sigmas(matrix.nrows(), matrix.ncols(), &sigmas, gap_factor)
}

/// The six discretized Moebius reparametrisation fields of the bolt lift:
/// holomorphic vector fields `(1, i, z, i z, z^2, i z^2) d/dz`, expressed
/// per chart (quadratic in either coordinate) as nodal tangent vectors.
pub fn moebius_fields(map: &DiscretizedSphereMap) -> Vec<Vec<f64>> {
    let n_nodes = map.grid.nodes.len();
    let mut fields = Vec::with_capacity(6);
    for k in 0..6 {
        let mut xi = vec![0.0; 6 * n_nodes];
        for (id, node) in map.grid.nodes.iter().enumerate() {
            let z = nalgebra::Complex::new(node.z.x, node.z.y);
            let basis = |z: nalgebra::Complex<f64>, k: usize| -> nalgebra::Complex<f64> {
                let i = nalgebra::Complex::new(0.0, 1.0);
                match k {
                    0 => nalgebra::Complex::new(1.0, 0.0),
                    1 => i,
                    2 => z,
                    3 => i * z,
                    4 => z * z,
                    _ => i * z * z,
                }
            };
            // In the second chart the same field reads -w^2 v(1/w).
            let v = if node.chart == 0 {
                basis(z, k)
            } else {
                -z * z * basis(z.inv(), k)
            };
            // Tangent components live in the node's target chart, where the
            // base coordinate is the domain coordinate itself.
            xi[6 * id] = v.re;
            xi[6 * id + 1] = v.im;
        }
        fields.push(xi);
    }
    fields
}

/// Principal angles (radians) between the operator kernel and the span of
/// the discretized Moebius fields.
pub fn kernel_moebius_angles(op: &CrOperator, map: &DiscretizedSphereMap) -> Vec<f64> {
    let dim = op.square_dim;
    let fields = moebius_fields(map);
    let q1 = orthonormalize(&op.kernel, dim);
    let q2 = orthonormalize(&fields, dim);
    let mut cross = nalgebra::DMatrix::<f64>::zeros(q1.len(), q2.len());
    for (i, u) in q1.iter().enumerate() {
        for (j, v) in q2.iter().enumerate() {
            cross[(i, j)] = u.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        }
    }
    let svd = cross.svd(false, false);
    let mut angles: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|s| s.clamp(-1.0, 1.0).acos())
        .collect();
    angles.sort_by(f64::total_cmp);
    angles
}

fn orthonormalize(vectors: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        assert_eq!(w.len(), dim);
        for u in &out {
            let dot: f64 = u.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
            for (wi, ui) in w.iter_mut().zip(u.iter()) {
                *wi -= dot * ui;
            }
        }
        let norm: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for wi in &mut w {
                *wi /= norm;
            }
            out.push(w);
        }
    }
    out
}
