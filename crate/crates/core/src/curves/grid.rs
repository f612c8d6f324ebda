//! Two-chart collocation grid on the domain sphere and discretized maps
//! into the product twistor space of a hyperkaehler chart.
//!
//! The sphere carries conformal coordinates `z` and `1/z` on two square
//! tensor grids. Nodes with `|z| <= 1` are *owned* (they receive
//! Cauchy-Riemann residual equations); the remaining active nodes overlap
//! the other chart and are pinned by interpolation-consistency equations.

use crate::chart::{bolt_transition, MetricChart};
use crate::error::{EvalError, Result};
use nalgebra::{SMatrix, Vector2, Vector3, Vector4};
use std::sync::Arc;

/// Finite-difference weights for the first derivative at `x = 0` over the
/// integer stencil `offsets` (Fornberg's recurrence).
pub fn fd_weights(offsets: &[i32]) -> Vec<f64> {
    let n = offsets.len();
    // c[k][j]: weight of node j for the k-th derivative, built incrementally.
    let mut c = vec![vec![0.0; n]; 2];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let x: Vec<f64> = offsets.iter().map(|&o| o as f64).collect();
    let z = 0.0;
    let mut prev = vec![vec![0.0; n]; 2];
    for i in 1..n {
        for row in 0..2 {
            prev[row].clone_from(&c[row]);
        }
        let mut c2 = 1.0;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..2).rev() {
                    c[k][i] = c1 * (k as f64 * prev[k - 1][i - 1] - (x[i - 1] - z) * prev[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * (x[i - 1] - z) * prev[0][i - 1] / c2;
            }
            for k in (1..2).rev() {
                c[k][j] = ((x[i] - z) * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = (x[i] - z) * c[0][j] / c3;
        }
        c1 = c2;
    }
    c[1].clone()
}

/// One collocation node of the two-chart grid.
#[derive(Clone, Debug)]
pub struct GridNode {
    pub chart: usize,
    pub i: usize,
    pub j: usize,
    pub z: Vector2<f64>,
    pub owned: bool,
    /// For non-owned nodes: the interpolation stencil in the other chart
    /// pinning this node's value.
    pub interp: Option<InterpStencil>,
}

/// Bicubic Lagrange stencil: 16 source nodes with tensor weights.
#[derive(Clone, Debug)]
pub struct InterpStencil {
    pub nodes: [[usize; 4]; 4],
    pub wx: [f64; 4],
    pub wy: [f64; 4],
}

fn lagrange_weights(t: f64) -> [f64; 4] {
    // Nodes at 0, 1, 2, 3; t in [1, 2] when centred.
    let mut w = [0.0; 4];
    for (k, slot) in w.iter_mut().enumerate() {
        let mut p = 1.0;
        for m in 0..4 {
            if m != k {
                p *= (t - m as f64) / (k as f64 - m as f64);
            }
        }
        *slot = p;
    }
    w
}

/// Quintic smoothstep partition weight in `log |z|`, equal to one deep in
/// the chart and zero past the equatorial band; the two charts' weights sum
/// to one exactly.
fn partition_weight(z: &Vector2<f64>, t0: f64) -> f64 {
    let r = z.norm().max(1e-300);
    let t = r.ln();
    if t <= -t0 {
        1.0
    } else if t >= t0 {
        0.0
    } else {
        let u = (t + t0) / (2.0 * t0);
        1.0 - (6.0 * u.powi(5) - 15.0 * u.powi(4) + 10.0 * u.powi(3))
    }
}

/// Two-chart tensor grid with ownership and overlap metadata.
#[derive(Debug)]
pub struct SphereGrid {
    pub n: usize,
    pub half_width: f64,
    pub h: f64,
    pub active_radius: f64,
    pub nodes: Vec<GridNode>,
    /// `(chart, i, j) -> node id` lookup; `usize::MAX` for inactive.
    index: [Vec<usize>; 2],
    /// Per node: consistency rows whose stencil references it.
    pub dependents: Vec<Vec<usize>>,
    /// Partition-of-unity quadrature weight per node.
    pub quad_weight: Vec<f64>,
    pub owned_count: usize,
}

impl SphereGrid {
    /// Build the grid with `n` nodes per chart side (`n >= 16`).
    pub fn new(n: usize) -> Result<Arc<SphereGrid>> {
        if n < 16 {
            return Err(EvalError::Argument("grid size must be at least 16".into()));
        }
        // h = 2 L / (n - 1) with L = 1 + 3h leaves a two-cell stencil
        // margin around the owned disc.
        let h = 2.0 / (n as f64 - 7.0);
        let half_width = 1.0 + 3.0 * h;
        let active_radius = 1.0 + 2.2 * h;

        let coord = |k: usize| -> f64 { -half_width + 2.0 * half_width * k as f64 / (n as f64 - 1.0) };

        let mut nodes = Vec::new();
        let mut index = [vec![usize::MAX; n * n], vec![usize::MAX; n * n]];
        for chart in 0..2 {
            for i in 0..n {
                for j in 0..n {
                    let z = Vector2::new(coord(i), coord(j));
                    if z.norm() <= active_radius {
                        index[chart][i * n + j] = nodes.len();
                        nodes.push(GridNode {
                            chart,
                            i,
                            j,
                            z,
                            owned: z.norm() <= 1.0,
                            interp: None,
                        });
                    }
                }
            }
        }

        let mut grid = SphereGrid {
            n,
            half_width,
            h,
            active_radius,
            nodes,
            index,
            dependents: Vec::new(),
            quad_weight: Vec::new(),
            owned_count: 0,
        };
        grid.owned_count = grid.nodes.iter().filter(|p| p.owned).count();

        // Interpolation stencils for the overlap nodes.
        let mut stencils: Vec<(usize, InterpStencil)> = Vec::new();
        for id in 0..grid.nodes.len() {
            let node = &grid.nodes[id];
            if node.owned {
                continue;
            }
            let target = invert_z(&node.z);
            let other = 1 - node.chart;
            let fi = (target.x + half_width) / (2.0 * half_width) * (n as f64 - 1.0);
            let fj = (target.y + half_width) / (2.0 * half_width) * (n as f64 - 1.0);
            let mut bi = (fi.floor() as i64 - 1).clamp(0, n as i64 - 4) as usize;
            let mut bj = (fj.floor() as i64 - 1).clamp(0, n as i64 - 4) as usize;
            // Shift the block inward until all sixteen sources are active.
            let block_ok = |bi: usize, bj: usize, grid: &SphereGrid| -> bool {
                (0..4).all(|a| (0..4).all(|b| grid.node_id(other, bi + a, bj + b).is_some()))
            };
            for _ in 0..(n / 2) {
                if block_ok(bi, bj, &grid) {
                    break;
                }
                // Move the block centre toward the origin.
                let centre_i = bi as f64 + 1.5;
                let centre_j = bj as f64 + 1.5;
                let mid = (n as f64 - 1.0) / 2.0;
                if (centre_i - mid).abs() > (centre_j - mid).abs() {
                    bi = if centre_i > mid { bi - 1 } else { bi + 1 };
                } else {
                    bj = if centre_j > mid { bj - 1 } else { bj + 1 };
                }
            }
            if !block_ok(bi, bj, &grid) {
                return Err(EvalError::Numerical(format!(
                    "no interpolation block for overlap node at {target:?}"
                )));
            }
            let wx = lagrange_weights(fi - bi as f64);
            let wy = lagrange_weights(fj - bj as f64);
            let mut nodes16 = [[0usize; 4]; 4];
            for (a, row) in nodes16.iter_mut().enumerate() {
                for (b, slot) in row.iter_mut().enumerate() {
                    *slot = grid.node_id(other, bi + a, bj + b).expect("checked active");
                }
            }
            stencils.push((
                id,
                InterpStencil {
                    nodes: nodes16,
                    wx,
                    wy,
                },
            ));
        }
        let mut dependents = vec![Vec::new(); grid.nodes.len()];
        for (id, st) in stencils {
            for row in &st.nodes {
                for &src in row {
                    dependents[src].push(id);
                }
            }
            grid.nodes[id].interp = Some(st);
        }
        for list in &mut dependents {
            list.sort_unstable();
            list.dedup();
        }
        grid.dependents = dependents;

        let t0 = 0.9 * active_radius.ln();
        grid.quad_weight = grid
            .nodes
            .iter()
            .map(|p| partition_weight(&p.z, t0))
            .collect();

        Ok(Arc::new(grid))
    }

    #[inline]
    pub fn node_id(&self, chart: usize, i: usize, j: usize) -> Option<usize> {
        if i >= self.n || j >= self.n {
            return None;
        }
        let id = self.index[chart][i * self.n + j];
        (id != usize::MAX).then_some(id)
    }

    /// Ids of the residual stencil (cross of half-width 2) around an owned
    /// node; `None` if any point is missing.
    pub fn stencil_cross(&self, id: usize) -> Option<[usize; 9]> {
        let node = &self.nodes[id];
        let mut out = [0usize; 9];
        let mut k = 0;
        for d in [-2i64, -1, 1, 2] {
            out[k] = self.node_id(node.chart, (node.i as i64 + d) as usize, node.j)?;
            k += 1;
        }
        for d in [-2i64, -1, 1, 2] {
            out[k] = self.node_id(node.chart, node.i, (node.j as i64 + d) as usize)?;
            k += 1;
        }
        out[8] = id;
        Some(out)
    }
}

/// `z -> 1/z` in real components.
pub fn invert_z(z: &Vector2<f64>) -> Vector2<f64> {
    let n2 = z.norm_squared();
    Vector2::new(z.x / n2, -z.y / n2)
}

/// Value of a discretized map at one node: a point of the product twistor
/// space, with the base point held in one of the two bolt charts.
#[derive(Clone, Copy, Debug)]
pub struct MapValue {
    pub target_chart: usize,
    pub x: [f64; 4],
    pub a: Vector3<f64>,
}

impl MapValue {
    /// Base coordinates converted to the requested target chart.
    pub fn x_in_chart(&self, chart: usize) -> [f64; 4] {
        if chart == self.target_chart {
            self.x
        } else {
            bolt_transition(&self.x)
        }
    }
}

/// Collocation values of a map from the sphere into the product twistor
/// space `X x S^2` of the bolt chart.
#[derive(Clone)]
pub struct DiscretizedSphereMap {
    pub grid: Arc<SphereGrid>,
    pub target: MetricChart,
    pub values: Vec<MapValue>,
    pub homotopy_tag: String,
}

impl DiscretizedSphereMap {
    /// Largest consistency defect across the overlap nodes (base
    /// coordinates and fibre points compared through the transition).
    pub fn overlap_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (id, node) in self.grid.nodes.iter().enumerate() {
            let Some(st) = &node.interp else { continue };
            let (x_interp, a_interp) = interpolate_value(self, st, self.values[id].target_chart);
            let v = &self.values[id];
            for k in 0..4 {
                worst = worst.max((v.x[k] - x_interp[k]).abs());
            }
            worst = worst.max((v.a - a_interp).norm());
        }
        worst
    }

    /// Derivative of the map along the domain coordinates at a node, by
    /// fourth-order differences; stencils shift inward near the active rim.
    /// Components are reported in the node's target chart.
    pub fn du(&self, id: usize) -> Result<(SMatrix<f64, 4, 2>, SMatrix<f64, 3, 2>)> {
        let node = &self.grid.nodes[id];
        let chart = self.values[id].target_chart;
        let mut dx = SMatrix::<f64, 4, 2>::zeros();
        let mut da = SMatrix::<f64, 3, 2>::zeros();
        for axis in 0..2 {
            let pick = |d: i64| -> Option<usize> {
                let (i, j) = if axis == 0 {
                    ((node.i as i64 + d) as usize, node.j)
                } else {
                    (node.i, (node.j as i64 + d) as usize)
                };
                self.grid.node_id(node.chart, i, j)
            };
            // Find a five-node stencil around the node, shifting if needed.
            let mut chosen: Option<(Vec<i64>, Vec<usize>)> = None;
            'shift: for shift in [0i64, 1, -1, 2, -2] {
                let offs: Vec<i64> = (-2..=2).map(|d| d + shift).collect();
                let mut ids = Vec::with_capacity(5);
                for &o in &offs {
                    match pick(o) {
                        Some(pid) => ids.push(pid),
                        None => continue 'shift,
                    }
                }
                chosen = Some((offs, ids));
                break;
            }
            let (offs, ids) = chosen.ok_or_else(|| {
                EvalError::Numerical(format!(
                    "no derivative stencil at grid node ({}, {}, {})",
                    node.chart, node.i, node.j
                ))
            })?;
            let offs32: Vec<i32> = offs.iter().map(|&o| o as i32).collect();
            let w = fd_weights(&offs32);
            // Difference against the centre value so constant maps yield an
            // exactly zero derivative.
            let x0 = self.values[id].x_in_chart(chart);
            let a0 = self.values[id].a;
            for (k, &pid) in ids.iter().enumerate() {
                let coeff = w[k] / self.grid.h;
                let v = &self.values[pid];
                let x = v.x_in_chart(chart);
                for c in 0..4 {
                    dx[(c, axis)] += coeff * (x[c] - x0[c]);
                }
                for c in 0..3 {
                    da[(c, axis)] += coeff * (v.a[c] - a0[c]);
                }
            }
        }
        // Fibre derivatives live in the tangent plane of the sphere.
        let a = self.values[id].a;
        for axis in 0..2 {
            let col = da.column(axis).into_owned();
            da.set_column(axis, &(col - a * a.dot(&col)));
        }
        Ok((dx, da))
    }

    /// Integrate a 2-form pulled back along the map: the callback receives
    /// each node with its derivative pair and returns the form on
    /// `(d/ds1, d/ds2)`; partition-of-unity weighted sum over both charts.
    pub fn integrate_pullback<F>(&self, mut form: F) -> Result<f64>
    where
        F: FnMut(usize, &MapValue, &SMatrix<f64, 4, 2>, &SMatrix<f64, 3, 2>) -> Result<f64>,
    {
        let mut total = 0.0;
        let cell = self.grid.h * self.grid.h;
        for id in 0..self.grid.nodes.len() {
            let w = self.grid.quad_weight[id];
            if w == 0.0 {
                continue;
            }
            let (dx, da) = self.du(id)?;
            total += w * cell * form(id, &self.values[id], &dx, &da)?;
        }
        Ok(total)
    }
}

/// Interpolated value at an overlap node, reported in `target_chart`.
pub fn interpolate_value(
    map: &DiscretizedSphereMap,
    st: &InterpStencil,
    target_chart: usize,
) -> ([f64; 4], Vector3<f64>) {
    let mut x = [0.0; 4];
    let mut a = Vector3::zeros();
    // Express all sources in the chart opposite to the node's, then map
    // through the transition once.
    let src_chart = map.values[st.nodes[0][0]].target_chart;
    for (r, row) in st.nodes.iter().enumerate() {
        for (c, &src) in row.iter().enumerate() {
            let w = st.wx[r] * st.wy[c];
            let v = &map.values[src];
            let xs = v.x_in_chart(src_chart);
            for k in 0..4 {
                x[k] += w * xs[k];
            }
            a += v.a * w;
        }
    }
    let x_out = if src_chart == target_chart {
        x
    } else {
        bolt_transition(&x)
    };
    let n = a.norm();
    if n > 1e-12 {
        a /= n;
    }
    (x_out, a)
}

/// Horizontal lift of the bolt sphere: the zero section at the `I_1` point
/// of the fibre sphere.
pub fn bolt_lift(chart: &MetricChart, n: usize) -> Result<DiscretizedSphereMap> {
    if chart.name() != "eguchi-hanson-bolt" {
        return Err(EvalError::Argument(format!(
            "horizontal bolt lift needs the bolt chart, got '{}'",
            chart.name()
        )));
    }
    let grid = SphereGrid::new(n)?;
    let values = grid
        .nodes
        .iter()
        .map(|node| MapValue {
            target_chart: node.chart,
            x: [node.z.x, node.z.y, 0.0, 0.0],
            a: Vector3::x(),
        })
        .collect();
    Ok(DiscretizedSphereMap {
        grid,
        target: chart.clone(),
        values,
        homotopy_tag: "bolt-zero-section|fibre=I1".into(),
    })
}

/// Tangent update of a map: per-node displacements in the node's target
/// chart plus fibre-tangent components in the node's tangent basis.
pub fn apply_tangent(
    map: &DiscretizedSphereMap,
    xi: &[f64],
    gamma_of: &mut dyn FnMut(usize, &[f64; 4]) -> Result<[[[f64; 4]; 4]; 4]>,
) -> Result<DiscretizedSphereMap> {
    assert_eq!(xi.len(), 6 * map.grid.nodes.len());
    let mut out = map.clone();
    for id in 0..map.grid.nodes.len() {
        let v = &map.values[id];
        let dx = Vector4::new(xi[6 * id], xi[6 * id + 1], xi[6 * id + 2], xi[6 * id + 3]);
        let (b1, b2) = crate::linalg::tangent_basis(&v.a);
        let dav = b1 * xi[6 * id + 4] + b2 * xi[6 * id + 5];

        // Geodesic exponential in the base: one RK4 step of the geodesic
        // flow covers the tiny displacements used here.
        let mut x = v.x;
        let mut vel = dx;
        let steps = 2;
        let dt = 1.0 / steps as f64;
        for _ in 0..steps {
            let f = |x: &[f64; 4], vel: &Vector4<f64>, gamma_of: &mut dyn FnMut(usize, &[f64; 4]) -> Result<[[[f64; 4]; 4]; 4]>|
             -> Result<Vector4<f64>> {
                let gamma = gamma_of(id, x)?;
                let mut acc = Vector4::zeros();
                for k in 0..4 {
                    let mut s = 0.0;
                    for i in 0..4 {
                        for j in 0..4 {
                            s += gamma[k][i][j] * vel[i] * vel[j];
                        }
                    }
                    acc[k] = -s;
                }
                Ok(acc)
            };
            let k1v = f(&x, &vel, gamma_of)?;
            let x2 = std::array::from_fn(|i| x[i] + 0.5 * dt * vel[i]);
            let v2 = vel + k1v * (0.5 * dt);
            let k2v = f(&x2, &v2, gamma_of)?;
            let x3 = std::array::from_fn(|i| x[i] + 0.5 * dt * v2[i]);
            let v3 = vel + k2v * (0.5 * dt);
            let k3v = f(&x3, &v3, gamma_of)?;
            let x4 = std::array::from_fn(|i| x[i] + dt * v3[i]);
            let v4 = vel + k3v * dt;
            let k4v = f(&x4, &v4, gamma_of)?;
            let xdot = (vel + (v2 + v3) * 2.0 + v4) * (dt / 6.0);
            x = std::array::from_fn(|i| x[i] + xdot[i]);
            vel += (k1v + (k2v + k3v) * 2.0 + k4v) * (dt / 6.0);
        }

        // Great-circle exponential on the fibre sphere.
        let norm = dav.norm();
        let a_new = if norm > 1e-300 {
            v.a * norm.cos() + dav / norm * norm.sin()
        } else {
            v.a
        };
        out.values[id] = MapValue {
            target_chart: v.target_chart,
            x,
            a: a_new,
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::catalog;
    use approx::assert_relative_eq;

    #[test]
    fn fd_weights_match_central_coefficients() {
        let w = fd_weights(&[-2, -1, 0, 1, 2]);
        let expected = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(expected.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-13);
        }
        // Exactness on degree-4 polynomials for a shifted stencil.
        let offs = [-1, 0, 1, 2, 3];
        let w = fd_weights(&offs);
        for p in 0..=4 {
            let d: f64 = offs
                .iter()
                .zip(w.iter())
                .map(|(&o, &c)| c * (o as f64).powi(p))
                .sum();
            let expected = if p == 1 { 1.0 } else { 0.0 };
            assert_relative_eq!(d, expected, epsilon = 1e-11);
        }
    }

    #[test]
    fn grid_counts_and_ownership() {
        let grid = SphereGrid::new(24).unwrap();
        assert!(grid.owned_count > 0);
        let overlap = grid.nodes.len() - grid.owned_count;
        assert!(overlap > 0, "two-chart grid must have overlap nodes");
        for node in &grid.nodes {
            if !node.owned {
                assert!(node.interp.is_some());
                assert!(node.z.norm() > 1.0);
            }
        }
    }

    #[test]
    fn partition_weights_sum_to_one_across_charts() {
        let grid = SphereGrid::new(24).unwrap();
        let t0 = 0.9 * grid.active_radius.ln();
        for node in &grid.nodes {
            if node.z.norm() < 1e-6 {
                continue;
            }
            let w1 = partition_weight(&node.z, t0);
            let w2 = partition_weight(&invert_z(&node.z), t0);
            assert_relative_eq!(w1 + w2, 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn bolt_lift_is_consistent_across_the_overlap() {
        let chart = catalog("eguchi-hanson-bolt").unwrap();
        let map = bolt_lift(&chart, 24).unwrap();
        let defect = map.overlap_defect();
        assert!(defect < 1e-8, "overlap defect {defect}");
        assert_eq!(map.homotopy_tag, "bolt-zero-section|fibre=I1");
    }

    #[test]
    fn du_of_bolt_lift_is_exact() {
        let chart = catalog("eguchi-hanson-bolt").unwrap();
        let map = bolt_lift(&chart, 16).unwrap();
        for (id, node) in map.grid.nodes.iter().enumerate() {
            if !node.owned {
                continue;
            }
            let (dx, da) = map.du(id).unwrap();
            // The zero section is the identity in the base coordinates.
            assert_relative_eq!(dx[(0, 0)], 1.0, epsilon = 1e-9);
            assert_relative_eq!(dx[(1, 1)], 1.0, epsilon = 1e-9);
            assert!(dx[(2, 0)].abs() + dx[(3, 1)].abs() < 1e-10);
            assert!(da.norm() < 1e-12);
        }
    }

    #[test]
    fn quadrature_reproduces_bolt_area() {
        // The pullback of the first Kaehler form over the zero section
        // integrates to the area pi of the bolt sphere (ALE parameter 1).
        let chart = catalog("eguchi-hanson-bolt").unwrap();
        let triple = crate::hyperkahler::hk_triple(&chart).unwrap();
        let map = bolt_lift(&chart, 24).unwrap();
        let total = map
            .integrate_pullback(|_, v, dx, _| {
                let geo = crate::curvature::geometry_at(&chart, &v.x)?;
                let w1 = triple.kahler_form(&geo, 0);
                let u = dx.column(0);
                let vv = dx.column(1);
                let mut s = 0.0;
                for p in 0..4 {
                    for q in 0..4 {
                        s += w1[(p, q)] * u[p] * vv[q];
                    }
                }
                Ok(s)
            })
            .unwrap();
        assert_relative_eq!(total, std::f64::consts::PI, max_relative = 2e-4);
    }
}
