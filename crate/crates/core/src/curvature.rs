//! Curvature pipeline: orthonormal frames, Christoffel symbols, the Riemann
//! tensor in a frame, and the 6x6 curvature operator split into its
//! self-dual / anti-self-dual blocks.
//!
//! Conventions. `R(X,Y) = [nabla_X, nabla_Y] - nabla_{[X,Y]}`, and the
//! stored components are `rm(a,b,c,d) = <R(e_a, e_b) e_d, e_c>`, so a unit
//! round sphere has `rm(a,b,a,b) = +1` and the curvature operator on the
//! wedge basis `{e_a ^ e_b}` (declared orthonormal, no half factor) is the
//! identity. The self-dual basis is
//! `sigma_i^+ = (e^0 ^ e^i + eps_ijk e^j ^ e^k / 2) / sqrt(2)`, so a unit
//! space form has `A = Id` and `tr A = R/4` holds with `R = 12`.

use crate::chart::{MetricChart, Orientation};
use crate::error::{EvalError, Result};
use crate::jet::{sym_index, Jet2, NSYM};
use crate::linalg;
use nalgebra::{Matrix3, Matrix4, SMatrix, Vector4};

/// Wedge-basis pair order; the first three pair with the last three under
/// the Hodge star.
pub const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (2, 3), (3, 1), (1, 2)];

/// `PAIR_INDEX[a][b] = (wedge index, sign)`; diagonal entries are unused.
const fn build_pair_index() -> [[(usize, f64); 4]; 4] {
    let mut table = [[(0usize, 0.0f64); 4]; 4];
    let mut idx = 0;
    while idx < 6 {
        let (a, b) = PAIRS[idx];
        table[a][b] = (idx, 1.0);
        table[b][a] = (idx, -1.0);
        idx += 1;
    }
    table
}
const PAIR_INDEX: [[(usize, f64); 4]; 4] = build_pair_index();

/// Antisymmetric matrices of the self-dual basis forms `sigma_i^+` in an
/// orthonormal frame (entry `(a,b)` is the form on `(e_a, e_b)`).
pub fn sigma_plus() -> [Matrix4<f64>; 3] {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = [Matrix4::zeros(); 3];
    for (i, m) in out.iter_mut().enumerate() {
        let (p, q) = PAIRS[i];
        let (s, t) = PAIRS[i + 3];
        m[(p, q)] = r;
        m[(q, p)] = -r;
        m[(s, t)] = r;
        m[(t, s)] = -r;
    }
    out
}

/// Anti-self-dual analogue of [`sigma_plus`].
pub fn sigma_minus() -> [Matrix4<f64>; 3] {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = [Matrix4::zeros(); 3];
    for (i, m) in out.iter_mut().enumerate() {
        let (p, q) = PAIRS[i];
        let (s, t) = PAIRS[i + 3];
        m[(p, q)] = r;
        m[(q, p)] = -r;
        m[(s, t)] = -r;
        m[(t, s)] = r;
    }
    out
}

/// Orthonormal coframe/frame pair from the Cholesky factor of `g`, with the
/// last covector flipped when the chart orientation is reversed.
#[derive(Clone, Debug)]
pub struct OrthoFrame {
    /// Rows are the coframe covectors `e^a` in chart components.
    pub coframe: Matrix4<f64>,
    /// Rows are the frame vectors `E_a` in chart components.
    pub frame: Matrix4<f64>,
    /// Coordinate derivatives of the coframe.
    pub d_coframe: [Matrix4<f64>; 4],
    /// Coordinate derivatives of the frame.
    pub d_frame: [Matrix4<f64>; 4],
    /// Whether the orientation flip was applied.
    pub orientation_corrected: bool,
}

impl OrthoFrame {
    /// Chart components of a frame-component vector.
    pub fn to_chart(&self, v: &Vector4<f64>) -> Vector4<f64> {
        self.frame.transpose() * v
    }

    /// Frame components of a chart-component vector.
    pub fn to_frame(&self, v: &Vector4<f64>) -> Vector4<f64> {
        self.coframe * v
    }
}

/// Construct the orthonormal frame for metric values `g` (packed) under the
/// given orientation. Fails when `g` is not positive definite.
pub fn ortho_frame(g: &[f64; NSYM], orientation: Orientation) -> Result<OrthoFrame> {
    ortho_frame_with_derivs(g, &[[0.0; NSYM]; 4], orientation)
}

fn flip_last_row() -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::new(1.0, 1.0, 1.0, -1.0))
}

/// [`ortho_frame`] including coordinate derivatives of the factors, given
/// the packed derivatives `dg[k] = d g / d x_k`.
pub fn ortho_frame_with_derivs(
    g: &[f64; NSYM],
    dg: &[[f64; NSYM]; 4],
    orientation: Orientation,
) -> Result<OrthoFrame> {
    let u0 = linalg::cholesky4(g).ok_or(EvalError::Validity {
        point: [f64::NAN; 4],
        detail: "Cholesky factorisation failed".into(),
    })?;
    let u0_inv = u0.try_inverse().ok_or_else(|| EvalError::Numerical("singular coframe".into()))?;
    let (u, u_inv) = match orientation {
        Orientation::Standard => (u0, u0_inv),
        Orientation::Reversed => (flip_last_row() * u0, u0_inv * flip_last_row()),
    };
    let frame = u_inv.transpose();
    let mut d_coframe = [Matrix4::zeros(); 4];
    let mut d_frame = [Matrix4::zeros(); 4];
    for k in 0..4 {
        let dgm = linalg::metric_matrix(&dg[k]);
        let du0 = linalg::cholesky4_derivative(&u0, &u0_inv, &dgm);
        let du = match orientation {
            Orientation::Standard => du0,
            Orientation::Reversed => flip_last_row() * du0,
        };
        d_coframe[k] = du;
        // d(U^{-T}) = -(U^{-1} dU U^{-1})^T
        d_frame[k] = -(u_inv * du * u_inv).transpose();
    }
    Ok(OrthoFrame {
        coframe: u,
        frame,
        d_coframe,
        d_frame,
        orientation_corrected: matches!(orientation, Orientation::Reversed),
    })
}

/// Frame components of the Riemann tensor, stored as the symmetric operator
/// on the wedge basis so the pair symmetries are structural.
#[derive(Clone, Debug)]
pub struct RiemannFrame {
    /// `<Rm(e_a ^ e_b), e_c ^ e_d>` on the [`PAIRS`] basis.
    pub r6_wedge: SMatrix<f64, 6, 6>,
}

impl RiemannFrame {
    /// `rm(a,b,c,d) = <R(e_a,e_b) e_d, e_c>`.
    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        if a == b || c == d {
            return 0.0;
        }
        let (i, si) = PAIR_INDEX[a][b];
        let (j, sj) = PAIR_INDEX[c][d];
        si * sj * self.r6_wedge[(i, j)]
    }

    /// Endomorphism matrix of `R(e_a, e_b)` acting on frame vectors.
    pub fn so4_matrix(&self, a: usize, b: usize) -> Matrix4<f64> {
        Matrix4::from_fn(|d, c| self.get(a, b, d, c))
    }

    /// Sectional curvature of the plane spanned by orthonormal frame
    /// vectors `u`, `v`.
    pub fn sectional(&self, u: &Vector4<f64>, v: &Vector4<f64>) -> f64 {
        let mut k = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                if u[a] * v[b] == 0.0 {
                    continue;
                }
                for c in 0..4 {
                    for d in 0..4 {
                        k += self.get(a, b, c, d) * u[a] * v[b] * u[c] * v[d];
                    }
                }
            }
        }
        k
    }
}

/// The curvature operator in the self-dual / anti-self-dual splitting.
#[derive(Clone, Debug)]
pub struct CurvatureBlocks {
    /// Operator on the `sigma^+ (+) sigma^-` basis: `[[A, B^T], [B, C]]`.
    pub r6: SMatrix<f64, 6, 6>,
    pub a: Matrix3<f64>,
    pub b: Matrix3<f64>,
    pub c: Matrix3<f64>,
    pub ricci: Matrix4<f64>,
    pub scalar: f64,
}

/// Everything the downstream modules need at one chart point.
#[derive(Clone, Debug)]
pub struct PointGeometry {
    pub x: [f64; 4],
    pub g: Matrix4<f64>,
    pub g_inv: Matrix4<f64>,
    pub frame: OrthoFrame,
    pub rm: RiemannFrame,
    pub blocks: CurvatureBlocks,
    /// `conn[k][(a,b)] = g(nabla_{d/dx_k} E_a, E_b)` (so(4)-valued).
    pub conn: [Matrix4<f64>; 4],
    /// Connection induced on `Lambda^+` in the `sigma^+` trivialisation,
    /// per coordinate direction (so(3)-valued).
    pub lambda_plus: [Matrix3<f64>; 4],
    /// Christoffel symbols `gamma[k][i][j] = Gamma^k_{ij}`.
    pub gamma: [[[f64; 4]; 4]; 4],
}

/// Derivation action of an endomorphism on 2-forms, as a matrix commutator
/// on antisymmetric component matrices.
fn form_action(rho: &Matrix4<f64>, phi: &Matrix4<f64>) -> Matrix4<f64> {
    rho * phi - phi * rho
}

/// Project the derivation action of `rho` (an endomorphism of the frame) to
/// the `sigma^+` block of `Lambda^2`.
pub fn so3_plus_part(rho: &Matrix4<f64>, sig: &[Matrix4<f64>; 3]) -> Matrix3<f64> {
    let mut out = Matrix3::zeros();
    for i in 0..3 {
        let act = form_action(rho, &sig[i]);
        for j in 0..3 {
            // Lambda^2 inner product: sum over a<b, i.e. half the full sum.
            out[(j, i)] = 0.5 * act.component_mul(&sig[j]).sum();
        }
    }
    out
}

/// Full geometry computation at a chart point.
pub fn geometry_at(chart: &MetricChart, x: &[f64; 4]) -> Result<PointGeometry> {
    let jets = chart.metric_jet(x)?;
    geometry_from_jets(chart, x, &jets)
}

/// As [`geometry_at`] but reusing already-evaluated metric jets.
pub fn geometry_from_jets(
    chart: &MetricChart,
    x: &[f64; 4],
    jets: &[Jet2; NSYM],
) -> Result<PointGeometry> {
    let g_packed: [f64; NSYM] = std::array::from_fn(|k| jets[k].val);
    let dg: [[f64; NSYM]; 4] = std::array::from_fn(|k| std::array::from_fn(|m| jets[m].grad[k]));

    let g = linalg::metric_matrix(&g_packed);
    let g_inv = g.try_inverse().ok_or(EvalError::Validity {
        point: *x,
        detail: "metric not invertible".into(),
    })?;
    let frame = ortho_frame_with_derivs(&g_packed, &dg, chart.orientation())?;

    // Christoffel symbols Gamma^k_{ij} and their coordinate derivatives.
    let dgm: [Matrix4<f64>; 4] = std::array::from_fn(|k| linalg::metric_matrix(&dg[k]));
    let dginv: [Matrix4<f64>; 4] = std::array::from_fn(|k| -(g_inv * dgm[k] * g_inv));
    // ddg[m][i][(j,l)] = d_m d_i g_{jl}
    let hess_at = |m: usize, i: usize, j: usize, l: usize| jets[sym_index(j, l)].hess_at(m, i);

    let mut gamma = [[[0.0; 4]; 4]; 4]; // gamma[k][i][j]
    for k in 0..4 {
        for i in 0..4 {
            for j in i..4 {
                let mut s = 0.0;
                for l in 0..4 {
                    s += g_inv[(k, l)] * (dgm[i][(j, l)] + dgm[j][(i, l)] - dgm[l][(i, j)]);
                }
                gamma[k][i][j] = 0.5 * s;
                gamma[k][j][i] = gamma[k][i][j];
            }
        }
    }
    // dgamma[m][k][i][j] = d_m Gamma^k_{ij}
    let mut dgamma = [[[[0.0; 4]; 4]; 4]; 4];
    for m in 0..4 {
        for k in 0..4 {
            for i in 0..4 {
                for j in i..4 {
                    let mut s = 0.0;
                    for l in 0..4 {
                        s += dginv[m][(k, l)] * (dgm[i][(j, l)] + dgm[j][(i, l)] - dgm[l][(i, j)]);
                        s += g_inv[(k, l)]
                            * (hess_at(m, i, j, l) + hess_at(m, j, i, l) - hess_at(m, l, i, j));
                    }
                    dgamma[m][k][i][j] = 0.5 * s;
                    dgamma[m][k][j][i] = dgamma[m][k][i][j];
                }
            }
        }
    }

    // Coordinate curvature: R(d_i, d_j) d_l = rcoef[m][l][i][j] d_m.
    let mut rcoef = [[[[0.0; 4]; 4]; 4]; 4];
    for m in 0..4 {
        for l in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    let mut s = dgamma[i][m][j][l] - dgamma[j][m][i][l];
                    for a in 0..4 {
                        s += gamma[m][i][a] * gamma[a][j][l] - gamma[m][j][a] * gamma[a][i][l];
                    }
                    rcoef[m][l][i][j] = s;
                }
            }
        }
    }
    // rlow[i][j][k][l] = <R(d_i, d_j) d_l, d_k>
    let mut rlow = [[[[0.0; 4]; 4]; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                for l in 0..4 {
                    let mut s = 0.0;
                    for m in 0..4 {
                        s += g[(k, m)] * rcoef[m][l][i][j];
                    }
                    rlow[i][j][k][l] = s;
                }
            }
        }
    }

    // Wedge-basis curvature operator in the orthonormal frame; symmetrised
    // so the pair symmetry is structural.
    let f = &frame.frame;
    let mut r6w = SMatrix::<f64, 6, 6>::zeros();
    for (bi, &(a, b)) in PAIRS.iter().enumerate() {
        for (bj, &(c, d)) in PAIRS.iter().enumerate() {
            let mut s = 0.0;
            for i in 0..4 {
                if f[(a, i)] == 0.0 {
                    continue;
                }
                for j in 0..4 {
                    let fab = f[(a, i)] * f[(b, j)];
                    if fab == 0.0 {
                        continue;
                    }
                    for k in 0..4 {
                        for l in 0..4 {
                            s += fab * f[(c, k)] * f[(d, l)] * rlow[i][j][k][l];
                        }
                    }
                }
            }
            r6w[(bi, bj)] = s;
        }
    }
    r6w = (r6w + r6w.transpose()) * 0.5;
    let rm = RiemannFrame { r6_wedge: r6w };

    let blocks = blocks_from_wedge(&rm);

    // Frame connection: nabla_{d/dx_k} E_a expressed against the frame.
    let mut conn = [Matrix4::zeros(); 4];
    for k in 0..4 {
        let mut w = Matrix4::zeros(); // w[(a,j)]: chart components of nabla_k E_a
        for a in 0..4 {
            for j in 0..4 {
                let mut s = frame.d_frame[k][(a, j)];
                for i in 0..4 {
                    s += frame.frame[(a, i)] * gamma[j][k][i];
                }
                w[(a, j)] = s;
            }
        }
        conn[k] = w * g * frame.frame.transpose();
        // Structurally antisymmetric up to roundoff; make it exact.
        conn[k] = (conn[k] - conn[k].transpose()) * 0.5;
    }

    let sig = sigma_plus();
    let lambda_plus = std::array::from_fn(|k| so3_plus_part(&conn[k].transpose(), &sig));

    Ok(PointGeometry {
        x: *x,
        g,
        g_inv,
        frame,
        rm,
        blocks,
        conn,
        lambda_plus,
        gamma,
    })
}

fn blocks_from_wedge(rm: &RiemannFrame) -> CurvatureBlocks {
    let r6w = &rm.r6_wedge;
    let e = r6w.fixed_view::<3, 3>(0, 0).into_owned();
    let fblk = r6w.fixed_view::<3, 3>(0, 3).into_owned();
    let g6 = r6w.fixed_view::<3, 3>(3, 3).into_owned();
    let a = (e + fblk + fblk.transpose() + g6) * 0.5;
    let c = (e - fblk - fblk.transpose() + g6) * 0.5;
    let b = (e + fblk.transpose() - fblk - g6).transpose() * 0.5;

    let mut r6 = SMatrix::<f64, 6, 6>::zeros();
    r6.fixed_view_mut::<3, 3>(0, 0).copy_from(&a);
    r6.fixed_view_mut::<3, 3>(0, 3).copy_from(&b.transpose());
    r6.fixed_view_mut::<3, 3>(3, 0).copy_from(&b);
    r6.fixed_view_mut::<3, 3>(3, 3).copy_from(&c);

    let mut ricci = Matrix4::zeros();
    for x in 0..4 {
        for y in x..4 {
            let mut s = 0.0;
            for k in 0..4 {
                s += rm.get(k, x, k, y);
            }
            ricci[(x, y)] = s;
            ricci[(y, x)] = s;
        }
    }
    let scalar = ricci.trace();
    CurvatureBlocks {
        r6,
        a,
        b,
        c,
        ricci,
        scalar,
    }
}

/// Curvature blocks at a point (convenience wrapper for callers that do not
/// need the connection data).
pub fn blocks_at(chart: &MetricChart, x: &[f64; 4]) -> Result<CurvatureBlocks> {
    Ok(geometry_at(chart, x)?.blocks)
}

/// Extremal sectional curvatures over `n_planes` sampled tangent 2-planes,
/// each polished by a few Newton steps in a local Grassmannian chart.
pub fn sectional_range(chart: &MetricChart, x: &[f64; 4], n_planes: usize) -> Result<(f64, f64)> {
    if n_planes < 64 {
        return Err(EvalError::Argument("need at least 64 sample planes".into()));
    }
    use rand::SeedableRng;
    let geo = geometry_at(chart, x)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5ec7);

    let mut best_min: Option<(f64, Vector4<f64>, Vector4<f64>)> = None;
    let mut best_max: Option<(f64, Vector4<f64>, Vector4<f64>)> = None;
    for _ in 0..n_planes {
        let u = random_unit4(&mut rng);
        let mut v = random_unit4(&mut rng);
        v -= u * u.dot(&v);
        let n = v.norm();
        if n < 1e-6 {
            continue;
        }
        v /= n;
        let k = geo.rm.sectional(&u, &v);
        if best_min.as_ref().is_none_or(|(kk, _, _)| k < *kk) {
            best_min = Some((k, u, v));
        }
        if best_max.as_ref().is_none_or(|(kk, _, _)| k > *kk) {
            best_max = Some((k, u, v));
        }
    }
    let (k0, u0, v0) = best_min.ok_or_else(|| EvalError::Numerical("no valid planes".into()))?;
    let (k1, u1, v1) = best_max.unwrap();
    let kmin = polish_plane(&geo.rm, u0, v0, k0, false);
    let kmax = polish_plane(&geo.rm, u1, v1, k1, true);
    Ok((kmin.min(k0), kmax.max(k1)))
}

fn random_unit4<R: rand::Rng>(rng: &mut R) -> Vector4<f64> {
    loop {
        let v = Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 {
            return v / n;
        }
    }
}

/// Newton refinement of an extremal plane in the 4-parameter Grassmannian
/// chart around `(u, v)`.
fn polish_plane(
    rm: &RiemannFrame,
    u: Vector4<f64>,
    v: Vector4<f64>,
    k0: f64,
    maximize: bool,
) -> f64 {
    // Complete (u, v) to an orthonormal basis.
    let mut p = Vector4::zeros();
    let mut q = Vector4::zeros();
    let mut found = 0;
    for i in 0..4 {
        let mut cand = Vector4::zeros();
        cand[i] = 1.0;
        cand -= u * u.dot(&cand) + v * v.dot(&cand);
        if found == 1 {
            cand -= p * p.dot(&cand);
        }
        if cand.norm() > 0.3 {
            if found == 0 {
                p = cand.normalize();
                found = 1;
            } else {
                q = cand.normalize();
                found = 2;
                break;
            }
        }
    }
    if found < 2 {
        return k0;
    }

    let eval = |s: &[f64; 4]| -> f64 {
        let mut uu = u + p * s[0] + q * s[1];
        let mut vv = v + p * s[2] + q * s[3];
        uu = uu.normalize();
        vv -= uu * uu.dot(&vv);
        let n = vv.norm();
        if n < 1e-9 {
            return k0;
        }
        vv /= n;
        let k = rm.sectional(&uu, &vv);
        if maximize {
            -k
        } else {
            k
        }
    };

    let mut s = [0.0; 4];
    let h = 1e-4;
    let mut best = eval(&s);
    for _ in 0..8 {
        // FD gradient and Hessian of the 4-parameter objective.
        let f0 = eval(&s);
        let mut grad = [0.0; 4];
        let mut hess = Matrix4::zeros();
        for i in 0..4 {
            let mut sp = s;
            let mut sm = s;
            sp[i] += h;
            sm[i] -= h;
            let (fp, fm) = (eval(&sp), eval(&sm));
            grad[i] = (fp - fm) / (2.0 * h);
            hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        }
        for i in 0..4 {
            for j in (i + 1)..4 {
                let mut spp = s;
                spp[i] += h;
                spp[j] += h;
                let mut spm = s;
                spm[i] += h;
                spm[j] -= h;
                let mut smp = s;
                smp[i] -= h;
                smp[j] += h;
                let mut smm = s;
                smm[i] -= h;
                smm[j] -= h;
                let m = (eval(&spp) - eval(&spm) - eval(&smp) + eval(&smm)) / (4.0 * h * h);
                hess[(i, j)] = m;
                hess[(j, i)] = m;
            }
        }
        // Damped Newton step.
        let reg = Matrix4::identity() * (1e-9 + hess.norm() * 1e-9);
        let step = (hess + reg)
            .lu()
            .solve(&Vector4::new(grad[0], grad[1], grad[2], grad[3]))
            .unwrap_or_else(|| Vector4::new(grad[0], grad[1], grad[2], grad[3]));
        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..12 {
            let cand = [
                s[0] - alpha * step[0],
                s[1] - alpha * step[1],
                s[2] - alpha * step[2],
                s[3] - alpha * step[3],
            ];
            let fc = eval(&cand);
            if fc < best - 1e-15 {
                s = cand;
                best = fc;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if maximize {
        -best
    } else {
        best
    }
}
