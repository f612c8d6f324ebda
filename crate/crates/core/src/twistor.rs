//! Local twistor space of a metric chart: the fibre sphere of compatible
//! almost complex structures, the horizontal-vertical splitting induced by
//! the Levi-Civita connection on self-dual 2-forms, the structures `J+`
//! and `J-`, the natural closed 2-form, Nijenhuis tensors and the
//! comparison map between twistor spaces of nearby metrics.
//!
//! The fibre coordinate is a unit vector `theta` in the `sigma^+`
//! trivialisation coming from the Cholesky frame of the chart. Conventions
//! (fibre orientation, the sqrt(2) in the index raise) are pinned so that
//! the vertical block of the 2-form is the positive area form and the round
//! 4-sphere tames `J+`.

use crate::chart::MetricChart;
use crate::curvature::{self, sigma_plus, so3_plus_part, PointGeometry};
use crate::error::{EvalError, Result};
use crate::linalg::{self, tangent_basis};
use nalgebra::{Matrix3, Matrix4, SMatrix, Vector2, Vector3, Vector4};

/// A point of the twistor space: a base point plus a unit self-dual
/// direction in the `sigma^+` basis.
#[derive(Clone, Copy, Debug)]
pub struct TwistorPoint {
    pub x: [f64; 4],
    pub theta: Vector3<f64>,
}

impl TwistorPoint {
    pub fn new(x: [f64; 4], theta: Vector3<f64>) -> Result<Self> {
        if (theta.norm() - 1.0).abs() > 1e-9 {
            return Err(EvalError::Argument(format!(
                "fibre coordinate must be unit, |theta| = {}",
                theta.norm()
            )));
        }
        Ok(TwistorPoint {
            x,
            theta: theta.normalize(),
        })
    }

    /// Stereographic fibre chart covering this point.
    pub fn fibre_chart(&self) -> FibreChart {
        if self.theta.z >= 0.0 {
            FibreChart::North
        } else {
            FibreChart::South
        }
    }
}

/// Tangent vector to the twistor space at `(x, theta)`: chart components of
/// the base velocity plus the raw fibre velocity in the trivialisation.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZTangent {
    pub x_dot: Vector4<f64>,
    pub theta_dot: Vector3<f64>,
}

impl ZTangent {
    pub fn base(x_dot: Vector4<f64>) -> Self {
        ZTangent {
            x_dot,
            theta_dot: Vector3::zeros(),
        }
    }

    pub fn fibre(theta_dot: Vector3<f64>) -> Self {
        ZTangent {
            x_dot: Vector4::zeros(),
            theta_dot,
        }
    }
}

/// Stereographic charts of the fibre sphere. `North` projects from the
/// south pole (zeta = 0 at theta = e3), `South` from the north pole; the
/// transition `zeta -> 1/zeta` is holomorphic for the standard fibre
/// complex structure `w -> theta x w`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FibreChart {
    North,
    South,
}

impl FibreChart {
    pub fn theta(&self, z: Vector2<f64>) -> Vector3<f64> {
        let n = 1.0 + z.norm_squared();
        match self {
            FibreChart::North => Vector3::new(2.0 * z.x / n, 2.0 * z.y / n, 2.0 / n - 1.0),
            FibreChart::South => Vector3::new(2.0 * z.x / n, -2.0 * z.y / n, 1.0 - 2.0 / n),
        }
    }

    pub fn zeta(&self, theta: &Vector3<f64>) -> Vector2<f64> {
        match self {
            FibreChart::North => {
                let d = 1.0 + theta.z;
                Vector2::new(theta.x / d, theta.y / d)
            }
            FibreChart::South => {
                let d = 1.0 - theta.z;
                Vector2::new(theta.x / d, -theta.y / d)
            }
        }
    }

    /// Jacobian `d theta / d zeta` (3x2).
    pub fn d_theta(&self, z: Vector2<f64>) -> SMatrix<f64, 3, 2> {
        let n = 1.0 + z.norm_squared();
        let n2 = n * n;
        let (s2, s3) = match self {
            FibreChart::North => (1.0, -1.0),
            FibreChart::South => (-1.0, 1.0),
        };
        SMatrix::<f64, 3, 2>::from_row_slice(&[
            (2.0 * n - 4.0 * z.x * z.x) / n2,
            -4.0 * z.x * z.y / n2,
            s2 * (-4.0 * z.x * z.y) / n2,
            s2 * (2.0 * n - 4.0 * z.y * z.y) / n2,
            s3 * 4.0 * z.x / n2,
            s3 * 4.0 * z.y / n2,
        ])
    }
}

/// Geometry bundle for twistor computations above one base point.
pub struct TwistorContext {
    pub geo: PointGeometry,
    /// Axial vectors of the self-dual curvature `F(E_a, E_b)` over frame
    /// pairs; antisymmetric in `(a, b)`.
    kappa: [[Vector3<f64>; 4]; 4],
}

impl TwistorContext {
    pub fn new(chart: &MetricChart, x: &[f64; 4]) -> Result<Self> {
        let geo = curvature::geometry_at(chart, x)?;
        Ok(Self::from_geometry(geo))
    }

    pub fn from_geometry(geo: PointGeometry) -> Self {
        let sig = sigma_plus();
        let mut kappa = [[Vector3::zeros(); 4]; 4];
        for a in 0..4 {
            for b in (a + 1)..4 {
                let rho = geo.rm.so4_matrix(a, b);
                let k = linalg::axial(&so3_plus_part(&rho, &sig));
                kappa[a][b] = k;
                kappa[b][a] = -k;
            }
        }
        TwistorContext { geo, kappa }
    }

    /// so(3) value of the `Lambda^+` connection on a chart velocity.
    pub fn conn_so3(&self, x_dot: &Vector4<f64>) -> Matrix3<f64> {
        let mut a = Matrix3::zeros();
        for k in 0..4 {
            a += self.geo.lambda_plus[k] * x_dot[k];
        }
        a
    }

    /// Vertical component of a tangent vector at fibre coordinate `theta`.
    pub fn vertical_part(&self, theta: &Vector3<f64>, t: &ZTangent) -> Vector3<f64> {
        t.theta_dot + self.conn_so3(&t.x_dot) * theta
    }

    /// Horizontal lift of a chart velocity to `(x, theta)`.
    pub fn horizontal_lift(&self, theta: &Vector3<f64>, x_dot: Vector4<f64>) -> ZTangent {
        let theta_dot = -(self.conn_so3(&x_dot) * theta);
        ZTangent { x_dot, theta_dot }
    }

    /// Axial curvature vector on a pair of chart velocities.
    pub fn kappa_of(&self, u: &Vector4<f64>, v: &Vector4<f64>) -> Vector3<f64> {
        let uf = self.geo.frame.to_frame(u);
        let vf = self.geo.frame.to_frame(v);
        let mut k = Vector3::zeros();
        for a in 0..4 {
            for b in (a + 1)..4 {
                k += self.kappa[a][b] * (uf[a] * vf[b] - uf[b] * vf[a]);
            }
        }
        k
    }

    /// The natural closed 2-form at `(x, theta)` on two tangents: vertical
    /// area form minus the theta-component of the self-dual curvature.
    pub fn omega(&self, theta: &Vector3<f64>, u: &ZTangent, v: &ZTangent) -> f64 {
        let vu = self.vertical_part(theta, u);
        let vv = self.vertical_part(theta, v);
        vu.cross(&vv).dot(theta) - self.kappa_of(&u.x_dot, &v.x_dot).dot(theta)
    }

    /// Frame-component matrix of the almost complex structure `J_theta` on
    /// the base tangent space.
    pub fn j_theta_frame(&self, theta: &Vector3<f64>) -> Matrix4<f64> {
        let sig = sigma_plus();
        let mut m = Matrix4::zeros();
        for i in 0..3 {
            m += sig[i] * (std::f64::consts::SQRT_2 * theta[i]);
        }
        m.transpose()
    }

    /// Chart-component matrix of `J_theta`.
    pub fn j_theta_chart(&self, theta: &Vector3<f64>) -> Matrix4<f64> {
        self.geo.frame.frame.transpose() * self.j_theta_frame(theta) * self.geo.frame.coframe
    }

    /// Apply `J+` (`sign = +1`) or `J-` (`sign = -1`) at `(x, theta)`.
    pub fn acs_apply(&self, theta: &Vector3<f64>, sign: f64, t: &ZTangent) -> ZTangent {
        let vertical = self.vertical_part(theta, t);
        let jx = self.j_theta_chart(theta) * t.x_dot * sign;
        let j_vertical = theta.cross(&vertical);
        ZTangent {
            x_dot: jx,
            theta_dot: -(self.conn_so3(&jx) * theta) + j_vertical,
        }
    }
}

/// The almost complex structure on the base determined by a fibre point:
/// `g(J_theta u, v) = sqrt(2) theta(u, v)`; returned in chart components.
pub fn fibre_to_acs(ctx: &TwistorContext, theta: &Vector3<f64>) -> Result<Matrix4<f64>> {
    if (theta.norm() - 1.0).abs() > 1e-9 {
        return Err(EvalError::Argument(format!(
            "fibre coordinate must be unit, |theta| = {}",
            theta.norm()
        )));
    }
    Ok(ctx.j_theta_chart(theta))
}

/// Vertical/horizontal frame of the twistor tangent space at `p`.
#[derive(Clone, Debug)]
pub struct TwistorTangentFrame {
    /// Oriented orthonormal vertical pair: `f1 x f2 = theta`.
    pub vertical: [ZTangent; 2],
    /// Horizontal lifts of the orthonormal base frame.
    pub horizontal: [ZTangent; 4],
    /// `Lambda^+` connection along the frame directions.
    pub connection_form: [Matrix3<f64>; 4],
}

pub fn twistor_frame(ctx: &TwistorContext, p: &TwistorPoint) -> TwistorTangentFrame {
    let (f1, f2) = tangent_basis(&p.theta);
    let vertical = [ZTangent::fibre(f1), ZTangent::fibre(f2)];
    let horizontal = std::array::from_fn(|a| {
        let e_a = ctx.geo.frame.to_chart(&Vector4::ith(a, 1.0));
        ctx.horizontal_lift(&p.theta, e_a)
    });
    let connection_form = std::array::from_fn(|a| {
        let e_a = ctx.geo.frame.to_chart(&Vector4::ith(a, 1.0));
        ctx.conn_so3(&e_a)
    });
    TwistorTangentFrame {
        vertical,
        horizontal,
        connection_form,
    }
}

/// Matrix of `J+`/`J-` on the 6-dimensional chart `(x, zeta)` at `q`.
pub fn twistor_acs_matrix(
    ctx: &TwistorContext,
    fibre_chart: FibreChart,
    zeta: Vector2<f64>,
    sign: f64,
) -> SMatrix<f64, 6, 6> {
    let theta = fibre_chart.theta(zeta);
    let d = fibre_chart.d_theta(zeta);
    // Tangent solve: zeta components of a fibre velocity.
    let dtd = (d.transpose() * d)
        .try_inverse()
        .expect("stereographic Jacobian has full rank");
    let mut out = SMatrix::<f64, 6, 6>::zeros();
    for col in 0..6 {
        let t = if col < 4 {
            ZTangent::base(Vector4::ith(col, 1.0))
        } else {
            ZTangent::fibre(d * Vector2::ith(col - 4, 1.0))
        };
        let jt = ctx.acs_apply(&theta, sign, &t);
        let zeta_dot = dtd * (d.transpose() * jt.theta_dot);
        for r in 0..4 {
            out[(r, col)] = jt.x_dot[r];
        }
        out[(4, col)] = zeta_dot.x;
        out[(5, col)] = zeta_dot.y;
    }
    out
}

/// The natural closed 2-form evaluated at `p` on two tangents.
pub fn reznikov_form(ctx: &TwistorContext, p: &TwistorPoint, u: &ZTangent, v: &ZTangent) -> f64 {
    ctx.omega(&p.theta, u, v)
}

/// Integral of the 2-form over the fibre sphere at `x`; Gauss-Legendre in
/// the polar angle, trapezoid in the azimuth.
pub fn fibre_integral(chart: &MetricChart, x: &[f64; 4]) -> Result<f64> {
    let ctx = TwistorContext::new(chart, x)?;
    let (nodes, weights) = linalg::gauss_legendre(24);
    let n_psi = 48;
    let mut total = 0.0;
    for (t, w) in nodes.iter().zip(weights.iter()) {
        // t = cos(phi): d phi integration with the GL weight on [-1, 1]
        // after substitution picks up 1/sin(phi).
        let phi = t.acos();
        let (sin_phi, cos_phi) = phi.sin_cos();
        if sin_phi < 1e-12 {
            continue;
        }
        for k in 0..n_psi {
            let psi = 2.0 * std::f64::consts::PI * k as f64 / n_psi as f64;
            let (sin_psi, cos_psi) = psi.sin_cos();
            let theta = Vector3::new(sin_phi * cos_psi, sin_phi * sin_psi, cos_phi);
            let d_phi = Vector3::new(cos_phi * cos_psi, cos_phi * sin_psi, -sin_phi);
            let d_psi = Vector3::new(-sin_phi * sin_psi, sin_phi * cos_psi, 0.0);
            let val = ctx.omega(&theta, &ZTangent::fibre(d_phi), &ZTangent::fibre(d_psi));
            // d(cos phi) = -sin(phi) d phi; GL runs against the orientation.
            total += w / sin_phi * (2.0 * std::f64::consts::PI / n_psi as f64) * val;
        }
    }
    if !total.is_finite() {
        return Err(EvalError::Numerical("fibre quadrature produced a non-finite value".into()));
    }
    Ok(total)
}

fn omega_component(
    chart: &MetricChart,
    x: &[f64; 4],
    fc: FibreChart,
    zeta: Vector2<f64>,
    i: usize,
    j: usize,
) -> Result<f64> {
    let ctx = TwistorContext::new(chart, x)?;
    let theta = fc.theta(zeta);
    let d = fc.d_theta(zeta);
    let tangent = |k: usize| {
        if k < 4 {
            ZTangent::base(Vector4::ith(k, 1.0))
        } else {
            ZTangent::fibre(d * Vector2::ith(k - 4, 1.0))
        }
    };
    Ok(ctx.omega(&theta, &tangent(i), &tangent(j)))
}

/// Max component of the finite-difference exterior derivative of the 2-form
/// over the twenty coordinate 3-planes at `p`; a closedness check.
pub fn d_omega_check(chart: &MetricChart, p: &TwistorPoint, h: f64) -> Result<f64> {
    let fc = p.fibre_chart();
    let zeta0 = fc.zeta(&p.theta);
    let component = |q: &[f64; 6], i: usize, j: usize| -> Result<f64> {
        let x = [q[0], q[1], q[2], q[3]];
        omega_component(chart, &x, fc, Vector2::new(q[4], q[5]), i, j)
    };
    let q0 = [p.x[0], p.x[1], p.x[2], p.x[3], zeta0.x, zeta0.y];
    // d_l Omega_{mn} by central differences.
    let mut d_omega = [[[0.0; 6]; 6]; 6];
    for l in 0..6 {
        for m in 0..6 {
            for n in (m + 1)..6 {
                let mut qp = q0;
                qp[l] += h;
                let mut qm = q0;
                qm[l] -= h;
                let val = (component(&qp, m, n)? - component(&qm, m, n)?) / (2.0 * h);
                d_omega[l][m][n] = val;
                d_omega[l][n][m] = -val;
            }
        }
    }
    let mut worst: f64 = 0.0;
    for i in 0..6 {
        for j in (i + 1)..6 {
            for k in (j + 1)..6 {
                let v = d_omega[i][j][k] - d_omega[j][i][k] + d_omega[k][i][j];
                worst = worst.max(v.abs());
            }
        }
    }
    Ok(worst)
}

/// Finite-difference step for the Nijenhuis tensor.
pub const NIJENHUIS_STEP: f64 = 1e-4;

/// Max component of the Nijenhuis tensor of `J+` (`sign = +1`) or `J-` at
/// `p`, over the fifteen coordinate pairs of the 6-dimensional chart.
/// Brackets come from central differences of the structure matrix field
/// with one Richardson extrapolation level.
pub fn nijenhuis(chart: &MetricChart, p: &TwistorPoint, sign: f64) -> Result<f64> {
    let fc = p.fibre_chart();
    let zeta0 = fc.zeta(&p.theta);
    let q0 = [p.x[0], p.x[1], p.x[2], p.x[3], zeta0.x, zeta0.y];

    let field = |q: &[f64; 6]| -> Result<SMatrix<f64, 6, 6>> {
        let x = [q[0], q[1], q[2], q[3]];
        let ctx = TwistorContext::new(chart, &x)?;
        Ok(twistor_acs_matrix(&ctx, fc, Vector2::new(q[4], q[5]), sign))
    };

    let q_center = field(&q0)?;
    let h = NIJENHUIS_STEP;
    let mut dq = [SMatrix::<f64, 6, 6>::zeros(); 6];
    for (l, slot) in dq.iter_mut().enumerate() {
        let diff = |step: f64| -> Result<SMatrix<f64, 6, 6>> {
            let mut qp = q0;
            qp[l] += step;
            let mut qm = q0;
            qm[l] -= step;
            Ok((field(&qp)? - field(&qm)?) / (2.0 * step))
        };
        let coarse = diff(h)?;
        let fine = diff(h / 2.0)?;
        *slot = (fine * 4.0 - coarse) / 3.0;
    }

    let mut worst: f64 = 0.0;
    for i in 0..6 {
        for j in (i + 1)..6 {
            // N(e_i, e_j) = [J e_i, J e_j] + J d_j(J e_i) - J d_i(J e_j).
            let mut bracket = nalgebra::SVector::<f64, 6>::zeros();
            for l in 0..6 {
                bracket += dq[l].column(j) * q_center[(l, i)] - dq[l].column(i) * q_center[(l, j)];
            }
            let n_ij = bracket + q_center * (dq[j].column(i) - dq[i].column(j));
            worst = worst.max(n_ij.amax());
        }
    }
    Ok(worst)
}

/// Fibre comparison between the twistor spaces of two metrics on the same
/// chart coordinates: project the self-dual form of `theta` (for `src`)
/// against the anti-self-dual space of `dst` and rescale to the unit
/// sphere.
pub struct ComparisonMap<'a> {
    pub src: &'a MetricChart,
    pub dst: &'a MetricChart,
}

impl<'a> ComparisonMap<'a> {
    pub fn new(src: &'a MetricChart, dst: &'a MetricChart) -> Self {
        ComparisonMap { src, dst }
    }

    /// Coordinate matrix of the 2-form `sqrt(2) sum theta_i sigma_i^+` of
    /// the source metric at `x`.
    fn theta_form_coord(src_geo: &PointGeometry, theta: &Vector3<f64>) -> Matrix4<f64> {
        let sig = sigma_plus();
        let mut w = Matrix4::zeros();
        for i in 0..3 {
            w += sig[i] * (std::f64::consts::SQRT_2 * theta[i]);
        }
        let u = &src_geo.frame.coframe;
        u.transpose() * w * u
    }

    /// Map a fibre coordinate; fails when the projection degenerates (the
    /// metrics are too far apart).
    pub fn map_theta(&self, x: &[f64; 4], theta: &Vector3<f64>) -> Result<Vector3<f64>> {
        let src_geo = curvature::geometry_at(self.src, x)?;
        let dst_geo = curvature::geometry_at(self.dst, x)?;
        self.map_theta_with(&src_geo, &dst_geo, theta)
    }

    fn map_theta_with(
        &self,
        src_geo: &PointGeometry,
        dst_geo: &PointGeometry,
        theta: &Vector3<f64>,
    ) -> Result<Vector3<f64>> {
        let w_coord = Self::theta_form_coord(src_geo, theta);
        let f = &dst_geo.frame.frame;
        let w_frame = f * w_coord * f.transpose();
        let sig = sigma_plus();
        let raw = Vector3::from_fn(|i, _| 0.5 * w_frame.component_mul(&sig[i]).sum());
        let n = raw.norm();
        if n < 0.2 {
            return Err(EvalError::Numerical(
                "comparison map degenerate: metrics too far apart".into(),
            ));
        }
        Ok(raw / n)
    }

    pub fn map_point(&self, p: &TwistorPoint) -> Result<TwistorPoint> {
        Ok(TwistorPoint {
            x: p.x,
            theta: self.map_theta(&p.x, &p.theta)?,
        })
    }

    /// Differential of the comparison map on a tangent at `p`, by central
    /// differences. The base component is untouched; the fibre component is
    /// transported to the image fibre point.
    pub fn push_tangent(&self, p: &TwistorPoint, t: &ZTangent) -> Result<ZTangent> {
        let h = 1e-6;
        let scale = t.x_dot.norm() + t.theta_dot.norm();
        if scale == 0.0 {
            return Ok(*t);
        }
        let step = h / scale;
        let eval = |s: f64| -> Result<Vector3<f64>> {
            let x = std::array::from_fn(|i| p.x[i] + s * t.x_dot[i]);
            // Renormalised so the path stays on the sphere.
            let theta = (p.theta + t.theta_dot * s).normalize();
            self.map_theta(&x, &theta)
        };
        let plus = eval(step)?;
        let minus = eval(-step)?;
        Ok(ZTangent {
            x_dot: t.x_dot,
            theta_dot: (plus - minus) / (2.0 * step),
        })
    }

    /// Differential as a 6x6 block matrix on `(x_dot, vertical pair at
    /// theta)` against `(x_dot, vertical pair at theta')`, plus the image
    /// point. Block structure: identity on the base, `K` the mixed block,
    /// `T` the fibre block.
    pub fn differential(&self, p: &TwistorPoint) -> Result<ComparisonDifferential> {
        let image = self.map_point(p)?;
        let (b1, b2) = tangent_basis(&p.theta);
        let (c1, c2) = tangent_basis(&image.theta);
        let mut k = nalgebra::SMatrix::<f64, 2, 4>::zeros();
        let mut t_blk = nalgebra::SMatrix::<f64, 2, 2>::zeros();
        for col in 0..4 {
            let pushed = self.push_tangent(p, &ZTangent::base(Vector4::ith(col, 1.0)))?;
            k[(0, col)] = pushed.theta_dot.dot(&c1);
            k[(1, col)] = pushed.theta_dot.dot(&c2);
        }
        for (col, dir) in [b1, b2].into_iter().enumerate() {
            let pushed = self.push_tangent(p, &ZTangent::fibre(dir))?;
            t_blk[(0, col)] = pushed.theta_dot.dot(&c1);
            t_blk[(1, col)] = pushed.theta_dot.dot(&c2);
        }
        Ok(ComparisonDifferential {
            image,
            src_basis: (b1, b2),
            dst_basis: (c1, c2),
            mixed: k,
            fibre: t_blk,
        })
    }
}

/// Differential data of the comparison map at one twistor point.
pub struct ComparisonDifferential {
    pub image: TwistorPoint,
    pub src_basis: (Vector3<f64>, Vector3<f64>),
    pub dst_basis: (Vector3<f64>, Vector3<f64>),
    /// Fibre response to base motion.
    pub mixed: nalgebra::SMatrix<f64, 2, 4>,
    /// Fibre-to-fibre block.
    pub fibre: nalgebra::SMatrix<f64, 2, 2>,
}

impl ComparisonDifferential {
    /// Push a tangent through the differential.
    pub fn push(&self, t: &ZTangent) -> ZTangent {
        let (b1, b2) = self.src_basis;
        let (c1, c2) = self.dst_basis;
        let v = Vector2::new(t.theta_dot.dot(&b1), t.theta_dot.dot(&b2));
        let w = self.mixed * t.x_dot + self.fibre * v;
        ZTangent {
            x_dot: t.x_dot,
            theta_dot: c1 * w.x + c2 * w.y,
        }
    }

    /// Pull a tangent at the image back through the inverse differential.
    pub fn pull(&self, t: &ZTangent) -> Result<ZTangent> {
        let (b1, b2) = self.src_basis;
        let (c1, c2) = self.dst_basis;
        let w = Vector2::new(t.theta_dot.dot(&c1), t.theta_dot.dot(&c2));
        let fibre_inv = self
            .fibre
            .try_inverse()
            .ok_or_else(|| EvalError::Numerical("comparison differential degenerate".into()))?;
        let v = fibre_inv * (w - self.mixed * t.x_dot);
        Ok(ZTangent {
            x_dot: t.x_dot,
            theta_dot: b1 * v.x + b2 * v.y,
        })
    }
}
