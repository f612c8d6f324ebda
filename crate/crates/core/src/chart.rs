//! Oriented metric charts: the closed-form catalog, expression-defined
//! metrics and perturbation families.
//!
//! Every chart evaluates its ten packed components `g_ij` over any
//! [`Scalar`], so the same formulas feed both the jet pipeline and the
//! plain-`f64` path used by the finite-difference oracle.

use crate::error::{EvalError, Result};
use crate::expr::{ExprAst, Scalar};
use crate::jet::{sym_index, Jet2, NSYM};
use rand::Rng;
use std::sync::Arc;

/// Chart orientation relative to the coordinate orientation
/// `dx1 ^ dx2 ^ dx3 ^ dx4`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    Standard,
    Reversed,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Standard => 1.0,
            Orientation::Reversed => -1.0,
        }
    }
}

/// Open region of chart coordinates on which a metric is declared valid.
/// Radii already include an interior safety margin so finite-difference
/// stencils of the calling code stay inside.
#[derive(Clone, Debug)]
pub enum Domain {
    /// `|x_i| < half` for every coordinate.
    Box { half: f64 },
    /// Euclidean ball `|x| < radius`.
    Ball { radius: f64 },
    /// Spherical shell `inner < |x| < outer`.
    Shell { inner: f64, outer: f64 },
    /// Polydisc in the two complex coordinates: `|z1| < r1`, `|z2| < r2`.
    Polydisc { r1: f64, r2: f64 },
}

impl Domain {
    pub fn contains(&self, x: &[f64; 4]) -> bool {
        let n2 = x.iter().map(|v| v * v).sum::<f64>();
        match self {
            Domain::Box { half } => x.iter().all(|v| v.abs() < *half),
            Domain::Ball { radius } => n2 < radius * radius,
            Domain::Shell { inner, outer } => n2 > inner * inner && n2 < outer * outer,
            Domain::Polydisc { r1, r2 } => {
                let a = x[0] * x[0] + x[1] * x[1];
                let b = x[2] * x[2] + x[3] * x[3];
                a < r1 * r1 && b < r2 * r2
            }
        }
    }

    /// Uniform-ish interior sample, kept a little away from the boundary.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> [f64; 4] {
        let shrink = 0.85;
        loop {
            let x: [f64; 4] = match self {
                Domain::Box { half } => {
                    std::array::from_fn(|_| rng.random_range(-half * shrink..half * shrink))
                }
                Domain::Ball { radius } => {
                    std::array::from_fn(|_| rng.random_range(-radius * shrink..radius * shrink))
                }
                Domain::Shell { outer, .. } => {
                    std::array::from_fn(|_| rng.random_range(-outer * shrink..outer * shrink))
                }
                Domain::Polydisc { r1, r2 } => [
                    rng.random_range(-r1 * shrink..r1 * shrink),
                    rng.random_range(-r1 * shrink..r1 * shrink),
                    rng.random_range(-r2 * shrink..r2 * shrink),
                    rng.random_range(-r2 * shrink..r2 * shrink),
                ],
            };
            let mut y = x;
            if let Domain::Shell { inner, outer } = self {
                // Rescale onto the shell instead of rejecting forever.
                let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n < 1e-6 {
                    continue;
                }
                let r = inner * 1.05 + (outer * shrink - inner * 1.05) * rng.random_range(0.0..1.0);
                y = std::array::from_fn(|i| x[i] / n * r);
            }
            if self.contains(&y) {
                return y;
            }
        }
    }
}

/// Complex scalar over any evaluation type.
#[derive(Clone, Copy)]
struct Cx<S: Scalar> {
    re: S,
    im: S,
}

impl<S: Scalar> Cx<S> {
    fn new(re: S, im: S) -> Self {
        Cx { re, im }
    }
    fn conj(self) -> Self {
        Cx::new(self.re, self.im.neg())
    }
    fn mul(self, o: Self) -> Self {
        Cx::new(
            self.re.mul(o.re).sub(self.im.mul(o.im)),
            self.re.mul(o.im).add(self.im.mul(o.re)),
        )
    }
    fn scale(self, s: S) -> Self {
        Cx::new(self.re.mul(s), self.im.mul(s))
    }
    fn add(self, o: Self) -> Self {
        Cx::new(self.re.add(o.re), self.im.add(o.im))
    }
    fn norm2(self) -> S {
        self.re.mul(self.re).add(self.im.mul(self.im))
    }
}

/// Names of the built-in charts, in catalog order.
pub const CATALOG_NAMES: [&str; 8] = [
    "flat",
    "round-s4",
    "hyperbolic-h4",
    "fubini-study-cp2",
    "complex-hyperbolic-ch2",
    "s2xs2",
    "eguchi-hanson",
    "eguchi-hanson-bolt",
];

#[derive(Clone, Debug)]
enum ChartKind {
    Flat,
    RoundS4,
    HyperbolicH4,
    FubiniStudyCp2,
    ComplexHyperbolicCh2,
    S2xS2,
    EguchiHanson,
    EguchiHansonBolt,
    /// Ten packed component expressions in `x1..x4`.
    Expression(Arc<[ExprAst; NSYM]>),
    Perturbed {
        base: Arc<MetricChart>,
        direction: Arc<[ExprAst; NSYM]>,
        amplitude: f64,
    },
}

/// An oriented metric chart: a named domain plus a component evaluator.
#[derive(Clone, Debug)]
pub struct MetricChart {
    name: String,
    orientation: Orientation,
    domain: Domain,
    kind: ChartKind,
}

/// A metric deformation `g + t * h` with an expression-defined symmetric
/// direction `h`.
#[derive(Clone, Debug)]
pub struct PerturbationSpec {
    pub base: MetricChart,
    /// Packed symmetric components of the direction tensor.
    pub direction: [ExprAst; NSYM],
    pub amplitude: f64,
}

/// Look up a built-in chart by name.
pub fn catalog(name: &str) -> Result<MetricChart> {
    let (kind, orientation, domain) = match name {
        "flat" => (ChartKind::Flat, Orientation::Standard, Domain::Box { half: 1.5 }),
        "round-s4" => (ChartKind::RoundS4, Orientation::Standard, Domain::Ball { radius: 2.0 }),
        "hyperbolic-h4" => (
            ChartKind::HyperbolicH4,
            Orientation::Standard,
            Domain::Ball { radius: 0.9 },
        ),
        "fubini-study-cp2" => (
            ChartKind::FubiniStudyCp2,
            Orientation::Standard,
            Domain::Ball { radius: 1.5 },
        ),
        "complex-hyperbolic-ch2" => (
            ChartKind::ComplexHyperbolicCh2,
            Orientation::Reversed,
            Domain::Ball { radius: 0.85 },
        ),
        "s2xs2" => (ChartKind::S2xS2, Orientation::Standard, Domain::Box { half: 1.5 }),
        "eguchi-hanson" => (
            ChartKind::EguchiHanson,
            Orientation::Standard,
            Domain::Shell { inner: 1.05, outer: 5.0 },
        ),
        "eguchi-hanson-bolt" => (
            ChartKind::EguchiHansonBolt,
            Orientation::Standard,
            Domain::Polydisc { r1: 1.7, r2: 1.4 },
        ),
        other => return Err(EvalError::UnknownMetric(other.into())),
    };
    Ok(MetricChart {
        name: name.into(),
        orientation,
        domain,
        kind,
    })
}

impl MetricChart {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Build a chart from ten packed component expressions.
    pub fn from_expressions(
        name: &str,
        components: [ExprAst; NSYM],
        orientation: Orientation,
        domain: Domain,
    ) -> Self {
        MetricChart {
            name: name.into(),
            orientation,
            domain,
            kind: ChartKind::Expression(Arc::new(components)),
        }
    }

    /// Flip the declared orientation, keeping everything else.
    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.orientation = orientation;
        self
    }

    /// Evaluate the ten packed metric components at `x` over any scalar
    /// type. No domain or positivity checks here; see [`MetricChart::metric_jet`].
    pub fn eval_components<S: Scalar>(&self, x: &[S; 4]) -> Result<[S; NSYM]> {
        match &self.kind {
            ChartKind::Flat => Ok(identity_components()),
            ChartKind::RoundS4 => conformal_components(x, ConformalSign::Sphere),
            ChartKind::HyperbolicH4 => conformal_components(x, ConformalSign::Hyperbolic),
            ChartKind::FubiniStudyCp2 => fubini_study_components(x),
            ChartKind::ComplexHyperbolicCh2 => complex_hyperbolic_components(x),
            ChartKind::S2xS2 => s2xs2_components(x),
            ChartKind::EguchiHanson => eguchi_hanson_components(x),
            ChartKind::EguchiHansonBolt => eguchi_hanson_bolt_components(x),
            ChartKind::Expression(table) => {
                let mut out = [S::from_f64(0.0); NSYM];
                for (k, e) in table.iter().enumerate() {
                    out[k] = e.eval(x)?;
                }
                Ok(out)
            }
            ChartKind::Perturbed {
                base,
                direction,
                amplitude,
            } => {
                let g = base.eval_components(x)?;
                if *amplitude == 0.0 {
                    // Bit-identical to the base chart at t = 0.
                    return Ok(g);
                }
                let mut out = g;
                let t = S::from_f64(*amplitude);
                for k in 0..NSYM {
                    out[k] = out[k].add(t.mul(direction[k].eval(x)?));
                }
                Ok(out)
            }
        }
    }

    /// Ten packed component jets at an interior point, with domain and
    /// positive-definiteness checks.
    pub fn metric_jet(&self, x: &[f64; 4]) -> Result<[Jet2; NSYM]> {
        if !self.domain.contains(x) {
            return Err(EvalError::OutsideChart {
                chart: self.name.clone(),
                point: *x,
            });
        }
        let jets = self.eval_components(&Jet2::vars(x))?;
        let values: [f64; NSYM] = std::array::from_fn(|k| jets[k].val);
        if crate::linalg::cholesky4(&values).is_none() {
            return Err(EvalError::Validity {
                point: *x,
                detail: "Cholesky factorisation failed".into(),
            });
        }
        Ok(jets)
    }

    /// Plain `f64` component evaluation (used by the FD oracle path).
    pub fn metric_values(&self, x: &[f64; 4]) -> Result<[f64; NSYM]> {
        if !self.domain.contains(x) {
            return Err(EvalError::OutsideChart {
                chart: self.name.clone(),
                point: *x,
            });
        }
        self.eval_components(x)
    }
}

/// Apply a perturbation, checking positive definiteness on a seeded sample
/// of the base domain.
pub fn perturb(spec: &PerturbationSpec) -> Result<MetricChart> {
    let chart = MetricChart {
        name: format!("{}+t*h@{:e}", spec.base.name, spec.amplitude),
        orientation: spec.base.orientation,
        domain: spec.base.domain.clone(),
        kind: ChartKind::Perturbed {
            base: Arc::new(spec.base.clone()),
            direction: Arc::new(spec.direction.clone()),
            amplitude: spec.amplitude,
        },
    };
    if spec.amplitude != 0.0 {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x7157_0b0b);
        for _ in 0..64 {
            let x = chart.domain.sample(&mut rng);
            let g = chart.eval_components(&x)?;
            if crate::linalg::cholesky4(&g).is_none() {
                return Err(EvalError::Validity {
                    point: x,
                    detail: format!("g + t*h loses positive definiteness at t = {}", spec.amplitude),
                });
            }
        }
    }
    Ok(chart)
}

fn identity_components<S: Scalar>() -> [S; NSYM] {
    let mut out = [S::from_f64(0.0); NSYM];
    for i in 0..4 {
        out[sym_index(i, i)] = S::from_f64(1.0);
    }
    out
}

enum ConformalSign {
    Sphere,
    Hyperbolic,
}

/// `g = (2 / (1 ± |x|^2))^2 * delta`: stereographic round sphere or the
/// Poincare ball.
fn conformal_components<S: Scalar>(x: &[S; 4], sign: ConformalSign) -> Result<[S; NSYM]> {
    let n2 = x[0]
        .mul(x[0])
        .add(x[1].mul(x[1]))
        .add(x[2].mul(x[2]))
        .add(x[3].mul(x[3]));
    let denom = match sign {
        ConformalSign::Sphere => S::from_f64(1.0).add(n2),
        ConformalSign::Hyperbolic => S::from_f64(1.0).sub(n2),
    };
    let c = S::from_f64(2.0).mul(denom.recip()?);
    let c2 = c.mul(c);
    let mut out = [S::from_f64(0.0); NSYM];
    for i in 0..4 {
        out[sym_index(i, i)] = c2;
    }
    Ok(out)
}

fn s2xs2_components<S: Scalar>(x: &[S; 4]) -> Result<[S; NSYM]> {
    let one = S::from_f64(1.0);
    let f1 = S::from_f64(2.0).mul(one.add(x[0].mul(x[0])).add(x[1].mul(x[1])).recip()?);
    let f2 = S::from_f64(2.0).mul(one.add(x[2].mul(x[2])).add(x[3].mul(x[3])).recip()?);
    let mut out = [S::from_f64(0.0); NSYM];
    out[sym_index(0, 0)] = f1.mul(f1);
    out[sym_index(1, 1)] = f1.mul(f1);
    out[sym_index(2, 2)] = f2.mul(f2);
    out[sym_index(3, 3)] = f2.mul(f2);
    Ok(out)
}

/// Real metric of a Kaehler potential from the Hermitian matrix
/// `h_ab = d^2 K / dz_a dz̄_b` in coordinates `z1 = x1 + i x2`,
/// `z2 = x3 + i x4`.
fn metric_from_hermitian<S: Scalar>(h00: S, h11: S, h01: Cx<S>) -> [S; NSYM] {
    let zero = S::from_f64(0.0);
    let mut out = [zero; NSYM];
    out[sym_index(0, 0)] = h00;
    out[sym_index(1, 1)] = h00;
    out[sym_index(2, 2)] = h11;
    out[sym_index(3, 3)] = h11;
    out[sym_index(0, 1)] = zero;
    out[sym_index(2, 3)] = zero;
    out[sym_index(0, 2)] = h01.re;
    out[sym_index(1, 3)] = h01.re;
    out[sym_index(0, 3)] = h01.im;
    out[sym_index(1, 2)] = h01.im.neg();
    out
}

fn complex_coords<S: Scalar>(x: &[S; 4]) -> (Cx<S>, Cx<S>) {
    (Cx::new(x[0], x[1]), Cx::new(x[2], x[3]))
}

/// Affine-chart Fubini-Study metric from the potential `log(1 + |z|^2)`.
fn fubini_study_components<S: Scalar>(x: &[S; 4]) -> Result<[S; NSYM]> {
    let (z1, z2) = complex_coords(x);
    let u = z1.norm2().add(z2.norm2());
    let d = S::from_f64(1.0).add(u).recip()?;
    let d2 = d.mul(d).neg();
    // h_ab = delta_ab * d - conj(z_a) z_b * d^2
    let h00 = d.add(z1.norm2().mul(d2));
    let h11 = d.add(z2.norm2().mul(d2));
    let h01 = z1.conj().mul(z2).scale(d2);
    Ok(metric_from_hermitian(h00, h11, h01))
}

/// Bergman-ball metric from the potential `-log(1 - |z|^2)`.
fn complex_hyperbolic_components<S: Scalar>(x: &[S; 4]) -> Result<[S; NSYM]> {
    let (z1, z2) = complex_coords(x);
    let u = z1.norm2().add(z2.norm2());
    let d = S::from_f64(1.0).sub(u).recip()?;
    let d2 = d.mul(d);
    let h00 = d.add(z1.norm2().mul(d2));
    let h11 = d.add(z2.norm2().mul(d2));
    let h01 = z1.conj().mul(z2).scale(d2);
    Ok(metric_from_hermitian(h00, h11, h01))
}

/// Double-cover Eguchi-Hanson chart on C^2 minus the origin, ALE parameter
/// a = 1. The Calabi potential f(u) enters only through
/// `f'(u) = sqrt(1 + u^2) / u` and `f''(u) = -1 / (sqrt(1 + u^2) u^2)`.
fn eguchi_hanson_components<S: Scalar>(x: &[S; 4]) -> Result<[S; NSYM]> {
    let (z1, z2) = complex_coords(x);
    let u = z1.norm2().add(z2.norm2());
    let s = S::from_f64(1.0).add(u.mul(u)).sqrt()?;
    let fp = s.mul(u.recip()?);
    let fpp = s.mul(u).mul(u).recip()?.neg();
    let h00 = fp.add(fpp.mul(z1.norm2()));
    let h11 = fp.add(fpp.mul(z2.norm2()));
    let h01 = z1.conj().mul(z2).scale(fpp);
    Ok(metric_from_hermitian(h00, h11, h01))
}

/// Bolt chart: total space of the degree -2 line bundle over the projective
/// line, coordinates `z` (base) and `w` (fibre), transition
/// `(z, w) -> (1/z, z^2 w)`. Potential `G(u) + log(1 + |z|^2)` with
/// `u = |w|^2 (1 + |z|^2)^2`; `G'(u) = 1 / (2 (1 + sqrt(1+u)))`.
fn eguchi_hanson_bolt_components<S: Scalar>(x: &[S; 4]) -> Result<[S; NSYM]> {
    let one = S::from_f64(1.0);
    let (z, w) = complex_coords(x);
    let p = one.add(z.norm2()); // 1 + |z|^2
    let u = w.norm2().mul(p).mul(p);
    let s = one.add(u).sqrt()?;
    let one_s = one.add(s);
    let gp = S::from_f64(0.5).mul(one_s.recip()?);
    let gpp = S::from_f64(0.25).mul(s.mul(one_s).mul(one_s).recip()?).neg();

    // First and mixed second derivatives of u in (z, w).
    let u_z = z.conj().scale(S::from_f64(2.0).mul(w.norm2()).mul(p));
    let u_w = w.conj().scale(p.mul(p));
    let u_zz = S::from_f64(2.0)
        .mul(w.norm2())
        .mul(one.add(S::from_f64(2.0).mul(z.norm2())));
    let u_zw = z.conj().mul(w).scale(S::from_f64(2.0).mul(p));
    let u_ww = p.mul(p);

    let fs = p.mul(p).recip()?;
    let h00 = gp.mul(u_zz).add(gpp.mul(u_z.norm2())).add(fs);
    let h11 = gp.mul(u_ww).add(gpp.mul(u_w.norm2()));
    let h01 = u_zw.scale(gp).add(u_z.mul(u_w.conj()).scale(gpp));
    Ok(metric_from_hermitian(h00, h11, h01))
}

/// Bolt chart transition map `(z, w) -> (1/z, z^2 w)` in real coordinates.
pub fn bolt_transition(x: &[f64; 4]) -> [f64; 4] {
    let z = (x[0], x[1]);
    let w = (x[2], x[3]);
    let n2 = z.0 * z.0 + z.1 * z.1;
    let zi = (z.0 / n2, -z.1 / n2);
    let z2 = (z.0 * z.0 - z.1 * z.1, 2.0 * z.0 * z.1);
    let wz2 = (z2.0 * w.0 - z2.1 * w.1, z2.0 * w.1 + z2.1 * w.0);
    [zi.0, zi.1, wz2.0, wz2.1]
}
