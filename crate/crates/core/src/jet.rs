//! Second-order forward-mode jets over four chart variables.
//!
//! A [`Jet2`] carries a value together with its gradient and (packed
//! symmetric) Hessian with respect to the four chart coordinates. All metric
//! components and derived curvature quantities are evaluated through this
//! type, so first and second derivatives of the metric are exact up to
//! roundoff. A central-difference oracle ([`fd_oracle`]) provides an
//! independent cross-check.

use crate::error::{EvalError, Result};
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Number of chart variables.
pub const NVARS: usize = 4;

/// Packed length of a symmetric 4x4 matrix (upper triangle, row major).
pub const NSYM: usize = 10;

/// Packed index of the symmetric entry `(i, j)`; order of `i, j` is free.
#[inline]
pub fn sym_index(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * (7 - i) / 2 + j
}

/// Value, gradient and Hessian of a scalar at a chart point.
///
/// The Hessian is stored packed (10 entries), so symmetry is structural
/// rather than a property the arithmetic has to maintain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2 {
    pub val: f64,
    pub grad: [f64; NVARS],
    pub hess: [f64; NSYM],
}

impl Jet2 {
    /// Lift a constant: zero gradient and Hessian.
    #[inline]
    pub fn constant(x: f64) -> Self {
        Jet2 {
            val: x,
            grad: [0.0; NVARS],
            hess: [0.0; NSYM],
        }
    }

    /// The `index`-th coordinate jet at value `x`: unit gradient entry,
    /// zero Hessian.
    pub fn var(index: usize, x: f64) -> Result<Self> {
        if index >= NVARS {
            return Err(EvalError::Argument(format!(
                "coordinate index {index} out of range 0..{NVARS}"
            )));
        }
        let mut grad = [0.0; NVARS];
        grad[index] = 1.0;
        Ok(Jet2 {
            val: x,
            grad,
            hess: [0.0; NSYM],
        })
    }

    /// Seed all four coordinates of a point at once.
    pub fn vars(x: &[f64; NVARS]) -> [Self; NVARS] {
        std::array::from_fn(|i| Jet2::var(i, x[i]).expect("index in range"))
    }

    #[inline]
    pub fn hess_at(&self, i: usize, j: usize) -> f64 {
        self.hess[sym_index(i, j)]
    }

    /// Hessian unpacked to a full symmetric matrix.
    pub fn hess_matrix(&self) -> [[f64; NVARS]; NVARS] {
        std::array::from_fn(|i| std::array::from_fn(|j| self.hess_at(i, j)))
    }

    /// Chain rule through a scalar function with derivatives `f`, `f'`, `f''`
    /// evaluated at `self.val`.
    #[inline]
    fn chain(&self, f: f64, df: f64, ddf: f64) -> Jet2 {
        let mut out = Jet2::constant(f);
        for i in 0..NVARS {
            out.grad[i] = df * self.grad[i];
        }
        let mut k = 0;
        for i in 0..NVARS {
            for j in i..NVARS {
                out.hess[k] = df * self.hess[k] + ddf * self.grad[i] * self.grad[j];
                k += 1;
            }
        }
        out
    }

    pub fn sin(self) -> Jet2 {
        let (s, c) = self.val.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Jet2 {
        let (s, c) = self.val.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn exp(self) -> Jet2 {
        let e = self.val.exp();
        self.chain(e, e, e)
    }

    pub fn tanh(self) -> Jet2 {
        let t = self.val.tanh();
        let sech2 = 1.0 - t * t;
        self.chain(t, sech2, -2.0 * t * sech2)
    }

    pub fn ln(self) -> Result<Jet2> {
        if self.val <= 0.0 {
            return Err(EvalError::Domain(format!("log of non-positive {}", self.val)));
        }
        let inv = 1.0 / self.val;
        Ok(self.chain(self.val.ln(), inv, -inv * inv))
    }

    pub fn sqrt(self) -> Result<Jet2> {
        if self.val <= 0.0 {
            return Err(EvalError::Domain(format!("sqrt of non-positive {}", self.val)));
        }
        let r = self.val.sqrt();
        Ok(self.chain(r, 0.5 / r, -0.25 / (r * self.val)))
    }

    pub fn recip(self) -> Result<Jet2> {
        if self.val == 0.0 {
            return Err(EvalError::Domain("reciprocal of zero".into()));
        }
        let inv = 1.0 / self.val;
        Ok(self.chain(inv, -inv * inv, 2.0 * inv * inv * inv))
    }

    /// Real power `self^p`. Requires a positive base unless `p` is a small
    /// integer, in which case [`Jet2::powi`] semantics apply.
    pub fn powf(self, p: f64) -> Result<Jet2> {
        if p == p.trunc() && p.abs() <= 64.0 {
            return self.powi(p as i32);
        }
        if self.val <= 0.0 {
            return Err(EvalError::Domain(format!(
                "power {p} of non-positive base {}",
                self.val
            )));
        }
        let f = self.val.powf(p);
        Ok(self.chain(f, p * f / self.val, p * (p - 1.0) * f / (self.val * self.val)))
    }

    /// Integer power, valid for any base (negative exponents need a
    /// non-zero base).
    pub fn powi(self, p: i32) -> Result<Jet2> {
        match p {
            0 => Ok(Jet2::constant(1.0)),
            1 => Ok(self),
            _ if p > 1 => {
                let f = self.val.powi(p);
                let df = f64::from(p) * self.val.powi(p - 1);
                let ddf = f64::from(p) * f64::from(p - 1) * self.val.powi(p - 2);
                Ok(self.chain(f, df, ddf))
            }
            _ => {
                if self.val == 0.0 {
                    return Err(EvalError::Domain("negative power of zero".into()));
                }
                let f = self.val.powi(p);
                let df = f64::from(p) * self.val.powi(p - 1);
                let ddf = f64::from(p) * f64::from(p - 1) * self.val.powi(p - 2);
                Ok(self.chain(f, df, ddf))
            }
        }
    }

    /// Smooth cutoff: `exp(-1/(1-q^2))` on `|q| < 1`, identically zero
    /// outside. Infinitely differentiable in `q`.
    pub fn bump(self) -> Jet2 {
        if self.val.abs() >= 1.0 {
            return Jet2::constant(0.0);
        }
        let q2 = self * self;
        let arg = (Jet2::constant(1.0) - q2)
            .recip()
            .expect("1 - q^2 > 0 inside the support");
        (-arg).exp()
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    #[inline]
    fn add(self, rhs: Jet2) -> Jet2 {
        let mut out = self;
        out.val += rhs.val;
        for i in 0..NVARS {
            out.grad[i] += rhs.grad[i];
        }
        for k in 0..NSYM {
            out.hess[k] += rhs.hess[k];
        }
        out
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    #[inline]
    fn sub(self, rhs: Jet2) -> Jet2 {
        let mut out = self;
        out.val -= rhs.val;
        for i in 0..NVARS {
            out.grad[i] -= rhs.grad[i];
        }
        for k in 0..NSYM {
            out.hess[k] -= rhs.hess[k];
        }
        out
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    #[inline]
    fn neg(self) -> Jet2 {
        let mut out = self;
        out.val = -out.val;
        for i in 0..NVARS {
            out.grad[i] = -out.grad[i];
        }
        for k in 0..NSYM {
            out.hess[k] = -out.hess[k];
        }
        out
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    /// Leibniz rule to second order.
    #[inline]
    fn mul(self, rhs: Jet2) -> Jet2 {
        let mut out = Jet2::constant(self.val * rhs.val);
        for i in 0..NVARS {
            out.grad[i] = self.val * rhs.grad[i] + rhs.val * self.grad[i];
        }
        let mut k = 0;
        for i in 0..NVARS {
            for j in i..NVARS {
                out.hess[k] = self.val * rhs.hess[k]
                    + rhs.val * self.hess[k]
                    + self.grad[i] * rhs.grad[j]
                    + self.grad[j] * rhs.grad[i];
                k += 1;
            }
        }
        out
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    #[inline]
    fn mul(self, rhs: f64) -> Jet2 {
        let mut out = self;
        out.val *= rhs;
        for i in 0..NVARS {
            out.grad[i] *= rhs;
        }
        for k in 0..NSYM {
            out.hess[k] *= rhs;
        }
        out
    }
}

impl Mul<Jet2> for f64 {
    type Output = Jet2;
    #[inline]
    fn mul(self, rhs: Jet2) -> Jet2 {
        rhs * self
    }
}

impl Add<f64> for Jet2 {
    type Output = Jet2;
    #[inline]
    fn add(self, rhs: f64) -> Jet2 {
        let mut out = self;
        out.val += rhs;
        out
    }
}

impl Sub<f64> for Jet2 {
    type Output = Jet2;
    #[inline]
    fn sub(self, rhs: f64) -> Jet2 {
        let mut out = self;
        out.val -= rhs;
        out
    }
}

impl Div for Jet2 {
    type Output = Jet2;
    #[inline]
    fn div(self, rhs: Jet2) -> Jet2 {
        self * rhs.recip().expect("division by a jet with zero value")
    }
}

impl Div<f64> for Jet2 {
    type Output = Jet2;
    #[inline]
    fn div(self, rhs: f64) -> Jet2 {
        self * (1.0 / rhs)
    }
}

/// Central-difference step for gradients.
pub const FD_STEP_GRAD: f64 = 1e-4;
/// Central-difference step for Hessians.
pub const FD_STEP_HESS: f64 = 1e-3;

fn shift(x: &[f64; NVARS], i: usize, h: f64) -> [f64; NVARS] {
    let mut y = *x;
    y[i] += h;
    y
}

/// Finite-difference estimate of the full second-order jet of `f` at `x`,
/// with second-order central stencils and one Richardson extrapolation
/// level. Steps follow [`FD_STEP_GRAD`] and [`FD_STEP_HESS`].
///
/// This is the independent oracle used to cross-validate jet arithmetic;
/// it never touches [`Jet2`] internals.
pub fn fd_oracle<F>(f: F, x: &[f64; NVARS]) -> Result<Jet2>
where
    F: Fn(&[f64; NVARS]) -> Result<f64>,
{
    fd_oracle_with_steps(f, x, FD_STEP_GRAD, FD_STEP_HESS)
}

/// [`fd_oracle`] with explicit step sizes.
pub fn fd_oracle_with_steps<F>(f: F, x: &[f64; NVARS], h_grad: f64, h_hess: f64) -> Result<Jet2>
where
    F: Fn(&[f64; NVARS]) -> Result<f64>,
{
    if h_grad <= 0.0 || h_hess <= 0.0 {
        return Err(EvalError::Argument("finite-difference step must be positive".into()));
    }
    let mut jet = Jet2::constant(f(x)?);

    let central = |i: usize, h: f64| -> Result<f64> {
        Ok((f(&shift(x, i, h))? - f(&shift(x, i, -h))?) / (2.0 * h))
    };
    for i in 0..NVARS {
        let coarse = central(i, h_grad)?;
        let fine = central(i, h_grad / 2.0)?;
        jet.grad[i] = (4.0 * fine - coarse) / 3.0;
    }

    let second = |i: usize, h: f64| -> Result<f64> {
        Ok((f(&shift(x, i, h))? - 2.0 * f(x)? + f(&shift(x, i, -h))?) / (h * h))
    };
    let mixed = |i: usize, j: usize, h: f64| -> Result<f64> {
        let pp = f(&shift(&shift(x, i, h), j, h))?;
        let pm = f(&shift(&shift(x, i, h), j, -h))?;
        let mp = f(&shift(&shift(x, i, -h), j, h))?;
        let mm = f(&shift(&shift(x, i, -h), j, -h))?;
        Ok((pp - pm - mp + mm) / (4.0 * h * h))
    };
    let mut k = 0;
    for i in 0..NVARS {
        for j in i..NVARS {
            let (coarse, fine) = if i == j {
                (second(i, h_hess)?, second(i, h_hess / 2.0)?)
            } else {
                (mixed(i, j, h_hess)?, mixed(i, j, h_hess / 2.0)?)
            };
            jet.hess[k] = (4.0 * fine - coarse) / 3.0;
            k += 1;
        }
    }
    Ok(jet)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn coordinate_jet_definition() {
        let j = Jet2::var(0, 2.5).unwrap();
        assert_eq!(j.val, 2.5);
        assert_eq!(j.grad, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(j.hess, [0.0; NSYM]);

        let j = Jet2::var(3, -1.0).unwrap();
        assert_eq!(j.val, -1.0);
        assert_eq!(j.grad, [0.0, 0.0, 0.0, 1.0]);

        assert!(Jet2::var(5, 0.0).is_err());
    }

    #[test]
    fn product_rule_square() {
        let x0 = Jet2::var(0, 3.0).unwrap();
        let sq = x0 * x0;
        assert_eq!(sq.val, 9.0);
        assert_eq!(sq.grad, [6.0, 0.0, 0.0, 0.0]);
        assert_eq!(sq.hess_at(0, 0), 2.0);
        assert_eq!(sq.hess.iter().filter(|h| **h != 0.0).count(), 1);
    }

    #[test]
    fn product_rule_mixed() {
        let x0 = Jet2::var(0, 2.0).unwrap();
        let x1 = Jet2::var(1, 5.0).unwrap();
        let p = x0 * x1;
        assert_eq!(p.val, 10.0);
        assert_eq!(p.grad, [5.0, 2.0, 0.0, 0.0]);
        assert_eq!(p.hess_at(0, 1), 1.0);
        assert_eq!(p.hess_at(1, 0), 1.0);
        assert_eq!(p.hess_at(0, 0), 0.0);
    }

    #[test]
    fn constant_times_jet_is_linear() {
        let x2 = Jet2::var(2, 1.5).unwrap();
        let j = x2.sin() + x2 * x2;
        let lhs = Jet2::constant(4.0) * j;
        let rhs = j * 4.0;
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn exp_jet_at_zero() {
        let e = Jet2::var(0, 0.0).unwrap().exp();
        assert_eq!(e.val, 1.0);
        assert_eq!(e.grad, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(e.hess_at(0, 0), 1.0);
    }

    #[test]
    fn sqrt_of_constant() {
        let r = Jet2::constant(4.0).sqrt().unwrap();
        assert_eq!(r.val, 2.0);
        assert_eq!(r.grad, [0.0; NVARS]);
        assert_eq!(r.hess, [0.0; NSYM]);
    }

    #[test]
    fn log_of_negative_errors() {
        assert!(Jet2::constant(-1.0).ln().is_err());
    }

    #[test]
    fn fd_oracle_on_square() {
        let f = |x: &[f64; 4]| Ok(x[0] * x[0]);
        let jet = fd_oracle(f, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_relative_eq!(jet.grad[0], 2.0, max_relative = 1e-6);
        assert_relative_eq!(jet.hess_at(0, 0), 2.0, max_relative = 1e-4);
    }

    #[test]
    fn fd_oracle_on_sine() {
        let f = |x: &[f64; 4]| Ok(x[1].sin());
        let jet = fd_oracle(f, &[0.0; 4]).unwrap();
        assert_relative_eq!(jet.grad[1], 1.0, max_relative = 1e-8);
    }

    #[test]
    fn fd_oracle_matches_jets_on_round_sphere_factor() {
        // Conformal factor of the stereographic 4-sphere chart, squared.
        let scalar = |x: &[f64; 4]| {
            let n2 = x.iter().map(|v| v * v).sum::<f64>();
            Ok((2.0 / (1.0 + n2)) * (2.0 / (1.0 + n2)))
        };
        let via_jets = |x: &[f64; 4]| {
            let v = Jet2::vars(x);
            let n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3];
            let c = Jet2::constant(2.0) * (n2 + 1.0).recip().unwrap();
            c * c
        };
        let x = [0.05, -0.3, 0.2, 0.1];
        let fd = fd_oracle(scalar, &x).unwrap();
        let jet = via_jets(&x);
        assert_relative_eq!(fd.val, jet.val, max_relative = 1e-12);
        for i in 0..4 {
            assert_relative_eq!(fd.grad[i], jet.grad[i], max_relative = 1e-5, epsilon = 1e-9);
        }
        for k in 0..NSYM {
            assert_relative_eq!(fd.hess[k], jet.hess[k], max_relative = 1e-3, epsilon = 1e-6);
        }
    }

    #[test]
    fn bump_is_smooth_and_compactly_supported() {
        let outside = Jet2::var(0, 1.2).unwrap().bump();
        assert_eq!(outside, Jet2::constant(0.0));
        let inside = Jet2::var(0, 0.3).unwrap().bump();
        assert!(inside.val > 0.0);
        let fd = fd_oracle(
            |x| {
                let q = x[0];
                Ok(if q.abs() >= 1.0 { 0.0 } else { (-1.0 / (1.0 - q * q)).exp() })
            },
            &[0.3, 0.0, 0.0, 0.0],
        )
        .unwrap();
        assert_relative_eq!(fd.grad[0], inside.grad[0], max_relative = 1e-5);
    }

    fn arb_jet() -> impl Strategy<Value = Jet2> {
        let coef = -2.0..2.0f64;
        (
            coef.clone(),
            prop::array::uniform4(coef.clone()),
            prop::array::uniform10(coef),
        )
            .prop_map(|(val, grad, hess)| Jet2 { val, grad, hess })
    }

    proptest! {
        #[test]
        fn mul_commutes(a in arb_jet(), b in arb_jet()) {
            let ab = a * b;
            let ba = b * a;
            prop_assert!((ab.val - ba.val).abs() <= 1e-13 * ab.val.abs().max(1.0));
            for k in 0..NSYM {
                prop_assert!((ab.hess[k] - ba.hess[k]).abs() <= 1e-13 * ab.hess[k].abs().max(1.0));
            }
        }

        #[test]
        fn mul_associates(a in arb_jet(), b in arb_jet(), c in arb_jet()) {
            let l = (a * b) * c;
            let r = a * (b * c);
            let scale = l.val.abs().max(1.0);
            prop_assert!((l.val - r.val).abs() <= 1e-13 * scale);
            for k in 0..NSYM {
                let s = l.hess[k].abs().max(1.0);
                prop_assert!((l.hess[k] - r.hess[k]).abs() <= 1e-12 * s);
            }
        }

        #[test]
        fn add_associates(a in arb_jet(), b in arb_jet(), c in arb_jet()) {
            let l = (a + b) + c;
            let r = a + (b + c);
            for k in 0..NSYM {
                prop_assert!((l.hess[k] - r.hess[k]).abs() <= 1e-13 * l.hess[k].abs().max(1.0));
            }
        }
    }
}
