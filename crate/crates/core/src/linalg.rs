//! Small dense helpers shared by the geometry modules.

use crate::jet::{sym_index, NSYM};
use nalgebra::{Matrix3, Matrix4, Vector3};

/// Unpack ten packed symmetric components into a full matrix.
pub fn metric_matrix(g: &[f64; NSYM]) -> Matrix4<f64> {
    Matrix4::from_fn(|i, j| g[sym_index(i, j)])
}

/// Upper-triangular factor `U` with `G = U^T U`, or `None` when `G` is not
/// positive definite. Row `a` of `U` is the `a`-th orthonormal covector.
pub fn cholesky4(g: &[f64; NSYM]) -> Option<Matrix4<f64>> {
    let gm = metric_matrix(g);
    let mut l = Matrix4::zeros();
    for i in 0..4 {
        for j in 0..=i {
            let mut s = gm[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Some(l.transpose())
}

/// Directional derivatives of the Cholesky factor: given `U` with
/// `G = U^T U` and `dG`, returns `dU` with `dG = dU^T U + U^T dU`.
pub fn cholesky4_derivative(u: &Matrix4<f64>, u_inv: &Matrix4<f64>, dg: &Matrix4<f64>) -> Matrix4<f64> {
    let phi = u_inv.transpose() * dg * u_inv;
    // dU * U^{-1} is upper triangular; Phi = S^T + S fixes it as the upper
    // part of Phi with half the diagonal.
    let mut s = Matrix4::zeros();
    for i in 0..4 {
        s[(i, i)] = 0.5 * phi[(i, i)];
        for j in (i + 1)..4 {
            s[(i, j)] = phi[(i, j)];
        }
    }
    s * u
}

/// Axial vector of an antisymmetric 3x3 matrix: `W v = axial(W) x v`.
pub fn axial(w: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (w[(2, 1)] - w[(1, 2)]),
        0.5 * (w[(0, 2)] - w[(2, 0)]),
        0.5 * (w[(1, 0)] - w[(0, 1)]),
    )
}

/// Cross-product matrix: `cross_matrix(v) w = v x w`.
pub fn cross_matrix(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// An orthonormal oriented basis `(b1, b2)` of the plane orthogonal to the
/// unit vector `n`, with `b1 x b2 = n`.
pub fn tangent_basis(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let seed = if n.x.abs() < 0.7 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let b1 = (seed - n * seed.dot(n)).normalize();
    let b2 = n.cross(&b1);
    (b1, b2)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n {
        // Chebyshev-based initial guess.
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0, x);
        for j in 2..=n {
            let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        nodes[n - 1 - k] = x;
        weights[n - 1 - k] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}
