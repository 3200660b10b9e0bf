//! Small dense matrices and tensors, plus 3x3 rotation-group helpers that
//! stay generic over dual scalars so they can be differentiated.

use crate::smoothcalc::scalar::Real;
use serde::Serialize;

/// Row-major dense matrix of plain doubles.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Mat { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat::from_vec(rows, cols, vec![0.0; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn mul(&self, rhs: &Mat) -> Mat {
        assert_eq!(self.cols, rhs.rows);
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.get(k, j);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Frobenius distance to another matrix of the same shape.
    pub fn distance(&self, rhs: &Mat) -> f64 {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Dense tensor of plain doubles with a runtime shape; used for the residual
/// tensors the axiom checks return.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(data.len(), shape.iter().product::<usize>());
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        for (k, &i) in idx.iter().enumerate() {
            debug_assert!(i < self.shape[k]);
            off = off * self.shape[k] + i;
        }
        off
    }

    pub fn at(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let off = self.offset(idx);
        self.data[off] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// 3x3 matrix in generic scalars, row-major.
pub type Mat3<T> = [T; 9];

pub fn mat3_identity<T: Real>() -> Mat3<T> {
    let mut m = [T::zero(); 9];
    m[0] = T::one();
    m[4] = T::one();
    m[8] = T::one();
    m
}

pub fn mat3_mul<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = [T::zero(); 9];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = T::zero();
            for k in 0..3 {
                acc = acc + a[i * 3 + k] * b[k * 3 + j];
            }
            out[i * 3 + j] = acc;
        }
    }
    out
}

pub fn mat3_transpose<T: Real>(a: &Mat3<T>) -> Mat3<T> {
    let mut out = [T::zero(); 9];
    for i in 0..3 {
        for j in 0..3 {
            out[j * 3 + i] = a[i * 3 + j];
        }
    }
    out
}

pub fn mat3_vec<T: Real>(a: &Mat3<T>, v: &[T]) -> [T; 3] {
    let mut out = [T::zero(); 3];
    for i in 0..3 {
        out[i] = a[i * 3] * v[0] + a[i * 3 + 1] * v[1] + a[i * 3 + 2] * v[2];
    }
    out
}

pub fn mat3_add<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    core::array::from_fn(|k| a[k] + b[k])
}

pub fn mat3_scale<T: Real>(c: T, a: &Mat3<T>) -> Mat3<T> {
    core::array::from_fn(|k| c * a[k])
}

/// Commutator `[a, b] = ab - ba`.
pub fn mat3_comm<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let ab = mat3_mul(a, b);
    let ba = mat3_mul(b, a);
    core::array::from_fn(|k| ab[k] - ba[k])
}

/// Frobenius inner product `tr(a^T b)`.
pub fn mat3_dot<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> T {
    let mut acc = T::zero();
    for k in 0..9 {
        acc = acc + a[k] * b[k];
    }
    acc
}

/// Hat map: `hat(v) w = v x w`. Rows/columns follow `(hat v)_{ij} = eps_{ivj} v^v`.
pub fn so3_hat<T: Real>(v: &[T]) -> Mat3<T> {
    let z = T::zero();
    [
        z, -v[2], v[1], //
        v[2], z, -v[0], //
        -v[1], v[0], z,
    ]
}

/// Standard so(3) generator matrices `E_a = hat(e_a)`, `[E_a, E_b] = eps_{abc} E_c`.
pub fn so3_generators() -> [Mat3<f64>; 3] {
    [
        so3_hat(&[1.0, 0.0, 0.0]),
        so3_hat(&[0.0, 1.0, 0.0]),
        so3_hat(&[0.0, 0.0, 1.0]),
    ]
}

/// Rodrigues rotation `exp(hat(v))`, generic over dual scalars.
///
/// Uses the series form of `sin(t)/t` and `(1-cos(t))/t^2` near zero so the
/// removable singularity stays differentiable.
pub fn so3_exp<T: Real>(v: &[T]) -> Mat3<T> {
    let k = so3_hat(v);
    let q = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    let (a, b) = sinc_pair(q);
    let k2 = mat3_mul(&k, &k);
    mat3_add(
        &mat3_identity(),
        &mat3_add(&mat3_scale(a, &k), &mat3_scale(b, &k2)),
    )
}

/// `(sin(sqrt q)/sqrt q, (1 - cos(sqrt q))/q)` with a series branch near zero.
fn sinc_pair<T: Real>(q: T) -> (T, T) {
    if q.re().abs() < 1e-6 {
        // sin(t)/t       = 1 - q/6 + q^2/120 - q^3/5040
        // (1-cos(t))/q   = 1/2 - q/24 + q^2/720 - q^3/40320
        let q2 = q * q;
        let q3 = q2 * q;
        let a = T::one() - q * T::from_f64(1.0 / 6.0) + q2 * T::from_f64(1.0 / 120.0)
            - q3 * T::from_f64(1.0 / 5040.0);
        let b = T::from_f64(0.5) - q * T::from_f64(1.0 / 24.0) + q2 * T::from_f64(1.0 / 720.0)
            - q3 * T::from_f64(1.0 / 40320.0);
        (a, b)
    } else {
        let t = q.sqrt();
        (t.sin() / t, (T::one() - t.cos()) / q)
    }
}

/// Inverse of a small dense matrix by Gauss-Jordan elimination with partial
/// pivoting; `None` when singular.
pub fn invert(n: usize, data: &[f64]) -> Option<Vec<f64>> {
    assert_eq!(data.len(), n * n);
    let mut a = data.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i * n + col]
                .abs()
                .partial_cmp(&a[j * n + col].abs())
                .expect("finite entries")
        })?;
        if a[pivot * n + col].abs() < 1e-14 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
                inv.swap(col * n + k, pivot * n + k);
            }
        }
        let d = a[col * n + col];
        for k in 0..n {
            a[col * n + k] /= d;
            inv[col * n + k] /= d;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = a[row * n + col];
            if factor == 0.0 {
                continue;
            }
            for k in 0..n {
                a[row * n + k] -= factor * a[col * n + k];
                inv[row * n + k] -= factor * inv[col * n + k];
            }
        }
    }
    Some(inv)
}

/// Levi-Civita symbol on indices `0..3`.
pub fn epsilon3(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// Orthogonality defect `max |R^T R - I|`.
pub fn orthogonality_defect(r: &Mat3<f64>) -> f64 {
    let rtr = mat3_mul(&mat3_transpose(r), r);
    let mut worst = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((rtr[i * 3 + j] - target).abs());
        }
    }
    worst
}

pub fn det3(m: &Mat3<f64>) -> f64 {
    m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
        + m[2] * (m[3] * m[7] - m[4] * m[6])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn generators_satisfy_so3_brackets() {
        let e = so3_generators();
        for a in 0..3 {
            for b in 0..3 {
                let comm = mat3_comm(&e[a], &e[b]);
                let mut expected = [0.0; 9];
                for c in 0..3 {
                    let coef = epsilon3(a, b, c);
                    for k in 0..9 {
                        expected[k] += coef * e[c][k];
                    }
                }
                for k in 0..9 {
                    assert_relative_eq!(comm[k], expected[k]);
                }
            }
        }
    }

    #[test]
    fn rodrigues_matches_known_rotation() {
        // rotation by pi about axis 1 is diag(1, -1, -1)
        let r = so3_exp(&[std::f64::consts::PI, 0.0, 0.0]);
        let expected = [1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0];
        for k in 0..9 {
            assert_relative_eq!(r[k], expected[k], epsilon = 1e-12);
        }
        assert!(orthogonality_defect(&r) < 1e-12);
        assert_relative_eq!(det3(&r), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rodrigues_series_branch_is_smooth() {
        // tiny angles: exp(hat v) ~ I + hat(v); also check orthogonality
        let v = [1e-5, -2e-5, 0.5e-5];
        let r = so3_exp(&v);
        let khat = so3_hat(&v);
        for k in 0..9 {
            let lin = mat3_identity::<f64>()[k] + khat[k];
            assert_relative_eq!(r[k], lin, epsilon = 1e-9);
        }
        assert!(orthogonality_defect(&r) < 1e-15);
    }

    #[test]
    fn rodrigues_derivative_via_duals_matches_fd() {
        use crate::smoothcalc::scalar::{Real, D1};
        let v0 = [0.3, -0.7, 0.2];
        for dir in 0..3 {
            let lifted: [D1; 3] =
                core::array::from_fn(|k| if k == dir { v0[k].lift_var() } else { v0[k].lift() });
            let r_dual = so3_exp(&lifted);
            let h = 1e-6;
            let mut vp = v0;
            let mut vm = v0;
            vp[dir] += h;
            vm[dir] -= h;
            let rp = so3_exp(&vp);
            let rm = so3_exp(&vm);
            for k in 0..9 {
                let fd = (rp[k] - rm[k]) / (2.0 * h);
                assert_relative_eq!(r_dual[k].eps, fd, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn tensor_indexing_round_trip() {
        let mut t = Tensor::zeros(&[2, 3, 4]);
        t.set(&[1, 2, 3], 7.5);
        assert_eq!(t.at(&[1, 2, 3]), 7.5);
        assert_eq!(t.at(&[0, 0, 0]), 0.0);
        assert_eq!(t.max_abs(), 7.5);
    }
}
