//! Small dense linear algebra over `f64` and `Complex64`.
//!
//! Dimensions in this crate are tiny (a handful of antennas, tens of users),
//! so everything here is a straightforward dense routine on `Vec`s.

use alloc::vec;
use alloc::vec::Vec;

pub use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

pub type CVector = Vec<Complex64>;

/// Row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: Complex64) {
        self.data[i * self.cols + j] = value;
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> CVector {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                let row = &self.data[i * self.cols..(i + 1) * self.cols];
                row.iter().zip(x).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    pub fn mul(&self, other: &CMatrix) -> CMatrix {
        debug_assert_eq!(self.cols, other.rows);
        Self::from_fn(self.rows, other.cols, |i, j| {
            (0..self.cols).map(|k| self.get(i, k) * other.get(k, j)).sum()
        })
    }

    pub fn scale(&self, s: f64) -> CMatrix {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }
}

/// Inner product `a^H b`.
#[inline]
pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[inline]
pub fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

#[inline]
pub fn norm(a: &[Complex64]) -> f64 {
    libm::sqrt(norm_sqr(a))
}

/// Unit-norm copy of `a`, or `None` for a (numerically) zero vector.
pub fn normalized(a: &[Complex64]) -> Option<CVector> {
    let n = norm(a);
    if n > 0.0 && n.is_finite() {
        Some(a.iter().map(|z| z / n).collect())
    } else {
        None
    }
}

/// Rotates `a` so that its largest-magnitude entry is real and positive.
pub fn fix_phase(a: &mut [Complex64]) {
    let Some(pivot) = a.iter().copied().max_by(|x, y| x.norm_sqr().total_cmp(&y.norm_sqr())) else {
        return;
    };
    let mag = pivot.norm();
    if mag == 0.0 {
        return;
    }
    let rot = pivot.conj() / mag;
    for z in a.iter_mut() {
        *z *= rot;
    }
}

/// Orthonormal basis of the span of `vectors` (modified Gram-Schmidt with one
/// reorthogonalization pass). A vector is dropped when less than `rel_tol` of
/// its norm survives projection onto the basis built so far.
pub fn orthonormal_basis<'a, I>(vectors: I, rel_tol: f64) -> Vec<CVector>
where
    I: IntoIterator<Item = &'a [Complex64]>,
{
    let mut basis: Vec<CVector> = Vec::new();
    for v in vectors {
        let original = norm(v);
        if original == 0.0 {
            continue;
        }
        let mut w: CVector = v.to_vec();
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
        let residual = norm(&w);
        if residual > rel_tol * original {
            basis.push(w.iter().map(|z| z / residual).collect());
        }
    }
    basis
}

/// Solves `A x = b` for Hermitian positive definite `A` by Cholesky
/// factorization. Returns `None` if `A` is not numerically positive definite.
pub fn cholesky_solve(a: &CMatrix, b: &[Complex64]) -> Option<CVector> {
    let n = a.rows();
    debug_assert_eq!(a.cols(), n);
    debug_assert_eq!(b.len(), n);
    // lower-triangular factor, row-major
    let mut l = vec![Complex64::new(0.0, 0.0); n * n];
    for j in 0..n {
        let mut diag = a.get(j, j).re;
        for k in 0..j {
            diag -= l[j * n + k].norm_sqr();
        }
        if !(diag > 0.0) {
            return None;
        }
        let ljj = libm::sqrt(diag);
        l[j * n + j] = Complex64::new(ljj, 0.0);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = s / ljj;
        }
    }
    // forward: L y = b
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i].re;
    }
    // backward: L^H x = y
    let mut x = y;
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[k * n + i].conj() * x[k];
        }
        x[i] = s / l[i * n + i].re;
    }
    Some(x)
}

/// Leading singular triple `(sigma, u, v)` of `h`, with `h v = sigma u`.
///
/// Power iteration on `h^H h`, started from the column of largest norm. The
/// phase of `v` is fixed so that its largest entry is real and positive.
pub fn leading_singular_pair(h: &CMatrix) -> (f64, CVector, CVector) {
    let cols = h.cols();
    let gram = h.adjoint().mul(h);
    let start = (0..cols)
        .max_by(|&a, &b| gram.get(a, a).re.total_cmp(&gram.get(b, b).re))
        .unwrap_or(0);
    let mut v: CVector = (0..cols)
        .map(|j| Complex64::new(if j == start { 1.0 } else { 0.0 }, 0.0))
        .collect();
    // slight tilt so that a start vector orthogonal to the dominant subspace
    // still picks it up
    for (j, z) in v.iter_mut().enumerate() {
        if j != start {
            *z = Complex64::new(1e-3, 0.0);
        }
    }
    let mut v = normalized(&v).unwrap_or(v);
    for _ in 0..10_000 {
        let w = gram.mul_vec(&v);
        let Some(next) = normalized(&w) else {
            break;
        };
        let gv = gram.mul_vec(&next);
        let next_lambda = dot(&next, &gv).re;
        let residual = norm(
            &gv.iter()
                .zip(&next)
                .map(|(g, x)| g - x * next_lambda)
                .collect::<Vec<_>>(),
        );
        v = next;
        // the eigenvalue settles long before the vector, so stop on the residual
        if residual <= 1e-14 * next_lambda.abs() {
            break;
        }
    }
    fix_phase(&mut v);
    let hv = h.mul_vec(&v);
    let sigma = norm(&hv);
    let u = normalized(&hv).unwrap_or_else(|| {
        (0..h.rows())
            .map(|i| Complex64::new(if i == 0 { 1.0 } else { 0.0 }, 0.0))
            .collect()
    });
    (sigma, u, v)
}

/// Solves the real system `A x = b` (row-major `A`) by Gaussian elimination
/// with partial pivoting.
pub fn solve_real(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    if a.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            found: a.len(),
        });
    }
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .unwrap_or(col);
        if m[pivot * n + col].abs() == 0.0 {
            return Err(invalid("matrix", "singular"));
        }
        if pivot != col {
            for j in 0..n {
                m.swap(col * n + j, pivot * n + j);
            }
            x.swap(col, pivot);
        }
        let d = m[col * n + col];
        for i in col + 1..n {
            let f = m[i * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                m[i * n + j] -= f * m[col * n + j];
            }
            x[i] -= f * x[col];
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in i + 1..n {
            s -= m[i * n + j] * x[j];
        }
        x[i] = s / m[i * n + i];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn cholesky_solves_hermitian_system() {
        let a = CMatrix::new(2, 2, vec![c(4.0, 0.0), c(1.0, 1.0), c(1.0, -1.0), c(3.0, 0.0)]).unwrap();
        let b = vec![c(1.0, 0.0), c(0.0, 2.0)];
        let x = cholesky_solve(&a, &b).unwrap();
        let r = a.mul_vec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).norm() < 1e-14);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = CMatrix::new(2, 2, vec![c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert!(cholesky_solve(&a, &[c(1.0, 0.0), c(1.0, 0.0)]).is_none());
    }

    #[test]
    fn basis_drops_dependent_vectors() {
        let a = vec![c(1.0, 0.0), c(1.0, 0.0)];
        let b = vec![c(2.0, 0.0), c(2.0, 0.0)];
        let e = vec![c(0.0, 0.0), c(0.0, 1.0)];
        let basis = orthonormal_basis([a.as_slice(), b.as_slice(), e.as_slice()], 1e-10);
        assert_eq!(basis.len(), 2);
        assert!(dot(&basis[0], &basis[1]).norm() < 1e-15);
    }

    #[test]
    fn singular_pair_of_diagonal() {
        let h = CMatrix::new(2, 2, vec![c(3.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        let (sigma, u, v) = leading_singular_pair(&h);
        assert!((sigma - 3.0).abs() < 1e-12);
        assert!((u[0].norm() - 1.0).abs() < 1e-12);
        assert!((v[0] - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn real_solve_with_pivoting() {
        let a = [0.0, 1.0, 2.0, 1.0];
        let x = solve_real(&a, &[1.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
        assert!(solve_real(&[1.0, 2.0, 2.0, 4.0], &[1.0, 1.0]).is_err());
    }
}
