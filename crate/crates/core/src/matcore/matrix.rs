use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Hermiticity residual accepted by [`HermMatrix::new`] before symmetrization.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        m
    }

    /// Matrix unit `e_ij` of size `n`.
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(n, n);
        m[(i, j)] = ONE;
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: C64, other: &Self) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Frobenius inner product `Re tr(self* other)`.
    pub fn inner(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a.re * b.re + a.im * b.im).sum()
    }

    /// Complex Frobenius inner product `tr(self* other)`.
    pub fn inner_c(&self, other: &Self) -> C64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let (r, c) = (self.rows * other.rows, self.cols * other.cols);
        let mut out = Self::zeros(r, c);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self[(i, j)];
                if a == ZERO {
                    continue;
                }
                for k in 0..other.rows {
                    for l in 0..other.cols {
                        out[(i * other.rows + k, j * other.cols + l)] = a * other[(k, l)];
                    }
                }
            }
        }
        out
    }

    /// Block `(bi, bj)` of size `bs × bs`.
    pub fn block(&self, bi: usize, bj: usize, bs: usize) -> Self {
        Self::from_fn(bs, bs, |i, j| self[(bi * bs + i, bj * bs + j)])
    }

    pub fn set_block(&mut self, bi: usize, bj: usize, blk: &Self) {
        for i in 0..blk.rows {
            for j in 0..blk.cols {
                self[(bi * blk.rows + i, bj * blk.cols + j)] = blk[(i, j)];
            }
        }
    }

    /// Assemble a square block matrix from an `nb × nb` grid of equal-size blocks.
    pub fn from_blocks(nb: usize, mut blk: impl FnMut(usize, usize) -> Self) -> Self {
        let mut out: Option<Self> = None;
        for i in 0..nb {
            for j in 0..nb {
                let b = blk(i, j);
                let o = out.get_or_insert_with(|| Self::zeros(nb * b.rows, nb * b.cols));
                o.set_block(i, j, &b);
            }
        }
        out.unwrap_or_else(|| Self::zeros(0, 0))
    }

    /// Conjugate by the swap `C^a ⊗ C^b → C^b ⊗ C^a`: maps `x ⊗ y` to `y ⊗ x`.
    pub fn swap_factors(&self, a: usize, b: usize) -> Self {
        assert_eq!(self.rows, a * b);
        let idx = |r: usize| {
            let (i, k) = (r / b, r % b);
            k * a + i
        };
        let mut out = Self::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(idx(r), idx(c))] = self[(r, c)];
            }
        }
        out
    }

    /// Transpose every `bs × bs` block in place of itself (partial transpose on
    /// the second tensor factor).
    pub fn partial_transpose(&self, bs: usize) -> Self {
        assert!(self.rows % bs == 0 && self.cols % bs == 0);
        Self::from_fn(self.rows, self.cols, |r, c| {
            let (bi, i, bj, j) = (r / bs, r % bs, c / bs, c % bs);
            self[(bi * bs + j, bj * bs + i)]
        })
    }

    pub fn hermiticity_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: Self) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        ComplexMatrix { rows: self.rows, cols: self.cols, data }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: Self) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        ComplexMatrix { rows: self.rows, cols: self.cols, data }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: Self) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.scale_re(-1.0)
    }
}

/// A square complex matrix equal to its adjoint.
///
/// Construction symmetrizes `(a + a*)/2`, so downstream code can rely on exact
/// Hermiticity.
#[derive(Clone, PartialEq, Debug)]
pub struct HermMatrix(ComplexMatrix);

impl HermMatrix {
    /// Checks the residual against [`HERMITIAN_TOL`] (scaled by the entry size)
    /// and symmetrizes.
    pub fn new(a: ComplexMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch(format!("{}x{} matrix is not square", a.rows, a.cols)));
        }
        if !a.is_finite() {
            return Err(Error::NonFinite);
        }
        let res = a.hermiticity_residual();
        if res > HERMITIAN_TOL * (1.0 + a.max_abs()) {
            return Err(Error::NotHermitian(res));
        }
        Ok(Self::symmetrize(&a))
    }

    /// `(a + a*)/2` with no residual check.
    pub fn symmetrize(a: &ComplexMatrix) -> Self {
        let n = a.rows;
        let mut out = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            out[(i, i)] = C64::new(a[(i, i)].re, 0.0);
            for j in i + 1..n {
                let z = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
                out[(i, j)] = z;
                out[(j, i)] = z.conj();
            }
        }
        Self(out)
    }

    pub fn zeros(n: usize) -> Self {
        Self(ComplexMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(ComplexMatrix::identity(n))
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        Self(ComplexMatrix::from_real_diag(diag))
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn inner(&self, other: &Self) -> f64 {
        self.0.inner(&other.0)
    }

    pub fn frob_norm(&self) -> f64 {
        self.0.frob_norm()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.scale_re(s))
    }

    pub fn axpy(&mut self, s: f64, other: &Self) {
        self.0.axpy(C64::new(s, 0.0), &other.0);
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    /// `self + s·I`
    pub fn shift(&self, s: f64) -> Self {
        let mut out = self.0.clone();
        for i in 0..out.rows {
            out[(i, i)] += C64::new(s, 0.0);
        }
        Self(out)
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self(self.0.kron(&other.0))
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// `v* self v`; Hermitian for any `v`.
    pub fn congruence(&self, v: &ComplexMatrix) -> Self {
        Self::symmetrize(&v.adjoint().matmul(&self.0).matmul(v))
    }

    pub fn swap_factors(&self, a: usize, b: usize) -> Self {
        Self(self.0.swap_factors(a, b))
    }
}

impl From<HermMatrix> for ComplexMatrix {
    fn from(h: HermMatrix) -> Self {
        h.0
    }
}

/// Wire format: `{"dim": n, "entries": [[re, im], ...]}` row-major.
#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct MatrixJson {
    pub dim: usize,
    pub entries: Vec<[f64; 2]>,
}

impl From<&ComplexMatrix> for MatrixJson {
    fn from(m: &ComplexMatrix) -> Self {
        assert!(m.is_square(), "matrix JSON carries square matrices");
        Self { dim: m.rows, entries: m.data.iter().map(|z| [z.re, z.im]).collect() }
    }
}

impl From<&HermMatrix> for MatrixJson {
    fn from(m: &HermMatrix) -> Self {
        Self::from(m.as_matrix())
    }
}

impl TryFrom<&MatrixJson> for ComplexMatrix {
    type Error = Error;
    fn try_from(j: &MatrixJson) -> Result<Self> {
        let data = j.entries.iter().map(|&[re, im]| C64::new(re, im)).collect();
        ComplexMatrix::from_vec(j.dim, j.dim, data)
    }
}

impl TryFrom<&MatrixJson> for HermMatrix {
    type Error = Error;
    fn try_from(j: &MatrixJson) -> Result<Self> {
        HermMatrix::new(ComplexMatrix::try_from(j)?)
    }
}

/// Hermitian basis of `M_n` with the identity first: `I`, `e_ii` for `i < n-1`,
/// then `e_ij + e_ji` and `i(e_ij - e_ji)` for `i < j`.
pub fn hermitian_basis(n: usize) -> Vec<HermMatrix> {
    let mut out = Vec::with_capacity(n * n);
    out.push(HermMatrix::identity(n));
    for i in 0..n.saturating_sub(1) {
        out.push(HermMatrix(ComplexMatrix::unit(n, i, i)));
    }
    for i in 0..n {
        for j in i + 1..n {
            let mut re = ComplexMatrix::zeros(n, n);
            re[(i, j)] = ONE;
            re[(j, i)] = ONE;
            out.push(HermMatrix(re));
            let mut im = ComplexMatrix::zeros(n, n);
            im[(i, j)] = C64::new(0.0, 1.0);
            im[(j, i)] = C64::new(0.0, -1.0);
            out.push(HermMatrix(im));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetrize_rejects_far_from_hermitian() {
        let a = ComplexMatrix::unit(2, 0, 1);
        assert!(matches!(HermMatrix::new(a), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn symmetrize_absorbs_roundoff() {
        let mut a = ComplexMatrix::identity(2);
        a[(0, 1)] = C64::new(1e-12, 0.0);
        let h = HermMatrix::new(a).unwrap();
        assert_eq!(h.as_matrix().hermiticity_residual(), 0.0);
    }

    #[test]
    fn hermitian_basis_spans_full_algebra() {
        for n in 1..5 {
            let b = hermitian_basis(n);
            assert_eq!(b.len(), n * n);
            assert_eq!(b[0], HermMatrix::identity(n));
        }
    }

    #[test]
    fn swap_factors_exchanges_kron_order() {
        let x = ComplexMatrix::from_fn(2, 2, |i, j| C64::new((i + 2 * j) as f64, 1.0));
        let y = ComplexMatrix::from_fn(3, 3, |i, j| C64::new(i as f64, j as f64));
        let xy = x.kron(&y);
        assert_eq!(xy.swap_factors(2, 3), y.kron(&x));
    }

    #[test]
    fn json_roundtrip() {
        let a = HermMatrix::new(ComplexMatrix::from_fn(3, 3, |i, j| {
            if i == j {
                C64::new(i as f64, 0.0)
            } else if i < j {
                C64::new(1.0, 2.0)
            } else {
                C64::new(1.0, -2.0)
            }
        }))
        .unwrap();
        let j = MatrixJson::from(&a);
        let s = serde_json::to_string(&j).unwrap();
        let back: MatrixJson = serde_json::from_str(&s).unwrap();
        assert_eq!(HermMatrix::try_from(&back).unwrap(), a);
    }
}
