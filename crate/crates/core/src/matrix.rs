//! Dense 2-D arrays with an explicit storage layout.
//!
//! The layout tag only decides where element `(i, j)` lives in `data`; every
//! logical operation (equality, products, masking) is layout independent.
//! Transposition is free: it swaps the dimensions and flips the tag while
//! leaving the buffer untouched.

use alloc::borrow::Cow;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::iter::Sum;
use core::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Scalar type accepted by the kernels. `f64` is the default everywhere;
/// `f32` exists for benchmarking.
pub trait Real: Float + Default + Debug + Sum + AddAssign + SubAssign + MulAssign + Send + Sync + 'static {
    fn erf(self) -> Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f64 {
    #[inline]
    fn erf(self) -> Self {
        libm::erf(self)
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

impl Real for f32 {
    #[inline]
    fn erf(self) -> Self {
        libm::erff(self)
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Layout {
    RowMajor,
    ColMajor,
}

impl Layout {
    pub fn flipped(self) -> Self {
        match self {
            Layout::RowMajor => Layout::ColMajor,
            Layout::ColMajor => Layout::RowMajor,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Matrix<T = f64> {
    rows: usize,
    cols: usize,
    layout: Layout,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize, layout: Layout) -> Self {
        Self {
            rows,
            cols,
            layout,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, layout: Layout, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                op: "Matrix::from_vec",
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            layout,
            data,
        })
    }

    /// Builds a row-major matrix from nested rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            layout: Layout::RowMajor,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, layout: Layout, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(rows, cols, layout);
        for i in 0..rows {
            for j in 0..cols {
                let k = m.offset(i, j);
                m.data[k] = f(i, j);
            }
        }
        m
    }

    /// Entries drawn i.i.d. from `N(0, std^2)`.
    pub fn random_normal<R: Rng + ?Sized>(rows: usize, cols: usize, layout: Layout, std: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                T::from_f64(z * std)
            })
            .collect();
        Self {
            rows,
            cols,
            layout,
            data,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn layout(&self) -> Layout {
        self.layout
    }

    /// Raw storage in the order given by [`Matrix::layout`].
    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.rows && j < self.cols);
        match self.layout {
            Layout::RowMajor => i * self.cols + j,
            Layout::ColMajor => j * self.rows + i,
        }
    }

    /// Distance in storage between consecutive rows and between
    /// consecutive columns.
    #[inline]
    pub fn strides(&self) -> (usize, usize) {
        match self.layout {
            Layout::RowMajor => (self.cols, 1),
            Layout::ColMajor => (1, self.rows),
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[self.offset(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let k = self.offset(i, j);
        self.data[k] = v;
    }

    /// Logical transpose. No data movement.
    pub fn transpose(self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            layout: self.layout.flipped(),
            data: self.data,
        }
    }

    /// Same logical matrix stored in `layout`.
    pub fn to_layout(&self, layout: Layout) -> Self {
        if layout == self.layout {
            return self.clone();
        }
        Self::from_fn(self.rows, self.cols, layout, |i, j| self.get(i, j))
    }

    pub fn into_layout(self, layout: Layout) -> Self {
        if layout == self.layout {
            self
        } else {
            self.to_layout(layout)
        }
    }

    pub(crate) fn as_layout(&self, layout: Layout) -> Cow<'_, Self> {
        if layout == self.layout {
            Cow::Borrowed(self)
        } else {
            Cow::Owned(self.to_layout(layout))
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            layout: self.layout,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Elementwise combination; the result takes `self`'s layout.
    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.check_same_shape(other, "zip_map")?;
        let other = other.as_layout(self.layout);
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            layout: self.layout,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn l1_norm(&self) -> T {
        self.data.iter().map(|x| x.abs()).sum()
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    /// Exact logical equality including the sign of zero and NaN payloads.
    pub fn bitwise_eq(&self, other: &Self) -> bool
    where
        T: BitPattern,
    {
        self.shape() == other.shape()
            && (0..self.rows).all(|i| (0..self.cols).all(|j| self.get(i, j).bits() == other.get(i, j).bits()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.check_same_shape(other, "max_abs_diff")?;
        let mut m = T::zero();
        for i in 0..self.rows {
            for j in 0..self.cols {
                m = m.max((self.get(i, j) - other.get(i, j)).abs());
            }
        }
        Ok(m)
    }

    pub(crate) fn check_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }
}

impl<T: Real> PartialEq for Matrix<T> {
    fn eq(&self, other: &Self) -> bool {
        self.shape() == other.shape()
            && (0..self.rows).all(|i| (0..self.cols).all(|j| self.get(i, j) == other.get(i, j)))
    }
}

pub trait BitPattern {
    fn bits(self) -> u64;
}

impl BitPattern for f64 {
    fn bits(self) -> u64 {
        self.to_bits()
    }
}

impl BitPattern for f32 {
    fn bits(self) -> u64 {
        self.to_bits() as u64
    }
}

/// Dense reference product `a * b`, row-major output.
///
/// Every output element accumulates its inner index in ascending order
/// starting from `+0.0`; the sparse kernels follow the same order so that
/// their results agree bit for bit.
pub fn matmul<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(gemm(a.rows, a.cols, b.cols, &a.data, a.strides(), &b.data, b.strides()))
}

/// `a * b^T` without materializing the transpose. Same summation order as
/// [`matmul`].
pub fn matmul_transposed<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols != b.cols {
        return Err(Error::ShapeMismatch {
            op: "matmul_transposed",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let (rs, cs) = b.strides();
    Ok(gemm(a.rows, a.cols, b.rows, &a.data, a.strides(), &b.data, (cs, rs)))
}

/// `m x k` by `k x n` product of strided operands; strides are (row, col).
fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    ad: &[T],
    (ars, acs): (usize, usize),
    bd: &[T],
    (brs, bcs): (usize, usize),
) -> Matrix<T> {
    let mut out = vec![T::zero(); m * n];
    // 4x4 output tiles accumulate in registers over packed panels; edges
    // take the plain loop.
    let (m4, n4) = (m - m % 4, n - n % 4);
    if k > 0 && m4 > 0 && n4 > 0 {
        let b_panels: Vec<[T; 4]> = (0..n4 / 4)
            .flat_map(|p| (0..k).map(move |kk| core::array::from_fn(|c| bd[kk * brs + (4 * p + c) * bcs])))
            .collect();
        let mut a_panel = vec![[T::zero(); 4]; k];
        for i in (0..m4).step_by(4) {
            for (kk, a4) in a_panel.iter_mut().enumerate() {
                *a4 = core::array::from_fn(|r| ad[(i + r) * ars + kk * acs]);
            }
            for (p, b_panel) in b_panels.chunks_exact(k).enumerate() {
                let mut acc = [[T::zero(); 4]; 4];
                for (a4, b4) in a_panel.iter().zip(b_panel) {
                    for r in 0..4 {
                        for c in 0..4 {
                            acc[r][c] += a4[r] * b4[c];
                        }
                    }
                }
                for (r, row) in acc.iter().enumerate() {
                    let at = (i + r) * n + 4 * p;
                    out[at..at + 4].copy_from_slice(row);
                }
            }
        }
    }
    for i in 0..m {
        let cols = if i < m4 { n4..n } else { 0..n };
        for j in cols {
            let mut acc = T::zero();
            for kk in 0..k {
                acc += ad[i * ars + kk * acs] * bd[kk * brs + j * bcs];
            }
            out[i * n + j] = acc;
        }
    }
    Matrix {
        rows: m,
        cols: n,
        layout: Layout::RowMajor,
        data: out,
    }
}

/// Column sums, used for bias gradients.
pub fn column_sums<T: Real>(m: &Matrix<T>) -> Vec<T> {
    let mut out = vec![T::zero(); m.cols];
    for i in 0..m.rows {
        for (j, o) in out.iter_mut().enumerate() {
            *o += m.get(i, j);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transpose_is_a_view() {
        let m = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let t = m.clone().transpose();
        assert_eq!(t.shape(), (3, 2));
        assert_eq!(t.layout(), Layout::ColMajor);
        assert_eq!(t.data(), m.data());
        assert_eq!(t.get(2, 1), 6.0);
    }

    #[test]
    fn logical_value_ignores_layout() {
        let m = Matrix::from_rows(&[[1.0, -2.0], [3.0, 4.0], [5.0, 6.5]]);
        let c = m.to_layout(Layout::ColMajor);
        assert_eq!(c.data(), &[1.0, 3.0, 5.0, -2.0, 4.0, 6.5]);
        assert_eq!(m, c);
        assert!(m.bitwise_eq(&c));
    }

    #[test]
    fn tiled_matmul_matches_naive_bitwise() {
        let layouts = [Layout::RowMajor, Layout::ColMajor];
        for (t, (m, k, n)) in [(1, 1, 1), (5, 7, 9), (8, 3, 12), (4, 4, 4), (13, 6, 3), (4, 0, 4)]
            .into_iter()
            .enumerate()
        {
            let a = Matrix::from_fn(m, k, layouts[t % 2], |i, j| libm::sin((i * 31 + j * 7) as f64));
            let b = Matrix::from_fn(k, n, layouts[t / 2 % 2], |i, j| libm::cos((i * 5 + j * 11) as f64));
            let got = matmul(&a, &b).unwrap();
            let bt = b.to_layout(layouts[t % 2]).transpose();
            assert!(got.bitwise_eq(&matmul_transposed(&a, &bt).unwrap()));
            for i in 0..m {
                for j in 0..n {
                    let mut s = 0.0;
                    for kk in 0..k {
                        s += a.get(i, kk) * b.get(kk, j);
                    }
                    assert_eq!(got.get(i, j).to_bits(), s.to_bits());
                }
            }
        }
    }

    #[test]
    fn matmul_small() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let b = Matrix::from_rows(&[[5.0, 6.0], [7.0, 8.0]]).to_layout(Layout::ColMajor);
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c, Matrix::from_rows(&[[19.0, 22.0], [43.0, 50.0]]));
        assert!(matmul(&a, &Matrix::<f64>::zeros(3, 2, Layout::RowMajor)).is_err());
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Matrix::from_vec(2, 2, Layout::RowMajor, vec![0.0; 3]).is_err());
    }
}
