use alloc::vec;
use alloc::vec::Vec;

use super::compressed::Compressed24;
use crate::error::{Error, Result};
use crate::matrix::{Layout, Matrix, Real};
use crate::sparsity::{Direction, GROUP};

/// Sets `out = sum v * src[off..off + out.len()]` over `taps`, adding the
/// taps in order. Sixteen outputs at a time stay in registers.
#[inline]
fn accumulate_line<T: Real>(out: &mut [T], src: &[T], taps: &[(usize, T)]) {
    const W: usize = 16;
    let len = out.len();
    let mut chunks = out.chunks_exact_mut(W);
    for (c, chunk) in (&mut chunks).enumerate() {
        let mut acc = [T::zero(); W];
        for &(off, v) in taps {
            let s: &[T; W] = src[off + c * W..off + c * W + W].try_into().expect("full chunk");
            for (a, &x) in acc.iter_mut().zip(s) {
                *a += x * v;
            }
        }
        chunk.copy_from_slice(&acc);
    }
    let rest = chunks.into_remainder();
    let start = len - rest.len();
    rest.fill(T::zero());
    for &(off, v) in taps {
        for (o, &x) in rest.iter_mut().zip(&src[off + start..off + len]) {
            *o += x * v;
        }
    }
}

/// Kept positions of compressed line `line` (a row for row-wise operands,
/// a column for column-wise ones) as (source offset, value), ascending.
#[inline]
fn line_taps<T: Real>(
    c: &Compressed24<T>,
    line: usize,
    groups_per_line: usize,
    stride: usize,
    taps: &mut Vec<(usize, T)>,
) {
    taps.clear();
    let vals = c.values();
    for gi in 0..groups_per_line {
        let g = line * groups_per_line + gi;
        let (lo, hi) = c.meta_pair(g);
        taps.push(((gi * GROUP + lo as usize) * stride, vals[2 * g]));
        taps.push(((gi * GROUP + hi as usize) * stride, vals[2 * g + 1]));
    }
}

/// `a * b` with `a` row-wise 2:4 sparse. Row-major output.
///
/// Only kept positions are visited; each output element accumulates its
/// inner index in ascending order, matching [`crate::matrix::matmul`] on the
/// decompressed operand bit for bit.
pub fn spmm<T: Real>(a: &Compressed24<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.direction() != Direction::RowWise {
        return Err(Error::WrongDirection { op: "spmm" });
    }
    if a.cols() != b.rows() {
        return Err(Error::ShapeMismatch {
            op: "spmm",
            left: a.shape(),
            right: b.shape(),
        });
    }
    a.validate()?;
    let (m, n) = (a.rows(), b.cols());
    let groups_per_row = a.cols() / GROUP;
    let b = b.as_layout(Layout::RowMajor);
    let mut out = vec![T::zero(); m * n];
    let mut taps = Vec::with_capacity(2 * groups_per_row);
    for i in 0..m {
        line_taps(a, i, groups_per_row, n, &mut taps);
        accumulate_line(&mut out[i * n..(i + 1) * n], b.data(), &taps);
    }
    Matrix::from_vec(m, n, Layout::RowMajor, out)
}

/// `a * b` with `b` column-wise 2:4 sparse. Column-major output.
pub fn spmm_right<T: Real>(a: &Matrix<T>, b: &Compressed24<T>) -> Result<Matrix<T>> {
    if b.direction() != Direction::ColWise {
        return Err(Error::WrongDirection { op: "spmm_right" });
    }
    if a.cols() != b.rows() {
        return Err(Error::ShapeMismatch {
            op: "spmm_right",
            left: a.shape(),
            right: b.shape(),
        });
    }
    b.validate()?;
    let (m, n) = (a.rows(), b.cols());
    let groups_per_col = b.rows() / GROUP;
    let a = a.as_layout(Layout::ColMajor);
    let mut out = vec![T::zero(); m * n];
    let mut taps = Vec::with_capacity(2 * groups_per_col);
    for j in 0..n {
        line_taps(b, j, groups_per_col, m, &mut taps);
        accumulate_line(&mut out[j * m..(j + 1) * m], a.data(), &taps);
    }
    Matrix::from_vec(m, n, Layout::ColMajor, out)
}

/// Multiply-accumulate count of a dense `m x k` by `k x n` product.
pub fn dense_flops(m: usize, k: usize, n: usize) -> u64 {
    2 * (m as u64) * (k as u64) * (n as u64)
}

/// Multiply-accumulate count when one operand is 2:4 sparse along `k`.
pub fn sparse_flops(m: usize, k: usize, n: usize) -> u64 {
    dense_flops(m, k, n) / 2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::matmul;
    use crate::sparsity::prune_2of4;
    use crate::spmm::{compress, decompress};

    #[test]
    fn identity_like_selects_rows() {
        // Row i keeps column i of its group with value 1.
        let a = Matrix::from_fn(4, 4, Layout::RowMajor, |i, j| if i == j { 1.0 } else { 0.0 });
        let c = compress(&prune_2of4(&a, Direction::RowWise).unwrap()).unwrap();
        let b = Matrix::from_fn(4, 3, Layout::RowMajor, |i, j| (10 * i + j) as f64);
        assert_eq!(spmm(&c, &b).unwrap(), b);
    }

    #[test]
    fn zero_values_give_zero() {
        let z = Matrix::<f64>::zeros(8, 8, Layout::RowMajor);
        let c = compress(&prune_2of4(&z, Direction::RowWise).unwrap()).unwrap();
        let b = Matrix::from_fn(8, 5, Layout::RowMajor, |i, j| (i + j) as f64);
        assert_eq!(spmm(&c, &b).unwrap(), Matrix::zeros(8, 5, Layout::RowMajor));
        let cw = compress(&prune_2of4(&z, Direction::ColWise).unwrap()).unwrap();
        assert_eq!(
            spmm_right(&b.clone().transpose(), &cw).unwrap(),
            Matrix::zeros(5, 8, Layout::RowMajor)
        );
    }

    #[test]
    fn right_operand_identity() {
        let bmat = Matrix::from_fn(4, 4, Layout::ColMajor, |i, j| if i == j { 1.0 } else { 0.0 });
        let c = compress(&prune_2of4(&bmat, Direction::ColWise).unwrap()).unwrap();
        let a = Matrix::from_fn(3, 4, Layout::RowMajor, |i, j| (i * 4 + j) as f64 - 5.0);
        let out = spmm_right(&a, &c).unwrap();
        assert_eq!(out.layout(), Layout::ColMajor);
        assert_eq!(out, a);
        assert!(out.bitwise_eq(&matmul(&a, &decompress(&c).unwrap()).unwrap()));
    }

    #[test]
    fn direction_and_shape_checks() {
        let a = Matrix::from_fn(4, 8, Layout::RowMajor, |i, j| (i + j) as f64);
        let row = compress(&prune_2of4(&a, Direction::RowWise).unwrap()).unwrap();
        let b = Matrix::<f64>::zeros(4, 2, Layout::RowMajor);
        assert!(matches!(spmm(&row, &b), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(spmm_right(&b, &row), Err(Error::WrongDirection { .. })));
        assert_eq!(sparse_flops(4, 8, 2) * 2, dense_flops(4, 8, 2));
    }
}
