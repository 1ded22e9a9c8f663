use alloc::vec;

use super::mask::{BinaryMask, Mask24};
use super::{check_groupable, group_count, group_members, Direction};
use crate::error::{Error, Result};
use crate::matrix::{Layout, Matrix, Real};

/// A 2:4-pruned matrix together with the mask that produced it.
/// Entries outside the mask are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseEstimate<T: Real = f64> {
    pub values: Matrix<T>,
    pub mask: Mask24,
}

/// Indices of the two largest magnitudes among four, ascending.
/// Ties go to the lower index.
#[inline]
pub(crate) fn top_two<T: Real>(mag: [T; 4]) -> [usize; 2] {
    let mut first = 0;
    for k in 1..4 {
        if mag[k] > mag[first] {
            first = k;
        }
    }
    let mut second = usize::MAX;
    for k in 0..4 {
        if k == first {
            continue;
        }
        if second == usize::MAX || mag[k] > mag[second] {
            second = k;
        }
    }
    if first < second {
        [first, second]
    } else {
        [second, first]
    }
}

/// Magnitude pruning: in every aligned group of four along `direction`,
/// keeps the two largest-magnitude entries verbatim and zeroes the rest.
pub fn prune_2of4<T: Real>(m: &Matrix<T>, direction: Direction) -> Result<SparseEstimate<T>> {
    let (rows, cols) = m.shape();
    check_groupable(rows, cols, direction)?;
    let mut values = Matrix::zeros(rows, cols, m.layout());
    let mut bits = vec![false; rows * cols];
    for g in 0..group_count(rows, cols) {
        let members = group_members(rows, cols, direction, g);
        let mag = members.map(|(i, j)| m.get(i, j).abs());
        for k in top_two(mag) {
            let (i, j) = members[k];
            values.set(i, j, m.get(i, j));
            bits[i * cols + j] = true;
        }
    }
    Ok(SparseEstimate {
        values,
        mask: Mask24::new_unchecked(rows, cols, direction, bits),
    })
}

/// Elementwise `w * mask`; the output keeps `w`'s layout.
pub fn apply_mask<T: Real, M: BinaryMask + ?Sized>(w: &Matrix<T>, mask: &M) -> Result<Matrix<T>> {
    if w.shape() != mask.shape() {
        return Err(Error::ShapeMismatch {
            op: "apply_mask",
            left: w.shape(),
            right: mask.shape(),
        });
    }
    let mut out = w.clone();
    let cols = w.cols();
    let bits = mask.bits();
    if w.layout() == Layout::RowMajor {
        for (v, &keep) in out.data_mut().iter_mut().zip(bits) {
            if !keep {
                *v = T::zero();
            }
        }
        return Ok(out);
    }
    for i in 0..w.rows() {
        for j in 0..cols {
            if !bits[i * cols + j] {
                out.set(i, j, T::zero());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Layout;

    fn row(v: [f64; 4]) -> Matrix {
        Matrix::from_rows(&[v])
    }

    #[test]
    fn keeps_two_largest_magnitudes() {
        let s = prune_2of4(&row([1.0, -2.0, 3.0, 0.5]), Direction::RowWise).unwrap();
        assert_eq!(s.values, row([0.0, -2.0, 3.0, 0.0]));
        assert_eq!(s.mask.bits(), &[false, true, true, false]);
    }

    #[test]
    fn all_zero_group_keeps_lowest_indices() {
        let s = prune_2of4(&row([0.0; 4]), Direction::RowWise).unwrap();
        assert_eq!(s.mask.bits(), &[true, true, false, false]);
    }

    #[test]
    fn three_way_tie_keeps_lowest() {
        let s = prune_2of4(&row([3.0, 3.0, -3.0, 1.0]), Direction::RowWise).unwrap();
        assert_eq!(s.mask.bits(), &[true, true, false, false]);
        let s = prune_2of4(&row([1.0, 3.0, -3.0, 3.0]), Direction::RowWise).unwrap();
        assert_eq!(s.mask.bits(), &[false, true, true, false]);
    }

    #[test]
    fn col_wise_groups_down_columns() {
        let m = row([1.0, -2.0, 3.0, 0.5]).transpose();
        let s = prune_2of4(&m, Direction::ColWise).unwrap();
        assert_eq!(s.values.get(1, 0), -2.0);
        assert_eq!(s.values.get(0, 0), 0.0);
        assert_eq!(s.values.layout(), Layout::ColMajor);
        assert!(prune_2of4(&m, Direction::RowWise).is_err());
    }

    #[test]
    fn rejects_ungroupable_width() {
        let m = Matrix::<f64>::zeros(4, 6, Layout::RowMajor);
        assert!(matches!(
            prune_2of4(&m, Direction::RowWise),
            Err(Error::NotGroupable { len: 6, .. })
        ));
    }

    #[test]
    fn apply_mask_zeroes_dropped_positions() {
        let w = Matrix::from_rows(&[[1.0, -2.0, 3.0, 4.0]]);
        let mask = Mask24::new(1, 4, Direction::RowWise, vec![true, false, false, true]).unwrap();
        let out = apply_mask(&w, &mask).unwrap();
        assert_eq!(out, Matrix::from_rows(&[[1.0, 0.0, 0.0, 4.0]]));
        assert_eq!(out.l1_norm(), 5.0);
        assert!(apply_mask(&Matrix::<f64>::zeros(2, 4, Layout::RowMajor), &mask).is_err());
    }
}
