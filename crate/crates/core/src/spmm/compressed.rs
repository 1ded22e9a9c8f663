use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{Layout, Matrix, Real};
use crate::sparsity::{
    check_groupable, group_count, group_members, BinaryMask, Direction, Mask24, SparseEstimate, GROUP, KEEP,
};

fn invalid_group(g: usize, direction: Direction) -> Error {
    Error::InvalidMask(alloc::format!(
        "group {g} ({direction:?}) does not keep exactly {KEEP} entries"
    ))
}

/// Packed 2:4 operand.
///
/// `values` holds the two kept entries of every group, groups in canonical
/// order (row by row for `RowWise`, column by column for `ColWise`).
/// `meta` holds one nibble per group: bits 0-1 are the lower in-group index,
/// bits 2-3 the higher one. Even groups use the low nibble of a byte, odd
/// groups the high nibble.
#[derive(Debug, Clone, PartialEq)]
pub struct Compressed24<T: Real = f64> {
    rows: usize,
    cols: usize,
    direction: Direction,
    values: Vec<T>,
    meta: Vec<u8>,
}

#[inline]
pub fn pack_nibble(lo: u8, hi: u8) -> u8 {
    (lo & 0b11) | ((hi & 0b11) << 2)
}

#[inline]
pub fn unpack_nibble(n: u8) -> (u8, u8) {
    (n & 0b11, (n >> 2) & 0b11)
}

impl<T: Real> Compressed24<T> {
    /// Assembles an operand from raw parts without checking the metadata;
    /// [`Compressed24::validate`] and [`decompress`] report bad metadata.
    pub fn from_raw_parts(
        rows: usize,
        cols: usize,
        direction: Direction,
        values: Vec<T>,
        meta: Vec<u8>,
    ) -> Result<Self> {
        check_groupable(rows, cols, direction)?;
        let groups = group_count(rows, cols);
        if values.len() != 2 * groups {
            return Err(Error::LengthMismatch {
                op: "Compressed24 values",
                expected: 2 * groups,
                found: values.len(),
            });
        }
        if meta.len() != groups.div_ceil(2) {
            return Err(Error::LengthMismatch {
                op: "Compressed24 meta",
                expected: groups.div_ceil(2),
                found: meta.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            direction,
            values,
            meta,
        })
    }

    /// Packs the entries of `values` selected by `mask`.
    pub fn from_masked(values: &Matrix<T>, mask: &Mask24) -> Result<Self> {
        if values.shape() != mask.shape() {
            return Err(Error::ShapeMismatch {
                op: "compress",
                left: values.shape(),
                right: mask.shape(),
            });
        }
        check_groupable(mask.rows(), mask.cols(), mask.direction())?;
        let (rows, cols, direction) = (values.rows(), values.cols(), mask.direction());
        let groups = group_count(rows, cols);
        let mut vals = Vec::with_capacity(2 * groups);
        let mut meta = vec![0u8; groups.div_ceil(2)];
        let bits = mask.bits();
        let data = values.data();
        // Strides between consecutive group members in the row-major bits
        // and in the value buffer.
        let (bit_stride, val_stride) = match (direction, values.layout()) {
            (Direction::RowWise, Layout::RowMajor) => (1, 1),
            (Direction::RowWise, Layout::ColMajor) => (1, rows),
            (Direction::ColWise, Layout::RowMajor) => (cols, cols),
            (Direction::ColWise, Layout::ColMajor) => (cols, 1),
        };
        let (lines, per_line) = match direction {
            Direction::RowWise => (rows, cols / GROUP),
            Direction::ColWise => (cols, rows / GROUP),
        };
        for line in 0..lines {
            for gi in 0..per_line {
                let g = line * per_line + gi;
                let (i, j) = match direction {
                    Direction::RowWise => (line, gi * GROUP),
                    Direction::ColWise => (gi * GROUP, line),
                };
                let val0 = match values.layout() {
                    Layout::RowMajor => i * cols + j,
                    Layout::ColMajor => j * rows + i,
                };
                let bit0 = i * cols + j;
                let code = (0..GROUP).fold(0u8, |acc, k| acc | (u8::from(bits[bit0 + k * bit_stride]) << k));
                // Branch free on the bits: only the error path depends on them.
                if code.count_ones() as usize != KEEP {
                    return Err(invalid_group(g, direction));
                }
                let kept = [code.trailing_zeros() as u8, 7 - code.leading_zeros() as u8];
                vals.push(data[val0 + kept[0] as usize * val_stride]);
                vals.push(data[val0 + kept[1] as usize * val_stride]);
                meta[g / 2] |= pack_nibble(kept[0], kept[1]) << (4 * (g % 2));
            }
        }
        Ok(Self {
            rows,
            cols,
            direction,
            values: vals,
            meta,
        })
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
    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn meta(&self) -> &[u8] {
        &self.meta
    }

    pub fn group_count(&self) -> usize {
        group_count(self.rows, self.cols)
    }

    /// In-group indices `(lo, hi)` of group `g`, unchecked.
    #[inline]
    pub fn meta_pair(&self, g: usize) -> (u8, u8) {
        unpack_nibble(self.meta[g / 2] >> (4 * (g % 2)))
    }

    pub fn validate(&self) -> Result<()> {
        for g in 0..self.group_count() {
            let (lo, hi) = self.meta_pair(g);
            if lo >= hi {
                return Err(Error::InvalidMetadata { group: g, lo, hi });
            }
        }
        Ok(())
    }

    /// The 2:4 mask encoded by the metadata.
    pub fn mask(&self) -> Result<Mask24> {
        self.validate()?;
        let mut bits = vec![false; self.rows * self.cols];
        for g in 0..self.group_count() {
            let members = group_members(self.rows, self.cols, self.direction, g);
            let (lo, hi) = self.meta_pair(g);
            for k in [lo, hi] {
                let (i, j) = members[k as usize];
                bits[i * self.cols + j] = true;
            }
        }
        Mask24::new(self.rows, self.cols, self.direction, bits)
    }
}

/// Packs a pruned matrix.
pub fn compress<T: Real>(s: &SparseEstimate<T>) -> Result<Compressed24<T>> {
    Compressed24::from_masked(&s.values, &s.mask)
}

/// Dense matrix with the kept values at their metadata positions. The
/// output is row-major for row-wise operands and column-major otherwise.
pub fn decompress<T: Real>(c: &Compressed24<T>) -> Result<Matrix<T>> {
    c.validate()?;
    let layout = match c.direction {
        Direction::RowWise => crate::matrix::Layout::RowMajor,
        Direction::ColWise => crate::matrix::Layout::ColMajor,
    };
    let mut out = Matrix::zeros(c.rows, c.cols, layout);
    for g in 0..c.group_count() {
        let members = group_members(c.rows, c.cols, c.direction, g);
        let (lo, hi) = c.meta_pair(g);
        let (i, j) = members[lo as usize];
        out.set(i, j, c.values[2 * g]);
        let (i, j) = members[hi as usize];
        out.set(i, j, c.values[2 * g + 1]);
    }
    Ok(out)
}
