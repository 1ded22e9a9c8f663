use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::patterns::{Pattern, PatternTable};
use super::{check_blockable, check_groupable, group_count, group_members, Direction, GROUP, KEEP};
use crate::error::{Error, Result};

/// Read access shared by the two mask kinds. Bits are stored row-major
/// regardless of the layout of the matrix they are applied to.
pub trait BinaryMask {
    fn shape(&self) -> (usize, usize);
    fn bits(&self) -> &[bool];

    #[inline]
    fn keeps(&self, i: usize, j: usize) -> bool {
        self.bits()[i * self.shape().1 + j]
    }
}

/// Directional 2:4 mask: every aligned group of 4 along `direction` holds
/// exactly two ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask24 {
    rows: usize,
    cols: usize,
    direction: Direction,
    bits: Vec<bool>,
}

impl Mask24 {
    pub fn new(rows: usize, cols: usize, direction: Direction, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(Error::LengthMismatch {
                op: "Mask24::new",
                expected: rows * cols,
                found: bits.len(),
            });
        }
        let mask = Self {
            rows,
            cols,
            direction,
            bits,
        };
        mask.validate()?;
        Ok(mask)
    }

    pub(crate) fn new_unchecked(rows: usize, cols: usize, direction: Direction, bits: Vec<bool>) -> Self {
        debug_assert_eq!(bits.len(), rows * cols);
        Self {
            rows,
            cols,
            direction,
            bits,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_groupable(self.rows, self.cols, self.direction)?;
        for g in 0..group_count(self.rows, self.cols) {
            let kept = group_members(self.rows, self.cols, self.direction, g)
                .iter()
                .filter(|&&(i, j)| self.keeps(i, j))
                .count();
            if kept != KEEP {
                return Err(Error::InvalidMask(format!(
                    "group {g} ({:?}) keeps {kept} entries, expected {KEEP}",
                    self.direction
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn direction(&self) -> Direction {
        self.direction
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// The mask of the transposed matrix; its direction flips.
    pub fn transpose(&self) -> Self {
        let mut bits = vec![false; self.bits.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                bits[j * self.rows + i] = self.bits[i * self.cols + j];
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            direction: self.direction.transposed(),
            bits,
        }
    }

    /// Kept positions of group `g` as in-group offsets, ascending.
    pub fn kept_offsets(&self, g: usize) -> [u8; 2] {
        let members = group_members(self.rows, self.cols, self.direction, g);
        let mut out = [0u8; 2];
        let mut n = 0;
        for (k, &(i, j)) in members.iter().enumerate() {
            if self.keeps(i, j) && n < 2 {
                out[n] = k as u8;
                n += 1;
            }
        }
        out
    }
}

impl BinaryMask for Mask24 {
    fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
    fn bits(&self) -> &[bool] {
        &self.bits
    }
}

/// Mask whose aligned 4x4 blocks keep exactly two entries per block row and
/// per block column, so both it and its transpose are valid 2:4 masks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransposableMask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl TransposableMask {
    pub fn new(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(Error::LengthMismatch {
                op: "TransposableMask::new",
                expected: rows * cols,
                found: bits.len(),
            });
        }
        let mask = Self { rows, cols, bits };
        mask.validate()?;
        Ok(mask)
    }

    /// Tiles the blocks with the given table patterns, block-row-major order.
    pub fn from_block_patterns(rows: usize, cols: usize, table: &PatternTable, indices: &[usize]) -> Result<Self> {
        check_blockable(rows, cols)?;
        let (br, bc) = (rows / GROUP, cols / GROUP);
        if indices.len() != br * bc {
            return Err(Error::LengthMismatch {
                op: "TransposableMask::from_block_patterns",
                expected: br * bc,
                found: indices.len(),
            });
        }
        let patterns: Vec<Pattern> = indices.iter().map(|&k| table.get(k)).collect();
        Ok(Self::from_patterns_unchecked(rows, cols, &patterns))
    }

    pub(crate) fn from_patterns_unchecked(rows: usize, cols: usize, patterns: &[Pattern]) -> Self {
        let bc = cols / GROUP;
        let mut bits = vec![false; rows * cols];
        for (b, p) in patterns.iter().enumerate() {
            let (r0, c0) = ((b / bc) * GROUP, (b % bc) * GROUP);
            for r in 0..GROUP {
                for c in 0..GROUP {
                    bits[(r0 + r) * cols + c0 + c] = p.bit(r, c);
                }
            }
        }
        Self { rows, cols, bits }
    }

    pub fn validate(&self) -> Result<()> {
        check_blockable(self.rows, self.cols)?;
        for b in 0..self.block_count() {
            let p = self.block_pattern(b);
            if !p.is_transposable() {
                return Err(Error::InvalidMask(format!(
                    "block {b} is {} which does not keep two entries per row and column",
                    p.to_bit_string()
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn block_count(&self) -> usize {
        (self.rows / GROUP) * (self.cols / GROUP)
    }

    /// The 4x4 pattern of block `b` (block-row-major numbering).
    pub fn block_pattern(&self, b: usize) -> Pattern {
        let bc = self.cols / GROUP;
        let (r0, c0) = ((b / bc) * GROUP, (b % bc) * GROUP);
        let mut bits = 0u16;
        for r in 0..GROUP {
            for c in 0..GROUP {
                if self.bits[(r0 + r) * self.cols + c0 + c] {
                    bits |= Pattern::bit_mask(r, c);
                }
            }
        }
        Pattern::from_bits(bits)
    }

    pub fn transpose(&self) -> Self {
        let mut bits = vec![false; self.bits.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                bits[j * self.rows + i] = self.bits[i * self.cols + j];
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            bits,
        }
    }

    /// View as a directional 2:4 mask. Both directions are valid.
    pub fn to_mask24(&self, direction: Direction) -> Mask24 {
        Mask24::new_unchecked(self.rows, self.cols, direction, self.bits.clone())
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

impl BinaryMask for TransposableMask {
    fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
    fn bits(&self) -> &[bool] {
        &self.bits
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparsity::enumerate_patterns;

    #[test]
    fn mask24_rejects_three_in_a_group() {
        let bits = vec![true, true, true, false];
        assert!(matches!(
            Mask24::new(1, 4, Direction::RowWise, bits),
            Err(Error::InvalidMask(_))
        ));
        assert!(matches!(
            Mask24::new(1, 6, Direction::RowWise, vec![true; 6]),
            Err(Error::NotGroupable { .. })
        ));
    }

    #[test]
    fn mask24_transpose_flips_direction() {
        let bits = vec![true, false, true, false, false, true, false, true];
        let m = Mask24::new(2, 4, Direction::RowWise, bits).unwrap();
        let t = m.transpose();
        assert_eq!(t.direction(), Direction::ColWise);
        t.validate().unwrap();
        assert!(t.keeps(2, 0) && t.keeps(3, 1));
    }

    #[test]
    fn transposable_roundtrip_through_patterns() {
        let table = enumerate_patterns();
        let idx = [0, 17, 89, 45];
        let m = TransposableMask::from_block_patterns(8, 8, &table, &idx).unwrap();
        m.validate().unwrap();
        for (b, &k) in idx.iter().enumerate() {
            assert_eq!(m.block_pattern(b), table.get(k));
        }
        m.transpose().validate().unwrap();
        m.to_mask24(Direction::RowWise).validate().unwrap();
        m.to_mask24(Direction::ColWise).validate().unwrap();
        assert_eq!(m.count_ones(), 32);
    }

    #[test]
    fn transposable_rejects_row_wise_only_block() {
        // Rows keep two each, but column 0 keeps four.
        let mut bits = vec![false; 16];
        for r in 0..4 {
            bits[r * 4] = true;
            bits[r * 4 + 1 + (r % 3)] = true;
        }
        assert!(TransposableMask::new(4, 4, bits).is_err());
    }
}
