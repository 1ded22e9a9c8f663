//! 2:4 pruning functions, transposable mask search and the unbiased
//! gradient sparsifier.

mod mask;
mod mvue;
mod patterns;
mod prune;
mod search;

pub use mask::{BinaryMask, Mask24, TransposableMask};
pub use mvue::{inclusion_probabilities, mvue_prune, pair_distribution, select_pair, PAIRS};
pub use patterns::{enumerate_patterns, Pattern, PatternTable, PATTERN_COUNT};
pub use prune::{apply_mask, prune_2of4, SparseEstimate};
pub use search::{
    block_scores, retained_l1, transposable_search_conv, transposable_search_greedy, BlockScore, WarmSearch,
};

use crate::error::{Error, Result};

/// Group width of the 2:4 pattern.
pub const GROUP: usize = 4;
/// Entries kept per group.
pub const KEEP: usize = 2;

/// Axis along which consecutive entries form a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Direction {
    /// Groups of 4 consecutive entries within a row.
    RowWise,
    /// Groups of 4 consecutive entries within a column.
    ColWise,
}

impl Direction {
    pub fn transposed(self) -> Self {
        match self {
            Direction::RowWise => Direction::ColWise,
            Direction::ColWise => Direction::RowWise,
        }
    }
}

pub(crate) fn check_groupable(rows: usize, cols: usize, direction: Direction) -> Result<()> {
    let (what, len) = match direction {
        Direction::RowWise => ("column", cols),
        Direction::ColWise => ("row", rows),
    };
    if len % GROUP != 0 {
        return Err(Error::NotGroupable {
            what,
            len,
            group: GROUP,
        });
    }
    Ok(())
}

pub(crate) fn check_blockable(rows: usize, cols: usize) -> Result<()> {
    check_groupable(rows, cols, Direction::ColWise)?;
    check_groupable(rows, cols, Direction::RowWise)
}

/// Number of groups in a `rows x cols` matrix grouped along `direction`.
pub fn group_count(rows: usize, cols: usize) -> usize {
    rows * cols / GROUP
}

/// Logical coordinates of the four members of group `g`.
///
/// Row-wise groups are numbered row by row; column-wise groups column by
/// column. This order is also the storage order of compressed operands.
#[inline]
pub fn group_members(rows: usize, cols: usize, direction: Direction, g: usize) -> [(usize, usize); 4] {
    match direction {
        Direction::RowWise => {
            let per_row = cols / GROUP;
            let (i, j0) = (g / per_row, (g % per_row) * GROUP);
            [(i, j0), (i, j0 + 1), (i, j0 + 2), (i, j0 + 3)]
        }
        Direction::ColWise => {
            let per_col = rows / GROUP;
            let (j, i0) = (g / per_col, (g % per_col) * GROUP);
            [(i0, j), (i0 + 1, j), (i0 + 2, j), (i0 + 3, j)]
        }
    }
}
