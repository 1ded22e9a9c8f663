use alloc::vec;
use alloc::vec::Vec;

use super::adam::check_len;
use crate::error::{Error, Result};
use crate::matrix::{Matrix, Real};
use crate::sparsity::{block_scores, transposable_search_conv, BinaryMask, PatternTable, GROUP};

/// Fraction of mask entries that differ: `|m_curr - m_prev|_1 / D`.
pub fn flip_rate(m_prev: &[bool], m_curr: &[bool]) -> Result<f64> {
    check_len("flip_rate", m_prev.len(), m_curr.len())?;
    if m_prev.is_empty() {
        return Ok(0.0);
    }
    let flips = m_prev.iter().zip(m_curr).filter(|(a, b)| a != b).count();
    Ok(flips as f64 / m_prev.len() as f64)
}

/// Per-step flip rates plus per-block flip counts and L1 norm gaps.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FlipTrace {
    pub rates: Vec<f64>,
    pub block_flips: Vec<u64>,
    pub block_gaps: Vec<f64>,
}

/// Follows the mask of one weight matrix across steps and counts flipped
/// bits per 4x4 block.
#[derive(Debug, Clone)]
pub struct BlockFlipTracker {
    rows: usize,
    cols: usize,
    prev: Option<Vec<bool>>,
    flips: Vec<u64>,
}

impl BlockFlipTracker {
    pub fn new(rows: usize, cols: usize) -> Self {
        BlockFlipTracker {
            rows,
            cols,
            prev: None,
            flips: vec![0; (rows / GROUP) * (cols / GROUP)],
        }
    }

    /// Records `mask` and returns the flip rate against the previous one,
    /// or `None` on the first observation.
    pub fn observe<M: BinaryMask + ?Sized>(&mut self, mask: &M) -> Result<Option<f64>> {
        if mask.shape() != (self.rows, self.cols) {
            return Err(Error::ShapeMismatch {
                op: "BlockFlipTracker",
                left: (self.rows, self.cols),
                right: mask.shape(),
            });
        }
        let bits = mask.bits();
        let rate = match &self.prev {
            None => None,
            Some(prev) => {
                let nbc = self.cols / GROUP;
                for (k, (a, b)) in prev.iter().zip(bits).enumerate() {
                    if a != b {
                        let (i, j) = (k / self.cols, k % self.cols);
                        self.flips[(i / GROUP) * nbc + j / GROUP] += 1;
                    }
                }
                Some(flip_rate(prev, bits)?)
            }
        };
        self.prev = Some(bits.to_vec());
        Ok(rate)
    }

    /// Cumulative flipped bits per block, block-row-major.
    pub fn block_flips(&self) -> &[u64] {
        &self.flips
    }
}

/// Per-block statistics over a weight history.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockStats<T = f64> {
    /// Cumulative flipped mask bits between consecutive snapshots.
    pub flips: Vec<u64>,
    /// Best minus second-best retained L1 on the last snapshot.
    pub gaps: Vec<T>,
}

/// Block flip counts and L1 norm gaps of a sequence of weight snapshots,
/// with masks from the exhaustive transposable search.
pub fn block_flip_stats<T: Real>(history: &[Matrix<T>], table: &PatternTable) -> Result<BlockStats<T>> {
    if history.len() < 2 {
        return Err(Error::InvalidConfig(
            "block statistics need at least two snapshots".into(),
        ));
    }
    let (rows, cols) = history[0].shape();
    let mut tracker = BlockFlipTracker::new(rows, cols);
    for w in history {
        tracker.observe(&transposable_search_conv(w, table)?)?;
    }
    let gaps = block_scores(&history[history.len() - 1], table)?
        .iter()
        .map(|s| s.gap())
        .collect();
    Ok(BlockStats {
        flips: tracker.flips,
        gaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Layout;
    use crate::sparsity::enumerate_patterns;

    #[test]
    fn swapped_group_is_quarter() {
        let a = [true, true, false, false, true, false, true, false];
        let b = [false, false, true, true, true, false, true, false];
        assert_eq!(flip_rate(&a, &b).unwrap(), 0.5);
        let c = [true, false, true, false, true, false, true, false];
        assert_eq!(flip_rate(&a, &c).unwrap(), 0.25);
        assert_eq!(flip_rate(&a, &a).unwrap(), 0.0);
        assert!(flip_rate(&a, &a[..4]).is_err());
    }

    #[test]
    fn constant_weights_never_flip() {
        let w = Matrix::from_fn(8, 8, Layout::RowMajor, |i, j| ((i * 8 + j) % 7) as f64 - 3.0);
        let stats = block_flip_stats(&[w.clone(), w.clone(), w], &enumerate_patterns()).unwrap();
        assert!(stats.flips.iter().all(|&f| f == 0));
        assert!(stats.gaps.iter().all(|&g| g >= 0.0));
    }

    #[test]
    fn gap_of_dominant_pattern() {
        let table = enumerate_patterns();
        let best = table.get(17);
        // The runner-up differs from the best by one 2x2 swap and keeps 6 of
        // its 8 positions.
        let w = Matrix::from_fn(4, 4, Layout::RowMajor, |i, j| if best.bit(i, j) { 2.5 } else { 0.0 });
        let w2 = w.scale(1.0);
        let stats = block_flip_stats(&[w, w2], &table).unwrap();
        assert_eq!(stats.gaps, vec![5.0]);
    }

    #[test]
    fn tracker_counts_per_block() {
        let table = enumerate_patterns();
        let a = Matrix::from_fn(4, 8, Layout::RowMajor, |i, j| {
            if table.get(0).bit(i, j % 4) {
                1.0
            } else {
                0.1
            }
        });
        let b = Matrix::from_fn(4, 8, Layout::RowMajor, |i, j| {
            let p = if j < 4 { table.get(0) } else { table.get(89) };
            if p.bit(i, j % 4) {
                1.0
            } else {
                0.1
            }
        });
        let stats = block_flip_stats(&[a, b], &table).unwrap();
        // Pattern 0 and pattern 89 are complements.
        assert_eq!(stats.flips, vec![0, 16]);
        assert!(block_flip_stats(&stats_single(), &table).is_err());
    }

    fn stats_single() -> Vec<Matrix> {
        vec![Matrix::zeros(4, 4, Layout::RowMajor)]
    }
}
