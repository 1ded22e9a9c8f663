//! Transposable mask search.
//!
//! `transposable_search_conv` scores every 4x4 block against every pattern
//! of the table (a stride-4 correlation of `|W|` with the 90 pattern
//! kernels) and keeps the argmax. `transposable_search_greedy` is the
//! sort-and-pick 2-approximation baseline.

use alloc::vec::Vec;

use super::mask::{BinaryMask, TransposableMask};
use super::patterns::{Pattern, PatternTable, ROW_PAIRS};
use super::{check_blockable, GROUP};
use crate::error::{Error, Result};
use crate::matrix::{Matrix, Real};

/// Best and runner-up retained L1 of one block over the pattern table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockScore<T = f64> {
    pub best: usize,
    pub best_score: T,
    pub second_score: T,
}

impl<T: Real> BlockScore<T> {
    /// The L1 norm gap between the best and second-best patterns.
    pub fn gap(&self) -> T {
        self.best_score - self.second_score
    }
}

#[inline]
fn block_abs<T: Real>(w: &Matrix<T>, br: usize, bc: usize) -> [T; 16] {
    let mut out = [T::zero(); 16];
    let (r0, c0) = (br * GROUP, bc * GROUP);
    for r in 0..GROUP {
        for c in 0..GROUP {
            out[r * GROUP + c] = w.get(r0 + r, c0 + c).abs();
        }
    }
    out
}

#[inline]
fn record<T: Real>(s: T, index: usize, best: &mut BlockScore<T>) {
    if s > best.best_score {
        best.second_score = best.best_score;
        best.best_score = s;
        best.best = index;
    } else if s > best.second_score {
        best.second_score = s;
    }
}

/// Scores the canonical table through its row walk: partial sums of the
/// first two rows are shared between patterns. Each score adds the same
/// terms in the same order as the per-pattern loop, so results are bitwise
/// identical.
fn score_block_canonical<T: Real>(abs: &[T; 16], walk: &[[u8; 5]]) -> BlockScore<T> {
    let mut out = BlockScore {
        best: 0,
        best_score: T::neg_infinity(),
        second_score: T::neg_infinity(),
    };
    let s0: [T; 6] = core::array::from_fn(|i| {
        let (a, b) = ROW_PAIRS[i];
        T::zero() + abs[a] + abs[b]
    });
    let s1: [T; 36] = core::array::from_fn(|k| {
        let (a, b) = ROW_PAIRS[k % 6];
        s0[k / 6] + abs[4 + a] + abs[4 + b]
    });
    for (index, step) in walk.iter().enumerate() {
        let [node, a2, b2, a3, b3] = step.map(usize::from);
        let s = s1[node] + abs[8 + a2] + abs[8 + b2] + abs[12 + a3] + abs[12 + b3];
        record(s, index, &mut out);
    }
    out
}

#[inline]
fn score_block<T: Real>(abs: &[T; 16], table: &PatternTable) -> BlockScore<T> {
    if let Some(walk) = table.walk() {
        return score_block_canonical(abs, walk);
    }
    let mut best = 0;
    let mut best_score = T::neg_infinity();
    let mut second_score = T::neg_infinity();
    for p in 0..table.len() {
        let mut s = T::zero();
        for &k in table.positions_of(p) {
            s += abs[k as usize];
        }
        if s > best_score {
            second_score = best_score;
            best_score = s;
            best = p;
        } else if s > second_score {
            second_score = s;
        }
    }
    BlockScore {
        best,
        best_score,
        second_score,
    }
}

/// Per-block scores in block-row-major order.
pub fn block_scores<T: Real>(w: &Matrix<T>, table: &PatternTable) -> Result<Vec<BlockScore<T>>> {
    check_blockable(w.rows(), w.cols())?;
    if table.is_empty() {
        return Err(Error::InvalidMask("empty pattern table".into()));
    }
    let (nbr, nbc) = (w.rows() / GROUP, w.cols() / GROUP);
    let mut out = Vec::with_capacity(nbr * nbc);
    for br in 0..nbr {
        for bc in 0..nbc {
            out.push(score_block(&block_abs(w, br, bc), table));
        }
    }
    Ok(out)
}

/// Exhaustive pattern search: each block takes the table pattern retaining
/// the largest L1 norm, lowest pattern index on ties.
pub fn transposable_search_conv<T: Real>(w: &Matrix<T>, table: &PatternTable) -> Result<TransposableMask> {
    let scores = block_scores(w, table)?;
    let patterns: Vec<Pattern> = scores.iter().map(|s| table.get(s.best)).collect();
    Ok(TransposableMask::from_patterns_unchecked(w.rows(), w.cols(), &patterns))
}

/// Conv search over a matrix that changes a little between calls.
///
/// A block is rescored only when its weights have moved far enough from
/// the values it was last scored at to possibly change the winner. Moving
/// by `D` in L1 shifts every pattern score by at most `D`, so a winner
/// whose gap exceeds `2D` plus a rounding allowance cannot be overtaken.
/// Results equal [`transposable_search_conv`] exactly.
#[derive(Debug, Clone)]
pub struct WarmSearch<T: Real = f64> {
    table: PatternTable,
    rows: usize,
    cols: usize,
    anchors: Vec<[T; 16]>,
    scores: Vec<BlockScore<T>>,
    rescored: usize,
}

impl<T: Real> WarmSearch<T> {
    pub fn new(w: &Matrix<T>, table: &PatternTable) -> Result<Self> {
        let scores = block_scores(w, table)?;
        let (nbr, nbc) = (w.rows() / GROUP, w.cols() / GROUP);
        let mut anchors = Vec::with_capacity(scores.len());
        for br in 0..nbr {
            for bc in 0..nbc {
                anchors.push(block_abs(w, br, bc));
            }
        }
        Ok(Self {
            table: table.clone(),
            rows: w.rows(),
            cols: w.cols(),
            rescored: scores.len(),
            anchors,
            scores,
        })
    }

    /// Searches `w`, which must have the shape given to [`WarmSearch::new`].
    pub fn update(&mut self, w: &Matrix<T>) -> Result<TransposableMask> {
        if w.shape() != (self.rows, self.cols) {
            return Err(Error::ShapeMismatch {
                op: "warm search",
                left: (self.rows, self.cols),
                right: w.shape(),
            });
        }
        let nbc = self.cols / GROUP;
        let slack = T::from_f64(64.0) * T::epsilon();
        let two = T::from_f64(2.0);
        self.rescored = 0;
        for (b, (anchor, score)) in self.anchors.iter_mut().zip(&mut self.scores).enumerate() {
            let abs = block_abs(w, b / nbc, b % nbc);
            let (mut moved, mut before, mut after) = (T::zero(), T::zero(), T::zero());
            for (&x, &y) in anchor.iter().zip(&abs) {
                moved += (y - x).abs();
                before += x;
                after += y;
            }
            // False for NaN and for ties, which always get rescored.
            if score.gap() > two * moved + slack * (before + after) {
                continue;
            }
            *score = score_block(&abs, &self.table);
            *anchor = abs;
            self.rescored += 1;
        }
        Ok(self.mask())
    }

    pub fn mask(&self) -> TransposableMask {
        let patterns: Vec<Pattern> = self.scores.iter().map(|s| self.table.get(s.best)).collect();
        TransposableMask::from_patterns_unchecked(self.rows, self.cols, &patterns)
    }

    /// Blocks scored by the last call.
    pub fn rescored(&self) -> usize {
        self.rescored
    }
}

fn greedy_block<T: Real>(abs: &[T; 16]) -> Pattern {
    let mut order: [usize; 16] = core::array::from_fn(|k| k);
    // Stable, so equal magnitudes keep ascending position order.
    order.sort_by(|&a, &b| abs[b].partial_cmp(&abs[a]).unwrap_or(core::cmp::Ordering::Equal));

    let mut row_n = [0u8; 4];
    let mut col_n = [0u8; 4];
    let mut bits = 0u16;
    let mut picked = 0;
    for &k in &order {
        let (r, c) = (k / GROUP, k % GROUP);
        if row_n[r] < 2 && col_n[c] < 2 {
            bits |= Pattern::bit_mask(r, c);
            row_n[r] += 1;
            col_n[c] += 1;
            picked += 1;
            if picked == 8 {
                return Pattern::from_bits(bits);
            }
        }
    }

    // Greedy can stall at 7 picks: one row and one column short by one,
    // meeting at an already picked cell. Exchange one pick (i, j) for
    // (r, j) and (i, c), choosing the exchange with the largest net gain.
    let r = (0..GROUP).find(|&r| row_n[r] < 2).expect("stalled row");
    let c = (0..GROUP).find(|&c| col_n[c] < 2).expect("stalled column");
    let on = |bits: u16, i: usize, j: usize| bits & Pattern::bit_mask(i, j) != 0;
    let mut swap: Option<(usize, usize, T)> = None;
    for i in (0..GROUP).filter(|&i| i != r) {
        for j in (0..GROUP).filter(|&j| j != c) {
            if on(bits, i, j) && !on(bits, r, j) && !on(bits, i, c) {
                let gain = abs[r * GROUP + j] + abs[i * GROUP + c] - abs[i * GROUP + j];
                if swap.is_none_or(|(_, _, g)| gain > g) {
                    swap = Some((i, j, gain));
                }
            }
        }
    }
    let (i, j, _) = swap.expect("a stalled greedy selection always admits an exchange");
    bits &= !Pattern::bit_mask(i, j);
    bits |= Pattern::bit_mask(r, j) | Pattern::bit_mask(i, c);
    Pattern::from_bits(bits)
}

/// Sort-and-pick baseline: per block, takes elements in decreasing
/// magnitude while their block row and block column have fewer than two
/// picks.
pub fn transposable_search_greedy<T: Real>(w: &Matrix<T>) -> Result<TransposableMask> {
    check_blockable(w.rows(), w.cols())?;
    let (nbr, nbc) = (w.rows() / GROUP, w.cols() / GROUP);
    let mut patterns = Vec::with_capacity(nbr * nbc);
    for br in 0..nbr {
        for bc in 0..nbc {
            patterns.push(greedy_block(&block_abs(w, br, bc)));
        }
    }
    Ok(TransposableMask::from_patterns_unchecked(w.rows(), w.cols(), &patterns))
}

/// `sum |w|` over the positions the mask keeps.
pub fn retained_l1<T: Real, M: BinaryMask + ?Sized>(w: &Matrix<T>, mask: &M) -> Result<T> {
    if w.shape() != mask.shape() {
        return Err(Error::ShapeMismatch {
            op: "retained_l1",
            left: w.shape(),
            right: mask.shape(),
        });
    }
    let mut s = T::zero();
    for i in 0..w.rows() {
        for j in 0..w.cols() {
            if mask.keeps(i, j) {
                s += w.get(i, j).abs();
            }
        }
    }
    Ok(s)
}
