//! Unbiased 2-of-4 gradient sparsification.
//!
//! Each group keeps exactly two entries. Entry `i` is kept with probability
//! `pi_i = min(1, c |x_i|)` (water-filling so that `sum pi = 2`) and is
//! rescaled by `1 / pi_i`, so the output equals the input in expectation.
//!
//! The joint distribution over the six index pairs comes from systematic
//! sampling: lay the `pi_i` end to end on `[0, 2)`, draw `u ~ U[0, 1)` and
//! keep the entries whose intervals contain `u` and `u + 1`. Since every
//! `pi_i <= 1` the two picks are distinct, and entry `i` is selected with
//! probability exactly `pi_i`.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mask::Mask24;
use super::prune::SparseEstimate;
use super::{check_groupable, group_count, group_members, Direction};
use crate::error::Result;
use crate::matrix::{Matrix, Real};

/// Index pairs in lexicographic order; the order of [`pair_distribution`].
pub const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Water-filled inclusion probabilities for one group.
///
/// With at most two nonzeros every nonzero is kept with certainty and the
/// remaining mass is spread evenly over the zeros.
pub fn inclusion_probabilities<T: Real>(x: [T; 4]) -> [T; 4] {
    let a = x.map(|v| v.abs());
    let nz = a.iter().filter(|&&v| v > T::zero()).count();
    let two = T::from_f64(2.0);
    if nz <= 2 {
        let fill = (two - T::from_f64(nz as f64)) / T::from_f64((4 - nz) as f64);
        return a.map(|v| if v > T::zero() { T::one() } else { fill });
    }
    let total: T = a.iter().copied().sum();
    let mut imax = 0;
    for k in 1..4 {
        if a[k] > a[imax] {
            imax = k;
        }
    }
    if two * a[imax] <= total {
        return a.map(|v| two * v / total);
    }
    // With three or more nonzeros at most one entry can saturate.
    let rest = total - a[imax];
    let mut pi = a.map(|v| v / rest);
    pi[imax] = T::one();
    pi
}

/// Picks the pair selected by systematic sampling at offset `u in [0, 1)`.
pub fn select_pair<T: Real>(pi: &[T; 4], u: T) -> (usize, usize) {
    let locate = |target: T| -> usize {
        let mut acc = T::zero();
        let mut last = 0;
        for (k, &p) in pi.iter().enumerate() {
            if p <= T::zero() {
                continue;
            }
            last = k;
            acc += p;
            if target < acc {
                return k;
            }
        }
        // Rounding can leave the total a hair below 2.
        last
    };
    let first = locate(u);
    let mut second = locate(u + T::one());
    if second == first {
        // Only reachable through rounding at an interval boundary.
        second = (0..4)
            .rev()
            .find(|&k| k != first && pi[k] > T::zero())
            .unwrap_or(if first == 3 { 2 } else { 3 });
    }
    if first < second {
        (first, second)
    } else {
        (second, first)
    }
}

/// Exact probability of each pair in [`PAIRS`] under systematic sampling.
pub fn pair_distribution<T: Real>(pi: &[T; 4]) -> [T; 6] {
    let one = T::one();
    let mut cuts: Vec<T> = vec![T::zero(), one];
    let mut acc = T::zero();
    for &p in pi {
        acc += p;
        if acc > T::zero() && acc < one {
            cuts.push(acc);
        } else if acc > one && acc < T::from_f64(2.0) {
            cuts.push(acc - one);
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    let mut out = [T::zero(); 6];
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        let pair = select_pair(pi, (lo + hi) / T::from_f64(2.0));
        let slot = PAIRS.iter().position(|&q| q == pair).expect("valid pair");
        out[slot] += hi - lo;
    }
    out
}

/// Stochastic 2:4 pruning that is unbiased for every entry.
///
/// One uniform draw per group from a ChaCha stream seeded by `seed`, groups
/// visited in their canonical order.
pub fn mvue_prune<T: Real>(g: &Matrix<T>, direction: Direction, seed: u64) -> Result<SparseEstimate<T>> {
    let (rows, cols) = g.shape();
    check_groupable(rows, cols, direction)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Matrix::zeros(rows, cols, g.layout());
    let mut bits = vec![false; rows * cols];
    for grp in 0..group_count(rows, cols) {
        let members = group_members(rows, cols, direction, grp);
        let x = members.map(|(i, j)| g.get(i, j));
        let pi = inclusion_probabilities(x);
        let u = T::from_f64(rng.random::<f64>());
        let (a, b) = select_pair(&pi, u);
        for k in [a, b] {
            let (i, j) = members[k];
            bits[i * cols + j] = true;
            if x[k] != T::zero() {
                values.set(i, j, x[k] / pi[k]);
            }
        }
    }
    Ok(SparseEstimate {
        values,
        mask: Mask24::new_unchecked(rows, cols, direction, bits),
    })
}
