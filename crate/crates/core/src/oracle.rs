//! Brute-force references for tests and the `verify` command.
//!
//! Written for clarity rather than speed, and sharing no code with the
//! kernels they check. `f64` only.

use alloc::vec;
use alloc::vec::Vec;

use crate::ffn::Activation;
use crate::matrix::{Layout, Matrix};
use crate::sparsity::Direction;

/// Every 4x4 binary block with two ones in each row and column, as its
/// row-major bit string packed most significant bit first, ascending.
pub fn transposable_patterns() -> Vec<u16> {
    let bit = |b: u16, r: usize, c: usize| (b >> (15 - 4 * r - c)) & 1;
    (0..=u16::MAX)
        .filter(|&b| {
            (0..4).all(|r| (0..4).map(|c| bit(b, r, c)).sum::<u16>() == 2)
                && (0..4).all(|c| (0..4).map(|r| bit(b, r, c)).sum::<u16>() == 2)
        })
        .collect()
}

/// The `(br, bc)` 4x4 block of `w`, row-major.
pub fn block(w: &Matrix, br: usize, bc: usize) -> [f64; 16] {
    core::array::from_fn(|k| w.get(4 * br + k / 4, 4 * bc + k % 4))
}

/// `sum |x|` over the positions `pattern` keeps, in ascending position
/// order.
pub fn retained(block: &[f64; 16], pattern: u16) -> f64 {
    let mut s = 0.0;
    for (k, x) in block.iter().enumerate() {
        if (pattern >> (15 - k)) & 1 == 1 {
            s += x.abs();
        }
    }
    s
}

/// Index into `patterns` of the largest retained L1; the lowest index wins
/// ties.
pub fn block_argmax(block: &[f64; 16], patterns: &[u16]) -> usize {
    let mut best = 0;
    for p in 1..patterns.len() {
        if retained(block, patterns[p]) > retained(block, patterns[best]) {
            best = p;
        }
    }
    best
}

/// Best pattern of every block of `w`, block-row-major.
pub fn exhaustive_search(w: &Matrix) -> Vec<u16> {
    let patterns = transposable_patterns();
    let mut out = Vec::new();
    for br in 0..w.rows() / 4 {
        for bc in 0..w.cols() / 4 {
            out.push(patterns[block_argmax(&block(w, br, bc), &patterns)]);
        }
    }
    out
}

/// Largest retained L1 of a block over all transposable patterns.
pub fn optimal_retained(block: &[f64; 16]) -> f64 {
    transposable_patterns()
        .into_iter()
        .map(|p| retained(block, p))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Magnitude 2:4 pruning: per group the two largest magnitudes survive,
/// the earlier position on ties.
pub fn prune_reference(m: &Matrix, direction: Direction) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols(), Layout::RowMajor);
    let (outer, groups) = match direction {
        Direction::RowWise => (m.rows(), m.cols() / 4),
        Direction::ColWise => (m.cols(), m.rows() / 4),
    };
    for o in 0..outer {
        for g in 0..groups {
            let at = |k: usize| match direction {
                Direction::RowWise => (o, 4 * g + k),
                Direction::ColWise => (4 * g + k, o),
            };
            let mut order: Vec<usize> = (0..4).collect();
            order.sort_by(|&a, &b| {
                let (x, y) = (m.get(at(a).0, at(a).1).abs(), m.get(at(b).0, at(b).1).abs());
                y.partial_cmp(&x).unwrap()
            });
            for &k in &order[..2] {
                let (i, j) = at(k);
                out.set(i, j, m.get(i, j));
            }
        }
    }
    out
}

/// `pi_i = min(1, c |x_i|)` with `sum pi = 2`, solving for `c` by
/// bisection. Groups with at most two nonzeros keep their nonzeros and
/// split the remaining mass evenly over the zeros.
pub fn water_fill(x: [f64; 4]) -> [f64; 4] {
    let a = x.map(f64::abs);
    let nz = a.iter().filter(|&&v| v > 0.0).count();
    if nz <= 2 {
        let fill = (2.0 - nz as f64) / (4 - nz) as f64;
        return a.map(|v| if v > 0.0 { 1.0 } else { fill });
    }
    let mass = |c: f64| a.iter().map(|&v| (c * v).min(1.0)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, 1.0);
    while mass(hi) < 2.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) < 2.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    a.map(|v| (hi * v).min(1.0))
}

/// Triple-loop `a * b`, ascending inner index from `+0.0`.
pub fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols(), b.rows());
    Matrix::from_fn(a.rows(), b.cols(), Layout::RowMajor, |i, j| {
        let mut s = 0.0;
        for k in 0..a.cols() {
            s += a.get(i, k) * b.get(k, j);
        }
        s
    })
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / core::f64::consts::SQRT_2))
}

/// `act(x w_in^T + b_in) w_out^T` from scalar loops. GEGLU splits the
/// pre-activation into halves `[a | g]` and returns `gelu(a) g` through
/// `w_out`.
pub fn ffn_forward(activation: Activation, w_in: &Matrix, b_in: &[f64], w_out: &Matrix, x: &Matrix) -> Matrix {
    let mut z = naive_matmul(x, &w_in.to_layout(Layout::ColMajor).transpose());
    for i in 0..z.rows() {
        for (j, &b) in b_in.iter().enumerate() {
            z.set(i, j, z.get(i, j) + b);
        }
    }
    let h = match activation {
        Activation::Relu => z.map(|v| v.max(0.0)),
        Activation::Gelu => z.map(gelu),
        Activation::Geglu => {
            let r = z.cols() / 2;
            Matrix::from_fn(z.rows(), r, Layout::RowMajor, |i, j| {
                gelu(z.get(i, j)) * z.get(i, j + r)
            })
        }
    };
    naive_matmul(&h, &w_out.to_layout(Layout::ColMajor).transpose())
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut out = vec![0.0; x.len()];
    for k in 0..x.len() {
        probe[k] = x[k] + h;
        let up = f(&probe);
        probe[k] = x[k] - h;
        let down = f(&probe);
        probe[k] = x[k];
        out[k] = (up - down) / (2.0 * h);
    }
    out
}

/// `||a - b|| / max(||a||, ||b||)` in the Euclidean norm, 0 when both
/// vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &mut dyn Iterator<Item = f64>| libm::sqrt(v.map(|x| x * x).sum::<f64>());
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut b.iter().copied()));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}
