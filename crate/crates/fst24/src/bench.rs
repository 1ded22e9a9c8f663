//! Microbenchmarks. Each checks the compared paths agree before timing
//! and reports medians; no timing is asserted anywhere.

use std::hint::black_box;
use std::io::Write;
use std::time::Instant;

use anyhow::{ensure, Result};
use fst24_core::ffn::{geglu_gate, Traversal};
use fst24_core::matrix::{matmul, BitPattern, Layout, Matrix, Real};
use fst24_core::sparsity::{
    enumerate_patterns, prune_2of4, retained_l1, transposable_search_conv, transposable_search_greedy, Direction,
};
use fst24_core::spmm::{compress, decompress, dense_flops, sparse_flops, spmm_right};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Weight shapes of the mask-search and spMM benchmarks.
pub const WEIGHT_SHAPES: [(usize, usize); 5] = [(3072, 768), (4096, 1024), (5120, 1280), (1024, 1600), (8192, 2048)];

/// Output widths of the GEGLU benchmark.
pub const GEGLU_WIDTHS: [usize; 7] = [768, 1024, 1280, 1600, 2048, 4096, 8192];

/// Median wall time of `reps` calls, in nanoseconds.
fn median_ns<R>(reps: usize, mut f: impl FnMut() -> R) -> u128 {
    let mut times: Vec<u128> = (0..reps.max(1))
        .map(|_| {
            let start = Instant::now();
            black_box(f());
            start.elapsed().as_nanos()
        })
        .collect();
    times.sort_unstable();
    times[times.len() / 2]
}

fn ratio(num: u128, den: u128) -> f64 {
    num as f64 / den.max(1) as f64
}

fn shape(rows: usize, cols: usize) -> String {
    format!("{rows}x{cols}")
}

#[derive(Debug, Clone, Serialize)]
pub struct SpmmRow {
    pub shape: String,
    pub tokens: usize,
    pub dense_ns: u128,
    pub sparse_ns: u128,
    /// `dense_ns / sparse_ns`.
    pub ratio: f64,
    pub dense_flops: u64,
    pub sparse_flops: u64,
}

/// `X W^T` for a `tokens x cols` input against an `rows x cols` weight,
/// dense versus with `W^T` compressed column-wise.
pub fn bench_spmm<T: Real + BitPattern>(
    shapes: &[(usize, usize)],
    tokens: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<SpmmRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(shapes.len());
    for &(rows, cols) in shapes {
        let x: Matrix<T> = Matrix::random_normal(tokens, cols, Layout::RowMajor, 1.0, &mut rng);
        let wt: Matrix<T> = Matrix::random_normal(cols, rows, Layout::ColMajor, 1.0, &mut rng);
        let c = compress(&prune_2of4(&wt, Direction::ColWise)?)?;
        let masked = decompress(&c)?;
        ensure!(
            spmm_right(&x, &c)?.bitwise_eq(&matmul(&x, &masked)?),
            "sparse and dense products differ for {}",
            shape(rows, cols)
        );
        let dense_ns = median_ns(reps, || matmul(&x, &masked));
        let sparse_ns = median_ns(reps, || spmm_right(&x, &c));
        out.push(SpmmRow {
            shape: shape(rows, cols),
            tokens,
            dense_ns,
            sparse_ns,
            ratio: ratio(dense_ns, sparse_ns),
            dense_flops: dense_flops(tokens, cols, rows),
            sparse_flops: sparse_flops(tokens, cols, rows),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct GegluRow {
    pub shape: String,
    pub row_ns: u128,
    pub col_ns: u128,
    /// `row_ns / col_ns`.
    pub ratio: f64,
}

/// Gating pass over a column-major `tokens x 2 width` intermediate in both
/// visiting orders.
pub fn bench_geglu<T: Real + BitPattern>(
    widths: &[usize],
    tokens: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<GegluRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(widths.len());
    for &width in widths {
        let z: Matrix<T> = Matrix::random_normal(tokens, 2 * width, Layout::ColMajor, 1.0, &mut rng);
        ensure!(
            geglu_gate(&z, Traversal::RowOrder)?.bitwise_eq(&geglu_gate(&z, Traversal::ColOrder)?),
            "traversal orders disagree for {}",
            shape(tokens, width)
        );
        let row_ns = median_ns(reps, || geglu_gate(&z, Traversal::RowOrder));
        let col_ns = median_ns(reps, || geglu_gate(&z, Traversal::ColOrder));
        out.push(GegluRow {
            shape: shape(tokens, width),
            row_ns,
            col_ns,
            ratio: ratio(row_ns, col_ns),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct MaskSearchRow {
    pub shape: String,
    pub conv_ns: u128,
    pub greedy_ns: u128,
    /// `greedy_ns / conv_ns`.
    pub ratio: f64,
    /// Retained L1 of the greedy mask over that of the exhaustive one.
    pub greedy_quality: f64,
}

pub fn bench_masksearch<T: Real>(shapes: &[(usize, usize)], reps: usize, seed: u64) -> Result<Vec<MaskSearchRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table = enumerate_patterns();
    let mut out = Vec::with_capacity(shapes.len());
    for &(rows, cols) in shapes {
        let w: Matrix<T> = Matrix::random_normal(rows, cols, Layout::RowMajor, 1.0, &mut rng);
        let conv = retained_l1(&w, &transposable_search_conv(&w, &table)?)?;
        let greedy = retained_l1(&w, &transposable_search_greedy(&w)?)?;
        ensure!(
            conv >= greedy,
            "exhaustive search retained less than greedy for {}",
            shape(rows, cols)
        );
        let conv_ns = median_ns(reps, || transposable_search_conv(&w, &table));
        let greedy_ns = median_ns(reps, || transposable_search_greedy(&w));
        out.push(MaskSearchRow {
            shape: shape(rows, cols),
            conv_ns,
            greedy_ns,
            ratio: ratio(greedy_ns, conv_ns),
            greedy_quality: greedy.to_f64() / conv.to_f64(),
        });
    }
    Ok(out)
}

pub fn write_csv<W: Write, R: Serialize>(out: W, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geglu_report_columns() {
        let rows = bench_geglu::<f64>(&[8, 16], 12, 1, 0).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "shape,row_ns,col_ns,ratio");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("12x8,"));
    }

    #[test]
    fn small_benches_run_in_both_precisions() {
        let s = bench_spmm::<f32>(&[(8, 16)], 4, 1, 0).unwrap();
        assert_eq!(s[0].sparse_flops * 2, s[0].dense_flops);
        assert!(bench_spmm::<f64>(&[(8, 16)], 4, 1, 0).is_ok());
        let m = bench_masksearch::<f32>(&[(16, 16)], 1, 0).unwrap();
        assert!(m[0].greedy_quality <= 1.0 && m[0].greedy_quality >= 0.5);
    }
}
