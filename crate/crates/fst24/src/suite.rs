//! Property checks against independent references, shared by the `verify`
//! command and the acceptance test.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Result};
use fst24_core::ffn::{
    concat_rows, fst_backward, fst_forward, geglu_backward, geglu_forward, gelu, gelu_grad, Activation, FfnLayer,
    GradMode, LayerMasks, Traversal, WeightMask,
};
use fst24_core::matrix::{Layout, Matrix};
use fst24_core::optim::{
    block_flip_stats, flip_rate, flip_ratio, masked_decay_gradient, sampling_window, sgd_step, srste_weight_decay,
    LambdaReport, OptimizerState,
};
use fst24_core::oracle;
use fst24_core::sparsity::{
    apply_mask, enumerate_patterns, inclusion_probabilities, mvue_prune, pair_distribution, prune_2of4, retained_l1,
    select_pair, transposable_search_conv, transposable_search_greedy, BinaryMask, Direction, Mask24, SparseEstimate,
    TransposableMask, PAIRS, PATTERN_COUNT,
};
use fst24_core::spmm::{compress, decompress, layout_plan, spmm, spmm_right, LayoutPlan, LayoutQuery, Operand};
use fst24_core::trainer::{
    make_task, run_steps_on, search_lambda_on, BatchStream, RunArtifacts, Targets, TaskKind, TrainConfig, Variant,
};
use fst24_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::patterns::render_patterns;

/// Byte-exact expected pattern file.
pub const GOLDEN_PATTERNS: &str = include_str!("../tests/golden/patterns.txt");

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl Check {
    pub fn line(&self) -> String {
        format!(
            "{} {}: {} [{:.2}s]",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

/// Runs `f`, failing the check on error or when it takes longer than
/// `limit`.
fn timed(name: &str, limit: Option<Duration>, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    let start = Instant::now();
    let result = f();
    let elapsed = start.elapsed();
    finish(name, limit, elapsed, result)
}

fn finish(name: &str, limit: Option<Duration>, elapsed: Duration, result: Result<(bool, String)>) -> Check {
    let (mut passed, mut detail) = result.unwrap_or_else(|e| (false, format!("error: {e:#}")));
    if let Some(limit) = limit {
        if elapsed > limit {
            passed = false;
            let _ = write!(detail, "; exceeded {}s limit", limit.as_secs());
        }
    }
    Check {
        name: name.to_string(),
        passed,
        detail,
        elapsed,
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::random_normal(rows, cols, Layout::RowMajor, std, rng)
}

fn flat(m: &Matrix) -> Vec<f64> {
    m.to_layout(Layout::RowMajor).into_data()
}

fn with_data(like: &Matrix, data: &[f64]) -> Matrix {
    Matrix::from_fn(like.rows(), like.cols(), Layout::RowMajor, |i, j| {
        data[i * like.cols() + j]
    })
}

fn dot(a: &Matrix, b: &Matrix) -> f64 {
    let mut s = 0.0;
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            s += a.get(i, j) * b.get(i, j);
        }
    }
    s
}

fn identity(n: usize) -> Matrix {
    Matrix::from_fn(n, n, Layout::RowMajor, |i, j| if i == j { 1.0 } else { 0.0 })
}

fn block_retained(w: &Matrix, mask: &TransposableMask, br: usize, bc: usize) -> f64 {
    let b = oracle::block(w, br, bc);
    (0..16)
        .filter(|&k| mask.keeps(4 * br + k / 4, 4 * bc + k % 4))
        .map(|k| b[k].abs())
        .sum()
}

/// Pattern table: 90 entries, row and column sums 2, closed under
/// transpose, file rendering equal to the golden bytes.
pub fn pattern_table() -> Check {
    timed("pattern table", Some(Duration::from_secs(1)), || {
        let table = enumerate_patterns();
        let sums = table
            .patterns()
            .iter()
            .all(|p| (0..4).all(|k| p.row_sum(k) == 2 && p.col_sum(k) == 2));
        let closed = table.patterns().iter().all(|p| table.contains(p.transpose()));
        let brute: Vec<u16> = oracle::transposable_patterns();
        let same = table.patterns().iter().map(|p| p.bits()).eq(brute.iter().copied());
        let golden = render_patterns(&table) == GOLDEN_PATTERNS;
        Ok((
            table.len() == PATTERN_COUNT && sums && closed && same && golden,
            format!(
                "{} patterns, sums ok {sums}, transpose-closed {closed}, brute force match {same}, golden match {golden}",
                table.len()
            ),
        ))
    })
}

/// Mask search on `n` random 16x16 matrices: exhaustive argmax equality,
/// and the greedy half-optimality and dominance bounds.
pub fn search_corpus(n: usize) -> [Check; 2] {
    let mut r = rng(2);
    let corpus: Vec<Matrix> = (0..n).map(|_| gaussian(16, 16, 1.0, &mut r)).collect();
    let table = enumerate_patterns();
    let equal = timed(
        "conv search equals exhaustive argmax",
        Some(Duration::from_secs(10)),
        || {
            let mut mismatches = 0;
            for w in &corpus {
                let mask = transposable_search_conv(w, &table)?;
                let expected = oracle::exhaustive_search(w);
                mismatches += expected
                    .iter()
                    .enumerate()
                    .filter(|&(b, &bits)| mask.block_pattern(b).bits() != bits)
                    .count();
            }
            Ok((
                mismatches == 0,
                format!("{} matrices, {mismatches} mismatched blocks", corpus.len()),
            ))
        },
    );
    let bounds = timed("greedy >= 1/2 optimal and conv >= greedy", None, || {
        let (mut half, mut dominance, mut worst) = (0, 0, f64::INFINITY);
        for w in &corpus {
            let conv = transposable_search_conv(w, &table)?;
            let greedy = transposable_search_greedy(w)?;
            for br in 0..4 {
                for bc in 0..4 {
                    let opt = oracle::optimal_retained(&oracle::block(w, br, bc));
                    let g = block_retained(w, &greedy, br, bc);
                    let c = block_retained(w, &conv, br, bc);
                    half += usize::from(g < 0.5 * opt);
                    dominance += usize::from(c < g);
                    worst = worst.min(g / opt);
                }
            }
        }
        Ok((
            half == 0 && dominance == 0,
            format!(
                "{} blocks, {half} below half, {dominance} with conv < greedy, worst greedy/opt {worst:.4}",
                16 * corpus.len()
            ),
        ))
    });
    [equal, bounds]
}

/// Exact pair-distribution marginals against water filling, and a Monte
/// Carlo mean of the stochastic weight gradient of a 4x4 layer.
pub fn mvue_unbiased(groups: usize, seeds: u64) -> Check {
    timed("MVUE unbiasedness", Some(Duration::from_secs(60)), || {
        let mut r = rng(4);
        let mut worst: f64 = 0.0;
        for _ in 0..groups {
            let mut x: [f64; 4] = std::array::from_fn(|_| r.random_range(-1.0..1.0));
            match r.random_range(0..4) {
                0 => x[r.random_range(0..4)] *= 30.0,
                1 => x[r.random_range(0..4)] = 0.0,
                _ => {}
            }
            let pairs = pair_distribution(&inclusion_probabilities(x));
            let pi = oracle::water_fill(x);
            for (k, &p) in pi.iter().enumerate() {
                let marginal: f64 = PAIRS
                    .iter()
                    .zip(&pairs)
                    .filter(|((a, b), _)| *a == k || *b == k)
                    .map(|(_, q)| q)
                    .sum();
                worst = worst.max((marginal - p).abs());
            }
        }
        let (outliers, entries) = monte_carlo_layer(seeds)?;
        Ok((
            worst <= 1e-12 && outliers == 0,
            format!(
                "{groups} groups, max marginal error {worst:.2e}; {seeds} seeds, {outliers}/{entries} gradient entries beyond 4 SE"
            ),
        ))
    })
}

fn monte_carlo_layer(seeds: u64) -> Result<(usize, usize)> {
    let mut r = rng(44);
    let layer: FfnLayer = FfnLayer::random(Activation::Relu, 4, 4, &mut r)?;
    let table = enumerate_patterns();
    let masks = LayerMasks {
        w_in: WeightMask::Transposable(transposable_search_conv(&layer.w_in, &table)?),
        w_out: WeightMask::Transposable(transposable_search_conv(&layer.w_out, &table)?),
    };
    let x = gaussian(4, 4, 1.0, &mut r);
    let up = gaussian(4, 4, 1.0, &mut r);
    let bundle = fst_forward(&layer, &x, &masks)?;
    let exact = fst_backward(&bundle, &up, GradMode::Exact)?;
    let truth: Vec<f64> = exact.w_in.data().iter().chain(exact.w_out.data()).copied().collect();
    let mut sum = vec![0.0; truth.len()];
    let mut sq = vec![0.0; truth.len()];
    for seed in 0..seeds {
        let g = fst_backward(&bundle, &up, GradMode::Mvue { seed })?;
        for (k, v) in g.w_in.data().iter().chain(g.w_out.data()).enumerate() {
            sum[k] += v;
            sq[k] += v * v;
        }
    }
    let n = seeds as f64;
    let outliers = (0..truth.len())
        .filter(|&k| {
            let mean = sum[k] / n;
            let se = ((sq[k] / n - mean * mean).max(0.0) / n).sqrt();
            // Entries kept with certainty have zero variance; the slack
            // covers rounding in the running sums.
            (mean - truth[k]).abs() > 4.0 * se + 1e-9 * truth[k].abs().max(1.0)
        })
        .count();
    Ok((outliers, truth.len()))
}

fn random_sparse(rows: usize, cols: usize, direction: Direction, r: &mut ChaCha8Rng) -> Result<SparseEstimate> {
    let layout = if r.random() { Layout::RowMajor } else { Layout::ColMajor };
    let dense: Matrix = Matrix::random_normal(rows, cols, layout, 1.0, r);
    let mut bits = vec![false; rows * cols];
    let (outer, groups) = match direction {
        Direction::RowWise => (rows, cols / 4),
        Direction::ColWise => (cols, rows / 4),
    };
    for o in 0..outer {
        for g in 0..groups {
            let (p, q) = PAIRS[r.random_range(0..6)];
            for k in [p, q] {
                let (i, j) = match direction {
                    Direction::RowWise => (o, 4 * g + k),
                    Direction::ColWise => (4 * g + k, o),
                };
                bits[i * cols + j] = true;
            }
        }
    }
    let mask = Mask24::new(rows, cols, direction, bits)?;
    let values = apply_mask(&dense, &mask)?;
    Ok(SparseEstimate { values, mask })
}

/// Compressed products equal the naive product of the decompressed operand
/// bit for bit; compression round-trips.
pub fn spmm_exact(cases: usize) -> Check {
    timed("spMM bitwise equality and roundtrip", None, || {
        let mut r = rng(5);
        let (mut wrong, mut roundtrip) = (0, 0);
        for case in 0..cases {
            let m = 4 * r.random_range(1..9);
            let k = 4 * r.random_range(1..9);
            let n = r.random_range(1..24);
            let layout = if case % 2 == 0 {
                Layout::RowMajor
            } else {
                Layout::ColMajor
            };
            let a = random_sparse(m, k, Direction::RowWise, &mut r)?;
            let b: Matrix = Matrix::random_normal(k, n, layout, 1.0, &mut r);
            let ca = compress(&a)?;
            let da = decompress(&ca)?;
            wrong += usize::from(!spmm(&ca, &b)?.bitwise_eq(&oracle::naive_matmul(&da, &b)));
            let back = compress(&SparseEstimate {
                values: da.clone(),
                mask: ca.mask()?,
            })?;
            roundtrip += usize::from(back != ca || !da.bitwise_eq(&a.values));

            let c: Matrix = Matrix::random_normal(n, k, layout, 1.0, &mut r);
            let bt = random_sparse(k, m, Direction::ColWise, &mut r)?;
            let cb = compress(&bt)?;
            let db = decompress(&cb)?;
            wrong += usize::from(!spmm_right(&c, &cb)?.bitwise_eq(&oracle::naive_matmul(&c, &db)));
            roundtrip += usize::from(!db.bitwise_eq(&bt.values));
        }
        Ok((
            wrong == 0 && roundtrip == 0,
            format!("{cases} cases x 2 kernels, {wrong} product mismatches, {roundtrip} roundtrip failures"),
        ))
    })
}

/// The product-layout planner against the 16 cells of the reference table.
pub fn layout_table() -> Check {
    timed("layout planner table", None, || {
        use LayoutPlan::*;
        use Operand::*;
        let expected = [
            [Incompatible, Incompatible, OutRowMajor, OutRowMajor],
            [Incompatible, Incompatible, Incompatible, Incompatible],
            [Incompatible, OutColMajor, OutRowMajor, OutRowMajor],
            [Incompatible, OutColMajor, OutRowMajor, OutRowMajor],
        ];
        let mut wrong = Vec::new();
        for (li, left) in [S, ST, R, C].into_iter().enumerate() {
            for (ri, right) in [S, ST, R, C].into_iter().enumerate() {
                if layout_plan(LayoutQuery { left, right }) != expected[li][ri] {
                    wrong.push(format!("({left:?},{right:?})"));
                }
            }
        }
        Ok((wrong.is_empty(), format!("16 cells, mismatches: [{}]", wrong.join(" "))))
    })
}

const FD_STEP: f64 = 1e-6;
const FD_TOL: f64 = 1e-5;

/// Worst relative error of all GEGLU gradients on one random instance.
fn geglu_fd(seed: u64) -> Result<f64> {
    let mut r = rng(seed);
    let (p, q, n) = (4, 8, 4);
    let x = gaussian(p, q, 1.0, &mut r);
    let u = gaussian(n, q, 0.5, &mut r);
    let v = gaussian(n, q, 0.5, &mut r);
    let b: Vec<f64> = (0..n).map(|_| r.random_range(-0.5..0.5)).collect();
    let c: Vec<f64> = (0..n).map(|_| r.random_range(-0.5..0.5)).collect();
    let up = gaussian(p, n, 1.0, &mut r);
    let g = geglu_backward(&x, &u, &v, &b, &c, &up)?;
    let eye = identity(n);
    let loss = |x: &Matrix, u: &Matrix, v: &Matrix, b: &[f64], c: &[f64]| {
        let bias: Vec<f64> = b.iter().chain(c).copied().collect();
        let w = concat_rows(u, v).expect("same shapes");
        dot(&oracle::ffn_forward(Activation::Geglu, &w, &bias, &eye, x), &up)
    };
    let errs = [
        oracle::relative_error(
            &oracle::central_difference(&mut |d| loss(&with_data(&x, d), &u, &v, &b, &c), &flat(&x), FD_STEP),
            &flat(&g.x),
        ),
        oracle::relative_error(
            &oracle::central_difference(&mut |d| loss(&x, &with_data(&u, d), &v, &b, &c), &flat(&u), FD_STEP),
            &flat(&g.u),
        ),
        oracle::relative_error(
            &oracle::central_difference(&mut |d| loss(&x, &u, &with_data(&v, d), &b, &c), &flat(&v), FD_STEP),
            &flat(&g.v),
        ),
        oracle::relative_error(
            &oracle::central_difference(&mut |d| loss(&x, &u, &v, d, &c), &b, FD_STEP),
            &g.b,
        ),
        oracle::relative_error(
            &oracle::central_difference(&mut |d| loss(&x, &u, &v, &b, d), &c, FD_STEP),
            &g.c,
        ),
    ];
    Ok(errs.into_iter().fold(0.0, f64::max))
}

/// Worst relative error of the sparse layer's exact-product gradients
/// against central differences of the dense reference at the masked
/// weights.
fn fst_layer_fd(activation: Activation, seed: u64) -> Result<f64> {
    let mut r = rng(seed);
    let (p, d, d_ff) = (4, 8, 8);
    let mut layer: FfnLayer = FfnLayer::random(activation, d, d_ff, &mut r)?;
    layer.b_in = (0..layer.b_in.len()).map(|_| r.random_range(-0.5..0.5)).collect();
    let table = enumerate_patterns();
    let m_in = transposable_search_conv(&layer.w_in, &table)?;
    let m_out = transposable_search_conv(&layer.w_out, &table)?;
    let w_in = apply_mask(&layer.w_in, &m_in)?;
    let w_out = apply_mask(&layer.w_out, &m_out)?;
    let masks = LayerMasks {
        w_in: WeightMask::Transposable(m_in),
        w_out: WeightMask::Transposable(m_out),
    };
    let x = gaussian(p, d, 1.0, &mut r);
    let up = gaussian(p, d, 1.0, &mut r);
    let bundle = fst_forward(&layer, &x, &masks)?;
    let g = fst_backward(&bundle, &up, GradMode::Exact)?;
    let b = &layer.b_in;
    let loss = |w_in: &Matrix, b: &[f64], w_out: &Matrix, x: &Matrix| {
        dot(&oracle::ffn_forward(activation, w_in, b, w_out, x), &up)
    };
    let errs = [
        oracle::relative_error(
            &oracle::central_difference(
                &mut |v| loss(&with_data(&w_in, v), b, &w_out, &x),
                &flat(&w_in),
                FD_STEP,
            ),
            &flat(&g.w_in),
        ),
        oracle::relative_error(
            &oracle::central_difference(&mut |v| loss(&w_in, v, &w_out, &x), b, FD_STEP),
            &g.b_in,
        ),
        oracle::relative_error(
            &oracle::central_difference(
                &mut |v| loss(&w_in, b, &with_data(&w_out, v), &x),
                &flat(&w_out),
                FD_STEP,
            ),
            &flat(&g.w_out),
        ),
        oracle::relative_error(
            &oracle::central_difference(&mut |v| loss(&w_in, b, &w_out, &with_data(&x, v)), &flat(&x), FD_STEP),
            &flat(&g.x),
        ),
    ];
    Ok(errs.into_iter().fold(0.0, f64::max))
}

/// Finite-difference checks of the GEGLU gradients and of the sparse
/// layer with exact weight products.
pub fn gradient_checks() -> Check {
    timed("gradient finite-difference checks", None, || {
        let mut errors = Vec::new();
        for seed in 0..10 {
            errors.push(geglu_fd(700 + seed)?);
        }
        for seed in 0..7 {
            for activation in [Activation::Relu, Activation::Gelu, Activation::Geglu] {
                errors.push(fst_layer_fd(activation, 800 + seed)?);
            }
        }
        let worst = errors.iter().copied().fold(0.0, f64::max);
        let bad = errors.iter().filter(|&&e| e.is_nan() || e >= FD_TOL).count();
        Ok((
            bad == 0,
            format!(
                "{} instances, worst relative error {worst:.2e}, {bad} above {FD_TOL:e}",
                errors.len()
            ),
        ))
    })
}

const TWO_MASK: [bool; 2] = [true, false];
const TWO_TARGET: [f64; 2] = [0.75, -1.5];

fn two_grad(w: &[f64]) -> Vec<f64> {
    w.iter().zip(TWO_TARGET).map(|(w, t)| w - t).collect()
}

/// Decay on weights versus on gradients for a 2-element quadratic.
pub fn decay_modes() -> Check {
    timed("decay on weights vs gradients", None, || {
        // Power-of-two rates keep every SGD intermediate exact.
        let (lr, lambda) = (0.125, 0.25);
        let mut a = vec![1.0, 2.5];
        let mut b = a.clone();
        let mut identical = true;
        for _ in 0..8 {
            let mut next = a.clone();
            sgd_step(&mut next, &two_grad(&a), lr)?;
            a = srste_weight_decay(&next, &a, &TWO_MASK, lr, lambda)?;
            let g = masked_decay_gradient(&two_grad(&b), &b, &TWO_MASK, lambda)?;
            sgd_step(&mut b, &g, lr)?;
            identical &= a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits());
        }

        let (lr, lambda) = (0.01, 0.5);
        let mut on_w = OptimizerState::<f64>::new(vec![1.0, 2.5], lr);
        let mut on_g = on_w.clone();
        for _ in 0..50 {
            let before = on_w.w.clone();
            on_w.step(&two_grad(&before))?;
            on_w.w = srste_weight_decay(&on_w.w, &before, &TWO_MASK, lr, lambda)?;
            let g = masked_decay_gradient(&two_grad(&on_g.w), &on_g.w, &TWO_MASK, lambda)?;
            on_g.step(&g)?;
        }
        let nonuniform = (on_g.v[0] - on_g.v[1]).abs() > 0.0;
        let gap = (on_w.w[1] - on_g.w[1]).abs();
        Ok((
            identical && nonuniform && gap > 1e-6,
            format!("SGD bitwise identical {identical}; Adam pruned-weight gap after 50 steps {gap:.3e}"),
        ))
    })
}

/// Training runs of one seed for the flip-rate and schedule criteria.
#[derive(Debug, Clone)]
pub struct SeedStudy {
    pub seed: u64,
    pub report: LambdaReport,
    /// Chosen decay factor; `None` when no candidate was feasible.
    pub lambda: Option<f64>,
    pub dense: RunArtifacts,
    pub ste: RunArtifacts,
    /// Masked decay, MVUE and dense fine-tuning variants at the chosen
    /// decay factor.
    pub sparse: Option<SparseRuns>,
    /// Flip ratio over the search window with the decay switched off.
    pub mu_zero: f64,
    pub time_search: Duration,
    pub time_dense: Duration,
    pub time_ste: Duration,
}

#[derive(Debug, Clone)]
pub struct SparseRuns {
    pub masked_decay: RunArtifacts,
    pub dense_ft: RunArtifacts,
    pub dense_pretrain: RunArtifacts,
    pub time_masked_decay: Duration,
    pub time_dense_ft: Duration,
    pub time_dense_pretrain: Duration,
}

fn timed_run(cfg: &TrainConfig, stream: &mut BatchStream) -> Result<(RunArtifacts, Duration)> {
    let start = Instant::now();
    let run = run_steps_on(cfg, cfg.steps, stream)?;
    Ok((run, start.elapsed()))
}

/// Searches the decay factor, then trains the dense, STE, masked-decay,
/// dense fine-tuning and dense pretraining variants of `base` for `seed`.
pub fn study_seed(base: &TrainConfig, seed: u64, candidates: &[f64]) -> Result<SeedStudy> {
    let cfg = TrainConfig { seed, ..base.clone() };
    cfg.validate()?;
    let mut stream = BatchStream::new(&cfg)?;
    let start = Instant::now();
    let (lambda, report) = match search_lambda_on(&cfg, candidates, &mut stream) {
        Ok((l, r)) => (Some(l), r),
        Err(Error::NoFeasibleLambda(r)) => (None, *r),
        Err(e) => return Err(e.into()),
    };
    let time_search = start.elapsed();
    let (dense, time_dense) = timed_run(&Variant::Dense.configure(&cfg), &mut stream)?;
    let (ste, time_ste) = timed_run(&Variant::Ste.configure(&cfg), &mut stream)?;
    let warmup = cfg.warmup_steps().max(2);
    let undecayed = TrainConfig {
        track_flips: true,
        ..Variant::MaskedDecay.configure(&TrainConfig {
            decay: fst24_core::optim::DecayConfig {
                lambda: 0.0,
                ..cfg.decay
            },
            ..cfg.clone()
        })
    };
    let undecayed = run_steps_on(&undecayed, warmup, &mut stream)?;
    let mu_zero = flip_ratio(&undecayed.flips, &dense.flips[..warmup], sampling_window(warmup))?;
    let sparse = match lambda {
        Some(lambda) => {
            let tuned = TrainConfig {
                decay: fst24_core::optim::DecayConfig { lambda, ..cfg.decay },
                ..cfg.clone()
            };
            let (masked_decay, time_masked_decay) = timed_run(&Variant::MaskedDecay.configure(&tuned), &mut stream)?;
            let (dense_ft, time_dense_ft) = timed_run(&Variant::MaskedDecayDenseFt.configure(&tuned), &mut stream)?;
            let (dense_pretrain, time_dense_pretrain) =
                timed_run(&Variant::MaskedDecayDensePretrain.configure(&tuned), &mut stream)?;
            Some(SparseRuns {
                masked_decay,
                dense_ft,
                dense_pretrain,
                time_masked_decay,
                time_dense_ft,
                time_dense_pretrain,
            })
        }
        None => None,
    };
    Ok(SeedStudy {
        seed,
        report,
        lambda,
        dense,
        ste,
        sparse,
        mu_zero,
        time_search,
        time_dense,
        time_ste,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Max of the first half of a trace over the mean of its last 10%.
fn rise_then_fall(trace: &[f64]) -> (f64, f64) {
    let n = trace.len();
    let head = trace[..n / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tail = mean(&trace[n - (n / 10).max(1)..]);
    (head, tail)
}

fn quorum(hits: usize, total: usize) -> bool {
    total > 0 && hits + 1 >= total && hits >= total.min(4)
}

/// STE flips more than the dense proxy late in training, the searched
/// decay factor brings the tail below STE, and the dense proxy rises then
/// falls.
pub fn flip_dynamics(study: &[SeedStudy]) -> Check {
    let elapsed: Duration = study
        .iter()
        .map(|s| {
            s.time_search
                + s.time_dense
                + s.time_ste
                + s.sparse.as_ref().map_or(Duration::ZERO, |r| r.time_masked_decay)
        })
        .sum();
    let (mut a, mut b, mut c) = (0, 0, 0);
    let mut detail = String::new();
    for s in study {
        let dense_tail = s.dense.tail_flip_rate(0.2);
        let ste_tail = s.ste.tail_flip_rate(0.2);
        let md_tail = s.sparse.as_ref().map(|r| r.masked_decay.tail_flip_rate(0.2));
        let (head, tail10) = rise_then_fall(&s.dense.flips);
        a += usize::from(ste_tail > dense_tail);
        b += usize::from(md_tail.is_some_and(|m| m < ste_tail));
        c += usize::from(head > tail10);
        let _ = write!(
            detail,
            "seed {}: lambda {:?} tail20 ste {ste_tail:.2e} dense {dense_tail:.2e} decay {}; dense max(first half) {head:.2e} vs mean(last 10%) {tail10:.2e}. ",
            s.seed,
            s.lambda,
            md_tail.map_or("n/a".to_string(), |m| format!("{m:.2e}")),
        );
    }
    let n = study.len();
    let _ = write!(detail, "(a) {a}/{n} (b) {b}/{n} (c) {c}/{n}");
    finish(
        "flip-rate dynamics",
        Some(Duration::from_secs(300)),
        elapsed,
        Ok((quorum(a, n) && quorum(b, n) && c == n, detail)),
    )
}

/// Dense fine-tuning at the end beats the same dense budget at the start.
pub fn schedule_comparison(study: &[SeedStudy]) -> Check {
    let elapsed: Duration = study
        .iter()
        .map(|s| {
            s.time_search
                + s.sparse
                    .as_ref()
                    .map_or(Duration::ZERO, |r| r.time_dense_ft + r.time_dense_pretrain)
        })
        .sum();
    let mut wins = 0;
    let mut detail = String::new();
    for s in study {
        match &s.sparse {
            Some(r) => {
                let (ft, pre) = (r.dense_ft.eval.loss, r.dense_pretrain.eval.loss);
                wins += usize::from(ft <= pre);
                let _ = write!(detail, "seed {}: fine-tune {ft:.4} vs pretrain {pre:.4}. ", s.seed);
            }
            None => {
                let _ = write!(detail, "seed {}: no feasible decay factor. ", s.seed);
            }
        }
    }
    let _ = write!(detail, "{wins}/{} seeds", study.len());
    finish(
        "dense fine-tuning vs dense pretraining",
        Some(Duration::from_secs(600)),
        elapsed,
        Ok((quorum(wins, study.len()), detail)),
    )
}

/// Full sparse training lands within 10% of the dense baseline.
pub fn end_to_end(study: &[SeedStudy]) -> Check {
    let elapsed: Duration = study
        .iter()
        .map(|s| s.time_search + s.time_dense + s.sparse.as_ref().map_or(Duration::ZERO, |r| r.time_dense_ft))
        .sum();
    let mut close = 0;
    let mut detail = String::new();
    for s in study {
        let dense = s.dense.eval.loss;
        match &s.sparse {
            Some(r) => {
                let rel = (r.dense_ft.eval.loss - dense).abs() / dense;
                close += usize::from(rel <= 0.10);
                let _ = write!(
                    detail,
                    "seed {}: sparse {:.4} dense {dense:.4} ({:+.1}%). ",
                    s.seed,
                    r.dense_ft.eval.loss,
                    100.0 * (r.dense_ft.eval.loss - dense) / dense
                );
            }
            None => {
                let _ = write!(detail, "seed {}: no feasible decay factor. ", s.seed);
            }
        }
    }
    let _ = write!(detail, "{close}/{} seeds within 10%", study.len());
    finish(
        "end-to-end sparse vs dense",
        None,
        elapsed,
        Ok((quorum(close, study.len()), detail)),
    )
}

/// The STE trace's ratio over the search window exceeds one and the
/// largest candidate is rejected for flipping too little.
pub fn search_extremes(study: &[SeedStudy]) -> Check {
    timed("decay search extremes", None, || {
        let mut ok = 0;
        let mut detail = String::new();
        for s in study {
            let mu_ste = s.mu_zero;
            let largest = s
                .report
                .entries
                .iter()
                .max_by(|x, y| x.lambda.total_cmp(&y.lambda))
                .ok_or_else(|| anyhow!("empty report"))?;
            let pass = mu_ste > 1.0 && largest.mu < 0.60 && !largest.feasible;
            ok += usize::from(pass);
            let _ = write!(
                detail,
                "seed {}: mu(0) {mu_ste:.3}, mu({}) {:.3}. ",
                s.seed, largest.lambda, largest.mu
            );
        }
        Ok((quorum(ok, study.len()), detail))
    })
}

/// Dense training is no worse than any sparse variant, up to 1%.
pub fn dense_ordering(study: &[SeedStudy]) -> Check {
    timed("dense loss <= sparse variants", None, || {
        let mut ok = 0;
        let mut detail = String::new();
        for s in study {
            let dense = s.dense.eval.loss;
            let mut sparse = vec![s.ste.eval.loss];
            if let Some(r) = &s.sparse {
                sparse.extend([
                    r.masked_decay.eval.loss,
                    r.dense_ft.eval.loss,
                    r.dense_pretrain.eval.loss,
                ]);
            }
            let best = sparse.iter().copied().fold(f64::INFINITY, f64::min);
            ok += usize::from(dense <= best * 1.01);
            let _ = write!(detail, "seed {}: dense {dense:.4}, best sparse {best:.4}. ", s.seed);
        }
        Ok((quorum(ok, study.len()), detail))
    })
}

/// Magnitude pruning keeps the best pair of every group.
fn pruning_check() -> Check {
    timed("magnitude pruning vs pair enumeration", None, || {
        let mut r = rng(61);
        let mut bad = 0;
        for _ in 0..200 {
            let w = gaussian(8, 8, 1.0, &mut r);
            let pruned = prune_2of4(&w, Direction::RowWise)?;
            let mut best = 0.0;
            for i in 0..8 {
                for g in 0..2 {
                    best += PAIRS
                        .iter()
                        .map(|&(a, b)| w.get(i, 4 * g + a).abs() + w.get(i, 4 * g + b).abs())
                        .fold(0.0, f64::max);
                }
            }
            let kept = retained_l1(&w, &pruned.mask)?;
            bad += usize::from((kept - best).abs() > 1e-12 || (pruned.values.l1_norm() - kept).abs() > 1e-12);
            bad += usize::from(
                !pruned
                    .values
                    .bitwise_eq(&oracle::prune_reference(&w, Direction::RowWise)),
            );
        }
        Ok((bad == 0, format!("200 matrices, {bad} failures")))
    })
}

/// Greedy search on blocks where it is suboptimal still keeps half.
fn greedy_adversarial() -> Check {
    timed("greedy on adversarial blocks", None, || {
        let mut r = rng(62);
        let (mut found, mut bad, mut worst) = (0, 0, f64::INFINITY);
        for _ in 0..20_000 {
            let w = Matrix::from_fn(4, 4, Layout::RowMajor, |_, _| f64::from(r.random_range(0u8..10)));
            let g = retained_l1(&w, &transposable_search_greedy(&w)?)?;
            let opt = oracle::optimal_retained(&oracle::block(&w, 0, 0));
            if g < opt {
                found += 1;
                bad += usize::from(g < 0.5 * opt);
                worst = worst.min(g / opt);
            }
        }
        Ok((
            found > 0 && bad == 0,
            format!("{found} suboptimal blocks, worst ratio {worst:.3}, {bad} below half"),
        ))
    })
}

/// Pair distribution of a flat group and a million-draw sample mean.
fn mvue_sampling() -> Check {
    timed("MVUE sampling", None, || {
        let flat = pair_distribution(&inclusion_probabilities([1.0, 1.0, 1.0, 1.0]));
        let mut expectation = [0.0f64; 4];
        for (&(a, b), &p) in PAIRS.iter().zip(&flat) {
            expectation[a] += p * 2.0;
            expectation[b] += p * 2.0;
        }
        let uniform_ok = expectation.iter().all(|e| (e - 1.0).abs() < 1e-12);

        let x = [0.3, -1.2, 0.05, 2.0];
        let pi = inclusion_probabilities(x);
        let mut r = rng(63);
        let n = 1_000_000;
        let (mut sum, mut sq) = ([0.0; 4], [0.0; 4]);
        for _ in 0..n {
            let (a, b) = select_pair(&pi, r.random::<f64>());
            for k in [a, b] {
                let v = x[k] / pi[k];
                sum[k] += v;
                sq[k] += v * v;
            }
        }
        let mut outliers = 0;
        for k in 0..4 {
            let mean = sum[k] / n as f64;
            let se = ((sq[k] / n as f64 - mean * mean).max(0.0) / n as f64).sqrt();
            outliers += usize::from((mean - x[k]).abs() > 4.0 * se + 1e-12);
        }
        let est = mvue_prune(&gaussian(8, 8, 1.0, &mut r), Direction::RowWise, 3)?;
        Ok((
            uniform_ok && outliers == 0 && est.mask.validate().is_ok(),
            format!("flat group expectation ok {uniform_ok}; {outliers}/4 entries beyond 4 SE over {n} draws"),
        ))
    })
}

fn gelu_check() -> Check {
    timed("GELU derivative", None, || {
        let mut worst: f64 = 0.0;
        for x in [-2.0, -1.0, 0.5, 3.0] {
            let fd = oracle::central_difference(&mut |v| gelu(v[0]), &[x], 1e-5)[0];
            worst = worst.max((fd - gelu_grad(x)).abs() / gelu_grad(x).abs());
        }
        let asymptotes = gelu(0.0f64) == 0.0 && gelu(-10.0f64).abs() < 1e-9 && (gelu(10.0f64) - 10.0).abs() < 1e-9;
        Ok((worst < 1e-7 && asymptotes, format!("worst relative error {worst:.2e}")))
    })
}

/// Fused GEGLU against the unfused reference, and with a gate of ones and
/// an input region where GELU is the identity, against a linear layer.
fn geglu_references() -> Check {
    timed("GEGLU references", None, || {
        let mut r = rng(64);
        let x = gaussian(8, 16, 1.0, &mut r);
        let u = gaussian(12, 16, 0.3, &mut r);
        let v = gaussian(12, 16, 0.3, &mut r);
        let b: Vec<f64> = (0..12).map(|_| r.random_range(-0.5..0.5)).collect();
        let c: Vec<f64> = (0..12).map(|_| r.random_range(-0.5..0.5)).collect();
        let bias: Vec<f64> = b.iter().chain(&c).copied().collect();
        let reference = oracle::ffn_forward(Activation::Geglu, &concat_rows(&u, &v)?, &bias, &identity(12), &x);
        let row = geglu_forward(&x, &u, &v, &b, &c, Traversal::RowOrder)?;
        let col = geglu_forward(&x, &u, &v, &b, &c, Traversal::ColOrder)?;
        let fused = row.bitwise_eq(&col) && row.max_abs_diff(&reference)? < 1e-12;

        // Large positive pre-activations make GELU the identity to within
        // rounding; v = 0, c = 1 makes the gate one.
        let xs = Matrix::from_fn(4, 8, Layout::RowMajor, |_, _| r.random_range(0.5..1.0));
        let us = Matrix::from_fn(4, 8, Layout::RowMajor, |_, _| r.random_range(5.0..6.0));
        let zero = Matrix::zeros(4, 8, Layout::RowMajor);
        let up = gaussian(4, 4, 1.0, &mut r);
        let g = geglu_backward(&xs, &us, &zero, &[0.0; 4], &[1.0; 4], &up)?;
        let linear = oracle::naive_matmul(&up.clone().transpose(), &xs);
        let gate = g.u.max_abs_diff(&linear)? < 1e-9;
        Ok((
            fused && gate,
            format!("unfused match {fused}, linear-layer match {gate}"),
        ))
    })
}

/// Sparse forward against the dense reference of the masked weights, and
/// with dense masks against the dense layer.
fn fst_forward_check() -> Check {
    timed("sparse forward vs dense reference", None, || {
        let mut r = rng(65);
        let table = enumerate_patterns();
        let mut worst: f64 = 0.0;
        for activation in [Activation::Relu, Activation::Gelu, Activation::Geglu] {
            let layer: FfnLayer = FfnLayer::random(activation, 16, 32, &mut r)?;
            let x = gaussian(8, 16, 1.0, &mut r);
            let m_in = transposable_search_conv(&layer.w_in, &table)?;
            let m_out = transposable_search_conv(&layer.w_out, &table)?;
            let reference = oracle::ffn_forward(
                activation,
                &apply_mask(&layer.w_in, &m_in)?,
                &layer.b_in,
                &apply_mask(&layer.w_out, &m_out)?,
                &x,
            );
            let masks = LayerMasks {
                w_in: WeightMask::Transposable(m_in),
                w_out: WeightMask::Transposable(m_out),
            };
            worst = worst.max(fst_forward(&layer, &x, &masks)?.y.max_abs_diff(&reference)?);
            let dense = oracle::ffn_forward(activation, &layer.w_in, &layer.b_in, &layer.w_out, &x);
            worst = worst.max(fst_forward(&layer, &x, &LayerMasks::dense())?.y.max_abs_diff(&dense)?);
        }
        Ok((worst < 1e-12, format!("max abs difference {worst:.2e}")))
    })
}

fn flip_rate_check() -> Check {
    timed("flip rate of group swaps", None, || {
        let mut bad = 0;
        for &(a, b) in &PAIRS {
            for &(c, d) in &PAIRS {
                let m1: Vec<bool> = (0..4).map(|k| k == a || k == b).collect();
                let m2: Vec<bool> = (0..4).map(|k| k == c || k == d).collect();
                let differing = m1.iter().zip(&m2).filter(|(x, y)| x != y).count() as f64 / 4.0;
                bad += usize::from(flip_rate(&m1, &m2)? != differing);
                let swap = (a, b) != (c, d) && [a, b].iter().all(|k| ![c, d].contains(k));
                bad += usize::from(swap != (flip_rate(&m1, &m2)? == 1.0));
            }
        }
        Ok((bad == 0, format!("36 group pairs, {bad} failures")))
    })
}

fn adam_check() -> Check {
    timed("Adam step traces", None, || {
        let g = [0.5f64, -3.0, 1e-3];
        let mut s = OptimizerState::<f64>::new(vec![0.0; 3], 0.01);
        s.step(&g)?;
        let first =
            s.w.iter()
                .zip(g)
                .all(|(w, g)| (w + 0.01 * g.signum()).abs() < 0.01 * 1e-4);
        let mut t = OptimizerState::<f64>::new(vec![0.0, 0.0], 0.1);
        t.step(&[10.0, 0.1])?;
        let before = t.w.clone();
        t.step(&[1.0, 1.0])?;
        let steps = [(t.w[0] - before[0]).abs(), (t.w[1] - before[1]).abs()];
        let distinct = (steps[0] - steps[1]).abs() > 1e-3;
        Ok((
            first && distinct,
            format!("first step ~ -lr sign(g) {first}; steps after equal gradients {steps:.4?}"),
        ))
    })
}

fn block_gap_check() -> Check {
    timed("block L1 gap vs brute force", None, || {
        let table = enumerate_patterns();
        // Every entry of one pattern is 2.5; the nearest other pattern
        // shares six of its eight positions.
        let best = table.get(17).positions();
        let w = Matrix::from_fn(4, 4, Layout::RowMajor, |i, j| {
            if best.contains(&(4 * i + j)) {
                2.5
            } else {
                0.0
            }
        });
        let mut r = rng(67);
        let noisy = Matrix::from_fn(8, 8, Layout::RowMajor, |_, _| f64::from(r.random_range(0u8..20)) / 4.0);
        let mut bad = 0;
        let mut gap = f64::NAN;
        for (n, m) in [w, noisy].iter().enumerate() {
            let stats = block_flip_stats(&[m.clone(), m.clone()], &table)?;
            for br in 0..m.rows() / 4 {
                for bc in 0..m.cols() / 4 {
                    let block = oracle::block(m, br, bc);
                    let mut scores: Vec<f64> = oracle::transposable_patterns()
                        .iter()
                        .map(|&p| oracle::retained(&block, p))
                        .collect();
                    scores.sort_by(|a, b| b.total_cmp(a));
                    let got = stats.gaps[br * (m.cols() / 4) + bc];
                    bad += usize::from(got != scores[0] - scores[1]);
                    if n == 0 {
                        gap = got;
                    }
                }
            }
            bad += stats.flips.iter().filter(|&&f| f != 0).count();
        }
        Ok((
            bad == 0 && gap == 5.0,
            format!("constructed block gap {gap}, {bad} mismatches"),
        ))
    })
}

fn class_balance_check() -> Check {
    timed("classification task balance", None, || {
        let mut task = make_task(TaskKind::SyntheticClassification, Activation::Geglu, 16, 32, 1, 4, 66)?;
        let mut counts = [0usize; 4];
        for _ in 0..100 {
            let batch = task.next_batch(1000)?;
            if let Targets::Labels(labels) = batch.targets {
                for y in labels {
                    counts[y] += 1;
                }
            }
        }
        let worst = counts
            .iter()
            .map(|&c| (c as f64 / 1e5 - 0.25).abs())
            .fold(0.0, f64::max);
        Ok((worst < 0.01, format!("class counts {counts:?}")))
    })
}

/// Every oracle-backed property that does not need training runs.
pub fn property_checks() -> Vec<Check> {
    let mut out = vec![pattern_table()];
    out.extend(search_corpus(1000));
    out.extend([
        mvue_unbiased(10_000, 100_000),
        spmm_exact(500),
        layout_table(),
        gradient_checks(),
        decay_modes(),
        pruning_check(),
        greedy_adversarial(),
        mvue_sampling(),
        gelu_check(),
        geglu_references(),
        fst_forward_check(),
        flip_rate_check(),
        adam_check(),
        block_gap_check(),
        class_balance_check(),
    ]);
    out
}

/// Toy-task checks over `seeds`.
pub fn training_checks(base: &TrainConfig, seeds: &[u64], candidates: &[f64]) -> Result<Vec<Check>> {
    let study = seeds
        .iter()
        .map(|&s| study_seed(base, s, candidates))
        .collect::<Result<Vec<_>>>()?;
    Ok(vec![
        flip_dynamics(&study),
        schedule_comparison(&study),
        end_to_end(&study),
        search_extremes(&study),
        dense_ordering(&study),
    ])
}
