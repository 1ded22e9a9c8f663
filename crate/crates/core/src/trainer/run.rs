use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::model::Model;
use super::task::{BatchStream, Targets, Task};
use crate::error::Result;
use crate::ffn::{splitmix64, LayerMasks, WeightMask};
use crate::matrix::{Layout, Matrix};
use crate::optim::{masked_decay_gradient, srste_weight_decay, BlockFlipTracker, DecayMode, OptimizerState};
use crate::sparsity::{
    block_scores, enumerate_patterns, transposable_search_conv, BinaryMask, PatternTable, TransposableMask, WarmSearch,
};

const INIT_SALT: u64 = 0x1a17;
const EVAL_SALT: u64 = 0xe7a1;
const MVUE_SALT: u64 = 0x3c0e;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalMetrics {
    pub loss: f64,
    /// Classification only.
    pub accuracy: Option<f64>,
}

/// Which weight of a layer a block belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum WeightRole {
    WIn,
    WOut,
}

impl WeightRole {
    pub fn name(self) -> &'static str {
        match self {
            WeightRole::WIn => "w_in",
            WeightRole::WOut => "w_out",
        }
    }
}

/// Flip count and L1 norm gap of one 4x4 block.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockRecord {
    pub layer: usize,
    pub role: WeightRole,
    pub block: usize,
    pub flips: u64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub config: TrainConfig,
    /// Training loss at each step.
    pub loss: Vec<f64>,
    /// `flips[t - 1]` is the flip rate of the dense weights' masks across
    /// step `t`. Empty when flip tracking is off.
    pub flips: Vec<f64>,
    pub eval: EvalMetrics,
    pub model: Model,
    /// Sparse-mask searches performed for training.
    pub mask_searches: usize,
    pub blocks: Vec<BlockRecord>,
}

impl RunArtifacts {
    /// Mean flip rate over the last `frac` of the recorded steps.
    pub fn tail_flip_rate(&self, frac: f64) -> f64 {
        tail_mean(&self.flips, frac)
    }
}

pub(crate) fn tail_mean(xs: &[f64], frac: f64) -> f64 {
    let n = xs.len();
    let k = (libm::round(n as f64 * frac) as usize).clamp(1, n.max(1));
    if n == 0 {
        return f64::NAN;
    }
    xs[n - k..].iter().sum::<f64>() / k as f64
}

/// Mean loss and its gradient with respect to the model output.
fn loss_and_grad(out: &Matrix, targets: &Targets, classes: usize) -> Result<(f64, Matrix, Option<usize>)> {
    let (p, d) = out.shape();
    match targets {
        Targets::Regression(t) => {
            let scale = 1.0 / (p * d) as f64;
            let diff = out.zip_map(t, |y, t| y - t)?;
            let loss = diff.data().iter().map(|e| e * e).sum::<f64>() * scale;
            Ok((loss, diff.scale(2.0 * scale), None))
        }
        Targets::Labels(labels) => {
            let mut grad = Matrix::zeros(p, d, Layout::RowMajor);
            let mut loss = 0.0;
            let mut correct = 0;
            for (i, &y) in labels.iter().enumerate() {
                let logits: Vec<f64> = (0..classes).map(|j| out.get(i, j)).collect();
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|l| libm::exp(l - max)).collect();
                let z: f64 = exps.iter().sum();
                loss += libm::log(z) + max - logits[y];
                let argmax = (0..classes).fold(0, |b, j| if logits[j] > logits[b] { j } else { b });
                correct += usize::from(argmax == y);
                for j in 0..classes {
                    let onehot = if j == y { 1.0 } else { 0.0 };
                    grad.set(i, j, (exps[j] / z - onehot) / p as f64);
                }
            }
            Ok((loss / p as f64, grad, Some(correct)))
        }
    }
}

fn search_masks(model: &Model, table: &PatternTable) -> Result<Vec<[TransposableMask; 2]>> {
    model
        .layers
        .iter()
        .map(|l| {
            Ok([
                transposable_search_conv(&l.w_in, table)?,
                transposable_search_conv(&l.w_out, table)?,
            ])
        })
        .collect()
}

/// Conv searches over every weight of the model, warm-started from the
/// previous call.
struct ModelSearch(Vec<[WarmSearch; 2]>);

impl ModelSearch {
    fn new(model: &Model, table: &PatternTable) -> Result<Self> {
        let searches = model
            .layers
            .iter()
            .map(|l| Ok([WarmSearch::new(&l.w_in, table)?, WarmSearch::new(&l.w_out, table)?]))
            .collect::<Result<_>>()?;
        Ok(Self(searches))
    }

    fn masks(&self) -> Vec<[TransposableMask; 2]> {
        self.0.iter().map(|[a, b]| [a.mask(), b.mask()]).collect()
    }

    fn search(&mut self, model: &Model) -> Result<Vec<[TransposableMask; 2]>> {
        self.0
            .iter_mut()
            .zip(&model.layers)
            .map(|([a, b], l)| Ok([a.update(&l.w_in)?, b.update(&l.w_out)?]))
            .collect()
    }
}

fn to_layer_masks(masks: &[[TransposableMask; 2]]) -> Vec<LayerMasks> {
    masks
        .iter()
        .map(|[a, b]| LayerMasks {
            w_in: WeightMask::Transposable(a.clone()),
            w_out: WeightMask::Transposable(b.clone()),
        })
        .collect()
}

/// Loss (and accuracy) on `eval`, pruning with fresh masks when the run
/// ends in a sparse phase.
fn evaluate(model: &Model, cfg: &TrainConfig, eval: &mut Task, table: &PatternTable) -> Result<EvalMetrics> {
    let masks = if cfg.is_sparse_step(cfg.steps) {
        to_layer_masks(&search_masks(model, table)?)
    } else {
        vec![LayerMasks::dense(); model.layers.len()]
    };
    let batch = eval.next_batch(cfg.eval_size)?;
    let (out, _) = model.forward(&batch.x, &masks)?;
    let (loss, _, correct) = loss_and_grad(&out, &batch.targets, cfg.classes)?;
    Ok(EvalMetrics {
        loss,
        accuracy: correct.map(|c| c as f64 / cfg.eval_size as f64),
    })
}

struct Params {
    w_in: OptimizerState,
    b_in: OptimizerState,
    w_out: OptimizerState,
}

/// Trains `cfg` end to end.
pub fn run_training(cfg: &TrainConfig) -> Result<RunArtifacts> {
    run_steps(cfg, cfg.steps)
}

/// Trains the first `max_steps` steps of `cfg`, with the schedule of the
/// full run.
pub fn run_steps(cfg: &TrainConfig, max_steps: usize) -> Result<RunArtifacts> {
    cfg.validate()?;
    run_steps_on(cfg, max_steps, &mut BatchStream::new(cfg)?)
}

/// [`run_steps`] drawing batches from `stream`, which must serve `cfg`.
pub fn run_steps_on(cfg: &TrainConfig, max_steps: usize, stream: &mut BatchStream) -> Result<RunArtifacts> {
    cfg.validate()?;
    stream.check(cfg)?;
    let steps = max_steps.min(cfg.steps);
    let table = enumerate_patterns();
    let mut eval_task = stream.origin().fork(splitmix64(cfg.seed ^ EVAL_SALT));
    let mut init_rng = ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed ^ INIT_SALT));
    let mut model = Model::random(cfg.activation, cfg.d, cfg.d_ff, cfg.depth, &mut init_rng)?;

    let mut params: Vec<Params> = model
        .layers
        .iter()
        .map(|l| Params {
            w_in: OptimizerState::new(l.w_in.data().to_vec(), cfg.lr),
            b_in: OptimizerState::new(l.b_in.clone(), cfg.lr),
            w_out: OptimizerState::new(l.w_out.data().to_vec(), cfg.lr),
        })
        .collect();

    let mut trackers: Vec<[BlockFlipTracker; 2]> = model
        .layers
        .iter()
        .map(|l| {
            [
                BlockFlipTracker::new(l.w_in.rows(), l.w_in.cols()),
                BlockFlipTracker::new(l.w_out.rows(), l.w_out.cols()),
            ]
        })
        .collect();
    let total_bits: usize = model.layers.iter().map(|l| l.weight_count()).sum();
    let mut searcher = ModelSearch::new(&model, &table)?;
    // Masks of the current dense weights, kept up to date when tracking.
    let mut probe_masks = None;
    if cfg.track_flips {
        let m = searcher.masks();
        for (tr, [a, b]) in trackers.iter_mut().zip(&m) {
            tr[0].observe(a)?;
            tr[1].observe(b)?;
        }
        probe_masks = Some(m);
    }

    let mut sparse_masks: Option<(usize, Vec<LayerMasks>)> = None;
    let dense_masks = vec![LayerMasks::dense(); model.layers.len()];
    let mut mask_searches = 0;
    let mut loss_trace = Vec::with_capacity(steps);
    let mut flip_trace = Vec::with_capacity(if cfg.track_flips { steps } else { 0 });
    let lambda = cfg.decay.lambda;

    for t in 1..=steps {
        let lr = cfg.lr_at(t);
        let sparse = cfg.is_sparse_step(t);
        if sparse {
            let stale = match &sparse_masks {
                None => true,
                Some((at, _)) => t - at >= cfg.decay.refresh_period,
            };
            if stale {
                let m = match &probe_masks {
                    Some(m) => to_layer_masks(m),
                    None => to_layer_masks(&searcher.search(&model)?),
                };
                mask_searches += 1;
                sparse_masks = Some((t, m));
            }
        } else {
            sparse_masks = None;
        }
        let layer_masks = match &sparse_masks {
            Some((_, m)) => m,
            None => &dense_masks,
        };

        let batch = stream.batch(t - 1)?;
        let (out, bundles) = model.forward(&batch.x, layer_masks)?;
        let (loss, upstream, _) = loss_and_grad(&out, &batch.targets, cfg.classes)?;
        loss_trace.push(loss);

        let seeds: Vec<u64> = (0..model.layers.len())
            .map(|k| splitmix64(cfg.seed ^ MVUE_SALT ^ ((t as u64) << 16) ^ k as u64))
            .collect();
        let use_mvue = sparse && cfg.mvue;
        let grads = model.backward(&bundles, &upstream, use_mvue.then_some(&seeds[..]))?;

        for (k, (g, p)) in grads.into_iter().zip(params.iter_mut()).enumerate() {
            let layer = &mut model.layers[k];
            for (role, grad, state) in [(0, g.w_in, &mut p.w_in), (1, g.w_out, &mut p.w_out)] {
                let mut gv = grad.into_layout(Layout::RowMajor).into_data();
                let mask = match (&sparse_masks, sparse && lambda > 0.0) {
                    (Some((_, m)), true) => {
                        let wm = if role == 0 { &m[k].w_in } else { &m[k].w_out };
                        match wm {
                            WeightMask::Transposable(tm) => Some(tm.bits()),
                            WeightMask::Dense => None,
                        }
                    }
                    _ => None,
                };
                state.lr = lr;
                match (mask, cfg.decay.mode) {
                    (Some(bits), DecayMode::OnGradients) => {
                        gv = masked_decay_gradient(&gv, &state.w, bits, lambda)?;
                        state.step(&gv)?;
                    }
                    (Some(bits), DecayMode::OnWeights) => {
                        let before = state.w.clone();
                        state.step(&gv)?;
                        state.w = srste_weight_decay(&state.w, &before, bits, lr, lambda)?;
                    }
                    _ => state.step(&gv)?,
                }
                let target = if role == 0 { &mut layer.w_in } else { &mut layer.w_out };
                target.data_mut().copy_from_slice(&state.w);
            }
            p.b_in.lr = lr;
            p.b_in.step(&g.b_in)?;
            layer.b_in.copy_from_slice(&p.b_in.w);
        }

        if cfg.track_flips {
            let m = searcher.search(&model)?;
            let mut flipped = 0.0;
            for (tr, [a, b]) in trackers.iter_mut().zip(&m) {
                let ra = tr[0].observe(a)?.unwrap_or(0.0);
                let rb = tr[1].observe(b)?.unwrap_or(0.0);
                flipped += ra * a.bits().len() as f64 + rb * b.bits().len() as f64;
            }
            flip_trace.push(flipped / total_bits as f64);
            probe_masks = Some(m);
        }
    }

    let eval = evaluate(&model, cfg, &mut eval_task, &table)?;
    let mut blocks = Vec::new();
    if cfg.track_flips {
        for (k, (layer, tr)) in model.layers.iter().zip(&trackers).enumerate() {
            for (role, w, tracker) in [
                (WeightRole::WIn, &layer.w_in, &tr[0]),
                (WeightRole::WOut, &layer.w_out, &tr[1]),
            ] {
                for (block, (score, &flips)) in block_scores(w, &table)?.iter().zip(tracker.block_flips()).enumerate() {
                    blocks.push(BlockRecord {
                        layer: k,
                        role,
                        block,
                        flips,
                        gap: score.gap(),
                    });
                }
            }
        }
    }
    Ok(RunArtifacts {
        config: cfg.clone(),
        loss: loss_trace,
        flips: flip_trace,
        eval,
        model,
        mask_searches,
        blocks,
    })
}
