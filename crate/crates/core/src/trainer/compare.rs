use alloc::format;
use alloc::vec::Vec;

use super::config::{Method, TrainConfig};
use super::run::{run_steps_on, RunArtifacts};
use super::task::BatchStream;
use crate::error::{Error, Result};
use crate::optim::{decay_factor_search, DecayConfig, DecayMode, FlipProbe, LambdaReport};

/// Training recipes contrasted by [`run_comparison`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Variant {
    Dense,
    Ste,
    SrSte,
    MaskedDecay,
    MaskedDecayDenseFt,
    MaskedDecayDensePretrain,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Dense,
        Variant::Ste,
        Variant::SrSte,
        Variant::MaskedDecay,
        Variant::MaskedDecayDenseFt,
        Variant::MaskedDecayDensePretrain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Dense => "dense",
            Variant::Ste => "ste",
            Variant::SrSte => "sr_ste",
            Variant::MaskedDecay => "masked_decay",
            Variant::MaskedDecayDenseFt => "masked_decay_dense_ft",
            Variant::MaskedDecayDensePretrain => "masked_decay_dense_pretrain",
        }
    }

    /// `base` adapted to this recipe. `base.decay.lambda` is the decay
    /// factor; `base.dense_ft_frac` sets the dense budget shared by the
    /// fine-tuning and pretraining variants.
    pub fn configure(self, base: &TrainConfig) -> TrainConfig {
        let lambda = base.decay.lambda;
        let decay = |mode, lambda| DecayConfig {
            lambda,
            mode,
            ..base.decay
        };
        let no_ft = TrainConfig {
            dense_ft_frac: 0.0,
            dense_pretrain_steps: 0,
            method: Method::Fst,
            ..base.clone()
        };
        match self {
            Variant::Dense => TrainConfig {
                method: Method::Dense,
                ..no_ft
            },
            Variant::Ste => TrainConfig {
                decay: decay(DecayMode::None, 0.0),
                ..no_ft
            },
            Variant::SrSte => TrainConfig {
                decay: decay(DecayMode::OnWeights, lambda),
                ..no_ft
            },
            Variant::MaskedDecay => TrainConfig {
                decay: decay(DecayMode::OnGradients, lambda),
                ..no_ft
            },
            Variant::MaskedDecayDenseFt => TrainConfig {
                method: Method::Fst,
                dense_pretrain_steps: 0,
                decay: decay(DecayMode::OnGradients, lambda),
                ..base.clone()
            },
            Variant::MaskedDecayDensePretrain => TrainConfig {
                dense_pretrain_steps: base.dense_ft_steps(),
                decay: decay(DecayMode::OnGradients, lambda),
                ..no_ft
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct VariantRun {
    pub variant: Variant,
    pub artifacts: RunArtifacts,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub runs: Vec<VariantRun>,
}

impl ComparisonReport {
    pub fn get(&self, v: Variant) -> Option<&RunArtifacts> {
        self.runs.iter().find(|r| r.variant == v).map(|r| &r.artifacts)
    }
}

/// Runs each `(variant, config)` pair. All configs must share the step
/// count and seed of `base`.
pub fn run_comparison(base: &TrainConfig, variants: &[(Variant, TrainConfig)]) -> Result<ComparisonReport> {
    base.validate()?;
    run_comparison_on(base, variants, &mut BatchStream::new(base)?)
}

/// [`run_comparison`] with every run drawing from `stream`.
pub fn run_comparison_on(
    base: &TrainConfig,
    variants: &[(Variant, TrainConfig)],
    stream: &mut BatchStream,
) -> Result<ComparisonReport> {
    for (v, cfg) in variants {
        if cfg.steps != base.steps || cfg.seed != base.seed {
            return Err(Error::InvalidConfig(format!(
                "variant {} has steps {} and seed {}, expected {} and {}",
                v.name(),
                cfg.steps,
                cfg.seed,
                base.steps,
                base.seed
            )));
        }
    }
    let runs = variants
        .iter()
        .map(|(variant, cfg)| {
            Ok(VariantRun {
                variant: *variant,
                artifacts: run_steps_on(cfg, cfg.steps, stream)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ComparisonReport { runs })
}

/// `(variant, variant.configure(base))` for every variant in `vs`.
pub fn standard_variants(base: &TrainConfig, vs: &[Variant]) -> Vec<(Variant, TrainConfig)> {
    vs.iter().map(|&v| (v, v.configure(base))).collect()
}

/// Flip traces from the warmup window of `base`: dense training for the
/// reference, masked-decay FST for each candidate.
#[derive(Debug)]
pub struct WarmupProbe<'a> {
    pub base: TrainConfig,
    pub stream: &'a mut BatchStream,
}

impl FlipProbe for WarmupProbe<'_> {
    fn dense_trace(&mut self, warmup_steps: usize) -> Result<Vec<f64>> {
        let cfg = TrainConfig {
            track_flips: true,
            ..Variant::Dense.configure(&self.base)
        };
        Ok(run_steps_on(&cfg, warmup_steps, self.stream)?.flips)
    }

    fn sparse_trace(&mut self, lambda: f64, warmup_steps: usize) -> Result<Vec<f64>> {
        let base = TrainConfig {
            decay: DecayConfig {
                lambda,
                ..self.base.decay
            },
            ..self.base.clone()
        };
        let cfg = TrainConfig {
            track_flips: true,
            ..Variant::MaskedDecay.configure(&base)
        };
        Ok(run_steps_on(&cfg, warmup_steps, self.stream)?.flips)
    }
}

/// Decay-factor search over the warmup window of `base`.
pub fn search_lambda(base: &TrainConfig, candidates: &[f64]) -> Result<(f64, LambdaReport)> {
    base.validate()?;
    search_lambda_on(base, candidates, &mut BatchStream::new(base)?)
}

/// [`search_lambda`] with every warmup run drawing from `stream`.
pub fn search_lambda_on(
    base: &TrainConfig,
    candidates: &[f64],
    stream: &mut BatchStream,
) -> Result<(f64, LambdaReport)> {
    let warmup = base.warmup_steps().max(2);
    let mut probe = WarmupProbe {
        base: base.clone(),
        stream,
    };
    decay_factor_search(candidates, warmup, &mut probe)
}
