use alloc::format;

use crate::error::{Error, Result};
use crate::ffn::Activation;
use crate::optim::{DecayConfig, DecayMode};
use crate::sparsity::GROUP;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TaskKind {
    /// Targets from a fixed random dense network of the student's
    /// architecture; mean squared error.
    TeacherStudentRegression,
    /// Balanced Gaussian mixture; cross-entropy on the first `classes`
    /// outputs.
    SyntheticClassification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Method {
    /// Dense training throughout.
    Dense,
    /// Fully sparse training, with optional dense phases at either end.
    Fst,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub d: usize,
    pub d_ff: usize,
    /// Number of residual FFN blocks.
    pub depth: usize,
    pub batch: usize,
    pub steps: usize,
    pub lr: f64,
    /// Final learning rate as a fraction of `lr`.
    pub min_lr_frac: f64,
    /// Linear warmup length as a fraction of `steps`. The decay-factor
    /// search runs over this window.
    pub warmup_frac: f64,
    /// Trailing fraction of steps trained dense.
    pub dense_ft_frac: f64,
    /// Leading steps trained dense.
    pub dense_pretrain_steps: usize,
    pub method: Method,
    pub decay: DecayConfig,
    pub mvue: bool,
    pub seed: u64,
    pub task: TaskKind,
    pub activation: Activation,
    pub classes: usize,
    pub eval_size: usize,
    /// Measure the mask flip rate of the dense weights after every step.
    pub track_flips: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 64,
            d_ff: 256,
            depth: 2,
            batch: 32,
            steps: 2000,
            lr: 1e-3,
            min_lr_frac: 0.0,
            warmup_frac: 0.1,
            dense_ft_frac: 1.0 / 6.0,
            dense_pretrain_steps: 0,
            method: Method::Fst,
            decay: DecayConfig::default(),
            mvue: true,
            seed: 0,
            task: TaskKind::TeacherStudentRegression,
            activation: Activation::Geglu,
            classes: 4,
            eval_size: 512,
            track_flips: true,
        }
    }
}

fn invalid(msg: alloc::string::String) -> Error {
    Error::InvalidConfig(msg)
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(invalid("steps must be at least 1".into()));
        }
        if self.depth == 0 {
            return Err(invalid("depth must be at least 1".into()));
        }
        for (name, v) in [("d", self.d), ("d_ff", self.d_ff), ("batch", self.batch)] {
            if v == 0 || v % GROUP != 0 {
                return Err(invalid(format!("{name} = {v} must be a positive multiple of {GROUP}")));
            }
        }
        if !(0.0..1.0).contains(&self.dense_ft_frac) {
            return Err(invalid(format!(
                "dense_ft_frac = {} must lie in [0, 1)",
                self.dense_ft_frac
            )));
        }
        if !(0.0..=1.0).contains(&self.warmup_frac) {
            return Err(invalid(format!(
                "warmup_frac = {} must lie in [0, 1]",
                self.warmup_frac
            )));
        }
        if !(0.0..=1.0).contains(&self.min_lr_frac) {
            return Err(invalid(format!(
                "min_lr_frac = {} must lie in [0, 1]",
                self.min_lr_frac
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid(format!("lr = {} must be positive", self.lr)));
        }
        if self.dense_pretrain_steps > self.switch_step() {
            return Err(invalid("dense pretraining overlaps the dense fine-tuning phase".into()));
        }
        if self.task == TaskKind::SyntheticClassification && !(2..=self.d).contains(&self.classes) {
            return Err(invalid(format!("classes = {} must lie in 2..=d", self.classes)));
        }
        if self.eval_size == 0 {
            return Err(invalid("eval_size must be at least 1".into()));
        }
        self.decay.validate()
    }

    /// `t_s`: steps `1..=t_s` may be sparse, later steps are dense.
    /// Equals `ceil(steps * (1 - dense_ft_frac))`.
    pub fn switch_step(&self) -> usize {
        let dense = libm::floor(self.steps as f64 * self.dense_ft_frac + 1e-9) as usize;
        self.steps - dense.min(self.steps)
    }

    /// Dense steps at the end.
    pub fn dense_ft_steps(&self) -> usize {
        self.steps - self.switch_step()
    }

    pub fn warmup_steps(&self) -> usize {
        libm::round(self.steps as f64 * self.warmup_frac) as usize
    }

    /// Whether step `t` (1-based) runs sparse.
    pub fn is_sparse_step(&self, t: usize) -> bool {
        self.method == Method::Fst && t > self.dense_pretrain_steps && t <= self.switch_step()
    }

    /// Learning rate at step `t` (1-based): linear warmup, then cosine
    /// decay to `min_lr_frac * lr`.
    pub fn lr_at(&self, t: usize) -> f64 {
        let warm = self.warmup_steps();
        if t <= warm {
            return self.lr * t as f64 / warm as f64;
        }
        let span = (self.steps - warm).max(1) as f64;
        let progress = ((t - warm) as f64 / span).min(1.0);
        let floor = self.min_lr_frac * self.lr;
        floor + (self.lr - floor) * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * progress))
    }

    pub fn decay_mode(&self) -> DecayMode {
        self.decay.mode
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn switch_step_for_sixty_thousand() {
        let cfg = TrainConfig {
            steps: 60_000,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.switch_step(), 50_000);
        assert_eq!(cfg.dense_ft_steps(), 10_000);
        assert!(cfg.is_sparse_step(50_000));
        assert!(!cfg.is_sparse_step(50_001));
    }

    #[test]
    fn switch_step_rounds_up() {
        let cfg = TrainConfig {
            steps: 2000,
            ..TrainConfig::default()
        };
        // 2000 * 5/6 = 1666.67
        assert_eq!(cfg.switch_step(), 1667);
        let none = TrainConfig {
            dense_ft_frac: 0.0,
            ..cfg
        };
        assert_eq!(none.switch_step(), 2000);
    }

    #[test]
    fn schedule_shape() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_at(cfg.warmup_steps()), cfg.lr);
        assert!(cfg.lr_at(1) < cfg.lr_at(2));
        assert!(cfg.lr_at(cfg.steps).abs() < 1e-15);
        assert!(cfg.lr_at(1000) > cfg.lr_at(1500));
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig {
                d: 6,
                ..TrainConfig::default()
            },
            TrainConfig {
                dense_ft_frac: 1.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                steps: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                dense_pretrain_steps: 1900,
                ..TrainConfig::default()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }
}
