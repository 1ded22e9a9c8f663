use alloc::vec::Vec;

use super::adam::check_len;
use crate::error::{Error, Result};
use crate::matrix::Real;

/// Where the decay on pruned weights enters the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DecayMode {
    /// Plain straight-through estimator.
    None,
    /// SR-STE: subtracted from the weights after the optimizer step.
    OnWeights,
    /// Masked decay: added to the gradient before the optimizer.
    OnGradients,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DecayConfig {
    pub lambda: f64,
    pub mode: DecayMode,
    /// Masks are searched again every this many steps.
    pub refresh_period: usize,
}

impl Default for DecayConfig {
    fn default() -> Self {
        DecayConfig {
            lambda: 0.0,
            mode: DecayMode::OnGradients,
            refresh_period: 40,
        }
    }
}

impl DecayConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!(
                "decay factor must be finite and nonnegative, got {}",
                self.lambda
            )));
        }
        if self.refresh_period == 0 {
            return Err(Error::InvalidConfig("refresh_period must be at least 1".into()));
        }
        Ok(())
    }
}

/// `g + lambda * (!m ⊙ w)`.
pub fn masked_decay_gradient<T: Real>(g: &[T], w: &[T], m: &[bool], lambda: T) -> Result<Vec<T>> {
    check_len("masked_decay_gradient", g.len(), w.len())?;
    check_len("masked_decay_gradient", g.len(), m.len())?;
    Ok(g.iter()
        .zip(w)
        .zip(m)
        .map(|((&gk, &wk), &keep)| if keep { gk } else { gk + lambda * wk })
        .collect())
}

/// `w_next_base - lr * lambda * (!m ⊙ w)`, with `w` the weights before the
/// step.
pub fn srste_weight_decay<T: Real>(w_next_base: &[T], w: &[T], m: &[bool], lr: T, lambda: T) -> Result<Vec<T>> {
    check_len("srste_weight_decay", w_next_base.len(), w.len())?;
    check_len("srste_weight_decay", w.len(), m.len())?;
    Ok(w_next_base
        .iter()
        .zip(w)
        .zip(m)
        .map(|((&n, &wk), &keep)| if keep { n } else { n - lr * lambda * wk })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn decay_on_gradient_arithmetic() {
        let out = masked_decay_gradient(&[0.0; 4], &[1.0, 2.0, 3.0, 4.0], &[true, true, false, false], 0.1).unwrap();
        assert_eq!(out, vec![0.0, 0.0, 0.1 * 3.0, 0.1 * 4.0]);
    }

    #[test]
    fn zero_lambda_and_full_mask_are_identity() {
        let g = [0.3, -1.0, 2.0, 0.5];
        let w = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(masked_decay_gradient(&g, &w, &[false; 4], 0.0).unwrap(), g.to_vec());
        assert_eq!(masked_decay_gradient(&g, &w, &[true; 4], 5.0).unwrap(), g.to_vec());
        assert_eq!(srste_weight_decay(&g, &w, &[false; 4], 0.1, 0.0).unwrap(), g.to_vec());
    }

    #[test]
    fn config_validation() {
        assert!(DecayConfig::default().validate().is_ok());
        let bad = DecayConfig {
            refresh_period: 0,
            ..DecayConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = DecayConfig {
            lambda: -1.0,
            ..DecayConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
