use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Real;

pub(crate) fn check_len(op: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::LengthMismatch { op, expected, found });
    }
    Ok(())
}

/// Adam state for one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T: Real = f64> {
    pub w: Vec<T>,
    /// First moment.
    pub u: Vec<T>,
    /// Second moment.
    pub v: Vec<T>,
    /// Steps taken so far.
    pub t: u64,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Real> OptimizerState<T> {
    /// Zero moments with `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new(w: Vec<T>, lr: T) -> Self {
        let n = w.len();
        OptimizerState {
            w,
            u: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
            lr,
            beta1: T::from_f64(0.9),
            beta2: T::from_f64(0.999),
            eps: T::from_f64(1e-8),
        }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// One Adam step in place:
    ///
    /// `u_t = b1 u + (1 - b1) g`, `v_t = b2 v + (1 - b2) g^2`,
    /// `w -= lr * u_t / ((1 - b1^t) (sqrt(v_t / (1 - b2^t)) + eps))`.
    pub fn step(&mut self, g: &[T]) -> Result<()> {
        check_len("adam_step", self.w.len(), g.len())?;
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        for k in 0..g.len() {
            let gk = g[k];
            self.u[k] = b1 * self.u[k] + (T::one() - b1) * gk;
            self.v[k] = b2 * self.v[k] + (T::one() - b2) * gk * gk;
            let v_hat = self.v[k] / c2;
            self.w[k] -= self.lr * self.u[k] / (c1 * (v_hat.sqrt() + self.eps));
        }
        Ok(())
    }
}

/// Functional form of [`OptimizerState::step`].
pub fn adam_step<T: Real>(mut state: OptimizerState<T>, g: &[T]) -> Result<OptimizerState<T>> {
    state.step(g)?;
    Ok(state)
}

/// `w -= lr * g`.
pub fn sgd_step<T: Real>(w: &mut [T], g: &[T], lr: T) -> Result<()> {
    check_len("sgd_step", w.len(), g.len())?;
    for (wk, &gk) in w.iter_mut().zip(g) {
        *wk -= lr * gk;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut s = OptimizerState::new(vec![0.0, 0.0, 0.0], 0.01);
        s.step(&[0.5, -3.0, 1e-3]).unwrap();
        // With zero moments, step 1 is lr * g / (|g| + eps).
        for (w, g) in s.w.iter().zip([0.5_f64, -3.0, 1e-3]) {
            let expect = -0.01 * g / (g.abs() + 1e-8);
            assert!((w - expect).abs() < 1e-15, "{w} vs {expect}");
        }
    }

    #[test]
    fn zero_gradient_never_moves() {
        let mut s = OptimizerState::new(vec![1.0, -2.0], 0.1);
        for _ in 0..50 {
            s.step(&[0.0, 0.0]).unwrap();
        }
        assert_eq!(s.w, vec![1.0, -2.0]);
        assert_eq!(s.t, 50);
    }

    #[test]
    fn history_changes_effective_step() {
        let mut s = OptimizerState::new(vec![0.0_f64, 0.0], 0.1);
        s.step(&[1.0, 10.0]).unwrap();
        let before = s.w.clone();
        s.step(&[1.0, 1.0]).unwrap();
        let d0 = before[0] - s.w[0];
        let d1 = before[1] - s.w[1];
        assert!(d0 > 0.0 && d1 > 0.0);
        assert!((d0 - d1).abs() > 1e-3, "{d0} vs {d1}");
    }

    #[test]
    fn length_mismatch() {
        let mut s = OptimizerState::new(vec![0.0; 3], 0.1);
        assert!(s.step(&[1.0]).is_err());
        assert!(sgd_step(&mut [0.0; 2], &[1.0], 0.1).is_err());
    }
}
