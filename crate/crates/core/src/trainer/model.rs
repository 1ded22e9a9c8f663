use alloc::vec::Vec;

use rand::Rng;

use crate::error::Result;
use crate::ffn::{fst_backward, fst_forward, Activation, FfnLayer, ForwardBundle, GradMode, LayerGrads, LayerMasks};
use crate::matrix::Matrix;

/// Residual stack `x_{k+1} = x_k + FFN_k(x_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub layers: Vec<FfnLayer>,
}

impl Model {
    pub fn random<R: Rng + ?Sized>(
        activation: Activation,
        d: usize,
        d_ff: usize,
        depth: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let layers = (0..depth)
            .map(|_| FfnLayer::random(activation, d, d_ff, rng))
            .collect::<Result<_>>()?;
        Ok(Model { layers })
    }

    pub fn forward(&self, x: &Matrix, masks: &[LayerMasks]) -> Result<(Matrix, Vec<ForwardBundle>)> {
        let mut h = x.clone();
        let mut bundles = Vec::with_capacity(self.layers.len());
        for (layer, m) in self.layers.iter().zip(masks) {
            let b = fst_forward(layer, &h, m)?;
            h = h.zip_map(&b.y, |a, y| a + y)?;
            bundles.push(b);
        }
        Ok((h, bundles))
    }

    /// Weight gradients per layer given `dL/d output`. `seeds` drives the
    /// stochastic estimator; `None` means exact products.
    pub fn backward(
        &self,
        bundles: &[ForwardBundle],
        upstream: &Matrix,
        seeds: Option<&[u64]>,
    ) -> Result<Vec<LayerGrads>> {
        let mut grads = Vec::with_capacity(bundles.len());
        let mut dh = upstream.clone();
        for (k, b) in bundles.iter().enumerate().rev() {
            let mode = seeds.map_or(GradMode::Exact, |s| GradMode::Mvue { seed: s[k] });
            let g = fst_backward(b, &dh, mode)?;
            dh = dh.zip_map(&g.x, |a, d| a + d)?;
            grads.push(g);
        }
        grads.reverse();
        Ok(grads)
    }
}
