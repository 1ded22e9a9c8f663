//! One feed-forward layer under fully sparse training.
//!
//! Forward `Z = X W_in~^T + b`, `H = act(Z)`, `Y = H W_out~^T` where `W~` is
//! the weight under its transposable mask. Both products take the masked
//! weight as a column-wise sparse right operand, so `Z` and `Y` come out
//! column-major. Backward reuses the same masked weights for the input
//! gradients and feeds the output gradient through the stochastic 2-of-4
//! estimator before the weight-gradient product.

use alloc::vec::Vec;

use rand::Rng;

use super::activation::{gelu, gelu_grad, gelu_with_grad, relu, relu_grad, Activation};
use super::geglu::{add_row_bias, geglu_gate, Traversal};
use crate::error::{Error, Result};
use crate::matrix::{column_sums, matmul, matmul_transposed, Layout, Matrix, Real};
use crate::sparsity::{apply_mask, mvue_prune, Direction, TransposableMask, GROUP};
use crate::spmm::{spmm, spmm_right, Compressed24};

#[derive(Debug, Clone, PartialEq)]
pub struct FfnLayer<T: Real = f64> {
    pub activation: Activation,
    /// `d_ff x d`, or `2 d_ff x d` holding `U` over `V` for GEGLU.
    pub w_in: Matrix<T>,
    /// Length `w_in.rows()`; `b` then `c` for GEGLU.
    pub b_in: Vec<T>,
    /// `d x d_ff`.
    pub w_out: Matrix<T>,
}

impl<T: Real> FfnLayer<T> {
    pub fn new(activation: Activation, w_in: Matrix<T>, b_in: Vec<T>, w_out: Matrix<T>) -> Result<Self> {
        let layer = FfnLayer {
            activation,
            w_in,
            b_in,
            w_out,
        };
        layer.validate()?;
        Ok(layer)
    }

    /// Gaussian init with `1/sqrt(fan_in)` scaling and zero biases.
    pub fn random<R: Rng + ?Sized>(activation: Activation, d: usize, d_ff: usize, rng: &mut R) -> Result<Self> {
        let rows_in = if activation.is_gated() { 2 * d_ff } else { d_ff };
        let s_in = 1.0 / libm::sqrt(d as f64);
        let s_out = 1.0 / libm::sqrt(d_ff as f64);
        Self::new(
            activation,
            Matrix::random_normal(rows_in, d, Layout::RowMajor, s_in, rng),
            alloc::vec![T::zero(); rows_in],
            Matrix::random_normal(d, d_ff, Layout::RowMajor, s_out, rng),
        )
    }

    pub fn d(&self) -> usize {
        self.w_in.cols()
    }

    pub fn d_ff(&self) -> usize {
        self.w_out.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let (d, d_ff) = (self.w_out.rows(), self.w_out.cols());
        let rows_in = if self.activation.is_gated() { 2 * d_ff } else { d_ff };
        if self.w_in.shape() != (rows_in, d) {
            return Err(Error::ShapeMismatch {
                op: "FfnLayer",
                left: self.w_in.shape(),
                right: (rows_in, d),
            });
        }
        if self.b_in.len() != rows_in {
            return Err(Error::LengthMismatch {
                op: "FfnLayer bias",
                expected: rows_in,
                found: self.b_in.len(),
            });
        }
        for (what, len) in [("d", d), ("d_ff", d_ff)] {
            if len % GROUP != 0 {
                return Err(Error::NotGroupable {
                    what,
                    len,
                    group: GROUP,
                });
            }
        }
        Ok(())
    }

    /// Parameter count of the two weight matrices.
    pub fn weight_count(&self) -> usize {
        self.w_in.data().len() + self.w_out.data().len()
    }
}

/// How a weight enters the products.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightMask {
    Transposable(TransposableMask),
    /// No pruning; products run dense. Used for dense training phases.
    Dense,
}

impl WeightMask {
    pub fn is_dense(&self) -> bool {
        matches!(self, WeightMask::Dense)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerMasks {
    pub w_in: WeightMask,
    pub w_out: WeightMask,
}

impl LayerMasks {
    pub fn dense() -> Self {
        LayerMasks {
            w_in: WeightMask::Dense,
            w_out: WeightMask::Dense,
        }
    }
}

/// How the weight-gradient product treats the output gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradMode {
    /// Dense `dZ^T X`.
    Exact,
    /// `mvue_prune(dZ^T) X`, seeded.
    Mvue { seed: u64 },
}

/// A weight in both orientations ready for the sparse products.
#[derive(Debug, Clone)]
struct PreparedWeight<T: Real> {
    /// The dense weight.
    weight: Matrix<T>,
    mask: Option<TransposableMask>,
    /// `masked^T` with column-wise groups, for `A * masked^T`.
    transposed: Option<Compressed24<T>>,
    /// `masked` with column-wise groups, for `A * masked`.
    direct: Option<Compressed24<T>>,
}

impl<T: Real> PreparedWeight<T> {
    fn new(w: &Matrix<T>, mask: &WeightMask) -> Result<Self> {
        match mask {
            WeightMask::Dense => Ok(PreparedWeight {
                weight: w.clone(),
                mask: None,
                transposed: None,
                direct: None,
            }),
            WeightMask::Transposable(m) => {
                // Column-wise groups of `m` and of `m^T` are exactly the
                // block columns and block rows, so these two packings also
                // validate the transposable structure.
                let direct = Compressed24::from_masked(w, &m.to_mask24(Direction::ColWise))?;
                let t = w.clone().transpose();
                let transposed = Compressed24::from_masked(&t, &m.transpose().to_mask24(Direction::ColWise))?;
                Ok(PreparedWeight {
                    weight: t.transpose(),
                    mask: Some(m.clone()),
                    transposed: Some(transposed),
                    direct: Some(direct),
                })
            }
        }
    }

    fn masked(&self) -> Matrix<T> {
        match &self.mask {
            Some(m) => apply_mask(&self.weight, m).expect("mask shape checked on construction"),
            None => self.weight.clone(),
        }
    }

    /// `a * masked^T`.
    fn times_transposed(&self, a: &Matrix<T>) -> Result<Matrix<T>> {
        match &self.transposed {
            Some(c) => spmm_right(a, c),
            None => matmul_transposed(a, &self.weight),
        }
    }

    /// `a * masked`.
    fn times(&self, a: &Matrix<T>) -> Result<Matrix<T>> {
        match &self.direct {
            Some(c) => spmm_right(a, c),
            None => matmul(a, &self.weight),
        }
    }
}

/// Everything backward needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardBundle<T: Real = f64> {
    pub activation: Activation,
    pub x: Matrix<T>,
    pub z: Matrix<T>,
    pub h: Matrix<T>,
    pub y: Matrix<T>,
    w_in: PreparedWeight<T>,
    w_out: PreparedWeight<T>,
}

impl<T: Real> ForwardBundle<T> {
    /// `W_in` as used in the forward product.
    pub fn masked_w_in(&self) -> Matrix<T> {
        self.w_in.masked()
    }

    pub fn masked_w_out(&self) -> Matrix<T> {
        self.w_out.masked()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads<T: Real = f64> {
    pub w_in: Matrix<T>,
    pub b_in: Vec<T>,
    pub w_out: Matrix<T>,
    pub x: Matrix<T>,
}

fn activate<T: Real>(activation: Activation, z: &Matrix<T>) -> Result<Matrix<T>> {
    match activation {
        Activation::Relu => Ok(z.map(relu)),
        Activation::Gelu => Ok(z.map(gelu)),
        Activation::Geglu => {
            let order = match z.layout() {
                Layout::RowMajor => Traversal::RowOrder,
                Layout::ColMajor => Traversal::ColOrder,
            };
            geglu_gate(z, order)
        }
    }
}

/// `dL/dZ` given `dL/dH`.
fn activation_backward<T: Real>(activation: Activation, z: &Matrix<T>, dh: &Matrix<T>) -> Result<Matrix<T>> {
    match activation {
        Activation::Relu => z.zip_map(&dh.to_layout(z.layout()), |z, g| g * relu_grad(z)),
        Activation::Gelu => z.zip_map(&dh.to_layout(z.layout()), |z, g| g * gelu_grad(z)),
        Activation::Geglu => {
            let (p, r) = dh.shape();
            let z = z.as_layout(Layout::ColMajor);
            let dh = dh.as_layout(Layout::ColMajor);
            let (zd, hd) = (z.data(), dh.data());
            let mut out = alloc::vec![T::zero(); 2 * p * r];
            let (value, gate) = out.split_at_mut(p * r);
            for k in 0..p * r {
                let (a, g) = (zd[k], zd[k + p * r]);
                let (act, slope) = gelu_with_grad(a);
                value[k] = hd[k] * g * slope;
                gate[k] = hd[k] * act;
            }
            Matrix::from_vec(p, 2 * r, Layout::ColMajor, out)
        }
    }
}

/// Forward pass of `layer` on the `p x d` batch `x`.
pub fn fst_forward<T: Real>(layer: &FfnLayer<T>, x: &Matrix<T>, masks: &LayerMasks) -> Result<ForwardBundle<T>> {
    layer.validate()?;
    if x.cols() != layer.d() {
        return Err(Error::ShapeMismatch {
            op: "fst_forward",
            left: x.shape(),
            right: layer.w_in.shape(),
        });
    }
    let w_in = PreparedWeight::new(&layer.w_in, &masks.w_in)?;
    let w_out = PreparedWeight::new(&layer.w_out, &masks.w_out)?;
    let mut z = w_in.times_transposed(x)?;
    add_row_bias(&mut z, &layer.b_in);
    let h = activate(layer.activation, &z)?;
    let y = w_out.times_transposed(&h)?;
    Ok(ForwardBundle {
        activation: layer.activation,
        x: x.clone(),
        z,
        h,
        y,
        w_in,
        w_out,
    })
}

/// `dZ^T A`, optionally through the stochastic 2-of-4 estimator on `dZ^T`.
fn weight_grad<T: Real>(dz: &Matrix<T>, a: &Matrix<T>, mode: GradMode) -> Result<Matrix<T>> {
    let dzt = dz.clone().transpose();
    match mode {
        GradMode::Exact => matmul(&dzt, a),
        GradMode::Mvue { seed } => {
            let est = mvue_prune(&dzt, Direction::RowWise, seed)?;
            spmm(&Compressed24::from_masked(&est.values, &est.mask)?, a)
        }
    }
}

/// Backward pass given `upstream = dL/dY`.
///
/// The weight gradients are with respect to the masked weights; passing
/// them to the dense weights unchanged is the straight-through estimator.
pub fn fst_backward<T: Real>(bundle: &ForwardBundle<T>, upstream: &Matrix<T>, mode: GradMode) -> Result<LayerGrads<T>> {
    if upstream.shape() != bundle.y.shape() {
        return Err(Error::ShapeMismatch {
            op: "fst_backward",
            left: bundle.y.shape(),
            right: upstream.shape(),
        });
    }
    let (seed_out, seed_in) = match mode {
        GradMode::Exact => (GradMode::Exact, GradMode::Exact),
        GradMode::Mvue { seed } => (
            GradMode::Mvue { seed: splitmix64(seed) },
            GradMode::Mvue {
                seed: splitmix64(seed ^ 0x5bd1_e995),
            },
        ),
    };
    let w_out = weight_grad(upstream, &bundle.h, seed_out)?;
    let dh = bundle.w_out.times(upstream)?;
    let dz = activation_backward(bundle.activation, &bundle.z, &dh)?;
    let w_in = weight_grad(&dz, &bundle.x, seed_in)?;
    let x = bundle.w_in.times(&dz)?;
    Ok(LayerGrads {
        w_in,
        b_in: column_sums(&dz),
        w_out,
        x,
    })
}

/// Seed mixer for deriving independent per-product seeds.
pub fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparsity::{enumerate_patterns, transposable_search_conv};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(act: Activation, seed: u64) -> (FfnLayer, Matrix, LayerMasks) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = FfnLayer::random(act, 8, 12, &mut rng).unwrap();
        for b in layer.b_in.iter_mut() {
            *b = rng.random::<f64>() - 0.5;
        }
        let x = Matrix::random_normal(4, 8, Layout::RowMajor, 1.0, &mut rng);
        let table = enumerate_patterns();
        let masks = LayerMasks {
            w_in: WeightMask::Transposable(transposable_search_conv(&layer.w_in, &table).unwrap()),
            w_out: WeightMask::Transposable(transposable_search_conv(&layer.w_out, &table).unwrap()),
        };
        (layer, x, masks)
    }

    fn masked_layer(layer: &FfnLayer, masks: &LayerMasks) -> FfnLayer {
        let apply = |w: &Matrix, m: &WeightMask| match m {
            WeightMask::Dense => w.clone(),
            WeightMask::Transposable(t) => apply_mask(w, t).unwrap(),
        };
        FfnLayer {
            w_in: apply(&layer.w_in, &masks.w_in),
            w_out: apply(&layer.w_out, &masks.w_out),
            ..layer.clone()
        }
    }

    #[test]
    fn sparse_forward_matches_dense_on_masked_weights() {
        for act in [Activation::Relu, Activation::Gelu, Activation::Geglu] {
            let (layer, x, masks) = setup(act, 7);
            let sparse = fst_forward(&layer, &x, &masks).unwrap();
            let dense = fst_forward(&masked_layer(&layer, &masks), &x, &LayerMasks::dense()).unwrap();
            assert_eq!(sparse.z.layout(), Layout::ColMajor);
            assert!(sparse.z.bitwise_eq(&dense.z.to_layout(Layout::ColMajor)));
            assert!(sparse.y.max_abs_diff(&dense.y).unwrap() < 1e-14);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let (layer, x, masks) = setup(Activation::Geglu, 1);
        let fwd = fst_forward(&layer, &x, &masks).unwrap();
        let g = fst_backward(&fwd, &Matrix::zeros(4, 8, Layout::RowMajor), GradMode::Mvue { seed: 3 }).unwrap();
        assert_eq!(g.w_in.l1_norm() + g.w_out.l1_norm() + g.x.l1_norm(), 0.0);
        assert!(g.b_in.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn exact_backward_matches_dense_masked_backward() {
        let (layer, x, masks) = setup(Activation::Geglu, 2);
        let up = Matrix::from_fn(4, 8, Layout::RowMajor, |i, j| (i as f64 - j as f64) * 0.1);
        let sparse = fst_backward(&fst_forward(&layer, &x, &masks).unwrap(), &up, GradMode::Exact).unwrap();
        let ml = masked_layer(&layer, &masks);
        let dense = fst_backward(
            &fst_forward(&ml, &x, &LayerMasks::dense()).unwrap(),
            &up,
            GradMode::Exact,
        )
        .unwrap();
        assert!(sparse.w_in.max_abs_diff(&dense.w_in).unwrap() < 1e-13);
        assert!(sparse.w_out.max_abs_diff(&dense.w_out).unwrap() < 1e-13);
        assert!(sparse.x.max_abs_diff(&dense.x).unwrap() < 1e-13);
    }

    #[test]
    fn stale_masks_reproduce_output() {
        let (layer, x, masks) = setup(Activation::Gelu, 4);
        let a = fst_forward(&layer, &x, &masks).unwrap();
        let b = fst_forward(&layer, &x, &masks.clone()).unwrap();
        assert!(a.y.bitwise_eq(&b.y));
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(FfnLayer::<f64>::random(Activation::Relu, 6, 8, &mut rng).is_err());
        let (layer, _, masks) = setup(Activation::Relu, 0);
        let x = Matrix::zeros(4, 4, Layout::RowMajor);
        assert!(fst_forward(&layer, &x, &masks).is_err());
    }
}
