use fst24_core::ffn::{
    concat_rows, fst_backward, fst_forward, geglu_backward, geglu_forward, Activation, FfnLayer, GradMode, LayerMasks,
    Traversal, WeightMask,
};
use fst24_core::matrix::{Layout, Matrix};
use fst24_core::oracle::{central_difference, ffn_forward, relative_error};
use fst24_core::sparsity::{apply_mask, enumerate_patterns, transposable_search_conv};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;
const TOL: f64 = 1e-5;

fn identity(n: usize) -> Matrix {
    Matrix::from_fn(n, n, Layout::RowMajor, |i, j| if i == j { 1.0 } else { 0.0 })
}

fn with_data(like: &Matrix, data: &[f64]) -> Matrix {
    Matrix::from_fn(like.rows(), like.cols(), Layout::RowMajor, |i, j| {
        data[i * like.cols() + j]
    })
}

fn flat(m: &Matrix) -> Vec<f64> {
    m.to_layout(Layout::RowMajor).into_data()
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

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-0.5..0.5)).collect()
}

#[test]
fn geglu_backward_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let (p, q, r) = (4, 8, 4);
        let x: Matrix = Matrix::random_normal(p, q, Layout::RowMajor, 1.0, &mut rng);
        let u: Matrix = Matrix::random_normal(r, q, Layout::RowMajor, 0.5, &mut rng);
        let v: Matrix = Matrix::random_normal(r, q, Layout::RowMajor, 0.5, &mut rng);
        let b = random_vec(r, &mut rng);
        let c = random_vec(r, &mut rng);
        let up: Matrix = Matrix::random_normal(p, r, Layout::RowMajor, 1.0, &mut rng);
        let grads = geglu_backward(&x, &u, &v, &b, &c, &up).unwrap();

        // The reference forward is the unfused scalar one, read through an
        // identity output projection.
        let eye = identity(r);
        let loss = |x: &Matrix, u: &Matrix, v: &Matrix, b: &[f64], c: &[f64]| {
            let bias: Vec<f64> = b.iter().chain(c).copied().collect();
            let out = ffn_forward(Activation::Geglu, &concat_rows(u, v).unwrap(), &bias, &eye, x);
            dot(&out, &up)
        };

        let fd = central_difference(&mut |d| loss(&with_data(&x, d), &u, &v, &b, &c), &flat(&x), H);
        assert!(relative_error(&fd, &flat(&grads.x)) < TOL);
        let fd = central_difference(&mut |d| loss(&x, &with_data(&u, d), &v, &b, &c), &flat(&u), H);
        assert!(relative_error(&fd, &flat(&grads.u)) < TOL);
        let fd = central_difference(&mut |d| loss(&x, &u, &with_data(&v, d), &b, &c), &flat(&v), H);
        assert!(relative_error(&fd, &flat(&grads.v)) < TOL);
        let fd = central_difference(&mut |d| loss(&x, &u, &v, d, &c), &b, H);
        assert!(relative_error(&fd, &grads.b) < TOL);
        let fd = central_difference(&mut |d| loss(&x, &u, &v, &b, d), &c, H);
        assert!(relative_error(&fd, &grads.c) < TOL);
    }
}

#[test]
fn fused_geglu_matches_unfused_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..10 {
        let x: Matrix = Matrix::random_normal(8, 16, Layout::RowMajor, 1.0, &mut rng);
        let u: Matrix = Matrix::random_normal(12, 16, Layout::RowMajor, 0.3, &mut rng);
        let v: Matrix = Matrix::random_normal(12, 16, Layout::RowMajor, 0.3, &mut rng);
        let b = random_vec(12, &mut rng);
        let c = random_vec(12, &mut rng);
        let bias: Vec<f64> = b.iter().chain(&c).copied().collect();
        let expected = ffn_forward(
            Activation::Geglu,
            &concat_rows(&u, &v).unwrap(),
            &bias,
            &identity(12),
            &x,
        );
        let row = geglu_forward(&x, &u, &v, &b, &c, Traversal::RowOrder).unwrap();
        let col = geglu_forward(&x, &u, &v, &b, &c, Traversal::ColOrder).unwrap();
        assert!(row.bitwise_eq(&col));
        assert!(row.max_abs_diff(&expected).unwrap() < 1e-12);
    }
}

/// Gradients of the sparse layer with exact weight products against
/// central differences of the dense reference at the masked weights.
fn check_fst_layer(activation: Activation, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p, d, d_ff) = (4, 8, 8);
    let mut layer: FfnLayer = FfnLayer::random(activation, d, d_ff, &mut rng).unwrap();
    layer.b_in = random_vec(layer.b_in.len(), &mut rng);
    let table = enumerate_patterns();
    let m_in = transposable_search_conv(&layer.w_in, &table).unwrap();
    let m_out = transposable_search_conv(&layer.w_out, &table).unwrap();
    let w_in = apply_mask(&layer.w_in, &m_in).unwrap();
    let w_out = apply_mask(&layer.w_out, &m_out).unwrap();
    let masks = LayerMasks {
        w_in: WeightMask::Transposable(m_in),
        w_out: WeightMask::Transposable(m_out),
    };
    let x: Matrix = Matrix::random_normal(p, d, Layout::RowMajor, 1.0, &mut rng);
    let up: Matrix = Matrix::random_normal(p, d, Layout::RowMajor, 1.0, &mut rng);

    let bundle = fst_forward(&layer, &x, &masks).unwrap();
    let reference = ffn_forward(activation, &w_in, &layer.b_in, &w_out, &x);
    assert!(bundle.y.max_abs_diff(&reference).unwrap() < 1e-12);
    let grads = fst_backward(&bundle, &up, GradMode::Exact).unwrap();

    let b = &layer.b_in;
    let loss =
        |w_in: &Matrix, b: &[f64], w_out: &Matrix, x: &Matrix| dot(&ffn_forward(activation, w_in, b, w_out, x), &up);
    let fd = central_difference(&mut |v| loss(&with_data(&w_in, v), b, &w_out, &x), &flat(&w_in), H);
    assert!(relative_error(&fd, &flat(&grads.w_in)) < TOL, "{activation:?} w_in");
    let fd = central_difference(&mut |v| loss(&w_in, v, &w_out, &x), b, H);
    assert!(relative_error(&fd, &grads.b_in) < TOL, "{activation:?} b_in");
    let fd = central_difference(&mut |v| loss(&w_in, b, &with_data(&w_out, v), &x), &flat(&w_out), H);
    assert!(relative_error(&fd, &flat(&grads.w_out)) < TOL, "{activation:?} w_out");
    let fd = central_difference(&mut |v| loss(&w_in, b, &w_out, &with_data(&x, v)), &flat(&x), H);
    assert!(relative_error(&fd, &flat(&grads.x)) < TOL, "{activation:?} x");
}

#[test]
fn fst_layer_matches_central_differences() {
    for seed in 0..7 {
        for activation in [Activation::Relu, Activation::Gelu, Activation::Geglu] {
            check_fst_layer(activation, 100 + seed);
        }
    }
}

#[test]
fn dense_masks_reduce_to_the_dense_layer() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for activation in [Activation::Relu, Activation::Gelu, Activation::Geglu] {
        let layer: FfnLayer = FfnLayer::random(activation, 16, 32, &mut rng).unwrap();
        let x: Matrix = Matrix::random_normal(8, 16, Layout::RowMajor, 1.0, &mut rng);
        let bundle = fst_forward(&layer, &x, &LayerMasks::dense()).unwrap();
        let reference = ffn_forward(activation, &layer.w_in, &layer.b_in, &layer.w_out, &x);
        assert!(bundle.y.max_abs_diff(&reference).unwrap() < 1e-12);
    }
}
