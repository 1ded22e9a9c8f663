//! GEGLU as concatenate -> one GEMM -> split-and-gate.
//!
//! The gating pass only reads `Z` elementwise, so the visiting order can
//! follow the storage layout of `Z`. Under sparse training `Z` comes out of
//! a right-sparse product and is column-major; walking it column by column
//! touches memory contiguously.

use alloc::vec::Vec;

use super::activation::{gelu, gelu_grad};
use crate::error::{Error, Result};
use crate::matrix::{column_sums, matmul, matmul_transposed, Layout, Matrix, Real};

/// Visiting order of the gating pass. Does not change the result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Traversal {
    RowOrder,
    ColOrder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GegluGrads<T: Real = f64> {
    pub x: Matrix<T>,
    pub u: Matrix<T>,
    pub v: Matrix<T>,
    pub b: Vec<T>,
    pub c: Vec<T>,
}

/// Stacks `u` over `v`.
pub fn concat_rows<T: Real>(u: &Matrix<T>, v: &Matrix<T>) -> Result<Matrix<T>> {
    u.check_same_shape(v, "concat_rows")?;
    let r = u.rows();
    Ok(Matrix::from_fn(2 * r, u.cols(), Layout::RowMajor, |i, j| {
        if i < r {
            u.get(i, j)
        } else {
            v.get(i - r, j)
        }
    }))
}

/// Splits `z = [z1 | z2]` (p x 2r) and returns `GELU(z1) * z2` in `z`'s
/// layout.
pub fn geglu_gate<T: Real>(z: &Matrix<T>, traversal: Traversal) -> Result<Matrix<T>> {
    if !z.cols().is_multiple_of(2) {
        return Err(Error::NotGroupable {
            what: "gated column",
            len: z.cols(),
            group: 2,
        });
    }
    let (p, r) = (z.rows(), z.cols() / 2);
    let mut out = Matrix::zeros(p, r, z.layout());
    let zd = z.data();
    // Offsets of (i, j) in z and in out, and of (i, j + r) in z.
    let (zi, zj, oi, oj) = match z.layout() {
        Layout::RowMajor => (2 * r, 1, r, 1),
        Layout::ColMajor => (1, p, 1, p),
    };
    let gate_shift = r * zj;
    let od = out.data_mut();
    match traversal {
        Traversal::RowOrder => {
            for i in 0..p {
                for j in 0..r {
                    let k = i * zi + j * zj;
                    od[i * oi + j * oj] = gelu(zd[k]) * zd[k + gate_shift];
                }
            }
        }
        Traversal::ColOrder => {
            for j in 0..r {
                for i in 0..p {
                    let k = i * zi + j * zj;
                    od[i * oi + j * oj] = gelu(zd[k]) * zd[k + gate_shift];
                }
            }
        }
    }
    Ok(out)
}

pub(crate) fn add_row_bias<T: Real>(z: &mut Matrix<T>, bias: &[T]) {
    for i in 0..z.rows() {
        for (j, &bj) in bias.iter().enumerate() {
            let k = z.offset(i, j);
            z.data_mut()[k] += bj;
        }
    }
}

fn check_operands<T: Real>(x: &Matrix<T>, u: &Matrix<T>, v: &Matrix<T>, b: &[T], c: &[T]) -> Result<()> {
    u.check_same_shape(v, "geglu")?;
    if x.cols() != u.cols() {
        return Err(Error::ShapeMismatch {
            op: "geglu",
            left: x.shape(),
            right: u.shape(),
        });
    }
    for bias in [b, c] {
        if bias.len() != u.rows() {
            return Err(Error::LengthMismatch {
                op: "geglu bias",
                expected: u.rows(),
                found: bias.len(),
            });
        }
    }
    Ok(())
}

/// `GELU(x u^T + b) * (x v^T + c)` through the fused pipeline. The
/// intermediate is computed column-major, as a right-sparse product would
/// produce it.
pub fn geglu_forward<T: Real>(
    x: &Matrix<T>,
    u: &Matrix<T>,
    v: &Matrix<T>,
    b: &[T],
    c: &[T],
    traversal: Traversal,
) -> Result<Matrix<T>> {
    check_operands(x, u, v, b, c)?;
    let w = concat_rows(u, v)?;
    let bias: Vec<T> = b.iter().chain(c).copied().collect();
    // (w x^T)^T is x w^T stored column-major.
    let mut z = matmul_transposed(&w, x)?.transpose();
    add_row_bias(&mut z, &bias);
    geglu_gate(&z, traversal)
}

/// Gradients of `sum(upstream * GEGLU(x, u, v, b, c))` with respect to all
/// five operands.
pub fn geglu_backward<T: Real>(
    x: &Matrix<T>,
    u: &Matrix<T>,
    v: &Matrix<T>,
    b: &[T],
    c: &[T],
    upstream: &Matrix<T>,
) -> Result<GegluGrads<T>> {
    check_operands(x, u, v, b, c)?;
    let (p, r) = (x.rows(), u.rows());
    if upstream.shape() != (p, r) {
        return Err(Error::ShapeMismatch {
            op: "geglu_backward",
            left: (p, r),
            right: upstream.shape(),
        });
    }
    let mut a = matmul_transposed(x, u)?;
    add_row_bias(&mut a, b);
    let mut g = matmul_transposed(x, v)?;
    add_row_bias(&mut g, c);

    let da = Matrix::from_fn(p, r, Layout::RowMajor, |i, j| {
        upstream.get(i, j) * g.get(i, j) * gelu_grad(a.get(i, j))
    });
    let dg = Matrix::from_fn(p, r, Layout::RowMajor, |i, j| upstream.get(i, j) * gelu(a.get(i, j)));

    let du = matmul(&da.clone().transpose(), x)?;
    let dv = matmul(&dg.clone().transpose(), x)?;
    let dx_u = matmul(&da, u)?;
    let dx_v = matmul(&dg, v)?;
    Ok(GegluGrads {
        x: dx_u.zip_map(&dx_v, |p, q| p + q)?,
        u: du,
        v: dv,
        b: column_sums(&da),
        c: column_sums(&dg),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparsity::group_count;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::random_normal(rows, cols, Layout::RowMajor, 1.0, rng)
    }

    #[test]
    fn unit_gate_reduces_to_gelu() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = rand(8, 16, &mut rng);
        let u = rand(12, 16, &mut rng);
        let v = Matrix::zeros(12, 16, Layout::RowMajor);
        let b: Vec<f64> = (0..12).map(|k| 0.1 * k as f64).collect();
        let c = alloc::vec![1.0; 12];
        let out = geglu_forward(&x, &u, &v, &b, &c, Traversal::ColOrder).unwrap();
        let mut a = matmul(&x, &u.clone().transpose()).unwrap();
        add_row_bias(&mut a, &b);
        assert!(out.max_abs_diff(&a.map(gelu)).unwrap() < 1e-12);
    }

    #[test]
    fn traversal_order_is_bitwise_irrelevant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = rand(9, 14, &mut rng).to_layout(Layout::ColMajor);
        let row = geglu_gate(&z, Traversal::RowOrder).unwrap();
        let col = geglu_gate(&z, Traversal::ColOrder).unwrap();
        assert!(row.bitwise_eq(&col));
        let zr = z.to_layout(Layout::RowMajor);
        assert!(geglu_gate(&zr, Traversal::ColOrder).unwrap().bitwise_eq(&row));
        assert_eq!(group_count(4, 4), 4);
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (x, u, v) = (rand(4, 8, &mut rng), rand(4, 8, &mut rng), rand(4, 8, &mut rng));
        let b = alloc::vec![0.3; 4];
        let up = Matrix::zeros(4, 4, Layout::RowMajor);
        let g = geglu_backward(&x, &u, &v, &b, &b, &up).unwrap();
        assert_eq!(g.x.l1_norm() + g.u.l1_norm() + g.v.l1_norm(), 0.0);
        assert!(g.b.iter().chain(&g.c).all(|&t| t == 0.0));
    }

    #[test]
    fn shape_errors() {
        let x = Matrix::<f64>::zeros(4, 8, Layout::RowMajor);
        let u = Matrix::zeros(4, 6, Layout::RowMajor);
        let b = alloc::vec![0.0; 4];
        assert!(geglu_forward(&x, &u, &u, &b, &b, Traversal::RowOrder).is_err());
        let u = Matrix::zeros(4, 8, Layout::RowMajor);
        assert!(geglu_forward(&x, &u, &u, &b[..3], &b, Traversal::RowOrder).is_err());
        assert!(geglu_gate(&Matrix::<f64>::zeros(2, 3, Layout::RowMajor), Traversal::RowOrder).is_err());
    }
}
