use crate::matrix::Real;

const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;
/// 1 / sqrt(2 pi)
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Feed-forward nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    Relu,
    Gelu,
    /// `GELU(x U^T + b) * (x V^T + c)`; the input projection is twice as wide.
    Geglu,
}

impl Activation {
    pub fn is_gated(self) -> bool {
        matches!(self, Activation::Geglu)
    }
}

/// Exact GELU, `x * Phi(x)`.
#[inline]
pub fn gelu<T: Real>(x: T) -> T {
    let half = T::from_f64(0.5);
    half * x * (T::one() + (x * T::from_f64(FRAC_1_SQRT_2)).erf())
}

/// `d/dx [x Phi(x)] = Phi(x) + x phi(x)`.
#[inline]
pub fn gelu_grad<T: Real>(x: T) -> T {
    let half = T::from_f64(0.5);
    let cdf = half * (T::one() + (x * T::from_f64(FRAC_1_SQRT_2)).erf());
    let pdf = T::from_f64(INV_SQRT_2PI) * (-half * x * x).exp();
    cdf + x * pdf
}

/// `(gelu(x), gelu_grad(x))` with one `erf`; bitwise equal to the two
/// separate calls.
#[inline]
pub(crate) fn gelu_with_grad<T: Real>(x: T) -> (T, T) {
    let half = T::from_f64(0.5);
    let cdf = half * (T::one() + (x * T::from_f64(FRAC_1_SQRT_2)).erf());
    let pdf = T::from_f64(INV_SQRT_2PI) * (-half * x * x).exp();
    (x * cdf, cdf + x * pdf)
}

#[inline]
pub fn relu<T: Real>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

#[inline]
pub fn relu_grad<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        T::zero()
    }
}
