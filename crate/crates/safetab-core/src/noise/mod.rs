//! Integer noise distributions: PMFs, tail bounds, MOE formulas, and exact
//! samplers for the two-sided geometric and discrete Gaussian distributions.
//!
//! The two-sided geometric (discrete Laplace) distribution with scale `b`
//! puts mass `((e^{1/b}−1)/(e^{1/b}+1))·e^{−|x|/b}` on every integer `x`;
//! the count mechanism built on it with `b = 1/ε` is ε-differentially
//! private for sensitivity-1 counts. The discrete Gaussian with variance
//! parameter `σ²` puts mass proportional to `e^{−x²/2σ²}`; the mechanism
//! with `σ² = 1/(2ρ)` satisfies ρ-zCDP.
//!
//! All PMF and tail evaluation is done in the log domain; sampling is done
//! with exact integer/rational arithmetic in [`samplers`].

pub mod samplers;

pub use samplers::{GaussianSampler, GeometricSampler};

use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::Real;

/// A single noise draw. Sample magnitudes are astronomically far from
/// exhausting `i64` at any scale this crate accepts.
pub type NoiseSample = i64;

/// Scale of the two-sided geometric distribution; `b = 1/ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricScale<F: Real> {
    b: F,
}

impl<F: Real> GeometricScale<F> {
    pub fn new(b: F) -> Result<Self> {
        if !b.is_finite() || b <= F::zero() {
            return Err(Error::invalid_parameter(format!(
                "geometric scale b must be positive and finite, got {b}"
            )));
        }
        Ok(GeometricScale { b })
    }

    /// Scale from the pure-DP loss of a sensitivity-1 count: `b = 1/ε`.
    pub fn from_epsilon(epsilon: F) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= F::zero() {
            return Err(Error::invalid_parameter(format!(
                "epsilon must be positive and finite, got {epsilon}"
            )));
        }
        GeometricScale::new(epsilon.recip())
    }

    pub fn b(&self) -> F {
        self.b
    }

    pub fn epsilon(&self) -> F {
        self.b.recip()
    }
}

/// Variance parameter of the discrete Gaussian; `σ² = 1/(2ρ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianScale<F: Real> {
    sigma2: F,
}

impl<F: Real> GaussianScale<F> {
    pub fn new(sigma2: F) -> Result<Self> {
        if !sigma2.is_finite() || sigma2 <= F::zero() {
            return Err(Error::invalid_parameter(format!(
                "discrete Gaussian sigma^2 must be positive and finite, got {sigma2}"
            )));
        }
        Ok(GaussianScale { sigma2 })
    }

    /// Scale from the zCDP loss of a sensitivity-1 count: `σ² = 1/(2ρ)`.
    pub fn from_rho(rho: F) -> Result<Self> {
        if !rho.is_finite() || rho <= F::zero() {
            return Err(Error::invalid_parameter(format!(
                "rho must be positive and finite, got {rho}"
            )));
        }
        GaussianScale::new((F::from_f64(2.0).unwrap() * rho).recip())
    }

    pub fn sigma2(&self) -> F {
        self.sigma2
    }

    pub fn sigma(&self) -> F {
        self.sigma2.sqrt()
    }
}

/// log of the geometric PMF's normalizing constant `(e^{1/b}−1)/(e^{1/b}+1)`,
/// written so it stays finite for arbitrarily small `b`.
fn ln_geometric_const<F: Real>(inv_b: F) -> F {
    let e = (-inv_b).exp();
    (-e).ln_1p() - e.ln_1p()
}

/// PMF of the two-sided geometric distribution at integer `x`.
pub fn geometric_pmf<F: Real>(x: i64, scale: &GeometricScale<F>) -> F {
    let inv_b = scale.b.recip();
    let abs_x = F::from_u64(x.unsigned_abs()).unwrap();
    (ln_geometric_const(inv_b) - abs_x * inv_b).exp()
}

/// PMF of the discrete Gaussian at integer `x`.
///
/// The normalizer is a truncated sum over `|y| ≤ ⌈20σ⌉+1`; the neglected
/// mass is below `2·e^{-200}` of the total, far under every tolerance used
/// by callers and tests.
pub fn dgauss_pmf<F: Real>(x: i64, scale: &GaussianScale<F>) -> F {
    let two = F::from_f64(2.0).unwrap();
    let half_inv_var = (two * scale.sigma2).recip();
    let radius = (F::from_f64(20.0).unwrap() * scale.sigma())
        .ceil()
        .to_i64()
        .unwrap_or(i64::MAX - 1)
        + 1;
    let mut normalizer = F::one(); // y = 0 term
    for y in 1..=radius {
        let yf = F::from_i64(y).unwrap();
        normalizer = normalizer + two * (-yf * yf * half_inv_var).exp();
    }
    let xf = F::from_i64(x).unwrap();
    (-xf * xf * half_inv_var).exp() / normalizer
}

/// Upper bound on `Pr[Y ≥ y]` for `Y` two-sided geometric with scale `b`:
/// `e^{−⌈y⌉/b} / (1 + e^{−1/b})`. At integer `y` the bound is tight.
pub fn geometric_tail<F: Real>(y: F, scale: &GeometricScale<F>) -> F {
    let inv_b = scale.b.recip();
    (-y.ceil() * inv_b).exp() / (F::one() + (-inv_b).exp())
}

/// 95% margin of error of the two-sided geometric: `⌊b·ln(40/(1+e^{1/b}))⌋`,
/// clamped to 0 when the expression is negative (very small `b`).
pub fn moe_geometric<F: Real>(scale: &GeometricScale<F>) -> u64 {
    let inv_b = scale.b.recip();
    // ln(1 + e^{1/b}) = 1/b + ln1p(e^{-1/b}), stable for any b > 0.
    let softplus = inv_b + (-inv_b).exp().ln_1p();
    let expr = scale.b * (F::from_f64(40.0).unwrap().ln() - softplus);
    if !expr.is_finite() || expr < F::zero() {
        return 0;
    }
    expr.floor().to_u64().unwrap_or(u64::MAX)
}

/// Pure-DP loss whose geometric mechanism has 95% MOE at most `moe`:
/// `ε = ln(20)/(⌊moe⌋+1)`. Non-integer inputs are floored.
pub fn epsilon_from_moe<F: Real>(moe: F) -> Result<F> {
    let m = moe.floor();
    if !m.is_finite() || m < F::one() {
        return Err(Error::invalid_parameter(format!(
            "MOE target must be at least 1, got {moe}"
        )));
    }
    Ok(F::from_f64(20.0).unwrap().ln() / (m + F::one()))
}

/// 95% margin of error of the discrete Gaussian: `⌊1.96σ⌋`.
pub fn moe_dgauss<F: Real>(scale: &GaussianScale<F>) -> u64 {
    (F::from_f64(1.96).unwrap() * scale.sigma())
        .floor()
        .to_u64()
        .unwrap_or(u64::MAX)
}

/// zCDP loss whose discrete Gaussian mechanism has 95% MOE at most `moe`:
/// `ρ = 1.92/⌊moe⌋²`. Non-integer inputs are floored.
pub fn rho_from_moe<F: Real>(moe: F) -> Result<F> {
    let m = moe.floor();
    if !m.is_finite() || m < F::one() {
        return Err(Error::invalid_parameter(format!(
            "MOE target must be at least 1, got {moe}"
        )));
    }
    Ok(F::from_f64(1.92).unwrap() / (m * m))
}

/// Draw one two-sided geometric sample. Exact: the scale's `b` is converted
/// to the dyadic rational of `1/b` and sampled with integer arithmetic.
/// Callers drawing many samples should build a [`GeometricSampler`] once.
pub fn sample_geometric(scale: &GeometricScale<f64>, rng: &mut RandomSource) -> NoiseSample {
    GeometricSampler::from_scale(scale).sample(rng)
}

/// Draw one discrete Gaussian sample; exact, see [`sample_geometric`].
pub fn sample_dgauss(scale: &GaussianScale<f64>, rng: &mut RandomSource) -> NoiseSample {
    GaussianSampler::from_scale(scale).sample(rng)
}
