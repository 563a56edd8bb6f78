//! Exact integer samplers for the two-sided geometric and discrete Gaussian
//! distributions.
//!
//! Floating-point inverse-CDF sampling distorts the tails of discrete noise
//! distributions and with them the privacy guarantee, so everything here is
//! built from a single exact primitive: Bernoulli(e^{-γ}) for a rational
//! γ ≥ 0, sampled with integer comparisons only.
//!
//! * Two-sided geometric with scale `b = 1/ε`, ε = n/d rational: the
//!   difference of two i.i.d. one-sided geometric variates, each counting
//!   Bernoulli(e^{-ε}) successes before the first failure. For `G ~ Geom`
//!   with `Pr[G=k] = (1-c)c^k`, `c = e^{-ε}`, the difference `G₁ - G₂` has
//!   mass `((1-c)/(1+c))·c^{|x|}`, exactly the two-sided geometric.
//! * Discrete Gaussian with rational `σ²`: rejection from a two-sided
//!   geometric with scale `t = ⌊σ⌋+1`, accepting with probability
//!   `exp(-(|y| - σ²/t)²/(2σ²))`; the proposal times the acceptance is
//!   proportional to `exp(-y²/2σ²)`.
//!
//! Parameters supplied as `f64` are converted to their exact dyadic
//! rational, so the sampled law is exactly the one reported back by the
//! scale's accessors.

use num_bigint::{BigInt, BigUint};
use num_rational::{BigRational, Ratio};
use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::noise::{GaussianScale, GeometricScale, NoiseSample};
use crate::rng::RandomSource;

/// Bernoulli(e^{-num/den}) for num/den ∈ [0, 1].
///
/// Draws Bernoulli(γ/k) for k = 1, 2, ... while they succeed; the stopping
/// parity has success probability Σ (-γ)^k/k! = e^{-γ}.
fn bernoulli_exp_frac(num: &BigUint, den: &BigUint, rng: &mut RandomSource) -> bool {
    debug_assert!(num <= den);
    let mut k: u64 = 1;
    loop {
        let dk = den * k;
        if rng.bernoulli_ratio(num, &dk) {
            k += 1;
        } else {
            return k % 2 == 1;
        }
    }
}

/// Bernoulli(e^{-num/den}) for any rational num/den ≥ 0, by chaining
/// ⌊γ⌋ draws of Bernoulli(e^{-1}) with one fractional draw. Short-circuits
/// on the first failure, so the expected cost is O(1) even for large γ.
fn bernoulli_exp(num: &BigUint, den: &BigUint, rng: &mut RandomSource) -> bool {
    let whole = num / den;
    let rem = num % den;
    let one = BigUint::from(1u32);
    let mut i = BigUint::ZERO;
    while i < whole {
        if !bernoulli_exp_frac(&one, &one, rng) {
            return false;
        }
        i += 1u32;
    }
    bernoulli_exp_frac(&rem, den, rng)
}

/// One-sided geometric: number of Bernoulli(e^{-ε}) successes before the
/// first failure; `Pr[G=k] = (1-e^{-ε})·e^{-εk}`.
fn one_sided_geometric(eps_num: &BigUint, eps_den: &BigUint, rng: &mut RandomSource) -> i64 {
    let mut count: i64 = 0;
    while bernoulli_exp(eps_num, eps_den, rng) {
        count += 1;
    }
    count
}

fn to_positive_ratio(value: f64, what: &str) -> Result<Ratio<BigUint>> {
    if !value.is_finite() || value <= 0.0 {
        return Err(Error::invalid_parameter(format!(
            "{what} must be positive and finite, got {value}"
        )));
    }
    let r = BigRational::from_float(value)
        .ok_or_else(|| Error::invalid_parameter(format!("{what} is not representable")))?;
    Ok(Ratio::new(
        r.numer().magnitude().clone(),
        r.denom().magnitude().clone(),
    ))
}

/// Exact sampler for the two-sided geometric distribution with rational
/// scale `b = den(ε)/num(ε)`.
#[derive(Debug, Clone)]
pub struct GeometricSampler {
    eps_num: BigUint,
    eps_den: BigUint,
}

impl GeometricSampler {
    /// Sampler for `L_Z(1/ε)` with ε given as an exact rational.
    pub fn from_epsilon_rational(eps: Ratio<BigUint>) -> Result<Self> {
        if eps.numer().is_zero() {
            return Err(Error::invalid_parameter("epsilon must be positive"));
        }
        let (eps_num, eps_den) = eps.into_raw();
        Ok(GeometricSampler { eps_num, eps_den })
    }

    /// Sampler for `L_Z(1/ε)` with ε converted exactly from its `f64`
    /// (dyadic rational) representation.
    pub fn from_epsilon_f64(eps: f64) -> Result<Self> {
        GeometricSampler::from_epsilon_rational(to_positive_ratio(eps, "epsilon")?)
    }

    /// Sampler matching a validated scale; uses the dyadic rational of `1/b`.
    pub fn from_scale(scale: &GeometricScale<f64>) -> Self {
        // The scale invariant (b positive, finite) makes this infallible.
        GeometricSampler::from_epsilon_f64(scale.epsilon()).expect("valid scale")
    }

    pub fn sample(&self, rng: &mut RandomSource) -> NoiseSample {
        let g1 = one_sided_geometric(&self.eps_num, &self.eps_den, rng);
        let g2 = one_sided_geometric(&self.eps_num, &self.eps_den, rng);
        g1 - g2
    }
}

/// Exact sampler for the discrete Gaussian distribution with rational `σ²`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    /// σ² = sigma2_num / sigma2_den.
    sigma2_num: BigUint,
    sigma2_den: BigUint,
    /// Proposal scale t = ⌊σ⌋ + 1.
    t: BigUint,
    /// Denominator of the acceptance exponent: 2·N·D·t².
    accept_den: BigUint,
}

impl GaussianSampler {
    /// Sampler for `N_Z(σ²)` with σ² given as an exact rational.
    pub fn from_sigma2_rational(sigma2: Ratio<BigUint>) -> Result<Self> {
        if sigma2.numer().is_zero() {
            return Err(Error::invalid_parameter("sigma^2 must be positive"));
        }
        let (n, d) = sigma2.into_raw();
        // ⌊σ⌋ = ⌊√(N/D)⌋ = ⌊⌊√(N·D)⌋ / D⌋.
        let t = (&n * &d).sqrt() / &d + 1u32;
        let accept_den = BigUint::from(2u32) * &n * &d * (&t * &t);
        Ok(GaussianSampler {
            sigma2_num: n,
            sigma2_den: d,
            t,
            accept_den,
        })
    }

    /// Sampler for `N_Z(1/(2ρ))` with ρ converted exactly from `f64`;
    /// the reciprocal is formed in rational arithmetic, so σ² is exact.
    pub fn from_rho_f64(rho: f64) -> Result<Self> {
        let rho = to_positive_ratio(rho, "rho")?;
        let (n, d) = rho.into_raw();
        GaussianSampler::from_sigma2_rational(Ratio::new(d, n * 2u32))
    }

    /// Sampler matching a validated scale; uses the dyadic rational of σ².
    pub fn from_scale(scale: &GaussianScale<f64>) -> Self {
        let sigma2 = to_positive_ratio(scale.sigma2(), "sigma^2").expect("valid scale");
        GaussianSampler::from_sigma2_rational(sigma2).expect("valid scale")
    }

    pub fn sample(&self, rng: &mut RandomSource) -> NoiseSample {
        let one = BigUint::from(1u32);
        loop {
            // Proposal: two-sided geometric with scale t (ε = 1/t).
            let y = {
                let g1 = one_sided_geometric(&one, &self.t, rng);
                let g2 = one_sided_geometric(&one, &self.t, rng);
                g1 - g2
            };
            // Accept with probability exp(-(|y| - σ²/t)² / (2σ²)); the
            // exponent is (|y|·D·t - N)² / (2·N·D·t²) ≥ 0.
            let signed = BigInt::from(y.unsigned_abs()) * BigInt::from(&self.sigma2_den * &self.t)
                - BigInt::from(self.sigma2_num.clone());
            let accept_num = signed.abs().magnitude().pow(2);
            if bernoulli_exp(&accept_num, &self.accept_den, rng) {
                return y;
            }
        }
    }
}
