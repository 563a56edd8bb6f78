//! Privacy-loss bookkeeping.
//!
//! The pieces, in dependency order:
//!
//! * [`tau_geometric`] — the RDP curve of the base geometric mechanism
//!   (closed form derived from the continuous-density integral; the exact
//!   discrete sum is available separately as an oracle and diagnostic).
//! * [`renyi_to_approx_dp`] — the (α, τ) → (ε, δ) conversion.
//! * [`zcdp_to_approx_dp_analytic`] / [`zcdp_to_approx_dp_grid`] — the loose
//!   closed-form and the grid-minimized zCDP → approximate-DP conversions.
//! * [`compose_sequential`] / [`compose_parallel_generalized`] — the additive
//!   sequential rule and the degree-scaled generalized parallel rule, shared
//!   verbatim by pure DP (ε), zCDP (ρ), and fixed-α RDP (τ).
//! * [`safetab_pure_dp_loss`] / [`safetab_zcdp_loss`] / [`safetab_rdp_loss`]
//!   — the end-to-end loss of a multi-level tabulation run.
//!
//! All functions are pure; grid minimization is order-independent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

/// Base noise mechanism selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Geometric,
    DiscreteGaussian,
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mechanism::Geometric => f.write_str("geometric"),
            Mechanism::DiscreteGaussian => f.write_str("discrete_gaussian"),
        }
    }
}

impl std::str::FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometric" => Ok(Mechanism::Geometric),
            "discrete_gaussian" | "discrete-gaussian" => Ok(Mechanism::DiscreteGaussian),
            other => Err(Error::invalid_config(format!(
                "unknown mechanism {other:?} (expected \"geometric\" or \"discrete_gaussian\")"
            ))),
        }
    }
}

/// A mechanism-tagged privacy-loss parameter: pure-DP ε for the geometric
/// mechanism, zCDP ρ for the discrete Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget<F: Real> {
    pub mechanism: Mechanism,
    pub value: F,
}

impl<F: Real> Budget<F> {
    pub fn new(mechanism: Mechanism, value: F) -> Result<Self> {
        if !value.is_finite() || value <= F::zero() {
            return Err(Error::invalid_parameter(format!(
                "budget must be positive and finite, got {value}"
            )));
        }
        Ok(Budget { mechanism, value })
    }
}

/// An (α, τ) Rényi-DP guarantee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdpPoint<F: Real> {
    pub alpha: F,
    pub tau: F,
}

impl<F: Real> RdpPoint<F> {
    pub fn new(alpha: F, tau: F) -> Result<Self> {
        if !alpha.is_finite() || alpha <= F::one() {
            return Err(Error::invalid_parameter(format!(
                "RDP order alpha must exceed 1, got {alpha}"
            )));
        }
        if !tau.is_finite() || tau < F::zero() {
            return Err(Error::invalid_parameter(format!(
                "RDP bound tau must be nonnegative, got {tau}"
            )));
        }
        Ok(RdpPoint { alpha, tau })
    }
}

/// An (ε, δ) approximate-DP guarantee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxDp<F: Real> {
    pub epsilon: F,
    pub delta: F,
}

impl<F: Real> ApproxDp<F> {
    pub fn new(epsilon: F, delta: F) -> Result<Self> {
        if !epsilon.is_finite() || epsilon < F::zero() {
            return Err(Error::invalid_parameter(format!(
                "epsilon must be nonnegative and finite, got {epsilon}"
            )));
        }
        if !delta.is_finite() || delta < F::zero() || delta >= F::one() {
            return Err(Error::invalid_parameter(format!(
                "delta must lie in [0, 1), got {delta}"
            )));
        }
        Ok(ApproxDp { epsilon, delta })
    }
}

/// Per-level budget configuration of a tabulation run.
///
/// `rho_i` is the level's total loss (pure-DP ε or zCDP ρ depending on the
/// mechanism), `stability` is the declared bound on how many population
/// groups at the level one record can enter, `gamma` is the fraction of the
/// per-group budget spent on the step-1 adaptive total, and `total_only`
/// says every group at the level releases only a total count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelBudget<F: Real> {
    pub mechanism: Mechanism,
    pub rho_i: F,
    pub stability: u32,
    pub gamma: F,
    pub total_only: bool,
}

impl<F: Real> LevelBudget<F> {
    pub fn new(
        mechanism: Mechanism,
        rho_i: F,
        stability: u32,
        gamma: F,
        total_only: bool,
    ) -> Result<Self> {
        if !rho_i.is_finite() || rho_i <= F::zero() {
            return Err(Error::invalid_parameter(format!(
                "level budget must be positive and finite, got {rho_i}"
            )));
        }
        if stability < 1 {
            return Err(Error::invalid_parameter("stability must be at least 1"));
        }
        if !gamma.is_finite() || gamma <= F::zero() || gamma >= F::one() {
            return Err(Error::invalid_parameter(format!(
                "gamma must lie strictly between 0 and 1, got {gamma}"
            )));
        }
        Ok(LevelBudget {
            mechanism,
            rho_i,
            stability,
            gamma,
            total_only,
        })
    }
}

/// Ordered grid of Rényi orders over which conversions are minimized.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaGrid<F: Real> {
    values: Vec<F>,
}

impl<F: Real> AlphaGrid<F> {
    /// The default grid {1.01, 1.02, ..., 9.99, 10.00}. The true infimum for
    /// small losses lies above 10; use [`AlphaGrid::new`] to extend it.
    pub fn default_grid() -> Self {
        let hundred = F::from_u32(100).unwrap();
        AlphaGrid {
            values: (101u32..=1000)
                .map(|k| F::from_u32(k).unwrap() / hundred)
                .collect(),
        }
    }

    pub fn new(values: Vec<F>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid_parameter("alpha grid must be nonempty"));
        }
        for pair in values.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::invalid_parameter(
                    "alpha grid must be strictly increasing",
                ));
            }
        }
        if !values[0].is_finite() || values[0] <= F::one() {
            return Err(Error::invalid_parameter("alpha grid values must exceed 1"));
        }
        Ok(AlphaGrid { values })
    }

    /// Uniform grid from `1 + step` to `max` inclusive (up to rounding).
    pub fn with_step(max: F, step: F) -> Result<Self> {
        if !step.is_finite() || step <= F::zero() || !max.is_finite() || max <= F::one() {
            return Err(Error::invalid_parameter(
                "alpha grid needs step > 0 and max > 1",
            ));
        }
        let mut values = Vec::new();
        let mut k = 1u64;
        loop {
            let v = F::one() + F::from_u64(k).unwrap() * step;
            if v > max + step * F::from_f64(1e-9).unwrap() {
                break;
            }
            values.push(v);
            k += 1;
        }
        AlphaGrid::new(values)
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }
}

fn check_alpha_eps<F: Real>(alpha: F, eps: F) -> Result<()> {
    if !alpha.is_finite() || alpha <= F::one() {
        return Err(Error::invalid_parameter(format!(
            "alpha must exceed 1, got {alpha}"
        )));
    }
    if !eps.is_finite() || eps <= F::zero() {
        return Err(Error::invalid_parameter(format!(
            "epsilon must be positive, got {eps}"
        )));
    }
    Ok(())
}

/// RDP bound of the base geometric mechanism at order `alpha` and pure-DP
/// loss `eps`:
///
/// ```text
/// τ(α, ε) = 1/(α−1) · ln[ (e^ε−1)/(e^ε+1) · ( 2α/(ε(2α−1))·e^{(α−1)ε}
///                                           + 2(α−1)/(ε(2α−1))·e^{−αε} ) ]
/// ```
///
/// Evaluated in the log domain with the dominant exponent factored out, so
/// it stays finite for α up to 10⁴ and ε up to 10 and beyond.
pub fn tau_geometric<F: Real>(alpha: F, eps: F) -> Result<F> {
    check_alpha_eps(alpha, eps)?;
    let one = F::one();
    let two = F::from_f64(2.0).unwrap();
    let am1 = alpha - one;
    let e = (-eps).exp();
    let ln_const = (-e).ln_1p() - e.ln_1p();
    let ln_prefactor = (two * alpha / (eps * (two * alpha - one))).ln();
    let minor = ((am1 / alpha) * (-(two * alpha - one) * eps).exp()).ln_1p();
    Ok((ln_const + am1 * eps + ln_prefactor + minor) / am1)
}

/// Exact Rényi divergence of order `alpha` between the two-sided geometric
/// distribution with `b = 1/ε` and its copy shifted by one, via direct
/// truncated summation of `Σ p(x)^α q(x)^{1−α}`.
///
/// Independent oracle for the closed forms; `radius` must make the
/// truncation error negligible (relative neglected mass ≤ 2e^{−ε(R+1)},
/// required to be below 1e−12).
pub fn renyi_geometric_bruteforce<F: Real>(alpha: F, eps: F, radius: u32) -> Result<F> {
    check_alpha_eps(alpha, eps)?;
    let r = radius as i64;
    let rf = F::from_u32(radius).unwrap();
    let truncation = F::from_f64(2.0).unwrap() * (-eps * (rf + F::one())).exp();
    if truncation >= F::from_f64(1e-12).unwrap() {
        return Err(Error::invalid_parameter(format!(
            "radius {radius} too small for eps {eps}: truncation bound {truncation}"
        )));
    }
    let e = (-eps).exp();
    let ln_const = (-e).ln_1p() - e.ln_1p();
    let one = F::one();
    let am1 = alpha - one;
    let ln_p = |y: i64| ln_const - F::from_u64(y.unsigned_abs()).unwrap() * eps;
    let mut terms = Vec::with_capacity(2 * radius as usize + 1);
    for x in -r..=r {
        terms.push(alpha * ln_p(x) + (one - alpha) * ln_p(x - 1));
    }
    let max = terms.iter().cloned().fold(F::neg_infinity(), F::max);
    let sum = terms
        .iter()
        .fold(F::zero(), |acc, &t| acc + (t - max).exp());
    Ok((max + sum.ln()) / am1)
}

/// Closed form of the exact discrete sum computed by
/// [`renyi_geometric_bruteforce`]: splitting the sum at x ≤ 0 / x ≥ 1 gives
///
/// ```text
/// D(α, ε) = 1/(α−1) · ln[ e^ε/(e^ε+1) · (e^{(α−1)ε} + e^{−αε}) ]
/// ```
///
/// This generally differs from [`tau_geometric`] (which integrates
/// continuous densities); the accounting stack uses `tau_geometric`, and
/// reports compare the two as a diagnostic.
pub fn renyi_geometric_discrete_closed_form<F: Real>(alpha: F, eps: F) -> Result<F> {
    check_alpha_eps(alpha, eps)?;
    let one = F::one();
    let am1 = alpha - one;
    let two = F::from_f64(2.0).unwrap();
    Ok((-((-eps).exp().ln_1p()) + am1 * eps + (-(two * alpha - one) * eps).exp().ln_1p()) / am1)
}

/// Convert an (α, τ) RDP guarantee to (ε, δ):
///
/// ```text
/// ε = τ + ( ln(1/δ) + (α−1)·ln(1−1/α) − ln(α) ) / (α−1)
/// ```
///
/// `delta` must lie in (0, 1). The returned ε is the raw formula value and
/// may exceed τ.
pub fn renyi_to_approx_dp<F: Real>(point: RdpPoint<F>, delta: F) -> ApproxDp<F> {
    debug_assert!(delta > F::zero() && delta < F::one());
    let one = F::one();
    let am1 = point.alpha - one;
    let epsilon = point.tau
        + (delta.recip().ln() + am1 * (am1 / point.alpha).ln() - point.alpha.ln()) / am1;
    ApproxDp { epsilon, delta }
}

/// Closed-form (loose) zCDP → approximate-DP conversion:
/// `ε = ρ + sqrt(4ρ·ln(1/δ))`.
pub fn zcdp_to_approx_dp_analytic<F: Real>(rho: F, delta: F) -> ApproxDp<F> {
    debug_assert!(rho > F::zero() && delta > F::zero() && delta < F::one());
    let epsilon = rho + (F::from_f64(4.0).unwrap() * rho * delta.recip().ln()).sqrt();
    ApproxDp { epsilon, delta }
}

/// A grid minimization result: the minimizing (ε, δ) and its order α.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMinimum<F: Real> {
    pub approx: ApproxDp<F>,
    pub alpha: F,
}

/// Grid-minimized zCDP → approximate-DP conversion: the zCDP promise gives
/// τ = ρα at every order, so minimize the RDP conversion over the grid.
pub fn zcdp_to_approx_dp_grid<F: Real>(rho: F, delta: F, grid: &AlphaGrid<F>) -> GridMinimum<F> {
    debug_assert!(rho > F::zero());
    minimize_over_grid(grid, delta, |alpha| rho * alpha)
}

fn minimize_over_grid<F: Real>(
    grid: &AlphaGrid<F>,
    delta: F,
    tau_of_alpha: impl Fn(F) -> F,
) -> GridMinimum<F> {
    let mut best: Option<GridMinimum<F>> = None;
    for &alpha in grid.values() {
        let approx = renyi_to_approx_dp(
            RdpPoint {
                alpha,
                tau: tau_of_alpha(alpha),
            },
            delta,
        );
        if best
            .as_ref()
            .is_none_or(|b| approx.epsilon < b.approx.epsilon)
        {
            best = Some(GridMinimum { approx, alpha });
        }
    }
    best.expect("alpha grid is nonempty by construction")
}

/// Adaptive sequential composition: losses add. Identical rule for pure-DP
/// ε, zCDP ρ, and fixed-α RDP τ.
pub fn compose_sequential<F: Real>(losses: &[F]) -> F {
    losses.iter().fold(F::zero(), |acc, &l| acc + l)
}

/// Generalized parallel composition over a family of subsets with maximum
/// degree `degree`: the loss scales by the degree. Degree 1 is classic
/// parallel composition over a partition.
pub fn compose_parallel_generalized<F: Real>(per_set_loss: F, degree: u32) -> F {
    F::from_u32(degree).unwrap() * per_set_loss
}

fn check_levels<F: Real>(levels: &[LevelBudget<F>], expected: Mechanism) -> Result<()> {
    for (i, level) in levels.iter().enumerate() {
        if level.mechanism != expected {
            return Err(Error::invalid_config(format!(
                "level {i} uses {} but the analysis requires {expected}",
                level.mechanism
            )));
        }
    }
    Ok(())
}

/// Pure-DP loss of a full run with the geometric mechanism: `Σ_i ρ_i`.
pub fn safetab_pure_dp_loss<F: Real>(levels: &[LevelBudget<F>]) -> Result<F> {
    check_levels(levels, Mechanism::Geometric)?;
    Ok(compose_sequential(
        &levels.iter().map(|l| l.rho_i).collect::<Vec<_>>(),
    ))
}

/// zCDP loss of a full run with the discrete Gaussian mechanism: `Σ_i ρ_i`.
pub fn safetab_zcdp_loss<F: Real>(levels: &[LevelBudget<F>]) -> Result<F> {
    check_levels(levels, Mechanism::DiscreteGaussian)?;
    Ok(compose_sequential(
        &levels.iter().map(|l| l.rho_i).collect::<Vec<_>>(),
    ))
}

/// RDP loss of a full run with the geometric mechanism at order `alpha`:
///
/// ```text
/// f(α) = Σ_i s · max[ τ(α, γρ_i/s) + τ(α, (1−γ)ρ_i/s), τ(α, ρ_i/s) ]
/// ```
///
/// A level marked `total_only` contributes only the single-count term
/// `s·τ(α, ρ_i/s)` (every group on that level takes the total-only path).
pub fn safetab_rdp_loss<F: Real>(alpha: F, levels: &[LevelBudget<F>]) -> Result<F> {
    check_levels(levels, Mechanism::Geometric)?;
    let one = F::one();
    let mut total = F::zero();
    for level in levels {
        let s = F::from_u32(level.stability).unwrap();
        let per_group = level.rho_i / s;
        let single = tau_geometric(alpha, per_group)?;
        let term = if level.total_only {
            single
        } else {
            let split = tau_geometric(alpha, level.gamma * per_group)?
                + tau_geometric(alpha, (one - level.gamma) * per_group)?;
            split.max(single)
        };
        total = total + s * term;
    }
    Ok(total)
}

/// Approximate-DP loss of a geometric-mechanism run via the RDP analysis:
/// minimize the conversion of (α, f(α)) over the grid.
pub fn safetab_rdp_to_approx_dp<F: Real>(
    levels: &[LevelBudget<F>],
    delta: F,
    grid: &AlphaGrid<F>,
) -> Result<GridMinimum<F>> {
    check_levels(levels, Mechanism::Geometric)?;
    let mut best: Option<GridMinimum<F>> = None;
    for &alpha in grid.values() {
        let tau = safetab_rdp_loss(alpha, levels)?;
        let approx = renyi_to_approx_dp(RdpPoint { alpha, tau }, delta);
        if best
            .as_ref()
            .is_none_or(|b| approx.epsilon < b.approx.epsilon)
        {
            best = Some(GridMinimum { approx, alpha });
        }
    }
    Ok(best.expect("alpha grid is nonempty by construction"))
}
