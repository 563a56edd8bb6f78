//! MOE-target calibration and the four-analysis privacy-loss report.
//!
//! Accuracy targets arrive as 95% margins of error per population-group
//! level. Calibration converts a level's MOE into the base mechanism's
//! per-count loss, then scales it into the level's total budget: with
//! step-2 carrying the MOE target and a fraction γ of each group's budget
//! spent on the step-1 total, the per-group total is `base/(1−γ)` and the
//! level total is `ρ_i = s·base/(1−γ)` (step-2 share `s·base`, i.e. 90% of
//! the total at γ = 0.1).
//!
//! The report runs the default seven-level configuration through all four
//! analyses: pure DP (geometric), RDP-grid (geometric), analytic zCDP and
//! grid zCDP (discrete Gaussian), plus a diagnostic comparing the
//! closed-form Rényi curve of the geometric mechanism against the exact
//! discrete sum.

use crate::accounting::{
    safetab_pure_dp_loss, safetab_rdp_to_approx_dp, safetab_zcdp_loss, zcdp_to_approx_dp_analytic,
    zcdp_to_approx_dp_grid, AlphaGrid, ApproxDp, GridMinimum, LevelBudget, Mechanism,
};
use crate::error::{Error, Result};
use crate::noise::{epsilon_from_moe, rho_from_moe};
use crate::tabulation::{GeoLevel, IterationTier};
use crate::Real;

/// Default approximate-DP δ.
pub const DEFAULT_DELTA: f64 = 1e-10;
/// Default fraction of each group's budget spent on the step-1 total.
pub const DEFAULT_GAMMA: f64 = 0.1;
/// Default declared stability (groups per record per level).
pub const DEFAULT_STABILITY: u32 = 9;

/// The default seven population-group levels and their MOE targets.
pub const DEFAULT_LEVELS: [(GeoLevel, IterationTier, u32); 7] = [
    (GeoLevel::Nation, IterationTier::Detailed, 6),
    (GeoLevel::State, IterationTier::Detailed, 6),
    (GeoLevel::County, IterationTier::Detailed, 11),
    (GeoLevel::Aiannh, IterationTier::Detailed, 11),
    (GeoLevel::Nation, IterationTier::Regional, 50),
    (GeoLevel::State, IterationTier::Regional, 50),
    (GeoLevel::County, IterationTier::Regional, 50),
];

/// One level's MOE target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MoeTargetRow {
    pub geo_level: GeoLevel,
    pub tier: IterationTier,
    pub moe_target: u32,
}

/// Calibrated budgets for one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationRow<F: Real> {
    pub mechanism: Mechanism,
    pub moe_target: u32,
    /// Per-count step-2 loss (ε or ρ of the base mechanism at the MOE).
    pub base_loss: F,
    /// Aggregated step-2 loss over the level: `s · base`.
    pub step2_loss: F,
    /// Level total: `s · base / (1−γ)`.
    pub total_loss: F,
}

/// Convert one level's MOE target into its budgets.
pub fn calibrate_level<F: Real>(
    moe: u32,
    gamma: F,
    stability: u32,
    mechanism: Mechanism,
) -> Result<CalibrationRow<F>> {
    if !gamma.is_finite() || gamma <= F::zero() || gamma >= F::one() {
        return Err(Error::invalid_parameter(format!(
            "gamma must lie strictly between 0 and 1, got {gamma}"
        )));
    }
    if stability < 1 {
        return Err(Error::invalid_parameter("stability must be at least 1"));
    }
    let moe_f = F::from_u32(moe).unwrap();
    let base_loss = match mechanism {
        Mechanism::Geometric => epsilon_from_moe(moe_f)?,
        Mechanism::DiscreteGaussian => rho_from_moe(moe_f)?,
    };
    let s = F::from_u32(stability).unwrap();
    let step2_loss = s * base_loss;
    let total_loss = step2_loss / (F::one() - gamma);
    Ok(CalibrationRow {
        mechanism,
        moe_target: moe,
        base_loss,
        step2_loss,
        total_loss,
    })
}

/// A fully configured level: its name, MOE, calibrated budgets, and the
/// accounting-side budget record.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfiguredLevel<F: Real> {
    pub geo_level: GeoLevel,
    pub tier: IterationTier,
    pub row: CalibrationRow<F>,
    pub budget: LevelBudget<F>,
}

/// Build the default seven-level configuration for one mechanism, with an
/// optional MOE override applied to both (Nation, Detailed) and
/// (State, Detailed) — the only levels the alternate-MOE sweep varies.
pub fn build_paper_config<F: Real>(
    mechanism: Mechanism,
    nation_state_moe: Option<u32>,
) -> Result<Vec<ConfiguredLevel<F>>> {
    if let Some(moe) = nation_state_moe {
        if moe < 1 {
            return Err(Error::invalid_parameter("MOE override must be at least 1"));
        }
    }
    let gamma = F::from_f64(DEFAULT_GAMMA).unwrap();
    DEFAULT_LEVELS
        .iter()
        .map(|&(geo_level, tier, default_moe)| {
            let moe = match (geo_level, tier, nation_state_moe) {
                (GeoLevel::Nation | GeoLevel::State, IterationTier::Detailed, Some(m)) => m,
                _ => default_moe,
            };
            let row = calibrate_level(moe, gamma, DEFAULT_STABILITY, mechanism)?;
            let budget =
                LevelBudget::new(mechanism, row.total_loss, DEFAULT_STABILITY, gamma, false)?;
            Ok(ConfiguredLevel {
                geo_level,
                tier,
                row,
                budget,
            })
        })
        .collect()
}

/// One row of the closed-form vs discrete-sum Rényi diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenyiDiagnostic<F: Real> {
    pub alpha: F,
    pub eps: F,
    /// τ from the closed form used by the accounting stack.
    pub tau_formula: F,
    /// Exact discrete Rényi divergence (closed form of the integer sum).
    pub tau_discrete: F,
}

/// The four-analysis privacy-loss summary.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyReport<F: Real> {
    pub delta: F,
    pub nation_state_moe: Option<u32>,
    pub geometric: Vec<ConfiguredLevel<F>>,
    pub discrete_gaussian: Vec<ConfiguredLevel<F>>,
    /// Pure DP (δ = 0), geometric.
    pub pure_dp: F,
    /// RDP grid minimization at δ, geometric.
    pub rdp: GridMinimum<F>,
    /// Closed-form zCDP conversion at δ, discrete Gaussian.
    pub zcdp_analytic: ApproxDp<F>,
    /// Grid zCDP conversion at δ, discrete Gaussian.
    pub zcdp_grid: GridMinimum<F>,
    pub diagnostics: Vec<RenyiDiagnostic<F>>,
}

/// Compute the four-analysis report for the default configuration (with an
/// optional Nation/State-Detailed MOE override).
pub fn privacy_report<F: Real>(
    nation_state_moe: Option<u32>,
    delta: F,
    grid: &AlphaGrid<F>,
) -> Result<PrivacyReport<F>> {
    if !delta.is_finite() || delta <= F::zero() || delta >= F::one() {
        return Err(Error::invalid_parameter(format!(
            "delta must lie strictly between 0 and 1, got {delta}"
        )));
    }
    let geometric = build_paper_config::<F>(Mechanism::Geometric, nation_state_moe)?;
    let discrete_gaussian = build_paper_config::<F>(Mechanism::DiscreteGaussian, nation_state_moe)?;
    let geo_budgets: Vec<LevelBudget<F>> = geometric.iter().map(|l| l.budget).collect();
    let dg_budgets: Vec<LevelBudget<F>> = discrete_gaussian.iter().map(|l| l.budget).collect();

    let pure_dp = safetab_pure_dp_loss(&geo_budgets)?;
    let rdp = safetab_rdp_to_approx_dp(&geo_budgets, delta, grid)?;
    let rho_total = safetab_zcdp_loss(&dg_budgets)?;
    let zcdp_analytic = zcdp_to_approx_dp_analytic(rho_total, delta);
    let zcdp_grid = zcdp_to_approx_dp_grid(rho_total, delta, grid);

    let mut diagnostics = Vec::new();
    let mut seen = Vec::new();
    for level in &geometric {
        let eps = level.row.base_loss;
        if seen.iter().any(|&e: &F| (e - eps).abs() < F::epsilon()) {
            continue;
        }
        seen.push(eps);
        for alpha in [F::from_f64(2.0).unwrap(), F::from_f64(5.0).unwrap()] {
            diagnostics.push(RenyiDiagnostic {
                alpha,
                eps,
                tau_formula: crate::accounting::tau_geometric(alpha, eps)?,
                tau_discrete: crate::accounting::renyi_geometric_discrete_closed_form(alpha, eps)?,
            });
        }
    }

    Ok(PrivacyReport {
        delta,
        nation_state_moe,
        geometric,
        discrete_gaussian,
        pure_dp,
        rdp,
        zcdp_analytic,
        zcdp_grid,
        diagnostics,
    })
}

/// Reports for a range of Nation/State-Detailed MOE overrides.
pub fn moe_sweep<F: Real>(
    moes: std::ops::RangeInclusive<u32>,
    delta: F,
    grid: &AlphaGrid<F>,
) -> Result<Vec<PrivacyReport<F>>> {
    moes.map(|m| privacy_report(Some(m), delta, grid)).collect()
}

/// Format a value to three significant figures (how budget tables print).
pub fn sig3<F: Real>(x: F) -> String {
    let x = x.to_f64().unwrap_or(f64::NAN);
    if !x.is_finite() || x == 0.0 {
        return format!("{x}");
    }
    let digits_before = x.abs().log10().floor() as i32 + 1;
    let decimals = (3 - digits_before).max(0) as usize;
    format!("{x:.decimals$}")
}

impl<F: Real> PrivacyReport<F> {
    /// The four analyses as (label, ε) pairs, in the reporting order
    /// pure-DP, RDP-grid, zCDP-analytic, zCDP-grid.
    pub fn four_analyses(&self) -> [(&'static str, F); 4] {
        [
            ("pure_dp", self.pure_dp),
            ("rdp_grid", self.rdp.approx.epsilon),
            ("zcdp_analytic", self.zcdp_analytic.epsilon),
            ("zcdp_grid", self.zcdp_grid.approx.epsilon),
        ]
    }

    /// Aligned-column text: level budgets at three significant figures,
    /// analyses at one decimal (full precision alongside), diagnostics.
    /// A pure function of the report contents.
    pub fn render_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let moe_note = match self.nation_state_moe {
            Some(m) => format!(" (Nation/State Detailed MOE override: {m})"),
            None => String::new(),
        };
        let _ = writeln!(out, "Privacy-loss report{moe_note}");
        let _ = writeln!(out, "delta = {:e}", self.delta.to_f64().unwrap_or(f64::NAN));
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "  {:<22} {:>4}   {:>10} {:>10}   {:>10} {:>10}",
            "level", "MOE", "geo step2", "geo total", "dg step2", "dg total"
        );
        for (g, d) in self.geometric.iter().zip(&self.discrete_gaussian) {
            let _ = writeln!(
                out,
                "  {:<22} {:>4}   {:>10} {:>10}   {:>10} {:>10}",
                format!("({}, {})", g.geo_level, g.tier),
                g.row.moe_target,
                sig3(g.row.step2_loss),
                sig3(g.row.total_loss),
                sig3(d.row.step2_loss),
                sig3(d.row.total_loss),
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "  analyses ((epsilon, delta) privacy loss):");
        let labels = [
            ("pure DP (geometric, delta = 0)", self.pure_dp, None),
            ("RDP grid (geometric)", self.rdp.approx.epsilon, Some(self.rdp.alpha)),
            ("zCDP analytic (discrete Gaussian)", self.zcdp_analytic.epsilon, None),
            (
                "zCDP grid (discrete Gaussian)",
                self.zcdp_grid.approx.epsilon,
                Some(self.zcdp_grid.alpha),
            ),
        ];
        for (label, eps, alpha) in labels {
            let alpha_note = match alpha {
                Some(a) => format!("  (alpha* = {a})"),
                None => String::new(),
            };
            let eps1 = eps.to_f64().unwrap_or(f64::NAN);
            let _ = writeln!(out, "    {label:<36} {eps1:>6.1}  [{eps}]{alpha_note}");
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "  note: the historical reference prints 0.531 for the 50-MOE geometric step-2"
        );
        let _ = writeln!(
            out,
            "  loss; the formula value is {} (about 0.4% lower; rounding provenance unknown).",
            sig3(F::from_u32(DEFAULT_STABILITY).unwrap() * epsilon_from_moe(F::from_f64(50.0).unwrap()).unwrap())
        );
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "  Renyi curve diagnostic (closed form vs exact discrete sum):"
        );
        let _ = writeln!(
            out,
            "    {:>6} {:>12} {:>14} {:>14} {:>9}",
            "alpha", "eps", "tau formula", "tau discrete", "ratio"
        );
        for d in &self.diagnostics {
            let ratio = d.tau_discrete / d.tau_formula;
            let _ = writeln!(
                out,
                "    {:>6} {:>12} {:>14} {:>14} {:>9}",
                format!("{}", d.alpha),
                sig3(d.eps),
                format!("{:.8}", d.tau_formula.to_f64().unwrap_or(f64::NAN)),
                format!("{:.8}", d.tau_discrete.to_f64().unwrap_or(f64::NAN)),
                format!("{:.4}", ratio.to_f64().unwrap_or(f64::NAN)),
            );
        }
        out
    }

    /// Machine-readable rows: `analysis,epsilon,delta,alpha_star` (alpha
    /// empty where not applicable).
    pub fn render_csv(&self) -> String {
        let mut out = String::from("analysis,epsilon,delta,alpha_star\n");
        let rows = [
            ("pure_dp", self.pure_dp, F::zero(), None),
            ("rdp_grid", self.rdp.approx.epsilon, self.delta, Some(self.rdp.alpha)),
            ("zcdp_analytic", self.zcdp_analytic.epsilon, self.delta, None),
            (
                "zcdp_grid",
                self.zcdp_grid.approx.epsilon,
                self.delta,
                Some(self.zcdp_grid.alpha),
            ),
        ];
        for (label, eps, delta, alpha) in rows {
            let alpha = alpha.map(|a| format!("{a}")).unwrap_or_default();
            out.push_str(&format!("{label},{eps},{delta},{alpha}\n"));
        }
        out
    }
}
