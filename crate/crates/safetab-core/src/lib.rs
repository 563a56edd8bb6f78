//! Differentially private tabulation of population-group counts.
//!
//! This crate implements the SafeTab algorithm family: adaptive release of
//! total and Sex × Age counts for population groups (a geographic entity
//! crossed with a race/ethnicity characteristic iteration), with one of two
//! interchangeable base mechanisms:
//!
//! * the two-sided geometric (discrete Laplace) mechanism, accounted under
//!   pure differential privacy and Rényi differential privacy, and
//! * the discrete Gaussian mechanism, accounted under zero-concentrated
//!   differential privacy.
//!
//! Both mechanisms are sampled with exact integer/rational arithmetic; no
//! floating-point inverse-CDF sampling is used anywhere on the noise path.
//!
//! Module map:
//!
//! * [`noise`] — PMFs, tail bounds, MOE formulas, and the exact samplers.
//! * [`accounting`] — RDP curve of the geometric mechanism, composition
//!   rules, conversions to approximate DP, and the end-to-end loss of a
//!   multi-level tabulation.
//! * [`calibration`] — MOE targets → privacy-loss budgets, and the
//!   four-analysis privacy-loss report for the default 7-level census-style
//!   configuration.
//! * [`tabulation`] — the engine: domain model, population-group mapping
//!   with stability tracking, and the adaptive two-step tabulation.
//! * [`datagen`] — deterministic synthetic microdata for end-to-end runs.
//!
//! The closed-form math is generic over the scalar type via [`Real`];
//! concrete `f64` aliases are exported at the crate root and are what the
//! engine and CLI use.

pub mod accounting;
pub mod calibration;
pub mod datagen;
pub mod error;
pub mod noise;
pub mod rng;
pub mod tabulation;

use std::fmt::{Debug, Display};

pub use error::{Error, Result};
pub use rng::RandomSource;

/// Scalar type the closed-form math is generic over: `f32` or `f64`.
///
/// Everything the accounting stack needs is covered by `num_traits::Float`
/// plus conversion from primitive constants. The exact samplers do not use
/// this trait; they operate on big rationals.
pub trait Real: num_traits::Float + num_traits::FromPrimitive + Debug + Display + 'static {}

impl<T> Real for T where T: num_traits::Float + num_traits::FromPrimitive + Debug + Display + 'static {}

/// `f64` instantiations used by the tabulation engine and the CLI.
pub type GeometricScale = noise::GeometricScale<f64>;
pub type GaussianScale = noise::GaussianScale<f64>;
pub type Budget = accounting::Budget<f64>;
pub type RdpPoint = accounting::RdpPoint<f64>;
pub type ApproxDp = accounting::ApproxDp<f64>;
pub type LevelBudget = accounting::LevelBudget<f64>;
pub type AlphaGrid = accounting::AlphaGrid<f64>;
pub type CalibrationRow = calibration::CalibrationRow<f64>;
pub type PrivacyReport = calibration::PrivacyReport<f64>;
