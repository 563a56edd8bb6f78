//! Helpers shared by the integration test targets.
// Each target uses a different subset of these helpers.
#![allow(dead_code)]

use safetab_core::accounting::Mechanism;
use safetab_core::calibration::{self, calibrate_level};
use safetab_core::datagen::GeneratedData;
use safetab_core::noise::NoiseSample;
use safetab_core::tabulation::{stability, LevelPlan, Thresholds};

/// Build the default seven-level plan for a generated dataset, with each
/// level's declared stability set to the exact bound of its configs.
pub fn paper_plans(data: &GeneratedData, mechanism: Mechanism) -> Vec<LevelPlan> {
    calibration::DEFAULT_LEVELS
        .iter()
        .enumerate()
        .map(|(i, &(geo_level, tier, moe))| {
            let s = stability(geo_level, tier, &data.catalog, &data.geo);
            let row =
                calibrate_level::<f64>(moe, calibration::DEFAULT_GAMMA, s, mechanism).unwrap();
            LevelPlan {
                level_id: (i + 1) as u32,
                geo_level,
                tier,
                budget: safetab_core::accounting::LevelBudget::new(
                    mechanism,
                    row.total_loss,
                    s,
                    calibration::DEFAULT_GAMMA,
                    false,
                )
                .unwrap(),
                thresholds: Thresholds::default(),
            }
        })
        .collect()
}

/// Empirical total-variation distance between a sample set and an analytic
/// PMF restricted to `|x| ≤ window`, with out-of-window mass compared as a
/// single lump.
pub fn tv_distance(samples: &[NoiseSample], pmf: impl Fn(i64) -> f64, window: i64) -> f64 {
    let n = samples.len() as f64;
    let mut inside = 0.0f64;
    let mut empirical_out = 0.0f64;
    let mut analytic_out = 1.0f64;
    let mut counts = std::collections::HashMap::new();
    for &s in samples {
        if s.abs() <= window {
            *counts.entry(s).or_insert(0u64) += 1;
        } else {
            empirical_out += 1.0;
        }
    }
    for x in -window..=window {
        let p = pmf(x);
        analytic_out -= p;
        let emp = counts.get(&x).copied().unwrap_or(0) as f64 / n;
        inside += (emp - p).abs();
    }
    0.5 * (inside + (empirical_out / n - analytic_out.max(0.0)).abs())
}

/// Fraction of samples with |x| ≤ moe.
pub fn coverage(samples: &[NoiseSample], moe: i64) -> f64 {
    samples.iter().filter(|s| s.abs() <= moe).count() as f64 / samples.len() as f64
}
