//! Deterministic synthetic census-like microdata for desk-scale runs.
//!
//! The generator builds a small state/county/block hierarchy with a partial
//! AIANNH overlay, an iteration catalog over disjoint race-code ranges (so
//! the exact stability bound of every default level is the race
//! multiplicity plus one ethnicity match), and person records whose race
//! codes follow a Zipf-like popularity over the ranges. The skew makes the
//! default configuration produce population groups in all four step-2
//! granularity branches under the default thresholds.

use std::collections::BTreeSet;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::tabulation::{
    CharacteristicKind, GeoConfig, IterationCatalog, IterationConfig, IterationTier, MatchMode,
    PersonRecord, Sex,
};

/// Generator parameters. `Default` is the configuration the end-to-end
/// tests freeze: it keeps every level's exact stability at 9 (multiplicity
/// 8 + 1 ethnicity) and spans all four granularity branches.
#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub n_persons: u32,
    pub states: u32,
    pub counties_per_state: u32,
    pub blocks_per_county: u32,
    pub aiannh_areas: u32,
    /// Fraction of blocks covered by the AIANNH overlay.
    pub aiannh_block_fraction: f64,
    /// Number of 100-code race ranges (codes 1000 + 100r .. 1000 + 100r + 99).
    pub race_ranges: u32,
    pub race_multiplicity: u32,
    /// Zipf exponent of the range popularity distribution.
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            n_persons: 20_000,
            states: 3,
            counties_per_state: 3,
            blocks_per_county: 4,
            aiannh_areas: 4,
            aiannh_block_fraction: 0.25,
            race_ranges: 12,
            race_multiplicity: 8,
            zipf_exponent: 2.0,
            seed: 20_220_617,
        }
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_persons < 1
            || self.states < 1
            || self.counties_per_state < 1
            || self.blocks_per_county < 1
        {
            return Err(Error::invalid_config(
                "generator needs at least one person, state, county, and block",
            ));
        }
        if self.race_multiplicity < 1 {
            return Err(Error::invalid_config("race_multiplicity must be at least 1"));
        }
        if self.race_ranges < 12 {
            return Err(Error::invalid_config(
                "generator needs at least 12 race-code ranges",
            ));
        }
        if !(0.0..1.0).contains(&self.aiannh_block_fraction) {
            return Err(Error::invalid_config(
                "aiannh_block_fraction must lie in [0, 1)",
            ));
        }
        if self.zipf_exponent <= 0.0 || !self.zipf_exponent.is_finite() {
            return Err(Error::invalid_config("zipf_exponent must be positive"));
        }
        Ok(())
    }
}

/// A generated dataset: records plus the two configs they satisfy.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub records: Vec<PersonRecord>,
    pub geo: GeoConfig,
    pub catalog: IterationCatalog,
}

fn range_codes(r: u32) -> (u16, u16) {
    let lo = 1000 + 100 * r as u16;
    (lo, lo + 99)
}

fn build_catalog(spec: &GenSpec) -> IterationCatalog {
    let mut iterations = Vec::new();
    let iter = |code: String, kind, (lo, hi): (u16, u16), mode, tier, total_only| IterationConfig {
        code,
        kind,
        codes: (lo..=hi).collect(),
        mode,
        tier,
        total_only,
    };
    // Detailed tier: one AloneOrInCombination iteration for each of the ten
    // most popular ranges (range 9 total-only), Alone variants for the top
    // three, and two disjoint ethnicity groups.
    for r in 0..10u32 {
        iterations.push(iter(
            format!("D-R{r:02}-AIC"),
            CharacteristicKind::Race,
            range_codes(r),
            MatchMode::AloneOrInCombination,
            IterationTier::Detailed,
            r == 9,
        ));
    }
    for r in 0..3u32 {
        iterations.push(iter(
            format!("D-R{r:02}-ALONE"),
            CharacteristicKind::Race,
            range_codes(r),
            MatchMode::Alone,
            IterationTier::Detailed,
            false,
        ));
    }
    iterations.push(iter(
        "D-ETH0".into(),
        CharacteristicKind::Ethnicity,
        (3000, 3499),
        MatchMode::Alone,
        IterationTier::Detailed,
        false,
    ));
    iterations.push(iter(
        "D-ETH1".into(),
        CharacteristicKind::Ethnicity,
        (3500, 3999),
        MatchMode::Alone,
        IterationTier::Detailed,
        false,
    ));
    // Regional tier: broader groups. Eight single-range iterations, one
    // catch-all over the remaining ranges, an Alone variant of range 0, and
    // one ethnicity group over all ethnicity codes.
    for r in 0..8u32 {
        iterations.push(iter(
            format!("R-R{r:02}-AIC"),
            CharacteristicKind::Race,
            range_codes(r),
            MatchMode::AloneOrInCombination,
            IterationTier::Regional,
            false,
        ));
    }
    let rest = (range_codes(8).0, range_codes(spec.race_ranges - 1).1);
    iterations.push(iter(
        "R-REST-AIC".into(),
        CharacteristicKind::Race,
        rest,
        MatchMode::AloneOrInCombination,
        IterationTier::Regional,
        false,
    ));
    iterations.push(iter(
        "R-R00-ALONE".into(),
        CharacteristicKind::Race,
        range_codes(0),
        MatchMode::Alone,
        IterationTier::Regional,
        false,
    ));
    iterations.push(iter(
        "R-ETH".into(),
        CharacteristicKind::Ethnicity,
        (3000, 3999),
        MatchMode::Alone,
        IterationTier::Regional,
        false,
    ));
    IterationCatalog {
        race_multiplicity: spec.race_multiplicity,
        iterations,
    }
}

/// Generate a dataset. Deterministic for a given spec (including its seed);
/// the emitted configs satisfy every engine invariant.
pub fn generate(spec: &GenSpec) -> Result<GeneratedData> {
    spec.validate()?;
    let mut rng = RandomSource::from_seed(spec.seed).derive(&[b"datagen"]);

    // Geography.
    let mut geo = GeoConfig::default();
    let mut blocks = Vec::new();
    for s in 0..spec.states {
        let state = format!("S{s:02}");
        for c in 0..spec.counties_per_state {
            let county = format!("{state}C{c:02}");
            geo.counties.insert(county.clone(), state.clone());
            for b in 0..spec.blocks_per_county {
                let block = format!("{county}B{b:03}");
                geo.blocks.insert(block.clone(), county.clone());
                blocks.push(block);
            }
        }
    }
    // AIANNH overlay: contiguous non-overlapping chunks over a prefix of
    // the (deterministically ordered) block list.
    let covered = ((blocks.len() as f64) * spec.aiannh_block_fraction).round() as usize;
    if spec.aiannh_areas > 0 && covered > 0 {
        let per_area = covered.div_ceil(spec.aiannh_areas as usize).max(1);
        for (i, chunk) in blocks[..covered].chunks(per_area).enumerate() {
            geo.aiannh_areas.insert(
                format!("A{i:02}"),
                chunk.iter().cloned().collect::<BTreeSet<_>>(),
            );
        }
    }
    geo.validate()?;

    let catalog = build_catalog(spec);
    catalog.validate()?;

    // Zipf weights over ranges, as a cumulative table for sampling.
    let weights: Vec<f64> = (0..spec.race_ranges)
        .map(|r| 1.0 / ((r + 1) as f64).powf(spec.zipf_exponent))
        .collect();
    let total_weight: f64 = weights.iter().sum();
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in &weights {
        acc += w / total_weight;
        cumulative.push(acc);
    }
    let sample_range = |rng: &mut RandomSource| -> u32 {
        let u: f64 = rng.gen();
        cumulative.iter().position(|&c| u <= c).unwrap_or(cumulative.len() - 1) as u32
    };

    let mut records = Vec::with_capacity(spec.n_persons as usize);
    for _ in 0..spec.n_persons {
        let block_id = blocks[rng.gen_range(0..blocks.len())].clone();
        // Mostly single-race records with a geometric-ish tail of extras.
        let mut race_codes = BTreeSet::new();
        let mut k = 1u32;
        while k < spec.race_multiplicity && rng.gen::<f64>() < 0.25 {
            k += 1;
        }
        while race_codes.len() < k as usize {
            let (lo, _) = range_codes(sample_range(&mut rng));
            race_codes.insert(lo + rng.gen_range(0..100) as u16);
        }
        // Ethnicity: skewed toward the first group.
        let ethnicity_code = if rng.gen::<f64>() < 0.7 {
            3000 + rng.gen_range(0..500) as u16
        } else {
            3500 + rng.gen_range(0..500) as u16
        };
        let sex = if rng.gen::<bool>() { Sex::Male } else { Sex::Female };
        let age = rng.gen_range(0..=115) as u8;
        records.push(PersonRecord {
            block_id,
            race_codes,
            ethnicity_code,
            sex,
            age,
        });
    }
    for r in &records {
        r.validate(spec.race_multiplicity)?;
    }
    Ok(GeneratedData {
        records,
        geo,
        catalog,
    })
}
