//! The tabulation engine: person records, geographies, characteristic
//! iterations, population-group mapping with exact stability bounds, and
//! the adaptive two-step noisy tabulation.
//!
//! A population group is a (geographic entity, characteristic iteration)
//! pair. The engine walks a list of level plans; for each level it maps
//! every record into the population groups it belongs to, then tabulates
//! every *configured* group at the level — including groups with no
//! matching records, which receive noise around zero so that the released
//! set of rows is data-independent.

pub mod io;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::accounting::{Budget, LevelBudget, Mechanism};
use crate::error::{Error, Result};
use crate::noise::{GaussianSampler, GeometricSampler};
use crate::rng::RandomSource;

/// Geographic identifier used for the single nation-level entity.
pub const NATION_ID: &str = "US";

pub const MAX_AGE: u8 = 115;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Male,
    Female,
}

impl Sex {
    pub fn letter(self) -> char {
        match self {
            Sex::Male => 'M',
            Sex::Female => 'F',
        }
    }
}

/// One microdata row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersonRecord {
    pub block_id: String,
    pub race_codes: BTreeSet<u16>,
    pub ethnicity_code: u16,
    pub sex: Sex,
    pub age: u8,
}

impl PersonRecord {
    pub fn validate(&self, race_multiplicity: u32) -> Result<()> {
        if self.race_codes.is_empty() || self.race_codes.len() as u32 > race_multiplicity {
            return Err(Error::data(format!(
                "record in block {} has {} race codes, expected between 1 and {race_multiplicity}",
                self.block_id,
                self.race_codes.len()
            )));
        }
        if self.age > MAX_AGE {
            return Err(Error::data(format!(
                "record in block {} has age {} out of range",
                self.block_id, self.age
            )));
        }
        Ok(())
    }
}

/// Geographic hierarchy plus the AIANNH overlay.
///
/// Blocks nest in counties, counties in states; AIANNH areas are arbitrary
/// named sets of blocks and may overlap each other.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeoConfig {
    /// block id → county id
    pub blocks: BTreeMap<String, String>,
    /// county id → state id
    pub counties: BTreeMap<String, String>,
    /// area name → member blocks
    #[serde(default)]
    pub aiannh_areas: BTreeMap<String, BTreeSet<String>>,
}

impl GeoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::invalid_config("geography has no blocks"));
        }
        for (block, county) in &self.blocks {
            if !self.counties.contains_key(county) {
                return Err(Error::invalid_config(format!(
                    "block {block} maps to unknown county {county}"
                )));
            }
        }
        for (area, blocks) in &self.aiannh_areas {
            for block in blocks {
                if !self.blocks.contains_key(block) {
                    return Err(Error::invalid_config(format!(
                        "AIANNH area {area} references unknown block {block}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn county_of(&self, block: &str) -> Result<&str> {
        self.blocks
            .get(block)
            .map(String::as_str)
            .ok_or_else(|| Error::data(format!("unknown block_id {block}")))
    }

    pub fn state_of(&self, block: &str) -> Result<&str> {
        let county = self.county_of(block)?;
        self.counties
            .get(county)
            .map(String::as_str)
            .ok_or_else(|| Error::invalid_config(format!("county {county} has no state")))
    }

    /// AIANNH areas containing a block (possibly none; the overlay is
    /// partial and may overlap).
    pub fn areas_of(&self, block: &str) -> Vec<&str> {
        self.aiannh_areas
            .iter()
            .filter(|(_, blocks)| blocks.contains(block))
            .map(|(area, _)| area.as_str())
            .collect()
    }

    /// All geographic entities at a level, in sorted order.
    pub fn entities(&self, level: GeoLevel) -> Vec<String> {
        match level {
            GeoLevel::Nation => vec![NATION_ID.to_string()],
            GeoLevel::State => {
                let states: BTreeSet<&String> = self.counties.values().collect();
                states.into_iter().cloned().collect()
            }
            GeoLevel::County => self.counties.keys().cloned().collect(),
            GeoLevel::Aiannh => self.aiannh_areas.keys().cloned().collect(),
        }
    }

    /// Largest number of AIANNH areas any single block belongs to.
    fn max_aiannh_overlap(&self) -> u32 {
        let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
        for blocks in self.aiannh_areas.values() {
            for block in blocks {
                *counts.entry(block.as_str()).or_insert(0) += 1;
            }
        }
        counts.values().copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeoLevel {
    Nation,
    State,
    County,
    Aiannh,
}

impl std::fmt::Display for GeoLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GeoLevel::Nation => f.write_str("Nation"),
            GeoLevel::State => f.write_str("State"),
            GeoLevel::County => f.write_str("County"),
            GeoLevel::Aiannh => f.write_str("AIANNH"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationTier {
    Detailed,
    Regional,
}

impl std::fmt::Display for IterationTier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IterationTier::Detailed => f.write_str("Detailed"),
            IterationTier::Regional => f.write_str("Regional"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    Alone,
    AloneOrInCombination,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CharacteristicKind {
    Race,
    Ethnicity,
}

/// A characteristic iteration: a race or ethnicity code group with Alone /
/// Alone-or-in-Combination semantics, a tier, and a TotalOnly marker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationConfig {
    pub code: String,
    pub kind: CharacteristicKind,
    pub codes: BTreeSet<u16>,
    pub mode: MatchMode,
    pub tier: IterationTier,
    #[serde(default)]
    pub total_only: bool,
}

impl IterationConfig {
    /// Membership test. A record is in a race group Alone if all of its
    /// race codes lie in the group, Alone-or-in-Combination if any does.
    /// Ethnicity iterations match on the single ethnicity code, so the two
    /// modes coincide.
    pub fn matches(&self, record: &PersonRecord) -> bool {
        match self.kind {
            CharacteristicKind::Race => match self.mode {
                MatchMode::Alone => record.race_codes.iter().all(|c| self.codes.contains(c)),
                MatchMode::AloneOrInCombination => {
                    record.race_codes.iter().any(|c| self.codes.contains(c))
                }
            },
            CharacteristicKind::Ethnicity => self.codes.contains(&record.ethnicity_code),
        }
    }
}

/// The full iteration catalog plus the dataset-level race multiplicity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationCatalog {
    pub race_multiplicity: u32,
    pub iterations: Vec<IterationConfig>,
}

impl IterationCatalog {
    pub fn validate(&self) -> Result<()> {
        if self.race_multiplicity < 1 {
            return Err(Error::invalid_config("race_multiplicity must be at least 1"));
        }
        let mut seen = BTreeSet::new();
        for iter in &self.iterations {
            if iter.codes.is_empty() {
                return Err(Error::invalid_config(format!(
                    "iteration {} has an empty code set",
                    iter.code
                )));
            }
            if !seen.insert(&iter.code) {
                return Err(Error::invalid_config(format!(
                    "duplicate iteration code {}",
                    iter.code
                )));
            }
        }
        for tier in [IterationTier::Detailed, IterationTier::Regional] {
            let races = self
                .iterations
                .iter()
                .filter(|i| i.tier == tier && i.kind == CharacteristicKind::Race)
                .count();
            if races > 128 {
                return Err(Error::invalid_config(format!(
                    "more than 128 race iterations at tier {tier}; the exact stability search \
                     is limited to 128 per tier"
                )));
            }
        }
        Ok(())
    }

    pub fn at_tier(&self, tier: IterationTier) -> Vec<&IterationConfig> {
        self.iterations.iter().filter(|i| i.tier == tier).collect()
    }

    pub fn by_code(&self, code: &str) -> Option<&IterationConfig> {
        self.iterations.iter().find(|i| i.code == code)
    }
}

/// A population group: one geographic entity crossed with one iteration.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PopulationGroup {
    pub geo_id: String,
    pub iteration_code: String,
}

/// Step-2 granularity thresholds θ1 ≤ θ2 ≤ θ3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thresholds {
    pub theta1: i64,
    pub theta2: i64,
    pub theta3: i64,
}

impl Thresholds {
    pub fn new(theta1: i64, theta2: i64, theta3: i64) -> Result<Self> {
        if !(theta1 <= theta2 && theta2 <= theta3) {
            return Err(Error::invalid_config(format!(
                "thresholds must satisfy θ1 ≤ θ2 ≤ θ3, got {theta1}, {theta2}, {theta3}"
            )));
        }
        Ok(Thresholds {
            theta1,
            theta2,
            theta3,
        })
    }
}

impl Default for Thresholds {
    /// The release thresholds are configuration, not derived quantities;
    /// these defaults make all four granularity branches reachable on the
    /// bundled synthetic generator.
    fn default() -> Self {
        Thresholds {
            theta1: 50,
            theta2: 500,
            theta3: 5000,
        }
    }
}

/// One population-group level: which geography tier and iteration tier it
/// crosses, its budget, and its thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelPlan {
    pub level_id: u32,
    pub geo_level: GeoLevel,
    pub tier: IterationTier,
    pub budget: LevelBudget<f64>,
    pub thresholds: Thresholds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeScheme {
    Age1,
    Age4,
    Age9,
    Age23,
}

impl AgeScheme {
    pub fn bucket_count(self) -> usize {
        match self {
            AgeScheme::Age1 => 1,
            AgeScheme::Age4 => 4,
            AgeScheme::Age9 => 9,
            AgeScheme::Age23 => 23,
        }
    }
}

/// An age partition of [0, 115] given by bucket lower bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgeBucketing {
    scheme: AgeScheme,
    boundaries: Vec<u8>,
}

impl AgeBucketing {
    pub fn new(scheme: AgeScheme, boundaries: Vec<u8>) -> Result<Self> {
        if boundaries.len() != scheme.bucket_count() {
            return Err(Error::invalid_config(format!(
                "{:?} needs {} bucket lower bounds, got {}",
                scheme,
                scheme.bucket_count(),
                boundaries.len()
            )));
        }
        if boundaries[0] != 0 {
            return Err(Error::invalid_config("first age bucket must start at 0"));
        }
        for pair in boundaries.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::invalid_config(
                    "age bucket lower bounds must be strictly increasing",
                ));
            }
        }
        if *boundaries.last().unwrap() > MAX_AGE {
            return Err(Error::invalid_config(format!(
                "age bucket lower bound exceeds {MAX_AGE}"
            )));
        }
        Ok(AgeBucketing { scheme, boundaries })
    }

    pub fn default_for(scheme: AgeScheme) -> Self {
        let boundaries = match scheme {
            AgeScheme::Age1 => vec![0],
            AgeScheme::Age4 => vec![0, 18, 45, 65],
            AgeScheme::Age9 => vec![0, 5, 18, 25, 35, 45, 55, 65, 75],
            AgeScheme::Age23 => (0..23).map(|i| (i * 5) as u8).collect(),
        };
        AgeBucketing::new(scheme, boundaries).expect("built-in boundaries are valid")
    }

    pub fn bucket_count(&self) -> usize {
        self.boundaries.len()
    }

    pub fn bucket_of(&self, age: u8) -> usize {
        match self.boundaries.binary_search(&age) {
            Ok(i) => i,
            Err(i) => i - 1, // boundaries[0] == 0, so i ≥ 1 here
        }
    }

    pub fn label(&self, bucket: usize) -> String {
        let lo = self.boundaries[bucket];
        match self.boundaries.get(bucket + 1) {
            Some(&hi) => format!("{lo}-{}", hi - 1),
            None => format!("{lo}+"),
        }
    }
}

/// The three step-2 bucketings, config-overridable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgeSchemes {
    pub age4: AgeBucketing,
    pub age9: AgeBucketing,
    pub age23: AgeBucketing,
}

impl Default for AgeSchemes {
    fn default() -> Self {
        AgeSchemes {
            age4: AgeBucketing::default_for(AgeScheme::Age4),
            age9: AgeBucketing::default_for(AgeScheme::Age9),
            age23: AgeBucketing::default_for(AgeScheme::Age23),
        }
    }
}

/// One released noisy count.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputRow {
    pub level_id: u32,
    pub geo_id: String,
    pub iteration_code: String,
    /// "Total" or "{M|F}x{age bucket}".
    pub cell: String,
    pub noisy_count: i64,
    pub mechanism: Mechanism,
    /// Privacy loss spent on this single count.
    pub budget: f64,
}

/// Self-reported composed privacy loss of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub mechanism: Mechanism,
    /// (level_id, ρ_i) in plan order.
    pub levels: Vec<(u32, f64)>,
    /// Sequential composition over levels: Σ ρ_i.
    pub total_loss: f64,
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulationOutput {
    pub rows: Vec<OutputRow>,
    pub ledger: BudgetLedger,
}

/// Map one record to the population groups it belongs to at one level:
/// the geographic entities containing its block at the level's tier
/// (exactly one, except zero or more for AIANNH) crossed with every
/// matching iteration at the level's iteration tier.
pub fn map_to_groups(
    record: &PersonRecord,
    plan: &LevelPlan,
    geo: &GeoConfig,
    catalog: &IterationCatalog,
) -> Result<BTreeSet<PopulationGroup>> {
    let geo_ids: Vec<String> = match plan.geo_level {
        GeoLevel::Nation => {
            // Still reject unknown blocks at the nation level.
            geo.county_of(&record.block_id)?;
            vec![NATION_ID.to_string()]
        }
        GeoLevel::State => vec![geo.state_of(&record.block_id)?.to_string()],
        GeoLevel::County => vec![geo.county_of(&record.block_id)?.to_string()],
        GeoLevel::Aiannh => {
            geo.county_of(&record.block_id)?;
            geo.areas_of(&record.block_id)
                .into_iter()
                .map(str::to_string)
                .collect()
        }
    };
    let mut groups = BTreeSet::new();
    for iter in catalog.at_tier(plan.tier) {
        if iter.matches(record) {
            for geo_id in &geo_ids {
                groups.insert(PopulationGroup {
                    geo_id: geo_id.clone(),
                    iteration_code: iter.code.clone(),
                });
            }
        }
    }
    Ok(groups)
}

/// Exact stability Δ(g) of a level's group mapping: the maximum number of
/// population groups any record in the attribute domain can enter.
///
/// Computed combinatorially, never by sampling: the maximum number of
/// geographic entities containing one block at the level, times the maximum
/// number of iterations at the tier one record can match. The iteration
/// maximum is an exact branch-and-bound max-coverage search over distinct
/// race-code membership masks (a record contributes its ≤ race_multiplicity
/// codes), plus the best single ethnicity code. Returns at least 1.
pub fn stability(
    geo_level: GeoLevel,
    tier: IterationTier,
    catalog: &IterationCatalog,
    geo: &GeoConfig,
) -> u32 {
    let geo_factor = match geo_level {
        GeoLevel::Nation | GeoLevel::State | GeoLevel::County => 1,
        GeoLevel::Aiannh => geo.max_aiannh_overlap(),
    };
    let iter_factor = max_iteration_coverage(tier, catalog);
    (geo_factor * iter_factor).max(1)
}

fn max_iteration_coverage(tier: IterationTier, catalog: &IterationCatalog) -> u32 {
    let iters = catalog.at_tier(tier);
    let race: Vec<&&IterationConfig> = iters
        .iter()
        .filter(|i| i.kind == CharacteristicKind::Race)
        .collect();
    let eth: Vec<&&IterationConfig> = iters
        .iter()
        .filter(|i| i.kind == CharacteristicKind::Ethnicity)
        .collect();

    // A record has exactly one ethnicity code: its best case is the code
    // contained in the most ethnicity iterations.
    let mut eth_degree: BTreeMap<u16, u32> = BTreeMap::new();
    for it in &eth {
        for &code in &it.codes {
            *eth_degree.entry(code).or_insert(0) += 1;
        }
    }
    let eth_max = eth_degree.values().copied().max().unwrap_or(0);

    // Race-code membership masks: bit i of `aic`/`alone` says race iteration
    // i (AloneOrInCombination / Alone) contains the code. A record with code
    // set S matches the union of the AIC masks and the intersection of the
    // Alone masks over S; duplicate masks never change either, so the search
    // runs over distinct masks with at most race_multiplicity picks.
    debug_assert!(race.len() <= 128);
    let mut masks: BTreeSet<(u128, u128)> = BTreeSet::new();
    let mut codes: BTreeSet<u16> = BTreeSet::new();
    for it in &race {
        codes.extend(it.codes.iter().copied());
    }
    for code in codes {
        let mut aic = 0u128;
        let mut alone = 0u128;
        for (i, it) in race.iter().enumerate() {
            if it.codes.contains(&code) {
                match it.mode {
                    MatchMode::AloneOrInCombination => aic |= 1 << i,
                    MatchMode::Alone => alone |= 1 << i,
                }
            }
        }
        masks.insert((aic, alone));
    }
    let race_max = max_coverage(
        &masks.into_iter().collect::<Vec<_>>(),
        catalog.race_multiplicity as usize,
    );
    eth_max + race_max
}

/// Exact maximum of popcount(∪ aic) + popcount(∩ alone) over nonempty
/// selections of at most `max_picks` masks, by branch and bound.
fn max_coverage(masks: &[(u128, u128)], max_picks: usize) -> u32 {
    if masks.is_empty() || max_picks == 0 {
        return 0;
    }
    let mut order: Vec<(u128, u128)> = masks.to_vec();
    order.sort_by_key(|(aic, _)| std::cmp::Reverse(aic.count_ones()));
    // suffix_union[i] = union of aic masks from i onward, for the bound.
    let mut suffix_union = vec![0u128; order.len() + 1];
    for i in (0..order.len()).rev() {
        suffix_union[i] = suffix_union[i + 1] | order[i].0;
    }
    let max_alone: u32 = order
        .iter()
        .map(|(_, alone)| alone.count_ones())
        .max()
        .unwrap_or(0);

    struct Search<'a> {
        order: &'a [(u128, u128)],
        suffix_union: &'a [u128],
        max_alone: u32,
        max_picks: usize,
        best: u32,
    }

    impl Search<'_> {
        fn recurse(&mut self, i: usize, picks: usize, union: u128, inter: u128, started: bool) {
            if started {
                let score = union.count_ones() + inter.count_ones();
                if score > self.best {
                    self.best = score;
                }
            }
            if i == self.order.len() || picks == self.max_picks {
                return;
            }
            let alone_bound = if started {
                inter.count_ones()
            } else {
                self.max_alone
            };
            let optimistic = (union | self.suffix_union[i]).count_ones() + alone_bound;
            if optimistic <= self.best {
                return;
            }
            let (aic, alone) = self.order[i];
            let next_inter = if started { inter & alone } else { alone };
            self.recurse(i + 1, picks + 1, union | aic, next_inter, true);
            self.recurse(i + 1, picks, union, inter, started);
        }
    }

    let mut search = Search {
        order: &order,
        suffix_union: &suffix_union,
        max_alone,
        max_picks,
        best: 0,
    };
    search.recurse(0, 0, 0, 0, false);
    search.best
}

/// Add mechanism noise to a count. The budget value is the pure-DP ε
/// (geometric) or the zCDP ρ (discrete Gaussian) for this single count.
pub fn noisy_count(count: u64, budget: &Budget<f64>, rng: &mut RandomSource) -> i64 {
    let noise = match budget.mechanism {
        Mechanism::Geometric => GeometricSampler::from_epsilon_f64(budget.value)
            .expect("budget validated on construction")
            .sample(rng),
        Mechanism::DiscreteGaussian => GaussianSampler::from_rho_f64(budget.value)
            .expect("budget validated on construction")
            .sample(rng),
    };
    count as i64 + noise
}

/// True (pre-noise) Sex × AgeBucket histogram of a member list, in the cell
/// order the tabulation emits. Split out so tests can check the partition
/// property without touching the noise path.
pub fn sex_age_histogram(
    members: &[(Sex, u8)],
    bucketing: &AgeBucketing,
) -> Vec<(String, u64)> {
    let mut cells = Vec::with_capacity(2 * bucketing.bucket_count());
    for sex in [Sex::Male, Sex::Female] {
        for bucket in 0..bucketing.bucket_count() {
            let count = members
                .iter()
                .filter(|(s, age)| *s == sex && bucketing.bucket_of(*age) == bucket)
                .count() as u64;
            cells.push((format!("{}x{}", sex.letter(), bucketing.label(bucket)), count));
        }
    }
    cells
}

/// Tabulate one population group: a single noisy total for TotalOnly
/// groups; otherwise a step-1 noisy total on γρ picks the step-2
/// granularity (Total below θ1, then Sex×Age4 / Sex×Age9 / Sex×Age23), and
/// every step-2 cell — including empty ones — is released with budget
/// (1−γ)ρ.
pub fn tabulate_population_group(
    members: &[(Sex, u8)],
    group: &PopulationGroup,
    plan: &LevelPlan,
    total_only: bool,
    schemes: &AgeSchemes,
    rng: &mut RandomSource,
) -> Vec<OutputRow> {
    let mechanism = plan.budget.mechanism;
    let rho = plan.budget.rho_i / plan.budget.stability as f64;
    let gamma = plan.budget.gamma;
    let total = members.len() as u64;
    let row = |cell: String, noisy: i64, budget: f64| OutputRow {
        level_id: plan.level_id,
        geo_id: group.geo_id.clone(),
        iteration_code: group.iteration_code.clone(),
        cell,
        noisy_count: noisy,
        mechanism,
        budget,
    };

    if total_only {
        let budget = Budget::new(mechanism, rho).expect("positive budget");
        return vec![row(
            "Total".to_string(),
            noisy_count(total, &budget, rng),
            rho,
        )];
    }

    let step1_budget = Budget::new(mechanism, gamma * rho).expect("positive budget");
    let step1 = noisy_count(total, &step1_budget, rng);
    let step2_loss = (1.0 - gamma) * rho;
    let step2_budget = Budget::new(mechanism, step2_loss).expect("positive budget");

    if step1 < plan.thresholds.theta1 {
        return vec![row(
            "Total".to_string(),
            noisy_count(total, &step2_budget, rng),
            step2_loss,
        )];
    }
    let bucketing = if step1 < plan.thresholds.theta2 {
        &schemes.age4
    } else if step1 < plan.thresholds.theta3 {
        &schemes.age9
    } else {
        &schemes.age23
    };
    sex_age_histogram(members, bucketing)
        .into_iter()
        .map(|(cell, count)| row(cell, noisy_count(count, &step2_budget, rng), step2_loss))
        .collect()
}

/// Run the full tabulation: every configured population group at every
/// level receives output rows, deterministically for a given seed.
///
/// Configuration inconsistencies (mechanism or γ mismatches, a declared
/// stability below the exact bound, TotalOnly disagreements, unknown
/// blocks) surface before any noise is drawn. Each group's noise comes
/// from an RNG substream derived from (seed, level, group), so the output
/// is independent of iteration order.
#[allow(clippy::too_many_arguments)]
pub fn safetab_run(
    records: &[PersonRecord],
    plans: &[LevelPlan],
    geo: &GeoConfig,
    catalog: &IterationCatalog,
    mechanism: Mechanism,
    gamma: f64,
    seed: u64,
    schemes: &AgeSchemes,
) -> Result<TabulationOutput> {
    geo.validate()?;
    catalog.validate()?;
    if plans.is_empty() {
        return Err(Error::invalid_config("no level plans supplied"));
    }
    let mut seen_levels = BTreeSet::new();
    for plan in plans {
        if !seen_levels.insert(plan.level_id) {
            return Err(Error::invalid_config(format!(
                "duplicate level_id {}",
                plan.level_id
            )));
        }
        if plan.budget.mechanism != mechanism {
            return Err(Error::invalid_config(format!(
                "level {} uses {}, run requested {mechanism}",
                plan.level_id, plan.budget.mechanism
            )));
        }
        if plan.budget.gamma != gamma {
            return Err(Error::invalid_config(format!(
                "level {} has gamma {}, run requested {gamma}",
                plan.level_id, plan.budget.gamma
            )));
        }
        let exact = stability(plan.geo_level, plan.tier, catalog, geo);
        if exact > plan.budget.stability {
            return Err(Error::invalid_config(format!(
                "level {}: declared stability {} is below the exact bound {exact}",
                plan.level_id, plan.budget.stability
            )));
        }
        if plan.budget.total_only {
            let all_total_only = catalog.at_tier(plan.tier).iter().all(|i| i.total_only);
            if !all_total_only {
                return Err(Error::invalid_config(format!(
                    "level {} is budgeted TotalOnly but its tier has non-TotalOnly iterations",
                    plan.level_id
                )));
            }
        }
    }
    for record in records {
        record.validate(catalog.race_multiplicity)?;
        geo.county_of(&record.block_id)?;
    }

    let mut sorted_plans: Vec<&LevelPlan> = plans.iter().collect();
    sorted_plans.sort_by_key(|p| p.level_id);
    let root = RandomSource::from_seed(seed);

    let mut rows = Vec::new();
    for plan in &sorted_plans {
        let iterations = catalog.at_tier(plan.tier);
        let entities = geo.entities(plan.geo_level);

        // Assign records to groups for this level.
        let mut membership: BTreeMap<PopulationGroup, Vec<(Sex, u8)>> = BTreeMap::new();
        for record in records {
            for group in map_to_groups(record, plan, geo, catalog)? {
                membership
                    .entry(group)
                    .or_default()
                    .push((record.sex, record.age));
            }
        }

        // Tabulate every configured group, present in the data or not.
        for iteration in &iterations {
            for geo_id in &entities {
                let group = PopulationGroup {
                    geo_id: geo_id.clone(),
                    iteration_code: iteration.code.clone(),
                };
                let members = membership.get(&group).map(Vec::as_slice).unwrap_or(&[]);
                let mut group_rng = root.derive(&[
                    b"tabulate",
                    &plan.level_id.to_le_bytes(),
                    group.geo_id.as_bytes(),
                    group.iteration_code.as_bytes(),
                ]);
                rows.extend(tabulate_population_group(
                    members,
                    &group,
                    plan,
                    iteration.total_only,
                    schemes,
                    &mut group_rng,
                ));
            }
        }
    }

    let levels: Vec<(u32, f64)> = sorted_plans
        .iter()
        .map(|p| (p.level_id, p.budget.rho_i))
        .collect();
    let total_loss = levels.iter().map(|(_, rho)| rho).sum();
    Ok(TabulationOutput {
        rows,
        ledger: BudgetLedger {
            mechanism,
            levels,
            total_loss,
        },
    })
}
