//! File formats: person CSV, geography and iteration JSON configs, level
//! plans JSON, output CSV, and the budget-ledger sidecar.
//!
//! Person CSV: header `block_id,race_codes,ethnicity_code,sex,age`, race
//! codes semicolon-separated, sex `M`/`F`.
//!
//! Output CSV: header
//! `level_id,geo_id,iteration_code,cell,noisy_count,mechanism,budget`.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::accounting::{LevelBudget, Mechanism};
use crate::error::{Error, Result};
use crate::tabulation::{
    AgeBucketing, AgeScheme, AgeSchemes, BudgetLedger, GeoConfig, GeoLevel, IterationCatalog,
    IterationTier, LevelPlan, OutputRow, PersonRecord, Sex, Thresholds,
};

pub const PERSON_CSV_HEADER: [&str; 5] = ["block_id", "race_codes", "ethnicity_code", "sex", "age"];
pub const OUTPUT_CSV_HEADER: [&str; 7] = [
    "level_id",
    "geo_id",
    "iteration_code",
    "cell",
    "noisy_count",
    "mechanism",
    "budget",
];

fn data_err<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> Error + '_ {
    move |e| Error::data(format!("{context}: {e}"))
}

/// Parse person records from CSV.
pub fn read_persons<R: Read>(reader: R) -> Result<Vec<PersonRecord>> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let headers = csv.headers().map_err(data_err("reading person CSV header"))?;
        let got: Vec<&str> = headers.iter().collect();
        if got != PERSON_CSV_HEADER {
            return Err(Error::data(format!(
                "person CSV header mismatch: expected {PERSON_CSV_HEADER:?}, got {got:?}"
            )));
        }
    }
    let mut records = Vec::new();
    for (i, row) in csv.records().enumerate() {
        let row = row.map_err(data_err("reading person CSV"))?;
        let line = i + 2;
        if row.len() != 5 {
            return Err(Error::data(format!(
                "person CSV line {line}: expected 5 fields, got {}",
                row.len()
            )));
        }
        let race_codes: BTreeSet<u16> = row[1]
            .split(';')
            .map(|c| {
                c.trim()
                    .parse::<u16>()
                    .map_err(|_| Error::data(format!("person CSV line {line}: bad race code {c:?}")))
            })
            .collect::<Result<_>>()?;
        let ethnicity_code = row[2]
            .parse::<u16>()
            .map_err(|_| Error::data(format!("person CSV line {line}: bad ethnicity code")))?;
        let sex = match &row[3] {
            "M" => Sex::Male,
            "F" => Sex::Female,
            other => {
                return Err(Error::data(format!(
                    "person CSV line {line}: sex must be M or F, got {other:?}"
                )))
            }
        };
        let age = row[4]
            .parse::<u8>()
            .map_err(|_| Error::data(format!("person CSV line {line}: bad age")))?;
        records.push(PersonRecord {
            block_id: row[0].to_string(),
            race_codes,
            ethnicity_code,
            sex,
            age,
        });
    }
    Ok(records)
}

pub fn read_persons_file(path: &Path) -> Result<Vec<PersonRecord>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::data(format!("cannot open persons file {}: {e}", path.display())))?;
    read_persons(std::io::BufReader::new(file))
}

/// Write person records as CSV (the datagen output format).
pub fn write_persons<W: Write>(writer: W, records: &[PersonRecord]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(PERSON_CSV_HEADER)
        .map_err(data_err("writing person CSV"))?;
    for r in records {
        let codes = r
            .race_codes
            .iter()
            .map(u16::to_string)
            .collect::<Vec<_>>()
            .join(";");
        csv.write_record([
            r.block_id.as_str(),
            codes.as_str(),
            &r.ethnicity_code.to_string(),
            &r.sex.letter().to_string(),
            &r.age.to_string(),
        ])
        .map_err(data_err("writing person CSV"))?;
    }
    csv.flush().map_err(data_err("writing person CSV"))?;
    Ok(())
}

pub fn read_geo_file(path: &Path) -> Result<GeoConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot open geo config {}: {e}", path.display())))?;
    let geo: GeoConfig = serde_json::from_str(&text)
        .map_err(|e| Error::invalid_config(format!("geo config {}: {e}", path.display())))?;
    geo.validate()?;
    Ok(geo)
}

pub fn write_geo_file(path: &Path, geo: &GeoConfig) -> Result<()> {
    write_json(path, geo, "geo config")
}

pub fn read_iterations_file(path: &Path) -> Result<IterationCatalog> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::data(format!(
            "cannot open iteration config {}: {e}",
            path.display()
        ))
    })?;
    let catalog: IterationCatalog = serde_json::from_str(&text)
        .map_err(|e| Error::invalid_config(format!("iteration config {}: {e}", path.display())))?;
    catalog.validate()?;
    Ok(catalog)
}

pub fn write_iterations_file(path: &Path, catalog: &IterationCatalog) -> Result<()> {
    write_json(path, catalog, "iteration config")
}

/// On-disk form of one level plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanLevelFile {
    pub level_id: u32,
    pub geo_level: GeoLevel,
    pub tier: IterationTier,
    /// Level total loss (ε for geometric, ρ for discrete Gaussian).
    pub rho: f64,
    pub stability: u32,
    #[serde(default)]
    pub total_only: bool,
    /// [θ1, θ2, θ3]
    pub thresholds: [i64; 3],
}

/// On-disk form of the full plan set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlansFile {
    pub mechanism: Mechanism,
    pub gamma: f64,
    pub levels: Vec<PlanLevelFile>,
    /// Optional custom age bucket lower bounds per scheme.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age4: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age9: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age23: Option<Vec<u8>>,
}

impl PlansFile {
    pub fn to_plans(&self) -> Result<(Vec<LevelPlan>, AgeSchemes)> {
        let mut plans = Vec::with_capacity(self.levels.len());
        for level in &self.levels {
            plans.push(LevelPlan {
                level_id: level.level_id,
                geo_level: level.geo_level,
                tier: level.tier,
                budget: LevelBudget::new(
                    self.mechanism,
                    level.rho,
                    level.stability,
                    self.gamma,
                    level.total_only,
                )?,
                thresholds: Thresholds::new(
                    level.thresholds[0],
                    level.thresholds[1],
                    level.thresholds[2],
                )?,
            });
        }
        let mut schemes = AgeSchemes::default();
        if let Some(b) = &self.age4 {
            schemes.age4 = AgeBucketing::new(AgeScheme::Age4, b.clone())?;
        }
        if let Some(b) = &self.age9 {
            schemes.age9 = AgeBucketing::new(AgeScheme::Age9, b.clone())?;
        }
        if let Some(b) = &self.age23 {
            schemes.age23 = AgeBucketing::new(AgeScheme::Age23, b.clone())?;
        }
        Ok((plans, schemes))
    }
}

pub fn read_plans_file(path: &Path) -> Result<PlansFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot open plans file {}: {e}", path.display())))?;
    let plans: PlansFile = serde_json::from_str(&text)
        .map_err(|e| Error::invalid_config(format!("plans file {}: {e}", path.display())))?;
    Ok(plans)
}

pub fn write_plans_file(path: &Path, plans: &PlansFile) -> Result<()> {
    write_json(path, plans, "plans file")
}

/// Serialize output rows as CSV. The byte stream is a pure function of the
/// rows: fixed header, `{}` float formatting (shortest round-trip).
pub fn write_output_csv<W: Write>(writer: W, rows: &[OutputRow]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(OUTPUT_CSV_HEADER)
        .map_err(data_err("writing output CSV"))?;
    for row in rows {
        csv.write_record([
            row.level_id.to_string(),
            row.geo_id.clone(),
            row.iteration_code.clone(),
            row.cell.clone(),
            row.noisy_count.to_string(),
            row.mechanism.to_string(),
            format!("{}", row.budget),
        ])
        .map_err(data_err("writing output CSV"))?;
    }
    csv.flush().map_err(data_err("writing output CSV"))?;
    Ok(())
}

pub fn write_ledger_file(path: &Path, ledger: &BudgetLedger) -> Result<()> {
    write_json(path, ledger, "budget ledger")
}

fn write_json<T: Serialize>(path: &Path, value: &T, what: &str) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::invalid_config(format!("serializing {what}: {e}")))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| Error::data(format!("writing {what} {}: {e}", path.display())))?;
    Ok(())
}
