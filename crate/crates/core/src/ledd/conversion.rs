//! Drug-to-LEDD conversion factors.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Route;
use crate::error::{Error, Result};

const BUNDLED_FACTORS: &str = include_str!("../../data/factors.csv");
const FACTORS_HEADER: [&str; 3] = ["drug_name", "route", "factor"];

/// Lookup from `(drug_name, route)` to LEDD milligrams per administered milligram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversionTable {
    entries: BTreeMap<(String, Route), f64>,
}

impl ConversionTable {
    /// Builds a table, enforcing positive factors and levodopa/oral = 1.
    pub fn new(entries: impl IntoIterator<Item = (String, Route, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (drug, route, factor) in entries {
            let drug = Self::normalize(&drug);
            if !(factor.is_finite() && factor > 0.0) {
                return Err(Error::invalid(format!(
                    "factor for {drug}/{route} must be positive, got {factor}"
                )));
            }
            if map.insert((drug.clone(), route), factor).is_some() {
                return Err(Error::invalid(format!(
                    "duplicate factor for {drug}/{route}"
                )));
            }
        }
        match map.get(&("levodopa".to_string(), Route::Oral)) {
            Some(1.0) => Ok(Self { entries: map }),
            Some(&f) => Err(Error::invalid(format!(
                "levodopa/oral factor must be exactly 1.0, got {f}"
            ))),
            None => Err(Error::invalid(
                "conversion table lacks the levodopa/oral reference entry",
            )),
        }
    }

    /// The factors shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_reader(BUNDLED_FACTORS.as_bytes()).expect("bundled factors.csv is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(reader);
        crate::data::records::check_header(rdr.headers()?, &FACTORS_HEADER)?;
        let mut entries = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let route: Route = row[1].parse()?;
            let factor: f64 = row[2].trim().parse().map_err(|_| Error::MalformedRow {
                line,
                reason: format!("unparseable factor `{}`", &row[2]),
            })?;
            entries.push((row[0].to_string(), route, factor));
        }
        Self::new(entries)
    }

    pub fn normalize(drug: &str) -> String {
        drug.trim().to_lowercase()
    }

    pub fn knows_drug(&self, drug: &str) -> bool {
        let drug = Self::normalize(drug);
        self.entries.keys().any(|(d, _)| *d == drug)
    }

    pub fn factor(&self, drug: &str, route: Route) -> Option<f64> {
        self.entries.get(&(Self::normalize(drug), route)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Route, f64)> {
        self.entries.iter().map(|((d, r), f)| (d.as_str(), *r, *f))
    }
}

/// `dose_mg × factor` for the given drug and route.
pub fn convert_to_ledd(
    drug: &str,
    dose_mg: f64,
    route: Route,
    table: &ConversionTable,
) -> Result<f64> {
    if !(dose_mg.is_finite() && dose_mg >= 0.0) {
        return Err(Error::invalid(format!(
            "dose must be a non-negative number, got {dose_mg}"
        )));
    }
    table
        .factor(drug, route)
        .map(|f| dose_mg * f)
        .ok_or_else(|| Error::UnknownConversion {
            drug: ConversionTable::normalize(drug),
            route: route.to_string(),
        })
}
