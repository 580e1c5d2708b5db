//! Raw visit records and their CSV ingestion.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledd::ConversionTable;

pub const VISITS_HEADER: [&str; 7] = [
    "patient_id",
    "visit_date",
    "drug_name",
    "dose_mg",
    "route",
    "department",
    "length_of_stay_days",
];

pub const DEMOGRAPHICS_HEADER: [&str; 4] = ["patient_id", "age_years", "sex", "race"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Route {
    #[serde(rename = "oral")]
    Oral,
    #[serde(rename = "transdermal")]
    Transdermal,
    #[serde(rename = "intestinal-gel")]
    IntestinalGel,
}

impl Route {
    pub fn as_str(self) -> &'static str {
        match self {
            Route::Oral => "oral",
            Route::Transdermal => "transdermal",
            Route::IntestinalGel => "intestinal-gel",
        }
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Route {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "oral" => Ok(Route::Oral),
            "transdermal" => Ok(Route::Transdermal),
            "intestinal-gel" => Ok(Route::IntestinalGel),
            other => Err(Error::UnknownToken {
                kind: "route",
                token: other.to_string(),
            }),
        }
    }
}

/// Sex codebook: female 0, male 1, unknown 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Sex {
    Female,
    Male,
    #[default]
    Unknown,
}

impl Sex {
    pub fn code(self) -> f64 {
        match self {
            Sex::Female => 0.0,
            Sex::Male => 1.0,
            Sex::Unknown => 2.0,
        }
    }

    /// Unrecognized tokens map to the reserved unknown code.
    pub fn parse(token: &str) -> Self {
        match token.trim().to_ascii_lowercase().as_str() {
            "f" | "female" => Sex::Female,
            "m" | "male" => Sex::Male,
            _ => Sex::Unknown,
        }
    }
}

/// Race codebook: white 0, black 1, asian 2, other 3, multiracial 4, unknown 5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Race {
    White,
    Black,
    Asian,
    Other,
    Multiracial,
    #[default]
    Unknown,
}

impl Race {
    pub fn code(self) -> f64 {
        match self {
            Race::White => 0.0,
            Race::Black => 1.0,
            Race::Asian => 2.0,
            Race::Other => 3.0,
            Race::Multiracial => 4.0,
            Race::Unknown => 5.0,
        }
    }

    pub fn parse(token: &str) -> Self {
        match token.trim().to_ascii_lowercase().as_str() {
            "white" => Race::White,
            "black" => Race::Black,
            "asian" => Race::Asian,
            "other" => Race::Other,
            "multiracial" => Race::Multiracial,
            _ => Race::Unknown,
        }
    }
}

/// One inpatient medication administration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitRecord {
    pub patient_id: String,
    pub visit_date: NaiveDate,
    pub drug_name: String,
    pub dose_mg: f64,
    pub route: Route,
    pub department: Option<String>,
    pub length_of_stay_days: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    WrongFieldCount(usize),
    MissingPatientId,
    UnparseableDate(String),
    UnparseableDose(String),
    NegativeDose,
    UnknownRoute(String),
    UnknownDrug(String),
    NoFactorForRoute { drug: String, route: Route },
    UnparseableLengthOfStay(String),
    NegativeLengthOfStay,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::WrongFieldCount(n) => write!(f, "wrong field count ({n})"),
            RejectReason::MissingPatientId => f.write_str("missing patient id"),
            RejectReason::UnparseableDate(s) => write!(f, "unparseable date `{s}`"),
            RejectReason::UnparseableDose(s) => write!(f, "unparseable dose `{s}`"),
            RejectReason::NegativeDose => f.write_str("negative dose"),
            RejectReason::UnknownRoute(s) => write!(f, "unknown route `{s}`"),
            RejectReason::UnknownDrug(s) => write!(f, "unknown drug `{s}`"),
            RejectReason::NoFactorForRoute { drug, route } => {
                write!(f, "no conversion factor for `{drug}` via {route}")
            }
            RejectReason::UnparseableLengthOfStay(s) => {
                write!(f, "unparseable length of stay `{s}`")
            }
            RejectReason::NegativeLengthOfStay => f.write_str("negative length of stay"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowRejection {
    /// 1-based line number in the source file (the header is line 1).
    pub line: u64,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default)]
pub struct VisitLoad {
    pub records: Vec<VisitRecord>,
    pub rejected: Vec<RowRejection>,
}

pub fn load_visits(path: impl AsRef<Path>, table: &ConversionTable) -> Result<VisitLoad> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_visits(file, table)
}

pub fn read_visits<R: Read>(reader: R, table: &ConversionTable) -> Result<VisitLoad> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    check_header(rdr.headers()?, &VISITS_HEADER)?;

    let mut load = VisitLoad::default();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        match parse_visit(&row, table) {
            Ok(rec) => load.records.push(rec),
            Err(reason) => {
                log::warn!("visits line {line} rejected: {reason}");
                load.rejected.push(RowRejection { line, reason });
            }
        }
    }
    Ok(load)
}

pub(crate) fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let ok =
        found.len() == expected.len() && found.iter().zip(expected).all(|(f, e)| f.trim() == *e);
    if ok {
        Ok(())
    } else {
        Err(Error::MalformedHeader {
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        })
    }
}

fn parse_visit(
    row: &csv::StringRecord,
    table: &ConversionTable,
) -> std::result::Result<VisitRecord, RejectReason> {
    if row.len() != VISITS_HEADER.len() {
        return Err(RejectReason::WrongFieldCount(row.len()));
    }
    let patient_id = row[0].trim();
    if patient_id.is_empty() {
        return Err(RejectReason::MissingPatientId);
    }
    let date_raw = row[1].trim();
    let visit_date = NaiveDate::parse_from_str(date_raw, "%Y-%m-%d")
        .map_err(|_| RejectReason::UnparseableDate(date_raw.to_string()))?;
    let drug_name = ConversionTable::normalize(&row[2]);
    let dose_raw = row[3].trim();
    let dose_mg: f64 = dose_raw
        .parse()
        .ok()
        .filter(|d: &f64| d.is_finite())
        .ok_or_else(|| RejectReason::UnparseableDose(dose_raw.to_string()))?;
    if dose_mg < 0.0 {
        return Err(RejectReason::NegativeDose);
    }
    let route: Route = row[4]
        .parse()
        .map_err(|_| RejectReason::UnknownRoute(row[4].trim().to_string()))?;
    if !table.knows_drug(&drug_name) {
        return Err(RejectReason::UnknownDrug(drug_name));
    }
    if table.factor(&drug_name, route).is_none() {
        return Err(RejectReason::NoFactorForRoute {
            drug: drug_name,
            route,
        });
    }
    let department = Some(row[5].trim())
        .filter(|d| !d.is_empty())
        .map(str::to_string);
    let los_raw = row[6].trim();
    let length_of_stay_days: f64 = los_raw
        .parse()
        .ok()
        .filter(|d: &f64| d.is_finite())
        .ok_or_else(|| RejectReason::UnparseableLengthOfStay(los_raw.to_string()))?;
    if length_of_stay_days < 0.0 {
        return Err(RejectReason::NegativeLengthOfStay);
    }
    Ok(VisitRecord {
        patient_id: patient_id.to_string(),
        visit_date,
        drug_name,
        dose_mg,
        route,
        department,
        length_of_stay_days,
    })
}

pub fn write_visits<W: Write>(writer: W, records: &[VisitRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(VISITS_HEADER)?;
    for r in records {
        w.write_record([
            r.patient_id.clone(),
            r.visit_date.format("%Y-%m-%d").to_string(),
            r.drug_name.clone(),
            r.dose_mg.to_string(),
            r.route.to_string(),
            r.department.clone().unwrap_or_default(),
            r.length_of_stay_days.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<visits writer>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    /// Age at the patient's first recorded visit.
    pub age_years: f64,
    pub sex: Sex,
    pub race: Race,
}

/// Reads `patient_id,age_years,sex,race`. Unknown sex/race tokens map to
/// the reserved codes; rows with unparseable ages are skipped with a warning.
pub fn load_demographics(path: impl AsRef<Path>) -> Result<HashMap<String, Demographics>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(file);
    check_header(rdr.headers()?, &DEMOGRAPHICS_HEADER)?;
    let mut out = HashMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let age = row
            .get(1)
            .and_then(|a| a.trim().parse::<f64>().ok())
            .filter(|a| a.is_finite());
        let Some(age_years) = age else {
            log::warn!("demographics line {line}: unparseable age, row skipped");
            continue;
        };
        out.insert(
            row[0].trim().to_string(),
            Demographics {
                age_years,
                sex: Sex::parse(row.get(2).unwrap_or("")),
                race: Race::parse(row.get(3).unwrap_or("")),
            },
        );
    }
    Ok(out)
}
