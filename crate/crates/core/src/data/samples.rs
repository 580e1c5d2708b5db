//! Horizon-labeled supervised samples and the samples CSV format.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};

/// Tolerance below which a transformed target counts as "no change".
pub const ZERO_TOL: f64 = 1e-12;

/// Fixed feature order shared by the LEDD pipeline and the synthetic generator.
pub const FEATURE_NAMES: [&str; 9] = [
    "age_years",
    "sex_code",
    "mean_ledd_per_visit",
    "length_of_stay_days",
    "days_since_last_visit",
    "days_to_diagnosis",
    "current_ledd",
    "n_prior_visits",
    "recent_change",
];

pub fn is_zero_target(target: f64) -> bool {
    target.abs() < ZERO_TOL
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Horizon {
    #[serde(rename = "6M")]
    SixMonths,
    #[serde(rename = "1Y")]
    OneYear,
    #[serde(rename = "2Y")]
    TwoYears,
    #[serde(rename = "4Y")]
    FourYears,
}

impl Horizon {
    pub const ALL: [Horizon; 4] = [
        Horizon::SixMonths,
        Horizon::OneYear,
        Horizon::TwoYears,
        Horizon::FourYears,
    ];

    pub fn days(self) -> i64 {
        match self {
            Horizon::SixMonths => 182,
            Horizon::OneYear => 365,
            Horizon::TwoYears => 730,
            Horizon::FourYears => 1461,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Horizon::SixMonths => "6M",
            Horizon::OneYear => "1Y",
            Horizon::TwoYears => "2Y",
            Horizon::FourYears => "4Y",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Horizon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "6M" => Ok(Horizon::SixMonths),
            "1Y" => Ok(Horizon::OneYear),
            "2Y" => Ok(Horizon::TwoYears),
            "4Y" => Ok(Horizon::FourYears),
            other => Err(Error::UnknownToken {
                kind: "horizon",
                token: other.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedSample {
    pub patient_id: String,
    pub index_date: NaiveDate,
    pub features: Vec<f64>,
    pub target: f64,
    pub horizon: Horizon,
    pub is_zero: bool,
}

impl SupervisedSample {
    pub fn new(
        patient_id: impl Into<String>,
        index_date: NaiveDate,
        features: Vec<f64>,
        target: f64,
        horizon: Horizon,
    ) -> Self {
        Self {
            patient_id: patient_id.into(),
            index_date,
            features,
            target,
            horizon,
            is_zero: is_zero_target(target),
        }
    }
}

/// A named collection of samples with a common feature arity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub samples: Vec<SupervisedSample>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, samples: Vec<SupervisedSample>) -> Result<Self> {
        let arity = feature_names.len();
        for s in &samples {
            if s.features.len() != arity {
                return Err(Error::ArityMismatch {
                    expected: arity,
                    found: s.features.len(),
                });
            }
        }
        Ok(Self {
            feature_names,
            samples,
        })
    }

    pub fn with_default_features(samples: Vec<SupervisedSample>) -> Result<Self> {
        Self::new(
            FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            samples,
        )
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn features(&self) -> FeatureMatrix {
        let mut m = FeatureMatrix::with_columns(self.n_features());
        for s in &self.samples {
            m.push_row(&s.features)
                .expect("arity checked at construction");
        }
        m
    }

    pub fn targets(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.target).collect()
    }

    pub fn zero_flags(&self) -> Vec<bool> {
        self.samples.iter().map(|s| s.is_zero).collect()
    }

    pub fn patient_ids(&self) -> Vec<String> {
        self.samples.iter().map(|s| s.patient_id.clone()).collect()
    }

    pub fn zero_fraction(&self) -> f64 {
        if self.samples.is_empty() {
            return f64::NAN;
        }
        self.samples.iter().filter(|s| s.is_zero).count() as f64 / self.samples.len() as f64
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    pub fn for_horizon(&self, horizon: Horizon) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            samples: self
                .samples
                .iter()
                .filter(|s| s.horizon == horizon)
                .cloned()
                .collect(),
        }
    }
}

/// Path of the sidecar feature-name manifest for a samples CSV.
pub fn manifest_path(samples_path: &Path) -> PathBuf {
    let mut name = samples_path.as_os_str().to_owned();
    name.push(".features");
    PathBuf::from(name)
}

fn samples_header(n_features: usize) -> Vec<String> {
    let mut h: Vec<String> = ["patient_id", "index_date", "horizon", "target", "is_zero"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..n_features).map(|i| format!("f_{i}")));
    h
}

/// Writes the samples CSV. `comment` lines are emitted first, each prefixed with `# `.
pub fn write_samples_to<W: Write>(
    mut writer: W,
    dataset: &Dataset,
    comment: &[String],
) -> Result<()> {
    for line in comment {
        writeln!(writer, "# {line}").map_err(|e| Error::io("<samples writer>", e))?;
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(samples_header(dataset.n_features()))?;
    for s in &dataset.samples {
        let mut rec = vec![
            s.patient_id.clone(),
            s.index_date.format("%Y-%m-%d").to_string(),
            s.horizon.to_string(),
            s.target.to_string(),
            s.is_zero.to_string(),
        ];
        rec.extend(s.features.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<samples writer>", e))?;
    Ok(())
}

/// Writes `path` plus its feature-name manifest (one name per line).
pub fn write_samples(path: impl AsRef<Path>, dataset: &Dataset, comment: &[String]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_samples_to(std::io::BufWriter::new(file), dataset, comment)?;
    let manifest = manifest_path(path);
    let mut text = dataset.feature_names.join("\n");
    text.push('\n');
    fs::write(&manifest, text).map_err(|e| Error::io(&manifest, e))?;
    Ok(())
}

pub fn read_samples_from<R: Read>(
    reader: R,
    feature_names: Option<Vec<String>>,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 5 {
        return Err(Error::MalformedHeader {
            expected: samples_header(0).join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let n_features = header.len() - 5;
    let expected = samples_header(n_features);
    crate::data::records::check_header(
        &header,
        &expected.iter().map(String::as_str).collect::<Vec<_>>(),
    )?;
    let names = match feature_names {
        Some(n) if n.len() == n_features => n,
        Some(n) => {
            return Err(Error::ArityMismatch {
                expected: n_features,
                found: n.len(),
            })
        }
        None => (0..n_features).map(|i| format!("f_{i}")).collect(),
    };

    let mut samples = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |reason: String| Error::MalformedRow { line, reason };
        let index_date = NaiveDate::parse_from_str(row[1].trim(), "%Y-%m-%d")
            .map_err(|_| bad(format!("unparseable date `{}`", &row[1])))?;
        let horizon: Horizon = row[2].parse()?;
        let target: f64 = row[3]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad target `{}`", &row[3])))?;
        let is_zero: bool = row[4]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad is_zero `{}`", &row[4])))?;
        if is_zero != is_zero_target(target) {
            return Err(bad(format!(
                "is_zero={is_zero} inconsistent with target {target}"
            )));
        }
        let features = (5..row.len())
            .map(|j| {
                row[j]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| bad(format!("bad feature `{}`", &row[j])))
            })
            .collect::<Result<Vec<_>>>()?;
        samples.push(SupervisedSample {
            patient_id: row[0].to_string(),
            index_date,
            features,
            target,
            horizon,
            is_zero,
        });
    }
    Dataset::new(names, samples)
}

/// Reads a samples CSV, picking up the sidecar manifest when present.
pub fn read_samples(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let manifest = manifest_path(path);
    let names = if manifest.exists() {
        let f = File::open(&manifest).map_err(|e| Error::io(&manifest, e))?;
        let names = BufReader::new(f)
            .lines()
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(|e| Error::io(&manifest, e))?
            .into_iter()
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty())
            .collect();
        Some(names)
    } else {
        None
    };
    read_samples_from(BufReader::new(file), names)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, target: f64, f: [f64; 2]) -> SupervisedSample {
        SupervisedSample::new(
            id,
            NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            f.to_vec(),
            target,
            Horizon::OneYear,
        )
    }

    #[test]
    fn is_zero_follows_tolerance() {
        assert!(sample("a", 0.0, [0.0, 0.0]).is_zero);
        assert!(sample("a", 1e-13, [0.0, 0.0]).is_zero);
        assert!(!sample("a", 1e-6, [0.0, 0.0]).is_zero);
    }

    #[test]
    fn arity_enforced() {
        let s = vec![sample("a", 0.0, [1.0, 2.0])];
        assert!(Dataset::new(vec!["x".into()], s).is_err());
    }

    #[test]
    fn csv_round_trip_with_manifest() {
        let ds = Dataset::new(
            vec!["age".into(), "dose".into()],
            vec![
                sample("a", 0.0, [70.5, 300.0]),
                sample("b", -0.25, [81.0, 1e-3]),
            ],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("samples.csv");
        write_samples(&path, &ds, &["zicp test".to_string()]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(
            text.starts_with("# zicp test\npatient_id,index_date,horizon,target,is_zero,f_0,f_1\n")
        );
        assert_eq!(read_samples(&path).unwrap(), ds);
    }

    #[test]
    fn horizon_tokens() {
        for h in Horizon::ALL {
            assert_eq!(h.as_str().parse::<Horizon>().unwrap(), h);
        }
        assert!("3M".parse::<Horizon>().is_err());
        assert_eq!(serde_json::to_string(&Horizon::TwoYears).unwrap(), "\"2Y\"");
    }
}
