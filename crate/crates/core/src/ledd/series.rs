//! Per-patient LEDD time series and visit-to-visit changes.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::VisitRecord;
use crate::error::Result;
use crate::ledd::conversion::{convert_to_ledd, ConversionTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeddPoint {
    pub date: NaiveDate,
    pub ledd_mg: f64,
    /// Longest stay among that day's administrations.
    pub length_of_stay_days: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeddSeries {
    pub patient_id: String,
    /// Strictly increasing dates.
    pub points: Vec<LeddPoint>,
}

/// Daily LEDD totals, one series per patient, ordered by patient id.
pub fn ledd_series(visits: &[VisitRecord], table: &ConversionTable) -> Result<Vec<LeddSeries>> {
    let mut by_patient: BTreeMap<&str, BTreeMap<NaiveDate, (f64, f64)>> = BTreeMap::new();
    for v in visits {
        let ledd = convert_to_ledd(&v.drug_name, v.dose_mg, v.route, table)?;
        let day = by_patient
            .entry(v.patient_id.as_str())
            .or_default()
            .entry(v.visit_date)
            .or_insert((0.0, 0.0));
        day.0 += ledd;
        day.1 = day.1.max(v.length_of_stay_days);
    }
    Ok(by_patient
        .into_iter()
        .map(|(id, days)| LeddSeries {
            patient_id: id.to_string(),
            points: days
                .into_iter()
                .map(|(date, (ledd_mg, los))| LeddPoint {
                    date,
                    ledd_mg,
                    length_of_stay_days: los,
                })
                .collect(),
        })
        .collect())
}

/// Relative change `(b − a) / a`, or `None` when the base is zero.
pub fn relative_change(a: f64, b: f64) -> Option<f64> {
    (a != 0.0).then(|| (b - a) / a)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PctChanges {
    /// `(date of the later visit, fractional change)`.
    pub changes: Vec<(NaiveDate, f64)>,
    /// Consecutive pairs dropped because the earlier LEDD was zero.
    pub skipped: usize,
}

/// Fractional change between consecutive points.
pub fn pct_change(series: &LeddSeries) -> PctChanges {
    let mut out = PctChanges::default();
    for w in series.points.windows(2) {
        match relative_change(w[0].ledd_mg, w[1].ledd_mg) {
            Some(p) => out.changes.push((w[1].date, p)),
            None => out.skipped += 1,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Route;

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, d).unwrap()
    }

    fn series(ledd: &[f64]) -> LeddSeries {
        LeddSeries {
            patient_id: "p".into(),
            points: ledd
                .iter()
                .enumerate()
                .map(|(i, &l)| LeddPoint {
                    date: day(i as u32 + 1),
                    ledd_mg: l,
                    length_of_stay_days: 1.0,
                })
                .collect(),
        }
    }

    fn visit(id: &str, d: u32, drug: &str, dose: f64) -> VisitRecord {
        VisitRecord {
            patient_id: id.into(),
            visit_date: day(d),
            drug_name: drug.into(),
            dose_mg: dose,
            route: Route::Oral,
            department: None,
            length_of_stay_days: d as f64,
        }
    }

    #[test]
    fn same_day_doses_sum() {
        let s = ledd_series(
            &[
                visit("a", 1, "levodopa", 100.0),
                visit("a", 1, "pramipexole", 1.0),
            ],
            &ConversionTable::bundled(),
        )
        .unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].points.len(), 1);
        assert_eq!(s[0].points[0].ledd_mg, 200.0);
        assert!(ledd_series(&[], &ConversionTable::bundled())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn interleaved_patients_separate() {
        let visits = vec![
            visit("b", 3, "levodopa", 50.0),
            visit("a", 2, "levodopa", 100.0),
            visit("b", 1, "levodopa", 10.0),
            visit("a", 5, "levodopa", 300.0),
        ];
        let s = ledd_series(&visits, &ConversionTable::bundled()).unwrap();
        assert_eq!(
            s.iter().map(|x| x.patient_id.as_str()).collect::<Vec<_>>(),
            ["a", "b"]
        );
        assert_eq!(
            s[0].points.iter().map(|p| p.ledd_mg).collect::<Vec<_>>(),
            [100.0, 300.0]
        );
        assert_eq!(
            s[1].points.iter().map(|p| p.date).collect::<Vec<_>>(),
            [day(1), day(3)]
        );
    }

    #[test]
    fn pct_examples() {
        assert_eq!(pct_change(&series(&[100.0, 100.0])).changes[0].1, 0.0);
        assert_eq!(pct_change(&series(&[100.0, 150.0])).changes[0].1, 0.5);
        let p = pct_change(&series(&[100.0, 0.0, 50.0]));
        assert_eq!(p.changes, vec![(day(2), -1.0)]);
        assert_eq!(p.skipped, 1);
    }
}
