//! Deterministic train / cal1 / val / test partitioning.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub cal1: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.6,
            cal1: 0.1,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    pub fn new(train: f64, cal1: f64, val: f64, test: f64) -> Result<Self> {
        let f = Self {
            train,
            cal1,
            val,
            test,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.cal1, self.val, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::invalid(format!(
                "split fractions must be positive, got {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "split fractions must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }

    /// Target sizes for (cal1, val, test); train takes the remainder.
    fn held_out_sizes(&self, n: usize) -> [usize; 3] {
        [self.cal1, self.val, self.test].map(|f| (f * n as f64).floor() as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_idx: Vec<usize>,
    pub cal1_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train_idx.len() + self.cal1_idx.len() + self.val_idx.len() + self.test_idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn parts(&self) -> [&[usize]; 4] {
        [
            &self.train_idx,
            &self.cal1_idx,
            &self.val_idx,
            &self.test_idx,
        ]
    }
}

/// Optional structure imposed on a split.
#[derive(Debug, Clone, Copy, Default)]
pub struct SplitOptions<'a> {
    /// Keep all rows sharing a group id in one partition.
    pub groups: Option<&'a [String]>,
    /// Allocate each stratum separately (grouped splits use the group's majority label).
    pub strata: Option<&'a [bool]>,
}

/// Ungrouped, unstratified split of `0..n`.
pub fn make_split(n: usize, fractions: SplitFractions, seed: u64) -> Result<DatasetSplit> {
    make_split_with(n, fractions, seed, SplitOptions::default())
}

/// Split where every patient lands in exactly one partition.
pub fn make_grouped_split(
    patient_ids: &[String],
    fractions: SplitFractions,
    seed: u64,
) -> Result<DatasetSplit> {
    make_split_with(
        patient_ids.len(),
        fractions,
        seed,
        SplitOptions {
            groups: Some(patient_ids),
            strata: None,
        },
    )
}

pub fn make_split_with(
    n: usize,
    fractions: SplitFractions,
    seed: u64,
    options: SplitOptions<'_>,
) -> Result<DatasetSplit> {
    fractions.validate()?;
    if n < 4 {
        return Err(Error::InsufficientSamples(format!(
            "need at least 4 samples to split, got {n}"
        )));
    }
    for len in [
        options.groups.map(<[String]>::len),
        options.strata.map(<[bool]>::len),
    ]
    .into_iter()
    .flatten()
    {
        if len != n {
            return Err(Error::LengthMismatch {
                left: len,
                right: n,
            });
        }
    }

    // Units are single rows or whole groups; each unit carries its rows and stratum.
    let units: Vec<(Vec<usize>, bool)> = match options.groups {
        None => (0..n)
            .map(|i| (vec![i], options.strata.is_some_and(|s| s[i])))
            .collect(),
        Some(groups) => {
            let mut by_id: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, g) in groups.iter().enumerate() {
                by_id.entry(g.as_str()).or_default().push(i);
            }
            by_id
                .into_values()
                .map(|rows| {
                    let positives = options
                        .strata
                        .map_or(0, |s| rows.iter().filter(|&&i| s[i]).count());
                    let majority = 2 * positives > rows.len();
                    (rows, majority)
                })
                .collect()
        }
    };

    let strata: Vec<Vec<usize>> = if options.strata.is_some() {
        let (pos, neg): (Vec<usize>, Vec<usize>) = (0..units.len()).partition(|&u| units[u].1);
        vec![neg, pos]
    } else {
        vec![(0..units.len()).collect()]
    };

    let mut rng = rng_from_seed(seed);
    let mut parts: [Vec<usize>; 4] = Default::default();
    for mut stratum in strata {
        stratum.shuffle(&mut rng);
        let rows_in_stratum: usize = stratum.iter().map(|&u| units[u].0.len()).sum();
        let targets = fractions.held_out_sizes(rows_in_stratum);
        let mut slot = 0;
        let mut filled = [0usize; 3];
        for u in stratum {
            while slot < 3 && filled[slot] >= targets[slot] {
                slot += 1;
            }
            let rows = &units[u].0;
            if slot < 3 {
                filled[slot] += rows.len();
                parts[slot + 1].extend_from_slice(rows);
            } else {
                parts[0].extend_from_slice(rows);
            }
        }
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    let [train_idx, cal1_idx, val_idx, test_idx] = parts;
    Ok(DatasetSplit {
        train_idx,
        cal1_idx,
        val_idx,
        test_idx,
        seed,
    })
}

/// Fold id in `0..k` for each of `n` rows: a seeded shuffle dealt round-robin.
pub fn kfold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::invalid(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > n {
        return Err(Error::InsufficientSamples(format!(
            "{k} folds over {n} samples"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let mut fold = vec![0; n];
    for (pos, i) in order.into_iter().enumerate() {
        fold[i] = pos % k;
    }
    Ok(fold)
}

/// (train, held-out) index pairs for each fold of an assignment.
pub fn fold_indices(assignment: &[usize], k: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    (0..k)
        .map(|f| {
            let (held, train): (Vec<usize>, Vec<usize>) =
                (0..assignment.len()).partition(|&i| assignment[i] == f);
            (train, held)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn covers(split: &DatasetSplit, n: usize) -> bool {
        let mut all: Vec<usize> = split
            .parts()
            .iter()
            .flat_map(|p| p.iter().copied())
            .collect();
        all.sort_unstable();
        all == (0..n).collect::<Vec<_>>()
    }

    #[test]
    fn deterministic_and_covering() {
        let f = SplitFractions::new(0.5, 0.2, 0.2, 0.1).unwrap();
        let a = make_split(10, f, 7).unwrap();
        assert_eq!(a, make_split(10, f, 7).unwrap());
        assert!(covers(&a, 10));
        assert_eq!(
            (
                a.cal1_idx.len(),
                a.val_idx.len(),
                a.test_idx.len(),
                a.train_idx.len()
            ),
            (2, 2, 1, 5)
        );
    }

    #[test]
    fn exact_quarters() {
        let f = SplitFractions::new(0.25, 0.25, 0.25, 0.25).unwrap();
        let s = make_split(4, f, 1).unwrap();
        assert!(s.parts().iter().all(|p| p.len() == 1));
    }

    #[test]
    fn rejects_tiny_and_bad_fractions() {
        assert!(matches!(
            make_split(3, SplitFractions::default(), 0),
            Err(Error::InsufficientSamples(_))
        ));
        assert!(SplitFractions::new(0.5, 0.5, 0.1, 0.1).is_err());
        assert!(SplitFractions::new(0.7, 0.3, 0.0, 0.0).is_err());
    }

    #[test]
    fn stratified_keeps_rates_close() {
        let labels: Vec<bool> = (0..400).map(|i| i % 4 == 0).collect();
        let s = make_split_with(
            400,
            SplitFractions::default(),
            3,
            SplitOptions {
                groups: None,
                strata: Some(&labels),
            },
        )
        .unwrap();
        assert!(covers(&s, 400));
        let rate =
            s.test_idx.iter().filter(|&&i| labels[i]).count() as f64 / s.test_idx.len() as f64;
        assert!((rate - 0.25).abs() < 0.01, "{rate}");
    }

    #[test]
    fn kfold_balanced() {
        let a = kfold_assignment(23, 5, 9).unwrap();
        let mut counts = [0; 5];
        for f in &a {
            counts[*f] += 1;
        }
        assert!(counts.iter().all(|&c| c == 4 || c == 5));
        assert!(kfold_assignment(3, 5, 0).is_err());
        let folds = fold_indices(&a, 5);
        assert!(folds.iter().all(|(tr, ho)| tr.len() + ho.len() == 23));
    }
}
