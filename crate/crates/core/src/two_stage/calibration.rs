//! Cutoff selection, abstention purity and the adjusted quantile level.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::is_zero_target;
use crate::error::{Error, Result};
use crate::ledd::{interpolated_quantile, sorted_copy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CutoffMode {
    /// The cutoff is the r-quantile of calibration probabilities.
    QuantileR,
    /// The cutoff is r itself, read as a probability threshold.
    #[default]
    Absolute,
}

impl CutoffMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CutoffMode::QuantileR => "quantile_r",
            CutoffMode::Absolute => "absolute",
        }
    }
}

impl fmt::Display for CutoffMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CutoffMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "quantile_r" | "quantile" => Ok(CutoffMode::QuantileR),
            "absolute" => Ok(CutoffMode::Absolute),
            _ => Err(Error::UnknownToken {
                kind: "cutoff mode",
                token: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GammaFormula {
    /// `clamp((1 − β̂ − r) / (1 − r))`, with no dependence on alpha.
    #[default]
    PaperEq6,
    /// `clamp((1 − α − r·β̂) / (1 − r))`, from coverage = r·β̂ + (1 − r)·γ.
    CoverageDecomposition,
}

impl GammaFormula {
    pub fn as_str(self) -> &'static str {
        match self {
            GammaFormula::PaperEq6 => "paper_eq6",
            GammaFormula::CoverageDecomposition => "coverage_decomposition",
        }
    }
}

impl fmt::Display for GammaFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GammaFormula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "paper_eq6" | "eq6" => Ok(GammaFormula::PaperEq6),
            "coverage_decomposition" | "decomposition" => Ok(GammaFormula::CoverageDecomposition),
            _ => Err(Error::UnknownToken {
                kind: "gamma formula",
                token: s.to_string(),
            }),
        }
    }
}

/// Estimated purity of the abstention set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaEstimate {
    Value(f64),
    /// No validation point fell at or below the cutoff.
    NoAbstentions,
}

impl BetaEstimate {
    pub fn value(self) -> Option<f64> {
        match self {
            BetaEstimate::Value(v) => Some(v),
            BetaEstimate::NoAbstentions => None,
        }
    }
}

/// Resolves the probability cutoff below which the zero singleton is issued.
pub fn select_cutoff(probs_cal1: &[f64], r: f64, mode: CutoffMode) -> Result<f64> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::invalid(format!(
            "cutoff r must lie in [0, 1), got {r}"
        )));
    }
    match mode {
        CutoffMode::Absolute => Ok(r),
        CutoffMode::QuantileR => {
            if probs_cal1.is_empty() {
                return Err(Error::Empty("calibration probabilities"));
            }
            Ok(interpolated_quantile(&sorted_copy(probs_cal1), r))
        }
    }
}

/// Fraction of validation points at or below the cutoff whose target is zero.
pub fn estimate_beta(probs_val: &[f64], targets_val: &[f64], alpha_r: f64) -> Result<BetaEstimate> {
    if probs_val.len() != targets_val.len() {
        return Err(Error::LengthMismatch {
            left: probs_val.len(),
            right: targets_val.len(),
        });
    }
    let mut abstained = 0usize;
    let mut zero = 0usize;
    for (&p, &y) in probs_val.iter().zip(targets_val) {
        if p <= alpha_r {
            abstained += 1;
            if is_zero_target(y) {
                zero += 1;
            }
        }
    }
    Ok(if abstained == 0 {
        BetaEstimate::NoAbstentions
    } else {
        BetaEstimate::Value(zero as f64 / abstained as f64)
    })
}

/// Quantile level for the regression intervals given the abstention purity.
pub fn compute_gamma(beta: BetaEstimate, r: f64, alpha: f64, formula: GammaFormula) -> Result<f64> {
    if r >= 1.0 {
        return Err(Error::DegenerateCutoff);
    }
    if !(0.0..1.0).contains(&r) {
        return Err(Error::invalid(format!("r must lie in [0, 1), got {r}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let beta = match beta {
        BetaEstimate::NoAbstentions => return Ok(1.0 - alpha),
        BetaEstimate::Value(b) if (0.0..=1.0).contains(&b) => b,
        BetaEstimate::Value(b) => {
            return Err(Error::invalid(format!("beta must lie in [0, 1], got {b}")))
        }
    };
    let raw = match formula {
        GammaFormula::PaperEq6 => (1.0 - beta - r) / (1.0 - r),
        GammaFormula::CoverageDecomposition => (1.0 - alpha - r * beta) / (1.0 - r),
    };
    Ok(raw.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_examples() {
        assert_eq!(
            select_cutoff(&[0.1, 0.5, 0.9], 0.0, CutoffMode::QuantileR).unwrap(),
            0.1
        );
        assert_eq!(
            select_cutoff(&[0.2, 0.4, 0.6, 0.8], 0.5, CutoffMode::QuantileR).unwrap(),
            0.5
        );
        assert_eq!(
            select_cutoff(&[], 0.95, CutoffMode::Absolute).unwrap(),
            0.95
        );
        assert!(select_cutoff(&[], 0.5, CutoffMode::QuantileR).is_err());
        assert!(select_cutoff(&[0.5], 1.0, CutoffMode::Absolute).is_err());
    }

    #[test]
    fn beta_examples() {
        assert_eq!(
            estimate_beta(&[0.1, 0.2, 0.9], &[0.0, 0.5, 0.0], 0.5).unwrap(),
            BetaEstimate::Value(0.5)
        );
        assert_eq!(
            estimate_beta(&[0.6, 0.9], &[0.0, 0.0], 0.5).unwrap(),
            BetaEstimate::NoAbstentions
        );
        assert_eq!(
            estimate_beta(&[0.1, 0.3], &[0.0, 0.0], 0.5).unwrap(),
            BetaEstimate::Value(1.0)
        );
        assert_eq!(
            estimate_beta(&[0.5], &[0.0], 0.5).unwrap(),
            BetaEstimate::Value(1.0)
        );
        assert!(estimate_beta(&[0.1], &[], 0.5).is_err());
    }

    #[test]
    fn gamma_examples() {
        let eq6 = GammaFormula::PaperEq6;
        assert_eq!(
            compute_gamma(BetaEstimate::Value(1.0), 0.0, 0.2, eq6).unwrap(),
            0.0
        );
        assert_eq!(
            compute_gamma(BetaEstimate::Value(0.0), 0.0, 0.2, eq6).unwrap(),
            1.0
        );
        assert!(
            (compute_gamma(BetaEstimate::Value(0.3), 0.5, 0.2, eq6).unwrap() - 0.4).abs() < 1e-15
        );
        assert_eq!(
            compute_gamma(BetaEstimate::NoAbstentions, 0.3, 0.2, eq6).unwrap(),
            0.8
        );
        let dec = GammaFormula::CoverageDecomposition;
        // 0.5·0.9 + 0.5·γ = 0.8 → γ = 0.7
        assert!(
            (compute_gamma(BetaEstimate::Value(0.9), 0.5, 0.2, dec).unwrap() - 0.7).abs() < 1e-12
        );
        assert!(matches!(
            compute_gamma(BetaEstimate::Value(0.5), 1.0, 0.2, eq6),
            Err(Error::DegenerateCutoff)
        ));
    }
}
