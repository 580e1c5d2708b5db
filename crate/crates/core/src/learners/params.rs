use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Logistic,
    Squared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtParams {
    pub learning_rate: f64,
    pub max_depth: usize,
    pub n_rounds: usize,
    pub l1_alpha: f64,
    pub l2_lambda: f64,
    pub min_samples_leaf: usize,
    pub subsample: f64,
    pub early_stopping_rounds: Option<usize>,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_depth: 7,
            n_rounds: 700,
            l1_alpha: 0.1,
            l2_lambda: 1.0,
            min_samples_leaf: 5,
            subsample: 1.0,
            early_stopping_rounds: None,
            seed: 0,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid(format!("{what} out of range in {self:?}")));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate");
        }
        if self.max_depth == 0 {
            return bad("max_depth");
        }
        if !(self.l1_alpha.is_finite() && self.l1_alpha >= 0.0) {
            return bad("l1_alpha");
        }
        if self.l2_lambda.is_nan() || self.l2_lambda < 0.0 {
            return bad("l2_lambda");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample");
        }
        if self.early_stopping_rounds == Some(0) {
            return bad("early_stopping_rounds");
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}
