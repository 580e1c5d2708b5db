//! Effective run configuration: flags over config file over `ZICP_SEED` over defaults.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use zicp_core::conformal::ConformalMethod;
use zicp_core::data::{Horizon, SplitFractions};
use zicp_core::learners::GbtParams;
use zicp_core::synthetic::CohortSpec;
use zicp_core::two_stage::{default_grid, CutoffMode, GammaFormula};

use crate::args::RunFlags;
use crate::failure::Failure;

/// Values accepted from a JSON config file. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub methods: Option<Vec<ConformalMethod>>,
    pub grid: Option<Vec<f64>>,
    pub horizons: Option<Vec<Horizon>>,
    pub gamma_formula: Option<GammaFormula>,
    pub cutoff_mode: Option<CutoffMode>,
    pub cutoff: Option<f64>,
    pub classifier: Option<GbtParams>,
    pub regressor: Option<GbtParams>,
    pub folds: Option<usize>,
    pub bootstraps: Option<usize>,
    pub fractions: Option<SplitFractions>,
    pub grouped: Option<bool>,
    pub n_patients: Option<usize>,
    pub n_runs: Option<usize>,
    pub importance_repeats: Option<usize>,
    pub cohort: Option<CohortSpec>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::usage(format!("bad config {}: {e}", path.display())))
    }
}

/// The configuration a command actually ran with. Echoed into every output
/// header; paths and `--jobs` are deliberately absent so they never change the hash.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub alpha: f64,
    pub methods: Vec<ConformalMethod>,
    pub grid: Vec<f64>,
    pub horizons: Vec<Horizon>,
    pub gamma_formula: GammaFormula,
    pub cutoff_mode: CutoffMode,
    pub cutoff: f64,
    pub classifier: GbtParams,
    pub regressor: GbtParams,
    pub folds: usize,
    pub bootstraps: usize,
    pub fractions: SplitFractions,
    pub grouped: bool,
    pub n_runs: usize,
    pub importance_repeats: usize,
    /// Synthetic cohort used when no samples file is given.
    pub cohort: Option<CohortSpec>,
    /// SHA-256 (first 16 hex digits) of the input data file, if any.
    pub input_sha256: Option<String>,
}

pub fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var("ZICP_SEED") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| {
            Failure::usage(format!("ZICP_SEED must be an unsigned integer, got `{v}`"))
        }),
        Err(_) => Ok(None),
    }
}

/// Learner parameters after applying the size flags to a base.
fn learner(base: GbtParams, flags: &RunFlags) -> GbtParams {
    GbtParams {
        n_rounds: flags.rounds.unwrap_or(base.n_rounds),
        max_depth: flags.depth.unwrap_or(base.max_depth),
        learning_rate: flags.learning_rate.unwrap_or(base.learning_rate),
        ..base
    }
}

pub fn hash16(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

impl RunConfig {
    /// Resolves flags, file, environment and defaults.
    /// `uses_cohort` is false for commands that never fall back to synthetic
    /// data; `default_horizons` applies when neither flags nor file name any.
    pub fn resolve(
        command: &str,
        flags: &RunFlags,
        file: &FileConfig,
        uses_cohort: bool,
        default_horizons: &[Horizon],
    ) -> Result<Self, Failure> {
        let seed = match flags.seed.or(file.seed) {
            Some(s) => Some(s),
            None => env_seed()?,
        };
        let alpha = flags.alpha.or(file.alpha).unwrap_or(0.2);
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Failure::usage(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        let methods = flags
            .method
            .clone()
            .or_else(|| file.methods.clone())
            .unwrap_or_else(|| vec![ConformalMethod::Cvplus, ConformalMethod::Jab]);
        if methods.is_empty() {
            return Err(Failure::usage("at least one method is required"));
        }
        let grid = match &flags.grid {
            Some(g) => {
                zicp_core::two_stage::parse_grid(g).map_err(|e| Failure::usage(e.to_string()))?
            }
            None => file.grid.clone().unwrap_or_else(default_grid),
        };
        if grid.is_empty() || grid.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(Failure::usage("cutoff grid values must lie in [0, 1)"));
        }
        let horizons = flags
            .horizons
            .clone()
            .or_else(|| file.horizons.clone())
            .unwrap_or_else(|| default_horizons.to_vec());
        if horizons.is_empty() {
            return Err(Failure::usage("at least one horizon is required"));
        }
        let cutoff = flags.cutoff.or(file.cutoff).unwrap_or(0.5);
        if !(0.0..1.0).contains(&cutoff) {
            return Err(Failure::usage(format!(
                "cutoff must lie in [0, 1), got {cutoff}"
            )));
        }
        let classifier = learner(file.classifier.unwrap_or_default(), flags);
        let regressor = learner(file.regressor.unwrap_or_default(), flags);
        for p in [&classifier, &regressor] {
            p.validate().map_err(|e| Failure::usage(e.to_string()))?;
        }
        let fractions = file.fractions.unwrap_or_default();
        fractions
            .validate()
            .map_err(|e| Failure::usage(e.to_string()))?;

        let mut cohort = file.cohort.clone();
        if let Some(path) = &flags.spec {
            cohort = Some(
                CohortSpec::load(path)
                    .map_err(|e| Failure::data(format!("bad cohort spec: {e}")))?,
            );
        }
        let synthetic = uses_cohort && flags.data.is_none();
        let cohort = if synthetic {
            let mut c = cohort.unwrap_or_else(CohortSpec::bundled);
            if let Some(n) = flags.n_patients.or(file.n_patients) {
                c.n_patients = n;
            }
            if let Some(s) = seed {
                c.seed = s;
            }
            c.validate()
                .map_err(|e| Failure::usage(format!("bad cohort spec: {e}")))?;
            Some(c)
        } else {
            None
        };
        let seed = seed.or(cohort.as_ref().map(|c| c.seed)).unwrap_or(0);
        let input_sha256 = match &flags.data {
            Some(p) => Some(hash16(&fs::read(p).map_err(|e| {
                Failure::data(format!("cannot read {}: {e}", p.display()))
            })?)),
            None => None,
        };
        Ok(Self {
            command: command.to_string(),
            seed,
            alpha,
            methods,
            grid,
            horizons,
            gamma_formula: flags
                .gamma_formula
                .or(file.gamma_formula)
                .unwrap_or_default(),
            cutoff_mode: flags.cutoff_mode.or(file.cutoff_mode).unwrap_or_default(),
            cutoff,
            classifier,
            regressor,
            folds: flags.folds.or(file.folds).unwrap_or(5),
            bootstraps: flags.bootstraps.or(file.bootstraps).unwrap_or(50),
            fractions,
            grouped: !flags.ungrouped && file.grouped.unwrap_or(true),
            n_runs: flags.n_runs.or(file.n_runs).unwrap_or(15),
            importance_repeats: flags
                .importance_repeats
                .or(file.importance_repeats)
                .unwrap_or(5),
            cohort,
            input_sha256,
        })
    }

    pub fn json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hash16(self.json().as_bytes())
    }

    /// Comment lines without the leading `# `.
    pub fn header_lines(&self) -> Vec<String> {
        vec![
            format!(
                "zicp {} seed={} config={}",
                env!("CARGO_PKG_VERSION"),
                self.seed,
                self.hash()
            ),
            format!("config={}", self.json()),
        ]
    }

    pub fn csv_header(&self) -> String {
        self.header_lines()
            .iter()
            .map(|l| format!("# {l}\n"))
            .collect()
    }

    pub fn xml_header(&self) -> String {
        format!(
            "<!-- zicp {} seed={} config={} -->\n",
            env!("CARGO_PKG_VERSION"),
            self.seed,
            self.hash()
        )
    }
}
