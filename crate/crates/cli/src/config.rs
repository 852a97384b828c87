//! Experiment configuration files.

use std::path::{Path, PathBuf};

use polymer_core::env::DisorderLaw;
use polymer_core::moments::PhaseOptions;
use polymer_core::sites::AuditOptions;
use polymer_core::TestFunction;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Verify,
    Moments,
    ScanBeta,
    XiRate,
    Sites,
    Localization,
    Qv,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Verify => "verify",
            Experiment::Moments => "moments",
            Experiment::ScanBeta => "scan-beta",
            Experiment::XiRate => "xi-rate",
            Experiment::Sites => "sites",
            Experiment::Localization => "localization",
            Experiment::Qv => "qv",
        }
    }
}

/// Hard caps checked before any work starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Limits {
    /// Largest lattice box `(2R + 1)^d` a single pass may allocate.
    pub max_box_sites: u64,
    pub max_replicas: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_box_sites: 50_000_000,
            max_replicas: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SitesOptions {
    pub q_star: f64,
    pub q_star_source: String,
    pub epsilon: f64,
    pub delta: Option<f64>,
    pub audit: AuditOptions,
}

impl Default for SitesOptions {
    fn default() -> Self {
        Self {
            q_star: 2.0,
            q_star_source: "fixed".into(),
            epsilon: 1.0,
            delta: Some(0.125),
            audit: AuditOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalizationOptions {
    /// Levels `u` of the conditional localization table.
    pub levels: Vec<f64>,
    /// Mass threshold `c`.
    pub threshold: f64,
}

impl Default for LocalizationOptions {
    fn default() -> Self {
        Self {
            levels: vec![2.0, 4.0, 8.0],
            threshold: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QvOptions {
    /// Level width exponent of the level-set profile; `None` skips it.
    pub level_delta: Option<f64>,
}

impl Default for QvOptions {
    fn default() -> Self {
        Self { level_delta: Some(0.25) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyOptions {
    /// Random configurations in the oracle suite.
    pub oracle_cases: u64,
    /// Realizations per configuration in the identity suites.
    pub identity_replicas: u64,
    pub tolerance: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            oracle_cases: 40,
            identity_replicas: 4,
            tolerance: 1e-10,
        }
    }
}

/// One experiment, fully determined by this value and the code version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Must match the subcommand when set.
    pub experiment: Option<Experiment>,
    pub d: usize,
    pub n: i64,
    pub n_grid: Vec<i64>,
    pub beta: f64,
    pub beta_grid: Vec<f64>,
    pub law: DisorderLaw,
    pub test_function: TestFunction,
    pub replicas: usize,
    pub seed: u64,
    /// Worker threads; never changes results.
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub limits: Limits,
    pub phase: PhaseOptions,
    /// Also run the Monte Carlo phase point at every grid value of `scan-beta`.
    pub scan_monte_carlo: bool,
    pub sites: SitesOptions,
    pub localization: LocalizationOptions,
    pub qv: QvOptions,
    pub verify: VerifyOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            d: 3,
            n: 32,
            n_grid: vec![16, 32, 64],
            beta: 0.5,
            beta_grid: (1..=10).map(|i| 0.1 * i as f64).collect(),
            law: DisorderLaw::TwoPoint { p: 0.1, lo: -1.0, hi: 1.0 },
            test_function: TestFunction::default(),
            replicas: 1000,
            seed: 1,
            threads: None,
            out: None,
            limits: Limits::default(),
            phase: PhaseOptions::default(),
            scan_monte_carlo: false,
            sites: SitesOptions::default(),
            localization: LocalizationOptions::default(),
            qv: QvOptions::default(),
            verify: VerifyOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Schema(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
    }

    /// Checks the fields every experiment relies on.
    pub fn validate(&self, kind: Experiment) -> Result<(), CliError> {
        if let Some(k) = self.experiment {
            if k != kind {
                return Err(CliError::Schema(format!(
                    "config is for `{}` but `{}` was requested",
                    k.name(),
                    kind.name()
                )));
            }
        }
        let schema = |m: String| Err(CliError::Schema(m));
        if !(1..=4).contains(&self.d) {
            return schema(format!("d must be in 1..=4, got {}", self.d));
        }
        if self.n < 0 {
            return schema(format!("n must be non-negative, got {}", self.n));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return schema(format!("beta must be finite and non-negative, got {}", self.beta));
        }
        if let Err(e) = self.law.validate() {
            return schema(e.to_string());
        }
        if let Err(e) = self.test_function.validate(self.d) {
            return schema(e.to_string());
        }
        if self.n_grid.iter().any(|&n| n < 1) {
            return schema("n_grid entries must be positive".into());
        }
        if self.beta_grid.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return schema("beta_grid entries must be finite and non-negative".into());
        }
        if self.threads == Some(0) {
            return schema("threads must be positive".into());
        }
        if self.replicas > self.limits.max_replicas {
            return Err(CliError::Capacity(format!(
                "{} replicas exceed the limit {}",
                self.replicas, self.limits.max_replicas
            )));
        }
        Ok(())
    }

    /// Fails with a capacity error when a box of radius `radius` is too large.
    pub fn check_box(&self, radius: i64) -> Result<(), CliError> {
        let side = (2 * radius.max(0) + 1) as u128;
        let sites = side.saturating_pow(self.d as u32);
        if sites > self.limits.max_box_sites as u128 {
            return Err(CliError::Capacity(format!(
                "a box of radius {radius} in d = {} has {sites} sites, limit {}",
                self.d, self.limits.max_box_sites
            )));
        }
        Ok(())
    }

    /// The part of the config that determines outputs: thread count and
    /// output directory are dropped.
    pub fn canonical(&self) -> Self {
        Self {
            threads: None,
            out: None,
            ..self.clone()
        }
    }
}
