//! Run configuration: one JSON document per run, with a few top-level
//! scalars that command-line flags may override.

use std::fs;
use std::path::{Path, PathBuf};

use ivkp::akp::TableSet;
use ivkp::sim::{standard_designs, DesignName, DgpSpec, SimulationPlan, TestKind};
use ivkp::{ArArConfig, CvMode, SelectionConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Environment variable naming a directory of extra critical value tables.
pub const TABLE_DIR_ENV: &str = "IVKP_CV_TABLE_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnRoles {
    pub outcome: String,
    pub tested: Vec<String>,
    pub untested: Vec<String>,
    pub instruments: Vec<String>,
}

impl ColumnRoles {
    pub fn all(&self) -> Vec<&str> {
        std::iter::once(self.outcome.as_str())
            .chain(self.tested.iter().map(String::as_str))
            .chain(self.untested.iter().map(String::as_str))
            .chain(self.instruments.iter().map(String::as_str))
            .collect()
    }
}

/// A one-dimensional grid of `β₀` values, or explicit points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaGrid {
    Range { start: f64, stop: f64, points: usize },
    Values(Vec<Vec<f64>>),
}

impl BetaGrid {
    pub fn points(&self) -> CliResult<Vec<Vec<f64>>> {
        match self {
            BetaGrid::Values(v) if !v.is_empty() => Ok(v.clone()),
            BetaGrid::Values(_) => Err(CliError::Config("beta grid is empty".into())),
            BetaGrid::Range { start, stop, points } => match points {
                0 => Err(CliError::Config("beta grid needs at least one point".into())),
                1 => Ok(vec![vec![*start]]),
                n => {
                    let step = (stop - start) / (*n - 1) as f64;
                    Ok((0..*n).map(|i| vec![start + step * i as f64]).collect())
                }
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    pub columns: ColumnRoles,
    #[serde(default)]
    pub beta0: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_test")]
    pub test: TestKind,
    /// Critical value choice for the `akp` test; the combined test uses
    /// `selection.cv_mode`.
    #[serde(default)]
    pub akp_cv_mode: CvMode,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub arar: ArArConfig,
    #[serde(default)]
    pub cv_table_dir: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Seeds the AR/AR perturbation matrix.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub beta_grid: Option<BetaGrid>,
}

fn default_alpha() -> f64 {
    0.05
}

fn default_test() -> TestKind {
    TestKind::Msakp1
}

/// Either a named benchmark design or a fully specified one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DgpInput {
    Standard {
        design: DesignName,
        k: usize,
        n: usize,
        pi_w: f64,
        pi_y: f64,
        #[serde(default)]
        rho: f64,
        #[serde(default)]
        beta_true: Option<Vec<f64>>,
    },
    Full(DgpSpec),
}

impl DgpInput {
    pub fn build(&self) -> CliResult<DgpSpec> {
        match self {
            DgpInput::Full(spec) => Ok(spec.clone()),
            DgpInput::Standard { design, k, n, pi_w, pi_y, rho, beta_true } => {
                let mut spec = standard_designs(*design, *k, *n, *pi_w, *pi_y, *rho)
                    .map_err(|e| CliError::Config(format!("dgp: {e}")))?;
                if let Some(b) = beta_true {
                    spec.beta_true = b.clone();
                }
                Ok(spec)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub dgp: DgpInput,
    pub beta0_grid: Vec<Vec<f64>>,
    pub reps: usize,
    pub seed: u64,
    pub tests: Vec<TestKind>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub akp_cv_mode: CvMode,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub arar: ArArConfig,
    #[serde(default = "default_true")]
    pub center_at_true_gamma: bool,
    #[serde(default)]
    pub cv_table_dir: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_true() -> bool {
    true
}

impl SimulateConfig {
    pub fn plan(&self) -> CliResult<SimulationPlan> {
        let mut plan = SimulationPlan::new(
            self.dgp.build()?,
            self.beta0_grid.clone(),
            self.reps,
            self.seed,
            self.tests.clone(),
        );
        plan.alpha = self.alpha;
        plan.akp_cv_mode = self.akp_cv_mode;
        plan.selection = self.selection.clone();
        plan.arar = self.arar.clone();
        plan.center_at_true_gamma = self.center_at_true_gamma;
        Ok(plan)
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// SHA-256 of the canonical JSON form of a (possibly overridden) config.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let canonical = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&canonical))
}

/// Embedded tables plus those found in the flag, environment or config
/// directory, in that order of precedence.
pub fn load_tables(flag: Option<&Path>, config: Option<&Path>) -> CliResult<(TableSet, Option<PathBuf>)> {
    let env = std::env::var_os(TABLE_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    let dir = flag.map(Path::to_path_buf).or(env).or_else(|| config.map(Path::to_path_buf));
    let mut tables = TableSet::embedded();
    if let Some(d) = &dir {
        tables.load_dir(d)?;
    }
    Ok((tables, dir))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_grid_forms() {
        let r: BetaGrid = serde_json::from_str(r#"{"start": -1, "stop": 1, "points": 5}"#).unwrap();
        assert_eq!(r.points().unwrap(), vec![vec![-1.0], vec![-0.5], vec![0.0], vec![0.5], vec![1.0]]);
        let v: BetaGrid = serde_json::from_str("[[0.5], [1.5]]").unwrap();
        assert_eq!(v.points().unwrap().len(), 2);
        let one = BetaGrid::Range { start: 2.0, stop: 3.0, points: 1 };
        assert_eq!(one.points().unwrap(), vec![vec![2.0]]);
        assert!(BetaGrid::Values(vec![]).points().is_err());
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let c: RunConfig = serde_json::from_str(
            r#"{"input": "d.csv", "columns": {"outcome": "y", "tested": ["x"], "untested": ["w"],
                "instruments": ["z1", "z2"]}, "beta0": [0]}"#,
        )
        .unwrap();
        assert_eq!(c.alpha, 0.05);
        assert_eq!(c.test, TestKind::Msakp1);
        assert_eq!(c.selection, SelectionConfig::default());
        assert!(serde_json::from_str::<RunConfig>(r#"{"input": "d.csv", "bogus": 1}"#).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ArArConfig::default();
        let b = ArArConfig { zeta_seed: 1, ..ArArConfig::default() };
        assert_eq!(config_hash(&a), config_hash(&a.clone()));
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn named_design_input() {
        let d: DgpInput =
            serde_json::from_str(r#"{"design": "kp", "k": 2, "n": 250, "pi_w": 4, "pi_y": 4}"#).unwrap();
        let spec = d.build().unwrap();
        assert_eq!((spec.k, spec.n), (2, 250));
        let bad: DgpInput =
            serde_json::from_str(r#"{"design": "rho-transition", "k": 3, "n": 250, "pi_w": 4, "pi_y": 4}"#).unwrap();
        assert!(matches!(bad.build(), Err(CliError::Config(_))));
    }
}
