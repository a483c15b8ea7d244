//! Versioned JSON reports.

use ivkp::akp::{AkpResult, CvSource};
use ivkp::arar::ArArResult;
use ivkp::linalg::KpFactorization;
use ivkp::sim::TestKind;
use ivkp::Branch;
use serde::{Deserialize, Serialize};

/// Bumped whenever a field is renamed, removed or changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AkpSummary {
    pub statistic: f64,
    pub critical_value: f64,
    pub cv_source: CvSource,
    pub roots: Vec<f64>,
}

impl From<&AkpResult> for AkpSummary {
    fn from(r: &AkpResult) -> Self {
        AkpSummary {
            statistic: r.statistic,
            critical_value: r.critical_value,
            cv_source: r.cv_source,
            roots: r.roots.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArArSummary {
    /// Level the test was run at.
    pub alpha: f64,
    pub worst_margin: f64,
    pub cs1_size: usize,
    /// Per-coordinate `[min, max]` of the first-stage set.
    pub cs1_bounds: Vec<[f64; 2]>,
    pub estimator_gamma: Option<Vec<f64>>,
    pub min_ics: f64,
}

impl ArArSummary {
    pub fn new(r: &ArArResult, alpha: f64) -> Self {
        let m = r.cs1_points.first().map_or(0, Vec::len);
        let cs1_bounds = (0..m)
            .map(|d| {
                let it = r.cs1_points.iter().map(|p| p[d]);
                [it.clone().fold(f64::INFINITY, f64::min), it.fold(f64::NEG_INFINITY, f64::max)]
            })
            .collect();
        ArArSummary {
            alpha,
            worst_margin: r.worst_margin,
            cs1_size: r.cs1_points.len(),
            cs1_bounds,
            estimator_gamma: r.estimator_gamma.clone(),
            min_ics: r.ics_values.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSummary {
    pub k_stat: f64,
    pub threshold: f64,
    pub branch: Branch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestOutcome {
    pub test: TestKind,
    pub beta0: Vec<f64>,
    pub reject: bool,
    pub akp: Option<AkpSummary>,
    pub arar: Option<ArArSummary>,
    pub selection: Option<SelectionSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfidenceSet {
    pub accepted: Vec<Vec<f64>>,
    /// Maximal runs of consecutive accepted grid points (one-dimensional grids only).
    pub intervals: Vec<[f64; 2]>,
    pub empty: bool,
    pub grid_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KpCheck {
    pub k_stat: f64,
    pub threshold: f64,
    pub c_constant: f64,
    pub verdict: Branch,
    pub g: Rows,
    pub h: Rows,
    pub residual: f64,
    pub singular_values: Vec<f64>,
}

impl KpCheck {
    pub fn new(k_stat: f64, threshold: f64, c_constant: f64, kp: &KpFactorization) -> Self {
        KpCheck {
            k_stat,
            threshold,
            c_constant,
            verdict: if k_stat > threshold { Branch::Robust } else { Branch::Akp },
            g: kp.g.to_rows(),
            h: kp.h.to_rows(),
            residual: kp.residual,
            singular_values: kp.sigma.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub schema_version: u32,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub warnings: Vec<String>,
    pub results: Vec<TestOutcome>,
    pub confidence_set: Option<ConfidenceSet>,
    pub kpcheck: Option<KpCheck>,
}

impl Report {
    pub fn new(command: &str, config_hash: String) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash,
            warnings: Vec::new(),
            results: Vec::new(),
            confidence_set: None,
            kpcheck: None,
        }
    }

    pub fn warn(&mut self, message: String) {
        if !self.warnings.contains(&message) {
            self.warnings.push(message);
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Groups consecutive accepted points of a one-dimensional grid.
pub fn intervals(grid: &[Vec<f64>], accepted: &[bool]) -> Vec<[f64; 2]> {
    if grid.iter().any(|g| g.len() != 1) {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut start: Option<f64> = None;
    let mut last = 0.0;
    for (g, &ok) in grid.iter().zip(accepted) {
        match (ok, start) {
            (true, None) => start = Some(g[0]),
            (false, Some(s)) => {
                out.push([s, last]);
                start = None;
            }
            _ => {}
        }
        last = g[0];
    }
    if let Some(s) = start {
        out.push([s, last]);
    }
    out
}
