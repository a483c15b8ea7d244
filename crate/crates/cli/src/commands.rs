//! The four commands. Each returns its report; writing is left to the caller.

use std::path::{Path, PathBuf};

use ivkp::akp::{ar_akp_test, CvMode, CvSource, TableSet};
use ivkp::model::build_scores;
use ivkp::selection::{kp_distance, resolve_constant, threshold_cn};
use ivkp::sim::{run_plan, SimulationReport, TestKind};
use ivkp::{ar_ar_test, ms_akp_test, Branch, IvDataset, NullProblem};
use nalgebra::DVector;

use crate::config::{config_hash, load_tables, RunConfig, SimulateConfig};
use crate::error::{CliError, CliResult};
use crate::ingest::ingest_csv;
use crate::report::{intervals, AkpSummary, ArArSummary, ConfidenceSet, KpCheck, Report, SelectionSummary, TestOutcome};

/// Flag values that replace top-level config scalars.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub test: Option<TestKind>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, c: &mut RunConfig) {
        if let Some(v) = &self.input {
            c.input = v.clone();
        }
        if let Some(v) = self.alpha {
            c.alpha = v;
        }
        if let Some(v) = self.test {
            c.test = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = &self.output {
            c.output = Some(v.clone());
        }
    }
}

const GAP_WARNING: &str = "the two leading singular values of the rearranged covariance are nearly tied; \
                           the Kronecker factors are not well determined";

fn fallback_warning(alpha: f64, df: usize) -> String {
    format!("no conditional critical value table for alpha={alpha} df={df}; used the chi-square critical value")
}

struct Prepared {
    config: RunConfig,
    data: IvDataset,
    tables: TableSet,
    report: Report,
}

fn prepare(command: &str, config: RunConfig, table_dir: Option<&Path>) -> CliResult<Prepared> {
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(CliError::Config(format!("alpha must lie in (0, 1), got {}", config.alpha)));
    }
    let (tables, _) = load_tables(table_dir, config.cv_table_dir.as_deref())?;
    let data = ingest_csv(&config.input, &config.columns)?;
    let report = Report::new(command, config_hash(&config));
    Ok(Prepared { config, data, tables, report })
}

fn check_beta0(beta0: &[f64], data: &IvDataset) -> CliResult<DVector<f64>> {
    if beta0.len() != data.m_y() {
        return Err(CliError::Config(format!(
            "beta0 has length {} but {} tested regressor(s) are configured",
            beta0.len(),
            data.m_y()
        )));
    }
    Ok(DVector::from_column_slice(beta0))
}

fn run_one(p: &mut Prepared, beta0: &[f64]) -> CliResult<TestOutcome> {
    let cfg = &p.config;
    let problem = NullProblem::new(p.data.clone(), check_beta0(beta0, &p.data)?, cfg.alpha)?;
    let mut arar = cfg.arar.clone();
    arar.zeta_seed = cfg.seed;
    let df = p.data.k() - p.data.m_w();
    let mut outcome =
        TestOutcome { test: cfg.test, beta0: beta0.to_vec(), reject: false, akp: None, arar: None, selection: None };
    match cfg.test {
        TestKind::Akp => {
            let r = ar_akp_test(&problem, cfg.akp_cv_mode, &p.tables)?;
            if r.kp.ambiguous_top_pair {
                p.report.warn(GAP_WARNING.into());
            }
            if cfg.akp_cv_mode == CvMode::Auto && r.cv_source == CvSource::Chi2Fallback {
                p.report.warn(fallback_warning(cfg.alpha, df));
            }
            outcome.reject = r.reject;
            outcome.akp = Some(AkpSummary::from(&r));
        }
        TestKind::Arar => {
            let r = ar_ar_test(&problem, &arar)?;
            outcome.reject = r.reject;
            outcome.arar = Some(ArArSummary::new(&r, cfg.alpha));
        }
        TestKind::Msakp1 => {
            let r = ms_akp_test(&problem, &cfg.selection, &arar, &p.tables)?;
            outcome.reject = r.reject;
            outcome.selection = Some(SelectionSummary { k_stat: r.k_stat, threshold: r.threshold, branch: r.branch });
            if let Some(a) = &r.akp_result {
                if a.kp.ambiguous_top_pair {
                    p.report.warn(GAP_WARNING.into());
                }
                if cfg.selection.cv_mode == CvMode::Auto && a.cv_source == CvSource::Chi2Fallback {
                    p.report.warn(fallback_warning(cfg.alpha, df));
                }
                outcome.akp = Some(AkpSummary::from(a));
            }
            if let Some(a) = &r.robust_result {
                outcome.arar = Some(ArArSummary::new(a, cfg.alpha - cfg.selection.delta));
            }
        }
    }
    Ok(outcome)
}

/// `table_dir` is a critical value table directory that takes precedence
/// over the environment and the config.
pub fn cmd_test(config: RunConfig, table_dir: Option<&Path>) -> CliResult<Report> {
    let mut p = prepare("test", config, table_dir)?;
    let beta0 = p.config.beta0.clone();
    let outcome = run_one(&mut p, &beta0)?;
    p.report.results.push(outcome);
    Ok(p.report)
}

pub fn cmd_invert(config: RunConfig, table_dir: Option<&Path>) -> CliResult<Report> {
    let grid = config
        .beta_grid
        .as_ref()
        .ok_or_else(|| CliError::Config("invert needs a beta_grid".into()))?
        .points()?;
    let mut p = prepare("invert", config, table_dir)?;
    let mut accepted_flags = Vec::with_capacity(grid.len());
    for beta0 in &grid {
        let outcome = run_one(&mut p, beta0)?;
        accepted_flags.push(!outcome.reject);
        p.report.results.push(outcome);
    }
    let accepted: Vec<Vec<f64>> =
        grid.iter().zip(&accepted_flags).filter(|(_, &a)| a).map(|(g, _)| g.clone()).collect();
    p.report.confidence_set = Some(ConfidenceSet {
        empty: accepted.is_empty(),
        intervals: intervals(&grid, &accepted_flags),
        accepted,
        grid_size: grid.len(),
    });
    Ok(p.report)
}

pub fn cmd_kpcheck(config: RunConfig, table_dir: Option<&Path>) -> CliResult<Report> {
    let mut p = prepare("kpcheck", config, table_dir)?;
    let beta0 = check_beta0(&p.config.beta0, &p.data)?;
    let problem = NullProblem::new(p.data.clone(), beta0, p.config.alpha)?;
    let scores = build_scores(&problem)?;
    let (n, k, m_w) = (p.data.n(), p.data.k(), p.data.m_w());
    let c = resolve_constant(k, m_w, p.config.selection.c_constant)?;
    let threshold = threshold_cn(n, k, m_w, p.config.selection.c_constant)?;
    let dist = kp_distance(&scores)?;
    if dist.kp.ambiguous_top_pair {
        p.report.warn(GAP_WARNING.into());
    }
    p.report.kpcheck = Some(KpCheck::new(dist.k_stat, threshold, c, &dist.kp));
    Ok(p.report)
}

pub fn cmd_simulate(
    config: &SimulateConfig,
    table_dir: Option<&Path>,
    workers: Option<usize>,
) -> CliResult<SimulationReport> {
    let plan = config.plan()?;
    let (tables, _) = load_tables(table_dir, config.cv_table_dir.as_deref())?;
    Ok(run_plan(&plan, &tables, workers.or(config.workers))?)
}

/// One line describing the report.
pub fn summary(report: &Report) -> String {
    if let Some(kp) = &report.kpcheck {
        return format!(
            "K_n = {:.4}, c_n = {:.4}: {} branch",
            kp.k_stat,
            kp.threshold,
            branch_name(kp.verdict)
        );
    }
    if let Some(cs) = &report.confidence_set {
        if cs.empty {
            return format!("confidence set is empty ({} grid points rejected)", cs.grid_size);
        }
        let parts: Vec<String> = cs.intervals.iter().map(|[a, b]| format!("[{a}, {b}]")).collect();
        return format!(
            "{} of {} grid points accepted{}",
            cs.accepted.len(),
            cs.grid_size,
            if parts.is_empty() { String::new() } else { format!(": {}", parts.join(" U ")) }
        );
    }
    let Some(r) = report.results.first() else {
        return "no results".into();
    };
    let decision = if r.reject { "reject" } else { "do not reject" };
    let branch = r.selection.as_ref().map_or(String::new(), |s| format!(", branch {}", branch_name(s.branch)));
    if let Some(a) = &r.akp {
        format!(
            "{}: statistic {:.4}, critical value {:.4}: {decision}{branch}",
            r.test.name(),
            a.statistic,
            a.critical_value
        )
    } else if let Some(a) = &r.arar {
        format!("{}: worst margin {:.4}: {decision}{branch}", r.test.name(), a.worst_margin)
    } else {
        format!("{}: {decision}{branch}", r.test.name())
    }
}

fn branch_name(b: Branch) -> &'static str {
    match b {
        Branch::Akp => "akp",
        Branch::Robust => "robust",
    }
}
