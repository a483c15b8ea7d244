//! Seeded Monte Carlo designs and a parallel rejection-rate harness.
//!
//! Replication `r` of a plan with seed `s` draws from ChaCha8 seeded with
//! `s` on stream `r`, so every replication has its own stream and results
//! do not depend on scheduling or the number of workers.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::akp::{ar_akp_test, CvMode, TableSet};
use crate::arar::{ar_ar_test, ArArConfig, GridCenter};
use crate::error::{Error, Result};
use crate::linalg::{sym_sqrt, SymMatrix};
use crate::model::{IvDataset, NullProblem};
use crate::selection::{ms_akp_test, Branch, SelectionConfig};

/// Name of the generator recorded in reports.
pub const GENERATOR: &str = "chacha8, seed = plan seed, stream = replication index";

const PD_REDRAW_CAP: usize = 1000;

/// Row-major matrices keep the JSON form readable.
pub type Rows = Vec<Vec<f64>>;

/// Linear IV data generating process with scale-heteroskedastic errors:
/// `ε_i = (α_ε + ‖Q_ε Z̄_i‖) u_i`, `V_i = (α_V + ‖Q_V Z̄_i‖) v_i` with
/// `(u_i, v_{Y,i}, v_{W,i}) ~ N(0, Σ)` and `Z̄_i ~ N(0, I_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub n: usize,
    pub k: usize,
    pub m_y: usize,
    pub m_w: usize,
    pub gamma: Vec<f64>,
    pub pi_w: Rows,
    pub pi_y: Rows,
    pub alpha_eps: f64,
    pub alpha_v: f64,
    pub q_eps: Rows,
    pub q_v: Rows,
    pub sigma: Rows,
    pub beta_true: Vec<f64>,
}

fn to_matrix(name: &str, rows: &Rows, r: usize, c: usize) -> Result<DMatrix<f64>> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(Error::InvalidArgument(format!("{name} must be {r}x{c}")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn to_rows(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// A `DgpSpec` in matrix form, checked once.
#[derive(Debug, Clone)]
struct Design {
    n: usize,
    k: usize,
    m_y: usize,
    m_w: usize,
    gamma: DVector<f64>,
    beta: DVector<f64>,
    pi_w: DMatrix<f64>,
    pi_y: DMatrix<f64>,
    alpha_eps: f64,
    alpha_v: f64,
    q_eps: DMatrix<f64>,
    q_v: DMatrix<f64>,
    sigma_root: DMatrix<f64>,
}

impl DgpSpec {
    fn design(&self) -> Result<Design> {
        let (n, k, m_y, m_w) = (self.n, self.k, self.m_y, self.m_w);
        if k == 0 || m_y == 0 || m_w == 0 || n == 0 {
            return Err(Error::InvalidArgument("n, k, m_Y and m_W must be positive".into()));
        }
        if self.gamma.len() != m_w || self.beta_true.len() != m_y {
            return Err(Error::InvalidArgument("gamma and beta_true lengths must be m_W and m_Y".into()));
        }
        let d = 1 + m_y + m_w;
        let sigma = SymMatrix::new(to_matrix("sigma", &self.sigma, d, d)?)?;
        if !sigma.is_positive_definite() {
            return Err(Error::InvalidArgument("sigma must be positive definite".into()));
        }
        Ok(Design {
            n,
            k,
            m_y,
            m_w,
            gamma: DVector::from_column_slice(&self.gamma),
            beta: DVector::from_column_slice(&self.beta_true),
            pi_w: to_matrix("pi_w", &self.pi_w, k, m_w)?,
            pi_y: to_matrix("pi_y", &self.pi_y, k, m_y)?,
            alpha_eps: self.alpha_eps,
            alpha_v: self.alpha_v,
            q_eps: to_matrix("q_eps", &self.q_eps, k, k)?,
            q_v: to_matrix("q_v", &self.q_v, k, k)?,
            sigma_root: sym_sqrt(&sigma)?.into_matrix(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.design().map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignName {
    /// `α = 0`, `Q = I_k`: Kronecker product covariance.
    Kp,
    /// `α = 1`, `Q = 0`: conditional homoskedasticity.
    Chom,
    /// `k = 4`, `Q_ε = I + ρ B`: moves away from KP as `ρ` grows.
    RhoTransition,
}

/// `(1, …, 1, −1, …, −1)`: `k/2` ones for even `k`, `(1, −1, −1)` for
/// `k = 3` and `⌈k/2⌉` ones for larger odd `k`.
pub fn sign_pattern(k: usize) -> Vec<f64> {
    let ones = if k == 3 { 1 } else { k.div_ceil(2) };
    (0..k).map(|i| if i < ones { 1.0 } else { -1.0 }).collect()
}

/// The 3x3 error covariance `Σ = k⁻¹ [[1, .8, .8], [.8, 1, .3], [.8, .3, 1]]`.
pub fn standard_sigma(k: usize) -> Rows {
    let base = [[1.0, 0.8, 0.8], [0.8, 1.0, 0.3], [0.8, 0.3, 1.0]];
    base.iter().map(|r| r.iter().map(|x| x / k as f64).collect()).collect()
}

const RHO_DIRECTION: [[f64; 4]; 4] = [[10.0, 8.0, 6.0, 4.0], [3.0, 5.0, 9.0, 3.0], [8.0, 6.0, 9.0, 2.0], [4.0, 3.0, 2.0, 1.0]];

/// The benchmark designs with `m_Y = m_W = 1`, `β = 0` and `γ = 0`.
pub fn standard_designs(name: DesignName, k: usize, n: usize, pi_w: f64, pi_y: f64, rho: f64) -> Result<DgpSpec> {
    if k < 2 {
        return Err(Error::InvalidArgument("the benchmark designs need k >= 2".into()));
    }
    let scale = ((n * k) as f64).sqrt();
    let identity = to_rows(&DMatrix::identity(k, k));
    let (alpha, q_eps, q_v) = match name {
        DesignName::Kp => (0.0, identity.clone(), identity),
        DesignName::Chom => (1.0, vec![vec![0.0; k]; k], vec![vec![0.0; k]; k]),
        DesignName::RhoTransition => {
            if k != 4 {
                return Err(Error::InvalidArgument(format!("the rho-transition design needs k = 4, got {k}")));
            }
            let q = DMatrix::identity(4, 4) + DMatrix::from_fn(4, 4, |i, j| rho * RHO_DIRECTION[i][j]);
            (0.0, to_rows(&q), identity)
        }
    };
    Ok(DgpSpec {
        n,
        k,
        m_y: 1,
        m_w: 1,
        gamma: vec![0.0],
        pi_w: vec![vec![pi_w / scale]; k],
        pi_y: sign_pattern(k).into_iter().map(|s| vec![s * pi_y / scale]).collect(),
        alpha_eps: alpha,
        alpha_v: alpha,
        q_eps,
        q_v,
        sigma: standard_sigma(k),
        beta_true: vec![0.0],
    })
}

/// A random heteroskedastic design: `α`'s and entries of `Q_ε`, `Q_V` from
/// `U[0, 10]`, unit-diagonal `Σ` with `U[0, 1]` off-diagonals redrawn until
/// positive definite.
pub fn random_dgp(k: usize, m_w: usize, n: usize, pi_w: f64, pi_y: f64, seed: u64) -> Result<DgpSpec> {
    if k < m_w + 1 || m_w == 0 {
        return Err(Error::InvalidArgument(format!("need k >= m_W + 1 and m_W >= 1, got k={k} m_W={m_w}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha_eps = rng.random::<f64>() * 10.0;
    let alpha_v = rng.random::<f64>() * 10.0;
    let q_eps: Rows = (0..k).map(|_| (0..k).map(|_| rng.random::<f64>() * 10.0).collect()).collect();
    let q_v: Rows = (0..k).map(|_| (0..k).map(|_| rng.random::<f64>() * 10.0).collect()).collect();
    let d = 2 + m_w;
    let mut sigma = None;
    for _ in 0..PD_REDRAW_CAP {
        let mut s = DMatrix::identity(d, d);
        for i in 0..d {
            for j in (i + 1)..d {
                let v = rng.random::<f64>();
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        if SymMatrix::new(s.clone())?.is_positive_definite() {
            sigma = Some(to_rows(&s));
            break;
        }
    }
    let sigma = sigma.ok_or_else(|| {
        Error::Generation(format!("no positive definite covariance within {PD_REDRAW_CAP} draws"))
    })?;
    let scale = ((n * k) as f64).sqrt();
    let pi_w_rows = if m_w == 1 {
        vec![vec![pi_w / scale]; k]
    } else {
        (0..k).map(|i| (0..m_w).map(|s| if i == s { pi_w / scale } else { 0.0 }).collect()).collect()
    };
    Ok(DgpSpec {
        n,
        k,
        m_y: 1,
        m_w,
        gamma: vec![0.0; m_w],
        pi_w: pi_w_rows,
        pi_y: sign_pattern(k).into_iter().map(|s| vec![s * pi_y / scale]).collect(),
        alpha_eps,
        alpha_v,
        q_eps,
        q_v,
        sigma,
        beta_true: vec![0.0],
    })
}

/// The generator for replication `rep` of a plan seeded with `seed`.
pub fn rep_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Draws one sample from the design.
pub fn gen_dataset(spec: &DgpSpec, rng: &mut ChaCha8Rng) -> Result<IvDataset> {
    gen_from_design(&spec.design()?, rng)
}

fn gen_from_design(d: &Design, rng: &mut ChaCha8Rng) -> Result<IvDataset> {
    let (n, k) = (d.n, d.k);
    let dim = 1 + d.m_y + d.m_w;
    let zbar = DMatrix::from_fn(n, k, |_, _| rng.sample(StandardNormal));
    let raw = DMatrix::from_fn(n, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut shocks = raw * &d.sigma_root;
    for i in 0..n {
        let z = zbar.row(i).transpose();
        let s_eps = d.alpha_eps + (&d.q_eps * &z).norm();
        let s_v = d.alpha_v + (&d.q_v * &z).norm();
        shocks[(i, 0)] *= s_eps;
        for j in 1..dim {
            shocks[(i, j)] *= s_v;
        }
    }
    let y_tested = &zbar * &d.pi_y + shocks.columns(1, d.m_y);
    let w = &zbar * &d.pi_w + shocks.columns(1 + d.m_y, d.m_w);
    let y = &y_tested * &d.beta + &w * &d.gamma + shocks.column(0);
    IvDataset::new(y, y_tested, w, zbar)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Akp,
    Arar,
    Msakp1,
}

impl TestKind {
    pub fn name(self) -> &'static str {
        match self {
            TestKind::Akp => "akp",
            TestKind::Arar => "arar",
            TestKind::Msakp1 => "msakp1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationPlan {
    pub dgp: DgpSpec,
    pub beta0_grid: Vec<Vec<f64>>,
    pub reps: usize,
    pub seed: u64,
    pub tests: Vec<TestKind>,
    pub alpha: f64,
    #[serde(default)]
    pub akp_cv_mode: CvMode,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub arar: ArArConfig,
    /// Center the AR/AR grid at the design's `γ` rather than the estimator.
    #[serde(default = "default_true")]
    pub center_at_true_gamma: bool,
}

fn default_true() -> bool {
    true
}

impl SimulationPlan {
    pub fn new(dgp: DgpSpec, beta0_grid: Vec<Vec<f64>>, reps: usize, seed: u64, tests: Vec<TestKind>) -> Self {
        SimulationPlan {
            dgp,
            beta0_grid,
            reps,
            seed,
            tests,
            alpha: 0.05,
            akp_cv_mode: CvMode::Auto,
            selection: SelectionConfig::default(),
            arar: ArArConfig::default(),
            center_at_true_gamma: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dgp.validate().map_err(|e| Error::Config(format!("dgp: {e}")))?;
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.beta0_grid.is_empty() {
            return Err(Error::Config("beta0 grid is empty".into()));
        }
        if self.beta0_grid.iter().any(|b| b.len() != self.dgp.m_y) {
            return Err(Error::Config(format!("every beta0 must have length m_Y = {}", self.dgp.m_y)));
        }
        if self.tests.is_empty() {
            return Err(Error::Config("no tests requested".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.tests.contains(&TestKind::Arar) || self.tests.contains(&TestKind::Msakp1) {
            self.arar.validate(self.alpha)?;
        }
        if self.tests.contains(&TestKind::Msakp1) {
            self.selection.validate(self.alpha)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRow {
    pub test: TestKind,
    pub beta0: Vec<f64>,
    pub rejections: u64,
    pub rejection_rate: f64,
    pub se: f64,
    /// Share of replications in which the combined test took the AKP branch.
    pub branch_akp_frac: Option<f64>,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationReport {
    pub generator: String,
    pub rows: Vec<SimulationRow>,
    /// Wall time per replication; not part of the CSV form.
    pub mean_runtime_secs: f64,
}

impl SimulationReport {
    pub fn row(&self, test: TestKind, beta0: &[f64]) -> Option<&SimulationRow> {
        self.rows.iter().find(|r| r.test == test && r.beta0 == beta0)
    }

    pub fn to_csv_string(&self) -> String {
        let m_y = self.rows.first().map_or(1, |r| r.beta0.len());
        let beta_cols: Vec<String> =
            if m_y == 1 { vec!["beta0".into()] } else { (1..=m_y).map(|j| format!("beta0_{j}")).collect() };
        let mut out = format!("test,{},rejection_rate,se,branch_akp_frac,reps,seed\n", beta_cols.join(","));
        for r in &self.rows {
            let betas: Vec<String> = r.beta0.iter().map(|b| b.to_string()).collect();
            let branch = r.branch_akp_frac.map_or(String::new(), |f| f.to_string());
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.test.name(),
                betas.join(","),
                r.rejection_rate,
                r.se,
                branch,
                r.reps,
                r.seed
            ));
        }
        out
    }
}

/// Per-replication outcome: for each (test, β₀) cell, rejection and branch.
type RepOutcome = Vec<(bool, bool)>;

fn run_rep(plan: &SimulationPlan, design: &Design, tables: &TableSet, rep: usize) -> Result<RepOutcome> {
    let mut rng = rep_rng(plan.seed, rep as u64);
    let data = gen_from_design(design, &mut rng)?;
    let mut arar = plan.arar.clone();
    arar.zeta_seed = rng.random();
    if plan.center_at_true_gamma {
        arar.gamma_grid.center = GridCenter::TrueGamma { gamma: plan.dgp.gamma.clone() };
    }
    let mut out = Vec::with_capacity(plan.tests.len() * plan.beta0_grid.len());
    for &test in &plan.tests {
        for beta0 in &plan.beta0_grid {
            let problem = NullProblem::new(data.clone(), DVector::from_column_slice(beta0), plan.alpha)?;
            let cell = match test {
                TestKind::Akp => (ar_akp_test(&problem, plan.akp_cv_mode, tables)?.reject, false),
                TestKind::Arar => (ar_ar_test(&problem, &arar)?.reject, false),
                TestKind::Msakp1 => {
                    let res = ms_akp_test(&problem, &plan.selection, &arar, tables)?;
                    (res.reject, res.branch == Branch::Akp)
                }
            };
            out.push(cell);
        }
    }
    Ok(out)
}

/// Runs the plan on the global rayon pool, or on a dedicated pool of
/// `workers` threads.
pub fn run_plan(plan: &SimulationPlan, tables: &TableSet, workers: Option<usize>) -> Result<SimulationReport> {
    plan.validate()?;
    let design = plan.dgp.design()?;
    let cells = plan.tests.len() * plan.beta0_grid.len();
    let start = Instant::now();
    let job = || -> Result<(Vec<u64>, Vec<u64>)> {
        (0..plan.reps)
            .into_par_iter()
            .map(|rep| {
                run_rep(plan, &design, tables, rep).map_err(|e| Error::Replication { rep, source: Box::new(e) })
            })
            .try_fold(
                || (vec![0u64; cells], vec![0u64; cells]),
                |(mut rej, mut akp), outcome| {
                    let outcome = outcome?;
                    for (c, (r, a)) in outcome.into_iter().enumerate() {
                        rej[c] += r as u64;
                        akp[c] += a as u64;
                    }
                    Ok((rej, akp))
                },
            )
            .try_reduce(
                || (vec![0u64; cells], vec![0u64; cells]),
                |(mut r1, mut a1), (r2, a2)| {
                    for c in 0..cells {
                        r1[c] += r2[c];
                        a1[c] += a2[c];
                    }
                    Ok((r1, a1))
                },
            )
    };
    let (rejections, akp_counts) = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?
            .install(job)?,
        None => job()?,
    };
    let elapsed = start.elapsed().as_secs_f64();
    let reps = plan.reps as f64;
    let mut rows = Vec::with_capacity(cells);
    let mut c = 0;
    for &test in &plan.tests {
        for beta0 in &plan.beta0_grid {
            let rate = rejections[c] as f64 / reps;
            rows.push(SimulationRow {
                test,
                beta0: beta0.clone(),
                rejections: rejections[c],
                rejection_rate: rate,
                se: (rate * (1.0 - rate) / reps).sqrt(),
                branch_akp_frac: (test == TestKind::Msakp1).then(|| akp_counts[c] as f64 / reps),
                reps: plan.reps,
                seed: plan.seed,
            });
            c += 1;
        }
    }
    Ok(SimulationReport { generator: GENERATOR.into(), rows, mean_runtime_secs: elapsed / reps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn sign_patterns() {
        assert_eq!(sign_pattern(2), vec![1.0, -1.0]);
        assert_eq!(sign_pattern(3), vec![1.0, -1.0, -1.0]);
        assert_eq!(sign_pattern(4), vec![1.0, 1.0, -1.0, -1.0]);
        assert_eq!(sign_pattern(5), vec![1.0, 1.0, 1.0, -1.0, -1.0]);
    }

    #[test]
    fn kp_design_coefficients() {
        let d = standard_designs(DesignName::Kp, 2, 250, 4.0, 4.0, 0.0).unwrap();
        for row in &d.pi_w {
            assert!((row[0] - 4.0 / 500f64.sqrt()).abs() < 1e-15);
            assert!((row[0] - 0.1789).abs() < 1e-4);
        }
        assert_eq!(d.pi_y[1][0], -4.0 / 500f64.sqrt());
        assert_eq!(d.q_eps, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(d.sigma[0][1], 0.4);
    }

    #[test]
    fn chom_and_rho_designs() {
        let c = standard_designs(DesignName::Chom, 3, 250, 40.0, 40.0, 0.0).unwrap();
        assert_eq!((c.alpha_eps, c.alpha_v), (1.0, 1.0));
        assert!(c.q_eps.iter().flatten().all(|&x| x == 0.0));
        assert!(standard_designs(DesignName::RhoTransition, 3, 250, 40.0, 40.0, 0.1).is_err());
        let r0 = standard_designs(DesignName::RhoTransition, 4, 250, 40.0, 40.0, 0.0).unwrap();
        assert_eq!(r0, standard_designs(DesignName::Kp, 4, 250, 40.0, 40.0, 0.0).unwrap());
        let r1 = standard_designs(DesignName::RhoTransition, 4, 250, 40.0, 40.0, 0.1).unwrap();
        assert!((r1.q_eps[0][0] - 2.0).abs() < 1e-15 && (r1.q_eps[1][2] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn identical_seeds_give_identical_data() {
        let spec = standard_designs(DesignName::Kp, 3, 50, 4.0, 4.0, 0.0).unwrap();
        let a = gen_dataset(&spec, &mut rep_rng(9, 3)).unwrap();
        let b = gen_dataset(&spec, &mut rep_rng(9, 3)).unwrap();
        let c = gen_dataset(&spec, &mut rep_rng(9, 4)).unwrap();
        assert_eq!(a.y(), b.y());
        assert_eq!(a.zbar(), b.zbar());
        assert_ne!(a.y(), c.y());
    }

    #[test]
    fn chom_error_variance() {
        // Var(ε_i) = Σ₁₁ = 1/k under CHOM, with β = γ = 0 so y = ε.
        let spec = standard_designs(DesignName::Chom, 2, 100_000, 0.0, 0.0, 0.0).unwrap();
        let d = gen_dataset(&spec, &mut rep_rng(1, 0)).unwrap();
        let n = d.n() as f64;
        let var = d.y().iter().map(|x| x * x).sum::<f64>() / n;
        let se = 0.5 * (2.0f64 / n).sqrt();
        assert!((var - 0.5).abs() < 3.0 * se, "{var}");
    }

    #[test]
    fn random_dgp_contract() {
        let a = random_dgp(3, 1, 250, 4.0, 4.0, 5).unwrap();
        assert_eq!(a, random_dgp(3, 1, 250, 4.0, 4.0, 5).unwrap());
        assert!(a.validate().is_ok());
        let mut sum = 0.0;
        let draws = 10_000;
        for seed in 0..draws {
            sum += random_dgp(2, 1, 250, 4.0, 4.0, seed).unwrap().alpha_eps;
        }
        let mean = sum / draws as f64;
        let se = 10.0 / 12f64.sqrt() / (draws as f64).sqrt();
        assert!((mean - 5.0).abs() < 3.0 * se, "{mean}");
        let two = random_dgp(4, 2, 250, 2.0, 40.0, 1).unwrap();
        assert_eq!(two.sigma.len(), 4);
        assert_eq!(two.pi_w[1], vec![0.0, 2.0 / 1000f64.sqrt()]);
        assert!(random_dgp(2, 2, 250, 2.0, 2.0, 1).is_err());
    }

    #[test]
    fn streams_do_not_collide() {
        // 1000 streams x 1000 draws: all 10^6 values distinct.
        let mut seen = HashSet::with_capacity(1_000_000);
        for rep in 0..1000u64 {
            let mut rng = rep_rng(42, rep);
            for _ in 0..1000 {
                assert!(seen.insert(rng.random::<u64>()));
            }
        }
    }

    fn smoke_plan(reps: usize) -> SimulationPlan {
        let spec = standard_designs(DesignName::Kp, 3, 60, 4.0, 4.0, 0.0).unwrap();
        let mut plan = SimulationPlan::new(
            spec,
            vec![vec![0.0], vec![1.0]],
            reps,
            11,
            vec![TestKind::Akp, TestKind::Arar, TestKind::Msakp1],
        );
        plan.arar.gamma_grid.points_per_dim = 20;
        plan
    }

    #[test]
    fn one_rep_smoke_run() {
        let mut plan = smoke_plan(1);
        plan.beta0_grid.truncate(1);
        plan.tests.truncate(1);
        let report = run_plan(&plan, &TableSet::embedded(), Some(1)).unwrap();
        assert_eq!(report.rows.len(), 1);
        let csv = report.to_csv_string();
        assert!(csv.starts_with("test,beta0,rejection_rate,se,branch_akp_frac,reps,seed\n"));
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn report_is_independent_of_worker_count() {
        let plan = smoke_plan(40);
        let tables = TableSet::embedded();
        let a = run_plan(&plan, &tables, Some(1)).unwrap();
        let b = run_plan(&plan, &tables, Some(4)).unwrap();
        let c = run_plan(&plan, &tables, None).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.to_csv_string(), c.to_csv_string());
        for r in &a.rows {
            assert!((0.0..=1.0).contains(&r.rejection_rate));
            assert_eq!(r.se, (r.rejection_rate * (1.0 - r.rejection_rate) / 40.0).sqrt());
            assert_eq!(r.branch_akp_frac.is_some(), r.test == TestKind::Msakp1);
        }
    }

    #[test]
    fn plan_validation() {
        let mut plan = smoke_plan(0);
        assert!(matches!(plan.validate(), Err(Error::Config(_))));
        plan.reps = 1;
        plan.beta0_grid = vec![vec![0.0, 1.0]];
        assert!(plan.validate().is_err());
        plan.beta0_grid.clear();
        assert!(plan.validate().is_err());
    }
}
