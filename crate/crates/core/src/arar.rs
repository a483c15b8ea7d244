//! The heteroskedasticity-robust two-step AR/AR test.
//!
//! Step one collects a confidence set for `γ` at level `α₁` from the
//! full-vector robust AR statistic and adds the null-restricted IV
//! estimator. Step two takes the infimum, over that set, of the C(α)-AR
//! statistic minus its `χ²_{k−m_W}` critical value, whose level depends on
//! an identification-strength measure (ICS).
//!
//! Everything is a function of `γ` only through the moments
//! `g_i(γ) = a_i − Σ_s γ_s b_{si}` with `a_i = Z̄_i(y_i − Y_i'β₀)` and
//! `b_{si} = Z̄_i W_{is}`, so means and centered cross-covariances of
//! `(a, b_1, …, b_{m_W})` are formed once and each grid point costs `O(k³)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dist::chi2_cv;
use crate::error::{Error, Result};
use crate::linalg::{sym_inv_sqrt, SymMatrix};
use crate::model::{IvDataset, NullProblem};

/// Rank threshold for the perturbed Jacobian, relative to its largest
/// diagonal QR entry.
const RANK_TOLERANCE: f64 = 1e-12;

/// Where the `γ` grid is centered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum GridCenter {
    /// The null-restricted IV estimator, or the origin when it does not exist.
    #[default]
    Estimator,
    /// A known point, e.g. the true `γ` in a simulation.
    TrueGamma { gamma: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GammaGrid {
    pub center: GridCenter,
    pub half_width: f64,
    pub points_per_dim: usize,
}

impl Default for GammaGrid {
    fn default() -> Self {
        GammaGrid { center: GridCenter::Estimator, half_width: 10.0, points_per_dim: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArArConfig {
    pub alpha1: f64,
    pub k_l: f64,
    pub a_perturb: f64,
    pub gamma_grid: GammaGrid,
    pub zeta_seed: u64,
}

impl Default for ArArConfig {
    fn default() -> Self {
        ArArConfig { alpha1: 0.005, k_l: 0.05, a_perturb: 0.001, gamma_grid: GammaGrid::default(), zeta_seed: 0 }
    }
}

impl ArArConfig {
    /// Checks the configuration against a nominal level `alpha`.
    pub fn validate(&self, alpha: f64) -> Result<()> {
        if !(self.alpha1 > 0.0 && self.alpha1 < alpha && alpha < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < alpha1 < alpha < 1, got alpha1={} alpha={alpha}",
                self.alpha1
            )));
        }
        if !(self.a_perturb >= 0.0 && self.a_perturb.is_finite()) {
            return Err(Error::Config(format!("a_perturb must be nonnegative, got {}", self.a_perturb)));
        }
        if !self.k_l.is_finite() {
            return Err(Error::Config("K_L must be finite".into()));
        }
        let g = &self.gamma_grid;
        if g.points_per_dim < 2 {
            return Err(Error::Config("gamma grid needs at least 2 points per dimension".into()));
        }
        if !(g.half_width > 0.0 && g.half_width.is_finite()) {
            return Err(Error::Config(format!("gamma grid half width must be positive, got {}", g.half_width)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ArArResult {
    pub reject: bool,
    /// Points of the first-stage set, estimator included.
    pub cs1_points: Vec<Vec<f64>>,
    pub estimator_gamma: Option<Vec<f64>>,
    /// `min` over the first-stage set of `HAR_β − χ²_{k−m_W, 1−α₂}`.
    pub worst_margin: f64,
    /// ICS at each point of `cs1_points`, in the same order.
    pub ics_values: Vec<f64>,
}

/// Moment means and centered cross-covariances for a fixed `β₀`.
#[derive(Debug, Clone)]
pub struct ArArMoments<'a> {
    data: &'a IvDataset,
    n: usize,
    /// Column 0 is `ā`, column `s + 1` is `b̄_s = Z̄'W^s / n`.
    means: DMatrix<f64>,
    /// `cov[u * (m + 1) + v]` is `n⁻¹ Σ (u_i − ū)(v_i − v̄)'`.
    cov: Vec<DMatrix<f64>>,
    /// `n⁻¹ Z̄'Z̄`.
    zz: DMatrix<f64>,
    /// `Z̄'(y − Yβ₀) / n`.
    zy0: DVector<f64>,
}

impl<'a> ArArMoments<'a> {
    pub fn new(data: &'a IvDataset, beta0: &DVector<f64>) -> Result<Self> {
        let (n, k, m) = (data.n(), data.k(), data.m_w());
        let y0 = data.y0bar(beta0)?;
        let zbar = data.zbar();
        let w = data.w();
        let nf = n as f64;

        // Row i of block u is u_i'.
        let mut blocks = Vec::with_capacity(m + 1);
        let mut a = zbar.clone();
        for i in 0..n {
            a.row_mut(i).scale_mut(y0[i]);
        }
        blocks.push(a);
        for s in 0..m {
            let mut b = zbar.clone();
            for i in 0..n {
                b.row_mut(i).scale_mut(w[(i, s)]);
            }
            blocks.push(b);
        }
        let mut means = DMatrix::zeros(k, m + 1);
        for (u, block) in blocks.iter_mut().enumerate() {
            let mean = block.row_mean();
            means.set_column(u, &mean.transpose());
            for i in 0..n {
                let mut row = block.row_mut(i);
                row -= &mean;
            }
        }
        let mut cov = Vec::with_capacity((m + 1) * (m + 1));
        for u in 0..=m {
            for v in 0..=m {
                cov.push(blocks[u].transpose() * &blocks[v] / nf);
            }
        }
        Ok(ArArMoments {
            data,
            n,
            means,
            cov,
            zz: zbar.transpose() * zbar / nf,
            zy0: zbar.transpose() * y0 / nf,
        })
    }

    pub fn k(&self) -> usize {
        self.data.k()
    }

    pub fn m_w(&self) -> usize {
        self.data.m_w()
    }

    fn check_gamma(&self, gamma: &[f64]) -> Result<()> {
        if gamma.len() != self.m_w() {
            return Err(Error::InvalidArgument(format!(
                "gamma has length {} but m_W = {}",
                gamma.len(),
                self.m_w()
            )));
        }
        Ok(())
    }

    /// Coefficient vector `c` with `g_i(γ) − ĝ = Σ_u c_u (u_i − ū)`.
    fn coefficients(gamma: &[f64]) -> Vec<f64> {
        std::iter::once(1.0).chain(gamma.iter().map(|g| -g)).collect()
    }

    /// `ĝ_n(β₀, γ)` and `Σ̂_n(β₀, γ)`.
    pub fn gbar_sigma(&self, gamma: &[f64]) -> Result<(DVector<f64>, SymMatrix)> {
        self.check_gamma(gamma)?;
        let c = Self::coefficients(gamma);
        let p = c.len();
        let g = &self.means * DVector::from_column_slice(&c);
        let k = self.k();
        let mut sigma = DMatrix::zeros(k, k);
        for u in 0..p {
            for v in 0..p {
                sigma += &self.cov[u * p + v] * (c[u] * c[v]);
            }
        }
        Ok((g, SymMatrix::new(sigma)?))
    }

    /// `n ĝ'Σ̂⁻¹ĝ`.
    pub fn har_full(&self, gamma: &[f64]) -> Result<f64> {
        Ok(self.har_full_at(&self.point(gamma)?))
    }

    /// The C(α)-AR statistic with perturbation `a n^{-1/2} ζ₁`.
    pub fn har_beta(&self, gamma: &[f64], a_perturb: f64, zeta: &DMatrix<f64>) -> Result<f64> {
        let state = self.point(gamma)?;
        self.har_beta_at(gamma, &state, a_perturb, zeta)
    }

    /// `(ICS, α₂)` at `γ` for nominal level `alpha`.
    pub fn ics_alpha2(&self, gamma: &[f64], alpha: f64, config: &ArArConfig) -> Result<(f64, f64)> {
        let state = self.point(gamma)?;
        let ics = self.ics_at(&state)?;
        Ok((ics, alpha2(ics, alpha, config)))
    }

    fn point(&self, gamma: &[f64]) -> Result<PointState> {
        let (g, sigma) = self.gbar_sigma(gamma)?;
        let inv_sqrt = sym_inv_sqrt(&sigma)?.into_matrix();
        Ok(PointState { g, inv_sqrt })
    }

    fn har_full_at(&self, state: &PointState) -> f64 {
        self.n as f64 * (&state.inv_sqrt * &state.g).norm_squared()
    }

    fn har_beta_at(&self, gamma: &[f64], state: &PointState, a_perturb: f64, zeta: &DMatrix<f64>) -> Result<f64> {
        let (k, m) = (self.k(), self.m_w());
        if zeta.shape() != (k, m) {
            return Err(Error::InvalidArgument(format!(
                "zeta must be {k}x{m}, got {}x{}",
                zeta.nrows(),
                zeta.ncols()
            )));
        }
        let c = Self::coefficients(gamma);
        let p = m + 1;
        let s = &state.inv_sqrt;
        let sigma_inv_g = s * (s * &state.g);
        let mut d = DMatrix::zeros(k, m);
        for sdx in 0..m {
            // Γ̂_s = −Cov(b_s, g) = −Σ_u c_u C_{b_s, u}.
            let mut cov_bg = DMatrix::zeros(k, k);
            for u in 0..p {
                cov_bg += &self.cov[(sdx + 1) * p + u] * c[u];
            }
            let col = -self.means.column(sdx + 1) + cov_bg * &sigma_inv_g;
            d.set_column(sdx, &col);
        }
        let x = s * d + zeta * (a_perturb / (self.n as f64).sqrt());
        let v = s * &state.g;
        let resid = residual_on(&x, &v)?;
        Ok(self.n as f64 * resid.norm_squared())
    }

    fn ics_at(&self, state: &PointState) -> Result<f64> {
        let (n, m) = (self.n, self.m_w());
        let nf = n as f64;
        let w = self.data.w();
        // ‖Σ̂^{-1/2} Z̄_i‖ for every i.
        let zs = self.data.zbar() * state.inv_sqrt.transpose();
        let lev: Vec<f64> = (0..n).map(|i| zs.row(i).norm()).collect();
        let mut phi = vec![0.0; m];
        for s in 0..m {
            if w.column(s).iter().all(|&x| x == 0.0) {
                return Ok(0.0);
            }
            let h: Vec<f64> = (0..n).map(|i| w[(i, s)].abs() * lev[i]).collect();
            let mean = h.iter().sum::<f64>() / nf;
            let var = h.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
            if !(var > 1e-14 * mean * mean) {
                return Err(Error::DegenerateScale(format!(
                    "the scale of |W_is| * ||Z_i|| has zero dispersion for s = {}",
                    s + 1
                )));
            }
            phi[s] = var.sqrt().recip();
        }
        // Σ̂^{-1/2} Z̄'W Φ = n Σ̂^{-1/2} (b̄_1, …, b̄_m) Φ.
        let mut b = self.means.columns(1, m).into_owned() * nf;
        for s in 0..m {
            b.column_mut(s).scale_mut(phi[s]);
        }
        let sb = &state.inv_sqrt * b;
        let gram = SymMatrix::new(sb.transpose() * sb)?;
        Ok(gram.min_eigenvalue().max(0.0).sqrt() / nf)
    }

    /// `(W'P_Z̄W)⁻¹W'P_Z̄(y − Yβ₀)` when `W'P_Z̄W` is well conditioned.
    pub fn estimator(&self) -> Option<DVector<f64>> {
        let chol = self.zz.clone().cholesky()?;
        let zw = self.means.columns(1, self.m_w()).into_owned();
        let lhs = SymMatrix::new(zw.transpose() * chol.solve(&zw)).ok()?;
        let trace = lhs.matrix().trace();
        if lhs.min_eigenvalue() <= 1e-10 * (1.0 + trace) {
            return None;
        }
        let rhs = zw.transpose() * chol.solve(&self.zy0);
        lhs.matrix().clone().cholesky().map(|c| c.solve(&rhs))
    }

    /// `ĝ'(n⁻¹ Z̄'Z̄)⁻¹ĝ`.
    pub fn q_hat(&self, gamma: &[f64]) -> Result<f64> {
        self.check_gamma(gamma)?;
        let g = &self.means * DVector::from_column_slice(&Self::coefficients(gamma));
        let chol = self
            .zz
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular { eigenvalue: 0.0, tolerance: 0.0 })?;
        Ok(g.dot(&chol.solve(&g)))
    }
}

struct PointState {
    g: DVector<f64>,
    inv_sqrt: DMatrix<f64>,
}

/// `M_X v` via a thin QR of `X`.
fn residual_on(x: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let qr = x.clone().qr();
    let r = qr.r();
    let diag_max = r.diagonal().iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
    let diag_min = r.diagonal().iter().fold(f64::INFINITY, |acc, d| acc.min(d.abs()));
    if !(diag_min > RANK_TOLERANCE * diag_max) || diag_max == 0.0 {
        return Err(Error::RankDeficient(
            "the perturbed orthogonalized Jacobian does not have full column rank".into(),
        ));
    }
    let q = qr.q();
    Ok(v - &q * (q.transpose() * v))
}

fn alpha2(ics: f64, alpha: f64, config: &ArArConfig) -> f64 {
    if ics <= config.k_l {
        alpha - config.alpha1
    } else {
        alpha
    }
}

/// The `k x m_W` standard normal perturbation matrix for a seed.
pub fn draw_zeta(seed: u64, k: usize, m_w: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(k, m_w, |_, _| rng.sample(StandardNormal))
}

/// All points of the configured grid around `center`, first coordinate
/// varying slowest.
pub fn grid_points(center: &[f64], half_width: f64, points_per_dim: usize) -> Vec<Vec<f64>> {
    let m = center.len();
    let step = 2.0 * half_width / (points_per_dim - 1) as f64;
    let total = points_per_dim.pow(m as u32);
    (0..total)
        .map(|mut idx| {
            let mut point = vec![0.0; m];
            for d in (0..m).rev() {
                let j = idx % points_per_dim;
                idx /= points_per_dim;
                point[d] = center[d] - half_width + step * j as f64;
            }
            point
        })
        .collect()
}

/// First-stage set (grid part plus estimator set) and the estimator.
pub fn first_stage_cs(
    moments: &ArArMoments<'_>,
    config: &ArArConfig,
) -> Result<(Vec<Vec<f64>>, Option<Vec<f64>>)> {
    let m = moments.m_w();
    let estimator = moments.estimator().map(|g| g.as_slice().to_vec());
    let center = match &config.gamma_grid.center {
        GridCenter::TrueGamma { gamma } => {
            moments.check_gamma(gamma)?;
            gamma.clone()
        }
        GridCenter::Estimator => estimator.clone().unwrap_or_else(|| vec![0.0; m]),
    };
    let grid = grid_points(&center, config.gamma_grid.half_width, config.gamma_grid.points_per_dim);
    let cv1 = chi2_cv(config.alpha1, moments.k())?;
    let mut cs = Vec::new();
    for point in &grid {
        if moments.har_full(point)? < cv1 {
            cs.push(point.clone());
        }
    }
    match &estimator {
        Some(e) => {
            if !cs.contains(e) {
                cs.push(e.clone());
            }
        }
        None => {
            let n = moments.n as f64;
            let q: Vec<f64> = grid.iter().map(|g| moments.q_hat(g)).collect::<Result<_>>()?;
            let qmin = q.iter().copied().fold(f64::INFINITY, f64::min);
            let slack = n.ln() / n;
            for (point, qv) in grid.iter().zip(&q) {
                if *qv <= qmin + slack && !cs.contains(point) {
                    cs.push(point.clone());
                }
            }
        }
    }
    Ok((cs, estimator))
}

pub fn ar_ar_test(problem: &NullProblem, config: &ArArConfig) -> Result<ArArResult> {
    let alpha = problem.alpha;
    config.validate(alpha)?;
    let moments = ArArMoments::new(&problem.data, &problem.beta0)?;
    let (k, m) = (moments.k(), moments.m_w());
    let zeta = draw_zeta(config.zeta_seed, k, m);
    let (cs1_points, estimator_gamma) = first_stage_cs(&moments, config)?;
    let cv_reduced = chi2_cv(alpha - config.alpha1, k - m)?;
    let cv_full = chi2_cv(alpha, k - m)?;

    let mut worst_margin = f64::INFINITY;
    let mut ics_values = Vec::with_capacity(cs1_points.len());
    for gamma in &cs1_points {
        let state = moments.point(gamma)?;
        let ics = moments.ics_at(&state)?;
        let cv = if ics <= config.k_l { cv_reduced } else { cv_full };
        let margin = moments.har_beta_at(gamma, &state, config.a_perturb, &zeta)? - cv;
        worst_margin = worst_margin.min(margin);
        ics_values.push(ics);
    }
    Ok(ArArResult { reject: worst_margin > 0.0, cs1_points, estimator_gamma, worst_margin, ics_values })
}

/// `n ĝ'Σ̂⁻¹ĝ` at `(β₀, γ)`.
pub fn har_full(data: &IvDataset, beta0: &DVector<f64>, gamma: &[f64]) -> Result<f64> {
    ArArMoments::new(data, beta0)?.har_full(gamma)
}

/// `HAR_β` at `(β₀, γ)` with the `ζ₁` drawn from `config.zeta_seed`.
pub fn har_beta(data: &IvDataset, beta0: &DVector<f64>, gamma: &[f64], config: &ArArConfig) -> Result<f64> {
    let zeta = draw_zeta(config.zeta_seed, data.k(), data.m_w());
    ArArMoments::new(data, beta0)?.har_beta(gamma, config.a_perturb, &zeta)
}

/// `(ICS, α₂)` at `(β₀, γ)`.
pub fn ics_alpha2(
    data: &IvDataset,
    beta0: &DVector<f64>,
    gamma: &[f64],
    alpha: f64,
    config: &ArArConfig,
) -> Result<(f64, f64)> {
    ArArMoments::new(data, beta0)?.ics_alpha2(gamma, alpha, config)
}
