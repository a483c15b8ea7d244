//! The linear IV data model
//!
//! ```text
//! y = Y β + W γ + ε,   Y = Z̄ Π_Y + V_Y,   W = Z̄ Π_W + V_W
//! ```
//!
//! together with the standardized instruments, the null-restricted outcome
//! `Ȳ₀ = y − Yβ₀`, the score rows `f_i` and their second-moment matrix `R̂`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{sym_inv_sqrt, SymMatrix};

/// Observed arrays of one IV sample.
#[derive(Debug, Clone)]
pub struct IvDataset {
    y: DVector<f64>,
    y_tested: DMatrix<f64>,
    w: DMatrix<f64>,
    zbar: DMatrix<f64>,
}

impl IvDataset {
    /// `y` is the outcome, `y_tested` the regressors under test (`Y`), `w`
    /// the untested endogenous regressors (`W`) and `zbar` the instruments.
    pub fn new(y: DVector<f64>, y_tested: DMatrix<f64>, w: DMatrix<f64>, zbar: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        for (name, rows) in [("Y", y_tested.nrows()), ("W", w.nrows()), ("Z", zbar.nrows())] {
            if rows != n {
                return Err(Error::InvalidArgument(format!("{name} has {rows} rows but y has {n}")));
            }
        }
        let (k, m_w) = (zbar.ncols(), w.ncols());
        if y_tested.ncols() == 0 {
            return Err(Error::InvalidArgument("at least one tested regressor is required".into()));
        }
        if m_w == 0 {
            return Err(Error::InvalidArgument("at least one untested endogenous regressor is required".into()));
        }
        if k < m_w + 1 {
            return Err(Error::InvalidArgument(format!(
                "need at least m_W + 1 = {} instruments, got {k}",
                m_w + 1
            )));
        }
        let kp = k * (1 + m_w);
        if n <= kp {
            return Err(Error::InvalidArgument(format!(
                "sample size {n} must exceed k*(1+m_W) = {kp}"
            )));
        }
        let finite = y.iter().chain(y_tested.iter()).chain(w.iter()).chain(zbar.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("dataset contains non-finite values".into()));
        }
        let gram = SymMatrix::new(zbar.transpose() * &zbar)?;
        let (min_eig, tol) = (gram.min_eigenvalue(), gram.pd_tolerance());
        if min_eig <= tol {
            return Err(Error::Singular { eigenvalue: min_eig, tolerance: tol });
        }
        Ok(IvDataset { y, y_tested, w, zbar })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn k(&self) -> usize {
        self.zbar.ncols()
    }

    pub fn m_y(&self) -> usize {
        self.y_tested.ncols()
    }

    pub fn m_w(&self) -> usize {
        self.w.ncols()
    }

    /// `1 + m_W`.
    pub fn p(&self) -> usize {
        1 + self.m_w()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn y_tested(&self) -> &DMatrix<f64> {
        &self.y_tested
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn zbar(&self) -> &DMatrix<f64> {
        &self.zbar
    }

    /// Same sample with the instrument matrix replaced.
    pub fn with_instruments(&self, zbar: DMatrix<f64>) -> Result<Self> {
        IvDataset::new(self.y.clone(), self.y_tested.clone(), self.w.clone(), zbar)
    }

    /// `y − Yβ₀`.
    pub fn y0bar(&self, beta0: &DVector<f64>) -> Result<DVector<f64>> {
        if beta0.len() != self.m_y() {
            return Err(Error::InvalidArgument(format!(
                "beta0 has length {} but there are {} tested regressors",
                beta0.len(),
                self.m_y()
            )));
        }
        Ok(&self.y - &self.y_tested * beta0)
    }
}

/// A dataset, a hypothesized `β₀` and a nominal level.
#[derive(Debug, Clone)]
pub struct NullProblem {
    pub data: IvDataset,
    pub beta0: DVector<f64>,
    pub alpha: f64,
}

impl NullProblem {
    pub fn new(data: IvDataset, beta0: DVector<f64>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha {alpha} is outside (0, 1)")));
        }
        data.y0bar(&beta0)?;
        Ok(NullProblem { data, beta0, alpha })
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        NullProblem::new(self.data.clone(), self.beta0.clone(), alpha)
    }
}

/// `Z̄ (n⁻¹ Z̄'Z̄)^{-1/2}`, so that `n⁻¹ Z'Z = I_k`.
pub fn standardize(zbar: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = zbar.nrows() as f64;
    let gram = SymMatrix::new(zbar.transpose() * zbar / n)?;
    let root = sym_inv_sqrt(&gram)?;
    Ok(zbar * root.matrix())
}

pub fn standardize_instruments(data: &IvDataset) -> Result<DMatrix<f64>> {
    standardize(data.zbar())
}

/// Applies `M_Z = I − Z(Z'Z)⁻¹Z'` to each column of `x`.
pub(crate) fn annihilate(z: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let q = z.clone().qr().q();
    x - &q * (q.transpose() * x)
}

/// Score rows and their second-moment matrix under `H₀: β = β₀`.
#[derive(Debug, Clone)]
pub struct ScoreSet {
    z: DMatrix<f64>,
    y0w: DMatrix<f64>,
    f: DMatrix<f64>,
    rhat: SymMatrix,
}

impl ScoreSet {
    /// Assembles the scores from standardized instruments `z` and the
    /// `n x p` matrix `(Ȳ₀, W)`.
    pub fn from_parts(z: DMatrix<f64>, y0w: DMatrix<f64>) -> Result<Self> {
        let (n, k, p) = (z.nrows(), z.ncols(), y0w.ncols());
        if y0w.nrows() != n {
            return Err(Error::InvalidArgument("instrument and outcome row counts differ".into()));
        }
        let resid = annihilate(&z, &y0w);
        let mut f = DMatrix::zeros(n, k * p);
        for i in 0..n {
            for j in 0..p {
                let u = resid[(i, j)];
                for l in 0..k {
                    f[(i, j * k + l)] = u * z[(i, l)];
                }
            }
        }
        let rhat = SymMatrix::new(f.transpose() * &f / n as f64)?;
        Ok(ScoreSet { z, y0w, f, rhat })
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn k(&self) -> usize {
        self.z.ncols()
    }

    pub fn p(&self) -> usize {
        self.y0w.ncols()
    }

    /// Standardized instruments.
    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    /// `(Ȳ₀, W)`, one row per observation.
    pub fn y0w(&self) -> &DMatrix<f64> {
        &self.y0w
    }

    pub fn y0bar(&self) -> DVector<f64> {
        self.y0w.column(0).into_owned()
    }

    /// Row `i` is `f_i' = ((M_Z Ȳ₀)_i, (M_Z W)_i') ⊗ Z_i'`.
    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn rhat(&self) -> &SymMatrix {
        &self.rhat
    }
}

pub fn build_scores(problem: &NullProblem) -> Result<ScoreSet> {
    let data = &problem.data;
    let z = standardize_instruments(data)?;
    let y0 = data.y0bar(&problem.beta0)?;
    let mut y0w = DMatrix::zeros(data.n(), data.p());
    y0w.set_column(0, &y0);
    y0w.columns_mut(1, data.m_w()).copy_from(data.w());
    ScoreSet::from_parts(z, y0w)
}
