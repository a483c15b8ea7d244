//! Python bindings. Matrices cross the boundary as lists of rows; results
//! come back as dicts.

use std::path::Path;

use ivkp::akp::{self, CvMode, CvSource, TableSet};
use ivkp::arar::{ArArConfig, ArArResult, GammaGrid};
use ivkp::linalg::{self, KpFactorization, SymMatrix};
use ivkp::model::build_scores;
use ivkp::selection::{self, CConstant, SelectionConfig};
use ivkp::sim::{self, DesignName, SimulationPlan, TestKind};
use ivkp::{Branch, ErrorKind, IvDataset, NullProblem};
use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(ivkp_py, IvkpError, PyValueError, "Invalid input or configuration.");
create_exception!(ivkp_py, NumericalError, PyArithmeticError, "A numerical failure such as a singular covariance.");

fn to_py(e: ivkp::Error) -> PyErr {
    match e.kind() {
        ErrorKind::Numerical => NumericalError::new_err(e.to_string()),
        _ => IvkpError::new_err(e.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>], what: &str) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(IvkpError::new_err(format!("{what} is empty")));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(IvkpError::new_err(format!("{what} has rows of different lengths")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn cv_mode(s: &str) -> PyResult<CvMode> {
    match s {
        "auto" => Ok(CvMode::Auto),
        "table" => Ok(CvMode::Table),
        "chi2" => Ok(CvMode::Chi2),
        _ => Err(IvkpError::new_err(format!("cv_mode must be auto, table or chi2, got {s:?}"))),
    }
}

fn c_constant(c: Option<f64>) -> CConstant {
    c.map_or(CConstant::Recommended, CConstant::Value)
}

fn tables(dir: Option<&str>) -> PyResult<TableSet> {
    let mut t = TableSet::embedded();
    if let Some(d) = dir {
        t.load_dir(Path::new(d)).map_err(to_py)?;
    }
    Ok(t)
}

fn arar_config(seed: u64, points_per_dim: usize, half_width: f64) -> ArArConfig {
    ArArConfig {
        gamma_grid: GammaGrid { points_per_dim, half_width, ..GammaGrid::default() },
        zeta_seed: seed,
        ..ArArConfig::default()
    }
}

fn branch_name(b: Branch) -> &'static str {
    match b {
        Branch::Akp => "akp",
        Branch::Robust => "robust",
    }
}

/// A sample `(y, Y, W, Z)` with `n` rows.
#[pyclass(frozen, module = "ivkp_py")]
pub struct Dataset {
    inner: IvDataset,
}

#[pymethods]
impl Dataset {
    /// `y` is a list of floats; `y_tested`, `w` and `z` are lists of rows.
    #[new]
    fn new(y: Vec<f64>, y_tested: Vec<Vec<f64>>, w: Vec<Vec<f64>>, z: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = IvDataset::new(
            DVector::from_vec(y),
            matrix(&y_tested, "y_tested")?,
            matrix(&w, "w")?,
            matrix(&z, "z")?,
        )
        .map_err(to_py)?;
        Ok(Dataset { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn m_y(&self) -> usize {
        self.inner.m_y()
    }

    #[getter]
    fn m_w(&self) -> usize {
        self.inner.m_w()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n={}, k={}, m_y={}, m_w={})", self.n(), self.k(), self.m_y(), self.m_w())
    }
}

impl Dataset {
    fn problem(&self, beta0: Vec<f64>, alpha: f64) -> PyResult<NullProblem> {
        NullProblem::new(self.inner.clone(), DVector::from_vec(beta0), alpha).map_err(to_py)
    }
}

fn akp_dict<'py>(py: Python<'py>, r: &akp::AkpResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("reject", r.reject)?;
    d.set_item("statistic", r.statistic)?;
    d.set_item("critical_value", r.critical_value)?;
    d.set_item(
        "cv_source",
        match r.cv_source {
            CvSource::TableInterpolated => "table-interpolated",
            CvSource::Chi2Fallback => "chi2-fallback",
        },
    )?;
    d.set_item("roots", r.roots.clone())?;
    Ok(d)
}

fn arar_dict<'py>(py: Python<'py>, r: &ArArResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("reject", r.reject)?;
    d.set_item("worst_margin", r.worst_margin)?;
    d.set_item("cs1_points", r.cs1_points.clone())?;
    d.set_item("estimator_gamma", r.estimator_gamma.clone())?;
    d.set_item("ics_values", r.ics_values.clone())?;
    Ok(d)
}

fn kp_dict<'py>(py: Python<'py>, kp: &KpFactorization) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("g", kp.g.to_rows())?;
    d.set_item("h", kp.h.to_rows())?;
    d.set_item("residual", kp.residual)?;
    d.set_item("singular_values", kp.sigma.clone())?;
    d.set_item("ambiguous_top_pair", kp.ambiguous_top_pair)?;
    Ok(d)
}

/// Subvector AR test with the AKP covariance and conditional critical value.
#[pyfunction]
#[pyo3(signature = (data, beta0, alpha = 0.05, cv_mode = "auto", table_dir = None))]
fn ar_akp_test<'py>(
    py: Python<'py>,
    data: &Dataset,
    beta0: Vec<f64>,
    alpha: f64,
    cv_mode: &str,
    table_dir: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let problem = data.problem(beta0, alpha)?;
    let r = akp::ar_akp_test(&problem, self::cv_mode(cv_mode)?, &tables(table_dir)?).map_err(to_py)?;
    akp_dict(py, &r)
}

/// Two-step robust AR test, valid under general heteroskedasticity.
#[pyfunction]
#[pyo3(signature = (data, beta0, alpha = 0.05, seed = 0, points_per_dim = 100, half_width = 10.0))]
fn ar_ar_test<'py>(
    py: Python<'py>,
    data: &Dataset,
    beta0: Vec<f64>,
    alpha: f64,
    seed: u64,
    points_per_dim: usize,
    half_width: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let problem = data.problem(beta0, alpha)?;
    let r = ivkp::ar_ar_test(&problem, &arar_config(seed, points_per_dim, half_width)).map_err(to_py)?;
    arar_dict(py, &r)
}

/// Model-selection test: AKP when the covariance is close to Kronecker, the
/// robust test otherwise. `c_constant=None` uses the recommended constant.
#[pyfunction]
#[pyo3(signature = (data, beta0, alpha = 0.05, c_constant = None, seed = 0, points_per_dim = 100, table_dir = None))]
#[allow(clippy::too_many_arguments)]
fn ms_akp_test<'py>(
    py: Python<'py>,
    data: &Dataset,
    beta0: Vec<f64>,
    alpha: f64,
    c_constant: Option<f64>,
    seed: u64,
    points_per_dim: usize,
    table_dir: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let problem = data.problem(beta0, alpha)?;
    let sel = SelectionConfig { c_constant: self::c_constant(c_constant), ..SelectionConfig::default() };
    let arar = arar_config(seed, points_per_dim, GammaGrid::default().half_width);
    let r = selection::ms_akp_test(&problem, &sel, &arar, &tables(table_dir)?).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("reject", r.reject)?;
    d.set_item("branch", branch_name(r.branch))?;
    d.set_item("k_stat", r.k_stat)?;
    d.set_item("threshold", r.threshold)?;
    d.set_item("akp", r.akp_result.as_ref().map(|a| akp_dict(py, a)).transpose()?)?;
    d.set_item("robust", r.robust_result.as_ref().map(|a| arar_dict(py, a)).transpose()?)?;
    Ok(d)
}

/// Distance of the score covariance from the nearest Kronecker product, with
/// the selection threshold.
#[pyfunction]
#[pyo3(signature = (data, beta0, c_constant = None))]
fn kp_distance<'py>(
    py: Python<'py>,
    data: &Dataset,
    beta0: Vec<f64>,
    c_constant: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let problem = data.problem(beta0, 0.05)?;
    let scores = build_scores(&problem).map_err(to_py)?;
    let (n, k, m_w) = (data.n(), data.k(), data.m_w());
    let c = self::c_constant(c_constant);
    let dist = selection::kp_distance(&scores).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("k_stat", dist.k_stat)?;
    d.set_item("c_constant", selection::resolve_constant(k, m_w, c).map_err(to_py)?)?;
    d.set_item("threshold", selection::threshold_cn(n, k, m_w, c).map_err(to_py)?)?;
    d.set_item("kp", kp_dict(py, &dist.kp)?)?;
    Ok(d)
}

/// Nearest `G ⊗ H` (G is `p x p`, H is `k x k`) to a symmetric matrix in
/// Frobenius norm.
#[pyfunction]
fn nearest_kp<'py>(py: Python<'py>, matrix: Vec<Vec<f64>>, p: usize, k: usize) -> PyResult<Bound<'py, PyDict>> {
    let a = SymMatrix::new(self::matrix(&matrix, "matrix")?).map_err(to_py)?;
    let kp = linalg::nearest_kp(&a, p, k).map_err(to_py)?;
    let d = kp_dict(py, &kp)?;
    d.set_item("kron", rows_of(&kp.kron()))?;
    Ok(d)
}

/// Conditional critical value at `kappa1` from the embedded alpha = 0.05,
/// df = 4 table.
#[pyfunction]
fn conditional_cv(kappa1: f64) -> PyResult<f64> {
    akp::conditional_cv(&akp::CriticalValueTable::embedded_alpha05_df4(), kappa1).map_err(to_py)
}

/// Monte Carlo rejection rates for a benchmark design (`kp`, `chom` or
/// `rho-transition`). Returns one dict per (test, beta0) cell.
#[pyfunction]
#[pyo3(signature = (design, k, n, pi_w, pi_y, beta0_grid, reps, seed, tests, rho = 0.0, alpha = 0.05, points_per_dim = 100, workers = None))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    design: &str,
    k: usize,
    n: usize,
    pi_w: f64,
    pi_y: f64,
    beta0_grid: Vec<Vec<f64>>,
    reps: usize,
    seed: u64,
    tests: Vec<String>,
    rho: f64,
    alpha: f64,
    points_per_dim: usize,
    workers: Option<usize>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let design = match design {
        "kp" => DesignName::Kp,
        "chom" => DesignName::Chom,
        "rho-transition" => DesignName::RhoTransition,
        other => return Err(IvkpError::new_err(format!("unknown design {other:?}"))),
    };
    let tests = tests
        .iter()
        .map(|t| match t.as_str() {
            "akp" => Ok(TestKind::Akp),
            "arar" => Ok(TestKind::Arar),
            "msakp1" => Ok(TestKind::Msakp1),
            other => Err(IvkpError::new_err(format!("unknown test {other:?}"))),
        })
        .collect::<PyResult<Vec<_>>>()?;
    let spec = sim::standard_designs(design, k, n, pi_w, pi_y, rho).map_err(to_py)?;
    let mut plan = SimulationPlan::new(spec, beta0_grid, reps, seed, tests);
    plan.alpha = alpha;
    plan.arar.gamma_grid.points_per_dim = points_per_dim;
    let report = py.detach(|| sim::run_plan(&plan, &TableSet::embedded(), workers)).map_err(to_py)?;
    report
        .rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("test", r.test.name())?;
            d.set_item("beta0", r.beta0.clone())?;
            d.set_item("rejections", r.rejections)?;
            d.set_item("rejection_rate", r.rejection_rate)?;
            d.set_item("se", r.se)?;
            d.set_item("branch_akp_frac", r.branch_akp_frac)?;
            d.set_item("reps", r.reps)?;
            d.set_item("seed", r.seed)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn ivkp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add("IvkpError", m.py().get_type::<IvkpError>())?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add_function(wrap_pyfunction!(ar_akp_test, m)?)?;
    m.add_function(wrap_pyfunction!(ar_ar_test, m)?)?;
    m.add_function(wrap_pyfunction!(ms_akp_test, m)?)?;
    m.add_function(wrap_pyfunction!(kp_distance, m)?)?;
    m.add_function(wrap_pyfunction!(nearest_kp, m)?)?;
    m.add_function(wrap_pyfunction!(conditional_cv, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
