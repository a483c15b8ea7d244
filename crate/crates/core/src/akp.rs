//! The conditional subvector AR test under approximate Kronecker product
//! structure.
//!
//! The statistic is the smallest root `κ̂_p` of
//!
//! ```text
//! n⁻¹ Ĝ^{-1/2} (Ȳ₀, W)' Z Ĥ⁻¹ Z' (Ȳ₀, W) Ĝ^{-1/2}
//! ```
//!
//! where `(Ĝ, Ĥ)` is the nearest Kronecker factorization of `R̂`. It is
//! compared either to a critical value that depends on the largest root
//! `κ̂₁` (interpolated from a tabulated grid) or to `χ²_{k−m_W, 1−α}`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::chi2_cv;
use crate::error::{Error, Result};
use crate::linalg::{nearest_kp, ordered_eigenvalues, sym_inv, sym_inv_sqrt, KpFactorization, SymMatrix};
use crate::model::{build_scores, NullProblem, ScoreSet};

/// Conditional 95% quantiles for `k − m_W = 4`, as `(κ̂₁, quantile)`.
const TABLE_ALPHA05_DF4: [(f64, f64); 45] = [
    (1.2, 1.1), (1.3, 1.2), (1.4, 1.3), (1.6, 1.5), (1.8, 1.7),
    (2.1, 1.9), (2.3, 2.1), (2.5, 2.3), (2.7, 2.5), (3.0, 2.7),
    (3.2, 2.9), (3.5, 3.1), (3.7, 3.3), (4.0, 3.5), (4.2, 3.7),
    (4.5, 3.9), (4.7, 4.1), (5.0, 4.3), (5.3, 4.5), (5.6, 4.7),
    (5.9, 4.9), (6.2, 5.1), (6.5, 5.3), (6.8, 5.5), (7.1, 5.7),
    (7.4, 5.9), (7.8, 6.1), (8.2, 6.3), (8.6, 6.5), (9.0, 6.7),
    (9.4, 6.9), (9.9, 7.1), (10.5, 7.3), (11.1, 7.5), (11.7, 7.7),
    (12.5, 7.9), (13.4, 8.1), (14.5, 8.3), (15.9, 8.5), (17.9, 8.7),
    (20.9, 8.9), (26.5, 9.1), (39.9, 9.3), (57.4, 9.4), (1000.0, 9.48),
];

/// Relative distance allowed between a table's terminal quantile and the
/// chi-square quantile it should approach.
const TERMINAL_TOLERANCE: f64 = 0.005;

/// Roots in `(-NEGATIVE_ROOT_TOLERANCE * (1 + κ̂₁), 0)` are set to zero.
const NEGATIVE_ROOT_TOLERANCE: f64 = 1e-10;

/// Grid of conditional quantiles `q_{1−α}(κ̂₁, df)`, with an implicit
/// leading row `(0, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalValueTable {
    alpha: f64,
    df: usize,
    rows: Vec<(f64, f64)>,
}

impl CriticalValueTable {
    pub fn new(alpha: f64, df: usize, rows: Vec<(f64, f64)>) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) || df == 0 {
            return Err(Error::InvalidArgument(format!("invalid table key alpha={alpha} df={df}")));
        }
        if rows.is_empty() {
            return Err(Error::InvalidArgument("critical value table has no rows".into()));
        }
        let mut prev = (0.0, 0.0);
        for (i, &(kappa, q)) in rows.iter().enumerate() {
            if !kappa.is_finite() || !q.is_finite() {
                return Err(Error::InvalidArgument(format!("row {}: non-finite entry", i + 1)));
            }
            if kappa <= prev.0 {
                return Err(Error::InvalidArgument(format!(
                    "row {}: kappa1 grid must be strictly increasing and positive ({kappa} after {})",
                    i + 1,
                    prev.0
                )));
            }
            if q < prev.1 {
                return Err(Error::InvalidArgument(format!(
                    "row {}: quantiles must be nondecreasing ({q} after {})",
                    i + 1,
                    prev.1
                )));
            }
            prev = (kappa, q);
        }
        let chi2 = chi2_cv(alpha, df)?;
        if (prev.1 - chi2).abs() > TERMINAL_TOLERANCE * chi2 {
            return Err(Error::InvalidArgument(format!(
                "terminal quantile {} is not within 0.5% of the chi-square quantile {chi2:.4}",
                prev.1
            )));
        }
        Ok(CriticalValueTable { alpha, df, rows })
    }

    /// The embedded table for `α = 5%`, `k − m_W = 4`.
    pub fn embedded_alpha05_df4() -> Self {
        CriticalValueTable::new(0.05, 4, TABLE_ALPHA05_DF4.to_vec()).expect("embedded table is valid")
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn df(&self) -> usize {
        self.df
    }

    pub fn rows(&self) -> &[(f64, f64)] {
        &self.rows
    }

    /// Parses the CSV format:
    ///
    /// ```text
    /// # alpha=0.05 df=4
    /// kappa1,quantile
    /// 1.2,1.1
    /// ...
    /// ```
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut key: Option<(f64, usize)> = None;
        let mut header_seen = false;
        let mut rows = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let (mut alpha, mut df) = (None, None);
                for token in meta.split_whitespace() {
                    if let Some(v) = token.strip_prefix("alpha=") {
                        alpha = v.parse::<f64>().ok();
                    } else if let Some(v) = token.strip_prefix("df=") {
                        df = v.parse::<usize>().ok();
                    }
                }
                match (alpha, df) {
                    (Some(a), Some(d)) => key = Some((a, d)),
                    _ => {
                        return Err(Error::InvalidArgument(format!(
                            "line {}: malformed metadata, expected `# alpha=<a> df=<d>`",
                            lineno + 1
                        )))
                    }
                }
                continue;
            }
            if !header_seen {
                let cols: Vec<&str> = line.split(',').map(str::trim).collect();
                if cols != ["kappa1", "quantile"] {
                    return Err(Error::InvalidArgument(format!(
                        "line {}: expected header `kappa1,quantile`",
                        lineno + 1
                    )));
                }
                header_seen = true;
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed = match cols.as_slice() {
                [a, b] => a.parse::<f64>().ok().zip(b.parse::<f64>().ok()),
                _ => None,
            };
            match parsed {
                Some(row) => rows.push(row),
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "line {}: expected two numeric fields",
                        lineno + 1
                    )))
                }
            }
        }
        let (alpha, df) = key.ok_or_else(|| Error::InvalidArgument("missing `# alpha=<a> df=<d>` line".into()))?;
        CriticalValueTable::new(alpha, df, rows)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = format!("# alpha={} df={}\nkappa1,quantile\n", self.alpha, self.df);
        for (k, q) in &self.rows {
            out.push_str(&format!("{k},{q}\n"));
        }
        out
    }
}

/// Linear interpolation in `κ̂₁` over the table grid (with the implicit
/// `(0, 0)` row); beyond the last grid point the terminal quantile.
pub fn conditional_cv(table: &CriticalValueTable, kappa1: f64) -> Result<f64> {
    if !(kappa1 >= 0.0) {
        return Err(Error::InvalidArgument(format!("kappa1 must be nonnegative, got {kappa1}")));
    }
    let rows = table.rows();
    let last = *rows.last().ok_or_else(|| Error::InvalidArgument("empty critical value table".into()))?;
    if kappa1 >= last.0 {
        return Ok(last.1);
    }
    // First grid point strictly above kappa1; the interval is closed on the left.
    let j = rows.partition_point(|&(k, _)| k <= kappa1);
    let (lo_k, lo_q) = if j == 0 { (0.0, 0.0) } else { rows[j - 1] };
    let (hi_k, hi_q) = rows[j];
    let span = hi_k - lo_k;
    Ok((hi_k - kappa1) / span * lo_q + (kappa1 - lo_k) / span * hi_q)
}

/// The collection of conditional tables available to a run.
#[derive(Debug, Clone, Default)]
pub struct TableSet {
    tables: Vec<CriticalValueTable>,
}

impl TableSet {
    pub fn empty() -> Self {
        TableSet::default()
    }

    /// Only the embedded `α = 5%`, `df = 4` table.
    pub fn embedded() -> Self {
        TableSet { tables: vec![CriticalValueTable::embedded_alpha05_df4()] }
    }

    /// Adds (or replaces) the table for its `(alpha, df)` key.
    pub fn insert(&mut self, table: CriticalValueTable) {
        self.tables.retain(|t| !(same_alpha(t.alpha, table.alpha) && t.df == table.df));
        self.tables.push(table);
    }

    /// Loads every `*.csv` file in `dir` on top of the current set.
    pub fn load_dir(&mut self, dir: &Path) -> Result<usize> {
        let entries = fs::read_dir(dir)
            .map_err(|e| Error::Config(format!("cannot read table directory {}: {e}", dir.display())))?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
            .collect();
        paths.sort();
        for path in &paths {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let table = CriticalValueTable::from_csv_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            self.insert(table);
        }
        Ok(paths.len())
    }

    pub fn get(&self, alpha: f64, df: usize) -> Option<&CriticalValueTable> {
        self.tables.iter().find(|t| t.df == df && same_alpha(t.alpha, alpha))
    }

    pub fn keys(&self) -> Vec<(f64, usize)> {
        self.tables.iter().map(|t| (t.alpha, t.df)).collect()
    }
}

fn same_alpha(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

/// How the critical value is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CvMode {
    /// Conditional table; a missing table is a configuration error.
    Table,
    /// `χ²_{k−m_W, 1−α}`.
    Chi2,
    /// Conditional table when one exists for `(α, k − m_W)`, else chi-square.
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CvSource {
    TableInterpolated,
    Chi2Fallback,
}

/// Precomputed pieces shared by the eigenvalue and profile forms of the
/// statistic.
#[derive(Debug, Clone)]
pub struct AkpGeometry {
    n: f64,
    /// `Z'(Ȳ₀, W)`, `k x p`.
    cross: DMatrix<f64>,
    g_inv_sqrt: SymMatrix,
    h_inv: SymMatrix,
    kp: KpFactorization,
}

impl AkpGeometry {
    pub fn new(scores: &ScoreSet) -> Result<Self> {
        let kp = nearest_kp(scores.rhat(), scores.p(), scores.k())?;
        let g_inv_sqrt = sym_inv_sqrt(&kp.g)?;
        let h_inv = sym_inv(&kp.h)?;
        let cross = scores.z().transpose() * scores.y0w();
        Ok(AkpGeometry { n: scores.n() as f64, cross, g_inv_sqrt, h_inv, kp })
    }

    pub fn kp(&self) -> &KpFactorization {
        &self.kp
    }

    /// `n⁻¹ Ĝ^{-1/2} (Ȳ₀,W)'Z Ĥ⁻¹ Z'(Ȳ₀,W) Ĝ^{-1/2}`.
    pub fn concentration_matrix(&self) -> Result<SymMatrix> {
        let inner = self.cross.transpose() * self.h_inv.matrix() * &self.cross;
        let g = self.g_inv_sqrt.matrix();
        SymMatrix::new(g * inner * g / self.n)
    }

    /// Roots `κ̂₁ ≥ … ≥ κ̂_p`.
    pub fn roots(&self) -> Result<Vec<f64>> {
        let mut roots = ordered_eigenvalues(&self.concentration_matrix()?);
        let floor = -NEGATIVE_ROOT_TOLERANCE * (1.0 + roots[0].abs());
        for r in roots.iter_mut() {
            if *r < 0.0 {
                if *r > floor {
                    *r = 0.0;
                } else {
                    return Err(Error::NegativeRoot(*r));
                }
            }
        }
        Ok(roots)
    }

    /// The profile statistic at `γ̃`; its infimum over `γ̃` is `κ̂_p`.
    pub fn profile(&self, gamma: &DVector<f64>) -> Result<f64> {
        let p = self.cross.ncols();
        if gamma.len() != p - 1 {
            return Err(Error::InvalidArgument(format!(
                "gamma has length {} but m_W = {}",
                gamma.len(),
                p - 1
            )));
        }
        let mut x = DVector::zeros(p);
        x[0] = 1.0;
        x.rows_mut(1, p - 1).copy_from(&(-gamma));
        let v = &self.cross * &x;
        let num = (v.transpose() * self.h_inv.matrix() * &v)[(0, 0)] / self.n;
        let den = (x.transpose() * self.kp.g.matrix() * &x)[(0, 0)];
        Ok(num / den)
    }
}

pub fn akp_roots(scores: &ScoreSet) -> Result<Vec<f64>> {
    AkpGeometry::new(scores)?.roots()
}

pub fn profile_ar(scores: &ScoreSet, gamma_tilde: &DVector<f64>) -> Result<f64> {
    AkpGeometry::new(scores)?.profile(gamma_tilde)
}

#[derive(Debug, Clone)]
pub struct AkpResult {
    /// `κ̂₁ ≥ … ≥ κ̂_p`.
    pub roots: Vec<f64>,
    /// `κ̂_p`.
    pub statistic: f64,
    pub critical_value: f64,
    pub reject: bool,
    pub kp: KpFactorization,
    pub cv_source: CvSource,
}

pub fn ar_akp_test(problem: &NullProblem, cv_mode: CvMode, tables: &TableSet) -> Result<AkpResult> {
    let scores = build_scores(problem)?;
    ar_akp_test_with_scores(&scores, problem.alpha, cv_mode, tables)
}

/// As [`ar_akp_test`] on already assembled scores.
pub fn ar_akp_test_with_scores(
    scores: &ScoreSet,
    alpha: f64,
    cv_mode: CvMode,
    tables: &TableSet,
) -> Result<AkpResult> {
    let geometry = AkpGeometry::new(scores)?;
    let roots = geometry.roots()?;
    let df = scores.k() - (scores.p() - 1);
    let statistic = *roots.last().expect("p >= 2");
    let table = match cv_mode {
        CvMode::Chi2 => None,
        CvMode::Auto => tables.get(alpha, df),
        CvMode::Table => Some(tables.get(alpha, df).ok_or_else(|| {
            Error::Config(format!(
                "no conditional critical value table for alpha={alpha} df={df}; \
                 use the chi-square critical value or import a table"
            ))
        })?),
    };
    let (critical_value, cv_source) = match table {
        Some(t) => (conditional_cv(t, roots[0])?, CvSource::TableInterpolated),
        None => (chi2_cv(alpha, df)?, CvSource::Chi2Fallback),
    };
    Ok(AkpResult {
        statistic,
        critical_value,
        reject: statistic > critical_value,
        roots,
        kp: geometry.kp,
        cv_source,
    })
}
