//! Model selection between the AKP test and the robust AR/AR test.
//!
//! `K̂_n = √n ‖R̂^{-1/2}(Ĝ⊗Ĥ − R̂)R̂^{-1/2}‖_F` measures how far the score
//! covariance is from a Kronecker product. The combined test runs AR/AR at
//! level `α − δ` when `K̂_n > c_n` and the AKP test at level `α` otherwise.

use serde::{Deserialize, Serialize};

use crate::akp::{ar_akp_test_with_scores, AkpResult, CvMode, TableSet};
use crate::arar::{ar_ar_test, ArArConfig, ArArResult};
use crate::error::{Error, Result};
use crate::linalg::{nearest_kp, sym_inv_sqrt, KpFactorization};
use crate::model::{build_scores, NullProblem, ScoreSet};

/// Recommended `c(k, m_W)` for the Frobenius-distance method.
pub const RECOMMENDED_CONSTANTS: [((usize, usize), f64); 6] = [
    ((2, 1), 0.85),
    ((3, 1), 1.25),
    ((4, 1), 1.4),
    ((3, 2), 1.75),
    ((4, 2), 3.2),
    ((5, 2), 3.05),
];

pub fn recommended_constant(k: usize, m_w: usize) -> Option<f64> {
    RECOMMENDED_CONSTANTS.iter().find(|(key, _)| *key == (k, m_w)).map(|(_, c)| *c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMethod {
    /// Standardized Frobenius distance `K̂_n` (method 1).
    #[default]
    FrobeniusDistance,
    /// The KPST statistic (method 2); not implemented.
    Kpst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RecommendedTag {
    Recommended,
}

/// Either an explicit constant or the recommended one for `(k, m_W)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CConstant {
    Value(f64),
    #[serde(with = "recommended_tag")]
    Recommended,
}

mod recommended_tag {
    use super::RecommendedTag;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        RecommendedTag::Recommended.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        RecommendedTag::deserialize(d).map(|_| ())
    }
}

impl Default for CConstant {
    fn default() -> Self {
        CConstant::Recommended
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub method: SelectionMethod,
    pub c_constant: CConstant,
    pub delta: f64,
    pub cv_mode: CvMode,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            method: SelectionMethod::FrobeniusDistance,
            c_constant: CConstant::Recommended,
            delta: 1e-6,
            cv_mode: CvMode::Auto,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self, alpha: f64) -> Result<()> {
        if let CConstant::Value(c) = self.c_constant {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("c constant must be positive, got {c}")));
            }
        }
        if !(self.delta >= 0.0 && self.delta < alpha) {
            return Err(Error::Config(format!("delta must lie in [0, alpha), got {}", self.delta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Akp,
    Robust,
}

#[derive(Debug, Clone)]
pub struct KpDistance {
    /// `K̂_n`.
    pub k_stat: f64,
    pub kp: KpFactorization,
}

/// `K̂_n` together with the factorization it is measured against.
pub fn kp_distance(scores: &ScoreSet) -> Result<KpDistance> {
    let rhat = scores.rhat();
    let kp = nearest_kp(rhat, scores.p(), scores.k())?;
    let r = sym_inv_sqrt(rhat)?;
    let r = r.matrix();
    let diff = kp.kron() - rhat.matrix();
    let k_stat = (scores.n() as f64).sqrt() * (r * diff * r).norm();
    Ok(KpDistance { k_stat, kp })
}

pub fn kp_distance_stat(scores: &ScoreSet) -> Result<f64> {
    kp_distance(scores).map(|d| d.k_stat)
}

/// The constant `c(k, m_W)` to use: the explicit one, or the recommended one.
pub fn resolve_constant(k: usize, m_w: usize, c_constant: CConstant) -> Result<f64> {
    match c_constant {
        CConstant::Value(c) => Ok(c),
        CConstant::Recommended => recommended_constant(k, m_w).ok_or_else(|| {
            let pairs: Vec<String> =
                RECOMMENDED_CONSTANTS.iter().map(|((k, m), _)| format!("({k},{m})")).collect();
            Error::Config(format!(
                "no recommended constant for (k, m_W) = ({k},{m_w}); supported pairs are {}; \
                 supply c_constant explicitly",
                pairs.join(", ")
            ))
        }),
    }
}

/// `c_n = c(k, m_W) √n / ln ln n`.
pub fn threshold_cn(n: usize, k: usize, m_w: usize, c_constant: CConstant) -> Result<f64> {
    if n < 16 {
        return Err(Error::InvalidArgument(format!("the selection threshold needs n >= 16, got n = {n}")));
    }
    let c = resolve_constant(k, m_w, c_constant)?;
    let nf = n as f64;
    Ok(c * nf.sqrt() / nf.ln().ln())
}

#[derive(Debug, Clone)]
pub struct CombinedResult {
    pub k_stat: f64,
    pub threshold: f64,
    pub branch: Branch,
    pub akp_result: Option<AkpResult>,
    pub robust_result: Option<ArArResult>,
    pub reject: bool,
}

/// The combined test: AR/AR at `α − δ` if `K̂_n > c_n`, else AKP at `α`.
pub fn ms_akp_test(
    problem: &NullProblem,
    sel: &SelectionConfig,
    arar: &ArArConfig,
    tables: &TableSet,
) -> Result<CombinedResult> {
    if sel.method == SelectionMethod::Kpst {
        return Err(Error::Unsupported("the KPST selection method is not implemented".into()));
    }
    sel.validate(problem.alpha)?;
    let scores = build_scores(problem)?;
    let k_stat = kp_distance_stat(&scores)?;
    let threshold = threshold_cn(scores.n(), scores.k(), scores.p() - 1, sel.c_constant)?;
    if k_stat > threshold {
        let robust = ar_ar_test(&problem.with_alpha(problem.alpha - sel.delta)?, arar)?;
        Ok(CombinedResult {
            k_stat,
            threshold,
            branch: Branch::Robust,
            reject: robust.reject,
            akp_result: None,
            robust_result: Some(robust),
        })
    } else {
        let akp = ar_akp_test_with_scores(&scores, problem.alpha, sel.cv_mode, tables)?;
        Ok(CombinedResult {
            k_stat,
            threshold,
            branch: Branch::Akp,
            reject: akp.reject,
            akp_result: Some(akp),
            robust_result: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMatrix;
    use crate::testutil::random_dataset;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn recommended_constants() {
        assert_eq!(recommended_constant(3, 1), Some(1.25));
        assert_eq!(recommended_constant(4, 2), Some(3.2));
        assert_eq!(recommended_constant(6, 1), None);
    }

    #[test]
    fn threshold_arithmetic() {
        let c = threshold_cn(250, 3, 1, CConstant::Recommended).unwrap();
        let expected = 1.25 * 250f64.sqrt() / 250f64.ln().ln();
        assert_eq!(c, expected);
        assert!((c - 11.567).abs() < 1e-3);
        assert!(threshold_cn(15, 3, 1, CConstant::Recommended).is_err());
        let err = threshold_cn(100, 7, 1, CConstant::Recommended).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("(3,1)"));
        assert!(threshold_cn(100, 7, 1, CConstant::Value(2.0)).is_ok());
    }

    #[test]
    fn c_constant_serde() {
        assert_eq!(serde_json::from_str::<CConstant>("\"recommended\"").unwrap(), CConstant::Recommended);
        assert_eq!(serde_json::from_str::<CConstant>("1.5").unwrap(), CConstant::Value(1.5));
        assert!(serde_json::from_str::<CConstant>("\"other\"").is_err());
        assert_eq!(serde_json::to_string(&CConstant::Recommended).unwrap(), "\"recommended\"");
    }

    #[test]
    fn distance_matches_naive_sandwich() {
        let d = random_dataset(13, 60, 3, 1);
        let scores = build_scores(&NullProblem::new(d, DVector::zeros(1), 0.05).unwrap()).unwrap();
        let kp = nearest_kp(scores.rhat(), 2, 3).unwrap();
        let eig = scores.rhat().matrix().clone().symmetric_eigen();
        let r = &eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
            * eig.eigenvectors.transpose();
        let kron = kp.g.matrix().kronecker(kp.h.matrix());
        let m = &r * (kron - scores.rhat().matrix()) * &r;
        let mut fro = 0.0;
        for x in m.iter() {
            fro += x * x;
        }
        let expected = 60f64.sqrt() * fro.sqrt();
        let got = kp_distance_stat(&scores).unwrap();
        assert!((got - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn exact_kronecker_scores_have_zero_distance() {
        // Scores f_i = u_i ⊗ z_i with u_i independent of z_i through a balanced
        // design give R̂ = (n⁻¹Σuu') ⊗ (n⁻¹Σzz') exactly.
        let us = [[1.0, 0.5], [-1.0, 0.3], [0.7, -1.2], [-0.4, 0.9]];
        let zs = [[1.0, 0.0, 0.5], [0.0, 1.0, -0.5], [1.0, 1.0, 0.0], [-1.0, 0.5, 1.0]];
        let n = us.len() * zs.len();
        let mut z = DMatrix::zeros(n, 3);
        let mut uw = DMatrix::zeros(n, 2);
        for (a, u) in us.iter().enumerate() {
            for (b, zz) in zs.iter().enumerate() {
                let i = a * zs.len() + b;
                for j in 0..3 {
                    z[(i, j)] = zz[j];
                }
                uw[(i, 0)] = u[0];
                uw[(i, 1)] = u[1];
            }
        }
        // Score construction projects out Z, so build R̂ from the outer products directly.
        let mut rhat = DMatrix::zeros(6, 6);
        for i in 0..n {
            let f = DVector::from_fn(6, |e, _| uw[(i, e / 3)] * z[(i, e % 3)]);
            rhat += &f * f.transpose();
        }
        rhat /= n as f64;
        let rhat = SymMatrix::new(rhat).unwrap();
        let kp = nearest_kp(&rhat, 2, 3).unwrap();
        let r = sym_inv_sqrt(&rhat).unwrap();
        let dist = (n as f64).sqrt() * (r.matrix() * (kp.kron() - rhat.matrix()) * r.matrix()).norm();
        assert!(dist < 1e-7 * (n as f64).sqrt(), "{dist}");
    }

    #[test]
    fn branch_follows_threshold() {
        let d = random_dataset(21, 200, 3, 1);
        let problem = NullProblem::new(d, DVector::from_vec(vec![0.3]), 0.05).unwrap();
        let tables = TableSet::embedded();
        let arar = ArArConfig::default();
        let low = SelectionConfig { c_constant: CConstant::Value(1e-9), ..SelectionConfig::default() };
        let res = ms_akp_test(&problem, &low, &arar, &tables).unwrap();
        assert_eq!(res.branch, Branch::Robust);
        assert!(res.akp_result.is_none());
        assert_eq!(res.reject, res.robust_result.as_ref().unwrap().reject);

        let high = SelectionConfig { c_constant: CConstant::Value(1e9), ..SelectionConfig::default() };
        let res = ms_akp_test(&problem, &high, &arar, &tables).unwrap();
        assert_eq!(res.branch, Branch::Akp);
        assert!(res.robust_result.is_none());
        assert_eq!(res.reject, res.akp_result.as_ref().unwrap().reject);
        assert!(res.k_stat >= 0.0);
    }

    #[test]
    fn kpst_is_unsupported() {
        let d = random_dataset(1, 60, 3, 1);
        let problem = NullProblem::new(d, DVector::zeros(1), 0.05).unwrap();
        let sel = SelectionConfig { method: SelectionMethod::Kpst, ..SelectionConfig::default() };
        let err = ms_akp_test(&problem, &sel, &ArArConfig::default(), &TableSet::embedded()).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn config_validation() {
        let s = SelectionConfig::default();
        assert!(s.validate(0.05).is_ok());
        assert!(SelectionConfig { delta: 0.0, ..s.clone() }.validate(0.05).is_ok());
        assert!(SelectionConfig { delta: 0.05, ..s.clone() }.validate(0.05).is_err());
        assert!(SelectionConfig { c_constant: CConstant::Value(-1.0), ..s }.validate(0.05).is_err());
    }
}
