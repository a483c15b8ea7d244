//! Subvector Anderson–Rubin inference in linear IV models with
//! heteroskedastic errors, using an approximate Kronecker product
//! structure of the score covariance.

pub mod akp;
pub mod arar;
pub mod dist;
pub mod error;
pub mod linalg;
pub mod model;
pub mod selection;
pub mod sim;

#[cfg(test)]
mod testutil;

pub use akp::{ar_akp_test, conditional_cv, AkpResult, CriticalValueTable, CvMode, CvSource, TableSet};
pub use arar::{ar_ar_test, ArArConfig, ArArResult, GammaGrid, GridCenter};
pub use error::{Error, ErrorKind, Result};
pub use linalg::{nearest_kp, KpFactorization, SymMatrix};
pub use model::{build_scores, standardize_instruments, IvDataset, NullProblem, ScoreSet};
pub use selection::{ms_akp_test, Branch, CConstant, CombinedResult, SelectionConfig, SelectionMethod};
pub use sim::{
    gen_dataset, random_dgp, rep_rng, run_plan, standard_designs, DesignName, DgpSpec, SimulationPlan,
    SimulationReport, SimulationRow, TestKind,
};
