//! Analysis of two-valued input-output systems run over two-level factorial
//! designs.
//!
//! Each run of the experiment yields a `2 x 2` table of true input state
//! against judged output. The crate provides
//!
//! * the Taguchi baseline: per-run standardized SN ratios and a single-df
//!   ANOVA over orthogonal contrasts ([`snratio`]);
//! * a binomial model whose per-run log odds ratio is linear in the design
//!   contrasts, fitted by IRLS, with likelihood-ratio tests between nested
//!   hierarchical formulas ([`glm`]);
//! * full and regular fractional designs with alias structure ([`design`]),
//!   formulas and their log-linear counterparts ([`model`]);
//! * the `2^(p+2)` contingency-table view with iterative proportional
//!   fitting as an independent fitter ([`contingency`]).
//!
//! Floating-point code is generic over [`Real`] (`f32`, `f64`); the
//! reconstruction identities accept any exact [`num_traits::Num`] type.
//! The `*64` aliases below fix the scalar to `f64`.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod contingency;
pub mod design;
pub mod error;
pub mod glm;
pub mod model;
pub mod numeric;
pub mod run;
pub mod scalar;
pub mod snratio;

pub use design::{AliasStructure, Design, DesignSpec, EffectTerm, Resolution};
pub use error::{Error, Result};
pub use glm::{deviance_between, fit, lr_test, FitOptions, GlmFit, LrTestResult};
pub use model::{
    covariate_matrix, parse_formula, sufficient_statistic, to_loglinear, Correspondence,
    CovariateMatrix, LoglinearModel, ModelFormula, SufficientStatistic,
};
pub use numeric::{chi2_sf, f_sf, Table2x2, Tolerance};
pub use run::{align_runs, RunTable};
pub use scalar::Real;
pub use snratio::{AnovaTable, Correction, SnSummary};

pub type GlmFit64 = glm::GlmFit<f64>;
pub type GlmFit32 = glm::GlmFit<f32>;
pub type LrTestResult64 = glm::LrTestResult<f64>;
pub type AnovaTable64 = snratio::AnovaTable<f64>;
pub type SnSummary64 = snratio::SnSummary<f64>;
pub type ContingencyTable64 = contingency::ContingencyTable<f64>;
pub type IpfFit64 = contingency::IpfFit<f64>;
pub type Table2x2F64 = numeric::Table2x2<f64>;
