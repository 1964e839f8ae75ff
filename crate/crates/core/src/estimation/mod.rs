//! Nuisance regressions and effect estimators.

pub mod design;
pub mod estimators;
pub mod fit;
pub mod plugin;
pub mod stats;

pub use design::{DesignFormula, Term};
pub use estimators::{
    aipw, cc_estimate, dr_fate, dr_nate, mi_estimate, mim_estimate, mim_point, AipwFormulas, DrfCorrection,
    DrfFormulas, EstimateReport, Estimator, EstimatorConfig,
};
pub use fit::{fit_linear, fit_logistic, FitKind, NuisanceFit};
pub use stats::{bootstrap_se, partial_corr_test, summarize, Summary};
