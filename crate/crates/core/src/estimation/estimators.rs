//! Effect estimators for a binary exposure with one shifted, partly missing
//! pre-exposure variable.
//!
//! * `drn`: one-step AIPW with context-specific nuisances `Q_r`, `π_r`.
//! * `drf`: pseudo-outcome estimator of the fully-observed effect.
//! * `mim`: missing-indicator regression with g-computation.
//! * `mi`: multiple imputation, AIPW per completed dataset, Rubin pooling.
//! * `cc`: AIPW on complete cases.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{ChiSquared, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::design::{resolve_column, DesignFormula};
use super::fit::{fit_linear, fit_linear_matrix, fit_logistic, NuisanceFit};
use super::stats::{bootstrap_se, derived_rng, mean, sd};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Estimator {
    #[serde(rename = "drn")]
    DrN,
    #[serde(rename = "drf")]
    DrF,
    #[serde(rename = "mim")]
    Mim,
    #[serde(rename = "mi")]
    Mi,
    #[serde(rename = "cc")]
    Cc,
}

impl Estimator {
    pub const ALL: [Estimator; 5] = [Estimator::DrF, Estimator::DrN, Estimator::Mi, Estimator::Mim, Estimator::Cc];

    /// Display label used in reports and plots.
    pub fn label(self) -> &'static str {
        match self {
            Estimator::DrN => "DR.N",
            Estimator::DrF => "DR.F",
            Estimator::Mim => "MIM",
            Estimator::Mi => "Imp.",
            Estimator::Cc => "CC",
        }
    }

    pub fn estimate(self, data: &Dataset, cfg: &EstimatorConfig) -> Result<EstimateReport> {
        match self {
            Estimator::DrN => dr_nate(data, cfg),
            Estimator::DrF => dr_fate(data, cfg),
            Estimator::Mim => mim_estimate(data, cfg),
            Estimator::Mi => mi_estimate(data, cfg),
            Estimator::Cc => cc_estimate(data, cfg),
        }
    }

    /// Point estimate only; skips bootstrap standard errors.
    pub fn point(self, data: &Dataset, cfg: &EstimatorConfig) -> Result<f64> {
        match self {
            Estimator::Mim => mim_point(data, cfg),
            other => Ok(other.estimate(data, cfg)?.point),
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::DrN => "drn",
            Estimator::DrF => "drf",
            Estimator::Mim => "mim",
            Estimator::Mi => "mi",
            Estimator::Cc => "cc",
        })
    }
}

impl FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "drn" | "dr.n" => Ok(Estimator::DrN),
            "drf" | "dr.f" => Ok(Estimator::DrF),
            "mim" => Ok(Estimator::Mim),
            "mi" | "imp" | "imp." => Ok(Estimator::Mi),
            "cc" => Ok(Estimator::Cc),
            _ => Err(Error::Parse(format!("unknown estimator {s:?}; expected drn, drf, mim, mi or cc"))),
        }
    }
}

/// Orientation of the correction term in the fully-observed estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrfCorrection {
    /// `τ(W) + R/P(R=1|W) · (τ(W) − Δ_a Q1)`
    #[default]
    TauResidual,
    /// `τ(W) + R/P(R=1|W) · (δ̃ − τ(W))`
    PseudoResidual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AipwFormulas {
    pub outcome: DesignFormula,
    pub propensity: DesignFormula,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrfFormulas {
    /// `Q1(W, Y0, A)`, fitted on complete rows.
    pub outcome: DesignFormula,
    /// `π1(W, Y0)`, fitted on complete rows.
    pub propensity: DesignFormula,
    /// Meta-regression of the pseudo-outcomes.
    pub tau: DesignFormula,
    /// `P(R = 1 | W)`, fitted on all rows.
    pub missingness: DesignFormula,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub exposure: String,
    pub outcome: String,
    pub indicator: String,
    /// The partly missing variable; read from its own column or `<name>_obs`.
    pub shifted: String,
    pub nate: AipwFormulas,
    pub drf: DrfFormulas,
    pub mim: DesignFormula,
    /// Nuisances for `mi` and `cc`.
    pub aipw: AipwFormulas,
    /// Linear-Gaussian imputation model for the shifted variable.
    pub imputation: DesignFormula,
    pub trim_eps: f64,
    /// Largest share of clipped propensities accepted before giving up.
    pub max_trim_fraction: f64,
    pub bootstrap_b: usize,
    pub imputations: usize,
    pub seed: u64,
    pub cross_fit: bool,
    pub drf_correction: DrfCorrection,
}

fn f(s: &str) -> DesignFormula {
    s.parse().expect("built-in formula")
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self::appendix_a()
    }
}

impl EstimatorConfig {
    /// Correctly specified nuisances for the benchmark SCM.
    pub fn appendix_a() -> Self {
        EstimatorConfig {
            exposure: "A".into(),
            outcome: "Y1".into(),
            indicator: "R_Y0".into(),
            shifted: "Y0".into(),
            nate: AipwFormulas {
                outcome: f("1 + W + A + A:W + W^2 + R_Y0 * (1 + W + A + Y0 + A:W + A:Y0)"),
                propensity: f("1 + W + R_Y0 * (1 + W + Y0)"),
            },
            drf: DrfFormulas {
                outcome: f("1 + W + A + Y0 + A:W + A:Y0 + W^2"),
                propensity: f("1 + W + Y0"),
                tau: f("1 + W + W^2"),
                missingness: f("1 + W"),
            },
            mim: f("1 + W + A + R_Y0 + W:R_Y0 + A:R_Y0 + W^2 + R_Y0 * (Y0)"),
            aipw: AipwFormulas {
                outcome: f("1 + W + A + Y0 + A:W + A:Y0 + W^2"),
                propensity: f("1 + W + Y0"),
            },
            imputation: f("1 + W + A + Y1"),
            trim_eps: 0.01,
            max_trim_fraction: 0.1,
            bootstrap_b: 200,
            imputations: 10,
            seed: 0,
            cross_fit: false,
            drf_correction: DrfCorrection::TauResidual,
        }
    }

    pub fn named(name: &str) -> Result<Self> {
        match name {
            "appendixA" | "appendix_a" => Ok(Self::appendix_a()),
            other => Err(Error::InvalidQuery(format!("unknown config {other:?}; available: appendixA"))),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: EstimatorConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.trim_eps) {
            return Err(Error::InvalidQuery(format!("trim_eps must be in [0, 0.5), got {}", self.trim_eps)));
        }
        if !(0.0..=1.0).contains(&self.max_trim_fraction) {
            return Err(Error::InvalidQuery("max_trim_fraction must be in [0, 1]".into()));
        }
        if self.imputations < 2 {
            return Err(Error::InvalidQuery("multiple imputation needs at least 2 imputations".into()));
        }
        Ok(())
    }
}

pub type Diagnostics = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub estimator: String,
    pub point: f64,
    pub se: f64,
    pub ci95: [f64; 2],
    pub n_used: usize,
    pub diagnostics: Diagnostics,
}

impl EstimateReport {
    fn new(est: Estimator, point: f64, se: f64, n_used: usize, diagnostics: Diagnostics) -> Self {
        EstimateReport {
            estimator: est.label().into(),
            point,
            se,
            ci95: [point - 1.96 * se, point + 1.96 * se],
            n_used,
            diagnostics,
        }
    }
}

fn indicator_rows(data: &Dataset, cfg: &EstimatorConfig, value: f64) -> Result<Vec<usize>> {
    let r = data.raw_column(&cfg.indicator)?;
    Ok((0..r.len()).filter(|&i| r[i] == value).collect())
}

fn column_values(data: &Dataset, var: &str, rows: &[usize]) -> Result<Vec<f64>> {
    let col = resolve_column(data, var)?;
    rows.iter().map(|&i| data.value(col, i)).collect()
}

/// Clips to `[eps, 1 - eps]` and counts the clipped entries.
fn trim(p: &mut [f64], eps: f64) -> usize {
    let mut clipped = 0;
    for v in p.iter_mut() {
        let c = v.clamp(eps, 1.0 - eps);
        if c != *v {
            clipped += 1;
            *v = c;
        }
    }
    clipped
}

fn check_positivity(clipped: usize, total: usize, cfg: &EstimatorConfig, what: &str) -> Result<()> {
    if total > 0 && clipped as f64 > cfg.max_trim_fraction * total as f64 {
        return Err(Error::PositivityViolation {
            count: clipped,
            total,
            detail: format!("{what} outside [{}, {}]", cfg.trim_eps, 1.0 - cfg.trim_eps),
        });
    }
    Ok(())
}

fn fit_summary(fit: &NuisanceFit) -> Value {
    json!({
        "formula": fit.formula.to_string(),
        "iterations": fit.iterations,
        "gradient_norm": fit.gradient_norm,
        "converged": fit.converged,
        "pruned": fit.pruned,
    })
}

struct AipwPieces {
    /// Per-row one-step contributions on the evaluation rows.
    psi: Vec<f64>,
    /// `Δ_a Q` on the evaluation rows.
    delta_q: Vec<f64>,
    pi_min: f64,
    pi_max: f64,
    clipped: usize,
    outcome: NuisanceFit,
    propensity: NuisanceFit,
}

/// Fits both nuisances on `fit_rows` and evaluates the AIPW contributions
/// `Δ_a Q + (A − π)/(π(1 − π)) · (Y − Q(A))` on `eval_rows`.
fn aipw_pieces(
    data: &Dataset,
    fit_rows: &[usize],
    eval_rows: &[usize],
    f: &AipwFormulas,
    cfg: &EstimatorConfig,
) -> Result<AipwPieces> {
    let a = cfg.exposure.as_str();
    let outcome = fit_linear(data, &f.outcome, &cfg.outcome, fit_rows, None)?;
    let propensity = fit_logistic(data, &f.propensity, a, fit_rows)?;
    let q1 = outcome.predict(data, eval_rows, &[(a, 1.0)])?;
    let q0 = outcome.predict(data, eval_rows, &[(a, 0.0)])?;
    let qa = outcome.predict(data, eval_rows, &[])?;
    let mut pi = propensity.predict(data, eval_rows, &[])?;
    let pi_min = pi.iter().copied().fold(f64::INFINITY, f64::min);
    let pi_max = pi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let clipped = trim(&mut pi, cfg.trim_eps);
    let av = column_values(data, a, eval_rows)?;
    let yv = column_values(data, &cfg.outcome, eval_rows)?;
    let mut psi = Vec::with_capacity(eval_rows.len());
    let mut delta_q = Vec::with_capacity(eval_rows.len());
    for i in 0..eval_rows.len() {
        let d = q1[i] - q0[i];
        let w = (av[i] - pi[i]) / (pi[i] * (1.0 - pi[i]));
        delta_q.push(d);
        psi.push(d + w * (yv[i] - qa[i]));
    }
    Ok(AipwPieces {
        psi,
        delta_q,
        pi_min,
        pi_max,
        clipped,
        outcome,
        propensity,
    })
}

fn aipw_diagnostics(p: &AipwPieces) -> Diagnostics {
    BTreeMap::from([
        ("propensity_min".into(), json!(p.pi_min)),
        ("propensity_max".into(), json!(p.pi_max)),
        ("trimmed".into(), json!(p.clipped)),
        ("outcome_fit".into(), fit_summary(&p.outcome)),
        ("propensity_fit".into(), fit_summary(&p.propensity)),
    ])
}

fn mean_and_se(psi: &[f64]) -> (f64, f64) {
    (mean(psi), sd(psi) / (psi.len() as f64).sqrt())
}

/// Plain AIPW on `rows` with the given nuisance formulas.
pub fn aipw(data: &Dataset, rows: &[usize], f: &AipwFormulas, cfg: &EstimatorConfig) -> Result<(f64, f64, Diagnostics)> {
    if rows.is_empty() {
        return Err(Error::InsufficientData("AIPW on zero rows".into()));
    }
    let p = aipw_pieces(data, rows, rows, f, cfg)?;
    check_positivity(p.clipped, rows.len(), cfg, "propensity")?;
    let (point, se) = mean_and_se(&p.psi);
    Ok((point, se, aipw_diagnostics(&p)))
}

fn context_counts(data: &Dataset, cfg: &EstimatorConfig) -> Result<Value> {
    let r0 = indicator_rows(data, cfg, 0.0)?.len();
    let r1 = indicator_rows(data, cfg, 1.0)?.len();
    Ok(json!({ format!("{}=0", cfg.indicator): r0, format!("{}=1", cfg.indicator): r1 }))
}

/// One-step estimator of the natural-context effect, with context-specific
/// outcome and propensity models. Rows with the indicator at 0 only ever
/// evaluate the context-free part of each formula.
pub fn dr_nate(data: &Dataset, cfg: &EstimatorConfig) -> Result<EstimateReport> {
    let n = data.n_rows();
    if n == 0 {
        return Err(Error::InsufficientData("empty dataset".into()));
    }
    let all: Vec<usize> = (0..n).collect();
    let (psi, mut diag, clipped) = if cfg.cross_fit {
        let mut perm = all.clone();
        perm.shuffle(&mut derived_rng(cfg.seed, u64::MAX));
        let half = n / 2;
        let (fa, fb) = perm.split_at(half);
        let (mut fa, mut fb) = (fa.to_vec(), fb.to_vec());
        fa.sort_unstable();
        fb.sort_unstable();
        let pa = aipw_pieces(data, &fb, &fa, &cfg.nate, cfg)?;
        let pb = aipw_pieces(data, &fa, &fb, &cfg.nate, cfg)?;
        let mut psi = pa.psi.clone();
        psi.extend(&pb.psi);
        let mut diag = aipw_diagnostics(&pa);
        diag.insert("cross_fit_folds".into(), json!(2));
        diag.insert("trimmed".into(), json!(pa.clipped + pb.clipped));
        (psi, diag, pa.clipped + pb.clipped)
    } else {
        let p = aipw_pieces(data, &all, &all, &cfg.nate, cfg)?;
        let c = p.clipped;
        (p.psi.clone(), aipw_diagnostics(&p), c)
    };
    check_positivity(clipped, n, cfg, "propensity")?;
    diag.insert("context_counts".into(), context_counts(data, cfg)?);
    let (point, se) = mean_and_se(&psi);
    Ok(EstimateReport::new(Estimator::DrN, point, se, n, diag))
}

/// Pseudo-outcome estimator of the fully-observed effect.
pub fn dr_fate(data: &Dataset, cfg: &EstimatorConfig) -> Result<EstimateReport> {
    let n = data.n_rows();
    let r1 = indicator_rows(data, cfg, 1.0)?;
    if r1.is_empty() {
        return Err(Error::InsufficientData(format!("no rows with {} = 1", cfg.indicator)));
    }
    let forms = AipwFormulas {
        outcome: cfg.drf.outcome.clone(),
        propensity: cfg.drf.propensity.clone(),
    };
    let p = aipw_pieces(data, &r1, &r1, &forms, cfg)?;
    check_positivity(p.clipped, r1.len(), cfg, "complete-case propensity")?;
    let x_tau = cfg.drf.tau.matrix(data, &r1, &[])?;
    let tau_fit = fit_linear_matrix(&cfg.drf.tau, &x_tau, &DVector::from_column_slice(&p.psi), None)?;
    let all: Vec<usize> = (0..n).collect();
    let tau = tau_fit.predict(data, &all, &[])?;

    let (mut p_obs, miss_fit) = if r1.len() == n {
        (vec![1.0; n], None)
    } else {
        let fit = fit_logistic(data, &cfg.drf.missingness, &cfg.indicator, &all)?;
        (fit.predict(data, &all, &[])?, Some(fit))
    };
    let mut low = 0;
    for v in p_obs.iter_mut() {
        if *v < cfg.trim_eps {
            *v = cfg.trim_eps;
            low += 1;
        }
    }
    check_positivity(low, n, cfg, "P(R=1|W)")?;

    let mut psi = tau.clone();
    for (k, &i) in r1.iter().enumerate() {
        let correction = match cfg.drf_correction {
            DrfCorrection::TauResidual => tau[i] - p.delta_q[k],
            DrfCorrection::PseudoResidual => p.psi[k] - tau[i],
        };
        psi[i] += correction / p_obs[i];
    }
    let phi = mean(&psi);
    let se = psi.iter().map(|v| (v - phi).powi(2)).sum::<f64>().sqrt() / n as f64;
    let mut diag = aipw_diagnostics(&p);
    diag.insert("tau_fit".into(), fit_summary(&tau_fit));
    if let Some(m) = &miss_fit {
        diag.insert("missingness_fit".into(), fit_summary(m));
    }
    diag.insert("missingness_trimmed".into(), json!(low));
    diag.insert("correction".into(), json!(cfg.drf_correction));
    diag.insert("context_counts".into(), context_counts(data, cfg)?);
    Ok(EstimateReport::new(Estimator::DrF, phi, se, n, diag))
}

fn mim_fit(data: &Dataset, cfg: &EstimatorConfig) -> Result<(f64, NuisanceFit)> {
    let all: Vec<usize> = (0..data.n_rows()).collect();
    if all.is_empty() {
        return Err(Error::InsufficientData("empty dataset".into()));
    }
    let fit = fit_linear(data, &cfg.mim, &cfg.outcome, &all, None)?;
    let a = cfg.exposure.as_str();
    let q1 = fit.predict(data, &all, &[(a, 1.0)])?;
    let q0 = fit.predict(data, &all, &[(a, 0.0)])?;
    let d: Vec<f64> = q1.iter().zip(&q0).map(|(x, y)| x - y).collect();
    Ok((mean(&d), fit))
}

/// Missing-indicator regression averaged over the empirical covariates.
pub fn mim_point(data: &Dataset, cfg: &EstimatorConfig) -> Result<f64> {
    Ok(mim_fit(data, cfg)?.0)
}

pub fn mim_estimate(data: &Dataset, cfg: &EstimatorConfig) -> Result<EstimateReport> {
    let (point, fit) = mim_fit(data, cfg)?;
    let se = bootstrap_se(|d| mim_point(d, cfg), data, cfg.bootstrap_b, cfg.seed)?;
    let diag = BTreeMap::from([
        ("outcome_fit".into(), fit_summary(&fit)),
        ("bootstrap_b".into(), json!(cfg.bootstrap_b)),
    ]);
    Ok(EstimateReport::new(Estimator::Mim, point, se, data.n_rows(), diag))
}

/// AIPW on rows with the indicator at 1.
pub fn cc_estimate(data: &Dataset, cfg: &EstimatorConfig) -> Result<EstimateReport> {
    let r1 = indicator_rows(data, cfg, 1.0)?;
    if r1.is_empty() {
        return Err(Error::InsufficientData(format!("no complete cases ({} = 1)", cfg.indicator)));
    }
    let (point, se, diag) = aipw(data, &r1, &cfg.aipw, cfg)?;
    Ok(EstimateReport::new(Estimator::Cc, point, se, r1.len(), diag))
}

/// Draws imputation coefficients and residual scale from their approximate
/// posterior, then fills the masked cells.
fn impute_once(
    fit: &NuisanceFit,
    x_missing: &DMatrix<f64>,
    n_complete: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let keep = &fit.kept;
    let dof = (n_complete - keep.len()).max(1) as f64;
    let chi: f64 = rng.sample(ChiSquared::new(dof).map_err(|e| Error::InvalidQuery(e.to_string()))?);
    let sigma2 = fit.sigma2 * dof / chi;
    let inv = fit.xtx_inv.as_ref().expect("linear fit keeps its inverse");
    let chol = (inv * sigma2)
        .cholesky()
        .ok_or_else(|| Error::SingularDesign("imputation covariance is not positive definite".into()))?;
    let z = DVector::from_fn(keep.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let dev = chol.l() * z;
    let mut beta = DVector::from_column_slice(&fit.coefficients);
    for (k, &j) in keep.iter().enumerate() {
        beta[j] += dev[k];
    }
    let mean = x_missing * beta;
    let sd = sigma2.sqrt();
    Ok(mean.iter().map(|m| m + sd * rng.sample::<f64, _>(StandardNormal)).collect())
}

/// Multiple imputation of the shifted variable from a linear-Gaussian model
/// fitted on complete rows; AIPW on each completed dataset; Rubin pooling.
pub fn mi_estimate(data: &Dataset, cfg: &EstimatorConfig) -> Result<EstimateReport> {
    cfg.validate()?;
    let r1 = indicator_rows(data, cfg, 1.0)?;
    let r0 = indicator_rows(data, cfg, 0.0)?;
    if r1.is_empty() {
        return Err(Error::InsufficientData(format!("no complete cases ({} = 1)", cfg.indicator)));
    }
    let col = resolve_column(data, &cfg.shifted)?.to_string();
    let fit = fit_linear(data, &cfg.imputation, &cfg.shifted, &r1, None)?;
    let x_missing = cfg.imputation.matrix(data, &r0, &[])?;
    let all: Vec<usize> = (0..data.n_rows()).collect();
    let m = cfg.imputations;
    let runs = par::map_indices(m, |k| -> Result<(f64, f64)> {
        let mut rng = derived_rng(cfg.seed, k as u64);
        let draws = impute_once(&fit, &x_missing, r1.len(), &mut rng)?;
        let mut filled = data.raw_column(&col)?.to_vec();
        for (&i, v) in r0.iter().zip(draws) {
            filled[i] = v;
        }
        let completed = data.clone().with_column(&col, filled)?;
        let (point, se, _) = aipw(&completed, &all, &cfg.aipw, cfg)?;
        Ok((point, se * se))
    });
    let runs: Vec<(f64, f64)> = runs.into_iter().collect::<Result<_>>()?;
    let points: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let qbar = mean(&points);
    let ubar = runs.iter().map(|r| r.1).sum::<f64>() / m as f64;
    let between = sd(&points).powi(2);
    let total = ubar + (1.0 + 1.0 / m as f64) * between;
    let diag = BTreeMap::from([
        ("imputations".into(), json!(m)),
        ("within_variance".into(), json!(ubar)),
        ("between_variance".into(), json!(between)),
        ("imputed_rows".into(), json!(r0.len())),
        ("imputation_fit".into(), fit_summary(&fit)),
    ]);
    Ok(EstimateReport::new(Estimator::Mi, qbar, total.sqrt(), data.n_rows(), diag))
}
