//! Least squares and logistic regression on design formulas.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::design::{DesignFormula, Override};
use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Logistic fits stop once the mean gradient norm falls below this.
pub const LOGISTIC_TOL: f64 = 1e-8;
pub const LOGISTIC_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FitKind {
    LinearMean,
    LogisticProb,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NuisanceFit {
    pub kind: FitKind,
    pub formula: DesignFormula,
    /// One per term; pruned terms get 0.
    pub coefficients: Vec<f64>,
    pub pruned: Vec<String>,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    /// Residual variance for linear fits, `(X'X)^{-1}` kept for draws.
    #[serde(skip)]
    pub sigma2: f64,
    #[serde(skip)]
    pub xtx_inv: Option<DMatrix<f64>>,
    /// Term indices that survived pruning, in the order `xtx_inv` uses.
    #[serde(skip)]
    pub kept: Vec<usize>,
}

impl NuisanceFit {
    pub fn predict(&self, data: &Dataset, rows: &[usize], overrides: &[Override<'_>]) -> Result<Vec<f64>> {
        let x = self.formula.matrix(data, rows, overrides)?;
        let eta = &x * DVector::from_column_slice(&self.coefficients);
        Ok(match self.kind {
            FitKind::LinearMean => eta.iter().copied().collect(),
            FitKind::LogisticProb => eta.iter().map(|&e| logistic(e)).collect(),
        })
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Drops all-zero columns and exact duplicates of earlier columns.
fn prune(x: &DMatrix<f64>) -> Vec<usize> {
    let mut keep: Vec<usize> = Vec::new();
    for j in 0..x.ncols() {
        let c = x.column(j);
        if c.iter().all(|&v| v == 0.0) {
            continue;
        }
        if keep.iter().any(|&k| x.column(k) == c) {
            continue;
        }
        keep.push(j);
    }
    keep
}

fn select(x: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), cols.len(), |i, j| x[(i, cols[j])])
}

fn spread(p: usize, keep: &[usize], beta: &DVector<f64>) -> Vec<f64> {
    let mut out = vec![0.0; p];
    for (k, &j) in keep.iter().enumerate() {
        out[j] = beta[k];
    }
    out
}

fn pruned_labels(f: &DesignFormula, keep: &[usize]) -> Vec<String> {
    f.term_labels()
        .into_iter()
        .enumerate()
        .filter(|(j, _)| !keep.contains(j))
        .map(|(_, l)| l)
        .collect()
}

fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let scale = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularDesign(format!("{what}: normal matrix is not positive definite")))?;
    let min_pivot = chol.l().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v * v));
    if min_pivot <= scale * 1e-12 {
        return Err(Error::SingularDesign(format!("{what}: design is rank deficient")));
    }
    Ok((chol.solve(b), chol.inverse()))
}

/// Ordinary (or weighted) least squares via the normal equations.
pub fn fit_linear(
    data: &Dataset,
    formula: &DesignFormula,
    response: &str,
    rows: &[usize],
    weights: Option<&[f64]>,
) -> Result<NuisanceFit> {
    let x_full = formula.matrix(data, rows, &[])?;
    let y = response_vector(data, response, rows)?;
    fit_linear_matrix(formula, &x_full, &y, weights)
}

pub(crate) fn response_vector(data: &Dataset, response: &str, rows: &[usize]) -> Result<DVector<f64>> {
    let col = super::design::resolve_column(data, response)?;
    let vals = rows.iter().map(|&r| data.value(col, r)).collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(vals))
}

pub(crate) fn fit_linear_matrix(
    formula: &DesignFormula,
    x_full: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: Option<&[f64]>,
) -> Result<NuisanceFit> {
    let keep = prune(x_full);
    let x = select(x_full, &keep);
    if x.nrows() < x.ncols() || x.ncols() == 0 {
        return Err(Error::SingularDesign(format!(
            "{} rows for {} terms in {formula}",
            x.nrows(),
            x.ncols()
        )));
    }
    let (xtx, xty) = match weights {
        None => (x.tr_mul(&x), x.tr_mul(y)),
        Some(w) => {
            let xw = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * w[i]);
            (xw.tr_mul(&x), xw.tr_mul(y))
        }
    };
    let (beta, inv) = solve_spd(xtx, &xty, &formula.to_string())?;
    let resid = y - &x * &beta;
    let dof = (x.nrows() - x.ncols()).max(1) as f64;
    let sigma2 = resid.norm_squared() / dof;
    let gradient_norm = x.tr_mul(&resid).norm() / x.nrows() as f64;
    Ok(NuisanceFit {
        kind: FitKind::LinearMean,
        formula: formula.clone(),
        coefficients: spread(x_full.ncols(), &keep, &beta),
        pruned: pruned_labels(formula, &keep),
        iterations: 1,
        gradient_norm,
        converged: true,
        sigma2,
        xtx_inv: Some(inv),
        kept: keep,
    })
}

/// Logistic regression by iteratively reweighted least squares. Failure to
/// converge is logged as a warning and flagged on the fit.
pub fn fit_logistic(data: &Dataset, formula: &DesignFormula, response: &str, rows: &[usize]) -> Result<NuisanceFit> {
    let x_full = formula.matrix(data, rows, &[])?;
    let y = response_vector(data, response, rows)?;
    if let Some(bad) = y.iter().find(|v| **v != 0.0 && **v != 1.0) {
        return Err(Error::InvalidQuery(format!("logistic response {response} must be 0/1, found {bad}")));
    }
    let keep = prune(&x_full);
    let x = select(&x_full, &keep);
    let (n, p) = (x.nrows(), x.ncols());
    if n < p || p == 0 {
        return Err(Error::SingularDesign(format!("{n} rows for {p} terms in {formula}")));
    }
    let mut beta = DVector::zeros(p);
    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;
    let mut inv = None;
    while iterations < LOGISTIC_MAX_ITER {
        let eta = &x * &beta;
        let mu: DVector<f64> = eta.map(logistic);
        let grad = x.tr_mul(&(&y - &mu)) / n as f64;
        grad_norm = grad.norm();
        if grad_norm <= LOGISTIC_TOL {
            break;
        }
        let xw = DMatrix::from_fn(n, p, |i, j| x[(i, j)] * (mu[i] * (1.0 - mu[i])).max(1e-12));
        let h = xw.tr_mul(&x) / n as f64;
        let (step, hinv) = solve_spd(h, &grad, &formula.to_string())?;
        inv = Some(hinv);
        beta += step;
        iterations += 1;
    }
    let converged = grad_norm <= LOGISTIC_TOL;
    if !converged {
        log::warn!(
            "ConvergenceWarning: logistic fit of {response} on {formula} stopped after {iterations} iterations, gradient norm {grad_norm:.3e}"
        );
    }
    Ok(NuisanceFit {
        kind: FitKind::LogisticProb,
        formula: formula.clone(),
        coefficients: spread(x_full.ncols(), &keep, &beta),
        pruned: pruned_labels(formula, &keep),
        iterations,
        gradient_norm: grad_norm,
        converged,
        sigma2: 1.0,
        xtx_inv: inv,
        kept: keep,
    })
}
