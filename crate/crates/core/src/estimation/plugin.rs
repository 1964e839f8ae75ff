//! Plug-in evaluation of symbolic estimands on observed data.
//!
//! Every conditional expectation is a least-squares fit on a degree-2
//! polynomial basis of its conditioning variables, fully interacted with the
//! exposure when the exposure is set to `a`. Integrals over a conditional
//! distribution are sequential regressions of the inner values on the outer
//! conditioning variables; with no such variables they are plain averages.

use nalgebra::DVector;

use super::design::{resolve_column, DesignFormula};
use super::fit::fit_linear_matrix;
use super::stats::{mean, poly2};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimand::{Cond, Estimand};
use crate::graph::NodeId;

/// Free variables, fixed conditions, and whether the exposure is set to `a`.
type Split<'c> = (Vec<&'c NodeId>, Vec<(&'c NodeId, f64)>, bool);

pub struct Plugin<'d> {
    data: &'d Dataset,
    exposure: String,
}

/// Evaluates `estimand` on `data`; the result is a number.
pub fn evaluate(estimand: &Estimand, data: &Dataset, exposure: &str) -> Result<f64> {
    Plugin::new(data, exposure).value(estimand)
}

impl<'d> Plugin<'d> {
    pub fn new(data: &'d Dataset, exposure: &str) -> Self {
        Plugin {
            data,
            exposure: exposure.to_string(),
        }
    }

    pub fn value(&self, e: &Estimand) -> Result<f64> {
        let v = self.eval(e, None)?;
        let finite: Vec<f64> = v.into_iter().filter(|x| x.is_finite()).collect();
        if finite.is_empty() {
            return Err(Error::InsufficientData("estimand undefined on every row".into()));
        }
        Ok(mean(&finite))
    }

    fn column(&self, n: &NodeId) -> Result<&'d [f64]> {
        self.data.raw_column(resolve_column(self.data, n.as_str())?)
    }

    /// Rows where every listed variable is observed and every fixed
    /// condition holds.
    fn rows(&self, vars: &[&NodeId], fixed: &[(&NodeId, f64)]) -> Result<Vec<usize>> {
        let vcols = vars.iter().map(|v| self.column(v)).collect::<Result<Vec<_>>>()?;
        let fcols = fixed
            .iter()
            .map(|(v, x)| Ok((self.column(v)?, *x)))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..self.data.n_rows())
            .filter(|&i| vcols.iter().all(|c| !c[i].is_nan()) && fcols.iter().all(|(c, x)| c[i] == *x))
            .collect())
    }

    fn split<'c>(&self, given: &'c [Cond], a: Option<f64>) -> Result<Split<'c>> {
        let mut vars = Vec::new();
        let mut fixed = Vec::new();
        let mut treat = false;
        for c in given {
            match c {
                Cond::Var(v) => vars.push(v),
                Cond::Fixed(v, x) => fixed.push((v, f64::from(*x))),
                Cond::Treat(v) => {
                    if v.as_str() != self.exposure {
                        return Err(Error::InvalidQuery(format!("{v} is set to a level but is not the exposure")));
                    }
                    if a.is_none() {
                        return Err(Error::InvalidQuery(format!("{v}=a appears outside Δ_a")));
                    }
                    treat = true;
                }
            }
        }
        Ok((vars, fixed, treat))
    }

    fn basis(vars: &[&NodeId], interact: Option<&str>) -> DesignFormula {
        let names: Vec<&str> = vars.iter().map(|v| v.as_str()).collect();
        let base = poly2(&names);
        let Some(a) = interact else {
            return base;
        };
        let mut terms: Vec<String> = base.terms.iter().map(ToString::to_string).collect();
        terms.extend(base.terms.iter().map(|t| {
            if t.0.is_empty() {
                a.to_string()
            } else {
                format!("{a}:{t}")
            }
        }));
        terms.join(" + ").parse().expect("generated formula")
    }

    /// Per-row values, NaN where the expression is undefined.
    fn eval(&self, e: &Estimand, a: Option<f64>) -> Result<Vec<f64>> {
        let n = self.data.n_rows();
        match e {
            Estimand::Sum(terms) => {
                let mut acc = vec![0.0; n];
                for t in terms {
                    for (x, y) in acc.iter_mut().zip(self.eval(t, a)?) {
                        *x += y;
                    }
                }
                Ok(acc)
            }
            Estimand::Weighted { events, body } => {
                let fixed: Vec<(&NodeId, f64)> = events.iter().map(|(v, x)| (v, f64::from(*x))).collect();
                let p = self.rows(&[], &fixed)?.len() as f64 / n as f64;
                Ok(self.eval(body, a)?.into_iter().map(|v| p * v).collect())
            }
            Estimand::Delta(body) => {
                let one = self.eval(body, Some(1.0))?;
                let zero = self.eval(body, Some(0.0))?;
                Ok(one.iter().zip(&zero).map(|(x, y)| x - y).collect())
            }
            Estimand::CondExp { outcome, given } => {
                let (vars, mut fixed, treat) = self.split(given, a)?;
                let exposure = NodeId::from(self.exposure.as_str());
                let interact = treat.then_some(self.exposure.as_str());
                let mut needed = vars.clone();
                needed.push(outcome);
                if treat {
                    needed.push(&exposure);
                }
                fixed.retain(|(v, _)| !vars.contains(v));
                let fit_rows = self.rows(&needed, &fixed)?;
                let formula = Self::basis(&vars, interact);
                if fit_rows.len() < formula.n_terms() {
                    return Err(Error::InsufficientData(format!(
                        "{} rows to estimate {e}",
                        fit_rows.len()
                    )));
                }
                let x = formula.matrix(self.data, &fit_rows, &[])?;
                let y = self.column(outcome)?;
                let yv = DVector::from_iterator(fit_rows.len(), fit_rows.iter().map(|&i| y[i]));
                let fit = fit_linear_matrix(&formula, &x, &yv, None)?;
                let pred_rows = self.rows(&vars, &[])?;
                let overrides: Vec<(&str, f64)> = match (treat, a) {
                    (true, Some(level)) => vec![(self.exposure.as_str(), level)],
                    _ => Vec::new(),
                };
                let pred = fit.predict(self.data, &pred_rows, &overrides)?;
                let mut out = vec![f64::NAN; n];
                for (&i, v) in pred_rows.iter().zip(pred) {
                    out[i] = v;
                }
                Ok(out)
            }
            Estimand::Integrate { vars: _, given, body } => {
                let inner = self.eval(body, a)?;
                let (outer, mut fixed, treat) = self.split(given, a)?;
                let exposure = NodeId::from(self.exposure.as_str());
                if let (true, Some(level)) = (treat, a) {
                    fixed.push((&exposure, level));
                }
                let rows = self.rows(&outer, &fixed)?;
                self.integrate(inner, &outer, rows)
            }
        }
    }

    fn integrate(&self, inner: Vec<f64>, outer: &[&NodeId], rows: Vec<usize>) -> Result<Vec<f64>> {
        let n = self.data.n_rows();
        let rows: Vec<usize> = rows.into_iter().filter(|&i| inner[i].is_finite()).collect();
        if rows.is_empty() {
            return Err(Error::InsufficientData("no rows to integrate over".into()));
        }
        if outer.is_empty() {
            let m = mean(&rows.iter().map(|&i| inner[i]).collect::<Vec<_>>());
            return Ok(vec![m; n]);
        }
        let formula = Self::basis(outer, None);
        let x = formula.matrix(self.data, &rows, &[])?;
        let yv = DVector::from_iterator(rows.len(), rows.iter().map(|&i| inner[i]));
        let fit = fit_linear_matrix(&formula, &x, &yv, None)?;
        let pred_rows = self.rows(outer, &[])?;
        let pred = fit.predict(self.data, &pred_rows, &[])?;
        let mut out = vec![f64::NAN; n];
        for (&i, v) in pred_rows.iter().zip(pred) {
            out[i] = v;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> Dataset {
        // Y = 1 + 2A + W exactly; R masks nothing relevant.
        let w: Vec<f64> = (0..40).map(|i| (i % 5) as f64).collect();
        let a: Vec<f64> = (0..40).map(|i| ((i / 5) % 2) as f64).collect();
        let r: Vec<f64> = (0..40).map(|i| f64::from(i % 3 != 0)).collect();
        let y: Vec<f64> = w.iter().zip(&a).map(|(w, a)| 1.0 + 2.0 * a + w).collect();
        Dataset::from_columns(vec![("W".into(), w), ("A".into(), a), ("R".into(), r), ("Y".into(), y)]).unwrap()
    }

    #[test]
    fn backdoor_contrast_is_exact_for_a_linear_outcome() {
        let e = Estimand::parse("E_W Δ_a E[Y|W,A=a]").unwrap();
        assert!((evaluate(&e, &data(), "A").unwrap() - 2.0).abs() < 1e-9);
        let w = Estimand::parse("P(R=0) Δ_a E[Y|A=a,R=0] + P(R=1) Δ_a E[Y|A=a,R=1]").unwrap();
        assert!((evaluate(&w, &data(), "A").unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn unbound_level_is_rejected() {
        let e = Estimand::parse("E[Y|W,A=a]").unwrap();
        assert!(evaluate(&e, &data(), "A").is_err());
    }
}
