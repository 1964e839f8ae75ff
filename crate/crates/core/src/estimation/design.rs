//! Design formulas: monomial terms over named columns, optionally with a
//! context block whose terms are multiplied by an indicator.
//!
//! String form: `1 + W + A + A:W + W^2 + R_Y0 * (1 + W + Y0 + A:Y0)`.
//! Context terms are evaluated only on rows where the indicator is 1; on the
//! other rows they are zero and their variables are never read.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Product of variables raised to positive powers; empty is the intercept.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Term(pub Vec<(String, u32)>);

impl Term {
    pub fn intercept() -> Self {
        Term(Vec::new())
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|(v, _)| v.as_str())
    }

    pub fn mentions(&self, var: &str) -> bool {
        self.vars().any(|v| v == var)
    }
}

impl FromStr for Term {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "1" {
            return Ok(Term::intercept());
        }
        let mut factors: Vec<(String, u32)> = Vec::new();
        for f in s.split(':') {
            let (v, p) = match f.split_once('^') {
                Some((v, p)) => (
                    v.trim(),
                    p.trim()
                        .parse::<u32>()
                        .ok()
                        .filter(|&p| p >= 1)
                        .ok_or_else(|| Error::Parse(format!("bad power in term {s:?}")))?,
                ),
                None => (f.trim(), 1),
            };
            if v.is_empty() || v.contains(|c: char| c.is_whitespace() || "()*+".contains(c)) {
                return Err(Error::Parse(format!("bad variable in term {s:?}")));
            }
            match factors.iter_mut().find(|(n, _)| n == v) {
                Some((_, q)) => *q += p,
                None => factors.push((v.to_string(), p)),
            }
        }
        Ok(Term(factors))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("1");
        }
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|(v, p)| if *p == 1 { v.clone() } else { format!("{v}^{p}") })
            .collect();
        f.write_str(&parts.join(":"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextBlock {
    pub indicator: String,
    pub terms: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignFormula {
    pub terms: Vec<Term>,
    pub context: Option<ContextBlock>,
}

fn parse_terms(s: &str) -> Result<Vec<Term>> {
    let terms: Vec<Term> = s
        .split('+')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    let mut sorted = terms.clone();
    sorted.sort();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Parse(format!("duplicate term {}", w[0])));
    }
    Ok(terms)
}

impl FromStr for DesignFormula {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (base, context) = match s.find('(') {
            None => (s, None),
            Some(open) => {
                let head = &s[..open];
                let star = head
                    .rfind('*')
                    .ok_or_else(|| Error::Parse(format!("context block needs `R * (...)`: {s:?}")))?;
                let before = &head[..star];
                let (base, ind) = match before.rfind('+') {
                    Some(p) => (&before[..p], before[p + 1..].trim()),
                    None => ("", before.trim()),
                };
                let close = s
                    .rfind(')')
                    .filter(|&c| c > open && s[c + 1..].trim().is_empty())
                    .ok_or_else(|| Error::Parse(format!("unbalanced context block: {s:?}")))?;
                if ind.is_empty() {
                    return Err(Error::Parse("context block needs an indicator".into()));
                }
                let terms = parse_terms(&s[open + 1..close])?;
                (
                    base,
                    Some(ContextBlock {
                        indicator: ind.to_string(),
                        terms,
                    }),
                )
            }
        };
        let f = DesignFormula {
            terms: parse_terms(base)?,
            context,
        };
        if f.n_terms() == 0 {
            return Err(Error::Parse("formula has no terms".into()));
        }
        Ok(f)
    }
}

impl fmt::Display for DesignFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |ts: &[Term]| ts.iter().map(Term::to_string).collect::<Vec<_>>().join(" + ");
        let base = join(&self.terms);
        match &self.context {
            None => f.write_str(&base),
            Some(c) if base.is_empty() => write!(f, "{} * ({})", c.indicator, join(&c.terms)),
            Some(c) => write!(f, "{base} + {} * ({})", c.indicator, join(&c.terms)),
        }
    }
}

impl Serialize for DesignFormula {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for DesignFormula {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Finds the column for a variable: its own name, or the `_obs` proxy.
pub fn resolve_column<'d>(data: &'d Dataset, var: &str) -> Result<&'d str> {
    let proxy = format!("{var}_obs");
    data.names()
        .iter()
        .find(|n| n.as_str() == var)
        .or_else(|| data.names().iter().find(|n| **n == proxy))
        .map(String::as_str)
        .ok_or_else(|| Error::UnknownColumn(var.to_string()))
}

/// Fixed value for a variable, replacing its column (counterfactual `A = a`).
pub type Override<'a> = (&'a str, f64);

struct Source<'d> {
    name: &'d str,
    values: &'d [f64],
    fixed: Option<f64>,
}

impl Source<'_> {
    fn get(&self, row: usize) -> Result<f64> {
        if let Some(v) = self.fixed {
            return Ok(v);
        }
        let v = self.values[row];
        if v.is_nan() {
            Err(Error::MaskedCell {
                column: self.name.to_string(),
                row,
            })
        } else {
            Ok(v)
        }
    }
}

impl DesignFormula {
    pub fn new(terms: &str) -> Result<Self> {
        terms.parse()
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len() + self.context.as_ref().map_or(0, |c| c.terms.len())
    }

    pub fn term_labels(&self) -> Vec<String> {
        let mut out: Vec<String> = self.terms.iter().map(Term::to_string).collect();
        if let Some(c) = &self.context {
            out.extend(c.terms.iter().map(|t| format!("{}*{t}", c.indicator)));
        }
        out
    }

    /// Design matrix over `rows`. Reading a masked cell is an error.
    pub fn matrix(&self, data: &Dataset, rows: &[usize], overrides: &[Override<'_>]) -> Result<DMatrix<f64>> {
        let source = |var: &str| -> Result<Source<'_>> {
            if let Some((_, v)) = overrides.iter().find(|(n, _)| *n == var) {
                return Ok(Source {
                    name: "",
                    values: &[],
                    fixed: Some(*v),
                });
            }
            let col = resolve_column(data, var)?;
            Ok(Source {
                name: col,
                values: data.raw_column(col)?,
                fixed: None,
            })
        };
        let prep = |ts: &[Term]| -> Result<Vec<Vec<(Source<'_>, i32)>>> {
            ts.iter()
                .map(|t| t.0.iter().map(|(v, p)| Ok((source(v)?, *p as i32))).collect())
                .collect()
        };
        let base = prep(&self.terms)?;
        let ctx = match &self.context {
            Some(c) => {
                let gate = match overrides.iter().find(|(n, _)| *n == c.indicator) {
                    Some((_, v)) => Some(Source {
                        name: "",
                        values: &[],
                        fixed: Some(*v),
                    }),
                    None if data.has_column(&c.indicator) => Some(source(&c.indicator)?),
                    None => None,
                };
                Some((gate, prep(&c.terms)?))
            }
            None => None,
        };
        let p = self.n_terms();
        let mut m = DMatrix::zeros(rows.len(), p);
        let eval = |t: &[(Source<'_>, i32)], row: usize| -> Result<f64> {
            t.iter().try_fold(1.0, |acc, (s, pw)| Ok(acc * s.get(row)?.powi(*pw)))
        };
        for (i, &row) in rows.iter().enumerate() {
            for (j, t) in base.iter().enumerate() {
                m[(i, j)] = eval(t, row)?;
            }
            if let Some((gate, ts)) = &ctx {
                let on = match gate {
                    Some(g) => g.get(row)?,
                    None => 1.0,
                };
                if on != 0.0 {
                    for (j, t) in ts.iter().enumerate() {
                        m[(i, base.len() + j)] = on * eval(t, row)?;
                    }
                }
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        let s = "1 + W + A:W + W^2 + R_Y0 * (1 + Y0 + A:Y0)";
        let f: DesignFormula = s.parse().unwrap();
        assert_eq!(f.to_string(), s);
        assert_eq!(f.n_terms(), 7);
        let g: DesignFormula = "R * (1 + X)".parse().unwrap();
        assert_eq!(g.terms.len(), 0);
        assert!("1 + W + W".parse::<DesignFormula>().is_err());
        assert!("1 + W^0".parse::<DesignFormula>().is_err());
        assert!("".parse::<DesignFormula>().is_err());
        assert_eq!("W:W".parse::<Term>().unwrap().to_string(), "W^2");
    }

    #[test]
    fn context_block_never_reads_masked_cells() {
        let d = Dataset::from_columns(vec![
            ("W".into(), vec![1.0, 2.0]),
            ("Y0_obs".into(), vec![f64::NAN, 3.0]),
            ("R_Y0".into(), vec![0.0, 1.0]),
        ])
        .unwrap();
        let f: DesignFormula = "1 + W + R_Y0 * (1 + Y0)".parse().unwrap();
        let m = f.matrix(&d, &[0, 1], &[]).unwrap();
        assert_eq!(m.row(0).iter().copied().collect::<Vec<_>>(), [1.0, 1.0, 0.0, 0.0]);
        assert_eq!(m.row(1).iter().copied().collect::<Vec<_>>(), [1.0, 2.0, 1.0, 3.0]);
        let leaky: DesignFormula = "1 + Y0".parse().unwrap();
        assert!(matches!(leaky.matrix(&d, &[0, 1], &[]), Err(Error::MaskedCell { row: 0, .. })));
    }

    #[test]
    fn overrides_replace_columns() {
        let d = Dataset::from_columns(vec![("A".into(), vec![0.0, 1.0]), ("W".into(), vec![2.0, 3.0])]).unwrap();
        let f: DesignFormula = "A + A:W".parse().unwrap();
        let m = f.matrix(&d, &[0, 1], &[("A", 1.0)]).unwrap();
        assert_eq!(m.column(1).iter().copied().collect::<Vec<_>>(), [2.0, 3.0]);
    }
}
