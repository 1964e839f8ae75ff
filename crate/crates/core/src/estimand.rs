//! Symbolic estimands: context-weighted adjustment functionals.
//!
//! The text form is what the recovery checks print and what the golden tests
//! compare against, e.g. `E_W E_{Y0|W,R_Y0=1} Δ_a E[Y1|W,Y0,A=a,R_Y0=1]`.
//! [`Estimand::parse`] reads it back.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::NodeId;

/// One entry of a conditioning list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cond {
    /// Conditioning on the variable at its observed value.
    Var(NodeId),
    /// The exposure set to the symbolic level `a`.
    Treat(NodeId),
    /// An indicator fixed to 0 or 1.
    Fixed(NodeId, u8),
}

impl Cond {
    pub fn node(&self) -> &NodeId {
        match self {
            Cond::Var(n) | Cond::Treat(n) | Cond::Fixed(n, _) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Estimand {
    /// Sum of terms, one per context pattern.
    Sum(Vec<Estimand>),
    /// `P(events) * body`
    Weighted {
        events: Vec<(NodeId, u8)>,
        body: Box<Estimand>,
    },
    /// `E_{vars | given} body`
    Integrate {
        vars: Vec<NodeId>,
        given: Vec<Cond>,
        body: Box<Estimand>,
    },
    /// `Δ_a body`: body at `a = 1` minus body at `a = 0`.
    Delta(Box<Estimand>),
    /// `E[outcome | given]`
    CondExp { outcome: NodeId, given: Vec<Cond> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Latex,
}

impl Estimand {
    /// Wraps `body` in an integral unless `vars` is empty.
    pub fn integrate(vars: Vec<NodeId>, given: Vec<Cond>, body: Estimand) -> Estimand {
        if vars.is_empty() {
            body
        } else {
            Estimand::Integrate {
                vars,
                given,
                body: Box::new(body),
            }
        }
    }

    /// Multiplies by `P(events)` unless `events` is empty.
    pub fn weighted(events: Vec<(NodeId, u8)>, body: Estimand) -> Estimand {
        if events.is_empty() {
            body
        } else {
            Estimand::Weighted {
                events,
                body: Box::new(body),
            }
        }
    }

    /// A sum of one term is that term.
    pub fn sum(mut terms: Vec<Estimand>) -> Estimand {
        if terms.len() == 1 {
            terms.pop().expect("one term")
        } else {
            Estimand::Sum(terms)
        }
    }

    pub fn delta(body: Estimand) -> Estimand {
        Estimand::Delta(Box::new(body))
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Text => self.to_string(),
            Format::Latex => self.latex(),
        }
    }

    pub fn latex(&self) -> String {
        match self {
            Estimand::Sum(ts) => ts.iter().map(Estimand::latex).collect::<Vec<_>>().join(" + "),
            Estimand::Weighted { events, body } => {
                let ev: Vec<String> = events
                    .iter()
                    .map(|(n, v)| format!("{}={v}", latex_ident(n.as_str())))
                    .collect();
                format!("\\mathbb{{P}}({})\\, {}", ev.join(", "), body.latex())
            }
            Estimand::Integrate { vars, given, body } => {
                let vs: Vec<String> = vars.iter().map(|v| latex_ident(v.as_str())).collect();
                let sub = if given.is_empty() {
                    vs.join(", ")
                } else {
                    format!("{} \\mid {}", vs.join(", "), latex_conds(given))
                };
                format!("\\mathbb{{E}}_{{{sub}}}\\, {}", body.latex())
            }
            Estimand::Delta(body) => format!("\\Delta_a {}", body.latex()),
            Estimand::CondExp { outcome, given } => {
                let y = latex_ident(outcome.as_str());
                if given.is_empty() {
                    format!("\\mathbb{{E}}[{y}]")
                } else {
                    format!("\\mathbb{{E}}[{y} \\mid {}]", latex_conds(given))
                }
            }
        }
    }

    pub fn parse(text: &str) -> Result<Estimand> {
        let mut p = Parser { s: text, pos: 0 };
        let e = p.sum()?;
        if p.pos != text.len() {
            return Err(p.error("trailing input"));
        }
        Ok(e)
    }
}

fn text_conds(given: &[Cond]) -> String {
    given
        .iter()
        .map(|c| match c {
            Cond::Var(n) => n.to_string(),
            Cond::Treat(n) => format!("{n}=a"),
            Cond::Fixed(n, v) => format!("{n}={v}"),
        })
        .collect::<Vec<_>>()
        .join(",")
}

fn latex_conds(given: &[Cond]) -> String {
    given
        .iter()
        .map(|c| match c {
            Cond::Var(n) => latex_ident(n.as_str()),
            Cond::Treat(n) => format!("{}=a", latex_ident(n.as_str())),
            Cond::Fixed(n, v) => format!("{}={v}", latex_ident(n.as_str())),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// `R_Y0` becomes `R_{Y_{0}}`, `Y1` becomes `Y_{1}`.
fn latex_ident(s: &str) -> String {
    if let Some((head, rest)) = s.split_once('_') {
        let h = latex_ident(head);
        let h = if h.contains('_') { format!("{{{h}}}") } else { h };
        return format!("{h}_{{{}}}", latex_ident(rest));
    }
    let split = s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
    if split > 0 && split < s.len() {
        format!("{}_{{{}}}", &s[..split], &s[split..])
    } else {
        s.to_string()
    }
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimand::Sum(ts) => {
                for (i, t) in ts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" + ")?;
                    }
                    write!(f, "{t}")?;
                }
                Ok(())
            }
            Estimand::Weighted { events, body } => {
                let ev: Vec<String> = events.iter().map(|(n, v)| format!("{n}={v}")).collect();
                write!(f, "P({}) {body}", ev.join(","))
            }
            Estimand::Integrate { vars, given, body } => {
                let vs: Vec<&str> = vars.iter().map(NodeId::as_str).collect();
                if vars.len() == 1 && given.is_empty() {
                    write!(f, "E_{} {body}", vs[0])
                } else if given.is_empty() {
                    write!(f, "E_{{{}}} {body}", vs.join(","))
                } else {
                    write!(f, "E_{{{}|{}}} {body}", vs.join(","), text_conds(given))
                }
            }
            Estimand::Delta(body) => write!(f, "Δ_a {body}"),
            Estimand::CondExp { outcome, given } => {
                if given.is_empty() {
                    write!(f, "E[{outcome}]")
                } else {
                    write!(f, "E[{outcome}|{}]", text_conds(given))
                }
            }
        }
    }
}

impl Serialize for Estimand {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

struct Parser<'a> {
    s: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, what: &str) -> Error {
        Error::Parse(format!("estimand: {what} at byte {}", self.pos))
    }

    fn rest(&self) -> &str {
        &self.s[self.pos..]
    }

    fn eat(&mut self, tok: &str) -> bool {
        if self.rest().starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &str) -> Result<()> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.error(&format!("expected {tok:?}")))
        }
    }

    fn ident(&mut self) -> Result<NodeId> {
        let len = self
            .rest()
            .find(|c: char| !(c.is_alphanumeric() || c == '_' || c == '.'))
            .unwrap_or(self.rest().len());
        if len == 0 {
            return Err(self.error("expected a variable name"));
        }
        let id = NodeId::from(&self.rest()[..len]);
        self.pos += len;
        Ok(id)
    }

    fn sum(&mut self) -> Result<Estimand> {
        let mut terms = vec![self.term()?];
        while self.eat(" + ") {
            terms.push(self.term()?);
        }
        Ok(Estimand::sum(terms))
    }

    fn term(&mut self) -> Result<Estimand> {
        if self.eat("P(") {
            let mut events = Vec::new();
            loop {
                let n = self.ident()?;
                self.expect("=")?;
                events.push((n, self.bit()?));
                if !self.eat(",") {
                    break;
                }
            }
            self.expect(") ")?;
            let body = self.factor()?;
            return Ok(Estimand::Weighted {
                events,
                body: Box::new(body),
            });
        }
        self.factor()
    }

    fn bit(&mut self) -> Result<u8> {
        if self.eat("0") {
            Ok(0)
        } else if self.eat("1") {
            Ok(1)
        } else {
            Err(self.error("expected 0 or 1"))
        }
    }

    fn factor(&mut self) -> Result<Estimand> {
        if self.eat("Δ_a ") {
            return Ok(Estimand::delta(self.factor()?));
        }
        if self.eat("E[") {
            let outcome = self.ident()?;
            let given = if self.eat("|") { self.conds()? } else { Vec::new() };
            self.expect("]")?;
            return Ok(Estimand::CondExp { outcome, given });
        }
        if self.eat("E_{") {
            let mut vars = vec![self.ident()?];
            while self.eat(",") {
                vars.push(self.ident()?);
            }
            let given = if self.eat("|") { self.conds()? } else { Vec::new() };
            self.expect("} ")?;
            let body = self.factor()?;
            return Ok(Estimand::Integrate {
                vars,
                given,
                body: Box::new(body),
            });
        }
        if self.eat("E_") {
            let var = self.ident()?;
            self.expect(" ")?;
            let body = self.factor()?;
            return Ok(Estimand::Integrate {
                vars: vec![var],
                given: Vec::new(),
                body: Box::new(body),
            });
        }
        Err(self.error("expected P(, E_, E[ or Δ_a"))
    }

    fn conds(&mut self) -> Result<Vec<Cond>> {
        let mut out = Vec::new();
        loop {
            let n = self.ident()?;
            let c = if self.eat("=a") {
                Cond::Treat(n)
            } else if self.eat("=") {
                Cond::Fixed(n, self.bit()?)
            } else {
                Cond::Var(n)
            };
            out.push(c);
            if !self.eat(",") {
                return Ok(out);
            }
        }
    }
}
