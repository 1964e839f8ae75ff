//! Structural causal models over lm-graphs: specification, sampling,
//! interventions and Monte-Carlo oracles.
//!
//! Every node is `value = f(parents) + noise` or `value ~ Bernoulli(logistic(f(parents)))`.
//! A shifted node `Z` uses `g_{Z,T}` instead of `f_Z` whenever `T`, the set of its
//! contextual parents whose indicators are 0, is nonempty.
//!
//! Randomness is counter based: node `j` of row `i` draws from a ChaCha8 stream
//! keyed by `(seed, j, i)`. Rows can therefore be generated in any order, and
//! two interventions with the same seed share their noise.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{Admg, NodeId, NodeKind};
use crate::lm::{build_lm_graph, LmGraph, LmGraphJson, ShiftSpec};
use crate::par;
use crate::recovery::QuerySpec;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(NodeId),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Pow(Box<Expr>, i32),
}

impl Expr {
    /// Parses prefix notation: `(+ -3 (* -2 W) (^ W 2))`.
    pub fn parse(text: &str) -> Result<Expr> {
        let tokens = tokenize(text);
        let mut pos = 0;
        let e = parse_expr(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(Error::Parse(format!("trailing tokens in expression {text:?}")));
        }
        Ok(e)
    }

    pub fn vars(&self) -> Vec<&NodeId> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a NodeId>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => out.push(v),
            Expr::Add(xs) | Expr::Mul(xs) => xs.iter().for_each(|x| x.collect_vars(out)),
            Expr::Pow(b, _) => b.collect_vars(out),
        }
    }

    fn compile(&self, index: &BTreeMap<NodeId, usize>) -> Result<CExpr> {
        Ok(match self {
            Expr::Const(c) => CExpr::Const(*c),
            Expr::Var(v) => CExpr::Var(
                *index
                    .get(v)
                    .ok_or_else(|| Error::SpecError(format!("unknown variable {v}")))?,
            ),
            Expr::Add(xs) => CExpr::Add(xs.iter().map(|x| x.compile(index)).collect::<Result<_>>()?),
            Expr::Mul(xs) => CExpr::Mul(xs.iter().map(|x| x.compile(index)).collect::<Result<_>>()?),
            Expr::Pow(b, k) => CExpr::Pow(Box::new(b.compile(index)?), *k),
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |f: &mut fmt::Formatter<'_>, op: &str, xs: &[Expr]| {
            write!(f, "({op}")?;
            for x in xs {
                write!(f, " {x}")?;
            }
            write!(f, ")")
        };
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Add(xs) => list(f, "+", xs),
            Expr::Mul(xs) => list(f, "*", xs),
            Expr::Pow(b, k) => write!(f, "(^ {b} {k})"),
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Expr::parse(&s).map_err(serde::de::Error::custom)
    }
}

fn tokenize(text: &str) -> Vec<String> {
    text.replace('(', " ( ")
        .replace(')', " ) ")
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn parse_expr(tokens: &[String], pos: &mut usize) -> Result<Expr> {
    let tok = tokens
        .get(*pos)
        .ok_or_else(|| Error::Parse("unexpected end of expression".into()))?;
    *pos += 1;
    match tok.as_str() {
        "(" => {
            let op = tokens
                .get(*pos)
                .ok_or_else(|| Error::Parse("missing operator".into()))?
                .clone();
            *pos += 1;
            let mut args = Vec::new();
            while tokens.get(*pos).map(String::as_str) != Some(")") {
                if *pos >= tokens.len() {
                    return Err(Error::Parse("unbalanced parentheses".into()));
                }
                args.push(parse_expr(tokens, pos)?);
            }
            *pos += 1;
            match op.as_str() {
                "+" | "*" if args.is_empty() => Err(Error::Parse(format!("({op}) needs arguments"))),
                "+" => Ok(Expr::Add(args)),
                "*" => Ok(Expr::Mul(args)),
                "^" => match args.as_slice() {
                    [b, Expr::Const(k)] if k.fract() == 0.0 && k.abs() <= 16.0 => {
                        Ok(Expr::Pow(Box::new(b.clone()), *k as i32))
                    }
                    _ => Err(Error::Parse("(^ base k) needs an integer constant exponent".into())),
                },
                other => Err(Error::Parse(format!("unknown operator {other:?}"))),
            }
        }
        ")" => Err(Error::Parse("unexpected ')'".into())),
        atom => match atom.parse::<f64>() {
            Ok(c) if c.is_finite() => Ok(Expr::Const(c)),
            Ok(_) => Err(Error::Parse(format!("non-finite constant {atom}"))),
            Err(_) => Ok(Expr::Var(NodeId::from(atom))),
        },
    }
}

/// Expression with variables resolved to slots of a row buffer.
#[derive(Debug, Clone)]
enum CExpr {
    Const(f64),
    Var(usize),
    Add(Vec<CExpr>),
    Mul(Vec<CExpr>),
    Pow(Box<CExpr>, i32),
}

impl CExpr {
    fn eval(&self, row: &[f64]) -> f64 {
        match self {
            CExpr::Const(c) => *c,
            CExpr::Var(i) => row[*i],
            CExpr::Add(xs) => xs.iter().map(|x| x.eval(row)).sum(),
            CExpr::Mul(xs) => xs.iter().map(|x| x.eval(row)).product(),
            CExpr::Pow(b, k) => b.eval(row).powi(*k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    /// Additive `N(mean, sd)`; `sd` is a standard deviation.
    Gaussian { mean: f64, sd: f64 },
    /// `value ~ Bernoulli(1 / (1 + exp(-expr)))`.
    BernoulliLogit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub expr: Expr,
    pub noise: Noise,
    /// `g_{Z,T}` keyed by the comma-joined sorted names in `T`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub shifts: BTreeMap<String, Expr>,
}

/// Exogenous Gaussian shared by the endpoints of a bidirected edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSpec {
    pub name: String,
    pub between: [String; 2],
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmJson {
    pub graph: LmGraphJson,
    pub nodes: BTreeMap<String, NodeSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub latents: Vec<LatentSpec>,
}

#[derive(Debug, Clone)]
enum Slot {
    Sample {
        base: CExpr,
        noise: Noise,
        /// `(x, r_x)` slots of the contextual parents.
        contextual: Vec<(usize, usize)>,
        /// Indexed by the bitmask of contextual parents that are missing.
        shifted: Vec<Option<CExpr>>,
    },
    Proxy {
        of: usize,
        indicator: Option<usize>,
    },
}

/// Validated, compiled SCM.
#[derive(Debug, Clone)]
pub struct ScmSpec {
    lm: LmGraph,
    nodes: BTreeMap<NodeId, NodeSpec>,
    latents: Vec<LatentSpec>,
    order: Vec<NodeId>,
    slots: Vec<Slot>,
    index: BTreeMap<NodeId, usize>,
}

impl ScmSpec {
    pub fn new(lm: LmGraph, nodes: BTreeMap<NodeId, NodeSpec>, latents: Vec<LatentSpec>) -> Result<Self> {
        let g = lm.graph();
        let order = g.topological_order()?;
        let mut index: BTreeMap<NodeId, usize> =
            order.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let mut own_latents: BTreeMap<&str, Vec<NodeId>> = BTreeMap::new();
        for (j, l) in latents.iter().enumerate() {
            let id = NodeId::from(l.name.as_str());
            if index.contains_key(&id) {
                return Err(Error::SpecError(format!("latent {} clashes with a node", l.name)));
            }
            if !(l.sd >= 0.0 && l.sd.is_finite()) {
                return Err(Error::SpecError(format!("latent {} needs a finite sd >= 0", l.name)));
            }
            let [a, b] = &l.between;
            if !g.has_bidirected(a, b) {
                return Err(Error::SpecError(format!("latent {} joins {a} and {b}, which share no bidirected edge", l.name)));
            }
            for end in [a, b] {
                own_latents.entry(end.as_str()).or_default().push(id.clone());
            }
            index.insert(id, order.len() + j);
        }
        if let Some(extra) = nodes.keys().find(|n| !g.contains(n.as_str())) {
            return Err(Error::SpecError(format!("mechanism for unknown node {extra}")));
        }

        let mut slots = Vec::with_capacity(order.len());
        for n in &order {
            let kind = g.kind(n.as_str()).expect("ordered node exists");
            if let NodeKind::Proxy { of } = kind {
                if nodes.contains_key(n) {
                    return Err(Error::SpecError(format!("proxy {n} is deterministic and takes no mechanism")));
                }
                slots.push(Slot::Proxy {
                    of: index[of],
                    indicator: g.indicator_of(of.as_str()).map(|r| index[r]),
                });
                continue;
            }
            let spec = nodes
                .get(n)
                .ok_or_else(|| Error::SpecError(format!("no mechanism for {n}")))?;
            if matches!(kind, NodeKind::Indicator { .. }) && spec.noise != Noise::BernoulliLogit {
                return Err(Error::SpecError(format!("indicator {n} must use bernoulli_logit noise")));
            }
            if let Noise::Gaussian { mean, sd } = spec.noise {
                if !(mean.is_finite() && sd.is_finite() && sd >= 0.0) {
                    return Err(Error::SpecError(format!("{n}: gaussian noise needs finite mean and sd >= 0")));
                }
            }
            let parents = g.parents(&std::iter::once(n.clone()).collect())?;
            let allowed = |v: &NodeId| {
                parents.contains(v) || own_latents.get(n.as_str()).is_some_and(|ls| ls.contains(v))
            };
            let check_vars = |e: &Expr, what: &str| -> Result<()> {
                match e.vars().into_iter().find(|v| !allowed(v)) {
                    Some(v) => Err(Error::SpecError(format!("{what} of {n} references {v}, which is not a parent"))),
                    None => Ok(()),
                }
            };
            check_vars(&spec.expr, "mechanism")?;

            let t_z: Vec<NodeId> = lm.shifts().contextual_parents(n.as_str()).into_iter().collect();
            let contextual: Vec<(usize, usize)> = t_z
                .iter()
                .map(|x| {
                    let r = g.indicator_of(x.as_str()).expect("shift-inducing node has an indicator");
                    (index[x], index[r])
                })
                .collect();
            let mut shifted = vec![None; 1 << t_z.len()];
            let mut seen = 0;
            #[allow(clippy::needless_range_loop)]
            for mask in 1..(1usize << t_z.len()) {
                let t: Vec<&NodeId> = (0..t_z.len()).filter(|j| mask >> j & 1 == 1).map(|j| &t_z[j]).collect();
                let key = t.iter().map(|x| x.as_str()).collect::<Vec<_>>().join(",");
                let g_expr = spec
                    .shifts
                    .get(&key)
                    .ok_or_else(|| Error::SpecError(format!("{n} needs a shift mechanism for missing {{{key}}}")))?;
                check_vars(g_expr, "shift mechanism")?;
                if let Some(v) = g_expr.vars().into_iter().find(|v| t.contains(v)) {
                    return Err(Error::SpecError(format!(
                        "shift mechanism of {n} for missing {{{key}}} references {v}"
                    )));
                }
                shifted[mask] = Some(g_expr.compile(&index)?);
                seen += 1;
            }
            if spec.shifts.len() != seen {
                return Err(Error::SpecError(format!("{n} declares shift mechanisms for contexts that cannot occur")));
            }
            slots.push(Slot::Sample {
                base: spec.expr.compile(&index)?,
                noise: spec.noise.clone(),
                contextual,
                shifted,
            });
        }
        Ok(Self {
            lm,
            nodes,
            latents,
            order,
            slots,
            index,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: ScmJson = serde_json::from_str(s)?;
        Self::from_json(&raw)
    }

    pub fn from_json(raw: &ScmJson) -> Result<Self> {
        let lm = raw.graph.build()?;
        let nodes = raw
            .nodes
            .iter()
            .map(|(k, v)| (NodeId::from(k.as_str()), v.clone()))
            .collect();
        Self::new(lm, nodes, raw.latents.clone())
    }

    pub fn to_json(&self) -> ScmJson {
        ScmJson {
            graph: self.lm.to_json(),
            nodes: self.nodes.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            latents: self.latents.clone(),
        }
    }

    pub fn lm(&self) -> &LmGraph {
        &self.lm
    }

    pub fn order(&self) -> &[NodeId] {
        &self.order
    }

    fn width(&self) -> usize {
        self.order.len() + self.latents.len()
    }

    fn resolve_do(&self, interventions: &BTreeMap<NodeId, f64>) -> Result<Vec<Option<f64>>> {
        let mut fixed = vec![None; self.order.len()];
        for (n, &v) in interventions {
            let i = *self
                .index
                .get(n)
                .filter(|&&i| i < self.order.len())
                .ok_or_else(|| Error::SpecError(format!("intervention on unknown node {n}")))?;
            match &self.slots[i] {
                Slot::Proxy { .. } => return Err(Error::SpecError(format!("cannot intervene on proxy {n}"))),
                Slot::Sample { noise: Noise::BernoulliLogit, .. } if v != 0.0 && v != 1.0 => {
                    return Err(Error::SpecError(format!("{n} is binary; do({n}={v}) is outside its support")))
                }
                _ if !v.is_finite() => return Err(Error::SpecError(format!("do({n}={v}) is not finite"))),
                _ => {}
            }
            fixed[i] = Some(v);
        }
        Ok(fixed)
    }

    /// Fills `buf` with one row. Masked proxies are NaN.
    fn sample_row(&self, row: u64, seed: u64, fixed: &[Option<f64>], buf: &mut [f64]) {
        let n = self.order.len();
        for (j, l) in self.latents.iter().enumerate() {
            buf[n + j] = l.sd * normal(seed, (n + j) as u64, row);
        }
        for (i, slot) in self.slots.iter().enumerate() {
            buf[i] = match slot {
                Slot::Proxy { of, indicator } => match indicator {
                    Some(r) if buf[*r] == 0.0 => f64::NAN,
                    _ => buf[*of],
                },
                Slot::Sample { .. } if fixed[i].is_some() => fixed[i].expect("checked"),
                Slot::Sample {
                    base,
                    noise,
                    contextual,
                    shifted,
                } => {
                    let mask = contextual
                        .iter()
                        .enumerate()
                        .filter(|(_, (_, r))| buf[*r] == 0.0)
                        .fold(0usize, |m, (j, _)| m | 1 << j);
                    let eta = if mask == 0 {
                        base.eval(buf)
                    } else {
                        shifted[mask].as_ref().expect("validated").eval(buf)
                    };
                    match noise {
                        Noise::Gaussian { mean, sd } => eta + mean + sd * normal(seed, i as u64, row),
                        Noise::BernoulliLogit => {
                            let p = 1.0 / (1.0 + (-eta).exp());
                            if uniform(seed, i as u64, row) < p {
                                1.0
                            } else {
                                0.0
                            }
                        }
                    }
                }
            };
        }
    }

    fn sample_matrix(&self, n: usize, seed: u64, fixed: &[Option<f64>]) -> Vec<Vec<f64>> {
        let w = self.width();
        let rows: Vec<Vec<f64>> = par::map_indices(n, |i| {
            let mut buf = vec![0.0; w];
            self.sample_row(i as u64, seed, fixed, &mut buf);
            buf
        });
        let mut cols = vec![Vec::with_capacity(n); self.order.len()];
        for r in rows {
            for (c, v) in cols.iter_mut().zip(r) {
                c.push(v);
            }
        }
        cols
    }

    /// Every node, including the unmasked missing-affected variables.
    pub fn sample_full(&self, n: usize, seed: u64, interventions: &BTreeMap<NodeId, f64>) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::SpecError("n must be at least 1".into()));
        }
        let fixed = self.resolve_do(interventions)?;
        let cols = self.sample_matrix(n, seed, &fixed);
        Dataset::from_columns(self.order.iter().map(|n| n.to_string()).zip(cols).collect())
    }

    pub fn sample_observational(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.sample_interventional(&BTreeMap::new(), n, seed)
    }

    /// Observed view: missing-affected variables appear only through their
    /// proxy (or, without a proxy node, under their own name, masked).
    pub fn sample_interventional(&self, interventions: &BTreeMap<NodeId, f64>, n: usize, seed: u64) -> Result<Dataset> {
        let full = self.sample_full(n, seed, interventions)?;
        observed_view(self.lm.graph(), &full)
    }

    /// Mean of `node` under an intervention, with per-row values.
    fn arm(&self, node: usize, n: usize, seed: u64, fixed: &[Option<f64>]) -> Vec<f64> {
        let w = self.width();
        par::map_indices(n, |i| {
            let mut buf = vec![0.0; w];
            self.sample_row(i as u64, seed, fixed, &mut buf);
            buf[node]
        })
    }

    /// FATE and NATE by simulation with common random numbers across arms.
    pub fn oracle_effects(&self, q: &QuerySpec, n_mc: usize, seed: u64) -> Result<OracleResult> {
        if n_mc < 2 {
            return Err(Error::SpecError("n_mc must be at least 2".into()));
        }
        let y = *self
            .index
            .get(&q.outcome)
            .ok_or_else(|| Error::NodeNotFound(q.outcome.to_string()))?;
        let arm = |a: f64, all_observed: bool| -> Result<Vec<f64>> {
            let mut d = BTreeMap::from([(q.exposure.clone(), a)]);
            if all_observed {
                for r in self.lm.graph().indicators() {
                    d.insert(r, 1.0);
                }
            }
            Ok(self.arm(y, n_mc, seed, &self.resolve_do(&d)?))
        };
        let (f1, f0, n1, n0) = (arm(1.0, true)?, arm(0.0, true)?, arm(1.0, false)?, arm(0.0, false)?);
        let (fate, mc_se_fate) = mean_se_of_diff(&f1, &f0);
        let (nate, mc_se_nate) = mean_se_of_diff(&n1, &n0);
        Ok(OracleResult {
            fate,
            nate,
            mc_se_fate,
            mc_se_nate,
            n_mc,
            seed,
        })
    }
}

fn mean_se_of_diff(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let m = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Replaces each missing-affected column by its masked observed counterpart.
pub fn observed_view(g: &Admg, full: &Dataset) -> Result<Dataset> {
    let mut cols = Vec::new();
    for name in full.names() {
        let id = NodeId::from(name.as_str());
        match g.kind(name) {
            Some(NodeKind::MissingAffected) => {
                if g.proxy_of(name).is_some() {
                    continue;
                }
                let r = g.indicator_of(name);
                let vals = full.raw_column(name)?;
                let masked = match r {
                    Some(r) => {
                        let rv = full.raw_column(r.as_str())?;
                        vals.iter().zip(rv).map(|(v, r)| if *r == 0.0 { f64::NAN } else { *v }).collect()
                    }
                    None => vals.to_vec(),
                };
                cols.push((id.to_string(), masked));
            }
            _ => cols.push((name.clone(), full.raw_column(name)?.to_vec())),
        }
    }
    Dataset::from_columns(cols)
}

fn rng_for(seed: u64, node: u64, row: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((node << 40) | row);
    rng
}

fn normal(seed: u64, node: u64, row: u64) -> f64 {
    rng_for(seed, node, row).sample(StandardNormal)
}

fn uniform(seed: u64, node: u64, row: u64) -> f64 {
    rng_for(seed, node, row).random::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub fate: f64,
    pub nate: f64,
    pub mc_se_fate: f64,
    pub mc_se_nate: f64,
    pub n_mc: usize,
    pub seed: u64,
}

/// Missingness parameters `(β1, β2)` giving roughly half the pre-exposure
/// outcomes missing.
pub const APPENDIX_A_50: (f64, f64) = (-0.2, -1.2);
/// Roughly 30% missing.
pub const APPENDIX_A_30: (f64, f64) = (1.1, -1.0);

fn node(expr: &str, noise: Noise, shifts: &[(&str, &str)]) -> NodeSpec {
    NodeSpec {
        expr: Expr::parse(expr).expect("preset expression"),
        noise,
        shifts: shifts
            .iter()
            .map(|(k, e)| (k.to_string(), Expr::parse(e).expect("preset expression")))
            .collect(),
    }
}

/// The benchmark SCM on the `fig1c` graph.
pub fn appendix_a(beta1: f64, beta2: f64) -> ScmSpec {
    let g = |sd| Noise::Gaussian { mean: 0.0, sd };
    let nodes = BTreeMap::from([
        (NodeId::from("W"), node("0", g(1.0), &[])),
        (NodeId::from("Y0"), node("(+ -3 (* -2 W) (^ W 2))", g(7.0), &[])),
        (
            NodeId::from("R_Y0"),
            node(&format!("(+ {beta1} (* {beta2} W))"), Noise::BernoulliLogit, &[]),
        ),
        (
            NodeId::from("A"),
            node("(+ W (* 0.3 Y0))", Noise::BernoulliLogit, &[("Y0", "(+ -0.5 (* 1.5 W))")]),
        ),
        (
            NodeId::from("Y1"),
            node(
                "(+ 3 (* 1.8 W) (* -2 A) (* -1.5 Y0) (* -0.8 A W) (* 4 A Y0))",
                g(7.0),
                &[("Y0", "(+ 4 (* 6 W) (* 8 A) (* -8 W A))")],
            ),
        ),
    ]);
    ScmSpec::new(crate::fixtures::fig1c(), nodes, Vec::new()).expect("preset is valid")
}

/// Named presets. `appendixA` takes `beta1` and `beta2`.
pub fn preset(name: &str, beta1: f64, beta2: f64) -> Result<ScmSpec> {
    match name {
        "appendixA" | "appendix_a" => Ok(appendix_a(beta1, beta2)),
        other => Err(Error::SpecError(format!("unknown preset {other:?}; available: appendixA"))),
    }
}

/// Linear-Gaussian SCM for an ADMG of observed nodes: each directed edge gets
/// a coefficient of magnitude in `[0.5, 1.5]` with random sign, each
/// bidirected edge a shared unit-variance latent with such a loading on both
/// endpoints, and every node unit noise.
pub fn linear_gaussian(g: &Admg, seed: u64) -> Result<ScmSpec> {
    if let Some((n, _)) = g.nodes().find(|(_, k)| **k != NodeKind::Observed) {
        return Err(Error::SpecError(format!("linear-Gaussian compiler expects observed nodes only, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coef = |rng: &mut ChaCha8Rng| {
        let m: f64 = rng.random_range(0.5..1.5);
        if rng.random::<bool>() {
            m
        } else {
            -m
        }
    };
    let mut terms: BTreeMap<NodeId, Vec<Expr>> = g.node_ids().map(|n| (n.clone(), Vec::new())).collect();
    for (a, b) in g.directed_edges() {
        let c = coef(&mut rng);
        terms.get_mut(b).expect("endpoint").push(Expr::Mul(vec![Expr::Const(c), Expr::Var(a.clone())]));
    }
    let mut latents = Vec::new();
    for (k, (a, b)) in g.bidirected_edges().enumerate() {
        let name = format!("__U{k}");
        for end in [a, b] {
            let c = coef(&mut rng);
            terms
                .get_mut(end)
                .expect("endpoint")
                .push(Expr::Mul(vec![Expr::Const(c), Expr::Var(NodeId::from(name.as_str()))]));
        }
        latents.push(LatentSpec {
            name,
            between: [a.to_string(), b.to_string()],
            sd: 1.0,
        });
    }
    let nodes = terms
        .into_iter()
        .map(|(n, ts)| {
            let expr = if ts.is_empty() { Expr::Const(0.0) } else { Expr::Add(ts) };
            (
                n,
                NodeSpec {
                    expr,
                    noise: Noise::Gaussian { mean: 0.0, sd: 1.0 },
                    shifts: BTreeMap::new(),
                },
            )
        })
        .collect();
    ScmSpec::new(build_lm_graph(g, &ShiftSpec::new())?, nodes, latents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recovery::Target;

    #[test]
    fn expression_round_trip() {
        for s in ["(+ -3 (* -2 W) (^ W 2))", "0", "(* 4 A Y0)", "X"] {
            assert_eq!(Expr::parse(s).unwrap().to_string(), s);
        }
        for bad in ["(+", "(- 1 2)", "(^ W 0.5)", ")", "(+ 1) 2", "()"] {
            assert!(Expr::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn constant_spec_forces_row() {
        let mut g = Admg::new();
        g.add_node("C", NodeKind::Observed).unwrap();
        let lm = build_lm_graph(&g, &ShiftSpec::new()).unwrap();
        let nodes = BTreeMap::from([(
            NodeId::from("C"),
            NodeSpec {
                expr: Expr::Const(2.5),
                noise: Noise::Gaussian { mean: 0.0, sd: 0.0 },
                shifts: BTreeMap::new(),
            },
        )]);
        let spec = ScmSpec::new(lm, nodes, vec![]).unwrap();
        let d = spec.sample_observational(1, 9).unwrap();
        assert_eq!(d.raw_column("C").unwrap(), &[2.5]);
    }

    #[test]
    fn non_parent_reference_rejected() {
        let mut raw = appendix_a(0.0, 0.0).to_json();
        raw.nodes.get_mut("W").unwrap().expr = Expr::parse("Y0").unwrap();
        assert!(matches!(ScmSpec::from_json(&raw), Err(Error::SpecError(_))));
        let mut raw = appendix_a(0.0, 0.0).to_json();
        raw.nodes.get_mut("A").unwrap().shifts.insert("Y0".into(), Expr::parse("Y0").unwrap());
        assert!(matches!(ScmSpec::from_json(&raw), Err(Error::SpecError(_))));
        let mut raw = appendix_a(0.0, 0.0).to_json();
        raw.nodes.get_mut("A").unwrap().shifts.clear();
        assert!(matches!(ScmSpec::from_json(&raw), Err(Error::SpecError(_))));
    }

    #[test]
    fn json_round_trip() {
        let spec = appendix_a(-0.2, -1.2);
        let text = serde_json::to_string(&spec.to_json()).unwrap();
        let back = ScmSpec::from_json_str(&text).unwrap();
        assert_eq!(back.to_json(), spec.to_json());
    }

    #[test]
    fn seed_determinism_and_proxy_consistency() {
        let spec = appendix_a(-0.2, -1.2);
        let a = spec.sample_full(500, 3, &BTreeMap::new()).unwrap();
        let b = spec.sample_full(500, 3, &BTreeMap::new()).unwrap();
        assert_eq!(a.to_csv_string().unwrap(), b.to_csv_string().unwrap());
        let y0 = a.raw_column("Y0").unwrap();
        let r = a.raw_column("R_Y0").unwrap();
        let proxy = a.raw_column("Y0_obs").unwrap();
        for i in 0..500 {
            if r[i] == 1.0 {
                assert_eq!(proxy[i], y0[i]);
            } else {
                assert!(proxy[i].is_nan());
            }
        }
        let obs = spec.sample_observational(500, 3).unwrap();
        assert!(obs.raw_column("Y0").is_err());
    }

    #[test]
    fn interventions() {
        let spec = appendix_a(-0.2, -1.2);
        let d = spec
            .sample_interventional(&BTreeMap::from([("R_Y0".into(), 1.0), ("A".into(), 1.0)]), 300, 1)
            .unwrap();
        assert!(d.raw_column("Y0_obs").unwrap().iter().all(|v| v.is_finite()));
        assert!(d.raw_column("A").unwrap().iter().all(|&v| v == 1.0));
        assert!(spec.sample_interventional(&BTreeMap::from([("A".into(), 0.5)]), 3, 1).is_err());
        assert!(spec.sample_interventional(&BTreeMap::from([("Y0_obs".into(), 1.0)]), 3, 1).is_err());
        assert!(spec.sample_interventional(&BTreeMap::from([("Q".into(), 1.0)]), 3, 1).is_err());
    }

    #[test]
    fn oracle_without_shifts_has_equal_effects() {
        let mut g = Admg::new();
        for n in ["W", "A", "Y"] {
            g.add_node(n, NodeKind::Observed).unwrap();
        }
        for (a, b) in [("W", "Y"), ("A", "Y")] {
            g.add_directed(a, b).unwrap();
        }
        let lm = build_lm_graph(&g, &ShiftSpec::new()).unwrap();
        let gauss = Noise::Gaussian { mean: 0.0, sd: 1.0 };
        let nodes = BTreeMap::from([
            (NodeId::from("W"), node("0", gauss.clone(), &[])),
            (NodeId::from("A"), node("0", Noise::BernoulliLogit, &[])),
            (NodeId::from("Y"), node("(+ W (* 2 A))", gauss, &[])),
        ]);
        let spec = ScmSpec::new(lm, nodes, vec![]).unwrap();
        let o = spec.oracle_effects(&QuerySpec::new("A", "Y", Target::Nate), 20_000, 5).unwrap();
        assert!((o.fate - o.nate).abs() <= 3.0 * (o.mc_se_fate + o.mc_se_nate) + 1e-12);
        assert!((o.fate - 2.0).abs() < 1e-9, "common noise makes the contrast exact");
    }

    #[test]
    fn linear_gaussian_latents_correlate() {
        let mut g = Admg::new();
        g.add_node("P", NodeKind::Observed).unwrap();
        g.add_node("Q", NodeKind::Observed).unwrap();
        g.add_bidirected("P", "Q").unwrap();
        let spec = linear_gaussian(&g, 11).unwrap();
        let d = spec.sample_full(20_000, 2, &BTreeMap::new()).unwrap();
        let (p, q) = (d.raw_column("P").unwrap(), d.raw_column("Q").unwrap());
        let cov: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum::<f64>() / p.len() as f64;
        assert!(cov.abs() > 0.1);
    }
}
