//! Recoverability of the full (FATE) and natural (NATE) average treatment
//! effects from an lm-graph, with symbolic estimands.
//!
//! The FATE check is a sufficient sequential-factorization criterion over an
//! adjustment set `Z = Z_o ∪ Z_m`. The NATE check verifies a witness
//! `(K, H, {L_r})` pattern by pattern; [`search_nate_witness`] enumerates
//! witnesses in increasing total size.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::estimand::{Cond, Estimand};
use crate::graph::{Admg, NodeId, NodeKind, NodeSet};
use crate::lm::{context_graph, ContextPattern, LmGraph};
use crate::par;
use crate::separation::{find_open_path, m_separated, MixedPath, SeparationQuery, Step};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Target {
    #[serde(rename = "FATE")]
    Fate,
    #[serde(rename = "NATE")]
    Nate,
}

impl std::str::FromStr for Target {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fate" => Ok(Target::Fate),
            "nate" => Ok(Target::Nate),
            _ => Err(Error::InvalidQuery(format!("unknown target {s:?}; use fate or nate"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySpec {
    pub exposure: NodeId,
    pub outcome: NodeId,
    pub target: Target,
}

impl QuerySpec {
    pub fn new(exposure: impl Into<NodeId>, outcome: impl Into<NodeId>, target: Target) -> Self {
        Self {
            exposure: exposure.into(),
            outcome: outcome.into(),
            target,
        }
    }

    /// Checks the query against the graph: distinct substantive endpoints and
    /// an outcome without descendants.
    pub fn validate(&self, g: &Admg) -> Result<()> {
        for n in [&self.exposure, &self.outcome] {
            match g.kind(n.as_str()) {
                None => return Err(Error::NodeNotFound(n.to_string())),
                Some(k) if !k.is_substantive() => {
                    return Err(Error::InvalidQuery(format!("{n} is not a substantive variable")))
                }
                _ => {}
            }
        }
        if self.exposure == self.outcome {
            return Err(Error::InvalidQuery("exposure and outcome must differ".into()));
        }
        let de = g.descendants(&single(&self.outcome))?;
        if de.len() > 1 {
            return Err(Error::InvalidQuery(format!(
                "outcome {} has descendants: {}",
                self.outcome,
                join(de.iter().filter(|n| **n != self.outcome))
            )));
        }
        Ok(())
    }
}

fn single(n: &NodeId) -> NodeSet {
    std::iter::once(n.clone()).collect()
}

fn join<'a>(it: impl IntoIterator<Item = &'a NodeId>) -> String {
    it.into_iter().map(NodeId::as_str).collect::<Vec<_>>().join(", ")
}

fn indicators_for(g: &Admg, vars: &NodeSet) -> NodeSet {
    vars.iter()
        .filter_map(|v| g.indicator_of(v.as_str()).cloned())
        .collect()
}

fn is_missing(g: &Admg, n: &NodeId) -> bool {
    matches!(g.kind(n.as_str()), Some(NodeKind::MissingAffected))
}

/// `R_Φ = R_sh ∩ an(Y; G[over(R_sh ∪ A)])`.
pub fn compute_r_phi(lm: &LmGraph, q: &QuerySpec) -> Result<NodeSet> {
    let g = lm.graph();
    let r_sh = lm.shift_indicators();
    let mut cut = r_sh.clone();
    cut.insert(q.exposure.clone());
    let an = g.mutilate_over(&cut)?.ancestors(&single(&q.outcome))?;
    Ok(r_sh.intersection(&an).cloned().collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FateVerdict {
    Recoverable {
        r_phi: NodeSet,
        z_observed: NodeSet,
        z_missing: NodeSet,
        r_adj: NodeSet,
        estimand: Estimand,
    },
    NotDecided {
        r_phi: NodeSet,
        reason: String,
    },
}

impl FateVerdict {
    pub fn is_recoverable(&self) -> bool {
        matches!(self, FateVerdict::Recoverable { .. })
    }

    pub fn estimand(&self) -> Option<&Estimand> {
        match self {
            FateVerdict::Recoverable { estimand, .. } => Some(estimand),
            FateVerdict::NotDecided { .. } => None,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            FateVerdict::Recoverable {
                r_phi,
                z_observed,
                z_missing,
                r_adj,
                estimand,
            } => json!({
                "target": "FATE",
                "verdict": "recoverable",
                "r_phi": r_phi,
                "adjustment": {"observed": z_observed, "missing": z_missing, "indicators": r_adj},
                "estimand_text": estimand.to_string(),
                "estimand_latex": estimand.latex(),
            }),
            FateVerdict::NotDecided { r_phi, reason } => json!({
                "target": "FATE",
                "verdict": "not_decided",
                "r_phi": r_phi,
                "reason": reason,
            }),
        }
    }
}

/// Why a particular adjustment set fails, if it does.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FateFailure {
    pub index: u8,
    pub description: String,
    pub path: Option<MixedPath>,
}

/// Largest adjustment set the FATE search will try.
pub const FATE_MAX_ADJUSTMENT: usize = 8;

/// Tests conditions (i) to (iii) for one candidate `Z`. Returns `None` when
/// all hold.
pub fn check_fate_adjustment(
    lm: &LmGraph,
    q: &QuerySpec,
    r_phi: &NodeSet,
    z: &NodeSet,
) -> Result<Option<FateFailure>> {
    let g = lm.graph();
    let (z_m, z_o): (NodeSet, NodeSet) = z.iter().cloned().partition(|n| is_missing(g, n));
    let r_adj = fate_indicators(g, q, r_phi, &z_m);

    let mut ar = r_adj.clone();
    ar.insert(q.exposure.clone());
    let de = g.descendants(&ar)?;
    if let Some(bad) = z.iter().find(|n| de.contains(*n)) {
        let path = ar
            .iter()
            .find_map(|s| g.directed_path(s, bad))
            .map(|nodes| MixedPath {
                steps: vec![Step::Forward; nodes.len() - 1],
                nodes,
            });
        return Ok(Some(FateFailure {
            index: 1,
            description: format!("{bad} is a descendant of the exposure or an indicator"),
            path,
        }));
    }

    let under = g.mutilate_under(&ar)?;
    let sq = SeparationQuery::new(&under, single(&q.outcome), ar.clone(), z.clone())?;
    if let Some(path) = open_path(&sq) {
        return Ok(Some(FateFailure {
            index: 2,
            description: format!(
                "{} not separated from {{{}}} given {{{}}} with outgoing edges of the exposure and indicators removed",
                q.outcome,
                join(&ar),
                join(z)
            ),
            path: Some(path),
        }));
    }

    if !z_m.is_empty() {
        let sq = SeparationQuery::new(g, z_m.clone(), r_adj.clone(), z_o.clone())?;
        if let Some(path) = open_path(&sq) {
            return Ok(Some(FateFailure {
                index: 3,
                description: format!(
                    "{{{}}} not separated from {{{}}} given {{{}}}",
                    join(&z_m),
                    join(&r_adj),
                    join(&z_o)
                ),
                path: Some(path),
            }));
        }
    }
    Ok(None)
}

fn open_path(q: &SeparationQuery<'_>) -> Option<MixedPath> {
    if m_separated(q) {
        None
    } else {
        Some(find_open_path(q).expect("an open path exists when not separated"))
    }
}

/// `R_Φ` plus the indicators of every conditioned missing-affected variable,
/// including the exposure and outcome themselves when they can be missing.
fn fate_indicators(g: &Admg, q: &QuerySpec, r_phi: &NodeSet, z_m: &NodeSet) -> NodeSet {
    let mut conditioned = z_m.clone();
    conditioned.insert(q.exposure.clone());
    conditioned.insert(q.outcome.clone());
    let mut r = r_phi.clone();
    r.extend(indicators_for(g, &conditioned));
    r
}

/// All subsets of `pool` with at most `max` elements, by size then
/// lexicographically.
pub fn subsets_by_size(pool: &[NodeId], max: usize) -> Vec<NodeSet> {
    let mut out = Vec::new();
    for k in 0..=max.min(pool.len()) {
        combinations(pool, k, 0, &mut Vec::new(), &mut out);
    }
    out
}

fn combinations(pool: &[NodeId], k: usize, start: usize, cur: &mut Vec<NodeId>, out: &mut Vec<NodeSet>) {
    if cur.len() == k {
        out.push(cur.iter().cloned().collect());
        return;
    }
    for i in start..pool.len() {
        if pool.len() - i < k - cur.len() {
            break;
        }
        cur.push(pool[i].clone());
        combinations(pool, k, i + 1, cur, out);
        cur.pop();
    }
}

/// Searches adjustment sets by size, then lexicographically.
pub fn check_fate_recovery(lm: &LmGraph, q: &QuerySpec) -> Result<FateVerdict> {
    let g = lm.graph();
    q.validate(g)?;
    let r_phi = compute_r_phi(lm, q)?;
    let mut src = r_phi.clone();
    src.insert(q.exposure.clone());
    let de = g.descendants(&src)?;
    let pool: Vec<NodeId> = g
        .substantive()
        .into_iter()
        .filter(|n| *n != q.exposure && *n != q.outcome && !de.contains(n))
        .collect();
    let candidates = subsets_by_size(&pool, FATE_MAX_ADJUSTMENT);
    let results = par::map_slice(&candidates, |z| check_fate_adjustment(lm, q, &r_phi, z));
    let mut last = None;
    for (z, res) in candidates.iter().zip(results) {
        match res? {
            None => {
                let (z_m, z_o): (NodeSet, NodeSet) = z.iter().cloned().partition(|n| is_missing(g, n));
                let r_adj = fate_indicators(g, q, &r_phi, &z_m);
                let estimand = fate_estimand(q, &z_o, &z_m, &r_adj);
                return Ok(FateVerdict::Recoverable {
                    r_phi,
                    z_observed: z_o,
                    z_missing: z_m,
                    r_adj,
                    estimand,
                });
            }
            Some(f) => last = Some(f),
        }
    }
    let reason = match last {
        Some(f) => format!(
            "no adjustment set among {} candidates satisfies the criterion; last failure: condition ({}) {}{}",
            candidates.len(),
            roman(f.index),
            f.description,
            f.path.map(|p| format!(" via {p}")).unwrap_or_default()
        ),
        None => "no adjustment candidates".into(),
    };
    Ok(FateVerdict::NotDecided { r_phi, reason })
}

/// `E_{Z_o} E_{Z_m | Z_o, R=1} Δ_a E[Y | Z_o, Z_m, A=a, R=1]`.
fn fate_estimand(q: &QuerySpec, z_o: &NodeSet, z_m: &NodeSet, r_adj: &NodeSet) -> Estimand {
    let ones: Vec<Cond> = r_adj.iter().map(|r| Cond::Fixed(r.clone(), 1)).collect();
    let mut given: Vec<Cond> = z_o.iter().chain(z_m).map(|n| Cond::Var(n.clone())).collect();
    given.push(Cond::Treat(q.exposure.clone()));
    given.extend(ones.iter().cloned());
    let inner = Estimand::delta(Estimand::CondExp {
        outcome: q.outcome.clone(),
        given,
    });
    let mut zm_given: Vec<Cond> = z_o.iter().map(|n| Cond::Var(n.clone())).collect();
    zm_given.extend(ones);
    let mid = Estimand::integrate(z_m.iter().cloned().collect(), zm_given, inner);
    Estimand::integrate(z_o.iter().cloned().collect(), Vec::new(), mid)
}

fn roman(i: u8) -> &'static str {
    ["0", "i", "ii", "iii", "iv", "v"].get(i as usize).copied().unwrap_or("?")
}

/// Witness `(K, H, {L_r})`. `l` holds one entry per pattern in the support
/// of `R_K`; omitting patterns restricts the support.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NateWitness {
    pub k: Vec<NodeId>,
    pub h: NodeSet,
    pub l: BTreeMap<ContextPattern, NodeSet>,
}

impl NateWitness {
    pub fn size(&self) -> usize {
        self.k.len() + self.h.len() + self.l.values().map(NodeSet::len).sum::<usize>()
    }

    pub fn to_json(&self) -> Value {
        let l: BTreeMap<String, &NodeSet> = self.l.iter().map(|(p, s)| (p.to_string(), s)).collect();
        json!({"k": self.k, "h": self.h, "l": l})
    }

    /// Reads `{"k": [...], "h": [...], "l": {"R_Y0=0": [...], ...}}`.
    pub fn from_json(v: &Value) -> Result<Self> {
        let names = |key: &str| -> Result<Vec<NodeId>> {
            match v.get(key) {
                None | Some(Value::Null) => Ok(Vec::new()),
                Some(x) => Ok(serde_json::from_value(x.clone())?),
            }
        };
        let k = names("k")?;
        let h = names("h")?.into_iter().collect();
        let mut l = BTreeMap::new();
        if let Some(obj) = v.get("l").and_then(Value::as_object) {
            for (p, s) in obj {
                let set: Vec<NodeId> = serde_json::from_value(s.clone())?;
                l.insert(ContextPattern::parse(p)?, set.into_iter().collect());
            }
        }
        if l.is_empty() && k.is_empty() {
            l.insert(ContextPattern::new(), NodeSet::new());
        }
        Ok(Self { k, h, l })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NateVerdict {
    Recoverable {
        witness: NateWitness,
        estimand: Estimand,
    },
    ConditionFailed {
        pattern: ContextPattern,
        index: u8,
        description: String,
        path: Option<MixedPath>,
    },
}

impl NateVerdict {
    pub fn is_recoverable(&self) -> bool {
        matches!(self, NateVerdict::Recoverable { .. })
    }

    pub fn estimand(&self) -> Option<&Estimand> {
        match self {
            NateVerdict::Recoverable { estimand, .. } => Some(estimand),
            NateVerdict::ConditionFailed { .. } => None,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            NateVerdict::Recoverable { witness, estimand } => json!({
                "target": "NATE",
                "verdict": "recoverable",
                "witness": witness.to_json(),
                "estimand_text": estimand.to_string(),
                "estimand_latex": estimand.latex(),
            }),
            NateVerdict::ConditionFailed {
                pattern,
                index,
                description,
                path,
            } => json!({
                "target": "NATE",
                "verdict": "condition_failed",
                "pattern": pattern.to_string(),
                "condition": roman(*index),
                "description": description,
                "path": path.as_ref().map(|p| p.to_string()),
            }),
        }
    }
}

/// Per-pattern pieces derived from a witness.
struct PatternCtx {
    r_k: NodeSet,
    r_m: NodeSet,
    r_h: NodeSet,
    g_r: Admg,
    h_r: Admg,
}

fn r_k_of(lm: &LmGraph, k: &[NodeId]) -> Result<Vec<NodeId>> {
    k.iter()
        .map(|x| {
            lm.graph().indicator_of(x.as_str()).cloned().ok_or_else(|| Error::InvalidWitness {
                offending: vec![x.clone()],
                reason: "member of K has no indicator".into(),
            })
        })
        .collect()
}

fn pattern_ctx(lm: &LmGraph, q: &QuerySpec, k: &[NodeId], r_k: &[NodeId], h: &NodeSet, r: &ContextPattern, l: &NodeSet) -> Result<PatternCtx> {
    let g = lm.graph();
    let kset: NodeSet = k.iter().cloned().collect();
    let mut m_src = l.clone();
    m_src.insert(q.exposure.clone());
    m_src.insert(q.outcome.clone());
    let m: NodeSet = m_src
        .into_iter()
        .filter(|n| !kset.contains(n) && is_missing(g, n))
        .collect();
    let r_m = indicators_for(g, &m);
    let r_h = indicators_for(g, h);
    let g_r = context_graph(lm, r)?;
    let removed: Vec<(NodeId, NodeId)> = r_h.iter().flat_map(|ind| lm.labels_of(ind.as_str())).collect();
    let h_r = g_r.without_directed(&removed);
    Ok(PatternCtx {
        r_k: r_k.iter().cloned().collect(),
        r_m,
        r_h,
        g_r,
        h_r,
    })
}

fn union(sets: &[&NodeSet]) -> NodeSet {
    sets.iter().flat_map(|s| s.iter().cloned()).collect()
}

/// Conditions (ii) to (v) for one pattern.
fn check_pattern(q: &QuerySpec, ctx: &PatternCtx, l: &NodeSet) -> Result<Option<(u8, String, Option<MixedPath>)>> {
    let a = single(&q.exposure);
    let y = single(&q.outcome);

    let de_a = ctx.g_r.descendants(&a)?;
    let guarded = union(&[&ctx.r_k, l, &ctx.r_m, &ctx.r_h]);
    if let Some(bad) = guarded.iter().find(|n| de_a.contains(*n)) {
        let path = ctx.g_r.directed_path(&q.exposure, bad).map(|nodes| MixedPath {
            steps: vec![Step::Forward; nodes.len() - 1],
            nodes,
        });
        return Ok(Some((2, format!("{bad} is a descendant of {} in the context graph", q.exposure), path)));
    }

    let over_a = ctx.g_r.mutilate_over(&a)?;
    let z3 = union(&[&a, &ctx.r_k]);
    let sq = SeparationQuery::new(&over_a, y.clone(), ctx.r_m.clone(), z3.clone())?;
    if let Some(p) = open_path(&sq) {
        return Ok(Some((3, format!("{} not separated from {{{}}} given {{{}}}", q.outcome, join(&ctx.r_m), join(&z3)), Some(p))));
    }

    let z4 = union(&[&a, l, &ctx.r_k, &ctx.r_m]);
    let sq = SeparationQuery::new(&over_a, y.clone(), ctx.r_h.clone(), z4.clone())?;
    if let Some(p) = open_path(&sq) {
        return Ok(Some((4, format!("{} not separated from {{{}}} given {{{}}}", q.outcome, join(&ctx.r_h), join(&z4)), Some(p))));
    }

    let under_a = ctx.h_r.mutilate_under(&a)?;
    let z5 = union(&[l, &ctx.r_k, &ctx.r_m, &ctx.r_h]);
    let sq = SeparationQuery::new(&under_a, y, a, z5.clone())?;
    if let Some(p) = open_path(&sq) {
        return Ok(Some((5, format!("{} not separated from {} given {{{}}}", q.outcome, q.exposure, join(&z5)), Some(p))));
    }
    Ok(None)
}

fn validate_witness(lm: &LmGraph, q: &QuerySpec, w: &NateWitness) -> Result<Vec<NodeId>> {
    let g = lm.graph();
    let v_sh = lm.shifts().shifted_nodes();
    let bad = |offending: Vec<NodeId>, reason: &str| Error::InvalidWitness {
        offending,
        reason: reason.into(),
    };
    let kset: NodeSet = w.k.iter().cloned().collect();
    if kset.len() != w.k.len() {
        return Err(bad(w.k.clone(), "K lists a variable twice"));
    }
    let outside: Vec<NodeId> = kset
        .iter()
        .chain(&w.h)
        .filter(|n| !v_sh.contains(*n) || **n == q.exposure || **n == q.outcome)
        .cloned()
        .collect();
    if !outside.is_empty() {
        return Err(bad(outside, "K and H must be shift-inducing variables other than the exposure and outcome"));
    }
    let shared: Vec<NodeId> = kset.intersection(&w.h).cloned().collect();
    if !shared.is_empty() {
        return Err(bad(shared, "K and H must be disjoint"));
    }
    let r_k = r_k_of(lm, &w.k)?;
    let unlabeled: Vec<NodeId> = w
        .k
        .iter()
        .zip(&r_k)
        .filter(|(_, rj)| lm.labels_of(rj.as_str()).is_empty())
        .map(|(kj, _)| kj.clone())
        .collect();
    if !unlabeled.is_empty() {
        return Err(bad(unlabeled, "every member of K needs an indicator with labeled edges"));
    }
    if w.l.is_empty() {
        return Err(bad(Vec::new(), "no pattern in the support of R_K"));
    }
    for (r, l) in &w.l {
        let keys: Vec<&NodeId> = r.iter().map(|(n, _)| n).collect();
        let expected: Vec<&NodeId> = {
            let mut v: Vec<&NodeId> = r_k.iter().collect();
            v.sort();
            v
        };
        if keys != expected {
            return Err(bad(r_k.clone(), &format!("pattern {r} does not assign exactly the indicators of K")));
        }
        let misplaced: Vec<NodeId> = l
            .iter()
            .filter(|n| {
                **n == q.exposure
                    || **n == q.outcome
                    || w.h.contains(*n)
                    || !g.kind(n.as_str()).is_some_and(NodeKind::is_substantive)
            })
            .cloned()
            .collect();
        if !misplaced.is_empty() {
            return Err(bad(misplaced, &format!("L for {r} must be substantive and avoid the exposure, outcome and H")));
        }
        let offending: Vec<NodeId> = w
            .k
            .iter()
            .zip(&r_k)
            .filter(|(kj, rj)| {
                let on = r.get(rj.as_str()) == Some(1);
                on != l.contains(*kj)
            })
            .map(|(kj, _)| kj.clone())
            .collect();
        if !offending.is_empty() {
            return Err(bad(offending, &format!("condition (i) fails for {r}: L must contain exactly the K_j observed in the pattern")));
        }
    }
    Ok(r_k)
}

/// Checks a witness pattern by pattern and emits the weighted estimand.
pub fn check_nate_recovery(lm: &LmGraph, q: &QuerySpec, w: &NateWitness) -> Result<NateVerdict> {
    q.validate(lm.graph())?;
    let r_k = validate_witness(lm, q, w)?;
    let mut terms = Vec::new();
    for (r, l) in &w.l {
        let ctx = pattern_ctx(lm, q, &w.k, &r_k, &w.h, r, l)?;
        if let Some((index, description, path)) = check_pattern(q, &ctx, l)? {
            return Ok(NateVerdict::ConditionFailed {
                pattern: r.clone(),
                index,
                description,
                path,
            });
        }
        terms.push(nate_term(q, r, l, &ctx));
    }
    Ok(NateVerdict::Recoverable {
        witness: w.clone(),
        estimand: Estimand::sum(terms),
    })
}

/// `P(R_K=r) E_{L_r | R_K=r, R_M=1} Δ_a E[Y | L_r, A=a, R_K=r, R_M=1, R_H=0]`.
fn nate_term(q: &QuerySpec, r: &ContextPattern, l: &NodeSet, ctx: &PatternCtx) -> Estimand {
    let mut events: Vec<Cond> = r.iter().map(|(n, v)| Cond::Fixed(n.clone(), v)).collect();
    events.extend(ctx.r_m.iter().map(|n| Cond::Fixed(n.clone(), 1)));
    let mut given: Vec<Cond> = l.iter().map(|n| Cond::Var(n.clone())).collect();
    given.push(Cond::Treat(q.exposure.clone()));
    given.extend(events.iter().cloned());
    given.extend(ctx.r_h.iter().map(|n| Cond::Fixed(n.clone(), 0)));
    let inner = Estimand::delta(Estimand::CondExp {
        outcome: q.outcome.clone(),
        given,
    });
    let body = Estimand::integrate(l.iter().cloned().collect(), events, inner);
    Estimand::weighted(r.iter().map(|(n, v)| (n.clone(), v)).collect(), body)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchCaps {
    pub k_max: usize,
    pub h_max: usize,
    pub l_max: usize,
}

impl Default for SearchCaps {
    fn default() -> Self {
        Self {
            k_max: 2,
            h_max: 2,
            l_max: 6,
        }
    }
}

/// Smallest passing witness: minimal total size, ties broken by the order
/// of `(K, H)` candidates (size, then lexicographic) and then of each `L_r`.
pub fn search_nate_witness(lm: &LmGraph, q: &QuerySpec, caps: SearchCaps) -> Result<Option<NateWitness>> {
    let g = lm.graph();
    q.validate(g)?;
    let v_sh: Vec<NodeId> = lm
        .shifts()
        .shifted_nodes()
        .into_iter()
        .filter(|n| *n != q.exposure && *n != q.outcome && g.indicator_of(n.as_str()).is_some())
        .collect();
    let labeled: Vec<NodeId> = v_sh
        .iter()
        .filter(|n| g.indicator_of(n.as_str()).is_some_and(|r| !lm.labels_of(r.as_str()).is_empty()))
        .cloned()
        .collect();
    let mut pairs = Vec::new();
    for k in subsets_by_size(&labeled, caps.k_max) {
        let rest: Vec<NodeId> = v_sh.iter().filter(|n| !k.contains(*n)).cloned().collect();
        for h in subsets_by_size(&rest, caps.h_max) {
            pairs.push((k.clone(), h));
        }
    }
    pairs.sort_by_key(|(k, h)| k.len() + h.len());

    let found = par::map_slice(&pairs, |(k, h)| witness_for(lm, q, k, h, caps.l_max));
    let mut best: Option<NateWitness> = None;
    for w in found {
        if let Some(w) = w? {
            if best.as_ref().is_none_or(|b| w.size() < b.size()) {
                best = Some(w);
            }
        }
    }
    Ok(best)
}

fn witness_for(lm: &LmGraph, q: &QuerySpec, k: &NodeSet, h: &NodeSet, l_max: usize) -> Result<Option<NateWitness>> {
    let g = lm.graph();
    let k: Vec<NodeId> = k.iter().cloned().collect();
    let r_k = r_k_of(lm, &k)?;
    let pool: Vec<NodeId> = g
        .substantive()
        .into_iter()
        .filter(|n| *n != q.exposure && *n != q.outcome && !h.contains(n) && !k.contains(n))
        .collect();
    let subsets = subsets_by_size(&pool, l_max);
    let mut l_map = BTreeMap::new();
    for r in ContextPattern::all_over(&r_k) {
        let forced: NodeSet = k
            .iter()
            .zip(&r_k)
            .filter(|(_, rj)| r.get(rj.as_str()) == Some(1))
            .map(|(kj, _)| kj.clone())
            .collect();
        let mut chosen = None;
        for extra in &subsets {
            if extra.len() + forced.len() > l_max {
                break;
            }
            let l: NodeSet = forced.union(extra).cloned().collect();
            let ctx = pattern_ctx(lm, q, &k, &r_k, h, &r, &l)?;
            if check_pattern(q, &ctx, &l)?.is_none() {
                chosen = Some(l);
                break;
            }
        }
        match chosen {
            Some(l) => {
                l_map.insert(r, l);
            }
            None => return Ok(None),
        }
    }
    Ok(Some(NateWitness {
        k,
        h: h.clone(),
        l: l_map,
    }))
}

/// Runs the requested check. NATE uses `witness` when given and the search
/// otherwise.
pub fn check(lm: &LmGraph, q: &QuerySpec, witness: Option<&NateWitness>, caps: SearchCaps) -> Result<Value> {
    match q.target {
        Target::Fate => Ok(check_fate_recovery(lm, q)?.to_json()),
        Target::Nate => {
            if let Some(w) = witness {
                return Ok(check_nate_recovery(lm, q, w)?.to_json());
            }
            match search_nate_witness(lm, q, caps)? {
                Some(w) => Ok(check_nate_recovery(lm, q, &w)?.to_json()),
                None => Ok(json!({
                    "target": "NATE",
                    "verdict": "not_decided",
                    "reason": format!(
                        "no witness with |K| <= {}, |H| <= {}, |L_r| <= {}",
                        caps.k_max, caps.h_max, caps.l_max
                    ),
                })),
            }
        }
    }
}
