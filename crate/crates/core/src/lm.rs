//! Labeled missingness graphs.
//!
//! An lm-graph starts from an m-graph, adds `R_X -> Z` for every shifted child
//! `Z` of `X`, and labels `X -> Z` with the context `R_X = 0` unless `X <-> Z`
//! is present. The set of shift-inducing indicators is derived from the
//! [`ShiftSpec`]; it is never declared separately.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Admg, GraphJson, NodeId, NodeKind, NodeSet};
use crate::separation::is_m_separated;

/// Shifted children `S_X` for every shift-inducing missing-affected `X`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ShiftSpec {
    shifted_children: BTreeMap<NodeId, NodeSet>,
}

impl ShiftSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with<I, S>(mut self, x: impl Into<NodeId>, children: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<NodeId>,
    {
        self.insert(x, children);
        self
    }

    pub fn insert<I, S>(&mut self, x: impl Into<NodeId>, children: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<NodeId>,
    {
        self.shifted_children
            .entry(x.into())
            .or_default()
            .extend(children.into_iter().map(Into::into));
    }

    pub fn is_empty(&self) -> bool {
        self.shifted_children.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &NodeSet)> {
        self.shifted_children.iter()
    }

    /// `V_sh`.
    pub fn shifted_nodes(&self) -> NodeSet {
        self.shifted_children.keys().cloned().collect()
    }

    pub fn children_of(&self, x: &str) -> Option<&NodeSet> {
        self.shifted_children.get(x)
    }

    /// Contextual parents `T_Z`: the `X` with `Z` in `S_X`.
    pub fn contextual_parents(&self, z: &str) -> NodeSet {
        self.shifted_children
            .iter()
            .filter(|(_, s)| s.contains(z))
            .map(|(x, _)| x.clone())
            .collect()
    }
}

/// A labeled edge `X -> Z`, deactivated in the context `R_X = 0`.
pub type Label = (NodeId, NodeId);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LmGraph {
    graph: Admg,
    labels: Vec<Label>,
    base: Admg,
    shifts: ShiftSpec,
}

impl LmGraph {
    /// Augmented graph with the `R_X -> Z` arrows.
    pub fn graph(&self) -> &Admg {
        &self.graph
    }

    /// Underlying m-graph.
    pub fn base(&self) -> &Admg {
        &self.base
    }

    pub fn shifts(&self) -> &ShiftSpec {
        &self.shifts
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn is_labeled(&self, x: &str, z: &str) -> bool {
        self.labels
            .iter()
            .any(|(a, b)| a.as_str() == x && b.as_str() == z)
    }

    /// `R_sh`: indicators of the shift-inducing nodes.
    pub fn shift_indicators(&self) -> NodeSet {
        self.shifts
            .shifted_nodes()
            .iter()
            .filter_map(|x| self.graph.indicator_of(x.as_str()).cloned())
            .collect()
    }

    /// `L_R`: labels whose context is the given indicator.
    pub fn labels_of(&self, indicator: &str) -> Vec<Label> {
        let Some(NodeKind::Indicator { of }) = self.graph.kind(indicator) else {
            return Vec::new();
        };
        self.labels
            .iter()
            .filter(|(x, _)| x == of)
            .cloned()
            .collect()
    }

    /// Assembles an lm-graph without any validation. Only for hand-built
    /// counterexamples; use [`build_lm_graph`] otherwise.
    pub fn from_raw_parts(graph: Admg, base: Admg, shifts: ShiftSpec, labels: Vec<Label>) -> Self {
        Self {
            graph,
            labels,
            base,
            shifts,
        }
    }

    pub fn to_json(&self) -> LmGraphJson {
        LmGraphJson {
            graph: GraphJson::from(&self.base),
            shifts: self
                .shifts
                .iter()
                .map(|(x, s)| (x.to_string(), s.iter().map(|n| n.to_string()).collect()))
                .collect(),
            labels: Some(
                self.labels
                    .iter()
                    .map(|(x, z)| [x.to_string(), z.to_string()])
                    .collect(),
            ),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("lm-graph serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: LmGraphJson = serde_json::from_str(s)?;
        raw.build()
    }
}

/// Graph file with the optional `"shifts"` extension. `"labels"` is emitted for
/// display and ignored on input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmGraphJson {
    #[serde(flatten)]
    pub graph: GraphJson,
    #[serde(default)]
    pub shifts: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<[String; 2]>>,
}

impl LmGraphJson {
    pub fn build(&self) -> Result<LmGraph> {
        let mut spec = ShiftSpec::new();
        for (x, children) in &self.shifts {
            spec.insert(x.as_str(), children.iter().map(String::as_str));
        }
        // Files may list the augmented graph; drop the implied R_X -> Z arrows.
        let kinds: BTreeMap<&str, Option<&str>> = self
            .graph
            .nodes
            .iter()
            .map(|n| {
                let of = n.of.as_deref().filter(|_| n.kind == "indicator");
                (n.name.as_str(), of)
            })
            .collect();
        let mut raw = self.graph.clone();
        raw.directed.retain(|[a, b]| {
            let implied = kinds
                .get(a.as_str())
                .copied()
                .flatten()
                .and_then(|x| spec.children_of(x))
                .is_some_and(|s| s.contains(b.as_str()));
            !implied
        });
        build_lm_graph(&raw.to_admg()?, &spec)
    }
}

/// Checks the m-graph assumption: indicators have no substantive descendants.
pub fn validate_m_graph(base: &Admg) -> Result<()> {
    for r in base.indicators() {
        let de = base.descendants(&std::iter::once(r.clone()).collect())?;
        if let Some(bad) = de
            .iter()
            .find(|n| base.kind(n.as_str()).is_some_and(NodeKind::is_substantive))
        {
            return Err(Error::NotAnMGraph(format!(
                "indicator {r} has substantive descendant {bad}"
            )));
        }
    }
    Ok(())
}

pub fn build_lm_graph(base: &Admg, spec: &ShiftSpec) -> Result<LmGraph> {
    validate_m_graph(base)?;
    let mut graph = base.clone();
    let mut labels = BTreeSet::new();
    for (x, children) in spec.iter() {
        let invalid = |reason: String| Error::InvalidShiftSet {
            node: x.to_string(),
            reason,
        };
        match base.kind(x.as_str()) {
            Some(NodeKind::MissingAffected) => {}
            Some(_) => return Err(invalid("only missing-affected nodes can induce shifts".into())),
            None => return Err(Error::NodeNotFound(x.to_string())),
        }
        if children.is_empty() {
            return Err(invalid("shifted children must be nonempty".into()));
        }
        let r_x = base
            .indicator_of(x.as_str())
            .ok_or_else(|| invalid("no missingness indicator in the graph".into()))?
            .clone();
        let single: NodeSet = std::iter::once(x.clone()).collect();
        let ch = base.children(&single)?;
        if let Some(z) = children.iter().find(|z| !ch.contains(*z)) {
            return Err(invalid(format!("{z} is not a child of {x}")));
        }
        if let Some(z) = children
            .iter()
            .find(|z| matches!(base.kind(z.as_str()), Some(NodeKind::Proxy { .. })))
        {
            return Err(invalid(format!("{z} is a proxy and cannot be shifted")));
        }
        let an_r = base.ancestors(&std::iter::once(r_x.clone()).collect())?;
        if let Some(z) = children.iter().find(|z| an_r.contains(*z)) {
            return Err(Error::FeedbackRisk {
                node: x.to_string(),
                child: z.to_string(),
            });
        }
        for z in children {
            graph.add_directed(r_x.clone(), z.clone())?;
            if !base.has_bidirected(x.as_str(), z.as_str()) {
                labels.insert((x.clone(), z.clone()));
            }
        }
    }
    Ok(LmGraph {
        graph,
        labels: labels.into_iter().collect(),
        base: base.clone(),
        shifts: spec.clone(),
    })
}

/// Regularity: every labeled `X -> Z` has `R_X` among the parents of `Z`.
/// Maximality holds structurally for binary indicators with the single
/// context value 0, so it reduces to "no label listed twice".
pub fn check_regular_maximal(lm: &LmGraph) -> bool {
    let g = lm.graph();
    let regular = lm.labels().iter().all(|(x, z)| {
        g.indicator_of(x.as_str())
            .is_some_and(|r| g.has_directed(r.as_str(), z.as_str()))
    });
    let distinct: BTreeSet<&Label> = lm.labels().iter().collect();
    regular && distinct.len() == lm.labels().len()
}

/// Assignment of 0/1 values to a subset of the shift-inducing indicators.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContextPattern(BTreeMap<NodeId, u8>);

impl ContextPattern {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, indicator: impl Into<NodeId>, value: u8) -> Self {
        self.0.insert(indicator.into(), value.min(1));
        self
    }

    pub fn get(&self, indicator: &str) -> Option<u8> {
        self.0.get(indicator).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, u8)> {
        self.0.iter().map(|(k, v)| (k, *v))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// All `2^k` patterns over `indicators`, in lexicographic order of the
    /// value vector (all zeros first).
    pub fn all_over(indicators: &[NodeId]) -> Vec<ContextPattern> {
        let k = indicators.len();
        (0..1usize << k)
            .map(|bits| {
                ContextPattern(
                    indicators
                        .iter()
                        .enumerate()
                        .map(|(j, r)| (r.clone(), ((bits >> (k - 1 - j)) & 1) as u8))
                        .collect(),
                )
            })
            .collect()
    }

    /// Parses `R_X=0,R_Z=1`; the empty string is the empty pattern.
    pub fn parse(s: &str) -> Result<ContextPattern> {
        let mut p = ContextPattern::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad pattern entry {part:?}")))?;
            let v = match v.trim() {
                "0" => 0,
                "1" => 1,
                other => return Err(Error::Parse(format!("pattern value must be 0/1, got {other:?}"))),
            };
            p = p.set(k.trim(), v);
        }
        Ok(p)
    }
}

impl fmt::Display for ContextPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(","))
    }
}

/// `G_r`: removes `L_R` for every indicator set to 0 in `r`.
pub fn context_graph(lm: &LmGraph, r: &ContextPattern) -> Result<Admg> {
    let mut removed = Vec::new();
    for (ind, value) in r.iter() {
        if !lm.graph().contains(ind.as_str()) {
            return Err(Error::NodeNotFound(ind.to_string()));
        }
        let labels = lm.labels_of(ind.as_str());
        if labels.is_empty() {
            return Err(Error::InvalidQuery(format!(
                "{ind} is not an indicator with labeled edges"
            )));
        }
        if value == 0 {
            removed.extend(labels);
        }
    }
    Ok(lm.graph().without_directed(&removed))
}

/// Sufficient graphical condition for the CSI `Z _||_ X | W, R_X = 0`:
/// `Z` m-separated from `X` given `W` and `R_X` once `X -> Z` is deleted.
pub fn csi_holds_graphically(lm: &LmGraph, edge: (&str, &str), w: &NodeSet) -> Result<bool> {
    let (x, z) = edge;
    if !lm.is_labeled(x, z) {
        return Err(Error::InvalidQuery(format!("{x} -> {z} is not a labeled edge")));
    }
    let r_x = lm
        .graph()
        .indicator_of(x)
        .ok_or_else(|| Error::InvalidQuery(format!("{x} has no indicator")))?
        .clone();
    let pruned = lm
        .graph()
        .without_directed(&[(NodeId::from(x), NodeId::from(z))]);
    let mut given = w.clone();
    given.insert(r_x);
    is_m_separated(
        &pruned,
        &std::iter::once(NodeId::from(z)).collect(),
        &std::iter::once(NodeId::from(x)).collect(),
        &given,
    )
}
