//! Acyclic directed mixed graphs with the m-graph node taxonomy.
//!
//! Nodes are substantive (fully observed or missingness-affected), missingness
//! indicators, or proxies. Directed edges carry causation, bidirected edges
//! latent confounding.
//!
//! **Ancestors and descendants are reflexive**: `ancestors(s)` and
//! `descendants(s)` always contain `s` itself. Every criterion in
//! [`crate::recovery`] relies on this convention.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node identifier, unique within a graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(name: impl Into<String>) -> Self {
        NodeId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

impl std::borrow::Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

pub type NodeSet = BTreeSet<NodeId>;

/// Builds a [`NodeSet`] from string names.
pub fn node_set<I, S>(names: I) -> NodeSet
where
    I: IntoIterator<Item = S>,
    S: Into<NodeId>,
{
    names.into_iter().map(Into::into).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Observed,
    MissingAffected,
    Indicator { of: NodeId },
    Proxy { of: NodeId },
}

impl NodeKind {
    pub fn is_substantive(&self) -> bool {
        matches!(self, NodeKind::Observed | NodeKind::MissingAffected)
    }
}

/// Acyclic directed mixed graph.
///
/// Equality is structural: node set plus edge sets, independent of insertion order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Admg {
    nodes: BTreeMap<NodeId, NodeKind>,
    directed: BTreeSet<(NodeId, NodeId)>,
    /// Stored with the smaller endpoint first.
    bidirected: BTreeSet<(NodeId, NodeId)>,
}

impl Admg {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, name: impl Into<NodeId>, kind: NodeKind) -> Result<()> {
        let name = name.into();
        if name.as_str().is_empty() {
            return Err(Error::InvalidNode("node names must be nonempty".into()));
        }
        if self.nodes.contains_key(&name) {
            return Err(Error::DuplicateNode(name.to_string()));
        }
        match &kind {
            NodeKind::Indicator { of } | NodeKind::Proxy { of } => {
                match self.nodes.get(of) {
                    Some(NodeKind::MissingAffected) => {}
                    Some(_) => {
                        return Err(Error::InvalidNode(format!(
                            "{name} references {of}, which is not missing-affected"
                        )))
                    }
                    None => return Err(Error::NodeNotFound(of.to_string())),
                }
                let clash = self.nodes.values().any(|k| {
                    std::mem::discriminant(k) == std::mem::discriminant(&kind)
                        && match k {
                            NodeKind::Indicator { of: o } | NodeKind::Proxy { of: o } => o == of,
                            _ => false,
                        }
                });
                if clash {
                    return Err(Error::InvalidNode(format!(
                        "{of} already has a node of this kind"
                    )));
                }
            }
            _ => {}
        }
        self.nodes.insert(name, kind);
        Ok(())
    }

    /// Adds `from -> to`, rejecting self-loops and edges that close a directed cycle.
    pub fn add_directed(&mut self, from: impl Into<NodeId>, to: impl Into<NodeId>) -> Result<()> {
        let (from, to) = (from.into(), to.into());
        self.require(&from)?;
        self.require(&to)?;
        if from == to {
            return Err(Error::InvalidEdge {
                from: from.to_string(),
                to: to.to_string(),
                reason: "self-loop".into(),
            });
        }
        if self.directed.contains(&(from.clone(), to.clone())) {
            return Ok(());
        }
        if self.reaches(&to, &from) {
            let mut cycle = self.directed_path(&to, &from).unwrap_or_default();
            cycle.push(to.clone());
            return Err(Error::CycleDetected { cycle });
        }
        self.directed.insert((from, to));
        Ok(())
    }

    pub fn add_bidirected(&mut self, a: impl Into<NodeId>, b: impl Into<NodeId>) -> Result<()> {
        let (a, b) = (a.into(), b.into());
        self.require(&a)?;
        self.require(&b)?;
        if a == b {
            return Err(Error::InvalidEdge {
                from: a.to_string(),
                to: b.to_string(),
                reason: "bidirected edges must connect distinct nodes".into(),
            });
        }
        self.bidirected.insert(ordered(a, b));
        Ok(())
    }

    fn require(&self, n: &NodeId) -> Result<()> {
        if self.nodes.contains_key(n) {
            Ok(())
        } else {
            Err(Error::NodeNotFound(n.to_string()))
        }
    }

    fn require_all(&self, s: &NodeSet) -> Result<()> {
        s.iter().try_for_each(|n| self.require(n))
    }

    pub fn contains(&self, n: &str) -> bool {
        self.nodes.contains_key(n)
    }

    pub fn kind(&self, n: &str) -> Option<&NodeKind> {
        self.nodes.get(n)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.keys()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&NodeId, &NodeKind)> {
        self.nodes.iter()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn all_nodes(&self) -> NodeSet {
        self.nodes.keys().cloned().collect()
    }

    pub fn directed_edges(&self) -> impl Iterator<Item = &(NodeId, NodeId)> {
        self.directed.iter()
    }

    pub fn bidirected_edges(&self) -> impl Iterator<Item = &(NodeId, NodeId)> {
        self.bidirected.iter()
    }

    pub fn has_directed(&self, from: &str, to: &str) -> bool {
        self.directed
            .contains(&(NodeId::from(from), NodeId::from(to)))
    }

    pub fn has_bidirected(&self, a: &str, b: &str) -> bool {
        self.bidirected
            .contains(&ordered(NodeId::from(a), NodeId::from(b)))
    }

    /// The indicator `R_V` of a missing-affected node, if present.
    pub fn indicator_of(&self, v: &str) -> Option<&NodeId> {
        self.nodes.iter().find_map(|(id, k)| match k {
            NodeKind::Indicator { of } if of.as_str() == v => Some(id),
            _ => None,
        })
    }

    pub fn proxy_of(&self, v: &str) -> Option<&NodeId> {
        self.nodes.iter().find_map(|(id, k)| match k {
            NodeKind::Proxy { of } if of.as_str() == v => Some(id),
            _ => None,
        })
    }

    pub fn indicators(&self) -> NodeSet {
        self.nodes_where(|k| matches!(k, NodeKind::Indicator { .. }))
    }

    pub fn missing_affected(&self) -> NodeSet {
        self.nodes_where(|k| matches!(k, NodeKind::MissingAffected))
    }

    pub fn substantive(&self) -> NodeSet {
        self.nodes_where(NodeKind::is_substantive)
    }

    fn nodes_where(&self, pred: impl Fn(&NodeKind) -> bool) -> NodeSet {
        self.nodes
            .iter()
            .filter(|(_, k)| pred(k))
            .map(|(n, _)| n.clone())
            .collect()
    }

    pub fn parents(&self, s: &NodeSet) -> Result<NodeSet> {
        self.require_all(s)?;
        Ok(self
            .directed
            .iter()
            .filter(|(_, to)| s.contains(to))
            .map(|(from, _)| from.clone())
            .collect())
    }

    pub fn children(&self, s: &NodeSet) -> Result<NodeSet> {
        self.require_all(s)?;
        Ok(self
            .directed
            .iter()
            .filter(|(from, _)| s.contains(from))
            .map(|(_, to)| to.clone())
            .collect())
    }

    /// Nodes joined to `s` by a bidirected edge.
    pub fn siblings(&self, s: &NodeSet) -> Result<NodeSet> {
        self.require_all(s)?;
        let mut out = NodeSet::new();
        for (a, b) in &self.bidirected {
            if s.contains(a) {
                out.insert(b.clone());
            }
            if s.contains(b) {
                out.insert(a.clone());
            }
        }
        Ok(out)
    }

    /// Reflexive ancestors of `s`.
    pub fn ancestors(&self, s: &NodeSet) -> Result<NodeSet> {
        self.require_all(s)?;
        Ok(self.closure(s, |g, n| g.parents_of(n)))
    }

    /// Reflexive descendants of `s`.
    pub fn descendants(&self, s: &NodeSet) -> Result<NodeSet> {
        self.require_all(s)?;
        Ok(self.closure(s, |g, n| g.children_of(n)))
    }

    /// Complement of the reflexive descendants.
    pub fn nondescendants(&self, s: &NodeSet) -> Result<NodeSet> {
        let de = self.descendants(s)?;
        Ok(self
            .nodes
            .keys()
            .filter(|n| !de.contains(*n))
            .cloned()
            .collect())
    }

    fn parents_of<'a>(&'a self, n: &'a NodeId) -> impl Iterator<Item = &'a NodeId> + 'a {
        self.directed
            .iter()
            .filter(move |(_, to)| to == n)
            .map(|(from, _)| from)
    }

    fn children_of<'a>(&'a self, n: &'a NodeId) -> impl Iterator<Item = &'a NodeId> + 'a {
        self.directed
            .range((n.clone(), NodeId(String::new()))..)
            .take_while(move |(from, _)| from == n)
            .map(|(_, to)| to)
    }

    fn closure<'a, F, I>(&'a self, start: &NodeSet, step: F) -> NodeSet
    where
        F: Fn(&'a Self, &'a NodeId) -> I,
        I: Iterator<Item = &'a NodeId>,
    {
        let mut seen: NodeSet = start.clone();
        let mut queue: VecDeque<&NodeId> = start
            .iter()
            .filter_map(|n| self.nodes.get_key_value(n).map(|(k, _)| k))
            .collect();
        while let Some(n) = queue.pop_front() {
            for next in step(self, n) {
                if seen.insert(next.clone()) {
                    queue.push_back(next);
                }
            }
        }
        seen
    }

    fn reaches(&self, from: &NodeId, to: &NodeId) -> bool {
        self.closure(&std::iter::once(from.clone()).collect(), |g, n| g.children_of(n))
            .contains(to)
    }

    /// Some directed path `from -> ... -> to`, endpoints included.
    pub fn directed_path(&self, from: &NodeId, to: &NodeId) -> Option<Vec<NodeId>> {
        let mut prev: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        let mut queue = VecDeque::from([from.clone()]);
        let mut seen: NodeSet = std::iter::once(from.clone()).collect();
        while let Some(n) = queue.pop_front() {
            if &n == to {
                let mut path = vec![n.clone()];
                let mut cur = n;
                while let Some(p) = prev.get(&cur) {
                    path.push(p.clone());
                    cur = p.clone();
                }
                path.reverse();
                return Some(path);
            }
            for c in self.children_of(&n) {
                if seen.insert(c.clone()) {
                    prev.insert(c.clone(), n.clone());
                    queue.push_back(c.clone());
                }
            }
        }
        None
    }

    /// `G[overline s]`: drop every edge with an arrowhead at `s`, that is
    /// directed edges into `s` and bidirected edges touching `s`.
    pub fn mutilate_over(&self, s: &NodeSet) -> Result<Admg> {
        self.require_all(s)?;
        let mut g = self.clone();
        g.directed.retain(|(_, to)| !s.contains(to));
        g.bidirected.retain(|(a, b)| !s.contains(a) && !s.contains(b));
        Ok(g)
    }

    /// `G[underline s]`: drop directed edges leaving `s`.
    pub fn mutilate_under(&self, s: &NodeSet) -> Result<Admg> {
        self.require_all(s)?;
        let mut g = self.clone();
        g.directed.retain(|(from, _)| !s.contains(from));
        Ok(g)
    }

    /// Removes the listed directed edges; absent edges are ignored.
    pub fn without_directed<'a, I>(&self, edges: I) -> Admg
    where
        I: IntoIterator<Item = &'a (NodeId, NodeId)>,
    {
        let mut g = self.clone();
        for e in edges {
            g.directed.remove(e);
        }
        g
    }

    /// Topological order with lexicographic tie-breaking on node names.
    pub fn topological_order(&self) -> Result<Vec<NodeId>> {
        let mut indegree: BTreeMap<&NodeId, usize> = self.nodes.keys().map(|n| (n, 0)).collect();
        for (_, to) in &self.directed {
            *indegree.get_mut(to).expect("edge endpoint exists") += 1;
        }
        let mut ready: BTreeSet<&NodeId> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(n, _)| *n)
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(n) = ready.pop_first() {
            order.push(n.clone());
            for c in self.children_of(n) {
                let d = indegree.get_mut(c).expect("edge endpoint exists");
                *d -= 1;
                if *d == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() == self.nodes.len() {
            return Ok(order);
        }
        let remaining: NodeSet = indegree
            .into_iter()
            .filter(|(_, d)| *d > 0)
            .map(|(n, _)| n.clone())
            .collect();
        Err(Error::CycleDetected {
            cycle: self.find_cycle(&remaining),
        })
    }

    /// Walks backwards through parents inside `pool` until a node repeats.
    fn find_cycle(&self, pool: &NodeSet) -> Vec<NodeId> {
        let Some(start) = pool.iter().next() else {
            return Vec::new();
        };
        let mut walk = vec![start.clone()];
        let mut pos: BTreeMap<NodeId, usize> = BTreeMap::from([(start.clone(), 0)]);
        loop {
            let cur = walk.last().expect("walk is nonempty").clone();
            let Some(p) = self.parents_of(&cur).find(|p| pool.contains(*p)).cloned() else {
                return walk;
            };
            if let Some(&i) = pos.get(&p) {
                let mut cycle: Vec<NodeId> = walk[i..].to_vec();
                cycle.reverse();
                cycle.push(cycle[0].clone());
                return cycle;
            }
            pos.insert(p.clone(), walk.len());
            walk.push(p);
        }
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_ok()
    }

    /// Builds a graph from raw parts, validating every invariant.
    pub fn from_parts<N, D, B>(nodes: N, directed: D, bidirected: B) -> Result<Admg>
    where
        N: IntoIterator<Item = (NodeId, NodeKind)>,
        D: IntoIterator<Item = (NodeId, NodeId)>,
        B: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let mut g = Admg::new();
        let (plain, derived): (Vec<_>, Vec<_>) = nodes.into_iter().partition(|(_, k)| {
            matches!(k, NodeKind::Observed | NodeKind::MissingAffected)
        });
        for (n, k) in plain.into_iter().chain(derived) {
            g.add_node(n, k)?;
        }
        for (a, b) in directed {
            g.add_directed(a, b)?;
        }
        for (a, b) in bidirected {
            g.add_bidirected(a, b)?;
        }
        Ok(g)
    }

    pub fn to_json_value(&self) -> GraphJson {
        GraphJson::from(self)
    }

    pub fn from_json_str(s: &str) -> Result<Admg> {
        let raw: GraphJson = serde_json::from_str(s)?;
        raw.to_admg()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("graph serializes")
    }
}

fn ordered(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Serialized node entry: `{"name":"R_Y0","kind":"indicator","of":"Y0"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeJson {
    pub name: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub of: Option<String>,
}

/// Wire format for [`Admg`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub nodes: Vec<NodeJson>,
    #[serde(default)]
    pub directed: Vec<[String; 2]>,
    #[serde(default)]
    pub bidirected: Vec<[String; 2]>,
}

impl GraphJson {
    pub fn to_admg(&self) -> Result<Admg> {
        let nodes = self
            .nodes
            .iter()
            .map(|n| {
                let of = || {
                    n.of.clone().map(NodeId::from).ok_or_else(|| {
                        Error::InvalidNode(format!("{} of kind {} needs \"of\"", n.name, n.kind))
                    })
                };
                let kind = match n.kind.as_str() {
                    "observed" => NodeKind::Observed,
                    "missing" => NodeKind::MissingAffected,
                    "indicator" => NodeKind::Indicator { of: of()? },
                    "proxy" => NodeKind::Proxy { of: of()? },
                    other => {
                        return Err(Error::InvalidNode(format!(
                            "{}: unknown kind {other:?}",
                            n.name
                        )))
                    }
                };
                Ok((NodeId::from(n.name.as_str()), kind))
            })
            .collect::<Result<Vec<_>>>()?;
        let pairs = |v: &Vec<[String; 2]>| -> Vec<(NodeId, NodeId)> {
            v.iter()
                .map(|[a, b]| (NodeId::from(a.as_str()), NodeId::from(b.as_str())))
                .collect()
        };
        Admg::from_parts(nodes, pairs(&self.directed), pairs(&self.bidirected))
    }
}

impl From<&Admg> for GraphJson {
    fn from(g: &Admg) -> Self {
        let nodes = g
            .nodes
            .iter()
            .map(|(n, k)| {
                let (kind, of) = match k {
                    NodeKind::Observed => ("observed", None),
                    NodeKind::MissingAffected => ("missing", None),
                    NodeKind::Indicator { of } => ("indicator", Some(of.to_string())),
                    NodeKind::Proxy { of } => ("proxy", Some(of.to_string())),
                };
                NodeJson {
                    name: n.to_string(),
                    kind: kind.to_string(),
                    of,
                }
            })
            .collect();
        let pairs = |s: &BTreeSet<(NodeId, NodeId)>| {
            s.iter()
                .map(|(a, b)| [a.to_string(), b.to_string()])
                .collect()
        };
        GraphJson {
            nodes,
            directed: pairs(&g.directed),
            bidirected: pairs(&g.bidirected),
        }
    }
}

/// Random ADMG over observed nodes `V0..V{n-1}`: each forward pair gets a
/// directed edge with probability `p_directed` and each pair a bidirected
/// edge with probability `p_bidirected`. The node order is shuffled before
/// edges are drawn, so index order and topological order differ.
pub fn random_admg(n: usize, p_directed: f64, p_bidirected: f64, seed: u64) -> Admg {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut names: Vec<NodeId> = (0..n).map(|i| NodeId::new(format!("V{i}"))).collect();
    let mut g = Admg::new();
    for v in &names {
        g.add_node(v.clone(), NodeKind::Observed).expect("fresh name");
    }
    names.shuffle(&mut rng);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p_directed {
                g.add_directed(names[i].clone(), names[j].clone()).expect("forward edge");
            }
            if rng.random::<f64>() < p_bidirected {
                g.add_bidirected(names[i].clone(), names[j].clone()).expect("distinct nodes");
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn chain() -> Admg {
        let mut g = Admg::new();
        for n in ["W", "A", "Y"] {
            g.add_node(n, NodeKind::Observed).unwrap();
        }
        g.add_directed("W", "A").unwrap();
        g.add_directed("A", "Y").unwrap();
        g
    }

    #[test]
    fn descendants_of_exposure_in_fig1c() {
        let g = fixtures::fig1c().graph().clone();
        assert_eq!(g.descendants(&node_set(["A"])).unwrap(), node_set(["A", "Y1"]));
    }

    #[test]
    fn ancestors_of_empty_set_is_empty() {
        let g = fixtures::fig1c().graph().clone();
        assert!(g.ancestors(&NodeSet::new()).unwrap().is_empty());
    }

    #[test]
    fn ancestors_of_rz_in_fig2a() {
        let g = fixtures::fig2a().graph().clone();
        // brute force: every node with a directed path into R_Z
        let mut expected = node_set(["R_Z"]);
        for n in g.node_ids() {
            if g.reaches(n, &NodeId::from("R_Z")) {
                expected.insert(n.clone());
            }
        }
        assert_eq!(expected, node_set(["R_Z", "X", "W", "R_X"]));
        assert_eq!(g.ancestors(&node_set(["R_Z"])).unwrap(), expected);
    }

    #[test]
    fn unknown_node_is_reported() {
        let g = chain();
        assert!(matches!(
            g.parents(&node_set(["Q"])),
            Err(Error::NodeNotFound(n)) if n == "Q"
        ));
        assert!(matches!(
            g.mutilate_over(&node_set(["Q"])),
            Err(Error::NodeNotFound(_))
        ));
    }

    #[test]
    fn random_graphs_are_reproducible_and_dense_at_one() {
        assert_eq!(random_admg(7, 0.4, 0.2, 5), random_admg(7, 0.4, 0.2, 5));
        let full = random_admg(5, 1.0, 1.0, 1);
        assert_eq!(full.directed_edges().count(), 10);
        assert_eq!(full.bidirected_edges().count(), 10);
        assert_eq!(full.topological_order().unwrap().len(), 5);
    }

    #[test]
    fn mutilate_over_empty_is_identity() {
        let g = fixtures::fig1c().graph().clone();
        assert_eq!(g.mutilate_over(&NodeSet::new()).unwrap(), g);
    }

    #[test]
    fn mutilate_over_removes_incoming() {
        let g = fixtures::fig1c().graph().clone();
        let s = node_set(["A", "R_Y0"]);
        let m = g.mutilate_over(&s).unwrap();
        assert!(m.parents(&s).unwrap().is_empty());
        assert_eq!(m.bidirected, g.bidirected);
    }

    #[test]
    fn mutilate_under_edge_diff_in_fig1c() {
        let g = fixtures::fig1c().graph().clone();
        let m = g.mutilate_under(&node_set(["A", "R_Y0"])).unwrap();
        let removed: BTreeSet<_> = g.directed.difference(&m.directed).cloned().collect();
        let expected: BTreeSet<_> = [
            ("A", "Y1"),
            ("R_Y0", "A"),
            ("R_Y0", "Y1"),
            ("R_Y0", "Y0_obs"),
        ]
        .into_iter()
        .map(|(a, b)| (NodeId::from(a), NodeId::from(b)))
        .collect();
        assert_eq!(removed, expected);
        assert!(m.directed.is_subset(&g.directed));
    }

    #[test]
    fn topological_order_single_and_chain() {
        let mut g = Admg::new();
        g.add_node("A", NodeKind::Observed).unwrap();
        assert_eq!(g.topological_order().unwrap(), vec![NodeId::from("A")]);
        let order: Vec<String> = chain()
            .topological_order()
            .unwrap()
            .into_iter()
            .map(|n| n.to_string())
            .collect();
        assert_eq!(order, ["W", "A", "Y"]);
    }

    #[test]
    fn topological_order_forward_edges_fig2a() {
        let g = fixtures::fig2a().graph().clone();
        let order = g.topological_order().unwrap();
        let pos: BTreeMap<_, _> = order.iter().enumerate().map(|(i, n)| (n, i)).collect();
        assert!(g.directed_edges().all(|(a, b)| pos[a] < pos[b]));
    }

    #[test]
    fn cycle_is_rejected_with_witness() {
        let mut g = chain();
        match g.add_directed("Y", "W") {
            Err(Error::CycleDetected { cycle }) => {
                let names: Vec<_> = cycle.iter().map(|n| n.as_str()).collect();
                assert_eq!(names, ["W", "A", "Y", "W"]);
            }
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn self_loops_and_bad_bidirected_rejected() {
        let mut g = chain();
        assert!(g.add_directed("A", "A").is_err());
        assert!(g.add_bidirected("A", "A").is_err());
        assert!(g.add_bidirected("A", "Q").is_err());
    }

    #[test]
    fn indicator_must_reference_missing_node() {
        let mut g = chain();
        let err = g.add_node("R_W", NodeKind::Indicator { of: "W".into() });
        assert!(matches!(err, Err(Error::InvalidNode(_))));
        g.add_node("Z", NodeKind::MissingAffected).unwrap();
        g.add_node("R_Z", NodeKind::Indicator { of: "Z".into() }).unwrap();
        let dup = g.add_node("R2_Z", NodeKind::Indicator { of: "Z".into() });
        assert!(matches!(dup, Err(Error::InvalidNode(_))));
        g.add_node("Z_obs", NodeKind::Proxy { of: "Z".into() }).unwrap();
        assert_eq!(g.indicator_of("Z").unwrap().as_str(), "R_Z");
        assert_eq!(g.proxy_of("Z").unwrap().as_str(), "Z_obs");
    }

    #[test]
    fn json_round_trip_is_stable() {
        let g = fixtures::fig1c().graph().clone();
        let text = g.to_json_string();
        let back = Admg::from_json_str(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_json_string(), text);
    }

    #[test]
    fn equality_ignores_insertion_order() {
        let mut a = Admg::new();
        let mut b = Admg::new();
        for n in ["X", "Y", "Z"] {
            a.add_node(n, NodeKind::Observed).unwrap();
        }
        for n in ["Z", "Y", "X"] {
            b.add_node(n, NodeKind::Observed).unwrap();
        }
        a.add_directed("X", "Y").unwrap();
        a.add_bidirected("Y", "Z").unwrap();
        b.add_bidirected("Z", "Y").unwrap();
        b.add_directed("X", "Y").unwrap();
        assert_eq!(a, b);
    }
}
