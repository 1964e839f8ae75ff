//! m-separation for ADMGs.
//!
//! The main routine expands every bidirected edge `a <-> b` into `a <- U -> b`
//! with a fresh latent `U` that is never conditioned on, then runs the
//! Bayes-ball reachability pass over the resulting DAG. The brute-force
//! oracle works directly on the mixed graph by enumerating simple paths.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use crate::error::{Error, Result};
use crate::graph::{Admg, NodeId, NodeSet};

/// Largest graph the exhaustive path oracle accepts.
pub const BRUTEFORCE_NODE_LIMIT: usize = 14;

#[derive(Debug, Clone)]
pub struct SeparationQuery<'g> {
    pub graph: &'g Admg,
    pub x: NodeSet,
    pub y: NodeSet,
    pub z: NodeSet,
}

impl<'g> SeparationQuery<'g> {
    pub fn new(graph: &'g Admg, x: NodeSet, y: NodeSet, z: NodeSet) -> Result<Self> {
        for n in x.iter().chain(&y).chain(&z) {
            if !graph.contains(n.as_str()) {
                return Err(Error::NodeNotFound(n.to_string()));
            }
        }
        let overlap = |a: &NodeSet, b: &NodeSet, what: &str| -> Result<()> {
            match a.intersection(b).next() {
                Some(n) => Err(Error::InvalidQuery(format!("{n} appears in both {what}"))),
                None => Ok(()),
            }
        };
        overlap(&x, &y, "x and y")?;
        overlap(&x, &z, "x and z")?;
        overlap(&y, &z, "y and z")?;
        Ok(Self { graph, x, y, z })
    }
}

/// DAG over indices, after latent expansion of bidirected edges.
struct Expanded {
    index: BTreeMap<NodeId, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl Expanded {
    fn new(g: &Admg) -> Self {
        let index: BTreeMap<NodeId, usize> = g
            .node_ids()
            .cloned()
            .enumerate()
            .map(|(i, n)| (n, i))
            .collect();
        let total = index.len() + g.bidirected_edges().count();
        let mut parents = vec![Vec::new(); total];
        let mut children = vec![Vec::new(); total];
        for (a, b) in g.directed_edges() {
            let (a, b) = (index[a], index[b]);
            parents[b].push(a);
            children[a].push(b);
        }
        for (k, (a, b)) in g.bidirected_edges().enumerate() {
            let u = index.len() + k;
            for v in [index[a], index[b]] {
                parents[v].push(u);
                children[u].push(v);
            }
        }
        Self {
            index,
            parents,
            children,
        }
    }

    fn ids(&self, s: &NodeSet) -> Vec<usize> {
        s.iter().map(|n| self.index[n]).collect()
    }

    /// Nodes reachable from `sources` along active trails given `given`.
    fn reachable(&self, sources: &[usize], given: &[bool]) -> Vec<bool> {
        let n = self.parents.len();
        // ancestors of the conditioning set
        let mut anc = given.to_vec();
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| given[v]).collect();
        while let Some(v) = queue.pop_front() {
            for &p in &self.parents[v] {
                if !anc[p] {
                    anc[p] = true;
                    queue.push_back(p);
                }
            }
        }

        const UP: usize = 0;
        const DOWN: usize = 1;
        let mut visited = vec![[false; 2]; n];
        let mut reach = vec![false; n];
        let mut queue: VecDeque<(usize, usize)> = sources.iter().map(|&s| (s, UP)).collect();
        while let Some((v, dir)) = queue.pop_front() {
            if visited[v][dir] {
                continue;
            }
            visited[v][dir] = true;
            if !given[v] {
                reach[v] = true;
            }
            if dir == UP && !given[v] {
                queue.extend(self.parents[v].iter().map(|&p| (p, UP)));
                queue.extend(self.children[v].iter().map(|&c| (c, DOWN)));
            } else if dir == DOWN {
                if !given[v] {
                    queue.extend(self.children[v].iter().map(|&c| (c, DOWN)));
                }
                if anc[v] {
                    queue.extend(self.parents[v].iter().map(|&p| (p, UP)));
                }
            }
        }
        reach
    }
}

/// True iff every path between `x` and `y` is blocked by `z`.
pub fn m_separated(q: &SeparationQuery<'_>) -> bool {
    if q.x.is_empty() || q.y.is_empty() {
        return true;
    }
    let ex = Expanded::new(q.graph);
    let mut given = vec![false; ex.parents.len()];
    for v in ex.ids(&q.z) {
        given[v] = true;
    }
    let reach = ex.reachable(&ex.ids(&q.x), &given);
    !ex.ids(&q.y).into_iter().any(|v| reach[v])
}

/// Convenience wrapper that validates the query first.
pub fn is_m_separated(g: &Admg, x: &NodeSet, y: &NodeSet, z: &NodeSet) -> Result<bool> {
    let q = SeparationQuery::new(g, x.clone(), y.clone(), z.clone())?;
    Ok(m_separated(&q))
}

/// How a path traverses one edge, read from the earlier node to the later one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    /// `a -> b`
    Forward,
    /// `a <- b`
    Backward,
    /// `a <-> b`
    Bidirected,
}

impl Step {
    fn arrow_at_start(self) -> bool {
        matches!(self, Step::Backward | Step::Bidirected)
    }

    fn arrow_at_end(self) -> bool {
        matches!(self, Step::Forward | Step::Bidirected)
    }

    fn glyph(self) -> &'static str {
        match self {
            Step::Forward => "->",
            Step::Backward => "<-",
            Step::Bidirected => "<->",
        }
    }
}

/// A simple path in a mixed graph; `steps[i]` joins `nodes[i]` and `nodes[i + 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixedPath {
    pub nodes: Vec<NodeId>,
    pub steps: Vec<Step>,
}

impl fmt::Display for MixedPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, n) in self.nodes.iter().enumerate() {
            if i > 0 {
                write!(f, " {} ", self.steps[i - 1].glyph())?;
            }
            write!(f, "{n}")?;
        }
        Ok(())
    }
}

impl MixedPath {
    /// Checks that the path exists in `g`, is simple, and is open given `z`.
    pub fn is_open_in(&self, g: &Admg, z: &NodeSet) -> Result<bool> {
        if self.nodes.len() != self.steps.len() + 1 {
            return Ok(false);
        }
        let distinct: NodeSet = self.nodes.iter().cloned().collect();
        if distinct.len() != self.nodes.len() {
            return Ok(false);
        }
        for (i, s) in self.steps.iter().enumerate() {
            let (a, b) = (self.nodes[i].as_str(), self.nodes[i + 1].as_str());
            let present = match s {
                Step::Forward => g.has_directed(a, b),
                Step::Backward => g.has_directed(b, a),
                Step::Bidirected => g.has_bidirected(a, b),
            };
            if !present {
                return Ok(false);
            }
        }
        let anc_z = g.ancestors(z)?;
        Ok((1..self.nodes.len().saturating_sub(1)).all(|i| {
            interior_open(
                self.steps[i - 1],
                self.steps[i],
                &self.nodes[i],
                z,
                &anc_z,
            )
        }))
    }
}

fn interior_open(into: Step, out: Step, v: &NodeId, z: &NodeSet, anc_z: &NodeSet) -> bool {
    let collider = into.arrow_at_end() && out.arrow_at_start();
    if collider {
        anc_z.contains(v)
    } else {
        !z.contains(v)
    }
}

/// Adjacency of the mixed graph: (neighbour, step from the current node).
fn mixed_adjacency(g: &Admg) -> BTreeMap<&NodeId, Vec<(&NodeId, Step)>> {
    let mut adj: BTreeMap<&NodeId, Vec<(&NodeId, Step)>> =
        g.node_ids().map(|n| (n, Vec::new())).collect();
    for (a, b) in g.directed_edges() {
        adj.get_mut(a).expect("endpoint").push((b, Step::Forward));
        adj.get_mut(b).expect("endpoint").push((a, Step::Backward));
    }
    for (a, b) in g.bidirected_edges() {
        adj.get_mut(a).expect("endpoint").push((b, Step::Bidirected));
        adj.get_mut(b).expect("endpoint").push((a, Step::Bidirected));
    }
    adj
}

/// Depth-first enumeration of simple paths from `x` to `y`, pruning prefixes
/// that are already blocked. Returns the first open path found.
pub fn find_open_path(q: &SeparationQuery<'_>) -> Option<MixedPath> {
    let g = q.graph;
    let anc_z = g.ancestors(&q.z).expect("query nodes validated");
    let adj = mixed_adjacency(g);

    struct Search<'a> {
        adj: &'a BTreeMap<&'a NodeId, Vec<(&'a NodeId, Step)>>,
        y: &'a NodeSet,
        z: &'a NodeSet,
        anc_z: &'a NodeSet,
        nodes: Vec<&'a NodeId>,
        steps: Vec<Step>,
    }

    impl<'a> Search<'a> {
        fn dfs(&mut self) -> bool {
            let cur = *self.nodes.last().expect("path nonempty");
            if self.nodes.len() > 1 && self.y.contains(cur) {
                return true;
            }
            for &(next, step) in &self.adj[cur] {
                if self.nodes.contains(&next) {
                    continue;
                }
                if let Some(&prev_step) = self.steps.last() {
                    if !interior_open(prev_step, step, cur, self.z, self.anc_z) {
                        continue;
                    }
                }
                self.nodes.push(next);
                self.steps.push(step);
                if self.dfs() {
                    return true;
                }
                self.nodes.pop();
                self.steps.pop();
            }
            false
        }
    }

    for start in &q.x {
        let mut s = Search {
            adj: &adj,
            y: &q.y,
            z: &q.z,
            anc_z: &anc_z,
            nodes: vec![start],
            steps: Vec::new(),
        };
        if s.dfs() {
            return Some(MixedPath {
                nodes: s.nodes.into_iter().cloned().collect(),
                steps: s.steps,
            });
        }
    }
    None
}

/// Exhaustive path-enumeration oracle for [`m_separated`].
pub fn m_separated_bruteforce(q: &SeparationQuery<'_>) -> Result<bool> {
    let nodes = q.graph.node_count();
    if nodes > BRUTEFORCE_NODE_LIMIT {
        return Err(Error::OracleLimitExceeded {
            nodes,
            limit: BRUTEFORCE_NODE_LIMIT,
        });
    }
    Ok(find_open_path(q).is_none())
}
