//! Rauzy diagrams of labelled generalized permutations: forward closures, attractors
//! and shortest splitting sequences.

use std::collections::{HashMap, VecDeque};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use crate::exchange::{width_file, WidthVector};
use crate::genperm::{GeneralizedPermutation, PermutationFile};
use crate::rauzy::{feasible_directions, split_permutation, SplitKind};

pub const DEFAULT_NODE_BUDGET: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DiagramError {
    #[error("forward closure needs more than {0} nodes")]
    ClosureBudgetExceeded(usize),
    #[error("no node in the closure satisfies the target predicate")]
    Unreachable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub kind: SplitKind,
    pub target: usize,
    pub winner: usize,
    pub loser: usize,
    /// Widths at the source node realizing this split.
    pub witness: WidthVector,
}

#[derive(Debug, Clone)]
pub struct RauzyGraph {
    nodes: Vec<GeneralizedPermutation>,
    index: HashMap<GeneralizedPermutation, usize>,
    edges: Vec<Vec<Edge>>,
}

impl RauzyGraph {
    pub fn nodes(&self) -> &[GeneralizedPermutation] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> &GeneralizedPermutation {
        &self.nodes[i]
    }

    pub fn index_of(&self, p: &GeneralizedPermutation) -> Option<usize> {
        self.index.get(p).copied()
    }

    pub fn edges(&self, i: usize) -> &[Edge] {
        &self.edges[i]
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    fn petgraph(&self) -> DiGraph<(), ()> {
        let mut g = DiGraph::with_capacity(self.len(), self.edge_count());
        let ids: Vec<_> = (0..self.len()).map(|_| g.add_node(())).collect();
        for (i, es) in self.edges.iter().enumerate() {
            for e in es {
                g.add_edge(ids[i], ids[e.target], ());
            }
        }
        g
    }

    /// Strongly connected components, each sorted, in order of their smallest node.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut comps: Vec<Vec<usize>> = tarjan_scc(&self.petgraph())
            .into_iter()
            .map(|c| {
                let mut v: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
                v.sort_unstable();
                v
            })
            .collect();
        comps.sort();
        comps
    }

    /// Nodes reachable from `start`, including it.
    pub fn reachable(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for e in &self.edges[i] {
                if !seen[e.target] {
                    seen[e.target] = true;
                    stack.push(e.target);
                }
            }
        }
        seen
    }

    pub fn to_node_link(&self) -> NodeLink {
        let alphabet = self.nodes.first();
        NodeLink {
            directed: true,
            nodes: self
                .nodes
                .iter()
                .enumerate()
                .map(|(id, p)| NodeEntry {
                    id,
                    permutation: PermutationFile::from(p),
                    reducible: p.is_reducible_for_all_widths(),
                    prefix_reducible: p.is_combinatorially_reducible(),
                })
                .collect(),
            links: self
                .edges
                .iter()
                .enumerate()
                .flat_map(|(source, es)| {
                    es.iter().map(move |e| (source, e))
                })
                .map(|(source, e)| {
                    let p = &self.nodes[source];
                    let labels = alphabet.expect("edges imply nodes");
                    LinkEntry {
                        source,
                        target: e.target,
                        kind: e.kind,
                        winner: labels.label(e.winner).to_string(),
                        loser: labels.label(e.loser).to_string(),
                        witness: width_file(p, &e.witness),
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeEntry {
    pub id: usize,
    #[serde(flatten)]
    pub permutation: PermutationFile,
    pub reducible: bool,
    pub prefix_reducible: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LinkEntry {
    pub source: usize,
    pub target: usize,
    pub kind: SplitKind,
    pub winner: String,
    pub loser: String,
    pub witness: std::collections::BTreeMap<String, String>,
}

/// Node-link graph dump.
#[derive(Debug, Clone, Serialize)]
pub struct NodeLink {
    pub directed: bool,
    pub nodes: Vec<NodeEntry>,
    pub links: Vec<LinkEntry>,
}

/// Breadth-first closure under feasible splits. `budget` bounds the number of nodes
/// that have outgoing edges, so a node without feasible splits is always admitted.
pub fn forward_closure(start: &GeneralizedPermutation, budget: usize) -> Result<RauzyGraph, DiagramError> {
    let mut g = RauzyGraph {
        nodes: vec![start.clone()],
        index: HashMap::from([(start.clone(), 0)]),
        edges: vec![Vec::new()],
    };
    let mut queue = VecDeque::from([0usize]);
    let mut expanded = 0usize;
    while let Some(i) = queue.pop_front() {
        let dirs = feasible_directions(&g.nodes[i]);
        if dirs.is_empty() {
            continue;
        }
        expanded += 1;
        if expanded > budget {
            return Err(DiagramError::ClosureBudgetExceeded(budget));
        }
        for (kind, witness) in dirs {
            let (next, winner, loser) =
                split_permutation(&g.nodes[i], kind).expect("feasible direction splits");
            let target = match g.index.get(&next) {
                Some(&t) => t,
                None => {
                    let t = g.nodes.len();
                    g.index.insert(next.clone(), t);
                    g.nodes.push(next);
                    g.edges.push(Vec::new());
                    queue.push_back(t);
                    t
                }
            };
            g.edges[i].push(Edge {
                kind,
                target,
                winner,
                loser,
                witness,
            });
        }
    }
    Ok(g)
}

/// Strongly connected components with no edge leaving them.
pub fn attractors(g: &RauzyGraph) -> Vec<Vec<usize>> {
    let comps = g.components();
    let mut comp_of = vec![0usize; g.len()];
    for (c, nodes) in comps.iter().enumerate() {
        for &n in nodes {
            comp_of[n] = c;
        }
    }
    comps
        .iter()
        .enumerate()
        .filter(|(c, nodes)| {
            nodes
                .iter()
                .all(|&n| g.edges(n).iter().all(|e| comp_of[e.target] == *c))
        })
        .map(|(_, nodes)| nodes.clone())
        .collect()
}

/// Whether `nodes` is strongly connected using only edges inside it.
pub fn is_strongly_connected(g: &RauzyGraph, nodes: &[usize]) -> bool {
    let Some(&first) = nodes.first() else {
        return true;
    };
    let inside: std::collections::HashSet<usize> = nodes.iter().copied().collect();
    let sub_reach = |forward: bool| {
        let mut seen = std::collections::HashSet::from([first]);
        let mut stack = vec![first];
        while let Some(i) = stack.pop() {
            let nexts: Vec<usize> = if forward {
                g.edges(i).iter().map(|e| e.target).collect()
            } else {
                nodes
                    .iter()
                    .copied()
                    .filter(|&j| g.edges(j).iter().any(|e| e.target == i))
                    .collect()
            };
            for j in nexts {
                if inside.contains(&j) && seen.insert(j) {
                    stack.push(j);
                }
            }
        }
        seen.len() == nodes.len()
    };
    sub_reach(true) && sub_reach(false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PathEdge {
    pub from: usize,
    pub kind: SplitKind,
    pub to: usize,
}

/// A shortest directed path from `from` to a node satisfying `target`. Edges are tried
/// in tag order, so among shortest paths the lexicographically smallest tag sequence wins.
pub fn shortest_path(
    g: &RauzyGraph,
    from: usize,
    target: impl Fn(&GeneralizedPermutation) -> bool,
) -> Result<Vec<PathEdge>, DiagramError> {
    let mut parent: Vec<Option<PathEdge>> = vec![None; g.len()];
    let mut seen = vec![false; g.len()];
    let mut queue = VecDeque::from([from]);
    seen[from] = true;
    while let Some(i) = queue.pop_front() {
        if target(g.node(i)) {
            let mut path = Vec::new();
            let mut cur = i;
            while let Some(e) = parent[cur] {
                path.push(e);
                cur = e.from;
            }
            path.reverse();
            return Ok(path);
        }
        let mut es: Vec<&Edge> = g.edges(i).iter().collect();
        es.sort_by_key(|e| e.kind);
        for e in es {
            if !seen[e.target] {
                seen[e.target] = true;
                parent[e.target] = Some(PathEdge {
                    from: i,
                    kind: e.kind,
                    to: e.target,
                });
                queue.push_back(e.target);
            }
        }
    }
    Err(DiagramError::Unreachable)
}

pub fn is_proxy_irreducible(p: &GeneralizedPermutation, budget: usize) -> Result<bool, DiagramError> {
    let g = forward_closure(p, budget)?;
    Ok(g.nodes()
        .iter()
        .enumerate()
        .all(|(i, n)| !n.is_reducible_for_all_widths() && !g.edges(i).is_empty()))
}

/// Per-closure summary for reports.
#[derive(Debug, Clone, Serialize)]
pub struct AttractorSummary {
    pub nodes: usize,
    pub edges: usize,
    pub attractor_sizes: Vec<usize>,
    pub proxy_irreducible: bool,
    /// Whether some node of the closure is reducible for all widths.
    pub proxy_reducible: bool,
    /// Nodes passing the one-sided prefix test only (informational).
    pub prefix_reducible_nodes: usize,
}

pub fn summarize(g: &RauzyGraph) -> AttractorSummary {
    let proxy_reducible = g.nodes().iter().any(GeneralizedPermutation::is_reducible_for_all_widths);
    AttractorSummary {
        prefix_reducible_nodes: g
            .nodes()
            .iter()
            .filter(|n| n.is_combinatorially_reducible())
            .count(),
        nodes: g.len(),
        edges: g.edge_count(),
        attractor_sizes: attractors(g).iter().map(Vec::len).collect(),
        proxy_irreducible: !proxy_reducible && (0..g.len()).all(|i| !g.edges(i).is_empty()),
        proxy_reducible,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gp(top: &str, bottom: &str) -> GeneralizedPermutation {
        let t: Vec<&str> = top.split_whitespace().collect();
        let b: Vec<&str> = bottom.split_whitespace().collect();
        GeneralizedPermutation::new(&t, &b).unwrap()
    }

    #[test]
    fn rotation_closure() {
        let g = forward_closure(&gp("A B", "B A"), 10).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.edges(0).len(), 2);
        assert!(g.edges(0).iter().all(|e| e.target == 0));
        assert_eq!(attractors(&g), vec![vec![0]]);
    }

    #[test]
    fn classical_three_band_class() {
        let g = forward_closure(&gp("A B C", "C B A"), 100).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(attractors(&g).len(), 1);
    }

    #[test]
    fn zero_budget() {
        assert_eq!(
            forward_closure(&gp("A B", "B A"), 0).unwrap_err(),
            DiagramError::ClosureBudgetExceeded(0)
        );
        let g = forward_closure(&gp("A A", "B B"), 0).unwrap();
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn proxy_irreducibility_examples() {
        assert!(gp("A B", "B A").is_dynamically_irreducible(100).unwrap());
        assert!(!gp("A A", "B B").is_dynamically_irreducible(100).unwrap());
        assert!(!gp("A B C C", "A B D D").is_dynamically_irreducible(1000).unwrap());
        assert!(gp("A A B", "B C C").is_dynamically_irreducible(1000).unwrap());
    }

    #[test]
    fn shortest_path_trivial_and_unreachable() {
        let g = forward_closure(&gp("A B C", "C B A"), 100).unwrap();
        assert!(shortest_path(&g, 0, |_| true).unwrap().is_empty());
        assert_eq!(shortest_path(&g, 0, |_| false), Err(DiagramError::Unreachable));
        let path = shortest_path(&g, 0, |p| p.critical_labels().0 == "B").unwrap();
        assert_eq!(path.len(), 1);
    }

    #[test]
    fn chain_attractor() {
        let nodes = vec![gp("A B", "B A"), gp("A B", "A B"), gp("A A", "B B")];
        let edge = |target| Edge {
            kind: SplitKind::TopWins,
            target,
            winner: 0,
            loser: 1,
            witness: WidthVector::new(vec![]),
        };
        let g = RauzyGraph {
            index: nodes.iter().cloned().enumerate().map(|(i, n)| (n, i)).collect(),
            nodes,
            edges: vec![vec![edge(1)], vec![edge(2)], vec![]],
        };
        assert_eq!(attractors(&g), vec![vec![2]]);
        let cyclic = forward_closure(&gp("A B C", "C B A"), 100).unwrap();
        for a in attractors(&cyclic) {
            assert!(is_strongly_connected(&cyclic, &a));
        }
    }
}
