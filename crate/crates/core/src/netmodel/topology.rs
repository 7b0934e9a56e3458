use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Edge, Network};
use crate::error::NetError;

/// Simple undirected graph; edges stored once with `u < v`, sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UndirectedGraph {
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize)>,
}

impl UndirectedGraph {
    /// Deduplicates edges and drops self-loops.
    pub fn new(num_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let set: BTreeSet<(usize, usize)> = edges
            .into_iter()
            .filter(|(u, v)| u != v)
            .map(|(u, v)| (u.min(v), u.max(v)))
            .collect();
        Self {
            num_nodes,
            edges: set.into_iter().collect(),
        }
    }

    /// Edge count when every undirected link is counted in both directions.
    pub fn directed_edge_count(&self) -> usize {
        2 * self.edges.len()
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        if self.num_nodes == 0 {
            return true;
        }
        let adj = self.neighbors();
        let mut seen = vec![false; self.num_nodes];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologyKind {
    ErdosRenyi { nodes: usize, p: f64 },
    BalancedTree { branching: usize, depth: usize },
    Hypercube { dimension: u32 },
    Star { nodes: usize },
    Grid { rows: usize, cols: usize },
    /// Kleinberg's model: a `side x side` lattice plus `long_range` contacts
    /// per node chosen with probability proportional to `dist^-exponent`.
    SmallWorld {
        side: usize,
        long_range: usize,
        exponent: f64,
    },
    Geant,
    Abilene,
    Dtelekom,
    File { path: String },
}

/// Generator output with both the raw undirected graph and its orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTopology {
    pub undirected: UndirectedGraph,
    pub network: Network,
}

impl GeneratedTopology {
    pub fn raw_directed_edges(&self) -> usize {
        self.undirected.directed_edge_count()
    }
}

pub fn erdos_renyi<R: Rng + ?Sized>(nodes: usize, p: f64, rng: &mut R) -> UndirectedGraph {
    let mut edges = Vec::new();
    for u in 0..nodes {
        for v in u + 1..nodes {
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    UndirectedGraph::new(nodes, edges)
}

pub fn balanced_tree(branching: usize, depth: usize) -> UndirectedGraph {
    let mut edges = Vec::new();
    let mut level_start = 0;
    let mut level_len = 1;
    let mut next = 1;
    for _ in 0..depth {
        for parent in level_start..level_start + level_len {
            for _ in 0..branching {
                edges.push((parent, next));
                next += 1;
            }
        }
        level_start += level_len;
        level_len *= branching;
    }
    UndirectedGraph::new(next, edges)
}

pub fn hypercube(dimension: u32) -> UndirectedGraph {
    let n = 1usize << dimension;
    let edges = (0..n).flat_map(|u| (0..dimension).map(move |b| (u, u ^ (1 << b))));
    UndirectedGraph::new(n, edges)
}

pub fn star(nodes: usize) -> UndirectedGraph {
    UndirectedGraph::new(nodes, (1..nodes).map(|v| (0, v)))
}

pub fn grid(rows: usize, cols: usize) -> UndirectedGraph {
    let id = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < rows {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    UndirectedGraph::new(rows * cols, edges)
}

pub fn small_world<R: Rng + ?Sized>(
    side: usize,
    long_range: usize,
    exponent: f64,
    rng: &mut R,
) -> UndirectedGraph {
    let base = grid(side, side);
    let n = side * side;
    let mut edges = base.edges.clone();
    for u in 0..n {
        let (ur, uc) = (u / side, u % side);
        let weights: Vec<f64> = (0..n)
            .map(|v| {
                if v == u {
                    0.0
                } else {
                    let d = ur.abs_diff(v / side) + uc.abs_diff(v % side);
                    (d as f64).powf(-exponent)
                }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        for _ in 0..long_range {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (v, w) in weights.iter().enumerate() {
                if target < *w {
                    pick = v;
                    break;
                }
                target -= w;
            }
            edges.push((u, pick));
        }
    }
    UndirectedGraph::new(n, edges)
}

const GEANT: &str = include_str!("../../data/geant.txt");
const ABILENE: &str = include_str!("../../data/abilene.txt");
const DTELEKOM: &str = include_str!("../../data/dtelekom.txt");

/// Edge list text for a shipped backbone graph.
pub fn preset_edge_list(name: &str) -> Option<&'static str> {
    match name {
        "geant" => Some(GEANT),
        "abilene" => Some(ABILENE),
        "dtelekom" => Some(DTELEKOM),
        _ => None,
    }
}

/// Parses a whitespace-separated `u v` edge list. Node ids must be
/// nonnegative integers; the node count is one more than the largest id.
pub fn parse_edge_list(text: &str) -> Result<UndirectedGraph, NetError> {
    let mut edges = Vec::new();
    let mut max_id = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| NetError::FileParse { line: i + 1, msg };
        let mut parts = line.split_whitespace();
        let mut next = || -> Result<usize, NetError> {
            let tok = parts.next().ok_or_else(|| err("expected two node ids".into()))?;
            tok.parse()
                .map_err(|_| err(format!("`{tok}` is not a node id")))
        };
        let u = next()?;
        let v = next()?;
        if parts.next().is_some() {
            return Err(err("trailing tokens after edge".into()));
        }
        if u == v {
            return Err(err(format!("self-loop on node {u}")));
        }
        max_id = Some(max_id.unwrap_or(0).max(u).max(v));
        edges.push((u, v));
    }
    Ok(UndirectedGraph::new(max_id.map_or(0, |m| m + 1), edges))
}

pub fn load_edge_list(path: &Path) -> Result<UndirectedGraph, NetError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| NetError::Io(format!("{}: {e}", path.display())))?;
    parse_edge_list(&text)
}

/// Orients every edge from lower to higher rank. `rank` must be a permutation.
pub fn orient_by_rank(g: &UndirectedGraph, rank: &[usize]) -> Vec<(usize, usize)> {
    g.edges
        .iter()
        .map(|&(u, v)| if rank[u] < rank[v] { (u, v) } else { (v, u) })
        .collect()
}

/// Builds the undirected graph for `kind`.
pub fn undirected_topology<R: Rng + ?Sized>(
    kind: &TopologyKind,
    rng: &mut R,
) -> Result<UndirectedGraph, NetError> {
    let bad = |field: &str, msg: &str| Err(NetError::config(format!("topology.params.{field}"), msg));
    Ok(match kind {
        TopologyKind::ErdosRenyi { nodes, p } => {
            if !(0.0..=1.0).contains(p) {
                return bad("p", "edge probability must lie in [0, 1]");
            }
            erdos_renyi(*nodes, *p, rng)
        }
        TopologyKind::BalancedTree { branching, depth } => {
            if *branching == 0 {
                return bad("branching", "must be positive");
            }
            balanced_tree(*branching, *depth)
        }
        TopologyKind::Hypercube { dimension } => {
            if *dimension > 20 {
                return bad("dimension", "at most 20");
            }
            hypercube(*dimension)
        }
        TopologyKind::Star { nodes } => star(*nodes),
        TopologyKind::Grid { rows, cols } => grid(*rows, *cols),
        TopologyKind::SmallWorld {
            side,
            long_range,
            exponent,
        } => {
            if *side < 2 {
                return bad("side", "must be at least 2");
            }
            small_world(*side, *long_range, *exponent, rng)
        }
        TopologyKind::Geant => parse_edge_list(GEANT)?,
        TopologyKind::Abilene => parse_edge_list(ABILENE)?,
        TopologyKind::Dtelekom => parse_edge_list(DTELEKOM)?,
        TopologyKind::File { path } => load_edge_list(Path::new(path))?,
    })
}

/// Generates the undirected graph and orients it by a uniform random rank.
/// All edges get unit capacity; scenario construction replaces them.
pub fn generate_topology<R: Rng + ?Sized>(
    kind: &TopologyKind,
    rng: &mut R,
) -> Result<GeneratedTopology, NetError> {
    let undirected = undirected_topology(kind, rng)?;
    let mut rank: Vec<usize> = (0..undirected.num_nodes).collect();
    rank.shuffle(rng);
    let edges = orient_by_rank(&undirected, &rank)
        .into_iter()
        .map(|(from, to)| Edge {
            from,
            to,
            capacity: 1.0,
        })
        .collect();
    let network = Network::new(undirected.num_nodes, edges, vec![], vec![])?;
    Ok(GeneratedTopology {
        undirected,
        network,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::from_seed;

    #[test]
    fn canonical_sizes() {
        let bt = balanced_tree(4, 4);
        assert_eq!((bt.num_nodes, bt.edges.len()), (341, 340));
        assert_eq!(bt.directed_edge_count(), 680);
        let hc = hypercube(7);
        assert_eq!((hc.num_nodes, hc.directed_edge_count()), (128, 896));
        let st = star(100);
        assert_eq!((st.edges.len(), st.directed_edge_count()), (99, 198));
        let gr = grid(10, 10);
        assert_eq!((gr.num_nodes, gr.directed_edge_count()), (100, 360));
    }

    #[test]
    fn backbone_presets_match_published_counts() {
        for (name, nodes, directed) in [("geant", 22, 66), ("abilene", 9, 26), ("dtelekom", 68, 546)] {
            let g = parse_edge_list(preset_edge_list(name).unwrap()).unwrap();
            assert_eq!(g.num_nodes, nodes, "{name}");
            assert_eq!(g.directed_edge_count(), directed, "{name}");
            assert!(g.is_connected(), "{name}");
        }
    }

    #[test]
    fn random_generators_are_seeded() {
        let a = erdos_renyi(30, 0.2, &mut from_seed(3));
        let b = erdos_renyi(30, 0.2, &mut from_seed(3));
        assert_eq!(a, b);
        let sw = small_world(10, 1, 2.0, &mut from_seed(1));
        assert_eq!(sw.num_nodes, 100);
        assert!(sw.edges.len() >= 180);
    }

    #[test]
    fn oriented_networks_are_acyclic() {
        for kind in [
            TopologyKind::ErdosRenyi { nodes: 40, p: 0.3 },
            TopologyKind::Hypercube { dimension: 5 },
            TopologyKind::SmallWorld {
                side: 6,
                long_range: 2,
                exponent: 2.0,
            },
        ] {
            let g = generate_topology(&kind, &mut from_seed(9)).unwrap();
            assert_eq!(g.network.edges().len(), g.undirected.edges.len());
            assert!(g.network.topological_order().is_some());
        }
    }

    #[test]
    fn edge_list_parsing() {
        let g = parse_edge_list("# comment\n0 1\n\n1 2\n2 1\n").unwrap();
        assert_eq!(g.num_nodes, 3);
        assert_eq!(g.edges, vec![(0, 1), (1, 2)]);
        assert!(matches!(
            parse_edge_list("0 1\n1 x\n"),
            Err(NetError::FileParse { line: 2, .. })
        ));
        assert!(matches!(
            parse_edge_list("3 3\n"),
            Err(NetError::FileParse { line: 1, .. })
        ));
    }
}
