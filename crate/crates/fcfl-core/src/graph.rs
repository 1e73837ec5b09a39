//! Undirected simple graphs, colourings, and the generators used by the
//! experiment suites.
//!
//! Vertex ids are dense `0..n`. Colours are 1-based (`1..=D`) so that an
//! unset palette entry can never be confused with a real colour. A graph is
//! immutable once built; [`mutate`] returns an edited copy.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::seeding::mix_seed;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("graph must have at least one vertex")]
    Empty,
    #[error("multipartite part sizes must all be positive")]
    EmptyPart,
    #[error("edge probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("removal fraction {0} outside [0, 1]")]
    BadFraction(f64),
    #[error("vertex {0} out of range for {1} vertices")]
    VertexOutOfRange(u32, usize),
    #[error("self loop at vertex {0}")]
    SelfLoop(u32),
    #[error("brute-force search limited to 12 vertices, got {0}")]
    TooLarge(usize),
    #[error("colouring has {got} entries for {want} vertices")]
    LengthMismatch { got: usize, want: usize },
    #[error("colour {0} outside palette 1..={1}")]
    ColourOutOfRange(u32, usize),
    #[error("edge list parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Recipe for a graph. Building is deterministic in `(spec, seed)`.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphSpec {
    Complete(usize),
    /// Complete multipartite graph: parts are independent sets, every
    /// cross-part pair is an edge.
    CompleteMultipartite(Vec<usize>),
    /// G(n, p): each unordered pair is an edge independently with
    /// probability `p`.
    ErdosRenyi { n: usize, p: f64 },
    /// Base graph with `floor(fraction * |E|)` edges removed uniformly at
    /// random without replacement.
    EdgeThinned { base: Box<GraphSpec>, fraction: f64 },
}

/// Assignment of vertices to the parts of a complete multipartite graph.
/// Kept on graphs built from such specs so the simulation engine can test
/// adjacency by part membership instead of walking edge lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    part_of: Vec<u32>,
    parts: usize,
}

impl Partition {
    pub fn part_of(&self, v: u32) -> u32 {
        self.part_of[v as usize]
    }

    pub fn part_count(&self) -> usize {
        self.parts
    }
}

#[derive(Debug, Clone)]
pub struct Graph {
    adj: Vec<Vec<u32>>,
    edges: usize,
    max_degree: usize,
    partition: Option<Partition>,
}

impl Graph {
    fn from_adj(adj: Vec<Vec<u32>>, partition: Option<Partition>) -> Self {
        let mut adj = adj;
        for list in &mut adj {
            list.sort_unstable();
        }
        let edges = adj.iter().map(|l| l.len()).sum::<usize>() / 2;
        let max_degree = adj.iter().map(|l| l.len()).max().unwrap_or(0);
        Graph { adj, edges, max_degree, partition }
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn degree(&self, v: u32) -> usize {
        self.adj[v as usize].len()
    }

    /// Largest vertex degree, the Δ of the bound formulas.
    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn neighbours(&self, v: u32) -> &[u32] {
        &self.adj[v as usize]
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        self.adj[u as usize].binary_search(&v).is_ok()
    }

    /// Each edge once, with `u < v`.
    pub fn edges_iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.adj.iter().enumerate().flat_map(|(u, list)| {
            let u = u as u32;
            list.iter().copied().filter(move |&v| u < v).map(move |v| (u, v))
        })
    }

    /// Complete-multipartite structure, when the graph was built from one.
    /// Editing a graph discards it.
    pub fn partition(&self) -> Option<&Partition> {
        self.partition.as_ref()
    }

    /// Serialize as an edge-list text document: a `n=<N>` header line, then
    /// one `u v` pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        writeln!(out, "n={}", self.n()).unwrap();
        for (u, v) in self.edges_iter() {
            writeln!(out, "{u} {v}").unwrap();
        }
        out
    }

    /// Parse the format produced by [`Graph::to_edge_list`]. Duplicate edges
    /// collapse; self loops and out-of-range ids are errors.
    pub fn from_edge_list(text: &str) -> Result<Graph, GraphError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| GraphError::Parse { line: 1, msg: "missing header".into() })?;
        let n: usize = header
            .trim()
            .strip_prefix("n=")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| GraphError::Parse { line: 1, msg: format!("expected n=<N>, got {header:?}") })?;
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut edges = BTreeSet::new();
        for (idx, raw) in lines {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() {
                continue;
            }
            let mut it = trimmed.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<u32, GraphError> {
                tok.and_then(|t| t.parse().ok())
                    .ok_or_else(|| GraphError::Parse { line, msg: format!("expected `u v`, got {trimmed:?}") })
            };
            let u = parse(it.next())?;
            let v = parse(it.next())?;
            if it.next().is_some() {
                return Err(GraphError::Parse { line, msg: format!("expected `u v`, got {trimmed:?}") });
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            for w in [u, v] {
                if w as usize >= n {
                    return Err(GraphError::VertexOutOfRange(w, n));
                }
            }
            edges.insert((u.min(v), u.max(v)));
        }
        let mut adj = vec![Vec::new(); n];
        for (u, v) in edges {
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        Ok(Graph::from_adj(adj, None))
    }
}

/// Build a graph from a spec. The same `(spec, seed)` pair always yields the
/// same graph; the seed is unused by the deterministic families.
pub fn build(spec: &GraphSpec, seed: u64) -> Result<Graph, GraphError> {
    match spec {
        GraphSpec::Complete(n) => {
            // A complete graph is the multipartite graph with singleton parts.
            build(&GraphSpec::CompleteMultipartite(vec![1; *n]), seed)
        }
        GraphSpec::CompleteMultipartite(sizes) => {
            if sizes.is_empty() || sizes.iter().sum::<usize>() == 0 {
                return Err(GraphError::Empty);
            }
            if sizes.iter().any(|&s| s == 0) {
                return Err(GraphError::EmptyPart);
            }
            let n: usize = sizes.iter().sum();
            let mut part_of = Vec::with_capacity(n);
            for (pi, &s) in sizes.iter().enumerate() {
                part_of.extend(std::iter::repeat(pi as u32).take(s));
            }
            let mut adj = vec![Vec::new(); n];
            for u in 0..n {
                for v in (u + 1)..n {
                    if part_of[u] != part_of[v] {
                        adj[u].push(v as u32);
                        adj[v].push(u as u32);
                    }
                }
            }
            let partition = Partition { part_of, parts: sizes.len() };
            Ok(Graph::from_adj(adj, Some(partition)))
        }
        GraphSpec::ErdosRenyi { n, p } => {
            if *n == 0 {
                return Err(GraphError::Empty);
            }
            if !(0.0..=1.0).contains(p) {
                return Err(GraphError::BadProbability(*p));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x6772_6170));
            let mut adj = vec![Vec::new(); *n];
            for u in 0..*n {
                for v in (u + 1)..*n {
                    if rng.gen_bool(*p) {
                        adj[u].push(v as u32);
                        adj[v].push(u as u32);
                    }
                }
            }
            Ok(Graph::from_adj(adj, None))
        }
        GraphSpec::EdgeThinned { base, fraction } => {
            if !(0.0..=1.0).contains(fraction) {
                return Err(GraphError::BadFraction(*fraction));
            }
            let g = build(base, mix_seed(seed, 0x6261_7365))?;
            let mut edges: Vec<(u32, u32)> = g.edges_iter().collect();
            let remove = (fraction * edges.len() as f64).floor() as usize;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x7468_696e));
            // Partial Fisher-Yates: the first `remove` slots end up holding a
            // uniform sample without replacement.
            for i in 0..remove {
                let j = rng.gen_range(i..edges.len());
                edges.swap(i, j);
            }
            let kept = &edges[remove..];
            let mut adj = vec![Vec::new(); g.n()];
            for &(u, v) in kept {
                adj[u as usize].push(v);
                adj[v as usize].push(u);
            }
            Ok(Graph::from_adj(adj, None))
        }
    }
}

/// A full assignment of colours to vertices, entries in `1..=D`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Colouring {
    colours: Vec<u32>,
}

impl Colouring {
    pub fn new(colours: Vec<u32>, d: usize) -> Result<Colouring, GraphError> {
        if let Some(&c) = colours.iter().find(|&&c| c == 0 || c as usize > d) {
            return Err(GraphError::ColourOutOfRange(c, d));
        }
        Ok(Colouring { colours })
    }

    pub fn colours(&self) -> &[u32] {
        &self.colours
    }

    pub fn colour(&self, v: u32) -> u32 {
        self.colours[v as usize]
    }

    pub fn len(&self) -> usize {
        self.colours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colours.is_empty()
    }
}

/// Does no edge join two vertices of the same colour?
pub fn is_proper(g: &Graph, c: &Colouring) -> Result<bool, GraphError> {
    if c.len() != g.n() {
        return Err(GraphError::LengthMismatch { got: c.len(), want: g.n() });
    }
    Ok(g.edges_iter().all(|(u, v)| c.colour(u) != c.colour(v)))
}

/// Vertices with at least one same-coloured neighbour, ascending. Empty iff
/// the colouring is proper.
pub fn unsatisfied_set(g: &Graph, c: &Colouring) -> Result<Vec<u32>, GraphError> {
    if c.len() != g.n() {
        return Err(GraphError::LengthMismatch { got: c.len(), want: g.n() });
    }
    Ok((0..g.n() as u32)
        .filter(|&v| g.neighbours(v).iter().any(|&u| c.colour(u) == c.colour(v)))
        .collect())
}

/// Exact chromatic number by backtracking, limited to 12 vertices.
pub fn chromatic_number_bruteforce(g: &Graph) -> Result<u32, GraphError> {
    if g.n() > 12 {
        return Err(GraphError::TooLarge(g.n()));
    }
    for k in 1..=g.n() as u32 {
        if colourable(g, k) {
            return Ok(k);
        }
    }
    unreachable!("every graph is n-colourable");
}

fn colourable(g: &Graph, k: u32) -> bool {
    fn go(g: &Graph, k: u32, assigned: &mut Vec<u32>) -> bool {
        let v = assigned.len() as u32;
        if v as usize == g.n() {
            return true;
        }
        // Symmetry break: the first vertex never benefits from colours > 1.
        let limit = if v == 0 { 1 } else { k };
        for c in 1..=limit {
            let ok = g.neighbours(v).iter().all(|&u| (u as usize) >= assigned.len() || assigned[u as usize] != c);
            if ok {
                assigned.push(c);
                if go(g, k, assigned) {
                    return true;
                }
                assigned.pop();
            }
        }
        false
    }
    go(g, k, &mut Vec::with_capacity(g.n()))
}

/// Smallest-index-first greedy colouring. Uses at most Δ+1 colours, so it
/// witnesses that every palette with D ≥ Δ+1 admits a proper colouring.
pub fn greedy_colouring(g: &Graph) -> Colouring {
    let mut colours = vec![0u32; g.n()];
    for v in 0..g.n() as u32 {
        let taken: BTreeSet<u32> =
            g.neighbours(v).iter().filter(|&&u| u < v).map(|&u| colours[u as usize]).collect();
        colours[v as usize] = (1..).find(|c| !taken.contains(c)).unwrap();
    }
    Colouring { colours }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphEdit {
    /// Append a vertex adjacent to the listed existing vertices.
    AddVertex { neighbours: Vec<u32> },
    /// Delete a vertex; later ids shift down by one to stay dense.
    RemoveVertex(u32),
    AddEdge(u32, u32),
    RemoveEdge(u32, u32),
}

/// Apply edits in order and return the edited copy. The result carries no
/// multipartite structure even if the input had one.
pub fn mutate(g: &Graph, edits: &[GraphEdit]) -> Result<Graph, GraphError> {
    let mut adj: Vec<BTreeSet<u32>> =
        g.adj.iter().map(|l| l.iter().copied().collect()).collect();
    for edit in edits {
        let n = adj.len();
        let check = |v: u32| -> Result<(), GraphError> {
            if v as usize >= n {
                Err(GraphError::VertexOutOfRange(v, n))
            } else {
                Ok(())
            }
        };
        match edit {
            GraphEdit::AddVertex { neighbours } => {
                let v = n as u32;
                let mut set = BTreeSet::new();
                for &u in neighbours {
                    check(u)?;
                    set.insert(u);
                }
                for &u in &set {
                    adj[u as usize].insert(v);
                }
                adj.push(set);
            }
            GraphEdit::RemoveVertex(v) => {
                check(*v)?;
                adj.remove(*v as usize);
                for set in &mut adj {
                    *set = set
                        .iter()
                        .filter(|&&u| u != *v)
                        .map(|&u| if u > *v { u - 1 } else { u })
                        .collect();
                }
            }
            GraphEdit::AddEdge(u, v) | GraphEdit::RemoveEdge(u, v) if u == v => {
                return Err(GraphError::SelfLoop(*u));
            }
            GraphEdit::AddEdge(u, v) => {
                check(*u)?;
                check(*v)?;
                adj[*u as usize].insert(*v);
                adj[*v as usize].insert(*u);
            }
            GraphEdit::RemoveEdge(u, v) => {
                check(*u)?;
                check(*v)?;
                adj[*u as usize].remove(v);
                adj[*v as usize].remove(u);
            }
        }
    }
    if adj.is_empty() {
        return Err(GraphError::Empty);
    }
    Ok(Graph::from_adj(adj.into_iter().map(|s| s.into_iter().collect()).collect(), None))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_graph_shape() {
        let g = build(&GraphSpec::Complete(5), 0).unwrap();
        assert_eq!(g.n(), 5);
        assert_eq!(g.edge_count(), 10);
        assert_eq!(g.max_degree(), 4);
        assert!(g.partition().is_some());
    }

    #[test]
    fn multipartite_edges_cross_parts_only() {
        let g = build(&GraphSpec::CompleteMultipartite(vec![2, 3]), 0).unwrap();
        assert_eq!(g.n(), 5);
        assert_eq!(g.edge_count(), 6);
        let p = g.partition().unwrap();
        for (u, v) in g.edges_iter() {
            assert_ne!(p.part_of(u), p.part_of(v));
        }
        assert!(!g.has_edge(0, 1));
        assert!(g.has_edge(0, 2));
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(matches!(build(&GraphSpec::Complete(0), 0), Err(GraphError::Empty)));
        assert!(matches!(build(&GraphSpec::CompleteMultipartite(vec![2, 0]), 0), Err(GraphError::EmptyPart)));
        assert!(matches!(build(&GraphSpec::ErdosRenyi { n: 4, p: 1.5 }, 0), Err(GraphError::BadProbability(_))));
    }

    #[test]
    fn erdos_renyi_extremes_and_determinism() {
        let empty = build(&GraphSpec::ErdosRenyi { n: 6, p: 0.0 }, 1).unwrap();
        assert_eq!(empty.edge_count(), 0);
        let full = build(&GraphSpec::ErdosRenyi { n: 6, p: 1.0 }, 1).unwrap();
        assert_eq!(full.edge_count(), 15);
        let a = build(&GraphSpec::ErdosRenyi { n: 30, p: 0.3 }, 7).unwrap();
        let b = build(&GraphSpec::ErdosRenyi { n: 30, p: 0.3 }, 7).unwrap();
        let c = build(&GraphSpec::ErdosRenyi { n: 30, p: 0.3 }, 8).unwrap();
        assert_eq!(a.to_edge_list(), b.to_edge_list());
        assert_ne!(a.to_edge_list(), c.to_edge_list());
    }

    #[test]
    fn thinning_removes_exact_count() {
        let spec = GraphSpec::EdgeThinned {
            base: Box::new(GraphSpec::Complete(60)),
            fraction: 0.2,
        };
        let g = build(&spec, 42).unwrap();
        // C(60,2) = 1770, floor(0.2 * 1770) = 354 removed.
        assert_eq!(g.n(), 60);
        assert_eq!(g.edge_count(), 1416);
        assert!(g.partition().is_none());
    }

    #[test]
    fn edge_list_round_trip() {
        let g = build(&GraphSpec::ErdosRenyi { n: 12, p: 0.4 }, 3).unwrap();
        let text = g.to_edge_list();
        let back = Graph::from_edge_list(&text).unwrap();
        assert_eq!(back.to_edge_list(), text);
        assert_eq!(back.max_degree(), g.max_degree());
    }

    #[test]
    fn edge_list_rejects_malformed() {
        assert!(matches!(Graph::from_edge_list("bogus"), Err(GraphError::Parse { .. })));
        assert!(matches!(Graph::from_edge_list("n=3\n0 3"), Err(GraphError::VertexOutOfRange(3, 3))));
        assert!(matches!(Graph::from_edge_list("n=3\n1 1"), Err(GraphError::SelfLoop(1))));
    }

    #[test]
    fn proper_and_unsatisfied_agree() {
        let g = build(&GraphSpec::Complete(3), 0).unwrap();
        let proper = Colouring::new(vec![1, 2, 3], 3).unwrap();
        let clash = Colouring::new(vec![1, 2, 2], 3).unwrap();
        assert!(is_proper(&g, &proper).unwrap());
        assert!(unsatisfied_set(&g, &proper).unwrap().is_empty());
        assert!(!is_proper(&g, &clash).unwrap());
        assert_eq!(unsatisfied_set(&g, &clash).unwrap(), vec![1, 2]);
    }

    #[test]
    fn chromatic_known_values() {
        let k4 = build(&GraphSpec::Complete(4), 0).unwrap();
        assert_eq!(chromatic_number_bruteforce(&k4).unwrap(), 4);
        let bip = build(&GraphSpec::CompleteMultipartite(vec![3, 3]), 0).unwrap();
        assert_eq!(chromatic_number_bruteforce(&bip).unwrap(), 2);
        // C5 is an odd cycle.
        let c5 = Graph::from_edge_list("n=5\n0 1\n1 2\n2 3\n3 4\n4 0").unwrap();
        assert_eq!(chromatic_number_bruteforce(&c5).unwrap(), 3);
        let big = build(&GraphSpec::Complete(13), 0).unwrap();
        assert!(matches!(chromatic_number_bruteforce(&big), Err(GraphError::TooLarge(13))));
    }

    #[test]
    fn greedy_is_proper_within_palette() {
        for seed in 0..5 {
            let g = build(&GraphSpec::ErdosRenyi { n: 20, p: 0.35 }, seed).unwrap();
            let c = greedy_colouring(&g);
            assert!(is_proper(&g, &c).unwrap());
            assert!(c.colours().iter().all(|&x| (x as usize) <= g.max_degree() + 1));
        }
    }

    #[test]
    fn mutate_edits_apply_in_order() {
        let g = build(&GraphSpec::Complete(4), 0).unwrap();
        let out = mutate(
            &g,
            &[
                GraphEdit::RemoveEdge(0, 1),
                GraphEdit::AddVertex { neighbours: vec![0, 2] },
                GraphEdit::RemoveVertex(3),
            ],
        )
        .unwrap();
        assert_eq!(out.n(), 4);
        assert!(!out.has_edge(0, 1));
        // The appended vertex (id 4) slid down to 3 when vertex 3 left.
        assert!(out.has_edge(0, 3) && out.has_edge(2, 3));
        assert!(mutate(&g, &[GraphEdit::AddEdge(0, 9)]).is_err());
        assert!(mutate(&g, &[GraphEdit::AddEdge(2, 2)]).is_err());
    }
}
