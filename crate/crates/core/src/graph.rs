//! Simple undirected graphs: storage, edge-list I/O, generators, connected
//! subsampling, and edge flips.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from;

/// Number of unordered pairs `{i, j}`, `i != j`, over `n` nodes.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Row-major index of the unordered pair `{i, j}` (order of arguments is irrelevant).
#[inline]
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    debug_assert!(a != b && b < n);
    a * (2 * n - a - 1) / 2 + (b - a - 1)
}

/// All unordered pairs `(i, j)` with `i < j` in lexicographic order, which is also
/// ascending [`pair_index`] order.
pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

/// Undirected, unweighted, self-loop-free graph.
///
/// Adjacency is kept twice: a dense symmetric bit matrix for O(1) pair queries
/// and sorted neighbor lists for neighborhood intersection. Both are built
/// together and never mutated afterwards.
#[derive(Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    words_per_row: usize,
    bits: Vec<u64>,
    neighbors: Vec<Vec<u32>>,
    edge_count: usize,
}

impl std::fmt::Debug for Graph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Graph")
            .field("n", &self.n)
            .field("edges", &self.edge_count)
            .finish()
    }
}

impl Graph {
    /// Graph with `n` nodes and no edges.
    pub fn empty(n: usize) -> Self {
        let words_per_row = n.div_ceil(64);
        Graph {
            n,
            words_per_row,
            bits: vec![0; n * words_per_row],
            neighbors: vec![Vec::new(); n],
            edge_count: 0,
        }
    }

    /// Builds a graph from unordered pairs. Duplicates and reversed pairs are
    /// merged; self-loops and out-of-range ids are rejected.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Graph::empty(n);
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidConfig(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                return Err(Error::InvalidConfig(format!("self-loop on node {u}")));
            }
            if !g.has_edge(u, v) {
                g.set_bit(u, v, true);
                g.set_bit(v, u, true);
                g.edge_count += 1;
            }
        }
        g.rebuild_neighbors();
        Ok(g)
    }

    #[inline]
    fn set_bit(&mut self, i: usize, j: usize, on: bool) {
        let w = i * self.words_per_row + j / 64;
        let mask = 1u64 << (j % 64);
        if on {
            self.bits[w] |= mask;
        } else {
            self.bits[w] &= !mask;
        }
    }

    fn rebuild_neighbors(&mut self) {
        for i in 0..self.n {
            let row = &self.bits[i * self.words_per_row..(i + 1) * self.words_per_row];
            let list = &mut self.neighbors[i];
            list.clear();
            for (wi, &word) in row.iter().enumerate() {
                let mut w = word;
                while w != 0 {
                    let b = w.trailing_zeros() as usize;
                    list.push((wi * 64 + b) as u32);
                    w &= w - 1;
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        (self.bits[i * self.words_per_row + j / 64] >> (j % 64)) & 1 == 1
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Sorted neighbor ids of `i`.
    #[inline]
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[i]
    }

    /// Edges as `(u, v)` with `u < v`, ascending lexicographic.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |u| {
            self.neighbors[u]
                .iter()
                .map(|&v| v as usize)
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    /// Copy of the graph with node `i` renamed to `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::InvalidConfig("permutation length mismatch".into()));
        }
        Graph::from_edges(self.n, self.edges().map(|(u, v)| (perm[u], perm[v])))
    }

    /// Subgraph induced on `nodes`, relabelled 0.. in ascending original id.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<Self> {
        let mut sorted = nodes.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let mut new_id = vec![usize::MAX; self.n];
        for (k, &v) in sorted.iter().enumerate() {
            new_id[v] = k;
        }
        let edges = self
            .edges()
            .filter(|&(u, v)| new_id[u] != usize::MAX && new_id[v] != usize::MAX)
            .map(|(u, v)| (new_id[u], new_id[v]));
        Graph::from_edges(sorted.len(), edges)
    }

    /// Connected components, each sorted ascending, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.n];
        let mut out = Vec::new();
        for s in 0..self.n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &v in &self.neighbors[u] {
                    let v = v as usize;
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                        queue.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.n == 0 || self.components().len() == 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlipAction {
    Add,
    Delete,
}

/// Toggle of the unordered pair `{i, j}`, stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeFlip {
    pub i: usize,
    pub j: usize,
    pub action: FlipAction,
}

impl EdgeFlip {
    pub fn new(i: usize, j: usize, action: FlipAction) -> Self {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        EdgeFlip { i, j, action }
    }

    /// The flip that toggles `{i, j}` in `graph`.
    pub fn toggle(graph: &Graph, i: usize, j: usize) -> Self {
        let action = if graph.has_edge(i, j) {
            FlipAction::Delete
        } else {
            FlipAction::Add
        };
        EdgeFlip::new(i, j, action)
    }

    pub fn inverse(self) -> Self {
        let action = match self.action {
            FlipAction::Add => FlipAction::Delete,
            FlipAction::Delete => FlipAction::Add,
        };
        EdgeFlip { action, ..self }
    }
}

/// Applies `flips` in order to a copy of `graph`.
pub fn apply_flips(graph: &Graph, flips: &[EdgeFlip]) -> Result<Graph> {
    let mut g = graph.clone();
    for (index, f) in flips.iter().enumerate() {
        if f.i == f.j || f.i >= g.n || f.j >= g.n {
            return Err(Error::InvalidFlip {
                index,
                msg: format!("pair ({}, {}) is not a valid node pair", f.i, f.j),
            });
        }
        let present = g.has_edge(f.i, f.j);
        match (f.action, present) {
            (FlipAction::Add, true) => {
                return Err(Error::InvalidFlip {
                    index,
                    msg: format!("edge ({}, {}) already present", f.i, f.j),
                })
            }
            (FlipAction::Delete, false) => {
                return Err(Error::InvalidFlip {
                    index,
                    msg: format!("edge ({}, {}) not present", f.i, f.j),
                })
            }
            (FlipAction::Add, false) => g.edge_count += 1,
            (FlipAction::Delete, true) => g.edge_count -= 1,
        }
        let on = f.action == FlipAction::Add;
        g.set_bit(f.i, f.j, on);
        g.set_bit(f.j, f.i, on);
    }
    g.rebuild_neighbors();
    Ok(g)
}

/// Diagonal of the cubed adjacency matrix: closed 3-walks through each node,
/// i.e. twice the number of triangles containing it.
pub fn triangle_diagonal(graph: &Graph) -> Vec<u64> {
    (0..graph.n)
        .map(|i| {
            let ni = graph.neighbors(i);
            ni.iter()
                .map(|&j| sorted_intersection_len(ni, graph.neighbors(j as usize)) as u64)
                .sum()
        })
        .collect()
}

fn sorted_intersection_len(a: &[u32], b: &[u32]) -> usize {
    let (mut x, mut y, mut count) = (0, 0, 0);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                x += 1;
                y += 1;
            }
        }
    }
    count
}

// ---------------------------------------------------------------------------
// Edge-list I/O

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Drop lines whose weight column is `<= 0`, then forget weights.
    pub drop_nonpositive_weights: bool,
}

/// Parses "u v" / "u v w" lines (whitespace or comma separated; extra trailing
/// columns ignored; `#` and `%` start comments). Node ids are compacted to
/// `0..n` in ascending original order.
pub fn parse_edge_list(text: &str, opts: LoadOptions) -> Result<Graph> {
    let mut raw: Vec<(u64, u64)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('%') {
            continue;
        }
        let mut cols = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty());
        let parse_id = |s: Option<&str>| -> Result<u64> {
            let s = s.ok_or_else(|| Error::Parse {
                line: lineno + 1,
                msg: "expected at least two columns".into(),
            })?;
            s.parse::<u64>().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("invalid node id {s:?}"),
            })
        };
        let u = parse_id(cols.next())?;
        let v = parse_id(cols.next())?;
        let weight = match cols.next() {
            Some(w) => Some(w.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("invalid weight {w:?}"),
            })?),
            None => None,
        };
        if opts.drop_nonpositive_weights && weight.is_some_and(|w| w <= 0.0) {
            continue;
        }
        raw.push((u, v));
    }

    let mut ids: BTreeMap<u64, usize> = BTreeMap::new();
    for &(u, v) in &raw {
        ids.insert(u, 0);
        ids.insert(v, 0);
    }
    for (k, slot) in ids.values_mut().enumerate() {
        *slot = k;
    }
    let edges: Vec<(usize, usize)> = raw
        .iter()
        .filter(|(u, v)| u != v)
        .map(|(u, v)| (ids[u], ids[v]))
        .collect();
    if edges.is_empty() {
        return Err(Error::EmptyGraph);
    }
    Graph::from_edges(ids.len(), edges)
}

pub fn load_edge_list(path: impl AsRef<Path>, opts: LoadOptions) -> Result<Graph> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_edge_list(&text, opts)
}

/// One "u v" line per edge, `u < v`, ascending.
pub fn edge_list_string(graph: &Graph) -> String {
    let mut s = String::with_capacity(graph.edge_count() * 10);
    for (u, v) in graph.edges() {
        let _ = writeln!(s, "{u} {v}");
    }
    s
}

pub fn save_edge_list(graph: &Graph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, edge_list_string(graph)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Generators

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum GraphModel {
    /// Erdős–Rényi G(n, p).
    Er { p: f64 },
    /// Barabási–Albert preferential attachment with `m` edges per new node.
    Ba { m: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    #[serde(flatten)]
    pub model: GraphModel,
    pub n: usize,
    pub seed: u64,
}

impl GenConfig {
    pub fn er(n: usize, p: f64, seed: u64) -> Self {
        GenConfig {
            model: GraphModel::Er { p },
            n,
            seed,
        }
    }

    pub fn ba(n: usize, m: usize, seed: u64) -> Self {
        GenConfig {
            model: GraphModel::Ba { m },
            n,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.model {
            GraphModel::Er { p } if !(0.0..=1.0).contains(&p) => {
                Err(Error::InvalidConfig(format!("link probability {p} outside [0, 1]")))
            }
            GraphModel::Ba { m } if m == 0 || m >= self.n => Err(Error::InvalidConfig(format!(
                "attachment count m = {m} must satisfy 1 <= m < n = {}",
                self.n
            ))),
            _ => Ok(()),
        }
    }
}

pub fn generate(config: &GenConfig) -> Result<Graph> {
    config.validate()?;
    let mut rng = rng_from(config.seed);
    let n = config.n;
    match config.model {
        GraphModel::Er { p } => {
            let edges: Vec<_> = pairs(n).filter(|_| rng.random::<f64>() < p).collect();
            Graph::from_edges(n, edges)
        }
        GraphModel::Ba { m } => {
            let mut edges = Vec::with_capacity(m * (n - m) + m * (m - 1) / 2);
            // every edge endpoint once: sampling from it is degree-proportional
            let mut endpoints: Vec<usize> = Vec::new();
            for u in 0..m {
                for v in u + 1..m {
                    edges.push((u, v));
                    endpoints.push(u);
                    endpoints.push(v);
                }
            }
            let mut chosen: Vec<usize> = Vec::with_capacity(m);
            for new in m..n {
                chosen.clear();
                while chosen.len() < m {
                    let t = if endpoints.is_empty() {
                        rng.random_range(0..new)
                    } else {
                        endpoints[rng.random_range(0..endpoints.len())]
                    };
                    if !chosen.contains(&t) {
                        chosen.push(t);
                    }
                }
                for &t in &chosen {
                    edges.push((t, new));
                    endpoints.push(t);
                    endpoints.push(new);
                }
            }
            Graph::from_edges(n, edges)
        }
    }
}

/// Adds `count` cliques of `size` nodes each on disjoint random node sets.
/// Returns the graph and the clique members, ascending.
pub fn plant_cliques(graph: &Graph, count: usize, size: usize, seed: u64) -> Result<(Graph, Vec<usize>)> {
    let n = graph.node_count();
    if size < 2 || count * size > n {
        return Err(Error::InvalidConfig(format!(
            "cannot plant {count} cliques of size {size} in {n} nodes"
        )));
    }
    let mut rng = rng_from(seed);
    let members = rand::seq::index::sample(&mut rng, n, count * size).into_vec();
    let mut edges: Vec<(usize, usize)> = graph.edges().collect();
    for clique in members.chunks(size) {
        for (a, &u) in clique.iter().enumerate() {
            for &v in &clique[a + 1..] {
                if !graph.has_edge(u, v) {
                    edges.push((u.min(v), u.max(v)));
                }
            }
        }
    }
    let mut members = members;
    members.sort_unstable();
    Ok((Graph::from_edges(n, edges)?, members))
}

/// Connected induced subgraph of `target_size` nodes grown breadth-first from a
/// random start node inside a large enough component. Neighbor visiting order
/// is shuffled per node under the seed.
pub fn sample_connected(graph: &Graph, target_size: usize, seed: u64) -> Result<Graph> {
    if target_size == 0 {
        return Err(Error::InvalidConfig("target_size must be positive".into()));
    }
    let comps = graph.components();
    let largest = comps.iter().map(Vec::len).max().unwrap_or(0);
    let eligible: Vec<usize> = comps
        .iter()
        .filter(|c| c.len() >= target_size)
        .flatten()
        .copied()
        .collect();
    if eligible.is_empty() {
        return Err(Error::ComponentTooSmall {
            target: target_size,
            largest,
        });
    }
    let mut rng = rng_from(seed);
    let start = eligible[rng.random_range(0..eligible.len())];

    let mut seen = vec![false; graph.node_count()];
    let mut picked = Vec::with_capacity(target_size);
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    'grow: while let Some(u) = queue.pop_front() {
        picked.push(u);
        if picked.len() == target_size {
            break;
        }
        let mut nbrs: Vec<usize> = graph.neighbors(u).iter().map(|&v| v as usize).collect();
        nbrs.shuffle(&mut rng);
        for v in nbrs {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
                if picked.len() + queue.len() >= target_size {
                    // remaining queue entries complete the sample in BFS order
                    picked.extend(queue.drain(..).take(target_size - picked.len()));
                    break 'grow;
                }
            }
        }
    }
    graph.induced_subgraph(&picked)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_cliques_are_complete() {
        let g = generate(&GenConfig::ba(50, 2, 1)).unwrap();
        let (h, members) = plant_cliques(&g, 2, 5, 9).unwrap();
        assert_eq!(members.len(), 10);
        assert!(g.edges().all(|(u, v)| h.has_edge(u, v)));
        let high = members.iter().filter(|&&u| h.degree(u) >= 4).count();
        assert_eq!(high, 10);
        assert!(plant_cliques(&g, 11, 5, 0).is_err());
    }

    fn triangle() -> Graph {
        Graph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    #[test]
    fn pair_index_is_dense_and_lexicographic() {
        let n = 7;
        for (k, (i, j)) in pairs(n).enumerate() {
            assert_eq!(pair_index(n, i, j), k);
            assert_eq!(pair_index(n, j, i), k);
        }
        assert_eq!(pairs(n).count(), pair_count(n));
    }

    #[test]
    fn load_merges_duplicates_and_drops_self_loops() {
        let g = parse_edge_list("0 1\n1 0\n1 1\n", LoadOptions::default()).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
        assert!(g.has_edge(0, 1));
    }

    #[test]
    fn load_drops_negative_weights_and_compacts() {
        let opts = LoadOptions {
            drop_nonpositive_weights: true,
        };
        let g = parse_edge_list("0 1 5\n0 2 -3\n", opts).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn load_compacts_sparse_ids_in_ascending_order() {
        let g = parse_edge_list("100 7\n7 42\n", LoadOptions::default()).unwrap();
        assert_eq!(g.node_count(), 3);
        // 7 -> 0, 42 -> 1, 100 -> 2
        assert!(g.has_edge(0, 2) && g.has_edge(0, 1) && !g.has_edge(1, 2));
    }

    #[test]
    fn load_reports_line_number() {
        let err = parse_edge_list("0 1\n\n2 x\n", LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_edge_list("0 1\n5\n", LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn load_rejects_empty_result() {
        let opts = LoadOptions {
            drop_nonpositive_weights: true,
        };
        assert!(matches!(
            parse_edge_list("0 1 -1\n", opts),
            Err(Error::EmptyGraph)
        ));
        assert!(matches!(
            parse_edge_list("# nothing\n", LoadOptions::default()),
            Err(Error::EmptyGraph)
        ));
    }

    #[test]
    fn er_extremes() {
        assert_eq!(generate(&GenConfig::er(100, 0.0, 1)).unwrap().edge_count(), 0);
        assert_eq!(generate(&GenConfig::er(100, 1.0, 1)).unwrap().edge_count(), 4950);
        assert!(generate(&GenConfig::er(10, 1.5, 1)).is_err());
    }

    #[test]
    fn ba_rejects_m_not_below_n() {
        assert!(generate(&GenConfig::ba(5, 5, 0)).is_err());
        assert!(generate(&GenConfig::ba(5, 0, 0)).is_err());
    }

    #[test]
    fn ba_with_single_attachment_is_a_tree() {
        let g = generate(&GenConfig::ba(50, 1, 3)).unwrap();
        assert_eq!(g.edge_count(), 49);
        assert!(g.is_connected());
    }

    #[test]
    fn flips_apply_and_validate() {
        let g = triangle();
        assert_eq!(apply_flips(&g, &[]).unwrap(), g);
        let path = apply_flips(&g, &[EdgeFlip::new(0, 1, FlipAction::Delete)]).unwrap();
        assert_eq!(path.edge_count(), 2);
        assert!(!path.has_edge(0, 1) && !path.has_edge(1, 0));
        assert_eq!(path.neighbors(0), &[2]);

        let err = apply_flips(
            &g,
            &[
                EdgeFlip::new(0, 1, FlipAction::Delete),
                EdgeFlip::new(1, 2, FlipAction::Add),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidFlip { index: 1, .. }));
        assert!(matches!(
            apply_flips(&g, &[EdgeFlip::new(1, 1, FlipAction::Add)]),
            Err(Error::InvalidFlip { index: 0, .. })
        ));
    }

    #[test]
    fn triangle_diagonal_small_cases() {
        let k4 = Graph::from_edges(4, pairs(4)).unwrap();
        assert_eq!(triangle_diagonal(&k4), vec![6; 4]);
        let tree = Graph::from_edges(5, [(0, 1), (0, 2), (2, 3), (2, 4)]).unwrap();
        assert_eq!(triangle_diagonal(&tree), vec![0; 5]);
    }

    #[test]
    fn sample_connected_on_path() {
        let path = Graph::from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
        for seed in 0..20 {
            let s = sample_connected(&path, 3, seed).unwrap();
            assert_eq!(s.node_count(), 3);
            assert_eq!(s.edge_count(), 2);
            assert!(s.is_connected());
        }
        assert_eq!(sample_connected(&path, 5, 9).unwrap(), path);
        assert!(matches!(
            sample_connected(&path, 6, 0),
            Err(Error::ComponentTooSmall { target: 6, largest: 5 })
        ));
    }
}
