use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::oddball::ego_features;

/// Share of the remaining nodes that each logarithmic bin takes.
const BIN_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefexConfig {
    pub recursion_depth: usize,
    pub bins: usize,
    pub prune_corr: f64,
}

impl Default for RefexConfig {
    fn default() -> Self {
        RefexConfig {
            recursion_depth: 2,
            bins: 4,
            prune_corr: 0.95,
        }
    }
}

impl RefexConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::InvalidConfig("bins must be at least 2".into()));
        }
        if !(self.prune_corr > 0.0 && self.prune_corr <= 1.0) {
            return Err(Error::InvalidConfig("prune_corr must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Retained real-valued features, one column per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct RefexFeatures {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

/// Binary node embedding, `bins` one-hot columns per retained feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub width: usize,
    pub rows: Vec<Vec<u8>>,
}

impl Embedding {
    pub fn node_count(&self) -> usize {
        self.rows.len()
    }

    pub fn row_f64(&self, node: usize) -> Vec<f64> {
        self.rows[node].iter().map(|&b| f64::from(b)).collect()
    }

    /// `node,bits` with the bits written as one 0/1 string.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("node,bits\n");
        for (i, row) in self.rows.iter().enumerate() {
            let bits: String = row.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect();
            let _ = writeln!(s, "{i},{bits}");
        }
        s
    }
}

/// Absolute Pearson correlation. Two constant columns count as fully
/// correlated, a constant against a varying one as uncorrelated.
fn abs_corr(a: &[f64], b: &[f64]) -> f64 {
    let m = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / m, b.iter().sum::<f64>() / m);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    let tiny = 1e-12 * m;
    match (va <= tiny, vb <= tiny) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => (cov / (va * vb).sqrt()).abs(),
    }
}

fn aggregate(graph: &Graph, column: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (0..graph.node_count())
        .into_par_iter()
        .map(|u| {
            let nb = graph.neighbors(u);
            let sum: f64 = nb.iter().map(|&v| column[v as usize]).sum();
            let mean = if nb.is_empty() { 0.0 } else { sum / nb.len() as f64 };
            (mean, sum)
        })
        .unzip()
}

/// Base features `[degree, N, E]` plus recursive neighbor means and sums,
/// pruned level by level against everything already retained.
pub fn refex_features(graph: &Graph, config: &RefexConfig) -> Result<RefexFeatures> {
    config.validate()?;
    let ego = ego_features(graph);
    let degree = (0..graph.node_count()).map(|u| graph.degree(u) as f64).collect();
    let mut names = vec!["degree".to_string(), "N".to_string(), "E".to_string()];
    let mut columns = vec![degree, ego.nodes, ego.edges];
    if graph.node_count() == 0 {
        return Ok(RefexFeatures { names, columns });
    }

    let mut previous: Vec<usize> = (0..columns.len()).collect();
    for _ in 0..config.recursion_depth {
        let mut added = Vec::new();
        for &f in &previous {
            let (mean, sum) = aggregate(graph, &columns[f]);
            for (kind, col) in [("mean", mean), ("sum", sum)] {
                if columns.iter().all(|c| abs_corr(c, &col) <= config.prune_corr) {
                    names.push(format!("{kind}({})", names[f]));
                    columns.push(col);
                    added.push(columns.len() - 1);
                }
            }
        }
        if added.is_empty() {
            break;
        }
        previous = added;
    }
    Ok(RefexFeatures { names, columns })
}

/// Bin per node for one feature, by vertical logarithmic binning: the lowest
/// `p` share of values goes to the last bin, the lowest `p` of the rest to the
/// one before, and whatever remains at the top to bin 0. Larger values never
/// get a larger bin index; a tied group takes the bin of its lowest-ranked
/// member.
pub fn log_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let bound: Vec<f64> = (0..bins - 1)
        .map(|t| n as f64 * (1.0 - (1.0 - BIN_FRACTION).powi(t as i32 + 1)))
        .collect();
    let level = |pos: usize| bound.iter().position(|&b| (pos as f64) < b).unwrap_or(bins - 1);

    let mut out = vec![0; n];
    let mut s = 0;
    while s < n {
        let mut e = s;
        while e + 1 < n && values[order[e + 1]] == values[order[s]] {
            e += 1;
        }
        let bin = bins - 1 - level(s);
        for &u in &order[s..=e] {
            out[u] = bin;
        }
        s = e + 1;
    }
    out
}

pub fn refex_embed(graph: &Graph, config: &RefexConfig) -> Result<Embedding> {
    let features = refex_features(graph, config)?;
    let n = graph.node_count();
    let width = features.columns.len() * config.bins;
    let mut rows = vec![vec![0u8; width]; n];
    for (f, col) in features.columns.iter().enumerate() {
        for (u, b) in log_bins(col, config.bins).into_iter().enumerate() {
            rows[u][f * config.bins + b] = 1;
        }
    }
    Ok(Embedding { width, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, GenConfig};

    #[test]
    fn cycle_nodes_embed_identically() {
        let g = Graph::from_edges(8, (0..8).map(|i| (i, (i + 1) % 8))).unwrap();
        let cfg = RefexConfig {
            recursion_depth: 0,
            bins: 2,
            ..Default::default()
        };
        let e = refex_embed(&g, &cfg).unwrap();
        assert!(e.rows.iter().all(|r| r == &e.rows[0]));
        assert_eq!(e.width, 6);
    }

    #[test]
    fn star_center_and_leaves_split_on_degree() {
        let g = Graph::from_edges(9, (1..9).map(|l| (0, l))).unwrap();
        for bins in 2..6 {
            let cfg = RefexConfig {
                bins,
                ..Default::default()
            };
            let e = refex_embed(&g, &cfg).unwrap();
            let degree_bin = |u: usize| e.rows[u][..bins].iter().position(|&b| b == 1).unwrap();
            assert!((1..9).all(|l| degree_bin(l) == bins - 1 && degree_bin(0) < bins - 1));
        }
    }

    #[test]
    fn first_level_matches_direct_aggregation() {
        let g = generate(&GenConfig::er(30, 0.2, 5)).unwrap();
        let cfg = RefexConfig {
            recursion_depth: 1,
            prune_corr: 1.0,
            ..Default::default()
        };
        let f = refex_features(&g, &cfg).unwrap();
        for (name, col) in f.names.iter().zip(&f.columns).skip(3) {
            let (kind, base) = name[..name.len() - 1].split_once('(').unwrap();
            let bi = f.names.iter().position(|n| n == base).unwrap();
            for u in 0..30 {
                let vals: Vec<f64> = (0..30)
                    .filter(|&v| g.has_edge(u, v))
                    .map(|v| f.columns[bi][v])
                    .collect();
                let sum: f64 = vals.iter().sum();
                let want = match kind {
                    "sum" => sum,
                    _ if vals.is_empty() => 0.0,
                    _ => sum / vals.len() as f64,
                };
                assert!((col[u] - want).abs() < 1e-9, "{name} at {u}");
            }
        }
    }

    #[test]
    fn binning_is_monotone_and_shares_ties() {
        let v = [5.0, 1.0, 3.0, 3.0, 9.0, 0.0, 3.0, 7.0];
        let b = log_bins(&v, 3);
        for i in 0..v.len() {
            for j in 0..v.len() {
                if v[i] >= v[j] {
                    assert!(b[i] <= b[j]);
                }
            }
        }
        // ascending 0,1,3,3,3,5,7,9: lowest half in bin 2, next quarter in bin 1
        assert_eq!(b, vec![1, 2, 2, 2, 0, 2, 2, 0]);
    }

    #[test]
    fn rows_are_one_hot_per_feature() {
        let g = generate(&GenConfig::ba(60, 2, 3)).unwrap();
        let cfg = RefexConfig::default();
        let e = refex_embed(&g, &cfg).unwrap();
        let feats = e.width / cfg.bins;
        for row in &e.rows {
            assert_eq!(row.len(), e.width);
            for f in 0..feats {
                assert_eq!(row[f * cfg.bins..(f + 1) * cfg.bins].iter().map(|&b| b as usize).sum::<usize>(), 1);
            }
        }
        assert_eq!(e, refex_embed(&g, &cfg).unwrap());
    }
}
