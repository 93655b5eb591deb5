//! Differentiable surrogate objective on a relaxed adjacency matrix.
//!
//! Forward pass: relaxed egonet features, log transform, closed-form OLS line,
//! predicted E, squared target residuals. The backward pass carries the chain
//! rule through the line fit by hand, so every pair gets an exact derivative
//! including its influence on the shared regression coefficients.
//!
//! Cost is O(n^2 + sum_k d_k^2) where d_k counts the non-zero entries of row k;
//! the cubic term is never formed densely.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{pair_count, pair_index, Graph};
use crate::oddball::EgoFeatures;

/// Degrees at or below this floor count as vanished.
pub const DEGREE_FLOOR: f64 = 1e-6;

/// Symmetric matrix with entries in [0, 1] and a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedAdjacency {
    n: usize,
    values: Vec<f64>,
}

impl RelaxedAdjacency {
    pub fn zeros(n: usize) -> Self {
        RelaxedAdjacency {
            n,
            values: vec![0.0; n * n],
        }
    }

    pub fn from_graph(graph: &Graph) -> Self {
        let mut a = RelaxedAdjacency::zeros(graph.node_count());
        for (u, v) in graph.edges() {
            a.set(u, v, 1.0);
        }
        a
    }

    /// Builds from one value per unordered pair in [`pair_index`] order.
    /// Values are clipped to [0, 1].
    pub fn from_pair_values(n: usize, values: &[f64]) -> Result<Self> {
        if values.len() != pair_count(n) {
            return Err(Error::InvalidConfig(format!(
                "expected {} pair values, got {}",
                pair_count(n),
                values.len()
            )));
        }
        let mut a = RelaxedAdjacency::zeros(n);
        for i in 0..n {
            for j in i + 1..n {
                a.set(i, j, values[pair_index(n, i, j)]);
            }
        }
        Ok(a)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Sets the pair `{i, j}` to `v` clipped into [0, 1]. Diagonal writes are ignored.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        if i == j {
            return;
        }
        let v = v.clamp(0.0, 1.0);
        self.values[i * self.n + j] = v;
        self.values[j * self.n + i] = v;
    }

    /// Entries as one value per unordered pair.
    pub fn pair_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(pair_count(self.n));
        for i in 0..self.n {
            out.extend_from_slice(&self.values[i * self.n + i + 1..(i + 1) * self.n]);
        }
        out
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    fn sparse_rows(&self) -> Vec<Vec<(u32, f64)>> {
        (0..self.n)
            .map(|i| {
                self.row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(j, &v)| (j as u32, v))
                    .collect()
            })
            .collect()
    }
}

/// Derivative of the objective per unordered pair, in [`pair_index`] order.
/// Each value covers both symmetric matrix entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientField {
    pub n: usize,
    pub values: Vec<f64>,
}

impl GradientField {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[pair_index(self.n, i, j)]
    }
}

struct Forward {
    rows: Vec<Vec<(u32, f64)>>,
    nodes: Vec<f64>,
    edges: Vec<f64>,
    mask: Vec<bool>,
    // regression state over masked nodes
    count: f64,
    x_mean: f64,
    y_mean: f64,
    sxx: f64,
    beta0: f64,
    beta1: f64,
    degenerate: bool,
    value: f64,
}

fn features_from_rows(adj: &RelaxedAdjacency, rows: &[Vec<(u32, f64)>]) -> EgoFeatures {
    let mut nodes = Vec::with_capacity(adj.n);
    let mut edges = Vec::with_capacity(adj.n);
    for row in rows {
        let degree: f64 = row.iter().map(|&(_, w)| w).sum();
        // (A^3)_ii = sum_{j,k} A_ij A_jk A_ki
        let mut cubic = 0.0;
        for &(j, wij) in row {
            let rj = adj.row(j as usize);
            let inner: f64 = row.iter().map(|&(k, wik)| wik * rj[k as usize]).sum();
            cubic += wij * inner;
        }
        nodes.push(degree);
        edges.push(degree + 0.5 * cubic);
    }
    EgoFeatures { nodes, edges }
}

/// N_i = row sums, E_i = N_i + (A^3)_ii / 2 on the relaxed values.
pub fn relaxed_features(adj: &RelaxedAdjacency) -> EgoFeatures {
    features_from_rows(adj, &adj.sparse_rows())
}

fn forward(adj: &RelaxedAdjacency, targets: &[usize]) -> Result<Forward> {
    let rows = adj.sparse_rows();
    let EgoFeatures { nodes, edges } = features_from_rows(adj, &rows);
    for &t in targets {
        if nodes[t] <= DEGREE_FLOOR {
            return Err(Error::NodeVanished {
                node: t,
                degree: nodes[t],
            });
        }
    }
    let mask: Vec<bool> = nodes.iter().map(|&n| n > DEGREE_FLOOR).collect();
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::TooFewPoints(0));
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for i in (0..adj.n).filter(|&i| mask[i]) {
        sx += nodes[i].ln();
        sy += edges[i].ln();
    }
    let m = count as f64;
    let (x_mean, y_mean) = (sx / m, sy / m);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for i in (0..adj.n).filter(|&i| mask[i]) {
        let dx = nodes[i].ln() - x_mean;
        sxx += dx * dx;
        sxy += dx * (edges[i].ln() - y_mean);
    }
    let degenerate = sxx <= 1e-12 * m;
    let (beta0, beta1) = if degenerate {
        (y_mean, 0.0)
    } else {
        let b1 = sxy / sxx;
        (y_mean - b1 * x_mean, b1)
    };
    let value = targets
        .iter()
        .map(|&t| {
            let r = edges[t] - (beta0 + beta1 * nodes[t].ln()).exp();
            r * r
        })
        .sum();
    Ok(Forward {
        rows,
        nodes,
        edges,
        mask,
        count: m,
        x_mean,
        y_mean,
        sxx,
        beta0,
        beta1,
        degenerate,
        value,
    })
}

/// Squared target residuals against the OLS line fitted on the relaxed features.
///
/// Nodes whose relaxed degree is at or below [`DEGREE_FLOOR`] are left out of
/// the fit, as isolated nodes are in the detector; a target in that state is
/// an error.
pub fn surrogate_value(adj: &RelaxedAdjacency, targets: &[usize]) -> Result<f64> {
    if targets.is_empty() {
        return Ok(0.0);
    }
    Ok(forward(adj, targets)?.value)
}

/// Value and exact pair gradient of [`surrogate_value`].
pub fn surrogate_value_and_gradient(
    adj: &RelaxedAdjacency,
    targets: &[usize],
) -> Result<(f64, GradientField)> {
    let n = adj.n;
    if targets.is_empty() {
        return Ok((
            0.0,
            GradientField {
                n,
                values: vec![0.0; pair_count(n)],
            },
        ));
    }
    let fw = forward(adj, targets)?;

    // adjoints of the line coefficients and the direct per-target terms
    let mut g_beta0 = 0.0;
    let mut g_beta1 = 0.0;
    let mut g_x = vec![0.0; n]; // d/d ln N_i
    let mut g_e_direct = vec![0.0; n]; // d/d E_i, excluding the path through ln E
    for &t in targets {
        let x = fw.nodes[t].ln();
        let e_hat = (fw.beta0 + fw.beta1 * x).exp();
        let r = fw.edges[t] - e_hat;
        let g_hat = -2.0 * r * e_hat; // dL/dÊ * Ê
        g_beta0 += g_hat;
        g_beta1 += g_hat * x;
        g_x[t] += g_hat * fw.beta1;
        g_e_direct[t] += 2.0 * r;
    }

    // through the closed-form fit:
    //   beta1 = Sxy / Sxx, beta0 = ybar - beta1 * xbar
    let mut g_n = vec![0.0; n];
    let mut g_cubic = vec![0.0; n];
    for i in 0..n {
        let mut gy = 0.0;
        if fw.mask[i] {
            let x = fw.nodes[i].ln();
            let y = fw.edges[i].ln();
            if fw.degenerate {
                gy = g_beta0 / fw.count;
            } else {
                let c = (x - fw.x_mean) / fw.sxx;
                let d = ((y - fw.y_mean) - 2.0 * fw.beta1 * (x - fw.x_mean)) / fw.sxx;
                gy = g_beta0 * (1.0 / fw.count - fw.x_mean * c) + g_beta1 * c;
                g_x[i] += g_beta0 * (-fw.beta1 / fw.count - fw.x_mean * d) + g_beta1 * d;
            }
        }
        let g_e = g_e_direct[i] + if fw.mask[i] { gy / fw.edges[i] } else { 0.0 };
        let g_from_x = if fw.mask[i] { g_x[i] / fw.nodes[i] } else { 0.0 };
        // E = N + cubic / 2
        g_n[i] = g_from_x + g_e;
        g_cubic[i] = 0.5 * g_e;
    }

    // d/dA_pq (both entries) of sum_i g_cubic_i (A^3)_ii
    //   = 2 sum_k A_pk A_kq (g_p + g_q + g_k)
    let mut values = vec![0.0; pair_count(n)];
    for (k, row) in fw.rows.iter().enumerate() {
        let gk = g_cubic[k];
        for (a, &(p, wp)) in row.iter().enumerate() {
            let p = p as usize;
            let gp = g_cubic[p] + gk;
            for &(q, wq) in &row[a + 1..] {
                let q = q as usize;
                values[pair_index(n, p, q)] += 2.0 * wp * wq * (gp + g_cubic[q]);
            }
        }
    }
    let mut idx = 0;
    for p in 0..n {
        for q in p + 1..n {
            values[idx] += g_n[p] + g_n[q];
            idx += 1;
        }
    }
    Ok((fw.value, GradientField { n, values }))
}

pub fn surrogate_gradient(adj: &RelaxedAdjacency, targets: &[usize]) -> Result<GradientField> {
    surrogate_value_and_gradient(adj, targets).map(|(_, g)| g)
}
