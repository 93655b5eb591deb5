//! The OddBall detector on the (N, E) egonet feature pair: a power-law line
//! `ln E = beta0 + beta1 ln N` fitted over non-isolated nodes, and a per-node
//! score measuring vertical deviation from it.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{triangle_diagonal, Graph};

/// Egonet features per node: `nodes[i]` is the degree N_i and `edges[i]` the
/// number of edges inside the egonet, E_i = N_i + triangles(i).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoFeatures {
    pub nodes: Vec<f64>,
    pub edges: Vec<f64>,
}

impl EgoFeatures {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes that take part in the regression (N_i > 0).
    pub fn eligible(&self) -> Vec<bool> {
        self.nodes.iter().map(|&n| n > 0.0).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fitter {
    Ols,
    Huber,
    Ransac,
}

impl std::fmt::Display for Fitter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Fitter::Ols => "ols",
            Fitter::Huber => "huber",
            Fitter::Ransac => "ransac",
        })
    }
}

/// Fitted power-law line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub beta0: f64,
    pub beta1: f64,
    pub fitter: Fitter,
    /// Nodes scored against the line (non-isolated nodes).
    pub mask: Vec<bool>,
    /// Nodes whose points determined the line. Equals `mask` except for RANSAC,
    /// where it is the winning consensus set.
    pub used: Vec<bool>,
    /// All used ln N values coincided; the line is the flat fallback
    /// `beta1 = 0, beta0 = mean(ln E)`.
    pub degenerate: bool,
}

impl RegressionFit {
    /// e^beta0 * N^beta1
    #[inline]
    pub fn predict(&self, n: f64) -> f64 {
        (self.beta0 + self.beta1 * n.ln()).exp()
    }
}

/// Weighted least-squares line through `(x, y)` from the 2x2 normal equations.
/// Returns `None` when the system is singular (all weighted x equal).
pub(crate) fn solve_normal_equations(x: &[f64], y: &[f64], w: &[f64]) -> Option<(f64, f64)> {
    let (mut s0, mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&xi, &yi), &wi) in x.iter().zip(y).zip(w) {
        s0 += wi;
        sx += wi * xi;
        sxx += wi * xi * xi;
        sy += wi * yi;
        sxy += wi * xi * yi;
    }
    if s0 <= 0.0 {
        return None;
    }
    let det = s0 * sxx - sx * sx;
    // det = s0 * weighted spread of x; compare against the scale of sxx
    if det <= 1e-12 * s0 * sxx.max(1e-300) || det <= 0.0 {
        return None;
    }
    let beta0 = (sxx * sy - sx * sxy) / det;
    let beta1 = (s0 * sxy - sx * sy) / det;
    Some((beta0, beta1))
}

/// Weighted mean of `y`; the minimum-norm solution of a singular system.
pub(crate) fn flat_fallback(y: &[f64], w: &[f64]) -> f64 {
    let sw: f64 = w.iter().sum();
    y.iter().zip(w).map(|(yi, wi)| yi * wi).sum::<f64>() / sw
}

/// Log-space points `(ln N_i, ln E_i)` of the eligible nodes with their ids.
pub(crate) fn log_points(features: &EgoFeatures) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let mut ids = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, (&n, &e)) in features.nodes.iter().zip(&features.edges).enumerate() {
        if n > 0.0 {
            ids.push(i);
            xs.push(n.ln());
            ys.push(e.ln());
        }
    }
    (ids, xs, ys)
}

pub fn ego_features(graph: &Graph) -> EgoFeatures {
    let tri = triangle_diagonal(graph);
    let nodes: Vec<f64> = (0..graph.node_count())
        .map(|i| graph.degree(i) as f64)
        .collect();
    let edges = nodes
        .iter()
        .zip(&tri)
        .map(|(&n, &t)| n + 0.5 * t as f64)
        .collect();
    EgoFeatures { nodes, edges }
}

/// Ordinary least squares of ln E on [1, ln N] over non-isolated nodes.
pub fn fit_ols(features: &EgoFeatures) -> Result<RegressionFit> {
    let mask = features.eligible();
    let (ids, xs, ys) = log_points(features);
    if ids.is_empty() {
        return Err(Error::TooFewPoints(0));
    }
    let w = vec![1.0; xs.len()];
    let (beta0, beta1, degenerate) = match solve_normal_equations(&xs, &ys, &w) {
        Some((b0, b1)) => (b0, b1, false),
        None => (flat_fallback(&ys, &w), 0.0, true),
    };
    if degenerate {
        log::warn!("degenerate OLS fit: all ln N equal, using flat line");
    }
    Ok(RegressionFit {
        beta0,
        beta1,
        fitter: Fitter::Ols,
        used: mask.clone(),
        mask,
        degenerate,
    })
}

/// Per-node anomaly scores against a fitted line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub features: EgoFeatures,
    pub fitted: Vec<f64>,
    pub scores: Vec<f64>,
    pub fit: RegressionFit,
}

impl AnomalyReport {
    /// Sum of scores over `targets`.
    pub fn score_sum(&self, targets: &[usize]) -> f64 {
        targets.iter().map(|&t| self.scores[t]).sum()
    }

    /// CSV with header `node_id,N,E,fitted_E,score`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("node_id,N,E,fitted_E,score\n");
        for i in 0..self.scores.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                i, self.features.nodes[i], self.features.edges[i], self.fitted[i], self.scores[i]
            );
        }
        s
    }
}

/// Deviation score for one point: `max/min * ln(|E - Ê| + 1)`.
#[inline]
pub fn point_score(e: f64, e_hat: f64) -> f64 {
    let (hi, lo) = if e >= e_hat { (e, e_hat) } else { (e_hat, e) };
    (hi / lo) * ((e - e_hat).abs() + 1.0).ln()
}

pub fn anomaly_scores(features: &EgoFeatures, fit: &RegressionFit) -> AnomalyReport {
    let mut fitted = vec![0.0; features.len()];
    let mut scores = vec![0.0; features.len()];
    for i in 0..features.len() {
        if fit.mask[i] {
            let e_hat = fit.predict(features.nodes[i]);
            fitted[i] = e_hat;
            scores[i] = point_score(features.edges[i], e_hat);
        }
    }
    AnomalyReport {
        features: features.clone(),
        fitted,
        scores,
        fit: fit.clone(),
    }
}

/// Features, OLS fit and scores in one call.
pub fn score_graph(graph: &Graph) -> Result<AnomalyReport> {
    let features = ego_features(graph);
    let fit = fit_ols(&features)?;
    Ok(anomaly_scores(&features, &fit))
}

/// Attack objective: squared residuals `(E_i - Ê_i)^2` over `targets`, with
/// the line re-fitted from `features` by OLS.
pub fn surrogate_objective(features: &EgoFeatures, targets: &[usize]) -> Result<f64> {
    if targets.is_empty() {
        log::warn!("surrogate objective over an empty target set");
        return Ok(0.0);
    }
    for &t in targets {
        if features.nodes[t] <= 0.0 {
            return Err(Error::TargetIsolated(t));
        }
    }
    let fit = fit_ols(features)?;
    Ok(targets
        .iter()
        .map(|&t| {
            let r = features.edges[t] - fit.predict(features.nodes[t]);
            r * r
        })
        .sum())
}

/// `k` node ids by descending score, ties by ascending id.
pub fn rank_top_k(report: &AnomalyReport, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..report.scores.len()).collect();
    order.sort_by(|&a, &b| {
        report.scores[b]
            .total_cmp(&report.scores[a])
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}
