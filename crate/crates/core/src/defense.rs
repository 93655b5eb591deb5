//! Robust refits of the power-law line (Huber IRLS and RANSAC) and rescoring
//! against them.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::oddball::{
    anomaly_scores, ego_features, fit_ols, flat_fallback, log_points, solve_normal_equations,
    AnomalyReport, EgoFeatures, Fitter, RegressionFit,
};
use crate::rng::derived_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobustConfig {
    pub huber_k: f64,
    pub huber_iters: usize,
    pub huber_tol: f64,
    pub ransac_iters: usize,
    /// Residual threshold in log space. `None` uses 1.5 x the median absolute
    /// OLS residual.
    pub ransac_inlier_tol: Option<f64>,
    pub seed: u64,
}

impl Default for RobustConfig {
    fn default() -> Self {
        RobustConfig {
            huber_k: 1.345,
            huber_iters: 100,
            huber_tol: 1e-8,
            ransac_iters: 200,
            ransac_inlier_tol: None,
            seed: 0,
        }
    }
}

impl RobustConfig {
    fn validate(&self) -> Result<()> {
        if !(self.huber_k > 0.0) {
            return Err(Error::InvalidConfig("huber_k must be positive".into()));
        }
        if self.ransac_iters == 0 {
            return Err(Error::InvalidConfig("ransac_iters must be at least 1".into()));
        }
        if self.ransac_inlier_tol.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::InvalidConfig("ransac_inlier_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Huber loss: quadratic within `k`, linear beyond.
#[inline]
pub fn huber_loss(r: f64, k: f64) -> f64 {
    let a = r.abs();
    if a <= k {
        0.5 * r * r
    } else {
        k * a - 0.5 * k * k
    }
}

fn weighted_line(xs: &[f64], ys: &[f64], w: &[f64]) -> (f64, f64, bool) {
    match solve_normal_equations(xs, ys, w) {
        Some((b0, b1)) => (b0, b1, false),
        None => (flat_fallback(ys, w), 0.0, true),
    }
}

/// Huber fit plus the objective value after each IRLS step (index 0 is the
/// OLS start).
pub fn fit_huber_traced(
    features: &EgoFeatures,
    config: &RobustConfig,
) -> Result<(RegressionFit, Vec<f64>)> {
    config.validate()?;
    let start = fit_ols(features)?;
    let (_, xs, ys) = log_points(features);
    let k = config.huber_k;
    let objective = |b0: f64, b1: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(x, y)| huber_loss(y - b0 - b1 * x, k))
            .sum()
    };

    let (mut b0, mut b1, mut degenerate) = (start.beta0, start.beta1, start.degenerate);
    let mut trace = vec![objective(b0, b1)];
    let mut w = vec![1.0; xs.len()];
    for _ in 0..config.huber_iters {
        for ((wi, x), y) in w.iter_mut().zip(&xs).zip(&ys) {
            let r = (y - b0 - b1 * x).abs();
            *wi = if r <= k { 1.0 } else { k / r };
        }
        let (nb0, nb1, deg) = weighted_line(&xs, &ys, &w);
        let delta = (nb0 - b0).abs().max((nb1 - b1).abs());
        (b0, b1, degenerate) = (nb0, nb1, deg);
        trace.push(objective(b0, b1));
        if delta < config.huber_tol {
            break;
        }
    }
    Ok((
        RegressionFit {
            beta0: b0,
            beta1: b1,
            fitter: Fitter::Huber,
            mask: start.mask.clone(),
            used: start.mask,
            degenerate,
        },
        trace,
    ))
}

/// Minimizes the summed Huber loss of the log-space residuals by iteratively
/// reweighted least squares, starting from OLS.
pub fn fit_huber(features: &EgoFeatures, config: &RobustConfig) -> Result<RegressionFit> {
    fit_huber_traced(features, config).map(|(fit, _)| fit)
}

/// RANSAC result with the minimal sample that produced the winning consensus.
#[derive(Debug, Clone, PartialEq)]
pub struct RansacOutcome {
    pub fit: RegressionFit,
    /// Node ids of the two-point sample behind the consensus set.
    pub sample: (usize, usize),
    /// Line through the sample, `(beta0, beta1)`.
    pub sample_line: (f64, f64),
    pub inlier_tol: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

pub fn fit_ransac_detailed(features: &EgoFeatures, config: &RobustConfig) -> Result<RansacOutcome> {
    config.validate()?;
    let (ids, xs, ys) = log_points(features);
    let m = xs.len();
    let distinct = xs.iter().any(|&x| x != xs[0]);
    if m < 2 || !distinct {
        return Err(Error::TooFewPoints(if distinct { m } else { m.min(1) }));
    }
    let tol = match config.ransac_inlier_tol {
        Some(t) => t,
        None => {
            let ols = fit_ols(features)?;
            let abs_res = xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| (y - ols.beta0 - ols.beta1 * x).abs())
                .collect();
            (1.5 * median(abs_res)).max(1e-9)
        }
    };

    // the whole sample sequence comes from the seed before any evaluation
    let mut rng = derived_rng(config.seed, 0, "ransac");
    let draws: Vec<(usize, usize)> = (0..config.ransac_iters)
        .map(|_| loop {
            let a = rng.random_range(0..m);
            let b = rng.random_range(0..m);
            if xs[a] != xs[b] {
                break (a, b);
            }
        })
        .collect();

    // (inliers, summed k=1 Huber loss over inliers, draw index)
    let scored: Vec<(usize, f64, usize)> = draws
        .par_iter()
        .enumerate()
        .map(|(d, &(a, b))| {
            let b1 = (ys[b] - ys[a]) / (xs[b] - xs[a]);
            let b0 = ys[a] - b1 * xs[a];
            let (mut count, mut loss) = (0, 0.0);
            for (x, y) in xs.iter().zip(&ys) {
                let r = y - b0 - b1 * x;
                if r.abs() <= tol {
                    count += 1;
                    loss += huber_loss(r, 1.0);
                }
            }
            (count, loss, d)
        })
        .collect();
    let &(count, _, d) = scored
        .iter()
        .min_by(|p, q| q.0.cmp(&p.0).then(p.1.total_cmp(&q.1)).then(p.2.cmp(&q.2)))
        .expect("at least one draw");
    if count < 2 {
        return Err(Error::NoConsensus);
    }

    let (a, b) = draws[d];
    let s1 = (ys[b] - ys[a]) / (xs[b] - xs[a]);
    let s0 = ys[a] - s1 * xs[a];
    let inlier: Vec<bool> = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - s0 - s1 * x).abs() <= tol)
        .collect();
    let w: Vec<f64> = inlier.iter().map(|&i| if i { 1.0 } else { 0.0 }).collect();
    let (beta0, beta1, degenerate) = weighted_line(&xs, &ys, &w);

    let mask = features.eligible();
    let mut used = vec![false; features.len()];
    for (k, &id) in ids.iter().enumerate() {
        used[id] = inlier[k];
    }
    Ok(RansacOutcome {
        fit: RegressionFit {
            beta0,
            beta1,
            fitter: Fitter::Ransac,
            mask,
            used,
            degenerate,
        },
        sample: (ids[a], ids[b]),
        sample_line: (s0, s1),
        inlier_tol: tol,
    })
}

/// Random-sample consensus over two-point lines, refitted by least squares on
/// the largest consensus set.
pub fn fit_ransac(features: &EgoFeatures, config: &RobustConfig) -> Result<RegressionFit> {
    fit_ransac_detailed(features, config).map(|o| o.fit)
}

pub fn fit_with(features: &EgoFeatures, fitter: Fitter, config: &RobustConfig) -> Result<RegressionFit> {
    match fitter {
        Fitter::Ols => fit_ols(features),
        Fitter::Huber => fit_huber(features, config),
        Fitter::Ransac => fit_ransac(features, config),
    }
}

/// Egonet features, the chosen fit, and anomaly scores against it.
pub fn robust_rescore(graph: &Graph, fitter: Fitter, config: &RobustConfig) -> Result<AnomalyReport> {
    let features = ego_features(graph);
    let fit = fit_with(&features, fitter, config)?;
    Ok(anomaly_scores(&features, &fit))
}

/// Attack success measured with the same fitter on both graphs.
pub fn tau_with_fitter(
    clean: &Graph,
    poisoned: &Graph,
    targets: &[usize],
    fitter: Fitter,
    config: &RobustConfig,
) -> Result<f64> {
    let before = robust_rescore(clean, fitter, config)?;
    let after = robust_rescore(poisoned, fitter, config)?;
    crate::attacks::tau_as(&before, &after, targets)
}
