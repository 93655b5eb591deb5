//! Monte-Carlo two-sample permutation test on the difference of means.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derived_rng;

/// Resamples per independently seeded chunk.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermTestResult {
    /// Observed |mean(x) - mean(y)|.
    pub t0: f64,
    /// Fraction of resampled statistics at or above `t0`.
    pub p_value: f64,
    pub m: usize,
    pub seed: u64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(p, q)| p.total_cmp(q))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Statistic for a split of `pooled` into its first `nx` values and the rest.
fn split_stat(pooled: &[f64], nx: usize, total: f64) -> f64 {
    let sx: f64 = pooled[..nx].iter().sum();
    let ny = pooled.len() - nx;
    (sx / nx as f64 - (total - sx) / ny as f64).abs()
}

/// p = #{t_j >= t0} / m over `m` random relabelings of the pooled sample.
pub fn permutation_test(x: &[f64], y: &[f64], m: usize, seed: u64) -> Result<PermTestResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidConfig("both samples need at least one value".into()));
    }
    if m == 0 {
        return Err(Error::InvalidConfig("resample count must be at least 1".into()));
    }
    if let Some(v) = x.iter().chain(y).find(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(format!("non-finite sample value {v}")));
    }
    // canonical order makes the resampling stream symmetric in (x, y)
    let (x, y) = match x.len().cmp(&y.len()).then_with(|| lex_cmp(x, y)) {
        std::cmp::Ordering::Greater => (y, x),
        _ => (x, y),
    };
    let t0 = (mean(x) - mean(y)).abs();
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let total: f64 = pooled.iter().sum();
    let scale = pooled.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    // resampled statistics equal to t0 in exact arithmetic must count as ties
    let threshold = t0 - 1e-12 * (1.0 + scale);
    let nx = x.len();

    let chunks = m.div_ceil(CHUNK);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = derived_rng(seed, c as u64, "permutation");
            let mut work = pooled.clone();
            let count = CHUNK.min(m - c * CHUNK);
            (0..count)
                .filter(|_| {
                    work.partial_shuffle(&mut rng, nx);
                    split_stat(&work, nx, total) >= threshold
                })
                .count()
        })
        .sum();

    Ok(PermTestResult {
        t0,
        p_value: hits as f64 / m as f64,
        m,
        seed,
    })
}
