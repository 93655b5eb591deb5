//! Targeted structural poisoning attacks on OddBall and their evaluation.
//!
//! All three attacks minimize the surrogate objective (squared residuals of
//! the targets against the re-fitted power law) under an edge-flip budget and
//! return a [`PerturbationPlan`] holding one flip list per budget `b = 1..=B`.
//! Plans are scored with the true anomaly score.

mod binarized;
mod continuous;
mod gradmax;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{apply_flips, EdgeFlip, Graph};
use crate::oddball::{score_graph, surrogate_objective, AnomalyReport};

pub use binarized::{binarized_attack, soft_gradient};
pub use continuous::continuous_a;
pub use gradmax::grad_max_search;

pub const PLAN_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    GradMax,
    Continuous,
    Binarized,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::GradMax => "gradmax",
            AttackKind::Continuous => "continuous",
            AttackKind::Binarized => "binarized",
        }
    }
}

impl std::str::FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradmax" => Ok(AttackKind::GradMax),
            "continuous" => Ok(AttackKind::Continuous),
            "binarized" => Ok(AttackKind::Binarized),
            other => Err(Error::InvalidConfig(format!("unknown attack {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Maximum number of edge flips B.
    pub budget: usize,
    pub targets: Vec<usize>,
    pub seed: u64,
    /// Step size of the gradient-descent attacks.
    pub lr: f64,
    /// Inner iterations of the gradient-descent attacks.
    pub iters: usize,
    /// LASSO weights swept by BinarizedAttack.
    pub lambdas: Vec<f64>,
    pub allow_add: bool,
    pub allow_delete: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            budget: 10,
            targets: Vec::new(),
            seed: 0,
            lr: 0.01,
            iters: 500,
            lambdas: vec![1e-4, 1e-3, 1e-2, 1e-1],
            allow_add: true,
            allow_delete: true,
        }
    }
}

impl AttackConfig {
    pub fn new(budget: usize, targets: Vec<usize>) -> Self {
        AttackConfig {
            budget,
            targets,
            ..AttackConfig::default()
        }
    }

    pub(crate) fn validate(&self, graph: &Graph) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::InvalidConfig("target set is empty".into()));
        }
        if let Some(&t) = self.targets.iter().find(|&&t| t >= graph.node_count()) {
            return Err(Error::InvalidConfig(format!("target {t} out of range")));
        }
        if let Some(&t) = self.targets.iter().find(|&&t| graph.degree(t) == 0) {
            return Err(Error::TargetIsolated(t));
        }
        if !self.allow_add && !self.allow_delete {
            return Err(Error::InvalidConfig(
                "at least one of additions or deletions must be allowed".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("step size {} must be positive", self.lr)));
        }
        Ok(())
    }

    /// Whether the pair may be toggled given its current state in the clean graph.
    #[inline]
    pub(crate) fn permits(&self, present: bool) -> bool {
        if present {
            self.allow_delete
        } else {
            self.allow_add
        }
    }
}

/// Where a BinarizedAttack budget step came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSource {
    pub lambda: f64,
    pub iteration: usize,
    /// Surrogate of the snapshot's full flipped set.
    pub surrogate: f64,
    /// Size of the snapshot's flipped set (>= budget).
    pub flipped: usize,
}

/// Flip list for one budget and its evaluation on the poisoned graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetStep {
    pub budget: usize,
    pub flips: Vec<EdgeFlip>,
    /// True anomaly-score sum over the targets after poisoning.
    pub score_sum: Option<f64>,
    pub surrogate: Option<f64>,
    pub tau_as: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SnapshotSource>,
    /// Evaluation failure, e.g. a target left without edges.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationPlan {
    pub schema_version: u32,
    pub attack: AttackKind,
    pub targets: Vec<usize>,
    pub budget: usize,
    /// Clean-graph score sum over the targets.
    pub baseline_score: f64,
    pub baseline_surrogate: f64,
    /// One entry per resolved budget, ascending.
    pub steps: Vec<BudgetStep>,
    /// Budgets for which the attack produced no flip list.
    pub unresolved: Vec<usize>,
    pub warnings: Vec<String>,
}

impl PerturbationPlan {
    pub fn step(&self, budget: usize) -> Option<&BudgetStep> {
        self.steps.iter().find(|s| s.budget == budget)
    }

    /// Flips of the largest resolved budget.
    pub fn final_flips(&self) -> &[EdgeFlip] {
        self.steps.last().map(|s| s.flips.as_slice()).unwrap_or(&[])
    }

    /// CSV rows `budget,attack_power,S_T,tau_as`; row 0 is the clean baseline.
    pub fn to_csv(&self, clean_edges: usize) -> String {
        let mut s = String::from("budget,attack_power,S_T,tau_as\n");
        let _ = writeln!(s, "0,0,{},0", self.baseline_score);
        for step in &self.steps {
            let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{}",
                step.budget,
                step.budget as f64 / clean_edges.max(1) as f64,
                fmt(step.score_sum),
                fmt(step.tau_as)
            );
        }
        s
    }
}

/// Decrease of the targets' summed anomaly score: `(S0 - SB) / S0`.
pub fn tau_as(clean: &AnomalyReport, poisoned: &AnomalyReport, targets: &[usize]) -> Result<f64> {
    if clean.scores.len() != poisoned.scores.len() {
        return Err(Error::InvalidConfig("reports cover different node sets".into()));
    }
    tau_from_sums(clean.score_sum(targets), poisoned.score_sum(targets))
}

pub fn tau_from_sums(clean_sum: f64, poisoned_sum: f64) -> Result<f64> {
    if clean_sum <= 0.0 {
        return Err(Error::ZeroBaseline);
    }
    Ok((clean_sum - poisoned_sum) / clean_sum)
}

/// Scores every flip list against the clean graph and assembles the plan.
pub(crate) fn assemble_plan(
    graph: &Graph,
    config: &AttackConfig,
    attack: AttackKind,
    flips_by_budget: Vec<(Vec<EdgeFlip>, Option<SnapshotSource>)>,
    unresolved: Vec<usize>,
    warnings: Vec<String>,
) -> Result<PerturbationPlan> {
    let clean = score_graph(graph)?;
    let targets = &config.targets;
    let baseline_score = clean.score_sum(targets);
    let baseline_surrogate = surrogate_objective(&clean.features, targets)?;
    let steps = flips_by_budget
        .into_iter()
        .map(|(flips, source)| {
            let budget = flips.len();
            let mut step = BudgetStep {
                budget,
                flips,
                score_sum: None,
                surrogate: None,
                tau_as: None,
                source,
                error: None,
            };
            match evaluate_flips(graph, &step.flips, targets, baseline_score) {
                Ok((s, sur, tau)) => {
                    step.score_sum = Some(s);
                    step.surrogate = Some(sur);
                    step.tau_as = tau;
                }
                Err(e) => step.error = Some(e.to_string()),
            }
            Ok(step)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PerturbationPlan {
        schema_version: PLAN_SCHEMA_VERSION,
        attack,
        targets: targets.clone(),
        budget: config.budget,
        baseline_score,
        baseline_surrogate,
        steps,
        unresolved,
        warnings,
    })
}

fn evaluate_flips(
    graph: &Graph,
    flips: &[EdgeFlip],
    targets: &[usize],
    baseline_score: f64,
) -> Result<(f64, f64, Option<f64>)> {
    let poisoned = apply_flips(graph, flips)?;
    if let Some(&t) = targets.iter().find(|&&t| poisoned.degree(t) == 0) {
        return Err(Error::TargetIsolated(t));
    }
    let report = score_graph(&poisoned)?;
    let s = report.score_sum(targets);
    let sur = surrogate_objective(&report.features, targets)?;
    Ok((s, sur, tau_from_sums(baseline_score, s).ok()))
}

/// Runs the named attack.
pub fn run_attack(graph: &Graph, config: &AttackConfig, attack: AttackKind) -> Result<PerturbationPlan> {
    match attack {
        AttackKind::GradMax => grad_max_search(graph, config),
        AttackKind::Continuous => continuous_a(graph, config),
        AttackKind::Binarized => binarized_attack(graph, config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oddball::{anomaly_scores, fit_ols, EgoFeatures};

    fn report(scores: &[f64]) -> AnomalyReport {
        let n = scores.len();
        let features = EgoFeatures {
            nodes: vec![1.0; n],
            edges: vec![1.0; n],
        };
        let fit = fit_ols(&features).unwrap();
        AnomalyReport {
            scores: scores.to_vec(),
            ..anomaly_scores(&features, &fit)
        }
    }

    #[test]
    fn tau_examples() {
        let clean = report(&[4.0, 4.4, 0.0]);
        assert_eq!(tau_as(&clean, &clean, &[0, 1]).unwrap(), 0.0);
        let zero = report(&[0.0, 0.0, 1.0]);
        assert_eq!(tau_as(&clean, &zero, &[0, 1]).unwrap(), 1.0);
        let tau = tau_from_sums(8.4, 0.29).unwrap();
        assert!((tau - 0.965476).abs() < 1e-6, "{tau}");
        assert!(matches!(tau_as(&zero, &clean, &[0]), Err(Error::ZeroBaseline)));
        // poisoning can also raise the score
        assert!(tau_from_sums(1.0, 3.0).unwrap() < 0.0);
    }

    #[test]
    fn attack_names_round_trip() {
        for k in [AttackKind::GradMax, AttackKind::Continuous, AttackKind::Binarized] {
            assert_eq!(k.name().parse::<AttackKind>().unwrap(), k);
        }
        assert!("metattack".parse::<AttackKind>().is_err());
    }
}
