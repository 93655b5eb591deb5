//! BinarizedAttack: one soft variable in [0, 1] per candidate pair, with the
//! pair toggled in the forward pass whenever its soft value reaches 0.5. The
//! objective is always evaluated on the resulting 0/1 graph; the backward pass
//! sends its gradient straight through the threshold to the soft variables.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grad::{surrogate_value_and_gradient, RelaxedAdjacency};
use crate::graph::{pair_count, pairs, EdgeFlip, Graph};
use crate::rng::derived_rng;

use super::{assemble_plan, AttackConfig, AttackKind, PerturbationPlan, SnapshotSource};

/// Soft variables start at `INIT_LEVEL + U[0, INIT_NOISE)`, below the flip threshold.
const INIT_LEVEL: f64 = 0.25;
const INIT_NOISE: f64 = 0.05;
const FLIP_THRESHOLD: f64 = 0.5;

/// Paired soft and sign variables over the candidate pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarizedState {
    /// Soft variable per candidate, in [0, 1].
    pub soft: Vec<f64>,
}

impl BinarizedState {
    /// Sign variable: -1 marks a flipped pair, +1 a kept one.
    pub fn dummy(&self) -> Vec<i8> {
        self.soft
            .iter()
            .map(|&z| if z >= FLIP_THRESHOLD { -1 } else { 1 })
            .collect()
    }

    /// Candidates with soft value at or above the threshold.
    pub fn flipped(&self) -> impl Iterator<Item = usize> + '_ {
        self.soft
            .iter()
            .enumerate()
            .filter(|(_, &z)| z >= FLIP_THRESHOLD)
            .map(|(c, _)| c)
    }
}

/// Poisoned entry from a clean 0/1 entry and a sign: (a0 - 0.5) * z + 0.5.
#[inline]
pub(crate) fn poisoned_entry(clean: f64, sign: i8) -> f64 {
    (clean - 0.5) * f64::from(sign) + 0.5
}

/// One iterate of one lambda run, reduced to what extraction needs.
#[derive(Debug, Clone)]
struct Snapshot {
    lambda_slot: usize,
    iteration: usize,
    surrogate: f64,
    flipped: usize,
    /// Up to `budget` flipped candidates by soft value, descending.
    top: Vec<u32>,
}

struct Problem<'a> {
    graph: &'a Graph,
    config: &'a AttackConfig,
    /// Candidate pairs `(i, j)`, lexicographic.
    candidates: Vec<(usize, usize)>,
    /// Clean entry per candidate, 0 or 1.
    clean: Vec<f64>,
    init: Vec<f64>,
}

impl Problem<'_> {
    fn run_lambda(&self, slot: usize, lambda: f64) -> Result<(Vec<Snapshot>, usize)> {
        let n = self.graph.node_count();
        let targets = &self.config.targets;
        let mut state = BinarizedState {
            soft: self.init.clone(),
        };
        let mut adj = RelaxedAdjacency::from_graph(self.graph);
        let mut snapshots = Vec::with_capacity(self.config.iters + 1);
        let mut vanished = 0;
        let mut step = vec![0.0; self.candidates.len()];
        let mut pair_grad = vec![0.0; self.candidates.len()];

        for it in 0..=self.config.iters {
            // forward on the binary graph
            let flipped: Vec<usize> = state.flipped().collect();
            let dummy = state.dummy();
            for &c in &flipped {
                let (i, j) = self.candidates[c];
                adj.set(i, j, poisoned_entry(self.clean[c], dummy[c]));
            }
            let eval = surrogate_value_and_gradient(&adj, targets);
            for &c in &flipped {
                let (i, j) = self.candidates[c];
                adj.set(i, j, self.clean[c]);
            }

            let grad = match eval {
                Ok((value, grad)) => {
                    snapshots.push(Snapshot {
                        lambda_slot: slot,
                        iteration: it,
                        surrogate: value,
                        flipped: flipped.len(),
                        top: top_by_soft(&state.soft, flipped, self.config.budget),
                    });
                    Some(grad)
                }
                Err(Error::NodeVanished { .. }) => {
                    vanished += 1;
                    self.soft_point_gradient(&state)?
                }
                Err(e) => return Err(e),
            };
            if it == self.config.iters {
                break;
            }

            for (c, &(i, j)) in self.candidates.iter().enumerate() {
                pair_grad[c] = grad.as_ref().map_or(0.0, |g| g.values[crate::graph::pair_index(n, i, j)]);
            }
            soft_gradient(&pair_grad, &self.clean, &state.soft, lambda, &mut step);
            for (z, g) in state.soft.iter_mut().zip(&step) {
                *z = (*z - self.config.lr * g).clamp(0.0, 1.0);
            }
        }
        Ok((snapshots, vanished))
    }

    /// Gradient at the relaxation a0 + (1 - 2 a0) * soft, used when the binary
    /// forward pass isolates a target.
    fn soft_point_gradient(&self, state: &BinarizedState) -> Result<Option<crate::grad::GradientField>> {
        let mut adj = RelaxedAdjacency::from_graph(self.graph);
        for (c, &(i, j)) in self.candidates.iter().enumerate() {
            let a0 = self.clean[c];
            adj.set(i, j, a0 + (1.0 - 2.0 * a0) * state.soft[c]);
        }
        match surrogate_value_and_gradient(&adj, &self.config.targets) {
            Ok((_, g)) => Ok(Some(g)),
            Err(Error::NodeVanished { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// Gradient of `L + lambda * |soft|_1` with respect to the soft variables,
/// given dL/dA per candidate pair. The threshold is passed straight through:
/// dA/dZ = a0 - 0.5 and dZ/dsoft = -2. The penalty uses the subgradient 0 at
/// soft = 0.
pub fn soft_gradient(pair_grad: &[f64], clean: &[f64], soft: &[f64], lambda: f64, out: &mut [f64]) {
    for (c, o) in out.iter_mut().enumerate() {
        let penalty = if soft[c] > 0.0 { lambda } else { 0.0 };
        *o = pair_grad[c] * (1.0 - 2.0 * clean[c]) + penalty;
    }
}

/// Up to `k` of `flipped` by descending soft value, ties by candidate order.
fn top_by_soft(soft: &[f64], mut flipped: Vec<usize>, k: usize) -> Vec<u32> {
    flipped.sort_by(|&a, &b| soft[b].total_cmp(&soft[a]).then(a.cmp(&b)));
    flipped.truncate(k);
    flipped.into_iter().map(|c| c as u32).collect()
}

pub fn binarized_attack(graph: &Graph, config: &AttackConfig) -> Result<PerturbationPlan> {
    config.validate(graph)?;
    if config.lambdas.is_empty() {
        return Err(Error::InvalidConfig("lambda set is empty".into()));
    }
    if let Some(l) = config.lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(Error::InvalidConfig(format!("lambda {l} must be finite and non-negative")));
    }
    let n = graph.node_count();
    let candidates: Vec<(usize, usize)> = pairs(n)
        .filter(|&(i, j)| config.permits(graph.has_edge(i, j)))
        .collect();
    let clean: Vec<f64> = candidates
        .iter()
        .map(|&(i, j)| if graph.has_edge(i, j) { 1.0 } else { 0.0 })
        .collect();
    let mut rng = derived_rng(config.seed, 0, "binarized-init");
    // one draw per pair so the init of a pair does not depend on the candidate filter
    let all_init: Vec<f64> = (0..pair_count(n))
        .map(|_| INIT_LEVEL + rng.random_range(0.0..INIT_NOISE))
        .collect();
    let init = candidates
        .iter()
        .map(|&(i, j)| all_init[crate::graph::pair_index(n, i, j)])
        .collect();
    let problem = Problem {
        graph,
        config,
        candidates,
        clean,
        init,
    };

    let runs: Vec<(Vec<Snapshot>, usize)> = config
        .lambdas
        .par_iter()
        .enumerate()
        .map(|(slot, &lambda)| problem.run_lambda(slot, lambda))
        .collect::<Result<_>>()?;

    let mut warnings = Vec::new();
    for (slot, (_, vanished)) in runs.iter().enumerate() {
        if *vanished > 0 {
            warnings.push(format!(
                "lambda {}: {vanished} iterates isolated a target and were skipped",
                config.lambdas[slot]
            ));
        }
    }
    let snapshots: Vec<Snapshot> = runs.into_iter().flat_map(|(s, _)| s).collect();

    let mut by_budget = Vec::new();
    let mut unresolved = Vec::new();
    for b in 1..=config.budget {
        // Snapshots with exactly b flips are preferred, since their surrogate is
        // that of the extracted plan; otherwise any with more. First minimum in
        // (lambda slot, iteration) order wins.
        let exact = snapshots.iter().any(|s| s.flipped == b);
        let best = snapshots
            .iter()
            .filter(|s| if exact { s.flipped == b } else { s.flipped >= b })
            .fold(None::<&Snapshot>, |acc, s| match acc {
                Some(a) if a.surrogate <= s.surrogate => Some(a),
                _ => Some(s),
            });
        match best {
            Some(s) => {
                let flips = s.top[..b]
                    .iter()
                    .map(|&c| {
                        let (i, j) = problem.candidates[c as usize];
                        EdgeFlip::toggle(graph, i, j)
                    })
                    .collect();
                let source = SnapshotSource {
                    lambda: config.lambdas[s.lambda_slot],
                    iteration: s.iteration,
                    surrogate: s.surrogate,
                    flipped: s.flipped,
                };
                by_budget.push((flips, Some(source)));
            }
            None => unresolved.push(b),
        }
    }
    if !unresolved.is_empty() {
        warnings.push(format!("no snapshot reached budgets {unresolved:?}"));
    }
    assemble_plan(graph, config, AttackKind::Binarized, by_budget, unresolved, warnings)
}
