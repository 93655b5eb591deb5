use crate::error::{Error, Result};
use crate::grad::{surrogate_value_and_gradient, RelaxedAdjacency};
use crate::graph::{pairs, EdgeFlip, Graph};

use super::{assemble_plan, AttackConfig, AttackKind, PerturbationPlan};

/// Relative objective change over the last tenth of the run above which a
/// non-convergence warning is attached to the plan.
const CONVERGENCE_TOL: f64 = 1e-4;

/// Projected gradient descent on the fully relaxed adjacency, then the top-b
/// pairs by |relaxed - clean| become the flip list for budget b.
pub fn continuous_a(graph: &Graph, config: &AttackConfig) -> Result<PerturbationPlan> {
    config.validate(graph)?;
    let n = graph.node_count();
    let (relaxed, mut warnings) = descend(graph, config)?;

    let mut ranked: Vec<(usize, usize, f64)> = pairs(n)
        .filter(|&(i, j)| config.permits(graph.has_edge(i, j)))
        .map(|(i, j)| {
            let clean = if graph.has_edge(i, j) { 1.0 } else { 0.0 };
            (i, j, (relaxed.get(i, j) - clean).abs())
        })
        .collect();
    // stable sort keeps lexicographic order among equal differences
    ranked.sort_by(|a, b| b.2.total_cmp(&a.2));

    let budget = config.budget.min(ranked.len());
    if budget < config.budget {
        warnings.push(format!("only {} candidate pairs for budget {}", ranked.len(), config.budget));
    }
    let flips: Vec<EdgeFlip> = ranked[..budget]
        .iter()
        .map(|&(i, j, _)| EdgeFlip::toggle(graph, i, j))
        .collect();
    let by_budget = (1..=budget).map(|b| (flips[..b].to_vec(), None)).collect();
    let unresolved = (budget + 1..=config.budget).collect();
    assemble_plan(graph, config, AttackKind::Continuous, by_budget, unresolved, warnings)
}

/// The relaxed matrix after `config.iters` projected steps.
pub(crate) fn descend(graph: &Graph, config: &AttackConfig) -> Result<(RelaxedAdjacency, Vec<String>)> {
    let n = graph.node_count();
    let mut adj = RelaxedAdjacency::from_graph(graph);
    let mut history = Vec::with_capacity(config.iters);
    let mut warnings = Vec::new();
    let movable: Vec<bool> = pairs(n)
        .map(|(i, j)| config.permits(graph.has_edge(i, j)))
        .collect();

    for it in 0..config.iters {
        let (value, grad) = match surrogate_value_and_gradient(&adj, &config.targets) {
            Ok(v) => v,
            Err(Error::NodeVanished { node, .. }) => {
                warnings.push(format!("stopped at iteration {it}: target {node} vanished"));
                break;
            }
            Err(e) => return Err(e),
        };
        history.push(value);
        for (idx, (i, j)) in pairs(n).enumerate() {
            if movable[idx] {
                adj.set(i, j, adj.get(i, j) - config.lr * grad.values[idx]);
            }
        }
    }

    let tail = (history.len() / 10).max(1);
    if history.len() > tail {
        let last = history[history.len() - 1];
        let before = history[history.len() - 1 - tail];
        let change = (before - last).abs() / before.abs().max(f64::MIN_POSITIVE);
        if change > CONVERGENCE_TOL {
            warnings.push(format!(
                "not converged: relative objective change {change:.3e} over the last {tail} iterations"
            ));
        }
    }
    Ok((adj, warnings))
}
