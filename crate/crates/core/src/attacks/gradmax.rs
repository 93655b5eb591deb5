use crate::error::Result;
use crate::grad::{surrogate_gradient, RelaxedAdjacency};
use crate::graph::{apply_flips, pair_count, pairs, EdgeFlip, Graph};

use super::{assemble_plan, AttackConfig, AttackKind, PerturbationPlan};

/// Greedy attack: each round flips the unmodified pair with the largest
/// gradient magnitude whose sign agrees with the move (negative for an
/// addition, positive for a deletion). Deletions that would leave either
/// endpoint without edges are skipped.
pub fn grad_max_search(graph: &Graph, config: &AttackConfig) -> Result<PerturbationPlan> {
    config.validate(graph)?;
    let n = graph.node_count();
    let mut modified = vec![false; pair_count(n)];
    let mut current = graph.clone();
    let mut flips: Vec<EdgeFlip> = Vec::with_capacity(config.budget);
    let mut warnings = Vec::new();

    while flips.len() < config.budget {
        let grad = surrogate_gradient(&RelaxedAdjacency::from_graph(&current), &config.targets)?;
        let mut best: Option<(usize, usize, f64)> = None;
        for (idx, (i, j)) in pairs(n).enumerate() {
            if modified[idx] {
                continue;
            }
            let g = grad.values[idx];
            let present = current.has_edge(i, j);
            if !config.permits(graph.has_edge(i, j)) {
                continue;
            }
            let useful = if present {
                g > 0.0 && current.degree(i) > 1 && current.degree(j) > 1
            } else {
                g < 0.0
            };
            if useful && best.is_none_or(|(_, _, b)| g.abs() > b) {
                best = Some((i, j, g.abs()));
            }
        }
        let Some((i, j, _)) = best else {
            warnings.push(format!("no valid move left after {} flips", flips.len()));
            break;
        };
        let flip = EdgeFlip::toggle(&current, i, j);
        current = apply_flips(&current, &[flip])?;
        modified[crate::graph::pair_index(n, i, j)] = true;
        flips.push(flip);
    }

    let unresolved = (flips.len() + 1..=config.budget).collect();
    let by_budget = (1..=flips.len()).map(|b| (flips[..b].to_vec(), None)).collect();
    assemble_plan(graph, config, AttackKind::GradMax, by_budget, unresolved, warnings)
}
