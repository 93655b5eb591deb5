use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use oddball_core::attacks::{run_attack, AttackKind, PerturbationPlan};
use oddball_core::defense::tau_with_fitter;
use oddball_core::graph::{apply_flips, edge_list_string};
use oddball_core::oddball::{rank_top_k, score_graph};
use oddball_core::rng::{derive_seed, derived_rng};
use oddball_core::stats::{permutation_test, PermTestResult};
use oddball_core::transfer::{refex_embed, run_transfer};
use oddball_core::{Fitter, Graph};

use crate::config::ExperimentConfig;

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

fn emit(out: Option<&Path>, contents: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn generate(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<()> {
    emit(out, &edge_list_string(&cfg.graph()?))
}

pub fn score(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<()> {
    emit(out, &score_graph(&cfg.graph()?)?.to_csv())
}

/// Targets for one repetition: the explicit list, or a seeded draw of
/// `targets_count` nodes from the `top_k` highest scores.
fn draw_targets(cfg: &ExperimentConfig, graph: &Graph, rep: usize) -> Result<Vec<usize>> {
    if let Some(t) = &cfg.targets {
        return Ok(t.clone());
    }
    let report = score_graph(graph)?;
    let pool = rank_top_k(&report, cfg.top_k);
    if cfg.targets_count > pool.len() {
        bail!("cannot draw {} targets from a pool of {}", cfg.targets_count, pool.len());
    }
    let mut rng = derived_rng(cfg.seed, rep as u64, "targets");
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, pool.len(), cfg.targets_count)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

struct RepOutcome {
    plan: PerturbationPlan,
}

pub fn attack(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    if cfg.reps == 0 {
        bail!("reps must be at least 1");
    }
    let kind: AttackKind = cfg.attack.parse()?;
    let graph = cfg.graph()?;
    let budget = cfg.budget_for(&graph)?;
    let name = kind.name();
    write_atomic(&out_dir.join("clean_scores.csv"), &score_graph(&graph)?.to_csv())?;

    let results: Vec<Result<RepOutcome>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let targets = draw_targets(cfg, &graph, rep)?;
            let config = cfg.attack_config(budget, targets, derive_seed(cfg.seed, rep as u64, "attack"));
            let plan = run_attack(&graph, &config, kind)?;
            for w in &plan.warnings {
                log::warn!("rep {rep}: {w}");
            }
            write_atomic(&out_dir.join(format!("plan_{name}_rep{rep}.json")), &to_json(&plan)?)?;
            write_atomic(
                &out_dir.join(format!("budgets_{name}_rep{rep}.csv")),
                &plan.to_csv(graph.edge_count()),
            )?;
            let poisoned = apply_flips(&graph, plan.final_flips())?;
            write_atomic(
                &out_dir.join(format!("scores_{name}_rep{rep}.csv")),
                &score_graph(&poisoned)?.to_csv(),
            )?;
            Ok(RepOutcome { plan })
        })
        .collect();

    let mut plans = Vec::with_capacity(results.len());
    for (rep, r) in results.into_iter().enumerate() {
        plans.push(r.with_context(|| format!("repetition {rep}"))?.plan);
    }

    let mut summary = String::from("budget,attack_power,mean_S_T,mean_tau_as,reps\n");
    let _ = writeln!(
        summary,
        "0,0,{},0,{}",
        plans.iter().map(|p| p.baseline_score).sum::<f64>() / plans.len() as f64,
        plans.len()
    );
    for b in 1..=budget {
        let rows: Vec<(f64, f64)> = plans
            .iter()
            .filter_map(|p| p.step(b))
            .filter_map(|s| Some((s.score_sum?, s.tau_as?)))
            .collect();
        let power = b as f64 / graph.edge_count().max(1) as f64;
        if rows.is_empty() {
            let _ = writeln!(summary, "{b},{power},,,0");
        } else {
            let k = rows.len() as f64;
            let _ = writeln!(
                summary,
                "{b},{power},{},{},{}",
                rows.iter().map(|r| r.0).sum::<f64>() / k,
                rows.iter().map(|r| r.1).sum::<f64>() / k,
                rows.len()
            );
        }
    }
    write_atomic(&out_dir.join(format!("summary_{name}.csv")), &summary)
}

pub fn defend(cfg: &ExperimentConfig, plan_path: &Path, out: Option<&Path>) -> Result<()> {
    let graph = cfg.graph()?;
    let text = std::fs::read_to_string(plan_path).with_context(|| format!("reading {}", plan_path.display()))?;
    let plan: PerturbationPlan =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", plan_path.display()))?;
    let robust = cfg.robust_config();
    let fitters = [Fitter::Ols, Fitter::Huber, Fitter::Ransac];

    let mut csv = String::from("budget,tau_ols,tau_huber,tau_ransac\n");
    csv.push_str("0,0,0,0\n");
    for step in &plan.steps {
        let poisoned = apply_flips(&graph, &step.flips)?;
        let taus: Vec<String> = fitters
            .iter()
            .map(|&f| match tau_with_fitter(&graph, &poisoned, &plan.targets, f, &robust) {
                Ok(t) => t.to_string(),
                Err(e) => {
                    log::warn!("budget {}: {f} rescoring failed: {e}", step.budget);
                    String::new()
                }
            })
            .collect();
        let _ = writeln!(csv, "{},{}", step.budget, taus.join(","));
    }
    emit(out, &csv)
}

pub fn transfer(cfg: &ExperimentConfig, out: Option<&Path>, embedding_out: Option<&Path>) -> Result<()> {
    let graph = cfg.graph()?;
    let budget = cfg.budget_for(&graph)?;
    let tcfg = cfg.transfer_config();
    let attack = cfg.attack_config(budget, Vec::new(), derive_seed(cfg.seed, 0, "attack"));
    if let Some(p) = embedding_out {
        write_atomic(p, &refex_embed(&graph, &tcfg.refex)?.to_csv())?;
    }
    let (report, _) = run_transfer(&graph, &tcfg, &attack)?;
    emit(out, &to_json(&report)?)
}

/// Numbers from a single-column file, or from the named column of a CSV with
/// a header row.
pub fn read_sample(path: &Path, column: Option<&str>) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let index = match column {
        None => None,
        Some(name) => {
            let (_, header) = lines.next().with_context(|| format!("{}: empty file", path.display()))?;
            let idx = header
                .split(',')
                .position(|h| h.trim() == name)
                .with_context(|| format!("{}: no column {name:?} in header", path.display()))?;
            Some(idx)
        }
    };
    let mut values = Vec::new();
    for (lineno, line) in lines {
        let field = match index {
            None => line,
            Some(i) => line
                .split(',')
                .nth(i)
                .with_context(|| format!("{}:{lineno}: missing column {}", path.display(), i + 1))?
                .trim(),
        };
        let v: f64 = field
            .parse()
            .with_context(|| format!("{}:{lineno}: not a number: {field:?}", path.display()))?;
        values.push(v);
    }
    if values.is_empty() {
        bail!("{}: no values", path.display());
    }
    Ok(values)
}

pub fn permtest(x: &Path, y: &Path, column: Option<&str>, m: usize, seed: u64) -> Result<PermTestResult> {
    let xs = read_sample(x, column)?;
    let ys = read_sample(y, column)?;
    Ok(permutation_test(&xs, &ys, m, seed)?)
}
