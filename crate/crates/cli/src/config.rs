use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use oddball_core::attacks::AttackConfig;
use oddball_core::defense::RobustConfig;
use oddball_core::graph::{generate, load_edge_list, plant_cliques, GenConfig, LoadOptions};
use oddball_core::rng::derive_seed;
use oddball_core::transfer::{MlpConfig, RefexConfig, TransferConfig};
use oddball_core::Graph;

/// Experiment settings. Every key can come from a JSON file; flags win.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub input: Option<PathBuf>,
    /// `er:<n>:<p>` or `ba:<n>:<m>`.
    pub gen: Option<String>,
    /// `<count>x<size>` cliques planted after loading or generating.
    pub plant: Option<String>,
    pub seed: u64,
    /// Flip count, or a share of the edge count such as `2%`.
    pub budget: String,
    pub attack: String,
    pub targets_count: usize,
    pub top_k: usize,
    pub targets: Option<Vec<usize>>,
    pub reps: usize,
    pub lambdas: Vec<f64>,
    pub lr: f64,
    pub iters: usize,
    pub allow_add: bool,
    pub allow_delete: bool,
    pub huber_k: f64,
    pub ransac_iters: usize,
    pub ransac_inlier_tol: Option<f64>,
    pub refex_depth: usize,
    pub refex_bins: usize,
    pub prune_corr: f64,
    pub anomaly_fraction: f64,
    pub test_fraction: f64,
    pub epochs: usize,
    pub mlp_lr: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let attack = AttackConfig::default();
        let robust = RobustConfig::default();
        let transfer = TransferConfig::default();
        ExperimentConfig {
            input: None,
            gen: None,
            plant: None,
            seed: 0,
            budget: "10".into(),
            attack: "binarized".into(),
            targets_count: 10,
            top_k: 50,
            targets: None,
            reps: 1,
            lambdas: attack.lambdas,
            lr: attack.lr,
            iters: attack.iters,
            allow_add: true,
            allow_delete: true,
            huber_k: robust.huber_k,
            ransac_iters: robust.ransac_iters,
            ransac_inlier_tol: None,
            refex_depth: transfer.refex.recursion_depth,
            refex_bins: transfer.refex.bins,
            prune_corr: transfer.refex.prune_corr,
            anomaly_fraction: transfer.anomaly_fraction,
            test_fraction: transfer.test_fraction,
            epochs: transfer.mlp.epochs,
            mlp_lr: transfer.mlp.lr,
        }
    }
}

/// Graph source and shared settings accepted by every graph command.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON config file; flags override its keys
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Edge-list file
    #[arg(long, conflicts_with = "gen")]
    pub input: Option<PathBuf>,
    /// Generator spec, `er:<n>:<p>` or `ba:<n>:<m>`
    #[arg(long)]
    pub gen: Option<String>,
    /// Plant `<count>x<size>` cliques into the graph
    #[arg(long)]
    pub plant: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Attack settings.
#[derive(Debug, Clone, Default, Args)]
pub struct AttackArgs {
    /// Flip budget, absolute or as a share of |E| (`2%`)
    #[arg(long)]
    pub budget: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// LASSO weight for BinarizedAttack; repeat for a sweep
    #[arg(long = "lambda")]
    pub lambdas: Vec<f64>,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
            }
        }
    }

    pub fn apply_common(&mut self, args: &CommonArgs) {
        if args.input.is_some() {
            self.input = args.input.clone();
            self.gen = None;
        }
        if args.gen.is_some() {
            self.gen = args.gen.clone();
            self.input = None;
        }
        if args.plant.is_some() {
            self.plant = args.plant.clone();
        }
        if let Some(s) = args.seed {
            self.seed = s;
        }
    }

    pub fn apply_attack(&mut self, args: &AttackArgs) {
        if let Some(b) = &args.budget {
            self.budget = b.clone();
        }
        if let Some(lr) = args.lr {
            self.lr = lr;
        }
        if let Some(it) = args.iters {
            self.iters = it;
        }
        if !args.lambdas.is_empty() {
            self.lambdas = args.lambdas.clone();
        }
    }

    pub fn graph(&self) -> Result<Graph> {
        let graph = match (&self.input, &self.gen) {
            (Some(path), None) => load_edge_list(path, LoadOptions::default())?,
            (None, Some(spec)) => {
                let mut cfg = parse_gen(spec)?;
                cfg.seed = derive_seed(self.seed, 0, "generate");
                generate(&cfg)?
            }
            (None, None) => bail!("no input: pass --input or --gen"),
            (Some(_), Some(_)) => bail!("both input and gen are set; pick one"),
        };
        match &self.plant {
            None => Ok(graph),
            Some(spec) => {
                let (count, size) = parse_plant(spec)?;
                Ok(plant_cliques(&graph, count, size, derive_seed(self.seed, 0, "plant"))?.0)
            }
        }
    }

    pub fn budget_for(&self, graph: &Graph) -> Result<usize> {
        let b = self.budget.trim();
        if let Some(pct) = b.strip_suffix('%') {
            let share: f64 = pct.trim().parse().with_context(|| format!("bad budget {b:?}"))?;
            if !(share >= 0.0) {
                bail!("budget share must be non-negative");
            }
            Ok((share / 100.0 * graph.edge_count() as f64).round() as usize)
        } else {
            b.parse().with_context(|| format!("bad budget {b:?}"))
        }
    }

    pub fn attack_config(&self, budget: usize, targets: Vec<usize>, seed: u64) -> AttackConfig {
        AttackConfig {
            budget,
            targets,
            seed,
            lr: self.lr,
            iters: self.iters,
            lambdas: self.lambdas.clone(),
            allow_add: self.allow_add,
            allow_delete: self.allow_delete,
        }
    }

    pub fn robust_config(&self) -> RobustConfig {
        RobustConfig {
            huber_k: self.huber_k,
            ransac_iters: self.ransac_iters,
            ransac_inlier_tol: self.ransac_inlier_tol,
            seed: derive_seed(self.seed, 0, "ransac"),
            ..RobustConfig::default()
        }
    }

    pub fn transfer_config(&self) -> TransferConfig {
        TransferConfig {
            refex: RefexConfig {
                recursion_depth: self.refex_depth,
                bins: self.refex_bins,
                prune_corr: self.prune_corr,
            },
            mlp: MlpConfig {
                epochs: self.epochs,
                lr: self.mlp_lr,
                ..MlpConfig::default()
            },
            anomaly_fraction: self.anomaly_fraction,
            test_fraction: self.test_fraction,
            seed: self.seed,
        }
    }
}

pub fn parse_gen(spec: &str) -> Result<GenConfig> {
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    let cfg = match parts.as_slice() {
        ["er", n, p] => GenConfig::er(n.parse()?, p.parse()?, 0),
        ["ba", n, m] => GenConfig::ba(n.parse()?, m.parse()?, 0),
        _ => bail!("generator spec {spec:?} is not er:<n>:<p> or ba:<n>:<m>"),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn parse_plant(spec: &str) -> Result<(usize, usize)> {
    let (c, s) = spec
        .split_once('x')
        .with_context(|| format!("plant spec {spec:?} is not <count>x<size>"))?;
    Ok((c.trim().parse()?, s.trim().parse()?))
}
