//! Black-box transfer of an OddBall attack to a ReFeX-embedding classifier:
//! label nodes by OddBall score, train on the clean graph, attack the nodes it
//! flags, retrain on the poisoned graph with the same labels and split, and
//! compare soft labels on the targets.

mod mlp;
mod refex;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::attacks::{binarized_attack, AttackConfig, PerturbationPlan};
use crate::error::{Error, Result};
use crate::graph::{apply_flips, Graph};
use crate::oddball::{rank_top_k, score_graph};
use crate::rng::derived_rng;

pub use mlp::{train_mlp, Classifier, MlpConfig};
pub use refex::{log_bins, refex_embed, refex_features, Embedding, RefexConfig, RefexFeatures};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSplit {
    /// Anomaly label per node.
    pub labels: Vec<bool>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub anomaly_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

/// Labels the top `ceil(anomaly_fraction * n)` OddBall scores as anomalous and
/// splits nodes into train and test, stratified by label.
pub fn make_labeled_split(graph: &Graph, anomaly_fraction: f64, test_fraction: f64, seed: u64) -> Result<LabeledSplit> {
    for (name, f) in [("anomaly_fraction", anomaly_fraction), ("test_fraction", test_fraction)] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::InvalidConfig(format!("{name} must lie in (0, 1), got {f}")));
        }
    }
    let n = graph.node_count();
    let k = (anomaly_fraction * n as f64).ceil() as usize;
    if k == 0 || k >= n {
        return Err(Error::InvalidConfig(format!("{k} anomalous nodes out of {n}")));
    }
    let report = score_graph(graph)?;
    let mut labels = vec![false; n];
    for u in rank_top_k(&report, k) {
        labels[u] = true;
    }

    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (class, label) in [false, true].into_iter().enumerate() {
        let mut members: Vec<usize> = (0..n).filter(|&u| labels[u] == label).collect();
        members.shuffle(&mut derived_rng(seed, class as u64, "split"));
        let cut = (test_fraction * members.len() as f64).round() as usize;
        test.extend_from_slice(&members[..cut]);
        train.extend_from_slice(&members[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(LabeledSplit {
        labels,
        train,
        test,
        anomaly_fraction,
        test_fraction,
        seed,
    })
}

pub fn train_classifier(embedding: &Embedding, split: &LabeledSplit, config: &MlpConfig) -> Result<Classifier> {
    if embedding.node_count() != split.labels.len() {
        return Err(Error::InvalidConfig("embedding and labels cover different node sets".into()));
    }
    let xs: Vec<Vec<f64>> = split.train.iter().map(|&u| embedding.row_f64(u)).collect();
    let ys: Vec<bool> = split.train.iter().map(|&u| split.labels[u]).collect();
    train_mlp(&xs, &ys, config).map(|(net, _)| net)
}

fn probabilities(classifier: &Classifier, embedding: &Embedding) -> Vec<f64> {
    (0..embedding.node_count())
        .map(|u| classifier.predict_proba(&embedding.row_f64(u)))
        .collect()
}

/// Test nodes the classifier scores at or above 0.5.
pub fn identify_targets(classifier: &Classifier, embedding: &Embedding, split: &LabeledSplit) -> Result<Vec<usize>> {
    let targets: Vec<usize> = split
        .test
        .iter()
        .copied()
        .filter(|&u| classifier.predict_proba(&embedding.row_f64(u)) >= 0.5)
        .collect();
    if targets.is_empty() {
        return Err(Error::EmptyTargets);
    }
    Ok(targets)
}

/// ROC AUC as the Mann-Whitney statistic with average ranks for ties.
/// `None` when one class is absent.
pub fn auc_rank(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut s = 0;
    while s < order.len() {
        let mut e = s;
        while e + 1 < order.len() && scores[order[e + 1]] == scores[order[s]] {
            e += 1;
        }
        let avg = (s + e) as f64 / 2.0 + 1.0;
        rank_sum += avg * order[s..=e].iter().filter(|&&u| labels[u]).count() as f64;
        s = e + 1;
    }
    let (p, q) = (pos as f64, neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// ROC AUC by the trapezoid rule over thresholds at each distinct score.
pub fn auc_trapezoid(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp, mut area) = (0.0, 0.0, 0.0);
    let mut s = 0;
    while s < order.len() {
        let (tp0, fp0) = (tp, fp);
        let mut e = s;
        while e < order.len() && scores[order[e]] == scores[order[s]] {
            if labels[order[e]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            e += 1;
        }
        area += (fp - fp0) / neg * (tp + tp0) / (2.0 * pos);
        s = e;
    }
    Some(area)
}

/// F1 of the predictions `score >= 0.5`; 0 when it is undefined.
pub fn f1_score(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0.0, 0.0, 0.0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= 0.5, l) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fneg += 1.0,
            _ => {}
        }
    }
    if tp == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fneg)
    }
}

/// Relative drop of the targets' soft-label sum, `(SL0 - SLB) / SL0`; 0 when
/// the baseline is not positive.
pub fn delta_b(sl0: f64, sl_b: f64) -> f64 {
    if sl0 > 0.0 {
        (sl0 - sl_b) / sl0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferConfig {
    pub refex: RefexConfig,
    pub mlp: MlpConfig,
    pub anomaly_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            refex: RefexConfig::default(),
            mlp: MlpConfig::default(),
            anomaly_fraction: 0.1,
            test_fraction: 0.3,
            seed: 0,
        }
    }
}

/// Classifier quality on the test nodes and soft labels on the targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMetrics {
    pub auc: f64,
    pub auc_trapezoid: f64,
    pub f1: f64,
    pub soft_label_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub schema_version: u32,
    pub targets: Vec<usize>,
    pub budget: usize,
    pub flips_applied: usize,
    pub clean: ClassifierMetrics,
    pub poisoned: ClassifierMetrics,
    /// `(SL0 - SLB) / SL0` over the targets.
    pub delta_b: f64,
    pub warnings: Vec<String>,
}

/// Labels, split and targets fixed by the run on the clean graph.
#[derive(Debug, Clone)]
pub struct CleanPipeline {
    pub split: LabeledSplit,
    pub embedding: Embedding,
    pub probabilities: Vec<f64>,
    pub targets: Vec<usize>,
}

fn classifier_seed(config: &TransferConfig) -> MlpConfig {
    MlpConfig {
        seed: crate::rng::derive_seed(config.seed, 0, "classifier"),
        ..config.mlp.clone()
    }
}

/// Pre-processing and target identification on the clean graph.
pub fn prepare(clean: &Graph, config: &TransferConfig) -> Result<CleanPipeline> {
    let split = make_labeled_split(clean, config.anomaly_fraction, config.test_fraction, config.seed)?;
    let embedding = refex_embed(clean, &config.refex)?;
    let classifier = train_classifier(&embedding, &split, &classifier_seed(config))?;
    let targets = identify_targets(&classifier, &embedding, &split)?;
    let probabilities = probabilities(&classifier, &embedding);
    Ok(CleanPipeline {
        split,
        embedding,
        probabilities,
        targets,
    })
}

fn metrics(probs: &[f64], split: &LabeledSplit, targets: &[usize]) -> ClassifierMetrics {
    let scores: Vec<f64> = split.test.iter().map(|&u| probs[u]).collect();
    let labels: Vec<bool> = split.test.iter().map(|&u| split.labels[u]).collect();
    ClassifierMetrics {
        auc: auc_rank(&scores, &labels).unwrap_or(0.5),
        auc_trapezoid: auc_trapezoid(&scores, &labels).unwrap_or(0.5),
        f1: f1_score(&scores, &labels),
        soft_label_sum: targets.iter().map(|&u| probs[u]).sum(),
    }
}

/// Retrains on `poisoned` with the clean run's labels and split and compares.
pub fn evaluate_with(pipeline: &CleanPipeline, poisoned: &Graph, config: &TransferConfig) -> Result<TransferReport> {
    if poisoned.node_count() != pipeline.split.labels.len() {
        return Err(Error::InvalidConfig("poisoned graph has a different node count".into()));
    }
    let embedding = refex_embed(poisoned, &config.refex)?;
    let classifier = train_classifier(&embedding, &pipeline.split, &classifier_seed(config))?;
    let probs = probabilities(&classifier, &embedding);
    let clean = metrics(&pipeline.probabilities, &pipeline.split, &pipeline.targets);
    let after = metrics(&probs, &pipeline.split, &pipeline.targets);
    let mut warnings = Vec::new();
    let test_labels: Vec<bool> = pipeline.split.test.iter().map(|&u| pipeline.split.labels[u]).collect();
    if auc_rank(&vec![0.0; test_labels.len()], &test_labels).is_none() {
        warnings.push("test set holds a single class; AUC reported as 0.5".into());
    }
    let delta_b = delta_b(clean.soft_label_sum, after.soft_label_sum);
    Ok(TransferReport {
        schema_version: REPORT_SCHEMA_VERSION,
        targets: pipeline.targets.clone(),
        budget: 0,
        flips_applied: 0,
        clean,
        poisoned: after,
        delta_b,
        warnings,
    })
}

pub fn evaluate_transfer(clean: &Graph, poisoned: &Graph, config: &TransferConfig) -> Result<TransferReport> {
    evaluate_with(&prepare(clean, config)?, poisoned, config)
}

/// The whole pipeline: prepare, attack the identified targets with
/// BinarizedAttack, evaluate. `attack.targets` is replaced.
pub fn run_transfer(
    clean: &Graph,
    config: &TransferConfig,
    attack: &AttackConfig,
) -> Result<(TransferReport, Option<PerturbationPlan>)> {
    let pipeline = prepare(clean, config)?;
    if attack.budget == 0 {
        let mut report = evaluate_with(&pipeline, clean, config)?;
        report.warnings.push("budget 0: no attack run".into());
        return Ok((report, None));
    }
    let attack = AttackConfig {
        targets: pipeline.targets.clone(),
        ..attack.clone()
    };
    let plan = binarized_attack(clean, &attack)?;
    let flips = plan.final_flips();
    let poisoned = apply_flips(clean, flips)?;
    let mut report = evaluate_with(&pipeline, &poisoned, config)?;
    report.budget = attack.budget;
    report.flips_applied = flips.len();
    report.warnings.extend(plan.warnings.iter().cloned());
    Ok((report, Some(plan)))
}
