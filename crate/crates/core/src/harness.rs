//! Experiment orchestration.
//!
//! Three scenarios share one training loop:
//!
//! * **A** – full graph, no privacy, optional train-fraction subsampling.
//! * **B** – full graph as a single example under DP (`L = 1`, `q = 1`).
//! * **C** – training nodes split into `s` disjoint subgraphs, each one
//!   example; DP lots of `L` subgraphs or plain per-subgraph steps.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accountant::{self, AccountantLedger, DEFAULT_DELTA};
use crate::dataset::{load_dataset, save_dataset, Dataset};
use crate::dp_optim::{self, AdamState, DpNoiseSpec, DEFAULT_CLIP_NORM};
use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::model::{self, GcnParams, GradientVector, DEFAULT_DROPOUT, DEFAULT_HIDDEN};
use crate::partition::{mask_subgraph, random_partition, Partition, Subgraph};
use crate::rng::{SeededRng, Stream};

pub const DEFAULT_PATIENCE: usize = 20;
pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    A,
    B,
    C,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    SgdDp,
    AdamDp,
}

impl OptimizerKind {
    pub fn is_dp(self) -> bool {
        matches!(self, OptimizerKind::SgdDp | OptimizerKind::AdamDp)
    }

    pub fn is_adam(self) -> bool {
        matches!(self, OptimizerKind::Adam | OptimizerKind::AdamDp)
    }

    pub fn default_max_epochs(self) -> usize {
        if self.is_adam() {
            500
        } else {
            2000
        }
    }

    fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
            OptimizerKind::SgdDp => "sgd-dp",
            OptimizerKind::AdamDp => "adam-dp",
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            "sgd-dp" => Ok(OptimizerKind::SgdDp),
            "adam-dp" => Ok(OptimizerKind::AdamDp),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(ExperimentKind::A),
            "B" | "b" => Ok(ExperimentKind::B),
            "C" | "c" => Ok(ExperimentKind::C),
            other => Err(Error::Config(format!("unknown experiment kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub kind: ExperimentKind,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub max_epochs: usize,
    pub early_stopping: bool,
    pub patience: usize,
    pub dropout: f64,
    pub hidden: usize,
    pub clip_norm: f64,
    /// Fixed noise multiplier; mutually exclusive with `target_epsilon`.
    pub noise_multiplier: Option<f64>,
    /// Budget to calibrate the noise multiplier for.
    pub target_epsilon: Option<f64>,
    pub delta: f64,
    pub num_subgraphs: usize,
    /// Subgraphs per lot; defaults to all of them.
    pub lot_size: Option<usize>,
    pub train_fraction: f64,
    pub seeds: Vec<u64>,
}

impl ExperimentConfig {
    /// Defaults for the given scenario and optimizer: lr 0.01, 2000 (SGD) or
    /// 500 (Adam) epochs, early stopping only without DP, 10 subgraphs for C.
    pub fn new(dataset: impl Into<PathBuf>, kind: ExperimentKind, optimizer: OptimizerKind) -> Self {
        Self {
            dataset: dataset.into(),
            kind,
            optimizer,
            lr: 0.01,
            max_epochs: optimizer.default_max_epochs(),
            early_stopping: !optimizer.is_dp(),
            patience: DEFAULT_PATIENCE,
            dropout: DEFAULT_DROPOUT,
            hidden: DEFAULT_HIDDEN,
            clip_norm: DEFAULT_CLIP_NORM,
            noise_multiplier: None,
            target_epsilon: None,
            delta: DEFAULT_DELTA,
            num_subgraphs: if kind == ExperimentKind::C { 10 } else { 1 },
            lot_size: None,
            train_fraction: 1.0,
            seeds: DEFAULT_SEEDS.to_vec(),
        }
    }

    pub fn lot_size(&self) -> usize {
        self.lot_size.unwrap_or(self.num_subgraphs)
    }

    /// Noisy steps per epoch and the sampling ratio of each.
    pub fn step_schedule(&self) -> (usize, f64) {
        match self.kind {
            ExperimentKind::A | ExperimentKind::B => (1, 1.0),
            ExperimentKind::C => {
                let lot = self.lot_size();
                ((self.num_subgraphs / lot).max(1), lot as f64 / self.num_subgraphs as f64)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be at least 1".into());
        }
        if self.early_stopping && self.patience == 0 {
            return fail("patience must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} not in [0, 1)", self.dropout));
        }
        if self.hidden == 0 {
            return fail("hidden must be positive".into());
        }
        if !(self.clip_norm > 0.0) {
            return fail("clip_norm must be positive".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail(format!("delta {} not in (0, 1)", self.delta));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return fail(format!("train_fraction {} not in (0, 1]", self.train_fraction));
        }
        if self.seeds.is_empty() {
            return fail("at least one seed required".into());
        }
        if self.num_subgraphs == 0 {
            return fail("num_subgraphs must be at least 1".into());
        }
        if self.lot_size() == 0 || self.lot_size() > self.num_subgraphs {
            return fail(format!(
                "lot_size {} outside 1..={}",
                self.lot_size(),
                self.num_subgraphs
            ));
        }
        match self.kind {
            ExperimentKind::A if self.optimizer.is_dp() => {
                return fail("experiment A is non-private; use sgd or adam".into())
            }
            ExperimentKind::B if !self.optimizer.is_dp() => {
                return fail("experiment B needs a DP optimizer".into())
            }
            ExperimentKind::A | ExperimentKind::B if self.num_subgraphs > 1 || self.lot_size.is_some() => {
                return fail("experiments A and B train on the full graph; num_subgraphs must be 1".into())
            }
            _ => {}
        }
        match (self.optimizer.is_dp(), self.noise_multiplier, self.target_epsilon) {
            (true, Some(_), Some(_)) => fail("give either noise_multiplier or target_epsilon, not both".into()),
            (true, None, None) => fail("DP optimizer needs noise_multiplier or target_epsilon".into()),
            (true, Some(s), None) if !(s > 0.0 && s.is_finite()) => {
                fail(format!("noise_multiplier must be positive, got {s}"))
            }
            (true, None, Some(e)) if !(e > 0.0) => fail(format!("target_epsilon must be positive, got {e}")),
            (false, Some(_), _) | (false, _, Some(_)) => {
                fail("noise settings require a DP optimizer".into())
            }
            _ => Ok(()),
        }
    }

    /// Parses the flat `key=value` config format; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let pairs = key_values(text)?;
        let get = |k: &str| pairs.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
        let dataset = get("dataset").ok_or_else(|| Error::Config("missing key \"dataset\"".into()))?;
        let kind: ExperimentKind = get("kind")
            .ok_or_else(|| Error::Config("missing key \"kind\"".into()))?
            .parse()?;
        let optimizer: OptimizerKind = get("optimizer")
            .ok_or_else(|| Error::Config("missing key \"optimizer\"".into()))?
            .parse()?;
        let mut cfg = Self::new(dataset, kind, optimizer);

        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            v.parse()
                .map_err(|e: T::Err| Error::Config(format!("{key}: {e} ({v:?})")))
        }
        for (key, value) in &pairs {
            let v = value.as_str();
            match key.as_str() {
                "dataset" | "kind" | "optimizer" => {}
                "lr" => cfg.lr = num(key, v)?,
                "max_epochs" => cfg.max_epochs = num(key, v)?,
                "early_stopping" => {
                    cfg.early_stopping = match v {
                        "on" | "true" | "yes" => true,
                        "off" | "false" | "no" => false,
                        _ => return Err(Error::Config(format!("early_stopping: expected on/off, got {v:?}"))),
                    }
                }
                "patience" => cfg.patience = num(key, v)?,
                "dropout" => cfg.dropout = num(key, v)?,
                "hidden" => cfg.hidden = num(key, v)?,
                "clip_norm" => cfg.clip_norm = num(key, v)?,
                "noise_multiplier" => cfg.noise_multiplier = Some(num(key, v)?),
                "target_epsilon" => cfg.target_epsilon = Some(num(key, v)?),
                "delta" => cfg.delta = num(key, v)?,
                "num_subgraphs" => cfg.num_subgraphs = num(key, v)?,
                "lot_size" => cfg.lot_size = Some(num(key, v)?),
                "train_fraction" => cfg.train_fraction = num(key, v)?,
                "seeds" => {
                    cfg.seeds = v
                        .split(',')
                        .map(|s| num::<u64>(key, s.trim()))
                        .collect::<Result<_>>()?
                }
                other => return Err(Error::Config(format!("unknown key {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Serializes to the `key=value` format accepted by [`ExperimentConfig::parse`].
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let kind = match self.kind {
            ExperimentKind::A => "A",
            ExperimentKind::B => "B",
            ExperimentKind::C => "C",
        };
        let mut line = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("write to string");
        line("dataset", self.dataset.display().to_string());
        line("kind", kind.into());
        line("optimizer", self.optimizer.name().into());
        line("lr", format!("{:?}", self.lr));
        line("max_epochs", self.max_epochs.to_string());
        line("early_stopping", if self.early_stopping { "on" } else { "off" }.into());
        line("patience", self.patience.to_string());
        line("dropout", format!("{:?}", self.dropout));
        line("hidden", self.hidden.to_string());
        line("clip_norm", format!("{:?}", self.clip_norm));
        if let Some(s) = self.noise_multiplier {
            line("noise_multiplier", format!("{s:?}"));
        }
        if let Some(e) = self.target_epsilon {
            line("target_epsilon", format!("{e:?}"));
        }
        line("delta", format!("{:?}", self.delta));
        line("num_subgraphs", self.num_subgraphs.to_string());
        if let Some(l) = self.lot_size {
            line("lot_size", l.to_string());
        }
        line("train_fraction", format!("{:?}", self.train_fraction));
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        line("seeds", seeds.join(","));
        out
    }
}

/// Splits `key = value` lines, skipping blanks and `#` comments.
pub fn key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
        let key = key.trim().to_string();
        if out.iter().any(|(k, _)| *k == key) {
            return Err(Error::Config(format!("line {}: duplicate key {key:?}", i + 1)));
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

/// Outcome of the stopping rule after the latest epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EarlyStop {
    pub stop: bool,
    /// 1-based epoch of the first best score; 0 for an empty history.
    pub best_epoch: usize,
}

/// Stops once `patience` epochs have passed without beating the best
/// validation score.
pub fn early_stop_check(history: &[f64], patience: usize) -> EarlyStop {
    let Some(first) = history.first() else {
        return EarlyStop { stop: false, best_epoch: 0 };
    };
    let mut best = (0, *first);
    for (i, &v) in history.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (i, v);
        }
    }
    let best_epoch = best.0 + 1;
    EarlyStop {
        stop: history.len() - best_epoch >= patience,
        best_epoch,
    }
}

/// Fraction of baseline hard cases that also appear in `errors`.
pub fn hard_case_overlap(errors: &[usize], baseline: &[usize]) -> Result<f64> {
    let baseline: BTreeSet<usize> = baseline.iter().copied().collect();
    if baseline.is_empty() {
        return Err(Error::invalid("baseline hard-case set is empty"));
    }
    let errors: BTreeSet<usize> = errors.iter().copied().collect();
    Ok(errors.intersection(&baseline).count() as f64 / baseline.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SeedStatus {
    Completed,
    Diverged { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    #[serde(flatten)]
    pub status: SeedStatus,
    pub f1_micro: Option<f64>,
    pub f1_macro: Option<f64>,
    pub epochs: usize,
    /// Epoch whose parameters were evaluated.
    pub evaluated_epoch: usize,
    pub final_train_loss: Option<f64>,
    pub epsilon: Option<f64>,
    pub best_order: Option<u32>,
    pub noisy_steps: u64,
    pub seconds: f64,
    /// Misclassified test nodes.
    pub errors: Vec<usize>,
    pub confusion: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub completed: usize,
    pub failed: usize,
    pub f1_micro_mean: Option<f64>,
    pub f1_micro_std: Option<f64>,
    pub f1_macro_mean: Option<f64>,
    pub f1_macro_std: Option<f64>,
}

impl Aggregate {
    /// Mean and population standard deviation over completed seeds.
    pub fn from_seeds(seeds: &[SeedOutcome]) -> Self {
        let stats = |values: Vec<f64>| -> (Option<f64>, Option<f64>) {
            if values.is_empty() {
                return (None, None);
            }
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            (Some(mean), Some(var.sqrt()))
        };
        let (micro_mean, micro_std) = stats(seeds.iter().filter_map(|s| s.f1_micro).collect());
        let (macro_mean, macro_std) = stats(seeds.iter().filter_map(|s| s.f1_macro).collect());
        let completed = seeds.iter().filter(|s| s.status == SeedStatus::Completed).count();
        Self {
            completed,
            failed: seeds.len() - completed,
            f1_micro_mean: micro_mean,
            f1_micro_std: micro_std,
            f1_macro_mean: macro_mean,
            f1_macro_std: macro_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsRecord {
    pub config: ExperimentConfig,
    pub dataset_name: String,
    pub noise_multiplier: Option<f64>,
    pub sampling_ratio: Option<f64>,
    pub steps_per_epoch: usize,
    pub seeds: Vec<SeedOutcome>,
    pub aggregate: Aggregate,
    pub notes: Vec<String>,
}

/// Loads the configured dataset and runs every seed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultsRecord> {
    config.validate()?;
    let dataset = load_dataset(&config.dataset)?;
    run_on_dataset(config, &dataset)
}

/// Noise multiplier a DP config trains with: fixed, or calibrated to the
/// target budget over the full step count.
pub fn resolve_noise(config: &ExperimentConfig) -> Result<Option<f64>> {
    if !config.optimizer.is_dp() {
        return Ok(None);
    }
    if let Some(sigma) = config.noise_multiplier {
        return Ok(Some(sigma));
    }
    let target = config.target_epsilon.expect("validated");
    let (per_epoch, q) = config.step_schedule();
    let steps = (config.max_epochs * per_epoch) as u64;
    accountant::calibrate_noise(target, config.delta, q, steps).map(Some)
}

/// Runs every seed of `config` on an in-memory dataset. Seeds run in
/// parallel; a diverged seed is recorded and does not affect the others.
pub fn run_on_dataset(config: &ExperimentConfig, dataset: &Dataset) -> Result<ResultsRecord> {
    config.validate()?;
    if dataset.train.is_empty() || dataset.test.is_empty() {
        return Err(Error::EmptyMask);
    }
    if config.early_stopping && dataset.val.is_empty() {
        return Err(Error::Config("early stopping needs a validation mask".into()));
    }
    let sigma = resolve_noise(config)?;
    let adjacency = dataset.graph.normalize();
    let seeds = config
        .seeds
        .par_iter()
        .map(|&seed| run_seed(config, dataset, &adjacency, sigma, seed))
        .collect::<Result<Vec<_>>>()?;

    let (steps_per_epoch, q) = config.step_schedule();
    let mut notes = Vec::new();
    if config.early_stopping {
        notes.push(format!(
            "test metrics use the parameters of the best validation epoch (patience {})",
            config.patience
        ));
    } else {
        notes.push("test metrics use the parameters of the final epoch".to_string());
    }
    if sigma.is_some() {
        notes.push("epsilon covers every noisy step actually executed".to_string());
    }
    Ok(ResultsRecord {
        config: config.clone(),
        dataset_name: dataset.name.clone(),
        noise_multiplier: sigma,
        sampling_ratio: sigma.map(|_| q),
        steps_per_epoch,
        aggregate: Aggregate::from_seeds(&seeds),
        seeds,
        notes,
    })
}

struct Example {
    adjacency: NormalizedAdjacency,
    subgraph: Subgraph,
    mask: Vec<usize>,
}

enum Optimizer {
    Sgd,
    Adam(AdamState),
}

impl Optimizer {
    fn step(&mut self, params: &mut GcnParams, grad: &GradientVector, lr: f64) -> Result<()> {
        match self {
            Optimizer::Sgd => dp_optim::sgd_step(params.as_mut_slice(), grad, lr),
            Optimizer::Adam(state) => dp_optim::adam_step(state, params.as_mut_slice(), grad, lr),
        }
    }
}

/// Training nodes after subsampling to `fraction`; never touches val/test.
pub fn subsample_training(train: &[usize], fraction: f64, rng: &mut SeededRng) -> Vec<usize> {
    if fraction >= 1.0 {
        return train.to_vec();
    }
    let keep = ((fraction * train.len() as f64).round() as usize).clamp(1, train.len());
    let mut picked: Vec<usize> = rng
        .sample_indices(train.len(), keep)
        .into_iter()
        .map(|i| train[i])
        .collect();
    picked.sort_unstable();
    picked
}

/// Builds one training example per subgraph and checks that no edge crosses
/// a subgraph boundary.
fn build_examples(dataset: &Dataset, partition: &Partition) -> Result<Vec<Example>> {
    let mut owner = vec![usize::MAX; dataset.num_nodes()];
    for k in 0..partition.num_subgraphs() {
        for &v in partition.members(k) {
            owner[v] = k;
        }
    }
    (0..partition.num_subgraphs())
        .map(|k| {
            let subgraph = mask_subgraph(&dataset.graph, &dataset.features, &dataset.labels, partition, k)?;
            for (i, j) in subgraph.graph.edge_list() {
                let (gi, gj) = (subgraph.to_global(i), subgraph.to_global(j));
                if owner[gi] != k || owner[gj] != k {
                    return Err(Error::invalid(format!(
                        "edge ({gi}, {gj}) crosses subgraph {k}"
                    )));
                }
            }
            Ok(Example {
                adjacency: subgraph.graph.normalize(),
                mask: (0..subgraph.global_ids.len()).collect(),
                subgraph,
            })
        })
        .collect()
}

fn diverged(seed: u64, epochs: usize, ledger: &AccountantLedger, delta: f64, start: Instant, reason: String) -> Result<SeedOutcome> {
    let spent = (!ledger.is_empty())
        .then(|| accountant::eps_from_delta(ledger, delta))
        .transpose()?;
    Ok(SeedOutcome {
        seed,
        status: SeedStatus::Diverged { reason },
        f1_micro: None,
        f1_macro: None,
        epochs,
        evaluated_epoch: 0,
        final_train_loss: None,
        epsilon: spent.map(|s| s.epsilon),
        best_order: spent.and_then(|s| s.order),
        noisy_steps: ledger.total_steps(),
        seconds: start.elapsed().as_secs_f64(),
        errors: Vec::new(),
        confusion: Vec::new(),
    })
}

/// Trains and evaluates a single seed.
pub fn run_seed(
    config: &ExperimentConfig,
    dataset: &Dataset,
    adjacency: &NormalizedAdjacency,
    sigma: Option<f64>,
    seed: u64,
) -> Result<SeedOutcome> {
    let start = Instant::now();
    let mut init_rng = SeededRng::stream(seed, Stream::Init);
    let mut dropout_rng = SeededRng::stream(seed, Stream::Dropout);
    let mut noise_rng = SeededRng::stream(seed, Stream::Noise);
    let mut sampling_rng = SeededRng::stream(seed, Stream::Sampling);
    let mut partition_rng = SeededRng::stream(seed, Stream::Partition);

    let train = subsample_training(&dataset.train, config.train_fraction, &mut sampling_rng);
    let mut params = model::init_params(dataset.feature_dim(), config.hidden, dataset.num_classes, &mut init_rng)?;
    let mut optimizer = if config.optimizer.is_adam() {
        Optimizer::Adam(AdamState::new(params.len()))
    } else {
        Optimizer::Sgd
    };
    let noise = sigma
        .map(|s| DpNoiseSpec::new(config.clip_norm, s))
        .transpose()?;
    let examples = match config.kind {
        ExperimentKind::C => {
            let partition = random_partition(&train, config.num_subgraphs, &mut partition_rng)?;
            build_examples(dataset, &partition)?
        }
        _ => Vec::new(),
    };
    let (steps_per_epoch, q) = config.step_schedule();

    let mut ledger = AccountantLedger::new();
    let mut history = Vec::new();
    let mut best = (0usize, params.clone());
    let mut last_loss = f64::NAN;
    let mut epochs = 0;

    for epoch in 1..=config.max_epochs {
        epochs = epoch;
        let mut losses = Vec::new();
        match (config.kind, noise) {
            (ExperimentKind::A | ExperimentKind::B, _) => {
                let (loss, grad) = model::loss_and_gradient(
                    &params, adjacency, &dataset.features, &dataset.labels, &train, config.dropout, &mut dropout_rng,
                )?;
                losses.push(loss);
                if !loss.is_finite() || !grad.is_finite() {
                    return diverged(seed, epoch, &ledger, config.delta, start, format!("non-finite loss or gradient at epoch {epoch}"));
                }
                let update = match &noise {
                    Some(spec) => {
                        ledger.record_step(1.0, spec.noise_multiplier)?;
                        dp_optim::noisy_lot_gradient(&[grad], spec, &mut noise_rng)?
                    }
                    None => grad,
                };
                optimizer.step(&mut params, &update, config.lr)?;
            }
            (ExperimentKind::C, Some(spec)) => {
                for _ in 0..steps_per_epoch {
                    let lot = dp_optim::sample_lot(examples.len(), config.lot_size(), &mut sampling_rng)?;
                    let mut grads = Vec::with_capacity(lot.lot_size());
                    for &k in &lot.examples {
                        let ex = &examples[k];
                        let (loss, grad) = model::loss_and_gradient(
                            &params, &ex.adjacency, &ex.subgraph.features, &ex.subgraph.labels, &ex.mask, config.dropout, &mut dropout_rng,
                        )?;
                        if !loss.is_finite() || !grad.is_finite() {
                            return diverged(seed, epoch, &ledger, config.delta, start, format!("non-finite loss or gradient at epoch {epoch}"));
                        }
                        losses.push(loss);
                        grads.push(grad);
                    }
                    ledger.record_step(q, spec.noise_multiplier)?;
                    let update = dp_optim::noisy_lot_gradient(&grads, &spec, &mut noise_rng)?;
                    optimizer.step(&mut params, &update, config.lr)?;
                }
            }
            (ExperimentKind::C, None) => {
                let mut order: Vec<usize> = (0..examples.len()).collect();
                sampling_rng.shuffle(&mut order);
                for k in order {
                    let ex = &examples[k];
                    let (loss, grad) = model::loss_and_gradient(
                        &params, &ex.adjacency, &ex.subgraph.features, &ex.subgraph.labels, &ex.mask, config.dropout, &mut dropout_rng,
                    )?;
                    if !loss.is_finite() || !grad.is_finite() {
                        return diverged(seed, epoch, &ledger, config.delta, start, format!("non-finite loss or gradient at epoch {epoch}"));
                    }
                    losses.push(loss);
                    optimizer.step(&mut params, &grad, config.lr)?;
                }
            }
        }
        last_loss = losses.iter().sum::<f64>() / losses.len().max(1) as f64;
        if !params.is_finite() {
            return diverged(seed, epoch, &ledger, config.delta, start, format!("non-finite parameters at epoch {epoch}"));
        }

        if config.early_stopping {
            let val = model::evaluate(&params, adjacency, &dataset.features, &dataset.labels, &dataset.val)?;
            history.push(val.micro_f1);
            let check = early_stop_check(&history, config.patience);
            if check.best_epoch == epoch {
                best = (epoch, params.clone());
            }
            if check.stop {
                break;
            }
        }
    }

    let (evaluated_epoch, final_params) = if config.early_stopping {
        best
    } else {
        (epochs, params)
    };
    let metrics = model::evaluate(&final_params, adjacency, &dataset.features, &dataset.labels, &dataset.test)?;
    let spent = noise
        .map(|_| accountant::eps_from_delta(&ledger, config.delta))
        .transpose()?;
    Ok(SeedOutcome {
        seed,
        status: SeedStatus::Completed,
        f1_micro: Some(metrics.micro_f1),
        f1_macro: Some(metrics.macro_f1),
        epochs,
        evaluated_epoch,
        final_train_loss: Some(last_loss),
        epsilon: spent.map(|s| s.epsilon),
        best_order: spent.and_then(|s| s.order),
        noisy_steps: ledger.total_steps(),
        seconds: start.elapsed().as_secs_f64(),
        errors: metrics.errors,
        confusion: metrics.confusion,
    })
}

#[derive(Debug, Serialize)]
struct CsvRow {
    seed: u64,
    f1_micro: Option<f64>,
    f1_macro: Option<f64>,
    epsilon: Option<f64>,
    epochs: usize,
    seconds: f64,
}

/// Writes `results.json` (full record) and `results.csv` (one row per seed)
/// into `dir`.
pub fn emit_results(record: &ResultsRecord, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("results.json"), serde_json::to_string_pretty(record)? + "\n")?;
    let mut writer = csv::Writer::from_path(dir.join("results.csv"))?;
    for s in &record.seeds {
        writer.serialize(CsvRow {
            seed: s.seed,
            f1_micro: s.f1_micro,
            f1_macro: s.f1_macro,
            epsilon: s.epsilon,
            epochs: s.epochs,
            seconds: s.seconds,
        })?;
    }
    writer.flush()?;
    Ok(())
}

/// Varies one setting of a base config; used to tabulate learning curves and
/// split-count sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepAxis {
    LearningRate,
    TrainFraction,
    NumSubgraphs,
    TargetEpsilon,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub f1_micro_mean: Option<f64>,
    pub f1_micro_std: Option<f64>,
    pub epsilon_mean: Option<f64>,
    pub failed: usize,
}

pub fn run_sweep(base: &ExperimentConfig, dataset: &Dataset, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    values
        .iter()
        .map(|&value| {
            let mut cfg = base.clone();
            match axis {
                SweepAxis::LearningRate => cfg.lr = value,
                SweepAxis::TrainFraction => cfg.train_fraction = value,
                SweepAxis::NumSubgraphs => {
                    cfg.num_subgraphs = value as usize;
                    cfg.lot_size = None;
                }
                SweepAxis::TargetEpsilon => {
                    cfg.noise_multiplier = None;
                    cfg.target_epsilon = Some(value);
                }
            }
            let record = run_on_dataset(&cfg, dataset)?;
            let eps: Vec<f64> = record.seeds.iter().filter_map(|s| s.epsilon).collect();
            Ok(SweepRow {
                value,
                f1_micro_mean: record.aggregate.f1_micro_mean,
                f1_micro_std: record.aggregate.f1_micro_std,
                epsilon_mean: (!eps.is_empty()).then(|| eps.iter().sum::<f64>() / eps.len() as f64),
                failed: record.aggregate.failed,
            })
        })
        .collect()
}

pub fn write_sweep_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Partitions the training nodes of a dataset and writes `partition.tsv`
/// (`node<TAB>subgraph`) plus one dataset directory per subgraph, whose
/// `nodes.tsv` maps local to global indices.
pub fn write_split(dataset: &Dataset, num_subgraphs: usize, seed: u64, out: impl AsRef<Path>) -> Result<Partition> {
    let out = out.as_ref();
    let mut rng = SeededRng::stream(seed, Stream::Partition);
    let partition = random_partition(&dataset.train, num_subgraphs, &mut rng)?;
    fs::create_dir_all(out)?;
    let mut text = String::new();
    for (node, k) in partition.assignment() {
        writeln!(text, "{node}\t{k}").expect("write to string");
    }
    fs::write(out.join("partition.tsv"), text)?;
    for k in 0..partition.num_subgraphs() {
        let sub = mask_subgraph(&dataset.graph, &dataset.features, &dataset.labels, &partition, k)?;
        let dir = out.join(format!("subgraph_{k:03}"));
        let n = sub.global_ids.len();
        let part = Dataset {
            name: format!("{}-subgraph-{k}", dataset.name),
            graph: sub.graph,
            features: sub.features,
            feature_kind: dataset.feature_kind,
            labels: sub.labels,
            num_classes: dataset.num_classes,
            train: (0..n).collect(),
            val: Vec::new(),
            test: Vec::new(),
        };
        save_dataset(&part, &dir)?;
        let mut ids = String::new();
        for (local, global) in sub.global_ids.iter().enumerate() {
            writeln!(ids, "{local}\t{global}").expect("write to string");
        }
        fs::write(dir.join("nodes.tsv"), ids)?;
    }
    Ok(partition)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stopping_examples() {
        let rising: Vec<f64> = (0..100).map(f64::from).collect();
        assert!(!early_stop_check(&rising, 20).stop);

        let flat = vec![0.5; 21];
        assert_eq!(early_stop_check(&flat, 20), EarlyStop { stop: true, best_epoch: 1 });
        assert!(!early_stop_check(&flat[..20], 20).stop);

        let mut peaked: Vec<f64> = (1..=5).map(f64::from).collect();
        peaked.extend((0..20).map(|i| 4.0 - f64::from(i) * 0.1));
        assert_eq!(peaked.len(), 25);
        assert_eq!(early_stop_check(&peaked, 20), EarlyStop { stop: true, best_epoch: 5 });
        assert!(!early_stop_check(&peaked[..24], 20).stop);
    }

    #[test]
    fn overlap_examples() {
        let base: Vec<usize> = (1..=10).collect();
        assert_eq!(hard_case_overlap(&base, &base).unwrap(), 1.0);
        assert_eq!(hard_case_overlap(&[20, 30], &base).unwrap(), 0.0);
        let errs: Vec<usize> = (1..=5).chain(90..=99).collect();
        assert_eq!(hard_case_overlap(&errs, &base).unwrap(), 0.5);
        assert!(hard_case_overlap(&errs, &[]).is_err());
    }

    #[test]
    fn config_round_trip_and_errors() {
        let mut cfg = ExperimentConfig::new("data/x", ExperimentKind::C, OptimizerKind::AdamDp);
        cfg.target_epsilon = Some(1.0);
        cfg.lot_size = Some(5);
        cfg.lr = 0.5;
        assert_eq!(ExperimentConfig::parse(&cfg.to_config_string()).unwrap(), cfg);

        let base = "dataset=d\nkind=B\noptimizer=sgd-dp\nnoise_multiplier=4\n";
        let parsed = ExperimentConfig::parse(base).unwrap();
        assert_eq!(parsed.max_epochs, 2000);
        assert!(!parsed.early_stopping);

        for bad in [
            "dataset=d\nkind=B\noptimizer=sgd\n",
            "dataset=d\nkind=A\noptimizer=sgd-dp\nnoise_multiplier=4\n",
            "dataset=d\nkind=B\noptimizer=sgd-dp\nnoise_multiplier=4\nnum_subgraphs=3\n",
            "dataset=d\nkind=B\noptimizer=sgd-dp\n",
            "dataset=d\nkind=B\noptimizer=sgd-dp\nnoise_multiplier=4\ntarget_epsilon=2\n",
            "dataset=d\nkind=A\noptimizer=sgd\nwarmup=3\n",
            "dataset=d\nkind=A\noptimizer=sgd\nlr=0.1\nlr=0.2\n",
            "dataset=d\nkind=C\noptimizer=sgd\nnum_subgraphs=4\nlot_size=5\n",
            "dataset=d\nkind=A\noptimizer=sgd\ntrain_fraction=0\n",
        ] {
            assert!(matches!(ExperimentConfig::parse(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn schedule() {
        let mut cfg = ExperimentConfig::new("d", ExperimentKind::C, OptimizerKind::SgdDp);
        assert_eq!(cfg.step_schedule(), (1, 1.0));
        cfg.lot_size = Some(2);
        assert_eq!(cfg.step_schedule(), (5, 0.2));
    }

    #[test]
    fn subsampling_keeps_fraction() {
        let train: Vec<usize> = (100..200).collect();
        let mut rng = SeededRng::new(4);
        let kept = subsample_training(&train, 0.25, &mut rng);
        assert_eq!(kept.len(), 25);
        assert!(kept.iter().all(|v| (100..200).contains(v)));
        assert_eq!(subsample_training(&train, 1.0, &mut rng), train);
    }
}
