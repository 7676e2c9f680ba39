//! Full-batch training loop, model selection and multi-seed aggregation.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, mean_std};
use crate::autodiff::{shannon, NodeId, ValueGraph};
use crate::error::{Error as CoreError, ObjectiveError};
use crate::graph::{GraphBundle, GraphOperators};
use crate::models::{forward, init_model, predict_logits, ArchConfig, ModelParams};
use crate::nn::{derive_seed, Mode};
use crate::objectives::{
    report_from_graph, supervised_loss, ts_loss, LossReport, ObjectiveMasks, TsConfig, TsNodes,
};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::tensor::{row_softmax, DenseMatrix};

/// Stream tags fed to [`derive_seed`] alongside the run seed.
const INIT_STREAM: u64 = 0x1;
const DROPOUT_STREAM: u64 = 0x2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    RocAuc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub metric: Metric,
    pub seeds: Vec<u64>,
    pub record_trajectories: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.epochs == 0 {
            return Err(CoreError::Config("epochs must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(CoreError::Config("seed list is empty".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(CoreError::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(CoreError::Config(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropySnapshot {
    pub epoch: usize,
    pub h_labeled: f64,
    pub h_unlabeled: f64,
    /// `h_labeled - h_unlabeled`.
    pub gap: f64,
}

/// Mean Shannon entropy over `V_L` and over `V \ V_L`.
pub fn entropy_snapshot(
    probs: &DenseMatrix,
    bundle: &GraphBundle,
    epoch: usize,
) -> Result<EntropySnapshot, ObjectiveError> {
    let labeled = bundle.labeled();
    if labeled.is_empty() {
        return Err(ObjectiveError::EmptyLabeled);
    }
    let mean_h = |nodes: &[usize]| {
        if nodes.is_empty() {
            return 0.0;
        }
        nodes.iter().map(|&v| shannon(probs.row(v))).sum::<f64>() / nodes.len() as f64
    };
    let h_labeled = mean_h(labeled);
    let h_unlabeled = mean_h(&bundle.unlabeled());
    Ok(EntropySnapshot {
        epoch,
        h_labeled,
        h_unlabeled,
        gap: h_labeled - h_unlabeled,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossReport,
    pub val_metric: f64,
    pub test_metric: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub entropy: Option<EntropySnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub variant: String,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub test_at_best: f64,
    /// FNV-1a of the final parameters, as 16 hex digits.
    pub params_digest: String,
}

impl RunRecord {
    pub fn loss_trajectory(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss.total).collect()
    }

    pub fn final_snapshot(&self) -> Option<EntropySnapshot> {
        self.epochs.last().and_then(|e| e.entropy)
    }

    /// Everything except the per-epoch rows.
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            seed: self.seed,
            variant: self.variant.clone(),
            epochs: self.epochs.len(),
            best_epoch: self.best_epoch,
            best_val: self.best_val,
            test_at_best: self.test_at_best,
            params_digest: self.params_digest.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub variant: String,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val: f64,
    pub test_at_best: f64,
    pub params_digest: String,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("run diverged at epoch {epoch}")]
    Diverged {
        epoch: usize,
        last_finite: Option<LossReport>,
        partial: Box<RunRecord>,
    },
    #[error(transparent)]
    Setup(#[from] CoreError),
}

impl From<ObjectiveError> for TrainError {
    fn from(e: ObjectiveError) -> Self {
        TrainError::Setup(e.into())
    }
}

impl From<crate::error::TensorError> for TrainError {
    fn from(e: crate::error::TensorError) -> Self {
        TrainError::Setup(e.into())
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Digest of every parameter scalar in little-endian byte order.
pub fn params_digest(params: &ModelParams) -> String {
    let bytes: Vec<u8> = params.flatten().iter().flat_map(|x| x.to_le_bytes()).collect();
    format!("{:016x}", fnv1a(&bytes))
}

fn evaluate(
    probs: &DenseMatrix,
    bundle: &GraphBundle,
    nodes: &[usize],
    metric: Metric,
) -> Result<f64, CoreError> {
    Ok(match metric {
        Metric::Accuracy => analysis::accuracy(&probs.argmax_rows(), bundle.labels(), nodes)?,
        Metric::RocAuc => {
            if probs.cols() != 2 {
                return Err(CoreError::Config(format!(
                    "roc_auc needs a binary task, bundle has {} classes",
                    probs.cols()
                )));
            }
            let scores: Vec<f64> = (0..probs.rows()).map(|r| probs.get(r, 1)).collect();
            analysis::roc_auc(&scores, bundle.labels(), nodes)?
        }
    })
}

fn check_inputs(bundle: &GraphBundle, arch: &ArchConfig, train: &TrainConfig) -> Result<(), CoreError> {
    arch.validate()?;
    train.validate()?;
    if arch.num_classes != bundle.num_classes() {
        return Err(CoreError::Config(format!(
            "model has {} classes, bundle has {}",
            arch.num_classes,
            bundle.num_classes()
        )));
    }
    let split = bundle.split();
    for (name, part) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        if part.is_empty() {
            return Err(CoreError::Config(format!("{name} split is empty")));
        }
    }
    Ok(())
}

/// Shared loop. `objective` records the loss onto the graph and returns the
/// loss node with its report.
fn run_loop<F>(
    bundle: &GraphBundle,
    arch: &ArchConfig,
    train: &TrainConfig,
    seed: u64,
    variant: &str,
    mut objective: F,
) -> Result<RunRecord, TrainError>
where
    F: FnMut(&mut ValueGraph, NodeId) -> Result<(NodeId, LossReport), TrainError>,
{
    check_inputs(bundle, arch, train)?;
    let ops = GraphOperators::new(bundle);
    let x = bundle.features();
    let mut params = init_model(arch, x.cols(), derive_seed(&[seed, INIT_STREAM]))?;
    let mut adam = AdamState::for_params(&params.tensors);
    let adam_cfg = AdamConfig::new(train.lr, train.weight_decay);
    let split = bundle.split();

    let mut record = RunRecord {
        seed,
        variant: variant.to_string(),
        epochs: Vec::with_capacity(train.epochs),
        best_epoch: 0,
        best_val: f64::NEG_INFINITY,
        test_at_best: f64::NAN,
        params_digest: String::new(),
    };
    let mut last_finite = None;
    let diverged = |epoch: usize, last: Option<LossReport>, mut rec: RunRecord, params: &ModelParams| {
        rec.params_digest = params_digest(params);
        TrainError::Diverged {
            epoch,
            last_finite: last,
            partial: Box::new(rec),
        }
    };

    for epoch in 0..train.epochs {
        let mut g = ValueGraph::new();
        let dropout_seed = derive_seed(&[seed, DROPOUT_STREAM, epoch as u64]);
        let out = forward(&mut g, arch, &params, &ops, x, Mode::Train, dropout_seed)?;
        let probs = match g.softmax(out.logits) {
            Ok(p) => p,
            Err(_) => return Err(diverged(epoch, last_finite, record, &params)),
        };
        let (loss, report) = objective(&mut g, probs)?;
        if !report.total.is_finite() {
            return Err(diverged(epoch, last_finite, record, &params));
        }
        let grads = g.backward(loss)?;
        let grads: Vec<DenseMatrix> = out.params.iter().map(|&id| grads.get_or_zeros(id, &g)).collect();
        if grads.iter().any(|gr| !gr.is_finite()) {
            return Err(diverged(epoch, Some(report), record, &params));
        }
        drop(g);
        adam_step(&mut params.tensors, &grads, &mut adam, &adam_cfg)?;
        for (slot, stats) in params.norm_stats.iter_mut().zip(out.norm_stats) {
            if stats.is_some() {
                *slot = stats;
            }
        }

        let logits = predict_logits(arch, &params, &ops, x)?;
        let eval_probs = match row_softmax(&logits) {
            Ok(p) => p,
            Err(_) => return Err(diverged(epoch, Some(report), record, &params)),
        };
        let val_metric = evaluate(&eval_probs, bundle, &split.val, train.metric)?;
        let test_metric = evaluate(&eval_probs, bundle, &split.test, train.metric)?;
        let entropy = if train.record_trajectories {
            Some(entropy_snapshot(&eval_probs, bundle, epoch)?)
        } else {
            None
        };
        if val_metric > record.best_val {
            record.best_val = val_metric;
            record.best_epoch = epoch;
            record.test_at_best = test_metric;
        }
        record.epochs.push(EpochRecord {
            epoch,
            loss: report,
            val_metric,
            test_metric,
            entropy,
        });
        last_finite = Some(report);
    }
    record.params_digest = params_digest(&params);
    Ok(record)
}

/// Trains one seed under the sharpening objective.
pub fn train_run(
    bundle: &GraphBundle,
    arch: &ArchConfig,
    ts: &TsConfig,
    train: &TrainConfig,
    seed: u64,
) -> Result<RunRecord, TrainError> {
    let masks = ObjectiveMasks::new(bundle, ts.unlabeled_set)?;
    ts.entropy_kind()?;
    run_loop(bundle, arch, train, seed, ts.variant(), |g, probs| {
        let nodes: TsNodes = ts_loss(g, probs, &masks, ts)?;
        Ok((nodes.total, report_from_graph(g, &nodes, ts)))
    })
}

/// Trains one seed on cross-entropy alone, without touching the sharpening
/// code path.
pub fn train_run_supervised(
    bundle: &GraphBundle,
    arch: &ArchConfig,
    train: &TrainConfig,
    seed: u64,
) -> Result<RunRecord, TrainError> {
    let masks = ObjectiveMasks::new(bundle, crate::objectives::UnlabeledSet::AllNonTrain)?;
    let cfg = TsConfig::supervised();
    run_loop(bundle, arch, train, seed, "supervised", |g, probs| {
        let loss = supervised_loss(g, probs, &masks)?;
        let value = g.value(loss).item().expect("scalar loss");
        Ok((
            loss,
            LossReport {
                total: value,
                supervised: value,
                unlabeled_entropy: 0.0,
                labeled_entropy: 0.0,
                lambda_unlabeled: cfg.lambda_unlabeled,
                lambda_labeled: cfg.lambda_labeled,
                q: cfg.q,
            },
        ))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedSeed {
    pub seed: u64,
    pub reason: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub epoch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSeedSummary {
    pub mean: f64,
    pub std: f64,
    /// Set when fewer than two seeds completed, in which case `std` is 0.
    pub std_undefined: bool,
    /// Set when at least one seed failed.
    pub partial: bool,
    pub failed: Vec<FailedSeed>,
    /// Completed runs, ordered by seed.
    pub runs: Vec<RunRecord>,
    /// Partial records of diverged runs, ordered by seed.
    #[serde(skip)]
    pub diverged: Vec<RunRecord>,
}

/// Reduces finished runs, sorted by seed so the result does not depend on
/// completion order.
pub fn aggregate_runs(
    mut results: Vec<(u64, Result<RunRecord, TrainError>)>,
) -> Result<MultiSeedSummary, CoreError> {
    results.sort_by_key(|r| r.0);
    let mut runs = Vec::new();
    let mut failed = Vec::new();
    let mut diverged = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(rec) => runs.push(rec),
            Err(TrainError::Diverged { epoch, partial, .. }) => {
                failed.push(FailedSeed {
                    seed,
                    reason: "diverged".into(),
                    epoch: Some(epoch),
                });
                diverged.push(*partial);
            }
            Err(TrainError::Setup(e)) => return Err(e),
        }
    }
    let metrics: Vec<f64> = runs.iter().map(|r| r.test_at_best).collect();
    let (mean, std) = if metrics.is_empty() {
        (f64::NAN, 0.0)
    } else {
        mean_std(&metrics)?
    };
    Ok(MultiSeedSummary {
        mean,
        std,
        std_undefined: runs.len() < 2,
        partial: !failed.is_empty(),
        failed,
        runs,
        diverged,
    })
}

/// Runs every seed of `train.seeds` on up to `jobs` threads.
pub fn multi_seed_eval_parallel(
    bundle: &GraphBundle,
    arch: &ArchConfig,
    ts: &TsConfig,
    train: &TrainConfig,
    jobs: usize,
) -> Result<MultiSeedSummary, CoreError> {
    train.validate()?;
    let seeds = &train.seeds;
    let results = run_indexed(seeds.len(), jobs, |i| {
        (seeds[i], train_run(bundle, arch, ts, train, seeds[i]))
    });
    aggregate_runs(results)
}

/// Sequential [`multi_seed_eval_parallel`].
pub fn multi_seed_eval(
    bundle: &GraphBundle,
    arch: &ArchConfig,
    ts: &TsConfig,
    train: &TrainConfig,
) -> Result<MultiSeedSummary, CoreError> {
    multi_seed_eval_parallel(bundle, arch, ts, train, 1)
}

/// Evaluates `f(0..n)` on up to `jobs` scoped threads; output order is by index.
pub fn run_indexed<T, F>(n: usize, jobs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let jobs = jobs.clamp(1, n.max(1));
    if jobs == 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = f(i);
                slots.lock().expect("worker panicked")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|o| o.expect("every index evaluated"))
        .collect()
}
