use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use tsgraph::models::{ArchConfig, Backbone, NormKind};
use tsgraph::objectives::{TsConfig, UnlabeledSet};
use tsgraph::presets;
use tsgraph::training::{fnv1a, Metric, TrainConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Mlp,
    Gcn,
    Sage,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormArg {
    None,
    Layer,
    Batch,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SetArg {
    All,
    TestOnly,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Accuracy,
    Auc,
}

/// Flags shared by `train`, `sweep` and `ablate`.
#[derive(Debug, Clone, Args)]
pub struct SharedFlags {
    /// Bundle directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "mlp")]
    pub model: ModelArg,
    #[arg(long, default_value_t = presets::MLP_LAYERS)]
    pub layers: usize,
    #[arg(long, default_value_t = presets::MLP_HIDDEN)]
    pub hidden: usize,
    #[arg(long, default_value_t = presets::MLP_DROPOUT)]
    pub dropout: f64,
    #[arg(long, value_enum, default_value = "none")]
    pub norm: NormArg,
    #[arg(long)]
    pub residual: bool,
    /// Unlabeled-side coefficient λ_U.
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    /// Labeled-side coefficient λ_L (default −λ).
    #[arg(long, allow_hyphen_values = true)]
    pub lambda_labeled: Option<f64>,
    #[arg(long, default_value_t = 2)]
    pub q: u8,
    #[arg(long, value_enum, default_value = "all")]
    pub unlabeled_set: SetArg,
    #[arg(long, default_value_t = presets::MLP_EPOCHS)]
    pub epochs: usize,
    #[arg(long, default_value_t = presets::MLP_LR)]
    pub lr: f64,
    #[arg(long, default_value_t = presets::MLP_WEIGHT_DECAY)]
    pub wd: f64,
    #[arg(long, value_enum, default_value = "accuracy")]
    pub metric: MetricArg,
    #[arg(long, default_value_t = presets::SEEDS_PER_CELL)]
    pub seeds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed_base: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Everything needed to relaunch a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub data: PathBuf,
    pub arch: ArchConfig,
    pub ts: TsConfig,
    pub train: TrainConfig,
    pub out: PathBuf,
    #[serde(default = "one")]
    pub jobs: usize,
    /// Value of `TSG_DETERMINISTIC` at launch.
    #[serde(default = "yes")]
    pub deterministic: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

pub fn deterministic_env() -> bool {
    !matches!(std::env::var("TSG_DETERMINISTIC").as_deref(), Ok("0"))
}

impl SharedFlags {
    pub fn ts(&self, default_lambda: f64) -> Result<TsConfig, CliError> {
        let lambda = self.lambda.unwrap_or(default_lambda);
        let mut ts = TsConfig::symmetric(lambda).with_q(self.q);
        if let Some(l) = self.lambda_labeled {
            ts = ts.with_labeled(l);
        }
        ts = ts.with_unlabeled_set(match self.unlabeled_set {
            SetArg::All => UnlabeledSet::AllNonTrain,
            SetArg::TestOnly => UnlabeledSet::TestAndExtra,
        });
        ts.entropy_kind().map_err(|e| CliError::Config(e.to_string()))?;
        if !lambda.is_finite() || !ts.lambda_labeled.is_finite() {
            return Err(CliError::Config("coefficients must be finite".into()));
        }
        Ok(ts)
    }

    pub fn arch(&self, num_classes: usize) -> ArchConfig {
        ArchConfig {
            backbone: match self.model {
                ModelArg::Mlp => Backbone::Mlp,
                ModelArg::Gcn => Backbone::Gcn,
                ModelArg::Sage => Backbone::Sage,
            },
            layers: self.layers,
            hidden: self.hidden,
            dropout: self.dropout,
            norm: match self.norm {
                NormArg::None => NormKind::None,
                NormArg::Layer => NormKind::Layer,
                NormArg::Batch => NormKind::Batch,
            },
            residual: self.residual,
            num_classes,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            weight_decay: self.wd,
            metric: match self.metric {
                MetricArg::Accuracy => Metric::Accuracy,
                MetricArg::Auc => Metric::RocAuc,
            },
            seeds: (0..self.seeds as u64).map(|i| self.seed_base + i).collect(),
            record_trajectories: true,
        }
    }

    pub fn data(&self) -> Result<PathBuf, CliError> {
        self.data
            .clone()
            .ok_or_else(|| CliError::Config("--data is required".into()))
    }

    pub fn out(&self) -> Result<PathBuf, CliError> {
        self.out
            .clone()
            .ok_or_else(|| CliError::Config("--out is required".into()))
    }

    pub fn spec(&self, data: PathBuf, num_classes: usize, ts: TsConfig, out: PathBuf) -> RunSpec {
        RunSpec {
            data,
            arch: self.arch(num_classes),
            ts,
            train: self.train(),
            out,
            jobs: self.jobs.max(1),
            deterministic: deterministic_env(),
        }
    }
}

impl RunSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        self.arch.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.ts.entropy_kind().map_err(|e| CliError::Config(e.to_string()))?;
        if !self.data.is_dir() {
            return Err(CliError::Config(format!(
                "bundle directory {} does not exist",
                self.data.display()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Digest of everything that determines one seed's result, including the
    /// bundle's file contents.
    pub fn cell_digest(&self, seed: u64) -> Result<String, CliError> {
        let mut bytes = Vec::new();
        for f in ["meta.json", "edges.csv", "features.csv", "labels.csv", "splits.json"] {
            let p = self.data.join(f);
            bytes.extend(std::fs::read(&p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?);
        }
        let key = serde_json::json!({
            "arch": self.arch,
            "ts": self.ts,
            "epochs": self.train.epochs,
            "lr": self.train.lr,
            "weight_decay": self.train.weight_decay,
            "metric": self.train.metric,
            "seed": seed,
        });
        bytes.extend(key.to_string().into_bytes());
        Ok(format!("{:016x}", fnv1a(&bytes)))
    }
}

/// Parses `start:stop:step`, closed on both ends, with λ = 0 added when
/// missing. Values are rounded to 12 decimals to absorb accumulation error.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    let [a, b, s] = parts.as_slice() else {
        return Err(CliError::Config(format!("grid {text:?} is not start:stop:step")));
    };
    let parse = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|e| CliError::Config(format!("grid value {v:?}: {e}")))
    };
    let (start, stop, step) = (parse(a)?, parse(b)?, parse(s)?);
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) || step <= 0.0 || stop < start {
        return Err(CliError::Config(format!(
            "grid {text:?} needs finite start <= stop and step > 0"
        )));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if count > 100_000 {
        return Err(CliError::Config(format!("grid {text:?} has {count} points")));
    }
    let round = |x: f64| (x * 1e12).round() / 1e12 + 0.0;
    let mut grid: Vec<f64> = (0..count).map(|i| round(start + i as f64 * step)).collect();
    if !grid.contains(&0.0) {
        grid.push(0.0);
    }
    grid.sort_by(f64::total_cmp);
    Ok(grid)
}
