//! Flat key=value config files plus command-line overrides.
//!
//! Every key mirrors a model or training field; unknown keys are rejected
//! with the offending line. `#` starts a comment, blank lines are ignored.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use relpred_core::model::{Activation, ModelConfig};
use relpred_core::trainer::{NegativePolicy, TrainConfig};

/// Everything a training run needs, assembled from defaults, the config
/// file, and command-line overrides (in that order).
#[derive(Debug, Clone, Default)]
pub struct RunSettings {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub workers: usize,
    pub cache: Option<PathBuf>,
}

impl RunSettings {
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut settings = Self::default();
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("config error: cannot read {}", path.display()))?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| {
                    anyhow!(
                        "config error: {}:{}: expected key=value, got {raw:?}",
                        path.display(),
                        idx + 1
                    )
                })?;
            settings
                .apply(key.trim(), value.trim())
                .with_context(|| format!("config error: {}:{}", path.display(), idx + 1))?;
        }
        Ok(settings)
    }

    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let parse_usize = || -> Result<usize> {
            value
                .parse()
                .map_err(|_| anyhow!("{key}: expected an integer, got {value:?}"))
        };
        let parse_f64 = || -> Result<f64> {
            value
                .parse()
                .map_err(|_| anyhow!("{key}: expected a number, got {value:?}"))
        };
        let parse_bool = || -> Result<bool> {
            match value {
                "true" | "1" | "yes" | "on" => Ok(true),
                "false" | "0" | "no" | "off" => Ok(false),
                _ => bail!("{key}: expected a boolean, got {value:?}"),
            }
        };
        match key {
            "data" | "train_dir" => self.data = Some(PathBuf::from(value)),
            "out" | "out_dir" => self.out = Some(PathBuf::from(value)),
            "hop" => self.model.hop = parse_usize()?,
            "iters" => self.model.iters = parse_usize()?,
            "dim" => self.model.dim = parse_usize()?,
            "score_hidden" => self.model.score_hidden = parse_usize()?,
            "edge_dropout" => self.model.edge_dropout = parse_f64()?,
            "f1" => self.model.f1 = Activation::from_name(value).map_err(|e| anyhow!("{e}"))?,
            "f2" => self.model.f2 = Activation::from_name(value).map_err(|e| anyhow!("{e}"))?,
            "undirected" => self.model.ablation.undirected = parse_bool()?,
            "no_attention" => self.model.ablation.no_attention = parse_bool()?,
            "grail_attention" => self.model.ablation.grail_attention = parse_bool()?,
            "no_edge_update" => self.model.ablation.no_edge_update = parse_bool()?,
            "lr" => self.train.lr = parse_f64()?,
            "epochs" => self.train.epochs = parse_usize()?,
            "batch" => self.train.batch_size = parse_usize()?,
            "margin" => self.train.margin = parse_f64()?,
            "neg" => self.train.negatives_per_positive = parse_usize()?,
            "seed" => {
                self.train.seed = value
                    .parse()
                    .map_err(|_| anyhow!("seed: expected an integer, got {value:?}"))?
            }
            "patience" => self.train.patience = parse_usize()?,
            "runs" => self.train.runs = parse_usize()?,
            "require_subgraph" => self.train.require_subgraph_negatives = parse_bool()?,
            "negative_policy" => {
                self.train.negative_policy = match value {
                    "replace" => NegativePolicy::ReplaceUniform,
                    "exchange" => NegativePolicy::ExchangeHeadTail,
                    _ => bail!("negative_policy: expected replace or exchange, got {value:?}"),
                }
            }
            "max_nodes" => self.train.max_nodes = parse_usize()?,
            "grad_clip" => self.train.grad_clip = parse_f64()?,
            "timestamps" => self.train.log_timestamps = parse_bool()?,
            "workers" => self.workers = parse_usize()?,
            "cache" => self.cache = Some(PathBuf::from(value)),
            _ => bail!("unknown key {key:?}"),
        }
        Ok(())
    }
}
