//! Command-line arguments. Every struct here also (de)serializes, so a parsed
//! command line is itself the resolved run config written next to outputs.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::corpus::{CovariateConfig, GenConfigSub, PlantedToken, Vocab, DEFAULT_NEUTRAL_SIZE, DEFAULT_POOL_SIZE};
use crate::error::{Error, Result};
use crate::estimators::EstimateConfig;
use crate::features::{FeatureSpec, FeaturizerConfig, TfMode};
use crate::models::{Mode, TrainConfig};

fn train_defaults() -> TrainConfig {
    TrainConfig::default()
}

fn covariate_defaults() -> CovariateConfig {
    CovariateConfig::default()
}

fn sub_defaults() -> GenConfigSub {
    GenConfigSub::new(0, 0.0)
}

#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[command(
    name = "feag",
    version,
    about = "Estimate causal effects of text features and train effect-controlled classifiers"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct Global {
    /// Seed for generation and training.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads across seeds, features and sweep cells (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Directory for every output file (relative output paths resolve here).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic corpus.
    Gen(GenArgs),
    /// Estimate feature effects with the direct and both doubly robust estimators.
    Estimate(EstimateArgs),
    /// Train a classifier.
    Train(TrainArgs),
    /// Group accuracies and learned effect of a trained classifier.
    Eval(EvalArgs),
    /// Estimated effect against P(Y | token) for candidate tokens.
    BiasScan(BiasScanArgs),
    /// Estimator MAE over a grid of effects and overlap levels.
    Sweep(SweepArgs),
    /// Re-run a command from its emitted config file.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gen(g) => match g.kind {
                GenKind::Ss(_) => "gen-ss",
                GenKind::Subsampled(_) => "gen-subsampled",
            },
            Command::Estimate(_) => "estimate",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::BiasScan(_) => "bias-scan",
            Command::Sweep(_) => "sweep",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GenArgs {
    #[command(subcommand)]
    pub kind: GenKind,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenKind {
    /// Prefix-token treatment relabeled with a known effect.
    Ss(SsArgs),
    /// Trigger-token treatment with correlation strengthened by subsampling.
    Subsampled(SubsampledArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CovariateArgs {
    #[arg(long, default_value_t = covariate_defaults().signal_strength)]
    pub signal_strength: f64,
    #[arg(long, default_value_t = covariate_defaults().base_label_acc)]
    pub base_label_acc: f64,
    #[arg(long, default_value_t = covariate_defaults().tokens_per_doc)]
    pub tokens_per_doc: usize,
    /// Tokens in each of the two confounder pools.
    #[arg(long, default_value_t = DEFAULT_POOL_SIZE)]
    pub pool_size: usize,
    #[arg(long, default_value_t = DEFAULT_NEUTRAL_SIZE)]
    pub neutral_size: usize,
}

impl CovariateArgs {
    pub fn to_config(&self) -> CovariateConfig {
        CovariateConfig {
            signal_strength: self.signal_strength,
            base_label_acc: self.base_label_acc,
            tokens_per_doc: self.tokens_per_doc,
            vocab: Vocab::synthetic(self.pool_size, self.neutral_size),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SsArgs {
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    #[arg(long)]
    pub tau: f64,
    #[arg(long)]
    pub eps: f64,
    #[command(flatten)]
    pub covariates: CovariateArgs,
    /// Planted token `token:p_w1:p_w0:effect` (repeatable).
    #[arg(long = "plant")]
    pub plant: Vec<String>,
    #[arg(long, default_value = "corpus.jsonl")]
    pub out: PathBuf,
}

pub fn parse_plant(s: &str) -> Result<PlantedToken> {
    let bad = || Error::config("plant", format!("expected token:p_w1:p_w0:effect, got {s:?}"));
    let parts: Vec<&str> = s.split(':').collect();
    let [token, p1, p0, effect] = parts.as_slice() else {
        return Err(bad());
    };
    let num = |v: &str| v.parse::<f64>().map_err(|_| bad());
    Ok(PlantedToken {
        token: token.to_string(),
        p_w1: num(p1)?,
        p_w0: num(p0)?,
        effect: num(effect)?,
    })
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SubsampledArgs {
    #[arg(long, default_value_t = 50000)]
    pub n_raw: usize,
    #[arg(long)]
    pub tau: f64,
    #[arg(long, default_value_t = sub_defaults().trigger_token)]
    pub trigger: String,
    #[arg(long, default_value_t = sub_defaults().p_trigger_w1)]
    pub p_trigger_w1: f64,
    #[arg(long, default_value_t = sub_defaults().p_trigger_w0)]
    pub p_trigger_w0: f64,
    #[arg(long, default_value_t = sub_defaults().keep_t1_w0)]
    pub keep_t1_w0: f64,
    #[arg(long, default_value_t = sub_defaults().keep_t0)]
    pub keep_t0: f64,
    #[command(flatten)]
    pub covariates: CovariateArgs,
    #[arg(long, default_value = "corpus.jsonl")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    #[arg(long, default_value_t = train_defaults().lr)]
    pub lr: f64,
    #[arg(long, default_value_t = train_defaults().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = train_defaults().batch_size)]
    pub batch_size: usize,
    /// Weight of the Riesz loss in the two-head objective.
    #[arg(long, default_value_t = train_defaults().lambda_rr)]
    pub lambda_rr: f64,
    #[arg(long, default_value_t = train_defaults().weight_decay)]
    pub weight_decay: f64,
    /// Propensities are clipped to [eps_clip, 1 - eps_clip].
    #[arg(long, default_value_t = train_defaults().eps_clip)]
    pub eps_clip: f64,
    #[arg(long, default_value = "linear", value_parser = ["linear", "mlp"])]
    pub model_mode: String,
    #[arg(long, default_value_t = train_defaults().hidden)]
    pub hidden: usize,
    #[arg(long, default_value_t = train_defaults().init_scale)]
    pub init_scale: f64,
    /// Keep the epoch with the lowest loss on a 10% holdout.
    #[arg(long)]
    pub select_best: bool,
    #[arg(long, default_value_t = train_defaults().featurizer.dim)]
    pub dim: usize,
    #[arg(long, default_value_t = train_defaults().featurizer.hash_seed)]
    pub hash_seed: u64,
    #[arg(long, default_value = "binary", value_parser = ["binary", "counts"])]
    pub tf_mode: String,
}

impl ModelArgs {
    pub fn to_config(&self, seed: u64) -> Result<TrainConfig> {
        let mode: Mode = self
            .model_mode
            .parse()
            .map_err(|e: String| Error::config("model_mode", e))?;
        let tf_mode = match self.tf_mode.as_str() {
            "binary" => TfMode::Binary,
            "counts" => TfMode::Counts,
            other => return Err(Error::config("tf_mode", format!("unknown mode {other:?}"))),
        };
        let cfg = TrainConfig {
            lr: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lambda_rr: self.lambda_rr,
            weight_decay: self.weight_decay,
            seed,
            eps_clip: self.eps_clip,
            mode,
            hidden: self.hidden,
            init_scale: self.init_scale,
            select_best: self.select_best,
            featurizer: FeaturizerConfig {
                dim: self.dim,
                hash_seed: self.hash_seed,
                tf_mode,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EstimationArgs {
    /// Estimation seeds; each one gets its own split and models.
    #[arg(long, value_delimiter = ',', default_value = "0,11,44")]
    pub seeds: Vec<u64>,
    /// Fraction of each split held out for evaluating the estimators.
    #[arg(long, default_value_t = 0.5)]
    pub heldout: f64,
    /// K-fold cross-fitting; 1 uses a single split with `--heldout`.
    #[arg(long, default_value_t = 5)]
    pub cross_fit: usize,
    /// Normalize the propensity multipliers within each treatment arm.
    #[arg(long)]
    pub self_normalize: bool,
}

impl EstimationArgs {
    pub fn to_config(&self, model: &ModelArgs) -> Result<EstimateConfig> {
        let cfg = EstimateConfig {
            train: model.to_config(0)?,
            heldout_fraction: self.heldout,
            cross_fit_folds: (self.cross_fit != 1).then_some(self.cross_fit),
            self_normalize: self.self_normalize,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_features(raw: &[String]) -> Result<Vec<FeatureSpec>> {
    if raw.is_empty() {
        return Err(Error::config("feature", "at least one --feature is required"));
    }
    raw.iter()
        .enumerate()
        .map(|(j, s)| s.parse::<FeatureSpec>().map(|f| f.with_id(j)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EstimateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// `prefix:<treated>,<untreated>` or `presence:<token>` (repeatable).
    #[arg(long, required = true)]
    pub feature: Vec<String>,
    #[command(flatten)]
    pub estimation: EstimationArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "estimates.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    Erm,
    Feag,
    Reg,
    RemoveToken,
    Subsample,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value = "erm")]
    pub mode: TrainMode,
    /// Features to control (feag, reg) or strip (remove-token); repeatable.
    #[arg(long)]
    pub feature: Vec<String>,
    /// `estimate` runs effect estimation first; `manual:<v>[,<v>...]` gives
    /// one target per feature (a single value applies to all).
    #[arg(long, default_value = "estimate")]
    pub tau_source: String,
    /// Augmented-loss weight (feag, default 0.1) or penalty weight (reg, default 1).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Use tau / p2 for the treated-to-untreated flip fraction.
    #[arg(long)]
    pub literal_flip: bool,
    #[command(flatten)]
    pub estimation: EstimationArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "model.bin")]
    pub model_out: PathBuf,
    /// Also write the counterfactual corpus (feag only).
    #[arg(long)]
    pub aug_out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub feature: String,
    /// JSON report; a CSV with the same stem is written beside it.
    #[arg(long, default_value = "metrics.json")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct BiasScanArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub tokens: Vec<String>,
    #[arg(long, default_value_t = crate::evalx::DEFAULT_MIN_COUNT)]
    pub min_count: usize,
    #[command(flatten)]
    pub estimation: EstimationArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// CSV report; a JSON with the same stem is written beside it.
    #[arg(long, default_value = "bias_scan.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5")]
    pub taus: Vec<f64>,
    #[arg(long = "eps", value_delimiter = ',', default_value = "0.01,0.05,0.10")]
    pub eps: Vec<f64>,
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    #[command(flatten)]
    pub covariates: CovariateArgs,
    #[command(flatten)]
    pub estimation: EstimationArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// MAE table; per-seed estimates go to `estimates.csv` beside it.
    #[arg(long, default_value = "mae.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// A config file emitted by an earlier run.
    pub config: PathBuf,
}
