//! Outcome, multiplier and propensity models trained by mini-batch gradient
//! descent over hashed bag-of-token features.
//!
//! The two-head model shares one representation between an outcome head `g`
//! (a logit, read as a probability) and a Riesz head `alpha` (an unbounded
//! real). In linear mode the shared representation is the identity and the
//! heads decouple.

mod io;
mod network;
pub mod objectives;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use io::{load_model, save_model, ModelHeader, ModelKind, SavedModel, MODEL_FORMAT_VERSION};
pub use network::{Forward, Grad, Mode, Network};
use objectives::{sigmoid, BceObjective, Objective, TwoHeadObjective};

use crate::corpus::{split_parts, Corpus, Document};
use crate::error::{Error, Result};
use crate::features::{featurize, featurize_tokens, with_feature_forced, FeatureSpec, FeaturizerConfig, SparseVec};
use crate::rng;

/// Anything that maps a document to `P(Y = 1 | Z)`.
pub trait OutcomeModel {
    fn predict_outcome(&self, doc: &Document) -> f64;
}

/// Anything that maps a document to a multiplier `alpha(Z)`.
pub trait Multiplier {
    fn multiplier(&self, doc: &Document) -> f64;
}

impl<F: Fn(&Document) -> f64> OutcomeModel for F {
    fn predict_outcome(&self, doc: &Document) -> f64 {
        self(doc)
    }
}

/// Wraps a closure as a [`Multiplier`].
pub struct MultiplierFn<F>(pub F);

impl<F: Fn(&Document) -> f64> Multiplier for MultiplierFn<F> {
    fn multiplier(&self, doc: &Document) -> f64 {
        (self.0)(doc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda_rr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub eps_clip: f64,
    pub mode: Mode,
    pub hidden: usize,
    pub init_scale: f64,
    /// Keep the epoch with the lowest loss on a 10% holdout of the training data.
    pub select_best: bool,
    pub featurizer: FeaturizerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.1,
            epochs: 50,
            batch_size: 32,
            lambda_rr: 1.0,
            weight_decay: 1e-4,
            seed: 0,
            eps_clip: 0.01,
            mode: Mode::Linear,
            hidden: 64,
            init_scale: 0.1,
            select_best: false,
            featurizer: FeaturizerConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", format!("must be positive, got {}", self.lr)));
        }
        if !(self.eps_clip > 0.0 && self.eps_clip <= 0.1) {
            return Err(Error::config(
                "eps_clip",
                format!("must lie in (0, 0.1], got {}", self.eps_clip),
            ));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if !(self.weight_decay >= 0.0 && self.lr * self.weight_decay < 1.0) {
            return Err(Error::config(
                "weight_decay",
                format!(
                    "must be non-negative with lr * weight_decay < 1, got {}",
                    self.weight_decay
                ),
            ));
        }
        if !(self.lambda_rr >= 0.0) {
            return Err(Error::config("lambda_rr", "must be non-negative"));
        }
        if self.mode == Mode::Mlp && self.hidden == 0 {
            return Err(Error::config("hidden", "must be at least 1 in mlp mode"));
        }
        self.featurizer.validate()
    }

    pub(crate) fn network(&self, n_heads: usize) -> Network {
        Network::new(
            self.mode,
            self.featurizer.dim,
            self.hidden,
            n_heads,
            self.init_scale,
            self.seed,
        )
    }
}

/// Runs the shared optimizer: seeded per-epoch shuffling, linearly decaying
/// learning rate, decoupled weight decay. With a validation objective the
/// epoch with the lowest validation loss is kept.
pub(crate) fn fit(
    net: &mut Network,
    obj: &mut dyn Objective,
    cfg: &TrainConfig,
    validation: Option<&dyn Objective>,
) -> Result<()> {
    let n = obj.len();
    let n_batches = n.div_ceil(cfg.batch_size);
    let total_steps = (cfg.epochs * n_batches) as f64;
    let mut shuffle = rng::stream(cfg.seed, rng::STREAM_SHUFFLE, 0);
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = net.zero_grad();
    let mut best: Option<(f64, Network)> = None;
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        obj.begin_epoch(epoch, n_batches);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let lr = cfg.lr * (1.0 - step as f64 / total_steps);
            let loss = obj.batch(net, chunk, b, Some(&mut grad));
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: b, loss });
            }
            net.step(&mut grad, lr, cfg.weight_decay);
            step += 1;
        }
        if let Some(v) = validation {
            let all: Vec<usize> = (0..v.len()).collect();
            let loss = v.batch(net, &all, 0, None);
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: n_batches,
                    loss,
                });
            }
            if best.as_ref().is_none_or(|(l, _)| loss < *l) {
                best = Some((loss, net.clone()));
            }
        }
    }
    if let Some((_, b)) = best {
        *net = b;
    }
    Ok(())
}

/// Splits off a 10% validation holdout when best-epoch selection is on.
pub(crate) fn with_holdout(train: &Corpus, cfg: &TrainConfig) -> Result<(Corpus, Option<Corpus>)> {
    if !cfg.select_best {
        return Ok((train.clone(), None));
    }
    let seed = rng::derive(cfg.seed, rng::STREAM_HOLDOUT, 0);
    let mut parts = split_parts(train, &[0.9, 0.1], seed)?;
    let valid = parts.pop().expect("two parts");
    let fit = parts.pop().expect("two parts");
    Ok((fit, Some(valid)))
}

fn require_both_treatments(corpus: &Corpus, spec: &FeatureSpec) -> Result<Vec<bool>> {
    if corpus.is_empty() {
        return Err(Error::Degenerate("training corpus is empty".into()));
    }
    let states = corpus
        .docs
        .iter()
        .map(|d| spec.state(d))
        .collect::<Result<Vec<bool>>>()?;
    let treated = states.iter().filter(|s| **s).count();
    if treated == 0 || treated == states.len() {
        return Err(Error::Degenerate(format!(
            "both treatment values required for {spec} ({treated} of {} treated)",
            states.len()
        )));
    }
    Ok(states)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoHeadModel {
    pub(crate) net: Network,
    pub featurizer: FeaturizerConfig,
    pub spec: FeatureSpec,
}

impl TwoHeadModel {
    /// An untrained model with zero heads.
    pub fn zeros(spec: FeatureSpec, cfg: &TrainConfig) -> Self {
        TwoHeadModel {
            net: cfg.network(2),
            featurizer: cfg.featurizer,
            spec,
        }
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn outcome_logit(&self, doc: &Document) -> f64 {
        self.net.outputs(&featurize(doc, &self.featurizer))[0]
    }

    pub fn predict_outcome(&self, doc: &Document) -> f64 {
        sigmoid(self.outcome_logit(doc))
    }

    pub fn predict_riesz(&self, doc: &Document) -> f64 {
        self.net.outputs(&featurize(doc, &self.featurizer))[1]
    }
}

impl OutcomeModel for TwoHeadModel {
    fn predict_outcome(&self, doc: &Document) -> f64 {
        TwoHeadModel::predict_outcome(self, doc)
    }
}

impl Multiplier for TwoHeadModel {
    fn multiplier(&self, doc: &Document) -> f64 {
        self.predict_riesz(doc)
    }
}

/// Mean over the batch of `-2 (alpha(X,1) - alpha(X,0)) + alpha(Z)^2`.
pub fn riesz_loss<A: Multiplier + ?Sized>(alpha: &A, batch: &[Document], spec: &FeatureSpec) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Degenerate("riesz_loss needs a non-empty batch".into()));
    }
    let mut total = 0.0;
    for doc in batch {
        let a1 = alpha.multiplier(&with_feature_forced(doc, spec, true)?);
        let a0 = alpha.multiplier(&with_feature_forced(doc, spec, false)?);
        let az = alpha.multiplier(doc);
        total += -2.0 * (a1 - a0) + az * az;
    }
    Ok(total / batch.len() as f64)
}

pub(crate) fn two_head_objective(corpus: &Corpus, spec: &FeatureSpec, cfg: &TrainConfig) -> Result<TwoHeadObjective> {
    let mut treated = Vec::with_capacity(corpus.len());
    let mut untreated = Vec::with_capacity(corpus.len());
    let mut t = Vec::with_capacity(corpus.len());
    for d in &corpus.docs {
        t.push(spec.state(d)?);
        treated.push(featurize(&with_feature_forced(d, spec, true)?, &cfg.featurizer));
        untreated.push(featurize(&with_feature_forced(d, spec, false)?, &cfg.featurizer));
    }
    Ok(TwoHeadObjective {
        treated,
        untreated,
        t,
        y: corpus.docs.iter().map(|d| d.label).collect(),
        lambda_rr: cfg.lambda_rr,
    })
}

/// Joint training of `BCE(Y, g) + lambda_rr * riesz_loss`.
pub fn train_two_head(train: &Corpus, spec: &FeatureSpec, cfg: &TrainConfig) -> Result<TwoHeadModel> {
    cfg.validate()?;
    require_both_treatments(train, spec)?;
    let (fit_set, valid) = with_holdout(train, cfg)?;
    let mut obj = two_head_objective(&fit_set, spec, cfg)?;
    let valid = valid.map(|v| two_head_objective(&v, spec, cfg)).transpose()?;
    let mut model = TwoHeadModel::zeros(spec.clone(), cfg);
    fit(
        &mut model.net,
        &mut obj,
        cfg,
        valid.as_ref().map(|v| v as &dyn Objective),
    )?;
    Ok(model)
}

/// `P(T = 1 | X)` from covariate-only features.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel {
    pub(crate) net: Network,
    pub featurizer: FeaturizerConfig,
    pub spec: FeatureSpec,
    pub eps_clip: f64,
}

impl PropensityModel {
    pub fn zeros(spec: FeatureSpec, cfg: &TrainConfig) -> Self {
        PropensityModel {
            net: cfg.network(1),
            featurizer: cfg.featurizer,
            spec,
            eps_clip: cfg.eps_clip,
        }
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    fn covariates(&self, doc: &Document) -> SparseVec {
        featurize_tokens(self.spec.covariate_tokens(doc), &self.featurizer)
    }

    /// Unclipped model output.
    pub fn raw_propensity(&self, doc: &Document) -> f64 {
        sigmoid(self.net.outputs(&self.covariates(doc))[0])
    }

    /// Output clipped to `[eps_clip, 1 - eps_clip]`.
    pub fn propensity(&self, doc: &Document) -> f64 {
        self.raw_propensity(doc).clamp(self.eps_clip, 1.0 - self.eps_clip)
    }
}

fn propensity_objective(corpus: &Corpus, spec: &FeatureSpec, cfg: &TrainConfig) -> Result<BceObjective> {
    Ok(BceObjective {
        inputs: corpus
            .docs
            .iter()
            .map(|d| featurize_tokens(spec.covariate_tokens(d), &cfg.featurizer))
            .collect(),
        targets: corpus.docs.iter().map(|d| spec.state(d)).collect::<Result<_>>()?,
    })
}

/// Logistic regression of `T` on the covariate tokens.
pub fn train_propensity(train: &Corpus, spec: &FeatureSpec, cfg: &TrainConfig) -> Result<PropensityModel> {
    cfg.validate()?;
    require_both_treatments(train, spec)?;
    let (fit_set, valid) = with_holdout(train, cfg)?;
    let mut obj = propensity_objective(&fit_set, spec, cfg)?;
    let valid = valid.map(|v| propensity_objective(&v, spec, cfg)).transpose()?;
    let mut model = PropensityModel::zeros(spec.clone(), cfg);
    fit(
        &mut model.net,
        &mut obj,
        cfg,
        valid.as_ref().map(|v| v as &dyn Objective),
    )?;
    Ok(model)
}

/// A BCE-trained classifier `f(Z)`. When `strip` is set the treatment tokens
/// of that feature are removed before featurizing, both in training and at
/// prediction time.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub(crate) net: Network,
    pub featurizer: FeaturizerConfig,
    pub strip: Option<FeatureSpec>,
}

impl Classifier {
    pub fn zeros(cfg: &TrainConfig) -> Self {
        Classifier {
            net: cfg.network(1),
            featurizer: cfg.featurizer,
            strip: None,
        }
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub(crate) fn input(&self, doc: &Document) -> SparseVec {
        match &self.strip {
            Some(spec) => featurize_tokens(spec.covariate_tokens(doc), &self.featurizer),
            None => featurize(doc, &self.featurizer),
        }
    }

    pub fn logit(&self, doc: &Document) -> f64 {
        self.net.outputs(&self.input(doc))[0]
    }

    pub fn predict_proba(&self, doc: &Document) -> f64 {
        sigmoid(self.logit(doc))
    }

    /// Threshold at 0.5; exact ties go to class 0.
    pub fn predict(&self, doc: &Document) -> bool {
        self.predict_proba(doc) > 0.5
    }

    /// Linear-mode weight of a token's hashed index.
    pub fn token_weight(&self, token: &str) -> Option<f64> {
        self.net.input_weight(self.featurizer.index_of(token), 0)
    }
}

impl OutcomeModel for Classifier {
    fn predict_outcome(&self, doc: &Document) -> f64 {
        self.predict_proba(doc)
    }
}

pub(crate) fn classifier_objective(corpus: &Corpus, template: &Classifier) -> BceObjective {
    BceObjective {
        inputs: corpus.docs.iter().map(|d| template.input(d)).collect(),
        targets: corpus.docs.iter().map(|d| d.label).collect(),
    }
}

pub(crate) fn train_classifier_with(
    train: &Corpus,
    cfg: &TrainConfig,
    strip: Option<FeatureSpec>,
) -> Result<Classifier> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Degenerate("training corpus is empty".into()));
    }
    let mut model = Classifier {
        strip,
        ..Classifier::zeros(cfg)
    };
    let (fit_set, valid) = with_holdout(train, cfg)?;
    let mut obj = classifier_objective(&fit_set, &model);
    let valid = valid.map(|v| classifier_objective(&v, &model));
    fit(
        &mut model.net,
        &mut obj,
        cfg,
        valid.as_ref().map(|v| v as &dyn Objective),
    )?;
    Ok(model)
}

/// Plain ERM: BCE only.
pub fn train_classifier(train: &Corpus, cfg: &TrainConfig) -> Result<Classifier> {
    train_classifier_with(train, cfg, None)
}
