//! Average-treatment-effect estimators for a binary text feature.
//!
//! * direct: `mean_i g(X_i, 1) - g(X_i, 0)`
//! * doubly robust: direct plus `mean_i alpha(Z_i) (Y_i - g(Z_i))`, where
//!   `alpha` is either the propensity multiplier `T/P(X) - (1-T)/(1-P(X))`
//!   or the learned Riesz head.
//!
//! `g` is always read on the probability scale.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{split_parts, Corpus, Document, GenConfigSS};
use crate::error::{Error, Result, ResultExt};
use crate::features::{bind_treatment, with_feature_forced, FeatureSpec};
use crate::models::{
    train_propensity, train_two_head, Multiplier, MultiplierFn, OutcomeModel, PropensityModel, TrainConfig,
    TwoHeadModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Direct,
    DrPropensity,
    DrRiesz,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Direct, Method::DrPropensity, Method::DrRiesz];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::DrPropensity => "dr_propensity",
            Method::DrRiesz => "dr_riesz",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config("method", format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub feature_id: usize,
    pub method: Method,
    pub value: f64,
    pub per_seed_values: Vec<f64>,
    /// Standard error of the mean across seeds (0 for a single seed).
    pub std_error: f64,
    /// Mean absolute error against the generator's tau, on the x1 scale.
    pub mae_vs_truth: Option<f64>,
}

impl EffectEstimate {
    pub fn from_values(feature_id: usize, method: Method, values: Vec<f64>, truth: Option<f64>) -> Self {
        let k = values.len() as f64;
        let value = values.iter().sum::<f64>() / k;
        let std_error = if values.len() > 1 {
            (sample_variance(&values) / k).sqrt()
        } else {
            0.0
        };
        let mae_vs_truth = truth.map(|tau| values.iter().map(|v| (v - tau).abs()).sum::<f64>() / k);
        EffectEstimate {
            feature_id,
            method,
            value,
            per_seed_values: values,
            std_error,
            mae_vs_truth,
        }
    }

    /// Sample variance of the per-seed values.
    pub fn seed_variance(&self) -> f64 {
        sample_variance(&self.per_seed_values)
    }
}

pub(crate) fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimates {
    pub direct: EffectEstimate,
    pub dr_propensity: EffectEstimate,
    pub dr_riesz: EffectEstimate,
}

impl EffectEstimates {
    pub fn get(&self, method: Method) -> &EffectEstimate {
        match method {
            Method::Direct => &self.direct,
            Method::DrPropensity => &self.dr_propensity,
            Method::DrRiesz => &self.dr_riesz,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &EffectEstimate> {
        [&self.direct, &self.dr_propensity, &self.dr_riesz].into_iter()
    }
}

fn require_nonempty(eval: &Corpus) -> Result<()> {
    if eval.is_empty() {
        Err(Error::Degenerate("evaluation corpus is empty".into()))
    } else {
        Ok(())
    }
}

/// `mean_i g(X_i, 1) - g(X_i, 0)`.
pub fn ate_direct<G: OutcomeModel + ?Sized>(g: &G, eval: &Corpus, spec: &FeatureSpec) -> Result<f64> {
    require_nonempty(eval)?;
    let mut total = 0.0;
    for d in &eval.docs {
        let g1 = g.predict_outcome(&with_feature_forced(d, spec, true)?);
        let g0 = g.predict_outcome(&with_feature_forced(d, spec, false)?);
        total += g1 - g0;
    }
    Ok(total / eval.len() as f64)
}

/// Direct estimate plus the multiplier-weighted residual correction.
pub fn ate_dr<G, A>(g: &G, alpha: &A, eval: &Corpus, spec: &FeatureSpec) -> Result<f64>
where
    G: OutcomeModel + ?Sized,
    A: Multiplier + ?Sized,
{
    let direct = ate_direct(g, eval, spec)?;
    let correction = eval
        .docs
        .iter()
        .map(|d| alpha.multiplier(d) * (f64::from(u8::from(d.label)) - g.predict_outcome(d)))
        .sum::<f64>()
        / eval.len() as f64;
    Ok(direct + correction)
}

/// `T / P - (1 - T) / (1 - P)` after clipping `P` to `[eps_clip, 1 - eps_clip]`.
pub fn propensity_multiplier(propensity: f64, treated: bool, eps_clip: f64) -> f64 {
    let p = propensity.clamp(eps_clip, 1.0 - eps_clip);
    if treated {
        1.0 / p
    } else {
        -1.0 / (1.0 - p)
    }
}

/// Propensity multiplier of one document under a trained propensity model.
pub fn multiplier_propensity(model: &PropensityModel, doc: &Document, eps_clip: f64) -> f64 {
    propensity_multiplier(model.raw_propensity(doc), doc.treatment, eps_clip)
}

/// [`Multiplier`] backed by a propensity model.
pub struct PropensityMultiplier<'a> {
    pub model: &'a PropensityModel,
    pub eps_clip: f64,
}

impl Multiplier for PropensityMultiplier<'_> {
    fn multiplier(&self, doc: &Document) -> f64 {
        multiplier_propensity(self.model, doc, self.eps_clip)
    }
}

/// Rescales treated multipliers to mean 1 and untreated ones to mean -1
/// over the evaluation set (Hajek-style normalization).
struct SelfNormalized {
    treated_scale: f64,
    untreated_scale: f64,
}

impl SelfNormalized {
    fn fit<A: Multiplier + ?Sized>(alpha: &A, eval: &Corpus) -> Self {
        let n = eval.len() as f64;
        let (mut s1, mut s0) = (0.0, 0.0);
        for d in &eval.docs {
            let a = alpha.multiplier(d);
            if d.treatment {
                s1 += a;
            } else {
                s0 -= a;
            }
        }
        let scale = |s: f64| if s > 0.0 { n / s } else { 1.0 };
        SelfNormalized {
            treated_scale: scale(s1),
            untreated_scale: scale(s0),
        }
    }
}

/// Direct estimate corrected with clipped propensity multipliers.
pub fn ate_dr_propensity<G: OutcomeModel + ?Sized>(
    g: &G,
    model: &PropensityModel,
    eval: &Corpus,
    spec: &FeatureSpec,
    eps_clip: f64,
    self_normalize: bool,
) -> Result<f64> {
    let alpha = PropensityMultiplier { model, eps_clip };
    if !self_normalize {
        return ate_dr(g, &alpha, eval, spec);
    }
    let norm = SelfNormalized::fit(&alpha, eval);
    let scaled = MultiplierFn(|d: &Document| {
        let a = alpha.multiplier(d);
        a * if d.treatment {
            norm.treated_scale
        } else {
            norm.untreated_scale
        }
    });
    ate_dr(g, &scaled, eval, spec)
}

/// Direct estimate corrected with the model's own Riesz head.
pub fn ate_dr_riesz(model: &TwoHeadModel, eval: &Corpus, spec: &FeatureSpec) -> Result<f64> {
    ate_dr(model, model, eval, spec)
}

/// Exact ATE of a semi-synthetic configuration by enumeration of the finite
/// joint over `(W, base Y, T)` and every planted-token pattern.
pub fn oracle_ate_enumerated(cfg: &GenConfigSS) -> Result<f64> {
    cfg.validate()?;
    let acc = cfg.covariates.base_label_acc;
    let base_weight = cfg.base_weight();
    let k = cfg.planted.len();
    let mut ate = 0.0;
    for w in [false, true] {
        for base_y in [false, true] {
            let p_y = if base_y == w { acc } else { 1.0 - acc };
            for t in [false, true] {
                let p_t = if t == w { 1.0 - cfg.eps } else { cfg.eps };
                for pattern in 0u32..(1u32 << k) {
                    let mut p_d = 1.0;
                    let mut planted_mean = 0.0;
                    for (j, planted) in cfg.planted.iter().enumerate() {
                        let q = if w { planted.p_w1 } else { planted.p_w0 };
                        if pattern >> j & 1 == 1 {
                            p_d *= q;
                            planted_mean += planted.effect;
                        } else {
                            p_d *= 1.0 - q;
                        }
                    }
                    let outcome = |t_do: bool| {
                        base_weight * f64::from(u8::from(base_y)) + cfg.tau * f64::from(u8::from(t_do)) + planted_mean
                    };
                    ate += 0.5 * p_y * p_t * p_d * (outcome(true) - outcome(false));
                }
            }
        }
    }
    Ok(ate)
}

/// The population multiplier of the semi-synthetic generator, computed from
/// each document's recorded confounder: `P(T = 1 | W)` is `1 - eps` for
/// `W = 1` and `eps` for `W = 0`.
pub fn closed_form_multiplier(eps: f64) -> impl Multiplier {
    MultiplierFn(move |d: &Document| {
        let w = d
            .confounder
            .expect("closed-form multiplier needs the recorded confounder");
        let p = if w { 1.0 - eps } else { eps };
        if d.treatment {
            1.0 / p
        } else {
            -1.0 / (1.0 - p)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateConfig {
    pub train: TrainConfig,
    /// Fraction of each seed's split used for evaluation.
    pub heldout_fraction: f64,
    /// When set, K-fold cross-fitting replaces the single split and the
    /// fold estimates are averaged.
    pub cross_fit_folds: Option<usize>,
    pub self_normalize: bool,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            train: TrainConfig::default(),
            heldout_fraction: 0.5,
            cross_fit_folds: Some(5),
            self_normalize: false,
        }
    }
}

impl EstimateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.heldout_fraction > 0.0 && self.heldout_fraction < 1.0) {
            return Err(Error::config(
                "heldout_fraction",
                format!("must lie in (0, 1), got {}", self.heldout_fraction),
            ));
        }
        if let Some(k) = self.cross_fit_folds {
            if k < 2 {
                return Err(Error::config("cross_fit_folds", "must be at least 2"));
            }
        }
        self.train.validate()
    }
}

/// All three estimates from models trained on `train`, evaluated on `eval`.
pub fn estimate_on(
    train: &Corpus,
    eval: &Corpus,
    spec: &FeatureSpec,
    cfg: &EstimateConfig,
    train_cfg: &TrainConfig,
) -> Result<[f64; 3]> {
    let two_head = train_two_head(train, spec, train_cfg)?;
    let propensity = train_propensity(train, spec, train_cfg)?;
    Ok([
        ate_direct(&two_head, eval, spec)?,
        ate_dr_propensity(
            &two_head,
            &propensity,
            eval,
            spec,
            train_cfg.eps_clip,
            cfg.self_normalize,
        )?,
        ate_dr_riesz(&two_head, eval, spec)?,
    ])
}

fn estimate_one_seed(bound: &Corpus, spec: &FeatureSpec, cfg: &EstimateConfig, seed: u64) -> Result<[f64; 3]> {
    let train_cfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    match cfg.cross_fit_folds {
        None => {
            let h = cfg.heldout_fraction;
            let parts = split_parts(bound, &[1.0 - h, h], seed)?;
            estimate_on(&parts[0], &parts[1], spec, cfg, &train_cfg)
        }
        Some(k) => {
            let parts = split_parts(bound, &vec![1.0 / k as f64; k], seed)?;
            let mut sum = [0.0; 3];
            for i in 0..k {
                let docs = parts
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .flat_map(|(_, p)| p.docs.iter().cloned())
                    .collect();
                let train = Corpus::new(docs, bound.meta.clone());
                let est = estimate_on(&train, &parts[i], spec, cfg, &train_cfg).context_with(|| format!("fold {i}"))?;
                for (s, e) in sum.iter_mut().zip(est) {
                    *s += e;
                }
            }
            Ok(sum.map(|s| s / k as f64))
        }
    }
}

/// Per seed: split, train the two-head and propensity models, evaluate the
/// three estimators on the held-out part. Seeds run in parallel; each seed
/// is single-threaded and the result does not depend on the thread count.
pub fn estimate_feature_effect(
    corpus: &Corpus,
    spec: &FeatureSpec,
    cfg: &EstimateConfig,
    seeds: &[u64],
) -> Result<EffectEstimates> {
    if seeds.is_empty() {
        return Err(Error::config("seeds", "at least one seed is required"));
    }
    cfg.validate()?;
    let bound = bind_treatment(corpus, spec)?;
    let runs: Vec<Result<[f64; 3]>> = seeds
        .par_iter()
        .map(|&seed| estimate_one_seed(&bound, spec, cfg, seed).context_with(|| format!("seed {seed}")))
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    // The recorded effect belongs to the recorded treatment only.
    let truth = corpus.meta.true_tau.filter(|_| {
        bound
            .docs
            .iter()
            .zip(&corpus.docs)
            .all(|(b, d)| b.treatment == d.treatment)
    });
    let column = |k: usize, method| {
        EffectEstimate::from_values(spec.feature_id, method, runs.iter().map(|r| r[k]).collect(), truth)
    };
    Ok(EffectEstimates {
        direct: column(0, Method::Direct),
        dr_propensity: column(1, Method::DrPropensity),
        dr_riesz: column(2, Method::DrRiesz),
    })
}
