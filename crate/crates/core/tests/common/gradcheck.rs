//! Gradient checks on small random instances. Each function returns the
//! worst relative error over `INSTANCES` draws.

use feag::augment::regularized_objective;
use feag::corpus::{Corpus, CorpusMeta, Document};
use feag::features::{featurize, with_feature_forced, FeatureSpec, FeaturizerConfig};
use feag::models::objectives::{loss_and_gradient, AugmentedObjective, BceObjective, Objective, TwoHeadObjective};
use feag::models::{riesz_loss, Mode, TrainConfig, TwoHeadModel};
use rand::Rng;

use super::{max_relative_error, numeric_gradient, objective_gradient_error, random_network, random_sparse, rng};

pub const TOL: f64 = 1e-3;
pub const INSTANCES: u64 = 10;
pub const MODES: [Mode; 2] = [Mode::Linear, Mode::Mlp];
const DIM: usize = 16;
const SCALE: f64 = 0.8;

fn small_cfg(mode: Mode) -> TrainConfig {
    TrainConfig {
        mode,
        hidden: 3,
        featurizer: FeaturizerConfig {
            dim: DIM,
            ..FeaturizerConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn spec() -> FeatureSpec {
    FeatureSpec::prefix_pair(0, "treated", "untreated")
}

fn random_corpus(rng: &mut impl Rng, n: usize) -> Corpus {
    let docs = (0..n)
        .map(|i| {
            let t = rng.gen_bool(0.5);
            let mut tokens = vec![if t { "treated" } else { "untreated" }.to_string()];
            tokens.extend((0..rng.gen_range(1..=4)).map(|_| format!("w{}", rng.gen_range(0..12))));
            Document::new(i, tokens, t, rng.gen_bool(0.5))
        })
        .collect();
    Corpus::new(docs, CorpusMeta::external())
}

fn random_bce(rng: &mut impl Rng, n: usize) -> BceObjective {
    BceObjective {
        inputs: (0..n).map(|_| random_sparse(rng, DIM)).collect(),
        targets: (0..n).map(|_| rng.gen_bool(0.5)).collect(),
    }
}

fn two_head_objective(corpus: &Corpus, cfg: &TrainConfig, lambda_rr: f64) -> TwoHeadObjective {
    let spec = spec();
    let forced = |t: bool| -> Vec<_> {
        corpus
            .docs
            .iter()
            .map(|d| featurize(&with_feature_forced(d, &spec, t).unwrap(), &cfg.featurizer))
            .collect()
    };
    TwoHeadObjective {
        treated: forced(true),
        untreated: forced(false),
        t: corpus.docs.iter().map(|d| d.treatment).collect(),
        y: corpus.docs.iter().map(|d| d.label).collect(),
        lambda_rr,
    }
}

fn subtract(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn worst(f: impl Fn(u64) -> f64) -> f64 {
    (0..INSTANCES).map(f).fold(0.0, f64::max)
}

pub fn bce(mode: Mode) -> f64 {
    worst(|k| {
        let mut r = rng(k);
        let obj = random_bce(&mut r, 6);
        let net = random_network(&mut r, mode, DIM, 1, SCALE);
        objective_gradient_error(&obj, &net, &[0, 1, 2, 3, 4, 5])
    })
}

/// The joint outcome plus Riesz objective.
pub fn two_head(mode: Mode) -> f64 {
    let cfg = small_cfg(mode);
    worst(|k| {
        let mut r = rng(100 + k);
        let corpus = random_corpus(&mut r, 6);
        let obj = two_head_objective(&corpus, &cfg, 0.7);
        let net = random_network(&mut r, mode, DIM, 2, SCALE);
        objective_gradient_error(&obj, &net, &[0, 2, 3, 5])
    })
}

/// The Riesz part of the joint gradient, isolated as the difference between
/// `lambda_rr = 1` and `lambda_rr = 0`, against differences of the public
/// `riesz_loss` evaluated through a model.
pub fn riesz(mode: Mode) -> f64 {
    let cfg = small_cfg(mode);
    worst(|k| {
        let mut r = rng(200 + k);
        let corpus = random_corpus(&mut r, 5);
        let net = random_network(&mut r, mode, DIM, 2, SCALE);
        let idx: Vec<usize> = (0..corpus.len()).collect();
        let (_, with) = loss_and_gradient(&two_head_objective(&corpus, &cfg, 1.0), &net, &idx);
        let (_, without) = loss_and_gradient(&two_head_objective(&corpus, &cfg, 0.0), &net, &idx);
        let numeric = numeric_gradient(&net, |n| {
            let mut model = TwoHeadModel::zeros(spec(), &cfg);
            *model.network_mut() = n.clone();
            riesz_loss(&model, &corpus.docs, &spec()).unwrap()
        });
        max_relative_error(&subtract(&with, &without), &numeric)
    })
}

/// The effect penalty alone (regularized minus plain BCE gradient) and the
/// whole regularized objective; the larger error of the two.
pub fn penalty(mode: Mode) -> f64 {
    let cfg = small_cfg(mode);
    // The same feature twice with different targets exercises the 1/m average.
    let specs = [spec(), spec().with_id(1)];
    worst(|k| {
        let mut r = rng(300 + k);
        let corpus = random_corpus(&mut r, 6);
        let taus = [r.gen_range(-0.5..0.5), r.gen_range(-0.5..0.5)];
        let net = random_network(&mut r, mode, DIM, 1, SCALE);
        let idx = [0, 1, 3, 4];
        let reg = regularized_objective(&corpus, &specs, &taus, 2.5, &cfg).unwrap();
        let plain = regularized_objective(&corpus, &specs, &taus, 0.0, &cfg).unwrap();
        let (_, with) = loss_and_gradient(&reg, &net, &idx);
        let (_, without) = loss_and_gradient(&plain, &net, &idx);
        let numeric = numeric_gradient(&net, |n| reg.penalty(n, &idx));
        let alone = max_relative_error(&subtract(&with, &without), &numeric);
        alone.max(objective_gradient_error(&reg, &net, &idx))
    })
}

pub fn augmented(mode: Mode) -> f64 {
    worst(|k| {
        let mut r = rng(400 + k);
        let originals = random_bce(&mut r, 5);
        let augmented = random_bce(&mut r, 3);
        let mut obj = AugmentedObjective::new(originals, augmented, 0.3, k);
        // One batch per epoch, so batch 0 sees every counterfactual.
        obj.begin_epoch(0, 1);
        let net = random_network(&mut r, mode, DIM, 1, SCALE);
        objective_gradient_error(&obj, &net, &[0, 1, 2, 3, 4])
    })
}
