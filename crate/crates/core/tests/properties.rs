mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use feag::augment::{build_augmented, flip_labels, subsample_baseline, train_feag, FlipRule};
use feag::corpus::{
    generate_ss, read_jsonl, split_parts, write_jsonl, Corpus, CorpusMeta, Document, GenConfigSS, Generator, Vocab,
};
use feag::evalx::group_metrics;
use feag::features::{apply_counterfactual, featurize, FeatureSpec, FeaturizerConfig, TfMode};
use feag::models::objectives::{BceObjective, EffectTarget, RegularizedObjective};
use feag::models::{train_classifier, Classifier, Mode, TrainConfig};

fn prefix() -> FeatureSpec {
    FeatureSpec::prefix_pair(0, "treated", "untreated")
}

fn small_vocab_cfg(n: usize, tau: f64, eps: f64) -> GenConfigSS {
    let mut cfg = GenConfigSS::new(n, tau, eps);
    cfg.covariates.vocab = Vocab::synthetic(20, 20);
    cfg
}

fn small_train_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 3,
        seed,
        featurizer: FeaturizerConfig {
            dim: 256,
            ..Default::default()
        },
        ..TrainConfig::default()
    }
}

fn token() -> impl Strategy<Value = String> {
    "[a-z]{1,6}"
}

fn document() -> impl Strategy<Value = Document> {
    (
        prop::collection::vec(token(), 1..8),
        any::<bool>(),
        any::<bool>(),
        prop::option::of(any::<bool>()),
    )
        .prop_map(|(mut tokens, t, y, w)| {
            tokens.insert(0, if t { "treated".into() } else { "untreated".into() });
            let d = Document::new(0, tokens, t, y);
            match w {
                Some(w) => d.with_confounder(w),
                None => d,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn featurize_is_sorted_unique_and_in_range(
        tokens in prop::collection::vec(token(), 1..20),
        hash_seed in any::<u64>(),
        log_dim in 1u32..12,
        counts in any::<bool>(),
    ) {
        let cfg = FeaturizerConfig {
            dim: 1 << log_dim,
            hash_seed,
            tf_mode: if counts { TfMode::Counts } else { TfMode::Binary },
        };
        let d = Document::new(0, tokens.clone(), false, false);
        let v = featurize(&d, &cfg);
        prop_assert!(v.entries.windows(2).all(|w| w[0].0 < w[1].0));
        prop_assert!(v.entries.iter().all(|&(i, x)| (i as usize) < cfg.dim && x.is_finite() && x >= 1.0));
        let mass: f64 = v.entries.iter().map(|e| e.1).sum();
        if counts {
            prop_assert_eq!(mass, tokens.len() as f64);
        } else {
            prop_assert!(v.entries.iter().all(|e| e.1 == 1.0));
        }
        prop_assert_eq!(featurize(&d, &cfg), v);
    }

    #[test]
    fn split_partitions_the_corpus(
        n in 3usize..200,
        a in 1u32..10,
        b in 1u32..10,
        c in 1u32..10,
        seed in any::<u64>(),
    ) {
        let docs: Vec<Document> = (0..n).map(|i| Document::new(0, vec![format!("d{i}")], false, false)).collect();
        let corpus = Corpus::new(docs, CorpusMeta::external());
        let total = (a + b + c) as f64;
        let fractions = [a as f64 / total, b as f64 / total, c as f64 / total];
        match split_parts(&corpus, &fractions, seed) {
            Ok(parts) => {
                let mut seen = BTreeSet::new();
                for p in &parts {
                    for d in &p.docs {
                        prop_assert!(seen.insert(d.tokens[0].clone()), "duplicate document");
                    }
                    prop_assert!(p.docs.iter().enumerate().all(|(i, d)| d.doc_id == i));
                }
                prop_assert_eq!(seen.len(), n);
                for k in 1..3 {
                    prop_assert_eq!(parts[k].len(), (n as f64 * fractions[k]).floor() as usize);
                }
            }
            Err(_) => {
                let empty = (1..3).any(|k| (n as f64 * fractions[k]).floor() == 0.0);
                prop_assert!(empty, "only an empty part may fail");
            }
        }
    }

    #[test]
    fn extreme_effects_pin_the_label(seed in any::<u64>(), eps in 0.01f64..0.5) {
        let base = generate_ss(&small_vocab_cfg(200, 0.0, eps), seed).unwrap();
        let full = generate_ss(&small_vocab_cfg(200, 1.0, eps), seed).unwrap();
        prop_assert!(full.docs.iter().all(|d| d.label == d.treatment));
        // Base labels and treatments are drawn identically whatever tau is.
        for (a, b) in base.docs.iter().zip(&full.docs) {
            prop_assert_eq!(&a.tokens, &b.tokens);
            prop_assert_eq!(a.treatment, b.treatment);
        }
        prop_assert!(base.docs.iter().all(|d| d.confounder.is_some()));
    }

    #[test]
    fn overlap_rate_matches_eps(seed in any::<u64>(), eps in 0.02f64..0.5) {
        let n = 4000;
        let c = generate_ss(&small_vocab_cfg(n, 0.3, eps), seed).unwrap();
        let flips = c.docs.iter().filter(|d| Some(d.treatment) != d.confounder).count() as f64 / n as f64;
        // Five standard errors keeps the false-failure rate negligible over many cases.
        let se = (eps * (1.0 - eps) / n as f64).sqrt();
        prop_assert!((flips - eps).abs() < 5.0 * se, "rate {flips} vs {eps}");
    }

    #[test]
    fn jsonl_round_trip(docs in prop::collection::vec(document(), 0..12), tau in prop::option::of(0.0f64..1.0)) {
        let meta = match tau {
            Some(t) => CorpusMeta { true_tau: Some(t), overlap_eps: Some(0.05), generator: Generator::Ss, seed: 3 },
            None => CorpusMeta::external(),
        };
        let corpus = Corpus::new(docs, meta);
        let mut buf = Vec::new();
        write_jsonl(&corpus, &mut buf).unwrap();
        let back = read_jsonl(buf.as_slice()).unwrap();
        prop_assert_eq!(&back, &corpus);
        let mut again = Vec::new();
        write_jsonl(&back, &mut again).unwrap();
        prop_assert_eq!(again, buf);
    }

    #[test]
    fn prefix_counterfactual_is_an_involution(d in document()) {
        let once = apply_counterfactual(&d, &prefix()).unwrap();
        prop_assert_eq!(once.treatment, !d.treatment);
        prop_assert_eq!(once.label, d.label);
        prop_assert_eq!(once.tokens.len(), d.tokens.len());
        prop_assert_eq!(apply_counterfactual(&once, &prefix()).unwrap(), d);
    }

    #[test]
    fn presence_counterfactual_flips_state(mut tokens in prop::collection::vec(token(), 1..8), copies in 0usize..3) {
        for k in 0..copies {
            tokens.insert(k % tokens.len(), "kill".into());
        }
        let spec = FeatureSpec::presence(0, "kill");
        let d = Document::new(0, tokens, copies > 0, false);
        match apply_counterfactual(&d, &spec) {
            Ok(c) => {
                prop_assert_eq!(spec.state(&c).unwrap(), copies == 0);
                prop_assert_eq!(c.treatment, copies == 0);
                prop_assert!(!c.tokens.is_empty());
            }
            Err(_) => prop_assert!(d.tokens.iter().all(|t| t == "kill"), "only all-trigger documents may fail"),
        }
    }

    #[test]
    fn flips_follow_direction_and_count(seed in any::<u64>(), tau in -0.12f64..0.3) {
        let c = generate_ss(&small_vocab_cfg(600, 0.4, 0.1), 7).unwrap();
        let cf = flip_labels(&c, &prefix(), tau, seed, FlipRule::Consistent).unwrap();
        prop_assert_eq!(cf.len(), c.len());
        let positive = tau > 0.0;
        let mut up = 0usize;
        let mut down = 0usize;
        for ((src, dst), p) in c.docs.iter().zip(&cf.docs).zip(&cf.provenance) {
            prop_assert_eq!(dst.treatment, !src.treatment);
            prop_assert_eq!(p.flipped, src.label != dst.label);
            if p.flipped {
                // After the reduction only oriented 0->1 on untreated and 1->0 on treated flips exist.
                let oriented_t = src.treatment == positive;
                prop_assert_eq!(src.label, oriented_t);
                if oriented_t { down += 1 } else { up += 1 }
            }
        }
        // Exact counts: round(eta * N) with eta = |tau| / p.
        let orient = |d: &Document| d.treatment == positive;
        let n1 = c.docs.iter().filter(|d| orient(d)).count() as f64;
        let n11 = c.docs.iter().filter(|d| orient(d) && d.label).count() as f64;
        let n0 = c.docs.len() as f64 - n1;
        let n00 = c.docs.iter().filter(|d| !orient(d) && !d.label).count() as f64;
        if tau != 0.0 {
            let (p1, p2) = (n11 / n1, n00 / n0);
            prop_assert_eq!(up, (tau.abs() / p2 * n00).round() as usize);
            prop_assert_eq!(down, (tau.abs() / p1 * n11).round() as usize);
        } else {
            prop_assert_eq!(up + down, 0);
        }
    }

    #[test]
    fn augmented_size_is_features_times_n(m in 1usize..4, seed in any::<u64>()) {
        let c = generate_ss(&small_vocab_cfg(150, 0.4, 0.1), 1).unwrap();
        let specs = vec![prefix(); m];
        let taus = vec![0.1; m];
        let aug = build_augmented(&c, &specs, &taus, seed, FlipRule::Consistent).unwrap();
        prop_assert_eq!(aug.len(), m * c.len());
    }

    #[test]
    fn subsample_breaks_dependence(seed in any::<u64>(), tau in 0.1f64..0.9) {
        let c = generate_ss(&small_vocab_cfg(1500, tau, 0.1), seed).unwrap();
        let s = subsample_baseline(&c, seed).unwrap();
        let n = s.len() as f64;
        let p11 = s.docs.iter().filter(|d| d.treatment && d.label).count() as f64 / n;
        prop_assert!((p11 - s.treated_fraction() * s.positive_fraction()).abs() < 2.0 / n);
    }

    #[test]
    fn group_accuracies_recompose_total(seed in any::<u64>(), w in -3.0f64..3.0) {
        let c = generate_ss(&small_vocab_cfg(300, 0.5, 0.2), seed).unwrap();
        let cfg = small_train_cfg(0);
        let mut clf = Classifier::zeros(&cfg);
        let idx = cfg.featurizer.index_of("treated") as usize;
        clf.network_mut().set_param(idx, w);
        let m = group_metrics(&clf, &c, &prefix()).unwrap();
        let weighted: f64 = m.groups.iter().map(|g| g.n as f64 / m.n as f64 * g.acc.unwrap_or(0.0)).sum();
        prop_assert!((weighted - m.total).abs() < 1e-12);
        prop_assert!(m.groups.iter().filter_map(|g| g.acc).all(|a| (0.0..=1.0).contains(&a)));
        let present: Vec<f64> = m.groups.iter().filter_map(|g| g.acc).collect();
        prop_assert!((m.avg_group - present.iter().sum::<f64>() / present.len() as f64).abs() < 1e-15);
    }

    #[test]
    fn penalty_ignores_batch_order(seed in any::<u64>(), perm_seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let net = common::random_network(&mut rng, Mode::Mlp, 16, 1, 0.5);
        let n = 6;
        let inputs: Vec<_> = (0..n).map(|_| common::random_sparse(&mut rng, 16)).collect();
        let obj = RegularizedObjective {
            bce: BceObjective { inputs: inputs.clone(), targets: vec![true; n] },
            targets: vec![EffectTarget {
                treated: (0..n).map(|_| common::random_sparse(&mut rng, 16)).collect(),
                untreated: inputs,
                tau: 0.2,
            }],
            lambda: 3.0,
        };
        let idx: Vec<usize> = (0..n).collect();
        let mut shuffled = idx.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut common::rng(perm_seed));
        let a = obj.penalty(&net, &idx);
        let b = obj.penalty(&net, &shuffled);
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn zero_lambda_feag_is_erm(seed in any::<u64>(), mlp in any::<bool>()) {
        let c = generate_ss(&small_vocab_cfg(120, 0.5, 0.1), seed).unwrap();
        let cfg = TrainConfig {
            mode: if mlp { Mode::Mlp } else { Mode::Linear },
            hidden: 4,
            ..small_train_cfg(seed)
        };
        let aug = build_augmented(&c, &[prefix()], &[0.2], seed, FlipRule::Consistent).unwrap();
        let erm = train_classifier(&c, &cfg).unwrap();
        let feag = train_feag(&c, &aug, 0.0, &cfg).unwrap();
        prop_assert_eq!(erm.network().params(), feag.network().params());
    }
}
