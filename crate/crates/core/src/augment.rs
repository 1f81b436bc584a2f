//! Feature-effect augmentation: counterfactual corpora whose labels are
//! flipped so the conditional label shift equals a target effect, classifier
//! training under the augmented and regularized objectives, and the
//! Remove-Token and Subsample baselines.

use std::io::{BufWriter, Write};

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::corpus::{write_meta_line, Corpus, CorpusMeta, DocRecord, Document};
use crate::error::{Error, Result, ResultExt};
use crate::features::{apply_counterfactual, featurize, with_feature_forced, FeatureSpec};
use crate::models::objectives::{AugmentedObjective, BceObjective, EffectTarget, Objective, RegularizedObjective};
use crate::models::{classifier_objective, fit, train_classifier_with, with_holdout, Classifier, TrainConfig};
use crate::rng;

/// How the treated-to-untreated flip fraction is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipRule {
    /// `eta_1 = tau / p1`, which makes `P(Y^C = 1 | T = 1) = p1 - tau`.
    #[default]
    Consistent,
    /// `eta_1 = tau / p2`, the fraction as literally written in the original
    /// derivation.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub src_doc_id: usize,
    pub feature_id: usize,
    pub flipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualCorpus {
    /// Edited inputs `Z^C` carrying their assigned labels `Y^C`.
    pub docs: Vec<Document>,
    pub provenance: Vec<Provenance>,
    /// `(feature_id, tau)` for each feature that contributed.
    pub taus: Vec<(usize, f64)>,
}

impl CounterfactualCorpus {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn n_flipped(&self) -> usize {
        self.provenance.iter().filter(|p| p.flipped).count()
    }

    pub fn as_corpus(&self) -> Corpus {
        Corpus::new(self.docs.clone(), CorpusMeta::external())
    }

    /// Same JSONL schema as a corpus plus `src_doc_id`, `flipped` and
    /// `feature_id` on every document line.
    pub fn write_jsonl(&self, out: impl Write) -> Result<()> {
        #[derive(Serialize)]
        struct Line<'a> {
            #[serde(flatten)]
            doc: DocRecord<'a>,
            src_doc_id: usize,
            flipped: bool,
            feature_id: usize,
        }
        let mut out = BufWriter::new(out);
        write_meta_line(&mut out, &CorpusMeta::external())?;
        for (d, p) in self.docs.iter().zip(&self.provenance) {
            let line = Line {
                doc: DocRecord::from(d),
                src_doc_id: p.src_doc_id,
                flipped: p.flipped,
                feature_id: p.feature_id,
            };
            serde_json::to_writer(&mut out, &line).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Conditional rates `p1 = P(Y=1 | T=1)` and `p2 = P(Y=0 | T=0)`.
pub fn conditional_rates(states: &[bool], labels: &[bool]) -> Option<(f64, f64)> {
    let (mut n1, mut y1, mut n0, mut y0) = (0usize, 0usize, 0usize, 0usize);
    for (&t, &y) in states.iter().zip(labels) {
        if t {
            n1 += 1;
            y1 += usize::from(y);
        } else {
            n0 += 1;
            y0 += usize::from(!y);
        }
    }
    (n1 > 0 && n0 > 0).then(|| (y1 as f64 / n1 as f64, y0 as f64 / n0 as f64))
}

/// Builds the counterfactual corpus for one feature.
///
/// For `tau >= 0`: untreated documents become treated, keep `Y = 1` and
/// flip exactly `round(tau / p2 * N00)` of their `Y = 0` labels to 1;
/// treated documents become untreated, keep `Y = 0` and flip
/// `round(eta1 * N11)` of their `Y = 1` labels to 0. A negative `tau` runs
/// the same procedure with the treatment reversed.
pub fn flip_labels(
    corpus: &Corpus,
    spec: &FeatureSpec,
    tau: f64,
    seed: u64,
    rule: FlipRule,
) -> Result<CounterfactualCorpus> {
    if !tau.is_finite() {
        return Err(Error::config("tau", "must be finite"));
    }
    let states = corpus
        .docs
        .iter()
        .map(|d| spec.state(d))
        .collect::<Result<Vec<bool>>>()?;
    let labels: Vec<bool> = corpus.docs.iter().map(|d| d.label).collect();
    // Reduction for negative effects: T' = 1 - T.
    let reversed = tau < 0.0;
    let tau_abs = tau.abs();
    let oriented: Vec<bool> = states.iter().map(|&s| s != reversed).collect();
    let (p1, p2) = conditional_rates(&oriented, &labels)
        .ok_or_else(|| Error::Degenerate(format!("both treatment values required to flip labels for {spec}")))?;
    let eta0 = if tau_abs == 0.0 { 0.0 } else { tau_abs / p2 };
    let eta1 = match (tau_abs == 0.0, rule) {
        (true, _) => 0.0,
        (false, FlipRule::Consistent) => tau_abs / p1,
        (false, FlipRule::Literal) => tau_abs / p2,
    };
    for eta in [eta0, eta1] {
        if !(eta <= 1.0) {
            return Err(Error::Infeasible { tau, p1, p2, eta });
        }
    }
    // Candidates: oriented-untreated with Y=0 flip 0->1; oriented-treated with Y=1 flip 1->0.
    let pick = |want_t: bool, want_y: bool, eta: f64, stream: u64| -> Vec<usize> {
        let mut cand: Vec<usize> = (0..labels.len())
            .filter(|&i| oriented[i] == want_t && labels[i] == want_y)
            .collect();
        let k = (eta * cand.len() as f64).round() as usize;
        cand.shuffle(&mut rng::stream(seed, rng::STREAM_FLIP, stream));
        cand.truncate(k.min(cand.len()));
        cand
    };
    let mut flip = vec![false; labels.len()];
    for i in pick(false, false, eta0, 0).into_iter().chain(pick(true, true, eta1, 1)) {
        flip[i] = true;
    }
    let mut docs = Vec::with_capacity(corpus.len());
    let mut provenance = Vec::with_capacity(corpus.len());
    for (i, d) in corpus.docs.iter().enumerate() {
        let mut c = apply_counterfactual(d, spec)?;
        c.doc_id = i;
        c.label = d.label != flip[i];
        docs.push(c);
        provenance.push(Provenance {
            src_doc_id: d.doc_id,
            feature_id: spec.feature_id,
            flipped: flip[i],
        });
    }
    Ok(CounterfactualCorpus {
        docs,
        provenance,
        taus: vec![(spec.feature_id, tau)],
    })
}

/// Union of the per-feature counterfactual corpora.
pub fn build_augmented(
    corpus: &Corpus,
    specs: &[FeatureSpec],
    taus: &[f64],
    seed: u64,
    rule: FlipRule,
) -> Result<CounterfactualCorpus> {
    if specs.is_empty() || specs.len() != taus.len() {
        return Err(Error::config(
            "taus",
            format!(
                "need one tau per feature ({} features, {} taus)",
                specs.len(),
                taus.len()
            ),
        ));
    }
    let mut out = CounterfactualCorpus {
        docs: Vec::new(),
        provenance: Vec::new(),
        taus: Vec::new(),
    };
    for (j, (spec, &tau)) in specs.iter().zip(taus).enumerate() {
        let part = flip_labels(corpus, spec, tau, rng::derive(seed, rng::STREAM_FLIP, j as u64), rule)
            .context_with(|| format!("feature {}", spec.feature_id))?;
        out.docs.extend(part.docs);
        out.provenance.extend(part.provenance);
        out.taus.extend(part.taus);
    }
    for (i, d) in out.docs.iter_mut().enumerate() {
        d.doc_id = i;
    }
    Ok(out)
}

/// Minimizes `E_D[BCE] + lambda * E_{D^C}[BCE]`.
pub fn train_feag(train: &Corpus, aug: &CounterfactualCorpus, lambda: f64, cfg: &TrainConfig) -> Result<Classifier> {
    if !(lambda >= 0.0) {
        return Err(Error::config("lambda", format!("must be non-negative, got {lambda}")));
    }
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Degenerate("training corpus is empty".into()));
    }
    let mut model = Classifier::zeros(cfg);
    let (fit_set, valid) = with_holdout(train, cfg)?;
    let originals = classifier_objective(&fit_set, &model);
    let valid = valid.map(|v| classifier_objective(&v, &model));
    let augmented = BceObjective {
        inputs: aug.docs.iter().map(|d| model.input(d)).collect(),
        targets: aug.docs.iter().map(|d| d.label).collect(),
    };
    let mut obj = AugmentedObjective::new(originals, augmented, lambda, cfg.seed);
    fit(
        &mut model.net,
        &mut obj,
        cfg,
        valid.as_ref().map(|v| v as &dyn Objective),
    )?;
    Ok(model)
}

/// Minimizes BCE plus `lambda / m * sum_j (batch effect_j - tau_j)^2`.
pub fn train_regularized(
    train: &Corpus,
    specs: &[FeatureSpec],
    taus: &[f64],
    lambda: f64,
    cfg: &TrainConfig,
) -> Result<Classifier> {
    if specs.is_empty() || specs.len() != taus.len() {
        return Err(Error::config(
            "taus",
            format!(
                "need one tau per feature ({} features, {} taus)",
                specs.len(),
                taus.len()
            ),
        ));
    }
    if !(lambda >= 0.0) {
        return Err(Error::config("lambda", format!("must be non-negative, got {lambda}")));
    }
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Degenerate("training corpus is empty".into()));
    }
    let mut model = Classifier::zeros(cfg);
    let (fit_set, valid) = with_holdout(train, cfg)?;
    let mut obj = regularized_objective(&fit_set, specs, taus, lambda, cfg)?;
    let valid = valid.map(|v| classifier_objective(&v, &model));
    fit(
        &mut model.net,
        &mut obj,
        cfg,
        valid.as_ref().map(|v| v as &dyn Objective),
    )?;
    Ok(model)
}

pub fn regularized_objective(
    train: &Corpus,
    specs: &[FeatureSpec],
    taus: &[f64],
    lambda: f64,
    cfg: &TrainConfig,
) -> Result<RegularizedObjective> {
    let bce = classifier_objective(train, &Classifier::zeros(cfg));
    let targets = specs
        .iter()
        .zip(taus)
        .map(|(spec, &tau)| {
            let mut treated = Vec::with_capacity(train.len());
            let mut untreated = Vec::with_capacity(train.len());
            for d in &train.docs {
                treated.push(featurize(&with_feature_forced(d, spec, true)?, &cfg.featurizer));
                untreated.push(featurize(&with_feature_forced(d, spec, false)?, &cfg.featurizer));
            }
            Ok(EffectTarget {
                treated,
                untreated,
                tau,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RegularizedObjective { bce, targets, lambda })
}

/// ERM on inputs with the feature's tokens removed. The returned classifier
/// strips the same tokens at prediction time.
pub fn remove_token_baseline(train: &Corpus, spec: &FeatureSpec, cfg: &TrainConfig) -> Result<Classifier> {
    train_classifier_with(train, cfg, Some(spec.clone()))
}

/// Subsamples each `(Y, T)` cell so that `T` and `Y` become independent while
/// the marginals `P(T = 1)` and `P(Y = 1)` are kept.
pub fn subsample_baseline(corpus: &Corpus, seed: u64) -> Result<Corpus> {
    let n = corpus.len() as f64;
    let mut cells: [Vec<usize>; 4] = Default::default();
    for (i, d) in corpus.docs.iter().enumerate() {
        cells[usize::from(d.label) * 2 + usize::from(d.treatment)].push(i);
    }
    if let Some(k) = cells.iter().position(Vec::is_empty) {
        return Err(Error::Degenerate(format!(
            "cannot subsample: group {} (Y={}, T={}) is empty",
            k + 1,
            k / 2,
            k % 2
        )));
    }
    let p_t = (cells[1].len() + cells[3].len()) as f64 / n;
    let p_y = (cells[2].len() + cells[3].len()) as f64 / n;
    let share = |k: usize| {
        let py = if k / 2 == 1 { p_y } else { 1.0 - p_y };
        let pt = if k % 2 == 1 { p_t } else { 1.0 - p_t };
        py * pt
    };
    // Largest total that every cell can supply under independence.
    let total = (0..4)
        .map(|k| cells[k].len() as f64 / share(k))
        .fold(f64::INFINITY, f64::min);
    let mut keep = Vec::new();
    for (k, cell) in cells.iter_mut().enumerate() {
        let target = ((total * share(k)).round() as usize).min(cell.len());
        cell.shuffle(&mut rng::stream(seed, rng::STREAM_SUBSAMPLE, k as u64));
        keep.extend_from_slice(&cell[..target]);
    }
    keep.sort_unstable();
    Ok(Corpus::new(
        keep.into_iter().map(|i| corpus.docs[i].clone()).collect(),
        corpus.meta.clone(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_ss, GenConfigSS, Vocab};

    fn spec() -> FeatureSpec {
        FeatureSpec::prefix_pair(0, "treated", "untreated")
    }

    fn corpus(n: usize, tau: f64) -> Corpus {
        let mut cfg = GenConfigSS::new(n, tau, 0.05);
        cfg.covariates.vocab = Vocab::synthetic(30, 30);
        generate_ss(&cfg, 1).unwrap()
    }

    #[test]
    fn zero_tau_flips_nothing() {
        let c = corpus(500, 0.5);
        let cf = flip_labels(&c, &spec(), 0.0, 0, FlipRule::Consistent).unwrap();
        assert_eq!(cf.n_flipped(), 0);
        for (a, b) in c.docs.iter().zip(&cf.docs) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.treatment, !b.treatment);
        }
    }

    #[test]
    fn flip_counts_and_directions() {
        let c = corpus(2000, 0.3);
        let cf = flip_labels(&c, &spec(), 0.2, 4, FlipRule::Consistent).unwrap();
        let states: Vec<bool> = c.docs.iter().map(|d| d.treatment).collect();
        let labels: Vec<bool> = c.docs.iter().map(|d| d.label).collect();
        let (p1, p2) = conditional_rates(&states, &labels).unwrap();
        let n00 = c.docs.iter().filter(|d| !d.treatment && !d.label).count();
        let n11 = c.docs.iter().filter(|d| d.treatment && d.label).count();
        let up = cf
            .provenance
            .iter()
            .zip(&c.docs)
            .filter(|(p, d)| p.flipped && !d.treatment)
            .count();
        let down = cf
            .provenance
            .iter()
            .zip(&c.docs)
            .filter(|(p, d)| p.flipped && d.treatment)
            .count();
        assert_eq!(up, (0.2 / p2 * n00 as f64).round() as usize);
        assert_eq!(down, (0.2 / p1 * n11 as f64).round() as usize);
        for ((p, src), dst) in cf.provenance.iter().zip(&c.docs).zip(&cf.docs) {
            if p.flipped {
                assert_eq!(src.label, src.treatment, "flips only 0->1 untreated, 1->0 treated");
                assert_ne!(src.label, dst.label);
            }
        }
    }

    #[test]
    fn negative_tau_reverses_direction() {
        let c = corpus(2000, 0.3);
        let cf = flip_labels(&c, &spec(), -0.1, 4, FlipRule::Consistent).unwrap();
        assert!(cf.n_flipped() > 0);
        for (p, src) in cf.provenance.iter().zip(&c.docs) {
            if p.flipped {
                // untreated docs with Y=1 go down, treated docs with Y=0 go up
                assert_ne!(src.label, src.treatment);
            }
        }
    }

    #[test]
    fn eta_example() {
        // p2 = 0.6 -> eta0 = 0.3 / 0.6 = 0.5
        let mut docs = Vec::new();
        for i in 0..10 {
            docs.push(Document::new(0, vec!["untreated".into(), "x".into()], false, i >= 6));
            docs.push(Document::new(0, vec!["treated".into(), "x".into()], true, true));
        }
        let c = Corpus::new(docs, CorpusMeta::external());
        let cf = flip_labels(&c, &spec(), 0.3, 0, FlipRule::Consistent).unwrap();
        let up = cf
            .provenance
            .iter()
            .zip(&c.docs)
            .filter(|(p, d)| p.flipped && !d.treatment)
            .count();
        assert_eq!(up, 3); // round(0.5 * 6)
    }

    #[test]
    fn infeasible_tau_is_an_error() {
        let c = corpus(1000, 0.0);
        match flip_labels(&c, &spec(), 0.95, 0, FlipRule::Consistent) {
            Err(Error::Infeasible { tau, eta, .. }) => {
                assert_eq!(tau, 0.95);
                assert!(eta > 1.0);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn literal_rule_uses_p2_for_both_directions() {
        let c = corpus(3000, 0.5);
        let a = flip_labels(&c, &spec(), 0.2, 1, FlipRule::Consistent).unwrap();
        let b = flip_labels(&c, &spec(), 0.2, 1, FlipRule::Literal).unwrap();
        assert_ne!(a.n_flipped(), b.n_flipped());
    }

    #[test]
    fn augmented_union() {
        let c = corpus(300, 0.3);
        let single = flip_labels(
            &c,
            &spec(),
            0.2,
            rng::derive(9, rng::STREAM_FLIP, 0),
            FlipRule::Consistent,
        )
        .unwrap();
        let union = build_augmented(&c, &[spec()], &[0.2], 9, FlipRule::Consistent).unwrap();
        assert_eq!(single, union);
        let twice = build_augmented(&c, &[spec(), spec()], &[0.2, 0.2], 9, FlipRule::Consistent).unwrap();
        assert_eq!(twice.len(), 600);
        let logs = |r: std::ops::Range<usize>| twice.provenance[r].iter().map(|p| p.flipped).collect::<Vec<_>>();
        assert_ne!(logs(0..300), logs(300..600));
        assert!(build_augmented(&c, &[spec()], &[0.1, 0.2], 0, FlipRule::Consistent).is_err());
    }

    #[test]
    fn subsample_enforces_independence() {
        let c = corpus(4000, 0.5);
        let s = subsample_baseline(&c, 3).unwrap();
        let n = s.len() as f64;
        let p11 = s.docs.iter().filter(|d| d.treatment && d.label).count() as f64 / n;
        let gap = (p11 - s.treated_fraction() * s.positive_fraction()).abs();
        assert!(gap < 2.0 / n, "gap {gap}, n {n}");
        assert!((s.treated_fraction() - c.treated_fraction()).abs() < 0.02);
        assert!((s.positive_fraction() - c.positive_fraction()).abs() < 0.02);
    }

    #[test]
    fn subsample_keeps_independent_corpus() {
        // 4 cells in exact product proportions: 30/20/30/20 (P(T)=0.4, P(Y)=0.5).
        let mut docs = Vec::new();
        for (y, t, count) in [
            (false, false, 30),
            (false, true, 20),
            (true, false, 30),
            (true, true, 20),
        ] {
            for _ in 0..count {
                docs.push(Document::new(0, vec!["a".into()], t, y));
            }
        }
        let c = Corpus::new(docs, CorpusMeta::external());
        assert_eq!(subsample_baseline(&c, 0).unwrap().len(), 100);
    }

    #[test]
    fn subsample_empty_cell_is_an_error() {
        let docs = vec![Document::new(0, vec!["a".into()], true, true)];
        let c = Corpus::new(docs, CorpusMeta::external());
        assert!(subsample_baseline(&c, 0).is_err());
    }

    #[test]
    fn counterfactual_jsonl_has_provenance() {
        let c = corpus(3, 0.3);
        let cf = flip_labels(&c, &spec(), 0.0, 0, FlipRule::Consistent).unwrap();
        let mut buf = Vec::new();
        cf.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let line = text.lines().nth(1).unwrap();
        assert!(line.contains("\"src_doc_id\":0"));
        assert!(line.contains("\"flipped\":false"));
        assert!(line.contains("\"feature_id\":0"));
        let back = crate::corpus::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back.docs, cf.docs);
    }
}
