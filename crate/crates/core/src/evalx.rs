//! Group-wise accuracy, learned effects of trained classifiers and the
//! token bias scan.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::Corpus;
use crate::error::{Error, Result, ResultExt};
use crate::estimators::{ate_direct, estimate_feature_effect, EffectEstimates, EstimateConfig};
use crate::features::{FeatureSpec, GroupId};
use crate::models::{Classifier, OutcomeModel};

pub const DEFAULT_MIN_COUNT: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRow {
    pub group: String,
    pub label: u8,
    pub treatment: u8,
    pub n: usize,
    pub correct: usize,
    /// `None` when the group is empty.
    pub acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupMetrics {
    pub groups: Vec<GroupRow>,
    pub n: usize,
    pub total: f64,
    /// Unweighted mean over the non-empty groups.
    pub avg_group: f64,
    pub learned_effect: f64,
    pub warnings: Vec<String>,
}

impl GroupMetrics {
    pub fn acc(&self, group: GroupId) -> Option<f64> {
        self.groups[group.index()].acc
    }

    pub fn n_per_group(&self) -> [usize; 4] {
        [0, 1, 2, 3].map(|i| self.groups[i].n)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Stream(e.into()))
    }

    /// Accuracies as percentages, effect as a percentage point difference.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<8} {:>3} {:>3} {:>8} {:>8}", "group", "Y", "T", "n", "acc%");
        for g in &self.groups {
            let acc = g.acc.map_or_else(|| "-".to_string(), |a| format!("{:.2}", 100.0 * a));
            let _ = writeln!(
                s,
                "{:<8} {:>3} {:>3} {:>8} {:>8}",
                g.group, g.label, g.treatment, g.n, acc
            );
        }
        let _ = writeln!(s, "total accuracy (x100): {:.2}", 100.0 * self.total);
        let _ = writeln!(s, "average group accuracy (x100): {:.2}", 100.0 * self.avg_group);
        let _ = writeln!(s, "learned effect (x100): {:.2}", 100.0 * self.learned_effect);
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["group", "label", "treatment", "n", "correct", "acc"])?;
        for g in &self.groups {
            w.write_record([
                g.group.clone(),
                g.label.to_string(),
                g.treatment.to_string(),
                g.n.to_string(),
                g.correct.to_string(),
                g.acc.map_or_else(String::new, |a| a.to_string()),
            ])?;
        }
        for (name, v) in [
            ("total", self.total),
            ("avg_group", self.avg_group),
            ("learned_effect", self.learned_effect),
        ] {
            w.write_record([name, "", "", &self.n.to_string(), "", &v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The direct estimate applied to a trained classifier.
pub fn learned_effect<F: OutcomeModel + ?Sized>(classifier: &F, test: &Corpus, spec: &FeatureSpec) -> Result<f64> {
    ate_direct(classifier, test, spec)
}

/// Accuracy per `(Y, T)` group with `T` read from the feature, thresholding
/// at 0.5 (ties predict 0).
pub fn group_metrics(classifier: &Classifier, test: &Corpus, spec: &FeatureSpec) -> Result<GroupMetrics> {
    if test.is_empty() {
        return Err(Error::Degenerate("evaluation corpus is empty".into()));
    }
    let mut n = [0usize; 4];
    let mut correct = [0usize; 4];
    for d in &test.docs {
        let g = GroupId::new(d.label, spec.state(d)?).index();
        n[g] += 1;
        correct[g] += usize::from(classifier.predict(d) == d.label);
    }
    let mut warnings = Vec::new();
    let groups: Vec<GroupRow> = GroupId::ALL
        .iter()
        .enumerate()
        .map(|(i, g)| {
            if n[i] == 0 {
                warnings.push(format!("{g} is empty and excluded from the average"));
            }
            GroupRow {
                group: g.to_string(),
                label: (i / 2) as u8,
                treatment: (i % 2) as u8,
                n: n[i],
                correct: correct[i],
                acc: (n[i] > 0).then(|| correct[i] as f64 / n[i] as f64),
            }
        })
        .collect();
    let present: Vec<f64> = groups.iter().filter_map(|g| g.acc).collect();
    Ok(GroupMetrics {
        n: test.len(),
        total: correct.iter().sum::<usize>() as f64 / test.len() as f64,
        avg_group: present.iter().sum::<f64>() / present.len() as f64,
        learned_effect: learned_effect(classifier, test, spec)?,
        groups,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasRow {
    pub token: String,
    pub riesz_dr_effect: f64,
    pub direct_effect: f64,
    pub propensity_dr_effect: f64,
    pub p_y_given_t1: f64,
    pub n_treated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedToken {
    pub token: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasReport {
    /// Sorted by `|riesz_dr_effect|`, largest first.
    pub rows: Vec<BiasRow>,
    pub skipped: Vec<SkippedToken>,
    pub base_rate: f64,
}

impl BiasReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Stream(e.into()))
    }

    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.token.len()).max().unwrap_or(5).max(5);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "effects and probabilities x100; base rate P(Y=1) = {:.2}",
            100.0 * self.base_rate
        );
        let _ = writeln!(
            s,
            "{:<width$} {:>10} {:>10} {:>10} {:>10} {:>9}",
            "token", "riesz_dr", "direct", "prop_dr", "P(Y|T=1)", "n_treated"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<width$} {:>10.2} {:>10.2} {:>10.2} {:>10.2} {:>9}",
                r.token,
                100.0 * r.riesz_dr_effect,
                100.0 * r.direct_effect,
                100.0 * r.propensity_dr_effect,
                100.0 * r.p_y_given_t1,
                r.n_treated
            );
        }
        for k in &self.skipped {
            let _ = writeln!(s, "skipped {}: {}", k.token, k.reason);
        }
        s
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "token",
            "riesz_dr_effect",
            "direct_effect",
            "propensity_dr_effect",
            "p_y_given_t1",
            "n_treated",
            "skipped_reason",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.token.clone(),
                r.riesz_dr_effect.to_string(),
                r.direct_effect.to_string(),
                r.propensity_dr_effect.to_string(),
                r.p_y_given_t1.to_string(),
                r.n_treated.to_string(),
                String::new(),
            ])?;
        }
        for k in &self.skipped {
            w.write_record([&k.token, "", "", "", "", "", &k.reason])?;
        }
        w.flush()?;
        Ok(())
    }
}

enum ScanOutcome {
    Row(BiasRow),
    Skip(SkippedToken),
}

/// Estimates each token's effect as a presence feature and sets it beside
/// the naive `P(Y = 1 | token present)`.
pub fn bias_scan(
    corpus: &Corpus,
    tokens: &[String],
    cfg: &EstimateConfig,
    seeds: &[u64],
    min_count: usize,
) -> Result<BiasReport> {
    let base_rate = corpus.positive_fraction();
    let outcomes = tokens
        .par_iter()
        .enumerate()
        .map(|(j, token)| {
            scan_token(corpus, j, token, cfg, seeds, min_count).context_with(|| format!("token {token:?}"))
        })
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o? {
            ScanOutcome::Row(r) => rows.push(r),
            ScanOutcome::Skip(s) => skipped.push(s),
        }
    }
    rows.sort_by(|a, b| b.riesz_dr_effect.abs().total_cmp(&a.riesz_dr_effect.abs()));
    Ok(BiasReport {
        rows,
        skipped,
        base_rate,
    })
}

fn scan_token(
    corpus: &Corpus,
    j: usize,
    token: &str,
    cfg: &EstimateConfig,
    seeds: &[u64],
    min_count: usize,
) -> Result<ScanOutcome> {
    let skip = |reason: String| {
        Ok(ScanOutcome::Skip(SkippedToken {
            token: token.to_string(),
            reason,
        }))
    };
    let (mut n_treated, mut positive) = (0usize, 0usize);
    for d in &corpus.docs {
        if d.tokens.iter().any(|t| t == token) {
            n_treated += 1;
            positive += usize::from(d.label);
        }
    }
    if n_treated < min_count {
        return skip(format!("occurs in {n_treated} documents, fewer than {min_count}"));
    }
    if n_treated == corpus.len() {
        return skip("occurs in every document".into());
    }
    let spec = FeatureSpec::presence(j, token);
    let est: EffectEstimates = estimate_feature_effect(corpus, &spec, cfg, seeds)?;
    Ok(ScanOutcome::Row(BiasRow {
        token: token.to_string(),
        riesz_dr_effect: est.dr_riesz.value,
        direct_effect: est.direct.value,
        propensity_dr_effect: est.dr_propensity.value,
        p_y_given_t1: positive as f64 / n_treated as f64,
        n_treated,
    }))
}
