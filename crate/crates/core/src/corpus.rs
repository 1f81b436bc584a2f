//! Documents, corpora, the synthetic generators with known causal structure,
//! the JSONL corpus format and seeded splitting.
//!
//! The semi-synthetic generator follows the causal graph
//! `W -> X`, `W -> T`, `W -> Y`, `(Y, T) -> Y'`: a binary confounder `W` is
//! drawn first, covariate tokens are drawn from a pool that indicates `W`,
//! the treatment copies `W` with an `eps` fraction flipped (overlap), and the
//! observed label is `Y' ~ Bernoulli((1 - tau) Y + tau T)`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::rng;

/// One example `Z = (X, T)` with its label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: usize,
    pub tokens: Vec<String>,
    pub treatment: bool,
    pub label: bool,
    pub confounder: Option<bool>,
}

impl Document {
    pub fn new(doc_id: usize, tokens: Vec<String>, treatment: bool, label: bool) -> Self {
        Document {
            doc_id,
            tokens,
            treatment,
            label,
            confounder: None,
        }
    }

    pub fn with_confounder(mut self, w: bool) -> Self {
        self.confounder = Some(w);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Ss,
    Subsampled,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMeta {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub true_tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub overlap_eps: Option<f64>,
    pub generator: Generator,
    pub seed: u64,
}

impl CorpusMeta {
    pub fn external() -> Self {
        CorpusMeta {
            true_tau: None,
            overlap_eps: None,
            generator: Generator::External,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub docs: Vec<Document>,
    pub meta: CorpusMeta,
}

impl Corpus {
    /// Builds a corpus, renumbering doc ids densely in order.
    pub fn new(docs: Vec<Document>, meta: CorpusMeta) -> Self {
        let mut corpus = Corpus { docs, meta };
        corpus.renumber();
        corpus
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub(crate) fn renumber(&mut self) {
        for (i, d) in self.docs.iter_mut().enumerate() {
            d.doc_id = i;
        }
    }

    /// Checks the document and corpus invariants.
    pub fn validate(&self) -> Result<()> {
        for (i, d) in self.docs.iter().enumerate() {
            if d.doc_id != i {
                return Err(Error::Schema {
                    line: i + 2,
                    message: format!("doc_id {} is not dense (expected {i})", d.doc_id),
                });
            }
            if d.tokens.is_empty() {
                return Err(Error::Schema {
                    line: i + 2,
                    message: "document has no tokens".into(),
                });
            }
        }
        let external = self.meta.generator == Generator::External;
        if external == self.meta.true_tau.is_some() {
            return Err(Error::config(
                "meta.true_tau",
                "must be present exactly when the generator is not external",
            ));
        }
        Ok(())
    }

    pub fn treated_fraction(&self) -> f64 {
        if self.docs.is_empty() {
            return 0.0;
        }
        self.docs.iter().filter(|d| d.treatment).count() as f64 / self.docs.len() as f64
    }

    pub fn positive_fraction(&self) -> f64 {
        if self.docs.is_empty() {
            return 0.0;
        }
        self.docs.iter().filter(|d| d.label).count() as f64 / self.docs.len() as f64
    }
}

/// Token pools for the synthetic generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    pub w1_pool: Vec<String>,
    pub w0_pool: Vec<String>,
    pub neutral_pool: Vec<String>,
    pub treated_token: String,
    pub untreated_token: String,
}

impl Vocab {
    /// Synthetic pools named `pos*`, `neg*` and `neu*`.
    pub fn synthetic(pool_size: usize, neutral_size: usize) -> Self {
        Vocab {
            w1_pool: (0..pool_size).map(|i| format!("pos{i}")).collect(),
            w0_pool: (0..pool_size).map(|i| format!("neg{i}")).collect(),
            neutral_pool: (0..neutral_size).map(|i| format!("neu{i}")).collect(),
            treated_token: "treated".into(),
            untreated_token: "untreated".into(),
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, pool) in [
            ("vocab.w1_pool", &self.w1_pool),
            ("vocab.w0_pool", &self.w0_pool),
            ("vocab.neutral_pool", &self.neutral_pool),
        ] {
            if pool.is_empty() {
                return Err(Error::config(name, "must not be empty"));
            }
        }
        let mut seen = HashSet::new();
        for tok in self.w1_pool.iter().chain(&self.w0_pool).chain(&self.neutral_pool) {
            if !seen.insert(tok.as_str()) {
                return Err(Error::config(
                    "vocab",
                    format!("pools must be pairwise disjoint (token {tok:?} repeats)"),
                ));
            }
        }
        for (name, tok) in [
            ("vocab.treated_token", &self.treated_token),
            ("vocab.untreated_token", &self.untreated_token),
        ] {
            if seen.contains(tok.as_str()) {
                return Err(Error::config(name, format!("{tok:?} appears in a pool")));
            }
        }
        if self.treated_token == self.untreated_token {
            return Err(Error::config("vocab.untreated_token", "must differ from treated_token"));
        }
        Ok(())
    }

    fn contains(&self, tok: &str) -> bool {
        tok == self.treated_token
            || tok == self.untreated_token
            || self.w1_pool.iter().any(|t| t == tok)
            || self.w0_pool.iter().any(|t| t == tok)
            || self.neutral_pool.iter().any(|t| t == tok)
    }
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab::synthetic(DEFAULT_POOL_SIZE, DEFAULT_NEUTRAL_SIZE)
    }
}

pub const DEFAULT_POOL_SIZE: usize = 400;
pub const DEFAULT_NEUTRAL_SIZE: usize = 400;

/// Covariate-text settings shared by both generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateConfig {
    /// Probability that a covariate token is drawn from the pool matching `W`.
    pub signal_strength: f64,
    /// `P(Y = W)` for the base label.
    pub base_label_acc: f64,
    pub tokens_per_doc: usize,
    pub vocab: Vocab,
}

impl Default for CovariateConfig {
    fn default() -> Self {
        CovariateConfig {
            signal_strength: 0.6,
            base_label_acc: 0.78,
            tokens_per_doc: 12,
            vocab: Vocab::default(),
        }
    }
}

impl CovariateConfig {
    fn validate(&self) -> Result<()> {
        if !(self.signal_strength > 0.5 && self.signal_strength <= 1.0) {
            return Err(Error::config(
                "signal_strength",
                format!("must lie in (0.5, 1], got {}", self.signal_strength),
            ));
        }
        if !(self.base_label_acc > 0.5 && self.base_label_acc <= 1.0) {
            return Err(Error::config(
                "base_label_acc",
                format!("must lie in (0.5, 1], got {}", self.base_label_acc),
            ));
        }
        if self.tokens_per_doc == 0 {
            return Err(Error::config("tokens_per_doc", "must be at least 1"));
        }
        self.vocab.validate()
    }

    /// Draws `(W, covariate tokens, base label)`.
    fn draw(&self, rng: &mut impl Rng) -> (bool, Vec<String>, bool) {
        let w = rng.gen_bool(0.5);
        let pool = if w { &self.vocab.w1_pool } else { &self.vocab.w0_pool };
        let tokens = (0..self.tokens_per_doc)
            .map(|_| {
                let src = if rng.gen_bool(self.signal_strength) {
                    pool
                } else {
                    &self.vocab.neutral_pool
                };
                src[rng.gen_range(0..src.len())].clone()
            })
            .collect();
        let base_y = if rng.gen_bool(self.base_label_acc) { w } else { !w };
        (w, tokens, base_y)
    }
}

/// A token with no connection to the treatment that appears with a
/// `W`-dependent probability and adds `effect` to `P(Y' = 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedToken {
    pub token: String,
    pub p_w1: f64,
    pub p_w0: f64,
    pub effect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfigSS {
    pub n: usize,
    pub tau: f64,
    pub eps: f64,
    #[serde(flatten)]
    pub covariates: CovariateConfig,
    #[serde(default)]
    pub planted: Vec<PlantedToken>,
}

impl GenConfigSS {
    pub fn new(n: usize, tau: f64, eps: f64) -> Self {
        GenConfigSS {
            n,
            tau,
            eps,
            covariates: CovariateConfig::default(),
            planted: Vec::new(),
        }
    }

    /// The one-covariate generator: a single token per document that names
    /// `W`, and `P(T = 1 | W) = 1 - eps` / `eps`. With `eps = 0.2` the
    /// multipliers take the values `{5, -1.25, 1.25, -5}`.
    pub fn enumerable(n: usize, tau: f64, eps: f64) -> Self {
        let vocab = Vocab {
            w1_pool: vec!["w1".into()],
            w0_pool: vec!["w0".into()],
            neutral_pool: vec!["neutral".into()],
            treated_token: "treated".into(),
            untreated_token: "untreated".into(),
        };
        GenConfigSS {
            n,
            tau,
            eps,
            covariates: CovariateConfig {
                signal_strength: 1.0,
                base_label_acc: 0.78,
                tokens_per_doc: 1,
                vocab,
            },
            planted: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::config("tau", format!("must lie in [0, 1], got {}", self.tau)));
        }
        if !(self.eps > 0.0 && self.eps <= 0.5) {
            return Err(Error::config("eps", format!("must lie in (0, 0.5], got {}", self.eps)));
        }
        self.covariates.validate()?;
        let mut total_effect = self.tau;
        for (k, p) in self.planted.iter().enumerate() {
            let field = |f: &str| format!("planted[{k}].{f}");
            if self.covariates.vocab.contains(&p.token) {
                return Err(Error::config(
                    field("token"),
                    format!("{:?} collides with the generator vocabulary", p.token),
                ));
            }
            if self.planted[..k].iter().any(|q| q.token == p.token) {
                return Err(Error::config(field("token"), "duplicate planted token"));
            }
            for (name, v) in [("p_w1", p.p_w1), ("p_w0", p.p_w0), ("effect", p.effect)] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::config(field(name), format!("must lie in [0, 1], got {v}")));
                }
            }
            total_effect += p.effect;
        }
        if total_effect > 1.0 + 1e-12 {
            return Err(Error::config(
                "planted",
                format!("tau plus planted effects must not exceed 1, got {total_effect}"),
            ));
        }
        Ok(())
    }

    /// Weight of the base label in the outcome mixture.
    pub(crate) fn base_weight(&self) -> f64 {
        1.0 - self.tau - self.planted.iter().map(|p| p.effect).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfigSub {
    pub n_raw: usize,
    pub tau: f64,
    pub trigger_token: String,
    pub p_trigger_w1: f64,
    pub p_trigger_w0: f64,
    pub keep_t1_w0: f64,
    pub keep_t0: f64,
    #[serde(flatten)]
    pub covariates: CovariateConfig,
}

impl GenConfigSub {
    pub fn new(n_raw: usize, tau: f64) -> Self {
        GenConfigSub {
            n_raw,
            tau,
            trigger_token: "kill".into(),
            p_trigger_w1: 0.6,
            p_trigger_w0: 0.1,
            keep_t1_w0: 0.05,
            keep_t0: 0.10,
            covariates: CovariateConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::config("tau", format!("must lie in [0, 1], got {}", self.tau)));
        }
        for (name, v) in [("keep_t1_w0", self.keep_t1_w0), ("keep_t0", self.keep_t0)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::config(name, format!("must lie in (0, 1], got {v}")));
            }
        }
        for (name, v) in [("p_trigger_w1", self.p_trigger_w1), ("p_trigger_w0", self.p_trigger_w0)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(name, format!("must lie in (0, 1), got {v}")));
            }
        }
        self.covariates.validate()?;
        if self.covariates.vocab.contains(&self.trigger_token) {
            return Err(Error::config(
                "trigger_token",
                format!("{:?} collides with the generator vocabulary", self.trigger_token),
            ));
        }
        Ok(())
    }
}

fn draw_label(rng: &mut impl Rng, p: f64) -> bool {
    // p in {0, 1} must be deterministic: gen::<f64>() lies in [0, 1).
    rng.gen::<f64>() < p
}

/// Semi-synthetic corpus: treatment is a prepended `treated`/`untreated` token.
pub fn generate_ss(cfg: &GenConfigSS, seed: u64) -> Result<Corpus> {
    cfg.validate()?;
    let vocab = &cfg.covariates.vocab;
    let base_weight = cfg.base_weight();
    let docs = (0..cfg.n)
        .map(|i| {
            let mut rng = rng::stream(seed, rng::STREAM_DOC, i as u64);
            let (w, mut covariates, base_y) = cfg.covariates.draw(&mut rng);
            let t = if rng.gen_bool(cfg.eps) { !w } else { w };
            let mut p = base_weight * f64::from(u8::from(base_y)) + cfg.tau * f64::from(u8::from(t));
            for planted in &cfg.planted {
                let present = rng.gen_bool(if w { planted.p_w1 } else { planted.p_w0 });
                if present {
                    let pos = rng.gen_range(0..=covariates.len());
                    covariates.insert(pos, planted.token.clone());
                    p += planted.effect;
                }
            }
            let label = draw_label(&mut rng, p);
            let prefix = if t {
                &vocab.treated_token
            } else {
                &vocab.untreated_token
            };
            let mut tokens = Vec::with_capacity(covariates.len() + 1);
            tokens.push(prefix.clone());
            tokens.extend(covariates);
            Document::new(i, tokens, t, label).with_confounder(w)
        })
        .collect();
    Ok(Corpus::new(
        docs,
        CorpusMeta {
            true_tau: Some(cfg.tau),
            overlap_eps: Some(cfg.eps),
            generator: Generator::Ss,
            seed,
        },
    ))
}

/// Raw and retained draws of the subsampled generator.
#[derive(Debug, Clone)]
pub struct SubsampledDraw {
    pub raw: Corpus,
    pub retained: Corpus,
}

/// Subsampled corpus: treatment is presence of a trigger token.
pub fn generate_subsampled(cfg: &GenConfigSub, seed: u64) -> Result<Corpus> {
    generate_subsampled_with_raw(cfg, seed).map(|d| d.retained)
}

pub fn generate_subsampled_with_raw(cfg: &GenConfigSub, seed: u64) -> Result<SubsampledDraw> {
    cfg.validate()?;
    let meta = CorpusMeta {
        true_tau: Some(cfg.tau),
        overlap_eps: None,
        generator: Generator::Subsampled,
        seed,
    };
    let mut raw = Vec::with_capacity(cfg.n_raw);
    let mut retained = Vec::new();
    for i in 0..cfg.n_raw {
        let mut rng = rng::stream(seed, rng::STREAM_DOC, i as u64);
        let (w, mut tokens, base_y) = cfg.covariates.draw(&mut rng);
        let t = rng.gen_bool(if w { cfg.p_trigger_w1 } else { cfg.p_trigger_w0 });
        if t {
            let pos = rng.gen_range(0..=tokens.len());
            tokens.insert(pos, cfg.trigger_token.clone());
        }
        let p = (1.0 - cfg.tau) * f64::from(u8::from(base_y)) + cfg.tau * f64::from(u8::from(t));
        let label = draw_label(&mut rng, p);
        let keep = match (t, w) {
            (true, true) => 1.0,
            (true, false) => cfg.keep_t1_w0,
            (false, _) => cfg.keep_t0,
        };
        let kept = rng.gen::<f64>() < keep;
        let doc = Document::new(i, tokens, t, label).with_confounder(w);
        if kept {
            retained.push(doc.clone());
        }
        raw.push(doc);
    }
    let retained = Corpus::new(retained, meta.clone());
    let counts = group_counts(&retained);
    if let Some(g) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Generation(format!(
            "group {} (Y={}, T={}) is empty after subsampling {} raw documents",
            g + 1,
            g / 2,
            g % 2,
            cfg.n_raw
        )));
    }
    Ok(SubsampledDraw {
        raw: Corpus::new(raw, meta),
        retained,
    })
}

/// Counts of the four `(Y, T)` cells in group order.
pub(crate) fn group_counts(corpus: &Corpus) -> [usize; 4] {
    let mut counts = [0usize; 4];
    for d in &corpus.docs {
        counts[usize::from(d.label) * 2 + usize::from(d.treatment)] += 1;
    }
    counts
}

#[derive(Serialize)]
struct MetaHeader<'a> {
    #[serde(rename = "_meta")]
    meta: &'a CorpusMeta,
}

#[derive(Serialize)]
pub(crate) struct DocRecord<'a> {
    pub tokens: &'a [String],
    pub t: u8,
    pub y: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<u8>,
}

impl<'a> From<&'a Document> for DocRecord<'a> {
    fn from(d: &'a Document) -> Self {
        DocRecord {
            tokens: &d.tokens,
            t: u8::from(d.treatment),
            y: u8::from(d.label),
            w: d.confounder.map(u8::from),
        }
    }
}

pub(crate) fn write_meta_line(out: &mut impl Write, meta: &CorpusMeta) -> Result<()> {
    serde_json::to_writer(&mut *out, &MetaHeader { meta }).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Writes the corpus as JSONL: a `{"_meta": ...}` header, then one
/// `{"tokens", "t", "y", "w"}` object per document.
pub fn write_jsonl(corpus: &Corpus, out: impl Write) -> Result<()> {
    corpus.validate()?;
    let mut out = BufWriter::new(out);
    write_meta_line(&mut out, &corpus.meta)?;
    for d in &corpus.docs {
        serde_json::to_writer(&mut out, &DocRecord::from(d)).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl(input: impl Read) -> Result<Corpus> {
    let reader = BufReader::new(input);
    let mut meta = None;
    let mut docs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let Value::Object(obj) = value else {
            return Err(Error::Schema {
                line: line_no,
                message: "expected a JSON object".into(),
            });
        };
        if let Some(m) = obj.get("_meta") {
            if line_no != 1 {
                return Err(Error::Schema {
                    line: line_no,
                    message: "the _meta header must be on line 1".into(),
                });
            }
            meta = Some(
                serde_json::from_value::<CorpusMeta>(m.clone()).map_err(|e| Error::Schema {
                    line: line_no,
                    message: format!("bad _meta: {e}"),
                })?,
            );
            continue;
        }
        docs.push(parse_doc(&obj, docs.len(), line_no)?);
    }
    let corpus = Corpus {
        docs,
        meta: meta.unwrap_or_else(CorpusMeta::external),
    };
    corpus.validate()?;
    Ok(corpus)
}

fn parse_bit(obj: &Map<String, Value>, key: &str, line: usize) -> Result<Option<bool>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => match v.as_u64() {
            Some(0) => Ok(Some(false)),
            Some(1) => Ok(Some(true)),
            _ => Err(Error::Schema {
                line,
                message: format!("key {key:?} must be 0 or 1, got {v}"),
            }),
        },
    }
}

fn parse_doc(obj: &Map<String, Value>, doc_id: usize, line: usize) -> Result<Document> {
    let missing = |key: &str| Error::Schema {
        line,
        message: format!("missing required key {key:?}"),
    };
    let tokens = obj.get("tokens").ok_or_else(|| missing("tokens"))?;
    let tokens = tokens
        .as_array()
        .and_then(|a| {
            a.iter()
                .map(|t| t.as_str().map(str::to_owned))
                .collect::<Option<Vec<_>>>()
        })
        .ok_or_else(|| Error::Schema {
            line,
            message: "key \"tokens\" must be an array of strings".into(),
        })?;
    let t = parse_bit(obj, "t", line)?.ok_or_else(|| missing("t"))?;
    let y = parse_bit(obj, "y", line)?.ok_or_else(|| missing("y"))?;
    let w = parse_bit(obj, "w", line)?;
    Ok(Document {
        doc_id,
        tokens,
        treatment: t,
        label: y,
        confounder: w,
    })
}

pub fn write_jsonl_file(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_jsonl(corpus, file).map_err(|e| e.context(path.display().to_string()))
}

pub fn read_jsonl_file(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(file).map_err(|e| e.context(path.display().to_string()))
}

/// Splits into `(train, heldout, test)`.
pub fn split(corpus: &Corpus, fractions: (f64, f64, f64), seed: u64) -> Result<(Corpus, Corpus, Corpus)> {
    let mut parts = split_parts(corpus, &[fractions.0, fractions.1, fractions.2], seed)?;
    let test = parts.pop().expect("three parts");
    let heldout = parts.pop().expect("three parts");
    let train = parts.pop().expect("three parts");
    Ok((train, heldout, test))
}

/// Seeded partition into `fractions.len()` parts. Every part after the first
/// gets `floor(n * f)` documents and the first takes the remainder. Doc ids
/// are renumbered within each part.
pub fn split_parts(corpus: &Corpus, fractions: &[f64], seed: u64) -> Result<Vec<Corpus>> {
    if fractions.is_empty() {
        return Err(Error::Split("no fractions given".into()));
    }
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0)) {
        return Err(Error::Split(format!("fractions must be positive, got {f}")));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!("fractions must sum to 1, got {sum}")));
    }
    let n = corpus.len();
    let mut sizes: Vec<usize> = fractions.iter().map(|f| (n as f64 * f).floor() as usize).collect();
    sizes[0] = n - sizes[1..].iter().sum::<usize>();
    if let Some(k) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Split(format!(
            "part {k} would be empty ({n} documents, fractions {fractions:?})"
        )));
    }
    let order = permutation(n, seed);
    let mut parts = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for size in sizes {
        let docs = order[start..start + size]
            .iter()
            .map(|&i| corpus.docs[i].clone())
            .collect();
        parts.push(Corpus::new(docs, corpus.meta.clone()));
        start += size;
    }
    Ok(parts)
}

pub(crate) fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, rng::STREAM_SPLIT, 0));
    order
}
