//! Binary text features, counterfactual edits and hashed featurization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::rng::splitmix64;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    /// Exactly one of two tokens marks the treatment state.
    PrefixPair { treated: String, untreated: String },
    /// Treatment is presence of a token; reinsertion happens at the front.
    Presence { trigger: String },
}

/// A binary feature `T^j` and the edit rule that flips it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureSpec {
    pub feature_id: usize,
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn prefix_pair(feature_id: usize, treated: &str, untreated: &str) -> Self {
        FeatureSpec {
            feature_id,
            kind: FeatureKind::PrefixPair {
                treated: treated.into(),
                untreated: untreated.into(),
            },
        }
    }

    pub fn presence(feature_id: usize, trigger: &str) -> Self {
        FeatureSpec {
            feature_id,
            kind: FeatureKind::Presence {
                trigger: trigger.into(),
            },
        }
    }

    pub fn with_id(mut self, feature_id: usize) -> Self {
        self.feature_id = feature_id;
        self
    }

    /// Whether `token` carries this feature's treatment state.
    pub fn is_treatment_token(&self, token: &str) -> bool {
        match &self.kind {
            FeatureKind::PrefixPair { treated, untreated } => token == treated || token == untreated,
            FeatureKind::Presence { trigger } => token == trigger,
        }
    }

    fn inconsistent(&self, doc: &Document, reason: impl Into<String>) -> Error {
        Error::Consistency {
            doc_id: doc.doc_id,
            feature: self.to_string(),
            reason: reason.into(),
        }
    }

    /// Treatment state of the document as read from its tokens.
    ///
    /// For prefix pairs exactly one occurrence of either token is required.
    /// For presence features the document's treatment bit must agree with
    /// the token.
    pub fn state(&self, doc: &Document) -> Result<bool> {
        match &self.kind {
            FeatureKind::PrefixPair { treated, untreated } => {
                let n_t = doc.tokens.iter().filter(|t| *t == treated).count();
                let n_u = doc.tokens.iter().filter(|t| *t == untreated).count();
                match (n_t, n_u) {
                    (1, 0) => Ok(true),
                    (0, 1) => Ok(false),
                    _ => Err(self.inconsistent(
                        doc,
                        format!("expected exactly one of the pair, found {n_t} treated and {n_u} untreated"),
                    )),
                }
            }
            FeatureKind::Presence { trigger } => {
                let present = doc.tokens.iter().any(|t| t == trigger);
                if present != doc.treatment {
                    return Err(self.inconsistent(
                        doc,
                        format!(
                            "treatment bit {} but trigger present = {present}",
                            u8::from(doc.treatment)
                        ),
                    ));
                }
                Ok(present)
            }
        }
    }

    /// Tokens with every treatment-indicating token removed.
    pub fn covariate_tokens<'a>(&self, doc: &'a Document) -> Vec<&'a str> {
        doc.tokens
            .iter()
            .map(String::as_str)
            .filter(|t| !self.is_treatment_token(t))
            .collect()
    }
}

impl fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            FeatureKind::PrefixPair { treated, untreated } => write!(f, "prefix:{treated},{untreated}"),
            FeatureKind::Presence { trigger } => write!(f, "presence:{trigger}"),
        }
    }
}

impl FromStr for FeatureSpec {
    type Err = Error;

    /// Parses `prefix:<treated>,<untreated>` or `presence:<token>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::config(
                "feature",
                format!("expected prefix:<t>,<u> or presence:<token>, got {s:?}"),
            )
        };
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "prefix" => {
                let (t, u) = rest.split_once(',').ok_or_else(bad)?;
                if t.is_empty() || u.is_empty() || t == u || u.contains(',') {
                    return Err(bad());
                }
                Ok(FeatureSpec::prefix_pair(0, t, u))
            }
            "presence" if !rest.is_empty() && !rest.contains(',') => Ok(FeatureSpec::presence(0, rest)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for FeatureSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}#{}", self, self.feature_id))
    }
}

impl<'de> Deserialize<'de> for FeatureSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let (spec, id) = s.rsplit_once('#').unwrap_or((s.as_str(), "0"));
        let id = id.parse().map_err(serde::de::Error::custom)?;
        spec.parse::<FeatureSpec>()
            .map(|f| f.with_id(id))
            .map_err(serde::de::Error::custom)
    }
}

/// Flips the feature: `Z^{C} = (X, 1 - T)`. The label is carried over.
pub fn apply_counterfactual(doc: &Document, spec: &FeatureSpec) -> Result<Document> {
    let state = spec.state(doc)?;
    let tokens = match &spec.kind {
        FeatureKind::PrefixPair { treated, untreated } => {
            let (from, to) = if state {
                (treated, untreated)
            } else {
                (untreated, treated)
            };
            doc.tokens
                .iter()
                .map(|t| if t == from { to.clone() } else { t.clone() })
                .collect()
        }
        FeatureKind::Presence { trigger } => {
            if state {
                let kept: Vec<String> = doc.tokens.iter().filter(|t| *t != trigger).cloned().collect();
                if kept.is_empty() {
                    return Err(spec.inconsistent(doc, "removing the trigger would leave no tokens"));
                }
                kept
            } else {
                let mut tokens = Vec::with_capacity(doc.tokens.len() + 1);
                tokens.push(trigger.clone());
                tokens.extend(doc.tokens.iter().cloned());
                tokens
            }
        }
    };
    Ok(Document {
        doc_id: doc.doc_id,
        tokens,
        treatment: !state,
        label: doc.label,
        confounder: doc.confounder,
    })
}

/// The document with the feature set to `t`.
pub fn with_feature_forced(doc: &Document, spec: &FeatureSpec, t: bool) -> Result<Document> {
    if spec.state(doc)? == t {
        Ok(doc.clone())
    } else {
        apply_counterfactual(doc, spec)
    }
}

/// Copy of the corpus whose treatment bits describe `spec`.
pub fn bind_treatment(corpus: &Corpus, spec: &FeatureSpec) -> Result<Corpus> {
    let mut out = corpus.clone();
    for d in &mut out.docs {
        d.treatment = match &spec.kind {
            FeatureKind::Presence { trigger } => d.tokens.iter().any(|t| t == trigger),
            FeatureKind::PrefixPair { .. } => spec.state(d)?,
        };
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupId(u8);

impl GroupId {
    pub const ALL: [GroupId; 4] = [GroupId(1), GroupId(2), GroupId(3), GroupId(4)];

    pub fn new(label: bool, treatment: bool) -> Self {
        GroupId(1 + 2 * u8::from(label) + u8::from(treatment))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub(crate) fn index(self) -> usize {
        usize::from(self.0 - 1)
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Group{}", self.0)
    }
}

/// Group1 = (Y=0,T=0), Group2 = (Y=0,T=1), Group3 = (Y=1,T=0), Group4 = (Y=1,T=1).
pub fn group_of(doc: &Document) -> GroupId {
    GroupId::new(doc.label, doc.treatment)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TfMode {
    Binary,
    Counts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturizerConfig {
    pub dim: usize,
    pub hash_seed: u64,
    pub tf_mode: TfMode,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            dim: 1 << 16,
            hash_seed: 0,
            tf_mode: TfMode::Binary,
        }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.dim.is_power_of_two() {
            return Err(Error::config(
                "dim",
                format!("must be a power of two, got {}", self.dim),
            ));
        }
        if self.dim > u32::MAX as usize {
            return Err(Error::config("dim", "must fit in 32 bits"));
        }
        Ok(())
    }

    /// FNV-1a over the token bytes, started from a seed-dependent basis.
    pub fn index_of(&self, token: &str) -> u32 {
        let mut h = 0xcbf2_9ce4_8422_2325u64 ^ splitmix64(self.hash_seed);
        for b in token.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        (splitmix64(h) & (self.dim as u64 - 1)) as u32
    }
}

/// Sorted sparse vector with unique indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVec {
    pub dim: usize,
    pub entries: Vec<(u32, f64)>,
}

impl SparseVec {
    pub fn get(&self, index: u32) -> f64 {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .map(|k| self.entries[k].1)
            .unwrap_or(0.0)
    }
}

pub fn featurize_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>, cfg: &FeaturizerConfig) -> SparseVec {
    let mut idx: Vec<u32> = tokens.into_iter().map(|t| cfg.index_of(t)).collect();
    idx.sort_unstable();
    let mut entries: Vec<(u32, f64)> = Vec::with_capacity(idx.len());
    for i in idx {
        match entries.last_mut() {
            Some(last) if last.0 == i => {
                if cfg.tf_mode == TfMode::Counts {
                    last.1 += 1.0;
                }
            }
            _ => entries.push((i, 1.0)),
        }
    }
    SparseVec { dim: cfg.dim, entries }
}

pub fn featurize(doc: &Document, cfg: &FeaturizerConfig) -> SparseVec {
    featurize_tokens(doc.tokens.iter().map(String::as_str), cfg)
}
