//! Versioned model files: one JSON header line, then every parameter as a
//! little-endian `f64`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Mode, Network};
use super::{Classifier, PropensityModel, TwoHeadModel};
use crate::error::{Error, Result};
use crate::features::{FeatureSpec, FeaturizerConfig, TfMode};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const FORMAT_NAME: &str = "feag-model";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    TwoHead,
    Propensity,
    Classifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub mode: Mode,
    pub dim: usize,
    pub hidden: usize,
    pub n_heads: usize,
    pub hash_seed: u64,
    pub tf_mode: TfMode,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub spec: Option<FeatureSpec>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eps_clip: Option<f64>,
    pub n_params: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    TwoHead(TwoHeadModel),
    Propensity(PropensityModel),
    Classifier(Classifier),
}

impl SavedModel {
    fn parts(
        &self,
    ) -> (
        ModelKind,
        &Network,
        &FeaturizerConfig,
        Option<&FeatureSpec>,
        Option<f64>,
    ) {
        match self {
            SavedModel::TwoHead(m) => (ModelKind::TwoHead, &m.net, &m.featurizer, Some(&m.spec), None),
            SavedModel::Propensity(m) => (
                ModelKind::Propensity,
                &m.net,
                &m.featurizer,
                Some(&m.spec),
                Some(m.eps_clip),
            ),
            SavedModel::Classifier(m) => (ModelKind::Classifier, &m.net, &m.featurizer, m.strip.as_ref(), None),
        }
    }

    pub fn header(&self) -> ModelHeader {
        let (kind, net, fz, spec, eps_clip) = self.parts();
        ModelHeader {
            format: FORMAT_NAME.into(),
            version: MODEL_FORMAT_VERSION,
            kind,
            mode: net.mode(),
            dim: net.dim(),
            hidden: net.hidden(),
            n_heads: net.n_heads(),
            hash_seed: fz.hash_seed,
            tf_mode: fz.tf_mode,
            spec: spec.cloned(),
            eps_clip,
            n_params: net.param_count(),
        }
    }

    pub fn write(&self, out: impl Write) -> Result<()> {
        let mut out = BufWriter::new(out);
        serde_json::to_writer(&mut out, &self.header()).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        let (_, net, ..) = self.parts();
        for p in net.params() {
            out.write_all(&p.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read(input: impl Read) -> Result<Self> {
        let mut input = BufReader::new(input);
        let mut line = String::new();
        input.read_line(&mut line)?;
        let header: ModelHeader =
            serde_json::from_str(line.trim_end()).map_err(|e| Error::Model(format!("bad header: {e}")))?;
        if header.format != FORMAT_NAME {
            return Err(Error::Model(format!("unknown format {:?}", header.format)));
        }
        if header.version != MODEL_FORMAT_VERSION {
            return Err(Error::Model(format!(
                "unsupported version {} (expected {MODEL_FORMAT_VERSION})",
                header.version
            )));
        }
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        if bytes.len() != header.n_params * 8 {
            return Err(Error::Model(format!(
                "expected {} parameters, found {} bytes",
                header.n_params,
                bytes.len()
            )));
        }
        let params: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let net = Network::from_parts(header.mode, header.dim, header.hidden, header.n_heads, params)
            .ok_or_else(|| Error::Model("parameter count does not match the declared shape".into()))?;
        let featurizer = FeaturizerConfig {
            dim: header.dim,
            hash_seed: header.hash_seed,
            tf_mode: header.tf_mode,
        };
        featurizer.validate()?;
        let need_spec = || {
            header
                .spec
                .clone()
                .ok_or_else(|| Error::Model("missing feature spec".into()))
        };
        let expect_heads = |n: usize| {
            if header.n_heads == n {
                Ok(())
            } else {
                Err(Error::Model(format!(
                    "{:?} needs {n} heads, header says {}",
                    header.kind, header.n_heads
                )))
            }
        };
        Ok(match header.kind {
            ModelKind::TwoHead => {
                expect_heads(2)?;
                SavedModel::TwoHead(TwoHeadModel {
                    net,
                    featurizer,
                    spec: need_spec()?,
                })
            }
            ModelKind::Propensity => {
                expect_heads(1)?;
                SavedModel::Propensity(PropensityModel {
                    net,
                    featurizer,
                    spec: need_spec()?,
                    eps_clip: header.eps_clip.ok_or_else(|| Error::Model("missing eps_clip".into()))?,
                })
            }
            ModelKind::Classifier => {
                expect_heads(1)?;
                SavedModel::Classifier(Classifier {
                    net,
                    featurizer,
                    strip: header.spec.clone(),
                })
            }
        })
    }
}

pub fn save_model(model: &SavedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    model.write(file)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SavedModel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    SavedModel::read(file).map_err(|e| e.context(path.display().to_string()))
}
