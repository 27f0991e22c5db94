//! Checkpoints: a JSON manifest plus a payload of little-endian `f32` tensors.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainError};
use crate::neural::bpe::BpeMerges;
use crate::neural::vocab::{Vocabulary, RESERVED};
use crate::neural::{Model, ModelConfig, Parameters, Parser, Tensor, Tokenizer, TokenizerMode};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PAYLOAD_FILE: &str = "tensors.bin";
const FORMAT: &str = "sgforge-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the payload.
    pub offset: usize,
    /// Number of `f32` values.
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizerManifest {
    pub mode: TokenizerMode,
    /// Vocabulary after the reserved entries.
    pub vocab: Vec<String>,
    pub merges: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub model_config: ModelConfig,
    pub train_config: Option<TrainConfig>,
    pub tokenizer: TokenizerManifest,
    pub tensors: Vec<TensorEntry>,
    pub step: u64,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub payload: Vec<u8>,
}

impl Checkpoint {
    /// Snapshots a parser. Parameter values are stored as `f32`.
    pub fn from_parser(
        parser: &Parser,
        train_config: Option<TrainConfig>,
        step: u64,
        metrics: BTreeMap<String, f64>,
    ) -> Self {
        let mut payload = Vec::with_capacity(parser.model.params.num_values() * 4);
        let mut tensors = Vec::new();
        for t in parser.model.params.tensors() {
            tensors.push(TensorEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
                offset: payload.len(),
                len: t.len(),
            });
            for &v in &t.data {
                payload.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        let tok = &parser.tokenizer;
        let manifest = Manifest {
            format: FORMAT.to_string(),
            version: 1,
            model_config: parser.model.config.clone(),
            train_config,
            tokenizer: TokenizerManifest {
                mode: tok.mode(),
                vocab: tok.vocab().tokens()[RESERVED.len()..].to_vec(),
                merges: tok.merges().merges().to_vec(),
            },
            tensors,
            step,
            metrics,
        };
        Checkpoint { manifest, payload }
    }

    pub fn parser(&self) -> Result<Parser, TrainError> {
        let m = &self.manifest;
        if m.format != FORMAT || m.version != 1 {
            return Err(TrainError::Checkpoint(format!(
                "unsupported checkpoint format {} v{}",
                m.format, m.version
            )));
        }
        let mut tensors = Vec::with_capacity(m.tensors.len());
        for entry in &m.tensors {
            let end = entry.offset + entry.len * 4;
            let bytes = self.payload.get(entry.offset..end).ok_or_else(|| {
                TrainError::Checkpoint(format!("tensor '{}' lies outside the payload", entry.name))
            })?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            tensors.push(Tensor {
                name: entry.name.clone(),
                shape: entry.shape.clone(),
                data,
            });
        }
        let params = Parameters::from_tensors(&m.model_config, tensors)?;
        let model = Model::new(m.model_config.clone(), params)?;
        let vocab = Vocabulary::new(m.tokenizer.vocab.iter().cloned());
        let tokenizer = match m.tokenizer.mode {
            TokenizerMode::Word => Tokenizer::word(vocab),
            TokenizerMode::Bpe => Tokenizer::bpe(vocab, BpeMerges::new(m.tokenizer.merges.clone())),
        };
        if tokenizer.vocab().len() != m.model_config.vocab_size {
            return Err(TrainError::Checkpoint(
                "tokenizer vocabulary does not match vocab_size".into(),
            ));
        }
        Ok(Parser::new(model, tokenizer))
    }

    pub fn manifest_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        text
    }

    /// Writes `manifest.json` and `tensors.bin` into `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<(), TrainError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(MANIFEST_FILE), self.manifest_json())?;
        fs::write(dir.join(PAYLOAD_FILE), &self.payload)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, TrainError> {
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        let payload = fs::read(dir.join(PAYLOAD_FILE))?;
        Ok(Checkpoint { manifest, payload })
    }
}
