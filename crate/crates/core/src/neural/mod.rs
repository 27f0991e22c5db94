//! The attention-graph parser. A transformer backbone feeds a head that
//! classifies each token's node type and points at its parent.

pub mod bpe;
pub mod math;
mod model;
pub mod params;
pub mod tokenizer;
pub mod vocab;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use model::{loss, read_tags, LossValue, Model, ModelOutputs, OutputGrads};
pub use params::{Parameters, Tensor};
pub use tokenizer::{PositionTargets, TokenSequence, Tokenizer, TokenizerMode};

use crate::tags::{decode, DecodeReport, NodeType, TaggedSentence};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NeuralError {
    #[error("sequence of {len} tokens exceeds the maximum of {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("sequence has no ROOT position")]
    EmptySequence,
    #[error("token id {0} is outside the vocabulary")]
    UnknownTokenId(u32),
    #[error("expected {expected} targets, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("parent {parent} is out of range for {len} positions")]
    ParentOutOfRange { parent: usize, len: usize },
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("{0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    /// Longest input in tokens, not counting ROOT.
    pub max_len: usize,
    pub n_classes: usize,
    /// Width of the parent query and key vectors.
    pub d_qk: usize,
    /// Weight of the parent loss term.
    pub loss_weight: f64,
    pub tokenizer_mode: TokenizerMode,
    /// Merges to learn when the tokenizer is fitted in subword mode.
    pub bpe_merges: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 0,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 256,
            max_len: 32,
            n_classes: NodeType::COUNT,
            d_qk: 64,
            loss_weight: 1.0,
            tokenizer_mode: TokenizerMode::Word,
            bpe_merges: 200,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), NeuralError> {
        let fail = |m: &str| Err(NeuralError::Config(m.to_string()));
        if self.n_classes != NodeType::COUNT {
            return fail("n_classes must be 6");
        }
        if self.vocab_size < vocab::RESERVED.len() {
            return fail("vocab_size must cover the reserved tokens");
        }
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return fail("d_model must be a positive multiple of n_heads");
        }
        if self.d_ff == 0 || self.d_qk == 0 || self.max_len == 0 {
            return fail("d_ff, d_qk and max_len must be positive");
        }
        if !(self.loss_weight.is_finite() && self.loss_weight >= 0.0) {
            return fail("loss_weight must be finite and non-negative");
        }
        Ok(())
    }
}

/// A model with the tokenizer it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Parser {
    pub model: Model,
    pub tokenizer: Tokenizer,
}

impl Parser {
    pub fn new(model: Model, tokenizer: Tokenizer) -> Self {
        Parser { model, tokenizer }
    }

    /// Tags each word of `text` from the argmax of the head outputs.
    pub fn predict(&self, text: &str) -> Result<TaggedSentence, NeuralError> {
        let seq = self.tokenizer.tokenize(text);
        if seq.words.is_empty() {
            return Ok(TaggedSentence::empty());
        }
        let outputs = self.model.forward(&seq)?;
        let tags = read_tags(&outputs, &seq);
        let sentence = TaggedSentence::new(
            seq.words
                .into_iter()
                .zip(tags)
                .map(|(w, (t, p))| (w, t, p)),
        )
        .expect("words are single tokens and parents are word indices");
        Ok(sentence)
    }

    /// Predicts tags and decodes them into a scene graph.
    pub fn parse(&self, text: &str) -> Result<DecodeReport, NeuralError> {
        Ok(decode(&self.predict(text)?))
    }
}
