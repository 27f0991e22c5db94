//! Text to token ids, with ROOT at position 0, in word or subword mode.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::bpe::BpeMerges;
use super::vocab::{Vocabulary, ROOT_ID};
use super::NeuralError;
use crate::tags::{words, NodeType, TaggedSentence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerMode {
    #[default]
    Word,
    Bpe,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    /// Token ids; `ids[0]` is always ROOT.
    pub ids: Vec<u32>,
    /// Position of the last subword of each source word.
    pub word_heads: Vec<usize>,
    pub words: Vec<String>,
}

impl TokenSequence {
    /// Number of positions including ROOT.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.len() <= 1
    }
}

/// Per-position supervision for positions `1..len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionTargets {
    pub types: Vec<NodeType>,
    /// Parent positions in `0..len`.
    pub parents: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    mode: TokenizerMode,
    vocab: Vocabulary,
    merges: BpeMerges,
}

impl Tokenizer {
    pub fn word(vocab: Vocabulary) -> Self {
        Tokenizer {
            mode: TokenizerMode::Word,
            vocab,
            merges: BpeMerges::default(),
        }
    }

    pub fn bpe(vocab: Vocabulary, merges: BpeMerges) -> Self {
        Tokenizer {
            mode: TokenizerMode::Bpe,
            vocab,
            merges,
        }
    }

    /// Builds a tokenizer from training texts. In subword mode `num_merges`
    /// merges are learned and the vocabulary holds every character seen plus
    /// every merged symbol.
    pub fn fit<'a>(
        mode: TokenizerMode,
        texts: impl IntoIterator<Item = &'a str>,
        num_merges: usize,
    ) -> Self {
        match mode {
            TokenizerMode::Word => Tokenizer::word(Vocabulary::from_words(texts)),
            TokenizerMode::Bpe => {
                let mut counts: BTreeMap<String, usize> = BTreeMap::new();
                for text in texts {
                    for w in words(text) {
                        *counts.entry(w).or_default() += 1;
                    }
                }
                let merges = BpeMerges::learn(&counts, num_merges);
                let mut chars: Vec<String> = counts
                    .keys()
                    .flat_map(|w| w.chars().map(String::from))
                    .collect();
                chars.sort();
                chars.dedup();
                let vocab = Vocabulary::new(chars.into_iter().chain(merges.merged_symbols()));
                Tokenizer::bpe(vocab, merges)
            }
        }
    }

    pub fn mode(&self) -> TokenizerMode {
        self.mode
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn merges(&self) -> &BpeMerges {
        &self.merges
    }

    pub fn tokenize(&self, text: &str) -> TokenSequence {
        let words = words(text);
        let mut ids = vec![ROOT_ID];
        let mut word_heads = Vec::with_capacity(words.len());
        for w in &words {
            match self.mode {
                TokenizerMode::Word => ids.push(self.vocab.id(w)),
                TokenizerMode::Bpe => {
                    ids.extend(self.merges.apply(w).iter().map(|s| self.vocab.id(s)));
                }
            }
            word_heads.push(ids.len() - 1);
        }
        TokenSequence {
            ids,
            word_heads,
            words,
        }
    }

    /// Moves word-level tags onto token positions. Non-final subwords of a
    /// labelled word become SAME pieces of its final subword; every subword
    /// of a NONE word is NONE.
    pub fn targets(
        &self,
        seq: &TokenSequence,
        tagged: &TaggedSentence,
    ) -> Result<PositionTargets, NeuralError> {
        if tagged.len() != seq.word_heads.len() {
            return Err(NeuralError::LengthMismatch {
                expected: seq.word_heads.len(),
                found: tagged.len(),
            });
        }
        let positions = seq.len() - 1;
        let mut types = vec![NodeType::None; positions];
        let mut parents = vec![0; positions];
        let mut start = 1;
        for (token, &head) in tagged.tokens().iter().zip(&seq.word_heads) {
            if token.node_type != NodeType::None {
                for p in start..head {
                    types[p - 1] = NodeType::Same;
                    parents[p - 1] = head;
                }
                types[head - 1] = token.node_type;
                parents[head - 1] = match token.parent {
                    0 => 0,
                    w => seq.word_heads[w - 1],
                };
            }
            start = head + 1;
        }
        Ok(PositionTargets { types, parents })
    }
}
