//! Scene-graph parsing from region descriptions.
//!
//! A description is tagged token by token with one of six node types and a
//! parent pointer ([`tags`]), decoded into a scene graph ([`graph`]),
//! and scored against a reference graph with a tuple F-score
//! ([`eval`]). Training targets come from aligning reference graphs onto
//! their descriptions ([`align`]); the tagger itself is a small transformer
//! with an attention-based parent head ([`neural`], [`train`]).

pub mod align;
pub mod corpus;
pub mod eval;
pub mod graph;
pub mod lexicon;
pub mod neural;
pub mod tags;
pub mod train;

pub use align::{align, useful_word_count, AlignmentResult};
pub use corpus::{generate_synthetic, ingest, split, Region, SplitSpec, SyntheticGrammar};
pub use eval::{evaluate_corpus, spice_f1, tuple_match, CorpusMode, ScoreMode, Scores};
pub use graph::{Label, ObjectInstance, SceneGraph, Tuple, TupleSet};
pub use lexicon::Lexicon;
pub use neural::{Model, ModelConfig, Parser, Tokenizer, TokenizerMode};
pub use tags::{arc_legal, decode, read_conll, write_conll, DecodeReport, NodeType, TaggedSentence};
pub use train::{Checkpoint, TrainConfig};
