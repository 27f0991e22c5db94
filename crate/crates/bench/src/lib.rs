//! Shared fixtures for the benchmarks.

use sgforge_core::corpus::Region;
use sgforge_core::neural::{Model, PositionTargets, TokenSequence, Tokenizer};
use sgforge_core::{align, generate_synthetic, Lexicon, ModelConfig, SyntheticGrammar, TaggedSentence};

pub fn regions(n: usize) -> Vec<Region> {
    generate_synthetic(&SyntheticGrammar::default(), n).expect("default grammar is valid")
}

pub fn tagged(regions: &[Region]) -> Vec<TaggedSentence> {
    regions
        .iter()
        .map(|r| align(&r.description, &r.graph, &Lexicon::new()).tagged)
        .collect()
}

/// A desk-default model fitted to `n` synthetic regions, plus one example.
pub fn model_and_example(n: usize) -> (Model, TokenSequence, PositionTargets) {
    let sentences = tagged(&regions(n));
    let texts: Vec<String> = sentences.iter().map(|s| s.text()).collect();
    let tokenizer = Tokenizer::fit(Default::default(), texts.iter().map(String::as_str), 0);
    let config = ModelConfig {
        vocab_size: tokenizer.vocab().len(),
        ..ModelConfig::default()
    };
    let model = Model::init(config, 1).expect("default config is valid");
    let longest = sentences
        .iter()
        .max_by_key(|s| s.len())
        .expect("corpus is not empty");
    let seq = tokenizer.tokenize(&longest.text());
    let targets = tokenizer.targets(&seq, longest).expect("aligned targets fit");
    (model, seq, targets)
}
