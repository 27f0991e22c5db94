//! Training loop with Adam updates and checkpointing.

mod adam;
mod checkpoint;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{adam_step, adam_step_parameters, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, Manifest, TensorEntry, TokenizerManifest, MANIFEST_FILE, PAYLOAD_FILE};

use crate::align::align;
use crate::corpus::Region;
use crate::lexicon::Lexicon;
use crate::eval::{evaluate_cases, CorpusMode, RegionCase};
use crate::graph::SceneGraph;
use crate::neural::{
    LossValue, Model, ModelConfig, NeuralError, Parameters, Parser, PositionTargets, TokenSequence,
    Tokenizer,
};
use crate::tags::TaggedSentence;

/// Learning rate suited to fine-tuning a pretrained wide backbone.
pub const PRETRAINED_LEARNING_RATE: f64 = 6.25e-5;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid train config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaMode {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub lambda_mode: LambdaMode,
    /// Compute per-example gradients on the rayon pool. Sums are taken in
    /// example order either way, so results do not depend on this flag.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            epochs: 4,
            batch_size: 32,
            seed: 17,
            lambda_mode: LambdaMode::Auto,
            parallel: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        for b in [self.adam_beta1, self.adam_beta2] {
            if !(b > 0.0 && b < 1.0) {
                return fail("adam betas must lie strictly between 0 and 1");
            }
        }
        if !(self.adam_epsilon > 0.0 && self.adam_epsilon.is_finite()) {
            return fail("adam_epsilon must be positive");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if let LambdaMode::Fixed(v) = self.lambda_mode {
            if !(v >= 0.0 && v.is_finite()) {
                return fail("fixed lambda must be finite and non-negative");
            }
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

/// A held-out region: its description, aligned targets for the dev loss,
/// and the reference graph for the dev score.
#[derive(Debug, Clone, PartialEq)]
pub struct DevExample {
    pub region_id: u64,
    pub target: TaggedSentence,
    pub reference: SceneGraph,
}

impl DevExample {
    /// Aligns a region against its own graph to get the dev targets.
    pub fn from_region(region: &Region, lexicon: &Lexicon) -> Self {
        DevExample {
            region_id: region.region_id,
            target: align(&region.description, &region.graph, lexicon).tagged,
            reference: region.graph.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub step: u64,
    pub lambda: f64,
    pub train_loss: f64,
    pub dev_loss: Option<f64>,
    pub dev_f: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub last: Checkpoint,
    /// Highest dev F seen at an epoch end; the last checkpoint when there is no dev set.
    pub best: Checkpoint,
    pub log: Vec<EpochLog>,
    pub lambda: f64,
    /// Training sentences dropped for exceeding `max_len` tokens.
    pub skipped_too_long: usize,
}

struct Example {
    seq: TokenSequence,
    targets: PositionTargets,
}

/// Classification-to-parent loss ratio at the current parameters.
pub fn calibrate_lambda(model: &Model, batch: &[(TokenSequence, PositionTargets)]) -> Result<f64, TrainError> {
    let mut class = 0.0;
    let mut parent = 0.0;
    let mut parent_n = 0usize;
    for (seq, targets) in batch {
        let v = model.loss(seq, targets, 1.0)?;
        class += v.class;
        if v.parent_positions > 0 {
            parent += v.parent;
            parent_n += 1;
        }
    }
    if batch.is_empty() || parent_n == 0 || parent == 0.0 {
        return Ok(1.0);
    }
    Ok((class / batch.len() as f64) / (parent / parent_n as f64))
}

/// Trains a parser on word-tagged sentences.
pub fn train(
    train_set: &[TaggedSentence],
    dev_set: &[DevExample],
    model_config: &ModelConfig,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let train_set: Vec<&TaggedSentence> = train_set.iter().filter(|s| !s.is_empty()).collect();
    if train_set.is_empty() {
        return Err(TrainError::EmptyDataset);
    }

    let texts: Vec<String> = train_set.iter().map(|s| s.text()).collect();
    let tokenizer = Tokenizer::fit(
        model_config.tokenizer_mode,
        texts.iter().map(String::as_str),
        model_config.bpe_merges,
    );
    let mut model_config = model_config.clone();
    model_config.vocab_size = tokenizer.vocab().len();
    model_config.validate()?;

    let mut examples = Vec::with_capacity(train_set.len());
    let mut skipped_too_long = 0;
    for (sentence, text) in train_set.iter().zip(&texts) {
        let seq = tokenizer.tokenize(text);
        if seq.len() - 1 > model_config.max_len {
            skipped_too_long += 1;
            continue;
        }
        let targets = tokenizer.targets(&seq, sentence)?;
        examples.push(Example { seq, targets });
    }
    if examples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let dev: Vec<(TokenSequence, Option<PositionTargets>)> = dev_set
        .iter()
        .map(|d| {
            let seq = tokenizer.tokenize(&d.target.text());
            let fits = !seq.words.is_empty() && seq.len() - 1 <= model_config.max_len;
            let targets = if fits { tokenizer.targets(&seq, &d.target).ok() } else { None };
            (seq, targets)
        })
        .collect();

    let model = Model::init(model_config.clone(), config.seed)?;
    let mut parser = Parser::new(model, tokenizer);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed);
    let mut orders = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut shuffle_rng);
        orders.push(order);
    }

    let lambda = match (config.lambda_mode, orders.first()) {
        (LambdaMode::Fixed(v), _) => v,
        (LambdaMode::Auto, None) => model_config.loss_weight,
        (LambdaMode::Auto, Some(order)) => {
            let batch: Vec<_> = order
                .iter()
                .take(config.batch_size)
                .map(|&i| (examples[i].seq.clone(), examples[i].targets.clone()))
                .collect();
            calibrate_lambda(&parser.model, &batch)?
        }
    };
    parser.model.config.loss_weight = lambda;

    let adam = config.adam();
    let mut state = AdamState::for_parameters(&parser.model.params);
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, Checkpoint)> = None;

    for (epoch, order) in orders.iter().enumerate() {
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (loss, grads) = batch_gradient(&parser.model, &examples, batch, lambda, config.parallel)?;
            epoch_loss += loss * batch.len() as f64;
            adam_step_parameters(&mut parser.model.params, &grads, &mut state, &adam)?;
            parser.model.params.round_to_f32();
        }
        let (dev_loss, dev_f) = dev_metrics(&parser, dev_set, &dev, lambda)?;
        let entry = EpochLog {
            epoch: epoch + 1,
            step: state.step,
            lambda,
            train_loss: epoch_loss / examples.len() as f64,
            dev_loss,
            dev_f,
        };
        on_epoch(&entry);
        if let Some(f) = dev_f {
            if best.as_ref().is_none_or(|(b, _)| f > *b) {
                let ckpt = Checkpoint::from_parser(&parser, Some(config.clone()), state.step, metrics(&entry));
                best = Some((f, ckpt));
            }
        }
        log.push(entry);
    }

    let last_metrics = log.last().map(metrics).unwrap_or_default();
    let last = Checkpoint::from_parser(&parser, Some(config.clone()), state.step, last_metrics);
    let best = best.map(|(_, c)| c).unwrap_or_else(|| last.clone());
    Ok(TrainOutcome {
        last,
        best,
        log,
        lambda,
        skipped_too_long,
    })
}

fn metrics(entry: &EpochLog) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    m.insert("epoch".to_string(), entry.epoch as f64);
    m.insert("train_loss".to_string(), entry.train_loss);
    if let Some(v) = entry.dev_loss {
        m.insert("dev_loss".to_string(), v);
    }
    if let Some(v) = entry.dev_f {
        m.insert("dev_f".to_string(), v);
    }
    m
}

/// Mean loss and mean gradient over one batch.
fn batch_gradient(
    model: &Model,
    examples: &[Example],
    batch: &[usize],
    lambda: f64,
    parallel: bool,
) -> Result<(f64, Parameters), TrainError> {
    let one = |&i: &usize| -> Result<(LossValue, Parameters), NeuralError> {
        model.loss_and_grad(&examples[i].seq, &examples[i].targets, lambda)
    };
    let results: Vec<_> = if parallel {
        batch.par_iter().map(one).collect()
    } else {
        batch.iter().map(one).collect()
    };
    let mut total = Parameters::zeros(&model.config);
    let mut loss = 0.0;
    for r in results {
        let (value, grads) = r?;
        loss += value.total;
        total.add_assign(&grads);
    }
    let n = batch.len() as f64;
    total.scale(1.0 / n);
    Ok((loss / n, total))
}

fn dev_metrics(
    parser: &Parser,
    dev_set: &[DevExample],
    dev: &[(TokenSequence, Option<PositionTargets>)],
    lambda: f64,
) -> Result<(Option<f64>, Option<f64>), TrainError> {
    if dev_set.is_empty() {
        return Ok((None, None));
    }
    let mut loss = 0.0;
    let mut counted = 0usize;
    let mut preds = Vec::with_capacity(dev_set.len());
    let mut texts = Vec::with_capacity(dev_set.len());
    for (example, (seq, targets)) in dev_set.iter().zip(dev) {
        if let Some(t) = targets {
            loss += parser.model.loss(seq, t, lambda)?.total;
            counted += 1;
        }
        let text = example.target.text();
        let pred = match parser.parse(&text) {
            Ok(report) => report.graph,
            Err(NeuralError::SequenceTooLong { .. }) => SceneGraph::empty(),
            Err(e) => return Err(e.into()),
        };
        preds.push(pred);
        texts.push(text);
    }
    let cases: Vec<RegionCase<'_>> = dev_set
        .iter()
        .zip(preds.iter().zip(&texts))
        .map(|(example, (pred, text))| RegionCase {
            region_id: example.region_id,
            pred,
            reference: &example.reference,
            description: text,
        })
        .collect();
    let scores = evaluate_cases(&cases, &Lexicon::new(), CorpusMode::Base);
    let dev_loss = (counted > 0).then(|| loss / counted as f64);
    Ok((dev_loss, Some(scores.aggregate.f1)))
}
