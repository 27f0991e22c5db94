//! Forward pass and exact backward pass of the attention-graph model.
//!
//! The backbone is a post-norm decoder-only transformer: causal multi-head
//! self-attention, then a GELU feed-forward block, each wrapped in a residual
//! connection followed by layer normalization. The head reads the final
//! hidden states `h_0..h_T` bidirectionally:
//!
//! ```text
//! class_logits[i]     = W_C h_i                          (i = 1..T)
//! parent_logits[i][j] = (W_Q h_i) . (W_K h_j) / sqrt(d_qk)  (j = 0..T)
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::math::{
    cross_entropy, dot, gelu, gelu_grad, layer_norm, layer_norm_backward, linear, linear_backward,
    softmax, Mat, NormCache,
};
use super::params::{LayerParams, Parameters};
use super::tokenizer::{PositionTargets, TokenSequence};
use super::{ModelConfig, NeuralError};
use crate::tags::NodeType;

/// Head outputs for positions `1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutputs {
    /// `T x 6`
    pub class_logits: Mat,
    /// `T x (T + 1)`, column `j` is candidate parent position `j`.
    pub parent_logits: Mat,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossValue {
    pub total: f64,
    /// Mean node-type cross-entropy.
    pub class: f64,
    /// Mean parent cross-entropy over non-NONE positions (0 when there are none).
    pub parent: f64,
    pub parent_positions: usize,
}

/// Loss gradients with respect to the head outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGrads {
    pub class_logits: Mat,
    pub parent_logits: Mat,
}

struct LayerCache {
    input: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    /// Attention probabilities per head, `n x n`, zero above the diagonal.
    probs: Vec<Mat>,
    attended: Mat,
    norm1: NormCache,
    normed1: Mat,
    ff_pre: Mat,
    ff_act: Mat,
    norm2: NormCache,
}

struct ForwardCache {
    layers: Vec<LayerCache>,
    hidden: Mat,
    query: Mat,
    key: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Parameters,
}

impl Model {
    pub fn new(config: ModelConfig, params: Parameters) -> Result<Self, NeuralError> {
        config.validate()?;
        let expected = Parameters::zeros(&config);
        let shapes_match = expected
            .tensors()
            .iter()
            .zip(params.tensors())
            .all(|(a, b)| a.name == b.name && a.shape == b.shape)
            && expected.tensors().len() == params.tensors().len();
        if !shapes_match {
            return Err(NeuralError::Format("parameters do not match the model config".into()));
        }
        Ok(Model { config, params })
    }

    /// Freshly initialized model, deterministic in `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, NeuralError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = Parameters::init(&config, &mut rng);
        Ok(Model { config, params })
    }

    fn check_len(&self, seq: &TokenSequence) -> Result<(), NeuralError> {
        if seq.ids.is_empty() {
            return Err(NeuralError::EmptySequence);
        }
        if seq.len() > self.config.max_len + 1 {
            return Err(NeuralError::SequenceTooLong {
                len: seq.len() - 1,
                max: self.config.max_len,
            });
        }
        if let Some(&bad) = seq.ids.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(NeuralError::UnknownTokenId(bad));
        }
        Ok(())
    }

    pub fn forward(&self, seq: &TokenSequence) -> Result<ModelOutputs, NeuralError> {
        self.check_len(seq)?;
        let cache = self.run(seq);
        Ok(self.head(&cache))
    }

    /// Embedding output followed by the output of every layer, each `n x d`.
    pub fn hidden_states(&self, seq: &TokenSequence) -> Result<Vec<Mat>, NeuralError> {
        self.check_len(seq)?;
        let cache = self.run(seq);
        let mut out: Vec<Mat> = cache.layers.iter().map(|l| l.input.clone()).collect();
        out.push(cache.hidden);
        Ok(out)
    }

    fn embed(&self, seq: &TokenSequence) -> Mat {
        let d = self.config.d_model;
        let p = &self.params;
        let mut x = Mat::zeros(seq.len(), d);
        for (pos, &id) in seq.ids.iter().enumerate() {
            let tok = &p.token_embedding.data[id as usize * d..(id as usize + 1) * d];
            let posv = &p.position_embedding.data[pos * d..(pos + 1) * d];
            for (j, v) in x.row_mut(pos).iter_mut().enumerate() {
                *v = tok[j] + posv[j];
            }
        }
        x
    }

    fn run(&self, seq: &TokenSequence) -> ForwardCache {
        let mut x = self.embed(seq);
        let mut layers = Vec::with_capacity(self.config.n_layers);
        for layer in &self.params.layers {
            let (out, cache) = self.layer_forward(layer, x);
            layers.push(cache);
            x = out;
        }
        let q = &self.params.parent_query;
        let k = &self.params.parent_key;
        let query = linear(&x, &q.data, None, self.config.d_qk);
        let key = linear(&x, &k.data, None, self.config.d_qk);
        ForwardCache {
            layers,
            hidden: x,
            query,
            key,
        }
    }

    fn layer_forward(&self, lp: &LayerParams, x: Mat) -> (Mat, LayerCache) {
        let c = &self.config;
        let (n, d) = (x.rows, c.d_model);
        let dh = d / c.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let q = linear(&x, &lp.q_weight.data, Some(&lp.q_bias.data), d);
        let k = linear(&x, &lp.k_weight.data, Some(&lp.k_bias.data), d);
        let v = linear(&x, &lp.v_weight.data, Some(&lp.v_bias.data), d);

        let mut attended = Mat::zeros(n, d);
        let mut probs = Vec::with_capacity(c.n_heads);
        for h in 0..c.n_heads {
            let cols = h * dh..(h + 1) * dh;
            let mut p = Mat::zeros(n, n);
            for i in 0..n {
                let qi = &q.row(i)[cols.clone()];
                let scores: Vec<f64> = (0..=i)
                    .map(|j| dot(qi, &k.row(j)[cols.clone()]) * scale)
                    .collect();
                let weights = softmax(&scores);
                p.row_mut(i)[..=i].copy_from_slice(&weights);
                let out = &mut attended.row_mut(i)[cols.clone()];
                for (j, w) in weights.iter().enumerate() {
                    for (o, vj) in out.iter_mut().zip(&v.row(j)[cols.clone()]) {
                        *o += w * vj;
                    }
                }
            }
            probs.push(p);
        }

        let mut r1 = linear(&attended, &lp.out_weight.data, Some(&lp.out_bias.data), d);
        r1.add_assign(&x);
        let (normed1, norm1) = layer_norm(&r1, &lp.ln1_gain.data, &lp.ln1_bias.data);

        let ff_pre = linear(&normed1, &lp.ff_in_weight.data, Some(&lp.ff_in_bias.data), c.d_ff);
        let ff_act = Mat {
            rows: ff_pre.rows,
            cols: ff_pre.cols,
            data: ff_pre.data.iter().map(|&u| gelu(u)).collect(),
        };
        let mut r2 = linear(&ff_act, &lp.ff_out_weight.data, Some(&lp.ff_out_bias.data), d);
        r2.add_assign(&normed1);
        let (out, norm2) = layer_norm(&r2, &lp.ln2_gain.data, &lp.ln2_bias.data);

        let cache = LayerCache {
            input: x,
            q,
            k,
            v,
            probs,
            attended,
            norm1,
            normed1,
            ff_pre,
            ff_act,
            norm2,
        };
        (out, cache)
    }

    fn head(&self, cache: &ForwardCache) -> ModelOutputs {
        let n = cache.hidden.rows;
        let t = n - 1;
        let scale = 1.0 / (self.config.d_qk as f64).sqrt();
        let all_classes = linear(&cache.hidden, &self.params.class_weight.data, None, self.config.n_classes);
        let class_logits = Mat {
            rows: t,
            cols: self.config.n_classes,
            data: all_classes.data[self.config.n_classes..].to_vec(),
        };
        let mut parent_logits = Mat::zeros(t, n);
        for i in 1..n {
            let qi = cache.query.row(i);
            for (j, v) in parent_logits.row_mut(i - 1).iter_mut().enumerate() {
                *v = dot(qi, cache.key.row(j)) * scale;
            }
        }
        ModelOutputs {
            class_logits,
            parent_logits,
        }
    }

    /// Loss for one sequence and its exact gradient with respect to every parameter.
    pub fn loss_and_grad(
        &self,
        seq: &TokenSequence,
        targets: &PositionTargets,
        loss_weight: f64,
    ) -> Result<(LossValue, Parameters), NeuralError> {
        self.check_len(seq)?;
        let cache = self.run(seq);
        let outputs = self.head(&cache);
        let (value, dout) = loss(&outputs, targets, loss_weight)?;
        let grads = self.backward(seq, &cache, &dout);
        Ok((value, grads))
    }

    /// Loss only, without the backward pass.
    pub fn loss(
        &self,
        seq: &TokenSequence,
        targets: &PositionTargets,
        loss_weight: f64,
    ) -> Result<LossValue, NeuralError> {
        let outputs = self.forward(seq)?;
        Ok(loss(&outputs, targets, loss_weight)?.0)
    }

    fn backward(&self, seq: &TokenSequence, cache: &ForwardCache, dout: &OutputGrads) -> Parameters {
        let c = &self.config;
        let p = &self.params;
        let mut g = Parameters::zeros(c);
        let n = cache.hidden.rows;
        let d = c.d_model;

        // Head.
        let mut dclass_full = Mat::zeros(n, c.n_classes);
        dclass_full.data[c.n_classes..].copy_from_slice(&dout.class_logits.data);
        let mut dhidden = linear_backward(
            &dclass_full,
            &cache.hidden,
            &p.class_weight.data,
            &mut g.class_weight.data,
            None,
        );
        let scale = 1.0 / (c.d_qk as f64).sqrt();
        let mut dquery = Mat::zeros(n, c.d_qk);
        let mut dkey = Mat::zeros(n, c.d_qk);
        for i in 1..n {
            let drow = dout.parent_logits.row(i - 1);
            for (j, &gij) in drow.iter().enumerate() {
                if gij == 0.0 {
                    continue;
                }
                let gs = gij * scale;
                for a in 0..c.d_qk {
                    dquery.data[i * c.d_qk + a] += gs * cache.key.get(j, a);
                    dkey.data[j * c.d_qk + a] += gs * cache.query.get(i, a);
                }
            }
        }
        dhidden.add_assign(&linear_backward(
            &dquery,
            &cache.hidden,
            &p.parent_query.data,
            &mut g.parent_query.data,
            None,
        ));
        dhidden.add_assign(&linear_backward(
            &dkey,
            &cache.hidden,
            &p.parent_key.data,
            &mut g.parent_key.data,
            None,
        ));

        // Layers, last to first.
        let mut dx = dhidden;
        for (l, lc) in cache.layers.iter().enumerate().rev() {
            dx = self.layer_backward(&p.layers[l], &mut g.layers[l], lc, &dx);
        }

        // Embeddings.
        for (pos, &id) in seq.ids.iter().enumerate() {
            let row = dx.row(pos);
            let tok = &mut g.token_embedding.data[id as usize * d..(id as usize + 1) * d];
            for (t, v) in tok.iter_mut().zip(row) {
                *t += v;
            }
            let posg = &mut g.position_embedding.data[pos * d..(pos + 1) * d];
            for (t, v) in posg.iter_mut().zip(row) {
                *t += v;
            }
        }
        g
    }

    fn layer_backward(&self, lp: &LayerParams, lg: &mut LayerParams, lc: &LayerCache, dout: &Mat) -> Mat {
        let c = &self.config;
        let n = dout.rows;
        let d = c.d_model;
        let dh = d / c.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let dr2 = layer_norm_backward(
            dout,
            &lc.norm2,
            &lp.ln2_gain.data,
            &mut lg.ln2_gain.data,
            &mut lg.ln2_bias.data,
        );
        let dact = linear_backward(
            &dr2,
            &lc.ff_act,
            &lp.ff_out_weight.data,
            &mut lg.ff_out_weight.data,
            Some(&mut lg.ff_out_bias.data),
        );
        let dpre = Mat {
            rows: dact.rows,
            cols: dact.cols,
            data: dact
                .data
                .iter()
                .zip(&lc.ff_pre.data)
                .map(|(g, &u)| g * gelu_grad(u))
                .collect(),
        };
        let mut dnormed1 = linear_backward(
            &dpre,
            &lc.normed1,
            &lp.ff_in_weight.data,
            &mut lg.ff_in_weight.data,
            Some(&mut lg.ff_in_bias.data),
        );
        dnormed1.add_assign(&dr2);

        let dr1 = layer_norm_backward(
            &dnormed1,
            &lc.norm1,
            &lp.ln1_gain.data,
            &mut lg.ln1_gain.data,
            &mut lg.ln1_bias.data,
        );
        let dattended = linear_backward(
            &dr1,
            &lc.attended,
            &lp.out_weight.data,
            &mut lg.out_weight.data,
            Some(&mut lg.out_bias.data),
        );

        let mut dq = Mat::zeros(n, d);
        let mut dk = Mat::zeros(n, d);
        let mut dv = Mat::zeros(n, d);
        for h in 0..c.n_heads {
            let cols = h * dh..(h + 1) * dh;
            let probs = &lc.probs[h];
            for i in 0..n {
                let doi = &dattended.row(i)[cols.clone()];
                let pi = &probs.row(i)[..=i];
                let dp: Vec<f64> = (0..=i).map(|j| dot(doi, &lc.v.row(j)[cols.clone()])).collect();
                let weighted = dot(pi, &dp);
                for j in 0..=i {
                    let dvj = &mut dv.row_mut(j)[cols.clone()];
                    for (a, &o) in dvj.iter_mut().zip(doi) {
                        *a += pi[j] * o;
                    }
                    let ds = pi[j] * (dp[j] - weighted) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    for a in cols.clone() {
                        dq.data[i * d + a] += ds * lc.k.data[j * d + a];
                        dk.data[j * d + a] += ds * lc.q.data[i * d + a];
                    }
                }
            }
        }

        let mut dx = dr1;
        dx.add_assign(&linear_backward(
            &dq,
            &lc.input,
            &lp.q_weight.data,
            &mut lg.q_weight.data,
            Some(&mut lg.q_bias.data),
        ));
        dx.add_assign(&linear_backward(
            &dk,
            &lc.input,
            &lp.k_weight.data,
            &mut lg.k_weight.data,
            Some(&mut lg.k_bias.data),
        ));
        dx.add_assign(&linear_backward(
            &dv,
            &lc.input,
            &lp.v_weight.data,
            &mut lg.v_weight.data,
            Some(&mut lg.v_bias.data),
        ));
        dx
    }
}

/// Mean node-type cross-entropy plus `loss_weight` times the mean parent
/// cross-entropy over positions whose target type is not NONE. Positions
/// with a NONE target get an exactly zero parent gradient.
pub fn loss(
    outputs: &ModelOutputs,
    targets: &PositionTargets,
    loss_weight: f64,
) -> Result<(LossValue, OutputGrads), NeuralError> {
    let t = outputs.class_logits.rows;
    if targets.types.len() != t || targets.parents.len() != t {
        return Err(NeuralError::LengthMismatch {
            expected: t,
            found: targets.types.len(),
        });
    }
    let mut dclass = Mat::zeros(t, outputs.class_logits.cols);
    let mut dparent = Mat::zeros(t, outputs.parent_logits.cols);
    if t == 0 {
        return Ok((
            LossValue::default(),
            OutputGrads {
                class_logits: dclass,
                parent_logits: dparent,
            },
        ));
    }
    if let Some(&bad) = targets.parents.iter().find(|&&p| p > t) {
        return Err(NeuralError::ParentOutOfRange { parent: bad, len: t });
    }

    let mut class_sum = 0.0;
    for i in 0..t {
        let row = outputs.class_logits.row(i);
        let target = targets.types[i].index();
        class_sum += cross_entropy(row, target);
        let probs = softmax(row);
        for (k, g) in dclass.row_mut(i).iter_mut().enumerate() {
            *g = (probs[k] - if k == target { 1.0 } else { 0.0 }) / t as f64;
        }
    }

    let masked: Vec<usize> = (0..t).filter(|&i| targets.types[i] != NodeType::None).collect();
    let mut parent_sum = 0.0;
    for &i in &masked {
        let row = outputs.parent_logits.row(i);
        let target = targets.parents[i];
        parent_sum += cross_entropy(row, target);
        let probs = softmax(row);
        let m = masked.len() as f64;
        for (k, g) in dparent.row_mut(i).iter_mut().enumerate() {
            *g = loss_weight * (probs[k] - if k == target { 1.0 } else { 0.0 }) / m;
        }
    }

    let class = class_sum / t as f64;
    let parent = if masked.is_empty() {
        0.0
    } else {
        parent_sum / masked.len() as f64
    };
    let value = LossValue {
        total: class + loss_weight * parent,
        class,
        parent,
        parent_positions: masked.len(),
    };
    Ok((
        value,
        OutputGrads {
            class_logits: dclass,
            parent_logits: dparent,
        },
    ))
}

/// Reads tags from head outputs: per word head, the argmax node type and
/// the argmax parent among ROOT and the other word heads. Ties go to the
/// lowest index.
pub fn read_tags(outputs: &ModelOutputs, seq: &TokenSequence) -> Vec<(NodeType, usize)> {
    let argmax = |values: &mut dyn Iterator<Item = (usize, f64)>| {
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in values {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| i).unwrap_or(0)
    };
    seq.word_heads
        .iter()
        .map(|&pos| {
            let class_row = outputs.class_logits.row(pos - 1);
            let class = argmax(&mut class_row.iter().copied().enumerate());
            let parent_row = outputs.parent_logits.row(pos - 1);
            // Candidate 0 is ROOT, candidate w is word w.
            let mut candidates = std::iter::once((0, parent_row[0])).chain(
                seq.word_heads
                    .iter()
                    .enumerate()
                    .map(|(w, &p)| (w + 1, parent_row[p])),
            );
            let parent = argmax(&mut candidates);
            (NodeType::from_index(class).expect("six classes"), parent)
        })
        .collect()
}
