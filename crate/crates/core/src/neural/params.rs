//! Named parameter tensors of the attention-graph model.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{ModelConfig, NeuralError};

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Tensor {
            name: name.into(),
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    fn filled(name: impl Into<String>, shape: &[usize], value: f64) -> Self {
        let mut t = Tensor::zeros(name, shape);
        t.data.fill(value);
        t
    }

    fn normal<R: Rng>(name: impl Into<String>, shape: &[usize], rng: &mut R) -> Self {
        let dist = Normal::new(0.0, INIT_STD).expect("valid deviation");
        let mut t = Tensor::zeros(name, shape);
        // Values start out representable in 32 bits, like every later update.
        t.data.iter_mut().for_each(|v| *v = dist.sample(rng) as f32 as f64);
        t
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub q_weight: Tensor,
    pub q_bias: Tensor,
    pub k_weight: Tensor,
    pub k_bias: Tensor,
    pub v_weight: Tensor,
    pub v_bias: Tensor,
    pub out_weight: Tensor,
    pub out_bias: Tensor,
    pub ln1_gain: Tensor,
    pub ln1_bias: Tensor,
    pub ff_in_weight: Tensor,
    pub ff_in_bias: Tensor,
    pub ff_out_weight: Tensor,
    pub ff_out_bias: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_bias: Tensor,
}

impl LayerParams {
    fn tensors(&self) -> [&Tensor; 16] {
        [
            &self.q_weight,
            &self.q_bias,
            &self.k_weight,
            &self.k_bias,
            &self.v_weight,
            &self.v_bias,
            &self.out_weight,
            &self.out_bias,
            &self.ln1_gain,
            &self.ln1_bias,
            &self.ff_in_weight,
            &self.ff_in_bias,
            &self.ff_out_weight,
            &self.ff_out_bias,
            &self.ln2_gain,
            &self.ln2_bias,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 16] {
        [
            &mut self.q_weight,
            &mut self.q_bias,
            &mut self.k_weight,
            &mut self.k_bias,
            &mut self.v_weight,
            &mut self.v_bias,
            &mut self.out_weight,
            &mut self.out_bias,
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.ff_in_weight,
            &mut self.ff_in_bias,
            &mut self.ff_out_weight,
            &mut self.ff_out_bias,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
        ]
    }
}

/// Backbone weights plus the head's class projection and parent query/key
/// projections. Gradients and optimizer moments reuse this layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub token_embedding: Tensor,
    pub position_embedding: Tensor,
    pub layers: Vec<LayerParams>,
    pub class_weight: Tensor,
    pub parent_query: Tensor,
    pub parent_key: Tensor,
}

impl Parameters {
    /// All-zero tensors with the layout implied by `config`.
    pub fn zeros(config: &ModelConfig) -> Self {
        Self::build(config, &mut |name, shape, _| Tensor::zeros(name, shape))
    }

    /// Normal(0, 0.02) weights and embeddings, zero biases, unit norm gains.
    pub fn init<R: Rng>(config: &ModelConfig, rng: &mut R) -> Self {
        Self::build(config, &mut |name, shape, kind| match kind {
            Init::Normal => Tensor::normal(name, shape, rng),
            Init::Zero => Tensor::zeros(name, shape),
            Init::One => Tensor::filled(name, shape, 1.0),
        })
    }

    fn build(config: &ModelConfig, make: &mut dyn FnMut(String, &[usize], Init) -> Tensor) -> Self {
        let d = config.d_model;
        let ff = config.d_ff;
        let token_embedding = make("embed.token".into(), &[config.vocab_size, d], Init::Normal);
        let position_embedding =
            make("embed.position".into(), &[config.max_len + 1, d], Init::Normal);
        let layers = (0..config.n_layers)
            .map(|l| {
                let mut t = |suffix: &str, shape: &[usize], kind| {
                    make(format!("layers.{l}.{suffix}"), shape, kind)
                };
                LayerParams {
                    q_weight: t("attn.q.weight", &[d, d], Init::Normal),
                    q_bias: t("attn.q.bias", &[d], Init::Zero),
                    k_weight: t("attn.k.weight", &[d, d], Init::Normal),
                    k_bias: t("attn.k.bias", &[d], Init::Zero),
                    v_weight: t("attn.v.weight", &[d, d], Init::Normal),
                    v_bias: t("attn.v.bias", &[d], Init::Zero),
                    out_weight: t("attn.out.weight", &[d, d], Init::Normal),
                    out_bias: t("attn.out.bias", &[d], Init::Zero),
                    ln1_gain: t("ln1.gain", &[d], Init::One),
                    ln1_bias: t("ln1.bias", &[d], Init::Zero),
                    ff_in_weight: t("ff.in.weight", &[ff, d], Init::Normal),
                    ff_in_bias: t("ff.in.bias", &[ff], Init::Zero),
                    ff_out_weight: t("ff.out.weight", &[d, ff], Init::Normal),
                    ff_out_bias: t("ff.out.bias", &[d], Init::Zero),
                    ln2_gain: t("ln2.gain", &[d], Init::One),
                    ln2_bias: t("ln2.bias", &[d], Init::Zero),
                }
            })
            .collect();
        let class_weight = make("head.class.weight".into(), &[config.n_classes, d], Init::Normal);
        let parent_query = make("head.parent_query.weight".into(), &[config.d_qk, d], Init::Normal);
        let parent_key = make("head.parent_key.weight".into(), &[config.d_qk, d], Init::Normal);
        Parameters {
            token_embedding,
            position_embedding,
            layers,
            class_weight,
            parent_query,
            parent_key,
        }
    }

    /// Tensors in their stable order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.token_embedding, &self.position_embedding];
        for layer in &self.layers {
            out.extend(layer.tensors());
        }
        out.extend([&self.class_weight, &self.parent_query, &self.parent_key]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.token_embedding, &mut self.position_embedding];
        for layer in &mut self.layers {
            out.extend(layer.tensors_mut());
        }
        out.extend([
            &mut self.class_weight,
            &mut self.parent_query,
            &mut self.parent_key,
        ]);
        out
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors().into_iter().find(|t| t.name == name)
    }

    /// Rebuilds parameters from named tensors, checking names and shapes
    /// against `config`.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Tensor>) -> Result<Self, NeuralError> {
        let mut params = Parameters::zeros(config);
        let expected = params.tensors().len();
        if tensors.len() != expected {
            return Err(NeuralError::Format(format!(
                "expected {expected} tensors, found {}",
                tensors.len()
            )));
        }
        for (slot, tensor) in params.tensors_mut().into_iter().zip(tensors) {
            if slot.name != tensor.name || slot.shape != tensor.shape || tensor.data.len() != slot.len() {
                return Err(NeuralError::Format(format!(
                    "tensor '{}' {:?} does not match expected '{}' {:?}",
                    tensor.name, tensor.shape, slot.name, slot.shape
                )));
            }
            *slot = tensor;
        }
        Ok(params)
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Parameters) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Rounds every value to the nearest 32-bit float.
    pub fn round_to_f32(&mut self) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }
}

#[derive(Clone, Copy)]
enum Init {
    Normal,
    Zero,
    One,
}
