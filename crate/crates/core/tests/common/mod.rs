//! Helpers shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgforge_core::neural::{Model, ModelConfig, PositionTargets, TokenSequence};
use sgforge_core::NodeType;

pub fn small_config(vocab_size: usize, d_model: usize) -> ModelConfig {
    ModelConfig {
        vocab_size,
        d_model,
        n_layers: 2,
        n_heads: 2,
        d_ff: 2 * d_model,
        max_len: 12,
        d_qk: d_model / 2,
        ..ModelConfig::default()
    }
}

/// ROOT followed by `t` random non-reserved ids.
pub fn random_sequence<R: Rng>(rng: &mut R, t: usize, vocab_size: usize) -> TokenSequence {
    let mut ids = vec![0u32];
    ids.extend((0..t).map(|_| rng.random_range(1..vocab_size as u32)));
    TokenSequence {
        ids,
        word_heads: (1..=t).collect(),
        words: (0..t).map(|i| format!("w{i}")).collect(),
    }
}

pub fn random_targets<R: Rng>(rng: &mut R, t: usize) -> PositionTargets {
    PositionTargets {
        types: (0..t)
            .map(|_| NodeType::ALL[rng.random_range(0..NodeType::COUNT)])
            .collect(),
        parents: (0..t).map(|_| rng.random_range(0..=t)).collect(),
    }
}

/// Adds N(0, std) noise to every parameter. At the 0.02 init scale the
/// attention query/key gradients sit near 1e-10, where finite differences
/// are pure rounding noise, so gradient checks run at a noisier point.
pub fn perturbed(model: &Model, std: f64, seed: u64) -> Model {
    use rand_distr::{Distribution, Normal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).unwrap();
    let mut out = model.clone();
    for t in out.params.tensors_mut() {
        for v in &mut t.data {
            *v += normal.sample(&mut rng);
        }
    }
    out
}

pub struct GradientError {
    pub name: String,
    /// `|a - n| / max(|a|, |n|)`
    pub relative: f64,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
}

impl GradientError {
    /// Below this norm a tensor's gradient counts as identically zero, as
    /// the key bias is: it shifts every score in a softmax row equally.
    pub const ZERO_NORM: f64 = 1e-9;

    pub fn passes(&self, tolerance: f64) -> bool {
        self.relative < tolerance
            || (self.analytic_norm < Self::ZERO_NORM && self.numeric_norm < Self::ZERO_NORM)
    }
}

/// Per-tensor comparison of the analytic gradient with central differences.
pub fn gradient_errors(
    model: &Model,
    seq: &TokenSequence,
    targets: &PositionTargets,
    loss_weight: f64,
    step: f64,
) -> Vec<GradientError> {
    let (_, analytic) = model.loss_and_grad(seq, targets, loss_weight).unwrap();
    let mut probe = model.clone();
    let mut out = Vec::new();
    let names: Vec<String> = model.params.tensors().iter().map(|t| t.name.clone()).collect();
    for (k, name) in names.iter().enumerate() {
        let len = model.params.tensors()[k].data.len();
        let a = &analytic.tensors()[k].data;
        let mut diff2 = 0.0;
        let mut a2 = 0.0;
        let mut n2 = 0.0;
        for i in 0..len {
            let original = probe.params.tensors()[k].data[i];
            probe.params.tensors_mut()[k].data[i] = original + step;
            let plus = probe.loss(seq, targets, loss_weight).unwrap().total;
            probe.params.tensors_mut()[k].data[i] = original - step;
            let minus = probe.loss(seq, targets, loss_weight).unwrap().total;
            probe.params.tensors_mut()[k].data[i] = original;
            let numeric = (plus - minus) / (2.0 * step);
            diff2 += (a[i] - numeric).powi(2);
            a2 += a[i] * a[i];
            n2 += numeric * numeric;
        }
        let scale = a2.sqrt().max(n2.sqrt());
        let relative = if diff2 == 0.0 { 0.0 } else { diff2.sqrt() / scale };
        out.push(GradientError {
            name: name.clone(),
            relative,
            analytic_norm: a2.sqrt(),
            numeric_norm: n2.sqrt(),
        });
    }
    out
}

/// Size of a maximum one-to-one matching, by exhaustive search.
pub fn brute_force_matching<T>(pred: &[T], reference: &[T], compatible: impl Fn(&T, &T) -> bool) -> usize {
    fn go<T>(
        i: usize,
        pred: &[T],
        reference: &[T],
        used: &mut Vec<bool>,
        compatible: &dyn Fn(&T, &T) -> bool,
    ) -> usize {
        if i == pred.len() {
            return 0;
        }
        let mut best = go(i + 1, pred, reference, used, compatible);
        for j in 0..reference.len() {
            if !used[j] && compatible(&pred[i], &reference[j]) {
                used[j] = true;
                best = best.max(1 + go(i + 1, pred, reference, used, compatible));
                used[j] = false;
            }
        }
        best
    }
    let mut used = vec![false; reference.len()];
    go(0, pred, reference, &mut used, &compatible)
}

use sgforge_core::tags::{DecodeReport, DropReason, ParentKind};
use sgforge_core::{arc_legal, TaggedSentence};

/// Follows SAME parents from `start` to the first labelled token.
fn resolve(s: &TaggedSentence, start: usize) -> Option<usize> {
    let mut seen = std::collections::BTreeSet::new();
    let mut p = start;
    loop {
        if p == 0 || !seen.insert(p) {
            return None;
        }
        match s.token(p).node_type {
            NodeType::None => return None,
            NodeType::Same => p = s.token(p).parent,
            _ => return Some(p),
        }
    }
}

/// SAME tokens whose own chain comes back to a token already visited.
pub fn same_cycle_members(s: &TaggedSentence) -> Vec<usize> {
    (1..=s.len())
        .filter(|&i| s.token(i).node_type == NodeType::Same)
        .filter(|&i| {
            let mut seen = std::collections::BTreeSet::new();
            let mut p = i;
            while p != 0 && s.token(p).node_type == NodeType::Same {
                if !seen.insert(p) {
                    return true;
                }
                p = s.token(p).parent;
            }
            false
        })
        .collect()
}

/// Independent legality audit of a decode; returns every violation found.
pub fn decode_violations(s: &TaggedSentence, report: &DecodeReport) -> Vec<String> {
    let mut bad = Vec::new();
    let dropped: std::collections::BTreeMap<usize, DropReason> =
        report.dropped_arcs.iter().cloned().collect();
    for i in 1..=s.len() {
        let tok = s.token(i);
        if tok.node_type == NodeType::None || dropped.contains_key(&i) {
            continue;
        }
        if tok.node_type == NodeType::Same {
            let p = tok.parent;
            let ok = p != 0
                && s.token(p).node_type != NodeType::None
                && arc_legal(NodeType::Same, ParentKind::Node(s.token(p).node_type))
                && resolve(s, i).is_some();
            if !ok {
                bad.push(format!("kept SAME arc {i} -> {p}"));
            }
            continue;
        }
        let kind = match tok.parent {
            0 => Some(ParentKind::Root),
            p => resolve(s, p).map(|h| ParentKind::Node(s.token(h).node_type)),
        };
        match kind {
            Some(k) if arc_legal(tok.node_type, k) => {}
            _ => bad.push(format!("kept arc {i} ({}) -> {}", tok.node_type, tok.parent)),
        }
    }
    for i in same_cycle_members(s) {
        if !matches!(
            dropped.get(&i),
            Some(DropReason::SameCycle | DropReason::SelfReference)
        ) {
            bad.push(format!("SAME cycle through {i} not reported"));
        }
    }
    let g = &report.graph;
    let ty = |id: u64| s.token(id as usize).node_type;
    for o in g.objects() {
        if !(1..=s.len() as u64).contains(&o.id) || !ty(o.id).is_object() {
            bad.push(format!("object {} is not a SUBJ/OBJT token", o.id));
        }
    }
    for (o, _) in g.attributes() {
        if g.object(*o).is_none() {
            bad.push(format!("attribute on missing object {o}"));
        }
    }
    for (sub, _, obj) in g.relations() {
        if ty(*sub) != NodeType::Subj || ty(*obj) != NodeType::Objt {
            bad.push(format!("relation {sub} -> {obj} has wrong end types"));
        }
    }
    bad
}

pub fn random_sentence<R: Rng>(rng: &mut R, max_len: usize) -> TaggedSentence {
    let n = rng.random_range(0..=max_len);
    let forms = ["red", "bus", "on", "the", "dog", "in", "front", "of", "tall", "tree"];
    TaggedSentence::new((0..n).map(|_| {
        (
            forms[rng.random_range(0..forms.len())],
            NodeType::ALL[rng.random_range(0..NodeType::COUNT)],
            rng.random_range(0..=n),
        )
    }))
    .unwrap()
}
