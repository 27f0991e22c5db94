//! Oracle alignment of a ground-truth scene graph onto its description,
//! producing the tagged sentence used as a training target.
//!
//! Matching is greedy: graph nodes are visited longest label first (ties in
//! graph order: objects, attributes, relations), and each takes the earliest
//! span of unconsumed tokens that spells its label or one of its synonyms.
//! The last token of a span is the node's head; the other span tokens become
//! SAME pieces pointing at it.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::graph::{Label, ObjectId, SceneGraph};
use crate::lexicon::Lexicon;
use crate::tags::{words, NodeType, TaggedSentence};

/// Words excluded when counting the useful words of a description.
pub const STOPWORDS: [&str; 4] = ["a", "an", "the", "and"];

/// A graph node that could not be placed in the description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GraphNode {
    Object {
        id: ObjectId,
        label: Label,
    },
    Attribute {
        object: ObjectId,
        label: Label,
    },
    Relation {
        subject: ObjectId,
        label: Label,
        object: ObjectId,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub tagged: TaggedSentence,
    /// Fraction of graph nodes aligned; 1.0 for an empty graph.
    pub coverage: f64,
    pub unaligned_nodes: Vec<GraphNode>,
}

#[derive(Clone, Copy)]
enum NodeRef {
    Object(usize),
    Attribute(usize),
    Relation(usize),
}

/// Half-open token span `[start, end)` over 0-based word positions.
type Span = (usize, usize);

pub fn align(description: &str, graph: &SceneGraph, lexicon: &Lexicon) -> AlignmentResult {
    let tokens = words(description);
    let objects = graph.objects();
    let attributes = graph.attributes();
    let relations = graph.relations();

    let mut order: Vec<(NodeRef, &Label)> = Vec::new();
    order.extend(objects.iter().enumerate().map(|(i, o)| (NodeRef::Object(i), &o.label)));
    order.extend(attributes.iter().enumerate().map(|(i, a)| (NodeRef::Attribute(i), &a.1)));
    order.extend(relations.iter().enumerate().map(|(i, r)| (NodeRef::Relation(i), &r.1)));
    // Stable sort keeps graph order among equal lengths.
    order.sort_by_key(|(_, label)| std::cmp::Reverse(label.word_count()));

    let mut consumed = vec![false; tokens.len()];
    let mut object_span: Vec<Option<Span>> = vec![None; objects.len()];
    let mut attribute_span: Vec<Option<Span>> = vec![None; attributes.len()];
    let mut relation_span: Vec<Option<Span>> = vec![None; relations.len()];
    for (node, label) in order {
        let Some(span) = find_span(&tokens, &consumed, label, lexicon) else {
            continue;
        };
        consumed[span.0..span.1].iter_mut().for_each(|c| *c = true);
        match node {
            NodeRef::Object(i) => object_span[i] = Some(span),
            NodeRef::Attribute(i) => attribute_span[i] = Some(span),
            NodeRef::Relation(i) => relation_span[i] = Some(span),
        }
    }

    let head = |span: Span| span.1; // 1-based index of the span's last token
    let object_head: BTreeMap<ObjectId, usize> = objects
        .iter()
        .zip(&object_span)
        .filter_map(|(o, s)| s.map(|s| (o.id, head(s))))
        .collect();

    // Relations need both endpoints and distinct subject/object tokens.
    let candidate: Vec<bool> = relations
        .iter()
        .zip(&relation_span)
        .map(|((s, _, o), span)| {
            span.is_some() && s != o && object_head.contains_key(s) && object_head.contains_key(o)
        })
        .collect();
    let subjects: BTreeSet<ObjectId> = relations
        .iter()
        .zip(&candidate)
        .filter(|(_, &c)| c)
        .map(|(r, _)| r.0)
        .collect();

    // Each OBJT token has a single parent arc, so the first relation to claim
    // an object wins; objects that also act as subjects stay SUBJ.
    let mut objt_parent: BTreeMap<ObjectId, usize> = BTreeMap::new();
    let mut relation_ok = vec![false; relations.len()];
    for (i, (_, _, o)) in relations.iter().enumerate() {
        if !candidate[i] || subjects.contains(o) || objt_parent.contains_key(o) {
            continue;
        }
        objt_parent.insert(*o, head(relation_span[i].expect("candidate has a span")));
        relation_ok[i] = true;
    }

    let mut tags: Vec<(NodeType, usize)> = vec![(NodeType::None, 0); tokens.len()];
    let mut mark = |span: Span, node_type: NodeType, parent: usize| {
        for t in span.0..span.1 - 1 {
            tags[t] = (NodeType::Same, head(span));
        }
        tags[span.1 - 1] = (node_type, parent);
    };

    let mut unaligned = Vec::new();
    for (o, span) in objects.iter().zip(&object_span) {
        match span {
            Some(span) => match objt_parent.get(&o.id) {
                Some(&pred) => mark(*span, NodeType::Objt, pred),
                None => mark(*span, NodeType::Subj, 0),
            },
            None => unaligned.push(GraphNode::Object {
                id: o.id,
                label: o.label.clone(),
            }),
        }
    }
    for ((object, label), span) in attributes.iter().zip(&attribute_span) {
        match (span, object_head.get(object)) {
            (Some(span), Some(&parent)) => mark(*span, NodeType::Attr, parent),
            _ => unaligned.push(GraphNode::Attribute {
                object: *object,
                label: label.clone(),
            }),
        }
    }
    for (i, (subject, label, object)) in relations.iter().enumerate() {
        if relation_ok[i] {
            let span = relation_span[i].expect("aligned relation has a span");
            mark(span, NodeType::Pred, object_head[subject]);
        } else {
            unaligned.push(GraphNode::Relation {
                subject: *subject,
                label: label.clone(),
                object: *object,
            });
        }
    }

    let total = objects.len() + attributes.len() + relations.len();
    let coverage = if total == 0 {
        1.0
    } else {
        (total - unaligned.len()) as f64 / total as f64
    };
    let tagged = TaggedSentence::new(
        tokens
            .into_iter()
            .zip(tags)
            .map(|(form, (ty, parent))| (form, ty, parent)),
    )
    .expect("alignment produces in-range parents");

    AlignmentResult {
        tagged,
        coverage,
        unaligned_nodes: unaligned,
    }
}

/// Earliest unconsumed span spelling `label` or a synonym. At equal start
/// positions the longer alternative wins.
fn find_span(tokens: &[String], consumed: &[bool], label: &Label, lexicon: &Lexicon) -> Option<Span> {
    let mut alternatives: Vec<Vec<&str>> = Vec::new();
    let synonyms = lexicon.synonyms(label);
    for synonym in &synonyms {
        alternatives.push(synonym.words().collect());
    }
    alternatives.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));

    (0..tokens.len()).find_map(|start| {
        alternatives.iter().find_map(|alt| {
            let end = start + alt.len();
            let fits = end <= tokens.len()
                && !consumed[start..end].iter().any(|&c| c)
                && tokens[start..end].iter().zip(alt).all(|(t, w)| t == w);
            fits.then_some((start, end))
        })
    })
}

/// Number of description words outside [`STOPWORDS`].
pub fn useful_word_count(description: &str) -> usize {
    words(description)
        .iter()
        .filter(|w| !STOPWORDS.contains(&w.as_str()))
        .count()
}
