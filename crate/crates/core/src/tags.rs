//! Six-label token tagging scheme, its CONLL serialization, and the
//! deterministic decoder from tagged tokens to a [`SceneGraph`].
//!
//! Every token carries a [`NodeType`] and the 1-based index of its parent
//! token, where 0 is the virtual ROOT:
//!
//! | type | parent must be |
//! |------|----------------|
//! | SUBJ | ROOT |
//! | PRED | SUBJ |
//! | OBJT | PRED |
//! | ATTR | SUBJ or OBJT |
//! | SAME | any labelled token; the two texts are concatenated |
//! | NONE | nothing, the token is not a node |

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{canonical_text, Label, ObjectInstance, SceneGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeType {
    Subj,
    Pred,
    Objt,
    Attr,
    Same,
    None,
}

impl NodeType {
    pub const COUNT: usize = 6;

    /// Classifier order; argmax ties resolve toward the front.
    pub const ALL: [NodeType; 6] = [
        NodeType::Subj,
        NodeType::Pred,
        NodeType::Objt,
        NodeType::Attr,
        NodeType::Same,
        NodeType::None,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<NodeType> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeType::Subj => "SUBJ",
            NodeType::Pred => "PRED",
            NodeType::Objt => "OBJT",
            NodeType::Attr => "ATTR",
            NodeType::Same => "SAME",
            NodeType::None => "NONE",
        }
    }

    pub fn is_object(self) -> bool {
        matches!(self, NodeType::Subj | NodeType::Objt)
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "SUBJ" => Ok(NodeType::Subj),
            "PRED" => Ok(NodeType::Pred),
            "OBJT" => Ok(NodeType::Objt),
            "ATTR" => Ok(NodeType::Attr),
            "SAME" => Ok(NodeType::Same),
            "NONE" | "_" => Ok(NodeType::None),
            _ => Err(format!("unknown node type '{s}'")),
        }
    }
}

/// What an arc points at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParentKind {
    Root,
    Node(NodeType),
}

/// Arc legality table for `child -> parent`.
pub fn arc_legal(child: NodeType, parent: ParentKind) -> bool {
    use NodeType::*;
    matches!(
        (child, parent),
        (Subj, ParentKind::Root)
            | (Pred, ParentKind::Node(Subj))
            | (Objt, ParentKind::Node(Pred))
            | (Attr, ParentKind::Node(Subj | Objt))
            | (Same, ParentKind::Node(Subj | Pred | Objt | Attr | Same))
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TagError {
    #[error("token {index}: form must be a single non-empty word, got '{form}'")]
    BadForm { index: usize, form: String },
    #[error("token {index}: parent {parent} exceeds sentence length {len}")]
    ParentOutOfRange {
        index: usize,
        parent: usize,
        len: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaggedToken {
    /// 1-based position in the sentence.
    pub index: usize,
    pub form: String,
    pub node_type: NodeType,
    /// Parent position; 0 is ROOT. Always 0 for NONE tokens.
    pub parent: usize,
}

/// Tokens with contiguous indices `1..=T`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct TaggedSentence {
    tokens: Vec<TaggedToken>,
}

impl TaggedSentence {
    /// Builds a sentence from `(form, type, parent)` triples; indices are
    /// assigned from position. NONE parents are normalized to 0.
    pub fn new<S: Into<String>>(
        rows: impl IntoIterator<Item = (S, NodeType, usize)>,
    ) -> Result<Self, TagError> {
        let rows: Vec<(String, NodeType, usize)> = rows
            .into_iter()
            .map(|(form, ty, parent)| (form.into(), ty, parent))
            .collect();
        let len = rows.len();
        let mut tokens = Vec::with_capacity(len);
        for (i, (form, node_type, parent)) in rows.into_iter().enumerate() {
            let index = i + 1;
            if form.is_empty() || form.chars().any(char::is_whitespace) {
                return Err(TagError::BadForm { index, form });
            }
            if parent > len {
                return Err(TagError::ParentOutOfRange { index, parent, len });
            }
            let parent = if node_type == NodeType::None { 0 } else { parent };
            tokens.push(TaggedToken {
                index,
                form,
                node_type,
                parent,
            });
        }
        Ok(TaggedSentence { tokens })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn tokens(&self) -> &[TaggedToken] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token at 1-based `index`.
    pub fn token(&self, index: usize) -> &TaggedToken {
        &self.tokens[index - 1]
    }

    pub fn forms(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.form.as_str())
    }

    pub fn text(&self) -> String {
        self.forms().collect::<Vec<_>>().join(" ")
    }
}

// ---------------------------------------------------------------------------
// Decoding

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DropReason {
    /// The arc points at the token itself or into its own phrase.
    SelfReference,
    /// A SAME chain ends at ROOT or at a NONE token.
    BrokenSameChain,
    /// A SAME chain loops without reaching a labelled token.
    SameCycle,
    /// The child/parent type pair is not allowed.
    IllegalArc { child: NodeType, parent: ParentKind },
    /// A SUBJ arc that does not point at ROOT; the object is still kept.
    SubjectNotRoot,
    /// The parent itself was dropped, so this arc has nothing to attach to.
    ParentDropped,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeReport {
    pub graph: SceneGraph,
    /// `(child_index, reason)`, sorted by child index.
    pub dropped_arcs: Vec<(usize, DropReason)>,
    /// `(head_index, merged SAME indices)`, sorted by head index.
    pub merged_phrases: Vec<(usize, Vec<usize>)>,
}

/// Decodes tagged tokens into a scene graph. Never fails: arcs that break
/// the legality table are dropped and recorded.
pub fn decode(sentence: &TaggedSentence) -> DecodeReport {
    let n = sentence.len();
    let ty = |i: usize| sentence.token(i).node_type;
    let parent = |i: usize| sentence.token(i).parent;

    let mut dropped: BTreeMap<usize, DropReason> = BTreeMap::new();

    // Phase 1: resolve SAME chains to their labelled head token.
    // head_of[i] is Some(h) when token i belongs to the node headed by h.
    let mut head_of: Vec<Option<usize>> = vec![None; n + 1];
    for i in 1..=n {
        match ty(i) {
            NodeType::None => {}
            NodeType::Same => match follow_same_chain(sentence, i) {
                Ok(head) => head_of[i] = Some(head),
                Err(reason) => {
                    dropped.insert(i, reason);
                }
            },
            _ => head_of[i] = Some(i),
        }
    }

    let mut pieces: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 1..=n {
        if ty(i) == NodeType::Same {
            if let Some(h) = head_of[i] {
                pieces.entry(h).or_default().push(i);
            }
        }
    }
    let label_of = |head: usize| -> Label {
        let mut positions = pieces.get(&head).cloned().unwrap_or_default();
        positions.push(head);
        positions.sort_unstable();
        let text = positions
            .iter()
            .map(|&p| sentence.token(p).form.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        Label::canonicalize(&text).unwrap_or_else(|_| {
            Label::canonicalize("_").expect("placeholder label is non-empty")
        })
    };

    // Phases 2 and 3: create nodes and check each arc against its resolved parent.
    let mut objects = Vec::new();
    let mut pred_subject: BTreeMap<usize, usize> = BTreeMap::new();
    let mut attr_parent: BTreeMap<usize, usize> = BTreeMap::new();
    let mut objt_parent: BTreeMap<usize, usize> = BTreeMap::new();

    for i in 1..=n {
        let child = ty(i);
        if matches!(child, NodeType::None | NodeType::Same) {
            continue;
        }
        if child.is_object() {
            objects.push(ObjectInstance::new(i as u64, label_of(i)));
        }
        let p = parent(i);
        let target = if p == 0 {
            Ok(ParentKind::Root)
        } else {
            match head_of[p] {
                Some(h) if h == i => Err(DropReason::SelfReference),
                Some(h) => Ok(ParentKind::Node(ty(h))),
                None if ty(p) == NodeType::Same => Err(DropReason::ParentDropped),
                None => Ok(ParentKind::Node(ty(p))),
            }
        };
        let kind = match target {
            Ok(kind) => kind,
            Err(reason) => {
                dropped.insert(i, reason);
                continue;
            }
        };
        if !arc_legal(child, kind) {
            let reason = if child == NodeType::Subj {
                DropReason::SubjectNotRoot
            } else {
                DropReason::IllegalArc {
                    child,
                    parent: kind,
                }
            };
            dropped.insert(i, reason);
            continue;
        }
        let resolved = if p == 0 { 0 } else { head_of[p].unwrap_or(p) };
        match child {
            NodeType::Pred => {
                pred_subject.insert(i, resolved);
            }
            NodeType::Attr => {
                attr_parent.insert(i, resolved);
            }
            NodeType::Objt => {
                objt_parent.insert(i, resolved);
            }
            _ => {}
        }
    }

    // Phase 4: emit attribute pairs and complete relation triples.
    let attributes = attr_parent
        .iter()
        .map(|(&a, &o)| (o as u64, label_of(a)))
        .collect();
    let mut relations = Vec::new();
    for (&o, &pred) in &objt_parent {
        match pred_subject.get(&pred) {
            Some(&subject) => relations.push((subject as u64, label_of(pred), o as u64)),
            None => {
                dropped.insert(o, DropReason::ParentDropped);
            }
        }
    }

    let graph = SceneGraph::build(objects, attributes, relations)
        .expect("decoder only references token ids it created");
    DecodeReport {
        graph,
        dropped_arcs: dropped.into_iter().collect(),
        merged_phrases: pieces.into_iter().collect(),
    }
}

fn follow_same_chain(sentence: &TaggedSentence, start: usize) -> Result<usize, DropReason> {
    let n = sentence.len();
    let mut current = start;
    let mut hops = 0;
    loop {
        let p = sentence.token(current).parent;
        if p == start {
            return Err(if hops == 0 {
                DropReason::SelfReference
            } else {
                DropReason::SameCycle
            });
        }
        if p == 0 {
            return Err(DropReason::BrokenSameChain);
        }
        hops += 1;
        if hops > n {
            return Err(DropReason::SameCycle);
        }
        match sentence.token(p).node_type {
            NodeType::Same => current = p,
            NodeType::None => return Err(DropReason::BrokenSameChain),
            _ => return Ok(p),
        }
    }
}

// ---------------------------------------------------------------------------
// CONLL

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ConllError {
    pub line: usize,
    pub message: String,
}

fn parse_err(line: usize, message: impl Into<String>) -> ConllError {
    ConllError {
        line,
        message: message.into(),
    }
}

/// Reads tab-separated rows `INDEX FORM HEAD ARC_LABEL NODE_TYPE`, one
/// sentence per blank-line-separated block.
pub fn read_conll(text: &str) -> Result<Vec<TaggedSentence>, ConllError> {
    let mut sentences = Vec::new();
    let mut block: Vec<(usize, &str)> = Vec::new();
    for (i, line) in text.split('\n').enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            if !block.is_empty() {
                sentences.push(parse_block(&block)?);
                block.clear();
            }
        } else {
            block.push((i + 1, line));
        }
    }
    if !block.is_empty() {
        sentences.push(parse_block(&block)?);
    }
    Ok(sentences)
}

fn parse_block(rows: &[(usize, &str)]) -> Result<TaggedSentence, ConllError> {
    let len = rows.len();
    let mut parsed = Vec::with_capacity(len);
    for (expected, &(line, row)) in (1..).zip(rows) {
        let cols: Vec<&str> = row.split('\t').collect();
        if cols.len() != 5 {
            return Err(parse_err(
                line,
                format!("expected 5 tab-separated columns, found {}", cols.len()),
            ));
        }
        let index: usize = cols[0]
            .parse()
            .map_err(|_| parse_err(line, format!("bad index '{}'", cols[0])))?;
        if index != expected {
            return Err(parse_err(
                line,
                format!("index {index} is not contiguous (expected {expected})"),
            ));
        }
        let form = cols[1];
        if form.is_empty() || form.chars().any(char::is_whitespace) {
            return Err(parse_err(line, "empty or multi-word form"));
        }
        let node_type: NodeType = cols[4].parse().map_err(|e: String| parse_err(line, e))?;
        let parent = match cols[2] {
            "_" if node_type == NodeType::None => 0,
            "_" => return Err(parse_err(line, "missing head for a labelled token")),
            head => head
                .parse::<usize>()
                .map_err(|_| parse_err(line, format!("bad head '{head}'")))?,
        };
        if parent > len {
            return Err(parse_err(
                line,
                format!("head {parent} exceeds sentence length {len}"),
            ));
        }
        parsed.push((form.to_string(), node_type, parent));
    }
    TaggedSentence::new(parsed).map_err(|e| parse_err(rows[0].0, e.to_string()))
}

/// Writes sentences separated by one blank line. Empty sentences have no
/// representation and are skipped.
pub fn write_conll(sentences: &[TaggedSentence]) -> String {
    let mut out = String::new();
    let mut first = true;
    for sentence in sentences.iter().filter(|s| !s.is_empty()) {
        if !first {
            out.push('\n');
        }
        first = false;
        for token in sentence.tokens() {
            let (head, arc, ty) = match token.node_type {
                NodeType::None => ("_".to_string(), "_", "_"),
                t @ (NodeType::Attr | NodeType::Same) => (token.parent.to_string(), t.as_str(), t.as_str()),
                t => (token.parent.to_string(), "_", t.as_str()),
            };
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                token.index, token.form, head, arc, ty
            ));
        }
    }
    out
}

/// Splits a description into canonical whitespace tokens.
pub fn words(description: &str) -> Vec<String> {
    canonical_text(description)
        .split(' ')
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}
