//! Scene graph data model, plus the label-level tuple view used for scoring.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of an object instance, unique within one graph.
pub type ObjectId = u64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("label is empty after canonicalization")]
    EmptyLabel,
    #[error("reference to unknown object id {0}")]
    DanglingReference(ObjectId),
    #[error("object id {0} occurs more than once")]
    DuplicateObjectId(ObjectId),
}

/// A canonical label: lowercase, trimmed, words separated by single spaces.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Label(String);

impl Label {
    /// Lowercases and collapses whitespace. Fails on whitespace-only input.
    pub fn canonicalize(raw: &str) -> Result<Label, GraphError> {
        let text = canonical_text(raw);
        if text.is_empty() {
            return Err(GraphError::EmptyLabel);
        }
        Ok(Label(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.0.split(' ')
    }

    pub fn word_count(&self) -> usize {
        self.words().count()
    }
}

/// Lowercase and join whitespace-separated words with single spaces. May be empty.
pub fn canonical_text(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

impl TryFrom<String> for Label {
    type Error = GraphError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Label::canonicalize(&value)
    }
}

impl From<Label> for String {
    fn from(label: Label) -> String {
        label.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for Label {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::canonicalize(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: ObjectId,
    pub label: Label,
}

impl ObjectInstance {
    pub fn new(id: ObjectId, label: Label) -> Self {
        Self { id, label }
    }
}

pub type Attribute = (ObjectId, Label);
pub type Relation = (ObjectId, Label, ObjectId);

/// A validated scene graph `<O, A, R>`.
///
/// Object identity is by id; two instances may carry the same label.
/// Attributes and relations are deduplicated keeping first-occurrence order.
/// Relations whose subject and object coincide are kept but listed in
/// [`SceneGraph::self_relations`].
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "GraphJson", into = "GraphJson")]
pub struct SceneGraph {
    objects: Vec<ObjectInstance>,
    attributes: Vec<Attribute>,
    relations: Vec<Relation>,
    self_relations: Vec<usize>,
}

impl SceneGraph {
    pub fn build(
        objects: Vec<ObjectInstance>,
        attributes: Vec<Attribute>,
        relations: Vec<Relation>,
    ) -> Result<Self, GraphError> {
        let mut ids = HashSet::with_capacity(objects.len());
        for object in &objects {
            if !ids.insert(object.id) {
                return Err(GraphError::DuplicateObjectId(object.id));
            }
        }
        let check = |id: ObjectId| {
            if ids.contains(&id) {
                Ok(())
            } else {
                Err(GraphError::DanglingReference(id))
            }
        };

        let mut seen = HashSet::new();
        let mut unique_attributes = Vec::with_capacity(attributes.len());
        for attribute in attributes {
            check(attribute.0)?;
            if seen.insert(attribute.clone()) {
                unique_attributes.push(attribute);
            }
        }

        let mut seen = HashSet::new();
        let mut unique_relations = Vec::with_capacity(relations.len());
        let mut self_relations = Vec::new();
        for relation in relations {
            check(relation.0)?;
            check(relation.2)?;
            if seen.insert(relation.clone()) {
                if relation.0 == relation.2 {
                    self_relations.push(unique_relations.len());
                }
                unique_relations.push(relation);
            }
        }

        Ok(SceneGraph {
            objects,
            attributes: unique_attributes,
            relations: unique_relations,
            self_relations,
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn objects(&self) -> &[ObjectInstance] {
        &self.objects
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    /// Indices into [`SceneGraph::relations`] of relations linking an object to itself.
    pub fn self_relations(&self) -> &[usize] {
        &self.self_relations
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn object(&self, id: ObjectId) -> Option<&ObjectInstance> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn into_parts(self) -> (Vec<ObjectInstance>, Vec<Attribute>, Vec<Relation>) {
        (self.objects, self.attributes, self.relations)
    }

    pub fn tuples(&self) -> TupleSet {
        TupleSet::from_graph(self)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphJson {
    pub objects: Vec<ObjectInstance>,
    #[serde(default)]
    pub attributes: Vec<Attribute>,
    #[serde(default)]
    pub relations: Vec<Relation>,
}

impl TryFrom<GraphJson> for SceneGraph {
    type Error = GraphError;

    fn try_from(json: GraphJson) -> Result<Self, Self::Error> {
        SceneGraph::build(json.objects, json.attributes, json.relations)
    }
}

impl From<SceneGraph> for GraphJson {
    fn from(graph: SceneGraph) -> Self {
        let (objects, attributes, relations) = graph.into_parts();
        GraphJson {
            objects,
            attributes,
            relations,
        }
    }
}

/// One scoring tuple. The derived ordering places objects before attributes
/// before relations, then compares labels lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tuple {
    Object(Label),
    Attribute(Label, Label),
    Relation(Label, Label, Label),
}

impl Tuple {
    pub fn arity(&self) -> usize {
        match self {
            Tuple::Object(..) => 1,
            Tuple::Attribute(..) => 2,
            Tuple::Relation(..) => 3,
        }
    }

    pub fn labels(&self) -> Vec<&Label> {
        match self {
            Tuple::Object(a) => vec![a],
            Tuple::Attribute(a, b) => vec![a, b],
            Tuple::Relation(a, b, c) => vec![a, b, c],
        }
    }
}

impl fmt::Display for Tuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tuple::Object(a) => write!(f, "[{a}]"),
            Tuple::Attribute(a, b) => write!(f, "({a}, {b})"),
            Tuple::Relation(a, b, c) => write!(f, "({a}, {b}, {c})"),
        }
    }
}

/// Label-level tuples of a graph with set semantics.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TupleSet {
    pub unary: BTreeSet<Label>,
    pub binary: BTreeSet<(Label, Label)>,
    pub ternary: BTreeSet<(Label, Label, Label)>,
}

impl TupleSet {
    pub fn from_graph(graph: &SceneGraph) -> Self {
        let label_of = |id: ObjectId| {
            graph
                .object(id)
                .map(|o| o.label.clone())
                .expect("validated graph references known ids")
        };
        let mut set = TupleSet::default();
        for object in graph.objects() {
            set.unary.insert(object.label.clone());
        }
        for (id, attribute) in graph.attributes() {
            set.binary.insert((label_of(*id), attribute.clone()));
        }
        for (subject, predicate, object) in graph.relations() {
            set.ternary
                .insert((label_of(*subject), predicate.clone(), label_of(*object)));
        }
        set
    }

    pub fn len(&self) -> usize {
        self.unary.len() + self.binary.len() + self.ternary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&mut self, tuple: Tuple) -> bool {
        match tuple {
            Tuple::Object(a) => self.unary.insert(a),
            Tuple::Attribute(a, b) => self.binary.insert((a, b)),
            Tuple::Relation(a, b, c) => self.ternary.insert((a, b, c)),
        }
    }

    pub fn contains(&self, tuple: &Tuple) -> bool {
        match tuple {
            Tuple::Object(a) => self.unary.contains(a),
            Tuple::Attribute(a, b) => self.binary.contains(&(a.clone(), b.clone())),
            Tuple::Relation(a, b, c) => {
                self.ternary
                    .contains(&(a.clone(), b.clone(), c.clone()))
            }
        }
    }

    /// All tuples in canonical order: unary, binary, ternary, each lexicographic.
    pub fn iter(&self) -> impl Iterator<Item = Tuple> + '_ {
        self.unary
            .iter()
            .map(|a| Tuple::Object(a.clone()))
            .chain(
                self.binary
                    .iter()
                    .map(|(a, b)| Tuple::Attribute(a.clone(), b.clone())),
            )
            .chain(
                self.ternary
                    .iter()
                    .map(|(a, b, c)| Tuple::Relation(a.clone(), b.clone(), c.clone())),
            )
    }

    pub fn is_subset(&self, other: &TupleSet) -> bool {
        self.unary.is_subset(&other.unary)
            && self.binary.is_subset(&other.binary)
            && self.ternary.is_subset(&other.ternary)
    }
}

impl FromIterator<Tuple> for TupleSet {
    fn from_iter<I: IntoIterator<Item = Tuple>>(iter: I) -> Self {
        let mut set = TupleSet::default();
        for tuple in iter {
            set.insert(tuple);
        }
        set
    }
}
