//! Region datasets read from JSON lines and split by image id. Also a
//! grammar-driven synthetic corpus whose graphs align exactly with their
//! descriptions.

use std::collections::{BTreeSet, HashSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::STOPWORDS;
use crate::graph::{Attribute, GraphError, Label, ObjectId, ObjectInstance, Relation, SceneGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegionJson", into = "RegionJson")]
pub struct Region {
    pub image_id: u64,
    pub region_id: u64,
    pub description: String,
    pub graph: SceneGraph,
}

/// On-disk record: `{image_id, region_id, phrase, objects, attributes, relationships}`.
/// Labels stay raw strings here so that bad labels surface as graph errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionJson {
    pub image_id: u64,
    pub region_id: u64,
    pub phrase: String,
    #[serde(default)]
    pub objects: Vec<RawObject>,
    #[serde(default)]
    pub attributes: Vec<(ObjectId, String)>,
    #[serde(default)]
    pub relationships: Vec<(ObjectId, String, ObjectId)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawObject {
    pub id: ObjectId,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegionError {
    #[error("region description is empty")]
    EmptyDescription,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl TryFrom<RegionJson> for Region {
    type Error = RegionError;

    fn try_from(json: RegionJson) -> Result<Self, Self::Error> {
        if json.phrase.trim().is_empty() {
            return Err(RegionError::EmptyDescription);
        }
        let objects = json
            .objects
            .into_iter()
            .map(|o| Ok(ObjectInstance::new(o.id, Label::canonicalize(&o.label)?)))
            .collect::<Result<Vec<_>, GraphError>>()?;
        let attributes = json
            .attributes
            .into_iter()
            .map(|(id, a)| Ok((id, Label::canonicalize(&a)?)))
            .collect::<Result<Vec<Attribute>, GraphError>>()?;
        let relations = json
            .relationships
            .into_iter()
            .map(|(s, r, o)| Ok((s, Label::canonicalize(&r)?, o)))
            .collect::<Result<Vec<Relation>, GraphError>>()?;
        let graph = SceneGraph::build(objects, attributes, relations)?;
        Ok(Region {
            image_id: json.image_id,
            region_id: json.region_id,
            description: json.phrase,
            graph,
        })
    }
}

impl From<Region> for RegionJson {
    fn from(region: Region) -> Self {
        let (objects, attributes, relations) = region.graph.into_parts();
        RegionJson {
            image_id: region.image_id,
            region_id: region.region_id,
            phrase: region.description,
            objects: objects
                .into_iter()
                .map(|o| RawObject {
                    id: o.id,
                    label: o.label.into(),
                })
                .collect(),
            attributes: attributes.into_iter().map(|(id, a)| (id, a.into())).collect(),
            relationships: relations
                .into_iter()
                .map(|(s, r, o)| (s, r.into(), o))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RejectReason {
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("region description is empty")]
    EmptyDescription,
    #[error("invalid graph: {0}")]
    Graph(GraphError),
    #[error("region id {0} already seen")]
    DuplicateRegionId(u64),
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub regions: Vec<Region>,
    /// `(1-based line, reason)` for every rejected record.
    pub rejected: Vec<(usize, RejectReason)>,
}

/// Parses a JSON-lines regions file. Bad records are collected, never fatal.
pub fn ingest(text: &str) -> Ingested {
    let mut out = Ingested::default();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let json: RegionJson = match serde_json::from_str(line) {
            Ok(json) => json,
            Err(e) => {
                out.rejected.push((i + 1, RejectReason::Malformed(e.to_string())));
                continue;
            }
        };
        match Region::try_from(json) {
            Ok(region) => {
                if !seen.insert(region.region_id) {
                    out.rejected
                        .push((i + 1, RejectReason::DuplicateRegionId(region.region_id)));
                } else {
                    out.regions.push(region);
                }
            }
            Err(RegionError::EmptyDescription) => {
                out.rejected.push((i + 1, RejectReason::EmptyDescription))
            }
            Err(RegionError::Graph(e)) => out.rejected.push((i + 1, RejectReason::Graph(e))),
        }
    }
    out
}

/// One JSON object per line, in the canonical field order.
pub fn write_regions(regions: &[Region]) -> String {
    let mut out = String::new();
    for region in regions {
        out.push_str(&serde_json::to_string(region).expect("regions serialize"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("image ids {0:?} are in both train and eval sets")]
pub struct OverlappingSplit(pub Vec<u64>);

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "SplitSpecJson")]
pub struct SplitSpec {
    train_image_ids: BTreeSet<u64>,
    eval_image_ids: BTreeSet<u64>,
}

#[derive(Deserialize)]
struct SplitSpecJson {
    train_image_ids: BTreeSet<u64>,
    eval_image_ids: BTreeSet<u64>,
}

impl TryFrom<SplitSpecJson> for SplitSpec {
    type Error = OverlappingSplit;

    fn try_from(json: SplitSpecJson) -> Result<Self, Self::Error> {
        SplitSpec::new(json.train_image_ids, json.eval_image_ids)
    }
}

impl SplitSpec {
    pub fn new(
        train_image_ids: impl IntoIterator<Item = u64>,
        eval_image_ids: impl IntoIterator<Item = u64>,
    ) -> Result<Self, OverlappingSplit> {
        let train: BTreeSet<u64> = train_image_ids.into_iter().collect();
        let eval: BTreeSet<u64> = eval_image_ids.into_iter().collect();
        let overlap: Vec<u64> = train.intersection(&eval).copied().collect();
        if !overlap.is_empty() {
            return Err(OverlappingSplit(overlap));
        }
        Ok(SplitSpec {
            train_image_ids: train,
            eval_image_ids: eval,
        })
    }

    /// Puts the first `train_fraction` of the distinct image ids (ascending)
    /// in train and the rest in eval.
    pub fn by_fraction(regions: &[Region], train_fraction: f64) -> Self {
        let images: BTreeSet<u64> = regions.iter().map(|r| r.image_id).collect();
        let cut = (images.len() as f64 * train_fraction).round() as usize;
        let train = images.iter().take(cut).copied();
        let eval = images.iter().skip(cut).copied();
        SplitSpec::new(train, eval).expect("prefix and suffix are disjoint")
    }

    pub fn train_image_ids(&self) -> &BTreeSet<u64> {
        &self.train_image_ids
    }

    pub fn eval_image_ids(&self) -> &BTreeSet<u64> {
        &self.eval_image_ids
    }
}

#[derive(Debug, Clone, Default)]
pub struct Split {
    pub train: Vec<Region>,
    pub eval: Vec<Region>,
    /// Regions whose image is in neither set.
    pub dropped: usize,
}

pub fn split(dataset: Vec<Region>, spec: &SplitSpec) -> Split {
    let mut out = Split::default();
    for region in dataset {
        if spec.train_image_ids.contains(&region.image_id) {
            out.train.push(region);
        } else if spec.eval_image_ids.contains(&region.image_id) {
            out.eval.push(region);
        } else {
            out.dropped += 1;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Synthetic corpus

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    /// `<attr> <obj>`
    Attr,
    /// `<attr> and <attr> <obj>`
    TwoAttrs,
    /// `<obj> <rel> <obj>`
    Relation,
    /// `<attr> <obj> <rel> the <obj>`
    AttrRelation,
}

impl Pattern {
    pub const ALL: [Pattern; 4] = [
        Pattern::Attr,
        Pattern::TwoAttrs,
        Pattern::Relation,
        Pattern::AttrRelation,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("vocabulary '{0}' is empty or too small")]
    TooSmall(&'static str),
    #[error("'{0}' is not a canonical label")]
    NotCanonical(String),
    #[error("'{0}' is a stopword")]
    Stopword(String),
    #[error("word '{0}' appears in more than one vocabulary")]
    SharedWord(String),
    #[error("pattern weights must be four non-negative numbers with a positive sum")]
    BadWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGrammar {
    pub object_vocab: Vec<String>,
    pub attribute_vocab: Vec<String>,
    pub relation_vocab: Vec<String>,
    /// Weights for `<attr> <obj>`, `<attr> and <attr> <obj>`,
    /// `<obj> <rel> <obj>`, `<attr> <obj> <rel> the <obj>`.
    pub pattern_weights: [f64; 4],
    pub seed: u64,
    #[serde(default = "default_regions_per_image")]
    pub regions_per_image: u64,
}

fn default_regions_per_image() -> u64 {
    5
}

fn strings(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

impl Default for SyntheticGrammar {
    fn default() -> Self {
        SyntheticGrammar {
            object_vocab: strings(&[
                "cat", "dog", "man", "woman", "bus", "car", "tree", "table", "chair", "plate",
                "horse", "street", "building", "window", "shirt", "hat", "bench", "sign", "boat",
                "train", "cup", "bird", "fence", "grass", "umbrella", "bottle", "elephant",
                "girl", "boy", "clock",
            ]),
            attribute_vocab: strings(&[
                "red", "blue", "green", "white", "black", "brown", "yellow", "large", "small",
                "tall", "wooden", "metal", "old", "young", "striped", "open", "empty", "shiny",
                "dark", "orange",
            ]),
            relation_vocab: strings(&[
                "in front of", "next to", "behind", "near", "under", "holding", "wearing",
                "beside", "above", "inside", "riding", "attached to", "sitting on", "across from",
            ]),
            pattern_weights: [1.0, 1.0, 1.0, 1.0],
            seed: 17,
            regions_per_image: default_regions_per_image(),
        }
    }
}

impl SyntheticGrammar {
    pub fn validate(&self) -> Result<(), GrammarError> {
        if self.object_vocab.len() < 2 {
            return Err(GrammarError::TooSmall("object"));
        }
        if self.attribute_vocab.len() < 2 {
            return Err(GrammarError::TooSmall("attribute"));
        }
        if self.relation_vocab.is_empty() {
            return Err(GrammarError::TooSmall("relation"));
        }
        if self.regions_per_image == 0 {
            return Err(GrammarError::TooSmall("regions_per_image"));
        }
        let w = &self.pattern_weights;
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
            return Err(GrammarError::BadWeights);
        }
        let mut owner: std::collections::HashMap<&str, usize> = Default::default();
        for (category, vocab) in [&self.object_vocab, &self.attribute_vocab, &self.relation_vocab]
            .into_iter()
            .enumerate()
        {
            for entry in vocab {
                match Label::canonicalize(entry) {
                    Ok(label) if label.as_str() == entry => {}
                    _ => return Err(GrammarError::NotCanonical(entry.clone())),
                }
                for word in entry.split(' ') {
                    if STOPWORDS.contains(&word) {
                        return Err(GrammarError::Stopword(word.to_string()));
                    }
                    if *owner.entry(word).or_insert(category) != category {
                        return Err(GrammarError::SharedWord(word.to_string()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Generates `n` regions from the grammar. The graph of each region is
/// exactly what its description says, so oracle alignment is lossless.
pub fn generate_synthetic(grammar: &SyntheticGrammar, n: usize) -> Result<Vec<Region>, GrammarError> {
    grammar.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(grammar.seed);
    let patterns =
        WeightedIndex::new(grammar.pattern_weights).map_err(|_| GrammarError::BadWeights)?;
    let label = |s: &String| Label::canonicalize(s).expect("validated vocabulary");

    let mut regions = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let pattern = Pattern::ALL[patterns.sample(&mut rng)];
        let mut objects = grammar.object_vocab.choose_multiple(&mut rng, 2);
        let subject = objects.next().expect("at least two objects");
        let object = objects.next().expect("at least two objects");
        let mut attributes = grammar.attribute_vocab.choose_multiple(&mut rng, 2);
        let first = attributes.next().expect("at least two attributes");
        let second = attributes.next().expect("at least two attributes");
        let relation = grammar
            .relation_vocab
            .choose(&mut rng)
            .expect("at least one relation");

        let subject_node = ObjectInstance::new(0, label(subject));
        let (description, objects, attributes, relations) = match pattern {
            Pattern::Attr => (
                format!("{first} {subject}"),
                vec![subject_node],
                vec![(0, label(first))],
                vec![],
            ),
            Pattern::TwoAttrs => (
                format!("{first} and {second} {subject}"),
                vec![subject_node],
                vec![(0, label(first)), (0, label(second))],
                vec![],
            ),
            Pattern::Relation => (
                format!("{subject} {relation} {object}"),
                vec![subject_node, ObjectInstance::new(1, label(object))],
                vec![],
                vec![(0, label(relation), 1)],
            ),
            Pattern::AttrRelation => (
                format!("{first} {subject} {relation} the {object}"),
                vec![subject_node, ObjectInstance::new(1, label(object))],
                vec![(0, label(first))],
                vec![(0, label(relation), 1)],
            ),
        };
        let graph = SceneGraph::build(objects, attributes, relations)
            .expect("generated graphs reference their own objects");
        regions.push(Region {
            image_id: i / grammar.regions_per_image + 1,
            region_id: i + 1,
            description,
            graph,
        });
    }
    Ok(regions)
}
