//! Synonym lexicon shared by the aligner and the evaluator.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::graph::{GraphError, Label};

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("lexicon is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid label in lexicon: {0}")]
    Label(#[from] GraphError),
}

/// Label equivalence classes. Entries are closed symmetrically and
/// transitively at load, so synonymy is an equivalence relation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    classes: Vec<BTreeSet<Label>>,
    class_of: HashMap<Label, usize>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (Label, Label)>,
    {
        let mut lexicon = Lexicon::new();
        for (a, b) in pairs {
            lexicon.add(a, b);
        }
        lexicon
    }

    /// Parses `{"label": ["synonym", ...], ...}`.
    pub fn from_json(text: &str) -> Result<Self, LexiconError> {
        let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(text)?;
        let mut lexicon = Lexicon::new();
        for (key, synonyms) in raw {
            let key = Label::canonicalize(&key)?;
            lexicon.class_index(&key);
            for synonym in synonyms {
                lexicon.add(key.clone(), Label::canonicalize(&synonym)?);
            }
        }
        Ok(lexicon)
    }

    pub fn add(&mut self, a: Label, b: Label) {
        let ca = self.class_index(&a);
        let cb = self.class_index(&b);
        if ca == cb {
            return;
        }
        let (keep, gone) = if ca < cb { (ca, cb) } else { (cb, ca) };
        let moved = std::mem::take(&mut self.classes[gone]);
        for label in &moved {
            self.class_of.insert(label.clone(), keep);
        }
        self.classes[keep].extend(moved);
    }

    fn class_index(&mut self, label: &Label) -> usize {
        if let Some(&c) = self.class_of.get(label) {
            return c;
        }
        self.classes.push(BTreeSet::from([label.clone()]));
        let c = self.classes.len() - 1;
        self.class_of.insert(label.clone(), c);
        c
    }

    pub fn are_synonyms(&self, a: &Label, b: &Label) -> bool {
        if a == b {
            return true;
        }
        match (self.class_of.get(a), self.class_of.get(b)) {
            (Some(x), Some(y)) => x == y,
            _ => false,
        }
    }

    /// Every label equivalent to `label`, itself included.
    pub fn synonyms(&self, label: &Label) -> BTreeSet<Label> {
        match self.class_of.get(label) {
            Some(&c) => self.classes[c].clone(),
            None => BTreeSet::from([label.clone()]),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.class_of.is_empty()
    }
}
