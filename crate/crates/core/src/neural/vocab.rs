//! Token vocabulary with reserved ROOT/UNK/PAD/EOS entries.

use std::collections::{BTreeSet, HashMap};

use super::NeuralError;

pub const ROOT: &str = "<root>";
pub const UNK: &str = "<unk>";
pub const PAD: &str = "<pad>";
pub const EOS: &str = "<eos>";
pub const RESERVED: [&str; 4] = [ROOT, UNK, PAD, EOS];

pub const ROOT_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Reserved entries followed by `tokens` in order, duplicates skipped.
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in RESERVED {
            vocab.push(t.to_string());
        }
        for t in tokens {
            vocab.push(t.into());
        }
        vocab
    }

    /// Sorted set of all whitespace tokens in `texts`.
    pub fn from_words<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let words: BTreeSet<String> = texts
            .into_iter()
            .flat_map(crate::tags::words)
            .collect();
        Vocabulary::new(words)
    }

    fn push(&mut self, token: String) {
        if !self.index.contains_key(&token) {
            self.index.insert(token.clone(), self.tokens.len() as u32);
            self.tokens.push(token);
        }
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line; the line number is the id.
    pub fn to_text(&self) -> String {
        let mut out = self.tokens.join("\n");
        out.push('\n');
        out
    }

    pub fn from_text(text: &str) -> Result<Self, NeuralError> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < RESERVED.len() || lines[..RESERVED.len()] != RESERVED {
            return Err(NeuralError::Format(
                "vocabulary must start with <root>, <unk>, <pad>, <eos>".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for (i, line) in lines.iter().enumerate() {
            if line.is_empty() || !seen.insert(*line) {
                return Err(NeuralError::Format(format!(
                    "vocabulary line {} is empty or repeated",
                    i + 1
                )));
            }
        }
        Ok(Vocabulary::new(lines.into_iter().skip(RESERVED.len())))
    }
}
