//! Byte-pair-encoding merges over the characters of each word.

use std::collections::{BTreeMap, HashMap};

use super::NeuralError;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BpeMerges {
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
}

impl BpeMerges {
    pub fn new(merges: Vec<(String, String)>) -> Self {
        let ranks = merges
            .iter()
            .enumerate()
            .map(|(rank, pair)| (pair.clone(), rank))
            .collect();
        BpeMerges { merges, ranks }
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }

    /// Learns up to `num_merges` merges from word counts. The most frequent
    /// adjacent pair is merged first; ties go to the lexicographically
    /// smallest pair.
    pub fn learn(word_counts: &BTreeMap<String, usize>, num_merges: usize) -> Self {
        let mut words: Vec<(Vec<String>, usize)> = word_counts
            .iter()
            .map(|(w, &c)| (w.chars().map(String::from).collect(), c))
            .collect();
        let mut merges = Vec::new();
        for _ in 0..num_merges {
            let mut counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
            for (symbols, count) in &words {
                for pair in symbols.windows(2) {
                    *counts.entry((&pair[0], &pair[1])).or_default() += count;
                }
            }
            let Some(((a, b), _)) = counts
                .iter()
                .max_by(|x, y| x.1.cmp(y.1).then_with(|| y.0.cmp(x.0)))
            else {
                break;
            };
            let pair = (a.to_string(), b.to_string());
            for (symbols, _) in &mut words {
                *symbols = merge_pair(symbols, &pair);
            }
            merges.push(pair);
        }
        BpeMerges::new(merges)
    }

    /// Splits `word` into subwords by repeatedly applying the best-ranked merge.
    pub fn apply(&self, word: &str) -> Vec<String> {
        let mut symbols: Vec<String> = word.chars().map(String::from).collect();
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0].clone(), w[1].clone())))
                .min();
            match best {
                Some(&rank) => symbols = merge_pair(&symbols, &self.merges[rank]),
                None => return symbols,
            }
        }
    }

    /// Every symbol the merges can produce, in creation order.
    pub fn merged_symbols(&self) -> impl Iterator<Item = String> + '_ {
        self.merges.iter().map(|(a, b)| format!("{a}{b}"))
    }

    /// One `left right` pair per line in priority order.
    pub fn to_text(&self) -> String {
        self.merges
            .iter()
            .map(|(a, b)| format!("{a} {b}\n"))
            .collect()
    }

    pub fn from_text(text: &str) -> Result<Self, NeuralError> {
        let mut merges = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(' ').collect();
            if parts.len() != 2 || parts.iter().any(|p| p.is_empty()) {
                return Err(NeuralError::Format(format!(
                    "merges line {}: expected two space-separated symbols",
                    i + 1
                )));
            }
            merges.push((parts[0].to_string(), parts[1].to_string()));
        }
        Ok(BpeMerges::new(merges))
    }
}

fn merge_pair(symbols: &[String], pair: &(String, String)) -> Vec<String> {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == pair.0 && symbols[i + 1] == pair.1 {
            out.push(format!("{}{}", pair.0, pair.1));
            i += 2;
        } else {
            out.push(symbols[i].clone());
            i += 1;
        }
    }
    out
}
