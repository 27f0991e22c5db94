//! SPICE-style tuple F-score between parsed and reference scene graphs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::useful_word_count;
use crate::graph::{SceneGraph, Tuple, TupleSet};
use crate::lexicon::Lexicon;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("prediction {index} is for region {pred} but reference is region {reference}")]
    IdMismatch {
        index: usize,
        pred: u64,
        reference: u64,
    },
    #[error("{pred} predictions for {reference} references")]
    LengthMismatch { pred: usize, reference: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreMode {
    Base,
    /// Reference count clamped to `cap`; with `clamp_pred` the prediction
    /// count is clamped as well.
    Limited { cap: usize, clamp_pred: bool },
}

impl ScoreMode {
    pub fn limited(cap: usize) -> Self {
        ScoreMode::Limited {
            cap,
            clamp_pred: false,
        }
    }
}

/// How to pick the per-region mode in corpus evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorpusMode {
    Base,
    /// Cap each region at the useful-word count of its description.
    Limited { clamp_pred: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Scores {
    pub matches: usize,
    pub num_pred: usize,
    pub num_ref: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Scores {
    /// Precision and recall each credit at most their own denominator, so a
    /// clamped count never pushes either above 1.
    pub fn from_counts(matches: usize, num_pred: usize, num_ref: usize) -> Self {
        let ratio = |m: usize, n: usize| if n == 0 { 0.0 } else { m.min(n) as f64 / n as f64 };
        let precision = ratio(matches, num_pred);
        let recall = ratio(matches, num_ref);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Scores {
            matches,
            num_pred,
            num_ref,
            precision,
            recall,
            f1,
        }
    }
}

pub fn tuple_match(a: &Tuple, b: &Tuple, lexicon: &Lexicon) -> bool {
    a.arity() == b.arity()
        && a.labels()
            .into_iter()
            .zip(b.labels())
            .all(|(x, y)| lexicon.are_synonyms(x, y))
}

/// Size of the greedy one-to-one matching: exact pairs first, then synonym
/// pairs in canonical tuple order. With synonymy an equivalence relation
/// this equals the maximum matching.
pub fn greedy_matches(pred: &TupleSet, reference: &TupleSet, lexicon: &Lexicon) -> usize {
    let mut pred_left: Vec<Tuple> = Vec::new();
    let mut ref_left: Vec<Tuple> = reference.iter().filter(|t| !pred.contains(t)).collect();
    let mut matches = 0;
    for tuple in pred.iter() {
        if reference.contains(&tuple) {
            matches += 1;
        } else {
            pred_left.push(tuple);
        }
    }
    if lexicon.is_empty() {
        return matches;
    }
    for tuple in &pred_left {
        if let Some(pos) = ref_left.iter().position(|r| tuple_match(tuple, r, lexicon)) {
            ref_left.remove(pos);
            matches += 1;
        }
    }
    matches
}

pub fn spice_f1(pred: &TupleSet, reference: &TupleSet, lexicon: &Lexicon, mode: ScoreMode) -> Scores {
    let matches = greedy_matches(pred, reference, lexicon);
    match mode {
        ScoreMode::Base => Scores::from_counts(matches, pred.len(), reference.len()),
        ScoreMode::Limited { cap, clamp_pred } => {
            // A description with no useful words still credits one tuple;
            // a zero cap would zero the recall and undercut the base score.
            let cap = cap.max(1);
            let num_ref = reference.len().min(cap);
            let num_pred = if clamp_pred { pred.len().min(cap) } else { pred.len() };
            Scores::from_counts(matches, num_pred, num_ref)
        }
    }
}

/// One region to score.
#[derive(Debug, Clone)]
pub struct RegionCase<'a> {
    pub region_id: u64,
    pub pred: &'a SceneGraph,
    pub reference: &'a SceneGraph,
    pub description: &'a str,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionScore {
    pub region_id: u64,
    pub matches: usize,
    pub num_pred: usize,
    pub num_ref: usize,
    pub p: f64,
    pub r: f64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusScores {
    pub regions: Vec<RegionScore>,
    /// Counts are summed; the ratios are means over scored regions.
    pub aggregate: Scores,
    pub scored: usize,
    /// Regions skipped because their reference graph is empty.
    pub skipped_empty_ref: usize,
}

/// Scores regions that share ids position by position.
pub fn evaluate_corpus(
    pred: &[(u64, SceneGraph)],
    reference: &[(u64, SceneGraph, String)],
    lexicon: &Lexicon,
    mode: CorpusMode,
) -> Result<CorpusScores, EvalError> {
    if pred.len() != reference.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            reference: reference.len(),
        });
    }
    let mut cases = Vec::with_capacity(pred.len());
    for (index, ((pid, pg), (rid, rg, desc))) in pred.iter().zip(reference).enumerate() {
        if pid != rid {
            return Err(EvalError::IdMismatch {
                index,
                pred: *pid,
                reference: *rid,
            });
        }
        cases.push(RegionCase {
            region_id: *rid,
            pred: pg,
            reference: rg,
            description: desc,
        });
    }
    Ok(evaluate_cases(&cases, lexicon, mode))
}

pub fn evaluate_cases(cases: &[RegionCase<'_>], lexicon: &Lexicon, mode: CorpusMode) -> CorpusScores {
    let mut regions = Vec::new();
    let mut skipped = 0;
    for case in cases {
        let reference = case.reference.tuples();
        if reference.is_empty() {
            skipped += 1;
            continue;
        }
        let region_mode = match mode {
            CorpusMode::Base => ScoreMode::Base,
            CorpusMode::Limited { clamp_pred } => ScoreMode::Limited {
                cap: useful_word_count(case.description),
                clamp_pred,
            },
        };
        let s = spice_f1(&case.pred.tuples(), &reference, lexicon, region_mode);
        regions.push(RegionScore {
            region_id: case.region_id,
            matches: s.matches,
            num_pred: s.num_pred,
            num_ref: s.num_ref,
            p: s.precision,
            r: s.recall,
            f: s.f1,
        });
    }
    let n = regions.len();
    let mean = |f: fn(&RegionScore) -> f64| {
        if n == 0 {
            0.0
        } else {
            regions.iter().map(f).sum::<f64>() / n as f64
        }
    };
    let aggregate = Scores {
        matches: regions.iter().map(|r| r.matches).sum(),
        num_pred: regions.iter().map(|r| r.num_pred).sum(),
        num_ref: regions.iter().map(|r| r.num_ref).sum(),
        precision: mean(|r| r.p),
        recall: mean(|r| r.r),
        f1: mean(|r| r.f),
    };
    CorpusScores {
        scored: n,
        regions,
        aggregate,
        skipped_empty_ref: skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Label, ObjectInstance};

    fn l(s: &str) -> Label {
        Label::canonicalize(s).unwrap()
    }

    fn obj(a: &str) -> Tuple {
        Tuple::Object(l(a))
    }

    fn attr(a: &str, b: &str) -> Tuple {
        Tuple::Attribute(l(a), l(b))
    }

    pub(crate) fn bus_example() -> (TupleSet, TupleSet) {
        let pred = [obj("bus"), attr("bus", "red"), attr("bus", "blue")].into_iter().collect();
        let reference = [
            obj("bus"),
            attr("bus", "red"),
            attr("bus", "passenger"),
            attr("bus", "black"),
            attr("bus", "white"),
        ]
        .into_iter()
        .collect();
        (pred, reference)
    }

    #[test]
    fn tuple_matching() {
        let lex = Lexicon::from_pairs([(l("cat"), l("feline"))]);
        assert!(tuple_match(&attr("bus", "red"), &attr("bus", "red"), &lex));
        assert!(!tuple_match(&attr("bus", "red"), &attr("bus", "blue"), &lex));
        assert!(tuple_match(&obj("feline"), &obj("cat"), &lex));
        assert!(!tuple_match(&obj("bus"), &attr("bus", "red"), &lex));
    }

    #[test]
    fn bus_example_scores() {
        let (pred, reference) = bus_example();
        let base = spice_f1(&pred, &reference, &Lexicon::new(), ScoreMode::Base);
        assert_eq!(base.matches, 2);
        assert_eq!(base.precision, 2.0 / 3.0);
        assert_eq!(base.recall, 2.0 / 5.0);
        assert!((base.f1 - 0.5).abs() < 1e-15);
        let limited = spice_f1(&pred, &reference, &Lexicon::new(), ScoreMode::limited(3));
        assert_eq!(limited.num_ref, 3);
        assert_eq!(limited.recall, 2.0 / 3.0);
        assert!((limited.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_scores() {
        let (pred, reference) = bus_example();
        let lex = Lexicon::new();
        assert_eq!(spice_f1(&reference, &reference, &lex, ScoreMode::Base).f1, 1.0);
        assert_eq!(spice_f1(&pred, &pred, &lex, ScoreMode::Base).f1, 1.0);
        let empty = TupleSet::default();
        let s = spice_f1(&empty, &reference, &lex, ScoreMode::Base);
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        let s = spice_f1(&empty, &empty, &lex, ScoreMode::Base);
        assert_eq!(s.f1, 0.0);
        // A zero cap counts as one.
        let s = spice_f1(&pred, &reference, &lex, ScoreMode::limited(0));
        assert_eq!(s, spice_f1(&pred, &reference, &lex, ScoreMode::limited(1)));
        assert_eq!((s.num_ref, s.recall), (1, 1.0));
    }

    #[test]
    fn clamping_prediction_side() {
        let (pred, reference) = bus_example();
        let s = spice_f1(
            &pred,
            &reference,
            &Lexicon::new(),
            ScoreMode::Limited {
                cap: 2,
                clamp_pred: true,
            },
        );
        assert_eq!((s.num_pred, s.num_ref), (2, 2));
        assert_eq!(s.f1, 1.0);
    }

    #[test]
    fn synonym_matches_after_exact() {
        let lex = Lexicon::from_pairs([(l("cat"), l("feline"))]);
        let pred: TupleSet = [obj("cat"), obj("feline")].into_iter().collect();
        let reference: TupleSet = [obj("cat")].into_iter().collect();
        // Exact cat-cat first; feline has nothing left.
        assert_eq!(greedy_matches(&pred, &reference, &lex), 1);
        let reference: TupleSet = [obj("cat"), obj("kitty")].into_iter().collect();
        assert_eq!(greedy_matches(&pred, &reference, &lex), 1);
        let lex = Lexicon::from_pairs([(l("cat"), l("feline")), (l("kitty"), l("cat"))]);
        assert_eq!(greedy_matches(&pred, &reference, &lex), 2);
    }

    fn graph(labels: &[&str]) -> SceneGraph {
        SceneGraph::build(
            labels
                .iter()
                .enumerate()
                .map(|(i, s)| ObjectInstance::new(i as u64, l(s)))
                .collect(),
            vec![],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn corpus_mean_and_skips() {
        let cat = graph(&["cat"]);
        let dog = graph(&["dog"]);
        let empty = SceneGraph::empty();
        let pred = vec![(1, cat.clone()), (2, cat.clone()), (3, cat.clone())];
        let reference = vec![
            (1, cat.clone(), "cat".to_string()),
            (2, dog.clone(), "dog".to_string()),
            (3, empty, "nothing".to_string()),
        ];
        let scores = evaluate_corpus(&pred, &reference, &Lexicon::new(), CorpusMode::Base).unwrap();
        assert_eq!(scores.aggregate.f1, 0.5);
        assert_eq!(scores.scored, 2);
        assert_eq!(scores.skipped_empty_ref, 1);

        let one = evaluate_corpus(&pred[..1], &reference[..1], &Lexicon::new(), CorpusMode::Base).unwrap();
        assert_eq!(one.aggregate.f1, 1.0);
    }

    #[test]
    fn corpus_id_mismatch() {
        let cat = graph(&["cat"]);
        let err = evaluate_corpus(
            &[(1, cat.clone())],
            &[(2, cat.clone(), "cat".into())],
            &Lexicon::new(),
            CorpusMode::Base,
        )
        .unwrap_err();
        assert!(matches!(err, EvalError::IdMismatch { index: 0, .. }));
        assert!(evaluate_corpus(&[], &[(2, cat, "cat".into())], &Lexicon::new(), CorpusMode::Base).is_err());
    }
}
