mod common;

use common::brute_force_matching;
use proptest::prelude::*;
use sgforge_core::eval::{greedy_matches, CorpusMode, RegionCase};
use sgforge_core::eval::evaluate_cases;
use sgforge_core::{spice_f1, tuple_match, Label, Lexicon, ScoreMode, SceneGraph, Tuple, TupleSet};

const WORDS: [&str; 6] = ["cat", "feline", "kitty", "dog", "red", "crimson"];

fn lexicon() -> Lexicon {
    let l = |s: &str| Label::canonicalize(s).unwrap();
    Lexicon::from_pairs([
        (l("cat"), l("feline")),
        (l("kitty"), l("cat")),
        (l("red"), l("crimson")),
    ])
}

fn tuple() -> impl Strategy<Value = Tuple> {
    let w = || (0..WORDS.len()).prop_map(|i| Label::canonicalize(WORDS[i]).unwrap());
    prop_oneof![
        w().prop_map(Tuple::Object),
        (w(), w()).prop_map(|(a, b)| Tuple::Attribute(a, b)),
        (w(), w(), w()).prop_map(|(a, b, c)| Tuple::Relation(a, b, c)),
    ]
}

fn tuple_set(max: usize) -> impl Strategy<Value = TupleSet> {
    prop::collection::vec(tuple(), 0..=max).prop_map(|v| v.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn greedy_equals_maximum_matching(pred in tuple_set(8), reference in tuple_set(8)) {
        let lex = lexicon();
        let p: Vec<Tuple> = pred.iter().collect();
        let r: Vec<Tuple> = reference.iter().collect();
        let best = brute_force_matching(&p, &r, |a, b| tuple_match(a, b, &lex));
        prop_assert_eq!(greedy_matches(&pred, &reference, &lex), best);
    }

    #[test]
    fn limited_never_lowers_f(pred in tuple_set(8), reference in tuple_set(8), cap in 0usize..10) {
        let lex = lexicon();
        let base = spice_f1(&pred, &reference, &lex, ScoreMode::Base);
        let limited = spice_f1(&pred, &reference, &lex, ScoreMode::limited(cap));
        prop_assert!(limited.f1 >= base.f1);
        prop_assert_eq!(limited.precision, base.precision);
    }

    #[test]
    fn scores_stay_in_unit_range(pred in tuple_set(8), reference in tuple_set(8), cap in 0usize..10, clamp in any::<bool>()) {
        let lex = lexicon();
        for mode in [ScoreMode::Base, ScoreMode::Limited { cap, clamp_pred: clamp }] {
            let s = spice_f1(&pred, &reference, &lex, mode);
            for v in [s.precision, s.recall, s.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn perfect_score_iff_saturated(pred in tuple_set(6), reference in tuple_set(6)) {
        let lex = lexicon();
        let s = spice_f1(&pred, &reference, &lex, ScoreMode::Base);
        let saturated = s.matches == pred.len() && s.matches == reference.len() && !pred.is_empty();
        prop_assert_eq!(s.f1 == 1.0, saturated);
    }

    #[test]
    fn insertion_order_is_irrelevant(tuples in prop::collection::vec(tuple(), 0..8), reference in tuple_set(8), rot in 0usize..8) {
        let lex = lexicon();
        let forward: TupleSet = tuples.iter().cloned().collect();
        let mut shuffled = tuples.clone();
        shuffled.reverse();
        if !shuffled.is_empty() {
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
        }
        let backward: TupleSet = shuffled.into_iter().collect();
        prop_assert_eq!(
            spice_f1(&forward, &reference, &lex, ScoreMode::Base),
            spice_f1(&backward, &reference, &lex, ScoreMode::Base)
        );
    }

    #[test]
    fn adding_tuples_moves_scores_the_right_way(pred in tuple_set(6), reference in tuple_set(6), extra in tuple()) {
        let lex = lexicon();
        let before = spice_f1(&pred, &reference, &lex, ScoreMode::Base);
        let mut grown = pred.clone();
        if !grown.insert(extra) {
            return Ok(());
        }
        let after = spice_f1(&grown, &reference, &lex, ScoreMode::Base);
        if after.matches > before.matches {
            prop_assert!(after.f1 >= before.f1);
        } else {
            prop_assert!(after.precision <= before.precision);
        }
    }
}

#[test]
fn synonyms_match_but_exact_pairs_come_first() {
    let lex = lexicon();
    let l = |s: &str| Label::canonicalize(s).unwrap();
    assert!(tuple_match(&Tuple::Object(l("feline")), &Tuple::Object(l("kitty")), &lex));
    assert!(!tuple_match(&Tuple::Object(l("dog")), &Tuple::Object(l("cat")), &lex));
    let pred: TupleSet = [Tuple::Object(l("cat")), Tuple::Object(l("feline"))].into_iter().collect();
    let reference: TupleSet = [Tuple::Object(l("feline")), Tuple::Object(l("kitty"))].into_iter().collect();
    assert_eq!(greedy_matches(&pred, &reference, &lex), 2);
}

#[test]
fn corpus_mean_over_regions() {
    let g = |json: &str| -> SceneGraph { serde_json::from_str(json).unwrap() };
    let bus = g(r#"{"objects":[{"id":1,"label":"bus"}],"attributes":[],"relations":[]}"#);
    let dog = g(r#"{"objects":[{"id":1,"label":"dog"}],"attributes":[],"relations":[]}"#);
    let empty = SceneGraph::empty();
    let cases = [
        RegionCase { region_id: 1, pred: &bus, reference: &bus, description: "bus" },
        RegionCase { region_id: 2, pred: &bus, reference: &dog, description: "dog" },
        RegionCase { region_id: 3, pred: &bus, reference: &empty, description: "" },
    ];
    let scores = evaluate_cases(&cases, &Lexicon::new(), CorpusMode::Base);
    assert_eq!(scores.aggregate.f1, 0.5);
    assert_eq!(scores.scored, 2);
    assert_eq!(scores.skipped_empty_ref, 1);
}
