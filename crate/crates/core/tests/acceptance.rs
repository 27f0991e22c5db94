//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{
    brute_force_matching, decode_violations, gradient_errors, perturbed, random_sentence,
    random_sequence, random_targets, same_cycle_members, small_config,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgforge_core::corpus::Region;
use sgforge_core::eval::{evaluate_cases, greedy_matches, RegionCase};
use sgforge_core::neural::{loss, Model, PositionTargets};
use sgforge_core::train::{train, Checkpoint, DevExample, TrainConfig};
use sgforge_core::{
    align, decode, generate_synthetic, read_conll, spice_f1, split, tuple_match, useful_word_count,
    write_conll, CorpusMode, Label, Lexicon, ModelConfig, NodeType, ScoreMode, SplitSpec,
    SyntheticGrammar, Tuple, TupleSet,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn corpus() -> Vec<Region> {
    generate_synthetic(&SyntheticGrammar::default(), 2000).expect("default grammar is valid")
}

fn a1_gradients() -> Outcome {
    let base = Model::init(small_config(12, 16), 1).unwrap();
    let mut worst = (String::new(), 0.0f64);
    let mut checked = 0;
    for seed in 0..3u64 {
        let model = perturbed(&base, 0.5, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let seq = random_sequence(&mut rng, 6, 12);
        let targets = random_targets(&mut rng, 6);
        for e in gradient_errors(&model, &seq, &targets, 0.9, 1e-5) {
            if !e.passes(1e-4) {
                return Err(format!(
                    "{}: relative error {:.3e} (analytic norm {:.3e}, numeric {:.3e})",
                    e.name, e.relative, e.analytic_norm, e.numeric_norm
                ));
            }
            if e.relative > worst.1 && e.analytic_norm >= common::GradientError::ZERO_NORM {
                worst = (e.name.clone(), e.relative);
            }
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} tensor checks, worst relative error {:.2e} ({})",
        worst.1, worst.0
    ))
}

fn a2_learning() -> Outcome {
    let regions = corpus();
    let spec = SplitSpec::by_fraction(&regions, 0.9);
    let parts = split(regions, &spec);
    let lexicon = Lexicon::new();
    let train_set: Vec<_> = parts
        .train
        .iter()
        .map(|r| align(&r.description, &r.graph, &lexicon).tagged)
        .collect();
    let dev: Vec<_> = parts.eval.iter().map(|r| DevExample::from_region(r, &lexicon)).collect();
    let config = TrainConfig {
        parallel: false,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let out = train(&train_set, &dev, &ModelConfig::default(), &config, |_| {}).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let f = out.log.last().and_then(|e| e.dev_f).unwrap_or(0.0);
    ensure(
        f >= 0.90 && elapsed < Duration::from_secs(600),
        format!(
            "dev F {f:.4} after {} epochs on {} train / {} dev regions, {:.1}s single-threaded",
            out.log.len(),
            train_set.len(),
            dev.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn a3_oracle() -> Outcome {
    let regions = corpus();
    let lexicon = Lexicon::new();
    let decoded: Vec<_> = regions
        .iter()
        .map(|r| decode(&align(&r.description, &r.graph, &lexicon).tagged).graph)
        .collect();
    let cases: Vec<_> = regions
        .iter()
        .zip(&decoded)
        .map(|(r, g)| RegionCase {
            region_id: r.region_id,
            pred: g,
            reference: &r.graph,
            description: &r.description,
        })
        .collect();
    let scores = evaluate_cases(&cases, &lexicon, CorpusMode::Base);
    ensure(
        scores.aggregate.f1 == 1.0 && scores.scored == regions.len(),
        format!("aggregate F {:?} over {} regions", scores.aggregate.f1, scores.scored),
    )
}

const WORDS: [&str; 7] = ["bus", "coach", "red", "crimson", "man", "person", "tree"];

fn test_lexicon() -> Lexicon {
    let l = |s: &str| Label::canonicalize(s).unwrap();
    Lexicon::from_pairs([(l("bus"), l("coach")), (l("red"), l("crimson")), (l("man"), l("person"))])
}

fn random_tuples<R: Rng>(rng: &mut R, max: usize) -> TupleSet {
    let w = |rng: &mut R| Label::canonicalize(WORDS[rng.random_range(0..WORDS.len())]).unwrap();
    let n = rng.random_range(0..=max);
    (0..n)
        .map(|_| match rng.random_range(0..3) {
            0 => Tuple::Object(w(rng)),
            1 => Tuple::Attribute(w(rng), w(rng)),
            _ => Tuple::Relation(w(rng), w(rng), w(rng)),
        })
        .collect()
}

fn a4_dominance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let lexicon = test_lexicon();
    let mut raised = 0;
    for case in 0..1000 {
        let pred = random_tuples(&mut rng, 10);
        let reference = random_tuples(&mut rng, 10);
        let cap = rng.random_range(0..=12);
        let base = spice_f1(&pred, &reference, &lexicon, ScoreMode::Base);
        let limited = spice_f1(&pred, &reference, &lexicon, ScoreMode::limited(cap));
        if limited.f1 < base.f1 {
            return Err(format!(
                "case {case}: cap {cap}, base F {} > limited F {}",
                base.f1, limited.f1
            ));
        }
        if limited.f1 > base.f1 {
            raised += 1;
        }
    }
    Ok(format!("1000 cases, limited F >= base F in all ({raised} strictly higher)"))
}

fn a5_decoder() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut arcs = 0;
    let mut dropped = 0;
    let mut cycles = 0;
    for case in 0..10_000 {
        let sentence = random_sentence(&mut rng, 12);
        let report = catch_unwind(|| decode(&sentence)).map_err(|_| format!("case {case}: decode panicked"))?;
        let violations = decode_violations(&sentence, &report);
        if !violations.is_empty() {
            return Err(format!("case {case}: {}", violations.join("; ")));
        }
        arcs += sentence.tokens().iter().filter(|t| t.node_type != NodeType::None).count();
        dropped += report.dropped_arcs.len();
        cycles += same_cycle_members(&sentence).len();
    }
    Ok(format!(
        "10000 sentences, {arcs} arcs, {dropped} dropped, {cycles} SAME-cycle tokens all reported"
    ))
}

fn a6_masking() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let model = perturbed(&Model::init(small_config(12, 16), 6).unwrap(), 0.3, 6);
    for trial in 0..200 {
        let t = rng.random_range(1..=12);
        let seq = random_sequence(&mut rng, t, 12);
        let targets = PositionTargets {
            types: vec![NodeType::None; t],
            parents: (0..t).map(|_| rng.random_range(0..=t)).collect(),
        };
        let outputs = model.forward(&seq).unwrap();
        let (reference, grads) = loss(&outputs, &targets, 1.7).unwrap();
        let mut shaken = outputs.clone();
        for v in &mut shaken.parent_logits.data {
            *v += rng.random_range(-50.0..50.0);
        }
        let (moved, _) = loss(&shaken, &targets, 1.7).unwrap();
        if moved.total.to_bits() != reference.total.to_bits() {
            return Err(format!("trial {trial}: loss moved from {} to {}", reference.total, moved.total));
        }
        if grads.parent_logits.data.iter().any(|&g| g != 0.0) {
            return Err(format!("trial {trial}: non-zero parent-logit gradient"));
        }
        let (_, params) = model.loss_and_grad(&seq, &targets, 1.7).unwrap();
        if params.parent_query.data.iter().chain(&params.parent_key.data).any(|&g| g != 0.0) {
            return Err(format!("trial {trial}: non-zero parent projection gradient"));
        }
    }
    Ok("200 trials, loss bit-identical under parent-logit perturbation, parent gradients exactly 0".into())
}

fn a7_metric() -> Outcome {
    let l = |s: &str| Label::canonicalize(s).unwrap();
    let attr = |a: &str| Tuple::Attribute(l("bus"), l(a));
    let pred: TupleSet = [Tuple::Object(l("bus")), attr("red"), attr("blue")].into_iter().collect();
    let reference: TupleSet = [
        Tuple::Object(l("bus")),
        attr("red"),
        attr("passenger"),
        attr("black"),
        attr("white"),
    ]
    .into_iter()
    .collect();
    let none = Lexicon::new();
    let base = spice_f1(&pred, &reference, &none, ScoreMode::Base);
    let cap = useful_word_count("blue and red bus");
    let limited = spice_f1(&pred, &reference, &none, ScoreMode::limited(cap));
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-15;
    if !(base.matches == 2 && close(base.f1, 0.5) && cap == 3 && close(limited.f1, 2.0 / 3.0)) {
        return Err(format!(
            "bus example: base F {} (matches {}), cap {cap}, limited F {}",
            base.f1, base.matches, limited.f1
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let lexicon = test_lexicon();
    for case in 0..1000 {
        let p = random_tuples(&mut rng, 8);
        let r = random_tuples(&mut rng, 8);
        let greedy = greedy_matches(&p, &r, &lexicon);
        let pv: Vec<Tuple> = p.iter().collect();
        let rv: Vec<Tuple> = r.iter().collect();
        let best = brute_force_matching(&pv, &rv, |a, b| tuple_match(a, b, &lexicon));
        if greedy != best {
            return Err(format!("case {case}: greedy {greedy} vs maximum {best}"));
        }
    }
    Ok(format!(
        "bus base F {}, limited(3) F {}; greedy = brute force on 1000 instances",
        base.f1, limited.f1
    ))
}

fn a8_round_trips() -> Outcome {
    // CONLL
    let regions = corpus();
    let lexicon = Lexicon::new();
    let sentences: Vec<_> = regions
        .iter()
        .map(|r| align(&r.description, &r.graph, &lexicon).tagged)
        .collect();
    let text = write_conll(&sentences);
    let back = read_conll(&text).map_err(|e| e.to_string())?;
    if back != sentences || write_conll(&back) != text {
        return Err("aligned corpus CONLL round-trip differs".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..2000 {
        let batch: Vec<_> = (0..3).map(|_| random_sentence(&mut rng, 12)).filter(|s| !s.is_empty()).collect();
        let text = write_conll(&batch);
        let back = read_conll(&text).map_err(|e| format!("case {case}: {e}"))?;
        if back != batch || write_conll(&back) != text {
            return Err(format!("case {case}: fuzzed CONLL round-trip differs"));
        }
    }

    // Checkpoints and reproducibility.
    let subset = &sentences[..200];
    let model = ModelConfig {
        d_model: 32,
        d_ff: 64,
        d_qk: 32,
        ..ModelConfig::default()
    };
    let config = TrainConfig {
        epochs: 2,
        batch_size: 16,
        parallel: false,
        ..TrainConfig::default()
    };
    let run = || train(subset, &[], &model, &config, |_| {}).map_err(|e| e.to_string());
    let (a, b) = (run()?, run()?);
    if a.last.payload != b.last.payload || a.last.manifest_json() != b.last.manifest_json() {
        return Err("two seeded single-threaded runs differ".into());
    }
    let dir = std::env::temp_dir().join(format!("sgforge-acceptance-{}", std::process::id()));
    let first = dir.join("first");
    let second = dir.join("second");
    let io = |e: sgforge_core::train::TrainError| e.to_string();
    a.last.save(&first).map_err(io)?;
    let loaded = Checkpoint::load(&first).map_err(io)?;
    loaded.save(&second).map_err(io)?;
    let same_files = ["manifest.json", "tensors.bin"]
        .iter()
        .all(|f| std::fs::read(first.join(f)).ok() == std::fs::read(second.join(f)).ok());
    let parser = a.last.parser().map_err(io)?;
    let restored = loaded.parser().map_err(io)?;
    let seq = parser.tokenizer.tokenize(&subset[0].text());
    let same_logits = parser.model.forward(&seq).ok() == restored.model.forward(&seq).ok();
    let _ = std::fs::remove_dir_all(&dir);
    ensure(
        same_files && same_logits && loaded == a.last,
        format!(
            "CONLL byte-exact on {} aligned + 2000 fuzzed batches; checkpoint files byte-exact ({} payload bytes); seeded runs bit-identical",
            sentences.len(),
            a.last.payload.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("A1", "gradient correctness", a1_gradients),
        ("A2", "end-to-end learning", a2_learning),
        ("A3", "oracle round-trip", a3_oracle),
        ("A4", "limited-mode dominance", a4_dominance),
        ("A5", "decoder totality and legality", a5_decoder),
        ("A6", "loss masking exactness", a6_masking),
        ("A7", "worked metric values", a7_metric),
        ("A8", "format round-trips", a8_round_trips),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, check) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("{id} PASS {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("{id} FAIL {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
