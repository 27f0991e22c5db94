use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser as ClapParser, Subcommand, ValueEnum};

use sgforge_core::corpus::{write_regions, Ingested};
use sgforge_core::eval::{evaluate_corpus, CorpusMode, CorpusScores};
use sgforge_core::train::{self, DevExample, EpochLog};
use sgforge_core::{
    align, decode, generate_synthetic, ingest, read_conll, write_conll, Checkpoint, Lexicon,
    ModelConfig, Region, SceneGraph, SyntheticGrammar, TrainConfig,
};

/// Scene-graph parsing pipeline from synthetic regions to scored predictions.
#[derive(Debug, ClapParser)]
#[command(name = "sgforge", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic regions file.
    Gen {
        /// Grammar JSON; the built-in grammar when omitted.
        #[arg(long)]
        grammar: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        /// Output regions file (JSON lines); standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the grammar seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Align region graphs onto their descriptions and write CONLL targets.
    Align {
        #[arg(long)]
        regions: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a parser on CONLL targets.
    Train {
        #[arg(long)]
        conll: PathBuf,
        /// Dev regions used for per-epoch dev loss and score.
        #[arg(long)]
        regions: Option<PathBuf>,
        #[arg(long)]
        model_config: Option<PathBuf>,
        #[arg(long)]
        train_config: Option<PathBuf>,
        /// Checkpoint directory. The best-dev checkpoint goes to `<out>/best`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Use one thread for gradient computation.
        #[arg(long)]
        single_threaded: bool,
    },
    /// Parse descriptions with a trained checkpoint.
    Parse {
        #[arg(long)]
        ckpt: PathBuf,
        /// Plain text (one description per line) or a regions file.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = ParseFormat::GraphJson)]
        out: ParseFormat,
        /// Output path; standard output when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score predicted graphs against reference graphs.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long, value_enum, default_value_t = EvalMode::Base)]
        mode: EvalMode,
        /// Also cap the prediction count in limited mode.
        #[arg(long)]
        clamp_pred: bool,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Per-region report (JSON lines plus a final aggregate object).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decode CONLL tags into graphs (regions file).
    Convert {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Regions whose ids and descriptions label the decoded sentences.
        #[arg(long)]
        regions: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ParseFormat {
    Conll,
    GraphJson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvalMode {
    Base,
    Limited,
}

/// Bad flag combinations detected after argument parsing.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sgforge: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen {
            grammar,
            n,
            out,
            seed,
        } => {
            let mut grammar = match grammar {
                Some(path) => serde_json::from_str(&read_input(&path)?)
                    .with_context(|| format!("bad grammar file {}", path.display()))?,
                None => SyntheticGrammar::default(),
            };
            if let Some(seed) = seed {
                grammar.seed = seed;
            }
            let regions = generate_synthetic(&grammar, n)?;
            write_output(out.as_deref(), &write_regions(&regions))
        }
        Command::Align {
            regions,
            lexicon,
            out,
        } => {
            let regions = load_regions(&regions, false)?;
            let lexicon = load_lexicon(lexicon.as_deref())?;
            let mut sentences = Vec::with_capacity(regions.len());
            let mut coverage = 0.0;
            let mut unaligned = 0;
            for region in &regions {
                let result = align(&region.description, &region.graph, &lexicon);
                coverage += result.coverage;
                unaligned += result.unaligned_nodes.len();
                sentences.push(result.tagged);
            }
            write_output(out.as_deref(), &write_conll(&sentences))?;
            let report = serde_json::json!({
                "regions": regions.len(),
                "mean_coverage": if regions.is_empty() { 0.0 } else { coverage / regions.len() as f64 },
                "unaligned_nodes": unaligned,
            });
            eprintln!("{report}");
            Ok(())
        }
        Command::Train {
            conll,
            regions,
            model_config,
            train_config,
            out,
            seed,
            epochs,
            single_threaded,
        } => {
            let sentences = read_conll(&read_input(&conll)?)
                .with_context(|| format!("bad CONLL file {}", conll.display()))?;
            let dev: Vec<DevExample> = match regions {
                Some(path) => load_regions(&path, false)?
                    .iter()
                    .map(|r| DevExample::from_region(r, &Lexicon::new()))
                    .collect(),
                None => Vec::new(),
            };
            let model_config = load_model_config(model_config.as_deref())?;
            let mut train_config = load_train_config(train_config.as_deref())?;
            if let Some(seed) = seed {
                train_config.seed = seed;
            }
            if let Some(epochs) = epochs {
                train_config.epochs = epochs;
            }
            if single_threaded {
                train_config.parallel = false;
            }
            let stdout = io::stdout();
            let outcome = train::train(&sentences, &dev, &model_config, &train_config, |e: &EpochLog| {
                let mut lock = stdout.lock();
                let _ = writeln!(lock, "{}", serde_json::to_string(e).expect("log serializes"));
            })?;
            if outcome.skipped_too_long > 0 {
                eprintln!(
                    "sgforge: skipped {} training sentences longer than max_len",
                    outcome.skipped_too_long
                );
            }
            outcome.last.save(&out)?;
            if !dev.is_empty() {
                outcome.best.save(&out.join("best"))?;
            }
            Ok(())
        }
        Command::Parse {
            ckpt,
            input,
            out,
            output,
        } => {
            let parser = Checkpoint::load(&ckpt)
                .and_then(|c| c.parser())
                .with_context(|| format!("cannot load checkpoint {}", ckpt.display()))?;
            let text = read_input(&input)?;
            let regions = if looks_like_jsonl(&text) {
                checked(ingest(&text), &input)?
            } else {
                text_regions(&text)
            };
            let mut sentences = Vec::with_capacity(regions.len());
            let mut graphs = Vec::with_capacity(regions.len());
            for region in &regions {
                let tagged = parser
                    .predict(&region.description)
                    .with_context(|| format!("region {}", region.region_id))?;
                graphs.push(Region {
                    graph: decode(&tagged).graph,
                    ..region.clone()
                });
                sentences.push(tagged);
            }
            let rendered = match out {
                ParseFormat::Conll => write_conll(&sentences),
                ParseFormat::GraphJson => write_regions(&graphs),
            };
            write_output(output.as_deref(), &rendered)
        }
        Command::Eval {
            pred,
            reference,
            mode,
            clamp_pred,
            lexicon,
            out,
        } => {
            if pred == reference && pred == Path::new("-") {
                return Err(Usage("--pred and --ref cannot both read standard input".into()).into());
            }
            if clamp_pred && mode == EvalMode::Base {
                return Err(Usage("--clamp-pred needs --mode limited".into()).into());
            }
            let pred = load_regions(&pred, true)?;
            let reference = load_regions(&reference, true)?;
            let lexicon = load_lexicon(lexicon.as_deref())?;
            let mode = match mode {
                EvalMode::Base => CorpusMode::Base,
                EvalMode::Limited => CorpusMode::Limited { clamp_pred },
            };
            let pred: Vec<(u64, SceneGraph)> = pred.into_iter().map(|r| (r.region_id, r.graph)).collect();
            let reference: Vec<(u64, SceneGraph, String)> = reference
                .into_iter()
                .map(|r| (r.region_id, r.graph, r.description))
                .collect();
            let scores = evaluate_corpus(&pred, &reference, &lexicon, mode)?;
            if let Some(path) = out {
                write_output(Some(&path), &report(&scores))?;
            }
            println!("{:?}", scores.aggregate.f1);
            Ok(())
        }
        Command::Convert {
            input,
            out,
            regions,
        } => {
            let sentences = read_conll(&read_input(&input)?)
                .with_context(|| format!("bad CONLL file {}", input.display()))?;
            let labels = match regions {
                Some(path) => {
                    let regions = load_regions(&path, false)?;
                    if regions.len() != sentences.len() {
                        bail!(
                            "{} sentences but {} regions",
                            sentences.len(),
                            regions.len()
                        );
                    }
                    regions
                }
                None => sentences
                    .iter()
                    .enumerate()
                    .map(|(i, s)| Region {
                        image_id: 0,
                        region_id: i as u64 + 1,
                        description: s.text(),
                        graph: SceneGraph::empty(),
                    })
                    .collect(),
            };
            let decoded: Vec<Region> = sentences
                .iter()
                .zip(labels)
                .map(|(s, r)| Region {
                    graph: decode(s).graph,
                    ..r
                })
                .collect();
            write_output(out.as_deref(), &write_regions(&decoded))
        }
    }
}

fn report(scores: &CorpusScores) -> String {
    let mut out = String::new();
    for region in &scores.regions {
        out.push_str(&serde_json::to_string(region).expect("scores serialize"));
        out.push('\n');
    }
    let a = &scores.aggregate;
    let aggregate = serde_json::json!({
        "aggregate": {
            "matches": a.matches,
            "num_pred": a.num_pred,
            "num_ref": a.num_ref,
            "p": a.precision,
            "r": a.recall,
            "f": a.f1,
            "scored": scores.scored,
            "skipped_empty_ref": scores.skipped_empty_ref,
        }
    });
    out.push_str(&aggregate.to_string());
    out.push('\n');
    out
}

fn looks_like_jsonl(text: &str) -> bool {
    text.lines()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| l.trim_start().starts_with('{'))
}

/// One region per non-blank line, numbered by line.
fn text_regions(text: &str) -> Vec<Region> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| Region {
            image_id: 0,
            region_id: i as u64 + 1,
            description: l.trim().to_string(),
            graph: SceneGraph::empty(),
        })
        .collect()
}

/// Reads a regions file. With `strict`, any rejected record is an error;
/// otherwise rejects are reported and skipped.
fn load_regions(path: &Path, strict: bool) -> Result<Vec<Region>> {
    let ingested = ingest(&read_input(path)?);
    if strict {
        return checked(ingested, path);
    }
    for (line, reason) in &ingested.rejected {
        eprintln!("sgforge: {}:{line}: skipped: {reason}", path.display());
    }
    Ok(ingested.regions)
}

fn checked(ingested: Ingested, path: &Path) -> Result<Vec<Region>> {
    if let Some((line, reason)) = ingested.rejected.first() {
        bail!("{}:{line}: {reason}", path.display());
    }
    Ok(ingested.regions)
}

fn load_lexicon(path: Option<&Path>) -> Result<Lexicon> {
    match path {
        Some(p) => Lexicon::from_json(&read_input(p)?)
            .with_context(|| format!("bad lexicon file {}", p.display())),
        None => Ok(Lexicon::new()),
    }
}

fn load_model_config(path: Option<&Path>) -> Result<ModelConfig> {
    match path {
        Some(p) => serde_json::from_str(&read_input(p)?)
            .with_context(|| format!("bad model config {}", p.display())),
        None => Ok(ModelConfig::default()),
    }
}

fn load_train_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        Some(p) => serde_json::from_str(&read_input(p)?)
            .with_context(|| format!("bad train config {}", p.display())),
        None => Ok(TrainConfig::default()),
    }
}

/// `-` reads standard input.
fn read_input(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        let mut text = String::new();
        io::stdin().read_to_string(&mut text).context("cannot read standard input")?;
        return Ok(text);
    }
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) if p != Path::new("-") => {
            fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))
        }
        _ => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}
