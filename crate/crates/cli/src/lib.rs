//! The `kbqa` command line: corpus synthesis, KB validation, linking,
//! enumeration, training, ranking, generation, inference and evaluation.
//!
//! Every command writes a manifest with the resolved configuration, the
//! seed and SHA-256 digests of its inputs and outputs. Manifests hold no
//! timings, so two runs with the same inputs produce identical manifests.

pub mod config;
pub mod workflow;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use kbqa_core::dataset::{parse_jsonl, EntityMention, Example, Level};
use kbqa_core::datagen::{generate_corpus, verify_corpus, Corpus, ALIASES_FILE, META_FILE, TRIPLES_FILE};
use kbqa_core::enumerate::enumerate_candidates;
use kbqa_core::eval::evaluate;
use kbqa_core::kb::{EntityId, KnowledgeBase};
use kbqa_core::linker::{link, linked_spans, Disambiguator};
use kbqa_core::pipeline::{batch_infer, config_hash, sha256_hex, Ablation, Prediction};
use kbqa_core::ranker::rank;
use kbqa_core::text::{slot_question, LinkedSpan};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use config::RunConfig;
use workflow::*;

#[derive(Debug, Parser)]
#[command(name = "kbqa", version, about = "Rank-and-generate question answering over a small knowledge base")]
pub struct Cli {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for inference.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Corpus directory (default: $KBQA_DATA_DIR, then ./data).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic KB and train/dev/test splits.
    SynthData,
    /// Load the KB and, for a generated corpus, re-check every example.
    KbValidate,
    /// Detect mentions and pick one entity for each.
    Link {
        #[arg(long)]
        input: PathBuf,
        /// Disambiguation checkpoint; popularity decides without one.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Enumerate candidate logical forms around the linked entities.
    Enumerate {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        linking: Linking,
    },
    TrainDisambiguator,
    TrainRanker,
    /// Train the generator on the ranker's top candidates.
    TrainGenerator {
        /// Ranker checkpoint (default: ranker.json in the output directory).
        #[arg(long)]
        ranker: Option<PathBuf>,
    },
    /// Score and sort each question's candidate pool.
    Rank {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Keep only the best `top` candidates.
        #[arg(long)]
        top: Option<usize>,
        #[command(flatten)]
        linking: Linking,
    },
    /// Beam-decode logical forms from the question and ranked candidates.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        ranker: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        beam: Option<usize>,
        #[command(flatten)]
        linking: Linking,
    },
    /// Run the full pipeline over a question file.
    Infer {
        /// Checkpoint directory (default: the configured models directory).
        #[arg(long)]
        models: Option<PathBuf>,
        /// Questions (default: test.jsonl in the data directory).
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_parser = parse_ablation)]
        ablation: Option<Ablation>,
        /// Pick entities by popularity only.
        #[arg(long)]
        no_disambiguation: bool,
        #[arg(long)]
        beam: Option<usize>,
    },
    /// Score predictions against gold answers and logical forms.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        /// Gold examples (default: test.jsonl in the data directory).
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Second prediction file, compared against the first.
        #[arg(long)]
        pred2: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, clap::Args)]
pub struct Linking {
    /// Use the gold entity mentions recorded in the input.
    #[arg(long)]
    pub gold_links: bool,
    /// Disambiguation checkpoint for predicted links.
    #[arg(long)]
    pub disambiguator: Option<PathBuf>,
}

fn parse_ablation(s: &str) -> std::result::Result<Ablation, String> {
    Ablation::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| format!("expected one of full, rank-only, gen-only, got {s}"))
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SynthData => "synth-data",
            Command::KbValidate => "kb-validate",
            Command::Link { .. } => "link",
            Command::Enumerate { .. } => "enumerate",
            Command::TrainDisambiguator => "train-disambiguator",
            Command::TrainRanker => "train-ranker",
            Command::TrainGenerator { .. } => "train-generator",
            Command::Rank { .. } => "rank",
            Command::Generate { .. } => "generate",
            Command::Infer { .. } => "infer",
            Command::Eval { .. } => "eval",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: Option<u64>,
    pub jobs: usize,
    pub config_hash: String,
    pub config: RunConfig,
    /// SHA-256 of each input by role.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of each written file by name.
    pub outputs: BTreeMap<String, String>,
    pub examples: usize,
    pub errors: usize,
}

#[derive(Serialize)]
struct LinkLine<'a> {
    question_id: &'a str,
    mentions: Vec<MentionOut<'a>>,
}

#[derive(Serialize)]
struct MentionOut<'a> {
    span: [usize; 2],
    surface: &'a str,
    chosen_entity: &'a EntityId,
    candidates: Vec<CandidateOut<'a>>,
}

#[derive(Serialize)]
struct CandidateOut<'a> {
    entity: &'a EntityId,
    popularity: f64,
    score: Option<f64>,
}

#[derive(Serialize)]
struct EnumerateLine<'a> {
    question_id: &'a str,
    candidates: Vec<String>,
    truncated: bool,
}

#[derive(Serialize)]
struct Scored {
    expr: String,
    score: f64,
}

#[derive(Serialize)]
struct RankLine<'a> {
    question_id: &'a str,
    ranked: Vec<Scored>,
}

#[derive(Serialize)]
struct Beam {
    expr: String,
    logprob: f64,
}

#[derive(Serialize)]
struct GenerateLine<'a> {
    question_id: &'a str,
    beams: Vec<Beam>,
}

/// A question record: any dataset line with at least an id and a question.
#[derive(Debug, Clone, Deserialize)]
struct Question {
    id: String,
    question: String,
    #[serde(default)]
    entities: Vec<EntityMention>,
}

struct Run {
    command: &'static str,
    config: RunConfig,
    out: Option<PathBuf>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    examples: usize,
    errors: usize,
}

impl Run {
    fn read(&mut self, role: &str, path: &Path) -> Result<String> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {role} {}", path.display()))?;
        self.inputs.insert(role.to_string(), sha256_hex(text.as_bytes()));
        Ok(text)
    }

    fn hash_input(&mut self, role: &str, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {role} {}", path.display()))?;
        self.inputs.insert(role.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    fn checkpoint(&mut self, role: &str, path: &Path) -> Result<()> {
        if !path.is_file() {
            bail!("{role} checkpoint not found: {}", path.display());
        }
        self.hash_input(role, path)
    }

    fn load_kb(&mut self, dir: &Path) -> Result<KnowledgeBase> {
        let (t, a) = (dir.join(TRIPLES_FILE), dir.join(ALIASES_FILE));
        self.hash_input("kb.triples", &t)?;
        self.hash_input("kb.aliases", &a)?;
        KnowledgeBase::load(&t, &a).with_context(|| format!("loading KB from {}", dir.display()))
    }

    fn questions(&mut self, path: &Path) -> Result<Vec<Question>> {
        let text = self.read("input", path)?;
        Ok(parse_jsonl(&text, &path.display().to_string())?)
    }

    fn examples(&mut self, role: &str, path: &Path) -> Result<Vec<Example>> {
        let text = self.read(role, path)?;
        Ok(parse_jsonl(&text, &path.display().to_string())?)
    }

    fn record(&mut self, path: &Path, bytes: &[u8]) {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string());
        self.outputs.insert(name, sha256_hex(bytes));
    }

    fn write_file(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.record(path, bytes);
        Ok(())
    }

    /// The command's main output: `--out` when given, else stdout.
    fn emit(&mut self, text: &str) -> Result<()> {
        match self.out.clone() {
            Some(p) => self.write_file(&p, text.as_bytes()),
            None => {
                self.outputs.insert("stdout".into(), sha256_hex(text.as_bytes()));
                std::io::stdout().write_all(text.as_bytes()).context("writing stdout")
            }
        }
    }

    fn out_dir(&self, default: PathBuf) -> Result<PathBuf> {
        let dir = self.out.clone().unwrap_or(default);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    /// Beside a file output, inside a directory output, else on stderr.
    fn finish(self, manifest_dir: Option<&Path>) -> Result<()> {
        let manifest = Manifest {
            command: self.command.to_string(),
            seed: self.config.seed,
            jobs: self.config.jobs(),
            config_hash: config_hash(&self.config),
            config: self.config.clone(),
            inputs: self.inputs,
            outputs: self.outputs,
            examples: self.examples,
            errors: self.errors,
        };
        let path = match (manifest_dir, &self.out) {
            (Some(dir), _) => Some(dir.join(format!("{}.manifest.json", self.command))),
            (None, Some(out)) => {
                let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
                name.push(".manifest.json");
                Some(out.with_file_name(name))
            }
            (None, None) => None,
        };
        match path {
            Some(p) => {
                let text = serde_json::to_string_pretty(&manifest)? + "\n";
                fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
            }
            None => {
                eprintln!("manifest: {}", serde_json::to_string(&manifest)?);
                Ok(())
            }
        }
    }
}

fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut s = String::new();
    for item in items {
        s.push_str(&serde_json::to_string(item)?);
        s.push('\n');
    }
    Ok(s)
}

/// Resolved configuration: file, then flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    if let Some(d) = &cli.data {
        cfg.data_dir = Some(d.clone());
    }
    Ok(cfg)
}

/// Entities for a question: the recorded gold mentions or the linker's.
fn spans_for(q: &Question, kb: &KnowledgeBase, gold: bool, model: Option<&Disambiguator>, k: usize) -> Result<Vec<LinkedSpan>> {
    if gold {
        return Ok(q.entities.iter().map(|m| LinkedSpan { span: (m.span[0], m.span[1]), entity: m.id.clone() }).collect());
    }
    Ok(linked_spans(&link(&q.question, kb, model, k)?))
}

fn optional_disambiguator(run: &mut Run, path: Option<&PathBuf>) -> Result<Option<Disambiguator>> {
    match path {
        None => Ok(None),
        Some(p) => {
            run.checkpoint("disambiguator", p)?;
            Ok(Some(load_disambiguator(p)?))
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let config = resolve_config(&cli)?;
    let mut run = Run {
        command: cli.command.name(),
        config,
        out: cli.out.clone(),
        inputs: BTreeMap::new(),
        outputs: BTreeMap::new(),
        examples: 0,
        errors: 0,
    };
    let data = run.config.data_dir();
    match cli.command {
        Command::SynthData => {
            let seed = run.config.require_seed("synth-data")?;
            let dir = run.out_dir(data)?;
            let corpus = generate_corpus(&run.config.spec, seed)?;
            let report = verify_corpus(&corpus);
            if !report.is_clean() {
                bail!("generated corpus failed verification: {report:?}");
            }
            corpus.write(&dir)?;
            let mut names = vec![TRIPLES_FILE.to_string(), ALIASES_FILE.to_string(), META_FILE.to_string()];
            names.extend(["train", "dev", "test"].map(|s| format!("{s}.jsonl")));
            for name in names {
                let p = dir.join(&name);
                let bytes = fs::read(&p).with_context(|| format!("reading back {}", p.display()))?;
                run.record(&p, &bytes);
            }
            run.examples = corpus.train.len() + corpus.dev.len() + corpus.test.len();
            println!(
                "wrote {} train, {} dev, {} test examples and {} triples to {} (ambiguity {:.3})",
                corpus.train.len(),
                corpus.dev.len(),
                corpus.test.len(),
                corpus.kb.num_triples(),
                dir.display(),
                report.ambiguity_rate
            );
            run.finish(Some(&dir))
        }
        Command::KbValidate => {
            let kb = run.load_kb(&data)?;
            println!(
                "{} triples, {} entities, {} relations, {} classes, {} alias surfaces",
                kb.num_triples(),
                kb.entities().len(),
                kb.relations().len(),
                kb.classes().len(),
                kb.alias_table().len()
            );
            let mut result = Ok(());
            let mut summary = json!({ "triples": kb.num_triples() });
            if data.join(META_FILE).is_file() {
                let corpus = Corpus::load(&data)?;
                let report = verify_corpus(&corpus);
                run.examples = report.examples;
                run.errors = report.violations();
                println!("{} examples, {} violations, ambiguity {:.3}", report.examples, report.violations(), report.ambiguity_rate);
                for v in report.leakage.iter().chain(&report.level_violations).chain(&report.invariant_violations) {
                    println!("  {v}");
                }
                if !report.is_clean() {
                    result = Err(anyhow::anyhow!("{} corpus violations", report.violations()));
                }
                summary["verify"] = serde_json::to_value(&report)?;
            }
            if run.out.is_some() {
                run.emit(&(serde_json::to_string_pretty(&summary)? + "\n"))?;
            }
            run.finish(None)?;
            result
        }
        Command::Link { input, model } => {
            let kb = run.load_kb(&data)?;
            let questions = run.questions(&input)?;
            let model = optional_disambiguator(&mut run, model.as_ref())?;
            let k = run.config.pipeline.link_top_k;
            let mut text = String::new();
            for q in &questions {
                let links = link(&q.question, &kb, model.as_ref(), k)?;
                let mentions = links
                    .iter()
                    .map(|l| MentionOut {
                        span: [l.mention.span.0, l.mention.span.1],
                        surface: &l.mention.surface,
                        chosen_entity: &l.chosen,
                        candidates: l
                            .candidates
                            .iter()
                            .map(|c| CandidateOut { entity: &c.entity, popularity: c.popularity, score: c.disamb_score })
                            .collect(),
                    })
                    .collect();
                text.push_str(&serde_json::to_string(&LinkLine { question_id: &q.id, mentions })?);
                text.push('\n');
            }
            run.examples = questions.len();
            run.emit(&text)?;
            run.finish(None)
        }
        Command::Enumerate { input, linking } => {
            let kb = run.load_kb(&data)?;
            let questions = run.questions(&input)?;
            let model = optional_disambiguator(&mut run, linking.disambiguator.as_ref())?;
            let cfg = run.config.pipeline.clone();
            let mut text = String::new();
            for q in &questions {
                let spans = spans_for(q, &kb, linking.gold_links, model.as_ref(), cfg.link_top_k)?;
                let entities: Vec<EntityId> = spans.into_iter().map(|s| s.entity).collect();
                let pool = enumerate_candidates(&kb, &entities, &cfg.enumeration);
                let printed: Vec<String> = pool.candidates.iter().map(|c| c.expr.print()).collect();
                let line = EnumerateLine { question_id: &q.id, candidates: printed, truncated: pool.stats.truncated };
                text.push_str(&serde_json::to_string(&line)?);
                text.push('\n');
            }
            run.examples = questions.len();
            run.emit(&text)?;
            run.finish(None)
        }
        Command::TrainDisambiguator => {
            let seed = run.config.require_seed("train-disambiguator")?;
            let kb = run.load_kb(&data)?;
            let train = run.examples("train", &data.join("train.jsonl"))?;
            let dir = run.out_dir(run.config.models_dir())?;
            let cfg = run.config.disambiguator.clone();
            let (model, report) = fit_disambiguator(&kb, &train, &cfg, seed)?;
            eprintln!("disambiguator: {} mentions, {} skipped, losses {:?}", report.mentions, report.skipped, report.epoch_losses);
            let path = dir.join(DISAMBIGUATOR_FILE);
            save_disambiguator(&path, &model, training_meta(seed, &cfg, &report))?;
            let bytes = fs::read(&path)?;
            run.record(&path, &bytes);
            run.examples = train.len();
            run.finish(Some(&dir))
        }
        Command::TrainRanker => {
            let seed = run.config.require_seed("train-ranker")?;
            let kb = run.load_kb(&data)?;
            let train = run.examples("train", &data.join("train.jsonl"))?;
            let dir = run.out_dir(run.config.models_dir())?;
            let cfg = run.config.ranker.clone();
            let (model, report) = fit_ranker(&kb, &train, &cfg, seed)?;
            eprintln!("ranker: losses {:?}", report.epoch_losses);
            let path = dir.join(RANKER_FILE);
            save_ranker(&path, &model, training_meta(seed, &cfg, &report))?;
            let bytes = fs::read(&path)?;
            run.record(&path, &bytes);
            run.examples = train.len();
            run.finish(Some(&dir))
        }
        Command::TrainGenerator { ranker } => {
            let seed = run.config.require_seed("train-generator")?;
            let kb = run.load_kb(&data)?;
            let train = run.examples("train", &data.join("train.jsonl"))?;
            let dir = run.out_dir(run.config.models_dir())?;
            let ranker_path = ranker.unwrap_or_else(|| dir.join(RANKER_FILE));
            run.checkpoint("ranker", &ranker_path)?;
            let ranker = load_ranker(&ranker_path)?;
            let cfg = run.config.generator.clone();
            let (model, report) = fit_generator(&kb, &train, &ranker, &run.config.ranker.enumeration, &cfg, seed)?;
            eprintln!("generator: {} examples, losses {:?}", report.examples, report.epoch_losses);
            let path = dir.join(GENERATOR_FILE);
            save_generator(&path, &model, training_meta(seed, &cfg, &report))?;
            let bytes = fs::read(&path)?;
            run.record(&path, &bytes);
            run.examples = report.examples;
            run.finish(Some(&dir))
        }
        Command::Rank { model, input, top, linking } => {
            let kb = run.load_kb(&data)?;
            let questions = run.questions(&input)?;
            run.checkpoint("ranker", &model)?;
            let ranker = load_ranker(&model)?;
            let disamb = optional_disambiguator(&mut run, linking.disambiguator.as_ref())?;
            let cfg = run.config.pipeline.clone();
            let mut text = String::new();
            for q in &questions {
                let spans = spans_for(q, &kb, linking.gold_links, disamb.as_ref(), cfg.link_top_k)?;
                let entities: Vec<EntityId> = spans.iter().map(|s| s.entity.clone()).collect();
                let (tokens, slots) = slot_question(&q.question, &spans);
                let pool = enumerate_candidates(&kb, &entities, &cfg.enumeration).candidates;
                let ranked = rank(&ranker, &tokens, &slots, pool)?;
                let items = ranked.top(top.unwrap_or(usize::MAX));
                let ranked = items.iter().map(|c| Scored { expr: c.expr.print(), score: c.score }).collect();
                text.push_str(&serde_json::to_string(&RankLine { question_id: &q.id, ranked })?);
                text.push('\n');
            }
            run.examples = questions.len();
            run.emit(&text)?;
            run.finish(None)
        }
        Command::Generate { model, ranker, input, beam, linking } => {
            let kb = run.load_kb(&data)?;
            let questions = run.questions(&input)?;
            run.checkpoint("generator", &model)?;
            run.checkpoint("ranker", &ranker)?;
            let generator = load_generator(&model)?;
            let ranker = load_ranker(&ranker)?;
            let disamb = optional_disambiguator(&mut run, linking.disambiguator.as_ref())?;
            if let Some(b) = beam {
                run.config.pipeline.beam = b;
            }
            let cfg = run.config.pipeline.clone();
            let mut text = String::new();
            for q in &questions {
                let spans = spans_for(q, &kb, linking.gold_links, disamb.as_ref(), cfg.link_top_k)?;
                let entities: Vec<EntityId> = spans.iter().map(|s| s.entity.clone()).collect();
                let (tokens, slots) = slot_question(&q.question, &spans);
                let pool = enumerate_candidates(&kb, &entities, &cfg.enumeration).candidates;
                let ranked = rank(&ranker, &tokens, &slots, pool)?;
                let beams = generator.generate(&kb, &tokens, &slots, ranked.top(cfg.top_k), cfg.top_k, cfg.beam)?;
                let beams = beams.iter().map(|b| Beam { expr: b.printed(), logprob: b.log_prob }).collect();
                text.push_str(&serde_json::to_string(&GenerateLine { question_id: &q.id, beams })?);
                text.push('\n');
            }
            run.examples = questions.len();
            run.emit(&text)?;
            run.finish(None)
        }
        Command::Infer { models, input, ablation, no_disambiguation, beam } => {
            if let Some(a) = ablation {
                run.config.pipeline.ablation = a;
            }
            if no_disambiguation {
                run.config.pipeline.disambiguate = false;
            }
            if let Some(b) = beam {
                run.config.pipeline.beam = b;
            }
            let models_dir = models.unwrap_or_else(|| run.config.models_dir());
            let input = input.unwrap_or_else(|| data.join("test.jsonl"));
            let kb = run.load_kb(&data)?;
            let cfg = run.config.pipeline.clone();
            let loaded = load_models(&models_dir, &cfg)?;
            for (role, file) in [("ranker", RANKER_FILE), ("generator", GENERATOR_FILE), ("disambiguator", DISAMBIGUATOR_FILE)] {
                let used = match role {
                    "generator" => loaded.generator.is_some(),
                    "disambiguator" => loaded.disambiguator.is_some(),
                    _ => true,
                };
                if used {
                    run.hash_input(role, &models_dir.join(file))?;
                }
            }
            let questions = run.questions(&input)?;
            let examples: Vec<Example> = questions
                .into_iter()
                .map(|q| Example {
                    id: q.id,
                    question: q.question,
                    s_expression: String::new(),
                    answers: Vec::new(),
                    entities: Vec::new(),
                    level: Level::Iid,
                })
                .collect();
            let (preds, manifest) = batch_infer(&examples, &kb, &loaded, &cfg, run.config.jobs());
            eprintln!("infer ({}): {} questions, {} errors, {} ms", cfg.ablation.name(), manifest.examples, manifest.errors, manifest.elapsed_ms);
            run.examples = manifest.examples;
            run.errors = manifest.errors;
            run.emit(&to_jsonl(&preds)?)?;
            run.finish(None)
        }
        Command::Eval { pred, gold, pred2 } => {
            let gold = gold.unwrap_or_else(|| data.join("test.jsonl"));
            let kb = run.load_kb(&data)?;
            let golds = run.examples("gold", &gold)?;
            let text = run.read("pred", &pred)?;
            let preds: Vec<Prediction> = parse_jsonl(&text, &pred.display().to_string())?;
            let other: Option<Vec<Prediction>> = match &pred2 {
                None => None,
                Some(p) => {
                    let text = run.read("pred2", p)?;
                    Some(parse_jsonl(&text, &p.display().to_string())?)
                }
            };
            let report = evaluate(&preds, &golds, &kb, other.as_deref())?;
            run.examples = golds.len();
            let table = report.to_table();
            let json = serde_json::to_string_pretty(&report)? + "\n";
            match run.out.clone() {
                Some(out) => {
                    run.write_file(&out, json.as_bytes())?;
                    run.write_file(&out.with_extension("txt"), table.as_bytes())?;
                    print!("{table}");
                }
                None => {
                    run.emit(&json)?;
                    print!("{table}");
                }
            }
            run.finish(None)
        }
    }
}
