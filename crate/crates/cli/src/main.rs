use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use kg2instruct::config::read_file;
use kg2instruct::corpus::{ingest, read_documents, TokenFilter};
use kg2instruct::eval::{score, Prediction};
use kg2instruct::nli::Premise;
use kg2instruct::pipeline::io::{read_jsonl, write_json, write_jsonl};
use kg2instruct::pipeline::stages::{self, LinkedRecord, SampleRecord, TripleRecord};
use kg2instruct::pipeline::{
    load_store, make_backend, run, stage_path, substream_seed, PipelineConfig, RunOptions, Stage,
};
use kg2instruct::render::InstructionRecord;
use kg2instruct::sampler::{default_caps, Caps};
use kg2instruct::text::Lang;

#[derive(Parser)]
#[command(name = "kg2instruct", version, about = "Build instruction-based IE datasets from a corpus and a KG subset")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the whole pipeline.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        no_supplement: bool,
        #[arg(long)]
        no_nli: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Rerun from this stage, reading earlier stage files from the work directory.
        #[arg(long)]
        resume_from: Option<Stage>,
    },
    /// Extract, filter and classify paragraphs.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        lang: Option<Lang>,
        #[arg(long)]
        min_tokens: Option<usize>,
        #[arg(long)]
        max_tokens: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Identify and disambiguate entity mentions.
    Link {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        paragraphs: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Align KG triples to linked paragraphs.
    Match {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        paragraphs: Option<PathBuf>,
        #[arg(long)]
        mentions: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Add triples from the extraction backend.
    Supplement {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        paragraphs: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Drop triples the paragraph does not entail.
    Filter {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        paragraphs: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        nli_threshold: Option<f64>,
        #[arg(long)]
        premise: Option<PremiseArg>,
    },
    /// Schema-balanced subset selection.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        paragraphs: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        k: Option<f64>,
        /// JSON object of per-domain caps.
        #[arg(long)]
        caps: Option<PathBuf>,
    },
    /// Write dataset records for the sampled paragraphs.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        paragraphs: Option<PathBuf>,
        #[arg(long)]
        mentions: Option<PathBuf>,
        #[arg(long)]
        triples: Option<PathBuf>,
        #[arg(long)]
        sampled: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score predictions against gold records.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Use the in-process rule-based backends.
    #[arg(long)]
    mock_backends: bool,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum PremiseArg {
    Paragraph,
    Sentence,
}

impl Common {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::load(&self.config)
            .with_context(|| format!("loading config {}", self.config.display()))?;
        cfg.apply_env();
        if self.mock_backends {
            cfg.backend.mock = true;
        }
        Ok(cfg)
    }
}

fn or_stage(p: &Option<PathBuf>, cfg: &PipelineConfig, stage: Stage) -> PathBuf {
    p.clone().unwrap_or_else(|| stage_path(&cfg.work_dir, stage))
}

fn report(value: impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(&value).expect("report serializes"));
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { common, no_supplement, no_nli, seed, resume_from } => {
            let mut cfg = common.load()?;
            if no_supplement {
                cfg.stages.supplement = false;
            }
            if no_nli {
                cfg.stages.nli = false;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let manifest = run(&cfg, RunOptions { resume_from })?;
            report(manifest);
        }
        Command::Ingest { common, input, lang, min_tokens, max_tokens, output } => {
            let cfg = common.load()?;
            stage(Stage::Ingest, || {
                let lang = lang.unwrap_or(cfg.lang);
                let filter = TokenFilter {
                    min_tokens: min_tokens.unwrap_or(cfg.token_filter.min_tokens),
                    max_tokens: max_tokens.unwrap_or(cfg.token_filter.max_tokens),
                };
                let input = input.unwrap_or_else(|| cfg.corpus.clone());
                let file = File::open(&input).with_context(|| format!("opening {}", input.display()))?;
                let docs = read_documents(BufReader::new(file))?;
                let backend = make_backend(&cfg)?;
                let (paragraphs, rep) = ingest(&docs, lang, filter, Some(backend.as_ref()))?;
                write_jsonl(&or_stage(&output, &cfg, Stage::Ingest), &paragraphs)?;
                report(rep);
                Ok(())
            })?;
        }
        Command::Link { common, paragraphs, output } => {
            let cfg = common.load()?;
            stage(Stage::Link, || {
                let bundle = cfg.bundle()?;
                let store = load_store(&cfg, &bundle)?;
                let backend = make_backend(&cfg)?;
                let ps = read_jsonl(&or_stage(&paragraphs, &cfg, Stage::Ingest))?;
                let (recs, rep) = stages::link(&ps, &store, &bundle, backend.as_ref(), cfg.disambiguation);
                write_jsonl(&or_stage(&output, &cfg, Stage::Link), &recs)?;
                report(rep);
                Ok(())
            })?;
        }
        Command::Match { common, paragraphs, mentions, output } => {
            let cfg = common.load()?;
            stage(Stage::Match, || {
                let bundle = cfg.bundle()?;
                let store = load_store(&cfg, &bundle)?;
                let ps = read_jsonl(&or_stage(&paragraphs, &cfg, Stage::Ingest))?;
                let linked: Vec<LinkedRecord> = read_jsonl(&or_stage(&mentions, &cfg, Stage::Link))?;
                let (recs, rep) = stages::match_triples(&ps, &linked, &store, &bundle)?;
                write_jsonl(&or_stage(&output, &cfg, Stage::Match), &recs)?;
                report(rep);
                Ok(())
            })?;
        }
        Command::Supplement { common, paragraphs, input, output } => {
            let cfg = common.load()?;
            stage(Stage::Supplement, || {
                let bundle = cfg.bundle()?;
                let backend = make_backend(&cfg)?;
                let ps = read_jsonl(&or_stage(&paragraphs, &cfg, Stage::Ingest))?;
                let matched: Vec<TripleRecord> = read_jsonl(&or_stage(&input, &cfg, Stage::Match))?;
                let (recs, rep) = stages::supplement_triples(&ps, &matched, &bundle, backend.as_ref())?;
                write_jsonl(&or_stage(&output, &cfg, Stage::Supplement), &recs)?;
                report(rep);
                Ok(())
            })?;
        }
        Command::Filter { common, paragraphs, input, output, nli_threshold, premise } => {
            let cfg = common.load()?;
            stage(Stage::Filter, || {
                let threshold = nli_threshold.unwrap_or(cfg.nli_threshold);
                if !(0.0..=1.0).contains(&threshold) {
                    bail!("--nli-threshold {threshold} outside [0, 1]");
                }
                let premise = match premise {
                    Some(PremiseArg::Paragraph) => Premise::Paragraph,
                    Some(PremiseArg::Sentence) => Premise::Sentence,
                    None => cfg.nli_premise,
                };
                let bundle = cfg.bundle()?;
                let backend = make_backend(&cfg)?;
                let ps = read_jsonl(&or_stage(&paragraphs, &cfg, Stage::Ingest))?;
                let recs: Vec<TripleRecord> = read_jsonl(&or_stage(&input, &cfg, Stage::Supplement))?;
                let (out, rep) = stages::filter_triples(&ps, &recs, &bundle, backend.as_ref(), threshold, premise)?;
                write_jsonl(&or_stage(&output, &cfg, Stage::Filter), &out)?;
                report(rep);
                Ok(())
            })?;
        }
        Command::Sample { common, paragraphs, input, output, seed, k, caps } => {
            let cfg = common.load()?;
            stage(Stage::Sample, || {
                let caps: Caps = match caps {
                    Some(p) => serde_json::from_str(&read_file(&p)?)
                        .with_context(|| format!("parsing caps {}", p.display()))?,
                    None => cfg.sampler.caps.clone().unwrap_or_else(|| default_caps(cfg.lang)),
                };
                let seed = substream_seed(seed.unwrap_or(cfg.seed), Stage::Sample.name());
                let ps = read_jsonl(&or_stage(&paragraphs, &cfg, Stage::Ingest))?;
                let recs: Vec<TripleRecord> = read_jsonl(&or_stage(&input, &cfg, Stage::Filter))?;
                let (out, rep) = stages::sample_records(&ps, &recs, seed, k.unwrap_or(cfg.sampler.k), &caps)?;
                write_jsonl(&or_stage(&output, &cfg, Stage::Sample), &out)?;
                report(rep);
                Ok(())
            })?;
        }
        Command::Render { common, paragraphs, mentions, triples, sampled, output } => {
            let cfg = common.load()?;
            stage(Stage::Render, || {
                let bundle = cfg.bundle()?;
                let store = load_store(&cfg, &bundle)?;
                let ps = read_jsonl(&or_stage(&paragraphs, &cfg, Stage::Ingest))?;
                let linked: Vec<LinkedRecord> = read_jsonl(&or_stage(&mentions, &cfg, Stage::Link))?;
                let recs: Vec<TripleRecord> = read_jsonl(&or_stage(&triples, &cfg, Stage::Filter))?;
                let selected: Vec<SampleRecord> = read_jsonl(&or_stage(&sampled, &cfg, Stage::Sample))?;
                let out = stages::render_records(&ps, &linked, &recs, &selected, &store, &bundle)?;
                for r in &out {
                    r.check()?;
                }
                write_jsonl(&output.unwrap_or_else(|| cfg.output.clone()), &out)?;
                report(serde_json::json!({ "records": out.len() }));
                Ok(())
            })?;
        }
        Command::Eval { gold, pred, report: report_path } => {
            let gold: Vec<InstructionRecord> = read_jsonl(&gold)?;
            let pred: Vec<Prediction> = read_jsonl(&pred)?;
            let rep = score(&gold, &pred)?;
            if let Some(p) = report_path {
                write_json(&p, &rep)?;
            }
            print!("{}", rep.to_table());
        }
    }
    Ok(())
}

fn stage(stage: Stage, f: impl FnOnce() -> Result<()>) -> Result<()> {
    f().with_context(|| format!("stage {stage} failed"))
}
