//! `numlm`: corpus preparation, GMM pretraining, training, evaluation and
//! analysis runs. Every command writes `manifest.json` next to its outputs.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use numlm::corpus::{corpus_stats, format_stats_table, read_corpus, split_documents, write_tokenized, Document, Vocabulary};
use numlm::eval::{self, BenfordTable, DEFAULT_COVERAGE};
use numlm::gmm::{build_component_bank, traces_to_csv, ComponentBank};
use numlm::model::{LanguageModel, ModelKind};
use numlm::train::{self, Checkpoint, RunConfig, SlotMark, SynthSpec, TrainOptions};
use numlm::embed::PretrainedEmbeddings;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

const SPLITS: [&str; 3] = ["train", "dev", "test"];

#[derive(Parser)]
#[command(name = "numlm", version, about = "Numeracy-aware language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize and split a corpus, build the vocabulary and print statistics.
    Prep {
        /// One document per line, or a directory with train/dev/test.txt.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        vocab_size: usize,
        #[arg(long, env = "NUMLM_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        dev_fraction: f64,
        #[arg(long, default_value_t = 0.1)]
        test_fraction: f64,
    },
    /// Fit the Gaussian mixture component bank on the training numerals.
    FitGmm {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model described by a run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configuration's seed.
        #[arg(long, env = "NUMLM_SEED")]
        seed: Option<u64>,
        /// Overrides the configuration's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Perplexities and number-line regression on the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Share of training numerals the candidate precision must cover.
        #[arg(long, default_value_t = DEFAULT_COVERAGE)]
        coverage: f64,
        /// Restrict regression metrics to continuous-attribute slots
        /// (needs test.slots.jsonl).
        #[arg(long)]
        continuous_only: bool,
    },
    /// Benford, embedding-similarity or strategy-selection reports.
    Analyze {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Prepared data; required for benford and selection.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated numerals for the similarity matrix (defaults to
        /// the vocabulary's numerals, or the digits for digit-level models).
        #[arg(long, value_delimiter = ',')]
        tokens: Vec<String>,
    },
    /// Generate a synthetic corpus from a template specification.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, env = "NUMLM_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Benford,
    Similarity,
    Selection,
}

#[derive(Serialize)]
struct Manifest {
    command: &'static str,
    version: &'static str,
    seed: Option<u64>,
    config: BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

impl Manifest {
    fn new(command: &'static str, seed: Option<u64>) -> Self {
        Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    fn config(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.config.insert(key.to_string(), value.to_string());
        self
    }

    fn input(&mut self, path: &Path) -> Result<&mut Self> {
        self.inputs.insert(path.display().to_string(), file_digest(path)?);
        Ok(self)
    }

    /// Writes `bytes` to `dir/name` and records it.
    fn write(&mut self, dir: &Path, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn finish(mut self, dir: &Path) -> Result<()> {
        self.outputs.sort();
        let json = serde_json::to_string_pretty(&self)?;
        fs::write(dir.join("manifest.json"), json + "\n")?;
        Ok(())
    }
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn split_path(data_dir: &Path, split: &str) -> PathBuf {
    data_dir.join(format!("{split}.txt"))
}

fn read_split(data_dir: &Path, split: &str) -> Result<Vec<Document>> {
    let path = split_path(data_dir, split);
    if !path.exists() && split == "dev" {
        return Ok(Vec::new());
    }
    read_corpus(&path).with_context(|| format!("reading {}", path.display()))
}

fn lines(text: &str) -> String {
    text.lines().map(|l| format!("{l}\n")).collect()
}

fn prep(input: &Path, out: &Path, vocab_size: usize, seed: u64, dev: f64, test: f64) -> Result<()> {
    let mut manifest = Manifest::new("prep", Some(seed));
    manifest.config("vocab_size", vocab_size);
    let (train, dev_docs, test_docs) = if input.is_dir() {
        for split in SPLITS {
            let path = split_path(input, split);
            if path.exists() {
                manifest.input(&path)?;
            }
        }
        (read_split(input, "train")?, read_split(input, "dev")?, read_split(input, "test")?)
    } else {
        manifest.input(input)?.config("dev_fraction", dev).config("test_fraction", test);
        let docs = read_corpus(input).with_context(|| format!("reading {}", input.display()))?;
        split_documents(docs, dev, test, seed)
    };
    if train.is_empty() {
        bail!("no training documents in {}", input.display());
    }
    create_dir(out)?;
    let vocab = Vocabulary::build(train.iter(), vocab_size)?;
    for (split, docs) in SPLITS.iter().zip([&train, &dev_docs, &test_docs]) {
        write_tokenized(&out.join(format!("{split}.txt")), docs)?;
        manifest.outputs.push(format!("{split}.txt"));
        // slot annotations from `synth` index tokens, which tokenization preserves
        let slots = input.join(format!("{split}.slots.jsonl"));
        if input.is_dir() && slots.exists() {
            manifest.write(out, &format!("{split}.slots.jsonl"), fs::read(&slots)?)?;
        }
    }
    manifest.write(out, "vocab.txt", vocab.to_file_string())?;
    let stats: BTreeMap<&str, _> = SPLITS
        .iter()
        .zip([&train, &dev_docs, &test_docs])
        .map(|(s, d)| (*s, corpus_stats(d, &vocab)))
        .collect();
    manifest.write(out, "stats.json", serde_json::to_string_pretty(&stats)? + "\n")?;
    let columns: Vec<(&str, _)> = SPLITS.iter().map(|s| (*s, &stats[s])).collect();
    println!("{}", format_stats_table(&columns));
    manifest.finish(out)
}

fn fit_gmm(data_dir: &Path, out: &Path) -> Result<()> {
    let mut manifest = Manifest::new("fit-gmm", None);
    let train_path = split_path(data_dir, "train");
    manifest.input(&train_path)?;
    let values = numlm::corpus::numeral_values(&read_split(data_dir, "train")?);
    let (bank, traces) = build_component_bank(&values)?;
    info!("bank with {} components from {} fits", bank.len(), traces.len());
    create_dir(out)?;
    manifest.write(out, "bank.txt", bank.to_file_string())?;
    manifest.write(out, "traces.csv", traces_to_csv(&traces))?;
    manifest.finish(out)
}

fn train_cmd(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = RunConfig::load(config_path).with_context(|| format!("loading {}", config_path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if out.is_some() {
        cfg.out = out;
    }
    let data_dir = cfg.data_dir.clone().context("configuration has no `data_dir`")?;
    let out = cfg.out.clone().context("configuration has no `out` (or pass --out)")?;
    let mut manifest = Manifest::new("train", Some(cfg.seed));
    manifest.input(config_path)?;
    for (k, v) in cfg.to_text().lines().filter_map(|l| l.split_once(" = ")) {
        manifest.config(k, v);
    }

    let train_path = split_path(&data_dir, "train");
    manifest.input(&train_path)?;
    let train_docs = read_split(&data_dir, "train")?;
    let dev_docs = read_split(&data_dir, "dev")?;
    let vocab_path = data_dir.join("vocab.txt");
    let vocab = if vocab_path.exists() {
        manifest.input(&vocab_path)?;
        Vocabulary::load(&vocab_path)?
    } else {
        Vocabulary::build(train_docs.iter(), cfg.vocab_cap)?
    };
    let bank = if cfg.model.needs_bank() {
        let path = cfg.bank.clone().unwrap_or_else(|| data_dir.join("bank.txt"));
        manifest.input(&path)?;
        Some(ComponentBank::load(&path).with_context(|| format!("loading bank {}", path.display()))?)
    } else {
        None
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = LanguageModel::new(cfg.model, vocab, bank, cfg.dim, cfg.dropout, &mut rng)?;
    if let Some(path) = &cfg.pretrained {
        manifest.input(path)?;
        let table = model.backbone().input;
        let n = PretrainedEmbeddings::load(path)?.apply(&mut model.params, &table, &model.vocab)?;
        info!("initialised {n} input embeddings from {}", path.display());
    }
    let opts = TrainOptions {
        adam: cfg.adam,
        patience: cfg.patience,
        max_epochs: cfg.max_epochs,
        seed: cfg.seed,
    };
    let outcome = train::train(model, &opts, &train_docs, &dev_docs)?;
    info!("best epoch {}", outcome.best_epoch);

    create_dir(&out)?;
    let ckpt = Checkpoint {
        config_text: cfg.to_text(),
        train_digest: file_digest(&train_path)?,
        log: outcome.log,
        model: outcome.model,
    };
    manifest.write(&out, "checkpoint.bin", ckpt.to_bytes()?)?;
    manifest.write(&out, "train_log.json", serde_json::to_string_pretty(&ckpt.log)? + "\n")?;
    manifest.finish(&out)
}

fn load_checkpoint(path: &Path, data_dir: Option<&Path>) -> Result<Checkpoint> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(dir) = data_dir {
        let digest = file_digest(&split_path(dir, "train"))?;
        if digest != ckpt.train_digest {
            warn!(
                "training split digest {digest} differs from the checkpoint's {}; the model was trained on other data",
                ckpt.train_digest
            );
        }
    }
    Ok(ckpt)
}

fn continuous_marks(data_dir: &Path) -> Result<HashSet<(usize, usize)>> {
    let path = data_dir.join("test.slots.jsonl");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let marks: Vec<Vec<SlotMark>> = numlm::train::synth::slots_from_jsonl(&text)?;
    Ok(marks
        .iter()
        .enumerate()
        .flat_map(|(d, m)| m.iter().filter(|s| s.continuous).map(move |s| (d, s.token)))
        .collect())
}

fn eval_cmd(checkpoint: &Path, data_dir: &Path, out: &Path, coverage: f64, continuous_only: bool) -> Result<()> {
    let mut manifest = Manifest::new("eval", None);
    manifest.input(checkpoint)?;
    manifest.config("coverage", coverage).config("continuous_only", continuous_only);
    let ckpt = load_checkpoint(checkpoint, Some(data_dir))?;
    for split in ["train", "test"] {
        manifest.input(&split_path(data_dir, split))?;
    }
    let train_docs = read_split(data_dir, "train")?;
    let test_docs = read_split(data_dir, "test")?;
    let marks = if continuous_only { Some(continuous_marks(data_dir)?) } else { None };
    let evaluation = eval::evaluate(&ckpt.model, &train_docs, &test_docs, coverage, |d, t| {
        marks.as_ref().is_none_or(|m| m.contains(&(d, t)))
    })?;
    create_dir(out)?;
    let mut report = evaluation.report;
    report.artifacts = vec!["eval.json".into(), "predictions.csv".into()];
    let mut csv = String::from("doc,token,truth,predicted,surface\n");
    for p in &evaluation.predictions {
        csv.push_str(&format!("{},{},{},{},{}\n", p.doc, p.token, p.truth, p.predicted, p.surface));
    }
    manifest.write(out, "predictions.csv", csv)?;
    manifest.write(out, "eval.json", report.to_json()? + "\n")?;
    println!("{}", report.to_json()?);
    manifest.finish(out)
}

fn analyze(checkpoint: &Path, mode: Mode, data_dir: Option<&Path>, out: &Path, tokens: &[String]) -> Result<()> {
    let mut manifest = Manifest::new("analyze", None);
    manifest.input(checkpoint)?;
    let ckpt = load_checkpoint(checkpoint, data_dir)?;
    let model = &ckpt.model;
    let test = |manifest: &mut Manifest| -> Result<Vec<Document>> {
        let dir = data_dir.context("this mode needs --data-dir")?;
        manifest.input(&split_path(dir, "test"))?;
        read_split(dir, "test")
    };
    create_dir(out)?;
    match mode {
        Mode::Benford => {
            manifest.config("mode", "benford");
            let docs = test(&mut manifest)?;
            let mut table = BenfordTable::new(1)?;
            let surfaces = docs.iter().flatten().filter(|t| t.is_numeral()).map(|t| t.surface.as_str());
            table.corpus = eval::corpus_digit_distribution(surfaces, 1).ok();
            if model.digit_head().is_some() {
                table.model = Some(eval::model_leading_digits(model, &docs)?.to_vec());
            } else {
                warn!("{} has no digit-level head; reporting the corpus side only", model.kind);
            }
            print!("{}", table.to_csv());
            manifest.write(out, "benford.csv", table.to_csv())?;
        }
        Mode::Similarity => {
            manifest.config("mode", "similarity");
            let matrix = if tokens.is_empty() && model.digit_head().is_some() {
                eval::digit_similarity(model)?
            } else {
                let wanted: Vec<String> =
                    if tokens.is_empty() { model.vocab.known_numerals().to_vec() } else { tokens.to_vec() };
                manifest.config("tokens", wanted.join(","));
                eval::numeral_similarity(model, &wanted)?
            };
            for s in &matrix.skipped {
                warn!("skipping `{s}`: no output embedding");
            }
            manifest.write(out, "similarity.csv", matrix.to_csv())?;
        }
        Mode::Selection => {
            manifest.config("mode", "selection");
            if model.kind != ModelKind::Combination {
                bail!("selection reports need a combination checkpoint, got {}", model.kind);
            }
            let docs = test(&mut manifest)?;
            let rows = eval::strategy_selection(model, &docs)?;
            for (name, top) in numlm::numeral_heads::STRATEGIES.iter().zip(eval::selection_rankings(&rows, 10)) {
                let list: Vec<&str> = top.iter().map(|r| r.surface.as_str()).collect();
                println!("{name}: {}", list.join(" "));
            }
            manifest.write(out, "selection.csv", eval::selection_csv(&rows))?;
        }
    }
    manifest.finish(out)
}

fn synth(spec_path: &Path, seed: u64, out: &Path) -> Result<()> {
    let mut manifest = Manifest::new("synth", Some(seed));
    manifest.input(spec_path)?;
    let spec = SynthSpec::load(spec_path).with_context(|| format!("loading {}", spec_path.display()))?;
    let corpus = spec.generate(seed)?;
    create_dir(out)?;
    for split in SPLITS {
        let docs = corpus.split(split).expect("known split");
        let text: String = docs.iter().map(|d| lines(&d.text)).collect();
        manifest.write(out, &format!("{split}.txt"), text)?;
        manifest.write(out, &format!("{split}.slots.jsonl"), train::synth::slots_to_jsonl(docs)?)?;
    }
    manifest.finish(out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prep { input, out, vocab_size, seed, dev_fraction, test_fraction } => {
            prep(&input, &out, vocab_size, seed, dev_fraction, test_fraction)
        }
        Command::FitGmm { data_dir, out } => fit_gmm(&data_dir, &out),
        Command::Train { config, seed, out } => train_cmd(&config, seed, out),
        Command::Eval { checkpoint, data_dir, out, coverage, continuous_only } => {
            eval_cmd(&checkpoint, &data_dir, &out, coverage, continuous_only)
        }
        Command::Analyze { checkpoint, mode, data_dir, out, tokens } => {
            analyze(&checkpoint, mode, data_dir.as_deref(), &out, &tokens)
        }
        Command::Synth { spec, seed, out } => synth(&spec, seed, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
