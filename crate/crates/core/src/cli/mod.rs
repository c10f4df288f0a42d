//! The `phongru` command line: synthesize data, train, evaluate retrieval
//! and run the probes. JSON reports go to `--out`, summary tables to stdout,
//! logs to stderr.

pub mod manifest;
mod tables;

pub use manifest::{config_hash, manifest_path_for, sha256_hex, RunManifest, MANIFEST_FILE};

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{
    load_men, read_json, synth::generate, write_json, write_men, AssembleOptions, GroundedDataset, Split, StripSet,
    SynthConfig, MEN_PAIRS_FILE, MEN_PHON_FILE,
};
use crate::error::{Error, Result};
use crate::models::{Checkpoint, Model, ModelType, Representations};
use crate::probing::{
    boundary_probe_report, edit_distance_report, substring_report, word_similarity_report, BoundaryProbeConfig,
    BoundaryReport, EditDistanceReport, SimilarityReport, SpanCounting, SubstringReport, WordEncoder, DEFAULT_C_GRID,
    DEFAULT_FOLDS, DEFAULT_MIN_FREQ,
};
use crate::reference::{
    reference_scores, BoundaryScores, Correlations, EditDistanceScores, RetrievalScores, SubstringScores,
};
use crate::retrieval::{evaluate_retrieval, RetrievalReport};
use crate::training::{train, TrainConfig};

pub const THREADS_ENV: &str = "PHONGRU_THREADS";
pub const TRAIN_CONFIG_FILE: &str = "config.json";

#[derive(Debug, Parser)]
#[command(name = "phongru", version, about = "Phoneme-level grounded language models and their probes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus from a generator config.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write per-epoch checkpoints.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: ModelType,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Image retrieval accuracy of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long, value_delimiter = ',', default_value = "5,10")]
        k: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Diagnostic analyses of a trained checkpoint.
    #[command(subcommand)]
    Probe(Probe),
}

#[derive(Debug, Args)]
pub struct ModelInputs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// JSON report path; a manifest is written beside it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MenInputs {
    /// Whitespace-separated `word_a word_b rating` file.
    #[arg(long)]
    pub men: PathBuf,
    /// Transcriptions and training counts; defaults to men_phon.jsonl beside --men.
    #[arg(long)]
    pub men_phon: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Probe {
    /// Word-boundary classifiers on layer activations and n-grams.
    Boundary {
        #[command(flatten)]
        inputs: ModelInputs,
        /// Defaults to every layer of the model.
        #[arg(long, value_delimiter = ',')]
        layers: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
        ngrams: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        c_grid: Option<Vec<f64>>,
        #[arg(long, default_value_t = DEFAULT_FOLDS)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "val")]
        train_split: Split,
        #[arg(long, default_value = "test")]
        test_split: Split,
    },
    /// Correlation of activation similarity with human word-similarity ratings.
    Similarity {
        #[command(flatten)]
        inputs: ModelInputs,
        #[command(flatten)]
        men: MenInputs,
        #[arg(long, default_value_t = DEFAULT_MIN_FREQ)]
        min_freq: usize,
    },
    /// Correlation of activation similarity with phoneme edit distance.
    Editdist {
        #[command(flatten)]
        inputs: ModelInputs,
        #[command(flatten)]
        men: MenInputs,
    },
    /// Position of substrings shared with each sentence's nearest neighbor.
    Substrings {
        #[command(flatten)]
        inputs: ModelInputs,
        #[arg(long, default_value = "val")]
        split: Split,
        #[arg(long, value_delimiter = ',')]
        layers: Option<Vec<usize>>,
        #[arg(long, default_value = "per-span")]
        counting: SpanCounting,
    },
}

/// Parses arguments, runs the command and maps failures to exit codes:
/// 2 for usage and validation errors, 1 for runtime failures.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match configure_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV}={v:?} is not a positive integer")))?;
    // a pool may already exist when called twice in one process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn require_file(p: &Path, what: &str) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} {} does not exist", p.display())))
    }
}

fn require_dir(p: &Path, what: &str) -> Result<()> {
    if p.is_dir() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} {} does not exist", p.display())))
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let start = Instant::now();
    match cli.command {
        Command::Synth { config, out } => cmd_synth(&config, &out, start),
        Command::Train { data, model, config, out } => cmd_train(&data, model, &config, &out, start),
        Command::Eval { checkpoint, data, split, k, out } => {
            cmd_eval(&checkpoint, &data, split, &k, out.as_deref(), start)
        }
        Command::Probe(p) => cmd_probe(p, start),
    }
}

pub fn cmd_synth(config_path: &Path, out: &Path, start: Instant) -> Result<()> {
    require_file(config_path, "generator config")?;
    let config: SynthConfig = read_json(config_path)?;
    config.validate()?;
    let corpus = generate(&config)?;
    let mut manifest = RunManifest::new("synth", &config, Some(config.seed))?;
    manifest.input(config_path);
    for p in corpus.raw.write_dir(out)? {
        manifest.output(&p);
    }
    if let Some(men) = &corpus.men {
        let (pairs, phon) = (out.join(MEN_PAIRS_FILE), out.join(MEN_PHON_FILE));
        write_men(men, &pairs, &phon)?;
        manifest.output(&pairs);
        manifest.output(&phon);
    }
    println!(
        "{}",
        tables::synth_summary(
            &config,
            corpus.raw.captions.len(),
            corpus.raw.features.len(),
            corpus.men.as_ref().map(|m| m.pairs.len())
        )
    );
    manifest.finish(start.elapsed(), &out.join(MANIFEST_FILE))
}

pub fn cmd_train(data: &Path, model_type: ModelType, config_path: &Path, out: &Path, start: Instant) -> Result<()> {
    require_dir(data, "data directory")?;
    require_file(config_path, "training config")?;
    let config: TrainConfig = read_json(config_path)?;
    config.validate()?;
    let opts = AssembleOptions { strip: StripSet::default(), word_unk_threshold: config.unk_threshold };
    let dataset = GroundedDataset::load_dir(data, &opts)?;
    log::info!(
        "training {model_type} on {} utterances ({} phonemes, {} words in vocabulary)",
        dataset.split(Split::Train).len(),
        dataset.phoneme_vocab.len(),
        dataset.word_vocab.len()
    );
    std::fs::create_dir_all(out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    write_json(&out.join(TRAIN_CONFIG_FILE), &config)?;
    let outcome = train(&config, &dataset, model_type, Some(out))?;

    let mut manifest = RunManifest::new("train", &(&config, model_type), Some(config.seed))?;
    manifest.input(data);
    manifest.input(config_path);
    manifest.output(&out.join(TRAIN_CONFIG_FILE));
    manifest.output(&out.join(crate::training::checkpoint_name(0)));
    for log in &outcome.logs {
        if let Some(c) = &log.checkpoint {
            manifest.output(&out.join(c));
        }
    }
    manifest.output(&out.join(crate::training::EPOCH_LOG_FILE));
    if outcome.best.is_some() {
        manifest.output(&out.join(crate::training::BEST_FILE));
    }
    println!("{}", tables::train_summary(model_type, &outcome));
    manifest.finish(start.elapsed(), &out.join(MANIFEST_FILE))
}

/// A checkpoint with the data directory it was trained on.
pub struct Loaded {
    pub checkpoint: Checkpoint,
    pub model: Model,
    pub dataset: GroundedDataset,
}

pub fn load_checkpoint_and_data(checkpoint: &Path, data: &Path) -> Result<Loaded> {
    require_file(checkpoint, "checkpoint")?;
    require_dir(data, "data directory")?;
    let ck = Checkpoint::load(checkpoint)?;
    let opts = AssembleOptions { strip: StripSet::default(), word_unk_threshold: ck.meta.unk_threshold };
    let dataset = GroundedDataset::load_dir(data, &opts)?;
    ck.check_vocabs(&dataset.phoneme_vocab, &dataset.word_vocab)?;
    let model = ck.to_model()?;
    if model.feature_dim() != dataset.feature_dim() {
        return Err(Error::Checkpoint(format!(
            "checkpoint predicts {} features, data has {}",
            model.feature_dim(),
            dataset.feature_dim()
        )));
    }
    Ok(Loaded { checkpoint: ck, model, dataset })
}

fn write_report<T: Serialize, C: Serialize>(
    out: Option<&Path>,
    report: &T,
    command: &str,
    config: &C,
    seed: Option<u64>,
    inputs: &[&Path],
    start: Instant,
) -> Result<()> {
    let Some(out) = out else { return Ok(()) };
    write_json(out, report)?;
    let mut manifest = RunManifest::new(command, config, seed)?;
    for p in inputs {
        manifest.input(p);
    }
    manifest.output(out);
    manifest.finish(start.elapsed(), &manifest_path_for(out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub checkpoint: String,
    pub epoch: usize,
    pub result: RetrievalReport,
    /// Published full-scale test accuracies for this model type.
    pub published: Option<RetrievalScores>,
}

pub fn cmd_eval(
    checkpoint: &Path,
    data: &Path,
    split: Split,
    ks: &[usize],
    out: Option<&Path>,
    start: Instant,
) -> Result<()> {
    if ks.is_empty() {
        return Err(Error::InvalidInput("--k needs at least one cutoff".into()));
    }
    let l = load_checkpoint_and_data(checkpoint, data)?;
    let utts = l.dataset.split(split);
    let r = evaluate_retrieval(&l.model, utts, |id| l.dataset.target(id), ks)?;
    let model_type = l.model.model_type();
    let output = EvalOutput {
        checkpoint: checkpoint.display().to_string(),
        epoch: l.checkpoint.meta.epoch,
        result: RetrievalReport::new(model_type.as_str(), split.as_str(), &r),
        published: reference_scores().retrieval.get(model_type.as_str()).cloned(),
    };
    println!("{}", tables::eval_table(&output));
    write_report(out, &output, "eval", &(split, ks), None, &[checkpoint, data], start)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryOutput {
    pub checkpoint: String,
    pub train_split: Split,
    pub test_split: Split,
    pub report: BoundaryReport,
    pub published: BoundaryScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityOutput {
    pub checkpoint: String,
    pub men: String,
    pub report: SimilarityReport,
    pub published: std::collections::BTreeMap<usize, Correlations>,
    pub published_frequent_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditDistanceOutput {
    pub checkpoint: String,
    pub men: String,
    pub report: EditDistanceReport,
    pub published: EditDistanceScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstringOutput {
    pub checkpoint: String,
    pub split: Split,
    pub report: SubstringReport,
    pub published: SubstringScores,
}

fn all_layers(model: &Model) -> Vec<usize> {
    (1..=model.num_layers()).collect()
}

fn men_paths(men: &MenInputs) -> Result<(PathBuf, PathBuf)> {
    require_file(&men.men, "MEN pairs file")?;
    let phon = men.men_phon.clone().unwrap_or_else(|| men.men.with_file_name(MEN_PHON_FILE));
    require_file(&phon, "MEN transcription file")?;
    Ok((men.men.clone(), phon))
}

fn word_encoder(l: &Loaded) -> WordEncoder<'_> {
    WordEncoder {
        model_type: l.model.model_type(),
        phoneme_vocab: &l.dataset.phoneme_vocab,
        word_vocab: &l.dataset.word_vocab,
        strip: StripSet::default(),
    }
}

pub fn cmd_probe(probe: Probe, start: Instant) -> Result<()> {
    let published = reference_scores();
    match probe {
        Probe::Boundary { inputs, layers, ngrams, c_grid, folds, seed, train_split, test_split } => {
            let l = load_checkpoint_and_data(&inputs.checkpoint, &inputs.data)?;
            if l.model.model_type() != ModelType::PhonGru {
                return Err(Error::InvalidInput("the boundary probe needs a phon-gru checkpoint".into()));
            }
            let config = BoundaryProbeConfig {
                layers: layers.unwrap_or_else(|| all_layers(&l.model)),
                ngram_orders: ngrams,
                c_grid: c_grid.unwrap_or_else(|| DEFAULT_C_GRID.to_vec()),
                folds,
                seed,
            };
            let report =
                boundary_probe_report(&l.model, l.dataset.split(train_split), l.dataset.split(test_split), &config)?;
            let output = BoundaryOutput {
                checkpoint: inputs.checkpoint.display().to_string(),
                train_split,
                test_split,
                report,
                published: published.boundary,
            };
            println!("{}", tables::boundary_table(&output));
            let echo = (&output.report.config, train_split, test_split);
            write_report(
                inputs.out.as_deref(),
                &output,
                "probe boundary",
                &echo,
                Some(seed),
                &[&inputs.checkpoint, &inputs.data],
                start,
            )
        }
        Probe::Similarity { inputs, men, min_freq } => {
            let (pairs_path, phon_path) = men_paths(&men)?;
            let l = load_checkpoint_and_data(&inputs.checkpoint, &inputs.data)?;
            let pairs = load_men(&pairs_path, &phon_path)?;
            let report = word_similarity_report(&l.model, &pairs, &word_encoder(&l), min_freq)?;
            let sim = published.similarity;
            let output = SimilarityOutput {
                checkpoint: inputs.checkpoint.display().to_string(),
                men: pairs_path.display().to_string(),
                published: match l.model.model_type() {
                    ModelType::PhonGru => sim.phon_gru,
                    ModelType::WordGru => sim.word_gru,
                    ModelType::WordSum => sim.word_sum,
                },
                published_frequent_pairs: sim.frequent_pairs,
                report,
            };
            println!("{}", tables::similarity_table(&output));
            write_report(
                inputs.out.as_deref(),
                &output,
                "probe similarity",
                &min_freq,
                None,
                &[&inputs.checkpoint, &inputs.data, &pairs_path, &phon_path],
                start,
            )
        }
        Probe::Editdist { inputs, men } => {
            let (pairs_path, phon_path) = men_paths(&men)?;
            let l = load_checkpoint_and_data(&inputs.checkpoint, &inputs.data)?;
            let pairs = load_men(&pairs_path, &phon_path)?;
            let report = edit_distance_report(&l.model, &pairs, &word_encoder(&l))?;
            let output = EditDistanceOutput {
                checkpoint: inputs.checkpoint.display().to_string(),
                men: pairs_path.display().to_string(),
                report,
                published: published.edit_distance,
            };
            println!("{}", tables::editdist_table(&output));
            write_report(
                inputs.out.as_deref(),
                &output,
                "probe editdist",
                &(),
                None,
                &[&inputs.checkpoint, &inputs.data, &pairs_path, &phon_path],
                start,
            )
        }
        Probe::Substrings { inputs, split, layers, counting } => {
            let l = load_checkpoint_and_data(&inputs.checkpoint, &inputs.data)?;
            let layers = layers.unwrap_or_else(|| all_layers(&l.model));
            let report = substring_report(&l.model, l.dataset.split(split), &layers, counting)?;
            let output = SubstringOutput {
                checkpoint: inputs.checkpoint.display().to_string(),
                split,
                report,
                published: published.substrings,
            };
            println!("{}", tables::substring_table(&output));
            write_report(
                inputs.out.as_deref(),
                &output,
                "probe substrings",
                &(split, &layers, counting),
                None,
                &[&inputs.checkpoint, &inputs.data],
                start,
            )
        }
    }
}
