//! `sparselda` command-line front end.

mod manifest;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sparselda::corpus::{load_uci, parse_uci, Corpus, DocFrequencies, Vocabulary};
use sparselda::eval::{self, EvalConfig, PointEstimate};
use sparselda::trainer::{self, Algorithm, MinibatchRecord, TrainConfig};
use sparselda::{Error, GlobalState};

use manifest::{ConfigRecord, RunManifest, VERSION};

/// Random stream used to split off held-out documents.
const HOLDOUT_STREAM: (u64, u64) = (u64::MAX, 2);
/// Random stream family for held-out scoring; the second index is the document id.
const EVAL_STREAM: u64 = u64::MAX - 1;

#[derive(Parser)]
#[command(name = "sparselda", version, about = "Online LDA with sparse Gibbs local steps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint, metrics, and a run manifest.
    Train(TrainArgs),
    /// Score documents with the left-to-right estimator.
    Eval(EvalArgs),
    /// List top words per topic.
    Topics(TopicsArgs),
    /// Per-topic coherence against a reference corpus.
    Coherence(CoherenceArgs),
    /// Print the default configuration.
    Defaults,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Uci,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Sampled,
    Vb,
}

impl From<Algo> for Algorithm {
    fn from(a: Algo) -> Self {
        match a {
            Algo::Sampled => Algorithm::Sampled,
            Algo::Vb => Algorithm::Vb,
        }
    }
}

#[derive(Args)]
struct CorpusArgs {
    /// UCI docword file.
    #[arg(long)]
    corpus: PathBuf,
    /// Vocabulary file, one word per line.
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long, value_enum, default_value = "uci")]
    format: Format,
    /// Fraction of documents held out from training, chosen with the run seed.
    #[arg(long, default_value_t = 0.0)]
    holdout_fraction: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, required_unless_present = "replay")]
    corpus: Option<PathBuf>,
    #[arg(long, required_unless_present = "replay")]
    vocab: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "uci")]
    format: Format,
    #[arg(long, default_value_t = 0.0)]
    holdout_fraction: f64,
    #[arg(long, default_value_t = TrainConfig::default().topics)]
    k: usize,
    #[arg(long, default_value_t = TrainConfig::default().alpha)]
    alpha: f64,
    #[arg(long, default_value_t = TrainConfig::default().eta)]
    eta: f64,
    #[arg(long, default_value_t = TrainConfig::default().kappa)]
    kappa: f64,
    #[arg(long, default_value_t = TrainConfig::default().tau0)]
    tau0: f64,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = TrainConfig::default().burnin)]
    burnin: usize,
    #[arg(long, default_value_t = TrainConfig::default().samples)]
    samples: usize,
    #[arg(long, default_value_t = TrainConfig::default().minibatches)]
    minibatches: u64,
    #[arg(long, default_value_t = TrainConfig::default().seed)]
    seed: u64,
    #[arg(long, default_value_t = TrainConfig::default().threads)]
    threads: usize,
    #[arg(long, value_enum, default_value = "sampled")]
    algo: Algo,
    /// Final checkpoint path. Intermediate checkpoints get a `.step<t>` suffix.
    #[arg(long, required_unless_present = "replay")]
    checkpoint: Option<PathBuf>,
    /// Write an intermediate checkpoint every this many minibatches (0 = never).
    #[arg(long, default_value_t = TrainConfig::default().checkpoint_every)]
    checkpoint_every: u64,
    /// Per-minibatch metrics CSV.
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    /// Manifest path; defaults to the checkpoint path with `.manifest.json` appended.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Repeat the run described by a manifest. Configuration flags are ignored;
    /// output paths given on the command line take precedence.
    #[arg(long)]
    replay: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: CorpusArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Seed for the held-out split and the estimator's particles.
    #[arg(long, default_value_t = TrainConfig::default().seed)]
    seed: u64,
    #[arg(long, default_value_t = EvalConfig::default().alpha)]
    alpha_eval: f64,
    /// Topic-word smoothing for the point estimate; defaults to the checkpoint's eta.
    #[arg(long)]
    eta_eval: Option<f64>,
    #[arg(long, default_value_t = EvalConfig::default().particles)]
    particles: usize,
    /// Per-document CSV destination (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TopicsArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Vocabulary for printing words instead of ids.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Reference corpus; adds a coherence column.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "uci")]
    format: Format,
    #[arg(long, default_value_t = EvalConfig::default().top_words)]
    top: usize,
    #[arg(long, default_value_t = EvalConfig::default().epsilon)]
    epsilon: f64,
}

#[derive(Args)]
struct CoherenceArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "uci")]
    format: Format,
    #[arg(long, default_value_t = EvalConfig::default().top_words)]
    top: usize,
    #[arg(long, default_value_t = EvalConfig::default().epsilon)]
    epsilon: f64,
}

/// A failure with its exit code: 1 for runtime failures, 2 for bad input
/// or configuration.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

/// Errors raised while reading inputs are usage errors.
fn input(e: Error) -> Failure {
    Failure::usage(e.to_string())
}

/// Configuration errors stay usage errors wherever they surface.
fn runtime(e: Error) -> Failure {
    match e {
        Error::Config(_) | Error::VocabularyMismatch { .. } => Failure::usage(e.to_string()),
        _ => Failure::runtime(e.to_string()),
    }
}

fn write_failure(path: &Path, e: io::Error) -> Failure {
    Failure::runtime(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Topics(args) => cmd_topics(args),
        Command::Coherence(args) => cmd_coherence(args),
        Command::Defaults => {
            print!("{}", defaults_text());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn defaults_text() -> String {
    let t = TrainConfig::default();
    let e = EvalConfig::default();
    let rows: [(&str, String); 20] = [
        ("k", t.topics.to_string()),
        ("alpha", t.alpha.to_string()),
        ("eta", t.eta.to_string()),
        ("kappa", t.kappa.to_string()),
        ("tau0", t.tau0.to_string()),
        ("batch-size", t.batch_size.to_string()),
        ("burnin", t.burnin.to_string()),
        ("samples", t.samples.to_string()),
        ("minibatches", t.minibatches.to_string()),
        ("seed", t.seed.to_string()),
        ("threads", t.threads.to_string()),
        ("checkpoint-every", t.checkpoint_every.to_string()),
        ("algo", t.algorithm.to_string()),
        ("seeds-per-word", t.seeds_per_word.to_string()),
        ("seed-mass", t.seed_mass.to_string()),
        ("reset-below", t.reset.reset_below.to_string()),
        ("prune-threshold", t.reset.prune_threshold.to_string()),
        ("alpha-eval", e.alpha.to_string()),
        ("particles", e.particles.to_string()),
        ("top", e.top_words.to_string()),
    ];
    let mut out = String::new();
    for (name, value) in rows {
        out.push_str(&format!("{name} = {value}\n"));
    }
    out.push_str(&format!("epsilon = {}\n", e.epsilon));
    out
}

/// Loads the corpus and applies the seeded held-out split. Returns
/// `(training part, held-out part)`; with fraction 0 the held-out part is `None`.
fn load_split(corpus: &Path, vocab: &Path, fraction: f64, seed: u64) -> Result<(Corpus, Option<Corpus>), Failure> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Failure::usage(format!("holdout fraction {fraction} not in [0, 1)")));
    }
    let full = load_uci(corpus, vocab).map_err(input)?;
    if fraction == 0.0 {
        return Ok((full, None));
    }
    let mut rng = trainer::stream_rng(seed, HOLDOUT_STREAM.0, HOLDOUT_STREAM.1);
    let (train, held) = full.split_holdout(fraction, &mut rng).map_err(input)?;
    Ok((train, Some(held)))
}

fn step_path(checkpoint: &Path, step: u64) -> PathBuf {
    let mut name = checkpoint.as_os_str().to_owned();
    name.push(format!(".step{step}"));
    PathBuf::from(name)
}

fn default_manifest_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn cmd_train(args: TrainArgs) -> Result<(), Failure> {
    let mut m = match &args.replay {
        Some(path) => RunManifest::load(path).map_err(Failure::usage)?,
        None => {
            let config = TrainConfig {
                topics: args.k,
                alpha: args.alpha,
                eta: args.eta,
                kappa: args.kappa,
                tau0: args.tau0,
                batch_size: args.batch_size,
                burnin: args.burnin,
                samples: args.samples,
                minibatches: args.minibatches,
                seed: args.seed,
                checkpoint_every: args.checkpoint_every,
                threads: args.threads,
                algorithm: args.algo.into(),
                ..TrainConfig::default()
            };
            RunManifest {
                version: VERSION.to_string(),
                seed: args.seed,
                corpus: args.corpus.clone().expect("required without --replay"),
                vocab: args.vocab.clone().expect("required without --replay"),
                format: "uci".to_string(),
                holdout_fraction: args.holdout_fraction,
                checkpoint: args.checkpoint.clone().expect("required without --replay"),
                metrics: args.metrics_out.clone(),
                config: ConfigRecord::from(&config),
            }
        }
    };
    if let Some(path) = &args.checkpoint {
        m.checkpoint = path.clone();
    }
    if args.metrics_out.is_some() {
        m.metrics = args.metrics_out.clone();
    }
    m.version = VERSION.to_string();
    let config = m.config.to_config().map_err(input)?;
    config.validate().map_err(input)?;
    let (corpus, _) = load_split(&m.corpus, &m.vocab, m.holdout_fraction, m.seed)?;

    let manifest_path = args.manifest.clone().unwrap_or_else(|| default_manifest_path(&m.checkpoint));
    m.save(&manifest_path).map_err(Failure::runtime)?;

    let mut metrics = match &m.metrics {
        Some(path) => {
            let file = File::create(path).map_err(|e| write_failure(path, e))?;
            let mut w = BufWriter::new(file);
            writeln!(w, "{}", MinibatchRecord::CSV_HEADER).map_err(|e| write_failure(path, e))?;
            Some((path.clone(), w))
        }
        None => None,
    };
    let checkpoint = m.checkpoint.clone();
    let every = config.checkpoint_every;
    let (state, run) = trainer::train_with(&corpus, &config, |record, state| {
        if let Some((path, w)) = metrics.as_mut() {
            writeln!(w, "{}", record.csv_row()).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
        }
        if every > 0 && record.minibatch % every == 0 && record.minibatch < config.minibatches {
            state.save(step_path(&checkpoint, record.minibatch))?;
        }
        Ok(())
    })
    .map_err(runtime)?;
    if let Some((path, mut w)) = metrics {
        w.flush().map_err(|e| write_failure(&path, e))?;
    }
    state.save(&checkpoint).map_err(runtime)?;
    eprintln!(
        "trained {} minibatches on {} documents; mean touched topics per token {:.2}; checkpoint {}",
        run.records.len(),
        corpus.num_docs(),
        run.mean_touched(0..run.records.len()),
        checkpoint.display()
    );
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<GlobalState, Failure> {
    GlobalState::load(path).map_err(input)
}

fn check_vocab(state: &GlobalState, corpus: &Corpus) -> Result<(), Failure> {
    if state.vocab_size() != corpus.vocab_size() {
        return Err(runtime(Error::VocabularyMismatch {
            model: state.vocab_size(),
            corpus: corpus.vocab_size(),
        }));
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), Failure> {
    let state = load_checkpoint(&args.checkpoint)?;
    let d = &args.data;
    let (all, held) = load_split(&d.corpus, &d.vocab, d.holdout_fraction, args.seed)?;
    let docs = held.unwrap_or(all);
    check_vocab(&state, &docs)?;
    let config = EvalConfig {
        alpha: args.alpha_eval,
        particles: args.particles,
        ..EvalConfig::default()
    };
    config.validate().map_err(input)?;
    let estimate = match args.eta_eval {
        Some(eta) if !(eta > 0.0) => return Err(Failure::usage(format!("eta-eval {eta} must be positive"))),
        Some(eta) => PointEstimate::with_eta(&state, eta),
        None => PointEstimate::from_state(&state),
    };

    let mut out: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(|e| write_failure(path, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let target = args.out.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    let fail = |e: io::Error| write_failure(&target, e);
    writeln!(out, "doc_id,n_tokens,avg_log_prob").map_err(fail)?;
    let (mut sum, mut count) = (0.0, 0usize);
    for doc in docs.documents().iter().filter(|doc| !doc.is_empty()) {
        let mut rng = trainer::stream_rng(args.seed, EVAL_STREAM, doc.id as u64);
        let score = eval::left_to_right(doc, &estimate, &config, &mut rng).map_err(runtime)?;
        writeln!(out, "{},{},{score}", doc.id + 1, doc.len()).map_err(fail)?;
        sum += score;
        count += 1;
    }
    out.flush().map_err(fail)?;
    if count == 0 {
        return Err(Failure::usage("no non-empty documents to score"));
    }
    eprintln!("mean avg_log_prob over {count} documents: {}", sum / count as f64);
    Ok(())
}

/// Loads a reference corpus for coherence; without a vocabulary file, word ids
/// stand in for words.
fn reference_corpus(corpus: &Path, vocab: Option<&Path>, state: &GlobalState) -> Result<Corpus, Failure> {
    let corpus = match vocab {
        Some(v) => load_uci(corpus, v).map_err(input)?,
        None => {
            let file = File::open(corpus).map_err(|e| input(Error::Io {
                path: corpus.to_path_buf(),
                source: e,
            }))?;
            let vocabulary = Arc::new(Vocabulary::numbered(state.vocab_size()));
            parse_uci(io::BufReader::new(file), vocabulary).map_err(input)?
        }
    };
    check_vocab(state, &corpus)?;
    Ok(corpus)
}

fn topic_coherences(estimate: &PointEstimate, corpus: &Corpus, config: &EvalConfig) -> Result<Vec<f64>, Failure> {
    let freqs = DocFrequencies::new(corpus, eval::top_word_set(estimate, config.top_words));
    (0..estimate.num_topics())
        .map(|k| eval::coherence(k, estimate, &freqs, config).map_err(runtime))
        .collect()
}

fn cmd_topics(args: TopicsArgs) -> Result<(), Failure> {
    let state = load_checkpoint(&args.checkpoint)?;
    let vocab = match &args.vocab {
        Some(path) => Some(Vocabulary::load(path).map_err(input)?),
        None => None,
    };
    if let Some(v) = &vocab {
        if v.len() != state.vocab_size() {
            return Err(runtime(Error::VocabularyMismatch {
                model: state.vocab_size(),
                corpus: v.len(),
            }));
        }
    }
    let config = EvalConfig {
        top_words: args.top,
        epsilon: args.epsilon,
        ..EvalConfig::default()
    };
    config.validate().map_err(input)?;
    let estimate = PointEstimate::from_state(&state);
    let coherence = match &args.corpus {
        Some(path) => {
            let corpus = reference_corpus(path, args.vocab.as_deref(), &state)?;
            Some(topic_coherences(&estimate, &corpus, &config)?)
        }
        None => None,
    };

    let mut out = BufWriter::new(io::stdout().lock());
    let fail = |e: io::Error| Failure::runtime(format!("<stdout>: {e}"));
    let header = if coherence.is_some() {
        "topic,coherence,entropy,top_words"
    } else {
        "topic,entropy,top_words"
    };
    writeln!(out, "{header}").map_err(fail)?;
    for k in 0..estimate.num_topics() {
        let words: Vec<String> = eval::top_words(&estimate, k, args.top)
            .into_iter()
            .map(|w| match &vocab {
                Some(v) => v.word(w).unwrap_or("?").to_string(),
                None => w.to_string(),
            })
            .collect();
        let entropy = eval::topic_entropy(&estimate, k);
        match &coherence {
            Some(c) => writeln!(out, "{k},{},{entropy},{}", c[k], words.join("|")),
            None => writeln!(out, "{k},{entropy},{}", words.join("|")),
        }
        .map_err(fail)?;
    }
    out.flush().map_err(fail)
}

fn cmd_coherence(args: CoherenceArgs) -> Result<(), Failure> {
    let state = load_checkpoint(&args.checkpoint)?;
    let config = EvalConfig {
        top_words: args.top,
        epsilon: args.epsilon,
        ..EvalConfig::default()
    };
    config.validate().map_err(input)?;
    let corpus = reference_corpus(&args.corpus, args.vocab.as_deref(), &state)?;
    let estimate = PointEstimate::from_state(&state);
    let scores = topic_coherences(&estimate, &corpus, &config)?;

    let mut out = BufWriter::new(io::stdout().lock());
    let fail = |e: io::Error| Failure::runtime(format!("<stdout>: {e}"));
    writeln!(out, "topic,coherence").map_err(fail)?;
    for (k, c) in scores.iter().enumerate() {
        writeln!(out, "{k},{c}").map_err(fail)?;
    }
    out.flush().map_err(fail)?;
    eprintln!("mean coherence: {}", scores.iter().sum::<f64>() / scores.len() as f64);
    Ok(())
}
