//! Commands behind the `codemix` binary.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use codemix::corpus::{build_vocabulary, corpus_stats, read_corpus, Document, LanguageLexicon};
use codemix::embeddings::{
    coverage_check, load_embeddings, parse_groups, save_embeddings, train_embeddings_with_losses, SimilarityReport,
};
use codemix::evaluation::{
    cross_validate, render_report, sha256_hex, train_model, ArchitectureResult, Aggregation, CVReport, CvOptions,
    NeuralLearner, ReportFormat, RunMetadata,
};
use codemix::models::{Architecture, ClassifierModel};
use codemix::tensor::BCE_EPSILON;

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] codemix::Error),
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 2 for bad input or usage, 1 for internal failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if !e.is_user_error() => 1,
            _ => 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "codemix", version, about = "Hate-speech detection experiments on code-mixed tweets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print dataset statistics for a corpus.
    Stats(StatsArgs),
    /// Train skip-gram embeddings on a corpus.
    TrainEmbeddings(TrainEmbeddingsArgs),
    /// Compare a reference word with groups of words in embedding space.
    Probe(ProbeArgs),
    /// k-fold cross-validation of one or more architectures.
    CrossValidate(CrossValidateArgs),
    /// Train one model on the whole corpus and save a checkpoint.
    Train(TrainArgs),
    /// Score a corpus with a saved checkpoint.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Romanized Hindi word list, one word per line.
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Directory for corpus_stats.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainEmbeddingsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for embeddings.txt and the effective config.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    /// Domain-specific embeddings.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Optional general-purpose embeddings for the second column.
    #[arg(long)]
    pub embeddings_general: Option<PathBuf>,
    #[arg(long)]
    pub reference: String,
    /// Group word lists, one `name: word word …` per line.
    #[arg(long)]
    pub groups: PathBuf,
    /// Optional word list to check for coverage in the domain embeddings.
    #[arg(long)]
    pub words: Option<PathBuf>,
    /// Directory for similarity.csv (and coverage.csv).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Keep the embedding table fixed during training.
    #[arg(long)]
    pub freeze_embeddings: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CrossValidateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Architectures to evaluate, repeated or comma-separated; all three by default.
    #[arg(long, value_delimiter = ',', value_parser = parse_architecture)]
    pub arch: Vec<Architecture>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Folds trained in parallel.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// How the summary row aggregates folds: mean or pooled.
    #[arg(long)]
    pub aggregation: Option<Aggregation>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_parser = parse_architecture)]
    pub arch: Architecture,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Directory for predictions.csv; printed to stdout otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_architecture(s: &str) -> std::result::Result<Architecture, String> {
    s.parse().map_err(|e: codemix::Error| e.to_string())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Stats(a) => cmd_stats(&a),
        Command::TrainEmbeddings(a) => cmd_train_embeddings(&a),
        Command::Probe(a) => cmd_probe(&a),
        Command::CrossValidate(a) => cmd_cross_validate(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Predict(a) => cmd_predict(&a),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| codemix::Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| codemix::Error::io(path, e).into())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| codemix::Error::io(path, e).into())
}

pub fn cmd_stats(args: &StatsArgs) -> Result<()> {
    let docs = read_corpus(&args.corpus)?;
    let lexicon = LanguageLexicon::load(&args.lexicon)?;
    let vocab = build_vocabulary(&docs, 1)?;
    let stats = corpus_stats(&docs, &vocab, &lexicon)?;
    let rows = stats.rows();
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut table = String::new();
    let mut csv = String::from("statistic,value\n");
    for (name, value) in &rows {
        let _ = writeln!(table, "{name:<width$}  {value}");
        let _ = writeln!(csv, "{name},{value}");
    }
    print!("{table}");
    if let Some(out) = &args.out {
        write_file(&out.join("corpus_stats.csv"), &csv)?;
    }
    Ok(())
}

pub fn cmd_train_embeddings(args: &TrainEmbeddingsArgs) -> Result<()> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    let cfg = cfg.resolved();
    let docs = read_corpus(&args.corpus)?;
    let (emb, losses) = train_embeddings_with_losses(&docs, &cfg.skipgram)?;
    let path = args.out.join("embeddings.txt");
    fs::create_dir_all(&args.out).map_err(|e| codemix::Error::io(&args.out, e))?;
    save_embeddings(&emb, &path)?;
    write_file(&args.out.join("effective_config.toml"), &cfg.to_toml())?;
    println!(
        "{} vectors of dimension {} written to {} (final epoch loss {:.6})",
        emb.len(),
        emb.dim(),
        path.display(),
        losses.last().copied().unwrap_or(0.0)
    );
    Ok(())
}

pub fn cmd_probe(args: &ProbeArgs) -> Result<()> {
    let domain = load_embeddings(&args.embeddings)?;
    let general = args.embeddings_general.as_ref().map(load_embeddings).transpose()?;
    let groups_text = fs::read_to_string(&args.groups).map_err(|e| codemix::Error::io(&args.groups, e))?;
    let groups = parse_groups(&groups_text, &args.groups)?;
    let reference = args.reference.to_lowercase();
    let report = SimilarityReport::build(&reference, &groups, &domain, general.as_ref())?;
    let csv = report.to_csv();
    print!("{csv}");
    if let Some(out) = &args.out {
        write_file(&out.join("similarity.csv"), &csv)?;
    }
    if let Some(words_path) = &args.words {
        let text = fs::read_to_string(words_path).map_err(|e| codemix::Error::io(words_path, e))?;
        let words: Vec<String> = text.split_whitespace().map(str::to_lowercase).collect();
        let (present, missing) = coverage_check(&words, &domain);
        eprintln!("coverage: {} of {} words present", present.len(), words.len());
        if !missing.is_empty() {
            eprintln!("missing: {}", missing.join(" "));
        }
        if let Some(out) = &args.out {
            let mut coverage = String::from("word,present\n");
            for w in &words {
                let _ = writeln!(coverage, "{w},{}", present.contains(w));
            }
            write_file(&out.join("coverage.csv"), &coverage)?;
        }
    }
    Ok(())
}

/// Loads config, corpus and embeddings and applies the shared model flags.
fn model_inputs(args: &ModelArgs) -> Result<(RunConfig, Vec<Document>, Vec<u8>, codemix::embeddings::EmbeddingMatrix)> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if let Some(max_len) = args.max_len {
        cfg.model.max_len = max_len;
    }
    if args.freeze_embeddings {
        cfg.model.embeddings_trainable = false;
    }
    let bytes = read_bytes(&args.corpus)?;
    let docs = read_corpus(&args.corpus)?;
    let emb = load_embeddings(&args.embeddings)?;
    if cfg.model.embedding_dim.is_none() {
        cfg.model.embedding_dim = Some(emb.dim());
    }
    Ok((cfg, docs, bytes, emb))
}

pub fn cmd_cross_validate(args: &CrossValidateArgs) -> Result<()> {
    let (mut cfg, docs, corpus_bytes, emb) = model_inputs(&args.model)?;
    if args.k.is_some() {
        cfg.k = args.k;
    }
    if args.jobs.is_some() {
        cfg.jobs = args.jobs;
    }
    if let Some(a) = args.aggregation {
        cfg.evaluation.aggregation = a;
    }
    let cfg = cfg.resolved();
    let architectures = if args.arch.is_empty() {
        Architecture::ALL.to_vec()
    } else {
        args.arch.clone()
    };
    let k = cfg.k.expect("resolved");
    let jobs = cfg.jobs.expect("resolved");
    if jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let mut opts = CvOptions::new(k, cfg.seed()).with_jobs(jobs);
    opts.threshold = cfg.evaluation.threshold;

    let specs = architectures
        .iter()
        .map(|&a| cfg.model_spec(a, emb.dim()))
        .collect::<Result<Vec<_>>>()?;
    let mut results: Vec<ArchitectureResult> = Vec::new();
    for spec in &specs {
        let learner = NeuralLearner {
            spec: spec.clone(),
            embeddings: &emb,
        };
        results.push(cross_validate(&learner, &docs, &opts)?);
    }
    let aggregation = cfg.evaluation.aggregation;
    let report = CVReport {
        results,
        metadata: RunMetadata {
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: cfg.seed(),
            fold_seeds: (0..k).map(|f| opts.fold_seed(f)).collect(),
            k,
            stratified: true,
            threshold: opts.threshold,
            aggregation,
            bce_epsilon: BCE_EPSILON,
            corpus_sha256: sha256_hex(&corpus_bytes),
            num_documents: docs.len(),
            specs,
        },
    };
    let table = render_report(&report.results, aggregation, ReportFormat::Table);
    let out = &args.model.out;
    write_file(&out.join("cv_report.csv"), &render_report(&report.results, aggregation, ReportFormat::Csv))?;
    write_file(&out.join("cv_report.txt"), &table)?;
    let mut metadata = serde_json::to_string_pretty(&report.metadata).expect("metadata serializes");
    metadata.push('\n');
    write_file(&out.join("cv_metadata.json"), &metadata)?;
    write_file(&out.join("predictions.csv"), &cv_predictions_csv(&report.results))?;
    write_file(&out.join("effective_config.toml"), &cfg.to_toml())?;
    print!("{table}");
    Ok(())
}

fn cv_predictions_csv(results: &[ArchitectureResult]) -> String {
    let mut csv = String::from("architecture,id,fold,label,probability\n");
    for r in results {
        for p in &r.predictions {
            let _ = writeln!(csv, "{},{},{},{},{}", r.architecture, p.id, p.fold + 1, p.label, p.probability);
        }
    }
    csv
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let (cfg, docs, _, emb) = model_inputs(&args.model)?;
    let cfg = cfg.resolved();
    let spec = cfg.model_spec(args.arch, emb.dim())?;
    let trained = train_model(&spec, &docs, &emb, cfg.seed())?;
    let out = &args.model.out;
    fs::create_dir_all(out).map_err(|e| codemix::Error::io(out, e))?;
    trained.model.save(out.join("model.ckpt"))?;
    let mut history = String::from("epoch,loss\n");
    for (i, loss) in trained.epoch_losses.iter().enumerate() {
        let _ = writeln!(history, "{},{loss}", i + 1);
    }
    write_file(&out.join("training_history.csv"), &history)?;
    write_file(&out.join("effective_config.toml"), &cfg.to_toml())?;
    println!("{} checkpoint written to {}", spec.architecture.label(), out.join("model.ckpt").display());
    Ok(())
}

pub fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let model = ClassifierModel::load(&args.model)?;
    let docs = read_corpus(&args.corpus)?;
    let probs = model.predict_proba(&docs)?;
    let mut csv = String::from("id,probability,prediction\n");
    for (d, p) in docs.iter().zip(&probs) {
        let _ = writeln!(csv, "{},{p},{}", d.id, u8::from(*p >= codemix::evaluation::DEFAULT_THRESHOLD));
    }
    match &args.out {
        Some(out) => write_file(&out.join("predictions.csv"), &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}
