//! Command-line front end: `train`, `eval`, `gen` and `bench`.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 malformed or
//! mismatched input data, 4 runtime failure. Every output is first written
//! under a `.partial` name and renamed only once the command has succeeded.

use std::ffi::OsString;
use std::fmt::Display;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Cursor, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::corpus::{generate_synthetic, parse_docword, read_vocab_file, Corpus, CorpusError};
use crate::eval::{self, EvalError, EvalReport, FoldInMethod};
use crate::model::{read_model_file, write_model, ModelError};
use crate::scheduler::{write_residual_snapshot, Ranking, SchedulingMode};
use crate::trainer::{self, Algorithm, ConfigError, TraceRecord, TrainerConfig, TRACE_HEADER};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

/// Reserved for a future multi-threaded build; accepted and ignored.
pub const THREADS_ENV: &str = "ABP_LDA_THREADS";

#[derive(Parser, Debug)]
#[command(name = "abp-lda", version, about = "Batch LDA with belief propagation and active scheduling")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a topic model on a docword file
    Train(TrainArgs),
    /// Evaluate a trained model on a test corpus
    Eval(EvalArgs),
    /// Generate a synthetic corpus from the LDA generative process
    Gen(GenArgs),
    /// Time every (algorithm, K) combination on one corpus
    Bench(BenchArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
#[clap(rename_all = "lowercase")]
enum Schedule {
    Doc,
    Word,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
#[clap(rename_all = "lowercase")]
enum RankingArg {
    Partial,
    Insertion,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// UCI docword file
    #[arg(long)]
    docword: PathBuf,

    /// Vocabulary file, one word per line; checked against W
    #[arg(long)]
    vocab: Option<PathBuf>,

    #[arg(long, default_value = "bp")]
    algo: Algorithm,

    #[arg(long)]
    topics: usize,

    /// Document-topic prior (default 2/K)
    #[arg(long)]
    alpha: Option<f64>,

    #[arg(long, default_value_t = 0.01)]
    beta: f64,

    #[arg(long, default_value_t = 500)]
    iters: usize,

    /// Fraction of documents scanned per iteration (abp only, default 0.2)
    #[arg(long)]
    lambda_d: Option<f64>,

    /// Fraction of topics updated per scanned document (abp only, default 0.2)
    #[arg(long)]
    lambda_k: Option<f64>,

    /// Schedule by documents or by vocabulary words (word: abp only)
    #[arg(long, value_enum)]
    schedule: Option<Schedule>,

    /// Ranking strategy for the residual tables (abp only)
    #[arg(long, value_enum)]
    ranking: Option<RankingArg>,

    /// Stop once successive training perplexities differ by less than this; 0 disables
    #[arg(long, default_value_t = 1.0)]
    threshold: f64,

    /// Probe training perplexity every N iterations
    #[arg(long)]
    probe_every: Option<usize>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long)]
    model_out: PathBuf,

    #[arg(long)]
    trace_out: PathBuf,

    /// Final document residuals as `doc_id,residual`, descending
    #[arg(long)]
    residuals_out: Option<PathBuf>,

    /// Run manifest (default: <model-out>.manifest.json)
    #[arg(long)]
    manifest_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,

    /// Test docword file
    #[arg(long)]
    docword: PathBuf,

    /// Share of each test document's tokens used for fold-in
    #[arg(long, default_value_t = 0.8)]
    fold_in: f64,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Algorithm the model was trained with; gs selects Gibbs fold-in
    #[arg(long, default_value = "bp")]
    algo: Algorithm,

    #[arg(long, default_value_t = eval::FOLD_IN_ITERS)]
    fold_in_iters: usize,

    /// Training docword file; when given, train_perplexity is computed on it
    #[arg(long)]
    train_docword: Option<PathBuf>,

    /// Residual snapshot written by `train --residuals-out`, used for the Zipf rows
    #[arg(long)]
    residuals: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    docs: usize,

    #[arg(long)]
    vocab_size: usize,

    #[arg(long)]
    topics: usize,

    #[arg(long)]
    avg_len: usize,

    /// Dirichlet concentration of the true document proportions
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,

    /// Dirichlet concentration of the true topics
    #[arg(long, default_value_t = 0.05)]
    beta: f64,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output directory for docword.txt, vocab.txt, theta.tsv and phi.tsv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    docword: PathBuf,

    /// Comma-separated topic counts
    #[arg(long, value_delimiter = ',', default_value = "100,300,500")]
    topics_list: Vec<usize>,

    /// Comma-separated algorithms
    #[arg(long, value_delimiter = ',', default_value = "bp,abp")]
    algos: Vec<Algorithm>,

    #[arg(long, default_value_t = 500)]
    iters: usize,

    #[arg(long, default_value_t = 0.2)]
    lambda_d: f64,

    #[arg(long, default_value_t = 0.2)]
    lambda_k: f64,

    #[arg(long, default_value_t = 1.0)]
    threshold: f64,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long)]
    out_dir: PathBuf,
}

/// An error annotated with the exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Display) -> Self {
        Self { code: EXIT_USAGE, message: message.to_string() }
    }

    fn data(message: impl Display) -> Self {
        Self { code: EXIT_DATA, message: message.to_string() }
    }

    fn runtime(message: impl Display) -> Self {
        Self { code: EXIT_RUNTIME, message: message.to_string() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) => EXIT_USAGE,
            Error::Parse(_) | Error::Corpus(_) => EXIT_DATA,
            Error::Model(ModelError::DegenerateMessage) => EXIT_RUNTIME,
            Error::Model(_) => EXIT_DATA,
            Error::Eval(EvalError::NonPositiveLikelihood { .. }) => EXIT_RUNTIME,
            Error::Eval(_) => EXIT_DATA,
            Error::Scheduler(_) | Error::Io(_) => EXIT_RUNTIME,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::usage(e)
    }
}

type CmdResult = Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Some(v) = std::env::var_os(THREADS_ENV) {
        eprintln!("warning: {THREADS_ENV}={} ignored; abp-lda runs single-threaded", v.to_string_lossy());
    }
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

/// An output file written under `<path>.partial`; removed unless committed.
struct Staged {
    partial: PathBuf,
    target: PathBuf,
    committed: bool,
}

impl Staged {
    fn new(target: &Path) -> Self {
        let mut partial = target.as_os_str().to_owned();
        partial.push(".partial");
        Self {
            partial: PathBuf::from(partial),
            target: target.to_path_buf(),
            committed: false,
        }
    }

    fn create(&self) -> Result<BufWriter<File>, Failure> {
        File::create(&self.partial)
            .map(BufWriter::new)
            .map_err(|e| Failure::runtime(format!("cannot create {}: {e}", self.partial.display())))
    }

    fn write_with(&self, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> CmdResult {
        let mut out = self.create()?;
        f(&mut out)
            .and_then(|()| out.flush())
            .map_err(|e| Failure::runtime(format!("cannot write {}: {e}", self.partial.display())))
    }

    fn commit(mut self) -> CmdResult {
        fs::rename(&self.partial, &self.target)
            .map_err(|e| Failure::runtime(format!("cannot rename to {}: {e}", self.target.display())))?;
        self.committed = true;
        Ok(())
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_file(&self.partial);
        }
    }
}

fn commit_all(staged: Vec<Staged>) -> CmdResult {
    staged.into_iter().try_for_each(Staged::commit)
}

/// Reads and parses a docword file, returning the corpus and the SHA-256 of
/// the exact bytes parsed.
fn load_docword(path: &Path) -> Result<(Corpus, String), Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))?;
    let digest = hex::encode(Sha256::digest(&bytes));
    let corpus = parse_docword(Cursor::new(bytes)).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    Ok((corpus, digest))
}

fn resolved(path: &Path) -> String {
    fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf()).display().to_string()
}

#[derive(Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    config: TrainerConfig,
    /// Alpha after applying the 2/K default.
    resolved_alpha: f64,
    inputs: ManifestInputs,
    outputs: ManifestOutputs,
    corpus_sha256: String,
    corpus: CorpusSummary,
}

#[derive(Serialize)]
struct ManifestInputs {
    docword: String,
    vocab: Option<String>,
}

#[derive(Serialize)]
struct ManifestOutputs {
    model: String,
    trace: String,
    residuals: Option<String>,
}

#[derive(Serialize)]
struct CorpusSummary {
    num_docs: usize,
    num_words: usize,
    nnz: usize,
    tokens: u64,
}

fn train_config(a: &TrainArgs) -> Result<TrainerConfig, Failure> {
    if a.algo != Algorithm::Abp {
        for (flag, given) in [
            ("--lambda-d", a.lambda_d.is_some()),
            ("--lambda-k", a.lambda_k.is_some()),
            ("--ranking", a.ranking.is_some()),
        ] {
            if given {
                return Err(Failure::usage(format!("{flag} applies to --algo abp only, not {}", a.algo.name())));
            }
        }
    }
    let mut cfg = TrainerConfig::new(a.topics)
        .algorithm(a.algo)
        .beta(a.beta)
        .iters(a.iters)
        .lambdas(a.lambda_d.unwrap_or(0.2), a.lambda_k.unwrap_or(0.2))
        .seed(a.seed)
        .threshold(a.threshold);
    if let Some(alpha) = a.alpha {
        cfg = cfg.alpha(alpha);
    }
    if a.schedule == Some(Schedule::Word) {
        cfg = cfg.scheduling(SchedulingMode::Word);
    }
    if a.ranking == Some(RankingArg::Insertion) {
        cfg = cfg.ranking(Ranking::InsertionSort);
    }
    if let Some(every) = a.probe_every {
        if every == 0 {
            return Err(Failure::usage("--probe-every must be at least 1"));
        }
        cfg = cfg.probe_every(every);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Streams trace rows to `out` from a background thread.
fn spawn_trace_writer(mut out: BufWriter<File>) -> (mpsc::Sender<TraceRecord>, thread::JoinHandle<io::Result<()>>) {
    let (tx, rx) = mpsc::channel::<TraceRecord>();
    let handle = thread::spawn(move || {
        writeln!(out, "{TRACE_HEADER}")?;
        for record in rx {
            writeln!(out, "{}", record.csv_row())?;
        }
        out.flush()
    });
    (tx, handle)
}

fn cmd_train(a: TrainArgs) -> CmdResult {
    let cfg = train_config(&a)?;
    let (corpus, digest) = load_docword(&a.docword)?;
    if let Some(path) = &a.vocab {
        let vocab = read_vocab_file(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        if vocab.len() != corpus.num_words() {
            return Err(Failure::data(format!(
                "vocabulary has {} words but the docword header declares W={}",
                vocab.len(),
                corpus.num_words()
            )));
        }
    }
    if corpus.is_empty() {
        return Err(Failure::data(format!("{}: corpus has no entries", a.docword.display())));
    }

    let model_file = Staged::new(&a.model_out);
    let trace_file = Staged::new(&a.trace_out);
    let (tx, writer) = spawn_trace_writer(trace_file.create()?);
    let outcome = trainer::train(&corpus, &cfg, |r| {
        // a send only fails once the writer has stopped on an i/o error,
        // which surfaces from join() below
        let _ = tx.send(r.clone());
    });
    drop(tx);
    let written = writer.join().map_err(|_| Failure::runtime("trace writer panicked"))?;
    let outcome = outcome?;
    written.map_err(|e| Failure::runtime(format!("cannot write {}: {e}", trace_file.partial.display())))?;

    model_file.write_with(|out| write_model(&outcome.model, out))?;
    let mut staged = vec![model_file, trace_file];
    if let Some(path) = &a.residuals_out {
        let residuals = outcome
            .doc_residuals
            .as_deref()
            .ok_or_else(|| Failure::usage("--residuals-out requires a message-passing algorithm (bp, rbp or abp)"))?;
        let file = Staged::new(path);
        file.write_with(|out| write_residual_snapshot(residuals, out))?;
        staged.push(file);
    }
    commit_all(staged)?;

    let manifest_path = a.manifest_out.clone().unwrap_or_else(|| {
        let mut p = a.model_out.as_os_str().to_owned();
        p.push(".manifest.json");
        PathBuf::from(p)
    });
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        resolved_alpha: cfg.alpha_value(),
        config: cfg,
        inputs: ManifestInputs {
            docword: resolved(&a.docword),
            vocab: a.vocab.as_deref().map(resolved),
        },
        outputs: ManifestOutputs {
            model: resolved(&a.model_out),
            trace: resolved(&a.trace_out),
            residuals: a.residuals_out.as_deref().map(resolved),
        },
        corpus_sha256: digest,
        corpus: CorpusSummary {
            num_docs: corpus.num_docs(),
            num_words: corpus.num_words(),
            nnz: corpus.nnz(),
            tokens: corpus.token_total(),
        },
    };
    let file = Staged::new(&manifest_path);
    file.write_with(|out| {
        serde_json::to_writer_pretty(&mut *out, &manifest).map_err(io::Error::other)?;
        writeln!(out)
    })?;
    file.commit()?;

    eprintln!(
        "{}: {} iterations{}, final training perplexity {}",
        cfg_name(&manifest.config),
        outcome.iterations(),
        if outcome.converged { " (converged)" } else { "" },
        outcome.final_perplexity().map_or("n/a".to_string(), |p| format!("{p:.4}"))
    );
    Ok(())
}

fn cfg_name(cfg: &TrainerConfig) -> String {
    match cfg.algorithm {
        Algorithm::Abp => format!("abp({}, {})", cfg.lambda_d, cfg.lambda_k),
        other => other.name().to_string(),
    }
}

/// Reads a `doc_id,residual` snapshot back into a dense per-document vector.
fn read_residual_snapshot(path: &Path) -> Result<Vec<f64>, Failure> {
    let file = File::open(path).map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))?;
    let mut values: Vec<(usize, f64)> = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        let line = line.trim();
        if n == 0 || line.is_empty() {
            continue;
        }
        let parsed = line
            .split_once(',')
            .and_then(|(d, r)| Some((d.trim().parse::<usize>().ok()?, r.trim().parse::<f64>().ok()?)));
        match parsed {
            Some(v) => values.push(v),
            None => return Err(Failure::data(format!("{}:{}: expected doc_id,residual", path.display(), n + 1))),
        }
    }
    let len = values.iter().map(|&(d, _)| d + 1).max().unwrap_or(0);
    let mut out = vec![0.0; len];
    for (d, r) in values {
        out[d] = r;
    }
    Ok(out)
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    if !(a.fold_in > 0.0 && a.fold_in < 1.0) {
        return Err(Failure::usage(format!("--fold-in must lie strictly between 0 and 1, got {}", a.fold_in)));
    }
    if a.fold_in_iters == 0 {
        return Err(Failure::usage("--fold-in-iters must be at least 1"));
    }
    let model = read_model_file(&a.model).map_err(|e| Failure::data(format!("{}: {e}", a.model.display())))?;
    let (test, _) = load_docword(&a.docword)?;
    eval::check_vocabulary(&model, &test).map_err(Failure::data)?;

    let predictive = eval::predictive_perplexity_with_phi(
        &model.phi,
        model.alpha,
        &test,
        a.fold_in,
        FoldInMethod::for_algorithm(a.algo),
        a.fold_in_iters,
        a.seed,
    )?;

    let train_perplexity = match &a.train_docword {
        Some(path) => {
            let (train, _) = load_docword(path)?;
            eval::check_vocabulary(&model, &train).map_err(Failure::data)?;
            if train.num_docs() != model.num_docs() {
                return Err(Failure::data(format!(
                    "model holds {} documents but {} has {}",
                    model.num_docs(),
                    path.display(),
                    train.num_docs()
                )));
            }
            eval::training_perplexity(&train, &model.theta, &model.phi).map_err(Error::from)?
        }
        None => predictive.held_in_perplexity,
    };

    let residuals = match &a.residuals {
        Some(path) => read_residual_snapshot(path)?,
        None => predictive.fold_in.doc_residuals.clone(),
    };
    let zipf = match eval::zipf_report(&residuals) {
        Ok(z) => Some(z),
        Err(EvalError::InsufficientData { positive }) => {
            eprintln!("warning: only {positive} positive residuals; Zipf rows reported as NaN");
            None
        }
        Err(e) => return Err(Error::from(e).into()),
    };

    let report = EvalReport {
        train_perplexity,
        predictive_perplexity: predictive.perplexity,
        zipf,
    };
    let stdout = io::stdout();
    report
        .write_csv(stdout.lock())
        .map_err(|e| Failure::runtime(format!("cannot write report: {e}")))
}

fn write_matrix<W: Write>(out: &mut W, rows: impl Iterator<Item = impl AsRef<[f64]>>) -> io::Result<()> {
    for row in rows {
        let mut first = true;
        for v in row.as_ref() {
            if !first {
                out.write_all(b"\t")?;
            }
            write!(out, "{v:.16e}")?;
            first = false;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn cmd_gen(a: GenArgs) -> CmdResult {
    let synth = generate_synthetic(a.docs, a.vocab_size, a.topics, a.avg_len, a.alpha, a.beta, a.seed).map_err(
        |e| match e {
            CorpusError::InvalidParameter(_) => Failure::usage(e),
            other => Failure::runtime(other),
        },
    )?;
    fs::create_dir_all(&a.out).map_err(|e| Failure::runtime(format!("cannot create {}: {e}", a.out.display())))?;

    let docword = Staged::new(&a.out.join("docword.txt"));
    docword.write_with(|out| synth.corpus.write_docword(out))?;
    let vocab = Staged::new(&a.out.join("vocab.txt"));
    vocab.write_with(|out| (0..a.vocab_size).try_for_each(|w| writeln!(out, "w{w}")))?;
    let theta = Staged::new(&a.out.join("theta.tsv"));
    theta.write_with(|out| write_matrix(out, synth.theta.iter_rows()))?;
    let phi = Staged::new(&a.out.join("phi.tsv"));
    phi.write_with(|out| write_matrix(out, synth.phi.iter_rows()))?;
    commit_all(vec![docword, vocab, theta, phi])
}

/// Summary row for one (algorithm, K) cell.
struct BenchRow {
    algo: Algorithm,
    topics: usize,
    avg_iter_seconds: f64,
    final_perplexity: Option<f64>,
    iters_to_converge: Option<usize>,
}

fn cmd_bench(a: BenchArgs) -> CmdResult {
    if a.topics_list.is_empty() || a.algos.is_empty() {
        return Err(Failure::usage("--topics-list and --algos must be non-empty"));
    }
    let mut configs = Vec::new();
    for &algo in &a.algos {
        for &k in &a.topics_list {
            let cfg = TrainerConfig::new(k)
                .algorithm(algo)
                .iters(a.iters)
                .lambdas(a.lambda_d, a.lambda_k)
                .seed(a.seed)
                .threshold(a.threshold);
            cfg.validate()?;
            configs.push(cfg);
        }
    }
    let (corpus, _) = load_docword(&a.docword)?;
    if corpus.is_empty() {
        return Err(Failure::data(format!("{}: corpus has no entries", a.docword.display())));
    }
    fs::create_dir_all(&a.out_dir).map_err(|e| Failure::runtime(format!("cannot create {}: {e}", a.out_dir.display())))?;

    let mut staged = Vec::new();
    let mut rows = Vec::new();
    for cfg in &configs {
        let outcome = trainer::train(&corpus, cfg, |_| {})?;
        let trace = Staged::new(&a.out_dir.join(format!("trace_{}_k{}.csv", cfg.algorithm.name(), cfg.num_topics)));
        trace.write_with(|out| trainer::write_trace_csv(&outcome.trace, out))?;
        staged.push(trace);
        let seconds: f64 = outcome.trace.iter().map(|r| r.wall_seconds).sum();
        let row = BenchRow {
            algo: cfg.algorithm,
            topics: cfg.num_topics,
            avg_iter_seconds: seconds / outcome.iterations() as f64,
            final_perplexity: outcome.final_perplexity(),
            iters_to_converge: outcome.converged.then(|| outcome.iterations()),
        };
        eprintln!(
            "{} K={}: {:.6} s/iter over {} iterations",
            cfg_name(cfg),
            row.topics,
            row.avg_iter_seconds,
            outcome.iterations()
        );
        rows.push(row);
    }

    let summary = Staged::new(&a.out_dir.join("summary.csv"));
    summary.write_with(|out| {
        writeln!(out, "algo,K,avg_iter_seconds,final_train_perplexity,iters_to_converge")?;
        for r in &rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.algo.name(),
                r.topics,
                r.avg_iter_seconds,
                r.final_perplexity.map(|p| p.to_string()).unwrap_or_default(),
                r.iters_to_converge.map(|n| n.to_string()).unwrap_or_default()
            )?;
        }
        Ok(())
    })?;
    staged.push(summary);
    commit_all(staged)
}
