use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use opcode_nb::bench::{self, BenchConfig, SyntheticSpec};
use opcode_nb::corpus::{self, GroupingConfig, Ratio, SampleRecord};
use opcode_nb::engine::{self, BundleMeta, ModelBundle, Workload};
use opcode_nb::{metrics, pipeline, Error, ErrorKind, Result};

#[derive(Parser)]
#[command(
    name = "opnb",
    version,
    about = "Group-wise Naive Bayes malware classification over opcode histograms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic corpus.
    Gen(GenArgs),
    /// Stratified train/test split of a corpus.
    Split(SplitArgs),
    /// Train a model bundle.
    Train(TrainArgs),
    /// Classify samples with a bundle.
    Classify(ClassifyArgs),
    /// Time sequential vs parallel classification and write a CSV report.
    Bench(BenchArgs),
    /// Compare predictions against ground truth.
    Score(ScoreArgs),
}

#[derive(Args, Clone, Copy)]
struct GroupingArgs {
    /// Group width in KiB.
    #[arg(long, default_value_t = 5)]
    group_kb: u64,
    /// Size cutoff in KiB; larger files are rejected.
    #[arg(long, default_value_t = 500)]
    max_kb: u64,
    /// Minimum training samples per class for a group to get a model.
    #[arg(long, default_value_t = 6)]
    min_per_class: usize,
}

impl GroupingArgs {
    fn config(&self) -> Result<GroupingConfig> {
        GroupingConfig::new(self.group_kb * 1024, self.max_kb * 1024, self.min_per_class)
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 10)]
    groups: u32,
    #[arg(long, default_value_t = 30)]
    per_class: usize,
    #[arg(long, default_value_t = 256)]
    vocab: usize,
    #[arg(long, default_value_t = 0.8)]
    divergence: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    group_kb: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "2:1")]
    ratio: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[command(flatten)]
    grouping: GroupingArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Recorded in the bundle metadata.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    grouping: GroupingArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    /// Worker lanes for parallel mode [default: hardware threads].
    #[arg(long)]
    lanes: Option<usize>,
    #[arg(long, conflicts_with = "sequential")]
    parallel: bool,
    #[arg(long)]
    sequential: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = bench::DEFAULT_K_VALUES)]
    k: Vec<usize>,
    #[arg(long, default_value_t = bench::DEFAULT_BATCH_MULTIPLE)]
    batch_multiple: usize,
    #[arg(long, value_delimiter = ',', default_values_t = bench::DEFAULT_BATCH_COUNTS)]
    batch_counts: Vec<usize>,
    /// [default: hardware threads]
    #[arg(long)]
    lanes: Option<usize>,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[command(flatten)]
    grouping: GroupingArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    /// Predictions JSONL produced by `classify`.
    #[arg(long, alias = "preds")]
    bundle: PathBuf,
    #[arg(long)]
    truth: PathBuf,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Groups a labeled corpus file, warning about oversize samples.
fn load_grouped(path: &Path, config: &GroupingConfig) -> Result<corpus::GroupedCorpus> {
    let samples = corpus::parse_corpus(open(path)?)?;
    let part = corpus::partition_by_group(samples, config);
    if !part.rejected.is_empty() {
        eprintln!(
            "warning: {} sample(s) at or above {} bytes skipped",
            part.rejected.len(),
            config.max_size_bytes
        );
    }
    Ok(part.corpus)
}

fn gen(args: GenArgs) -> Result<()> {
    let spec = SyntheticSpec {
        group_count: args.groups,
        samples_per_group_per_class: args.per_class,
        vocabulary_size: args.vocab,
        divergence: args.divergence,
        seed: args.seed,
        group_size_bytes: args.group_kb * 1024,
    };
    let samples = bench::generate_synthetic(&spec)?;
    corpus::write_corpus(create(&args.out)?, &samples)?;
    eprintln!("wrote {} samples to {}", samples.len(), args.out.display());
    Ok(())
}

fn split(args: SplitArgs) -> Result<()> {
    let ratio: Ratio = args.ratio.parse()?;
    let grouped = load_grouped(&args.input, &args.grouping.config()?)?;
    let result = corpus::split_train_test(&grouped, ratio, args.seed);
    let (n_train, n_test) = (result.train.len(), result.test.len());
    corpus::write_corpus(create(&args.train)?, &result.train.into_samples())?;
    corpus::write_corpus(create(&args.test)?, &result.test.into_samples())?;
    eprintln!("train {n_train}, test {n_test}");
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    if args.k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".to_string()));
    }
    let grouped = load_grouped(&args.input, &args.grouping.config()?)?;
    let meta = BundleMeta {
        k: args.k,
        alpha: args.alpha,
        seed: args.seed,
        created_at: now_secs(),
    };
    let bundle = pipeline::fit_bundle(&grouped, meta)?;
    bundle.write_json(create(&args.out)?)?;
    eprintln!("trained {} group model(s)", bundle.trained_ids.len());
    Ok(())
}

fn classify(args: ClassifyArgs) -> Result<()> {
    let bundle = ModelBundle::read_json(open(&args.bundle)?)?;
    let samples = corpus::parse_unlabeled(open(&args.input)?)?;
    let lanes = args.lanes.unwrap_or_else(bench::hardware_threads);
    let workload = Workload::new(samples, lanes);
    let run = if args.sequential {
        engine::classify_sequential(&bundle, &workload)?
    } else {
        engine::classify_parallel(&bundle, &workload)?
    };
    engine::write_predictions(create(&args.out)?, &workload.samples, &run.predictions)?;
    let failed = run.predictions.iter().filter(|p| p.is_err()).count();
    eprintln!(
        "classified {} sample(s) in {} ns ({} failed)",
        run.predictions.len(),
        run.elapsed_ns,
        failed
    );
    Ok(())
}

fn run_bench(args: BenchArgs) -> Result<()> {
    let config = BenchConfig {
        k_values: args.k,
        batch_multiple: args.batch_multiple,
        batch_counts: args.batch_counts,
        lanes: args.lanes.unwrap_or_else(bench::hardware_threads),
        repetitions: args.reps,
    };
    config.validate()?;
    let grouping = args.grouping.config()?;
    let train = load_grouped(&args.train, &grouping)?;
    let test: Vec<SampleRecord> = corpus::parse_unlabeled(open(&args.test)?)?;

    let mut bundles = BTreeMap::new();
    for &k in &config.k_values {
        let meta = BundleMeta {
            k,
            alpha: args.alpha,
            seed: 0,
            created_at: now_secs(),
        };
        bundles.insert(k, pipeline::fit_bundle(&train, meta)?);
    }
    eprintln!(
        "benchmarking {} k value(s) x {} batch size(s) on {} lane(s)",
        config.k_values.len(),
        config.batch_counts.len(),
        config.lanes
    );
    let report = bench::run_bench(&bundles, &test, &config)?;
    bench::emit_csv(&report, create(&args.out)?)?;
    Ok(())
}

fn score(args: ScoreArgs) -> Result<()> {
    let preds = engine::read_predictions(open(&args.bundle)?)?;
    let truth = corpus::parse_unlabeled(open(&args.truth)?)?;
    let summary = metrics::score(&preds, &truth);
    let stdout = io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer_pretty(&mut out, &summary)?;
    writeln!(out)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train(a),
        Command::Classify(a) => classify(a),
        Command::Bench(a) => run_bench(a),
        Command::Score(a) => score(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 1,
                ErrorKind::Data => 2,
                ErrorKind::Io => 3,
            })
        }
    }
}
