//! The `rafm` command-line interface.
//!
//! Exit codes: 0 success, 1 input or configuration error, 2 numeric
//! failure, 3 property-suite failure.

use std::ffi::OsString;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_ranks, parse_split, sha256_hex, InputDigest, RunConfig, RunManifest};
use crate::data::{assign_levels, occurrence_histogram, parse_libsvm, split, to_libsvm, Dataset, IndexBase};
use crate::error::RafmError;
use crate::eval::predict;
use crate::instrument::{run_scenario, ComplexityScenario, Growth, ScenarioReport};
use crate::model::Task;
use crate::snapshot;
use crate::synth::{generate, PlantedConfig};
use crate::train::{metrics_csv, score_dataset, train, EvalReport};
use crate::verify::{run_all, VerifyOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_PROPERTY: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "rafm", version, about = "Rank-aware factorization machines")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default)]
pub struct GlobalArgs {
    /// Flat key=value config file; flags given here take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Whether feature ids in libsvm files start at 0 or 1.
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub index_base: Option<u8>,
    #[arg(long, global = true, value_parser = ["reg", "clf"])]
    pub task: Option<String>,
    /// Split fractions in train,valid,test order, e.g. 0.8,0.1,0.1.
    #[arg(long, global = true)]
    pub split: Option<String>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Occurrence histogram and summary of a libsvm file.
    Stats { data: PathBuf },
    /// Train a model and write model.bin, manifest.json and metrics.csv.
    Train {
        data: PathBuf,
        /// Explicit validation file; disables splitting.
        #[arg(long)]
        valid: Option<PathBuf>,
        /// Explicit test file, used together with --valid.
        #[arg(long)]
        test: Option<PathBuf>,
        /// Rank ladder, e.g. 4,32.
        #[arg(long)]
        ranks: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Loss (and AUC for classification) of a saved model on a data file.
    Evaluate { model: PathBuf, data: PathBuf },
    /// Per-instance predictions: probabilities for clf, scores for reg.
    Predict {
        model: PathBuf,
        data: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Operation and parameter counts for a ladder regime against a plain FM.
    Complexity {
        #[arg(long, default_value = "exp")]
        rank_growth: Growth,
        #[arg(long, default_value = "exp")]
        feature_decay: Growth,
        #[arg(short = 'm', long, default_value_t = 4)]
        levels: usize,
        #[arg(short = 'D', long, default_value_t = 64)]
        max_rank: usize,
        #[arg(short = 'F', long, default_value_t = 1024)]
        features: usize,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        /// Probability that a feature is nonzero in a trial instance.
        #[arg(long, default_value_t = 1.0)]
        density: f64,
    },
    /// Randomized property suites; exits 3 if any property fails.
    Verify {
        #[arg(long, default_value_t = 1_000)]
        oracle_cases: usize,
        #[arg(long, default_value_t = 200)]
        gradient_cases: usize,
        #[arg(long, default_value_t = 100_000)]
        triangle_samples: usize,
        /// Deliberately corrupt the evaluation path (harness self-test).
        #[arg(long)]
        inject_fault: bool,
    },
    /// Write a synthetic heavy-tailed libsvm data set.
    Synth {
        output: PathBuf,
        #[arg(long, default_value_t = 2_000)]
        features: usize,
        #[arg(long, default_value_t = 50_000)]
        instances: usize,
    },
}

/// An error tagged with the pipeline stage that raised it.
#[derive(Debug)]
pub struct CliError {
    pub stage: &'static str,
    pub source: RafmError,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self.source {
            RafmError::Numeric(_) => EXIT_NUMERIC,
            _ => EXIT_INPUT,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.source)
    }
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T, E: Into<RafmError>> Stage<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError { stage, source: e.into() })
    }
}

type CliResult<T> = Result<T, CliError>;

/// File config first, then flag overrides.
pub fn resolve_config(global: &GlobalArgs) -> CliResult<RunConfig> {
    let mut cfg = match &global.config {
        Some(path) => RunConfig::from_file(path).stage("config")?,
        None => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(b) = global.index_base {
        cfg.index_base = IndexBase::from_digit(b).stage("config")?;
    }
    if let Some(task) = &global.task {
        cfg.task = task.parse().stage("config")?;
    }
    if let Some(s) = &global.split {
        cfg.split = parse_split(s).stage("config")?;
    }
    if let Some(dir) = &global.out_dir {
        cfg.out_dir = dir.clone();
    }
    Ok(cfg)
}

fn load_data(path: &Path, base: IndexBase) -> CliResult<Dataset> {
    let file = File::open(path)
        .map_err(|e| RafmError::input(format!("cannot open {}: {e}", path.display())))
        .stage("read")?;
    parse_libsvm(BufReader::new(file), base).map_err(|e| CliError {
        stage: "parse",
        source: match e {
            RafmError::Parse { line, msg } => RafmError::Parse { line, msg: format!("{}: {msg}", path.display()) },
            other => other,
        },
    })
}

fn write_out(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).stage("write")?;
    }
    fs::write(path, text).stage("write")
}

/// Writes `text` to `out_dir/name` when an output directory was given on
/// the command line, otherwise to stdout.
fn emit(global: &GlobalArgs, name: &str, text: &str) -> CliResult<()> {
    match &global.out_dir {
        Some(dir) => write_out(&dir.join(name), text),
        None => match io::stdout().write_all(text.as_bytes()) {
            // a closed reader such as `head` is not an error
            Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
            other => other.stage("write"),
        },
    }
}

/// Two-column `metric,value` report.
pub fn evaluation_csv(report: &EvalReport) -> String {
    let mut out = format!("metric,value\nloss,{}\n", report.loss);
    if let Some(auc) = report.auc {
        out.push_str(&format!("auc,{auc}\n"));
    }
    out
}

fn cmd_stats(global: &GlobalArgs, data: &Path) -> CliResult<()> {
    let cfg = resolve_config(global)?;
    let dataset = load_data(data, cfg.index_base)?;
    let hist = occurrence_histogram(&dataset);
    emit(global, "histogram.csv", &hist.to_csv())?;
    eprintln!(
        "features={} instances={} mean_nonzeros={}",
        dataset.feature_count(),
        dataset.len(),
        dataset.mean_nonzeros()
    );
    Ok(())
}

fn cmd_train(
    global: &GlobalArgs,
    data: &Path,
    valid: Option<&Path>,
    test: Option<&Path>,
    ranks: Option<&str>,
    epochs: Option<usize>,
) -> CliResult<()> {
    let mut cfg = resolve_config(global)?;
    if let Some(r) = ranks {
        cfg.ranks = parse_ranks(r).stage("config")?.ranks().to_vec();
    }
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    if test.is_some() && valid.is_none() {
        return Err(RafmError::input("--test requires --valid")).stage("config");
    }
    let train_cfg = cfg.train_config().stage("config")?;
    let ladder = cfg.ladder().stage("config")?;

    let mut inputs = Vec::new();
    if let Some(c) = &global.config {
        inputs.push(InputDigest::of_file(c).stage("read")?);
    }
    for p in [Some(data), valid, test].into_iter().flatten() {
        inputs.push(InputDigest::of_file(p).stage("read")?);
    }

    let full = load_data(data, cfg.index_base)?;
    let (train_set, valid_set, test_set) = match valid {
        None => {
            let s = split(&full, cfg.split, cfg.seed).stage("split")?;
            (s.train, s.valid, s.test)
        }
        Some(vp) => {
            let v = load_data(vp, cfg.index_base)?;
            let t = match test {
                Some(tp) => load_data(tp, cfg.index_base)?,
                None => Dataset::new(vec![], 0).stage("parse")?,
            };
            let width = full.feature_count().max(v.feature_count()).max(t.feature_count());
            (
                full.widen(width).stage("split")?,
                v.widen(width).stage("split")?,
                t.widen(width).stage("split")?,
            )
        }
    };
    if train_set.is_empty() {
        return Err(RafmError::input("training split is empty")).stage("split");
    }

    let assignment = assign_levels(train_set.occurrence(), &ladder);
    let valid_opt = (!valid_set.is_empty()).then_some(&valid_set);
    let outcome = train(&train_set, &ladder, &assignment, &train_cfg, valid_opt).stage("train")?;

    let out_dir = &cfg.out_dir;
    fs::create_dir_all(out_dir).stage("write")?;
    let bytes = snapshot::to_bytes(&outcome.model);
    fs::write(out_dir.join("model.bin"), &bytes).stage("write")?;
    write_out(&out_dir.join("metrics.csv"), &metrics_csv(&outcome.history))?;
    if !test_set.is_empty() {
        let report = score_dataset(&outcome.model, &test_set, cfg.task).stage("evaluate")?;
        write_out(&out_dir.join("test_metrics.csv"), &evaluation_csv(&report))?;
    }
    let mut manifest = RunManifest::new("train", &cfg, inputs);
    manifest.feature_count = outcome.model.feature_count();
    manifest.set_sizes = outcome.model.assignment().set_sizes().to_vec();
    manifest.model_sha256 = sha256_hex(&bytes);
    manifest.write(&out_dir.join("manifest.json")).stage("write")?;

    if let Some(last) = outcome.history.last() {
        eprintln!("{}\n{}", crate::train::EpochMetrics::CSV_HEADER, last.csv_row());
    }
    Ok(())
}

/// Loads a model and a data file that must fit inside its feature space.
fn load_model_and_data(cfg: &RunConfig, model: &Path, data: &Path) -> CliResult<(crate::RaFMModel, Dataset)> {
    let model = snapshot::load(model).stage("load")?;
    let dataset = load_data(data, cfg.index_base)?;
    if dataset.feature_count() > model.feature_count() {
        return Err(RafmError::input(format!(
            "data uses {} features but the model has {}",
            dataset.feature_count(),
            model.feature_count()
        )))
        .stage("evaluate");
    }
    let dataset = dataset.widen(model.feature_count()).stage("evaluate")?;
    Ok((model, dataset))
}

fn cmd_evaluate(global: &GlobalArgs, model: &Path, data: &Path) -> CliResult<()> {
    let cfg = resolve_config(global)?;
    let (model, dataset) = load_model_and_data(&cfg, model, data)?;
    let report = score_dataset(&model, &dataset, cfg.task).stage("evaluate")?;
    if cfg.task == Task::Classification && report.auc.is_none() {
        eprintln!("auc: undefined, labels contain a single class");
    }
    emit(global, "evaluation.csv", &evaluation_csv(&report))
}

fn cmd_predict(global: &GlobalArgs, model: &Path, data: &Path, output: Option<&Path>) -> CliResult<()> {
    let cfg = resolve_config(global)?;
    let (model, dataset) = load_model_and_data(&cfg, model, data)?;
    let mut out = String::from("prediction\n");
    for x in dataset.instances() {
        let p = predict(&model, x, cfg.task);
        if !p.is_finite() {
            return Err(RafmError::numeric(format!("non-finite prediction {p}"))).stage("predict");
        }
        out.push_str(&format!("{p}\n"));
    }
    match output {
        Some(path) => write_out(path, &out),
        None => emit(global, "predictions.csv", &out),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_complexity(
    global: &GlobalArgs,
    rank_growth: Growth,
    feature_decay: Growth,
    m: usize,
    max_rank: usize,
    features: usize,
    trials: usize,
    density: f64,
) -> CliResult<()> {
    let cfg = resolve_config(global)?;
    let mut scenario = ComplexityScenario::new(rank_growth, feature_decay, m, max_rank, features);
    scenario.density = density;
    scenario.seed = cfg.seed;
    let report = run_scenario(&scenario, trials).stage("complexity")?;
    emit(global, "complexity.csv", &format!("{}\n{}\n", ScenarioReport::CSV_HEADER, report.csv_row()))
}

fn cmd_verify(global: &GlobalArgs, opts: VerifyOptions) -> CliResult<bool> {
    let cfg = resolve_config(global)?;
    let opts = VerifyOptions { seed: cfg.seed, ..opts };
    let report = run_all(&opts).stage("verify")?;
    let mut text = format!("seed={}\n", opts.seed);
    for r in &report.results {
        text.push_str(&r.line());
        text.push('\n');
    }
    emit(global, "verify.txt", &text)?;
    Ok(report.all_passed())
}

fn cmd_synth(global: &GlobalArgs, output: &Path, features: usize, instances: usize) -> CliResult<()> {
    let cfg = resolve_config(global)?;
    let planted = generate(&PlantedConfig {
        feature_count: features,
        instances,
        task: cfg.task,
        seed: cfg.seed,
        ..Default::default()
    })
    .stage("synth")?;
    write_out(output, &to_libsvm(&planted.data, cfg.index_base))
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let g = &cli.global;
    let result = match &cli.command {
        Command::Stats { data } => cmd_stats(g, data).map(|_| true),
        Command::Train { data, valid, test, ranks, epochs } => {
            cmd_train(g, data, valid.as_deref(), test.as_deref(), ranks.as_deref(), *epochs).map(|_| true)
        }
        Command::Evaluate { model, data } => cmd_evaluate(g, model, data).map(|_| true),
        Command::Predict { model, data, output } => cmd_predict(g, model, data, output.as_deref()).map(|_| true),
        Command::Complexity { rank_growth, feature_decay, levels, max_rank, features, trials, density } => {
            cmd_complexity(g, *rank_growth, *feature_decay, *levels, *max_rank, *features, *trials, *density)
                .map(|_| true)
        }
        Command::Verify { oracle_cases, gradient_cases, triangle_samples, inject_fault } => cmd_verify(
            g,
            VerifyOptions {
                seed: 0,
                oracle_cases: *oracle_cases,
                gradient_cases: *gradient_cases,
                triangle_samples: *triangle_samples,
                inject_fault: *inject_fault,
            },
        ),
        Command::Synth { output, features, instances } => cmd_synth(g, output, *features, *instances).map(|_| true),
    };
    match result {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_PROPERTY,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Parses `args` (program name first) and runs. Usage errors exit 1 rather
/// than clap's default of 2, which is reserved for numeric failures.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}
