//! Command-line interface. Flags override config-file values, which override
//! the defaults.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gpsig_core::dataset::{make_synthetic, Dataset, SyntheticKind};
use gpsig_core::model::{InducingSet, Model};
use gpsig_core::optim::OptimizerKind;
use gpsig_core::oracle;
use gpsig_core::signature::{self, GramBlock};
use gpsig_core::trainer::{
    self, init_inducing_tensors, init_kernel, initial_model, EpochRecord, InducingKind, Monitor,
};

use crate::checkpoint::Checkpoint;
use crate::compare::{compare_inducing, CompareSpec};
use crate::config::{RunConfig, StaticKind};
use crate::io::{load_dataset, load_sequences, save_dataset};
use crate::report::{write_compare, write_gram, write_trainlog, MetricsReport};
use crate::verify::{self, block_rel_err, SuiteResult};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAINLOG_FILE: &str = "trainlog.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const GRAM_FILE: &str = "gram.csv";
pub const COMPARE_FILE: &str = "compare.csv";

/// Exit status for bad configuration, missing or malformed data.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for runtime and verification failures.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "gpsig", version, about = "Gaussian process classification of sequences with signature covariances")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write checkpoint, training log and test metrics.
    Train(RunArgs),
    /// Evaluate a checkpoint on labeled data.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Export a covariance block as CSV.
    Gram {
        #[arg(value_enum)]
        block: GramKind,
        /// Take kernel and inducing tensors from a checkpoint instead of the
        /// configuration.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Check the block against the brute-force oracle (small inputs only).
        #[arg(long)]
        verify: bool,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Inducing tensors vs inducing sequences with the kernel of a checkpoint
    /// held fixed.
    CompareInducing {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![5usize, 10, 20, 40])]
        nz_grid: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value_t = 300)]
        epochs: usize,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the self-check suites.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Write a synthetic dataset as jsonl (gzip when the name ends in .gz).
    Synth {
        #[arg(long, default_value = "drift2")]
        kind: String,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GramKind {
    Zz,
    Zx,
    Xx,
    Diag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Nadam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InducingArg {
    Tensors,
    Sequences,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub nz: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub lags: Option<Vec<f64>>,
    /// Per-level signature normalization (`--normalize` or `--normalize false`).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub normalize: Option<bool>,
    /// Standardize the state-space coordinates with training statistics.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub standardize: Option<bool>,
    #[arg(long, value_enum)]
    pub static_kernel: Option<StaticKind>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub minibatch: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub phase_epochs: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long, value_enum)]
    pub inducing: Option<InducingArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Print results as JSON on stdout.
    #[arg(long)]
    pub json: bool,
}

/// A failure with its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

impl Failure {
    fn usage(error: anyhow::Error) -> Self {
        Self {
            code: EXIT_USAGE,
            error,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self {
            code: EXIT_FAILURE,
            error,
        }
    }
}

type CliResult<T> = Result<T, Failure>;

impl RunArgs {
    /// Config file (or defaults) with the flags applied on top.
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_file(p).map_err(|e| Failure::usage(e.into()))?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.data {
            c.data = Some(v.clone());
        }
        if let Some(v) = &self.test_data {
            c.test_data = Some(v.clone());
        }
        if let Some(v) = &self.out {
            c.out = v.clone();
        }
        if let Some(v) = self.nz {
            c.train.n_z = v;
        }
        if let Some(v) = self.depth {
            if v != c.kernel.depth {
                c.kernel.sigma_prime = None;
            }
            c.kernel.depth = v;
        }
        if let Some(v) = self.tau {
            c.kernel.tau = v;
        }
        if let Some(v) = &self.lags {
            c.kernel.lags = v.clone();
        }
        if let Some(v) = self.normalize {
            c.kernel.normalize = v;
        }
        if let Some(v) = self.standardize {
            c.standardize = v;
        }
        if let Some(v) = self.static_kernel {
            c.kernel.static_kernel = v;
        }
        if let Some(v) = self.optimizer {
            c.train.optimizer = match v {
                OptimizerArg::Adam => OptimizerKind::Adam,
                OptimizerArg::Nadam => OptimizerKind::Nadam,
            };
        }
        if let Some(v) = self.lr {
            c.train.lr = v;
        }
        if let Some(v) = self.minibatch {
            c.train.minibatch = v;
        }
        if let Some(v) = self.patience {
            c.train.patience_epochs = v;
        }
        if let Some(v) = self.phase_epochs {
            c.train.phase_epochs = v;
        }
        if let Some(v) = self.max_epochs {
            c.train.max_epochs = v;
        }
        if let Some(v) = self.inducing {
            c.train.inducing = match v {
                InducingArg::Tensors => InducingKind::Tensors,
                InducingArg::Sequences => InducingKind::Sequences,
            };
        }
        if let Some(v) = self.seed {
            c.train.seed = v;
        }
        if let Some(v) = self.threads {
            c.threads = Some(v);
        }
        c.validate().map_err(|e| Failure::usage(e.into()))?;
        Ok(c)
    }
}

fn set_threads(n: Option<usize>) {
    if let Some(n) = n {
        // The global pool can only be built once per process; later calls
        // keep the first setting.
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::debug!("thread pool already initialized");
        }
    }
}

fn load(c: &RunConfig) -> CliResult<Dataset> {
    let path = c
        .data
        .as_deref()
        .ok_or_else(|| Failure::usage(anyhow!("no data file given (use --data or `data` in the config)")))?;
    load_dataset(path, c.test_data.as_deref()).map_err(|e| Failure::usage(e.into()))
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn emit<T: serde::Serialize>(json: bool, value: &T, human: impl FnOnce() -> String) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    if json {
        serde_json::to_writer(&mut out, value)?;
        writeln!(out)?;
    } else {
        writeln!(out, "{}", human())?;
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

struct Clock {
    start: Instant,
}

impl Monitor for Clock {
    fn elapsed_secs(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn on_epoch(&mut self, r: &EpochRecord) {
        match r.val_nlpp {
            Some(v) => log::debug!("epoch {} {}: elbo {:.4} val nlpp {:.4}", r.epoch, r.phase.name(), r.elbo, v),
            None => log::debug!("epoch {} {}: elbo {:.4}", r.epoch, r.phase.name(), r.elbo),
        }
    }
}

fn cmd_train(args: &RunArgs) -> CliResult<()> {
    let c = args.resolve()?;
    set_threads(c.threads);
    let mut ds = load(&c)?;
    if c.standardize {
        ds = ds.normalize().map_err(|e| Failure::usage(e.into()))?;
    }
    let kernel = c.kernel.to_params().map_err(|e| Failure::usage(e.into()))?;
    let model = initial_model(&ds.train, ds.num_classes, kernel, &c.train).map_err(|e| Failure::usage(e.into()))?;
    let mut clock = Clock { start: Instant::now() };
    let (model, log) = trainer::train(&ds.train, model, &c.train, &mut clock).map_err(anyhow::Error::from)?;
    let secs = clock.elapsed_secs();

    ensure_dir(&c.out)?;
    Checkpoint::new(model.clone(), ds.stats.clone())
        .save(&c.out.join(CHECKPOINT_FILE))
        .map_err(anyhow::Error::from)?;
    write_trainlog(&c.out.join(TRAINLOG_FILE), &log).map_err(anyhow::Error::from)?;
    let eval_set = if ds.test.is_empty() { &ds.train } else { &ds.test };
    let m = model
        .evaluate(eval_set, c.train.n_mc_predict, c.train.seed)
        .map_err(anyhow::Error::from)?;
    let mut report = MetricsReport::new(m);
    report.final_elbo = log.last_elbo();
    report.train_secs = Some(secs);
    write_json(&c.out.join(METRICS_FILE), &report)?;
    emit(args.json, &report, || {
        format!(
            "accuracy {:.4}  mean nlpp {:.4}  ({} sequences, {:.1}s)",
            report.accuracy, report.mean_nlpp, report.count, secs
        )
    })?;
    Ok(())
}

fn cmd_eval(checkpoint: &Path, args: &RunArgs) -> CliResult<()> {
    let c = args.resolve()?;
    set_threads(c.threads);
    let ckpt = Checkpoint::load(checkpoint).map_err(|e| Failure::usage(e.into()))?;
    let mut ds = load(&c)?;
    if let Some(stats) = &ckpt.normalization {
        ds = ds.normalize_with(stats.clone()).map_err(|e| Failure::usage(e.into()))?;
    }
    let eval_set = if ds.test.is_empty() { &ds.train } else { &ds.test };
    let m = ckpt
        .model
        .evaluate(eval_set, c.train.n_mc_predict, c.train.seed)
        .map_err(anyhow::Error::from)?;
    let report = MetricsReport::new(m);
    if args.out.is_some() || c.out != Path::new(".") {
        ensure_dir(&c.out)?;
        write_json(&c.out.join(METRICS_FILE), &report)?;
    }
    emit(args.json, &report, || {
        format!("accuracy {:.4}  mean nlpp {:.4}  ({} sequences)", report.accuracy, report.mean_nlpp, report.count)
    })?;
    Ok(())
}

fn cmd_gram(block: GramKind, checkpoint: Option<&Path>, check: bool, args: &RunArgs) -> CliResult<()> {
    let c = args.resolve()?;
    set_threads(c.threads);
    let path = c
        .data
        .as_deref()
        .ok_or_else(|| Failure::usage(anyhow!("no data file given")))?;
    let mut xs = load_sequences(path).map_err(|e| Failure::usage(e.into()))?;
    if xs.is_empty() {
        return Err(Failure::usage(anyhow!("{} holds no sequences", path.display())));
    }
    let (params, tensors) = match checkpoint {
        Some(p) => {
            let ckpt = Checkpoint::load(p).map_err(|e| Failure::usage(e.into()))?;
            if let Some(stats) = &ckpt.normalization {
                xs = xs
                    .iter()
                    .map(|s| stats.apply(s))
                    .collect::<Result<_, _>>()
                    .map_err(|e| Failure::usage(e.into()))?;
            }
            let Model { kernel, inducing, .. } = ckpt.model;
            let z = match inducing {
                InducingSet::Tensors(z) => Some(z),
                InducingSet::Sequences(_) => None,
            };
            (kernel, z)
        }
        None => {
            let kernel = c.kernel.to_params().map_err(|e| Failure::usage(e.into()))?;
            let kernel = init_kernel(&xs, kernel, c.train.seed).map_err(|e| Failure::usage(e.into()))?;
            let z = init_inducing_tensors(&xs, c.train.n_z, &kernel, c.train.seed).map_err(anyhow::Error::from)?;
            (kernel, Some(z))
        }
    };
    let d = xs[0].dim();
    let need_z = || {
        tensors
            .as_deref()
            .ok_or_else(|| Failure::usage(anyhow!("zz and zx blocks need inducing tensors")))
    };
    let gram: GramBlock = match block {
        GramKind::Zz => signature::cov_inducing(need_z()?, d, &params),
        GramKind::Zx => signature::cov_cross(need_z()?, &xs, &params),
        GramKind::Xx => signature::cov_sequences(&xs, &xs, &params),
        GramKind::Diag => signature::var_sequences(&xs, &params).map(|v| GramBlock {
            rows: v.len(),
            cols: 1,
            values: v,
            row_ids: (0..xs.len()).map(|i| format!("x{i}")).collect(),
            col_ids: vec!["k".into()],
            params_hash: params.fingerprint(),
        }),
    }
    .map_err(anyhow::Error::from)?;

    ensure_dir(&c.out)?;
    write_gram(&c.out.join(GRAM_FILE), &gram).map_err(anyhow::Error::from)?;
    if check {
        let reference = match block {
            GramKind::Zz => oracle::oracle_cov_inducing(need_z()?, d, &params),
            GramKind::Zx => oracle::oracle_cov_cross(need_z()?, &xs, &params),
            GramKind::Xx => oracle::oracle_cov_sequences(&xs, &xs, &params),
            GramKind::Diag => oracle::oracle_var_sequences(&xs, &params),
        }
        .map_err(anyhow::Error::from)?;
        let err = block_rel_err(&gram.values, &reference);
        let passed = err <= verify::ORACLE_TOL;
        emit(
            args.json,
            &serde_json::json!({"rows": gram.rows, "cols": gram.cols, "oracle_rel_err": err, "passed": passed}),
            || format!("{}x{} block, oracle relative error {err:.3e}", gram.rows, gram.cols),
        )?;
        if !passed {
            return Err(anyhow!("block differs from the oracle by {err:e}").into());
        }
    } else {
        emit(args.json, &serde_json::json!({"rows": gram.rows, "cols": gram.cols}), || {
            format!("{}x{} block written to {}", gram.rows, gram.cols, c.out.join(GRAM_FILE).display())
        })?;
    }
    Ok(())
}

fn cmd_compare(checkpoint: &Path, nz_grid: &[usize], seeds: u64, epochs: usize, args: &RunArgs) -> CliResult<()> {
    let c = args.resolve()?;
    set_threads(c.threads);
    let ckpt = Checkpoint::load(checkpoint).map_err(|e| Failure::usage(e.into()))?;
    let mut ds = load(&c)?;
    if let Some(stats) = &ckpt.normalization {
        ds = ds.normalize_with(stats.clone()).map_err(|e| Failure::usage(e.into()))?;
    }
    if ds.test.is_empty() {
        return Err(Failure::usage(anyhow!("comparison needs test records")));
    }
    let spec = CompareSpec {
        n_z: nz_grid.to_vec(),
        variants: vec![InducingKind::Tensors, InducingKind::Sequences],
        seeds: (0..seeds).map(|s| c.train.seed + s).collect(),
        epochs,
    };
    let rows = compare_inducing(
        &ds.train,
        &ds.test,
        ckpt.model.num_classes.max(ds.num_classes),
        &ckpt.model.kernel,
        &spec,
        &c.train,
    )
    .map_err(anyhow::Error::from)?;
    ensure_dir(&c.out)?;
    write_compare(&c.out.join(COMPARE_FILE), &rows).map_err(anyhow::Error::from)?;
    emit(args.json, &rows, || format!("{} runs written to {}", rows.len(), c.out.join(COMPARE_FILE).display()))?;
    Ok(())
}

fn cmd_verify(seed: u64, json: bool) -> CliResult<()> {
    let results: Vec<SuiteResult> = verify::run_all(seed);
    emit(json, &results, || {
        results
            .iter()
            .map(|r| {
                format!(
                    "{} {:<24} worst {:.3e} (tol {:.0e}, {} cases, {:.2}s) {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.worst,
                    r.tolerance,
                    r.cases,
                    r.secs,
                    r.detail
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    })?;
    if results.iter().all(|r| r.passed) {
        Ok(())
    } else {
        Err(anyhow!("verification failed").into())
    }
}

fn cmd_synth(kind: &str, n: usize, seed: u64, out: &Path) -> CliResult<()> {
    let kind: SyntheticKind = kind.parse().map_err(|e: gpsig_core::Error| Failure::usage(e.into()))?;
    let ds = make_synthetic(kind, n, seed).map_err(anyhow::Error::from)?;
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    save_dataset(out, &ds).map_err(anyhow::Error::from)?;
    Ok(())
}

pub fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval { checkpoint, run } => cmd_eval(checkpoint, run),
        Command::Gram {
            block,
            checkpoint,
            verify,
            run,
        } => cmd_gram(*block, checkpoint.as_deref(), *verify, run),
        Command::CompareInducing {
            checkpoint,
            nz_grid,
            seeds,
            epochs,
            run,
        } => {
            if *seeds == 0 || *epochs == 0 || nz_grid.is_empty() {
                bail_usage("seeds, epochs and the n_z grid must be non-empty")?;
            }
            cmd_compare(checkpoint, nz_grid, *seeds, *epochs, run)
        }
        Command::Verify { seed, json } => cmd_verify(*seed, *json),
        Command::Synth { kind, n, seed, out } => cmd_synth(kind, *n, *seed, out),
    }
}

fn bail_usage(msg: &str) -> CliResult<()> {
    let r: anyhow::Result<()> = (|| bail!("{msg}"))();
    r.map_err(Failure::usage)
}
