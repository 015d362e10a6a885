//! Command-line entry point wiring the pipeline: synthesize data, train and
//! evaluate static and progressive predictors, run the attribution analysis,
//! and compare scheduling policies.
//!
//! Exit codes: 0 on success, 1 on I/O or file-format errors, 2 on usage
//! errors. Config precedence: flags > optional TOML config file > built-in
//! defaults; every report CSV starts with a comment line echoing the fully
//! resolved configuration.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use lenpred::dataio::{self, ActivationRecord, SynthConfig};
use lenpred::error::Error;
use lenpred::head::{load_model, save_model, BinScheme};
use lenpred::plp;
use lenpred::pooling::{self, PoolingMode};
use lenpred::schedsim::{self, CostModel, Job, Policy};
use lenpred::trainer::{self, TrainConfig};

type Result<T> = std::result::Result<T, Error>;

#[derive(Parser)]
#[command(
    name = "lenpred",
    version,
    about = "Train, evaluate, and exploit output-length predictors over activation dumps"
)]
struct Cli {
    /// Optional TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic activation dump with a planted length signal.
    Synth(SynthArgs),
    /// Train a static length predictor on pooled prompt features.
    Train(TrainArgs),
    /// Evaluate a trained model: per-example predictions plus MAE/RMSE.
    Eval(EvalArgs),
    /// Train the progressive remaining-length predictor (head input 2d).
    PlpTrain(TrainArgs),
    /// Evaluate remaining-length MAE at decode-progress fractions.
    PlpEval(PlpEvalArgs),
    /// Entropy-vs-importance correlation report over prompt tokens.
    Attribute(AttributeArgs),
    /// Compare scheduling policies on a job set under the padded-batch cost model.
    Simulate(SimulateArgs),
    /// Print dump header, manifest summary, and length statistics.
    Inspect(InspectArgs),
}

#[derive(Args, Clone, Default)]
struct SynthArgs {
    /// Output dump path; the manifest lands at <out>.manifest.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Number of records [default: 2500]
    #[arg(long)]
    num_records: Option<usize>,
    /// Hidden dimension d [default: 16]
    #[arg(long)]
    dim: Option<usize>,
    /// Minimum prompt length [default: 16]
    #[arg(long)]
    prompt_len_min: Option<usize>,
    /// Maximum prompt length [default: 48]
    #[arg(long)]
    prompt_len_max: Option<usize>,
    /// Lognormal mu of response lengths [default: 5.0]
    #[arg(long)]
    log_mu: Option<f64>,
    /// Lognormal sigma of response lengths [default: 0.8]
    #[arg(long)]
    log_sigma: Option<f64>,
    /// Length cap; draws are truncated into [1, max-len] [default: 1024]
    #[arg(long)]
    max_len: Option<u32>,
    /// Fraction of prompt tokens carrying the signal [default: 0.25]
    #[arg(long)]
    signal_fraction: Option<f64>,
    /// Entropy of informative tokens [default: 2.0]
    #[arg(long)]
    entropy_hi: Option<f64>,
    /// Entropy of uninformative tokens [default: 0.1]
    #[arg(long)]
    entropy_lo: Option<f64>,
    /// Noise sigma on the signal coordinate [default: 0.05]
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Generator seed [default: 42]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone, Default)]
struct TrainFlags {
    /// Learning rate [default: 2e-5]
    #[arg(long)]
    lr: Option<f64>,
    /// Training epochs [default: 10]
    #[arg(long)]
    epochs: Option<usize>,
    /// Mini-batch size [default: 16]
    #[arg(long)]
    batch_size: Option<usize>,
    /// Training seed (shuffles reseed as seed + epoch) [default: 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Loss mix: lambda*CE + (1-lambda)*MSE [default: 0.95]
    #[arg(long)]
    lambda: Option<f64>,
    /// Number of length bins K [default: 20]
    #[arg(long)]
    bins: Option<usize>,
    /// AdamW beta1 [default: 0.9]
    #[arg(long)]
    beta1: Option<f64>,
    /// AdamW beta2 [default: 0.999]
    #[arg(long)]
    beta2: Option<f64>,
    /// AdamW epsilon [default: 1e-8]
    #[arg(long)]
    epsilon: Option<f64>,
    /// Decoupled weight decay [default: 0.01]
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Pooling mode: egtp, mean, max, or last [default: egtp]
    #[arg(long)]
    pooling: Option<String>,
    /// Entropy-softmax temperature for EGTP [default: 1.0]
    #[arg(long)]
    alpha: Option<f64>,
    /// Bin scheme: quantile or equal-width [default: quantile]
    #[arg(long)]
    scheme: Option<String>,
    /// Disable dividing the regression error by the max training length.
    #[arg(long)]
    no_normalize_mse: bool,
    /// Fit bins and regress over ln(length).
    #[arg(long)]
    log_scale: bool,
}

#[derive(Args, Clone, Default)]
struct SplitFlags {
    /// Seed of the 3:1:1 shuffle-split [default: 42]
    #[arg(long)]
    split_seed: Option<u64>,
}

#[derive(Args, Clone)]
struct TrainArgs {
    /// Input dump path.
    #[arg(long)]
    data: PathBuf,
    /// Output model path.
    #[arg(long)]
    model_out: PathBuf,
    /// History CSV path [default: <model-out>.history.csv]
    #[arg(long)]
    history_out: Option<PathBuf>,
    #[command(flatten)]
    train: TrainFlags,
    #[command(flatten)]
    split: SplitFlags,
}

#[derive(Args, Clone)]
struct EvalArgs {
    /// Input dump path.
    #[arg(long)]
    data: PathBuf,
    /// Trained model path.
    #[arg(long)]
    model: PathBuf,
    /// Which split to evaluate: train, val, test, or all [default: test]
    #[arg(long)]
    split: Option<String>,
    /// Pooling mode used at evaluation time (set it to the training mode
    /// unless deliberately cross-evaluating) [default: egtp]
    #[arg(long)]
    pooling: Option<String>,
    /// Entropy-softmax temperature [default: 1.0]
    #[arg(long)]
    alpha: Option<f64>,
    /// Report CSV path (omit to skip writing).
    #[arg(long)]
    report_out: Option<PathBuf>,
    #[command(flatten)]
    split_flags: SplitFlags,
}

#[derive(Args, Clone)]
struct PlpEvalArgs {
    /// Input dump path.
    #[arg(long)]
    data: PathBuf,
    /// Trained PLP model path (input size 2d).
    #[arg(long)]
    model: PathBuf,
    /// Which split to evaluate: train, val, test, or all [default: test]
    #[arg(long)]
    split: Option<String>,
    /// Comma-separated decode-progress fractions in [0,1) [default: 0,0.25,0.5,0.75]
    #[arg(long)]
    fractions: Option<String>,
    /// Entropy-softmax temperature [default: 1.0]
    #[arg(long)]
    alpha: Option<f64>,
    /// Curve CSV path (omit to skip writing).
    #[arg(long)]
    curve_out: Option<PathBuf>,
    #[command(flatten)]
    split_flags: SplitFlags,
}

#[derive(Args, Clone)]
struct AttributeArgs {
    /// Input dump path.
    #[arg(long)]
    data: PathBuf,
    /// Trained static model path.
    #[arg(long)]
    model: PathBuf,
    /// Which split to analyze: train, val, test, or all [default: test]
    #[arg(long)]
    split: Option<String>,
    /// Entropy-softmax temperature [default: 1.0]
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of equal-width entropy bins [default: 5]
    #[arg(long)]
    num_bins: Option<usize>,
    /// Report CSV path (omit to skip writing).
    #[arg(long)]
    report_out: Option<PathBuf>,
    #[command(flatten)]
    split_flags: SplitFlags,
}

#[derive(Args, Clone)]
struct SimulateArgs {
    /// Job CSV (id,prompt_len,true_out,predicted_out[,submit_time]).
    #[arg(long, conflicts_with_all = ["data", "model"])]
    jobs: Option<PathBuf>,
    /// Build jobs from a dump: true lengths from records, predictions from --model.
    #[arg(long, requires = "model")]
    data: Option<PathBuf>,
    /// Trained static model used for sjf_predicted when --data is given.
    #[arg(long, requires = "data")]
    model: Option<PathBuf>,
    /// Which split feeds the job set when --data is given [default: test]
    #[arg(long)]
    split: Option<String>,
    /// Pooling mode for predictions when --data is given [default: egtp]
    #[arg(long)]
    pooling: Option<String>,
    /// Entropy-softmax temperature [default: 1.0]
    #[arg(long)]
    alpha: Option<f64>,
    /// Comma-separated policies [default: fcfs,sjf_oracle,sjf_predicted]
    #[arg(long)]
    policies: Option<String>,
    /// Batch size B [default: 16]
    #[arg(long)]
    batch_size: Option<usize>,
    /// Seed of the random policy [default: 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Prefill seconds per prompt token [default: 1e-4]
    #[arg(long)]
    t_prefill: Option<f64>,
    /// Decode seconds per output token [default: 2e-3]
    #[arg(long)]
    t_decode: Option<f64>,
    /// Poisson arrival rate (jobs/s); omit for offline mode (all arrivals at 0).
    #[arg(long)]
    poisson_rate: Option<f64>,
    /// Seed of the arrival process [default: 42]
    #[arg(long)]
    arrival_seed: Option<u64>,
    /// Comparison CSV path (omit to skip writing).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    split_flags: SplitFlags,
}

#[derive(Args, Clone)]
struct InspectArgs {
    /// Dump path to inspect.
    #[arg(long)]
    data: PathBuf,
    /// Print the first N manifest lines.
    #[arg(long, default_value_t = 0)]
    records: usize,
}

// ---------------------------------------------------------------------------
// optional TOML config file

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    synth: SynthSection,
    #[serde(default)]
    train: TrainSection,
    #[serde(default)]
    cost: CostSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthSection {
    num_records: Option<usize>,
    dim: Option<usize>,
    prompt_len_min: Option<usize>,
    prompt_len_max: Option<usize>,
    log_mu: Option<f64>,
    log_sigma: Option<f64>,
    max_len: Option<u32>,
    signal_fraction: Option<f64>,
    entropy_hi: Option<f64>,
    entropy_lo: Option<f64>,
    noise_sigma: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSection {
    lr: Option<f64>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    seed: Option<u64>,
    lambda: Option<f64>,
    bins: Option<usize>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    epsilon: Option<f64>,
    weight_decay: Option<f64>,
    pooling: Option<String>,
    alpha: Option<f64>,
    scheme: Option<String>,
    normalize_mse: Option<bool>,
    log_scale: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostSection {
    t_prefill_per_token: Option<f64>,
    t_decode_per_step: Option<f64>,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| Error::InvalidArgument {
                what: "config file",
                reason: e.to_string(),
            })
        }
    }
}

// ---------------------------------------------------------------------------
// resolution: flags > file > defaults

fn resolve_synth(args: &SynthArgs, file: &SynthSection) -> SynthConfig {
    let d = SynthConfig::default();
    SynthConfig {
        num_records: args.num_records.or(file.num_records).unwrap_or(d.num_records),
        d: args.dim.or(file.dim).unwrap_or(d.d),
        prompt_len_min: args
            .prompt_len_min
            .or(file.prompt_len_min)
            .unwrap_or(d.prompt_len_min),
        prompt_len_max: args
            .prompt_len_max
            .or(file.prompt_len_max)
            .unwrap_or(d.prompt_len_max),
        log_mu: args.log_mu.or(file.log_mu).unwrap_or(d.log_mu),
        log_sigma: args.log_sigma.or(file.log_sigma).unwrap_or(d.log_sigma),
        max_len: args.max_len.or(file.max_len).unwrap_or(d.max_len),
        signal_fraction: args
            .signal_fraction
            .or(file.signal_fraction)
            .unwrap_or(d.signal_fraction),
        entropy_hi: args.entropy_hi.or(file.entropy_hi).unwrap_or(d.entropy_hi),
        entropy_lo: args.entropy_lo.or(file.entropy_lo).unwrap_or(d.entropy_lo),
        noise_sigma: args.noise_sigma.or(file.noise_sigma).unwrap_or(d.noise_sigma),
        seed: args.seed.or(file.seed).unwrap_or(d.seed),
    }
}

fn resolve_train(flags: &TrainFlags, file: &TrainSection) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let pooling = match flags.pooling.as_deref().or(file.pooling.as_deref()) {
        Some(s) => PoolingMode::from_str(s)?,
        None => d.pooling,
    };
    let scheme = match flags.scheme.as_deref().or(file.scheme.as_deref()) {
        Some(s) => BinScheme::from_str(s)?,
        None => d.scheme,
    };
    let normalize_mse = if flags.no_normalize_mse {
        false
    } else {
        file.normalize_mse.unwrap_or(d.normalize_mse)
    };
    let log_scale = flags.log_scale || file.log_scale.unwrap_or(d.log_scale);
    Ok(TrainConfig {
        learning_rate: flags.lr.or(file.lr).unwrap_or(d.learning_rate),
        epochs: flags.epochs.or(file.epochs).unwrap_or(d.epochs),
        batch_size: flags.batch_size.or(file.batch_size).unwrap_or(d.batch_size),
        seed: flags.seed.or(file.seed).unwrap_or(d.seed),
        lambda: flags.lambda.or(file.lambda).unwrap_or(d.lambda),
        k: flags.bins.or(file.bins).unwrap_or(d.k),
        beta1: flags.beta1.or(file.beta1).unwrap_or(d.beta1),
        beta2: flags.beta2.or(file.beta2).unwrap_or(d.beta2),
        epsilon: flags.epsilon.or(file.epsilon).unwrap_or(d.epsilon),
        weight_decay: flags
            .weight_decay
            .or(file.weight_decay)
            .unwrap_or(d.weight_decay),
        pooling,
        alpha: flags.alpha.or(file.alpha).unwrap_or(d.alpha),
        scheme,
        normalize_mse,
        log_scale,
    })
}

fn resolve_cost(args: &SimulateArgs, file: &CostSection) -> CostModel {
    let d = CostModel::default();
    CostModel {
        t_prefill_per_token: args
            .t_prefill
            .or(file.t_prefill_per_token)
            .unwrap_or(d.t_prefill_per_token),
        t_decode_per_step: args
            .t_decode
            .or(file.t_decode_per_step)
            .unwrap_or(d.t_decode_per_step),
    }
}

// ---------------------------------------------------------------------------
// shared helpers

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SplitChoice {
    Train,
    Val,
    Test,
    All,
}

impl FromStr for SplitChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitChoice::Train),
            "val" => Ok(SplitChoice::Val),
            "test" => Ok(SplitChoice::Test),
            "all" => Ok(SplitChoice::All),
            other => Err(Error::InvalidArgument {
                what: "split",
                reason: format!("unknown split '{other}' (expected train, val, test, or all)"),
            }),
        }
    }
}

impl std::fmt::Display for SplitChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SplitChoice::Train => "train",
            SplitChoice::Val => "val",
            SplitChoice::Test => "test",
            SplitChoice::All => "all",
        };
        write!(f, "{s}")
    }
}

fn select_split(
    records: Vec<ActivationRecord>,
    choice: SplitChoice,
    split_seed: u64,
) -> Result<Vec<ActivationRecord>> {
    if choice == SplitChoice::All {
        return Ok(records);
    }
    let (train, val, test) = dataio::split(records, (3, 1, 1), split_seed)?;
    Ok(match choice {
        SplitChoice::Train => train,
        SplitChoice::Val => val,
        SplitChoice::Test => test,
        SplitChoice::All => unreachable!(),
    })
}

fn parse_split(flag: Option<&str>) -> Result<SplitChoice> {
    flag.map_or(Ok(SplitChoice::Test), SplitChoice::from_str)
}

fn length_stats(records: &[ActivationRecord]) -> String {
    let mut lengths: Vec<u32> = records.iter().map(|r| r.y).collect();
    lengths.sort_unstable();
    let n = lengths.len();
    let mean = lengths.iter().map(|&l| l as f64).sum::<f64>() / n as f64;
    format!(
        "lengths: min={} median={} mean={mean:.2} max={}",
        lengths[0],
        lengths[n / 2],
        lengths[n - 1]
    )
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// subcommands

fn cmd_synth(args: &SynthArgs, file: &FileConfig) -> Result<()> {
    let config = resolve_synth(args, &file.synth);
    config.validate()?;
    let records = dataio::synth_generate(&config)?;
    dataio::write_dump(&records, &args.out)?;
    println!("# synth {}", config.echo());
    println!(
        "wrote {} records to {} (manifest {})",
        records.len(),
        args.out.display(),
        dataio::manifest_path(&args.out).display()
    );
    println!("{}", length_stats(&records));
    Ok(())
}

fn cmd_train(args: &TrainArgs, file: &FileConfig, progressive: bool) -> Result<()> {
    let config = resolve_train(&args.train, &file.train)?;
    config.validate()?;
    let split_seed = args.split.split_seed.unwrap_or(42);
    let records = dataio::read_dump(&args.data)?;
    let (train_set, val_set, _test) = dataio::split(records, (3, 1, 1), split_seed)?;

    let mode = if progressive { "plp-train" } else { "train" };
    let echo = format!(
        "cmd={mode} data={} split_seed={split_seed} ratios=3:1:1 {config}",
        args.data.display()
    );
    println!("# {echo}");

    let (outcome, skipped) = if progressive {
        let out = plp::plp_train(&train_set, &val_set, &config)?;
        (out.outcome, out.skipped_records)
    } else {
        (trainer::train(&train_set, &val_set, &config)?, 0)
    };
    if skipped > 0 {
        eprintln!("warning: skipped {skipped} records without response activations");
    }
    if outcome.clamped_labels > 0 {
        eprintln!(
            "note: {} training targets clamped into the last bin",
            outcome.clamped_labels
        );
    }

    save_model(&args.model_out, &outcome.params, &outcome.bins)?;
    let history_path = args
        .history_out
        .clone()
        .unwrap_or_else(|| default_history_path(&args.model_out));
    write_text(&history_path, &trainer::history_csv(&outcome.history, &echo))?;

    let best = outcome
        .history
        .iter()
        .min_by(|a, b| a.val_mae.partial_cmp(&b.val_mae).unwrap())
        .expect("history is non-empty");
    println!(
        "trained {} epochs on {} examples (val {}): best epoch {} val_mae={}",
        outcome.history.len(),
        train_set.len(),
        val_set.len(),
        best.epoch,
        best.val_mae
    );
    println!(
        "model -> {} ({} bins), history -> {}",
        args.model_out.display(),
        outcome.bins.k(),
        history_path.display()
    );
    Ok(())
}

fn default_history_path(model_out: &Path) -> PathBuf {
    let mut os = model_out.as_os_str().to_owned();
    os.push(".history.csv");
    PathBuf::from(os)
}

fn cmd_eval(args: &EvalArgs, file: &FileConfig) -> Result<()> {
    let split = parse_split(args.split.as_deref())?;
    let split_seed = args.split_flags.split_seed.unwrap_or(42);
    let pooling = match args.pooling.as_deref().or(file.train.pooling.as_deref()) {
        Some(s) => PoolingMode::from_str(s)?,
        None => PoolingMode::Egtp,
    };
    let alpha = args.alpha.or(file.train.alpha).unwrap_or(1.0);

    let records = dataio::read_dump(&args.data)?;
    let subset = select_split(records, split, split_seed)?;
    let (params, bins) = load_model(&args.model)?;
    let mut report = trainer::evaluate(&params, &bins, &subset, pooling, alpha)?;
    report.config_echo = format!(
        "cmd=eval data={} model={} split={split} split_seed={split_seed} {}",
        args.data.display(),
        args.model.display(),
        report.config_echo
    );
    println!("# {}", report.config_echo);
    println!(
        "examples={} mae={} rmse={}",
        report.rows.len(),
        report.mae,
        report.rmse
    );
    if let Some(out) = &args.report_out {
        write_text(out, &report.to_csv())?;
        println!("report -> {}", out.display());
    }
    Ok(())
}

fn cmd_plp_eval(args: &PlpEvalArgs, file: &FileConfig) -> Result<()> {
    let split = parse_split(args.split.as_deref())?;
    let split_seed = args.split_flags.split_seed.unwrap_or(42);
    let alpha = args.alpha.or(file.train.alpha).unwrap_or(1.0);
    let fractions: Vec<f64> = match args.fractions.as_deref() {
        None => vec![0.0, 0.25, 0.5, 0.75],
        Some(list) => list
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|e| Error::InvalidArgument {
                    what: "fractions",
                    reason: format!("'{s}': {e}"),
                })
            })
            .collect::<Result<_>>()?,
    };

    let records = dataio::read_dump(&args.data)?;
    let subset = select_split(records, split, split_seed)?;
    let (params, bins) = load_model(&args.model)?;
    let curve = plp::plp_eval_curve(&params, &bins, &subset, &fractions, alpha)?;

    let echo = format!(
        "cmd=plp-eval data={} model={} split={split} split_seed={split_seed} alpha={alpha} fractions={fractions:?}",
        args.data.display(),
        args.model.display()
    );
    println!("# {echo}");
    for p in &curve.points {
        println!("fraction={} mae={}", p.fraction, p.mae);
    }
    if let Some(out) = &args.curve_out {
        write_text(out, &curve.to_csv(&echo))?;
        println!("curve -> {}", out.display());
    }
    Ok(())
}

fn cmd_attribute(args: &AttributeArgs, file: &FileConfig) -> Result<()> {
    let split = parse_split(args.split.as_deref())?;
    let split_seed = args.split_flags.split_seed.unwrap_or(42);
    let alpha = args.alpha.or(file.train.alpha).unwrap_or(1.0);
    let num_bins = args.num_bins.unwrap_or(5);

    let records = dataio::read_dump(&args.data)?;
    let subset = select_split(records, split, split_seed)?;
    let (params, bins) = load_model(&args.model)?;
    let report = pooling::entropy_importance_report(&subset, &params, &bins, alpha, num_bins)?;

    let echo = format!(
        "cmd=attribute data={} model={} split={split} split_seed={split_seed} alpha={alpha} num_bins={num_bins}",
        args.data.display(),
        args.model.display()
    );
    println!("# {echo}");
    println!("pairs={} pearson_r={}", report.pairs, report.pearson_r);

    let mut csv = format!("# {echo}\n# pearson_r={}\n", report.pearson_r);
    csv.push_str("bin,entropy_lo,entropy_hi,count,mean_importance\n");
    for i in 0..report.bin_counts.len() {
        let mean = report.bin_means[i]
            .map(|m| m.to_string())
            .unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            i + 1,
            report.bin_edges[i],
            report.bin_edges[i + 1],
            report.bin_counts[i],
            mean
        ));
        println!(
            "bin {}: entropy [{}, {}] count={} mean_importance={}",
            i + 1,
            report.bin_edges[i],
            report.bin_edges[i + 1],
            report.bin_counts[i],
            report.bin_means[i].map(|m| m.to_string()).unwrap_or_else(|| "-".into())
        );
    }
    if let Some(out) = &args.report_out {
        write_text(out, &csv)?;
        println!("report -> {}", out.display());
    }
    Ok(())
}

fn parse_policies(list: &str, seed: u64) -> Result<Vec<Policy>> {
    list.split(',')
        .map(|s| match s.trim() {
            "fcfs" => Ok(Policy::Fcfs),
            "random" => Ok(Policy::Random { seed }),
            "sjf_oracle" => Ok(Policy::SjfOracle),
            "sjf_predicted" => Ok(Policy::SjfPredicted),
            other => Err(Error::InvalidArgument {
                what: "policies",
                reason: format!(
                    "unknown policy '{other}' (expected fcfs, random, sjf_oracle, sjf_predicted)"
                ),
            }),
        })
        .collect()
}

fn jobs_from_dump(args: &SimulateArgs, file: &FileConfig) -> Result<Vec<Job>> {
    let data = args.data.as_ref().expect("clap enforces --data");
    let model = args.model.as_ref().expect("clap enforces --model");
    let split = parse_split(args.split.as_deref())?;
    let split_seed = args.split_flags.split_seed.unwrap_or(42);
    let pooling = match args.pooling.as_deref().or(file.train.pooling.as_deref()) {
        Some(s) => PoolingMode::from_str(s)?,
        None => PoolingMode::Egtp,
    };
    let alpha = args.alpha.or(file.train.alpha).unwrap_or(1.0);

    let records = dataio::read_dump(data)?;
    let subset = select_split(records, split, split_seed)?;
    let (params, bins) = load_model(model)?;
    let report = trainer::evaluate(&params, &bins, &subset, pooling, alpha)?;
    subset
        .iter()
        .zip(&report.rows)
        .map(|(record, row)| {
            Job::new(
                record.id.clone(),
                record.prompt.n() as u32,
                record.y,
                row.y_hat.round().max(1.0) as u32,
            )
        })
        .collect()
}

fn cmd_simulate(args: &SimulateArgs, file: &FileConfig) -> Result<()> {
    let cost = resolve_cost(args, &file.cost);
    cost.validate()?;
    let batch_size = args.batch_size.unwrap_or(16);
    let seed = args.seed.unwrap_or(42);
    let policy_list = args
        .policies
        .clone()
        .unwrap_or_else(|| "fcfs,sjf_oracle,sjf_predicted".to_string());
    let policies = parse_policies(&policy_list, seed)?;

    let mut jobs = match (&args.jobs, &args.data) {
        (Some(path), _) => {
            let f = std::fs::File::open(path)?;
            schedsim::read_jobs_csv(f)?
        }
        (None, Some(_)) => jobs_from_dump(args, file)?,
        (None, None) => {
            return Err(Error::InvalidArgument {
                what: "simulate",
                reason: "provide --jobs or --data with --model".into(),
            })
        }
    };
    if let Some(rate) = args.poisson_rate {
        schedsim::assign_poisson_arrivals(&mut jobs, rate, args.arrival_seed.unwrap_or(42))?;
    }

    let echo = format!(
        "cmd=simulate jobs={} policies={policy_list} batch_size={batch_size} seed={seed} t_prefill={} t_decode={} poisson_rate={}",
        jobs.len(),
        cost.t_prefill_per_token,
        cost.t_decode_per_step,
        args.poisson_rate.map(|r| r.to_string()).unwrap_or_else(|| "off".into())
    );
    println!("# {echo}");
    let reports = schedsim::compare_policies(&jobs, &policies, batch_size, &cost)?;
    for r in &reports {
        println!(
            "policy={} throughput={} mean_jct={} padding_ratio={}",
            r.policy, r.throughput, r.mean_jct, r.padding_ratio
        );
    }
    if let Some(out) = &args.out {
        write_text(out, &schedsim::comparison_csv(&reports, &echo))?;
        println!("comparison -> {}", out.display());
    }
    Ok(())
}

fn cmd_inspect(args: &InspectArgs) -> Result<()> {
    let (header, lines) = dataio::read_manifest(&args.data)?;
    println!(
        "dump {}: magic={} version={} d={} records={}",
        args.data.display(),
        header.magic,
        header.version,
        header.d,
        lines.len()
    );
    let mut lengths: Vec<u32> = lines.iter().map(|l| l.y).collect();
    lengths.sort_unstable();
    if !lengths.is_empty() {
        let n = lengths.len();
        let mean = lengths.iter().map(|&l| l as f64).sum::<f64>() / n as f64;
        let static_only = lines.iter().filter(|l| l.t == 0).count();
        println!(
            "lengths: min={} median={} mean={mean:.2} max={} (static-only records: {static_only})",
            lengths[0],
            lengths[n / 2],
            lengths[n - 1]
        );
    }
    for line in lines.iter().take(args.records) {
        println!(
            "{} offset={} n={} T={} y={}",
            line.id, line.byte_offset, line.n, line.t, line.y
        );
    }
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let file = load_file_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Synth(args) => cmd_synth(args, &file),
        Command::Train(args) => cmd_train(args, &file, false),
        Command::PlpTrain(args) => cmd_train(args, &file, true),
        Command::Eval(args) => cmd_eval(args, &file),
        Command::PlpEval(args) => cmd_plp_eval(args, &file),
        Command::Attribute(args) => cmd_attribute(args, &file),
        Command::Simulate(args) => cmd_simulate(args, &file),
        Command::Inspect(args) => cmd_inspect(args),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
