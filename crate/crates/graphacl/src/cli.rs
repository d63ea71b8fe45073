//! Subcommands: `stats`, `synth`, `train`, `eval`, `check`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use graphacl_core::encoder::{predictor_forward, target_forward, PredictorKind, PredictorParams};
use graphacl_core::eval::{evaluate, ProbeConfig};
use graphacl_core::graph::normalized_adjacency;
use graphacl_core::linalg::l2_normalize_rows;
use graphacl_core::metrics::graph_stats;
use graphacl_core::objectives::{LossVariant, Negatives};
use graphacl_core::synthetic::{generate_synthetic, SyntheticKind, SyntheticSpec};
use graphacl_core::theory::{random_inequality_trials, theory_report, TheoryReport, TrialSummary};
use graphacl_core::trainer::{negatives_for_epoch, train_with_observer, TrainConfig, TrainResult};
use serde::Serialize;

use crate::dataset::{load_dataset, random_splits, write_dataset, Dataset};
use crate::error::{CliError, CliResult};
use crate::formats::{read_embeddings, write_checkpoint, write_embeddings};
use crate::report::MetricsReport;

pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const METRICS_FILE: &str = "metrics.json";
/// Random node pairs drawn for the similarity histograms.
pub const HISTOGRAM_RANDOM_PAIRS: usize = 10_000;

#[derive(Debug, Parser)]
#[command(name = "graphacl", version, about = "Asymmetric contrastive node representation learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print homophily, two-hop monophily and neighborhood similarity as JSON.
    Stats { dir: PathBuf },
    /// Write a seeded synthetic dataset.
    Synth(SynthArgs),
    /// Train, then write embeddings.bin, checkpoint.bin and metrics.json.
    Train(TrainArgs),
    /// Linear probe, k-means NMI and similarity histograms for saved embeddings.
    Eval(EvalArgs),
    /// Random-instance inequality trials, plus a report on a dataset if given.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Sbm,
    Monophily,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[arg(long)]
    pub nodes: usize,
    #[arg(long)]
    pub classes: usize,
    #[arg(long)]
    pub p_in: f64,
    #[arg(long)]
    pub p_out: f64,
    /// Monophily kind: edge probability between non-partner classes.
    #[arg(long, default_value_t = 0.0)]
    pub p_noise: f64,
    #[arg(long, default_value_t = 16)]
    pub feature_dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub feature_noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LossArg {
    Graphacl,
    Smoothing,
    Pre,
    Uni,
    Com,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PredictorArg {
    Mlp,
    Linear,
    Identity,
}

#[derive(Debug, Default, Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub neg_k: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    #[arg(long, value_enum)]
    pub predictor: Option<PredictorArg>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub dir: PathBuf,
    /// JSON object with TrainConfig keys; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub flags: TrainFlags,
    #[arg(long, default_value = "graphacl-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub dir: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Directory for metrics.json (defaults to the embeddings' directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    pub dir: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.75)]
    pub tau: f64,
}

/// Reads the optional config file and applies flag overrides.
pub fn effective_config(file: Option<&Path>, flags: &TrainFlags) -> CliResult<TrainConfig> {
    let mut cfg = match file {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(CliError::io(path))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), e.line())))?
        }
        None => TrainConfig::default(),
    };
    macro_rules! set {
        ($($field:ident <- $flag:ident),*) => {$(
            if let Some(x) = flags.$flag { cfg.$field = x; }
        )*};
    }
    set!(seed <- seed, epochs <- epochs, tau <- tau, lambda <- lambda, neg_k <- neg_k, lr <- lr,
        weight_decay <- weight_decay);
    if let Some(d) = flags.dim {
        cfg.dim = d;
        cfg.hidden_dim = d;
    }
    if let Some(l) = flags.loss {
        cfg.loss_variant = match l {
            LossArg::Graphacl => LossVariant::Graphacl,
            LossArg::Smoothing => LossVariant::Smoothing,
            LossArg::Pre => LossVariant::Pre,
            LossArg::Uni => LossVariant::Uni,
            LossArg::Com => LossVariant::Com,
        };
    }
    if let Some(p) = flags.predictor {
        cfg.predictor_kind = match p {
            PredictorArg::Mlp => PredictorKind::Mlp,
            PredictorArg::Linear => PredictorKind::Linear,
            PredictorArg::Identity => PredictorKind::Identity,
        };
    }
    cfg.validate().map_err(|e| CliError::Usage(format!("conflicting configuration: {e}")))?;
    Ok(cfg)
}

/// Representation-level theory report for a trained model.
pub fn trained_theory_report(ds: &Dataset, cfg: &TrainConfig, result: &TrainResult) -> CliResult<TheoryReport> {
    let adj = normalized_adjacency(&ds.graph);
    let v = &result.embeddings;
    let p = predictor_forward(v, &result.state.predictor)?;
    let u = target_forward(&adj, &ds.features, &result.state)?;
    let negatives = negatives_for_epoch(cfg, ds.graph.num_nodes(), cfg.epochs.saturating_sub(1))?;
    Ok(theory_report(&ds.graph, &p, &u, v, &negatives, cfg.tau, Some(&result.state.predictor))?)
}

/// Full `train` pipeline without touching the filesystem.
pub fn train_and_report(ds: &Dataset, cfg: &TrainConfig) -> CliResult<(TrainResult, MetricsReport)> {
    let mut report = MetricsReport::new(&ds.name, graph_stats(&ds.graph)?);
    report.seed = Some(cfg.seed);
    report.config = Some(cfg.clone());
    let t = Instant::now();
    let result = train_with_observer(&ds.graph, &ds.features, cfg, |info| {
        if info.epoch % 50 == 0 {
            log::info!("epoch {} loss {:.6}", info.epoch, info.loss);
        }
    })?;
    report.timings.train_seconds = t.elapsed().as_secs_f64();
    report.loss_curve = result.loss_curve.clone();

    let t = Instant::now();
    let predictions = predictor_forward(&result.embeddings, &result.state.predictor)?;
    let probe = ProbeConfig { seed: cfg.seed, ..ProbeConfig::default() };
    report.eval = Some(evaluate(
        &result.embeddings,
        &ds.graph,
        &ds.splits,
        &probe,
        Some(&predictions),
        HISTOGRAM_RANDOM_PAIRS,
    )?);
    report.timings.eval_seconds = t.elapsed().as_secs_f64();

    let t = Instant::now();
    report.theory = Some(trained_theory_report(ds, cfg, &result)?);
    report.timings.theory_seconds = t.elapsed().as_secs_f64();
    Ok((result, report))
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    writeln!(out, "{text}").map_err(CliError::io("<stdout>"))
}

fn timed_load(dir: &Path) -> CliResult<(Dataset, f64)> {
    let t = Instant::now();
    let ds = load_dataset(dir)?;
    log::info!("loaded {} ({} nodes, {} edges)", ds.name, ds.graph.num_nodes(), ds.graph.num_edges());
    Ok((ds, t.elapsed().as_secs_f64()))
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    out: &'a Path,
    final_loss: f64,
    probe_accuracy: f64,
    nmi: f64,
}

fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = effective_config(args.config.as_deref(), &args.flags)?;
    let (ds, load_seconds) = timed_load(&args.dir)?;
    let (result, mut report) = train_and_report(&ds, &cfg)?;
    report.timings.load_seconds = load_seconds;
    fs::create_dir_all(&args.out).map_err(CliError::io(&args.out))?;
    write_embeddings(&args.out.join(EMBEDDINGS_FILE), &result.embeddings)?;
    write_checkpoint(&args.out.join(CHECKPOINT_FILE), &result.state)?;
    report.write(&args.out.join(METRICS_FILE))?;
    let eval = report.eval.as_ref().expect("train always evaluates");
    print_json(
        out,
        &TrainSummary {
            out: &args.out,
            final_loss: *result.loss_curve.last().unwrap_or(&f64::NAN),
            probe_accuracy: eval.probe_accuracy,
            nmi: eval.nmi,
        },
    )
}

fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> CliResult<()> {
    let (ds, load_seconds) = timed_load(&args.dir)?;
    let emb = read_embeddings(&args.embeddings)?;
    if emb.rows() != ds.graph.num_nodes() {
        return Err(CliError::Data {
            path: args.embeddings.clone(),
            msg: format!("{} embedding rows for a graph with {} nodes", emb.rows(), ds.graph.num_nodes()),
        });
    }
    let dir = match &args.out {
        Some(d) => d.clone(),
        None => args.embeddings.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let metrics_path = dir.join(METRICS_FILE);
    let mut report = if metrics_path.exists() {
        MetricsReport::read(&metrics_path)?
    } else {
        MetricsReport::new(&ds.name, graph_stats(&ds.graph)?)
    };
    report.timings.load_seconds = load_seconds;
    let t = Instant::now();
    let probe = ProbeConfig { seed: args.seed, ..ProbeConfig::default() };
    let eval = evaluate(&emb, &ds.graph, &ds.splits, &probe, None, HISTOGRAM_RANDOM_PAIRS)?;
    report.timings.eval_seconds = t.elapsed().as_secs_f64();
    report.eval = Some(eval.clone());
    fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
    report.write(&metrics_path)?;
    #[derive(Serialize)]
    struct EvalSummary {
        probe_accuracy: f64,
        probe_accuracy_std: f64,
        nmi: f64,
        mean_cosine_random: f64,
        mean_cosine_one_hop: f64,
        mean_cosine_two_hop: f64,
    }
    print_json(
        out,
        &EvalSummary {
            probe_accuracy: eval.probe_accuracy,
            probe_accuracy_std: eval.probe_accuracy_std,
            nmi: eval.nmi,
            mean_cosine_random: eval.histograms.mean_random(),
            mean_cosine_one_hop: eval.histograms.mean_one_hop(),
            mean_cosine_two_hop: eval.histograms.mean_two_hop(),
        },
    )
}

#[derive(Serialize)]
struct CheckOutput {
    trials: TrialSummary,
    /// Embeddings read as `P = U = V` (identity predictor).
    embeddings: Option<TheoryReport>,
}

fn cmd_check(args: &CheckArgs, out: &mut dyn Write) -> CliResult<()> {
    if args.embeddings.is_some() && args.dir.is_none() {
        return Err(CliError::Usage("--embeddings needs a dataset directory".into()));
    }
    let trials = random_inequality_trials(args.trials, args.seed)?;
    let mut violations = trials.violations.clone();
    let embeddings = match (&args.dir, &args.embeddings) {
        (Some(dir), Some(path)) => {
            let ds = load_dataset(dir)?;
            let v = l2_normalize_rows(&read_embeddings(path)?).output;
            if v.rows() != ds.graph.num_nodes() {
                return Err(CliError::Data {
                    path: path.clone(),
                    msg: format!("{} embedding rows for a graph with {} nodes", v.rows(), ds.graph.num_nodes()),
                });
            }
            let identity = PredictorParams::Identity { dim: v.cols() };
            let neg = Negatives::All { include_self: true };
            let report = theory_report(&ds.graph, &v, &v, &v, &neg, args.tau, Some(&identity))?;
            violations.extend(report.violations.iter().cloned());
            Some(report)
        }
        (Some(dir), None) => {
            // validates the directory even without embeddings
            load_dataset(dir)?;
            None
        }
        _ => None,
    };
    print_json(out, &CheckOutput { trials, embeddings })?;
    if violations.is_empty() {
        Ok(())
    } else {
        Err(CliError::TheoryViolation(violations))
    }
}

fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> CliResult<()> {
    let spec = SyntheticSpec {
        kind: match args.kind {
            KindArg::Sbm => SyntheticKind::HomophilicSbm,
            KindArg::Monophily => SyntheticKind::HeterophilicBipartiteMonophily,
        },
        num_nodes: args.nodes,
        num_classes: args.classes,
        p_in: args.p_in,
        p_out: args.p_out,
        p_noise: args.p_noise,
        feature_dim: args.feature_dim,
        feature_noise: args.feature_noise,
    };
    let (graph, features) = generate_synthetic(&spec, args.seed)?;
    let splits = random_splits(graph.num_nodes(), args.seed);
    let name = args.out.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ds = Dataset { name, graph, features, splits };
    write_dataset(&ds, &args.out)?;
    print_json(out, &graph_stats(&ds.graph)?)
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::Stats { dir } => {
            let ds = load_dataset(dir)?;
            print_json(out, &graph_stats(&ds.graph)?)
        }
        Command::Synth(a) => cmd_synth(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Check(a) => cmd_check(a, out),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
/// JSON goes to `out`; diagnostics go to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
