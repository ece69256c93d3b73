//! `rsgnn`: data generation, training, evaluation and aggregation.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod config_file;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rsgnn::graph::{
    build_temporal_graph, generate_sbm, read_graph_dir, write_graph_dir, FrameAnnotation,
    SbmConfig, WindowConfig,
};
use rsgnn::loss::{LossConfig, NormPenalty};
use rsgnn::model::ModelKind;
use rsgnn::nn::OptimizerKind;
use rsgnn::run::{load_run, save_run, RunConfig};
use rsgnn::training::{train, TrainConfig};
use rsgnn::{Error, ErrorKind};

#[derive(Parser, Debug)]
#[command(name = "rsgnn", version, about = "Random-set graph neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a stochastic block model graph directory.
    GenSynthetic(GenArgs),
    /// Turn per-frame agent annotations into windowed graph directories.
    BuildTemporal(TemporalArgs),
    /// Train one or more seeded runs.
    Train(TrainArgs),
    /// Evaluate a trained run on the test nodes of a graph.
    Eval(EvalArgs),
    /// Mean and standard deviation of every metric across runs.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 6)]
    classes: usize,
    #[arg(long, default_value_t = 100)]
    nodes_per_class: usize,
    #[arg(long, default_value_t = 0.1)]
    p_in: f64,
    #[arg(long, default_value_t = 0.01)]
    p_out: f64,
    #[arg(long, default_value_t = 16)]
    feature_dim: usize,
    #[arg(long, default_value_t = 1.0)]
    feature_shift: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TemporalArgs {
    /// JSON array of frames, each `{frame_id, agents: [...]}`.
    #[arg(long)]
    frames: PathBuf,
    #[arg(long, default_value_t = 4)]
    window_size: usize,
    #[arg(long, default_value_t = 4)]
    window_stride: usize,
    #[arg(long, default_value_t = 5)]
    frame_step: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "rsgnn")]
    model: ModelKind,
    /// Comma-separated held-out classes.
    #[arg(long, value_delimiter = ',')]
    ood_classes: Vec<usize>,
    /// Number of runs, seeded `seed, seed+1, ...`.
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 1)]
    warmup_epochs: usize,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 0.2)]
    dropout: f64,
    #[arg(long, default_value_t = 1e-3)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-3)]
    beta: f64,
    #[arg(long, default_value = "absolute")]
    norm_penalty: NormPenalty,
    #[arg(long, default_value_t = 64)]
    budget: usize,
    #[arg(long, default_value_t = 3)]
    max_card: usize,
    #[arg(long)]
    full_power_set: bool,
    #[arg(long, default_value_t = 0.0)]
    label_smoothing: f64,
    /// Comma-separated weights, one per ID class in ascending class order.
    #[arg(long, value_delimiter = ',')]
    class_weights: Option<Vec<f64>>,
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Defaults to the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Run directories, or parents whose `seed-*` children hold `metrics.csv`.
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = match config_file::expand(std::env::args_os().collect()) {
        Ok(args) => args,
        Err(e) => return fail(&e),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
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
        Command::GenSynthetic(a) => gen_synthetic(a),
        Command::BuildTemporal(a) => build_temporal(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Report(a) => report::run(&a.runs, &a.out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(match e.kind() {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numerical => 3,
    })
}

fn gen_synthetic(a: GenArgs) -> rsgnn::Result<()> {
    let graph = generate_sbm(&SbmConfig {
        num_classes: a.classes,
        nodes_per_class: a.nodes_per_class,
        p_in: a.p_in,
        p_out: a.p_out,
        feature_dim: a.feature_dim,
        feature_shift: a.feature_shift,
        seed: a.seed,
    })?;
    write_graph_dir(&graph, &a.out)?;
    println!(
        "wrote {} nodes, {} edges to {}",
        graph.num_nodes(),
        graph.edges().len(),
        a.out.display()
    );
    Ok(())
}

fn build_temporal(a: TemporalArgs) -> rsgnn::Result<()> {
    let text = fs::read_to_string(&a.frames).map_err(|e| Error::Io {
        path: a.frames.clone(),
        source: e,
    })?;
    let frames: Vec<FrameAnnotation> = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", a.frames.display())))?;
    let graphs = build_temporal_graph(
        &frames,
        &WindowConfig {
            window_size: a.window_size,
            window_stride: a.window_stride,
            frame_step: a.frame_step,
        },
    )?;
    for (i, g) in graphs.iter().enumerate() {
        write_graph_dir(g, &a.out.join(format!("window-{i:04}")))?;
    }
    println!(
        "wrote {} window graphs to {}",
        graphs.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct RunManifest {
    tool_version: &'static str,
    data: PathBuf,
    config: TrainConfig,
    seeds: Vec<u64>,
    runs: Vec<PathBuf>,
    seconds: Vec<f64>,
}

fn train_config(a: &TrainArgs) -> TrainConfig {
    let defaults = TrainConfig::default();
    TrainConfig {
        model: a.model,
        epochs: a.epochs,
        warmup_epochs: a.warmup_epochs,
        lr: a.lr.unwrap_or(defaults.lr),
        hidden: a.hidden,
        dropout: a.dropout,
        seed: a.seed,
        ood_classes: a.ood_classes.clone(),
        budget: a.budget,
        max_card: a.max_card,
        loss: LossConfig {
            alpha: a.alpha,
            beta: a.beta,
            norm_penalty: a.norm_penalty,
            label_smoothing: a.label_smoothing,
            class_weights: a.class_weights.clone(),
        },
        use_full_power_set: a.full_power_set,
        optimizer: a.optimizer.unwrap_or(defaults.optimizer),
    }
}

fn run_dir(out: &Path, count: usize, seed: u64) -> PathBuf {
    if count == 1 {
        out.to_path_buf()
    } else {
        out.join(format!("seed-{seed}"))
    }
}

fn train_cmd(a: TrainArgs) -> rsgnn::Result<()> {
    if a.count == 0 {
        return Err(Error::InvalidArgument("--count must be at least 1".into()));
    }
    let base = train_config(&a);
    base.validate()?;
    let graph = read_graph_dir(&a.data)?;
    let seeds: Vec<u64> = (0..a.count as u64).map(|i| a.seed + i).collect();

    let results: Vec<rsgnn::Result<f64>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let cfg = TrainConfig {
                    seed,
                    ..base.clone()
                };
                let dir = run_dir(&a.out, a.count, seed);
                let graph = &graph;
                scope.spawn(move || {
                    let start = Instant::now();
                    let (state, trace) = train(&cfg, graph)?;
                    save_run(
                        &dir,
                        &RunConfig::resolve(&cfg, &state, graph),
                        &state,
                        &trace,
                    )?;
                    let last = trace.last().map_or(f64::NAN, |r| r.train_loss);
                    println!(
                        "{}: {} epochs, final loss {last:.6}, best val acc {}",
                        dir.display(),
                        trace.len(),
                        state
                            .best_val_acc
                            .map_or("n/a".into(), |v| format!("{v:.4}"))
                    );
                    Ok(start.elapsed().as_secs_f64())
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    });
    let seconds = results.into_iter().collect::<rsgnn::Result<Vec<f64>>>()?;

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        data: a.data.clone(),
        config: base,
        runs: seeds.iter().map(|&s| run_dir(&a.out, a.count, s)).collect(),
        seeds,
        seconds,
    };
    let path = a.out.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(&path, json + "\n").map_err(|e| Error::Io { path, source: e })
}

fn eval_cmd(a: EvalArgs) -> rsgnn::Result<()> {
    let run = load_run(&a.run)?;
    let graph = read_graph_dir(&a.data)?;
    let report = run.evaluate(&graph)?;
    let out = a.out.unwrap_or_else(|| a.run.clone());
    fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    for (name, text) in [
        ("metrics.json", report.to_json()),
        ("metrics.csv", report.to_csv()),
        ("reliability.csv", report.reliability_csv()),
    ] {
        let path = out.join(name);
        fs::write(&path, text).map_err(|e| Error::Io { path, source: e })?;
    }
    let m = &report.id_metrics;
    println!(
        "accuracy {:.4}  ece {:.4}  nll {:.4}  brier {:.4}",
        m.accuracy, m.ece, m.nll, m.brier
    );
    for (score, r) in &report.ood_detection {
        let show = |v: Option<f64>| v.map_or("n/a".into(), |x| format!("{x:.4}"));
        println!(
            "{score:<13} auroc {}  auprc {}  fpr95 {}",
            show(r.auroc),
            show(r.auprc),
            show(r.fpr95)
        );
    }
    Ok(())
}
