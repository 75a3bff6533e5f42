mod analyze;
mod config;
mod fail;
mod inputs;
mod train;

use std::path::PathBuf;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use fail::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "cortexforge",
    version,
    about = "Unsupervised feature learning with sparse autoencoder stages"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// `section.key = value` config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `section.key=value` override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a network and write a checkpoint plus objective trace.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "distributed")]
        local: bool,
        #[arg(long)]
        distributed: bool,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve one parameter shard over TCP until terminated.
    ServeParams {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        shard_id: usize,
        #[arg(long, default_value = "127.0.0.1:0")]
        listen: String,
    },
    /// Run one training replica against the given shard addresses.
    Worker {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        replica_id: usize,
        /// Comma-separated shard addresses in shard order.
        #[arg(long, value_delimiter = ',', required = true)]
        connect: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score every top-layer neuron as a threshold classifier.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        eval: EvalData,
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render top stimuli or the norm-constrained optimal stimulus.
    Visualize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        neuron: Option<usize>,
        /// `top-stimuli` or `optimal`.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        eval: EvalData,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Best single linear filter drawn from training patches.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        eval: EvalData,
        #[arg(long)]
        filters: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Retrain across receptive-field sizes or map counts.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `rf_size` or `num_maps`.
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated values.
        #[arg(long)]
        values: Option<String>,
        #[command(flatten)]
        eval: EvalData,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pretrained versus random initialization under a supervised head.
    Suphead {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic image directory.
    Synth {
        #[command(flatten)]
        common: Common,
        /// `faces`, `distractors` or `shapes`.
        #[arg(long)]
        kind: String,
        /// Image count (per class for `shapes`).
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct EvalData {
    #[arg(long)]
    pos_dir: Option<PathBuf>,
    #[arg(long)]
    neg_dir: Option<PathBuf>,
}

fn load(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load_or_default(common.config.as_deref())?;
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn set_opt<T: ToString>(cfg: &mut RunConfig, key: &str, v: Option<T>) -> CliResult<()> {
    match v {
        Some(v) => cfg.set(key, &v.to_string()),
        None => Ok(()),
    }
}

fn set_path(cfg: &mut RunConfig, key: &str, v: &Option<PathBuf>) -> CliResult<()> {
    set_opt(cfg, key, v.as_ref().map(|p| p.to_string_lossy()))
}

fn set_eval(cfg: &mut RunConfig, e: &EvalData) -> CliResult<()> {
    set_path(cfg, "eval.pos_dir", &e.pos_dir)?;
    set_path(cfg, "eval.neg_dir", &e.neg_dir)
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("CORTEXFORGE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| {
        CliError::usage(format!(
            "CORTEXFORGE_THREADS must be a non-negative integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::runtime(format!("thread pool: {e}")))
}

fn run(cmd: Cmd, stop: Arc<AtomicBool>) -> CliResult<()> {
    match cmd {
        Cmd::Train {
            common,
            local: _,
            distributed,
            steps,
            out,
        } => train::train(
            load(&common)?,
            &train::TrainArgs {
                distributed,
                steps,
                out,
            },
            stop,
        ),
        Cmd::ServeParams {
            common,
            shard_id,
            listen,
        } => train::serve_params(load(&common)?, &train::ServeArgs { shard_id, listen }, stop),
        Cmd::Worker {
            common,
            replica_id,
            connect,
            out,
        } => train::worker(
            load(&common)?,
            &train::WorkerArgs {
                replica_id,
                connect,
                out,
            },
            stop,
        ),
        Cmd::Eval {
            common,
            checkpoint,
            eval,
            ratio,
            out,
        } => {
            let mut cfg = load(&common)?;
            set_eval(&mut cfg, &eval)?;
            set_opt(&mut cfg, "eval.ratio", ratio)?;
            set_path(&mut cfg, "run.out", &out)?;
            analyze::eval(&cfg, &checkpoint)
        }
        Cmd::Visualize {
            common,
            checkpoint,
            neuron,
            mode,
            k,
            eval,
            out,
        } => {
            let mut cfg = load(&common)?;
            set_eval(&mut cfg, &eval)?;
            set_opt(&mut cfg, "visualize.neuron", neuron)?;
            set_opt(&mut cfg, "visualize.mode", mode)?;
            set_opt(&mut cfg, "visualize.k", k)?;
            set_path(&mut cfg, "run.out", &out)?;
            analyze::visualize(&cfg, &checkpoint)
        }
        Cmd::Baseline {
            common,
            eval,
            filters,
            out,
        } => {
            let mut cfg = load(&common)?;
            set_eval(&mut cfg, &eval)?;
            set_opt(&mut cfg, "eval.baseline_filters", filters)?;
            set_path(&mut cfg, "run.out", &out)?;
            analyze::baseline(&cfg)
        }
        Cmd::Sweep {
            common,
            axis,
            values,
            eval,
            out,
        } => {
            let mut cfg = load(&common)?;
            set_eval(&mut cfg, &eval)?;
            set_opt(&mut cfg, "sweep.axis", axis)?;
            set_opt(&mut cfg, "sweep.values", values)?;
            set_path(&mut cfg, "run.out", &out)?;
            analyze::sweep(&cfg)
        }
        Cmd::Suphead {
            common,
            data_dir,
            out,
        } => {
            let mut cfg = load(&common)?;
            set_path(&mut cfg, "suphead.data_dir", &data_dir)?;
            set_path(&mut cfg, "run.out", &out)?;
            analyze::suphead(&cfg)
        }
        Cmd::Synth {
            common,
            kind,
            count,
            out,
        } => {
            std::fs::create_dir_all(&out)
                .map_err(|e| CliError::data(format!("{}: {e}", out.display())))?;
            analyze::synth(&load(&common)?, &kind, count, &out)
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { fail::EXIT_USAGE } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let stop = Arc::new(AtomicBool::new(false));
    for sig in [signal_hook::consts::SIGTERM, signal_hook::consts::SIGINT] {
        if let Err(e) = signal_hook::flag::register(sig, Arc::clone(&stop)) {
            log::warn!("cannot install signal handler: {e}");
        }
    }
    let result = configure_threads().and_then(|_| run(cli.command, stop));
    if let Err(e) = result {
        log::error!("{e}");
        std::process::exit(e.code);
    }
}
