//! `train`, `serve-params` and `worker`.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use cortexforge::checkpoint::Checkpoint;
use cortexforge::distrib::{
    fetch_all, initial_shards, partition_parameters, run_async_training, run_tcp_replica,
    run_tcp_training, serve_shard, split_round_robin, ReplicaCore, ReplicaRow, TcpOptions,
};
use cortexforge::netcore::{NetworkConfig, NetworkParams};
use cortexforge::optim::{train_local_with, TraceWriter};

use crate::config::RunConfig;
use crate::fail::{net_err, CliError, CliResult};
use crate::inputs::{train_set, write_text};

pub const CHECKPOINT_NAME: &str = "checkpoint.bin";
pub const METRICS_NAME: &str = "metrics.csv";

pub struct TrainArgs {
    pub distributed: bool,
    pub steps: Option<usize>,
    pub out: Option<PathBuf>,
}

pub fn train(mut cfg: RunConfig, args: &TrainArgs, stop: Arc<AtomicBool>) -> CliResult<()> {
    if let Some(s) = args.steps {
        cfg.set("sgd.max_steps", &s.to_string())?;
    }
    if let Some(o) = &args.out {
        cfg.set("run.out", &o.to_string_lossy())?;
    }
    let net_cfg = cfg.network()?;
    let data = train_set(&cfg)?;
    let out = PathBuf::from(cfg.text("run.out"));
    let resolved = cfg.write_resolved(&out)?;
    let seed = cfg.seed();
    let started = Instant::now();
    let params = if args.distributed {
        let (params, rows, versions) = match cfg.text("async.mode") {
            "sim" => {
                let run = run_async_training(
                    &data.inputs,
                    &net_cfg,
                    &cfg.async_config(),
                    &cfg.sim_options(),
                )?;
                (run.params, run.trace, run.shard_versions)
            }
            "tcp" => {
                let run = run_tcp_training(
                    &data.inputs,
                    &net_cfg,
                    &cfg.async_config(),
                    &cfg.tcp_options(),
                )
                .map_err(net_err)?;
                (run.params, run.trace, run.shard_versions)
            }
            _ => run_processes(&cfg, &resolved, &out, &net_cfg)?,
        };
        write_replica_rows(&out.join(METRICS_NAME), &rows)?;
        log::info!("shard versions {versions:?}");
        params
    } else {
        let file = fs::File::create(out.join(METRICS_NAME))
            .map_err(|e| CliError::data(format!("{}: {e}", out.join(METRICS_NAME).display())))?;
        let mut writer = TraceWriter::new(std::io::BufWriter::new(file))?;
        let init = NetworkParams::init(net_cfg, seed)?;
        let result = train_local_with(&data.inputs, init, &cfg.sgd(), |row| {
            writer.write(row)?;
            if row.step % 100 == 0 {
                log::info!("step {}: objective {:.6}", row.step, row.objective);
            }
            if stop.load(Ordering::SeqCst) {
                return Err(cortexforge::Error::Config("interrupted".into()));
            }
            Ok(())
        });
        match result {
            Err(_) if stop.load(Ordering::SeqCst) => {
                return Err(CliError::runtime("training interrupted by signal"))
            }
            other => other?,
        }
    };
    let ck = Checkpoint {
        seed,
        params,
        whitening: data.whitening,
    };
    ck.save(&out.join(CHECKPOINT_NAME))?;
    log::info!(
        "wrote {} ({:.1}s)",
        out.join(CHECKPOINT_NAME).display(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn write_replica_rows(path: &Path, rows: &[ReplicaRow]) -> CliResult<()> {
    let mut text = String::from("replica,step,objective,time\n");
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{}\n",
            r.replica, r.step, r.objective, r.time
        ));
    }
    write_text(path, &text)
}

fn read_replica_rows(path: &Path) -> CliResult<Vec<ReplicaRow>> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let bad = || CliError::data(format!("{}: malformed trace", path.display()));
    text.lines()
        .skip(1)
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(ReplicaRow {
                replica: f[0].parse().map_err(|_| bad())?,
                step: f[1].parse().map_err(|_| bad())?,
                objective: f[2].parse().map_err(|_| bad())?,
                time: f[3].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Child processes that are terminated if the parent bails out early.
struct Children(Vec<Child>);

impl Drop for Children {
    fn drop(&mut self) {
        for c in &mut self.0 {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

fn terminate(child: &mut Child, grace: Duration) {
    #[cfg(unix)]
    unsafe {
        libc::kill(child.id() as libc::pid_t, libc::SIGTERM);
    }
    let deadline = Instant::now() + grace;
    while Instant::now() < deadline {
        if let Ok(Some(_)) = child.try_wait() {
            return;
        }
        thread::sleep(Duration::from_millis(20));
    }
    let _ = child.kill();
    let _ = child.wait();
}

/// Runs every shard and replica as a separate process of this executable.
fn run_processes(
    cfg: &RunConfig,
    resolved: &Path,
    out: &Path,
    net_cfg: &NetworkConfig,
) -> CliResult<(NetworkParams, Vec<ReplicaRow>, Vec<u64>)> {
    let exe = std::env::current_exe()
        .map_err(|e| CliError::runtime(format!("cannot locate executable: {e}")))?;
    let acfg = cfg.async_config();
    let mut shards = Children(Vec::new());
    let mut addrs = Vec::new();
    for id in 0..acfg.n_shards {
        let mut child = Command::new(&exe)
            .args([
                "serve-params",
                "--listen",
                "127.0.0.1:0",
                "--shard-id",
                &id.to_string(),
                "--config",
            ])
            .arg(resolved)
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| CliError::runtime(format!("cannot start shard {id}: {e}")))?;
        let mut line = String::new();
        BufReader::new(child.stdout.take().expect("piped"))
            .read_line(&mut line)
            .ok();
        shards.0.push(child);
        let addr = line
            .trim()
            .strip_prefix("listening ")
            .ok_or_else(|| CliError::network(format!("shard {id} did not start")))?;
        addrs.push(addr.to_string());
    }
    log::info!("shards listening on {}", addrs.join(","));
    let mut workers = Children(Vec::new());
    for id in 0..acfg.n_replicas {
        let child = Command::new(&exe)
            .args([
                "worker",
                "--replica-id",
                &id.to_string(),
                "--connect",
                &addrs.join(","),
                "--config",
            ])
            .arg(resolved)
            .arg("--out")
            .arg(out)
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| CliError::runtime(format!("cannot start replica {id}: {e}")))?;
        workers.0.push(child);
    }
    let mut rows = Vec::new();
    for (id, child) in workers.0.iter_mut().enumerate() {
        let mut connected = false;
        for line in BufReader::new(child.stdout.take().expect("piped"))
            .lines()
            .map_while(Result::ok)
        {
            connected |= line.trim() == "connected";
        }
        let status = child.wait().map_err(|e| CliError::runtime(e.to_string()))?;
        if !connected {
            return Err(CliError::network(format!(
                "replica {id} aborted at startup ({status})"
            )));
        }
        if status.success() {
            rows.extend(read_replica_rows(&out.join(format!("replica_{id}.csv")))?);
        } else {
            log::warn!("replica {id} died mid-run ({status}); continuing");
        }
    }
    workers.0.clear();
    let plan = partition_parameters(net_cfg, acfg.n_shards)?;
    let (params, versions) =
        fetch_all(&addrs, &plan, net_cfg, acfg.sgd.seed, &cfg.tcp_options()).map_err(net_err)?;
    for child in &mut shards.0 {
        terminate(child, Duration::from_secs(5));
    }
    shards.0.clear();
    Ok((params, rows, versions))
}

pub struct ServeArgs {
    pub shard_id: usize,
    pub listen: String,
}

pub fn serve_params(cfg: RunConfig, args: &ServeArgs, stop: Arc<AtomicBool>) -> CliResult<()> {
    let net_cfg = cfg.network()?;
    let acfg = cfg.async_config();
    let plan = partition_parameters(&net_cfg, acfg.n_shards)?;
    let state = initial_shards(&net_cfg, &acfg, &plan)?
        .into_iter()
        .nth(args.shard_id)
        .ok_or_else(|| {
            CliError::usage(format!(
                "shard id {} out of range (n_shards = {})",
                args.shard_id, acfg.n_shards
            ))
        })?;
    let listener = TcpListener::bind(&args.listen)
        .map_err(|e| CliError::network(format!("cannot listen on {}: {e}", args.listen)))?;
    let addr = listener
        .local_addr()
        .map_err(|e| CliError::network(e.to_string()))?;
    let mut stdout = std::io::stdout();
    writeln!(stdout, "listening {addr}")
        .and_then(|_| stdout.flush())
        .ok();
    log::info!(
        "shard {} serving {} tensors on {addr}",
        args.shard_id,
        state.values.len()
    );
    let last = serve_shard(listener, state, stop).map_err(net_err)?;
    log::info!(
        "shard {} stopped at version {}",
        args.shard_id,
        last.version
    );
    Ok(())
}

pub struct WorkerArgs {
    pub replica_id: usize,
    pub connect: Vec<String>,
    pub out: Option<PathBuf>,
}

fn probe_shards(addrs: &[String], opts: &TcpOptions) -> CliResult<()> {
    for addr in addrs {
        let mut delay = opts.backoff;
        let mut attempt = 1;
        loop {
            match TcpStream::connect(addr) {
                Ok(_) => break,
                Err(e) if attempt >= opts.connect_attempts => {
                    return Err(CliError::network(format!(
                        "shard at {addr} unreachable: {e}"
                    )))
                }
                Err(_) => {
                    thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
            }
        }
    }
    Ok(())
}

pub fn worker(cfg: RunConfig, args: &WorkerArgs, stop: Arc<AtomicBool>) -> CliResult<()> {
    let net_cfg = cfg.network()?;
    let acfg = cfg.async_config();
    acfg.validate()?;
    if args.replica_id >= acfg.n_replicas {
        return Err(CliError::usage(format!(
            "replica id {} out of range (n_replicas = {})",
            args.replica_id, acfg.n_replicas
        )));
    }
    if args.connect.len() != acfg.n_shards {
        return Err(CliError::usage(format!(
            "{} shard addresses given, config has n_shards = {}",
            args.connect.len(),
            acfg.n_shards
        )));
    }
    let data = train_set(&cfg)?;
    let portion = split_round_robin(&data.inputs, acfg.n_replicas)?.swap_remove(args.replica_id);
    let plan = Arc::new(partition_parameters(&net_cfg, acfg.n_shards)?);
    let core = ReplicaCore::new(args.replica_id, portion, &net_cfg, &acfg, plan)?;
    let opts = cfg.tcp_options();
    probe_shards(&args.connect, &opts)?;
    let mut stdout = std::io::stdout();
    writeln!(stdout, "connected")
        .and_then(|_| stdout.flush())
        .ok();
    let report = run_tcp_replica(core, &args.connect, &opts, stop).map_err(net_err)?;
    log::info!(
        "replica {}: {} steps, {} pushes, {} fetch timeouts",
        args.replica_id,
        report.steps,
        report.pushes,
        report.fetch_timeouts
    );
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(cfg.text("run.out")));
    write_replica_rows(
        &out.join(format!("replica_{}.csv", args.replica_id)),
        &report.trace,
    )
}
