use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use cortexforge::checkpoint::Checkpoint;
use cortexforge::data::ingest;
use cortexforge::distrib::partition_parameters;
use cortexforge::distrib::wire::{read_message, write_message, WireMessage};
use cortexforge::eval::{evaluate_network, Probe};
use cortexforge::netcore::{NetworkConfig, NetworkParams, StageSpec};
use cortexforge::Tensor;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cortexforge"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        for (kind, n, seed, sub) in [
            ("faces", 40, 1, "train"),
            ("faces", 30, 2, "pos"),
            ("distractors", 55, 2, "neg"),
        ] {
            let o = run(&[
                "synth",
                "--kind",
                kind,
                "--count",
                &n.to_string(),
                "--set",
                &format!("run.seed={seed}"),
                "--out",
                s(&dir.path().join(sub)),
            ]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        }
        Self { dir }
    }

    fn path(&self, sub: &str) -> PathBuf {
        self.dir.path().join(sub)
    }

    fn train(&self, out: &str, extra: &[&str]) -> Output {
        let train_dir = format!("data.train_dir={}", s(&self.path("train")));
        let out = self.path(out);
        let mut args = vec![
            "train",
            "--set",
            &train_dir,
            "--set",
            "sgd.minibatch_size=10",
            "--out",
            s(&out),
        ];
        args.extend_from_slice(extra);
        run(&args)
    }
}

fn net_cfg() -> NetworkConfig {
    let spec = StageSpec {
        rf_size: 6,
        stride: 5,
        num_maps: 4,
        pool_size: 1,
        lcn_window: 3,
        lcn_floor_c: 0.01,
        sparsity_lambda: 0.1,
        sparsity_epsilon: 0.001,
    };
    NetworkConfig::chain([16, 16, 1], &[spec]).unwrap()
}

fn bytes(p: PathBuf) -> Vec<u8> {
    fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn zero_steps_writes_the_seeded_initialization() {
    let fx = Fixture::new();
    let o = fx.train("run", &["--steps", "0", "--set", "run.seed=7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ck = Checkpoint::load(&fx.path("run/checkpoint.bin")).unwrap();
    assert_eq!(ck.seed, 7);
    assert_eq!(ck.params, NetworkParams::init(net_cfg(), 7).unwrap());
    let resolved = fs::read_to_string(fx.path("run/resolved_config.txt")).unwrap();
    assert!(resolved.contains("sgd.max_steps = 0"));
    assert!(resolved.contains("run.seed = 7"));
}

#[test]
fn training_is_deterministic_and_logs_every_step() {
    let fx = Fixture::new();
    for out in ["a", "b"] {
        assert!(fx.train(out, &["--steps", "12"]).status.success());
    }
    assert_eq!(
        bytes(fx.path("a/checkpoint.bin")),
        bytes(fx.path("b/checkpoint.bin"))
    );
    let trace = fs::read_to_string(fx.path("a/metrics.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines[0], "step,objective,wall_ms");
    assert_eq!(lines.len(), 13);
    for (i, l) in lines[1..].iter().enumerate() {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f[0], i.to_string());
        assert!(f[1].parse::<f64>().unwrap().is_finite());
    }
}

#[test]
fn single_replica_distributed_modes_match_local_bytes() {
    let fx = Fixture::new();
    assert!(fx
        .train("local", &["--local", "--steps", "15"])
        .status
        .success());
    let local = bytes(fx.path("local/checkpoint.bin"));
    for mode in ["sim", "tcp", "process"] {
        let m = format!("async.mode={mode}");
        let o = fx.train(mode, &["--distributed", "--steps", "15", "--set", &m]);
        assert!(
            o.status.success(),
            "{mode}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert_eq!(
            bytes(fx.path(&format!("{mode}/checkpoint.bin"))),
            local,
            "{mode}"
        );
    }
}

#[test]
fn multi_process_run_collects_every_replica() {
    let fx = Fixture::new();
    let o = fx.train(
        "p",
        &[
            "--distributed",
            "--steps",
            "8",
            "--set",
            "async.mode=process",
            "--set",
            "async.n_replicas=2",
            "--set",
            "async.n_shards=2",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = fs::read_to_string(fx.path("p/metrics.csv")).unwrap();
    assert!(trace.starts_with("replica,step,objective,time\n"));
    for r in 0..2 {
        let steps = trace
            .lines()
            .skip(1)
            .filter(|l| l.starts_with(&format!("{r},")))
            .count();
        assert_eq!(steps, 8, "replica {r}");
    }
    let ck = Checkpoint::load(&fx.path("p/checkpoint.bin")).unwrap();
    assert!(ck
        .params
        .stages
        .iter()
        .all(|st| st.w1_encode.is_finite() && st.w2_decode.is_finite()));
}

#[test]
fn unknown_or_malformed_config_exits_with_usage_code() {
    let dir = TempDir::new().unwrap();
    for (text, key) in [
        ("net.rf_sise = 6\n", "net.rf_sise"),
        ("net.rf_size = six\n", "net.rf_size"),
        ("sgd = 3\n", "sgd"),
    ] {
        let p = dir.path().join("c.txt");
        fs::write(&p, text).unwrap();
        let o = run(&["train", "--config", s(&p)]);
        assert_eq!(o.status.code(), Some(1), "{text}");
        assert!(String::from_utf8_lossy(&o.stderr).contains(key), "{text}");
    }
}

#[test]
fn exit_codes_follow_the_failure_class() {
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(
        run(&["train", "--set", "data.train_dir=/definitely/missing"])
            .status
            .code(),
        Some(2)
    );
    let o = bin()
        .env("CORTEXFORGE_THREADS", "many")
        .args(["train"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));

    let fx = Fixture::new();
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let dead = listener.local_addr().unwrap().to_string();
    drop(listener);
    let o = run(&[
        "worker",
        "--replica-id",
        "0",
        "--connect",
        &dead,
        "--set",
        &format!("data.train_dir={}", s(&fx.path("train"))),
        "--set",
        "sgd.minibatch_size=10",
        "--set",
        "async.connect_attempts=2",
        "--set",
        "async.backoff_ms=10",
    ]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn eval_command_matches_the_library() {
    let fx = Fixture::new();
    assert!(fx.train("run", &["--steps", "10"]).status.success());
    let o = run(&[
        "eval",
        "--checkpoint",
        s(&fx.path("run/checkpoint.bin")),
        "--pos-dir",
        s(&fx.path("pos")),
        "--neg-dir",
        s(&fx.path("neg")),
        "--out",
        s(&fx.path("ev")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(fx.path("ev/eval_report.csv")).unwrap();
    let cli: Vec<(usize, f64)> = report
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap())
        })
        .collect();

    let ck = Checkpoint::load(&fx.path("run/checkpoint.bin")).unwrap();
    let pos = ingest(&fx.path("pos"), &fx.path("pos/index.txt"), [16, 16, 1]).unwrap();
    let neg = ingest(&fx.path("neg"), &fx.path("neg/index.txt"), [16, 16, 1]).unwrap();
    let ratio = 0.35205405405405404;
    let total = cortexforge::data::max_eval_total(pos.len(), neg.len(), ratio);
    let ds = cortexforge::data::assemble_eval_set(&pos, &neg, ratio, total, 0).unwrap();
    let labels: Vec<bool> = ds.items.iter().map(|i| i.label == Some(1)).collect();
    let lib = evaluate_network(&Probe::new(&ck.params), &ds.images(), &labels, 50, 1).unwrap();
    assert_eq!(cli.len(), lib.neurons.len());
    for ((i, a), n) in cli.iter().zip(&lib.neurons) {
        assert_eq!(*i, n.neuron_index);
        assert_eq!(*a, n.accuracy);
    }
    assert!(fx
        .path(&format!("ev/hist_{}.csv", lib.best().neuron_index))
        .is_file());
}

#[test]
fn constant_network_scores_the_class_prior() {
    let fx = Fixture::new();
    let mut params = NetworkParams::init(net_cfg(), 0).unwrap();
    for st in &mut params.stages {
        st.w1_encode = Tensor::zeros(st.w1_encode.shape());
    }
    let ck_path = fx.path("zero.bin");
    Checkpoint::new(0, params).save(&ck_path).unwrap();
    let o = run(&[
        "eval",
        "--checkpoint",
        s(&ck_path),
        "--pos-dir",
        s(&fx.path("pos")),
        "--neg-dir",
        s(&fx.path("neg")),
        "--out",
        s(&fx.path("ev")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(fx.path("ev/eval_report.csv")).unwrap();
    let stdout = String::from_utf8_lossy(&o.stdout);
    let prior: f64 = stdout
        .split("all_negative=")
        .nth(1)
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    for l in report.lines().skip(1) {
        let acc: f64 = l.split(',').nth(1).unwrap().parse().unwrap();
        assert!((acc - prior).abs() < 1e-6, "{l}");
    }
}

/// Kills the child if the test panics first.
struct Reaped(Child);

impl Drop for Reaped {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn shard_server_answers_fetch_and_survives_garbage() {
    let dir = TempDir::new().unwrap();
    let mut child = Reaped(
        bin()
            .args([
                "serve-params",
                "--shard-id",
                "0",
                "--listen",
                "127.0.0.1:0",
                "--set",
                "run.seed=5",
            ])
            .current_dir(dir.path())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let mut line = String::new();
    BufReader::new(child.0.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening ")
        .expect("address line")
        .to_string();

    let mut junk = TcpStream::connect(&addr).unwrap();
    junk.write_all(&[0xff; 32]).unwrap();
    drop(junk);

    let plan = partition_parameters(&net_cfg(), 1).unwrap();
    let mut s = TcpStream::connect(&addr).unwrap();
    write_message(
        &mut s,
        &WireMessage::FetchParams {
            shard_id: 0,
            keys: plan.keys(0),
        },
    )
    .unwrap();
    match read_message(&mut s).unwrap() {
        Some(WireMessage::ParamsResponse { version, tensors }) => {
            assert_eq!(version, 0);
            let init = NetworkParams::init(net_cfg(), 5).unwrap();
            assert_eq!(tensors.len(), plan.keys(0).len());
            assert_eq!(tensors[0].tensor.data(), init.stages[0].w1_encode.data());
        }
        other => panic!("unexpected reply {other:?}"),
    }
    drop(s);
    unsafe {
        libc::kill(child.0.id() as libc::pid_t, libc::SIGTERM);
    }
    let status = child.0.wait().unwrap();
    assert_eq!(status.code(), Some(0));
}
