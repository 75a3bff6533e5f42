//! Socket transport: a shard server serializing all requests, and a
//! replica driver that tolerates slow or dropped shards.

use std::collections::BTreeSet;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use super::wire::{read_message, write_message, WireMessage};
use super::{assemble, build_replicas, initial_shards, AsyncConfig, PartitionPlan, ReplicaCore, ReplicaRow, ShardState};
use crate::error::{Error, Result};
use crate::netcore::{NetworkConfig, NetworkParams};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcpOptions {
    pub fetch_timeout: Duration,
    pub ack_timeout: Duration,
    pub connect_attempts: u32,
    /// First retry delay; doubles on each further attempt.
    pub backoff: Duration,
}

impl Default for TcpOptions {
    fn default() -> Self {
        Self {
            fetch_timeout: Duration::from_secs(5),
            ack_timeout: Duration::from_secs(10),
            connect_attempts: 6,
            backoff: Duration::from_millis(50),
        }
    }
}

fn serve_connection(mut stream: TcpStream, state: Arc<Mutex<ShardState>>) {
    let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
    loop {
        let msg = match read_message(&mut stream) {
            Ok(Some(m)) => m,
            Ok(None) => break,
            Err(e) => {
                log::warn!("closing connection from {peer}: {e}");
                break;
            }
        };
        let reply = state.lock().expect("shard state poisoned").handle(msg);
        match reply {
            Ok(r) => {
                if let Err(e) = write_message(&mut stream, &r) {
                    log::warn!("reply to {peer} failed: {e}");
                    break;
                }
            }
            Err(e) => {
                log::warn!("rejecting request from {peer}: {e}");
                break;
            }
        }
    }
}

/// Accepts connections until `shutdown` is set, then returns the final
/// shard state. Every request, from any connection, is handled under one
/// lock, so updates apply strictly one at a time in arrival order.
pub fn serve_shard(listener: TcpListener, state: ShardState, shutdown: Arc<AtomicBool>) -> Result<ShardState> {
    listener.set_nonblocking(true)?;
    let shared = Arc::new(Mutex::new(state));
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                stream.set_nonblocking(false)?;
                stream.set_nodelay(true)?;
                let st = shared.clone();
                thread::spawn(move || serve_connection(stream, st));
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(e.into()),
        }
    }
    let state = shared.lock().expect("shard state poisoned").clone();
    Ok(state)
}

fn resolve(addr: &str) -> Result<SocketAddr> {
    addr.to_socket_addrs()
        .map_err(|e| Error::Network(format!("{addr}: {e}")))?
        .next()
        .ok_or_else(|| Error::Network(format!("{addr}: no address")))
}

fn connect_with_retry(addr: &str, opts: &TcpOptions) -> Result<TcpStream> {
    let sock = resolve(addr)?;
    let mut delay = opts.backoff;
    let mut last = None;
    for attempt in 0..opts.connect_attempts.max(1) {
        match TcpStream::connect_timeout(&sock, Duration::from_secs(2)) {
            Ok(s) => {
                s.set_nodelay(true)?;
                return Ok(s);
            }
            Err(e) => {
                log::debug!("connect {addr} attempt {} failed: {e}", attempt + 1);
                last = Some(e);
                thread::sleep(delay);
                delay *= 2;
            }
        }
    }
    Err(Error::Network(format!(
        "cannot reach {addr}: {}",
        last.map(|e| e.to_string()).unwrap_or_default()
    )))
}

enum Inbound {
    Message(WireMessage),
    Closed,
}

struct Link {
    shard: usize,
    addr: String,
    writer: Option<TcpStream>,
    tx: Sender<(usize, Inbound)>,
}

impl Link {
    fn attach(&mut self, stream: TcpStream) -> Result<()> {
        let mut reader = stream.try_clone()?;
        let (tx, shard) = (self.tx.clone(), self.shard);
        thread::spawn(move || loop {
            match read_message(&mut reader) {
                Ok(Some(m)) => {
                    if tx.send((shard, Inbound::Message(m))).is_err() {
                        break;
                    }
                }
                _ => {
                    let _ = tx.send((shard, Inbound::Closed));
                    break;
                }
            }
        });
        self.writer = Some(stream);
        Ok(())
    }

    /// Sends `msg`, reconnecting with backoff if the connection was lost.
    fn send(&mut self, msg: &WireMessage, opts: &TcpOptions) -> bool {
        for attempt in 0..2 {
            if self.writer.is_none() {
                match connect_with_retry(&self.addr, opts).and_then(|s| self.attach(s)) {
                    Ok(()) => log::info!("reconnected to shard {} at {}", self.shard, self.addr),
                    Err(e) => {
                        log::warn!("shard {} unreachable: {e}", self.shard);
                        return false;
                    }
                }
            }
            let w = self.writer.as_mut().expect("connected above");
            match write_message(w, msg) {
                Ok(()) => return true,
                Err(e) => {
                    log::warn!("send to shard {} failed (attempt {}): {e}", self.shard, attempt + 1);
                    self.writer = None;
                }
            }
        }
        false
    }
}

#[derive(Debug, Clone)]
pub struct TcpReplicaReport {
    pub trace: Vec<ReplicaRow>,
    pub steps: usize,
    pub pushes: usize,
    pub fetch_timeouts: usize,
}

fn drain(core: &mut ReplicaCore, inbound: Inbound, shard: usize, acks: &mut [usize], links: &mut [Link]) -> Result<bool> {
    match inbound {
        Inbound::Message(WireMessage::ParamsResponse { version, tensors }) => {
            core.absorb(shard, version, &tensors)?;
            Ok(true)
        }
        Inbound::Message(WireMessage::Ack { .. }) => {
            acks[shard] = acks[shard].saturating_sub(1);
            Ok(false)
        }
        Inbound::Message(other) => {
            log::warn!("unexpected tag 0x{:02x} from shard {shard}", other.tag());
            Ok(false)
        }
        Inbound::Closed => {
            links[shard].writer = None;
            acks[shard] = 0;
            Ok(false)
        }
    }
}

/// Drives one replica against shards at `addrs` (index = shard id). Fails
/// only if a shard is unreachable at startup; later faults are retried or
/// skipped.
pub fn run_tcp_replica(mut core: ReplicaCore, addrs: &[String], opts: &TcpOptions, stop: Arc<AtomicBool>) -> Result<TcpReplicaReport> {
    if addrs.len() != core.n_shards() {
        return Err(Error::config(format!("{} shard addresses for {} shards", addrs.len(), core.n_shards())));
    }
    let (tx, rx): (Sender<(usize, Inbound)>, Receiver<(usize, Inbound)>) = mpsc::channel();
    let mut links = Vec::with_capacity(addrs.len());
    for (shard, addr) in addrs.iter().enumerate() {
        let stream = connect_with_retry(addr, opts)?;
        let mut link = Link { shard, addr: addr.clone(), writer: None, tx: tx.clone() };
        link.attach(stream)?;
        links.push(link);
    }
    drop(tx);
    let start = Instant::now();
    let mut acks = vec![0usize; links.len()];
    let mut trace = Vec::new();
    let mut fetch_timeouts = 0;
    while !core.done() {
        if stop.load(Ordering::SeqCst) {
            log::info!("replica {} stopping at step {}", core.id, core.step());
            break;
        }
        if core.fetch_due() {
            let mut waiting = BTreeSet::new();
            for shard in 0..links.len() {
                if links[shard].send(&core.fetch_request(shard), opts) {
                    waiting.insert(shard);
                }
            }
            let deadline = Instant::now() + opts.fetch_timeout;
            while !waiting.is_empty() {
                let left = deadline.saturating_duration_since(Instant::now());
                match rx.recv_timeout(left) {
                    Ok((shard, inbound)) => {
                        let closed = matches!(inbound, Inbound::Closed);
                        if drain(&mut core, inbound, shard, &mut acks, &mut links)? || closed {
                            waiting.remove(&shard);
                        }
                    }
                    Err(RecvTimeoutError::Timeout) | Err(RecvTimeoutError::Disconnected) => {
                        log::warn!("replica {}: fetch timed out on shards {waiting:?}", core.id);
                        fetch_timeouts += 1;
                        break;
                    }
                }
            }
        }
        while let Ok((shard, inbound)) = rx.try_recv() {
            drain(&mut core, inbound, shard, &mut acks, &mut links)?;
        }
        let step = core.step();
        let (objective, pushes) = core.compute()?;
        trace.push(ReplicaRow {
            replica: core.id,
            step,
            objective,
            time: start.elapsed().as_millis() as u64,
        });
        for (shard, msg) in &pushes {
            if links[*shard].send(msg, opts) {
                acks[*shard] += 1;
            } else {
                log::warn!("replica {}: push to shard {shard} dropped", core.id);
            }
        }
    }
    let deadline = Instant::now() + opts.ack_timeout;
    while acks.iter().any(|&a| a > 0) {
        let left = deadline.saturating_duration_since(Instant::now());
        match rx.recv_timeout(left) {
            Ok((shard, inbound)) => {
                drain(&mut core, inbound, shard, &mut acks, &mut links)?;
            }
            Err(_) => {
                log::warn!("replica {}: gave up waiting for acks {acks:?}", core.id);
                break;
            }
        }
    }
    Ok(TcpReplicaReport {
        trace,
        steps: core.step(),
        pushes: core.pushes(),
        fetch_timeouts,
    })
}

/// Fetches every shard's current fragments and versions and reassembles the
/// full parameters.
pub fn fetch_all(addrs: &[String], plan: &PartitionPlan, net_cfg: &NetworkConfig, seed: u64, opts: &TcpOptions) -> Result<(NetworkParams, Vec<u64>)> {
    let mut params = NetworkParams::init(net_cfg.clone(), seed)?;
    let mut versions = Vec::with_capacity(addrs.len());
    for (shard, addr) in addrs.iter().enumerate() {
        let mut s = connect_with_retry(addr, opts)?;
        s.set_read_timeout(Some(opts.ack_timeout))?;
        write_message(&mut s, &WireMessage::FetchParams { shard_id: shard as u32, keys: plan.keys(shard) })?;
        match read_message(&mut s)? {
            Some(WireMessage::ParamsResponse { version, tensors }) => {
                plan.scatter(&mut params, shard, &tensors)?;
                versions.push(version);
            }
            other => return Err(Error::Network(format!("shard {shard}: unexpected reply {other:?}"))),
        }
    }
    Ok((params, versions))
}

#[derive(Debug, Clone)]
pub struct TcpRun {
    pub params: NetworkParams,
    pub trace: Vec<ReplicaRow>,
    pub shard_versions: Vec<u64>,
    pub reports: Vec<TcpReplicaReport>,
}

/// Runs shards and replicas as threads in this process, talking over
/// loopback sockets.
pub fn run_tcp_training(dataset: &[Tensor], net_cfg: &NetworkConfig, cfg: &AsyncConfig, opts: &TcpOptions) -> Result<TcpRun> {
    let (plan, cores) = build_replicas(dataset, net_cfg, cfg)?;
    let shards = initial_shards(net_cfg, cfg, &plan)?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let mut addrs = Vec::new();
    let mut servers = Vec::new();
    for s in shards {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        addrs.push(listener.local_addr()?.to_string());
        let flag = shutdown.clone();
        servers.push(thread::spawn(move || serve_shard(listener, s, flag)));
    }
    let stop = Arc::new(AtomicBool::new(false));
    let handles: Vec<_> = cores
        .into_iter()
        .map(|core| {
            let (a, st) = (addrs.clone(), stop.clone());
            let o = *opts;
            thread::spawn(move || run_tcp_replica(core, &a, &o, st))
        })
        .collect();
    let mut reports = Vec::new();
    let mut failure = None;
    for h in handles {
        match h.join() {
            Ok(Ok(r)) => reports.push(r),
            Ok(Err(e)) => {
                log::error!("replica failed: {e}");
                failure.get_or_insert(e);
            }
            Err(_) => {
                failure.get_or_insert(Error::Network("replica thread panicked".into()));
            }
        }
    }
    shutdown.store(true, Ordering::SeqCst);
    let finals = servers
        .into_iter()
        .map(|h| h.join().map_err(|_| Error::Network("shard thread panicked".into()))?)
        .collect::<Result<Vec<ShardState>>>()?;
    if let Some(e) = failure {
        return Err(e);
    }
    let params = assemble(net_cfg, cfg.sgd.seed, &plan, &finals)?;
    let trace = reports.iter().flat_map(|r| r.trace.iter().copied()).collect();
    Ok(TcpRun {
        params,
        trace,
        shard_versions: finals.iter().map(|s| s.version).collect(),
        reports,
    })
}
