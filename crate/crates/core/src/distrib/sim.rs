//! Deterministic discrete-event scheduler. Replicas and shards exchange
//! encoded frames over simulated links with seeded latency; each link
//! delivers in order.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::wire::{decode_message, encode_message, WireMessage};
use super::{assemble, build_replicas, initial_shards, AsyncConfig, ReplicaCore, ReplicaRow, ShardState};
use crate::error::{Error, Result};
use crate::netcore::{NetworkConfig, NetworkParams};
use crate::rng::substream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Minimum one-way link latency in ticks.
    pub latency: u64,
    /// Extra uniform latency in `0..=jitter` ticks per message.
    pub jitter: u64,
    /// Ticks one minibatch step takes on a replica.
    pub compute_cost: u64,
    /// Ticks a replica waits for fetch responses before proceeding with
    /// the parameters it already holds.
    pub fetch_timeout: u64,
    /// `(shard, ticks)`: every reply from that shard is delayed.
    pub slow_shard: Option<(usize, u64)>,
    /// `(replica, step)`: the replica dies when it reaches that step.
    pub kill: Option<(usize, usize)>,
    /// Seeds the latency draws.
    pub seed: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            latency: 1,
            jitter: 3,
            compute_cost: 10,
            fetch_timeout: 1_000,
            slow_shard: None,
            kill: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimReport {
    pub params: NetworkParams,
    pub trace: Vec<ReplicaRow>,
    pub shard_versions: Vec<u64>,
    /// Steps each replica completed.
    pub steps: Vec<usize>,
    /// PushGrads frames delivered to each shard.
    pub pushes_per_shard: Vec<usize>,
    pub fetch_timeouts: usize,
    pub killed: Vec<usize>,
    pub end_time: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Node {
    Replica(usize),
    Shard(usize),
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Deliver { from: Node, to: Node, frame: Vec<u8> },
    Ready(usize),
    FetchTimeout { replica: usize, round: u64 },
}

struct ReplicaSlot {
    core: ReplicaCore,
    waiting: BTreeSet<usize>,
    round: u64,
    fetched_step: Option<usize>,
    alive: bool,
}

struct Sim {
    now: u64,
    seq: u64,
    queue: BinaryHeap<Reverse<(u64, u64, Event)>>,
    link_clock: HashMap<(Node, Node), u64>,
    rng: ChaCha8Rng,
    opts: SimOptions,
}

impl Sim {
    fn schedule(&mut self, at: u64, ev: Event) {
        self.seq += 1;
        self.queue.push(Reverse((at, self.seq, ev)));
    }

    fn send(&mut self, at: u64, from: Node, to: Node, msg: &WireMessage) {
        let mut delay = self.opts.latency + self.rng.gen_range(0..=self.opts.jitter);
        if let (Node::Shard(s), Some((slow, extra))) = (from, self.opts.slow_shard) {
            if s == slow {
                delay += extra;
            }
        }
        let last = self.link_clock.entry((from, to)).or_insert(0);
        let deliver = (at + delay).max(*last);
        *last = deliver;
        self.schedule(deliver, Event::Deliver { from, to, frame: encode_message(msg) });
    }
}

/// Runs every replica to its step budget (or death) and drains all
/// in-flight messages before assembling the final parameters.
pub fn run_simulated(dataset: &[Tensor], net_cfg: &NetworkConfig, cfg: &AsyncConfig, opts: &SimOptions) -> Result<SimReport> {
    let (plan, cores) = build_replicas(dataset, net_cfg, cfg)?;
    let mut shards: Vec<ShardState> = initial_shards(net_cfg, cfg, &plan)?;
    let mut slots: Vec<ReplicaSlot> = cores
        .into_iter()
        .map(|core| ReplicaSlot {
            core,
            waiting: BTreeSet::new(),
            round: 0,
            fetched_step: None,
            alive: true,
        })
        .collect();
    let mut sim = Sim {
        now: 0,
        seq: 0,
        queue: BinaryHeap::new(),
        link_clock: HashMap::new(),
        rng: substream(opts.seed, "sim.latency"),
        opts: *opts,
    };
    let mut trace = Vec::new();
    let mut pushes_per_shard = vec![0usize; cfg.n_shards];
    let mut fetch_timeouts = 0;
    let mut killed = Vec::new();
    for r in 0..slots.len() {
        sim.schedule(0, Event::Ready(r));
    }

    while let Some(Reverse((at, _, ev))) = sim.queue.pop() {
        sim.now = at;
        match ev {
            Event::Ready(r) => {
                let slot = &mut slots[r];
                if !slot.alive || slot.core.done() {
                    continue;
                }
                if opts.kill == Some((r, slot.core.step())) {
                    log::warn!("replica {r} killed at step {}", slot.core.step());
                    slot.alive = false;
                    killed.push(r);
                    continue;
                }
                let step = slot.core.step();
                if slot.core.fetch_due() && slot.fetched_step != Some(step) {
                    slot.fetched_step = Some(step);
                    slot.round += 1;
                    slot.waiting = (0..slot.core.n_shards()).collect();
                    let round = slot.round;
                    let reqs: Vec<WireMessage> = (0..slot.core.n_shards()).map(|p| slot.core.fetch_request(p)).collect();
                    for (p, m) in reqs.iter().enumerate() {
                        sim.send(at, Node::Replica(r), Node::Shard(p), m);
                    }
                    sim.schedule(at + opts.fetch_timeout, Event::FetchTimeout { replica: r, round });
                    continue;
                }
                let (objective, pushes) = slot.core.compute()?;
                let done_at = at + opts.compute_cost;
                trace.push(ReplicaRow { replica: r, step, objective, time: done_at });
                for (p, m) in &pushes {
                    sim.send(done_at, Node::Replica(r), Node::Shard(*p), m);
                }
                sim.schedule(done_at, Event::Ready(r));
            }
            Event::FetchTimeout { replica, round } => {
                let slot = &mut slots[replica];
                if slot.alive && slot.round == round && !slot.waiting.is_empty() {
                    log::warn!(
                        "replica {replica}: fetch timed out waiting on shards {:?}; using last-known parameters",
                        slot.waiting
                    );
                    fetch_timeouts += 1;
                    slot.waiting.clear();
                    sim.schedule(at, Event::Ready(replica));
                }
            }
            Event::Deliver { from, to, frame } => {
                let msg = decode_message(&frame)?;
                match (to, from) {
                    (Node::Shard(p), Node::Replica(r)) => {
                        if matches!(msg, WireMessage::PushGrads { .. }) {
                            pushes_per_shard[p] += 1;
                        }
                        let reply = shards[p].handle(msg)?;
                        sim.send(at, Node::Shard(p), Node::Replica(r), &reply);
                    }
                    (Node::Replica(r), Node::Shard(p)) => {
                        let slot = &mut slots[r];
                        if !slot.alive {
                            continue;
                        }
                        if let WireMessage::ParamsResponse { version, tensors } = msg {
                            slot.core.absorb(p, version, &tensors)?;
                            if slot.waiting.remove(&p) && slot.waiting.is_empty() {
                                sim.schedule(at, Event::Ready(r));
                            }
                        }
                    }
                    _ => return Err(Error::Network("simulated message between like nodes".into())),
                }
            }
        }
    }

    let params = assemble(net_cfg, cfg.sgd.seed, &plan, &shards)?;
    Ok(SimReport {
        params,
        trace,
        shard_versions: shards.iter().map(|s| s.version).collect(),
        steps: slots.iter().map(|s| s.core.step()).collect(),
        pushes_per_shard,
        fetch_timeouts,
        killed,
        end_time: sim.now,
    })
}
