//! Discrete-event harness between agents and the ledger.
//!
//! One iteration of the decentralized loop is one simulated round: every
//! agent receives its dual slice over a link with random latency, solves,
//! and sends back a `Trading` transaction. Once the last one lands a
//! committee node submits `ComputeDual` and the block is produced. Time is
//! counted in ticks, never wall-clock, so a seed fixes the whole trace.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, DualSlice};
use crate::chain::{Digest, Ledger, NodeId, Receipt, TxKind};
use crate::coordinator::{CoordError, DualState, RoundResult, Transport};
use crate::model::UserId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Latency {
    Fixed(u64),
    /// Uniform over `lo..=hi` ticks.
    Uniform {
        lo: u64,
        hi: u64,
    },
}

impl Latency {
    pub fn max(&self) -> u64 {
        match *self {
            Latency::Fixed(t) => t,
            Latency::Uniform { hi, .. } => hi,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        match *self {
            Latency::Fixed(t) => t,
            Latency::Uniform { lo, hi } => rng.gen_range(lo..=hi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub latency: Latency,
    /// Ticks after the start of a round by which every trade must arrive.
    pub timeout: u64,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            latency: Latency::Uniform { lo: 1, hi: 5 },
            timeout: 100,
            seed: 0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), String> {
        if let Latency::Uniform { lo, hi } = self.latency {
            if lo > hi {
                return Err(format!("latency range {lo}..={hi} is empty"));
            }
        }
        if self.timeout <= self.latency.max() {
            return Err(format!(
                "timeout ({}) must exceed the maximum latency ({})",
                self.timeout,
                self.latency.max()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    DualDelivered,
    TradeArrived,
    ComputeDual,
    BlockCommitted,
    Timeout,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::DualDelivered => "dual_delivered",
            EventKind::TradeArrived => "trade_arrived",
            EventKind::ComputeDual => "compute_dual",
            EventKind::BlockCommitted => "block_committed",
            EventKind::Timeout => "timeout",
        })
    }
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub tick: u64,
    pub kind: EventKind,
    pub node: NodeId,
    pub digest: Digest,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "tick={} kind={} node={} digest={}",
            self.tick,
            self.kind,
            self.node,
            self.digest.short()
        )
    }
}

enum Pending {
    Deliver(UserId),
    Arrive(UserId),
    Timeout,
}

/// Transport that runs every round through the simulated network and the
/// ledger contract.
#[derive(Debug)]
pub struct SimNet {
    ledger: Ledger,
    cfg: NetConfig,
    rng: ChaCha8Rng,
    tick: u64,
    delays: BTreeMap<UserId, u64>,
    events: Vec<Event>,
}

impl SimNet {
    pub fn new(ledger: Ledger, cfg: NetConfig) -> Result<Self, CoordError> {
        cfg.validate().map_err(CoordError::Transport)?;
        Ok(Self {
            ledger,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            tick: 0,
            delays: BTreeMap::new(),
            events: Vec::new(),
        })
    }

    /// Extra ticks `user` spends before answering, to model a straggler.
    pub fn with_delay(mut self, user: UserId, ticks: u64) -> Self {
        self.delays.insert(user, ticks);
        self
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn ledger_mut(&mut self) -> &mut Ledger {
        &mut self.ledger
    }

    pub fn into_ledger(self) -> Ledger {
        self.ledger
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn write_events<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in &self.events {
            writeln!(w, "{e}")?;
        }
        Ok(())
    }

    fn log(&mut self, tick: u64, kind: EventKind, node: NodeId, digest: Digest) {
        self.events.push(Event {
            tick,
            kind,
            node,
            digest,
        });
    }

    /// Runs one round against the contract's current state.
    pub fn step(&mut self, agents: &mut [Agent]) -> Result<RoundResult, CoordError> {
        let chain = |e: crate::chain::ChainError| CoordError::Transport(e.to_string());
        let state = self.ledger.state();
        let round = state.round;
        let start = self.tick;

        let slices: Vec<(UserId, DualSlice)> = agents
            .iter()
            .map(|a| Ok((a.id(), state.read_dual(a.id()).map_err(chain)?)))
            .collect::<Result<_, CoordError>>()?;

        // the solves only depend on the delivered slices, so they can run
        // up front on worker threads; the queue decides when they "finish"
        let solved: Vec<_> = agents
            .par_iter_mut()
            .zip(slices.par_iter())
            .map(|(a, (_, slice))| a.solve_primal(slice).map(|(s, _)| s))
            .collect();
        let mut schedules = BTreeMap::new();
        for ((u, _), r) in slices.iter().zip(solved) {
            let s = r.map_err(|source| CoordError::Agent { user: *u, source })?;
            schedules.insert(*u, s);
        }

        let mut queue = BinaryHeap::new();
        let mut seq = 0u64;
        // at equal ticks arrivals win over the timeout
        let mut push = |q: &mut BinaryHeap<_>, tick: u64, prio: u8, ev: Pending| {
            q.push(Reverse((tick, prio, seq)));
            seq += 1;
            (seq - 1, ev)
        };
        let mut pending: BTreeMap<u64, Pending> = BTreeMap::new();
        let deadline = start + self.cfg.timeout;
        let (id, ev) = push(&mut queue, deadline, 1, Pending::Timeout);
        pending.insert(id, ev);
        for (u, _) in &slices {
            let t = start + self.cfg.latency.sample(&mut self.rng) + self.delays.get(u).copied().unwrap_or(0);
            let (id, ev) = push(&mut queue, t, 0, Pending::Deliver(*u));
            pending.insert(id, ev);
        }

        let slice_of: BTreeMap<UserId, &DualSlice> = slices.iter().map(|(u, s)| (*u, s)).collect();
        let mut arrived = BTreeSet::new();
        let mut now = start;
        while let Some(Reverse((tick, _, id))) = queue.pop() {
            now = tick;
            match pending.remove(&id).expect("every queued event is pending") {
                Pending::Deliver(u) => {
                    self.log(
                        tick,
                        EventKind::DualDelivered,
                        NodeId::User(u),
                        Digest::of(slice_of[&u]),
                    );
                    let t = tick + self.cfg.latency.sample(&mut self.rng);
                    let (id, ev) = push(&mut queue, t, 0, Pending::Arrive(u));
                    pending.insert(id, ev);
                }
                Pending::Arrive(u) => {
                    let kind = TxKind::Trading {
                        user: u,
                        trades: schedules[&u].trades.clone(),
                    };
                    let digest = self.ledger.submit(NodeId::User(u), kind).map_err(chain)?;
                    self.log(tick, EventKind::TradeArrived, NodeId::User(u), digest);
                    arrived.insert(u);
                    if arrived.len() == slices.len() {
                        break;
                    }
                }
                Pending::Timeout => {
                    let late = slices
                        .iter()
                        .map(|(u, _)| *u)
                        .find(|u| !arrived.contains(u))
                        .expect("timeout only pending while trades are missing");
                    self.log(tick, EventKind::Timeout, NodeId::User(late), Digest::default());
                    self.tick = tick + 1;
                    return Err(CoordError::Timeout {
                        user: late,
                        round,
                        timeout: self.cfg.timeout,
                    });
                }
            }
        }

        let authority = self.ledger.scheduled_proposer();
        let digest = self.ledger.submit(authority, TxKind::ComputeDual).map_err(chain)?;
        self.log(now, EventKind::ComputeDual, authority, digest);
        let block = self.ledger.produce_block(authority).map_err(chain)?;
        self.log(now, EventKind::BlockCommitted, authority, block.state_root);
        if let Some((tx, Receipt::Failed(e))) = block
            .txs
            .iter()
            .zip(&block.receipts)
            .find(|(_, r)| matches!(r, Receipt::Failed(_)))
        {
            return Err(CoordError::Transport(format!(
                "{} from {} failed: {e}",
                tx.kind.name(),
                tx.sender
            )));
        }
        self.tick = now + 1;

        let after = self.ledger.state();
        Ok(RoundResult {
            schedules,
            trades: after.trades.clone(),
            state: after.dual_state(),
        })
    }
}

impl Transport for SimNet {
    fn run_round(&mut self, agents: &mut [Agent], state: &DualState) -> Result<RoundResult, CoordError> {
        let round = self.ledger.state().round;
        if state.iteration != round {
            return Err(CoordError::Transport(format!(
                "driver is at iteration {}, contract at round {round}",
                state.iteration
            )));
        }
        self.step(agents)
    }
}
