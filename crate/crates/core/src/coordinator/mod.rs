//! The dual step of the decentralized loop and the iteration driver.
//!
//! Per iteration every agent solves its primal subproblem against its slice
//! of `(p', lambda)`, the trades are collected, and the coordinator computes
//! the closed-form `p'` update followed by the multiplier update. Where the
//! dual step runs is up to the [`Transport`]: in-process for
//! [`LocalTransport`], inside the ledger contract for the simulated network.

mod dual;
mod trace;

pub use dual::{convergence, dual_step, dual_update, lambda_update, ConvergenceReport, DualState, PairMap};
pub use trace::{read_trace_csv, write_trace_csv, TraceRecord};

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{default_trade_bound, Agent, AgentError};
use crate::model::{cost_breakdown, Mode, Schedule, Tariff, UserId, UserProfile};
use crate::qp::QpSettings;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoordError {
    #[error("no trades reported for pair ({0}, {1})")]
    MissingPair(UserId, UserId),
    #[error("trades reported for unknown pair ({0}, {1})")]
    UnexpectedPair(UserId, UserId),
    #[error("trade/multiplier key sets differ")]
    KeyMismatch,
    #[error("vector from user {user} has {got} slots, expected {want}")]
    Length { user: UserId, got: usize, want: usize },
    #[error("rho must be positive and finite, got {0}")]
    InvalidRho(f64),
    #[error("need at least 2 users, got {0}")]
    TooFewUsers(usize),
    #[error("user {0} appears twice")]
    DuplicateUser(UserId),
    #[error("agent {user} failed: {source}")]
    Agent { user: UserId, source: AgentError },
    #[error("round {round} aborted: no trades from {user} within {timeout} ticks")]
    Timeout { user: UserId, round: usize, timeout: u64 },
    #[error("transport: {0}")]
    Transport(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    pub rho: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub max_iter: usize,
    /// Trade box `|p| <= bound`; `None` uses the largest fuse limit.
    pub trade_bound: Option<f64>,
    pub qp: QpSettings,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            eps1: 1e-6,
            eps2: 1e-6,
            max_iter: 2000,
            trade_bound: None,
            qp: QpSettings::default(),
        }
    }
}

/// What one iteration produced.
#[derive(Debug, Clone)]
pub struct RoundResult {
    /// Each agent's full schedule. Stays with the harness; only the trades
    /// are part of the protocol.
    pub schedules: BTreeMap<UserId, Schedule>,
    pub trades: PairMap,
    /// Dual state after the dual step.
    pub state: DualState,
}

/// Carries one iteration: distribute dual slices, run the agents, collect
/// trades, apply the dual step.
pub trait Transport {
    fn run_round(&mut self, agents: &mut [Agent], state: &DualState) -> Result<RoundResult, CoordError>;
}

/// In-process transport; agents solve in parallel.
#[derive(Debug, Clone, Copy, Default)]
pub struct LocalTransport;

impl Transport for LocalTransport {
    fn run_round(&mut self, agents: &mut [Agent], state: &DualState) -> Result<RoundResult, CoordError> {
        let schedules = solve_agents(agents, state)?;
        let trades = collect_trades(&schedules);
        let mut next = state.clone();
        // thresholds are irrelevant here; the driver evaluates convergence
        dual_step(&mut next, &trades, 0.0, 0.0)?;
        Ok(RoundResult {
            schedules,
            trades,
            state: next,
        })
    }
}

/// Runs every agent's primal solve against its slice of `state`.
pub fn solve_agents(agents: &mut [Agent], state: &DualState) -> Result<BTreeMap<UserId, Schedule>, CoordError> {
    let results: Vec<_> = agents
        .par_iter_mut()
        .map(|a| {
            let id = a.id();
            let r = a.solve_primal(&state.slice(id)).map(|(s, _)| s);
            (id, r)
        })
        .collect();
    let mut out = BTreeMap::new();
    for (id, r) in results {
        let s = r.map_err(|source| CoordError::Agent { user: id, source })?;
        out.insert(id, s);
    }
    Ok(out)
}

/// `(u, v) -> p[u][v]` from each user's schedule.
pub fn collect_trades(schedules: &BTreeMap<UserId, Schedule>) -> PairMap {
    let mut out = PairMap::new();
    for (u, s) in schedules {
        for (v, p) in &s.trades {
            out.insert((*u, *v), p.clone());
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Final schedules if converged, otherwise those of the iteration with
    /// the smallest primal gap.
    pub schedules: BTreeMap<UserId, Schedule>,
    pub converged: bool,
    pub iterations: usize,
    pub report: ConvergenceReport,
    pub trace: Vec<TraceRecord>,
    pub state: DualState,
}

/// Builds one agent per profile, every agent trading with every other one.
pub fn build_agents(profiles: &[UserProfile], tariff: &Tariff, cfg: &AlgoConfig) -> Result<Vec<Agent>, CoordError> {
    if profiles.len() < 2 {
        return Err(CoordError::TooFewUsers(profiles.len()));
    }
    let mut seen = BTreeSet::new();
    for p in profiles {
        if !seen.insert(p.id) {
            return Err(CoordError::DuplicateUser(p.id));
        }
    }
    if !(cfg.rho > 0.0) || !cfg.rho.is_finite() {
        return Err(CoordError::InvalidRho(cfg.rho));
    }
    let bound = cfg.trade_bound.unwrap_or_else(|| default_trade_bound(profiles));
    profiles
        .par_iter()
        .map(|p| {
            let peers: Vec<UserId> = seen.iter().copied().filter(|v| *v != p.id).collect();
            Agent::new(p.clone(), tariff, &peers, cfg.rho, bound, cfg.qp)
                .map_err(|source| CoordError::Agent { user: p.id, source })
        })
        .collect()
}

/// The decentralized loop: iterate until both gaps are below their
/// thresholds or `max_iter` rounds have run.
pub fn run_algorithm1(
    profiles: &[UserProfile],
    tariff: &Tariff,
    cfg: &AlgoConfig,
    transport: &mut dyn Transport,
) -> Result<RunOutcome, CoordError> {
    let mut agents = build_agents(profiles, tariff, cfg)?;
    let slots = profiles[0].horizon().slots();
    let ids: Vec<UserId> = agents.iter().map(|a| a.id()).collect();
    let mut state = DualState::new(&ids, slots, cfg.rho)?;
    let by_id: BTreeMap<UserId, &UserProfile> = profiles.iter().map(|p| (p.id, p)).collect();

    let mut trace = Vec::new();
    let mut best: Option<(f64, BTreeMap<UserId, Schedule>)> = None;
    let mut last = ConvergenceReport {
        primal_gap: f64::INFINITY,
        dual_gap: f64::INFINITY,
        converged: false,
    };
    let mut last_schedules = BTreeMap::new();
    let mut iterations = 0;

    for k in 1..=cfg.max_iter {
        let round = transport.run_round(&mut agents, &state)?;
        let report = convergence(&round.state, &state.mult, &round.trades, cfg.eps1, cfg.eps2);
        let objectives = round
            .schedules
            .iter()
            .map(|(u, s)| {
                let c = cost_breakdown(s, by_id[u], tariff, Mode::Cooperative).map_err(|e| CoordError::Agent {
                    user: *u,
                    source: e.into(),
                })?;
                Ok((*u, c.total))
            })
            .collect::<Result<BTreeMap<_, _>, CoordError>>()?;
        trace.push(TraceRecord {
            k,
            primal_gap: report.primal_gap,
            dual_gap: report.dual_gap,
            objectives,
        });
        if best.as_ref().is_none_or(|(g, _)| report.primal_gap < *g) {
            best = Some((report.primal_gap, round.schedules.clone()));
        }
        state = round.state;
        last = report;
        last_schedules = round.schedules;
        iterations = k;
        if report.converged {
            break;
        }
    }

    let schedules = if last.converged {
        last_schedules
    } else {
        best.map(|(_, s)| s).unwrap_or(last_schedules)
    };
    Ok(RunOutcome {
        schedules,
        converged: last.converged,
        iterations,
        report: last,
        trace,
        state,
    })
}
