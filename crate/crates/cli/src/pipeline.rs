//! Per-day runs shared by the subcommands and the acceptance suite.

use std::collections::BTreeMap;

use anyhow::{bail, Context, Result};
use vpp_core::agent::{build_centralized, decode, solve_sa};
use vpp_core::chain::{Genesis, Ledger, NodeId, Tokens, Transfer};
use vpp_core::coordinator::{run_algorithm1, AlgoConfig, RunOutcome};
use vpp_core::model::{
    battery_trajectory, check_feasibility, cost_breakdown, max_trade_mismatch, CostBreakdown, Mode, Schedule, Tariff,
    UserId, UserProfile, ViolationReport,
};
use vpp_core::qp::{solve_qp, QpSettings, QpStatus};
use vpp_core::simnet::{NetConfig, SimNet};

/// Operator float minted at genesis; settlement draws on it.
pub const OPERATOR_MINT: i64 = 1_000_000;
/// Starting balance of every household.
pub const USER_MINT: i64 = 10_000;
/// Committee size.
pub const AUTHORITIES: u32 = 5;

#[derive(Debug, Clone)]
pub struct SaDay {
    pub schedules: BTreeMap<UserId, Schedule>,
    pub costs: BTreeMap<UserId, CostBreakdown>,
    pub violations: BTreeMap<UserId, ViolationReport>,
}

impl SaDay {
    pub fn feasible(&self) -> bool {
        self.violations.values().all(ViolationReport::is_empty)
    }

    pub fn total(&self) -> f64 {
        self.costs.values().map(|c| c.total).sum()
    }
}

pub fn run_sa_day(profiles: &[UserProfile], tariff: &Tariff, qp: &QpSettings) -> Result<SaDay> {
    let mut day = SaDay {
        schedules: BTreeMap::new(),
        costs: BTreeMap::new(),
        violations: BTreeMap::new(),
    };
    for p in profiles {
        let (s, _) = solve_sa(p, tariff, qp).with_context(|| format!("standalone solve for user {}", p.id))?;
        day.costs.insert(p.id, cost_breakdown(&s, p, tariff, Mode::Standalone)?);
        day.violations
            .insert(p.id, check_feasibility(&s, p, tariff, Mode::Standalone, 1e-6));
        day.schedules.insert(p.id, s);
    }
    Ok(day)
}

#[derive(Debug)]
pub struct CoDay {
    pub outcome: RunOutcome,
    pub costs: BTreeMap<UserId, CostBreakdown>,
    pub violations: BTreeMap<UserId, ViolationReport>,
    pub max_mismatch: f64,
    /// Empty unless the run converged.
    pub settlement: Vec<Transfer>,
    pub net: SimNet,
}

impl CoDay {
    /// Converged, feasible and trade-consistent.
    pub fn ok(&self, eps1: f64) -> bool {
        self.outcome.converged
            && self.violations.values().all(ViolationReport::is_empty)
            && self.max_mismatch <= 10.0 * eps1
    }

    pub fn total(&self) -> f64 {
        self.costs.values().map(|c| c.total).sum()
    }
}

pub fn genesis_for(profiles: &[UserProfile], rho: f64) -> Genesis {
    let ids: Vec<UserId> = profiles.iter().map(|p| p.id).collect();
    Genesis::new(
        &ids,
        profiles[0].horizon().slots(),
        rho,
        AUTHORITIES,
        Tokens::whole(OPERATOR_MINT),
        Tokens::whole(USER_MINT),
    )
}

/// The decentralized loop over the simulated network and ledger, followed
/// by settlement when it converged.
pub fn run_co_day(profiles: &[UserProfile], tariff: &Tariff, algo: &AlgoConfig, net: NetConfig) -> Result<CoDay> {
    let ledger = Ledger::new(genesis_for(profiles, algo.rho))?;
    let mut sim = SimNet::new(ledger, net)?;
    let outcome = run_algorithm1(profiles, tariff, algo, &mut sim)?;
    let mut costs = BTreeMap::new();
    let mut violations = BTreeMap::new();
    for p in profiles {
        let s = &outcome.schedules[&p.id];
        costs.insert(p.id, cost_breakdown(s, p, tariff, Mode::Cooperative)?);
        violations.insert(p.id, check_feasibility(s, p, tariff, Mode::Cooperative, 1e-6));
    }
    let max_mismatch = max_trade_mismatch(&outcome.schedules);
    let settlement = if outcome.converged {
        sim.ledger_mut()
            .settle(&outcome.schedules, tariff, NodeId::Operator)
            .context("settlement")?
    } else {
        Vec::new()
    };
    Ok(CoDay {
        outcome,
        costs,
        violations,
        max_mismatch,
        settlement,
        net: sim,
    })
}

#[derive(Debug, Clone)]
pub struct OracleDay {
    pub objective: f64,
    pub schedules: BTreeMap<UserId, Schedule>,
}

/// Joint solve of all households with trades coupled exactly.
pub fn run_oracle_day(profiles: &[UserProfile], tariff: &Tariff, algo: &AlgoConfig) -> Result<OracleDay> {
    let (qp, layouts) = build_centralized(profiles, tariff, algo.trade_bound)?;
    let sol = solve_qp(&qp, &algo.qp)?;
    if sol.status != QpStatus::Optimal {
        bail!("centralized solve ended with status {:?}", sol.status);
    }
    let mut schedules = BTreeMap::new();
    for l in &layouts {
        schedules.insert(l.user, decode(&sol, l)?);
    }
    Ok(OracleDay {
        objective: sol.objective,
        schedules,
    })
}

/// `|a - b| / max(|b|, 1e-3)`.
pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-3)
}

/// End-of-day battery levels, used as the next day's initial charge.
pub fn final_battery(
    profiles: &[UserProfile],
    schedules: &BTreeMap<UserId, Schedule>,
) -> Result<BTreeMap<UserId, f64>> {
    let mut out = BTreeMap::new();
    for p in profiles {
        let s = &schedules[&p.id];
        let traj = battery_trajectory(&s.c, &s.d, &p.battery)?;
        out.insert(p.id, traj.last().copied().unwrap_or(p.battery.b_init));
    }
    Ok(out)
}
