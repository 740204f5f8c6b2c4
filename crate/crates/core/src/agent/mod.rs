//! Household problem builders and the per-household solver.
//!
//! Temperature and battery level are affine in the controls, so they are
//! substituted out rather than carried as state columns; their bounds become
//! inequality rows on `l_ac` and on the cumulative charge/discharge sums.

mod build;
mod layout;

pub use build::{build_centralized, build_co_primal, build_sa_problem, decode, default_trade_bound, encode};
pub use layout::{Layout, BLOCKS};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, Schedule, Tariff, UserId, UserProfile};
use crate::qp::{QpError, QpSettings, QpSolution, QpSolver, QpStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("user {0} has no trading peers")]
    NoPeers(UserId),
    #[error("user {0} cannot trade with itself")]
    SelfTrade(UserId),
    #[error("centralized problem needs at least 2 users, got {0}")]
    TooFewUsers(usize),
    #[error("user {0} appears twice")]
    DuplicateUser(UserId),
    #[error("dual slice is missing or malformed for peer {0}")]
    DualMismatch(UserId),
    #[error("dual slice uses rho = {got}, agent was built for {want}")]
    RhoMismatch { got: f64, want: f64 },
    #[error("solve for user {user} ended with status {status:?}")]
    NotOptimal { user: UserId, status: QpStatus },
}

/// One agent's view of the coordinator state: `aux[v]` is `p'[u][v]`,
/// `mult[v]` is `lambda[u][v]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSlice {
    pub aux: BTreeMap<UserId, Vec<f64>>,
    pub mult: BTreeMap<UserId, Vec<f64>>,
    pub rho: f64,
}

impl DualSlice {
    pub fn zeros(peers: &[UserId], slots: usize, rho: f64) -> Self {
        let z: BTreeMap<_, _> = peers.iter().map(|v| (*v, vec![0.0; slots])).collect();
        Self {
            aux: z.clone(),
            mult: z,
            rho,
        }
    }
}

/// Solves the standalone problem of one household.
pub fn solve_sa(p: &UserProfile, tariff: &Tariff, settings: &QpSettings) -> Result<(Schedule, QpSolution), AgentError> {
    let (qp, layout) = build_sa_problem(p, tariff)?;
    let sol = crate::qp::solve_qp(&qp, settings)?;
    Ok((decode(&sol, &layout)?, sol))
}

/// A household taking part in the decentralized loop. The QP matrices do not
/// change between iterations, so the factorized solver is kept and only the
/// linear cost is refreshed from each new dual slice.
pub struct Agent {
    profile: UserProfile,
    layout: Layout,
    base_lin: Vec<f64>,
    base_offset: f64,
    rho: f64,
    solver: QpSolver,
}

impl Agent {
    pub fn new(
        profile: UserProfile,
        tariff: &Tariff,
        peers: &[UserId],
        rho: f64,
        trade_bound: f64,
        settings: QpSettings,
    ) -> Result<Self, AgentError> {
        let zero = DualSlice::zeros(peers, profile.horizon().slots(), rho);
        let (qp, layout) = build_co_primal(&profile, tariff, peers, &zero, trade_bound)?;
        let base_lin = qp.lin.clone();
        let base_offset = qp.offset;
        let solver = QpSolver::new(qp, settings)?;
        Ok(Self {
            profile,
            layout,
            base_lin,
            base_offset,
            rho,
            solver,
        })
    }

    pub fn id(&self) -> UserId {
        self.profile.id
    }

    pub fn profile(&self) -> &UserProfile {
        &self.profile
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn peers(&self) -> &[UserId] {
        &self.layout.peers
    }

    /// Solves the primal subproblem for `dual`; `dual.rho` must equal the
    /// penalty the agent was built with.
    pub fn solve_primal(&mut self, dual: &DualSlice) -> Result<(Schedule, QpSolution), AgentError> {
        if dual.rho != self.rho {
            return Err(AgentError::RhoMismatch {
                got: dual.rho,
                want: self.rho,
            });
        }
        let (lin, offset) = build::penalty_terms(&self.base_lin, self.base_offset, &self.layout, dual)?;
        self.solver.set_lin(&lin, offset)?;
        let sol = self.solver.solve();
        let sched = decode(&sol, &self.layout)?;
        Ok((sched, sol))
    }
}
