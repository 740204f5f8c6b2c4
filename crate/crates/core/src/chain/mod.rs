//! Simulated proof-of-authority ledger hosting the coordinator contract.
//!
//! Everything here is deterministic: blocks are a pure function of the
//! parent state and the ordered transactions, and digests are SHA-256 over
//! the bincode encoding. There are no signatures; a sender is whoever the
//! harness says it is.

mod contract;
mod ledger;
mod log;
mod settle;
mod tx;

pub use contract::{ContractState, Services};
pub use ledger::{Block, Genesis, Ledger, Membership, Receipt, VoteOutcome};
pub use log::{dump_text, read_log, replay, write_log, LogRecord, Replayed};
pub use settle::{settlement_transfers, Transfer};
pub use tx::{Transaction, TxKind};

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::coordinator::CoordError;
use crate::model::UserId;

/// A participant of the chain. Households, committee nodes and the grid
/// operator all own a token account.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeId {
    User(UserId),
    Authority(u32),
    Operator,
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::User(u) => write!(f, "user:{u}"),
            NodeId::Authority(a) => write!(f, "authority:{a}"),
            NodeId::Operator => write!(f, "operator"),
        }
    }
}

/// Token amount in units of 1e-18, so balances add and subtract exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Tokens(pub i128);

impl Tokens {
    pub const UNIT: i128 = 1_000_000_000_000_000_000;
    pub const ZERO: Tokens = Tokens(0);

    /// Rounds to the nearest unit.
    pub fn from_f64(x: f64) -> Result<Tokens, ChainError> {
        if !x.is_finite() || x.abs() > 1e20 {
            return Err(ChainError::Amount(x));
        }
        Ok(Tokens((x * Self::UNIT as f64).round() as i128))
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / Self::UNIT as f64
    }

    pub fn whole(n: i64) -> Tokens {
        Tokens(n as i128 * Self::UNIT)
    }
}

impl fmt::Display for Tokens {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let a = self.0.unsigned_abs();
        let u = Self::UNIT as u128;
        write!(f, "{sign}{}.{:018}", a / u, a % u)
    }
}

/// SHA-256 output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub fn of<T: Serialize + ?Sized>(value: &T) -> Digest {
        let bytes = bincode::serialize(value).expect("in-memory encoding cannot fail");
        Self::of_bytes(&bytes)
    }

    pub fn of_bytes(bytes: &[u8]) -> Digest {
        Digest(Sha256::digest(bytes).into())
    }

    /// First 8 bytes in hex, for logs.
    pub fn short(&self) -> String {
        self.to_string()[..16].to_string()
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("unknown sender {0}")]
    UnknownSender(NodeId),
    #[error("bad nonce from {sender}: got {got}, expected {want}")]
    BadNonce { sender: NodeId, got: u64, want: u64 },
    #[error("block {height} must be proposed by {want}, not {got}")]
    WrongProposer { height: u64, got: NodeId, want: NodeId },
    #[error("{0} is not an authority")]
    NotAuthority(NodeId),
    #[error("a membership change is already pending")]
    MembershipPending,
    #[error("membership change is a no-op or would empty the committee")]
    BadMembership,
    #[error("{sender} may not act for {user}")]
    WrongCaller { sender: NodeId, user: UserId },
    #[error("user {0} is not registered with the contract")]
    UnknownUser(UserId),
    #[error("round {round} incomplete: no trades from {missing:?}")]
    RoundIncomplete { round: usize, missing: Vec<UserId> },
    #[error("user {user} already submitted trades in round {round}")]
    AlreadySubmitted { user: UserId, round: usize },
    #[error("malformed payload from {user}: {reason}")]
    Payload { user: UserId, reason: String },
    #[error("{account} holds {have}, needs {need}")]
    InsufficientBalance {
        account: NodeId,
        have: Tokens,
        need: Tokens,
    },
    #[error("invalid token amount {0}")]
    Amount(f64),
    #[error("transfer amounts must be non-negative")]
    NegativeTransfer,
    #[error("dual step failed: {0}")]
    Dual(CoordError),
    #[error("log corrupted at height {height}: {reason}")]
    Corruption { height: u64, reason: String },
    #[error("i/o: {0}")]
    Io(String),
    #[error("settlement: {0}")]
    Settlement(String),
}
