use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Digest, NodeId, Tokens};
use crate::model::UserId;

/// Transaction payloads. These are the only things an agent ever puts on
/// the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TxKind {
    /// Service quantities a household commits to for settlement.
    NetworkService {
        user: UserId,
        e_fit: Vec<f64>,
        e_dr: Vec<f64>,
        e_as: Vec<f64>,
    },
    /// `set_trading`: the household's trades with every peer.
    Trading {
        user: UserId,
        trades: BTreeMap<UserId, Vec<f64>>,
    },
    TokenTransfer {
        from: NodeId,
        to: NodeId,
        amount: Tokens,
    },
    /// `compute_dual`, sent by a committee node once all trades are in.
    ComputeDual,
}

impl TxKind {
    pub fn name(&self) -> &'static str {
        match self {
            TxKind::NetworkService { .. } => "network_service",
            TxKind::Trading { .. } => "trading",
            TxKind::TokenTransfer { .. } => "token_transfer",
            TxKind::ComputeDual => "compute_dual",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub sender: NodeId,
    pub nonce: u64,
    pub kind: TxKind,
    /// Content digest of `(sender, nonce, kind)`; doubles as the tx id.
    pub hash: Digest,
}

impl Transaction {
    pub fn new(sender: NodeId, nonce: u64, kind: TxKind) -> Self {
        let hash = Self::content_digest(sender, nonce, &kind);
        Self {
            sender,
            nonce,
            kind,
            hash,
        }
    }

    pub fn content_digest(sender: NodeId, nonce: u64, kind: &TxKind) -> Digest {
        Digest::of(&(sender, nonce, kind))
    }

    /// True if `hash` matches the content.
    pub fn verify(&self) -> bool {
        self.hash == Self::content_digest(self.sender, self.nonce, &self.kind)
    }
}
