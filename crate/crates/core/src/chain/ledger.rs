use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{ChainError, ContractState, Digest, NodeId, Tokens, Transaction, TxKind};
use crate::model::UserId;

/// Initial chain configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genesis {
    pub users: Vec<UserId>,
    pub slots: usize,
    pub rho: f64,
    /// Committee in rotation order.
    pub authorities: Vec<NodeId>,
    /// Minted at genesis; the only time tokens are created.
    pub balances: BTreeMap<NodeId, Tokens>,
}

impl Genesis {
    /// `n_auth` authorities, the operator holding `operator_mint` and every
    /// user holding `user_mint`.
    pub fn new(
        users: &[UserId],
        slots: usize,
        rho: f64,
        n_auth: u32,
        operator_mint: Tokens,
        user_mint: Tokens,
    ) -> Self {
        let mut balances = BTreeMap::new();
        balances.insert(NodeId::Operator, operator_mint);
        for u in users {
            balances.insert(NodeId::User(*u), user_mint);
        }
        Self {
            users: users.to_vec(),
            slots,
            rho,
            authorities: (0..n_auth).map(NodeId::Authority).collect(),
            balances,
        }
    }

    pub fn digest(&self) -> Digest {
        Digest::of(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Membership {
    Add(NodeId),
    Remove(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoteOutcome {
    /// Takes effect at the next block.
    Applied {
        yes: usize,
        of: usize,
    },
    Rejected {
        yes: usize,
        of: usize,
    },
}

/// Outcome of one included transaction. Failed transactions are kept in the
/// block but have no effect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Receipt {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub proposer: NodeId,
    /// Committee change that took effect at this block.
    pub membership: Option<Membership>,
    pub txs: Vec<Transaction>,
    pub receipts: Vec<Receipt>,
    pub parent: Digest,
    pub state_root: Digest,
    pub balance_root: Digest,
}

impl Block {
    pub fn digest(&self) -> Digest {
        Digest::of(self)
    }

    pub fn tx_count(&self) -> usize {
        self.txs.len()
    }
}

#[derive(Debug, Default)]
struct Pool {
    txs: Vec<Transaction>,
    next_nonce: BTreeMap<NodeId, u64>,
}

/// The chain: committed blocks, committed state and the pending pool.
#[derive(Debug)]
pub struct Ledger {
    genesis: Genesis,
    state: Arc<ContractState>,
    blocks: Vec<Block>,
    committee: Vec<NodeId>,
    pending_membership: Option<Membership>,
    nonces: BTreeMap<NodeId, u64>,
    pool: Mutex<Pool>,
}

impl Ledger {
    pub fn new(genesis: Genesis) -> Result<Self, ChainError> {
        if genesis.authorities.is_empty() {
            return Err(ChainError::BadMembership);
        }
        let state = ContractState::new(&genesis.users, genesis.slots, genesis.rho, genesis.balances.clone())?;
        Ok(Self {
            committee: genesis.authorities.clone(),
            genesis,
            state: Arc::new(state),
            blocks: Vec::new(),
            pending_membership: None,
            nonces: BTreeMap::new(),
            pool: Mutex::new(Pool::default()),
        })
    }

    pub fn genesis(&self) -> &Genesis {
        &self.genesis
    }

    /// Committed state; cheap to clone and never changes under the caller.
    pub fn state(&self) -> Arc<ContractState> {
        Arc::clone(&self.state)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn committee(&self) -> &[NodeId] {
        &self.committee
    }

    /// Height of the next block; the genesis state counts as height 0.
    pub fn next_height(&self) -> u64 {
        self.blocks.len() as u64 + 1
    }

    pub fn head_digest(&self) -> Digest {
        self.blocks
            .last()
            .map(Block::digest)
            .unwrap_or_else(|| self.genesis.digest())
    }

    /// Proposer of the next block, taking any pending committee change into
    /// account.
    pub fn scheduled_proposer(&self) -> NodeId {
        let committee = match self.pending_membership {
            Some(m) => apply_membership(&self.committee, m),
            None => self.committee.clone(),
        };
        proposer_for(&committee, self.next_height())
    }

    fn known(&self, sender: NodeId) -> bool {
        match sender {
            NodeId::User(u) => self.state.users.contains(&u),
            NodeId::Authority(_) => self.committee.contains(&sender),
            NodeId::Operator => true,
        }
    }

    /// Next nonce `sender` should use, counting pending transactions.
    pub fn next_nonce(&self, sender: NodeId) -> u64 {
        let pool = self.pool.lock().expect("pool lock poisoned");
        pool.next_nonce
            .get(&sender)
            .or_else(|| self.nonces.get(&sender))
            .copied()
            .unwrap_or(0)
    }

    /// Adds a transaction to the pending pool; safe to call concurrently.
    /// Returns the tx id.
    pub fn submit_tx(&self, tx: Transaction) -> Result<Digest, ChainError> {
        if !self.known(tx.sender) {
            return Err(ChainError::UnknownSender(tx.sender));
        }
        let mut pool = self.pool.lock().expect("pool lock poisoned");
        let want = pool
            .next_nonce
            .get(&tx.sender)
            .or_else(|| self.nonces.get(&tx.sender))
            .copied()
            .unwrap_or(0);
        if tx.nonce != want {
            return Err(ChainError::BadNonce {
                sender: tx.sender,
                got: tx.nonce,
                want,
            });
        }
        pool.next_nonce.insert(tx.sender, want + 1);
        let id = tx.hash;
        pool.txs.push(tx);
        Ok(id)
    }

    /// Builds a tx with the sender's next nonce and submits it.
    pub fn submit(&self, sender: NodeId, kind: TxKind) -> Result<Digest, ChainError> {
        let tx = Transaction::new(sender, self.next_nonce(sender), kind);
        self.submit_tx(tx)
    }

    pub fn pending(&self) -> Vec<Transaction> {
        self.pool.lock().expect("pool lock poisoned").txs.clone()
    }

    /// Records a committee vote. Only current authorities' votes count; the
    /// change is applied iff strictly more than half of them vote yes, and
    /// takes effect at the next block.
    pub fn vote_membership(
        &mut self,
        proposer: NodeId,
        proposal: Membership,
        votes: &BTreeMap<NodeId, bool>,
    ) -> Result<VoteOutcome, ChainError> {
        if !self.committee.contains(&proposer) {
            return Err(ChainError::NotAuthority(proposer));
        }
        if self.pending_membership.is_some() {
            return Err(ChainError::MembershipPending);
        }
        let valid = match proposal {
            Membership::Add(n) => matches!(n, NodeId::Authority(_)) && !self.committee.contains(&n),
            Membership::Remove(n) => self.committee.contains(&n) && self.committee.len() > 1,
        };
        if !valid {
            return Err(ChainError::BadMembership);
        }
        let of = self.committee.len();
        let yes = self
            .committee
            .iter()
            .filter(|a| votes.get(a).copied().unwrap_or(false))
            .count();
        if 2 * yes > of {
            self.pending_membership = Some(proposal);
            Ok(VoteOutcome::Applied { yes, of })
        } else {
            Ok(VoteOutcome::Rejected { yes, of })
        }
    }

    /// Drains the pool in `(sender, nonce)` order into a new block.
    pub fn produce_block(&mut self, proposer: NodeId) -> Result<Block, ChainError> {
        let height = self.next_height();
        let (committee, membership) = match self.pending_membership {
            Some(m) => (apply_membership(&self.committee, m), Some(m)),
            None => (self.committee.clone(), None),
        };
        let want = proposer_for(&committee, height);
        if proposer != want {
            return Err(ChainError::WrongProposer {
                height,
                got: proposer,
                want,
            });
        }
        let mut txs = std::mem::take(&mut self.pool.lock().expect("pool lock poisoned").txs);
        txs.sort_by_key(|t| (t.sender, t.nonce));

        let mut state = (*self.state).clone();
        let receipts = execute(&mut state, &txs);
        for tx in &txs {
            self.nonces.insert(tx.sender, tx.nonce + 1);
        }
        let block = Block {
            height,
            proposer,
            membership,
            txs,
            receipts,
            parent: self.head_digest(),
            state_root: state.state_root(),
            balance_root: state.balance_root(),
        };
        self.state = Arc::new(state);
        self.committee = committee;
        self.pending_membership = None;
        self.pool.lock().expect("pool lock poisoned").next_nonce.clear();
        self.blocks.push(block.clone());
        Ok(block)
    }

    /// Produces the next block with whoever is scheduled.
    pub fn produce_scheduled(&mut self) -> Result<Block, ChainError> {
        let p = self.scheduled_proposer();
        self.produce_block(p)
    }
}

pub(crate) fn execute(state: &mut ContractState, txs: &[Transaction]) -> Vec<Receipt> {
    txs.iter()
        .map(|tx| match state.apply(tx) {
            Ok(()) => Receipt::Ok,
            Err(e) => Receipt::Failed(e.to_string()),
        })
        .collect()
}

pub(crate) fn apply_membership(committee: &[NodeId], m: Membership) -> Vec<NodeId> {
    let mut c = committee.to_vec();
    match m {
        Membership::Add(n) => c.push(n),
        Membership::Remove(n) => c.retain(|x| *x != n),
    }
    c
}

pub(crate) fn proposer_for(committee: &[NodeId], height: u64) -> NodeId {
    committee[(height % committee.len() as u64) as usize]
}
