use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ChainError, Digest, NodeId, Tokens, Transaction, TxKind};
use crate::agent::DualSlice;
use crate::coordinator::{dual_step, DualState, PairMap};
use crate::model::UserId;

/// Service quantities recorded by a `NetworkService` transaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Services {
    pub e_fit: Vec<f64>,
    pub e_dr: Vec<f64>,
    pub e_as: Vec<f64>,
}

/// Contract storage plus token balances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractState {
    pub users: BTreeSet<UserId>,
    pub slots: usize,
    /// Trades of the current round (or the last completed one).
    pub trades: PairMap,
    pub aux: PairMap,
    pub mult: PairMap,
    pub rho: f64,
    pub round: usize,
    /// Users whose trades for `round` are in.
    pub submitted: BTreeSet<UserId>,
    pub services: BTreeMap<UserId, Services>,
    pub balances: BTreeMap<NodeId, Tokens>,
}

impl ContractState {
    pub fn new(
        users: &[UserId],
        slots: usize,
        rho: f64,
        balances: BTreeMap<NodeId, Tokens>,
    ) -> Result<Self, ChainError> {
        let dual = DualState::new(users, slots, rho).map_err(ChainError::Dual)?;
        Ok(Self {
            users: users.iter().copied().collect(),
            slots,
            trades: dual.aux.clone(),
            aux: dual.aux,
            mult: dual.mult,
            rho,
            round: 0,
            submitted: BTreeSet::new(),
            services: BTreeMap::new(),
            balances,
        })
    }

    pub fn dual_state(&self) -> DualState {
        DualState {
            aux: self.aux.clone(),
            mult: self.mult.clone(),
            rho: self.rho,
            iteration: self.round,
        }
    }

    /// `read_dual`: the caller's rows of `(p', lambda)` and nothing else.
    pub fn read_dual(&self, user: UserId) -> Result<DualSlice, ChainError> {
        if !self.users.contains(&user) {
            return Err(ChainError::UnknownUser(user));
        }
        Ok(self.dual_state().slice(user))
    }

    pub fn balance(&self, account: NodeId) -> Tokens {
        self.balances.get(&account).copied().unwrap_or_default()
    }

    pub fn total_supply(&self) -> Tokens {
        Tokens(self.balances.values().map(|t| t.0).sum())
    }

    /// Digest of everything except balances.
    pub fn storage_root(&self) -> Digest {
        Digest::of(&(
            &self.users,
            self.slots,
            &self.trades,
            &self.aux,
            &self.mult,
            self.rho,
            self.round,
            &self.submitted,
            &self.services,
        ))
    }

    pub fn balance_root(&self) -> Digest {
        Digest::of(&self.balances)
    }

    pub fn state_root(&self) -> Digest {
        Digest::of(&(self.storage_root(), self.balance_root()))
    }

    /// Applies one transaction. On error the state is left untouched.
    pub fn apply(&mut self, tx: &Transaction) -> Result<(), ChainError> {
        match &tx.kind {
            TxKind::Trading { user, trades } => {
                self.check_caller(tx.sender, *user)?;
                self.set_trading(*user, trades)
            }
            TxKind::NetworkService {
                user,
                e_fit,
                e_dr,
                e_as,
            } => {
                self.check_caller(tx.sender, *user)?;
                for (name, v) in [("e_fit", e_fit), ("e_dr", e_dr), ("e_as", e_as)] {
                    if v.len() != self.slots {
                        return Err(payload(
                            *user,
                            format!("{name} has {} slots, expected {}", v.len(), self.slots),
                        ));
                    }
                }
                self.services.insert(
                    *user,
                    Services {
                        e_fit: e_fit.clone(),
                        e_dr: e_dr.clone(),
                        e_as: e_as.clone(),
                    },
                );
                Ok(())
            }
            TxKind::TokenTransfer { from, to, amount } => {
                if tx.sender != *from {
                    return Err(ChainError::UnknownSender(tx.sender));
                }
                self.transfer(*from, *to, *amount)
            }
            TxKind::ComputeDual => {
                if !matches!(tx.sender, NodeId::Authority(_)) {
                    return Err(ChainError::NotAuthority(tx.sender));
                }
                self.compute_dual()
            }
        }
    }

    fn check_caller(&self, sender: NodeId, user: UserId) -> Result<(), ChainError> {
        if !self.users.contains(&user) {
            return Err(ChainError::UnknownUser(user));
        }
        if sender != NodeId::User(user) {
            return Err(ChainError::WrongCaller { sender, user });
        }
        Ok(())
    }

    /// `set_trading`: stores the caller's trades for the current round.
    pub fn set_trading(&mut self, user: UserId, trades: &BTreeMap<UserId, Vec<f64>>) -> Result<(), ChainError> {
        if self.submitted.contains(&user) {
            return Err(ChainError::AlreadySubmitted {
                user,
                round: self.round,
            });
        }
        let peers: Vec<UserId> = self.users.iter().copied().filter(|v| *v != user).collect();
        if !trades.keys().eq(peers.iter()) {
            return Err(payload(user, "trades must name every other user exactly once".into()));
        }
        if let Some((v, p)) = trades.iter().find(|(_, p)| p.len() != self.slots) {
            return Err(payload(
                user,
                format!("trade with {v} has {} slots, expected {}", p.len(), self.slots),
            ));
        }
        if trades.values().flatten().any(|x| !x.is_finite()) {
            return Err(payload(user, "non-finite trade".into()));
        }
        for (v, p) in trades {
            self.trades.insert((user, *v), p.clone());
        }
        self.submitted.insert(user);
        Ok(())
    }

    /// `compute_dual`: the coordinator's dual step on the stored trades.
    pub fn compute_dual(&mut self) -> Result<(), ChainError> {
        let missing: Vec<UserId> = self.users.difference(&self.submitted).copied().collect();
        if !missing.is_empty() {
            return Err(ChainError::RoundIncomplete {
                round: self.round,
                missing,
            });
        }
        let mut dual = self.dual_state();
        dual_step(&mut dual, &self.trades, 0.0, 0.0).map_err(ChainError::Dual)?;
        self.aux = dual.aux;
        self.mult = dual.mult;
        self.round = dual.iteration;
        self.submitted.clear();
        Ok(())
    }

    pub fn transfer(&mut self, from: NodeId, to: NodeId, amount: Tokens) -> Result<(), ChainError> {
        if amount.0 < 0 {
            return Err(ChainError::NegativeTransfer);
        }
        let have = self.balance(from);
        if have.0 < amount.0 {
            return Err(ChainError::InsufficientBalance {
                account: from,
                have,
                need: amount,
            });
        }
        self.balances.insert(from, Tokens(have.0 - amount.0));
        let to_bal = self.balance(to);
        self.balances.insert(to, Tokens(to_bal.0 + amount.0));
        Ok(())
    }
}

fn payload(user: UserId, reason: String) -> ChainError {
    ChainError::Payload { user, reason }
}
