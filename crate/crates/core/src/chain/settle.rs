use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ledger::execute;
use super::{ChainError, Ledger, NodeId, Tokens, Transaction, TxKind};
use crate::model::{Schedule, Tariff, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub from: NodeId,
    pub to: NodeId,
    pub amount: Tokens,
}

/// Token transfers realising one day's P2P payments and service rewards.
///
/// Per unordered pair the buyer pays the seller `pi_p2p * sum_t max(p, 0)`
/// net of the reverse direction; the operator then pays every user its FIT,
/// DR and AS rewards. Zero amounts are skipped.
pub fn settlement_transfers(
    schedules: &BTreeMap<UserId, Schedule>,
    tariff: &Tariff,
    operator: NodeId,
) -> Result<Vec<Transfer>, ChainError> {
    let mut out = Vec::new();
    let bought = |u: &UserId, v: &UserId| -> f64 {
        schedules[u]
            .trades
            .get(v)
            .map(|p| p.iter().map(|x| x.max(0.0)).sum())
            .unwrap_or(0.0)
    };
    for u in schedules.keys() {
        for v in schedules.keys().filter(|v| *v > u) {
            let net = tariff.pi_p2p * (bought(u, v) - bought(v, u));
            let amount = Tokens::from_f64(net.abs())?;
            if amount.0 == 0 {
                continue;
            }
            let (from, to) = if net > 0.0 { (*u, *v) } else { (*v, *u) };
            out.push(Transfer {
                from: NodeId::User(from),
                to: NodeId::User(to),
                amount,
            });
        }
    }
    for (u, s) in schedules {
        if s.e_fit.len() != tariff.pi_dr.len()
            || s.e_dr.len() != tariff.pi_dr.len()
            || s.e_as.len() != tariff.pi_as.len()
        {
            return Err(ChainError::Settlement(format!(
                "schedule of {u} does not match the tariff horizon"
            )));
        }
        let fit = tariff.pi_fit * s.e_fit.iter().sum::<f64>();
        let dr: f64 = tariff.pi_dr.iter().zip(&s.e_dr).map(|(p, e)| p * e).sum();
        let as_: f64 = tariff.pi_as.iter().zip(&s.e_as).map(|(p, e)| p * e).sum();
        let reward = fit + dr + as_;
        // quantities within solver tolerance of zero may come out slightly negative
        if reward < -1e-6 {
            return Err(ChainError::Settlement(format!("negative reward {reward} for {u}")));
        }
        let amount = Tokens::from_f64(reward.max(0.0))?;
        if amount.0 > 0 {
            out.push(Transfer {
                from: operator,
                to: NodeId::User(*u),
                amount,
            });
        }
    }
    Ok(out)
}

impl Ledger {
    /// Records each user's service quantities, then executes the settlement
    /// transfers in one block. Everything pending is dry-run first; if any
    /// transaction would fail nothing is submitted.
    pub fn settle(
        &mut self,
        schedules: &BTreeMap<UserId, Schedule>,
        tariff: &Tariff,
        operator: NodeId,
    ) -> Result<Vec<Transfer>, ChainError> {
        let transfers = settlement_transfers(schedules, tariff, operator)?;
        let mut nonces = BTreeMap::new();
        let mut next = |n: NodeId, ledger: &Ledger| {
            let e = nonces.entry(n).or_insert_with(|| ledger.next_nonce(n));
            *e += 1;
            *e - 1
        };
        let mut txs = Vec::new();
        for (u, s) in schedules {
            let n = NodeId::User(*u);
            let kind = TxKind::NetworkService {
                user: *u,
                e_fit: s.e_fit.clone(),
                e_dr: s.e_dr.clone(),
                e_as: s.e_as.clone(),
            };
            txs.push(Transaction::new(n, next(n, self), kind));
        }
        for t in &transfers {
            let kind = TxKind::TokenTransfer {
                from: t.from,
                to: t.to,
                amount: t.amount,
            };
            txs.push(Transaction::new(t.from, next(t.from, self), kind));
        }

        let mut dry = (*self.state()).clone();
        let mut all = self.pending();
        all.extend(txs.iter().cloned());
        all.sort_by_key(|t| (t.sender, t.nonce));
        for (tx, r) in all.iter().zip(execute(&mut dry, &all)) {
            if let super::Receipt::Failed(e) = r {
                return Err(ChainError::Settlement(format!(
                    "aborted, {} tx {} would fail: {e}",
                    tx.sender, tx.nonce
                )));
            }
        }
        for tx in txs {
            self.submit_tx(tx)?;
        }
        self.produce_scheduled()?;
        Ok(transfers)
    }
}
