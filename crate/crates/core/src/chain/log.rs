use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::ledger::{apply_membership, execute, proposer_for};
use super::{Block, ChainError, ContractState, Genesis, Ledger, NodeId, TxKind};

/// One record of the persisted chain log: the genesis first, then every
/// block in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LogRecord {
    Genesis(Genesis),
    Block(Block),
}

/// Writes the ledger as length-prefixed (u32 little-endian) bincode records.
pub fn write_log<W: Write>(ledger: &Ledger, mut w: W) -> Result<(), ChainError> {
    let mut put = |rec: &LogRecord| -> Result<(), ChainError> {
        let bytes = bincode::serialize(rec).map_err(|e| ChainError::Io(e.to_string()))?;
        w.write_all(&(bytes.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&bytes).map_err(io)
    };
    put(&LogRecord::Genesis(ledger.genesis().clone()))?;
    for b in ledger.blocks() {
        put(&LogRecord::Block(b.clone()))?;
    }
    Ok(())
}

fn io(e: std::io::Error) -> ChainError {
    ChainError::Io(e.to_string())
}

/// Reads a log; record `i` holds height `i`.
pub fn read_log<R: Read>(mut r: R) -> Result<Vec<LogRecord>, ChainError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(io)?;
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let height = out.len() as u64;
        let bad = |reason: &str| ChainError::Corruption {
            height,
            reason: reason.to_string(),
        };
        let len_bytes: [u8; 4] = bytes
            .get(pos..pos + 4)
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| bad("truncated length prefix"))?;
        let len = u32::from_le_bytes(len_bytes) as usize;
        pos += 4;
        let body = bytes.get(pos..pos + len).ok_or_else(|| bad("truncated record"))?;
        let rec: LogRecord = bincode::deserialize(body).map_err(|e| bad(&format!("undecodable record: {e}")))?;
        pos += len;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Replayed {
    pub state: ContractState,
    pub committee: Vec<NodeId>,
    pub height: u64,
}

/// Re-executes a log from genesis, checking every digest on the way. An
/// empty log yields `None`.
pub fn replay(records: &[LogRecord]) -> Result<Option<Replayed>, ChainError> {
    let Some(first) = records.first() else {
        return Ok(None);
    };
    let corrupt = |height: u64, reason: String| ChainError::Corruption { height, reason };
    let LogRecord::Genesis(genesis) = first else {
        return Err(corrupt(0, "log does not start with a genesis record".into()));
    };
    let mut state = ContractState::new(&genesis.users, genesis.slots, genesis.rho, genesis.balances.clone())
        .map_err(|e| corrupt(0, e.to_string()))?;
    let mut committee = genesis.authorities.clone();
    if committee.is_empty() {
        return Err(corrupt(0, "empty committee".into()));
    }
    let mut parent = genesis.digest();

    for (i, rec) in records.iter().enumerate().skip(1) {
        let height = i as u64;
        let LogRecord::Block(b) = rec else {
            return Err(corrupt(height, "unexpected genesis record".into()));
        };
        if b.height != height {
            return Err(corrupt(height, format!("height field reads {}", b.height)));
        }
        if b.parent != parent {
            return Err(corrupt(height, "parent digest mismatch".into()));
        }
        if let Some(m) = b.membership {
            committee = apply_membership(&committee, m);
            if committee.is_empty() {
                return Err(corrupt(height, "empty committee".into()));
            }
        }
        if b.proposer != proposer_for(&committee, height) {
            return Err(corrupt(height, format!("unscheduled proposer {}", b.proposer)));
        }
        if let Some(tx) = b.txs.iter().find(|t| !t.verify()) {
            return Err(corrupt(
                height,
                format!("tx {} from {} fails its content digest", tx.nonce, tx.sender),
            ));
        }
        let receipts = execute(&mut state, &b.txs);
        if receipts != b.receipts {
            return Err(corrupt(height, "receipts differ".into()));
        }
        if state.state_root() != b.state_root || state.balance_root() != b.balance_root {
            return Err(corrupt(height, "state root mismatch".into()));
        }
        parent = b.digest();
    }
    Ok(Some(Replayed {
        state,
        committee,
        height: records.len() as u64 - 1,
    }))
}

/// Human-readable rendering of a log.
pub fn dump_text<W: Write>(records: &[LogRecord], mut w: W) -> std::io::Result<()> {
    for rec in records {
        match rec {
            LogRecord::Genesis(g) => {
                writeln!(w, "genesis digest={}", g.digest())?;
                let users: Vec<String> = g.users.iter().map(|u| u.to_string()).collect();
                writeln!(w, "  users=[{}] slots={} rho={}", users.join(","), g.slots, g.rho)?;
                let auth: Vec<String> = g.authorities.iter().map(|a| a.to_string()).collect();
                writeln!(w, "  authorities=[{}]", auth.join(","))?;
                for (acct, bal) in &g.balances {
                    writeln!(w, "  balance {acct} {bal}")?;
                }
            }
            LogRecord::Block(b) => {
                writeln!(
                    w,
                    "block height={} proposer={} txs={} parent={} state_root={}",
                    b.height,
                    b.proposer,
                    b.tx_count(),
                    b.parent.short(),
                    b.state_root.short()
                )?;
                if let Some(m) = b.membership {
                    writeln!(w, "  membership {m:?}")?;
                }
                for (tx, r) in b.txs.iter().zip(&b.receipts) {
                    let detail = match &tx.kind {
                        TxKind::Trading { user, trades } => format!("user={user} peers={}", trades.len()),
                        TxKind::NetworkService {
                            user,
                            e_fit,
                            e_dr,
                            e_as,
                        } => format!(
                            "user={user} fit={:.6} dr={:.6} as={:.6}",
                            e_fit.iter().sum::<f64>(),
                            e_dr.iter().sum::<f64>(),
                            e_as.iter().sum::<f64>()
                        ),
                        TxKind::TokenTransfer { from, to, amount } => format!("{from} -> {to} {amount}"),
                        TxKind::ComputeDual => String::new(),
                    };
                    let status = match r {
                        super::Receipt::Ok => "ok".to_string(),
                        super::Receipt::Failed(e) => format!("failed({e})"),
                    };
                    writeln!(
                        w,
                        "  tx {} sender={} nonce={} {} {} status={}",
                        tx.hash.short(),
                        tx.sender,
                        tx.nonce,
                        tx.kind.name(),
                        detail,
                        status
                    )?;
                }
            }
        }
    }
    Ok(())
}
