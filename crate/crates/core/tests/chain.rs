mod common;

use std::collections::BTreeMap;

use common::*;
use proptest::prelude::*;
use vpp_core::chain::*;
use vpp_core::coordinator::{dual_update, lambda_update, DualState};
use vpp_core::model::{Horizon, Schedule, UserId};

const A: NodeId = NodeId::User(UserId(1));
const B: NodeId = NodeId::User(UserId(2));

fn genesis(users: u32, slots: usize, rho: f64) -> Genesis {
    let ids: Vec<UserId> = (1..=users).map(UserId).collect();
    Genesis::new(&ids, slots, rho, 5, Tokens::whole(1000), Tokens::whole(10))
}

fn ledger(users: u32, slots: usize) -> Ledger {
    Ledger::new(genesis(users, slots, 1.0)).unwrap()
}

fn trades_of(user: u32, users: u32, vals: &[f64]) -> TxKind {
    let trades = (1..=users)
        .filter(|v| *v != user)
        .map(|v| (UserId(v), vals.to_vec()))
        .collect();
    TxKind::Trading {
        user: UserId(user),
        trades,
    }
}

#[test]
fn nonces_and_senders() {
    let l = ledger(2, 1);
    let t0 = Transaction::new(A, 0, TxKind::ComputeDual);
    assert_eq!(l.submit_tx(t0.clone()).unwrap(), t0.hash);
    let dup = Transaction::new(A, 0, trades_of(1, 2, &[0.0]));
    assert!(matches!(l.submit_tx(dup), Err(ChainError::BadNonce { want: 1, .. })));
    let gap = Transaction::new(A, 5, TxKind::ComputeDual);
    assert!(matches!(l.submit_tx(gap), Err(ChainError::BadNonce { .. })));
    let stranger = Transaction::new(NodeId::User(UserId(9)), 0, TxKind::ComputeDual);
    assert!(matches!(l.submit_tx(stranger), Err(ChainError::UnknownSender(_))));
    assert!(matches!(
        l.submit_tx(Transaction::new(NodeId::Authority(7), 0, TxKind::ComputeDual)),
        Err(ChainError::UnknownSender(_))
    ));
}

#[test]
fn committed_nonces_carry_over_blocks() {
    let mut l = ledger(2, 1);
    l.submit(A, trades_of(1, 2, &[0.0])).unwrap();
    l.produce_scheduled().unwrap();
    assert_eq!(l.next_nonce(A), 1);
    assert!(l.submit_tx(Transaction::new(A, 0, TxKind::ComputeDual)).is_err());
    assert!(l.submit_tx(Transaction::new(A, 1, TxKind::ComputeDual)).is_ok());
}

#[test]
fn trading_tx_reaches_the_state() {
    let mut l = ledger(2, 24);
    let day: Vec<f64> = (0..24).map(|t| t as f64 / 10.0).collect();
    l.submit(A, trades_of(1, 2, &day)).unwrap();
    assert_eq!(l.state().trades[&(UserId(1), UserId(2))], vec![0.0; 24]);
    let b = l.produce_scheduled().unwrap();
    assert_eq!(b.receipts, vec![Receipt::Ok]);
    assert_eq!(l.state().trades[&(UserId(1), UserId(2))], day);
    assert!(l.state().submitted.contains(&UserId(1)));
}

#[test]
fn empty_block_keeps_the_root() {
    let mut l = ledger(2, 1);
    let before = l.state().state_root();
    let b = l.produce_scheduled().unwrap();
    assert_eq!(b.height, 1);
    assert!(b.txs.is_empty());
    assert_eq!(b.state_root, before);
    assert_eq!(b.parent, l.genesis().digest());
}

#[test]
fn transfer_round_trip_restores_balances() {
    let mut l = ledger(2, 1);
    let before = l.state().balance_root();
    let five = Tokens::whole(5);
    l.submit(
        A,
        TxKind::TokenTransfer {
            from: A,
            to: B,
            amount: five,
        },
    )
    .unwrap();
    l.submit(
        B,
        TxKind::TokenTransfer {
            from: B,
            to: A,
            amount: five,
        },
    )
    .unwrap();
    let b = l.produce_scheduled().unwrap();
    assert_eq!(b.receipts, vec![Receipt::Ok, Receipt::Ok]);
    assert_eq!(b.balance_root, before);
    assert_eq!(l.state().state_root(), ledger(2, 1).state().state_root());
}

#[test]
fn overdraft_fails_without_effect() {
    let mut l = ledger(2, 1);
    let before = l.state().state_root();
    l.submit(
        A,
        TxKind::TokenTransfer {
            from: A,
            to: B,
            amount: Tokens::whole(11),
        },
    )
    .unwrap();
    let b = l.produce_scheduled().unwrap();
    assert!(matches!(b.receipts[0], Receipt::Failed(_)));
    assert_eq!(b.state_root, before);
}

#[test]
fn same_pool_same_block() {
    let build = |order: &[u32]| {
        let mut l = ledger(3, 2);
        for u in order {
            l.submit(NodeId::User(UserId(*u)), trades_of(*u, 3, &[0.5, -0.25]))
                .unwrap();
        }
        l.submit(NodeId::Authority(1), TxKind::ComputeDual).unwrap();
        l.produce_scheduled().unwrap()
    };
    let b1 = build(&[1, 2, 3]);
    let b2 = build(&[3, 1, 2]);
    assert_eq!(b1.digest(), b2.digest());
    assert!(b1.receipts.iter().all(|r| *r == Receipt::Ok));
}

#[test]
fn proposer_rotation() {
    let mut l = ledger(2, 1);
    assert_eq!(l.scheduled_proposer(), NodeId::Authority(1));
    let err = l.produce_block(NodeId::Authority(0)).unwrap_err();
    assert!(matches!(err, ChainError::WrongProposer { height: 1, .. }));
    for h in 1..=7u64 {
        let b = l.produce_scheduled().unwrap();
        assert_eq!(b.proposer, NodeId::Authority((h % 5) as u32));
    }
}

fn votes(yes: &[u32], all: u32) -> BTreeMap<NodeId, bool> {
    (0..all).map(|a| (NodeId::Authority(a), yes.contains(&a))).collect()
}

#[test]
fn strict_majority_of_five() {
    let mut l = ledger(2, 1);
    let out = l
        .vote_membership(
            NodeId::Authority(0),
            Membership::Add(NodeId::Authority(5)),
            &votes(&[0, 1, 2], 5),
        )
        .unwrap();
    assert_eq!(out, VoteOutcome::Applied { yes: 3, of: 5 });
    assert_eq!(l.committee().len(), 5);
    let b = l.produce_scheduled().unwrap();
    assert_eq!(b.membership, Some(Membership::Add(NodeId::Authority(5))));
    assert_eq!(l.committee().len(), 6);
}

#[test]
fn half_of_four_is_not_enough() {
    let mut g = genesis(2, 1, 1.0);
    g.authorities.truncate(4);
    let mut l = Ledger::new(g).unwrap();
    let out = l
        .vote_membership(
            NodeId::Authority(0),
            Membership::Remove(NodeId::Authority(3)),
            &votes(&[0, 1], 4),
        )
        .unwrap();
    assert_eq!(out, VoteOutcome::Rejected { yes: 2, of: 4 });
    l.produce_scheduled().unwrap();
    assert_eq!(l.committee().len(), 4);
}

#[test]
fn outsiders_cannot_propose_or_vote() {
    let mut l = ledger(2, 1);
    let r = l.vote_membership(A, Membership::Add(NodeId::Authority(9)), &votes(&[0, 1, 2, 3, 4], 5));
    assert!(matches!(r, Err(ChainError::NotAuthority(_))));
    // yes votes from non-members do not count
    let mut v = votes(&[0, 1], 5);
    v.insert(NodeId::Authority(42), true);
    v.insert(A, true);
    let r = l
        .vote_membership(NodeId::Authority(1), Membership::Add(NodeId::Authority(5)), &v)
        .unwrap();
    assert_eq!(r, VoteOutcome::Rejected { yes: 2, of: 5 });
}

#[test]
fn removing_the_next_proposer_reschedules() {
    let mut l = ledger(2, 1);
    assert_eq!(l.scheduled_proposer(), NodeId::Authority(1));
    l.vote_membership(
        NodeId::Authority(0),
        Membership::Remove(NodeId::Authority(1)),
        &votes(&[0, 2, 3], 5),
    )
    .unwrap();
    // committee [0, 2, 3, 4], height 1
    assert_eq!(l.scheduled_proposer(), NodeId::Authority(2));
    assert!(l.produce_block(NodeId::Authority(1)).is_err());
    l.produce_block(NodeId::Authority(2)).unwrap();
    assert_eq!(
        l.committee(),
        &[
            NodeId::Authority(0),
            NodeId::Authority(2),
            NodeId::Authority(3),
            NodeId::Authority(4)
        ]
    );
    assert_eq!(l.produce_scheduled().unwrap().proposer, NodeId::Authority(3));
}

#[test]
fn zero_round_stays_zero() {
    let mut s = ContractState::new(&[UserId(1), UserId(2)], 3, 1.0, BTreeMap::new()).unwrap();
    for u in [1, 2] {
        let TxKind::Trading { trades, .. } = trades_of(u, 2, &[0.0; 3]) else {
            unreachable!()
        };
        s.set_trading(UserId(u), &trades).unwrap();
    }
    s.compute_dual().unwrap();
    assert_eq!(s.round, 1);
    assert!(s.aux.values().chain(s.mult.values()).flatten().all(|x| *x == 0.0));
}

#[test]
fn round_rules() {
    let mut s = ContractState::new(&[UserId(1), UserId(2), UserId(3)], 1, 1.0, BTreeMap::new()).unwrap();
    let TxKind::Trading { trades, .. } = trades_of(1, 3, &[1.0]) else {
        unreachable!()
    };
    s.set_trading(UserId(1), &trades).unwrap();
    assert_eq!(
        s.compute_dual().unwrap_err(),
        ChainError::RoundIncomplete {
            round: 0,
            missing: vec![UserId(2), UserId(3)]
        }
    );
    assert!(matches!(
        s.set_trading(UserId(1), &trades),
        Err(ChainError::AlreadySubmitted { .. })
    ));
    // user 2 may not write on behalf of user 3
    let tx = Transaction::new(NodeId::User(UserId(2)), 0, trades_of(3, 3, &[0.0]));
    assert!(matches!(s.apply(&tx), Err(ChainError::WrongCaller { .. })));
    // missing a peer
    let mut short = trades.clone();
    short.pop_first();
    assert!(matches!(
        s.set_trading(UserId(2), &short),
        Err(ChainError::Payload { .. })
    ));
    let tx = Transaction::new(NodeId::Operator, 0, TxKind::ComputeDual);
    assert!(matches!(s.apply(&tx), Err(ChainError::NotAuthority(_))));
}

#[test]
fn contract_matches_pure_dual_step_on_hand_example() {
    let mut s = ContractState::new(&[UserId(1), UserId(2)], 1, 2.0, BTreeMap::new()).unwrap();
    s.mult.insert((UserId(1), UserId(2)), vec![0.2]);
    s.mult.insert((UserId(2), UserId(1)), vec![-0.4]);
    s.set_trading(UserId(1), &[(UserId(2), vec![0.5])].into()).unwrap();
    s.set_trading(UserId(2), &[(UserId(1), vec![0.1])].into()).unwrap();
    let before = s.dual_state();
    let trades = s.trades.clone();
    s.compute_dual().unwrap();

    let aux = dual_update(&trades, &before).unwrap();
    let mut mid = before.clone();
    mid.aux = aux.clone();
    let mult = lambda_update(&mid, &aux, &trades).unwrap();
    assert_eq!(s.aux, aux);
    assert_eq!(s.mult, mult);
    assert!((s.aux[&(UserId(1), UserId(2))][0] - 0.05).abs() < 1e-15);
}

#[test]
fn read_dual_shows_only_own_rows() {
    let mut s = ContractState::new(&[UserId(1), UserId(2), UserId(3)], 1, 1.0, BTreeMap::new()).unwrap();
    for ((u, v), x) in s.aux.iter_mut() {
        x[0] = (10 * u.0 + v.0) as f64;
    }
    let slice = s.read_dual(UserId(2)).unwrap();
    let keys: Vec<_> = slice.aux.keys().copied().collect();
    assert_eq!(keys, vec![UserId(1), UserId(3)]);
    assert_eq!(slice.aux[&UserId(1)], vec![21.0]);
    assert_eq!(slice.aux[&UserId(3)], vec![23.0]);
    assert!(s.read_dual(UserId(7)).is_err());
}

proptest! {
    #[test]
    fn contract_equals_pure_functions(vals in proptest::collection::vec(-5.0f64..5.0, 24), rho in 0.05f64..20.0) {
        let ids = [UserId(1), UserId(2), UserId(3)];
        let mut s = ContractState::new(&ids, 2, rho, BTreeMap::new()).unwrap();
        let mut it = vals.iter().copied();
        for m in s.mult.values_mut() {
            *m = vec![it.next().unwrap(), it.next().unwrap()];
        }
        let before = s.dual_state();
        for u in ids {
            let trades = ids.iter().filter(|v| **v != u)
                .map(|v| (*v, vec![it.next().unwrap(), it.next().unwrap()])).collect();
            s.set_trading(u, &trades).unwrap();
        }
        let trades = s.trades.clone();
        s.compute_dual().unwrap();
        let aux = dual_update(&trades, &before).unwrap();
        let mut mid: DualState = before.clone();
        mid.aux = aux.clone();
        let mult = lambda_update(&mid, &aux, &trades).unwrap();
        for (k, v) in &aux {
            prop_assert_eq!(v.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                            s.aux[k].iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        }
        prop_assert_eq!(&s.mult, &mult);
    }
}

fn pair_schedules(p12: &[f64], h: usize) -> BTreeMap<UserId, Schedule> {
    let mut s1 = Schedule::zeros(Horizon::new(h).unwrap());
    let mut s2 = s1.clone();
    s1.trades.insert(UserId(2), p12.to_vec());
    s2.trades.insert(UserId(1), p12.iter().map(|x| -x).collect());
    [(UserId(1), s1), (UserId(2), s2)].into()
}

#[test]
fn nothing_to_settle() {
    let t = tariff(2, 1.0, 2.0, 0.5, 0.1);
    assert!(
        settlement_transfers(&pair_schedules(&[0.0, 0.0], 2), &t, NodeId::Operator)
            .unwrap()
            .is_empty()
    );
}

#[test]
fn two_kwh_at_half_price() {
    let t = tariff(2, 1.0, 2.0, 0.5, 0.1);
    // user 1 sells 2 kWh to user 2
    let tr = settlement_transfers(&pair_schedules(&[-1.5, -0.5], 2), &t, NodeId::Operator).unwrap();
    assert_eq!(
        tr,
        vec![Transfer {
            from: B,
            to: A,
            amount: Tokens::whole(1)
        }]
    );
}

#[test]
fn settlement_pays_rewards_and_conserves() {
    let h = 24;
    let t = busy_tariff(h);
    let mut sched = pair_schedules(&(0..h).map(|i| ((i as f64) * 0.7).sin()).collect::<Vec<_>>(), h);
    for (k, s) in sched.iter_mut() {
        s.e_fit = vec![0.1 * k.0 as f64; h];
        s.e_dr = vec![0.3; h];
        s.e_as = vec![0.05 * k.0 as f64; h];
    }
    let mut l = Ledger::new(genesis(2, h, 1.0)).unwrap();
    let supply = l.state().total_supply();
    let op_before = l.state().balance(NodeId::Operator);
    let transfers = l.settle(&sched, &t, NodeId::Operator).unwrap();
    let last = l.blocks().last().unwrap();
    assert!(last.receipts.iter().all(|r| *r == Receipt::Ok));
    assert_eq!(l.state().total_supply(), supply);
    assert_eq!(l.state().services[&UserId(2)].e_dr, vec![0.3; h]);

    let mut delta: BTreeMap<NodeId, i128> = BTreeMap::new();
    for t in transfers.iter().filter(|t| t.from != NodeId::Operator) {
        *delta.entry(t.from).or_default() -= t.amount.0;
        *delta.entry(t.to).or_default() += t.amount.0;
    }
    assert_eq!(delta.len(), 2);
    assert_eq!(delta.values().sum::<i128>(), 0);
    // user 1 holds the positive trades, so it is the net buyer
    let bought: f64 = sched[&UserId(1)].trades[&UserId(2)]
        .iter()
        .map(|x| x.max(0.0))
        .sum::<f64>()
        - sched[&UserId(2)].trades[&UserId(1)]
            .iter()
            .map(|x| x.max(0.0))
            .sum::<f64>();
    assert!((Tokens(-delta[&A]).to_f64() - t.pi_p2p * bought).abs() < 1e-15);
    let paid = op_before.0 - l.state().balance(NodeId::Operator).0;
    let expect: f64 = sched
        .values()
        .map(|s| {
            t.pi_fit * s.e_fit.iter().sum::<f64>()
                + t.pi_dr.iter().zip(&s.e_dr).map(|(a, b)| a * b).sum::<f64>()
                + t.pi_as.iter().zip(&s.e_as).map(|(a, b)| a * b).sum::<f64>()
        })
        .sum();
    assert!((Tokens(paid).to_f64() - expect).abs() < 1e-9);
}

#[test]
fn underfunded_operator_aborts_atomically() {
    let h = 2;
    let t = tariff(h, 1.0, 2.0, 0.5, 0.1);
    let mut sched = pair_schedules(&[1.0, 0.0], h);
    for s in sched.values_mut() {
        s.e_fit = vec![1e6; h];
    }
    let mut l = Ledger::new(genesis(2, h, 1.0)).unwrap();
    let root = l.state().state_root();
    let err = l.settle(&sched, &t, NodeId::Operator).unwrap_err();
    assert!(matches!(err, ChainError::Settlement(_)));
    assert_eq!(l.state().state_root(), root);
    assert!(l.blocks().is_empty());
    assert!(l.pending().is_empty());
}

fn scripted_chain() -> Ledger {
    let mut l = ledger(3, 2);
    for round in 0..3 {
        for u in 1..=3 {
            let x = 0.1 * (u as f64) - 0.05 * round as f64;
            l.submit(NodeId::User(UserId(u)), trades_of(u, 3, &[x, -x])).unwrap();
        }
        l.submit(l.scheduled_proposer(), TxKind::ComputeDual).unwrap();
        l.produce_scheduled().unwrap();
    }
    l.submit(
        A,
        TxKind::TokenTransfer {
            from: A,
            to: B,
            amount: Tokens(12345),
        },
    )
    .unwrap();
    l.produce_scheduled().unwrap();
    l
}

fn log_bytes(l: &Ledger) -> Vec<u8> {
    let mut buf = Vec::new();
    write_log(l, &mut buf).unwrap();
    buf
}

#[test]
fn replay_matches_live_state() {
    let l = scripted_chain();
    let records = read_log(&log_bytes(&l)[..]).unwrap();
    assert_eq!(records.len(), 5);
    let r = replay(&records).unwrap().unwrap();
    assert_eq!(r.height, 4);
    assert_eq!(r.state, *l.state());
    assert_eq!(r.state.round, 3);
    assert_eq!(r.state.state_root(), l.blocks().last().unwrap().state_root);
}

#[test]
fn replay_of_nothing() {
    assert!(replay(&[]).unwrap().is_none());
    let l = ledger(2, 1);
    let r = replay(&read_log(&log_bytes(&l)[..]).unwrap()).unwrap().unwrap();
    assert_eq!(r.state, *l.state());
    assert_eq!(r.height, 0);
}

/// Byte range of record `i` (after its length prefix).
fn record_span(bytes: &[u8], i: usize) -> std::ops::Range<usize> {
    let mut pos = 0;
    for _ in 0..i {
        let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4 + len;
    }
    let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
    pos + 4..pos + 4 + len
}

fn corruption_height(bytes: &[u8]) -> Option<u64> {
    let err = read_log(bytes).and_then(|r| replay(&r).map(|_| ()));
    match err {
        Err(ChainError::Corruption { height, .. }) => Some(height),
        _ => None,
    }
}

#[test]
fn flipped_trade_byte_is_caught_at_its_block() {
    let l = scripted_chain();
    let mut bytes = log_bytes(&l);
    let span = record_span(&bytes, 2);
    // locate the encoding of user 2's first trade value in block 2
    let x = (0.1f64 * 2.0 - 0.05).to_le_bytes();
    let at = bytes[span.clone()].windows(8).position(|w| w == x).unwrap() + span.start;
    bytes[at + 3] ^= 0x10;
    assert_eq!(corruption_height(&bytes), Some(2));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn any_flipped_byte_names_its_block(block in 1usize..5, frac in 0.0f64..1.0, bit in 0u8..8) {
        let l = scripted_chain();
        let mut bytes = log_bytes(&l);
        let span = record_span(&bytes, block);
        let at = span.start + ((span.len() as f64 * frac) as usize).min(span.len() - 1);
        bytes[at] ^= 1 << bit;
        prop_assert_eq!(corruption_height(&bytes), Some(block as u64));
    }
}

#[test]
fn dump_is_readable() {
    let l = scripted_chain();
    let mut out = Vec::new();
    dump_text(&read_log(&log_bytes(&l)[..]).unwrap(), &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("genesis digest="));
    assert_eq!(text.lines().filter(|l| l.starts_with("block ")).count(), 4);
    assert!(text.contains("compute_dual"));
    assert!(text.contains("user:1 -> user:2 0.000000000000012345"));
}

#[test]
fn token_display() {
    assert_eq!(Tokens::whole(3).to_string(), "3.000000000000000000");
    assert_eq!(Tokens(-5).to_string(), "-0.000000000000000005");
    assert_eq!(Tokens::from_f64(0.25).unwrap(), Tokens(250_000_000_000_000_000));
    assert!(Tokens::from_f64(f64::NAN).is_err());
}
