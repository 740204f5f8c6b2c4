use std::collections::BTreeMap;

use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use vpp_bench::community;
use vpp_core::agent::{default_trade_bound, solve_sa, Agent, DualSlice};
use vpp_core::chain::{Genesis, Ledger, NodeId, Tokens, TxKind};
use vpp_core::coordinator::{dual_step, DualState, PairMap};
use vpp_core::model::UserId;
use vpp_core::qp::QpSettings;

fn standalone(c: &mut Criterion) {
    let (profiles, tariff) = community(2);
    let qp = QpSettings::default();
    c.bench_function("standalone household solve", |b| {
        b.iter(|| solve_sa(black_box(&profiles[0]), &tariff, &qp).unwrap())
    });
}

fn primal(c: &mut Criterion) {
    let (profiles, tariff) = community(4);
    let peers: Vec<UserId> = profiles[1..].iter().map(|p| p.id).collect();
    let bound = default_trade_bound(&profiles);
    let dual = DualSlice::zeros(&peers, 24, 1.0);
    let mut agent = Agent::new(profiles[0].clone(), &tariff, &peers, 1.0, bound, QpSettings::default()).unwrap();
    agent.solve_primal(&dual).unwrap();
    c.bench_function("warm primal solve, 3 peers", |b| {
        b.iter(|| agent.solve_primal(black_box(&dual)).unwrap())
    });
}

fn pair_values(state: &DualState, scale: f64) -> PairMap {
    state
        .aux
        .keys()
        .map(|&(u, v)| {
            (
                (u, v),
                (0..24)
                    .map(|t| scale * ((u.0 * 31 + v.0 * 7 + t) as f64).sin())
                    .collect(),
            )
        })
        .collect()
}

fn dual(c: &mut Criterion) {
    let ids: Vec<UserId> = (1..=10).map(UserId).collect();
    let state = DualState::new(&ids, 24, 1.0).unwrap();
    let trades = pair_values(&state, 2.0);
    c.bench_function("dual step, 10 users", |b| {
        b.iter_batched(
            || state.clone(),
            |mut s| dual_step(&mut s, black_box(&trades), 1e-6, 1e-6).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn block(c: &mut Criterion) {
    let ids: Vec<UserId> = (1..=10).map(UserId).collect();
    let genesis = Genesis::new(&ids, 24, 1.0, 5, Tokens::whole(1_000_000), Tokens::whole(10_000));
    let trades = pair_values(&DualState::new(&ids, 24, 1.0).unwrap(), 2.0);
    let round = |ledger: &mut Ledger| {
        for &u in &ids {
            let mine: BTreeMap<UserId, Vec<f64>> = trades
                .iter()
                .filter(|((a, _), _)| *a == u)
                .map(|((_, v), x)| (*v, x.clone()))
                .collect();
            ledger
                .submit(NodeId::User(u), TxKind::Trading { user: u, trades: mine })
                .unwrap();
        }
        let proposer = ledger.scheduled_proposer();
        ledger.submit(proposer, TxKind::ComputeDual).unwrap();
        ledger.produce_scheduled().unwrap()
    };
    c.bench_function("trading round block, 10 users", |b| {
        b.iter_batched(
            || Ledger::new(genesis.clone()).unwrap(),
            |mut l| round(&mut l),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, standalone, primal, dual, block);
criterion_main!(benches);
