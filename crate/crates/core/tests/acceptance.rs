//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints exactly one pass/fail line; exits non-zero if any fails.

mod oracle;

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use vpp_core::agent::{build_centralized, solve_sa, Agent};
use vpp_core::chain::{
    replay, ContractState, Genesis, Ledger, LogRecord, NodeId, Tokens, Transaction, Transfer, TxKind,
};
use vpp_core::coordinator::{
    dual_step, run_algorithm1, AlgoConfig, CoordError, DualState, RoundResult, RunOutcome, Transport,
};
use vpp_core::io::gen_synthetic;
use vpp_core::model::{
    check_feasibility, cost_breakdown, max_trade_mismatch, ConstraintId, Mode, Tariff, UserId, UserProfile, Violation,
};
use vpp_core::qp::{kkt_residuals, solve_qp, QpSettings, QpStatus};
use vpp_core::simnet::{NetConfig, SimNet};

const OPERATOR_MINT: i64 = 1_000_000;
const USER_MINT: i64 = 10_000;
const AUTHORITIES: u32 = 5;

/// Forwards to the simulated network and checks aux antisymmetry after
/// every dual update.
struct Checked<'a> {
    inner: &'a mut SimNet,
    rounds: usize,
    /// Largest `|aux[u,v][t] + aux[v,u][t]|` seen.
    worst: f64,
}

impl Transport for Checked<'_> {
    fn run_round(&mut self, agents: &mut [Agent], state: &DualState) -> Result<RoundResult, CoordError> {
        let r = self.inner.run_round(agents, state)?;
        for ((u, v), a) in &r.state.aux {
            for (x, y) in a.iter().zip(&r.state.aux[&(*v, *u)]) {
                self.worst = self.worst.max((x + y).abs());
            }
        }
        self.rounds += 1;
        Ok(r)
    }
}

struct CoRun {
    outcome: RunOutcome,
    co_total: BTreeMap<UserId, f64>,
    rewards: f64,
    violations: Vec<(UserId, Violation)>,
    mismatch: f64,
    antisym: f64,
    rounds: usize,
    settlement: Vec<Transfer>,
    ledger: Ledger,
    elapsed: Duration,
}

fn run_co(profiles: &[UserProfile], tariff: &Tariff, algo: &AlgoConfig, net: NetConfig) -> CoRun {
    let ids: Vec<UserId> = profiles.iter().map(|p| p.id).collect();
    let genesis = Genesis::new(
        &ids,
        profiles[0].horizon().slots(),
        algo.rho,
        AUTHORITIES,
        Tokens::whole(OPERATOR_MINT),
        Tokens::whole(USER_MINT),
    );
    let start = Instant::now();
    let mut sim = SimNet::new(Ledger::new(genesis).expect("genesis"), net).expect("network");
    let mut t = Checked {
        inner: &mut sim,
        rounds: 0,
        worst: 0.0,
    };
    let outcome = run_algorithm1(profiles, tariff, algo, &mut t).expect("decentralized run");
    let (antisym, rounds) = (t.worst, t.rounds);
    let settlement = if outcome.converged {
        sim.ledger_mut()
            .settle(&outcome.schedules, tariff, NodeId::Operator)
            .expect("settlement")
    } else {
        Vec::new()
    };
    let elapsed = start.elapsed();

    let mut co_total = BTreeMap::new();
    let mut rewards = 0.0;
    let mut violations = Vec::new();
    for p in profiles {
        let s = &outcome.schedules[&p.id];
        let c = cost_breakdown(s, p, tariff, Mode::Cooperative).expect("cost");
        co_total.insert(p.id, c.total);
        rewards += c.rewards();
        violations.extend(
            check_feasibility(s, p, tariff, Mode::Cooperative, 1e-6)
                .violations
                .into_iter()
                .map(|v| (p.id, v)),
        );
    }
    CoRun {
        mismatch: max_trade_mismatch(&outcome.schedules),
        outcome,
        co_total,
        rewards,
        violations,
        antisym,
        rounds,
        settlement,
        ledger: sim.into_ledger(),
        elapsed,
    }
}

fn sa_totals(profiles: &[UserProfile], tariff: &Tariff, qp: &QpSettings) -> BTreeMap<UserId, f64> {
    profiles
        .iter()
        .map(|p| {
            let (s, _) = solve_sa(p, tariff, qp).expect("standalone solve");
            (
                p.id,
                cost_breakdown(&s, p, tariff, Mode::Standalone).expect("cost").total,
            )
        })
        .collect()
}

fn centralized(profiles: &[UserProfile], tariff: &Tariff, algo: &AlgoConfig) -> f64 {
    let (qp, _) = build_centralized(profiles, tariff, algo.trade_bound).expect("centralized problem");
    let sol = solve_qp(&qp, &algo.qp).expect("centralized solve");
    assert_eq!(sol.status, QpStatus::Optimal);
    sol.objective
}

struct Case {
    name: String,
    profiles: Vec<UserProfile>,
    algo: AlgoConfig,
    sa: BTreeMap<UserId, f64>,
    oracle: Option<f64>,
    run: CoRun,
}

fn build_case(name: String, seed: u64, users: usize, algo: Option<AlgoConfig>, with_oracle: bool) -> Case {
    let sc = gen_synthetic(seed, users, 1);
    let profiles = sc.day(0, None);
    let algo = algo.unwrap_or(sc.algo);
    let sa = sa_totals(&profiles, &sc.tariff, &algo.qp);
    let oracle = with_oracle.then(|| centralized(&profiles, &sc.tariff, &algo));
    let run = run_co(&profiles, &sc.tariff, &algo, sc.net);
    Case {
        name,
        profiles,
        algo,
        sa,
        oracle,
        run,
    }
}

type Verdict = Result<String, String>;

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-3)
}

fn oracle_equivalence(small: &[Case]) -> Verdict {
    let mut worst_gap: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    for c in small {
        if !c.run.outcome.converged {
            return Err(format!(
                "{} did not converge in {} iterations",
                c.name, c.run.outcome.iterations
            ));
        }
        let co: f64 = c.run.co_total.values().sum();
        let gap = rel_gap(co, c.oracle.expect("oracle"));
        if gap > 1e-3 {
            return Err(format!("{}: relative gap {gap:.3e}", c.name));
        }
        if c.run.elapsed > Duration::from_secs(60) {
            return Err(format!("{} took {:.1?}", c.name, c.run.elapsed));
        }
        worst_gap = worst_gap.max(gap);
        slowest = slowest.max(c.run.elapsed);
    }
    Ok(format!(
        "{} scenarios, worst relative gap {worst_gap:.2e}, slowest run {:.1?}",
        small.len(),
        slowest
    ))
}

fn cost_dominance(all: &[&Case], big: &Case) -> Verdict {
    for c in all {
        let sa: f64 = c.sa.values().sum();
        let co: f64 = c.run.co_total.values().sum();
        let scale = c.sa.values().map(|x| x.abs()).sum::<f64>().max(1.0);
        if co > sa + 1e-6 * scale {
            return Err(format!("{}: co {co:.6} > sa {sa:.6}", c.name));
        }
    }
    let sa: f64 = big.sa.values().sum();
    let co: f64 = big.run.co_total.values().sum();
    let reduction = 100.0 * (sa - co) / sa.abs();
    if reduction < 5.0 {
        return Err(format!("{}: aggregate reduction {reduction:.2}% < 5%", big.name));
    }
    Ok(format!(
        "co <= sa on {} scenarios; {}: {sa:.3} -> {co:.3}, reduction {reduction:.2}%",
        all.len(),
        big.name
    ))
}

fn convergence_budget(big: &Case) -> Verdict {
    let o = &big.run.outcome;
    let msg = format!(
        "{}: {} iterations (rho {}, eps {:e}/{:e}, {:.1?})",
        big.name, o.iterations, big.algo.rho, big.algo.eps1, big.algo.eps2, big.run.elapsed
    );
    if o.converged && o.iterations <= 1000 {
        Ok(msg)
    } else {
        Err(format!("{msg}, converged={}", o.converged))
    }
}

fn trade_consistency(all: &[&Case]) -> Verdict {
    let (mut mismatch, mut antisym, mut rounds) = (0.0f64, 0.0f64, 0);
    for c in all {
        if c.run.outcome.converged && c.run.mismatch > 1e-4 {
            return Err(format!("{}: trade mismatch {:.3e}", c.name, c.run.mismatch));
        }
        if c.run.antisym > 1e-12 {
            return Err(format!("{}: aux antisymmetry off by {:.3e}", c.name, c.run.antisym));
        }
        mismatch = mismatch.max(c.run.mismatch);
        antisym = antisym.max(c.run.antisym);
        rounds += c.run.rounds;
    }
    Ok(format!(
        "max mismatch {mismatch:.2e} kWh; aux antisymmetry {antisym:e} over {rounds} dual updates"
    ))
}

fn feasibility(all: &[&Case]) -> Verdict {
    let mut checked = 0;
    for c in all {
        if !c.run.outcome.converged {
            continue;
        }
        if let Some((u, v)) = c.run.violations.first() {
            return Err(format!("{}: user {u} violates {:?}", c.name, v));
        }
        checked += c.profiles.len();
    }
    Ok(format!(
        "{checked} schedules clean across {} constraint families",
        ConstraintId::ALL.len()
    ))
}

fn qp_soundness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let settings = QpSettings::default();
    let (mut worst_rel, mut worst_kkt) = (0.0f64, 0.0f64);
    for case in 0..200 {
        let inst = oracle::random_instance(&mut rng);
        let want = oracle::brute_force(&inst);
        let sol = solve_qp(&inst.problem, &settings).map_err(|e| format!("case {case}: {e}"))?;
        if sol.status != QpStatus::Optimal {
            return Err(format!("case {case}: status {:?}", sol.status));
        }
        let rel = (sol.objective - want).abs() / want.abs().max(1.0);
        let r = kkt_residuals(&inst.problem, &sol).map_err(|e| format!("case {case}: {e}"))?;
        let kkt = r.primal.max(r.dual).max(r.comp);
        if rel > 1e-6 || kkt > 1e-8 {
            return Err(format!("case {case}: relative error {rel:.2e}, kkt {kkt:.2e}"));
        }
        worst_rel = worst_rel.max(rel);
        worst_kkt = worst_kkt.max(kkt);
    }
    Ok(format!(
        "200 QPs, worst relative error {worst_rel:.2e}, worst KKT residual {worst_kkt:.2e}"
    ))
}

fn log_records(l: &Ledger) -> Vec<LogRecord> {
    let mut bytes = Vec::new();
    vpp_core::chain::write_log(l, &mut bytes).expect("write log");
    vpp_core::chain::read_log(bytes.as_slice()).expect("read log")
}

fn random_pair_values(rng: &mut ChaCha8Rng, users: &[UserId], slots: usize, spread: f64) -> Vec<Vec<f64>> {
    (0..users.len() * (users.len() - 1))
        .map(|_| (0..slots).map(|_| rng.gen_range(-spread..spread)).collect())
        .collect()
}

fn ledger_determinism(all: &[&Case]) -> Verdict {
    let mut blocks = 0;
    for c in all {
        let records = log_records(&c.run.ledger);
        let replayed = replay(&records)
            .map_err(|e| format!("{}: {e}", c.name))?
            .ok_or_else(|| format!("{}: empty log", c.name))?;
        let live = c.run.ledger.state();
        if replayed.state.state_root() != live.state_root() {
            return Err(format!("{}: replayed state root differs", c.name));
        }
        blocks += c.run.ledger.blocks().len();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0xd0a1);
    let mut rounds = 0;
    while rounds < 1000 {
        let n = rng.gen_range(2..=5u32);
        let slots = rng.gen_range(1..=4usize);
        let rho = rng.gen_range(0.05..20.0);
        let ids: Vec<UserId> = (1..=n).map(UserId).collect();
        let mut contract = ContractState::new(&ids, slots, rho, BTreeMap::new()).map_err(|e| e.to_string())?;
        let mut pure = contract.dual_state();
        for _ in 0..10 {
            let values = random_pair_values(&mut rng, &ids, slots, 5.0);
            let mut it = values.into_iter();
            for &u in &ids {
                let trades: BTreeMap<UserId, Vec<f64>> = ids
                    .iter()
                    .filter(|v| **v != u)
                    .map(|v| (*v, it.next().unwrap()))
                    .collect();
                contract.set_trading(u, &trades).map_err(|e| e.to_string())?;
            }
            let trades = contract.trades.clone();
            contract.compute_dual().map_err(|e| e.to_string())?;
            dual_step(&mut pure, &trades, 0.0, 0.0).map_err(|e| e.to_string())?;
            let bits =
                |m: &BTreeMap<_, Vec<f64>>| -> Vec<u64> { m.values().flatten().map(|x: &f64| x.to_bits()).collect() };
            if bits(&contract.aux) != bits(&pure.aux) || bits(&contract.mult) != bits(&pure.mult) {
                return Err(format!("round {rounds}: contract and pure dual step differ"));
            }
            rounds += 1;
        }
    }
    Ok(format!(
        "{} logs replayed ({blocks} blocks, every root matched); {rounds} random rounds bit-identical",
        all.len()
    ))
}

fn settlement_conservation(all: &[&Case]) -> Verdict {
    let mut settled = 0;
    let mut worst: f64 = 0.0;
    for c in all {
        if !c.run.outcome.converged {
            continue;
        }
        let mut outflow = Tokens::ZERO;
        for t in &c.run.settlement {
            match (t.from, t.to) {
                (NodeId::User(_), NodeId::User(_)) => {}
                (NodeId::Operator, NodeId::User(_)) => outflow.0 += t.amount.0,
                (from, to) => return Err(format!("{}: unexpected transfer {from} -> {to}", c.name)),
            }
        }
        // whatever users gained beyond the operator's payout moved between them
        let state = c.run.ledger.state();
        let ledger_outflow = Tokens::whole(OPERATOR_MINT).0 - state.balance(NodeId::Operator).0;
        let user_gain: i128 = c
            .profiles
            .iter()
            .map(|p| state.balance(NodeId::User(p.id)).0 - Tokens::whole(USER_MINT).0)
            .sum();
        let signed_p2p = user_gain - ledger_outflow;
        if signed_p2p != 0 {
            return Err(format!("{}: signed P2P sum {signed_p2p} (1e-18 units)", c.name));
        }
        if ledger_outflow != outflow.0 {
            return Err(format!("{}: operator balance and transfers disagree", c.name));
        }
        let err = (Tokens(ledger_outflow).to_f64() - c.run.rewards).abs();
        if err > 1e-9 {
            return Err(format!("{}: operator outflow off rewards by {err:.3e}", c.name));
        }
        worst = worst.max(err);
        settled += 1;
    }
    Ok(format!(
        "{settled} settlements: signed P2P sum exactly 0, outflow vs rewards within {worst:.1e}"
    ))
}

/// Leaf paths of a JSON value; map keys under `trades` collapse to `*`,
/// array elements to `[]`.
fn leaf_paths(v: &Value, path: String, out: &mut BTreeSet<String>) {
    match v {
        Value::Object(m) => {
            let collapse = path.ends_with(".trades");
            for (k, x) in m {
                let key = if collapse { "*" } else { k.as_str() };
                let p = if path.is_empty() {
                    key.to_string()
                } else {
                    format!("{path}.{key}")
                };
                leaf_paths(x, p, out);
            }
        }
        Value::Array(a) if !a.is_empty() => {
            for x in a {
                leaf_paths(x, format!("{path}[]"), out);
            }
        }
        Value::String(s) => {
            out.insert(format!("{path}={s}"));
        }
        _ => {
            out.insert(path);
        }
    }
}

fn node_paths(prefix: &str) -> Vec<String> {
    vec![
        format!("{prefix}.User"),
        format!("{prefix}.Authority"),
        format!("{prefix}=Operator"),
    ]
}

fn privacy_boundary(all: &[&Case]) -> Verdict {
    let mut allowed: BTreeSet<String> = ["nonce", "hash[]", "kind=ComputeDual"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    allowed.extend(node_paths("sender"));
    allowed.extend(["kind.Trading.user", "kind.Trading.trades.*[]"].map(String::from));
    allowed.extend(
        ["user", "e_fit[]", "e_dr[]", "e_as[]"]
            .iter()
            .map(|f| format!("kind.NetworkService.{f}")),
    );
    allowed.extend(node_paths("kind.TokenTransfer.from"));
    allowed.extend(node_paths("kind.TokenTransfer.to"));
    allowed.insert("kind.TokenTransfer.amount".into());

    let mut seen = BTreeSet::new();
    let mut kinds = BTreeSet::new();
    let mut txs = 0;
    for c in all {
        for b in c.run.ledger.blocks() {
            for tx in &b.txs {
                check_sender(tx).map_err(|e| format!("{}: {e}", c.name))?;
                kinds.insert(tx.kind.name());
                let v = serde_json::to_value(tx).map_err(|e| e.to_string())?;
                leaf_paths(&v, String::new(), &mut seen);
                txs += 1;
            }
        }
    }
    let unexpected: Vec<&String> = seen.difference(&allowed).collect();
    if !unexpected.is_empty() {
        return Err(format!("fields outside the boundary: {unexpected:?}"));
    }
    if kinds.len() != 4 {
        return Err(format!("only saw kinds {kinds:?}; enumeration incomplete"));
    }
    Ok(format!(
        "{txs} transactions, {} distinct payload fields, all trades/services/transfers",
        seen.len()
    ))
}

/// Households only ever send their own trades, service quantities and
/// payments; the dual computation comes from an authority.
fn check_sender(tx: &Transaction) -> Result<(), String> {
    let ok = match (&tx.kind, tx.sender) {
        (TxKind::Trading { user, .. }, NodeId::User(s)) | (TxKind::NetworkService { user, .. }, NodeId::User(s)) => {
            *user == s
        }
        (TxKind::TokenTransfer { from, .. }, s) => *from == s,
        (TxKind::ComputeDual, NodeId::Authority(_)) => true,
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("{} sent {}", tx.sender, tx.kind.name()))
    }
}

fn main() -> ExitCode {
    let started = Instant::now();
    let small: Vec<Case> = (0..20u64)
        .map(|i| {
            build_case(
                format!("synthetic seed {}", 100 + i),
                100 + i,
                2 + (i % 2) as usize,
                None,
                true,
            )
        })
        .collect();
    let strict = AlgoConfig {
        rho: 1.0,
        eps1: 1e-6,
        eps2: 1e-6,
        max_iter: 1000,
        ..gen_synthetic(1, 10, 1).algo
    };
    let big = build_case("10-user synthetic seed 1".into(), 1, 10, Some(strict), false);
    let all: Vec<&Case> = small.iter().chain(std::iter::once(&big)).collect();

    let results: Vec<(&str, Verdict)> = vec![
        ("oracle equivalence", oracle_equivalence(&small)),
        ("cost dominance", cost_dominance(&all, &big)),
        ("convergence budget", convergence_budget(&big)),
        ("trade consistency", trade_consistency(&all)),
        ("feasibility", feasibility(&all)),
        ("qp solver soundness", qp_soundness()),
        ("ledger determinism", ledger_determinism(&all)),
        ("settlement conservation", settlement_conservation(&all)),
        ("privacy boundary", privacy_boundary(&all)),
    ];
    let mut failed = 0;
    for (i, (name, v)) in results.iter().enumerate() {
        match v {
            Ok(msg) => println!("criterion {} {name}: PASS ({msg})", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({msg})", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1?}",
        results.len() - failed,
        started.elapsed()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
