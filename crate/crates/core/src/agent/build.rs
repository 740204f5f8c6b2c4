use std::collections::BTreeMap;

use crate::model::{thermal_free_response, thermal_gain, Mode, ModelError, Schedule, Tariff, UserId, UserProfile};
use crate::qp::{QpProblem, QpSolution, QpStatus, VarTag};

use super::layout::*;
use super::{AgentError, DualSlice};

const CLAMP: f64 = 1e-10;

/// Default trade box: the largest fuse limit among the participants.
pub fn default_trade_bound(profiles: &[UserProfile]) -> f64 {
    profiles.iter().map(|p| p.fuse_limit).fold(0.0, f64::max)
}

/// Standalone problem: no trades, 9·H + 1 variables.
pub fn build_sa_problem(p: &UserProfile, tariff: &Tariff) -> Result<(QpProblem, Layout), AgentError> {
    let layout = Layout::new(p.id, p.horizon().slots(), Vec::new(), 0);
    let mut qp = QpProblem::new(layout.len());
    add_household(&mut qp, &layout, p, tariff, Mode::Standalone, 0.0)?;
    Ok((qp, layout))
}

/// Cooperative primal subproblem of one agent for a given view of the dual
/// state: the household's cost plus, per peer slot,
/// `(rho/2)(aux - p)² - mult·p`.
pub fn build_co_primal(
    p: &UserProfile,
    tariff: &Tariff,
    peers: &[UserId],
    dual: &DualSlice,
    trade_bound: f64,
) -> Result<(QpProblem, Layout), AgentError> {
    if peers.is_empty() {
        return Err(AgentError::NoPeers(p.id));
    }
    if peers.contains(&p.id) {
        return Err(AgentError::SelfTrade(p.id));
    }
    if !(dual.rho > 0.0) || !dual.rho.is_finite() {
        return Err(AgentError::Model(ModelError::Invalid {
            field: "rho".into(),
            reason: "penalty must be positive".into(),
        }));
    }
    let layout = Layout::new(p.id, p.horizon().slots(), peers.to_vec(), 0);
    let mut qp = QpProblem::new(layout.len());
    add_household(&mut qp, &layout, p, tariff, Mode::Cooperative, trade_bound)?;
    for k in 0..layout.peers.len() {
        for t in 0..layout.slots {
            let i = layout.trade(k, t);
            qp.quad.add(i, i, dual.rho);
        }
    }
    let (lin, offset) = penalty_terms(&qp.lin, qp.offset, &layout, dual)?;
    qp.lin = lin;
    qp.offset = offset;
    Ok((qp, layout))
}

/// Linear cost and offset of the cooperative primal after adding the penalty
/// terms of `dual` to the household-only `base_lin` / `base_offset`.
pub(crate) fn penalty_terms(
    base_lin: &[f64],
    base_offset: f64,
    layout: &Layout,
    dual: &DualSlice,
) -> Result<(Vec<f64>, f64), AgentError> {
    let mut lin = base_lin.to_vec();
    let mut offset = base_offset;
    for (k, v) in layout.peers.iter().enumerate() {
        let aux = dual.aux.get(v).ok_or(AgentError::DualMismatch(*v))?;
        let mult = dual.mult.get(v).ok_or(AgentError::DualMismatch(*v))?;
        if aux.len() != layout.slots || mult.len() != layout.slots {
            return Err(AgentError::DualMismatch(*v));
        }
        for t in 0..layout.slots {
            lin[layout.trade(k, t)] += -dual.rho * aux[t] - mult[t];
            offset += 0.5 * dual.rho * aux[t] * aux[t];
        }
    }
    Ok((lin, offset))
}

/// Joint problem over all households with `p[u][v] + p[v][u] = 0` for every
/// pair. Every household trades with every other one.
pub fn build_centralized(
    profiles: &[UserProfile],
    tariff: &Tariff,
    trade_bound: Option<f64>,
) -> Result<(QpProblem, Vec<Layout>), AgentError> {
    if profiles.len() < 2 {
        return Err(AgentError::TooFewUsers(profiles.len()));
    }
    let bound = trade_bound.unwrap_or_else(|| default_trade_bound(profiles));
    let ids: Vec<UserId> = profiles.iter().map(|p| p.id).collect();
    let mut layouts = Vec::with_capacity(profiles.len());
    let mut offset = 0;
    for p in profiles {
        let peers: Vec<UserId> = ids.iter().copied().filter(|v| *v != p.id).collect();
        if peers.len() + 1 != ids.len() {
            return Err(AgentError::DuplicateUser(p.id));
        }
        let lay = Layout::new(p.id, p.horizon().slots(), peers, offset);
        offset = lay.end();
        layouts.push(lay);
    }
    let mut qp = QpProblem::new(offset);
    for (p, lay) in profiles.iter().zip(&layouts) {
        add_household(&mut qp, lay, p, tariff, Mode::Cooperative, bound)?;
    }
    for (a, la) in layouts.iter().enumerate() {
        for lb in &layouts[a + 1..] {
            if la.slots != lb.slots {
                return Err(AgentError::Model(ModelError::Dimension {
                    what: format!("horizon of user {}", lb.user),
                    got: lb.slots,
                    want: la.slots,
                }));
            }
            let ka = la.peer_index(lb.user).expect("all pairs present");
            let kb = lb.peer_index(la.user).expect("all pairs present");
            for t in 0..la.slots {
                qp.add_eq(vec![(la.trade(ka, t), 1.0), (lb.trade(kb, t), 1.0)], 0.0);
            }
        }
    }
    Ok((qp, layouts))
}

/// Adds one household's columns, cost and constraints to `qp`.
fn add_household(
    qp: &mut QpProblem,
    lay: &Layout,
    p: &UserProfile,
    tariff: &Tariff,
    mode: Mode,
    trade_bound: f64,
) -> Result<(), AgentError> {
    p.validate()?;
    let h = lay.slots;
    let horizon = p.horizon();
    tariff.validate(horizon)?;
    if mode == Mode::Cooperative && !(trade_bound >= 0.0) {
        return Err(AgentError::Model(ModelError::Invalid {
            field: "trade_bound".into(),
            reason: "must be non-negative".into(),
        }));
    }

    for (b, name) in BLOCKS.iter().enumerate() {
        for t in 0..h {
            qp.names[lay.var(b, t)] = VarTag::new(*name, Some(t));
        }
    }
    qp.names[lay.peak()] = VarTag::new("peak", None);
    for (k, v) in lay.peers.iter().enumerate() {
        for t in 0..h {
            qp.names[lay.trade(k, t)] = VarTag::new(format!("p_{}_{}", p.id, v), Some(t));
        }
    }

    // --- objective ---
    for t in 0..h {
        qp.lin[lay.var(G, t)] += tariff.alpha;
        qp.lin[lay.var(C, t)] += p.battery.omega_ba;
        qp.lin[lay.var(D, t)] += p.battery.omega_ba;
        qp.lin[lay.var(E_FIT, t)] -= tariff.pi_fit;
        qp.lin[lay.var(E_DR, t)] -= tariff.pi_dr[t];
        qp.lin[lay.var(E_AS, t)] -= tariff.pi_as[t];
    }
    qp.lin[lay.peak()] += tariff.beta;

    // AC discomfort with T = free + gain·l_ac
    let free = thermal_free_response(&p.exo, &p.ac);
    let w = p.ac.omega_ac;
    let gain: Vec<Vec<f64>> = (0..h)
        .map(|t| (0..h).map(|s| thermal_gain(&p.ac, t, s)).collect())
        .collect();
    if w > 0.0 {
        for t in 0..h {
            let dev = free[t] - p.ac.tau;
            qp.offset += w * dev * dev;
            for s in 0..t {
                qp.lin[lay.var(L_AC, s)] += 2.0 * w * gain[t][s] * dev;
            }
        }
        for s1 in 0..h {
            for s2 in 0..h {
                let lo = s1.max(s2) + 1;
                let v: f64 = (lo..h).map(|t| gain[t][s1] * gain[t][s2]).sum();
                if v != 0.0 {
                    qp.quad.add(lay.var(L_AC, s1), lay.var(L_AC, s2), 2.0 * w * v);
                }
            }
        }
    }

    let wf = p.flex.omega_fl;
    if wf > 0.0 {
        for t in 0..h {
            let i = lay.var(L_FL, t);
            let r = p.flex.reference[t];
            qp.quad.add(i, i, 2.0 * wf);
            qp.lin[i] -= 2.0 * wf * r;
            qp.offset += wf * r * r;
        }
    }

    if mode == Mode::Cooperative {
        for k in 0..lay.peers.len() {
            for t in 0..h {
                qp.lin[lay.trade(k, t)] += tariff.pi_p2p;
            }
        }
    }

    // --- constraints ---
    // Bounds implied by other rows are left out, since redundant active rows
    // make the polish step's KKT systems degenerate:
    //   r <= R        from  e_fit >= 0, e_fit + r <= R
    //   g >= 0        from  0 <= e_dr <= g
    //   b >= 0        from  0 <= e_as <= b
    //   peak >= 0     from  peak >= g >= 0
    let inf = f64::INFINITY;
    for t in 0..h {
        qp.add_ineq(vec![(lay.var(R, t), 1.0)], 0.0, inf);
        qp.add_ineq(vec![(lay.var(G, t), 1.0)], -inf, p.fuse_limit);
        qp.add_ineq(vec![(lay.peak(), 1.0), (lay.var(G, t), -1.0)], 0.0, inf);
        qp.add_ineq(vec![(lay.var(L_AC, t), 1.0)], 0.0, inf);
        qp.add_ineq(vec![(lay.var(L_FL, t), 1.0)], p.flex.lo[t], p.flex.hi[t]);
        qp.add_ineq(vec![(lay.var(C, t), 1.0)], 0.0, p.battery.max_charge);
        qp.add_ineq(vec![(lay.var(D, t), 1.0)], 0.0, p.battery.max_discharge);
        qp.add_ineq(vec![(lay.var(E_FIT, t), 1.0)], 0.0, inf);
        qp.add_ineq(
            vec![(lay.var(E_FIT, t), 1.0), (lay.var(R, t), 1.0)],
            -inf,
            p.exo.renewable_cap[t],
        );
        qp.add_ineq(vec![(lay.var(E_DR, t), 1.0)], 0.0, inf);
        qp.add_ineq(vec![(lay.var(E_DR, t), 1.0), (lay.var(G, t), -1.0)], -inf, 0.0);
        qp.add_ineq(vec![(lay.var(E_AS, t), 1.0)], 0.0, inf);
    }

    // temperature bounds
    let slack = 1e-9 * (1.0 + p.ac.t_max.abs().max(p.ac.t_min.abs()));
    for t in 0..h {
        let row: Vec<(usize, f64)> = (0..t)
            .filter(|&s| gain[t][s] != 0.0)
            .map(|s| (lay.var(L_AC, s), gain[t][s]))
            .collect();
        if row.is_empty() {
            if free[t] < p.ac.t_min - slack || free[t] > p.ac.t_max + slack {
                return Err(AgentError::Model(ModelError::Infeasible(format!(
                    "user {}: indoor temperature {:.3} at slot {t} is outside [{}, {}] and cannot be controlled",
                    p.id, free[t], p.ac.t_min, p.ac.t_max
                ))));
            }
            continue;
        }
        qp.add_ineq(row, p.ac.t_min - free[t], p.ac.t_max - free[t]);
    }

    // flexible total
    qp.add_eq((0..h).map(|t| (lay.var(L_FL, t), 1.0)).collect(), p.flex.total);

    // battery level and AS reservation: b[t] = b_init + Σ_{s<=t} (eta c - d/eta)
    let eta = p.battery.eta;
    for t in 0..h {
        let mut row = Vec::with_capacity(2 * (t + 1));
        for s in 0..=t {
            row.push((lay.var(C, s), eta));
            row.push((lay.var(D, s), -1.0 / eta));
        }
        let b0 = p.battery.b_init;
        qp.add_ineq(row.clone(), -inf, p.battery.capacity - b0);
        let mut as_row: Vec<(usize, f64)> = row.into_iter().map(|(i, v)| (i, -v)).collect();
        as_row.push((lay.var(E_AS, t), 1.0));
        qp.add_ineq(as_row, -inf, b0);
    }

    // power balance
    for t in 0..h {
        let mut row = vec![
            (lay.var(R, t), 1.0),
            (lay.var(G, t), 1.0),
            (lay.var(D, t), 1.0),
            (lay.var(L_AC, t), -1.0),
            (lay.var(L_FL, t), -1.0),
            (lay.var(C, t), -1.0),
            (lay.var(E_DR, t), -1.0),
        ];
        if mode == Mode::Cooperative {
            row.extend((0..lay.peers.len()).map(|k| (lay.trade(k, t), 1.0)));
        }
        qp.add_eq(row, p.exo.inflexible[t]);
    }

    if mode == Mode::Cooperative {
        for k in 0..lay.peers.len() {
            for t in 0..h {
                qp.add_ineq(vec![(lay.trade(k, t), 1.0)], -trade_bound, trade_bound);
            }
        }
    }
    Ok(())
}

/// Reads one household's schedule out of a solution. Magnitudes below 1e-10
/// become exactly zero.
pub fn decode(sol: &QpSolution, layout: &Layout) -> Result<Schedule, AgentError> {
    if sol.status != QpStatus::Optimal {
        return Err(AgentError::NotOptimal {
            user: layout.user,
            status: sol.status,
        });
    }
    decode_x(&sol.x, layout)
}

pub(crate) fn decode_x(x: &[f64], layout: &Layout) -> Result<Schedule, AgentError> {
    if x.len() < layout.end() {
        return Err(AgentError::Model(ModelError::Dimension {
            what: "solution".into(),
            got: x.len(),
            want: layout.end(),
        }));
    }
    let clamp = |v: f64| if v.abs() < CLAMP { 0.0 } else { v };
    let h = layout.slots;
    let mut s = Schedule::zeros(crate::model::Horizon::new(h)?);
    for (b, v) in s.vectors_mut().into_iter().enumerate() {
        for (t, out) in v.iter_mut().enumerate() {
            *out = clamp(x[layout.var(b, t)]);
        }
    }
    s.peak = clamp(x[layout.peak()]);
    let mut trades = BTreeMap::new();
    for (k, v) in layout.peers.iter().enumerate() {
        trades.insert(*v, (0..h).map(|t| clamp(x[layout.trade(k, t)])).collect());
    }
    s.trades = trades;
    Ok(s)
}

/// Inverse of [`decode`]: writes the schedule into `x` at the layout's
/// columns. Trades with peers missing from the schedule are written as 0.
pub fn encode(s: &Schedule, layout: &Layout, x: &mut [f64]) {
    for (b, (_, v)) in s.vectors().into_iter().enumerate() {
        for t in 0..layout.slots {
            x[layout.var(b, t)] = v[t];
        }
    }
    x[layout.peak()] = s.peak;
    for (k, v) in layout.peers.iter().enumerate() {
        let tr = s.trades.get(v);
        for t in 0..layout.slots {
            x[layout.trade(k, t)] = tr.map_or(0.0, |tr| tr[t]);
        }
    }
}
