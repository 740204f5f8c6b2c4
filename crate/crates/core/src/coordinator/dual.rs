use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agent::DualSlice;
use crate::model::UserId;

use super::CoordError;

/// Per ordered pair `(u, v)` one value per slot.
pub type PairMap = BTreeMap<(UserId, UserId), Vec<f64>>;

/// Coordinator state: auxiliary trades `p'`, multipliers `lambda`, penalty
/// and the iteration counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub aux: PairMap,
    pub mult: PairMap,
    pub rho: f64,
    pub iteration: usize,
}

impl DualState {
    /// All ordered pairs of distinct users, zero-initialised.
    pub fn new(users: &[UserId], slots: usize, rho: f64) -> Result<Self, CoordError> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(CoordError::InvalidRho(rho));
        }
        let mut aux = PairMap::new();
        for &u in users {
            for &v in users {
                if u != v {
                    aux.insert((u, v), vec![0.0; slots]);
                }
            }
        }
        Ok(Self {
            mult: aux.clone(),
            aux,
            rho,
            iteration: 0,
        })
    }

    pub fn users(&self) -> Vec<UserId> {
        let mut u: Vec<UserId> = self.aux.keys().map(|k| k.0).collect();
        u.dedup();
        u
    }

    /// The `(u, ·)` rows of the state.
    pub fn slice(&self, u: UserId) -> DualSlice {
        let pick = |m: &PairMap| {
            m.range((u, UserId(0))..=(u, UserId(u32::MAX)))
                .map(|((_, v), x)| (*v, x.clone()))
                .collect::<BTreeMap<_, _>>()
        };
        DualSlice {
            aux: pick(&self.aux),
            mult: pick(&self.mult),
            rho: self.rho,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub primal_gap: f64,
    pub dual_gap: f64,
    pub converged: bool,
}

fn get(m: &PairMap, key: (UserId, UserId)) -> Result<&Vec<f64>, CoordError> {
    m.get(&key).ok_or(CoordError::MissingPair(key.0, key.1))
}

/// Closed-form minimiser of the augmented Lagrangian over `p'` subject to
/// `p'[u][v] = -p'[v][u]`:
///
/// `p'[u][v] = (rho (p[u][v] - p[v][u]) - (lambda[u][v] - lambda[v][u])) / (2 rho)`
///
/// Only `(u, v)` with `u < v` is computed; the mirror entry is its exact
/// negation.
pub fn dual_update(trades: &PairMap, state: &DualState) -> Result<PairMap, CoordError> {
    let rho = state.rho;
    let mut out = PairMap::new();
    for &(u, v) in state.mult.keys() {
        if u >= v {
            continue;
        }
        let puv = get(trades, (u, v))?;
        let pvu = get(trades, (v, u))?;
        let luv = get(&state.mult, (u, v))?;
        let lvu = get(&state.mult, (v, u))?;
        let h = luv.len();
        for (name, x) in [(u, puv), (v, pvu), (v, lvu)] {
            if x.len() != h {
                return Err(CoordError::Length {
                    user: name,
                    got: x.len(),
                    want: h,
                });
            }
        }
        let a: Vec<f64> = (0..h)
            .map(|t| (rho * (puv[t] - pvu[t]) - (luv[t] - lvu[t])) / (2.0 * rho))
            .collect();
        let b: Vec<f64> = a.iter().map(|x| -x).collect();
        out.insert((u, v), a);
        out.insert((v, u), b);
    }
    if let Some(k) = trades.keys().find(|k| !state.mult.contains_key(k)) {
        return Err(CoordError::UnexpectedPair(k.0, k.1));
    }
    Ok(out)
}

/// `lambda[u][v] += rho (p'[u][v] - p[u][v])`.
pub fn lambda_update(state: &DualState, aux: &PairMap, trades: &PairMap) -> Result<PairMap, CoordError> {
    if aux.len() != state.mult.len() || trades.len() != state.mult.len() {
        return Err(CoordError::KeyMismatch);
    }
    let mut out = PairMap::new();
    for (key, lam) in &state.mult {
        let a = aux.get(key).ok_or(CoordError::KeyMismatch)?;
        let p = trades.get(key).ok_or(CoordError::KeyMismatch)?;
        if a.len() != lam.len() || p.len() != lam.len() {
            return Err(CoordError::KeyMismatch);
        }
        let next = (0..lam.len()).map(|t| lam[t] + state.rho * (a[t] - p[t])).collect();
        out.insert(*key, next);
    }
    Ok(out)
}

/// `primal_gap = Σ_(u,v) ‖p'[u][v] - p[u][v]‖₂` over ordered pairs and
/// `dual_gap = ‖lambda - prev_mult‖₂` over everything. Converged when both are
/// within their thresholds.
pub fn convergence(
    state: &DualState,
    prev_mult: &PairMap,
    trades: &PairMap,
    eps1: f64,
    eps2: f64,
) -> ConvergenceReport {
    let mut primal_gap = 0.0;
    for (key, a) in &state.aux {
        let sq: f64 = match trades.get(key) {
            Some(p) => a.iter().zip(p).map(|(x, y)| (x - y) * (x - y)).sum(),
            None => f64::INFINITY,
        };
        primal_gap += sq.sqrt();
    }
    let mut dual_sq = 0.0;
    for (key, lam) in &state.mult {
        match prev_mult.get(key) {
            Some(prev) => dual_sq += lam.iter().zip(prev).map(|(x, y)| (x - y) * (x - y)).sum::<f64>(),
            None => dual_sq = f64::INFINITY,
        }
    }
    let dual_gap = dual_sq.sqrt();
    ConvergenceReport {
        primal_gap,
        dual_gap,
        converged: primal_gap <= eps1 && dual_gap <= eps2,
    }
}

/// Applies one dual step in place and returns its convergence report.
pub fn dual_step(
    state: &mut DualState,
    trades: &PairMap,
    eps1: f64,
    eps2: f64,
) -> Result<ConvergenceReport, CoordError> {
    let aux = dual_update(trades, state)?;
    let mult = lambda_update(state, &aux, trades)?;
    let prev = std::mem::replace(&mut state.mult, mult);
    state.aux = aux;
    state.iteration += 1;
    Ok(convergence(state, &prev, trades, eps1, eps2))
}
