use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::dynamics::{battery_trajectory, thermal_trajectory};
use super::types::{Schedule, Tariff, UserId, UserProfile};
use super::Mode;

/// Constraint families of the household problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConstraintId {
    RenewableBound,
    GridBound,
    TradeAntisymmetry,
    SelfTrade,
    ThermalDynamics,
    TemperatureBounds,
    FlexTotal,
    FlexSlotBounds,
    BatteryDynamics,
    BatteryLevel,
    ChargeRate,
    DischargeRate,
    FitBound,
    DrBound,
    AsBound,
    PowerBalance,
    Nonnegativity,
    PeakEpigraph,
}

impl ConstraintId {
    pub const ALL: [ConstraintId; 18] = [
        ConstraintId::RenewableBound,
        ConstraintId::GridBound,
        ConstraintId::TradeAntisymmetry,
        ConstraintId::SelfTrade,
        ConstraintId::ThermalDynamics,
        ConstraintId::TemperatureBounds,
        ConstraintId::FlexTotal,
        ConstraintId::FlexSlotBounds,
        ConstraintId::BatteryDynamics,
        ConstraintId::BatteryLevel,
        ConstraintId::ChargeRate,
        ConstraintId::DischargeRate,
        ConstraintId::FitBound,
        ConstraintId::DrBound,
        ConstraintId::AsBound,
        ConstraintId::PowerBalance,
        ConstraintId::Nonnegativity,
        ConstraintId::PeakEpigraph,
    ];
}

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: ConstraintId,
    /// Zero-based slot, or `None` for horizon-wide constraints.
    pub slot: Option<usize>,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ViolationReport {
    pub violations: Vec<Violation>,
}

impl ViolationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn families(&self) -> Vec<ConstraintId> {
        let mut f: Vec<_> = self.violations.iter().map(|v| v.constraint).collect();
        f.sort();
        f.dedup();
        f
    }

    fn push(&mut self, constraint: ConstraintId, slot: Option<usize>, magnitude: f64, tol: f64) {
        if magnitude > tol || magnitude.is_nan() {
            self.violations.push(Violation {
                constraint,
                slot,
                magnitude,
            });
        }
    }
}

impl fmt::Display for ViolationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "feasible");
        }
        for v in &self.violations {
            match v.slot {
                Some(t) => writeln!(f, "{} @ slot {}: {:.3e}", v.constraint, t, v.magnitude)?,
                None => writeln!(f, "{}: {:.3e}", v.constraint, v.magnitude)?,
            }
        }
        Ok(())
    }
}

/// Amount by which `v` leaves `[lo, hi]`.
fn excess(v: f64, lo: f64, hi: f64) -> f64 {
    (lo - v).max(v - hi).max(0.0)
}

/// Evaluates every household constraint and reports those violated by more
/// than `tol`. Schedules with mismatched vector lengths are reported under
/// `PowerBalance` with an infinite magnitude.
///
/// Trade antisymmetry couples two households and is checked by
/// [`check_market`]; the trade box is a solver artifact and not checked here.
pub fn check_feasibility(s: &Schedule, p: &UserProfile, _tariff: &Tariff, mode: Mode, tol: f64) -> ViolationReport {
    let mut rep = ViolationReport::default();
    let h = p.horizon();
    if s.check_dims(h).is_err() {
        rep.push(ConstraintId::PowerBalance, None, f64::INFINITY, tol);
        return rep;
    }
    let slots = h.slots();
    use ConstraintId as C;

    for t in 0..slots {
        rep.push(
            C::RenewableBound,
            Some(t),
            excess(s.r[t], 0.0, p.exo.renewable_cap[t]),
            tol,
        );
        rep.push(C::GridBound, Some(t), excess(s.g[t], 0.0, p.fuse_limit), tol);
    }

    if let Some(own) = s.trades.get(&p.id) {
        let m = own.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        rep.push(C::SelfTrade, None, m, tol);
    }
    if mode == Mode::Standalone {
        let m = s.trades.values().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        rep.push(C::PowerBalance, None, m, tol);
    }

    let temps = thermal_trajectory(&s.l_ac, &p.exo, &p.ac).expect("dimensions checked");
    for (t, temp) in temps.iter().enumerate() {
        rep.push(
            C::TemperatureBounds,
            Some(t),
            excess(*temp, p.ac.t_min, p.ac.t_max),
            tol,
        );
    }

    let flex_sum: f64 = s.l_fl.iter().sum();
    rep.push(C::FlexTotal, None, (flex_sum - p.flex.total).abs(), tol);
    for t in 0..slots {
        rep.push(
            C::FlexSlotBounds,
            Some(t),
            excess(s.l_fl[t], p.flex.lo[t], p.flex.hi[t]),
            tol,
        );
    }

    let levels = battery_trajectory(&s.c, &s.d, &p.battery).expect("dimensions checked");
    for t in 0..slots {
        rep.push(
            C::BatteryLevel,
            Some(t),
            excess(levels[t], 0.0, p.battery.capacity),
            tol,
        );
        rep.push(C::ChargeRate, Some(t), excess(s.c[t], 0.0, p.battery.max_charge), tol);
        rep.push(
            C::DischargeRate,
            Some(t),
            excess(s.d[t], 0.0, p.battery.max_discharge),
            tol,
        );
        rep.push(
            C::FitBound,
            Some(t),
            excess(s.e_fit[t], 0.0, p.exo.renewable_cap[t] - s.r[t]),
            tol,
        );
        rep.push(C::DrBound, Some(t), excess(s.e_dr[t], 0.0, s.g[t]), tol);
        rep.push(C::AsBound, Some(t), excess(s.e_as[t], 0.0, levels[t]), tol);
        rep.push(C::Nonnegativity, Some(t), (-s.l_ac[t]).max(0.0), tol);
    }

    let bought = s.net_purchase();
    for t in 0..slots {
        let demand = s.l_ac[t] + s.l_fl[t] + p.exo.inflexible[t] + s.c[t] + s.e_dr[t];
        let mut supply = s.r[t] + s.g[t] + s.d[t];
        if mode == Mode::Cooperative {
            supply += bought[t];
        }
        rep.push(C::PowerBalance, Some(t), (demand - supply).abs(), tol);
    }

    let peak = s.g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    rep.push(C::PeakEpigraph, None, (peak - s.peak).max(0.0), tol);
    rep
}

/// Checks `p[u][v][t] = -p[v][u][t]` across a set of schedules.
pub fn check_market(schedules: &BTreeMap<UserId, Schedule>, tol: f64) -> ViolationReport {
    let mut rep = ViolationReport::default();
    for (u, su) in schedules {
        for (v, puv) in &su.trades {
            if v <= u {
                continue;
            }
            let pvu = schedules.get(v).and_then(|sv| sv.trades.get(u));
            for (t, a) in puv.iter().enumerate() {
                let b = pvu.map(|x| x[t]).unwrap_or(0.0);
                rep.push(ConstraintId::TradeAntisymmetry, Some(t), (a + b).abs(), tol);
            }
        }
    }
    rep
}

/// Largest `|p[u][v][t] + p[v][u][t]|` over all pairs and slots.
pub fn max_trade_mismatch(schedules: &BTreeMap<UserId, Schedule>) -> f64 {
    let mut worst: f64 = 0.0;
    for (u, su) in schedules {
        for (v, puv) in &su.trades {
            let pvu = schedules.get(v).and_then(|sv| sv.trades.get(u));
            for (t, a) in puv.iter().enumerate() {
                let b = pvu.map(|x| x[t]).unwrap_or(0.0);
                worst = worst.max((a + b).abs());
            }
        }
    }
    worst
}
