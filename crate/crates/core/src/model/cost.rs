use super::dynamics::thermal_trajectory;
use super::types::{check_len, CostBreakdown, Schedule, Tariff, UserProfile};
use super::{Mode, ModelError};

/// Operating cost of a schedule: grid bill under the two-part tariff, comfort
/// and battery wear penalties, P2P payments (cooperative mode only), minus
/// FIT, DR and AS rewards.
///
/// The peak charge uses `max_t g[t]`, not the schedule's `peak` field.
pub fn cost_breakdown(s: &Schedule, p: &UserProfile, tariff: &Tariff, mode: Mode) -> Result<CostBreakdown, ModelError> {
    let h = p.horizon();
    s.check_dims(h)?;
    check_len("pi_dr", tariff.pi_dr.len(), h.slots())?;
    check_len("pi_as", tariff.pi_as.len(), h.slots())?;
    let trades_nonzero = s.trades.values().any(|v| v.iter().any(|x| *x != 0.0));
    if mode == Mode::Standalone && trades_nonzero {
        return Err(ModelError::invalid("trades", "standalone schedules cannot trade"));
    }

    let peak = s.g.iter().copied().fold(0.0, f64::max);
    let grid = tariff.alpha * s.g.iter().sum::<f64>() + tariff.beta * peak;
    let temps = thermal_trajectory(&s.l_ac, &p.exo, &p.ac)?;
    let ac = p.ac.omega_ac * temps.iter().map(|t| (t - p.ac.tau).powi(2)).sum::<f64>();
    let flex = p.flex.omega_fl
        * s.l_fl
            .iter()
            .zip(&p.flex.reference)
            .map(|(l, r)| (l - r).powi(2))
            .sum::<f64>();
    let battery = p.battery.omega_ba * s.c.iter().zip(&s.d).map(|(c, d)| c + d).sum::<f64>();
    let p2p = match mode {
        Mode::Standalone => 0.0,
        Mode::Cooperative => tariff.pi_p2p * s.trades.values().flatten().sum::<f64>(),
    };
    let fit = tariff.pi_fit * s.e_fit.iter().sum::<f64>();
    let dr = dot(&tariff.pi_dr, &s.e_dr);
    let as_ = dot(&tariff.pi_as, &s.e_as);
    let total = grid + ac + flex + battery + p2p - fit - dr - as_;
    Ok(CostBreakdown {
        grid,
        ac,
        flex,
        battery,
        p2p,
        fit,
        dr,
        as_,
        total,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
