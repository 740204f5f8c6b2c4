//! Indoor temperature and battery charge trajectories.
//!
//! Both recursions are affine in the controls, so they can be written as a
//! free response plus a lower-triangular gain. The agent module uses that
//! form to substitute the states out of the QP.

use super::types::{check_len, AcParams, BatteryParams, ExogenousSeries};
use super::ModelError;

/// `T[t] = t_out[t] - (t_out[t] - T[t-1])·decay + gamma·l_ac[t-1]`, starting
/// from `ac.t_init`. The AC energy of the final slot acts after the horizon.
pub fn thermal_trajectory(l_ac: &[f64], exo: &ExogenousSeries, ac: &AcParams) -> Result<Vec<f64>, ModelError> {
    let h = exo.t_out.len();
    check_len("l_ac", l_ac.len(), h)?;
    let mut prev = ac.t_init;
    let mut out = Vec::with_capacity(h);
    for t in 0..h {
        let drive = if t == 0 { 0.0 } else { l_ac[t - 1] };
        let temp = exo.t_out[t] - (exo.t_out[t] - prev) * ac.decay + ac.gamma * drive;
        out.push(temp);
        prev = temp;
    }
    Ok(out)
}

/// Temperature with the AC off.
pub fn thermal_free_response(exo: &ExogenousSeries, ac: &AcParams) -> Vec<f64> {
    let zero = vec![0.0; exo.t_out.len()];
    thermal_trajectory(&zero, exo, ac).expect("lengths match by construction")
}

/// Sensitivity `∂T[t] / ∂l_ac[s]`: `gamma·decay^(t-1-s)` for `s < t`, else 0.
pub fn thermal_gain(ac: &AcParams, t: usize, s: usize) -> f64 {
    if s < t {
        ac.gamma * ac.decay.powi((t - 1 - s) as i32)
    } else {
        0.0
    }
}

/// `b[t] = b[t-1] + eta·c[t] - d[t]/eta`, starting from `bp.b_init`.
pub fn battery_trajectory(c: &[f64], d: &[f64], bp: &BatteryParams) -> Result<Vec<f64>, ModelError> {
    check_len("d", d.len(), c.len())?;
    let mut level = bp.b_init;
    Ok(c.iter()
        .zip(d)
        .map(|(ci, di)| {
            level += bp.eta * ci - di / bp.eta;
            level
        })
        .collect())
}
