#![allow(dead_code)]

use vpp_core::model::*;

/// A household with no comfort or wear costs, a disabled battery, zero
/// flexible demand and a constant indoor temperature at the preferred value.
pub fn quiet_profile(id: u32, renewable: Vec<f64>, inflexible: Vec<f64>) -> UserProfile {
    let h = renewable.len();
    UserProfile {
        id: UserId(id),
        fuse_limit: 5.0,
        ac: AcParams {
            r_thermal: 2.0,
            c_thermal: 1.0,
            gamma: -1.0,
            tau: 24.0,
            t_min: 18.0,
            t_max: 30.0,
            omega_ac: 0.0,
            t_init: 24.0,
            decay: 0.6,
        },
        flex: FlexParams {
            total: 0.0,
            lo: vec![0.0; h],
            hi: vec![0.0; h],
            reference: vec![0.0; h],
            omega_fl: 0.0,
        },
        battery: BatteryParams {
            capacity: 0.0,
            max_charge: 0.0,
            max_discharge: 0.0,
            eta: 1.0,
            omega_ba: 0.0,
            b_init: 0.0,
        },
        exo: ExogenousSeries {
            renewable_cap: renewable,
            t_out: vec![24.0; h],
            inflexible,
        },
    }
}

pub fn tariff(h: usize, alpha: f64, beta: f64, pi_p2p: f64, pi_fit: f64) -> Tariff {
    Tariff {
        alpha,
        beta,
        pi_p2p,
        pi_fit,
        pi_dr: vec![0.0; h],
        pi_as: vec![0.0; h],
    }
}

/// A household exercising every cost term and constraint family.
pub fn busy_profile(id: u32, h: usize, seed: u64) -> UserProfile {
    let f = |k: usize, a: f64| ((seed as f64 * 0.37 + k as f64 * a).sin() + 1.0) * 0.5;
    let renew: Vec<f64> = (0..h)
        .map(|t| 3.0 * f(t, 0.9) * (if id.is_multiple_of(2) { 1.0 } else { 0.3 }))
        .collect();
    UserProfile {
        id: UserId(id),
        fuse_limit: 6.0,
        ac: AcParams {
            r_thermal: 2.0,
            c_thermal: 2.0,
            gamma: -0.8,
            tau: 24.0,
            t_min: 20.0,
            t_max: 27.0,
            omega_ac: 0.05,
            t_init: 25.0,
            decay: (-0.25f64).exp(),
        },
        flex: FlexParams {
            total: 0.8 * h as f64 * 0.5,
            lo: vec![0.0; h],
            hi: vec![1.5; h],
            reference: (0..h).map(|t| 0.4 + 0.4 * f(t, 1.3)).collect(),
            omega_fl: 0.1,
        },
        battery: BatteryParams {
            capacity: 10.0 + 5.0 * f(1, 2.0),
            max_charge: 3.0,
            max_discharge: 3.0,
            eta: 0.95,
            omega_ba: 0.01,
            b_init: 4.0,
        },
        exo: ExogenousSeries {
            renewable_cap: renew,
            t_out: (0..h).map(|t| 28.0 + 3.0 * f(t, 0.26)).collect(),
            inflexible: (0..h).map(|t| 0.5 + 1.5 * f(t, 0.7)).collect(),
        },
    }
}

pub fn busy_tariff(h: usize) -> Tariff {
    Tariff {
        alpha: 1.0,
        beta: 2.0,
        pi_p2p: 0.7,
        pi_fit: 0.3,
        pi_dr: (0..h)
            .map(|t| if (17..21).contains(&(t % 24)) { 0.2 } else { 0.0 })
            .collect(),
        pi_as: vec![0.05; h],
    }
}
