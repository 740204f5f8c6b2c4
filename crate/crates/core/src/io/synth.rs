use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Scenario;
use crate::coordinator::AlgoConfig;
use crate::model::{AcParams, BatteryParams, ExogenousSeries, FlexParams, Horizon, Tariff, UserId, UserProfile};
use crate::simnet::NetConfig;

const H: usize = 24;
/// Solar output is zero outside `SUNRISE..=SUNSET`.
const SUNRISE: usize = 6;
const SUNSET: usize = 19;

/// Deterministic synthetic households.
///
/// Solar is a half-sine over daylight with a random amplitude and daily
/// cloud factor; every third user also has wind (smoothed positive noise).
/// Odd users get large arrays and even users small ones, so the population
/// has both surplus and deficit. Outdoor temperature is a diurnal sinusoid,
/// inflexible load has a morning and an evening hump, batteries hold
/// 10-15 kWh at 7 kWh per slot.
pub fn gen_synthetic(seed: u64, users: usize, days: usize) -> Scenario {
    assert!(users >= 2, "need at least 2 users");
    assert!(days >= 1, "need at least 1 day");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = H * days;
    let t_out = outdoor(&mut rng, days);

    let profiles = (1..=users as u32)
        .map(|id| {
            let big = id % 2 == 1;
            let amp = if big {
                rng.gen_range(2.0..4.0)
            } else {
                rng.gen_range(0.0..0.8)
            };
            let mut renewable = vec![0.0; n];
            for d in 0..days {
                let cloud = rng.gen_range(0.6..1.0);
                for t in SUNRISE..=SUNSET {
                    let x = PI * (t + 1 - SUNRISE) as f64 / (SUNSET - SUNRISE + 2) as f64;
                    renewable[d * H + t] = amp * cloud * x.sin();
                }
            }
            if id % 3 == 0 {
                let mut w: f64 = rng.gen_range(0.3..1.0);
                for r in renewable.iter_mut() {
                    w = (0.8 * w + 0.2 * rng.gen_range(0.0..1.5)).max(0.0);
                    *r += w;
                }
            }

            let base = rng.gen_range(0.2..0.5);
            let morning = rng.gen_range(0.5..1.5);
            let evening = rng.gen_range(1.0..2.5);
            let inflexible: Vec<f64> = (0..n)
                .map(|i| {
                    let t = (i % H) as f64;
                    let hump = |c: f64, w: f64| (-((t - c) / w).powi(2)).exp();
                    base + morning * hump(7.5, 1.2) + evening * hump(19.5, 1.8) + rng.gen_range(0.0..0.1)
                })
                .collect();

            // washing/dishwasher style demand, preferred in the evening
            let flex_day = rng.gen_range(2.0..5.0);
            let shape: Vec<f64> = (0..H).map(|t| (-((t as f64 - 20.0) / 2.5).powi(2)).exp()).collect();
            let norm: f64 = shape.iter().sum();
            let reference: Vec<f64> = (0..n).map(|i| (flex_day * shape[i % H] / norm).min(1.5)).collect();
            let total = reference[..H].iter().sum::<f64>();

            let capacity = rng.gen_range(10.0..=15.0);
            let r_thermal = rng.gen_range(1.5..3.0);
            let c_thermal = rng.gen_range(2.0..4.0);
            UserProfile {
                id: UserId(id),
                fuse_limit: 10.0,
                ac: AcParams {
                    r_thermal,
                    c_thermal,
                    gamma: -rng.gen_range(0.8..1.5),
                    tau: 24.0,
                    t_min: 20.0,
                    t_max: 28.0,
                    omega_ac: rng.gen_range(0.01..0.05),
                    t_init: 24.0,
                    decay: AcParams::default_decay(r_thermal, c_thermal),
                },
                flex: FlexParams {
                    total,
                    lo: vec![0.0; n],
                    hi: vec![1.5; n],
                    reference,
                    omega_fl: rng.gen_range(0.05..0.2),
                },
                battery: BatteryParams {
                    capacity,
                    max_charge: 7.0,
                    max_discharge: 7.0,
                    eta: 0.95,
                    omega_ba: 0.01,
                    b_init: 0.5 * capacity,
                },
                exo: ExogenousSeries {
                    renewable_cap: renewable,
                    t_out: t_out.clone(),
                    inflexible,
                },
            }
        })
        .collect();

    let pi_dr = (0..H).map(|t| if (17..=20).contains(&t) { 0.2 } else { 0.0 }).collect();
    Scenario {
        horizon: Horizon::DAY,
        days,
        users: profiles,
        tariff: Tariff {
            alpha: 1.0,
            beta: 3.0,
            pi_p2p: 0.6,
            pi_fit: 0.3,
            pi_dr,
            pi_as: vec![0.005; H],
        },
        algo: AlgoConfig::default(),
        net: NetConfig {
            seed,
            ..NetConfig::default()
        },
    }
}

/// Shared by all households of the neighbourhood.
fn outdoor(rng: &mut ChaCha8Rng, days: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(H * days);
    for _ in 0..days {
        let mean = rng.gen_range(26.0..29.0);
        let swing = rng.gen_range(2.0..4.0);
        for t in 0..H {
            let x = 2.0 * PI * (t as f64 - 9.0) / H as f64;
            out.push(mean + swing * x.sin() + rng.gen_range(-0.3..0.3));
        }
    }
    out
}
