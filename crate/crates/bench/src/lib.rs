//! Fixtures shared by the benchmarks.

use vpp_core::io::gen_synthetic;
use vpp_core::model::{Tariff, UserProfile};

/// First day of a synthetic community of `users` (at least two) households.
pub fn community(users: usize) -> (Vec<UserProfile>, Tariff) {
    let sc = gen_synthetic(7, users, 1);
    (sc.day(0, None), sc.tariff)
}
