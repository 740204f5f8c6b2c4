use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Household identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UserId(pub u32);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Number of hourly slots in one scheduling day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Horizon {
    slots: usize,
}

impl Horizon {
    pub const DAY: Horizon = Horizon { slots: 24 };

    pub fn new(slots: usize) -> Result<Self, ModelError> {
        if slots == 0 {
            return Err(ModelError::invalid("horizon", "at least one slot is required"));
        }
        Ok(Self { slots })
    }

    pub fn slots(&self) -> usize {
        self.slots
    }
}

/// Grid and VPP prices. Money per kWh except `beta`, which is charged on the
/// daily peak grid draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tariff {
    pub alpha: f64,
    pub beta: f64,
    pub pi_p2p: f64,
    pub pi_fit: f64,
    pub pi_dr: Vec<f64>,
    pub pi_as: Vec<f64>,
}

impl Tariff {
    pub fn validate(&self, horizon: Horizon) -> Result<(), ModelError> {
        let scalars = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("pi_p2p", self.pi_p2p),
            ("pi_fit", self.pi_fit),
        ];
        for (name, v) in scalars {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(ModelError::invalid(name, "price must be finite and non-negative"));
            }
        }
        if self.beta <= self.alpha {
            return Err(ModelError::invalid(
                "beta",
                "peak price must exceed the normal price alpha",
            ));
        }
        if self.pi_p2p >= self.alpha {
            return Err(ModelError::invalid(
                "pi_p2p",
                "trading price must be below the grid price alpha",
            ));
        }
        for (name, v) in [("pi_dr", &self.pi_dr), ("pi_as", &self.pi_as)] {
            check_len(name, v.len(), horizon.slots())?;
            if v.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                return Err(ModelError::invalid(name, "price must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

/// First-order air conditioner model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcParams {
    pub r_thermal: f64,
    pub c_thermal: f64,
    /// Temperature change per kWh of AC energy; negative when cooling.
    pub gamma: f64,
    pub tau: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub omega_ac: f64,
    pub t_init: f64,
    /// Share of the indoor/outdoor gap retained per slot, in (0, 1).
    pub decay: f64,
}

impl AcParams {
    /// `exp(-1 / (R C))`, the stable per-slot retention of a thermal RC model.
    pub fn default_decay(r_thermal: f64, c_thermal: f64) -> f64 {
        (-1.0 / (r_thermal * c_thermal)).exp()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.t_min <= self.tau && self.tau <= self.t_max) {
            return Err(ModelError::invalid(
                "tau",
                "preferred temperature outside [t_min, t_max]",
            ));
        }
        if !(self.omega_ac >= 0.0) {
            return Err(ModelError::invalid("omega_ac", "weight must be non-negative"));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(ModelError::invalid("decay", "retention factor must lie in (0, 1)"));
        }
        if !self.gamma.is_finite() || !self.t_init.is_finite() {
            return Err(ModelError::invalid("ac", "non-finite parameter"));
        }
        Ok(())
    }
}

/// Time-shiftable appliance demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlexParams {
    pub total: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub reference: Vec<f64>,
    pub omega_fl: f64,
}

impl FlexParams {
    pub fn validate(&self, horizon: Horizon) -> Result<(), ModelError> {
        let h = horizon.slots();
        check_len("flex.lo", self.lo.len(), h)?;
        check_len("flex.hi", self.hi.len(), h)?;
        check_len("flex.reference", self.reference.len(), h)?;
        if self.lo.iter().zip(&self.hi).any(|(l, u)| !(0.0 <= *l && l <= u)) {
            return Err(ModelError::invalid("flex.lo", "need 0 <= lo[t] <= hi[t]"));
        }
        let (sum_lo, sum_hi): (f64, f64) = (self.lo.iter().sum(), self.hi.iter().sum());
        if !(sum_lo <= self.total + 1e-12 && self.total <= sum_hi + 1e-12) {
            return Err(ModelError::Infeasible(format!(
                "flexible demand {} outside the reachable range [{sum_lo}, {sum_hi}]",
                self.total
            )));
        }
        if !(self.omega_fl >= 0.0) {
            return Err(ModelError::invalid("omega_fl", "weight must be non-negative"));
        }
        Ok(())
    }
}

/// Home battery. Rates are per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    pub capacity: f64,
    pub max_charge: f64,
    pub max_discharge: f64,
    pub eta: f64,
    pub omega_ba: f64,
    pub b_init: f64,
}

impl BatteryParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.capacity >= 0.0 && self.max_charge >= 0.0 && self.max_discharge >= 0.0) {
            return Err(ModelError::invalid("battery", "limits must be non-negative"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(ModelError::invalid("eta", "efficiency must lie in (0, 1]"));
        }
        if !(0.0 <= self.b_init && self.b_init <= self.capacity) {
            return Err(ModelError::invalid("b_init", "initial charge outside [0, capacity]"));
        }
        if !(self.omega_ba >= 0.0) {
            return Err(ModelError::invalid("omega_ba", "weight must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousSeries {
    pub renewable_cap: Vec<f64>,
    pub t_out: Vec<f64>,
    pub inflexible: Vec<f64>,
}

impl ExogenousSeries {
    pub fn validate(&self, horizon: Horizon) -> Result<(), ModelError> {
        let h = horizon.slots();
        check_len("renewable_cap", self.renewable_cap.len(), h)?;
        check_len("t_out", self.t_out.len(), h)?;
        check_len("inflexible", self.inflexible.len(), h)?;
        if self.renewable_cap.iter().any(|v| !(*v >= 0.0)) {
            return Err(ModelError::invalid("renewable_cap", "must be non-negative"));
        }
        if self.inflexible.iter().any(|v| !(*v >= 0.0)) {
            return Err(ModelError::invalid("inflexible", "must be non-negative"));
        }
        if self.t_out.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::invalid("t_out", "must be finite"));
        }
        Ok(())
    }
}

/// Everything one household knows about itself for one scheduling day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: UserId,
    /// Grid draw limit per slot.
    pub fuse_limit: f64,
    pub ac: AcParams,
    pub flex: FlexParams,
    pub battery: BatteryParams,
    pub exo: ExogenousSeries,
}

impl UserProfile {
    pub fn horizon(&self) -> Horizon {
        Horizon {
            slots: self.exo.t_out.len().max(1),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let h = Horizon::new(self.exo.t_out.len())?;
        if !(self.fuse_limit > 0.0) {
            return Err(ModelError::invalid("fuse_limit", "must be positive"));
        }
        self.ac.validate()?;
        self.flex.validate(h)?;
        self.battery.validate()?;
        self.exo.validate(h)
    }
}

/// One household's decision vector over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub g: Vec<f64>,
    pub r: Vec<f64>,
    pub l_ac: Vec<f64>,
    pub l_fl: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub e_fit: Vec<f64>,
    pub e_dr: Vec<f64>,
    pub e_as: Vec<f64>,
    /// Energy bought from each peer per slot; negative means sold.
    pub trades: BTreeMap<UserId, Vec<f64>>,
    /// Epigraph variable for the daily peak of `g`.
    pub peak: f64,
}

impl Schedule {
    pub fn zeros(horizon: Horizon) -> Self {
        let z = vec![0.0; horizon.slots()];
        Self {
            g: z.clone(),
            r: z.clone(),
            l_ac: z.clone(),
            l_fl: z.clone(),
            c: z.clone(),
            d: z.clone(),
            e_fit: z.clone(),
            e_dr: z.clone(),
            e_as: z,
            trades: BTreeMap::new(),
            peak: 0.0,
        }
    }

    pub fn slots(&self) -> usize {
        self.g.len()
    }

    /// The nine per-slot vectors in canonical order.
    pub fn vectors(&self) -> [(&'static str, &Vec<f64>); 9] {
        [
            ("g", &self.g),
            ("r", &self.r),
            ("l_ac", &self.l_ac),
            ("l_fl", &self.l_fl),
            ("c", &self.c),
            ("d", &self.d),
            ("e_fit", &self.e_fit),
            ("e_dr", &self.e_dr),
            ("e_as", &self.e_as),
        ]
    }

    pub fn vectors_mut(&mut self) -> [&mut Vec<f64>; 9] {
        [
            &mut self.g,
            &mut self.r,
            &mut self.l_ac,
            &mut self.l_fl,
            &mut self.c,
            &mut self.d,
            &mut self.e_fit,
            &mut self.e_dr,
            &mut self.e_as,
        ]
    }

    pub fn check_dims(&self, horizon: Horizon) -> Result<(), ModelError> {
        for (name, v) in self.vectors() {
            check_len(name, v.len(), horizon.slots())?;
        }
        for v in self.trades.values() {
            check_len("trades", v.len(), horizon.slots())?;
        }
        Ok(())
    }

    /// Net energy bought from peers in each slot.
    pub fn net_purchase(&self) -> Vec<f64> {
        let mut net = vec![0.0; self.slots()];
        for v in self.trades.values() {
            for (n, p) in net.iter_mut().zip(v) {
                *n += p;
            }
        }
        net
    }

    /// Element-wise affine combination `a·self + b·other`; trade maps are
    /// merged by key.
    pub fn combine(&self, a: f64, other: &Schedule, b: f64) -> Schedule {
        let mix = |x: &Vec<f64>, y: &Vec<f64>| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect();
        let mut trades = BTreeMap::new();
        let zero = vec![0.0; self.slots()];
        for k in self.trades.keys().chain(other.trades.keys()) {
            let x = self.trades.get(k).unwrap_or(&zero);
            let y = other.trades.get(k).unwrap_or(&zero);
            trades.insert(*k, mix(x, y));
        }
        Schedule {
            g: mix(&self.g, &other.g),
            r: mix(&self.r, &other.r),
            l_ac: mix(&self.l_ac, &other.l_ac),
            l_fl: mix(&self.l_fl, &other.l_fl),
            c: mix(&self.c, &other.c),
            d: mix(&self.d, &other.d),
            e_fit: mix(&self.e_fit, &other.e_fit),
            e_dr: mix(&self.e_dr, &other.e_dr),
            e_as: mix(&self.e_as, &other.e_as),
            trades,
            peak: a * self.peak + b * other.peak,
        }
    }
}

/// Money terms of one household's operating cost. Rewards are stored as
/// positive amounts and subtracted in `total`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub grid: f64,
    pub ac: f64,
    pub flex: f64,
    pub battery: f64,
    pub p2p: f64,
    pub fit: f64,
    pub dr: f64,
    pub as_: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn rewards(&self) -> f64 {
        self.fit + self.dr + self.as_
    }
}

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> Result<(), ModelError> {
    if got == want {
        Ok(())
    } else {
        Err(ModelError::Dimension {
            what: what.to_string(),
            got,
            want,
        })
    }
}
