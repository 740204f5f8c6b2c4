use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::conf::{render, Conf};
use super::{fmt_f64, ScenarioError};
use crate::coordinator::AlgoConfig;
use crate::model::{
    AcParams, BatteryParams, ExogenousSeries, FlexParams, Horizon, ModelError, Tariff, UserId, UserProfile,
};
use crate::simnet::{Latency, NetConfig};

/// Every input of a multi-day experiment.
///
/// User profiles carry the full `slots * days` series; `flex.total` is the
/// energy per day. Use [`Scenario::day`] for the per-day problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub horizon: Horizon,
    pub days: usize,
    pub users: Vec<UserProfile>,
    /// One day of prices, applied to every day.
    pub tariff: Tariff,
    pub algo: AlgoConfig,
    pub net: NetConfig,
}

impl Scenario {
    /// Profiles for day `d`. `b_init` overrides the initial battery charge,
    /// typically with the previous day's final level.
    pub fn day(&self, d: usize, b_init: Option<&BTreeMap<UserId, f64>>) -> Vec<UserProfile> {
        let h = self.horizon.slots();
        let cut = |v: &Vec<f64>| v[d * h..(d + 1) * h].to_vec();
        self.users
            .iter()
            .map(|p| {
                let mut q = p.clone();
                q.exo = ExogenousSeries {
                    renewable_cap: cut(&p.exo.renewable_cap),
                    t_out: cut(&p.exo.t_out),
                    inflexible: cut(&p.exo.inflexible),
                };
                q.flex.lo = cut(&p.flex.lo);
                q.flex.hi = cut(&p.flex.hi);
                q.flex.reference = cut(&p.flex.reference);
                if let Some(b) = b_init.and_then(|m| m.get(&p.id)) {
                    q.battery.b_init = b.clamp(0.0, q.battery.capacity);
                }
                q
            })
            .collect()
    }

    /// Keeps only the first `days` days.
    pub fn truncate_days(&mut self, days: usize) {
        let n = days * self.horizon.slots();
        for p in &mut self.users {
            for v in [
                &mut p.exo.renewable_cap,
                &mut p.exo.t_out,
                &mut p.exo.inflexible,
                &mut p.flex.lo,
                &mut p.flex.hi,
                &mut p.flex.reference,
            ] {
                v.truncate(n);
            }
        }
        self.days = self.days.min(days);
    }

    /// `scenario.conf` text for this scenario, e.g. after overrides.
    pub fn to_conf(&self) -> String {
        scenario_conf(self)
    }

    pub fn user_ids(&self) -> Vec<UserId> {
        self.users.iter().map(|p| p.id).collect()
    }

    /// Checks lengths, id uniqueness and every day's model invariants.
    /// Errors name the file the offending value comes from under `root`.
    pub fn validate_at(&self, root: &Path) -> Result<(), ScenarioError> {
        let conf = root.join("scenario.conf");
        if self.days == 0 {
            return Err(ScenarioError::invalid(&conf, "days", "at least one day is required"));
        }
        if self.users.len() < 2 {
            return Err(ScenarioError::invalid(
                &conf,
                "users",
                format!("need at least 2 users, got {}", self.users.len()),
            ));
        }
        self.net
            .validate()
            .map_err(|m| ScenarioError::invalid(&conf, "net.timeout", m))?;
        if !(self.algo.rho > 0.0 && self.algo.rho.is_finite()) {
            return Err(ScenarioError::invalid(&conf, "algo.rho", "must be positive"));
        }
        if !(self.algo.eps1 > 0.0 && self.algo.eps2 > 0.0) {
            return Err(ScenarioError::invalid(
                &conf,
                "algo.eps1",
                "thresholds must be positive",
            ));
        }
        if self.algo.max_iter == 0 {
            return Err(ScenarioError::invalid(&conf, "algo.max_iter", "must be positive"));
        }
        if let Some(b) = self.algo.trade_bound {
            if !(b > 0.0) {
                return Err(ScenarioError::invalid(&conf, "algo.trade_bound", "must be positive"));
            }
        }
        if let Err(e) = self.tariff.validate(self.horizon) {
            let file = match &e {
                ModelError::Invalid { field, .. } if field.starts_with("pi_dr") || field.starts_with("pi_as") => {
                    root.join("tariff.csv")
                }
                ModelError::Dimension { .. } => root.join("tariff.csv"),
                _ => conf.clone(),
            };
            return Err(model_err(&file, e));
        }

        let mut seen = BTreeSet::new();
        let want = self.horizon.slots() * self.days;
        for p in &self.users {
            let dir = user_dir(root, p.id);
            if !seen.insert(p.id) {
                return Err(ScenarioError::invalid(
                    &dir,
                    "id",
                    format!("user {} appears twice", p.id),
                ));
            }
            let traces = dir.join("traces.csv");
            let cols = [
                ("renewable_cap", p.exo.renewable_cap.len()),
                ("t_out", p.exo.t_out.len()),
                ("inflexible", p.exo.inflexible.len()),
                ("flex_ref", p.flex.reference.len()),
                ("flex_lo", p.flex.lo.len()),
                ("flex_hi", p.flex.hi.len()),
            ];
            for (field, got) in cols {
                if got != want {
                    return Err(ScenarioError::Length {
                        file: traces,
                        field: field.into(),
                        got,
                        want,
                    });
                }
            }
        }
        for d in 0..self.days {
            for q in self.day(d, None) {
                if let Err(e) = q.validate() {
                    let dir = user_dir(root, q.id);
                    let file = match &e {
                        ModelError::Invalid { field, .. }
                            if ["renewable_cap", "t_out", "inflexible", "flex.lo"].contains(&field.as_str()) =>
                        {
                            dir.join("traces.csv")
                        }
                        _ => dir.join("user.conf"),
                    };
                    let err = model_err(&file, e);
                    return Err(match err {
                        ScenarioError::Invalid { file, field, msg } => ScenarioError::Invalid {
                            file,
                            field,
                            msg: format!("day {d}: {msg}"),
                        },
                        other => other,
                    });
                }
            }
        }
        Ok(())
    }
}

fn model_err(file: &Path, e: ModelError) -> ScenarioError {
    match e {
        ModelError::Invalid { field, reason } => ScenarioError::invalid(file, &field, reason),
        ModelError::Dimension { what, got, want } => ScenarioError::Length {
            file: file.to_path_buf(),
            field: what,
            got,
            want,
        },
        ModelError::Infeasible(msg) => ScenarioError::invalid(file, "flex.total", msg),
    }
}

fn user_dir(root: &Path, id: UserId) -> PathBuf {
    root.join("users").join(id.to_string())
}

const SCENARIO_KEYS: &[&str] = &[
    "slots",
    "days",
    "users",
    "tariff.alpha",
    "tariff.beta",
    "tariff.pi_p2p",
    "tariff.pi_fit",
    "algo.rho",
    "algo.eps1",
    "algo.eps2",
    "algo.max_iter",
    "algo.trade_bound",
    "net.latency",
    "net.timeout",
    "net.seed",
];

const USER_KEYS: &[&str] = &[
    "fuse_limit",
    "ac.r_thermal",
    "ac.c_thermal",
    "ac.gamma",
    "ac.tau",
    "ac.t_min",
    "ac.t_max",
    "ac.omega",
    "ac.t_init",
    "ac.decay",
    "flex.total",
    "flex.lo",
    "flex.hi",
    "flex.omega",
    "battery.capacity",
    "battery.max_charge",
    "battery.max_discharge",
    "battery.eta",
    "battery.omega",
    "battery.b_init",
];

fn parse_latency(conf: &Conf) -> Result<Latency, ScenarioError> {
    let Some(raw) = conf.raw("net.latency") else {
        return Ok(NetConfig::default().latency);
    };
    let bad = || {
        ScenarioError::invalid(
            conf.file(),
            "net.latency",
            format!("expected `fixed:<t>` or `uniform:<lo>:<hi>`, got `{raw}`"),
        )
    };
    let parts: Vec<&str> = raw.split(':').map(str::trim).collect();
    match parts.as_slice() {
        ["fixed", t] => Ok(Latency::Fixed(t.parse().map_err(|_| bad())?)),
        ["uniform", lo, hi] => Ok(Latency::Uniform {
            lo: lo.parse().map_err(|_| bad())?,
            hi: hi.parse().map_err(|_| bad())?,
        }),
        _ => Err(bad()),
    }
}

fn render_latency(l: Latency) -> String {
    match l {
        Latency::Fixed(t) => format!("fixed:{t}"),
        Latency::Uniform { lo, hi } => format!("uniform:{lo}:{hi}"),
    }
}

/// Named numeric columns of a CSV file with a header row. `required`
/// columns must exist; `optional` ones may be absent.
fn read_columns(
    file: &Path,
    required: &[&str],
    optional: &[&str],
) -> Result<BTreeMap<String, Vec<f64>>, ScenarioError> {
    let mut rdr = csv::Reader::from_path(file).map_err(|e| csv_err(file, e))?;
    let headers = rdr.headers().map_err(|e| csv_err(file, e))?.clone();
    let mut index = BTreeMap::new();
    for name in required.iter().chain(optional) {
        match headers.iter().position(|h| h.trim() == *name) {
            Some(i) => {
                index.insert(name.to_string(), i);
            }
            None if required.contains(name) => {
                return Err(ScenarioError::Missing {
                    file: file.to_path_buf(),
                    field: name.to_string(),
                })
            }
            None => {}
        }
    }
    let mut cols: BTreeMap<String, Vec<f64>> = index.keys().map(|k| (k.clone(), Vec::new())).collect();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(file, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(row + 2);
        for (name, &i) in &index {
            let cell = rec.get(i).unwrap_or("").trim();
            let v: f64 = cell.parse().map_err(|_| ScenarioError::Syntax {
                file: file.to_path_buf(),
                line,
                msg: format!("column `{name}`: cannot parse `{cell}`"),
            })?;
            if name == "slot" && v != row as f64 {
                return Err(ScenarioError::Syntax {
                    file: file.to_path_buf(),
                    line,
                    msg: format!("slot {v} out of sequence, expected {row}"),
                });
            }
            cols.get_mut(name).expect("column registered").push(v);
        }
    }
    Ok(cols)
}

fn csv_err(file: &Path, e: csv::Error) -> ScenarioError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    ScenarioError::Syntax {
        file: file.to_path_buf(),
        line,
        msg: e.to_string(),
    }
}

/// Reads and validates a scenario directory.
pub fn load_scenario(root: &Path) -> Result<Scenario, ScenarioError> {
    let conf = Conf::read(&root.join("scenario.conf"))?;
    conf.check_keys(SCENARIO_KEYS)?;
    let slots: usize = conf.get("slots")?;
    let horizon = Horizon::new(slots).map_err(|e| model_err(conf.file(), e))?;
    let days: usize = conf.get("days")?;

    let tariff_file = root.join("tariff.csv");
    let tcols = read_columns(&tariff_file, &["slot", "pi_dr", "pi_as"], &[])?;
    let tariff = Tariff {
        alpha: conf.get("tariff.alpha")?,
        beta: conf.get("tariff.beta")?,
        pi_p2p: conf.get("tariff.pi_p2p")?,
        pi_fit: conf.get("tariff.pi_fit")?,
        pi_dr: tcols["pi_dr"].clone(),
        pi_as: tcols["pi_as"].clone(),
    };
    let d = AlgoConfig::default();
    let algo = AlgoConfig {
        rho: conf.opt("algo.rho")?.unwrap_or(d.rho),
        eps1: conf.opt("algo.eps1")?.unwrap_or(d.eps1),
        eps2: conf.opt("algo.eps2")?.unwrap_or(d.eps2),
        max_iter: conf.opt("algo.max_iter")?.unwrap_or(d.max_iter),
        trade_bound: conf.opt("algo.trade_bound")?,
        qp: d.qp,
    };
    let nd = NetConfig::default();
    let net = NetConfig {
        latency: parse_latency(&conf)?,
        timeout: conf.opt("net.timeout")?.unwrap_or(nd.timeout),
        seed: conf.opt("net.seed")?.unwrap_or(nd.seed),
    };

    let ids = match conf.raw("users") {
        Some(list) => list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<u32>()
                    .map(UserId)
                    .map_err(|_| ScenarioError::invalid(conf.file(), "users", format!("bad user id `{s}`")))
            })
            .collect::<Result<Vec<_>, _>>()?,
        None => {
            let users_dir = root.join("users");
            let mut ids = Vec::new();
            for entry in fs::read_dir(&users_dir).map_err(|e| ScenarioError::io(&users_dir, e))? {
                let entry = entry.map_err(|e| ScenarioError::io(&users_dir, e))?;
                let name = entry.file_name().to_string_lossy().to_string();
                let id = name.parse::<u32>().map_err(|_| {
                    ScenarioError::invalid(&entry.path(), "id", "user directories must be named by numeric id")
                })?;
                ids.push(UserId(id));
            }
            ids.sort();
            ids
        }
    };

    let users = ids
        .iter()
        .map(|id| load_user(&user_dir(root, *id), *id))
        .collect::<Result<Vec<_>, _>>()?;
    let scenario = Scenario {
        horizon,
        days,
        users,
        tariff,
        algo,
        net,
    };
    scenario.validate_at(root)?;
    Ok(scenario)
}

fn load_user(dir: &Path, id: UserId) -> Result<UserProfile, ScenarioError> {
    let conf = Conf::read(&dir.join("user.conf"))?;
    conf.check_keys(USER_KEYS)?;
    let cols = read_columns(
        &dir.join("traces.csv"),
        &["slot", "renewable_cap", "t_out", "inflexible", "flex_ref"],
        &["flex_lo", "flex_hi"],
    )?;
    let n = cols["slot"].len();
    let lo: f64 = conf.opt("flex.lo")?.unwrap_or(0.0);
    let hi: f64 = conf.get("flex.hi")?;
    let r_thermal: f64 = conf.get("ac.r_thermal")?;
    let c_thermal: f64 = conf.get("ac.c_thermal")?;
    let tau: f64 = conf.get("ac.tau")?;
    Ok(UserProfile {
        id,
        fuse_limit: conf.get("fuse_limit")?,
        ac: AcParams {
            r_thermal,
            c_thermal,
            gamma: conf.get("ac.gamma")?,
            tau,
            t_min: conf.get("ac.t_min")?,
            t_max: conf.get("ac.t_max")?,
            omega_ac: conf.get("ac.omega")?,
            t_init: conf.opt("ac.t_init")?.unwrap_or(tau),
            decay: conf
                .opt("ac.decay")?
                .unwrap_or_else(|| AcParams::default_decay(r_thermal, c_thermal)),
        },
        flex: FlexParams {
            total: conf.get("flex.total")?,
            lo: cols.get("flex_lo").cloned().unwrap_or_else(|| vec![lo; n]),
            hi: cols.get("flex_hi").cloned().unwrap_or_else(|| vec![hi; n]),
            reference: cols["flex_ref"].clone(),
            omega_fl: conf.get("flex.omega")?,
        },
        battery: BatteryParams {
            capacity: conf.get("battery.capacity")?,
            max_charge: conf.get("battery.max_charge")?,
            max_discharge: conf.get("battery.max_discharge")?,
            eta: conf.get("battery.eta")?,
            omega_ba: conf.get("battery.omega")?,
            b_init: conf.opt("battery.b_init")?.unwrap_or(0.0),
        },
        exo: ExogenousSeries {
            renewable_cap: cols["renewable_cap"].clone(),
            t_out: cols["t_out"].clone(),
            inflexible: cols["inflexible"].clone(),
        },
    })
}

/// Writes `s` in the layout [`load_scenario`] reads. Every optional key is
/// written explicitly.
pub fn write_scenario(s: &Scenario, root: &Path) -> Result<(), ScenarioError> {
    let mk = |p: &Path| fs::create_dir_all(p).map_err(|e| ScenarioError::io(p, e));
    let put = |p: PathBuf, text: String| fs::write(&p, text).map_err(|e| ScenarioError::io(&p, e));
    mk(root)?;
    put(root.join("scenario.conf"), scenario_conf(s))?;

    let mut t = String::from("slot,pi_dr,pi_as\n");
    for (i, (dr, as_)) in s.tariff.pi_dr.iter().zip(&s.tariff.pi_as).enumerate() {
        t.push_str(&format!("{i},{},{}\n", fmt_f64(*dr), fmt_f64(*as_)));
    }
    put(root.join("tariff.csv"), t)?;

    for p in &s.users {
        let dir = user_dir(root, p.id);
        mk(&dir)?;
        let f = fmt_f64;
        let conf = render(&[
            ("fuse_limit", f(p.fuse_limit)),
            ("ac.r_thermal", f(p.ac.r_thermal)),
            ("ac.c_thermal", f(p.ac.c_thermal)),
            ("ac.gamma", f(p.ac.gamma)),
            ("ac.tau", f(p.ac.tau)),
            ("ac.t_min", f(p.ac.t_min)),
            ("ac.t_max", f(p.ac.t_max)),
            ("ac.omega", f(p.ac.omega_ac)),
            ("ac.t_init", f(p.ac.t_init)),
            ("ac.decay", f(p.ac.decay)),
            ("flex.total", f(p.flex.total)),
            // per-slot columns below take precedence; these are fallbacks
            ("flex.lo", f(p.flex.lo.iter().copied().reduce(f64::min).unwrap_or(0.0))),
            ("flex.hi", f(p.flex.hi.iter().copied().reduce(f64::max).unwrap_or(0.0))),
            ("flex.omega", f(p.flex.omega_fl)),
            ("battery.capacity", f(p.battery.capacity)),
            ("battery.max_charge", f(p.battery.max_charge)),
            ("battery.max_discharge", f(p.battery.max_discharge)),
            ("battery.eta", f(p.battery.eta)),
            ("battery.omega", f(p.battery.omega_ba)),
            ("battery.b_init", f(p.battery.b_init)),
        ]);
        put(dir.join("user.conf"), conf)?;

        let mut tr = String::from("slot,renewable_cap,t_out,inflexible,flex_ref,flex_lo,flex_hi\n");
        for i in 0..p.exo.t_out.len() {
            tr.push_str(&format!(
                "{i},{},{},{},{},{},{}\n",
                f(p.exo.renewable_cap[i]),
                f(p.exo.t_out[i]),
                f(p.exo.inflexible[i]),
                f(p.flex.reference[i]),
                f(p.flex.lo[i]),
                f(p.flex.hi[i])
            ));
        }
        put(dir.join("traces.csv"), tr)?;
    }
    Ok(())
}

/// `scenario.conf` contents for `s`.
pub(crate) fn scenario_conf(s: &Scenario) -> String {
    let f = fmt_f64;
    let ids: Vec<String> = s.users.iter().map(|p| p.id.to_string()).collect();
    let mut pairs = vec![
        ("slots", s.horizon.slots().to_string()),
        ("days", s.days.to_string()),
        ("users", ids.join(",")),
        ("tariff.alpha", f(s.tariff.alpha)),
        ("tariff.beta", f(s.tariff.beta)),
        ("tariff.pi_p2p", f(s.tariff.pi_p2p)),
        ("tariff.pi_fit", f(s.tariff.pi_fit)),
        ("algo.rho", f(s.algo.rho)),
        ("algo.eps1", f(s.algo.eps1)),
        ("algo.eps2", f(s.algo.eps2)),
        ("algo.max_iter", s.algo.max_iter.to_string()),
    ];
    if let Some(b) = s.algo.trade_bound {
        pairs.push(("algo.trade_bound", f(b)));
    }
    pairs.push(("net.latency", render_latency(s.net.latency)));
    pairs.push(("net.timeout", s.net.timeout.to_string()));
    pairs.push(("net.seed", s.net.seed.to_string()));
    render(&pairs)
}
