use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{fmt_f64, ScenarioError};
use crate::coordinator::TraceRecord;
use crate::model::{CostBreakdown, Mode, Schedule, UserId};

/// Outcome of one simulated day.
#[derive(Debug, Clone)]
pub struct DayResult {
    pub day: usize,
    pub mode: Mode,
    pub schedules: BTreeMap<UserId, Schedule>,
    pub costs: BTreeMap<UserId, CostBreakdown>,
    /// Standalone results to compare against, when both modes ran.
    pub baseline: Option<(BTreeMap<UserId, Schedule>, BTreeMap<UserId, CostBreakdown>)>,
    /// Empty for standalone runs.
    pub trace: Vec<TraceRecord>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RunResults {
    pub days: Vec<DayResult>,
    /// Echoed to `effective.conf`.
    pub effective_config: String,
}

/// One line of `comparison.csv`; `user = None` is the aggregate row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub user: Option<UserId>,
    pub sa_total: f64,
    pub co_total: f64,
    pub reduction_pct: f64,
}

impl RunResults {
    pub fn all_converged(&self) -> bool {
        self.days.iter().all(|d| d.converged)
    }

    /// Per-user costs summed over days, standalone vs cooperative.
    pub fn comparison(&self) -> Option<Vec<ComparisonRow>> {
        let mut sa: BTreeMap<UserId, f64> = BTreeMap::new();
        let mut co: BTreeMap<UserId, f64> = BTreeMap::new();
        for d in &self.days {
            let (_, base) = d.baseline.as_ref()?;
            for (u, c) in base {
                *sa.entry(*u).or_default() += c.total;
            }
            for (u, c) in &d.costs {
                *co.entry(*u).or_default() += c.total;
            }
        }
        if self.days.is_empty() {
            return None;
        }
        let row = |user, s: f64, c: f64| ComparisonRow {
            user,
            sa_total: s,
            co_total: c,
            reduction_pct: reduction(s, c),
        };
        let mut rows: Vec<ComparisonRow> = sa.iter().map(|(u, s)| row(Some(*u), *s, co[u])).collect();
        rows.push(row(None, sa.values().sum(), co.values().sum()));
        Some(rows)
    }
}

/// Percentage saved relative to `|sa|`; 0 when nothing was at stake.
fn reduction(sa: f64, co: f64) -> f64 {
    if sa.abs() < 1e-12 {
        0.0
    } else {
        100.0 * (sa - co) / sa.abs()
    }
}

/// Four decimals, without a negative zero.
fn pct(x: f64) -> String {
    let s = format!("{x:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "user,sa_total,co_total,reduction_pct")?;
    for r in rows {
        let user = r.user.map(|u| u.to_string()).unwrap_or_else(|| "all".into());
        writeln!(
            w,
            "{user},{},{},{}",
            fmt_f64(r.sa_total),
            fmt_f64(r.co_total),
            pct(r.reduction_pct)
        )?;
    }
    Ok(())
}

/// One user's schedules for several days; one row per slot.
pub fn write_schedule_csv<W: Write>(days: &[(usize, &Schedule)], mut w: W) -> std::io::Result<()> {
    let peers: Vec<UserId> = days
        .first()
        .map(|(_, s)| s.trades.keys().copied().collect())
        .unwrap_or_default();
    write!(w, "day,slot")?;
    if let Some((_, s)) = days.first() {
        for (name, _) in s.vectors() {
            write!(w, ",{name}")?;
        }
    }
    write!(w, ",peak")?;
    for v in &peers {
        write!(w, ",p_{v}")?;
    }
    writeln!(w)?;
    for (d, s) in days {
        for t in 0..s.slots() {
            write!(w, "{d},{t}")?;
            for (_, v) in s.vectors() {
                write!(w, ",{}", fmt_f64(v[t]))?;
            }
            write!(w, ",{}", fmt_f64(s.peak))?;
            for v in &peers {
                write!(w, ",{}", fmt_f64(s.trades[v][t]))?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

/// Inverse of [`write_schedule_csv`].
pub fn read_schedules_csv(path: &Path) -> Result<BTreeMap<usize, Schedule>, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|e| ScenarioError::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let syntax = |line: usize, msg: String| ScenarioError::Syntax {
        file: path.to_path_buf(),
        line,
        msg,
    };
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| ScenarioError::Missing {
                file: path.to_path_buf(),
                field: name.to_string(),
            })
    };
    let (day_i, slot_i, peak_i) = (col("day")?, col("slot")?, col("peak")?);
    let names = ["g", "r", "l_ac", "l_fl", "c", "d", "e_fit", "e_dr", "e_as"];
    let vec_i = names.iter().map(|n| col(n)).collect::<Result<Vec<_>, _>>()?;
    let peers: Vec<(UserId, usize)> = header
        .iter()
        .enumerate()
        .filter_map(|(i, h)| {
            h.strip_prefix("p_")
                .and_then(|v| v.parse().ok())
                .map(|v| (UserId(v), i))
        })
        .collect();

    let mut out: BTreeMap<usize, Schedule> = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let cells: Vec<&str> = line.split(',').collect();
        let num = |j: usize| -> Result<f64, ScenarioError> {
            let c = cells.get(j).copied().unwrap_or("");
            c.parse()
                .map_err(|_| syntax(lineno, format!("column `{}`: cannot parse `{c}`", header[j])))
        };
        let day = num(day_i)? as usize;
        let slot = num(slot_i)? as usize;
        let s = out.entry(day).or_insert_with(|| Schedule {
            g: vec![],
            r: vec![],
            l_ac: vec![],
            l_fl: vec![],
            c: vec![],
            d: vec![],
            e_fit: vec![],
            e_dr: vec![],
            e_as: vec![],
            trades: peers.iter().map(|(v, _)| (*v, vec![])).collect(),
            peak: 0.0,
        });
        if slot != s.g.len() {
            return Err(syntax(lineno, format!("slot {slot} out of sequence")));
        }
        for (v, j) in s.vectors_mut().into_iter().zip(&vec_i) {
            v.push(num(*j)?);
        }
        s.peak = num(peak_i)?;
        for (v, j) in &peers {
            let x = num(*j)?;
            s.trades.get_mut(v).expect("peer registered").push(x);
        }
    }
    Ok(out)
}

fn create(path: &Path) -> Result<fs::File, ScenarioError> {
    fs::File::create(path).map_err(|e| ScenarioError::io(path, e))
}

fn write_schedules(dir: &Path, by_day: &[(usize, &BTreeMap<UserId, Schedule>)]) -> Result<(), ScenarioError> {
    fs::create_dir_all(dir).map_err(|e| ScenarioError::io(dir, e))?;
    let users: Vec<UserId> = by_day
        .first()
        .map(|(_, m)| m.keys().copied().collect())
        .unwrap_or_default();
    for u in users {
        let path = dir.join(format!("{u}.csv"));
        let rows: Vec<(usize, &Schedule)> = by_day.iter().map(|(d, m)| (*d, &m[&u])).collect();
        write_schedule_csv(&rows, create(&path)?).map_err(|e| ScenarioError::io(&path, e))?;
    }
    Ok(())
}

/// Writes `schedules/<id>.csv`, `costs.csv`, `summary.csv`,
/// `effective.conf`, plus `comparison.csv` and `schedules_sa/` when a
/// baseline is present and `trace.csv` for cooperative runs.
pub fn write_results(res: &RunResults, out: &Path) -> Result<(), ScenarioError> {
    fs::create_dir_all(out).map_err(|e| ScenarioError::io(out, e))?;
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e| ScenarioError::io(&p, e)
    };

    let main: Vec<_> = res.days.iter().map(|d| (d.day, &d.schedules)).collect();
    write_schedules(&out.join("schedules"), &main)?;

    let p = out.join("costs.csv");
    let mut w = create(&p)?;
    (|| -> std::io::Result<()> {
        writeln!(w, "day,mode,user,grid,ac,flex,battery,p2p,fit,dr,as,total")?;
        for d in &res.days {
            let mut emit = |mode: &str, costs: &BTreeMap<UserId, CostBreakdown>| -> std::io::Result<()> {
                for (u, c) in costs {
                    let vals = [c.grid, c.ac, c.flex, c.battery, c.p2p, c.fit, c.dr, c.as_, c.total];
                    let vals: Vec<String> = vals.iter().map(|x| fmt_f64(*x)).collect();
                    writeln!(w, "{},{mode},{u},{}", d.day, vals.join(","))?;
                }
                Ok(())
            };
            if let Some((_, base)) = &d.baseline {
                emit("sa", base)?;
            }
            emit(if d.mode == Mode::Standalone { "sa" } else { "co" }, &d.costs)?;
        }
        Ok(())
    })()
    .map_err(io(&p))?;

    let p = out.join("summary.csv");
    let mut w = create(&p)?;
    (|| -> std::io::Result<()> {
        writeln!(w, "day,converged,iterations")?;
        for d in &res.days {
            writeln!(w, "{},{},{}", d.day, d.converged, d.iterations)?;
        }
        Ok(())
    })()
    .map_err(io(&p))?;

    if let Some(rows) = res.comparison() {
        let p = out.join("comparison.csv");
        write_comparison_csv(&rows, create(&p)?).map_err(io(&p))?;
        let base: Vec<_> = res
            .days
            .iter()
            .filter_map(|d| d.baseline.as_ref().map(|(s, _)| (d.day, s)))
            .collect();
        write_schedules(&out.join("schedules_sa"), &base)?;
    }

    if res.days.iter().any(|d| !d.trace.is_empty()) {
        let p = out.join("trace.csv");
        let mut w = create(&p)?;
        (|| -> std::io::Result<()> {
            let users: Vec<UserId> = res
                .days
                .iter()
                .find_map(|d| d.trace.first())
                .map(|r| r.objectives.keys().copied().collect())
                .unwrap_or_default();
            write!(w, "day,k,primal_gap,dual_gap")?;
            for u in &users {
                write!(w, ",obj_{u}")?;
            }
            writeln!(w)?;
            for d in &res.days {
                for r in &d.trace {
                    write!(w, "{},{},{:e},{:e}", d.day, r.k, r.primal_gap, r.dual_gap)?;
                    for u in &users {
                        write!(w, ",{}", fmt_f64(r.objectives[u]))?;
                    }
                    writeln!(w)?;
                }
            }
            Ok(())
        })()
        .map_err(io(&p))?;
    }

    let p = out.join("effective.conf");
    fs::write(&p, &res.effective_config).map_err(io(&p))?;
    Ok(())
}
