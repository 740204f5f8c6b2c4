//! `vpp` subcommands.

pub mod pipeline;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use vpp_core::chain::{dump_text, read_log, replay, write_log};
use vpp_core::io::{gen_synthetic, load_scenario, write_results, write_scenario, DayResult, RunResults, Scenario};
use vpp_core::model::{Mode, UserId};

use pipeline::{final_battery, relative_gap, run_co_day, run_oracle_day, run_sa_day};

/// Exit status when a run finishes but did not converge or left a check red.
pub const EXIT_RUN_FAILED: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "vpp", version, about = "Decentralized VPP energy management simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve every household's standalone problem.
    RunSa(RunArgs),
    /// Run the decentralized loop over the simulated network and ledger.
    RunCo(RunArgs),
    /// Run both modes and write the cost comparison.
    Compare(RunArgs),
    /// Run the decentralized loop and check it against the centralized solve.
    VerifyOracle(RunArgs),
    /// Write a synthetic scenario.
    GenData(GenArgs),
    /// Print the ledger logs of a cooperative run.
    ChainDump(DumpArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Sets both convergence thresholds.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Network seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Only the first `n` days.
    #[arg(long)]
    pub days: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub users: usize,
    #[arg(long, default_value_t = 1)]
    pub days: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    /// Results directory of a cooperative run.
    #[arg(long, required_unless_present = "log")]
    pub out: Option<PathBuf>,
    /// A single log file instead.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

/// Runs a command; `Ok(false)` means it completed but failed its checks.
pub fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::RunSa(a) => run_scenario(&a, Job::Sa),
        Command::RunCo(a) => run_scenario(&a, Job::Co),
        Command::Compare(a) => run_scenario(&a, Job::Compare),
        Command::VerifyOracle(a) => run_scenario(&a, Job::Oracle),
        Command::GenData(a) => gen_data(&a),
        Command::ChainDump(a) => chain_dump(&a),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Job {
    Sa,
    Co,
    Compare,
    Oracle,
}

/// Loads the scenario and applies command-line overrides.
pub fn effective_scenario(a: &RunArgs) -> Result<Scenario> {
    let mut s = load_scenario(&a.scenario)?;
    if let Some(r) = a.rho {
        s.algo.rho = r;
    }
    if let Some(e) = a.eps {
        s.algo.eps1 = e;
        s.algo.eps2 = e;
    }
    if let Some(seed) = a.seed {
        s.net.seed = seed;
    }
    if let Some(m) = a.max_iter {
        s.algo.max_iter = m;
    }
    if let Some(d) = a.days {
        if d == 0 || d > s.days {
            bail!("--days must lie in 1..={}", s.days);
        }
        s.truncate_days(d);
    }
    s.validate_at(&a.scenario)?;
    Ok(s)
}

fn run_scenario(a: &RunArgs, job: Job) -> Result<bool> {
    let s = effective_scenario(a)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let chain_dir = a.out.join("chain");
    if job != Job::Sa {
        fs::create_dir_all(&chain_dir)?;
    }

    let mut ok = true;
    let mut results = RunResults {
        days: Vec::new(),
        effective_config: s.to_conf(),
    };
    let mut carry: Option<BTreeMap<UserId, f64>> = None;
    let mut carry_sa: Option<BTreeMap<UserId, f64>> = None;

    for d in 0..s.days {
        let profiles = s.day(d, carry.as_ref());
        let sa = match job {
            Job::Sa | Job::Compare => {
                // the standalone baseline keeps its own battery history
                let p_sa = s.day(d, carry_sa.as_ref());
                let sa = run_sa_day(&p_sa, &s.tariff, &s.algo.qp)?;
                carry_sa = Some(final_battery(&p_sa, &sa.schedules)?);
                if !sa.feasible() {
                    ok = false;
                    for (u, v) in sa.violations.iter().filter(|(_, v)| !v.is_empty()) {
                        eprintln!("day {d}: standalone schedule of user {u} infeasible: {v}");
                    }
                }
                Some(sa)
            }
            _ => None,
        };

        if job == Job::Sa {
            let sa = sa.expect("standalone job");
            println!("day {d}: standalone total {:.6}", sa.total());
            carry = carry_sa.clone();
            results.days.push(DayResult {
                day: d,
                mode: Mode::Standalone,
                schedules: sa.schedules,
                costs: sa.costs,
                baseline: None,
                trace: Vec::new(),
                converged: true,
                iterations: 1,
            });
            continue;
        }

        let net = vpp_core::simnet::NetConfig {
            seed: s.net.seed.wrapping_add(d as u64),
            ..s.net
        };
        let co = run_co_day(&profiles, &s.tariff, &s.algo, net).with_context(|| format!("day {d}"))?;
        let day_ok = co.ok(s.algo.eps1);
        ok &= day_ok;
        println!(
            "day {d}: {} after {} iterations (primal gap {:.3e}, dual gap {:.3e}), cooperative total {:.6}",
            if co.outcome.converged {
                "converged"
            } else {
                "NOT converged"
            },
            co.outcome.iterations,
            co.outcome.report.primal_gap,
            co.outcome.report.dual_gap,
            co.total()
        );
        for (u, v) in co.violations.iter().filter(|(_, v)| !v.is_empty()) {
            eprintln!("day {d}: cooperative schedule of user {u} infeasible: {v}");
        }
        if co.max_mismatch > 10.0 * s.algo.eps1 {
            eprintln!("day {d}: trade mismatch {:.3e}", co.max_mismatch);
        }

        if job == Job::Oracle {
            let oracle = run_oracle_day(&profiles, &s.tariff, &s.algo)?;
            let gap = relative_gap(co.total(), oracle.objective);
            println!(
                "day {d}: centralized objective {:.6}, relative gap {gap:.3e}",
                oracle.objective
            );
            ok &= gap <= 1e-3;
        }

        let log_path = chain_dir.join(format!("day{d}.log"));
        let f = fs::File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;
        write_log(co.net.ledger(), std::io::BufWriter::new(f))?;
        let events_path = chain_dir.join(format!("day{d}.events"));
        co.net
            .write_events(std::io::BufWriter::new(fs::File::create(&events_path)?))
            .with_context(|| format!("writing {}", events_path.display()))?;

        carry = Some(final_battery(&profiles, &co.outcome.schedules)?);
        results.days.push(DayResult {
            day: d,
            mode: Mode::Cooperative,
            schedules: co.outcome.schedules.clone(),
            costs: co.costs.clone(),
            baseline: sa.map(|sa| (sa.schedules, sa.costs)),
            trace: co.outcome.trace.clone(),
            converged: co.outcome.converged,
            iterations: co.outcome.iterations,
        });
    }

    write_results(&results, &a.out)?;
    if let Some(rows) = results.comparison() {
        println!(
            "{:>6} {:>14} {:>14} {:>10}",
            "user", "sa_total", "co_total", "reduction"
        );
        for r in rows {
            let u = r.user.map(|u| u.to_string()).unwrap_or_else(|| "all".into());
            println!(
                "{u:>6} {:>14.6} {:>14.6} {:>9.2}%",
                r.sa_total, r.co_total, r.reduction_pct
            );
        }
    }
    println!("results written to {}", a.out.display());
    Ok(ok)
}

fn gen_data(a: &GenArgs) -> Result<bool> {
    if a.users < 2 {
        bail!("--users must be at least 2");
    }
    if a.days == 0 {
        bail!("--days must be at least 1");
    }
    let s = gen_synthetic(a.seed, a.users, a.days);
    write_scenario(&s, &a.out)?;
    println!("wrote {} users x {} days to {}", a.users, a.days, a.out.display());
    Ok(true)
}

fn chain_dump(a: &DumpArgs) -> Result<bool> {
    let logs: Vec<PathBuf> = match (&a.log, &a.out) {
        (Some(l), _) => vec![l.clone()],
        (None, Some(out)) => {
            let dir = out.join("chain");
            let mut v: Vec<PathBuf> = fs::read_dir(&dir)
                .with_context(|| format!("reading {}", dir.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "log"))
                .collect();
            v.sort_by_key(|p| day_index(p));
            v
        }
        (None, None) => unreachable!("clap requires one of them"),
    };
    if logs.is_empty() {
        bail!("no ledger logs found");
    }
    let mut ok = true;
    let stdout = std::io::stdout();
    for path in logs {
        let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        println!("== {}", path.display());
        match read_log(&bytes[..]) {
            Ok(records) => {
                dump_text(&records, stdout.lock())?;
                match replay(&records) {
                    Ok(Some(r)) => println!("replay ok: height {} state_root {}", r.height, r.state.state_root()),
                    Ok(None) => println!("empty log"),
                    Err(e) => {
                        println!("replay FAILED: {e}");
                        ok = false;
                    }
                }
            }
            Err(e) => {
                println!("unreadable log: {e}");
                ok = false;
            }
        }
    }
    Ok(ok)
}

fn day_index(p: &Path) -> usize {
    p.file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.strip_prefix("day"))
        .and_then(|s| s.parse().ok())
        .unwrap_or(usize::MAX)
}
