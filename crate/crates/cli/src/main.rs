//! `robustcmu` — robust multiclass scheduling simulator.
//!
//! Subcommands:
//! - `validate <config>`: parse and validate a configuration, print the
//!   derived quantities.
//! - `limit <config>`: estimate the limit-game robust value over the
//!   configured strategy family.
//! - `prelimit <config> --n <scale> --policy <name>`: estimate the robust
//!   cost of one policy in the n-th system under the configured adversary;
//!   optionally dump an event log or scaled trajectory.
//! - `study <config> --kind <name> --out <path>`: run a study and write its
//!   CSV table.
//!
//! Exit codes: 0 on success, 2 on validation errors, 3 on runtime errors.
//! `ROBUSTCMU_THREADS` caps the worker pool.

use clap::{Parser, Subcommand};
use robustcmu_core::harness::{self, fmt_float, parse_config, CsvTable, ParsedConfig, StudyKind};
use robustcmu_core::limit_game::estimate_value;
use robustcmu_core::model::stream_of_index;
use robustcmu_core::prelimit::{
    estimate_qcp_cost, simulate_system, EventKind, Policy, PrelimitParams,
};
use robustcmu_core::{CurveTable64, Error};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "robustcmu",
    version,
    about = "Robust c-mu scheduling simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a configuration file.
    Validate { config: PathBuf },
    /// Estimate the limit-game robust value over the strategy family.
    Limit {
        config: PathBuf,
        /// Replications per strategy (defaults to study.limit_reps).
        #[arg(long)]
        reps: Option<usize>,
        /// Euler step (defaults to 1e-3 of the effective horizon).
        #[arg(long)]
        step: Option<f64>,
        /// Master seed (defaults to study.seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Write the per-strategy CSV table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the robust cost of one policy in the n-th system.
    Prelimit {
        config: PathBuf,
        /// Scale parameter n.
        #[arg(long)]
        n: u64,
        /// cmu_preemptive | cmu_nonpreemptive | fixed_fraction |
        /// static_priority:<1-based order>
        #[arg(long)]
        policy: String,
        /// Replications (defaults to study.reps).
        #[arg(long)]
        reps: Option<usize>,
        /// Master seed (defaults to study.seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Dump the event log of a single run (CSV).
        #[arg(long)]
        dump_events: Option<PathBuf>,
        /// Dump the scaled trajectory of a single run (CSV).
        #[arg(long)]
        dump_trajectory: Option<PathBuf>,
    },
    /// Run a study and write its CSV table.
    Study {
        config: PathBuf,
        /// convergence | collapse | policy_dominance | value_limit
        /// (defaults to study.kind).
        #[arg(long)]
        kind: Option<String>,
        /// Output CSV path (defaults to study.out, else stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    // die quietly when the consumer closes the pipe (e.g. `... | head`)
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(threads) = std::env::var("ROBUSTCMU_THREADS") {
        match threads.parse::<usize>() {
            Ok(t) if t > 0 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build_global();
            }
            _ => eprintln!("ignoring invalid ROBUSTCMU_THREADS='{threads}'"),
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Validate { config } => {
            let parsed: ParsedConfig<f64> = parse_config(&config)?;
            let sys = &parsed.model.system;
            println!("configuration OK: {} classes", sys.class_count());
            println!("  rho     = {}", join(sys.rho()));
            println!("  theta   = {}", join(sys.theta()));
            println!("  m_hat   = {}", join(sys.m_hat()));
            println!("  sigma   = {}", join(sys.sigma()));
            println!("  sigma_S = {}", join(sys.sigma_s()));
            println!(
                "  effective horizon = {}",
                fmt_float(parsed.model.discount.effective_horizon())
            );
            println!(
                "  adversary family: {} strategies, baseline '{}'",
                parsed.study.family.len(),
                parsed.study.baseline.id()
            );
            Ok(())
        }
        Command::Limit {
            config,
            reps,
            step,
            seed,
            out,
        } => {
            let mut parsed: ParsedConfig<f64> = parse_config(&config)?;
            if let Some(r) = reps {
                parsed.study.limit_reps = r;
            }
            if let Some(h) = step {
                parsed.sim.step = Some(h);
            }
            if let Some(s) = seed {
                parsed.study.seed = s;
            }
            parsed.study.validate()?;
            let horizon = parsed.model.discount.effective_horizon();
            let curve = CurveTable64::with_default_range(
                &parsed.model.system,
                &parsed.model.cost,
                parsed.sim.table_points,
                horizon,
            );
            let search = estimate_value(
                &parsed.model,
                &curve,
                &parsed.study.family,
                parsed.study.family.len(),
                horizon,
                parsed.sim.limit_step(horizon),
                parsed.study.limit_reps,
                parsed.study.seed,
            );
            let best = search.best_estimate();
            println!(
                "V_hat = {} (SE {}) attained by '{}' over {} strategies",
                fmt_float(best.mean),
                fmt_float(best.std_error),
                search.best_strategy().id(),
                search.evaluated.len()
            );
            emit(harness::value_search_table(&parsed, &search), out)?;
            Ok(())
        }
        Command::Prelimit {
            config,
            n,
            policy,
            reps,
            seed,
            dump_events,
            dump_trajectory,
        } => {
            let parsed: ParsedConfig<f64> = parse_config(&config)?;
            let policy = Policy::parse(&policy)?;
            let reps = reps.unwrap_or(parsed.study.reps);
            let seed = seed.unwrap_or(parsed.study.seed);
            let horizon = parsed.model.discount.effective_horizon();
            let params = PrelimitParams {
                n,
                policy: policy.clone(),
                horizon,
                output_points: parsed.sim.output_points,
                event_cap: parsed.sim.event_cap,
            };
            if dump_events.is_some() || dump_trajectory.is_some() {
                let (log, traj) =
                    simulate_system(&parsed.model, &parsed.study.baseline, &params, seed)?;
                if let Some(path) = dump_events {
                    event_log_table(&log, parsed.model.system.class_count()).write_to(&path)?;
                    println!("event log written to {}", path.display());
                }
                if let Some(path) = dump_trajectory {
                    trajectory_table(&traj, parsed.model.system.class_count()).write_to(&path)?;
                    println!("trajectory written to {}", path.display());
                }
            }
            let est =
                estimate_qcp_cost(&parsed.model, &parsed.study.baseline, &params, reps, seed)?;
            println!(
                "J_hat^n = {} (SE {}) at n={} under {} / '{}', {} reps",
                fmt_float(est.mean),
                fmt_float(est.std_error),
                n,
                policy.name(),
                parsed.study.baseline.id(),
                reps
            );
            println!("  holding = {}", fmt_float(est.holding));
            for (s, d) in est.divergence.iter().enumerate() {
                let (kind, class) = stream_of_index(s, parsed.model.system.class_count());
                println!("  div_{}_{} = {}", kind.label(), class + 1, fmt_float(*d));
            }
            Ok(())
        }
        Command::Study {
            config,
            kind,
            out,
            seed,
        } => {
            let mut parsed: ParsedConfig<f64> = parse_config(&config)?;
            if let Some(k) = kind {
                parsed.study.kind = StudyKind::parse(&k)?;
            }
            if let Some(s) = seed {
                parsed.study.seed = s;
            }
            let out = out.or_else(|| parsed.study.out.clone());
            let table = harness::run_study(&parsed)?;
            println!(
                "study '{}' finished: {} rows",
                parsed.study.kind.name(),
                table.rows.len()
            );
            emit(table, out)?;
            Ok(())
        }
    }
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|&v| fmt_float(v))
        .collect::<Vec<_>>()
        .join(" ")
}

fn emit(table: CsvTable, out: Option<PathBuf>) -> Result<(), Error> {
    match out {
        Some(path) => {
            table.write_to(&path)?;
            println!("table written to {}", path.display());
        }
        None => print!("{}", table.render()),
    }
    Ok(())
}

/// Event-log dump: `time, kind, class, x_1..x_I, T_1..T_I`.
fn event_log_table(log: &robustcmu_core::EventLog64, class_count: usize) -> CsvTable {
    let mut header = String::from("time,kind,class");
    for i in 0..class_count {
        header.push_str(&format!(",x_{}", i + 1));
    }
    for i in 0..class_count {
        header.push_str(&format!(",T_{}", i + 1));
    }
    let mut table = CsvTable::new(header);
    for rec in &log.events {
        let (kind, class) = match rec.kind {
            EventKind::Arrival(i) => ("arrival", i + 1),
            EventKind::Departure(i) => ("departure", i + 1),
            EventKind::GridTick => ("tick", 0),
        };
        let mut row = format!("{},{},{}", fmt_float(rec.time), kind, class);
        for &x in &rec.queue {
            row.push_str(&format!(",{x}"));
        }
        for &t in &rec.service_time {
            row.push_str(&format!(",{}", fmt_float(t)));
        }
        table.push_row(row);
    }
    table
}

/// Trajectory dump: `t, xhat_1..I, yhat_1..I, rn_A_1..I, rn_S_1..I`.
fn trajectory_table(traj: &robustcmu_core::ScaledTrajectory64, class_count: usize) -> CsvTable {
    let mut header = String::from("t");
    for i in 0..class_count {
        header.push_str(&format!(",xhat_{}", i + 1));
    }
    for i in 0..class_count {
        header.push_str(&format!(",yhat_{}", i + 1));
    }
    for i in 0..class_count {
        header.push_str(&format!(",rn_A_{}", i + 1));
    }
    for i in 0..class_count {
        header.push_str(&format!(",rn_S_{}", i + 1));
    }
    let mut table = CsvTable::new(header);
    for k in 0..traj.grid_len() {
        let mut row = fmt_float(traj.times[k]);
        for &x in traj.x_hat_at(k, class_count) {
            row.push_str(&format!(",{}", fmt_float(x)));
        }
        for &y in traj.y_hat_at(k, class_count) {
            row.push_str(&format!(",{}", fmt_float(y)));
        }
        for s in 0..2 * class_count {
            row.push_str(&format!(",{}", fmt_float(traj.rn[s].log_ratio[k])));
        }
        table.push_row(row);
    }
    table
}
