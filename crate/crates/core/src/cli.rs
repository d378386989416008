//! The `mfoc` command line.
//!
//! Exit codes: 0 success, 1 invalid input, 2 solver failure, 64 usage.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::control::{evaluate_cost, optimize, CostBreakdown, OptimizerOptions};
use crate::dynamics::integrate;
use crate::error::Error;
use crate::harness::{gamma_study, limit_study, GammaOptions, InitMode, LimitOptions};
use crate::io;
use crate::model::{validate_scenario, Scenario};
use crate::transport::w1_distance;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Parser, Debug)]
#[command(name = "mfoc", about = "Sparse control of agent systems and their mean-field limit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the scenario under its own control.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: String,
    },
    /// Optimize the control of the scenario.
    Optimize {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: String,
        #[arg(long, default_value_t = 20_000)]
        budget: usize,
    },
    /// Distance of particle discretizations to a reference level.
    Limit {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<usize>,
        #[arg(long = "ref")]
        reference: usize,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long)]
        out: String,
        /// Compare every k-th time node.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long)]
        nested: bool,
    },
    /// Optimal costs across levels and their cross-evaluations.
    Gamma {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<usize>,
        #[arg(long = "ref")]
        reference: usize,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long)]
        out: String,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long, default_value_t = 20_000)]
        budget: usize,
    },
    /// Print W1 between two measure files.
    W1 { a: PathBuf, b: PathBuf },
    /// Check a scenario file.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

enum Failure {
    Invalid(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_)
            | Error::Json(_)
            | Error::DimensionMismatch { .. }
            | Error::Unnormalized(_)
            | Error::Invalid(_) => Failure::Invalid(e.to_string()),
            _ => Failure::Solver(e.to_string()),
        }
    }
}

fn load_valid(path: &PathBuf) -> Result<Scenario, Failure> {
    let s = Scenario::load(path)?;
    let problems = validate_scenario(&s);
    if problems.is_empty() {
        Ok(s)
    } else {
        Err(Failure::Invalid(problems.join("\n")))
    }
}

#[derive(Serialize)]
struct SimulationReport<'a> {
    scenario_hash: String,
    cost: &'a CostBreakdown,
    max_phase_norm: f64,
}

fn execute(cmd: Command, out: &mut dyn Write) -> Result<(), Failure> {
    match cmd {
        Command::Validate { scenario } => {
            load_valid(&scenario)?;
            writeln!(out, "ok").ok();
        }
        Command::W1 { a, b } => {
            let d = w1_distance(&io::read_measure(a)?, &io::read_measure(b)?)?;
            writeln!(out, "{d:.16e}").ok();
        }
        Command::Simulate { scenario, out: prefix } => {
            let s = load_valid(&scenario)?;
            let f = s.control_field()?;
            let tr = integrate(&s, &f)?;
            let cost = evaluate_cost(&tr, &s, &f)?;
            io::write_trajectory_csv(&tr, format!("{prefix}.traj.csv"))?;
            io::write_json(
                &SimulationReport {
                    scenario_hash: s.digest(),
                    cost: &cost,
                    max_phase_norm: tr.max_phase_norm(),
                },
                format!("{prefix}.report.json"),
            )?;
            writeln!(out, "cost {:.16e}", cost.total).ok();
        }
        Command::Optimize {
            scenario,
            out: prefix,
            budget,
        } => {
            let s = load_valid(&scenario)?;
            let report = if budget == OptimizerOptions::default().max_evaluations {
                optimize(&s)?
            } else {
                let opts = OptimizerOptions {
                    max_evaluations: budget,
                    ..Default::default()
                };
                crate::control::optimize_with(&s, &s.initial_ensemble()?, &opts)?
            };
            let tr = integrate(&s, &report.best_control)?;
            io::write_trajectory_csv(&tr, format!("{prefix}.traj.csv"))?;
            io::write_json(&report, format!("{prefix}.report.json"))?;
            writeln!(out, "cost {:.16e} sparsity {}", report.cost.total, report.sparsity).ok();
        }
        Command::Limit {
            scenario,
            levels,
            reference,
            seeds,
            out: prefix,
            stride,
            nested,
        } => {
            let s = load_valid(&scenario)?;
            let f = s.control_field()?;
            let opts = LimitOptions {
                reference,
                seeds: (0..seeds).collect(),
                init: if nested { InitMode::Nested } else { InitMode::Iid },
                node_stride: stride,
            };
            let r = limit_study(&s, &levels, &f, &opts)?;
            io::write_json(&r, format!("{prefix}.report.json"))?;
            std::fs::write(format!("{prefix}.curves.csv"), io::curves_csv(&r)).map_err(Error::from)?;
            for l in &r.per_level {
                writeln!(out, "N={} median sup_w1 {:.6e}", l.level, l.median_sup_w1()).ok();
            }
        }
        Command::Gamma {
            scenario,
            levels,
            reference,
            seeds,
            out: prefix,
            stride,
            budget,
        } => {
            let s = load_valid(&scenario)?;
            let opts = GammaOptions {
                reference,
                seeds: (0..seeds).collect(),
                fixed: s.control_field()?,
                optimizer: OptimizerOptions {
                    max_evaluations: budget,
                    ..Default::default()
                },
                tolerance: 1e-4,
                max_refinements: 3,
                node_stride: stride,
            };
            let r = gamma_study(&s, &levels, &opts)?;
            io::write_json(&r, format!("{prefix}.report.json"))?;
            std::fs::write(format!("{prefix}.curves.csv"), io::curves_csv(&r.fixed)).map_err(Error::from)?;
            for (n, j) in levels.iter().zip(&r.optimal_costs) {
                writeln!(out, "N={n} J* {j:.6e}").ok();
            }
        }
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    write!(out, "{}", e.render()).ok();
                    EXIT_OK
                }
                _ => {
                    write!(err, "{}", e.render()).ok();
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(Failure::Invalid(msg)) => {
            writeln!(err, "invalid input: {msg}").ok();
            EXIT_INVALID
        }
        Err(Failure::Solver(msg)) => {
            writeln!(err, "solver error: {msg}").ok();
            EXIT_SOLVER
        }
    }
}
