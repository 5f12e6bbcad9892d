//! Command-line driver. Every command reads a scenario, writes its
//! artifacts into `--out` and finishes with `manifest_<command>.json`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use crate::check::{check_density, check_value_solution, InvariantReport};
use crate::error::{Error, Result};
use crate::export::{
    arrival_csv, error_history_csv, events_csv, load_value_solution, trajectory_csv, Manifest, RunWriter,
};
use crate::hjb::{HjbSolver, ValueSolution};
use crate::mfg::fixed_point_solve;
use crate::scenario::{load_scenario, Scenario};
use crate::trajectory::synthesize;
use crate::transport::{arrival_time_solve, run_feedback_transport};

#[derive(Debug, Parser)]
#[command(name = "visitsolve", version, about = "Optimal visiting problems and their crowd counterpart")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Run directory for the artifacts.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Value functions, control maps and switch maps.
    SolveHjb {
        #[command(flatten)]
        common: Common,
    },
    /// Optimal path from a start point, reading `solve-hjb` artifacts in `--out`.
    Trajectory {
        #[command(flatten)]
        common: Common,
        /// Start point, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x0: Vec<f64>,
        /// Start state bit string; defaults to the scenario's initial state.
        #[arg(long)]
        p0: Option<String>,
        /// Read the maps written by `mfg` instead of `solve-hjb`.
        #[arg(long)]
        from_mfg: bool,
    },
    /// Crowd transport under the uncoupled optimal feedback.
    Transport {
        #[command(flatten)]
        common: Common,
    },
    /// Fixed point between the value solver and the transport.
    Mfg {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        theta: Option<f64>,
        /// Also write every iterate's densities under `iter_<z>/`.
        #[arg(long)]
        snapshots: bool,
    },
    /// First arrival times along a constant field to a half-space sink.
    ArrivalTime {
        #[command(flatten)]
        common: Common,
        /// Constant velocity, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        velocity: Vec<f64>,
        /// `axis,threshold`: the sink is `{x_axis ≥ threshold}`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
        sink_halfspace: Vec<f64>,
    },
    /// Solves, transports and runs the invariant suite.
    Check {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::SolveHjb { common }
            | Command::Trajectory { common, .. }
            | Command::Transport { common }
            | Command::Mfg { common, .. }
            | Command::ArrivalTime { common, .. }
            | Command::Check { common } => common,
        }
    }

    pub fn out(&self) -> &Path {
        &self.common().out
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::SolveHjb { .. } => "solve-hjb",
            Command::Trajectory { .. } => "trajectory",
            Command::Transport { .. } => "transport",
            Command::Mfg { .. } => "mfg",
            Command::ArrivalTime { .. } => "arrival-time",
            Command::Check { .. } => "check",
        }
    }
}

/// What a finished command reports back to `main`.
pub struct RunSummary {
    pub manifest: Manifest,
    /// Set when the command completed but found a failure to report
    /// through the exit status (invariant violations).
    pub failure: Option<String>,
}

fn solve(s: &Scenario) -> Result<ValueSolution> {
    let grid = s.grid()?;
    let space = s.space()?;
    let cost = s.cost();
    HjbSolver::new(&grid, &space, &cost, s.solver_options()?).solve(None)
}

fn start(s: &Scenario, out: &Path) -> Result<RunWriter> {
    let mut w = RunWriter::create(out)?;
    w.write("scenario.json", &(s.normalized()?.to_json_pretty() + "\n"))?;
    Ok(w)
}

fn finish(w: RunWriter, command: &str, s: &Scenario, extra: Map<String, Value>) -> Result<Manifest> {
    w.finish(command, &s.name, &s.hash()?, s.n_targets(), &s.grid()?, extra)
}

pub fn run(cli: &Cli) -> Result<RunSummary> {
    let command = &cli.command;
    let common = command.common();
    let s = load_scenario(&common.scenario)?;
    let name = command.name();
    let mut failure = None;
    let manifest = match command {
        Command::SolveHjb { .. } => {
            let sol = solve(&s)?;
            let mut w = start(&s, &common.out)?;
            w.value_solution(&sol, "")?;
            let diag = sol.diagnostics();
            let extra = json!({
                "minimizations": diag.minimizations,
                "descent_not_converged": diag.descent_not_converged,
            });
            finish(w, name, &s, into_map(extra))?
        }
        Command::Trajectory { x0, p0, from_mfg, .. } => {
            let grid = s.grid()?;
            let space = s.space()?;
            if x0.len() != grid.dim() || !x0.iter().all(|v| v.is_finite()) || !grid.contains(x0) {
                return Err(Error::InvalidArgument(format!("start point {x0:?} lies outside the domain")));
            }
            let p0 = match p0 {
                Some(text) => space.parse_state(text)?,
                None => s.initial_state()?,
            };
            let source = if *from_mfg { "mfg" } else { "solve-hjb" };
            let sol = load_value_solution(&common.out, source, &grid, &space)?;
            let traj = synthesize(&sol, &s.cost(), x0, p0)?;
            let mut w = start(&s, &common.out)?;
            w.write("trajectory.csv", &trajectory_csv(&traj))?;
            w.write("events.csv", &events_csv(&traj))?;
            let extra = json!({ "x0": x0, "p0": p0.to_bitstring(), "maps": source, "events": traj.events.len() });
            finish(w, name, &s, into_map(extra))?
        }
        Command::Transport { .. } => {
            let sol = solve(&s)?;
            let init = s.initial_density(Some(&sol))?;
            let ens = run_feedback_transport(init, &sol, &s.cost(), s.transport_mode)?;
            let mut w = start(&s, &common.out)?;
            w.densities(&ens, "")?;
            let extra = json!({
                "initial_mass": ens.ledger().initial_mass(),
                "transport_mode": s.transport_mode,
            });
            finish(w, name, &s, into_map(extra))?
        }
        Command::Mfg { max_iters, theta, snapshots, .. } => {
            if !s.coupled {
                return Err(Error::InvalidArgument(
                    "mfg requires a scenario with \"coupled\": true".into(),
                ));
            }
            let mut opts = s.mfg_options()?;
            if let Some(m) = max_iters {
                opts.max_iters = *m;
            }
            if let Some(t) = theta {
                opts.theta = *t;
            }
            let init = s.initial_density(None)?;
            let mut w = start(&s, &common.out)?;
            let mut snapshot_error = None;
            let res = fixed_point_solve(&s.cost(), &init, &opts, |it| {
                if *snapshots && snapshot_error.is_none() {
                    if let Err(e) = w.densities(it.density, &format!("iter_{}/", it.z)) {
                        snapshot_error = Some(e);
                    }
                }
            })?;
            if let Some(e) = snapshot_error {
                return Err(e);
            }
            w.write("error_history.csv", &error_history_csv(&res.error_history))?;
            w.value_solution(&res.value, "")?;
            w.densities(&res.density, "")?;
            let extra = json!({
                "iterations": res.iterations,
                "converged": res.converged,
                "threshold": opts.threshold,
                "theta": opts.theta,
                "final_error": res.error_history.last().map(|(_, e)| *e),
            });
            finish(w, name, &s, into_map(extra))?
        }
        Command::ArrivalTime { velocity, sink_halfspace, .. } => {
            let grid = s.grid()?;
            let d = grid.dim();
            if velocity.len() != d {
                return Err(Error::InvalidArgument(format!("velocity needs {d} components")));
            }
            let (axis, threshold) = match sink_halfspace.as_slice() {
                [a, t] if *a >= 0.0 && a.fract() == 0.0 && (*a as usize) < d => (*a as usize, *t),
                _ => {
                    return Err(Error::InvalidArgument(
                        "--sink-halfspace takes axis,threshold with a valid axis".into(),
                    ))
                }
            };
            let sink: Vec<bool> = (0..grid.n_nodes())
                .map(|i| grid.node_coords(i)[axis] >= threshold)
                .collect();
            let vel = velocity.clone();
            let field = arrival_time_solve(&grid, move |_: &[f64], _t: f64, b: &mut [f64]| b.copy_from_slice(&vel), &sink)?;
            let mut w = start(&s, &common.out)?;
            for k in 0..grid.n_levels() {
                w.write(&format!("T_k{k}.csv"), &arrival_csv(&field, k))?;
            }
            let extra = json!({ "velocity": velocity, "sink_axis": axis, "sink_threshold": threshold });
            finish(w, name, &s, into_map(extra))?
        }
        Command::Check { .. } => {
            let sol = solve(&s)?;
            let cost = s.cost();
            let init = s.initial_density(Some(&sol))?;
            let ens = run_feedback_transport(init, &sol, &cost, s.transport_mode)?;
            let report = InvariantReport {
                results: check_value_solution(&sol, &cost, None)
                    .into_iter()
                    .chain(check_density(&ens))
                    .collect(),
            };
            let mut w = start(&s, &common.out)?;
            w.write("check_report.json", &(serde_json::to_string_pretty(&report)? + "\n"))?;
            let violations = report.total_violations();
            if violations > 0 {
                failure = Some(format!("{violations} invariant violations, see check_report.json"));
            }
            finish(w, name, &s, into_map(json!({ "violations": violations })))?
        }
    };
    Ok(RunSummary { manifest, failure })
}

fn into_map(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => Map::new(),
    }
}
