//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line;
//! the target fails if any criterion fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use visitsolve::cost::CostModel;
use visitsolve::grid::Grid;
use visitsolve::hjb::{HjbSolver, SolverOptions, ValueSolution};
use visitsolve::mfg::fixed_point_solve;
use visitsolve::scenario::{load_scenario, CostSelector, Scenario};
use visitsolve::statespace::{DiscreteState, StateSpace};
use visitsolve::trajectory::synthesize;
use visitsolve::transport::{
    arrival_time_solve, initialize_density, run_feedback_transport, run_transport, PrescribedDriver,
    TransportMode,
};

// Tolerances.
const RICCATI_MAX_ERROR: f64 = 0.02;
const RICCATI_BUDGET: Duration = Duration::from_secs(10);
const VI_TOLERANCE: f64 = 1e-10;
const TEST1_BUDGET: Duration = Duration::from_secs(120);
const NEIGHBORHOOD_CELLS: f64 = 2.0;
const STOPPING_BALL_RADIUS: f64 = 0.2;
const STOPPING_BALL_SLACK_CELLS: f64 = 3.0;
const EXTINCTION_TOLERANCE: f64 = 1e-9;
const LEDGER_TOLERANCE: f64 = 1e-9;
const ROTATION_DRIFT: f64 = 1e-9;
const ARRIVAL_FACTOR: f64 = 3.0;
const MFG_MAX_ITERS: usize = 20;
const TERMINAL_MASS_FRACTION: f64 = 1.0 - 1e-6;
const EMPTY_STATE_TOLERANCE: f64 = 1e-9;

fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios").join(name);
    load_scenario(&path).expect("bundled scenario loads")
}

fn solve(s: &Scenario) -> ValueSolution {
    let grid = s.grid().unwrap();
    let space = s.space().unwrap();
    let cost = s.cost();
    HjbSolver::new(&grid, &space, &cost, s.solver_options().unwrap())
        .solve(None)
        .unwrap()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// 1-D linear-quadratic problem with switching forbidden.
struct Lq;

impl CostModel for Lq {
    fn dynamics(&self, _x: &[f64], a: &[f64], _p: DiscreteState, out: &mut [f64]) {
        out.copy_from_slice(a);
    }
    fn running_cost(&self, x: &[f64], a: &[f64], _p: DiscreteState, _t: f64, _m: f64) -> f64 {
        x[0] * x[0] + 0.5 * a[0] * a[0]
    }
    fn switching_cost(&self, _x: &[f64], _from: DiscreteState, _to: DiscreteState) -> f64 {
        f64::INFINITY
    }
    fn terminal_cost(&self, _x: &[f64], _p: DiscreteState) -> f64 {
        0.0
    }
}

/// `q' = q² − 2`, `q(1) = 0`, integrated backward with classical RK4.
fn riccati_q0(h: f64) -> f64 {
    let rhs = |q: f64| q * q - 2.0;
    let steps = (1.0 / h).round() as usize;
    let mut q = 0.0;
    for _ in 0..steps {
        let k1 = rhs(q);
        let k2 = rhs(q - 0.5 * h * k1);
        let k3 = rhs(q - 0.5 * h * k2);
        let k4 = rhs(q - h * k3);
        q -= h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    q
}

fn riccati() -> Outcome {
    let q0 = riccati_q0(1e-5);
    let start = Instant::now();
    let grid = Grid::new(&[-2.0], &[2.0], 0.01, 0.005, 1.0).unwrap();
    let space = StateSpace::new(1).unwrap();
    let sol = HjbSolver::new(&grid, &space, &Lq, SolverOptions::default())
        .solve(None)
        .unwrap();
    let elapsed = start.elapsed();
    let p = space.initial();
    let n = grid.n_nodes();
    let err = (1..n - 1)
        .map(|i| {
            let x = grid.node_coords(i)[0];
            (sol.value(0, p, i) - 0.5 * q0 * x * x).abs()
        })
        .fold(0.0, f64::max);
    outcome(
        err <= RICCATI_MAX_ERROR && elapsed < RICCATI_BUDGET,
        format!("q(0) = {q0:.6}, max error {err:.3e} (≤ {RICCATI_MAX_ERROR}), {elapsed:.2?} (< {RICCATI_BUDGET:?})"),
    )
}

fn test1_variational_inequality() -> Outcome {
    let s = scenario("test1.json");
    let grid = s.grid().unwrap();
    let space = s.space().unwrap();
    let cost = s.cost();
    let start = Instant::now();
    let sol = HjbSolver::new(&grid, &space, &cost, s.solver_options().unwrap())
        .solve(None)
        .unwrap();
    let elapsed = start.elapsed();
    let d = grid.dim();
    let dt = grid.dt();
    let mut worst = 0.0f64;
    let mut negative = 0usize;
    let mut final_nonzero = 0usize;
    for k in 1..grid.n_levels() {
        let t = grid.time(k);
        for p in space.states() {
            let here = sol.value_slice(k, p);
            for i in 0..grid.n_nodes() {
                let v = sol.value(k - 1, p, i);
                if v < 0.0 {
                    negative += 1;
                }
                if p.is_final() {
                    if v != 0.0 {
                        final_nonzero += 1;
                    }
                    continue;
                }
                let x = grid.node_coords(i);
                let x = &x[..d];
                let nv = p
                    .admissible_switches()
                    .into_iter()
                    .map(|q| cost.switching_cost(x, p, q) + sol.value(k, q, i))
                    .fold(f64::INFINITY, f64::min);
                let a = sol.control(k - 1, p, i);
                let mut foot = [0.0; 3];
                let mut vel = [0.0; 3];
                cost.dynamics(x, a, p, &mut vel[..d]);
                for c in 0..d {
                    foot[c] = x[c] + dt * vel[c];
                }
                grid.clamp_in_place(&mut foot[..d]);
                let sigma = cost.discount() * dt * here[i]
                    + (grid.interpolate(here, &foot[..d]) + dt * cost.running_cost(x, a, p, t, 0.0));
                worst = worst.max((v - nv.min(sigma)).abs());
            }
        }
    }
    for i in 0..grid.n_nodes() {
        if sol.value(grid.n_steps(), space.final_state(), i) != 0.0 {
            final_nonzero += 1;
        }
    }
    outcome(
        worst <= VI_TOLERANCE && negative == 0 && final_nonzero == 0 && elapsed < TEST1_BUDGET,
        format!(
            "max |V - min(NV, Σ)| = {worst:.2e} (≤ {VI_TOLERANCE:e}), {negative} negative, {final_nonzero} nonzero final-state values, solve {elapsed:.2?}"
        ),
    )
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn test1_trajectories() -> Outcome {
    let s = scenario("test1.json");
    let sol = solve(&s);
    let cost = s.cost();
    let dx = sol.grid().dx();
    let radius = NEIGHBORHOOD_CELLS * dx;
    let p0 = sol.space().initial();
    let centers: Vec<&[f64]> = s.targets.iter().map(|t| t.center.as_slice()).collect();

    let visit_order = |x0: &[f64]| {
        let traj = synthesize(&sol, &cost, x0, p0).unwrap();
        let mut order = Vec::new();
        for e in &traj.events {
            for (j, c) in centers.iter().enumerate() {
                if !e.from.is_done(j) && e.to.is_done(j) && distance(&e.position[..2], c) <= radius {
                    order.push(j + 1);
                }
            }
        }
        (traj, order)
    };

    let (center_traj, center_order) = visit_order(&[0.0, 0.0]);
    let near_all = centers.iter().all(|c| {
        center_traj
            .samples
            .iter()
            .any(|smp| distance(&smp.position[..2], c) <= radius)
    });
    let deviation = center_traj.max_chord_deviation();
    let (_, offset_order) = visit_order(&[0.0, -0.2]);
    let nearest_to_offset = 1 + (0..3)
        .min_by(|&a, &b| distance(&[0.0, -0.2], centers[a]).total_cmp(&distance(&[0.0, -0.2], centers[b])))
        .unwrap();
    let order_depends_on_start =
        center_order.len() == 3 && offset_order.len() == 3 && offset_order[0] == nearest_to_offset;

    let corner = synthesize(&sol, &cost, &[0.9, 0.9], p0).unwrap();
    let far_switch = corner
        .events
        .iter()
        .flat_map(|e| {
            centers
                .iter()
                .enumerate()
                .filter(move |(j, _)| !e.from.is_done(*j) && e.to.is_done(*j))
                .map(move |(_, c)| distance(&e.position[..2], c))
        })
        .fold(0.0, f64::max);
    outcome(
        near_all && order_depends_on_start && deviation <= radius && far_switch > radius,
        format!(
            "from (0,0) visits {center_order:?}, from (0,-0.2) visits {offset_order:?}, chord deviation {deviation:.4} (≤ {radius:.3}), farthest switch from (0.9,0.9) at {far_switch:.3} (> {radius:.3})"
        ),
    )
}

fn test2_stopping_geometry() -> Outcome {
    let s = scenario("test2.json");
    let sol = solve(&s);
    let grid = sol.grid();
    let p = sol.space().initial();
    let center = [0.0, 0.6];
    let slack = STOPPING_BALL_SLACK_CELLS * grid.dx();
    let (inner, outer) = (STOPPING_BALL_RADIUS - slack, STOPPING_BALL_RADIUS + slack);
    let last_decision = grid.n_steps() - 1;
    let mut interior_ok = true;
    let mut notes = Vec::new();
    for k in 1..last_decision {
        let set = sol.stopping_set(k, p);
        let mut member = vec![false; grid.n_nodes()];
        for &i in &set {
            member[i] = true;
        }
        let within_outer = set
            .iter()
            .all(|&i| distance(&grid.node_coords(i)[..2], &center) <= outer);
        let covers_inner = (0..grid.n_nodes())
            .filter(|&i| distance(&grid.node_coords(i)[..2], &center) <= inner)
            .all(|i| member[i]);
        let reach = set
            .iter()
            .map(|&i| distance(&grid.node_coords(i)[..2], &center))
            .fold(0.0, f64::max);
        interior_ok &= within_outer && covers_inner;
        notes.push(format!("t={:.2}: {} nodes, radius {reach:.3}", grid.time(k), set.len()));
    }
    let final_all = sol.stopping_set(last_decision, p).len() == grid.n_nodes();
    outcome(
        interior_ok && final_all,
        format!(
            "stopping sets vs ball [{inner:.2}, {outer:.2}]: {}; whole grid at t={:.2}: {final_all}",
            notes.join(", "),
            grid.time(last_decision)
        ),
    )
}

fn test2_extinction() -> Outcome {
    let s = scenario("test2.json");
    let sol = solve(&s);
    let init = s.initial_density(Some(&sol)).unwrap();
    let ens = run_feedback_transport(init, &sol, &s.cost(), s.transport_mode).unwrap();
    let ledger = ens.ledger();
    let last = sol.grid().n_steps();
    let remaining = ens.live_mass(last, sol.space().initial()) / ledger.initial_mass();
    let worst = (0..ledger.n_levels())
        .map(|k| ledger.conservation_error(k))
        .fold(0.0, f64::max);
    outcome(
        remaining < EXTINCTION_TOLERANCE && worst <= LEDGER_TOLERANCE,
        format!("live fraction at T {remaining:.2e} (< {EXTINCTION_TOLERANCE:e}), ledger error {worst:.2e} (≤ {LEDGER_TOLERANCE:e})"),
    )
}

fn transport_conservation() -> Outcome {
    let grid = Grid::new(&[-1.0, -1.0], &[1.0, 1.0], 0.04, 0.02, 2.0).unwrap();
    let space = StateSpace::new(1).unwrap();
    let p = space.initial();
    let m0 = |x: &[f64]| (-8.0 * ((x[0] - 0.3).powi(2) + x[1] * x[1])).exp();
    let init = initialize_density(&grid, &space, m0, p, None).unwrap();
    let rotation = PrescribedDriver {
        grid: &grid,
        field: |x: &[f64], _t: f64, b: &mut [f64]| {
            b[0] = -x[1];
            b[1] = x[0];
        },
        sink: None,
        mode: TransportMode::RouteToDestination,
    };
    let rotated = run_transport(init.clone(), &rotation).unwrap();
    let m_init = rotated.ledger().initial_mass();
    let drift = (0..grid.n_levels())
        .map(|k| (rotated.ledger().total_live(k) - m_init).abs() / m_init)
        .fold(0.0, f64::max);
    let still = PrescribedDriver {
        grid: &grid,
        field: |_: &[f64], _t: f64, b: &mut [f64]| b.fill(0.0),
        sink: None,
        mode: TransportMode::RouteToDestination,
    };
    let frozen = run_transport(init, &still).unwrap();
    let identical = (1..grid.n_levels()).all(|k| frozen.slice(k, p) == frozen.slice(0, p));
    outcome(
        grid.n_steps() == 100 && drift <= ROTATION_DRIFT && identical,
        format!(
            "{} steps, relative drift {drift:.2e} (≤ {ROTATION_DRIFT:e}), still field bit-identical: {identical}",
            grid.n_steps()
        ),
    )
}

fn arrival_time() -> Outcome {
    let (dx, dt) = (0.02, 0.01);
    let grid = Grid::new(&[-1.0, -1.0], &[1.0, 1.0], dx, dt, 1.0).unwrap();
    let sink: Vec<bool> = (0..grid.n_nodes())
        .map(|i| grid.node_coords(i)[0] >= 0.6 - 1e-12)
        .collect();
    let field = arrival_time_solve(&grid, |_: &[f64], _t: f64, b: &mut [f64]| b.copy_from_slice(&[1.0, 0.0]), &sink).unwrap();
    let mut worst = 0.0f64;
    for k in 0..grid.n_levels() {
        let t = grid.time(k);
        for i in 0..grid.n_nodes() {
            let exact = t + (0.6 - grid.node_coords(i)[0]).max(0.0);
            if exact <= grid.horizon() {
                worst = worst.max((field.value(k, i) - exact).abs());
            }
        }
    }
    let bound = ARRIVAL_FACTOR * (dx + dt);
    outcome(worst <= bound, format!("max error {worst:.3e} (≤ {bound:.3})"))
}

fn mfg_convergence() -> Outcome {
    let s = scenario("test3.json");
    let cost = s.cost();
    let opts = s.mfg_options().unwrap();
    let init = s.initial_density(None).unwrap();
    let res = fixed_point_solve(&cost, &init, &opts, |_| {}).unwrap();
    let history: Vec<String> = res.error_history.iter().map(|(_, e)| format!("{e:.4}")).collect();
    let coupled_ok = res.converged && res.iterations <= MFG_MAX_ITERS && res.error_history.last().unwrap().1 < s.threshold();

    let mut plain = s.clone();
    plain.running_cost = CostSelector::Test2Stop;
    let res_plain = fixed_point_solve(&plain.cost(), &init, &plain.mfg_options().unwrap(), |_| {}).unwrap();
    let plain_ok = res_plain.converged && res_plain.iterations == 2 && res_plain.error_history[1].1 == 0.0;
    outcome(
        coupled_ok && plain_ok,
        format!(
            "E = [{}] vs {:.3} in ≤ {MFG_MAX_ITERS} iterations; without congestion {:?}",
            history.join(", "),
            s.threshold(),
            res_plain.error_history
        ),
    )
}

fn three_target_terminal() -> Outcome {
    let s = scenario("test3_threetargets.json");
    let cost = s.cost();
    let init = s.initial_density(None).unwrap();
    let res = fixed_point_solve(&cost, &init, &s.mfg_options().unwrap(), |_| {}).unwrap();
    let ens = &res.density;
    let last = ens.grid().n_steps();
    let m = ens.ledger().initial_mass();
    let final_fraction = ens.live_mass(last, ens.space().final_state()) / m;
    let leftover = ens
        .space()
        .states()
        .filter(|p| !p.is_final())
        .map(|p| ens.live_mass(last, p) / m)
        .fold(0.0, f64::max);
    outcome(
        final_fraction >= TERMINAL_MASS_FRACTION && leftover <= EMPTY_STATE_TOLERANCE,
        format!(
            "{} fixed-point iterations (converged: {}), final-state fraction {final_fraction:.9} (≥ {TERMINAL_MASS_FRACTION}), largest other state {leftover:.2e} (≤ {EMPTY_STATE_TOLERANCE:e})",
            res.iterations, res.converged
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("linear-quadratic value vs Riccati oracle", riccati),
        ("variational inequality on the three-target ring", test1_variational_inequality),
        ("single-agent trajectories on the three-target ring", test1_trajectories),
        ("stopping-set geometry for the single-target crowd", test2_stopping_geometry),
        ("mass extinction for the single-target crowd", test2_extinction),
        ("mass conservation under rotation and rest", transport_conservation),
        ("arrival time along a constant field", arrival_time),
        ("fixed-point convergence with congestion", mfg_convergence),
        ("three-target crowd ends in the final state", three_target_terminal),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let out = run();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("{tag} {name}: {} [{:.1?}]", out.detail, start.elapsed());
        if !out.pass {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
