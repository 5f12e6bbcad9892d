use proptest::prelude::*;

use visitsolve::cost::{CostModel, RunningCost, Target, VisitingCost};
use visitsolve::grid::Grid;
use visitsolve::hjb::{HjbSolver, SolverOptions, ValueSolution};
use visitsolve::mfg::{fixed_point_solve, MfgOptions};
use visitsolve::statespace::{DiscreteState, StateSpace};
use visitsolve::trajectory::synthesize;
use visitsolve::transport::{
    arrival_time_solve, initialize_density, run_feedback_transport, run_transport, PrescribedDriver,
    TransportMode,
};

fn square(dx: f64, dt: f64, horizon: f64) -> Grid {
    Grid::new(&[-1.0, -1.0], &[1.0, 1.0], dx, dt, horizon).unwrap()
}

fn targets_strategy(max: usize) -> impl Strategy<Value = Vec<Target>> {
    prop::collection::vec((-0.8f64..0.8, -0.8f64..0.8), 1..=max).prop_map(|cs| {
        cs.iter()
            .enumerate()
            .map(|(j, (x, y))| Target::point(&[(x + 2.0 * j as f64) / 4.0 - 0.4, *y]))
            .collect()
    })
}

fn solve(grid: &Grid, cost: &VisitingCost) -> ValueSolution {
    let space = StateSpace::new(cost.targets.len()).unwrap();
    HjbSolver::new(grid, &space, cost, SolverOptions::default())
        .solve(None)
        .unwrap()
}

/// Forbids every switch that flips more than one bit.
struct SingleFlips(VisitingCost);

impl CostModel for SingleFlips {
    fn dynamics(&self, x: &[f64], a: &[f64], p: DiscreteState, out: &mut [f64]) {
        self.0.dynamics(x, a, p, out)
    }
    fn dynamics_control_jacobian(&self, x: &[f64], a: &[f64], p: DiscreteState, out: &mut [f64]) {
        self.0.dynamics_control_jacobian(x, a, p, out)
    }
    fn running_cost(&self, x: &[f64], a: &[f64], p: DiscreteState, t: f64, m: f64) -> f64 {
        self.0.running_cost(x, a, p, t, m)
    }
    fn running_cost_control_gradient(&self, x: &[f64], a: &[f64], p: DiscreteState, t: f64, m: f64, out: &mut [f64]) {
        self.0.running_cost_control_gradient(x, a, p, t, m, out)
    }
    fn discount(&self) -> f64 {
        self.0.discount()
    }
    fn control_set(&self) -> Option<visitsolve::cost::ControlSet> {
        self.0.control_set()
    }
    fn uses_density(&self) -> bool {
        self.0.uses_density()
    }
    fn switching_cost(&self, x: &[f64], from: DiscreteState, to: DiscreteState) -> f64 {
        if (from.bits() ^ to.bits()).count_ones() == 1 {
            self.0.switching_cost(x, from, to)
        } else {
            f64::INFINITY
        }
    }
    fn terminal_cost(&self, x: &[f64], p: DiscreteState) -> f64 {
        self.0.terminal_cost(x, p)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn value_solutions_satisfy_the_discrete_inequality(targets in targets_strategy(3), prefactor in 1.0f64..2.0) {
        let grid = square(0.2, 0.1, 0.5);
        let cost = VisitingCost::new(targets, RunningCost::Quadratic).with_terminal_prefactor(prefactor);
        let sol = solve(&grid, &cost);
        let space = sol.space().clone();
        let results = visitsolve::check::check_value_solution(&sol, &cost, None);
        for r in &results {
            prop_assert_eq!(r.violations, 0, "{}", r.name);
        }
        // Bounded by the data: the largest terminal cost plus the largest switch.
        let mut bound = 0.0f64;
        for i in 0..grid.n_nodes() {
            let x = grid.node_coords(i);
            for p in space.states() {
                bound = bound.max(cost.terminal_cost(&x[..2], p));
                bound = bound.max(cost.switching_cost(&x[..2], p, space.final_state()));
            }
        }
        prop_assert!(sol.values().values().iter().all(|&v| v <= bound + 1e-12));
    }

    #[test]
    fn more_destinations_never_raise_the_switching_value(targets in targets_strategy(3)) {
        let grid = square(0.25, 0.1, 0.4);
        let cost = VisitingCost::new(targets, RunningCost::Quadratic);
        let sol = solve(&grid, &cost);
        let space = sol.space().clone();
        let restricted_cost = SingleFlips(cost.clone());
        let full = HjbSolver::new(&grid, &space, &cost, SolverOptions::default());
        let restricted = HjbSolver::new(&grid, &space, &restricted_cost, SolverOptions::default());
        let n = grid.n_nodes();
        for k in 0..grid.n_levels() {
            let mut level = vec![0.0; space.len() * n];
            for q in space.states() {
                for i in 0..n {
                    level[q.index() * n + i] = sol.value(k, q, i);
                }
            }
            for p in space.states().filter(|p| !p.is_final()) {
                for i in 0..n {
                    let (a, _) = full.switching_value(&level, i, p).unwrap();
                    let (b, _) = restricted.switching_value(&level, i, p).unwrap();
                    prop_assert!(a <= b, "{} > {}", a, b);
                }
            }
        }
    }

    #[test]
    fn trajectories_only_add_bits(targets in targets_strategy(3), x in -1.0f64..1.0, y in -1.0f64..1.0, start in 0u32..8) {
        let grid = square(0.2, 0.05, 0.6);
        let cost = VisitingCost::new(targets, RunningCost::Quadratic);
        let sol = solve(&grid, &cost);
        let n = sol.space().n_targets();
        let p0 = DiscreteState::new(start & ((1 << n) - 1), n).unwrap();
        let traj = synthesize(&sol, &cost, &[x, y], p0).unwrap();
        prop_assert!(traj.events.len() <= n - p0.popcount());
        for e in &traj.events {
            prop_assert!(e.from.can_switch_to(e.to));
        }
        for w in traj.samples.windows(2) {
            prop_assert!(w[0].state.is_dominated_by(w[1].state));
            prop_assert!(grid.contains(&w[1].position[..2]));
        }
    }

    #[test]
    fn routed_transport_conserves_mass(targets in targets_strategy(2), cx in -0.5f64..0.5, k in 2.0f64..10.0) {
        let grid = square(0.1, 0.05, 0.5);
        let cost = VisitingCost::new(targets, RunningCost::Quadratic).with_terminal_prefactor(2.0);
        let sol = solve(&grid, &cost);
        let space = sol.space().clone();
        let m0 = move |x: &[f64]| (-k * ((x[0] - cx).powi(2) + x[1] * x[1])).exp();
        let init = initialize_density(&grid, &space, m0, space.initial(), None).unwrap();
        let ens = run_feedback_transport(init, &sol, &cost, TransportMode::RouteToDestination).unwrap();
        for kk in 0..grid.n_levels() {
            prop_assert!(ens.ledger().conservation_error(kk) <= 1e-9);
        }
        prop_assert!(ens.densities().values().iter().all(|&v| v >= 0.0));
        for t in ens.ledger().transfers() {
            prop_assert!(t.from.can_switch_to(t.to));
        }
    }

    #[test]
    fn interior_advection_conserves_to_round_off(vx in -1.0f64..1.0, vy in -1.0f64..1.0) {
        let grid = square(0.05, 0.01, 0.2);
        let space = StateSpace::new(1).unwrap();
        // Compact support far from the boundary keeps every foot interior.
        let m0 = |x: &[f64]| (0.09 - x[0] * x[0] - x[1] * x[1]).max(0.0);
        let init = initialize_density(&grid, &space, m0, space.initial(), None).unwrap();
        let driver = PrescribedDriver {
            grid: &grid,
            field: move |_: &[f64], _t: f64, b: &mut [f64]| { b[0] = vx; b[1] = vy; },
            sink: None,
            mode: TransportMode::RouteToDestination,
        };
        let ens = run_transport(init, &driver).unwrap();
        let m = ens.ledger().initial_mass();
        for kk in 0..grid.n_levels() {
            prop_assert!((ens.ledger().total_live(kk) - m).abs() <= 1e-12 * m);
        }
    }

    #[test]
    fn larger_sinks_are_reached_earlier(threshold in -0.5f64..0.8, extra in 0.05f64..0.5, vx in -1.0f64..1.0, vy in -1.0f64..1.0) {
        let grid = square(0.1, 0.05, 1.0);
        let small: Vec<bool> = (0..grid.n_nodes()).map(|i| grid.node_coords(i)[0] >= threshold).collect();
        prop_assume!(small.iter().any(|&s| s));
        let large: Vec<bool> = (0..grid.n_nodes())
            .map(|i| small[i] || grid.node_coords(i)[1] >= 1.0 - extra)
            .collect();
        let field = move |_: &[f64], _t: f64, b: &mut [f64]| { b[0] = vx; b[1] = vy; };
        let a = arrival_time_solve(&grid, field, &small).unwrap();
        let b = arrival_time_solve(&grid, field, &large).unwrap();
        for kk in 0..grid.n_levels() {
            for i in 0..grid.n_nodes() {
                prop_assert!(b.value(kk, i) <= a.value(kk, i));
                prop_assert!(a.value(kk, i) >= grid.time(kk) && a.value(kk, i) <= grid.horizon());
                if small[i] {
                    prop_assert_eq!(a.value(kk, i), grid.time(kk));
                }
            }
        }
    }
}

#[test]
fn fixed_point_is_deterministic() {
    let grid = square(0.2, 0.1, 0.4);
    let space = StateSpace::new(2).unwrap();
    let cost = VisitingCost::new(
        vec![Target::point(&[0.4, 0.4]), Target::point(&[-0.4, 0.2])],
        RunningCost::Congestion,
    )
    .with_terminal_prefactor(2.0);
    let m0 = |x: &[f64]| 2.0 * (-4.0 * (x[0] * x[0] + x[1] * x[1])).exp();
    let init = initialize_density(&grid, &space, m0, space.initial(), None).unwrap();
    let mut opts = MfgOptions::new(1e-6);
    opts.max_iters = 5;
    let a = fixed_point_solve(&cost, &init, &opts, |_| {}).unwrap();
    let b = fixed_point_solve(&cost, &init, &opts, |_| {}).unwrap();
    assert_eq!(a.error_history, b.error_history);
    assert!(a.error_history.iter().all(|(_, e)| *e >= 0.0));
    assert_eq!(a.density.densities(), b.density.densities());
}

#[test]
fn damping_slows_the_density_update() {
    let grid = square(0.2, 0.1, 0.4);
    let space = StateSpace::new(1).unwrap();
    let cost = VisitingCost::new(vec![Target::point(&[0.0, 0.6])], RunningCost::Congestion).with_terminal_prefactor(2.0);
    let init = initialize_density(&grid, &space, |_| 1.0, space.initial(), None).unwrap();
    let mut opts = MfgOptions::new(0.0);
    opts.max_iters = 2;
    opts.theta = 0.5;
    let damped = fixed_point_solve(&cost, &init, &opts, |_| {}).unwrap();
    assert_eq!(damped.iterations, 2);
    assert!(!damped.converged);
    let m = damped.density.ledger();
    assert!((m.initial_mass() - init.ledger().initial_mass()).abs() < 1e-12);
}
