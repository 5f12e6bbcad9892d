//! Fixed-point alternation between the value solver and the transport
//! solver when the running cost depends on the crowd density.
//!
//! Iterate `z = 1` solves against an empty crowd, so `μ^1` is the crowd
//! driven by the uncoupled feedback. Every later iterate solves against
//! `μ^{z-1}` and transports the initial data under the new feedback. The
//! error `E(z)` is the sup-norm distance between the total densities of two
//! consecutive iterates over every node and level; `E(1)` is measured
//! against the empty crowd and never counts as convergence.

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::hjb::{HjbSolver, SolverOptions, ValueSolution};
use crate::transport::{run_feedback_transport, DensityEnsemble, TransportMode};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MfgOptions {
    pub max_iters: usize,
    /// Weight of the freshly transported density, in `(0, 1]`.
    pub theta: f64,
    /// Stop once `E(z)` falls strictly below this value.
    pub threshold: f64,
    pub mode: TransportMode,
    pub solver: SolverOptions,
}

impl MfgOptions {
    pub fn new(threshold: f64) -> Self {
        Self {
            max_iters: 50,
            theta: 1.0,
            threshold,
            mode: TransportMode::RouteToDestination,
            solver: SolverOptions::default(),
        }
    }
}

/// One completed iterate, handed to the observer.
pub struct Iterate<'a> {
    pub z: usize,
    pub value: &'a ValueSolution,
    pub density: &'a DensityEnsemble,
    pub error: f64,
}

#[derive(Clone, Debug)]
pub struct MfgResult {
    pub value: ValueSolution,
    pub density: DensityEnsemble,
    /// `(z, E(z))` for every iterate, starting at `z = 1`.
    pub error_history: Vec<(usize, f64)>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn fixed_point_solve<C: CostModel + ?Sized>(
    cost: &C,
    initial: &DensityEnsemble,
    options: &MfgOptions,
    mut observer: impl FnMut(&Iterate<'_>),
) -> Result<MfgResult> {
    if !(options.theta > 0.0 && options.theta <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "damping factor must lie in (0, 1], got {}",
            options.theta
        )));
    }
    if options.max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
    }
    let grid = initial.grid();
    let space = initial.space();
    let solver = HjbSolver::new(grid, space, cost, options.solver);

    let mut previous = DensityEnsemble::empty(grid, space);
    let mut history = Vec::new();
    let mut last_value = None;
    let mut converged = false;
    for z in 1..=options.max_iters {
        let value = if z == 1 { solver.solve(None)? } else { solver.solve(Some(&previous))? };
        let fresh = run_feedback_transport(initial.clone(), &value, cost, options.mode)?;
        let density = if z == 1 || options.theta == 1.0 {
            fresh
        } else {
            fresh.blend(&previous, options.theta)?
        };
        let error = density.total_density_distance(&previous);
        history.push((z, error));
        observer(&Iterate {
            z,
            value: &value,
            density: &density,
            error,
        });
        previous = density;
        last_value = Some(value);
        if z >= 2 && error < options.threshold {
            converged = true;
            break;
        }
    }
    Ok(MfgResult {
        value: last_value.expect("at least one iterate"),
        density: previous,
        iterations: history.len(),
        error_history: history,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{RunningCost, Target, VisitingCost};
    use crate::grid::Grid;
    use crate::statespace::StateSpace;
    use crate::transport::initialize_density;

    fn setup(running: RunningCost) -> (VisitingCost, DensityEnsemble) {
        let grid = Grid::new(&[-1.0, -1.0], &[1.0, 1.0], 0.2, 0.1, 0.5).unwrap();
        let space = StateSpace::new(1).unwrap();
        let cost = VisitingCost::new(vec![Target::point(&[0.0, 0.6])], running).with_terminal_prefactor(2.0);
        let m0 = |x: &[f64]| (-8.0 * (x[0] * x[0] + x[1] * x[1])).exp();
        let ens = initialize_density(&grid, &space, m0, space.initial(), None).unwrap();
        (cost, ens)
    }

    #[test]
    fn decoupled_cost_converges_at_the_second_iterate() {
        let (cost, ens) = setup(RunningCost::Quadratic);
        let res = fixed_point_solve(&cost, &ens, &MfgOptions::new(0.1), |_| {}).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 2);
        assert_eq!(res.error_history[1], (2, 0.0));
    }

    #[test]
    fn unit_damping_matches_the_plain_iteration() {
        let (cost, ens) = setup(RunningCost::Congestion);
        let mut opts = MfgOptions::new(1e-3);
        opts.max_iters = 3;
        let plain = fixed_point_solve(&cost, &ens, &opts, |_| {}).unwrap();
        opts.theta = 1.0;
        let mut seen = Vec::new();
        let again = fixed_point_solve(&cost, &ens, &opts, |it| seen.push(it.z)).unwrap();
        assert_eq!(plain.error_history, again.error_history);
        assert_eq!(seen, (1..=again.iterations).collect::<Vec<_>>());
        assert!(plain.error_history.iter().all(|(_, e)| *e >= 0.0));
    }

    #[test]
    fn bad_damping_is_rejected() {
        let (cost, ens) = setup(RunningCost::Congestion);
        let mut opts = MfgOptions::new(0.1);
        opts.theta = 0.0;
        assert!(fixed_point_solve(&cost, &ens, &opts, |_| {}).is_err());
    }
}
