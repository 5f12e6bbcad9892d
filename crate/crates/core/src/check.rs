//! Invariant suite run by the `check` command.

use serde::Serialize;

use crate::cost::CostModel;
use crate::grid::MAX_DIM;
use crate::hjb::ValueSolution;
use crate::transport::DensityEnsemble;

/// Slack for the discrete variational inequality identity.
pub const VI_TOLERANCE: f64 = 1e-10;
/// Slack for `V ≤ NV`.
pub const NV_BOUND_TOLERANCE: f64 = 1e-12;
/// Relative slack for the mass ledger.
pub const LEDGER_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvariantResult {
    pub name: String,
    pub checked: u64,
    pub violations: u64,
    pub worst: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct InvariantReport {
    pub results: Vec<InvariantResult>,
}

impl InvariantReport {
    pub fn total_violations(&self) -> u64 {
        self.results.iter().map(|r| r.violations).sum()
    }

    pub fn passed(&self) -> bool {
        self.total_violations() == 0
    }
}

#[derive(Default)]
struct Tally {
    checked: u64,
    violations: u64,
    worst: f64,
}

impl Tally {
    fn record(&mut self, excess: f64, tolerance: f64) {
        self.checked += 1;
        if !(excess <= tolerance) {
            self.violations += 1;
        }
        if excess.is_nan() {
            self.worst = f64::NAN;
        } else if !self.worst.is_nan() {
            self.worst = self.worst.max(excess).max(0.0);
        }
    }

    fn flag(&mut self, ok: bool) {
        self.record(if ok { 0.0 } else { 1.0 }, 0.0);
    }

    fn finish(self, name: &str) -> InvariantResult {
        InvariantResult {
            name: name.into(),
            checked: self.checked,
            violations: self.violations,
            worst: self.worst,
        }
    }
}

/// Recomputes `min(NV, Σ)` from the stored level `k` values and the stored
/// control, and compares it with the stored value at level `k − 1`.
pub fn check_value_solution<C: CostModel + ?Sized>(
    sol: &ValueSolution,
    cost: &C,
    density: Option<&DensityEnsemble>,
) -> Vec<InvariantResult> {
    let grid = sol.grid();
    let space = sol.space();
    let d = grid.dim();
    let dt = grid.dt();
    let n = grid.n_nodes();
    let totals = density.map(|e| e.total_density());
    let mut identity = Tally::default();
    let mut nv_bound = Tally::default();
    let mut nonneg = Tally::default();
    let mut final_zero = Tally::default();
    let mut finite = Tally::default();
    let mut admissible = Tally::default();

    for k in 0..grid.n_levels() {
        for p in space.states() {
            for i in 0..n {
                let v = sol.value(k, p, i);
                finite.flag(v.is_finite());
                nonneg.record(-v, 0.0);
                if p.is_final() {
                    final_zero.record(v.abs(), 0.0);
                }
                if let Some(q) = sol.switch_destination(k, p, i) {
                    admissible.flag(p.can_switch_to(q));
                }
            }
        }
    }

    for k in 1..grid.n_levels() {
        let t = grid.time(k);
        for p in space.states().filter(|p| !p.is_final()) {
            let here = sol.value_slice(k, p);
            let dests = p.admissible_switches();
            for i in 0..n {
                let x = grid.node_coords(i);
                let x = &x[..d];
                let v = sol.value(k - 1, p, i);
                let nv = dests
                    .iter()
                    .map(|&q| cost.switching_cost(x, p, q) + sol.value(k, q, i))
                    .fold(f64::INFINITY, f64::min);
                let a = sol.control(k - 1, p, i);
                let mut vel = [0.0; MAX_DIM];
                cost.dynamics(x, a, p, &mut vel[..d]);
                let mut foot = [0.0; MAX_DIM];
                for c in 0..d {
                    foot[c] = x[c] + dt * vel[c];
                }
                grid.clamp_in_place(&mut foot[..d]);
                let m = totals.as_ref().map_or(0.0, |tt| tt[k * n + i]);
                let sigma = cost.discount() * dt * here[i]
                    + (grid.interpolate(here, &foot[..d]) + dt * cost.running_cost(x, a, p, t, m));
                identity.record((v - nv.min(sigma)).abs(), VI_TOLERANCE);
                nv_bound.record(v - nv, NV_BOUND_TOLERANCE);
            }
        }
    }
    vec![
        identity.finish("value equals min(NV, Σ)"),
        nv_bound.finish("value does not exceed NV"),
        nonneg.finish("value is nonnegative"),
        final_zero.finish("final-state value is zero"),
        finite.finish("value is finite"),
        admissible.finish("switch destinations are admissible"),
    ]
}

pub fn check_density(ens: &DensityEnsemble) -> Vec<InvariantResult> {
    let mut nonneg = Tally::default();
    for v in ens.densities().values() {
        nonneg.record(-v, 0.0);
    }
    let ledger = ens.ledger();
    let mut balance = Tally::default();
    for k in 0..ledger.n_levels() {
        balance.record(ledger.conservation_error(k), LEDGER_TOLERANCE);
    }
    let mut transfers = Tally::default();
    for t in ledger.transfers() {
        transfers.flag(t.from.can_switch_to(t.to) && t.mass >= 0.0);
    }
    vec![
        nonneg.finish("density is nonnegative"),
        balance.finish("mass ledger balances"),
        transfers.finish("transfers follow admissible switches"),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{RunningCost, Target, VisitingCost};
    use crate::grid::Grid;
    use crate::hjb::{HjbSolver, SolverOptions};
    use crate::statespace::StateSpace;
    use crate::transport::{initialize_density, run_feedback_transport, TransportMode};

    #[test]
    fn solver_output_has_no_violations() {
        let grid = Grid::new(&[-1.0, -1.0], &[1.0, 1.0], 0.2, 0.1, 0.6).unwrap();
        let space = StateSpace::new(2).unwrap();
        let cost = VisitingCost::new(
            vec![Target::point(&[0.4, 0.2]), Target::ball(&[-0.4, 0.0], 0.1)],
            RunningCost::Quadratic,
        );
        let sol = HjbSolver::new(&grid, &space, &cost, SolverOptions::default()).solve(None).unwrap();
        let init = initialize_density(&grid, &space, |_| 1.0, space.initial(), None).unwrap();
        let ens = run_feedback_transport(init, &sol, &cost, TransportMode::RouteToDestination).unwrap();
        let report = InvariantReport {
            results: check_value_solution(&sol, &cost, None)
                .into_iter()
                .chain(check_density(&ens))
                .collect(),
        };
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn a_corrupted_value_is_caught() {
        let grid = Grid::new(&[-1.0], &[1.0], 0.25, 0.1, 0.3).unwrap();
        let space = StateSpace::new(1).unwrap();
        let cost = VisitingCost::new(vec![Target::point(&[0.0])], RunningCost::Quadratic);
        let sol = HjbSolver::new(&grid, &space, &cost, SolverOptions::default()).solve(None).unwrap();
        let mut values = sol.values().clone();
        values.slice_mut(0, 0)[3] += 1e-6;
        let broken = ValueSolution::from_parts(
            grid.clone(),
            space.clone(),
            values,
            sol.controls().clone(),
            sol.switches().clone(),
        )
        .unwrap();
        let res = check_value_solution(&broken, &cost, None);
        assert_eq!(res[0].violations, 1);
    }
}
