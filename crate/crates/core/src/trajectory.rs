//! Forward Euler synthesis of a single agent's optimal path from the
//! feedback maps of a value solution.

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::grid::{Coords, MAX_DIM};
use crate::hjb::ValueSolution;
use crate::statespace::DiscreteState;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub position: Coords,
    pub state: DiscreteState,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwitchEvent {
    pub t: f64,
    pub position: Coords,
    pub from: DiscreteState,
    pub to: DiscreteState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    pub samples: Vec<Sample>,
    pub events: Vec<SwitchEvent>,
}

impl Trajectory {
    pub fn final_sample(&self) -> &Sample {
        self.samples.last().expect("a trajectory has at least one sample")
    }

    /// Largest distance of the samples taken between consecutive switch
    /// events (and the two ends) from the chord joining the segment ends.
    pub fn max_chord_deviation(&self) -> f64 {
        let mut worst = 0.0f64;
        let mut start = 0;
        for s in 0..self.samples.len() {
            let boundary = s + 1 == self.samples.len() || self.samples[s + 1].state != self.samples[s].state;
            if boundary {
                worst = worst.max(chord_deviation(&self.samples[start..=s], self.dim));
                start = s + 1;
            }
        }
        worst
    }
}

fn chord_deviation(segment: &[Sample], dim: usize) -> f64 {
    let a = segment[0].position;
    let b = segment[segment.len() - 1].position;
    let ab: Vec<f64> = (0..dim).map(|c| b[c] - a[c]).collect();
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    segment
        .iter()
        .map(|s| {
            let ap: Vec<f64> = (0..dim).map(|c| s.position[c] - a[c]).collect();
            let u = if len2 > 0.0 {
                (ap.iter().zip(&ab).map(|(x, y)| x * y).sum::<f64>() / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            ap.iter()
                .zip(&ab)
                .map(|(x, y)| (x - u * y).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// `Y(t^{n+1}) = Y(t^n) + Δt f(Y, α*(Y, t^n, p^n), p^n)`, with `α*` read by
/// interpolation and `σ*` at the nearest node. A switch changes the state
/// and leaves the position where it was for that step.
pub fn synthesize<C: CostModel + ?Sized>(
    solution: &ValueSolution,
    cost: &C,
    x0: &[f64],
    p0: DiscreteState,
) -> Result<Trajectory> {
    let grid = solution.grid();
    let d = grid.dim();
    if x0.len() != d {
        return Err(Error::InvalidArgument(format!(
            "start point has {} coordinates, domain has {d}",
            x0.len()
        )));
    }
    if !x0.iter().all(|v| v.is_finite()) || !grid.contains(x0) {
        return Err(Error::InvalidArgument(format!("start point {x0:?} lies outside the domain")));
    }
    if !solution.space().contains(p0) {
        return Err(Error::InvalidArgument(format!(
            "start state {p0} does not have {} targets",
            solution.space().n_targets()
        )));
    }
    let mut y = [0.0; MAX_DIM];
    y[..d].copy_from_slice(x0);
    let mut p = p0;
    let mut samples = vec![Sample {
        t: grid.time(0),
        position: y,
        state: p,
    }];
    let mut events = Vec::new();
    let mut f = [0.0; MAX_DIM];
    for n in 0..grid.n_steps() {
        if p.is_final() {
            break;
        }
        let node = grid.nearest_node(&y[..d]);
        if let Some(q) = solution.switch_destination(n, p, node) {
            events.push(SwitchEvent {
                t: grid.time(n),
                position: y,
                from: p,
                to: q,
            });
            p = q;
        } else {
            let a = solution.interpolate_control(n, p, &y[..d]);
            cost.dynamics(&y[..d], &a[..d], p, &mut f[..d]);
            for c in 0..d {
                y[c] += grid.dt() * f[c];
            }
            grid.clamp_in_place(&mut y[..d]);
        }
        samples.push(Sample {
            t: grid.time(n + 1),
            position: y,
            state: p,
        });
    }
    Ok(Trajectory { dim: d, samples, events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{RunningCost, Target, VisitingCost};
    use crate::grid::Grid;
    use crate::hjb::{HjbSolver, SolverOptions};
    use crate::statespace::StateSpace;

    fn small_problem() -> (ValueSolution, VisitingCost) {
        let grid = Grid::new(&[-1.0, -1.0], &[1.0, 1.0], 0.1, 0.05, 1.0).unwrap();
        let space = StateSpace::new(2).unwrap();
        let cost = VisitingCost::new(
            vec![Target::point(&[0.5, 0.0]), Target::point(&[-0.5, 0.0])],
            RunningCost::Quadratic,
        );
        let sol = HjbSolver::new(&grid, &space, &cost, SolverOptions::default())
            .solve(None)
            .unwrap();
        (sol, cost)
    }

    #[test]
    fn final_state_stays_put() {
        let (sol, cost) = small_problem();
        let traj = synthesize(&sol, &cost, &[0.3, -0.2], sol.space().final_state()).unwrap();
        assert!(traj.events.is_empty());
        assert!(traj.samples.iter().all(|s| s.position[..2] == [0.3, -0.2]));
    }

    #[test]
    fn outside_start_is_rejected() {
        let (sol, cost) = small_problem();
        assert!(matches!(
            synthesize(&sol, &cost, &[1.5, 0.0], sol.space().initial()),
            Err(Error::InvalidArgument(_))
        ));
        assert!(synthesize(&sol, &cost, &[0.0], sol.space().initial()).is_err());
    }

    #[test]
    fn switches_are_monotone_and_bounded() {
        let (sol, cost) = small_problem();
        for x0 in [[0.0, 0.0], [0.9, 0.9], [-0.8, 0.4], [0.45, 0.05]] {
            let traj = synthesize(&sol, &cost, &x0, sol.space().initial()).unwrap();
            assert!(traj.events.len() <= 2);
            for e in &traj.events {
                assert!(e.from.can_switch_to(e.to));
            }
            for w in traj.samples.windows(2) {
                assert!(w[0].state.is_dominated_by(w[1].state));
                assert!(sol.grid().contains(&w[1].position[..2]));
            }
        }
    }

    #[test]
    fn chord_deviation_of_a_straight_path_is_zero() {
        let p = DiscreteState::initial(1).unwrap();
        let samples = (0..5)
            .map(|i| Sample {
                t: i as f64,
                position: [i as f64 * 0.1, i as f64 * 0.2, 0.0],
                state: p,
            })
            .collect();
        let traj = Trajectory { dim: 2, samples, events: vec![] };
        assert!(traj.max_chord_deviation() < 1e-15);
    }
}
