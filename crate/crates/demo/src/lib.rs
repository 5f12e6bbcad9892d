//! Browser bindings for `visitsolve`: value heatmaps on the three-target
//! ring, click-to-trajectory, and playback of the single-target crowd.
//!
//! Every field handed to JavaScript is a flat `Float64Array` in node order
//! (the last axis varies fastest), so entry `i * ny + j` is the node at
//! `x = lower + i·dx`, `y = lower + j·dx`.

use wasm_bindgen::prelude::*;

use visitsolve::cost::VisitingCost;
use visitsolve::hjb::{HjbSolver, ValueSolution};
use visitsolve::scenario::{parse_scenario, Scenario};
use visitsolve::statespace::DiscreteState;
use visitsolve::trajectory::synthesize;
use visitsolve::transport::{run_feedback_transport, DensityEnsemble};

const RING: &str = include_str!("../../core/scenarios/test1.json");
const SINGLE: &str = include_str!("../../core/scenarios/test2.json");

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn coarsened(text: &str, dx: Option<f64>) -> Result<Scenario, String> {
    let mut s = parse_scenario(text).map_err(err)?;
    if let Some(dx) = dx {
        if !(dx.is_finite() && dx > 0.0) {
            return Err(format!("dx must be positive, got {dx}"));
        }
        s.dt *= dx / s.dx;
        s.dx = dx;
    }
    s.validate().map_err(err)?;
    Ok(s)
}

/// Value functions and feedback on the three-target ring.
#[wasm_bindgen]
pub struct Ring {
    scenario: Scenario,
    cost: VisitingCost,
    solution: ValueSolution,
}

#[wasm_bindgen]
impl Ring {
    /// Solves the ring problem at mesh width `dx`; `dt` keeps the bundled ratio.
    #[wasm_bindgen(constructor)]
    pub fn new(dx: f64) -> Result<Ring, String> {
        let scenario = coarsened(RING, Some(dx))?;
        let grid = scenario.grid().map_err(err)?;
        let space = scenario.space().map_err(err)?;
        let cost = scenario.cost();
        let solution = HjbSolver::new(&grid, &space, &cost, scenario.solver_options().map_err(err)?)
            .solve(None)
            .map_err(err)?;
        Ok(Ring { scenario, cost, solution })
    }

    pub fn nodes_per_axis(&self) -> Vec<u32> {
        self.solution.grid().nodes_per_axis().iter().map(|&n| n as u32).collect()
    }

    pub fn lower(&self) -> Vec<f64> {
        self.solution.grid().lower().to_vec()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.solution.grid().upper().to_vec()
    }

    pub fn n_levels(&self) -> usize {
        self.solution.grid().n_levels()
    }

    pub fn n_targets(&self) -> usize {
        self.scenario.n_targets()
    }

    pub fn time(&self, level: usize) -> f64 {
        self.solution.grid().time(level)
    }

    /// Target centers, flattened as `x, y` pairs.
    pub fn targets(&self) -> Vec<f64> {
        self.scenario.targets.iter().flat_map(|t| t.center.iter().copied()).collect()
    }

    /// `V(·, t_level, p)` with `p` given by its bit pattern.
    pub fn value(&self, level: usize, bits: u32) -> Result<Vec<f64>, String> {
        let p = self.state(bits)?;
        if level >= self.n_levels() {
            return Err(format!("level {level} out of range"));
        }
        Ok(self.solution.value_slice(level, p).to_vec())
    }

    /// Optimal path from `(x, y)` in state `bits`, flattened as
    /// `t, x, y, bits` records.
    pub fn trajectory(&self, x: f64, y: f64, bits: u32) -> Result<Vec<f64>, String> {
        let p = self.state(bits)?;
        let traj = synthesize(&self.solution, &self.cost, &[x, y], p).map_err(err)?;
        Ok(traj
            .samples
            .iter()
            .flat_map(|s| [s.t, s.position[0], s.position[1], s.state.bits() as f64])
            .collect())
    }

    fn state(&self, bits: u32) -> Result<DiscreteState, String> {
        DiscreteState::new(bits, self.scenario.n_targets()).map_err(err)
    }
}

/// The single-target crowd that leaves the domain once its members stop.
#[wasm_bindgen]
pub struct Crowd {
    ensemble: DensityEnsemble,
}

#[wasm_bindgen]
impl Crowd {
    /// Solves and transports the bundled crowd; `dx = 0` keeps its mesh.
    #[wasm_bindgen(constructor)]
    pub fn new(dx: f64) -> Result<Crowd, String> {
        let scenario = coarsened(SINGLE, (dx != 0.0).then_some(dx))?;
        let grid = scenario.grid().map_err(err)?;
        let space = scenario.space().map_err(err)?;
        let cost = scenario.cost();
        let sol = HjbSolver::new(&grid, &space, &cost, scenario.solver_options().map_err(err)?)
            .solve(None)
            .map_err(err)?;
        let init = scenario.initial_density(Some(&sol)).map_err(err)?;
        let ensemble = run_feedback_transport(init, &sol, &cost, scenario.transport_mode).map_err(err)?;
        Ok(Crowd { ensemble })
    }

    pub fn nodes_per_axis(&self) -> Vec<u32> {
        self.ensemble.grid().nodes_per_axis().iter().map(|&n| n as u32).collect()
    }

    pub fn n_levels(&self) -> usize {
        self.ensemble.grid().n_levels()
    }

    pub fn time(&self, level: usize) -> f64 {
        self.ensemble.grid().time(level)
    }

    /// Density of the crowd still heading for the target.
    pub fn density(&self, level: usize) -> Result<Vec<f64>, String> {
        if level >= self.n_levels() {
            return Err(format!("level {level} out of range"));
        }
        Ok(self.ensemble.slice(level, self.ensemble.space().initial()).to_vec())
    }

    /// Live mass over the initial mass.
    pub fn live_fraction(&self, level: usize) -> f64 {
        let ledger = self.ensemble.ledger();
        ledger.total_live(level) / ledger.initial_mass()
    }
}
