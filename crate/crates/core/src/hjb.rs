//! Backward explicit semi-Lagrangian solver for the family of p-labeled
//! HJB variational inequalities.
//!
//! One backward step reads every state at level `k` and writes level `k-1`:
//!
//! ```text
//! V(x_i, t_{k-1}, p) = min( NV(x_i, t_k, p), Σ(x_i, t_k, p, V) )
//! NV = min_{p' ∈ I_p} C(x_i, p, p') + V(x_i, t_k, p')
//! Σ  = λΔt V(x_i, t_k, p) + min_a I[V(·, t_k, p)](x_i + Δt f(x_i, a, p)) + Δt ℓ
//! ```
//!
//! Characteristic feet follow the forward dynamics and are clamped to the
//! domain. The argmins give the feedback maps `α*` and `σ*`; on a tie the
//! switch wins.

use rayon::prelude::*;

use crate::cost::{ControlSet, CostModel};
use crate::error::{Error, Result};
use crate::grid::{Coords, Grid, StateField, MAX_DIM};
use crate::statespace::{DiscreteState, StateSpace};
use crate::transport::DensityEnsemble;

/// Marker stored in the switch map where continuing is optimal.
pub const CONTINUE: i32 = -1;

/// Relative slack under which the switch and continuation values count as
/// tied. Ties switch.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Whether switching wins (or ties) against continuing.
#[inline]
pub fn prefers_switch(nv: f64, sigma: f64) -> bool {
    nv <= sigma + TIE_TOLERANCE * (1.0 + sigma.abs())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub max_descent_iters: usize,
    pub descent_tolerance: f64,
    /// Radius of the ball `A` is truncated to when the cost model does not
    /// supply a control set. `None` means `0.5 · diameter / Δt`.
    pub control_bound: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_descent_iters: 50,
            descent_tolerance: 1e-8,
            control_bound: None,
        }
    }
}

/// Result of the inner minimization at one node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HamiltonianMin {
    pub value: f64,
    pub control: Coords,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolveDiagnostics {
    /// Inner minimizations that hit the iteration cap.
    pub descent_not_converged: u64,
    pub minimizations: u64,
}

/// Value functions and feedback maps on every node, level and state.
#[derive(Clone, Debug)]
pub struct ValueSolution {
    grid: Grid,
    space: StateSpace,
    values: StateField,
    controls: StateField,
    switches: StateField<i32>,
    diagnostics: SolveDiagnostics,
}

impl ValueSolution {
    pub fn from_parts(
        grid: Grid,
        space: StateSpace,
        values: StateField,
        controls: StateField,
        switches: StateField<i32>,
    ) -> Result<Self> {
        let shape_ok = |n_levels: usize, n_states: usize, n_nodes: usize| {
            n_levels == grid.n_levels() && n_states == space.len() && n_nodes == grid.n_nodes()
        };
        if !shape_ok(values.n_levels(), values.n_states(), values.n_nodes())
            || !shape_ok(controls.n_levels(), controls.n_states(), controls.n_nodes())
            || !shape_ok(switches.n_levels(), switches.n_states(), switches.n_nodes())
            || values.width() != 1
            || switches.width() != 1
            || controls.width() != grid.dim()
        {
            return Err(Error::GridMismatch("field shapes do not match grid and state space".into()));
        }
        Ok(Self {
            grid,
            space,
            values,
            controls,
            switches,
            diagnostics: SolveDiagnostics::default(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn space(&self) -> &StateSpace {
        &self.space
    }
    pub fn values(&self) -> &StateField {
        &self.values
    }
    pub fn controls(&self) -> &StateField {
        &self.controls
    }
    pub fn switches(&self) -> &StateField<i32> {
        &self.switches
    }
    pub fn diagnostics(&self) -> SolveDiagnostics {
        self.diagnostics
    }

    pub fn value(&self, level: usize, p: DiscreteState, node: usize) -> f64 {
        self.values.get(level, p.index(), node)
    }

    pub fn value_slice(&self, level: usize, p: DiscreteState) -> &[f64] {
        self.values.slice(level, p.index())
    }

    pub fn control(&self, level: usize, p: DiscreteState, node: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.controls.slice(level, p.index())[node * d..(node + 1) * d]
    }

    /// `σ*(x_i, t_k, p)`; `None` where continuing is optimal.
    pub fn switch_destination(&self, level: usize, p: DiscreteState, node: usize) -> Option<DiscreteState> {
        let raw = self.switches.get(level, p.index(), node);
        (raw != CONTINUE).then(|| self.space.state(raw as usize))
    }

    /// Nodes where switching is optimal at level `k`: the discrete stopping set.
    pub fn stopping_set(&self, level: usize, p: DiscreteState) -> Vec<usize> {
        self.switches
            .slice(level, p.index())
            .iter()
            .enumerate()
            .filter(|(_, &s)| s != CONTINUE)
            .map(|(i, _)| i)
            .collect()
    }

    /// Q1 interpolation of the control map at an arbitrary point.
    pub fn interpolate_control(&self, level: usize, p: DiscreteState, x: &[f64]) -> Coords {
        let d = self.grid.dim();
        let slice = self.controls.slice(level, p.index());
        let mut out = [0.0; MAX_DIM];
        for (c, o) in out.iter_mut().enumerate().take(d) {
            *o = self.grid.interpolate_by(x, |n| slice[n * d + c]);
        }
        out
    }
}

/// The value solver for one grid, state space and cost model.
pub struct HjbSolver<'a, C: CostModel + ?Sized> {
    grid: &'a Grid,
    space: &'a StateSpace,
    cost: &'a C,
    options: SolverOptions,
    control_set: ControlSet,
    destinations: Vec<Vec<DiscreteState>>,
}

impl<'a, C: CostModel + ?Sized> HjbSolver<'a, C> {
    pub fn new(grid: &'a Grid, space: &'a StateSpace, cost: &'a C, options: SolverOptions) -> Self {
        let control_set = cost.control_set().unwrap_or(ControlSet::Ball {
            radius: options
                .control_bound
                .unwrap_or(0.5 * grid.diameter() / grid.dt()),
        });
        let destinations = space.states().map(|p| p.admissible_switches()).collect();
        Self {
            grid,
            space,
            cost,
            options,
            control_set,
            destinations,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    pub fn space(&self) -> &StateSpace {
        self.space
    }

    pub fn cost(&self) -> &C {
        self.cost
    }

    pub fn control_set(&self) -> ControlSet {
        self.control_set
    }

    /// `NV(x_i, t_k, p)` and its minimizing destination, given every state's
    /// values at level `t_k` (state-major). Ties go to the smallest bitmask.
    pub fn switching_value(&self, level_values: &[f64], node: usize, p: DiscreteState) -> Result<(f64, DiscreteState)> {
        let dests = &self.destinations[p.index()];
        if dests.is_empty() {
            return Err(Error::NoSwitchDestination(p.to_bitstring()));
        }
        let x = self.grid.node_coords(node);
        let x = &x[..self.grid.dim()];
        let n = self.grid.n_nodes();
        let mut best = (f64::INFINITY, dests[0]);
        for &q in dests {
            let v = self.cost.switching_cost(x, p, q) + level_values[q.index() * n + node];
            if v < best.0 {
                best = (v, q);
            }
        }
        Ok(best)
    }

    /// `Σ(x_i, t_k, p, V)` by projected gradient descent on the control,
    /// started from `-∇V(x_i)`.
    pub fn minimize_hamiltonian(&self, slice: &[f64], node: usize, level: usize, p: DiscreteState, density: f64) -> HamiltonianMin {
        let d = self.grid.dim();
        let dt = self.grid.dt();
        let t = self.grid.time(level);
        let x_full = self.grid.node_coords(node);
        let x = &x_full[..d];
        let cost = self.cost;
        let grid = self.grid;

        let objective = |a: &Coords, grad: Option<&mut Coords>| -> f64 {
            let mut vel = [0.0; MAX_DIM];
            cost.dynamics(x, &a[..d], p, &mut vel[..d]);
            let mut foot = [0.0; MAX_DIM];
            for c in 0..d {
                foot[c] = x[c] + dt * vel[c];
            }
            let clamped = grid.clamp_in_place(&mut foot[..d]);
            let running = cost.running_cost(x, &a[..d], p, t, density);
            match grad {
                None => grid.interpolate(slice, &foot[..d]) + dt * running,
                Some(g) => {
                    let mut gv = [0.0; MAX_DIM];
                    let v = grid.interpolate_with_gradient(slice, &foot[..d], &mut gv[..d]);
                    for (c, gc) in gv.iter_mut().enumerate().take(d) {
                        if clamped >> c & 1 == 1 {
                            *gc = 0.0;
                        }
                    }
                    let mut jac = [0.0; MAX_DIM * MAX_DIM];
                    cost.dynamics_control_jacobian(x, &a[..d], p, &mut jac[..d * d]);
                    let mut gl = [0.0; MAX_DIM];
                    cost.running_cost_control_gradient(x, &a[..d], p, t, density, &mut gl[..d]);
                    for c in 0..d {
                        let mut acc = 0.0;
                        for r in 0..d {
                            acc += gv[r] * jac[r * d + c];
                        }
                        g[c] = dt * (acc + gl[c]);
                    }
                    v + dt * running
                }
            }
        };

        let mut warm = [0.0; MAX_DIM];
        grid.nodal_gradient(slice, node, &mut warm[..d]);
        warm[..d].iter_mut().for_each(|v| *v = -*v);
        self.control_set.project(&mut warm[..d]);

        let zero = [0.0; MAX_DIM];
        let mut g = [0.0; MAX_DIM];
        let mut g0 = [0.0; MAX_DIM];
        let f_warm = objective(&warm, Some(&mut g));
        let f_zero = objective(&zero, Some(&mut g0));
        let (mut a, mut fa) = if f_zero < f_warm {
            g = g0;
            (zero, f_zero)
        } else {
            (warm, f_warm)
        };

        let tol = self.options.descent_tolerance;
        let base_step = 1.0 / dt;
        let mut converged = false;
        for _ in 0..self.options.max_descent_iters {
            let gnorm2: f64 = g[..d].iter().map(|v| v * v).sum();
            if gnorm2 == 0.0 {
                converged = true;
                break;
            }
            let mut step = base_step;
            let mut accepted = None;
            loop {
                let mut cand = a;
                for c in 0..d {
                    cand[c] -= step * g[c];
                }
                self.control_set.project(&mut cand[..d]);
                let mut move2 = 0.0;
                let mut decrease = 0.0;
                for c in 0..d {
                    let delta = cand[c] - a[c];
                    move2 += delta * delta;
                    decrease += g[c] * delta;
                }
                if move2.sqrt() < tol {
                    break;
                }
                let fc = objective(&cand, None);
                if fc <= fa + 1e-4 * decrease {
                    accepted = Some((cand, fc, move2.sqrt()));
                    break;
                }
                step *= 0.5;
            }
            match accepted {
                None => {
                    converged = true;
                    break;
                }
                Some((cand, _, moved)) => {
                    a = cand;
                    fa = objective(&a, Some(&mut g));
                    if moved < tol {
                        converged = true;
                        break;
                    }
                }
            }
        }

        let here = slice[node];
        HamiltonianMin {
            value: self.cost.discount() * dt * here + fa,
            control: a,
            converged,
        }
    }

    /// Runs the full backward sweep. `density` couples the running cost to
    /// a crowd; it must live on the same grid and state space.
    pub fn solve(&self, density: Option<&DensityEnsemble>) -> Result<ValueSolution> {
        let grid = self.grid;
        let n = grid.n_nodes();
        let d = grid.dim();
        let n_states = self.space.len();
        let n_levels = grid.n_levels();
        let last = grid.n_steps();

        let totals = match density {
            Some(ens) => {
                if !ens.grid().same_discretization(grid) || ens.space() != self.space {
                    return Err(Error::GridMismatch(
                        "density context is defined on a different grid or state space".into(),
                    ));
                }
                Some(ens.total_density())
            }
            None => None,
        };

        let mut values = StateField::filled(n_levels, n_states, n, 1, 0.0);
        let mut controls = StateField::filled(n_levels, n_states, n, d, 0.0);
        let mut switches = StateField::filled(n_levels, n_states, n, 1, CONTINUE);

        for p in self.space.states().filter(|p| !p.is_final()) {
            let slice = values.slice_mut(last, p.index());
            for (i, v) in slice.iter_mut().enumerate() {
                let x = grid.node_coords(i);
                *v = self.cost.terminal_cost(&x[..d], p);
            }
        }
        self.check_level(&values, last)?;

        let mut diagnostics = SolveDiagnostics::default();
        for k in (1..=last).rev() {
            let (out_vals, read) = values.split_previous(k);
            let out_ctrl = controls.level_mut(k - 1);
            let out_sw = switches.level_mut(k - 1);
            let density_at = |i: usize| totals.as_ref().map_or(0.0, |t| t[k * n + i]);

            let counts: (u64, u64) = out_vals
                .par_chunks_mut(n)
                .zip(out_ctrl.par_chunks_mut(n * d))
                .zip(out_sw.par_chunks_mut(n))
                .enumerate()
                .map(|(pi, ((vals, ctrl), sw))| {
                    let p = self.space.state(pi);
                    if p.is_final() {
                        return (0, 0);
                    }
                    let slice = &read[pi * n..(pi + 1) * n];
                    vals.par_iter_mut()
                        .zip(ctrl.par_chunks_mut(d))
                        .zip(sw.par_iter_mut())
                        .enumerate()
                        .map(|(i, ((v, a), s))| {
                            let (nv, dest) = self
                                .switching_value(read, i, p)
                                .expect("non-final state has destinations");
                            let ham = self.minimize_hamiltonian(slice, i, k, p, density_at(i));
                            a.copy_from_slice(&ham.control[..d]);
                            if prefers_switch(nv, ham.value) {
                                *v = nv;
                                *s = dest.index() as i32;
                            } else {
                                *v = ham.value;
                            }
                            (u64::from(!ham.converged), 1)
                        })
                        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1))
                })
                .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
            diagnostics.descent_not_converged += counts.0;
            diagnostics.minimizations += counts.1;
            self.check_level(&values, k - 1)?;
        }

        Ok(ValueSolution {
            grid: grid.clone(),
            space: self.space.clone(),
            values,
            controls,
            switches,
            diagnostics,
        })
    }

    fn check_level(&self, values: &StateField, level: usize) -> Result<()> {
        for p in self.space.states() {
            if values.slice(level, p.index()).iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericFailure {
                    level,
                    state: p.to_bitstring(),
                });
            }
        }
        Ok(())
    }
}
