//! Semi-Lagrangian push-forward of per-state crowd densities, with sinks
//! at stopping nodes, and the first-arrival-time solver.
//!
//! Densities are cell averages: `μ_{i,k}(p) ≈ |E_i|^{-1} ∫_{E_i} μ`, where
//! `E_i` is the cell of node `i` truncated to the domain. One step scatters
//! the mass of every non-sink node to the corners of the cell containing its
//! clamped characteristic image `x_j + Δt b(x_j, t_k)`, weighted by the Q1
//! basis functions. Clamping redeposits outgoing mass on the boundary, which
//! is the mass-preserving homogeneous Neumann treatment.
//!
//! Mass sitting on a sink node of state `p` at level `k` leaves `p` before
//! the scatter. It is either deposited at the same node into the switch
//! destination at level `k+1`, or deleted (absorbed by the exterior).

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::grid::{Grid, StateField, MAX_DIM};
use crate::hjb::ValueSolution;
use crate::statespace::{DiscreteState, StateSpace};

/// What happens to mass reaching a sink.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TransportMode {
    /// Switched agents reappear in the destination state.
    #[default]
    RouteToDestination,
    /// Switched agents leave the game.
    AbsorbToExterior,
}

/// Fate of the mass on one node during one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SinkAction {
    Advect,
    Route(DiscreteState),
    Absorb,
}

/// Supplies the velocity field and the sink decisions for each state.
pub trait TransportDriver: Sync {
    fn velocity(&self, level: usize, p: DiscreteState, node: usize, out: &mut [f64]);
    fn sink_action(&self, level: usize, p: DiscreteState, node: usize) -> SinkAction;
}

/// Drives the crowd with the optimal feedback of a value solution:
/// `b = f(x, α*(x, t_k, p), p)` and sinks at the nodes where `σ*` switches.
pub struct FeedbackDriver<'a, C: CostModel + ?Sized> {
    pub solution: &'a ValueSolution,
    pub cost: &'a C,
    pub mode: TransportMode,
}

impl<C: CostModel + ?Sized> TransportDriver for FeedbackDriver<'_, C> {
    fn velocity(&self, level: usize, p: DiscreteState, node: usize, out: &mut [f64]) {
        let x = self.solution.grid().node_coords(node);
        let d = out.len();
        self.cost
            .dynamics(&x[..d], self.solution.control(level, p, node), p, out);
    }

    fn sink_action(&self, level: usize, p: DiscreteState, node: usize) -> SinkAction {
        match self.solution.switch_destination(level, p, node) {
            None => SinkAction::Advect,
            Some(q) => match self.mode {
                TransportMode::RouteToDestination => SinkAction::Route(q),
                TransportMode::AbsorbToExterior => SinkAction::Absorb,
            },
        }
    }
}

/// A user-supplied velocity field `b(x, t)` shared by every state, with an
/// optional time-independent sink mask.
pub struct PrescribedDriver<'a, F> {
    pub grid: &'a Grid,
    pub field: F,
    pub sink: Option<Vec<bool>>,
    pub mode: TransportMode,
}

impl<F> TransportDriver for PrescribedDriver<'_, F>
where
    F: Fn(&[f64], f64, &mut [f64]) + Sync,
{
    fn velocity(&self, level: usize, _p: DiscreteState, node: usize, out: &mut [f64]) {
        let x = self.grid.node_coords(node);
        (self.field)(&x[..out.len()], self.grid.time(level), out);
    }

    fn sink_action(&self, _level: usize, p: DiscreteState, node: usize) -> SinkAction {
        match &self.sink {
            Some(mask) if mask[node] && !p.is_final() => match self.mode {
                TransportMode::RouteToDestination => {
                    SinkAction::Route(DiscreteState::final_state(p.n_targets()).expect("valid state"))
                }
                TransportMode::AbsorbToExterior => SinkAction::Absorb,
            },
            _ => SinkAction::Advect,
        }
    }
}

/// Mass moved from one state to another during step `step → step + 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transfer {
    pub step: usize,
    pub from: DiscreteState,
    pub to: DiscreteState,
    pub mass: f64,
}

/// Bookkeeping of live, transferred and absorbed mass.
#[derive(Clone, Debug, PartialEq)]
pub struct MassLedger {
    initial_mass: f64,
    live: Vec<Vec<f64>>,
    absorbed: Vec<f64>,
    transfers: Vec<Transfer>,
}

impl MassLedger {
    pub fn initial_mass(&self) -> f64 {
        self.initial_mass
    }

    /// Live mass of every state at level `k`, in canonical state order.
    pub fn live(&self, level: usize) -> &[f64] {
        &self.live[level]
    }

    pub fn total_live(&self, level: usize) -> f64 {
        self.live[level].iter().sum()
    }

    /// Mass removed from the game up to and including level `k`.
    pub fn absorbed(&self, level: usize) -> f64 {
        self.absorbed[level]
    }

    pub fn transfers(&self) -> &[Transfer] {
        &self.transfers
    }

    pub fn n_levels(&self) -> usize {
        self.live.len()
    }

    /// `|Σ_p live + absorbed − initial| / initial` at level `k`.
    pub fn conservation_error(&self, level: usize) -> f64 {
        let scale = self.initial_mass.abs().max(f64::MIN_POSITIVE);
        (self.total_live(level) + self.absorbed[level] - self.initial_mass).abs() / scale
    }
}

/// Per-state densities on every level together with their mass ledger.
#[derive(Clone, Debug)]
pub struct DensityEnsemble {
    grid: Grid,
    space: StateSpace,
    densities: StateField,
    ledger: MassLedger,
}

impl DensityEnsemble {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn space(&self) -> &StateSpace {
        &self.space
    }
    pub fn densities(&self) -> &StateField {
        &self.densities
    }
    pub fn ledger(&self) -> &MassLedger {
        &self.ledger
    }

    pub fn slice(&self, level: usize, p: DiscreteState) -> &[f64] {
        self.densities.slice(level, p.index())
    }

    /// An ensemble with no mass anywhere.
    pub fn empty(grid: &Grid, space: &StateSpace) -> Self {
        let levels = grid.n_levels();
        Self {
            grid: grid.clone(),
            space: space.clone(),
            densities: StateField::filled(levels, space.len(), grid.n_nodes(), 1, 0.0),
            ledger: MassLedger {
                initial_mass: 0.0,
                live: vec![vec![0.0; space.len()]; levels],
                absorbed: vec![0.0; levels],
                transfers: Vec::new(),
            },
        }
    }

    /// `Σ_i μ_i |E_i|` for one slice.
    pub fn slice_mass(grid: &Grid, slice: &[f64]) -> f64 {
        slice
            .iter()
            .enumerate()
            .map(|(i, m)| m * grid.cell_volume(i))
            .sum()
    }

    pub fn live_mass(&self, level: usize, p: DiscreteState) -> f64 {
        self.ledger.live[level][p.index()]
    }

    /// Total density `Σ_p μ(x_i, t_k, p)`, laid out level-major.
    pub fn total_density(&self) -> Vec<f64> {
        let n = self.grid.n_nodes();
        let mut out = vec![0.0; self.grid.n_levels() * n];
        for (k, chunk) in out.chunks_mut(n).enumerate() {
            for p in self.space.states() {
                for (o, v) in chunk.iter_mut().zip(self.densities.slice(k, p.index())) {
                    *o += v;
                }
            }
        }
        out
    }

    /// `θ·self + (1−θ)·other`, densities and ledger alike.
    pub fn blend(&self, other: &DensityEnsemble, theta: f64) -> Result<DensityEnsemble> {
        if !self.grid.same_discretization(&other.grid) || self.space != other.space {
            return Err(Error::GridMismatch("cannot blend ensembles on different grids".into()));
        }
        let mix = |a: f64, b: f64| theta * a + (1.0 - theta) * b;
        let mut densities = self.densities.clone();
        for (d, o) in densities.values_mut().iter_mut().zip(other.densities.values()) {
            *d = mix(*d, *o);
        }
        let live = self
            .ledger
            .live
            .iter()
            .zip(&other.ledger.live)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| mix(*x, *y)).collect())
            .collect();
        let absorbed = self
            .ledger
            .absorbed
            .iter()
            .zip(&other.ledger.absorbed)
            .map(|(a, b)| mix(*a, *b))
            .collect();
        let mut merged: BTreeMap<(usize, DiscreteState, DiscreteState), f64> = BTreeMap::new();
        for t in &self.ledger.transfers {
            *merged.entry((t.step, t.from, t.to)).or_default() += theta * t.mass;
        }
        for t in &other.ledger.transfers {
            *merged.entry((t.step, t.from, t.to)).or_default() += (1.0 - theta) * t.mass;
        }
        let transfers = merged
            .into_iter()
            .filter(|(_, m)| *m != 0.0)
            .map(|((step, from, to), mass)| Transfer { step, from, to, mass })
            .collect();
        Ok(DensityEnsemble {
            grid: self.grid.clone(),
            space: self.space.clone(),
            densities,
            ledger: MassLedger {
                initial_mass: mix(self.ledger.initial_mass, other.ledger.initial_mass),
                live,
                absorbed,
                transfers,
            },
        })
    }

    /// Largest `|Σ_p μ − Σ_p ν|` over every node and level.
    pub fn total_density_distance(&self, other: &DensityEnsemble) -> f64 {
        self.total_density()
            .iter()
            .zip(other.total_density())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    fn refresh_live(&mut self, level: usize) {
        for p in self.space.states() {
            self.ledger.live[level][p.index()] =
                Self::slice_mass(&self.grid, self.densities.slice(level, p.index()));
        }
    }
}

/// Cell averages of `m0` in `initial_state` at `t = 0`; every other state
/// and level starts empty. Nodes flagged in `vanish` start with no mass.
pub fn initialize_density(
    grid: &Grid,
    space: &StateSpace,
    m0: impl Fn(&[f64]) -> f64,
    initial_state: DiscreteState,
    vanish: Option<&[bool]>,
) -> Result<DensityEnsemble> {
    if !space.contains(initial_state) {
        return Err(Error::InvalidArgument(format!(
            "initial state {initial_state} is not in the state space"
        )));
    }
    let mut ens = DensityEnsemble::empty(grid, space);
    let slice = ens.densities.slice_mut(0, initial_state.index());
    for (i, v) in slice.iter_mut().enumerate() {
        let avg = grid.cell_average(&m0, i);
        if !(avg >= 0.0 && avg.is_finite()) {
            let x = grid.node_coords(i);
            return Err(Error::InvalidArgument(format!(
                "initial density must be finite and nonnegative, got {avg} near {:?}",
                &x[..grid.dim()]
            )));
        }
        *v = if vanish.is_some_and(|m| m[i]) { 0.0 } else { avg };
    }
    ens.refresh_live(0);
    ens.ledger.initial_mass = ens.ledger.total_live(0);
    Ok(ens)
}

/// `Φ_{i,k} = x_i + Δt b(x_i, t_k)`, clamped to the domain.
pub fn discrete_characteristic(grid: &Grid, node: usize, velocity: &[f64]) -> [f64; MAX_DIM] {
    let mut foot = grid.node_coords(node);
    for (c, v) in velocity.iter().enumerate().take(grid.dim()) {
        foot[c] += grid.dt() * v;
    }
    grid.clamp_in_place(&mut foot[..grid.dim()]);
    foot
}

/// Mass movements produced by one step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepRecord {
    pub transfers: Vec<Transfer>,
    pub absorbed: f64,
}

struct StateStep {
    advected: Vec<f64>,
    deposits: Vec<(usize, usize, f64)>,
    transfers: BTreeMap<usize, f64>,
    absorbed: f64,
}

/// Advances every state's density from level `k` (`current`, state-major)
/// to level `k + 1` (`next`).
pub fn push_forward_step(
    grid: &Grid,
    space: &StateSpace,
    level: usize,
    current: &[f64],
    next: &mut [f64],
    driver: &dyn TransportDriver,
) -> Result<StepRecord> {
    let n = grid.n_nodes();
    let d = grid.dim();
    if current.len() != n * space.len() || next.len() != current.len() {
        return Err(Error::GridMismatch("density level has the wrong size".into()));
    }
    let steps: Vec<StateStep> = space
        .states()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|p| {
            let mu = &current[p.index() * n..(p.index() + 1) * n];
            let mut out = StateStep {
                advected: vec![0.0; n],
                deposits: Vec::new(),
                transfers: BTreeMap::new(),
                absorbed: 0.0,
            };
            let mut vel = [0.0; MAX_DIM];
            for (j, &m) in mu.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                match driver.sink_action(level, p, j) {
                    SinkAction::Advect => {
                        driver.velocity(level, p, j, &mut vel[..d]);
                        let foot = discrete_characteristic(grid, j, &vel[..d]);
                        let vol_j = grid.cell_volume(j);
                        grid.for_each_corner(&foot[..d], |i, w| {
                            if w != 0.0 {
                                let ratio = vol_j / grid.cell_volume(i);
                                out.advected[i] += w * m * ratio;
                            }
                        });
                    }
                    SinkAction::Route(q) => {
                        out.deposits.push((q.index(), j, m));
                        *out.transfers.entry(q.index()).or_default() += m * grid.cell_volume(j);
                    }
                    SinkAction::Absorb => out.absorbed += m * grid.cell_volume(j),
                }
            }
            out
        })
        .collect();

    next.copy_from_slice(&vec![0.0; next.len()]);
    for (pi, step) in steps.iter().enumerate() {
        next[pi * n..(pi + 1) * n].copy_from_slice(&step.advected);
    }
    let mut record = StepRecord::default();
    for (pi, step) in steps.iter().enumerate() {
        for &(q, j, m) in &step.deposits {
            next[q * n + j] += m;
        }
        for (&q, &mass) in &step.transfers {
            record.transfers.push(Transfer {
                step: level,
                from: space.state(pi),
                to: space.state(q),
                mass,
            });
        }
        record.absorbed += step.absorbed;
    }
    if let Some(bad) = next.iter().position(|v| !(*v >= 0.0)) {
        return Err(Error::Invariant(format!(
            "negative or non-finite density {} at state {}, node {}",
            next[bad],
            space.state(bad / n),
            bad % n
        )));
    }
    Ok(record)
}

/// Applies `push_forward_step` for `k = 0 … n_steps − 1` starting from the
/// level-0 data of `initial`.
pub fn run_transport(initial: DensityEnsemble, driver: &dyn TransportDriver) -> Result<DensityEnsemble> {
    let mut ens = initial;
    let grid = ens.grid.clone();
    let space = ens.space.clone();
    for k in 0..grid.n_steps() {
        let (current, next) = ens.densities.split_next(k);
        let record = push_forward_step(&grid, &space, k, current, next, driver)?;
        ens.ledger.absorbed[k + 1] = ens.ledger.absorbed[k] + record.absorbed;
        ens.ledger.transfers.extend(record.transfers);
        ens.refresh_live(k + 1);
    }
    Ok(ens)
}

/// Transport under the optimal feedback of `solution`, checking that the
/// initial data lives on the same grid.
pub fn run_feedback_transport<C: CostModel + ?Sized>(
    initial: DensityEnsemble,
    solution: &ValueSolution,
    cost: &C,
    mode: TransportMode,
) -> Result<DensityEnsemble> {
    if !initial.grid.same_discretization(solution.grid()) || initial.space != *solution.space() {
        return Err(Error::GridMismatch(
            "initial density and value solution use different grids".into(),
        ));
    }
    let driver = FeedbackDriver { solution, cost, mode };
    run_transport(initial, &driver)
}

/// First arrival times `𝒯(x_i, t_k)` to a fixed sink, with the horizon `T`
/// standing in for "never".
#[derive(Clone, Debug, PartialEq)]
pub struct ArrivalTimeField {
    grid: Grid,
    values: Vec<f64>,
}

impl ArrivalTimeField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn slice(&self, level: usize) -> &[f64] {
        let n = self.grid.n_nodes();
        &self.values[level * n..(level + 1) * n]
    }

    pub fn value(&self, level: usize, node: usize) -> f64 {
        self.slice(level)[node]
    }

    /// Whether the sink is reached strictly before the horizon.
    pub fn reaches(&self, level: usize, node: usize) -> bool {
        self.value(level, node) < self.grid.horizon()
    }
}

/// Backward semi-Lagrangian sweep for the arrival time along `b`.
pub fn arrival_time_solve(
    grid: &Grid,
    field: impl Fn(&[f64], f64, &mut [f64]) + Sync,
    sink: &[bool],
) -> Result<ArrivalTimeField> {
    let n = grid.n_nodes();
    let d = grid.dim();
    if sink.len() != n {
        return Err(Error::GridMismatch(format!(
            "sink mask has {} entries, grid has {n} nodes",
            sink.len()
        )));
    }
    if !sink.iter().any(|&s| s) {
        return Err(Error::InvalidArgument("sink mask is empty".into()));
    }
    let horizon = grid.horizon();
    let last = grid.n_steps();
    let mut values = vec![horizon; grid.n_levels() * n];
    for k in (0..last).rev() {
        let t = grid.time(k);
        let (head, tail) = values.split_at_mut((k + 1) * n);
        let next = &tail[..n];
        head[k * n..].par_iter_mut().enumerate().for_each(|(i, out)| {
            if sink[i] {
                *out = t;
                return;
            }
            let mut b = [0.0; MAX_DIM];
            let x = grid.node_coords(i);
            field(&x[..d], t, &mut b[..d]);
            let foot = discrete_characteristic(grid, i, &b[..d]);
            *out = grid.interpolate(next, &foot[..d]).clamp(t, horizon);
        });
    }
    Ok(ArrivalTimeField {
        grid: grid.clone(),
        values,
    })
}
