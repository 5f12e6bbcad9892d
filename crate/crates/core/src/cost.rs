//! Dynamics and costs of a hybrid visiting problem.

use crate::grid::MAX_DIM;
use crate::statespace::DiscreteState;

/// Admissible controls. Controls live in the same space as positions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ControlSet {
    /// `‖a‖ ≤ radius`.
    Ball { radius: f64 },
    /// `|a_c| ≤ bound` componentwise.
    Box { bound: f64 },
}

impl ControlSet {
    #[inline]
    pub fn project(&self, a: &mut [f64]) {
        match *self {
            ControlSet::Ball { radius } => {
                let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > radius {
                    let s = radius / norm;
                    a.iter_mut().for_each(|v| *v *= s);
                }
            }
            ControlSet::Box { bound } => a.iter_mut().for_each(|v| *v = v.clamp(-bound, bound)),
        }
    }
}

const FD_STEP: f64 = 1e-7;

/// Everything the value solver needs to know about a problem besides the
/// grid: the controlled dynamics `f`, running cost `ℓ`, switching cost `C`,
/// terminal cost `ψ_p` and discount `λ`.
///
/// `density` passed to the running cost is the total crowd density (summed
/// over all discrete states) at the node and time being evaluated, or `0`
/// for an uncoupled solve.
///
/// A switching cost of `f64::INFINITY` forbids that switch.
pub trait CostModel: Sync {
    fn dynamics(&self, x: &[f64], a: &[f64], p: DiscreteState, out: &mut [f64]);

    /// `∂f_r/∂a_c` written row-major into `out` (`dim × dim`).
    fn dynamics_control_jacobian(&self, x: &[f64], a: &[f64], p: DiscreteState, out: &mut [f64]) {
        let d = a.len();
        let mut ap = [0.0; MAX_DIM];
        let mut am = [0.0; MAX_DIM];
        let mut fp = [0.0; MAX_DIM];
        let mut fm = [0.0; MAX_DIM];
        for c in 0..d {
            ap[..d].copy_from_slice(a);
            am[..d].copy_from_slice(a);
            let h = FD_STEP * a[c].abs().max(1.0);
            ap[c] += h;
            am[c] -= h;
            self.dynamics(x, &ap[..d], p, &mut fp[..d]);
            self.dynamics(x, &am[..d], p, &mut fm[..d]);
            for r in 0..d {
                out[r * d + c] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
    }

    fn running_cost(&self, x: &[f64], a: &[f64], p: DiscreteState, t: f64, density: f64) -> f64;

    fn running_cost_control_gradient(
        &self,
        x: &[f64],
        a: &[f64],
        p: DiscreteState,
        t: f64,
        density: f64,
        out: &mut [f64],
    ) {
        let d = a.len();
        let mut ap = [0.0; MAX_DIM];
        for c in 0..d {
            ap[..d].copy_from_slice(a);
            let h = FD_STEP * a[c].abs().max(1.0);
            ap[c] = a[c] + h;
            let lp = self.running_cost(x, &ap[..d], p, t, density);
            ap[c] = a[c] - h;
            let lm = self.running_cost(x, &ap[..d], p, t, density);
            out[c] = (lp - lm) / (2.0 * h);
        }
    }

    fn switching_cost(&self, x: &[f64], from: DiscreteState, to: DiscreteState) -> f64;

    fn terminal_cost(&self, x: &[f64], p: DiscreteState) -> f64;

    fn discount(&self) -> f64 {
        0.0
    }

    /// `None` selects the solver's default truncation of `A = R^d`.
    fn control_set(&self) -> Option<ControlSet> {
        None
    }

    /// Whether the running cost reads the crowd density.
    fn uses_density(&self) -> bool {
        false
    }
}

/// A target set: a point or a closed ball.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Target {
    pub center: [f64; MAX_DIM],
    pub radius: f64,
}

impl Target {
    pub fn point(center: &[f64]) -> Self {
        Self::ball(center, 0.0)
    }

    pub fn ball(center: &[f64], radius: f64) -> Self {
        let mut c = [0.0; MAX_DIM];
        c[..center.len()].copy_from_slice(center);
        Self { center: c, radius }
    }

    #[inline]
    pub fn distance(&self, x: &[f64]) -> f64 {
        let r = x
            .iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        (r - self.radius).max(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunningCost {
    /// `‖a‖²/2`.
    Quadratic,
    /// `exp(total density) + ‖a‖²/2`.
    Congestion,
}

/// `exp(Σ_p μ(x, t, p)) + ‖a‖²/2`.
#[inline]
pub fn congestion_running_cost(a: &[f64], total_density: f64) -> f64 {
    total_density.exp() + 0.5 * a.iter().map(|v| v * v).sum::<f64>()
}

/// The visiting problem with isotropic dynamics `f(x, a, p) = a`, switching
/// cost `C(x, p, p') = Σ_j χ_j(p, p') d(x, T_j)` and terminal cost
/// `ψ_p(x) = prefactor · C(x, p, p̄)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VisitingCost {
    pub targets: Vec<Target>,
    pub running: RunningCost,
    pub terminal_prefactor: f64,
    pub discount: f64,
    pub control_set: Option<ControlSet>,
}

impl VisitingCost {
    pub fn new(targets: Vec<Target>, running: RunningCost) -> Self {
        Self {
            targets,
            running,
            terminal_prefactor: 1.0,
            discount: 0.0,
            control_set: None,
        }
    }

    pub fn with_terminal_prefactor(mut self, prefactor: f64) -> Self {
        self.terminal_prefactor = prefactor;
        self
    }

    pub fn with_discount(mut self, discount: f64) -> Self {
        self.discount = discount;
        self
    }

    pub fn with_control_set(mut self, set: ControlSet) -> Self {
        self.control_set = Some(set);
        self
    }

    /// Sum of distances to the targets whose bit flips between the states.
    pub fn discarded_distance(&self, x: &[f64], from: DiscreteState, to: DiscreteState) -> f64 {
        self.targets
            .iter()
            .enumerate()
            .filter(|&(j, _)| from.is_done(j) != to.is_done(j))
            .map(|(_, t)| t.distance(x))
            .sum()
    }
}

impl CostModel for VisitingCost {
    #[inline]
    fn dynamics(&self, _x: &[f64], a: &[f64], _p: DiscreteState, out: &mut [f64]) {
        out.copy_from_slice(a);
    }

    fn dynamics_control_jacobian(&self, _x: &[f64], a: &[f64], _p: DiscreteState, out: &mut [f64]) {
        let d = a.len();
        for r in 0..d {
            for c in 0..d {
                out[r * d + c] = if r == c { 1.0 } else { 0.0 };
            }
        }
    }

    #[inline]
    fn running_cost(&self, _x: &[f64], a: &[f64], _p: DiscreteState, _t: f64, density: f64) -> f64 {
        match self.running {
            RunningCost::Quadratic => 0.5 * a.iter().map(|v| v * v).sum::<f64>(),
            RunningCost::Congestion => congestion_running_cost(a, density),
        }
    }

    fn running_cost_control_gradient(
        &self,
        _x: &[f64],
        a: &[f64],
        _p: DiscreteState,
        _t: f64,
        _density: f64,
        out: &mut [f64],
    ) {
        out.copy_from_slice(a);
    }

    fn switching_cost(&self, x: &[f64], from: DiscreteState, to: DiscreteState) -> f64 {
        self.discarded_distance(x, from, to)
    }

    fn terminal_cost(&self, x: &[f64], p: DiscreteState) -> f64 {
        let full = DiscreteState::final_state(p.n_targets()).expect("state has a valid target count");
        self.terminal_prefactor * self.discarded_distance(x, p, full)
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn control_set(&self) -> Option<ControlSet> {
        self.control_set
    }

    fn uses_density(&self) -> bool {
        self.running == RunningCost::Congestion
    }
}

/// `count` points `radius·(cos(2πj/count), sin(2πj/count))`, `j = 1..=count`.
pub fn ring_targets(count: usize, radius: f64) -> Vec<Target> {
    (1..=count)
        .map(|j| {
            let angle = j as f64 * std::f64::consts::TAU / count as f64;
            Target::point(&[radius * angle.cos(), radius * angle.sin()])
        })
        .collect()
}
