//! Declarative problem descriptions.
//!
//! A scenario is a JSON object:
//!
//! ```json
//! {
//!   "name": "test2",
//!   "domain": { "lower": [-1, -1], "upper": [1, 1] },
//!   "dx": 0.04, "dt": 0.02, "horizon": 0.26,
//!   "targets": [{ "center": [0, 0.6] }],
//!   "running_cost": "test2-stop",
//!   "terminal_prefactor": 2,
//!   "initial_density": { "kind": "gaussian", "center": [0, 0], "k": 8 },
//!   "transport_mode": "absorb-to-exterior"
//! }
//! ```
//!
//! Optional fields and their defaults: `discount` 0, `terminal_prefactor` 1,
//! `control_bound` half the domain diameter over `dt`, `initial_density`
//! uniform 1, `initial_state` all zeros, `coupled` false, `transport_mode`
//! `route-to-destination`, `max_iters` 50, `theta` 1. A target's `radius`
//! defaults to 0 (a point target). Unknown fields are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cost::{RunningCost, Target, VisitingCost};
use crate::error::{Error, Result};
use crate::grid::{Grid, MAX_DIM};
use crate::hjb::{SolverOptions, ValueSolution};
use crate::mfg::MfgOptions;
use crate::statespace::{DiscreteState, StateSpace, MAX_TARGETS};
use crate::transport::{initialize_density, DensityEnsemble, TransportMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub center: Vec<f64>,
    #[serde(default)]
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostSelector {
    #[serde(rename = "test1")]
    Test1,
    #[serde(rename = "test2-stop")]
    Test2Stop,
    #[serde(rename = "congestion")]
    Congestion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialDensity {
    /// `exp(-k ‖x - center‖²)`.
    Gaussian { center: Vec<f64>, k: f64 },
    Uniform { value: f64 },
}

impl Default for InitialDensity {
    fn default() -> Self {
        InitialDensity::Uniform { value: 1.0 }
    }
}

impl InitialDensity {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            InitialDensity::Gaussian { center, k } => {
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                (-k * r2).exp()
            }
            InitialDensity::Uniform { value } => *value,
        }
    }
}

fn one() -> f64 {
    1.0
}
fn fifty() -> usize {
    50
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub domain: Domain,
    pub dx: f64,
    pub dt: f64,
    pub horizon: f64,
    #[serde(default)]
    pub discount: f64,
    pub targets: Vec<TargetSpec>,
    pub running_cost: CostSelector,
    #[serde(default = "one")]
    pub terminal_prefactor: f64,
    #[serde(default)]
    pub control_bound: Option<f64>,
    #[serde(default)]
    pub initial_density: InitialDensity,
    #[serde(default)]
    pub initial_state: Option<String>,
    #[serde(default)]
    pub coupled: bool,
    #[serde(default)]
    pub transport_mode: TransportMode,
    #[serde(default = "fifty")]
    pub max_iters: usize,
    #[serde(default = "one")]
    pub theta: f64,
}

/// Parses and validates scenario text.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::Parse {
            line: inner.line(),
            column: inner.column(),
            path,
            message: inner.to_string(),
        }
    })?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::InvalidArgument(format!("cannot read scenario {}: {e}", path.display()))
    })?;
    parse_scenario(&text)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Validation(format!("{name} must be positive and finite, got {v}")))
    }
}

impl Scenario {
    pub fn dim(&self) -> usize {
        self.domain.lower.len()
    }

    pub fn n_targets(&self) -> usize {
        self.targets.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 || d > MAX_DIM {
            return Err(Error::Validation(format!("domain dimension must be 1..={MAX_DIM}, got {d}")));
        }
        if self.domain.upper.len() != d {
            return Err(Error::Validation("domain.lower and domain.upper differ in length".into()));
        }
        for (a, (lo, hi)) in self.domain.lower.iter().zip(&self.domain.upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Validation(format!("domain axis {a} must satisfy lower < upper")));
            }
        }
        positive("dx", self.dx)?;
        positive("dt", self.dt)?;
        positive("horizon", self.horizon)?;
        if !(self.discount.is_finite() && self.discount >= 0.0) {
            return Err(Error::Validation("discount must be nonnegative".into()));
        }
        if !(self.terminal_prefactor.is_finite() && self.terminal_prefactor >= 0.0) {
            return Err(Error::Validation("terminal_prefactor must be nonnegative".into()));
        }
        if let Some(b) = self.control_bound {
            positive("control_bound", b)?;
        }
        let n = self.n_targets();
        if n == 0 || n > MAX_TARGETS {
            return Err(Error::Validation(format!("number of targets must be 1..={MAX_TARGETS}, got {n}")));
        }
        for (j, t) in self.targets.iter().enumerate() {
            if t.center.len() != d {
                return Err(Error::Validation(format!("target {} has {} coordinates, domain has {d}", j + 1, t.center.len())));
            }
            if !(t.radius.is_finite() && t.radius >= 0.0) {
                return Err(Error::Validation(format!("target {} radius must be nonnegative", j + 1)));
            }
            let inside = t
                .center
                .iter()
                .zip(self.domain.lower.iter().zip(&self.domain.upper))
                .all(|(c, (lo, hi))| c.is_finite() && c >= lo && c <= hi);
            if !inside {
                return Err(Error::Validation(format!("target {} lies outside the domain", j + 1)));
            }
        }
        for a in 0..n {
            for b in a + 1..n {
                let (ta, tb) = (&self.targets[a], &self.targets[b]);
                let dist: f64 = ta
                    .center
                    .iter()
                    .zip(&tb.center)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                if dist <= ta.radius + tb.radius {
                    return Err(Error::Validation(format!("targets {} and {} are not disjoint", a + 1, b + 1)));
                }
            }
        }
        match &self.initial_density {
            InitialDensity::Gaussian { center, k } => {
                if center.len() != d {
                    return Err(Error::Validation("initial_density.center has the wrong dimension".into()));
                }
                if !(k.is_finite() && *k >= 0.0) || !center.iter().all(|c| c.is_finite()) {
                    return Err(Error::Validation("initial_density gaussian parameters must be finite, k ≥ 0".into()));
                }
            }
            InitialDensity::Uniform { value } => {
                if !(value.is_finite() && *value >= 0.0) {
                    return Err(Error::Validation("initial_density.value must be nonnegative".into()));
                }
            }
        }
        if let Some(s) = &self.initial_state {
            let p = DiscreteState::parse(s).map_err(|e| Error::Validation(format!("initial_state: {e}")))?;
            if p.n_targets() != n {
                return Err(Error::Validation(format!("initial_state {s:?} must have {n} bits")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::Validation("max_iters must be at least 1".into()));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::Validation(format!("theta must lie in (0, 1], got {}", self.theta)));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(&self.domain.lower, &self.domain.upper, self.dx, self.dt, self.horizon)
    }

    pub fn space(&self) -> Result<StateSpace> {
        StateSpace::new(self.n_targets())
    }

    pub fn initial_state(&self) -> Result<DiscreteState> {
        match &self.initial_state {
            Some(s) => self.space()?.parse_state(s),
            None => DiscreteState::initial(self.n_targets()),
        }
    }

    pub fn cost(&self) -> VisitingCost {
        let targets = self
            .targets
            .iter()
            .map(|t| Target::ball(&t.center, t.radius))
            .collect();
        let running = match self.running_cost {
            CostSelector::Test1 | CostSelector::Test2Stop => RunningCost::Quadratic,
            CostSelector::Congestion => RunningCost::Congestion,
        };
        VisitingCost::new(targets, running)
            .with_terminal_prefactor(self.terminal_prefactor)
            .with_discount(self.discount)
    }

    /// Control bound actually used, after resolving the default.
    pub fn resolved_control_bound(&self) -> Result<f64> {
        match self.control_bound {
            Some(b) => Ok(b),
            None => {
                let g = self.grid()?;
                Ok(0.5 * g.diameter() / g.dt())
            }
        }
    }

    pub fn solver_options(&self) -> Result<SolverOptions> {
        Ok(SolverOptions {
            control_bound: Some(self.resolved_control_bound()?),
            ..SolverOptions::default()
        })
    }

    /// Fixed-point threshold: half the nominal space step.
    pub fn threshold(&self) -> f64 {
        self.dx / 2.0
    }

    pub fn mfg_options(&self) -> Result<MfgOptions> {
        Ok(MfgOptions {
            max_iters: self.max_iters,
            theta: self.theta,
            threshold: self.threshold(),
            mode: self.transport_mode,
            solver: self.solver_options()?,
        })
    }

    /// Initial crowd at `t = 0`. In absorb mode the density starts empty on
    /// the stopping set of the initial state when a solution is supplied.
    pub fn initial_density(&self, solution: Option<&ValueSolution>) -> Result<DensityEnsemble> {
        let grid = self.grid()?;
        let space = self.space()?;
        let p0 = self.initial_state()?;
        let vanish = match (self.transport_mode, solution) {
            (TransportMode::AbsorbToExterior, Some(sol)) => {
                let mut mask = vec![false; grid.n_nodes()];
                for i in sol.stopping_set(0, p0) {
                    mask[i] = true;
                }
                Some(mask)
            }
            _ => None,
        };
        initialize_density(&grid, &space, |x| self.initial_density.eval(x), p0, vanish.as_deref())
    }

    /// Copy with every default made explicit.
    pub fn normalized(&self) -> Result<Scenario> {
        let mut out = self.clone();
        out.control_bound = Some(self.resolved_control_bound()?);
        out.initial_state = Some(self.initial_state()?.to_bitstring());
        Ok(out)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// SHA-256 of the compact JSON of the normalized scenario.
    pub fn hash(&self) -> Result<String> {
        let text = serde_json::to_string(&self.normalized()?)?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }
}
