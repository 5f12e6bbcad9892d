//! Uniform space-time grids on a box, per-state fields, and Q1 interpolation.

use crate::error::{Error, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Coordinates in a fixed-capacity array; only the first `dim` entries matter.
pub type Coords = [f64; MAX_DIM];

/// A uniform tensor grid on `[lower, upper]` together with a uniform time
/// discretization of `[0, T]`.
///
/// The requested space step is snapped to the nearest value that divides
/// each axis into an integer number of cells, and the requested time step
/// to the nearest value dividing the horizon, so `x_i = lower + i·Δx` hits
/// `upper` and `t_{n_steps} = T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    lower: Coords,
    upper: Coords,
    spacing: Coords,
    n_nodes: [usize; MAX_DIM],
    strides: [usize; MAX_DIM],
    n_total: usize,
    dt: f64,
    horizon: f64,
    n_steps: usize,
}

impl Grid {
    pub fn new(lower: &[f64], upper: &[f64], dx: f64, dt: f64, horizon: f64) -> Result<Self> {
        let dim = lower.len();
        if dim == 0 || dim > MAX_DIM || upper.len() != dim {
            return Err(Error::InvalidArgument(format!(
                "domain corners must have the same dimension in 1..={MAX_DIM}"
            )));
        }
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(Error::InvalidArgument(format!("space step must be positive, got {dx}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        let mut g = Grid {
            dim,
            lower: [0.0; MAX_DIM],
            upper: [0.0; MAX_DIM],
            spacing: [1.0; MAX_DIM],
            n_nodes: [1; MAX_DIM],
            strides: [0; MAX_DIM],
            n_total: 1,
            dt: 0.0,
            horizon,
            n_steps: 0,
        };
        for a in 0..dim {
            let (lo, hi) = (lower[a], upper[a]);
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::InvalidArgument(format!(
                    "axis {a}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
            let cells = ((hi - lo) / dx).round().max(1.0) as usize;
            g.lower[a] = lo;
            g.upper[a] = hi;
            g.spacing[a] = (hi - lo) / cells as f64;
            g.n_nodes[a] = cells + 1;
        }
        let mut stride = 1;
        for a in (0..dim).rev() {
            g.strides[a] = stride;
            stride *= g.n_nodes[a];
        }
        g.n_total = stride;
        g.n_steps = (horizon / dt).round().max(1.0) as usize;
        g.dt = horizon / g.n_steps as f64;
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn lower(&self) -> &[f64] {
        &self.lower[..self.dim]
    }
    pub fn upper(&self) -> &[f64] {
        &self.upper[..self.dim]
    }
    /// Space step along each axis.
    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.dim]
    }
    /// Space step along the first axis (all axes agree on square domains).
    pub fn dx(&self) -> f64 {
        self.spacing[0]
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    /// Number of time levels, `n_steps + 1`.
    pub fn n_levels(&self) -> usize {
        self.n_steps + 1
    }
    pub fn n_nodes(&self) -> usize {
        self.n_total
    }
    pub fn nodes_per_axis(&self) -> &[usize] {
        &self.n_nodes[..self.dim]
    }
    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon
        } else {
            k as f64 * self.dt
        }
    }
    pub fn diameter(&self) -> f64 {
        (0..self.dim)
            .map(|a| (self.upper[a] - self.lower[a]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Whether two grids describe the same nodes and time levels.
    pub fn same_discretization(&self, other: &Grid) -> bool {
        self == other
    }

    pub fn unravel(&self, node: usize) -> [usize; MAX_DIM] {
        let mut idx = [0; MAX_DIM];
        let mut rest = node;
        for a in 0..self.dim {
            idx[a] = rest / self.strides[a];
            rest %= self.strides[a];
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        (0..self.dim).map(|a| idx[a] * self.strides[a]).sum()
    }

    pub fn node_coords(&self, node: usize) -> Coords {
        let idx = self.unravel(node);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim {
            x[a] = self.axis_coord(a, idx[a]);
        }
        x
    }

    #[inline]
    fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.n_nodes[axis] {
            self.upper[axis]
        } else {
            self.lower[axis] + i as f64 * self.spacing[axis]
        }
    }

    /// Componentwise projection onto the domain.
    pub fn clamp_to_domain(&self, x: &[f64]) -> Coords {
        let mut out = [0.0; MAX_DIM];
        out[..self.dim].copy_from_slice(&x[..self.dim]);
        self.clamp_in_place(&mut out);
        out
    }

    /// Clamps in place and returns a bitmask of the axes that were clamped.
    #[inline]
    pub fn clamp_in_place(&self, x: &mut [f64]) -> u8 {
        let mut mask = 0;
        for a in 0..self.dim {
            if x[a] < self.lower[a] {
                x[a] = self.lower[a];
                mask |= 1 << a;
            } else if x[a] > self.upper[a] {
                x[a] = self.upper[a];
                mask |= 1 << a;
            }
        }
        mask
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.dim).all(|a| x[a] >= self.lower[a] && x[a] <= self.upper[a])
    }

    #[inline]
    fn locate(&self, x: &[f64]) -> (usize, Coords) {
        let mut base = 0;
        let mut frac = [0.0; MAX_DIM];
        for a in 0..self.dim {
            let mut s = ((x[a] - self.lower[a]) / self.spacing[a]).clamp(0.0, (self.n_nodes[a] - 1) as f64);
            // Points that land on a node up to rounding are treated as the node.
            if (s - s.round()).abs() < 1e-9 {
                s = s.round();
            }
            let i = (s.floor() as usize).min(self.n_nodes[a] - 2);
            frac[a] = s - i as f64;
            base += i * self.strides[a];
        }
        (base, frac)
    }

    /// Visits the `2^d` corners of the cell containing the (clamped) point
    /// with their multilinear weights. Weights are nonnegative and sum to 1.
    #[inline]
    pub fn for_each_corner(&self, x: &[f64], mut visit: impl FnMut(usize, f64)) {
        let (base, frac) = self.locate(x);
        for corner in 0..(1usize << self.dim) {
            let mut w = 1.0;
            let mut node = base;
            for a in 0..self.dim {
                if corner >> a & 1 == 1 {
                    w *= frac[a];
                    node += self.strides[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            visit(node, w);
        }
    }

    /// Q1 interpolation of nodal values given by `value(node)`.
    #[inline]
    pub fn interpolate_by(&self, x: &[f64], value: impl Fn(usize) -> f64) -> f64 {
        let mut acc = 0.0;
        self.for_each_corner(x, |node, w| {
            if w != 0.0 {
                acc += w * value(node);
            }
        });
        acc
    }

    /// Q1 interpolation of a node-major slice.
    #[inline]
    pub fn interpolate(&self, slice: &[f64], x: &[f64]) -> f64 {
        self.interpolate_by(x, |n| slice[n])
    }

    /// Q1 interpolation together with the gradient of the interpolant in
    /// the cell containing `x`.
    pub fn interpolate_with_gradient(&self, slice: &[f64], x: &[f64], grad: &mut [f64]) -> f64 {
        let (base, frac) = self.locate(x);
        grad[..self.dim].iter_mut().for_each(|g| *g = 0.0);
        let mut acc = 0.0;
        for corner in 0..(1usize << self.dim) {
            let mut node = base;
            let mut factors = [0.0; MAX_DIM];
            let mut signs = [0.0; MAX_DIM];
            for a in 0..self.dim {
                if corner >> a & 1 == 1 {
                    factors[a] = frac[a];
                    signs[a] = 1.0;
                    node += self.strides[a];
                } else {
                    factors[a] = 1.0 - frac[a];
                    signs[a] = -1.0;
                }
            }
            let v = slice[node];
            acc += v * factors[..self.dim].iter().product::<f64>();
            for a in 0..self.dim {
                let mut w = signs[a] / self.spacing[a];
                for b in 0..self.dim {
                    if b != a {
                        w *= factors[b];
                    }
                }
                grad[a] += w * v;
            }
        }
        acc
    }

    /// Central-difference gradient at a node, one-sided on the boundary.
    pub fn nodal_gradient(&self, slice: &[f64], node: usize, grad: &mut [f64]) {
        let idx = self.unravel(node);
        for a in 0..self.dim {
            let s = self.strides[a];
            let h = self.spacing[a];
            grad[a] = if idx[a] == 0 {
                (slice[node + s] - slice[node]) / h
            } else if idx[a] + 1 == self.n_nodes[a] {
                (slice[node] - slice[node - s]) / h
            } else {
                (slice[node + s] - slice[node - s]) / (2.0 * h)
            };
        }
    }

    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let mut node = 0;
        for a in 0..self.dim {
            let s = ((x[a] - self.lower[a]) / self.spacing[a]).round();
            let i = s.clamp(0.0, (self.n_nodes[a] - 1) as f64) as usize;
            node += i * self.strides[a];
        }
        node
    }

    fn cell_bounds(&self, node: usize) -> (Coords, Coords) {
        let x = self.node_coords(node);
        let mut lo = [0.0; MAX_DIM];
        let mut hi = [0.0; MAX_DIM];
        for a in 0..self.dim {
            let half = 0.5 * self.spacing[a];
            lo[a] = (x[a] - half).max(self.lower[a]);
            hi[a] = (x[a] + half).min(self.upper[a]);
        }
        (lo, hi)
    }

    /// `|E_i|`: measure of the cell of node `i` truncated to the domain.
    pub fn cell_volume(&self, node: usize) -> f64 {
        let (lo, hi) = self.cell_bounds(node);
        (0..self.dim).map(|a| hi[a] - lo[a]).product()
    }

    /// Mean of `f` over the (truncated) cell of node `i`, by a 4-point
    /// Gauss-Legendre tensor rule.
    pub fn cell_average(&self, f: impl Fn(&[f64]) -> f64, node: usize) -> f64 {
        const GL_NODES: [f64; 4] = [
            -0.861_136_311_594_052_6,
            -0.339_981_043_584_856_3,
            0.339_981_043_584_856_3,
            0.861_136_311_594_052_6,
        ];
        const GL_WEIGHTS: [f64; 4] = [
            0.347_854_845_137_453_8,
            0.652_145_154_862_546_2,
            0.652_145_154_862_546_2,
            0.347_854_845_137_453_8,
        ];
        let (lo, hi) = self.cell_bounds(node);
        let n_points = 4usize.pow(self.dim as u32);
        let mut acc = 0.0;
        let mut p = [0.0; MAX_DIM];
        for q in 0..n_points {
            let mut w = 1.0;
            let mut rest = q;
            for a in 0..self.dim {
                let k = rest % 4;
                rest /= 4;
                let mid = 0.5 * (lo[a] + hi[a]);
                let half = 0.5 * (hi[a] - lo[a]);
                p[a] = mid + half * GL_NODES[k];
                // Weights on [-1, 1] sum to 2; halve them to average.
                w *= 0.5 * GL_WEIGHTS[k];
            }
            acc += w * f(&p[..self.dim]);
        }
        acc
    }
}

/// Per-(level, state, node) storage, `width` values per node.
///
/// Layout is level-major, then state in canonical order, then node-major
/// within each slice.
#[derive(Clone, Debug, PartialEq)]
pub struct StateField<T = f64> {
    n_levels: usize,
    n_states: usize,
    n_nodes: usize,
    width: usize,
    values: Vec<T>,
}

impl<T: Copy> StateField<T> {
    pub fn filled(n_levels: usize, n_states: usize, n_nodes: usize, width: usize, fill: T) -> Self {
        Self {
            n_levels,
            n_states,
            n_nodes,
            width,
            values: vec![fill; n_levels * n_states * n_nodes * width],
        }
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }
    pub fn n_states(&self) -> usize {
        self.n_states
    }
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }
    pub fn width(&self) -> usize {
        self.width
    }

    fn slice_len(&self) -> usize {
        self.n_nodes * self.width
    }

    fn level_len(&self) -> usize {
        self.n_states * self.slice_len()
    }

    pub fn slice(&self, level: usize, state: usize) -> &[T] {
        let start = level * self.level_len() + state * self.slice_len();
        &self.values[start..start + self.slice_len()]
    }

    pub fn slice_mut(&mut self, level: usize, state: usize) -> &mut [T] {
        let len = self.slice_len();
        let start = level * self.level_len() + state * len;
        &mut self.values[start..start + len]
    }

    /// All states at one level, state-major.
    pub fn level(&self, level: usize) -> &[T] {
        let len = self.level_len();
        &self.values[level * len..(level + 1) * len]
    }

    pub fn level_mut(&mut self, level: usize) -> &mut [T] {
        let len = self.level_len();
        &mut self.values[level * len..(level + 1) * len]
    }

    /// Mutable access to level `read - 1` alongside shared access to `read`.
    pub fn split_previous(&mut self, read: usize) -> (&mut [T], &[T]) {
        assert!(read >= 1 && read < self.n_levels);
        let len = self.level_len();
        let (lo, hi) = self.values.split_at_mut(read * len);
        (&mut lo[(read - 1) * len..], &hi[..len])
    }

    /// Mutable access to level `read + 1` alongside shared access to `read`.
    pub fn split_next(&mut self, read: usize) -> (&[T], &mut [T]) {
        assert!(read + 1 < self.n_levels);
        let len = self.level_len();
        let (lo, hi) = self.values.split_at_mut((read + 1) * len);
        (&lo[read * len..], &mut hi[..len])
    }

    pub fn get(&self, level: usize, state: usize, node: usize) -> T {
        self.slice(level, state)[node * self.width]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }
}

impl StateField<f64> {
    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
