//! Uniform periodic grid over the unit circle [0, 1), grid functions and
//! probability measures on it, interpolation, differentiation, quadrature,
//! pushforward of phase-space measures, and the exact Wasserstein-1 distance.

use crate::dynamics::ContactState;
use crate::error::{KamError, Result};

/// Uniform periodic discretization of the circle with n nodes x_i = i/n.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PeriodicGrid {
    n: usize,
}

/// Wrap a point into [0, 1).
pub fn wrap(x: f64) -> f64 {
    let y = x - x.floor();
    // x slightly below an integer can round to 1.0
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

/// Geodesic distance between two circle points.
pub fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (wrap(a) - wrap(b)).abs();
    d.min(1.0 - d)
}

impl PeriodicGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 {
            return Err(KamError::GridTooSmall(n));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Node spacing h = 1/n.
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Position of node i (indices wrap modulo n).
    pub fn node(&self, i: usize) -> f64 {
        (i % self.n) as f64 * self.h()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Index of the grid node nearest to x; exact half-cell ties go to the
    /// lower index.
    pub fn nearest_node(&self, x: f64) -> usize {
        let t = wrap(x) * self.n as f64;
        let fl = t.floor();
        let frac = t - fl;
        let idx = if frac > 0.5 { fl as usize + 1 } else { fl as usize };
        idx % self.n
    }
}

/// Finite difference stencil for [`GridFunction::gradient`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiffMode {
    Centered,
    Forward,
    Backward,
}

/// Real-valued function sampled at the grid nodes, periodic by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(KamError::GridMismatch(values.len(), grid.n()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(KamError::InvalidConfig(format!(
                "non-finite grid value {bad}"
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: PeriodicGrid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.n()],
        }
    }

    /// Sample a closure at the grid nodes.
    pub fn sample(grid: PeriodicGrid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid,
            values: (0..grid.n()).map(|i| f(grid.node(i))).collect(),
        }
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at node i, indices wrapping modulo n.
    pub fn value(&self, i: usize) -> f64 {
        self.values[i % self.grid.n()]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest slope magnitude between adjacent nodes (discrete Lipschitz
    /// estimate).
    pub fn max_adjacent_slope(&self) -> f64 {
        let n = self.grid.n();
        let h = self.grid.h();
        (0..n)
            .map(|i| (self.values[(i + 1) % n] - self.values[i]).abs() / h)
            .fold(0.0, f64::max)
    }

    /// Periodic piecewise-linear interpolation. Exact at nodes and monotone:
    /// the result never leaves the interval spanned by the (distinct or
    /// equal) neighboring node values.
    pub fn interpolate(&self, x: f64) -> f64 {
        let n = self.grid.n();
        let t = wrap(x) * n as f64;
        let i0 = t.floor() as usize; // < n since wrap(x) < 1
        let frac = t - t.floor();
        let a = self.values[i0 % n];
        let b = self.values[(i0 + 1) % n];
        a * (1.0 - frac) + b * frac
    }

    /// Periodic finite difference. Centered is second order; forward and
    /// backward are the one-sided first order stencils.
    pub fn gradient(&self, mode: DiffMode) -> GridFunction {
        let n = self.grid.n();
        let h = self.grid.h();
        let v = &self.values;
        let values = (0..n)
            .map(|i| match mode {
                DiffMode::Centered => (v[(i + 1) % n] - v[(i + n - 1) % n]) / (2.0 * h),
                DiffMode::Forward => (v[(i + 1) % n] - v[i]) / h,
                DiffMode::Backward => (v[i] - v[(i + n - 1) % n]) / h,
            })
            .collect();
        GridFunction {
            grid: self.grid,
            values,
        }
    }

    /// Riemann sum h * sum_i f_i, exact for trigonometric polynomials of
    /// degree below n/2.
    pub fn quadrature(&self) -> f64 {
        self.grid.h() * self.values.iter().sum::<f64>()
    }

    /// Serialize as CSV with header `x,value`, one row per node. Numbers are
    /// written in shortest round-trip decimal form.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,value\n");
        for i in 0..self.grid.n() {
            out.push_str(&format!("{},{}\n", self.grid.node(i), self.values[i]));
        }
        out
    }

    /// Parse the CSV format produced by [`GridFunction::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let values = parse_value_column(text)?;
        let grid = PeriodicGrid::new(values.len())?;
        GridFunction::new(grid, values)
    }
}

fn parse_value_column(text: &str) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with('x')) {
            continue;
        }
        let field = line
            .split(',')
            .nth(1)
            .ok_or_else(|| KamError::InvalidConfig(format!("csv line {}: missing value column", lineno + 1)))?;
        let v: f64 = field.trim().parse().map_err(|_| {
            KamError::InvalidConfig(format!("csv line {}: bad number {field:?}", lineno + 1))
        })?;
        values.push(v);
    }
    Ok(values)
}

/// Probability measure supported on the grid nodes: nonnegative weights
/// summing to 1 within 1e-12.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMeasure {
    grid: PeriodicGrid,
    weights: Vec<f64>,
}

impl GridMeasure {
    pub fn new(grid: PeriodicGrid, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.n() {
            return Err(KamError::GridMismatch(weights.len(), grid.n()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(KamError::InvalidMeasure(format!("weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(KamError::InvalidMeasure(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { grid, weights })
    }

    pub fn uniform(grid: PeriodicGrid) -> Self {
        let n = grid.n();
        Self {
            grid,
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// Unit atom at node i.
    pub fn dirac(grid: PeriodicGrid, i: usize) -> Self {
        let mut weights = vec![0.0; grid.n()];
        weights[i % grid.n()] = 1.0;
        Self { grid, weights }
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes carrying strictly positive mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.grid.n()).filter(|&i| self.weights[i] > 0.0).collect()
    }

    /// Convex combination (1 - alpha) * self + alpha * other.
    pub fn blend(&self, other: &GridMeasure, alpha: f64) -> Result<GridMeasure> {
        check_same_grid(self.grid, other.grid)?;
        let weights = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
            .collect();
        GridMeasure::new(self.grid, weights)
    }

    /// Serialize as CSV with header `x,value` (value = node weight).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,value\n");
        for i in 0..self.grid.n() {
            out.push_str(&format!("{},{}\n", self.grid.node(i), self.weights[i]));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let weights = parse_value_column(text)?;
        let grid = PeriodicGrid::new(weights.len())?;
        GridMeasure::new(grid, weights)
    }
}

fn check_same_grid(a: PeriodicGrid, b: PeriodicGrid) -> Result<()> {
    if a.n() != b.n() {
        return Err(KamError::GridMismatch(a.n(), b.n()));
    }
    Ok(())
}

/// Exact Wasserstein-1 distance between two node-supported measures on the
/// circle.
///
/// With G the cumulative sum of the weight differences, the optimal
/// transport cost equals h * sum_i |G_i - c| minimized over the offset c,
/// and the minimum is attained at a median of the G_i. The offset accounts
/// for mass optionally flowing around the circle. The median interval
/// midpoint is used so that swapping the arguments negates G and leaves
/// every |G_i - c| bit-for-bit unchanged.
pub fn d1_distance(m1: &GridMeasure, m2: &GridMeasure) -> Result<f64> {
    check_same_grid(m1.grid, m2.grid)?;
    let n = m1.grid.n();
    let h = m1.grid.h();
    let mut cum = Vec::with_capacity(n);
    let mut acc = 0.0;
    for i in 0..n {
        acc += m1.weights[i] - m2.weights[i];
        cum.push(acc);
    }
    let mut sorted = cum.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let c = 0.5 * (sorted[(n - 1) / 2] + sorted[n / 2]);
    Ok(h * cum.iter().map(|g| (g - c).abs()).sum::<f64>())
}

/// Integral of f against the measure m: sum_i f_i w_i.
pub fn measure_integral(f: &GridFunction, m: &GridMeasure) -> Result<f64> {
    check_same_grid(f.grid, m.grid)?;
    Ok(f.values.iter().zip(&m.weights).map(|(a, b)| a * b).sum())
}

/// Atomic probability measure on the extended phase space (x, u, p).
#[derive(Clone, Debug)]
pub struct PhaseMeasure {
    atoms: Vec<(ContactState, f64)>,
}

impl PhaseMeasure {
    pub fn new(atoms: Vec<(ContactState, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(KamError::InvalidMeasure("no atoms".into()));
        }
        if let Some((_, w)) = atoms.iter().find(|(_, w)| !w.is_finite() || *w < 0.0) {
            return Err(KamError::InvalidMeasure(format!("atom weight {w}")));
        }
        let total: f64 = atoms.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(KamError::InvalidMeasure(format!(
                "atom weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[(ContactState, f64)] {
        &self.atoms
    }
}

/// Project a phase-space measure to the circle and deposit each atom's
/// weight on the nearest grid node (half-cell ties to the lower index).
/// Total mass is preserved exactly: the node weights are sums of the
/// original atom weights.
pub fn pushforward(eta: &PhaseMeasure, grid: PeriodicGrid) -> GridMeasure {
    let mut weights = vec![0.0; grid.n()];
    for (s, w) in &eta.atoms {
        weights[grid.nearest_node(s.x)] += w;
    }
    GridMeasure { grid, weights }
}
