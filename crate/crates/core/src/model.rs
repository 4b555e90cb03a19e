//! The contact Hamiltonian family H(x,u,p) = theta(u) + a(x) p^2/2 + V(x) on the
//! circle, its Lagrangian, the mean-field coupling F(x,m) = g(x) + beta (K ⋆ m)(x),
//! structural assumption checks, the frozen level a_m, and a priori solution bounds.

use std::sync::Arc;

use crate::error::{KamError, Result};
use crate::grid::{self, GridFunction, GridMeasure, PeriodicGrid};

/// Shared closure type for scalar ingredients supplied by callers.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A periodic function on the circle together with its analytic derivative.
#[derive(Clone)]
pub struct CircleFn {
    f: ScalarFn,
    df: ScalarFn,
}

impl CircleFn {
    pub fn new(f: ScalarFn, df: ScalarFn) -> Self {
        CircleFn { f, df }
    }

    pub fn constant(c: f64) -> Self {
        CircleFn {
            f: Arc::new(move |_| c),
            df: Arc::new(|_| 0.0),
        }
    }

    /// cos(2 pi x), the stock potential used throughout the examples.
    pub fn cosine() -> Self {
        CircleFn {
            f: Arc::new(|x| (2.0 * std::f64::consts::PI * x).cos()),
            df: Arc::new(|x| -2.0 * std::f64::consts::PI * (2.0 * std::f64::consts::PI * x).sin()),
        }
    }

    /// Evaluates at the wrapped representative in [0,1).
    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(grid::wrap(x))
    }

    pub fn deriv(&self, x: f64) -> f64 {
        (self.df)(grid::wrap(x))
    }
}

/// The u-dependence of the Hamiltonian, with declared derivative bounds
/// delta <= theta' <= lambda. The declared bounds are what assumption checks
/// test against; `Arctan` intentionally declares delta = 0 because its
/// derivative vanishes at infinity.
#[derive(Clone)]
pub enum Theta {
    Identity,
    Linear { intercept: f64, slope: f64 },
    Arctan,
    Custom { f: ScalarFn, df: ScalarFn, lo: f64, hi: f64 },
}

impl Theta {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Theta::Identity => u,
            Theta::Linear { intercept, slope } => intercept + slope * u,
            Theta::Arctan => u.atan(),
            Theta::Custom { f, .. } => f(u),
        }
    }

    pub fn deriv(&self, u: f64) -> f64 {
        match self {
            Theta::Identity => 1.0,
            Theta::Linear { slope, .. } => *slope,
            Theta::Arctan => 1.0 / (1.0 + u * u),
            Theta::Custom { df, .. } => df(u),
        }
    }

    /// Declared lower bound on theta'.
    pub fn delta(&self) -> f64 {
        match self {
            Theta::Identity => 1.0,
            Theta::Linear { slope, .. } => *slope,
            // inf over all of R is 0, so strict monotonicity fails by declaration
            Theta::Arctan => 0.0,
            Theta::Custom { lo, .. } => *lo,
        }
    }

    /// Declared upper bound on theta'.
    pub fn lambda(&self) -> f64 {
        match self {
            Theta::Identity => 1.0,
            Theta::Linear { slope, .. } => *slope,
            Theta::Arctan => 1.0,
            Theta::Custom { hi, .. } => *hi,
        }
    }

    /// Some((theta(0), slope)) when theta is exactly affine, which unlocks the
    /// closed-form inner solve in the semigroup steps.
    pub fn affine_parts(&self) -> Option<(f64, f64)> {
        match self {
            Theta::Identity => Some((0.0, 1.0)),
            Theta::Linear { intercept, slope } => Some((*intercept, *slope)),
            _ => None,
        }
    }
}

/// Smoothing kernel for the coupling convolution.
#[derive(Clone, Copy, Debug)]
pub enum Kernel {
    /// Gaussian of bandwidth eps wrapped around the circle.
    WrappedGaussian { eps: f64 },
}

impl Kernel {
    /// Number of image terms needed so the truncation error is far below 1e-15.
    fn image_range(eps: f64) -> i64 {
        (6.0 * eps).ceil() as i64 + 2
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Kernel::WrappedGaussian { eps } => {
                let y = centered(x);
                let norm = 1.0 / (eps * (2.0 * std::f64::consts::PI).sqrt());
                let mut s = 0.0;
                for j in -Self::image_range(eps)..=Self::image_range(eps) {
                    let z = y + j as f64;
                    s += (-z * z / (2.0 * eps * eps)).exp();
                }
                norm * s
            }
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match *self {
            Kernel::WrappedGaussian { eps } => {
                let y = centered(x);
                let norm = 1.0 / (eps * (2.0 * std::f64::consts::PI).sqrt());
                let mut s = 0.0;
                for j in -Self::image_range(eps)..=Self::image_range(eps) {
                    let z = y + j as f64;
                    s += -z / (eps * eps) * (-z * z / (2.0 * eps * eps)).exp();
                }
                norm * s
            }
        }
    }
}

/// Wraps to the centered fundamental domain [-1/2, 1/2).
fn centered(x: f64) -> f64 {
    let y = grid::wrap(x);
    if y >= 0.5 { y - 1.0 } else { y }
}

/// Mean-field coupling F(x,m) = g(x) + beta (K ⋆ m)(x). The bound constants
/// are computed once at construction by dense sampling.
#[derive(Clone)]
pub struct Coupling {
    pub base: CircleFn,
    pub strength: f64,
    pub kernel: Option<Kernel>,
    /// Bound on |F| + |dF/dx| uniformly over probability measures.
    pub f_infinity: f64,
    /// Lipschitz constant of m -> F(x,m) in the d_1 metric.
    pub lip_in_m: f64,
}

/// Sample count for the construction-time constant estimates.
const CONSTANT_SAMPLES: usize = 4096;

impl Coupling {
    pub fn new(base: CircleFn, strength: f64, kernel: Option<Kernel>) -> Self {
        let mut max_g = 0.0f64;
        let mut max_dg = 0.0f64;
        let mut max_k = 0.0f64;
        let mut max_dk = 0.0f64;
        for i in 0..CONSTANT_SAMPLES {
            let x = i as f64 / CONSTANT_SAMPLES as f64;
            max_g = max_g.max(base.eval(x).abs());
            max_dg = max_dg.max(base.deriv(x).abs());
            if let Some(k) = &kernel {
                max_k = max_k.max(k.eval(x).abs());
                max_dk = max_dk.max(k.deriv(x).abs());
            }
        }
        // |K ⋆ m| <= max K and |K' ⋆ m| <= max |K'| for any probability m;
        // the d_1 Lipschitz constant of K ⋆ m is max |K'|.
        let f_infinity = max_g + max_dg + strength.abs() * (max_k + max_dk);
        let lip_in_m = strength.abs() * max_dk;
        Coupling { base, strength, kernel, f_infinity, lip_in_m }
    }

    /// The uncoupled case F = 0.
    pub fn zero() -> Self {
        Coupling::new(CircleFn::constant(0.0), 0.0, None)
    }

    /// A measure-independent coupling F = g(x).
    pub fn fixed(base: CircleFn) -> Self {
        Coupling::new(base, 0.0, None)
    }

    pub fn eval(&self, x: f64, m: &GridMeasure) -> f64 {
        let mut v = self.base.eval(x);
        if let Some(k) = &self.kernel {
            let mut conv = 0.0;
            for (j, &w) in m.weights().iter().enumerate() {
                if w != 0.0 {
                    conv += w * k.eval(x - m.grid().node(j));
                }
            }
            v += self.strength * conv;
        }
        v
    }

    pub fn eval_deriv(&self, x: f64, m: &GridMeasure) -> f64 {
        let mut v = self.base.deriv(x);
        if let Some(k) = &self.kernel {
            let mut conv = 0.0;
            for (j, &w) in m.weights().iter().enumerate() {
                if w != 0.0 {
                    conv += w * k.deriv(x - m.grid().node(j));
                }
            }
            v += self.strength * conv;
        }
        v
    }

    /// Tabulates x -> F(x,m) at the nodes of `grid`.
    pub fn eval_on_grid(&self, grid: PeriodicGrid, m: &GridMeasure) -> GridFunction {
        let values = grid.nodes().iter().map(|&x| self.eval(x, m)).collect();
        GridFunction::new(grid, values).expect("coupling values are finite")
    }
}

/// The Hamiltonian H(x,u,p) = theta(u) + a(x) p^2/2 + V(x).
#[derive(Clone)]
pub struct ContactModel {
    pub theta: Theta,
    pub kinetic_coeff: CircleFn,
    pub potential: CircleFn,
    /// True for this family: H is even in p by construction.
    pub reversible: bool,
}

impl ContactModel {
    pub fn new(theta: Theta, kinetic_coeff: CircleFn, potential: CircleFn) -> Self {
        ContactModel { theta, kinetic_coeff, potential, reversible: true }
    }

    /// theta = id, a = 1, V = cos(2 pi x): the stock example.
    pub fn cosine() -> Self {
        ContactModel::new(Theta::Identity, CircleFn::constant(1.0), CircleFn::cosine())
    }

    pub fn eval_h(&self, x: f64, u: f64, p: f64) -> f64 {
        self.theta.eval(u) + 0.5 * self.kinetic_coeff.eval(x) * p * p + self.potential.eval(x)
    }

    /// (H_x, H_u, H_p), all analytic.
    pub fn eval_partials(&self, x: f64, u: f64, p: f64) -> (f64, f64, f64) {
        let h_x = 0.5 * self.kinetic_coeff.deriv(x) * p * p + self.potential.deriv(x);
        let h_u = self.theta.deriv(u);
        let h_p = self.kinetic_coeff.eval(x) * p;
        (h_x, h_u, h_p)
    }

    /// Legendre transform of the quadratic family:
    /// L(x,u,v) = v^2/(2 a(x)) - theta(u) - V(x).
    pub fn eval_l(&self, x: f64, u: f64, v: f64) -> f64 {
        0.5 * v * v / self.kinetic_coeff.eval(x) - self.theta.eval(u) - self.potential.eval(x)
    }
}

/// One named structural check with an optional witnessing sample.
#[derive(Clone, Debug)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub passed: bool,
    pub witness: Option<String>,
}

/// Outcome of `check_assumptions`: pass/fail per assumption plus the constants
/// estimated along the way.
#[derive(Clone, Debug)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
    pub a_min: f64,
    pub delta: f64,
    pub lambda: f64,
    pub f_infinity_est: f64,
    pub lip_in_m_est: f64,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Errors on the first failed check.
    pub fn ensure_ok(&self) -> Result<()> {
        match self.checks.iter().find(|c| !c.passed) {
            None => Ok(()),
            Some(c) => Err(KamError::AssumptionViolated {
                name: c.name,
                witness: c.witness.clone().unwrap_or_default(),
            }),
        }
    }
}

/// Deterministic generator for the sampling checks.
struct SplitMix64(u64);

impl SplitMix64 {
    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0,1).
    fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

const CHECK_GRID_N: usize = 256;

/// Verifies the structural assumptions by sampling: positive kinetic
/// coefficient, superlinearity, strict monotonicity in u, evenness in p, the
/// coupling bound, and the coupling's measure-Lipschitz property. Always
/// returns the full report; callers decide whether failures are fatal.
pub fn check_assumptions(
    model: &ContactModel,
    coupling: &Coupling,
    sample_budget: usize,
) -> Result<AssumptionReport> {
    if sample_budget == 0 {
        return Err(KamError::InvalidConfig("sample budget must be at least 1".into()));
    }
    let mut rng = SplitMix64(0x5eed_0f_c0ffee);
    let mut checks = Vec::new();
    let grid = PeriodicGrid::new(CHECK_GRID_N)?;

    // H1: a(x) bounded below by a positive constant.
    let mut a_min = f64::INFINITY;
    let mut a_argmin = 0.0;
    for x in grid.nodes() {
        let a = model.kinetic_coeff.eval(x);
        if a < a_min {
            a_min = a;
            a_argmin = x;
        }
    }
    checks.push(AssumptionCheck {
        name: "positive_definiteness",
        passed: a_min > 0.0,
        witness: (a_min <= 0.0).then(|| format!("a({a_argmin}) = {a_min}")),
    });

    // H2: quadratic growth in p gives superlinearity exactly when H1 holds.
    checks.push(AssumptionCheck {
        name: "superlinearity",
        passed: a_min > 0.0,
        witness: (a_min <= 0.0).then(|| format!("p^2 coefficient a({a_argmin})/2 = {}", 0.5 * a_min)),
    });

    // H3: declared bounds must give 0 < delta <= lambda < inf, and sampled
    // theta' must respect them on the working interval [-10 D_3, 10 D_3].
    let delta = model.theta.delta();
    let lambda = model.theta.lambda();
    let mut h3_pass = delta > 0.0 && lambda >= delta && lambda.is_finite();
    let mut h3_witness = (!h3_pass).then(|| format!("declared delta = {delta}, lambda = {lambda}"));
    if h3_pass {
        let bounds = compute_bounds(model, coupling, grid, 1.0);
        let reach = 10.0 * bounds.d3_sup.max(1.0);
        for _ in 0..sample_budget {
            let u = (2.0 * rng.next_f64() - 1.0) * reach;
            let d = model.theta.deriv(u);
            if !(delta - 1e-9..=lambda + 1e-9).contains(&d) || d <= 0.0 {
                h3_pass = false;
                h3_witness = Some(format!("theta'({u}) = {d} outside [{delta}, {lambda}]"));
                break;
            }
        }
    }
    checks.push(AssumptionCheck { name: "strict_monotonicity", passed: h3_pass, witness: h3_witness });

    // H4: evenness of H in p and the declared flag.
    let mut h4_pass = model.reversible;
    let mut h4_witness = (!h4_pass).then(|| "reversible flag is false".to_string());
    if h4_pass {
        for _ in 0..sample_budget {
            let x = rng.next_f64();
            let u = 4.0 * rng.next_f64() - 2.0;
            let p = 8.0 * rng.next_f64() - 4.0;
            let diff = model.eval_h(x, u, p) - model.eval_h(x, u, -p);
            if diff != 0.0 {
                h4_pass = false;
                h4_witness = Some(format!("H({x},{u},{p}) - H({x},{u},{}) = {diff}", -p));
                break;
            }
        }
    }
    checks.push(AssumptionCheck { name: "reversibility", passed: h4_pass, witness: h4_witness });

    // F1/F2: sample probability measures and measure pairs.
    let samples = sample_measures(grid, sample_budget, &mut rng);
    let mut f_est = 0.0f64;
    let mut f1_witness: Option<String> = None;
    for m in &samples {
        for x in grid.nodes() {
            let tot = coupling.eval(x, m).abs() + coupling.eval_deriv(x, m).abs();
            if tot > f_est {
                f_est = tot;
                if tot > coupling.f_infinity + 1e-9 {
                    f1_witness = Some(format!("|F| + |F'| = {tot} at x = {x}"));
                }
            }
        }
    }
    checks.push(AssumptionCheck {
        name: "coupling_bound",
        passed: f1_witness.is_none(),
        witness: f1_witness,
    });

    let mut lip_est = 0.0f64;
    let mut f2_witness: Option<String> = None;
    for pair in samples.windows(2) {
        let d = grid::d1_distance(&pair[0], &pair[1])?;
        if d <= 0.0 {
            continue;
        }
        let mut gap = 0.0f64;
        for x in grid.nodes() {
            gap = gap.max((coupling.eval(x, &pair[0]) - coupling.eval(x, &pair[1])).abs());
        }
        lip_est = lip_est.max(gap / d);
        if gap > coupling.lip_in_m * d + 1e-12 {
            f2_witness = Some(format!("gap {gap} exceeds lip_in_m * d1 = {}", coupling.lip_in_m * d));
        }
    }
    checks.push(AssumptionCheck {
        name: "coupling_lipschitz",
        passed: f2_witness.is_none(),
        witness: f2_witness,
    });

    Ok(AssumptionReport {
        checks,
        a_min,
        delta,
        lambda,
        f_infinity_est: f_est,
        lip_in_m_est: lip_est,
    })
}

/// Uniform, a few Diracs, and random normalized weight vectors.
fn sample_measures(grid: PeriodicGrid, budget: usize, rng: &mut SplitMix64) -> Vec<GridMeasure> {
    let n = grid.n();
    let mut out = vec![GridMeasure::uniform(grid)];
    let diracs = budget.min(3);
    for _ in 0..diracs {
        let i = (rng.next_f64() * n as f64) as usize % n;
        out.push(GridMeasure::dirac(grid, i));
    }
    for _ in 0..budget.min(8) {
        let mut w: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
        let s: f64 = w.iter().sum();
        for v in &mut w {
            *v /= s;
        }
        // renormalize exactly so the mass invariant holds to machine precision
        let s2: f64 = w.iter().sum();
        if let Some(first) = w.first_mut() {
            *first += 1.0 - s2;
        }
        out.push(GridMeasure::new(grid, w).expect("weights are a probability vector"));
    }
    out
}

/// A priori constants for the frozen-level and contact solutions.
#[derive(Clone, Copy, Debug)]
pub struct Bounds {
    /// Bound on the frozen level: |a_m| <= d1_bound for every measure.
    pub d1_bound: f64,
    /// Equi-Lipschitz constant of the frozen-level solutions.
    pub d2_lip: f64,
    /// Sup-norm bound on the fixed points of the backward semigroup.
    pub d3_sup: f64,
    /// Action bound E_t at the horizon passed to `compute_bounds`.
    pub e_t: f64,
    /// Classical Lipschitz diagnostic B + c; the frozen problem has critical
    /// value 0 by the choice of level, so this collapses to the same sup as
    /// d2_lip. Kept separate because it is conceptually a different constant.
    pub b_const: f64,
}

/// Circle diameter in the geodesic metric.
pub const CIRCLE_DIAM: f64 = 0.5;

/// Evaluates the a priori bound formulas by maximizing over the grid and the
/// admissible level interval [-D_1, D_1]. Returns infinities when the declared
/// monotonicity rate is not positive; downstream users treat that as an
/// assumption failure.
pub fn compute_bounds(
    model: &ContactModel,
    coupling: &Coupling,
    grid: PeriodicGrid,
    horizon_t0: f64,
) -> Bounds {
    let f_inf = coupling.f_infinity;
    let delta = model.theta.delta();
    let theta0 = model.theta.eval(0.0);

    let mut max_abs = 0.0f64;
    let mut min_a = f64::INFINITY;
    let mut min_v = f64::INFINITY;
    for x in grid.nodes() {
        max_abs = max_abs.max((theta0 + model.potential.eval(x)).abs());
        min_a = min_a.min(model.kinetic_coeff.eval(x));
        min_v = min_v.min(model.potential.eval(x));
    }

    let d1_bound = if delta > 0.0 { (max_abs + f_inf) / delta } else { f64::INFINITY };
    // sup of -theta(u) over |u| <= D_1 is -theta(-D_1) since theta increases
    let theta_low = model.theta.eval(-d1_bound);
    let d2_lip = 0.5 / min_a - theta_low - min_v + f_inf;
    let e_tilde = 0.5 * (CIRCLE_DIAM / horizon_t0).powi(2) / min_a - theta_low - min_v + f_inf;
    let e_t = horizon_t0 * e_tilde;
    let d3_sup = 2.0 * d1_bound + e_t + 3.0 * d2_lip * CIRCLE_DIAM;

    Bounds { d1_bound, d2_lip, d3_sup, e_t, b_const: d2_lip }
}

/// Solves theta(a) + max_i (V(x_i) - F(x_i,m)) = 0 for the frozen level a_m by
/// bisection; the left side is strictly increasing in a with slope at least
/// delta, so the sign-change bracket from the a priori bound is guaranteed
/// when the assumptions hold.
pub fn solve_a_m(
    model: &ContactModel,
    coupling: &Coupling,
    m: &GridMeasure,
    tol: f64,
) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(KamError::InvalidConfig(format!("solve_a_m tol must be positive, got {tol}")));
    }
    let f_on_grid = coupling.eval_on_grid(m.grid(), m);
    let mut peak = f64::NEG_INFINITY;
    for (i, &x) in m.grid().nodes().iter().enumerate() {
        peak = peak.max(model.potential.eval(x) - f_on_grid.values()[i]);
    }
    let phi = |a: f64| model.theta.eval(a) + peak;

    let bounds = compute_bounds(model, coupling, m.grid(), 1.0);
    if !bounds.d1_bound.is_finite() {
        return Err(KamError::AssumptionViolated {
            name: "strict_monotonicity",
            witness: format!("declared delta = {} gives no level bracket", model.theta.delta()),
        });
    }
    let (lo, hi) = (-bounds.d1_bound - 1.0, bounds.d1_bound + 1.0);
    if phi(lo) > 0.0 || phi(hi) < 0.0 {
        return Err(KamError::BracketFailed { lo, hi });
    }
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let val = phi(mid);
        if val.abs() <= tol {
            return Ok(mid);
        }
        if val > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(KamError::BracketFailed { lo, hi })
}
