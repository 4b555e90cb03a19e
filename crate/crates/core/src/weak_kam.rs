//! Backward and forward contact Lax-Oleinik semigroups discretized by an
//! implicit semi-Lagrangian scheme, their fixed points u_- and u_+, classical
//! frozen-level solves, finite-horizon actions, and critical values.
//!
//! Each backward step solves, at every node,
//!   w_i = min_v { interp(u, x_i - dt v) + dt (L(x_i, w_i, v) + F(x_i, m)) }.
//! The minimization over v and the scalar solve in w_i separate because the
//! u-dependence of L does not involve v. With piecewise-linear interpolation
//! the reduced objective is a parabola on each grid cell the foot can land in,
//! so the v-minimum is taken in closed form piece by piece. That keeps the
//! step exactly monotone in u and exactly contracting, which the sampled
//! velocity scan with local refinement (kept here as a reference engine)
//! cannot guarantee at machine precision.

use crate::error::{KamError, Result};
use crate::grid::{GridFunction, GridMeasure, PeriodicGrid};
use crate::model::{compute_bounds, solve_a_m, ContactModel, Coupling, Theta};

/// Discretization parameters for the semigroup iteration.
#[derive(Clone, Copy, Debug)]
pub struct SemigroupConfig {
    pub dt: f64,
    /// Velocity search radius; minimizers are a priori bounded by the
    /// Lipschitz range, so this only needs to exceed (D_2 + 1) max a.
    pub v_max: f64,
    /// Sample count for the reference velocity scan; odd so v = 0 is sampled.
    pub n_v: usize,
    pub tol_conv: f64,
    pub max_steps: usize,
    pub inner_tol: f64,
}

impl SemigroupConfig {
    /// Defaults tied to the grid: dt = 0.4 h / v_max keeps interpolation feet
    /// within one cell, and the step cap is ten times the contraction-rate
    /// estimate of the steps needed to reach tol_conv.
    pub fn for_grid(grid: PeriodicGrid, model: &ContactModel, coupling: &Coupling) -> Self {
        let bounds = compute_bounds(model, coupling, grid, 1.0);
        let mut a_max = 0.0f64;
        for x in grid.nodes() {
            a_max = a_max.max(model.kinetic_coeff.eval(x));
        }
        let v_max = (bounds.d2_lip + 1.0) * a_max;
        let dt = 0.4 * grid.h() / v_max;
        let tol_conv: f64 = 1e-9;
        let delta = model.theta.delta().max(f64::MIN_POSITIVE);
        let max_steps = 10.0 * ((1.0 / tol_conv).ln() / (delta * dt)).ceil();
        SemigroupConfig {
            dt,
            v_max,
            n_v: 33,
            tol_conv,
            max_steps: max_steps as usize,
            inner_tol: 1e-14,
        }
    }

    pub fn validate(&self, model: &ContactModel) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(KamError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        let lambda = model.theta.lambda();
        if !(self.dt * lambda < 1.0) {
            return Err(KamError::InvalidConfig(format!(
                "dt * lambda = {} must be below 1 for the implicit solves",
                self.dt * lambda
            )));
        }
        if model.theta.delta() <= 0.0 {
            return Err(KamError::InvalidConfig(
                "theta must be strictly increasing (declared lower bound positive)".into(),
            ));
        }
        if !(self.v_max > 0.0) {
            return Err(KamError::InvalidConfig(format!("v_max must be positive, got {}", self.v_max)));
        }
        if self.n_v < 16 || self.n_v % 2 == 0 {
            return Err(KamError::InvalidConfig(format!(
                "n_v must be odd and at least 16, got {}",
                self.n_v
            )));
        }
        if !(self.tol_conv > 0.0) || !(self.inner_tol > 0.0) || self.max_steps == 0 {
            return Err(KamError::InvalidConfig("tolerances and step cap must be positive".into()));
        }
        Ok(())
    }
}

/// Converged backward fixed point with its discrete equation residual.
#[derive(Clone, Debug)]
pub struct WeakKamSolution {
    pub u_minus: GridFunction,
    pub residual: f64,
    pub steps: usize,
    pub converged: bool,
}

/// Node samples of the model and coupling reused across iteration steps.
struct Tables {
    a: Vec<f64>,
    pot: Vec<f64>,
    f: Vec<f64>,
    h: f64,
}

impl Tables {
    fn build(model: &ContactModel, coupling: &Coupling, m: &GridMeasure, grid: PeriodicGrid) -> Self {
        Tables {
            a: grid.nodes().iter().map(|&x| model.kinetic_coeff.eval(x)).collect(),
            pot: grid.nodes().iter().map(|&x| model.potential.eval(x)).collect(),
            f: grid.nodes().iter().map(|&x| coupling.eval(x, m)).collect(),
            h: grid.h(),
        }
    }
}

fn at(vals: &[f64], i: isize) -> f64 {
    let n = vals.len() as isize;
    vals[i.rem_euclid(n) as usize]
}

/// Exact minimum over v in [-v_max, v_max] of
///   interp(vals, x_i - dt v) + dt v^2 / (2 a_i).
/// The objective is a parabola on each cell the foot x_i - dt v crosses, so
/// the minimum is the best of the per-piece clipped vertex values.
fn reduced_min(vals: &[f64], i: usize, dt: f64, a_i: f64, v_max: f64, h: f64) -> f64 {
    let i = i as isize;
    // v = 0 candidate; also reached by the j = 0 pieces below
    let mut best = at(vals, i);

    // v > 0: foot moves left through cells [x_{i-j-1}, x_{i-j}]
    let mut j = 0;
    while (j as f64) * h < dt * v_max {
        let v_lo = (j as f64) * h / dt;
        let v_hi = (((j + 1) as f64) * h / dt).min(v_max);
        let hi = at(vals, i - j as isize);
        let lo = at(vals, i - j as isize - 1);
        let s = (hi - lo) / h;
        let base = hi + s * (j as f64) * h;
        let v = (a_i * s).clamp(v_lo, v_hi);
        best = best.min(base - s * dt * v + 0.5 * dt * v * v / a_i);
        j += 1;
    }

    // v < 0 parametrized by w = -v > 0: foot moves right through
    // cells [x_{i+j}, x_{i+j+1}]
    let mut j = 0;
    while (j as f64) * h < dt * v_max {
        let w_lo = (j as f64) * h / dt;
        let w_hi = (((j + 1) as f64) * h / dt).min(v_max);
        let lo = at(vals, i + j as isize);
        let hi = at(vals, i + j as isize + 1);
        let s = (hi - lo) / h;
        let base = lo - s * (j as f64) * h;
        let w = (-a_i * s).clamp(w_lo, w_hi);
        best = best.min(base + s * dt * w + 0.5 * dt * w * w / a_i);
        j += 1;
    }

    best
}

/// Solves w + dt theta(w) = rhs (the implicit backward node equation).
fn solve_node_backward(theta: &Theta, dt: f64, rhs: f64, inner_tol: f64) -> Result<f64> {
    if let Some((t0, slope)) = theta.affine_parts() {
        return Ok((rhs - dt * t0) / (1.0 + dt * slope));
    }
    let mut w = rhs;
    for _ in 0..100 {
        let next = rhs - dt * theta.eval(w);
        if (next - w).abs() <= inner_tol {
            return Ok(next);
        }
        w = next;
    }
    Err(KamError::InnerSolveDiverged { iters: 100 })
}

/// Solves w - dt theta(w) = rhs (the implicit forward node equation).
fn solve_node_forward(theta: &Theta, dt: f64, rhs: f64, inner_tol: f64) -> Result<f64> {
    if let Some((t0, slope)) = theta.affine_parts() {
        return Ok((rhs + dt * t0) / (1.0 - dt * slope));
    }
    let mut w = rhs;
    for _ in 0..100 {
        let next = rhs + dt * theta.eval(w);
        if (next - w).abs() <= inner_tol {
            return Ok(next);
        }
        w = next;
    }
    Err(KamError::InnerSolveDiverged { iters: 100 })
}

fn backward_step_into(
    vals: &[f64],
    out: &mut [f64],
    tables: &Tables,
    theta: &Theta,
    cfg: &SemigroupConfig,
) -> Result<()> {
    for i in 0..vals.len() {
        let m_i = reduced_min(vals, i, cfg.dt, tables.a[i], cfg.v_max, tables.h);
        let rhs = m_i + cfg.dt * (tables.f[i] - tables.pot[i]);
        out[i] = solve_node_backward(theta, cfg.dt, rhs, cfg.inner_tol)?;
    }
    Ok(())
}

fn forward_step_into(
    vals: &[f64],
    neg: &mut [f64],
    out: &mut [f64],
    tables: &Tables,
    theta: &Theta,
    cfg: &SemigroupConfig,
) -> Result<()> {
    for (n, &v) in neg.iter_mut().zip(vals) {
        *n = -v;
    }
    for i in 0..vals.len() {
        // max_v [interp(u, x_i + dt v) - dt v^2/(2a)] = -reduced_min(-u)
        let m_i = -reduced_min(neg, i, cfg.dt, tables.a[i], cfg.v_max, tables.h);
        let rhs = m_i + cfg.dt * (tables.pot[i] - tables.f[i]);
        out[i] = solve_node_forward(theta, cfg.dt, rhs, cfg.inner_tol)?;
    }
    Ok(())
}

fn check_same_grid(a: PeriodicGrid, b: PeriodicGrid) -> Result<()> {
    if a.n() != b.n() {
        return Err(KamError::GridMismatch(a.n(), b.n()));
    }
    Ok(())
}

/// One implicit backward semigroup step.
pub fn backward_step(
    u: &GridFunction,
    model: &ContactModel,
    coupling: &Coupling,
    m: &GridMeasure,
    cfg: &SemigroupConfig,
) -> Result<GridFunction> {
    cfg.validate(model)?;
    check_same_grid(u.grid(), m.grid())?;
    let tables = Tables::build(model, coupling, m, u.grid());
    let mut out = vec![0.0; u.values().len()];
    backward_step_into(u.values(), &mut out, &tables, &model.theta, cfg)?;
    GridFunction::new(u.grid(), out)
}

/// One implicit forward semigroup step (the sup mirror of `backward_step`).
pub fn forward_step(
    u: &GridFunction,
    model: &ContactModel,
    coupling: &Coupling,
    m: &GridMeasure,
    cfg: &SemigroupConfig,
) -> Result<GridFunction> {
    cfg.validate(model)?;
    check_same_grid(u.grid(), m.grid())?;
    let tables = Tables::build(model, coupling, m, u.grid());
    let mut neg = vec![0.0; u.values().len()];
    let mut out = vec![0.0; u.values().len()];
    forward_step_into(u.values(), &mut neg, &mut out, &tables, &model.theta, cfg)?;
    GridFunction::new(u.grid(), out)
}

/// Reference backward step: uniform velocity scan with one golden-section
/// refinement around the discrete argmin (split at the v = 0 kink when the
/// bracket straddles it). Used to cross-check the closed-form engine.
pub fn backward_step_sampled(
    u: &GridFunction,
    model: &ContactModel,
    coupling: &Coupling,
    m: &GridMeasure,
    cfg: &SemigroupConfig,
) -> Result<GridFunction> {
    cfg.validate(model)?;
    check_same_grid(u.grid(), m.grid())?;
    let grid = u.grid();
    let tables = Tables::build(model, coupling, m, grid);
    let mut out = vec![0.0; u.values().len()];
    for i in 0..u.values().len() {
        let x_i = grid.node(i);
        let obj = |v: f64| u.interpolate(x_i - cfg.dt * v) + 0.5 * cfg.dt * v * v / tables.a[i];
        let mut best_v = 0.0;
        let mut best = obj(0.0);
        let step = 2.0 * cfg.v_max / (cfg.n_v - 1) as f64;
        for k in 0..cfg.n_v {
            let v = -cfg.v_max + step * k as f64;
            let val = obj(v);
            if val < best {
                best = val;
                best_v = v;
            }
        }
        let lo = (best_v - step).max(-cfg.v_max);
        let hi = (best_v + step).min(cfg.v_max);
        let mut refined = best;
        if lo < 0.0 && 0.0 < hi {
            refined = refined.min(golden_min(&obj, lo, 0.0)).min(golden_min(&obj, 0.0, hi));
        } else {
            refined = refined.min(golden_min(&obj, lo, hi));
        }
        let rhs = refined + cfg.dt * (tables.f[i] - tables.pot[i]);
        out[i] = solve_node_backward(&model.theta, cfg.dt, rhs, cfg.inner_tol)?;
    }
    GridFunction::new(grid, out)
}

fn golden_min(obj: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = obj(c);
    let mut fd = obj(d);
    for _ in 0..90 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = obj(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = obj(d);
        }
    }
    fc.min(fd).min(obj(0.5 * (lo + hi)))
}

/// Discrete equation residual max_i |H(x_i, u_i, Du_i) - F_i| with a centered
/// gradient at smooth nodes and the better one-sided gradient at kinks
/// (detected by a sqrt(h) jump between the one-sided differences).
fn residual_from_tables(vals: &[f64], tables: &Tables, model: &ContactModel) -> f64 {
    let n = vals.len();
    let h = tables.h;
    let kink_tol = h.sqrt();
    let mut worst = 0.0f64;
    for i in 0..n {
        let d_plus = (at(vals, i as isize + 1) - vals[i]) / h;
        let d_minus = (vals[i] - at(vals, i as isize - 1)) / h;
        let ham = |p: f64| {
            model.theta.eval(vals[i]) + 0.5 * tables.a[i] * p * p + tables.pot[i] - tables.f[i]
        };
        let res = if (d_plus - d_minus).abs() <= kink_tol {
            ham(0.5 * (d_plus + d_minus)).abs()
        } else {
            ham(d_plus).abs().min(ham(d_minus).abs())
        };
        worst = worst.max(res);
    }
    worst
}

/// Iterates the backward step from `seed` until the sup-norm increment drops
/// below tol_conv delta dt / (1 + delta dt), which bounds the distance to the
/// limit by tol_conv through the geometric contraction; two runs from any
/// seeds therefore land within 2 tol_conv of each other. Returns the last
/// iterate with converged = false when the cap is hit.
pub fn solve_u_minus(
    model: &ContactModel,
    coupling: &Coupling,
    m: &GridMeasure,
    seed: &GridFunction,
    cfg: &SemigroupConfig,
) -> Result<WeakKamSolution> {
    cfg.validate(model)?;
    check_same_grid(seed.grid(), m.grid())?;
    let tables = Tables::build(model, coupling, m, seed.grid());
    let delta = model.theta.delta();
    let mut u = seed.values().to_vec();
    let mut next = vec![0.0; u.len()];
    let mut steps = 0;
    let mut converged = false;
    while steps < cfg.max_steps {
        backward_step_into(&u, &mut next, &tables, &model.theta, cfg)?;
        steps += 1;
        let mut inc = 0.0f64;
        for (a, b) in u.iter().zip(&next) {
            inc = inc.max((a - b).abs());
        }
        std::mem::swap(&mut u, &mut next);
        if inc <= cfg.tol_conv * delta * cfg.dt / (1.0 + delta * cfg.dt) {
            converged = true;
            break;
        }
    }
    let residual = residual_from_tables(&u, &tables, model);
    Ok(WeakKamSolution {
        u_minus: GridFunction::new(seed.grid(), u)?,
        residual,
        steps,
        converged,
    })
}

/// Forward limit started from a converged u_-. The discrete forward fixed
/// point repels plain iteration, so each step is clamped by the previous
/// iterate: the sequence decreases monotonically, stays above the discrete
/// forward solution, and pins u_+ = u_- exactly on the contact set.
pub fn solve_u_plus(
    u_minus: &GridFunction,
    model: &ContactModel,
    coupling: &Coupling,
    m: &GridMeasure,
    cfg: &SemigroupConfig,
) -> Result<GridFunction> {
    cfg.validate(model)?;
    check_same_grid(u_minus.grid(), m.grid())?;
    let tables = Tables::build(model, coupling, m, u_minus.grid());
    let delta = model.theta.delta();
    let mut u = u_minus.values().to_vec();
    let mut neg = vec![0.0; u.len()];
    let mut next = vec![0.0; u.len()];
    let mut steps = 0;
    while steps < cfg.max_steps {
        forward_step_into(&u, &mut neg, &mut next, &tables, &model.theta, cfg)?;
        steps += 1;
        let mut inc = 0.0f64;
        for (a, b) in u.iter_mut().zip(&next) {
            let clamped = b.min(*a);
            inc = inc.max(*a - clamped);
            *a = clamped;
        }
        if inc <= cfg.tol_conv * delta * cfg.dt / (1.0 + delta * cfg.dt) {
            break;
        }
    }
    GridFunction::new(u_minus.grid(), u)
}

/// Explicit classical Lax-Oleinik step for the frozen Lagrangian
/// l = L(x, a, v) + F(x, m), optionally shifted by a constant c per unit time.
fn frozen_step_into(
    vals: &[f64],
    out: &mut [f64],
    tables: &Tables,
    model: &ContactModel,
    a_level: f64,
    c_shift: f64,
    cfg: &SemigroupConfig,
) {
    let theta_a = model.theta.eval(a_level);
    for i in 0..vals.len() {
        let m_i = reduced_min(vals, i, cfg.dt, tables.a[i], cfg.v_max, tables.h);
        out[i] = m_i + cfg.dt * (tables.f[i] - tables.pot[i] - theta_a + c_shift);
    }
}

/// Weak KAM solution of the classical frozen problem
/// H(x, a, Dw) - F(x, m) = c(a, m): iterates the critically shifted explicit
/// step to a fixed point.
pub fn solve_frozen(
    model: &ContactModel,
    a_level: f64,
    coupling: &Coupling,
    m: &GridMeasure,
    cfg: &SemigroupConfig,
) -> Result<GridFunction> {
    cfg.validate(model)?;
    let grid = m.grid();
    let tables = Tables::build(model, coupling, m, grid);
    let c = critical_value_formula(model, a_level, &tables);
    let mut u = vec![0.0; grid.n()];
    let mut next = vec![0.0; grid.n()];
    // nonexpansive iteration: run to a fixed increment tolerance
    for _ in 0..cfg.max_steps {
        frozen_step_into(&u, &mut next, &tables, model, a_level, c, cfg);
        let mut inc = 0.0f64;
        for (a, b) in u.iter().zip(&next) {
            inc = inc.max((a - b).abs());
        }
        std::mem::swap(&mut u, &mut next);
        if inc <= 1e-13 {
            break;
        }
    }
    // normalize the additive constant to min 0
    let min = u.iter().cloned().fold(f64::INFINITY, f64::min);
    for v in &mut u {
        *v -= min;
    }
    GridFunction::new(grid, u)
}

fn critical_value_formula(model: &ContactModel, a_level: f64, tables: &Tables) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    for i in 0..tables.pot.len() {
        peak = peak.max(model.theta.eval(a_level) + tables.pot[i] - tables.f[i]);
    }
    peak
}

/// Horizon used by the long-time cross-check of `critical_value`.
const CRITICAL_CHECK_T: f64 = 5.0;
const CRITICAL_CHECK_TOL: f64 = 1e-8;

/// Critical value of the frozen Hamiltonian H(x, a, p) - F(x, m). For the
/// reversible family it is max_x (H(x, a, 0) - F(x, m)); the formula is
/// cross-checked against the long-time average -(T_{2t} - T_t) phi / t of the
/// classical semigroup and an error is raised if the two disagree.
pub fn critical_value(
    model: &ContactModel,
    a_level: f64,
    coupling: &Coupling,
    m: &GridMeasure,
) -> Result<f64> {
    let grid = m.grid();
    let cfg = SemigroupConfig::for_grid(grid, model, coupling);
    cfg.validate(model)?;
    let tables = Tables::build(model, coupling, m, grid);
    let formula = critical_value_formula(model, a_level, &tables);

    let steps_per_leg = (CRITICAL_CHECK_T / cfg.dt).ceil() as usize;
    let actual_t = steps_per_leg as f64 * cfg.dt;
    let mut u = vec![0.0; grid.n()];
    let mut next = vec![0.0; grid.n()];
    for _ in 0..steps_per_leg {
        frozen_step_into(&u, &mut next, &tables, model, a_level, 0.0, &cfg);
        std::mem::swap(&mut u, &mut next);
    }
    let first_leg = u.clone();
    for _ in 0..steps_per_leg {
        frozen_step_into(&u, &mut next, &tables, model, a_level, 0.0, &cfg);
        std::mem::swap(&mut u, &mut next);
    }
    let mut worst = f64::NEG_INFINITY;
    let mut estimate = 0.0;
    for i in 0..grid.n() {
        let est = -(u[i] - first_leg[i]) / actual_t;
        if (est - formula).abs() > worst {
            worst = (est - formula).abs();
            estimate = est;
        }
    }
    if worst > CRITICAL_CHECK_TOL {
        return Err(KamError::CrossCheckFailed { formula, estimate });
    }
    Ok(formula)
}

/// Minimal action over piecewise-linear grid paths from node x to node y in
/// time t with the given number of stages, for the frozen Lagrangian
/// l = L(., a_m, .) + F(., m). Leg costs use the trapezoid rule in the
/// endpoints, which is what keeps the discrete action above the exact lower
/// bound w(y) - w(x).
pub fn finite_action(
    model: &ContactModel,
    coupling: &Coupling,
    m: &GridMeasure,
    x: usize,
    y: usize,
    t: f64,
    steps: usize,
) -> Result<f64> {
    if !(t > 0.0) || steps == 0 {
        return Err(KamError::InvalidConfig(format!(
            "finite_action needs t > 0 and steps > 0, got t = {t}, steps = {steps}"
        )));
    }
    let grid = m.grid();
    let n = grid.n();
    if x >= n || y >= n {
        return Err(KamError::InvalidConfig(format!(
            "node indices ({x}, {y}) out of range for n = {n}"
        )));
    }
    let a_m = solve_a_m(model, coupling, m, 1e-12)?;
    let tables = Tables::build(model, coupling, m, grid);
    let theta_a = model.theta.eval(a_m);
    let tau = t / steps as f64;

    // per-node half weights of the trapezoid rule
    let q: Vec<f64> = (0..n)
        .map(|i| 0.5 * (tables.f[i] - tables.pot[i] - theta_a))
        .collect();
    let inv_a: Vec<f64> = tables.a.iter().map(|&a| 1.0 / a).collect();

    let mut dist = vec![f64::INFINITY; n];
    dist[x] = 0.0;
    let mut next = vec![0.0; n];
    for _ in 0..steps {
        for (k, slot) in next.iter_mut().enumerate() {
            let mut best = f64::INFINITY;
            for j in 0..n {
                if dist[j].is_finite() {
                    // minimal-winding displacement; extra winding only adds
                    // kinetic cost, so it never helps the infimum
                    let mut d = grid.node(k) - grid.node(j);
                    if d >= 0.5 {
                        d -= 1.0;
                    } else if d < -0.5 {
                        d += 1.0;
                    }
                    let v = d / tau;
                    let kinetic = 0.25 * v * v * (inv_a[j] + inv_a[k]);
                    let cost = tau * (kinetic + q[j] + q[k]);
                    best = best.min(dist[j] + cost);
                }
            }
            *slot = best;
        }
        std::mem::swap(&mut dist, &mut next);
    }
    Ok(dist[y])
}
