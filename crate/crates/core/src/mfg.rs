//! Mean-field equilibrium by damped fixed-point iteration of the best-response
//! map: solve the value function for the current measure, concentrate mass on
//! its contact set, blend, repeat. Non-convergence is a reported outcome with
//! a full trace, not an error. Also houses the two equation residuals used to
//! verify a candidate pair (u, m).

use crate::error::{KamError, Result};
use crate::grid::{self, GridFunction, GridMeasure};
use crate::mather::{self, KSet};
use crate::model::{ContactModel, Coupling};
use crate::weak_kam::{solve_u_minus, SemigroupConfig, WeakKamSolution};

/// How mass is spread over the contact set in the best response.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    Uniform,
    /// Weight proportional to 1 / max(level residual, 1e-15).
    ResidualWeighted,
}

/// Step-size rule for blending successive measures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Damping {
    Fixed(f64),
    /// alpha_k = 1/(k+1), which averages all best responses seen so far.
    Averaging,
}

#[derive(Clone, Debug)]
pub struct EquilibriumConfig {
    pub selection: Selection,
    pub damping: Damping,
    /// Stopping tolerance on the successive-iterate transport distance.
    pub tol_m: f64,
    pub max_outer: usize,
    /// Acceptable mass outside the final contact set.
    pub tol_mass: f64,
    pub semigroup: SemigroupConfig,
    /// Overrides for the contact-set tolerances; grid-scaled defaults apply
    /// when unset.
    pub kset_tol_h: Option<f64>,
    pub kset_tol_g: Option<f64>,
}

impl EquilibriumConfig {
    pub fn for_grid(
        grid: crate::grid::PeriodicGrid,
        model: &ContactModel,
        coupling: &Coupling,
    ) -> Self {
        EquilibriumConfig {
            selection: Selection::Uniform,
            damping: Damping::Averaging,
            tol_m: (grid.h() / 10.0).max(1e-6),
            max_outer: 200,
            tol_mass: 1e-3,
            semigroup: SemigroupConfig::for_grid(grid, model, coupling),
            kset_tol_h: None,
            kset_tol_g: None,
        }
    }

    pub fn validate(&self, model: &ContactModel) -> Result<()> {
        if let Damping::Fixed(a) = self.damping {
            if !(a > 0.0 && a <= 1.0) {
                return Err(KamError::InvalidConfig(format!(
                    "fixed damping must lie in (0, 1], got {a}"
                )));
            }
        }
        if !(self.tol_m > 0.0) {
            return Err(KamError::InvalidConfig(format!("tol_m must be positive, got {}", self.tol_m)));
        }
        if !(self.tol_mass >= 0.0) {
            return Err(KamError::InvalidConfig(format!(
                "tol_mass must be nonnegative, got {}",
                self.tol_mass
            )));
        }
        if self.max_outer == 0 {
            return Err(KamError::InvalidConfig("max_outer must be at least 1".into()));
        }
        self.semigroup.validate(model)
    }
}

/// One outer-iteration record: (index, d1 gap, contact-set size).
#[derive(Clone, Copy, Debug)]
pub struct TraceEntry {
    pub iteration: usize,
    pub d1_gap: f64,
    pub support_size: usize,
}

#[derive(Clone, Debug)]
pub struct EquilibriumResult {
    pub u: GridFunction,
    pub m: GridMeasure,
    pub hj_residual: f64,
    pub continuity_residual: f64,
    /// Transport distance between the last two measure iterates.
    pub d1_gap: f64,
    /// Mass of the final measure outside the final contact set.
    pub support_leak: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

fn kset_tols(
    cfg: &EquilibriumConfig,
    grid: crate::grid::PeriodicGrid,
    model: &ContactModel,
    coupling: &Coupling,
) -> (f64, f64) {
    (
        cfg.kset_tol_h.unwrap_or_else(|| mather::default_tol_h(grid, model, coupling)),
        cfg.kset_tol_g.unwrap_or_else(|| mather::default_tol_g(grid)),
    )
}

fn selection_weights(kset: &KSet, selection: Selection) -> Vec<f64> {
    let k = kset.len();
    let mut w = match selection {
        Selection::Uniform => vec![1.0 / k as f64; k],
        Selection::ResidualWeighted => {
            let raw: Vec<f64> = kset.h_residuals.iter().map(|&r| 1.0 / r.max(1e-15)).collect();
            let sum: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / sum).collect()
        }
    };
    // compensate rounding so the mass invariant holds exactly
    let sum: f64 = w.iter().sum();
    w[0] += 1.0 - sum;
    w
}

fn best_response_seeded(
    m: &GridMeasure,
    model: &ContactModel,
    coupling: &Coupling,
    cfg: &EquilibriumConfig,
    seed: Option<&GridFunction>,
) -> Result<(GridMeasure, WeakKamSolution, KSet)> {
    let zero;
    let seed = match seed {
        Some(s) => s,
        None => {
            zero = GridFunction::constant(m.grid(), 0.0);
            &zero
        }
    };
    let sol = solve_u_minus(model, coupling, m, seed, &cfg.semigroup)?;
    if !sol.converged {
        return Err(KamError::InnerSolveDiverged { iters: sol.steps });
    }
    let (tol_h, tol_g) = kset_tols(cfg, m.grid(), model, coupling);
    let kset = mather::extract_kset(&sol.u_minus, model, coupling, m, tol_h, tol_g)?;
    let w = selection_weights(&kset, cfg.selection);
    let eta = mather::build_mather_measure(&kset, &sol.u_minus, Some(&w))?;
    let response = grid::pushforward(&eta, m.grid());
    Ok((response, sol, kset))
}

/// One measurable selection from the set-valued best-response map: the value
/// function for m, its contact set, and the selected measure on that set.
pub fn best_response(
    m: &GridMeasure,
    model: &ContactModel,
    coupling: &Coupling,
    cfg: &EquilibriumConfig,
) -> Result<(GridMeasure, WeakKamSolution, KSet)> {
    cfg.validate(model)?;
    best_response_seeded(m, model, coupling, cfg, None)
}

/// Damped best-response iteration m_{k+1} = (1 - a_k) m_k + a_k BR(m_k),
/// stopping when the successive d_1 gap and the off-support mass are both
/// within tolerance. The value function is re-solved for the final measure so
/// the returned pair is consistent.
pub fn iterate_equilibrium(
    m0: &GridMeasure,
    model: &ContactModel,
    coupling: &Coupling,
    cfg: &EquilibriumConfig,
) -> Result<EquilibriumResult> {
    cfg.validate(model)?;
    let mut m = m0.clone();
    let mut warm: Option<GridFunction> = None;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut d1_gap = f64::INFINITY;
    let mut iterations = 0;

    for k in 0..cfg.max_outer {
        let (response, sol, kset) =
            best_response_seeded(&m, model, coupling, cfg, warm.as_ref())?;
        let alpha = match cfg.damping {
            Damping::Fixed(a) => a,
            Damping::Averaging => 1.0 / (k as f64 + 1.0),
        };
        let m_next = m.blend(&response, alpha)?;
        d1_gap = grid::d1_distance(&m, &m_next)?;
        let leak = mass_outside(&m_next, &kset);
        trace.push(TraceEntry { iteration: k, d1_gap, support_size: kset.len() });
        m = m_next;
        warm = Some(sol.u_minus);
        iterations = k + 1;
        if d1_gap <= cfg.tol_m && leak <= cfg.tol_mass {
            converged = true;
            break;
        }
    }

    // re-solve for the final measure so (u, m) is a consistent pair
    let seed = warm.unwrap_or_else(|| GridFunction::constant(m.grid(), 0.0));
    let sol = solve_u_minus(model, coupling, &m, &seed, &cfg.semigroup)?;
    let (tol_h, tol_g) = kset_tols(cfg, m.grid(), model, coupling);
    let kset = mather::extract_kset(&sol.u_minus, model, coupling, &m, tol_h, tol_g)?;
    let support_leak = mass_outside(&m, &kset);
    let hj = hj_residual(&sol.u_minus, model, coupling, &m)?;
    let cont = continuity_residual(&sol.u_minus, &m, model, coupling, 2)?;

    Ok(EquilibriumResult {
        u: sol.u_minus,
        m,
        hj_residual: hj,
        continuity_residual: cont,
        d1_gap,
        support_leak,
        iterations,
        converged,
        trace,
    })
}

fn mass_outside(m: &GridMeasure, kset: &KSet) -> f64 {
    let mut inside = vec![false; m.weights().len()];
    for &i in &kset.nodes {
        inside[i] = true;
    }
    // the empty sum is -0.0, which would look like a sign bug in reports
    m.weights()
        .iter()
        .zip(&inside)
        .filter(|(_, &keep)| !keep)
        .map(|(&w, _)| w)
        .sum::<f64>()
        .max(0.0)
}

/// Max node residual of H(x, u, Du) = F(x, m) with kink-aware gradients:
/// centered where the one-sided differences agree within sqrt(h), otherwise
/// the better one-sided value. On top of that, the best one-sided residual
/// must be small at every node, which catches spurious supersolution kinks
/// that a centered difference would average away.
pub fn hj_residual(
    u: &GridFunction,
    model: &ContactModel,
    coupling: &Coupling,
    m: &GridMeasure,
) -> Result<f64> {
    if u.grid().n() != m.grid().n() {
        return Err(KamError::GridMismatch(u.grid().n(), m.grid().n()));
    }
    let grid = u.grid();
    let n = grid.n();
    let h = grid.h();
    let kink_tol = h.sqrt();
    let f_grid = coupling.eval_on_grid(grid, m);
    let vals = u.values();
    let mut worst = 0.0f64;
    for i in 0..n {
        let x = grid.node(i);
        let u_i = vals[i];
        let d_plus = (vals[(i + 1) % n] - u_i) / h;
        let d_minus = (u_i - vals[(i + n - 1) % n]) / h;
        let res = |p: f64| (model.eval_h(x, u_i, p) - f_grid.values()[i]).abs();
        let primary = if (d_plus - d_minus).abs() <= kink_tol {
            res(0.5 * (d_plus + d_minus))
        } else {
            res(d_plus).min(res(d_minus))
        };
        let subsolution = res(d_plus).min(res(d_minus));
        worst = worst.max(primary.max(subsolution));
    }
    Ok(worst)
}

/// Weak form of the stationary continuity equation: max over the test
/// functions sin(2 pi k x), cos(2 pi k x), k <= modes, of
/// |int phi'(x) H_p(x, u, D_h u) dm| with analytic phi' and the centered
/// discrete gradient.
pub fn continuity_residual(
    u: &GridFunction,
    m: &GridMeasure,
    model: &ContactModel,
    _coupling: &Coupling,
    modes: usize,
) -> Result<f64> {
    if u.grid().n() != m.grid().n() {
        return Err(KamError::GridMismatch(u.grid().n(), m.grid().n()));
    }
    if modes == 0 {
        return Err(KamError::InvalidConfig("continuity_residual needs modes >= 1".into()));
    }
    let grid = u.grid();
    let n = grid.n();
    let h = grid.h();
    let vals = u.values();
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut worst = 0.0f64;
    for k in 1..=modes {
        let freq = two_pi * k as f64;
        let mut int_sin = 0.0;
        let mut int_cos = 0.0;
        for (i, &w) in m.weights().iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let x = grid.node(i);
            let du = (vals[(i + 1) % n] - vals[(i + n - 1) % n]) / (2.0 * h);
            let (_, _, h_p) = model.eval_partials(x, vals[i], du);
            // phi = sin: phi' = freq cos; phi = cos: phi' = -freq sin
            int_sin += w * freq * (freq * x).cos() * h_p;
            int_cos += w * (-freq) * (freq * x).sin() * h_p;
        }
        worst = worst.max(int_sin.abs()).max(int_cos.abs());
    }
    Ok(worst)
}
