//! Characteristic flow of the contact system: the ODE for (x, p, u), fixed-step
//! RK4 integration with a blow-up guard, fixed-point drift, and push-forward
//! invariance checks for phase-space measures.

use std::sync::Arc;

use crate::error::{KamError, Result};
use crate::grid::{self, GridMeasure, PhaseMeasure};
use crate::model::{compute_bounds, ContactModel, Coupling};

/// A point of phase space: position on the circle, value level, momentum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactState {
    pub x: f64,
    pub u: f64,
    pub p: f64,
}

impl ContactState {
    pub fn new(x: f64, u: f64, p: f64) -> Self {
        ContactState { x: grid::wrap(x), u, p }
    }
}

/// Time derivative of a state, in the order (dx, dp, du). Named fields so the
/// three components cannot be silently transposed.
#[derive(Clone, Copy, Debug)]
pub struct ContactVelocity {
    pub dx: f64,
    pub dp: f64,
    pub du: f64,
}

/// Fixed-step integrator configuration.
#[derive(Clone, Copy, Debug)]
pub struct FlowConfig {
    pub dt_ode: f64,
    /// Signed horizon; negative integrates backward in time.
    pub horizon: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { dt_ode: 1e-3, horizon: 1.0 }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_ode > 0.0) || !self.dt_ode.is_finite() {
            return Err(KamError::InvalidConfig(format!(
                "dt_ode must be positive and finite, got {}",
                self.dt_ode
            )));
        }
        if !self.horizon.is_finite() {
            return Err(KamError::InvalidConfig("horizon must be finite".into()));
        }
        Ok(())
    }
}

/// Right-hand side of the characteristic system for H_m = H - F(.,m):
/// dx = H_p, dp = -dH_m/dx - H_u p, du = p H_p - H_m.
pub fn vector_field(
    model: &ContactModel,
    coupling: &Coupling,
    m: &GridMeasure,
    s: ContactState,
) -> ContactVelocity {
    let (h_x, h_u, h_p) = model.eval_partials(s.x, s.u, s.p);
    let hm = model.eval_h(s.x, s.u, s.p) - coupling.eval(s.x, m);
    let hm_x = h_x - coupling.eval_deriv(s.x, m);
    ContactVelocity {
        dx: h_p,
        dp: -hm_x - h_u * s.p,
        du: s.p * h_p - hm,
    }
}

/// An integrated orbit sampled at every step.
#[derive(Clone, Debug)]
pub struct Orbit {
    pub times: Vec<f64>,
    pub states: Vec<ContactState>,
}

impl Orbit {
    pub fn final_state(&self) -> ContactState {
        *self.states.last().expect("orbit holds at least the initial state")
    }

    /// CSV with columns t,x,u,p,H_m.
    pub fn to_csv(&self, model: &ContactModel, coupling: &Coupling, m: &GridMeasure) -> String {
        let mut out = String::from("t,x,u,p,H_m\n");
        for (t, s) in self.times.iter().zip(&self.states) {
            let hm = model.eval_h(s.x, s.u, s.p) - coupling.eval(s.x, m);
            out.push_str(&format!("{},{},{},{},{}\n", t, s.x, s.u, s.p, hm));
        }
        out
    }
}

/// Integrates the characteristic system with classical fixed-step RK4 over
/// [0, horizon] (backward when the horizon is negative). Aborts when |u| or
/// |p| exceeds 1e3 times the a priori sup bound.
pub fn integrate_orbit(
    model: &ContactModel,
    coupling: &Coupling,
    m: &GridMeasure,
    s0: ContactState,
    cfg: &FlowConfig,
) -> Result<Orbit> {
    cfg.validate()?;
    let bounds = compute_bounds(model, coupling, m.grid(), 1.0);
    let limit = 1e3 * bounds.d3_sup.max(1.0);

    let steps = (cfg.horizon.abs() / cfg.dt_ode).ceil() as usize;
    let dt = if cfg.horizon < 0.0 { -cfg.dt_ode } else { cfg.dt_ode };
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut s = ContactState::new(s0.x, s0.u, s0.p);
    let mut t = 0.0;
    times.push(t);
    states.push(s);

    for k in 0..steps {
        // shorten the last step so the orbit lands exactly on the horizon
        let remaining = cfg.horizon - t;
        let step = if k + 1 == steps { remaining } else { dt };
        s = rk4_step(model, coupling, m, s, step);
        t += step;
        if !s.u.is_finite() || !s.p.is_finite() || s.u.abs() > limit || s.p.abs() > limit {
            return Err(KamError::OrbitDiverged { t, limit });
        }
        times.push(t);
        states.push(s);
    }
    Ok(Orbit { times, states })
}

fn rk4_step(
    model: &ContactModel,
    coupling: &Coupling,
    m: &GridMeasure,
    s: ContactState,
    dt: f64,
) -> ContactState {
    let shift = |s: ContactState, k: ContactVelocity, c: f64| ContactState {
        x: s.x + c * k.dx,
        u: s.u + c * k.du,
        p: s.p + c * k.dp,
    };
    let k1 = vector_field(model, coupling, m, s);
    let k2 = vector_field(model, coupling, m, shift(s, k1, 0.5 * dt));
    let k3 = vector_field(model, coupling, m, shift(s, k2, 0.5 * dt));
    let k4 = vector_field(model, coupling, m, shift(s, k3, dt));
    ContactState::new(
        s.x + dt / 6.0 * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx),
        s.u + dt / 6.0 * (k1.du + 2.0 * k2.du + 2.0 * k3.du + k4.du),
        s.p + dt / 6.0 * (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp),
    )
}

/// Max over components of |Phi_T(s) - s|, position measured on the circle.
pub fn fixed_point_drift(
    model: &ContactModel,
    coupling: &Coupling,
    m: &GridMeasure,
    s: ContactState,
    horizon: f64,
) -> Result<f64> {
    let cfg = FlowConfig { horizon, ..FlowConfig::default() };
    let orbit = integrate_orbit(model, coupling, m, s, &cfg)?;
    let f = orbit.final_state();
    let s = ContactState::new(s.x, s.u, s.p);
    Ok(grid::circle_dist(f.x, s.x).max((f.u - s.u).abs()).max((f.p - s.p).abs()))
}

/// Observable on phase space.
pub type PhaseFn = Arc<dyn Fn(ContactState) -> f64 + Send + Sync>;

/// Products of low-order Fourier modes in x with the monomials 1, u, p.
pub fn default_test_functions() -> Vec<PhaseFn> {
    let mut out: Vec<PhaseFn> = Vec::new();
    let angular: Vec<PhaseFn> = vec![
        Arc::new(|_s| 1.0),
        Arc::new(|s: ContactState| (2.0 * std::f64::consts::PI * s.x).sin()),
        Arc::new(|s: ContactState| (2.0 * std::f64::consts::PI * s.x).cos()),
        Arc::new(|s: ContactState| (4.0 * std::f64::consts::PI * s.x).sin()),
        Arc::new(|s: ContactState| (4.0 * std::f64::consts::PI * s.x).cos()),
    ];
    let poly: Vec<PhaseFn> = vec![
        Arc::new(|_s| 1.0),
        Arc::new(|s: ContactState| s.u),
        Arc::new(|s: ContactState| s.p),
    ];
    for a in &angular {
        for q in &poly {
            let (a, q) = (a.clone(), q.clone());
            out.push(Arc::new(move |s| a(s) * q(s)));
        }
    }
    out
}

/// Max over test functions of |int f d(Phi_T # eta) - int f d(eta)|: zero for
/// flow-invariant measures up to integrator error.
pub fn invariance_check(
    eta: &PhaseMeasure,
    model: &ContactModel,
    coupling: &Coupling,
    m: &GridMeasure,
    horizon: f64,
    test_fns: &[PhaseFn],
) -> Result<f64> {
    let cfg = FlowConfig { horizon, ..FlowConfig::default() };
    let mut pushed = Vec::with_capacity(eta.atoms().len());
    for &(s, w) in eta.atoms() {
        let orbit = integrate_orbit(model, coupling, m, s, &cfg)?;
        pushed.push((orbit.final_state(), w));
    }
    let mut worst = 0.0f64;
    for f in test_fns {
        let mut gap = 0.0;
        for (&(s, w), &(fs, _)) in eta.atoms().iter().zip(&pushed) {
            gap += w * (f(fs) - f(s));
        }
        worst = worst.max(gap.abs());
    }
    Ok(worst)
}
