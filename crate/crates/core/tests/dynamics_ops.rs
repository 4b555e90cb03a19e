mod common;

use common::{cosine, Rng};
use kamfg::dynamics::{
    default_test_functions, fixed_point_drift, integrate_orbit, invariance_check, vector_field,
    ContactState, FlowConfig,
};
use kamfg::grid::{circle_dist, GridMeasure, PeriodicGrid, PhaseMeasure};
use kamfg::model::Coupling;

fn background() -> GridMeasure {
    GridMeasure::uniform(PeriodicGrid::new(128).unwrap())
}

#[test]
fn vector_field_vanishes_at_rest_points() {
    let model = cosine();
    let m = background();
    for (x, u) in [(0.5, 1.0), (0.0, -1.0)] {
        let v = vector_field(&model, &Coupling::zero(), &m, ContactState::new(x, u, 0.0));
        assert!(v.dx.abs() < 1e-14 && v.dp.abs() < 1e-14 && v.du.abs() < 1e-14);
    }
}

#[test]
fn value_decays_at_unit_rate_from_the_origin() {
    let model = cosine();
    let m = background();
    let v = vector_field(&model, &Coupling::zero(), &m, ContactState::new(0.0, 0.0, 0.0));
    assert_eq!(v.du, -1.0);
    assert_eq!(v.dx, 0.0);
}

#[test]
fn positions_freeze_when_momentum_vanishes() {
    let model = cosine();
    let m = background();
    let mut rng = Rng(51);
    for _ in 0..50 {
        let s = ContactState::new(rng.next_f64(), rng.range(-2.0, 2.0), 0.0);
        let v = vector_field(&model, &Coupling::zero(), &m, s);
        assert_eq!(v.dx, 0.0);
    }
}

#[test]
fn orbit_from_a_rest_point_stays_put() {
    let model = cosine();
    let m = background();
    let cfg = FlowConfig { dt_ode: 1e-3, horizon: 1.0 };
    let orbit = integrate_orbit(&model, &Coupling::zero(), &m, ContactState::new(0.5, 1.0, 0.0), &cfg).unwrap();
    let s = orbit.final_state();
    assert!(circle_dist(s.x, 0.5) < 1e-10);
    assert!((s.u - 1.0).abs() < 1e-10);
    assert!(s.p.abs() < 1e-10);
}

#[test]
fn short_horizon_value_drop_is_first_order() {
    let model = cosine();
    let m = background();
    let t = 0.01;
    let cfg = FlowConfig { dt_ode: 1e-3, horizon: t };
    let orbit = integrate_orbit(&model, &Coupling::zero(), &m, ContactState::new(0.0, 0.0, 0.0), &cfg).unwrap();
    let u_t = orbit.final_state().u;
    // u(t) = -t + t^2/2 + O(t^3) since the state starts at the potential peak
    assert!((u_t + t).abs() <= t * t, "u({}) = {}", t, u_t);
    assert!((u_t + t).abs() >= 0.25 * t * t);
}

#[test]
fn zero_energy_level_is_preserved() {
    let model = cosine();
    let m = background();
    let mut rng = Rng(52);
    let cfg = FlowConfig { dt_ode: 1e-3, horizon: 1.0 };
    for _ in 0..20 {
        let x = rng.next_f64();
        let p = rng.range(-2.0, 2.0);
        let u = -(0.5 * p * p + model.potential.eval(x));
        let orbit = integrate_orbit(&model, &Coupling::zero(), &m, ContactState::new(x, u, p), &cfg).unwrap();
        let worst = orbit
            .states
            .iter()
            .map(|s| model.eval_h(s.x, s.u, s.p).abs())
            .fold(0.0f64, f64::max);
        assert!(worst <= 1e-8, "level drift {}", worst);
    }
}

#[test]
fn energy_error_grows_at_most_exponentially() {
    let model = cosine();
    let m = background();
    let lambda = model.theta.lambda();
    let cfg = FlowConfig { dt_ode: 1e-3, horizon: 1.0 };
    let s0 = ContactState::new(0.3, 0.5, 0.4);
    let h0 = model.eval_h(s0.x, s0.u, s0.p).abs();
    let orbit = integrate_orbit(&model, &Coupling::zero(), &m, s0, &cfg).unwrap();
    for (t, s) in orbit.times.iter().zip(&orbit.states) {
        let h = model.eval_h(s.x, s.u, s.p).abs();
        assert!(h <= h0 * (lambda * t).exp() + 1e-8);
    }
}

#[test]
fn flow_commutes_with_the_potential_reflection() {
    // cos(2 pi x) is even about 1/2, so (x,u,p) -> (1-x, u, -p) conjugates the flow
    let model = cosine();
    let m = background();
    let cfg = FlowConfig { dt_ode: 1e-3, horizon: 0.5 };
    let s0 = ContactState::new(0.3, 0.2, 0.7);
    let r0 = ContactState::new(1.0 - 0.3, 0.2, -0.7);
    let a = integrate_orbit(&model, &Coupling::zero(), &m, s0, &cfg).unwrap().final_state();
    let b = integrate_orbit(&model, &Coupling::zero(), &m, r0, &cfg).unwrap().final_state();
    assert!(circle_dist(b.x, 1.0 - a.x) < 1e-9);
    assert!((b.u - a.u).abs() < 1e-9);
    assert!((b.p + a.p).abs() < 1e-9);
}

#[test]
fn integrator_error_falls_fast_under_step_halving() {
    let model = cosine();
    let m = background();
    let s0 = ContactState::new(0.3, 0.5, 1.0);
    let run = |dt: f64| {
        let cfg = FlowConfig { dt_ode: dt, horizon: 1.0 };
        integrate_orbit(&model, &Coupling::zero(), &m, s0, &cfg).unwrap().final_state()
    };
    let reference = run(1e-5);
    let err = |s: ContactState| {
        circle_dist(s.x, reference.x) + (s.u - reference.u).abs() + (s.p - reference.p).abs()
    };
    let coarse = err(run(4e-3));
    let fine = err(run(2e-3));
    assert!(coarse / fine >= 12.0, "ratio {}", coarse / fine);
}

#[test]
fn drift_diagnoses_rest_points_and_movers() {
    let model = cosine();
    let m = background();
    let at = |x: f64, u: f64, p: f64| {
        fixed_point_drift(&model, &Coupling::zero(), &m, ContactState::new(x, u, p), 1.0).unwrap()
    };
    assert!(at(0.5, 1.0, 0.0) <= 1e-10);
    // the potential maximizer carries the second rest point of the zero level
    assert!(at(0.0, -1.0, 0.0) <= 1e-10);
    assert!(at(0.3, 0.0, 0.5) > 0.01);
}

#[test]
fn measures_on_rest_points_are_flow_invariant() {
    let model = cosine();
    let m = background();
    let fns = default_test_functions();
    let single = PhaseMeasure::new(vec![(ContactState::new(0.5, 1.0, 0.0), 1.0)]).unwrap();
    assert!(invariance_check(&single, &model, &Coupling::zero(), &m, 1.0, &fns).unwrap() <= 1e-12);
    let pair = PhaseMeasure::new(vec![
        (ContactState::new(0.5, 1.0, 0.0), 0.5),
        (ContactState::new(0.0, -1.0, 0.0), 0.5),
    ])
    .unwrap();
    assert!(invariance_check(&pair, &model, &Coupling::zero(), &m, 1.0, &fns).unwrap() <= 1e-9);
}

#[test]
fn moving_atoms_are_detected_by_some_test_function() {
    let model = cosine();
    let m = background();
    let fns = default_test_functions();
    let eta = PhaseMeasure::new(vec![(ContactState::new(0.3, 0.0, 0.5), 1.0)]).unwrap();
    let gap = invariance_check(&eta, &model, &Coupling::zero(), &m, 1.0, &fns).unwrap();
    assert!(gap > 1e-3, "gap {}", gap);
}
