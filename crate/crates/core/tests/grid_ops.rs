mod common;

use std::f64::consts::PI;

use common::{lp_d1, random_atomic, random_dense, Rng};
use kamfg::dynamics::ContactState;
use kamfg::grid::{
    circle_dist, d1_distance, measure_integral, pushforward, DiffMode, GridFunction, GridMeasure,
    PeriodicGrid, PhaseMeasure,
};

#[test]
fn centered_gradient_matches_analytic_derivative() {
    let grid = PeriodicGrid::new(256).unwrap();
    let f = GridFunction::sample(grid, |x| (2.0 * PI * x).cos());
    let g = f.gradient(DiffMode::Centered);
    let i = grid.nearest_node(0.25);
    assert!((g.value(i) + 2.0 * PI).abs() < 1e-2, "got {}", g.value(i));
}

#[test]
fn gradient_of_constant_vanishes() {
    let grid = PeriodicGrid::new(64).unwrap();
    let f = GridFunction::constant(grid, 3.7);
    for mode in [DiffMode::Centered, DiffMode::Forward, DiffMode::Backward] {
        let g = f.gradient(mode);
        assert!(g.values().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn gradient_is_linear() {
    let grid = PeriodicGrid::new(128).unwrap();
    let f = GridFunction::sample(grid, |x| (2.0 * PI * x).sin());
    let g = GridFunction::sample(grid, |x| (4.0 * PI * x).cos());
    // power-of-two scaling commutes with differencing exactly
    let doubled = GridFunction::new(grid, f.values().iter().map(|v| 2.0 * v).collect()).unwrap();
    let gd = doubled.gradient(DiffMode::Centered);
    let gf = f.gradient(DiffMode::Centered);
    for i in 0..grid.n() {
        assert_eq!(gd.value(i), 2.0 * gf.value(i));
    }
    // general linear combinations agree to rounding
    let combo = GridFunction::new(
        grid,
        f.values().iter().zip(g.values()).map(|(a, b)| 2.0 * a + 0.5 * b).collect(),
    )
    .unwrap();
    let gc = combo.gradient(DiffMode::Centered);
    let gg = g.gradient(DiffMode::Centered);
    for i in 0..grid.n() {
        let expect = 2.0 * gf.value(i) + 0.5 * gg.value(i);
        assert!((gc.value(i) - expect).abs() < 1e-12);
    }
}

#[test]
fn centered_gradient_is_second_order() {
    let mut errs = Vec::new();
    for n in [128usize, 256, 512] {
        let grid = PeriodicGrid::new(n).unwrap();
        let f = GridFunction::sample(grid, |x| (2.0 * PI * x).sin());
        let g = f.gradient(DiffMode::Centered);
        let mut worst = 0.0f64;
        for i in 0..n {
            let exact = 2.0 * PI * (2.0 * PI * grid.node(i)).cos();
            worst = worst.max((g.value(i) - exact).abs());
        }
        errs.push(worst);
    }
    assert!(errs[0] / errs[1] > 3.8, "ratios {:?}", errs);
    assert!(errs[1] / errs[2] > 3.8, "ratios {:?}", errs);
}

#[test]
fn interpolation_hits_nodes_exactly() {
    let grid = PeriodicGrid::new(64).unwrap();
    let f = GridFunction::sample(grid, |x| (2.0 * PI * x).sin() + 0.3 * (4.0 * PI * x).cos());
    for i in 0..grid.n() {
        assert_eq!(f.interpolate(grid.node(i)), f.value(i));
    }
}

#[test]
fn interpolation_midpoint_is_average() {
    let grid = PeriodicGrid::new(64).unwrap();
    let f = GridFunction::sample(grid, |x| (2.0 * PI * x).sin());
    let h = grid.h();
    for i in [0usize, 10, 63] {
        let mid = grid.node(i) + 0.5 * h;
        let avg = 0.5 * f.value(i) + 0.5 * f.value((i + 1) % 64);
        assert!((f.interpolate(mid) - avg).abs() < 1e-15);
    }
}

#[test]
fn interpolation_wraps_around_the_seam() {
    let grid = PeriodicGrid::new(64).unwrap();
    let f = GridFunction::sample(grid, |x| x * (1.0 - x));
    let h = grid.h();
    let x = 1.0 - 0.5 * h;
    let expect = 0.5 * f.value(63) + 0.5 * f.value(0);
    assert!((f.interpolate(x) - expect).abs() < 1e-15);
    // querying just below 0 and just below 1 lands in the same cell
    assert!((f.interpolate(x - 1.0) - expect).abs() < 1e-15);
}

#[test]
fn transport_distance_between_diracs_is_geodesic() {
    let grid = PeriodicGrid::new(128).unwrap();
    let d_half = d1_distance(&GridMeasure::dirac(grid, 0), &GridMeasure::dirac(grid, 64)).unwrap();
    assert!((d_half - 0.5).abs() < 1e-15);
    // three quarters of the way around is a quarter the short way
    let d_quart = d1_distance(&GridMeasure::dirac(grid, 0), &GridMeasure::dirac(grid, 96)).unwrap();
    assert!((d_quart - 0.25).abs() < 1e-15);
}

#[test]
fn transport_distance_matches_basic_solution_enumeration() {
    let mut rng = Rng(0x6a09e667f3bcc908);
    let grid = PeriodicGrid::new(64).unwrap();
    for _ in 0..200 {
        let m1 = random_atomic(&mut rng, grid, 4);
        let m2 = random_atomic(&mut rng, grid, 4);
        let unpack = |m: &GridMeasure| {
            let mut xs = Vec::new();
            let mut ws = Vec::new();
            for (i, &w) in m.weights().iter().enumerate() {
                if w > 0.0 {
                    xs.push(grid.node(i));
                    ws.push(w);
                }
            }
            (xs, ws)
        };
        let (xs, ws) = unpack(&m1);
        let (ys, vs) = unpack(&m2);
        let oracle = lp_d1(&xs, &ws, &ys, &vs);
        let got = d1_distance(&m1, &m2).unwrap();
        assert!(
            (got - oracle).abs() < 1e-9,
            "cumulative {} vs enumerated {}",
            got,
            oracle
        );
    }
}

#[test]
fn transport_distance_satisfies_metric_axioms() {
    let mut rng = Rng(0xbb67ae8584caa73b);
    let grid = PeriodicGrid::new(32).unwrap();
    for _ in 0..200 {
        let a = random_dense(&mut rng, grid);
        let b = random_dense(&mut rng, grid);
        let c = random_dense(&mut rng, grid);
        let dab = d1_distance(&a, &b).unwrap();
        let dba = d1_distance(&b, &a).unwrap();
        let dac = d1_distance(&a, &c).unwrap();
        let dbc = d1_distance(&b, &c).unwrap();
        assert!(dab >= 0.0);
        assert!((dab - dba).abs() <= 1e-12);
        assert!(d1_distance(&a, &a).unwrap() <= 1e-12);
        assert!(dac <= dab + dbc + 1e-12);
    }
}

#[test]
fn transport_distance_is_rotation_invariant() {
    // dyadic weights keep every cumulative sum exact, so equality is bitwise
    let grid = PeriodicGrid::new(32).unwrap();
    let mut w1 = vec![0.0; 32];
    w1[3] = 0.5;
    w1[17] = 0.25;
    w1[20] = 0.25;
    let mut w2 = vec![0.0; 32];
    w2[0] = 0.125;
    w2[9] = 0.375;
    w2[25] = 0.5;
    let base = d1_distance(
        &GridMeasure::new(grid, w1.clone()).unwrap(),
        &GridMeasure::new(grid, w2.clone()).unwrap(),
    )
    .unwrap();
    for shift in [1usize, 5, 16, 31] {
        let rot = |w: &[f64]| {
            let mut out = vec![0.0; 32];
            for i in 0..32 {
                out[(i + shift) % 32] = w[i];
            }
            out
        };
        let d = d1_distance(
            &GridMeasure::new(grid, rot(&w1)).unwrap(),
            &GridMeasure::new(grid, rot(&w2)).unwrap(),
        )
        .unwrap();
        assert_eq!(d, base, "shift {}", shift);
    }
}

#[test]
fn pushforward_projects_atoms_to_nodes() {
    let grid = PeriodicGrid::new(128).unwrap();
    let eta = PhaseMeasure::new(vec![(ContactState::new(0.5, 1.0, 0.0), 1.0)]).unwrap();
    let m = pushforward(&eta, grid);
    assert_eq!(m.support(), vec![grid.nearest_node(0.5)]);
    assert_eq!(m.weights()[64], 1.0);
}

#[test]
fn pushforward_conserves_and_merges_mass() {
    let grid = PeriodicGrid::new(128).unwrap();
    let eta = PhaseMeasure::new(vec![
        (ContactState::new(0.25, 0.0, 0.0), 0.3),
        (ContactState::new(0.75, -1.0, 0.5), 0.7),
    ])
    .unwrap();
    let m = pushforward(&eta, grid);
    assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    assert_eq!(m.support().len(), 2);

    // distinct phase atoms over one position pool their weight
    let merged = pushforward(
        &PhaseMeasure::new(vec![
            (ContactState::new(0.25, 0.0, 0.0), 0.3),
            (ContactState::new(0.25, 2.0, -1.0), 0.7),
        ])
        .unwrap(),
        grid,
    );
    assert_eq!(merged.support(), vec![32]);
    assert_eq!(merged.weights()[32], 1.0);
}

#[test]
fn quadrature_and_measure_integrals() {
    let grid = PeriodicGrid::new(128).unwrap();
    let f = GridFunction::sample(grid, |x| (2.0 * PI * x).cos());
    assert!(f.quadrature().abs() < 1e-12);

    let mut rng = Rng(7);
    let m = random_dense(&mut rng, grid);
    let one = GridFunction::constant(grid, 1.0);
    assert!((measure_integral(&one, &m).unwrap() - 1.0).abs() < 1e-12);

    let d = GridMeasure::dirac(grid, 41);
    assert_eq!(measure_integral(&f, &d).unwrap(), f.value(41));
}

#[test]
fn csv_round_trips_preserve_values() {
    let grid = PeriodicGrid::new(64).unwrap();
    let f = GridFunction::sample(grid, |x| (2.0 * PI * x).sin() / 3.0 + 0.1);
    let back = GridFunction::from_csv(&f.to_csv()).unwrap();
    assert_eq!(back.values(), f.values());

    let mut rng = Rng(11);
    let m = random_atomic(&mut rng, grid, 4);
    let back_m = GridMeasure::from_csv(&m.to_csv()).unwrap();
    assert_eq!(back_m.weights(), m.weights());
}

#[test]
fn wrap_and_distance_basics() {
    assert_eq!(wrap_probe(1.25), 0.25);
    assert_eq!(wrap_probe(-0.25), 0.75);
    assert!((circle_dist(0.1, 0.9) - 0.2).abs() < 1e-15);
    assert!(circle_dist(0.3, 0.3) == 0.0);
}

fn wrap_probe(x: f64) -> f64 {
    kamfg::grid::wrap(x)
}
