#![allow(dead_code)]

use std::sync::Arc;

use kamfg::grid::{circle_dist, GridMeasure, PeriodicGrid};
use kamfg::model::{CircleFn, ContactModel, Coupling, Kernel, Theta};
use kamfg::weak_kam::SemigroupConfig;

/// Deterministic splitmix64 stream for reproducible sampling in tests.
pub struct Rng(pub u64);

impl Rng {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0,1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

pub fn cosine() -> ContactModel {
    ContactModel::cosine()
}

pub fn flat() -> ContactModel {
    ContactModel::new(Theta::Identity, CircleFn::constant(1.0), CircleFn::constant(0.0))
}

pub fn double_well() -> ContactModel {
    ContactModel::new(
        Theta::Identity,
        CircleFn::constant(1.0),
        CircleFn::new(
            Arc::new(|x: f64| (4.0 * std::f64::consts::PI * x).cos()),
            Arc::new(|x: f64| -4.0 * std::f64::consts::PI * (4.0 * std::f64::consts::PI * x).sin()),
        ),
    )
}

/// Soft-sine monotone rate profile with rate in [0.7, 1.3].
pub fn wavy_theta() -> Theta {
    Theta::Custom {
        f: Arc::new(|u: f64| u + 0.3 * u.sin()),
        df: Arc::new(|u: f64| 1.0 + 0.3 * u.cos()),
        lo: 0.7,
        hi: 1.3,
    }
}

/// Self-reinforcing smoothed coupling: mass lowers F near itself, which raises
/// the effective potential there and pulls the contact set toward the mass.
pub fn attractive_coupling() -> Coupling {
    Coupling::new(CircleFn::constant(0.0), -0.5, Some(Kernel::WrappedGaussian { eps: 0.1 }))
}

/// Tighter fixed-point tolerance with the step cap rescaled to match.
pub fn tighten(mut cfg: SemigroupConfig, tol: f64) -> SemigroupConfig {
    cfg.tol_conv = tol;
    cfg.max_steps = (10.0 * ((1.0 / tol).ln() / cfg.dt).ceil()) as usize;
    cfg
}

pub fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max)
}

/// Random measure supported on at most `max_atoms` distinct nodes.
pub fn random_atomic(rng: &mut Rng, grid: PeriodicGrid, max_atoms: usize) -> GridMeasure {
    let k = 1 + rng.below(max_atoms);
    let mut nodes = Vec::new();
    while nodes.len() < k {
        let i = rng.below(grid.n());
        if !nodes.contains(&i) {
            nodes.push(i);
        }
    }
    let mut w = vec![0.0; grid.n()];
    let mut total = 0.0;
    for &i in &nodes {
        let wi = 0.05 + rng.next_f64();
        w[i] = wi;
        total += wi;
    }
    for v in &mut w {
        *v /= total;
    }
    GridMeasure::new(grid, w).unwrap()
}

/// Random strictly positive weights on every node.
pub fn random_dense(rng: &mut Rng, grid: PeriodicGrid) -> GridMeasure {
    let mut w: Vec<f64> = (0..grid.n()).map(|_| 0.01 + rng.next_f64()).collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    GridMeasure::new(grid, w).unwrap()
}

/// Exact circular transport cost between two small atomic measures, computed
/// by enumerating every basic feasible solution of the transportation
/// polytope (spanning trees of the bipartite support graph) and taking the
/// cheapest. Independent of the production cumulative-sum route.
pub fn lp_d1(xs: &[f64], ws: &[f64], ys: &[f64], vs: &[f64]) -> f64 {
    let ns = xs.len();
    let nd = ys.len();
    assert!(ns >= 1 && nd >= 1 && ns * nd <= 32, "oracle is for tiny supports");
    let n_edges = ns * nd;
    let n_vert = ns + nd;
    let cost: Vec<f64> = (0..n_edges)
        .map(|e| circle_dist(xs[e / nd], ys[e % nd]))
        .collect();

    let mut best = f64::INFINITY;
    // every basic solution uses exactly ns+nd-1 edges forming a spanning tree
    for mask in 0u32..(1u32 << n_edges) {
        if mask.count_ones() as usize != n_vert - 1 {
            continue;
        }
        // acyclicity via union-find; |V|-1 acyclic edges always span
        let mut parent: Vec<usize> = (0..n_vert).collect();
        fn find(parent: &mut Vec<usize>, mut a: usize) -> usize {
            while parent[a] != a {
                parent[a] = parent[parent[a]];
                a = parent[a];
            }
            a
        }
        let mut acyclic = true;
        for e in 0..n_edges {
            if mask & (1 << e) == 0 {
                continue;
            }
            let (i, j) = (e / nd, ns + e % nd);
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri == rj {
                acyclic = false;
                break;
            }
            parent[ri] = rj;
        }
        if !acyclic {
            continue;
        }

        // peel leaves to solve the unique flow on the tree
        let mut supply: Vec<f64> = ws.to_vec();
        let mut demand: Vec<f64> = vs.to_vec();
        let mut degree = vec![0usize; n_vert];
        let mut alive = vec![true; n_edges];
        for e in 0..n_edges {
            if mask & (1 << e) != 0 {
                degree[e / nd] += 1;
                degree[ns + e % nd] += 1;
            } else {
                alive[e] = false;
            }
        }
        let mut total = 0.0f64;
        let mut feasible = true;
        for _ in 0..n_vert - 1 {
            let mut leaf = usize::MAX;
            for v in 0..n_vert {
                if degree[v] == 1 {
                    leaf = v;
                    break;
                }
            }
            if leaf == usize::MAX {
                feasible = false;
                break;
            }
            let e = (0..n_edges)
                .find(|&e| alive[e] && (e / nd == leaf || ns + e % nd == leaf))
                .unwrap();
            let (i, j) = (e / nd, e % nd);
            let flow = if leaf < ns { supply[i] } else { demand[j] };
            if flow < -1e-12 {
                feasible = false;
                break;
            }
            supply[i] -= flow;
            demand[j] -= flow;
            total += flow * cost[e];
            alive[e] = false;
            degree[e / nd] -= 1;
            degree[ns + e % nd] -= 1;
        }
        if feasible && total < best {
            best = total;
        }
    }
    best
}
