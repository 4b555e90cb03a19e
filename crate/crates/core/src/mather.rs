//! Extraction of the contact set K = {x : H(x, u_-(x), 0) = F(x,m)} from a
//! computed solution, the conjugate-pair equality proxy for the Aubry set, and
//! construction of atomic measures supported on K.

use crate::error::{KamError, Result};
use crate::grid::{GridFunction, GridMeasure, PeriodicGrid, PhaseMeasure};
use crate::model::{ContactModel, Coupling};

/// Qualifying nodes with the residuals that admitted them.
#[derive(Clone, Debug)]
pub struct KSet {
    pub nodes: Vec<usize>,
    /// |H(x_i, u_i, 0) - F(x_i, m)| per member.
    pub h_residuals: Vec<f64>,
    /// |centered gradient of u| per member.
    pub g_residuals: Vec<f64>,
}

impl KSet {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Level-residual tolerance matched to the scheme's O(h) accuracy.
pub fn default_tol_h(grid: PeriodicGrid, model: &ContactModel, coupling: &Coupling) -> f64 {
    let mut v_lip = 0.0f64;
    for &x in &grid.nodes() {
        v_lip = v_lip.max(model.potential.deriv(x).abs());
    }
    5.0 * grid.h() * (1.0 + v_lip + coupling.f_infinity)
}

/// Gradient tolerance; gradients at touching points converge like sqrt(h).
pub fn default_tol_g(grid: PeriodicGrid) -> f64 {
    5.0 * grid.h().sqrt()
}

/// All nodes where the zero-momentum level condition and the flat-gradient
/// condition both hold within tolerance. The gradient condition is implied in
/// the continuum but filters numerical false positives here.
pub fn extract_kset(
    u_minus: &GridFunction,
    model: &ContactModel,
    coupling: &Coupling,
    m: &GridMeasure,
    tol_h: f64,
    tol_g: f64,
) -> Result<KSet> {
    if u_minus.grid().n() != m.grid().n() {
        return Err(KamError::GridMismatch(u_minus.grid().n(), m.grid().n()));
    }
    let grid = u_minus.grid();
    let n = grid.n();
    let h = grid.h();
    let f_grid = coupling.eval_on_grid(grid, m);
    let vals = u_minus.values();
    let mut nodes = Vec::new();
    let mut h_residuals = Vec::new();
    let mut g_residuals = Vec::new();
    let mut min_h = f64::INFINITY;
    let mut min_g = f64::INFINITY;
    for i in 0..n {
        let x = grid.node(i);
        let u_i = vals[i];
        let rh = (model.eval_h(x, u_i, 0.0) - f_grid.values()[i]).abs();
        let rg = ((vals[(i + 1) % n] - vals[(i + n - 1) % n]) / (2.0 * h)).abs();
        min_h = min_h.min(rh);
        min_g = min_g.min(rg);
        if rh <= tol_h && rg <= tol_g {
            nodes.push(i);
            h_residuals.push(rh);
            g_residuals.push(rg);
        }
    }
    if nodes.is_empty() {
        return Err(KamError::EmptyKSet { min_h, min_g });
    }
    Ok(KSet { nodes, h_residuals, g_residuals })
}

/// Nodes where the conjugate pair touches: |u_-(x_i) - u_+(x_i)| <= tol.
pub fn aubry_proxy(u_minus: &GridFunction, u_plus: &GridFunction, tol: f64) -> Result<Vec<usize>> {
    if u_minus.grid().n() != u_plus.grid().n() {
        return Err(KamError::GridMismatch(u_minus.grid().n(), u_plus.grid().n()));
    }
    Ok((0..u_minus.values().len())
        .filter(|&i| (u_minus.values()[i] - u_plus.values()[i]).abs() <= tol)
        .collect())
}

/// Atomic phase-space measure with atoms (x_i, u_-(x_i), 0) over the K-set.
/// `weights` of None means uniform; custom weights must be nonnegative, sum
/// to 1, and match the K-set size.
pub fn build_mather_measure(
    kset: &KSet,
    u_minus: &GridFunction,
    weights: Option<&[f64]>,
) -> Result<PhaseMeasure> {
    let k = kset.len();
    if k == 0 {
        return Err(KamError::EmptyKSet { min_h: f64::NAN, min_g: f64::NAN });
    }
    let w: Vec<f64> = match weights {
        None => {
            let mut w = vec![1.0 / k as f64; k];
            let sum: f64 = w.iter().sum();
            w[0] += 1.0 - sum;
            w
        }
        Some(w) => {
            if w.len() != k {
                return Err(KamError::WeightMismatch { got: w.len(), want: k });
            }
            w.to_vec()
        }
    };
    let atoms = kset
        .nodes
        .iter()
        .zip(&w)
        .map(|(&i, &wi)| {
            let x = u_minus.grid().node(i);
            (crate::dynamics::ContactState::new(x, u_minus.values()[i], 0.0), wi)
        })
        .collect();
    PhaseMeasure::new(atoms)
}
