use thiserror::Error;

/// Errors shared by all modules of the toolkit.
#[derive(Debug, Error)]
pub enum KamError {
    #[error("grid needs at least 8 nodes, got {0}")]
    GridTooSmall(usize),

    #[error("operands live on different grids ({0} vs {1} nodes)")]
    GridMismatch(usize, usize),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("assumption {name} violated (witness: {witness})")]
    AssumptionViolated { name: &'static str, witness: String },

    #[error("implicit node solve did not converge in {iters} iterations; dt * lambda is too close to 1")]
    InnerSolveDiverged { iters: usize },

    #[error("level bracket [{lo}, {hi}] does not straddle a root of the critical-level equation")]
    BracketFailed { lo: f64, hi: f64 },

    #[error(
        "critical value cross-check failed: closed form {formula} vs long-time estimate {estimate}"
    )]
    CrossCheckFailed { formula: f64, estimate: f64 },

    #[error("no grid node satisfies the level-set tolerances; best residuals: level {min_h:.3e}, gradient {min_g:.3e}")]
    EmptyKSet { min_h: f64, min_g: f64 },

    #[error("{got} weights supplied for a {want}-node support")]
    WeightMismatch { got: usize, want: usize },

    #[error("orbit diverged at t = {t:.6}: |u| or |p| exceeded {limit:.3e}")]
    OrbitDiverged { t: f64, limit: f64 },
}

pub type Result<T> = std::result::Result<T, KamError>;
