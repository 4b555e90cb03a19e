//! JSON run configuration: strict schema (unknown keys rejected with the
//! offending field path), expression fields compiled and validated at load
//! time, and CLI flag overrides applied before anything runs.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use kamfg::grid::PeriodicGrid;
use kamfg::mfg::{Damping, EquilibriumConfig, Selection};
use kamfg::model::{CircleFn, ContactModel, Coupling, Kernel, Theta};
use kamfg::weak_kam::SemigroupConfig;
use serde::Deserialize;

use crate::expr::{self, Expr};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridBlock,
    pub model: ModelBlock,
    #[serde(default)]
    pub coupling: CouplingBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub equilibrium: EquilibriumBlock,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub n: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    #[serde(default)]
    pub theta: ThetaBlock,
    pub kinetic: String,
    pub potential: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThetaBlock {
    #[default]
    Identity,
    Linear {
        intercept: f64,
        slope: f64,
    },
    Arctan,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingBlock {
    #[serde(default = "zero_expression")]
    pub g: String,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub kernel: Option<KernelBlock>,
}

fn zero_expression() -> String {
    "0".to_string()
}

impl Default for CouplingBlock {
    fn default() -> Self {
        CouplingBlock { g: zero_expression(), beta: 0.0, kernel: None }
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelBlock {
    WrappedGaussian { eps: f64 },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    pub dt: Option<f64>,
    pub v_max: Option<f64>,
    pub n_v: Option<usize>,
    pub tol_conv: Option<f64>,
    pub max_steps: Option<usize>,
    pub inner_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumBlock {
    pub selection: Option<SelectionBlock>,
    pub damping: Option<DampingBlock>,
    pub tol_m: Option<f64>,
    pub max_outer: Option<usize>,
    pub tol_mass: Option<f64>,
    pub kset_tol_h: Option<f64>,
    pub kset_tol_g: Option<f64>,
}

#[derive(Debug, Deserialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
pub enum SelectionBlock {
    Uniform,
    ResidualWeighted,
}

#[derive(Debug, Deserialize, Clone, Copy)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DampingBlock {
    Averaging,
    Fixed { alpha: f64 },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub emit_svg: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut de = serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path_in_doc = e.path().to_string();
            anyhow!("config field `{path_in_doc}`: {}", e.inner())
        })
    }

    /// Command-line flags win over the file.
    pub fn apply_overrides(
        &mut self,
        grid_n: Option<usize>,
        seed: Option<u64>,
        out: Option<PathBuf>,
        emit_svg: bool,
    ) {
        if let Some(n) = grid_n {
            self.grid.n = n;
        }
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(dir) = out {
            self.output.dir = Some(dir);
        }
        if emit_svg {
            self.output.emit_svg = true;
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn build(&self) -> anyhow::Result<Built> {
        let grid = PeriodicGrid::new(self.grid.n).map_err(|e| anyhow!("grid.n: {e}"))?;

        let kinetic = compile(&self.model.kinetic, "model.kinetic", self.seed)?;
        let potential = compile(&self.model.potential, "model.potential", self.seed)?;
        let g = compile(&self.coupling.g, "coupling.g", self.seed)?;

        let (x_min, a_min) = expr::sampled_min(&kinetic, self.seed);
        if a_min <= 0.0 {
            bail!("model.kinetic: kinetic_coeff not positive (a({x_min}) = {a_min})");
        }

        let theta = match self.model.theta {
            ThetaBlock::Identity => Theta::Identity,
            ThetaBlock::Linear { intercept, slope } => {
                if !(slope > 0.0) {
                    bail!("model.theta.slope: must be positive, got {slope}");
                }
                Theta::Linear { intercept, slope }
            }
            ThetaBlock::Arctan => Theta::Arctan,
        };

        let model = ContactModel::new(theta, circle_fn(&kinetic), circle_fn(&potential));

        let kernel = match self.coupling.kernel {
            None => None,
            Some(KernelBlock::WrappedGaussian { eps }) => {
                if !(eps > 0.0) {
                    bail!("coupling.kernel.eps: must be positive, got {eps}");
                }
                Some(Kernel::WrappedGaussian { eps })
            }
        };
        let coupling = Coupling::new(circle_fn(&g), self.coupling.beta, kernel);

        let mut semigroup = SemigroupConfig::for_grid(grid, &model, &coupling);
        let s = &self.solver;
        if let Some(v) = s.dt {
            semigroup.dt = v;
        }
        if let Some(v) = s.v_max {
            semigroup.v_max = v;
        }
        if let Some(v) = s.n_v {
            semigroup.n_v = v;
        }
        if let Some(v) = s.tol_conv {
            semigroup.tol_conv = v;
        }
        if let Some(v) = s.max_steps {
            semigroup.max_steps = v;
        }
        if let Some(v) = s.inner_tol {
            semigroup.inner_tol = v;
        }
        semigroup.validate(&model).map_err(|e| anyhow!("solver: {e}"))?;

        let mut equilibrium = EquilibriumConfig::for_grid(grid, &model, &coupling);
        equilibrium.semigroup = semigroup.clone();
        let e = &self.equilibrium;
        if let Some(sel) = e.selection {
            equilibrium.selection = match sel {
                SelectionBlock::Uniform => Selection::Uniform,
                SelectionBlock::ResidualWeighted => Selection::ResidualWeighted,
            };
        }
        if let Some(d) = e.damping {
            equilibrium.damping = match d {
                DampingBlock::Averaging => Damping::Averaging,
                DampingBlock::Fixed { alpha } => Damping::Fixed(alpha),
            };
        }
        if let Some(v) = e.tol_m {
            equilibrium.tol_m = v;
        }
        if let Some(v) = e.max_outer {
            equilibrium.max_outer = v;
        }
        if let Some(v) = e.tol_mass {
            equilibrium.tol_mass = v;
        }
        if let Some(v) = e.kset_tol_h {
            equilibrium.kset_tol_h = Some(v);
        }
        if let Some(v) = e.kset_tol_g {
            equilibrium.kset_tol_g = Some(v);
        }
        equilibrium.validate(&model).map_err(|e| anyhow!("equilibrium: {e}"))?;

        Ok(Built { grid, model, coupling, semigroup, equilibrium })
    }
}

/// Everything downstream commands need, assembled and validated.
pub struct Built {
    pub grid: PeriodicGrid,
    pub model: ContactModel,
    pub coupling: Coupling,
    pub semigroup: SemigroupConfig,
    pub equilibrium: EquilibriumConfig,
}

fn compile(text: &str, field: &str, seed: u64) -> anyhow::Result<Expr> {
    let expr = expr::parse(text).map_err(|e| anyhow!("{field}: {e}"))?;
    if let Some(x) = expr::sampled_nonfinite(&expr, seed) {
        bail!("{field}: expression is not finite at x = {x}");
    }
    let gap = expr::periodicity_gap(&expr);
    if gap > 1e-9 {
        bail!("{field}: expression is not 1-periodic (|f(0) - f(1^-)| = {gap:e})");
    }
    Ok(expr)
}

fn circle_fn(expr: &Expr) -> CircleFn {
    let (f, df) = expr.closures();
    CircleFn::new(f, df)
}
