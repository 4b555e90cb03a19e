//! Command line front end: reads a JSON run configuration, executes one of
//! the solver pipelines, and writes CSV/JSON/SVG artifacts. Exit status is 0
//! on success, 2 when an iteration finished without converging (the
//! artifacts are still written), and 1 on any error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use kamfg::grid::{GridFunction, GridMeasure};
use kamfg::mather::{default_tol_g, default_tol_h, extract_kset};
use kamfg::mfg::{continuity_residual, hj_residual, iterate_equilibrium};
use kamfg::model::{check_assumptions, solve_a_m};
use kamfg::weak_kam::{critical_value, solve_u_minus, solve_u_plus};

use kamfg_cli::config::{Built, RunConfig};
use kamfg_cli::output::{self, EquilibriumReport, KsetReport, ResidualsReport, SolveStats};

const CONTINUITY_MODES: usize = 8;
const VERIFY_TOL: f64 = 1e-12;

#[derive(Parser)]
#[command(name = "kamfg", version, about = "Weak-KAM and mean field game toolkit on the circle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write SVG charts where a command produces plots
    #[arg(long)]
    emit_svg: bool,
    /// Seed for sampled validation checks (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
    /// Grid size (overrides the config)
    #[arg(long)]
    grid_n: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the configured model against the structural assumptions
    Check(Common),
    /// Solve the stationary equation; writes u_minus.csv, u_plus.csv, residuals.json
    SolveHj(Common),
    /// Print the admissible level and its long-time cross-checked critical value
    CriticalValue(Common),
    /// Extract the contact set; writes kset.json
    Mather(Common),
    /// Iterate the coupled equilibrium; writes u.csv, m.csv, report.json
    Equilibrium(Common),
    /// Recompute the residuals recorded by a previous equilibrium run
    Verify(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Check(c) => check(&c),
        Command::SolveHj(c) => solve_hj(&c),
        Command::CriticalValue(c) => critical(&c),
        Command::Mather(c) => mather(&c),
        Command::Equilibrium(c) => equilibrium(&c),
        Command::Verify(c) => verify(&c),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load(common: &Common) -> anyhow::Result<(RunConfig, Built)> {
    let mut cfg = RunConfig::load(&common.config)?;
    cfg.apply_overrides(common.grid_n, common.seed, common.out.clone(), common.emit_svg);
    let built = cfg.build()?;
    Ok((cfg, built))
}

fn ensure_out_dir(cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn check(common: &Common) -> anyhow::Result<ExitCode> {
    let (_, built) = load(common)?;
    let report = check_assumptions(&built.model, &built.coupling, 512)?;
    for c in &report.checks {
        match &c.witness {
            None => println!("[ok]   {}", c.name),
            Some(w) => println!("[FAIL] {}: {}", c.name, w),
        }
    }
    println!(
        "a_min = {}, theta' in [{}, {}], coupling sup = {}, coupling d1-Lipschitz = {}",
        report.a_min, report.delta, report.lambda, report.f_infinity_est, report.lip_in_m_est
    );
    if report.all_passed() {
        println!("all assumptions hold");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("assumption checks failed");
        Ok(ExitCode::from(1))
    }
}

fn solve_hj(common: &Common) -> anyhow::Result<ExitCode> {
    let (cfg, built) = load(common)?;
    let dir = ensure_out_dir(&cfg)?;
    let m = GridMeasure::uniform(built.grid);
    let seed = GridFunction::constant(built.grid, 0.0);
    let sol = solve_u_minus(&built.model, &built.coupling, &m, &seed, &built.semigroup)?;
    let u_plus = solve_u_plus(&sol.u_minus, &built.model, &built.coupling, &m, &built.semigroup)?;
    let hj = hj_residual(&sol.u_minus, &built.model, &built.coupling, &m)?;
    let forward_excess = u_plus
        .values()
        .iter()
        .zip(sol.u_minus.values())
        .map(|(p, m)| p - m)
        .fold(f64::NEG_INFINITY, f64::max);

    output::write_text(&dir.join("u_minus.csv"), &sol.u_minus.to_csv())?;
    output::write_text(&dir.join("u_plus.csv"), &u_plus.to_csv())?;
    output::write_json(
        &dir.join("residuals.json"),
        &ResidualsReport {
            grid_n: built.grid.n(),
            u_minus: SolveStats { converged: sol.converged, steps: sol.steps, residual: sol.residual },
            hj_residual: hj,
            forward_excess,
        },
    )?;
    if cfg.output.emit_svg {
        output::write_text(&dir.join("u_minus.svg"), &output::line_plot("backward solution", &sol.u_minus))?;
        output::write_text(&dir.join("u_plus.svg"), &output::line_plot("forward solution", &u_plus))?;
    }
    println!(
        "solved in {} steps (converged: {}), equation residual {:e}; artifacts in {}",
        sol.steps,
        sol.converged,
        hj,
        dir.display()
    );
    Ok(if sol.converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn critical(common: &Common) -> anyhow::Result<ExitCode> {
    let (_, built) = load(common)?;
    let m = GridMeasure::uniform(built.grid);
    let a_m = solve_a_m(&built.model, &built.coupling, &m, 1e-12)?;
    let c = critical_value(&built.model, a_m, &built.coupling, &m)?;
    println!("admissible level a_m = {a_m}");
    println!("critical value at a_m = {c:e} (long-time cross-check agreed within 1e-8)");
    Ok(ExitCode::SUCCESS)
}

fn mather(common: &Common) -> anyhow::Result<ExitCode> {
    let (cfg, built) = load(common)?;
    let dir = ensure_out_dir(&cfg)?;
    let m = GridMeasure::uniform(built.grid);
    let seed = GridFunction::constant(built.grid, 0.0);
    let sol = solve_u_minus(&built.model, &built.coupling, &m, &seed, &built.semigroup)?;
    let tol_h = built
        .equilibrium
        .kset_tol_h
        .unwrap_or_else(|| default_tol_h(built.grid, &built.model, &built.coupling));
    let tol_g = built.equilibrium.kset_tol_g.unwrap_or_else(|| default_tol_g(built.grid));
    let kset = extract_kset(&sol.u_minus, &built.model, &built.coupling, &m, tol_h, tol_g)?;
    let report = KsetReport::new(built.grid.n(), tol_h, tol_g, &kset, &sol.u_minus);
    output::write_json(&dir.join("kset.json"), &report)?;
    println!(
        "contact set has {} node(s): {:?}; written to {}",
        kset.len(),
        kset.nodes,
        dir.join("kset.json").display()
    );
    Ok(if sol.converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn equilibrium(common: &Common) -> anyhow::Result<ExitCode> {
    let (cfg, built) = load(common)?;
    let dir = ensure_out_dir(&cfg)?;
    let m0 = GridMeasure::uniform(built.grid);
    let r = iterate_equilibrium(&m0, &built.model, &built.coupling, &built.equilibrium)?;
    let cont = continuity_residual(&r.u, &r.m, &built.model, &built.coupling, CONTINUITY_MODES)?;
    let mut report = EquilibriumReport::new(built.grid.n(), cfg.seed, CONTINUITY_MODES, &r);
    report.continuity_residual = cont;

    output::write_text(&dir.join("u.csv"), &r.u.to_csv())?;
    output::write_text(&dir.join("m.csv"), &r.m.to_csv())?;
    output::write_json(&dir.join("report.json"), &report)?;
    if cfg.output.emit_svg {
        output::write_text(&dir.join("u.svg"), &output::line_plot("value function", &r.u))?;
        output::write_text(&dir.join("m.svg"), &output::stem_plot("equilibrium measure", &r.m))?;
    }
    println!(
        "{} after {} iteration(s): d1 gap {:e}, support leak {:e}, equation residual {:e}; artifacts in {}",
        if r.converged { "converged" } else { "did not converge" },
        r.iterations,
        r.d1_gap,
        r.support_leak,
        r.hj_residual,
        dir.display()
    );
    Ok(if r.converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn verify(common: &Common) -> anyhow::Result<ExitCode> {
    let (cfg, built) = load(common)?;
    let dir = cfg.out_dir();
    let read = |name: &str| -> anyhow::Result<String> {
        std::fs::read_to_string(dir.join(name)).with_context(|| format!("reading {}", dir.join(name).display()))
    };
    let u = GridFunction::from_csv(&read("u.csv")?)?;
    let m = GridMeasure::from_csv(&read("m.csv")?)?;
    let report: EquilibriumReport =
        serde_json::from_str(&read("report.json")?).context("parsing report.json")?;

    let hj = hj_residual(&u, &built.model, &built.coupling, &m)?;
    let cont = continuity_residual(&u, &m, &built.model, &built.coupling, report.continuity_modes)?;
    let tol_h = built
        .equilibrium
        .kset_tol_h
        .unwrap_or_else(|| default_tol_h(built.grid, &built.model, &built.coupling));
    let tol_g = built.equilibrium.kset_tol_g.unwrap_or_else(|| default_tol_g(built.grid));
    let kset = extract_kset(&u, &built.model, &built.coupling, &m, tol_h, tol_g)?;
    let mut inside = vec![false; m.weights().len()];
    for &i in &kset.nodes {
        inside[i] = true;
    }
    let leak = m
        .weights()
        .iter()
        .enumerate()
        .filter(|(i, _)| !inside[*i])
        .map(|(_, &w)| w)
        .sum::<f64>()
        .max(0.0);

    let mut ok = true;
    for (name, recorded, recomputed) in [
        ("hj_residual", report.hj_residual, hj),
        ("continuity_residual", report.continuity_residual, cont),
        ("support_leak", report.support_leak, leak),
    ] {
        let agree = (recorded - recomputed).abs() <= VERIFY_TOL;
        ok &= agree;
        println!(
            "{name}: recorded {recorded:e}, recomputed {recomputed:e} ({})",
            if agree { "ok" } else { "MISMATCH" }
        );
    }
    if ok {
        println!("all residuals reproduced within {VERIFY_TOL:e}");
        Ok(ExitCode::SUCCESS)
    } else {
        bail!("recorded residuals do not match the recomputation")
    }
}
