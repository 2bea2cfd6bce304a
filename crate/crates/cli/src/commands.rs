//! Command implementations. Every command returns the process exit code on
//! success paths (0 all-pass, 1 any-check-fail); hard failures propagate as
//! errors and are classified in `main`.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::Serialize;

use orthoreg_core::beta::{beta_run, BetaTrace};
use orthoreg_core::exponents::{
    compute_moser_schedule, compute_q_sequence, ExponentVector, MoserSchedule, QSequence,
};
use orthoreg_core::grid::{write_field_binary, write_field_csv};
use orthoreg_core::model::ModelParams;
use orthoreg_core::report::{json_to_string, study_plot_csv, sweep_csv, write_json, write_text};
use orthoreg_core::solver::{solve, sweep_eps, SolveResult};
use orthoreg_core::verify::{
    check_caccioppoli, check_caccioppoli_negative, check_higher_differentiability,
    check_higher_integrability, check_power_caccioppoli, check_self_improving,
    check_weird_caccioppoli, lipschitz_study_over, solve_levels, study_over, EstimateReport,
    RefinementStudy, StudyMode, StudyProblem,
};

use crate::config::{CheckSpec, ExperimentConfig, OutputFormat};

fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
}

#[derive(Serialize)]
struct ExponentsOutput {
    p: Vec<f64>,
    n: usize,
    q0: f64,
    q: Vec<f64>,
    moser_schedule: Option<MoserSchedule>,
}

pub fn cmd_exponents(p: Vec<f64>, q0: f64, jmax: usize, out: Option<PathBuf>) -> Result<u8> {
    let p = ExponentVector::new(p)?;
    let q: QSequence = compute_q_sequence(&p, q0)?;
    let moser_schedule = if p.dim() >= 3 {
        Some(compute_moser_schedule(&p, jmax)?)
    } else {
        None
    };
    let output = ExponentsOutput {
        p: p.as_slice().to_vec(),
        n: p.dim(),
        q0,
        q: q.q.clone(),
        moser_schedule,
    };
    let json = json_to_string(&output)?;
    println!("{json}");
    if let Some(dir) = out {
        ensure_out_dir(&dir)?;
        write_json(&dir.join("exponents.json"), &output)?;
    }
    Ok(0)
}

#[derive(Serialize)]
struct BetaOutput {
    p: Vec<f64>,
    q0: f64,
    j: usize,
    trace: BetaTrace,
}

pub fn cmd_beta(
    p: Vec<f64>,
    q0: f64,
    j: usize,
    max_levels: usize,
    out: Option<PathBuf>,
) -> Result<u8> {
    let p = ExponentVector::new(p)?;
    let trace = beta_run(&p, q0, j, max_levels)?;
    let output = BetaOutput {
        p: p.as_slice().to_vec(),
        q0,
        j,
        trace,
    };
    let json = json_to_string(&output)?;
    println!("{json}");
    if let Some(dir) = out {
        ensure_out_dir(&dir)?;
        write_json(&dir.join("beta.json"), &output)?;
    }
    Ok(0)
}

#[derive(Serialize)]
struct SolveSummary {
    nodes: usize,
    h: f64,
    eps: f64,
    energy: f64,
    residual_max: f64,
    iterations: usize,
    converged: bool,
    boundary_linf: f64,
}

fn summarize(res: &SolveResult, eps: f64) -> SolveSummary {
    SolveSummary {
        nodes: res.u.grid().node_count(),
        h: res.u.grid().max_spacing(),
        eps,
        energy: res.energy,
        residual_max: res.residual_max,
        iterations: res.iterations,
        converged: res.converged,
        boundary_linf: res.boundary_linf,
    }
}

pub fn cmd_solve(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<u8> {
    let params = cfg.model_params()?;
    let data = cfg.boundary_data(seed)?;
    let grid = cfg.grid(cfg.finest_resolution())?;
    let res = solve(&params, &data, &grid, &cfg.solve_cfg)?;

    ensure_out_dir(&cfg.out_dir)?;
    for format in &cfg.formats {
        match format {
            OutputFormat::Json => write_json(&cfg.out_dir.join("solve.json"), &summarize(&res, params.eps))?,
            OutputFormat::Csv => write_field_csv(&res.u, &cfg.out_dir.join("u.csv"))?,
            OutputFormat::Bin => write_field_binary(&res.u, &cfg.out_dir.join("u.bin"))?,
        }
    }
    println!(
        "solve: nodes {} energy {:.9e} residual {:.3e} iterations {}",
        grid.node_count(),
        res.energy,
        res.residual_max,
        res.iterations
    );
    Ok(0)
}

pub fn cmd_sweep(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<u8> {
    let params = cfg.model_params()?;
    let data = cfg.boundary_data(seed)?;
    let grid = cfg.grid(cfg.finest_resolution())?;
    let sweep = sweep_eps(&params, &cfg.eps_list, &data, &grid, &cfg.solve_cfg)?;

    ensure_out_dir(&cfg.out_dir)?;
    for format in &cfg.formats {
        match format {
            OutputFormat::Json => write_json(&cfg.out_dir.join("sweep.json"), &sweep)?,
            OutputFormat::Csv => write_text(&cfg.out_dir.join("sweep.csv"), &sweep_csv(&sweep))?,
            OutputFormat::Bin => {
                for (row, res) in sweep.rows.iter().zip(&sweep.results) {
                    let name = format!("u_eps_{:.6e}.bin", row.eps);
                    write_field_binary(&res.u, &cfg.out_dir.join(name))?;
                }
            }
        }
    }
    println!("eps        energy          residual    iters  total_diff");
    for row in &sweep.rows {
        println!(
            "{:<10.4e} {:<15.8e} {:<11.3e} {:<6} {}",
            row.eps,
            row.energy,
            row.residual_max,
            row.iterations,
            row.total_diff
                .map(|d| format!("{d:.6e}"))
                .unwrap_or_else(|| "-".into())
        );
    }
    Ok(0)
}

/// Runs one configured check against a solved instance.
fn run_check(
    spec: &CheckSpec,
    res: &SolveResult,
    params: &ModelParams,
    cfg: &ExperimentConfig,
) -> Result<EstimateReport> {
    let eta = cfg.cutoff()?;
    Ok(match spec {
        CheckSpec::Caccioppoli { phi_power, axis } => {
            check_caccioppoli(res, params, *phi_power, *axis, &eta, None)?
        }
        CheckSpec::CaccioppoliNegative { alpha, axis } => {
            check_caccioppoli_negative(res, params, *alpha, *axis, &eta, None)?
        }
        CheckSpec::WeirdCaccioppoli { s, m, j, k } => {
            check_weird_caccioppoli(res, params, *s, *m, *j, *k, &eta, None)?
        }
        CheckSpec::PowerCaccioppoli { ell0, axis } => {
            check_power_caccioppoli(res, params, *ell0, *axis, &eta, None)?
        }
        CheckSpec::SelfImproving { alpha, axis } => check_self_improving(
            res,
            params,
            *axis,
            *alpha,
            &cfg.inner_ball(),
            &cfg.outer_ball(),
        )?,
        CheckSpec::HigherIntegrability => {
            check_higher_integrability(res, params, cfg.q0, &cfg.outer_ball())?
        }
        CheckSpec::HigherDifferentiability => {
            check_higher_differentiability(res, params, &cfg.outer_ball())?
        }
        CheckSpec::Lipschitz => {
            return Err(anyhow!(
                "`lipschitz` is a refinement study; run it through the `study` command"
            ))
        }
    })
}

pub fn cmd_verify(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<u8> {
    if cfg.checks.is_empty() {
        return Err(anyhow!("no checks configured: set `checks.names`"));
    }
    let params = cfg.model_params()?;
    let data = cfg.boundary_data(seed)?;
    let grid = cfg.grid(cfg.finest_resolution())?;
    let res = solve(&params, &data, &grid, &cfg.solve_cfg)?;

    let mut reports = Vec::new();
    for spec in &cfg.checks {
        reports.push(run_check(spec, &res, &params, cfg)?);
    }

    ensure_out_dir(&cfg.out_dir)?;
    if cfg.formats.contains(&OutputFormat::Json) {
        write_json(&cfg.out_dir.join("verify.json"), &reports)?;
    }
    let mut all_pass = true;
    println!("check                      lhs            rhs_core       constant     pass");
    for r in &reports {
        all_pass &= r.pass;
        println!(
            "{:<26} {:<14.6e} {:<14.6e} {:<12.5e} {}",
            r.check, r.lhs, r.rhs_core, r.constant, r.pass
        );
    }
    Ok(if all_pass { 0 } else { 1 })
}

/// Derives the sup-gradient study exponents when not configured: the ladder
/// value `γ_{J-1}` and the truncated product `Θ` (dimension at least 3).
fn lipschitz_exponents(cfg: &ExperimentConfig, params: &ModelParams) -> Result<(f64, f64)> {
    match (cfg.lipschitz_gamma, cfg.lipschitz_theta) {
        (Some(g), Some(t)) => Ok((g, t)),
        _ if params.dim() >= 3 => {
            let schedule = compute_moser_schedule(&params.p, 40)?;
            let gamma = cfg
                .lipschitz_gamma
                .unwrap_or_else(|| schedule.gamma_at(schedule.j_start as i64 - 1));
            let theta = cfg.lipschitz_theta.unwrap_or(schedule.theta);
            Ok((gamma, theta))
        }
        _ => Err(anyhow!(
            "two-dimensional problems need explicit `checks.lipschitz_gamma` and `checks.lipschitz_theta`"
        )),
    }
}

pub fn cmd_study(cfg: &ExperimentConfig, seed: Option<u64>, emit_plots: bool) -> Result<u8> {
    if cfg.checks.is_empty() {
        return Err(anyhow!("no checks configured: set `checks.names`"));
    }
    if cfg.resolutions.len() < 2 {
        return Err(anyhow!("a study needs at least two `discretization.resolutions`"));
    }
    let params = cfg.model_params()?;
    let data = cfg.boundary_data(seed)?;
    let problem = StudyProblem {
        params: params.clone(),
        data,
        cfg: cfg.solve_cfg.clone(),
        extents: cfg.extents.clone(),
        resolutions: cfg.resolutions.clone(),
    };
    let levels = solve_levels(&problem)?;

    ensure_out_dir(&cfg.out_dir)?;
    let mut all_pass = true;
    println!("study                      levels  constant_span  finest_growth  pass");
    for spec in &cfg.checks {
        let study: RefinementStudy = match spec {
            CheckSpec::Lipschitz => {
                let (gamma, theta) = lipschitz_exponents(cfg, &params)?;
                lipschitz_study_over(
                    &levels,
                    &params,
                    gamma,
                    theta,
                    &cfg.inner_ball(),
                    &cfg.outer_ball(),
                )?
            }
            other => {
                let mode = match other {
                    CheckSpec::HigherIntegrability | CheckSpec::HigherDifferentiability => {
                        StudyMode::BoundedQuantity
                    }
                    _ => StudyMode::ConstantStability,
                };
                study_over(&levels, other.name(), mode, |res| {
                    run_check(other, res, &params, cfg).map_err(|e| {
                        orthoreg_core::Error::InvalidParameter {
                            name: "check",
                            reason: e.to_string(),
                        }
                    })
                })?
            }
        };
        all_pass &= study.pass;
        println!(
            "{:<26} {:<7} {:<14.5e} {:<14.5e} {}",
            study.check,
            study.levels.len(),
            study.constant_span,
            study.finest_growth,
            study.pass
        );
        if cfg.formats.contains(&OutputFormat::Json) {
            write_json(
                &cfg.out_dir.join(format!("study_{}.json", study.check)),
                &study,
            )?;
        }
        if emit_plots || cfg.emit_plot_data {
            write_text(
                &cfg.out_dir.join(format!("study_{}_plot.csv", study.check)),
                &study_plot_csv(&study),
            )?;
        }
    }
    Ok(if all_pass { 0 } else { 1 })
}
