//! Experiment drivers behind `oneshot-unsteady run`.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde_json::{json, Value};
use thiserror::Error;

use oneshot_core::adjoint::objective_jn;
use oneshot_core::models::{AdvectionDiffusionModel, ControlledVdpModel, VanDerPolModel};
use oneshot_core::sweep::run_simulation_with;
use oneshot_core::{
    estimate_contraction, residual_report, retardation_factor, run_nested, run_oneshot, solve_classic, ClassicOptions,
    DesignVector, Model, OptimizationReport, SimulationOptions, SimulationResult, SweepOptions, SweepReport, TimeGrid,
    Trajectory,
};

use crate::config::{Mode, ModelKind, RunConfig};
use crate::output::{convergence_svg, heatmap_svg, write_history, write_text, HistoryRow};

/// Power iterations per contraction estimate.
const RHO_PROBES: usize = 20;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot write output directory {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },

    #[error("cannot write {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },

    #[error(transparent)]
    Solver(#[from] oneshot_core::Error),
}

/// How a run ended; maps onto the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    MaxIter,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Converged => 0,
            Outcome::MaxIter => 2,
        }
    }

    fn from_flag(converged: bool) -> Self {
        if converged {
            Outcome::Converged
        } else {
            Outcome::MaxIter
        }
    }
}

type DynModel = Box<dyn Model + Send + Sync>;

/// Instantiate the configured model and its starting design.
pub fn build_model(cfg: &RunConfig) -> Result<(DynModel, DesignVector), oneshot_core::Error> {
    let p = |k: &str| cfg.model_params[k];
    Ok(match cfg.model {
        ModelKind::Vdp => {
            let m = VanDerPolModel::new(p("u"), p("x0"), p("v0"));
            let u = m.default_design();
            (Box::new(m), u)
        }
        ModelKind::Advdiff => {
            (Box::new(AdvectionDiffusionModel::new(p("a"), p("mu"), p("M") as usize)?), DesignVector::zeros(0))
        }
        ModelKind::VdpControl => {
            let m = ControlledVdpModel::new(VanDerPolModel::new(p("u0"), p("x0"), p("v0")), p("u_pen"), p("u_ref"));
            let u = m.default_design();
            (Box::new(m), u)
        }
    })
}

struct Artifacts {
    rows: Vec<HistoryRow>,
    per_step: Vec<Vec<f64>>,
    report: Value,
    outcome: Outcome,
    extra_files: Vec<(&'static str, String)>,
}

/// Execute one configured run, writing `history.csv`, `report.json` and the
/// figures into `output_dir`.
pub fn run_command(cfg: &RunConfig, output_dir: &Path) -> Result<Outcome, RunError> {
    fs::create_dir_all(output_dir).map_err(|source| RunError::Output { path: output_dir.to_path_buf(), source })?;
    let (model, u0) = build_model(cfg)?;
    let grid = TimeGrid::uniform(cfg.grid.final_time, cfg.grid.steps)?;
    info!("{} / {:?}: T = {}, N = {}", cfg.model.name(), cfg.mode, cfg.grid.final_time, cfg.grid.steps);

    let art = match cfg.mode {
        Mode::SimulateClassic => simulate_classic(cfg, model.as_ref(), &grid, &u0)?,
        Mode::SimulateOneshot => simulate(cfg, model.as_ref(), &grid, &u0, false)?,
        Mode::SimulateRescaled => simulate(cfg, model.as_ref(), &grid, &u0, true)?,
        Mode::OptimizeOneshot => optimize(cfg, model.as_ref(), &grid, &u0, false)?,
        Mode::OptimizeNested => optimize(cfg, model.as_ref(), &grid, &u0, true)?,
        Mode::ScalingStudy => scaling_study(cfg, model.as_ref(), &u0)?,
    };

    let write = |name: &str, text: &str| {
        let path = output_dir.join(name);
        write_text(&path, text).map_err(|source| RunError::Output { path, source })
    };
    let history = output_dir.join("history.csv");
    write_history(&history, &art.rows).map_err(|source| RunError::Csv { path: history, source })?;
    let mut report = art.report;
    report["mode"] = json!(cfg.mode);
    report["model"] = json!(cfg.model);
    report["config"] = json!(cfg);
    report["exit_code"] = json!(art.outcome.exit_code());
    write("report.json", &(serde_json::to_string_pretty(&report).expect("report is serializable") + "\n"))?;
    for (name, text) in &art.extra_files {
        write(name, text)?;
    }
    if cfg.plots {
        let series = |f: fn(&HistoryRow) -> Option<f64>| -> Vec<(usize, f64)> {
            art.rows.iter().filter_map(|r| f(r).map(|v| (r.iter, v))).collect()
        };
        let mut lines = vec![("total residual", series(|r| r.total_residual))];
        let grad = series(|r| r.reduced_grad_norm);
        if !grad.is_empty() {
            lines.push(("reduced gradient", grad));
        }
        write("convergence.svg", &convergence_svg(&format!("{} {:?}", cfg.model.name(), cfg.mode), &lines))?;
        if !art.per_step.is_empty() {
            write("residual_heatmap.svg", &heatmap_svg("per-step residual", &art.per_step))?;
        }
    }
    info!("finished with {:?}", art.outcome);
    Ok(art.outcome)
}

fn opt(x: f64) -> Option<f64> {
    Some(x)
}

fn simulate_classic(
    cfg: &RunConfig,
    model: &dyn Model,
    grid: &TimeGrid,
    u: &DesignVector,
) -> Result<Artifacts, RunError> {
    let start = Trajectory::constant(grid.steps(), &model.initial_state(u));
    let opts =
        ClassicOptions { tol: cfg.tolerances.inner_tol, max_iter: 50, preconditioner_scale: cfg.preconditioner_scale };
    let (traj, inner) = solve_classic(model, grid, u, &opts)?;
    let mut rows = Vec::new();
    let mut per_step = Vec::new();
    for (k, t) in [&start, &traj].into_iter().enumerate() {
        let rep = residual_report(model, grid, t, u)?;
        rows.push(HistoryRow {
            iter: k,
            total_residual: opt(rep.total_residual),
            per_step_residual_max: opt(rep.max_step_residual()),
            jn: opt(objective_jn(model, grid, t, u)),
            ..Default::default()
        });
        per_step.push(rep.per_step_residual);
    }
    let last = rows.last().expect("two rows");
    let report = json!({
        "converged": true,
        "inner_iterations": inner,
        "final_total_residual": last.total_residual,
        "final_JN": last.jn,
    });
    Ok(Artifacts { rows, per_step, report, outcome: Outcome::Converged, extra_files: vec![] })
}

fn simulation_options(cfg: &RunConfig, rescaling: bool) -> SimulationOptions {
    SimulationOptions {
        sweep: SweepOptions { preconditioner_scale: cfg.preconditioner_scale },
        tol: cfg.tolerances.sim_tol,
        max_iter: cfg.max_iter,
        rescaling,
    }
}

fn run_sim(
    cfg: &RunConfig,
    model: &dyn Model,
    grid: &TimeGrid,
    u: &DesignVector,
    rescaling: bool,
    rows: &mut Vec<HistoryRow>,
) -> Result<SimulationResult, RunError> {
    let opts = simulation_options(cfg, rescaling);
    let mut rho_error = None;
    let result = run_simulation_with(model, grid, u, &opts, |traj: &Trajectory, rep: &SweepReport| {
        let k = rep.iteration_index;
        let rho = if k.is_multiple_of(cfg.log_every) {
            info!("iteration {k}: total residual {:.3e}", rep.total_residual);
            match estimate_contraction(model, grid, traj, u, &opts.sweep, RHO_PROBES, cfg.seed) {
                Ok(r) => Some(r),
                Err(e) => {
                    rho_error.get_or_insert(e);
                    None
                }
            }
        } else {
            None
        };
        rows.push(HistoryRow {
            iter: k,
            total_residual: opt(rep.total_residual),
            per_step_residual_max: opt(rep.max_step_residual()),
            jn: opt(objective_jn(model, grid, traj, u)),
            reduced_grad_norm: None,
            rho_estimate: rho,
            rescaling_accepted_fraction: rep.rescaling.map(|r| r.accepted_fraction),
        });
    })?;
    if let Some(e) = rho_error {
        warn!("contraction estimate failed: {e}");
    }
    Ok(result)
}

/// Iteration of the first sweep whose rescaled trajectory was kept, and the
/// drop (in decades) of the max per-step residual across that sweep.
fn first_rescaling(history: &[SweepReport]) -> Option<(usize, f64)> {
    let k = history.iter().position(|r| r.rescaling.is_some_and(|o| o.applied && o.accepted_fraction > 0.0))?;
    let before = history[k - 1].max_step_residual();
    let after = history[k].max_step_residual();
    Some((k, (before / after).log10()))
}

fn simulate(
    cfg: &RunConfig,
    model: &dyn Model,
    grid: &TimeGrid,
    u: &DesignVector,
    rescaling: bool,
) -> Result<Artifacts, RunError> {
    let mut rows = Vec::new();
    let result = run_sim(cfg, model, grid, u, rescaling, &mut rows)?;
    let mut report = json!({
        "converged": result.converged,
        "iterations": result.iterations,
        "final_total_residual": result.history.last().map(|r| r.total_residual),
        "final_JN": rows.last().and_then(|r| r.jn),
    });
    if rescaling {
        if let Some((k, orders)) = first_rescaling(&result.history) {
            report["first_accepted_rescaling_iteration"] = json!(k);
            report["max_step_residual_drop_orders"] = json!(orders);
        }
    }
    let per_step = result.history.into_iter().map(|r| r.per_step_residual).collect();
    Ok(Artifacts { rows, per_step, report, outcome: Outcome::from_flag(result.converged), extra_files: vec![] })
}

fn optimize(
    cfg: &RunConfig,
    model: &dyn Model,
    grid: &TimeGrid,
    u0: &DesignVector,
    nested: bool,
) -> Result<Artifacts, RunError> {
    let report: OptimizationReport = if nested {
        let classic = ClassicOptions {
            tol: cfg.tolerances.inner_tol,
            max_iter: 50,
            preconditioner_scale: cfg.preconditioner_scale,
        };
        run_nested(model, grid, u0, &cfg.oneshot, &classic)?
    } else {
        run_oneshot(model, grid, u0, &cfg.oneshot)?
    };
    let rows = report
        .history
        .iter()
        .map(|r| HistoryRow {
            iter: r.iter,
            total_residual: opt(r.primal_residual),
            per_step_residual_max: opt(r.per_step_residual_max),
            jn: opt(r.jn),
            reduced_grad_norm: opt(r.reduced_grad_norm),
            rho_estimate: None,
            rescaling_accepted_fraction: r.rescaling_accepted_fraction,
        })
        .collect();
    let mut summary = json!({
        "converged": report.converged,
        "iterations": report.iterations,
        "design": report.design,
        "final_JN": report.jn,
        "final_reduced_grad_norm": report.reduced_grad_norm,
        "final_primal_residual": report.primal_residual,
        "final_adjoint_residual": report.adjoint_residual,
        "inner_iterations": report.inner_iterations,
        "adjoint_sweeps": report.adjoint_sweeps,
        "capped_steps": report.history.iter().filter(|r| r.step_capped).count(),
    });
    if !nested {
        match retardation_factor(model, grid, &report, &cfg.oneshot) {
            Ok(r) => summary["retardation_factor"] = json!(r),
            Err(e) => warn!("retardation factor unavailable: {e}"),
        }
    }
    Ok(Artifacts {
        rows,
        per_step: vec![],
        report: summary,
        outcome: Outcome::from_flag(report.converged),
        extra_files: vec![],
    })
}

fn scaling_study(cfg: &RunConfig, model: &(dyn Model + Sync), u: &DesignVector) -> Result<Artifacts, RunError> {
    type Runs = (Result<SimulationResult, RunError>, Result<SimulationResult, RunError>, Vec<HistoryRow>);
    let grids =
        cfg.scaling_n.iter().map(|&n| TimeGrid::uniform(cfg.grid.final_time, n)).collect::<Result<Vec<_>, _>>()?;
    // one worker per grid size; results are gathered in input order
    let runs: Vec<Runs> = std::thread::scope(|scope| {
        let handles: Vec<_> = grids
            .iter()
            .map(|grid| {
                scope.spawn(move || {
                    let mut rows = Vec::new();
                    let plain = run_sim(cfg, model, grid, u, false, &mut Vec::new());
                    let rescaled = run_sim(cfg, model, grid, u, true, &mut rows);
                    (plain, rescaled, rows)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("scaling worker panicked")).collect()
    });

    let mut table = String::from("N,iters_plain,iters_rescaled,converged_plain,converged_rescaled\n");
    let mut points = Vec::new();
    let mut all_converged = true;
    let mut last_rows = Vec::new();
    for (&n, (plain, rescaled, rows)) in cfg.scaling_n.iter().zip(runs) {
        let (plain, rescaled) = (plain?, rescaled?);
        all_converged &= plain.converged && rescaled.converged;
        table.push_str(&format!(
            "{n},{},{},{},{}\n",
            plain.iterations, rescaled.iterations, plain.converged, rescaled.converged
        ));
        info!("N = {n}: {} plain, {} rescaled", plain.iterations, rescaled.iterations);
        points.push(json!({"N": n, "iters_plain": plain.iterations, "iters_rescaled": rescaled.iterations}));
        last_rows = rows;
    }
    let growth = |key: &str| {
        let first = points.first().and_then(|p| p[key].as_f64()).unwrap_or(f64::NAN);
        let last = points.last().and_then(|p| p[key].as_f64()).unwrap_or(f64::NAN);
        last / first
    };
    let report = json!({
        "converged": all_converged,
        "points": points,
        "growth_plain": growth("iters_plain"),
        "growth_rescaled": growth("iters_rescaled"),
        "history_grid_N": cfg.scaling_n.last(),
    });
    Ok(Artifacts {
        rows: last_rows,
        per_step: vec![],
        report,
        outcome: Outcome::from_flag(all_converged),
        extra_files: vec![("scaling.csv", table)],
    })
}
