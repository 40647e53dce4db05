//! Batch execution of every initial state of a scenario.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use safeclf::{HybridTrajectory64, SimFailure};

use crate::config::{ControllerName, PlannedRun, ScenarioConfig};
use crate::error::{CliError, CliResult};
use crate::output::{
    emit_svg, write_file, write_summary_csv, write_trajectory_csv, RunSummary, SvgTrace,
};

/// Finished (or failed) run together with its plan.
pub struct RunOutcome {
    pub run: PlannedRun,
    pub result: Result<HybridTrajectory64, SimFailure<f64>>,
    pub wall_time_s: f64,
}

impl RunOutcome {
    /// Trajectory to report: the full one, or the prefix recorded before the failure.
    pub fn trajectory(&self) -> &HybridTrajectory64 {
        match &self.result {
            Ok(t) => t,
            Err(f) => &f.partial,
        }
    }

    pub fn summary(&self, controller: ControllerName) -> RunSummary {
        let traj = self.trajectory();
        RunSummary {
            index: self.run.index,
            label: self.run.label.clone(),
            controller: controller.to_string(),
            initial_state: self.run.initial_state.iter().copied().collect(),
            verdict: self.result.as_ref().ok().map(|t| t.verdict),
            expected: self.run.expect,
            jumps: traj.jump_log.len(),
            min_clearance: traj.min_clearance,
            final_error: traj.final_error,
            t_final: traj.times.last().copied().unwrap_or(0.0),
            steps: traj.steps,
            wall_time_s: self.wall_time_s,
            error: self.result.as_ref().err().map(|f| f.error.to_string()),
        }
    }
}

/// Runs every planned initial state on the rayon pool; results keep the plan order.
pub fn execute(cfg: &ScenarioConfig) -> CliResult<Vec<RunOutcome>> {
    let runs = cfg.planned_runs()?;
    if runs.is_empty() {
        return Err(CliError::Config("no initial states".into()));
    }
    let plant = cfg.plant(cfg.target.len())?;
    let scenarios = runs
        .iter()
        .map(|r| cfg.core_scenario(r))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(runs
        .into_par_iter()
        .zip(scenarios.into_par_iter())
        .map(|(run, scenario)| {
            let start = Instant::now();
            let result = plant.simulate(&scenario);
            RunOutcome {
                run,
                result,
                wall_time_s: start.elapsed().as_secs_f64(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SvgMode {
    /// Emit when the top-level state is 2D.
    #[default]
    Auto,
    Always,
    Never,
}

#[derive(Debug, Clone, Default)]
pub struct BatchOptions {
    pub svg: SvgMode,
}

pub struct BatchReport {
    pub rows: Vec<RunSummary>,
    pub outcomes: Vec<RunOutcome>,
    pub files: Vec<PathBuf>,
}

impl BatchReport {
    /// 1 on any expectation mismatch, 3 if a run without expectation failed, else 0.
    pub fn exit_code(&self) -> i32 {
        if self.rows.iter().any(|r| r.matched() == Some(false)) {
            1
        } else if self.rows.iter().any(|r| r.error.is_some()) {
            3
        } else {
            0
        }
    }
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Runs the scenario and writes one CSV per start, the summary table, the echoed
/// config and (for 2D scenarios) an SVG overlay into `out_dir`.
pub fn run_batch(
    cfg: &ScenarioConfig,
    out_dir: &Path,
    opts: &BatchOptions,
) -> CliResult<BatchReport> {
    let outcomes = execute(cfg)?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut files = Vec::new();
    let name = sanitize(&cfg.name);

    let echo = out_dir.join(format!("{name}_config.toml"));
    write_file(&echo, cfg.to_toml()?.as_bytes())?;
    files.push(echo);

    for o in &outcomes {
        let path = out_dir.join(format!(
            "{name}_{:02}_{}.csv",
            o.run.index,
            sanitize(&o.run.label)
        ));
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, o.trajectory())?;
        write_file(&path, &buf)?;
        files.push(path);
    }

    let rows: Vec<RunSummary> = outcomes.iter().map(|o| o.summary(cfg.controller)).collect();
    let summary = out_dir.join(format!("{name}_summary.csv"));
    let mut buf = Vec::new();
    write_summary_csv(&mut buf, &rows)?;
    write_file(&summary, &buf)?;
    files.push(summary);

    let dim = cfg.target.len();
    let want_svg = match opts.svg {
        SvgMode::Always => true,
        SvgMode::Never => false,
        SvgMode::Auto => dim == 2,
    };
    if want_svg {
        let polytope = cfg.polytope()?;
        let ellipse = match cfg.controller {
            ControllerName::QpEllipsoid => match cfg.core_scenario(&outcomes[0].run)?.controller {
                safeclf::ControllerKind::QpEllipsoid(e) => Some(e),
                _ => None,
            },
            _ => None,
        };
        let traces: Vec<SvgTrace<'_>> = outcomes
            .iter()
            .map(|o| SvgTrace {
                traj: o.trajectory(),
                verdict: o.result.as_ref().ok().map(|t| t.verdict),
            })
            .collect();
        let target = nalgebra::DVector::from_vec(cfg.target.clone());
        let svg = emit_svg(&traces, &polytope, ellipse.as_ref(), &target)?;
        let path = out_dir.join(format!("{name}.svg"));
        write_file(&path, svg.as_bytes())?;
        files.push(path);
    }

    Ok(BatchReport {
        rows,
        outcomes,
        files,
    })
}
