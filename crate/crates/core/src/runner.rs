//! Batch pipelines behind the command line: solve, variation and Gateaux
//! checks, and the extremal search, each writing its artifacts to the run's
//! output directory.
//!
//! Every emitted number comes from a fixed-order computation, so an identical
//! configuration reproduces identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{has_errors, Mode, RunConfig};
use crate::error::{Error, Result};
use crate::extremal::{
    check_directions, check_max_principle, euler_defect, gateaux_check, run_fixed_point, write_gateaux_csv,
    write_run_log, DirectionReport, ExtremalReport, MaxPrincipleReport,
};
use crate::solver::solve;
use crate::transforms::TransformPlan;
use crate::variation::{finite_difference_variation, write_convergence_csv, VariationDirection};

/// Process exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Ok = 0,
    /// Anything not covered below, e.g. an I/O failure.
    Failure = 1,
    Config = 2,
    Solver = 3,
    Degeneracy = 4,
    ExtremalNonConvergence = 5,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    /// Classifies an error raised while the numerics were running.
    pub fn of(error: &Error) -> Self {
        match error {
            Error::Convergence { .. } | Error::DegenerateNormalization(_) | Error::Regularity { .. } => {
                ExitStatus::Solver
            }
            Error::Degeneracy(_) => ExitStatus::Degeneracy,
            Error::Oscillation { .. } => ExitStatus::ExtremalNonConvergence,
            Error::FixedPoint { source, .. } => match ExitStatus::of(source) {
                status @ (ExitStatus::Solver | ExitStatus::Degeneracy) => status,
                _ => ExitStatus::ExtremalNonConvergence,
            },
            Error::Io(_) => ExitStatus::Failure,
            Error::Config(_) => ExitStatus::Config,
            _ => ExitStatus::Failure,
        }
    }
}

/// A failed run: the status to exit with and the cause.
#[derive(Debug)]
pub struct RunFailure {
    pub status: ExitStatus,
    pub error: Error,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.error)
    }
}

impl std::error::Error for RunFailure {}

impl RunFailure {
    fn config(error: Error) -> Self {
        RunFailure { status: ExitStatus::Config, error }
    }
}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        RunFailure { status: ExitStatus::of(&error), error }
    }
}

/// What a successful run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    /// A one-line human-readable result.
    pub summary: String,
}

/// Pass/fail summary written at the end of an extremal search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtremalSummary {
    pub converged: bool,
    pub iterations: usize,
    pub final_report: ExtremalReport,
    pub max_principle: MaxPrincipleReport,
    pub directions: DirectionReport,
    pub euler_l2: f64,
    pub euler_max: f64,
    pub euler_bound: f64,
    pub euler_passed: bool,
    pub passed: bool,
}

/// Validates `config` and runs its pipeline. `out` overrides the configured
/// output directory.
pub fn run(config: &RunConfig, out: Option<&Path>) -> std::result::Result<RunOutcome, RunFailure> {
    let diagnostics = config.validate();
    if has_errors(&diagnostics) {
        let text: Vec<String> = diagnostics.iter().map(ToString::to_string).collect();
        return Err(RunFailure::config(Error::Config(text.join("; "))));
    }
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| config.output_dir());
    std::fs::create_dir_all(&dir).map_err(Error::from)?;
    let mut outcome = RunOutcome { output_dir: dir.clone(), files: Vec::new(), summary: String::new() };
    match config.mode {
        Mode::Solve => run_solve(config, &dir, &mut outcome)?,
        Mode::VariationCheck => run_variation(config, &dir, &mut outcome)?,
        Mode::GateauxCheck => run_gateaux(config, &dir, &mut outcome)?,
        Mode::Extremal => run_extremal(config, &dir, &mut outcome)?,
    }
    Ok(outcome)
}

fn csv_file(dir: &Path, name: &str, outcome: &mut RunOutcome) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    outcome.files.push(path.clone());
    Ok(BufWriter::new(File::create(path)?))
}

fn solution_files(dir: &Path, stem: &str, outcome: &mut RunOutcome) {
    for suffix in ["f.cfld", "f_z.cfld", "f_zbar.cfld", "summary.json"] {
        outcome.files.push(dir.join(format!("{stem}_{suffix}")));
    }
}

fn write_json<T: Serialize>(path: PathBuf, value: &T, outcome: &mut RunOutcome) -> Result<()> {
    std::fs::write(&path, serde_json::to_string_pretty(value)? + "\n")?;
    outcome.files.push(path);
    Ok(())
}

/// Inputs that must build before any numerics; their failures are
/// configuration errors.
struct Setup {
    plan: TransformPlan,
    coeff: crate::solver::Coefficient,
}

fn setup(config: &RunConfig) -> std::result::Result<Setup, RunFailure> {
    let spec = config.grid_spec().map_err(RunFailure::config)?;
    let coeff = config.coefficient(spec).map_err(RunFailure::config)?;
    Ok(Setup { plan: TransformPlan::new(spec), coeff })
}

fn direction(config: &RunConfig, setup: &Setup) -> std::result::Result<VariationDirection, RunFailure> {
    let spec = *setup.coeff.spec();
    let build = || -> Result<VariationDirection> {
        let nu = config.direction_nu(setup.coeff.mu())?;
        let fam = config.constraint_family(spec)?;
        VariationDirection::new(setup.coeff.mu(), &nu, fam.as_ref())
    };
    build().map_err(RunFailure::config)
}

fn run_solve(config: &RunConfig, dir: &Path, outcome: &mut RunOutcome) -> std::result::Result<(), RunFailure> {
    let s = setup(config)?;
    let sol = solve(&s.plan, &s.coeff, config.solver)?;
    s.coeff.mu().save(dir.join("mu.cfld"))?;
    outcome.files.push(dir.join("mu.cfld"));
    sol.save(dir, "solution")?;
    solution_files(dir, "solution", outcome);
    outcome.summary = format!("solved with {} Neumann terms, residual {:e}", sol.neumann_terms(), sol.residual());
    Ok(())
}

fn run_variation(config: &RunConfig, dir: &Path, outcome: &mut RunOutcome) -> std::result::Result<(), RunFailure> {
    let s = setup(config)?;
    let dir_v = direction(config, &s)?;
    let epsilons = config.epsilons().map_err(RunFailure::config)?;
    let base = solve(&s.plan, &s.coeff, config.solver)?;
    let rows = finite_difference_variation(&s.plan, &base, &dir_v, epsilons, &config.targets(), config.solver)?;
    let mut out = csv_file(dir, "variation_convergence.csv", outcome)?;
    write_convergence_csv(&rows, &mut out)?;
    out.flush().map_err(Error::from)?;
    dir_v.nu().save(dir.join("nu.cfld"))?;
    outcome.files.push(dir.join("nu.cfld"));
    base.save(dir, "base")?;
    solution_files(dir, "base", outcome);
    let worst = rows.iter().map(|r| r.abs_err).fold(0.0, f64::max);
    outcome.summary = format!("{} rows, largest |fd - V| = {worst:e}", rows.len());
    Ok(())
}

fn run_gateaux(config: &RunConfig, dir: &Path, outcome: &mut RunOutcome) -> std::result::Result<(), RunFailure> {
    let s = setup(config)?;
    let dir_v = direction(config, &s)?;
    let functional = config.functional().map_err(RunFailure::config)?;
    let epsilons = config.epsilons().map_err(RunFailure::config)?;
    let base = solve(&s.plan, &s.coeff, config.solver)?;
    let rows = gateaux_check(&s.plan, &functional, &base, &dir_v, epsilons, config.solver)?;
    let mut out = csv_file(dir, "gateaux.csv", outcome)?;
    write_gateaux_csv(&rows, &mut out)?;
    out.flush().map_err(Error::from)?;
    let worst = rows.iter().map(|r| r.abs_err).fold(0.0, f64::max);
    outcome.summary = format!("{} rows, largest |fd - predicted| = {worst:e}", rows.len());
    Ok(())
}

fn run_extremal(config: &RunConfig, dir: &Path, outcome: &mut RunOutcome) -> std::result::Result<(), RunFailure> {
    let spec = config.grid_spec().map_err(RunFailure::config)?;
    let fam = config
        .constraint_family(spec)
        .map_err(RunFailure::config)?
        .ok_or_else(|| RunFailure::config(Error::Config("missing [constraint]".into())))?;
    let functional = config.functional().map_err(RunFailure::config)?;
    let plan = TransformPlan::new(spec);
    let fp = config.fixed_point;

    let result = run_fixed_point(&plan, &fam, &functional, fp.options(), config.solver);
    let run = match result {
        Ok(run) => run,
        Err(error) => {
            // Keep the partial log for diagnosis before failing.
            if let Error::FixedPoint { reports, .. } | Error::Oscillation { reports } = &error {
                let mut out = csv_file(dir, "run_log.csv", outcome)?;
                write_run_log(reports, &mut out)?;
                out.flush().map_err(Error::from)?;
            }
            return Err(error.into());
        }
    };

    let mut out = csv_file(dir, "run_log.csv", outcome)?;
    write_run_log(&run.reports, &mut out)?;
    out.flush().map_err(Error::from)?;
    run.mu.save(dir.join("extremal_mu.cfld"))?;
    outcome.files.push(dir.join("extremal_mu.cfld"));
    run.solution.save(dir, "final")?;
    solution_files(dir, "final", outcome);

    let max_principle = check_max_principle(&run.mu, &fam, &run.b, fp.active_tol, fp.boundary_tol)?;
    let directions = check_directions(&run.mu, &fam, &run.b, fp.direction_samples, fp.active_tol, fp.direction_tol)?;
    let euler = euler_defect(&run.mu, &fam, &run.solution, &run.b, fp.active_tol)?;
    let euler_bound = fp.euler_tol * run.solution.f_z().sup_norm();
    let euler_passed = euler.l2 <= euler_bound;
    let summary = ExtremalSummary {
        converged: run.converged,
        iterations: run.reports.len(),
        final_report: run.reports.last().cloned().expect("at least one iteration"),
        passed: run.converged && max_principle.passed && directions.passed && euler_passed,
        max_principle,
        directions,
        euler_l2: euler.l2,
        euler_max: euler.max,
        euler_bound,
        euler_passed,
    };
    write_json(dir.join("extremal_summary.json"), &summary, outcome)?;
    outcome.summary = format!(
        "{} after {} iterations; checks {}",
        if summary.converged { "converged" } else { "not converged" },
        summary.iterations,
        if summary.passed { "passed" } else { "failed" }
    );
    if !run.converged {
        return Err(RunFailure {
            status: ExitStatus::ExtremalNonConvergence,
            error: Error::FixedPoint {
                source: Box::new(Error::Range(format!(
                    "step change {:e} still above {:e}",
                    summary.final_report.step_change, fp.tol
                ))),
                reports: run.reports,
            },
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_status_classification() {
        assert_eq!(ExitStatus::of(&Error::Convergence { history: vec![1.0] }), ExitStatus::Solver);
        assert_eq!(ExitStatus::of(&Error::Degeneracy("x".into())), ExitStatus::Degeneracy);
        assert_eq!(ExitStatus::of(&Error::Oscillation { reports: vec![] }), ExitStatus::ExtremalNonConvergence);
        let wrapped = |source: Error| Error::FixedPoint { source: Box::new(source), reports: vec![] };
        assert_eq!(ExitStatus::of(&wrapped(Error::Degeneracy("x".into()))), ExitStatus::Degeneracy);
        assert_eq!(ExitStatus::of(&wrapped(Error::Convergence { history: vec![] })), ExitStatus::Solver);
        assert_eq!(ExitStatus::of(&wrapped(Error::Range("x".into()))), ExitStatus::ExtremalNonConvergence);
        assert_eq!(
            [
                ExitStatus::Ok,
                ExitStatus::Config,
                ExitStatus::Solver,
                ExitStatus::Degeneracy,
                ExitStatus::ExtremalNonConvergence
            ]
            .map(ExitStatus::code),
            [0, 2, 3, 4, 5]
        );
    }

    #[test]
    fn invalid_config_fails_with_config_status() {
        let config = RunConfig::from_toml(
            "mode = \"variation_check\"\n[grid]\ncenter = [0.5, 0.0]\nhalf_width = 4.0\nn = 16\n",
            ".",
        )
        .unwrap();
        let dir = std::env::temp_dir().join("beltrami-runner-invalid");
        let err = run(&config, Some(&dir)).unwrap_err();
        assert_eq!(err.status, ExitStatus::Config);
    }
}
