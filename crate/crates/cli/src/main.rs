use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use pdae_split::constraint::ConstrainedSystem;
use pdae_split::experiments::{
    csv_cell, reference_solution, sci4, validate_taus, ReferenceConfig, ReferenceSolution, Study, StudyOptions,
};
use pdae_split::problems::{subset_perturbation, ProblemKind, ProblemSpec};
use pdae_split::reaction::NoReaction;
use pdae_split::splitting::{integrate_with, CorrectionKind, Recording, SchemeConfig, Trajectory};
use pdae_split::subflows::{LinearFlowCache, DEFAULT_REACTION_SUBSTEPS};

mod config;

use config::{CorrectionArg, RunArgs, RunConfig, UsageError};

/// One-step errors below this are treated as exact composition.
const EXACT_LOCAL_ERROR: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(
    name = "pdae-split",
    version,
    about = "Splitting convergence studies for constrained reaction-diffusion systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Global errors and observed orders over a halving chain of steps.
    Convergence(RunArgs),
    /// One-step errors from the reference state and their fitted slope.
    LocalOrder(RunArgs),
    /// Rounded local and global orders of all schemes, with and without
    /// correction.
    Table3(RunArgs),
    /// Lagrange multipliers along a run.
    Multiplier(RunArgs),
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<pdae_split::Error> for Failure {
    fn from(e: pdae_split::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let reason = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[usage]: {}", reason.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let outcome = match cli.command {
        Command::Convergence(args) => convergence(args),
        Command::LocalOrder(args) => local_order(args),
        Command::Table3(args) => table3(args),
        Command::Multiplier(args) => multiplier(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error[usage]: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error[numerical]: {msg}");
            ExitCode::from(3)
        }
    }
}

fn default_chain(problem: ProblemKind) -> &'static str {
    match problem {
        ProblemKind::Mechanical => "4e-2:6",
        _ => "2e-2:6",
    }
}

fn build_system(cfg: &RunConfig) -> Result<ConstrainedSystem, Failure> {
    let mut spec = ProblemSpec::new(cfg.problem);
    if let Some(n) = cfg.n {
        spec = spec.with_grid(n);
    }
    if let Some(t) = cfg.t_end {
        spec = spec.with_t_end(t);
    }
    let sys = spec.build()?;
    Ok(if cfg.zero_reaction {
        sys.with_reaction(Arc::new(NoReaction))
    } else {
        sys
    })
}

fn correction_kind(cfg: &RunConfig, sys: &ConstrainedSystem) -> Result<CorrectionKind, Failure> {
    Ok(match cfg.correction {
        CorrectionArg::None => CorrectionKind::None,
        CorrectionArg::State => CorrectionKind::NonlinearAtState,
        CorrectionArg::Constraint => CorrectionKind::NonlinearAtConstraint,
        CorrectionArg::Perturbed => {
            if cfg.problem != ProblemKind::Subset {
                return Err(Failure::Usage(
                    "the perturbed correction is defined for the subset problem only".into(),
                ));
            }
            CorrectionKind::PerturbedAtState(subset_perturbation(sys))
        }
    })
}

fn options(cfg: &RunConfig) -> StudyOptions {
    StudyOptions {
        substeps: cfg.substeps.unwrap_or(DEFAULT_REACTION_SUBSTEPS),
        norm: cfg.norm,
        mode: cfg.mode,
        keep_trajectories: cfg.emit_multipliers || cfg.emit_residuals,
        record_multipliers: cfg.emit_multipliers,
    }
}

fn reference(cfg: &RunConfig, sys: &ConstrainedSystem) -> Result<ReferenceSolution, Failure> {
    let finest = cfg.taus.iter().copied().fold(f64::INFINITY, f64::min);
    let mut rc = ReferenceConfig::for_finest_step(finest)
        .with_cross_check(cfg.cross_check)
        .with_mode(cfg.mode)
        .with_substeps(cfg.substeps.unwrap_or(DEFAULT_REACTION_SUBSTEPS));
    if let Some(t) = cfg.tau_ref {
        rc = rc.with_tau_ref(t);
    }
    let r = reference_solution(sys, &rc)?;
    match r.cross_check {
        Some(c) => println!(
            "# reference tau {}: cross-check discrepancy {} (bound {})",
            sci4(r.tau_ref),
            sci4(c.discrepancy),
            sci4(c.bound)
        ),
        None => println!("# reference tau {}: not cross-checked", sci4(r.tau_ref)),
    }
    Ok(r)
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn residuals_csv(runs: &[&Trajectory]) -> String {
    let mut out = String::from("tau,t,residual\n");
    for traj in runs {
        for (t, r) in traj.times.iter().zip(&traj.constraint_residuals) {
            let _ = writeln!(
                out,
                "{},{},{}",
                csv_cell(Some(traj.tau)),
                csv_cell(Some(*t)),
                csv_cell(Some(*r))
            );
        }
    }
    out
}

fn multipliers_csv(runs: &[&Trajectory]) -> String {
    let mut out = String::from("tau,t,component,lambda_split,lambda_full\n");
    for traj in runs {
        let Some(series) = &traj.multipliers else { continue };
        for ((t, split), full) in traj.times.iter().zip(&series.split).zip(&series.full) {
            for (k, (s, f)) in split.iter().zip(full.iter()).enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{k},{},{}",
                    csv_cell(Some(traj.tau)),
                    csv_cell(Some(*t)),
                    csv_cell(Some(*s)),
                    csv_cell(Some(*f))
                );
            }
        }
    }
    out
}

fn write_sidecars(cfg: &RunConfig, runs: &[&Trajectory]) -> Result<(), Failure> {
    if cfg.emit_residuals {
        if let Some(path) = cfg.sidecar("residuals") {
            write(&path, &residuals_csv(runs))?;
        }
    }
    if cfg.emit_multipliers {
        if let Some(path) = cfg.sidecar("multipliers") {
            write(&path, &multipliers_csv(runs))?;
        }
    }
    Ok(())
}

fn convergence(args: RunArgs) -> Result<(), Failure> {
    let cfg = RunConfig::resolve(args, default_chain)?;
    validate_taus(&cfg.taus)?;
    let sys = build_system(&cfg)?;
    let kind = correction_kind(&cfg, &sys)?;
    let reference = reference(&cfg, &sys)?;
    let study = Study::new(&sys, &reference, &cfg.taus, options(&cfg))?;
    let report = study.global(cfg.scheme, &kind)?;
    print!("{}", report.to_text());
    if let Some(path) = &cfg.output {
        write(path, &report.to_csv())?;
    }
    let runs: Vec<&Trajectory> = report.rows.iter().filter_map(|r| r.trajectory.as_ref()).collect();
    write_sidecars(&cfg, &runs)?;

    let failures: Vec<String> = report
        .failures()
        .map(|(tau, why)| format!("tau {}: {why}", sci4(tau)))
        .collect();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(format!(
            "{} of {} runs failed; {}",
            failures.len(),
            report.rows.len(),
            failures.join("; ")
        )))
    }
}

fn slope_precheck(cfg: &RunConfig) -> Result<(), Failure> {
    validate_taus(&cfg.taus)?;
    if cfg.taus.len() < 2 {
        return Err(Failure::Usage("need ≥ 2 step sizes for a slope".into()));
    }
    Ok(())
}

fn local_order(args: RunArgs) -> Result<(), Failure> {
    let cfg = RunConfig::resolve(args, default_chain)?;
    slope_precheck(&cfg)?;
    let sys = build_system(&cfg)?;
    let kind = correction_kind(&cfg, &sys)?;
    let reference = reference(&cfg, &sys)?;
    let study = Study::new(&sys, &reference, &cfg.taus, options(&cfg))?;
    let report = study.local(cfg.scheme, &kind, cfg.anchor.unwrap_or(sys.t_start()))?;
    println!(
        "{} / {} / q = {}: one-step errors from t = {}",
        report.problem, report.scheme, report.correction, report.t_anchor
    );
    for (tau, err) in report.taus.iter().zip(&report.errors) {
        println!("{:<11} {:>11}", sci4(*tau), sci4(*err));
    }
    match report.slope {
        Some(s) => println!("slope {s:.3}"),
        None => println!("slope undefined (some one-step error vanishes)"),
    }
    if let Some(path) = &cfg.output {
        write(path, &report.to_csv())?;
    }
    Ok(())
}

fn table3(args: RunArgs) -> Result<(), Failure> {
    let cfg = RunConfig::resolve(args, default_chain)?;
    if cfg.problem != ProblemKind::IntegralMean {
        return Err(Failure::Usage("table3 runs on the integral-mean problem".into()));
    }
    slope_precheck(&cfg)?;
    let sys = build_system(&cfg)?;
    let reference = reference(&cfg, &sys)?;
    let study = Study::new(&sys, &reference, &cfg.taus, options(&cfg))?;
    let table = study.order_table(cfg.anchor.unwrap_or(sys.t_start()))?;
    let max_local = table.max_local_error();
    if max_local < EXACT_LOCAL_ERROR {
        println!(
            "note: all one-step errors are below {EXACT_LOCAL_ERROR:e} (largest {}); the subflows compose exactly and no orders are reported",
            sci4(max_local)
        );
    } else {
        print!("{}", table.to_text());
    }
    let sidecar = cfg.output.clone().unwrap_or_else(|| "table3_slopes.csv".into());
    write(&sidecar, &table.to_csv())
}

fn multiplier(args: RunArgs) -> Result<(), Failure> {
    let cfg = RunConfig::resolve(args, |_| "1e-2")?;
    validate_taus(&cfg.taus)?;
    let sys = build_system(&cfg)?;
    let kind = correction_kind(&cfg, &sys)?;
    let substeps = cfg.substeps.unwrap_or(DEFAULT_REACTION_SUBSTEPS);
    let runs = cfg
        .mode
        .map(&cfg.taus, |&tau| -> pdae_split::Result<Trajectory> {
            let sc = SchemeConfig::new(cfg.scheme, kind.clone(), tau).with_substeps(substeps);
            let cache = LinearFlowCache::new(&sys, tau)?;
            integrate_with(
                &sys,
                &sc,
                &cache,
                Recording {
                    every: 1,
                    multipliers: true,
                },
            )
        })
        .into_iter()
        .collect::<pdae_split::Result<Vec<_>>>()?;
    let refs: Vec<&Trajectory> = runs.iter().collect();
    for traj in &runs {
        let series = traj.multipliers.as_ref().expect("multipliers recorded");
        let gap = series
            .split
            .iter()
            .zip(&series.full)
            .fold(0.0_f64, |acc, (s, f)| acc.max(s.max_abs_diff(f)));
        println!(
            "{} / {} / q = {}: tau {}, {} multipliers of size {}, max |split - full| {}",
            sys.name(),
            cfg.scheme,
            kind.label(),
            sci4(traj.tau),
            series.full.len(),
            series.full.first().map_or(0, |v| v.len()),
            sci4(gap)
        );
    }
    match &cfg.output {
        Some(path) => write(path, &multipliers_csv(&refs))?,
        None => print!("{}", multipliers_csv(&refs)),
    }
    if cfg.emit_residuals {
        if let Some(path) = cfg.sidecar("residuals") {
            write(&path, &residuals_csv(&refs))?;
        }
    }
    Ok(())
}
