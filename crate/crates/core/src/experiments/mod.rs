//! Convergence studies against a high-accuracy reference.
//!
//! A [`Study`] owns one flow cache per step size and runs independent
//! (scheme, correction, τ) configurations through [`ExecutionMode`].

mod format;
mod implicit;
mod reference;

use std::fmt::Write as _;
use std::str::FromStr;

use crate::constraint::ConstrainedSystem;
use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::problems::subset_perturbation;
use crate::splitting::{integrate_with, CorrectionKind, Recording, Scheme, SchemeConfig, Trajectory};
use crate::subflows::{LinearFlowCache, DEFAULT_REACTION_SUBSTEPS};

pub use format::{csv_cell, order_cell, sci4};
pub use implicit::{ImplicitRun, ThetaMethod};
pub use reference::{reference_solution, CrossCheck, ReferenceConfig, ReferenceSolution, REFERENCE_REFINEMENT};

/// How independent runs are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutionMode {
    Sequential,
    /// Data-parallel over runs; falls back to sequential when the crate is
    /// built without the `parallel` feature.
    Parallel,
}

impl Default for ExecutionMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecutionMode::Parallel
        } else {
            ExecutionMode::Sequential
        }
    }
}

impl ExecutionMode {
    /// Order-preserving map.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            ExecutionMode::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }
}

/// `log2(err_coarse / err_fine)`
pub fn order_estimate(err_coarse: f64, err_fine: f64) -> Result<f64> {
    if !(err_coarse > 0.0) || !(err_fine > 0.0) {
        return Err(Error::Domain(format!(
            "order needs positive errors, got {err_coarse:e} and {err_fine:e}"
        )));
    }
    Ok((err_coarse / err_fine).log2())
}

/// Least-squares slope of `log err` against `log τ`.
pub fn fit_slope(taus: &[f64], errors: &[f64]) -> Result<f64> {
    if taus.len() != errors.len() {
        return Err(Error::Dimension {
            context: "slope fit",
            expected: taus.len(),
            found: errors.len(),
        });
    }
    if taus.len() < 2 {
        return Err(Error::Config("need ≥ 2 step sizes for a slope".into()));
    }
    if taus.iter().chain(errors).any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("slope fit needs positive step sizes and errors".into()));
    }
    let xs: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// Checks a step list: nonempty, positive, halving.
pub fn validate_taus(taus: &[f64]) -> Result<()> {
    if taus.is_empty() {
        return Err(Error::Config("no step sizes".into()));
    }
    if let Some(t) = taus.iter().find(|t| !(**t > 0.0) || !t.is_finite()) {
        return Err(Error::Config(format!("step sizes must be positive, got {t}")));
    }
    for w in taus.windows(2) {
        if ((w[0] / w[1]) - 2.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "step sizes must halve, got {:e} then {:e}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// `τ, τ/2, …` with `count` entries.
pub fn halving_chain(start: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start / f64::powi(2.0, k as i32)).collect()
}

/// Where the error of a run is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormConvention {
    #[default]
    FinalTime,
    MaxOverTime,
}

impl NormConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            NormConvention::FinalTime => "final",
            NormConvention::MaxOverTime => "max-time",
        }
    }
}

impl FromStr for NormConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "final" => Ok(NormConvention::FinalTime),
            "max-time" | "max" => Ok(NormConvention::MaxOverTime),
            other => Err(Error::Config(format!("unknown norm convention '{other}'"))),
        }
    }
}

/// Spatial `ℓ∞` and `h`-weighted `ℓ2` error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub linf: f64,
    pub l2: f64,
}

impl ErrorNorms {
    fn between(a: &DenseVector, b: &DenseVector, h: f64) -> Self {
        let d = a.sub(b);
        ErrorNorms {
            linf: d.norm_inf(),
            l2: d.norm_l2_scaled(h),
        }
    }

    fn max(self, other: ErrorNorms) -> Self {
        ErrorNorms {
            linf: self.linf.max(other.linf),
            l2: self.l2.max(other.l2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub tau: f64,
    pub final_time: Option<ErrorNorms>,
    pub max_time: Option<ErrorNorms>,
    pub order_linf: Option<f64>,
    pub order_l2: Option<f64>,
    pub max_constraint_residual: Option<f64>,
    /// Why the run produced no errors.
    pub diagnostic: Option<String>,
    pub trajectory: Option<Trajectory>,
}

impl ConvergenceRow {
    pub fn errors(&self, norm: NormConvention) -> Option<ErrorNorms> {
        match norm {
            NormConvention::FinalTime => self.final_time,
            NormConvention::MaxOverTime => self.max_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub problem: String,
    pub scheme: Scheme,
    pub correction: &'static str,
    pub norm: NormConvention,
    pub reference_tau: f64,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    pub fn taus(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.tau).collect()
    }

    pub fn err_linf(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.errors(self.norm).map(|e| e.linf)).collect()
    }

    pub fn err_l2(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.errors(self.norm).map(|e| e.l2)).collect()
    }

    pub fn orders_linf(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.order_linf).collect()
    }

    pub fn orders_l2(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.order_l2).collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = (f64, &str)> {
        self.rows
            .iter()
            .filter_map(|r| r.diagnostic.as_deref().map(|d| (r.tau, d)))
    }

    /// Least-squares order of the `ℓ∞` errors over all rows.
    pub fn fitted_order(&self) -> Result<f64> {
        let pairs: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter_map(|r| r.errors(self.norm).map(|e| (r.tau, e.linf)))
            .collect();
        let (taus, errs): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        fit_slope(&taus, &errs)
    }

    /// `tau,err_linf,err_l2,order_linf,order_l2`, full precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,err_linf,err_l2,order_linf,order_l2\n");
        for r in &self.rows {
            let e = r.errors(self.norm);
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                csv_cell(Some(r.tau)),
                csv_cell(e.map(|e| e.linf)),
                csv_cell(e.map(|e| e.l2)),
                csv_cell(r.order_linf),
                csv_cell(r.order_l2)
            );
        }
        out
    }

    /// Plain-text table in the layout of a convergence history.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} / {} / q = {} (error at {}, reference tau {})\n",
            self.problem,
            self.scheme,
            self.correction,
            self.norm.as_str(),
            sci4(self.reference_tau)
        );
        let _ = writeln!(
            out,
            "{:<11} | {:>11} {:>6} | {:>11} {:>6}",
            "step size", "linf error", "order", "l2 error", "order"
        );
        for r in &self.rows {
            match r.errors(self.norm) {
                Some(e) => {
                    let _ = writeln!(
                        out,
                        "{:<11} | {:>11} {:>6} | {:>11} {:>6}",
                        sci4(r.tau),
                        sci4(e.linf),
                        order_cell(r.order_linf),
                        sci4(e.l2),
                        order_cell(r.order_l2)
                    );
                }
                None => {
                    let _ = writeln!(
                        out,
                        "{:<11} | failed: {}",
                        sci4(r.tau),
                        r.diagnostic.as_deref().unwrap_or("unknown")
                    );
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalOrderReport {
    pub problem: String,
    pub scheme: Scheme,
    pub correction: &'static str,
    pub t_anchor: f64,
    pub taus: Vec<f64>,
    /// One-step `ℓ∞` errors.
    pub errors: Vec<f64>,
    /// `None` when some error vanishes.
    pub slope: Option<f64>,
}

impl LocalOrderReport {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().fold(0.0, |a, &b| a.max(b))
    }

    /// `tau,local_err` rows and a `# slope=` footer.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,local_err\n");
        for (t, e) in self.taus.iter().zip(&self.errors) {
            let _ = writeln!(out, "{},{}", csv_cell(Some(*t)), csv_cell(Some(*e)));
        }
        let _ = writeln!(
            out,
            "# slope={}",
            self.slope.map_or_else(|| "nan".to_string(), |s| format!("{s:e}"))
        );
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyOptions {
    pub substeps: usize,
    pub norm: NormConvention,
    pub mode: ExecutionMode,
    /// Keep each run's trajectory in its report row.
    pub keep_trajectories: bool,
    pub record_multipliers: bool,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            substeps: DEFAULT_REACTION_SUBSTEPS,
            norm: NormConvention::FinalTime,
            mode: ExecutionMode::default(),
            keep_trajectories: false,
            record_multipliers: false,
        }
    }
}

/// A system, its reference and the flow caches for a halving chain of
/// step sizes.
#[derive(Debug)]
pub struct Study<'a> {
    sys: &'a ConstrainedSystem,
    reference: &'a ReferenceSolution,
    taus: Vec<f64>,
    caches: Vec<LinearFlowCache>,
    options: StudyOptions,
}

impl<'a> Study<'a> {
    pub fn new(
        sys: &'a ConstrainedSystem,
        reference: &'a ReferenceSolution,
        taus: &[f64],
        options: StudyOptions,
    ) -> Result<Self> {
        validate_taus(taus)?;
        for &tau in taus {
            let k = tau / reference.spacing;
            if (k - k.round()).abs() > 1e-9 || k.round() < 1.0 {
                return Err(Error::Config(format!(
                    "step {tau:e} is not a multiple of the reference spacing {:e}",
                    reference.spacing
                )));
            }
        }
        if (reference.t_end() - sys.t_end()).abs() > 1e-9 * sys.t_end().abs().max(1.0)
            || reference.t_start != sys.t_start()
        {
            return Err(Error::Config("reference does not cover the system's time span".into()));
        }
        let caches = options
            .mode
            .map(taus, |&tau| LinearFlowCache::new(sys, tau))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(Study {
            sys,
            reference,
            taus: taus.to_vec(),
            caches,
            options,
        })
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn system(&self) -> &ConstrainedSystem {
        self.sys
    }

    pub fn reference(&self) -> &ReferenceSolution {
        self.reference
    }

    pub fn options(&self) -> StudyOptions {
        self.options
    }

    /// Global errors of one scheme over all step sizes. Numerical failures
    /// become rows without errors.
    pub fn global(&self, scheme: Scheme, correction: &CorrectionKind) -> Result<ConvergenceReport> {
        let idx: Vec<usize> = (0..self.taus.len()).collect();
        let outcomes = self.options.mode.map(&idx, |&i| self.global_row(scheme, correction, i));
        let mut rows = Vec::with_capacity(outcomes.len());
        for outcome in outcomes {
            rows.push(outcome?);
        }
        let norm = self.options.norm;
        for i in 1..rows.len() {
            let (prev, cur) = (rows[i - 1].errors(norm), rows[i].errors(norm));
            if let (Some(a), Some(b)) = (prev, cur) {
                rows[i].order_linf = order_estimate(a.linf, b.linf).ok();
                rows[i].order_l2 = order_estimate(a.l2, b.l2).ok();
            }
        }
        Ok(ConvergenceReport {
            problem: self.sys.name().to_string(),
            scheme,
            correction: correction.label(),
            norm,
            reference_tau: self.reference.tau_ref,
            rows,
        })
    }

    fn global_row(&self, scheme: Scheme, correction: &CorrectionKind, i: usize) -> Result<ConvergenceRow> {
        let tau = self.taus[i];
        let cfg = SchemeConfig::new(scheme, correction.clone(), tau).with_substeps(self.options.substeps);
        let rec = Recording {
            every: 1,
            multipliers: self.options.record_multipliers,
        };
        let mut row = ConvergenceRow {
            tau,
            final_time: None,
            max_time: None,
            order_linf: None,
            order_l2: None,
            max_constraint_residual: None,
            diagnostic: None,
            trajectory: None,
        };
        let traj = match integrate_with(self.sys, &cfg, &self.caches[i], rec) {
            Ok(traj) => traj,
            Err(e) if e.is_numerical() => {
                row.diagnostic = Some(e.to_string());
                return Ok(row);
            }
            Err(e) => return Err(e),
        };
        let h = self.sys.grid().h;
        let mut worst = ErrorNorms { linf: 0.0, l2: 0.0 };
        for (t, u) in traj.times.iter().zip(&traj.states) {
            worst = worst.max(ErrorNorms::between(u, self.reference.at(*t)?, h));
        }
        let last = ErrorNorms::between(traj.final_state(), self.reference.at(traj.final_time())?, h);
        row.final_time = Some(last);
        row.max_time = Some(worst);
        row.max_constraint_residual = Some(traj.max_constraint_residual());
        if self.options.keep_trajectories {
            row.trajectory = Some(traj);
        }
        Ok(row)
    }

    /// One step from the reference state at `t_anchor` for every step size.
    pub fn local(&self, scheme: Scheme, correction: &CorrectionKind, t_anchor: f64) -> Result<LocalOrderReport> {
        if self.taus.len() < 2 {
            return Err(Error::Config("need ≥ 2 step sizes for a slope".into()));
        }
        let start = self.reference.at(t_anchor)?;
        let idx: Vec<usize> = (0..self.taus.len()).collect();
        let errors = self
            .options
            .mode
            .map(&idx, |&i| -> Result<f64> {
                let tau = self.taus[i];
                let cfg = SchemeConfig::new(scheme, correction.clone(), tau).with_substeps(self.options.substeps);
                let end = self.reference.at(t_anchor + tau)?;
                let out = cfg.step(self.sys, &self.caches[i], t_anchor, start)?;
                Ok(out.max_abs_diff(end))
            })
            .into_iter()
            .collect::<Result<Vec<f64>>>()?;
        let slope = fit_slope(&self.taus, &errors).ok();
        Ok(LocalOrderReport {
            problem: self.sys.name().to_string(),
            scheme,
            correction: correction.label(),
            t_anchor,
            taus: self.taus.clone(),
            errors,
            slope,
        })
    }

    /// Strang with `f(u_n)` (A), `f(u_n) + p` (B) and `f(D⁻G(t_n))` (C).
    pub fn correction_comparison(&self, perturbation: DenseVector) -> Result<CorrectionComparison> {
        let kinds = [
            CorrectionKind::NonlinearAtState,
            CorrectionKind::PerturbedAtState(perturbation),
            CorrectionKind::NonlinearAtConstraint,
        ];
        let mut reports = self
            .options
            .mode
            .map(&kinds, |k| self.global(Scheme::Strang, k))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let c = reports.pop().expect("three reports");
        let b = reports.pop().expect("three reports");
        let a = reports.pop().expect("three reports");
        Ok(CorrectionComparison { a, b, c })
    }

    /// Local and global orders of all four schemes with `q = 0` and
    /// `q = f(u_n)`.
    pub fn order_table(&self, t_anchor: f64) -> Result<OrderTable> {
        let columns: Vec<(Scheme, CorrectionKind)> = Scheme::ALL
            .iter()
            .flat_map(|&s| [(s, CorrectionKind::None), (s, CorrectionKind::NonlinearAtState)])
            .collect();
        let results = self
            .options
            .mode
            .map(&columns, |(s, k)| -> Result<(LocalOrderReport, ConvergenceReport)> {
                Ok((self.local(*s, k, t_anchor)?, self.global(*s, k)?))
            });
        let mut local = Vec::with_capacity(columns.len());
        let mut global = Vec::with_capacity(columns.len());
        for r in results {
            let (l, g) = r?;
            local.push(l);
            global.push(g);
        }
        Ok(OrderTable { local, global })
    }
}

/// One global study against `reference`.
pub fn global_convergence(
    sys: &ConstrainedSystem,
    scheme: Scheme,
    correction: &CorrectionKind,
    taus: &[f64],
    reference: &ReferenceSolution,
    options: StudyOptions,
) -> Result<ConvergenceReport> {
    Study::new(sys, reference, taus, options)?.global(scheme, correction)
}

pub fn local_order(
    sys: &ConstrainedSystem,
    scheme: Scheme,
    correction: &CorrectionKind,
    taus: &[f64],
    t_anchor: f64,
    reference: &ReferenceSolution,
    options: StudyOptions,
) -> Result<LocalOrderReport> {
    Study::new(sys, reference, taus, options)?.local(scheme, correction, t_anchor)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionComparison {
    pub a: ConvergenceReport,
    pub b: ConvergenceReport,
    pub c: ConvergenceReport,
}

/// Corrections A, B, C on the subset problem with its standard
/// perturbation.
pub fn correction_comparison(
    sys_subset: &ConstrainedSystem,
    taus: &[f64],
    reference: &ReferenceSolution,
    options: StudyOptions,
) -> Result<CorrectionComparison> {
    let study = Study::new(sys_subset, reference, taus, options)?;
    study.correction_comparison(subset_perturbation(sys_subset))
}

/// Local and global orders, columns ordered as
/// `(lie, 0), (lie, f), (lie-reversed, 0), …, (strang-reversed, f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderTable {
    pub local: Vec<LocalOrderReport>,
    pub global: Vec<ConvergenceReport>,
}

impl OrderTable {
    pub fn local_slopes(&self) -> Vec<Option<f64>> {
        self.local.iter().map(|r| r.slope).collect()
    }

    pub fn global_slopes(&self) -> Vec<Option<f64>> {
        self.global.iter().map(|r| r.fitted_order().ok()).collect()
    }

    /// Largest one-step error over all columns.
    pub fn max_local_error(&self) -> f64 {
        self.local.iter().fold(0.0, |a, r| a.max(r.max_error()))
    }

    fn header(&self) -> String {
        self.local
            .iter()
            .map(|r| {
                let q = if r.correction == "none" { "0" } else { "f(u_n)" };
                format!("{}/{}", r.scheme, q)
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Rounded orders, one row for local and one for global errors.
    pub fn to_text(&self) -> String {
        let cells = |slopes: Vec<Option<f64>>| -> String {
            slopes
                .into_iter()
                .map(|s| s.map_or_else(|| "?".to_string(), |v| format!("{}", v.round() as i64)))
                .collect::<Vec<_>>()
                .join(" ")
        };
        format!(
            "# columns: {}\nlocal  {}\nglobal {}\n",
            self.header(),
            cells(self.local_slopes()),
            cells(self.global_slopes())
        )
    }

    /// Raw slopes before rounding.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,scheme,correction,slope\n");
        for (kind, reports) in [("local", self.local_slopes()), ("global", self.global_slopes())] {
            for (r, s) in self.local.iter().zip(reports) {
                let _ = writeln!(out, "{kind},{},{},{}", r.scheme, r.correction, csv_cell(s));
            }
        }
        out
    }
}
