use crate::constraint::ConstrainedSystem;
use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::splitting::{integrate_with, step_count, CorrectionKind, Recording, Scheme, SchemeConfig};
use crate::subflows::{LinearFlowCache, DEFAULT_REACTION_SUBSTEPS};

use super::implicit::ThetaMethod;
use super::ExecutionMode;

/// Ratio between the finest study step and the reference step.
pub const REFERENCE_REFINEMENT: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceConfig {
    pub tau_ref: f64,
    /// Spacing of the stored states (the finest study step).
    pub spacing: f64,
    pub substeps: usize,
    pub cross_check: bool,
    pub mode: ExecutionMode,
}

impl ReferenceConfig {
    /// `τ_ref = finest / 20`, states stored every `finest`.
    pub fn for_finest_step(finest: f64) -> Self {
        ReferenceConfig {
            tau_ref: finest / REFERENCE_REFINEMENT,
            spacing: finest,
            substeps: DEFAULT_REACTION_SUBSTEPS,
            cross_check: true,
            mode: ExecutionMode::default(),
        }
    }

    pub fn with_tau_ref(mut self, tau_ref: f64) -> Self {
        self.tau_ref = tau_ref;
        self
    }

    pub fn with_cross_check(mut self, cross_check: bool) -> Self {
        self.cross_check = cross_check;
        self
    }

    pub fn with_mode(mut self, mode: ExecutionMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps;
        self
    }
}

/// Outcome of comparing the splitting reference with the trapezoidal
/// index-2 solver at the same step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossCheck {
    /// Max over stored times of `|u_strang - u_trapezoidal|∞`.
    pub discrepancy: f64,
    /// Richardson estimate of the splitting reference error.
    pub strang_estimate: f64,
    /// Richardson estimate of the trapezoidal error.
    pub implicit_estimate: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub tau_ref: f64,
    pub t_start: f64,
    pub spacing: f64,
    pub states: Vec<DenseVector>,
    pub cross_check: Option<CrossCheck>,
}

impl ReferenceSolution {
    /// The stored state at `t`, which must be a multiple of the spacing.
    pub fn at(&self, t: f64) -> Result<&DenseVector> {
        let x = (t - self.t_start) / self.spacing;
        let k = x.round();
        if k < 0.0 || (x - k).abs() > 1e-9 || k as usize >= self.states.len() {
            return Err(Error::OffReferenceGrid(t));
        }
        Ok(&self.states[k as usize])
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.states.len()).map(move |k| self.t_start + k as f64 * self.spacing)
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + (self.states.len() - 1) as f64 * self.spacing
    }

    pub fn final_state(&self) -> &DenseVector {
        self.states.last().expect("reference holds the initial state")
    }
}

/// Corrected Strang splitting at `τ_ref`, stored every `spacing`,
/// optionally cross-validated against the trapezoidal index-2 solver.
pub fn reference_solution(sys: &ConstrainedSystem, config: &ReferenceConfig) -> Result<ReferenceSolution> {
    let ReferenceConfig { tau_ref, spacing, .. } = *config;
    if !(spacing > 0.0) || !(tau_ref > 0.0) {
        return Err(Error::Domain("reference step and spacing must be positive".into()));
    }
    if tau_ref > spacing / REFERENCE_REFINEMENT * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "reference step {tau_ref:e} exceeds the finest study step {spacing:e} / {REFERENCE_REFINEMENT}"
        )));
    }
    let per_sample = step_count(tau_ref, spacing)?;
    step_count(spacing, sys.t_end() - sys.t_start())?;

    let strang = |tau: f64, every: usize| -> Result<Vec<DenseVector>> {
        let cfg =
            SchemeConfig::new(Scheme::Strang, CorrectionKind::NonlinearAtState, tau).with_substeps(config.substeps);
        let cache = LinearFlowCache::new(sys, tau)?;
        let rec = Recording {
            every,
            multipliers: false,
        };
        Ok(integrate_with(sys, &cfg, &cache, rec)?.states)
    };

    if !config.cross_check {
        return Ok(ReferenceSolution {
            tau_ref,
            t_start: sys.t_start(),
            spacing,
            states: strang(tau_ref, per_sample)?,
            cross_check: None,
        });
    }
    if per_sample % 2 != 0 {
        return Err(Error::Config(format!(
            "cross-check needs an even number of reference steps per stored state, got {per_sample}"
        )));
    }

    #[derive(Clone, Copy)]
    enum Run {
        Strang(f64, usize),
        Trapezoidal(f64, usize),
    }
    let runs = [
        Run::Strang(tau_ref, per_sample),
        Run::Strang(2.0 * tau_ref, per_sample / 2),
        Run::Trapezoidal(tau_ref, per_sample),
        Run::Trapezoidal(2.0 * tau_ref, per_sample / 2),
    ];
    let mut results = config
        .mode
        .map(&runs, |run| match *run {
            Run::Strang(tau, every) => strang(tau, every),
            Run::Trapezoidal(tau, every) => ThetaMethod::trapezoidal(tau).run(sys, every).map(|r| r.states),
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let trap_coarse = results.pop().expect("four runs");
    let trap = results.pop().expect("four runs");
    let strang_coarse = results.pop().expect("four runs");
    let states = results.pop().expect("four runs");

    let max_diff = |a: &[DenseVector], b: &[DenseVector]| -> f64 {
        a.iter().zip(b).fold(0.0, |acc, (x, y)| acc.max(x.max_abs_diff(y)))
    };
    let scale = states.iter().fold(1.0_f64, |acc, s| acc.max(s.norm_inf()));
    let strang_estimate = max_diff(&states, &strang_coarse) / 3.0;
    let implicit_estimate = max_diff(&trap, &trap_coarse) / 3.0;
    let discrepancy = max_diff(&states, &trap);
    let bound = 10.0 * (strang_estimate + implicit_estimate + 1e-13 * scale);
    if !(discrepancy <= bound) {
        return Err(Error::ReferenceUnreliable { discrepancy, bound });
    }
    Ok(ReferenceSolution {
        tau_ref,
        t_start: sys.t_start(),
        spacing,
        states,
        cross_check: Some(CrossCheck {
            discrepancy,
            strang_estimate,
            implicit_estimate,
            bound,
        }),
    })
}
