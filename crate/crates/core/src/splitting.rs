//! Lie and Strang splitting with a per-step correction `q_n`.
//!
//! A step combines the flow of the reaction ODE `w' = f(w) - q_n` with the
//! exact flow of the linear constrained system that carries `F + q_n` on
//! its right-hand side. `q_n` is frozen over the step.

use std::fmt;
use std::str::FromStr;

use crate::constraint::{recover_multiplier_with, ConstrainedSystem};
use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::subflows::{linear_pdae_flow, reaction_flow, LinearFlowCache, DEFAULT_REACTION_SUBSTEPS};

/// Choice of the correction `q_n`.
#[derive(Debug, Clone, PartialEq)]
pub enum CorrectionKind {
    /// `q_n = 0`
    None,
    /// `q_n = f(u_n)`
    NonlinearAtState,
    /// `q_n = f(D⁻G(t_n))`
    NonlinearAtConstraint,
    /// `q_n = f(u_n) + p`
    PerturbedAtState(DenseVector),
}

impl CorrectionKind {
    pub fn label(&self) -> &'static str {
        match self {
            CorrectionKind::None => "none",
            CorrectionKind::NonlinearAtState => "state",
            CorrectionKind::NonlinearAtConstraint => "constraint",
            CorrectionKind::PerturbedAtState(_) => "perturbed",
        }
    }
}

impl fmt::Display for CorrectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Evaluates `q_n` for the state `u_n` at `t_n`.
pub fn make_correction(
    kind: &CorrectionKind,
    sys: &ConstrainedSystem,
    u_n: &DenseVector,
    t_n: f64,
) -> Result<DenseVector> {
    u_n.check_len("correction state", sys.dim())?;
    Ok(match kind {
        CorrectionKind::None => DenseVector::zeros(sys.dim()),
        CorrectionKind::NonlinearAtState => sys.eval_reaction(u_n),
        CorrectionKind::NonlinearAtConstraint => {
            let lifted = sys.constraint().lift(&sys.g().eval(t_n));
            sys.eval_reaction(&lifted)
        }
        CorrectionKind::PerturbedAtState(p) => {
            p.check_len("correction perturbation", sys.dim())?;
            let mut q = sys.eval_reaction(u_n);
            q.axpy(1.0, p);
            q
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Reaction over `τ`, then the linear system over `τ`.
    Lie,
    /// Linear system, then reaction.
    LieReversed,
    /// Linear `τ/2`, reaction `τ`, linear `τ/2`.
    Strang,
    /// Reaction `τ/2`, linear `τ`, reaction `τ/2`.
    StrangReversed,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Lie, Scheme::LieReversed, Scheme::Strang, Scheme::StrangReversed];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Lie => "lie",
            Scheme::LieReversed => "lie-reversed",
            Scheme::Strang => "strang",
            Scheme::StrangReversed => "strang-reversed",
        }
    }

    /// Whether a step ends with the reaction flow, leaving the state
    /// off the constraint manifold.
    pub fn is_reversed(self) -> bool {
        matches!(self, Scheme::LieReversed | Scheme::StrangReversed)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lie" => Ok(Scheme::Lie),
            "lie-reversed" | "reversed-lie" => Ok(Scheme::LieReversed),
            "strang" => Ok(Scheme::Strang),
            "strang-reversed" | "reversed-strang" => Ok(Scheme::StrangReversed),
            other => Err(Error::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub correction: CorrectionKind,
    pub tau: f64,
    pub reaction_substeps: usize,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme, correction: CorrectionKind, tau: f64) -> Self {
        SchemeConfig {
            scheme,
            correction,
            tau,
            reaction_substeps: DEFAULT_REACTION_SUBSTEPS,
        }
    }

    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.reaction_substeps = substeps;
        self
    }

    /// Number of steps covering `[t_start, t_end]`; `τ` must divide the
    /// interval length.
    pub fn step_count(&self, t_start: f64, t_end: f64) -> Result<usize> {
        step_count(self.tau, t_end - t_start)
    }

    pub fn validate(&self, sys: &ConstrainedSystem) -> Result<usize> {
        if self.reaction_substeps == 0 {
            return Err(Error::Config("reaction flow needs at least one substep".into()));
        }
        if let CorrectionKind::PerturbedAtState(p) = &self.correction {
            p.check_len("correction perturbation", sys.dim())?;
        }
        self.step_count(sys.t_start(), sys.t_end())
    }

    /// One step from `u_n` at `t_n`.
    pub fn step(
        &self,
        sys: &ConstrainedSystem,
        cache: &LinearFlowCache,
        t_n: f64,
        u_n: &DenseVector,
    ) -> Result<DenseVector> {
        let q = make_correction(&self.correction, sys, u_n, t_n)?;
        advance(sys, cache, self.scheme, t_n, self.tau, u_n, &q, self.reaction_substeps)
    }
}

/// `length / tau` when it is an integer to within `1e-12` relative.
pub fn step_count(tau: f64, length: f64) -> Result<usize> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Domain(format!("step size must be positive, got {tau}")));
    }
    if length == 0.0 {
        return Ok(0);
    }
    let steps = (length / tau).round();
    if steps < 1.0 || (steps * tau - length).abs() > 1e-12 * length {
        return Err(Error::StepDoesNotDivide { tau, length });
    }
    Ok(steps as usize)
}

#[allow(clippy::too_many_arguments)]
fn advance(
    sys: &ConstrainedSystem,
    cache: &LinearFlowCache,
    scheme: Scheme,
    t: f64,
    tau: f64,
    u: &DenseVector,
    q: &DenseVector,
    substeps: usize,
) -> Result<DenseVector> {
    let f = sys.reaction();
    let half = 0.5 * tau;
    match scheme {
        Scheme::Lie => {
            let w = reaction_flow(f, q, tau, u, substeps)?;
            linear_pdae_flow(sys, cache, t, tau, &w, q)
        }
        Scheme::LieReversed => {
            let v = linear_pdae_flow(sys, cache, t, tau, u, q)?;
            reaction_flow(f, q, tau, &v, substeps)
        }
        Scheme::Strang => {
            let v = linear_pdae_flow(sys, cache, t, half, u, q)?;
            let w = reaction_flow(f, q, tau, &v, substeps)?;
            linear_pdae_flow(sys, cache, t + half, half, &w, q)
        }
        Scheme::StrangReversed => {
            let w = reaction_flow(f, q, half, u, substeps)?;
            let v = linear_pdae_flow(sys, cache, t, tau, &w, q)?;
            reaction_flow(f, q, half, &v, substeps)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn step_with(
    scheme: Scheme,
    sys: &ConstrainedSystem,
    cache: &LinearFlowCache,
    t_n: f64,
    tau: f64,
    u_n: &DenseVector,
    correction: &CorrectionKind,
    substeps: usize,
) -> Result<DenseVector> {
    let q = make_correction(correction, sys, u_n, t_n)?;
    advance(sys, cache, scheme, t_n, tau, u_n, &q, substeps)
}

/// Reaction over `τ`, then the linear constrained system over `τ`.
pub fn lie_step(
    sys: &ConstrainedSystem,
    cache: &LinearFlowCache,
    t_n: f64,
    tau: f64,
    u_n: &DenseVector,
    correction: &CorrectionKind,
    substeps: usize,
) -> Result<DenseVector> {
    step_with(Scheme::Lie, sys, cache, t_n, tau, u_n, correction, substeps)
}

/// Linear constrained system over `τ`, then reaction over `τ`.
pub fn lie_reversed_step(
    sys: &ConstrainedSystem,
    cache: &LinearFlowCache,
    t_n: f64,
    tau: f64,
    u_n: &DenseVector,
    correction: &CorrectionKind,
    substeps: usize,
) -> Result<DenseVector> {
    step_with(Scheme::LieReversed, sys, cache, t_n, tau, u_n, correction, substeps)
}

pub fn strang_step(
    sys: &ConstrainedSystem,
    cache: &LinearFlowCache,
    t_n: f64,
    tau: f64,
    u_n: &DenseVector,
    correction: &CorrectionKind,
    substeps: usize,
) -> Result<DenseVector> {
    step_with(Scheme::Strang, sys, cache, t_n, tau, u_n, correction, substeps)
}

pub fn strang_reversed_step(
    sys: &ConstrainedSystem,
    cache: &LinearFlowCache,
    t_n: f64,
    tau: f64,
    u_n: &DenseVector,
    correction: &CorrectionKind,
    substeps: usize,
) -> Result<DenseVector> {
    step_with(Scheme::StrangReversed, sys, cache, t_n, tau, u_n, correction, substeps)
}

/// Multipliers along a run, in the two flavours the state admits.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MultiplierSeries {
    /// `D (F + q_n + A u_n) - G'`, the multiplier of the linear subsystem.
    pub split: Vec<DenseVector>,
    /// `D (F + f(u_n) + A u_n) - G'`, the multiplier of the full system.
    pub full: Vec<DenseVector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub tau: f64,
    pub times: Vec<f64>,
    /// States as produced by the step map.
    pub states: Vec<DenseVector>,
    /// `D⁻G(t_n) + P₀ u_n`, recorded for the reversed schemes whose raw
    /// states leave the constraint manifold.
    pub consistent_states: Option<Vec<DenseVector>>,
    pub multipliers: Option<MultiplierSeries>,
    /// `|D u_n - G(t_n)|∞` of the raw states.
    pub constraint_residuals: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn final_state(&self) -> &DenseVector {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory holds the initial state")
    }

    pub fn max_constraint_residual(&self) -> f64 {
        self.constraint_residuals.iter().fold(0.0, |a, &b| a.max(b))
    }
}

/// What [`integrate_with`] keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Recording {
    /// Keep every `every`-th state; must divide the step count.
    pub every: usize,
    pub multipliers: bool,
}

impl Default for Recording {
    fn default() -> Self {
        Recording {
            every: 1,
            multipliers: false,
        }
    }
}

/// Runs the configured scheme over the system's time span, recording
/// every state.
pub fn integrate(sys: &ConstrainedSystem, config: &SchemeConfig) -> Result<Trajectory> {
    config.validate(sys)?;
    let cache = LinearFlowCache::new(sys, config.tau)?;
    integrate_with(sys, config, &cache, Recording::default())
}

pub fn integrate_with(
    sys: &ConstrainedSystem,
    config: &SchemeConfig,
    cache: &LinearFlowCache,
    recording: Recording,
) -> Result<Trajectory> {
    let steps = config.validate(sys)?;
    if (cache.tau() - config.tau).abs() > 1e-12 * config.tau {
        return Err(Error::Config(format!(
            "flow cache built for step {:e}, scheme configured with {:e}",
            cache.tau(),
            config.tau
        )));
    }
    if recording.every == 0 || steps % recording.every != 0 {
        return Err(Error::Config(format!(
            "recording stride {} does not divide {steps} steps",
            recording.every
        )));
    }
    if recording.multipliers && sys.g_dot().is_none() {
        return Err(Error::MultiplierUnavailable);
    }

    let reversed = config.scheme.is_reversed();
    let capacity = steps / recording.every + 1;
    let mut traj = Trajectory {
        tau: config.tau,
        times: Vec::with_capacity(capacity),
        states: Vec::with_capacity(capacity),
        consistent_states: reversed.then(|| Vec::with_capacity(capacity)),
        multipliers: recording.multipliers.then(MultiplierSeries::default),
        constraint_residuals: Vec::with_capacity(capacity),
    };

    let t0 = sys.t_start();
    let mut u = sys.u0().clone();
    for n in 0..=steps {
        let t = t0 + n as f64 * config.tau;
        let q = if n < steps || recording.multipliers {
            Some(make_correction(&config.correction, sys, &u, t)?)
        } else {
            None
        };
        if n % recording.every == 0 {
            record(sys, &mut traj, t, &u, q.as_ref())?;
        }
        if n == steps {
            break;
        }
        let q = q.expect("correction computed for every step");
        u = advance(
            sys,
            cache,
            config.scheme,
            t,
            config.tau,
            &u,
            &q,
            config.reaction_substeps,
        )
        .map_err(|e| e.at_step(n, t))?;
    }
    Ok(traj)
}

fn record(
    sys: &ConstrainedSystem,
    traj: &mut Trajectory,
    t: f64,
    u: &DenseVector,
    q: Option<&DenseVector>,
) -> Result<()> {
    traj.times.push(t);
    traj.constraint_residuals.push(sys.consistency_residual(u, t));
    let consistent = match &mut traj.consistent_states {
        Some(states) => {
            states.push(sys.make_consistent(u, t));
            states.last().expect("just pushed")
        }
        None => u,
    };
    if let Some(series) = &mut traj.multipliers {
        let q = q.expect("correction available when recording multipliers");
        let f = sys.eval_reaction(consistent);
        series.split.push(recover_multiplier_with(sys, consistent, t, Some(q))?);
        series.full.push(recover_multiplier_with(sys, consistent, t, Some(&f))?);
    }
    traj.states.push(u.clone());
    Ok(())
}
