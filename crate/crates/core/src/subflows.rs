//! Exact flows of the two split subsystems.
//!
//! The linear constrained system `v' - A v + D⁻λ = F + q`, `D v = G`
//! is solved by the constrained variation-of-constants formula
//!
//! ```text
//! v(τ) = D⁻G(t0+τ) + exp(τM) P₀ v0 + ∫_0^τ exp((τ-s)M) P₀ (F + q + A D⁻G)(t0+s) ds
//! ```
//!
//! with `M = P₀ A P₀`. The integrand is affine in `s` for affine `F`, `G`
//! and constant `q`, so the integral is `τφ1(τM) b0 + τ²φ2(τM) b1` exactly.
//! Projecting `v0` makes the formula valid for inconsistent starting values
//! (the solution then jumps at `t0`).

use crate::constraint::ConstrainedSystem;
use crate::error::{Error, Result};
use crate::linalg::{phi_functions_with_half, DenseMatrix, DenseVector, PhiSet};
use crate::reaction::Nonlinearity;

/// Default number of RK4 substeps per reaction solve.
pub const DEFAULT_REACTION_SUBSTEPS: usize = 20;

/// Propagators of the linear subsystem for one step length, with the
/// projection `P₀` already folded in.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowStage {
    pub tau: f64,
    /// `exp(τM) P₀`
    pub exp_p0: DenseMatrix,
    /// `τ φ1(τM) P₀`
    pub phi1_p0: DenseMatrix,
    /// `τ² φ2(τM) P₀`
    pub phi2_p0: DenseMatrix,
}

impl FlowStage {
    fn from_phi(set: PhiSet, tau: f64, p0: &DenseMatrix) -> Self {
        FlowStage {
            tau,
            exp_p0: set.exp.matmul(p0),
            phi1_p0: set.phi1.matmul(p0).scale(tau),
            phi2_p0: set.phi2.matmul(p0).scale(tau * tau),
        }
    }
}

/// Cached propagators for a step `τ` and its half step `τ/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFlowCache {
    tau: f64,
    full: FlowStage,
    half: FlowStage,
    /// `A D⁻`
    a_lift: DenseMatrix,
}

impl LinearFlowCache {
    pub fn new(sys: &ConstrainedSystem, tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::Domain(format!("step size must be positive, got {tau}")));
        }
        let c = sys.constraint();
        let p0 = c.p0();
        let m = p0.matmul(sys.a()).matmul(p0);
        let (half, full) = phi_functions_with_half(&m.scale(tau))?;
        Ok(LinearFlowCache {
            tau,
            full: FlowStage::from_phi(full, tau, p0),
            half: FlowStage::from_phi(half, 0.5 * tau, p0),
            a_lift: sys.a().matmul(c.d_minus()),
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn full(&self) -> &FlowStage {
        &self.full
    }

    pub fn half(&self) -> &FlowStage {
        &self.half
    }

    /// The stage whose step length is `tau` (either `τ` or `τ/2`).
    pub fn stage(&self, tau: f64) -> Result<&FlowStage> {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b;
        if close(tau, self.full.tau) {
            Ok(&self.full)
        } else if close(tau, self.half.tau) {
            Ok(&self.half)
        } else {
            Err(Error::Config(format!(
                "linear flow cache built for step {:e} cannot advance by {tau:e}",
                self.tau
            )))
        }
    }
}

/// Advances the linear constrained subsystem from `v0` at `t0` by `tau`
/// with constant correction `q`.
pub fn linear_pdae_flow(
    sys: &ConstrainedSystem,
    cache: &LinearFlowCache,
    t0: f64,
    tau: f64,
    v0: &DenseVector,
    q: &DenseVector,
) -> Result<DenseVector> {
    let n = sys.dim();
    v0.check_len("linear flow initial value", n)?;
    q.check_len("linear flow correction", n)?;
    let stage = cache.stage(tau)?;
    let (g0, g_rate) = sys.g().affine_on(t0, tau)?;
    let (f0, f_rate) = sys.forcing().affine_on(t0, tau)?;

    let mut b0 = f0;
    b0.axpy(1.0, q);
    b0.axpy(1.0, &cache.a_lift.matvec(&g0));
    let mut b1 = f_rate;
    b1.axpy(1.0, &cache.a_lift.matvec(&g_rate));

    let mut g_end = g0;
    g_end.axpy(tau, &g_rate);
    let mut v = sys.constraint().lift(&g_end);
    v.axpy(1.0, &stage.exp_p0.matvec(v0));
    if b0.iter().any(|x| *x != 0.0) {
        v.axpy(1.0, &stage.phi1_p0.matvec(&b0));
    }
    if b1.iter().any(|x| *x != 0.0) {
        v.axpy(1.0, &stage.phi2_p0.matvec(&b1));
    }
    Ok(v)
}

/// Approximates the flow of `w' = f(w) - q` over `tau` with `substeps`
/// classical RK4 steps.
pub fn reaction_flow(
    f: &dyn Nonlinearity,
    q: &DenseVector,
    tau: f64,
    w0: &DenseVector,
    substeps: usize,
) -> Result<DenseVector> {
    if substeps == 0 {
        return Err(Error::Config("reaction flow needs at least one substep".into()));
    }
    q.check_len("reaction correction", w0.len())?;
    if f.is_zero() {
        let mut w = w0.clone();
        w.axpy(-tau, q);
        return Ok(w);
    }
    let n = w0.len();
    let h = tau / substeps as f64;
    let mut w = w0.clone();
    let mut k1 = DenseVector::zeros(n);
    let mut k2 = DenseVector::zeros(n);
    let mut k3 = DenseVector::zeros(n);
    let mut k4 = DenseVector::zeros(n);
    let mut stage = DenseVector::zeros(n);

    let rhs = |x: &[f64], out: &mut [f64]| {
        f.eval_into(x, out);
        for (o, qi) in out.iter_mut().zip(q.iter()) {
            *o -= qi;
        }
    };

    for k in 0..substeps {
        rhs(&w, &mut k1);
        for i in 0..n {
            stage[i] = w[i] + 0.5 * h * k1[i];
        }
        rhs(&stage, &mut k2);
        for i in 0..n {
            stage[i] = w[i] + 0.5 * h * k2[i];
        }
        rhs(&stage, &mut k3);
        for i in 0..n {
            stage[i] = w[i] + h * k3[i];
        }
        rhs(&stage, &mut k4);
        for i in 0..n {
            w[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if !w.is_finite() {
            return Err(Error::ReactionBlowUp {
                time: (k + 1) as f64 * h,
            });
        }
    }
    Ok(w)
}
