//! θ-method on the coupled index-2 system, used as an independent check
//! of the splitting-based reference and of the multiplier formula.
//!
//! Each step solves the saddle-point system
//!
//! ```text
//! (I - θτA) u⁺ + τ D⁻ λ = u + τ(1-θ)(A u + f(u) + F) + τθ (f(u⁺) + F⁺)
//!              D u⁺      = G(t⁺)
//! ```
//!
//! with `f(u⁺)` resolved by fixed-point iteration around one LU factor.

use crate::constraint::ConstrainedSystem;
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector, LuFactorization};
use crate::splitting::step_count;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaMethod {
    pub theta: f64,
    pub tau: f64,
    /// Relative change below which the fixed-point iteration stops.
    pub tol: f64,
    pub max_iterations: usize,
}

/// States (and multipliers of the steps ending there) at every
/// `every`-th step.
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitRun {
    pub times: Vec<f64>,
    pub states: Vec<DenseVector>,
    /// Multiplier of the step ending at `times[k]`; `None` at the start.
    pub multipliers: Vec<Option<DenseVector>>,
}

impl ThetaMethod {
    pub fn new(theta: f64, tau: f64) -> Self {
        ThetaMethod {
            theta,
            tau,
            tol: 1e-14,
            max_iterations: 100,
        }
    }

    pub fn trapezoidal(tau: f64) -> Self {
        ThetaMethod::new(0.5, tau)
    }

    pub fn implicit_euler(tau: f64) -> Self {
        ThetaMethod::new(1.0, tau)
    }

    pub fn run(&self, sys: &ConstrainedSystem, every: usize) -> Result<ImplicitRun> {
        if !(0.0..=1.0).contains(&self.theta) || self.theta == 0.0 {
            return Err(Error::Config(format!("theta must lie in (0, 1], got {}", self.theta)));
        }
        let steps = step_count(self.tau, sys.t_end() - sys.t_start())?;
        if every == 0 || steps % every != 0 {
            return Err(Error::Config(format!(
                "recording stride {every} does not divide {steps} steps"
            )));
        }
        let n = sys.dim();
        let c = sys.constraint();
        let m = c.constraint_dim();
        let (theta, tau) = (self.theta, self.tau);

        let mut k = DenseMatrix::zeros(n + m, n + m);
        let mut top = sys.a().scale(-theta * tau);
        top.add_identity(1.0);
        k.set_block(0, 0, &top);
        k.set_block(0, n, &c.d_minus().scale(tau));
        k.set_block(n, 0, c.d());
        let lu = LuFactorization::new(&k)?;

        let t0 = sys.t_start();
        let mut u = sys.u0().clone();
        let mut run = ImplicitRun {
            times: vec![t0],
            states: vec![u.clone()],
            multipliers: vec![None],
        };
        let mut rhs = vec![0.0; n + m];
        for step in 0..steps {
            let t = t0 + step as f64 * tau;
            let t_next = t + tau;
            let mut explicit = u.clone();
            if theta < 1.0 {
                let mut slope = sys.a().matvec(&u);
                slope.axpy(1.0, &sys.eval_reaction(&u));
                slope.axpy(1.0, &sys.forcing().eval(t));
                explicit.axpy(tau * (1.0 - theta), &slope);
            }
            explicit.axpy(tau * theta, &sys.forcing().eval(t_next));
            let g_next = sys.g().eval(t_next);

            let mut guess = u.clone();
            let mut lambda = DenseVector::zeros(m);
            let mut converged = false;
            let mut previous = f64::INFINITY;
            for _ in 0..self.max_iterations {
                let f = sys.eval_reaction(&guess);
                for i in 0..n {
                    rhs[i] = explicit[i] + tau * theta * f[i];
                }
                rhs[n..].copy_from_slice(&g_next);
                let sol = lu.solve(&rhs)?;
                let next = DenseVector::from_vec(sol[..n].to_vec());
                lambda = DenseVector::from_vec(sol[n..].to_vec());
                if !next.is_finite() {
                    return Err(Error::NonFinite("implicit solver state"));
                }
                let change = next.max_abs_diff(&guess);
                guess = next;
                let scale = guess.norm_inf().max(1.0);
                // Near the fixed point the iterates may wander at roundoff
                // level of the solve; stop once the change stops shrinking.
                if change <= self.tol * scale || (change >= previous && change <= 1e3 * self.tol * scale) {
                    converged = true;
                    break;
                }
                previous = change;
            }
            if !converged {
                return Err(Error::NoConvergence {
                    time: t_next,
                    iterations: self.max_iterations,
                });
            }
            u = guess;
            if (step + 1) % every == 0 {
                run.times.push(t_next);
                run.states.push(u.clone());
                run.multipliers.push(Some(lambda));
            }
        }
        Ok(run)
    }
}
