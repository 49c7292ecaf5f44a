//! Reaction terms `f` of the semilinear system.

use std::fmt;

use crate::linalg::DenseVector;

/// A nonlinearity `f: R^n -> R^n`.
pub trait Nonlinearity: Send + Sync + fmt::Debug {
    fn eval_into(&self, x: &[f64], out: &mut [f64]);

    fn eval(&self, x: &[f64]) -> DenseVector {
        let mut out = DenseVector::zeros(x.len());
        self.eval_into(x, &mut out);
        out
    }

    /// True when `f` vanishes identically.
    fn is_zero(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoReaction;

impl Nonlinearity for NoReaction {
    fn eval_into(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn is_zero(&self) -> bool {
        true
    }
}

/// `f(u) = u²` pointwise.
#[derive(Debug, Clone, Copy, Default)]
pub struct Quadratic;

impl Nonlinearity for Quadratic {
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = v * v;
        }
    }
}

/// `f(u) = c u` pointwise.
#[derive(Debug, Clone, Copy)]
pub struct LinearReaction {
    pub rate: f64,
}

impl Nonlinearity for LinearReaction {
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = self.rate * v;
        }
    }

    fn is_zero(&self) -> bool {
        self.rate == 0.0
    }
}
