//! The three benchmark problems, discretised by second-order finite
//! differences on the unit interval with homogeneous Dirichlet conditions.
//!
//! * `integral-mean`: `u' = Δu/10 + u²` with `∫ u sin(πx) dx = t`.
//! * `subset`: the same PDE with `u` prescribed on `[0.5, 0.7]`.
//! * `mechanical`: a damped string coupled to a softening spring along
//!   `[0.65, 0.7]`, written in first-order form with the hidden velocity
//!   constraint added.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::constraint::{ConstrainedSystem, ConstraintBlock, Grid, RightInversePolicy, SystemParts, TimeFunction};
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::reaction::{Nonlinearity, Quadratic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    IntegralMean,
    Subset,
    Mechanical,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 3] = [ProblemKind::IntegralMean, ProblemKind::Subset, ProblemKind::Mechanical];

    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::IntegralMean => "integral-mean",
            ProblemKind::Subset => "subset",
            ProblemKind::Mechanical => "mechanical",
        }
    }

    pub fn default_grid(self) -> usize {
        match self {
            ProblemKind::IntegralMean | ProblemKind::Subset => 500,
            ProblemKind::Mechanical => 250,
        }
    }

    pub fn default_t_end(self) -> f64 {
        match self {
            ProblemKind::IntegralMean | ProblemKind::Subset => 0.1,
            ProblemKind::Mechanical => 1.0,
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "integral-mean" | "integral_mean" => Ok(ProblemKind::IntegralMean),
            "subset" => Ok(ProblemKind::Subset),
            "mechanical" => Ok(ProblemKind::Mechanical),
            other => Err(Error::Config(format!("unknown problem '{other}'"))),
        }
    }
}

/// Parameters of the two heat-equation benchmarks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatParams {
    pub diffusion: f64,
    /// Prescribed region of the subset problem.
    pub omega0: (f64, f64),
}

impl Default for HeatParams {
    fn default() -> Self {
        HeatParams {
            diffusion: 0.1,
            omega0: (0.5, 0.7),
        }
    }
}

/// Parameters of the string/spring benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanicalParams {
    /// Wave speed squared.
    pub c: f64,
    /// String damping.
    pub d1: f64,
    /// Spring damping.
    pub d2: f64,
    pub k0: f64,
    /// Softening coefficient in `k(q) = k0 (1 - a²q²) q`.
    pub a: f64,
    pub omega0: (f64, f64),
    /// Constant offset in `u|Ω₀ = q + offset`.
    pub offset: f64,
}

impl Default for MechanicalParams {
    fn default() -> Self {
        MechanicalParams {
            c: 0.5,
            d1: 10.0,
            d2: 3.0,
            k0: 100.0,
            a: 10.0,
            omega0: (0.65, 0.7),
            offset: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemParams {
    Heat(HeatParams),
    Mechanical(MechanicalParams),
}

/// A fully specified benchmark instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub n_grid: usize,
    pub t_end: f64,
    pub params: ProblemParams,
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind) -> Self {
        let params = match kind {
            ProblemKind::Mechanical => ProblemParams::Mechanical(MechanicalParams::default()),
            _ => ProblemParams::Heat(HeatParams::default()),
        };
        ProblemSpec {
            kind,
            n_grid: kind.default_grid(),
            t_end: kind.default_t_end(),
            params,
        }
    }

    pub fn with_grid(mut self, n: usize) -> Self {
        self.n_grid = n;
        self
    }

    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grid < 10 {
            return Err(Error::Config(format!(
                "grid needs at least 10 nodes, got {}",
                self.n_grid
            )));
        }
        if !(self.t_end > 0.0) {
            return Err(Error::Config(format!(
                "final time must be positive, got {}",
                self.t_end
            )));
        }
        let omega0 = match &self.params {
            ProblemParams::Heat(p) => {
                if !(p.diffusion > 0.0) {
                    return Err(Error::Config("diffusion coefficient must be positive".into()));
                }
                p.omega0
            }
            ProblemParams::Mechanical(p) => {
                if !(p.c > 0.0 && p.d1 >= 0.0 && p.d2 >= 0.0) {
                    return Err(Error::Config("need c > 0, d1 >= 0, d2 >= 0".into()));
                }
                p.omega0
            }
        };
        if !(0.0 < omega0.0 && omega0.0 <= omega0.1 && omega0.1 < 1.0) {
            return Err(Error::Config(format!(
                "constrained region [{}, {}] must lie inside (0, 1)",
                omega0.0, omega0.1
            )));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<ConstrainedSystem> {
        self.validate()?;
        let sys = match (&self.kind, &self.params) {
            (ProblemKind::IntegralMean, ProblemParams::Heat(p)) => integral_mean(self.n_grid, p)?,
            (ProblemKind::Subset, ProblemParams::Heat(p)) => subset(self.n_grid, p)?,
            (ProblemKind::Mechanical, ProblemParams::Mechanical(p)) => mechanical(self.n_grid, p)?,
            _ => return Err(Error::Config("parameters do not match the problem kind".into())),
        };
        sys.with_time_span(0.0, self.t_end)
    }
}

/// `coeff · tridiag(1, -2, 1) / h²` on `n` interior nodes.
pub fn dirichlet_laplacian(n: usize, coeff: f64) -> DenseMatrix {
    let h = 1.0 / (n as f64 + 1.0);
    let s = coeff / (h * h);
    let mut a = DenseMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = -2.0 * s;
        if i > 0 {
            a[(i, i - 1)] = s;
        }
        if i + 1 < n {
            a[(i, i + 1)] = s;
        }
    }
    a
}

/// Indices of grid nodes inside `[lo, hi]`, admitting nodes strictly
/// closer than `h/2` to the interval.
pub fn region_indices(grid: &Grid, (lo, hi): (f64, f64)) -> Vec<usize> {
    let slack = 0.5 * grid.h * (1.0 - 1e-9);
    grid.nodes
        .iter()
        .enumerate()
        .filter(|(_, &x)| x >= lo - slack && x <= hi + slack)
        .map(|(i, _)| i)
        .collect()
}

fn selection(n: usize, indices: &[usize]) -> DenseMatrix {
    let mut d = DenseMatrix::zeros(indices.len(), n);
    for (k, &i) in indices.iter().enumerate() {
        d[(k, i)] = 1.0;
    }
    d
}

pub fn build_integral_mean(n: usize) -> Result<ConstrainedSystem> {
    ProblemSpec::new(ProblemKind::IntegralMean).with_grid(n).build()
}

pub fn build_subset(n: usize) -> Result<ConstrainedSystem> {
    ProblemSpec::new(ProblemKind::Subset).with_grid(n).build()
}

pub fn build_mechanical(n: usize) -> Result<ConstrainedSystem> {
    ProblemSpec::new(ProblemKind::Mechanical).with_grid(n).build()
}

fn integral_mean(n: usize, p: &HeatParams) -> Result<ConstrainedSystem> {
    let grid = Grid::unit_interval(n);
    let weights: Vec<f64> = grid.nodes.iter().map(|x| grid.h * (PI * x).sin()).collect();
    let constraint = ConstraintBlock::new(DenseMatrix::from_rows(&[weights]), RightInversePolicy::PseudoInverse)?;
    let u0 = DenseVector::from_fn(n, |i| (2.0 * PI * grid.nodes[i]).sin().powi(3));
    ConstrainedSystem::new(SystemParts {
        name: ProblemKind::IntegralMean.to_string(),
        a: dirichlet_laplacian(n, p.diffusion),
        constraint,
        reaction: Arc::new(Quadratic),
        forcing: TimeFunction::zero(n),
        g: TimeFunction::affine(DenseVector::zeros(1), DenseVector::filled(1, 1.0)),
        g_dot: Some(TimeFunction::constant(DenseVector::filled(1, 1.0))),
        u0,
        t_start: 0.0,
        t_end: ProblemKind::IntegralMean.default_t_end(),
        grid,
    })
}

fn subset(n: usize, p: &HeatParams) -> Result<ConstrainedSystem> {
    let grid = Grid::unit_interval(n);
    let indices = region_indices(&grid, p.omega0);
    if indices.is_empty() {
        return Err(Error::Config("constrained region contains no grid node".into()));
    }
    let constraint = ConstraintBlock::new(selection(n, &indices), RightInversePolicy::ZeroExtension)?;
    let u0 = DenseVector::from_fn(n, |i| {
        let x = grid.nodes[i];
        (PI * x).sin() * (1.0 + (7.0 * PI * x).cos())
    });
    let g0 = DenseVector::from_fn(indices.len(), |k| u0[indices[k]]);
    let rate = g0.scale(2.0);
    ConstrainedSystem::new(SystemParts {
        name: ProblemKind::Subset.to_string(),
        a: dirichlet_laplacian(n, p.diffusion),
        constraint,
        reaction: Arc::new(Quadratic),
        forcing: TimeFunction::zero(n),
        g: TimeFunction::affine(g0, rate.clone()),
        g_dot: Some(TimeFunction::constant(rate)),
        u0,
        t_start: 0.0,
        t_end: ProblemKind::Subset.default_t_end(),
        grid,
    })
}

/// The perturbation added to the state correction in the subset study:
/// an oscillation left of the constrained region, another one right of
/// it, and zero on every constrained node.
pub fn subset_perturbation(sys: &ConstrainedSystem) -> DenseVector {
    let grid = sys.grid();
    let d = sys.constraint().d();
    let constrained: Vec<bool> = (0..sys.dim())
        .map(|j| (0..d.rows()).any(|i| d[(i, j)] != 0.0))
        .collect();
    DenseVector::from_fn(sys.dim(), |i| {
        if constrained[i] {
            0.0
        } else {
            perturbation_profile(grid.nodes[i])
        }
    })
}

fn perturbation_profile(x: f64) -> f64 {
    if x < 0.5 {
        (2.0 * PI * x).sin() * (42.0 * PI * x).cos()
    } else if x <= 0.7 {
        0.0
    } else {
        -(10.0 / 3.0 * PI * (x - 0.7)).sin() * (70.0 * PI * (x - 0.7)).cos()
    }
}

/// Reaction of the coupled string/spring state `(u, v, q, p)`:
/// `(0, -d1 v², 0, -k0 (1 - a²q²) q + (d1 - d2) p)`.
#[derive(Debug, Clone, Copy)]
pub struct StringSpringReaction {
    pub nodes: usize,
    pub params: MechanicalParams,
}

impl Nonlinearity for StringSpringReaction {
    fn eval_into(&self, z: &[f64], out: &mut [f64]) {
        let n = self.nodes;
        let MechanicalParams { d1, d2, k0, a, .. } = self.params;
        out[..n].fill(0.0);
        for i in 0..n {
            let v = z[n + i];
            out[n + i] = -d1 * v * v;
        }
        let q = z[2 * n];
        let p = z[2 * n + 1];
        out[2 * n] = 0.0;
        out[2 * n + 1] = -k0 * (1.0 - a * a * q * q) * q + (d1 - d2) * p;
    }
}

fn mechanical(n: usize, p: &MechanicalParams) -> Result<ConstrainedSystem> {
    let grid = Grid::unit_interval(n);
    let indices = region_indices(&grid, p.omega0);
    if indices.is_empty() {
        return Err(Error::Config("coupling region contains no grid node".into()));
    }
    let m = indices.len();
    let dim = 2 * n + 2;
    let (iq, ip) = (2 * n, 2 * n + 1);

    let mut a = DenseMatrix::zeros(dim, dim);
    let lap = dirichlet_laplacian(n, p.c);
    for i in 0..n {
        a[(i, n + i)] = 1.0;
        for j in i.saturating_sub(1)..(i + 2).min(n) {
            a[(n + i, j)] = lap[(i, j)];
        }
        a[(n + i, n + i)] = -p.d1;
    }
    a[(iq, ip)] = 1.0;
    a[(ip, ip)] = -p.d1;

    let mut d = DenseMatrix::zeros(2 * m, dim);
    let mut d_minus = DenseMatrix::zeros(dim, 2 * m);
    for (k, &i) in indices.iter().enumerate() {
        d[(k, i)] = 1.0;
        d[(k, iq)] = -1.0;
        d[(m + k, n + i)] = 1.0;
        d[(m + k, ip)] = -1.0;
        d_minus[(i, k)] = 1.0;
        d_minus[(n + i, m + k)] = 1.0;
    }
    let constraint = ConstraintBlock::new(d, RightInversePolicy::Explicit(d_minus))?;

    let mut g = DenseVector::zeros(2 * m);
    g[..m].fill(p.offset);

    let mut u0 = DenseVector::zeros(dim);
    for (i, x) in grid.nodes.iter().enumerate() {
        u0[i] = 0.2 * (2.0 * PI * x).sin().powi(3);
    }
    for &i in &indices {
        u0[i] = 0.0;
        u0[n + i] = 0.5;
    }
    u0[iq] = -p.offset;
    u0[ip] = 0.5;

    ConstrainedSystem::new(SystemParts {
        name: ProblemKind::Mechanical.to_string(),
        a,
        constraint,
        reaction: Arc::new(StringSpringReaction { nodes: n, params: *p }),
        forcing: TimeFunction::zero(dim),
        g: TimeFunction::constant(g),
        g_dot: Some(TimeFunction::zero(2 * m)),
        u0,
        t_start: 0.0,
        t_end: ProblemKind::Mechanical.default_t_end(),
        grid,
    })
}
