//! Constraint algebra: the constraint operator `D`, a right-inverse `D⁻`
//! and the projection `P₀ = I - D⁻D` onto `ker D`, together with the
//! constrained system they act on.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector, LuFactorization};
use crate::reaction::Nonlinearity;

/// Tolerance on the block identities checked at construction.
pub const IDENTITY_TOL: f64 = 1e-12;

/// Tolerance on `|D u0 - G(t_start)|` accepted when building a system.
pub const CONSISTENCY_TOL: f64 = 1e-10;

/// How to obtain the right-inverse `D⁻` of a constraint operator.
#[derive(Debug, Clone)]
pub enum RightInversePolicy {
    /// `D⁻ = Dᵀ (D Dᵀ)⁻¹`, making `P₀` the orthogonal projection.
    PseudoInverse,
    /// For selection-type `D` (one nonzero per row): inject back into the
    /// selected entries.
    ZeroExtension,
    /// A caller-supplied right-inverse.
    Explicit(DenseMatrix),
}

/// Residuals of the four identities every constraint block satisfies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResiduals {
    /// `|D D⁻ - I|∞`
    pub right_inverse: f64,
    /// `|P₀² - P₀|∞`
    pub idempotent: f64,
    /// `|D P₀|∞`
    pub annihilates_kernel: f64,
    /// `|P₀ D⁻|∞`
    pub annihilates_complement: f64,
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        self.right_inverse
            .max(self.idempotent)
            .max(self.annihilates_kernel)
            .max(self.annihilates_complement)
    }
}

#[derive(Debug, Clone)]
pub struct ConstraintBlock {
    d: DenseMatrix,
    d_minus: DenseMatrix,
    p0: DenseMatrix,
    residuals: IdentityResiduals,
}

impl ConstraintBlock {
    /// Builds `D⁻` and `P₀` for a full-row-rank `D` and verifies the block
    /// identities.
    pub fn new(d: DenseMatrix, policy: RightInversePolicy) -> Result<Self> {
        let (m, n) = (d.rows(), d.cols());
        if m == 0 || m > n {
            return Err(Error::ConstraintNotOnto(format!("{m} constraints on {n} unknowns")));
        }
        if !d.is_finite() {
            return Err(Error::NonFinite("constraint operator"));
        }
        let d_minus = match policy {
            RightInversePolicy::PseudoInverse => pseudo_inverse(&d)?,
            RightInversePolicy::ZeroExtension => zero_extension(&d)?,
            RightInversePolicy::Explicit(r) => {
                if r.rows() != n || r.cols() != m {
                    return Err(Error::Policy(format!(
                        "explicit right-inverse is {}x{}, expected {n}x{m}",
                        r.rows(),
                        r.cols()
                    )));
                }
                r
            }
        };
        let mut p0 = d_minus.matmul(&d).scale(-1.0);
        p0.add_identity(1.0);

        let residuals = identity_residuals(&d, &d_minus, &p0);
        let scale = d.norm_inf().max(1.0) * d_minus.norm_inf().max(1.0);
        let tol = IDENTITY_TOL * scale;
        let checks = [
            ("D D⁻ = I", residuals.right_inverse),
            ("P₀² = P₀", residuals.idempotent),
            ("D P₀ = 0", residuals.annihilates_kernel),
            ("P₀ D⁻ = 0", residuals.annihilates_complement),
        ];
        for (identity, residual) in checks {
            if !(residual <= tol) {
                if identity == "D D⁻ = I" {
                    return Err(Error::ConstraintNotOnto(format!(
                        "D D⁻ deviates from I by {residual:.3e}"
                    )));
                }
                return Err(Error::ConstraintIdentity { identity, residual });
            }
        }
        Ok(ConstraintBlock {
            d,
            d_minus,
            p0,
            residuals,
        })
    }

    /// Number of constraints `m`.
    pub fn constraint_dim(&self) -> usize {
        self.d.rows()
    }

    /// State dimension `n`.
    pub fn state_dim(&self) -> usize {
        self.d.cols()
    }

    pub fn d(&self) -> &DenseMatrix {
        &self.d
    }

    pub fn d_minus(&self) -> &DenseMatrix {
        &self.d_minus
    }

    pub fn p0(&self) -> &DenseMatrix {
        &self.p0
    }

    pub fn residuals(&self) -> IdentityResiduals {
        self.residuals
    }

    /// `P₀ x`
    pub fn project(&self, x: &DenseVector) -> Result<DenseVector> {
        x.check_len("projection", self.state_dim())?;
        Ok(self.p0.matvec(x))
    }

    /// `D x`
    pub fn apply(&self, x: &[f64]) -> DenseVector {
        self.d.matvec(x)
    }

    /// `D⁻ g`
    pub fn lift(&self, g: &[f64]) -> DenseVector {
        self.d_minus.matvec(g)
    }
}

/// `P₀ x` for a constraint block.
pub fn project_p0(c: &ConstraintBlock, x: &DenseVector) -> Result<DenseVector> {
    c.project(x)
}

fn identity_residuals(d: &DenseMatrix, d_minus: &DenseMatrix, p0: &DenseMatrix) -> IdentityResiduals {
    let mut dd = d.matmul(d_minus);
    dd.add_identity(-1.0);
    IdentityResiduals {
        right_inverse: dd.norm_inf(),
        idempotent: p0.matmul(p0).sub(p0).norm_inf(),
        annihilates_kernel: d.matmul(p0).norm_inf(),
        annihilates_complement: p0.matmul(d_minus).norm_inf(),
    }
}

fn pseudo_inverse(d: &DenseMatrix) -> Result<DenseMatrix> {
    let dt = d.transpose();
    let gram = d.matmul(&dt);
    let lu = LuFactorization::new(&gram).map_err(|e| match e {
        Error::Singular { column, .. } => {
            Error::ConstraintNotOnto(format!("D Dᵀ is singular (rank deficiency at row {column})"))
        }
        other => other,
    })?;
    // D⁻ = Dᵀ G⁻¹, so D⁻ᵀ = G⁻¹ D (G symmetric).
    Ok(lu.solve_matrix(d)?.transpose())
}

fn zero_extension(d: &DenseMatrix) -> Result<DenseMatrix> {
    let (m, n) = (d.rows(), d.cols());
    let mut r = DenseMatrix::zeros(n, m);
    let mut used = vec![false; n];
    for i in 0..m {
        let nonzeros: Vec<usize> = (0..n).filter(|&j| d[(i, j)] != 0.0).collect();
        match nonzeros.as_slice() {
            [j] => {
                if used[*j] {
                    return Err(Error::ConstraintNotOnto(format!(
                        "column {j} selected by more than one row"
                    )));
                }
                used[*j] = true;
                r[(*j, i)] = 1.0 / d[(i, *j)];
            }
            [] => {
                return Err(Error::ConstraintNotOnto(format!("row {i} of D is zero")));
            }
            _ => {
                return Err(Error::Policy(format!(
                    "zero extension needs a selection operator, row {i} has {} nonzeros",
                    nonzeros.len()
                )));
            }
        }
    }
    Ok(r)
}

/// A function of time with values in `R^k`.
#[derive(Clone)]
pub enum TimeFunction {
    /// `t -> value_at_zero + t * rate`
    Affine {
        value_at_zero: DenseVector,
        rate: DenseVector,
    },
    General {
        dim: usize,
        f: Arc<dyn Fn(f64) -> DenseVector + Send + Sync>,
    },
}

impl fmt::Debug for TimeFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeFunction::Affine { value_at_zero, rate } => f
                .debug_struct("Affine")
                .field("value_at_zero", value_at_zero)
                .field("rate", rate)
                .finish(),
            TimeFunction::General { dim, .. } => f.debug_struct("General").field("dim", dim).finish_non_exhaustive(),
        }
    }
}

impl TimeFunction {
    pub fn constant(value: DenseVector) -> Self {
        let rate = DenseVector::zeros(value.len());
        TimeFunction::Affine {
            value_at_zero: value,
            rate,
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(DenseVector::zeros(dim))
    }

    pub fn affine(value_at_zero: DenseVector, rate: DenseVector) -> Self {
        assert_eq!(value_at_zero.len(), rate.len());
        TimeFunction::Affine { value_at_zero, rate }
    }

    pub fn general(dim: usize, f: impl Fn(f64) -> DenseVector + Send + Sync + 'static) -> Self {
        TimeFunction::General { dim, f: Arc::new(f) }
    }

    pub fn dim(&self) -> usize {
        match self {
            TimeFunction::Affine { value_at_zero, .. } => value_at_zero.len(),
            TimeFunction::General { dim, .. } => *dim,
        }
    }

    pub fn eval(&self, t: f64) -> DenseVector {
        match self {
            TimeFunction::Affine { value_at_zero, rate } => {
                let mut v = value_at_zero.clone();
                v.axpy(t, rate);
                v
            }
            TimeFunction::General { f, .. } => f(t),
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        match self {
            TimeFunction::Affine { value_at_zero, rate } => value_at_zero.norm_inf() == 0.0 && rate.norm_inf() == 0.0,
            TimeFunction::General { .. } => false,
        }
    }

    /// Value at `t0` and slope on `[t0, t0 + tau]`, failing when the
    /// function is not affine there (checked at the midpoint).
    pub fn affine_on(&self, t0: f64, tau: f64) -> Result<(DenseVector, DenseVector)> {
        match self {
            TimeFunction::Affine { rate, .. } => Ok((self.eval(t0), rate.clone())),
            TimeFunction::General { f, .. } => {
                let start = f(t0);
                if tau == 0.0 {
                    return Ok((start.clone(), DenseVector::zeros(start.len())));
                }
                let end = f(t0 + tau);
                let mid = f(t0 + 0.5 * tau);
                let mut chord = start.add(&end);
                chord = chord.scale(0.5);
                let defect = mid.max_abs_diff(&chord);
                let scale = 1.0 + start.norm_inf().max(end.norm_inf());
                if defect > 1e-12 * scale {
                    return Err(Error::NotAffine {
                        t0,
                        t1: t0 + tau,
                        defect,
                    });
                }
                let slope = end.sub(&start).scale(1.0 / tau);
                Ok((start, slope))
            }
        }
    }
}

/// Spatial grid information attached to a system.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    /// Interior node coordinates.
    pub nodes: Vec<f64>,
    /// Mesh width, also used to weight the discrete L2 norm.
    pub h: f64,
}

impl Grid {
    /// Interior nodes `x_i = i h`, `h = 1/(n+1)`, of the unit interval.
    pub fn unit_interval(n: usize) -> Self {
        let h = 1.0 / (n as f64 + 1.0);
        Grid {
            nodes: (1..=n).map(|i| i as f64 * h).collect(),
            h,
        }
    }
}

/// Everything needed to assemble a [`ConstrainedSystem`].
#[derive(Debug, Clone)]
pub struct SystemParts {
    pub name: String,
    pub a: DenseMatrix,
    pub constraint: ConstraintBlock,
    pub reaction: Arc<dyn Nonlinearity>,
    pub forcing: TimeFunction,
    pub g: TimeFunction,
    pub g_dot: Option<TimeFunction>,
    pub u0: DenseVector,
    pub t_start: f64,
    pub t_end: f64,
    pub grid: Grid,
}

/// `u' - A u - f(u) + D⁻λ = F`, `D u = G`, `u(t_start) = u0`.
#[derive(Debug, Clone)]
pub struct ConstrainedSystem {
    parts: SystemParts,
}

impl ConstrainedSystem {
    pub fn new(parts: SystemParts) -> Result<Self> {
        let n = parts.constraint.state_dim();
        let m = parts.constraint.constraint_dim();
        if parts.a.rows() != n || parts.a.cols() != n {
            return Err(Error::Dimension {
                context: "operator A",
                expected: n,
                found: parts.a.rows(),
            });
        }
        parts.u0.check_len("initial value", n)?;
        for (ctx, f, dim) in [("forcing", &parts.forcing, n), ("constraint data", &parts.g, m)] {
            if f.dim() != dim {
                return Err(Error::Dimension {
                    context: ctx,
                    expected: dim,
                    found: f.dim(),
                });
            }
        }
        if let Some(g_dot) = &parts.g_dot {
            if g_dot.dim() != m {
                return Err(Error::Dimension {
                    context: "constraint data derivative",
                    expected: m,
                    found: g_dot.dim(),
                });
            }
        }
        if !(parts.t_end >= parts.t_start) {
            return Err(Error::Config(format!(
                "time span [{}, {}] is reversed",
                parts.t_start, parts.t_end
            )));
        }
        let sys = ConstrainedSystem { parts };
        let residual = sys.consistency_residual(&sys.parts.u0, sys.parts.t_start);
        if !(residual <= CONSISTENCY_TOL) {
            return Err(Error::Inconsistent { residual });
        }
        Ok(sys)
    }

    pub fn name(&self) -> &str {
        &self.parts.name
    }

    pub fn dim(&self) -> usize {
        self.parts.u0.len()
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.parts.a
    }

    pub fn constraint(&self) -> &ConstraintBlock {
        &self.parts.constraint
    }

    pub fn reaction(&self) -> &dyn Nonlinearity {
        self.parts.reaction.as_ref()
    }

    pub fn forcing(&self) -> &TimeFunction {
        &self.parts.forcing
    }

    pub fn g(&self) -> &TimeFunction {
        &self.parts.g
    }

    pub fn g_dot(&self) -> Option<&TimeFunction> {
        self.parts.g_dot.as_ref()
    }

    pub fn u0(&self) -> &DenseVector {
        &self.parts.u0
    }

    pub fn t_start(&self) -> f64 {
        self.parts.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.parts.t_end
    }

    pub fn grid(&self) -> &Grid {
        &self.parts.grid
    }

    pub fn parts(&self) -> &SystemParts {
        &self.parts
    }

    /// The same system with a different reaction term.
    pub fn with_reaction(&self, reaction: Arc<dyn Nonlinearity>) -> Self {
        let mut parts = self.parts.clone();
        parts.reaction = reaction;
        ConstrainedSystem { parts }
    }

    /// The same system on a different time interval (initial data kept).
    pub fn with_time_span(&self, t_start: f64, t_end: f64) -> Result<Self> {
        let mut parts = self.parts.clone();
        parts.t_start = t_start;
        parts.t_end = t_end;
        ConstrainedSystem::new(parts)
    }

    /// `f(x)`
    pub fn eval_reaction(&self, x: &[f64]) -> DenseVector {
        self.parts.reaction.eval(x)
    }

    /// `|D x - G(t)|∞`
    pub fn consistency_residual(&self, x: &[f64], t: f64) -> f64 {
        let dx = self.parts.constraint.apply(x);
        dx.max_abs_diff(&self.parts.g.eval(t))
    }

    /// `D⁻ G(t) + P₀ x`: the consistent state with the same kernel
    /// component as `x`.
    pub fn make_consistent(&self, x: &DenseVector, t: f64) -> DenseVector {
        let c = &self.parts.constraint;
        let mut out = c.p0().matvec(x);
        out.axpy(1.0, &c.lift(&self.parts.g.eval(t)));
        out
    }
}

/// `|D x - G(t)|∞`
pub fn consistency_residual(sys: &ConstrainedSystem, x: &DenseVector, t: f64) -> f64 {
    sys.consistency_residual(x, t)
}

/// Lagrange multiplier of the linear constrained system,
/// `λ = D (F(t) + A u) - G'(t)`.
pub fn recover_multiplier(sys: &ConstrainedSystem, u: &DenseVector, t: f64) -> Result<DenseVector> {
    recover_multiplier_with(sys, u, t, None)
}

/// `λ = D (F(t) + extra + A u) - G'(t)`. Pass the correction `q_n` as
/// `extra` for the linear subsystem of a splitting step, or `f(u)` for the
/// full nonlinear system.
pub fn recover_multiplier_with(
    sys: &ConstrainedSystem,
    u: &DenseVector,
    t: f64,
    extra: Option<&DenseVector>,
) -> Result<DenseVector> {
    u.check_len("multiplier state", sys.dim())?;
    let g_dot = sys.g_dot().ok_or(Error::MultiplierUnavailable)?;
    let mut rhs = sys.forcing().eval(t);
    rhs.axpy(1.0, &sys.a().matvec(u));
    if let Some(extra) = extra {
        extra.check_len("multiplier extra term", sys.dim())?;
        rhs.axpy(1.0, extra);
    }
    let mut lambda = sys.constraint().apply(&rhs);
    lambda.axpy(-1.0, &g_dot.eval(t));
    Ok(lambda)
}

/// `|D f(u) - D f((I - P₀) u)|∞`. Zero exactly when `f` and `I - P₀`
/// commute under `D` at `u`, in which case the correction `f(D⁻G(t_n))`
/// reproduces `D f(u(t_n))`.
pub fn commutation_defect(sys: &ConstrainedSystem, u: &DenseVector) -> f64 {
    let c = sys.constraint();
    let complement = u.sub(&c.p0().matvec(u));
    let lhs = c.apply(&sys.eval_reaction(u));
    let rhs = c.apply(&sys.eval_reaction(&complement));
    lhs.max_abs_diff(&rhs)
}
