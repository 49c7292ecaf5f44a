use super::{DenseMatrix, DenseVector, LuFactorization};
use crate::error::{Error, Result};

/// Coefficients of the degree-13 diagonal Padé approximant to `exp`.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// 1-norm bound under which the unscaled degree-13 approximant is accurate
/// to double precision.
const THETA_13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant.
pub fn expm(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.require_square()?;
    if n == 0 {
        return Ok(DenseMatrix::zeros(0, 0));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("expm argument"));
    }
    let norm = a.norm_1();
    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a.scale(0.5_f64.powi(squarings));
    let mut r = pade13(&scaled)?;
    for _ in 0..squarings {
        r = r.matmul(&r);
    }
    Ok(r)
}

fn pade13(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.rows();
    let b = &PADE13;
    let a2 = a.matmul(a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);

    let mut inner_u = a6.scale(b[13]);
    inner_u.add_scaled(b[11], &a4);
    inner_u.add_scaled(b[9], &a2);
    let mut u_poly = a6.matmul(&inner_u);
    u_poly.add_scaled(b[7], &a6);
    u_poly.add_scaled(b[5], &a4);
    u_poly.add_scaled(b[3], &a2);
    u_poly.add_identity(b[1]);
    let u = a.matmul(&u_poly);

    let mut inner_v = a6.scale(b[12]);
    inner_v.add_scaled(b[10], &a4);
    inner_v.add_scaled(b[8], &a2);
    let mut v = a6.matmul(&inner_v);
    v.add_scaled(b[6], &a6);
    v.add_scaled(b[4], &a4);
    v.add_scaled(b[2], &a2);
    v.add_identity(b[0]);

    let denom = v.sub(&u);
    let numer = v.add(&u);
    debug_assert_eq!(numer.rows(), n);
    LuFactorization::new(&denom)?.solve_matrix(&numer)
}

/// Evaluates `∫_0^τ exp((τ - s) M) (b0 + s b1) ds`, i.e.
/// `τ φ1(τM) b0 + τ² φ2(τM) b1`, with one exponential of the
/// `(n + 2)`-dimensional augmented matrix
///
/// ```text
/// [ τM  τ²b1  τb0 ]
/// [ 0    0     1  ]
/// [ 0    0     0  ]
/// ```
///
/// whose last column carries the integral in its first `n` entries.
pub fn affine_exp_integral(m: &DenseMatrix, tau: f64, b0: &DenseVector, b1: &DenseVector) -> Result<DenseVector> {
    let n = m.require_square()?;
    b0.check_len("affine_exp_integral b0", n)?;
    b1.check_len("affine_exp_integral b1", n)?;
    if !(tau >= 0.0) {
        return Err(Error::Domain(format!("negative time step {tau}")));
    }
    let mut z = DenseMatrix::zeros(n + 2, n + 2);
    z.set_block(0, 0, &m.scale(tau));
    for i in 0..n {
        z[(i, n)] = tau * tau * b1[i];
        z[(i, n + 1)] = tau * b0[i];
    }
    z[(n, n + 1)] = 1.0;
    let e = expm(&z)?;
    Ok(DenseVector::from_fn(n, |i| e[(i, n + 1)]))
}
