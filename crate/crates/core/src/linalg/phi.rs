use super::DenseMatrix;
use crate::error::{Error, Result};

/// `exp(X)`, `φ1(X)` and `φ2(X)` for one matrix argument `X`, where
/// `φ1(z) = (e^z - 1)/z` and `φ2(z) = (e^z - 1 - z)/z²`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiSet {
    pub exp: DenseMatrix,
    pub phi1: DenseMatrix,
    pub phi2: DenseMatrix,
}

/// Norm bound for the Taylor base case.
const BASE_NORM: f64 = 0.5;
/// Number of Taylor terms of `φ2` at the base: the first omitted term is
/// below `0.5^14 / 16! ≈ 3e-18`.
const TAYLOR_TERMS: usize = 14;

/// Computes `exp`, `φ1`, `φ2` of `x` by scaling, a Taylor base case and the
/// doubling relations
///
/// ```text
/// exp(2z) = exp(z)²
/// φ1(2z)  = φ1(z) (exp(z) + 1) / 2
/// φ2(2z)  = (φ1(z) + φ2(z) (exp(z) + 1)) / 4
/// ```
pub fn phi_functions(x: &DenseMatrix) -> Result<PhiSet> {
    let (_, full) = phi_chain(x, 0)?;
    Ok(full)
}

/// Like [`phi_functions`] but also returns the set for `x / 2`, which the
/// doubling chain produces on the way.
pub fn phi_functions_with_half(x: &DenseMatrix) -> Result<(PhiSet, PhiSet)> {
    let (half, full) = phi_chain(x, 1)?;
    Ok((half.expect("at least one doubling"), full))
}

fn phi_chain(x: &DenseMatrix, min_doublings: i32) -> Result<(Option<PhiSet>, PhiSet)> {
    let n = x.require_square()?;
    if !x.is_finite() {
        return Err(Error::NonFinite("phi-function argument"));
    }
    let norm = x.norm_1();
    let needed = if norm > BASE_NORM {
        (norm / BASE_NORM).log2().ceil() as i32
    } else {
        0
    };
    let doublings = needed.max(min_doublings);
    let y = x.scale(0.5_f64.powi(doublings));

    let mut current = taylor_base(&y, n);
    let mut previous = None;
    for _ in 0..doublings {
        let next = double(&current);
        previous = Some(current);
        current = next;
    }
    Ok((previous, current))
}

fn taylor_base(y: &DenseMatrix, n: usize) -> PhiSet {
    // φ2(Y) = Σ_k Y^k / (k+2)!, evaluated by Horner.
    let coeff = |k: usize| -> f64 { 1.0 / (1..=k + 2).map(|j| j as f64).product::<f64>() };
    let mut phi2 = DenseMatrix::identity(n).scale(coeff(TAYLOR_TERMS - 1));
    for k in (0..TAYLOR_TERMS - 1).rev() {
        phi2 = y.matmul(&phi2);
        phi2.add_identity(coeff(k));
    }
    let mut phi1 = y.matmul(&phi2);
    phi1.add_identity(1.0);
    let mut exp = y.matmul(&phi1);
    exp.add_identity(1.0);
    PhiSet { exp, phi1, phi2 }
}

fn double(s: &PhiSet) -> PhiSet {
    let mut e_plus_one = s.exp.clone();
    e_plus_one.add_identity(1.0);
    let exp = s.exp.matmul(&s.exp);
    let phi1 = s.phi1.matmul(&e_plus_one).scale(0.5);
    let mut phi2 = s.phi2.matmul(&e_plus_one);
    phi2.add_scaled(1.0, &s.phi1);
    let phi2 = phi2.scale(0.25);
    PhiSet { exp, phi1, phi2 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{affine_exp_integral, expm, DenseVector};

    fn phi1(z: f64) -> f64 {
        if z.abs() < 1e-5 {
            1.0 + z / 2.0 + z * z / 6.0
        } else {
            z.exp_m1() / z
        }
    }

    fn phi2(z: f64) -> f64 {
        if z.abs() < 1e-3 {
            0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0
        } else {
            (z.exp_m1() - z) / (z * z)
        }
    }

    #[test]
    fn diagonal_values_match_scalar_formulas() {
        let d = [-2500.0, -40.0, -1.0, -1e-4, 0.0, 0.3, 3.0];
        let set = phi_functions(&DenseMatrix::from_diag(&d)).unwrap();
        for (i, z) in d.iter().enumerate() {
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
            assert!(
                rel(set.exp[(i, i)], z.exp()) < 1e-12 || (set.exp[(i, i)] - z.exp()).abs() < 1e-300,
                "exp {z}"
            );
            assert!(
                rel(set.phi1[(i, i)], phi1(*z)) < 1e-12,
                "phi1 {z}: {} vs {}",
                set.phi1[(i, i)],
                phi1(*z)
            );
            assert!(
                rel(set.phi2[(i, i)], phi2(*z)) < 1e-12,
                "phi2 {z}: {} vs {}",
                set.phi2[(i, i)],
                phi2(*z)
            );
        }
    }

    #[test]
    fn exponential_agrees_with_pade() {
        let x = DenseMatrix::from_fn(12, 12, |i, j| {
            if i == j {
                -2.0 - i as f64
            } else {
                0.3 * ((i * 7 + j * 3) % 5) as f64 - 0.6
            }
        })
        .scale(3.0);
        let set = phi_functions(&x).unwrap();
        let e = expm(&x).unwrap();
        assert!(set.exp.max_abs_diff(&e) < 1e-12 * e.max_abs().max(1.0));
    }

    #[test]
    fn matrix_phi_agrees_with_augmented_integral() {
        let m = DenseMatrix::from_fn(9, 9, |i, j| {
            if i == j {
                -4.0
            } else if i.abs_diff(j) == 1 {
                1.5
            } else {
                0.05 * (i as f64 - j as f64)
            }
        });
        let tau = 0.37;
        let b0 = DenseVector::from_fn(9, |i| (i as f64 * 0.7).sin());
        let b1 = DenseVector::from_fn(9, |i| (i as f64 * 0.3).cos());
        let set = phi_functions(&m.scale(tau)).unwrap();
        let mut via_phi = set.phi1.matvec(&b0).scale(tau);
        via_phi.axpy(tau * tau, &set.phi2.matvec(&b1));
        let via_aug = affine_exp_integral(&m, tau, &b0, &b1).unwrap();
        assert!(via_phi.max_abs_diff(&via_aug) < 1e-13);
    }

    #[test]
    fn half_step_set_is_consistent() {
        let x = DenseMatrix::from_fn(6, 6, |i, j| if i == j { -10.0 } else { 0.5 });
        let (half, full) = phi_functions_with_half(&x).unwrap();
        let direct_half = phi_functions(&x.scale(0.5)).unwrap();
        assert!(half.exp.max_abs_diff(&direct_half.exp) < 1e-14);
        assert!(half.phi1.max_abs_diff(&direct_half.phi1) < 1e-14);
        assert!(half.phi2.max_abs_diff(&direct_half.phi2) < 1e-14);
        assert!(full.exp.max_abs_diff(&half.exp.matmul(&half.exp)) < 1e-14);
    }

    #[test]
    fn small_argument_still_returns_half() {
        let x = DenseMatrix::from_diag(&[1e-3, -2e-3]);
        let (half, _) = phi_functions_with_half(&x).unwrap();
        assert!((half.phi1[(0, 0)] - phi1(5e-4)).abs() < 1e-15);
    }
}
