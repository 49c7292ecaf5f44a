//! Oracles shared by the integration tests. None of them goes through the
//! library's exponential or φ-function code.

#![allow(dead_code)]

use std::f64::consts::PI;

use pdae_split::linalg::{DenseMatrix, DenseVector};

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let legendre = |x: f64| {
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=n {
            let k = k as f64;
            let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        (p1, dp)
    };
    (0..n)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre(x);
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Composite Gauss-Legendre rule on [a, b].
pub fn integrate(a: f64, b: f64, panels: usize, points: usize, mut f: impl FnMut(f64) -> DenseVector) -> DenseVector {
    let rule = gauss_legendre(points);
    let width = (b - a) / panels as f64;
    let mut acc: Option<DenseVector> = None;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * width;
        for &(x, w) in &rule {
            let v = f(mid + 0.5 * width * x).scale(0.5 * width * w);
            match acc.as_mut() {
                Some(s) => s.axpy(1.0, &v),
                None => acc = Some(v),
            }
        }
    }
    acc.expect("at least one node")
}

/// `exp(m) v` by its Taylor series, for moderate `|m|`.
pub fn taylor_exp_apply(m: &DenseMatrix, v: &DenseVector) -> DenseVector {
    let mut sum = v.clone();
    let mut term = v.clone();
    for k in 1..200 {
        term = m.matvec(&term).scale(1.0 / k as f64);
        sum.axpy(1.0, &term);
        if term.norm_inf() <= 1e-18 * sum.norm_inf().max(1e-300) {
            break;
        }
    }
    sum
}

/// Scalar `φ1(z) = (e^z - 1)/z`.
pub fn phi1(z: f64) -> f64 {
    if z.abs() < 1.0 {
        series(z, 1)
    } else {
        z.exp_m1() / z
    }
}

/// Scalar `φ2(z) = (e^z - 1 - z)/z²`.
pub fn phi2(z: f64) -> f64 {
    if z.abs() < 1.0 {
        series(z, 2)
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

fn series(z: f64, shift: u32) -> f64 {
    let mut fact: f64 = (1..=shift).map(f64::from).product();
    let mut power = 1.0;
    let mut sum = 0.0;
    for k in 0..40 {
        sum += power / fact;
        power *= z;
        fact *= f64::from(shift + k + 1);
    }
    sum
}
