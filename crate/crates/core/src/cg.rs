//! Preconditioned conjugate gradients for symmetric positive-definite
//! operators given as closures.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

pub(crate) struct Solve {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi preconditioner `z = r / diag`.
pub(crate) fn jacobi(diag: &[f64]) -> impl Fn(&[f64], &mut [f64]) + '_ {
    move |r, z| {
        for ((z, r), d) in z.iter_mut().zip(r).zip(diag) {
            *z = r / d;
        }
    }
}

/// Solves `A x = b` to `‖b − A x‖ ≤ tol · ‖b‖`, starting from `x0`.
/// `precond(r, z)` writes `z ≈ A⁻¹ r`.
pub(crate) fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    precond: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x0: Vec<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<Solve> {
    let n = b.len();
    let b_norm = math::sqrt(dot(b, b));
    if b_norm == 0.0 {
        return Ok(Solve {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut x = x0;
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = math::sqrt(dot(&r, &r)) / b_norm;
    let mut it = 0;
    while res > tol {
        if it == max_iters || !res.is_finite() {
            return Err(Error::SolverDivergence {
                iterations: it,
                residual: res,
            });
        }
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        precond(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = math::sqrt(dot(&r, &r)) / b_norm;
        it += 1;
    }
    Ok(Solve {
        x,
        iterations: it,
        relative_residual: res,
    })
}
