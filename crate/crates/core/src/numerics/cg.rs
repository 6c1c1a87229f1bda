//! Conjugate-gradient solver for symmetric positive-definite operators.

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::{axpy, dot, norm, NormKind};

/// Solver knobs. `max_iters = None` means `10 * dim`.
#[derive(Debug, Clone, Copy)]
pub struct CgConfig<T> {
    /// Relative residual target: stop once `||Ax - b|| <= tol * ||b||`.
    pub tol: T,
    pub max_iters: Option<usize>,
    /// Added to the diagonal: solves `(A + damping I) x = b`. Escape hatch
    /// for nearly singular operators; zero by default.
    pub damping: T,
}

impl<T: Real> Default for CgConfig<T> {
    fn default() -> Self {
        Self {
            tol: T::of(1e-10),
            max_iters: None,
            damping: T::zero(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgSolution<T> {
    pub x: Vec<T>,
    /// Whether the residual target was met within the iteration budget. When
    /// false, `x` is the best iterate seen.
    pub converged: bool,
    pub iterations: usize,
    pub rel_residual: T,
}

/// Solves `(A + damping I) x = b` where `apply_a` computes `A v`.
///
/// Requires the (damped) operator to be symmetric positive-definite; a
/// non-positive curvature or non-finite value aborts with an error.
pub fn conjugate_gradient<T, F>(apply_a: F, b: &[T], config: &CgConfig<T>) -> Result<CgSolution<T>>
where
    T: Real,
    F: Fn(&[T]) -> Vec<T>,
{
    let n = b.len();
    if !b.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            context: "conjugate_gradient rhs".into(),
        });
    }
    let b_norm = norm(b, NormKind::L2);
    if b_norm == T::zero() {
        return Ok(CgSolution {
            x: vec![T::zero(); n],
            converged: true,
            iterations: 0,
            rel_residual: T::zero(),
        });
    }
    let max_iters = config.max_iters.unwrap_or(10 * n.max(1));

    let mut x = vec![T::zero(); n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs = dot(&r, &r);

    let mut best_x = x.clone();
    let mut best_res = b_norm;
    let mut iterations = 0;

    for _ in 0..max_iters {
        let mut ap = apply_a(&p);
        if ap.len() != n {
            return Err(Error::Shape {
                context: "conjugate_gradient operator",
                details: format!("expected output length {}, got {}", n, ap.len()),
            });
        }
        if config.damping != T::zero() {
            axpy(&mut ap, config.damping, &p);
        }
        let curvature = dot(&p, &ap);
        if !curvature.is_finite() || curvature <= T::zero() {
            return Err(Error::NonFinite {
                context: format!(
                    "conjugate_gradient: non-SPD operator (p'Ap = {})",
                    curvature
                ),
            });
        }
        let alpha = rs / curvature;
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        iterations += 1;

        let rs_new = dot(&r, &r);
        if !rs_new.is_finite() {
            return Err(Error::NonFinite {
                context: "conjugate_gradient residual".into(),
            });
        }
        let res = rs_new.sqrt();
        if res < best_res {
            best_res = res;
            best_x.copy_from_slice(&x);
        }
        if res <= config.tol * b_norm {
            return Ok(CgSolution {
                x,
                converged: true,
                iterations,
                rel_residual: res / b_norm,
            });
        }
        let beta = rs_new / rs;
        rs = rs_new;
        for (pi, &ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }

    Ok(CgSolution {
        x: best_x,
        converged: false,
        iterations,
        rel_residual: best_res / b_norm,
    })
}
