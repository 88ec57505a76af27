//! Conjugate residual solver for the inexact linear systems
//! `(I + eta B) s = -eta g` arising in the line search.
//!
//! The solver stops at the first iterate with `||A s_k - b|| <= alpha ||s_k||`,
//! starting from `s_0 = 0`.

use crate::error::{Error, Result};
use crate::types::{Matrix, Vector};

/// A symmetric linear map applied through matrix-vector products.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, v: &Vector) -> Vector;
}

impl LinearOperator for Matrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, v: &Vector) -> Vector {
        self * v
    }
}

/// `I + eta * B` without materializing the sum.
pub struct ShiftedOperator<'a> {
    pub b: &'a Matrix,
    pub eta: f64,
}

impl LinearOperator for ShiftedOperator<'_> {
    fn dim(&self) -> usize {
        self.b.nrows()
    }

    fn apply(&self, v: &Vector) -> Vector {
        let mut out = self.b * v;
        out *= self.eta;
        out += v;
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrResult {
    pub s: Vector,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Operator applications actually performed.
    pub matvecs: usize,
    /// `||r_k||` for k = 0..=iterations.
    pub residual_history: Vec<f64>,
    /// `||s_k||` for k = 0..=iterations.
    pub step_norm_history: Vec<f64>,
}

/// Iteration cap for a CR solve given curvature estimates of the operator.
///
/// `ceil(2 sqrt(kappa) log(2 lambda_max / alpha)) + 10 d`, capped at `20 d`.
pub fn iteration_cap(dim: usize, lambda_max: f64, kappa: f64, alpha: f64) -> usize {
    let guaranteed = 2.0 * kappa.max(1.0).sqrt() * (2.0 * lambda_max / alpha).ln().max(0.0);
    let cap = 20 * dim.max(1);
    if !guaranteed.is_finite() {
        return cap;
    }
    (guaranteed.ceil() as usize + 10 * dim).min(cap)
}

/// Solve `a s = b` approximately: returns the first CR iterate with
/// `||b - a s_k|| <= alpha ||s_k||`.
///
/// `A p_{k+1}` is formed by recurrence, so each iteration costs exactly one
/// fresh product (`A p_0` at k = 0, `A r_k` afterwards).
pub fn conjugate_residual<A: LinearOperator + ?Sized>(
    a: &A,
    b: &Vector,
    alpha: f64,
    max_iters: usize,
) -> Result<CrResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            reason: format!("{alpha} not in (0, 1)"),
        });
    }
    let d = a.dim();
    if b.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: b.len(),
        });
    }

    let mut s = Vector::zeros(d);
    let mut r = b.clone();
    let mut p = r.clone();
    let mut ap = Vector::zeros(d);
    let mut ar = Vector::zeros(d);
    let mut r_ar = 0.0;
    let mut matvecs = 0usize;
    let mut residual_history = vec![r.norm()];
    let mut step_norm_history = vec![0.0];
    let floor = (f64::EPSILON * b.norm()).powi(2);

    let mut k = 0usize;
    loop {
        let r_norm = residual_history[k];
        let s_norm = step_norm_history[k];
        if r_norm <= alpha * s_norm || r_norm == 0.0 {
            return Ok(CrResult {
                s,
                residual_norm: r_norm,
                iterations: k,
                matvecs,
                residual_history,
                step_norm_history,
            });
        }
        if k == max_iters {
            return Err(Error::IterationCapExceeded {
                max_iters,
                residual: r_norm,
                target: alpha * s_norm,
            });
        }

        if k == 0 {
            ap = a.apply(&p);
            ar.copy_from(&ap);
            r_ar = r.dot(&ar);
        } else {
            let ar_next = a.apply(&r);
            let r_ar_next = r.dot(&ar_next);
            let beta = r_ar_next / r_ar;
            p *= beta;
            p += &r;
            ap *= beta;
            ap += &ar_next;
            ar = ar_next;
            r_ar = r_ar_next;
        }
        matvecs += 1;

        if r_ar <= 0.0 {
            // <r, A r> <= 0 with r != 0: the operator is not positive definite.
            return Err(Error::IterationCapExceeded {
                max_iters: k,
                residual: r_norm,
                target: alpha * s_norm,
            });
        }
        let ap_sq = ap.norm_squared();
        if ap_sq <= floor {
            // p_k vanished: the residual is at the rounding floor.
            return Ok(CrResult {
                s,
                residual_norm: r_norm,
                iterations: k,
                matvecs,
                residual_history,
                step_norm_history,
            });
        }
        let step = r_ar / ap_sq;
        s.axpy(step, &p, 1.0);
        r.axpy(-step, &ap, 1.0);
        k += 1;
        residual_history.push(r.norm());
        step_norm_history.push(s.norm());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn identity_converges_in_one_step() {
        let a = DMatrix::<f64>::identity(2, 2);
        let b = DVector::from_vec(vec![3.0, 4.0]);
        let res = conjugate_residual(&a, &b, 0.25, 10).unwrap();
        assert_eq!(res.iterations, 1);
        assert_eq!(res.matvecs, 1);
        assert_eq!(res.s, b);
        assert_eq!(res.residual_norm, 0.0);
    }

    #[test]
    fn diagonal_system_matches_direct_solve() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let res = conjugate_residual(&a, &b, 1e-10, 10).unwrap();
        // Direct componentwise solve: b_i / a_ii.
        assert!((res.s[0] - 1.0).abs() < 1e-12);
        assert!((res.s[1] - 0.5).abs() < 1e-12);
        assert!(res.iterations <= 2);
    }

    #[test]
    fn zero_rhs_returns_immediately() {
        let a = DMatrix::<f64>::identity(3, 3) * 5.0;
        let res = conjugate_residual(&a, &DVector::zeros(3), 0.5, 10).unwrap();
        assert_eq!(res.iterations, 0);
        assert_eq!(res.matvecs, 0);
        assert_eq!(res.s, DVector::zeros(3));
    }

    #[test]
    fn shifted_operator_matches_materialized() {
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let op = ShiftedOperator { b: &b, eta: 0.5 };
        let v = DVector::from_vec(vec![1.0, -2.0]);
        let dense = DMatrix::<f64>::identity(2, 2) + &b * 0.5;
        assert_eq!(op.apply(&v), &dense * &v);
    }

    #[test]
    fn indefinite_operator_is_rejected() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        let b = DVector::from_vec(vec![1.0, 1.0]);
        // <r, A r> = 0 on the first step.
        let err = conjugate_residual(&a, &b, 1e-8, 5).unwrap_err();
        assert!(matches!(err, Error::IterationCapExceeded { .. }));
    }

    #[test]
    fn stalling_operator_reports_cap() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e6]));
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let err = conjugate_residual(&a, &b, 1e-15, 0).unwrap_err();
        assert!(matches!(err, Error::IterationCapExceeded { max_iters: 0, .. }));
    }

    #[test]
    fn finite_distinct_spectrum_terminates_exactly() {
        // Three distinct eigenvalues: exact arithmetic reaches r = 0 in 3 steps.
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 4.0, 4.0, 9.0]));
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let res = conjugate_residual(&a, &b, 1e-13, 50).unwrap();
        assert!(res.iterations <= 3, "iterations = {}", res.iterations);
    }

    #[test]
    fn iteration_cap_formula() {
        assert_eq!(iteration_cap(10, 1.0, 1.0, 0.5), (2.0f64 * 4.0f64.ln()).ceil() as usize + 100);
        assert_eq!(iteration_cap(3, 1e6, 1e6, 1e-3), 60);
    }
}
