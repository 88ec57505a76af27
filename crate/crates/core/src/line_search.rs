//! Backtracking search over the step sizes `sigma, sigma*beta, sigma*beta^2, ...`.
//!
//! Each trial solves `(I + eta B) s = -eta g` inexactly and accepts the first
//! step whose gradient prediction error satisfies
//! `eta ||grad f(x + s) - g - B s|| <= alpha2 ||s||`.

use crate::error::{Error, Result};
use crate::linsolve::{conjugate_residual, iteration_cap, ShiftedOperator};
use crate::types::{Matrix, Objective, SolverConfig, Vector};

/// The last rejected candidate of a search that backtracked.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejected {
    pub eta: f64,
    pub x_tilde: Vector,
    pub grad_x_tilde: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchOutcome {
    pub eta: f64,
    pub x_hat: Vector,
    pub grad_x_hat: Vector,
    /// Attempts, including the accepted one. Equals the gradient evaluations spent.
    pub ls_steps: usize,
    pub matvecs: usize,
    pub rejected: Option<Rejected>,
}

impl LineSearchOutcome {
    pub fn backtracked(&self) -> bool {
        self.rejected.is_some()
    }
}

/// Attempts allowed before the search is declared broken.
pub fn attempt_cap(sigma: f64, l1: f64, alpha2: f64, beta: f64, slack: usize) -> usize {
    let needed = ((sigma * l1 / (alpha2 * beta)).ln() / (1.0 / beta).ln()).ceil();
    let needed = if needed.is_finite() && needed > 0.0 { needed as usize } else { 0 };
    needed + 1 + slack
}

struct Trial {
    s: Vector,
    matvecs: usize,
}

fn solve_step(b: &Matrix, g: &Vector, eta: f64, alpha1: f64, mu: f64, l1: f64) -> Result<Trial> {
    let d = g.len();
    let rhs = g * (-eta);
    if alpha1 == 0.0 {
        let a = Matrix::identity(d, d) + b * eta;
        let chol = a.cholesky().ok_or(Error::NotPositiveDefinite { lambda_min: f64::NAN })?;
        return Ok(Trial {
            s: chol.solve(&rhs),
            matvecs: 0,
        });
    }
    let op = ShiftedOperator { b, eta };
    let lambda_max = 1.0 + eta * (l1 + 0.5 * mu);
    let kappa = lambda_max / (1.0 + 0.5 * eta * mu);
    let cap = iteration_cap(d, lambda_max, kappa, alpha1);
    let res = conjugate_residual(&op, &rhs, alpha1, cap)?;
    Ok(Trial {
        s: res.s,
        matvecs: res.matvecs,
    })
}

/// Run the search from trial step `sigma` at `x` with gradient `g` and model `b`.
///
/// `cfg` must be validated. Matrix-vector products include the solver's and
/// the one product `B s` needed per attempt for the acceptance test.
pub fn backtrack<O: Objective + ?Sized>(
    x: &Vector,
    g: &Vector,
    b: &Matrix,
    sigma: f64,
    cfg: &SolverConfig,
    obj: &O,
) -> Result<LineSearchOutcome> {
    let curv = obj.curvature();
    let cap = attempt_cap(sigma, curv.l1, cfg.alpha2, cfg.beta, cfg.max_backtracks_slack);
    let mut eta = sigma;
    let mut matvecs = 0usize;
    let mut rejected: Option<Rejected> = None;

    for attempt in 1..=cap {
        let trial = solve_step(b, g, eta, cfg.alpha1, curv.mu, curv.l1)?;
        matvecs += trial.matvecs;
        let s = trial.s;
        let x_hat = x + &s;
        let grad_x_hat = obj.grad(&x_hat);
        let s_norm = s.norm();
        let accept = if s_norm == 0.0 {
            true
        } else {
            let bs = b * &s;
            matvecs += 1;
            let err = (&grad_x_hat - g - bs).norm();
            eta * err <= cfg.alpha2 * s_norm
        };
        if accept {
            return Ok(LineSearchOutcome {
                eta,
                x_hat,
                grad_x_hat,
                ls_steps: attempt,
                matvecs,
                rejected,
            });
        }
        rejected = Some(Rejected {
            eta,
            x_tilde: x_hat,
            grad_x_tilde: grad_x_hat,
        });
        eta *= cfg.beta;
    }
    Err(Error::BacktrackCapExceeded { attempts: cap, eta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{validate_config, Curvature, FnObjective};
    use nalgebra::DVector;

    #[test]
    fn exact_model_accepts_first_trial() {
        let a = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let a2 = a.clone();
        let obj = FnObjective::new(2, Curvature::new(0.5, 3.0, Some(0.0)), move |x: &Vector| &a2 * x - DVector::from_vec(vec![1.0, 1.0]));
        let cfg = validate_config(&SolverConfig::default(), 2, &obj.curvature()).unwrap();
        let x = DVector::from_vec(vec![3.0, -1.0]);
        let g = obj.grad(&x);
        let out = backtrack(&x, &g, &a, 7.0, &cfg, &obj).unwrap();
        assert_eq!(out.eta, 7.0);
        assert_eq!(out.ls_steps, 1);
        assert!(!out.backtracked());
    }

    #[test]
    fn scalar_trace_with_exact_solves() {
        // f = (c/2) x^2 with model b: accepted eta is the largest sigma*beta^i <= alpha2 / |c - b|.
        let c = 4.0;
        let obj = FnObjective::new(1, Curvature::new(1.0, 4.0, None), move |x: &Vector| x * c);
        let cfg = SolverConfig {
            alpha1: 0.0,
            ..validate_config(&SolverConfig::default(), 1, &obj.curvature()).unwrap()
        };
        let b = Matrix::from_element(1, 1, 1.0);
        let x = DVector::from_vec(vec![1.0]);
        let g = obj.grad(&x);
        let out = backtrack(&x, &g, &b, 1.0, &cfg, &obj).unwrap();
        // alpha2 / |c - b| = 1/12; powers of 1/2 below it: 1/16.
        assert_eq!(out.eta, 1.0 / 16.0);
        assert_eq!(out.ls_steps, 5);
        let rej = out.rejected.unwrap();
        assert_eq!(rej.eta, 1.0 / 8.0);
        assert_eq!(out.matvecs, 5);
    }

    #[test]
    fn zero_gradient_accepts() {
        let obj = FnObjective::new(2, Curvature::new(1.0, 1.0, None), |x: &Vector| x.clone());
        let cfg = validate_config(&SolverConfig::default(), 2, &obj.curvature()).unwrap();
        let x = Vector::zeros(2);
        let out = backtrack(&x, &Vector::zeros(2), &Matrix::identity(2, 2), 0.25, &cfg, &obj).unwrap();
        assert_eq!(out.ls_steps, 1);
        assert_eq!(out.x_hat, x);
    }

    #[test]
    fn wrong_metadata_hits_cap() {
        // Claimed l1 = 1 while the true curvature is 1e6.
        let obj = FnObjective::new(1, Curvature::new(1.0, 1.0, None), |x: &Vector| x * 1e6);
        let cfg = validate_config(&SolverConfig::default(), 1, &obj.curvature()).unwrap();
        let x = DVector::from_vec(vec![1.0]);
        let g = obj.grad(&x);
        let err = backtrack(&x, &g, &Matrix::identity(1, 1), cfg.sigma0(), &cfg, &obj).unwrap_err();
        assert!(matches!(err, Error::BacktrackCapExceeded { .. }));
    }

    #[test]
    fn attempt_cap_values() {
        // sigma L1 / (alpha2 beta) = 2 with beta = 1/2: one halving needed.
        assert_eq!(attempt_cap(0.25, 1.0, 0.25, 0.5, 0), 2);
        assert_eq!(attempt_cap(1e-9, 1.0, 0.25, 0.5, 3), 4);
    }
}
