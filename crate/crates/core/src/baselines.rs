//! Reference methods for comparison: fixed-step gradient descent and
//! inverse-form BFGS with Armijo backtracking.
//!
//! Both produce a [`SolverReport`] with the same trace schema as the main
//! solver; learner and oracle fields stay empty.

use crate::error::{Error, Result};
use crate::types::{
    validate_config, Derived, IterationRecord, Matrix, Method, Objective, SolverConfig, SolverReport, TerminalState,
    Termination, Vector,
};

/// `x - (1/l1) grad f(x)`.
pub fn gd_step<O: Objective + ?Sized>(x: &Vector, obj: &O) -> Vector {
    x - obj.grad(x) / obj.curvature().l1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoParams {
    pub c1: f64,
    pub shrink: f64,
    pub max_halvings: usize,
    /// Decreases smaller than `value_noise * |f(x)|` are treated as rounding.
    pub value_noise: f64,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            shrink: 0.5,
            max_halvings: 60,
            value_noise: 8.0 * f64::EPSILON,
        }
    }
}

/// Iterate, inverse Hessian approximation and the gradient at the iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct BfgsState {
    pub x: Vector,
    pub h: Matrix,
    pub g: Vector,
}

impl BfgsState {
    /// Start at `x` with `H_0 = I / l1`.
    pub fn new<O: Objective + ?Sized>(x: Vector, obj: &O) -> Self {
        let d = x.len();
        let g = obj.grad(&x);
        Self {
            h: Matrix::identity(d, d) / obj.curvature().l1,
            x,
            g,
        }
    }
}

/// Inverse BFGS update `(I - r s y^T) H (I - r y s^T) + r s s^T` with `r = 1/<y, s>`.
/// Returns `false` (and leaves `h` untouched) when the curvature guard rejects the pair.
pub fn bfgs_update(h: &mut Matrix, s: &Vector, y: &Vector) -> bool {
    let sy = s.dot(y);
    if sy <= 1e-12 * s.norm() * y.norm() {
        return false;
    }
    let r = 1.0 / sy;
    let hy = &*h * y;
    let yhy = y.dot(&hy);
    // Expanded form: H - r (s (Hy)^T + (Hy) s^T) + (r^2 y^T H y + r) s s^T.
    let shy = s * hy.transpose();
    *h -= (&shy + shy.transpose()) * r;
    *h += s * s.transpose() * (r * r * yhy + r);
    true
}

/// Outcome of one BFGS iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct BfgsStep {
    pub step: f64,
    pub ls_steps: usize,
    pub grad_evals: usize,
    pub updated: bool,
}

/// One BFGS iteration with Armijo backtracking on the function value.
pub fn bfgs_step<O: Objective + ?Sized>(state: &mut BfgsState, obj: &O, armijo: &ArmijoParams) -> Result<BfgsStep> {
    let f0 = obj.value(&state.x).ok_or(Error::MissingValue)?;
    let dir = -(&state.h * &state.g);
    let slope = state.g.dot(&dir);
    let noise = armijo.value_noise * f0.abs();
    let mut t = 1.0;
    for attempt in 1..=armijo.max_halvings {
        let cand = &state.x + &dir * t;
        let fc = obj.value(&cand).ok_or(Error::MissingValue)?;
        if fc <= f0 + armijo.c1 * t * slope + noise {
            let gc = obj.grad(&cand);
            let s = &cand - &state.x;
            let y = &gc - &state.g;
            let updated = bfgs_update(&mut state.h, &s, &y);
            state.x = cand;
            state.g = gc;
            return Ok(BfgsStep {
                step: t,
                ls_steps: attempt,
                grad_evals: 1,
                updated,
            });
        }
        t *= armijo.shrink;
    }
    Err(Error::LineSearchFailure {
        attempts: armijo.max_halvings,
    })
}

fn dist_sq<O: Objective + ?Sized>(obj: &O, x: &Vector) -> Option<f64> {
    obj.minimizer().map(|xs| (x - xs).norm_squared())
}

fn should_stop(cfg: &SolverConfig, k: usize, grad_norm: f64, dsq: Option<f64>) -> Option<Termination> {
    if grad_norm <= cfg.grad_tol {
        Some(Termination::GradTol)
    } else if matches!((cfg.dist_tol, dsq), (Some(t), Some(v)) if v <= t) {
        Some(Termination::DistTol)
    } else if k >= cfg.max_iters {
        Some(Termination::MaxIters)
    } else {
        None
    }
}

fn record(k: usize, eta: f64, ls_steps: usize, grad_evals: usize, dsq: Option<f64>, grad_norm: f64, step_sq: f64) -> IterationRecord {
    IterationRecord {
        k,
        eta,
        sigma: eta,
        backtracked: ls_steps > 1,
        ls_steps,
        grad_evals,
        matvecs_linsolve: 0,
        matvecs_extevec: 0,
        loss_value: None,
        dist_sq: dsq,
        grad_norm,
        step_sq,
    }
}

fn finish(
    method: Method,
    cfg: SolverConfig,
    x0: &Vector,
    x: Vector,
    records: Vec<IterationRecord>,
    termination: Termination,
    terminal: TerminalState,
    d: usize,
) -> SolverReport {
    SolverReport {
        method,
        records,
        rounds: Vec::new(),
        x0: x0.clone(),
        final_x: x,
        termination,
        terminal,
        config: cfg,
        b0: Matrix::zeros(d, d),
        derived: Derived::default(),
    }
}

/// Gradient descent with step `1/l1`. Uses the termination fields of `cfg`.
pub fn gradient_descent<O: Objective + ?Sized>(obj: &O, cfg: &SolverConfig, x0: &Vector) -> Result<SolverReport> {
    let d = obj.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x0.len(),
        });
    }
    let cfg = validate_config(cfg, d, &obj.curvature())?;
    let eta = 1.0 / obj.curvature().l1;
    let mut x = x0.clone();
    let mut records = Vec::new();
    let mut k = 0;
    loop {
        let g = obj.grad(&x);
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteIterate { k });
        }
        let gn = g.norm();
        let dsq = dist_sq(obj, &x);
        if let Some(reason) = should_stop(&cfg, k, gn, dsq) {
            let terminal = TerminalState {
                k,
                grad_norm: gn,
                dist_sq: dsq,
                grad_evals: 1,
            };
            return Ok(finish(Method::GradientDescent, cfg, x0, x, records, reason, terminal, d));
        }
        let step = &g * eta;
        records.push(record(k, eta, 1, 1, dsq, gn, step.norm_squared()));
        let next = &x - step;
        k += 1;
        if next == x {
            let terminal = TerminalState {
                k,
                grad_norm: gn,
                dist_sq: dsq,
                grad_evals: 0,
            };
            return Ok(finish(Method::GradientDescent, cfg, x0, next, records, Termination::Stalled, terminal, d));
        }
        x = next;
    }
}

/// BFGS from `x0` with `H_0 = I / l1`. Requires function values.
pub fn bfgs<O: Objective + ?Sized>(obj: &O, cfg: &SolverConfig, x0: &Vector) -> Result<SolverReport> {
    let d = obj.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x0.len(),
        });
    }
    let cfg = validate_config(cfg, d, &obj.curvature())?;
    if obj.value(x0).is_none() {
        return Err(Error::MissingValue);
    }
    let armijo = ArmijoParams::default();
    let mut state = BfgsState::new(x0.clone(), obj);
    let mut records = Vec::new();
    let mut k = 0;
    // The gradient at x0 is charged to iteration 0; later ones to the step that produced them.
    let mut pending_evals = 1;
    loop {
        if !state.g.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteIterate { k });
        }
        let gn = state.g.norm();
        let dsq = dist_sq(obj, &state.x);
        if let Some(reason) = should_stop(&cfg, k, gn, dsq) {
            let terminal = TerminalState {
                k,
                grad_norm: gn,
                dist_sq: dsq,
                grad_evals: pending_evals,
            };
            return Ok(finish(Method::Bfgs, cfg, x0, state.x, records, reason, terminal, d));
        }
        let prev = state.x.clone();
        let step = bfgs_step(&mut state, obj, &armijo)?;
        let step_sq = (&state.x - &prev).norm_squared();
        records.push(record(k, step.step, step.ls_steps, pending_evals, dsq, gn, step_sq));
        pending_evals = step.grad_evals;
        k += 1;
        if step_sq == 0.0 {
            let terminal = TerminalState {
                k,
                grad_norm: state.g.norm(),
                dist_sq: dist_sq(obj, &state.x),
                grad_evals: pending_evals,
            };
            return Ok(finish(Method::Bfgs, cfg, x0, state.x, records, Termination::Stalled, terminal, d));
        }
    }
}
