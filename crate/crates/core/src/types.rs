//! Domain types shared by every solver component: the objective oracle
//! contract, solver configuration, and the per-iteration trace.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Curvature metadata of a strongly convex, smooth objective.
///
/// `mu` is the strong convexity modulus, `l1` the gradient Lipschitz
/// constant and `l2` (when known) the Lipschitz constant of the Hessian
/// measured at the minimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curvature {
    pub mu: f64,
    pub l1: f64,
    pub l2: Option<f64>,
}

impl Curvature {
    pub fn new(mu: f64, l1: f64, l2: Option<f64>) -> Self {
        Self { mu, l1, l2 }
    }

    pub fn condition_number(&self) -> f64 {
        self.l1 / self.mu
    }
}

/// Gradient oracle of a `mu`-strongly convex, `l1`-smooth function.
///
/// Only `grad` is used by the solver. Values, Hessians and the minimizer are
/// optional ground truth consumed by baselines, diagnostics and verification.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    fn grad(&self, x: &Vector) -> Vector;

    fn curvature(&self) -> Curvature;

    fn value(&self, _x: &Vector) -> Option<f64> {
        None
    }

    fn hessian(&self, _x: &Vector) -> Option<Matrix> {
        None
    }

    fn minimizer(&self) -> Option<&Vector> {
        None
    }
}

/// An objective assembled from closures.
pub struct FnObjective<G, F = fn(&Vector) -> f64>
where
    G: Fn(&Vector) -> Vector + Sync,
    F: Fn(&Vector) -> f64 + Sync,
{
    dim: usize,
    grad: G,
    value: Option<F>,
    curvature: Curvature,
    minimizer: Option<Vector>,
}

impl<G> FnObjective<G>
where
    G: Fn(&Vector) -> Vector + Sync,
{
    pub fn new(dim: usize, curvature: Curvature, grad: G) -> Self {
        Self {
            dim,
            grad,
            value: None,
            curvature,
            minimizer: None,
        }
    }
}

impl<G, F> FnObjective<G, F>
where
    G: Fn(&Vector) -> Vector + Sync,
    F: Fn(&Vector) -> f64 + Sync,
{
    pub fn with_value<F2>(self, value: F2) -> FnObjective<G, F2>
    where
        F2: Fn(&Vector) -> f64 + Sync,
    {
        FnObjective {
            dim: self.dim,
            grad: self.grad,
            value: Some(value),
            curvature: self.curvature,
            minimizer: self.minimizer,
        }
    }

    pub fn with_minimizer(mut self, x_star: Vector) -> Self {
        self.minimizer = Some(x_star);
        self
    }
}

impl<G, F> Objective for FnObjective<G, F>
where
    G: Fn(&Vector) -> Vector + Sync,
    F: Fn(&Vector) -> f64 + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn grad(&self, x: &Vector) -> Vector {
        (self.grad)(x)
    }

    fn curvature(&self) -> Curvature {
        self.curvature
    }

    fn value(&self, x: &Vector) -> Option<f64> {
        self.value.as_ref().map(|f| f(x))
    }

    fn minimizer(&self) -> Option<&Vector> {
        self.minimizer.as_ref()
    }
}

/// How the initial Hessian approximation `B_0` is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialHessian {
    /// `factor * I`; `None` means `l1 * I`.
    ScaledIdentity(Option<f64>),
    Explicit(Matrix),
}

impl InitialHessian {
    pub fn materialize(&self, dim: usize, curvature: &Curvature) -> Matrix {
        match self {
            InitialHessian::ScaledIdentity(factor) => {
                Matrix::identity(dim, dim) * factor.unwrap_or(curvature.l1)
            }
            InitialHessian::Explicit(m) => m.clone(),
        }
    }
}

/// Separation oracle used by the Hessian learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMode {
    /// Randomized Lanczos with the probabilistic iteration budget.
    Lanczos,
    /// Full symmetric eigendecomposition (deterministic reference).
    Exact,
}

impl OracleMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            OracleMode::Lanczos => "lanczos",
            OracleMode::Exact => "exact",
        }
    }
}

impl std::str::FromStr for OracleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lanczos" => Ok(OracleMode::Lanczos),
            "exact" => Ok(OracleMode::Exact),
            other => Err(Error::Config {
                key: "oracle_mode".into(),
                reason: format!("expected lanczos or exact, got {other:?}"),
            }),
        }
    }
}

/// All tunables of the solver. `None` fields are filled by [`validate_config`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta: f64,
    pub sigma0: Option<f64>,
    pub rho: f64,
    pub delta: Option<f64>,
    pub p: f64,
    pub b0: InitialHessian,
    pub oracle_mode: OracleMode,
    pub seed: u64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub dist_tol: Option<f64>,
    pub max_backtracks_slack: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha1: 0.25,
            alpha2: 0.25,
            beta: 0.5,
            sigma0: None,
            rho: 1.0 / 18.0,
            delta: None,
            p: 0.01,
            b0: InitialHessian::ScaledIdentity(None),
            oracle_mode: OracleMode::Lanczos,
            seed: 0,
            max_iters: 20_000,
            grad_tol: 1e-10,
            dist_tol: None,
            max_backtracks_slack: 8,
        }
    }
}

impl SolverConfig {
    /// Trial step at k = 0. Panics on an unvalidated config.
    pub fn sigma0(&self) -> f64 {
        self.sigma0.expect("config not validated")
    }

    pub fn delta(&self) -> f64 {
        self.delta.expect("config not validated")
    }

    /// Serialize to flat `key = value` lines.
    ///
    /// Explicit `B_0` matrices cannot be expressed in this format.
    pub fn to_kv_string(&self) -> Result<String> {
        let mut out = String::new();
        let opt = |v: Option<f64>| v.map_or_else(|| "auto".to_string(), |x| format!("{x:e}"));
        let b0 = match &self.b0 {
            InitialHessian::ScaledIdentity(None) => "identity".to_string(),
            InitialHessian::ScaledIdentity(Some(f)) => format!("identity:{f:e}"),
            InitialHessian::Explicit(_) => {
                return Err(Error::Config {
                    key: "b0".into(),
                    reason: "explicit matrices are not representable as key-value text".into(),
                })
            }
        };
        let _ = writeln!(out, "alpha1 = {:e}", self.alpha1);
        let _ = writeln!(out, "alpha2 = {:e}", self.alpha2);
        let _ = writeln!(out, "beta = {:e}", self.beta);
        let _ = writeln!(out, "sigma0 = {}", opt(self.sigma0));
        let _ = writeln!(out, "rho = {:e}", self.rho);
        let _ = writeln!(out, "delta = {}", opt(self.delta));
        let _ = writeln!(out, "p = {:e}", self.p);
        let _ = writeln!(out, "b0 = {b0}");
        let _ = writeln!(out, "oracle_mode = {}", self.oracle_mode.as_str());
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "max_iters = {}", self.max_iters);
        let _ = writeln!(out, "grad_tol = {:e}", self.grad_tol);
        let _ = writeln!(out, "dist_tol = {}", opt(self.dist_tol));
        let _ = writeln!(out, "max_backtracks_slack = {}", self.max_backtracks_slack);
        Ok(out)
    }

    /// Parse `key = value` lines on top of the defaults. Blank lines and
    /// `#` comments are ignored; unknown keys are rejected.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = SolverConfig::default();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                key: line.to_string(),
                reason: "expected key = value".into(),
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Set a single field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |reason: String| Error::Config {
            key: key.to_string(),
            reason,
        };
        let float = |v: &str| v.parse::<f64>().map_err(|e| bad(format!("{v:?}: {e}")));
        let opt_float = |v: &str| {
            if v == "auto" || v == "none" {
                Ok(None)
            } else {
                float(v).map(Some)
            }
        };
        let int = |v: &str| v.parse::<u64>().map_err(|e| bad(format!("{v:?}: {e}")));
        match key {
            "alpha1" => self.alpha1 = float(value)?,
            "alpha2" => self.alpha2 = float(value)?,
            "beta" => self.beta = float(value)?,
            "sigma0" => self.sigma0 = opt_float(value)?,
            "rho" => self.rho = float(value)?,
            "delta" => self.delta = opt_float(value)?,
            "p" => self.p = float(value)?,
            "b0" => {
                self.b0 = match value.split_once(':') {
                    None if value == "identity" => InitialHessian::ScaledIdentity(None),
                    Some(("identity", f)) => InitialHessian::ScaledIdentity(Some(float(f)?)),
                    _ => return Err(bad(format!("expected identity[:factor], got {value:?}"))),
                }
            }
            "oracle_mode" => self.oracle_mode = value.parse()?,
            "seed" => self.seed = int(value)?,
            "max_iters" => self.max_iters = int(value)? as usize,
            "grad_tol" => self.grad_tol = float(value)?,
            "dist_tol" => self.dist_tol = opt_float(value)?,
            "max_backtracks_slack" => self.max_backtracks_slack = int(value)? as usize,
            _ => return Err(bad("unknown key".into())),
        }
        Ok(())
    }
}

/// Default SEP slack `min{mu/(l1-mu), 1}`, saturating at 1 when `l1 = mu`.
pub fn default_delta(mu: f64, l1: f64) -> f64 {
    if l1 - mu <= 0.0 {
        1.0
    } else {
        (mu / (l1 - mu)).min(1.0)
    }
}

fn in_range(name: &'static str, v: f64, ok: bool, expect: &str) -> Result<()> {
    if ok && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("{v} not in {expect}"),
        })
    }
}

/// Check `cfg` against the objective's curvature metadata and fill defaults.
pub fn validate_config(cfg: &SolverConfig, dim: usize, curvature: &Curvature) -> Result<SolverConfig> {
    let Curvature { mu, l1, .. } = *curvature;
    if !(mu > 0.0) || !mu.is_finite() || !l1.is_finite() {
        return Err(Error::InvalidParameter {
            name: "mu",
            reason: format!("mu = {mu}, l1 = {l1} must be finite with mu > 0"),
        });
    }
    if l1 < mu {
        return Err(Error::DegenerateCurvature { mu, l1 });
    }
    in_range("alpha1", cfg.alpha1, (0.0..1.0).contains(&cfg.alpha1), "[0, 1)")?;
    in_range("alpha2", cfg.alpha2, cfg.alpha2 > 0.0 && cfg.alpha2 < 1.0, "(0, 1)")?;
    if cfg.alpha1 + cfg.alpha2 >= 1.0 {
        return Err(Error::ParameterConflict {
            alpha1: cfg.alpha1,
            alpha2: cfg.alpha2,
        });
    }
    in_range("beta", cfg.beta, cfg.beta > 0.0 && cfg.beta < 1.0, "(0, 1)")?;
    in_range("rho", cfg.rho, cfg.rho > 0.0, "(0, inf)")?;
    in_range("p", cfg.p, cfg.p > 0.0 && cfg.p < 1.0, "(0, 1)")?;
    in_range("grad_tol", cfg.grad_tol, cfg.grad_tol >= 0.0, "[0, inf)")?;
    if let Some(t) = cfg.dist_tol {
        in_range("dist_tol", t, t >= 0.0, "[0, inf)")?;
    }

    let floor = cfg.alpha2 * cfg.beta / l1;
    let sigma0 = cfg.sigma0.unwrap_or(1.0 / (4.0 * l1));
    in_range("sigma0", sigma0, sigma0 > 0.0, "(0, inf)")?;
    if sigma0 < floor {
        return Err(Error::StepSeedTooSmall { sigma0, floor });
    }

    let delta = cfg.delta.unwrap_or_else(|| default_delta(mu, l1));
    in_range("delta", delta, delta > 0.0 && delta <= 1.0, "(0, 1]")?;

    let b0 = match &cfg.b0 {
        InitialHessian::ScaledIdentity(factor) => {
            let f = factor.unwrap_or(l1);
            if !(f >= mu && f <= l1) {
                return Err(Error::SpectrumViolation { min: f, max: f, mu, l1 });
            }
            InitialHessian::ScaledIdentity(Some(f))
        }
        InitialHessian::Explicit(m) => {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.nrows(),
                });
            }
            let (min, max) = symmetric_extremes(m)?;
            let tol = 1e-12 * l1;
            if min < mu - tol || max > l1 + tol {
                return Err(Error::SpectrumViolation { min, max, mu, l1 });
            }
            InitialHessian::Explicit(m.clone())
        }
    };

    Ok(SolverConfig {
        sigma0: Some(sigma0),
        delta: Some(delta),
        b0,
        ..cfg.clone()
    })
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub(crate) fn symmetric_extremes(m: &Matrix) -> Result<(f64, f64)> {
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * m.amax().max(1.0) {
        let (i, j) = argmax_asym(m);
        return Err(Error::NotSymmetric { i, j, gap: asym });
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 0).ok_or(Error::EigFailure)?;
    Ok((eig.eigenvalues.min(), eig.eigenvalues.max()))
}

fn argmax_asym(m: &Matrix) -> (usize, usize) {
    let mut best = (0, 0, 0.0);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let g = (m[(i, j)] - m[(j, i)]).abs();
            if g > best.2 {
                best = (i, j, g);
            }
        }
    }
    (best.0, best.1)
}

/// One row of the solver trace.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    /// Accepted step size `eta_k`.
    pub eta: f64,
    /// Trial step `sigma_k` the line search started from.
    pub sigma: f64,
    /// The first trial step was rejected (k belongs to the backtracking set).
    pub backtracked: bool,
    pub ls_steps: usize,
    /// Gradient evaluations charged to this iteration (one at `x_k` plus one per attempt).
    pub grad_evals: usize,
    pub matvecs_linsolve: usize,
    pub matvecs_extevec: usize,
    /// `l_k(B_k)` for backtracked iterations.
    pub loss_value: Option<f64>,
    /// `||x_k - x*||^2` when the minimizer is known.
    pub dist_sq: Option<f64>,
    pub grad_norm: f64,
    /// `||x_hat_k - x_k||^2`.
    pub step_sq: f64,
}

/// One online-learning round (a backtracked iteration).
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerRound {
    pub t: usize,
    pub k: usize,
    /// Hessian approximation played in this round.
    pub b: Matrix,
    pub s: Vector,
    pub y: Vector,
    pub loss: f64,
    /// `||W_{t+1}||_F` after the update.
    pub w_frobenius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradTol,
    DistTol,
    MaxIters,
    Stalled,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::GradTol => "grad_tol",
            Termination::DistTol => "dist_tol",
            Termination::MaxIters => "max_iters",
            Termination::Stalled => "stalled",
        }
    }
}

/// State at the last iterate, where the loop stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalState {
    pub k: usize,
    pub grad_norm: f64,
    pub dist_sq: Option<f64>,
    /// Gradient evaluations spent on the termination test itself.
    pub grad_evals: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Qnpe,
    GradientDescent,
    Bfgs,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Qnpe => "qnpe",
            Method::GradientDescent => "gd",
            Method::Bfgs => "bfgs",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qnpe" => Ok(Method::Qnpe),
            "gd" => Ok(Method::GradientDescent),
            "bfgs" => Ok(Method::Bfgs),
            other => Err(Error::Config {
                key: "method".into(),
                reason: format!("unknown method {other:?}"),
            }),
        }
    }
}

/// Quantities derived from a finished run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Derived {
    pub inv_eta_sq_sum: f64,
    /// Iteration threshold after which the superlinear envelope beats the linear one.
    pub n_tr: Option<f64>,
    /// Iteration-complexity bound evaluated at the final accuracy.
    pub n_eps_bound: Option<f64>,
}

/// Full record of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub method: Method,
    pub records: Vec<IterationRecord>,
    pub rounds: Vec<LearnerRound>,
    pub x0: Vector,
    pub final_x: Vector,
    pub termination: Termination,
    pub terminal: TerminalState,
    /// Validated configuration the run used.
    pub config: SolverConfig,
    pub b0: Matrix,
    pub derived: Derived,
}

impl SolverReport {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn total_grad_evals(&self) -> usize {
        self.records.iter().map(|r| r.grad_evals).sum::<usize>() + self.terminal.grad_evals
    }

    pub fn total_ls_steps(&self) -> usize {
        self.records.iter().map(|r| r.ls_steps).sum()
    }

    pub fn total_matvecs_linsolve(&self) -> usize {
        self.records.iter().map(|r| r.matvecs_linsolve).sum()
    }

    pub fn total_matvecs_extevec(&self) -> usize {
        self.records.iter().map(|r| r.matvecs_extevec).sum()
    }

    /// Squared distances `||x_k - x*||^2` for k = 0..=N, when known.
    pub fn dist_sq_sequence(&self) -> Option<Vec<f64>> {
        let mut out: Vec<f64> = self
            .records
            .iter()
            .map(|r| r.dist_sq)
            .collect::<Option<Vec<_>>>()?;
        out.push(self.terminal.dist_sq?);
        Some(out)
    }
}
