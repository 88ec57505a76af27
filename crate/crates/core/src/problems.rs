//! Test problems with certified curvature constants: random quadratics,
//! regularized logistic regression, and quadratics read from Matrix Market files.

use std::path::Path;

use nalgebra::QR;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::types::{symmetric_extremes, Curvature, InitialHessian, Matrix, Objective, OracleMode, SolverConfig, Vector};

fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Solve `a x = b` for symmetric positive definite `a` with two rounds of
/// iterative refinement.
fn spd_solve(a: &Matrix, b: &Vector) -> Result<Vector> {
    let chol = a.clone().cholesky().ok_or(Error::NotPositiveDefinite { lambda_min: f64::NAN })?;
    let mut x = chol.solve(b);
    for _ in 0..2 {
        let r = b - a * &x;
        x += chol.solve(&r);
    }
    Ok(x)
}

/// `f(x) = 1/2 x^T A x - b^T x`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    pub a: Matrix,
    pub b: Vector,
    curvature: Curvature,
    minimizer: Vector,
}

impl QuadraticProblem {
    /// Build from an explicit matrix; curvature constants are the extreme eigenvalues of `a`.
    pub fn from_parts(a: Matrix, b: Vector) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: a.ncols(),
            });
        }
        if b.len() != a.nrows() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: b.len(),
            });
        }
        let (lo, hi) = symmetric_extremes(&a)?;
        if !(lo > 0.0) {
            return Err(Error::NotPositiveDefinite { lambda_min: lo });
        }
        Self::with_curvature(a, b, lo, hi)
    }

    fn with_curvature(a: Matrix, b: Vector, mu: f64, l1: f64) -> Result<Self> {
        let minimizer = spd_solve(&a, &b)?;
        Ok(Self {
            a,
            b,
            curvature: Curvature::new(mu, l1, Some(0.0)),
            minimizer,
        })
    }
}

impl Objective for QuadraticProblem {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn grad(&self, x: &Vector) -> Vector {
        &self.a * x - &self.b
    }

    fn curvature(&self) -> Curvature {
        self.curvature
    }

    fn value(&self, x: &Vector) -> Option<f64> {
        Some(0.5 * x.dot(&(&self.a * x)) - self.b.dot(x))
    }

    fn hessian(&self, _x: &Vector) -> Option<Matrix> {
        Some(self.a.clone())
    }

    fn minimizer(&self) -> Option<&Vector> {
        Some(&self.minimizer)
    }
}

/// Eigenvalues log-uniformly spaced over `[mu, l1]` with both endpoints attained.
pub fn log_spaced_spectrum(d: usize, mu: f64, l1: f64) -> Vec<f64> {
    if d == 1 {
        return vec![l1];
    }
    let ratio = (l1 / mu).ln();
    (0..d)
        .map(|i| match i {
            0 => mu,
            i if i == d - 1 => l1,
            i => mu * (ratio * i as f64 / (d - 1) as f64).exp(),
        })
        .collect()
}

/// Random quadratic `A = Q diag(lambda) Q^T` with a seeded orthogonal `Q`.
pub fn make_quadratic(d: usize, mu: f64, l1: f64, seed: u64) -> Result<QuadraticProblem> {
    if !(mu > 0.0) || !(mu <= l1) || !l1.is_finite() {
        return Err(Error::InvalidSpectrum { mu, l1 });
    }
    if d == 0 {
        return Err(Error::InvalidParameter {
            name: "d",
            reason: "dimension must be positive".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = QR::new(gaussian_matrix(&mut rng, d, d)).q();
    let lambdas = Vector::from_vec(log_spaced_spectrum(d, mu, l1));
    let a = &q * Matrix::from_diagonal(&lambdas) * q.transpose();
    let a = (&a + a.transpose()) * 0.5;
    let b = gaussian_vector(&mut rng, d);
    QuadraticProblem::with_curvature(a, b, mu, l1)
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// `1 / (1 + exp(-t))` without overflow.
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `f(x) = (1/n) sum log(1 + exp(-y_i a_i^T x)) + (lambda/2) ||x||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticProblem {
    pub features: Matrix,
    pub labels: Vector,
    pub lambda: f64,
    curvature: Curvature,
    minimizer: Option<Vector>,
}

impl LogisticProblem {
    /// Build the objective and its curvature bounds. The minimizer is not computed here;
    /// see [`LogisticProblem::with_reference_minimizer`].
    pub fn new(features: Matrix, labels: Vector, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: format!("{lambda} must be positive"),
            });
        }
        let n = features.nrows();
        if n == 0 || features.ncols() == 0 {
            return Err(Error::InvalidParameter {
                name: "features",
                reason: "need at least one sample and one feature".into(),
            });
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: labels.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|y| **y != 1.0 && **y != -1.0) {
            return Err(Error::InvalidParameter {
                name: "labels",
                reason: format!("label {bad} is not +1 or -1"),
            });
        }
        let gram = features.transpose() * &features;
        let (_, top) = symmetric_extremes(&gram)?;
        let nf = n as f64;
        let l1 = lambda + top.max(0.0) / (4.0 * nf);
        let l2 = features.row_iter().map(|r| r.norm().powi(3)).sum::<f64>() / (6.0 * nf);
        Ok(Self {
            features,
            labels,
            lambda,
            curvature: Curvature::new(lambda, l1, Some(l2)),
            minimizer: None,
        })
    }

    /// Attach a reference minimizer: solve with the exact oracle to a gradient norm of
    /// `1e-12`, then polish with Newton steps on the exact Hessian.
    pub fn with_reference_minimizer(mut self) -> Result<Self> {
        let cfg = SolverConfig {
            oracle_mode: OracleMode::Exact,
            grad_tol: 1e-12,
            max_iters: 10_000,
            b0: InitialHessian::ScaledIdentity(None),
            ..SolverConfig::default()
        };
        let report = crate::solver::solve(&self, &cfg, &Vector::zeros(self.dim()))?;
        let mut x = report.final_x;
        let mut g = self.grad(&x);
        for _ in 0..5 {
            let h = self.hessian(&x).expect("logistic Hessian is available");
            let step = spd_solve(&h, &g)?;
            let cand = &x - step;
            let gc = self.grad(&cand);
            if gc.norm() >= g.norm() {
                break;
            }
            x = cand;
            g = gc;
        }
        self.minimizer = Some(x);
        Ok(self)
    }

    fn margins(&self, x: &Vector) -> Vector {
        (&self.features * x).component_mul(&self.labels)
    }
}

impl Objective for LogisticProblem {
    fn dim(&self) -> usize {
        self.features.ncols()
    }

    fn grad(&self, x: &Vector) -> Vector {
        let n = self.features.nrows() as f64;
        let m = self.margins(x);
        let w = Vector::from_fn(m.len(), |i, _| -self.labels[i] * sigmoid(-m[i]) / n);
        self.features.tr_mul(&w) + x * self.lambda
    }

    fn curvature(&self) -> Curvature {
        self.curvature
    }

    fn value(&self, x: &Vector) -> Option<f64> {
        let n = self.features.nrows() as f64;
        let data: f64 = self.margins(x).iter().map(|m| softplus(-m)).sum();
        Some(data / n + 0.5 * self.lambda * x.norm_squared())
    }

    fn hessian(&self, x: &Vector) -> Option<Matrix> {
        let n = self.features.nrows() as f64;
        let m = self.margins(x);
        let weights = Vector::from_fn(m.len(), |i, _| {
            let s = sigmoid(m[i]);
            s * (1.0 - s) / n
        });
        let scaled = Matrix::from_fn(self.features.nrows(), self.features.ncols(), |i, j| {
            self.features[(i, j)] * weights[i]
        });
        let d = self.dim();
        Some(self.features.tr_mul(&scaled) + Matrix::identity(d, d) * self.lambda)
    }

    fn minimizer(&self) -> Option<&Vector> {
        self.minimizer.as_ref()
    }
}

/// Synthetic logistic regression with unit-norm feature rows and labels drawn
/// from a planted linear model. The reference minimizer is attached.
pub fn make_logistic(n: usize, d: usize, lambda: f64, seed: u64) -> Result<LogisticProblem> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidParameter {
            name: "n, d",
            reason: format!("sizes must be positive (n = {n}, d = {d})"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = gaussian_matrix(&mut rng, n, d);
    for mut row in features.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    let planted = gaussian_vector(&mut rng, d) * 2.0;
    let labels = Vector::from_fn(n, |i, _| {
        let p = sigmoid(features.row(i).transpose().dot(&planted));
        if rng.random::<f64>() < p {
            1.0
        } else {
            -1.0
        }
    });
    LogisticProblem::new(features, labels, lambda)?.with_reference_minimizer()
}

fn parse_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        line,
        reason: reason.into(),
    }
}

/// Parse Matrix Market text (real or integer, general or symmetric,
/// coordinate or array layout) into a dense matrix.
pub fn parse_matrix_market(text: &str) -> Result<Matrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(1, "expected '%%MatrixMarket matrix <layout> <field> <symmetry>'"));
    }
    let coordinate = match tokens[2].as_str() {
        "coordinate" => true,
        "array" => false,
        other => return Err(parse_err(1, format!("unsupported layout {other:?}"))),
    };
    match tokens[3].as_str() {
        "real" | "integer" | "double" => {}
        other => return Err(parse_err(1, format!("unsupported field {other:?}"))),
    }
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(1, format!("unsupported symmetry {other:?}"))),
    };

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size) = body.next().ok_or_else(|| parse_err(1, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| parse_err(size_line, format!("{t:?}: {e}"))))
        .collect::<Result<_>>()?;
    let expected = if coordinate { 3 } else { 2 };
    if dims.len() != expected {
        return Err(parse_err(size_line, format!("expected {expected} size fields")));
    }
    let (rows, cols) = (dims[0], dims[1]);
    if rows != cols || rows == 0 {
        return Err(parse_err(size_line, format!("matrix must be square and nonempty, got {rows}x{cols}")));
    }
    let n = rows;
    let mut a = Matrix::zeros(n, n);
    let value = |line: usize, t: &str| t.parse::<f64>().map_err(|e| parse_err(line, format!("{t:?}: {e}")));

    if coordinate {
        let nnz = dims[2];
        let mut seen = 0usize;
        for (ln, l) in body {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 3 {
                return Err(parse_err(ln, "expected 'row col value'"));
            }
            let idx = |t: &str| -> Result<usize> {
                let i = t.parse::<usize>().map_err(|e| parse_err(ln, format!("{t:?}: {e}")))?;
                if i == 0 || i > n {
                    return Err(parse_err(ln, format!("index {i} out of range 1..={n}")));
                }
                Ok(i - 1)
            };
            let (i, j, v) = (idx(f[0])?, idx(f[1])?, value(ln, f[2])?);
            a[(i, j)] = v;
            if symmetric {
                a[(j, i)] = v;
            }
            seen += 1;
        }
        if seen != nnz {
            return Err(parse_err(size_line, format!("declared {nnz} entries, found {seen}")));
        }
    } else {
        let mut values = Vec::new();
        for (ln, l) in body {
            for t in l.split_whitespace() {
                values.push(value(ln, t)?);
            }
        }
        let want = if symmetric { n * (n + 1) / 2 } else { n * n };
        if values.len() != want {
            return Err(parse_err(size_line, format!("expected {want} values, found {}", values.len())));
        }
        let mut it = values.into_iter();
        for j in 0..n {
            let start = if symmetric { j } else { 0 };
            for i in start..n {
                let v = it.next().expect("count checked");
                a[(i, j)] = v;
                if symmetric {
                    a[(j, i)] = v;
                }
            }
        }
    }
    Ok(a)
}

/// Read a symmetric positive definite matrix and build `1/2 x^T A x - b^T x`.
/// `b` defaults to all ones.
pub fn load_matrix_market(path: &Path, b: Option<Vector>) -> Result<QuadraticProblem> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let a = parse_matrix_market(&text)?;
    let b = b.unwrap_or_else(|| Vector::from_element(a.nrows(), 1.0));
    QuadraticProblem::from_parts(a, b)
}
