//! `name:key=val,...` problem specifications.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use qnpe::problems::{load_matrix_market, make_logistic, make_quadratic};
use qnpe::{Method, Objective};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Quadratic { d: usize, mu: f64, l1: f64, seed: u64 },
    Logistic { n: usize, d: usize, lambda: f64, seed: u64 },
    MatrixMarket { path: PathBuf },
}

fn usage(msg: impl Into<String>) -> BenchError {
    BenchError::Usage(msg.into())
}

struct Params<'a> {
    spec: &'a str,
    map: BTreeMap<&'a str, &'a str>,
}

impl<'a> Params<'a> {
    fn parse(spec: &'a str, body: &'a str, allowed: &[&str]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for item in body.split(',').filter(|s| !s.trim().is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| usage(format!("problem spec {spec:?}: expected key=value, got {item:?}")))?;
            let k = k.trim();
            if !allowed.contains(&k) {
                return Err(usage(format!("problem spec {spec:?}: unknown key {k:?}")));
            }
            if map.insert(k, v.trim()).is_some() {
                return Err(usage(format!("problem spec {spec:?}: duplicate key {k:?}")));
            }
        }
        Ok(Self { spec, map })
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let raw = self
            .map
            .get(key)
            .ok_or_else(|| usage(format!("problem spec {:?}: missing required key {key:?}", self.spec)))?;
        raw.parse::<T>()
            .map_err(|e| usage(format!("problem spec {:?}: {key}={raw}: {e}", self.spec)))
    }
}

impl ProblemSpec {
    /// Parse `quadratic:d=..,mu=..,l1=..,seed=..`, `logistic:n=..,d=..,lambda=..,seed=..`
    /// or `mm:<path>`. Generator seeds are mandatory.
    pub fn parse(spec: &str) -> Result<Self> {
        let (name, body) = spec
            .split_once(':')
            .ok_or_else(|| usage(format!("problem spec {spec:?}: expected name:params")))?;
        match name {
            "quadratic" => {
                let p = Params::parse(spec, body, &["d", "mu", "l1", "seed"])?;
                Ok(ProblemSpec::Quadratic {
                    d: p.get("d")?,
                    mu: p.get("mu")?,
                    l1: p.get("l1")?,
                    seed: p.get("seed")?,
                })
            }
            "logistic" => {
                let p = Params::parse(spec, body, &["n", "d", "lambda", "seed"])?;
                Ok(ProblemSpec::Logistic {
                    n: p.get("n")?,
                    d: p.get("d")?,
                    lambda: p.get("lambda")?,
                    seed: p.get("seed")?,
                })
            }
            "mm" => {
                if body.is_empty() {
                    return Err(usage("problem spec mm: missing path"));
                }
                Ok(ProblemSpec::MatrixMarket { path: PathBuf::from(body) })
            }
            other => Err(usage(format!("unknown problem {other:?} (expected quadratic, logistic or mm)"))),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Objective>> {
        Ok(match self {
            ProblemSpec::Quadratic { d, mu, l1, seed } => Box::new(make_quadratic(*d, *mu, *l1, *seed)?),
            ProblemSpec::Logistic { n, d, lambda, seed } => Box::new(make_logistic(*n, *d, *lambda, *seed)?),
            ProblemSpec::MatrixMarket { path } => Box::new(load_matrix_market(path, None)?),
        })
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemSpec::Quadratic { d, mu, l1, seed } => write!(f, "quadratic:d={d},mu={mu:e},l1={l1:e},seed={seed}"),
            ProblemSpec::Logistic { n, d, lambda, seed } => {
                write!(f, "logistic:n={n},d={d},lambda={lambda:e},seed={seed}")
            }
            ProblemSpec::MatrixMarket { path } => write!(f, "mm:{}", path.display()),
        }
    }
}

/// `method@problem` as used by the compare command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub method: Method,
    pub problem: ProblemSpec,
}

impl RunSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let (m, p) = s
            .split_once('@')
            .ok_or_else(|| usage(format!("run spec {s:?}: expected method@problem")))?;
        Ok(Self {
            method: m.parse()?,
            problem: ProblemSpec::parse(p)?,
        })
    }
}
