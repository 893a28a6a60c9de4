//! Integrated regressors and synthetic responses.
//!
//! Regressors follow `x_t = x_{t-1} + v_t`, `v_t = r₀ v_{t-1} + ε_t`,
//! `ε_t ~ N(0, σ² I_d)`, started from `x_0` (zero by default) and `v_0 = 0`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HRegularSpec, LinkForm, ModelKind, TrendForm};
use crate::rng::{Purpose, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessConfig {
    pub n: usize,
    pub d: usize,
    pub r0: f64,
    pub sigma: f64,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    pub seed: u64,
}

impl ProcessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::InvalidArgument("n and d must be positive".into()));
        }
        if !(self.r0.abs() < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "AR coefficient r0 = {} must satisfy |r0| < 1",
                self.r0
            )));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("sigma = {} must be >= 0", self.sigma)));
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != self.d {
                return Err(Error::DimensionMismatch(format!(
                    "x0 has length {}, expected {}",
                    x0.len(),
                    self.d
                )));
            }
        }
        Ok(())
    }
}

/// Simulates `n` rows of the integrated process on replication stream 0.
pub fn gen_integrated(cfg: &ProcessConfig) -> Result<DMatrix<f64>> {
    gen_integrated_rep(cfg, 0)
}

/// Simulates the integrated process on the substream of `replication`.
pub fn gen_integrated_rep(cfg: &ProcessConfig, replication: u64) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    let (n, d) = (cfg.n, cfg.d);
    let mut stream = Stream::new(cfg.seed, replication, Purpose::Regressors);
    let mut x = DMatrix::zeros(n, d);
    let mut level = cfg.x0.clone().unwrap_or_else(|| vec![0.0; d]);
    let mut v = vec![0.0; d];
    for t in 0..n {
        for j in 0..d {
            v[j] = cfg.r0 * v[j] + stream.normal(cfg.sigma);
            level[j] += v[j];
            x[(t, j)] = level[j];
        }
    }
    Ok(x)
}

/// The data-generating recipe for one simulated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ModelKind,
    pub theta0: Vec<f64>,
    #[serde(default)]
    pub beta0: Option<Vec<f64>>,
    pub g0: LinkForm,
    #[serde(default)]
    pub f0: Option<TrendForm>,
    pub noise_sd: f64,
    #[serde(default = "default_r0")]
    pub r0: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
}

fn default_r0() -> f64 {
    0.1
}

fn default_sigma() -> f64 {
    0.6
}

impl ScenarioSpec {
    /// Single-index design with `θ₀ = (0.6, 0.8)`, `σ = 0.6`.
    pub fn si_part_one() -> Self {
        Self {
            kind: ModelKind::Si,
            theta0: vec![0.6, 0.8],
            beta0: None,
            g0: LinkForm::QuadraticGaussian,
            f0: None,
            noise_sd: 1.0,
            r0: 0.1,
            sigma: 0.6,
        }
    }

    /// Single-index design with `θ₀ = (1, 0)`, so the rotated and original
    /// coordinates coincide.
    pub fn si_part_two() -> Self {
        Self {
            theta0: vec![1.0, 0.0],
            ..Self::si_part_one()
        }
    }

    /// Partially linear design with `β₀ = (0.3, 0.5)`, `θ₀ = (0.6, -0.8)`, `σ = 0.8`.
    pub fn plsi_example() -> Self {
        Self {
            kind: ModelKind::Plsi,
            theta0: vec![0.6, -0.8],
            beta0: Some(vec![0.3, 0.5]),
            g0: LinkForm::QuadraticGaussian,
            f0: None,
            noise_sd: 1.0,
            r0: 0.1,
            sigma: 0.8,
        }
    }

    pub fn d(&self) -> usize {
        self.theta0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d();
        if d == 0 {
            return Err(Error::InvalidArgument("theta0 is empty".into()));
        }
        let norm = self.theta0.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("theta0 has norm {norm}, expected 1")));
        }
        if self.theta0.iter().find(|v| **v != 0.0).is_some_and(|v| *v < 0.0) {
            return Err(Error::InvalidArgument(
                "first nonzero component of theta0 must be positive".into(),
            ));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::InvalidArgument("noise_sd must be >= 0".into()));
        }
        match (self.kind, &self.beta0) {
            (ModelKind::Si, _) => {}
            (_, None) => {
                return Err(Error::InvalidArgument(format!("{} scenario needs beta0", self.kind)))
            }
            (_, Some(b)) if b.len() != d => {
                return Err(Error::DimensionMismatch(format!(
                    "beta0 has length {}, theta0 has length {d}",
                    b.len()
                )))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn process(&self, n: usize, seed: u64) -> ProcessConfig {
        ProcessConfig {
            n,
            d: self.d(),
            r0: self.r0,
            sigma: self.sigma,
            x0: None,
            seed,
        }
    }

    /// Noise-free conditional mean at one regressor row.
    pub fn mean_at(&self, row: &[f64]) -> f64 {
        self.mean_with(&self.trend(), row)
    }

    fn trend(&self) -> HRegularSpec {
        self.f0.clone().unwrap_or(TrendForm::Identity).spec()
    }

    fn mean_with(&self, trend: &HRegularSpec, row: &[f64]) -> f64 {
        let dot = |w: &[f64]| -> f64 { row.iter().zip(w).map(|(a, b)| a * b).sum() };
        let part = match (self.kind, &self.beta0) {
            (ModelKind::Si, _) | (_, None) => 0.0,
            (ModelKind::Plsi, Some(b)) => dot(b),
            (ModelKind::Pnlsi, Some(b)) => trend.f(dot(b)),
        };
        part + self.g0.eval(dot(&self.theta0))
    }
}

/// `y_t = trend + g(θ₀ᵀx_t) + e_t` with errors drawn on the error substream.
pub fn gen_response(x: &DMatrix<f64>, spec: &ScenarioSpec, seed: u64, replication: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    if x.ncols() != spec.d() {
        return Err(Error::DimensionMismatch(format!(
            "regressors have {} columns, scenario expects {}",
            x.ncols(),
            spec.d()
        )));
    }
    let mut stream = Stream::new(seed, replication, Purpose::Errors);
    let trend = spec.trend();
    let mut row = vec![0.0; x.ncols()];
    let y = (0..x.nrows())
        .map(|t| {
            for (j, r) in row.iter_mut().enumerate() {
                *r = x[(t, j)];
            }
            spec.mean_with(&trend, &row) + stream.normal(spec.noise_sd)
        })
        .collect();
    Ok(y)
}

/// One simulated data set.
#[derive(Debug, Clone)]
pub struct SimData {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
}

/// Regressors and response for replication `replication` of `spec`.
pub fn simulate(spec: &ScenarioSpec, n: usize, seed: u64, replication: u64) -> Result<SimData> {
    spec.validate()?;
    let x = gen_integrated_rep(&spec.process(n, seed), replication)?;
    let y = gen_response(&x, spec, seed, replication)?;
    Ok(SimData { x, y })
}
