//! Model kinds and the known parametric pieces that enter them.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// `y = g(θᵀx) + e`
    Si,
    /// `y = βᵀx + g(θᵀx) + e`
    Plsi,
    /// `y = f(βᵀx) + g(θᵀx) + e` with known H-regular `f`
    Pnlsi,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Si => "si",
            ModelKind::Plsi => "plsi",
            ModelKind::Pnlsi => "pnlsi",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "si" => Ok(ModelKind::Si),
            "plsi" => Ok(ModelKind::Plsi),
            "pnlsi" => Ok(ModelKind::Pnlsi),
            other => Err(Error::InvalidArgument(format!("unknown model kind '{other}'"))),
        }
    }
}

/// Closed-form link functions used to generate data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum LinkForm {
    /// `(1 + u²) e^{-u²}`
    QuadraticGaussian,
    Zero,
    /// `Σ c_i ℋ_i(u)`
    Hermite { coeffs: Vec<f64> },
}

impl LinkForm {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            LinkForm::QuadraticGaussian => (1.0 + u * u) * (-u * u).exp(),
            LinkForm::Zero => 0.0,
            LinkForm::Hermite { coeffs } => {
                let mut buf = vec![0.0; coeffs.len()];
                crate::hermite::fill_values(u, &mut buf);
                buf.iter().zip(coeffs).map(|(h, c)| h * c).sum()
            }
        }
    }
}

/// Serializable names for the H-regular trend functions shipped with the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum TrendForm {
    Identity,
    Square,
    Cube,
    /// `sign(u)·|u|^p`
    SignedPower { p: f64 },
}

impl TrendForm {
    pub fn spec(&self) -> HRegularSpec {
        match *self {
            TrendForm::Identity => HRegularSpec::new("identity", |u| u, |_| 1.0),
            TrendForm::Square => HRegularSpec::new("square", |u| u * u, |u| 2.0 * u),
            TrendForm::Cube => HRegularSpec::new("cube", |u| u * u * u, |u| 3.0 * u * u),
            TrendForm::SignedPower { p } => HRegularSpec::new(
                format!("signed_power({p})"),
                move |u: f64| u.signum() * u.abs().powf(p),
                move |u: f64| p * u.abs().powf(p - 1.0),
            ),
        }
    }
}

impl std::str::FromStr for TrendForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "linear" => Ok(TrendForm::Identity),
            "square" => Ok(TrendForm::Square),
            "cube" => Ok(TrendForm::Cube),
            other => other
                .strip_prefix("power:")
                .and_then(|p| p.parse().ok())
                .map(|p| TrendForm::SignedPower { p })
                .ok_or_else(|| Error::InvalidArgument(format!("unknown trend function '{other}'"))),
        }
    }
}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A known H-regular function `f` together with its derivative.
#[derive(Clone)]
pub struct HRegularSpec {
    pub label: String,
    f: RealFn,
    fdot: RealFn,
}

impl fmt::Debug for HRegularSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HRegularSpec").field("label", &self.label).finish()
    }
}

impl HRegularSpec {
    pub fn new<F, D>(label: impl Into<String>, f: F, fdot: D) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            f: Arc::new(f),
            fdot: Arc::new(fdot),
        }
    }

    pub fn identity() -> Self {
        TrendForm::Identity.spec()
    }

    #[inline]
    pub fn f(&self, u: f64) -> f64 {
        (self.f)(u)
    }

    #[inline]
    pub fn fdot(&self, u: f64) -> f64 {
        (self.fdot)(u)
    }

    /// Checks finiteness and that `fdot` agrees with central differences of `f`
    /// (tolerance 1e-5, relative to `1 + |ḟ|`) on a probe grid over `[-10, 10]`.
    pub fn validate(&self) -> Result<()> {
        let h = 1e-6;
        for j in 0..=200 {
            let u = -10.0 + 0.1 * j as f64 + 0.013;
            let (fu, du) = (self.f(u), self.fdot(u));
            if !fu.is_finite() || !du.is_finite() {
                return Err(Error::NonFinite(format!("{} is not finite at {u}", self.label)));
            }
            let fd = (self.f(u + h) - self.f(u - h)) / (2.0 * h);
            if (fd - du).abs() > 1e-5 * (1.0 + du.abs()) {
                return Err(Error::InvalidArgument(format!(
                    "derivative of {} disagrees with finite differences at {u}: {du} vs {fd}",
                    self.label
                )));
            }
        }
        Ok(())
    }
}
