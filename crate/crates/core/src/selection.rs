//! Truncation selection by generalised cross-validation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{fit, FitOptions, FitResult};
use crate::model::{HRegularSpec, ModelKind};

/// Default candidate set `{1, …, 12}`.
pub fn default_candidates() -> Vec<usize> {
    (1..=12).collect()
}

/// Scores within this multiple of `mean(y²)` of the minimum count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcvFitSummary {
    pub k: usize,
    pub theta_emp: Option<Vec<f64>>,
    pub beta_hat: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcvTable {
    pub n: usize,
    pub candidates: Vec<usize>,
    /// `σ̂²(k)`; infinite where the fit failed.
    pub sigma2: Vec<f64>,
    pub scores: Vec<f64>,
    pub chosen: usize,
    pub fits: Vec<GcvFitSummary>,
}

/// `(1 − k/n)^{-2} · σ̂²(k)`.
pub fn gcv_score(sigma2: f64, k: usize, n: usize) -> f64 {
    let shrink = 1.0 - k as f64 / n as f64;
    sigma2 / (shrink * shrink)
}

/// Fits the model at each candidate `k` and picks the GCV minimizer.
///
/// Each fit is warm-started from the previous candidate's optimum. A fit that
/// fails scores `+∞`. Ties are resolved toward the smaller `k`.
pub fn gcv_select(
    y: &[f64],
    x: &DMatrix<f64>,
    kind: ModelKind,
    trend: Option<&HRegularSpec>,
    candidates: &[usize],
    opts: &FitOptions,
) -> Result<GcvTable> {
    let n = y.len();
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidate truncation levels".into()));
    }
    if let Some(&k) = candidates.iter().find(|&&k| k == 0 || 2 * k >= n) {
        return Err(Error::InvalidArgument(format!(
            "candidate k = {k} must satisfy 1 <= k < n/2 with n = {n}"
        )));
    }

    let mut warm: Option<Vec<f64>> = None;
    let mut sigma2 = Vec::with_capacity(candidates.len());
    let mut scores = Vec::with_capacity(candidates.len());
    let mut fits = Vec::with_capacity(candidates.len());
    for &k in candidates {
        let mut local = opts.clone();
        if let Some(w) = &warm {
            local.extra_starts.insert(0, w.clone());
        }
        match fit(y, x, kind, k, trend, &local) {
            Ok(f) => {
                warm = Some(warm_start(&f));
                sigma2.push(f.sigma2_hat);
                scores.push(gcv_score(f.sigma2_hat, k, n));
                fits.push(GcvFitSummary {
                    k,
                    theta_emp: Some(f.theta_emp.clone()),
                    beta_hat: f.beta_hat.clone(),
                    objective: Some(f.objective),
                    converged: f.opt_trace.converged,
                    error: None,
                });
            }
            Err(e) => {
                sigma2.push(f64::INFINITY);
                scores.push(f64::INFINITY);
                fits.push(GcvFitSummary {
                    k,
                    theta_emp: None,
                    beta_hat: None,
                    objective: None,
                    converged: false,
                    error: Some(e.to_string()),
                });
            }
        }
    }

    let scale = y.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let chosen = choose(candidates, &scores, TIE_TOLERANCE * scale)
        .ok_or_else(|| Error::InsufficientData("every candidate fit failed".into()))?;
    Ok(GcvTable {
        n,
        candidates: candidates.to_vec(),
        sigma2,
        scores,
        chosen,
        fits,
    })
}

fn warm_start(f: &FitResult) -> Vec<f64> {
    match (f.kind, &f.beta_hat) {
        (ModelKind::Pnlsi, Some(b)) => b.iter().chain(&f.theta_hat).copied().collect(),
        _ => f.theta_hat.clone(),
    }
}

/// Smallest candidate whose score is within `tol` of the minimum finite score.
fn choose(candidates: &[usize], scores: &[f64], tol: f64) -> Option<usize> {
    let best = scores.iter().copied().filter(|s| s.is_finite()).reduce(f64::min)?;
    candidates
        .iter()
        .zip(scores)
        .filter(|(_, s)| s.is_finite() && **s <= best + tol)
        .map(|(k, _)| *k)
        .min()
}
