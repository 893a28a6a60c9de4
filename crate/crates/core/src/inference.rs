//! Post-fit statistics: residual variance, local time, covariance of `θ̂`
//! and pointwise bands for the fitted link.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::FitResult;
use crate::hermite::{basis_vector, H0_AT_ZERO};
use crate::rng::normal_quantile;
use crate::series_fit::index_values;

/// Note attached to serialized covariance estimates.
pub const COV_CONVENTION: &str =
    "theta_cov = sigma2_hat * pinv(J), J = sum_t ghat'(theta_hat'x_t)^2 x_t x_t'; multiply by sqrt(n) for the rank-one limit scale";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CovEstimate {
    /// Row-major `d × d` matrix.
    pub matrix: Vec<Vec<f64>>,
    /// Set when at least one eigenvalue fell below the cutoff.
    pub singular: bool,
    pub rank: usize,
}

impl CovEstimate {
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let d = self.matrix.len();
        DMatrix::from_fn(d, d, |i, j| self.matrix[i][j])
    }
}

pub fn residuals(y: &[f64], x: &DMatrix<f64>, fit: &FitResult) -> Vec<f64> {
    y.iter().zip(fit.fitted_values(x)).map(|(y, f)| y - f).collect()
}

/// Mean squared residual of the fitted model.
pub fn sigma2_hat(y: &[f64], x: &DMatrix<f64>, fit: &FitResult) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    residuals(y, x, fit).iter().map(|r| r * r).sum::<f64>() / y.len() as f64
}

/// `n^{-1/2} Σ ℋ₀(θᵀx_t)²`.
pub fn local_time_hat(x: &DMatrix<f64>, theta: &[f64]) -> f64 {
    let n = x.nrows();
    if n == 0 {
        return 0.0;
    }
    let h0sq = H0_AT_ZERO * H0_AT_ZERO;
    let total: f64 = index_values(x, theta).iter().map(|u| h0sq * (-u * u).exp()).sum();
    total / (n as f64).sqrt()
}

/// `J̃ = Σ ĝ'(θᵀx_t)² x_t x_tᵀ`.
pub fn hessian_surrogate(x: &DMatrix<f64>, fit: &FitResult) -> DMatrix<f64> {
    let d = x.ncols();
    let u = index_values(x, &fit.theta_hat);
    let mut j = DMatrix::zeros(d, d);
    for (t, ut) in u.iter().enumerate() {
        let w = fit.link.eval_deriv(*ut).powi(2);
        if w == 0.0 {
            continue;
        }
        for a in 0..d {
            let xa = w * x[(t, a)];
            for b in a..d {
                j[(a, b)] += xa * x[(t, b)];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            j[(a, b)] = j[(b, a)];
        }
    }
    j
}

/// `scale · J⁺` with eigenvalues below `1e-10 · λ_max` dropped.
pub fn scaled_pinv(j: &DMatrix<f64>, scale: f64) -> CovEstimate {
    let d = j.nrows();
    let eig = SymmetricEigen::new(j.clone());
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(*v));
    let cutoff = 1e-10 * lmax;
    let mut out = DMatrix::zeros(d, d);
    let mut rank = 0;
    if lmax > 0.0 {
        for (i, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam > cutoff {
                rank += 1;
                let v = eig.eigenvectors.column(i);
                out += (v * v.transpose()) * (scale / lam);
            }
        }
    }
    let matrix = (0..d)
        .map(|a| (0..d).map(|b| 0.5 * (out[(a, b)] + out[(b, a)])).collect())
        .collect();
    CovEstimate {
        matrix,
        singular: rank < d,
        rank,
    }
}

/// `σ̂² · J̃(θ̂)⁺`.
pub fn theta_cov(y: &[f64], x: &DMatrix<f64>, fit: &FitResult) -> CovEstimate {
    scaled_pinv(&hessian_surrogate(x, fit), sigma2_hat(y, x, fit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandResult {
    pub grid: Vec<f64>,
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
    pub level: f64,
    pub z: f64,
}

impl BandResult {
    pub fn lower(&self) -> Vec<f64> {
        self.center.iter().zip(&self.half_width).map(|(c, h)| c - h).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.center.iter().zip(&self.half_width).map(|(c, h)| c + h).collect()
    }
}

/// Two-sided standard normal multiplier for nominal coverage `level`.
pub fn band_multiplier(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("band level must lie in (0, 1), got {level}")));
    }
    Ok(normal_quantile(0.5 * (1.0 + level)))
}

/// Pointwise band `ĝ(u) ± z · σ̂ · ‖Z_k(u)‖ · L̂^{-1/2} · n^{-1/4}`.
pub fn g_band(y: &[f64], x: &DMatrix<f64>, fit: &FitResult, grid: &[f64], level: f64) -> Result<BandResult> {
    let sigma2 = sigma2_hat(y, x, fit);
    let local_time = local_time_hat(x, &fit.theta_hat);
    band_from_parts(fit, sigma2, local_time, x.nrows(), grid, level)
}

pub fn band_from_parts(
    fit: &FitResult,
    sigma2: f64,
    local_time: f64,
    n: usize,
    grid: &[f64],
    level: f64,
) -> Result<BandResult> {
    let z = band_multiplier(level)?;
    if !(local_time > 0.0) {
        return Err(Error::ZeroLocalTime);
    }
    if let Some(u) = grid.iter().find(|u| !u.is_finite()) {
        return Err(Error::NonFinite(format!("band grid point {u}")));
    }
    let scale = z * sigma2.sqrt() / local_time.sqrt() / (n as f64).powf(0.25);
    let k = fit.link.k();
    let mut center = Vec::with_capacity(grid.len());
    let mut half_width = Vec::with_capacity(grid.len());
    for &u in grid {
        center.push(fit.link.eval(u));
        half_width.push(scale * basis_vector(k, u, false)?.norm());
    }
    Ok(BandResult {
        grid: grid.to_vec(),
        center,
        half_width,
        level,
        z,
    })
}
