//! Series design matrices and the inner (profiled-out) least-squares solve.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{fill_values, SeriesLink};

/// `n × k` matrix with row `t` equal to `Z_k(θᵀx_t)ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub z: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn rows(&self) -> usize {
        self.z.nrows()
    }

    pub fn cols(&self) -> usize {
        self.z.ncols()
    }
}

/// `θᵀx_t` for every row of `x`.
pub fn index_values(x: &DMatrix<f64>, theta: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.ncols(), theta.len());
    let mut u = vec![0.0; x.nrows()];
    for (j, th) in theta.iter().enumerate() {
        for (ut, xv) in u.iter_mut().zip(x.column(j).iter()) {
            *ut += th * xv;
        }
    }
    u
}

/// Writes `Z_k(u_t)` into columns `offset..offset + k` of `out`.
fn fill_design(u: &[f64], k: usize, out: &mut DMatrix<f64>, offset: usize) {
    let mut buf = vec![0.0; k];
    for (t, &ut) in u.iter().enumerate() {
        fill_values(ut, &mut buf);
        for (i, v) in buf.iter().enumerate() {
            out[(t, offset + i)] = *v;
        }
    }
}

pub fn design(x: &DMatrix<f64>, theta: &[f64], k: usize) -> Result<DesignMatrix> {
    if k == 0 {
        return Err(Error::InvalidArgument("truncation level k must be at least 1".into()));
    }
    if theta.len() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "theta has length {}, x has {} columns",
            theta.len(),
            x.ncols()
        )));
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("theta".into()));
    }
    let u = index_values(x, theta);
    let mut z = DMatrix::zeros(x.nrows(), k);
    fill_design(&u, k, &mut z, 0);
    Ok(DesignMatrix { z })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerOptions {
    /// Fall back to a ridge solve instead of failing when ill-conditioned.
    pub ridge: bool,
    /// Largest acceptable condition number of the (column-equilibrated) normal system.
    pub cond_limit: f64,
    /// Ridge penalty as a multiple of `trace(ZᵀZ)/k`.
    pub ridge_factor: f64,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            ridge: true,
            cond_limit: 1e12,
            ridge_factor: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerSolve {
    pub coeffs: Vec<f64>,
    pub linear: Option<Vec<f64>>,
    pub rss: f64,
    pub cond: f64,
    /// Set when the ridge fallback produced the solution.
    pub ridged: bool,
}

/// Joint least squares of `y` on `[X Z]` (or on `Z` alone).
pub fn inner_ols(y: &[f64], z: &DesignMatrix, x: Option<&DMatrix<f64>>, opts: &InnerOptions) -> Result<InnerSolve> {
    let n = z.rows();
    let k = z.cols();
    let d = x.map_or(0, |m| m.ncols());
    if y.len() != n || x.is_some_and(|m| m.nrows() != n) {
        return Err(Error::DimensionMismatch("y, X and Z must have the same number of rows".into()));
    }
    if n <= k + d {
        return Err(Error::InsufficientData(format!(
            "need more than {} observations, got {n}",
            k + d
        )));
    }
    let mut a = DMatrix::zeros(n, d + k);
    if let Some(x) = x {
        a.columns_mut(0, d).copy_from(x);
    }
    a.columns_mut(d, k).copy_from(&z.z);
    let sol = stacked_least_squares(a, y, d, opts)?;
    let (linear, coeffs) = sol.coef.split_at(d);
    Ok(InnerSolve {
        coeffs: coeffs.to_vec(),
        linear: x.map(|_| linear.to_vec()),
        rss: sol.rss,
        cond: sol.cond,
        ridged: sol.ridged,
    })
}

pub(crate) struct LsSolution {
    pub coef: Vec<f64>,
    pub rss: f64,
    pub cond: f64,
    pub ridged: bool,
}

/// Least squares on `a` whose columns from `series_start` on form the series
/// block. Columns are equilibrated to unit norm, factored by Householder QR,
/// and the condition of the normal system is estimated as `κ₁(R)²`. Past the
/// limit the series block is ridge-penalized with `λ = factor·trace(ZᵀZ)/k`.
pub(crate) fn stacked_least_squares(mut a: DMatrix<f64>, y: &[f64], series_start: usize, opts: &InnerOptions) -> Result<LsSolution> {
    let (n, p) = a.shape();
    let scales: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let degenerate = scales.iter().any(|s| !(*s > 1e-300));
    if !degenerate {
        for (j, s) in scales.iter().enumerate() {
            a.column_mut(j).unscale_mut(*s);
        }
        let qr = a.clone().qr();
        let r = qr.r();
        let cond = triangular_cond1(&r).powi(2);
        if cond <= opts.cond_limit {
            let mut qty = DVector::from_column_slice(y);
            qr.q_tr_mul(&mut qty);
            let rss = qty.rows(p, n - p).norm_squared();
            let mut coef = qty.rows(0, p).into_owned();
            if !r.solve_upper_triangular_mut(&mut coef) {
                return Err(Error::RankDeficient { cond: f64::INFINITY });
            }
            let coef = coef.iter().zip(&scales).map(|(c, s)| c / s).collect();
            return Ok(LsSolution {
                coef,
                rss,
                cond,
                ridged: false,
            });
        }
        if !opts.ridge {
            return Err(Error::RankDeficient { cond });
        }
        for (j, s) in scales.iter().enumerate() {
            a.column_mut(j).scale_mut(*s);
        }
        ridge_solve(a, y, series_start, &scales, cond, opts)
    } else {
        if !opts.ridge {
            return Err(Error::RankDeficient { cond: f64::INFINITY });
        }
        ridge_solve(a, y, series_start, &scales, f64::INFINITY, opts)
    }
}

fn ridge_solve(a: DMatrix<f64>, y: &[f64], series_start: usize, scales: &[f64], cond: f64, opts: &InnerOptions) -> Result<LsSolution> {
    let (n, p) = a.shape();
    let k = p - series_start;
    let trace: f64 = scales[series_start..].iter().map(|s| s * s).sum();
    let lambda = opts.ridge_factor * trace / k.max(1) as f64;
    let mut coef = vec![0.0; p];
    if lambda > 0.0 {
        let mut aug = DMatrix::zeros(n + k, p);
        aug.rows_mut(0, n).copy_from(&a);
        let root = lambda.sqrt();
        for i in 0..k {
            aug[(n + i, series_start + i)] = root;
        }
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from_slice(y);
        let qr = aug.qr();
        qr.q_tr_mul(&mut rhs);
        let mut sol = rhs.rows(0, p).into_owned();
        if !qr.r().solve_upper_triangular_mut(&mut sol) {
            return Err(Error::RankDeficient { cond });
        }
        coef.copy_from_slice(sol.as_slice());
    } else if series_start > 0 {
        // The series block vanishes identically; only the linear part is fitted.
        let lin = a.columns(0, series_start).into_owned();
        let inner = stacked_least_squares(lin, y, series_start, &InnerOptions { ridge: false, ..*opts })?;
        coef[..series_start].copy_from_slice(&inner.coef);
    }
    let fitted = &a * DVector::from_column_slice(&coef);
    let rss = y.iter().zip(fitted.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(LsSolution {
        coef,
        rss,
        cond,
        ridged: true,
    })
}

/// `κ₁(R) = ‖R‖₁ ‖R⁻¹‖₁` for an upper-triangular `R`.
fn triangular_cond1(r: &DMatrix<f64>) -> f64 {
    let p = r.nrows();
    if (0..p).any(|i| r[(i, i)] == 0.0) {
        return f64::INFINITY;
    }
    let mut inv = DMatrix::<f64>::identity(p, p);
    if !r.solve_upper_triangular_mut(&mut inv) {
        return f64::INFINITY;
    }
    let norm1 = |m: &DMatrix<f64>| {
        m.column_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let c = norm1(r) * norm1(&inv);
    if c.is_finite() {
        c
    } else {
        f64::INFINITY
    }
}

/// Ordinary least squares of `y` on the columns of `x`, without intercept.
pub fn ols(x: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch("x and y row counts differ".into()));
    }
    if x.nrows() < x.ncols() {
        return Err(Error::InsufficientData("fewer rows than columns".into()));
    }
    let opts = InnerOptions {
        ridge: false,
        ..InnerOptions::default()
    };
    Ok(stacked_least_squares(x.clone(), y, x.ncols(), &opts)?.coef)
}

/// Plug-in link estimate `ĝ(u) = Z_k(u)ᵀ ĉ`.
pub fn plugin_g(link: &SeriesLink, u: f64) -> f64 {
    link.eval(u)
}

/// `ĝ'(u) = Ż_k(u)ᵀ ĉ`.
pub fn plugin_g_deriv(link: &SeriesLink, u: f64) -> f64 {
    link.eval_deriv(u)
}
