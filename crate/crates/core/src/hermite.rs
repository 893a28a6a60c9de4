//! Orthonormal Hermite functions on the real line.
//!
//! `ℋ_i(x) = (√π 2^i i!)^{-1/2} H_i(x) e^{-x²/2}` is evaluated through the
//! normalized three-term recurrence
//!
//! ```text
//! ℋ_0(x)     = π^{-1/4} e^{-x²/2}
//! ℋ_{i+1}(x) = x √(2/(i+1)) ℋ_i(x) − √(i/(i+1)) ℋ_{i-1}(x)
//! ```
//!
//! so no Hermite polynomial or factorial is ever formed. For `|x|` beyond
//! roughly 38.6 the Gaussian factor underflows and every value is exactly zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest index accepted by the scalar evaluators.
pub const MAX_INDEX: usize = 10_000;

/// `π^{-1/4}`.
pub const H0_AT_ZERO: f64 = 0.751_125_544_464_942_5;

/// Values (and optionally first derivatives) of `ℋ_0..ℋ_{k-1}` at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisEval {
    pub k: usize,
    pub point: f64,
    pub values: Vec<f64>,
    pub derivs: Option<Vec<f64>>,
}

impl BasisEval {
    /// Euclidean norm `‖Z_k(u)‖`.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkOrigin {
    Projected,
    Fitted,
}

/// A truncated Hermite series `g_k(u) = Σ_{i<k} c_i ℋ_i(u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesLink {
    pub coeffs: Vec<f64>,
    pub origin: LinkOrigin,
}

impl SeriesLink {
    pub fn new(coeffs: Vec<f64>, origin: LinkOrigin) -> Self {
        Self { coeffs, origin }
    }

    pub fn k(&self) -> usize {
        self.coeffs.len()
    }

    pub fn eval(&self, u: f64) -> f64 {
        let mut buf = vec![0.0; self.coeffs.len()];
        fill_values(u, &mut buf);
        dot(&buf, &self.coeffs)
    }

    pub fn eval_deriv(&self, u: f64) -> f64 {
        let k = self.coeffs.len();
        // ℋ_i' needs ℋ_{i+1}, so evaluate one extra term.
        let mut buf = vec![0.0; k + 1];
        fill_values(u, &mut buf);
        (0..k)
            .map(|i| self.coeffs[i] * deriv_from_values(i, &buf))
            .sum()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Writes `ℋ_0(x), …, ℋ_{out.len()-1}(x)` into `out` in one recurrence pass.
#[inline]
pub fn fill_values(x: f64, out: &mut [f64]) {
    let k = out.len();
    if k == 0 {
        return;
    }
    let h0 = H0_AT_ZERO * (-0.5 * x * x).exp();
    out[0] = h0;
    if k == 1 {
        return;
    }
    out[1] = std::f64::consts::SQRT_2 * x * h0;
    for i in 1..k - 1 {
        let fi = i as f64;
        out[i + 1] = x * (2.0 / (fi + 1.0)).sqrt() * out[i] - (fi / (fi + 1.0)).sqrt() * out[i - 1];
    }
}

/// `ℋ_i'` from a buffer holding at least `ℋ_0..=ℋ_{i+1}`.
#[inline]
fn deriv_from_values(i: usize, values: &[f64]) -> f64 {
    let fi = i as f64;
    let lower = if i == 0 { 0.0 } else { (fi / 2.0).sqrt() * values[i - 1] };
    lower - ((fi + 1.0) / 2.0).sqrt() * values[i + 1]
}

fn check_index(i: usize, x: f64) -> Result<()> {
    if i > MAX_INDEX {
        return Err(Error::Domain(format!("Hermite index {i} exceeds {MAX_INDEX}")));
    }
    if !x.is_finite() {
        return Err(Error::Domain(format!("non-finite abscissa {x}")));
    }
    Ok(())
}

/// `ℋ_i(x)`.
pub fn hermite_function(i: usize, x: f64) -> Result<f64> {
    check_index(i, x)?;
    let mut buf = vec![0.0; i + 1];
    fill_values(x, &mut buf);
    Ok(buf[i])
}

/// `ℋ_i'(x) = √(i/2) ℋ_{i-1}(x) − √((i+1)/2) ℋ_{i+1}(x)`.
pub fn hermite_function_deriv(i: usize, x: f64) -> Result<f64> {
    check_index(i, x)?;
    let mut buf = vec![0.0; i + 2];
    fill_values(x, &mut buf);
    Ok(deriv_from_values(i, &buf))
}

/// The design vector `Z_k(u)` and, if requested, `Ż_k(u)`.
pub fn basis_vector(k: usize, u: f64, with_derivs: bool) -> Result<BasisEval> {
    if k == 0 {
        return Err(Error::InvalidArgument("truncation level k must be at least 1".into()));
    }
    let mut buf = vec![0.0; k + 1];
    fill_values(u, &mut buf);
    let derivs = with_derivs.then(|| (0..k).map(|i| deriv_from_values(i, &buf)).collect());
    buf.truncate(k);
    Ok(BasisEval {
        k,
        point: u,
        values: buf,
        derivs,
    })
}

/// Composite Gauss–Legendre rule on `[-half_width, half_width]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub half_width: f64,
    pub panels: usize,
    pub nodes_per_panel: usize,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self {
            half_width: 15.0,
            panels: 40,
            nodes_per_panel: 50,
        }
    }
}

impl QuadratureRule {
    /// Absolute nodes and weights of the composite rule.
    pub fn nodes_weights(&self) -> (Vec<f64>, Vec<f64>) {
        let (ref_nodes, ref_weights) = gauss_legendre(self.nodes_per_panel);
        let width = 2.0 * self.half_width / self.panels as f64;
        let mut nodes = Vec::with_capacity(self.panels * self.nodes_per_panel);
        let mut weights = Vec::with_capacity(nodes.capacity());
        for p in 0..self.panels {
            let a = -self.half_width + p as f64 * width;
            let mid = a + 0.5 * width;
            for (t, w) in ref_nodes.iter().zip(&ref_weights) {
                nodes.push(mid + 0.5 * width * t);
                weights.push(0.5 * width * w);
            }
        }
        (nodes, weights)
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_m`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    if m == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let mf = m as f64;
    for i in 0..m.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=m {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * z * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            dp = mf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[m - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}

/// Projects `g` onto `ℋ_0..ℋ_{k-1}`: `c_i = ∫ g(x) ℋ_i(x) dx`.
pub fn project<F>(g: F, k: usize, rule: &QuadratureRule) -> Result<SeriesLink>
where
    F: Fn(f64) -> f64,
{
    if k == 0 {
        return Err(Error::InvalidArgument("truncation level k must be at least 1".into()));
    }
    let (nodes, weights) = rule.nodes_weights();
    let mut coeffs = vec![0.0; k];
    let mut buf = vec![0.0; k];
    for (&x, &w) in nodes.iter().zip(&weights) {
        let gx = g(x);
        if !gx.is_finite() {
            return Err(Error::NonFinite(format!("integrand evaluated to {gx} at x = {x}")));
        }
        fill_values(x, &mut buf);
        for (c, h) in coeffs.iter_mut().zip(&buf) {
            *c += w * gx * h;
        }
    }
    Ok(SeriesLink::new(coeffs, LinkOrigin::Projected))
}

/// Truncation rule `k = ⌊a·n^κ⌋`, clamped below at 1.
pub fn truncation_k(n: usize, a: f64, kappa: f64) -> usize {
    ((a * (n as f64).powf(kappa)).floor() as usize).max(1)
}

/// Default truncation constants used by the simulation designs.
pub const DEFAULT_TRUNCATION_A: f64 = 3.65;
pub const DEFAULT_TRUNCATION_KAPPA: f64 = 5.0 / 44.0;
