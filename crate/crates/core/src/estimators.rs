//! Profile least-squares estimators.
//!
//! For a fixed index vector `θ` (and, for the partially nonlinear model, a
//! fixed `β`) the series coefficients and any linear part enter linearly and
//! are solved in closed form by [`inner_ols`]. The outer problem over `θ`
//! (or `(β, θ)`) is searched with multi-start Nelder–Mead.
//!
//! The outer objective is total: points outside the box `‖θ‖∞ ≤ bound` and
//! points where the inner design is ill-conditioned are charged at least the
//! series-free residual level, so the search is pushed back toward regions
//! where the link is identified.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{LinkOrigin, SeriesLink};
use crate::inference::{self, CovEstimate};
use crate::model::{HRegularSpec, ModelKind};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::rng::normal_quantile;
use crate::series_fit::{index_values, inner_ols, ols, stacked_least_squares, InnerOptions, InnerSolve};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Number of unit-sphere starts; `None` picks 2 for d = 1, 16 for d = 2 and 64 otherwise.
    pub grid_starts: Option<usize>,
    /// Additional starts tried before the grid. For the partially nonlinear
    /// model each start is the stacked `(β, θ)`; otherwise it is `θ`.
    pub extra_starts: Vec<Vec<f64>>,
    pub nelder_mead: NelderMeadOptions,
    /// Half-width of the admissible box for `θ` in the max norm.
    pub theta_bound: f64,
    pub inner: InnerOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            grid_starts: None,
            extra_starts: Vec::new(),
            nelder_mead: NelderMeadOptions::default(),
            theta_bound: 10.0,
            inner: InnerOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptTrace {
    pub starts: usize,
    pub iterations: usize,
    pub evaluations: usize,
    /// Index (in try order) of the start that produced the optimum.
    pub best_start: usize,
    /// Best objective after each start; non-increasing.
    pub best_so_far: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub kind: ModelKind,
    pub n: usize,
    pub k: usize,
    pub theta_hat: Vec<f64>,
    pub theta_emp: Vec<f64>,
    pub beta_hat: Option<Vec<f64>>,
    pub link: SeriesLink,
    pub objective: f64,
    pub sigma2_hat: f64,
    pub local_time_hat: f64,
    pub theta_cov: CovEstimate,
    pub trend_label: Option<String>,
    pub opt_trace: OptTrace,
    #[serde(skip)]
    pub trend: Option<HRegularSpec>,
}

impl FitResult {
    /// `θ̂` multiplied by the sign that makes its first nonzero component positive.
    pub fn theta_oriented(&self) -> Vec<f64> {
        let flip = first_significant(&self.theta_hat).is_some_and(|v| v < 0.0);
        self.theta_hat.iter().map(|v| if flip { -v } else { *v }).collect()
    }

    /// Fitted value `ŷ` for one regressor row.
    pub fn predict(&self, row: &[f64]) -> f64 {
        let dot = |w: &[f64]| -> f64 { row.iter().zip(w).map(|(a, b)| a * b).sum() };
        let part = match (&self.beta_hat, self.kind) {
            (Some(b), ModelKind::Plsi) => dot(b),
            (Some(b), ModelKind::Pnlsi) => match &self.trend {
                Some(f) => f.f(dot(b)),
                None => dot(b),
            },
            _ => 0.0,
        };
        part + self.link.eval(dot(&self.theta_hat))
    }

    pub fn fitted_values(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let mut row = vec![0.0; x.ncols()];
        (0..x.nrows())
            .map(|t| {
                for (j, r) in row.iter_mut().enumerate() {
                    *r = x[(t, j)];
                }
                self.predict(&row)
            })
            .collect()
    }
}

fn first_significant(v: &[f64]) -> Option<f64> {
    v.iter().copied().find(|c| c.abs() > 1e-10)
}

/// Scales `theta` to unit length and flips it so that the first component
/// exceeding `1e-10` in magnitude is positive.
pub fn sign_fix(theta: &[f64]) -> Result<Vec<f64>> {
    let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::ZeroVector);
    }
    let unit: Vec<f64> = theta.iter().map(|v| v / norm).collect();
    let flip = first_significant(&unit).is_some_and(|v| v < 0.0);
    Ok(unit.into_iter().map(|v| if flip { -v } else { v }).collect())
}

/// Deterministic, roughly uniform start points on the unit sphere in ℝᵈ.
///
/// d = 1 gives `±1`; d = 2 gives `count` equally spaced angles starting at
/// `(1, 0)`; higher dimensions map a Halton sequence through the normal
/// quantile and normalize.
pub fn sphere_starts(d: usize, count: usize) -> Vec<Vec<f64>> {
    match d {
        0 => Vec::new(),
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|j| {
                let a = 2.0 * std::f64::consts::PI * j as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let primes = first_primes(d);
            (1..=count)
                .map(|j| {
                    let g: Vec<f64> = primes.iter().map(|&p| normal_quantile(halton(j, p))).collect();
                    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                    g.into_iter().map(|v| v / norm).collect()
                })
                .collect()
        }
    }
}

fn halton(mut index: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

fn first_primes(count: usize) -> Vec<usize> {
    let mut primes = Vec::with_capacity(count);
    let mut c = 2;
    while primes.len() < count {
        if primes.iter().all(|p| c % p != 0) {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

pub fn default_grid_size(d: usize) -> usize {
    match d {
        1 => 2,
        2 => 16,
        _ => 64,
    }
}

/// The profiled objective `L_n` for one model and data set.
pub struct Profile<'a> {
    y: &'a [f64],
    x: &'a DMatrix<f64>,
    kind: ModelKind,
    k: usize,
    trend: Option<&'a HRegularSpec>,
    inner: InnerOptions,
    theta_bound: f64,
    /// Half the residual sum of squares with the series part removed (SI and PLSI).
    null_level: f64,
}

impl<'a> Profile<'a> {
    pub fn new(
        y: &'a [f64],
        x: &'a DMatrix<f64>,
        kind: ModelKind,
        k: usize,
        trend: Option<&'a HRegularSpec>,
        opts: &FitOptions,
    ) -> Result<Self> {
        let (n, d) = x.shape();
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!("y has {} rows, x has {n}", y.len())));
        }
        if d == 0 {
            return Err(Error::InvalidArgument("x has no columns".into()));
        }
        if k == 0 {
            return Err(Error::InvalidArgument("truncation level k must be at least 1".into()));
        }
        let needed = match kind {
            ModelKind::Plsi => k + d,
            _ => k,
        };
        if n <= needed {
            return Err(Error::InsufficientData(format!(
                "{kind} fit with k = {k}, d = {d} needs more than {needed} observations, got {n}"
            )));
        }
        if kind == ModelKind::Pnlsi && trend.is_none() {
            return Err(Error::InvalidArgument("partially nonlinear fit needs a trend function".into()));
        }
        let null_level = match kind {
            ModelKind::Si => 0.5 * y.iter().map(|v| v * v).sum::<f64>(),
            ModelKind::Plsi => {
                let opts = InnerOptions {
                    ridge: false,
                    ..InnerOptions::default()
                };
                0.5 * stacked_least_squares(x.clone(), y, d, &opts)?.rss
            }
            ModelKind::Pnlsi => f64::NAN,
        };
        Ok(Self {
            y,
            x,
            kind,
            k,
            trend,
            inner: opts.inner,
            theta_bound: opts.theta_bound,
            null_level,
        })
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// Length of the outer parameter vector.
    pub fn dim(&self) -> usize {
        match self.kind {
            ModelKind::Pnlsi => 2 * self.d(),
            _ => self.d(),
        }
    }

    fn split<'p>(&self, params: &'p [f64]) -> (Option<&'p [f64]>, &'p [f64]) {
        match self.kind {
            ModelKind::Pnlsi => {
                let (b, t) = params.split_at(self.d());
                (Some(b), t)
            }
            _ => (None, params),
        }
    }

    /// `y − f(Xβ)` for the partially nonlinear model, `y` otherwise.
    fn working_response(&self, beta: Option<&[f64]>) -> Vec<f64> {
        match (beta, self.trend) {
            (Some(b), Some(f)) => {
                let u = index_values(self.x, b);
                self.y.iter().zip(u).map(|(y, u)| y - f.f(u)).collect()
            }
            _ => self.y.to_vec(),
        }
    }

    /// Inner solve at the given outer parameters.
    pub fn solve(&self, params: &[f64]) -> Result<InnerSolve> {
        let (beta, theta) = self.split(params);
        let z = crate::series_fit::design(self.x, theta, self.k)?;
        let response = self.working_response(beta);
        let linear = (self.kind == ModelKind::Plsi).then_some(self.x);
        inner_ols(&response, &z, linear, &self.inner)
    }

    /// `L_n` at the given outer parameters, including the penalties.
    pub fn objective(&self, params: &[f64]) -> f64 {
        let (beta, theta) = self.split(params);
        if params.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        let null_level = match self.kind {
            ModelKind::Pnlsi => 0.5 * self.working_response(beta).iter().map(|v| v * v).sum::<f64>(),
            _ => self.null_level,
        };
        let excess = theta.iter().fold(0.0f64, |m, v| m.max(v.abs())) - self.theta_bound;
        if excess > 0.0 {
            return null_level * (1.0 + excess) + excess;
        }
        // Ridged solves are charged their own residual sum of squares.
        match self.solve(params) {
            Ok(s) if s.rss.is_finite() => (0.5 * s.rss).min(null_level),
            _ => null_level,
        }
    }
}

/// `L_n(θ)` for the single-index model with default inner options.
pub fn objective_si(y: &[f64], x: &DMatrix<f64>, theta: &[f64], k: usize) -> Result<f64> {
    Ok(Profile::new(y, x, ModelKind::Si, k, None, &FitOptions::default())?.objective(theta))
}

/// `L_n(θ)` for the partially linear model (β profiled out jointly with the series).
pub fn objective_plsi(y: &[f64], x: &DMatrix<f64>, theta: &[f64], k: usize) -> Result<f64> {
    Ok(Profile::new(y, x, ModelKind::Plsi, k, None, &FitOptions::default())?.objective(theta))
}

struct Search {
    params: Vec<f64>,
    trace: OptTrace,
}

fn multi_start(profile: &Profile<'_>, starts: &[Vec<f64>], nm: &NelderMeadOptions) -> Search {
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut trace = OptTrace {
        starts: starts.len(),
        iterations: 0,
        evaluations: 0,
        best_start: 0,
        best_so_far: Vec::with_capacity(starts.len()),
        converged: false,
    };
    for (idx, start) in starts.iter().enumerate() {
        let r = nelder_mead(|p| profile.objective(p), start, nm);
        trace.iterations += r.iterations;
        trace.evaluations += r.evaluations;
        if r.converged && r.f.is_finite() {
            trace.converged = true;
        }
        let improves = match &best {
            None => true,
            Some((_, f)) => r.f < f - 1e-12 * (1.0 + f.abs()),
        };
        if improves {
            best = Some((r.x, r.f));
            trace.best_start = idx;
        }
        trace.best_so_far.push(best.as_ref().map_or(f64::INFINITY, |b| b.1));
    }
    let (params, _) = best.expect("at least one start");
    Search { params, trace }
}

fn theta_starts(d: usize, opts: &FitOptions) -> Vec<Vec<f64>> {
    sphere_starts(d, opts.grid_starts.unwrap_or_else(|| default_grid_size(d)))
}

fn check_starts(starts: &[Vec<f64>], dim: usize) -> Result<()> {
    match starts.iter().find(|s| s.len() != dim) {
        Some(s) => Err(Error::DimensionMismatch(format!(
            "start of length {} given, expected {dim}",
            s.len()
        ))),
        None => Ok(()),
    }
}

/// Single-index fit: `θ̂ = argmin L_n(θ)`.
pub fn fit_si(y: &[f64], x: &DMatrix<f64>, k: usize, opts: &FitOptions) -> Result<FitResult> {
    fit_index_model(y, x, ModelKind::Si, k, opts)
}

/// Partially linear fit; `β̂` is the inner linear solution at `θ̂`.
pub fn fit_plsi(y: &[f64], x: &DMatrix<f64>, k: usize, opts: &FitOptions) -> Result<FitResult> {
    fit_index_model(y, x, ModelKind::Plsi, k, opts)
}

fn fit_index_model(y: &[f64], x: &DMatrix<f64>, kind: ModelKind, k: usize, opts: &FitOptions) -> Result<FitResult> {
    let profile = Profile::new(y, x, kind, k, None, opts)?;
    check_starts(&opts.extra_starts, profile.dim())?;
    let mut starts = opts.extra_starts.clone();
    starts.extend(theta_starts(x.ncols(), opts));
    let search = multi_start(&profile, &starts, &opts.nelder_mead);
    finish(y, x, &profile, None, search)
}

/// Partially nonlinear fit with known trend `f`: joint search over `(β, θ)`.
pub fn fit_pnlsi(y: &[f64], x: &DMatrix<f64>, f: &HRegularSpec, k: usize, opts: &FitOptions) -> Result<FitResult> {
    let profile = Profile::new(y, x, ModelKind::Pnlsi, k, Some(f), opts)?;
    let d = x.ncols();
    check_starts(&opts.extra_starts, 2 * d)?;

    // Trend-only preliminary fit of β, started from the linear OLS solution.
    let beta_lin = ols(x, y)?;
    let trend_rss = |b: &[f64]| {
        let u = index_values(x, b);
        0.5 * y.iter().zip(u).map(|(y, u)| (y - f.f(u)).powi(2)).sum::<f64>()
    };
    let beta_pre = nelder_mead(trend_rss, &beta_lin, &opts.nelder_mead).x;

    let mut starts = opts.extra_starts.clone();
    for theta in theta_starts(d, opts) {
        starts.push(beta_pre.iter().chain(&theta).copied().collect());
    }
    if f.label == "identity" {
        let plsi_opts = FitOptions {
            extra_starts: Vec::new(),
            ..opts.clone()
        };
        let plsi = fit_plsi(y, x, k, &plsi_opts)?;
        let beta = plsi.beta_hat.expect("plsi fit has a linear part");
        starts.push(beta.into_iter().chain(plsi.theta_hat).collect());
    }
    let search = multi_start(&profile, &starts, &opts.nelder_mead);
    finish(y, x, &profile, Some(f), search)
}

/// Dispatches on `kind`; `trend` is required for the partially nonlinear model.
pub fn fit(
    y: &[f64],
    x: &DMatrix<f64>,
    kind: ModelKind,
    k: usize,
    trend: Option<&HRegularSpec>,
    opts: &FitOptions,
) -> Result<FitResult> {
    match kind {
        ModelKind::Si => fit_si(y, x, k, opts),
        ModelKind::Plsi => fit_plsi(y, x, k, opts),
        ModelKind::Pnlsi => {
            let f = trend.ok_or_else(|| Error::InvalidArgument("pnlsi needs a trend function".into()))?;
            fit_pnlsi(y, x, f, k, opts)
        }
    }
}

fn finish(
    y: &[f64],
    x: &DMatrix<f64>,
    profile: &Profile<'_>,
    trend: Option<&HRegularSpec>,
    search: Search,
) -> Result<FitResult> {
    let (beta, theta) = profile.split(&search.params);
    let theta_hat = theta.to_vec();
    let inner = profile.solve(&search.params)?;
    let beta_hat = match profile.kind {
        ModelKind::Si => None,
        ModelKind::Plsi => inner.linear.clone(),
        ModelKind::Pnlsi => beta.map(<[f64]>::to_vec),
    };
    let theta_emp = sign_fix(&theta_hat)?;
    let mut trace = search.trace;
    if inner.ridged {
        trace.converged = false;
    }
    let mut fit = FitResult {
        kind: profile.kind,
        n: y.len(),
        k: profile.k,
        theta_hat,
        theta_emp,
        beta_hat,
        link: SeriesLink::new(inner.coeffs, LinkOrigin::Fitted),
        objective: 0.5 * inner.rss,
        sigma2_hat: 0.0,
        local_time_hat: 0.0,
        theta_cov: CovEstimate::default(),
        trend_label: trend.map(|f| f.label.clone()),
        opt_trace: trace,
        trend: trend.cloned(),
    };
    fit.sigma2_hat = inference::sigma2_hat(y, x, &fit);
    fit.local_time_hat = inference::local_time_hat(x, &fit.theta_hat);
    fit.theta_cov = inference::theta_cov(y, x, &fit);
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinkForm, TrendForm};
    use crate::procsim::{simulate, ScenarioSpec};
    use crate::series_fit::design;
    use approx::assert_abs_diff_eq;

    /// Noise-free data whose link is exactly a short Hermite series.
    fn exact_series(kind: ModelKind, n: usize, seed: u64) -> (ScenarioSpec, Vec<f64>, DMatrix<f64>) {
        let spec = ScenarioSpec {
            kind,
            theta0: vec![0.6, 0.8],
            beta0: (kind != ModelKind::Si).then(|| vec![0.3, 0.5]),
            g0: LinkForm::Hermite {
                coeffs: vec![1.0, 0.5, -0.8],
            },
            f0: (kind == ModelKind::Pnlsi).then_some(TrendForm::Square),
            noise_sd: 0.0,
            r0: 0.1,
            sigma: 0.6,
        };
        let data = simulate(&spec, n, seed, 0).unwrap();
        (spec, data.y, data.x)
    }

    #[test]
    fn sign_fix_examples() {
        assert_eq!(sign_fix(&[0.0, -2.0]).unwrap(), vec![0.0, 1.0]);
        let v = sign_fix(&[3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(v[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], 0.8, epsilon = 1e-15);
        let v = sign_fix(&[-0.6, 0.8]).unwrap();
        assert_abs_diff_eq!(v[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], -0.8, epsilon = 1e-15);
        assert!(matches!(sign_fix(&[0.0, 0.0]), Err(Error::ZeroVector)));
    }

    #[test]
    fn sphere_starts_are_unit_vectors() {
        for d in 1..=6 {
            let starts = sphere_starts(d, default_grid_size(d));
            assert_eq!(starts.len(), default_grid_size(d));
            for s in starts {
                let norm: f64 = s.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-12);
            }
        }
        assert_eq!(sphere_starts(2, 4)[0], vec![1.0, 0.0]);
    }

    #[test]
    fn objective_vanishes_at_truth_for_exact_model() {
        let (spec, y, x) = exact_series(ModelKind::Si, 300, 1);
        let l = objective_si(&y, &x, &spec.theta0, 3).unwrap();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        assert!(l <= 1e-8 * yy, "{l}");
    }

    #[test]
    fn objective_far_from_support_is_half_total_sum_of_squares() {
        let (_, y, _) = exact_series(ModelKind::Si, 50, 2);
        let x = DMatrix::from_fn(50, 2, |t, _| 50.0 + t as f64);
        let l = objective_si(&y, &x, &[1.0, 0.0], 3).unwrap();
        let half: f64 = 0.5 * y.iter().map(|v| v * v).sum::<f64>();
        assert_abs_diff_eq!(l, half, epsilon = 1e-12);
    }

    #[test]
    fn objective_matches_two_stage_oracle() {
        let spec = ScenarioSpec::si_part_one();
        let data = simulate(&spec, 200, 3, 0).unwrap();
        let theta = [0.5, 0.9];
        let l = objective_si(&data.y, &data.x, &theta, 5).unwrap();
        // Explicit c̃ = (ZᵀZ)⁻¹Zᵀy, then ½‖y − Zc̃‖².
        let z = design(&data.x, &theta, 5).unwrap().z;
        let yv = nalgebra::DVector::from_column_slice(&data.y);
        let c = (z.transpose() * &z).try_inverse().unwrap() * z.transpose() * &yv;
        let oracle = 0.5 * (yv - &z * c).norm_squared();
        assert!((l - oracle).abs() <= 1e-9 * oracle);
    }

    #[test]
    fn box_penalty_grows_outward() {
        let spec = ScenarioSpec::si_part_one();
        let data = simulate(&spec, 100, 4, 0).unwrap();
        let p = Profile::new(&data.y, &data.x, ModelKind::Si, 4, None, &FitOptions::default()).unwrap();
        let inside = p.objective(&[0.6, 0.8]);
        let edge = p.objective(&[11.0, 0.0]);
        let far = p.objective(&[20.0, 0.0]);
        assert!(inside < edge && edge < far);
    }

    #[test]
    fn exact_model_is_recovered_from_truth() {
        let (spec, y, x) = exact_series(ModelKind::Si, 400, 5);
        let opts = FitOptions {
            extra_starts: vec![spec.theta0.clone()],
            grid_starts: Some(4),
            ..FitOptions::default()
        };
        let fit = fit_si(&y, &x, 3, &opts).unwrap();
        for (a, b) in fit.theta_hat.iter().zip(&spec.theta0) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
        assert!(fit.opt_trace.converged);
        assert!(fit.sigma2_hat < 1e-10);
    }

    #[test]
    fn scalar_regressor_gives_unit_theta_emp() {
        let spec = ScenarioSpec {
            theta0: vec![1.0],
            ..ScenarioSpec::si_part_one()
        };
        let data = simulate(&spec, 200, 6, 0).unwrap();
        let fit = fit_si(&data.y, &data.x, 4, &FitOptions::default()).unwrap();
        assert_eq!(fit.theta_emp, vec![1.0]);
    }

    #[test]
    fn fit_result_invariants() {
        let spec = ScenarioSpec::si_part_one();
        let data = simulate(&spec, 300, 7, 0).unwrap();
        let fit = fit_si(&data.y, &data.x, 6, &FitOptions::default()).unwrap();
        let norm: f64 = fit.theta_emp.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-10);
        assert!(fit.theta_emp[0] > 0.0);
        let again = objective_si(&data.y, &data.x, &fit.theta_hat, 6).unwrap();
        assert!((again - fit.objective).abs() <= 1e-8 * fit.objective);
        assert!(fit.opt_trace.best_so_far.windows(2).all(|w| w[1] <= w[0]));
        let resid: f64 = data
            .y
            .iter()
            .zip(fit.fitted_values(&data.x))
            .map(|(y, f)| (y - f).powi(2))
            .sum();
        assert_abs_diff_eq!(0.5 * resid, fit.objective, epsilon = 1e-8 * fit.objective);
    }

    #[test]
    fn pure_linear_plsi_data() {
        let spec = ScenarioSpec {
            g0: LinkForm::Zero,
            noise_sd: 0.0,
            ..ScenarioSpec::plsi_example()
        };
        let data = simulate(&spec, 200, 8, 0).unwrap();
        let fit = fit_plsi(&data.y, &data.x, 4, &FitOptions::default()).unwrap();
        let b = fit.beta_hat.unwrap();
        assert_abs_diff_eq!(b[0], 0.3, epsilon = 1e-8);
        assert_abs_diff_eq!(b[1], 0.5, epsilon = 1e-8);
        assert!(fit.link.coeffs.iter().all(|c| c.abs() < 1e-6));
    }

    #[test]
    fn plsi_optimum_beats_truth() {
        let spec = ScenarioSpec::plsi_example();
        let data = simulate(&spec, 150, 9, 0).unwrap();
        let fit = fit_plsi(&data.y, &data.x, 5, &FitOptions::default()).unwrap();
        let at_truth = objective_plsi(&data.y, &data.x, &spec.theta0, 5).unwrap();
        assert!(fit.objective <= at_truth + 1e-9);
    }

    #[test]
    fn pnlsi_with_identity_matches_plsi() {
        let spec = ScenarioSpec::plsi_example();
        let data = simulate(&spec, 200, 10, 0).unwrap();
        let opts = FitOptions::default();
        let plsi = fit_plsi(&data.y, &data.x, 5, &opts).unwrap();
        let pnlsi = fit_pnlsi(&data.y, &data.x, &HRegularSpec::identity(), 5, &opts).unwrap();
        assert!((pnlsi.objective - plsi.objective).abs() <= 1e-6 * plsi.objective);
        assert_eq!(pnlsi.kind, ModelKind::Pnlsi);
    }

    #[test]
    fn pnlsi_recovers_square_trend_from_truth() {
        let (spec, y, x) = exact_series(ModelKind::Pnlsi, 300, 11);
        let start: Vec<f64> = spec.beta0.clone().unwrap().into_iter().chain(spec.theta0.clone()).collect();
        let opts = FitOptions {
            extra_starts: vec![start],
            grid_starts: Some(4),
            nelder_mead: NelderMeadOptions {
                ftol: 1e-14,
                max_iter: 4000,
                ..Default::default()
            },
            ..FitOptions::default()
        };
        let f = TrendForm::Square.spec();
        let fit = fit_pnlsi(&y, &x, &f, 3, &opts).unwrap();
        let b = fit.beta_hat.as_ref().unwrap();
        for (a, t) in b.iter().chain(&fit.theta_hat).zip(spec.beta0.unwrap().iter().chain(&spec.theta0)) {
            assert_abs_diff_eq!(a, t, epsilon = 1e-4);
        }
    }

    #[test]
    fn misspecified_trend_fits_worse() {
        let (_, y, x) = exact_series(ModelKind::Pnlsi, 300, 12);
        let opts = FitOptions {
            grid_starts: Some(8),
            ..FitOptions::default()
        };
        let right = fit_pnlsi(&y, &x, &TrendForm::Square.spec(), 3, &opts).unwrap();
        let zero = HRegularSpec::new("zero", |_| 0.0, |_| 0.0);
        let wrong = fit_pnlsi(&y, &x, &zero, 3, &opts).unwrap();
        assert!(wrong.objective > right.objective);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let x = DMatrix::zeros(5, 2);
        let y = vec![0.0; 5];
        assert!(matches!(fit_si(&y, &x, 5, &FitOptions::default()), Err(Error::InsufficientData(_))));
        assert!(fit_si(&y[..4], &x, 2, &FitOptions::default()).is_err());
        let opts = FitOptions {
            extra_starts: vec![vec![1.0]],
            ..FitOptions::default()
        };
        let data = simulate(&ScenarioSpec::si_part_one(), 50, 1, 0).unwrap();
        assert!(fit_si(&data.y, &data.x, 3, &opts).is_err());
    }
}
