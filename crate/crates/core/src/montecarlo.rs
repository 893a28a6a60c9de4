//! Monte Carlo replication of the simulation designs: bias and standard
//! deviation tables, rotated-coordinate diagnostics, band coverage and
//! convergence-rate slopes.
//!
//! Every replication draws from its own random substreams, so a report
//! depends only on the configuration and never on the number of threads.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{fit, FitOptions};
use crate::hermite::{truncation_k, DEFAULT_TRUNCATION_A, DEFAULT_TRUNCATION_KAPPA};
use crate::inference::band_from_parts;
use crate::model::ModelKind;
use crate::procsim::{simulate, ScenarioSpec};
use crate::rng::{Purpose, Stream};

/// Where each replication's optimizer starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartPolicy {
    /// A single local search from the true parameters.
    Truth,
    /// The estimator's unit-sphere grid (plus any starts in `fit`).
    Grid,
    /// The true parameters followed by the grid.
    TruthAndGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub scenario: ScenarioSpec,
    pub n: usize,
    pub reps: usize,
    /// Truncation level; `None` uses the default rule for `n`.
    pub k: Option<usize>,
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start: StartPolicy,
    #[serde(default = "default_fit")]
    pub fit: FitOptions,
    /// Abscissae at which pointwise bands are evaluated in each replication.
    #[serde(default)]
    pub band_points: Vec<f64>,
    #[serde(default = "default_level")]
    pub band_level: f64,
}

fn default_level() -> f64 {
    0.8
}

fn default_start() -> StartPolicy {
    StartPolicy::Truth
}

/// Estimator options for replications: a 5% initial simplex.
pub fn default_fit() -> FitOptions {
    let mut opts = FitOptions::default();
    opts.nelder_mead.simplex_scale = 0.05;
    opts
}

impl McConfig {
    pub fn new(scenario: ScenarioSpec, n: usize, reps: usize, seed: u64) -> Self {
        Self {
            scenario,
            n,
            reps,
            k: None,
            seed,
            start: default_start(),
            fit: default_fit(),
            band_points: Vec::new(),
            band_level: default_level(),
        }
    }

    /// Fit options with the start policy applied.
    pub fn effective_fit(&self) -> FitOptions {
        let spec = &self.scenario;
        let truth: Vec<f64> = match (spec.kind, &spec.beta0) {
            (ModelKind::Pnlsi, Some(b)) => b.iter().chain(&spec.theta0).copied().collect(),
            _ => spec.theta0.clone(),
        };
        let mut opts = self.fit.clone();
        match self.start {
            StartPolicy::Truth => {
                opts.extra_starts.insert(0, truth);
                opts.grid_starts = Some(0);
            }
            StartPolicy::Grid => {}
            StartPolicy::TruthAndGrid => opts.extra_starts.insert(0, truth),
        }
        opts
    }

    pub fn truncation(&self) -> usize {
        self.k
            .unwrap_or_else(|| truncation_k(self.n, DEFAULT_TRUNCATION_A, DEFAULT_TRUNCATION_KAPPA))
    }
}

/// Estimates from one replication. `theta_hat` carries the same sign flip
/// that was applied to produce `theta_emp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub rep: u64,
    pub theta_hat: Vec<f64>,
    pub theta_emp: Vec<f64>,
    pub beta_hat: Option<Vec<f64>>,
    pub objective: f64,
    pub sigma2_hat: f64,
    pub converged: bool,
    /// `(center, half_width)` at each configured band point.
    pub band: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimandStats {
    pub name: String,
    pub truth: Vec<f64>,
    pub bias: Vec<f64>,
    pub sd: Vec<f64>,
}

impl EstimandStats {
    /// `bias = mean − truth`, `sd = sqrt(mean((v − mean)²))`, component-wise.
    pub fn from_samples(name: &str, truth: &[f64], samples: &[&[f64]]) -> Self {
        let m = samples.len() as f64;
        let d = truth.len();
        let mut mean = vec![0.0; d];
        for s in samples {
            for (a, v) in mean.iter_mut().zip(s.iter()) {
                *a += v;
            }
        }
        mean.iter_mut().for_each(|a| *a /= m);
        let mut var = vec![0.0; d];
        for s in samples {
            for ((a, v), mu) in var.iter_mut().zip(s.iter()).zip(&mean) {
                *a += (v - mu) * (v - mu);
            }
        }
        Self {
            name: name.to_string(),
            truth: truth.to_vec(),
            bias: mean.iter().zip(truth).map(|(m, t)| m - t).collect(),
            sd: var.iter().map(|v| (v / m).sqrt()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    pub point: f64,
    pub truth: f64,
    pub level: f64,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotatedStats {
    /// `α̂ = θ̂` when `θ₀ = e₁`.
    pub alpha: EstimandStats,
    /// `α̂_unit = θ̂ / ‖θ̂‖`.
    pub alpha_unit: EstimandStats,
    /// Per-replication first component of `α̂_unit`.
    pub alpha_unit_first: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McReport {
    pub config: McConfig,
    pub k: usize,
    pub estimands: Vec<EstimandStats>,
    pub rotated: Option<RotatedStats>,
    pub coverage: Vec<CoverageStats>,
    pub nonconverged: usize,
    pub failed: usize,
    pub replications: Vec<Replication>,
    /// Elapsed time; not serialized so that reports are byte-reproducible.
    #[serde(skip)]
    pub wallclock_secs: f64,
}

impl McReport {
    pub fn estimand(&self, name: &str) -> Option<&EstimandStats> {
        self.estimands.iter().find(|e| e.name == name)
    }
}

fn run_replication(cfg: &McConfig, opts: &FitOptions, k: usize, rep: u64) -> Result<Replication> {
    let spec = &cfg.scenario;
    let data = simulate(spec, cfg.n, cfg.seed, rep)?;
    let trend = spec.f0.as_ref().map(|f| f.spec());
    let f = fit(&data.y, &data.x, spec.kind, k, trend.as_ref(), opts)?;
    let band = if cfg.band_points.is_empty() {
        Vec::new()
    } else {
        let b = band_from_parts(&f, f.sigma2_hat, f.local_time_hat, cfg.n, &cfg.band_points, cfg.band_level)?;
        b.center.into_iter().zip(b.half_width).collect()
    };
    Ok(Replication {
        rep,
        theta_hat: f.theta_oriented(),
        theta_emp: f.theta_emp,
        beta_hat: f.beta_hat,
        objective: f.objective,
        sigma2_hat: f.sigma2_hat,
        converged: f.opt_trace.converged,
        band,
    })
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {jobs} worker threads: {e}")))
}

/// Runs `reps` independent replications on `jobs` threads.
pub fn run_mc(cfg: &McConfig, jobs: usize) -> Result<McReport> {
    if cfg.reps < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 replications, got {}", cfg.reps)));
    }
    cfg.scenario.validate()?;
    let start = Instant::now();
    let k = cfg.truncation();
    let opts = cfg.effective_fit();
    let pool = thread_pool(jobs)?;
    let outcomes: Vec<Result<Replication>> = pool.install(|| {
        (0..cfg.reps as u64)
            .into_par_iter()
            .map(|r| run_replication(cfg, &opts, k, r))
            .collect()
    });
    let mut replications = Vec::with_capacity(cfg.reps);
    let mut failed = 0;
    for o in outcomes {
        match o {
            Ok(r) => replications.push(r),
            Err(_) => failed += 1,
        }
    }
    if replications.len() < 2 {
        return Err(Error::InsufficientData(format!("{failed} of {} replications failed", cfg.reps)));
    }
    let mut report = summarize(cfg, k, replications, failed)?;
    report.wallclock_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Recomputes every summary statistic from stored replications.
pub fn summarize(cfg: &McConfig, k: usize, replications: Vec<Replication>, failed: usize) -> Result<McReport> {
    let spec = &cfg.scenario;
    let theta0 = &spec.theta0;
    let thetas: Vec<&[f64]> = replications.iter().map(|r| r.theta_hat.as_slice()).collect();
    let emps: Vec<&[f64]> = replications.iter().map(|r| r.theta_emp.as_slice()).collect();
    let mut estimands = vec![
        EstimandStats::from_samples("theta_hat", theta0, &thetas),
        EstimandStats::from_samples("theta_emp", theta0, &emps),
    ];
    if let Some(beta0) = &spec.beta0 {
        let betas: Vec<&[f64]> = replications.iter().filter_map(|r| r.beta_hat.as_deref()).collect();
        if betas.len() == replications.len() {
            estimands.push(EstimandStats::from_samples("beta_hat", beta0, &betas));
        }
    }
    let is_e1 = theta0.first() == Some(&1.0) && theta0[1..].iter().all(|v| *v == 0.0);
    let rotated = if is_e1 { Some(rotated_stats(&thetas, theta0)?) } else { None };
    let coverage = cfg
        .band_points
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let truth = spec.g0.eval(u);
            let hits = replications
                .iter()
                .filter(|r| (r.band[i].0 - truth).abs() <= r.band[i].1)
                .count();
            CoverageStats {
                point: u,
                truth,
                level: cfg.band_level,
                frequency: hits as f64 / replications.len() as f64,
            }
        })
        .collect();
    Ok(McReport {
        config: cfg.clone(),
        k,
        estimands,
        rotated,
        coverage,
        nonconverged: replications.iter().filter(|r| !r.converged).count(),
        failed,
        replications,
        wallclock_secs: 0.0,
    })
}

/// Rotated-coordinate summaries for designs with `θ₀ = e₁`.
pub fn rotated_stats(theta_hats: &[&[f64]], theta0: &[f64]) -> Result<RotatedStats> {
    let is_e1 = theta0.first() == Some(&1.0) && theta0[1..].iter().all(|v| *v == 0.0);
    if !is_e1 {
        return Err(Error::InvalidArgument("rotated statistics need theta0 = e1".into()));
    }
    let units: Vec<Vec<f64>> = theta_hats
        .iter()
        .map(|t| {
            let norm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
            t.iter().map(|v| v / norm).collect()
        })
        .collect();
    let unit_refs: Vec<&[f64]> = units.iter().map(Vec::as_slice).collect();
    Ok(RotatedStats {
        alpha: EstimandStats::from_samples("alpha_hat", theta0, theta_hats),
        alpha_unit: EstimandStats::from_samples("alpha_unit", theta0, &unit_refs),
        alpha_unit_first: units.iter().map(|u| u[0]).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub estimand: String,
    /// Median error norm at each `n`.
    pub medians: Vec<f64>,
    /// Least-squares slope of `log median` on `log n`.
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub ns: Vec<usize>,
    pub ks: Vec<usize>,
    pub reps: usize,
    pub rows: Vec<RateRow>,
    /// Fraction of bootstrap resamples in which the slope for `θ̂` exceeds the slope for `θ̂_emp`.
    pub shallower_fraction: f64,
    pub bootstrap_resamples: usize,
}

impl RateTable {
    pub fn slope(&self, estimand: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.estimand == estimand).map(|r| r.slope)
    }
}

/// Ordinary least-squares slope of `y` on `x` with intercept.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Error norms `‖θ̂ − θ₀‖`, `‖θ̂_emp − θ₀‖` and, when present, `‖β̂ − β₀‖` per replication.
fn error_norms(report: &McReport) -> Vec<(&'static str, Vec<f64>)> {
    let spec = &report.config.scenario;
    let reps = &report.replications;
    let mut out = vec![
        ("theta_hat", reps.iter().map(|r| distance(&r.theta_hat, &spec.theta0)).collect()),
        ("theta_emp", reps.iter().map(|r| distance(&r.theta_emp, &spec.theta0)).collect()),
    ];
    if let Some(beta0) = &spec.beta0 {
        out.push((
            "beta_hat",
            reps.iter()
                .filter_map(|r| r.beta_hat.as_ref().map(|b| distance(b, beta0)))
                .collect(),
        ));
    }
    out
}

/// Median-error slopes across sample sizes, with a bootstrap comparison of
/// the `θ̂` and `θ̂_emp` slopes.
pub fn rate_study(
    scenario: &ScenarioSpec,
    ns: &[usize],
    reps: usize,
    seed: u64,
    start: StartPolicy,
    fit_opts: &FitOptions,
    bootstrap_resamples: usize,
    jobs: usize,
) -> Result<RateTable> {
    if ns.len() < 3 || ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("need at least three strictly increasing sample sizes".into()));
    }
    let mut per_n = Vec::with_capacity(ns.len());
    let mut ks = Vec::with_capacity(ns.len());
    for &n in ns {
        let cfg = McConfig {
            start,
            fit: fit_opts.clone(),
            ..McConfig::new(scenario.clone(), n, reps, seed)
        };
        let report = run_mc(&cfg, jobs)?;
        ks.push(report.k);
        per_n.push(error_norms(&report));
    }
    let logn: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let names: Vec<&str> = per_n[0].iter().map(|(name, _)| *name).collect();
    let rows = names
        .iter()
        .enumerate()
        .map(|(e, name)| {
            let medians: Vec<f64> = per_n.iter().map(|errs| median(&mut errs[e].1.clone())).collect();
            let logm: Vec<f64> = medians.iter().map(|m| m.ln()).collect();
            RateRow {
                estimand: name.to_string(),
                slope: ls_slope(&logn, &logm),
                medians,
            }
        })
        .collect();

    let mut stream = Stream::new(seed, 0, Purpose::Auxiliary);
    let mut shallower = 0;
    for _ in 0..bootstrap_resamples {
        let slope_of = |e: usize, stream: &mut Stream| {
            let logm: Vec<f64> = per_n
                .iter()
                .map(|errs| {
                    let src = &errs[e].1;
                    let mut draw: Vec<f64> = (0..src.len()).map(|_| src[stream.below(src.len())]).collect();
                    median(&mut draw).ln()
                })
                .collect();
            ls_slope(&logn, &logm)
        };
        let raw = slope_of(0, &mut stream);
        let emp = slope_of(1, &mut stream);
        if raw > emp {
            shallower += 1;
        }
    }
    Ok(RateTable {
        ns: ns.to_vec(),
        ks,
        reps,
        rows,
        shallower_fraction: if bootstrap_resamples == 0 {
            f64::NAN
        } else {
            shallower as f64 / bootstrap_resamples as f64
        },
        bootstrap_resamples,
    })
}
