//! Macro consumption pipeline: ingest quarterly levels, remove estimated
//! drifts, fit the partially linear, single-index and linear competitors,
//! and compare in-sample and rolling out-of-sample mean squared errors.
//!
//! Input is a CSV with header `date,C,I,V,r`: consumption, disposable income
//! and investment levels (logged on ingestion) and the real interest rate.
//! Quarterly series of this kind are published by FRED; this crate does not
//! download them. Unit-root pretesting of the detrended series is left to the
//! user.

use std::io::Read;
use std::path::Path;

use chrono::{Months, NaiveDate};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{fit_plsi, fit_si, FitOptions, FitResult};
use crate::hermite::{LinkOrigin, SeriesLink};
use crate::inference::{g_band, BandResult};
use crate::rng::{Purpose, Stream};
use crate::selection::{default_candidates, gcv_select, GcvTable};
use crate::series_fit::ols;

pub const HEADER: [&str; 5] = ["date", "C", "I", "V", "r"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroPanel {
    pub dates: Vec<NaiveDate>,
    /// Log consumption.
    pub c: Vec<f64>,
    /// Log income.
    pub i: Vec<f64>,
    /// Log investment.
    pub v: Vec<f64>,
    pub r: Vec<f64>,
    /// Drift estimates for `(c, i, v)` once detrended.
    pub drift: Option<[f64; 3]>,
}

impl MacroPanel {
    pub fn from_logs(dates: Vec<NaiveDate>, c: Vec<f64>, i: Vec<f64>, v: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        let n = dates.len();
        if [c.len(), i.len(), v.len(), r.len()].iter().any(|&m| m != n) {
            return Err(Error::DimensionMismatch("panel series have different lengths".into()));
        }
        Ok(Self {
            dates,
            c,
            i,
            v,
            r,
            drift: None,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

pub fn ingest(path: impl AsRef<Path>) -> Result<MacroPanel> {
    ingest_reader(std::fs::File::open(path)?)
}

/// Parses and validates the CSV; `row` in errors counts data rows from 1.
/// Lines starting with `#` are skipped.
pub fn ingest_reader<R: Read>(reader: R) -> Result<MacroPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        return Err(Error::Schema(format!(
            "expected header {}, found {}",
            HEADER.join(","),
            header.join(",")
        )));
    }
    let mut dates = Vec::new();
    let (mut c, mut i, mut v, mut r) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        let row = idx + 1;
        if record.len() != HEADER.len() {
            return Err(Error::Schema(format!("row {row} has {} fields", record.len())));
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|e| Error::BadValue {
            row,
            column: "date".into(),
            message: e.to_string(),
        })?;
        if let Some(prev) = dates.last() {
            if date <= *prev {
                return Err(Error::Schema(format!(
                    "dates must be strictly increasing: row {row} ({date}) follows {prev}"
                )));
            }
        }
        dates.push(date);
        for (col, out) in [(1, &mut c), (2, &mut i), (3, &mut v), (4, &mut r)] {
            let name = HEADER[col];
            let value: f64 = record[col].parse().map_err(|_| Error::BadValue {
                row,
                column: name.into(),
                message: format!("'{}' is not a number", &record[col]),
            })?;
            if !value.is_finite() {
                return Err(Error::BadValue {
                    row,
                    column: name.into(),
                    message: "value is not finite".into(),
                });
            }
            if col < 4 {
                if value <= 0.0 {
                    return Err(Error::BadValue {
                        row,
                        column: name.into(),
                        message: format!("level {value} must be positive to take logs"),
                    });
                }
                out.push(value.ln());
            } else {
                out.push(value);
            }
        }
    }
    MacroPanel::from_logs(dates, c, i, v, r)
}

/// Mean first difference.
pub fn drift(series: &[f64]) -> f64 {
    let m = series.len();
    (series[m - 1] - series[0]) / (m - 1) as f64
}

/// Removes `μ̂·t` (with `t` counted from 1) from `c`, `i` and `v`.
pub fn detrend(panel: &MacroPanel) -> Result<MacroPanel> {
    if panel.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "detrending needs at least 3 observations, got {}",
            panel.len()
        )));
    }
    let strip = |s: &[f64], mu: f64| -> Vec<f64> { s.iter().enumerate().map(|(t, x)| x - mu * (t + 1) as f64).collect() };
    let mu = [drift(&panel.c), drift(&panel.i), drift(&panel.v)];
    Ok(MacroPanel {
        dates: panel.dates.clone(),
        c: strip(&panel.c, mu[0]),
        i: strip(&panel.i, mu[1]),
        v: strip(&panel.v, mu[2]),
        r: panel.r.clone(),
        drift: Some(mu),
    })
}

/// Response and regressors for `t = 2, …, T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Regression {
    /// Time index (from 1) of each row.
    pub t: Vec<usize>,
    pub y: Vec<f64>,
    pub x: DMatrix<f64>,
}

pub const REGRESSOR_NAMES: [&str; 5] = ["i_lag", "i", "v", "v_lag", "r"];

/// `y_t = c̃_t`, `x_t = (ĩ_{t−1}, ĩ_t, ṽ_t, ṽ_{t−1}, r_t)`.
pub fn build_regressors(panel: &MacroPanel) -> Result<Regression> {
    if panel.drift.is_none() {
        return Err(Error::InvalidArgument("panel must be detrended first".into()));
    }
    if panel.len() < 2 {
        return Err(Error::InsufficientData("need at least two observations".into()));
    }
    let n = panel.len() - 1;
    let x = DMatrix::from_fn(n, 5, |row, col| {
        let t = row + 1;
        match col {
            0 => panel.i[t - 1],
            1 => panel.i[t],
            2 => panel.v[t],
            3 => panel.v[t - 1],
            _ => panel.r[t],
        }
    });
    Ok(Regression {
        t: (2..=panel.len()).collect(),
        y: panel.c[1..].to_vec(),
        x,
    })
}

impl Regression {
    /// Rows with `t ≤ last`.
    pub fn head(&self, last: usize) -> Regression {
        let rows = self.t.iter().take_while(|&&t| t <= last).count();
        Regression {
            t: self.t[..rows].to_vec(),
            y: self.y[..rows].to_vec(),
            x: self.x.rows(0, rows).into_owned(),
        }
    }

    pub fn row_of(&self, t: usize) -> Option<usize> {
        self.t.iter().position(|&s| s == t)
    }

    fn x_row(&self, row: usize) -> Vec<f64> {
        self.x.row(row).iter().copied().collect()
    }
}

/// The three competing models, numbered as in the comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Competitor {
    Plsi,
    Si,
    Linear,
}

impl Competitor {
    pub const ALL: [Competitor; 3] = [Competitor::Plsi, Competitor::Si, Competitor::Linear];

    pub fn index(self) -> usize {
        match self {
            Competitor::Plsi => 1,
            Competitor::Si => 2,
            Competitor::Linear => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Fitted {
    Index(Box<FitResult>),
    Linear(Vec<f64>),
}

impl Fitted {
    pub fn predict(&self, row: &[f64]) -> f64 {
        match self {
            Fitted::Index(f) => f.predict(row),
            Fitted::Linear(b) => row.iter().zip(b).map(|(x, b)| x * b).sum(),
        }
    }
}

/// Fits one competitor; `k` is ignored for the linear model.
pub fn fit_competitor(y: &[f64], x: &DMatrix<f64>, model: Competitor, k: usize, opts: &FitOptions) -> Result<Fitted> {
    Ok(match model {
        Competitor::Plsi => Fitted::Index(Box::new(fit_plsi(y, x, k, opts)?)),
        Competitor::Si => Fitted::Index(Box::new(fit_si(y, x, k, opts)?)),
        Competitor::Linear => Fitted::Linear(ols(x, y)?),
    })
}

fn mean_square(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (sum, count) = pairs.fold((0.0, 0usize), |(s, c), (a, b)| (s + (a - b) * (a - b), c + 1));
    sum / count as f64
}

/// In-sample mean squared error of the full-sample fit.
pub fn mse_in(y: &[f64], x: &DMatrix<f64>, model: Competitor, k: usize, opts: &FitOptions) -> Result<f64> {
    let fitted = fit_competitor(y, x, model, k, opts)?;
    Ok(in_sample(y, x, &fitted))
}

fn in_sample(y: &[f64], x: &DMatrix<f64>, fitted: &Fitted) -> f64 {
    mean_square((0..y.len()).map(|row| {
        let r: Vec<f64> = x.row(row).iter().copied().collect();
        (y[row], fitted.predict(&r))
    }))
}

/// Rolling one-step scheme: for `j = 1, …, horizons` fit on `t ≤ start + step·j`
/// and forecast `t = start + 1 + step·j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub start: usize,
    pub step: usize,
    pub horizons: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            start: 178,
            step: 2,
            horizons: 10,
        }
    }
}

impl Protocol {
    pub fn forecast_times(&self) -> Vec<usize> {
        (1..=self.horizons).map(|j| self.start + 1 + self.step * j).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutOfSample {
    pub forecast_t: Vec<usize>,
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
    pub mse: f64,
}

/// Out-of-sample mean squared error under `protocol`, refitting every
/// parameter at each origin with `k` held fixed.
pub fn mse_out(
    reg: &Regression,
    model: Competitor,
    k: usize,
    protocol: &Protocol,
    opts: &FitOptions,
    jobs: usize,
) -> Result<OutOfSample> {
    let times = protocol.forecast_times();
    if protocol.horizons == 0 || protocol.step == 0 {
        return Err(Error::InvalidArgument("protocol needs positive step and horizon count".into()));
    }
    let last = *times.last().expect("nonempty");
    let rows: Vec<usize> = times
        .iter()
        .map(|&t| {
            reg.row_of(t).ok_or_else(|| {
                Error::InsufficientData(format!(
                    "protocol forecasts t = {t} but the data end at t = {}",
                    reg.t.last().copied().unwrap_or(0)
                ))
            })
        })
        .collect::<Result<_>>()?;
    debug_assert_eq!(reg.row_of(last), rows.last().copied());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker threads: {e}")))?;
    let predicted: Vec<Result<f64>> = pool.install(|| {
        times
            .par_iter()
            .zip(rows.par_iter())
            .map(|(&t, &row)| {
                let train = reg.head(t - 1);
                let fitted = fit_competitor(&train.y, &train.x, model, k, opts)?;
                Ok(fitted.predict(&reg.x_row(row)))
            })
            .collect()
    });
    let predicted = predicted.into_iter().collect::<Result<Vec<f64>>>()?;
    let actual: Vec<f64> = rows.iter().map(|&row| reg.y[row]).collect();
    Ok(OutOfSample {
        mse: mean_square(actual.iter().copied().zip(predicted.iter().copied())),
        forecast_t: times,
        actual,
        predicted,
    })
}

/// How a truncation level is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KChoice {
    Gcv,
    Fixed(usize),
}

impl std::str::FromStr for KChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("gcv") {
            return Ok(KChoice::Gcv);
        }
        s.parse()
            .map(KChoice::Fixed)
            .map_err(|_| Error::InvalidArgument(format!("k must be 'gcv' or a positive integer, got '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalConfig {
    pub k_plsi: KChoice,
    pub k_si: KChoice,
    pub protocol: Protocol,
    /// Extra truncation levels at which both index models are also compared.
    pub sweep: Vec<usize>,
    pub band_level: f64,
    pub band_grid: Vec<f64>,
    pub fit: FitOptions,
}

impl Default for EmpiricalConfig {
    fn default() -> Self {
        Self {
            k_plsi: KChoice::Gcv,
            k_si: KChoice::Gcv,
            protocol: Protocol::default(),
            sweep: Vec::new(),
            band_level: 0.8,
            band_grid: (0..=80).map(|j| -4.0 + 0.1 * j as f64).collect(),
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub model: Competitor,
    pub k: Option<usize>,
    pub mse_in: f64,
    pub mse_out: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalReport {
    pub n_obs: usize,
    pub drift: [f64; 3],
    pub gcv_plsi: Option<GcvTable>,
    pub gcv_si: Option<GcvTable>,
    pub plsi: FitResult,
    pub si: FitResult,
    pub linear: Vec<f64>,
    /// One row per model at the selected truncation, then the sweep rows.
    pub mse: Vec<MseRow>,
    pub out_of_sample: Vec<(Competitor, OutOfSample)>,
    pub band: BandResult,
}

fn resolve_k(choice: KChoice, reg: &Regression, model: Competitor, opts: &FitOptions) -> Result<(usize, Option<GcvTable>)> {
    match choice {
        KChoice::Fixed(k) => Ok((k, None)),
        KChoice::Gcv => {
            let n = reg.y.len();
            let candidates: Vec<usize> = default_candidates().into_iter().filter(|&k| 2 * k < n).collect();
            let kind = match model {
                Competitor::Plsi => crate::model::ModelKind::Plsi,
                _ => crate::model::ModelKind::Si,
            };
            let table = gcv_select(&reg.y, &reg.x, kind, None, &candidates, opts)?;
            Ok((table.chosen, Some(table)))
        }
    }
}

/// The full comparison on a panel of levels.
pub fn run(panel: &MacroPanel, cfg: &EmpiricalConfig, jobs: usize) -> Result<EmpiricalReport> {
    let detrended = detrend(panel)?;
    let reg = build_regressors(&detrended)?;
    let (k_plsi, gcv_plsi) = resolve_k(cfg.k_plsi, &reg, Competitor::Plsi, &cfg.fit)?;
    let (k_si, gcv_si) = resolve_k(cfg.k_si, &reg, Competitor::Si, &cfg.fit)?;

    let plsi = fit_plsi(&reg.y, &reg.x, k_plsi, &cfg.fit)?;
    let si = fit_si(&reg.y, &reg.x, k_si, &cfg.fit)?;
    let linear = ols(&reg.x, &reg.y)?;

    let mut mse = Vec::new();
    let mut out_of_sample = Vec::new();
    let full: [(Competitor, usize, Fitted); 3] = [
        (Competitor::Plsi, k_plsi, Fitted::Index(Box::new(plsi.clone()))),
        (Competitor::Si, k_si, Fitted::Index(Box::new(si.clone()))),
        (Competitor::Linear, 0, Fitted::Linear(linear.clone())),
    ];
    for (model, k, fitted) in &full {
        let oos = mse_out(&reg, *model, *k, &cfg.protocol, &cfg.fit, jobs)?;
        mse.push(MseRow {
            model: *model,
            k: (*model != Competitor::Linear).then_some(*k),
            mse_in: in_sample(&reg.y, &reg.x, fitted),
            mse_out: oos.mse,
        });
        out_of_sample.push((*model, oos));
    }
    for &k in &cfg.sweep {
        for model in [Competitor::Plsi, Competitor::Si] {
            mse.push(MseRow {
                model,
                k: Some(k),
                mse_in: mse_in(&reg.y, &reg.x, model, k, &cfg.fit)?,
                mse_out: mse_out(&reg, model, k, &cfg.protocol, &cfg.fit, jobs)?.mse,
            });
        }
    }
    let band = g_band(&reg.y, &reg.x, &plsi, &cfg.band_grid, cfg.band_level)?;
    Ok(EmpiricalReport {
        n_obs: reg.y.len(),
        drift: detrended.drift.expect("detrended"),
        gcv_plsi,
        gcv_si,
        plsi,
        si,
        linear,
        mse,
        out_of_sample,
        band,
    })
}

/// Parameters reported for the fitted partially linear model on the
/// 1960:1–2009:3 quarterly sample, used as ground truth for synthetic panels.
pub mod reference {
    pub const BETA: [f64; 5] = [-0.0479, 0.5701, -1.1689, 1.8685, -0.1223];
    pub const THETA: [f64; 5] = [0.2110, -0.3452, 0.0835, 2.6095, -0.2022];
    pub const LINK: [f64; 5] = [-89.64, 112.54, -74.65, 28.94, -3.33];
    pub const DRIFT: [f64; 3] = [0.1022, 0.1302, 0.0181];
    pub const LENGTH: usize = 199;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub length: usize,
    pub seed: u64,
    pub income_sd: f64,
    pub investment_sd: f64,
    pub rate_sd: f64,
    pub error_sd: f64,
    /// Initial detrended log income and interest rate.
    pub income_start: f64,
    pub rate_start: f64,
    /// Initial value of the index `θᵀx`, which fixes the investment start.
    pub index_start: f64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            length: reference::LENGTH,
            seed: 20091001,
            income_sd: 0.03,
            investment_sd: 0.03,
            rate_sd: 0.5,
            error_sd: 0.3,
            income_start: 0.0,
            rate_start: 2.0,
            index_start: 2.0,
        }
    }
}

/// Synthetic levels panel generated from the partially linear model with the
/// reference parameters: random-walk detrended regressors, Gaussian errors,
/// and the reference drifts added back before exponentiating.
pub fn synthetic_panel(spec: &FixtureSpec) -> Result<MacroPanel> {
    use reference::{BETA, DRIFT, LINK, THETA};
    if spec.length < 3 {
        return Err(Error::InvalidArgument("fixture needs at least 3 observations".into()));
    }
    let mut stream = Stream::new(spec.seed, 0, Purpose::Regressors);
    let mut errors = Stream::new(spec.seed, 0, Purpose::Errors);
    let link = SeriesLink::new(LINK.to_vec(), LinkOrigin::Projected);
    // θᵀx at t = 1 uses the current values for the lags.
    let v_start = (spec.index_start
        - (THETA[0] + THETA[1]) * spec.income_start
        - THETA[4] * spec.rate_start)
        / (THETA[2] + THETA[3]);
    let len = spec.length;
    let (mut it, mut vt, mut rt) = (vec![spec.income_start], vec![v_start], vec![spec.rate_start]);
    for _ in 1..len {
        it.push(it.last().unwrap() + stream.normal(spec.income_sd));
        vt.push(vt.last().unwrap() + stream.normal(spec.investment_sd));
        rt.push(rt.last().unwrap() + stream.normal(spec.rate_sd));
    }
    let mut ct = Vec::with_capacity(len);
    for t in 0..len {
        let lag = t.saturating_sub(1);
        let x = [it[lag], it[t], vt[t], vt[lag], rt[t]];
        let dot = |w: &[f64]| -> f64 { w.iter().zip(&x).map(|(a, b)| a * b).sum() };
        ct.push(dot(&BETA) + link.eval(dot(&THETA)) + errors.normal(spec.error_sd));
    }
    let start = NaiveDate::from_ymd_opt(1960, 1, 1).expect("valid date");
    let dates = (0..len)
        .map(|q| start.checked_add_months(Months::new(3 * q as u32)).expect("date in range"))
        .collect();
    let trend = |s: &[f64], mu: f64| -> Vec<f64> { s.iter().enumerate().map(|(t, x)| x + mu * (t + 1) as f64).collect() };
    MacroPanel::from_logs(dates, trend(&ct, DRIFT[0]), trend(&it, DRIFT[1]), trend(&vt, DRIFT[2]), rt)
}

/// Writes a panel as a levels CSV with the ingestion header.
pub fn write_panel<W: std::io::Write>(panel: &MacroPanel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for t in 0..panel.len() {
        w.write_record([
            panel.dates[t].format("%Y-%m-%d").to_string(),
            format!("{:.16e}", panel.c[t].exp()),
            format!("{:.16e}", panel.i[t].exp()),
            format!("{:.16e}", panel.v[t].exp()),
            format!("{:.16e}", panel.r[t]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quarterly(n: usize) -> Vec<NaiveDate> {
        let start = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
        (0..n).map(|q| start.checked_add_months(Months::new(3 * q as u32)).unwrap()).collect()
    }

    #[test]
    fn ingest_well_formed() {
        let csv = "date,C,I,V,r\n2000-01-01,1,2,3,0.5\n2000-04-01,1.1,2.1,3.1,-0.25\n";
        let p = ingest_reader(csv.as_bytes()).unwrap();
        assert_eq!(p.len(), 2);
        assert_abs_diff_eq!(p.i[1], 2.1f64.ln(), epsilon = 1e-15);
        assert_eq!(p.r[1], -0.25);
    }

    #[test]
    fn ingest_rejects_non_positive_levels() {
        let csv = "date,C,I,V,r\n2000-01-01,1,2,3,0.5\n2000-04-01,0,2,3,0.5\n";
        match ingest_reader(csv.as_bytes()) {
            Err(Error::BadValue { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "C");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ingest_rejects_unordered_dates_and_bad_headers() {
        let csv = "date,C,I,V,r\n2000-04-01,1,2,3,0.5\n2000-01-01,1,2,3,0.5\n";
        assert!(matches!(ingest_reader(csv.as_bytes()), Err(Error::Schema(_))));
        let csv = "date,C,I,r,V\n2000-04-01,1,2,3,0.5\n";
        assert!(matches!(ingest_reader(csv.as_bytes()), Err(Error::Schema(_))));
    }

    #[test]
    fn detrend_exact_drift() {
        let n = 10;
        let c: Vec<f64> = (1..=n).map(|t| 0.1022 * t as f64).collect();
        let flat = vec![3.0; n];
        let p = MacroPanel::from_logs(quarterly(n), c, flat.clone(), flat.clone(), flat).unwrap();
        let d = detrend(&p).unwrap();
        let mu = d.drift.unwrap();
        assert_abs_diff_eq!(mu[0], 0.1022, epsilon = 1e-15);
        assert!(d.c.iter().all(|v| v.abs() < 1e-14));
        assert_eq!(mu[1], 0.0);
        assert_eq!(d.i, p.i);
        assert_eq!(d.r, p.r);
    }

    #[test]
    fn regressor_alignment() {
        let n = 3;
        let p = MacroPanel::from_logs(
            quarterly(n),
            vec![1.0, 2.0, 3.0],
            vec![10.0, 11.0, 12.0],
            vec![20.0, 21.0, 22.0],
            vec![30.0, 31.0, 32.0],
        )
        .unwrap();
        assert!(build_regressors(&p).is_err());
        let reg = build_regressors(&MacroPanel {
            drift: Some([0.0; 3]),
            ..p
        })
        .unwrap();
        assert_eq!(reg.t, vec![2, 3]);
        assert_eq!(reg.y, vec![2.0, 3.0]);
        assert_eq!(reg.x.row(0).iter().copied().collect::<Vec<_>>(), vec![10.0, 11.0, 21.0, 20.0, 31.0]);
        assert_eq!(reg.x.row(1).iter().copied().collect::<Vec<_>>(), vec![11.0, 12.0, 22.0, 21.0, 32.0]);
    }

    #[test]
    fn full_length_panel_gives_198_rows() {
        let p = synthetic_panel(&FixtureSpec::default()).unwrap();
        let reg = build_regressors(&detrend(&p).unwrap()).unwrap();
        assert_eq!(reg.y.len(), 198);
        assert_eq!(reg.x.ncols(), 5);
    }

    #[test]
    fn protocol_forecast_rows() {
        let times = Protocol::default().forecast_times();
        assert_eq!(times, (181..=199).step_by(2).collect::<Vec<_>>());
    }

    #[test]
    fn linear_model_on_linear_data() {
        let x = DMatrix::from_fn(30, 2, |t, j| ((t * (j + 3)) % 7) as f64 + j as f64);
        let y: Vec<f64> = (0..30).map(|t| 0.5 * x[(t, 0)] - 1.5 * x[(t, 1)]).collect();
        let m = mse_in(&y, &x, Competitor::Linear, 0, &FitOptions::default()).unwrap();
        assert!(m < 1e-24);
    }

    #[test]
    fn out_of_sample_protocol_audit() {
        let p = synthetic_panel(&FixtureSpec::default()).unwrap();
        let reg = build_regressors(&detrend(&p).unwrap()).unwrap();
        let oos = mse_out(&reg, Competitor::Linear, 0, &Protocol::default(), &FitOptions::default(), 2).unwrap();
        assert_eq!(oos.forecast_t, vec![181, 183, 185, 187, 189, 191, 193, 195, 197, 199]);
        let manual: f64 = oos.actual.iter().zip(&oos.predicted).map(|(a, p)| (a - p).powi(2)).sum::<f64>() / 10.0;
        assert_abs_diff_eq!(manual, oos.mse, epsilon = 1e-15);
        let short = Protocol {
            horizons: 11,
            ..Protocol::default()
        };
        assert!(mse_out(&reg, Competitor::Linear, 0, &short, &FitOptions::default(), 1).is_err());
    }

    #[test]
    fn constant_response_gives_finite_errors() {
        let p = synthetic_panel(&FixtureSpec::default()).unwrap();
        let mut reg = build_regressors(&detrend(&p).unwrap()).unwrap();
        reg.y.iter_mut().for_each(|v| *v = 1.0);
        let oos = mse_out(&reg, Competitor::Linear, 0, &Protocol::default(), &FitOptions::default(), 1).unwrap();
        assert!(oos.mse.is_finite());
    }

    #[test]
    fn k_choice_parsing() {
        assert_eq!("gcv".parse::<KChoice>().unwrap(), KChoice::Gcv);
        assert_eq!("5".parse::<KChoice>().unwrap(), KChoice::Fixed(5));
        assert!("five".parse::<KChoice>().is_err());
    }

    #[test]
    fn panel_round_trips_through_csv() {
        let p = synthetic_panel(&FixtureSpec {
            length: 12,
            ..FixtureSpec::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        write_panel(&p, &mut buf).unwrap();
        let q = ingest_reader(buf.as_slice()).unwrap();
        assert_eq!(q.dates, p.dates);
        for (a, b) in q.c.iter().zip(&p.c) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
    }
}
