use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::Value;
use sindex::empirical::{self, Competitor, EmpiricalConfig, FixtureSpec, KChoice, Protocol};
use sindex::estimators::{fit, FitOptions, FitResult};
use sindex::inference::g_band;
use sindex::model::{HRegularSpec, ModelKind, TrendForm};
use sindex::montecarlo::{self, default_fit, McConfig, McReport, RateTable, StartPolicy};
use sindex::procsim::simulate;
use sindex::selection::{default_candidates, gcv_select, GcvTable};

use crate::args::*;
use crate::output::{is_csv, num, sibling, write_csv, write_json};

pub struct Session {
    pub config: Option<PathBuf>,
    pub verbose: u8,
    pub quiet: bool,
    pub default_jobs: usize,
}

impl Session {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn progress(&self, msg: impl AsRef<str>) {
        if self.verbose > 0 && !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

/// Response and regressors from a data CSV.
pub struct Dataset {
    pub names: Vec<String>,
    pub y: Vec<f64>,
    pub x: DMatrix<f64>,
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let y_col = header
        .iter()
        .position(|h| h == "y")
        .with_context(|| format!("{}: no 'y' column", path.display()))?;
    let x_cols: Vec<usize> = (0..header.len()).filter(|&j| j != y_col && header[j] != "t").collect();
    if x_cols.is_empty() {
        anyhow::bail!("{}: no regressor columns", path.display());
    }
    let mut y = Vec::new();
    let mut flat = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let parse = |j: usize| -> Result<f64> {
            let v: f64 = record[j]
                .parse()
                .with_context(|| format!("{} row {}: column '{}' is not a number", path.display(), row + 1, header[j]))?;
            anyhow::ensure!(v.is_finite(), "{} row {}: column '{}' is not finite", path.display(), row + 1, header[j]);
            Ok(v)
        };
        y.push(parse(y_col)?);
        for &j in &x_cols {
            flat.push(parse(j)?);
        }
    }
    let x = DMatrix::from_row_slice(y.len(), x_cols.len(), &flat);
    Ok(Dataset {
        names: x_cols.iter().map(|&j| header[j].clone()).collect(),
        y,
        x,
    })
}

fn fit_options(args: &FitArgs, base: FitOptions) -> Result<FitOptions> {
    let mut opts = base;
    if let Some(s) = args.starts {
        opts.grid_starts = Some(s);
    }
    if let Some(s) = args.simplex_scale {
        if !(s > 0.0) {
            return Err(usage("--simplex-scale must be positive"));
        }
        opts.nelder_mead.simplex_scale = s;
    }
    if let Some(m) = args.max_iter {
        opts.nelder_mead.max_iter = m;
    }
    Ok(opts)
}

fn fill_fit(args: &mut FitArgs, opts: &FitOptions) {
    args.starts = opts.grid_starts.or(args.starts);
    args.simplex_scale = Some(opts.nelder_mead.simplex_scale);
    args.max_iter = Some(opts.nelder_mead.max_iter);
}

fn trend_for(model: ModelKind, trend: &mut Option<String>) -> Result<Option<HRegularSpec>> {
    match model {
        ModelKind::Pnlsi => {
            let label = trend.get_or_insert_with(|| "identity".into());
            let form: TrendForm = label.parse().map_err(|e| usage(format!("--trend: {e}")))?;
            Ok(Some(form.spec()))
        }
        _ => {
            if trend.is_some() {
                return Err(usage("--trend applies only to --model pnlsi"));
            }
            Ok(None)
        }
    }
}

fn parse_k(raw: &str, flag: &str) -> Result<KChoice> {
    match raw.parse::<KChoice>() {
        Ok(KChoice::Fixed(0)) | Err(_) => Err(usage(format!("--{flag} must be 'gcv' or a positive integer, got '{raw}'"))),
        Ok(k) => Ok(k),
    }
}

fn gcv_candidates(n: usize) -> Vec<usize> {
    default_candidates().into_iter().filter(|&k| 2 * k < n).collect()
}

/// Fits at a fixed `k`, or at the GCV choice over the default candidates.
fn fit_with_choice(
    data: &Dataset,
    model: ModelKind,
    k: KChoice,
    trend: Option<&HRegularSpec>,
    opts: &FitOptions,
) -> Result<(FitResult, Option<GcvTable>)> {
    match k {
        KChoice::Fixed(k) => Ok((fit(&data.y, &data.x, model, k, trend, opts)?, None)),
        KChoice::Gcv => {
            let table = gcv_select(&data.y, &data.x, model, trend, &gcv_candidates(data.y.len()), opts)?;
            let f = fit(&data.y, &data.x, model, table.chosen, trend, opts)?;
            Ok((f, Some(table)))
        }
    }
}

pub fn simulate_cmd(ctx: &Session, flags: &SimulateArgs) -> Result<PathBuf> {
    let mut a = merge(flags, ctx.config.as_deref())?;
    let out = required(a.out.clone(), "out")?;
    let scenario = a.scenario.get_or_insert(ScenarioArg::Name("si-part-one".into())).clone();
    if matches!(&scenario, ScenarioArg::Name(s) if s == MACRO_FIXTURE) {
        let defaults = FixtureSpec::default();
        let spec = FixtureSpec {
            length: *a.n.get_or_insert(defaults.length),
            seed: *a.seed.get_or_insert(defaults.seed),
            ..defaults
        };
        let config = echo(&a)?;
        let panel = empirical::synthetic_panel(&spec)?;
        let mut buf = Vec::new();
        preamble(&mut buf, "simulate", &config)?;
        empirical::write_panel(&panel, &mut buf)?;
        std::fs::write(&out, buf).with_context(|| format!("writing {}", out.display()))?;
        return Ok(out);
    }
    let spec = scenario.resolve()?;
    a.scenario = Some(ScenarioArg::Inline(spec.clone()));
    let n = required(a.n, "n")?;
    let seed = *a.seed.get_or_insert(0);
    let rep = *a.rep.get_or_insert(0);
    let data = simulate(&spec, n, seed, rep)?;
    let d = spec.d();
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|j| format!("x{j}")));
    header.push("y".into());
    let rows: Vec<Vec<String>> = (0..n)
        .map(|t| {
            let mut row = vec![(t + 1).to_string()];
            row.extend((0..d).map(|j| num(data.x[(t, j)])));
            row.push(num(data.y[t]));
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&out, "simulate", &echo(&a)?, &header, &rows)?;
    Ok(out)
}

fn preamble(buf: &mut Vec<u8>, command: &str, config: &Value) -> Result<()> {
    use std::io::Write;
    writeln!(buf, "# {} {} {command}", crate::output::TOOL, crate::output::VERSION)?;
    writeln!(buf, "# config {}", serde_json::to_string(config)?)?;
    Ok(())
}

#[derive(Serialize)]
struct EstimateOutput {
    #[serde(flatten)]
    fit: FitResult,
    regressors: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gcv: Option<GcvTable>,
}

pub fn estimate_cmd(ctx: &Session, flags: &EstimateArgs) -> Result<PathBuf> {
    let mut a = merge(flags, ctx.config.as_deref())?;
    let model = required(a.model, "model")?;
    let path = required(a.data.clone(), "data")?;
    let out = required(a.out.clone(), "out")?;
    let k = parse_k(&required(a.k.clone(), "k")?, "k")?;
    let trend = trend_for(model, &mut a.trend)?;
    let opts = fit_options(&a.fit, FitOptions::default())?;
    fill_fit(&mut a.fit, &opts);
    let data = read_dataset(&path)?;
    ctx.progress(format!("fitting {model} with n = {}, d = {}", data.y.len(), data.x.ncols()));
    let (f, gcv) = fit_with_choice(&data, model, k, trend.as_ref(), &opts)?;
    ctx.progress(format!("k = {}, objective = {}", f.k, f.objective));
    let result = EstimateOutput {
        fit: f,
        regressors: data.names,
        gcv,
    };
    write_json(&out, "estimate", &echo(&a)?, result)?;
    Ok(out)
}

pub fn gcv_cmd(ctx: &Session, flags: &GcvArgs) -> Result<PathBuf> {
    let mut a = merge(flags, ctx.config.as_deref())?;
    let model = required(a.model, "model")?;
    let path = required(a.data.clone(), "data")?;
    let out = required(a.out.clone(), "out")?;
    let trend = trend_for(model, &mut a.trend)?;
    let opts = fit_options(&a.fit, FitOptions::default())?;
    fill_fit(&mut a.fit, &opts);
    let data = read_dataset(&path)?;
    let candidates = a.candidates.get_or_insert_with(|| gcv_candidates(data.y.len())).clone();
    let table = gcv_select(&data.y, &data.x, model, trend.as_ref(), &candidates, &opts)?;
    ctx.progress(format!("GCV chose k = {}", table.chosen));
    let config = echo(&a)?;
    let rows: Vec<Vec<String>> = table
        .candidates
        .iter()
        .zip(&table.scores)
        .map(|(k, s)| vec![k.to_string(), num(*s)])
        .collect();
    if is_csv(&out) {
        write_csv(&out, "gcv", &config, &["k", "score"], &rows)?;
    } else {
        write_csv(&sibling(&out, "csv"), "gcv", &config, &["k", "score"], &rows)?;
        write_json(&out, "gcv", &config, &table)?;
    }
    Ok(out)
}

pub fn bands_cmd(ctx: &Session, flags: &BandsArgs) -> Result<PathBuf> {
    let mut a = merge(flags, ctx.config.as_deref())?;
    let model = required(a.model, "model")?;
    let path = required(a.data.clone(), "data")?;
    let out = required(a.out.clone(), "out")?;
    let k = parse_k(&required(a.k.clone(), "k")?, "k")?;
    let trend = trend_for(model, &mut a.trend)?;
    let level = *a.level.get_or_insert(0.8);
    let grid = a
        .grid
        .get_or_insert_with(|| EmpiricalConfig::default().band_grid)
        .clone();
    let opts = fit_options(&a.fit, FitOptions::default())?;
    fill_fit(&mut a.fit, &opts);
    let data = read_dataset(&path)?;
    let (f, _) = fit_with_choice(&data, model, k, trend.as_ref(), &opts)?;
    let band = g_band(&data.y, &data.x, &f, &grid, level)?;
    let (lo, hi) = (band.lower(), band.upper());
    let rows: Vec<Vec<String>> = (0..grid.len())
        .map(|i| vec![num(band.grid[i]), num(band.center[i]), num(lo[i]), num(hi[i])])
        .collect();
    write_csv(&out, "bands", &echo(&a)?, &["u", "center", "lo", "hi"], &rows)?;
    Ok(out)
}

fn mc_table(report: &McReport) -> (Vec<String>, Vec<Vec<String>>) {
    let mut blocks: Vec<&montecarlo::EstimandStats> = report.estimands.iter().collect();
    if let Some(rot) = &report.rotated {
        blocks.push(&rot.alpha);
        blocks.push(&rot.alpha_unit);
    }
    let width = blocks.iter().map(|b| b.truth.len()).max().unwrap_or(0);
    let mut header = vec!["estimand".to_string(), "statistic".to_string()];
    header.extend((1..=width).map(|j| format!("c{j}")));
    let mut rows = Vec::new();
    for b in blocks {
        for (stat, values) in [("truth", &b.truth), ("bias", &b.bias), ("sd", &b.sd)] {
            let mut row = vec![b.name.clone(), stat.to_string()];
            row.extend((0..width).map(|j| values.get(j).map(|v| num(*v)).unwrap_or_default()));
            rows.push(row);
        }
    }
    (header, rows)
}

pub fn montecarlo_cmd(ctx: &Session, flags: &MonteCarloArgs) -> Result<PathBuf> {
    let mut a = merge(flags, ctx.config.as_deref())?;
    let out = required(a.out.clone(), "out")?;
    let spec = a.scenario.get_or_insert(ScenarioArg::Name("si-part-one".into())).resolve()?;
    a.scenario = Some(ScenarioArg::Inline(spec.clone()));
    let n = required(a.n, "n")?;
    let reps = *a.reps.get_or_insert(200);
    let seed = *a.seed.get_or_insert(0);
    let jobs = a.jobs.unwrap_or(ctx.default_jobs);
    let mut cfg = McConfig::new(spec, n, reps, seed);
    cfg.k = a.k;
    a.k = Some(cfg.truncation());
    cfg.start = *a.start.get_or_insert(StartPolicy::Truth);
    cfg.fit = fit_options(&a.fit, default_fit())?;
    fill_fit(&mut a.fit, &cfg.fit);
    cfg.band_points = a.band_points.get_or_insert_with(Vec::new).clone();
    cfg.band_level = *a.band_level.get_or_insert(0.8);
    ctx.progress(format!("running {reps} replications at n = {n} on {jobs} jobs"));
    let report = montecarlo::run_mc(&cfg, jobs)?;
    if report.failed > 0 {
        ctx.note(format!("{} of {reps} replications failed and were excluded", report.failed));
    }
    let config = echo(&a)?;
    if is_csv(&out) {
        let (header, rows) = mc_table(&report);
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_csv(&out, "montecarlo", &config, &header, &rows)?;
    } else {
        write_json(&out, "montecarlo", &config, &report)?;
    }
    Ok(out)
}

fn rates_rows(table: &RateTable) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["estimand".to_string()];
    header.extend(table.ns.iter().map(|n| format!("n{n}")));
    header.push("slope".into());
    let rows = table
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![r.estimand.clone()];
            row.extend(r.medians.iter().map(|v| num(*v)));
            row.push(num(r.slope));
            row
        })
        .collect();
    (header, rows)
}

pub fn rates_cmd(ctx: &Session, flags: &RatesArgs) -> Result<PathBuf> {
    let mut a = merge(flags, ctx.config.as_deref())?;
    let out = required(a.out.clone(), "out")?;
    let spec = a.scenario.get_or_insert(ScenarioArg::Name("si-part-one".into())).resolve()?;
    a.scenario = Some(ScenarioArg::Inline(spec.clone()));
    let ns = a.ns.get_or_insert_with(|| vec![200, 400, 800, 1600]).clone();
    let reps = *a.reps.get_or_insert(200);
    let seed = *a.seed.get_or_insert(0);
    let start = *a.start.get_or_insert(StartPolicy::Truth);
    let bootstrap = *a.bootstrap.get_or_insert(1000);
    let jobs = a.jobs.unwrap_or(ctx.default_jobs);
    let opts = fit_options(&a.fit, default_fit())?;
    fill_fit(&mut a.fit, &opts);
    ctx.progress(format!("rate study over n = {ns:?} with {reps} replications each"));
    let table = montecarlo::rate_study(&spec, &ns, reps, seed, start, &opts, bootstrap, jobs)?;
    let config = echo(&a)?;
    if is_csv(&out) {
        let (header, rows) = rates_rows(&table);
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_csv(&out, "rates", &config, &header, &rows)?;
    } else {
        write_json(&out, "rates", &config, &table)?;
    }
    Ok(out)
}

pub fn empirical_cmd(ctx: &Session, flags: &EmpiricalArgs) -> Result<PathBuf> {
    let mut a = merge(flags, ctx.config.as_deref())?;
    let path = required(a.data.clone(), "data")?;
    let out = required(a.out.clone(), "out")?;
    let both = a.k.get_or_insert_with(|| "gcv".into()).clone();
    let k_plsi = parse_k(a.k_plsi.get_or_insert_with(|| both.clone()), "k-plsi")?;
    let k_si = parse_k(a.k_si.get_or_insert_with(|| both.clone()), "k-si")?;
    let protocol: Protocol = match &a.protocol {
        None => Protocol::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("--protocol {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("--protocol {}: {e}", p.display())))?
        }
    };
    let defaults = EmpiricalConfig::default();
    let cfg = EmpiricalConfig {
        k_plsi,
        k_si,
        protocol,
        sweep: a.sweep.get_or_insert_with(Vec::new).clone(),
        band_level: *a.band_level.get_or_insert(defaults.band_level),
        fit: fit_options(&a.fit, FitOptions::default())?,
        ..defaults
    };
    fill_fit(&mut a.fit, &cfg.fit);
    let jobs = a.jobs.unwrap_or(ctx.default_jobs);
    let panel = empirical::ingest(&path).with_context(|| format!("reading {}", path.display()))?;
    ctx.note("note: the regressors are assumed to be I(1) after detrending; unit-root testing is not performed");
    let report = empirical::run(&panel, &cfg, jobs)?;

    let mut config = echo(&a)?;
    if let Value::Object(map) = &mut config {
        map.insert("protocol".into(), serde_json::to_value(protocol)?);
    }
    let table_rows: Vec<Vec<String>> = report
        .mse
        .iter()
        .map(|r| {
            vec![
                competitor_name(r.model).to_string(),
                r.k.map(|k| k.to_string()).unwrap_or_default(),
                num(r.mse_in),
                num(r.mse_out),
            ]
        })
        .collect();
    write_csv(&sibling(&out, "table.csv"), "empirical", &config, &["model", "k", "mse_in", "mse_out"], &table_rows)?;
    let band = &report.band;
    let (lo, hi) = (band.lower(), band.upper());
    let band_rows: Vec<Vec<String>> = (0..band.grid.len())
        .map(|i| vec![num(band.grid[i]), num(band.center[i]), num(lo[i]), num(hi[i])])
        .collect();
    write_csv(&sibling(&out, "band.csv"), "empirical", &config, &["u", "center", "lo", "hi"], &band_rows)?;
    write_json(&out, "empirical", &config, &report)?;
    Ok(out)
}

fn competitor_name(c: Competitor) -> &'static str {
    match c {
        Competitor::Plsi => "plsi",
        Competitor::Si => "si",
        Competitor::Linear => "linear",
    }
}
