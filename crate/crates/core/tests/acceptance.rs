//! Acceptance criteria 1–10. Runs as a plain binary so that every verdict is
//! printed; exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use sindex::empirical::{self, Competitor, EmpiricalConfig, FixtureSpec, KChoice, Protocol};
use sindex::hermite::{basis_vector, hermite_function, hermite_function_deriv, QuadratureRule};
use sindex::montecarlo::{rate_study, run_mc, McConfig, McReport, StartPolicy};
use sindex::rng::{Purpose, Stream};
use sindex::selection::{default_candidates, gcv_select};
use sindex::series_fit::{design, inner_ols, InnerOptions};
use sindex::{simulate, FitOptions, LinkForm, ModelKind, ScenarioSpec};

const SEED: u64 = 20240601;

fn jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

fn within_rel(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

fn closed_form_hermite(i: usize, x: f64) -> f64 {
    let h = match i {
        0 => 1.0,
        1 => 2.0 * x,
        2 => 4.0 * x.powi(2) - 2.0,
        3 => 8.0 * x.powi(3) - 12.0 * x,
        4 => 16.0 * x.powi(4) - 48.0 * x.powi(2) + 12.0,
        5 => 32.0 * x.powi(5) - 160.0 * x.powi(3) + 120.0 * x,
        6 => 64.0 * x.powi(6) - 480.0 * x.powi(4) + 720.0 * x.powi(2) - 120.0,
        _ => unreachable!(),
    };
    let factorial: f64 = (1..=i).map(|j| j as f64).product();
    let norm = (std::f64::consts::PI.sqrt() * 2f64.powi(i as i32) * factorial).sqrt();
    h * (-x * x / 2.0).exp() / norm
}

fn basis() -> Verdict {
    let rule = QuadratureRule {
        half_width: 30.0,
        panels: 60,
        nodes_per_panel: 400,
    };
    let (nodes, weights) = rule.nodes_weights();
    let mut gram = DMatrix::<f64>::zeros(13, 13);
    for (u, w) in nodes.iter().zip(&weights) {
        let b = basis_vector(13, *u, false).unwrap().values;
        for i in 0..13 {
            for j in 0..13 {
                gram[(i, j)] += w * b[i] * b[j];
            }
        }
    }
    let ortho = (gram - DMatrix::<f64>::identity(13, 13)).amax();

    let mut stream = Stream::new(SEED, 1, Purpose::Auxiliary);
    let mut recur = 0.0f64;
    for _ in 0..100 {
        let x = -5.0 + 10.0 * stream.uniform();
        for i in 0..=6 {
            recur = recur.max((hermite_function(i, x).unwrap() - closed_form_hermite(i, x)).abs());
        }
    }

    let h = 1e-5;
    let mut deriv = 0.0f64;
    for step in 0..=120 {
        let x = -6.0 + 0.1 * step as f64;
        for i in 0..=20 {
            let fd = (hermite_function(i, x + h).unwrap() - hermite_function(i, x - h).unwrap()) / (2.0 * h);
            deriv = deriv.max((hermite_function_deriv(i, x).unwrap() - fd).abs());
        }
    }
    verdict(
        ortho < 1e-8 && recur < 1e-10 && deriv < 1e-6,
        format!("orthonormality {ortho:.2e}, recurrence {recur:.2e}, derivative {deriv:.2e}"),
    )
}

/// Normal-equation oracle for the joint `[X Z]` least squares.
fn normal_equations(a: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let yv = nalgebra::DVector::from_column_slice(y);
    let ata = a.transpose() * a;
    let aty = a.transpose() * yv;
    ata.lu().solve(&aty).expect("oracle system is nonsingular").as_slice().to_vec()
}

fn inner_solver() -> Verdict {
    let mut stream = Stream::new(SEED, 2, Purpose::Auxiliary);
    let opts = InnerOptions::default();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for case in 0..500 {
        let d = 1 + stream.below(3);
        let k = 1 + stream.below(6);
        let n = (k + d + 5 + stream.below(50)).min(50);
        let x = DMatrix::from_fn(n, d, |_, _| 2.0 * stream.standard_normal());
        let mut theta: Vec<f64> = (0..d).map(|_| stream.standard_normal()).collect();
        let norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        theta.iter_mut().for_each(|t| *t /= norm);
        let y: Vec<f64> = (0..n).map(|_| stream.standard_normal()).collect();
        let z = design(&x, &theta, k).unwrap();
        let with_linear = case % 2 == 0;
        let solved = inner_ols(&y, &z, with_linear.then_some(&x), &opts).unwrap();
        if solved.ridged {
            continue;
        }
        let (a, ours) = if with_linear {
            let mut a = DMatrix::zeros(n, d + k);
            a.columns_mut(0, d).copy_from(&x);
            a.columns_mut(d, k).copy_from(&z.z);
            let mut ours = solved.linear.clone().unwrap();
            ours.extend(&solved.coeffs);
            (a, ours)
        } else {
            (z.z.clone(), solved.coeffs.clone())
        };
        let oracle = normal_equations(&a, &y);
        let diff = ours.iter().zip(&oracle).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let scale = oracle.iter().map(|q| q * q).sum::<f64>().sqrt().max(1e-300);
        worst = worst.max(diff / scale);
        checked += 1;
    }
    verdict(
        worst < 1e-8 && checked >= 450,
        format!("{checked} instances, worst relative difference {worst:.2e}"),
    )
}

fn estimand<'a>(report: &'a McReport, name: &str) -> &'a sindex::montecarlo::EstimandStats {
    report.estimand(name).unwrap_or_else(|| panic!("report has no {name}"))
}

fn index_bias_and_spread() -> Verdict {
    let mut cfg = McConfig::new(ScenarioSpec::si_part_one(), 400, 200, SEED);
    cfg.k = Some(7);
    let report = run_mc(&cfg, jobs()).unwrap();
    let e = estimand(&report, "theta_emp");
    let (bias, sd) = (&e.bias, &e.sd);
    let pass = within(bias[0], 0.0043, 0.02)
        && within(bias[1], 0.0063, 0.02)
        && within_rel(sd[0], 0.1005, 0.35)
        && within_rel(sd[1], 0.0717, 0.35);
    verdict(
        pass,
        format!(
            "theta_emp bias ({:.4}, {:.4}) sd ({:.4}, {:.4}); {} failed, {} nonconverged",
            bias[0], bias[1], sd[0], sd[1], report.failed, report.nonconverged
        ),
    )
}

fn rotated_structure() -> Verdict {
    let cfg = McConfig::new(ScenarioSpec::si_part_two(), 1000, 200, SEED);
    let report = run_mc(&cfg, jobs()).unwrap();
    let rot = report.rotated.as_ref().expect("rotated statistics for theta0 = e1");
    let all_below = rot.alpha_unit_first.iter().all(|a| *a - 1.0 < 0.0);
    let pass = rot.alpha.sd[1] < rot.alpha.sd[0] && rot.alpha_unit.sd[0] < rot.alpha_unit.sd[1] && all_below;
    verdict(
        pass,
        format!(
            "sd(alpha) ({:.4}, {:.4}), sd(alpha_unit) ({:.4}, {:.4}), alpha_unit1 < 1 in every replication: {all_below}",
            rot.alpha.sd[0], rot.alpha.sd[1], rot.alpha_unit.sd[0], rot.alpha_unit.sd[1]
        ),
    )
}

fn linear_part_bias_and_spread() -> Verdict {
    let cfg = McConfig::new(ScenarioSpec::plsi_example(), 600, 200, SEED);
    let report = run_mc(&cfg, jobs()).unwrap();
    let e = estimand(&report, "beta_hat");
    let (bias, sd) = (&e.bias, &e.sd);
    let pass = within(bias[0], -0.0002, 0.005)
        && within(bias[1], 0.0001, 0.005)
        && within_rel(sd[0], 0.0068, 0.5)
        && within_rel(sd[1], 0.0067, 0.5);
    verdict(
        pass,
        format!("beta bias ({:.5}, {:.5}) sd ({:.5}, {:.5})", bias[0], bias[1], sd[0], sd[1]),
    )
}

fn rates() -> Verdict {
    let ns = [200, 400, 800, 1600];
    let fit = sindex::montecarlo::default_fit();
    let si = rate_study(&ScenarioSpec::si_part_one(), &ns, 200, SEED, StartPolicy::Truth, &fit, 1000, jobs()).unwrap();
    let plsi = rate_study(&ScenarioSpec::plsi_example(), &ns, 200, SEED, StartPolicy::Truth, &fit, 1000, jobs()).unwrap();
    let emp = si.slope("theta_emp").unwrap();
    let raw = si.slope("theta_hat").unwrap();
    let beta = plsi.slope("beta_hat").unwrap();
    let pass = (-1.05..=-0.45).contains(&emp)
        && (-1.3..=-0.7).contains(&beta)
        && raw > emp
        && si.shallower_fraction >= 0.9;
    verdict(
        pass,
        format!(
            "theta_emp {emp:.3}, theta_hat {raw:.3} (shallower in {:.1}% of resamples), beta_hat {beta:.3}",
            100.0 * si.shallower_fraction
        ),
    )
}

fn coverage() -> Verdict {
    let mut cfg = McConfig::new(ScenarioSpec::si_part_one(), 1000, 200, SEED);
    cfg.band_points = vec![0.0];
    cfg.band_level = 0.8;
    let report = run_mc(&cfg, jobs()).unwrap();
    let c = &report.coverage[0];
    verdict(
        (0.70..=0.90).contains(&c.frequency),
        format!("coverage of g(0) = {} at nominal {}: {:.3}", c.truth, c.level, c.frequency),
    )
}

fn gcv() -> Verdict {
    let spec = ScenarioSpec {
        g0: LinkForm::Hermite {
            coeffs: vec![1.0, 0.7],
        },
        noise_sd: 0.0,
        ..ScenarioSpec::si_part_one()
    };
    let n = 200;
    let opts = FitOptions::default();
    let mut hits = 0;
    let mut identity = 0.0f64;
    for rep in 0..100 {
        let data = simulate(&spec, n, SEED, rep).unwrap();
        let table = gcv_select(&data.y, &data.x, ModelKind::Si, None, &default_candidates(), &opts).unwrap();
        if table.chosen == 2 {
            hits += 1;
        }
        for ((k, s2), score) in table.candidates.iter().zip(&table.sigma2).zip(&table.scores) {
            let again = s2 / (1.0 - *k as f64 / n as f64).powi(2);
            identity = identity.max((again - score).abs() / score.abs().max(f64::MIN_POSITIVE));
        }
    }
    verdict(
        hits >= 90 && identity <= 1e-12,
        format!("k = 2 chosen in {hits} of 100 runs; score identity error {identity:.1e}"),
    )
}

fn macro_reference(cfg: &EmpiricalConfig) -> Option<Result<String, String>> {
    let path = std::env::var_os("SINDEX_MACRO_CSV")?;
    let panel = match empirical::ingest(&path) {
        Ok(p) => p,
        Err(e) => return Some(Err(format!("cannot read supplied data: {e}"))),
    };
    let fixed = EmpiricalConfig {
        k_plsi: KChoice::Fixed(5),
        k_si: KChoice::Fixed(5),
        ..cfg.clone()
    };
    let report = match empirical::run(&panel, &fixed, jobs()) {
        Ok(r) => r,
        Err(e) => return Some(Err(format!("run failed: {e}"))),
    };
    let expected = [
        (Competitor::Plsi, 0.0946, 0.1232),
        (Competitor::Si, 0.1544, 0.2607),
        (Competitor::Linear, 0.1666, 0.2598),
    ];
    let mut lines = Vec::new();
    let mut ok = true;
    for (model, mse_in, mse_out) in expected {
        let row = report.mse.iter().find(|r| r.model == model).expect("row per model");
        ok &= within_rel(row.mse_in, mse_in, 0.2) && within_rel(row.mse_out, mse_out, 0.3);
        lines.push(format!("{model:?} {:.4}/{:.4}", row.mse_in, row.mse_out));
    }
    let text = format!("supplied data: {}", lines.join(", "));
    Some(if ok { Ok(text) } else { Err(text) })
}

fn empirical_pipeline() -> Verdict {
    let panel = empirical::synthetic_panel(&FixtureSpec::default()).unwrap();
    let cfg = EmpiricalConfig::default();
    let first = empirical::run(&panel, &cfg, 1).unwrap();
    let second = empirical::run(&panel, &cfg, 4).unwrap();
    let a = serde_json::to_string(&first).unwrap();
    let b = serde_json::to_string(&second).unwrap();
    let identical = a == b;
    let expected: Vec<usize> = (181..=199).step_by(2).collect();
    let audit = Protocol::default().forecast_times() == expected
        && first.out_of_sample.iter().all(|(_, o)| o.forecast_t == expected && o.predicted.len() == 10);
    let mut detail = format!("identical across runs and job counts: {identical}; forecasts at 181..199 step 2: {audit}");
    let mut pass = identical && audit;
    match macro_reference(&cfg) {
        None => detail.push_str("; macro reference check SKIPPED (set SINDEX_MACRO_CSV to the reference data vintage)"),
        Some(Ok(text)) => detail.push_str(&format!("; {text}")),
        Some(Err(text)) => {
            pass = false;
            detail.push_str(&format!("; {text}"));
        }
    }
    verdict(pass, detail)
}

fn parallel_determinism() -> Verdict {
    let cfg = McConfig::new(ScenarioSpec::si_part_one(), 300, 200, SEED);
    let reports: Vec<String> = [1, 4, 16]
        .iter()
        .map(|&j| serde_json::to_string(&run_mc(&cfg, j).unwrap()).unwrap())
        .collect();
    let same = reports.windows(2).all(|w| w[0] == w[1]);
    verdict(same, format!("reports at jobs 1, 4, 16 identical: {same}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("basis correctness", basis),
        ("inner-solver oracle equivalence", inner_solver),
        ("single-index bias and spread", index_bias_and_spread),
        ("rotated-coordinate structure", rotated_structure),
        ("partially linear bias and spread", linear_part_bias_and_spread),
        ("rate slopes", rates),
        ("band coverage", coverage),
        ("GCV selection", gcv),
        ("empirical pipeline determinism", empirical_pipeline),
        ("parallel determinism", parallel_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|f| f == &id || name.contains(f.as_str())) {
            continue;
        }
        let started = Instant::now();
        let v = run();
        let secs = started.elapsed().as_secs_f64();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {id} ({name}): {} [{secs:.1}s]", v.detail);
        if !v.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
