//! Derivative-free Nelder–Mead minimization.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NelderMeadOptions {
    /// Initial edge length as a fraction of the start's magnitude.
    pub simplex_scale: f64,
    /// Stop once `f_max − f_min < ftol · (1 + |f_min|)` across the simplex.
    pub ftol: f64,
    pub max_iter: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            simplex_scale: 0.25,
            ftol: 1e-10,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Initial step along axis `i`: `scale · max(|x0_i|, ½‖x0‖∞)`, or `scale` at the origin.
fn initial_steps(x0: &[f64], scale: f64) -> Vec<f64> {
    let inf = x0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    x0.iter()
        .map(|v| if inf > 0.0 { scale * v.abs().max(0.5 * inf) } else { scale })
        .collect()
}

pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = x0.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let steps = initial_steps(x0, opts.simplex_scale);
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    for (i, h) in steps.iter().enumerate() {
        let mut v = x0.to_vec();
        v[i] += h;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

    let mut iterations = 0;
    let mut converged = false;
    let mut centroid = vec![0.0; dim];
    let mut trial = vec![0.0; dim];
    let mut trial2 = vec![0.0; dim];
    loop {
        // Stable sort keeps the lower-index vertex first on ties.
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let (best, worst) = (values[0], values[dim]);
        if worst - best < opts.ftol * (1.0 + best.abs()) || simplex_collapsed(&simplex) {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for v in &simplex[..dim] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / dim as f64;
            }
        }
        let towards = |out: &mut Vec<f64>, coef: f64, from: &[f64], centroid: &[f64]| {
            for ((o, c), w) in out.iter_mut().zip(centroid).zip(from) {
                *o = c + coef * (c - w);
            }
        };

        towards(&mut trial, REFLECT, &simplex[dim], &centroid);
        let fr = eval(&trial);
        if fr < values[0] {
            towards(&mut trial2, EXPAND, &simplex[dim], &centroid);
            let fe = eval(&trial2);
            if fe < fr {
                simplex[dim].clone_from(&trial2);
                values[dim] = fe;
            } else {
                simplex[dim].clone_from(&trial);
                values[dim] = fr;
            }
            continue;
        }
        if fr < values[dim - 1] {
            simplex[dim].clone_from(&trial);
            values[dim] = fr;
            continue;
        }
        // Contraction, outside if the reflection improved on the worst point.
        let (coef, reference) = if fr < values[dim] {
            (CONTRACT * REFLECT, fr)
        } else {
            (-CONTRACT, values[dim])
        };
        towards(&mut trial2, coef, &simplex[dim], &centroid);
        let fc = eval(&trial2);
        if fc < reference {
            simplex[dim].clone_from(&trial2);
            values[dim] = fc;
            continue;
        }
        let best_vertex = simplex[0].clone();
        for i in 1..=dim {
            for (x, b) in simplex[i].iter_mut().zip(&best_vertex) {
                *x = b + SHRINK * (*x - b);
            }
            values[i] = eval(&simplex[i]);
        }
    }

    NelderMeadResult {
        x: simplex[0].clone(),
        f: values[0],
        iterations,
        evaluations,
        converged,
    }
}

fn simplex_collapsed(simplex: &[Vec<f64>]) -> bool {
    let base = &simplex[0];
    let scale = 1.0 + base.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    simplex[1..].iter().all(|v| {
        v.iter()
            .zip(base)
            .all(|(a, b)| (a - b).abs() <= 1e-14 * scale)
    })
}
