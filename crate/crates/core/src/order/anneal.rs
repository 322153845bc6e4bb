//! Simulated annealing over on/off order indicators and scaled quantities.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math::{exp, normal_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnealSchedule {
    /// Initial temperature, relative to the magnitude of the starting value.
    pub t0: f64,
    /// Temperature multiplier applied after every step, in (0, 1).
    pub cooling: f64,
    pub steps: usize,
    /// Standard deviation of a quantity move, relative to the current value.
    pub step_size: f64,
    /// Probability that a move toggles an order indicator.
    pub flip_prob: f64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            t0: 0.05,
            cooling: 0.997,
            steps: 3000,
            step_size: 0.15,
            flip_prob: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealResult {
    pub on: Vec<bool>,
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    /// `(evaluation, best value)` whenever the best value improves.
    pub trace: Vec<(usize, f64)>,
}

/// Minimize `f(on, x)` with `0 <= x <= upper`. Coordinates that are off are
/// passed through unchanged; `f` is expected to ignore them.
pub fn anneal<F: FnMut(&[bool], &[f64]) -> f64>(
    f: &mut F,
    on0: &[bool],
    x0: &[f64],
    upper: &[f64],
    sched: AnnealSchedule,
    rng: &mut ChaCha8Rng,
) -> AnnealResult {
    let n = x0.len();
    let mut on = on0.to_vec();
    let mut x = x0.to_vec();
    let mut fx = f(&on, &x);
    let mut evals = 1;
    let scale = fx.abs().max(1e-300);
    let mut best = (on.clone(), x.clone(), fx);
    let mut trace = alloc::vec![(evals, fx)];
    let mut t = sched.t0;
    if n == 0 {
        return AnnealResult {
            on,
            x,
            f: fx,
            evals,
            trace,
        };
    }
    for _ in 0..sched.steps {
        let c = rng.random_range(0..n);
        let mut on2 = on.clone();
        let mut x2 = x.clone();
        if rng.random::<f64>() < sched.flip_prob {
            on2[c] = !on2[c];
            if on2[c] && x2[c] <= 0.0 {
                x2[c] = upper[c].min(1.0);
            }
        } else {
            let u: f64 = rng.random();
            let z = normal_quantile(u.clamp(1e-12, 1.0 - 1e-12));
            let base = x2[c].abs().max(0.05);
            x2[c] = (x2[c] + sched.step_size * base * z).clamp(0.0, upper[c]);
            on2[c] = true;
        }
        let f2 = f(&on2, &x2);
        evals += 1;
        let delta = (f2 - fx) / scale;
        let accept = delta <= 0.0 || (t > 0.0 && rng.random::<f64>() < exp(-delta / t));
        if accept {
            on = on2;
            x = x2;
            fx = f2;
            if fx < best.2 {
                best = (on.clone(), x.clone(), fx);
                trace.push((evals, fx));
            }
        }
        t *= sched.cooling;
    }
    AnnealResult {
        on: best.0,
        x: best.1,
        f: best.2,
        evals,
        trace,
    }
}
