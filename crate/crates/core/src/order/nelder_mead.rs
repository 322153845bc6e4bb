//! Derivative-free local search: Nelder-Mead simplex and a compass
//! (coordinate pattern) search used to polish its result. Both minimize.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmOptions {
    pub max_evals: usize,
    /// Stop when every vertex is within `xtol` of the best one (max norm).
    pub xtol: f64,
    /// Stop when the vertex values span less than `ftol * (1 + |best|)`.
    pub ftol: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        Self {
            max_evals: 600,
            xtol: 1e-9,
            ftol: 1e-13,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Standard Nelder-Mead (reflection 1, expansion 2, contraction 1/2,
/// shrink 1/2) from the simplex `x0, x0 + step_i e_i`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x0: &[f64],
    step: &[f64],
    opts: NmOptions,
) -> NmResult {
    let n = x0.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        f(x)
    };
    if n == 0 {
        let v = eval(x0, &mut evals);
        return NmResult {
            x: Vec::new(),
            f: v,
            evals,
            converged: true,
        };
    }
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    pts.push(x0.to_vec());
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += step[i];
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p, &mut evals)).collect();
    let mut converged = false;

    loop {
        // Stable sort keeps ties in insertion order, for determinism.
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = idx.iter().map(|&i| pts[i].clone()).collect();
        vals = idx.iter().map(|&i| vals[i]).collect();

        let spread = vals[n] - vals[0];
        let size = pts[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if size <= opts.xtol
            || spread.abs() <= opts.ftol * (1.0 + vals[0].abs()) && size <= 1e3 * opts.xtol
        {
            converged = true;
            break;
        }
        if evals >= opts.max_evals {
            break;
        }

        let mut centroid = vec![0.0; n];
        for p in &pts[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&pts[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < vals[0] {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[n] {
            let x = along(0.5);
            let v = eval(&x, &mut evals);
            (x, v)
        } else {
            let x = along(-0.5);
            let v = eval(&x, &mut evals);
            (x, v)
        };
        if fc < vals[n].min(fr) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        for k in 1..=n {
            let p: Vec<f64> = pts[0]
                .iter()
                .zip(&pts[k])
                .map(|(b, x)| b + 0.5 * (x - b))
                .collect();
            vals[k] = eval(&p, &mut evals);
            pts[k] = p;
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| vals[a].total_cmp(&vals[b]))
        .unwrap_or(0);
    NmResult {
        x: pts[best].clone(),
        f: vals[best],
        evals,
        converged,
    }
}

/// Compass search: try `+-step` along each axis, move on improvement,
/// halve the step when no direction improves.
pub fn compass<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x0: &[f64],
    f0: f64,
    step0: f64,
    min_step: f64,
    max_evals: usize,
) -> NmResult {
    let mut x = x0.to_vec();
    let mut fx = f0;
    let mut step = step0;
    let mut evals = 0;
    while step > min_step && evals < max_evals {
        let mut improved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] += dir * step;
                let fy = f(&y);
                evals += 1;
                if fy < fx {
                    x = y;
                    fx = fy;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    NmResult {
        x,
        f: fx,
        evals,
        converged: step <= min_step,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let mut f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead(
            &mut f,
            &[-1.2, 1.0],
            &[0.1, 0.1],
            NmOptions {
                max_evals: 5000,
                ..Default::default()
            },
        );
        assert!(r.converged);
        assert!(
            (r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4,
            "{:?}",
            r.x
        );
    }

    #[test]
    fn compass_finds_kink() {
        let mut f = |x: &[f64]| (x[0] - 0.3).abs() + 2.0 * (x[1] + 0.7).abs();
        let f0 = f(&[0.0, 0.0]);
        let r = compass(&mut f, &[0.0, 0.0], f0, 0.25, 1e-12, 10_000);
        assert!((r.x[0] - 0.3).abs() < 1e-10 && (r.x[1] + 0.7).abs() < 1e-10);
    }
}
