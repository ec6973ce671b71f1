//! Nelder–Mead simplex minimization with dimension-adaptive coefficients.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Stop when the largest vertex distance from the best vertex falls
    /// below this value.
    pub x_tol: f64,
    /// Stop when the spread of function values falls below
    /// `f_tol * max(1, |f_best|)`; zero disables the check.
    pub f_tol: f64,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_iter: 2000,
            x_tol: 1e-8,
            f_tol: 0.0,
            initial_step: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0`. Non-finite function values are treated as `+∞`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64]| {
        evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    if n == 0 {
        let v = eval(x0);
        return NelderMeadResult {
            x: Vec::new(),
            f: v,
            iterations: 0,
            evaluations: 1,
            converged: true,
        };
    }
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.initial_step;
        simplex.push(v);
    }
    let mut fv: Vec<f64> = simplex.iter().map(|x| eval(x)).collect();

    let mut iterations = 0;
    let mut converged = false;
    let mut order: Vec<usize> = (0..=n).collect();
    while iterations < opts.max_iter {
        order.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]));
        let best = order[0];
        let worst = order[n];
        let second = order[n - 1];

        let diameter = simplex
            .iter()
            .map(|v| v.iter().zip(&simplex[best]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let spread = fv[worst] - fv[best];
        if diameter < opts.x_tol || (opts.f_tol > 0.0 && spread.is_finite() && spread <= opts.f_tol * fv[best].abs().max(1.0)) {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for &i in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&simplex[i]) {
                *c += v / nf;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(alpha);
        let fr = eval(&xr);
        if fr < fv[best] {
            let xe = along(beta);
            let fe = eval(&xe);
            if fe < fr {
                simplex[worst] = xe;
                fv[worst] = fe;
            } else {
                simplex[worst] = xr;
                fv[worst] = fr;
            }
            continue;
        }
        if fr < fv[second] {
            simplex[worst] = xr;
            fv[worst] = fr;
            continue;
        }
        let (xc, fc) = if fr < fv[worst] {
            let xc = along(gamma);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(-gamma);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < fr.min(fv[worst]) {
            simplex[worst] = xc;
            fv[worst] = fc;
            continue;
        }
        // shrink towards the best vertex
        let xb = simplex[best].clone();
        for &i in &order[1..] {
            for (v, b) in simplex[i].iter_mut().zip(&xb) {
                *v = b + delta * (*v - b);
            }
            fv[i] = eval(&simplex[i]);
        }
    }
    let best = (0..=n).min_by(|&a, &b| fv[a].total_cmp(&fv[b])).unwrap();
    NelderMeadResult {
        x: simplex[best].clone(),
        f: fv[best],
        iterations,
        evaluations: evals,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic() {
        let r = nelder_mead(
            |x| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2) + (x[2] - 0.5).powi(2),
            &[0.0, 0.0, 0.0],
            &NelderMeadOptions::default(),
        );
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] + 2.0).abs() < 1e-6 && (r.x[2] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn minimizes_rosenbrock() {
        let opts = NelderMeadOptions {
            max_iter: 5000,
            ..Default::default()
        };
        let r = nelder_mead(|x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2), &[-1.2, 1.0], &opts);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?}", r);
    }

    #[test]
    fn handles_infinite_regions() {
        let r = nelder_mead(
            |x| if x[0] < 0.0 { f64::NAN } else { (x[0] - 0.3).powi(2) },
            &[1.0],
            &NelderMeadOptions::default(),
        );
        assert!((r.x[0] - 0.3).abs() < 1e-6);
    }

    #[test]
    fn respects_iteration_cap() {
        let opts = NelderMeadOptions {
            max_iter: 5,
            ..Default::default()
        };
        let r = nelder_mead(|x| x.iter().map(|v| v * v).sum(), &[3.0, 3.0, 3.0], &opts);
        assert_eq!(r.iterations, 5);
        assert!(!r.converged);
    }
}
