//! Iteratively reweighted l1 recovery.
//!
//! Outer loop: refresh the per-coefficient weights `w_i = 1 / (|h_i| + eps)`
//! from the previous iterate. Inner loop: solve the weighted LASSO
//! `min ||y - X h||_2^2 + lambda * sum_i w_i |h_i|` with an accelerated
//! proximal-gradient scheme (backtracking step size, momentum restart).
//! The penalty defaults to `4 sigma sqrt(M + L - k)` when not supplied.

use std::time::Instant;

use num_complex::Complex64;

use crate::error::Result;
use crate::linalg::{norm2_sqr, CMat};
use crate::measurement::MeasurementSystem;

use super::{EstimateReport, Method, SolverFlag, SolverParams};

pub fn reweighted_l1(system: &MeasurementSystem, params: &SolverParams) -> Result<EstimateReport> {
    params.validate()?;
    let x = &system.matrix;
    let y = &system.received;
    let n = x.cols();
    let start = Instant::now();

    let lambda = params.lambda.unwrap_or_else(|| {
        let sigma = params.noise_variance.sqrt();
        4.0 * sigma * ((n - params.sparsity.min(n)) as f64).sqrt()
    });

    let mut weights = vec![1.0f64; n];
    let mut estimate = vec![Complex64::new(0.0, 0.0); n];
    let mut epsilon: Option<f64> = None;
    let mut total_inner = 0usize;
    let mut converged = true;

    for outer in 0..params.reweight_iters {
        let (raw, inner_iters, inner_converged) =
            weighted_lasso(x, y, &weights, lambda, &estimate, params);
        total_inner += inner_iters;
        converged = inner_converged;

        if outer == 0 {
            // damping floor fixed relative to the first iterate's peak
            let peak = raw.iter().map(|v| v.norm()).fold(0.0, f64::max);
            epsilon = Some(if peak > 0.0 {
                params.epsilon_rel * peak
            } else {
                params.epsilon_rel
            });
        }
        let eps = epsilon.unwrap();

        // the iterate the weights are computed from is the debiased one:
        // shrinkage biases every surviving amplitude by its own threshold,
        // and weights taken from biased amplitudes over-penalize exactly the
        // taps that were shrunk the most
        let next = debias(x, y, &raw, eps);
        let change = max_abs_diff(&next, &estimate);
        let scale = next.iter().map(|v| v.norm()).fold(0.0, f64::max);
        estimate = next;

        for (w, h) in weights.iter_mut().zip(&estimate) {
            *w = 1.0 / (h.norm() + eps);
        }
        // calibrate the weight scale: the largest weight among the clearly
        // significant taps (a tenth of the peak) is pinned to one, so no
        // real tap sees a threshold above its own size; junk coordinates
        // keep their ~1/eps relative weight either way
        let peak = estimate.iter().map(|h| h.norm()).fold(0.0, f64::max);
        let w_sig_max = estimate
            .iter()
            .zip(weights.iter())
            .filter(|(h, _)| h.norm() > 0.1 * peak)
            .map(|(_, w)| *w)
            .fold(0.0, f64::max);
        if w_sig_max > 0.0 {
            for w in weights.iter_mut() {
                *w /= w_sig_max;
            }
        }

        if outer > 0 && change <= params.tol * scale.max(1e-12) {
            break;
        }
    }

    let mut report = EstimateReport::new(estimate, Method::ReweightedL1);
    report.iterations = total_inner;
    if !converged {
        report.flags.push(SolverFlag::MaxIterations);
    }
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Least-squares refit on the significant support of `raw` (entries above
/// `floor`, capped at the number of equations). Coordinates outside the
/// support are returned as exact zeros.
fn debias(x: &CMat, y: &[Complex64], raw: &[Complex64], floor: f64) -> Vec<Complex64> {
    let n = x.cols();
    let mut support: Vec<usize> = raw
        .iter()
        .enumerate()
        .filter(|(_, v)| v.norm() > floor)
        .map(|(i, _)| i)
        .collect();
    if support.is_empty() || support.len() >= n {
        return raw.to_vec();
    }
    if support.len() > x.rows() {
        support.sort_by(|&a, &b| {
            raw[b].norm_sqr().partial_cmp(&raw[a].norm_sqr()).unwrap()
        });
        support.truncate(x.rows());
        support.sort_unstable();
    }
    match crate::linalg::restricted_ls(x, &support, y) {
        Ok(coef) => {
            let mut out = vec![Complex64::new(0.0, 0.0); n];
            for (&idx, &c) in support.iter().zip(&coef) {
                out[idx] = c;
            }
            out
        }
        Err(_) => raw.to_vec(),
    }
}

/// Weighted-LASSO solve with penalty continuation: start near the smallest
/// all-zero penalty `lambda_max = max 2|x_i^H y| / w_i` and halve down to the
/// target, warm starting each stage. Small targets would otherwise converge
/// through a dense transient whose leftovers never fully re-zero.
fn weighted_lasso(
    x: &CMat,
    y: &[Complex64],
    weights: &[f64],
    lambda: f64,
    warm_start: &[Complex64],
    params: &SolverParams,
) -> (Vec<Complex64>, usize, bool) {
    let corr = x.adjoint_matvec(y);
    let lambda_max = corr
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(c, &w)| 2.0 * c.norm() / w)
        .fold(0.0, f64::max);
    let mut total = 0usize;
    let mut current = warm_start.to_vec();
    let mut stage_lambda = lambda_max * 0.5;
    let mut stages = 0;
    while stage_lambda > lambda.max(lambda_max * 1e-6) && stages < 20 {
        let (z, it, _) = proximal_stage(x, y, weights, stage_lambda, &current, 80, 1e-3);
        current = z;
        total += it;
        stage_lambda *= 0.5;
        stages += 1;
    }
    let inner_tol = (params.tol * 1e-2).max(1e-12);
    let budget = params.inner_max_iter.saturating_sub(total).max(50);
    let (z, it, converged) = proximal_stage(x, y, weights, lambda, &current, budget, inner_tol);
    (z, total + it, converged)
}

/// Accelerated proximal gradient (backtracking step, momentum restart) for
/// one penalty level.
fn proximal_stage(
    x: &CMat,
    y: &[Complex64],
    weights: &[f64],
    lambda: f64,
    warm_start: &[Complex64],
    max_iter: usize,
    rel_tol: f64,
) -> (Vec<Complex64>, usize, bool) {
    let n = x.cols();
    let mut lip = 2.0 * spectral_norm_sqr_est(x);
    if lip <= 0.0 {
        lip = 1.0;
    }

    let f = |h: &[Complex64]| -> f64 {
        let r = residual(x, h, y);
        norm2_sqr(&r)
    };

    let mut z = warm_start.to_vec();
    let mut z_prev;
    let mut v = z.clone();
    let mut theta = 1.0f64;
    let mut converged = false;
    let mut iters = 0usize;

    for _ in 0..max_iter {
        iters += 1;
        let rv = residual(x, &v, y);
        let fv = norm2_sqr(&rv);
        // grad f(v) = -2 X^H r where r = y - X v
        let mut grad = x.adjoint_matvec(&rv);
        for g in grad.iter_mut() {
            *g = -2.0 * *g;
        }

        // backtracking on the step 1/lip
        let mut z_new;
        loop {
            let t = 1.0 / lip;
            z_new = (0..n)
                .map(|i| shrink(v[i] - t * grad[i], t * lambda * weights[i]))
                .collect::<Vec<_>>();
            let fz = f(&z_new);
            let mut quad = fv;
            let mut diff_sqr = 0.0;
            for i in 0..n {
                let d = z_new[i] - v[i];
                quad += (grad[i].conj() * d).re;
                diff_sqr += d.norm_sqr();
            }
            quad += 0.5 * lip * diff_sqr;
            if fz <= quad + 1e-12 * quad.abs().max(1.0) || lip > 1e18 {
                break;
            }
            lip *= 2.0;
        }

        z_prev = std::mem::replace(&mut z, z_new);

        // momentum with restart on loss of monotone progress
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let beta = (theta - 1.0) / theta_next;
        let mut restart_dot = 0.0;
        for i in 0..n {
            restart_dot += ((v[i] - z[i]).conj() * (z[i] - z_prev[i])).re;
        }
        if restart_dot > 0.0 {
            theta = 1.0;
            v = z.clone();
        } else {
            theta = theta_next;
            for i in 0..n {
                v[i] = z[i] + beta * (z[i] - z_prev[i]);
            }
        }

        let change = max_abs_diff(&z, &z_prev);
        let scale = z.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if change <= rel_tol * scale.max(1e-12) {
            converged = true;
            break;
        }
    }
    (z, iters, converged)
}

fn residual(x: &CMat, h: &[Complex64], y: &[Complex64]) -> Vec<Complex64> {
    let mut r = x.matvec(h);
    for (ri, yi) in r.iter_mut().zip(y) {
        *ri = yi - *ri;
    }
    r
}

/// Complex soft threshold: scale the magnitude down by `tau`, preserve phase.
#[inline]
fn shrink(c: Complex64, tau: f64) -> Complex64 {
    let mag = c.norm();
    if mag <= tau {
        Complex64::new(0.0, 0.0)
    } else {
        c * ((mag - tau) / mag)
    }
}

fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Power-iteration estimate of `sigma_max^2(X)`, padded a little so the
/// Lipschitz guess errs high.
fn spectral_norm_sqr_est(x: &CMat) -> f64 {
    let n = x.cols();
    let mut v: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(1.0 + (i as f64 * 0.421).sin(), (i as f64 * 0.137).cos()))
        .collect();
    let mut lam = 0.0;
    for _ in 0..30 {
        let w = x.adjoint_matvec(&x.matvec(&v));
        let nw = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nw == 0.0 {
            return 0.0;
        }
        lam = nw;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
    }
    lam * 1.05
}
