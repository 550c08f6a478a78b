//! Orthogonal matching pursuit: grow the support one index at a time by the
//! correlation proxy `|X^H r|`, re-fitting least squares on the support after
//! every selection.

use std::time::Instant;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{axpy, norm2, restricted_ls};
use crate::measurement::MeasurementSystem;

use super::{EstimateReport, Method, SolverParams};

pub fn omp(system: &MeasurementSystem, params: &SolverParams) -> Result<EstimateReport> {
    params.validate()?;
    let x = &system.matrix;
    let y = &system.received;
    if params.sparsity > x.rows() {
        return Err(Error::InvalidParameter(format!(
            "sparsity budget {} exceeds the {} available equations",
            params.sparsity,
            x.rows()
        )));
    }
    let start = Instant::now();
    let y_norm = norm2(y);
    let mut support: Vec<usize> = Vec::with_capacity(params.sparsity);
    let mut columns: Vec<Vec<Complex64>> = Vec::with_capacity(params.sparsity);
    let mut coefficients: Vec<Complex64> = Vec::new();
    let mut residual = y.clone();

    while support.len() < params.sparsity && norm2(&residual) > params.tol * y_norm {
        let proxy = x.adjoint_matvec(&residual);
        let (best, best_mag) = proxy
            .iter()
            .enumerate()
            .fold((0usize, -1.0f64), |(bi, bm), (i, v)| {
                let m = v.norm();
                if m > bm {
                    (i, m)
                } else {
                    (bi, bm)
                }
            });
        let _ = best_mag;
        if support.contains(&best) {
            return Err(Error::NumericalStagnation {
                index: best,
                residual: norm2(&residual),
            });
        }
        support.push(best);
        columns.push(x.column(best));
        coefficients = restricted_ls(x, &support, y)?;
        residual = y.clone();
        for (col, coef) in columns.iter().zip(&coefficients) {
            axpy(&mut residual, -coef, col);
        }
    }

    let mut estimate = vec![Complex64::new(0.0, 0.0); x.cols()];
    for (&idx, &coef) in support.iter().zip(&coefficients) {
        estimate[idx] = coef;
    }
    let mut report = EstimateReport::new(estimate, Method::Omp);
    report.iterations = support.len();
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}
