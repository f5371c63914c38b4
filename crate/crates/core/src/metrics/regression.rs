//! Ordinary least squares fits: the log-log path-norm growth fit and the
//! accuracy-vs-noise plane fit.

use crate::error::{Error, Result};

/// Power-law fit `log pnp = exponent * log t + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub offset: f64,
    pub r_squared: f64,
}

/// Least-squares plane `response ~ coefficients[0] + sum_k coefficients[1+k] * predictor_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    /// Intercept first, then one slope per predictor.
    pub coefficients: Vec<f64>,
    pub r_squared: f64,
    pub n_points: usize,
}

/// Solves `A x = b` for a small dense system by Gaussian elimination with
/// partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-12 {
            return Err(Error::Domain(
                "degenerate regression design (singular normal equations)".into(),
            ));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    Ok(x)
}

/// R-squared about the mean; reported as 0 when the responses are
/// constant, and clamped into `[0,1]` against rounding.
fn r_squared(responses: &[f64], fitted: impl Fn(usize) -> f64) -> f64 {
    let n = responses.len() as f64;
    let mean = responses.iter().sum::<f64>() / n;
    let ss_tot: f64 = responses.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return 0.0;
    }
    let ss_res: f64 = responses
        .iter()
        .enumerate()
        .map(|(i, y)| (y - fitted(i)).powi(2))
        .sum();
    (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
}

/// Least squares with intercept on arbitrary predictor tuples.
pub fn fit_plane(points: &[(Vec<f64>, f64)]) -> Result<RegressionFit> {
    if points.is_empty() {
        return Err(Error::Domain("no points to fit".into()));
    }
    let dim = points[0].0.len();
    if points.iter().any(|(x, _)| x.len() != dim) {
        return Err(Error::Shape("inconsistent predictor dimensions".into()));
    }
    if points.len() < dim + 2 {
        return Err(Error::Domain(format!(
            "need at least {} points for a {dim}-predictor fit, got {}",
            dim + 2,
            points.len()
        )));
    }
    let p = dim + 1; // intercept column
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (x, y) in points {
        let mut row = Vec::with_capacity(p);
        row.push(1.0);
        row.extend_from_slice(x);
        for i in 0..p {
            for j in 0..p {
                xtx[i][j] += row[i] * row[j];
            }
            xty[i] += row[i] * y;
        }
    }
    let beta = solve_dense(xtx, xty)?;
    let responses: Vec<f64> = points.iter().map(|(_, y)| *y).collect();
    let r2 = r_squared(&responses, |i| {
        beta[0]
            + points[i]
                .0
                .iter()
                .zip(&beta[1..])
                .map(|(x, b)| x * b)
                .sum::<f64>()
    });
    Ok(RegressionFit {
        coefficients: beta,
        r_squared: r2,
        n_points: points.len(),
    })
}

/// Fits `log pnp = a * log t + b` over a `(t, pnp)` series.
pub fn fit_pathnorm_growth(series: &[(f64, f64)]) -> Result<PowerLawFit> {
    if series.len() < 3 {
        return Err(Error::Domain(format!(
            "need at least 3 points, got {}",
            series.len()
        )));
    }
    if series.iter().any(|&(t, _)| t < 1.0) {
        return Err(Error::Domain("round indices must be >= 1".into()));
    }
    if series.iter().any(|&(_, p)| p <= 0.0) {
        return Err(Error::Domain("path-norm values must be positive".into()));
    }
    let logged: Vec<(Vec<f64>, f64)> = series
        .iter()
        .map(|&(t, p)| (vec![t.ln()], p.ln()))
        .collect();
    let fit = fit_plane(&logged)?;
    Ok(PowerLawFit {
        exponent: fit.coefficients[1],
        offset: fit.coefficients[0],
        r_squared: fit.r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_recovers_parameters() {
        let series: Vec<(f64, f64)> = (1..=20)
            .map(|t| (t as f64, 7.0 * (t as f64).powi(3)))
            .collect();
        let fit = fit_pathnorm_growth(&series).unwrap();
        assert!((fit.exponent - 3.0).abs() < 1e-9);
        assert!((fit.offset - 7.0f64.ln()).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_series_has_zero_exponent_and_zero_r2() {
        let series: Vec<(f64, f64)> = (1..=10).map(|t| (t as f64, 4.5)).collect();
        let fit = fit_pathnorm_growth(&series).unwrap();
        assert!(fit.exponent.abs() < 1e-12);
        assert_eq!(fit.r_squared, 0.0);
    }

    #[test]
    fn pathnorm_fit_rejects_bad_inputs() {
        assert!(fit_pathnorm_growth(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
        assert!(fit_pathnorm_growth(&[(0.5, 1.0), (2.0, 2.0), (3.0, 3.0)]).is_err());
        assert!(fit_pathnorm_growth(&[(1.0, 0.0), (2.0, 2.0), (3.0, 3.0)]).is_err());
    }

    #[test]
    fn exact_plane_is_recovered() {
        let mut points = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                let x = vec![i as f64 / 4.0, j as f64 / 4.0];
                let y = 0.9 - 0.5 * x[0] - 0.25 * x[1];
                points.push((x, y));
            }
        }
        let fit = fit_plane(&points).unwrap();
        assert!((fit.coefficients[0] - 0.9).abs() < 1e-9);
        assert!((fit.coefficients[1] + 0.5).abs() < 1e-9);
        assert!((fit.coefficients[2] + 0.25).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(fit.n_points, 25);
    }

    #[test]
    fn constant_responses_give_zero_slopes_and_zero_r2() {
        let points: Vec<(Vec<f64>, f64)> = (0..6)
            .map(|i| (vec![i as f64, (i * i) as f64 / 10.0], 0.75))
            .collect();
        let fit = fit_plane(&points).unwrap();
        assert!(fit.coefficients[1].abs() < 1e-9);
        assert!(fit.coefficients[2].abs() < 1e-9);
        assert_eq!(fit.r_squared, 0.0);
    }

    #[test]
    fn too_few_points_is_domain_error() {
        let points = vec![(vec![0.0, 0.0], 1.0), (vec![1.0, 0.0], 0.5)];
        assert!(matches!(fit_plane(&points), Err(Error::Domain(_))));
    }

    #[test]
    fn degenerate_design_is_reported() {
        // identical predictor rows: XtX singular
        let points: Vec<(Vec<f64>, f64)> = (0..8).map(|i| (vec![1.0, 2.0], i as f64)).collect();
        assert!(matches!(fit_plane(&points), Err(Error::Domain(_))));
    }
}
