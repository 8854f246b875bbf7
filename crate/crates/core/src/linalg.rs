//! Small dense linear-algebra helpers shared by the controllers and the
//! inverse-kinematics loop.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Ratio of the largest to the smallest singular value.
///
/// Returns `f64::INFINITY` when the smallest singular value is below
/// `1e-300` or the matrix has fewer singular values than columns.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    if m.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let sv = m.singular_values();
    let max = sv.max();
    let min = if m.ncols() > m.nrows() { 0.0 } else { sv.min() };
    if min < 1e-300 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Numerical rank with the usual `max(m, n) * eps * sigma_max` cut-off.
pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * sv.max();
    sv.iter().filter(|&&s| s > tol).count()
}

/// Solves the damped normal equations `[AᵀA + diag(λ)] x = Aᵀ r`.
///
/// Positive-definite systems go through Cholesky. When some λ are zero the
/// system may be singular; then the minimum-norm solution is returned, unless
/// `rank A` is below the number of rows, which is reported as
/// [`Error::RankDeficient`].
pub fn damped_least_squares(
    a: &DMatrix<f64>,
    lambda: &DVector<f64>,
    r: &DVector<f64>,
) -> Result<DVector<f64>> {
    if a.nrows() != r.len() || a.ncols() != lambda.len() {
        return Err(Error::Shape(format!(
            "damped solve: A is {}x{}, r has {}, lambda has {}",
            a.nrows(),
            a.ncols(),
            r.len(),
            lambda.len()
        )));
    }
    let at = a.transpose();
    let rhs = &at * r;
    let mut normal = &at * a;
    for (i, l) in lambda.iter().enumerate() {
        normal[(i, i)] += l;
    }

    let positive = lambda.iter().all(|&l| l > 0.0);
    if positive {
        if let Some(chol) = normal.clone().cholesky() {
            return finite(chol.solve(&rhs));
        }
    }

    let cols = a.ncols();
    let rk = rank(a);
    if rk == cols {
        // full column rank: unique solution, SVD for robustness
        return pinv_solve(&normal, &rhs);
    }
    if lambda.iter().all(|&l| l == 0.0) && rk < a.nrows() {
        return Err(Error::RankDeficient {
            rank: rk,
            required: a.nrows(),
        });
    }
    pinv_solve(&normal, &rhs)
}

fn pinv_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = m.clone().svd(true, true);
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * svd.singular_values.max();
    let x = svd
        .solve(rhs, tol)
        .map_err(|e| Error::Numeric(e.to_string()))?;
    finite(x)
}

fn finite(x: DVector<f64>) -> Result<DVector<f64>> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::Numeric("non-finite solution of damped system".into()))
    }
}
