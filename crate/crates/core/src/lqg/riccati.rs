use crate::error::{Error, Result};
use crate::linalg::{solve, Matrix};

pub const MAX_SWEEPS: usize = 100_000;

fn dare_step(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix> {
    let bt_p = b.transpose() * p;
    let gain = solve(&(&bt_p * b + r), &(&bt_p * a))?;
    let next = a.transpose() * p * a - a.transpose() * p * b * gain + q;
    Ok((&next + next.transpose()) * 0.5)
}

/// `||P - (A'PA - A'PB (B'PB + R)^{-1} B'PA + Q)||_F`.
pub fn dare_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Result<f64> {
    let bt_p = b.transpose() * p;
    let gain = solve(&(&bt_p * b + r), &(&bt_p * a))?;
    let rhs = a.transpose() * p * a - a.transpose() * p * b * gain + q;
    Ok((p - rhs).norm())
}

/// Fixed-point iteration of the Riccati map from `P = Q` until it stops moving.
fn iterate(mut step: impl FnMut(&Matrix) -> Result<Matrix>, start: Matrix, what: &str) -> Result<Matrix> {
    let mut p = start;
    for _ in 0..MAX_SWEEPS {
        let next = step(&p)?;
        if next.iter().any(|x| !x.is_finite()) || next.amax() > 1e150 {
            return Err(Error::NotConverged(format!("{what} iteration diverged")));
        }
        let delta = (&next - &p).norm();
        p = next;
        if delta <= 1e-14 * (1.0 + p.norm()) {
            return Ok(p);
        }
    }
    Err(Error::NotConverged(format!("{what} iteration did not settle in {MAX_SWEEPS} sweeps")))
}

/// Stabilizing DARE solution `P` and the LQR gain `K = -(B'PB + R)^{-1} B'PA`.
pub fn solve_dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<(Matrix, Matrix)> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols()) {
        return Err(Error::DimensionMismatch {
            context: "riccati inputs",
            expected: format!("A {n}x{n}, B {n}xm, Q {n}x{n}, R mxm"),
            got: format!("B {:?}, Q {:?}, R {:?}", b.shape(), q.shape(), r.shape()),
        });
    }
    if crate::linalg::min_eigenvalue_sym(r) <= 0.0 {
        return Err(Error::Precondition("R must be positive definite".into()));
    }
    let p = iterate(|p| dare_step(a, b, q, r, p), q.clone(), "riccati")?;
    let bt_p = b.transpose() * &p;
    let k = -solve(&(&bt_p * b + r), &(&bt_p * a))?;
    Ok((p, k))
}

/// `||S - (ASA' - ASC' (CSC' + V)^{-1} CSA' + W)||_F`.
pub fn kalman_residual(a: &Matrix, c: &Matrix, w: &Matrix, v: &Matrix, s: &Matrix) -> Result<f64> {
    dare_residual(&a.transpose(), &c.transpose(), w, v, s)
}

/// Steady-state prior covariance `Σ` and Kalman gain `L = ΣC'(CΣC' + Σ_v)^{-1}`.
pub fn solve_kalman(a: &Matrix, c: &Matrix, sigma_w: &Matrix, sigma_v: &Matrix) -> Result<(Matrix, Matrix)> {
    let n = a.nrows();
    if a.ncols() != n || c.ncols() != n || sigma_w.shape() != (n, n) || sigma_v.shape() != (c.nrows(), c.nrows()) {
        return Err(Error::DimensionMismatch {
            context: "kalman inputs",
            expected: format!("A {n}x{n}, C px{n}, Sigma_w {n}x{n}, Sigma_v pxp"),
            got: format!("C {:?}, Sigma_w {:?}, Sigma_v {:?}", c.shape(), sigma_w.shape(), sigma_v.shape()),
        });
    }
    let (at, ct) = (a.transpose(), c.transpose());
    let s = iterate(|s| dare_step(&at, &ct, sigma_w, sigma_v, s), sigma_w.clone(), "kalman")?;
    let innov = c * &s * &ct + sigma_v;
    // L = S C' innov^{-1}  <=>  innov' L' = C S'.
    let l = solve(&innov.transpose(), &(c * s.transpose()))?.transpose();
    Ok((s, l))
}
