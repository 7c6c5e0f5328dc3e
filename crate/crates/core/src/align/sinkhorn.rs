use super::lap::{solve_lap, AssignmentProblem};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SinkhornConfig {
    pub tau: f64,
    pub iters: usize,
    pub tol: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            tau: 0.1,
            iters: 1000,
            tol: 1e-9,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Invalid(format!("sinkhorn tau must be positive, got {}", self.tau)));
        }
        if self.iters == 0 || !(self.tol > 0.0) {
            return Err(Error::Invalid("sinkhorn needs iters >= 1 and tol > 0".into()));
        }
        Ok(())
    }
}

fn row_lse(l: &Matrix, i: usize) -> f64 {
    let row = l.row(i);
    let m = row.max();
    m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn col_lse(l: &Matrix, j: usize) -> f64 {
    let col = l.column(j);
    let m = col.max();
    m + col.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn normalize_rows(l: &mut Matrix) {
    for i in 0..l.nrows() {
        let s = row_lse(l, i);
        l.row_mut(i).add_scalar_mut(-s);
    }
}

fn normalize_cols(l: &mut Matrix) {
    for j in 0..l.ncols() {
        let s = col_lse(l, j);
        l.column_mut(j).add_scalar_mut(-s);
    }
}

fn check_input(x: &Matrix) -> Result<()> {
    if !x.is_square() || x.nrows() == 0 {
        return Err(Error::Invalid("sinkhorn needs a nonempty square matrix".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sinkhorn input".into()));
    }
    Ok(())
}

/// Log-domain sweeps on the potentials `f, g` of `exp((X_ij + f_i + g_j) / tau)`
/// until the row sums are within `tol`; returns the final row error.
fn sweep_potentials(x: &Matrix, f: &mut [f64], g: &mut [f64], tau: f64, tol: f64, iters: usize) -> f64 {
    let n = x.nrows();
    let mut buf = vec![0.0; n];
    let lse = |v: &[f64]| {
        let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + v.iter().map(|a| (a - m).exp()).sum::<f64>().ln()
    };
    let mut err = f64::INFINITY;
    for _ in 0..iters {
        for i in 0..n {
            for j in 0..n {
                buf[j] = (x[(i, j)] + g[j]) / tau;
            }
            f[i] = -tau * lse(&buf);
        }
        for j in 0..n {
            for i in 0..n {
                buf[i] = (x[(i, j)] + f[i]) / tau;
            }
            g[j] = -tau * lse(&buf);
        }
        err = (0..n)
            .map(|i| ((0..n).map(|j| ((x[(i, j)] + f[i] + g[j]) / tau).exp()).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max);
        if err <= tol {
            break;
        }
    }
    err
}

fn marginal_residual(x: &Matrix, f: &[f64], g: &[f64], tau: f64) -> (Matrix, Vec<f64>, f64) {
    let n = x.nrows();
    let p = Matrix::from_fn(n, n, |i, j| ((x[(i, j)] + f[i] + g[j]) / tau).exp());
    let mut r: Vec<f64> = (0..n).map(|i| p.row(i).sum() - 1.0).collect();
    r.extend((0..n).map(|j| p.column(j).sum() - 1.0));
    let err = r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    (p, r, err)
}

/// Damped Newton (Levenberg-Marquardt) on the marginal equations in `(f, g)`
/// with `g[n-1]` pinned, for when plain sweeps crawl at low temperature. Near a
/// permutation the Jacobian is almost singular, hence the damping.
fn newton_polish(x: &Matrix, f: &mut [f64], g: &mut [f64], tau: f64, tol: f64) -> f64 {
    let n = x.nrows();
    let m = 2 * n - 1;
    let sq = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let (mut p, mut r, mut err) = marginal_residual(x, f, g, tau);
    let mut mu = 1e-6;
    for _ in 0..200 {
        if err <= tol {
            break;
        }
        let mut jac = Matrix::zeros(m, m);
        for i in 0..n {
            jac[(i, i)] = p.row(i).sum() / tau;
            for j in 0..n - 1 {
                jac[(i, n + j)] = p[(i, j)] / tau;
                jac[(n + j, i)] = p[(i, j)] / tau;
            }
        }
        for j in 0..n - 1 {
            jac[(n + j, n + j)] = p.column(j).sum() / tau;
        }
        let rhs = crate::linalg::Vector::from_iterator(m, r[..m].iter().map(|v| -v));
        let scale = jac.diagonal().max();
        let mut accepted = false;
        while mu < 1e8 {
            let damped = &jac + Matrix::identity(m, m) * (mu * scale);
            let Some(step) = damped.lu().solve(&rhs) else { break };
            let f_new: Vec<f64> = (0..n).map(|i| f[i] + step[i]).collect();
            let mut g_new = g.to_vec();
            for j in 0..n - 1 {
                g_new[j] += step[n + j];
            }
            let (p_new, r_new, err_new) = marginal_residual(x, &f_new, &g_new, tau);
            if err_new.is_finite() && sq(&r_new) < sq(&r) {
                f.copy_from_slice(&f_new);
                g.copy_from_slice(&g_new);
                (p, r, err) = (p_new, r_new, err_new);
                mu = (mu * 0.1).max(1e-12);
                accepted = true;
                break;
            }
            mu *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    err
}

/// Doubly-stochastic Sinkhorn limit of `exp(X / tau)`, computed in the log domain.
///
/// Small temperatures are reached by annealing from the spread of `X` down to
/// `tau`, warm-starting the potentials; the limit is the same, it just converges
/// in far fewer sweeps. Stops when row sums are within `tol` (columns are exact
/// after each sweep). On hitting `iters` at the target temperature it logs a
/// warning and returns the last iterate.
pub fn sinkhorn_project(x: &Matrix, cfg: &SinkhornConfig) -> Result<Matrix> {
    cfg.validate()?;
    check_input(x)?;
    let n = x.nrows();
    let (mut f, mut g) = (vec![0.0; n], vec![0.0; n]);
    let spread = x.max() - x.min();
    let mut t = spread.max(cfg.tau);
    while t > cfg.tau {
        sweep_potentials(x, &mut f, &mut g, t, cfg.tol, cfg.iters);
        t = (t * 0.5).max(cfg.tau);
    }
    let mut err = sweep_potentials(x, &mut f, &mut g, cfg.tau, cfg.tol, cfg.iters);
    if err > cfg.tol {
        err = newton_polish(x, &mut f, &mut g, cfg.tau, cfg.tol);
    }
    if err > cfg.tol {
        log::warn!("sinkhorn stopped after {} sweeps with row error {err:.3e}", cfg.iters);
    }
    Ok(Matrix::from_fn(n, n, |i, j| ((x[(i, j)] + f[i] + g[j]) / cfg.tau).exp()))
}

/// Sinkhorn normalization of a matrix with positive entries.
pub fn sinkhorn_normalize(k: &Matrix, cfg: &SinkhornConfig) -> Result<Matrix> {
    if k.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Invalid("sinkhorn_normalize needs positive entries".into()));
    }
    sinkhorn_project(&(k.map(f64::ln) * cfg.tau), cfg)
}

/// Exactly `iters` unrolled sweeps; differentiable with [`sinkhorn_vjp`].
pub fn sinkhorn_unrolled(x: &Matrix, tau: f64, iters: usize) -> Result<Matrix> {
    check_input(x)?;
    let mut l = x / tau;
    for _ in 0..iters {
        normalize_rows(&mut l);
        normalize_cols(&mut l);
    }
    Ok(l.map(f64::exp))
}

/// Vector-Jacobian product of [`sinkhorn_unrolled`]: maps `dL/dP` to `dL/dX`.
pub fn sinkhorn_vjp(x: &Matrix, tau: f64, iters: usize, grad_out: &Matrix) -> Result<Matrix> {
    check_input(x)?;
    // Tape of log matrices before each half-sweep.
    let mut tape = Vec::with_capacity(2 * iters);
    let mut l = x / tau;
    for _ in 0..iters {
        tape.push(l.clone());
        normalize_rows(&mut l);
        tape.push(l.clone());
        normalize_cols(&mut l);
    }
    let p = l.map(f64::exp);
    let mut g = grad_out.component_mul(&p);
    for (k, before) in tape.iter().enumerate().rev() {
        let n = before.nrows();
        if k % 2 == 1 {
            // Column step: l'_ij = l_ij - lse_i(l_.j); dl = dl' - softmax_col * colsum(dl').
            for j in 0..n {
                let s = col_lse(before, j);
                let total: f64 = g.column(j).sum();
                for i in 0..n {
                    g[(i, j)] -= (before[(i, j)] - s).exp() * total;
                }
            }
        } else {
            for i in 0..n {
                let s = row_lse(before, i);
                let total: f64 = g.row(i).sum();
                for j in 0..n {
                    g[(i, j)] -= (before[(i, j)] - s).exp() * total;
                }
            }
        }
    }
    Ok(g / tau)
}

/// Nearest hard permutation: maximizes `<P, P_soft>`.
pub fn hard_round(p_soft: &Matrix) -> Result<Vec<usize>> {
    Ok(solve_lap(&AssignmentProblem::max(p_soft.clone()))?.0)
}
