use super::riccati::{solve_dare, solve_kalman};
use super::system::LtiSystem;
use crate::error::{dim_err, Error, Result};
use crate::linalg::{inverse, lstsq, min_singular_value, serde_rows, spectral_radius, Matrix, Vector};
use crate::merge::Interpolate;
use serde::{Deserialize, Serialize};

/// Dynamic output-feedback policy `x̂_t = A x̂_{t-1} + B y_t`, `u_t = C x̂_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearPolicy {
    #[serde(rename = "A_th", with = "serde_rows")]
    pub a: Matrix,
    #[serde(rename = "B_th", with = "serde_rows")]
    pub b: Matrix,
    #[serde(rename = "C_th", with = "serde_rows")]
    pub c: Matrix,
}

impl LinearPolicy {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let pol = Self { a, b, c };
        pol.validate()?;
        Ok(pol)
    }

    /// Memoryless policy `u = K y`, embedded with `A = 0`, `B = I`, `C = K`.
    pub fn from_static(k: &Matrix) -> Self {
        let p = k.ncols();
        Self { a: Matrix::zeros(p, p), b: Matrix::identity(p, p), c: k.clone() }
    }

    pub fn latent_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn act_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.a.nrows();
        if self.a.ncols() != k {
            return Err(dim_err("A_th", format!("{k}x{k}"), format!("{:?}", self.a.shape())));
        }
        if self.b.nrows() != k {
            return Err(dim_err("B_th rows", k.to_string(), self.b.nrows().to_string()));
        }
        if self.c.ncols() != k {
            return Err(dim_err("C_th cols", k.to_string(), self.c.ncols().to_string()));
        }
        if [&self.a, &self.b, &self.c].iter().any(|m| m.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite("linear policy".into()));
        }
        Ok(())
    }

    /// `(T A T^{-1}, T B, C T^{-1})`: same input-output map, different coordinates.
    pub fn similarity(&self, t: &Matrix) -> Result<Self> {
        if t.shape() != (self.latent_dim(), self.latent_dim()) {
            return Err(dim_err("similarity transform", format!("{0}x{0}", self.latent_dim()), format!("{:?}", t.shape())));
        }
        let t_inv = inverse(t)?;
        Ok(Self { a: t * &self.a * &t_inv, b: t * &self.b, c: &self.c * &t_inv })
    }

    /// Runs the policy on an observation sequence from `x̂ = 0`.
    pub fn respond(&self, observations: &[Vector]) -> Result<Vec<Vector>> {
        let mut state = Vector::zeros(self.latent_dim());
        observations
            .iter()
            .map(|y| {
                if y.len() != self.obs_dim() {
                    return Err(dim_err("observation", self.obs_dim().to_string(), y.len().to_string()));
                }
                state = &self.a * &state + &self.b * y;
                Ok(&self.c * &state)
            })
            .collect()
    }

    pub fn sq_norm(&self) -> f64 {
        self.a.norm_squared() + self.b.norm_squared() + self.c.norm_squared()
    }

    /// Closed-loop matrix on `(x_t, x̂_{t-1})` with the system's noise switched off.
    pub fn closed_loop_matrix(&self, sys: &LtiSystem) -> Result<Matrix> {
        if self.obs_dim() != sys.p() || self.act_dim() != sys.m() {
            return Err(dim_err("policy vs system", format!("p={}, m={}", sys.p(), sys.m()), format!("p={}, m={}", self.obs_dim(), self.act_dim())));
        }
        let (n, k) = (sys.n(), self.latent_dim());
        let mut m = Matrix::zeros(n + k, n + k);
        let bc = &sys.b * &self.c;
        m.view_mut((0, 0), (n, n)).copy_from(&(&sys.a + &bc * &self.b * &sys.c));
        m.view_mut((0, n), (n, k)).copy_from(&(&bc * &self.a));
        m.view_mut((n, 0), (k, n)).copy_from(&(&self.b * &sys.c));
        m.view_mut((n, n), (k, k)).copy_from(&self.a);
        Ok(m)
    }

    pub fn is_stabilizing(&self, sys: &LtiSystem) -> Result<bool> {
        Ok(spectral_radius(&self.closed_loop_matrix(sys)?) < 1.0)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let pol: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        pol.validate()?;
        Ok(pol)
    }
}

impl Interpolate for LinearPolicy {
    fn combine(a: &Self, wa: f64, b: &Self, wb: f64) -> Result<Self> {
        if a.a.shape() != b.a.shape() || a.b.shape() != b.b.shape() || a.c.shape() != b.c.shape() {
            return Err(Error::ArchitectureMismatch("linear policies have different shapes".into()));
        }
        let mix = |x: &Matrix, y: &Matrix| x.zip_map(y, |u, v| wa * u + wb * v);
        Ok(Self { a: mix(&a.a, &b.a), b: mix(&a.b, &b.b), c: mix(&a.c, &b.c) })
    }
}

/// LQG controller: LQR gain on the steady-state Kalman estimate.
pub fn optimal_policy(sys: &LtiSystem) -> Result<LinearPolicy> {
    sys.validate()?;
    let (_, k) = solve_dare(&sys.a, &sys.b, &sys.q, &sys.r)?;
    let (_, l) = solve_kalman(&sys.a, &sys.c, &sys.sigma_w, &sys.sigma_v)?;
    let closed = &sys.a + &sys.b * &k;
    let a = &closed - &l * &sys.c * &closed;
    LinearPolicy::new(a, l, k)
}

/// Minimum-norm least-squares gain for `u ≈ K y`.
pub fn train_static_policy(pairs: &[(Vector, Vector)]) -> Result<Matrix> {
    let (y0, u0) = pairs.first().ok_or_else(|| Error::Precondition("no (y, u) pairs".into()))?;
    let (p, m) = (y0.len(), u0.len());
    let mut ys = Matrix::zeros(pairs.len(), p);
    let mut us = Matrix::zeros(pairs.len(), m);
    for (i, (y, u)) in pairs.iter().enumerate() {
        if y.len() != p || u.len() != m {
            return Err(dim_err("static policy pair", format!("y {p}, u {m}"), format!("y {}, u {}", y.len(), u.len())));
        }
        ys.set_row(i, &y.transpose());
        us.set_row(i, &u.transpose());
    }
    // Y K' = U row by row.
    Ok(lstsq(&ys, &us).transpose())
}

/// Smallest singular value check shared by the merging code.
pub(crate) fn is_degenerate(p: &Matrix) -> bool {
    min_singular_value(p) < 1e-6
}
