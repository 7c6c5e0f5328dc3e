use crate::error::{dim_err, Error, Result};
use crate::linalg::{min_eigenvalue_sym, randn_matrix, serde_rows, Matrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const PSD_TOL: f64 = 1e-10;

/// A linear-quadratic-Gaussian problem instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LtiSystem {
    #[serde(rename = "A", with = "serde_rows")]
    pub a: Matrix,
    #[serde(rename = "B", with = "serde_rows")]
    pub b: Matrix,
    #[serde(rename = "C", with = "serde_rows")]
    pub c: Matrix,
    #[serde(rename = "Q", with = "serde_rows")]
    pub q: Matrix,
    #[serde(rename = "R", with = "serde_rows")]
    pub r: Matrix,
    #[serde(with = "serde_rows")]
    pub sigma_w: Matrix,
    #[serde(with = "serde_rows")]
    pub sigma_v: Matrix,
    #[serde(with = "serde_rows")]
    pub sigma_0: Matrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn check_shape(name: &'static str, m: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(dim_err(name, format!("{rows}x{cols}"), format!("{}x{}", m.nrows(), m.ncols())));
    }
    Ok(())
}

fn check_psd(name: &str, m: &Matrix, strict: bool) -> Result<()> {
    if (m - m.transpose()).amax() > 1e-9 * (1.0 + m.amax()) {
        return Err(Error::Invalid(format!("{name} is not symmetric")));
    }
    let lo = min_eigenvalue_sym(m);
    let ok = if strict { lo > PSD_TOL } else { lo >= -PSD_TOL };
    if !ok {
        let kind = if strict { "positive definite" } else { "positive semidefinite" };
        return Err(Error::Invalid(format!("{name} is not {kind} (min eigenvalue {lo:.3e})")));
    }
    Ok(())
}

impl LtiSystem {
    /// System with identity weights and covariances.
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let (n, m, p) = (a.nrows(), b.ncols(), c.nrows());
        let sys = Self {
            a,
            b,
            c,
            q: Matrix::identity(n, n),
            r: Matrix::identity(m, m),
            sigma_w: Matrix::identity(n, n),
            sigma_v: Matrix::identity(p, p),
            sigma_0: Matrix::identity(n, n),
            seed: None,
        };
        sys.validate()?;
        Ok(sys)
    }

    /// Gaussian `A` rescaled to the given spectral radius, Gaussian `B` and `C`.
    pub fn random(n: usize, m: usize, p: usize, spectral_radius: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = randn_matrix(&mut rng, n, n);
        let rho = crate::linalg::spectral_radius(&a);
        if rho > 0.0 {
            a *= spectral_radius / rho;
        }
        let b = randn_matrix(&mut rng, n, m);
        let c = randn_matrix(&mut rng, p, n) / (n as f64).sqrt();
        let mut sys = Self::new(a, b, c).expect("consistent random shapes");
        sys.seed = Some(seed);
        sys
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// Checks shapes and definiteness; stabilizability and detectability are assumed.
    pub fn validate(&self) -> Result<()> {
        let (n, m, p) = (self.n(), self.m(), self.p());
        check_shape("A", &self.a, n, n)?;
        check_shape("B", &self.b, n, m)?;
        check_shape("C", &self.c, p, n)?;
        check_shape("Q", &self.q, n, n)?;
        check_shape("R", &self.r, m, m)?;
        check_shape("Sigma_w", &self.sigma_w, n, n)?;
        check_shape("Sigma_v", &self.sigma_v, p, p)?;
        check_shape("Sigma_0", &self.sigma_0, n, n)?;
        for (name, mat) in [
            ("A", &self.a),
            ("B", &self.b),
            ("C", &self.c),
            ("Q", &self.q),
            ("R", &self.r),
            ("Sigma_w", &self.sigma_w),
            ("Sigma_v", &self.sigma_v),
            ("Sigma_0", &self.sigma_0),
        ] {
            if mat.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(name.into()));
            }
        }
        check_psd("Q", &self.q, false)?;
        check_psd("R", &self.r, true)?;
        check_psd("Sigma_w", &self.sigma_w, false)?;
        check_psd("Sigma_v", &self.sigma_v, false)?;
        check_psd("Sigma_0", &self.sigma_0, false)?;
        Ok(())
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let sys: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        sys.validate()?;
        Ok(sys)
    }
}
