//! Dense linear algebra helpers on top of `nalgebra`.
//!
//! Everything is `f64`. Matrices serialize as row-major nested arrays so that
//! checkpoints read the same way they are written on paper.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn frob_sq(m: &Matrix) -> f64 {
    m.iter().map(|x| x * x).sum()
}

pub fn vec_sq(v: &Vector) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Frobenius inner product `<a, b>`.
pub fn frob_dot(a: &Matrix, b: &Matrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|x| x.is_finite())
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Builds a matrix from row-major nested vectors. An empty outer vector gives a 0x`cols_hint` matrix.
pub fn from_rows(rows: &[Vec<f64>], cols_hint: usize) -> Result<Matrix> {
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, cols_hint));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Invalid("ragged matrix rows".into()));
    }
    Ok(Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn randn_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn randn_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Symmetric PSD square root via eigendecomposition; negative eigenvalues are clamped to 0.
pub fn psd_sqrt(m: &Matrix) -> Matrix {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * Matrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

pub fn min_eigenvalue_sym(m: &Matrix) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Largest eigenvalue modulus of a general square matrix.
pub fn spectral_radius(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

pub fn min_singular_value(m: &Matrix) -> f64 {
    m.singular_values()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Solves `a x = b` by LU, failing on singular `a`.
pub fn solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular(format!("{}x{} system", a.nrows(), a.ncols())))
}

/// Minimum-norm least-squares solution of `a x = b` via SVD.
pub fn lstsq(a: &Matrix, b: &Matrix) -> Matrix {
    let svd = a.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = max_sv * (a.nrows().max(a.ncols()) as f64) * f64::EPSILON;
    svd.solve(b, eps).expect("both factors were computed")
}

pub fn inverse(a: &Matrix) -> Result<Matrix> {
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular(format!("{}x{} inverse", a.nrows(), a.ncols())))
}

/// Row-major (de)serialization for `Matrix` fields.
pub mod serde_rows {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> std::result::Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Matrix, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        from_rows(&rows, 0).map_err(serde::de::Error::custom)
    }
}

pub mod serde_rows_opt {
    use super::*;

    pub fn serialize<S: Serializer>(
        m: &Option<Matrix>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        m.as_ref().map(to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Option<Matrix>, D::Error> {
        let rows: Option<Vec<Vec<f64>>> = Option::deserialize(d)?;
        rows.map(|r| from_rows(&r, 0))
            .transpose()
            .map_err(serde::de::Error::custom)
    }
}

pub mod serde_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> std::result::Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vector, D::Error> {
        let v: Vec<f64> = Vec::deserialize(d)?;
        Ok(Vector::from_vec(v))
    }
}

pub mod serde_vecs {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Vector], s: S) -> std::result::Result<S::Ok, S::Error> {
        v.iter()
            .map(|x| x.as_slice().to_vec())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<Vector>, D::Error> {
        let v: Vec<Vec<f64>> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(Vector::from_vec).collect())
    }
}
