use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, Matrix, Vector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Smallest |det| accepted for an invertible transform.
pub const DET_THRESHOLD: f64 = 1e-9;
const DS_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    HardPerm,
    ScaledPerm,
    #[serde(rename = "soft_ds")]
    SoftDs,
    Invertible,
}

/// Per-layer square matrices `P^0..P^L`; the boundary ones are identities.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformOp {
    pub kind: TransformKind,
    pub mats: Vec<Matrix>,
}

/// Permutation matrix with `P[i, perm[i]] = 1`, so `(P W)` row `i` is row `perm[i]` of `W`.
pub fn perm_matrix(perm: &[usize]) -> Matrix {
    let n = perm.len();
    let mut p = Matrix::zeros(n, n);
    for (i, &j) in perm.iter().enumerate() {
        p[(i, j)] = 1.0;
    }
    p
}

/// Reads a 0/1 permutation matrix back into column indices.
pub fn perm_from_matrix(p: &Matrix) -> Option<Vec<usize>> {
    if !p.is_square() {
        return None;
    }
    let n = p.nrows();
    let mut used = vec![false; n];
    let mut perm = Vec::with_capacity(n);
    for i in 0..n {
        let mut col = None;
        for j in 0..n {
            let v = p[(i, j)];
            if v == 1.0 {
                if col.is_some() {
                    return None;
                }
                col = Some(j);
            } else if v != 0.0 {
                return None;
            }
        }
        let j = col?;
        if used[j] {
            return None;
        }
        used[j] = true;
        perm.push(j);
    }
    Some(perm)
}

pub fn is_permutation(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    perm.iter().all(|&j| j < seen.len() && !std::mem::replace(&mut seen[j], true))
}

pub fn invert_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &j) in perm.iter().enumerate() {
        inv[j] = i;
    }
    inv
}

/// Splits a scaled permutation `P D` into `(perm, diag)`.
fn scaled_parts(m: &Matrix) -> Option<(Vec<usize>, Vec<f64>)> {
    let n = m.nrows();
    let mut perm = Vec::with_capacity(n);
    let mut diag = vec![0.0; n];
    for i in 0..n {
        let nz: Vec<usize> = (0..n).filter(|&j| m[(i, j)] != 0.0).collect();
        if nz.len() != 1 || m[(i, nz[0])] <= 0.0 {
            return None;
        }
        perm.push(nz[0]);
        diag[nz[0]] = m[(i, nz[0])];
    }
    is_permutation(&perm).then_some((perm, diag))
}

impl TransformOp {
    pub fn identity(layer_dims: &[usize], kind: TransformKind) -> Self {
        Self {
            kind,
            mats: layer_dims.iter().map(|&d| Matrix::identity(d, d)).collect(),
        }
    }

    /// Hard permutation op from one permutation per interior layer `1..L`.
    pub fn from_perms(layer_dims: &[usize], interior: &[Vec<usize>]) -> Result<Self> {
        let diags: Vec<Vec<f64>> = interior.iter().map(|p| vec![1.0; p.len()]).collect();
        let mut op = Self::scaled(layer_dims, interior, &diags)?;
        op.kind = TransformKind::HardPerm;
        Ok(op)
    }

    /// Scaled permutation `P^l = perm_l * diag(d_l)` for interior layers.
    pub fn scaled(layer_dims: &[usize], interior: &[Vec<usize>], diags: &[Vec<f64>]) -> Result<Self> {
        let n_interior = layer_dims.len().saturating_sub(2);
        if interior.len() != n_interior || diags.len() != n_interior {
            return Err(dim_err("interior layers", n_interior, interior.len()));
        }
        let mut op = Self::identity(layer_dims, TransformKind::ScaledPerm);
        for (k, (perm, diag)) in interior.iter().zip(diags).enumerate() {
            let d = layer_dims[k + 1];
            if perm.len() != d || diag.len() != d {
                return Err(dim_err("permutation length", d, perm.len()));
            }
            if !is_permutation(perm) {
                return Err(Error::Invalid(format!("layer {} is not a permutation", k + 1)));
            }
            if diag.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::Invalid("scaling entries must be positive".into()));
            }
            op.mats[k + 1] = perm_matrix(perm) * Matrix::from_diagonal(&Vector::from_column_slice(diag));
        }
        Ok(op)
    }

    /// Builds an op from explicit matrices and checks the invariants of `kind`.
    pub fn from_mats(kind: TransformKind, mats: Vec<Matrix>) -> Result<Self> {
        let op = Self { kind, mats };
        op.validate()?;
        Ok(op)
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        self.mats.iter().map(|m| m.nrows()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let last = self.mats.len().checked_sub(1).ok_or_else(|| Error::Invalid("empty transform".into()))?;
        for (l, m) in self.mats.iter().enumerate() {
            if !m.is_square() {
                return Err(Error::Invalid(format!("P^{l} is not square")));
            }
            if !linalg::all_finite(m) {
                return Err(Error::NonFinite(format!("P^{l}")));
            }
            if (l == 0 || l == last) && *m != Matrix::identity(m.nrows(), m.nrows()) {
                return Err(Error::Invalid(format!("boundary P^{l} must be the identity")));
            }
            match self.kind {
                TransformKind::HardPerm => {
                    if perm_from_matrix(m).is_none() {
                        return Err(Error::Invalid(format!("P^{l} is not a permutation matrix")));
                    }
                }
                TransformKind::ScaledPerm => {
                    if scaled_parts(m).is_none() {
                        return Err(Error::Invalid(format!("P^{l} is not a scaled permutation")));
                    }
                }
                TransformKind::SoftDs => {
                    let n = m.nrows();
                    let rows_ok = (0..n).all(|i| (m.row(i).sum() - 1.0).abs() <= DS_TOL);
                    let cols_ok = (0..n).all(|j| (m.column(j).sum() - 1.0).abs() <= DS_TOL);
                    let range_ok = m.iter().all(|&x| (-DS_TOL..=1.0 + DS_TOL).contains(&x));
                    if !(rows_ok && cols_ok && range_ok) {
                        return Err(Error::Invalid(format!("P^{l} is not doubly stochastic")));
                    }
                }
                TransformKind::Invertible => {
                    if m.determinant().abs() <= DET_THRESHOLD {
                        return Err(Error::Singular(format!("|det P^{l}| <= {DET_THRESHOLD:e}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// The matrix standing in for `(P^l)^{-1}` when acting on weights.
    pub fn inverse_mat(&self, l: usize) -> Result<Matrix> {
        let m = &self.mats[l];
        match self.kind {
            TransformKind::HardPerm | TransformKind::SoftDs => Ok(m.transpose()),
            TransformKind::ScaledPerm => {
                let (perm, diag) = scaled_parts(m)
                    .ok_or_else(|| Error::Invalid(format!("P^{l} is not a scaled permutation")))?;
                let dinv = Vector::from_iterator(diag.len(), diag.iter().map(|d| 1.0 / d));
                Ok(Matrix::from_diagonal(&dinv) * perm_matrix(&perm).transpose())
            }
            TransformKind::Invertible => {
                if m.determinant().abs() <= DET_THRESHOLD {
                    return Err(Error::Singular(format!("|det P^{l}| <= {DET_THRESHOLD:e}")));
                }
                linalg::inverse(m)
            }
        }
    }

    pub fn inverse(&self) -> Result<Self> {
        let mats = (0..self.mats.len())
            .map(|l| self.inverse_mat(l))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { kind: self.kind, mats })
    }

    /// `self ∘ other`: applying the result equals applying `other` then `self`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.layer_dims() != other.layer_dims() {
            return Err(dim_err("transform layers", format!("{:?}", self.layer_dims()), format!("{:?}", other.layer_dims())));
        }
        use TransformKind::*;
        let kind = match (self.kind, other.kind) {
            (HardPerm, HardPerm) => HardPerm,
            (HardPerm | ScaledPerm, HardPerm | ScaledPerm) => ScaledPerm,
            (SoftDs, SoftDs) | (SoftDs, HardPerm) | (HardPerm, SoftDs) => SoftDs,
            _ => Invertible,
        };
        let mats = self.mats.iter().zip(&other.mats).map(|(a, b)| a * b).collect();
        Ok(Self { kind, mats })
    }

    /// Column indices of each layer's permutation (hard ops only).
    pub fn perms(&self) -> Option<Vec<Vec<usize>>> {
        self.mats.iter().map(perm_from_matrix).collect()
    }

    /// Permutation and positive scaling of each layer (hard or scaled ops).
    pub fn scaled_perms(&self) -> Option<Vec<(Vec<usize>, Vec<f64>)>> {
        self.mats.iter().map(scaled_parts).collect()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.mats
            .iter()
            .zip(&other.mats)
            .map(|(a, b)| if a.shape() == b.shape() { (a - b).amax() } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }
}

/// Uniformly random hard permutation on every interior layer.
pub fn random_perm_op(layer_dims: &[usize], seed: u64) -> TransformOp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_perm_op_with(layer_dims, &mut rng)
}

pub fn random_perm_op_with<R: Rng + ?Sized>(layer_dims: &[usize], rng: &mut R) -> TransformOp {
    let interior: Vec<Vec<usize>> = layer_dims[1..layer_dims.len().saturating_sub(1).max(1)]
        .iter()
        .map(|&d| {
            let mut p: Vec<usize> = (0..d).collect();
            p.shuffle(rng);
            p
        })
        .collect();
    TransformOp::from_perms(layer_dims, &interior).expect("shuffles are permutations")
}

/// Random permutation times a diagonal with entries in `[lo, hi]` on every interior layer.
pub fn random_scaled_op(layer_dims: &[usize], lo: f64, hi: f64, seed: u64) -> TransformOp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hard = random_perm_op_with(layer_dims, &mut rng);
    let perms = hard.perms().expect("hard op");
    let n = layer_dims.len();
    let interior: Vec<Vec<usize>> = perms[1..n - 1].to_vec();
    let diags: Vec<Vec<f64>> = interior
        .iter()
        .map(|p| (0..p.len()).map(|_| rng.random_range(lo..=hi)).collect())
        .collect();
    TransformOp::scaled(layer_dims, &interior, &diags).expect("valid scaled op")
}

#[derive(Serialize, Deserialize)]
struct Repr {
    kind: TransformKind,
    #[serde(default)]
    perms: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    diags: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mats: Option<Vec<Vec<Vec<f64>>>>,
}

impl Serialize for TransformOp {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = match self.kind {
            TransformKind::HardPerm | TransformKind::ScaledPerm => {
                let parts = self
                    .scaled_perms()
                    .ok_or_else(|| serde::ser::Error::custom("layer is not a scaled permutation"))?;
                let (perms, diags): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
                Repr {
                    kind: self.kind,
                    perms,
                    diags: (self.kind == TransformKind::ScaledPerm).then_some(diags),
                    mats: None,
                }
            }
            _ => Repr {
                kind: self.kind,
                perms: Vec::new(),
                diags: None,
                mats: Some(self.mats.iter().map(linalg::to_rows).collect()),
            },
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for TransformOp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = Repr::deserialize(d)?;
        let mats = match (repr.kind, repr.mats) {
            (_, Some(mats)) => mats
                .iter()
                .map(|rows| linalg::from_rows(rows, rows.len()))
                .collect::<Result<Vec<_>>>()
                .map_err(D::Error::custom)?,
            (TransformKind::HardPerm | TransformKind::ScaledPerm, None) => {
                let diags = repr
                    .diags
                    .unwrap_or_else(|| repr.perms.iter().map(|p| vec![1.0; p.len()]).collect());
                if diags.len() != repr.perms.len() {
                    return Err(D::Error::custom("perms and diags differ in length"));
                }
                repr.perms
                    .iter()
                    .zip(&diags)
                    .map(|(p, dg)| {
                        if !is_permutation(p) || dg.len() != p.len() {
                            return Err(D::Error::custom("invalid permutation entry"));
                        }
                        Ok(perm_matrix(p) * Matrix::from_diagonal(&Vector::from_column_slice(dg)))
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()?
            }
            _ => return Err(D::Error::custom("soft and invertible transforms need \"mats\"")),
        };
        TransformOp::from_mats(repr.kind, mats).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perm_matrix_roundtrip() {
        let p = vec![2, 0, 1];
        let m = perm_matrix(&p);
        assert_eq!(perm_from_matrix(&m).unwrap(), p);
        assert_eq!(invert_perm(&p), perm_from_matrix(&m.transpose()).unwrap());
        assert!(perm_from_matrix(&Matrix::from_element(2, 2, 0.5)).is_none());
    }

    #[test]
    fn same_seed_same_op() {
        assert_eq!(random_perm_op(&[3, 8, 8, 2], 5), random_perm_op(&[3, 8, 8, 2], 5));
        assert_ne!(random_perm_op(&[3, 8, 8, 2], 5), random_perm_op(&[3, 8, 8, 2], 6));
    }

    #[test]
    fn unit_interior_is_identity() {
        let op = random_perm_op(&[4, 1, 1, 3], 9);
        assert_eq!(op, TransformOp::identity(&[4, 1, 1, 3], TransformKind::HardPerm));
    }

    #[test]
    fn boundary_must_be_identity() {
        let mats = vec![perm_matrix(&[1, 0]), Matrix::identity(2, 2)];
        assert!(TransformOp::from_mats(TransformKind::HardPerm, mats).is_err());
    }

    #[test]
    fn singular_invertible_rejected() {
        let mut mats = vec![Matrix::identity(1, 1), Matrix::from_element(2, 2, 1.0), Matrix::identity(1, 1)];
        assert!(matches!(
            TransformOp::from_mats(TransformKind::Invertible, mats.clone()),
            Err(Error::Singular(_))
        ));
        mats[1] = Matrix::from_row_slice(2, 2, &[2.0, 0.5, -1.0, 3.0]);
        assert!(TransformOp::from_mats(TransformKind::Invertible, mats).is_ok());
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let op = random_scaled_op(&[2, 5, 4, 1], 0.5, 2.0, 1);
        let id = op.compose(&op.inverse().unwrap()).unwrap();
        assert!(id.max_abs_diff(&TransformOp::identity(&[2, 5, 4, 1], TransformKind::ScaledPerm)) < 1e-12);
    }

    #[test]
    fn json_roundtrip() {
        for op in [random_perm_op(&[2, 5, 3], 2), random_scaled_op(&[2, 5, 3], 0.5, 2.0, 3)] {
            let s = serde_json::to_string(&op).unwrap();
            assert!(s.contains("\"perms\""));
            let back: TransformOp = serde_json::from_str(&s).unwrap();
            assert_eq!(back, op);
        }
        let soft = TransformOp::from_mats(
            TransformKind::SoftDs,
            vec![Matrix::identity(1, 1), Matrix::from_element(2, 2, 0.5), Matrix::identity(1, 1)],
        )
        .unwrap();
        let back: TransformOp = serde_json::from_str(&serde_json::to_string(&soft).unwrap()).unwrap();
        assert_eq!(back, soft);
    }
}
