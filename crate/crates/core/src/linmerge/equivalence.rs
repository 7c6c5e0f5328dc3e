use crate::error::Result;
use crate::lqg::{is_degenerate, LinearPolicy};
use crate::linalg::{lstsq, spectral_radius, randn_matrix, Matrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::state::check_policies;

/// Best transform between two policies and whether it certifies equivalence.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceWitness {
    pub equivalent: bool,
    pub loss: f64,
    pub transform: Matrix,
}

/// Minimizes `||P A_1 - A_2 P||^2 + ||P B_1 - B_2||^2 + ||C_1 - C_2 P||^2` over all `P`.
///
/// The objective is a linear least-squares problem in `vec(P)`; equivalence needs a
/// small loss and a nonsingular minimizer.
pub fn policy_equivalent(p1: &LinearPolicy, p2: &LinearPolicy, tol: f64) -> Result<EquivalenceWitness> {
    check_policies(&[p1.clone(), p2.clone()])?;
    let k = p1.latent_dim();
    let (q, m) = (p1.obs_dim(), p1.act_dim());
    let eye = Matrix::identity(k, k);
    // Column-major vec: vec(X P Y) = (Y' ⊗ X) vec(P).
    let blocks = [
        p1.a.transpose().kronecker(&eye) - eye.kronecker(&p2.a),
        p1.b.transpose().kronecker(&eye),
        eye.kronecker(&p2.c),
    ];
    let rows = k * k + k * q + m * k;
    let mut lhs = Matrix::zeros(rows, k * k);
    let mut rhs = Matrix::zeros(rows, 1);
    let mut at = 0;
    for blk in &blocks {
        lhs.view_mut((at, 0), (blk.nrows(), k * k)).copy_from(blk);
        at += blk.nrows();
    }
    rhs.view_mut((k * k, 0), (k * q, 1)).copy_from(&Matrix::from_column_slice(k * q, 1, p2.b.as_slice()));
    rhs.view_mut((k * k + k * q, 0), (m * k, 1)).copy_from(&Matrix::from_column_slice(m * k, 1, p1.c.as_slice()));
    let vec_p = lstsq(&lhs, &rhs);
    let transform = Matrix::from_column_slice(k, k, vec_p.as_slice());
    let loss = (&transform * &p1.a - &p2.a * &transform).norm_squared()
        + (&transform * &p1.b - &p2.b).norm_squared()
        + (&p1.c - &p2.c * &transform).norm_squared();
    Ok(EquivalenceWitness { equivalent: loss < tol && !is_degenerate(&transform), loss, transform })
}

/// Odd-dimensional pair related only by `T = -I`: `(A, B, C)` and `(A, -B, -C)` with
/// `A = diag(1.1, 0.9, 0.8)`. No permutation has negative determinant, so permutation
/// alignment cannot bring them together.
pub fn sign_flip_pair(obs_dim: usize, act_dim: usize, seed: u64) -> (LinearPolicy, LinearPolicy) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Matrix::from_diagonal(&crate::linalg::Vector::from_vec(vec![1.1, 0.9, 0.8]));
    debug_assert!(spectral_radius(&a) > 1.0);
    let pol = LinearPolicy { a, b: randn_matrix(&mut rng, 3, obs_dim), c: randn_matrix(&mut rng, act_dim, 3) };
    let flipped = LinearPolicy { a: pol.a.clone(), b: -&pol.b, c: -&pol.c };
    (pol, flipped)
}
