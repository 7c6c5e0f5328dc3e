use super::average::aligned_average;
use crate::align::weight_match_align;
use crate::error::{Error, Result};
use crate::nn::NetworkParams;
use crate::symmetry::{TransformKind, TransformOp};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Output of [`merge_many`].
#[derive(Clone, Debug)]
pub struct MergeManyOutput {
    pub merged: NetworkParams,
    pub ops: Vec<TransformOp>,
    pub rounds: usize,
}

/// Weight-matching merge of many models: each model in turn (seeded random order)
/// is matched against the aligned average of all the others, until a full round
/// changes nothing or `max_rounds` is reached.
pub fn merge_many(models: &[NetworkParams], max_rounds: usize, seed: u64) -> Result<MergeManyOutput> {
    let first = models
        .first()
        .ok_or_else(|| Error::Precondition("cannot merge an empty set of models".into()))?;
    for m in &models[1..] {
        first.ensure_same_shape(m)?;
    }
    let mut ops = vec![TransformOp::identity(&first.layer_dims, TransformKind::HardPerm); models.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..models.len()).collect();
    let mut rounds = 0;
    if models.len() > 1 {
        while rounds < max_rounds {
            rounds += 1;
            order.shuffle(&mut rng);
            let mut changed = false;
            for &i in &order {
                let (others, other_ops): (Vec<_>, Vec<_>) = models
                    .iter()
                    .zip(&ops)
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, (m, op))| (m.clone(), op.clone()))
                    .unzip();
                let reference = aligned_average(&others, &other_ops)?;
                let op = weight_match_align(&models[i], &reference)?;
                if op != ops[i] {
                    ops[i] = op;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }
    Ok(MergeManyOutput { merged: aligned_average(models, &ops)?, ops, rounds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::merge::naive_average;
    use crate::nn::{Activation, Arch};
    use crate::symmetry::{apply, random_perm_op};

    #[test]
    fn undoes_planted_permutations() {
        let base = NetworkParams::init(Arch::ElmanRnn, &[3, 10, 2], Activation::Tanh, 1).unwrap();
        let models: Vec<_> = (0..4)
            .map(|i| apply(&random_perm_op(&base.layer_dims, 10 + i), &base).unwrap())
            .collect();
        let out = merge_many(&models, 10, 0).unwrap();
        // Exact plant: every aligned copy is the same network up to one shared relabeling.
        let aligned: Vec<_> = models.iter().zip(&out.ops).map(|(m, op)| apply(op, m).unwrap()).collect();
        for a in &aligned[1..] {
            assert!(a.max_abs_diff(&aligned[0]) < 1e-12);
        }
        assert!(out.merged.max_abs_diff(&aligned[0]) < 1e-12);
    }

    #[test]
    fn single_model_is_returned() {
        let base = NetworkParams::init(Arch::Feedforward, &[3, 5, 2], Activation::Relu, 2).unwrap();
        let out = merge_many(std::slice::from_ref(&base), 5, 0).unwrap();
        assert_eq!(out.merged, naive_average(&[base]).unwrap());
    }
}
