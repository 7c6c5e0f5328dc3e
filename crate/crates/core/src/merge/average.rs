use crate::error::{Error, Result};
use crate::nn::NetworkParams;
use crate::symmetry::{apply, TransformOp};

/// Coordinatewise mean of the models.
pub fn naive_average(models: &[NetworkParams]) -> Result<NetworkParams> {
    let first = models
        .first()
        .ok_or_else(|| Error::Precondition("cannot average an empty set of models".into()))?;
    let mut sum = first.clone();
    for m in &models[1..] {
        first.ensure_same_shape(m)?;
        sum.axpy(1.0, m);
    }
    sum.scale(1.0 / models.len() as f64);
    Ok(sum)
}

/// Mean of `op_i(model_i)`.
pub fn aligned_average(models: &[NetworkParams], ops: &[TransformOp]) -> Result<NetworkParams> {
    if models.len() != ops.len() {
        return Err(Error::DimensionMismatch {
            context: "transforms per model",
            expected: models.len().to_string(),
            got: ops.len().to_string(),
        });
    }
    let moved = models
        .iter()
        .zip(ops)
        .map(|(m, op)| apply(op, m))
        .collect::<Result<Vec<_>>>()?;
    naive_average(&moved)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Arch};
    use crate::symmetry::{random_perm_op, TransformKind};

    fn net(seed: u64) -> NetworkParams {
        NetworkParams::init(Arch::ElmanRnn, &[3, 5, 2], Activation::Tanh, seed).unwrap()
    }

    #[test]
    fn identical_models_average_to_themselves() {
        let a = net(1);
        let avg = naive_average(&[a.clone(), a.clone(), a.clone()]).unwrap();
        assert!(avg.max_abs_diff(&a) < 1e-15);
    }

    #[test]
    fn opposite_models_cancel() {
        let a = net(2);
        let mut b = a.clone();
        b.scale(-1.0);
        assert_eq!(naive_average(&[a, b]).unwrap().sq_norm(), 0.0);
    }

    #[test]
    fn matches_entrywise_mean() {
        let models = [net(1), net(2), net(3)];
        let avg = naive_average(&models).unwrap().to_flat();
        let flats: Vec<Vec<f64>> = models.iter().map(|m| m.to_flat()).collect();
        for (k, v) in avg.iter().enumerate() {
            let oracle = (flats[0][k] + flats[1][k] + flats[2][k]) / 3.0;
            assert!((v - oracle).abs() < 1e-15);
        }
    }

    #[test]
    fn aligned_average_undoes_plant() {
        let a = net(4);
        let plant = random_perm_op(&a.layer_dims, 3);
        let b = apply(&plant, &a).unwrap();
        let id = TransformOp::identity(&a.layer_dims, TransformKind::HardPerm);
        let merged = aligned_average(&[a.clone(), b], &[id.clone(), plant.inverse().unwrap()]).unwrap();
        assert!(merged.max_abs_diff(&a) < 1e-15);
        let plain = aligned_average(&[a.clone(), net(5)], &[id.clone(), id]).unwrap();
        assert_eq!(plain, naive_average(&[a, net(5)]).unwrap());
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let other = NetworkParams::init(Arch::ElmanRnn, &[3, 6, 2], Activation::Tanh, 0).unwrap();
        assert!(naive_average(&[net(0), other]).is_err());
        assert!(naive_average(&[]).is_err());
    }
}
