use crate::error::{Error, Result};
use crate::nn::{dataset_loss, NetworkParams, Trajectory};
use serde::{Deserialize, Serialize};

pub const DEFAULT_GRID: usize = 21;

/// Values along the segment between two parameter vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierReport {
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
    pub barrier: f64,
}

/// Parameter types that can be linearly interpolated.
pub trait Interpolate: Sized {
    /// `wa * a + wb * b`; must be exactly symmetric under swapping the pairs.
    fn combine(a: &Self, wa: f64, b: &Self, wb: f64) -> Result<Self>;
}

impl Interpolate for NetworkParams {
    fn combine(a: &Self, wa: f64, b: &Self, wb: f64) -> Result<Self> {
        NetworkParams::combine(a, wa, b, wb)
    }
}

/// Evaluates `f((1 - λ) a + λ b)` on `grid_size` evenly spaced λ including both ends.
fn sweep<T: Interpolate>(
    a: &T,
    b: &T,
    grid_size: usize,
    mut f: impl FnMut(&T) -> Result<f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if grid_size < 2 {
        return Err(Error::Invalid("barrier grid needs at least 2 points".into()));
    }
    let steps = (grid_size - 1) as f64;
    let mut lambdas = Vec::with_capacity(grid_size);
    let mut values = Vec::with_capacity(grid_size);
    for k in 0..grid_size {
        let wb = k as f64 / steps;
        let wa = (grid_size - 1 - k) as f64 / steps;
        let mixed = T::combine(a, wa, b, wb)?;
        let v = f(&mixed)?;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("barrier value at lambda = {wb}")));
        }
        lambdas.push(wb);
        values.push(v);
    }
    Ok((lambdas, values))
}

/// `max_λ L((1-λ)θ + λθ') - (L(θ) + L(θ')) / 2`, with `L` summed over the dataset.
pub fn loss_barrier(
    theta_a: &NetworkParams,
    theta_b: &NetworkParams,
    data: &[Trajectory],
    grid_size: usize,
) -> Result<BarrierReport> {
    theta_a.ensure_same_shape(theta_b)?;
    let (lambdas, values) = sweep(theta_a, theta_b, grid_size, |m| dataset_loss(m, data))?;
    let ends = 0.5 * (values[0] + values[values.len() - 1]);
    let peak = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(BarrierReport {
        lambdas,
        values,
        barrier: peak - ends,
    })
}

/// `max_λ (T(θ) + T(θ')) / 2 - T((1-λ)θ + λθ')` for a performance measure `T` (higher is better).
pub fn performance_barrier<T: Interpolate>(
    theta_a: &T,
    theta_b: &T,
    evaluator: impl FnMut(&T) -> Result<f64>,
    grid_size: usize,
) -> Result<BarrierReport> {
    let (lambdas, values) = sweep(theta_a, theta_b, grid_size, evaluator)?;
    let ends = 0.5 * (values[0] + values[values.len() - 1]);
    let low = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(BarrierReport {
        lambdas,
        values,
        barrier: ends - low,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Matrix, Vector};
    use crate::nn::{Activation, Arch};

    fn scalar_net(w: f64) -> NetworkParams {
        let mut n = NetworkParams::zeros(Arch::Feedforward, &[1, 1], Activation::Identity).unwrap();
        n.layers[0].w_ff = Matrix::from_element(1, 1, w);
        n
    }

    #[test]
    fn self_barrier_is_zero() {
        let net = NetworkParams::init(Arch::ElmanRnn, &[2, 4, 1], Activation::Tanh, 0).unwrap();
        let data = vec![Trajectory::new(vec![Vector::from_vec(vec![1.0, -1.0]); 3], vec![Vector::from_vec(vec![0.5]); 3]).unwrap()];
        let r = loss_barrier(&net, &net, &data, DEFAULT_GRID).unwrap();
        assert_eq!(r.barrier, 0.0);
        assert_eq!(r.lambdas.len(), 21);
    }

    #[test]
    fn quadratic_toy_by_hand() {
        // Scalar model a = w o with o = 1, target 0: L(w) = w^2. Endpoints w = 1 and w = -1.
        // The peak is at an endpoint (1), so the barrier is 1 - 1 = 0; the midpoint value is 0.
        let data = vec![Trajectory::new(vec![Vector::from_vec(vec![1.0])], vec![Vector::from_vec(vec![0.0])]).unwrap()];
        let r = loss_barrier(&scalar_net(1.0), &scalar_net(-1.0), &data, 3).unwrap();
        assert_eq!(r.values, vec![1.0, 0.0, 1.0]);
        assert_eq!(r.barrier, 0.0);
        // Target 1 with endpoints w = 1 and w = 3: L = (w - 1)^2 -> 0, 1, 4 at λ = 0, 0.5, 1.
        let data = vec![Trajectory::new(vec![Vector::from_vec(vec![1.0])], vec![Vector::from_vec(vec![1.0])]).unwrap()];
        let r = loss_barrier(&scalar_net(1.0), &scalar_net(3.0), &data, 3).unwrap();
        assert_eq!(r.values, vec![0.0, 1.0, 4.0]);
        assert_eq!(r.barrier, 2.0);
    }

    #[test]
    fn barrier_is_symmetric_in_its_arguments() {
        let a = NetworkParams::init(Arch::ElmanRnn, &[2, 5, 2], Activation::Tanh, 1).unwrap();
        let b = NetworkParams::init(Arch::ElmanRnn, &[2, 5, 2], Activation::Tanh, 2).unwrap();
        let data = vec![Trajectory::new(vec![Vector::from_vec(vec![0.3, -1.0]); 4], vec![Vector::from_vec(vec![1.0, 0.0]); 4]).unwrap()];
        let ab = loss_barrier(&a, &b, &data, DEFAULT_GRID).unwrap();
        let ba = loss_barrier(&b, &a, &data, DEFAULT_GRID).unwrap();
        assert_eq!(ab.barrier, ba.barrier);
    }

    #[test]
    fn performance_barrier_identities() {
        let a = NetworkParams::init(Arch::Feedforward, &[2, 3, 1], Activation::Tanh, 1).unwrap();
        let b = NetworkParams::init(Arch::Feedforward, &[2, 3, 1], Activation::Tanh, 2).unwrap();
        assert_eq!(performance_barrier(&a, &b, |_| Ok(3.0), DEFAULT_GRID).unwrap().barrier, 0.0);
        // Linear measure with equal endpoint values: the segment is flat.
        let mut c = NetworkParams::init(Arch::Feedforward, &[2, 3, 1], Activation::Tanh, 9).unwrap();
        let mut d = b.clone();
        d.axpy(-1.0, &a);
        c.axpy(-c.dot(&d) / d.sq_norm(), &d);
        let linear = |m: &NetworkParams| Ok(m.dot(&c));
        assert!(performance_barrier(&a, &b, linear, DEFAULT_GRID).unwrap().barrier.abs() < 1e-12);
        // With unequal endpoints the definition gives half the endpoint gap.
        let e = NetworkParams::init(Arch::Feedforward, &[2, 3, 1], Activation::Tanh, 10).unwrap();
        let (ta, tb) = (a.dot(&e), b.dot(&e));
        let r = performance_barrier(&a, &b, |m: &NetworkParams| Ok(m.dot(&e)), DEFAULT_GRID).unwrap();
        assert!((r.barrier - 0.5 * (ta - tb).abs()).abs() < 1e-12);
        assert!(loss_barrier(&a, &a, &[], 2).unwrap().barrier == 0.0);
    }

    #[test]
    fn grid_must_have_endpoints() {
        let a = scalar_net(1.0);
        assert!(loss_barrier(&a, &a, &[], 1).is_err());
    }
}
