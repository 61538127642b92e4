use crate::error::{Error, Result};

use super::tensor::{Real, Tensor};
use super::{NetParams, NetSpec};

/// Adam optimizer state: per-parameter moment accumulators plus step count.
#[derive(Clone, Debug)]
pub struct AdamState<F> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// First-moment accumulators, one per parameter tensor.
    m: Vec<Tensor<F>>,
    /// Second-moment accumulators.
    v: Vec<Tensor<F>>,
    /// Completed steps; strictly increases.
    t: u64,
}

impl<F: Real> AdamState<F> {
    pub fn new(spec: &NetSpec, lr: f64) -> Self {
        let zeros = || NetParams::<F>::zeros(spec).tensors;
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One Adam update with bias correction. Rejects non-finite gradients,
    /// naming the offending tensor.
    pub fn step(&mut self, params: &mut NetParams<F>, grads: &NetParams<F>) -> Result<()> {
        assert_eq!(params.tensors.len(), grads.tensors.len());
        for (i, g) in grads.tensors.iter().enumerate() {
            if !g.all_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite gradient in parameter tensor {i} at step {}",
                    self.t + 1
                )));
            }
        }
        self.t += 1;
        let b1 = F::from_f64(self.beta1);
        let b2 = F::from_f64(self.beta2);
        let one = F::one();
        let bc1 = F::from_f64(1.0 - self.beta1.powi(self.t as i32));
        let bc2 = F::from_f64(1.0 - self.beta2.powi(self.t as i32));
        let lr = F::from_f64(self.lr);
        let eps = F::from_f64(self.eps);
        for ((p, g), (m, v)) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for ((pv, &gv), (mv, vv)) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
            {
                *mv = b1 * *mv + (one - b1) * gv;
                *vv = b2 * *vv + (one - b2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv = *pv - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuro::Network;

    fn toy_spec() -> NetSpec {
        NetSpec {
            input: (1, 1, 1),
            layers: vec![
                super::super::LayerSpec::Flatten,
                super::super::LayerSpec::Dense {
                    in_features: 1,
                    out_features: 4,
                },
            ],
        }
    }

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut net: Network<f64> = Network::init(toy_spec(), 1);
        let before = net.params.clone();
        let grads = NetParams::zeros(&net.spec);
        let mut adam = AdamState::new(&net.spec, 1e-4);
        adam.step(&mut net.params, &grads).unwrap();
        adam.step(&mut net.params, &grads).unwrap();
        assert_eq!(net.params, before);
        assert_eq!(adam.step_count(), 2);
    }

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        // closed form: with m = g, v = g^2 and bias correction, the first
        // update moves each parameter by lr * g / (|g| + eps') ~ lr * sign(g)
        let mut net: Network<f64> = Network::zeros(toy_spec());
        let mut grads = NetParams::zeros(&net.spec);
        for t in &mut grads.tensors {
            t.fill(0.5);
        }
        let mut adam = AdamState::new(&net.spec, 1e-4);
        adam.step(&mut net.params, &grads).unwrap();
        for t in &net.params.tensors {
            for &p in t.data() {
                assert!((p + 1e-4).abs() < 1e-9, "step magnitude {p}");
            }
        }
    }

    #[test]
    fn non_finite_gradient_is_numerical_error() {
        let mut net: Network<f64> = Network::zeros(toy_spec());
        let mut grads = NetParams::zeros(&net.spec);
        grads.tensors[0].data_mut()[0] = f64::NAN;
        let mut adam = AdamState::new(&net.spec, 1e-4);
        let err = adam.step(&mut net.params, &grads).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }

    #[test]
    fn steps_are_reproducible() {
        let run = || {
            let mut net: Network<f64> = Network::init(toy_spec(), 9);
            let mut adam = AdamState::new(&net.spec, 1e-3);
            for k in 0..2 {
                let mut grads = NetParams::zeros(&net.spec);
                for t in &mut grads.tensors {
                    t.fill(0.25 * (k as f64 + 1.0));
                }
                adam.step(&mut net.params, &grads).unwrap();
            }
            net.params
        };
        assert_eq!(run(), run());
    }
}
