//! Central finite-difference verification of the analytic gradients.
//!
//! The check objective is `L = v . f(x)` for a fixed random direction `v`;
//! its analytic gradient is one backward pass, and each checked parameter is
//! verified against `(L(p+h) - L(p-h)) / 2h` in 64-bit arithmetic.

use rand::seq::index::sample as index_sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;
use super::{NetSpec, Network};

/// Default central-difference perturbation.
pub const FD_PERTURBATION: f64 = 1e-5;

/// Relative error denominator floor. Entries whose analytic and numeric
/// magnitudes both sit below this scale are measured against the floor, so
/// finite-difference noise on near-zero gradients does not dominate the
/// report. Identically-zero pairs still report exactly 0.
pub const REL_ERR_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct TensorGradReport {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    /// (analytic, numeric) at the worst entry.
    pub worst: (f64, f64),
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorGradReport>,
    pub max_rel_err: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for t in &self.tensors {
            writeln!(
                f,
                "{:<16} checked {:>6}  max rel err {:.3e}  (analytic {:.6e}, numeric {:.6e})",
                t.name, t.checked, t.max_rel_err, t.worst.0, t.worst.1
            )?;
        }
        write!(f, "overall max rel err {:.3e}", self.max_rel_err)
    }
}

/// Compare analytic gradients with central finite differences on a seeded
/// random input/direction. `samples_per_tensor = None` checks every
/// parameter; `Some(n)` checks a seeded subsample of `n` entries per tensor
/// (biases are always checked in full when they fit the budget).
pub fn gradient_check(
    spec: &NetSpec,
    seed: u64,
    samples_per_tensor: Option<usize>,
    perturbation: f64,
) -> GradCheckReport {
    let net: Network<f64> = Network::init(spec.clone(), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    let (c, h, w) = spec.input;
    let input = Tensor::from_vec(
        &[1, c, h, w],
        (0..c * h * w).map(|_| rng.gen_range(0.0..1.0)).collect(),
    );
    let direction: Vec<f64> = (0..spec.output_dim())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    gradient_check_at(&net, &input, &direction, &mut rng, samples_per_tensor, perturbation)
}

/// The same check on a caller-supplied network, input and direction.
pub fn gradient_check_at(
    net: &Network<f64>,
    input: &Tensor<f64>,
    direction: &[f64],
    rng: &mut ChaCha8Rng,
    samples_per_tensor: Option<usize>,
    perturbation: f64,
) -> GradCheckReport {
    let cache = net.forward_batch(input).expect("input shape mismatch");
    let g = Tensor::from_vec(&[1, direction.len()], direction.to_vec());
    let analytic = net.backward_batch(&cache, &g);

    let mut probe = net.clone();
    let descs = net.spec.param_descs();
    let mut reports = Vec::new();
    let mut overall: f64 = 0.0;
    for (ti, desc) in descs.iter().enumerate() {
        let len = net.params.tensors[ti].len();
        let indices: Vec<usize> = match samples_per_tensor {
            Some(n) if n < len => index_sample(rng, len, n).into_vec(),
            _ => (0..len).collect(),
        };
        let mut worst = (0.0f64, (0.0, 0.0));
        for &pi in &indices {
            let orig = probe.params.tensors[ti].data()[pi];
            probe.params.tensors[ti].data_mut()[pi] = orig + perturbation;
            let lp = objective(&probe, input, direction);
            probe.params.tensors[ti].data_mut()[pi] = orig - perturbation;
            let lm = objective(&probe, input, direction);
            probe.params.tensors[ti].data_mut()[pi] = orig;
            let numeric = (lp - lm) / (2.0 * perturbation);
            let a = analytic.tensors[ti].data()[pi];
            let rel = rel_err(a, numeric);
            if rel > worst.0 {
                worst = (rel, (a, numeric));
            }
        }
        overall = overall.max(worst.0);
        reports.push(TensorGradReport {
            name: desc.name.clone(),
            checked: indices.len(),
            max_rel_err: worst.0,
            worst: worst.1,
        });
    }
    GradCheckReport {
        tensors: reports,
        max_rel_err: overall,
    }
}

fn objective(net: &Network<f64>, input: &Tensor<f64>, direction: &[f64]) -> f64 {
    let out = net.forward_batch_nocache(input).expect("input shape mismatch");
    out.data()
        .iter()
        .zip(direction)
        .map(|(&q, &v)| q * v)
        .sum()
}

fn rel_err(a: f64, n: f64) -> f64 {
    let denom = a.abs().max(n.abs()).max(REL_ERR_FLOOR);
    (a - n).abs() / denom
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuro::LayerSpec;

    fn dense_toy() -> NetSpec {
        NetSpec {
            input: (1, 2, 3),
            layers: vec![
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    in_features: 6,
                    out_features: 5,
                },
                LayerSpec::Elu,
                LayerSpec::Dense {
                    in_features: 5,
                    out_features: 3,
                },
            ],
        }
    }

    #[test]
    fn dense_only_toy_net_passes_tightly() {
        let report = gradient_check(&dense_toy(), 7, None, FD_PERTURBATION);
        assert!(
            report.max_rel_err < 1e-6,
            "max rel err {:.3e}\n{report}",
            report.max_rel_err
        );
    }

    #[test]
    fn small_conv_net_passes() {
        let spec = NetSpec::dqn(12, 12);
        let report = gradient_check(&spec, 3, Some(40), FD_PERTURBATION);
        assert!(
            report.max_rel_err < 1e-4,
            "max rel err {:.3e}\n{report}",
            report.max_rel_err
        );
        // every parameter tensor was exercised
        assert_eq!(report.tensors.len(), spec.param_descs().len());
    }

    #[test]
    fn zero_net_zero_input_reports_exact_zero() {
        let spec = dense_toy();
        let net: Network<f64> = Network::zeros(spec.clone());
        let input = Tensor::zeros(&[1, 1, 2, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let report =
            gradient_check_at(&net, &input, &[1.0, -1.0, 0.5], &mut rng, None, FD_PERTURBATION);
        // gradients of the first dense layer are identically zero (zero input,
        // zero downstream weights); the report must show exactly 0 there
        assert_eq!(report.tensors[0].max_rel_err, 0.0);
        assert_eq!(report.tensors[0].worst, (0.0, 0.0));
    }
}
