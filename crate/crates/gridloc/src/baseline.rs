//! Supervised keypoint baseline: the same conv/dense backbone as the Q
//! network with a 2-wide head regressing the lesion centroid, trained with
//! mean squared error. Accuracy maps the predicted point to its grid block
//! and asks whether that block overlaps the lesion — the exact analog of the
//! RL success criterion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::grid_env::{overlaps, EnvOpts, GridSpec};
use crate::metrics::{MetricsRow, MetricsSink};
use crate::neuro::loss::{mse_batch_grad, mse_batch_loss};
use crate::neuro::{AdamState, NetSpec, Network, Tensor};

/// Mean pixel coordinate of the nonzero mask pixels, normalized by
/// `(H-1, W-1)` so targets live in [0,1].
pub fn centroid(mask: &[u8], height: usize, width: usize) -> Result<(f64, f64)> {
    let mut count = 0u64;
    let (mut sum_r, mut sum_c) = (0.0f64, 0.0f64);
    for r in 0..height {
        for c in 0..width {
            if mask[r * width + c] != 0 {
                count += 1;
                sum_r += r as f64;
                sum_c += c as f64;
            }
        }
    }
    if count == 0 {
        return Err(Error::Data("centroid of an empty mask".into()));
    }
    Ok((
        sum_r / count as f64 / (height - 1) as f64,
        sum_c / count as f64 / (width - 1) as f64,
    ))
}

/// Per-epoch train/test losses, kept alongside the metrics CSV so the
/// generalization gap can be inspected.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLoss {
    pub epoch: u32,
    pub train_mse: f64,
    pub test_mse: f64,
}

#[derive(Debug)]
pub struct BaselineOutcome {
    pub net: Network<f32>,
    pub losses: Vec<EpochLoss>,
}

/// Baseline trainer configuration (defaults: 90 epochs, lr 1e-4, batch 16).
#[derive(Clone, Copy, Debug)]
pub struct BaselineParams {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            epochs: 90,
            lr: 1e-4,
            batch: 16,
            seed: 7,
        }
    }
}

/// Train the keypoint regressor: one epoch is one full shuffled pass in
/// batches of `batch`. After each epoch the full train/test MSE and the
/// block-mapped test accuracy are recorded.
pub fn train_baseline(
    train_ds: &Dataset,
    test_ds: &Dataset,
    params: BaselineParams,
    opts: EnvOpts,
    sink: &mut dyn MetricsSink,
) -> Result<BaselineOutcome> {
    if train_ds.is_empty() || test_ds.is_empty() {
        return Err(Error::Config("training and test datasets must be non-empty".into()));
    }
    if params.epochs == 0 || params.batch == 0 || params.lr <= 0.0 {
        return Err(Error::Config("baseline epochs/batch/lr must be positive".into()));
    }
    let spec = train_ds.spec;
    let train_x = render_inputs(train_ds, opts)?;
    let test_x = render_inputs(test_ds, opts)?;
    let train_y = targets(train_ds)?;
    let test_y = targets(test_ds)?;

    let (h, w) = (
        spec.image_height / opts.scale,
        spec.image_width / opts.scale,
    );
    let mut net: Network<f32> = Network::init(NetSpec::keypoint(h, w), params.seed);
    let mut adam = AdamState::new(&net.spec, params.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = train_ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = Vec::with_capacity(params.epochs);

    for epoch in 0..params.epochs {
        // Fisher-Yates shuffle, one full pass per epoch
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(params.batch) {
            let x = gather(&train_x, chunk);
            let y = gather_rows(&train_y, chunk);
            let cache = net.forward_batch(&x)?;
            let grad = mse_batch_grad(cache.output(), &y);
            let grads = net.backward_batch(&cache, &grad);
            adam.step(&mut net.params, &grads)?;
        }
        let train_mse = full_mse(&net, &train_x, &train_y)?;
        let test_mse = full_mse(&net, &test_x, &test_y)?;
        losses.push(EpochLoss {
            epoch: epoch as u32 + 1,
            train_mse,
            test_mse,
        });
        let accuracy = accuracy_from_inputs(&net, &test_x, test_ds, opts)?;
        sink.record(MetricsRow {
            step: epoch as u32 + 1,
            epsilon: None,
            mean_reward: None,
            train_loss: Some(train_mse),
            test_accuracy: accuracy,
        });
        log::info!(
            "epoch {:>3}: train mse {:.5} test mse {:.5} test accuracy {:.3}",
            epoch + 1,
            train_mse,
            test_mse,
            accuracy
        );
    }
    Ok(BaselineOutcome { net, losses })
}

/// Fraction of images whose predicted keypoint, clipped to [0,1] and mapped
/// to its containing block, overlaps the lesion.
pub fn baseline_accuracy(net: &Network<f32>, ds: &Dataset, opts: EnvOpts) -> Result<f64> {
    let inputs = render_inputs(ds, opts)?;
    accuracy_from_inputs(net, &inputs, ds, opts)
}

fn accuracy_from_inputs(
    net: &Network<f32>,
    inputs: &Tensor<f32>,
    ds: &Dataset,
    opts: EnvOpts,
) -> Result<f64> {
    let pred = net.forward_batch_nocache(inputs)?;
    let spec = ds.spec;
    let mut hits = 0usize;
    for (i, item) in ds.items.iter().enumerate() {
        let pr = (pred.data()[i * 2] as f64).clamp(0.0, 1.0);
        let pc = (pred.data()[i * 2 + 1] as f64).clamp(0.0, 1.0);
        let block = block_of_normalized(&spec, pr, pc);
        if overlaps(&item.mask, &spec, block, opts.overlap_threshold) {
            hits += 1;
        }
    }
    Ok(hits as f64 / ds.len() as f64)
}

/// Map normalized [0,1] coordinates to the containing grid block, using the
/// same pixel-to-block mapping as the environment.
pub fn block_of_normalized(spec: &GridSpec, r: f64, c: f64) -> crate::grid_env::AgentPos {
    let pr = (r * (spec.image_height - 1) as f64).floor() as usize;
    let pc = (c * (spec.image_width - 1) as f64).floor() as usize;
    spec.block_of_pixel(pr, pc)
}

/// Render every case with the agent parked at the start block; the baseline
/// sees the same 2-channel encoding as the Q network.
fn render_inputs(ds: &Dataset, opts: EnvOpts) -> Result<Tensor<f32>> {
    let envs = crate::agent_dqn::build_envs(ds, opts)?;
    let (h, w) = envs[0].render_dims();
    let mut data = Vec::with_capacity(ds.len() * 2 * h * w);
    for env in &envs {
        let s: Tensor<f32> = crate::grid_env::render_for(env, crate::grid_env::AgentPos::START);
        data.extend_from_slice(s.data());
    }
    Ok(Tensor::from_vec(&[ds.len(), 2, h, w], data))
}

fn targets(ds: &Dataset) -> Result<Tensor<f32>> {
    let mut data = Vec::with_capacity(ds.len() * 2);
    for item in &ds.items {
        let (r, c) = centroid(&item.mask, ds.spec.image_height, ds.spec.image_width)
            .map_err(|e| Error::Data(format!("case `{}`: {e}", item.case_id)))?;
        data.push(r as f32);
        data.push(c as f32);
    }
    Ok(Tensor::from_vec(&[ds.len(), 2], data))
}

fn gather(x: &Tensor<f32>, idx: &[usize]) -> Tensor<f32> {
    let sample: usize = x.shape()[1..].iter().product();
    let mut shape = x.shape().to_vec();
    shape[0] = idx.len();
    let mut data = Vec::with_capacity(idx.len() * sample);
    for &i in idx {
        data.extend_from_slice(&x.data()[i * sample..(i + 1) * sample]);
    }
    Tensor::from_vec(&shape, data)
}

fn gather_rows(y: &Tensor<f32>, idx: &[usize]) -> Tensor<f32> {
    gather(y, idx)
}

fn full_mse(net: &Network<f32>, x: &Tensor<f32>, y: &Tensor<f32>) -> Result<f64> {
    let pred = net.forward_batch_nocache(x)?;
    Ok(mse_batch_loss(&pred, y) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::{generate_cases, CaseItem, SynthConfig};
    use crate::metrics::{Method, RunMetrics};

    #[test]
    fn centroid_single_pixel() {
        let mut mask = vec![0u8; 240 * 240];
        mask[130 * 240 + 130] = 1;
        let (r, c) = centroid(&mask, 240, 240).unwrap();
        assert_eq!(r, 130.0 / 239.0);
        assert_eq!(c, 130.0 / 239.0);
    }

    #[test]
    fn centroid_symmetric_blob_is_centered() {
        let (h, w) = (240usize, 240usize);
        let mut mask = vec![0u8; h * w];
        // symmetric about the image center (119.5, 119.5)
        for r in 100..140 {
            for c in 90..150 {
                mask[r * w + c] = 1;
            }
        }
        let (cr, cc) = centroid(&mask, h, w).unwrap();
        assert!((cr - 0.5).abs() < 1e-12);
        assert!((cc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn centroid_matches_scalar_loop_reference() {
        let cfg = SynthConfig {
            count: 3,
            seed: 17,
            ..SynthConfig::default()
        };
        let (items, _, _) = generate_cases(&cfg).unwrap();
        for item in &items {
            let (r, c) = centroid(&item.mask, 240, 240).unwrap();
            // independent reference
            let mut n = 0f64;
            let (mut sr, mut sc) = (0f64, 0f64);
            for (i, &m) in item.mask.iter().enumerate() {
                if m != 0 {
                    n += 1.0;
                    sr += (i / 240) as f64;
                    sc += (i % 240) as f64;
                }
            }
            assert!((r - sr / n / 239.0).abs() < 1e-12);
            assert!((c - sc / n / 239.0).abs() < 1e-12);
        }
    }

    #[test]
    fn centroid_empty_mask_is_data_error() {
        let mask = vec![0u8; 16];
        assert!(centroid(&mask, 4, 4).is_err());
    }

    #[test]
    fn backbone_parameter_counts_match_dqn() {
        let dqn = NetSpec::dqn(60, 60);
        let kp = NetSpec::keypoint(60, 60);
        let count = |spec: &NetSpec, skip_head: bool| -> usize {
            let descs = spec.param_descs();
            let end = if skip_head { descs.len() - 2 } else { descs.len() };
            descs[..end]
                .iter()
                .map(|d| d.shape.iter().product::<usize>())
                .sum()
        };
        assert_eq!(count(&dqn, true), count(&kp, true));
        assert_ne!(count(&dqn, false), count(&kp, false));
    }

    fn tiny_dataset(count: usize, seed: u64) -> Dataset {
        let cfg = SynthConfig {
            count,
            seed,
            height: 120,
            width: 120,
            block_size: 30,
            semi_axis: (8.0, 20.0),
            ..SynthConfig::default()
        };
        let (items, _, spec) = generate_cases(&cfg).unwrap();
        Dataset { items, spec }
    }

    #[test]
    fn perfect_predictor_scores_one() {
        // feed the true centroids through the accuracy criterion directly
        let ds = tiny_dataset(12, 9);
        let spec = ds.spec;
        for item in &ds.items {
            let (r, c) = centroid(&item.mask, spec.image_height, spec.image_width).unwrap();
            let block = block_of_normalized(&spec, r, c);
            assert!(
                overlaps(&item.mask, &spec, block, 1),
                "centroid block misses lesion for {}",
                item.case_id
            );
        }
    }

    #[test]
    fn constant_origin_predictor_scores_zero() {
        // zero network predicts (0,0): block (0,0) never holds a lesion
        let ds = tiny_dataset(8, 13);
        let net: Network<f32> = Network::zeros(NetSpec::keypoint(120, 120));
        let acc = baseline_accuracy(&net, &ds, EnvOpts::default()).unwrap();
        assert_eq!(acc, 0.0);
    }

    #[test]
    fn accuracy_is_order_invariant() {
        let ds = tiny_dataset(10, 3);
        let net: Network<f32> = Network::init(NetSpec::keypoint(120, 120), 5);
        let a1 = baseline_accuracy(&net, &ds, EnvOpts::default()).unwrap();
        let mut rev = ds.clone();
        rev.items.reverse();
        let a2 = baseline_accuracy(&net, &rev, EnvOpts::default()).unwrap();
        assert_eq!(a1, a2);
    }

    #[test]
    fn training_is_deterministic() {
        let ds = tiny_dataset(6, 77);
        let (train_ds, test_ds) = crate::data_io::split(ds, 4, 1).unwrap();
        let params = BaselineParams {
            epochs: 3,
            ..BaselineParams::default()
        };
        let run = || {
            let mut m = RunMetrics::new(Method::Supervised);
            let out =
                train_baseline(&train_ds, &test_ds, params, EnvOpts::default(), &mut m).unwrap();
            (m.rows, out.losses, out.net.params)
        };
        let (r1, l1, p1) = run();
        let (r2, l2, p2) = run();
        assert_eq!(r1, r2);
        assert_eq!(l1, l2);
        assert_eq!(p1, p2);
        assert!(r1[0].epsilon.is_none());
        assert!(r1[0].train_loss.is_some());
    }

    #[test]
    fn overfit_regime_two_images() {
        // capacity far exceeds two samples: the train loss descends
        // monotonically (step size small enough to avoid momentum ringing)
        let ds = tiny_dataset(4, 31);
        let (train_ds, test_ds) = crate::data_io::split(ds, 2, 5).unwrap();
        let params = BaselineParams {
            epochs: 15,
            lr: 1e-5,
            ..BaselineParams::default()
        };
        let mut m = RunMetrics::new(Method::Supervised);
        let out = train_baseline(&train_ds, &test_ds, params, EnvOpts::default(), &mut m).unwrap();
        let losses: Vec<f64> = out.losses.iter().map(|l| l.train_mse).collect();
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "train loss rose: {losses:?}");
        }
        assert!(losses.last().unwrap() < &(losses[0] * 0.5));
    }

    #[test]
    fn empty_dataset_is_config_error() {
        let ds = tiny_dataset(4, 31);
        let empty = Dataset {
            items: vec![],
            spec: ds.spec,
        };
        let mut m = RunMetrics::new(Method::Supervised);
        assert!(train_baseline(
            &empty,
            &ds,
            BaselineParams::default(),
            EnvOpts::default(),
            &mut m
        )
        .is_err());
    }

    #[test]
    fn excluded_empty_mask_cases_error_with_id() {
        let ds = tiny_dataset(2, 31);
        let mut bad = ds.clone();
        bad.items.push(CaseItem {
            case_id: "broken".into(),
            image: vec![0.0; 120 * 120],
            mask: vec![0; 120 * 120],
        });
        let mut m = RunMetrics::new(Method::Supervised);
        let err = train_baseline(
            &bad,
            &ds,
            BaselineParams {
                epochs: 1,
                ..BaselineParams::default()
            },
            EnvOpts::default(),
            &mut m,
        )
        .unwrap_err();
        assert!(err.to_string().contains("broken"), "{err}");
    }
}
