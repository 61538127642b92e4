//! Minimal differentiable network: 3x3/stride-2 convolutions, ELU, dense
//! layers, with hand-written backpropagation. No autograd graph — exactly the
//! layer kinds the Q network and the keypoint baseline need.
//!
//! Everything is generic over [`Real`]: training uses `f32`, gradient
//! verification runs the same code in `f64`.

pub mod adam;
pub mod checkpoint;
pub mod gemm;
pub mod gradcheck;
pub mod loss;
pub mod tensor;

pub use adam::AdamState;
pub use gradcheck::{gradient_check, GradCheckReport};
pub use tensor::{Real, Tensor};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Convolution kernel edge; all conv layers use 3x3 kernels.
pub const CONV_KERNEL: usize = 3;
/// Convolution stride; all conv layers halve spatial dims (ceil).
pub const CONV_STRIDE: usize = 2;
/// Filter count produced by every convolution stage.
pub const CONV_CHANNELS: usize = 32;

/// One layer of the network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    /// 3x3 convolution, stride 2, same-style padding (output = ceil(input/2)).
    Conv { in_channels: usize, out_channels: usize },
    Elu,
    Flatten,
    Dense { in_features: usize, out_features: usize },
}

/// Ordered layer list plus the expected input shape (channels, height, width).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetSpec {
    pub input: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
}

/// Spatial output size of one stride-2 conv: ceil(n / 2).
pub fn conv_out(n: usize) -> usize {
    n.div_ceil(CONV_STRIDE)
}

/// Same-style padding for stride 2: total pad so output = ceil(in/2),
/// with any odd leftover on the bottom/right side.
fn pad_split(input: usize) -> (usize, usize) {
    let out = conv_out(input);
    let total = ((out - 1) * CONV_STRIDE + CONV_KERNEL).saturating_sub(input);
    (total / 2, total - total / 2)
}

impl NetSpec {
    /// Shared conv/dense stack with a configurable output head width.
    /// Head 3 is the Q network (one value per action); head 2 is the
    /// keypoint regressor (normalized row, col).
    pub fn with_head(channels: usize, height: usize, width: usize, head: usize) -> Self {
        let mut layers = Vec::new();
        let (mut h, mut w) = (height, width);
        let mut c = channels;
        for _ in 0..4 {
            layers.push(LayerSpec::Conv {
                in_channels: c,
                out_channels: CONV_CHANNELS,
            });
            layers.push(LayerSpec::Elu);
            c = CONV_CHANNELS;
            h = conv_out(h);
            w = conv_out(w);
        }
        layers.push(LayerSpec::Flatten);
        let mut feat = c * h * w;
        for out in [512usize, 128, 64] {
            layers.push(LayerSpec::Dense {
                in_features: feat,
                out_features: out,
            });
            layers.push(LayerSpec::Elu);
            feat = out;
        }
        layers.push(LayerSpec::Dense {
            in_features: feat,
            out_features: head,
        });
        NetSpec {
            input: (channels, height, width),
            layers,
        }
    }

    /// The Q network: 2-channel state input, 3 Q values out.
    pub fn dqn(height: usize, width: usize) -> Self {
        Self::with_head(2, height, width, 3)
    }

    /// The keypoint baseline: same backbone, 2 outputs (row, col).
    pub fn keypoint(height: usize, width: usize) -> Self {
        Self::with_head(2, height, width, 2)
    }

    pub fn output_dim(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::Dense { out_features, .. }) => *out_features,
            _ => panic!("network must end with a dense layer"),
        }
    }

    /// Per-stage sample shapes: stage 0 is the input, stage i the output of
    /// layer i-1. Panics on inconsistent layer chains.
    pub fn stage_shapes(&self) -> Vec<Vec<usize>> {
        let (c, h, w) = self.input;
        let mut shapes = vec![vec![c, h, w]];
        for layer in &self.layers {
            let prev = shapes.last().unwrap().clone();
            let next = match layer {
                LayerSpec::Conv {
                    in_channels,
                    out_channels,
                } => {
                    assert_eq!(prev.len(), 3, "conv input must be [C,H,W]");
                    assert_eq!(prev[0], *in_channels, "conv in_channels mismatch");
                    vec![*out_channels, conv_out(prev[1]), conv_out(prev[2])]
                }
                LayerSpec::Elu => prev,
                LayerSpec::Flatten => vec![prev.iter().product()],
                LayerSpec::Dense {
                    in_features,
                    out_features,
                } => {
                    assert_eq!(prev, vec![*in_features], "dense in_features mismatch");
                    vec![*out_features]
                }
            };
            shapes.push(next);
        }
        shapes
    }

    /// Named parameter tensors, in layer order. Dense weights are stored
    /// transposed as [in, out]; conv weights as [out_c, in_c, 3, 3].
    pub fn param_descs(&self) -> Vec<ParamDesc> {
        let mut descs = Vec::new();
        let (mut conv_n, mut dense_n) = (0usize, 0usize);
        for layer in &self.layers {
            match layer {
                LayerSpec::Conv {
                    in_channels,
                    out_channels,
                } => {
                    conv_n += 1;
                    descs.push(ParamDesc {
                        name: format!("conv{conv_n}.weight"),
                        shape: vec![*out_channels, *in_channels, CONV_KERNEL, CONV_KERNEL],
                    });
                    descs.push(ParamDesc {
                        name: format!("conv{conv_n}.bias"),
                        shape: vec![*out_channels],
                    });
                }
                LayerSpec::Dense {
                    in_features,
                    out_features,
                } => {
                    dense_n += 1;
                    descs.push(ParamDesc {
                        name: format!("dense{dense_n}.weight"),
                        shape: vec![*in_features, *out_features],
                    });
                    descs.push(ParamDesc {
                        name: format!("dense{dense_n}.bias"),
                        shape: vec![*out_features],
                    });
                }
                LayerSpec::Elu | LayerSpec::Flatten => {}
            }
        }
        descs
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamDesc {
    pub name: String,
    pub shape: Vec<usize>,
}

/// All weight/bias tensors of a network, ordered as in
/// [`NetSpec::param_descs`].
#[derive(Clone, Debug, PartialEq)]
pub struct NetParams<F> {
    pub tensors: Vec<Tensor<F>>,
}

impl<F: Real> NetParams<F> {
    pub fn zeros(spec: &NetSpec) -> Self {
        NetParams {
            tensors: spec
                .param_descs()
                .iter()
                .map(|d| Tensor::zeros(&d.shape))
                .collect(),
        }
    }

    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.all_finite())
    }

    pub fn cast<G: Real>(&self) -> NetParams<G> {
        NetParams {
            tensors: self.tensors.iter().map(|t| t.cast()).collect(),
        }
    }
}

/// A spec plus its parameters; the unit that trains, evaluates and
/// checkpoints.
#[derive(Clone, Debug)]
pub struct Network<F> {
    pub spec: NetSpec,
    pub params: NetParams<F>,
}

/// Activations cached by a forward pass, sufficient for backward.
/// `stages[0]` is the input batch; `stages[i]` the output of layer `i-1`.
pub struct BatchCache<F> {
    batch: usize,
    stages: Vec<Tensor<F>>,
}

impl<F: Real> BatchCache<F> {
    /// Network output of the cached pass, shape [batch, out].
    pub fn output(&self) -> &Tensor<F> {
        self.stages.last().unwrap()
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

impl<F: Real> Network<F> {
    /// Fan-in-scaled normal init with unit gain (the LeCun convention that
    /// suits ELU-family activations), zero biases, seeded for reproducible
    /// runs.
    pub fn init(spec: NetSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = Vec::new();
        for desc in spec.param_descs() {
            let mut t = Tensor::zeros(&desc.shape);
            if desc.shape.len() > 1 {
                // dense weights are [in, out]; conv weights [out_c, in_c, kh, kw]
                let fan_in: usize = match desc.shape.len() {
                    2 => desc.shape[0],
                    _ => desc.shape[1..].iter().product(),
                };
                let std = (1.0 / fan_in as f64).sqrt();
                let normal = Normal::new(0.0, std).unwrap();
                for v in t.data_mut() {
                    *v = F::from_f64(normal.sample(&mut rng));
                }
            }
            tensors.push(t);
        }
        Network {
            spec,
            params: NetParams { tensors },
        }
    }

    pub fn zeros(spec: NetSpec) -> Self {
        let params = NetParams::zeros(&spec);
        Network { spec, params }
    }

    fn check_input(&self, input: &Tensor<F>) -> Result<usize> {
        let (c, h, w) = self.spec.input;
        let shape = input.shape();
        if shape.len() == 4 && shape[1] == c && shape[2] == h && shape[3] == w {
            Ok(shape[0])
        } else {
            Err(Error::Config(format!(
                "network input must be [B, {c}, {h}, {w}], got {shape:?}"
            )))
        }
    }

    /// Forward pass over a batch, keeping activations for backward.
    /// Input shape [B, C, H, W]; output shape [B, out].
    pub fn forward_batch(&self, input: &Tensor<F>) -> Result<BatchCache<F>> {
        let batch = self.check_input(input)?;
        let mut stages = Vec::with_capacity(self.spec.layers.len() + 1);
        stages.push(input.clone());
        let mut param_idx = 0usize;
        for layer in &self.spec.layers {
            let prev = stages.last().unwrap();
            let next = self.apply_layer(layer, &mut param_idx, prev, batch);
            stages.push(next);
        }
        Ok(BatchCache { batch, stages })
    }

    /// Forward pass without cache; cheaper for bootstrap targets and rollout.
    pub fn forward_batch_nocache(&self, input: &Tensor<F>) -> Result<Tensor<F>> {
        let batch = self.check_input(input)?;
        let mut cur = input.clone();
        let mut param_idx = 0usize;
        for layer in &self.spec.layers {
            cur = self.apply_layer(layer, &mut param_idx, &cur, batch);
        }
        Ok(cur)
    }

    /// Single-sample forward: returns the output vector and the cache.
    pub fn forward(&self, input: &Tensor<F>) -> Result<(Vec<F>, BatchCache<F>)> {
        let mut shape = vec![1usize];
        shape.extend_from_slice(input.shape());
        let batched = Tensor::from_vec(&shape, input.data().to_vec());
        let cache = self.forward_batch(&batched)?;
        Ok((cache.output().data().to_vec(), cache))
    }

    fn apply_layer(
        &self,
        layer: &LayerSpec,
        param_idx: &mut usize,
        prev: &Tensor<F>,
        batch: usize,
    ) -> Tensor<F> {
        match layer {
            LayerSpec::Conv {
                in_channels,
                out_channels,
            } => {
                let w = &self.params.tensors[*param_idx];
                let b = &self.params.tensors[*param_idx + 1];
                *param_idx += 2;
                conv_forward(prev, w, b, batch, *in_channels, *out_channels)
            }
            LayerSpec::Elu => {
                let mut out = prev.clone();
                for v in out.data_mut() {
                    *v = elu(*v);
                }
                out
            }
            LayerSpec::Flatten => {
                let feat: usize = prev.shape()[1..].iter().product();
                Tensor::from_vec(&[batch, feat], prev.data().to_vec())
            }
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                let wt = &self.params.tensors[*param_idx]; // [in, out]
                let b = &self.params.tensors[*param_idx + 1];
                *param_idx += 2;
                let mut out = Tensor::zeros(&[batch, *out_features]);
                gemm::gemm_nn(
                    batch,
                    *out_features,
                    *in_features,
                    prev.data(),
                    wt.data(),
                    out.data_mut(),
                );
                for row in out.data_mut().chunks_exact_mut(*out_features) {
                    for (o, &bv) in row.iter_mut().zip(b.data()) {
                        *o += bv;
                    }
                }
                out
            }
        }
    }

    /// Backpropagate `output_grad` (shape [B, out]) through the cached pass.
    /// Returns parameter gradients summed over the batch, in a fixed
    /// per-sample order so results are bit-reproducible.
    pub fn backward_batch(&self, cache: &BatchCache<F>, output_grad: &Tensor<F>) -> NetParams<F> {
        let batch = cache.batch;
        let out_dim = self.spec.output_dim();
        assert_eq!(
            output_grad.shape(),
            &[batch, out_dim],
            "output_grad shape must match the cached forward pass"
        );
        let mut grads = NetParams::zeros(&self.spec);
        let mut dcur = output_grad.clone();

        // Parameter index just past the last layer's tensors.
        let mut param_idx = self.params.tensors.len();
        for (li, layer) in self.spec.layers.iter().enumerate().rev() {
            let input = &cache.stages[li];
            let output = &cache.stages[li + 1];
            match layer {
                LayerSpec::Dense {
                    in_features,
                    out_features,
                } => {
                    param_idx -= 2;
                    let (gw, gb) = {
                        let (a, b) = grads.tensors.split_at_mut(param_idx + 1);
                        (&mut a[param_idx], &mut b[0])
                    };
                    // d/dWt[i][o] = sum_b X[b][i] dY[b][o]
                    gemm::gemm_tn(
                        *in_features,
                        *out_features,
                        batch,
                        input.data(),
                        dcur.data(),
                        gw.data_mut(),
                    );
                    for row in dcur.data().chunks_exact(*out_features) {
                        for (g, &dv) in gb.data_mut().iter_mut().zip(row) {
                            *g += dv;
                        }
                    }
                    // dX[b][i] = sum_o dY[b][o] W[o][i]; materialize W from Wt
                    let wt = &self.params.tensors[param_idx];
                    let mut w = vec![F::zero(); wt.len()];
                    gemm::transpose(*in_features, *out_features, wt.data(), &mut w);
                    let mut dx = Tensor::zeros(&[batch, *in_features]);
                    gemm::gemm_nn(
                        batch,
                        *in_features,
                        *out_features,
                        dcur.data(),
                        &w,
                        dx.data_mut(),
                    );
                    dcur = dx;
                }
                LayerSpec::Flatten => {
                    let mut shape = vec![batch];
                    shape.extend_from_slice(&input.shape()[1..]);
                    dcur = Tensor::from_vec(&shape, dcur.data().to_vec());
                }
                LayerSpec::Elu => {
                    // elu'(x) = 1 for x > 0, exp(x) = y + 1 otherwise
                    let mut dx = dcur;
                    for (d, &y) in dx.data_mut().iter_mut().zip(output.data()) {
                        if y <= F::zero() {
                            *d *= y + F::one();
                        }
                    }
                    dcur = dx;
                }
                LayerSpec::Conv {
                    in_channels,
                    out_channels,
                } => {
                    param_idx -= 2;
                    let w = &self.params.tensors[param_idx];
                    let dx = {
                        let (a, b) = grads.tensors.split_at_mut(param_idx + 1);
                        conv_backward(
                            input,
                            &dcur,
                            w,
                            &mut a[param_idx],
                            &mut b[0],
                            batch,
                            *in_channels,
                            *out_channels,
                        )
                    };
                    dcur = dx;
                }
            }
        }
        debug_assert_eq!(param_idx, 0);
        grads
    }

    /// Single-sample backward, matching [`Network::forward`].
    pub fn backward(&self, cache: &BatchCache<F>, output_grad: &[F]) -> NetParams<F> {
        assert_eq!(cache.batch, 1, "backward expects a single-sample cache");
        let g = Tensor::from_vec(&[1, output_grad.len()], output_grad.to_vec());
        self.backward_batch(cache, &g)
    }
}

/// Exponential linear unit with alpha = 1.
pub fn elu<F: Real>(x: F) -> F {
    if x > F::zero() {
        x
    } else {
        x.exp() - F::one()
    }
}

struct ConvGeom {
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
    pad_top: usize,
    pad_left: usize,
}

fn conv_geom(in_h: usize, in_w: usize) -> ConvGeom {
    let (pad_top, _) = pad_split(in_h);
    let (pad_left, _) = pad_split(in_w);
    ConvGeom {
        in_h,
        in_w,
        out_h: conv_out(in_h),
        out_w: conv_out(in_w),
        pad_top,
        pad_left,
    }
}

/// Gather one sample into a [C*9, out_h*out_w] patch matrix.
fn im2col<F: Real>(x: &[F], c: usize, g: &ConvGeom, col: &mut [F]) {
    let p = g.out_h * g.out_w;
    debug_assert_eq!(col.len(), c * CONV_KERNEL * CONV_KERNEL * p);
    debug_assert_eq!(x.len(), c * g.in_h * g.in_w);
    let mut r = 0usize;
    for ic in 0..c {
        let plane = &x[ic * g.in_h * g.in_w..(ic + 1) * g.in_h * g.in_w];
        for kh in 0..CONV_KERNEL {
            for kw in 0..CONV_KERNEL {
                let row = &mut col[r * p..(r + 1) * p];
                r += 1;
                for oh in 0..g.out_h {
                    let ih = (oh * CONV_STRIDE + kh) as isize - g.pad_top as isize;
                    let dst = &mut row[oh * g.out_w..(oh + 1) * g.out_w];
                    if ih < 0 || ih >= g.in_h as isize {
                        dst.fill(F::zero());
                        continue;
                    }
                    let src = &plane[ih as usize * g.in_w..(ih as usize + 1) * g.in_w];
                    for (ow, d) in dst.iter_mut().enumerate() {
                        let iw = (ow * CONV_STRIDE + kw) as isize - g.pad_left as isize;
                        *d = if iw < 0 || iw >= g.in_w as isize {
                            F::zero()
                        } else {
                            src[iw as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add a [C*9, out_h*out_w] gradient matrix back onto the input.
fn col2im_add<F: Real>(dcol: &[F], c: usize, g: &ConvGeom, dx: &mut [F]) {
    let p = g.out_h * g.out_w;
    let mut r = 0usize;
    for ic in 0..c {
        let plane = &mut dx[ic * g.in_h * g.in_w..(ic + 1) * g.in_h * g.in_w];
        for kh in 0..CONV_KERNEL {
            for kw in 0..CONV_KERNEL {
                let row = &dcol[r * p..(r + 1) * p];
                r += 1;
                for oh in 0..g.out_h {
                    let ih = (oh * CONV_STRIDE + kh) as isize - g.pad_top as isize;
                    if ih < 0 || ih >= g.in_h as isize {
                        continue;
                    }
                    let dst = &mut plane[ih as usize * g.in_w..(ih as usize + 1) * g.in_w];
                    let src = &row[oh * g.out_w..(oh + 1) * g.out_w];
                    for (ow, &v) in src.iter().enumerate() {
                        let iw = (ow * CONV_STRIDE + kw) as isize - g.pad_left as isize;
                        if iw >= 0 && iw < g.in_w as isize {
                            dst[iw as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

fn conv_forward<F: Real>(
    input: &Tensor<F>,
    w: &Tensor<F>,
    b: &Tensor<F>,
    batch: usize,
    in_c: usize,
    out_c: usize,
) -> Tensor<F> {
    let g = conv_geom(input.shape()[2], input.shape()[3]);
    let p = g.out_h * g.out_w;
    let k = in_c * CONV_KERNEL * CONV_KERNEL;
    let sample_in = in_c * g.in_h * g.in_w;
    let mut out = Tensor::zeros(&[batch, out_c, g.out_h, g.out_w]);
    let mut col = vec![F::zero(); k * p];
    for bi in 0..batch {
        let x = &input.data()[bi * sample_in..(bi + 1) * sample_in];
        im2col(x, in_c, &g, &mut col);
        let o = &mut out.data_mut()[bi * out_c * p..(bi + 1) * out_c * p];
        gemm::gemm_nn(out_c, p, k, w.data(), &col, o);
        for (oc, plane) in o.chunks_exact_mut(p).enumerate() {
            let bv = b.data()[oc];
            for v in plane {
                *v += bv;
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<F: Real>(
    input: &Tensor<F>,
    dout: &Tensor<F>,
    w: &Tensor<F>,
    gw: &mut Tensor<F>,
    gb: &mut Tensor<F>,
    batch: usize,
    in_c: usize,
    out_c: usize,
) -> Tensor<F> {
    let g = conv_geom(input.shape()[2], input.shape()[3]);
    let p = g.out_h * g.out_w;
    let k = in_c * CONV_KERNEL * CONV_KERNEL;
    let sample_in = in_c * g.in_h * g.in_w;
    let mut dx = Tensor::zeros(&[batch, in_c, g.in_h, g.in_w]);
    let mut col = vec![F::zero(); k * p];
    let mut col_t = vec![F::zero(); k * p];
    let mut dout_t = vec![F::zero(); out_c * p];
    let mut dcol = vec![F::zero(); k * p];
    for bi in 0..batch {
        let x = &input.data()[bi * sample_in..(bi + 1) * sample_in];
        let dy = &dout.data()[bi * out_c * p..(bi + 1) * out_c * p];

        // bias grad
        for (oc, plane) in dy.chunks_exact(p).enumerate() {
            let mut s = F::zero();
            for &v in plane {
                s += v;
            }
            gb.data_mut()[oc] += s;
        }

        // weight grad: gw[oc][r] += sum_p dy[oc][p] col[r][p]
        im2col(x, in_c, &g, &mut col);
        gemm::transpose(k, p, &col, &mut col_t);
        gemm::transpose(out_c, p, dy, &mut dout_t);
        gemm::gemm_tn(out_c, k, p, &dout_t, &col_t, gw.data_mut());

        // input grad: dcol[r][p] = sum_oc w[oc][r] dy[oc][p]
        dcol.fill(F::zero());
        gemm::gemm_tn(k, p, out_c, w.data(), dy, &mut dcol);
        let dxs = &mut dx.data_mut()[bi * sample_in..(bi + 1) * sample_in];
        col2im_add(&dcol, in_c, &g, dxs);
    }
    dx
}
