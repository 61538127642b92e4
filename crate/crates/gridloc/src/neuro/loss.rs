use super::tensor::{Real, Tensor};

/// Mean over the batch of per-row L1 differences: `(1/N) sum_i sum_k
/// |pred[i][k] - target[i][k]|`. With targets masked to differ only at the
/// taken action, this is the per-transition error on that action.
pub fn l1_batch_loss<F: Real>(pred: &Tensor<F>, target: &Tensor<F>) -> F {
    let (n, k) = check_rows(pred, target);
    let mut total = F::zero();
    for row in 0..n {
        for col in 0..k {
            total += (pred.data()[row * k + col] - target.data()[row * k + col]).abs();
        }
    }
    total / F::from_f64(n as f64)
}

/// Gradient of [`l1_batch_loss`] w.r.t. `pred`: `sign(pred - target) / N`,
/// with the subgradient at zero taken as 0.
pub fn l1_batch_grad<F: Real>(pred: &Tensor<F>, target: &Tensor<F>) -> Tensor<F> {
    let (n, _k) = check_rows(pred, target);
    let inv_n = F::one() / F::from_f64(n as f64);
    let mut g = Tensor::zeros(pred.shape());
    for ((gv, &p), &t) in g.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        *gv = if d > F::zero() {
            inv_n
        } else if d < F::zero() {
            -inv_n
        } else {
            F::zero()
        };
    }
    g
}

/// Mean squared error over all entries: `(1/(N*K)) sum (pred - target)^2`.
pub fn mse_batch_loss<F: Real>(pred: &Tensor<F>, target: &Tensor<F>) -> F {
    let (n, k) = check_rows(pred, target);
    let mut total = F::zero();
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = p - t;
        total += d * d;
    }
    total / F::from_f64((n * k) as f64)
}

/// Gradient of [`mse_batch_loss`] w.r.t. `pred`: `2 (pred - target) / (N*K)`.
pub fn mse_batch_grad<F: Real>(pred: &Tensor<F>, target: &Tensor<F>) -> Tensor<F> {
    let (n, k) = check_rows(pred, target);
    let scale = F::from_f64(2.0 / (n * k) as f64);
    let mut g = Tensor::zeros(pred.shape());
    for ((gv, &p), &t) in g.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        *gv = scale * (p - t);
    }
    g
}

fn check_rows<F: Real>(pred: &Tensor<F>, target: &Tensor<F>) -> (usize, usize) {
    assert_eq!(pred.shape(), target.shape(), "pred/target rows must align");
    assert_eq!(pred.shape().len(), 2, "losses expect [N, K] tensors");
    let n = pred.shape()[0];
    assert!(n >= 1, "loss requires at least one row");
    (n, pred.shape()[1])
}
