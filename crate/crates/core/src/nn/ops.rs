//! Forward and backward kernels for the network primitives. These are the
//! hot loops of training, so everything is written as branch-free slice
//! sweeps that the compiler can vectorize.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

/// `dst[i] += a * src[i]`.
#[inline]
fn axpy(dst: &mut [f64], a: f64, src: &[f64]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d = s.mul_add(a, *d);
    }
}

/// Dot product with eight running accumulators so the loop vectorizes.
/// The summation order is fixed, independent of any threading.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let (xa, xb) = (&a[i * 8..i * 8 + 8], &b[i * 8..i * 8 + 8]);
        for k in 0..8 {
            acc[k] = xa[k].mul_add(xb[k], acc[k]);
        }
    }
    let mut tail = 0.0;
    for i in chunks * 8..a.len() {
        tail = a[i].mul_add(b[i], tail);
    }
    (((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))) + tail
}

#[inline]
fn sum(a: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let x = &a[i * 8..i * 8 + 8];
        for k in 0..8 {
            acc[k] += x[k];
        }
    }
    let mut tail = 0.0;
    for v in &a[chunks * 8..] {
        tail += v;
    }
    (((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))) + tail
}

fn check_conv_shapes(input: &Tensor, kernels: &Tensor, bias: &Tensor, dilation: usize) -> Result<(usize, usize, usize)> {
    let (in_ch, n) = match input.shape() {
        [c, n] => (*c, *n),
        other => return Err(Error::InvalidArgument(format!("conv input must be [channels, n], got {other:?}"))),
    };
    let (out_ch, k_in, k_len) = match kernels.shape() {
        [o, i, k] => (*o, *i, *k),
        other => return Err(Error::InvalidArgument(format!("conv kernels must be [out, in, 3], got {other:?}"))),
    };
    if k_len != 3 {
        return Err(Error::InvalidArgument(format!("kernel length must be 3, got {k_len}")));
    }
    if k_in != in_ch {
        return Err(Error::InvalidArgument(format!(
            "kernel expects {k_in} input channels, input has {in_ch}"
        )));
    }
    if bias.shape() != [out_ch] {
        return Err(Error::InvalidArgument(format!(
            "bias shape {:?} does not match {out_ch} output channels",
            bias.shape()
        )));
    }
    if dilation == 0 {
        return Err(Error::InvalidArgument("dilation must be >= 1".into()));
    }
    if dilation >= n {
        return Err(Error::InvalidArgument(format!(
            "dilation {dilation} must be smaller than the signal length {n}"
        )));
    }
    Ok((in_ch, out_ch, n))
}

/// Dilated 1-d convolution with zero padding and centered taps at offsets
/// `{-dilation, 0, +dilation}`. Output length equals input length.
pub fn conv1d_dilated(input: &Tensor, kernels: &Tensor, bias: &Tensor, dilation: usize) -> Result<Tensor> {
    let (in_ch, out_ch, n) = check_conv_shapes(input, kernels, bias, dilation)?;
    let d = dilation;
    let mut out = Tensor::zeros(vec![out_ch, n]);
    let kdata = kernels.data();
    for c in 0..out_ch {
        let orow = &mut out.data_mut()[c * n..(c + 1) * n];
        orow.fill(bias.data()[c]);
        for ci in 0..in_ch {
            let irow = &input.data()[ci * n..(ci + 1) * n];
            let k = &kdata[(c * in_ch + ci) * 3..(c * in_ch + ci) * 3 + 3];
            axpy(&mut orow[d..n], k[0], &irow[..n - d]); // tap at -d
            axpy(orow, k[1], irow); //                      tap at  0
            axpy(&mut orow[..n - d], k[2], &irow[d..]); //  tap at +d
        }
    }
    Ok(out)
}

/// Gradient of [`conv1d_dilated`] with respect to its input.
pub fn conv1d_backward_input(grad_out: &Tensor, kernels: &Tensor, dilation: usize, n: usize) -> Tensor {
    let [out_ch, in_ch, _] = *kernels.shape() else { unreachable!() };
    let d = dilation;
    let mut grad_in = Tensor::zeros(vec![in_ch, n]);
    for c in 0..out_ch {
        let gout = &grad_out.data()[c * n..(c + 1) * n];
        for ci in 0..in_ch {
            let base = (c * in_ch + ci) * 3;
            let kd = kernels.data();
            let (k0, k1, k2) = (kd[base], kd[base + 1], kd[base + 2]);
            let grow = &mut grad_in.data_mut()[ci * n..(ci + 1) * n];
            axpy(&mut grow[..n - d], k0, &gout[d..]);
            axpy(grow, k1, gout);
            axpy(&mut grow[d..], k2, &gout[..n - d]);
        }
    }
    grad_in
}

/// Accumulates the kernel gradient of [`conv1d_dilated`] into a caller-owned
/// buffer (`+=`), so a batch loop never materializes per-example parameter
/// gradients.
pub fn conv1d_backward_kernels_acc(
    grad_out: &Tensor,
    input: &Tensor,
    dilation: usize,
    grad_kernels: &mut Tensor,
) {
    let [in_ch, n] = *input.shape() else { unreachable!() };
    let out_ch = grad_kernels.shape()[0];
    let d = dilation;
    for c in 0..out_ch {
        let gout = &grad_out.data()[c * n..(c + 1) * n];
        for ci in 0..in_ch {
            let irow = &input.data()[ci * n..(ci + 1) * n];
            let base = (c * in_ch + ci) * 3;
            let gk = grad_kernels.data_mut();
            gk[base] += dot(&gout[d..], &irow[..n - d]);
            gk[base + 1] += dot(gout, irow);
            gk[base + 2] += dot(&gout[..n - d], &irow[d..]);
        }
    }
}

/// Accumulates the bias gradient of [`conv1d_dilated`] (`+=`): per-channel
/// sums of the output gradient.
pub fn conv1d_backward_bias_acc(grad_out: &Tensor, grad_bias: &mut Tensor) {
    let [out_ch, n] = *grad_out.shape() else { unreachable!() };
    for c in 0..out_ch {
        grad_bias.data_mut()[c] += sum(&grad_out.data()[c * n..(c + 1) * n]);
    }
}

/// Elementwise `max(0, x)`.
pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Gradient of [`relu`]: passes `grad_out` where the output was positive.
pub fn relu_backward(grad_out: &Tensor, output: &Tensor) -> Tensor {
    let mut grad_in = grad_out.clone();
    for (g, o) in grad_in.data_mut().iter_mut().zip(output.data()) {
        if *o <= 0.0 {
            *g = 0.0;
        }
    }
    grad_in
}

fn check_dense_shapes(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(usize, usize)> {
    let flat = input.len();
    let (rows, cols) = match weights.shape() {
        [r, c] => (*r, *c),
        other => return Err(Error::InvalidArgument(format!("dense weights must be 2-d, got {other:?}"))),
    };
    if cols != flat {
        return Err(Error::InvalidArgument(format!(
            "dense weights have {cols} columns but the flattened input has {flat} elements"
        )));
    }
    if bias.shape() != [rows] {
        return Err(Error::InvalidArgument(format!(
            "dense bias shape {:?} does not match {rows} outputs",
            bias.shape()
        )));
    }
    Ok((rows, cols))
}

/// Fully-connected readout: flattens the feature map (row-major, channel
/// first) and applies `out = W * flat(input) + bias`.
pub fn dense_readout(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (rows, _) = check_dense_shapes(input, weights, bias)?;
    let flat = input.data();
    let mut out = Tensor::zeros(vec![rows]);
    for i in 0..rows {
        out.data_mut()[i] = bias.data()[i] + dot(weights.row(i), flat);
    }
    Ok(out)
}

/// Gradient of [`dense_readout`] with respect to its input.
pub fn dense_backward_input(grad_out: &Tensor, weights: &Tensor, input_shape: &[usize]) -> Tensor {
    let rows = weights.shape()[0];
    let mut grad_in = Tensor::zeros(input_shape.to_vec());
    for i in 0..rows {
        axpy(grad_in.data_mut(), grad_out.data()[i], weights.row(i));
    }
    grad_in
}

/// Accumulates the weight gradient of [`dense_readout`] into a caller-owned
/// buffer (`+=`): the outer product of the output gradient with the
/// flattened input.
pub fn dense_backward_weights_acc(grad_out: &Tensor, input: &Tensor, grad_weights: &mut Tensor) {
    let rows = grad_weights.shape()[0];
    let cols = grad_weights.shape()[1];
    let flat = input.data();
    for i in 0..rows {
        axpy(&mut grad_weights.data_mut()[i * cols..(i + 1) * cols], grad_out.data()[i], flat);
    }
}

/// Robust deviation measure `sum_j (sqrt(1 + (target_j - prediction_j)^2) - 1)`:
/// quadratic near zero residual, asymptotically linear.
pub fn pseudo_huber_loss(prediction: &Tensor, target: &Tensor) -> Result<f64> {
    if prediction.shape() != target.shape() {
        return Err(Error::InvalidArgument(format!(
            "prediction shape {:?} does not match target shape {:?}",
            prediction.shape(),
            target.shape()
        )));
    }
    let mut loss = 0.0;
    for (p, t) in prediction.data().iter().zip(target.data()) {
        let r = t - p;
        loss += r.mul_add(r, 1.0).sqrt() - 1.0;
    }
    Ok(loss)
}

/// Gradient of [`pseudo_huber_loss`] with respect to the prediction, scaled
/// by `upstream`.
pub fn pseudo_huber_backward(upstream: f64, prediction: &Tensor, target: &Tensor) -> Tensor {
    let mut grad = Tensor::zeros(prediction.shape().to_vec());
    for ((g, p), t) in grad.data_mut().iter_mut().zip(prediction.data()).zip(target.data()) {
        let r = t - p;
        *g = upstream * (-r / r.mul_add(r, 1.0).sqrt());
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn rng() -> rand_chacha::ChaCha8Rng {
        crate::rng::seeded_rng(42)
    }

    fn random_tensor(shape: Vec<usize>, rng: &mut impl Rng) -> Tensor {
        let len = shape.iter().product();
        Tensor::new(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct triple-loop evaluation of the convolution definition.
    fn conv_oracle(input: &Tensor, kernels: &Tensor, bias: &Tensor, d: usize) -> Tensor {
        let [in_ch, n] = *input.shape() else { panic!() };
        let [out_ch, _, _] = *kernels.shape() else { panic!() };
        let mut out = Tensor::zeros(vec![out_ch, n]);
        for c in 0..out_ch {
            for t in 0..n {
                let mut acc = bias.data()[c];
                for ci in 0..in_ch {
                    for (j, off) in [-(d as isize), 0, d as isize].into_iter().enumerate() {
                        let s = t as isize + off;
                        if s >= 0 && (s as usize) < n {
                            acc += kernels.data()[(c * in_ch + ci) * 3 + j]
                                * input.data()[ci * n + s as usize];
                        }
                    }
                }
                out.data_mut()[c * n + t] = acc;
            }
        }
        out
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let input = Tensor::new(vec![1, 5], vec![1.0, -2.0, 3.0, 0.5, 4.0]).unwrap();
        let kernels = Tensor::new(vec![1, 1, 3], vec![0.0, 1.0, 0.0]).unwrap();
        let bias = Tensor::zeros(vec![1]);
        for d in 1..5 {
            let out = conv1d_dilated(&input, &kernels, &bias, d).unwrap();
            assert_eq!(out.data(), input.data());
        }
    }

    #[test]
    fn left_tap_shifts_with_zero_padding() {
        let input = Tensor::new(vec![1, 5], vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let kernels = Tensor::new(vec![1, 1, 3], vec![1.0, 0.0, 0.0]).unwrap();
        let bias = Tensor::zeros(vec![1]);
        let out = conv1d_dilated(&input, &kernels, &bias, 2).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn conv_matches_direct_summation_oracle() {
        let mut r = rng();
        let input = random_tensor(vec![2, 8], &mut r);
        let kernels = random_tensor(vec![3, 2, 3], &mut r);
        let bias = random_tensor(vec![3], &mut r);
        let fast = conv1d_dilated(&input, &kernels, &bias, 4).unwrap();
        let slow = conv_oracle(&input, &kernels, &bias, 4);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let input = Tensor::zeros(vec![2, 8]);
        let kernels = Tensor::zeros(vec![3, 4, 3]);
        let bias = Tensor::zeros(vec![3]);
        assert!(matches!(
            conv1d_dilated(&input, &kernels, &bias, 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn conv_rejects_dilation_at_signal_length() {
        let input = Tensor::zeros(vec![1, 4]);
        let kernels = Tensor::zeros(vec![1, 1, 3]);
        let bias = Tensor::zeros(vec![1]);
        assert!(conv1d_dilated(&input, &kernels, &bias, 4).is_err());
        assert!(conv1d_dilated(&input, &kernels, &bias, 3).is_ok());
    }

    #[test]
    fn conv_is_linear_for_zero_bias() {
        let mut r = rng();
        let x = random_tensor(vec![2, 16], &mut r);
        let z = random_tensor(vec![2, 16], &mut r);
        let kernels = random_tensor(vec![2, 2, 3], &mut r);
        let bias = Tensor::zeros(vec![2]);
        let (a, b) = (0.7, -1.3);
        let mut combo = Tensor::zeros(vec![2, 16]);
        combo.axpy(a, &x);
        combo.axpy(b, &z);
        let lhs = conv1d_dilated(&combo, &kernels, &bias, 3).unwrap();
        let mut rhs = Tensor::zeros(vec![2, 16]);
        rhs.axpy(a, &conv1d_dilated(&x, &kernels, &bias, 3).unwrap());
        rhs.axpy(b, &conv1d_dilated(&z, &kernels, &bias, 3).unwrap());
        for (l, r2) in lhs.data().iter().zip(rhs.data()) {
            assert_abs_diff_eq!(l, r2, epsilon = 1e-10);
        }
    }

    #[test]
    fn relu_clamps_negatives() {
        let t = Tensor::from_vec(vec![-1.0, 0.0, 2.0]);
        assert_eq!(relu(&t).data(), &[0.0, 0.0, 2.0]);
        let neg = Tensor::from_vec(vec![-3.0, -0.1]);
        assert_eq!(relu(&neg).data(), &[0.0, 0.0]);
        let pos = Tensor::from_vec(vec![3.0, 0.1]);
        assert_eq!(relu(&pos).data(), pos.data());
    }

    #[test]
    fn dense_readout_matches_matvec_oracle() {
        let mut r = rng();
        let input = random_tensor(vec![3, 5], &mut r);
        let weights = random_tensor(vec![5, 15], &mut r);
        let bias = random_tensor(vec![5], &mut r);
        let out = dense_readout(&input, &weights, &bias).unwrap();
        for i in 0..5 {
            let mut acc = bias.data()[i];
            for j in 0..15 {
                acc += weights.data()[i * 15 + j] * input.data()[j];
            }
            assert_abs_diff_eq!(out.data()[i], acc, epsilon = 1e-12);
        }
    }

    #[test]
    fn dense_readout_zero_weights_returns_bias() {
        let input = Tensor::zeros(vec![2, 4]);
        let weights = Tensor::zeros(vec![4, 8]);
        let bias = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let out = dense_readout(&input, &weights, &bias).unwrap();
        assert_eq!(out.data(), bias.data());
    }

    #[test]
    fn dense_readout_identity_map() {
        let input = Tensor::new(vec![1, 2], vec![3.0, 4.0]).unwrap();
        let weights = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let bias = Tensor::zeros(vec![2]);
        let out = dense_readout(&input, &weights, &bias).unwrap();
        assert_eq!(out.data(), &[3.0, 4.0]);
    }

    #[test]
    fn dense_readout_rejects_shape_mismatch() {
        let input = Tensor::zeros(vec![2, 4]);
        let weights = Tensor::zeros(vec![4, 9]);
        let bias = Tensor::zeros(vec![4]);
        assert!(dense_readout(&input, &weights, &bias).is_err());
    }

    #[test]
    fn pseudo_huber_zero_at_equality() {
        let t = Tensor::from_vec(vec![1.0, -2.0, 3.0]);
        assert_eq!(pseudo_huber_loss(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn pseudo_huber_unit_residual() {
        let p = Tensor::from_vec(vec![0.0]);
        let t = Tensor::from_vec(vec![1.0]);
        let loss = pseudo_huber_loss(&p, &t).unwrap();
        assert_abs_diff_eq!(loss, std::f64::consts::SQRT_2 - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pseudo_huber_asymptotically_linear() {
        let p = Tensor::from_vec(vec![0.0]);
        let t = Tensor::from_vec(vec![1000.0]);
        let loss = pseudo_huber_loss(&p, &t).unwrap();
        let linear = 1000.0 - 1.0;
        assert!((loss - linear).abs() / linear < 1e-3);
    }

    #[test]
    fn pseudo_huber_rejects_length_mismatch() {
        let p = Tensor::from_vec(vec![0.0, 1.0]);
        let t = Tensor::from_vec(vec![0.0]);
        assert!(pseudo_huber_loss(&p, &t).is_err());
    }
}
