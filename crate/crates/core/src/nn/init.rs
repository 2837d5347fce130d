use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

/// Fan-in of a parameter shape: everything but the leading (output) extent.
fn fan_in(shape: &[usize]) -> usize {
    match shape {
        [n] => *n,
        more => more[1..].iter().product(),
    }
}

/// Zero-mean Gaussian initialization with standard deviation
/// `sqrt(2 / fan_in)`, the scaling that keeps ReLU activations from
/// shrinking or blowing up with depth.
pub fn he_init(shape: Vec<usize>, rng: &mut impl Rng) -> Tensor {
    let std = (2.0 / fan_in(&shape) as f64).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::new(shape, data).expect("shape/data constructed consistently")
}

/// Receptive field (in samples) of a stack of `m` length-3 convolution
/// layers with dilations `(1, 1, 2, 4, ..., 2^(m-2))`.
pub fn receptive_field(m: usize) -> usize {
    // 3 for the first layer, plus 2 * dilation for each further layer:
    // 3 + 2 * (1 + 2 + ... + 2^(m-2)) = 2^m + 1.
    if m == 0 {
        1
    } else {
        (1usize << m) + 1
    }
}

/// Largest number of convolution layers whose receptive field stays below
/// the signal length: max m with `3 + 2 * sum_{i=0}^{m-2} 2^i < n`.
pub fn layer_count_for_signal(n: usize) -> Result<usize> {
    let mut m = 0;
    while receptive_field(m + 1) < n {
        m += 1;
    }
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "signal length {n} is too short for a two-layer stack (needs n > 5)"
        )));
    }
    Ok(m)
}
