//! The trained smoother: network architecture assembly, the training loop,
//! inference, and model persistence.

pub mod model_io;
pub mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{he_init, layer_count_for_signal, receptive_field, ConvLayer, NetworkWeights, Tensor};
use crate::series::TimeSeries;
use crate::stats;

pub use model_io::{load_model, save_model};
pub use train::{train, EpochUnit, TrainConfig, TrainOutput};

/// Channel count of the dilated convolution stack.
pub const CHANNELS: usize = 60;

/// Network layout: `conv_layers` dilated convolutions of `channels` kernels
/// of length 3 each (dilations 1, 1, 2, 4, ...), followed by a dense
/// readout of the flattened feature map back to a length-`signal_length`
/// signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub signal_length: usize,
    pub conv_layers: usize,
    pub channels: usize,
    pub kernel_length: usize,
    pub dilation_schedule: Vec<usize>,
}

impl ArchitectureSpec {
    /// The deepest stack whose last-layer receptive field stays below the
    /// signal length, with the doubling dilation schedule.
    pub fn for_signal_length(n: usize) -> Result<Self> {
        Self::with_channels(n, CHANNELS)
    }

    pub fn with_channels(n: usize, channels: usize) -> Result<Self> {
        let m = layer_count_for_signal(n)?;
        Ok(ArchitectureSpec {
            signal_length: n,
            conv_layers: m,
            channels,
            kernel_length: 3,
            dilation_schedule: dilation_schedule(m),
        })
    }

    pub fn receptive_field(&self) -> usize {
        receptive_field(self.conv_layers)
    }

    pub fn matches(&self, weights: &NetworkWeights) -> bool {
        weights.signal_length == self.signal_length
            && weights.conv.len() == self.conv_layers
            && weights.channels() == self.channels
            && weights.dilation_schedule() == self.dilation_schedule
            && weights.dense_weights.shape() == [self.signal_length, self.channels * self.signal_length]
    }
}

/// `(1, 1, 2, 4, ..., 2^(m-2))`.
pub fn dilation_schedule(m: usize) -> Vec<usize> {
    (0..m).map(|i| if i == 0 { 1 } else { 1usize << (i - 1) }).collect()
}

/// He-initialized network for signals of length `n`: kernels drawn from the
/// fan-in-scaled Gaussian, all biases zero.
pub fn build_network(n: usize, rng: &mut impl Rng) -> Result<(ArchitectureSpec, NetworkWeights)> {
    build_network_with_channels(n, CHANNELS, rng)
}

pub fn build_network_with_channels(
    n: usize,
    channels: usize,
    rng: &mut impl Rng,
) -> Result<(ArchitectureSpec, NetworkWeights)> {
    let spec = ArchitectureSpec::with_channels(n, channels)?;
    let conv = spec
        .dilation_schedule
        .iter()
        .enumerate()
        .map(|(i, &dilation)| ConvLayer {
            kernels: he_init(vec![channels, if i == 0 { 1 } else { channels }, 3], rng),
            bias: Tensor::zeros(vec![channels]),
            dilation,
        })
        .collect();
    let weights = NetworkWeights {
        signal_length: n,
        conv,
        dense_weights: he_init(vec![n, channels * n], rng),
        dense_bias: Tensor::zeros(vec![n]),
    };
    Ok((spec, weights))
}

/// Input/output rescaling applied around the network. The scheme is part of
/// the model contract: it is stored in the container and applied
/// identically at training and inference time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum Normalization {
    /// Divide the input by the interquartile range of the observed window
    /// and multiply the output back. Robust to the heavy-tailed noise
    /// models (Cauchy jumps have no variance to standardize by), and keeps
    /// the latent's absolute level intact because no offset is subtracted.
    RobustScale,
    /// Pass values through unchanged.
    Identity,
}

impl Normalization {
    pub fn scale_for(&self, observed: &[f64]) -> f64 {
        match self {
            Normalization::Identity => 1.0,
            Normalization::RobustScale => {
                let iqr = stats::iqr(observed);
                if iqr > 1e-12 {
                    iqr
                } else {
                    1.0
                }
            }
        }
    }
}

/// Training provenance stored with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// FNV-1a fingerprint of the training dataset manifest.
    pub dataset_manifest_hash: String,
    pub config: TrainConfig,
    pub final_loss: Option<f64>,
}

/// A trained network plus everything needed to apply it: architecture,
/// weights, normalization scheme and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedSmoother {
    pub spec: ArchitectureSpec,
    pub weights: NetworkWeights,
    pub normalization: Normalization,
    pub provenance: Provenance,
}

/// One forward pass over an observed window. Pure function of
/// `(weights, input)`; the output has the input's length.
pub fn smooth(model: &TrainedSmoother, observed: &TimeSeries) -> Result<TimeSeries> {
    if observed.len() != model.spec.signal_length {
        return Err(Error::InvalidArgument(format!(
            "input has {} samples but the model expects {}",
            observed.len(),
            model.spec.signal_length
        )));
    }
    let scale = model.normalization.scale_for(&observed.values);
    let scaled: Vec<f64> = observed.values.iter().map(|v| v / scale).collect();
    let out = model.weights.forward(&scaled)?;
    Ok(TimeSeries::new(observed.dt, out.into_iter().map(|v| v * scale).collect()))
}
