use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::nn::ops;
use crate::nn::tensor::Tensor;

/// One dilated convolution layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// `[out_channels, in_channels, 3]`
    pub kernels: Tensor,
    /// `[out_channels]`
    pub bias: Tensor,
    pub dilation: usize,
}

/// All parameters of the dilated convolution network, in declaration order:
/// per-layer kernels and biases, then the dense readout weights and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    pub signal_length: usize,
    pub conv: Vec<ConvLayer>,
    /// `[n, channels * n]`
    pub dense_weights: Tensor,
    /// `[n]`
    pub dense_bias: Tensor,
}

#[derive(Serialize, Deserialize)]
struct WeightsHeader {
    signal_length: usize,
    conv_layers: usize,
    channels: usize,
    kernel_length: usize,
    dilations: Vec<usize>,
}

const MAGIC: &[u8; 4] = b"DSNW";
const VERSION: u32 = 1;

impl NetworkWeights {
    pub fn channels(&self) -> usize {
        self.conv.first().map_or(0, |l| l.kernels.shape()[0])
    }

    pub fn dilation_schedule(&self) -> Vec<usize> {
        self.conv.iter().map(|l| l.dilation).collect()
    }

    /// Parameters in declaration order (kernels/bias per layer, then dense).
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::with_capacity(2 * self.conv.len() + 2);
        for layer in &self.conv {
            out.push(&layer.kernels);
            out.push(&layer.bias);
        }
        out.push(&self.dense_weights);
        out.push(&self.dense_bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(2 * self.conv.len() + 2);
        for layer in &mut self.conv {
            out.push(&mut layer.kernels);
            out.push(&mut layer.bias);
        }
        out.push(&mut self.dense_weights);
        out.push(&mut self.dense_bias);
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Plain inference pass: conv/ReLU stack then dense readout.
    pub fn forward(&self, signal: &[f64]) -> Result<Vec<f64>> {
        if signal.len() != self.signal_length {
            return Err(Error::InvalidArgument(format!(
                "input length {} does not match network signal length {}",
                signal.len(),
                self.signal_length
            )));
        }
        let mut h = Tensor::new(vec![1, signal.len()], signal.to_vec())?;
        for layer in &self.conv {
            let c = ops::conv1d_dilated(&h, &layer.kernels, &layer.bias, layer.dilation)?;
            h = ops::relu(&c);
        }
        let out = ops::dense_readout(&h, &self.dense_weights, &self.dense_bias)?;
        Ok(out.into_data())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        container::write_magic(w, MAGIC, VERSION)?;
        let header = WeightsHeader {
            signal_length: self.signal_length,
            conv_layers: self.conv.len(),
            channels: self.channels(),
            kernel_length: 3,
            dilations: self.dilation_schedule(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
        container::write_bytes(w, &json)?;
        for layer in &self.conv {
            container::write_f64_slice(w, layer.kernels.data())?;
            container::write_f64_slice(w, layer.bias.data())?;
        }
        container::write_f64_slice(w, self.dense_weights.data())?;
        container::write_f64_slice(w, self.dense_bias.data())?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        container::read_magic(r, MAGIC, VERSION)?;
        let json = container::read_bytes(r)?;
        let header: WeightsHeader =
            serde_json::from_slice(&json).map_err(|e| Error::Format(format!("weights header: {e}")))?;
        let n = header.signal_length;
        let ch = header.channels;
        if header.kernel_length != 3 {
            return Err(Error::Format(format!("unsupported kernel length {}", header.kernel_length)));
        }
        if header.dilations.len() != header.conv_layers {
            return Err(Error::Format("dilation schedule length disagrees with layer count".into()));
        }
        let mut conv = Vec::with_capacity(header.conv_layers);
        for (i, &dilation) in header.dilations.iter().enumerate() {
            let in_ch = if i == 0 { 1 } else { ch };
            let kdata = container::read_f64_vec(r)?;
            let bdata = container::read_f64_vec(r)?;
            let kernels = Tensor::new(vec![ch, in_ch, 3], kdata)
                .map_err(|e| Error::Format(format!("layer {i} kernels: {e}")))?;
            let bias = Tensor::new(vec![ch], bdata)
                .map_err(|e| Error::Format(format!("layer {i} bias: {e}")))?;
            conv.push(ConvLayer { kernels, bias, dilation });
        }
        let dense_weights = Tensor::new(vec![n, ch * n], container::read_f64_vec(r)?)
            .map_err(|e| Error::Format(format!("dense weights: {e}")))?;
        let dense_bias = Tensor::new(vec![n], container::read_f64_vec(r)?)
            .map_err(|e| Error::Format(format!("dense bias: {e}")))?;
        Ok(NetworkWeights { signal_length: n, conv, dense_weights, dense_bias })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file))
    }
}
