//! Reverse-mode differentiation engine and the network primitives needed by
//! the dilated-convolution smoother: the tensor type, forward/backward
//! kernels, a gradient tape, Adam, He initialization and weight containers.

pub mod adam;
pub mod init;
pub mod ops;
pub mod tape;
pub mod tensor;
pub mod weights;

pub use adam::{adam_step, AdamState};
pub use init::{he_init, layer_count_for_signal, receptive_field};
pub use ops::{conv1d_dilated, dense_readout, pseudo_huber_loss, relu};
pub use tape::{Gradients, Tape, VarId};
pub use tensor::Tensor;
pub use weights::{ConvLayer, NetworkWeights};
