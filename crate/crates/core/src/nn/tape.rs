//! Reverse-mode differentiation over the primitive set used by the network:
//! dilated convolution, ReLU, dense readout and the robust loss. A forward
//! pass records every executed operation together with the tensors it needs
//! for its gradient; the backward pass replays the record once in reverse.
//!
//! Leaves can be borrowed (`leaf`) so that a training loop does not copy the
//! weight tensors for every example, and parameter gradients can be routed
//! straight into caller-owned accumulators (`backward_into`) so that batch
//! reduction never materializes per-example gradients of the big dense
//! layer.

use crate::error::{Error, Result};
use crate::nn::ops;
use crate::nn::tensor::Tensor;

/// Handle to a value stored on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

enum Value<'a> {
    Borrowed(&'a Tensor),
    Owned(Tensor),
}

impl Value<'_> {
    fn tensor(&self) -> &Tensor {
        match self {
            Value::Borrowed(t) => t,
            Value::Owned(t) => t,
        }
    }
}

enum Node {
    Conv { input: VarId, kernels: VarId, bias: VarId, dilation: usize, out: VarId },
    Relu { input: VarId, out: VarId },
    Dense { input: VarId, weights: VarId, bias: VarId, out: VarId },
    PseudoHuber { prediction: VarId, target: VarId, out: VarId },
    Scale { input: VarId, factor: f64, out: VarId },
}

impl Node {
    fn out(&self) -> VarId {
        match self {
            Node::Conv { out, .. }
            | Node::Relu { out, .. }
            | Node::Dense { out, .. }
            | Node::PseudoHuber { out, .. }
            | Node::Scale { out, .. } => *out,
        }
    }
}

/// Ordered record of one forward pass.
#[derive(Default)]
pub struct Tape<'a> {
    values: Vec<Value<'a>>,
    nodes: Vec<Node>,
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { values: Vec::new(), nodes: Vec::new() }
    }

    fn push_owned(&mut self, t: Tensor) -> VarId {
        self.values.push(Value::Owned(t));
        VarId(self.values.len() - 1)
    }

    /// Registers a borrowed leaf (parameters, inputs, targets).
    pub fn leaf(&mut self, t: &'a Tensor) -> VarId {
        self.values.push(Value::Borrowed(t));
        VarId(self.values.len() - 1)
    }

    /// Registers a leaf the tape takes ownership of.
    pub fn owned_leaf(&mut self, t: Tensor) -> VarId {
        self.push_owned(t)
    }

    pub fn value(&self, id: VarId) -> &Tensor {
        self.values[id.0].tensor()
    }

    fn is_node_output(&self, id: VarId) -> bool {
        self.nodes.iter().any(|n| n.out() == id)
    }

    pub fn conv1d_dilated(&mut self, input: VarId, kernels: VarId, bias: VarId, dilation: usize) -> Result<VarId> {
        let out = ops::conv1d_dilated(self.value(input), self.value(kernels), self.value(bias), dilation)?;
        let out = self.push_owned(out);
        self.nodes.push(Node::Conv { input, kernels, bias, dilation, out });
        Ok(out)
    }

    pub fn relu(&mut self, input: VarId) -> VarId {
        let out = ops::relu(self.value(input));
        let out = self.push_owned(out);
        self.nodes.push(Node::Relu { input, out });
        out
    }

    pub fn dense_readout(&mut self, input: VarId, weights: VarId, bias: VarId) -> Result<VarId> {
        let out = ops::dense_readout(self.value(input), self.value(weights), self.value(bias))?;
        let out = self.push_owned(out);
        self.nodes.push(Node::Dense { input, weights, bias, out });
        Ok(out)
    }

    pub fn pseudo_huber_loss(&mut self, prediction: VarId, target: VarId) -> Result<VarId> {
        let loss = ops::pseudo_huber_loss(self.value(prediction), self.value(target))?;
        let out = self.push_owned(Tensor::scalar(loss));
        self.nodes.push(Node::PseudoHuber { prediction, target, out });
        Ok(out)
    }

    pub fn scale(&mut self, input: VarId, factor: f64) -> VarId {
        let mut t = self.value(input).clone();
        t.scale(factor);
        let out = self.push_owned(t);
        self.nodes.push(Node::Scale { input, factor, out });
        out
    }

    /// Gradients of the scalar `loss` with respect to every recorded value.
    pub fn backward(&self, loss: VarId) -> Result<Gradients> {
        let grads = self.backward_core(loss, &mut [], &[], true)?;
        Ok(Gradients { grads })
    }

    /// Accumulates (`+=`) the gradients of `loss` with respect to the listed
    /// leaf ids into the paired tensors. Gradients of everything else are
    /// discarded as soon as they have been propagated, so a batch loop over
    /// examples never materializes per-example parameter gradients. Leaves
    /// in `skip` get no gradient computed at all (used when a batch loop
    /// handles a parameter's gradient by a cheaper batched route).
    pub fn backward_into(
        &self,
        loss: VarId,
        sinks: &mut [(VarId, &mut Tensor)],
        skip: &[VarId],
    ) -> Result<()> {
        for id in sinks.iter().map(|(id, _)| *id).chain(skip.iter().copied()) {
            if self.is_node_output(id) {
                return Err(Error::InvalidArgument(
                    "gradient sinks and skips must be leaves, not operation outputs".into(),
                ));
            }
        }
        self.backward_core(loss, sinks, skip, false)?;
        Ok(())
    }

    fn backward_core(
        &self,
        loss: VarId,
        sinks: &mut [(VarId, &mut Tensor)],
        skip: &[VarId],
        keep_all: bool,
    ) -> Result<Vec<Option<Tensor>>> {
        if self.nodes.is_empty() {
            return Err(Error::State("backward called before any forward pass was recorded".into()));
        }
        if !self.is_node_output(loss) {
            return Err(Error::State("loss value was not produced by an operation on this tape".into()));
        }
        if !self.value(loss).is_scalar() {
            return Err(Error::InvalidArgument(format!(
                "loss must be scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::new();
        grads.resize_with(self.values.len(), || None);
        grads[loss.0] = Some(Tensor::scalar(1.0));

        macro_rules! sink_of {
            ($id:expr) => {
                sinks.iter_mut().find(|(sid, _)| *sid == $id).map(|(_, t)| &mut **t)
            };
        }
        // Accumulate a materialized contribution for `id`.
        macro_rules! add_grad {
            ($id:expr, $contribution:expr) => {{
                let c = $contribution;
                match sink_of!($id) {
                    Some(sink) => sink.axpy(1.0, &c),
                    None => match &mut grads[$id.0] {
                        Some(existing) => existing.axpy(1.0, &c),
                        slot @ None => *slot = Some(c),
                    },
                }
            }};
        }

        let skipped = |id: VarId| skip.contains(&id);

        for node in self.nodes.iter().rev() {
            // Once propagated, an activation gradient is dead weight unless
            // the caller asked to keep everything.
            let gout = if keep_all {
                grads[node.out().0].clone()
            } else {
                grads[node.out().0].take()
            };
            let Some(gout) = gout else { continue };
            match *node {
                Node::Conv { input, kernels, bias, dilation, .. } => {
                    if !skipped(input) {
                        let n = self.value(input).shape()[1];
                        let gi = ops::conv1d_backward_input(&gout, self.value(kernels), dilation, n);
                        add_grad!(input, gi);
                    }
                    if !skipped(kernels) {
                        match sink_of!(kernels) {
                            Some(gk) => ops::conv1d_backward_kernels_acc(&gout, self.value(input), dilation, gk),
                            None => {
                                let mut gk = Tensor::zeros(self.value(kernels).shape().to_vec());
                                ops::conv1d_backward_kernels_acc(&gout, self.value(input), dilation, &mut gk);
                                add_grad!(kernels, gk);
                            }
                        }
                    }
                    if !skipped(bias) {
                        match sink_of!(bias) {
                            Some(gb) => ops::conv1d_backward_bias_acc(&gout, gb),
                            None => {
                                let mut gb = Tensor::zeros(self.value(bias).shape().to_vec());
                                ops::conv1d_backward_bias_acc(&gout, &mut gb);
                                add_grad!(bias, gb);
                            }
                        }
                    }
                }
                Node::Relu { input, out } => {
                    let gi = ops::relu_backward(&gout, self.value(out));
                    add_grad!(input, gi);
                }
                Node::Dense { input, weights, bias, .. } => {
                    if !skipped(input) {
                        let gi = ops::dense_backward_input(&gout, self.value(weights), self.value(input).shape());
                        add_grad!(input, gi);
                    }
                    if !skipped(weights) {
                        match sink_of!(weights) {
                            Some(gw) => ops::dense_backward_weights_acc(&gout, self.value(input), gw),
                            None => {
                                let mut gw = Tensor::zeros(self.value(weights).shape().to_vec());
                                ops::dense_backward_weights_acc(&gout, self.value(input), &mut gw);
                                add_grad!(weights, gw);
                            }
                        }
                    }
                    if !skipped(bias) {
                        add_grad!(bias, gout.clone());
                    }
                }
                Node::PseudoHuber { prediction, target, .. } => {
                    let upstream = gout.data()[0];
                    let gp = ops::pseudo_huber_backward(upstream, self.value(prediction), self.value(target));
                    add_grad!(prediction, gp);
                }
                Node::Scale { input, factor, .. } => {
                    let mut gi = gout.clone();
                    gi.scale(factor);
                    add_grad!(input, gi);
                }
            }
        }
        Ok(grads)
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`VarId`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: VarId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    /// Gradient for `id`, or zeros of the given shape when the loss did not
    /// depend on it.
    pub fn get_or_zeros(&self, id: VarId, like: &Tensor) -> Tensor {
        match self.grads[id.0].as_ref() {
            Some(g) => g.clone(),
            None => Tensor::zeros_like(like),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_tensor(shape: Vec<usize>, rng: &mut impl Rng) -> Tensor {
        let len = shape.iter().product();
        Tensor::new(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn backward_before_forward_is_a_state_error() {
        let mut tape = Tape::new();
        let x = tape.owned_leaf(Tensor::from_vec(vec![1.0]));
        let err = tape.backward(x).unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }

    #[test]
    fn backward_on_a_leaf_is_a_state_error() {
        let mut tape = Tape::new();
        let x = tape.owned_leaf(Tensor::from_vec(vec![1.0]));
        let y = tape.owned_leaf(Tensor::from_vec(vec![2.0]));
        tape.pseudo_huber_loss(x, y).unwrap();
        let err = tape.backward(x).unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }

    #[test]
    fn loss_gradient_with_respect_to_itself_is_one() {
        let mut tape = Tape::new();
        let p = tape.owned_leaf(Tensor::from_vec(vec![0.5, -1.0]));
        let t = tape.owned_leaf(Tensor::from_vec(vec![0.0, 0.0]));
        let loss = tape.pseudo_huber_loss(p, t).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(loss).unwrap().data(), &[1.0]);
    }

    #[test]
    fn unused_parameter_gets_zero_gradient() {
        let mut tape = Tape::new();
        let p = tape.owned_leaf(Tensor::from_vec(vec![0.5, -1.0]));
        let t = tape.owned_leaf(Tensor::from_vec(vec![0.0, 0.0]));
        let unused = tape.owned_leaf(Tensor::from_vec(vec![3.0]));
        let loss = tape.pseudo_huber_loss(p, t).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(unused).is_none());
        let zero = grads.get_or_zeros(unused, &Tensor::from_vec(vec![3.0]));
        assert_eq!(zero.data(), &[0.0]);
    }

    #[test]
    fn sink_accumulation_matches_materialized_gradients() {
        let mut r = crate::rng::seeded_rng(17);
        let input = random_tensor(vec![1, 12], &mut r);
        let kernels = random_tensor(vec![3, 1, 3], &mut r);
        let bias = random_tensor(vec![3], &mut r);
        let w = random_tensor(vec![12, 36], &mut r);
        let wb = random_tensor(vec![12], &mut r);
        let target = random_tensor(vec![12], &mut r);

        let mut tape = Tape::new();
        let x = tape.leaf(&input);
        let k = tape.leaf(&kernels);
        let b = tape.leaf(&bias);
        let wi = tape.leaf(&w);
        let wbi = tape.leaf(&wb);
        let t = tape.leaf(&target);
        let c = tape.conv1d_dilated(x, k, b, 2).unwrap();
        let a = tape.relu(c);
        let y = tape.dense_readout(a, wi, wbi).unwrap();
        let loss = tape.pseudo_huber_loss(y, t).unwrap();

        let grads = tape.backward(loss).unwrap();

        let mut gk = Tensor::zeros_like(&kernels);
        let mut gb = Tensor::zeros_like(&bias);
        let mut gw = Tensor::zeros_like(&w);
        let mut gwb = Tensor::zeros_like(&wb);
        {
            let mut sinks = [(k, &mut gk), (b, &mut gb), (wi, &mut gw), (wbi, &mut gwb)];
            tape.backward_into(loss, &mut sinks, &[]).unwrap();
            // Accumulate a second time: sinks must add, not overwrite.
            let mut sinks = [(k, &mut gk), (b, &mut gb), (wi, &mut gw), (wbi, &mut gwb)];
            tape.backward_into(loss, &mut sinks, &[]).unwrap();
        }
        for (sink, id) in [(&gk, k), (&gb, b), (&gw, wi), (&gwb, wbi)] {
            let reference = grads.get(id).unwrap();
            for (s, g) in sink.data().iter().zip(reference.data()) {
                assert!((s - 2.0 * g).abs() <= 1e-14 * g.abs().max(1.0), "{s} vs 2*{g}");
            }
        }
    }

    #[test]
    fn sinks_must_be_leaves() {
        let mut tape = Tape::new();
        let p = tape.owned_leaf(Tensor::from_vec(vec![0.5]));
        let t = tape.owned_leaf(Tensor::from_vec(vec![0.0]));
        let loss = tape.pseudo_huber_loss(p, t).unwrap();
        let mut buf = Tensor::from_vec(vec![0.0]);
        let mut sinks = [(loss, &mut buf)];
        assert!(matches!(
            tape.backward_into(loss, &mut sinks, &[]).unwrap_err(),
            Error::InvalidArgument(_)
        ));
    }

    #[test]
    fn identical_seeds_give_bit_identical_gradients() {
        let run = || {
            let mut r = crate::rng::seeded_rng(99);
            let input = random_tensor(vec![1, 8], &mut r);
            let kernels = random_tensor(vec![2, 1, 3], &mut r);
            let bias = random_tensor(vec![2], &mut r);
            let w = random_tensor(vec![8, 16], &mut r);
            let wb = random_tensor(vec![8], &mut r);
            let target = random_tensor(vec![8], &mut r);
            let mut tape = Tape::new();
            let x = tape.leaf(&input);
            let k = tape.leaf(&kernels);
            let b = tape.leaf(&bias);
            let wi = tape.leaf(&w);
            let wbi = tape.leaf(&wb);
            let t = tape.leaf(&target);
            let c = tape.conv1d_dilated(x, k, b, 2).unwrap();
            let a = tape.relu(c);
            let y = tape.dense_readout(a, wi, wbi).unwrap();
            let loss = tape.pseudo_huber_loss(y, t).unwrap();
            let grads = tape.backward(loss).unwrap();
            (
                grads.get(k).unwrap().data().to_vec(),
                grads.get(wi).unwrap().data().to_vec(),
                grads.get(b).unwrap().data().to_vec(),
            )
        };
        assert_eq!(run(), run());
    }

    /// Central finite differences of the recomputed forward pass, the
    /// independent oracle for the analytic backward pass. Returns `None`
    /// when a ReLU preactivation sits too close to its kink for finite
    /// differences to be meaningful (the caller then tries another seed).
    fn finite_difference_check(seed: u64) -> Option<f64> {
        let mut r = crate::rng::seeded_rng(seed);
        let layers = r.random_range(1..=3usize);
        let ch = r.random_range(1..=4usize);
        let n = r.random_range(8..=16usize);
        let input = random_tensor(vec![1, n], &mut r);
        let target = random_tensor(vec![n], &mut r);
        let mut kernels: Vec<Tensor> = Vec::new();
        let mut biases: Vec<Tensor> = Vec::new();
        for l in 0..layers {
            let in_ch = if l == 0 { 1 } else { ch };
            kernels.push(random_tensor(vec![ch, in_ch, 3], &mut r));
            biases.push(random_tensor(vec![ch], &mut r));
        }
        let dense_w = random_tensor(vec![n, ch * n], &mut r);
        let dense_b = random_tensor(vec![n], &mut r);

        {
            let mut h = input.clone();
            let mut min_preact = f64::INFINITY;
            for l in 0..layers {
                let c = ops::conv1d_dilated(&h, &kernels[l], &biases[l], 1 + l).unwrap();
                min_preact = c.data().iter().fold(min_preact, |m, v| m.min(v.abs()));
                h = ops::relu(&c);
            }
            if min_preact < 1e-3 {
                return None;
            }
        }

        let forward = |kernels: &[Tensor], biases: &[Tensor], dense_w: &Tensor, dense_b: &Tensor| -> f64 {
            let mut h = input.clone();
            for l in 0..layers {
                let c = ops::conv1d_dilated(&h, &kernels[l], &biases[l], 1 + l).unwrap();
                h = ops::relu(&c);
            }
            let y = ops::dense_readout(&h, dense_w, dense_b).unwrap();
            ops::pseudo_huber_loss(&y, &target).unwrap()
        };

        let mut tape = Tape::new();
        let x = tape.leaf(&input);
        let t = tape.leaf(&target);
        let k_ids: Vec<VarId> = kernels.iter().map(|k| tape.leaf(k)).collect();
        let b_ids: Vec<VarId> = biases.iter().map(|b| tape.leaf(b)).collect();
        let w_id = tape.leaf(&dense_w);
        let wb_id = tape.leaf(&dense_b);
        let mut h = x;
        for l in 0..layers {
            let c = tape.conv1d_dilated(h, k_ids[l], b_ids[l], 1 + l).unwrap();
            h = tape.relu(c);
        }
        let y = tape.dense_readout(h, w_id, wb_id).unwrap();
        let loss = tape.pseudo_huber_loss(y, t).unwrap();
        let grads = tape.backward(loss).unwrap();

        let h_step = 1e-5;
        let mut worst: f64 = 0.0;
        let mut check = |analytic: &Tensor, perturb: &mut dyn FnMut(usize, f64) -> f64| {
            for idx in 0..analytic.len() {
                let up = perturb(idx, h_step);
                let down = perturb(idx, -h_step);
                let fd = (up - down) / (2.0 * h_step);
                let a = analytic.data()[idx];
                let denom = a.abs().max(fd.abs()).max(1e-6);
                worst = worst.max((a - fd).abs() / denom);
            }
        };
        for l in 0..layers {
            let g = grads.get(k_ids[l]).unwrap().clone();
            check(&g, &mut |idx, eps| {
                let mut k2 = kernels.clone();
                k2[l].data_mut()[idx] += eps;
                forward(&k2, &biases, &dense_w, &dense_b)
            });
            let g = grads.get(b_ids[l]).unwrap().clone();
            check(&g, &mut |idx, eps| {
                let mut b2 = biases.clone();
                b2[l].data_mut()[idx] += eps;
                forward(&kernels, &b2, &dense_w, &dense_b)
            });
        }
        let g = grads.get(wb_id).unwrap().clone();
        check(&g, &mut |idx, eps| {
            let mut b2 = dense_b.clone();
            b2.data_mut()[idx] += eps;
            forward(&kernels, &biases, &dense_w, &b2)
        });
        // Dense weights: every row once, sampled column.
        let g = grads.get(w_id).unwrap().clone();
        let cols = ch * n;
        for row in 0..n {
            let idx = row * cols + (row * 7) % cols;
            let analytic = g.data()[idx];
            let eval = |eps: f64| {
                let mut w2 = dense_w.clone();
                w2.data_mut()[idx] += eps;
                forward(&kernels, &biases, &w2, &dense_b)
            };
            let fd = (eval(h_step) - eval(-h_step)) / (2.0 * h_step);
            let denom = analytic.abs().max(fd.abs()).max(1e-6);
            worst = worst.max((analytic - fd).abs() / denom);
        }
        Some(worst)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut checked = 0;
        let mut seed = 1u64;
        while checked < 4 {
            if let Some(worst) = finite_difference_check(seed) {
                assert!(worst < 1e-4, "seed {seed}: max relative error {worst}");
                checked += 1;
            }
            seed += 1;
        }
    }
}
