//! Reverse-mode tape.
//!
//! Forward calls append nodes holding their output value plus whatever the
//! backward rule needs (im2col buffers, dropout masks). Parameters live
//! outside the tape in a [`ParamStore`]; ops refer to them by [`ParamId`] so
//! a forward pass never copies weights.

use super::gemm::gemm;
use super::{Result, RngState, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    name: String,
    value: Tensor,
    grad: Tensor,
}

impl Parameter {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn grad(&self) -> &Tensor {
        &self.grad
    }
}

/// Owns every trainable parameter of a model, in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let grad = Tensor::zeros(value.shape());
        self.params.push(Parameter {
            name: name.into(),
            value,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    /// Direct write access to a parameter value, used by optimizers and
    /// snapshot restoration.
    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    /// Value and gradient of one parameter, split-borrowed for an update.
    pub fn value_and_grad_mut(&mut self, id: ParamId) -> (&mut [f64], &[f64]) {
        let p = &mut self.params[id.0];
        (p.value.data_mut(), p.grad.data())
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv1d {
        input: NodeId,
        weight: ParamId,
        bias: ParamId,
        cols: Vec<f64>,
        kernel: usize,
    },
    Dense {
        input: NodeId,
        weight: ParamId,
        bias: ParamId,
    },
    Relu {
        input: NodeId,
    },
    Dropout {
        input: NodeId,
        mask: Vec<f64>,
    },
    Reshape {
        input: NodeId,
    },
    Mse {
        pred: NodeId,
        target: NodeId,
    },
    WeightedSum {
        input: NodeId,
        coeffs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Diagnostics from one backward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BackwardReport {
    /// Parameters that did not take part in the recorded graph. Their
    /// gradients were set to zero.
    pub detached: Vec<String>,
    /// Gradients reaching input leaves, by node.
    pub inputs: Vec<(NodeId, Vec<f64>)>,
}

impl BackwardReport {
    pub fn input_grad(&self, node: NodeId) -> Option<&[f64]> {
        self.inputs.iter().find(|(n, _)| *n == node).map(|(_, g)| g.as_slice())
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        // A fresh forward node re-arms backward.
        self.consumed = false;
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Same-padded 1-D convolution over a `[batch, length, channels]` node.
    pub fn conv1d(
        &mut self,
        store: &ParamStore,
        input: NodeId,
        weight: ParamId,
        bias: ParamId,
    ) -> Result<NodeId> {
        let name = store.get(weight).name().to_string();
        let x = self.value(input);
        let (b, l, cin) = match *x.shape() {
            [b, l, c] => (b, l, c),
            _ => return Err(shape_err(&name, "[batch, length, channels]", x.shape())),
        };
        let (k, cout) = conv_dims(&name, store.value(weight), store.value(bias), cin)?;
        let cols = im2col(x.data(), b, l, cin, k);
        let out = conv_from_cols(&cols, b * l, k * cin, store.value(weight), store.value(bias), cout);
        let value = Tensor::new(vec![b, l, cout], out)?;
        Ok(self.push(
            value,
            Op::Conv1d {
                input,
                weight,
                bias,
                cols,
                kernel: k,
            },
        ))
    }

    /// Affine map `x W + b` over a `[batch, in]` node.
    pub fn dense(
        &mut self,
        store: &ParamStore,
        input: NodeId,
        weight: ParamId,
        bias: ParamId,
    ) -> Result<NodeId> {
        let name = store.get(weight).name().to_string();
        let x = self.value(input);
        let (b, n_in) = match *x.shape() {
            [b, n] => (b, n),
            _ => return Err(shape_err(&name, "[batch, features]", x.shape())),
        };
        let n_out = dense_dims(&name, store.value(weight), store.value(bias), n_in)?;
        let out = affine(x.data(), b, n_in, store.value(weight), store.value(bias), n_out);
        let value = Tensor::new(vec![b, n_out], out)?;
        Ok(self.push(value, Op::Dense { input, weight, bias }))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| v.max(0.0)).collect();
        let value = Tensor {
            shape: x.shape().to_vec(),
            data,
        };
        self.push(value, Op::Relu { input })
    }

    pub fn activation(&mut self, input: NodeId, act: Activation) -> NodeId {
        match act {
            Activation::Relu => self.relu(input),
            Activation::Identity => input,
        }
    }

    /// Inverted dropout: units are zeroed with probability `p` and survivors
    /// scaled by `1 / (1 - p)`.
    pub fn dropout(&mut self, input: NodeId, p: f64, rng: &mut RngState) -> Result<NodeId> {
        check_dropout_p(p)?;
        let x = self.value(input);
        let mask = dropout_mask(x.len(), p, rng);
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor {
            shape: x.shape().to_vec(),
            data,
        };
        Ok(self.push(value, Op::Dropout { input, mask }))
    }

    /// Collapses every axis after the first.
    pub fn flatten(&mut self, input: NodeId) -> NodeId {
        let x = self.value(input);
        let b = x.shape().first().copied().unwrap_or(1);
        let rest = if b == 0 { 0 } else { x.len() / b };
        let value = Tensor {
            shape: vec![b, rest],
            data: x.data().to_vec(),
        };
        self.push(value, Op::Reshape { input })
    }

    /// Mean of squared residuals over every element.
    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        let loss = mse_value(self.value(pred), self.value(target))?;
        Ok(self.push(Tensor::scalar(loss), Op::Mse { pred, target }))
    }

    /// `sum_i coeffs[i] * x[i]`; a scalar probe used by gradient checks.
    pub fn weighted_sum(&mut self, input: NodeId, coeffs: Vec<f64>) -> Result<NodeId> {
        let x = self.value(input);
        if coeffs.len() != x.len() {
            return Err(shape_err("weighted_sum", &format!("{} coefficients", x.len()), &[coeffs.len()]));
        }
        let s = x.data().iter().zip(&coeffs).map(|(a, b)| a * b).sum();
        Ok(self.push(Tensor::scalar(s), Op::WeightedSum { input, coeffs }))
    }

    /// Populates the gradient of `loss` for every parameter in `store`.
    ///
    /// Gradients are overwritten, not accumulated across calls. A second call
    /// without a new forward node is an error.
    pub fn backward(&mut self, loss: NodeId, store: &mut ParamStore) -> Result<BackwardReport> {
        if self.consumed {
            return Err(TensorError::BackwardConsumed);
        }
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        lv.ensure_finite("loss")?;

        store.zero_grads();
        let mut touched = vec![false; store.len()];
        let mut inputs = Vec::new();
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => inputs.push((NodeId(idx), g)),
                Op::Conv1d {
                    input,
                    weight,
                    bias,
                    cols,
                    kernel,
                } => {
                    let (b, l, cin) = dims3(self.value(*input));
                    let cout = node.value.shape()[2];
                    let rows = b * l;
                    let kc = kernel * cin;
                    {
                        let p = &mut store.params[weight.0];
                        gemm(kc, rows, cout, cols, true, &g, false, 1.0, p.grad.data_mut());
                    }
                    add_column_sums(&g, rows, cout, store.params[bias.0].grad.data_mut());
                    touched[weight.0] = true;
                    touched[bias.0] = true;
                    let mut dcols = vec![0.0; rows * kc];
                    gemm(rows, cout, kc, &g, false, store.value(*weight).data(), true, 0.0, &mut dcols);
                    let dx = col2im(&dcols, b, l, cin, *kernel);
                    accumulate(&mut grads, *input, dx);
                }
                Op::Dense {
                    input,
                    weight,
                    bias,
                } => {
                    let x = self.value(*input);
                    let (b, n_in) = (x.shape()[0], x.shape()[1]);
                    let n_out = node.value.shape()[1];
                    {
                        let p = &mut store.params[weight.0];
                        gemm(n_in, b, n_out, x.data(), true, &g, false, 1.0, p.grad.data_mut());
                    }
                    add_column_sums(&g, b, n_out, store.params[bias.0].grad.data_mut());
                    touched[weight.0] = true;
                    touched[bias.0] = true;
                    let mut dx = vec![0.0; b * n_in];
                    gemm(b, n_out, n_in, &g, false, store.value(*weight).data(), true, 0.0, &mut dx);
                    accumulate(&mut grads, *input, dx);
                }
                Op::Relu { input } => {
                    let x = self.value(*input);
                    let dx = g
                        .iter()
                        .zip(x.data())
                        .map(|(gv, &xv)| if xv > 0.0 { *gv } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *input, dx);
                }
                Op::Dropout { input, mask } => {
                    let dx = g.iter().zip(mask).map(|(gv, m)| gv * m).collect();
                    accumulate(&mut grads, *input, dx);
                }
                Op::Reshape { input } => accumulate(&mut grads, *input, g),
                Op::Mse { pred, target } => {
                    let p = self.value(*pred).data();
                    let t = self.value(*target).data();
                    let scale = 2.0 * g[0] / p.len() as f64;
                    let dp: Vec<f64> = p.iter().zip(t).map(|(a, b)| scale * (a - b)).collect();
                    let dt = dp.iter().map(|v| -v).collect();
                    accumulate(&mut grads, *pred, dp);
                    accumulate(&mut grads, *target, dt);
                }
                Op::WeightedSum { input, coeffs } => {
                    let dx = coeffs.iter().map(|c| c * g[0]).collect();
                    accumulate(&mut grads, *input, dx);
                }
            }
        }

        for p in &store.params {
            p.grad.ensure_finite(&format!("gradient of {}", p.name))?;
        }
        self.consumed = true;
        let detached = store
            .params
            .iter()
            .zip(&touched)
            .filter(|(_, t)| !**t)
            .map(|(p, _)| p.name.clone())
            .collect();
        inputs.reverse();
        Ok(BackwardReport { detached, inputs })
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], id: NodeId, g: Vec<f64>) {
    match &mut grads[id.0] {
        Some(existing) => existing.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g),
    }
}

fn add_column_sums(g: &[f64], rows: usize, cols: usize, out: &mut [f64]) {
    for r in 0..rows {
        for (o, v) in out.iter_mut().zip(&g[r * cols..(r + 1) * cols]) {
            *o += v;
        }
    }
}

fn dims3(t: &Tensor) -> (usize, usize, usize) {
    let s = t.shape();
    (s[0], s[1], s[2])
}

fn shape_err(layer: &str, expected: &str, found: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        layer: layer.to_string(),
        expected: expected.to_string(),
        found: found.to_vec(),
    }
}

fn conv_dims(name: &str, w: &Tensor, bias: &Tensor, cin: usize) -> Result<(usize, usize)> {
    let (k, wc, cout) = match *w.shape() {
        [k, c, o] => (k, c, o),
        _ => return Err(shape_err(name, "weights [kernel, in, out]", w.shape())),
    };
    if wc != cin {
        return Err(shape_err(name, &format!("input with {wc} channels"), &[cin]));
    }
    if k == 0 {
        return Err(shape_err(name, "kernel >= 1", w.shape()));
    }
    if bias.shape() != [cout] {
        return Err(shape_err(name, &format!("bias [{cout}]"), bias.shape()));
    }
    Ok((k, cout))
}

fn dense_dims(name: &str, w: &Tensor, bias: &Tensor, n_in: usize) -> Result<usize> {
    let (wi, n_out) = match *w.shape() {
        [i, o] => (i, o),
        _ => return Err(shape_err(name, "weights [in, out]", w.shape())),
    };
    if wi != n_in {
        return Err(shape_err(name, &format!("input width {wi}"), &[n_in]));
    }
    if bias.shape() != [n_out] {
        return Err(shape_err(name, &format!("bias [{n_out}]"), bias.shape()));
    }
    Ok(n_out)
}

/// Row `(b, t)` holds the zero-padded receptive field of output step `t`,
/// laid out as `tau * cin + c`, matching the `[k, cin, cout]` weight layout.
fn im2col(x: &[f64], b: usize, l: usize, cin: usize, k: usize) -> Vec<f64> {
    let pad = k / 2;
    let kc = k * cin;
    let mut cols = vec![0.0; b * l * kc];
    for bi in 0..b {
        for t in 0..l {
            let row = &mut cols[(bi * l + t) * kc..(bi * l + t + 1) * kc];
            for tau in 0..k {
                let src = t + tau;
                if src < pad || src - pad >= l {
                    continue;
                }
                let s = (bi * l + src - pad) * cin;
                row[tau * cin..(tau + 1) * cin].copy_from_slice(&x[s..s + cin]);
            }
        }
    }
    cols
}

fn col2im(dcols: &[f64], b: usize, l: usize, cin: usize, k: usize) -> Vec<f64> {
    let pad = k / 2;
    let kc = k * cin;
    let mut dx = vec![0.0; b * l * cin];
    for bi in 0..b {
        for t in 0..l {
            let row = &dcols[(bi * l + t) * kc..(bi * l + t + 1) * kc];
            for tau in 0..k {
                let src = t + tau;
                if src < pad || src - pad >= l {
                    continue;
                }
                let d = (bi * l + src - pad) * cin;
                for (o, v) in dx[d..d + cin].iter_mut().zip(&row[tau * cin..(tau + 1) * cin]) {
                    *o += v;
                }
            }
        }
    }
    dx
}

fn conv_from_cols(cols: &[f64], rows: usize, kc: usize, w: &Tensor, bias: &Tensor, cout: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * cout);
    for _ in 0..rows {
        out.extend_from_slice(bias.data());
    }
    gemm(rows, kc, cout, cols, false, w.data(), false, 1.0, &mut out);
    out
}

fn affine(x: &[f64], b: usize, n_in: usize, w: &Tensor, bias: &Tensor, n_out: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(b * n_out);
    for _ in 0..b {
        out.extend_from_slice(bias.data());
    }
    gemm(b, n_in, n_out, x, false, w.data(), false, 1.0, &mut out);
    out
}

fn check_dropout_p(p: f64) -> Result<()> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(TensorError::Invalid(format!("dropout rate {p} outside [0, 1)")))
    }
}

fn dropout_mask(n: usize, p: f64, rng: &mut RngState) -> Vec<f64> {
    if p == 0.0 {
        return vec![1.0; n];
    }
    let keep = 1.0 / (1.0 - p);
    (0..n)
        .map(|_| if rng.uniform() < p { 0.0 } else { keep })
        .collect()
}

pub(crate) fn mse_value(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(shape_err("mse", &format!("{:?}", pred.shape()), target.shape()));
    }
    if pred.is_empty() {
        return Err(TensorError::Invalid("mse over an empty batch".into()));
    }
    let n = pred.len() as f64;
    Ok(pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Stand-alone same-padded convolution.
///
/// `input` is `[length, in]` or `[batch, length, in]`, `weights` is
/// `[kernel, in, out]`, `bias` is `[out]`; output keeps the input's length.
pub fn conv1d_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (b, l, cin, batched) = match *input.shape() {
        [l, c] => (1, l, c, false),
        [b, l, c] => (b, l, c, true),
        _ => return Err(shape_err("conv1d", "[length, channels]", input.shape())),
    };
    if l == 0 {
        return Err(shape_err("conv1d", "length >= 1", input.shape()));
    }
    let (k, cout) = conv_dims("conv1d", weights, bias, cin)?;
    let cols = im2col(input.data(), b, l, cin, k);
    let out = conv_from_cols(&cols, b * l, k * cin, weights, bias, cout);
    let shape = if batched { vec![b, l, cout] } else { vec![l, cout] };
    Tensor::new(shape, out)
}

/// Stand-alone fully-connected layer with activation. `input` is `[in]` or
/// `[batch, in]`, `weights` is `[in, out]`.
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor, act: Activation) -> Result<Tensor> {
    let (b, n_in, batched) = match *input.shape() {
        [n] => (1, n, false),
        [b, n] => (b, n, true),
        _ => return Err(shape_err("dense", "[features]", input.shape())),
    };
    let n_out = dense_dims("dense", weights, bias, n_in)?;
    let mut out = affine(input.data(), b, n_in, weights, bias, n_out);
    if act == Activation::Relu {
        out.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    let shape = if batched { vec![b, n_out] } else { vec![n_out] };
    Tensor::new(shape, out)
}

/// Stand-alone dropout. In inference mode (`train == false`) it is the
/// identity and consumes no randomness.
pub fn dropout_forward(input: &Tensor, p: f64, train: bool, rng: &mut RngState) -> Result<Tensor> {
    check_dropout_p(p)?;
    if !train {
        return Ok(input.clone());
    }
    let mask = dropout_mask(input.len(), p, rng);
    let data = input.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
    Tensor::new(input.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let x = t(&[4, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let w = t(&[1, 2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let b = Tensor::zeros(&[2]);
        assert_eq!(conv1d_forward(&x, &w, &b).unwrap(), x);
    }

    #[test]
    fn same_padding_keeps_length_for_odd_kernels() {
        for k in [1, 3, 5, 7] {
            let x = Tensor::zeros(&[5, 3]);
            let w = Tensor::zeros(&[k, 3, 2]);
            let out = conv1d_forward(&x, &w, &Tensor::zeros(&[2])).unwrap();
            assert_eq!(out.shape(), &[5, 2]);
        }
    }

    #[test]
    fn conv_shape_mismatch_names_layer() {
        let x = Tensor::zeros(&[5, 3]);
        let w = Tensor::zeros(&[3, 4, 2]);
        let err = conv1d_forward(&x, &w, &Tensor::zeros(&[2])).unwrap_err();
        assert!(err.to_string().contains("conv1d"), "{err}");
    }

    #[test]
    fn relu_dense_clamps() {
        let x = t(&[3], &[-1.0, 0.0, 2.0]);
        let w = t(&[3, 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let out = dense_forward(&x, &w, &Tensor::zeros(&[3]), Activation::Relu).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 2.0]);
        let lin = dense_forward(&x, &w, &Tensor::zeros(&[3]), Activation::Identity).unwrap();
        assert_eq!(lin, x);
    }

    #[test]
    fn linear_loss_gradient_is_input() {
        // loss = sum(x W), so dL/dW[i, j] = x[i].
        let mut store = ParamStore::new();
        let w = store.add("w", t(&[3, 2], &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]));
        let b = store.add("b", Tensor::zeros(&[2]));
        let mut tape = Tape::new();
        let x = tape.input(t(&[1, 3], &[1.0, -2.0, 3.0]));
        let y = tape.dense(&store, x, w, b).unwrap();
        let loss = tape.weighted_sum(y, vec![1.0, 1.0]).unwrap();
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(w).data(), &[1.0, 1.0, -2.0, -2.0, 3.0, 3.0]);
        assert_eq!(store.grad(b).data(), &[1.0, 1.0]);
    }

    #[test]
    fn second_backward_without_forward_fails() {
        let mut store = ParamStore::new();
        let w = store.add("w", t(&[1, 1], &[2.0]));
        let b = store.add("b", Tensor::zeros(&[1]));
        let mut tape = Tape::new();
        let x = tape.input(t(&[1, 1], &[1.0]));
        let y = tape.dense(&store, x, w, b).unwrap();
        let loss = tape.weighted_sum(y, vec![1.0]).unwrap();
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(tape.backward(loss, &mut store), Err(TensorError::BackwardConsumed));
    }

    #[test]
    fn unused_parameter_is_flagged_with_zero_gradient() {
        let mut store = ParamStore::new();
        let w = store.add("w", t(&[1, 1], &[2.0]));
        let b = store.add("b", Tensor::zeros(&[1]));
        let spare = store.add("spare", t(&[2], &[1.0, 1.0]));
        let mut tape = Tape::new();
        let x = tape.input(t(&[1, 1], &[1.0]));
        let y = tape.dense(&store, x, w, b).unwrap();
        let loss = tape.weighted_sum(y, vec![1.0]).unwrap();
        let report = tape.backward(loss, &mut store).unwrap();
        assert_eq!(report.detached, vec!["spare".to_string()]);
        assert_eq!(store.grad(spare).data(), &[0.0, 0.0]);
    }

    #[test]
    fn dropout_infer_and_zero_rate_are_identity() {
        let x = t(&[4], &[1.0, 2.0, 3.0, 4.0]);
        let mut rng = RngState::new(0, "d");
        assert_eq!(dropout_forward(&x, 0.3, false, &mut rng).unwrap(), x);
        assert_eq!(dropout_forward(&x, 0.0, true, &mut rng).unwrap(), x);
        assert!(dropout_forward(&x, 1.0, true, &mut rng).is_err());
    }

    #[test]
    fn mse_of_simple_pair() {
        let p = t(&[1, 2], &[0.0, 0.0]);
        let q = t(&[1, 2], &[3.0, 4.0]);
        assert_eq!(mse_value(&p, &q).unwrap(), 12.5);
        assert_eq!(mse_value(&p, &p).unwrap(), 0.0);
    }
}
