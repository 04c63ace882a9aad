//! Eager reverse-mode differentiation over a per-forward-pass tape.
//!
//! Values are computed at record time; `Graph::backward` consumes the tape,
//! so graphs cannot leak across batches. Gradients of named leaves are
//! accumulated into the owning [`ParamStore`].

use crate::error::{Error, Result};
use crate::kernels::{self, ConvDims};
use crate::store::ParamStore;
use crate::tensor::Tensor;

pub type NodeId = usize;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

enum Op {
    Leaf {
        param: Option<String>,
    },
    Matmul {
        a: NodeId,
        b: NodeId,
    },
    Conv2d {
        input: NodeId,
        kernel: NodeId,
        dims: ConvDims,
    },
    BatchNorm2d {
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        training: bool,
        xhat: Tensor,
        inv_std: Vec<f64>,
    },
    LayerNorm {
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Tensor,
        inv_std: Vec<f64>,
    },
    Relu {
        input: NodeId,
    },
    Gelu {
        input: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    AddBias {
        input: NodeId,
        bias: NodeId,
    },
    GlobalAvgPool {
        input: NodeId,
    },
    Reshape {
        input: NodeId,
    },
    Transpose {
        input: NodeId,
    },
    Sum {
        input: NodeId,
    },
    Scale {
        input: NodeId,
        factor: f64,
    },
    SoftmaxCrossEntropy {
        logits: NodeId,
        probs: Tensor,
        labels: Vec<usize>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Tape of primitive operations recorded during one forward pass.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    /// A leaf holding a constant (e.g. the input batch).
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf { param: None })
    }

    /// A leaf mirroring a named trainable parameter; its gradient flows back
    /// into the store on `backward`.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<NodeId> {
        if !store.is_param(name) {
            return Err(Error::UnknownName(name.to_string()));
        }
        let value = store.value(name)?.clone();
        Ok(self.push(
            value,
            Op::Leaf {
                param: Some(name.to_string()),
            },
        ))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Shape(format!("matmul {sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = kernels::matmul_dispatch(self.value(a).data(), self.value(b).data(), m, k, n);
        let value = Tensor::from_vec(&[m, n], out)?;
        Ok(self.push(value, Op::Matmul { a, b }))
    }

    pub fn conv2d(
        &mut self,
        input: NodeId,
        kernel: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let si = self.value(input).shape().to_vec();
        let sk = self.value(kernel).shape().to_vec();
        if si.len() != 4 || sk.len() != 4 {
            return Err(Error::Shape(format!("conv2d input {si:?} kernel {sk:?}")));
        }
        if si[1] != sk[1] {
            return Err(Error::Shape(format!(
                "conv2d channel mismatch: input {si:?} kernel {sk:?}"
            )));
        }
        let out_len = |dim: usize, k: usize| -> Result<usize> {
            let padded = dim + 2 * padding;
            if padded < k || (padded - k) % stride != 0 {
                return Err(Error::Config(format!(
                    "conv2d output size is not a positive integer: dim {dim}, kernel {k}, \
                     stride {stride}, padding {padding}"
                )));
            }
            Ok((padded - k) / stride + 1)
        };
        let dims = ConvDims {
            batch: si[0],
            c_in: si[1],
            h: si[2],
            w: si[3],
            c_out: sk[0],
            kh: sk[2],
            kw: sk[3],
            stride,
            padding,
            h_out: out_len(si[2], sk[2])?,
            w_out: out_len(si[3], sk[3])?,
        };
        let out =
            kernels::conv2d_forward_dispatch(self.value(input).data(), self.value(kernel).data(), &dims);
        let value = Tensor::from_vec(&[dims.batch, dims.c_out, dims.h_out, dims.w_out], out)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                kernel,
                dims,
            },
        ))
    }

    /// Batch normalization over an NCHW tensor. In training mode the batch
    /// statistics normalize and the running buffers are updated in place by
    /// exponential moving average; in eval mode the running buffers are used.
    #[allow(clippy::too_many_arguments)]
    pub fn batchnorm2d(
        &mut self,
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running_mean: &mut Tensor,
        running_var: &mut Tensor,
        training: bool,
        momentum: f64,
        eps: f64,
    ) -> Result<NodeId> {
        let shape = self.value(input).shape().to_vec();
        if shape.len() != 4 {
            return Err(Error::Shape(format!("batchnorm2d input {shape:?}")));
        }
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        if n == 0 {
            return Err(Error::Shape("batchnorm2d: zero batch size".into()));
        }
        for (label, t) in [
            ("gamma", self.value(gamma).shape()),
            ("beta", self.value(beta).shape()),
            ("running_mean", running_mean.shape()),
            ("running_var", running_var.shape()),
        ] {
            if t != [c] {
                return Err(Error::Shape(format!(
                    "batchnorm2d {label} shape {t:?}, expected [{c}]"
                )));
            }
        }
        let m = (n * h * w) as f64;
        let x = self.value(input).data();
        let plane = h * w;
        let img = c * plane;
        let (mean, var) = if training {
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for ch in 0..c {
                let mut s = 0.0;
                for b in 0..n {
                    for p in 0..plane {
                        s += x[b * img + ch * plane + p];
                    }
                }
                mean[ch] = s / m;
                let mut v = 0.0;
                for b in 0..n {
                    for p in 0..plane {
                        let d = x[b * img + ch * plane + p] - mean[ch];
                        v += d * d;
                    }
                }
                var[ch] = v / m;
            }
            // running stats use the unbiased variance when possible
            let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
            for ch in 0..c {
                running_mean.data_mut()[ch] =
                    (1.0 - momentum) * running_mean.data()[ch] + momentum * mean[ch];
                running_var.data_mut()[ch] =
                    (1.0 - momentum) * running_var.data()[ch] + momentum * var[ch] * unbias;
            }
            (mean, var)
        } else {
            (running_mean.data().to_vec(), running_var.data().to_vec())
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = vec![0.0; x.len()];
        for b in 0..n {
            for ch in 0..c {
                for p in 0..plane {
                    let i = b * img + ch * plane + p;
                    xhat[i] = (x[i] - mean[ch]) * inv_std[ch];
                }
            }
        }
        let g = self.value(gamma).data().to_vec();
        let be = self.value(beta).data().to_vec();
        let mut out = vec![0.0; x.len()];
        for b in 0..n {
            for ch in 0..c {
                for p in 0..plane {
                    let i = b * img + ch * plane + p;
                    out[i] = g[ch] * xhat[i] + be[ch];
                }
            }
        }
        let value = Tensor::from_vec(&shape, out)?;
        let xhat = Tensor::from_vec(&shape, xhat)?;
        Ok(self.push(
            value,
            Op::BatchNorm2d {
                input,
                gamma,
                beta,
                training,
                xhat,
                inv_std,
            },
        ))
    }

    /// Layer normalization over the last dimension of a 2-D tensor.
    pub fn layernorm(
        &mut self,
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f64,
    ) -> Result<NodeId> {
        let shape = self.value(input).shape().to_vec();
        if shape.len() != 2 {
            return Err(Error::Shape(format!("layernorm input {shape:?}")));
        }
        let (rows, d) = (shape[0], shape[1]);
        if self.value(gamma).shape() != [d] || self.value(beta).shape() != [d] {
            return Err(Error::Shape(format!(
                "layernorm affine shapes {:?}/{:?}, expected [{d}]",
                self.value(gamma).shape(),
                self.value(beta).shape()
            )));
        }
        let x = self.value(input).data();
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; rows];
        for r in 0..rows {
            let row = &x[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for i in 0..d {
                xhat[r * d + i] = (row[i] - mean) * is;
            }
        }
        let g = self.value(gamma).data().to_vec();
        let be = self.value(beta).data().to_vec();
        let mut out = vec![0.0; x.len()];
        for r in 0..rows {
            for i in 0..d {
                out[r * d + i] = g[i] * xhat[r * d + i] + be[i];
            }
        }
        let value = Tensor::from_vec(&shape, out)?;
        let xhat = Tensor::from_vec(&shape, xhat)?;
        Ok(self.push(
            value,
            Op::LayerNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        ))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let mut value = self.value(input).clone();
        for v in value.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        self.push(value, Op::Relu { input })
    }

    /// GELU in the common tanh approximation.
    pub fn gelu(&mut self, input: NodeId) -> NodeId {
        let mut value = self.value(input).clone();
        for v in value.data_mut() {
            let x = *v;
            let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
            *v = 0.5 * x * (1.0 + t);
        }
        self.push(value, Op::Gelu { input })
    }

    /// Elementwise sum of two same-shape tensors (residual connections).
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Shape(format!(
                "add {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b))?;
        Ok(self.push(value, Op::Add { a, b }))
    }

    /// Broadcast-add a 1-D bias over the columns of a 2-D tensor.
    pub fn add_bias(&mut self, input: NodeId, bias: NodeId) -> Result<NodeId> {
        let si = self.value(input).shape().to_vec();
        let sb = self.value(bias).shape();
        if si.len() != 2 || sb.len() != 1 || sb[0] != si[1] {
            return Err(Error::Shape(format!("add_bias {si:?} + {sb:?}")));
        }
        let d = si[1];
        let b = self.value(bias).data().to_vec();
        let mut value = self.value(input).clone();
        for (i, v) in value.data_mut().iter_mut().enumerate() {
            *v += b[i % d];
        }
        Ok(self.push(value, Op::AddBias { input, bias }))
    }

    /// NCHW -> NC mean over the spatial dimensions.
    pub fn global_avg_pool(&mut self, input: NodeId) -> Result<NodeId> {
        let s = self.value(input).shape().to_vec();
        if s.len() != 4 {
            return Err(Error::Shape(format!("global_avg_pool input {s:?}")));
        }
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let plane = h * w;
        let x = self.value(input).data();
        let mut out = vec![0.0; n * c];
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * plane;
                out[b * c + ch] = x[base..base + plane].iter().sum::<f64>() / plane as f64;
            }
        }
        let value = Tensor::from_vec(&[n, c], out)?;
        Ok(self.push(value, Op::GlobalAvgPool { input }))
    }

    pub fn reshape(&mut self, input: NodeId, shape: &[usize]) -> Result<NodeId> {
        let value = self.value(input).reshape(shape)?;
        Ok(self.push(value, Op::Reshape { input }))
    }

    /// Collapse all trailing dimensions: [N, ...] -> [N, rest].
    pub fn flatten(&mut self, input: NodeId) -> Result<NodeId> {
        let s = self.value(input).shape().to_vec();
        if s.is_empty() {
            return Err(Error::Shape("flatten of 0-d tensor".into()));
        }
        let rest: usize = s[1..].iter().product();
        self.reshape(input, &[s[0], rest])
    }

    /// 2-D transpose.
    pub fn transpose(&mut self, input: NodeId) -> Result<NodeId> {
        let s = self.value(input).shape().to_vec();
        if s.len() != 2 {
            return Err(Error::Shape(format!("transpose of {s:?}")));
        }
        let out = transpose(self.value(input).data(), s[0], s[1]);
        let value = Tensor::from_vec(&[s[1], s[0]], out)?;
        Ok(self.push(value, Op::Transpose { input }))
    }

    pub fn sum(&mut self, input: NodeId) -> NodeId {
        let total: f64 = self.value(input).data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum { input })
    }

    pub fn scale(&mut self, input: NodeId, factor: f64) -> NodeId {
        let mut value = self.value(input).clone();
        for v in value.data_mut() {
            *v *= factor;
        }
        self.push(value, Op::Scale { input, factor })
    }

    /// Mean cross-entropy of softmaxed logits against integer labels.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let s = self.value(logits).shape().to_vec();
        if s.len() != 2 {
            return Err(Error::Shape(format!("softmax_cross_entropy logits {s:?}")));
        }
        let (n, c) = (s[0], s[1]);
        if labels.len() != n {
            return Err(Error::Shape(format!(
                "softmax_cross_entropy: {n} rows but {} labels",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::Data(format!("label {bad} out of range 0..{c}")));
        }
        let x = self.value(logits).data();
        let mut probs = vec![0.0; n * c];
        let mut loss = 0.0;
        for r in 0..n {
            let row = &x[r * c..(r + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for i in 0..c {
                let e = (row[i] - max).exp();
                probs[r * c + i] = e;
                z += e;
            }
            for i in 0..c {
                probs[r * c + i] /= z;
            }
            loss -= probs[r * c + labels[r]].ln();
        }
        loss /= n as f64;
        let probs = Tensor::from_vec(&[n, c], probs)?;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                labels: labels.to_vec(),
            },
        ))
    }

    /// Reverse traversal from `loss`, accumulating parameter gradients into
    /// `store`. Consumes the tape.
    pub fn backward(self, loss: NodeId, store: &mut ParamStore) -> Result<()> {
        if loss >= self.nodes.len() {
            return Err(Error::Usage(format!(
                "backward: node {loss} was never recorded"
            )));
        }
        if self.nodes[loss].value.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward: loss must be scalar, got shape {:?}",
                self.nodes[loss].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss] = Some(Tensor::ones(&[1]));
        for id in (0..=loss).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf { param } => {
                    if let Some(name) = param {
                        store.accumulate_grad(name, &g)?;
                    }
                }
                Op::Matmul { a, b } => {
                    let (m, n) = (node.value.shape()[0], node.value.shape()[1]);
                    let k = self.nodes[*a].value.shape()[1];
                    // dA = dC * B^T
                    let bt = transpose(self.nodes[*b].value.data(), k, n);
                    let da = kernels::matmul_dispatch(g.data(), &bt, m, n, k);
                    accumulate(&mut grads, *a, Tensor::from_vec(&[m, k], da)?)?;
                    // dB = A^T * dC
                    let at = transpose(self.nodes[*a].value.data(), m, k);
                    let db = kernels::matmul_dispatch(&at, g.data(), k, m, n);
                    accumulate(&mut grads, *b, Tensor::from_vec(&[k, n], db)?)?;
                }
                Op::Conv2d {
                    input,
                    kernel,
                    dims,
                } => {
                    let gin = kernels::conv2d_grad_input_dispatch(
                        g.data(),
                        self.nodes[*kernel].value.data(),
                        dims,
                    );
                    accumulate(
                        &mut grads,
                        *input,
                        Tensor::from_vec(self.nodes[*input].value.shape(), gin)?,
                    )?;
                    let gker = kernels::conv2d_grad_kernel_dispatch(
                        self.nodes[*input].value.data(),
                        g.data(),
                        dims,
                    );
                    accumulate(
                        &mut grads,
                        *kernel,
                        Tensor::from_vec(self.nodes[*kernel].value.shape(), gker)?,
                    )?;
                }
                Op::BatchNorm2d {
                    input,
                    gamma,
                    beta,
                    training,
                    xhat,
                    inv_std,
                } => {
                    let shape = self.nodes[*input].value.shape();
                    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
                    let plane = h * w;
                    let img = c * plane;
                    let m = (n * plane) as f64;
                    let gv = self.nodes[*gamma].value.data();
                    let mut dgamma = vec![0.0; c];
                    let mut dbeta = vec![0.0; c];
                    let mut sum_dxhat = vec![0.0; c];
                    let mut sum_dxhat_xhat = vec![0.0; c];
                    for b in 0..n {
                        for ch in 0..c {
                            for p in 0..plane {
                                let i = b * img + ch * plane + p;
                                let dy = g.data()[i];
                                dgamma[ch] += dy * xhat.data()[i];
                                dbeta[ch] += dy;
                                let dxh = dy * gv[ch];
                                sum_dxhat[ch] += dxh;
                                sum_dxhat_xhat[ch] += dxh * xhat.data()[i];
                            }
                        }
                    }
                    let mut dx = vec![0.0; n * img];
                    for b in 0..n {
                        for ch in 0..c {
                            for p in 0..plane {
                                let i = b * img + ch * plane + p;
                                let dxh = g.data()[i] * gv[ch];
                                dx[i] = if *training {
                                    inv_std[ch] / m
                                        * (m * dxh
                                            - sum_dxhat[ch]
                                            - xhat.data()[i] * sum_dxhat_xhat[ch])
                                } else {
                                    dxh * inv_std[ch]
                                };
                            }
                        }
                    }
                    accumulate(&mut grads, *input, Tensor::from_vec(shape, dx)?)?;
                    accumulate(&mut grads, *gamma, Tensor::from_vec(&[c], dgamma)?)?;
                    accumulate(&mut grads, *beta, Tensor::from_vec(&[c], dbeta)?)?;
                }
                Op::LayerNorm {
                    input,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let shape = self.nodes[*input].value.shape();
                    let (rows, d) = (shape[0], shape[1]);
                    let gv = self.nodes[*gamma].value.data();
                    let mut dgamma = vec![0.0; d];
                    let mut dbeta = vec![0.0; d];
                    let mut dx = vec![0.0; rows * d];
                    for r in 0..rows {
                        let mut sum_dxhat = 0.0;
                        let mut sum_dxhat_xhat = 0.0;
                        for i in 0..d {
                            let idx = r * d + i;
                            let dy = g.data()[idx];
                            dgamma[i] += dy * xhat.data()[idx];
                            dbeta[i] += dy;
                            let dxh = dy * gv[i];
                            sum_dxhat += dxh;
                            sum_dxhat_xhat += dxh * xhat.data()[idx];
                        }
                        let dn = d as f64;
                        for i in 0..d {
                            let idx = r * d + i;
                            let dxh = g.data()[idx] * gv[i];
                            dx[idx] = inv_std[r] / dn
                                * (dn * dxh - sum_dxhat - xhat.data()[idx] * sum_dxhat_xhat);
                        }
                    }
                    accumulate(&mut grads, *input, Tensor::from_vec(shape, dx)?)?;
                    accumulate(&mut grads, *gamma, Tensor::from_vec(&[d], dgamma)?)?;
                    accumulate(&mut grads, *beta, Tensor::from_vec(&[d], dbeta)?)?;
                }
                Op::Relu { input } => {
                    let x = self.nodes[*input].value.data();
                    let mut dx = g.clone();
                    for (d, &xv) in dx.data_mut().iter_mut().zip(x.iter()) {
                        if xv <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    accumulate(&mut grads, *input, dx)?;
                }
                Op::Gelu { input } => {
                    let x = self.nodes[*input].value.data();
                    let mut dx = g.clone();
                    for (d, &xv) in dx.data_mut().iter_mut().zip(x.iter()) {
                        let inner = GELU_C * (xv + GELU_A * xv * xv * xv);
                        let t = inner.tanh();
                        let dinner = GELU_C * (1.0 + 3.0 * GELU_A * xv * xv);
                        *d *= 0.5 * (1.0 + t) + 0.5 * xv * (1.0 - t * t) * dinner;
                    }
                    accumulate(&mut grads, *input, dx)?;
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, g)?;
                }
                Op::AddBias { input, bias } => {
                    let d = self.nodes[*bias].value.shape()[0];
                    let mut db = vec![0.0; d];
                    for (i, v) in g.data().iter().enumerate() {
                        db[i % d] += v;
                    }
                    accumulate(&mut grads, *bias, Tensor::from_vec(&[d], db)?)?;
                    accumulate(&mut grads, *input, g)?;
                }
                Op::GlobalAvgPool { input } => {
                    let shape = self.nodes[*input].value.shape();
                    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
                    let plane = h * w;
                    let mut dx = vec![0.0; n * c * plane];
                    for b in 0..n {
                        for ch in 0..c {
                            let gv = g.data()[b * c + ch] / plane as f64;
                            for p in 0..plane {
                                dx[(b * c + ch) * plane + p] = gv;
                            }
                        }
                    }
                    accumulate(&mut grads, *input, Tensor::from_vec(shape, dx)?)?;
                }
                Op::Reshape { input } => {
                    let back = g.reshape(self.nodes[*input].value.shape())?;
                    accumulate(&mut grads, *input, back)?;
                }
                Op::Transpose { input } => {
                    let s = node.value.shape();
                    let back = transpose(g.data(), s[0], s[1]);
                    accumulate(
                        &mut grads,
                        *input,
                        Tensor::from_vec(&[s[1], s[0]], back)?,
                    )?;
                }
                Op::Sum { input } => {
                    let gv = g.data()[0];
                    accumulate(
                        &mut grads,
                        *input,
                        Tensor::full(self.nodes[*input].value.shape(), gv),
                    )?;
                }
                Op::Scale { input, factor } => {
                    let mut dx = g;
                    for v in dx.data_mut() {
                        *v *= factor;
                    }
                    accumulate(&mut grads, *input, dx)?;
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    probs,
                    labels,
                } => {
                    let (n, c) = (probs.shape()[0], probs.shape()[1]);
                    let gv = g.data()[0] / n as f64;
                    let mut dl = probs.data().to_vec();
                    for (r, &label) in labels.iter().enumerate() {
                        dl[r * c + label] -= 1.0;
                    }
                    for v in &mut dl {
                        *v *= gv;
                    }
                    accumulate(&mut grads, *logits, Tensor::from_vec(&[n, c], dl)?)?;
                }
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, t: Tensor) -> Result<()> {
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&t),
        slot @ None => {
            *slot = Some(t);
            Ok(())
        }
    }
}

fn transpose(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}
