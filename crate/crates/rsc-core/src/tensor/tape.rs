//! Record/replay reverse-mode differentiation.
//!
//! A [`Tape`] owns every tensor produced during a forward computation together
//! with the operation that produced it. Operations are appended in execution
//! order, so the record is topologically sorted by construction; [`Tape::grad`]
//! replays it once in reverse, accumulating vector-Jacobian products.

use super::kernels::{self, ConvDims};
use super::Tensor;
use crate::error::{Error, Result};

/// Reference to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(usize);

enum Op {
    Leaf,
    /// out[m,n] = a[m,k] @ b[k,n]
    MatMul { a: ValueId, b: ValueId },
    /// out[m,n] = a[m,n] + bias[n] per row
    AddBias { a: ValueId, bias: ValueId },
    /// stride-1 same-padding convolution, NHWC
    Conv2d { input: ValueId, kernel: ValueId, bias: ValueId, dims: ConvDims },
    Relu { input: ValueId },
    /// mean over the given axes (sorted, deduplicated); reduced axes removed
    MeanAxes { input: ValueId, axes: Vec<usize> },
    /// same data, new shape
    Reshape { input: ValueId },
    /// elementwise product of equally-shaped tensors
    Mul { a: ValueId, b: ValueId },
    /// scalar sum of all entries in row-major order
    SumAll { input: ValueId },
    /// mean over rows of -log softmax(logits)[true class]; saves the softmax
    SoftmaxCrossEntropy { logits: ValueId, labels: ValueId, probs: Tensor },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// The computation record: executed operations with their saved values.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Register an input tensor (parameter, batch, constant) on the tape.
    pub fn leaf(&mut self, value: Tensor) -> ValueId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: ValueId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: ValueId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op) -> ValueId {
        self.nodes.push(Node { value, op });
        ValueId(self.nodes.len() - 1)
    }

    /// out = a @ b for a: [m,k], b: [k,n].
    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch { op: "matmul", lhs: sa.to_vec(), rhs: sb.to_vec() });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = Tensor::zeros(vec![m, n]);
        kernels::matmul(self.value(a).data(), self.value(b).data(), out.data_mut(), m, k, n);
        Ok(self.push(out, Op::MatMul { a, b }))
    }

    /// out = a + bias broadcast over rows, a: [m,n], bias: [n].
    pub fn add_bias(&mut self, a: ValueId, bias: ValueId) -> Result<ValueId> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sa.len() != 2 || sb.len() != 1 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch { op: "add_bias", lhs: sa.to_vec(), rhs: sb.to_vec() });
        }
        let n = sa[1];
        let mut out = self.value(a).clone();
        let bias_data = self.value(bias).data().to_vec();
        for row in out.data_mut().chunks_mut(n) {
            for (o, b) in row.iter_mut().zip(&bias_data) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddBias { a, bias }))
    }

    /// Stride-1 zero-padded convolution preserving spatial size.
    /// input: [B,H,W,Ci], kernel: [kh,kw,Ci,Co] with odd kh/kw, bias: [Co].
    pub fn conv2d(&mut self, input: ValueId, kernel: ValueId, bias: ValueId) -> Result<ValueId> {
        let (si, sk, sb) = (
            self.shape(input).to_vec(),
            self.shape(kernel).to_vec(),
            self.shape(bias).to_vec(),
        );
        let compatible = si.len() == 4
            && sk.len() == 4
            && sb.len() == 1
            && si[3] == sk[2]
            && sk[3] == sb[0]
            && sk[0] % 2 == 1
            && sk[1] % 2 == 1;
        if !compatible {
            return Err(Error::ShapeMismatch { op: "conv2d", lhs: si, rhs: sk });
        }
        let dims = ConvDims {
            batch: si[0],
            height: si[1],
            width: si[2],
            in_channels: si[3],
            out_channels: sk[3],
            kh: sk[0],
            kw: sk[1],
        };
        let mut out = Tensor::zeros(vec![dims.batch, dims.height, dims.width, dims.out_channels]);
        kernels::conv2d_forward(
            self.value(input).data(),
            self.value(kernel).data(),
            self.value(bias).data(),
            dims,
            out.data_mut(),
        );
        Ok(self.push(out, Op::Conv2d { input, kernel, bias, dims }))
    }

    /// Elementwise max(x, 0). The subgradient at exactly 0 is 0.
    pub fn relu(&mut self, input: ValueId) -> Result<ValueId> {
        let mut out = self.value(input).clone();
        for v in out.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Ok(self.push(out, Op::Relu { input }))
    }

    /// Mean over the given axes; reduced axes are removed from the shape.
    pub fn mean_axes(&mut self, input: ValueId, axes: &[usize]) -> Result<ValueId> {
        let shape = self.shape(input).to_vec();
        let mut axes = axes.to_vec();
        axes.sort_unstable();
        axes.dedup();
        if axes.is_empty() || axes.iter().any(|&a| a >= shape.len()) {
            return Err(Error::ShapeMismatch { op: "mean_axes", lhs: shape, rhs: axes });
        }
        let out_shape: Vec<usize> = shape
            .iter()
            .enumerate()
            .filter(|(i, _)| !axes.contains(i))
            .map(|(_, &d)| d)
            .collect();
        let out_shape = if out_shape.is_empty() { vec![1] } else { out_shape };
        let count: usize = axes.iter().map(|&a| shape[a]).product();
        let mut out = Tensor::zeros(out_shape);
        // scatter-accumulate in input row-major order, then scale
        let map = ReducedIndexMap::new(&shape, &axes);
        let in_data = self.value(input).data();
        let out_data = out.data_mut();
        for (i, v) in in_data.iter().enumerate() {
            out_data[map.out_index(i)] += v;
        }
        let inv = 1.0 / count as f64;
        for v in out_data.iter_mut() {
            *v *= inv;
        }
        Ok(self.push(out, Op::MeanAxes { input, axes }))
    }

    /// Same data reinterpreted under a new shape.
    pub fn reshape(&mut self, input: ValueId, shape: Vec<usize>) -> Result<ValueId> {
        let numel: usize = shape.iter().product();
        if numel != self.value(input).numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape(input).to_vec(),
                rhs: shape,
            });
        }
        let out = self.value(input).reshaped(shape)?;
        Ok(self.push(out, Op::Reshape { input }))
    }

    /// Flatten every axis after the leading (batch) one.
    pub fn flatten(&mut self, input: ValueId) -> Result<ValueId> {
        let shape = self.shape(input).to_vec();
        let b = shape[0];
        let rest: usize = shape[1..].iter().product();
        self.reshape(input, vec![b, rest])
    }

    /// Elementwise product; shapes must match exactly.
    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op: "mul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let mut out = self.value(a).clone();
        for (o, bv) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o *= bv;
        }
        Ok(self.push(out, Op::Mul { a, b }))
    }

    /// Scalar sum of all entries, accumulated in row-major order.
    pub fn sum_all(&mut self, input: ValueId) -> Result<ValueId> {
        let total: f64 = self.value(input).data().iter().sum();
        Ok(self.push(Tensor::scalar(total), Op::SumAll { input }))
    }

    /// Mean over the batch of -log softmax(logits)[true class].
    /// logits: [B,K]; labels: [B,K] strictly one-hot.
    pub fn softmax_cross_entropy(&mut self, logits: ValueId, labels: ValueId) -> Result<ValueId> {
        let (sl, sy) = (self.shape(logits), self.shape(labels));
        if sl.len() != 2 || sl != sy {
            return Err(Error::ShapeMismatch {
                op: "softmax_cross_entropy",
                lhs: sl.to_vec(),
                rhs: sy.to_vec(),
            });
        }
        let losses = per_sample_cross_entropy(self.value(logits), self.value(labels))?;
        let batch = losses.len();
        let mean = losses.iter().sum::<f64>() / batch as f64;
        let probs = softmax_rows(self.value(logits));
        Ok(self.push(Tensor::scalar(mean), Op::SoftmaxCrossEntropy { logits, labels, probs }))
    }

    /// Gradient of a scalar output with respect to each `wrt` reference.
    ///
    /// References that did not contribute to the output get a zero tensor of
    /// their own shape; forward values are never mutated.
    pub fn grad(&self, output: ValueId, wrt: &[ValueId]) -> Result<Vec<Tensor>> {
        if self.value(output).numel() != 1 {
            return Err(Error::InvalidTensor(format!(
                "grad requires a scalar output, got shape {:?}",
                self.shape(output)
            )));
        }
        let mut accum: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        accum[output.0] = Some(vec![1.0]);
        // Inputs of an op always precede its output, so nothing at or below
        // the earliest wrt id can receive gradient from it.
        let floor = wrt.iter().map(|w| w.0).min().unwrap_or(0);
        for id in (floor..=output.0).rev() {
            let Some(d_out) = accum[id].take() else { continue };
            self.backward_op(id, &d_out, &mut accum);
            accum[id] = Some(d_out);
        }
        Ok(wrt
            .iter()
            .map(|w| {
                let shape = self.shape(*w).to_vec();
                match &accum[w.0] {
                    Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
                    None => Tensor::zeros(shape),
                }
            })
            .collect())
    }

    fn accumulate(accum: &mut Vec<Option<Vec<f64>>>, id: ValueId, contribution: &[f64]) {
        match &mut accum[id.0] {
            Some(existing) => {
                for (e, c) in existing.iter_mut().zip(contribution) {
                    *e += c;
                }
            }
            None => accum[id.0] = Some(contribution.to_vec()),
        }
    }

    fn backward_op(&self, id: usize, d_out: &[f64], accum: &mut Vec<Option<Vec<f64>>>) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let mut d_a = vec![0.0; m * k];
                kernels::matmul_nt(d_out, self.value(*b).data(), &mut d_a, m, n, k);
                Self::accumulate(accum, *a, &d_a);
                let mut d_b = vec![0.0; k * n];
                kernels::matmul_tn(self.value(*a).data(), d_out, &mut d_b, m, k, n);
                Self::accumulate(accum, *b, &d_b);
            }
            Op::AddBias { a, bias } => {
                Self::accumulate(accum, *a, d_out);
                let n = self.shape(*bias)[0];
                let mut d_bias = vec![0.0; n];
                for row in d_out.chunks(n) {
                    for (d, v) in d_bias.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                Self::accumulate(accum, *bias, &d_bias);
            }
            Op::Conv2d { input, kernel, bias, dims } => {
                let mut d_in = vec![0.0; self.value(*input).numel()];
                kernels::conv2d_backward_input(d_out, self.value(*kernel).data(), *dims, &mut d_in);
                Self::accumulate(accum, *input, &d_in);
                let mut d_k = vec![0.0; self.value(*kernel).numel()];
                kernels::conv2d_backward_kernel(self.value(*input).data(), d_out, *dims, &mut d_k);
                Self::accumulate(accum, *kernel, &d_k);
                let mut d_b = vec![0.0; self.value(*bias).numel()];
                kernels::conv2d_backward_bias(d_out, *dims, &mut d_b);
                Self::accumulate(accum, *bias, &d_b);
            }
            Op::Relu { input } => {
                let d_in: Vec<f64> = self
                    .value(*input)
                    .data()
                    .iter()
                    .zip(d_out)
                    .map(|(x, d)| if *x > 0.0 { *d } else { 0.0 })
                    .collect();
                Self::accumulate(accum, *input, &d_in);
            }
            Op::MeanAxes { input, axes } => {
                let shape = self.shape(*input).to_vec();
                let count: usize = axes.iter().map(|&a| shape[a]).product();
                let inv = 1.0 / count as f64;
                let map = ReducedIndexMap::new(&shape, axes);
                let mut d_in = vec![0.0; self.value(*input).numel()];
                for (i, d) in d_in.iter_mut().enumerate() {
                    *d = d_out[map.out_index(i)] * inv;
                }
                Self::accumulate(accum, *input, &d_in);
            }
            Op::Reshape { input } => {
                Self::accumulate(accum, *input, d_out);
            }
            Op::Mul { a, b } => {
                let d_a: Vec<f64> = d_out.iter().zip(self.value(*b).data()).map(|(d, v)| d * v).collect();
                Self::accumulate(accum, *a, &d_a);
                let d_b: Vec<f64> = d_out.iter().zip(self.value(*a).data()).map(|(d, v)| d * v).collect();
                Self::accumulate(accum, *b, &d_b);
            }
            Op::SumAll { input } => {
                let d_in = vec![d_out[0]; self.value(*input).numel()];
                Self::accumulate(accum, *input, &d_in);
            }
            Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                let k = self.shape(*logits)[1];
                let batch = self.shape(*logits)[0];
                let scale = d_out[0] / batch as f64;
                let y = self.value(*labels).data();
                let d_logits: Vec<f64> = probs
                    .data()
                    .iter()
                    .zip(y)
                    .map(|(p, t)| (p - t) * scale)
                    .collect();
                Self::accumulate(accum, *logits, &d_logits);
                // d/dy of mean(sum_k y_k (lse - logit_k)) = (lse - logit_k)/B
                let logit_data = self.value(*logits).data();
                let mut d_labels = vec![0.0; logit_data.len()];
                for (row, d_row) in logit_data.chunks(k).zip(d_labels.chunks_mut(k)) {
                    let lse = log_sum_exp(row);
                    for (d, l) in d_row.iter_mut().zip(row) {
                        *d = (lse - l) * scale;
                    }
                }
                Self::accumulate(accum, *labels, &d_labels);
            }
        }
    }
}

/// Maps a flat row-major input index to the flat index of the output with the
/// given axes reduced away.
struct ReducedIndexMap {
    in_strides: Vec<usize>,
    out_strides: Vec<usize>, // 0 for reduced axes
    in_shape: Vec<usize>,
}

impl ReducedIndexMap {
    fn new(shape: &[usize], axes: &[usize]) -> Self {
        let mut in_strides = vec![1; shape.len()];
        for i in (0..shape.len().saturating_sub(1)).rev() {
            in_strides[i] = in_strides[i + 1] * shape[i + 1];
        }
        let mut out_strides = vec![0; shape.len()];
        let mut stride = 1;
        for i in (0..shape.len()).rev() {
            if !axes.contains(&i) {
                out_strides[i] = stride;
                stride *= shape[i];
            }
        }
        ReducedIndexMap { in_strides, out_strides, in_shape: shape.to_vec() }
    }

    #[inline]
    fn out_index(&self, flat: usize) -> usize {
        let mut rem = flat;
        let mut out = 0;
        for i in 0..self.in_shape.len() {
            let coord = rem / self.in_strides[i];
            rem %= self.in_strides[i];
            out += coord * self.out_strides[i];
        }
        out
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

fn softmax_rows(logits: &Tensor) -> Tensor {
    let k = logits.shape()[1];
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(k) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Per-sample cross-entropy -log softmax(logits)[true class].
///
/// Validates that every label row is strictly one-hot.
pub fn per_sample_cross_entropy(logits: &Tensor, labels: &Tensor) -> Result<Vec<f64>> {
    let k = logits.shape()[1];
    let mut losses = Vec::with_capacity(logits.shape()[0]);
    for (row, y) in logits.data().chunks(k).zip(labels.data().chunks(k)) {
        let mut true_logit = None;
        for (l, t) in row.iter().zip(y) {
            if *t == 1.0 {
                if true_logit.is_some() {
                    return Err(Error::InvalidData("label row with multiple ones".into()));
                }
                true_logit = Some(*l);
            } else if *t != 0.0 {
                return Err(Error::InvalidData(format!("label entry {t} is not 0 or 1")));
            }
        }
        let true_logit =
            true_logit.ok_or_else(|| Error::InvalidData("label row without a one".into()))?;
        losses.push(log_sum_exp(row) - true_logit);
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::super::gradcheck::{finite_diff, max_relative_error};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn relu_definition() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap());
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn matmul_identity_passthrough() {
        let mut tape = Tape::new();
        let eye = tape.leaf(
            Tensor::new(vec![3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap(),
        );
        let x = tape.leaf(Tensor::new(vec![3, 1], vec![0.5, -2.0, 3.25]).unwrap());
        let y = tape.matmul(eye, x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, -2.0, 3.25]);
    }

    #[test]
    fn linear_form_gradient() {
        // scalar = w . z with w=[1,2], z=[3,4]; d/dz = w
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap());
        let z = tape.leaf(Tensor::new(vec![2, 1], vec![3.0, 4.0]).unwrap());
        let s = tape.matmul(w, z).unwrap();
        let g = tape.grad(s, &[z]).unwrap();
        assert_eq!(g[0].data(), &[1.0, 2.0]);
    }

    #[test]
    fn relu_subgradient() {
        // scalar = sum(relu(z)), z=[-1,5] -> grad [0,1]
        let mut tape = Tape::new();
        let z = tape.leaf(Tensor::new(vec![2], vec![-1.0, 5.0]).unwrap());
        let r = tape.relu(z).unwrap();
        let s = tape.sum_all(r).unwrap();
        let g = tape.grad(s, &[z]).unwrap();
        assert_eq!(g[0].data(), &[0.0, 1.0]);
    }

    #[test]
    fn off_path_reference_gets_zeros() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(2.0));
        let unused = tape.leaf(Tensor::new(vec![3], vec![1.0, 1.0, 1.0]).unwrap());
        let s = tape.sum_all(x).unwrap();
        let g = tape.grad(s, &[unused]).unwrap();
        assert_eq!(g[0].data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn shape_mismatch_errors_name_op_and_shapes() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(vec![2, 3]));
        let b = tape.leaf(Tensor::zeros(vec![2, 3]));
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("matmul") && msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn mask_multiplication_backward_is_exact() {
        // d/dz of f(z * m) must equal (df/du)|_{u=z*m} * m bitwise.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z_val = rand_tensor(&mut rng, vec![2, 6]);
        let mask_val =
            Tensor::new(vec![2, 6], vec![1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0])
                .unwrap();
        let w_val = rand_tensor(&mut rng, vec![6, 1]);

        let mut tape = Tape::new();
        let z = tape.leaf(z_val.clone());
        let m = tape.leaf(mask_val.clone());
        let w = tape.leaf(w_val.clone());
        let masked = tape.mul(z, m).unwrap();
        let out = tape.matmul(masked, w).unwrap();
        let s = tape.sum_all(out).unwrap();
        let g_z = &tape.grad(s, &[z]).unwrap()[0];

        // reference: gradient at u = z*m, multiplied by m
        let mut ref_tape = Tape::new();
        let u_val = {
            let mut u = z_val.clone();
            for (a, b) in u.data_mut().iter_mut().zip(mask_val.data()) {
                *a *= b;
            }
            u
        };
        let u = ref_tape.leaf(u_val);
        let w2 = ref_tape.leaf(w_val);
        let out2 = ref_tape.matmul(u, w2).unwrap();
        let s2 = ref_tape.sum_all(out2).unwrap();
        let g_u = &ref_tape.grad(s2, &[u]).unwrap()[0];
        let expect: Vec<f64> = g_u.data().iter().zip(mask_val.data()).map(|(g, m)| g * m).collect();
        assert_eq!(g_z.data(), expect.as_slice());
    }

    #[test]
    fn mean_axes_pools_and_backprops() {
        // [1,2,2,2] -> mean over axes {1,2} -> [1,2]
        let mut tape = Tape::new();
        let x = tape.leaf(
            Tensor::new(vec![1, 2, 2, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap(),
        );
        let m = tape.mean_axes(x, &[1, 2]).unwrap();
        assert_eq!(tape.shape(m), &[1, 2]);
        assert_eq!(tape.value(m).data(), &[4.0, 5.0]);
        let s = tape.sum_all(m).unwrap();
        let g = tape.grad(s, &[x]).unwrap();
        for v in g[0].data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn cross_entropy_uniform_and_saturated() {
        let mut tape = Tape::new();
        let logits = tape.leaf(Tensor::new(vec![1, 4], vec![0.7, 0.7, 0.7, 0.7]).unwrap());
        let labels = tape.leaf(Tensor::new(vec![1, 4], vec![0.0, 1.0, 0.0, 0.0]).unwrap());
        let l = tape.softmax_cross_entropy(logits, labels).unwrap();
        assert!((tape.value(l).item().unwrap() - 4.0f64.ln()).abs() < 1e-12);

        let mut tape = Tape::new();
        let logits = tape.leaf(Tensor::new(vec![1, 2], vec![1000.0, 0.0]).unwrap());
        let labels = tape.leaf(Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap());
        let l = tape.softmax_cross_entropy(logits, labels).unwrap();
        assert!(tape.value(l).item().unwrap().abs() <= 1e-9);
    }

    #[test]
    fn non_one_hot_labels_rejected() {
        let mut tape = Tape::new();
        let logits = tape.leaf(Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap());
        let labels = tape.leaf(Tensor::new(vec![1, 2], vec![0.5, 0.5]).unwrap());
        assert!(tape.softmax_cross_entropy(logits, labels).is_err());
    }

    /// Builds a random two-layer network loss as a closure over one leaf.
    fn two_layer_loss(
        seed: u64,
    ) -> (Tensor, impl Fn(&Tensor) -> crate::error::Result<f64> + Clone) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_tensor(&mut rng, vec![3, 4]);
        let w1 = rand_tensor(&mut rng, vec![4, 5]);
        let b1 = rand_tensor(&mut rng, vec![5]);
        let w2 = rand_tensor(&mut rng, vec![5, 2]);
        let labels = Tensor::new(vec![3, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        let f = move |p: &Tensor| {
            let mut tape = Tape::new();
            let x = tape.leaf(p.clone());
            let w1 = tape.leaf(w1.clone());
            let b1 = tape.leaf(b1.clone());
            let w2 = tape.leaf(w2.clone());
            let y = tape.leaf(labels.clone());
            let h = tape.matmul(x, w1)?;
            let h = tape.add_bias(h, b1)?;
            let h = tape.relu(h)?;
            let logits = tape.matmul(h, w2)?;
            let loss = tape.softmax_cross_entropy(logits, y)?;
            tape.value(loss).item()
        };
        (x, f)
    }

    #[test]
    fn network_gradient_matches_finite_differences() {
        for seed in 0..5 {
            let (x_val, f) = two_layer_loss(seed);
            // analytic gradient via a fresh tape
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let _ = rand_tensor(&mut rng, vec![3, 4]);
            let w1 = rand_tensor(&mut rng, vec![4, 5]);
            let b1 = rand_tensor(&mut rng, vec![5]);
            let w2 = rand_tensor(&mut rng, vec![5, 2]);
            let labels = Tensor::new(vec![3, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
            let mut tape = Tape::new();
            let x = tape.leaf(x_val.clone());
            let w1 = tape.leaf(w1);
            let b1 = tape.leaf(b1);
            let w2 = tape.leaf(w2);
            let y = tape.leaf(labels);
            let h = tape.matmul(x, w1).unwrap();
            let h = tape.add_bias(h, b1).unwrap();
            let h = tape.relu(h).unwrap();
            let logits = tape.matmul(h, w2).unwrap();
            let loss = tape.softmax_cross_entropy(logits, y).unwrap();
            let analytic = &tape.grad(loss, &[x]).unwrap()[0];
            let numeric = finite_diff(&f, &x_val, 1e-5).unwrap();
            assert!(
                max_relative_error(analytic, &numeric) <= 1e-5,
                "seed {seed}: rel err {}",
                max_relative_error(analytic, &numeric)
            );
        }
    }

    #[test]
    fn identical_inputs_reproduce_bitwise() {
        let run = || {
            let (x_val, f) = two_layer_loss(11);
            let v = f(&x_val).unwrap();
            v
        };
        let a = run();
        let b = run();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
