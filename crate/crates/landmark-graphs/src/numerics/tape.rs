//! Define-by-run gradient tape over [`Tensor`] values.
//!
//! Every forward primitive records enough to replay its backward rule;
//! [`Tape::backward`] walks the recording once in reverse and accumulates
//! gradients per recorded variable. Shape mismatches are programming
//! errors and panic with the op name and both shapes.

#![allow(clippy::needless_range_loop)]

use super::{NumericsError, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Matmul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    AddCol(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    StackRows(Vec<Var>),
    Slice { src: Var, start: usize },
    Tanh(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    LogSumExp(Var),
    LogSumExpCols(Var),
    Sum(Var),
    Pick { src: Var, idx: usize },
    Conv1dMaxPool { input: Var, weights: Var, bias: Var, width: usize, argmax: Vec<usize> },
    Dropout { src: Var, mask: Vec<f64> },
    SigmoidXent { logits: Var, targets: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
}

pub struct Tape {
    nodes: Vec<Node>,
    grad_enabled: bool,
}

/// Per-variable gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn wrt(&self, var: Var) -> &[f64] {
        &self.grads[var.0]
    }
}

fn shape_panic(op: &'static str, lhs: &[usize], rhs: &[usize]) -> ! {
    panic!(
        "{}",
        NumericsError::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    )
}

impl Tape {
    pub fn new(grad_enabled: bool) -> Tape {
        Tape {
            nodes: Vec::new(),
            grad_enabled,
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let op = if self.grad_enabled { op } else { Op::Leaf };
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.leaf(Tensor::scalar(v))
    }

    /// Matrix product; accepts matrix-matrix, matrix-vector, vector-matrix
    /// and vector-vector (dot) operand shapes.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let (sa, sb) = (va.shape().to_vec(), vb.shape().to_vec());
        let out = match (sa.len(), sb.len()) {
            (2, 2) => {
                let (m, k, k2, n) = (sa[0], sa[1], sb[0], sb[1]);
                if k != k2 {
                    shape_panic("matmul", &sa, &sb);
                }
                let mut out = vec![0.0; m * n];
                mat_mat(va.data(), m, k, vb.data(), n, &mut out);
                Tensor::from_vec(&[m, n], out).unwrap()
            }
            (2, 1) => {
                let (m, k) = (sa[0], sa[1]);
                if k != sb[0] {
                    shape_panic("matmul", &sa, &sb);
                }
                let mut out = vec![0.0; m];
                for i in 0..m {
                    out[i] = dot(&va.data()[i * k..(i + 1) * k], vb.data());
                }
                Tensor::from_vec(&[m], out).unwrap()
            }
            (1, 2) => {
                let (k, n) = (sb[0], sb[1]);
                if sa[0] != k {
                    shape_panic("matmul", &sa, &sb);
                }
                let mut out = vec![0.0; n];
                for (i, &ai) in va.data().iter().enumerate() {
                    let row = &vb.data()[i * n..(i + 1) * n];
                    for (o, &r) in out.iter_mut().zip(row) {
                        *o += ai * r;
                    }
                }
                Tensor::from_vec(&[n], out).unwrap()
            }
            (1, 1) => {
                if sa[0] != sb[0] {
                    shape_panic("matmul", &sa, &sb);
                }
                Tensor::scalar(dot(va.data(), vb.data()))
            }
            _ => shape_panic("matmul", &sa, &sb),
        };
        self.push(out, Op::Matmul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            shape_panic("add", va.shape(), vb.shape());
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::from_vec(va.shape(), data).unwrap();
        self.push(t, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            shape_panic("sub", va.shape(), vb.shape());
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x - y).collect();
        let t = Tensor::from_vec(va.shape(), data).unwrap();
        self.push(t, Op::Sub(a, b))
    }

    /// `mat[i][j] + row[j]`.
    pub fn add_row(&mut self, mat: Var, row: Var) -> Var {
        let (vm, vr) = (self.value(mat), self.value(row));
        if vm.shape().len() != 2 || vr.shape().len() != 1 || vm.cols() != vr.cols() {
            shape_panic("add_row", vm.shape(), vr.shape());
        }
        let n = vm.cols();
        let data = vm
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + vr.data()[i % n])
            .collect();
        let t = Tensor::from_vec(vm.shape(), data).unwrap();
        self.push(t, Op::AddRow(mat, row))
    }

    /// `mat[i][j] + col[i]`.
    pub fn add_col(&mut self, mat: Var, col: Var) -> Var {
        let (vm, vc) = (self.value(mat), self.value(col));
        if vm.shape().len() != 2 || vc.shape().len() != 1 || vm.rows() != vc.cols() {
            shape_panic("add_col", vm.shape(), vc.shape());
        }
        let n = vm.cols();
        let data = vm
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + vc.data()[i / n])
            .collect();
        let t = Tensor::from_vec(vm.shape(), data).unwrap();
        self.push(t, Op::AddCol(mat, col))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            shape_panic("mul", va.shape(), vb.shape());
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let t = Tensor::from_vec(va.shape(), data).unwrap();
        self.push(t, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let va = self.value(a);
        let data = va.data().iter().map(|x| x * c).collect();
        let t = Tensor::from_vec(va.shape(), data).unwrap();
        self.push(t, Op::Scale(a, c))
    }

    /// Concatenate vectors into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.shape().len() != 1 {
                shape_panic("concat", v.shape(), &[]);
            }
            data.extend_from_slice(v.data());
        }
        let t = Tensor::from_vec(&[data.len()], data).unwrap();
        self.push(t, Op::Concat(parts.to_vec()))
    }

    /// Stack equal-length vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Var {
        assert!(!rows.is_empty(), "stack_rows needs at least one row");
        let width = self.value(rows[0]).len();
        let mut data = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            let v = self.value(r);
            if v.shape().len() != 1 || v.len() != width {
                shape_panic("stack_rows", v.shape(), &[width]);
            }
            data.extend_from_slice(v.data());
        }
        let t = Tensor::from_vec(&[rows.len(), width], data).unwrap();
        self.push(t, Op::StackRows(rows.to_vec()))
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let va = self.value(a);
        if va.shape().len() != 1 || start + len > va.len() {
            shape_panic("slice", va.shape(), &[start, len]);
        }
        let t = Tensor::from_vec(&[len], va.data()[start..start + len].to_vec()).unwrap();
        self.push(t, Op::Slice { src: a, start })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let data = va.data().iter().map(|x| x.tanh()).collect();
        let t = Tensor::from_vec(va.shape(), data).unwrap();
        self.push(t, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let data = va.data().iter().map(|x| sigmoid(*x)).collect();
        let t = Tensor::from_vec(va.shape(), data).unwrap();
        self.push(t, Op::Sigmoid(a))
    }

    /// Row-wise softmax; a vector is treated as a single row.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let n = va.cols();
        let mut data = va.data().to_vec();
        for row in data.chunks_mut(n) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                sum += *x;
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
        }
        let t = Tensor::from_vec(va.shape(), data).unwrap();
        self.push(t, Op::SoftmaxRows(a))
    }

    /// log-sum-exp of a vector, as a scalar.
    pub fn logsumexp(&mut self, a: Var) -> Var {
        let va = self.value(a);
        if va.shape().len() != 1 {
            shape_panic("logsumexp", va.shape(), &[]);
        }
        let t = Tensor::scalar(logsumexp_slice(va.data()));
        self.push(t, Op::LogSumExp(a))
    }

    /// Column-wise log-sum-exp of a matrix: `out[j] = lse_i mat[i][j]`.
    pub fn logsumexp_cols(&mut self, a: Var) -> Var {
        let va = self.value(a);
        if va.shape().len() != 2 {
            shape_panic("logsumexp_cols", va.shape(), &[]);
        }
        let (m, n) = (va.rows(), va.cols());
        let mut out = vec![0.0; n];
        let mut col = vec![0.0; m];
        for j in 0..n {
            for i in 0..m {
                col[i] = va.data()[i * n + j];
            }
            out[j] = logsumexp_slice(&col);
        }
        let t = Tensor::from_vec(&[n], out).unwrap();
        self.push(t, Op::LogSumExpCols(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let t = Tensor::scalar(va.data().iter().sum());
        self.push(t, Op::Sum(a))
    }

    /// Select one element by flat index, as a scalar.
    pub fn pick(&mut self, a: Var, idx: usize) -> Var {
        let va = self.value(a);
        if idx >= va.len() {
            shape_panic("pick", va.shape(), &[idx]);
        }
        let t = Tensor::scalar(va.data()[idx]);
        self.push(t, Op::Pick { src: a, idx })
    }

    /// 1-D convolution over character rows followed by max-pooling across
    /// positions. `input` is (length, channels), `weights` is
    /// (filters, width*channels), `bias` is (filters). Inputs shorter than
    /// the filter width are zero-padded so at least one position exists.
    pub fn conv1d_maxpool(&mut self, input: Var, weights: Var, bias: Var, width: usize) -> Var {
        let (vi, vw, vb) = (self.value(input), self.value(weights), self.value(bias));
        if vi.shape().len() != 2 || vw.shape().len() != 2 {
            shape_panic("conv1d_maxpool", vi.shape(), vw.shape());
        }
        let (len, channels) = (vi.rows(), vi.cols());
        let filters = vw.rows();
        if vw.cols() != width * channels || vb.len() != filters {
            shape_panic("conv1d_maxpool", vw.shape(), &[width * channels, filters]);
        }
        let positions = len.max(width) - width + 1;
        let mut out = vec![0.0; filters];
        let mut argmax = vec![0usize; filters];
        for k in 0..filters {
            let wk = &vw.data()[k * width * channels..(k + 1) * width * channels];
            let mut best = f64::NEG_INFINITY;
            let mut best_p = 0;
            for p in 0..positions {
                let mut acc = 0.0;
                for j in 0..width {
                    let row = p + j;
                    if row < len {
                        acc += dot(
                            &vi.data()[row * channels..(row + 1) * channels],
                            &wk[j * channels..(j + 1) * channels],
                        );
                    }
                }
                if acc > best {
                    best = acc;
                    best_p = p;
                }
            }
            out[k] = best + vb.data()[k];
            argmax[k] = best_p;
        }
        let t = Tensor::from_vec(&[filters], out).unwrap();
        self.push(
            t,
            Op::Conv1dMaxPool {
                input,
                weights,
                bias,
                width,
                argmax,
            },
        )
    }

    /// Inverted dropout: during training each element survives with
    /// probability 1-p and is scaled by 1/(1-p); at inference this is the
    /// identity for any p.
    pub fn dropout(&mut self, a: Var, p: f64, training: bool, rng: &mut ChaCha8Rng) -> Var {
        assert!((0.0..1.0).contains(&p), "dropout rate {p} outside [0, 1)");
        if !training || p == 0.0 {
            let va = self.value(a);
            let t = va.clone();
            return self.push(t, Op::Scale(a, 1.0));
        }
        let va = self.value(a);
        let keep = 1.0 - p;
        let mask: Vec<f64> = (0..va.len())
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let data = va.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let t = Tensor::from_vec(va.shape(), data).unwrap();
        self.push(t, Op::Dropout { src: a, mask })
    }

    /// Sigmoid cross entropy of a logit vector against 0/1 targets, summed
    /// into a scalar: `sum_i max(b,0) - b*s + log(1+exp(-|b|))`.
    pub fn sigmoid_xent(&mut self, logits: Var, targets: &[f64]) -> Var {
        let vl = self.value(logits);
        if vl.shape().len() != 1 || vl.len() != targets.len() {
            shape_panic("sigmoid_xent", vl.shape(), &[targets.len()]);
        }
        let mut loss = 0.0;
        for (&b, &s) in vl.data().iter().zip(targets) {
            loss += b.max(0.0) - b * s + (-b.abs()).exp().ln_1p();
        }
        let t = Tensor::scalar(loss);
        self.push(
            t,
            Op::SigmoidXent {
                logits,
                targets: targets.to_vec(),
            },
        )
    }

    /// Reverse pass from a scalar loss. Gradients for every recorded
    /// variable accumulate within this call; callers add them into
    /// parameter buffers.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericsError> {
        if !self.grad_enabled {
            return Err(NumericsError::GradientsDisabled);
        }
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(NumericsError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Vec<f64>> = self.nodes.iter().map(|n| vec![0.0; n.value.len()]).collect();
        grads[loss.0][0] = 1.0;

        for i in (0..=loss.0).rev() {
            if grads[i].iter().all(|g| *g == 0.0) {
                continue;
            }
            let g = std::mem::take(&mut grads[i]);
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Matmul(a, b) => self.back_matmul(*a, *b, &g, &mut grads),
                Op::Add(a, b) => {
                    axpy(&mut grads[a.0], &g, 1.0);
                    axpy(&mut grads[b.0], &g, 1.0);
                }
                Op::Sub(a, b) => {
                    axpy(&mut grads[a.0], &g, 1.0);
                    axpy(&mut grads[b.0], &g, -1.0);
                }
                Op::AddRow(mat, row) => {
                    axpy(&mut grads[mat.0], &g, 1.0);
                    let n = self.value(*row).len();
                    for (idx, gv) in g.iter().enumerate() {
                        grads[row.0][idx % n] += gv;
                    }
                }
                Op::AddCol(mat, col) => {
                    axpy(&mut grads[mat.0], &g, 1.0);
                    let n = self.value(*mat).cols();
                    for (idx, gv) in g.iter().enumerate() {
                        grads[col.0][idx / n] += gv;
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a).data().to_vec(), self.value(*b).data().to_vec());
                    for (idx, gv) in g.iter().enumerate() {
                        grads[a.0][idx] += gv * vb[idx];
                        grads[b.0][idx] += gv * va[idx];
                    }
                }
                Op::Scale(a, c) => axpy(&mut grads[a.0], &g, *c),
                Op::Concat(parts) | Op::StackRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.value(*p).len();
                        axpy(&mut grads[p.0], &g[offset..offset + len], 1.0);
                        offset += len;
                    }
                }
                Op::Slice { src, start } => {
                    axpy(&mut grads[src.0][*start..*start + g.len()], &g, 1.0);
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    for (idx, gv) in g.iter().enumerate() {
                        grads[a.0][idx] += gv * (1.0 - y[idx] * y[idx]);
                    }
                }
                Op::Sigmoid(a) => {
                    let y = node.value.data();
                    for (idx, gv) in g.iter().enumerate() {
                        grads[a.0][idx] += gv * y[idx] * (1.0 - y[idx]);
                    }
                }
                Op::SoftmaxRows(a) => {
                    let y = node.value.data();
                    let n = node.value.cols();
                    for (r, grow) in g.chunks(n).enumerate() {
                        let yrow = &y[r * n..(r + 1) * n];
                        let inner = dot(grow, yrow);
                        for j in 0..n {
                            grads[a.0][r * n + j] += yrow[j] * (grow[j] - inner);
                        }
                    }
                }
                Op::LogSumExp(a) => {
                    let va = self.value(*a).data();
                    let lse = node.value.item();
                    for (idx, &x) in va.iter().enumerate() {
                        grads[a.0][idx] += g[0] * (x - lse).exp();
                    }
                }
                Op::LogSumExpCols(a) => {
                    let va = self.value(*a);
                    let (m, n) = (va.rows(), va.cols());
                    let out = node.value.data();
                    for i in 0..m {
                        for j in 0..n {
                            grads[a.0][i * n + j] +=
                                g[j] * (va.data()[i * n + j] - out[j]).exp();
                        }
                    }
                }
                Op::Sum(a) => {
                    for gv in grads[a.0].iter_mut() {
                        *gv += g[0];
                    }
                }
                Op::Pick { src, idx } => {
                    grads[src.0][*idx] += g[0];
                }
                Op::Conv1dMaxPool {
                    input,
                    weights,
                    bias,
                    width,
                    argmax,
                } => {
                    let vi = self.value(*input);
                    let vw = self.value(*weights);
                    let (len, channels) = (vi.rows(), vi.cols());
                    for (k, gv) in g.iter().enumerate() {
                        if *gv == 0.0 {
                            continue;
                        }
                        grads[bias.0][k] += gv;
                        let p = argmax[k];
                        for j in 0..*width {
                            let row = p + j;
                            if row >= len {
                                continue;
                            }
                            for c in 0..channels {
                                let wi = k * width * channels + j * channels + c;
                                let xi = row * channels + c;
                                grads[weights.0][wi] += gv * vi.data()[xi];
                                grads[input.0][xi] += gv * vw.data()[wi];
                            }
                        }
                    }
                }
                Op::Dropout { src, mask } => {
                    for (idx, gv) in g.iter().enumerate() {
                        grads[src.0][idx] += gv * mask[idx];
                    }
                }
                Op::SigmoidXent { logits, targets } => {
                    let vl = self.value(*logits).data();
                    for (idx, (&b, &s)) in vl.iter().zip(targets).enumerate() {
                        grads[logits.0][idx] += g[0] * (sigmoid(b) - s);
                    }
                }
            }
            grads[i] = g;
        }
        Ok(Gradients { grads })
    }

    fn back_matmul(&self, a: Var, b: Var, g: &[f64], grads: &mut [Vec<f64>]) {
        let (va, vb) = (self.value(a), self.value(b));
        let (sa, sb) = (va.shape(), vb.shape());
        match (sa.len(), sb.len()) {
            (2, 2) => {
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                // dA += g · B^T, dB += A^T · g
                for i in 0..m {
                    for j in 0..n {
                        let gv = g[i * n + j];
                        if gv == 0.0 {
                            continue;
                        }
                        for l in 0..k {
                            grads[a.0][i * k + l] += gv * vb.data()[l * n + j];
                            grads[b.0][l * n + j] += gv * va.data()[i * k + l];
                        }
                    }
                }
            }
            (2, 1) => {
                let (m, k) = (sa[0], sa[1]);
                for i in 0..m {
                    let gv = g[i];
                    if gv == 0.0 {
                        continue;
                    }
                    for l in 0..k {
                        grads[a.0][i * k + l] += gv * vb.data()[l];
                        grads[b.0][l] += gv * va.data()[i * k + l];
                    }
                }
            }
            (1, 2) => {
                let (k, n) = (sb[0], sb[1]);
                for l in 0..k {
                    let av = va.data()[l];
                    for j in 0..n {
                        let gv = g[j];
                        grads[a.0][l] += gv * vb.data()[l * n + j];
                        grads[b.0][l * n + j] += gv * av;
                    }
                }
            }
            (1, 1) => {
                for l in 0..sa[0] {
                    grads[a.0][l] += g[0] * vb.data()[l];
                    grads[b.0][l] += g[0] * va.data()[l];
                }
            }
            _ => unreachable!(),
        }
    }
}

/// LSTM cell weights: input projection `w` (in, 4h), recurrent projection
/// `u` (h, 4h), bias `b` (4h). Gate order is input, forget, cell, output.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights {
    pub w: Var,
    pub u: Var,
    pub b: Var,
}

/// One LSTM step built from taped primitives; returns (h', c').
pub fn lstm_cell(
    tape: &mut Tape,
    weights: LstmWeights,
    x: Var,
    h: Var,
    c: Var,
    hidden: usize,
) -> (Var, Var) {
    let xw = tape.matmul(x, weights.w);
    let hu = tape.matmul(h, weights.u);
    let pre = tape.add(xw, hu);
    let gates = tape.add(pre, weights.b);
    let i_raw = tape.slice(gates, 0, hidden);
    let f_raw = tape.slice(gates, hidden, hidden);
    let g_raw = tape.slice(gates, 2 * hidden, hidden);
    let o_raw = tape.slice(gates, 3 * hidden, hidden);
    let i = tape.sigmoid(i_raw);
    let f = tape.sigmoid(f_raw);
    let g = tape.tanh(g_raw);
    let o = tape.sigmoid(o_raw);
    let fc = tape.mul(f, c);
    let ig = tape.mul(i, g);
    let c_next = tape.add(fc, ig);
    let c_act = tape.tanh(c_next);
    let h_next = tape.mul(o, c_act);
    (h_next, c_next)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mat_mat(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, out: &mut [f64]) {
    for i in 0..m {
        for l in 0..k {
            let av = a[i * k + l];
            if av == 0.0 {
                continue;
            }
            let brow = &b[l * n..(l + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

fn axpy(dst: &mut [f64], src: &[f64], scale: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s * scale;
    }
}

fn logsumexp_slice(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn tensor(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::from_vec(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn softmax_uniform_row_gives_uniform_weights() {
        let mut tape = Tape::new(false);
        let x = tape.leaf(tensor(&[4], &[0.3, 0.3, 0.3, 0.3]));
        let y = tape.softmax_rows(x);
        for &v in tape.value(y).data() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_and_stay_positive() {
        let mut r = rng(3);
        let mut tape = Tape::new(false);
        let data: Vec<f64> = (0..12).map(|_| r.gen_range(-30.0..30.0)).collect();
        let x = tape.leaf(tensor(&[3, 4], &data));
        let y = tape.softmax_rows(x);
        for row in tape.value(y).data().chunks(4) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn tanh_of_zero_tensor_is_zero() {
        let mut tape = Tape::new(false);
        let x = tape.leaf(Tensor::zeros(&[5]));
        let y = tape.tanh(x);
        assert!(tape.value(y).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_case_gradient() {
        // loss = sum(W · x): dW = x broadcast per row.
        let mut tape = Tape::new(true);
        let w = tape.leaf(tensor(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let x = tape.leaf(tensor(&[3], &[0.5, -1.0, 2.0]));
        let y = tape.matmul(w, x);
        let loss = tape.sum(y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(w), [0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
    }

    #[test]
    fn backward_twice_doubles_accumulated_grads() {
        let mut tape = Tape::new(true);
        let w = tape.leaf(tensor(&[2], &[1.0, 2.0]));
        let loss = tape.sum(w);
        let mut param = Tensor::zeros(&[2]);
        for _ in 0..2 {
            let grads = tape.backward(loss).unwrap();
            param.accumulate_grad(grads.wrt(w));
        }
        assert_eq!(param.grad().unwrap(), [2.0, 2.0]);
    }

    #[test]
    fn backward_disabled_is_an_error() {
        let mut tape = Tape::new(false);
        let x = tape.leaf(Tensor::scalar(1.0));
        let y = tape.sum(x);
        assert!(matches!(
            tape.backward(y),
            Err(NumericsError::GradientsDisabled)
        ));
    }

    #[test]
    #[should_panic(expected = "matmul")]
    fn matmul_shape_mismatch_names_op() {
        let mut tape = Tape::new(false);
        let a = tape.leaf(Tensor::zeros(&[2, 3]));
        let b = tape.leaf(Tensor::zeros(&[4]));
        tape.matmul(a, b);
    }

    #[test]
    fn dropout_identity_cases() {
        let mut r = rng(1);
        let mut tape = Tape::new(true);
        let x = tape.leaf(tensor(&[4], &[1.0, 2.0, 3.0, 4.0]));
        let y = tape.dropout(x, 0.0, true, &mut r);
        assert_eq!(tape.value(y).data(), tape.value(x).data());
        let z = tape.dropout(x, 0.7, false, &mut r);
        assert_eq!(tape.value(z).data(), tape.value(x).data());
    }

    #[test]
    fn dropout_scales_survivors() {
        let mut r = rng(5);
        let mut tape = Tape::new(true);
        let x = tape.leaf(tensor(&[1000], &[1.0; 1000]));
        let y = tape.dropout(x, 0.5, true, &mut r);
        for &v in tape.value(y).data() {
            assert!(v == 0.0 || (v - 2.0).abs() < 1e-12);
        }
        let kept = tape.value(y).data().iter().filter(|v| **v != 0.0).count();
        assert!((300..700).contains(&kept));
    }

    #[test]
    fn lstm_cell_zero_weights_zero_state_gives_zero() {
        let hidden = 3;
        let mut tape = Tape::new(false);
        let weights = LstmWeights {
            w: tape.leaf(Tensor::zeros(&[2, 4 * hidden])),
            u: tape.leaf(Tensor::zeros(&[hidden, 4 * hidden])),
            b: tape.leaf(Tensor::zeros(&[4 * hidden])),
        };
        let x = tape.leaf(Tensor::zeros(&[2]));
        let h = tape.leaf(Tensor::zeros(&[hidden]));
        let c = tape.leaf(Tensor::zeros(&[hidden]));
        let (h2, c2) = lstm_cell(&mut tape, weights, x, h, c, hidden);
        assert!(tape.value(h2).data().iter().all(|v| *v == 0.0));
        assert!(tape.value(c2).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn conv_constant_input_is_position_invariant() {
        // Direct-convolution oracle: for constant input every position
        // produces the same sum, so shifting changes nothing.
        let mut r = rng(11);
        let channels = 3;
        let width = 2;
        let filters = 2;
        let wdata: Vec<f64> = (0..filters * width * channels)
            .map(|_| r.gen_range(-1.0..1.0))
            .collect();
        let brute = |input: &[f64], len: usize| -> Vec<f64> {
            let mut out = vec![f64::NEG_INFINITY; filters];
            let positions = len.max(width) - width + 1;
            for k in 0..filters {
                for p in 0..positions {
                    let mut acc = 0.0;
                    for j in 0..width {
                        for c in 0..channels {
                            let x = if p + j < len { input[(p + j) * channels + c] } else { 0.0 };
                            acc += x * wdata[k * width * channels + j * channels + c];
                        }
                    }
                    out[k] = out[k].max(acc);
                }
            }
            out
        };
        for len in [2usize, 4, 7] {
            let input = vec![0.37; len * channels];
            let mut tape = Tape::new(false);
            let x = tape.leaf(tensor(&[len, channels], &input));
            let w = tape.leaf(tensor(&[filters, width * channels], &wdata));
            let b = tape.leaf(Tensor::zeros(&[filters]));
            let y = tape.conv1d_maxpool(x, w, b, width);
            let expect = brute(&input, len);
            for (a, e) in tape.value(y).data().iter().zip(&expect) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_matches_direct_convolution_oracle_on_random_input() {
        let mut r = rng(23);
        let (len, channels, width, filters) = (6usize, 4usize, 3usize, 5usize);
        let input: Vec<f64> = (0..len * channels).map(|_| r.gen_range(-1.0..1.0)).collect();
        let wdata: Vec<f64> = (0..filters * width * channels)
            .map(|_| r.gen_range(-1.0..1.0))
            .collect();
        let bdata: Vec<f64> = (0..filters).map(|_| r.gen_range(-1.0..1.0)).collect();

        let mut expect = vec![f64::NEG_INFINITY; filters];
        for k in 0..filters {
            for p in 0..len - width + 1 {
                let mut acc = 0.0;
                for j in 0..width {
                    for c in 0..channels {
                        acc += input[(p + j) * channels + c]
                            * wdata[k * width * channels + j * channels + c];
                    }
                }
                expect[k] = expect[k].max(acc);
            }
            expect[k] += bdata[k];
        }

        let mut tape = Tape::new(false);
        let x = tape.leaf(tensor(&[len, channels], &input));
        let w = tape.leaf(tensor(&[filters, width * channels], &wdata));
        let b = tape.leaf(tensor(&[filters], &bdata));
        let y = tape.conv1d_maxpool(x, w, b, width);
        for (a, e) in tape.value(y).data().iter().zip(&expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    /// Central finite differences against the analytic gradient for a
    /// composite graph touching every primitive.
    #[test]
    fn finite_difference_check_over_all_primitives() {
        let eps = 1e-5;
        let build = |theta: &[f64], rng_seed: u64| -> f64 {
            let mut r = rng(rng_seed);
            let mut tape = Tape::new(true);
            let w = tape.leaf(tensor(&[3, 4], &theta[0..12]));
            let x = tape.leaf(tensor(&[4], &theta[12..16]));
            let m = tape.leaf(tensor(&[2, 3], &theta[16..22]));
            let conv_w = tape.leaf(tensor(&[2, 8], &theta[22..38]));
            let conv_b = tape.leaf(tensor(&[2], &theta[38..40]));

            let wx = tape.matmul(w, x); // (3)
            let t = tape.tanh(wx);
            let s = tape.sigmoid(wx);
            let ts = tape.mul(t, s);
            let mm = tape.matmul(m, ts); // (2)
            let soft_in = tape.concat(&[mm, ts]); // (5)
            let soft = tape.softmax_rows(soft_in);
            let lse = tape.logsumexp(soft_in);
            let picked = tape.pick(soft, 1);

            let grid = tape.matmul(m, w); // (2,4)
            let col = tape.slice(ts, 0, 2);
            let grid2 = tape.add_col(grid, col);
            let rowv = tape.slice(soft_in, 0, 4);
            let grid3 = tape.add_row(grid2, rowv);
            let lsec = tape.logsumexp_cols(grid3); // (4)
            let lsec_sum = tape.sum(lsec);

            let conv_in = tape.leaf(tensor(
                &[3, 4],
                &[0.3, -0.2, 0.5, 0.1, -0.4, 0.2, 0.9, -0.7, 0.05, 0.6, -0.3, 0.8],
            ));
            let conv = tape.conv1d_maxpool(conv_in, conv_w, conv_b, 2); // (2)
            let conv_sum = tape.sum(conv);

            let dropped = tape.dropout(ts, 0.3, true, &mut r); // fixed seed per eval
            let drop_sum = tape.sum(dropped);

            let xent = tape.sigmoid_xent(wx, &[1.0, 0.0, 1.0]);

            let p1 = tape.add(picked, lse);
            let p2 = tape.add(p1, lsec_sum);
            let p3 = tape.add(p2, conv_sum);
            let p4 = tape.add(p3, drop_sum);
            let p5 = tape.add(p4, xent);
            let scaled = tape.scale(p5, 0.5);
            let diff = tape.sub(scaled, picked);
            tape.value(diff).item()
        };

        let build_grads = |theta: &[f64], rng_seed: u64| -> Vec<f64> {
            // Same graph, returning d(loss)/d(theta).
            let mut r = rng(rng_seed);
            let mut tape = Tape::new(true);
            let w = tape.leaf(tensor(&[3, 4], &theta[0..12]));
            let x = tape.leaf(tensor(&[4], &theta[12..16]));
            let m = tape.leaf(tensor(&[2, 3], &theta[16..22]));
            let conv_w = tape.leaf(tensor(&[2, 8], &theta[22..38]));
            let conv_b = tape.leaf(tensor(&[2], &theta[38..40]));

            let wx = tape.matmul(w, x);
            let t = tape.tanh(wx);
            let s = tape.sigmoid(wx);
            let ts = tape.mul(t, s);
            let mm = tape.matmul(m, ts);
            let soft_in = tape.concat(&[mm, ts]);
            let soft = tape.softmax_rows(soft_in);
            let lse = tape.logsumexp(soft_in);
            let picked = tape.pick(soft, 1);

            let grid = tape.matmul(m, w);
            let col = tape.slice(ts, 0, 2);
            let grid2 = tape.add_col(grid, col);
            let rowv = tape.slice(soft_in, 0, 4);
            let grid3 = tape.add_row(grid2, rowv);
            let lsec = tape.logsumexp_cols(grid3);
            let lsec_sum = tape.sum(lsec);

            let conv_in = tape.leaf(tensor(
                &[3, 4],
                &[0.3, -0.2, 0.5, 0.1, -0.4, 0.2, 0.9, -0.7, 0.05, 0.6, -0.3, 0.8],
            ));
            let conv = tape.conv1d_maxpool(conv_in, conv_w, conv_b, 2);
            let conv_sum = tape.sum(conv);

            let dropped = tape.dropout(ts, 0.3, true, &mut r);
            let drop_sum = tape.sum(dropped);

            let xent = tape.sigmoid_xent(wx, &[1.0, 0.0, 1.0]);

            let p1 = tape.add(picked, lse);
            let p2 = tape.add(p1, lsec_sum);
            let p3 = tape.add(p2, conv_sum);
            let p4 = tape.add(p3, drop_sum);
            let p5 = tape.add(p4, xent);
            let scaled = tape.scale(p5, 0.5);
            let diff = tape.sub(scaled, picked);
            let grads = tape.backward(diff).unwrap();
            let mut out = Vec::new();
            out.extend_from_slice(grads.wrt(w));
            out.extend_from_slice(grads.wrt(x));
            out.extend_from_slice(grads.wrt(m));
            out.extend_from_slice(grads.wrt(conv_w));
            out.extend_from_slice(grads.wrt(conv_b));
            out
        };

        let mut r = rng(99);
        let theta: Vec<f64> = (0..40).map(|_| r.gen_range(-0.8..0.8)).collect();
        let analytic = build_grads(&theta, 7);
        let mut max_rel: f64 = 0.0;
        for i in 0..theta.len() {
            let mut plus = theta.clone();
            plus[i] += eps;
            let mut minus = theta.clone();
            minus[i] -= eps;
            let fd = (build(&plus, 7) - build(&minus, 7)) / (2.0 * eps);
            let denom = analytic[i].abs().max(fd.abs()).max(1e-4);
            max_rel = max_rel.max((analytic[i] - fd).abs() / denom);
        }
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    }
}
