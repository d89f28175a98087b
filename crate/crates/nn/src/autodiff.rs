//! Reverse-mode automatic differentiation on a tape.
//!
//! Every primitive appends one node holding its output and whatever the
//! backward pass needs (im2col buffers, pooling argmax, softmax
//! probabilities). [`Tape::backward`] walks the nodes in reverse insertion
//! order, which is a reverse topological order, and accumulates gradients
//! additively. Ops never mutate their inputs.
//!
//! Kinks: `relu` uses subgradient 0 at 0; max-pool ties go to the first index
//! in row-major window order.

use crate::error::{shape_err, NnError, Result};
use crate::linalg::{gemm, gemm_at, gemm_bt};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Geometry of a 2-d convolution over an `[N, C, H, W]` input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    fn col_rows(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Output side length of a convolution or pooling window.
pub fn conv_out_len(len: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = len + 2 * pad;
    if stride == 0 || kernel == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    MatMulBt { a: Var, b: Var, m: usize, k: usize, n: usize },
    AddBias { x: Var, b: Var, channels: usize, inner: usize },
    Relu { x: Var },
    Conv2d { x: Var, w: Var, geom: ConvGeom, cols: Vec<f64> },
    MaxPool2d { x: Var, argmax: Vec<usize> },
    Reshape { x: Var },
    SoftmaxCrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
    Mse { pred: Var, target: Vec<f64> },
    Add { a: Var, b: Var },
    Scale { x: Var, c: f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// `None` for nodes the loss does not depend on or that need no gradient.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `v`, or zeros of length `len` when it is not reachable.
    pub fn take_or_zeros(&mut self, v: Var, len: usize) -> Vec<f64> {
        self.grads.get_mut(v.0).and_then(Option::take).unwrap_or_else(|| vec![0.0; len])
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; len])
}

fn im2col(x: &[f64], g: &ConvGeom, col: &mut [f64]) {
    let (h, w) = (g.height as isize, g.width as isize);
    let cols = g.col_cols();
    for c in 0..g.in_channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for i in 0..g.kernel_h {
            for j in 0..g.kernel_w {
                let row = (c * g.kernel_h + i) * g.kernel_w + j;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oy in 0..g.out_h {
                    let y = (oy * g.stride + i) as isize - g.pad as isize;
                    for ox in 0..g.out_w {
                        let xx = (ox * g.stride + j) as isize - g.pad as isize;
                        dst[oy * g.out_w + ox] = if y >= 0 && y < h && xx >= 0 && xx < w {
                            plane[y as usize * g.width + xx as usize]
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
    }
}

fn col2im(col: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let (h, w) = (g.height as isize, g.width as isize);
    let cols = g.col_cols();
    for c in 0..g.in_channels {
        let plane = &mut dx[c * g.height * g.width..(c + 1) * g.height * g.width];
        for i in 0..g.kernel_h {
            for j in 0..g.kernel_w {
                let row = (c * g.kernel_h + i) * g.kernel_w + j;
                let src = &col[row * cols..(row + 1) * cols];
                for oy in 0..g.out_h {
                    let y = (oy * g.stride + i) as isize - g.pad as isize;
                    if y < 0 || y >= h {
                        continue;
                    }
                    for ox in 0..g.out_w {
                        let xx = (ox * g.stride + j) as isize - g.pad as isize;
                        if xx >= 0 && xx < w {
                            plane[y as usize * g.width + xx as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// A trainable leaf; gradients are reported for it.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// A constant leaf (inputs, targets); no gradient is computed for it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(t, Op::MatMul { a, b, m, k, n }, &[a, b]))
    }

    /// `[m, k] x [n, k]^T -> [m, n]`; a dense layer with weight `[out, in]`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
            return Err(shape_err("matmul_bt", format!("{sa:?} x {sb:?}^T")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[0]);
        let mut out = vec![0.0; m * n];
        gemm_bt(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(t, Op::MatMulBt { a, b, m, k, n }, &[a, b]))
    }

    /// Adds `b[c]` along axis 1 of `x` (`[N, C]` or `[N, C, ...]`).
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(b));
        if sx.len() < 2 || sb.len() != 1 || sx[1] != sb[0] {
            return Err(shape_err("add_bias", format!("{sx:?} + {sb:?}")));
        }
        let channels = sx[1];
        let inner: usize = sx[2..].iter().product();
        let mut out = self.value(x).clone();
        let bias = self.value(b).data();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += bias[(i / inner) % channels];
        }
        Ok(self.push(out, Op::AddBias { x, b, channels, inner }, &[x, b]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            if !(*v > 0.0) {
                *v = 0.0;
            }
        }
        self.push(out, Op::Relu { x }, &[x])
    }

    /// `x: [N, C, H, W]`, `w: [F, C, kh, kw]` -> `[N, F, Ho, Wo]`. No bias.
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[1] {
            return Err(shape_err("conv2d", format!("input {sx:?}, kernel {sw:?}")));
        }
        let out_h = conv_out_len(sx[2], sw[2], stride, pad);
        let out_w = conv_out_len(sx[3], sw[3], stride, pad);
        let (Some(out_h), Some(out_w)) = (out_h, out_w) else {
            return Err(shape_err("conv2d", format!("kernel {sw:?} does not fit input {sx:?} (stride {stride}, pad {pad})")));
        };
        let geom = ConvGeom {
            batch: sx[0],
            in_channels: sx[1],
            height: sx[2],
            width: sx[3],
            filters: sw[0],
            kernel_h: sw[2],
            kernel_w: sw[3],
            stride,
            pad,
            out_h,
            out_w,
        };
        let (rows, cols) = (geom.col_rows(), geom.col_cols());
        let in_len = geom.in_channels * geom.height * geom.width;
        let out_len = geom.filters * cols;
        let mut col_buf = vec![0.0; geom.batch * rows * cols];
        let mut out = vec![0.0; geom.batch * out_len];
        let xd = self.value(x).data();
        let wd = self.value(w).data();
        for n in 0..geom.batch {
            let col = &mut col_buf[n * rows * cols..(n + 1) * rows * cols];
            im2col(&xd[n * in_len..(n + 1) * in_len], &geom, col);
            gemm(wd, col, &mut out[n * out_len..(n + 1) * out_len], geom.filters, rows, cols);
        }
        let t = Tensor::new(vec![geom.batch, geom.filters, out_h, out_w], out)?;
        Ok(self.push(t, Op::Conv2d { x, w, geom, cols: col_buf }, &[x, w]))
    }

    /// Max pooling with a square window, no padding.
    pub fn max_pool2d(&mut self, x: Var, size: usize, stride: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 4 {
            return Err(shape_err("max_pool2d", format!("input {sx:?}")));
        }
        let (Some(oh), Some(ow)) = (conv_out_len(sx[2], size, stride, 0), conv_out_len(sx[3], size, stride, 0)) else {
            return Err(shape_err("max_pool2d", format!("window {size} stride {stride} on {sx:?}")));
        };
        let (h, w) = (sx[2], sx[3]);
        let planes = sx[0] * sx[1];
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(planes * oh * ow);
        let mut argmax = Vec::with_capacity(planes * oh * ow);
        for p in 0..planes {
            let base = p * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * stride * w + ox * stride;
                    for i in 0..size {
                        for j in 0..size {
                            let idx = base + (oy * stride + i) * w + ox * stride + j;
                            if xd[idx] > xd[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(xd[best]);
                    argmax.push(best);
                }
            }
        }
        let t = Tensor::new(vec![sx[0], sx[1], oh, ow], out)?;
        Ok(self.push(t, Op::MaxPool2d { x, argmax }, &[x]))
    }

    /// `[N, ...] -> [N, prod(...)]`.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let sx = self.shape(x);
        if sx.is_empty() {
            return Err(shape_err("flatten", "scalar input"));
        }
        let rest: usize = sx[1..].iter().product();
        let t = self.value(x).clone().reshape(vec![sx[0], rest])?;
        Ok(self.push(t, Op::Reshape { x }, &[x]))
    }

    /// Mean over the batch of `-log softmax(logits)[label]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let s = self.shape(logits);
        if s.len() != 2 || s[0] != labels.len() {
            return Err(shape_err("softmax_cross_entropy", format!("logits {s:?}, {} labels", labels.len())));
        }
        let (n, k) = (s[0], s[1]);
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(shape_err("softmax_cross_entropy", format!("label {bad} with {k} classes")));
        }
        let z = self.value(logits).data();
        let mut probs = vec![0.0; n * k];
        let mut loss = 0.0;
        for r in 0..n {
            let row = &z[r * k..(r + 1) * k];
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|v| (v - mx).exp()).sum();
            for (p, v) in probs[r * k..(r + 1) * k].iter_mut().zip(row) {
                *p = (v - mx).exp() / sum;
            }
            loss += sum.ln() + mx - row[labels[r]];
        }
        let t = Tensor::scalar(loss / n as f64);
        Ok(self.push(t, Op::SoftmaxCrossEntropy { logits, labels: labels.to_vec(), probs }, &[logits]))
    }

    /// Mean of squared errors over all elements.
    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let p = self.value(pred);
        if p.numel() != target.numel() {
            return Err(shape_err("mse", format!("prediction {:?}, target {:?}", p.shape(), target.shape())));
        }
        let loss = p.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.numel() as f64;
        Ok(self.push(Tensor::scalar(loss), Op::Mse { pred, target: target.data().to_vec() }, &[pred]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("add", format!("{:?} + {:?}", self.shape(a), self.shape(b))));
        }
        let mut out = self.value(a).clone();
        for (o, v) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o += v;
        }
        Ok(self.push(out, Op::Add { a, b }, &[a, b]))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            *v *= c;
        }
        self.push(out, Op::Scale { x, c }, &[x])
    }

    /// Gradients of the scalar `loss` with respect to every node it depends on.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if self.value(loss).numel() != 1 {
            return Err(NnError::NonScalarLoss(shape.to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.backprop(&node.op, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (slot, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.requires_grad {
                *slot = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backprop(&self, op: &Op, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match *op {
            Op::Leaf => {}
            Op::MatMul { a, b, m, k, n } => {
                if self.wants(a) {
                    let da = accumulate(&mut grads[a.0], m * k);
                    gemm_bt(g, self.value(b).data(), da, m, n, k);
                }
                if self.wants(b) {
                    let db = accumulate(&mut grads[b.0], k * n);
                    gemm_at(self.value(a).data(), g, db, m, k, n);
                }
            }
            Op::MatMulBt { a, b, m, k, n } => {
                if self.wants(a) {
                    let da = accumulate(&mut grads[a.0], m * k);
                    gemm(g, self.value(b).data(), da, m, n, k);
                }
                if self.wants(b) {
                    let db = accumulate(&mut grads[b.0], n * k);
                    gemm_at(g, self.value(a).data(), db, m, n, k);
                }
            }
            Op::AddBias { x, b, channels, inner } => {
                if self.wants(x) {
                    let dx = accumulate(&mut grads[x.0], g.len());
                    for (d, v) in dx.iter_mut().zip(g) {
                        *d += v;
                    }
                }
                if self.wants(b) {
                    let db = accumulate(&mut grads[b.0], channels);
                    for (i, v) in g.iter().enumerate() {
                        db[(i / inner) % channels] += v;
                    }
                }
            }
            Op::Relu { x } => {
                let xv = self.value(x).data();
                let dx = accumulate(&mut grads[x.0], g.len());
                for ((d, v), &xi) in dx.iter_mut().zip(g).zip(xv) {
                    if xi > 0.0 {
                        *d += v;
                    }
                }
            }
            Op::Conv2d { x, w, ref geom, ref cols } => {
                let (rows, ncols) = (geom.col_rows(), geom.col_cols());
                let out_len = geom.filters * ncols;
                let in_len = geom.in_channels * geom.height * geom.width;
                if self.wants(w) {
                    let dw = accumulate(&mut grads[w.0], geom.filters * rows);
                    for n in 0..geom.batch {
                        let col = &cols[n * rows * ncols..(n + 1) * rows * ncols];
                        gemm_bt(&g[n * out_len..(n + 1) * out_len], col, dw, geom.filters, ncols, rows);
                    }
                }
                if self.wants(x) {
                    let wd = self.value(w).data();
                    let mut dcol = vec![0.0; rows * ncols];
                    let dx = accumulate(&mut grads[x.0], geom.batch * in_len);
                    for n in 0..geom.batch {
                        dcol.iter_mut().for_each(|v| *v = 0.0);
                        gemm_at(wd, &g[n * out_len..(n + 1) * out_len], &mut dcol, geom.filters, rows, ncols);
                        col2im(&dcol, geom, &mut dx[n * in_len..(n + 1) * in_len]);
                    }
                }
            }
            Op::MaxPool2d { x, ref argmax } => {
                let dx = accumulate(&mut grads[x.0], self.value(x).numel());
                for (&idx, v) in argmax.iter().zip(g) {
                    dx[idx] += v;
                }
            }
            Op::Reshape { x } => {
                let dx = accumulate(&mut grads[x.0], g.len());
                for (d, v) in dx.iter_mut().zip(g) {
                    *d += v;
                }
            }
            Op::SoftmaxCrossEntropy { logits, ref labels, ref probs } => {
                let n = labels.len();
                let k = probs.len() / n;
                let scale = g[0] / n as f64;
                let dz = accumulate(&mut grads[logits.0], probs.len());
                for r in 0..n {
                    for c in 0..k {
                        let onehot = if c == labels[r] { 1.0 } else { 0.0 };
                        dz[r * k + c] += scale * (probs[r * k + c] - onehot);
                    }
                }
            }
            Op::Mse { pred, ref target } => {
                let p = self.value(pred).data();
                let scale = 2.0 * g[0] / p.len() as f64;
                let dp = accumulate(&mut grads[pred.0], p.len());
                for ((d, a), b) in dp.iter_mut().zip(p).zip(target) {
                    *d += scale * (a - b);
                }
            }
            Op::Add { a, b } => {
                for v in [a, b] {
                    if self.wants(v) {
                        let dv = accumulate(&mut grads[v.0], g.len());
                        for (d, x) in dv.iter_mut().zip(g) {
                            *d += x;
                        }
                    }
                }
            }
            Op::Scale { x, c } => {
                let dx = accumulate(&mut grads[x.0], g.len());
                for (d, v) in dx.iter_mut().zip(g) {
                    *d += c * v;
                }
            }
        }
    }
}
