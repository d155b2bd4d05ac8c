use crate::error::{Error, Result};
use crate::autograd::tensor::{matmul_raw, Tensor};

/// Handle to a value on a [`Tape`]. Only valid for the tape that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TensorId(pub(crate) usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(TensorId, TensorId),
    Add(TensorId, TensorId),
    AddBias(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Scale(TensorId, f32),
    Transpose(TensorId),
    Reshape(TensorId),
    ConcatRows(Vec<TensorId>),
    ConcatCols(Vec<TensorId>),
    SliceRows(TensorId, usize),
    SliceCols(TensorId, usize),
    GatherRows(TensorId, Vec<usize>),
    Softmax(TensorId),
    Sigmoid(TensorId),
    Gelu(TensorId),
    LayerNorm {
        x: TensorId,
        gain: TensorId,
        bias: TensorId,
        eps: f32,
    },
    Embed(TensorId, Vec<usize>),
    Sum(TensorId),
    Mean(TensorId),
    WeightedBce {
        scores: TensorId,
        targets: Vec<usize>,
        weights: Vec<f32>,
    },
    SoftmaxXent {
        scores: TensorId,
        targets: Vec<usize>,
        weights: Vec<f32>,
    },
}

struct Node {
    shape: Vec<usize>,
    data: Vec<f32>,
    needs_grad: bool,
    op: Op,
}

/// Probabilities below this floor are clamped inside the log terms of the
/// cross-entropy losses.
pub const LOG_FLOOR: f32 = 1e-12;

const GELU_K: f32 = 0.797_884_6; // sqrt(2/pi)
const GELU_C: f32 = 0.044715;

/// Gradients read back after `backward`. Values the loss never touched
/// report zeros.
pub struct Gradients {
    grads: Vec<Option<Vec<f32>>>,
}

impl Gradients {
    pub fn get(&self, id: TensorId) -> Option<&[f32]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    /// Gradient as a dense vector, zero-filled when the value did not
    /// participate in the loss.
    pub fn dense(&self, id: TensorId, numel: usize) -> Vec<f32> {
        match self.get(id) {
            Some(g) => g.to_vec(),
            None => vec![0.0; numel],
        }
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn transpose_raw(src: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; src.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = src[i * cols + j];
        }
    }
    out
}

fn stable_sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f32>, needs_grad: bool, op: Op) -> TensorId {
        debug_assert!(
            data.iter().all(|v| v.is_finite()),
            "non-finite forward value from {op:?}"
        );
        self.nodes.push(Node {
            shape,
            data,
            needs_grad,
            op,
        });
        TensorId(self.nodes.len() - 1)
    }

    /// Record a tensor; gradient tracking follows its `requires_grad` flag.
    pub fn leaf(&mut self, t: &Tensor) -> TensorId {
        self.push(
            t.shape().to_vec(),
            t.data().to_vec(),
            t.requires_grad(),
            Op::Leaf,
        )
    }

    /// Record a tensor that never receives gradient.
    pub fn constant(&mut self, t: &Tensor) -> TensorId {
        self.push(t.shape().to_vec(), t.data().to_vec(), false, Op::Leaf)
    }

    pub fn constant_from(&mut self, shape: Vec<usize>, data: Vec<f32>) -> Result<TensorId> {
        let t = Tensor::new(shape, data)?;
        Ok(self.constant(&t))
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn value(&self, id: TensorId) -> &[f32] {
        &self.nodes[id.0].data
    }

    pub fn scalar_value(&self, id: TensorId) -> f32 {
        debug_assert_eq!(self.nodes[id.0].data.len(), 1);
        self.nodes[id.0].data[0]
    }

    pub fn tensor(&self, id: TensorId) -> Tensor {
        Tensor::new(self.shape(id).to_vec(), self.value(id).to_vec()).expect("tape node is valid")
    }

    fn needs(&self, id: TensorId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn check_rank2(&self, op: &'static str, id: TensorId) -> Result<(usize, usize)> {
        let s = self.shape(id);
        if s.len() != 2 {
            return Err(Error::BadArgument {
                op,
                msg: format!("expected rank 2, got shape {s:?}"),
            });
        }
        Ok((s[0], s[1]))
    }

    // ---- ops ----

    /// C = A(m x k) * B(k x n).
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (m, ka) = self.check_rank2("matmul", a)?;
        let (kb, n) = self.check_rank2("matmul", b)?;
        if ka != kb {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let data = matmul_raw(self.value(a), self.value(b), m, ka, n);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(vec![m, n], data, ng, Op::MatMul(a, b)))
    }

    /// Elementwise sum of two same-shape values.
    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op: "add",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let data = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(self.shape(a).to_vec(), data, ng, Op::Add(a, b)))
    }

    /// Broadcast a vector over the last axis: a[..., d] + b[d].
    pub fn add_bias(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let d = *self.shape(a).last().unwrap_or(&0);
        if self.shape(b) != [d] || d == 0 {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let bv = self.value(b);
        let data = self
            .value(a)
            .iter()
            .enumerate()
            .map(|(i, x)| x + bv[i % d])
            .collect();
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(self.shape(a).to_vec(), data, ng, Op::AddBias(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op: "mul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let data = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(self.shape(a).to_vec(), data, ng, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: TensorId, c: f32) -> Result<TensorId> {
        let data = self.value(a).iter().map(|x| x * c).collect();
        let ng = self.needs(a);
        Ok(self.push(self.shape(a).to_vec(), data, ng, Op::Scale(a, c)))
    }

    pub fn transpose(&mut self, a: TensorId) -> Result<TensorId> {
        let (m, n) = self.check_rank2("transpose", a)?;
        let data = transpose_raw(self.value(a), m, n);
        let ng = self.needs(a);
        Ok(self.push(vec![n, m], data, ng, Op::Transpose(a)))
    }

    pub fn reshape(&mut self, a: TensorId, shape: Vec<usize>) -> Result<TensorId> {
        let numel: usize = shape.iter().product();
        if numel != self.value(a).len() {
            return Err(Error::BadArgument {
                op: "reshape",
                msg: format!("cannot view {:?} as {shape:?}", self.shape(a)),
            });
        }
        let data = self.value(a).to_vec();
        let ng = self.needs(a);
        Ok(self.push(shape, data, ng, Op::Reshape(a)))
    }

    /// Stack rank-2 values vertically; all parts must agree on columns.
    pub fn concat_rows(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(Error::BadArgument {
                op: "concat_rows",
                msg: "no parts".into(),
            });
        }
        let (_, cols) = self.check_rank2("concat_rows", parts[0])?;
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.check_rank2("concat_rows", p)?;
            if c != cols {
                return Err(Error::ShapeMismatch {
                    op: "concat_rows",
                    lhs: self.shape(parts[0]).to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
            rows += r;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.value(p));
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(vec![rows, cols], data, ng, Op::ConcatRows(parts.to_vec())))
    }

    /// Stack rank-2 values side by side; all parts must agree on rows.
    pub fn concat_cols(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(Error::BadArgument {
                op: "concat_cols",
                msg: "no parts".into(),
            });
        }
        let (rows, _) = self.check_rank2("concat_cols", parts[0])?;
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.check_rank2("concat_cols", p)?;
            if r != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.shape(parts[0]).to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
            cols += c;
        }
        let widths: Vec<usize> = parts.iter().map(|&p| self.shape(p)[1]).collect();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p)[i * w..(i + 1) * w]);
            }
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(vec![rows, cols], data, ng, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_rows(&mut self, a: TensorId, start: usize, len: usize) -> Result<TensorId> {
        let (rows, cols) = self.check_rank2("slice_rows", a)?;
        if start + len > rows {
            return Err(Error::BadArgument {
                op: "slice_rows",
                msg: format!("rows [{start}, {}) out of 0..{rows}", start + len),
            });
        }
        let data = self.value(a)[start * cols..(start + len) * cols].to_vec();
        let ng = self.needs(a);
        Ok(self.push(vec![len, cols], data, ng, Op::SliceRows(a, start)))
    }

    pub fn slice_cols(&mut self, a: TensorId, start: usize, width: usize) -> Result<TensorId> {
        let (rows, cols) = self.check_rank2("slice_cols", a)?;
        if start + width > cols {
            return Err(Error::BadArgument {
                op: "slice_cols",
                msg: format!("cols [{start}, {}) out of 0..{cols}", start + width),
            });
        }
        let src = self.value(a);
        let mut data = Vec::with_capacity(rows * width);
        for i in 0..rows {
            data.extend_from_slice(&src[i * cols + start..i * cols + start + width]);
        }
        let ng = self.needs(a);
        Ok(self.push(vec![rows, width], data, ng, Op::SliceCols(a, start)))
    }

    /// Select rows by index; duplicates are allowed and their gradients add.
    pub fn gather_rows(&mut self, a: TensorId, indices: &[usize]) -> Result<TensorId> {
        let (rows, cols) = self.check_rank2("gather_rows", a)?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::BadArgument {
                op: "gather_rows",
                msg: format!("row {bad} out of 0..{rows}"),
            });
        }
        let src = self.value(a);
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.extend_from_slice(&src[i * cols..(i + 1) * cols]);
        }
        let ng = self.needs(a);
        Ok(self.push(
            vec![indices.len(), cols],
            data,
            ng,
            Op::GatherRows(a, indices.to_vec()),
        ))
    }

    /// Softmax over the last axis; each row of the result sums to one.
    pub fn softmax(&mut self, a: TensorId) -> Result<TensorId> {
        let d = *self.shape(a).last().ok_or(Error::BadArgument {
            op: "softmax",
            msg: "scalar input".into(),
        })?;
        if d == 0 {
            return Err(Error::BadArgument {
                op: "softmax",
                msg: "empty last axis".into(),
            });
        }
        let src = self.value(a);
        let mut data = vec![0.0f32; src.len()];
        for (row_in, row_out) in src.chunks(d).zip(data.chunks_mut(d)) {
            let m = row_in.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let mut s = 0.0f32;
            for (o, &x) in row_out.iter_mut().zip(row_in) {
                *o = (x - m).exp();
                s += *o;
            }
            for o in row_out.iter_mut() {
                *o /= s;
            }
        }
        let ng = self.needs(a);
        Ok(self.push(self.shape(a).to_vec(), data, ng, Op::Softmax(a)))
    }

    pub fn sigmoid(&mut self, a: TensorId) -> Result<TensorId> {
        let data = self.value(a).iter().map(|&x| stable_sigmoid(x)).collect();
        let ng = self.needs(a);
        Ok(self.push(self.shape(a).to_vec(), data, ng, Op::Sigmoid(a)))
    }

    /// Tanh-approximation GELU.
    pub fn gelu(&mut self, a: TensorId) -> Result<TensorId> {
        let data = self
            .value(a)
            .iter()
            .map(|&x| {
                let u = GELU_K * (x + GELU_C * x * x * x);
                0.5 * x * (1.0 + u.tanh())
            })
            .collect();
        let ng = self.needs(a);
        Ok(self.push(self.shape(a).to_vec(), data, ng, Op::Gelu(a)))
    }

    /// Normalize each row over the last axis (population variance), then
    /// apply a learned gain and bias.
    pub fn layer_norm(
        &mut self,
        x: TensorId,
        gain: TensorId,
        bias: TensorId,
        eps: f32,
    ) -> Result<TensorId> {
        let d = *self.shape(x).last().ok_or(Error::BadArgument {
            op: "layer_norm",
            msg: "scalar input".into(),
        })?;
        if d == 0 || self.shape(gain) != [d] || self.shape(bias) != [d] {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(gain).to_vec(),
            });
        }
        let src = self.value(x);
        let g = self.value(gain).to_vec();
        let b = self.value(bias).to_vec();
        let mut data = vec![0.0f32; src.len()];
        for (row_in, row_out) in src.chunks(d).zip(data.chunks_mut(d)) {
            let mean = row_in.iter().sum::<f32>() / d as f32;
            let var = row_in.iter().map(|x| (x - mean) * (x - mean)).sum::<f32>() / d as f32;
            let inv = 1.0 / (var + eps).sqrt();
            for j in 0..d {
                row_out[j] = (row_in[j] - mean) * inv * g[j] + b[j];
            }
        }
        let ng = self.needs(x) || self.needs(gain) || self.needs(bias);
        Ok(self.push(
            self.shape(x).to_vec(),
            data,
            ng,
            Op::LayerNorm { x, gain, bias, eps },
        ))
    }

    /// Look up embedding rows for a token sequence.
    pub fn embed(&mut self, table: TensorId, ids: &[usize]) -> Result<TensorId> {
        let (vocab, d) = self.check_rank2("embed", table)?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(Error::VocabIndex { id: bad, vocab });
        }
        let src = self.value(table);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            data.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        let ng = self.needs(table);
        Ok(self.push(
            vec![ids.len(), d],
            data,
            ng,
            Op::Embed(table, ids.to_vec()),
        ))
    }

    pub fn sum(&mut self, a: TensorId) -> Result<TensorId> {
        let s: f32 = self.value(a).iter().sum();
        let ng = self.needs(a);
        Ok(self.push(vec![], vec![s], ng, Op::Sum(a)))
    }

    pub fn mean(&mut self, a: TensorId) -> Result<TensorId> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(Error::BadArgument {
                op: "mean",
                msg: "empty input".into(),
            });
        }
        let s: f32 = self.value(a).iter().sum::<f32>() / n as f32;
        let ng = self.needs(a);
        Ok(self.push(vec![], vec![s], ng, Op::Mean(a)))
    }

    /// Keyword-weighted binary cross entropy over vocabulary scores.
    ///
    /// `scores` is N x V; row i is scored against a one-hot target at
    /// `targets[i]` with every vocabulary entry treated as an independent
    /// sigmoid label, averaged over V, then combined as a weighted mean over
    /// the N positions. Logs are clamped at [`LOG_FLOOR`].
    pub fn weighted_bce(
        &mut self,
        scores: TensorId,
        targets: &[usize],
        weights: &[f32],
    ) -> Result<TensorId> {
        let (n, v) = self.check_rank2("weighted_bce", scores)?;
        self.check_loss_args("weighted_bce", n, v, targets, weights)?;
        let src = self.value(scores);
        let mut total = 0.0f64;
        for i in 0..n {
            let mut row = 0.0f64;
            for (j, &s) in src[i * v..(i + 1) * v].iter().enumerate() {
                let p = stable_sigmoid(s);
                let y = (j == targets[i]) as u8 as f32;
                let term = -(y * p.max(LOG_FLOOR).ln()
                    + (1.0 - y) * (1.0 - p).max(LOG_FLOOR).ln());
                row += term as f64;
            }
            total += weights[i] as f64 * row / v as f64;
        }
        let loss = (total / n as f64) as f32;
        let ng = self.needs(scores);
        Ok(self.push(
            vec![],
            vec![loss],
            ng,
            Op::WeightedBce {
                scores,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
            },
        ))
    }

    /// Weighted softmax cross entropy over vocabulary scores (the
    /// conventional single-label alternative to [`Tape::weighted_bce`]).
    pub fn softmax_xent(
        &mut self,
        scores: TensorId,
        targets: &[usize],
        weights: &[f32],
    ) -> Result<TensorId> {
        let (n, v) = self.check_rank2("softmax_xent", scores)?;
        self.check_loss_args("softmax_xent", n, v, targets, weights)?;
        let src = self.value(scores);
        let mut total = 0.0f64;
        for i in 0..n {
            let row = &src[i * v..(i + 1) * v];
            let m = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let logsum = m + row.iter().map(|&x| ((x - m) as f64).exp()).sum::<f64>().ln() as f32;
            total += weights[i] as f64 * (logsum - row[targets[i]]) as f64;
        }
        let loss = (total / n as f64) as f32;
        let ng = self.needs(scores);
        Ok(self.push(
            vec![],
            vec![loss],
            ng,
            Op::SoftmaxXent {
                scores,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
            },
        ))
    }

    fn check_loss_args(
        &self,
        op: &'static str,
        n: usize,
        v: usize,
        targets: &[usize],
        weights: &[f32],
    ) -> Result<()> {
        if n == 0 || v == 0 {
            return Err(Error::BadArgument {
                op,
                msg: "empty score matrix".into(),
            });
        }
        if targets.len() != n || weights.len() != n {
            return Err(Error::BadArgument {
                op,
                msg: format!(
                    "{n} rows but {} targets / {} weights",
                    targets.len(),
                    weights.len()
                ),
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= v) {
            return Err(Error::VocabIndex { id: bad, vocab: v });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::BadArgument {
                op,
                msg: "weights must be finite and non-negative".into(),
            });
        }
        Ok(())
    }

    /// Re-evaluate the recorded program up to `target` in f64, optionally
    /// substituting leaf values. Central-difference checks use this so the
    /// numeric gradient is not drowned by f32 forward rounding.
    pub fn replay_f64(&self, target: TensorId, overrides: &[(TensorId, Vec<f64>)]) -> f64 {
        let mut vals: Vec<Vec<f64>> = Vec::with_capacity(target.0 + 1);
        for i in 0..=target.0 {
            let node = &self.nodes[i];
            let v: Vec<f64> = match &node.op {
                Op::Leaf => {
                    match overrides.iter().find(|(id, _)| id.0 == i) {
                        Some((_, data)) => data.clone(),
                        None => node.data.iter().map(|&x| x as f64).collect(),
                    }
                }
                Op::MatMul(a, b) => {
                    let (m, k) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                    let n = self.nodes[b.0].shape[1];
                    let (av, bv) = (&vals[a.0], &vals[b.0]);
                    let mut c = vec![0.0f64; m * n];
                    for r in 0..m {
                        for p in 0..k {
                            let x = av[r * k + p];
                            for q in 0..n {
                                c[r * n + q] += x * bv[p * n + q];
                            }
                        }
                    }
                    c
                }
                Op::Add(a, b) => vals[a.0].iter().zip(&vals[b.0]).map(|(x, y)| x + y).collect(),
                Op::AddBias(a, b) => {
                    let d = self.nodes[b.0].data.len();
                    vals[a.0]
                        .iter()
                        .enumerate()
                        .map(|(j, x)| x + vals[b.0][j % d])
                        .collect()
                }
                Op::Mul(a, b) => vals[a.0].iter().zip(&vals[b.0]).map(|(x, y)| x * y).collect(),
                Op::Scale(a, c) => vals[a.0].iter().map(|x| x * *c as f64).collect(),
                Op::Transpose(a) => {
                    let (m, n) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                    let mut out = vec![0.0f64; m * n];
                    for r in 0..m {
                        for c in 0..n {
                            out[c * m + r] = vals[a.0][r * n + c];
                        }
                    }
                    out
                }
                Op::Reshape(a) => vals[a.0].clone(),
                Op::ConcatRows(parts) => {
                    parts.iter().flat_map(|p| vals[p.0].iter().cloned()).collect()
                }
                Op::ConcatCols(parts) => {
                    let rows = node.shape[0];
                    let mut out = Vec::with_capacity(node.data.len());
                    for r in 0..rows {
                        for &p in parts {
                            let w = self.nodes[p.0].shape[1];
                            out.extend_from_slice(&vals[p.0][r * w..(r + 1) * w]);
                        }
                    }
                    out
                }
                Op::SliceRows(a, start) => {
                    let cols = node.shape[1];
                    let len = node.shape[0];
                    vals[a.0][start * cols..(start + len) * cols].to_vec()
                }
                Op::SliceCols(a, start) => {
                    let w = node.shape[1];
                    let cols = self.nodes[a.0].shape[1];
                    let rows = node.shape[0];
                    let mut out = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        out.extend_from_slice(&vals[a.0][r * cols + start..r * cols + start + w]);
                    }
                    out
                }
                Op::GatherRows(a, idx) => {
                    let cols = node.shape[1];
                    let mut out = Vec::with_capacity(idx.len() * cols);
                    for &r in idx {
                        out.extend_from_slice(&vals[a.0][r * cols..(r + 1) * cols]);
                    }
                    out
                }
                Op::Softmax(a) => {
                    let d = *node.shape.last().expect("checked in forward");
                    let mut out = vec![0.0f64; vals[a.0].len()];
                    for (ri, ro) in vals[a.0].chunks(d).zip(out.chunks_mut(d)) {
                        let m = ri.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let mut s = 0.0;
                        for (o, &x) in ro.iter_mut().zip(ri) {
                            *o = (x - m).exp();
                            s += *o;
                        }
                        for o in ro.iter_mut() {
                            *o /= s;
                        }
                    }
                    out
                }
                Op::Sigmoid(a) => vals[a.0]
                    .iter()
                    .map(|&x| {
                        if x >= 0.0 {
                            1.0 / (1.0 + (-x).exp())
                        } else {
                            let e = x.exp();
                            e / (1.0 + e)
                        }
                    })
                    .collect(),
                Op::Gelu(a) => vals[a.0]
                    .iter()
                    .map(|&x| {
                        let u = (2.0 / std::f64::consts::PI).sqrt()
                            * (x + GELU_C as f64 * x * x * x);
                        0.5 * x * (1.0 + u.tanh())
                    })
                    .collect(),
                Op::LayerNorm { x, gain, bias, eps } => {
                    let d = *node.shape.last().expect("checked in forward");
                    let mut out = vec![0.0f64; vals[x.0].len()];
                    for (ri, ro) in vals[x.0].chunks(d).zip(out.chunks_mut(d)) {
                        let mean = ri.iter().sum::<f64>() / d as f64;
                        let var = ri.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                        let inv = 1.0 / (var + *eps as f64).sqrt();
                        for j in 0..d {
                            ro[j] = (ri[j] - mean) * inv * vals[gain.0][j] + vals[bias.0][j];
                        }
                    }
                    out
                }
                Op::Embed(table, ids) => {
                    let d = node.shape[1];
                    let mut out = Vec::with_capacity(ids.len() * d);
                    for &r in ids {
                        out.extend_from_slice(&vals[table.0][r * d..(r + 1) * d]);
                    }
                    out
                }
                Op::Sum(a) => vec![vals[a.0].iter().sum()],
                Op::Mean(a) => vec![vals[a.0].iter().sum::<f64>() / vals[a.0].len() as f64],
                Op::WeightedBce {
                    scores,
                    targets,
                    weights,
                } => {
                    let (n, v) = (self.nodes[scores.0].shape[0], self.nodes[scores.0].shape[1]);
                    let floor = LOG_FLOOR as f64;
                    let mut total = 0.0f64;
                    for r in 0..n {
                        let mut row = 0.0f64;
                        for (j, &s) in vals[scores.0][r * v..(r + 1) * v].iter().enumerate() {
                            let p = if s >= 0.0 {
                                1.0 / (1.0 + (-s).exp())
                            } else {
                                let e = s.exp();
                                e / (1.0 + e)
                            };
                            let y = (j == targets[r]) as u8 as f64;
                            row += -(y * p.max(floor).ln() + (1.0 - y) * (1.0 - p).max(floor).ln());
                        }
                        total += weights[r] as f64 * row / v as f64;
                    }
                    vec![total / n as f64]
                }
                Op::SoftmaxXent {
                    scores,
                    targets,
                    weights,
                } => {
                    let (n, v) = (self.nodes[scores.0].shape[0], self.nodes[scores.0].shape[1]);
                    let mut total = 0.0f64;
                    for r in 0..n {
                        let row = &vals[scores.0][r * v..(r + 1) * v];
                        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let logsum = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
                        total += weights[r] as f64 * (logsum - row[targets[r]]);
                    }
                    vec![total / n as f64]
                }
            };
            vals.push(v);
        }
        vals[target.0][0]
    }

    // ---- backward ----

    /// Reverse sweep from a scalar loss. Each node is visited exactly once,
    /// contributions accumulate in tape order, and the result maps every
    /// recorded value to its gradient (zeros if unused).
    pub fn backward(&self, loss: TensorId) -> Result<Gradients> {
        let ln = &self.nodes[loss.0];
        if ln.data.len() != 1 {
            return Err(Error::NonScalarLoss(ln.shape.clone()));
        }
        if !ln.needs_grad {
            return Err(Error::DetachedLoss);
        }
        let mut grads: Vec<Option<Vec<f32>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad || grads[i].is_none() {
                continue;
            }
            let g = grads[i].take().expect("checked above");
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, i: usize, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
        let numel_of = |idx: usize| self.nodes[idx].data.len();
        macro_rules! acc {
            ($id:expr) => {
                grads[$id.0].get_or_insert_with(|| vec![0.0; numel_of($id.0)])
            };
        }
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                let n = self.nodes[b.0].shape[1];
                if self.needs(*a) {
                    let bt = transpose_raw(&self.nodes[b.0].data, k, n);
                    let da = matmul_raw(g, &bt, m, n, k);
                    for (x, y) in acc!(a).iter_mut().zip(&da) {
                        *x += y;
                    }
                }
                if self.needs(*b) {
                    let at = transpose_raw(&self.nodes[a.0].data, m, k);
                    let db = matmul_raw(&at, g, k, m, n);
                    for (x, y) in acc!(b).iter_mut().zip(&db) {
                        *x += y;
                    }
                }
            }
            Op::Add(a, b) => {
                if self.needs(*a) {
                    for (x, y) in acc!(a).iter_mut().zip(g) {
                        *x += y;
                    }
                }
                if self.needs(*b) {
                    for (x, y) in acc!(b).iter_mut().zip(g) {
                        *x += y;
                    }
                }
            }
            Op::AddBias(a, b) => {
                if self.needs(*a) {
                    for (x, y) in acc!(a).iter_mut().zip(g) {
                        *x += y;
                    }
                }
                if self.needs(*b) {
                    let d = self.nodes[b.0].data.len();
                    let gb = acc!(b);
                    for (idx, y) in g.iter().enumerate() {
                        gb[idx % d] += y;
                    }
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let bv = &self.nodes[b.0].data;
                    for ((x, y), z) in acc!(a).iter_mut().zip(g).zip(bv) {
                        *x += y * z;
                    }
                }
                if self.needs(*b) {
                    let av = &self.nodes[a.0].data;
                    for ((x, y), z) in acc!(b).iter_mut().zip(g).zip(av) {
                        *x += y * z;
                    }
                }
            }
            Op::Scale(a, c) => {
                if self.needs(*a) {
                    for (x, y) in acc!(a).iter_mut().zip(g) {
                        *x += y * c;
                    }
                }
            }
            Op::Transpose(a) => {
                if self.needs(*a) {
                    let (n, m) = (self.nodes[i].shape[0], self.nodes[i].shape[1]);
                    let gt = transpose_raw(g, n, m);
                    for (x, y) in acc!(a).iter_mut().zip(&gt) {
                        *x += y;
                    }
                }
            }
            Op::Reshape(a) => {
                if self.needs(*a) {
                    for (x, y) in acc!(a).iter_mut().zip(g) {
                        *x += y;
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p.0].data.len();
                    if self.needs(p) {
                        for (x, y) in acc!(p).iter_mut().zip(&g[offset..offset + len]) {
                            *x += y;
                        }
                    }
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let rows = self.nodes[i].shape[0];
                let total = self.nodes[i].shape[1];
                let mut start = 0;
                for &p in parts {
                    let w = self.nodes[p.0].shape[1];
                    if self.needs(p) {
                        let gp = acc!(p);
                        for r in 0..rows {
                            for c in 0..w {
                                gp[r * w + c] += g[r * total + start + c];
                            }
                        }
                    }
                    start += w;
                }
            }
            Op::SliceRows(a, start) => {
                if self.needs(*a) {
                    let cols = self.nodes[i].shape[1];
                    let ga = acc!(a);
                    for (idx, y) in g.iter().enumerate() {
                        ga[start * cols + idx] += y;
                    }
                }
            }
            Op::SliceCols(a, start) => {
                if self.needs(*a) {
                    let (rows, w) = (self.nodes[i].shape[0], self.nodes[i].shape[1]);
                    let cols = self.nodes[a.0].shape[1];
                    let ga = acc!(a);
                    for r in 0..rows {
                        for c in 0..w {
                            ga[r * cols + start + c] += g[r * w + c];
                        }
                    }
                }
            }
            Op::GatherRows(a, indices) => {
                if self.needs(*a) {
                    let cols = self.nodes[i].shape[1];
                    let ga = acc!(a);
                    for (r, &src_row) in indices.iter().enumerate() {
                        for c in 0..cols {
                            ga[src_row * cols + c] += g[r * cols + c];
                        }
                    }
                }
            }
            Op::Softmax(a) => {
                if self.needs(*a) {
                    let d = *self.nodes[i].shape.last().expect("checked in forward");
                    let y = &self.nodes[i].data;
                    let ga = acc!(a);
                    for r in 0..y.len() / d {
                        let yr = &y[r * d..(r + 1) * d];
                        let gr = &g[r * d..(r + 1) * d];
                        let dot: f32 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..d {
                            ga[r * d + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                }
            }
            Op::Sigmoid(a) => {
                if self.needs(*a) {
                    let y = &self.nodes[i].data;
                    for ((x, gy), &yv) in acc!(a).iter_mut().zip(g).zip(y) {
                        *x += gy * yv * (1.0 - yv);
                    }
                }
            }
            Op::Gelu(a) => {
                if self.needs(*a) {
                    let xs = &self.nodes[a.0].data;
                    for ((gx, gy), &x) in acc!(a).iter_mut().zip(g).zip(xs) {
                        let u = GELU_K * (x + GELU_C * x * x * x);
                        let t = u.tanh();
                        let du = GELU_K * (1.0 + 3.0 * GELU_C * x * x);
                        *gx += gy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du);
                    }
                }
            }
            Op::LayerNorm { x, gain, bias, eps } => {
                let d = *self.nodes[i].shape.last().expect("checked in forward");
                let xs = &self.nodes[x.0].data;
                let gv = &self.nodes[gain.0].data;
                let rows = xs.len() / d;
                for r in 0..rows {
                    let xr = &xs[r * d..(r + 1) * d];
                    let gr = &g[r * d..(r + 1) * d];
                    let mean = xr.iter().sum::<f32>() / d as f32;
                    let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / d as f32;
                    let inv = 1.0 / (var + eps).sqrt();
                    if self.needs(*gain) {
                        let gg = acc!(gain);
                        for j in 0..d {
                            gg[j] += gr[j] * (xr[j] - mean) * inv;
                        }
                    }
                    if self.needs(*bias) {
                        let gb = acc!(bias);
                        for j in 0..d {
                            gb[j] += gr[j];
                        }
                    }
                    if self.needs(*x) {
                        let mut dvar = 0.0f32;
                        let mut dmean = 0.0f32;
                        for j in 0..d {
                            let dxh = gr[j] * gv[j];
                            dvar += dxh * (xr[j] - mean) * (-0.5) * inv * inv * inv;
                            dmean += -dxh * inv;
                        }
                        let gx = acc!(x);
                        for j in 0..d {
                            let dxh = gr[j] * gv[j];
                            gx[r * d + j] += dxh * inv
                                + dvar * 2.0 * (xr[j] - mean) / d as f32
                                + dmean / d as f32;
                        }
                    }
                }
            }
            Op::Embed(table, ids) => {
                if self.needs(*table) {
                    let d = self.nodes[i].shape[1];
                    let gt = acc!(table);
                    for (r, &id) in ids.iter().enumerate() {
                        for c in 0..d {
                            gt[id * d + c] += g[r * d + c];
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if self.needs(*a) {
                    let gy = g[0];
                    for x in acc!(a).iter_mut() {
                        *x += gy;
                    }
                }
            }
            Op::Mean(a) => {
                if self.needs(*a) {
                    let n = self.nodes[a.0].data.len() as f32;
                    let gy = g[0] / n;
                    for x in acc!(a).iter_mut() {
                        *x += gy;
                    }
                }
            }
            Op::WeightedBce {
                scores,
                targets,
                weights,
            } => {
                if self.needs(*scores) {
                    let (n, v) = (self.nodes[scores.0].shape[0], self.nodes[scores.0].shape[1]);
                    let src = &self.nodes[scores.0].data;
                    let gy = g[0];
                    let gs = acc!(scores);
                    for r in 0..n {
                        let wr = weights[r] / (n as f32 * v as f32);
                        for j in 0..v {
                            let p = stable_sigmoid(src[r * v + j]);
                            let y = (j == targets[r]) as u8 as f32;
                            // clamp indicators: a clamped log contributes no slope
                            let dpos = if p > LOG_FLOOR { y * (1.0 - p) } else { 0.0 };
                            let dneg = if 1.0 - p > LOG_FLOOR { (1.0 - y) * p } else { 0.0 };
                            gs[r * v + j] += gy * wr * (dneg - dpos);
                        }
                    }
                }
            }
            Op::SoftmaxXent {
                scores,
                targets,
                weights,
            } => {
                if self.needs(*scores) {
                    let (n, v) = (self.nodes[scores.0].shape[0], self.nodes[scores.0].shape[1]);
                    let src = &self.nodes[scores.0].data;
                    let gy = g[0];
                    let gs = acc!(scores);
                    for r in 0..n {
                        let row = &src[r * v..(r + 1) * v];
                        let m = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                        let denom: f32 = row.iter().map(|&x| (x - m).exp()).sum();
                        let wr = weights[r] / n as f32;
                        for j in 0..v {
                            let p = (row[j] - m).exp() / denom;
                            let y = (j == targets[r]) as u8 as f32;
                            gs[r * v + j] += gy * wr * (p - y);
                        }
                    }
                }
            }
        }
    }
}
