//! Tape-based reverse-mode differentiation over 2-D `f32` values.
//!
//! A [`Graph`] records every operation as it is evaluated. Parameter leaves
//! borrow their data from a [`ModelParams`] store, so building a graph does
//! not copy weights. [`Graph::backward`] walks the tape in reverse and returns
//! the gradients of every leaf that requires one.

use std::borrow::Cow;
use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kernels;
use crate::tensor::ModelParams;
use crate::NnError;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Attention mask: `true` entries are blocked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttnMask {
    /// Query `i` may attend to keys `0..=i`.
    Causal,
    Dense {
        rows: usize,
        cols: usize,
        blocked: Vec<bool>,
    },
}

impl AttnMask {
    pub fn dense(rows: usize, cols: usize, blocked: Vec<bool>) -> Result<Self, NnError> {
        if blocked.len() != rows * cols {
            return Err(NnError::Shape(format!(
                "mask {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                blocked.len()
            )));
        }
        Ok(AttnMask::Dense { rows, cols, blocked })
    }

    #[inline]
    pub fn is_blocked(&self, i: usize, j: usize) -> bool {
        match self {
            AttnMask::Causal => j > i,
            AttnMask::Dense { cols, blocked, .. } => blocked[i * cols + j],
        }
    }

    fn check(&self, rows: usize, cols: usize) -> Result<(), NnError> {
        match self {
            AttnMask::Causal => Ok(()),
            AttnMask::Dense { rows: r, cols: c, .. } if *r == rows && *c == cols => Ok(()),
            AttnMask::Dense { rows: r, cols: c, .. } => Err(NnError::Shape(format!(
                "mask is {r}x{c} but scores are {rows}x{cols}"
            ))),
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f32),
    Gather(Var, Vec<usize>),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        /// per-row (mean, 1/std)
        stats: Vec<(f32, f32)>,
    },
    Gelu(Var),
    Dropout(Var, Vec<f32>),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        weights: Vec<f32>,
        probs: Vec<f32>,
        denom: f32,
    },
    Sum(Var),
}

struct Node<'p> {
    value: Cow<'p, [f32]>,
    rows: usize,
    cols: usize,
    op: Op,
    requires_grad: bool,
    /// Higher-precision copy of scalar losses.
    value64: Option<f64>,
}

struct DropoutState {
    prob: f32,
    rng: ChaCha8Rng,
}

pub const LAYER_NORM_EPS: f32 = 1e-5;
const GELU_C: f32 = 0.797_884_6; // sqrt(2/pi)
const GELU_K: f32 = 0.044_715;

/// Computation tape. Lives for one forward/backward pass.
pub struct Graph<'p> {
    nodes: Vec<Node<'p>>,
    params: Option<&'p ModelParams>,
    param_vars: HashMap<usize, Var>,
    dropout: Option<DropoutState>,
}

impl<'p> Graph<'p> {
    /// Graph over a parameter store, evaluation mode (no dropout).
    pub fn new(params: &'p ModelParams) -> Self {
        Self {
            nodes: Vec::new(),
            params: Some(params),
            param_vars: HashMap::new(),
            dropout: None,
        }
    }

    /// Graph over a parameter store with dropout active.
    pub fn training(params: &'p ModelParams, dropout_prob: f32, seed: u64) -> Self {
        let mut g = Self::new(params);
        if dropout_prob > 0.0 {
            g.dropout = Some(DropoutState {
                prob: dropout_prob,
                rng: ChaCha8Rng::seed_from_u64(seed),
            });
        }
        g
    }

    /// Graph with no parameter store; only explicit inputs.
    pub fn detached() -> Self {
        Self {
            nodes: Vec::new(),
            params: None,
            param_vars: HashMap::new(),
            dropout: None,
        }
    }

    pub fn params(&self) -> Option<&'p ModelParams> {
        self.params
    }

    pub fn is_training(&self) -> bool {
        self.dropout.is_some()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f32>, rows: usize, cols: usize, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            rows,
            cols,
            op,
            requires_grad,
            value64: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<'p> {
        &self.nodes[v.0]
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = self.node(v);
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f32] {
        &self.node(v).value
    }

    /// Scalar value, using the 64-bit copy when the op kept one.
    pub fn scalar(&self, v: Var) -> Result<f64, NnError> {
        let n = self.node(v);
        if n.rows * n.cols != 1 {
            return Err(NnError::NotScalar(n.rows, n.cols));
        }
        Ok(n.value64.unwrap_or(n.value[0] as f64))
    }

    /// Constant or differentiable input matrix.
    pub fn input(&mut self, data: Vec<f32>, rows: usize, cols: usize, requires_grad: bool) -> Result<Var, NnError> {
        if data.len() != rows * cols {
            return Err(NnError::Shape(format!(
                "input {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(self.push(data, rows, cols, Op::Leaf, requires_grad))
    }

    /// Leaf bound to a named parameter; repeated lookups share one node.
    pub fn param(&mut self, name: &str) -> Result<Var, NnError> {
        let params = self.params.ok_or_else(|| NnError::UnknownParam(name.to_string()))?;
        let id = params.id(name).ok_or_else(|| NnError::UnknownParam(name.to_string()))?;
        if let Some(&v) = self.param_vars.get(&id) {
            return Ok(v);
        }
        let t = params.tensor(id);
        let (rows, cols) = t.matrix_dims();
        self.nodes.push(Node {
            value: Cow::Borrowed(t.data()),
            rows,
            cols,
            op: Op::Param(id),
            requires_grad: t.requires_grad,
            value64: None,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (n, k) = self.shape(a);
        let (k2, m) = self.shape(b);
        if k != k2 {
            return Err(NnError::Shape(format!("matmul {n}x{k} by {k2}x{m}")));
        }
        let out = kernels::matmul(self.value(a), self.value(b), n, k, m);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, n, m, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (n, k) = self.shape(a);
        let (m, k2) = self.shape(b);
        if k != k2 {
            return Err(NnError::Shape(format!("matmul_t {n}x{k} by ({m}x{k2})^T")));
        }
        let out = kernels::matmul_bt(self.value(a), self.value(b), n, k, m);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, n, m, Op::MatMulT(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        if self.shape(a) != self.shape(b) {
            return Err(NnError::Shape(format!(
                "add {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let out: Vec<f32> = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let (r, c) = self.shape(a);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, r, c, Op::Add(a, b), rg))
    }

    /// Adds a `[1, c]` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NnError> {
        let (r, c) = self.shape(a);
        if self.shape(row) != (1, c) {
            return Err(NnError::Shape(format!(
                "add_row {r}x{c} with {:?}",
                self.shape(row)
            )));
        }
        let b = self.value(row);
        let mut out = self.value(a).to_vec();
        for chunk in out.chunks_exact_mut(c) {
            for (x, y) in chunk.iter_mut().zip(b) {
                *x += y;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(out, r, c, Op::AddRow(a, row), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        if self.shape(a) != self.shape(b) {
            return Err(NnError::Shape(format!(
                "mul {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let out: Vec<f32> = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let (r, c) = self.shape(a);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, r, c, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f32) -> Var {
        let out: Vec<f32> = self.value(a).iter().map(|x| x * s).collect();
        let (r, c) = self.shape(a);
        let rg = self.rg(a);
        self.push(out, r, c, Op::Scale(a, s), rg)
    }

    /// Selects rows of `table` by index (embedding lookup).
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var, NnError> {
        let (rows, c) = self.shape(table);
        let mut out = Vec::with_capacity(ids.len() * c);
        let src = self.value(table);
        for &id in ids {
            if id >= rows {
                return Err(NnError::IndexOutOfRange { index: id, len: rows });
            }
            out.extend_from_slice(&src[id * c..(id + 1) * c]);
        }
        let rg = self.rg(table);
        Ok(self.push(out, ids.len(), c, Op::Gather(table, ids.to_vec()), rg))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var, NnError> {
        let (r, c) = self.shape(a);
        if start + width > c {
            return Err(NnError::Shape(format!(
                "columns {start}..{} of a {r}x{c} matrix",
                start + width
            )));
        }
        let src = self.value(a);
        let mut out = Vec::with_capacity(r * width);
        for i in 0..r {
            out.extend_from_slice(&src[i * c + start..i * c + start + width]);
        }
        let rg = self.rg(a);
        Ok(self.push(out, r, width, Op::SliceCols(a, start), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let Some(&first) = parts.first() else {
            return Err(NnError::Shape("concat of zero parts".into()));
        };
        let r = self.shape(first).0;
        let mut total = 0;
        for &p in parts {
            let (pr, pc) = self.shape(p);
            if pr != r {
                return Err(NnError::Shape(format!("concat rows {pr} vs {r}")));
            }
            total += pc;
        }
        let mut out = vec![0.0; r * total];
        let mut off = 0;
        for &p in parts {
            let (_, pc) = self.shape(p);
            let src = self.value(p);
            for i in 0..r {
                out[i * total + off..i * total + off + pc].copy_from_slice(&src[i * pc..(i + 1) * pc]);
            }
            off += pc;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, r, total, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Row-wise softmax. Blocked entries get exactly zero probability; a row
    /// with every entry blocked is all zeros.
    pub fn softmax(&mut self, a: Var, mask: Option<&AttnMask>) -> Result<Var, NnError> {
        let (r, c) = self.shape(a);
        if let Some(m) = mask {
            m.check(r, c)?;
        }
        let src = self.value(a);
        let mut out = vec![0.0f32; r * c];
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let orow = &mut out[i * c..(i + 1) * c];
            let open = |j: usize| mask.is_none_or(|m| !m.is_blocked(i, j));
            let mut max = f32::NEG_INFINITY;
            for (j, &x) in row.iter().enumerate() {
                if open(j) && x > max {
                    max = x;
                }
            }
            if max == f32::NEG_INFINITY {
                continue;
            }
            let mut sum = 0.0f32;
            for (j, &x) in row.iter().enumerate() {
                if open(j) {
                    let e = (x - max).exp();
                    orow[j] = e;
                    sum += e;
                }
            }
            let inv = 1.0 / sum;
            for o in orow.iter_mut() {
                *o *= inv;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(out, r, c, Op::Softmax(a), rg))
    }

    /// Per-row layer normalization with learned gain and bias (`[1, c]` each).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var, NnError> {
        let (r, c) = self.shape(x);
        if self.shape(gamma) != (1, c) || self.shape(beta) != (1, c) {
            return Err(NnError::Shape(format!(
                "layer_norm over {c} columns with gain {:?} and bias {:?}",
                self.shape(gamma),
                self.shape(beta)
            )));
        }
        let src = self.value(x);
        let g = self.value(gamma);
        let b = self.value(beta);
        let mut out = vec![0.0f32; r * c];
        let mut stats = Vec::with_capacity(r);
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let mean = row.iter().map(|&v| v as f64).sum::<f64>() / c as f64;
            let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / c as f64;
            let rstd = 1.0 / (var + LAYER_NORM_EPS as f64).sqrt();
            let (mean, rstd) = (mean as f32, rstd as f32);
            for j in 0..c {
                out[i * c + j] = (row[j] - mean) * rstd * g[j] + b[j];
            }
            stats.push((mean, rstd));
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(out, r, c, Op::LayerNorm { x, gamma, beta, stats }, rg))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out: Vec<f32> = self
            .value(a)
            .iter()
            .map(|&x| 0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh()))
            .collect();
        let (r, c) = self.shape(a);
        let rg = self.rg(a);
        self.push(out, r, c, Op::Gelu(a), rg)
    }

    /// Inverted dropout; identity outside training mode.
    pub fn dropout(&mut self, a: Var) -> Var {
        let Some(state) = self.dropout.as_mut() else {
            return a;
        };
        let keep = 1.0 - state.prob;
        let n = self.nodes[a.0].value.len();
        let mask: Vec<f32> = (0..n)
            .map(|_| if state.rng.random::<f32>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let out: Vec<f32> = self.value(a).iter().zip(&mask).map(|(x, m)| x * m).collect();
        let (r, c) = self.shape(a);
        let rg = self.rg(a);
        self.push(out, r, c, Op::Dropout(a, mask), rg)
    }

    /// Weighted mean cross-entropy `Σ wᵢ·(−log softmax(logitsᵢ)[tᵢ]) / n` over rows.
    ///
    /// `weights` defaults to all ones. Reductions run in `f64`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], weights: Option<&[f32]>) -> Result<Var, NnError> {
        let (r, c) = self.shape(logits);
        if targets.len() != r {
            return Err(NnError::Shape(format!(
                "{} targets for {r} rows of logits",
                targets.len()
            )));
        }
        if let Some(w) = weights {
            if w.len() != r {
                return Err(NnError::Shape(format!("{} weights for {r} rows", w.len())));
            }
        }
        if r == 0 {
            return Err(NnError::Shape("cross entropy over zero rows".into()));
        }
        let src = self.value(logits);
        let mut probs = vec![0.0f32; r * c];
        let mut total = 0.0f64;
        for (i, &t) in targets.iter().enumerate() {
            if t >= c {
                return Err(NnError::IndexOutOfRange { index: t, len: c });
            }
            let row = &src[i * c..(i + 1) * c];
            let max = row.iter().fold(f32::NEG_INFINITY, |m, &x| m.max(x)) as f64;
            let sum: f64 = row.iter().map(|&x| (x as f64 - max).exp()).sum();
            let log_z = max + sum.ln();
            for j in 0..c {
                probs[i * c + j] = ((row[j] as f64 - max).exp() / sum) as f32;
            }
            let w = weights.map_or(1.0, |w| w[i]) as f64;
            total += w * (log_z - row[t] as f64);
        }
        let denom = r as f32;
        let loss = total / r as f64;
        let weights = weights.map_or_else(|| vec![1.0; r], <[f32]>::to_vec);
        let rg = self.rg(logits);
        let v = self.push(
            vec![loss as f32],
            1,
            1,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights,
                probs,
                denom,
            },
            rg,
        );
        self.nodes[v.0].value64 = Some(loss);
        Ok(v)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).iter().map(|&x| x as f64).sum();
        let rg = self.rg(a);
        let v = self.push(vec![s as f32], 1, 1, Op::Sum(a), rg);
        self.nodes[v.0].value64 = Some(s);
        v
    }

    /// Reverse pass from a scalar. Returns gradients of every leaf that
    /// requires one.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NnError> {
        let ln = self.node(loss);
        if ln.rows * ln.cols != 1 {
            return Err(NnError::NotScalar(ln.rows, ln.cols));
        }
        let mut grads: Vec<Option<Vec<f32>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        if ln.requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf | Op::Param(_)) {
                continue;
            }
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &gout, &mut grads);
        }

        let mut leaves = HashMap::new();
        let mut params = Vec::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            match node.op {
                Op::Leaf => {
                    if let Some(g) = grads[idx].take() {
                        leaves.insert(idx, g);
                    }
                }
                Op::Param(pid) => {
                    if let Some(g) = grads[idx].take() {
                        params.push((pid, g));
                    }
                }
                _ => {}
            }
        }
        Ok(Gradients { leaves, params })
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f32>>], v: Var) -> Option<&'g mut Vec<f32>> {
        let n = &self.nodes[v.0];
        if !n.requires_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; n.rows * n.cols]))
    }

    fn propagate(&self, node: &Node<'p>, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
        let (rows, cols) = (node.rows, node.cols);
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (n, k) = self.shape(*a);
                let m = cols;
                if let Some(ga) = self.slot(grads, *a) {
                    kernels::matmul_bt_acc(g, self.value(*b), n, m, k, ga);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    kernels::matmul_at_acc(self.value(*a), g, n, k, m, gb);
                }
            }
            Op::MatMulT(a, b) => {
                let (n, k) = self.shape(*a);
                let m = cols;
                if let Some(ga) = self.slot(grads, *a) {
                    kernels::matmul_acc(g, self.value(*b), n, m, k, ga);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    kernels::matmul_at_acc(g, self.value(*a), n, m, k, gb);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(gv) = self.slot(grads, v) {
                        for (x, y) in gv.iter_mut().zip(g) {
                            *x += y;
                        }
                    }
                }
            }
            Op::AddRow(a, row) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for (x, y) in ga.iter_mut().zip(g) {
                        *x += y;
                    }
                }
                if let Some(gr) = self.slot(grads, *row) {
                    for chunk in g.chunks_exact(cols) {
                        for (x, y) in gr.iter_mut().zip(chunk) {
                            *x += y;
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if let Some(ga) = self.slot(grads, *a) {
                    for i in 0..g.len() {
                        ga[i] += g[i] * vb[i];
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for i in 0..g.len() {
                        gb[i] += g[i] * va[i];
                    }
                }
            }
            Op::Scale(a, s) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for (x, y) in ga.iter_mut().zip(g) {
                        *x += s * y;
                    }
                }
            }
            Op::Gather(table, ids) => {
                if let Some(gt) = self.slot(grads, *table) {
                    for (i, &id) in ids.iter().enumerate() {
                        let src = &g[i * cols..(i + 1) * cols];
                        for (x, y) in gt[id * cols..(id + 1) * cols].iter_mut().zip(src) {
                            *x += y;
                        }
                    }
                }
            }
            Op::SliceCols(a, start) => {
                let ac = self.shape(*a).1;
                if let Some(ga) = self.slot(grads, *a) {
                    for i in 0..rows {
                        for j in 0..cols {
                            ga[i * ac + start + j] += g[i * cols + j];
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let pc = self.shape(p).1;
                    if let Some(gp) = self.slot(grads, p) {
                        for i in 0..rows {
                            for j in 0..pc {
                                gp[i * pc + j] += g[i * cols + off + j];
                            }
                        }
                    }
                    off += pc;
                }
            }
            Op::Softmax(a) => {
                let y = &node.value;
                if let Some(ga) = self.slot(grads, *a) {
                    for i in 0..rows {
                        let yr = &y[i * cols..(i + 1) * cols];
                        let gr = &g[i * cols..(i + 1) * cols];
                        let dotp: f32 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for j in 0..cols {
                            ga[i * cols + j] += yr[j] * (gr[j] - dotp);
                        }
                    }
                }
            }
            Op::LayerNorm { x, gamma, beta, stats } => {
                let xv = self.value(*x);
                let gam = self.value(*gamma);
                let c = cols;
                let mut xhat = vec![0.0f32; rows * c];
                for i in 0..rows {
                    let (mean, rstd) = stats[i];
                    for j in 0..c {
                        xhat[i * c + j] = (xv[i * c + j] - mean) * rstd;
                    }
                }
                if let Some(gg) = self.slot(grads, *gamma) {
                    for i in 0..rows {
                        for j in 0..c {
                            gg[j] += g[i * c + j] * xhat[i * c + j];
                        }
                    }
                }
                if let Some(gb) = self.slot(grads, *beta) {
                    for i in 0..rows {
                        for j in 0..c {
                            gb[j] += g[i * c + j];
                        }
                    }
                }
                if let Some(gx) = self.slot(grads, *x) {
                    for i in 0..rows {
                        let rstd = stats[i].1;
                        let mut mean_d = 0.0f32;
                        let mut mean_dx = 0.0f32;
                        for j in 0..c {
                            let d = g[i * c + j] * gam[j];
                            mean_d += d;
                            mean_dx += d * xhat[i * c + j];
                        }
                        mean_d /= c as f32;
                        mean_dx /= c as f32;
                        for j in 0..c {
                            let d = g[i * c + j] * gam[j];
                            gx[i * c + j] += rstd * (d - mean_d - xhat[i * c + j] * mean_dx);
                        }
                    }
                }
            }
            Op::Gelu(a) => {
                let xv = self.value(*a);
                if let Some(ga) = self.slot(grads, *a) {
                    for i in 0..g.len() {
                        let x = xv[i];
                        let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
                        let d = 0.5 * (1.0 + t)
                            + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x);
                        ga[i] += g[i] * d;
                    }
                }
            }
            Op::Dropout(a, mask) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for i in 0..g.len() {
                        ga[i] += g[i] * mask[i];
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                weights,
                probs,
                denom,
            } => {
                let c = self.shape(*logits).1;
                if let Some(gl) = self.slot(grads, *logits) {
                    for (i, &t) in targets.iter().enumerate() {
                        let s = g[0] * weights[i] / denom;
                        for j in 0..c {
                            let onehot = if j == t { 1.0 } else { 0.0 };
                            gl[i * c + j] += s * (probs[i * c + j] - onehot);
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for x in ga.iter_mut() {
                        *x += g[0];
                    }
                }
            }
        }
    }
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug, Default)]
pub struct Gradients {
    leaves: HashMap<usize, Vec<f32>>,
    params: Vec<(usize, Vec<f32>)>,
}

impl Gradients {
    /// Gradient of an input created with [`Graph::input`].
    pub fn wrt(&self, v: Var) -> Option<&[f32]> {
        self.leaves.get(&v.0).map(Vec::as_slice)
    }

    /// `(parameter id, gradient)` for every parameter reached by the pass.
    pub fn param_grads(&self) -> impl Iterator<Item = (usize, &[f32])> {
        self.params.iter().map(|(id, g)| (*id, g.as_slice()))
    }

    pub fn param(&self, id: usize) -> Option<&[f32]> {
        self.params.iter().find(|(p, _)| *p == id).map(|(_, g)| g.as_slice())
    }
}
