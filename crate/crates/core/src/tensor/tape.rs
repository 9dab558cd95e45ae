use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`]. Cheap to copy; only meaningful for the
/// tape that created it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Value(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Value, Value),
    Sub(Value, Value),
    Mul(Value, Value),
    Div(Value, Value),
    Sigmoid(Value),
    Tanh(Value),
    Relu(Value),
    Exp(Value),
    Log(Value),
    Sqrt(Value),
    Scale(Value, f64),
    Shift(Value),
    Clamp(Value, f64, f64),
    Matmul(Value, Value),
    Concat(Vec<Value>),
    StackRows(Vec<Value>),
    MeanRows(Value, usize),
    SumAll(Value),
    Row(Value, usize),
    SliceRows(Value, usize, usize),
    Softmax(Value),
    Standardize(Value, f64),
    Gather(Value, Vec<u32>),
    Reshape(Value),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::Relu(..) => "relu",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Sqrt(..) => "sqrt",
            Op::Scale(..) => "scale",
            Op::Shift(..) => "shift",
            Op::Clamp(..) => "clamp",
            Op::Matmul(..) => "matmul",
            Op::Concat(..) => "concat",
            Op::StackRows(..) => "stack_rows",
            Op::MeanRows(..) => "mean_over_time",
            Op::SumAll(..) => "sum",
            Op::Row(..) => "row",
            Op::SliceRows(..) => "slice_rows",
            Op::Softmax(..) => "softmax",
            Op::Standardize(..) => "standardize",
            Op::Gather(..) => "gather_rows",
            Op::Reshape(..) => "reshape",
        }
    }
}

struct Node {
    op: Op,
    data: Tensor,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Recorded computation graph. Operations are appended in execution order,
/// so every node's inputs precede it and a single reverse sweep visits each
/// node exactly once.
///
/// A tape is rebuilt per batch (sequence lengths vary) and is confined to
/// one thread; independent tapes may run in parallel.
pub struct Tape {
    nodes: Vec<Node>,
    check_finite: bool,
    backward_run: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

enum BinaryKind {
    Elementwise,
    /// rhs is a length-d vector applied to every row of a [t, d] lhs.
    RowBroadcast,
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            check_finite: false,
            backward_run: false,
        }
    }

    /// Enable per-op NaN/Inf scanning. Off by default: the scan is O(n)
    /// per op.
    pub fn with_finite_checks(mut self, on: bool) -> Self {
        self.check_finite = on;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Differentiable leaf; its gradient is populated by [`Tape::backward`].
    pub fn leaf(&mut self, t: Tensor) -> Value {
        self.push_unchecked(Op::Leaf, t, true)
    }

    /// Non-differentiable leaf. Never receives a gradient allocation.
    pub fn constant(&mut self, t: Tensor) -> Value {
        self.push_unchecked(Op::Leaf, t, false)
    }

    pub fn scalar_const(&mut self, v: f64) -> Value {
        self.constant(Tensor::scalar(v))
    }

    pub fn data(&self, v: Value) -> &Tensor {
        &self.nodes[v.0].data
    }

    pub fn shape(&self, v: Value) -> &[usize] {
        self.nodes[v.0].data.shape()
    }

    /// Gradient of a node after [`Tape::backward`]; `None` for nodes that
    /// do not require gradients or were not reached.
    pub fn grad(&self, v: Value) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Value) -> f64 {
        debug_assert_eq!(self.nodes[v.0].data.numel(), 1);
        self.nodes[v.0].data.data()[0]
    }

    fn push_unchecked(&mut self, op: Op, data: Tensor, requires_grad: bool) -> Value {
        self.nodes.push(Node {
            op,
            data,
            requires_grad,
            grad: None,
        });
        Value(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op, data: Tensor, requires_grad: bool) -> Result<Value> {
        if self.check_finite && !data.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite output of {} op",
                op.name()
            )));
        }
        Ok(self.push_unchecked(op, data, requires_grad))
    }

    fn requires(&self, v: Value) -> bool {
        self.nodes[v.0].requires_grad
    }

    // ── elementwise binary ops ──────────────────────────────────────────

    fn binary_kind(&self, a: Value, b: Value, op: &str) -> Result<BinaryKind> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa == sb {
            Ok(BinaryKind::Elementwise)
        } else if sa.len() == 2 && sb.len() == 1 && sa[1] == sb[0] {
            Ok(BinaryKind::RowBroadcast)
        } else {
            Err(Error::Shape(format!(
                "{op}: incompatible shapes {sa:?} and {sb:?}"
            )))
        }
    }

    fn binary(
        &mut self,
        a: Value,
        b: Value,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Value> {
        let kind = self.binary_kind(a, b, op.name())?;
        let (da, db) = (&self.nodes[a.0].data, &self.nodes[b.0].data);
        let mut out = da.clone();
        match kind {
            BinaryKind::Elementwise => {
                for (o, &bv) in out.data_mut().iter_mut().zip(db.data()) {
                    *o = f(*o, bv);
                }
            }
            BinaryKind::RowBroadcast => {
                let d = db.numel();
                for (i, o) in out.data_mut().iter_mut().enumerate() {
                    *o = f(*o, db.data()[i % d]);
                }
            }
        }
        let req = self.requires(a) || self.requires(b);
        self.push(op, out, req)
    }

    pub fn add(&mut self, a: Value, b: Value) -> Result<Value> {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Value, b: Value) -> Result<Value> {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Value, b: Value) -> Result<Value> {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Value, b: Value) -> Result<Value> {
        self.binary(a, b, Op::Div(a, b), |x, y| x / y)
    }

    // ── elementwise unary ops ───────────────────────────────────────────

    fn unary(&mut self, x: Value, op: Op, f: impl Fn(f64) -> f64) -> Result<Value> {
        let mut out = self.nodes[x.0].data.clone();
        for o in out.data_mut() {
            *o = f(*o);
        }
        let req = self.requires(x);
        self.push(op, out, req)
    }

    pub fn sigmoid(&mut self, x: Value) -> Result<Value> {
        self.unary(x, Op::Sigmoid(x), |v| 1.0 / (1.0 + (-v).exp()))
    }

    pub fn tanh(&mut self, x: Value) -> Result<Value> {
        self.unary(x, Op::Tanh(x), f64::tanh)
    }

    pub fn relu(&mut self, x: Value) -> Result<Value> {
        self.unary(x, Op::Relu(x), |v| v.max(0.0))
    }

    pub fn exp(&mut self, x: Value) -> Result<Value> {
        // e^710 overflows f64
        if let Some(&bad) = self.nodes[x.0].data.data().iter().find(|v| **v > 709.78) {
            return Err(Error::Numeric(format!("exp overflow: input {bad}")));
        }
        self.unary(x, Op::Exp(x), f64::exp)
    }

    pub fn log(&mut self, x: Value) -> Result<Value> {
        if let Some(&bad) = self.nodes[x.0].data.data().iter().find(|v| **v <= 0.0) {
            return Err(Error::Numeric(format!("log domain: input {bad}")));
        }
        self.unary(x, Op::Log(x), f64::ln)
    }

    pub fn sqrt(&mut self, x: Value) -> Result<Value> {
        if let Some(&bad) = self.nodes[x.0].data.data().iter().find(|v| **v < 0.0) {
            return Err(Error::Numeric(format!("sqrt domain: input {bad}")));
        }
        self.unary(x, Op::Sqrt(x), f64::sqrt)
    }

    pub fn scale(&mut self, x: Value, c: f64) -> Result<Value> {
        self.unary(x, Op::Scale(x, c), |v| v * c)
    }

    pub fn shift(&mut self, x: Value, c: f64) -> Result<Value> {
        self.unary(x, Op::Shift(x), |v| v + c)
    }

    /// Clamp to `[lo, hi]`; gradient passes through strictly inside the
    /// interval and is zero at the rails.
    pub fn clamp(&mut self, x: Value, lo: f64, hi: f64) -> Result<Value> {
        self.unary(x, Op::Clamp(x, lo, hi), |v| v.clamp(lo, hi))
    }

    // ── structural ops ──────────────────────────────────────────────────

    /// `[m,k] · [k,n] -> [m,n]`; a rank-1 left operand `[k]` yields `[n]`.
    pub fn matmul(&mut self, a: Value, b: Value) -> Result<Value> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sb.len() != 2 || sa.is_empty() || sa.len() > 2 {
            return Err(Error::Shape(format!(
                "matmul: need [m,k]or[k] x [k,n], got {sa:?} x {sb:?}"
            )));
        }
        let (m, k) = if sa.len() == 1 {
            (1, sa[0])
        } else {
            (sa[0], sa[1])
        };
        let n = sb[1];
        if k != sb[0] {
            return Err(Error::Shape(format!(
                "matmul: inner dims disagree, {sa:?} x {sb:?}"
            )));
        }
        let mut out = vec![0.0; m * n];
        matmul_nn(
            self.nodes[a.0].data.data(),
            self.nodes[b.0].data.data(),
            m,
            k,
            n,
            &mut out,
        );
        let shape = if sa.len() == 1 { vec![n] } else { vec![m, n] };
        let req = self.requires(a) || self.requires(b);
        self.push(Op::Matmul(a, b), Tensor::new(out, shape)?, req)
    }

    /// Concatenate along the last dimension; parts must agree on all
    /// leading dimensions.
    pub fn concat(&mut self, parts: &[Value]) -> Result<Value> {
        if parts.is_empty() {
            return Err(Error::EmptyInput("concat of zero parts".into()));
        }
        let rank = self.shape(parts[0]).len();
        if rank > 2 {
            return Err(Error::Shape("concat supports rank 1 and 2".into()));
        }
        let lead = if rank == 2 { self.shape(parts[0])[0] } else { 1 };
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let plead = if s.len() == 2 { s[0] } else { 1 };
            if s.len() != rank || plead != lead {
                return Err(Error::Shape(format!(
                    "concat: part shape {:?} incompatible with {:?}",
                    s,
                    self.shape(parts[0])
                )));
            }
            total += s[s.len() - 1];
        }
        let mut data = vec![0.0; lead * total];
        let mut col = 0;
        for &p in parts {
            let s = self.shape(p);
            let w = s[s.len() - 1];
            let src = self.nodes[p.0].data.data();
            for r in 0..lead {
                data[r * total + col..r * total + col + w]
                    .copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            col += w;
        }
        let shape = if rank == 2 {
            vec![lead, total]
        } else {
            vec![total]
        };
        let req = parts.iter().any(|&p| self.requires(p));
        self.push(Op::Concat(parts.to_vec()), Tensor::new(data, shape)?, req)
    }

    /// Stack rank-1 vectors of equal length into a `[n, d]` matrix.
    pub fn stack_rows(&mut self, parts: &[Value]) -> Result<Value> {
        if parts.is_empty() {
            return Err(Error::EmptyInput("stack_rows of zero parts".into()));
        }
        let d = self.shape(parts[0])[0];
        let mut data = Vec::with_capacity(parts.len() * d);
        for &p in parts {
            let s = self.shape(p);
            if s.len() != 1 || s[0] != d {
                return Err(Error::Shape(format!(
                    "stack_rows: expected [{d}], got {s:?}"
                )));
            }
            data.extend_from_slice(self.nodes[p.0].data.data());
        }
        let req = parts.iter().any(|&p| self.requires(p));
        self.push(
            Op::StackRows(parts.to_vec()),
            Tensor::new(data, vec![parts.len(), d])?,
            req,
        )
    }

    /// Mean of the first `count` rows of a `[t, d]` matrix; rows beyond
    /// `count` are padding and receive zero gradient.
    pub fn mean_over_time(&mut self, x: Value, count: usize) -> Result<Value> {
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(Error::Shape(format!("mean_over_time: need rank 2, got {s:?}")));
        }
        if count == 0 {
            return Err(Error::EmptyInput("mean_over_time over zero rows".into()));
        }
        if count > s[0] {
            return Err(Error::Shape(format!(
                "mean_over_time: count {count} exceeds {} rows",
                s[0]
            )));
        }
        let d = s[1];
        let src = self.nodes[x.0].data.data();
        let mut out = vec![0.0; d];
        for r in 0..count {
            for j in 0..d {
                out[j] += src[r * d + j];
            }
        }
        for o in &mut out {
            *o /= count as f64;
        }
        let req = self.requires(x);
        self.push(Op::MeanRows(x, count), Tensor::from_vec(out), req)
    }

    /// Sum of all elements, as a `[1]` scalar.
    pub fn sum(&mut self, x: Value) -> Result<Value> {
        let total: f64 = self.nodes[x.0].data.data().iter().sum();
        let req = self.requires(x);
        self.push(Op::SumAll(x), Tensor::scalar(total), req)
    }

    /// Row `i` of a `[t, d]` matrix as a `[d]` vector.
    pub fn row(&mut self, x: Value, i: usize) -> Result<Value> {
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(Error::Shape(format!("row: need rank 2, got {s:?}")));
        }
        if i >= s[0] {
            return Err(Error::Shape(format!("row {i} out of {} rows", s[0])));
        }
        let out = self.nodes[x.0].data.row(i).to_vec();
        let req = self.requires(x);
        self.push(Op::Row(x, i), Tensor::from_vec(out), req)
    }

    /// Contiguous slice along the first axis.
    pub fn slice_rows(&mut self, x: Value, start: usize, len: usize) -> Result<Value> {
        let s = self.shape(x).to_vec();
        if len == 0 {
            return Err(Error::EmptyInput("slice_rows of zero length".into()));
        }
        if start + len > s[0] {
            return Err(Error::Shape(format!(
                "slice_rows {start}..{} out of first dim {}",
                start + len,
                s[0]
            )));
        }
        let w: usize = s[1..].iter().product::<usize>().max(1);
        let src = self.nodes[x.0].data.data();
        let out = src[start * w..(start + len) * w].to_vec();
        let mut shape = s.clone();
        shape[0] = len;
        let req = self.requires(x);
        self.push(Op::SliceRows(x, start, len), Tensor::new(out, shape)?, req)
    }

    /// Numerically stable softmax over a rank-1 vector.
    pub fn softmax(&mut self, x: Value) -> Result<Value> {
        let s = self.shape(x);
        if s.len() != 1 {
            return Err(Error::Shape(format!("softmax: need rank 1, got {s:?}")));
        }
        let src = self.nodes[x.0].data.data();
        let max = src.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut out: Vec<f64> = src.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = out.iter().sum();
        for o in &mut out {
            *o /= z;
        }
        let req = self.requires(x);
        self.push(Op::Softmax(x), Tensor::from_vec(out), req)
    }

    /// `(z - mean) / max(std, eps)` over a rank-1 vector; the core of layer
    /// normalization before gain and shift. Population std; the eps floor
    /// makes constant vectors map to zero instead of dividing by zero.
    pub fn standardize(&mut self, x: Value, eps: f64) -> Result<Value> {
        let s = self.shape(x);
        if s.len() != 1 || s[0] < 2 {
            return Err(Error::Shape(format!(
                "standardize: need rank-1 vector of length >= 2, got {s:?}"
            )));
        }
        let src = self.nodes[x.0].data.data();
        let n = src.len() as f64;
        let mean = src.iter().sum::<f64>() / n;
        let var = src.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let denom = var.sqrt().max(eps);
        let out: Vec<f64> = src.iter().map(|v| (v - mean) / denom).collect();
        let req = self.requires(x);
        self.push(Op::Standardize(x, eps), Tensor::from_vec(out), req)
    }

    /// Gather rows of a `[v, d]` table into a `[ids.len(), d]` matrix; the
    /// backward rule scatter-adds into the gathered rows.
    pub fn gather_rows(&mut self, table: Value, ids: &[u32]) -> Result<Value> {
        let s = self.shape(table);
        if s.len() != 2 {
            return Err(Error::Shape(format!("gather_rows: need rank 2, got {s:?}")));
        }
        if ids.is_empty() {
            return Err(Error::EmptyInput("gather_rows with no ids".into()));
        }
        let (v, d) = (s[0], s[1]);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id as usize >= v {
                return Err(Error::Vocab(id, v));
            }
            data.extend_from_slice(self.nodes[table.0].data.row(id as usize));
        }
        let req = self.requires(table);
        self.push(
            Op::Gather(table, ids.to_vec()),
            Tensor::new(data, vec![ids.len(), d])?,
            req,
        )
    }

    pub fn reshape(&mut self, x: Value, shape: &[usize]) -> Result<Value> {
        let t = &self.nodes[x.0].data;
        if shape.iter().product::<usize>() != t.numel() {
            return Err(Error::Shape(format!(
                "reshape {:?} -> {shape:?} changes element count",
                t.shape()
            )));
        }
        let out = Tensor::new(t.data().to_vec(), shape.to_vec())?;
        let req = self.requires(x);
        self.push(Op::Reshape(x), out, req)
    }

    // ── backward ────────────────────────────────────────────────────────

    /// Reverse sweep from a scalar root. Populates the `grad` of every
    /// node with `requires_grad` that the root depends on. A tape can run
    /// backward once; rebuild the tape for another pass.
    pub fn backward(&mut self, root: Value) -> Result<()> {
        if self.backward_run {
            return Err(Error::Tape(
                "backward already run on this tape; build a new tape".into(),
            ));
        }
        if self.nodes[root.0].data.numel() != 1 {
            return Err(Error::Shape(format!(
                "backward root must be scalar, got shape {:?}",
                self.shape(root)
            )));
        }
        self.backward_run = true;
        if !self.nodes[root.0].requires_grad {
            return Ok(());
        }

        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(1.0));

        for i in (0..=root.0).rev() {
            let (lower, upper) = grads.split_at_mut(i);
            let Some(g) = upper[0].as_ref() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, g, lower)?;
        }

        for (node, g) in self.nodes.iter_mut().zip(grads) {
            if node.requires_grad {
                node.grad = g;
            }
        }
        Ok(())
    }

    /// Apply node `i`'s backward rule, accumulating into `grads[j]` for
    /// every input `j < i` that requires a gradient.
    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[i];
        let acc = |grads: &mut [Option<Tensor>],
                   tape: &Tape,
                   v: Value,
                   f: &mut dyn FnMut(&mut Tensor)| {
            if tape.requires(v) {
                let slot =
                    grads[v.0].get_or_insert_with(|| Tensor::zeros(tape.shape(v)));
                f(slot);
            }
        };

        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(grads, self, *a, &mut |t| add_into(t.data_mut(), g.data()));
                acc(grads, self, *b, &mut |t| {
                    add_reduced(t.data_mut(), g.data(), 1.0)
                });
            }
            Op::Sub(a, b) => {
                acc(grads, self, *a, &mut |t| add_into(t.data_mut(), g.data()));
                acc(grads, self, *b, &mut |t| {
                    add_reduced(t.data_mut(), g.data(), -1.0)
                });
            }
            Op::Mul(a, b) => {
                let (da, db) = (self.data(*a), self.data(*b));
                acc(grads, self, *a, &mut |t| {
                    let d = db.numel();
                    for (k, slot) in t.data_mut().iter_mut().enumerate() {
                        *slot += g.data()[k] * db.data()[k % d];
                    }
                });
                acc(grads, self, *b, &mut |t| {
                    let wide: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(da.data())
                        .map(|(gv, av)| gv * av)
                        .collect();
                    add_reduced(t.data_mut(), &wide, 1.0);
                });
            }
            Op::Div(a, b) => {
                let (da, db) = (self.data(*a), self.data(*b));
                let d = db.numel();
                acc(grads, self, *a, &mut |t| {
                    for (k, slot) in t.data_mut().iter_mut().enumerate() {
                        *slot += g.data()[k] / db.data()[k % d];
                    }
                });
                acc(grads, self, *b, &mut |t| {
                    let wide: Vec<f64> = g
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(k, gv)| {
                            let bv = db.data()[k % d];
                            -gv * da.data()[k] / (bv * bv)
                        })
                        .collect();
                    add_reduced(t.data_mut(), &wide, 1.0);
                });
            }
            Op::Sigmoid(x) => {
                let y = node.data.data();
                acc(grads, self, *x, &mut |t| {
                    for (k, slot) in t.data_mut().iter_mut().enumerate() {
                        *slot += g.data()[k] * y[k] * (1.0 - y[k]);
                    }
                });
            }
            Op::Tanh(x) => {
                let y = node.data.data();
                acc(grads, self, *x, &mut |t| {
                    for (k, slot) in t.data_mut().iter_mut().enumerate() {
                        *slot += g.data()[k] * (1.0 - y[k] * y[k]);
                    }
                });
            }
            Op::Relu(x) => {
                let src = self.data(*x).data();
                acc(grads, self, *x, &mut |t| {
                    for (k, slot) in t.data_mut().iter_mut().enumerate() {
                        if src[k] > 0.0 {
                            *slot += g.data()[k];
                        }
                    }
                });
            }
            Op::Exp(x) => {
                let y = node.data.data();
                acc(grads, self, *x, &mut |t| {
                    for (k, slot) in t.data_mut().iter_mut().enumerate() {
                        *slot += g.data()[k] * y[k];
                    }
                });
            }
            Op::Log(x) => {
                let src = self.data(*x).data();
                acc(grads, self, *x, &mut |t| {
                    for (k, slot) in t.data_mut().iter_mut().enumerate() {
                        *slot += g.data()[k] / src[k];
                    }
                });
            }
            Op::Sqrt(x) => {
                let y = node.data.data();
                acc(grads, self, *x, &mut |t| {
                    for (k, slot) in t.data_mut().iter_mut().enumerate() {
                        *slot += g.data()[k] / (2.0 * y[k]);
                    }
                });
            }
            Op::Scale(x, c) => {
                let c = *c;
                acc(grads, self, *x, &mut |t| {
                    for (k, slot) in t.data_mut().iter_mut().enumerate() {
                        *slot += g.data()[k] * c;
                    }
                });
            }
            Op::Shift(x) => {
                acc(grads, self, *x, &mut |t| add_into(t.data_mut(), g.data()));
            }
            Op::Clamp(x, lo, hi) => {
                let src = self.data(*x).data();
                let (lo, hi) = (*lo, *hi);
                acc(grads, self, *x, &mut |t| {
                    for (k, slot) in t.data_mut().iter_mut().enumerate() {
                        if src[k] > lo && src[k] < hi {
                            *slot += g.data()[k];
                        }
                    }
                });
            }
            Op::Matmul(a, b) => {
                let sa = self.shape(*a);
                let (m, k) = if sa.len() == 1 {
                    (1, sa[0])
                } else {
                    (sa[0], sa[1])
                };
                let n = self.shape(*b)[1];
                let (da, db) = (self.data(*a), self.data(*b));
                // a.grad += g · bᵀ
                acc(grads, self, *a, &mut |t| {
                    matmul_nt(g.data(), db.data(), m, n, k, t.data_mut());
                });
                // b.grad += aᵀ · g
                acc(grads, self, *b, &mut |t| {
                    matmul_tn(da.data(), g.data(), m, k, n, t.data_mut());
                });
            }
            Op::Concat(parts) => {
                let rank = node.data.rank();
                let lead = if rank == 2 { node.data.shape()[0] } else { 1 };
                let total = node.data.last_dim();
                let mut col = 0;
                for &p in parts {
                    let w = self.shape(p).last().copied().unwrap();
                    acc(grads, self, p, &mut |t| {
                        for r in 0..lead {
                            for j in 0..w {
                                t.data_mut()[r * w + j] += g.data()[r * total + col + j];
                            }
                        }
                    });
                    col += w;
                }
            }
            Op::StackRows(parts) => {
                let d = node.data.last_dim();
                for (r, &p) in parts.iter().enumerate() {
                    acc(grads, self, p, &mut |t| {
                        add_into(t.data_mut(), &g.data()[r * d..(r + 1) * d]);
                    });
                }
            }
            Op::MeanRows(x, count) => {
                let d = node.data.numel();
                let scale = 1.0 / *count as f64;
                let count = *count;
                acc(grads, self, *x, &mut |t| {
                    for r in 0..count {
                        for j in 0..d {
                            t.data_mut()[r * d + j] += g.data()[j] * scale;
                        }
                    }
                });
            }
            Op::SumAll(x) => {
                let gv = g.data()[0];
                acc(grads, self, *x, &mut |t| {
                    for slot in t.data_mut() {
                        *slot += gv;
                    }
                });
            }
            Op::Row(x, i) => {
                let d = node.data.numel();
                let i = *i;
                acc(grads, self, *x, &mut |t| {
                    for j in 0..d {
                        t.data_mut()[i * d + j] += g.data()[j];
                    }
                });
            }
            Op::SliceRows(x, start, len) => {
                let w: usize = self.shape(*x)[1..].iter().product::<usize>().max(1);
                let (start, len) = (*start, *len);
                acc(grads, self, *x, &mut |t| {
                    for k in 0..len * w {
                        t.data_mut()[start * w + k] += g.data()[k];
                    }
                });
            }
            Op::Softmax(x) => {
                let y = node.data.data();
                let dot: f64 = g.data().iter().zip(y).map(|(gv, yv)| gv * yv).sum();
                acc(grads, self, *x, &mut |t| {
                    for (k, slot) in t.data_mut().iter_mut().enumerate() {
                        *slot += y[k] * (g.data()[k] - dot);
                    }
                });
            }
            Op::Standardize(x, eps) => {
                let src = self.data(*x).data();
                let y = node.data.data();
                let n = src.len() as f64;
                let mean = src.iter().sum::<f64>() / n;
                let var = src.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                let sigma = var.sqrt();
                let denom = sigma.max(*eps);
                let g_mean: f64 = g.data().iter().sum::<f64>() / n;
                acc(grads, self, *x, &mut |t| {
                    if sigma > *eps {
                        let gy_mean: f64 =
                            g.data().iter().zip(y).map(|(gv, yv)| gv * yv).sum::<f64>() / n;
                        for (k, slot) in t.data_mut().iter_mut().enumerate() {
                            *slot += (g.data()[k] - g_mean - y[k] * gy_mean) / denom;
                        }
                    } else {
                        // std pinned to the floor: only the centering varies
                        for (k, slot) in t.data_mut().iter_mut().enumerate() {
                            *slot += (g.data()[k] - g_mean) / denom;
                        }
                    }
                });
            }
            Op::Gather(table, ids) => {
                let d = node.data.last_dim();
                acc(grads, self, *table, &mut |t| {
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            t.data_mut()[id as usize * d + j] += g.data()[r * d + j];
                        }
                    }
                });
            }
            Op::Reshape(x) => {
                acc(grads, self, *x, &mut |t| add_into(t.data_mut(), g.data()));
            }
        }
        Ok(())
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Accumulate `sign * src` into `dst`, column-reducing when `src` is the
/// row-broadcast widening of `dst`.
fn add_reduced(dst: &mut [f64], src: &[f64], sign: f64) {
    let d = dst.len();
    for (k, s) in src.iter().enumerate() {
        dst[k % d] += sign * s;
    }
}

/// out += a[m,k] · b[k,n]
fn matmul_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av != 0.0 {
                let brow = &b[p * n..(p + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
}

/// out += a[m,n] · b[k,n]ᵀ, i.e. out[m,k]
fn matmul_nt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        let orow = &mut out[i * k..(i + 1) * k];
        for (p, o) in orow.iter_mut().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            let mut s = 0.0;
            for (av, bv) in arow.iter().zip(brow) {
                s += av * bv;
            }
            *o += s;
        }
    }
}

/// out += a[m,k]ᵀ · b[m,n], i.e. out[k,n]
fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av != 0.0 {
                let orow = &mut out[p * n..(p + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
}
