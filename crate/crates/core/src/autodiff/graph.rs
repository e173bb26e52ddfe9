use crate::error::{Error, Result};

use super::Tensor;

/// Index of a node inside a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Confusion strength of a gradient-reversal node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradReverseConfig {
    lambda: f64,
}

impl GradReverseConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Config(format!("gradient reversal lambda must be >= 0, got {lambda}")));
        }
        Ok(GradReverseConfig { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// Floor applied to the argument of `log`.
pub const LOG_FLOOR: f64 = 1e-12;
const NORM_FLOOR: f64 = 1e-12;

// Some operands are only needed for Debug output, not for backward.
#[allow(dead_code)]
#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId, f64),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Concat(Vec<NodeId>),
    Stack(Vec<NodeId>),
    Max { input: NodeId, axis: usize, argmax: Vec<usize> },
    SumAxis { input: NodeId, axis: usize },
    Sum(NodeId),
    Embedding { table: NodeId, ids: Vec<usize> },
    EmbeddingBag { table: NodeId, bags: Vec<Vec<(usize, f64)>> },
    Unfold { input: NodeId, width: usize },
    Cosine(NodeId, NodeId),
    Softmax(NodeId),
    Log(NodeId),
    Pick { input: NodeId, index: usize },
    Row { input: NodeId, index: usize },
    GradReverse { input: NodeId, lambda: f64 },
    Detach(NodeId),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Append-only tape of operations.
///
/// Node inputs always refer to earlier nodes, so insertion order is a
/// topological order and `backward` simply walks the tape in reverse.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `node`, if the node lies on a
    /// differentiable path to the loss.
    pub fn get(&self, node: NodeId) -> Option<&Tensor> {
        self.grads.get(node.0).and_then(|g| g.as_ref())
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.get(node).is_some()
    }
}

// Row-major (rows, cols) view of a rank-1 or rank-2 shape.
fn as_matrix(shape: &[usize]) -> (usize, usize) {
    match shape {
        [n] => (1, *n),
        [r, c] => (*r, *c),
        _ => (0, 0),
    }
}

fn shape_err(op: &'static str, shapes: &[&[usize]]) -> Error {
    Error::Shape { op, shapes: shapes.iter().map(|s| s.to_vec()).collect() }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// Scalar value of a single-element node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id).item()
    }

    fn check(&self, id: NodeId, op: &'static str) -> Result<()> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::Input(format!("{op}: node {} is not in this graph", id.0)))
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Adds a leaf (parameter or constant) holding a copy of `t`.
    pub fn leaf(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Leaf, t)
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.leaf(t)
    }

    /// `a @ b` where `a` is `[m, k]` or `[k]` and `b` is `[k, n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a, "matmul")?;
        self.check(b, "matmul")?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() > 2 || sb.len() != 2 || sa[sa.len() - 1] != sb[0] {
            return Err(shape_err("matmul", &[sa, sb]));
        }
        let (m, k) = as_matrix(sa);
        let n = sb[1];
        let out_shape = if sa.len() == 1 { vec![n] } else { vec![m, n] };
        let mut out = vec![0.0; m * n];
        matmul_into(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        Ok(self.push(Op::MatMul(a, b), Tensor::from_parts(out_shape, out)))
    }

    fn binary_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        self.check(a, op)?;
        self.check(b, op)?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        let row_broadcast = sa.len() == 2 && sb.len() == 1 && sa[1] == sb[0];
        if sa == sb || row_broadcast {
            Ok(())
        } else {
            Err(shape_err(op, &[sa, sb]))
        }
    }

    fn zip_broadcast(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (va, vb) = (self.value(a), self.value(b));
        let nb = vb.len();
        let data = va.data().iter().enumerate().map(|(i, &x)| f(x, vb.data()[i % nb])).collect();
        Tensor::from_parts(va.shape().to_vec(), data)
    }

    /// Elementwise sum; `b` may be a row vector broadcast over the rows of `a`.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_shape("add", a, b)?;
        let v = self.zip_broadcast(a, b, |x, y| x + y);
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_shape("sub", a, b)?;
        let v = self.zip_broadcast(a, b, |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), v))
    }

    /// Hadamard product; `b` may be a row vector broadcast over the rows of `a`.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_shape("mul", a, b)?;
        let v = self.zip_broadcast(a, b, |x, y| x * y);
        Ok(self.push(Op::Mul(a, b), v))
    }

    fn unary(&mut self, x: NodeId, op: Op, name: &'static str, f: impl Fn(f64) -> f64) -> Result<NodeId> {
        self.check(x, name)?;
        let v = self.value(x);
        let out = Tensor::from_parts(v.shape().to_vec(), v.data().iter().map(|&e| f(e)).collect());
        Ok(self.push(op, out))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.unary(x, Op::Scale(x, c), "scale", |e| e * c)
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.unary(x, Op::AddScalar(x, c), "add_scalar", |e| e + c)
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, Op::Tanh(x), "tanh", f64::tanh)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, Op::Sigmoid(x), "sigmoid", sigmoid)
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, Op::Relu(x), "relu", |e| e.max(0.0))
    }

    /// `ln(max(x, 1e-12))`.
    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, Op::Log(x), "log", |e| e.max(LOG_FLOOR).ln())
    }

    /// Concatenates rank-1 tensors.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(shape_err("concat", &[]));
        }
        let mut data = Vec::new();
        for &p in parts {
            self.check(p, "concat")?;
            if self.shape(p).len() != 1 {
                let shapes: Vec<&[usize]> = parts.iter().map(|&q| self.shape(q)).collect();
                return Err(shape_err("concat", &shapes));
            }
            data.extend_from_slice(self.value(p).data());
        }
        let t = Tensor::vector(data);
        Ok(self.push(Op::Concat(parts.to_vec()), t))
    }

    /// Stacks equal-length rank-1 tensors into a `[n, len]` matrix.
    pub fn stack(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        if rows.is_empty() {
            return Err(shape_err("stack", &[]));
        }
        let width = {
            self.check(rows[0], "stack")?;
            self.shape(rows[0]).to_vec()
        };
        let mut data = Vec::with_capacity(rows.len() * width.iter().product::<usize>());
        for &r in rows {
            self.check(r, "stack")?;
            if self.shape(r) != width.as_slice() || width.len() != 1 {
                return Err(shape_err("stack", &[&width, self.shape(r)]));
            }
            data.extend_from_slice(self.value(r).data());
        }
        let t = Tensor::from_parts(vec![rows.len(), width[0]], data);
        Ok(self.push(Op::Stack(rows.to_vec()), t))
    }

    /// Maximum over `axis` of a rank-1 or rank-2 tensor. Ties resolve to the
    /// first index.
    pub fn max_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        self.check(x, "max_axis")?;
        let v = self.value(x);
        let shape = v.shape();
        if shape.len() > 2 || axis >= shape.len() {
            return Err(shape_err("max_axis", &[shape]));
        }
        let (rows, cols) = as_matrix(shape);
        let (rows, cols) = if shape.len() == 1 { (cols, 1) } else { (rows, cols) };
        let d = v.data();
        let (out, argmax, out_shape) = if axis == 0 {
            let mut out = vec![f64::NEG_INFINITY; cols];
            let mut arg = vec![0usize; cols];
            for r in 0..rows {
                for c in 0..cols {
                    let e = d[r * cols + c];
                    if e > out[c] {
                        out[c] = e;
                        arg[c] = r * cols + c;
                    }
                }
            }
            (out, arg, vec![cols])
        } else {
            let mut out = vec![f64::NEG_INFINITY; rows];
            let mut arg = vec![0usize; rows];
            for r in 0..rows {
                for c in 0..cols {
                    let e = d[r * cols + c];
                    if e > out[r] {
                        out[r] = e;
                        arg[r] = r * cols + c;
                    }
                }
            }
            (out, arg, vec![rows])
        };
        let t = Tensor::from_parts(out_shape, out);
        Ok(self.push(Op::Max { input: x, axis, argmax }, t))
    }

    /// Sum over `axis` of a rank-2 tensor (or the single axis of a rank-1 one).
    pub fn sum_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        self.check(x, "sum_axis")?;
        let shape = self.shape(x).to_vec();
        if shape.len() > 2 || axis >= shape.len() {
            return Err(shape_err("sum_axis", &[&shape]));
        }
        if shape.len() == 1 {
            let s: f64 = self.value(x).data().iter().sum();
            return Ok(self.push(Op::SumAxis { input: x, axis }, Tensor::scalar(s)));
        }
        let (rows, cols) = (shape[0], shape[1]);
        let d = self.value(x).data();
        let t = if axis == 0 {
            let mut out = vec![0.0; cols];
            for r in 0..rows {
                for c in 0..cols {
                    out[c] += d[r * cols + c];
                }
            }
            Tensor::vector(out)
        } else {
            Tensor::vector((0..rows).map(|r| d[r * cols..(r + 1) * cols].iter().sum()).collect())
        };
        Ok(self.push(Op::SumAxis { input: x, axis }, t))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x, "sum")?;
        let s: f64 = self.value(x).data().iter().sum();
        Ok(self.push(Op::Sum(x), Tensor::scalar(s)))
    }

    /// Mean of scalar nodes.
    pub fn mean(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let cat = self.concat(xs)?;
        let s = self.sum(cat)?;
        self.scale(s, 1.0 / xs.len() as f64)
    }

    /// Gathers rows of a `[vocab, dim]` table.
    pub fn embedding(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        self.check(table, "embedding")?;
        let shape = self.shape(table).to_vec();
        if shape.len() != 2 || ids.is_empty() || ids.iter().any(|&i| i >= shape[0]) {
            return Err(Error::Shape { op: "embedding", shapes: vec![shape, ids.to_vec()] });
        }
        let dim = shape[1];
        let src = self.value(table).data();
        let mut data = Vec::with_capacity(ids.len() * dim);
        for &i in ids {
            data.extend_from_slice(&src[i * dim..(i + 1) * dim]);
        }
        let t = Tensor::from_parts(vec![ids.len(), dim], data);
        Ok(self.push(Op::Embedding { table, ids: ids.to_vec() }, t))
    }

    /// Weighted sums of table rows: output row `i` is `Σ w · table[row]`
    /// over the `(row, w)` pairs of bag `i`.
    pub fn embedding_bag(&mut self, table: NodeId, bags: &[Vec<(usize, f64)>]) -> Result<NodeId> {
        self.check(table, "embedding_bag")?;
        let shape = self.shape(table).to_vec();
        if shape.len() != 2 || bags.is_empty() || bags.iter().flatten().any(|&(r, _)| r >= shape[0]) {
            return Err(shape_err("embedding_bag", &[&shape, &[bags.len()]]));
        }
        let dim = shape[1];
        let src = self.value(table).data();
        let mut data = vec![0.0; bags.len() * dim];
        for (i, bag) in bags.iter().enumerate() {
            let dst = &mut data[i * dim..(i + 1) * dim];
            for &(r, w) in bag {
                for (o, s) in dst.iter_mut().zip(&src[r * dim..(r + 1) * dim]) {
                    *o += w * s;
                }
            }
        }
        let t = Tensor::from_parts(vec![bags.len(), dim], data);
        Ok(self.push(Op::EmbeddingBag { table, bags: bags.to_vec() }, t))
    }

    /// Sliding windows over the rows of `[len, ch]`: output row `t` is the
    /// concatenation of input rows `t..t + width`.
    pub fn unfold(&mut self, x: NodeId, width: usize) -> Result<NodeId> {
        self.check(x, "unfold")?;
        let shape = self.shape(x).to_vec();
        if shape.len() != 2 || width == 0 || shape[0] < width {
            return Err(Error::Shape { op: "unfold", shapes: vec![shape, vec![width]] });
        }
        let (len, ch) = (shape[0], shape[1]);
        let n = len - width + 1;
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(n * width * ch);
        for t in 0..n {
            data.extend_from_slice(&src[t * ch..(t + width) * ch]);
        }
        let t = Tensor::from_parts(vec![n, width * ch], data);
        Ok(self.push(Op::Unfold { input: x, width }, t))
    }

    /// Cosine similarity of two equal-length rank-1 tensors.
    pub fn cosine(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a, "cosine")?;
        self.check(b, "cosine")?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 1 || sa != sb {
            return Err(shape_err("cosine", &[sa, sb]));
        }
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let (dot, na, nb) = dot_norms(va, vb);
        let c = dot / (na * nb).max(NORM_FLOOR);
        Ok(self.push(Op::Cosine(a, b), Tensor::scalar(c)))
    }

    /// Softmax of a rank-1 tensor, computed with max subtraction.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x, "softmax")?;
        if self.shape(x).len() != 1 {
            return Err(shape_err("softmax", &[self.shape(x)]));
        }
        let out = softmax(self.value(x).data());
        Ok(self.push(Op::Softmax(x), Tensor::vector(out)))
    }

    /// Selects one element of a rank-1 tensor as a scalar.
    pub fn pick(&mut self, x: NodeId, index: usize) -> Result<NodeId> {
        self.check(x, "pick")?;
        if self.shape(x).len() != 1 || index >= self.value(x).len() {
            return Err(Error::Shape { op: "pick", shapes: vec![self.shape(x).to_vec(), vec![index]] });
        }
        let v = self.value(x).data()[index];
        Ok(self.push(Op::Pick { input: x, index }, Tensor::scalar(v)))
    }

    /// Selects row `index` of a rank-2 tensor.
    pub fn row(&mut self, x: NodeId, index: usize) -> Result<NodeId> {
        self.check(x, "row")?;
        let shape = self.shape(x).to_vec();
        if shape.len() != 2 || index >= shape[0] {
            return Err(Error::Shape { op: "row", shapes: vec![shape, vec![index]] });
        }
        let cols = shape[1];
        let v = self.value(x).data()[index * cols..(index + 1) * cols].to_vec();
        Ok(self.push(Op::Row { input: x, index }, Tensor::vector(v)))
    }

    /// Identity in the forward pass; multiplies the gradient by `-lambda` on
    /// the way back.
    pub fn gradient_reverse(&mut self, x: NodeId, cfg: GradReverseConfig) -> Result<NodeId> {
        self.check(x, "gradient_reverse")?;
        let v = self.value(x).clone();
        Ok(self.push(Op::GradReverse { input: x, lambda: cfg.lambda() }, v))
    }

    /// Identity in the forward pass; blocks the gradient.
    pub fn detach(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x, "detach")?;
        let v = self.value(x).clone();
        Ok(self.push(Op::Detach(x), v))
    }

    /// Reverse-mode sweep from a scalar `loss`.
    ///
    /// Fan-out gradients accumulate additively; nodes not on a path to the
    /// loss have no entry in the result.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        self.check(loss, "backward")?;
        let loss_value = self.value(loss);
        if !loss_value.is_scalar() {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(gout) = grads[i].take() else { continue };
            self.backprop_node(i, &gout, &mut grads);
            grads[i] = Some(gout);
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.map(|d| Tensor::from_parts(self.nodes[i].value.shape().to_vec(), d)))
            .collect();
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, i: usize, gout: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        match &node.op {
            Op::Leaf | Op::Detach(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = as_matrix(self.shape(*a));
                let n = self.shape(*b)[1];
                let va = self.value(*a).data();
                let vb = self.value(*b).data();
                // da[m,k] += gout[m,n] * b^T
                let da = acc(grads, &self.nodes, *a);
                for r in 0..m {
                    for c in 0..k {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += gout[r * n + j] * vb[c * n + j];
                        }
                        da[r * k + c] += s;
                    }
                }
                // db[k,n] += a^T * gout
                let db = acc(grads, &self.nodes, *b);
                for r in 0..m {
                    for c in 0..k {
                        let x = va[r * k + c];
                        if x == 0.0 {
                            continue;
                        }
                        let row = &gout[r * n..(r + 1) * n];
                        for (d, g) in db[c * n..(c + 1) * n].iter_mut().zip(row) {
                            *d += x * g;
                        }
                    }
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                {
                    let da = acc(grads, &self.nodes, *a);
                    for (d, g) in da.iter_mut().zip(gout) {
                        *d += g;
                    }
                }
                let db = acc(grads, &self.nodes, *b);
                let nb = db.len();
                for (j, g) in gout.iter().enumerate() {
                    db[j % nb] += sign * g;
                }
            }
            Op::Mul(a, b) => {
                let va = self.value(*a).data();
                let vb = self.value(*b).data();
                let nb = vb.len();
                {
                    let da = acc(grads, &self.nodes, *a);
                    for (j, g) in gout.iter().enumerate() {
                        da[j] += g * vb[j % nb];
                    }
                }
                let db = acc(grads, &self.nodes, *b);
                for (j, g) in gout.iter().enumerate() {
                    db[j % nb] += g * va[j];
                }
            }
            Op::Scale(x, c) => {
                let dx = acc(grads, &self.nodes, *x);
                for (d, g) in dx.iter_mut().zip(gout) {
                    *d += c * g;
                }
            }
            Op::AddScalar(x, _) => {
                let dx = acc(grads, &self.nodes, *x);
                for (d, g) in dx.iter_mut().zip(gout) {
                    *d += g;
                }
            }
            Op::Tanh(x) => {
                let dx = acc(grads, &self.nodes, *x);
                for ((d, g), y) in dx.iter_mut().zip(gout).zip(out) {
                    *d += g * (1.0 - y * y);
                }
            }
            Op::Sigmoid(x) => {
                let dx = acc(grads, &self.nodes, *x);
                for ((d, g), y) in dx.iter_mut().zip(gout).zip(out) {
                    *d += g * y * (1.0 - y);
                }
            }
            Op::Relu(x) => {
                let vx = self.value(*x).data();
                let dx = acc(grads, &self.nodes, *x);
                for ((d, g), e) in dx.iter_mut().zip(gout).zip(vx) {
                    if *e > 0.0 {
                        *d += g;
                    }
                }
            }
            Op::Log(x) => {
                let vx = self.value(*x).data();
                let dx = acc(grads, &self.nodes, *x);
                for ((d, g), e) in dx.iter_mut().zip(gout).zip(vx) {
                    if *e > LOG_FLOOR {
                        *d += g / e;
                    }
                }
            }
            Op::Concat(parts) | Op::Stack(parts) => {
                let mut offset = 0;
                for p in parts {
                    let dp = acc(grads, &self.nodes, *p);
                    let n = dp.len();
                    for (d, g) in dp.iter_mut().zip(&gout[offset..offset + n]) {
                        *d += g;
                    }
                    offset += n;
                }
            }
            Op::Max { input, argmax, .. } => {
                let dx = acc(grads, &self.nodes, *input);
                for (g, &j) in gout.iter().zip(argmax) {
                    dx[j] += g;
                }
            }
            Op::SumAxis { input, axis } => {
                let shape = self.shape(*input).to_vec();
                let dx = acc(grads, &self.nodes, *input);
                if shape.len() == 1 {
                    for d in dx.iter_mut() {
                        *d += gout[0];
                    }
                } else {
                    let cols = shape[1];
                    for (j, d) in dx.iter_mut().enumerate() {
                        *d += if *axis == 0 { gout[j % cols] } else { gout[j / cols] };
                    }
                }
            }
            Op::Sum(x) => {
                let dx = acc(grads, &self.nodes, *x);
                for d in dx.iter_mut() {
                    *d += gout[0];
                }
            }
            Op::Embedding { table, ids } => {
                let dim = self.shape(*table)[1];
                let dt = acc(grads, &self.nodes, *table);
                for (r, &id) in ids.iter().enumerate() {
                    for (d, g) in dt[id * dim..(id + 1) * dim].iter_mut().zip(&gout[r * dim..(r + 1) * dim]) {
                        *d += g;
                    }
                }
            }
            Op::EmbeddingBag { table, bags } => {
                let dim = self.shape(*table)[1];
                let dt = acc(grads, &self.nodes, *table);
                for (r, bag) in bags.iter().enumerate() {
                    let g = &gout[r * dim..(r + 1) * dim];
                    for &(row, w) in bag {
                        for (d, gv) in dt[row * dim..(row + 1) * dim].iter_mut().zip(g) {
                            *d += w * gv;
                        }
                    }
                }
            }
            Op::Unfold { input, width } => {
                let ch = self.shape(*input)[1];
                let span = width * ch;
                let n = gout.len() / span;
                let dx = acc(grads, &self.nodes, *input);
                for t in 0..n {
                    for (d, g) in dx[t * ch..t * ch + span].iter_mut().zip(&gout[t * span..(t + 1) * span]) {
                        *d += g;
                    }
                }
            }
            Op::Cosine(a, b) => {
                let va = self.value(*a).data();
                let vb = self.value(*b).data();
                let (dot, na, nb) = dot_norms(va, vb);
                let g = gout[0];
                let denom = na * nb;
                if denom <= NORM_FLOOR {
                    // Floored denominator is constant.
                    {
                        let da = acc(grads, &self.nodes, *a);
                        for (d, y) in da.iter_mut().zip(vb) {
                            *d += g * y / NORM_FLOOR;
                        }
                    }
                    let db = acc(grads, &self.nodes, *b);
                    for (d, x) in db.iter_mut().zip(va) {
                        *d += g * x / NORM_FLOOR;
                    }
                    return;
                }
                let cos = dot / denom;
                {
                    let da = acc(grads, &self.nodes, *a);
                    for ((d, x), y) in da.iter_mut().zip(va).zip(vb) {
                        *d += g * (y / denom - cos * x / (na * na));
                    }
                }
                let db = acc(grads, &self.nodes, *b);
                for ((d, x), y) in db.iter_mut().zip(va).zip(vb) {
                    *d += g * (x / denom - cos * y / (nb * nb));
                }
            }
            Op::Softmax(x) => {
                let dotp: f64 = gout.iter().zip(out).map(|(g, y)| g * y).sum();
                let dx = acc(grads, &self.nodes, *x);
                for ((d, g), y) in dx.iter_mut().zip(gout).zip(out) {
                    *d += y * (g - dotp);
                }
            }
            Op::Pick { input, index } => {
                let dx = acc(grads, &self.nodes, *input);
                dx[*index] += gout[0];
            }
            Op::Row { input, index } => {
                let cols = self.shape(*input)[1];
                let dx = acc(grads, &self.nodes, *input);
                for (d, g) in dx[index * cols..(index + 1) * cols].iter_mut().zip(gout) {
                    *d += g;
                }
            }
            Op::GradReverse { input, lambda } => {
                let dx = acc(grads, &self.nodes, *input);
                for (d, g) in dx.iter_mut().zip(gout) {
                    *d += -lambda * g;
                }
            }
        }
    }
}

fn acc<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], id: NodeId) -> &'a mut Vec<f64> {
    grads[id.0].get_or_insert_with(|| vec![0.0; nodes[id.0].value.len()])
}

fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for r in 0..m {
        let orow = &mut out[r * n..(r + 1) * n];
        for c in 0..k {
            let x = a[r * k + c];
            if x == 0.0 {
                continue;
            }
            for (o, y) in orow.iter_mut().zip(&b[c * n..(c + 1) * n]) {
                *o += x * y;
            }
        }
    }
}

fn dot_norms(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    (dot, na.sqrt(), nb.sqrt())
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}
