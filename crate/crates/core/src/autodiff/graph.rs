//! Reverse-mode tape.
//!
//! A [`Graph`] is built fresh for every forward pass. Each operation appends a
//! node holding its value and the recipe for its vector–Jacobian product;
//! [`Graph::backward`] replays the tape in reverse and returns one gradient per
//! entry of the [`ParamStore`] (zero for parameters never touched).

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Index of a trainable tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named, ordered collection of trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    /// Total scalar count over all tensors.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// All values concatenated in store order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for v in &self.values {
            out.extend_from_slice(v.data());
        }
        out
    }

    /// Overwrite all values from a flat blob laid out as by [`flatten`](Self::flatten).
    pub fn load_flat(&mut self, blob: &[f64]) -> Result<()> {
        if blob.len() != self.num_scalars() {
            return Err(Error::LengthMismatch {
                expected: self.num_scalars(),
                found: blob.len(),
            });
        }
        let mut offset = 0;
        for v in &mut self.values {
            let n = v.len();
            v.data_mut().copy_from_slice(&blob[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }
}

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    /// Position on the tape; indexes the result of [`Graph::backward_full`].
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    /// `x W + b` with `W: [in, out]`, `b: [out]`.
    Linear { x: Var, w: Var, b: Var },
    MatMul(Var, Var),
    /// `a bᵀ`.
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    DivConst(Var, f64),
    Tanh(Var),
    Exp(Var),
    Sqrt(Var),
    Square(Var),
    Sum(Var),
    ConcatCols(Vec<Var>),
    SliceCols { a: Var, start: usize },
    SegmentSoftmax { a: Var, offsets: Rc<[usize]> },
    SegmentWeightedSum { w: Var, v: Var, offsets: Rc<[usize]> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    param: Option<ParamId>,
    requires_grad: bool,
}

/// Per-parameter gradients produced by [`Graph::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn as_slice(&self) -> &[Tensor] {
        &self.grads
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.grads.iter().flat_map(|g| g.data().iter().copied()).collect()
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// `c = alpha * op(a) op(b) + beta * c`, row-major, logical shapes `m×k`, `k×n`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m) } else { (k, 1) };
    let (rsb, csb) = if b_t { (1, k) } else { (n, 1) };
    // SAFETY: the slices hold exactly the extents implied by (m, k, n) and the
    // strides above, which the debug assertions check.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            param: None,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Input that no gradient flows into.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf carrying a snapshot of a trainable parameter.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.push(store.get(id).clone(), Op::Leaf, true);
        self.nodes[v.0].param = Some(id);
        v
    }

    /// Leaf that receives a gradient but is not in any store; read it back with
    /// [`backward_full`](Self::backward_full).
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.value(a), self.value(b));
        if sa.rows() != sb.rows() || sa.cols() != sb.cols() {
            return Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                sa.shape(),
                sb.shape()
            )));
        }
        Ok(())
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (n, k) = (xv.rows(), xv.cols());
        if wv.rows() != k {
            return Err(Error::Shape(format!(
                "linear: input width {k} does not match weight rows {}",
                wv.rows()
            )));
        }
        let out = wv.cols();
        if bv.len() != out {
            return Err(Error::Shape(format!(
                "linear: bias length {} vs output width {out}",
                bv.len()
            )));
        }
        let mut y = Vec::with_capacity(n * out);
        for _ in 0..n {
            y.extend_from_slice(bv.data());
        }
        gemm(n, k, out, xv.data(), false, wv.data(), false, 1.0, &mut y);
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(Tensor::matrix(n, out, y)?, Op::Linear { x, w, b }, rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        if bv.rows() != k {
            return Err(Error::Shape(format!(
                "matmul: {m}x{k} by {}x{n}",
                bv.rows()
            )));
        }
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, bv.data(), false, 0.0, &mut c);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(m, n, c)?, Op::MatMul(a, b), rg))
    }

    /// `a bᵀ` for `a: [m, k]`, `b: [n, k]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k, n) = (av.rows(), av.cols(), bv.rows());
        if bv.cols() != k {
            return Err(Error::Shape(format!(
                "matmul_nt: {m}x{k} by ({n}x{})ᵀ",
                bv.cols()
            )));
        }
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, bv.data(), true, 0.0, &mut c);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(m, n, c)?, Op::MatMulNt(a, b), rg))
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(a, b, "elementwise")?;
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| f(x)).collect();
        let t = Tensor::new(av.shape().to_vec(), data).expect("shape preserved");
        let rg = self.rg(a);
        self.push(t, op, rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Scale(a, c), |x| x * c)
    }

    /// `a / c`, rounded as a true division rather than a reciprocal product.
    pub fn div_const(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::DivConst(a, c), |x| x / c)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a), f64::tanh)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, Op::Exp(a), f64::exp)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.map(a, Op::Sqrt(a), f64::sqrt)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(a, Op::Square(a), |x| x * x)
    }

    /// Sum of all entries, accumulated in storage order.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum::<f64>();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let rows = self.value(first).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Error::Shape("concat_cols: row counts differ".into()));
        }
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::matrix(rows, total, data)?,
            Op::ConcatCols(parts.to_vec()),
            rg,
        ))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let av = self.value(a);
        if start >= end || end > av.cols() {
            return Err(Error::Shape(format!(
                "slice {start}..{end} of {} columns",
                av.cols()
            )));
        }
        let mut data = Vec::with_capacity(av.rows() * (end - start));
        for r in 0..av.rows() {
            data.extend_from_slice(&av.row(r)[start..end]);
        }
        let t = Tensor::matrix(av.rows(), end - start, data)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::SliceCols { a, start }, rg))
    }

    fn check_segments(&self, rows: usize, offsets: &[usize]) -> Result<()> {
        if offsets.len() < 2
            || offsets[0] != 0
            || *offsets.last().unwrap() != rows
            || offsets.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::Contract(format!(
                "segment offsets {offsets:?} do not partition {rows} rows into nonempty groups"
            )));
        }
        Ok(())
    }

    /// Softmax of a column vector within each contiguous row segment.
    /// `offsets` has one entry per segment start plus the final row count.
    pub fn segment_softmax(&mut self, a: Var, offsets: Rc<[usize]>) -> Result<Var> {
        let av = self.value(a);
        if av.cols() != 1 {
            return Err(Error::Shape("segment_softmax expects one column".into()));
        }
        self.check_segments(av.rows(), &offsets)?;
        let x = av.data();
        let mut y = vec![0.0; x.len()];
        for seg in offsets.windows(2) {
            let (s, e) = (seg[0], seg[1]);
            let max = x[s..e].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for i in s..e {
                y[i] = (x[i] - max).exp();
                total += y[i];
            }
            for yi in &mut y[s..e] {
                *yi /= total;
            }
        }
        let t = Tensor::matrix(x.len(), 1, y)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::SegmentSoftmax { a, offsets }, rg))
    }

    /// Per segment `s`: `Σ_{i∈s} w_i v_i`, rows accumulated in index order.
    pub fn segment_weighted_sum(&mut self, w: Var, v: Var, offsets: Rc<[usize]>) -> Result<Var> {
        let (wv, vv) = (self.value(w), self.value(v));
        if wv.cols() != 1 || wv.rows() != vv.rows() {
            return Err(Error::Shape(format!(
                "segment_weighted_sum: weights {:?}, values {:?}",
                wv.shape(),
                vv.shape()
            )));
        }
        self.check_segments(vv.rows(), &offsets)?;
        let q = vv.cols();
        let segs = offsets.len() - 1;
        let mut out = vec![0.0; segs * q];
        for (s, seg) in offsets.windows(2).enumerate() {
            let acc = &mut out[s * q..(s + 1) * q];
            for i in seg[0]..seg[1] {
                let wi = wv.data()[i];
                for (o, x) in acc.iter_mut().zip(vv.row(i)) {
                    *o += wi * x;
                }
            }
        }
        let t = Tensor::matrix(segs, q, out)?;
        let rg = self.rg(w) || self.rg(v);
        Ok(self.push(t, Op::SegmentWeightedSum { w, v, offsets }, rg))
    }

    /// Gradients of a scalar root with respect to every store parameter.
    pub fn backward(&self, root: Var, store: &ParamStore) -> Result<Gradients> {
        let adjoints = self.backward_full(root)?;
        let mut grads: Vec<Tensor> = store.values().iter().map(|v| Tensor::zeros(v.shape())).collect();
        for (node, adj) in self.nodes.iter().zip(adjoints) {
            if let (Some(pid), Some(adj)) = (node.param, adj) {
                grads[pid.0].add_assign(&adj);
            }
        }
        Ok(Gradients { grads })
    }

    /// Adjoint of every node (`None` where no gradient flows).
    pub fn backward_full(&self, root: Var) -> Result<Vec<Option<Tensor>>> {
        let rv = self.value(root);
        if rv.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                rv.shape()
            )));
        }
        let mut adj: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[root.0] = Some(Tensor::filled(rv.shape(), 1.0));

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            self.propagate(node, &g, &mut adj);
            adj[idx] = Some(g);
        }
        Ok(adj)
    }

    fn slot<'a>(&self, adj: &'a mut [Option<Tensor>], v: Var) -> Option<&'a mut Tensor> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let shape = self.nodes[v.0].value.shape();
        Some(adj[v.0].get_or_insert_with(|| Tensor::zeros(shape)))
    }

    fn accumulate(&self, adj: &mut [Option<Tensor>], v: Var, f: impl Fn(usize) -> f64) {
        if let Some(s) = self.slot(adj, v) {
            for (i, x) in s.data_mut().iter_mut().enumerate() {
                *x += f(i);
            }
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, adj: &mut [Option<Tensor>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (n, k, out) = (xv.rows(), xv.cols(), wv.cols());
                if let Some(s) = self.slot(adj, *x) {
                    gemm(n, out, k, gd, false, wv.data(), true, 1.0, s.data_mut());
                }
                if let Some(s) = self.slot(adj, *w) {
                    gemm(k, n, out, xv.data(), true, gd, false, 1.0, s.data_mut());
                }
                if let Some(s) = self.slot(adj, *b) {
                    let sd = s.data_mut();
                    for r in 0..n {
                        for (acc, gv) in sd.iter_mut().zip(&gd[r * out..(r + 1) * out]) {
                            *acc += gv;
                        }
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if let Some(s) = self.slot(adj, *a) {
                    gemm(m, n, k, gd, false, bv.data(), true, 1.0, s.data_mut());
                }
                if let Some(s) = self.slot(adj, *b) {
                    gemm(k, m, n, av.data(), true, gd, false, 1.0, s.data_mut());
                }
            }
            Op::MatMulNt(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.rows());
                // C = A Bᵀ: dA = G B, dB = Gᵀ A.
                if let Some(s) = self.slot(adj, *a) {
                    gemm(m, n, k, gd, false, bv.data(), false, 1.0, s.data_mut());
                }
                if let Some(s) = self.slot(adj, *b) {
                    gemm(n, m, k, gd, true, av.data(), false, 1.0, s.data_mut());
                }
            }
            Op::Add(a, b) => {
                self.accumulate(adj, *a, |i| gd[i]);
                self.accumulate(adj, *b, |i| gd[i]);
            }
            Op::Sub(a, b) => {
                self.accumulate(adj, *a, |i| gd[i]);
                self.accumulate(adj, *b, |i| -gd[i]);
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(adj, *a, |i| gd[i] * bd[i]);
                self.accumulate(adj, *b, |i| gd[i] * ad[i]);
            }
            Op::Scale(a, c) => self.accumulate(adj, *a, |i| gd[i] * c),
            Op::DivConst(a, c) => self.accumulate(adj, *a, |i| gd[i] / c),
            Op::Tanh(a) => {
                let y = node.value.data();
                self.accumulate(adj, *a, |i| gd[i] * (1.0 - y[i] * y[i]));
            }
            Op::Exp(a) => {
                let y = node.value.data();
                self.accumulate(adj, *a, |i| gd[i] * y[i]);
            }
            Op::Sqrt(a) => {
                let y = node.value.data();
                self.accumulate(adj, *a, |i| gd[i] * 0.5 / y[i]);
            }
            Op::Square(a) => {
                let x = self.value(*a).data();
                self.accumulate(adj, *a, |i| gd[i] * 2.0 * x[i]);
            }
            Op::Sum(a) => {
                let s = gd[0];
                self.accumulate(adj, *a, |_| s);
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    self.accumulate(adj, p, |i| {
                        let (r, c) = (i / w, i % w);
                        gd[r * total + offset + c]
                    });
                    offset += w;
                }
                debug_assert_eq!(offset, total);
            }
            Op::SliceCols { a, start } => {
                let full = self.value(*a).cols();
                let w = node.value.cols();
                let start = *start;
                self.accumulate(adj, *a, |i| {
                    let (r, c) = (i / full, i % full);
                    if c >= start && c < start + w {
                        gd[r * w + c - start]
                    } else {
                        0.0
                    }
                });
            }
            Op::SegmentSoftmax { a, offsets } => {
                let y = node.value.data();
                let mut dx = vec![0.0; y.len()];
                for seg in offsets.windows(2) {
                    let dot: f64 = (seg[0]..seg[1]).map(|i| y[i] * gd[i]).sum();
                    for i in seg[0]..seg[1] {
                        dx[i] = y[i] * (gd[i] - dot);
                    }
                }
                self.accumulate(adj, *a, |i| dx[i]);
            }
            Op::SegmentWeightedSum { w, v, offsets } => {
                let (wv, vv) = (self.value(*w), self.value(*v));
                let q = vv.cols();
                let mut seg_of = vec![0usize; vv.rows()];
                for (s, seg) in offsets.windows(2).enumerate() {
                    for x in &mut seg_of[seg[0]..seg[1]] {
                        *x = s;
                    }
                }
                self.accumulate(adj, *w, |i| {
                    let gs = &gd[seg_of[i] * q..(seg_of[i] + 1) * q];
                    gs.iter().zip(vv.row(i)).map(|(a, b)| a * b).sum()
                });
                let wd = wv.data();
                self.accumulate(adj, *v, |i| {
                    let (r, c) = (i / q, i % q);
                    wd[r] * gd[seg_of[r] * q + c]
                });
            }
        }
    }
}
