//! Tape-based reverse-mode automatic differentiation over dense vectors.
//!
//! A [`Graph`] records every operation of a forward pass as a node holding
//! its value. [`Graph::backward`] walks the tape in reverse and accumulates
//! parameter gradients into a [`Gradients`] buffer. Parameters are read in
//! place from a borrowed [`ParamSet`]; large matrices are never copied onto
//! the tape.
//!
//! Nodes are plain vectors; a scalar is a vector of length one.

use super::params::{Gradients, ParamId, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Const,
    Param(ParamId),
    Row(ParamId, usize),
    MatVec(ParamId, NodeId),
    MatVecNode(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    MulConst(NodeId, Vec<f64>),
    Sigmoid(NodeId),
    Tanh(NodeId),
    LogSigmoid(NodeId),
    Concat(Vec<NodeId>),
    Slice(NodeId, usize),
    Gather(NodeId, Vec<usize>),
    Dot(NodeId, NodeId),
    Sum(NodeId),
    LogSoftmax(NodeId),
    LogSumExp(NodeId),
    LogSumExpOffset(NodeId, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

pub struct Graph<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sigmoid(x: f64) -> f64 {
    x.min(0.0) - (-x.abs()).exp().ln_1p()
}

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(1024),
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, n: NodeId) -> &[f64] {
        &self.nodes[n.0].value
    }

    pub fn scalar_value(&self, n: NodeId) -> f64 {
        let v = &self.nodes[n.0].value;
        debug_assert_eq!(v.len(), 1);
        v[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after `mark`. Node ids at or past `mark`
    /// become invalid.
    pub fn truncate(&mut self, mark: usize) {
        self.nodes.truncate(mark);
    }

    pub fn constant(&mut self, value: Vec<f64>) -> NodeId {
        self.push(value, Op::Const)
    }

    pub fn scalar(&mut self, x: f64) -> NodeId {
        self.push(vec![x], Op::Const)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        let v = self.params.get(id).data.clone();
        self.push(v, Op::Param(id))
    }

    pub fn row(&mut self, id: ParamId, r: usize) -> NodeId {
        let v = self.params.get(id).row(r).to_vec();
        self.push(v, Op::Row(id, r))
    }

    /// `W x` for a parameter matrix `W` of shape rows × cols.
    pub fn matvec(&mut self, w: ParamId, x: NodeId) -> NodeId {
        let p = self.params.get(w);
        let (rows, cols) = (p.rows(), p.cols());
        let xv = &self.nodes[x.0].value;
        assert_eq!(xv.len(), cols, "matvec {}: input length", p.name);
        let out = (0..rows)
            .map(|r| dot(&p.data[r * cols..(r + 1) * cols], xv))
            .collect();
        self.push(out, Op::MatVec(w, x))
    }

    /// `M x` where `M` is itself a node holding a row-major matrix with
    /// `x.len()` columns.
    pub fn matvec_node(&mut self, m: NodeId, x: NodeId) -> NodeId {
        let mv = &self.nodes[m.0].value;
        let xv = &self.nodes[x.0].value;
        let cols = xv.len();
        assert!(cols > 0 && mv.len().is_multiple_of(cols), "matvec_node shape");
        let out = mv.chunks(cols).map(|row| dot(row, xv)).collect();
        self.push(out, Op::MatVecNode(m, x))
    }

    fn zip(&mut self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64, op: Op) -> NodeId {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.len(), bv.len(), "elementwise shape");
        let out = av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect();
        self.push(out, op)
    }

    fn map(&mut self, a: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let out = self.nodes[a.0].value.iter().map(|&x| f(x)).collect();
        self.push(out, op)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        self.map(a, |x| k * x, Op::Scale(a, k))
    }

    /// Elementwise product with a constant vector (dropout masks).
    pub fn mul_const(&mut self, a: NodeId, k: Vec<f64>) -> NodeId {
        let av = &self.nodes[a.0].value;
        assert_eq!(av.len(), k.len());
        let out = av.iter().zip(&k).map(|(x, y)| x * y).collect();
        self.push(out, Op::MulConst(a, k))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    /// `log σ(x)`, stable for large |x|.
    pub fn log_sigmoid(&mut self, a: NodeId) -> NodeId {
        self.map(a, log_sigmoid, Op::LogSigmoid(a))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut out = Vec::with_capacity(parts.iter().map(|p| self.nodes[p.0].value.len()).sum());
        for p in parts {
            out.extend_from_slice(&self.nodes[p.0].value);
        }
        self.push(out, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let out = self.nodes[a.0].value[start..start + len].to_vec();
        self.push(out, Op::Slice(a, start))
    }

    pub fn gather(&mut self, a: NodeId, idx: Vec<usize>) -> NodeId {
        let av = &self.nodes[a.0].value;
        let out = idx.iter().map(|&i| av[i]).collect();
        self.push(out, Op::Gather(a, idx))
    }

    pub fn pick(&mut self, a: NodeId, i: usize) -> NodeId {
        self.gather(a, vec![i])
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = dot(&self.nodes[a.0].value, &self.nodes[b.0].value);
        self.push(vec![v], Op::Dot(a, b))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.iter().sum();
        self.push(vec![v], Op::Sum(a))
    }

    pub fn log_softmax(&mut self, a: NodeId) -> NodeId {
        let av = &self.nodes[a.0].value;
        let lse = logsumexp(av);
        let out = av.iter().map(|x| x - lse).collect();
        self.push(out, Op::LogSoftmax(a))
    }

    pub fn logsumexp(&mut self, a: NodeId) -> NodeId {
        let v = logsumexp(&self.nodes[a.0].value);
        self.push(vec![v], Op::LogSumExp(a))
    }

    /// `log Σ_k exp(a_k + offsets_k)`. Offsets may be `-inf`, which removes
    /// the term.
    pub fn logsumexp_offset(&mut self, a: NodeId, offsets: Vec<f64>) -> NodeId {
        let av = &self.nodes[a.0].value;
        assert_eq!(av.len(), offsets.len());
        let shifted: Vec<f64> = av.iter().zip(&offsets).map(|(x, c)| x + c).collect();
        let v = logsumexp(&shifted);
        self.push(vec![v], Op::LogSumExpOffset(a, offsets))
    }

    /// Sums a list of scalar nodes.
    pub fn add_all(&mut self, xs: &[NodeId]) -> NodeId {
        let cat = self.concat(xs);
        self.sum(cat)
    }

    /// Reverse pass from a scalar root. Returns the gradient of the root with
    /// respect to every parameter that the root depends on.
    pub fn backward(&self, root: NodeId) -> Gradients {
        let mut pg = Gradients::zeros_like(self.params);
        self.backward_into(root, 1.0, &mut pg);
        pg
    }

    /// Like [`Graph::backward`] but adds `seed * d(root)/d(param)` into an
    /// existing buffer.
    pub fn backward_into(&self, root: NodeId, seed: f64, pg: &mut Gradients) {
        assert_eq!(self.nodes[root.0].value.len(), 1, "backward from non-scalar");
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(root.0 + 1);
        grads.resize_with(root.0 + 1, || None);
        grads[root.0] = Some(vec![seed]);

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let out = &node.value;
            match &node.op {
                Op::Const => {}
                Op::Param(id) => {
                    let buf = pg.buffer(*id, g.len());
                    axpy(buf, 1.0, &g);
                }
                Op::Row(id, r) => {
                    let p = self.params.get(*id);
                    let c = p.cols();
                    let buf = pg.buffer(*id, p.data.len());
                    axpy(&mut buf[r * c..(r + 1) * c], 1.0, &g);
                }
                Op::MatVec(id, x) => {
                    let p = self.params.get(*id);
                    let cols = p.cols();
                    let xv = &self.nodes[x.0].value;
                    {
                        let buf = pg.buffer(*id, p.data.len());
                        for (r, &gr) in g.iter().enumerate() {
                            if gr != 0.0 {
                                axpy(&mut buf[r * cols..(r + 1) * cols], gr, xv);
                            }
                        }
                    }
                    let gx = acc(&mut grads, *x, cols);
                    for (r, &gr) in g.iter().enumerate() {
                        if gr != 0.0 {
                            axpy(gx, gr, &p.data[r * cols..(r + 1) * cols]);
                        }
                    }
                }
                Op::MatVecNode(m, x) => {
                    let cols = self.nodes[x.0].value.len();
                    let mv = &self.nodes[m.0].value;
                    let xv = &self.nodes[x.0].value;
                    {
                        let gm = acc(&mut grads, *m, mv.len());
                        for (r, &gr) in g.iter().enumerate() {
                            axpy(&mut gm[r * cols..(r + 1) * cols], gr, xv);
                        }
                    }
                    let gx = acc(&mut grads, *x, cols);
                    for (r, &gr) in g.iter().enumerate() {
                        axpy(gx, gr, &mv[r * cols..(r + 1) * cols]);
                    }
                }
                Op::Add(a, b) => {
                    axpy(acc(&mut grads, *a, g.len()), 1.0, &g);
                    axpy(acc(&mut grads, *b, g.len()), 1.0, &g);
                }
                Op::Sub(a, b) => {
                    axpy(acc(&mut grads, *a, g.len()), 1.0, &g);
                    axpy(acc(&mut grads, *b, g.len()), -1.0, &g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let ga = acc(&mut grads, *a, g.len());
                    for k in 0..g.len() {
                        ga[k] += g[k] * bv[k];
                    }
                    let gb = acc(&mut grads, *b, g.len());
                    for k in 0..g.len() {
                        gb[k] += g[k] * av[k];
                    }
                }
                Op::Scale(a, s) => axpy(acc(&mut grads, *a, g.len()), *s, &g),
                Op::MulConst(a, k) => {
                    let ga = acc(&mut grads, *a, g.len());
                    for j in 0..g.len() {
                        ga[j] += g[j] * k[j];
                    }
                }
                Op::Sigmoid(a) => {
                    let ga = acc(&mut grads, *a, g.len());
                    for k in 0..g.len() {
                        ga[k] += g[k] * out[k] * (1.0 - out[k]);
                    }
                }
                Op::Tanh(a) => {
                    let ga = acc(&mut grads, *a, g.len());
                    for k in 0..g.len() {
                        ga[k] += g[k] * (1.0 - out[k] * out[k]);
                    }
                }
                Op::LogSigmoid(a) => {
                    let av = &self.nodes[a.0].value;
                    let ga = acc(&mut grads, *a, g.len());
                    for k in 0..g.len() {
                        ga[k] += g[k] * sigmoid(-av[k]);
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let n = self.nodes[p.0].value.len();
                        axpy(acc(&mut grads, *p, n), 1.0, &g[off..off + n]);
                        off += n;
                    }
                }
                Op::Slice(a, start) => {
                    let n = self.nodes[a.0].value.len();
                    let ga = acc(&mut grads, *a, n);
                    axpy(&mut ga[*start..start + g.len()], 1.0, &g);
                }
                Op::Gather(a, idx) => {
                    let n = self.nodes[a.0].value.len();
                    let ga = acc(&mut grads, *a, n);
                    for (k, &j) in idx.iter().enumerate() {
                        ga[j] += g[k];
                    }
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    axpy(acc(&mut grads, *a, av.len()), g[0], bv);
                    axpy(acc(&mut grads, *b, bv.len()), g[0], av);
                }
                Op::Sum(a) => {
                    let n = self.nodes[a.0].value.len();
                    acc(&mut grads, *a, n).iter_mut().for_each(|x| *x += g[0]);
                }
                Op::LogSoftmax(a) => {
                    let total: f64 = g.iter().sum();
                    let ga = acc(&mut grads, *a, g.len());
                    for k in 0..g.len() {
                        ga[k] += g[k] - out[k].exp() * total;
                    }
                }
                Op::LogSumExp(a) => {
                    let av = &self.nodes[a.0].value;
                    if out[0].is_finite() {
                        let ga = acc(&mut grads, *a, av.len());
                        for k in 0..av.len() {
                            ga[k] += g[0] * (av[k] - out[0]).exp();
                        }
                    }
                }
                Op::LogSumExpOffset(a, offsets) => {
                    let av = &self.nodes[a.0].value;
                    if out[0].is_finite() {
                        let ga = acc(&mut grads, *a, av.len());
                        for k in 0..av.len() {
                            if offsets[k] != f64::NEG_INFINITY {
                                ga[k] += g[0] * (av[k] + offsets[k] - out[0]).exp();
                            }
                        }
                    }
                }
            }
        }
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], n: NodeId, len: usize) -> &mut [f64] {
    grads[n.0].get_or_insert_with(|| vec![0.0; len])
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
