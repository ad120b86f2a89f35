//! Minimal reverse-mode differentiation over vector-valued nodes.
//!
//! This is not a general tape: it supports exactly the primitives the
//! encoder networks and the variational losses are built from (affine maps,
//! elementwise tanh/exp/ln/sqrt/clamp, Hadamard products, slices, sums and
//! dot products, and two complex-structured ops used by the reconstruction
//! loss). A graph is built once and then re-evaluated in place, so the
//! training loop allocates nothing.
//!
//! Leaves are either parameters (gradients accumulated) or constants
//! (inputs, frozen base noise). `forward` recomputes every node from the
//! current leaf values; `backward` fills adjoints with respect to a scalar
//! root.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    /// Leaf: a parameter or a constant. Adjoints accumulate either way;
    /// callers read the ones they care about.
    Value,
    /// `W x + b` with `W` stored row-major as a vector node of length rows*cols.
    Affine {
        w: NodeId,
        b: NodeId,
        x: NodeId,
        rows: usize,
        cols: usize,
    },
    Tanh(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Sqrt(NodeId),
    Clamp { x: NodeId, lo: f64, hi: f64 },
    Scale { x: NodeId, c: f64 },
    Shift { x: NodeId, c: f64 },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Slice { x: NodeId, start: usize, len: usize },
    /// Sum of all entries; length-1 output.
    Sum(NodeId),
    /// Inner product; length-1 output.
    Dot(NodeId, NodeId),
    /// Complex matrix-vector product on stacked-real carriers:
    /// `h` is a stacked N*K matrix (row-major), `x` a stacked K vector,
    /// output a stacked N vector.
    ComplexMatVec { h: NodeId, x: NodeId, n: usize, k: usize },
    /// Squared Euclidean norms of the K columns of a stacked N*K matrix.
    ColNormSq { h: NodeId, n: usize, k: usize },
    /// First half plus second half: stacked per-real-dim variances folded
    /// to per-complex-dim variances.
    FoldHalves(NodeId),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Value => "value",
            Op::Affine { .. } => "affine",
            Op::Tanh(_) => "tanh",
            Op::Exp(_) => "exp",
            Op::Ln(_) => "ln",
            Op::Sqrt(_) => "sqrt",
            Op::Clamp { .. } => "clamp",
            Op::Scale { .. } => "scale",
            Op::Shift { .. } => "shift",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Slice { .. } => "slice",
            Op::Sum(_) => "sum",
            Op::Dot(..) => "dot",
            Op::ComplexMatVec { .. } => "complex_matvec",
            Op::ColNormSq { .. } => "col_norm_sq",
            Op::FoldHalves(_) => "fold_halves",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    val: Vec<f64>,
    adj: Vec<f64>,
}

/// Computation graph with cached values and adjoints.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, op: Op, len: usize) -> NodeId {
        self.nodes.push(Node {
            op,
            val: vec![0.0; len],
            adj: vec![0.0; len],
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn len(&self, id: NodeId) -> usize {
        self.nodes[id.0].val.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Parameter leaf; set its value before `forward`.
    pub fn param(&mut self, dim: usize) -> NodeId {
        self.push(Op::Value, dim)
    }

    /// Constant leaf (inputs, frozen noise). Its value may be refreshed
    /// between evaluations with [`Graph::set_value`].
    pub fn constant(&mut self, values: &[f64]) -> NodeId {
        let id = self.push(Op::Value, values.len());
        self.nodes[id.0].val.copy_from_slice(values);
        id
    }

    pub fn set_value(&mut self, id: NodeId, values: &[f64]) {
        assert_eq!(
            self.nodes[id.0].val.len(),
            values.len(),
            "set_value: dimension mismatch"
        );
        self.nodes[id.0].val.copy_from_slice(values);
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].val
    }

    pub fn adjoint(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].adj
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].val.len(), 1);
        self.nodes[id.0].val[0]
    }

    pub fn affine(&mut self, w: NodeId, b: NodeId, x: NodeId, rows: usize, cols: usize) -> NodeId {
        assert_eq!(self.len(w), rows * cols, "affine: weight size");
        assert_eq!(self.len(b), rows, "affine: bias size");
        assert_eq!(self.len(x), cols, "affine: input size");
        assert!(w != x && w != b, "affine: aliased operands unsupported");
        self.push(Op::Affine { w, b, x, rows, cols }, rows)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let n = self.len(x);
        self.push(Op::Tanh(x), n)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let n = self.len(x);
        self.push(Op::Exp(x), n)
    }

    pub fn ln(&mut self, x: NodeId) -> NodeId {
        let n = self.len(x);
        self.push(Op::Ln(x), n)
    }

    pub fn sqrt(&mut self, x: NodeId) -> NodeId {
        let n = self.len(x);
        self.push(Op::Sqrt(x), n)
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let n = self.len(x);
        self.push(Op::Clamp { x, lo, hi }, n)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let n = self.len(x);
        self.push(Op::Scale { x, c }, n)
    }

    pub fn shift(&mut self, x: NodeId, c: f64) -> NodeId {
        let n = self.len(x);
        self.push(Op::Shift { x, c }, n)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.len(a), self.len(b), "add: dimension mismatch");
        let n = self.len(a);
        self.push(Op::Add(a, b), n)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.len(a), self.len(b), "sub: dimension mismatch");
        let n = self.len(a);
        self.push(Op::Sub(a, b), n)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.len(a), self.len(b), "mul: dimension mismatch");
        let n = self.len(a);
        self.push(Op::Mul(a, b), n)
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        assert!(start + len <= self.len(x), "slice out of bounds");
        self.push(Op::Slice { x, start, len }, len)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sum(x), 1)
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.len(a), self.len(b), "dot: dimension mismatch");
        self.push(Op::Dot(a, b), 1)
    }

    pub fn complex_matvec(&mut self, h: NodeId, x: NodeId, n: usize, k: usize) -> NodeId {
        assert_eq!(self.len(h), 2 * n * k, "complex_matvec: matrix size");
        assert_eq!(self.len(x), 2 * k, "complex_matvec: vector size");
        assert!(h != x, "complex_matvec: aliased operands unsupported");
        self.push(Op::ComplexMatVec { h, x, n, k }, 2 * n)
    }

    pub fn col_norm_sq(&mut self, h: NodeId, n: usize, k: usize) -> NodeId {
        assert_eq!(self.len(h), 2 * n * k, "col_norm_sq: matrix size");
        self.push(Op::ColNormSq { h, n, k }, k)
    }

    pub fn fold_halves(&mut self, x: NodeId) -> NodeId {
        let n = self.len(x);
        assert_eq!(n % 2, 0, "fold_halves: even dimension required");
        self.push(Op::FoldHalves(x), n / 2)
    }

    /// Recompute every node value from the current leaves.
    pub fn forward(&mut self) {
        for i in 0..self.nodes.len() {
            let op = self.nodes[i].op.clone();
            let mut out = std::mem::take(&mut self.nodes[i].val);
            match op {
                Op::Value => {}
                Op::Affine { w, b, x, rows, cols } => {
                    let wv = &self.nodes[w.0].val;
                    let bv = &self.nodes[b.0].val;
                    let xv = &self.nodes[x.0].val;
                    for r in 0..rows {
                        let row = &wv[r * cols..(r + 1) * cols];
                        let mut acc = bv[r];
                        for (a, c) in row.iter().zip(xv) {
                            acc += a * c;
                        }
                        out[r] = acc;
                    }
                }
                Op::Tanh(x) => {
                    for (o, v) in out.iter_mut().zip(&self.nodes[x.0].val) {
                        *o = v.tanh();
                    }
                }
                Op::Exp(x) => {
                    for (o, v) in out.iter_mut().zip(&self.nodes[x.0].val) {
                        *o = v.exp();
                    }
                }
                Op::Ln(x) => {
                    for (o, v) in out.iter_mut().zip(&self.nodes[x.0].val) {
                        *o = v.ln();
                    }
                }
                Op::Sqrt(x) => {
                    for (o, v) in out.iter_mut().zip(&self.nodes[x.0].val) {
                        *o = v.sqrt();
                    }
                }
                Op::Clamp { x, lo, hi } => {
                    for (o, v) in out.iter_mut().zip(&self.nodes[x.0].val) {
                        *o = v.clamp(lo, hi);
                    }
                }
                Op::Scale { x, c } => {
                    for (o, v) in out.iter_mut().zip(&self.nodes[x.0].val) {
                        *o = v * c;
                    }
                }
                Op::Shift { x, c } => {
                    for (o, v) in out.iter_mut().zip(&self.nodes[x.0].val) {
                        *o = v + c;
                    }
                }
                Op::Add(a, b) => {
                    for ((o, v), w) in out.iter_mut().zip(&self.nodes[a.0].val).zip(&self.nodes[b.0].val) {
                        *o = v + w;
                    }
                }
                Op::Sub(a, b) => {
                    for ((o, v), w) in out.iter_mut().zip(&self.nodes[a.0].val).zip(&self.nodes[b.0].val) {
                        *o = v - w;
                    }
                }
                Op::Mul(a, b) => {
                    for ((o, v), w) in out.iter_mut().zip(&self.nodes[a.0].val).zip(&self.nodes[b.0].val) {
                        *o = v * w;
                    }
                }
                Op::Slice { x, start, len } => {
                    out.copy_from_slice(&self.nodes[x.0].val[start..start + len]);
                }
                Op::Sum(x) => {
                    out[0] = self.nodes[x.0].val.iter().sum();
                }
                Op::Dot(a, b) => {
                    out[0] = self.nodes[a.0]
                        .val
                        .iter()
                        .zip(&self.nodes[b.0].val)
                        .map(|(v, w)| v * w)
                        .sum();
                }
                Op::ComplexMatVec { h, x, n, k } => {
                    let hv = &self.nodes[h.0].val;
                    let xv = &self.nodes[x.0].val;
                    let (hre, him) = hv.split_at(n * k);
                    let (xre, xim) = xv.split_at(k);
                    for r in 0..n {
                        let hr = &hre[r * k..(r + 1) * k];
                        let hi = &him[r * k..(r + 1) * k];
                        let mut acc_re = 0.0;
                        let mut acc_im = 0.0;
                        for c in 0..k {
                            acc_re += hr[c] * xre[c] - hi[c] * xim[c];
                            acc_im += hr[c] * xim[c] + hi[c] * xre[c];
                        }
                        out[r] = acc_re;
                        out[n + r] = acc_im;
                    }
                }
                Op::ColNormSq { h, n, k } => {
                    let hv = &self.nodes[h.0].val;
                    let (hre, him) = hv.split_at(n * k);
                    out.fill(0.0);
                    for r in 0..n {
                        for c in 0..k {
                            let re = hre[r * k + c];
                            let im = him[r * k + c];
                            out[c] += re * re + im * im;
                        }
                    }
                }
                Op::FoldHalves(x) => {
                    let xv = &self.nodes[x.0].val;
                    let d = xv.len() / 2;
                    for i in 0..d {
                        out[i] = xv[i] + xv[d + i];
                    }
                }
            }
            self.nodes[i].val = out;
        }
    }

    /// Reverse pass from a scalar root; fills adjoints of every node.
    pub fn backward(&mut self, root: NodeId) {
        assert_eq!(self.len(root), 1, "backward: root must be scalar");
        for node in self.nodes.iter_mut() {
            node.adj.fill(0.0);
        }
        self.nodes[root.0].adj[0] = 1.0;
        for i in (0..self.nodes.len()).rev() {
            let op = self.nodes[i].op.clone();
            let adj = std::mem::take(&mut self.nodes[i].adj);
            match op {
                Op::Value => {}
                Op::Affine { w, b, x, rows, cols } => {
                    // dW = adj * x^T, dx = W^T adj, db = adj
                    let xv = std::mem::take(&mut self.nodes[x.0].val);
                    let wv = std::mem::take(&mut self.nodes[w.0].val);
                    for r in 0..rows {
                        let g = adj[r];
                        if g != 0.0 {
                            let wrow = &mut self.nodes[w.0].adj[r * cols..(r + 1) * cols];
                            for (dw, xc) in wrow.iter_mut().zip(&xv) {
                                *dw += g * xc;
                            }
                            self.nodes[b.0].adj[r] += g;
                            let xadj = &mut self.nodes[x.0].adj;
                            let wrow = &wv[r * cols..(r + 1) * cols];
                            for (dx, wc) in xadj.iter_mut().zip(wrow) {
                                *dx += g * wc;
                            }
                        }
                    }
                    self.nodes[x.0].val = xv;
                    self.nodes[w.0].val = wv;
                }
                Op::Tanh(x) => {
                    let out = std::mem::take(&mut self.nodes[i].val);
                    for ((dx, g), o) in self.nodes[x.0].adj.iter_mut().zip(&adj).zip(&out) {
                        *dx += g * (1.0 - o * o);
                    }
                    self.nodes[i].val = out;
                }
                Op::Exp(x) => {
                    let out = std::mem::take(&mut self.nodes[i].val);
                    for ((dx, g), o) in self.nodes[x.0].adj.iter_mut().zip(&adj).zip(&out) {
                        *dx += g * o;
                    }
                    self.nodes[i].val = out;
                }
                Op::Ln(x) => {
                    let xv = std::mem::take(&mut self.nodes[x.0].val);
                    for ((dx, g), v) in self.nodes[x.0].adj.iter_mut().zip(&adj).zip(&xv) {
                        *dx += g / v;
                    }
                    self.nodes[x.0].val = xv;
                }
                Op::Sqrt(x) => {
                    let out = std::mem::take(&mut self.nodes[i].val);
                    for ((dx, g), o) in self.nodes[x.0].adj.iter_mut().zip(&adj).zip(&out) {
                        *dx += g * 0.5 / o;
                    }
                    self.nodes[i].val = out;
                }
                Op::Clamp { x, lo, hi } => {
                    let xv = std::mem::take(&mut self.nodes[x.0].val);
                    for ((dx, g), v) in self.nodes[x.0].adj.iter_mut().zip(&adj).zip(&xv) {
                        if *v >= lo && *v <= hi {
                            *dx += g;
                        }
                    }
                    self.nodes[x.0].val = xv;
                }
                Op::Scale { x, c } => {
                    for (dx, g) in self.nodes[x.0].adj.iter_mut().zip(&adj) {
                        *dx += g * c;
                    }
                }
                Op::Shift { x, .. } => {
                    for (dx, g) in self.nodes[x.0].adj.iter_mut().zip(&adj) {
                        *dx += g;
                    }
                }
                Op::Add(a, b) => {
                    for (dx, g) in self.nodes[a.0].adj.iter_mut().zip(&adj) {
                        *dx += g;
                    }
                    for (dx, g) in self.nodes[b.0].adj.iter_mut().zip(&adj) {
                        *dx += g;
                    }
                }
                Op::Sub(a, b) => {
                    for (dx, g) in self.nodes[a.0].adj.iter_mut().zip(&adj) {
                        *dx += g;
                    }
                    for (dx, g) in self.nodes[b.0].adj.iter_mut().zip(&adj) {
                        *dx -= g;
                    }
                }
                Op::Mul(a, b) => {
                    if a == b {
                        let av = std::mem::take(&mut self.nodes[a.0].val);
                        for ((dx, g), v) in self.nodes[a.0].adj.iter_mut().zip(&adj).zip(&av) {
                            *dx += 2.0 * g * v;
                        }
                        self.nodes[a.0].val = av;
                    } else {
                        let av = std::mem::take(&mut self.nodes[a.0].val);
                        let bv = std::mem::take(&mut self.nodes[b.0].val);
                        for ((dx, g), v) in self.nodes[a.0].adj.iter_mut().zip(&adj).zip(&bv) {
                            *dx += g * v;
                        }
                        for ((dx, g), v) in self.nodes[b.0].adj.iter_mut().zip(&adj).zip(&av) {
                            *dx += g * v;
                        }
                        self.nodes[a.0].val = av;
                        self.nodes[b.0].val = bv;
                    }
                }
                Op::Slice { x, start, len } => {
                    for (dx, g) in self.nodes[x.0].adj[start..start + len].iter_mut().zip(&adj) {
                        *dx += g;
                    }
                }
                Op::Sum(x) => {
                    let g = adj[0];
                    for dx in self.nodes[x.0].adj.iter_mut() {
                        *dx += g;
                    }
                }
                Op::Dot(a, b) => {
                    let g = adj[0];
                    if a == b {
                        let av = std::mem::take(&mut self.nodes[a.0].val);
                        for (dx, v) in self.nodes[a.0].adj.iter_mut().zip(&av) {
                            *dx += 2.0 * g * v;
                        }
                        self.nodes[a.0].val = av;
                    } else {
                        let av = std::mem::take(&mut self.nodes[a.0].val);
                        let bv = std::mem::take(&mut self.nodes[b.0].val);
                        for (dx, v) in self.nodes[a.0].adj.iter_mut().zip(&bv) {
                            *dx += g * v;
                        }
                        for (dx, v) in self.nodes[b.0].adj.iter_mut().zip(&av) {
                            *dx += g * v;
                        }
                        self.nodes[a.0].val = av;
                        self.nodes[b.0].val = bv;
                    }
                }
                Op::ComplexMatVec { h, x, n, k } => {
                    let hv = std::mem::take(&mut self.nodes[h.0].val);
                    let xv = std::mem::take(&mut self.nodes[x.0].val);
                    let (gre, gim) = adj.split_at(n);
                    let (xre, xim) = xv.split_at(k);
                    {
                        let hadj = &mut self.nodes[h.0].adj;
                        let (hre_adj, him_adj) = hadj.split_at_mut(n * k);
                        for r in 0..n {
                            let (gr, gi) = (gre[r], gim[r]);
                            if gr == 0.0 && gi == 0.0 {
                                continue;
                            }
                            for c in 0..k {
                                hre_adj[r * k + c] += gr * xre[c] + gi * xim[c];
                                him_adj[r * k + c] += -gr * xim[c] + gi * xre[c];
                            }
                        }
                    }
                    {
                        let (hre, him) = hv.split_at(n * k);
                        let xadj = &mut self.nodes[x.0].adj;
                        let (xre_adj, xim_adj) = xadj.split_at_mut(k);
                        for r in 0..n {
                            let (gr, gi) = (gre[r], gim[r]);
                            if gr == 0.0 && gi == 0.0 {
                                continue;
                            }
                            for c in 0..k {
                                xre_adj[c] += gr * hre[r * k + c] + gi * him[r * k + c];
                                xim_adj[c] += -gr * him[r * k + c] + gi * hre[r * k + c];
                            }
                        }
                    }
                    self.nodes[h.0].val = hv;
                    self.nodes[x.0].val = xv;
                }
                Op::ColNormSq { h, n, k } => {
                    let hv = std::mem::take(&mut self.nodes[h.0].val);
                    {
                        let hadj = &mut self.nodes[h.0].adj;
                        let (hre, him) = hv.split_at(n * k);
                        let (hre_adj, him_adj) = hadj.split_at_mut(n * k);
                        for r in 0..n {
                            for c in 0..k {
                                let g = adj[c];
                                hre_adj[r * k + c] += 2.0 * g * hre[r * k + c];
                                him_adj[r * k + c] += 2.0 * g * him[r * k + c];
                            }
                        }
                    }
                    self.nodes[h.0].val = hv;
                }
                Op::FoldHalves(x) => {
                    let d = adj.len();
                    let xadj = &mut self.nodes[x.0].adj;
                    for i in 0..d {
                        xadj[i] += adj[i];
                        xadj[d + i] += adj[i];
                    }
                }
            }
            self.nodes[i].adj = adj;
        }
    }

    /// Error if any cached value is non-finite, naming the first offending
    /// primitive.
    pub fn check_finite(&self) -> Result<()> {
        for node in &self.nodes {
            if let Some(v) = node.val.iter().find(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    context: node.op.name().to_string(),
                    detail: format!("produced {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Evaluate a scalar loss built from graph primitives and return
/// `(loss, d loss / d params)`.
pub fn grad<F>(loss_fn: F, params: &[f64]) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&mut Graph, NodeId) -> NodeId,
{
    let mut g = Graph::new();
    let p = g.param(params.len());
    let root = loss_fn(&mut g, p);
    assert_eq!(g.len(root), 1, "grad: loss must be scalar");
    g.set_value(p, params);
    g.forward();
    g.check_finite()?;
    g.backward(root);
    Ok((g.scalar(root), g.adjoint(p).to_vec()))
}

/// Central finite differences of a scalar function. Used as the
/// independent oracle when validating [`grad`]; only evaluates the loss,
/// never the reverse pass.
pub fn finite_difference<F>(mut f: F, params: &[f64], step: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut work = params.to_vec();
    let mut out = vec![0.0; params.len()];
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + step;
        let up = f(&work);
        work[i] = orig - step;
        let down = f(&work);
        work[i] = orig;
        out[i] = (up - down) / (2.0 * step);
    }
    out
}

/// Relative disagreement used by gradient checks: absolute difference over
/// `max(|a|, |b|, floor)` so near-zero coordinates are compared absolutely.
pub fn grad_rel_err(analytic: &[f64], fd: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(fd)
        .map(|(&a, &b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
        .fold(0.0, f64::max)
}
