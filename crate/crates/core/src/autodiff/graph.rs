use super::tensor::{numel, Tensor};
use crate::codec::quant::round_half_away;
use crate::error::{shape_err, Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How gradients pass the rounding step in [`Graph::soft_quantize`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Rounding {
    /// Hard rounding forward, identity backward.
    StraightThrough,
    /// Smooth rounding in both passes; sharper as `alpha` grows.
    SoftRound { alpha: f64 },
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var, Option<Vec<usize>>, Option<Vec<usize>>),
    Sub(Var, Var, Option<Vec<usize>>, Option<Vec<usize>>),
    Mul(Var, Var, Option<Vec<usize>>, Option<Vec<usize>>),
    Div(Var, Var, Option<Vec<usize>>, Option<Vec<usize>>),
    MatMul(Var, Var),
    Conv1d { x: Var, w: Var, stride: usize, pad: usize },
    Conv2d { x: Var, w: Var, stride: usize, pad: usize },
    Relu(Var),
    Softplus(Var),
    Abs(Var),
    Log(Var),
    Exp(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Pow(Var, f64),
    ClampMin(Var, f64),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Gather(Var, Vec<usize>),
    Broadcast(Var, Vec<usize>),
    Quantize { coeffs: Var, table: Var, rounding: Rounding },
}

#[derive(Debug, Clone)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// Tape of operations. Nodes are appended in evaluation order, so index
/// order is a topological order and backward walks it in reverse.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i + a.len() >= n { a[i + a.len() - n] } else { 1 };
        let db = if i + b.len() >= n { b[i + b.len() - n] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// For each flat index of `out`, the flat index of `inp` it reads from.
/// `None` when the shapes agree.
fn index_map(out: &[usize], inp: &[usize]) -> Option<Vec<usize>> {
    if out == inp {
        return None;
    }
    let offset = out.len() - inp.len();
    let mut strides = vec![0usize; out.len()];
    let mut s = 1;
    for i in (0..inp.len()).rev() {
        strides[i + offset] = if inp[i] == 1 { 0 } else { s };
        s *= inp[i];
    }
    let total = numel(out);
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; out.len()];
    for _ in 0..total {
        map.push(idx.iter().zip(&strides).map(|(i, s)| i * s).sum());
        for d in (0..out.len()).rev() {
            idx[d] += 1;
            if idx[d] < out[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Some(map)
}

fn at(map: &Option<Vec<usize>>, i: usize) -> usize {
    map.as_ref().map_or(i, |m| m[i])
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn soft_round(y: f64, alpha: f64) -> f64 {
    let m = y.floor() + 0.5;
    m + (alpha * (y - m)).tanh() / (2.0 * (alpha / 2.0).tanh())
}

fn soft_round_slope(y: f64, alpha: f64) -> f64 {
    let m = y.floor() + 0.5;
    let t = (alpha * (y - m)).tanh();
    alpha * (1.0 - t * t) / (2.0 * (alpha / 2.0).tanh())
}

fn conv_out(len: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    (len + 2 * pad).checked_sub(k).map(|r| r / stride + 1)
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

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Record a tensor; it is differentiated iff it requires grad.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, t.requires_grad())
    }

    pub fn constant(&mut self, shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, data)?;
        Ok(self.leaf(&t))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    /// The single value of a one-element node.
    pub fn item(&self, v: Var) -> f64 {
        self.node(v).value[0]
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node sizes agree")
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &str,
        f: impl Fn(f64, f64) -> f64,
        op: fn(Var, Var, Option<Vec<usize>>, Option<Vec<usize>>) -> Op,
    ) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let out = broadcast_shape(&sa, &sb).ok_or_else(|| shape_err(&sa, &sb, name))?;
        let (ma, mb) = (index_map(&out, &sa), index_map(&out, &sb));
        let (va, vb) = (self.value(a), self.value(b));
        let value = (0..numel(&out))
            .map(|i| f(va[at(&ma, i)], vb[at(&mb, i)]))
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, value, op(a, b, ma, mb), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "div", |x, y| x / y, Op::Div)
    }

    /// `[m, k] × [k, n] → [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err(sa, sb, "matmul"));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (va, vb) = (self.value(a), self.value(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let x = va[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let row = &vb[p * n..(p + 1) * n];
                for (o, &y) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
                    *o += x * y;
                }
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), rg))
    }

    /// Cross-correlation of `[n, c_in, l]` with `[c_out, c_in, k]`.
    pub fn conv1d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        let lo = (stride > 0 && sx.len() == 3 && sw.len() == 3 && sx[1] == sw[1])
            .then(|| conv_out(sx[2], sw[2], stride, pad))
            .flatten()
            .ok_or_else(|| shape_err(sx, sw, "conv1d"))?;
        let (n, ci, l) = (sx[0], sx[1], sx[2]);
        let (co, k) = (sw[0], sw[2]);
        let (vx, vw) = (self.value(x), self.value(w));
        let mut out = vec![0.0; n * co * lo];
        for b in 0..n {
            for o in 0..co {
                for t in 0..lo {
                    let mut acc = 0.0;
                    for c in 0..ci {
                        for j in 0..k {
                            let pos = (t * stride + j) as isize - pad as isize;
                            if pos >= 0 && (pos as usize) < l {
                                acc += vx[(b * ci + c) * l + pos as usize] * vw[(o * ci + c) * k + j];
                            }
                        }
                    }
                    out[(b * co + o) * lo + t] = acc;
                }
            }
        }
        let rg = self.rg(x) || self.rg(w);
        Ok(self.push(vec![n, co, lo], out, Op::Conv1d { x, w, stride, pad }, rg))
    }

    /// Cross-correlation of `[n, c_in, h, w]` with `[c_out, c_in, kh, kw]`.
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        let dims = (stride > 0 && sx.len() == 4 && sw.len() == 4 && sx[1] == sw[1])
            .then(|| {
                Some((
                    conv_out(sx[2], sw[2], stride, pad)?,
                    conv_out(sx[3], sw[3], stride, pad)?,
                ))
            })
            .flatten()
            .ok_or_else(|| shape_err(sx, sw, "conv2d"))?;
        let (ho, wo) = dims;
        let (n, ci, h, wi) = (sx[0], sx[1], sx[2], sx[3]);
        let (co, kh, kw) = (sw[0], sw[2], sw[3]);
        let (vx, vw) = (self.value(x), self.value(w));
        let mut out = vec![0.0; n * co * ho * wo];
        for b in 0..n {
            for o in 0..co {
                for c in 0..ci {
                    let plane = &vx[(b * ci + c) * h * wi..(b * ci + c + 1) * h * wi];
                    let kern = &vw[(o * ci + c) * kh * kw..(o * ci + c + 1) * kh * kw];
                    let dst = &mut out[(b * co + o) * ho * wo..(b * co + o + 1) * ho * wo];
                    for r in 0..ho {
                        for q in 0..wo {
                            let mut acc = 0.0;
                            for i in 0..kh {
                                let y = (r * stride + i) as isize - pad as isize;
                                if y < 0 || y as usize >= h {
                                    continue;
                                }
                                let row = &plane[y as usize * wi..(y as usize + 1) * wi];
                                for j in 0..kw {
                                    let xx = (q * stride + j) as isize - pad as isize;
                                    if xx >= 0 && (xx as usize) < wi {
                                        acc += row[xx as usize] * kern[i * kw + j];
                                    }
                                }
                            }
                            dst[r * wo + q] += acc;
                        }
                    }
                }
            }
        }
        let rg = self.rg(x) || self.rg(w);
        Ok(self.push(vec![n, co, ho, wo], out, Op::Conv2d { x, w, stride, pad }, rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let n = self.node(a);
        let value = n.value.iter().map(|&v| f(v)).collect();
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        self.push(shape, value, op, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |v| v.max(0.0), Op::Relu(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, Op::Softplus(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, |v| v * k, Op::Scale(a, k))
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, |v| v + k, Op::AddScalar(a))
    }

    pub fn pow_scalar(&mut self, a: Var, p: f64) -> Var {
        self.unary(a, |v| v.powf(p), Op::Pow(a, p))
    }

    pub fn clamp_min(&mut self, a: Var, lo: f64) -> Var {
        self.unary(a, |v| v.max(lo), Op::ClampMin(a, lo))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let n = self.node(a);
        let (s, rg) = (n.value.iter().sum(), n.requires_grad);
        self.push(Vec::new(), vec![s], Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.node(a);
        let s: f64 = n.value.iter().sum::<f64>() / n.value.len() as f64;
        let rg = n.requires_grad;
        self.push(Vec::new(), vec![s], Op::Mean(a), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let shape = shape.into();
        let n = self.node(a);
        if numel(&shape) != n.value.len() {
            return Err(shape_err(&n.shape, &shape, "reshape"));
        }
        let (value, rg) = (n.value.clone(), n.requires_grad);
        Ok(self.push(shape, value, Op::Reshape(a), rg))
    }

    /// `out[i] = a[indices[i]]` over flat indices.
    pub fn gather(&mut self, a: Var, indices: &[usize], shape: impl Into<Vec<usize>>) -> Result<Var> {
        let shape = shape.into();
        let n = self.node(a);
        if numel(&shape) != indices.len() {
            return Err(shape_err(&shape, &[indices.len()], "gather output"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n.value.len()) {
            return Err(shape_err(&n.shape, &[bad], "gather index out of range"));
        }
        let value = indices.iter().map(|&i| n.value[i]).collect();
        let rg = n.requires_grad;
        Ok(self.push(shape, value, Op::Gather(a, indices.to_vec()), rg))
    }

    pub fn broadcast(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let shape = shape.into();
        let n = self.node(a);
        if broadcast_shape(&n.shape, &shape).as_deref() != Some(&shape[..]) {
            return Err(shape_err(&n.shape, &shape, "broadcast"));
        }
        let map = index_map(&shape, &n.shape).unwrap_or_else(|| (0..n.value.len()).collect());
        let value = map.iter().map(|&i| n.value[i]).collect();
        let rg = n.requires_grad;
        Ok(self.push(shape, value, Op::Broadcast(a, map), rg))
    }

    /// `round(coeffs / table)` elementwise; `table` broadcasts against `coeffs`.
    pub fn soft_quantize(&mut self, coeffs: Var, table: Var, rounding: Rounding) -> Result<Var> {
        let (sc, st) = (self.shape(coeffs).to_vec(), self.shape(table).to_vec());
        if broadcast_shape(&sc, &st).as_deref() != Some(&sc[..]) {
            return Err(shape_err(&sc, &st, "soft_quantize"));
        }
        let table = if sc == st { table } else { self.broadcast(table, sc.clone())? };
        let (vc, vt) = (self.value(coeffs), self.value(table));
        let value = vc
            .iter()
            .zip(vt)
            .map(|(&c, &t)| match rounding {
                Rounding::StraightThrough => round_half_away(c / t),
                Rounding::SoftRound { alpha } => soft_round(c / t, alpha),
            })
            .collect();
        let rg = self.rg(coeffs) || self.rg(table);
        Ok(self.push(sc, value, Op::Quantize { coeffs, table, rounding }, rg))
    }

    /// Reverse pass from a one-element `loss`. Earlier gradients are cleared.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.node(loss).value.len() != 1 {
            return Err(Error::InvalidInput(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.node(loss).shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        for (slot, (g, node)) in self.grads.iter_mut().zip(grads.into_iter().zip(&self.nodes)) {
            *slot = if node.requires_grad { g } else { None };
        }
        Ok(())
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
            f(slot);
        };
        let val = |v: Var| -> &[f64] { &nodes[v.0].value };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b, ma, mb) => {
                acc(*a, &mut |s| g.iter().enumerate().for_each(|(i, &gi)| s[at(ma, i)] += gi));
                acc(*b, &mut |s| g.iter().enumerate().for_each(|(i, &gi)| s[at(mb, i)] += gi));
            }
            Op::Sub(a, b, ma, mb) => {
                acc(*a, &mut |s| g.iter().enumerate().for_each(|(i, &gi)| s[at(ma, i)] += gi));
                acc(*b, &mut |s| g.iter().enumerate().for_each(|(i, &gi)| s[at(mb, i)] -= gi));
            }
            Op::Mul(a, b, ma, mb) => {
                let (va, vb) = (val(*a), val(*b));
                acc(*a, &mut |s| {
                    for (i, &gi) in g.iter().enumerate() {
                        s[at(ma, i)] += gi * vb[at(mb, i)];
                    }
                });
                acc(*b, &mut |s| {
                    for (i, &gi) in g.iter().enumerate() {
                        s[at(mb, i)] += gi * va[at(ma, i)];
                    }
                });
            }
            Op::Div(a, b, ma, mb) => {
                let (va, vb) = (val(*a), val(*b));
                acc(*a, &mut |s| {
                    for (i, &gi) in g.iter().enumerate() {
                        s[at(ma, i)] += gi / vb[at(mb, i)];
                    }
                });
                acc(*b, &mut |s| {
                    for (i, &gi) in g.iter().enumerate() {
                        let y = vb[at(mb, i)];
                        s[at(mb, i)] -= gi * va[at(ma, i)] / (y * y);
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (&nodes[a.0].shape, &nodes[b.0].shape);
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let (va, vb) = (val(*a), val(*b));
                acc(*a, &mut |s| {
                    for i in 0..m {
                        for p in 0..k {
                            let row = &vb[p * n..(p + 1) * n];
                            s[i * k + p] += g[i * n..(i + 1) * n].iter().zip(row).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                });
                acc(*b, &mut |s| {
                    for i in 0..m {
                        for p in 0..k {
                            let x = va[i * k + p];
                            for (o, &gi) in s[p * n..(p + 1) * n].iter_mut().zip(&g[i * n..(i + 1) * n]) {
                                *o += x * gi;
                            }
                        }
                    }
                });
            }
            Op::Conv1d { x, w, stride, pad } => {
                let (sx, sw) = (&nodes[x.0].shape, &nodes[w.0].shape);
                let (n, ci, l) = (sx[0], sx[1], sx[2]);
                let (co, k) = (sw[0], sw[2]);
                let lo = node.shape[2];
                let (vx, vw) = (val(*x), val(*w));
                let each = |f: &mut dyn FnMut(usize, usize, f64)| {
                    for b in 0..n {
                        for o in 0..co {
                            for t in 0..lo {
                                let gi = g[(b * co + o) * lo + t];
                                for c in 0..ci {
                                    for j in 0..k {
                                        let pos = (t * stride + j) as isize - *pad as isize;
                                        if pos >= 0 && (pos as usize) < l {
                                            f((b * ci + c) * l + pos as usize, (o * ci + c) * k + j, gi);
                                        }
                                    }
                                }
                            }
                        }
                    }
                };
                acc(*x, &mut |s| each(&mut |xi, wi, gi| s[xi] += gi * vw[wi]));
                acc(*w, &mut |s| each(&mut |xi, wi, gi| s[wi] += gi * vx[xi]));
            }
            Op::Conv2d { x, w, stride, pad } => {
                let (sx, sw) = (&nodes[x.0].shape, &nodes[w.0].shape);
                let (n, ci, h, wi) = (sx[0], sx[1], sx[2], sx[3]);
                let (co, kh, kw) = (sw[0], sw[2], sw[3]);
                let (ho, wo) = (node.shape[2], node.shape[3]);
                let (vx, vw) = (val(*x), val(*w));
                let each = |f: &mut dyn FnMut(usize, usize, f64)| {
                    for b in 0..n {
                        for o in 0..co {
                            for c in 0..ci {
                                let xbase = (b * ci + c) * h * wi;
                                let wbase = (o * ci + c) * kh * kw;
                                for r in 0..ho {
                                    for q in 0..wo {
                                        let gi = g[((b * co + o) * ho + r) * wo + q];
                                        if gi == 0.0 {
                                            continue;
                                        }
                                        for i in 0..kh {
                                            let y = (r * stride + i) as isize - *pad as isize;
                                            if y < 0 || y as usize >= h {
                                                continue;
                                            }
                                            for j in 0..kw {
                                                let xx = (q * stride + j) as isize - *pad as isize;
                                                if xx >= 0 && (xx as usize) < wi {
                                                    f(xbase + y as usize * wi + xx as usize, wbase + i * kw + j, gi);
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                };
                acc(*x, &mut |s| each(&mut |xi, wj, gi| s[xi] += gi * vw[wj]));
                acc(*w, &mut |s| each(&mut |xi, wj, gi| s[wj] += gi * vx[xi]));
            }
            Op::Relu(a) => {
                let va = val(*a);
                acc(*a, &mut |s| {
                    for i in 0..g.len() {
                        if va[i] > 0.0 {
                            s[i] += g[i];
                        }
                    }
                });
            }
            Op::Softplus(a) => {
                let va = val(*a);
                acc(*a, &mut |s| (0..g.len()).for_each(|i| s[i] += g[i] * sigmoid(va[i])));
            }
            Op::Abs(a) => {
                let va = val(*a);
                acc(*a, &mut |s| {
                    for i in 0..g.len() {
                        if va[i] != 0.0 {
                            s[i] += g[i] * va[i].signum();
                        }
                    }
                });
            }
            Op::Log(a) => {
                let va = val(*a);
                acc(*a, &mut |s| (0..g.len()).for_each(|i| s[i] += g[i] / va[i]));
            }
            Op::Exp(a) => {
                let out = &node.value;
                acc(*a, &mut |s| (0..g.len()).for_each(|i| s[i] += g[i] * out[i]));
            }
            Op::Scale(a, k) => acc(*a, &mut |s| (0..g.len()).for_each(|i| s[i] += g[i] * k)),
            Op::AddScalar(a) | Op::Reshape(a) => {
                acc(*a, &mut |s| (0..g.len()).for_each(|i| s[i] += g[i]))
            }
            Op::Pow(a, p) => {
                let va = val(*a);
                acc(*a, &mut |s| {
                    (0..g.len()).for_each(|i| s[i] += g[i] * p * va[i].powf(p - 1.0))
                });
            }
            Op::ClampMin(a, lo) => {
                let va = val(*a);
                acc(*a, &mut |s| {
                    for i in 0..g.len() {
                        if va[i] > *lo {
                            s[i] += g[i];
                        }
                    }
                });
            }
            Op::Sum(a) => acc(*a, &mut |s| s.iter_mut().for_each(|v| *v += g[0])),
            Op::Mean(a) => {
                acc(*a, &mut |s| {
                    let d = g[0] / s.len() as f64;
                    s.iter_mut().for_each(|v| *v += d)
                });
            }
            Op::Gather(a, idx) | Op::Broadcast(a, idx) => {
                acc(*a, &mut |s| idx.iter().zip(g).for_each(|(&j, &gi)| s[j] += gi));
            }
            Op::Quantize { coeffs, table, rounding } => {
                let (vc, vt) = (val(*coeffs), val(*table));
                let slope = |i: usize| match rounding {
                    Rounding::StraightThrough => 1.0,
                    Rounding::SoftRound { alpha } => soft_round_slope(vc[i] / vt[i], *alpha),
                };
                acc(*coeffs, &mut |s| {
                    (0..g.len()).for_each(|i| s[i] += g[i] * slope(i) / vt[i])
                });
                acc(*table, &mut |s| {
                    (0..g.len()).for_each(|i| s[i] -= g[i] * slope(i) * vc[i] / (vt[i] * vt[i]))
                });
            }
        }
    }
}
