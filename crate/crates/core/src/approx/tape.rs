//! Reverse-mode differentiation over batched tensors.
//!
//! A [`Tape`] records one forward pass. Every node owns its value; parameters enter as
//! leaves tagged with a bank and an offset so that [`Tape::backward`] can scatter their
//! gradients into flat vectors. Nodes that do not depend on any parameter or marked
//! input are skipped during the reverse sweep.

use std::hash::{Hash, Hasher};

use super::kernels;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    pub fn scalar(v: f64) -> Self {
        Self { shape: vec![1], data: vec![v] }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Rows and columns of a 2-D tensor.
    pub fn dims2(&self) -> (usize, usize) {
        debug_assert_eq!(self.shape.len(), 2);
        (self.shape[0], self.shape[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BankId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub h: usize,
    pub w: usize,
    pub ho: usize,
    pub wo: usize,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param { bank: usize, offset: usize },
    Linear { x: Var, w: Var, b: Var },
    Conv { x: Var, w: Var, b: Var, geom: ConvGeom },
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    Softplus(Var),
    Square(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Clamp(Var, f64, f64),
    Min(Var, Var),
    GlobalAvgPool(Var),
    Concat(Var, Var),
    Columns(Var, usize),
    SumCols(Var),
    Mean(Var),
    LogSoftmax(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Clone, Copy)]
struct BankInfo {
    root: usize,
    offset: usize,
    len: usize,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    banks: Vec<BankInfo>,
}

/// Parameter gradients per declared bank, plus marked-input gradients.
#[derive(Debug, Clone)]
pub struct Gradients {
    banks: Vec<Vec<f64>>,
    views: Vec<BankInfo>,
    inputs: Vec<Option<Vec<f64>>>,
    /// Nodes processed by the reverse sweep.
    pub nodes_visited: usize,
}

impl Gradients {
    pub fn bank(&self, id: BankId) -> &[f64] {
        let b = self.views[id.0];
        &self.banks[b.root][b.offset..b.offset + b.len]
    }

    /// Gradient with respect to a node created by [`Tape::input`].
    pub fn input(&self, v: Var) -> Option<&[f64]> {
        self.inputs.get(v.0).and_then(|g| g.as_deref())
    }
}

fn shape2(t: &Tensor) -> (usize, usize) {
    t.dims2()
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

    /// Declares a flat parameter vector of `len` entries.
    pub fn declare_bank(&mut self, len: usize) -> BankId {
        self.banks.push(BankInfo { root: self.banks.len(), offset: 0, len });
        BankId(self.banks.len() - 1)
    }

    /// A window `offset..` of an existing bank; its gradients land in the parent.
    pub fn bank_view(&mut self, parent: BankId, offset: usize) -> BankId {
        let p = self.banks[parent.0];
        assert!(offset <= p.len);
        self.banks.push(BankInfo { root: p.root, offset: p.offset + offset, len: p.len - offset });
        BankId(self.banks.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Constant input; no gradient flows into it.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Input whose gradient is reported by [`Gradients::input`].
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn param(&mut self, bank: BankId, offset: usize, shape: Vec<usize>, data: &[f64]) -> Var {
        let b = self.banks[bank.0];
        assert!(offset + data.len() <= b.len, "parameter slice exceeds its bank");
        self.push(Tensor::new(shape, data.to_vec()), Op::Param { bank: b.root, offset: b.offset + offset }, true)
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (batch, fin) = shape2(self.value(x));
        let (fout, fin_w) = shape2(self.value(w));
        assert_eq!(fin, fin_w, "linear input width");
        let out = kernels::linear_forward(&self.value(x).data, &self.value(w).data, &self.value(b).data, batch, fin, fout);
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        self.push(Tensor::new(vec![batch, fout], out), Op::Linear { x, w, b }, ng)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let xs = &self.value(x).shape;
        let ws = &self.value(w).shape;
        assert_eq!(xs.len(), 4);
        assert_eq!(ws.len(), 4);
        assert_eq!(xs[1], ws[1], "conv input channels");
        assert_eq!(ws[2], ws[3], "square kernels only");
        let (batch, cin, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, k) = (ws[0], ws[2]);
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (wd + 2 * pad - k) / stride + 1;
        let geom = ConvGeom { batch, cin, cout, kernel: k, stride, pad, h, w: wd, ho, wo };
        let out = kernels::conv_forward(&self.value(x).data, &self.value(w).data, &self.value(b).data, &geom);
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        self.push(Tensor::new(vec![batch, cout, ho, wo], out), Op::Conv { x, w, b, geom }, ng)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(x);
        let data = t.data.iter().map(|&v| f(v)).collect();
        let shape = t.shape.clone();
        let ng = self.ng(x);
        self.push(Tensor::new(shape, data), op, ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    /// `ln(1 + e^x)`, evaluated stably.
    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, softplus, Op::Softplus(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        self.unary(x, |v| v * k, Op::Scale(x, k))
    }

    pub fn add_scalar(&mut self, x: Var, k: f64) -> Var {
        self.unary(x, |v| v + k, Op::AddScalar(x))
    }

    /// Clamp with zero gradient outside `[lo, hi]`.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, |v| v.clamp(lo, hi), Op::Clamp(x, lo, hi))
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape, tb.shape, "elementwise operands must share a shape");
        let data = ta.data.iter().zip(&tb.data).map(|(&x, &y)| f(x, y)).collect();
        let shape = ta.shape.clone();
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::new(shape, data), op, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| if y < x { y } else { x }, Op::Min(a, b))
    }

    /// Hash of the branch every non-smooth op took (relu sign, clamp region, min side).
    /// Two evaluations with equal signatures lie on the same smooth piece.
    pub fn branch_signature(&self) -> u64 {
        let mut h = std::hash::DefaultHasher::new();
        for n in &self.nodes {
            match n.op {
                Op::Relu(x) => self.value(x).data.iter().for_each(|&v| (v > 0.0).hash(&mut h)),
                Op::Clamp(x, lo, hi) => self.value(x).data.iter().for_each(|&v| ((v < lo) as u8 + 2 * (v > hi) as u8).hash(&mut h)),
                Op::Min(a, b) => {
                    let tb = &self.value(b).data;
                    self.value(a).data.iter().zip(tb).for_each(|(x, y)| (y < x).hash(&mut h));
                }
                _ => {}
            }
        }
        h.finish()
    }

    /// `[B, C, H, W] -> [B, C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let t = self.value(x);
        assert_eq!(t.shape.len(), 4);
        let (b, c, hw) = (t.shape[0], t.shape[1], t.shape[2] * t.shape[3]);
        let data = t.data.chunks(hw).map(|p| p.iter().sum::<f64>() / hw as f64).collect();
        let ng = self.ng(x);
        self.push(Tensor::new(vec![b, c], data), Op::GlobalAvgPool(x), ng)
    }

    /// Column-wise concatenation of `[B, n]` and `[B, m]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (ba, na) = shape2(self.value(a));
        let (bb, nb) = shape2(self.value(b));
        assert_eq!(ba, bb, "concat batch");
        let (da, db) = (&self.value(a).data, &self.value(b).data);
        let mut data = Vec::with_capacity(ba * (na + nb));
        for n in 0..ba {
            data.extend_from_slice(&da[n * na..(n + 1) * na]);
            data.extend_from_slice(&db[n * nb..(n + 1) * nb]);
        }
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::new(vec![ba, na + nb], data), Op::Concat(a, b), ng)
    }

    /// Columns `start..start + len` of a `[B, n]` tensor.
    pub fn columns(&mut self, x: Var, start: usize, len: usize) -> Var {
        let (b, n) = shape2(self.value(x));
        assert!(start + len <= n);
        let d = &self.value(x).data;
        let mut data = Vec::with_capacity(b * len);
        for r in 0..b {
            data.extend_from_slice(&d[r * n + start..r * n + start + len]);
        }
        let ng = self.ng(x);
        self.push(Tensor::new(vec![b, len], data), Op::Columns(x, start), ng)
    }

    /// `[B, n] -> [B, 1]`.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let (b, n) = shape2(self.value(x));
        let data = self.value(x).data.chunks(n).map(|r| r.iter().sum()).collect();
        let ng = self.ng(x);
        self.push(Tensor::new(vec![b, 1], data), Op::SumCols(x), ng)
    }

    /// Mean over every element, shape `[1]`.
    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let m = t.data.iter().sum::<f64>() / t.numel() as f64;
        let ng = self.ng(x);
        self.push(Tensor::scalar(m), Op::Mean(x), ng)
    }

    /// Row-wise log-softmax of `[B, n]`.
    pub fn log_softmax(&mut self, x: Var) -> Var {
        let (b, n) = shape2(self.value(x));
        let mut data = self.value(x).data.clone();
        for r in 0..b {
            let row = &mut data[r * n..(r + 1) * n];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let ng = self.ng(x);
        self.push(Tensor::new(vec![b, n], data), Op::LogSoftmax(x), ng)
    }

    /// Reverse sweep from a single-element node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::Tape("backward called on an empty tape".into()));
        }
        if loss.0 >= self.nodes.len() {
            return Err(Error::Tape(format!("node {} was not recorded on this tape", loss.0)));
        }
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::Tape("loss must hold exactly one element".into()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut banks: Vec<Vec<f64>> = self
            .banks
            .iter()
            .enumerate()
            .map(|(i, b)| if b.root == i { vec![0.0; b.len] } else { Vec::new() })
            .collect();
        let mut inputs: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        let mut visited = 0;

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            visited += 1;
            let val = &node.value;
            let acc = |grads: &mut Vec<Option<Vec<f64>>>, v: Var, delta: Vec<f64>| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => existing.iter_mut().zip(&delta).for_each(|(e, d)| *e += d),
                    slot => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Leaf => inputs[i] = Some(g),
                Op::Param { bank, offset } => {
                    let dst = &mut banks[*bank][*offset..*offset + g.len()];
                    dst.iter_mut().zip(&g).for_each(|(d, s)| *d += s);
                }
                Op::Linear { x, w, b } => {
                    let (batch, fin) = shape2(self.value(*x));
                    let fout = val.shape[1];
                    let (xv, wv) = (&self.value(*x).data, &self.value(*w).data);
                    if self.ng(*x) {
                        acc(&mut grads, *x, kernels::linear_grad_input(&g, wv, batch, fin, fout));
                    }
                    if self.ng(*w) {
                        acc(&mut grads, *w, kernels::linear_grad_weight(&g, xv, batch, fin, fout));
                    }
                    if self.ng(*b) {
                        let mut gb = vec![0.0; fout];
                        for n in 0..batch {
                            gb.iter_mut().zip(&g[n * fout..(n + 1) * fout]).for_each(|(a, v)| *a += v);
                        }
                        acc(&mut grads, *b, gb);
                    }
                }
                Op::Conv { x, w, b, geom } => {
                    let xv = &self.value(*x).data;
                    let wv = &self.value(*w).data;
                    let out_sz = geom.cout * geom.ho * geom.wo;
                    let (gx, gw) = kernels::conv_backward(&g, xv, wv, geom, self.ng(*x), self.ng(*w));
                    if let Some(gx) = gx {
                        acc(&mut grads, *x, gx);
                    }
                    if let Some(gw) = gw {
                        acc(&mut grads, *w, gw);
                    }
                    if self.ng(*b) {
                        let plane = geom.ho * geom.wo;
                        let mut gb = vec![0.0; geom.cout];
                        for n in 0..geom.batch {
                            for c in 0..geom.cout {
                                let off = n * out_sz + c * plane;
                                gb[c] += g[off..off + plane].iter().sum::<f64>();
                            }
                        }
                        acc(&mut grads, *b, gb);
                    }
                }
                Op::Relu(x) => {
                    let d = g.iter().zip(&val.data).map(|(g, y)| if *y > 0.0 { *g } else { 0.0 }).collect();
                    acc(&mut grads, *x, d);
                }
                Op::Tanh(x) => {
                    let d = g.iter().zip(&val.data).map(|(g, y)| g * (1.0 - y * y)).collect();
                    acc(&mut grads, *x, d);
                }
                Op::Exp(x) => {
                    let d = g.iter().zip(&val.data).map(|(g, y)| g * y).collect();
                    acc(&mut grads, *x, d);
                }
                Op::Softplus(x) => {
                    let xs = &self.value(*x).data;
                    let d = g.iter().zip(xs).map(|(g, x)| g * sigmoid(*x)).collect();
                    acc(&mut grads, *x, d);
                }
                Op::Square(x) => {
                    let xs = &self.value(*x).data;
                    let d = g.iter().zip(xs).map(|(g, x)| 2.0 * g * x).collect();
                    acc(&mut grads, *x, d);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.iter().map(|v| -v).collect());
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.value(*a).data, &self.value(*b).data);
                    if self.ng(*a) {
                        acc(&mut grads, *a, g.iter().zip(bv).map(|(g, b)| g * b).collect());
                    }
                    if self.ng(*b) {
                        acc(&mut grads, *b, g.iter().zip(av).map(|(g, a)| g * a).collect());
                    }
                }
                Op::Scale(x, k) => acc(&mut grads, *x, g.iter().map(|v| v * k).collect()),
                Op::AddScalar(x) => acc(&mut grads, *x, g),
                Op::Clamp(x, lo, hi) => {
                    let xs = &self.value(*x).data;
                    let d = g.iter().zip(xs).map(|(g, x)| if *x >= *lo && *x <= *hi { *g } else { 0.0 }).collect();
                    acc(&mut grads, *x, d);
                }
                Op::Min(a, b) => {
                    let (av, bv) = (&self.value(*a).data, &self.value(*b).data);
                    let pick_b: Vec<bool> = av.iter().zip(bv).map(|(x, y)| y < x).collect();
                    let ga = g.iter().zip(&pick_b).map(|(g, &pb)| if pb { 0.0 } else { *g }).collect();
                    let gb = g.iter().zip(&pick_b).map(|(g, &pb)| if pb { *g } else { 0.0 }).collect();
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::GlobalAvgPool(x) => {
                    let s = &self.value(*x).shape;
                    let hw = s[2] * s[3];
                    let mut d = Vec::with_capacity(s.iter().product());
                    for gv in &g {
                        d.extend(std::iter::repeat(gv / hw as f64).take(hw));
                    }
                    acc(&mut grads, *x, d);
                }
                Op::Concat(a, b) => {
                    let (batch, na) = shape2(self.value(*a));
                    let nb = shape2(self.value(*b)).1;
                    let n = na + nb;
                    let mut ga = Vec::with_capacity(batch * na);
                    let mut gb = Vec::with_capacity(batch * nb);
                    for r in 0..batch {
                        ga.extend_from_slice(&g[r * n..r * n + na]);
                        gb.extend_from_slice(&g[r * n + na..(r + 1) * n]);
                    }
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Columns(x, start) => {
                    let (batch, n) = shape2(self.value(*x));
                    let len = val.shape[1];
                    let mut d = vec![0.0; batch * n];
                    for r in 0..batch {
                        d[r * n + start..r * n + start + len].copy_from_slice(&g[r * len..(r + 1) * len]);
                    }
                    acc(&mut grads, *x, d);
                }
                Op::SumCols(x) => {
                    let (batch, n) = shape2(self.value(*x));
                    let mut d = Vec::with_capacity(batch * n);
                    for gv in g.iter().take(batch) {
                        d.extend(std::iter::repeat(*gv).take(n));
                    }
                    acc(&mut grads, *x, d);
                }
                Op::Mean(x) => {
                    let n = self.value(*x).numel();
                    acc(&mut grads, *x, vec![g[0] / n as f64; n]);
                }
                Op::LogSoftmax(x) => {
                    let (batch, n) = shape2(val);
                    let mut d = vec![0.0; batch * n];
                    for r in 0..batch {
                        let gs: f64 = g[r * n..(r + 1) * n].iter().sum();
                        for j in 0..n {
                            d[r * n + j] = g[r * n + j] - val.data[r * n + j].exp() * gs;
                        }
                    }
                    acc(&mut grads, *x, d);
                }
            }
        }
        Ok(Gradients { banks, views: self.banks.clone(), inputs, nodes_visited: visited })
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    /// Central-difference check of d(loss)/d(params) for a tape builder.
    fn check<F>(n: usize, seed: u64, build: F)
    where
        F: Fn(&mut Tape, BankId, &[f64]) -> Var,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = rand_vec(&mut rng, n);
        let mut tape = Tape::new();
        let bank = tape.declare_bank(n);
        let loss = build(&mut tape, bank, &p);
        let g = tape.backward(loss).unwrap();
        let h = 1e-5;
        for i in 0..n {
            let mut pp = p.clone();
            pp[i] += h;
            let mut t1 = Tape::new();
            let b1 = t1.declare_bank(n);
            let l1 = build(&mut t1, b1, &pp);
            pp[i] -= 2.0 * h;
            let mut t2 = Tape::new();
            let b2 = t2.declare_bank(n);
            let l2 = build(&mut t2, b2, &pp);
            let fd = (t1.value(l1).data[0] - t2.value(l2).data[0]) / (2.0 * h);
            let an = g.bank(bank)[i];
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
            assert!(rel < 1e-4, "param {i}: analytic {an} numeric {fd}");
        }
    }

    #[test]
    fn linear_probe_gradient_is_exact() {
        let c = [0.5, -2.0, 3.25, 1.0];
        let mut tape = Tape::new();
        let bank = tape.declare_bank(4);
        let p = tape.param(bank, 0, vec![1, 4], &[0.1, 0.2, 0.3, 0.4]);
        let cv = tape.constant(Tensor::new(vec![1, 4], c.to_vec()));
        let prod = tape.mul(p, cv);
        let s = tape.sum_cols(prod);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.bank(bank), &c);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut tape = Tape::new();
        let bank = tape.declare_bank(3);
        let _p = tape.param(bank, 0, vec![1, 3], &[1.0, 2.0, 3.0]);
        let c = tape.constant(Tensor::scalar(4.0));
        let g = tape.backward(c).unwrap();
        assert_eq!(g.bank(bank), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn backward_requires_a_recorded_forward() {
        let tape = Tape::new();
        assert!(tape.backward(Var(0)).is_err());
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::new(vec![1, 2], vec![1.0, 2.0]));
        assert!(tape.backward(v).is_err());
    }

    #[test]
    fn each_node_visited_once() {
        let mut tape = Tape::new();
        let bank = tape.declare_bank(2);
        let p = tape.param(bank, 0, vec![1, 2], &[0.3, -0.7]);
        let a = tape.tanh(p);
        let b = tape.mul(a, p);
        let c = tape.add(b, a);
        let l = tape.mean(c);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.nodes_visited, tape.len());
    }

    #[test]
    fn linear_gradcheck() {
        check(3 * 4 + 4, 1, |t, b, p| {
            let x = t.constant(Tensor::new(vec![2, 3], vec![0.3, -0.2, 0.9, 1.1, 0.4, -0.5]));
            let w = t.param(b, 0, vec![4, 3], &p[..12]);
            let bias = t.param(b, 12, vec![4], &p[12..]);
            let y = t.linear(x, w, bias);
            let y = t.tanh(y);
            t.mean(y)
        });
    }

    #[test]
    fn conv_gradcheck_strided_padded() {
        for (k, s, pad) in [(3, 1, 1), (3, 2, 1), (2, 2, 0), (4, 4, 0)] {
            let (cin, cout, h) = (2, 3, 8);
            let nw = cout * cin * k * k;
            check(nw + cout + 2 * cin * h * h, 7 + k as u64 + s as u64, |t, b, p| {
                let x = t.param(b, nw + cout, vec![2, cin, h, h], &p[nw + cout..]);
                let w = t.param(b, 0, vec![cout, cin, k, k], &p[..nw]);
                let bias = t.param(b, nw, vec![cout], &p[nw..nw + cout]);
                let y = t.conv2d(x, w, bias, s, pad);
                let y = t.square(y);
                t.mean(y)
            });
        }
    }

    #[test]
    fn elementwise_gradcheck() {
        check(6, 3, |t, b, p| {
            let a = t.param(b, 0, vec![2, 3], p);
            let e = t.exp(a);
            let sp = t.softplus(a);
            let r = t.relu(a);
            let m = t.min(e, sp);
            let c = t.clamp(a, -0.5, 0.5);
            let x = t.mul(m, c);
            let x = t.add(x, r);
            let x = t.sub(x, sp);
            let x = t.scale(x, 1.7);
            let x = t.add_scalar(x, 0.3);
            let s = t.sum_cols(x);
            let s = t.square(s);
            t.mean(s)
        });
    }

    #[test]
    fn structural_gradcheck() {
        check(2 * 3 * 2 * 2 + 4, 5, |t, b, p| {
            let img = t.param(b, 0, vec![2, 3, 2, 2], &p[..24]);
            let pooled = t.global_avg_pool(img);
            let extra = t.param(b, 24, vec![2, 2], &p[24..]);
            let cat = t.concat(pooled, extra);
            let cols = t.columns(cat, 1, 3);
            let ls = t.log_softmax(cols);
            let ls = t.square(ls);
            t.mean(ls)
        });
    }

    #[test]
    fn pooling_of_uniform_input_is_size_independent() {
        for hw in [1, 3, 8, 17] {
            let mut t = Tape::new();
            let x = t.constant(Tensor::new(vec![1, 2, hw, hw], [vec![0.25; hw * hw], vec![-1.5; hw * hw]].concat()));
            let p = t.global_avg_pool(x);
            assert_eq!(t.value(p).data, vec![0.25, -1.5]);
        }
    }

    #[test]
    fn input_gradient_reported() {
        let mut t = Tape::new();
        let x = t.input(Tensor::new(vec![1, 2], vec![2.0, -3.0]));
        let sq = t.square(x);
        let l = t.mean(sq);
        let g = t.backward(l).unwrap();
        assert_eq!(g.input(x).unwrap(), &[2.0, -3.0]);
    }
}
