//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Values are computed eagerly as nodes are appended; [`Graph::backward`]
//! walks the tape once in reverse and deposits parameter gradients into the
//! [`ParamStore`] the graph was built from.

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param { offset: usize },
    Relu(Var),
    Sum(Vec<Var>),
    /// Multiplication by a scalar node.
    Scale { x: Var, s: Var },
    Sigmoid(Var),
    Depthwise3x3 { x: Var, w: Var },
    Pointwise { x: Var, w: Var, stride: usize },
    Dense { x: Var, w: Var, b: Var },
    /// Per-channel standardisation over batch and space, no affine part.
    BatchNorm(Var),
    GlobalAvgPool(Var),
    CrossEntropy { logits: Var, labels: Vec<usize> },
}

struct Node {
    value: Tensor,
    op: Op,
}

pub struct Graph {
    nodes: Vec<Node>,
    generation: u64,
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn non_finite(op: &str) -> Error {
    Error::Numerical {
        iteration: 0,
        detail: format!("non-finite value produced by {op}"),
    }
}

impl Graph {
    /// A graph whose parameter leaves come from `store` at its current generation.
    pub fn new(store: &ParamStore) -> Self {
        Graph {
            nodes: Vec::new(),
            generation: store.generation(),
        }
    }

    /// A graph with no parameter leaves.
    pub fn detached() -> Self {
        Graph {
            nodes: Vec::new(),
            generation: u64::MAX,
        }
    }

    fn push(&mut self, value: Tensor, op: Op, name: &str) -> Result<Var> {
        if !value.is_finite() {
            return Err(non_finite(name));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Constant, "constant")
    }

    /// Leaf holding `store.values()[offset..offset + len]` reshaped to `shape`.
    pub fn param(&mut self, store: &ParamStore, offset: usize, shape: [usize; 4]) -> Result<Var> {
        let len: usize = shape.iter().product();
        let data = store.values()[offset..offset + len].to_vec();
        self.push(Tensor::from_vec(shape, data)?, Op::Param { offset }, "param")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        self.push(out, Op::Relu(x), "relu")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
        self.push(out, Op::Sigmoid(x), "sigmoid")
    }

    pub fn sum(&mut self, xs: Vec<Var>) -> Result<Var> {
        let first = *xs
            .first()
            .ok_or_else(|| Error::Structural("sum over an empty set of inputs".into()))?;
        let shape = self.value(first).shape();
        let mut out = self.value(first).clone();
        for &x in &xs[1..] {
            let v = self.value(x);
            if v.shape() != shape {
                return Err(Error::shape("sum", format!("{:?} vs {:?}", shape, v.shape())));
            }
            out.data_mut().iter_mut().zip(v.data()).for_each(|(a, b)| *a += b);
        }
        self.push(out, Op::Sum(xs), "sum")
    }

    pub fn scale(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(Error::shape(
                "scale",
                format!("scale factor must be a scalar, got {:?}", self.value(s).shape()),
            ));
        }
        let k = self.value(s).item();
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= k);
        self.push(out, Op::Scale { x, s }, "scale")
    }

    /// Per-channel 3x3 convolution with zero padding; `w` is `(C, 1, 3, 3)`.
    pub fn depthwise3x3(&mut self, x: Var, w: Var) -> Result<Var> {
        let [b, c, h, wd] = self.value(x).shape();
        if self.value(w).shape() != [c, 1, 3, 3] {
            return Err(Error::shape(
                "depthwise3x3",
                format!("input {:?} needs weights [{c}, 1, 3, 3], got {:?}", [b, c, h, wd], self.value(w).shape()),
            ));
        }
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut out = Tensor::zeros([b, c, h, wd]);
        let o = out.data_mut();
        let hw = h * wd;
        let pw = wd + 2;
        let mut pad = vec![0.0; (h + 2) * pw];
        let mut acc = vec![0.0; h * pw];
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * hw;
                fill_padded(&mut pad, &xv[base..base + hw], h, wd);
                acc.iter_mut().for_each(|v| *v = 0.0);
                for t in 0..9 {
                    let k = wv[ci * 9 + t];
                    let off = (t / 3) * pw + t % 3;
                    // acc[q] gathers pad[q + off - 1] for q in 1..h*pw-1.
                    let n = h * pw - 2;
                    let src = &pad[off..off + n];
                    acc[1..1 + n].iter_mut().zip(src).for_each(|(d, s)| *d += k * s);
                }
                for i in 0..h {
                    o[base + i * wd..base + (i + 1) * wd].copy_from_slice(&acc[i * pw + 1..i * pw + 1 + wd]);
                }
            }
        }
        self.push(out, Op::Depthwise3x3 { x, w }, "depthwise3x3")
    }

    /// 1x1 convolution `(Cout, Cin, 1, 1)`, sampling every `stride`-th pixel.
    pub fn pointwise(&mut self, x: Var, w: Var, stride: usize) -> Result<Var> {
        let [b, c, h, wd] = self.value(x).shape();
        let [co, ci, kh, kw] = self.value(w).shape();
        if ci != c || kh != 1 || kw != 1 || stride == 0 {
            return Err(Error::shape(
                "pointwise",
                format!("input {:?}, weights {:?}, stride {stride}", [b, c, h, wd], [co, ci, kh, kw]),
            ));
        }
        let (ho, wo) = (h.div_ceil(stride), wd.div_ceil(stride));
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut out = Tensor::zeros([b, co, ho, wo]);
        let o = out.data_mut();
        if stride == 1 {
            let hw = h * wd;
            for bi in 0..b {
                for oc in 0..co {
                    let dst = &mut o[(bi * co + oc) * hw..(bi * co + oc + 1) * hw];
                    for ic in 0..c {
                        let k = wv[oc * c + ic];
                        let src = &xv[(bi * c + ic) * hw..(bi * c + ic + 1) * hw];
                        dst.iter_mut().zip(src).for_each(|(d, s)| *d += k * s);
                    }
                }
            }
            return self.push(out, Op::Pointwise { x, w, stride }, "pointwise");
        }
        for bi in 0..b {
            for oc in 0..co {
                let wrow = &wv[oc * c..oc * c + c];
                for i in 0..ho {
                    for j in 0..wo {
                        let mut acc = 0.0;
                        for (ic, wk) in wrow.iter().enumerate() {
                            acc += wk * xv[((bi * c + ic) * h + i * stride) * wd + j * stride];
                        }
                        o[((bi * co + oc) * ho + i) * wo + j] = acc;
                    }
                }
            }
        }
        self.push(out, Op::Pointwise { x, w, stride }, "pointwise")
    }

    /// Affine map over flattened samples: `w` is `(Fout, Fin, 1, 1)`, `b` is
    /// `(Fout, 1, 1, 1)`; the result takes per-sample shape `out`.
    pub fn dense(&mut self, x: Var, w: Var, bias: Var, out: [usize; 3]) -> Result<Var> {
        let xs = self.value(x);
        let (batch, fin) = (xs.batch(), xs.sample_len());
        let [fo, fi, _, _] = self.value(w).shape();
        if fi != fin || self.value(bias).len() != fo || out.iter().product::<usize>() != fo {
            return Err(Error::shape(
                "dense",
                format!(
                    "input {:?}, weights {:?}, bias {:?}, output {out:?}",
                    xs.shape(),
                    self.value(w).shape(),
                    self.value(bias).shape()
                ),
            ));
        }
        let xv = xs.data();
        let wv = self.value(w).data();
        let bv = self.value(bias).data();
        let mut res = Tensor::zeros([batch, out[0], out[1], out[2]]);
        let o = res.data_mut();
        for bi in 0..batch {
            let xrow = &xv[bi * fin..(bi + 1) * fin];
            for k in 0..fo {
                let wrow = &wv[k * fin..(k + 1) * fin];
                o[bi * fo + k] = bv[k] + wrow.iter().zip(xrow).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        self.push(res, Op::Dense { x, w, b: bias }, "dense")
    }

    /// `(x - mean_c) / sqrt(var_c + eps)` with batch statistics per channel.
    pub fn batch_norm(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let [b, c, h, w] = xv.shape();
        let mut out = Tensor::zeros(xv.shape());
        for ci in 0..c {
            let (mean, inv) = channel_stats(xv, ci);
            for bi in 0..b {
                let base = (bi * c + ci) * h * w;
                for k in base..base + h * w {
                    out.data_mut()[k] = (xv.data()[k] - mean) * inv;
                }
            }
        }
        self.push(out, Op::BatchNorm(x), "batch_norm")
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let [b, c, h, w] = self.value(x).shape();
        let hw = h * w;
        let xv = self.value(x).data();
        let mut out = Tensor::zeros([b, c, 1, 1]);
        for (k, o) in out.data_mut().iter_mut().enumerate() {
            *o = xv[k * hw..(k + 1) * hw].iter().sum::<f64>() / hw as f64;
        }
        self.push(out, Op::GlobalAvgPool(x), "global_avg_pool")
    }

    /// Mean softmax cross-entropy of `(batch, classes, 1, 1)` logits.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        let (b, k) = (lv.batch(), lv.sample_len());
        if labels.len() != b || labels.iter().any(|&y| y >= k) {
            return Err(Error::shape(
                "cross_entropy",
                format!("{} labels for logits {:?}", labels.len(), lv.shape()),
            ));
        }
        let mut total = 0.0;
        for (bi, &y) in labels.iter().enumerate() {
            let row = &lv.data()[bi * k..(bi + 1) * k];
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            total += lse - row[y];
        }
        self.push(
            Tensor::scalar(total / b as f64),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
            },
            "cross_entropy",
        )
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn gradients(&self, loss: Var) -> Result<Vec<Option<Tensor>>> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape("backward", "loss must be a scalar"));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        fn acc(grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut [f64]), shape: [usize; 4]) {
            let g = grads[v.0].get_or_insert_with(|| Tensor::zeros(shape));
            f(g.data_mut());
        }

        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant | Op::Param { .. } => {}
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    acc(
                        &mut grads,
                        *x,
                        |g| {
                            for ((gi, d), xi) in g.iter_mut().zip(dy.data()).zip(xv.data()) {
                                if *xi > 0.0 {
                                    *gi += d;
                                }
                            }
                        },
                        xv.shape(),
                    );
                }
                Op::Sigmoid(x) => {
                    let y = &node.value;
                    acc(
                        &mut grads,
                        *x,
                        |g| {
                            for ((gi, d), yi) in g.iter_mut().zip(dy.data()).zip(y.data()) {
                                *gi += d * yi * (1.0 - yi);
                            }
                        },
                        y.shape(),
                    );
                }
                Op::Sum(xs) => {
                    for &x in xs {
                        acc(
                            &mut grads,
                            x,
                            |g| g.iter_mut().zip(dy.data()).for_each(|(a, b)| *a += b),
                            dy.shape(),
                        );
                    }
                }
                Op::Scale { x, s } => {
                    let k = self.value(*s).item();
                    let xv = self.value(*x);
                    let ds: f64 = xv.data().iter().zip(dy.data()).map(|(a, b)| a * b).sum();
                    acc(
                        &mut grads,
                        *x,
                        |g| g.iter_mut().zip(dy.data()).for_each(|(a, b)| *a += k * b),
                        xv.shape(),
                    );
                    acc(&mut grads, *s, |g| g[0] += ds, [1, 1, 1, 1]);
                }
                Op::Depthwise3x3 { x, w } => {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    let [b, c, h, wd] = xv.shape();
                    let mut dx = vec![0.0; xv.len()];
                    let mut dw = vec![0.0; wv.len()];
                    let d = dy.data();
                    let hw = h * wd;
                    let pw = wd + 2;
                    let n = h * pw - 2;
                    let mut pad = vec![0.0; (h + 2) * pw];
                    let mut dpad = vec![0.0; (h + 2) * pw];
                    let mut gacc = vec![0.0; h * pw];
                    for bi in 0..b {
                        for ci in 0..c {
                            let base = (bi * c + ci) * hw;
                            fill_padded(&mut pad, &xv.data()[base..base + hw], h, wd);
                            for i in 0..h {
                                gacc[i * pw + 1..i * pw + 1 + wd].copy_from_slice(&d[base + i * wd..base + (i + 1) * wd]);
                            }
                            dpad.iter_mut().for_each(|v| *v = 0.0);
                            for t in 0..9 {
                                let kk = ci * 9 + t;
                                let k = wv.data()[kk];
                                let off = (t / 3) * pw + t % 3;
                                let g = &gacc[1..1 + n];
                                dw[kk] += g.iter().zip(&pad[off..off + n]).map(|(a, b)| a * b).sum::<f64>();
                                dpad[off..off + n].iter_mut().zip(g).for_each(|(t, gv)| *t += k * gv);
                            }
                            for i in 0..h {
                                let row = (i + 1) * pw + 1;
                                dx[base + i * wd..base + (i + 1) * wd].copy_from_slice(&dpad[row..row + wd]);
                            }
                        }
                    }
                    acc(&mut grads, *x, |g| add_into(g, &dx), xv.shape());
                    acc(&mut grads, *w, |g| add_into(g, &dw), wv.shape());
                }
                Op::Pointwise { x, w, stride } => {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    let [b, c, h, wd] = xv.shape();
                    let [_, co, ho, wo] = dy.shape();
                    let mut dx = vec![0.0; xv.len()];
                    let mut dw = vec![0.0; wv.len()];
                    let d = dy.data();
                    if *stride == 1 {
                        let hw = h * wd;
                        for bi in 0..b {
                            for oc in 0..co {
                                let g = &d[(bi * co + oc) * hw..(bi * co + oc + 1) * hw];
                                for ic in 0..c {
                                    let at = (bi * c + ic) * hw;
                                    let k = wv.data()[oc * c + ic];
                                    let xs = &xv.data()[at..at + hw];
                                    dw[oc * c + ic] += g.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
                                    dx[at..at + hw].iter_mut().zip(g).for_each(|(t, gv)| *t += k * gv);
                                }
                            }
                        }
                    }
                    for bi in 0..b {
                        if *stride == 1 {
                            break;
                        }
                        for oc in 0..co {
                            for i in 0..ho {
                                for j in 0..wo {
                                    let g = d[((bi * co + oc) * ho + i) * wo + j];
                                    for ic in 0..c {
                                        let xi = ((bi * c + ic) * h + i * stride) * wd + j * stride;
                                        dx[xi] += wv.data()[oc * c + ic] * g;
                                        dw[oc * c + ic] += xv.data()[xi] * g;
                                    }
                                }
                            }
                        }
                    }
                    acc(&mut grads, *x, |g| add_into(g, &dx), xv.shape());
                    acc(&mut grads, *w, |g| add_into(g, &dw), wv.shape());
                }
                Op::Dense { x, w, b: bias } => {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    let (batch, fin) = (xv.batch(), xv.sample_len());
                    let fo = dy.sample_len();
                    let mut dx = vec![0.0; xv.len()];
                    let mut dw = vec![0.0; wv.len()];
                    let mut db = vec![0.0; fo];
                    let d = dy.data();
                    for bi in 0..batch {
                        for k in 0..fo {
                            let g = d[bi * fo + k];
                            db[k] += g;
                            for f in 0..fin {
                                dx[bi * fin + f] += wv.data()[k * fin + f] * g;
                                dw[k * fin + f] += xv.data()[bi * fin + f] * g;
                            }
                        }
                    }
                    let bshape = self.value(*bias).shape();
                    acc(&mut grads, *x, |g| add_into(g, &dx), xv.shape());
                    acc(&mut grads, *w, |g| add_into(g, &dw), wv.shape());
                    acc(&mut grads, *bias, |g| add_into(g, &db), bshape);
                }
                Op::BatchNorm(x) => {
                    let xv = self.value(*x);
                    let y = &node.value;
                    let [b, c, h, w] = xv.shape();
                    let m = (b * h * w) as f64;
                    let mut dx = vec![0.0; xv.len()];
                    let d = dy.data();
                    for ci in 0..c {
                        let (_, inv) = channel_stats(xv, ci);
                        let idx = (0..b).flat_map(|bi| {
                            let base = (bi * c + ci) * h * w;
                            base..base + h * w
                        });
                        let (mut sd, mut sdy) = (0.0, 0.0);
                        for k in idx.clone() {
                            sd += d[k];
                            sdy += d[k] * y.data()[k];
                        }
                        for k in idx {
                            dx[k] = inv * (d[k] - sd / m - y.data()[k] * sdy / m);
                        }
                    }
                    acc(&mut grads, *x, |g| add_into(g, &dx), xv.shape());
                }
                Op::GlobalAvgPool(x) => {
                    let xv = self.value(*x);
                    let [_, _, h, w] = xv.shape();
                    let hw = h * w;
                    acc(
                        &mut grads,
                        *x,
                        |g| {
                            for (k, d) in dy.data().iter().enumerate() {
                                g[k * hw..(k + 1) * hw].iter_mut().for_each(|v| *v += d / hw as f64);
                            }
                        },
                        xv.shape(),
                    );
                }
                Op::CrossEntropy { logits, labels } => {
                    let lv = self.value(*logits);
                    let (b, k) = (lv.batch(), lv.sample_len());
                    let scale = dy.item() / b as f64;
                    let mut dl = vec![0.0; lv.len()];
                    for (bi, &y) in labels.iter().enumerate() {
                        let row = &lv.data()[bi * k..(bi + 1) * k];
                        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
                        for c in 0..k {
                            let p = (row[c] - m).exp() / z;
                            dl[bi * k + c] = scale * (p - if c == y { 1.0 } else { 0.0 });
                        }
                    }
                    acc(&mut grads, *logits, |g| add_into(g, &dl), lv.shape());
                }
            }
            grads[idx] = Some(dy);
        }
        Ok(grads)
    }

    /// Back-propagates `loss` and writes parameter gradients into `store`.
    ///
    /// Every parameter read by this graph is marked as participating; all
    /// others keep a zero gradient.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        if store.generation() != self.generation {
            return Err(Error::StaleGraph);
        }
        let grads = self.gradients(loss)?;
        store.zero_grad();
        for (node, g) in self.nodes.iter().zip(grads) {
            if let Op::Param { offset } = node.op {
                let len = node.value.len();
                store.mark_participating(offset, len);
                if let Some(g) = g {
                    if !g.is_finite() {
                        return Err(non_finite("backward"));
                    }
                    store.accumulate_grad(offset, g.data());
                }
            }
        }
        Ok(())
    }
}

/// Writes `plane` (`h x w`) into the interior of a zero-bordered buffer.
fn fill_padded(pad: &mut [f64], plane: &[f64], h: usize, w: usize) {
    let pw = w + 2;
    for i in 0..h {
        pad[(i + 1) * pw + 1..(i + 1) * pw + 1 + w].copy_from_slice(&plane[i * w..(i + 1) * w]);
    }
}

pub(crate) const BN_EPS: f64 = 1e-5;

/// Mean and inverse standard deviation of channel `ci` over batch and space.
fn channel_stats(x: &Tensor, ci: usize) -> (f64, f64) {
    let [b, c, h, w] = x.shape();
    let hw = h * w;
    let m = (b * hw) as f64;
    let chunk = |bi: usize| &x.data()[(bi * c + ci) * hw..(bi * c + ci + 1) * hw];
    let mean = (0..b).map(|bi| chunk(bi).iter().sum::<f64>()).sum::<f64>() / m;
    let var = (0..b)
        .map(|bi| chunk(bi).iter().map(|v| (v - mean).powi(2)).sum::<f64>())
        .sum::<f64>()
        / m;
    (mean, 1.0 / (var + BN_EPS).sqrt())
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}
