//! Elementwise, broadcasting, shape and reduction operations.

use super::graph::{BackCtx, Var};
use super::tensor::{gemm, Scalar, Tensor};
use crate::error::{Error, Result};

fn unary<'g, S: Scalar>(
    x: Var<'g, S>,
    f: impl Fn(S) -> S + 'static,
    df: impl Fn(S, S) -> S + 'static,
) -> Var<'g, S> {
    // df(input, output) -> local derivative
    x.graph
        .op(
            &[x],
            |v| Ok(v[0].map(&f)),
            Box::new(move |c: &BackCtx<'_, S>| {
                let g = c
                    .grad
                    .data()
                    .iter()
                    .zip(c.inputs[0].data().iter().zip(c.output.data()))
                    .map(|(&g, (&x, &y))| g * df(x, y))
                    .collect();
                vec![Some(Tensor::new(c.grad.shape().to_vec(), g).unwrap())]
            }),
        )
        .expect("unary ops cannot fail")
}

fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

impl<'g, S: Scalar> Var<'g, S> {
    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        let shape = shape.to_vec();
        self.graph.op(
            &[self],
            |v| v[0].clone().reshape(&shape),
            Box::new(|c: &BackCtx<'_, S>| {
                vec![Some(c.grad.clone().reshape(c.inputs[0].shape()).unwrap())]
            }),
        )
    }

    pub fn permute(self, axes: &[usize]) -> Result<Self> {
        let axes = axes.to_vec();
        let mut inverse = vec![0; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            if a < inverse.len() {
                inverse[a] = i;
            }
        }
        self.graph.op(
            &[self],
            |v| v[0].permute(&axes),
            Box::new(move |c: &BackCtx<'_, S>| vec![Some(c.grad.permute(&inverse).unwrap())]),
        )
    }

    pub fn add(self, other: Self) -> Result<Self> {
        self.graph.op(
            &[self, other],
            |v| v[0].zip_map(v[1], |a, b| a + b),
            Box::new(|c: &BackCtx<'_, S>| {
                vec![
                    c.needs[0].then(|| c.grad.clone()),
                    c.needs[1].then(|| c.grad.clone()),
                ]
            }),
        )
    }

    pub fn sub(self, other: Self) -> Result<Self> {
        self.graph.op(
            &[self, other],
            |v| v[0].zip_map(v[1], |a, b| a - b),
            Box::new(|c: &BackCtx<'_, S>| {
                vec![
                    c.needs[0].then(|| c.grad.clone()),
                    c.needs[1].then(|| c.grad.map(|g| -g)),
                ]
            }),
        )
    }

    pub fn mul(self, other: Self) -> Result<Self> {
        self.graph.op(
            &[self, other],
            |v| v[0].zip_map(v[1], |a, b| a * b),
            Box::new(|c: &BackCtx<'_, S>| {
                vec![
                    c.needs[0].then(|| c.grad.zip_map(c.inputs[1], |g, b| g * b).unwrap()),
                    c.needs[1].then(|| c.grad.zip_map(c.inputs[0], |g, a| g * a).unwrap()),
                ]
            }),
        )
    }

    /// `self + y` where `y`'s shape equals the trailing dims of `self`.
    pub fn add_trailing(self, y: Self) -> Result<Self> {
        let (xs, ys) = (self.shape(), y.shape());
        if ys.len() > xs.len() || xs[xs.len() - ys.len()..] != ys[..] {
            return Err(Error::shape(format!("cannot broadcast {ys:?} onto {xs:?}")));
        }
        self.graph.op(
            &[self, y],
            |v| {
                let inner = v[1].numel();
                let mut out = v[0].clone();
                for chunk in out.data_mut().chunks_mut(inner) {
                    for (o, &b) in chunk.iter_mut().zip(v[1].data()) {
                        *o = *o + b;
                    }
                }
                Ok(out)
            },
            Box::new(|c: &BackCtx<'_, S>| {
                let gy = c.needs[1].then(|| {
                    let mut acc = Tensor::zeros(c.inputs[1].shape());
                    let inner = acc.numel();
                    for chunk in c.grad.data().chunks(inner) {
                        for (a, &g) in acc.data_mut().iter_mut().zip(chunk) {
                            *a = *a + g;
                        }
                    }
                    acc
                });
                vec![c.needs[0].then(|| c.grad.clone()), gy]
            }),
        )
    }

    /// `self * y` where `y`'s shape equals the trailing dims of `self`.
    pub fn mul_trailing(self, y: Self) -> Result<Self> {
        let (xs, ys) = (self.shape(), y.shape());
        if ys.len() > xs.len() || xs[xs.len() - ys.len()..] != ys[..] {
            return Err(Error::shape(format!("cannot broadcast {ys:?} onto {xs:?}")));
        }
        self.graph.op(
            &[self, y],
            |v| {
                let inner = v[1].numel();
                let mut out = v[0].clone();
                for chunk in out.data_mut().chunks_mut(inner) {
                    for (o, &b) in chunk.iter_mut().zip(v[1].data()) {
                        *o = *o * b;
                    }
                }
                Ok(out)
            },
            Box::new(|c: &BackCtx<'_, S>| {
                let y = c.inputs[1];
                let inner = y.numel();
                let gx = c.needs[0].then(|| {
                    let mut gx = c.grad.clone();
                    for chunk in gx.data_mut().chunks_mut(inner) {
                        for (o, &b) in chunk.iter_mut().zip(y.data()) {
                            *o = *o * b;
                        }
                    }
                    gx
                });
                let gy = c.needs[1].then(|| {
                    let mut acc = Tensor::zeros(y.shape());
                    for (gc, xc) in c
                        .grad
                        .data()
                        .chunks(inner)
                        .zip(c.inputs[0].data().chunks(inner))
                    {
                        for ((a, &g), &x) in acc.data_mut().iter_mut().zip(gc).zip(xc) {
                            *a = *a + g * x;
                        }
                    }
                    acc
                });
                vec![gx, gy]
            }),
        )
    }

    /// Adaptive normalization modulation: `x * (1 + scale) + shift` with
    /// `x: [B, ..., D]` and `shift, scale: [B, D]`.
    pub fn modulate(self, shift: Self, scale: Self) -> Result<Self> {
        let xs = self.shape();
        let (b, d) = (xs[0], *xs.last().unwrap());
        for v in [shift, scale] {
            if v.shape() != [b, d] {
                return Err(Error::shape(format!(
                    "modulation {:?} does not match {xs:?}",
                    v.shape()
                )));
            }
        }
        self.graph.op(
            &[self, shift, scale],
            move |v| {
                let mut out = v[0].clone();
                let per = out.numel() / b;
                for (bi, chunk) in out.data_mut().chunks_mut(per).enumerate() {
                    let sh = &v[1].data()[bi * d..(bi + 1) * d];
                    let sc = &v[2].data()[bi * d..(bi + 1) * d];
                    for row in chunk.chunks_mut(d) {
                        for j in 0..d {
                            row[j] = row[j] * (S::one() + sc[j]) + sh[j];
                        }
                    }
                }
                Ok(out)
            },
            Box::new(move |c: &BackCtx<'_, S>| {
                let per = c.grad.numel() / b;
                let mut gx = c.grad.clone();
                let mut gsh = Tensor::zeros(&[b, d]);
                let mut gsc = Tensor::zeros(&[b, d]);
                for bi in 0..b {
                    let sc = &c.inputs[2].data()[bi * d..(bi + 1) * d];
                    let gchunk = &c.grad.data()[bi * per..(bi + 1) * per];
                    let xchunk = &c.inputs[0].data()[bi * per..(bi + 1) * per];
                    for (gr, xr) in gchunk.chunks(d).zip(xchunk.chunks(d)) {
                        for j in 0..d {
                            gsh.data_mut()[bi * d + j] = gsh.data()[bi * d + j] + gr[j];
                            gsc.data_mut()[bi * d + j] = gsc.data()[bi * d + j] + gr[j] * xr[j];
                        }
                    }
                    for row in gx.data_mut()[bi * per..(bi + 1) * per].chunks_mut(d) {
                        for j in 0..d {
                            row[j] = row[j] * (S::one() + sc[j]);
                        }
                    }
                }
                vec![
                    c.needs[0].then_some(gx),
                    c.needs[1].then_some(gsh),
                    c.needs[2].then_some(gsc),
                ]
            }),
        )
    }

    /// Per-sample channel gate: `x * gate` with `x: [B, ..., D]`, `gate: [B, D]`.
    pub fn gate(self, gate: Self) -> Result<Self> {
        let xs = self.shape();
        let (b, d) = (xs[0], *xs.last().unwrap());
        if gate.shape() != [b, d] {
            return Err(Error::shape(format!(
                "gate {:?} does not match {xs:?}",
                gate.shape()
            )));
        }
        self.graph.op(
            &[self, gate],
            move |v| {
                let mut out = v[0].clone();
                let per = out.numel() / b;
                for (bi, chunk) in out.data_mut().chunks_mut(per).enumerate() {
                    let gt = &v[1].data()[bi * d..(bi + 1) * d];
                    for row in chunk.chunks_mut(d) {
                        for j in 0..d {
                            row[j] = row[j] * gt[j];
                        }
                    }
                }
                Ok(out)
            },
            Box::new(move |c: &BackCtx<'_, S>| {
                let per = c.grad.numel() / b;
                let mut gx = c.grad.clone();
                let mut gg = Tensor::zeros(&[b, d]);
                for bi in 0..b {
                    let gt = &c.inputs[1].data()[bi * d..(bi + 1) * d];
                    let gchunk = &c.grad.data()[bi * per..(bi + 1) * per];
                    let xchunk = &c.inputs[0].data()[bi * per..(bi + 1) * per];
                    for (gr, xr) in gchunk.chunks(d).zip(xchunk.chunks(d)) {
                        for j in 0..d {
                            gg.data_mut()[bi * d + j] = gg.data()[bi * d + j] + gr[j] * xr[j];
                        }
                    }
                    for row in gx.data_mut()[bi * per..(bi + 1) * per].chunks_mut(d) {
                        for j in 0..d {
                            row[j] = row[j] * gt[j];
                        }
                    }
                }
                vec![c.needs[0].then_some(gx), c.needs[1].then_some(gg)]
            }),
        )
    }

    /// `x @ w (+ b)` over the last axis of `x`; `w: [in, out]`.
    pub fn linear(self, w: Self, b: Option<Self>) -> Result<Self> {
        let xs = self.shape();
        let ws = w.shape();
        let din = *xs.last().ok_or_else(|| Error::shape("linear on a scalar"))?;
        if ws.len() != 2 || ws[0] != din {
            return Err(Error::shape(format!("linear weight {ws:?} vs input {xs:?}")));
        }
        let dout = ws[1];
        if let Some(b) = b {
            if b.shape() != [dout] {
                return Err(Error::shape(format!("linear bias {:?}", b.shape())));
            }
        }
        let rows = xs.iter().product::<usize>() / din;
        let mut out_shape = xs.clone();
        *out_shape.last_mut().unwrap() = dout;
        let inputs: Vec<Var<'g, S>> = match b {
            Some(b) => vec![self, w, b],
            None => vec![self, w],
        };
        self.graph.op(
            &inputs,
            move |v| {
                let mut out = vec![S::zero(); rows * dout];
                if let Some(bias) = v.get(2) {
                    for row in out.chunks_mut(dout) {
                        row.copy_from_slice(bias.data());
                    }
                }
                let beta = if v.len() == 3 { S::one() } else { S::zero() };
                gemm(rows, din, dout, S::one(), v[0].data(), false, v[1].data(), false, beta, &mut out);
                Tensor::new(out_shape, out)
            },
            Box::new(move |c: &BackCtx<'_, S>| {
                let g = c.grad.data();
                let gx = c.needs[0].then(|| {
                    let mut gx = vec![S::zero(); rows * din];
                    gemm(rows, dout, din, S::one(), g, false, c.inputs[1].data(), true, S::zero(), &mut gx);
                    Tensor::new(c.inputs[0].shape().to_vec(), gx).unwrap()
                });
                let gw = c.needs[1].then(|| {
                    let mut gw = vec![S::zero(); din * dout];
                    gemm(din, rows, dout, S::one(), c.inputs[0].data(), true, g, false, S::zero(), &mut gw);
                    Tensor::new(vec![din, dout], gw).unwrap()
                });
                let mut out = vec![gx, gw];
                if c.inputs.len() == 3 {
                    out.push(c.needs[2].then(|| {
                        let mut gb = vec![S::zero(); dout];
                        for row in g.chunks(dout) {
                            for (a, &r) in gb.iter_mut().zip(row) {
                                *a = *a + r;
                            }
                        }
                        Tensor::new(vec![dout], gb).unwrap()
                    }));
                }
                out
            }),
        )
    }

    /// Normalizes over the last axis (no affine part).
    pub fn layer_norm(self, eps: f64) -> Self {
        let eps = S::lit(eps);
        self.graph
            .op(
                &[self],
                move |v| {
                    let d = *v[0].shape().last().unwrap();
                    let mut out = v[0].clone();
                    for row in out.data_mut().chunks_mut(d) {
                        let (mean, inv) = moments(row, eps);
                        for x in row.iter_mut() {
                            *x = (*x - mean) * inv;
                        }
                    }
                    Ok(out)
                },
                Box::new(move |c: &BackCtx<'_, S>| {
                    let d = *c.grad.shape().last().unwrap();
                    let dn = S::lit(d as f64);
                    let mut gx = c.grad.clone();
                    for ((grow, xrow), yrow) in gx
                        .data_mut()
                        .chunks_mut(d)
                        .zip(c.inputs[0].data().chunks(d))
                        .zip(c.output.data().chunks(d))
                    {
                        let (_, inv) = moments(xrow, eps);
                        let gmean = grow.iter().copied().sum::<S>() / dn;
                        let gymean = grow.iter().zip(yrow).map(|(&g, &y)| g * y).sum::<S>() / dn;
                        for (g, &y) in grow.iter_mut().zip(yrow) {
                            *g = inv * (*g - gmean - y * gymean);
                        }
                    }
                    vec![Some(gx)]
                }),
            )
            .expect("layer norm cannot fail")
    }

    pub fn silu(self) -> Self {
        unary(
            self,
            |x| x * sigmoid(x),
            |x, _| {
                let s = sigmoid(x);
                s * (S::one() + x * (S::one() - s))
            },
        )
    }

    /// Tanh-approximated GELU.
    pub fn gelu(self) -> Self {
        let c = S::lit(GELU_C);
        let a = S::lit(0.044715);
        let half = S::lit(0.5);
        let three = S::lit(3.0);
        unary(
            self,
            move |x| half * x * (S::one() + (c * (x + a * x * x * x)).tanh()),
            move |x, _| {
                let th = (c * (x + a * x * x * x)).tanh();
                half * (S::one() + th)
                    + half * x * (S::one() - th * th) * c * (S::one() + three * a * x * x)
            },
        )
    }

    pub fn relu(self) -> Self {
        unary(
            self,
            |x| x.max(S::zero()),
            |x, _| if x > S::zero() { S::one() } else { S::zero() },
        )
    }

    pub fn exp(self) -> Self {
        unary(self, |x| x.exp(), |_, y| y)
    }

    pub fn square(self) -> Self {
        unary(self, |x| x * x, |x, _| x + x)
    }

    pub fn scale(self, k: f64) -> Self {
        let k = S::lit(k);
        unary(self, move |x| x * k, move |_, _| k)
    }

    pub fn add_scalar(self, k: f64) -> Self {
        let k = S::lit(k);
        unary(self, move |x| x + k, |_, _| S::one())
    }

    /// Clamp with zero gradient outside `[lo, hi]`.
    pub fn clamp(self, lo: f64, hi: f64) -> Self {
        let (lo, hi) = (S::lit(lo), S::lit(hi));
        unary(
            self,
            move |x| x.max(lo).min(hi),
            move |x, _| {
                if x >= lo && x <= hi {
                    S::one()
                } else {
                    S::zero()
                }
            },
        )
    }

    /// Concatenates along `axis`; all other dims must agree.
    pub fn concat(vars: &[Self], axis: usize) -> Result<Self> {
        let first = vars
            .first()
            .ok_or_else(|| Error::shape("concat of zero tensors"))?;
        let base = first.shape();
        let mut sizes = Vec::with_capacity(vars.len());
        for v in vars {
            let s = v.shape();
            if s.len() != base.len()
                || axis >= s.len()
                || s.iter()
                    .zip(&base)
                    .enumerate()
                    .any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(Error::shape(format!("cannot concat {s:?} with {base:?} on axis {axis}")));
            }
            sizes.push(s[axis]);
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let total: usize = sizes.iter().sum();
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let sizes_b = sizes.clone();
        first.graph.op(
            vars,
            move |v| {
                let mut out = Vec::with_capacity(outer * total * inner);
                for o in 0..outer {
                    for (t, &sz) in v.iter().zip(&sizes) {
                        out.extend_from_slice(&t.data()[o * sz * inner..(o + 1) * sz * inner]);
                    }
                }
                Tensor::new(out_shape, out)
            },
            Box::new(move |c: &BackCtx<'_, S>| {
                let mut offsets = Vec::with_capacity(sizes_b.len());
                let mut acc = 0;
                for &sz in &sizes_b {
                    offsets.push(acc);
                    acc += sz;
                }
                sizes_b
                    .iter()
                    .zip(&offsets)
                    .enumerate()
                    .map(|(i, (&sz, &off))| {
                        c.needs[i].then(|| {
                            let mut g = Vec::with_capacity(outer * sz * inner);
                            for o in 0..outer {
                                let start = (o * total + off) * inner;
                                g.extend_from_slice(&c.grad.data()[start..start + sz * inner]);
                            }
                            Tensor::new(c.inputs[i].shape().to_vec(), g).unwrap()
                        })
                    })
                    .collect()
            }),
        )
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Result<Self> {
        let s = self.shape();
        if axis >= s.len() || start + len > s[axis] {
            return Err(Error::shape(format!(
                "narrow({axis}, {start}, {len}) out of range for {s:?}"
            )));
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let full = s[axis];
        let mut out_shape = s.clone();
        out_shape[axis] = len;
        self.graph.op(
            &[self],
            move |v| {
                let mut out = Vec::with_capacity(outer * len * inner);
                for o in 0..outer {
                    let base = (o * full + start) * inner;
                    out.extend_from_slice(&v[0].data()[base..base + len * inner]);
                }
                Tensor::new(out_shape, out)
            },
            Box::new(move |c: &BackCtx<'_, S>| {
                let mut g = Tensor::zeros(c.inputs[0].shape());
                for o in 0..outer {
                    let base = (o * full + start) * inner;
                    g.data_mut()[base..base + len * inner]
                        .copy_from_slice(&c.grad.data()[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(g)]
            }),
        )
    }

    pub fn sum_all(self) -> Self {
        self.graph
            .op(
                &[self],
                |v| Ok(Tensor::scalar(v[0].sum())),
                Box::new(|c: &BackCtx<'_, S>| {
                    vec![Some(Tensor::full(c.inputs[0].shape(), c.grad.item()))]
                }),
            )
            .expect("sum cannot fail")
    }

    pub fn mean_all(self) -> Self {
        self.graph
            .op(
                &[self],
                |v| Ok(Tensor::scalar(v[0].mean())),
                Box::new(|c: &BackCtx<'_, S>| {
                    let n = S::lit(c.inputs[0].numel() as f64);
                    vec![Some(Tensor::full(c.inputs[0].shape(), c.grad.item() / n))]
                }),
            )
            .expect("mean cannot fail")
    }

    /// Mean squared difference over all elements.
    pub fn mse(self, target: Self) -> Result<Self> {
        self.graph.op(
            &[self, target],
            |v| {
                v[0].expect_shape(v[1].shape())?;
                let n = S::lit(v[0].numel() as f64);
                let s: S = v[0]
                    .data()
                    .iter()
                    .zip(v[1].data())
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum();
                Ok(Tensor::scalar(s / n))
            },
            Box::new(|c: &BackCtx<'_, S>| {
                let n = S::lit(c.inputs[0].numel() as f64);
                let k = c.grad.item() * S::lit(2.0) / n;
                let diff = c.inputs[0].zip_map(c.inputs[1], |a, b| (a - b) * k).unwrap();
                let neg = c.needs[1].then(|| diff.map(|d| -d));
                vec![c.needs[0].then_some(diff), neg]
            }),
        )
    }

    /// Averages `[B, ..., C]` over every axis between the first and last.
    pub fn mean_middle(self) -> Result<Self> {
        let s = self.shape();
        if s.len() < 3 {
            return Err(Error::shape(format!("mean_middle needs rank >= 3, got {s:?}")));
        }
        let (b, c_dim) = (s[0], *s.last().unwrap());
        let m = s.iter().product::<usize>() / (b * c_dim);
        self.graph.op(
            &[self],
            move |v| {
                let mut out = vec![S::zero(); b * c_dim];
                let inv = S::one() / S::lit(m as f64);
                for bi in 0..b {
                    let chunk = &v[0].data()[bi * m * c_dim..(bi + 1) * m * c_dim];
                    let acc = &mut out[bi * c_dim..(bi + 1) * c_dim];
                    for row in chunk.chunks(c_dim) {
                        for (a, &x) in acc.iter_mut().zip(row) {
                            *a = *a + x;
                        }
                    }
                    for a in acc.iter_mut() {
                        *a = *a * inv;
                    }
                }
                Tensor::new(vec![b, c_dim], out)
            },
            Box::new(move |c: &BackCtx<'_, S>| {
                let inv = S::one() / S::lit(m as f64);
                let mut g = Tensor::zeros(c.inputs[0].shape());
                for bi in 0..b {
                    let gsrc = &c.grad.data()[bi * c_dim..(bi + 1) * c_dim];
                    for row in g.data_mut()[bi * m * c_dim..(bi + 1) * m * c_dim].chunks_mut(c_dim) {
                        for (o, &gv) in row.iter_mut().zip(gsrc) {
                            *o = gv * inv;
                        }
                    }
                }
                vec![Some(g)]
            }),
        )
    }

    /// Mean softmax cross-entropy of `[B, K]` logits against class indices.
    pub fn cross_entropy(self, labels: &[usize]) -> Result<Self> {
        let s = self.shape();
        if s.len() != 2 || s[0] != labels.len() {
            return Err(Error::shape(format!(
                "logits {s:?} vs {} labels",
                labels.len()
            )));
        }
        let k = s[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::shape(format!("label {bad} out of range for {k} classes")));
        }
        let labels = labels.to_vec();
        let labels_b = labels.clone();
        self.graph.op(
            &[self],
            move |v| {
                let mut total = S::zero();
                for (row, &l) in v[0].data().chunks(k).zip(&labels) {
                    let p = softmax_row(row);
                    total = total - p[l].max(S::lit(1e-30)).ln();
                }
                Ok(Tensor::scalar(total / S::lit(labels.len() as f64)))
            },
            Box::new(move |c: &BackCtx<'_, S>| {
                let scale = c.grad.item() / S::lit(labels_b.len() as f64);
                let mut g = Vec::with_capacity(c.inputs[0].numel());
                for (row, &l) in c.inputs[0].data().chunks(k).zip(&labels_b) {
                    let p = softmax_row(row);
                    for (j, &pj) in p.iter().enumerate() {
                        let y = if j == l { S::one() } else { S::zero() };
                        g.push((pj - y) * scale);
                    }
                }
                vec![Some(Tensor::new(c.inputs[0].shape().to_vec(), g).unwrap())]
            }),
        )
    }
}

fn moments<S: Scalar>(row: &[S], eps: S) -> (S, S) {
    let n = S::lit(row.len() as f64);
    let mean = row.iter().copied().sum::<S>() / n;
    let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<S>() / n;
    (mean, S::one() / (var + eps).sqrt())
}

pub(crate) fn softmax_row<S: Scalar>(row: &[S]) -> Vec<S> {
    let max = row.iter().copied().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = row.iter().map(|&x| (x - max).exp()).collect();
    let sum: S = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Softmax over the last axis of a plain tensor.
pub fn softmax<S: Scalar>(logits: &Tensor<S>) -> Tensor<S> {
    let k = *logits.shape().last().expect("softmax needs rank >= 1");
    let data = logits.data().chunks(k).flat_map(softmax_row).collect();
    Tensor::new(logits.shape().to_vec(), data).unwrap()
}
