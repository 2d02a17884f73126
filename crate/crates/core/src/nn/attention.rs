//! Multi-head scaled dot-product attention over one joint token sequence.

use super::graph::{BackCtx, Var};
use super::ops::softmax_row;
use super::tensor::{gemm, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy)]
struct Layout {
    batch: usize,
    tokens: usize,
    width: usize,
    heads: usize,
}

impl Layout {
    fn head_dim(&self) -> usize {
        self.width / self.heads
    }

    /// Copies head `h` of sample `b` into a contiguous `[tokens, head_dim]` block.
    fn take<S: Scalar>(&self, x: &[S], b: usize, h: usize) -> Vec<S> {
        let dh = self.head_dim();
        let mut out = Vec::with_capacity(self.tokens * dh);
        for n in 0..self.tokens {
            let base = (b * self.tokens + n) * self.width + h * dh;
            out.extend_from_slice(&x[base..base + dh]);
        }
        out
    }

    fn put<S: Scalar>(&self, dst: &mut [S], src: &[S], b: usize, h: usize) {
        let dh = self.head_dim();
        for n in 0..self.tokens {
            let base = (b * self.tokens + n) * self.width + h * dh;
            dst[base..base + dh].copy_from_slice(&src[n * dh..(n + 1) * dh]);
        }
    }

    /// Row-softmax of `q k^T / sqrt(dh)`.
    fn probs<S: Scalar>(&self, q: &[S], k: &[S]) -> Vec<S> {
        let (n, dh) = (self.tokens, self.head_dim());
        let mut scores = vec![S::zero(); n * n];
        let scale = S::one() / S::lit(dh as f64).sqrt();
        gemm(n, dh, n, scale, q, false, k, true, S::zero(), &mut scores);
        scores.chunks(n).flat_map(softmax_row).collect()
    }
}

impl<'g, S: Scalar> Var<'g, S> {
    /// `q, k, v: [B, N, D]` with `D` split into `heads` equal slices. Every
    /// token attends to every token.
    pub fn attention(self, k: Self, v: Self, heads: usize) -> Result<Self> {
        let s = self.shape();
        if s.len() != 3 || k.shape() != s || v.shape() != s || heads == 0 || !s[2].is_multiple_of(heads) {
            return Err(Error::shape(format!(
                "attention q {s:?} k {:?} v {:?} heads {heads}",
                k.shape(),
                v.shape()
            )));
        }
        let layout = Layout {
            batch: s[0],
            tokens: s[1],
            width: s[2],
            heads,
        };
        self.graph.op(
            &[self, k, v],
            move |x| {
                let (n, dh) = (layout.tokens, layout.head_dim());
                let mut out = vec![S::zero(); x[0].numel()];
                for b in 0..layout.batch {
                    for h in 0..layout.heads {
                        let q = layout.take(x[0].data(), b, h);
                        let kk = layout.take(x[1].data(), b, h);
                        let vv = layout.take(x[2].data(), b, h);
                        let p = layout.probs(&q, &kk);
                        let mut o = vec![S::zero(); n * dh];
                        gemm(n, n, dh, S::one(), &p, false, &vv, false, S::zero(), &mut o);
                        layout.put(&mut out, &o, b, h);
                    }
                }
                Tensor::new(x[0].shape().to_vec(), out)
            },
            Box::new(move |c: &BackCtx<'_, S>| {
                let (n, dh) = (layout.tokens, layout.head_dim());
                let scale = S::one() / S::lit(dh as f64).sqrt();
                let size = c.grad.numel();
                let (mut gq, mut gk, mut gv) =
                    (vec![S::zero(); size], vec![S::zero(); size], vec![S::zero(); size]);
                for b in 0..layout.batch {
                    for h in 0..layout.heads {
                        let q = layout.take(c.inputs[0].data(), b, h);
                        let kk = layout.take(c.inputs[1].data(), b, h);
                        let vv = layout.take(c.inputs[2].data(), b, h);
                        let go = layout.take(c.grad.data(), b, h);
                        let p = layout.probs(&q, &kk);

                        let mut dv = vec![S::zero(); n * dh];
                        gemm(n, n, dh, S::one(), &p, true, &go, false, S::zero(), &mut dv);
                        let mut dp = vec![S::zero(); n * n];
                        gemm(n, dh, n, S::one(), &go, false, &vv, true, S::zero(), &mut dp);
                        // softmax backward, row by row
                        for (dprow, prow) in dp.chunks_mut(n).zip(p.chunks(n)) {
                            let dot: S = dprow.iter().zip(prow).map(|(&a, &b)| a * b).sum();
                            for (d, &pv) in dprow.iter_mut().zip(prow) {
                                *d = pv * (*d - dot);
                            }
                        }
                        let mut dq = vec![S::zero(); n * dh];
                        gemm(n, n, dh, scale, &dp, false, &kk, false, S::zero(), &mut dq);
                        let mut dk = vec![S::zero(); n * dh];
                        gemm(n, n, dh, scale, &dp, true, &q, false, S::zero(), &mut dk);
                        layout.put(&mut gq, &dq, b, h);
                        layout.put(&mut gk, &dk, b, h);
                        layout.put(&mut gv, &dv, b, h);
                    }
                }
                let shape = c.grad.shape().to_vec();
                vec![
                    c.needs[0].then(|| Tensor::new(shape.clone(), gq).unwrap()),
                    c.needs[1].then(|| Tensor::new(shape.clone(), gk).unwrap()),
                    c.needs[2].then(|| Tensor::new(shape.clone(), gv).unwrap()),
                ]
            }),
        )
    }
}
