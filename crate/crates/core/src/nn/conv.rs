//! Channels-last 3D convolution via im2col.

use super::graph::{BackCtx, Var};
use super::tensor::{gemm, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv3dSpec {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl Conv3dSpec {
    /// Stride-1 convolution with "same" zero padding for odd kernels.
    pub fn same(kernel: [usize; 3]) -> Self {
        Conv3dSpec {
            kernel,
            stride: [1; 3],
            padding: [kernel[0] / 2, kernel[1] / 2, kernel[2] / 2],
        }
    }

    pub fn output_dims(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let padded = input[a] + 2 * self.padding[a];
            if padded < self.kernel[a] || self.stride[a] == 0 {
                return Err(Error::shape(format!(
                    "conv kernel {:?} does not fit input {input:?}",
                    self.kernel
                )));
            }
            out[a] = (padded - self.kernel[a]) / self.stride[a] + 1;
        }
        Ok(out)
    }
}

#[derive(Clone, Copy)]
struct Geometry {
    batch: usize,
    input: [usize; 3],
    output: [usize; 3],
    cin: usize,
    spec: Conv3dSpec,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.batch * self.output.iter().product::<usize>()
    }

    fn cols(&self) -> usize {
        self.spec.kernel.iter().product::<usize>() * self.cin
    }

    /// Visits every (row, column-block, input offset) triple where the
    /// kernel tap lands inside the input. Column blocks hold `cin` values.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let [t_in, h_in, w_in] = self.input;
        let [t_out, h_out, w_out] = self.output;
        let [kt, kh, kw] = self.spec.kernel;
        let [st, sh, sw] = self.spec.stride;
        let [pt, ph, pw] = self.spec.padding;
        let mut row = 0;
        for b in 0..self.batch {
            for to in 0..t_out {
                for ho in 0..h_out {
                    for wo in 0..w_out {
                        let mut block = 0;
                        for dt in 0..kt {
                            let ti = (to * st + dt) as isize - pt as isize;
                            for dh in 0..kh {
                                let hi = (ho * sh + dh) as isize - ph as isize;
                                for dw in 0..kw {
                                    let wi = (wo * sw + dw) as isize - pw as isize;
                                    if ti >= 0
                                        && hi >= 0
                                        && wi >= 0
                                        && (ti as usize) < t_in
                                        && (hi as usize) < h_in
                                        && (wi as usize) < w_in
                                    {
                                        let off = (((b * t_in + ti as usize) * h_in + hi as usize)
                                            * w_in
                                            + wi as usize)
                                            * self.cin;
                                        f(row, block, off);
                                    }
                                    block += 1;
                                }
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
    }

    fn im2col<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let k = self.cols();
        let cin = self.cin;
        let mut cols = vec![S::zero(); self.rows() * k];
        self.for_each_tap(|row, block, off| {
            let dst = row * k + block * cin;
            cols[dst..dst + cin].copy_from_slice(&x[off..off + cin]);
        });
        cols
    }

    fn col2im<S: Scalar>(&self, cols: &[S], x_len: usize) -> Vec<S> {
        let k = self.cols();
        let cin = self.cin;
        let mut x = vec![S::zero(); x_len];
        self.for_each_tap(|row, block, off| {
            let src = row * k + block * cin;
            for (d, &s) in x[off..off + cin].iter_mut().zip(&cols[src..src + cin]) {
                *d = *d + s;
            }
        });
        x
    }
}

impl<'g, S: Scalar> Var<'g, S> {
    /// `x: [B, T, H, W, Cin]`, `w: [kt, kh, kw, Cin, Cout]`, `b: [Cout]`.
    pub fn conv3d(self, w: Self, b: Self, spec: Conv3dSpec) -> Result<Self> {
        let xs = self.shape();
        let ws = w.shape();
        if xs.len() != 5 || ws.len() != 5 || ws[..3] != spec.kernel || ws[3] != xs[4] {
            return Err(Error::shape(format!(
                "conv3d input {xs:?} / weight {ws:?} / kernel {:?}",
                spec.kernel
            )));
        }
        let cout = ws[4];
        if b.shape() != [cout] {
            return Err(Error::shape(format!("conv3d bias {:?}", b.shape())));
        }
        let input = [xs[1], xs[2], xs[3]];
        let output = spec.output_dims(input)?;
        let geo = Geometry {
            batch: xs[0],
            input,
            output,
            cin: xs[4],
            spec,
        };
        let out_shape = vec![xs[0], output[0], output[1], output[2], cout];
        let (m, k) = (geo.rows(), geo.cols());
        self.graph.op(
            &[self, w, b],
            move |v| {
                let cols = geo.im2col(v[0].data());
                let mut out = vec![S::zero(); m * cout];
                for row in out.chunks_mut(cout) {
                    row.copy_from_slice(v[2].data());
                }
                gemm(m, k, cout, S::one(), &cols, false, v[1].data(), false, S::one(), &mut out);
                Tensor::new(out_shape, out)
            },
            Box::new(move |c: &BackCtx<'_, S>| {
                let g = c.grad.data();
                let gx = c.needs[0].then(|| {
                    let mut gcols = vec![S::zero(); m * k];
                    gemm(m, cout, k, S::one(), g, false, c.inputs[1].data(), true, S::zero(), &mut gcols);
                    let gx = geo.col2im(&gcols, c.inputs[0].numel());
                    Tensor::new(c.inputs[0].shape().to_vec(), gx).unwrap()
                });
                let gw = c.needs[1].then(|| {
                    let cols = geo.im2col(c.inputs[0].data());
                    let mut gw = vec![S::zero(); k * cout];
                    gemm(k, m, cout, S::one(), &cols, true, g, false, S::zero(), &mut gw);
                    Tensor::new(c.inputs[1].shape().to_vec(), gw).unwrap()
                });
                let gb = c.needs[2].then(|| {
                    let mut gb = vec![S::zero(); cout];
                    for row in g.chunks(cout) {
                        for (a, &r) in gb.iter_mut().zip(row) {
                            *a = *a + r;
                        }
                    }
                    Tensor::new(vec![cout], gb).unwrap()
                });
                vec![gx, gw, gb]
            }),
        )
    }

    /// Folds `[B, T, H, W, C]` blocks of `factors` into channels:
    /// `[B, T/ft, H/fh, W/fw, ft*fh*fw*C]`.
    pub fn space_to_depth(self, factors: [usize; 3]) -> Result<Self> {
        let s = self.shape();
        if s.len() != 5 || (0..3).any(|a| factors[a] == 0 || !s[a + 1].is_multiple_of(factors[a])) {
            return Err(Error::shape(format!(
                "space_to_depth {factors:?} does not divide {s:?}"
            )));
        }
        let [ft, fh, fw] = factors;
        let (b, t, h, w, c) = (s[0], s[1], s[2], s[3], s[4]);
        self.reshape(&[b, t / ft, ft, h / fh, fh, w / fw, fw, c])?
            .permute(&[0, 1, 3, 5, 2, 4, 6, 7])?
            .reshape(&[b, t / ft, h / fh, w / fw, ft * fh * fw * c])
    }

    /// Inverse of [`Var::space_to_depth`].
    pub fn depth_to_space(self, factors: [usize; 3]) -> Result<Self> {
        let s = self.shape();
        let [ft, fh, fw] = factors;
        let block = ft * fh * fw;
        if s.len() != 5 || block == 0 || !s[4].is_multiple_of(block) {
            return Err(Error::shape(format!(
                "depth_to_space {factors:?} does not divide {s:?}"
            )));
        }
        let (b, t, h, w, c) = (s[0], s[1], s[2], s[3], s[4] / block);
        self.reshape(&[b, t, h, w, ft, fh, fw, c])?
            .permute(&[0, 1, 4, 2, 5, 3, 6, 7])?
            .reshape(&[b, t * ft, h * fh, w * fw, c])
    }
}
