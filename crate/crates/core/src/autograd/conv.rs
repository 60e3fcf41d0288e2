//! 2-D convolution and its transpose, both lowered to one matrix product
//! over an im2col buffer.

use alloc::vec;
use alloc::vec::Vec;

use super::{Graph, Var};
use crate::tensor::{gemm, MatRef, Tensor};

/// Square-kernel convolution geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            kernel,
            stride,
            padding,
        }
    }

    /// Output side of a convolution over an input side `n`.
    pub fn out_len(&self, n: usize) -> usize {
        (n + 2 * self.padding - self.kernel) / self.stride + 1
    }

    /// Output side of the transposed convolution over an input side `n`.
    pub fn transposed_out_len(&self, n: usize) -> usize {
        (n - 1) * self.stride + self.kernel - 2 * self.padding
    }
}

/// Shape of the "wide" side (`[b, c, h, w]`) and the "narrow" side
/// (`ho x wo`) of a convolution.
#[derive(Clone, Copy)]
struct Geometry {
    b: usize,
    c: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
    spec: ConvSpec,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.c * self.spec.kernel * self.spec.kernel
    }

    fn cols(&self) -> usize {
        self.b * self.ho * self.wo
    }

    /// Calls `f(col_index, image_index)` for every in-bounds tap; rows are
    /// `(c, ky, kx)`, columns `(b, oy, ox)`.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let k = self.spec.kernel;
        let (s, p) = (self.spec.stride as isize, self.spec.padding as isize);
        let ncols = self.cols();
        for c in 0..self.c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    for b in 0..self.b {
                        let img = (b * self.c + c) * self.h * self.w;
                        for oy in 0..self.ho {
                            let iy = oy as isize * s - p + ky as isize;
                            if iy < 0 || iy >= self.h as isize {
                                continue;
                            }
                            let col_base = row * ncols + (b * self.ho + oy) * self.wo;
                            let img_row = img + iy as usize * self.w;
                            for ox in 0..self.wo {
                                let ix = ox as isize * s - p + kx as isize;
                                if ix >= 0 && ix < self.w as isize {
                                    f(col_base + ox, img_row + ix as usize);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let mut cols = vec![0.0; self.rows() * self.cols()];
        self.for_each_tap(|ci, xi| cols[ci] = x[xi]);
        cols
    }

    fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.b * self.c * self.h * self.w];
        self.for_each_tap(|ci, xi| x[xi] += cols[ci]);
        x
    }
}

/// `[c, b*n]` (channel-major) to `[b, c, n]`.
fn channel_major_to_batch(data: &[f64], c: usize, b: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for ci in 0..c {
        for bi in 0..b {
            let src = &data[(ci * b + bi) * n..(ci * b + bi + 1) * n];
            out[(bi * c + ci) * n..(bi * c + ci + 1) * n].copy_from_slice(src);
        }
    }
    out
}

/// `[b, c, n]` to `[c, b*n]`.
fn batch_to_channel_major(data: &[f64], b: usize, c: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for bi in 0..b {
        for ci in 0..c {
            let src = &data[(bi * c + ci) * n..(bi * c + ci + 1) * n];
            out[(ci * b + bi) * n..(ci * b + bi + 1) * n].copy_from_slice(src);
        }
    }
    out
}

fn add_channel_bias(out: &mut [f64], bias: &[f64], n: usize) {
    for (chunk, i) in out.chunks_exact_mut(n).zip(0..) {
        let v = bias[i % bias.len()];
        for o in chunk {
            *o += v;
        }
    }
}

fn channel_bias_grad(g: &[f64], c: usize, n: usize) -> Vec<f64> {
    let mut gb = vec![0.0; c];
    for (chunk, i) in g.chunks_exact(n).zip(0..) {
        gb[i % c] += chunk.iter().sum::<f64>();
    }
    gb
}

impl Graph {
    /// `x: [b, cin, h, w]`, `weight: [cout, cin, k, k]`, `bias: [cout]`.
    pub fn conv2d<'g>(
        &'g self,
        x: Var<'g>,
        weight: Var<'g>,
        bias: Option<Var<'g>>,
        spec: ConvSpec,
    ) -> Var<'g> {
        let (xv, wv) = (x.value(), weight.value());
        let &[b, c, h, w] = xv.shape() else {
            panic!("conv2d input must be NCHW, got {:?}", xv.shape())
        };
        let &[cout, cin, kh, kw] = wv.shape() else {
            panic!("conv2d weight must be [cout, cin, k, k]")
        };
        assert!(
            cin == c && kh == spec.kernel && kw == spec.kernel,
            "conv2d weight {:?} vs input {:?}",
            wv.shape(),
            xv.shape()
        );
        let geo = Geometry {
            b,
            c,
            h,
            w,
            ho: spec.out_len(h),
            wo: spec.out_len(w),
            spec,
        };
        let cols = geo.im2col(xv.data());
        let (rows, ncols) = (geo.rows(), geo.cols());
        let mut y = vec![0.0; cout * ncols];
        gemm(
            MatRef::new(wv.data(), cout, rows),
            MatRef::new(&cols, rows, ncols),
            &mut y,
            0.0,
        );
        let n = geo.ho * geo.wo;
        let mut out = channel_major_to_batch(&y, cout, b, n);
        let mut inputs = vec![x, weight];
        if let Some(bv) = bias {
            add_channel_bias(&mut out, bv.value().data(), n);
            inputs.push(bv);
        }
        let (ix, iw, rx, rw) = (x.id, weight.id, x.requires_grad(), weight.requires_grad());
        let bias_id = bias.map(|v| (v.id, v.requires_grad()));
        let out_shape = [b, cout, geo.ho, geo.wo];
        let wshape = wv.shape().to_vec();
        self.op(Tensor::new(&out_shape, out), &inputs, move |g, grads| {
            let gy = batch_to_channel_major(g.data(), b, cout, n);
            if rw {
                let mut gw = vec![0.0; cout * rows];
                gemm(
                    MatRef::new(&gy, cout, ncols),
                    MatRef::t(&cols, rows, ncols),
                    &mut gw,
                    0.0,
                );
                grads.accumulate(iw, Tensor::new(&wshape, gw));
            }
            if rx {
                let mut gcols = vec![0.0; rows * ncols];
                gemm(
                    MatRef::t(wv.data(), cout, rows),
                    MatRef::new(&gy, cout, ncols),
                    &mut gcols,
                    0.0,
                );
                grads.accumulate(ix, Tensor::new(&[b, c, h, w], geo.col2im(&gcols)));
            }
            if let Some((ib, true)) = bias_id {
                grads.accumulate(
                    ib,
                    Tensor::new(&[cout], channel_bias_grad(g.data(), cout, n)),
                );
            }
        })
    }

    /// Transposed convolution (the adjoint of [`Graph::conv2d`] with the
    /// same spec). `x: [b, cin, h, w]`, `weight: [cin, cout, k, k]`.
    pub fn conv_transpose2d<'g>(
        &'g self,
        x: Var<'g>,
        weight: Var<'g>,
        bias: Option<Var<'g>>,
        spec: ConvSpec,
    ) -> Var<'g> {
        let (xv, wv) = (x.value(), weight.value());
        let &[b, cin, h, w] = xv.shape() else {
            panic!("conv_transpose2d input must be NCHW, got {:?}", xv.shape())
        };
        let &[wcin, cout, kh, kw] = wv.shape() else {
            panic!("conv_transpose2d weight must be [cin, cout, k, k]")
        };
        assert!(wcin == cin && kh == spec.kernel && kw == spec.kernel);
        let (oh, ow) = (spec.transposed_out_len(h), spec.transposed_out_len(w));
        // The output plays the role of a convolution input whose output is `x`.
        let geo = Geometry {
            b,
            c: cout,
            h: oh,
            w: ow,
            ho: h,
            wo: w,
            spec,
        };
        debug_assert_eq!((spec.out_len(oh), spec.out_len(ow)), (h, w));
        let (rows, ncols) = (geo.rows(), geo.cols());
        let n = h * w;
        let xc = batch_to_channel_major(xv.data(), b, cin, n);
        let mut cols = vec![0.0; rows * ncols];
        gemm(
            MatRef::t(wv.data(), cin, rows),
            MatRef::new(&xc, cin, ncols),
            &mut cols,
            0.0,
        );
        let mut out = geo.col2im(&cols);
        let mut inputs = vec![x, weight];
        if let Some(bv) = bias {
            add_channel_bias(&mut out, bv.value().data(), oh * ow);
            inputs.push(bv);
        }
        let (ix, iw, rx, rw) = (x.id, weight.id, x.requires_grad(), weight.requires_grad());
        let bias_id = bias.map(|v| (v.id, v.requires_grad()));
        let wshape = wv.shape().to_vec();
        self.op(
            Tensor::new(&[b, cout, oh, ow], out),
            &inputs,
            move |g, grads| {
                let gcols = geo.im2col(g.data());
                if rw {
                    let mut gw = vec![0.0; cin * rows];
                    gemm(
                        MatRef::new(&xc, cin, ncols),
                        MatRef::t(&gcols, rows, ncols),
                        &mut gw,
                        0.0,
                    );
                    grads.accumulate(iw, Tensor::new(&wshape, gw));
                }
                if rx {
                    let mut gx = vec![0.0; cin * ncols];
                    gemm(
                        MatRef::new(wv.data(), cin, rows),
                        MatRef::new(&gcols, rows, ncols),
                        &mut gx,
                        0.0,
                    );
                    grads.accumulate(
                        ix,
                        Tensor::new(&[b, cin, h, w], channel_major_to_batch(&gx, cin, b, n)),
                    );
                }
                if let Some((ib, true)) = bias_id {
                    grads.accumulate(
                        ib,
                        Tensor::new(&[cout], channel_bias_grad(g.data(), cout, oh * ow)),
                    );
                }
            },
        )
    }
}
