//! Layer and batch normalization.

use alloc::vec;
use alloc::vec::Vec;

use super::{Graph, Var};
use crate::tensor::Tensor;

/// One standardization group: the values sharing a mean and variance.
struct Group<'a> {
    xhat: &'a [f64],
    g: &'a [f64],
    inv_std: f64,
}

impl Group<'_> {
    /// `dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))`,
    /// where `dxhat = g * scale(i)`, accumulated into `out`.
    fn backward(
        &self,
        idx: impl Iterator<Item = usize> + Clone,
        scale: impl Fn(usize) -> f64,
        out: &mut [f64],
    ) {
        let mut n = 0.0;
        let (mut m1, mut m2) = (0.0, 0.0);
        for i in idx.clone() {
            let d = self.g[i] * scale(i);
            m1 += d;
            m2 += d * self.xhat[i];
            n += 1.0;
        }
        m1 /= n;
        m2 /= n;
        for i in idx {
            let d = self.g[i] * scale(i);
            out[i] += self.inv_std * (d - m1 - self.xhat[i] * m2);
        }
    }
}

/// Per-channel statistics of a training-mode batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (population) variance.
    pub var: Vec<f64>,
    /// Elements per channel.
    pub count: usize,
}

impl Graph {
    /// Normalizes over the last axis, then applies `gamma`, `beta` (`[d]`).
    pub fn layer_norm<'g>(
        &'g self,
        x: Var<'g>,
        gamma: Var<'g>,
        beta: Var<'g>,
        eps: f64,
    ) -> Var<'g> {
        let (xv, gv, bv) = (x.value(), gamma.value(), beta.value());
        let d = *xv.shape().last().unwrap();
        assert_eq!(gv.shape(), [d]);
        let rows = xv.numel() / d;
        let mut xhat = vec![0.0; rows * d];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; rows * d];
        for r in 0..rows {
            let row = &xv.data()[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            inv_std[r] = 1.0 / libm::sqrt(var + eps);
            for j in 0..d {
                let xh = (row[j] - mean) * inv_std[r];
                xhat[r * d + j] = xh;
                out[r * d + j] = xh * gv.data()[j] + bv.data()[j];
            }
        }
        let ids = [
            (x.id, x.requires_grad()),
            (gamma.id, gamma.requires_grad()),
            (beta.id, beta.requires_grad()),
        ];
        let shape = xv.shape().to_vec();
        self.op(
            Tensor::new(&shape, out),
            &[x, gamma, beta],
            move |g, grads| {
                let gd = g.data();
                if ids[0].1 {
                    let mut gx = vec![0.0; rows * d];
                    for (r, &inv_std) in inv_std.iter().enumerate().take(rows) {
                        let grp = Group {
                            xhat: &xhat,
                            g: gd,
                            inv_std,
                        };
                        grp.backward(r * d..(r + 1) * d, |i| gv.data()[i % d], &mut gx);
                    }
                    grads.accumulate(ids[0].0, Tensor::new(&shape, gx));
                }
                if ids[1].1 || ids[2].1 {
                    let (mut gg, mut gb) = (vec![0.0; d], vec![0.0; d]);
                    for i in 0..rows * d {
                        gg[i % d] += gd[i] * xhat[i];
                        gb[i % d] += gd[i];
                    }
                    if ids[1].1 {
                        grads.accumulate(ids[1].0, Tensor::new(&[d], gg));
                    }
                    if ids[2].1 {
                        grads.accumulate(ids[2].0, Tensor::new(&[d], gb));
                    }
                }
            },
        )
    }

    /// Batch norm over `[b, c, h, w]` using the batch's own statistics.
    pub fn batch_norm2d_train<'g>(
        &'g self,
        x: Var<'g>,
        gamma: Var<'g>,
        beta: Var<'g>,
        eps: f64,
    ) -> (Var<'g>, BatchStats) {
        let (xv, gv, bv) = (x.value(), gamma.value(), beta.value());
        let &[b, c, h, w] = xv.shape() else {
            panic!("batch_norm2d input must be NCHW")
        };
        let n = h * w;
        let count = b * n;
        let plane = move |bi: usize, ci: usize| (bi * c + ci) * n..(bi * c + ci + 1) * n;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for ci in 0..c {
            let mut s = 0.0;
            for bi in 0..b {
                s += xv.data()[plane(bi, ci)].iter().sum::<f64>();
            }
            mean[ci] = s / count as f64;
            let mut v = 0.0;
            for bi in 0..b {
                v += xv.data()[plane(bi, ci)]
                    .iter()
                    .map(|x| (x - mean[ci]) * (x - mean[ci]))
                    .sum::<f64>();
            }
            var[ci] = v / count as f64;
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + eps)).collect();
        let mut xhat = vec![0.0; xv.numel()];
        let mut out = vec![0.0; xv.numel()];
        for bi in 0..b {
            for ci in 0..c {
                for i in plane(bi, ci) {
                    let xh = (xv.data()[i] - mean[ci]) * inv_std[ci];
                    xhat[i] = xh;
                    out[i] = xh * gv.data()[ci] + bv.data()[ci];
                }
            }
        }
        let stats = BatchStats { mean, var, count };
        let ids = [
            (x.id, x.requires_grad()),
            (gamma.id, gamma.requires_grad()),
            (beta.id, beta.requires_grad()),
        ];
        let shape = xv.shape().to_vec();
        let y = self.op(
            Tensor::new(&shape, out),
            &[x, gamma, beta],
            move |g, grads| {
                let gd = g.data();
                if ids[0].1 {
                    let mut gx = vec![0.0; gd.len()];
                    for (ci, &inv_std) in inv_std.iter().enumerate().take(c) {
                        let grp = Group {
                            xhat: &xhat,
                            g: gd,
                            inv_std,
                        };
                        let idx = (0..b).flat_map(move |bi| plane(bi, ci));
                        grp.backward(idx, |_| gv.data()[ci], &mut gx);
                    }
                    grads.accumulate(ids[0].0, Tensor::new(&shape, gx));
                }
                if ids[1].1 || ids[2].1 {
                    let (mut gg, mut gb) = (vec![0.0; c], vec![0.0; c]);
                    for bi in 0..b {
                        for ci in 0..c {
                            for i in plane(bi, ci) {
                                gg[ci] += gd[i] * xhat[i];
                                gb[ci] += gd[i];
                            }
                        }
                    }
                    if ids[1].1 {
                        grads.accumulate(ids[1].0, Tensor::new(&[c], gg));
                    }
                    if ids[2].1 {
                        grads.accumulate(ids[2].0, Tensor::new(&[c], gb));
                    }
                }
            },
        );
        (y, stats)
    }

    /// Batch norm over `[b, c, h, w]` with fixed statistics.
    pub fn batch_norm2d_eval<'g>(
        &'g self,
        x: Var<'g>,
        gamma: Var<'g>,
        beta: Var<'g>,
        mean: &[f64],
        var: &[f64],
        eps: f64,
    ) -> Var<'g> {
        let (xv, gv, bv) = (x.value(), gamma.value(), beta.value());
        let &[b, c, h, w] = xv.shape() else {
            panic!("batch_norm2d input must be NCHW")
        };
        let n = h * w;
        let scale: Vec<f64> = (0..c)
            .map(|ci| gv.data()[ci] / libm::sqrt(var[ci] + eps))
            .collect();
        let mut out = vec![0.0; xv.numel()];
        let mut xhat = vec![0.0; xv.numel()];
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * n;
                for i in base..base + n {
                    xhat[i] = (xv.data()[i] - mean[ci]) / libm::sqrt(var[ci] + eps);
                    out[i] = (xv.data()[i] - mean[ci]) * scale[ci] + bv.data()[ci];
                }
            }
        }
        let ids = [
            (x.id, x.requires_grad()),
            (gamma.id, gamma.requires_grad()),
            (beta.id, beta.requires_grad()),
        ];
        let shape = xv.shape().to_vec();
        self.op(
            Tensor::new(&shape, out),
            &[x, gamma, beta],
            move |g, grads| {
                let gd = g.data();
                let chan = |i: usize| (i / n) % c;
                if ids[0].1 {
                    let gx: Vec<f64> = gd
                        .iter()
                        .enumerate()
                        .map(|(i, v)| v * scale[chan(i)])
                        .collect();
                    grads.accumulate(ids[0].0, Tensor::new(&shape, gx));
                }
                let (mut gg, mut gb) = (vec![0.0; c], vec![0.0; c]);
                for (i, v) in gd.iter().enumerate() {
                    gg[chan(i)] += v * xhat[i];
                    gb[chan(i)] += v;
                }
                if ids[1].1 {
                    grads.accumulate(ids[1].0, Tensor::new(&[c], gg));
                }
                if ids[2].1 {
                    grads.accumulate(ids[2].0, Tensor::new(&[c], gb));
                }
            },
        )
    }
}
