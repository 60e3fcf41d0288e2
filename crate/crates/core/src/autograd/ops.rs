use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::{strides, Graph, Var};
use crate::tensor::{gemm, numel, MatRef, Tensor};

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    assert_eq!(a.shape(), b.shape(), "elementwise shape mismatch");
    Tensor::new(
        a.shape(),
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect(),
    )
}

/// Operand over a stored `r x c` matrix, logically transposed if `t`.
fn opnd(data: &[f64], r: usize, c: usize, t: bool) -> MatRef<'_> {
    if t {
        MatRef::t(data, r, c)
    } else {
        MatRef::new(data, r, c)
    }
}

/// Splits a shape into (rows, last).
fn rows_last(shape: &[usize]) -> (usize, usize) {
    let last = *shape.last().expect("tensor of rank >= 1");
    (numel(shape) / last.max(1), last)
}

impl Graph {
    pub fn add<'g>(&'g self, a: Var<'g>, b: Var<'g>) -> Var<'g> {
        let out = zip_map(&a.value(), &b.value(), |x, y| x + y);
        let (ia, ib, ra, rb) = (a.id, b.id, a.requires_grad(), b.requires_grad());
        self.op(out, &[a, b], move |g, grads| {
            if ra {
                grads.accumulate(ia, g.clone());
            }
            if rb {
                grads.accumulate(ib, g.clone());
            }
        })
    }

    pub fn sub<'g>(&'g self, a: Var<'g>, b: Var<'g>) -> Var<'g> {
        let out = zip_map(&a.value(), &b.value(), |x, y| x - y);
        let (ia, ib, ra, rb) = (a.id, b.id, a.requires_grad(), b.requires_grad());
        self.op(out, &[a, b], move |g, grads| {
            if ra {
                grads.accumulate(ia, g.clone());
            }
            if rb {
                grads.accumulate(ib, g.map(|v| -v));
            }
        })
    }

    pub fn mul<'g>(&'g self, a: Var<'g>, b: Var<'g>) -> Var<'g> {
        let (av, bv) = (a.value(), b.value());
        let out = zip_map(&av, &bv, |x, y| x * y);
        let (ia, ib, ra, rb) = (a.id, b.id, a.requires_grad(), b.requires_grad());
        self.op(out, &[a, b], move |g, grads| {
            if ra {
                grads.accumulate(ia, zip_map(g, &bv, |x, y| x * y));
            }
            if rb {
                grads.accumulate(ib, zip_map(g, &av, |x, y| x * y));
            }
        })
    }

    /// Adds `b` broadcast over the leading axes of `a`; `b`'s shape must
    /// equal the trailing axes of `a`'s shape.
    pub fn add_broadcast<'g>(&'g self, a: Var<'g>, b: Var<'g>) -> Var<'g> {
        let (av, bv) = (a.value(), b.value());
        let (ashape, bshape) = (av.shape(), bv.shape());
        assert!(
            ashape.len() >= bshape.len() && ashape[ashape.len() - bshape.len()..] == *bshape,
            "cannot broadcast {bshape:?} onto {ashape:?}"
        );
        let block = bv.numel();
        let mut out = av.as_ref().clone();
        for chunk in out.data_mut().chunks_exact_mut(block) {
            for (o, b) in chunk.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let bshape = bshape.to_vec();
        let (ia, ib, ra, rb) = (a.id, b.id, a.requires_grad(), b.requires_grad());
        self.op(out, &[a, b], move |g, grads| {
            if ra {
                grads.accumulate(ia, g.clone());
            }
            if rb {
                let mut gb = vec![0.0; block];
                for chunk in g.data().chunks_exact(block) {
                    for (s, v) in gb.iter_mut().zip(chunk) {
                        *s += v;
                    }
                }
                grads.accumulate(ib, Tensor::new(&bshape, gb));
            }
        })
    }

    pub fn scale<'g>(&'g self, a: Var<'g>, c: f64) -> Var<'g> {
        let out = a.value().map(|v| v * c);
        let ia = a.id;
        self.op(out, &[a], move |g, grads| {
            grads.accumulate(ia, g.map(|v| v * c))
        })
    }

    /// `s * a` for a one-element `s`.
    pub fn mul_scalar<'g>(&'g self, a: Var<'g>, s: Var<'g>) -> Var<'g> {
        let (av, sv) = (a.value(), s.item());
        let out = av.map(|v| v * sv);
        let (ia, is, ra, rs) = (a.id, s.id, a.requires_grad(), s.requires_grad());
        let sshape = s.shape();
        self.op(out, &[a, s], move |g, grads| {
            if ra {
                grads.accumulate(ia, g.map(|v| v * sv));
            }
            if rs {
                let d: f64 = g.data().iter().zip(av.data()).map(|(x, y)| x * y).sum();
                grads.accumulate(is, Tensor::new(&sshape, vec![d]));
            }
        })
    }

    pub fn relu<'g>(&'g self, a: Var<'g>) -> Var<'g> {
        let av = a.value();
        let out = av.map(|v| v.max(0.0));
        let ia = a.id;
        self.op(out, &[a], move |g, grads| {
            grads.accumulate(ia, zip_map(g, &av, |g, x| if x > 0.0 { g } else { 0.0 }))
        })
    }

    /// Exact (erf) GELU.
    pub fn gelu<'g>(&'g self, a: Var<'g>) -> Var<'g> {
        const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;
        const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
        let av = a.value();
        let out = av.map(|x| 0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2)));
        let ia = a.id;
        self.op(out, &[a], move |g, grads| {
            let d = av.map(|x| {
                0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
                    + x * INV_SQRT_2PI * libm::exp(-0.5 * x * x)
            });
            grads.accumulate(ia, zip_map(g, &d, |a, b| a * b))
        })
    }

    pub fn reshape<'g>(&'g self, a: Var<'g>, shape: &[usize]) -> Var<'g> {
        let av = a.value();
        let old = av.shape().to_vec();
        let out = av.as_ref().clone().reshaped(shape);
        let ia = a.id;
        self.op(out, &[a], move |g, grads| {
            grads.accumulate(ia, g.clone().reshaped(&old))
        })
    }

    /// Output axis `i` is input axis `axes[i]`.
    pub fn permute<'g>(&'g self, a: Var<'g>, axes: &[usize]) -> Var<'g> {
        let out = a.value().permuted(axes);
        let mut inverse = vec![0; axes.len()];
        for (i, &ax) in axes.iter().enumerate() {
            inverse[ax] = i;
        }
        let ia = a.id;
        self.op(out, &[a], move |g, grads| {
            grads.accumulate(ia, g.permuted(&inverse))
        })
    }

    /// Matrix product of the last two axes. Supported operand ranks:
    /// 2 x 2, and 3 x 3 with equal leading (batch) axis.
    pub fn matmul<'g>(&'g self, a: Var<'g>, b: Var<'g>, ta: bool, tb: bool) -> Var<'g> {
        let (av, bv) = (a.value(), b.value());
        let (sa, sb) = (av.shape().to_vec(), bv.shape().to_vec());
        assert_eq!(sa.len(), sb.len(), "matmul rank mismatch {sa:?} x {sb:?}");
        let batched = sa.len() == 3;
        assert!(
            sa.len() == 2 || (batched && sa[0] == sb[0]),
            "matmul shapes {sa:?} x {sb:?}"
        );
        let batch = if batched { sa[0] } else { 1 };
        let (ar, ac) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (br, bc) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if tb { (bc, br) } else { (br, bc) };
        assert_eq!(k, k2, "matmul inner dims {sa:?}{} x {sb:?}{}", ta, tb);
        let (asz, bsz, csz) = (ar * ac, br * bc, m * n);
        let mut out = vec![0.0; batch * csz];
        for i in 0..batch {
            gemm(
                opnd(&av.data()[i * asz..(i + 1) * asz], ar, ac, ta),
                opnd(&bv.data()[i * bsz..(i + 1) * bsz], br, bc, tb),
                &mut out[i * csz..(i + 1) * csz],
                0.0,
            );
        }
        let out_shape = if batched {
            vec![batch, m, n]
        } else {
            vec![m, n]
        };
        let (ia, ib, ra, rb) = (a.id, b.id, a.requires_grad(), b.requires_grad());
        self.op(Tensor::new(&out_shape, out), &[a, b], move |g, grads| {
            let gd = g.data();
            if ra {
                let mut ga = vec![0.0; batch * asz];
                for i in 0..batch {
                    let gi = &gd[i * csz..(i + 1) * csz];
                    let bi = &bv.data()[i * bsz..(i + 1) * bsz];
                    let dst = &mut ga[i * asz..(i + 1) * asz];
                    if !ta {
                        // dA[m,k] = dC[m,n] * opB^T[n,k]
                        gemm(MatRef::new(gi, m, n), opnd(bi, br, bc, !tb), dst, 0.0);
                    } else {
                        // dA[k,m] = opB[k,n] * dC^T[n,m]
                        gemm(opnd(bi, br, bc, tb), MatRef::t(gi, m, n), dst, 0.0);
                    }
                }
                grads.accumulate(ia, Tensor::new(&sa, ga));
            }
            if rb {
                let mut gb = vec![0.0; batch * bsz];
                for i in 0..batch {
                    let gi = &gd[i * csz..(i + 1) * csz];
                    let ai = &av.data()[i * asz..(i + 1) * asz];
                    let dst = &mut gb[i * bsz..(i + 1) * bsz];
                    if !tb {
                        // dB[k,n] = opA^T[k,m] * dC[m,n]
                        gemm(opnd(ai, ar, ac, !ta), MatRef::new(gi, m, n), dst, 0.0);
                    } else {
                        // dB[n,k] = dC^T[n,m] * opA[m,k]
                        gemm(MatRef::t(gi, m, n), opnd(ai, ar, ac, ta), dst, 0.0);
                    }
                }
                grads.accumulate(ib, Tensor::new(&sb, gb));
            }
        })
    }

    /// Softmax over the last axis. `-inf` entries get exactly zero weight.
    pub fn softmax_last<'g>(&'g self, a: Var<'g>) -> Var<'g> {
        let av = a.value();
        let (rows, n) = rows_last(av.shape());
        let mut out = vec![0.0; rows * n];
        for r in 0..rows {
            let x = &av.data()[r * n..(r + 1) * n];
            let y = &mut out[r * n..(r + 1) * n];
            let max = x.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let mut sum = 0.0;
            for (yi, &xi) in y.iter_mut().zip(x) {
                *yi = libm::exp(xi - max);
                sum += *yi;
            }
            for yi in y.iter_mut() {
                *yi /= sum;
            }
        }
        let out = Tensor::new(av.shape(), out);
        let y = Arc::new(out.clone());
        let ia = a.id;
        self.op(out, &[a], move |g, grads| {
            let mut ga = vec![0.0; rows * n];
            for r in 0..rows {
                let yr = &y.data()[r * n..(r + 1) * n];
                let gr = &g.data()[r * n..(r + 1) * n];
                let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                for j in 0..n {
                    ga[r * n + j] = yr[j] * (gr[j] - dot);
                }
            }
            grads.accumulate(ia, Tensor::new(y.shape(), ga));
        })
    }

    /// `log(sum(exp(x)))` over the last axis; the axis is removed.
    pub fn logsumexp_last<'g>(&'g self, a: Var<'g>) -> Var<'g> {
        let av = a.value();
        let (rows, n) = rows_last(av.shape());
        let mut out = vec![0.0; rows];
        for (o, x) in out.iter_mut().zip(av.data().chunks_exact(n.max(1))) {
            let max = x.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let s: f64 = x.iter().map(|&v| libm::exp(v - max)).sum();
            *o = max + libm::log(s);
        }
        let shape = av.shape()[..av.rank() - 1].to_vec();
        let lse = out.clone();
        let ia = a.id;
        self.op(Tensor::new(&shape, out), &[a], move |g, grads| {
            let mut ga = vec![0.0; rows * n];
            for r in 0..rows {
                for j in 0..n {
                    ga[r * n + j] = g.data()[r] * libm::exp(av.data()[r * n + j] - lse[r]);
                }
            }
            grads.accumulate(ia, Tensor::new(av.shape(), ga));
        })
    }

    /// Divides each last-axis vector by `max(||v||_2, eps)`.
    pub fn l2_normalize_last<'g>(&'g self, a: Var<'g>, eps: f64) -> Var<'g> {
        let av = a.value();
        let (rows, n) = rows_last(av.shape());
        let mut norms = vec![0.0; rows];
        let mut out = vec![0.0; rows * n];
        for r in 0..rows {
            let x = &av.data()[r * n..(r + 1) * n];
            let norm = libm::sqrt(x.iter().map(|v| v * v).sum::<f64>());
            norms[r] = norm;
            let d = norm.max(eps);
            for j in 0..n {
                out[r * n + j] = x[j] / d;
            }
        }
        let out = Tensor::new(av.shape(), out);
        let y = Arc::new(out.clone());
        let ia = a.id;
        self.op(out, &[a], move |g, grads| {
            let mut ga = vec![0.0; rows * n];
            for r in 0..rows {
                let yr = &y.data()[r * n..(r + 1) * n];
                let gr = &g.data()[r * n..(r + 1) * n];
                if norms[r] > eps {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        ga[r * n + j] = (gr[j] - yr[j] * dot) / norms[r];
                    }
                } else {
                    for j in 0..n {
                        ga[r * n + j] = gr[j] / eps;
                    }
                }
            }
            grads.accumulate(ia, Tensor::new(y.shape(), ga));
        })
    }

    /// Sum over the last axis; the axis is removed.
    pub fn sum_last<'g>(&'g self, a: Var<'g>) -> Var<'g> {
        let av = a.value();
        let (rows, n) = rows_last(av.shape());
        let out: Vec<f64> = av
            .data()
            .chunks_exact(n.max(1))
            .map(|c| c.iter().sum())
            .collect();
        let out = if n == 0 { vec![0.0; rows] } else { out };
        let shape = av.shape()[..av.rank() - 1].to_vec();
        let full = av.shape().to_vec();
        let ia = a.id;
        self.op(Tensor::new(&shape, out), &[a], move |g, grads| {
            let mut ga = Vec::with_capacity(rows * n);
            for &v in g.data() {
                ga.extend(core::iter::repeat_n(v, n));
            }
            grads.accumulate(ia, Tensor::new(&full, ga));
        })
    }

    /// Sum of all elements as a zero-dimensional tensor.
    pub fn sum_all<'g>(&'g self, a: Var<'g>) -> Var<'g> {
        let av = a.value();
        let full = av.shape().to_vec();
        let ia = a.id;
        self.op(Tensor::scalar(av.sum()), &[a], move |g, grads| {
            grads.accumulate(ia, Tensor::full(&full, g.item()))
        })
    }

    /// Row lookup: `table` is `[vocab, dim]`, output `[ids.len(), dim]`.
    pub fn embedding<'g>(&'g self, table: Var<'g>, ids: &[u32]) -> Var<'g> {
        let tv = table.value();
        let (vocab, dim) = (tv.dim(0), tv.dim(1));
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            let id = id as usize;
            assert!(id < vocab, "token id {id} out of vocabulary {vocab}");
            out.extend_from_slice(&tv.data()[id * dim..(id + 1) * dim]);
        }
        let ids = ids.to_vec();
        let it = table.id;
        self.op(
            Tensor::new(&[ids.len(), dim], out),
            &[table],
            move |g, grads| {
                let mut gt = vec![0.0; vocab * dim];
                for (row, &id) in ids.iter().enumerate() {
                    let id = id as usize;
                    for j in 0..dim {
                        gt[id * dim + j] += g.data()[row * dim + j];
                    }
                }
                grads.accumulate(it, Tensor::new(&[vocab, dim], gt));
            },
        )
    }

    /// Concatenation along `axis`.
    pub fn concat<'g>(&'g self, parts: &[Var<'g>], axis: usize) -> Var<'g> {
        let values: Vec<Arc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let first = values[0].shape().to_vec();
        let outer: usize = first[..axis].iter().product();
        let inners: Vec<usize> = values
            .iter()
            .map(|v| {
                assert_eq!(v.rank(), first.len());
                v.shape()[axis..].iter().product()
            })
            .collect();
        let total_inner: usize = inners.iter().sum();
        let mut out = Vec::with_capacity(outer * total_inner);
        for o in 0..outer {
            for (v, &inner) in values.iter().zip(&inners) {
                out.extend_from_slice(&v.data()[o * inner..(o + 1) * inner]);
            }
        }
        let mut shape = first.clone();
        shape[axis] = values.iter().map(|v| v.dim(axis)).sum();
        let ids: Vec<(usize, bool, Vec<usize>)> = parts
            .iter()
            .zip(&values)
            .map(|(p, v)| (p.id, p.requires_grad(), v.shape().to_vec()))
            .collect();
        self.op(Tensor::new(&shape, out), parts, move |g, grads| {
            let mut offset = 0;
            for ((id, rg, shape), &inner) in ids.iter().zip(&inners) {
                if *rg {
                    let mut part = Vec::with_capacity(outer * inner);
                    for o in 0..outer {
                        let start = o * total_inner + offset;
                        part.extend_from_slice(&g.data()[start..start + inner]);
                    }
                    grads.accumulate(*id, Tensor::new(shape, part));
                }
                offset += inner;
            }
        })
    }

    /// Slice `[start, start + len)` of `axis`.
    pub fn narrow<'g>(&'g self, a: Var<'g>, axis: usize, start: usize, len: usize) -> Var<'g> {
        let av = a.value();
        let shape = av.shape().to_vec();
        assert!(start + len <= shape[axis], "narrow out of range");
        let st = strides(&shape);
        let outer: usize = shape[..axis].iter().product();
        let block = st[axis];
        let full_inner = shape[axis] * block;
        let mut out = Vec::with_capacity(outer * len * block);
        for o in 0..outer {
            let base = o * full_inner + start * block;
            out.extend_from_slice(&av.data()[base..base + len * block]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let ia = a.id;
        self.op(Tensor::new(&out_shape, out), &[a], move |g, grads| {
            let mut ga = vec![0.0; numel(&shape)];
            for o in 0..outer {
                let base = o * full_inner + start * block;
                ga[base..base + len * block]
                    .copy_from_slice(&g.data()[o * len * block..(o + 1) * len * block]);
            }
            grads.accumulate(ia, Tensor::new(&shape, ga));
        })
    }
}
