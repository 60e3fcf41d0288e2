//! Parameter storage and the layers the encoders are built from.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autograd::{ConvSpec, Graph, Var};
use crate::tensor::{numel, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const LN_EPS: f64 = 1e-5;

/// Standard deviation `1 / sqrt(fan_in)`.
pub fn lecun(fan_in: usize) -> f64 {
    1.0 / libm::sqrt(fan_in as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone)]
struct Entry {
    name: String,
    value: Arc<Tensor>,
    trainable: bool,
}

/// Named tensors: trainable parameters and non-trainable buffers
/// (normalization running statistics), in creation order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<Entry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> ParamId {
        let name = name.into();
        assert!(
            self.find(&name).is_none(),
            "duplicate parameter name {name}"
        );
        self.entries.push(Entry {
            name,
            value: Arc::new(value),
            trainable,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries
            .iter()
            .position(|e| e.name == name)
            .map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn shared(&self, id: ParamId) -> Arc<Tensor> {
        self.entries[id.0].value.clone()
    }

    pub fn set(&mut self, id: ParamId, value: Tensor) {
        let e = &mut self.entries[id.0];
        assert_eq!(
            e.value.shape(),
            value.shape(),
            "shape change for {}",
            e.name
        );
        e.value = Arc::new(value);
    }

    /// Mutable access; copies the tensor if a graph still shares it.
    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        Arc::make_mut(&mut self.entries[id.0].value)
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        self.ids().filter(|&id| self.is_trainable(id)).collect()
    }

    /// Total scalar count of trainable parameters.
    pub fn trainable_scalars(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.value.numel())
            .sum()
    }

    /// Applies queued buffer updates from a graph.
    pub fn apply_buffer_updates(&mut self, updates: Vec<(ParamId, Tensor)>) {
        for (id, v) in updates {
            self.set(id, v);
        }
    }
}

/// Seeded parameter factory.
pub struct ParamBuilder {
    store: ParamStore,
    rng: ChaCha8Rng,
}

impl ParamBuilder {
    pub fn new(seed: u64) -> Self {
        Self {
            store: ParamStore::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn normal(&mut self, name: impl Into<String>, shape: &[usize], std: f64) -> ParamId {
        let dist = Normal::new(0.0, std).expect("finite std");
        let data = (0..numel(shape))
            .map(|_| dist.sample(&mut self.rng))
            .collect();
        self.store.add(name, Tensor::new(shape, data), true)
    }

    /// He-normal initialization for a layer followed by ReLU.
    pub fn kaiming(&mut self, name: impl Into<String>, shape: &[usize], fan_in: usize) -> ParamId {
        self.normal(name, shape, libm::sqrt(2.0 / fan_in as f64))
    }

    pub fn constant(&mut self, name: impl Into<String>, shape: &[usize], value: f64) -> ParamId {
        self.store.add(name, Tensor::full(shape, value), true)
    }

    pub fn buffer(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.store.add(name, value, false)
    }

    pub fn finish(self) -> ParamStore {
        self.store
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(b: &mut ParamBuilder, name: &str, in_dim: usize, out_dim: usize, std: f64) -> Self {
        Self {
            weight: b.normal(format!("{name}.weight"), &[in_dim, out_dim], std),
            bias: b.constant(format!("{name}.bias"), &[out_dim], 0.0),
            in_dim,
            out_dim,
        }
    }

    /// Applies to the last axis of `x`.
    pub fn forward<'g>(&self, g: &'g Graph, store: &ParamStore, x: Var<'g>) -> Var<'g> {
        let shape = x.shape();
        let rows = numel(&shape) / self.in_dim;
        let flat = g.reshape(x, &[rows, self.in_dim]);
        let y = g.matmul(flat, g.param(store, self.weight), false, false);
        let y = g.add_broadcast(y, g.param(store, self.bias));
        let mut out = shape;
        *out.last_mut().unwrap() = self.out_dim;
        g.reshape(y, &out)
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub spec: ConvSpec,
}

impl Conv2d {
    pub fn new(
        b: &mut ParamBuilder,
        name: &str,
        cin: usize,
        cout: usize,
        spec: ConvSpec,
        bias: bool,
    ) -> Self {
        let k = spec.kernel;
        Self {
            weight: b.kaiming(format!("{name}.weight"), &[cout, cin, k, k], cin * k * k),
            bias: bias.then(|| b.constant(format!("{name}.bias"), &[cout], 0.0)),
            spec,
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph, store: &ParamStore, x: Var<'g>) -> Var<'g> {
        let bias = self.bias.map(|id| g.param(store, id));
        g.conv2d(x, g.param(store, self.weight), bias, self.spec)
    }
}

#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub weight: ParamId,
    pub spec: ConvSpec,
}

impl ConvTranspose2d {
    pub fn new(b: &mut ParamBuilder, name: &str, cin: usize, cout: usize, spec: ConvSpec) -> Self {
        let k = spec.kernel;
        Self {
            weight: b.kaiming(format!("{name}.weight"), &[cin, cout, k, k], cin * k * k),
            spec,
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph, store: &ParamStore, x: Var<'g>) -> Var<'g> {
        g.conv_transpose2d(x, g.param(store, self.weight), None, self.spec)
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm2d {
    pub fn new(b: &mut ParamBuilder, name: &str, channels: usize) -> Self {
        Self::with_gamma(b, name, channels, 1.0)
    }

    pub fn with_gamma(b: &mut ParamBuilder, name: &str, channels: usize, gamma: f64) -> Self {
        Self {
            gamma: b.constant(format!("{name}.gamma"), &[channels], gamma),
            beta: b.constant(format!("{name}.beta"), &[channels], 0.0),
            running_mean: b.buffer(format!("{name}.running_mean"), Tensor::zeros(&[channels])),
            running_var: b.buffer(
                format!("{name}.running_var"),
                Tensor::full(&[channels], 1.0),
            ),
        }
    }

    /// Batch statistics in training graphs (queuing a running-statistics
    /// update), running statistics otherwise.
    pub fn forward<'g>(&self, g: &'g Graph, store: &ParamStore, x: Var<'g>) -> Var<'g> {
        let (gamma, beta) = (g.param(store, self.gamma), g.param(store, self.beta));
        if g.is_training() {
            let (y, stats) = g.batch_norm2d_train(x, gamma, beta, BN_EPS);
            let m = BN_MOMENTUM;
            let unbias = if stats.count > 1 {
                stats.count as f64 / (stats.count - 1) as f64
            } else {
                1.0
            };
            let old_mean = store.get(self.running_mean);
            let old_var = store.get(self.running_var);
            let mean: Vec<f64> = old_mean
                .data()
                .iter()
                .zip(&stats.mean)
                .map(|(o, b)| (1.0 - m) * o + m * b)
                .collect();
            let var: Vec<f64> = old_var
                .data()
                .iter()
                .zip(&stats.var)
                .map(|(o, b)| (1.0 - m) * o + m * b * unbias)
                .collect();
            let c = mean.len();
            g.record_buffer_update(self.running_mean, Tensor::new(&[c], mean));
            g.record_buffer_update(self.running_var, Tensor::new(&[c], var));
            y
        } else {
            let mean = store.get(self.running_mean).data().to_vec();
            let var = store.get(self.running_var).data().to_vec();
            g.batch_norm2d_eval(x, gamma, beta, &mean, &var, BN_EPS)
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(b: &mut ParamBuilder, name: &str, dim: usize) -> Self {
        Self {
            gamma: b.constant(format!("{name}.gamma"), &[dim], 1.0),
            beta: b.constant(format!("{name}.beta"), &[dim], 0.0),
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph, store: &ParamStore, x: Var<'g>) -> Var<'g> {
        g.layer_norm(
            x,
            g.param(store, self.gamma),
            g.param(store, self.beta),
            LN_EPS,
        )
    }
}

#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: ParamId,
    pub dim: usize,
}

impl Embedding {
    pub fn new(b: &mut ParamBuilder, name: &str, vocab: usize, dim: usize, std: f64) -> Self {
        Self {
            table: b.normal(format!("{name}.table"), &[vocab, dim], std),
            dim,
        }
    }

    /// `[ids.len(), dim]`.
    pub fn forward<'g>(&self, g: &'g Graph, store: &ParamStore, ids: &[u32]) -> Var<'g> {
        g.embedding(g.param(store, self.table), ids)
    }
}

/// Multi-head scaled dot-product attention.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    /// The output projection is drawn with `out_scale` times the usual
    /// standard deviation.
    pub fn new(b: &mut ParamBuilder, name: &str, dim: usize, heads: usize, out_scale: f64) -> Self {
        assert_eq!(dim % heads, 0, "dim {dim} not divisible by {heads} heads");
        let std = lecun(dim);
        Self {
            q: Linear::new(b, &format!("{name}.q"), dim, dim, std),
            k: Linear::new(b, &format!("{name}.k"), dim, dim, std),
            v: Linear::new(b, &format!("{name}.v"), dim, dim, std),
            o: Linear::new(b, &format!("{name}.o"), dim, dim, out_scale * std),
            heads,
            dim,
        }
    }

    /// `[b, l, d]` to `[b*h, l, d/h]`.
    fn split_heads<'g>(&self, g: &'g Graph, x: Var<'g>) -> Var<'g> {
        let s = x.shape();
        let (b, l, dh) = (s[0], s[1], self.dim / self.heads);
        let x = g.reshape(x, &[b, l, self.heads, dh]);
        let x = g.permute(x, &[0, 2, 1, 3]);
        g.reshape(x, &[b * self.heads, l, dh])
    }

    /// `query: [b, lq, d]`, `memory: [b, lk, d]`. `key_valid` (`b * lk`
    /// flags) excludes padded keys; every row needs one valid key.
    /// Returns `[b, lq, d]`.
    pub fn forward<'g>(
        &self,
        g: &'g Graph,
        store: &ParamStore,
        query: Var<'g>,
        memory: Var<'g>,
        key_valid: Option<&[bool]>,
    ) -> Var<'g> {
        let (qs, ks) = (query.shape(), memory.shape());
        let (b, lq, lk) = (qs[0], qs[1], ks[1]);
        let h = self.heads;
        let dh = self.dim / h;
        let q = self.split_heads(g, self.q.forward(g, store, query));
        let k = self.split_heads(g, self.k.forward(g, store, memory));
        let v = self.split_heads(g, self.v.forward(g, store, memory));
        let mut scores = g.scale(g.matmul(q, k, false, true), 1.0 / libm::sqrt(dh as f64));
        if let Some(valid) = key_valid {
            assert_eq!(valid.len(), b * lk);
            let mut mask = vec![0.0; b * h * lq * lk];
            for bi in 0..b {
                for hi in 0..h {
                    for qi in 0..lq {
                        let row = ((bi * h + hi) * lq + qi) * lk;
                        for ki in 0..lk {
                            if !valid[bi * lk + ki] {
                                mask[row + ki] = f64::NEG_INFINITY;
                            }
                        }
                    }
                }
            }
            scores = g.add(scores, g.constant(Tensor::new(&[b * h, lq, lk], mask)));
        }
        let attn = g.softmax_last(scores);
        let ctx = g.matmul(attn, v, false, false);
        let ctx = g.reshape(ctx, &[b, h, lq, dh]);
        let ctx = g.permute(ctx, &[0, 2, 1, 3]);
        let ctx = g.reshape(ctx, &[b, lq, self.dim]);
        self.o.forward(g, store, ctx)
    }
}

/// Two-layer GELU MLP of hidden width `4 * dim`.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new(b: &mut ParamBuilder, name: &str, dim: usize, out_scale: f64) -> Self {
        Self {
            up: Linear::new(b, &format!("{name}.up"), dim, 4 * dim, lecun(dim)),
            down: Linear::new(
                b,
                &format!("{name}.down"),
                4 * dim,
                dim,
                out_scale * lecun(4 * dim),
            ),
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph, store: &ParamStore, x: Var<'g>) -> Var<'g> {
        let hdn = g.gelu(self.up.forward(g, store, x));
        self.down.forward(g, store, hdn)
    }
}

/// Pre-norm transformer block: attention then feed-forward, each residual.
/// With a memory it is a cross-attention block, otherwise self-attention.
#[derive(Debug, Clone)]
pub struct TransformerBlock {
    pub norm_q: LayerNorm,
    pub norm_kv: Option<LayerNorm>,
    pub attn: MultiHeadAttention,
    pub norm_ff: LayerNorm,
    pub ff: FeedForward,
}

impl TransformerBlock {
    /// `out_scale` scales the initial weights of both residual branch
    /// outputs; 0 makes the block start as the identity.
    pub fn new(
        b: &mut ParamBuilder,
        name: &str,
        dim: usize,
        heads: usize,
        cross: bool,
        out_scale: f64,
    ) -> Self {
        Self {
            norm_q: LayerNorm::new(b, &format!("{name}.norm_q"), dim),
            norm_kv: cross.then(|| LayerNorm::new(b, &format!("{name}.norm_kv"), dim)),
            attn: MultiHeadAttention::new(b, &format!("{name}.attn"), dim, heads, out_scale),
            norm_ff: LayerNorm::new(b, &format!("{name}.norm_ff"), dim),
            ff: FeedForward::new(b, &format!("{name}.ff"), dim, out_scale),
        }
    }

    pub fn forward<'g>(
        &self,
        g: &'g Graph,
        store: &ParamStore,
        x: Var<'g>,
        memory: Option<Var<'g>>,
        key_valid: Option<&[bool]>,
    ) -> Var<'g> {
        let q = self.norm_q.forward(g, store, x);
        let kv = match (memory, &self.norm_kv) {
            (Some(m), Some(n)) => n.forward(g, store, m),
            (None, None) => q,
            _ => panic!("memory must be given exactly for cross-attention blocks"),
        };
        let x = g.add(x, self.attn.forward(g, store, q, kv, key_valid));
        let f = self.ff.forward(g, store, self.norm_ff.forward(g, store, x));
        g.add(x, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_is_seeded() {
        let make = |seed| {
            let mut b = ParamBuilder::new(seed);
            let l = Linear::new(&mut b, "l", 4, 3, 0.1);
            (b.finish(), l)
        };
        let (a, la) = make(1);
        let (b, _) = make(1);
        let (c, _) = make(2);
        assert_eq!(a.get(la.weight), b.get(la.weight));
        assert_ne!(a.get(la.weight), c.get(la.weight));
        assert_eq!(a.name(la.bias), "l.bias");
        assert_eq!(a.find("l.weight"), Some(la.weight));
    }

    #[test]
    fn attention_ignores_masked_keys() {
        let mut b = ParamBuilder::new(3);
        let mha = MultiHeadAttention::new(&mut b, "a", 8, 2, 1.0);
        let store = b.finish();
        let mk = |extra: f64| {
            let mut d: Vec<f64> = (0..2 * 8).map(|i| libm::sin(i as f64)).collect();
            d.extend((0..8).map(|i| extra * (i as f64 + 1.0)));
            Tensor::new(&[1, 3, 8], d)
        };
        let valid = [true, true, false];
        let run = |extra| {
            let g = Graph::inference();
            let q = g.constant(Tensor::new(
                &[1, 1, 8],
                (0..8).map(|i| i as f64 * 0.1).collect(),
            ));
            let m = g.constant(mk(extra));
            mha.forward(&g, &store, q, m, Some(&valid))
                .value()
                .as_ref()
                .clone()
        };
        assert_eq!(run(0.0), run(100.0));
    }

    #[test]
    fn batch_norm_queues_running_stats() {
        let mut b = ParamBuilder::new(0);
        let bn = BatchNorm2d::new(&mut b, "bn", 2);
        let mut store = b.finish();
        let g = Graph::training();
        let x = g.constant(Tensor::new(&[2, 2, 1, 1], vec![1.0, 2.0, 3.0, 6.0]));
        bn.forward(&g, &store, x);
        store.apply_buffer_updates(g.take_buffer_updates());
        // Means 2 and 4; unbiased variances 2 and 8.
        let m = store.get(bn.running_mean).data().to_vec();
        let v = store.get(bn.running_var).data().to_vec();
        assert!((m[0] - 0.2).abs() < 1e-12 && (m[1] - 0.4).abs() < 1e-12);
        assert!((v[0] - (0.9 + 0.2)).abs() < 1e-12 && (v[1] - (0.9 + 0.8)).abs() < 1e-12);
    }
}
