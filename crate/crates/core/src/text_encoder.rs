//! Radical and stroke sequence encoders and their text-side fusion.
//!
//! Each sequence family has its own transformer encoder with learned
//! positional embeddings. Fusion stacks `O` layers of a symmetric
//! cross-attention block (radicals query strokes, strokes query radicals)
//! followed by a global self-attention block over the concatenation
//! `[radical tokens; stroke tokens]`. Every output keeps its query length.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autograd::{Graph, Var};
use crate::data::{PaddedSequences, Slot};
use crate::lexicon::{vocab_size, SequenceKind, MAX_SEQ_LEN};
use crate::nn::{Embedding, LayerNorm, ParamBuilder, ParamId, ParamStore, TransformerBlock};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TextEncoderError {
    #[error("token id {id} is outside the {kind:?} vocabulary of {vocab}")]
    OutOfVocab {
        kind: SequenceKind,
        id: u32,
        vocab: usize,
    },
    #[error("padded length {len} exceeds the maximum {max}")]
    TooLong { len: usize, max: usize },
    #[error("radical and stroke batches have different sizes ({radicals} vs {strokes})")]
    BatchMismatch { radicals: usize, strokes: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEncoderConfig {
    /// Encoder depth `L`.
    pub layers: usize,
    /// Fusion depth `O`.
    pub fusion_layers: usize,
    pub dim: usize,
    pub heads: usize,
    pub max_len: usize,
    /// Number of distinct radicals `V_r`.
    pub radical_count: usize,
    /// Scale of the initial residual-branch output weights in every
    /// transformer block (0 starts each block as the identity).
    #[serde(default)]
    pub residual_init: f64,
}

impl TextEncoderConfig {
    pub fn validate(&self) -> bool {
        self.heads > 0
            && self.dim.is_multiple_of(self.heads)
            && self.max_len >= 1
            && self.max_len <= MAX_SEQ_LEN
    }
}

impl Default for TextEncoderConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            fusion_layers: 3,
            dim: 128,
            heads: 4,
            max_len: MAX_SEQ_LEN,
            radical_count: 0,
            residual_init: 0.0,
        }
    }
}

/// `rows * max_len` flags: true for real tokens.
pub fn valid_flags(p: &PaddedSequences) -> Vec<bool> {
    p.slots.iter().map(|s| *s != Slot::Pad).collect()
}

#[derive(Debug, Clone)]
pub struct SequenceEncoder {
    pub kind: SequenceKind,
    pub vocab: usize,
    pub max_len: usize,
    pub token: Embedding,
    pub position: Embedding,
    pub blocks: Vec<TransformerBlock>,
    pub norm: LayerNorm,
}

impl SequenceEncoder {
    pub fn new(
        b: &mut ParamBuilder,
        name: &str,
        kind: SequenceKind,
        cfg: &TextEncoderConfig,
    ) -> Self {
        let vocab = vocab_size(kind, cfg.radical_count);
        Self {
            kind,
            vocab,
            max_len: cfg.max_len,
            token: Embedding::new(b, &format!("{name}.token"), vocab, cfg.dim, 1.0),
            position: Embedding::new(b, &format!("{name}.position"), cfg.max_len, cfg.dim, 0.1),
            blocks: (0..cfg.layers)
                .map(|i| {
                    TransformerBlock::new(
                        b,
                        &format!("{name}.block{i}"),
                        cfg.dim,
                        cfg.heads,
                        false,
                        cfg.residual_init,
                    )
                })
                .collect(),
            norm: LayerNorm::new(b, &format!("{name}.norm"), cfg.dim),
        }
    }

    /// `[rows, max_len, dim]`; padded positions are computed but never
    /// attended to.
    pub fn forward<'g>(
        &self,
        g: &'g Graph,
        store: &ParamStore,
        seqs: &PaddedSequences,
    ) -> Result<Var<'g>, TextEncoderError> {
        let (rows, len) = (seqs.rows, seqs.max_len);
        if len > self.max_len {
            return Err(TextEncoderError::TooLong {
                len,
                max: self.max_len,
            });
        }
        if let Some(&id) = seqs.ids.iter().find(|&&id| id as usize >= self.vocab) {
            return Err(TextEncoderError::OutOfVocab {
                kind: self.kind,
                id,
                vocab: self.vocab,
            });
        }
        let dim = self.token.dim;
        let tok = g.reshape(self.token.forward(g, store, &seqs.ids), &[rows, len, dim]);
        let positions: Vec<u32> = (0..len as u32).collect();
        let pos = g.reshape(self.position.forward(g, store, &positions), &[len, dim]);
        let mut x = g.add_broadcast(tok, pos);
        let valid = valid_flags(seqs);
        for block in &self.blocks {
            x = block.forward(g, store, x, None, Some(&valid));
        }
        Ok(self.norm.forward(g, store, x))
    }
}

/// One fusion layer: symmetric cross-attention then global self-attention.
#[derive(Debug, Clone)]
pub struct FusionLayer {
    /// Radical queries over stroke keys.
    pub radical_cross: TransformerBlock,
    /// Stroke queries over radical keys.
    pub stroke_cross: TransformerBlock,
    pub global: TransformerBlock,
}

impl FusionLayer {
    pub fn new(b: &mut ParamBuilder, name: &str, dim: usize, heads: usize, out_scale: f64) -> Self {
        Self {
            radical_cross: TransformerBlock::new(
                b,
                &format!("{name}.radical_cross"),
                dim,
                heads,
                true,
                out_scale,
            ),
            stroke_cross: TransformerBlock::new(
                b,
                &format!("{name}.stroke_cross"),
                dim,
                heads,
                true,
                out_scale,
            ),
            global: TransformerBlock::new(
                b,
                &format!("{name}.global"),
                dim,
                heads,
                false,
                out_scale,
            ),
        }
    }

    /// Symmetric cross-attention; outputs keep their query lengths.
    pub fn scab<'g>(
        &self,
        g: &'g Graph,
        store: &ParamStore,
        q_r: Var<'g>,
        q_s: Var<'g>,
        valid_r: &[bool],
        valid_s: &[bool],
    ) -> (Var<'g>, Var<'g>) {
        let r = self
            .radical_cross
            .forward(g, store, q_r, Some(q_s), Some(valid_s));
        let s = self
            .stroke_cross
            .forward(g, store, q_s, Some(q_r), Some(valid_r));
        (r, s)
    }

    /// Self-attention over `[radical part; stroke part]` along the token
    /// axis; `valid` covers the concatenated layout.
    pub fn gsab<'g>(
        &self,
        g: &'g Graph,
        store: &ParamStore,
        r: Var<'g>,
        s: Var<'g>,
        valid: &[bool],
    ) -> Var<'g> {
        let m = g.concat(&[r, s], 1);
        self.global.forward(g, store, m, None, Some(valid))
    }
}

/// Per-row concatenation of two `rows x len` flag grids.
fn concat_flags(a: &[bool], la: usize, b: &[bool], lb: usize) -> Vec<bool> {
    let rows = a
        .len()
        .checked_div(la)
        .unwrap_or_else(|| b.len() / lb.max(1));
    let mut out = Vec::with_capacity(rows * (la + lb));
    for r in 0..rows {
        out.extend_from_slice(&a[r * la..(r + 1) * la]);
        out.extend_from_slice(&b[r * lb..(r + 1) * lb]);
    }
    out
}

#[derive(Debug, Clone)]
pub struct Fusion {
    pub layers: Vec<FusionLayer>,
}

impl Fusion {
    pub fn new(b: &mut ParamBuilder, cfg: &TextEncoderConfig) -> Self {
        Self {
            layers: (0..cfg.fusion_layers)
                .map(|i| {
                    FusionLayer::new(
                        b,
                        &format!("text.fusion{i}"),
                        cfg.dim,
                        cfg.heads,
                        cfg.residual_init,
                    )
                })
                .collect(),
        }
    }

    /// Refines `q_r: [b, K, d]` and `q_s: [b, J, d]` (padded lengths).
    pub fn forward<'g>(
        &self,
        g: &'g Graph,
        store: &ParamStore,
        mut q_r: Var<'g>,
        mut q_s: Var<'g>,
        valid_r: &[bool],
        valid_s: &[bool],
    ) -> (Var<'g>, Var<'g>) {
        let (k, j) = (q_r.shape()[1], q_s.shape()[1]);
        let valid = concat_flags(valid_r, k, valid_s, j);
        for layer in &self.layers {
            let (r, s) = layer.scab(g, store, q_r, q_s, valid_r, valid_s);
            let m = layer.gsab(g, store, r, s, &valid);
            q_r = g.narrow(m, 1, 0, k);
            q_s = g.narrow(m, 1, k, j);
        }
        (q_r, q_s)
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        for l in &self.layers {
            for blk in [&l.radical_cross, &l.stroke_cross, &l.global] {
                ids.extend(block_params(blk));
            }
        }
        ids
    }
}

fn block_params(b: &TransformerBlock) -> Vec<ParamId> {
    let mut ids = Vec::new();
    for n in [Some(&b.norm_q), b.norm_kv.as_ref(), Some(&b.norm_ff)]
        .into_iter()
        .flatten()
    {
        ids.extend([n.gamma, n.beta]);
    }
    for l in [
        &b.attn.q, &b.attn.k, &b.attn.v, &b.attn.o, &b.ff.up, &b.ff.down,
    ] {
        ids.extend([l.weight, l.bias]);
    }
    ids
}

/// The four sequence representations of a batch, each `[b, len, d]` in
/// the padded layout of the inputs.
#[derive(Debug, Clone, Copy)]
pub struct TextFeatures<'g> {
    pub q_r: Var<'g>,
    pub q_s: Var<'g>,
    pub q_r_refined: Var<'g>,
    pub q_s_refined: Var<'g>,
}

#[derive(Debug, Clone)]
pub struct TextEncoder {
    pub config: TextEncoderConfig,
    pub radical: SequenceEncoder,
    pub stroke: SequenceEncoder,
    pub fusion: Fusion,
}

impl TextEncoder {
    pub fn new(b: &mut ParamBuilder, cfg: &TextEncoderConfig) -> Self {
        Self {
            config: cfg.clone(),
            radical: SequenceEncoder::new(b, "text.radical", SequenceKind::Radical, cfg),
            stroke: SequenceEncoder::new(b, "text.stroke", SequenceKind::Stroke, cfg),
            fusion: Fusion::new(b, cfg),
        }
    }

    pub fn forward<'g>(
        &self,
        g: &'g Graph,
        store: &ParamStore,
        radicals: &PaddedSequences,
        strokes: &PaddedSequences,
    ) -> Result<TextFeatures<'g>, TextEncoderError> {
        if radicals.rows != strokes.rows {
            return Err(TextEncoderError::BatchMismatch {
                radicals: radicals.rows,
                strokes: strokes.rows,
            });
        }
        let q_r = self.radical.forward(g, store, radicals)?;
        let q_s = self.stroke.forward(g, store, strokes)?;
        let (q_r_refined, q_s_refined) = self.fusion.forward(
            g,
            store,
            q_r,
            q_s,
            &valid_flags(radicals),
            &valid_flags(strokes),
        );
        Ok(TextFeatures {
            q_r,
            q_s,
            q_r_refined,
            q_s_refined,
        })
    }
}
