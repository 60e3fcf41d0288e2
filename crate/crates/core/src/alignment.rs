//! Fine-grained text-to-image matching and the contrastive objective.
//!
//! For a text token `t_n` and image tokens `v_1..v_M` with similarities
//! `s_nm = <t_n, v_m>`, the attention `a_nm = softmax_m(lambda * s_nm / ||s_n||)`
//! gives `psi = sum_n sum_m a_nm * s_nm`. A level similarity sums `psi` of
//! the detail tokens against the level's grid and of the structure tokens
//! against `F_u`, then divides once by the sequence length `E`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autograd::{Graph, Var};
use crate::data::{PaddedSequences, Slot};
use crate::image_encoder::{image_tokens, ImageFeatures};
use crate::lexicon::SequenceKind;
use crate::tensor::Tensor;
use crate::text_encoder::TextFeatures;

/// Lower bound on the norm in the L2 normalization of similarity rows.
pub const NORM_EPS: f64 = 1e-12;
pub const LAMBDA_INIT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    Stroke,
    RefinedStroke,
    Radical,
    RefinedRadical,
}

impl Level {
    pub const ALL: [Level; 4] = [
        Level::Stroke,
        Level::RefinedStroke,
        Level::Radical,
        Level::RefinedRadical,
    ];

    pub fn family(self) -> SequenceKind {
        match self {
            Level::Stroke | Level::RefinedStroke => SequenceKind::Stroke,
            Level::Radical | Level::RefinedRadical => SequenceKind::Radical,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Level::Stroke => "stroke",
            Level::RefinedStroke => "refined_stroke",
            Level::Radical => "radical",
            Level::RefinedRadical => "refined_radical",
        }
    }

    pub fn from_name(s: &str) -> Option<Level> {
        Level::ALL.into_iter().find(|l| l.name() == s)
    }

    pub fn text<'g>(self, t: &TextFeatures<'g>) -> Var<'g> {
        match self {
            Level::Stroke => t.q_s,
            Level::RefinedStroke => t.q_s_refined,
            Level::Radical => t.q_r,
            Level::RefinedRadical => t.q_r_refined,
        }
    }

    /// Grid matched against the detail tokens.
    pub fn image<'g>(self, f: &ImageFeatures<'g>) -> Var<'g> {
        match self {
            Level::Stroke => f.f_s,
            Level::RefinedStroke => f.f_s_refined,
            Level::Radical => f.f_r,
            Level::RefinedRadical => f.f_r_refined,
        }
    }
}

/// Which terms of the level similarity are kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Components {
    Both,
    DetailOnly,
    StructureOnly,
}

impl Components {
    pub fn name(self) -> &'static str {
        match self {
            Components::Both => "both",
            Components::DetailOnly => "detail_only",
            Components::StructureOnly => "structure_only",
        }
    }

    pub fn from_name(s: &str) -> Option<Components> {
        [
            Components::Both,
            Components::DetailOnly,
            Components::StructureOnly,
        ]
        .into_iter()
        .find(|c| c.name() == s)
    }

    fn detail(self) -> bool {
        self != Components::StructureOnly
    }

    fn structure(self) -> bool {
        self != Components::DetailOnly
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlignmentError {
    #[error("level {level:?} needs {expected:?} sequences, got {found:?}")]
    LevelMismatch {
        level: Level,
        expected: SequenceKind,
        found: SequenceKind,
    },
}

/// Positions of the detail and structure tokens of one sequence, in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoupledRepr {
    pub detail: Vec<usize>,
    pub structure: Vec<usize>,
    /// Valid length `E`.
    pub len: usize,
}

/// Splits one padded row by its slot roles; padding is dropped.
pub fn ts_d(slots: &[Slot]) -> DecoupledRepr {
    let mut d = DecoupledRepr {
        detail: Vec::new(),
        structure: Vec::new(),
        len: 0,
    };
    for (i, s) in slots.iter().enumerate() {
        match s {
            Slot::Detail => d.detail.push(i),
            Slot::Structure => d.structure.push(i),
            Slot::Pad => continue,
        }
        d.len += 1;
    }
    d
}

/// `[n_texts, bi]` where entry `(i, j)` is psi of the tokens owned by text
/// `i` against image `j`. `tokens: [n, d]`, `image: [bi, m, d]`,
/// `lambda` one element.
pub fn psi_batch<'g>(
    g: &'g Graph,
    tokens: Var<'g>,
    owner: &[usize],
    n_texts: usize,
    image: Var<'g>,
    lambda: Var<'g>,
) -> Var<'g> {
    let ishape = image.shape();
    let (bi, m, d) = (ishape[0], ishape[1], ishape[2]);
    let n = owner.len();
    if n == 0 {
        return g.constant(Tensor::zeros(&[n_texts, bi]));
    }
    assert_eq!(tokens.shape(), [n, d]);
    let flat = g.reshape(image, &[bi * m, d]);
    let sim = g.reshape(g.matmul(tokens, flat, false, true), &[n * bi, m]);
    let logits = g.mul_scalar(g.l2_normalize_last(sim, NORM_EPS), lambda);
    let attn = g.softmax_last(logits);
    let per_token = g.reshape(g.sum_last(g.mul(attn, sim)), &[n, bi]);
    let mut assign = vec![0.0; n_texts * n];
    for (t, &o) in owner.iter().enumerate() {
        assign[o * n + t] = 1.0;
    }
    g.matmul(
        g.constant(Tensor::new(&[n_texts, n], assign)),
        per_token,
        false,
        false,
    )
}

/// psi for one text `[n, d]` against one image `[m, d]`.
pub fn psi(text: &Tensor, image: &Tensor, lambda: f64) -> f64 {
    let g = Graph::inference();
    let n = text.dim(0);
    let (m, d) = (image.dim(0), image.dim(1));
    let t = g.constant(text.clone());
    let v = g.constant(image.clone().reshaped(&[1, m, d]));
    let l = g.constant(Tensor::scalar(lambda));
    psi_batch(&g, t, &vec![0; n], 1, v, l).item()
}

/// Rows of `q: [b, len, d]` at the selected `(row, position)` pairs, as
/// `[n, d]`, plus each token's owning row.
fn select<'g>(g: &'g Graph, q: Var<'g>, picks: &[(usize, usize)]) -> (Var<'g>, Vec<usize>) {
    let s = q.shape();
    let (len, d) = (s[1], s[2]);
    let flat = g.reshape(q, &[s[0] * len, d]);
    let idx: Vec<u32> = picks.iter().map(|&(r, p)| (r * len + p) as u32).collect();
    (g.embedding(flat, &idx), picks.iter().map(|p| p.0).collect())
}

/// `[bt, bi]` similarities between every text (rows) and every image
/// (columns) at `level`.
pub fn sim_matrix<'g>(
    g: &'g Graph,
    level: Level,
    image: &ImageFeatures<'g>,
    text: &TextFeatures<'g>,
    seqs: &PaddedSequences,
    lambda: Var<'g>,
    components: Components,
) -> Result<Var<'g>, AlignmentError> {
    if seqs.kind != level.family() {
        return Err(AlignmentError::LevelMismatch {
            level,
            expected: level.family(),
            found: seqs.kind,
        });
    }
    Ok(decoupled_sim(
        g,
        level.text(text),
        seqs,
        level.image(image),
        image.f_u,
        lambda,
        components,
    ))
}

/// Level similarity from explicit operands: `q: [bt, len, d]` laid out
/// as `seqs`, the detail grid and `f_u` as `[bi, d, h, w]`.
pub fn decoupled_sim<'g>(
    g: &'g Graph,
    q: Var<'g>,
    seqs: &PaddedSequences,
    detail_grid: Var<'g>,
    f_u: Var<'g>,
    lambda: Var<'g>,
    components: Components,
) -> Var<'g> {
    let bt = seqs.rows;
    let bi = f_u.shape()[0];
    let mut detail = Vec::new();
    let mut structure = Vec::new();
    let mut inv_len = Vec::with_capacity(bt);
    for r in 0..bt {
        let dec = ts_d(seqs.row_slots(r));
        detail.extend(dec.detail.iter().map(|&p| (r, p)));
        structure.extend(dec.structure.iter().map(|&p| (r, p)));
        inv_len.push(1.0 / dec.len as f64);
    }
    let mut parts = Vec::new();
    if components.detail() {
        let (tok, owner) = select(g, q, &detail);
        parts.push(psi_batch(
            g,
            tok,
            &owner,
            bt,
            image_tokens(g, detail_grid),
            lambda,
        ));
    }
    if components.structure() {
        let (tok, owner) = select(g, q, &structure);
        parts.push(psi_batch(g, tok, &owner, bt, image_tokens(g, f_u), lambda));
    }
    let total = if parts.len() == 2 {
        g.add(parts[0], parts[1])
    } else {
        parts[0]
    };
    let scale: Vec<f64> = inv_len
        .iter()
        .flat_map(|&s| core::iter::repeat_n(s, bi))
        .collect();
    g.mul(total, g.constant(Tensor::new(&[bt, bi], scale)))
}

/// Negated symmetric InfoNCE over a square `sim` (text rows, image
/// columns). For anchor `i`, every other index carrying the same text id
/// is dropped from both of its denominators.
pub fn contrastive_loss<'g>(g: &'g Graph, sim: Var<'g>, text_ids: &[usize]) -> Var<'g> {
    let b = text_ids.len();
    assert_eq!(sim.shape(), [b, b], "similarity matrix must be b x b");
    let mut mask = vec![0.0; b * b];
    let mut eye = vec![0.0; b * b];
    for i in 0..b {
        eye[i * b + i] = 1.0;
        for j in 0..b {
            if j != i && text_ids[j] == text_ids[i] {
                mask[i * b + j] = f64::NEG_INFINITY;
            }
        }
    }
    // The duplicate relation is symmetric, so the same mask serves the
    // transposed (image-to-text) direction.
    let mask = g.constant(Tensor::new(&[b, b], mask));
    let rows = g.sum_all(g.logsumexp_last(g.add(sim, mask)));
    let cols = g.sum_all(g.logsumexp_last(g.add(g.permute(sim, &[1, 0]), mask)));
    let diag = g.sum_all(g.mul(sim, g.constant(Tensor::new(&[b, b], eye))));
    let inner = g.sub(g.scale(diag, 2.0), g.add(rows, cols));
    g.scale(inner, -1.0 / (2.0 * b as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Stroke-level weight.
    pub alpha: f64,
    /// Radical-level weight.
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.1,
        }
    }
}

impl LossWeights {
    pub fn of(&self, level: Level) -> f64 {
        match level.family() {
            SequenceKind::Stroke => self.alpha,
            SequenceKind::Radical => self.beta,
        }
    }
}

/// Per-level losses (in [`Level::ALL`] order) and their weighted total.
pub fn multi_level_loss<'g>(
    g: &'g Graph,
    sims: &[Var<'g>; 4],
    weights: &LossWeights,
    text_ids: &[usize],
) -> ([Var<'g>; 4], Var<'g>) {
    let losses = sims.map(|s| contrastive_loss(g, s, text_ids));
    let mut total = g.scale(losses[0], weights.of(Level::ALL[0]));
    for (l, level) in losses.iter().zip(Level::ALL).skip(1) {
        total = g.add(total, g.scale(*l, weights.of(level)));
    }
    (losses, total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ts_d_counts() {
        use Slot::*;
        let d = ts_d(&[Structure, Structure, Detail, Detail, Detail, Detail, Pad]);
        assert_eq!((d.structure.len(), d.detail.len(), d.len), (2, 4, 6));
        assert!(ts_d(&[Detail, Detail]).structure.is_empty());
    }

    #[test]
    fn psi_single_pair_is_inner_product() {
        let t = Tensor::new(&[1, 3], vec![1.0, 2.0, -1.0]);
        let v = Tensor::new(&[1, 3], vec![0.5, 0.25, 2.0]);
        assert!((psi(&t, &v, 3.0) - (0.5 + 0.5 - 2.0)).abs() < 1e-15);
    }

    #[test]
    fn psi_constant_similarity_gives_uniform_attention() {
        // Every image token equal: each text token contributes <t, v>.
        let t = Tensor::new(&[2, 2], vec![1.0, 0.0, 0.5, 0.5]);
        let v = Tensor::new(&[3, 2], vec![2.0, 1.0, 2.0, 1.0, 2.0, 1.0]);
        assert!((psi(&t, &v, 7.0) - (2.0 + 1.5)).abs() < 1e-12);
    }

    #[test]
    fn empty_text_gives_zero() {
        let t = Tensor::new(&[0, 2], vec![]);
        let v = Tensor::new(&[2, 2], vec![1.0; 4]);
        assert_eq!(psi(&t, &v, 1.0), 0.0);
    }

    #[test]
    fn loss_edge_cases() {
        let g = Graph::inference();
        let s = g.constant(Tensor::new(&[1, 1], vec![3.7]));
        assert_eq!(contrastive_loss(&g, s, &[0]).item(), 0.0);
        let s = g.constant(Tensor::new(&[2, 2], vec![1.0, 5.0, -2.0, 0.3]));
        assert_eq!(contrastive_loss(&g, s, &[0, 0]).item(), 0.0);
        let s = g.constant(Tensor::new(&[2, 2], vec![1.0, 5.0, -2.0, 0.3]));
        assert!(contrastive_loss(&g, s, &[0, 1]).item() > 0.0);
    }

    #[test]
    fn zero_weights_give_zero_total() {
        let g = Graph::inference();
        let s = g.constant(Tensor::new(&[2, 2], vec![1.0, 5.0, -2.0, 0.3]));
        let w = LossWeights {
            alpha: 0.0,
            beta: 0.0,
        };
        assert_eq!(
            multi_level_loss(&g, &[s, s, s, s], &w, &[0, 1]).1.item(),
            0.0
        );
    }

    #[test]
    fn names_round_trip() {
        for l in Level::ALL {
            assert_eq!(Level::from_name(l.name()), Some(l));
        }
        assert_eq!(
            Components::from_name("structure_only"),
            Some(Components::StructureOnly)
        );
    }
}
