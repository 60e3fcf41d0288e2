//! Gallery retrieval, accuracy, and token-level similarity maps.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{decoupled_sim, Components, Level};
use crate::autograd::Graph;
use crate::data::{PaddedSequences, Slot};
use crate::image_encoder::image_tokens;
use crate::lexicon::{Lexicon, SequenceKind, TokenSequence};
use crate::model::{HiGita, ModelError};
use crate::nn::ParamStore;
use crate::tensor::Tensor;

/// Text sequences encoded per forward pass when building a gallery.
const GALLERY_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RetrievalError {
    #[error("character `{0}` is not in the lexicon")]
    CharNotInLexicon(char),
    #[error("candidate `{0}` is listed more than once")]
    DuplicateCandidate(char),
    #[error("gallery is empty")]
    EmptyGallery,
    #[error("nothing to evaluate")]
    EmptySplit,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReprChoice {
    pub level: Level,
    pub components: Components,
}

impl Default for ReprChoice {
    fn default() -> Self {
        Self {
            level: Level::RefinedStroke,
            components: Components::Both,
        }
    }
}

/// Text-side representations of every candidate at one level, in
/// candidate order. `tokens` is `[candidates, max_len, d]` laid out like
/// `sequences`; padded rows are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Gallery {
    pub level: Level,
    pub candidates: Vec<char>,
    pub sequences: PaddedSequences,
    pub tokens: Tensor,
}

impl Gallery {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.tokens.dim(2)
    }
}

fn sequences<'a>(
    lexicon: &'a Lexicon,
    chars: &[char],
    kind: SequenceKind,
) -> Result<Vec<&'a TokenSequence>, RetrievalError> {
    chars
        .iter()
        .map(|&c| {
            let e = lexicon.get(c).ok_or(RetrievalError::CharNotInLexicon(c))?;
            Ok(match kind {
                SequenceKind::Radical => &e.radical_seq,
                SequenceKind::Stroke => &e.stroke_seq,
            })
        })
        .collect()
}

/// Encodes every candidate's text at `level`. Deterministic: each
/// sequence's representation does not depend on what it is batched with.
pub fn embed_gallery(
    model: &HiGita,
    store: &ParamStore,
    lexicon: &Lexicon,
    candidates: &[char],
    level: Level,
) -> Result<Gallery, RetrievalError> {
    let mut seen = BTreeSet::new();
    for &c in candidates {
        if !seen.insert(c) {
            return Err(RetrievalError::DuplicateCandidate(c));
        }
        if !lexicon.contains(c) {
            return Err(RetrievalError::CharNotInLexicon(c));
        }
    }
    let kind = level.family();
    let all = PaddedSequences::new(kind, &sequences(lexicon, candidates, kind)?, 0);
    let d = model.config.text.dim;
    let max_len = all.max_len;
    let mut tokens = vec![0.0; candidates.len() * max_len * d];
    for (chunk_idx, chunk) in candidates.chunks(GALLERY_CHUNK).enumerate() {
        let r = sequences(lexicon, chunk, SequenceKind::Radical)?;
        let s = sequences(lexicon, chunk, SequenceKind::Stroke)?;
        let r = PaddedSequences::new(SequenceKind::Radical, &r, 0);
        let s = PaddedSequences::new(SequenceKind::Stroke, &s, 0);
        let g = Graph::inference();
        let feats = model
            .text
            .forward(&g, store, &r, &s)
            .map_err(ModelError::from)?;
        let q = level.text(&feats).value();
        let own = if kind == SequenceKind::Radical {
            &r
        } else {
            &s
        };
        for row in 0..chunk.len() {
            let dst_row = chunk_idx * GALLERY_CHUNK + row;
            let n = own.valid_len[row];
            let src = &q.data()[row * own.max_len * d..(row * own.max_len + n) * d];
            tokens[dst_row * max_len * d..dst_row * max_len * d + n * d].copy_from_slice(src);
        }
    }
    Ok(Gallery {
        level,
        candidates: candidates.to_vec(),
        sequences: all,
        tokens: Tensor::new(&[candidates.len(), max_len, d], tokens),
    })
}

/// `[images][candidates]` scores of NHWC `[0, 1]` images against a gallery.
pub fn score_images(
    model: &HiGita,
    store: &ParamStore,
    gallery: &Gallery,
    images: &[f32],
    count: usize,
    components: Components,
) -> Result<Vec<Vec<f64>>, RetrievalError> {
    if gallery.is_empty() {
        return Err(RetrievalError::EmptyGallery);
    }
    let g = Graph::inference();
    let feats = model
        .image
        .encode(&g, store, images, count)
        .map_err(ModelError::from)?;
    let q = g.constant(gallery.tokens.clone());
    let lambda = g.param(store, model.lambda);
    let sim = decoupled_sim(
        &g,
        q,
        &gallery.sequences,
        gallery.level.image(&feats),
        feats.f_u,
        lambda,
        components,
    )
    .value();
    let n = gallery.len();
    Ok((0..count)
        .map(|j| (0..n).map(|i| sim.data()[i * count + j]).collect())
        .collect())
}

/// Candidates ranked by descending score; ties keep candidate order.
pub fn rank(candidates: &[char], scores: &[f64]) -> Vec<(char, f64)> {
    let mut ranked: Vec<(char, f64)> = candidates
        .iter()
        .copied()
        .zip(scores.iter().copied())
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranked
}

/// Ranked candidates for one `size x size x 3` image.
pub fn recognize(
    model: &HiGita,
    store: &ParamStore,
    gallery: &Gallery,
    image: &[f32],
    components: Components,
) -> Result<Vec<(char, f64)>, RetrievalError> {
    let scores = score_images(model, store, gallery, image, 1, components)?;
    Ok(rank(&gallery.candidates, &scores[0]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub gold: char,
    pub top1: char,
    pub score: f64,
}

/// Top-1 predictions for a list of images, scored `batch` at a time.
pub fn predict(
    model: &HiGita,
    store: &ParamStore,
    gallery: &Gallery,
    images: &[(&[f32], char)],
    components: Components,
    batch: usize,
) -> Result<Vec<Prediction>, RetrievalError> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(batch.max(1)) {
        let pixels: Vec<f32> = chunk.iter().flat_map(|(p, _)| p.iter().copied()).collect();
        let scores = score_images(model, store, gallery, &pixels, chunk.len(), components)?;
        for ((_, gold), s) in chunk.iter().zip(scores) {
            let (top1, score) = rank(&gallery.candidates, &s)[0];
            out.push(Prediction {
                gold: *gold,
                top1,
                score,
            });
        }
    }
    Ok(out)
}

/// Fraction of predictions whose top-1 equals the gold label.
pub fn cacc(predictions: &[Prediction]) -> Result<f64, RetrievalError> {
    if predictions.is_empty() {
        return Err(RetrievalError::EmptySplit);
    }
    let correct = predictions.iter().filter(|p| p.top1 == p.gold).count();
    Ok(correct as f64 / predictions.len() as f64)
}

/// `(correct, total)` per gold class.
pub fn per_class(predictions: &[Prediction]) -> BTreeMap<char, (usize, usize)> {
    let mut m = BTreeMap::new();
    for p in predictions {
        let e = m.entry(p.gold).or_insert((0, 0));
        e.0 += usize::from(p.top1 == p.gold);
        e.1 += 1;
    }
    m
}

/// Token-level similarities of one text token against an image grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMap {
    /// One of `stroke`, `radical`, `refined_stroke`, `refined_radical`,
    /// `structure`.
    pub level: &'static str,
    /// Position of the token in its sequence.
    pub token: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    /// Row-major `grid_h * grid_w` inner products.
    pub values: Vec<f64>,
}

impl SimilarityMap {
    /// Min-max scaling to `0..=255` (a constant map is all zeros), nearest
    /// neighbor upsampled to `size x size`.
    pub fn to_gray(&self, size: usize) -> Vec<u8> {
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self
            .values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let scaled: Vec<u8> = self
            .values
            .iter()
            .map(|v| {
                if span > 0.0 {
                    libm::round((v - lo) / span * 255.0) as u8
                } else {
                    0
                }
            })
            .collect();
        let mut out = Vec::with_capacity(size * size);
        for y in 0..size {
            let gy = y * self.grid_h / size;
            for x in 0..size {
                out.push(scaled[gy * self.grid_w + x * self.grid_w / size]);
            }
        }
        out
    }
}

/// Similarity maps of character `c` against one image: every token of the
/// four level sequences against its level grid, and the structure tokens
/// of the refined stroke sequence against `F_u`.
pub fn similarity_maps(
    model: &HiGita,
    store: &ParamStore,
    lexicon: &Lexicon,
    image: &[f32],
    c: char,
) -> Result<Vec<SimilarityMap>, RetrievalError> {
    let e = lexicon.get(c).ok_or(RetrievalError::CharNotInLexicon(c))?;
    let r = PaddedSequences::new(SequenceKind::Radical, &[&e.radical_seq], 0);
    let s = PaddedSequences::new(SequenceKind::Stroke, &[&e.stroke_seq], 0);
    let g = Graph::inference();
    let img = model
        .image
        .encode(&g, store, image, 1)
        .map_err(ModelError::from)?;
    let txt = model
        .text
        .forward(&g, store, &r, &s)
        .map_err(ModelError::from)?;
    let d = model.config.text.dim;
    let mut maps = Vec::new();
    let mut emit =
        |name: &'static str, q: &Tensor, grid: crate::autograd::Var<'_>, positions: &[usize]| {
            let shape = grid.shape();
            let (gh, gw) = (shape[2], shape[3]);
            let tokens = image_tokens(&g, grid).value();
            for &p in positions {
                let t = &q.data()[p * d..(p + 1) * d];
                let values = tokens
                    .data()
                    .chunks_exact(d)
                    .map(|v| t.iter().zip(v).map(|(a, b)| a * b).sum())
                    .collect();
                maps.push(SimilarityMap {
                    level: name,
                    token: p,
                    grid_h: gh,
                    grid_w: gw,
                    values,
                });
            }
        };
    for level in [
        Level::Stroke,
        Level::Radical,
        Level::RefinedStroke,
        Level::RefinedRadical,
    ] {
        let seqs = if level.family() == SequenceKind::Radical {
            &r
        } else {
            &s
        };
        let positions: Vec<usize> = (0..seqs.valid_len[0]).collect();
        emit(
            level.name(),
            &level.text(&txt).value(),
            level.image(&img),
            &positions,
        );
    }
    let structure: Vec<usize> = s
        .row_slots(0)
        .iter()
        .enumerate()
        .filter(|(_, sl)| **sl == Slot::Structure)
        .map(|(i, _)| i)
        .collect();
    emit("structure", &txt.q_s_refined.value(), img.f_u, &structure);
    Ok(maps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(g: char, t: char) -> Prediction {
        Prediction {
            gold: g,
            top1: t,
            score: 0.0,
        }
    }

    #[test]
    fn accuracy_edges() {
        assert_eq!(cacc(&[pred('a', 'a'), pred('b', 'b')]).unwrap(), 1.0);
        assert_eq!(cacc(&[pred('a', 'b')]).unwrap(), 0.0);
        assert_eq!(cacc(&[]), Err(RetrievalError::EmptySplit));
        let pc = per_class(&[pred('a', 'a'), pred('a', 'b'), pred('b', 'b')]);
        assert_eq!(pc[&'a'], (1, 2));
        assert_eq!(pc[&'b'], (1, 1));
    }

    #[test]
    fn ties_keep_candidate_order() {
        let r = rank(&['x', 'y', 'z'], &[1.0, 2.0, 2.0]);
        assert_eq!(r.iter().map(|p| p.0).collect::<Vec<_>>(), ['y', 'z', 'x']);
    }

    #[test]
    fn constant_map_is_black() {
        let m = SimilarityMap {
            level: "stroke",
            token: 0,
            grid_h: 2,
            grid_w: 2,
            values: vec![3.0; 4],
        };
        assert!(m.to_gray(8).iter().all(|&v| v == 0));
        let m = SimilarityMap {
            values: vec![0.0, 1.0, 2.0, 3.0],
            ..m
        };
        let px = m.to_gray(4);
        assert_eq!(px[0], 0);
        assert_eq!(px[3], 85);
        assert_eq!(px[15], 255);
    }
}
