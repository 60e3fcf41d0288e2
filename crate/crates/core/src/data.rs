//! Image-text samples and padded training batches.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::glyph::{render_procedural, GlyphImage, RenderError};
use crate::lexicon::{Component, Lexicon, LexiconError, SequenceKind, TokenSequence, PAD_ID};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: GlyphImage,
    pub character: char,
    pub radical_seq: TokenSequence,
    pub stroke_seq: TokenSequence,
}

impl Sample {
    pub fn new(
        image: GlyphImage,
        character: char,
        lexicon: &Lexicon,
    ) -> Result<Self, LexiconError> {
        let e = lexicon.entry(character)?;
        Ok(Self {
            image,
            character,
            radical_seq: e.radical_seq.clone(),
            stroke_seq: e.stroke_seq.clone(),
        })
    }

    pub fn sequence(&self, kind: SequenceKind) -> &TokenSequence {
        match kind {
            SequenceKind::Radical => &self.radical_seq,
            SequenceKind::Stroke => &self.stroke_seq,
        }
    }
}

/// Role of a padded slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Detail,
    Structure,
    Pad,
}

/// `rows x max_len` token ids with per-slot roles; padding uses [`PAD_ID`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaddedSequences {
    pub kind: SequenceKind,
    pub rows: usize,
    pub max_len: usize,
    pub ids: Vec<u32>,
    pub slots: Vec<Slot>,
    pub valid_len: Vec<usize>,
}

impl PaddedSequences {
    /// Pads to the longest sequence, or to `min_len` if that is larger.
    pub fn new(kind: SequenceKind, seqs: &[&TokenSequence], min_len: usize) -> Self {
        let max_len = seqs.iter().map(|s| s.len()).max().unwrap_or(0).max(min_len);
        let mut ids = Vec::with_capacity(seqs.len() * max_len);
        let mut slots = Vec::with_capacity(seqs.len() * max_len);
        for s in seqs {
            ids.extend(s.ids());
            slots.extend(s.mask().flags.iter().map(|f| match f {
                Component::Detail => Slot::Detail,
                Component::Structure => Slot::Structure,
            }));
            for _ in s.len()..max_len {
                ids.push(PAD_ID);
                slots.push(Slot::Pad);
            }
        }
        Self {
            kind,
            rows: seqs.len(),
            max_len,
            ids,
            slots,
            valid_len: seqs.iter().map(|s| s.len()).collect(),
        }
    }

    pub fn row_ids(&self, i: usize) -> &[u32] {
        &self.ids[i * self.max_len..(i + 1) * self.max_len]
    }

    pub fn row_slots(&self, i: usize) -> &[Slot] {
        &self.slots[i * self.max_len..(i + 1) * self.max_len]
    }
}

/// Equal ids iff equal characters; ids are assigned in first-seen order.
pub fn text_ids(chars: &[char]) -> Vec<usize> {
    let mut seen = BTreeMap::new();
    chars
        .iter()
        .map(|c| {
            let next = seen.len();
            *seen.entry(*c).or_insert(next)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub height: usize,
    pub width: usize,
    /// `size x height x width x 3`, stacked.
    pub images: Vec<f32>,
    pub characters: Vec<char>,
    pub radicals: PaddedSequences,
    pub strokes: PaddedSequences,
    pub text_ids: Vec<usize>,
}

impl Batch {
    pub fn from_samples(samples: &[&Sample]) -> Self {
        assert!(!samples.is_empty(), "empty batch");
        let (height, width) = (samples[0].image.height(), samples[0].image.width());
        let mut images = Vec::with_capacity(samples.len() * height * width * 3);
        for s in samples {
            assert_eq!((s.image.height(), s.image.width()), (height, width));
            images.extend_from_slice(s.image.pixels());
        }
        let characters: Vec<char> = samples.iter().map(|s| s.character).collect();
        let radical: Vec<&TokenSequence> = samples.iter().map(|s| &s.radical_seq).collect();
        let stroke: Vec<&TokenSequence> = samples.iter().map(|s| &s.stroke_seq).collect();
        Self {
            size: samples.len(),
            height,
            width,
            images,
            text_ids: text_ids(&characters),
            characters,
            radicals: PaddedSequences::new(SequenceKind::Radical, &radical, 0),
            strokes: PaddedSequences::new(SequenceKind::Stroke, &stroke, 0),
        }
    }

    pub fn sequences(&self, kind: SequenceKind) -> &PaddedSequences {
        match kind {
            SequenceKind::Radical => &self.radicals,
            SequenceKind::Stroke => &self.strokes,
        }
    }
}

/// Sample order of one epoch: a seeded shuffle that depends only on
/// `(seed, epoch)`.
pub fn epoch_order(len: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0xA076_1D64_78BD_642F));
    order.shuffle(&mut rng);
    order
}

/// Batches of one epoch in seeded order; the last batch may be short.
pub fn make_batches<'a>(
    samples: &'a [Sample],
    batch_size: usize,
    shuffle_seed: u64,
    epoch: u64,
) -> impl Iterator<Item = Batch> + 'a {
    assert!(batch_size >= 1, "batch size must be at least 1");
    let order = epoch_order(samples.len(), shuffle_seed, epoch);
    let chunks: Vec<Vec<usize>> = order.chunks(batch_size).map(|c| c.to_vec()).collect();
    chunks.into_iter().map(move |idx| {
        let picked: Vec<&Sample> = idx.iter().map(|&i| &samples[i]).collect();
        Batch::from_samples(&picked)
    })
}

/// Number of batches [`make_batches`] yields.
pub fn batches_per_epoch(samples: usize, batch_size: usize) -> usize {
    samples.div_ceil(batch_size)
}

/// Renders `variants` styles of every character. Style seeds are
/// `seed_base + v` for variant `v`.
pub fn render_samples(
    lexicon: &Lexicon,
    characters: &[char],
    size: usize,
    variants: usize,
    seed_base: u64,
) -> Result<Vec<Sample>, RenderError> {
    let mut out = Vec::with_capacity(characters.len() * variants);
    for &c in characters {
        for v in 0..variants {
            let image = render_procedural(c, lexicon, size, seed_base + v as u64)?;
            let sample =
                Sample::new(image, c, lexicon).map_err(|_| RenderError::CharNotInLexicon(c))?;
            out.push(sample);
        }
    }
    Ok(out)
}
