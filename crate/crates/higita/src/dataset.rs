//! Image manifests and cached rendered datasets.
//!
//! A dataset directory holds `manifest.tsv` (`relative_image_path \t CHAR`
//! per line) next to its image files.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use higita_core::data::{render_samples, Sample};
use higita_core::glyph::{GlyphImage, RenderError};
use higita_core::lexicon::Lexicon;
use image::imageops::FilterType;
use thiserror::Error;

use crate::files::{read_text, write_text, FileError};
use crate::pgm;

pub const MANIFEST: &str = "manifest.tsv";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    File(#[from] FileError),
    #[error("{manifest}: line {line}: expected `path<TAB>char`, got `{text}`")]
    BadLine {
        manifest: PathBuf,
        line: usize,
        text: String,
    },
    #[error("{manifest}: line {line}: character `{character}` is not in the lexicon")]
    CharNotInLexicon {
        manifest: PathBuf,
        line: usize,
        character: char,
    },
    #[error("{manifest}: line {line}: missing image {image}")]
    MissingImage {
        manifest: PathBuf,
        line: usize,
        image: PathBuf,
    },
    #[error("{manifest}: line {line}: unreadable image {image}: {reason}")]
    UnreadableImage {
        manifest: PathBuf,
        line: usize,
        image: PathBuf,
        reason: String,
    },
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// A sample together with the identifier used in prediction dumps.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub id: String,
    pub sample: Sample,
}

/// Decodes any supported image, bilinearly resizes it to `size x size`, and
/// keeps three channels (grayscale is replicated).
pub fn load_image(path: &Path, size: usize) -> Result<GlyphImage, image::ImageError> {
    let img = image::open(path)?;
    let s = size as u32;
    if img.color().has_color() {
        let rgb = image::imageops::resize(&img.into_rgb32f(), s, s, FilterType::Triangle);
        Ok(GlyphImage::from_rgb(size, size, rgb.into_raw()))
    } else {
        let luma = image::imageops::resize(&img.into_luma8(), s, s, FilterType::Triangle);
        let gray: Vec<f32> = luma
            .into_raw()
            .into_iter()
            .map(|v| f32::from(v) / 255.0)
            .collect();
        Ok(GlyphImage::from_gray(size, size, &gray))
    }
}

/// Reads `dir/manifest.tsv`. Blank lines and `#` comments are skipped.
pub fn ingest_manifest(
    dir: &Path,
    lexicon: &Lexicon,
    size: usize,
) -> Result<Vec<LabeledSample>, DatasetError> {
    let manifest = dir.join(MANIFEST);
    let text = read_text(&manifest)?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let bad = || DatasetError::BadLine {
            manifest: manifest.clone(),
            line,
            text: raw.to_string(),
        };
        let (rel, ch) = raw.split_once('\t').ok_or_else(bad)?;
        let mut cs = ch.trim().chars();
        let character = match (cs.next(), cs.next()) {
            (Some(c), None) => c,
            _ => return Err(bad()),
        };
        if !lexicon.contains(character) {
            return Err(DatasetError::CharNotInLexicon {
                manifest,
                line,
                character,
            });
        }
        let image = dir.join(rel);
        if !image.is_file() {
            return Err(DatasetError::MissingImage {
                manifest,
                line,
                image,
            });
        }
        let glyph = load_image(&image, size).map_err(|e| DatasetError::UnreadableImage {
            manifest: manifest.clone(),
            line,
            image: image.clone(),
            reason: e.to_string(),
        })?;
        let sample = Sample::new(glyph, character, lexicon).expect("character checked above");
        out.push(LabeledSample {
            id: rel.to_string(),
            sample,
        });
    }
    Ok(out)
}

/// File stem of a rendered image: codepoint and style variant.
pub fn rendered_id(c: char, variant: usize) -> String {
    format!("U{:04X}_{variant}", c as u32)
}

/// Renders `variants` styles of each character (style seeds
/// `seed_base + v`) into `out_dir` as PGM files plus a manifest. Returns the
/// number of images written.
pub fn render_dataset(
    lexicon: &Lexicon,
    chars: &[char],
    size: usize,
    variants: usize,
    seed_base: u64,
    out_dir: &Path,
) -> Result<usize, DatasetError> {
    std::fs::create_dir_all(out_dir).map_err(|source| DatasetError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let samples = render_samples(lexicon, chars, size, variants, seed_base)?;
    let mut manifest = String::new();
    for (i, s) in samples.iter().enumerate() {
        let name = format!("{}.pgm", rendered_id(s.character, i % variants));
        let path = out_dir.join(&name);
        pgm::write(&path, size, size, &s.image.to_gray_u8()).map_err(|e| DatasetError::Io {
            path: path.clone(),
            source: io::Error::other(e.to_string()),
        })?;
        let _ = writeln!(manifest, "{name}\t{}", s.character);
    }
    write_text(&out_dir.join(MANIFEST), &manifest)?;
    Ok(samples.len())
}

/// Renders in memory with the same identifiers `render_dataset` would use.
pub fn render_labeled(
    lexicon: &Lexicon,
    chars: &[char],
    size: usize,
    variants: usize,
    seed_base: u64,
) -> Result<Vec<LabeledSample>, RenderError> {
    Ok(render_samples(lexicon, chars, size, variants, seed_base)?
        .into_iter()
        .enumerate()
        .map(|(i, sample)| LabeledSample {
            id: format!("{}.pgm", rendered_id(sample.character, i % variants.max(1))),
            sample,
        })
        .collect())
}
