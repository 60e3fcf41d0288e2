//! Deterministic procedural glyph renderer.
//!
//! The canvas is recursively partitioned by each structure operator of the
//! stroke tree and every leaf stroke is drawn as a line primitive inside its
//! cell. Layout table:
//!
//! * `⿰` / `⿱`: 50/50 split along x / y.
//! * `⿲` / `⿳`: 34/33/33 split along x / y.
//! * surround operators: the first child fills the box, the second sits in an
//!   inner box at 60% scale pushed toward the operator's opening.
//! * `⿻`: both children fill the box.
//!
//! Ink is 0.0 on a 1.0 background.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::lexicon::{DecompositionTree, Lexicon, Node, StrokeClass, StructureOp};

/// Feature grids go down to 1/32 of the input side.
pub const SIZE_MULTIPLE: usize = 32;

const INSET: f64 = 0.15;
const JITTER: f64 = 0.05;
const SURROUND_SCALE: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("character `{0}` is not in the lexicon")]
    CharNotInLexicon(char),
    #[error("image size {0} is not a positive multiple of {SIZE_MULTIPLE}")]
    BadSize(usize),
}

/// Dense `height x width x 3` image (HWC, interleaved), values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlyphImage {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl GlyphImage {
    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self {
            height,
            width,
            pixels: vec![value; height * width * 3],
        }
    }

    /// Replicates a single-channel image into three channels.
    pub fn from_gray(height: usize, width: usize, gray: &[f32]) -> Self {
        assert_eq!(gray.len(), height * width);
        let pixels = gray.iter().flat_map(|&v| [v, v, v]).collect();
        Self {
            height,
            width,
            pixels,
        }
    }

    pub fn from_rgb(height: usize, width: usize, pixels: Vec<f32>) -> Self {
        assert_eq!(pixels.len(), height * width * 3);
        Self {
            height,
            width,
            pixels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.pixels[(y * self.width + x) * 3 + c]
    }

    /// Channel mean per pixel.
    pub fn to_gray(&self) -> Vec<f32> {
        self.pixels
            .chunks_exact(3)
            .map(|p| (p[0] + p[1] + p[2]) / 3.0)
            .collect()
    }

    pub fn to_gray_u8(&self) -> Vec<u8> {
        self.to_gray()
            .into_iter()
            .map(|v| libm::roundf(v.clamp(0.0, 1.0) * 255.0) as u8)
            .collect()
    }

    pub fn is_valid_size(&self) -> bool {
        self.height == self.width && self.height > 0 && self.height.is_multiple_of(SIZE_MULTIPLE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Rect {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Rect {
    const UNIT: Rect = Rect {
        x0: 0.0,
        y0: 0.0,
        x1: 1.0,
        y1: 1.0,
    };

    fn w(&self) -> f64 {
        self.x1 - self.x0
    }

    fn h(&self) -> f64 {
        self.y1 - self.y0
    }

    fn split_x(&self, fractions: &[f64]) -> Vec<Rect> {
        let mut x = self.x0;
        fractions
            .iter()
            .map(|f| {
                let r = Rect {
                    x0: x,
                    x1: x + f * self.w(),
                    ..*self
                };
                x = r.x1;
                r
            })
            .collect()
    }

    fn split_y(&self, fractions: &[f64]) -> Vec<Rect> {
        let mut y = self.y0;
        fractions
            .iter()
            .map(|f| {
                let r = Rect {
                    y0: y,
                    y1: y + f * self.h(),
                    ..*self
                };
                y = r.y1;
                r
            })
            .collect()
    }

    /// Inner box at [`SURROUND_SCALE`], placed at relative position
    /// `(ax, ay)` of the free space (0 = left/top, 0.5 = centre, 1 = right/bottom).
    fn inner(&self, ax: f64, ay: f64) -> Rect {
        let (w, h) = (self.w() * SURROUND_SCALE, self.h() * SURROUND_SCALE);
        let x0 = self.x0 + (self.w() - w) * ax;
        let y0 = self.y0 + (self.h() - h) * ay;
        Rect {
            x0,
            y0,
            x1: x0 + w,
            y1: y0 + h,
        }
    }

    fn at(&self, u: f64, v: f64) -> (f64, f64) {
        (self.x0 + u * self.w(), self.y0 + v * self.h())
    }
}

fn child_rects(op: StructureOp, r: Rect) -> Vec<Rect> {
    const THIRDS: [f64; 3] = [0.34, 0.33, 0.33];
    match op {
        StructureOp::LeftToRight => r.split_x(&[0.5, 0.5]),
        StructureOp::AboveToBelow => r.split_y(&[0.5, 0.5]),
        StructureOp::LeftMiddleRight => r.split_x(&THIRDS),
        StructureOp::AboveMiddleBelow => r.split_y(&THIRDS),
        StructureOp::Overlaid => vec![r, r],
        StructureOp::FullSurround => vec![r, r.inner(0.5, 0.5)],
        // Opening at the bottom.
        StructureOp::AboveSurround => vec![r, r.inner(0.5, 1.0)],
        // Opening at the top.
        StructureOp::BelowSurround => vec![r, r.inner(0.5, 0.0)],
        // Opening on the right.
        StructureOp::LeftSurround => vec![r, r.inner(1.0, 0.5)],
        StructureOp::UpperLeftSurround => vec![r, r.inner(1.0, 1.0)],
        StructureOp::UpperRightSurround => vec![r, r.inner(0.0, 1.0)],
        StructureOp::LowerLeftSurround => vec![r, r.inner(1.0, 0.0)],
    }
}

/// Polyline of a stroke class in cell coordinates.
fn primitive(stroke: StrokeClass) -> &'static [(f64, f64)] {
    const LO: f64 = INSET;
    const HI: f64 = 1.0 - INSET;
    match stroke {
        StrokeClass::Horizontal => &[(LO, 0.5), (HI, 0.5)],
        StrokeClass::Vertical => &[(0.5, LO), (0.5, HI)],
        StrokeClass::LeftFalling => &[(HI, LO), (LO, HI)],
        StrokeClass::RightFalling => &[(LO, LO), (HI, HI)],
        StrokeClass::Turning => &[(LO + 0.1, LO), (LO + 0.1, HI), (HI, HI)],
    }
}

struct Canvas {
    size: usize,
    ink: Vec<f64>,
}

impl Canvas {
    /// Anti-aliased thick segment; coordinates in unit canvas space.
    fn segment(&mut self, a: (f64, f64), b: (f64, f64), thickness: f64) {
        let s = self.size as f64;
        let (ax, ay, bx, by) = (a.0 * s, a.1 * s, b.0 * s, b.1 * s);
        let half = thickness * s / 2.0;
        let pad = half + 1.0;
        let lo = |v: f64| libm::floor(v - pad).max(0.0) as usize;
        let hi = |v: f64| (libm::ceil(v + pad).max(0.0) as usize).min(self.size);
        let (dx, dy) = (bx - ax, by - ay);
        let len2 = dx * dx + dy * dy;
        for y in lo(ay.min(by))..hi(ay.max(by)) {
            for x in lo(ax.min(bx))..hi(ax.max(bx)) {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let t = if len2 > 0.0 {
                    (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (qx, qy) = (ax + t * dx - px, ay + t * dy - py);
                let dist = libm::sqrt(qx * qx + qy * qy);
                let cover = (half + 0.5 - dist).clamp(0.0, 1.0);
                let cell = &mut self.ink[y * self.size + x];
                *cell = cell.max(cover);
            }
        }
    }
}

/// Renders a stroke tree. Pure function of `(tree, size, style_seed)`.
pub fn render_tree(tree: &DecompositionTree, size: usize, style_seed: u64) -> GlyphImage {
    let mut rng = ChaCha8Rng::seed_from_u64(style_seed);
    let mut canvas = Canvas {
        size,
        ink: vec![0.0; size * size],
    };
    draw(&tree.root, Rect::UNIT, &mut rng, &mut canvas);
    let gray: Vec<f32> = canvas.ink.iter().map(|&v| (1.0 - v) as f32).collect();
    GlyphImage::from_gray(size, size, &gray)
}

fn draw(node: &Node, rect: Rect, rng: &mut ChaCha8Rng, canvas: &mut Canvas) {
    match node {
        Node::Internal { op, children } => {
            for (child, r) in children.iter().zip(child_rects(*op, rect)) {
                draw(child, r, rng, canvas);
            }
        }
        Node::Stroke(s) => {
            let points: Vec<(f64, f64)> = primitive(*s)
                .iter()
                .map(|&(u, v)| {
                    let ju = rng.random_range(-JITTER..=JITTER);
                    let jv = rng.random_range(-JITTER..=JITTER);
                    rect.at(u + ju, v + jv)
                })
                .collect();
            let thickness = 0.035 * rng.random_range(0.75..=1.25);
            for w in points.windows(2) {
                canvas.segment(w[0], w[1], thickness);
            }
        }
        // Radical leaves carry no drawing of their own.
        Node::Radical(_) => {}
    }
}

fn mix_seed(c: char, style_seed: u64) -> u64 {
    style_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .rotate_left(17)
        ^ (c as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Renders `c` from its stroke tree at `size x size`.
pub fn render_procedural(
    c: char,
    lexicon: &Lexicon,
    size: usize,
    style_seed: u64,
) -> Result<GlyphImage, RenderError> {
    if size == 0 || !size.is_multiple_of(SIZE_MULTIPLE) {
        return Err(RenderError::BadSize(size));
    }
    let entry = lexicon.get(c).ok_or(RenderError::CharNotInLexicon(c))?;
    Ok(render_tree(
        &entry.stroke_tree,
        size,
        mix_seed(c, style_seed),
    ))
}
