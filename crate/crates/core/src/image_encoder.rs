//! Multi-granularity image encoder.
//!
//! A residual CNN trunk produces `F` at 1/4 resolution. Two stride-2 heads
//! give the stroke grid `F_s` (1/8) and radical grid `F_r` (1/16). Mutual
//! refinement then computes
//!
//! ```text
//! F_s_refined = F_s + Deconv(F_r)
//! F_r_refined = F_r + Down(F_s_refined)
//! ```
//!
//! and a last stride-2 head turns `F_r_refined` into the structure grid
//! `F_u` (1/32). All tensors are NCHW.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autograd::{ConvSpec, Graph, Var};
use crate::glyph::SIZE_MULTIPLE;
use crate::nn::{BatchNorm2d, Conv2d, ConvTranspose2d, ParamBuilder, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ImageEncoderError {
    #[error("expected {expected}x{expected}x3 images, got {height}x{width}")]
    BadShape {
        expected: usize,
        height: usize,
        width: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageEncoderConfig {
    pub input_size: usize,
    /// Widths of the three residual stages; the last is `D'`.
    pub widths: [usize; 3],
    /// Alignment dimension `D`.
    pub dim: usize,
}

impl ImageEncoderConfig {
    pub fn trunk_dim(&self) -> usize {
        self.widths[2]
    }

    pub fn validate(&self) -> bool {
        self.input_size > 0
            && self.input_size.is_multiple_of(SIZE_MULTIPLE)
            && self.dim > 0
            && self.widths.iter().all(|&w| w > 0)
    }
}

impl Default for ImageEncoderConfig {
    fn default() -> Self {
        Self {
            input_size: 128,
            widths: [32, 64, 128],
            dim: 128,
        }
    }
}

const DOWN: ConvSpec = ConvSpec {
    kernel: 3,
    stride: 2,
    padding: 1,
};
const SAME: ConvSpec = ConvSpec {
    kernel: 3,
    stride: 1,
    padding: 1,
};
const UP: ConvSpec = ConvSpec {
    kernel: 4,
    stride: 2,
    padding: 1,
};

/// Convolution followed by batch norm.
#[derive(Debug, Clone)]
pub struct ConvBn {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
}

impl ConvBn {
    fn new(b: &mut ParamBuilder, name: &str, cin: usize, cout: usize, spec: ConvSpec) -> Self {
        Self::with_gamma(b, name, cin, cout, spec, 1.0)
    }

    fn with_gamma(
        b: &mut ParamBuilder,
        name: &str,
        cin: usize,
        cout: usize,
        spec: ConvSpec,
        gamma: f64,
    ) -> Self {
        Self {
            conv: Conv2d::new(b, &alloc::format!("{name}.conv"), cin, cout, spec, false),
            bn: BatchNorm2d::with_gamma(b, &alloc::format!("{name}.bn"), cout, gamma),
        }
    }

    pub fn forward<'g>(&self, g: &'g Graph, store: &ParamStore, x: Var<'g>) -> Var<'g> {
        self.bn.forward(g, store, self.conv.forward(g, store, x))
    }
}

/// Two 3x3 conv-BN layers with an identity or projected shortcut.
#[derive(Debug, Clone)]
pub struct BasicBlock {
    pub a: ConvBn,
    pub b: ConvBn,
    pub shortcut: Option<ConvBn>,
}

impl BasicBlock {
    fn new(pb: &mut ParamBuilder, name: &str, cin: usize, cout: usize, stride: usize) -> Self {
        let first = ConvSpec::new(3, stride, 1);
        Self {
            a: ConvBn::new(pb, &alloc::format!("{name}.a"), cin, cout, first),
            b: ConvBn::new(pb, &alloc::format!("{name}.b"), cout, cout, SAME),
            shortcut: (stride != 1 || cin != cout).then(|| {
                ConvBn::new(
                    pb,
                    &alloc::format!("{name}.shortcut"),
                    cin,
                    cout,
                    ConvSpec::new(1, stride, 0),
                )
            }),
        }
    }

    fn forward<'g>(&self, g: &'g Graph, store: &ParamStore, x: Var<'g>) -> Var<'g> {
        let h = g.relu(self.a.forward(g, store, x));
        let h = self.b.forward(g, store, h);
        let skip = match &self.shortcut {
            Some(s) => s.forward(g, store, x),
            None => x,
        };
        g.relu(g.add(h, skip))
    }
}

/// The six image representations of a batch, each `[b, c, h, w]`.
#[derive(Debug, Clone, Copy)]
pub struct ImageFeatures<'g> {
    pub f: Var<'g>,
    pub f_s: Var<'g>,
    pub f_r: Var<'g>,
    pub f_s_refined: Var<'g>,
    pub f_r_refined: Var<'g>,
    pub f_u: Var<'g>,
}

#[derive(Debug, Clone)]
pub struct ImageEncoder {
    pub config: ImageEncoderConfig,
    pub stem: ConvBn,
    pub stages: [BasicBlock; 3],
    pub stroke_head: ConvBn,
    pub radical_head: ConvBn,
    /// Up-sampling of `F_r` into the stroke grid.
    pub fuse_up: ConvTranspose2d,
    /// Down-sampling of `F_s_refined` into the radical grid.
    pub fuse_down: ConvBn,
    pub structure_head: ConvBn,
}

impl ImageEncoder {
    pub fn new(b: &mut ParamBuilder, config: &ImageEncoderConfig) -> Self {
        let [w0, w1, w2] = config.widths;
        let d = config.dim;
        // Alignment grids start near unit token norm so that initial
        // similarities against layer-normalized text tokens stay O(1).
        let head_gamma = crate::nn::lecun(d);
        Self {
            config: config.clone(),
            stem: ConvBn::new(b, "image.stem", 3, w0, SAME),
            stages: [
                BasicBlock::new(b, "image.stage1", w0, w0, 2),
                BasicBlock::new(b, "image.stage2", w0, w1, 2),
                BasicBlock::new(b, "image.stage3", w1, w2, 1),
            ],
            stroke_head: ConvBn::with_gamma(b, "image.stroke_head", w2, d, DOWN, head_gamma),
            radical_head: ConvBn::with_gamma(b, "image.radical_head", d, d, DOWN, head_gamma),
            fuse_up: ConvTranspose2d::new(b, "image.fuse_up", d, d, UP),
            fuse_down: ConvBn::with_gamma(b, "image.fuse_down", d, d, DOWN, head_gamma),
            structure_head: ConvBn::with_gamma(b, "image.structure_head", d, d, DOWN, head_gamma),
        }
    }

    /// Stacks NHWC `[0, 1]` images into a normalized NCHW tensor.
    pub fn input_tensor(&self, images: &[f32], batch: usize) -> Result<Tensor, ImageEncoderError> {
        let s = self.config.input_size;
        if images.len() != batch * s * s * 3 {
            let side = if batch == 0 {
                0
            } else {
                libm::sqrt((images.len() / (3 * batch)) as f64) as usize
            };
            return Err(ImageEncoderError::BadShape {
                expected: s,
                height: side,
                width: side,
            });
        }
        let mut data = alloc::vec![0.0; images.len()];
        let plane = s * s;
        for bi in 0..batch {
            for p in 0..plane {
                for c in 0..3 {
                    let v = images[(bi * plane + p) * 3 + c] as f64;
                    data[(bi * 3 + c) * plane + p] = (v - 0.5) / 0.5;
                }
            }
        }
        Ok(Tensor::new(&[batch, 3, s, s], data))
    }

    pub fn trunk<'g>(&self, g: &'g Graph, store: &ParamStore, x: Var<'g>) -> Var<'g> {
        let mut h = g.relu(self.stem.forward(g, store, x));
        for stage in &self.stages {
            h = stage.forward(g, store, h);
        }
        h
    }

    /// Encodes a normalized NCHW batch.
    pub fn forward<'g>(&self, g: &'g Graph, store: &ParamStore, x: Var<'g>) -> ImageFeatures<'g> {
        let f = self.trunk(g, store, x);
        let f_s = self.stroke_head.forward(g, store, f);
        let f_r = self.radical_head.forward(g, store, g.relu(f_s));
        let f_s_refined = g.add(f_s, self.fuse_up.forward(g, store, f_r));
        let f_r_refined = g.add(f_r, self.fuse_down.forward(g, store, g.relu(f_s_refined)));
        let f_u = self.structure_head.forward(g, store, g.relu(f_r_refined));
        ImageFeatures {
            f,
            f_s,
            f_r,
            f_s_refined,
            f_r_refined,
            f_u,
        }
    }

    /// Encodes NHWC `[0, 1]` images.
    pub fn encode<'g>(
        &self,
        g: &'g Graph,
        store: &ParamStore,
        images: &[f32],
        batch: usize,
    ) -> Result<ImageFeatures<'g>, ImageEncoderError> {
        let x = g.constant(self.input_tensor(images, batch)?);
        Ok(self.forward(g, store, x))
    }

    /// Parameters of the two refinement paths.
    pub fn fusion_params(&self) -> Vec<crate::nn::ParamId> {
        let mut ids = alloc::vec![self.fuse_up.weight, self.fuse_down.conv.weight];
        ids.extend([self.fuse_down.bn.gamma, self.fuse_down.bn.beta]);
        ids
    }
}

/// Row-major flattening of a `[b, c, h, w]` grid into `[b, h*w, c]` tokens.
pub fn image_tokens<'g>(g: &'g Graph, grid: Var<'g>) -> Var<'g> {
    let s = grid.shape();
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    let t = g.permute(grid, &[0, 2, 3, 1]);
    g.reshape(t, &[b, h * w, c])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> (ImageEncoder, ParamStore) {
        let cfg = ImageEncoderConfig {
            input_size: 64,
            widths: [4, 6, 8],
            dim: 8,
        };
        let mut b = ParamBuilder::new(1);
        let enc = ImageEncoder::new(&mut b, &cfg);
        (enc, b.finish())
    }

    #[test]
    fn grid_sizes_at_64() {
        let (enc, store) = tiny();
        let g = Graph::inference();
        let imgs = alloc::vec![0.3f32; 2 * 64 * 64 * 3];
        let f = enc.encode(&g, &store, &imgs, 2).unwrap();
        assert_eq!(f.f.shape(), [2, 8, 16, 16]);
        assert_eq!(f.f_s.shape(), [2, 8, 8, 8]);
        assert_eq!(f.f_r.shape(), [2, 8, 4, 4]);
        assert_eq!(f.f_s_refined.shape(), [2, 8, 8, 8]);
        assert_eq!(f.f_r_refined.shape(), [2, 8, 4, 4]);
        assert_eq!(f.f_u.shape(), [2, 8, 2, 2]);
        assert!(f.f_u.value().is_finite());
    }

    #[test]
    fn zero_image_is_finite() {
        let (enc, store) = tiny();
        let g = Graph::inference();
        let f = enc
            .encode(&g, &store, &alloc::vec![0.0f32; 64 * 64 * 3], 1)
            .unwrap();
        for v in [f.f, f.f_s, f.f_r, f.f_s_refined, f.f_r_refined, f.f_u] {
            assert!(v.value().is_finite());
        }
    }

    #[test]
    fn wrong_size_is_rejected() {
        let (enc, store) = tiny();
        let g = Graph::inference();
        let err = enc
            .encode(&g, &store, &alloc::vec![0.0f32; 32 * 32 * 3], 1)
            .unwrap_err();
        assert_eq!(
            err,
            ImageEncoderError::BadShape {
                expected: 64,
                height: 32,
                width: 32
            }
        );
    }

    #[test]
    fn tokens_are_row_major() {
        let g = Graph::inference();
        let grid = g.constant(Tensor::new(&[1, 2, 2, 2], (0..8).map(f64::from).collect()));
        let t = image_tokens(&g, grid).value();
        assert_eq!(t.shape(), [1, 4, 2]);
        // Token m sits at (m / 2, m % 2); channel c of it is grid[c][m / 2][m % 2].
        for m in 0..4 {
            for c in 0..2 {
                assert_eq!(t.data()[m * 2 + c], (c * 4 + m) as f64);
            }
        }
    }
}
