//! Hierarchical multi-granularity image-text alignment for zero-shot
//! Chinese character recognition.
//!
//! This crate is `no_std` (with `alloc`) and holds everything that does not
//! touch the file system: decomposition lexicons, the procedural glyph
//! renderer, batching, a small reverse-mode autograd engine, the image and
//! text encoders, the fine-grained contrastive objective, Adam, and
//! gallery retrieval.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod alignment;
pub mod autograd;
pub mod data;
pub mod glyph;
pub mod image_encoder;
pub mod lexicon;
pub mod model;
pub mod nn;
pub mod optim;
pub mod retrieval;
pub mod tensor;
pub mod text_encoder;
pub mod train;
