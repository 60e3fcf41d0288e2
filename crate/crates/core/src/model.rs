//! The full two-tower model and its training loss.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{
    multi_level_loss, sim_matrix, AlignmentError, Components, Level, LossWeights, LAMBDA_INIT,
};
use crate::autograd::{Graph, Var};
use crate::data::Batch;
use crate::image_encoder::{ImageEncoder, ImageEncoderConfig, ImageEncoderError, ImageFeatures};
use crate::nn::{ParamBuilder, ParamId, ParamStore};
use crate::tensor::Tensor;
use crate::text_encoder::{TextEncoder, TextEncoderConfig, TextEncoderError, TextFeatures};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Image(#[from] ImageEncoderError),
    #[error(transparent)]
    Text(#[from] TextEncoderError),
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub image: ImageEncoderConfig,
    pub text: TextEncoderConfig,
    pub lambda_init: f64,
}

impl ModelConfig {
    /// Small configuration for `size x size` inputs.
    pub fn desk(size: usize, radical_count: usize) -> Self {
        Self {
            image: ImageEncoderConfig {
                input_size: size,
                widths: [16, 32, 64],
                dim: 64,
            },
            text: TextEncoderConfig {
                dim: 64,
                radical_count,
                ..TextEncoderConfig::default()
            },
            lambda_init: LAMBDA_INIT,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.image.validate() {
            return Err(ModelError::InvalidConfig("image encoder"));
        }
        if !self.text.validate() {
            return Err(ModelError::InvalidConfig("text encoder"));
        }
        if self.image.dim != self.text.dim {
            return Err(ModelError::InvalidConfig("image and text dims differ"));
        }
        if !self.lambda_init.is_finite() {
            return Err(ModelError::InvalidConfig("lambda must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct HiGita {
    pub config: ModelConfig,
    pub image: ImageEncoder,
    pub text: TextEncoder,
    /// Softmax temperature of the token matching.
    pub lambda: ParamId,
}

/// Both towers evaluated on one batch.
#[derive(Debug, Clone, Copy)]
pub struct Encoded<'g> {
    pub image: ImageFeatures<'g>,
    pub text: TextFeatures<'g>,
    pub lambda: Var<'g>,
}

/// Per-level losses in [`Level::ALL`] order and their weighted total.
#[derive(Debug, Clone, Copy)]
pub struct Losses<'g> {
    pub levels: [Var<'g>; 4],
    pub total: Var<'g>,
}

impl HiGita {
    /// Builds the model with freshly initialized parameters. Parameters are
    /// created in a fixed order, so equal seeds give equal stores.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<(Self, ParamStore), ModelError> {
        config.validate()?;
        let mut b = ParamBuilder::new(seed);
        let image = ImageEncoder::new(&mut b, &config.image);
        let text = TextEncoder::new(&mut b, &config.text);
        let lambda = b.constant("lambda", &[], config.lambda_init);
        let model = Self {
            config: config.clone(),
            image,
            text,
            lambda,
        };
        Ok((model, b.finish()))
    }

    pub fn encode<'g>(
        &self,
        g: &'g Graph,
        store: &ParamStore,
        batch: &Batch,
    ) -> Result<Encoded<'g>, ModelError> {
        let image = self.image.encode(g, store, &batch.images, batch.size)?;
        let text = self
            .text
            .forward(g, store, &batch.radicals, &batch.strokes)?;
        Ok(Encoded {
            image,
            text,
            lambda: g.param(store, self.lambda),
        })
    }

    /// `[b, b]` similarity of every text (row) against every image.
    pub fn level_sim<'g>(
        &self,
        g: &'g Graph,
        enc: &Encoded<'g>,
        batch: &Batch,
        level: Level,
        components: Components,
    ) -> Result<Var<'g>, ModelError> {
        let seqs = batch.sequences(level.family());
        Ok(sim_matrix(
            g, level, &enc.image, &enc.text, seqs, enc.lambda, components,
        )?)
    }

    pub fn losses<'g>(
        &self,
        g: &'g Graph,
        store: &ParamStore,
        batch: &Batch,
        weights: &LossWeights,
    ) -> Result<Losses<'g>, ModelError> {
        let enc = self.encode(g, store, batch)?;
        let mut sims = [enc.lambda; 4];
        for (s, level) in sims.iter_mut().zip(Level::ALL) {
            *s = self.level_sim(g, &enc, batch, level, Components::Both)?;
        }
        let (levels, total) = multi_level_loss(g, &sims, weights, &batch.text_ids);
        Ok(Losses { levels, total })
    }

    pub fn lambda_value(&self, store: &ParamStore) -> f64 {
        store.get(self.lambda).item()
    }

    /// Image normalization of raw `[0, 1]` NHWC pixels.
    pub fn input_tensor(&self, images: &[f32], batch: usize) -> Result<Tensor, ModelError> {
        Ok(self.image.input_tensor(images, batch)?)
    }
}
