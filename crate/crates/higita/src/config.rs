//! Training configuration as flat `key = value` text.
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `lexicon` | required | lexicon file |
//! | `source` | `render` | `render` or `manifest` |
//! | `manifest_dir` | none | dataset directory when `source = manifest` |
//! | `classes` | all | character list file restricting the rendered classes |
//! | `variants` | 2 | rendered styles per class and epoch |
//! | `render_seed` | 0 | style seed base |
//! | `fresh_styles` | true | draw new styles every epoch |
//! | `image_size` | 64 | input side, a multiple of 32 |
//! | `lr` | 1e-4 | Adam learning rate |
//! | `batch_size` | 32 | |
//! | `epochs` | 20 | |
//! | `max_steps` | none | stop after this many optimizer steps |
//! | `max_minutes` | none | stop after this much wall time |
//! | `seed` | 0 | parameter init and shuffling |
//! | `alpha`, `beta` | 1.0, 0.1 | stroke- and radical-level loss weights |
//! | `widths` | 16,32,64 | trunk stage widths |
//! | `dim` | 64 | alignment dimension |
//! | `layers` | 3 | text encoder depth |
//! | `fusion_layers` | 3 | text fusion depth |
//! | `heads` | 4 | attention heads |
//! | `max_len` | 50 | longest token sequence |
//! | `residual_init` | 0 | initial scale of transformer residual outputs |
//! | `lambda_init` | 10 | initial matching temperature |
//! | `checkpoint` | none | checkpoint written after every epoch and at the end |
//! | `log` | none | CSV loss log |
//!
//! Lines starting with `#` are comments. Relative paths resolve against the
//! current directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use higita_core::alignment::LossWeights;
use higita_core::image_encoder::ImageEncoderConfig;
use higita_core::model::ModelConfig;
use higita_core::text_encoder::TextEncoderConfig;
use thiserror::Error;

use crate::files::{read_text, FileError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    File(#[from] FileError),
    #[error("line {line}: expected `key = value`")]
    BadLine { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value `{value}` for `{key}`")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Render {
        classes: Option<PathBuf>,
        variants: usize,
        render_seed: u64,
        fresh_styles: bool,
    },
    Manifest(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lexicon: PathBuf,
    pub source: DataSource,
    pub image_size: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: u64,
    pub max_steps: Option<u64>,
    pub max_minutes: Option<f64>,
    pub seed: u64,
    pub weights: LossWeights,
    pub widths: [usize; 3],
    pub dim: usize,
    pub layers: usize,
    pub fusion_layers: usize,
    pub heads: usize,
    pub max_len: usize,
    pub residual_init: f64,
    pub lambda_init: f64,
    pub checkpoint: Option<PathBuf>,
    pub log: Option<PathBuf>,
}

impl TrainConfig {
    /// Defaults for everything except the lexicon path.
    pub fn new(lexicon: impl Into<PathBuf>) -> Self {
        let text = TextEncoderConfig::default();
        Self {
            lexicon: lexicon.into(),
            source: DataSource::Render {
                classes: None,
                variants: 2,
                render_seed: 0,
                fresh_styles: true,
            },
            image_size: 64,
            lr: 1e-4,
            batch_size: 32,
            epochs: 20,
            max_steps: None,
            max_minutes: None,
            seed: 0,
            weights: LossWeights::default(),
            widths: [16, 32, 64],
            dim: 64,
            layers: text.layers,
            fusion_layers: text.fusion_layers,
            heads: text.heads,
            max_len: text.max_len,
            residual_init: text.residual_init,
            lambda_init: higita_core::alignment::LAMBDA_INIT,
            checkpoint: None,
            log: None,
        }
    }

    pub fn model_config(&self, radical_count: usize) -> ModelConfig {
        ModelConfig {
            image: ImageEncoderConfig {
                input_size: self.image_size,
                widths: self.widths,
                dim: self.dim,
            },
            text: TextEncoderConfig {
                layers: self.layers,
                fusion_layers: self.fusion_layers,
                dim: self.dim,
                heads: self.heads,
                max_len: self.max_len,
                radical_count,
                residual_init: self.residual_init,
            },
            lambda_init: self.lambda_init,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if let DataSource::Render { variants: 0, .. } = self.source {
            return bad("variants must be at least 1");
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&read_text(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::new(PathBuf::new());
        let mut lexicon = None;
        let mut source = "render".to_string();
        let mut manifest_dir = None;
        let (mut classes, mut variants, mut render_seed, mut fresh) = (None, 2, 0, true);
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let (key, value) = t.split_once('=').ok_or(ConfigError::BadLine { line })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = || ConfigError::BadValue {
                line,
                key: key.to_string(),
                value: value.to_string(),
            };
            fn num<T: std::str::FromStr>(
                v: &str,
                bad: impl Fn() -> ConfigError,
            ) -> Result<T, ConfigError> {
                v.parse().map_err(|_| bad())
            }
            match key {
                "lexicon" => lexicon = Some(PathBuf::from(value)),
                "source" => match value {
                    "render" | "manifest" => source = value.to_string(),
                    _ => return Err(bad()),
                },
                "manifest_dir" => manifest_dir = Some(PathBuf::from(value)),
                "classes" => classes = Some(PathBuf::from(value)),
                "variants" => variants = num(value, bad)?,
                "render_seed" => render_seed = num(value, bad)?,
                "fresh_styles" => fresh = num(value, bad)?,
                "image_size" => cfg.image_size = num(value, bad)?,
                "lr" => cfg.lr = num(value, bad)?,
                "batch_size" => cfg.batch_size = num(value, bad)?,
                "epochs" => cfg.epochs = num(value, bad)?,
                "max_steps" => cfg.max_steps = Some(num(value, bad)?),
                "max_minutes" => cfg.max_minutes = Some(num(value, bad)?),
                "seed" => cfg.seed = num(value, bad)?,
                "alpha" => cfg.weights.alpha = num(value, bad)?,
                "beta" => cfg.weights.beta = num(value, bad)?,
                "widths" => {
                    let w: Vec<usize> = value
                        .split(',')
                        .map(|s| s.trim().parse())
                        .collect::<Result<_, _>>()
                        .map_err(|_| bad())?;
                    cfg.widths = w.try_into().map_err(|_| bad())?;
                }
                "dim" => cfg.dim = num(value, bad)?,
                "layers" => cfg.layers = num(value, bad)?,
                "fusion_layers" => cfg.fusion_layers = num(value, bad)?,
                "heads" => cfg.heads = num(value, bad)?,
                "max_len" => cfg.max_len = num(value, bad)?,
                "residual_init" => cfg.residual_init = num(value, bad)?,
                "lambda_init" => cfg.lambda_init = num(value, bad)?,
                "checkpoint" => cfg.checkpoint = Some(PathBuf::from(value)),
                "log" => cfg.log = Some(PathBuf::from(value)),
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_string(),
                    })
                }
            }
        }
        cfg.lexicon = lexicon.ok_or(ConfigError::MissingKey("lexicon"))?;
        cfg.source = if source == "manifest" {
            DataSource::Manifest(manifest_dir.ok_or(ConfigError::MissingKey("manifest_dir"))?)
        } else {
            DataSource::Render {
                classes,
                variants,
                render_seed,
                fresh_styles: fresh,
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every key, in the documented order; `parse(to_text())` is the identity.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("lexicon", self.lexicon.display().to_string());
        match &self.source {
            DataSource::Render {
                classes,
                variants,
                render_seed,
                fresh_styles,
            } => {
                kv("source", "render".into());
                if let Some(c) = classes {
                    kv("classes", c.display().to_string());
                }
                kv("variants", variants.to_string());
                kv("render_seed", render_seed.to_string());
                kv("fresh_styles", fresh_styles.to_string());
            }
            DataSource::Manifest(dir) => {
                kv("source", "manifest".into());
                kv("manifest_dir", dir.display().to_string());
            }
        }
        kv("image_size", self.image_size.to_string());
        kv("lr", format!("{:?}", self.lr));
        kv("batch_size", self.batch_size.to_string());
        kv("epochs", self.epochs.to_string());
        if let Some(m) = self.max_steps {
            kv("max_steps", m.to_string());
        }
        if let Some(m) = self.max_minutes {
            kv("max_minutes", format!("{m:?}"));
        }
        kv("seed", self.seed.to_string());
        kv("alpha", format!("{:?}", self.weights.alpha));
        kv("beta", format!("{:?}", self.weights.beta));
        let w = self.widths;
        kv("widths", format!("{},{},{}", w[0], w[1], w[2]));
        kv("dim", self.dim.to_string());
        kv("layers", self.layers.to_string());
        kv("fusion_layers", self.fusion_layers.to_string());
        kv("heads", self.heads.to_string());
        kv("max_len", self.max_len.to_string());
        kv("residual_init", format!("{:?}", self.residual_init));
        kv("lambda_init", format!("{:?}", self.lambda_init));
        if let Some(c) = &self.checkpoint {
            kv("checkpoint", c.display().to_string());
        }
        if let Some(l) = &self.log {
            kv("log", l.display().to_string());
        }
        s
    }
}
