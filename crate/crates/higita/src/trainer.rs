//! Training driver: data per epoch, seeded batching, the optimization
//! loop, CSV logging, checkpoints, and resumption.

use std::fs::{File, OpenOptions};
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use higita_core::alignment::Level;
use higita_core::data::{make_batches, render_samples, Sample};
use higita_core::glyph::RenderError;
use higita_core::lexicon::Lexicon;
use higita_core::model::{HiGita, ModelError};
use higita_core::optim::{Adam, AdamConfig};
use higita_core::train::{train_step, StepReport, TrainError};
use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError, Progress};
use crate::config::{DataSource, TrainConfig};
use crate::dataset::{ingest_manifest, DatasetError};
use crate::files::{load_char_list, FileError};

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error(transparent)]
    File(#[from] FileError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("epoch {epoch} produced no training samples")]
    DataExhausted { epoch: u64 },
    #[error("checkpoint does not match the configuration: {0}")]
    ResumeMismatch(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// One logged optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    /// Steps completed including this one, minus one (the first step is 0).
    pub step: u64,
    pub epoch: u64,
    pub report: StepReport,
    pub elapsed: Duration,
}

/// Header of the loss log.
pub fn log_header() -> String {
    let mut h = String::from("step");
    for l in Level::ALL {
        h.push(',');
        h.push_str(l.name());
    }
    h.push_str(",total");
    h
}

fn log_row(step: u64, r: &StepReport) -> String {
    let mut row = step.to_string();
    for v in r.levels.iter().chain([&r.total]) {
        row.push(',');
        row.push_str(&format!("{v:?}"));
    }
    row
}

/// Training samples for each epoch.
pub struct EpochData<'a> {
    lexicon: &'a Lexicon,
    size: usize,
    source: Source,
}

enum Source {
    Render {
        chars: Vec<char>,
        variants: usize,
        seed: u64,
        fresh: bool,
    },
    Fixed(Vec<Sample>),
}

impl<'a> EpochData<'a> {
    pub fn new(cfg: &TrainConfig, lexicon: &'a Lexicon) -> Result<Self, TrainerError> {
        let source = match &cfg.source {
            DataSource::Render {
                classes,
                variants,
                render_seed,
                fresh_styles,
            } => Source::Render {
                chars: match classes {
                    Some(p) => load_char_list(p)?,
                    None => lexicon.characters(),
                },
                variants: *variants,
                seed: *render_seed,
                fresh: *fresh_styles,
            },
            DataSource::Manifest(dir) => Source::Fixed(
                ingest_manifest(dir, lexicon, cfg.image_size)?
                    .into_iter()
                    .map(|s| s.sample)
                    .collect(),
            ),
        };
        Ok(Self {
            lexicon,
            size: cfg.image_size,
            source,
        })
    }

    /// Rendered styles use seeds `render_seed + epoch * variants + v` when
    /// fresh, otherwise `render_seed + v` every epoch.
    pub fn epoch(&self, epoch: u64) -> Result<Vec<Sample>, TrainerError> {
        match &self.source {
            Source::Render {
                chars,
                variants,
                seed,
                fresh,
            } => {
                let base = if *fresh {
                    seed + epoch * *variants as u64
                } else {
                    *seed
                };
                Ok(render_samples(
                    self.lexicon,
                    chars,
                    self.size,
                    *variants,
                    base,
                )?)
            }
            Source::Fixed(s) => Ok(s.clone()),
        }
    }
}

/// Fresh model, store and optimizer for `cfg`.
pub fn initial_checkpoint(
    cfg: &TrainConfig,
    lexicon: &Lexicon,
) -> Result<Checkpoint, TrainerError> {
    let (model, store) = HiGita::new(&cfg.model_config(lexicon.radicals().len()), cfg.seed)?;
    Ok(Checkpoint {
        model,
        store,
        adam: Adam::new(AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        }),
        progress: Progress {
            seed: cfg.seed,
            ..Progress::default()
        },
    })
}

fn open_log(path: &Path, append: bool) -> Result<File, TrainerError> {
    let io_err = |source| TrainerError::Io {
        path: path.to_path_buf(),
        source,
    };
    let fresh = !append || !path.exists();
    let mut f = OpenOptions::new()
        .create(true)
        .append(!fresh)
        .write(true)
        .truncate(fresh)
        .open(path)
        .map_err(io_err)?;
    if fresh {
        writeln!(f, "{}", log_header()).map_err(io_err)?;
    }
    Ok(f)
}

/// Runs training from `resume` (or from scratch) until `epochs` complete or
/// a step/time budget is reached. Checkpoints go to `cfg.checkpoint` after
/// every epoch and at the end. `on_step` sees every step.
pub fn train(
    cfg: &TrainConfig,
    lexicon: &Lexicon,
    resume: Option<Checkpoint>,
    mut on_step: impl FnMut(&StepLog),
) -> Result<Checkpoint, TrainerError> {
    let data = EpochData::new(cfg, lexicon)?;
    train_with_data(cfg, &data, resume, &mut on_step)
}

pub fn train_with_data(
    cfg: &TrainConfig,
    data: &EpochData<'_>,
    resume: Option<Checkpoint>,
    on_step: &mut dyn FnMut(&StepLog),
) -> Result<Checkpoint, TrainerError> {
    let resuming = resume.is_some();
    let mut ck = match resume {
        Some(c) => {
            let want = cfg.model_config(data.lexicon.radicals().len());
            if c.model.config != want {
                return Err(TrainerError::ResumeMismatch(
                    "model configuration differs".into(),
                ));
            }
            if c.progress.seed != cfg.seed {
                return Err(TrainerError::ResumeMismatch(format!(
                    "seed {} in checkpoint, {} in configuration",
                    c.progress.seed, cfg.seed
                )));
            }
            c
        }
        None => initial_checkpoint(cfg, data.lexicon)?,
    };
    ck.adam.config.lr = cfg.lr;
    let mut log = cfg
        .log
        .as_deref()
        .map(|p| open_log(p, resuming))
        .transpose()?;
    let start = Instant::now();
    let out_of_budget = |ck: &Checkpoint| {
        cfg.max_steps.is_some_and(|m| ck.progress.step >= m)
            || cfg
                .max_minutes
                .is_some_and(|m| start.elapsed().as_secs_f64() >= m * 60.0)
    };
    'epochs: while ck.progress.epoch < cfg.epochs {
        if out_of_budget(&ck) {
            break;
        }
        let epoch = ck.progress.epoch;
        let samples = data.epoch(epoch)?;
        if samples.is_empty() {
            return Err(TrainerError::DataExhausted { epoch });
        }
        let skip = ck.progress.batch as usize;
        for batch in make_batches(&samples, cfg.batch_size, cfg.seed, epoch).skip(skip) {
            if out_of_budget(&ck) {
                break 'epochs;
            }
            let report = train_step(&ck.model, &mut ck.store, &mut ck.adam, &batch, &cfg.weights)?;
            let entry = StepLog {
                step: ck.progress.step,
                epoch,
                report,
                elapsed: start.elapsed(),
            };
            ck.progress.step += 1;
            ck.progress.batch += 1;
            if let (Some(f), Some(p)) = (log.as_mut(), cfg.log.as_deref()) {
                writeln!(f, "{}", log_row(entry.step, &report)).map_err(|source| {
                    TrainerError::Io {
                        path: p.to_path_buf(),
                        source,
                    }
                })?;
            }
            on_step(&entry);
        }
        ck.progress.epoch += 1;
        ck.progress.batch = 0;
        if let Some(p) = &cfg.checkpoint {
            ck.save(p)?;
        }
    }
    if let Some(p) = &cfg.checkpoint {
        ck.save(p)?;
    }
    Ok(ck)
}
