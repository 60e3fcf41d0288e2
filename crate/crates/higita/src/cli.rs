//! Command-line interface. Exit codes: 0 success, 2 usage error, 1
//! operational failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use higita_core::alignment::{Components, Level};
use higita_core::lexicon::synth::{toy_lexicon, ToyLexiconConfig};
use higita_core::lexicon::{
    character_zero_shot_split, radical_zero_shot_split, Lexicon, SequenceKind, SplitError,
    STANDARD_RADICAL_COUNT,
};
use higita_core::retrieval::{embed_gallery, rank, score_images, Gallery, RetrievalError};
use thiserror::Error;

use crate::checkpoint::Checkpoint;
use crate::config::{ConfigError, TrainConfig};
use crate::container::ContainerError;
use crate::dataset::{ingest_manifest, load_image, render_dataset, DatasetError};
use crate::evaluate::{
    accuracy, predict_samples, read_predictions, write_attention_maps, write_per_class,
    write_predictions, EvalError,
};
use crate::files::{load_char_list, load_lexicon, save_char_list, save_lexicon, FileError};
use crate::gallery_file;
use crate::trainer::{train, TrainerError};

#[derive(Debug, Parser)]
#[command(
    name = "higita",
    version,
    about = "Zero-shot Chinese character recognition by hierarchical image-text alignment"
)]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a lexicon and print its statistics.
    LexiconValidate {
        #[arg(long)]
        lexicon: PathBuf,
    },
    /// Write train/test class lists for a zero-shot protocol.
    MakeSplits(MakeSplits),
    /// Render glyph images into a PGM directory with a manifest.
    RenderDataset(RenderDataset),
    /// Train from a configuration file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Encode candidate characters into a gallery file.
    EmbedGallery {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        /// Character list file.
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long, value_enum, default_value_t = LevelArg::RefinedStroke)]
        repr: LevelArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Character accuracy of a model on a dataset, or of a prediction dump.
    Evaluate(Evaluate),
    /// Rank gallery candidates for one image.
    Recognize {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        gallery: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, value_enum, default_value_t = ComponentsArg::Both)]
        components: ComponentsArg,
        #[arg(long, default_value_t = 5)]
        top: usize,
    },
    /// Write token-level similarity maps of one character on one image.
    VisualizeAttention {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long = "char")]
        character: char,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a procedural toy lexicon.
    SynthLexicon {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        characters: usize,
        #[arg(long, default_value_t = 30)]
        radicals: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitMode {
    Char,
    Radical,
}

#[derive(Debug, Args)]
pub struct MakeSplits {
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long, value_enum)]
    pub mode: SplitMode,
    /// Training classes (char mode).
    #[arg(long, required_if_eq("mode", "char"))]
    pub m: Option<usize>,
    /// Test classes (char mode).
    #[arg(long, required_if_eq("mode", "char"))]
    pub k: Option<usize>,
    /// Radical frequency threshold (radical mode).
    #[arg(long, required_if_eq("mode", "radical"))]
    pub n: Option<usize>,
    /// Class order file; defaults to lexicon order.
    #[arg(long)]
    pub order: Option<PathBuf>,
    #[arg(long)]
    pub train_out: PathBuf,
    #[arg(long)]
    pub test_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderDataset {
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Character list file; defaults to every lexicon character.
    #[arg(long)]
    pub chars: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 1)]
    pub variants: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Evaluate {
    /// Recompute accuracy from an existing prediction dump instead.
    #[arg(long, conflicts_with_all = ["checkpoint", "data", "gallery", "candidates"])]
    pub predictions: Option<PathBuf>,
    #[arg(long, required_unless_present = "predictions")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Dataset directory with a manifest.
    #[arg(long, required_unless_present = "predictions")]
    pub data: Option<PathBuf>,
    /// Precomputed gallery file.
    #[arg(long, conflicts_with = "candidates")]
    pub gallery: Option<PathBuf>,
    /// Candidate list file; the gallery is built on the fly.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = LevelArg::RefinedStroke)]
    pub repr: LevelArg,
    #[arg(long, value_enum, default_value_t = ComponentsArg::Both)]
    pub components: ComponentsArg,
    /// Write the prediction dump here.
    #[arg(long)]
    pub dump: Option<PathBuf>,
    /// Write per-class accuracy CSV here.
    #[arg(long)]
    pub per_class: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub batch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LevelArg {
    Stroke,
    RefinedStroke,
    Radical,
    RefinedRadical,
}

impl From<LevelArg> for Level {
    fn from(l: LevelArg) -> Level {
        match l {
            LevelArg::Stroke => Level::Stroke,
            LevelArg::RefinedStroke => Level::RefinedStroke,
            LevelArg::Radical => Level::Radical,
            LevelArg::RefinedRadical => Level::RefinedRadical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ComponentsArg {
    Both,
    DetailOnly,
    StructureOnly,
}

impl From<ComponentsArg> for Components {
    fn from(c: ComponentsArg) -> Components {
        match c {
            ComponentsArg::Both => Components::Both,
            ComponentsArg::DetailOnly => Components::DetailOnly,
            ComponentsArg::StructureOnly => Components::StructureOnly,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    File(#[from] FileError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trainer(#[from] TrainerError),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Other(String),
}

/// Parses `argv` and runs the command. Returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn lexicon_for(path: Option<&Path>) -> Result<Lexicon, CliError> {
    let p = path.ok_or_else(|| CliError::Other("--lexicon is required".into()))?;
    Ok(load_lexicon(p)?)
}

pub fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::LexiconValidate { lexicon } => {
            let lex = load_lexicon(&lexicon)?;
            let longest = |k: SequenceKind| {
                lex.entries()
                    .iter()
                    .map(|e| e.sequence(k).len())
                    .max()
                    .unwrap_or(0)
            };
            println!("characters\t{}", lex.len());
            println!("radicals\t{}", lex.radicals().len());
            println!("radical_vocab\t{}", lex.vocab_size(SequenceKind::Radical));
            println!("stroke_vocab\t{}", lex.vocab_size(SequenceKind::Stroke));
            println!(
                "longest_radical_sequence\t{}",
                longest(SequenceKind::Radical)
            );
            println!("longest_stroke_sequence\t{}", longest(SequenceKind::Stroke));
            if lex.exceeds_standard_radical_count() {
                eprintln!(
                    "warning: {} radicals exceeds the standard inventory of {STANDARD_RADICAL_COUNT}",
                    lex.radicals().len()
                );
            }
        }
        Command::MakeSplits(a) => {
            let lex = load_lexicon(&a.lexicon)?;
            let split = match a.mode {
                SplitMode::Char => {
                    let order = match &a.order {
                        Some(p) => load_char_list(p)?,
                        None => lex.characters(),
                    };
                    let (m, k) = (a.m.unwrap_or(0), a.k.unwrap_or(0));
                    character_zero_shot_split(&lex, &order, m, k)?
                }
                SplitMode::Radical => radical_zero_shot_split(&lex, a.n.unwrap_or(0)),
            };
            save_char_list(&split.train, &a.train_out)?;
            save_char_list(&split.test, &a.test_out)?;
            eprintln!(
                "train {} classes, test {} classes",
                split.train.len(),
                split.test.len()
            );
        }
        Command::RenderDataset(a) => {
            let lex = load_lexicon(&a.lexicon)?;
            let chars = match &a.chars {
                Some(p) => load_char_list(p)?,
                None => lex.characters(),
            };
            eprintln!("seed {}", a.seed);
            let n = render_dataset(&lex, &chars, a.size, a.variants, a.seed, &a.out)?;
            eprintln!("wrote {n} images to {}", a.out.display());
        }
        Command::Train { config, resume } => {
            let cfg = TrainConfig::load(&config)?;
            let lex = load_lexicon(&cfg.lexicon)?;
            let resume = resume.map(|p| Checkpoint::load(&p)).transpose()?;
            eprintln!("seed {}", cfg.seed);
            let ck = train(&cfg, &lex, resume, |s| {
                if s.step % 10 == 0 {
                    eprintln!(
                        "step {} epoch {} loss {:.4} ({:.0}s)",
                        s.step,
                        s.epoch,
                        s.report.total,
                        s.elapsed.as_secs_f64()
                    );
                }
            })?;
            eprintln!(
                "finished at epoch {} step {}",
                ck.progress.epoch, ck.progress.step
            );
        }
        Command::EmbedGallery {
            checkpoint,
            lexicon,
            candidates,
            repr,
            out,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let lex = load_lexicon(&lexicon)?;
            let cands = load_char_list(&candidates)?;
            let g = embed_gallery(&ck.model, &ck.store, &lex, &cands, repr.into())?;
            gallery_file::save(&g, &out)?;
            eprintln!("{} candidates at level {}", g.len(), g.level.name());
        }
        Command::Evaluate(a) => evaluate(a)?,
        Command::Recognize {
            checkpoint,
            gallery,
            image,
            components,
            top,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let g = gallery_file::load(&gallery)?;
            let size = ck.model.config.image.input_size;
            let img = load_image(&image, size)
                .map_err(|e| CliError::Other(format!("{}: {e}", image.display())))?;
            let scores =
                score_images(&ck.model, &ck.store, &g, img.pixels(), 1, components.into())?;
            for (c, s) in rank(&g.candidates, &scores[0]).into_iter().take(top) {
                println!("{c}\t{s:?}");
            }
        }
        Command::VisualizeAttention {
            checkpoint,
            lexicon,
            image,
            character,
            out,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let lex = load_lexicon(&lexicon)?;
            let size = ck.model.config.image.input_size;
            let img = load_image(&image, size)
                .map_err(|e| CliError::Other(format!("{}: {e}", image.display())))?;
            let paths =
                write_attention_maps(&ck.model, &ck.store, &lex, img.pixels(), character, &out)?;
            eprintln!("wrote {} maps to {}", paths.len(), out.display());
        }
        Command::SynthLexicon {
            out,
            characters,
            radicals,
            seed,
        } => {
            eprintln!("seed {seed}");
            let lex = toy_lexicon(&ToyLexiconConfig {
                characters,
                radicals,
                seed,
                ..ToyLexiconConfig::default()
            })
            .ok_or_else(|| {
                CliError::Other(format!(
                    "cannot compose {characters} characters from {radicals} radicals"
                ))
            })?;
            save_lexicon(&lex, &out)?;
        }
    }
    Ok(())
}

fn print_accuracy(rows: &[crate::evaluate::PredictionRow]) -> Result<(), CliError> {
    let acc = accuracy(rows)?;
    let correct = rows.iter().filter(|r| r.correct()).count();
    println!("cacc\t{acc:.6}\t{correct}/{}", rows.len());
    Ok(())
}

fn evaluate(a: Evaluate) -> Result<(), CliError> {
    if let Some(p) = &a.predictions {
        let rows = read_predictions(p)?;
        if let Some(pc) = &a.per_class {
            write_per_class(pc, &rows)?;
        }
        return print_accuracy(&rows);
    }
    let ck = Checkpoint::load(a.checkpoint.as_deref().expect("required by clap"))?;
    let lex = lexicon_for(a.lexicon.as_deref())?;
    let samples = ingest_manifest(
        a.data.as_deref().expect("required by clap"),
        &lex,
        ck.model.config.image.input_size,
    )?;
    let gallery: Gallery = match (&a.gallery, &a.candidates) {
        (Some(g), _) => gallery_file::load(g)?,
        (None, Some(c)) => embed_gallery(
            &ck.model,
            &ck.store,
            &lex,
            &load_char_list(c)?,
            a.repr.into(),
        )?,
        (None, None) => {
            return Err(CliError::Other(
                "one of --gallery or --candidates is required".into(),
            ))
        }
    };
    let rows = predict_samples(
        &ck.model,
        &ck.store,
        &gallery,
        &samples,
        a.components.into(),
        a.batch,
    )?;
    if let Some(p) = &a.dump {
        write_predictions(p, &rows)?;
    }
    if let Some(p) = &a.per_class {
        write_per_class(p, &rows)?;
    }
    print_accuracy(&rows)
}
