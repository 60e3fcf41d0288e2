//! Prediction dumps, accuracy, per-class tables, and similarity-map images.

use std::io;
use std::path::{Path, PathBuf};

use higita_core::alignment::Components;
use higita_core::lexicon::Lexicon;
use higita_core::model::HiGita;
use higita_core::nn::ParamStore;
use higita_core::retrieval::{predict, similarity_maps, Gallery, Prediction, RetrievalError};
use thiserror::Error;

use crate::dataset::LabeledSample;
use crate::pgm;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: line {line}: {reason}")]
    BadRow {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// One line of a prediction dump.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub image_id: String,
    pub gold: char,
    pub top1: char,
    pub top1_score: f64,
}

impl PredictionRow {
    pub fn correct(&self) -> bool {
        self.gold == self.top1
    }
}

pub const PREDICTION_HEADER: [&str; 4] = ["image_id", "gold", "top1", "top1_score"];

/// Top-1 predictions for labeled samples.
pub fn predict_samples(
    model: &HiGita,
    store: &ParamStore,
    gallery: &Gallery,
    samples: &[LabeledSample],
    components: Components,
    batch: usize,
) -> Result<Vec<PredictionRow>, RetrievalError> {
    let images: Vec<(&[f32], char)> = samples
        .iter()
        .map(|s| (s.sample.image.pixels(), s.sample.character))
        .collect();
    let preds = predict(model, store, gallery, &images, components, batch)?;
    Ok(samples
        .iter()
        .zip(preds)
        .map(|(s, p)| PredictionRow {
            image_id: s.id.clone(),
            gold: p.gold,
            top1: p.top1,
            top1_score: p.score,
        })
        .collect())
}

/// CACC of a dump, via the same counting as the retrieval module.
pub fn accuracy(rows: &[PredictionRow]) -> Result<f64, RetrievalError> {
    let preds: Vec<Prediction> = rows
        .iter()
        .map(|r| Prediction {
            gold: r.gold,
            top1: r.top1,
            score: r.top1_score,
        })
        .collect();
    higita_core::retrieval::cacc(&preds)
}

fn tsv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, EvalError> {
    csv::WriterBuilder::new()
        .delimiter(b'\t')
        .quote_style(csv::QuoteStyle::Never)
        .from_path(path)
        .map_err(|source| EvalError::Csv {
            path: path.to_path_buf(),
            source,
        })
}

pub fn write_predictions(path: &Path, rows: &[PredictionRow]) -> Result<(), EvalError> {
    let csv_err = |source| EvalError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = tsv_writer(path)?;
    w.write_record(PREDICTION_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.image_id.clone(),
            r.gold.to_string(),
            r.top1.to_string(),
            format!("{:?}", r.top1_score),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>, EvalError> {
    let mut r = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .from_path(path)
        .map_err(|source| EvalError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let bad = |reason: &str| EvalError::BadRow {
            path: path.to_path_buf(),
            line,
            reason: reason.to_string(),
        };
        let rec = rec.map_err(|source| EvalError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        if rec.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        let one = |s: &str| {
            let mut cs = s.chars();
            match (cs.next(), cs.next()) {
                (Some(c), None) => Ok(c),
                _ => Err(bad("label must be a single character")),
            }
        };
        out.push(PredictionRow {
            image_id: rec[0].to_string(),
            gold: one(&rec[1])?,
            top1: one(&rec[2])?,
            top1_score: rec[3].parse().map_err(|_| bad("score is not a number"))?,
        });
    }
    Ok(out)
}

/// `char,correct,total,accuracy` per gold class, in first-seen order.
pub fn write_per_class(path: &Path, rows: &[PredictionRow]) -> Result<(), EvalError> {
    let mut order: Vec<char> = Vec::new();
    let mut counts: std::collections::HashMap<char, (usize, usize)> = Default::default();
    for r in rows {
        let e = counts.entry(r.gold).or_insert_with(|| {
            order.push(r.gold);
            (0, 0)
        });
        e.0 += usize::from(r.correct());
        e.1 += 1;
    }
    let csv_err = |source| EvalError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["char", "correct", "total", "accuracy"])
        .map_err(csv_err)?;
    for c in order {
        let (k, n) = counts[&c];
        w.write_record([
            c.to_string(),
            k.to_string(),
            n.to_string(),
            format!("{:?}", k as f64 / n as f64),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `{level}_{token}.pgm` for every similarity map of `c` against
/// `image`, upsampled to the image side. Returns the written paths.
pub fn write_attention_maps(
    model: &HiGita,
    store: &ParamStore,
    lexicon: &Lexicon,
    image: &[f32],
    c: char,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, EvalError> {
    let size = model.config.image.input_size;
    let maps = similarity_maps(model, store, lexicon, image, c)?;
    std::fs::create_dir_all(out_dir).map_err(|source| EvalError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut paths = Vec::with_capacity(maps.len());
    for m in &maps {
        let p = out_dir.join(format!("{}_{}.pgm", m.level, m.token));
        pgm::write(&p, size, size, &m.to_gray(size)).map_err(|e| EvalError::Io {
            path: p.clone(),
            source: io::Error::other(e.to_string()),
        })?;
        paths.push(p);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, gold: char, top1: char, s: f64) -> PredictionRow {
        PredictionRow {
            image_id: id.into(),
            gold,
            top1,
            top1_score: s,
        }
    }

    #[test]
    fn dump_round_trip() {
        let rows = vec![
            row("a.pgm", '一', '一', 0.125),
            row("b c.pgm", '二', '一', -3.0e-7),
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.tsv");
        write_predictions(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("image_id\tgold\ttop1\ttop1_score\n"));
        assert_eq!(read_predictions(&p).unwrap(), rows);
        assert_eq!(accuracy(&rows).unwrap(), 0.5);
    }

    #[test]
    fn per_class_table() {
        let rows = vec![
            row("1", 'b', 'b', 1.0),
            row("2", 'a', 'b', 1.0),
            row("3", 'b', 'a', 1.0),
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        write_per_class(&p, &rows).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "char,correct,total,accuracy\nb,1,2,0.5\na,0,1,0.0\n"
        );
    }
}
