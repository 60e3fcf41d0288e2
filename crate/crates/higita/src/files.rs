//! Lexicon files and character lists (split files, candidate lists).

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use higita_core::lexicon::{Lexicon, LexiconError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Lexicon {
        path: PathBuf,
        #[source]
        source: LexiconError,
    },
    #[error("{path}: line {line}: expected a single character, got `{text}`")]
    BadCharLine {
        path: PathBuf,
        line: usize,
        text: String,
    },
}

pub(crate) fn read_text(path: &Path) -> Result<String, FileError> {
    fs::read_to_string(path).map_err(|source| FileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), FileError> {
    fs::write(path, text).map_err(|source| FileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_lexicon(path: &Path) -> Result<Lexicon, FileError> {
    Lexicon::parse(&read_text(path)?).map_err(|source| FileError::Lexicon {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_lexicon(lexicon: &Lexicon, path: &Path) -> Result<(), FileError> {
    write_text(path, &lexicon.to_text())
}

/// One character per line; blank lines and `#` comments are skipped.
pub fn load_char_list(path: &Path) -> Result<Vec<char>, FileError> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut cs = t.chars();
        match (cs.next(), cs.next()) {
            (Some(c), None) => out.push(c),
            _ => {
                return Err(FileError::BadCharLine {
                    path: path.to_path_buf(),
                    line: i + 1,
                    text: t.to_string(),
                })
            }
        }
    }
    Ok(out)
}

pub fn save_char_list(chars: &[char], path: &Path) -> Result<(), FileError> {
    let text: String = chars.iter().flat_map(|c| [*c, '\n']).collect();
    write_text(path, &text)
}
