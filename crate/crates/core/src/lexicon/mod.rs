//! Character decompositions: radical and stroke trees, their flattened token
//! sequences, the tab-separated lexicon format, and zero-shot splits.

mod component;
mod sequence;
mod split;
pub mod synth;
mod tree;
mod vocab;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use thiserror::Error;

pub use component::{StrokeClass, StructureOp};
pub use sequence::{flatten, Component, ComponentMask, SequenceError, TokenSequence, MAX_SEQ_LEN};
pub use split::{
    character_zero_shot_split, radical_frequencies, radical_zero_shot_split, Split, SplitError,
};
pub use tree::{
    parse_ids, parse_ids_interning, substitute_radicals, DecompositionTree, IdsError, Node,
};
pub use vocab::{
    vocab_size, RadicalId, RadicalVocab, SequenceKind, Token, EOS_ID, LEAF_BASE, OP_BASE, PAD_ID,
    STANDARD_RADICAL_COUNT,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexiconError {
    #[error("line {line}: {source}")]
    Ids {
        line: usize,
        #[source]
        source: IdsError,
    },
    #[error("line {line}: {source}")]
    Sequence {
        line: usize,
        #[source]
        source: SequenceError,
    },
    #[error("line {line}: expected 3 tab-separated fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: character field must be a single character, got `{field}`")]
    BadCharacter { line: usize, field: String },
    #[error("line {line}: duplicate character `{character}`")]
    DuplicateCharacter { line: usize, character: char },
    #[error("character `{0}` is not in the lexicon")]
    CharNotInLexicon(char),
}

impl LexiconError {
    /// 1-based line number for parse failures.
    pub fn line(&self) -> Option<usize> {
        match self {
            LexiconError::Ids { line, .. }
            | LexiconError::Sequence { line, .. }
            | LexiconError::FieldCount { line, .. }
            | LexiconError::BadCharacter { line, .. }
            | LexiconError::DuplicateCharacter { line, .. } => Some(*line),
            LexiconError::CharNotInLexicon(_) => None,
        }
    }
}

/// Validation failure of a single entry, before a line number is attached.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EntryError {
    #[error(transparent)]
    Ids(#[from] IdsError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
}

impl EntryError {
    pub fn at_line(self, line: usize) -> LexiconError {
        match self {
            EntryError::Ids(source) => LexiconError::Ids { line, source },
            EntryError::Sequence(source) => LexiconError::Sequence { line, source },
        }
    }
}

/// Both decompositions of one character plus their flattened sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub character: char,
    pub radical_tree: DecompositionTree,
    pub stroke_tree: DecompositionTree,
    pub radical_seq: TokenSequence,
    pub stroke_seq: TokenSequence,
}

impl Entry {
    pub fn sequence(&self, kind: SequenceKind) -> &TokenSequence {
        match kind {
            SequenceKind::Radical => &self.radical_seq,
            SequenceKind::Stroke => &self.stroke_seq,
        }
    }
}

/// Immutable set of decompositions in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: Vec<Entry>,
    index: BTreeMap<char, usize>,
    radicals: RadicalVocab,
}

impl Lexicon {
    /// Builds an entry from its two trees, validating leaf families and lengths.
    pub fn make_entry(
        character: char,
        radical_tree: DecompositionTree,
        stroke_tree: DecompositionTree,
        radicals: &RadicalVocab,
    ) -> Result<Entry, EntryError> {
        check_leaf_kind(&radical_tree, SequenceKind::Radical, radicals)?;
        check_leaf_kind(&stroke_tree, SequenceKind::Stroke, radicals)?;
        let radical_seq = flatten(&radical_tree)?;
        let stroke_seq = flatten(&stroke_tree)?;
        Ok(Entry {
            character,
            radical_tree,
            stroke_tree,
            radical_seq,
            stroke_seq,
        })
    }

    /// Assembles a lexicon from entries whose radical ids index `radicals`.
    pub fn from_entries(entries: Vec<Entry>, radicals: RadicalVocab) -> Result<Self, LexiconError> {
        let mut index = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            if index.insert(e.character, i).is_some() {
                return Err(LexiconError::DuplicateCharacter {
                    line: i + 1,
                    character: e.character,
                });
            }
        }
        Ok(Self {
            entries,
            index,
            radicals,
        })
    }

    /// Parses the tab-separated lexicon format. Radical ids are assigned in
    /// first-seen order.
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut radicals = RadicalVocab::new();
        let mut entries = Vec::new();
        let mut index = BTreeMap::new();
        let strokes_only = RadicalVocab::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let raw = raw.strip_suffix('\r').unwrap_or(raw);
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.len() != 3 {
                return Err(LexiconError::FieldCount {
                    line,
                    found: fields.len(),
                });
            }
            let mut chars = fields[0].trim().chars();
            let character = match (chars.next(), chars.next()) {
                (Some(c), None) => c,
                _ => {
                    return Err(LexiconError::BadCharacter {
                        line,
                        field: fields[0].into(),
                    })
                }
            };
            if index.contains_key(&character) {
                return Err(LexiconError::DuplicateCharacter { line, character });
            }
            let radical_tree = parse_ids_interning(fields[1], &mut radicals)
                .map_err(|source| LexiconError::Ids { line, source })?;
            let stroke_tree = parse_ids(fields[2], &strokes_only)
                .map_err(|source| LexiconError::Ids { line, source })?;
            let entry = Self::make_entry(character, radical_tree, stroke_tree, &radicals)
                .map_err(|e| e.at_line(line))?;
            index.insert(character, entries.len());
            entries.push(entry);
        }
        Ok(Self {
            entries,
            index,
            radicals,
        })
    }

    /// Canonical text form; `parse(to_text())` reproduces `self` and
    /// re-serializes byte-identically.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# char\tradical IDS\tstroke IDS\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                e.character,
                e.radical_tree.to_ids(&self.radicals),
                e.stroke_tree.to_ids(&self.radicals)
            );
        }
        out
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn get(&self, c: char) -> Option<&Entry> {
        self.index.get(&c).map(|&i| &self.entries[i])
    }

    pub fn entry(&self, c: char) -> Result<&Entry, LexiconError> {
        self.get(c).ok_or(LexiconError::CharNotInLexicon(c))
    }

    pub fn contains(&self, c: char) -> bool {
        self.index.contains_key(&c)
    }

    /// Characters in file order (the canonical class order).
    pub fn characters(&self) -> Vec<char> {
        self.entries.iter().map(|e| e.character).collect()
    }

    pub fn radicals(&self) -> &RadicalVocab {
        &self.radicals
    }

    pub fn vocab_size(&self, kind: SequenceKind) -> usize {
        vocab_size(kind, self.radicals.len())
    }

    /// True if the radical inventory is larger than the national standard.
    pub fn exceeds_standard_radical_count(&self) -> bool {
        self.radicals.len() > STANDARD_RADICAL_COUNT
    }
}

fn check_leaf_kind(
    tree: &DecompositionTree,
    kind: SequenceKind,
    radicals: &RadicalVocab,
) -> Result<(), IdsError> {
    for t in tree.preorder() {
        let bad = match (kind, t) {
            (SequenceKind::Radical, Token::Stroke(s)) => Some(alloc::format!("{s}")),
            (SequenceKind::Stroke, Token::Radical(r)) => {
                Some(String::from(radicals.glyph(r).unwrap_or("?")))
            }
            _ => None,
        };
        if let Some(token) = bad {
            return Err(IdsError::WrongLeafKind { kind, token });
        }
    }
    Ok(())
}
