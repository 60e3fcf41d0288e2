use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::component::{StrokeClass, StructureOp};

/// Radicals above this count exceed the national standard inventory; only
/// used as a warning threshold.
pub const STANDARD_RADICAL_COUNT: usize = 401;

/// Dense index into a [`RadicalVocab`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RadicalId(pub u32);

impl RadicalId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Radical glyphs in first-seen order; ids are dense `0..len`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RadicalVocab {
    glyphs: Vec<String>,
    index: BTreeMap<String, RadicalId>,
}

impl RadicalVocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.glyphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.glyphs.is_empty()
    }

    pub fn get(&self, glyph: &str) -> Option<RadicalId> {
        self.index.get(glyph).copied()
    }

    pub fn glyph(&self, id: RadicalId) -> Option<&str> {
        self.glyphs.get(id.index()).map(String::as_str)
    }

    /// Returns the id of `glyph`, assigning the next dense id if unseen.
    pub fn intern(&mut self, glyph: &str) -> RadicalId {
        if let Some(id) = self.index.get(glyph) {
            return *id;
        }
        let id = RadicalId(self.glyphs.len() as u32);
        self.glyphs.push(glyph.to_string());
        self.index.insert(glyph.to_string(), id);
        id
    }

    pub fn iter(&self) -> impl Iterator<Item = (RadicalId, &str)> {
        self.glyphs
            .iter()
            .enumerate()
            .map(|(i, g)| (RadicalId(i as u32), g.as_str()))
    }
}

/// Which decomposition family a sequence belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SequenceKind {
    Radical,
    Stroke,
}

/// One position of a flattened decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Token {
    Pad,
    Eos,
    Op(StructureOp),
    Radical(RadicalId),
    Stroke(StrokeClass),
}

/// Token id layout shared by both families: pad, eos, the twelve operators,
/// then the family's leaves.
pub const PAD_ID: u32 = 0;
pub const EOS_ID: u32 = 1;
pub const OP_BASE: u32 = 2;
pub const LEAF_BASE: u32 = OP_BASE + 12;

impl Token {
    pub fn id(self) -> u32 {
        match self {
            Token::Pad => PAD_ID,
            Token::Eos => EOS_ID,
            Token::Op(op) => OP_BASE + op.index() as u32,
            Token::Radical(r) => LEAF_BASE + r.0,
            Token::Stroke(s) => LEAF_BASE + u32::from(s.id()) - 1,
        }
    }

    /// Inverse of [`Token::id`] within one sequence family.
    pub fn from_id(id: u32, kind: SequenceKind) -> Option<Token> {
        match id {
            PAD_ID => Some(Token::Pad),
            EOS_ID => Some(Token::Eos),
            i if i < LEAF_BASE => Some(Token::Op(StructureOp::ALL[(i - OP_BASE) as usize])),
            i => match kind {
                SequenceKind::Radical => Some(Token::Radical(RadicalId(i - LEAF_BASE))),
                SequenceKind::Stroke => u8::try_from(i - LEAF_BASE + 1)
                    .ok()
                    .and_then(StrokeClass::from_id)
                    .map(Token::Stroke),
            },
        }
    }
}

/// Size of the token id space for a family (pad, eos, operators, leaves).
pub fn vocab_size(kind: SequenceKind, radical_count: usize) -> usize {
    let leaves = match kind {
        SequenceKind::Radical => radical_count,
        SequenceKind::Stroke => StrokeClass::ALL.len(),
    };
    LEAF_BASE as usize + leaves
}
