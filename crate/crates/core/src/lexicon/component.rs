//! Atomic building blocks of a decomposition: the five stroke classes and
//! the twelve ideographic description characters that arrange components.

use core::fmt;

use serde::{Deserialize, Serialize};

/// One of the five basic stroke classes, labelled 1 to 5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StrokeClass {
    Horizontal = 1,
    Vertical = 2,
    LeftFalling = 3,
    RightFalling = 4,
    Turning = 5,
}

impl StrokeClass {
    pub const ALL: [StrokeClass; 5] = [
        StrokeClass::Horizontal,
        StrokeClass::Vertical,
        StrokeClass::LeftFalling,
        StrokeClass::RightFalling,
        StrokeClass::Turning,
    ];

    /// Label in `1..=5`.
    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(StrokeClass::Horizontal),
            2 => Some(StrokeClass::Vertical),
            3 => Some(StrokeClass::LeftFalling),
            4 => Some(StrokeClass::RightFalling),
            5 => Some(StrokeClass::Turning),
            _ => None,
        }
    }

    /// Parses the textual digit form used in IDS lines (`"1"` .. `"5"`).
    pub fn from_token(token: &str) -> Option<Self> {
        let mut bytes = token.bytes();
        match (bytes.next(), bytes.next()) {
            (Some(b), None) if (b'1'..=b'5').contains(&b) => Self::from_id(b - b'0'),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StrokeClass::Horizontal => "Horizontal",
            StrokeClass::Vertical => "Vertical",
            StrokeClass::LeftFalling => "LeftFalling",
            StrokeClass::RightFalling => "RightFalling",
            StrokeClass::Turning => "Turning",
        }
    }
}

impl fmt::Display for StrokeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}

/// Spatial composition operator, one per Ideographic Description Character
/// U+2FF0..=U+2FFB.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StructureOp {
    LeftToRight,
    AboveToBelow,
    LeftMiddleRight,
    AboveMiddleBelow,
    FullSurround,
    AboveSurround,
    BelowSurround,
    LeftSurround,
    UpperLeftSurround,
    UpperRightSurround,
    LowerLeftSurround,
    Overlaid,
}

impl StructureOp {
    pub const ALL: [StructureOp; 12] = [
        StructureOp::LeftToRight,
        StructureOp::AboveToBelow,
        StructureOp::LeftMiddleRight,
        StructureOp::AboveMiddleBelow,
        StructureOp::FullSurround,
        StructureOp::AboveSurround,
        StructureOp::BelowSurround,
        StructureOp::LeftSurround,
        StructureOp::UpperLeftSurround,
        StructureOp::UpperRightSurround,
        StructureOp::LowerLeftSurround,
        StructureOp::Overlaid,
    ];

    /// Dense index `0..12`, in codepoint order.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn codepoint(self) -> char {
        // U+2FF0 + index is always a valid scalar value.
        char::from_u32(0x2FF0 + self as u32).unwrap_or('\u{2FF0}')
    }

    pub fn from_char(c: char) -> Option<Self> {
        let cp = c as u32;
        if (0x2FF0..=0x2FFB).contains(&cp) {
            Some(Self::ALL[(cp - 0x2FF0) as usize])
        } else {
            None
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        let mut chars = token.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Self::from_char(c),
            _ => None,
        }
    }

    pub fn arity(self) -> usize {
        match self {
            StructureOp::LeftMiddleRight | StructureOp::AboveMiddleBelow => 3,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StructureOp::LeftToRight => "left-to-right",
            StructureOp::AboveToBelow => "above-to-below",
            StructureOp::LeftMiddleRight => "left-middle-right",
            StructureOp::AboveMiddleBelow => "above-middle-below",
            StructureOp::FullSurround => "full-surround",
            StructureOp::AboveSurround => "above-surround",
            StructureOp::BelowSurround => "below-surround",
            StructureOp::LeftSurround => "left-surround",
            StructureOp::UpperLeftSurround => "upper-left-surround",
            StructureOp::UpperRightSurround => "upper-right-surround",
            StructureOp::LowerLeftSurround => "lower-left-surround",
            StructureOp::Overlaid => "overlaid",
        }
    }
}

impl fmt::Display for StructureOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.codepoint())
    }
}
