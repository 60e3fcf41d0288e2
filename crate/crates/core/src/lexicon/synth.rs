//! Procedural toy lexicons: a small radical inventory built from the five
//! stroke classes, composed into characters with the structure operators.
//!
//! Characters are assigned Private Use Area codepoints starting at
//! U+E000; radicals are named `r0`, `r1`, ...

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tree::{substitute_radicals, DecompositionTree, Node};
use super::{EntryError, Lexicon, RadicalId, RadicalVocab, StrokeClass, StructureOp};

#[derive(Debug, Clone, PartialEq)]
pub struct ToyLexiconConfig {
    pub characters: usize,
    pub radicals: usize,
    pub seed: u64,
    /// Codepoint of the first generated character.
    pub first_char: u32,
    /// Zipf-like exponent of radical popularity (0 = uniform).
    pub radical_skew: f64,
}

impl Default for ToyLexiconConfig {
    fn default() -> Self {
        Self {
            characters: 200,
            radicals: 30,
            seed: 0,
            first_char: 0xE000,
            radical_skew: 0.6,
        }
    }
}

const MAX_ATTEMPTS: usize = 200_000;

/// Generates a lexicon whose characters have pairwise distinct stroke trees.
///
/// Returns `None` if the requested sizes cannot be reached (too many
/// characters for the radical inventory).
pub fn toy_lexicon(cfg: &ToyLexiconConfig) -> Option<Lexicon> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let radical_strokes = sample_radicals(cfg.radicals, &mut rng)?;

    let mut vocab = RadicalVocab::new();
    for i in 0..cfg.radicals {
        vocab.intern(&format!("r{i}"));
    }
    let weights: Vec<f64> = (0..cfg.radicals)
        .map(|i| 1.0 / libm::pow(1.0 + i as f64, cfg.radical_skew))
        .collect();
    let pick = WeightedIndex::new(&weights).ok()?;

    let mut seen_strokes: BTreeSet<DecompositionTree> = BTreeSet::new();
    let mut entries = Vec::with_capacity(cfg.characters);
    let mut attempts = 0;
    while entries.len() < cfg.characters {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return None;
        }
        let radical_tree = DecompositionTree::new(compose(&mut rng, &pick));
        let stroke_tree = substitute_radicals(&radical_tree, &|r: RadicalId| {
            radical_strokes[r.index()].clone()
        });
        if !seen_strokes.insert(stroke_tree.clone()) {
            continue;
        }
        let character = char::from_u32(cfg.first_char + entries.len() as u32)?;
        match Lexicon::make_entry(character, radical_tree, stroke_tree, &vocab) {
            Ok(e) => entries.push(e),
            Err(EntryError::Sequence(_)) => continue,
            Err(EntryError::Ids(_)) => return None,
        }
    }
    // Re-parse so radical ids follow first-seen file order, exactly as a
    // saved copy of this lexicon would load.
    let lex = Lexicon::from_entries(entries, vocab).ok()?;
    Lexicon::parse(&lex.to_text()).ok()
}

fn stroke(rng: &mut impl Rng) -> Node {
    Node::Stroke(StrokeClass::ALL[rng.random_range(0..5)])
}

/// Distinct stroke trees of one to three strokes.
fn sample_radicals(count: usize, rng: &mut impl Rng) -> Option<Vec<Node>> {
    let mut out: Vec<Node> = Vec::with_capacity(count);
    let mut seen = BTreeSet::new();
    let sizes = WeightedIndex::new([1.0, 5.0, 4.0]).ok()?;
    for _ in 0..MAX_ATTEMPTS {
        if out.len() == count {
            break;
        }
        let node = match sizes.sample(rng) + 1 {
            1 => stroke(rng),
            2 => {
                let op = [
                    StructureOp::LeftToRight,
                    StructureOp::AboveToBelow,
                    StructureOp::Overlaid,
                ][rng.random_range(0..3)];
                let (a, b) = (stroke(rng), stroke(rng));
                // Overlaid strokes render identically in either order.
                if op == StructureOp::Overlaid && !stroke_lt(&a, &b) {
                    continue;
                }
                Node::internal(op, vec![a, b])
            }
            _ => match rng.random_range(0..4) {
                0 => Node::internal(
                    StructureOp::LeftMiddleRight,
                    vec![stroke(rng), stroke(rng), stroke(rng)],
                ),
                1 => Node::internal(
                    StructureOp::AboveMiddleBelow,
                    vec![stroke(rng), stroke(rng), stroke(rng)],
                ),
                2 => Node::internal(
                    StructureOp::LeftToRight,
                    vec![
                        stroke(rng),
                        Node::internal(StructureOp::AboveToBelow, vec![stroke(rng), stroke(rng)]),
                    ],
                ),
                _ => Node::internal(
                    StructureOp::AboveToBelow,
                    vec![
                        Node::internal(StructureOp::LeftToRight, vec![stroke(rng), stroke(rng)]),
                        stroke(rng),
                    ],
                ),
            },
        };
        let tree = DecompositionTree::new(node.clone());
        if seen.insert(tree) {
            out.push(node);
        }
    }
    (out.len() == count).then_some(out)
}

fn stroke_lt(a: &Node, b: &Node) -> bool {
    match (a, b) {
        (Node::Stroke(x), Node::Stroke(y)) => x < y,
        _ => false,
    }
}

/// One random character layout over radical leaves.
fn compose(rng: &mut impl Rng, pick: &WeightedIndex<f64>) -> Node {
    const BINARY: [(StructureOp, f64); 9] = [
        (StructureOp::LeftToRight, 6.0),
        (StructureOp::AboveToBelow, 5.0),
        (StructureOp::FullSurround, 1.0),
        (StructureOp::AboveSurround, 1.0),
        (StructureOp::BelowSurround, 1.0),
        (StructureOp::LeftSurround, 1.0),
        (StructureOp::UpperLeftSurround, 1.0),
        (StructureOp::UpperRightSurround, 1.0),
        (StructureOp::LowerLeftSurround, 1.0),
    ];
    let leaf = |rng: &mut _| Node::Radical(RadicalId(pick.sample(rng) as u32));
    let layouts = WeightedIndex::new([6.0, 2.0, 2.0]).expect("static weights");
    match layouts.sample(rng) {
        0 => {
            let ops = WeightedIndex::new(BINARY.iter().map(|(_, w)| *w)).expect("static weights");
            let op = BINARY[ops.sample(rng)].0;
            Node::internal(op, vec![leaf(rng), leaf(rng)])
        }
        1 => {
            let op = if rng.random_bool(0.5) {
                StructureOp::LeftMiddleRight
            } else {
                StructureOp::AboveMiddleBelow
            };
            Node::internal(op, vec![leaf(rng), leaf(rng), leaf(rng)])
        }
        _ => {
            let (outer, inner) = if rng.random_bool(0.5) {
                (StructureOp::LeftToRight, StructureOp::AboveToBelow)
            } else {
                (StructureOp::AboveToBelow, StructureOp::LeftToRight)
            };
            let nested = Node::internal(inner, vec![leaf(rng), leaf(rng)]);
            if rng.random_bool(0.5) {
                Node::internal(outer, vec![leaf(rng), nested])
            } else {
                Node::internal(outer, vec![nested, leaf(rng)])
            }
        }
    }
}
