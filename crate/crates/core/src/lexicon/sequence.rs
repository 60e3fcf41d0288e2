use alloc::vec::Vec;

use thiserror::Error;

use super::tree::{DecompositionTree, Node};
use super::vocab::Token;

/// Maximum sequence length including eos.
pub const MAX_SEQ_LEN: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SequenceError {
    #[error("sequence of {0} tokens (incl. eos) exceeds the maximum of {MAX_SEQ_LEN}")]
    SequenceTooLong(usize),
    #[error("malformed token sequence at position {0}")]
    Malformed(usize),
}

/// Role of a token in the decoupled representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    /// Leaf (radical or stroke) and the terminating eos.
    Detail,
    /// Internal node (structure operator).
    Structure,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ComponentMask {
    pub flags: Vec<Component>,
}

impl ComponentMask {
    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn count(&self, c: Component) -> usize {
        self.flags.iter().filter(|f| **f == c).count()
    }
}

/// Pre-order token list terminated by exactly one eos.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    tokens: Vec<Token>,
    mask: ComponentMask,
}

impl TokenSequence {
    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn mask(&self) -> &ComponentMask {
        &self.mask
    }

    /// Length including eos (K+1 or J+1).
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn ids(&self) -> Vec<u32> {
        self.tokens.iter().map(|t| t.id()).collect()
    }

    /// Rebuilds the tree this sequence was flattened from.
    pub fn to_tree(&self) -> Result<DecompositionTree, SequenceError> {
        fn go(tokens: &[Token], pos: &mut usize) -> Result<Node, SequenceError> {
            let at = *pos;
            let tok = *tokens.get(at).ok_or(SequenceError::Malformed(at))?;
            *pos += 1;
            match tok {
                Token::Op(op) => {
                    let children = (0..op.arity())
                        .map(|_| go(tokens, pos))
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(Node::Internal { op, children })
                }
                Token::Radical(r) => Ok(Node::Radical(r)),
                Token::Stroke(s) => Ok(Node::Stroke(s)),
                Token::Eos | Token::Pad => Err(SequenceError::Malformed(at)),
            }
        }
        let body = match self.tokens.split_last() {
            Some((Token::Eos, body)) => body,
            _ => return Err(SequenceError::Malformed(self.tokens.len())),
        };
        let mut pos = 0;
        let root = go(body, &mut pos)?;
        if pos != body.len() {
            return Err(SequenceError::Malformed(pos));
        }
        Ok(DecompositionTree::new(root))
    }
}

/// Pre-order flattening with eos appended. Internal nodes are flagged
/// [`Component::Structure`]; leaves and eos [`Component::Detail`].
pub fn flatten(tree: &DecompositionTree) -> Result<TokenSequence, SequenceError> {
    let mut tokens = tree.preorder();
    tokens.push(Token::Eos);
    if tokens.len() > MAX_SEQ_LEN {
        return Err(SequenceError::SequenceTooLong(tokens.len()));
    }
    let flags = tokens
        .iter()
        .map(|t| match t {
            Token::Op(_) => Component::Structure,
            _ => Component::Detail,
        })
        .collect();
    Ok(TokenSequence {
        tokens,
        mask: ComponentMask { flags },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::component::{StrokeClass, StructureOp};
    use crate::lexicon::tree::parse_ids;
    use crate::lexicon::vocab::RadicalVocab;
    use alloc::vec;
    use proptest::prelude::*;
    use Component::{Detail as D, Structure as S};

    #[test]
    fn single_stroke() {
        let t = DecompositionTree::new(Node::Stroke(StrokeClass::Horizontal));
        let seq = flatten(&t).unwrap();
        assert_eq!(
            seq.tokens(),
            &[Token::Stroke(StrokeClass::Horizontal), Token::Eos]
        );
        assert_eq!(seq.mask().flags, vec![D, D]);
    }

    #[test]
    fn nested_tree_preorder() {
        let t = parse_ids("⿱ ⿰ 1 2 5", &RadicalVocab::new()).unwrap();
        let seq = flatten(&t).unwrap();
        assert_eq!(
            seq.tokens(),
            &[
                Token::Op(StructureOp::AboveToBelow),
                Token::Op(StructureOp::LeftToRight),
                Token::Stroke(StrokeClass::Horizontal),
                Token::Stroke(StrokeClass::Vertical),
                Token::Stroke(StrokeClass::Turning),
                Token::Eos
            ]
        );
        assert_eq!(seq.mask().flags, vec![S, S, D, D, D, D]);
    }

    #[test]
    fn too_long_is_rejected() {
        // 25 operators + 26 leaves + eos = 52 tokens.
        let mut node = Node::Stroke(StrokeClass::Horizontal);
        for _ in 0..25 {
            node = Node::internal(
                StructureOp::LeftToRight,
                vec![Node::Stroke(StrokeClass::Vertical), node],
            );
        }
        let t = DecompositionTree::new(node);
        assert_eq!(flatten(&t), Err(SequenceError::SequenceTooLong(52)));
    }

    fn arb_node(depth: u32) -> impl Strategy<Value = Node> {
        let leaf = (1u8..=5).prop_map(|s| Node::Stroke(StrokeClass::from_id(s).unwrap()));
        leaf.prop_recursive(depth, 24, 3, |inner| {
            (0usize..12, proptest::collection::vec(inner, 3)).prop_map(|(i, mut kids)| {
                let op = StructureOp::ALL[i];
                kids.truncate(op.arity());
                Node::Internal { op, children: kids }
            })
        })
    }

    proptest! {
        #[test]
        fn flatten_parse_round_trip(root in arb_node(4)) {
            let tree = DecompositionTree::new(root);
            prop_assume!(tree.depth() <= 5);
            let vocab = RadicalVocab::new();
            let seq = match flatten(&tree) {
                Ok(s) => s,
                Err(_) => return Ok(()),
            };
            let reparsed = parse_ids(&tree.to_ids(&vocab), &vocab).unwrap();
            prop_assert_eq!(&reparsed, &tree);
            prop_assert_eq!(flatten(&reparsed).unwrap(), seq.clone());
            prop_assert_eq!(seq.to_tree().unwrap(), tree.clone());
            // Mask partition and leaf accounting.
            prop_assert_eq!(seq.mask().count(D) + seq.mask().count(S), seq.len());
            prop_assert_eq!(seq.mask().count(D), tree.leaf_count() + 1);
            prop_assert_eq!(seq.tokens().iter().filter(|t| **t == Token::Eos).count(), 1);
            prop_assert_eq!(seq.tokens().last(), Some(&Token::Eos));
        }
    }
}
