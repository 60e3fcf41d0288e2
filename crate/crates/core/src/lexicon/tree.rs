//! Decomposition trees and their pre-order textual form (IDS lines).

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use super::component::{StrokeClass, StructureOp};
use super::vocab::{RadicalId, RadicalVocab, SequenceKind, Token};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdsError {
    #[error("empty IDS line")]
    Empty,
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("operator {op} expects {expected} children, input ended after {found}")]
    ArityMismatch {
        op: StructureOp,
        expected: usize,
        found: usize,
    },
    #[error("{0} trailing token(s) after a complete tree")]
    TrailingTokens(usize),
    #[error("{kind:?} tree contains a leaf of the other family: `{token}`")]
    WrongLeafKind { kind: SequenceKind, token: String },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    Internal {
        op: StructureOp,
        children: Vec<Node>,
    },
    Radical(RadicalId),
    Stroke(StrokeClass),
}

impl Node {
    pub fn internal(op: StructureOp, children: Vec<Node>) -> Node {
        debug_assert_eq!(children.len(), op.arity());
        Node::Internal { op, children }
    }

    pub fn is_leaf(&self) -> bool {
        !matches!(self, Node::Internal { .. })
    }

    fn token(&self) -> Token {
        match self {
            Node::Internal { op, .. } => Token::Op(*op),
            Node::Radical(r) => Token::Radical(*r),
            Node::Stroke(s) => Token::Stroke(*s),
        }
    }
}

/// Ordered tree: internal nodes are structure operators, leaves are radicals
/// or strokes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DecompositionTree {
    pub root: Node,
}

impl DecompositionTree {
    pub fn new(root: Node) -> Self {
        Self { root }
    }

    /// Pre-order traversal of node tokens (no eos).
    pub fn preorder(&self) -> Vec<Token> {
        let mut out = Vec::new();
        let mut stack: Vec<&Node> = alloc::vec![&self.root];
        while let Some(node) = stack.pop() {
            out.push(node.token());
            if let Node::Internal { children, .. } = node {
                stack.extend(children.iter().rev());
            }
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.preorder().len()
    }

    pub fn leaf_count(&self) -> usize {
        self.preorder()
            .iter()
            .filter(|t| !matches!(t, Token::Op(_)))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn go(n: &Node) -> usize {
            match n {
                Node::Internal { children, .. } => 1 + children.iter().map(go).max().unwrap_or(0),
                _ => 1,
            }
        }
        go(&self.root)
    }

    /// `Some(kind)` if every leaf belongs to one family.
    pub fn leaf_kind(&self) -> Option<SequenceKind> {
        let mut kind = None;
        for t in self.preorder() {
            let k = match t {
                Token::Radical(_) => SequenceKind::Radical,
                Token::Stroke(_) => SequenceKind::Stroke,
                _ => continue,
            };
            match kind {
                None => kind = Some(k),
                Some(prev) if prev != k => return None,
                _ => {}
            }
        }
        kind
    }

    /// Whitespace-separated pre-order IDS line.
    pub fn to_ids(&self, vocab: &RadicalVocab) -> String {
        let mut out = String::new();
        for (i, t) in self.preorder().into_iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            match t {
                Token::Op(op) => out.push(op.codepoint()),
                Token::Stroke(s) => out.push(char::from(b'0' + s.id())),
                Token::Radical(r) => match vocab.glyph(r) {
                    Some(g) => out.push_str(g),
                    None => out.push('?'),
                },
                Token::Eos | Token::Pad => {}
            }
        }
        out
    }
}

/// Parses a pre-order IDS line, resolving radical glyphs against a fixed
/// vocabulary.
pub fn parse_ids(line: &str, vocab: &RadicalVocab) -> Result<DecompositionTree, IdsError> {
    parse_with(line, |glyph| vocab.get(glyph))
}

/// Like [`parse_ids`] but interns unseen radical glyphs.
pub fn parse_ids_interning(
    line: &str,
    vocab: &mut RadicalVocab,
) -> Result<DecompositionTree, IdsError> {
    parse_with(line, |glyph| Some(vocab.intern(glyph)))
}

fn parse_with(
    line: &str,
    mut resolve: impl FnMut(&str) -> Option<RadicalId>,
) -> Result<DecompositionTree, IdsError> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(IdsError::Empty);
    }
    let mut pos = 0;
    let root = parse_node(&tokens, &mut pos, &mut resolve)?;
    if pos < tokens.len() {
        return Err(IdsError::TrailingTokens(tokens.len() - pos));
    }
    Ok(DecompositionTree { root })
}

fn parse_node(
    tokens: &[&str],
    pos: &mut usize,
    resolve: &mut impl FnMut(&str) -> Option<RadicalId>,
) -> Result<Node, IdsError> {
    let tok = tokens[*pos];
    *pos += 1;
    if let Some(op) = StructureOp::from_token(tok) {
        let mut children = Vec::with_capacity(op.arity());
        for found in 0..op.arity() {
            if *pos >= tokens.len() {
                return Err(IdsError::ArityMismatch {
                    op,
                    expected: op.arity(),
                    found,
                });
            }
            children.push(parse_node(tokens, pos, resolve)?);
        }
        return Ok(Node::Internal { op, children });
    }
    if let Some(stroke) = StrokeClass::from_token(tok) {
        return Ok(Node::Stroke(stroke));
    }
    resolve(tok)
        .map(Node::Radical)
        .ok_or_else(|| IdsError::UnknownToken(tok.to_string()))
}

/// Replaces every radical leaf by the subtree returned from `expand`.
pub fn substitute_radicals(
    tree: &DecompositionTree,
    expand: &impl Fn(RadicalId) -> Node,
) -> DecompositionTree {
    fn go(n: &Node, expand: &impl Fn(RadicalId) -> Node) -> Node {
        match n {
            Node::Internal { op, children } => Node::Internal {
                op: *op,
                children: children.iter().map(|c| go(c, expand)).collect(),
            },
            Node::Radical(r) => expand(*r),
            Node::Stroke(s) => Node::Stroke(*s),
        }
    }
    DecompositionTree::new(go(&tree.root, expand))
}
