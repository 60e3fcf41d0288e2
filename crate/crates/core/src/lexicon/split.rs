//! Zero-shot train/test class splits.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use thiserror::Error;

use super::vocab::{RadicalId, Token};
use super::Lexicon;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SplitError {
    #[error("training split would be empty (m = 0)")]
    EmptyTrain,
    #[error("m + k = {requested} exceeds the {available} available classes")]
    SplitOverlap { requested: usize, available: usize },
    #[error("class `{0}` is not in the lexicon")]
    UnknownClass(char),
}

/// Disjoint train/test class lists, each in class order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub train: Vec<char>,
    pub test: Vec<char>,
}

/// First `m` classes for training, last `k` for testing.
pub fn character_zero_shot_split(
    lexicon: &Lexicon,
    class_order: &[char],
    m: usize,
    k: usize,
) -> Result<Split, SplitError> {
    if m == 0 {
        return Err(SplitError::EmptyTrain);
    }
    if m + k > class_order.len() {
        return Err(SplitError::SplitOverlap {
            requested: m + k,
            available: class_order.len(),
        });
    }
    if let Some(c) = class_order.iter().find(|c| !lexicon.contains(**c)) {
        return Err(SplitError::UnknownClass(*c));
    }
    Ok(Split {
        train: class_order[..m].to_vec(),
        test: class_order[class_order.len() - k..].to_vec(),
    })
}

/// Occurrence count of each radical across all radical trees (repeats within
/// one character count separately).
pub fn radical_frequencies(lexicon: &Lexicon) -> BTreeMap<RadicalId, usize> {
    let mut freq = BTreeMap::new();
    for e in lexicon.entries() {
        for t in e.radical_tree.preorder() {
            if let Token::Radical(r) = t {
                *freq.entry(r).or_insert(0) += 1;
            }
        }
    }
    freq
}

/// A character is a test class iff it contains a radical occurring fewer
/// than `n` times in the lexicon.
pub fn radical_zero_shot_split(lexicon: &Lexicon, n: usize) -> Split {
    let freq = radical_frequencies(lexicon);
    let mut split = Split::default();
    for e in lexicon.entries() {
        let rare = e.radical_tree.preorder().iter().any(|t| match t {
            Token::Radical(r) => freq.get(r).copied().unwrap_or(0) < n,
            _ => false,
        });
        if rare {
            split.test.push(e.character);
        } else {
            split.train.push(e.character);
        }
    }
    split
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::synth::{toy_lexicon, ToyLexiconConfig};
    use alloc::string::String;
    use core::fmt::Write;
    use std::collections::HashSet;

    /// 3755 single-stroke placeholder classes named by consecutive codepoints.
    fn wide_lexicon(n: usize) -> Lexicon {
        let mut text = String::new();
        for i in 0..n {
            let c = char::from_u32(0x4E00 + i as u32).unwrap();
            writeln!(text, "{c}\t{c}\t1").unwrap();
        }
        Lexicon::parse(&text).unwrap()
    }

    #[test]
    fn standard_character_split_sizes() {
        let lex = wide_lexicon(3755);
        let s = character_zero_shot_split(&lex, &lex.characters(), 500, 1000).unwrap();
        assert_eq!(s.train.len(), 500);
        assert_eq!(s.test.len(), 1000);
        let train: HashSet<_> = s.train.iter().collect();
        assert!(s.test.iter().all(|c| !train.contains(c)));
    }

    #[test]
    fn empty_train_and_overlap_errors() {
        let lex = wide_lexicon(10);
        let order = lex.characters();
        assert_eq!(
            character_zero_shot_split(&lex, &order, 0, 5),
            Err(SplitError::EmptyTrain)
        );
        assert_eq!(
            character_zero_shot_split(&lex, &order, 6, 5),
            Err(SplitError::SplitOverlap {
                requested: 11,
                available: 10
            })
        );
    }

    #[test]
    fn toy_character_split_last_classes_unseen() {
        let lex = toy_lexicon(&ToyLexiconConfig::default()).unwrap();
        assert_eq!(lex.len(), 200);
        let order = lex.characters();
        let s = character_zero_shot_split(&lex, &order, 150, 50).unwrap();
        // Set arithmetic: test = order[150..200], train = order[..150].
        let expected_test: HashSet<char> = order[150..].iter().copied().collect();
        let got_test: HashSet<char> = s.test.iter().copied().collect();
        assert_eq!(got_test, expected_test);
        let train: HashSet<char> = s.train.iter().copied().collect();
        assert!(train.is_disjoint(&got_test));
        assert_eq!(train.len() + got_test.len(), 200);
    }

    #[test]
    fn radical_split_with_rare_radical() {
        // r9 appears 3 times, every other radical at least 5 times.
        let mut text = String::new();
        let mut next = 0x4E00u32;
        let mut push = |rads: &str, text: &mut String| {
            let c = char::from_u32(next).unwrap();
            next += 1;
            writeln!(text, "{c}\t{rads}\t⿰ 1 2").unwrap();
        };
        for _ in 0..5 {
            push("⿰ r1 r2", &mut text);
        }
        push("⿰ r9 r1", &mut text);
        push("⿱ r2 r9", &mut text);
        push("r9", &mut text);
        let lex = Lexicon::parse(&text).unwrap();
        let freq = radical_frequencies(&lex);
        let r9 = lex.radicals().get("r9").unwrap();
        assert_eq!(freq[&r9], 3);
        let s = radical_zero_shot_split(&lex, 5);
        let with_r9: Vec<char> = lex
            .entries()
            .iter()
            .filter(|e| e.radical_tree.preorder().contains(&Token::Radical(r9)))
            .map(|e| e.character)
            .collect();
        assert_eq!(s.test, with_r9);
        assert_eq!(s.train.len(), 5);
    }

    #[test]
    fn threshold_one_keeps_everything_in_train() {
        let lex = toy_lexicon(&ToyLexiconConfig::default()).unwrap();
        let s = radical_zero_shot_split(&lex, 1);
        assert!(s.test.is_empty());
        assert_eq!(s.train.len(), lex.len());
    }

    #[test]
    fn radical_split_partition_laws() {
        let lex = toy_lexicon(&ToyLexiconConfig::default()).unwrap();
        let freq = radical_frequencies(&lex);
        for n in [10, 20, 30, 40, 50] {
            let s = radical_zero_shot_split(&lex, n);
            assert_eq!(s.train.len() + s.test.len(), lex.len());
            let radicals_of = |c: char| -> Vec<RadicalId> {
                lex.get(c)
                    .unwrap()
                    .radical_tree
                    .preorder()
                    .into_iter()
                    .filter_map(|t| match t {
                        Token::Radical(r) => Some(r),
                        _ => None,
                    })
                    .collect()
            };
            for c in &s.test {
                assert!(radicals_of(*c).iter().any(|r| freq[r] < n));
            }
            for c in &s.train {
                assert!(radicals_of(*c).iter().all(|r| freq[r] >= n));
            }
        }
    }
}
