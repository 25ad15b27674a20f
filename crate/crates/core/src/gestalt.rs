//! String similarity kernel behind the Gestalt score and closest-choice
//! mapping.
//!
//! Two variants are provided. `Gestalt` anchors on the longest contiguous
//! common run (leftmost in the first argument, then leftmost in the second)
//! and recurses on the unmatched text either side of it, Ratcliff/Obershelp
//! style, with no junk heuristics. `LcsRatio` uses the longest common
//! subsequence instead. Both score `2·M / (|a| + |b|)` over Unicode scalar
//! values.
//!
//! `Gestalt` is not symmetric in general; callers that care must fix the
//! argument order.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::corpus::{ChoiceLabel, Question};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityVariant {
    #[default]
    Gestalt,
    LcsRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    TrimOnly,
    NfkcTrim,
}

impl Normalization {
    pub fn apply(self, text: &str) -> String {
        match self {
            Normalization::TrimOnly => text.trim().to_owned(),
            Normalization::NfkcTrim => text.nfkc().collect::<String>().trim().to_owned(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SimilarityMode {
    pub variant: SimilarityVariant,
    pub normalization: Normalization,
}

impl SimilarityMode {
    pub const fn new(variant: SimilarityVariant, normalization: Normalization) -> Self {
        Self {
            variant,
            normalization,
        }
    }
}

impl fmt::Display for SimilarityVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimilarityVariant::Gestalt => "gestalt",
            SimilarityVariant::LcsRatio => "lcs",
        })
    }
}

impl FromStr for SimilarityVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gestalt" => Ok(SimilarityVariant::Gestalt),
            "lcs" | "lcs_ratio" => Ok(SimilarityVariant::LcsRatio),
            other => Err(format!("unknown similarity variant {other:?} (gestalt|lcs)")),
        }
    }
}

/// An unreduced similarity ratio `matched2 / total`, kept as integers so
/// scores can be compared exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    /// Twice the matched length.
    pub matched2: usize,
    /// Combined length of both normalised strings.
    pub total: usize,
}

impl Ratio {
    pub fn value(self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.matched2 as f64 / self.total as f64
        }
    }

    fn numer_denom(self) -> (u128, u128) {
        if self.total == 0 {
            (1, 1)
        } else {
            (self.matched2 as u128, self.total as u128)
        }
    }
}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ratio {
    /// Orders by value, not by representation.
    fn cmp(&self, other: &Self) -> Ordering {
        let (n1, d1) = self.numer_denom();
        let (n2, d2) = other.numer_denom();
        (n1 * d2).cmp(&(n2 * d1))
    }
}

/// Total matched length by recursive longest-run anchoring.
pub fn gestalt_matches<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut matched = 0;
    let mut pending = vec![(0, a.len(), 0, b.len())];
    // Scratch rows for the run-length table, sized for the widest b range.
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    while let Some((alo, ahi, blo, bhi)) = pending.pop() {
        let (i, j, k) = longest_run(a, b, alo, ahi, blo, bhi, &mut prev, &mut curr);
        if k == 0 {
            continue;
        }
        matched += k;
        if alo < i && blo < j {
            pending.push((alo, i, blo, j));
        }
        if i + k < ahi && j + k < bhi {
            pending.push((i + k, ahi, j + k, bhi));
        }
    }
    matched
}

/// Longest common contiguous run of `a[alo..ahi]` and `b[blo..bhi]`.
/// Returns `(start_a, start_b, len)`; among equally long runs the one
/// starting earliest in `a` wins, then earliest in `b`.
#[allow(clippy::too_many_arguments)]
fn longest_run<T: PartialEq>(
    a: &[T],
    b: &[T],
    alo: usize,
    ahi: usize,
    blo: usize,
    bhi: usize,
    prev: &mut Vec<usize>,
    curr: &mut Vec<usize>,
) -> (usize, usize, usize) {
    let width = bhi - blo;
    let (mut best_i, mut best_j, mut best_k) = (alo, blo, 0);
    prev[..=width].fill(0);
    for (i, ai) in (alo..ahi).zip(&a[alo..ahi]) {
        curr[0] = 0;
        for j in 0..width {
            curr[j + 1] = if *ai == b[blo + j] { prev[j] + 1 } else { 0 };
            let k = curr[j + 1];
            // Runs ending at a smaller `i` start earlier in `a` for the same
            // length, so strict `>` keeps the leftmost one.
            if k > best_k {
                best_k = k;
                best_i = i + 1 - k;
                best_j = blo + j + 1 - k;
            }
        }
        std::mem::swap(prev, curr);
    }
    (best_i, best_j, best_k)
}

/// Longest common subsequence length.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            curr[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Exact similarity ratio between two texts under `mode`.
pub fn similarity_ratio(a: &str, b: &str, mode: SimilarityMode) -> Ratio {
    let a: Vec<char> = mode.normalization.apply(a).chars().collect();
    let b: Vec<char> = mode.normalization.apply(b).chars().collect();
    ratio_of_chars(&a, &b, mode.variant)
}

pub(crate) fn ratio_of_chars(a: &[char], b: &[char], variant: SimilarityVariant) -> Ratio {
    let total = a.len() + b.len();
    if a.is_empty() || b.is_empty() {
        return Ratio { matched2: 0, total };
    }
    let m = match variant {
        SimilarityVariant::Gestalt => gestalt_matches(a, b),
        SimilarityVariant::LcsRatio => lcs_len(a, b),
    };
    Ratio {
        matched2: 2 * m,
        total,
    }
}

/// Similarity in `[0, 1]`. Both empty gives 1.0, exactly one empty gives 0.0.
pub fn similarity(a: &str, b: &str, mode: SimilarityMode) -> f64 {
    similarity_ratio(a, b, mode).value()
}

/// Label whose choice text is most similar to `response`, compared as
/// `similarity(response, choice_text)`. Ties go to the alphabetically first
/// label.
///
/// # Panics
/// If `q` has no choices.
pub fn closest_choice(response: &str, q: &Question, mode: SimilarityMode) -> ChoiceLabel {
    let response: Vec<char> = mode.normalization.apply(response).chars().collect();
    let mut best: Option<(ChoiceLabel, Ratio)> = None;
    for (label, text) in &q.choices {
        let text: Vec<char> = mode.normalization.apply(text).chars().collect();
        let r = ratio_of_chars(&response, &text, mode.variant);
        if best.is_none_or(|(_, b)| r > b) {
            best = Some((*label, r));
        }
    }
    best.expect("question has at least one choice").0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::q116a1;
    use proptest::prelude::*;

    const G: SimilarityMode = SimilarityMode::new(SimilarityVariant::Gestalt, Normalization::TrimOnly);
    const L: SimilarityMode = SimilarityMode::new(SimilarityVariant::LcsRatio, Normalization::TrimOnly);

    #[test]
    fn identity_and_disjoint() {
        assert_eq!(similarity("abc", "abc", G), 1.0);
        assert_eq!(similarity("abc", "xyz", G), 0.0);
        assert_eq!(similarity("abc", "abc", L), 1.0);
        assert_eq!(similarity("abc", "xyz", L), 0.0);
    }

    #[test]
    fn hand_derived_values() {
        assert_eq!(similarity_ratio("abcd", "bcde", G), Ratio { matched2: 6, total: 8 });
        assert_eq!(similarity("abcd", "bcde", G), 0.75);
        assert_eq!(
            similarity_ratio("こんにちは", "こんばんは", G),
            Ratio { matched2: 6, total: 10 }
        );
        assert_eq!(similarity("こんにちは", "こんばんは", G), 0.6);
    }

    #[test]
    fn empty_conventions() {
        assert_eq!(similarity("", "", G), 1.0);
        assert_eq!(similarity("  ", "\n", G), 1.0);
        assert_eq!(similarity("", "a", G), 0.0);
        assert_eq!(similarity("a", "", L), 0.0);
    }

    #[test]
    fn anchoring_differs_from_lcs() {
        // Once a run is anchored, only text on the same side of it in both
        // strings can match, which the subsequence does not require.
        assert_eq!(gestalt_matches(&['a', 'b', 'c', 'd'], &['c', 'd', 'a', 'b']), 2);
        assert_eq!(lcs_len(&['a', 'b', 'c', 'd'], &['c', 'd', 'a', 'b']), 2);
        let a: Vec<char> = "abxcd".chars().collect();
        let b: Vec<char> = "cdxab".chars().collect();
        assert_eq!(gestalt_matches(&a, &b), 2);
        assert_eq!(lcs_len(&a, &b), 2);
        let a: Vec<char> = "xaybzab".chars().collect();
        let b: Vec<char> = "abzxayb".chars().collect();
        assert!(gestalt_matches(&a, &b) < lcs_len(&a, &b));
    }

    #[test]
    fn gestalt_is_asymmetric_somewhere() {
        let words: Vec<Vec<char>> = (0..3usize.pow(5))
            .map(|mut n| {
                (0..5)
                    .map(|_| {
                        let c = (b'a' + (n % 3) as u8) as char;
                        n /= 3;
                        c
                    })
                    .collect()
            })
            .collect();
        let asymmetric = words.iter().any(|x| {
            words
                .iter()
                .any(|y| gestalt_matches(x, y) != gestalt_matches(y, x))
        });
        assert!(asymmetric);
    }

    #[test]
    fn nfkc_folds_full_width() {
        let nfkc = SimilarityMode::new(SimilarityVariant::Gestalt, Normalization::NfkcTrim);
        assert_eq!(similarity("ＡＢＣ", "ABC", nfkc), 1.0);
        assert_eq!(similarity("ＡＢＣ", "ABC", G), 0.0);
    }

    #[test]
    fn ratio_orders_by_value() {
        assert_eq!(Ratio { matched2: 2, total: 4 }.cmp(&Ratio { matched2: 3, total: 6 }), Ordering::Equal);
        assert!(Ratio { matched2: 0, total: 0 } > Ratio { matched2: 9, total: 10 });
    }

    #[test]
    fn closest_choice_examples() {
        let q = q116a1();
        let c = q.choice_text(ChoiceLabel::new('c').unwrap()).unwrap().to_owned();
        assert_eq!(closest_choice(&c, &q, G).as_char(), 'c');
        assert_eq!(closest_choice("", &q, G).as_char(), 'a');
        let b = q.choice_text(ChoiceLabel::new('b').unwrap()).unwrap();
        let mut chars: Vec<char> = b.chars().collect();
        chars.remove(7);
        let damaged: String = chars.into_iter().collect();
        assert_eq!(closest_choice(&damaged, &q, G).as_char(), 'b');
        for _ in 0..3 {
            assert_eq!(closest_choice(&damaged, &q, G).as_char(), 'b');
        }
    }

    proptest! {
        #[test]
        fn bounded_and_reflexive(a in "\\PC{0,12}", b in "\\PC{0,12}") {
            for mode in [G, L] {
                let s = similarity(&a, &b, mode);
                prop_assert!((0.0..=1.0).contains(&s));
                prop_assert_eq!(similarity(&a, &a, mode), 1.0);
            }
        }

        #[test]
        fn lcs_ratio_is_symmetric(a in "[abcあい ]{0,10}", b in "[abcあい ]{0,10}") {
            prop_assert_eq!(similarity_ratio(&a, &b, L), similarity_ratio(&b, &a, L));
        }

        #[test]
        fn gestalt_never_exceeds_lcs(a in "[abc]{0,9}", b in "[abc]{0,9}") {
            let a: Vec<char> = a.chars().collect();
            let b: Vec<char> = b.chars().collect();
            prop_assert!(gestalt_matches(&a, &b) <= lcs_len(&a, &b));
        }

        #[test]
        fn zero_iff_no_shared_symbol(a in "[a-e]{1,8}", b in "[d-h]{1,8}") {
            let shared = a.chars().any(|c| b.contains(c));
            prop_assert_eq!(similarity(&a, &b, G) == 0.0, !shared);
        }
    }
}
