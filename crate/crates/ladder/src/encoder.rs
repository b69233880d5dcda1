//! Text rendering of auction requests and the one-hot input encoding.
//!
//! Every auction is flattened into a shorthand, pipe-delimited description:
//!
//! ```text
//! pub:<label>|ad:<sku_id>|price:<int>|jdln:<0|1>|cpc:<d.dd>|bought:<id>@<days>[,<id>@<days>...]|browsed:<id>@<days>[,...]
//! ```
//!
//! Clauses for empty fields are omitted. History entries are listed
//! most-recent-first. The description is truncated to 600 characters from
//! the front, so the publisher/ad fields always survive. The encoded form
//! is a 600x71 binary matrix: row `i` one-hot encodes character `i` over a
//! fixed 71-character alphabet (lowercase letters, digits, space, newline,
//! tab, and 32 punctuation marks, in that order). Uppercase input is
//! lowered before lookup; characters outside the alphabet leave their row
//! all zero, as do rows past the end of the text.

use crate::money::Money;
use serde::{Deserialize, Serialize};

/// Maximum description length; also the input height of the network.
pub const MAX_TEXT_LEN: usize = 600;
/// Number of characters in the alphabet; also the input width.
pub const ALPHABET_SIZE: usize = 71;

const SYMBOLS: &str = "-,;.!?:'\"/\\|_@#$%^&*~`+=<>()[]{}";

/// The fixed 71-character alphabet with its character -> index map.
pub struct Alphabet {
    chars: [char; ALPHABET_SIZE],
    index: [i8; 128],
}

impl Alphabet {
    fn build() -> Alphabet {
        let mut chars = ['\0'; ALPHABET_SIZE];
        let mut n = 0;
        for c in 'a'..='z' {
            chars[n] = c;
            n += 1;
        }
        for c in '0'..='9' {
            chars[n] = c;
            n += 1;
        }
        for c in [' ', '\n', '\t'] {
            chars[n] = c;
            n += 1;
        }
        for c in SYMBOLS.chars() {
            chars[n] = c;
            n += 1;
        }
        assert_eq!(n, ALPHABET_SIZE);

        let mut index = [-1i8; 128];
        for (i, &c) in chars.iter().enumerate() {
            index[c as usize] = i as i8;
        }
        Alphabet { chars, index }
    }

    /// Shared instance; the alphabet is a program constant.
    pub fn get() -> &'static Alphabet {
        use std::sync::OnceLock;
        static INSTANCE: OnceLock<Alphabet> = OnceLock::new();
        INSTANCE.get_or_init(Alphabet::build)
    }

    pub fn chars(&self) -> &[char; ALPHABET_SIZE] {
        &self.chars
    }

    /// Alphabet index of `c`, lowering uppercase ASCII first.
    pub fn index_of(&self, c: char) -> Option<u8> {
        let c = if c.is_ascii_uppercase() {
            c.to_ascii_lowercase()
        } else {
            c
        };
        if (c as usize) < 128 {
            let i = self.index[c as usize];
            (i >= 0).then_some(i as u8)
        } else {
            None
        }
    }
}

/// A rendered description, at most [`MAX_TEXT_LEN`] characters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextDescription(String);

impl TextDescription {
    pub fn text(&self) -> &str {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.chars().count()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The plain fields a description is rendered from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestSummary {
    pub publisher_label: String,
    pub sku_id: u64,
    pub price_cny: u64,
    pub jdln: bool,
    /// Advertiser CPC bid; on the fen grid.
    pub bid_click: Money,
    /// (sku_id, days_ago), unordered.
    pub bought: Vec<(u64, u32)>,
    /// (sku_id, days_ago), unordered.
    pub browsed: Vec<(u64, u32)>,
}

fn push_history(out: &mut String, key: &str, entries: &[(u64, u32)]) {
    if entries.is_empty() {
        return;
    }
    let mut ordered: Vec<(u64, u32)> = entries.to_vec();
    ordered.sort_by_key(|&(_, days)| days);
    out.push('|');
    out.push_str(key);
    out.push(':');
    for (i, (id, days)) in ordered.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format!("{id}@{days}"));
    }
}

/// Render the shorthand description for a request. Deterministic; the
/// output is lowercased and truncated to [`MAX_TEXT_LEN`] characters.
pub fn describe(summary: &RequestSummary) -> TextDescription {
    let mut s = String::with_capacity(160);
    s.push_str("pub:");
    s.push_str(&summary.publisher_label.to_lowercase());
    s.push_str(&format!("|ad:{}", summary.sku_id));
    s.push_str(&format!("|price:{}", summary.price_cny));
    s.push_str(&format!("|jdln:{}", if summary.jdln { 1 } else { 0 }));
    s.push_str(&format!("|cpc:{}", summary.bid_click.format_fen2()));
    push_history(&mut s, "bought", &summary.bought);
    push_history(&mut s, "browsed", &summary.browsed);
    if s.chars().count() > MAX_TEXT_LEN {
        s = s.chars().take(MAX_TEXT_LEN).collect();
    }
    TextDescription(s)
}

/// One-hot encoding of a description: at most one 1 per row.
///
/// Stored sparsely as `(row, alphabet_index)` pairs in row order; the
/// dense 600x71 matrix is materialized on demand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedState {
    positions: Vec<(u16, u8)>,
}

impl EncodedState {
    /// Encode up to the first [`MAX_TEXT_LEN`] characters of `text`.
    /// Out-of-alphabet characters are skipped (their row stays zero).
    pub fn one_hot(text: &str) -> EncodedState {
        let alphabet = Alphabet::get();
        let mut positions = Vec::with_capacity(text.len().min(MAX_TEXT_LEN));
        for (row, c) in text.chars().take(MAX_TEXT_LEN).enumerate() {
            if let Some(idx) = alphabet.index_of(c) {
                positions.push((row as u16, idx));
            }
        }
        EncodedState { positions }
    }

    /// Rebuild from a sparse list. Rows must be strictly increasing and
    /// in bounds; returns `None` otherwise.
    pub fn from_sparse(positions: Vec<(u16, u8)>) -> Option<EncodedState> {
        let mut last: Option<u16> = None;
        for &(row, idx) in &positions {
            if row as usize >= MAX_TEXT_LEN || idx as usize >= ALPHABET_SIZE {
                return None;
            }
            if let Some(prev) = last {
                if row <= prev {
                    return None;
                }
            }
            last = Some(row);
        }
        Some(EncodedState { positions })
    }

    /// The sparse view: `(row, alphabet_index)` pairs in row order.
    pub fn sparse_view(&self) -> &[(u16, u8)] {
        &self.positions
    }

    pub fn into_positions(self) -> Vec<(u16, u8)> {
        self.positions
    }

    /// Materialize the dense 600x71 row-major matrix.
    pub fn dense(&self) -> Vec<f64> {
        let mut m = vec![0.0; MAX_TEXT_LEN * ALPHABET_SIZE];
        for &(row, idx) in &self.positions {
            m[row as usize * ALPHABET_SIZE + idx as usize] = 1.0;
        }
        m
    }

    /// Number of encoded (in-alphabet) characters.
    pub fn count_ones(&self) -> usize {
        self.positions.len()
    }
}

/// Extract the sparse view from a dense binary 600x71 matrix.
pub fn sparse_from_dense(dense: &[f64]) -> Vec<(u16, u8)> {
    assert_eq!(dense.len(), MAX_TEXT_LEN * ALPHABET_SIZE);
    let mut out = Vec::new();
    for row in 0..MAX_TEXT_LEN {
        for col in 0..ALPHABET_SIZE {
            if dense[row * ALPHABET_SIZE + col] != 0.0 {
                out.push((row as u16, col as u8));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_summary() -> RequestSummary {
        RequestSummary {
            publisher_label: "p1".to_string(),
            sku_id: 3133857,
            price_cny: 6499,
            jdln: true,
            bid_click: Money::from_fen(1000),
            bought: vec![(3133817, 2)],
            browsed: vec![],
        }
    }

    #[test]
    fn alphabet_is_71_distinct_chars() {
        let a = Alphabet::get();
        assert_eq!(a.chars().len(), 71);
        let mut seen = std::collections::HashSet::new();
        for (i, &c) in a.chars().iter().enumerate() {
            assert!(seen.insert(c), "duplicate char {c:?}");
            assert_eq!(a.index_of(c), Some(i as u8));
        }
    }

    #[test]
    fn uppercase_lowers_to_same_index() {
        let a = Alphabet::get();
        assert_eq!(a.index_of('Q'), a.index_of('q'));
        assert_eq!(a.index_of('a'), Some(0));
        assert_eq!(a.index_of('0'), Some(26));
        assert_eq!(a.index_of(' '), Some(36));
    }

    #[test]
    fn describe_matches_grammar() {
        let d = describe(&sample_summary());
        assert_eq!(
            d.text(),
            "pub:p1|ad:3133857|price:6499|jdln:1|cpc:10.00|bought:3133817@2"
        );
    }

    #[test]
    fn empty_history_omits_clauses() {
        let mut s = sample_summary();
        s.bought.clear();
        let d = describe(&s);
        assert!(!d.text().contains("bought"));
        assert!(!d.text().contains("browsed"));
    }

    #[test]
    fn history_is_most_recent_first() {
        let mut s = sample_summary();
        s.bought = vec![(111, 9), (222, 1), (333, 4)];
        let d = describe(&s);
        assert!(d.text().ends_with("|bought:222@1,333@4,111@9"));
    }

    #[test]
    fn description_never_exceeds_max_len() {
        let mut s = sample_summary();
        s.bought = (0..200).map(|i| (1_000_000 + i, i as u32)).collect();
        let d = describe(&s);
        assert!(d.len() <= MAX_TEXT_LEN);
        assert!(d.text().starts_with("pub:p1|ad:3133857"));
    }

    #[test]
    fn one_hot_empty_is_all_zero() {
        let e = EncodedState::one_hot("");
        assert_eq!(e.count_ones(), 0);
        assert!(e.dense().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_hot_single_char() {
        let e = EncodedState::one_hot("a");
        assert_eq!(e.sparse_view(), &[(0, 0)]);
        let d = e.dense();
        assert_eq!(d.iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(d[0], 1.0);
    }

    #[test]
    fn matrix_sum_counts_in_alphabet_chars() {
        // 'ü' is out of alphabet: its row stays zero.
        let e = EncodedState::one_hot("ab\u{fc}cd");
        assert_eq!(e.count_ones(), 4);
        let rows: Vec<u16> = e.sparse_view().iter().map(|&(r, _)| r).collect();
        assert_eq!(rows, vec![0, 1, 3, 4]);
    }

    #[test]
    fn sparse_two_chars() {
        let a = Alphabet::get();
        let e = EncodedState::one_hot("ab");
        assert_eq!(
            e.sparse_view(),
            &[(0, a.index_of('a').unwrap()), (1, a.index_of('b').unwrap())]
        );
    }

    #[test]
    fn from_sparse_rejects_duplicates_and_out_of_range() {
        assert!(EncodedState::from_sparse(vec![(0, 0), (0, 1)]).is_none());
        assert!(EncodedState::from_sparse(vec![(600, 0)]).is_none());
        assert!(EncodedState::from_sparse(vec![(0, 71)]).is_none());
        assert!(EncodedState::from_sparse(vec![(0, 0), (5, 70)]).is_some());
    }

    #[test]
    fn template_emissions_are_in_alphabet() {
        // Fuzz 1e5 random requests; every emitted character must encode.
        let a = Alphabet::get();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100_000 {
            let n_b = rng.gen_range(0..4);
            let n_v = rng.gen_range(0..4);
            let s = RequestSummary {
                publisher_label: format!("pub{}", rng.gen_range(0..100)),
                sku_id: rng.gen_range(0..10_000_000),
                price_cny: rng.gen_range(1..100_000),
                jdln: rng.gen_bool(0.5),
                bid_click: Money::from_fen(rng.gen_range(1..5000)),
                bought: (0..n_b)
                    .map(|_| (rng.gen_range(0..10_000_000), rng.gen_range(0..365)))
                    .collect(),
                browsed: (0..n_v)
                    .map(|_| (rng.gen_range(0..10_000_000), rng.gen_range(0..365)))
                    .collect(),
            };
            let d = describe(&s);
            for c in d.text().chars() {
                assert!(a.index_of(c).is_some(), "out-of-alphabet char {c:?}");
            }
        }
    }

    #[test]
    fn describe_and_one_hot_are_deterministic() {
        let s = sample_summary();
        assert_eq!(describe(&s), describe(&s));
        let d = describe(&s);
        assert_eq!(EncodedState::one_hot(d.text()), EncodedState::one_hot(d.text()));
    }

    proptest! {
        #[test]
        fn sparse_dense_round_trip(text in "[a-z0-9 :|@,.]{0,700}") {
            let e = EncodedState::one_hot(&text);
            let dense = e.dense();
            let back = sparse_from_dense(&dense);
            prop_assert_eq!(back.as_slice(), e.sparse_view());
        }

        #[test]
        fn differing_sku_yields_differing_text(a in 0u64..1_000_000, b in 0u64..1_000_000) {
            prop_assume!(a != b);
            let mut sa = sample_summary();
            sa.sku_id = a;
            let mut sb = sample_summary();
            sb.sku_id = b;
            prop_assert_ne!(describe(&sa), describe(&sb));
        }
    }
}
