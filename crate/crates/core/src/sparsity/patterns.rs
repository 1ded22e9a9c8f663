use alloc::string::String;
use alloc::vec::Vec;

use super::GROUP;

/// Number of 4x4 binary blocks with every row and column sum equal to 2.
pub const PATTERN_COUNT: usize = 90;

/// A 4x4 binary block packed into 16 bits. Element `(0, 0)` is the most
/// significant bit, so numeric order equals lexicographic order of the
/// row-major flattened bit string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pattern(u16);

impl Pattern {
    #[inline]
    pub const fn from_bits(bits: u16) -> Self {
        Pattern(bits)
    }

    #[inline]
    pub const fn bits(self) -> u16 {
        self.0
    }

    #[inline]
    pub const fn bit_mask(r: usize, c: usize) -> u16 {
        1 << (15 - (r * GROUP + c))
    }

    #[inline]
    pub fn bit(self, r: usize, c: usize) -> bool {
        self.0 & Self::bit_mask(r, c) != 0
    }

    pub fn row_sum(self, r: usize) -> u32 {
        (0..GROUP).filter(|&c| self.bit(r, c)).count() as u32
    }

    pub fn col_sum(self, c: usize) -> u32 {
        (0..GROUP).filter(|&r| self.bit(r, c)).count() as u32
    }

    pub fn is_transposable(self) -> bool {
        (0..GROUP).all(|k| self.row_sum(k) == 2 && self.col_sum(k) == 2)
    }

    pub fn transpose(self) -> Self {
        let mut out = 0u16;
        for r in 0..GROUP {
            for c in 0..GROUP {
                if self.bit(r, c) {
                    out |= Self::bit_mask(c, r);
                }
            }
        }
        Pattern(out)
    }

    /// Kept positions as row-major offsets `r * 4 + c`, ascending.
    pub fn positions(self) -> Vec<usize> {
        (0..16).filter(|&k| self.bit(k / GROUP, k % GROUP)).collect()
    }

    /// Row-major `0`/`1` string, 16 characters.
    pub fn to_bit_string(self) -> String {
        (0..16)
            .map(|k| if self.bit(k / GROUP, k % GROUP) { '1' } else { '0' })
            .collect()
    }

    pub fn parse_bit_string(s: &str) -> Option<Self> {
        if s.len() != 16 {
            return None;
        }
        let mut bits = 0u16;
        for (k, ch) in s.chars().enumerate() {
            match ch {
                '1' => bits |= 1 << (15 - k),
                '0' => {}
                _ => return None,
            }
        }
        Some(Pattern(bits))
    }
}

/// The canonical ordered set of transposable 4x4 patterns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternTable {
    patterns: Vec<Pattern>,
    /// Kept offsets per pattern, flattened 8 per pattern.
    positions: Vec<u8>,
    /// For the canonical table: per pattern, the index of its first two
    /// rows among the 36 row-pair prefixes and the column pairs of rows 2
    /// and 3.
    walk: Option<Vec<[u8; 5]>>,
}

/// Column pairs of one pattern row in ascending order of the row's bits.
pub(crate) const ROW_PAIRS: [(usize, usize); 6] = [(2, 3), (1, 3), (1, 2), (0, 3), (0, 2), (0, 1)];

fn row_pair_index(p: Pattern, r: usize) -> usize {
    ROW_PAIRS
        .iter()
        .position(|&(a, b)| p.bit(r, a) && p.bit(r, b))
        .expect("every row of a transposable pattern has two ones")
}

impl PatternTable {
    pub fn new(patterns: Vec<Pattern>) -> Self {
        let positions = patterns
            .iter()
            .flat_map(|p| p.positions().into_iter().map(|k| k as u8))
            .collect();
        let canonical = patterns.len() == PATTERN_COUNT
            && patterns.windows(2).all(|w| w[0] < w[1])
            && patterns.iter().all(|p| p.is_transposable());
        let walk = canonical.then(|| {
            patterns
                .iter()
                .map(|&p| {
                    let node = row_pair_index(p, 0) * 6 + row_pair_index(p, 1);
                    let (a2, b2) = ROW_PAIRS[row_pair_index(p, 2)];
                    let (a3, b3) = ROW_PAIRS[row_pair_index(p, 3)];
                    [node as u8, a2 as u8, b2 as u8, a3 as u8, b3 as u8]
                })
                .collect()
        });
        Self {
            patterns,
            positions,
            walk,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    #[inline]
    pub fn get(&self, index: usize) -> Pattern {
        self.patterns[index]
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }

    pub fn index_of(&self, p: Pattern) -> Option<usize> {
        self.patterns.binary_search(&p).ok()
    }

    pub fn contains(&self, p: Pattern) -> bool {
        self.index_of(p).is_some()
    }

    #[inline]
    pub(crate) fn walk(&self) -> Option<&[[u8; 5]]> {
        self.walk.as_deref()
    }

    #[inline]
    pub(crate) fn positions_of(&self, index: usize) -> &[u8] {
        &self.positions[index * 8..index * 8 + 8]
    }
}

/// Exhaustively enumerates all 4x4 binary blocks with row and column sums
/// of 2, in ascending lexicographic order of their flattened bits.
pub fn enumerate_patterns() -> PatternTable {
    let patterns = (0..=u16::MAX)
        .filter(|&b| b.count_ones() == 8)
        .map(Pattern)
        .filter(|p| p.is_transposable())
        .collect();
    PatternTable::new(patterns)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ninety_patterns() {
        let t = enumerate_patterns();
        assert_eq!(t.len(), PATTERN_COUNT);
        assert!(t.patterns().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn block_diagonal_pattern_is_member() {
        let p = Pattern::parse_bit_string("1100110000110011").unwrap();
        assert!(enumerate_patterns().contains(p));
    }

    #[test]
    fn closed_under_transpose() {
        let t = enumerate_patterns();
        for &p in t.patterns() {
            assert!(t.contains(p.transpose()));
            assert_eq!(p.transpose().transpose(), p);
        }
    }

    #[test]
    fn first_and_last_in_lexicographic_order() {
        let t = enumerate_patterns();
        assert_eq!(t.get(0).to_bit_string(), "0011001111001100");
        assert_eq!(t.get(89).to_bit_string(), "1100110000110011");
    }

    #[test]
    fn bit_string_roundtrip() {
        for &p in enumerate_patterns().patterns() {
            assert_eq!(Pattern::parse_bit_string(&p.to_bit_string()), Some(p));
        }
        assert_eq!(Pattern::parse_bit_string("0101"), None);
        assert_eq!(Pattern::parse_bit_string("010101010101010x"), None);
    }
}
