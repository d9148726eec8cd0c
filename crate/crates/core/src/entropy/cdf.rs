//! Integer cumulative frequency tables with an escape symbol.

use crate::error::{Error, Result};

/// Probability precision of every table, in bits.
pub const PRECISION: u32 = 16;
/// Total frequency of every table.
pub const TOTAL: u32 = 1 << PRECISION;

/// Frequencies for the contiguous values `offset ..= offset + n - 1` followed
/// by one escape symbol for anything outside that range.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CdfTable {
    offset: i32,
    /// Cumulative frequencies, `n + 2` entries from 0 to [`TOTAL`].
    cdf: Vec<u32>,
}

impl CdfTable {
    /// Quantizes `probs` (for values starting at `offset`) to integer
    /// frequencies. The escape gets the leftover mass. Every symbol keeps
    /// frequency at least 1 and the total is exactly [`TOTAL`].
    pub fn from_probabilities(offset: i32, probs: &[f64]) -> Self {
        let escape = (1.0 - probs.iter().sum::<f64>()).max(0.0);
        let all: Vec<f64> = probs.iter().copied().chain(std::iter::once(escape)).collect();
        let freqs = quantize(&all);
        let mut cdf = Vec::with_capacity(freqs.len() + 1);
        cdf.push(0);
        for f in freqs {
            cdf.push(cdf.last().unwrap() + f);
        }
        Self { offset, cdf }
    }

    /// Smallest value coded without escape.
    pub fn offset(&self) -> i32 {
        self.offset
    }

    /// Number of in-alphabet values (excluding the escape).
    pub fn alphabet_len(&self) -> usize {
        self.cdf.len() - 2
    }

    pub fn escape_symbol(&self) -> usize {
        self.cdf.len() - 2
    }

    /// Symbol index for a value, or `None` if it must be escaped.
    pub fn symbol_of(&self, value: i32) -> Option<usize> {
        let idx = value as i64 - self.offset as i64;
        (0..self.alphabet_len() as i64).contains(&idx).then_some(idx as usize)
    }

    pub fn value_of(&self, symbol: usize) -> i32 {
        self.offset + symbol as i32
    }

    /// `(start, frequency)` of a symbol.
    pub fn range(&self, symbol: usize) -> (u32, u32) {
        (self.cdf[symbol], self.cdf[symbol + 1] - self.cdf[symbol])
    }

    /// Symbol whose interval contains `target < TOTAL`.
    pub fn find(&self, target: u32) -> usize {
        self.cdf.partition_point(|&c| c <= target) - 1
    }

    pub fn cumulative(&self) -> &[u32] {
        &self.cdf
    }

    /// Checks monotonicity, positive frequencies and the exact total.
    pub fn validate(&self) -> Result<()> {
        if self.cdf.len() < 2 || self.cdf[0] != 0 || *self.cdf.last().unwrap() != TOTAL {
            return Err(Error::format("CDF table must run from 0 to 2^16"));
        }
        if self.cdf.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::format("CDF table has a zero-frequency symbol"));
        }
        Ok(())
    }
}

/// Rounds probabilities to frequencies summing to [`TOTAL`], each at least 1.
fn quantize(probs: &[f64]) -> Vec<u32> {
    let n = probs.len() as u32;
    assert!((1..=TOTAL).contains(&n), "alphabet of {n} symbols does not fit the precision");
    let total: f64 = probs.iter().sum();
    let mut freqs: Vec<u32> = probs
        .iter()
        .map(|&p| ((p / total * TOTAL as f64).round() as u32).max(1))
        .collect();
    let mut sum: i64 = freqs.iter().map(|&f| f as i64).sum();
    // Settle the rounding error on the largest entries, never dropping below 1.
    while sum != TOTAL as i64 {
        let big = (0..freqs.len()).max_by_key(|&i| (freqs[i], std::cmp::Reverse(i))).unwrap();
        if sum > TOTAL as i64 {
            let take = (sum - TOTAL as i64).min(freqs[big] as i64 - 1);
            freqs[big] -= take as u32;
            sum -= take;
        } else {
            freqs[big] += (TOTAL as i64 - sum) as u32;
            sum = TOTAL as i64;
        }
    }
    freqs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_probabilities_keep_a_slot() {
        let t = CdfTable::from_probabilities(-2, &[1e-12, 0.25, 0.5, 0.25, 1e-12]);
        t.validate().unwrap();
        assert_eq!(t.alphabet_len(), 5);
        assert_eq!(t.range(0).1, 1);
        assert_eq!(t.symbol_of(-3), None);
        assert_eq!(t.symbol_of(2), Some(4));
        assert_eq!(t.value_of(1), -1);
    }

    #[test]
    fn find_inverts_range() {
        let t = CdfTable::from_probabilities(0, &[0.1, 0.2, 0.3, 0.4]);
        for s in 0..5 {
            let (start, f) = t.range(s);
            assert_eq!(t.find(start), s);
            assert_eq!(t.find(start + f - 1), s);
        }
    }
}
