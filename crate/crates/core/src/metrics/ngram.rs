use std::collections::HashMap;
use std::hash::Hash;

/// Counts of every n-gram of orders `1..=max_n` in one token sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramProfile<'a, T: Hash + Eq> {
    orders: Vec<HashMap<&'a [T], usize>>,
    len: usize,
}

impl<'a, T: Hash + Eq> NgramProfile<'a, T> {
    pub fn new(tokens: &'a [T], max_n: usize) -> Self {
        let orders = (1..=max_n)
            .map(|n| {
                let mut counts = HashMap::new();
                if n <= tokens.len() {
                    for w in tokens.windows(n) {
                        *counts.entry(w).or_insert(0) += 1;
                    }
                }
                counts
            })
            .collect();
        NgramProfile {
            orders,
            len: tokens.len(),
        }
    }

    /// Number of tokens profiled.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn max_n(&self) -> usize {
        self.orders.len()
    }

    /// Counts of order `n` (1-based).
    pub fn counts(&self, n: usize) -> &HashMap<&'a [T], usize> {
        &self.orders[n - 1]
    }

    /// Total n-grams of order `n`.
    pub fn total(&self, n: usize) -> usize {
        (self.len + 1).saturating_sub(n)
    }

    /// `sum_g min(self[g], other[g])` at order `n`.
    pub fn overlap(&self, other: &Self, n: usize) -> usize {
        self.counts(n)
            .iter()
            .map(|(g, &c)| c.min(other.counts(n).get(g).copied().unwrap_or(0)))
            .sum()
    }

    /// Matches against several references, each n-gram clipped at its
    /// largest count in any single reference.
    pub fn clipped_matches(&self, refs: &[Self], n: usize) -> usize {
        self.counts(n)
            .iter()
            .map(|(g, &c)| {
                let max_ref = refs
                    .iter()
                    .map(|r| r.counts(n).get(g).copied().unwrap_or(0))
                    .max()
                    .unwrap_or(0);
                c.min(max_ref)
            })
            .sum()
    }
}
