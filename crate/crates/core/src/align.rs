//! Minimum-edit-distance alignment between two token sequences, and projection of
//! boundaries from one sequence onto the other.
//!
//! Both directions of the unit-cost Levenshtein recurrence are tabulated: `prefix[i][j]`
//! is the distance between `target[..i]` and `source[..j]`, `suffix[i][j]` the distance
//! between `target[i..]` and `source[j..]`. A source boundary `j` may be cut against any
//! target boundary `i` with `prefix[i][j] + suffix[i][j] == distance`; projection picks
//! the largest such `i`, so a boundary lands at or after every optimal alignment point.

use std::collections::HashMap;

/// Comparison key for a token: lowercase alphanumerics, or the lowercased token when it
/// has none. "Mars." and "mars" compare equal; "," and ";" do not.
pub fn token_key(token: &str) -> String {
    let key: String = token.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect();
    if key.is_empty() {
        token.to_lowercase()
    } else {
        key
    }
}

#[derive(Debug, Clone)]
pub struct TokenAlignment {
    rows: usize,
    cols: usize,
    prefix: Vec<u32>,
    suffix: Vec<u32>,
}

fn intern(tokens: &[&str], table: &mut HashMap<String, u32>) -> Vec<u32> {
    tokens
        .iter()
        .map(|t| {
            let next = table.len() as u32;
            *table.entry(token_key(t)).or_insert(next)
        })
        .collect()
}

/// Aligns `source` (e.g. a model's reproduction) against `target` (the reference tokens).
pub fn align_tokens(target: &[&str], source: &[&str]) -> TokenAlignment {
    let mut table = HashMap::new();
    let a = intern(target, &mut table);
    let b = intern(source, &mut table);
    let (n, m) = (a.len(), b.len());
    let cols = m + 1;
    let idx = |i: usize, j: usize| i * cols + j;

    let mut prefix = vec![0u32; (n + 1) * cols];
    for j in 0..=m {
        prefix[idx(0, j)] = j as u32;
    }
    for i in 1..=n {
        prefix[idx(i, 0)] = i as u32;
        for j in 1..=m {
            let sub = prefix[idx(i - 1, j - 1)] + u32::from(a[i - 1] != b[j - 1]);
            let del = prefix[idx(i - 1, j)] + 1;
            let ins = prefix[idx(i, j - 1)] + 1;
            prefix[idx(i, j)] = sub.min(del).min(ins);
        }
    }

    let mut suffix = vec![0u32; (n + 1) * cols];
    for j in 0..=m {
        suffix[idx(n, j)] = (m - j) as u32;
    }
    for i in (0..n).rev() {
        suffix[idx(i, m)] = (n - i) as u32;
        for j in (0..m).rev() {
            let sub = suffix[idx(i + 1, j + 1)] + u32::from(a[i] != b[j]);
            let del = suffix[idx(i + 1, j)] + 1;
            let ins = suffix[idx(i, j + 1)] + 1;
            suffix[idx(i, j)] = sub.min(del).min(ins);
        }
    }

    TokenAlignment { rows: n + 1, cols, prefix, suffix }
}

impl TokenAlignment {
    pub fn target_len(&self) -> usize {
        self.rows - 1
    }

    pub fn source_len(&self) -> usize {
        self.cols - 1
    }

    /// Number of insertions, deletions and substitutions in an optimal alignment.
    pub fn edit_distance(&self) -> usize {
        self.prefix[self.rows * self.cols - 1] as usize
    }

    /// Maps source boundary `j` (0..=source_len) to the largest target boundary lying on
    /// some optimal alignment path through `j`.
    pub fn project(&self, j: usize) -> usize {
        assert!(j < self.cols, "source boundary {j} out of range");
        let best = self.edit_distance() as u32;
        (0..self.rows)
            .rev()
            .find(|&i| self.prefix[i * self.cols + j] + self.suffix[i * self.cols + j] == best)
            .expect("every source boundary lies on an optimal path")
    }
}
