//! Deterministic summation helpers.
//!
//! Pairwise reductions over particles use a *folded* order: term `j` is first
//! added to its mirror term `n - 1 - j`, and the folded values are combined by
//! a streaming pairwise (binary-tree) accumulator. Reversing the input order
//! produces the identical sequence of floating-point operations, so ensembles
//! that are mirror-symmetric under index reversal give exactly mirrored
//! results.

use std::ops::Add;

/// Streaming pairwise summation: values are combined as the leaves of a
/// balanced binary tree, giving `O(log n)` error growth with `O(log n)` state.
#[derive(Debug, Clone)]
pub struct PairwiseSum<T> {
    levels: [T; 64],
    count: u64,
}

impl<T: Copy + Add<Output = T> + Default> Default for PairwiseSum<T> {
    fn default() -> Self {
        PairwiseSum {
            levels: [T::default(); 64],
            count: 0,
        }
    }
}

impl<T: Copy + Add<Output = T> + Default> PairwiseSum<T> {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, value: T) {
        let mut carry = value;
        let mut level = 0;
        let mut c = self.count;
        while c & 1 == 1 {
            carry = self.levels[level] + carry;
            c >>= 1;
            level += 1;
        }
        self.levels[level] = carry;
        self.count += 1;
    }

    pub fn total(&self) -> T {
        let mut acc: Option<T> = None;
        let mut c = self.count;
        let mut level = 0;
        while c != 0 {
            if c & 1 == 1 {
                acc = Some(match acc {
                    None => self.levels[level],
                    Some(a) => self.levels[level] + a,
                });
            }
            c >>= 1;
            level += 1;
        }
        acc.unwrap_or_default()
    }
}

/// Sum `term(j)` for `j in 0..n` in folded pairwise order.
#[inline]
pub fn folded_sum<T, F>(n: usize, mut term: F) -> T
where
    T: Copy + Add<Output = T> + Default,
    F: FnMut(usize) -> T,
{
    let mut acc = PairwiseSum::new();
    let half = n / 2;
    for k in 0..half {
        let a = term(k);
        let b = term(n - 1 - k);
        acc.push(a + b);
    }
    let total = acc.total();
    if n % 2 == 1 {
        total + term(half)
    } else {
        total
    }
}
