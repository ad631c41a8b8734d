//! Helpers for `u64` bitsets over at most 64 problem-local variables.

use std::cmp::Ordering;

pub const MAX_VARS: usize = 64;

#[inline]
pub fn bit(i: usize) -> u64 {
    1u64 << i
}

#[inline]
pub fn contains(set: u64, i: usize) -> bool {
    set & bit(i) != 0
}

#[inline]
pub fn is_subset(a: u64, b: u64) -> bool {
    a & !b == 0
}

pub fn full(d: usize) -> u64 {
    if d >= 64 {
        u64::MAX
    } else {
        bit(d) - 1
    }
}

pub fn from_indices<I: IntoIterator<Item = usize>>(it: I) -> u64 {
    it.into_iter().fold(0, |acc, i| acc | bit(i))
}

/// Iterates the members of `set` in ascending order.
pub fn iter(set: u64) -> impl Iterator<Item = usize> {
    let mut rest = set;
    std::iter::from_fn(move || {
        if rest == 0 {
            None
        } else {
            let i = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            Some(i)
        }
    })
}

pub fn to_vec(set: u64) -> Vec<usize> {
    iter(set).collect()
}

/// Lexicographic order on the ascending member lists.
pub fn lex_cmp(a: u64, b: u64) -> Ordering {
    iter(a).cmp(iter(b))
}
