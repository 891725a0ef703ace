//! Blockwise sign-pattern generators for predefined output representations.

use crate::error::{Error, Result};

use super::types::PorSpec;

/// Split width `k` into `blocks` contiguous blocks. When `k` is not an exact
/// multiple the first `k % blocks` blocks are one element wider, so any
/// block count up to `k` is usable.
pub fn block_widths(k: usize, blocks: usize) -> Result<Vec<usize>> {
    if blocks == 0 {
        return Err(Error::config("block count must be >= 1"));
    }
    if blocks > k {
        return Err(Error::config(format!("{blocks} blocks do not fit in {k} dimensions")));
    }
    let base = k / blocks;
    let extra = k % blocks;
    Ok((0..blocks).map(|i| base + usize::from(i < extra)).collect())
}

fn from_block_signs(signs: &[f64], widths: &[usize]) -> PorSpec {
    let mut values = Vec::with_capacity(widths.iter().sum());
    for (&s, &w) in signs.iter().zip(widths) {
        values.extend(std::iter::repeat(s).take(w));
    }
    PorSpec { values }
}

/// Gradual transition family: `n + 1` vectors over `n` blocks. Vector `j`
/// (1-indexed) sets block `i` to -1 for `i >= j` and +1 for `i < j`, so the
/// list walks from the all -1 vector to the all +1 vector one block at a
/// time.
pub fn gen_por1(n: usize, k: usize) -> Result<Vec<PorSpec>> {
    let widths = block_widths(k, n)?;
    let mut out = Vec::with_capacity(n + 1);
    for j in 1..=(n + 1) {
        let signs: Vec<f64> =
            (1..=n).map(|i| if i >= j { -1.0 } else { 1.0 }).collect();
        out.push(from_block_signs(&signs, &widths));
    }
    Ok(out)
}

/// Hypercube-vertex family: all `2^m` blockwise sign assignments over `m`
/// blocks, enumerated in binary order with -1 before +1. The list is closed
/// under negation (vertex `b` pairs with `2^m - 1 - b`).
pub fn gen_por2(m: usize, k: usize) -> Result<Vec<PorSpec>> {
    let widths = block_widths(k, m)?;
    if m >= usize::BITS as usize {
        return Err(Error::config(format!("{m} blocks overflow the enumeration")));
    }
    let count = 1usize << m;
    let mut out = Vec::with_capacity(count);
    for b in 0..count {
        let signs: Vec<f64> = (0..m)
            .map(|i| if (b >> (m - 1 - i)) & 1 == 1 { 1.0 } else { -1.0 })
            .collect();
        out.push(from_block_signs(&signs, &widths));
    }
    Ok(out)
}
