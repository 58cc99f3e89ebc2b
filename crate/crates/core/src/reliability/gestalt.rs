//! Ratcliff/Obershelp gestalt pattern matching.
//!
//! Find the longest common contiguous block, count it, then recurse into the
//! unmatched regions on its left and right. Among equally long blocks the one
//! starting earliest in the first operand wins, then earliest in the second.
//! No junk heuristics are applied.

use smallvec::SmallVec;

type Row = SmallVec<[u32; 72]>;

/// Similarity `2*M / (|a| + |b|)` over characters, with `M` the number of
/// matched characters. Two empty strings score 1.
///
/// Operands are ordered lexicographically before matching, so the score is
/// symmetric even where tie-breaking would otherwise depend on argument order.
pub fn seq_ratio(a: &str, b: &str) -> f64 {
    let (first, second) = if a <= b { (a, b) } else { (b, a) };
    if first.is_ascii() && second.is_ascii() {
        let (x, y) = (first.as_bytes(), second.as_bytes());
        let longest = x.len().max(y.len());
        let matched = if longest <= 32 {
            matching_ascii::<32>(x, y)
        } else if longest <= 64 {
            matching_ascii::<64>(x, y)
        } else {
            matching_characters(x, y)
        };
        return ratio_from_matches(matched, x.len(), y.len());
    }
    let x: SmallVec<[char; 64]> = first.chars().collect();
    let y: SmallVec<[char; 64]> = second.chars().collect();
    ratio_from_matches(matching_characters(&x, &y), x.len(), y.len())
}

pub(crate) fn ratio_from_matches(matched: usize, len_a: usize, len_b: usize) -> f64 {
    let total = len_a + len_b;
    if total == 0 {
        1.0
    } else {
        2.0 * matched as f64 / total as f64
    }
}

/// Total length of all blocks found by gestalt matching `a` against `b`.
pub fn matching_characters<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        0
    } else if b.len() <= 64 {
        let eq = match_masks(a, b);
        let (mut cur, mut next) = (eq.clone(), eq.clone());
        sum_blocks(a.len(), b.len(), |ra, rb| longest_block_bits(&eq, ra, rb, &mut cur, &mut next))
    } else {
        let mut prev = Row::from_elem(0, b.len() + 1);
        let mut cur = Row::from_elem(0, b.len() + 1);
        sum_blocks(a.len(), b.len(), |ra, rb| longest_block(a, b, ra, rb, &mut prev, &mut cur))
    }
}

/// Drives the recursion with an explicit stack; `find` returns the longest
/// block of a region as `(start_a, start_b, len)`.
fn sum_blocks<F>(len_a: usize, len_b: usize, mut find: F) -> usize
where
    F: FnMut((usize, usize), (usize, usize)) -> (usize, usize, usize),
{
    let mut total = 0;
    let mut pending: SmallVec<[(usize, usize, usize, usize); 8]> = SmallVec::new();
    pending.push((0, len_a, 0, len_b));
    while let Some((alo, ahi, blo, bhi)) = pending.pop() {
        let (i, j, k) = find((alo, ahi), (blo, bhi));
        if k == 0 {
            continue;
        }
        total += k;
        if alo < i && blo < j {
            pending.push((alo, i, blo, j));
        }
        if i + k < ahi && j + k < bhi {
            pending.push((i + k, ahi, j + k, bhi));
        }
    }
    total
}

type Masks = SmallVec<[u64; 32]>;

/// Bit `j` of entry `i` is set when `a[i] == b[j]`. Requires `b.len() <= 64`.
///
/// Masks are collected per distinct symbol of `b` first, so the cost is
/// `(|a| + |b|)` times the number of distinct symbols rather than `|a| * |b|`.
fn match_masks<T: PartialEq>(a: &[T], b: &[T]) -> Masks {
    let mut symbols: SmallVec<[(&T, u64); 32]> = SmallVec::new();
    for (j, y) in b.iter().enumerate() {
        match symbols.iter_mut().find(|(s, _)| *s == y) {
            Some((_, m)) => *m |= 1 << j,
            None => symbols.push((y, 1 << j)),
        }
    }
    a.iter()
        .map(|x| symbols.iter().find(|(s, _)| *s == x).map_or(0, |&(_, m)| m))
        .collect()
}

/// [`matching_characters`] for ASCII operands of at most `N <= 64` bytes.
fn matching_ascii<const N: usize>(a: &[u8], b: &[u8]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut by_byte = [0u64; 128];
    for (j, &y) in b.iter().enumerate() {
        by_byte[usize::from(y & 0x7f)] |= 1 << j;
    }
    let mut eq = [0u64; N];
    for (e, &x) in eq.iter_mut().zip(a) {
        *e = by_byte[usize::from(x & 0x7f)];
    }
    let (mut cur, mut next) = ([0u64; N], [0u64; N]);
    sum_blocks(a.len(), b.len(), |ra, rb| longest_block_bits(&eq, ra, rb, &mut cur, &mut next))
}

/// Bit-parallel [`longest_block`] for `b.len() <= 64`. Both scratch rows
/// must be at least as long as `eq`.
///
/// At level `k`, bit `j` of row `i` is set when a common run of length at
/// least `k` ends at `(i, j)`. Level `k + 1` is level `k` of the previous row
/// shifted one position along `b`, masked by the matches of the current row.
/// The last nonempty level gives the block length; its first nonempty row and
/// lowest bit give the earliest block.
fn longest_block_bits(
    eq: &[u64],
    (alo, ahi): (usize, usize),
    (blo, bhi): (usize, usize),
    cur: &mut [u64],
    next: &mut [u64],
) -> (usize, usize, usize) {
    let mask = (u64::MAX >> (64 - (bhi - blo))) << blo;
    let eq = &eq[alo..ahi];
    let mut cur = &mut cur[alo..ahi];
    let mut next = &mut next[alo..ahi];
    let mut any = 0;
    for (c, &e) in cur.iter_mut().zip(eq) {
        *c = e & mask;
        any |= *c;
    }
    if any == 0 {
        return (alo, blo, 0);
    }
    let mut k = 1;
    loop {
        next[0] = 0;
        let mut any = 0;
        for ((nx, &e), &c) in next[1..].iter_mut().zip(&eq[1..]).zip(cur.iter()) {
            *nx = e & mask & (c << 1);
            any |= *nx;
        }
        if any == 0 {
            break;
        }
        std::mem::swap(&mut cur, &mut next);
        k += 1;
    }
    let (r, bits) = cur
        .iter()
        .enumerate()
        .find(|(_, &bits)| bits != 0)
        .map(|(r, &bits)| (r, bits))
        .expect("the last level is nonempty");
    (alo + r + 1 - k, bits.trailing_zeros() as usize + 1 - k, k)
}

/// Longest common block of `a[alo..ahi]` and `b[blo..bhi]` as
/// `(start_a, start_b, len)`, by dynamic programming over common suffixes.
fn longest_block<T: PartialEq>(
    a: &[T],
    b: &[T],
    (alo, ahi): (usize, usize),
    (blo, bhi): (usize, usize),
    prev: &mut Row,
    cur: &mut Row,
) -> (usize, usize, usize) {
    let bs = &b[blo..bhi];
    let width = bs.len();
    // prev[jb + 1] = length of the common suffix ending at (ia - 1, blo + jb)
    let (mut prev, mut cur) = (&mut prev[..=width], &mut cur[..=width]);
    prev.fill(0);
    cur[0] = 0;
    let (mut best_i, mut best_j, mut best_k) = (alo, blo, 0);
    for (ia, x) in (alo..ahi).zip(&a[alo..ahi]) {
        for (jb, y) in bs.iter().enumerate() {
            // branch-free: equality is close to random on small alphabets
            let k = (prev[jb] + 1) * u32::from(x == y);
            cur[jb + 1] = k;
            if k as usize > best_k {
                best_k = k as usize;
                best_i = ia + 1 - best_k;
                best_j = blo + jb + 1 - best_k;
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    (best_i, best_j, best_k)
}
