//! Multi-index space of the truncated hierarchy.
//!
//! An index is a 2K-vector `(m_1..m_K | n_1..n_K)` of nonnegative integers.
//! Indices are ordered by tier `Σ(m+n)` and, within a tier, lexicographically
//! descending, so ordinal 0 is always the reduced density matrix.

use std::fmt;

use crate::error::{Error, Result};

/// Default cap on the number of ADOs.
pub const DEFAULT_ADO_CAP: usize = 5_000_000;

/// Marker for a neighbour outside the truncated index set.
pub const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    pub m: Vec<u8>,
    pub n: Vec<u8>,
}

impl MultiIndex {
    pub fn tier(&self) -> usize {
        self.m.iter().chain(&self.n).map(|&x| x as usize).sum()
    }

    /// The index with `m` and `n` exchanged.
    pub fn conjugate(&self) -> MultiIndex {
        MultiIndex {
            m: self.n.clone(),
            n: self.m.clone(),
        }
    }

    fn slots(&self) -> Vec<u8> {
        let mut v = self.m.clone();
        v.extend_from_slice(&self.n);
        v
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[u8]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        write!(f, "({}|{})", join(&self.m), join(&self.n))
    }
}

/// Binomial coefficient as u128, saturating.
fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i + 1) as u128;
    }
    acc
}

/// Number of nonnegative `slots`-vectors with sum exactly `total`.
fn compositions(total: usize, slots: usize) -> u128 {
    if slots == 0 {
        return u128::from(total == 0);
    }
    binomial((total + slots - 1) as u64, (slots - 1) as u64)
}

/// Number of nonnegative `slots`-vectors with sum at most `max_tier`.
pub fn hierarchy_size(k: usize, max_tier: usize) -> u128 {
    binomial((2 * k + max_tier) as u64, (2 * k) as u64)
}

/// Ordered multi-indices with neighbour tables.
#[derive(Debug, Clone)]
pub struct HierarchyIndexSet {
    k: usize,
    max_tier: usize,
    /// Flattened slot vectors, `2K` bytes per index.
    slots: Vec<u8>,
    /// `up[i·2K + j]`: ordinal of index `i` with slot `j` raised by one.
    up: Vec<u32>,
    /// `down[i·2K + j]`: ordinal of index `i` with slot `j` lowered by one.
    down: Vec<u32>,
    /// Ordinal of the index with `m ↔ n`.
    conjugate: Vec<u32>,
    /// Offsets of each tier in the ordering.
    tier_offsets: Vec<usize>,
}

/// Builds the index set with the default ADO cap.
pub fn enumerate_hierarchy(k: usize, max_tier: usize) -> Result<HierarchyIndexSet> {
    HierarchyIndexSet::new(k, max_tier, DEFAULT_ADO_CAP)
}

impl HierarchyIndexSet {
    pub fn new(k: usize, max_tier: usize, cap: usize) -> Result<Self> {
        let size = hierarchy_size(k, max_tier);
        if size > cap as u128 || size >= NONE as u128 {
            return Err(Error::Resource {
                requested: size,
                cap,
            });
        }
        if max_tier > u8::MAX as usize {
            return Err(Error::InvalidParameter {
                name: "L",
                reason: "tier must fit in a byte".into(),
            });
        }
        let size = size as usize;
        let r = 2 * k;
        let mut slots = Vec::with_capacity(size * r);
        let mut tier_offsets = Vec::with_capacity(max_tier + 2);
        let mut buf = vec![0u8; r];
        for tier in 0..=max_tier {
            tier_offsets.push(slots.len() / r.max(1));
            if r == 0 {
                if tier == 0 {
                    tier_offsets[0] = 0;
                }
                continue;
            }
            push_descending(&mut slots, &mut buf, 0, tier);
        }
        let count = if r == 0 { 1 } else { slots.len() / r };
        tier_offsets.push(count);
        debug_assert_eq!(count, size);

        let mut set = HierarchyIndexSet {
            k,
            max_tier,
            slots,
            up: vec![NONE; count * r],
            down: vec![NONE; count * r],
            conjugate: vec![0; count],
            tier_offsets,
        };
        let mut v = vec![0u8; r];
        for i in 0..count {
            v.copy_from_slice(set.slot_vector(i));
            let tier: usize = v.iter().map(|&x| x as usize).sum();
            for j in 0..r {
                if tier < max_tier {
                    v[j] += 1;
                    set.up[i * r + j] = set.rank(&v) as u32;
                    v[j] -= 1;
                }
                if v[j] > 0 {
                    v[j] -= 1;
                    set.down[i * r + j] = set.rank(&v) as u32;
                    v[j] += 1;
                }
            }
            let mut c = v[k..].to_vec();
            c.extend_from_slice(&v[..k]);
            set.conjugate[i] = set.rank(&c) as u32;
        }
        Ok(set)
    }

    pub fn modes(&self) -> usize {
        self.k
    }

    pub fn max_tier(&self) -> usize {
        self.max_tier
    }

    pub fn len(&self) -> usize {
        self.conjugate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conjugate.is_empty()
    }

    #[inline]
    pub fn slot_vector(&self, i: usize) -> &[u8] {
        let r = 2 * self.k;
        &self.slots[i * r..(i + 1) * r]
    }

    pub fn index(&self, i: usize) -> MultiIndex {
        let v = self.slot_vector(i);
        MultiIndex {
            m: v[..self.k].to_vec(),
            n: v[self.k..].to_vec(),
        }
    }

    pub fn tier_of(&self, i: usize) -> usize {
        self.slot_vector(i).iter().map(|&x| x as usize).sum()
    }

    /// Ordinal range occupied by a tier.
    pub fn tier_range(&self, tier: usize) -> std::ops::Range<usize> {
        self.tier_offsets[tier]..self.tier_offsets[tier + 1]
    }

    #[inline]
    pub fn up(&self, i: usize, slot: usize) -> u32 {
        self.up[i * 2 * self.k + slot]
    }

    #[inline]
    pub fn down(&self, i: usize, slot: usize) -> u32 {
        self.down[i * 2 * self.k + slot]
    }

    /// Upward neighbours of ADO `i` for all `2K` slots.
    #[inline]
    pub fn up_row(&self, i: usize) -> &[u32] {
        let r = 2 * self.k;
        &self.up[i * r..(i + 1) * r]
    }

    #[inline]
    pub fn down_row(&self, i: usize) -> &[u32] {
        let r = 2 * self.k;
        &self.down[i * r..(i + 1) * r]
    }

    #[inline]
    pub fn conjugate_of(&self, i: usize) -> usize {
        self.conjugate[i] as usize
    }

    /// Ordinal of a multi-index, if it belongs to the set.
    pub fn lookup(&self, idx: &MultiIndex) -> Option<usize> {
        if idx.m.len() != self.k || idx.n.len() != self.k || idx.tier() > self.max_tier {
            return None;
        }
        Some(self.rank(&idx.slots()))
    }

    /// Position of a slot vector in the graded, descending-lex order.
    fn rank(&self, v: &[u8]) -> usize {
        let r = v.len();
        let tier: usize = v.iter().map(|&x| x as usize).sum();
        let mut pos = if tier == 0 {
            0u128
        } else {
            hierarchy_size(self.k, tier - 1)
        };
        let mut rem = tier;
        for (p, &x) in v.iter().enumerate() {
            let x = x as usize;
            let tail = r - p - 1;
            for u in (x + 1)..=rem {
                pos += compositions(rem - u, tail);
            }
            rem -= x;
        }
        pos as usize
    }
}

fn push_descending(out: &mut Vec<u8>, buf: &mut [u8], pos: usize, remaining: usize) {
    if pos + 1 == buf.len() {
        buf[pos] = remaining as u8;
        out.extend_from_slice(buf);
        return;
    }
    for x in (0..=remaining).rev() {
        buf[pos] = x as u8;
        push_descending(out, buf, pos + 1, remaining - x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    /// All 2K-vectors with entries ≤ L, filtered by total, by plain counting.
    fn brute_force(k: usize, l: usize) -> Vec<Vec<u8>> {
        let r = 2 * k;
        let mut out = Vec::new();
        let mut v = vec![0u8; r];
        loop {
            if v.iter().map(|&x| x as usize).sum::<usize>() <= l {
                out.push(v.clone());
            }
            let mut p = 0;
            loop {
                if p == r {
                    return out;
                }
                if (v[p] as usize) < l {
                    v[p] += 1;
                    break;
                }
                v[p] = 0;
                p += 1;
            }
        }
    }

    #[test]
    fn small_examples() {
        let s = enumerate_hierarchy(1, 1).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.index(0).to_string(), "(0|0)");
        assert_eq!(s.index(1).to_string(), "(1|0)");
        assert_eq!(s.index(2).to_string(), "(0|1)");
        assert_eq!(enumerate_hierarchy(2, 2).unwrap().len(), 15);
        assert_eq!(enumerate_hierarchy(5, 0).unwrap().len(), 1);
        assert_eq!(enumerate_hierarchy(0, 3).unwrap().len(), 1);
    }

    #[test]
    fn matches_brute_force_enumeration() {
        for (k, l) in [(1, 4), (2, 2), (2, 3), (3, 2)] {
            let set = enumerate_hierarchy(k, l).unwrap();
            let brute: HashSet<Vec<u8>> = brute_force(k, l).into_iter().collect();
            assert_eq!(set.len(), brute.len());
            assert_eq!(set.len() as u128, hierarchy_size(k, l));
            for i in 0..set.len() {
                let v = set.slot_vector(i).to_vec();
                assert!(brute.contains(&v));
                assert_eq!(set.lookup(&set.index(i)), Some(i));
                if i > 0 {
                    let (a, b) = (set.slot_vector(i - 1), set.slot_vector(i));
                    let (ta, tb) = (set.tier_of(i - 1), set.tier_of(i));
                    assert!(ta < tb || (ta == tb && a > b), "ordering broken at {i}");
                }
            }
        }
    }

    #[test]
    fn neighbour_tables_are_consistent() {
        let set = enumerate_hierarchy(2, 3).unwrap();
        for i in 0..set.len() {
            let v = set.slot_vector(i).to_vec();
            for j in 0..4 {
                let up = set.up(i, j);
                if up != NONE {
                    let mut w = v.clone();
                    w[j] += 1;
                    assert_eq!(set.slot_vector(up as usize), &w[..]);
                    assert_eq!(set.down(up as usize, j), i as u32);
                } else {
                    assert_eq!(set.tier_of(i), 3);
                }
                if v[j] == 0 {
                    assert_eq!(set.down(i, j), NONE);
                }
            }
            let c = set.conjugate_of(i);
            assert_eq!(set.index(c), set.index(i).conjugate());
        }
    }

    #[test]
    fn cap_is_enforced() {
        match HierarchyIndexSet::new(6, 12, 1000) {
            Err(Error::Resource { requested, cap }) => {
                assert_eq!(requested, hierarchy_size(6, 12));
                assert_eq!(cap, 1000);
            }
            other => panic!("expected resource error, got {other:?}"),
        }
    }
}
