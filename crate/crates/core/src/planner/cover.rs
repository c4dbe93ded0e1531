//! Interval sets over `[0, 2^bits)` and their decomposition into aligned
//! bit-prefix subtrees.

use std::collections::BTreeMap;

use num_bigint::BigUint;

/// Sorted, disjoint, non-adjacent inclusive intervals.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IntervalSet {
    ranges: Vec<(BigUint, BigUint)>,
}

fn max_value(bits: u32) -> BigUint {
    (BigUint::from(1u8) << bits) - 1u8
}

impl IntervalSet {
    pub fn empty() -> Self {
        IntervalSet::default()
    }

    pub fn full(bits: u32) -> Self {
        IntervalSet { ranges: vec![(BigUint::default(), max_value(bits))] }
    }

    pub fn interval(lo: BigUint, hi: BigUint) -> Self {
        if lo > hi {
            IntervalSet::empty()
        } else {
            IntervalSet { ranges: vec![(lo, hi)] }
        }
    }

    pub fn point(v: BigUint) -> Self {
        IntervalSet::interval(v.clone(), v)
    }

    pub fn from_points(points: impl IntoIterator<Item = BigUint>) -> Self {
        points.into_iter().fold(IntervalSet::empty(), |acc, p| acc.union(&IntervalSet::point(p)))
    }

    pub fn ranges(&self) -> &[(BigUint, BigUint)] {
        &self.ranges
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn contains(&self, v: &BigUint) -> bool {
        self.ranges.iter().any(|(lo, hi)| lo <= v && v <= hi)
    }

    pub fn union(&self, other: &IntervalSet) -> IntervalSet {
        let mut all: Vec<(BigUint, BigUint)> = self.ranges.iter().chain(&other.ranges).cloned().collect();
        all.sort();
        let mut out: Vec<(BigUint, BigUint)> = Vec::with_capacity(all.len());
        for (lo, hi) in all {
            if let Some(last) = out.last_mut() {
                if lo <= &last.1 + 1u8 {
                    if hi > last.1 {
                        last.1 = hi;
                    }
                    continue;
                }
            }
            out.push((lo, hi));
        }
        IntervalSet { ranges: out }
    }

    pub fn intersect(&self, other: &IntervalSet) -> IntervalSet {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.ranges.len() && j < other.ranges.len() {
            let (a_lo, a_hi) = &self.ranges[i];
            let (b_lo, b_hi) = &other.ranges[j];
            let lo = a_lo.max(b_lo);
            let hi = a_hi.min(b_hi);
            if lo <= hi {
                out.push((lo.clone(), hi.clone()));
            }
            if a_hi < b_hi {
                i += 1;
            } else {
                j += 1;
            }
        }
        IntervalSet { ranges: out }
    }

    /// Complement within `[0, 2^bits)`.
    pub fn complement(&self, bits: u32) -> IntervalSet {
        let max = max_value(bits);
        let mut out = Vec::new();
        let mut next = BigUint::default();
        for (lo, hi) in &self.ranges {
            if lo > &next {
                out.push((next.clone(), lo - 1u8));
            }
            next = hi + 1u8;
        }
        if next <= max {
            out.push((next, max));
        }
        IntervalSet { ranges: out }
    }
}

/// Minimal cover of `[lo, hi]` by aligned subtrees whose depths are multiples
/// of `branching_bits`. Each item is `(prefix_bits, prefix)`: the subtree of
/// all values whose top `prefix_bits` bits equal `prefix`. Depth 0 (the whole
/// domain) is never emitted; a full domain yields `2^branching_bits` depth-1
/// subtrees.
pub fn cover_range(lo: &BigUint, hi: &BigUint, total_bits: u32, branching_bits: u32) -> Vec<(u32, BigUint)> {
    assert!(
        branching_bits >= 1 && total_bits.is_multiple_of(branching_bits),
        "branching bits must divide the domain width"
    );
    let mut out = Vec::new();
    if lo > hi {
        return out;
    }
    let mut cur = lo.clone();
    loop {
        let align = cur.trailing_zeros().map_or(total_bits as u64, |z| z.min(total_bits as u64)) as u32;
        let mut prefix_bits = total_bits;
        let mut depth = 1;
        while depth * branching_bits <= total_bits {
            let bits = depth * branching_bits;
            let span = total_bits - bits;
            if span <= align {
                let last = &cur + ((BigUint::from(1u8) << span) - 1u8);
                if &last <= hi {
                    prefix_bits = bits;
                    break;
                }
            }
            depth += 1;
        }
        let span = total_bits - prefix_bits;
        out.push((prefix_bits, &cur >> span));
        let next = &cur + (BigUint::from(1u8) << span);
        if &next > hi {
            break;
        }
        cur = next;
    }
    out
}

/// Covers every interval of `set` and groups the prefixes by depth in bits.
pub fn cover_levels(set: &IntervalSet, total_bits: u32, branching_bits: u32) -> BTreeMap<u32, Vec<BigUint>> {
    let mut levels: BTreeMap<u32, Vec<BigUint>> = BTreeMap::new();
    for (lo, hi) in set.ranges() {
        for (bits, prefix) in cover_range(lo, hi, total_bits, branching_bits) {
            levels.entry(bits).or_default().push(prefix);
        }
    }
    levels
}
