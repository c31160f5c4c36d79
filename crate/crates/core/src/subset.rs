//! Bitmask subsets of the profile space.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A subset of profile indices `0..universe`, stored as packed 64-bit blocks
/// with cached cardinality.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubsetMask {
    universe: usize,
    blocks: Vec<u64>,
    count: usize,
}

impl SubsetMask {
    pub fn empty(universe: usize) -> Self {
        SubsetMask {
            universe,
            blocks: vec![0; universe.div_ceil(64)],
            count: 0,
        }
    }

    pub fn full(universe: usize) -> Self {
        let mut mask = SubsetMask::empty(universe);
        for i in 0..universe {
            mask.insert(i);
        }
        mask
    }

    pub fn from_indices(universe: usize, indices: &[usize]) -> Result<Self> {
        let mut mask = SubsetMask::empty(universe);
        for &i in indices {
            if i >= universe {
                return Err(Error::invalid(format!(
                    "profile index {i} out of range for |S| = {universe}"
                )));
            }
            mask.insert(i);
        }
        Ok(mask)
    }

    pub fn singleton(universe: usize, index: usize) -> Self {
        let mut mask = SubsetMask::empty(universe);
        mask.insert(index);
        mask
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    /// Cached cardinality.
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    #[inline]
    pub fn contains(&self, index: usize) -> bool {
        debug_assert!(index < self.universe);
        self.blocks[index / 64] >> (index % 64) & 1 == 1
    }

    pub fn insert(&mut self, index: usize) {
        debug_assert!(index < self.universe);
        let b = &mut self.blocks[index / 64];
        let bit = 1u64 << (index % 64);
        if *b & bit == 0 {
            *b |= bit;
            self.count += 1;
        }
    }

    pub fn remove(&mut self, index: usize) {
        debug_assert!(index < self.universe);
        let b = &mut self.blocks[index / 64];
        let bit = 1u64 << (index % 64);
        if *b & bit != 0 {
            *b &= !bit;
            self.count -= 1;
        }
    }

    pub fn complement(&self) -> Self {
        let mut out = SubsetMask::empty(self.universe);
        for i in 0..self.universe {
            if !self.contains(i) {
                out.insert(i);
            }
        }
        out
    }

    pub fn union(&self, other: &Self) -> Self {
        debug_assert_eq!(self.universe, other.universe);
        let mut out = self.clone();
        for i in other.iter() {
            out.insert(i);
        }
        out
    }

    pub fn minus(&self, other: &Self) -> Self {
        debug_assert_eq!(self.universe, other.universe);
        let mut out = self.clone();
        for i in other.iter() {
            out.remove(i);
        }
        out
    }

    pub fn intersects(&self, other: &Self) -> bool {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .any(|(a, b)| a & b != 0)
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .all(|(a, b)| a & !b == 0)
    }

    /// Members in increasing index order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.blocks.iter().enumerate().flat_map(|(bi, &block)| {
            let mut b = block;
            std::iter::from_fn(move || {
                if b == 0 {
                    None
                } else {
                    let tz = b.trailing_zeros() as usize;
                    b &= b - 1;
                    Some(bi * 64 + tz)
                }
            })
        })
    }

    pub fn to_indices(&self) -> Vec<usize> {
        self.iter().collect()
    }

    /// Compares masks as the integers `sum_{i in L} 2^i`; used as the final
    /// tie-break rule in subset searches.
    pub fn cmp_as_integer(&self, other: &Self) -> std::cmp::Ordering {
        debug_assert_eq!(self.universe, other.universe);
        for (a, b) in self.blocks.iter().rev().zip(other.blocks.iter().rev()) {
            match a.cmp(b) {
                std::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        std::cmp::Ordering::Equal
    }
}

impl std::fmt::Display for SubsetMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}
