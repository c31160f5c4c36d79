//! Shared helpers for unit tests.

use crate::profile::ProfileIndex;
use crate::subset::SubsetMask;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_nonempty_subset(size: usize, seed: u64) -> SubsetMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut m = SubsetMask::empty(size);
        for i in 0..size {
            if rng.gen_bool(0.5) {
                m.insert(i);
            }
        }
        if !m.is_empty() {
            return m;
        }
    }
}

/// Grows a connected subset by random neighbor additions; deterministic under
/// the seed.
pub fn random_connected_subset(ix: &ProfileIndex, seed: u64) -> SubsetMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = ix.size();
    let target = rng.gen_range(1..=size.div_ceil(2));
    let mut mask = SubsetMask::singleton(size, rng.gen_range(0..size));
    while mask.len() < target {
        let members = mask.to_indices();
        let &x = &members[rng.gen_range(0..members.len())];
        let nbrs = ix.neighbors(x);
        let (_, y) = nbrs[rng.gen_range(0..nbrs.len())];
        mask.insert(y);
    }
    mask
}
