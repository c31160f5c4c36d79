//! Data-parallel kernels with a sequential fallback.
//!
//! Scans over subsets, start states and trajectories are embarrassingly
//! parallel; with the `parallel` feature they run on rayon, without it they
//! run on plain iterators. Every reduction is keyed deterministically so that
//! results are identical across thread counts. The sequential versions stay
//! exported under the feature so benchmarks can compare both paths.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..len` into a `Vec`, preserving index order.
pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// Sequential twin of [`map_indexed`], kept for benchmark comparisons.
pub fn map_indexed_seq<T, F>(len: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..len).map(f).collect()
}

/// Minimum of `score(i)` over `0..len` under a total order on the score type;
/// ties resolve to the smallest index, so the result does not depend on the
/// execution schedule.
pub fn argmin_indexed<K, F>(len: usize, score: F) -> Option<(usize, K)>
where
    K: PartialOrd + Send,
    F: Fn(usize) -> Option<K> + Sync + Send,
{
    let pick = |best: Option<(usize, K)>, cand: Option<(usize, K)>| match (best, cand) {
        (None, c) => c,
        (b, None) => b,
        (Some((bi, bk)), Some((ci, ck))) => {
            if ck < bk || (ck == bk && ci < bi) {
                Some((ci, ck))
            } else {
                Some((bi, bk))
            }
        }
    };
    #[cfg(feature = "parallel")]
    {
        (0..len)
            .into_par_iter()
            .map(|i| score(i).map(|k| (i, k)))
            .reduce(|| None, pick)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).fold(None, |best, i| pick(best, score(i).map(|k| (i, k))))
    }
}

/// Sequential twin of [`argmin_indexed`] for benchmarks.
pub fn argmin_indexed_seq<K, F>(len: usize, score: F) -> Option<(usize, K)>
where
    K: PartialOrd,
    F: Fn(usize) -> Option<K>,
{
    (0..len).fold(None, |best, i| {
        match (best, score(i).map(|k| (i, k))) {
            (None, c) => c,
            (b, None) => b,
            (Some((bi, bk)), Some((ci, ck))) => {
                if ck < bk || (ck == bk && ci < bi) {
                    Some((ci, ck))
                } else {
                    Some((bi, bk))
                }
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_matches_sequential() {
        let a = map_indexed(100, |i| i * i);
        let b = map_indexed_seq(100, |i| i * i);
        assert_eq!(a, b);
    }

    #[test]
    fn argmin_ties_resolve_to_smallest_index() {
        let scores = [3.0, 1.0, 1.0, 2.0];
        let got = argmin_indexed(4, |i| Some(scores[i]));
        assert_eq!(got, Some((1, 1.0)));
        assert_eq!(got, argmin_indexed_seq(4, |i| Some(scores[i])));
    }

    #[test]
    fn argmin_skips_filtered_entries() {
        let got = argmin_indexed(5, |i| if i % 2 == 0 { None } else { Some(i as f64) });
        assert_eq!(got, Some((1, 1.0)));
    }
}
