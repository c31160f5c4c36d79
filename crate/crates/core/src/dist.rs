//! Probability vectors over profile indices.

use crate::error::{Error, Result};
use crate::subset::SubsetMask;
use serde::{Deserialize, Serialize};

pub const NORMALIZATION_TOL: f64 = 1e-12;

/// A dense probability vector, optionally tagged with its support set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dist {
    values: Vec<f64>,
    support: Option<SubsetMask>,
}

impl Dist {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_support(values, None)
    }

    pub fn with_support(values: Vec<f64>, support: Option<SubsetMask>) -> Result<Self> {
        if values.iter().any(|&p| !p.is_finite() || p < -NORMALIZATION_TOL) {
            return Err(Error::invalid("distribution entries must be nonnegative"));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Numerical(format!(
                "distribution sums to {sum}, expected 1 within {NORMALIZATION_TOL}"
            )));
        }
        if let Some(mask) = &support {
            if mask.universe() != values.len() {
                return Err(Error::SizeMismatch(
                    "support universe differs from vector length".into(),
                ));
            }
            for (i, &p) in values.iter().enumerate() {
                if p > 0.0 && !mask.contains(i) {
                    return Err(Error::invalid(format!(
                        "distribution puts mass {p} outside its declared support at {i}"
                    )));
                }
            }
        }
        Ok(Dist { values, support })
    }

    /// Point mass at `index`.
    pub fn delta(size: usize, index: usize) -> Self {
        let mut v = vec![0.0; size];
        v[index] = 1.0;
        Dist {
            values: v,
            support: Some(SubsetMask::singleton(size, index)),
        }
    }

    pub fn uniform(size: usize) -> Self {
        Dist {
            values: vec![1.0 / size as f64; size],
            support: None,
        }
    }

    /// Normalized exponential of the given log-weights.
    pub fn from_log_weights(logs: &[f64]) -> Self {
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut v: Vec<f64> = logs.iter().map(|&l| (l - m).exp()).collect();
        let z: f64 = v.iter().sum();
        for p in &mut v {
            *p /= z;
        }
        Dist {
            values: v,
            support: None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> Option<&SubsetMask> {
        self.support.as_ref()
    }

    #[inline]
    pub fn prob(&self, index: usize) -> f64 {
        self.values[index]
    }

    /// Total mass on a subset.
    pub fn mass(&self, mask: &SubsetMask) -> f64 {
        mask.iter().map(|i| self.values[i]).sum()
    }

    pub fn min_positive(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .filter(|&p| p > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    /// Total-variation distance: half the l1 difference.
    pub fn tv(&self, other: &Dist) -> Result<f64> {
        tv_distance_slices(&self.values, &other.values)
    }
}

/// `(1/2) sum_x |a(x) - b(x)|` for equal-length slices.
pub fn tv_distance_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch(format!(
            "distributions have sizes {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tv_of_identical_distributions_is_zero() {
        let d = Dist::uniform(4);
        assert_eq!(d.tv(&d).unwrap(), 0.0);
    }

    #[test]
    fn tv_point_mass_vs_uniform_on_four_states() {
        let d = Dist::delta(4, 2);
        let u = Dist::uniform(4);
        assert!((d.tv(&u).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn tv_hand_computed_example() {
        let a = Dist::new(vec![4.0 / 9.0, 2.0 / 9.0, 2.0 / 9.0, 1.0 / 9.0]).unwrap();
        let u = Dist::uniform(4);
        // half the l1 difference: (7/36 + 1/36 + 1/36 + 5/36)/2 = 7/36
        assert!((a.tv(&u).unwrap() - 7.0 / 36.0).abs() < 1e-15);
    }

    #[test]
    fn support_violation_is_rejected() {
        let mask = SubsetMask::from_indices(2, &[0]).unwrap();
        assert!(Dist::with_support(vec![0.5, 0.5], Some(mask)).is_err());
    }

    #[test]
    fn mismatched_sizes_are_rejected() {
        let a = Dist::uniform(3);
        let b = Dist::uniform(4);
        assert!(a.tv(&b).is_err());
    }
}
