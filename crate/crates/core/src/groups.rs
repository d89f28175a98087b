//! Disjoint group partitions of a flat parameter vector.
//!
//! A [`GroupPartition`] splits `[0, n)` into `m` non-empty, pairwise disjoint
//! index sets `s_1..s_m`, each carrying a positive weight `d_j`. Groups are
//! explicit index lists, so filters, channels, neurons or single coordinates
//! all map onto the same representation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Zero-count tolerance used by sparsity metrics unless overridden.
pub const DEFAULT_ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupPartition<T> {
    n: usize,
    groups: Vec<Vec<usize>>,
    weights: Vec<T>,
}

/// Weighted group norms `sqrt(d_j) * ||theta_{s_j}||`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupNorms<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> GroupNorms<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of groups with a strictly positive norm.
    pub fn support_size(&self) -> usize {
        self.values.iter().filter(|&&b| b > T::zero()).count()
    }
}

impl<T: Scalar> GroupPartition<T> {
    /// Validates and builds a partition. Missing weights default to `1/|s_j|`.
    pub fn new(n: usize, groups: Vec<Vec<usize>>, weights: Option<Vec<T>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParams("partition over an empty vector".into()));
        }
        let mut groups = groups;
        let mut seen = vec![false; n];
        for (j, group) in groups.iter_mut().enumerate() {
            if group.is_empty() {
                return Err(Error::EmptyGroup { group: j });
            }
            group.sort_unstable();
            for &i in group.iter() {
                if i >= n {
                    return Err(Error::IndexOutOfRange { index: i, n });
                }
                if seen[i] {
                    return Err(Error::OverlappingGroups { index: i });
                }
                seen[i] = true;
            }
        }
        if let Some(index) = seen.iter().position(|&s| !s) {
            return Err(Error::IncompleteCover { index, n });
        }
        let weights = match weights {
            Some(w) => {
                if w.len() != groups.len() {
                    return Err(Error::DimensionMismatch {
                        expected: groups.len(),
                        actual: w.len(),
                    });
                }
                for (j, &d) in w.iter().enumerate() {
                    if !(d > T::zero()) || !d.is_finite() {
                        return Err(Error::NonpositiveWeight { group: j, weight: d.as_f64() });
                    }
                }
                w
            }
            None => groups
                .iter()
                .map(|g| T::one() / T::from_usize_lossy(g.len()))
                .collect(),
        };
        Ok(Self { n, groups, weights })
    }

    /// Contiguous blocks of `group_size` indices; the last block may be shorter.
    pub fn contiguous(n: usize, group_size: usize, weights: Option<Vec<T>>) -> Result<Self> {
        if group_size == 0 {
            return Err(Error::InvalidParams("group size must be positive".into()));
        }
        let groups = (0..n)
            .step_by(group_size)
            .map(|start| (start..(start + group_size).min(n)).collect())
            .collect();
        Self::new(n, groups, weights)
    }

    /// Every coordinate in its own group with unit weight.
    pub fn singletons(n: usize) -> Result<Self> {
        Self::new(n, (0..n).map(|i| vec![i]).collect(), Some(vec![T::one(); n]))
    }

    /// Concatenates partitions over consecutive blocks of a longer vector.
    pub fn concat(parts: &[GroupPartition<T>]) -> Result<Self> {
        let mut offset = 0;
        let mut groups = Vec::new();
        let mut weights = Vec::new();
        for p in parts {
            groups.extend(p.groups.iter().map(|g| g.iter().map(|&i| i + offset).collect()));
            weights.extend_from_slice(&p.weights);
            offset += p.n;
        }
        Self::new(offset, groups, Some(weights))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of groups `m`.
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn group(&self, j: usize) -> &[usize] {
        &self.groups[j]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn weight(&self, j: usize) -> T {
        self.weights[j]
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, actual: len });
        }
        Ok(())
    }

    /// Copy of `theta` with every coordinate outside group `j` zeroed.
    pub fn project(&self, theta: &[T], j: usize) -> Result<Vec<T>> {
        self.check_len(theta.len())?;
        if j >= self.len() {
            return Err(Error::IndexOutOfRange { index: j, n: self.len() });
        }
        let mut out = vec![T::zero(); self.n];
        for &i in &self.groups[j] {
            out[i] = theta[i];
        }
        Ok(out)
    }

    /// Squared unweighted norms `||theta_{s_j}||^2`, one pass over `theta`.
    pub fn group_sq_norms(&self, theta: &[T]) -> Result<Vec<T>> {
        self.check_len(theta.len())?;
        Ok(self
            .groups
            .iter()
            .map(|g| g.iter().map(|&i| theta[i] * theta[i]).sum())
            .collect())
    }

    /// Weighted norms `sqrt(d_j * sum_{i in s_j} theta_i^2)`.
    pub fn group_norms(&self, theta: &[T]) -> Result<GroupNorms<T>> {
        let sq = self.group_sq_norms(theta)?;
        Ok(GroupNorms {
            values: sq
                .into_iter()
                .zip(&self.weights)
                .map(|(s, &d)| (d * s).sqrt())
                .collect(),
        })
    }

    /// Fraction of groups whose (unweighted) norm is at most `tol`.
    pub fn group_sparsity_ratio(&self, theta: &[T], tol: T) -> Result<f64> {
        Ok(self.zero_group_count(theta, tol)? as f64 / self.len() as f64)
    }

    pub fn zero_group_count(&self, theta: &[T], tol: T) -> Result<usize> {
        let sq = self.group_sq_norms(theta)?;
        Ok(sq.into_iter().filter(|&s| s.sqrt() <= tol).count())
    }

    pub fn to_layout(&self) -> GroupLayout {
        GroupLayout {
            n: self.n,
            groups: self.groups.clone(),
            weights: self.weights.iter().map(|w| w.as_f64()).collect(),
        }
    }

    pub fn from_layout(layout: GroupLayout) -> Result<Self> {
        let weights = layout.weights.iter().map(|&w| T::lit(w)).collect();
        Self::new(layout.n, layout.groups, Some(weights))
    }
}

/// JSON form: `{"n": int, "groups": [[int, ...], ...], "weights": [float, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupLayout {
    pub n: usize,
    pub groups: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<f64>,
}

impl GroupLayout {
    pub fn from_json(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("layout serializes")
    }

    /// Builds the partition; an empty weight list means the default `1/|s_j|`.
    pub fn into_partition<T: Scalar>(self) -> Result<GroupPartition<T>> {
        if self.weights.is_empty() {
            GroupPartition::new(self.n, self.groups, None)
        } else {
            GroupPartition::from_layout(self)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type P = GroupPartition<f64>;

    #[test]
    fn valid_partition_from_example() {
        let p = P::new(3, vec![vec![0, 2], vec![1]], None).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.weights(), &[0.5, 1.0]);
    }

    #[test]
    fn rejects_overlap() {
        let err = P::new(4, vec![vec![0, 1], vec![1, 2, 3]], None).unwrap_err();
        assert_eq!(err, Error::OverlappingGroups { index: 1 });
    }

    #[test]
    fn rejects_incomplete_cover_and_bad_indices() {
        assert_eq!(
            P::new(3, vec![vec![0], vec![2]], None).unwrap_err(),
            Error::IncompleteCover { index: 1, n: 3 }
        );
        assert_eq!(
            P::new(2, vec![vec![0, 2]], None).unwrap_err(),
            Error::IndexOutOfRange { index: 2, n: 2 }
        );
        assert_eq!(P::new(2, vec![vec![0, 1], vec![]], None).unwrap_err(), Error::EmptyGroup { group: 1 });
        assert!(matches!(
            P::new(2, vec![vec![0], vec![1]], Some(vec![1.0, 0.0])),
            Err(Error::NonpositiveWeight { group: 1, .. })
        ));
    }

    #[test]
    fn singleton_default_weights() {
        let p = P::new(2, vec![vec![0], vec![1]], None).unwrap();
        assert_eq!(p.weights(), &[1.0, 1.0]);
    }

    #[test]
    fn project_examples() {
        let p = P::new(3, vec![vec![0, 2], vec![1]], None).unwrap();
        assert_eq!(p.project(&[3.0, 6.0, 9.0], 0).unwrap(), vec![3.0, 0.0, 9.0]);
        assert_eq!(p.project(&[0.0; 3], 1).unwrap(), vec![0.0; 3]);
        let q = P::new(2, vec![vec![0], vec![1]], None).unwrap();
        assert_eq!(q.project(&[1.0, 2.0], 1).unwrap(), vec![0.0, 2.0]);
        assert!(matches!(q.project(&[1.0], 0), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn group_norm_examples() {
        let p = P::new(2, vec![vec![0, 1]], Some(vec![1.0])).unwrap();
        assert_eq!(p.group_norms(&[3.0, 4.0]).unwrap().values, vec![5.0]);
        let p = P::contiguous(4, 2, Some(vec![1.0, 1.0])).unwrap();
        assert_eq!(p.group_norms(&[3.0, 0.0, 0.0, 1.0]).unwrap().values, vec![3.0, 1.0]);
        let p = P::new(2, vec![vec![0], vec![1]], Some(vec![4.0, 1.0])).unwrap();
        assert_eq!(p.group_norms(&[1.0, 1.0]).unwrap().values, vec![2.0, 1.0]);
    }

    #[test]
    fn sparsity_ratio_examples() {
        let p = P::contiguous(4, 2, None).unwrap();
        let tol = DEFAULT_ZERO_TOL;
        assert_eq!(p.group_sparsity_ratio(&[0.0, 0.0, 1.0, 1.0], tol).unwrap(), 0.5);
        assert_eq!(p.group_sparsity_ratio(&[0.0; 4], tol).unwrap(), 1.0);
        assert_eq!(p.group_sparsity_ratio(&[1.0; 4], tol).unwrap(), 0.0);
    }

    #[test]
    fn contiguous_handles_ragged_tail() {
        let p = P::contiguous(7, 3, None).unwrap();
        assert_eq!(p.groups(), &[vec![0, 1, 2], vec![3, 4, 5], vec![6]]);
        assert_eq!(p.weight(2), 1.0);
    }

    #[test]
    fn concat_offsets_groups() {
        let a = P::contiguous(2, 1, None).unwrap();
        let b = P::contiguous(3, 3, None).unwrap();
        let c = P::concat(&[a, b]).unwrap();
        assert_eq!(c.n(), 5);
        assert_eq!(c.groups(), &[vec![0], vec![1], vec![2, 3, 4]]);
    }

    #[test]
    fn layout_json_roundtrip() {
        let p = P::new(3, vec![vec![0, 2], vec![1]], Some(vec![0.5, 2.0])).unwrap();
        let json = p.to_layout().to_json();
        assert_eq!(json, r#"{"n":3,"groups":[[0,2],[1]],"weights":[0.5,2.0]}"#);
        let back: P = GroupLayout::from_json(&json).unwrap().into_partition().unwrap();
        assert_eq!(back, p);
        let defaulted: P = GroupLayout::from_json(r#"{"n":2,"groups":[[0,1]]}"#)
            .unwrap()
            .into_partition()
            .unwrap();
        assert_eq!(defaulted.weights(), &[0.5]);
        assert!(GroupLayout::from_json(r#"{"n":2,"groups":[[0,1]],"extra":1}"#).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let p = GroupPartition::<f32>::new(2, vec![vec![0, 1]], Some(vec![1.0])).unwrap();
        assert_eq!(p.group_norms(&[3.0f32, 4.0]).unwrap().values, vec![5.0f32]);
    }

    fn random_partition() -> impl Strategy<Value = (P, Vec<f64>)> {
        (1usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec(0usize..6, n),
                proptest::collection::vec(-5.0f64..5.0, n),
                Just(n),
            )
                .prop_map(|(labels, theta, n)| {
                    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); 6];
                    for (i, l) in labels.into_iter().enumerate() {
                        buckets[l].push(i);
                    }
                    let groups: Vec<_> = buckets.into_iter().filter(|b| !b.is_empty()).collect();
                    (P::new(n, groups, None).unwrap(), theta)
                })
        })
    }

    proptest! {
        #[test]
        fn partition_covers_exactly((p, _theta) in random_partition()) {
            let mut all: Vec<usize> = p.groups().iter().flatten().copied().collect();
            prop_assert_eq!(all.len(), p.n());
            all.sort_unstable();
            prop_assert_eq!(all, (0..p.n()).collect::<Vec<_>>());
            prop_assert!(p.len() <= p.n());
        }

        #[test]
        fn projections_are_pythagorean_and_idempotent((p, theta) in random_partition()) {
            let total: f64 = theta.iter().map(|x| x * x).sum();
            let mut acc = 0.0;
            for j in 0..p.len() {
                let proj = p.project(&theta, j).unwrap();
                acc += proj.iter().map(|x| x * x).sum::<f64>();
                prop_assert_eq!(p.project(&proj, j).unwrap(), proj);
            }
            prop_assert!((acc - total).abs() <= 1e-9 * (1.0 + total));
        }

        #[test]
        fn norms_are_absolutely_homogeneous((p, theta) in random_partition(), c in -3.0f64..3.0) {
            let scaled: Vec<f64> = theta.iter().map(|x| c * x).collect();
            let a = p.group_norms(&theta).unwrap().values;
            let b = p.group_norms(&scaled).unwrap().values;
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((c.abs() * x - y).abs() <= 1e-9 * (1.0 + y));
            }
        }
    }
}
