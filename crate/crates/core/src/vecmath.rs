//! Sparse vectors over hashed 64-bit dimensions.
//!
//! Feature vectors live in a 2^64-dimensional space and are represented as
//! sorted maps from dimension to a non-zero scalar weight. The algebra here
//! (addition, scaling, dot product, cosine similarity) is generic over the
//! scalar type via [`num_traits::Float`]; the crate root pins the `f64`
//! instantiation as [`FeatureVector`](crate::FeatureVector).
//!
//! Stored weights are never zero: insertion drops zeros and addition removes
//! entries that cancel, so `is_empty` ⇔ the vector is the zero vector.

use std::collections::BTreeMap;

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VecError {
    /// Cosine similarity is undefined when either operand has zero norm.
    #[error("cosine similarity is undefined for a zero-norm vector")]
    ZeroNorm,
}

/// Sparse vector: sorted map dimension → non-zero weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct SparseVec<S> {
    entries: BTreeMap<u64, S>,
}

impl<S: Float> SparseVec<S> {
    pub fn new() -> Self {
        SparseVec { entries: BTreeMap::new() }
    }

    /// Builds a vector from (dimension, weight) pairs, summing duplicates
    /// and dropping zeros.
    pub fn from_entries(entries: impl IntoIterator<Item = (u64, S)>) -> Self {
        let mut v = SparseVec::new();
        for (dim, w) in entries {
            v.add_to(dim, w);
        }
        v
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of non-zero entries.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, dim: u64) -> S {
        self.entries.get(&dim).copied().unwrap_or_else(S::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, S)> + '_ {
        self.entries.iter().map(|(d, w)| (*d, *w))
    }

    pub fn dims(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.keys().copied()
    }

    /// Adds `w` into the entry at `dim`, removing the entry if it cancels to
    /// exactly zero.
    pub fn add_to(&mut self, dim: u64, w: S) {
        if w == S::zero() {
            return;
        }
        let entry = self.entries.entry(dim).or_insert_with(S::zero);
        *entry = *entry + w;
        if *entry == S::zero() {
            self.entries.remove(&dim);
        }
    }

    /// Entry-wise sum: `self += other`.
    pub fn add_assign(&mut self, other: &SparseVec<S>) {
        for (dim, w) in other.iter() {
            self.add_to(dim, w);
        }
    }

    pub fn added(&self, other: &SparseVec<S>) -> SparseVec<S> {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    /// Entry-wise scaling; scaling by zero yields the empty vector.
    pub fn scaled(&self, s: S) -> SparseVec<S> {
        let mut out = SparseVec::new();
        for (dim, w) in self.iter() {
            out.add_to(dim, w * s);
        }
        out
    }

    /// Dot product by merge-join over the two sorted entry maps, summing in
    /// ascending dimension order (so the result is bit-reproducible).
    pub fn dot(&self, other: &SparseVec<S>) -> S {
        let mut sum = S::zero();
        let mut a = self.entries.iter();
        let mut b = other.entries.iter();
        let (mut na, mut nb) = (a.next(), b.next());
        while let (Some((da, wa)), Some((db, wb))) = (na, nb) {
            match da.cmp(db) {
                std::cmp::Ordering::Less => na = a.next(),
                std::cmp::Ordering::Greater => nb = b.next(),
                std::cmp::Ordering::Equal => {
                    sum = sum + *wa * *wb;
                    na = a.next();
                    nb = b.next();
                }
            }
        }
        sum
    }

    /// Euclidean norm.
    pub fn norm(&self) -> S {
        self.dot(self).sqrt()
    }

    /// Cosine similarity in [0, 1] (weights are non-negative by
    /// construction throughout this crate).
    ///
    /// Vectors with identical entry maps compare as exactly one, keeping
    /// self-similarity exact under thresholds of 1.0; otherwise the quotient
    /// dot/(‖a‖·‖b‖) is clamped into [0, 1] against floating-point drift.
    pub fn cosine(&self, other: &SparseVec<S>) -> Result<S, VecError> {
        if self.is_empty() || other.is_empty() {
            return Err(VecError::ZeroNorm);
        }
        if self.entries == other.entries {
            return Ok(S::one());
        }
        let q = self.dot(other) / (self.norm() * other.norm());
        Ok(q.max(S::zero()).min(S::one()))
    }
}

impl<S: Float> FromIterator<(u64, S)> for SparseVec<S> {
    fn from_iter<I: IntoIterator<Item = (u64, S)>>(iter: I) -> Self {
        SparseVec::from_entries(iter)
    }
}
