//! Dense tensors, affine paths through input space, and closed z-intervals.

use crate::error::{Error, Result};

/// Dense row-major array of binary64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::ShapeMismatch(format!("zero dimension in shape {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {len} values, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tensor value {v}")));
        }
        Ok(Self { shape, values })
    }

    /// Builds a tensor without validation. Callers guarantee the shape and finiteness invariants.
    pub(crate) fn from_parts(shape: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Self { shape, values }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self::from_parts(shape, vec![0.0; len])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Same values under a different shape with the same element count.
    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.values)
    }
}

/// The affine map `z -> beta + gamma * z`, elementwise over a common shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricTensor {
    beta: Tensor,
    gamma: Tensor,
}

impl ParametricTensor {
    pub fn new(beta: Tensor, gamma: Tensor) -> Result<Self> {
        if beta.shape() != gamma.shape() {
            return Err(Error::ShapeMismatch(format!(
                "beta shape {:?} != gamma shape {:?}",
                beta.shape(),
                gamma.shape()
            )));
        }
        Ok(Self { beta, gamma })
    }

    /// A path that does not move with z.
    pub fn constant(beta: Tensor) -> Self {
        let gamma = Tensor::zeros(beta.shape().to_vec());
        Self { beta, gamma }
    }

    pub(crate) fn from_parts(shape: Vec<usize>, beta: Vec<f64>, gamma: Vec<f64>) -> Self {
        Self {
            beta: Tensor::from_parts(shape.clone(), beta),
            gamma: Tensor::from_parts(shape, gamma),
        }
    }

    pub fn beta(&self) -> &Tensor {
        &self.beta
    }

    pub fn gamma(&self) -> &Tensor {
        &self.gamma
    }

    pub fn shape(&self) -> &[usize] {
        self.beta.shape()
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    /// Evaluates the path at `z`.
    pub fn eval_at(&self, z: f64) -> Tensor {
        let values = self
            .beta
            .values()
            .iter()
            .zip(self.gamma.values())
            .map(|(&b, &g)| b + g * z)
            .collect();
        Tensor::from_parts(self.shape().to_vec(), values)
    }
}

/// Closed interval over the extended reals. The empty interval is the single
/// canonical value `[+inf, -inf]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub const EMPTY: Interval = Interval {
        lo: f64::INFINITY,
        hi: f64::NEG_INFINITY,
    };
    pub const REAL_LINE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    /// `[lo, hi]`, or the empty interval when `lo > hi` or either end is NaN.
    pub fn new(lo: f64, hi: f64) -> Self {
        if lo <= hi {
            Self { lo, hi }
        } else {
            Self::EMPTY
        }
    }

    pub fn at_least(lo: f64) -> Self {
        Self::new(lo, f64::INFINITY)
    }

    pub fn at_most(hi: f64) -> Self {
        Self::new(f64::NEG_INFINITY, hi)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn is_empty(&self) -> bool {
        !(self.lo <= self.hi)
    }

    pub fn contains(&self, z: f64) -> bool {
        self.lo <= z && z <= self.hi
    }

    pub fn length(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.hi - self.lo
        }
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.max(other.lo), self.hi.min(other.hi))
    }

    /// True when every point of `self` lies in `other`.
    pub fn is_subset_of(&self, other: &Interval) -> bool {
        self.is_empty() || (other.lo <= self.lo && self.hi <= other.hi)
    }
}

/// `{z : a ∈ Interval and b ∈ Interval}`.
pub fn intersect(a: Interval, b: Interval) -> Interval {
    a.intersect(&b)
}

/// Sorted union of pairwise-disjoint, non-empty closed intervals.
///
/// Consecutive members satisfy `prev.hi < next.lo`; touching intervals are merged.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalUnion {
    intervals: Vec<Interval>,
}

impl IntervalUnion {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn single(interval: Interval) -> Self {
        union_normalize(vec![interval])
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, z: f64) -> bool {
        // members are sorted, so a binary search finds the only candidate
        let idx = self.intervals.partition_point(|iv| iv.hi < z);
        self.intervals.get(idx).is_some_and(|iv| iv.contains(z))
    }

    /// The member interval containing `z`, if any.
    pub fn component_containing(&self, z: f64) -> Option<Interval> {
        let idx = self.intervals.partition_point(|iv| iv.hi < z);
        self.intervals.get(idx).copied().filter(|iv| iv.contains(z))
    }

    pub fn total_length(&self) -> f64 {
        self.intervals.iter().map(Interval::length).sum()
    }

    pub fn hull(&self) -> Interval {
        match (self.intervals.first(), self.intervals.last()) {
            (Some(first), Some(last)) => Interval::new(first.lo, last.hi),
            _ => Interval::EMPTY,
        }
    }

    pub fn intersect_interval(&self, other: &Interval) -> IntervalUnion {
        IntervalUnion {
            intervals: self
                .intervals
                .iter()
                .map(|iv| iv.intersect(other))
                .filter(|iv| !iv.is_empty())
                .collect(),
        }
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        self.intervals.iter().all(|iv| iv.is_subset_of(other))
    }
}

/// Minimal sorted disjoint representation of the union of `raw`.
pub fn union_normalize(raw: Vec<Interval>) -> IntervalUnion {
    let mut items: Vec<Interval> = raw.into_iter().filter(|iv| !iv.is_empty()).collect();
    items.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let mut merged: Vec<Interval> = Vec::with_capacity(items.len());
    for iv in items {
        match merged.last_mut() {
            Some(last) if iv.lo <= last.hi => last.hi = last.hi.max(iv.hi),
            _ => merged.push(iv),
        }
    }
    IntervalUnion { intervals: merged }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn intersect_examples() {
        assert_eq!(
            intersect(Interval::new(0.0, 2.0), Interval::new(1.0, 3.0)),
            Interval::new(1.0, 2.0)
        );
        assert_eq!(
            intersect(Interval::REAL_LINE, Interval::new(5.0, 7.0)),
            Interval::new(5.0, 7.0)
        );
        let disjoint = intersect(Interval::new(0.0, 1.0), Interval::new(2.0, 3.0));
        assert!(disjoint.is_empty());
        assert_eq!(disjoint, Interval::EMPTY);
    }

    #[test]
    fn normalize_examples() {
        let u = union_normalize(vec![Interval::new(0.0, 1.0), Interval::new(1.0, 2.0)]);
        assert_eq!(u.intervals(), &[Interval::new(0.0, 2.0)]);
        let u = union_normalize(vec![Interval::new(3.0, 4.0), Interval::new(0.0, 1.0)]);
        assert_eq!(u.intervals(), &[Interval::new(0.0, 1.0), Interval::new(3.0, 4.0)]);
        assert!(union_normalize(vec![]).is_empty());
    }

    #[test]
    fn eval_at_examples() {
        let pt = ParametricTensor::new(
            Tensor::new(vec![2], vec![1.0, 2.0]).unwrap(),
            Tensor::new(vec![2], vec![0.0, 1.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(pt.eval_at(3.0).values(), &[1.0, 5.0]);
        assert_eq!(pt.eval_at(0.0), *pt.beta());
        let constant = ParametricTensor::constant(pt.beta().clone());
        assert_eq!(constant.eval_at(-17.5), *pt.beta());
    }

    #[test]
    fn tensor_rejects_bad_input() {
        assert!(matches!(Tensor::new(vec![2, 2], vec![1.0; 3]), Err(Error::ShapeMismatch(_))));
        assert!(matches!(Tensor::new(vec![1], vec![f64::NAN]), Err(Error::NonFinite(_))));
        let a = Tensor::zeros(vec![2]);
        let b = Tensor::zeros(vec![3]);
        assert!(ParametricTensor::new(a, b).is_err());
    }

    #[test]
    fn union_lookup() {
        let u = union_normalize(vec![Interval::new(-3.0, -1.0), Interval::new(2.0, 4.0)]);
        assert!(u.contains(-1.0));
        assert!(!u.contains(0.0));
        assert_eq!(u.component_containing(3.0), Some(Interval::new(2.0, 4.0)));
        assert_eq!(u.component_containing(5.0), None);
        assert_eq!(u.total_length(), 4.0);
    }

    fn arb_interval() -> impl Strategy<Value = Interval> {
        (-20i32..20, 0i32..8).prop_map(|(lo, w)| Interval::new(lo as f64 * 0.5, (lo + w) as f64 * 0.5))
    }

    proptest! {
        #[test]
        fn normalize_preserves_membership(raw in prop::collection::vec(arb_interval(), 0..8), probe in -25.0f64..25.0) {
            let u = union_normalize(raw.clone());
            let expected = raw.iter().any(|iv| iv.contains(probe));
            prop_assert_eq!(u.contains(probe), expected);
            for w in u.intervals().windows(2) {
                prop_assert!(w[0].hi() < w[1].lo());
            }
            // grid points catch membership at shared endpoints too
            for k in -50..=50 {
                let z = k as f64 * 0.25;
                prop_assert_eq!(u.contains(z), raw.iter().any(|iv| iv.contains(z)));
            }
        }

        #[test]
        fn intersect_commutes_and_associates(a in arb_interval(), b in arb_interval(), c in arb_interval()) {
            prop_assert_eq!(intersect(a, b), intersect(b, a));
            prop_assert_eq!(intersect(intersect(a, b), c), intersect(a, intersect(b, c)));
        }
    }
}
