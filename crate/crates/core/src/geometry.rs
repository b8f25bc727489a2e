//! Sparse linear array geometries, subarray partitions and difference-coarray
//! statistics.
//!
//! Positions are integers in units of the minimum inter-sensor spacing. A
//! [`SubarrayLayout`] always stores its subarrays in shared (absolute)
//! coordinates, so the union of the subarrays is the physical array.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Ordered set of integer sensor positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SensorSet(Vec<i64>);

impl SensorSet {
    /// Builds a set from strictly ascending, non-negative positions.
    pub fn new(positions: Vec<i64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidArgument("sensor set is empty".into()));
        }
        if positions[0] < 0 {
            return Err(Error::InvalidArgument("sensor positions must be non-negative".into()));
        }
        if positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "sensor positions must be strictly ascending".into(),
            ));
        }
        Ok(SensorSet(positions))
    }

    /// Sorts and deduplicates arbitrary input before validating it.
    pub fn from_unsorted(mut positions: Vec<i64>) -> Result<Self> {
        positions.sort_unstable();
        positions.dedup();
        Self::new(positions)
    }

    pub fn positions(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> i64 {
        self.0[0]
    }

    pub fn max(&self) -> i64 {
        *self.0.last().unwrap()
    }

    /// Aperture `max - min`.
    pub fn aperture(&self) -> i64 {
        self.max() - self.min()
    }

    pub fn is_canonical(&self) -> bool {
        self.min() == 0
    }

    /// Same geometry shifted so the first sensor sits at 0.
    pub fn canonical(&self) -> SensorSet {
        self.translate(-self.min())
    }

    pub fn translate(&self, by: i64) -> SensorSet {
        SensorSet(self.0.iter().map(|p| p + by).collect())
    }

    pub fn coarray(&self) -> CoarrayProfile {
        difference_coarray(self)
    }
}

impl fmt::Display for SensorSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, "}}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayoutKind {
    TypeI,
    TypeII { mu: i64 },
    Custom,
}

/// Partition of a sparse linear array into ordered, disjoint subarrays.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubarrayLayout {
    subarrays: Vec<SensorSet>,
    kind: LayoutKind,
}

impl SubarrayLayout {
    /// Custom layout from subarrays in shared coordinates. Subarrays must be
    /// ordered: every sensor of subarray `i` lies left of every sensor of `j > i`.
    pub fn custom(subarrays: Vec<SensorSet>) -> Result<Self> {
        Self::with_kind(subarrays, LayoutKind::Custom)
    }

    fn with_kind(subarrays: Vec<SensorSet>, kind: LayoutKind) -> Result<Self> {
        if subarrays.is_empty() {
            return Err(Error::InvalidArgument("layout needs at least one subarray".into()));
        }
        for w in subarrays.windows(2) {
            if w[0].max() >= w[1].min() {
                return Err(Error::InvalidArgument(format!(
                    "subarrays {} and {} overlap or are out of order",
                    w[0], w[1]
                )));
            }
        }
        Ok(SubarrayLayout { subarrays, kind })
    }

    /// Single-subarray layout (fully calibrated array).
    pub fn single(array: SensorSet) -> Self {
        SubarrayLayout { subarrays: vec![array], kind: LayoutKind::TypeI }
    }

    pub fn subarrays(&self) -> &[SensorSet] {
        &self.subarrays
    }

    pub fn kind(&self) -> LayoutKind {
        self.kind
    }

    pub fn num_subarrays(&self) -> usize {
        self.subarrays.len()
    }

    pub fn mu(&self) -> Option<i64> {
        match self.kind {
            LayoutKind::TypeII { mu } => Some(mu),
            _ => None,
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.subarrays.iter().map(SensorSet::len).collect()
    }

    pub fn total_sensors(&self) -> usize {
        self.subarrays.iter().map(SensorSet::len).sum()
    }

    /// Row offset of each subarray inside the stacked full-array vector.
    pub fn row_offsets(&self) -> Vec<usize> {
        self.subarrays
            .iter()
            .scan(0, |acc, s| {
                let start = *acc;
                *acc += s.len();
                Some(start)
            })
            .collect()
    }

    /// Union of all subarrays.
    pub fn full_array(&self) -> SensorSet {
        SensorSet(self.subarrays.iter().flat_map(|s| s.0.iter().copied()).collect())
    }

    /// Subarray `l` expressed in its own coordinates (first sensor at 0).
    pub fn local(&self, l: usize) -> SensorSet {
        self.subarrays[l].canonical()
    }

    /// Displacement of subarray `l` relative to the reference subarray.
    pub fn displacement(&self, l: usize) -> i64 {
        self.subarrays[l].min() - self.subarrays[0].min()
    }
}

/// Two-level nested array `{0..n1-1} ∪ {n(n1+1)-1 : n = 1..n2}`.
pub fn generate_naq2(n1: usize, n2: usize) -> Result<SensorSet> {
    if n1 < 1 || n2 < 1 {
        return Err(Error::InvalidArgument(format!(
            "nested array needs n1 >= 1 and n2 >= 1 (got {n1}, {n2})"
        )));
    }
    let inner = (0..n1 as i64).collect::<Vec<_>>();
    let outer = (1..=n2 as i64).map(|n| n * (n1 as i64 + 1) - 1);
    // For n1 >= 1 the outer level starts at n1, right after the dense part.
    SensorSet::new(inner.into_iter().chain(outer).collect())
}

// Restricted (hole-free) minimum redundancy arrays from the literature.
const MRA_TABLE: &[&[i64]] = &[
    &[0, 1],
    &[0, 1, 3],
    &[0, 1, 4, 6],
    &[0, 1, 4, 7, 9],
    &[0, 1, 6, 9, 11, 13],
    &[0, 1, 4, 10, 12, 15, 17],
    &[0, 1, 4, 10, 16, 18, 21, 23],
    &[0, 1, 4, 10, 16, 22, 24, 27, 29],
    &[0, 1, 3, 6, 13, 20, 27, 31, 35, 36],
];

/// Restricted minimum redundancy array with `n` sensors, `n` in 2..=10.
pub fn generate_mra(n: usize) -> Result<SensorSet> {
    if !(2..=10).contains(&n) {
        return Err(Error::UnsupportedSize(n));
    }
    SensorSet::new(MRA_TABLE[n - 2].to_vec())
}

/// Seven-sensor second-order super nested array.
pub fn snaq2_7() -> SensorSet {
    SensorSet(vec![0, 2, 3, 6, 9, 13, 14])
}

/// Type-I layout: consecutive runs of `sizes` sensors taken from `array`.
pub fn split_type1(array: &SensorSet, sizes: &[usize]) -> Result<SubarrayLayout> {
    let total: usize = sizes.iter().sum();
    if total != array.len() {
        return Err(Error::SizeMismatch { expected: array.len(), got: total });
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::InvalidArgument("subarray sizes must be positive".into()));
    }
    let mut start = 0;
    let mut subs = Vec::with_capacity(sizes.len());
    for &s in sizes {
        subs.push(SensorSet(array.0[start..start + s].to_vec()));
        start += s;
    }
    SubarrayLayout::with_kind(subs, LayoutKind::TypeI)
}

/// Type-II layout: `l` copies of `reference`, each shifted by `mu + kappa`
/// from the previous one.
pub fn build_type2(reference: &SensorSet, l: usize, mu: i64) -> Result<SubarrayLayout> {
    if !reference.is_canonical() {
        return Err(Error::InvalidArgument("type-II reference must start at 0".into()));
    }
    if l < 1 {
        return Err(Error::InvalidArgument("need at least one subarray".into()));
    }
    if mu < 1 {
        return Err(Error::InvalidArgument(format!("mu must be >= 1 (got {mu})")));
    }
    let delta = mu + reference.aperture();
    let subs = (0..l as i64).map(|i| reference.translate(i * delta)).collect();
    SubarrayLayout::with_kind(subs, LayoutKind::TypeII { mu })
}

/// Difference set, central contiguous segment and weight function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoarrayProfile {
    pub diff_set: Vec<i64>,
    pub central_set: Vec<i64>,
    pub weight: BTreeMap<i64, usize>,
    pub dof: usize,
    pub udof: usize,
}

impl CoarrayProfile {
    /// Largest lag `m*` with `{-m*..m*}` contained in the difference set.
    pub fn max_contiguous_lag(&self) -> i64 {
        (self.udof as i64 - 1) / 2
    }

    /// Smoothed covariance dimension `(udof + 1) / 2`.
    pub fn smoothing_size(&self) -> usize {
        (self.udof + 1) / 2
    }

    pub fn weight_at(&self, m: i64) -> usize {
        self.weight.get(&m).copied().unwrap_or(0)
    }

    pub fn has_holes(&self) -> bool {
        self.dof != self.udof
    }

    /// Number of lags in `D \ U`, which coarray processing discards.
    pub fn discarded_lags(&self) -> usize {
        self.dof - self.udof
    }
}

pub fn difference_coarray(array: &SensorSet) -> CoarrayProfile {
    let mut weight = BTreeMap::new();
    for &a in array.positions() {
        for &b in array.positions() {
            *weight.entry(a - b).or_insert(0usize) += 1;
        }
    }
    let diff_set: Vec<i64> = weight.keys().copied().collect();
    let mut m_star = 0;
    while weight.contains_key(&(m_star + 1)) {
        m_star += 1;
    }
    let central_set: Vec<i64> = (-m_star..=m_star).collect();
    CoarrayProfile {
        dof: diff_set.len(),
        udof: central_set.len(),
        diff_set,
        central_set,
        weight,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofRegime {
    Overlapping,
    Disjoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofBound {
    pub bound: usize,
    pub regime: DofRegime,
}

/// Coarray DoF of an `l`-subarray type-II array built from a reference with
/// `sdof` coarray lags and aperture `kappa`.
///
/// Upper bound when `mu <= kappa` (tight for hole-free references), exact
/// value when `mu > kappa`.
pub fn theorem1_bound(sdof: usize, l: usize, mu: i64, kappa: i64) -> Result<DofBound> {
    if mu < 1 {
        return Err(Error::InvalidArgument(format!("mu must be >= 1 (got {mu})")));
    }
    if sdof % 2 == 0 {
        return Err(Error::InvalidArgument(format!("sDoF must be odd (got {sdof})")));
    }
    if l < 1 {
        return Err(Error::InvalidArgument("need at least one subarray".into()));
    }
    if mu <= kappa {
        let bound = l * (sdof - 1) + 2 * (l - 1) * mu as usize + 1;
        Ok(DofBound { bound, regime: DofRegime::Overlapping })
    } else {
        Ok(DofBound { bound: (2 * l - 1) * sdof, regime: DofRegime::Disjoint })
    }
}

/// Largest number of sources the coarray estimators can resolve on `layout`:
/// `max_l (udof_l - 1) / 2`.
pub fn max_identifiable_sources(layout: &SubarrayLayout) -> Result<usize> {
    let mut best = 0;
    for (l, sub) in layout.subarrays().iter().enumerate() {
        let udof = sub.coarray().udof;
        if udof < 3 {
            return Err(Error::DegenerateGeometry(format!(
                "subarray {} has UDoF {udof} < 3",
                l + 1
            )));
        }
        best = best.max((udof - 1) / 2);
    }
    Ok(best)
}
