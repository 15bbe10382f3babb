//! Dempster–Shafer evidence fusion over the frame {Low, Adequate, High}.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use super::fuzzy::FuzzyLabel;

/// Tolerance on the sum of a mass function.
pub const MASS_SUM_TOLERANCE: f64 = 1e-9;
/// Combination is undefined when `1 - K` is below this.
pub const TOTAL_CONFLICT_EPS: f64 = 1e-12;

/// A subset of the frame, stored as a bitmask indexed by [`FuzzyLabel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FocalSet(u8);

impl FocalSet {
    pub const EMPTY: FocalSet = FocalSet(0);
    pub const THETA: FocalSet = FocalSet(0b111);

    pub fn of(labels: &[FuzzyLabel]) -> Self {
        FocalSet(labels.iter().fold(0, |m, l| m | (1 << l.index())))
    }

    pub fn singleton(label: FuzzyLabel) -> Self {
        Self::of(&[label])
    }

    /// Every subset of the frame, empty set first.
    pub fn all() -> impl Iterator<Item = FocalSet> {
        (0..8u8).map(FocalSet)
    }

    pub fn from_bits(bits: u8) -> Option<Self> {
        (bits < 8).then_some(FocalSet(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn intersect(self, other: FocalSet) -> FocalSet {
        FocalSet(self.0 & other.0)
    }

    pub fn is_subset_of(self, other: FocalSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn labels(self) -> Vec<FuzzyLabel> {
        FuzzyLabel::ALL
            .into_iter()
            .filter(|l| self.0 & (1 << l.index()) != 0)
            .collect()
    }
}

impl fmt::Display for FocalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.labels().iter().map(|l| l.as_str()).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

impl Serialize for FocalSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BbaError {
    #[error("mass {mass} on {set} outside [0, 1]")]
    MassOutOfRange { set: FocalSet, mass: f64 },
    #[error("mass on the empty set must be zero, got {0}")]
    EmptySetMass(f64),
    #[error("masses sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("total conflict between sources (K = {k})")]
    TotalConflict { k: f64 },
}

/// Basic belief assignment: a mass function over subsets of the frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bba {
    masses: BTreeMap<FocalSet, f64>,
}

impl Bba {
    /// Zero masses are dropped; the rest must sum to 1.
    pub fn new(masses: impl IntoIterator<Item = (FocalSet, f64)>) -> Result<Self, BbaError> {
        let mut out: BTreeMap<FocalSet, f64> = BTreeMap::new();
        for (set, mass) in masses {
            if !(0.0..=1.0).contains(&mass) {
                return Err(BbaError::MassOutOfRange { set, mass });
            }
            if set.is_empty() {
                if mass != 0.0 {
                    return Err(BbaError::EmptySetMass(mass));
                }
                continue;
            }
            if mass > 0.0 {
                *out.entry(set).or_insert(0.0) += mass;
            }
        }
        let total: f64 = out.values().sum();
        if (total - 1.0).abs() > MASS_SUM_TOLERANCE {
            return Err(BbaError::NotNormalized(total));
        }
        Ok(Self { masses: out })
    }

    /// Total ignorance: all mass on the whole frame.
    pub fn vacuous() -> Self {
        Self {
            masses: BTreeMap::from([(FocalSet::THETA, 1.0)]),
        }
    }

    /// One source asserting `label` with degree `support`; the rest of the
    /// mass stays on the whole frame.
    pub fn simple_support(label: FuzzyLabel, support: f64) -> Result<Self, BbaError> {
        let support = support.clamp(0.0, 1.0);
        Self::new([
            (FocalSet::singleton(label), support),
            (FocalSet::THETA, 1.0 - support),
        ])
    }

    pub fn mass(&self, set: FocalSet) -> f64 {
        self.masses.get(&set).copied().unwrap_or(0.0)
    }

    pub fn focal_sets(&self) -> impl Iterator<Item = (FocalSet, f64)> + '_ {
        self.masses.iter().map(|(s, m)| (*s, *m))
    }

    pub fn total(&self) -> f64 {
        self.masses.values().sum()
    }

    /// Sum of masses of every subset of `set`.
    pub fn belief(&self, set: FocalSet) -> f64 {
        self.focal_sets()
            .filter(|(s, _)| s.is_subset_of(set))
            .map(|(_, m)| m)
            .sum()
    }

    /// Sum of masses of every set intersecting `set`.
    pub fn plausibility(&self, set: FocalSet) -> f64 {
        self.focal_sets()
            .filter(|(s, _)| !s.intersect(set).is_empty())
            .map(|(_, m)| m)
            .sum()
    }
}

/// Conflict measure `K`: mass the two sources put on disjoint pairs.
pub fn conflict(a: &Bba, b: &Bba) -> f64 {
    let mut k = 0.0;
    for (sa, ma) in a.focal_sets() {
        for (sb, mb) in b.focal_sets() {
            if sa.intersect(sb).is_empty() {
                k += ma * mb;
            }
        }
    }
    k
}

/// Dempster's rule of combination, normalized once by `1 - K`.
pub fn ds_combine(a: &Bba, b: &Bba) -> Result<Bba, BbaError> {
    let mut joint: BTreeMap<FocalSet, f64> = BTreeMap::new();
    let mut k = 0.0;
    for (sa, ma) in a.focal_sets() {
        for (sb, mb) in b.focal_sets() {
            let meet = sa.intersect(sb);
            if meet.is_empty() {
                k += ma * mb;
            } else {
                *joint.entry(meet).or_insert(0.0) += ma * mb;
            }
        }
    }
    let norm = 1.0 - k;
    if norm.abs() < TOTAL_CONFLICT_EPS {
        return Err(BbaError::TotalConflict { k });
    }
    Ok(Bba {
        masses: joint
            .into_iter()
            .map(|(s, m)| (s, m / norm))
            .filter(|(_, m)| *m > 0.0)
            .collect(),
    })
}

/// Folds any number of sources; no source at all yields the vacuous BBA.
pub fn combine_all<'a>(sources: impl IntoIterator<Item = &'a Bba>) -> Result<Bba, BbaError> {
    sources
        .into_iter()
        .try_fold(Bba::vacuous(), |acc, next| ds_combine(&acc, next))
}
