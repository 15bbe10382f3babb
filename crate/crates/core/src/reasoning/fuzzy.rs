//! Triangular fuzzy sets and argmax classification.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Linguistic labels; also the frame of discernment for evidence fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FuzzyLabel {
    Low,
    Adequate,
    High,
}

impl FuzzyLabel {
    pub const ALL: [FuzzyLabel; 3] = [FuzzyLabel::Low, FuzzyLabel::Adequate, FuzzyLabel::High];

    pub fn as_str(self) -> &'static str {
        match self {
            FuzzyLabel::Low => "Low",
            FuzzyLabel::Adequate => "Adequate",
            FuzzyLabel::High => "High",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for FuzzyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FuzzyLabel {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FuzzyLabel::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ConfigError::invalid("fuzzy label", format!("{s:?}")))
    }
}

/// Triangle `(a, b, c)` with `a <= b <= c`. `a == b` gives a left shoulder
/// (flat at 1 below `b`), `b == c` a right shoulder (flat at 1 above `b`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FuzzySet {
    pub label: FuzzyLabel,
    a: f64,
    b: f64,
    c: f64,
}

impl FuzzySet {
    pub fn new(label: FuzzyLabel, a: f64, b: f64, c: f64) -> Result<Self, ConfigError> {
        if !(a.is_finite() && b.is_finite() && c.is_finite() && a <= b && b <= c) {
            return Err(ConfigError::invalid(
                "fuzzy set",
                format!("{label} ({a}, {b}, {c}) needs a <= b <= c"),
            ));
        }
        Ok(Self { label, a, b, c })
    }

    pub fn center(&self) -> f64 {
        self.b
    }

    pub fn shape(&self) -> (f64, f64, f64) {
        (self.a, self.b, self.c)
    }

    pub fn membership(&self, x: f64) -> f64 {
        let (a, b, c) = (self.a, self.b, self.c);
        let left_shoulder = a == b;
        let right_shoulder = b == c;
        if x < b {
            if left_shoulder {
                1.0
            } else if x <= a {
                0.0
            } else {
                (x - a) / (b - a)
            }
        } else if x > b {
            if right_shoulder {
                1.0
            } else if x >= c {
                0.0
            } else {
                (c - x) / (c - b)
            }
        } else {
            1.0
        }
    }
}

impl<'de> Deserialize<'de> for FuzzySet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            label: FuzzyLabel,
            shape: [f64; 3],
        }
        let raw = Raw::deserialize(deserializer)?;
        let [a, b, c] = raw.shape;
        FuzzySet::new(raw.label, a, b, c).map_err(serde::de::Error::custom)
    }
}

pub fn fuzzy_membership(x: f64, set: &FuzzySet) -> f64 {
    set.membership(x)
}

/// Winning label with its degree, plus every set's degree in input order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub label: FuzzyLabel,
    pub membership: f64,
    pub memberships: Vec<(FuzzyLabel, f64)>,
}

impl Classification {
    pub fn degree(&self, label: FuzzyLabel) -> f64 {
        self.memberships
            .iter()
            .find(|(l, _)| *l == label)
            .map(|(_, m)| *m)
            .unwrap_or(0.0)
    }
}

/// Argmax of the degrees; ties go to the set with the lowest center.
pub(crate) fn argmax_by_center(degrees: &[(FuzzyLabel, f64, f64)]) -> Option<(FuzzyLabel, f64)> {
    let mut best: Option<(FuzzyLabel, f64, f64)> = None;
    for &(label, mu, center) in degrees {
        best = match best {
            None => Some((label, mu, center)),
            Some((_, bm, bc)) if mu > bm || (mu == bm && center < bc) => Some((label, mu, center)),
            keep => keep,
        };
    }
    best.map(|(l, m, _)| (l, m))
}

/// Returns `None` only when `sets` is empty.
pub fn fuzzy_classify(x: f64, sets: &[FuzzySet]) -> Option<Classification> {
    let degrees: Vec<(FuzzyLabel, f64, f64)> = sets
        .iter()
        .map(|s| (s.label, s.membership(x), s.center()))
        .collect();
    let (label, membership) = argmax_by_center(&degrees)?;
    Some(Classification {
        label,
        membership,
        memberships: degrees.iter().map(|&(l, m, _)| (l, m)).collect(),
    })
}

/// Low (0, 0, 30), Adequate (20, 50, 80), High (60, 100, 100).
pub fn soil_moisture_sets() -> Vec<FuzzySet> {
    vec![
        FuzzySet::new(FuzzyLabel::Low, 0.0, 0.0, 30.0).unwrap(),
        FuzzySet::new(FuzzyLabel::Adequate, 20.0, 50.0, 80.0).unwrap(),
        FuzzySet::new(FuzzyLabel::High, 60.0, 100.0, 100.0).unwrap(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(label: FuzzyLabel) -> FuzzySet {
        soil_moisture_sets()
            .into_iter()
            .find(|s| s.label == label)
            .unwrap()
    }

    #[test]
    fn low_shoulder_by_hand() {
        let low = set(FuzzyLabel::Low);
        // (30 - 23.45) / 30
        assert!((low.membership(23.45) - 0.218_333_333_333).abs() < 1e-9);
        assert_eq!(low.membership(0.0), 1.0);
        assert_eq!(low.membership(-5.0), 1.0);
        assert_eq!(low.membership(30.0), 0.0);
        assert_eq!(low.membership(45.0), 0.0);
    }

    #[test]
    fn adequate_triangle_by_hand() {
        let adequate = set(FuzzyLabel::Adequate);
        assert_eq!(adequate.membership(50.0), 1.0);
        // (23.45 - 20) / 30
        assert!((adequate.membership(23.45) - 0.115).abs() < 1e-12);
        assert!((adequate.membership(65.0) - 0.5).abs() < 1e-12);
        assert_eq!(adequate.membership(20.0), 0.0);
        assert_eq!(adequate.membership(80.0), 0.0);
    }

    #[test]
    fn high_shoulder_by_hand() {
        let high = set(FuzzyLabel::High);
        assert_eq!(high.membership(100.0), 1.0);
        assert_eq!(high.membership(60.0), 0.0);
        assert!((high.membership(80.0) - 0.5).abs() < 1e-12);
        assert_eq!(high.membership(120.0), 1.0);
    }

    #[test]
    fn classify_dry_soil_as_low() {
        let c = fuzzy_classify(23.45, &soil_moisture_sets()).unwrap();
        assert_eq!(c.label, FuzzyLabel::Low);
        assert!(c.degree(FuzzyLabel::Low) > c.degree(FuzzyLabel::Adequate));
        assert!(c.degree(FuzzyLabel::Adequate) > c.degree(FuzzyLabel::High));
        assert_eq!(c.degree(FuzzyLabel::High), 0.0);
    }

    #[test]
    fn classify_peak() {
        let c = fuzzy_classify(50.0, &soil_moisture_sets()).unwrap();
        assert_eq!((c.label, c.membership), (FuzzyLabel::Adequate, 1.0));
    }

    #[test]
    fn tie_goes_to_lower_center() {
        // (30 - x)/30 = (x - 20)/30 at x = 25, both 1/6.
        let c = fuzzy_classify(25.0, &soil_moisture_sets()).unwrap();
        assert_eq!(c.degree(FuzzyLabel::Low), c.degree(FuzzyLabel::Adequate));
        assert!((c.membership - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(c.label, FuzzyLabel::Low);
        // Order of the input list must not matter.
        let mut reversed = soil_moisture_sets();
        reversed.reverse();
        assert_eq!(
            fuzzy_classify(25.0, &reversed).unwrap().label,
            FuzzyLabel::Low
        );
    }

    #[test]
    fn rejects_unordered_shape() {
        assert!(FuzzySet::new(FuzzyLabel::Low, 10.0, 5.0, 20.0).is_err());
        assert!(serde_json::from_str::<FuzzySet>(r#"{"label":"Low","shape":[3,2,1]}"#).is_err());
    }

    #[test]
    fn empty_sets_have_no_classification() {
        assert!(fuzzy_classify(1.0, &[]).is_none());
    }

    proptest! {
        #[test]
        fn memberships_stay_in_unit_interval(x in -1e3f64..1e3, a in -50f64..50.0, w1 in 0f64..40.0, w2 in 0f64..40.0) {
            let s = FuzzySet::new(FuzzyLabel::Adequate, a, a + w1, a + w1 + w2).unwrap();
            let m = s.membership(x);
            prop_assert!((0.0..=1.0).contains(&m));
        }

        #[test]
        fn argmax_is_scale_invariant(x in -10f64..110.0, k in 0.01f64..100.0) {
            let degrees: Vec<_> = soil_moisture_sets().iter().map(|s| (s.label, s.membership(x), s.center())).collect();
            let scaled: Vec<_> = degrees.iter().map(|&(l, m, c)| (l, m * k, c)).collect();
            prop_assert_eq!(argmax_by_center(&degrees).unwrap().0, argmax_by_center(&scaled).unwrap().0);
        }
    }
}
