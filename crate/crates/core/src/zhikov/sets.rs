use serde::{Deserialize, Serialize};

pub const SET_SCHEMA: &str = "hcband.spectral-set/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SetLabel {
    #[serde(rename = "sigma_A0")]
    SigmaA0,
    #[serde(rename = "sigma_Ahom")]
    SigmaAhom,
    #[serde(rename = "G")]
    G,
}

/// Number of nonnegative eigenvalues of the β-matrix (or its supremum
/// counterpart) at one λ; `None` where λ sits inside a pole guard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSample {
    pub lambda: f64,
    pub count: Option<usize>,
}

/// A finite union of closed intervals and isolated points in `[0, λ_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSet {
    #[serde(default = "set_schema")]
    pub schema: String,
    pub label: SetLabel,
    pub lambda_max: f64,
    pub intervals: Vec<[f64; 2]>,
    pub points: Vec<f64>,
    #[serde(default)]
    pub annotation: Vec<BandSample>,
}

fn set_schema() -> String {
    SET_SCHEMA.into()
}

impl SpectralSet {
    pub fn new(label: SetLabel, lambda_max: f64, intervals: Vec<[f64; 2]>, points: Vec<f64>) -> Self {
        let mut s = Self { schema: SET_SCHEMA.into(), label, lambda_max, intervals, points, annotation: Vec::new() };
        s.normalize();
        s
    }

    /// Clips to `[0, λ_max]`, sorts, merges overlapping or touching
    /// intervals, and drops points covered by intervals.
    pub fn normalize(&mut self) {
        let lm = self.lambda_max;
        let mut iv: Vec<[f64; 2]> = self
            .intervals
            .iter()
            .filter(|i| i[0] <= i[1] && i[1] >= 0.0 && i[0] <= lm)
            .map(|i| [i[0].max(0.0), i[1].min(lm)])
            .collect();
        iv.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let mut merged: Vec<[f64; 2]> = Vec::with_capacity(iv.len());
        for i in iv {
            match merged.last_mut() {
                Some(last) if i[0] <= last[1] => last[1] = last[1].max(i[1]),
                _ => merged.push(i),
            }
        }
        let mut pts: Vec<f64> = self
            .points
            .iter()
            .copied()
            .filter(|&p| (0.0..=lm).contains(&p) && !merged.iter().any(|i| i[0] <= p && p <= i[1]))
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        self.intervals = merged;
        self.points = pts;
    }

    pub fn union(&self, other: &SpectralSet, label: SetLabel) -> SpectralSet {
        let mut iv = self.intervals.clone();
        iv.extend_from_slice(&other.intervals);
        let mut pts = self.points.clone();
        pts.extend_from_slice(&other.points);
        SpectralSet::new(label, self.lambda_max.max(other.lambda_max), iv, pts)
    }

    pub fn distance(&self, lambda: f64) -> f64 {
        let di = self.intervals.iter().map(|i| {
            if lambda < i[0] {
                i[0] - lambda
            } else if lambda > i[1] {
                lambda - i[1]
            } else {
                0.0
            }
        });
        let dp = self.points.iter().map(|p| (p - lambda).abs());
        di.chain(dp).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, lambda: f64, tol: f64) -> bool {
        self.distance(lambda) <= tol
    }

    /// Every interval and point of `self` lies in `other` up to `tol`.
    pub fn is_subset_of(&self, other: &SpectralSet, tol: f64) -> bool {
        let widened: Vec<[f64; 2]> = other.intervals.iter().map(|i| [i[0] - tol, i[1] + tol]).collect();
        let in_other = |a: f64, b: f64| {
            widened.iter().any(|w| w[0] <= a && b <= w[1]) || (b - a <= 2.0 * tol && other.contains(0.5 * (a + b), tol))
        };
        self.intervals.iter().all(|i| in_other(i[0], i[1])) && self.points.iter().all(|&p| other.contains(p, tol))
    }

    /// Total length of the intervals.
    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|i| i[1] - i[0]).sum()
    }

    /// Open gaps: the complement in `[0, λ_max]` of the intervals, with
    /// isolated points splitting gaps.
    pub fn gaps(&self) -> Vec<[f64; 2]> {
        let mut cuts: Vec<[f64; 2]> = self.intervals.clone();
        cuts.extend(self.points.iter().map(|&p| [p, p]));
        cuts.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let mut out = Vec::new();
        let mut start = 0.0;
        for c in cuts {
            if c[0] > start {
                out.push([start, c[0]]);
            }
            start = f64::max(start, c[1]);
        }
        if start < self.lambda_max {
            out.push([start, self.lambda_max]);
        }
        out
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn from_json_str(s: &str) -> crate::Result<Self> {
        let set: SpectralSet = serde_json::from_str(s).map_err(|e| crate::Error::parse("spectral set", e))?;
        if set.schema != SET_SCHEMA {
            return Err(crate::Error::parse("spectral set", format!("unknown schema {:?}", set.schema)));
        }
        if !(set.lambda_max >= 0.0 && set.lambda_max.is_finite()) {
            return Err(crate::Error::parse("spectral set", "lambda_max must be finite and nonnegative"));
        }
        let sorted = set.intervals.windows(2).all(|w| w[0][1] < w[1][0]);
        let valid = set
            .intervals
            .iter()
            .all(|i| i[0].is_finite() && i[1].is_finite() && 0.0 <= i[0] && i[0] <= i[1] && i[1] <= set.lambda_max);
        if !sorted || !valid || set.points.iter().any(|p| !p.is_finite()) {
            return Err(crate::Error::parse("spectral set", "intervals must be sorted, disjoint and inside [0, lambda_max]"));
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn merge_and_gaps() {
        let s = SpectralSet::new(SetLabel::G, 10.0, vec![[2.0, 3.0], [1.0, 2.5], [5.0, 12.0]], vec![4.0, 2.2, 0.5]);
        assert_eq!(s.intervals, vec![[1.0, 3.0], [5.0, 10.0]]);
        assert_eq!(s.points, vec![0.5, 4.0]);
        assert_eq!(s.gaps(), vec![[0.0, 0.5], [0.5, 1.0], [3.0, 4.0], [4.0, 5.0]]);
        assert_eq!(s.distance(3.5), 0.5);
        let t = SpectralSet::new(SetLabel::G, 10.0, vec![[0.0, 3.5], [4.5, 10.0]], vec![4.0]);
        assert!(s.is_subset_of(&t, 0.0));
        assert!(!t.is_subset_of(&s, 0.0));
        let back = SpectralSet::from_json_str(&s.to_json_string()).unwrap();
        assert_eq!(back, s);
    }

    proptest! {
        #[test]
        fn normalized_sets_are_sorted_disjoint(raw in prop::collection::vec((0.0f64..20.0, 0.0f64..3.0), 0..12)) {
            let iv: Vec<[f64; 2]> = raw.iter().map(|&(a, w)| [a, a + w]).collect();
            let s = SpectralSet::new(SetLabel::SigmaA0, 15.0, iv.clone(), vec![]);
            prop_assert!(s.intervals.windows(2).all(|w| w[0][1] < w[1][0]));
            prop_assert!(s.intervals.iter().all(|i| 0.0 <= i[0] && i[0] <= i[1] && i[1] <= 15.0));
            // union is idempotent and a superset
            let u = s.union(&s, SetLabel::G);
            prop_assert_eq!(&u.intervals, &s.intervals);
            for i in iv.iter().filter(|i| i[0] <= 15.0) {
                prop_assert!(s.contains(i[0], 0.0));
            }
        }
    }
}
