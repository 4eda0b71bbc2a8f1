//! Time labels and ordered sets of times.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CombError, Result};

/// A time label. Labels are ordered naturally: digit runs compare as numbers,
/// so `t2 < t10`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimeLabel(String);

impl TimeLabel {
    pub fn new(s: impl Into<String>) -> Self {
        TimeLabel(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for TimeLabel {
    fn from(s: &str) -> Self {
        TimeLabel(s.to_string())
    }
}

impl From<String> for TimeLabel {
    fn from(s: String) -> Self {
        TimeLabel(s)
    }
}

impl fmt::Display for TimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn chunks(s: &str) -> Vec<(bool, &str)> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = s.as_bytes();
    while start < bytes.len() {
        let digit = bytes[start].is_ascii_digit();
        let mut end = start;
        while end < bytes.len() && bytes[end].is_ascii_digit() == digit {
            end += 1;
        }
        out.push((digit, &s[start..end]));
        start = end;
    }
    out
}

fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (ca, cb) = (chunks(a), chunks(b));
    for ((da, sa), (db, sb)) in ca.iter().zip(&cb) {
        let ord = match (da, db) {
            (true, true) => {
                let ta = sa.trim_start_matches('0');
                let tb = sb.trim_start_matches('0');
                ta.len().cmp(&tb.len()).then_with(|| ta.cmp(tb))
            }
            _ => sa.cmp(sb),
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    ca.len().cmp(&cb.len()).then_with(|| a.cmp(b))
}

impl Ord for TimeLabel {
    fn cmp(&self, other: &Self) -> Ordering {
        natural_cmp(&self.0, &other.0)
    }
}

impl PartialOrd for TimeLabel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A finite, strictly increasing list of distinct times.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<TimeLabel>", into = "Vec<TimeLabel>")]
pub struct TimeSet(Vec<TimeLabel>);

impl TryFrom<Vec<TimeLabel>> for TimeSet {
    type Error = CombError;

    fn try_from(v: Vec<TimeLabel>) -> Result<Self> {
        TimeSet::new(v)
    }
}

impl From<TimeSet> for Vec<TimeLabel> {
    fn from(t: TimeSet) -> Self {
        t.0
    }
}

impl TimeSet {
    /// Labels must already be strictly increasing.
    pub fn new<L: Into<TimeLabel>>(labels: impl IntoIterator<Item = L>) -> Result<Self> {
        let v: Vec<TimeLabel> = labels.into_iter().map(Into::into).collect();
        if let Some(w) = v.windows(2).find(|w| w[0] >= w[1]) {
            return Err(CombError::InvalidTimeSet(format!(
                "labels must be strictly increasing, found {} before {}",
                w[0], w[1]
            )));
        }
        Ok(TimeSet(v))
    }

    /// Sorts the labels; duplicates are rejected.
    pub fn from_unordered<L: Into<TimeLabel>>(labels: impl IntoIterator<Item = L>) -> Result<Self> {
        let mut v: Vec<TimeLabel> = labels.into_iter().map(Into::into).collect();
        v.sort();
        if let Some(w) = v.windows(2).find(|w| w[0] == w[1]) {
            return Err(CombError::InvalidTimeSet(format!(
                "duplicate time {}",
                w[0]
            )));
        }
        Ok(TimeSet(v))
    }

    /// `t1, …, tk`.
    pub fn standard(k: usize) -> Self {
        TimeSet((1..=k).map(|i| TimeLabel(format!("t{i}"))).collect())
    }

    /// Parses a comma-separated list such as `t1,t3`.
    pub fn parse(s: &str) -> Result<Self> {
        let labels: Vec<&str> = s
            .split(',')
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        Self::from_unordered(labels)
    }

    pub fn empty() -> Self {
        TimeSet(Vec::new())
    }

    pub fn labels(&self) -> &[TimeLabel] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TimeLabel> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, t: &TimeLabel) -> bool {
        self.0.binary_search(t).is_ok()
    }

    pub fn position(&self, t: &TimeLabel) -> Option<usize> {
        self.0.binary_search(t).ok()
    }

    pub fn is_subset_of(&self, other: &TimeSet) -> bool {
        self.0.iter().all(|t| other.contains(t))
    }

    /// Times in `self` but not in `other`.
    pub fn difference(&self, other: &TimeSet) -> TimeSet {
        TimeSet(
            self.0
                .iter()
                .filter(|t| !other.contains(t))
                .cloned()
                .collect(),
        )
    }

    /// Every nonempty subset, ordered by size then lexicographically.
    pub fn nonempty_subsets(&self) -> Vec<TimeSet> {
        let n = self.0.len();
        let mut out: Vec<TimeSet> = (1u64..(1u64 << n))
            .map(|mask| {
                TimeSet(
                    (0..n)
                        .filter(|i| mask & (1 << i) != 0)
                        .map(|i| self.0[i].clone())
                        .collect(),
                )
            })
            .collect();
        out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        out
    }
}

impl fmt::Display for TimeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{t}")?;
        }
        write!(f, "}}")
    }
}

impl<'a> IntoIterator for &'a TimeSet {
    type Item = &'a TimeLabel;
    type IntoIter = std::slice::Iter<'a, TimeLabel>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn natural_order() {
        let mut v: Vec<TimeLabel> = ["t10", "t2", "t1", "a", "t02"]
            .iter()
            .map(|&s| s.into())
            .collect();
        v.sort();
        let s: Vec<&str> = v.iter().map(|t| t.as_str()).collect();
        assert_eq!(s, vec!["a", "t1", "t02", "t2", "t10"]);
    }

    #[test]
    fn strictly_increasing_required() {
        assert!(TimeSet::new(["t1", "t2"]).is_ok());
        assert!(TimeSet::new(["t2", "t1"]).is_err());
        assert!(TimeSet::new(["t1", "t1"]).is_err());
        assert!(TimeSet::from_unordered(["t1", "t1"]).is_err());
        assert_eq!(
            TimeSet::from_unordered(["t3", "t1"]).unwrap(),
            TimeSet::new(["t1", "t3"]).unwrap()
        );
    }

    #[test]
    fn parse_and_display() {
        let t = TimeSet::parse("t3, t1").unwrap();
        assert_eq!(t.to_string(), "{t1,t3}");
        assert!(t.is_subset_of(&TimeSet::standard(3)));
        assert_eq!(TimeSet::standard(3).difference(&t).to_string(), "{t2}");
    }

    #[test]
    fn subsets_enumerated() {
        let s = TimeSet::standard(4).nonempty_subsets();
        assert_eq!(s.len(), 15);
        assert_eq!(s[0].to_string(), "{t1}");
        assert_eq!(s[14].to_string(), "{t1,t2,t3,t4}");
    }

    #[test]
    fn json_is_plain_array() {
        let t = TimeSet::standard(2);
        assert_eq!(serde_json::to_string(&t).unwrap(), r#"["t1","t2"]"#);
        assert!(serde_json::from_str::<TimeSet>(r#"["t2","t1"]"#).is_err());
    }
}
