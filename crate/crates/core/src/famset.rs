//! Finite subsets of ℕ = {1, 2, …} and horizon-bounded infinite subsets.
//!
//! [`FinSet`] is a strictly increasing list of positive integers.
//! [`SeqSet`] stands in for an infinite set `L = {L(1) < L(2) < …}`; it is
//! given by a closed-form rule and a horizon, and any request for `L(k)` with
//! `k` beyond the horizon is an error rather than a silent truncation.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

/// Default number of materializable elements of a [`SeqSet`].
pub const DEFAULT_HORIZON: u32 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FamsetError {
    #[error("index {index} out of range for a set of size {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("index {index} exceeds the horizon {horizon}")]
    HorizonExceeded { index: u64, horizon: u32 },
    #[error("invalid set: {0}")]
    Invalid(String),
    #[error("cannot parse {0:?}")]
    Parse(String),
}

/// A finite subset of ℕ, stored in increasing order.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct FinSet(Vec<u32>);

impl FinSet {
    pub fn new(elems: Vec<u32>) -> Result<Self, FamsetError> {
        if elems.first() == Some(&0) {
            return Err(FamsetError::Invalid("elements must be positive".into()));
        }
        if elems.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FamsetError::Invalid(format!(
                "{elems:?} is not strictly increasing"
            )));
        }
        Ok(FinSet(elems))
    }

    /// Sorts and deduplicates arbitrary positive integers.
    pub fn from_unsorted(mut elems: Vec<u32>) -> Result<Self, FamsetError> {
        elems.sort_unstable();
        elems.dedup();
        Self::new(elems)
    }

    /// Caller guarantees strict monotonicity and positivity.
    pub(crate) fn from_sorted(elems: Vec<u32>) -> Self {
        debug_assert!(elems.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(elems.first() != Some(&0));
        FinSet(elems)
    }

    pub fn empty() -> Self {
        FinSet(Vec::new())
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<u32> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> Option<u32> {
        self.0.first().copied()
    }

    pub fn max(&self) -> Option<u32> {
        self.0.last().copied()
    }

    /// `s(k)`, 1-based.
    pub fn get(&self, k: usize) -> Option<u32> {
        k.checked_sub(1).and_then(|i| self.0.get(i)).copied()
    }

    /// `s|k`, the first `k` elements.
    pub fn prefix(&self, k: usize) -> Result<FinSet, FamsetError> {
        if k > self.0.len() {
            return Err(FamsetError::IndexOutOfRange {
                index: k,
                len: self.0.len(),
            });
        }
        Ok(FinSet(self.0[..k].to_vec()))
    }

    /// `self ⊑ other`.
    pub fn is_initial_segment_of(&self, other: &FinSet) -> bool {
        other.0.starts_with(&self.0)
    }

    /// `self ⊏ other`.
    pub fn is_proper_initial_segment_of(&self, other: &FinSet) -> bool {
        self.0.len() < other.0.len() && other.0.starts_with(&self.0)
    }

    pub fn is_subset_of(&self, other: &FinSet) -> bool {
        self.0.iter().all(|x| other.0.binary_search(x).is_ok())
    }

    pub fn union(&self, other: &FinSet) -> FinSet {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        v.sort_unstable();
        v.dedup();
        FinSet(v)
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.0.iter().copied()
    }
}

impl From<FinSet> for Vec<u32> {
    fn from(s: FinSet) -> Self {
        s.0
    }
}

/// `t < s`: one of them is empty or `max t < min s`.
pub fn precedes(t: &FinSet, s: &FinSet) -> bool {
    precedes_slices(&t.0, &s.0)
}

pub(crate) fn precedes_slices(t: &[u32], s: &[u32]) -> bool {
    match (t.last(), s.first()) {
        (Some(a), Some(b)) => a < b,
        _ => true,
    }
}

impl fmt::Display for FinSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{x}")?;
        }
        f.write_str("}")
    }
}

impl FromStr for FinSet {
    type Err = FamsetError;

    /// Accepts `{1,3,5}`, `1,3,5` and `{}`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = s.trim();
        let inner = inner
            .strip_prefix('{')
            .and_then(|r| r.strip_suffix('}'))
            .unwrap_or(inner);
        let elems = parse_u32_list(inner).ok_or_else(|| FamsetError::Parse(s.to_string()))?;
        FinSet::new(elems)
    }
}

fn parse_u32_list(s: &str) -> Option<Vec<u32>> {
    let s = s.trim();
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split(',').map(|x| x.trim().parse().ok()).collect()
}

/// Closed-form enumeration rules for an infinite subset of ℕ.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SeqRule {
    All,
    Arithmetic {
        start: u32,
        step: u32,
    },
    ListThenArithmetic {
        prefix: Vec<u32>,
        start: u32,
        step: u32,
    },
    /// `outer(inner(k))`, i.e. the set `L(N)` for `outer = L`, `inner = N`.
    Composed(Box<SeqSet>, Box<SeqSet>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SeqSet {
    rule: SeqRule,
    horizon: u32,
}

impl SeqSet {
    pub fn new(rule: SeqRule, horizon: u32) -> Result<Self, FamsetError> {
        if horizon == 0 {
            return Err(FamsetError::Invalid("horizon must be positive".into()));
        }
        match &rule {
            SeqRule::All | SeqRule::Composed(..) => {}
            SeqRule::Arithmetic { start, step } => {
                if *start == 0 || *step == 0 {
                    return Err(FamsetError::Invalid(
                        "arithmetic rule needs positive start and step".into(),
                    ));
                }
            }
            SeqRule::ListThenArithmetic {
                prefix,
                start,
                step,
            } => {
                FinSet::new(prefix.clone())?;
                if *step == 0 || *start == 0 || prefix.last().is_some_and(|l| l >= start) {
                    return Err(FamsetError::Invalid(
                        "arithmetic tail must start above the listed prefix".into(),
                    ));
                }
            }
        }
        let seq = SeqSet { rule, horizon };
        seq.at(horizon)?;
        Ok(seq)
    }

    pub fn all(horizon: u32) -> Self {
        SeqSet {
            rule: SeqRule::All,
            horizon,
        }
    }

    pub fn arithmetic(start: u32, step: u32, horizon: u32) -> Result<Self, FamsetError> {
        Self::new(SeqRule::Arithmetic { start, step }, horizon)
    }

    pub fn composed(outer: SeqSet, inner: SeqSet, horizon: u32) -> Result<Self, FamsetError> {
        Self::new(SeqRule::Composed(Box::new(outer), Box::new(inner)), horizon)
    }

    /// A set known only through its first `values.len()` elements; the
    /// horizon is exactly that prefix.
    pub fn finite_prefix(values: Vec<u32>) -> Result<Self, FamsetError> {
        let last = *values
            .last()
            .ok_or_else(|| FamsetError::Invalid("empty prefix".into()))?;
        let horizon = values.len() as u32;
        Self::new(
            SeqRule::ListThenArithmetic {
                prefix: values,
                start: last + 1,
                step: 1,
            },
            horizon,
        )
    }

    pub fn rule(&self) -> &SeqRule {
        &self.rule
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn with_horizon(&self, horizon: u32) -> Result<Self, FamsetError> {
        Self::new(self.rule.clone(), horizon)
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.rule, SeqRule::All)
    }

    fn exceeded(&self, index: u64) -> FamsetError {
        FamsetError::HorizonExceeded {
            index,
            horizon: self.horizon,
        }
    }

    /// `L(k)`, 1-based.
    pub fn at(&self, k: u32) -> Result<u32, FamsetError> {
        if k == 0 {
            return Err(FamsetError::IndexOutOfRange { index: 0, len: 0 });
        }
        if k > self.horizon {
            return Err(self.exceeded(k.into()));
        }
        let v: u64 = match &self.rule {
            SeqRule::All => k.into(),
            SeqRule::Arithmetic { start, step } => {
                u64::from(*start) + u64::from(k - 1) * u64::from(*step)
            }
            SeqRule::ListThenArithmetic {
                prefix,
                start,
                step,
            } => match prefix.get(k as usize - 1) {
                Some(v) => (*v).into(),
                None => {
                    let j = u64::from(k) - 1 - prefix.len() as u64;
                    u64::from(*start) + j * u64::from(*step)
                }
            },
            SeqRule::Composed(outer, inner) => outer.at(inner.at(k)?)?.into(),
        };
        u32::try_from(v).map_err(|_| FamsetError::Invalid(format!("L({k}) overflows u32")))
    }

    /// Largest materializable element `L(horizon)`.
    pub fn max_value(&self) -> u32 {
        self.at(self.horizon).expect("validated on construction")
    }

    /// The position `k` with `L(k) = x`, if any. Values above `L(horizon)`
    /// cannot be decided and are reported as [`FamsetError::HorizonExceeded`].
    pub fn index_of(&self, x: u32) -> Result<Option<u32>, FamsetError> {
        if x > self.max_value() {
            return Err(self.exceeded(u64::from(self.horizon) + 1));
        }
        let idx = match &self.rule {
            SeqRule::All => (x >= 1).then_some(x),
            SeqRule::Arithmetic { start, step } => arith_index(x, *start, *step, 0),
            SeqRule::ListThenArithmetic {
                prefix,
                start,
                step,
            } => match prefix.binary_search(&x) {
                Ok(i) => Some(i as u32 + 1),
                Err(_) => arith_index(x, *start, *step, prefix.len() as u32),
            },
            SeqRule::Composed(outer, inner) => match outer.index_of(x)? {
                Some(j) => inner.index_of(j)?,
                None => None,
            },
        };
        Ok(idx.filter(|&k| k <= self.horizon))
    }

    pub fn contains(&self, x: u32) -> Result<bool, FamsetError> {
        Ok(self.index_of(x)?.is_some())
    }

    /// `L(s) = {L(s(1)), …, L(s(m))}`.
    pub fn relocate(&self, s: &FinSet) -> Result<FinSet, FamsetError> {
        Ok(FinSet::from_sorted(self.relocate_slice(s.as_slice())?))
    }

    pub(crate) fn relocate_slice(&self, s: &[u32]) -> Result<Vec<u32>, FamsetError> {
        if self.is_identity() {
            if let Some(&m) = s.last() {
                if m > self.horizon {
                    return Err(self.exceeded(m.into()));
                }
            }
            return Ok(s.to_vec());
        }
        s.iter().map(|&k| self.at(k)).collect()
    }

    /// `L⁻¹(s)`: the index set of `s` when `s ⊆ L`, otherwise `None`.
    pub fn preimage(&self, s: &FinSet) -> Result<Option<FinSet>, FamsetError> {
        Ok(self.preimage_slice(s.as_slice())?.map(FinSet::from_sorted))
    }

    pub(crate) fn preimage_slice(&self, s: &[u32]) -> Result<Option<Vec<u32>>, FamsetError> {
        let mut out = Vec::with_capacity(s.len());
        for &x in s {
            match self.index_of(x)? {
                Some(k) => out.push(k),
                None => return Ok(None),
            }
        }
        Ok(Some(out))
    }

    /// `L(1), …, L(n)`.
    pub fn values(&self, n: u32) -> Result<Vec<u32>, FamsetError> {
        (1..=n).map(|k| self.at(k)).collect()
    }

    /// Parses the textual forms `all`, `arith:<start>:<step>`,
    /// `list:<a,b,c>;arith:<start>:<step>` and `comp(<outer>,<inner>)`.
    pub fn parse(text: &str, horizon: u32) -> Result<Self, FamsetError> {
        let t = text.trim();
        let bad = || FamsetError::Parse(text.to_string());
        if t == "all" {
            return Self::new(SeqRule::All, horizon);
        }
        if let Some(rest) = t.strip_prefix("arith:") {
            let (start, step) = parse_arith(rest).ok_or_else(bad)?;
            return Self::new(SeqRule::Arithmetic { start, step }, horizon);
        }
        if let Some(rest) = t.strip_prefix("list:") {
            let (list, tail) = rest.split_once(';').ok_or_else(bad)?;
            let list = list.trim();
            let list = list
                .strip_prefix('{')
                .and_then(|l| l.strip_suffix('}'))
                .unwrap_or(list);
            let prefix = parse_u32_list(list).ok_or_else(bad)?;
            let tail = tail.trim().strip_prefix("arith:").ok_or_else(bad)?;
            let (start, step) = parse_arith(tail).ok_or_else(bad)?;
            return Self::new(
                SeqRule::ListThenArithmetic {
                    prefix,
                    start,
                    step,
                },
                horizon,
            );
        }
        if let Some(rest) = t.strip_prefix("comp(").and_then(|r| r.strip_suffix(')')) {
            // Commas inside an unbraced list are ambiguous; take the first
            // top-level split where both halves parse.
            // The outer rule is sized to cover every index the inner one
            // produces within the horizon.
            for (i, _) in top_level_commas(rest) {
                let (a, b) = (&rest[..i], &rest[i + 1..]);
                let Ok(inner) = Self::parse(b, horizon) else {
                    continue;
                };
                if let Ok(outer) = Self::parse(a, inner.max_value()) {
                    return Self::composed(outer, inner, horizon);
                }
            }
        }
        Err(bad())
    }
}

fn parse_arith(s: &str) -> Option<(u32, u32)> {
    let (a, b) = s.split_once(':')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

/// Byte offsets of commas outside any `()` or `{}` nesting.
pub(crate) fn top_level_commas(s: &str) -> impl Iterator<Item = (usize, char)> + '_ {
    let mut depth = 0i32;
    s.char_indices().filter(move |&(_, c)| {
        match c {
            '(' | '{' => depth += 1,
            ')' | '}' => depth -= 1,
            ',' if depth == 0 => return true,
            _ => {}
        }
        false
    })
}

fn arith_index(x: u32, start: u32, step: u32, offset: u32) -> Option<u32> {
    if x < start || !(x - start).is_multiple_of(step) {
        return None;
    }
    Some(offset + (x - start) / step + 1)
}

impl fmt::Display for SeqSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.rule {
            SeqRule::All => f.write_str("all"),
            SeqRule::Arithmetic { start, step } => write!(f, "arith:{start}:{step}"),
            SeqRule::ListThenArithmetic {
                prefix,
                start,
                step,
            } => write!(
                f,
                "list:{};arith:{start}:{step}",
                FinSet::from_sorted(prefix.clone())
            ),
            SeqRule::Composed(outer, inner) => write!(f, "comp({outer},{inner})"),
        }
    }
}

impl Serialize for SeqSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fs(v: &[u32]) -> FinSet {
        FinSet::new(v.to_vec()).unwrap()
    }

    #[test]
    fn prefix_examples() {
        let s = fs(&[2, 5, 9]);
        assert_eq!(s.prefix(2).unwrap(), fs(&[2, 5]));
        assert_eq!(s.prefix(0).unwrap(), FinSet::empty());
        assert!(matches!(
            s.prefix(4),
            Err(FamsetError::IndexOutOfRange { index: 4, len: 3 })
        ));
    }

    #[test]
    fn precedes_examples() {
        assert!(precedes(&FinSet::empty(), &fs(&[3])));
        assert!(precedes(&fs(&[3]), &FinSet::empty()));
        assert!(precedes(&fs(&[1, 2]), &fs(&[3, 4])));
        assert!(!precedes(&fs(&[1, 5]), &fs(&[4, 9])));
        assert!(!precedes(&fs(&[4]), &fs(&[4])));
    }

    #[test]
    fn finset_validation_and_text() {
        assert!(FinSet::new(vec![3, 3]).is_err());
        assert!(FinSet::new(vec![0, 3]).is_err());
        assert!(FinSet::new(vec![5, 3]).is_err());
        assert_eq!("{1, 3,5}".parse::<FinSet>().unwrap(), fs(&[1, 3, 5]));
        assert_eq!("{}".parse::<FinSet>().unwrap(), FinSet::empty());
        assert_eq!(fs(&[1, 3]).to_string(), "{1,3}");
        assert!("{1,x}".parse::<FinSet>().is_err());
        assert!(fs(&[1, 3]).is_proper_initial_segment_of(&fs(&[1, 3, 4])));
        assert!(!fs(&[1, 3]).is_proper_initial_segment_of(&fs(&[1, 3])));
        assert!(fs(&[1, 3]).is_initial_segment_of(&fs(&[1, 3])));
    }

    #[test]
    fn relocate_examples() {
        let evens = SeqSet::arithmetic(2, 2, 100).unwrap();
        assert_eq!(evens.relocate(&fs(&[1, 3])).unwrap(), fs(&[2, 6]));
        let all = SeqSet::all(100);
        assert_eq!(all.relocate(&fs(&[4, 7, 30])).unwrap(), fs(&[4, 7, 30]));

        // Oracle: enumerate both rules explicitly up to the index needed.
        let odds = SeqSet::arithmetic(1, 2, 100).unwrap();
        let evens_list: Vec<u32> = (1..=100).map(|k| 2 * k).collect();
        let odds_list: Vec<u32> = (1..=100).map(|k| 2 * k - 1).collect();
        let expected = evens_list[odds_list[1] as usize - 1];
        assert_eq!(expected, 6);
        let comp = SeqSet::composed(evens.clone(), odds, 50).unwrap();
        assert_eq!(comp.relocate(&fs(&[2])).unwrap(), fs(&[expected]));
    }

    #[test]
    fn horizon_is_enforced() {
        let evens = SeqSet::arithmetic(2, 2, 10).unwrap();
        assert_eq!(evens.at(10).unwrap(), 20);
        assert!(matches!(
            evens.at(11),
            Err(FamsetError::HorizonExceeded {
                index: 11,
                horizon: 10
            })
        ));
        assert!(evens.relocate(&fs(&[3, 11])).is_err());
        assert_eq!(evens.index_of(8).unwrap(), Some(4));
        assert_eq!(evens.index_of(9).unwrap(), None);
        assert!(evens.index_of(22).is_err());
        assert!(SeqSet::all(5).relocate(&fs(&[6])).is_err());
    }

    #[test]
    fn list_then_arith_and_preimage() {
        let l = SeqSet::parse("list:1,5,9;arith:10:3", 20).unwrap();
        assert_eq!(l.values(6).unwrap(), vec![1, 5, 9, 10, 13, 16]);
        assert_eq!(l.index_of(13).unwrap(), Some(5));
        assert_eq!(l.index_of(6).unwrap(), None);
        assert_eq!(l.preimage(&fs(&[5, 13])).unwrap(), Some(fs(&[2, 5])));
        assert_eq!(l.preimage(&fs(&[5, 12])).unwrap(), None);
        assert!(SeqSet::parse("list:1,5;arith:5:1", 20).is_err());
        assert_eq!(l.to_string(), "list:{1,5,9};arith:10:3");
        assert_eq!(SeqSet::parse(&l.to_string(), 20).unwrap(), l);
    }

    #[test]
    fn seqset_text_forms() {
        for text in [
            "all",
            "arith:3:1",
            "comp(arith:2:2,arith:1:2)",
            "comp(list:{2,3};arith:7:7,all)",
        ] {
            let l = SeqSet::parse(text, 50).unwrap();
            assert_eq!(l.to_string(), text);
        }
        let unbraced = SeqSet::parse("comp(list:2,3;arith:7:7,all)", 50).unwrap();
        assert_eq!(unbraced.to_string(), "comp(list:{2,3};arith:7:7,all)");
        assert!(SeqSet::parse("arith:0:1", 5).is_err());
        assert!(SeqSet::parse("evens", 5).is_err());
    }

    #[test]
    fn composed_index_of_roundtrip() {
        let comp = SeqSet::parse("comp(arith:2:2,arith:1:2)", 30).unwrap();
        for k in 1..=30 {
            let v = comp.at(k).unwrap();
            assert_eq!(comp.index_of(v).unwrap(), Some(k));
        }
        assert_eq!(comp.index_of(4).unwrap(), None);
    }
}
