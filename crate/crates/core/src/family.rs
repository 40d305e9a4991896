//! Families of finite subsets of ℕ.
//!
//! A [`FamilySpec`] is a symbolic expression (`[ℕ]^k`, the recursive
//! families `R_ξ`, `{s : |s| = a·min s + b}`, and the closure, maximal,
//! derivative, restriction, shift and preimage transforms). Every node answers
//! two exact questions about a finite set `s`:
//!
//! * [`FamilySpec::contains`]: is `s` a member;
//! * [`FamilySpec::has_extension`]: does some member properly extend `s`.
//!
//! Together they decide membership in the `⊑`-closure, which drives pruned
//! enumeration, [`complete`], materialization and the plegma machinery.
//!
//! Extension questions for the restriction and preimage transforms assume
//! the operand admits extensions by arbitrarily large elements, which holds
//! for every infinite constructor here. Finite `Explicit` operands fall back
//! to a bounded search over their (finite) support.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::ControlFlow;

use thiserror::Error;

use crate::famset::{precedes_slices, top_level_commas, FamsetError, FinSet, SeqSet};
use crate::ordinal::{Ordinal, OrdinalError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FamilyError {
    #[error(transparent)]
    Set(#[from] FamsetError),
    #[error(transparent)]
    Ordinal(#[from] OrdinalError),
    #[error("invalid family: {0}")]
    Invalid(String),
    #[error("cannot parse family {0:?}")]
    Parse(String),
    #[error("unsupported query: {0}")]
    UnsupportedQuery(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("the family is empty")]
    EmptyFamily,
    #[error("universe {requested} exceeds the cap {cap}")]
    UniverseTooLarge { requested: u32, cap: u32 },
    #[error("more than {cap} members within the universe")]
    TooManyMembers { cap: usize },
    #[error("no member is an initial segment within the horizon ({searched} elements searched)")]
    NotFoundWithinHorizon { searched: u32 },
    #[error("order precondition violated: o(R) = {lhs} exceeds o(S) = {rhs}")]
    OrderGate { lhs: Ordinal, rhs: Ordinal },
    #[error("verification failed: {0}")]
    VerificationFailed(String),
}

pub type Result<T> = std::result::Result<T, FamilyError>;

/// Largest support for which a bounded extension search is attempted.
const BOUNDED_SEARCH_SPAN: u32 = 24;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FamilySpec {
    /// `[ℕ]^k`.
    Cube(u32),
    /// The recursive regular construction of order `ξ`.
    RXi(Ordinal),
    /// `{s : |s| = a·min s + b, |s| ≥ 1}`.
    FMin {
        a: u32,
        b: i64,
    },
    Hat(Box<FamilySpec>),
    Maximals(Box<FamilySpec>),
    /// `F_(n) = {s : n < s, {n} ∪ s ∈ F}`.
    Derivative(Box<FamilySpec>, u32),
    /// `F↾L`.
    Restrict(Box<FamilySpec>, SeqSet),
    /// `F↾↾L`: members of `F↾L` with an element of `L` strictly inside
    /// every gap.
    RestrictGap(Box<FamilySpec>, SeqSet),
    /// `L(F)`.
    Shift(Box<FamilySpec>, SeqSet),
    /// `L⁻¹(F) = {t : L(t) ∈ F}`.
    Preimage(Box<FamilySpec>, SeqSet),
    Explicit(BTreeSet<FinSet>),
}

impl FamilySpec {
    pub fn cube(k: u32) -> Self {
        FamilySpec::Cube(k)
    }

    pub fn rxi(xi: Ordinal) -> Self {
        FamilySpec::RXi(xi)
    }

    pub fn fmin(a: u32, b: i64) -> Result<Self> {
        let f = FamilySpec::FMin { a, b };
        f.validate()?;
        Ok(f)
    }

    pub fn explicit<I: IntoIterator<Item = FinSet>>(members: I) -> Self {
        FamilySpec::Explicit(members.into_iter().collect())
    }

    pub fn hat(self) -> Self {
        FamilySpec::Hat(Box::new(self))
    }

    pub fn maximals(self) -> Self {
        FamilySpec::Maximals(Box::new(self))
    }

    pub fn derivative(self, n: u32) -> Self {
        FamilySpec::Derivative(Box::new(self), n)
    }

    pub fn restrict(self, l: SeqSet) -> Self {
        FamilySpec::Restrict(Box::new(self), l)
    }

    pub fn restrict_gap(self, l: SeqSet) -> Self {
        FamilySpec::RestrictGap(Box::new(self), l)
    }

    pub fn shift(self, l: SeqSet) -> Self {
        FamilySpec::Shift(Box::new(self), l)
    }

    pub fn preimage(self, l: SeqSet) -> Self {
        FamilySpec::Preimage(Box::new(self), l)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FamilySpec::FMin { a, b } => {
                if i64::from(*a) + b < 1 {
                    return Err(FamilyError::Invalid(format!(
                        "fmin({a},{b}) prescribes a non-positive size for min s = 1"
                    )));
                }
                Ok(())
            }
            FamilySpec::Cube(_) | FamilySpec::RXi(_) | FamilySpec::Explicit(_) => Ok(()),
            FamilySpec::Hat(x)
            | FamilySpec::Maximals(x)
            | FamilySpec::Derivative(x, _)
            | FamilySpec::Restrict(x, _)
            | FamilySpec::RestrictGap(x, _)
            | FamilySpec::Shift(x, _)
            | FamilySpec::Preimage(x, _) => x.validate(),
        }
    }

    /// Exact membership.
    pub fn contains(&self, s: &FinSet) -> Result<bool> {
        self.contains_slice(s.as_slice())
    }

    /// Whether some member is a proper end-extension of `s`.
    pub fn has_extension(&self, s: &FinSet) -> Result<bool> {
        self.has_ext(s.as_slice())
    }

    /// Membership in the `⊑`-closure.
    pub fn hat_contains(&self, s: &FinSet) -> Result<bool> {
        self.in_hat(s.as_slice())
    }

    pub(crate) fn in_hat(&self, s: &[u32]) -> Result<bool> {
        Ok(self.contains_slice(s)? || self.has_ext(s)?)
    }

    pub(crate) fn contains_slice(&self, s: &[u32]) -> Result<bool> {
        Ok(match self {
            FamilySpec::Cube(k) => s.len() == *k as usize,
            FamilySpec::FMin { a, b } => match s.first() {
                None => false,
                Some(&m) => s.len() as i64 == i64::from(*a) * i64::from(m) + b,
            },
            FamilySpec::RXi(xi) => match xi.to_u64() {
                Some(k) => s.len() as u64 == k,
                None => RxiWalk::default().contains(xi, s),
            },
            FamilySpec::Hat(x) => x.in_hat(s)?,
            FamilySpec::Maximals(x) => x.contains_slice(s)? && !x.has_ext(s)?,
            FamilySpec::Derivative(x, n) => {
                precedes_slices(&[*n], s) && x.contains_slice(&with_head(*n, s))?
            }
            FamilySpec::Restrict(x, l) => subset_of(s, l)? && x.contains_slice(s)?,
            FamilySpec::RestrictGap(x, l) => gap_ok(s, l)? && x.contains_slice(s)?,
            FamilySpec::Shift(x, l) => match l.preimage_slice(s)? {
                Some(pre) => x.contains_slice(&pre)?,
                None => false,
            },
            FamilySpec::Preimage(x, l) => x.contains_slice(&l.relocate_slice(s)?)?,
            FamilySpec::Explicit(members) => members.contains(&FinSet::from_sorted(s.to_vec())),
        })
    }

    pub(crate) fn has_ext(&self, s: &[u32]) -> Result<bool> {
        Ok(match self {
            FamilySpec::Cube(k) => s.len() < *k as usize,
            FamilySpec::FMin { a, b } => match s.first() {
                None => true,
                Some(&m) => (s.len() as i64) < i64::from(*a) * i64::from(m) + b,
            },
            FamilySpec::RXi(xi) => match xi.to_u64() {
                Some(k) => (s.len() as u64) < k,
                None => RxiWalk::default().extends(xi, s),
            },
            FamilySpec::Hat(x) => x.has_ext(s)?,
            // Every extension in a well-founded family continues to a maximal one.
            FamilySpec::Maximals(x) => x.has_ext(s)?,
            FamilySpec::Derivative(x, n) => {
                precedes_slices(&[*n], s) && x.has_ext(&with_head(*n, s))?
            }
            FamilySpec::Restrict(x, l) => {
                if !subset_of(s, l)? {
                    false
                } else if x.tail_free() {
                    x.has_ext(s)?
                } else {
                    self.bounded_extension_search(s)?
                }
            }
            FamilySpec::RestrictGap(x, l) => {
                if !gap_ok(s, l)? {
                    false
                } else if x.tail_free() {
                    x.has_ext(s)?
                } else {
                    self.bounded_extension_search(s)?
                }
            }
            FamilySpec::Shift(x, l) => match l.preimage_slice(s)? {
                Some(pre) => x.has_ext(&pre)?,
                None => false,
            },
            FamilySpec::Preimage(x, l) => {
                if x.tail_free() {
                    x.has_ext(&l.relocate_slice(s)?)?
                } else {
                    self.bounded_extension_search(s)?
                }
            }
            FamilySpec::Explicit(members) => {
                let key = FinSet::from_sorted(s.to_vec());
                members
                    .range(key..)
                    .take_while(|m| m.as_slice().starts_with(s))
                    .any(|m| m.len() > s.len())
            }
        })
    }

    /// Whether extensions may always be realized with arbitrarily large new
    /// elements; false only for finite explicit lists.
    pub fn tail_free(&self) -> bool {
        match self {
            FamilySpec::Cube(_) | FamilySpec::RXi(_) | FamilySpec::FMin { .. } => true,
            FamilySpec::Explicit(_) => false,
            FamilySpec::Hat(x)
            | FamilySpec::Maximals(x)
            | FamilySpec::Derivative(x, _)
            | FamilySpec::Restrict(x, _)
            | FamilySpec::RestrictGap(x, _)
            | FamilySpec::Shift(x, _)
            | FamilySpec::Preimage(x, _) => x.tail_free(),
        }
    }

    /// An upper bound on the elements of any member, when one exists.
    pub fn support_bound(&self) -> Option<u32> {
        match self {
            FamilySpec::Cube(_) | FamilySpec::RXi(_) | FamilySpec::FMin { .. } => None,
            FamilySpec::Explicit(m) => Some(m.iter().filter_map(FinSet::max).max().unwrap_or(0)),
            FamilySpec::Shift(x, l) => x.support_bound().map(|b| {
                if b == 0 {
                    0
                } else {
                    l.at(b).unwrap_or(l.max_value())
                }
            }),
            FamilySpec::Hat(x)
            | FamilySpec::Maximals(x)
            | FamilySpec::Derivative(x, _)
            | FamilySpec::Restrict(x, _)
            | FamilySpec::RestrictGap(x, _)
            | FamilySpec::Preimage(x, _) => x.support_bound(),
        }
    }

    fn bounded_extension_search(&self, s: &[u32]) -> Result<bool> {
        let bound = self.support_bound().ok_or_else(|| {
            FamilyError::UnsupportedQuery("extension search needs a bounded support".into())
        })?;
        let lo = s.last().copied().unwrap_or(0);
        if bound <= lo {
            return Ok(false);
        }
        if bound - lo > BOUNDED_SEARCH_SPAN {
            return Err(FamilyError::UnsupportedQuery(format!(
                "extension search over {} candidate elements",
                bound - lo
            )));
        }
        let mut buf = s.to_vec();
        self.search_from(&mut buf, lo + 1, bound)
    }

    fn search_from(&self, buf: &mut Vec<u32>, from: u32, bound: u32) -> Result<bool> {
        for v in from..=bound {
            buf.push(v);
            let hit = self.contains_slice(buf)? || self.search_from(buf, v + 1, bound)?;
            buf.pop();
            if hit {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Visits every member `s ⊆ candidates` (a strictly increasing list) in
    /// lexicographic order, pruning branches outside the `⊑`-closure.
    pub fn for_each_member_within<F>(&self, candidates: &[u32], mut visit: F) -> Result<()>
    where
        F: FnMut(&[u32]) -> ControlFlow<()>,
    {
        let mut buf = Vec::new();
        if self.contains_slice(&buf)? && visit(&buf).is_break() {
            return Ok(());
        }
        if self.has_ext(&buf)? {
            let _ = self.member_dfs(candidates, 0, &mut buf, &mut visit)?;
        }
        Ok(())
    }

    fn member_dfs<F>(
        &self,
        candidates: &[u32],
        from: usize,
        buf: &mut Vec<u32>,
        visit: &mut F,
    ) -> Result<ControlFlow<()>>
    where
        F: FnMut(&[u32]) -> ControlFlow<()>,
    {
        for i in from..candidates.len() {
            buf.push(candidates[i]);
            let member = self.contains_slice(buf)?;
            if member && visit(buf).is_break() {
                buf.pop();
                return Ok(ControlFlow::Break(()));
            }
            if self.has_ext(buf)? && self.member_dfs(candidates, i + 1, buf, visit)?.is_break() {
                buf.pop();
                return Ok(ControlFlow::Break(()));
            }
            buf.pop();
        }
        Ok(ControlFlow::Continue(()))
    }

    /// Members contained in `candidates`, up to `cap` of them.
    pub fn members_within(&self, candidates: &[u32], cap: usize) -> Result<Vec<FinSet>> {
        let mut out = Vec::new();
        let mut overflow = false;
        self.for_each_member_within(candidates, |s| {
            if out.len() == cap {
                overflow = true;
                return ControlFlow::Break(());
            }
            out.push(FinSet::from_sorted(s.to_vec()));
            ControlFlow::Continue(())
        })?;
        if overflow {
            return Err(FamilyError::TooManyMembers { cap });
        }
        Ok(out)
    }

    /// Order of the residual family `F_(t) = {u : t < u, t ∪ u ∈ F}`, or
    /// `None` when `t` is outside the `⊑`-closure.
    pub fn residual_order(&self, t: &FinSet) -> Result<Option<Ordinal>> {
        self.residual(t.as_slice())
    }

    pub(crate) fn residual(&self, t: &[u32]) -> Result<Option<Ordinal>> {
        if !self.tail_free() {
            return self.finite_residual(t);
        }
        Ok(match self {
            FamilySpec::Cube(k) => (*k as usize)
                .checked_sub(t.len())
                .map(|r| Ordinal::finite(r as u64)),
            FamilySpec::FMin { a, b } => match t.first() {
                None if *a >= 1 => Some(Ordinal::omega()),
                None => Some(Ordinal::finite(*b as u64)),
                Some(&m) => {
                    let target = i64::from(*a) * i64::from(m) + b;
                    let r = target - t.len() as i64;
                    (r >= 0).then(|| Ordinal::finite(r as u64))
                }
            },
            FamilySpec::RXi(xi) => match xi.to_u64() {
                Some(k) => k.checked_sub(t.len() as u64).map(Ordinal::finite),
                None => RxiWalk::default().residual(xi, t),
            },
            FamilySpec::Hat(x) | FamilySpec::Maximals(x) => x.residual(t)?,
            FamilySpec::Derivative(x, n) => {
                if precedes_slices(&[*n], t) {
                    x.residual(&with_head(*n, t))?
                } else {
                    None
                }
            }
            FamilySpec::Restrict(x, l) => {
                if subset_of(t, l)? {
                    x.residual(t)?
                } else {
                    None
                }
            }
            FamilySpec::RestrictGap(x, l) => {
                if gap_ok(t, l)? {
                    x.residual(t)?
                } else {
                    None
                }
            }
            FamilySpec::Shift(x, l) => match l.preimage_slice(t)? {
                Some(pre) => x.residual(&pre)?,
                None => None,
            },
            FamilySpec::Preimage(x, l) => x.residual(&l.relocate_slice(t)?)?,
            FamilySpec::Explicit(_) => unreachable!("explicit families are not tail free"),
        })
    }

    /// Exact residual order for families with bounded support, computed on
    /// the finite `⊑`-tree.
    fn finite_residual(&self, t: &[u32]) -> Result<Option<Ordinal>> {
        let bound = self
            .support_bound()
            .expect("families that are not tail free have bounded support");
        if bound > MaterializeLimits::default().universe_cap {
            return Err(FamilyError::Unsupported(format!(
                "finite order computation over a universe of {bound}"
            )));
        }
        let m = materialize_with(self, bound, &MaterializeLimits::default())?;
        let ranks = m.hat_ranks();
        Ok(ranks
            .get(&FinSet::from_sorted(t.to_vec()))
            .map(|&r| Ordinal::finite(r as u64)))
    }

    /// `o(F)`, computed from the constructors.
    pub fn order(&self) -> Result<Ordinal> {
        self.residual(&[])?.ok_or(FamilyError::EmptyFamily)
    }

    /// Parses the family DSL (`cube(3)`, `rxi(w^2+1)`, `fmin(1,0)`, `hat(X)`,
    /// `max(X)`, `deriv(X,n)`, `restrict(X,L)`, `gaprestrict(X,L)`,
    /// `shift(X,L)`, `preimage(X,L)`, `sets({1,2},{3})`), reading every `L`
    /// with the given horizon.
    pub fn parse(text: &str, horizon: u32) -> Result<Self> {
        let t = text.trim();
        let bad = || FamilyError::Parse(text.to_string());
        let (name, args) = t
            .strip_suffix(')')
            .and_then(|r| r.split_once('('))
            .ok_or_else(bad)?;
        let spec = match name.trim() {
            "cube" => FamilySpec::Cube(args.trim().parse().map_err(|_| bad())?),
            "rxi" => FamilySpec::RXi(args.parse()?),
            "fmin" => {
                let (a, b) = args.split_once(',').ok_or_else(bad)?;
                FamilySpec::FMin {
                    a: a.trim().parse().map_err(|_| bad())?,
                    b: b.trim().parse().map_err(|_| bad())?,
                }
            }
            "hat" => Self::parse(args, horizon)?.hat(),
            "max" => Self::parse(args, horizon)?.maximals(),
            "deriv" => {
                let (x, n) = split_last_arg(args).ok_or_else(bad)?;
                Self::parse(x, horizon)?.derivative(n.trim().parse().map_err(|_| bad())?)
            }
            "restrict" | "gaprestrict" | "shift" | "preimage" => {
                let (x, l) = split_family_seq(args, horizon).ok_or_else(bad)?;
                match name.trim() {
                    "restrict" => x.restrict(l),
                    "gaprestrict" => x.restrict_gap(l),
                    "shift" => x.shift(l),
                    _ => x.preimage(l),
                }
            }
            "sets" => {
                let mut members = BTreeSet::new();
                let mut start = 0;
                let args_t = args.trim();
                if !args_t.is_empty() {
                    let cuts: Vec<usize> = top_level_commas(args_t).map(|(i, _)| i).collect();
                    for end in cuts.into_iter().chain([args_t.len()]) {
                        members.insert(args_t[start..end].parse::<FinSet>()?);
                        start = end + 1;
                    }
                }
                FamilySpec::Explicit(members)
            }
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn split_last_arg(args: &str) -> Option<(&str, &str)> {
    let (i, _) = top_level_commas(args).last()?;
    Some((&args[..i], &args[i + 1..]))
}

fn split_family_seq(args: &str, horizon: u32) -> Option<(FamilySpec, SeqSet)> {
    for (i, _) in top_level_commas(args) {
        if let (Ok(x), Ok(l)) = (
            FamilySpec::parse(&args[..i], horizon),
            SeqSet::parse(&args[i + 1..], horizon),
        ) {
            return Some((x, l));
        }
    }
    None
}

impl fmt::Display for FamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilySpec::Cube(k) => write!(f, "cube({k})"),
            FamilySpec::RXi(xi) => write!(f, "rxi({xi})"),
            FamilySpec::FMin { a, b } => write!(f, "fmin({a},{b})"),
            FamilySpec::Hat(x) => write!(f, "hat({x})"),
            FamilySpec::Maximals(x) => write!(f, "max({x})"),
            FamilySpec::Derivative(x, n) => write!(f, "deriv({x},{n})"),
            FamilySpec::Restrict(x, l) => write!(f, "restrict({x},{l})"),
            FamilySpec::RestrictGap(x, l) => write!(f, "gaprestrict({x},{l})"),
            FamilySpec::Shift(x, l) => write!(f, "shift({x},{l})"),
            FamilySpec::Preimage(x, l) => write!(f, "preimage({x},{l})"),
            FamilySpec::Explicit(m) => {
                f.write_str("sets(")?;
                for (i, s) in m.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{s}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl serde::Serialize for FamilySpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

fn with_head(n: u32, s: &[u32]) -> Vec<u32> {
    let mut v = Vec::with_capacity(s.len() + 1);
    v.push(n);
    v.extend_from_slice(s);
    v
}

fn subset_of(s: &[u32], l: &SeqSet) -> Result<bool> {
    for &x in s {
        if !l.contains(x)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `s ⊆ L` and consecutive elements of `s` have an element of `L` strictly
/// between them.
fn gap_ok(s: &[u32], l: &SeqSet) -> Result<bool> {
    let Some(idx) = l.preimage_slice(s)? else {
        return Ok(false);
    };
    Ok(idx.windows(2).all(|w| w[1] - w[0] >= 2))
}

/// Memoized recursion over the `R_ξ` construction:
/// `R_0 = {∅}`, `R_{ζ+1} = {{n} ∪ s : n < s, s ∈ R_ζ}` and, for limit `ξ`,
/// `R_ξ = ⋃_n {s ∈ R_{ξ[n]} : min s ≥ n}`.
#[derive(Default)]
struct RxiWalk {
    member: HashMap<(Ordinal, usize), bool>,
    ext: HashMap<(Ordinal, usize), bool>,
    res: HashMap<(Ordinal, usize), Option<Ordinal>>,
}

impl RxiWalk {
    fn contains(&mut self, xi: &Ordinal, s: &[u32]) -> bool {
        if let Some(k) = xi.to_u64() {
            return s.len() as u64 == k;
        }
        let key = (xi.clone(), s.len());
        if let Some(&v) = self.member.get(&key) {
            return v;
        }
        let v = match s.first() {
            None => false,
            Some(&m) if xi.is_successor() => {
                let _ = m;
                let pred = xi.predecessor().expect("successor");
                self.contains(&pred, &s[1..])
            }
            Some(&m) => (1..=u64::from(m)).any(|n| {
                let z = xi.fundamental(n).expect("limit");
                self.contains(&z, s)
            }),
        };
        self.member.insert(key, v);
        v
    }

    fn extends(&mut self, xi: &Ordinal, s: &[u32]) -> bool {
        if let Some(k) = xi.to_u64() {
            return (s.len() as u64) < k;
        }
        let key = (xi.clone(), s.len());
        if let Some(&v) = self.ext.get(&key) {
            return v;
        }
        let v = match s.first() {
            None => true,
            Some(_) if xi.is_successor() => {
                let pred = xi.predecessor().expect("successor");
                self.extends(&pred, &s[1..])
            }
            Some(&m) => (1..=u64::from(m)).any(|n| {
                let z = xi.fundamental(n).expect("limit");
                self.extends(&z, s)
            }),
        };
        self.ext.insert(key, v);
        v
    }

    fn residual(&mut self, xi: &Ordinal, t: &[u32]) -> Option<Ordinal> {
        if let Some(k) = xi.to_u64() {
            return k.checked_sub(t.len() as u64).map(Ordinal::finite);
        }
        let key = (xi.clone(), t.len());
        if let Some(v) = self.res.get(&key) {
            return v.clone();
        }
        let v = match t.first() {
            None => Some(xi.clone()),
            Some(_) if xi.is_successor() => {
                let pred = xi.predecessor().expect("successor");
                self.residual(&pred, &t[1..])
            }
            Some(&m) => (1..=u64::from(m))
                .filter_map(|n| {
                    let z = xi.fundamental(n).expect("limit");
                    self.residual(&z, t)
                })
                .max(),
        };
        self.res.insert(key, v.clone());
        v
    }
}

/// The unique member `s ⊑ S`, scanning prefixes of the enumeration of `S`
/// up to its horizon.
pub fn complete(f: &FamilySpec, seq: &SeqSet) -> Result<FinSet> {
    let mut prefix = Vec::new();
    for k in 0..=seq.horizon() {
        if k > 0 {
            prefix.push(seq.at(k)?);
        }
        if f.contains_slice(&prefix)? {
            return Ok(FinSet::from_sorted(prefix));
        }
        if !f.has_ext(&prefix)? {
            return Err(FamilyError::NotFoundWithinHorizon { searched: k });
        }
    }
    Err(FamilyError::NotFoundWithinHorizon {
        searched: seq.horizon(),
    })
}

#[derive(Debug, Clone)]
pub struct MaterializeLimits {
    pub universe_cap: u32,
    pub member_cap: usize,
}

impl Default for MaterializeLimits {
    fn default() -> Self {
        MaterializeLimits {
            universe_cap: 64,
            member_cap: 2_000_000,
        }
    }
}

/// An explicit family of subsets of `{1, …, universe_max}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaterializedFamily {
    universe_max: u32,
    members: BTreeSet<FinSet>,
    provenance: Option<FamilySpec>,
}

/// `{s ∈ F : s ⊆ {1..n}}` with the default limits.
pub fn materialize(f: &FamilySpec, n: u32) -> Result<MaterializedFamily> {
    materialize_with(f, n, &MaterializeLimits::default())
}

pub fn materialize_with(
    f: &FamilySpec,
    n: u32,
    limits: &MaterializeLimits,
) -> Result<MaterializedFamily> {
    if n > limits.universe_cap {
        return Err(FamilyError::UniverseTooLarge {
            requested: n,
            cap: limits.universe_cap,
        });
    }
    let candidates: Vec<u32> = (1..=n).collect();
    let members = f.members_within(&candidates, limits.member_cap)?;
    Ok(MaterializedFamily {
        universe_max: n,
        members: members.into_iter().collect(),
        provenance: Some(f.clone()),
    })
}

/// Flags computed exhaustively inside the universe. `spreading_within` only
/// considers shifted sets inside the universe and `compact_within` is
/// trivially true for a finite family, hence `boundary_limited`.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct RegularityReport {
    pub universe_max: u32,
    pub members: usize,
    pub thin: bool,
    pub hereditary: bool,
    pub spreading_within: bool,
    pub compact_within: bool,
    pub boundary_limited: bool,
    pub thin_witness: Option<(FinSet, FinSet)>,
    pub hereditary_witness: Option<(FinSet, FinSet)>,
    pub spreading_witness: Option<(FinSet, FinSet)>,
}

impl MaterializedFamily {
    pub fn from_members<I: IntoIterator<Item = FinSet>>(
        universe_max: u32,
        members: I,
    ) -> Result<Self> {
        let members: BTreeSet<FinSet> = members.into_iter().collect();
        if let Some(bad) = members
            .iter()
            .find(|s| FinSet::max(s).is_some_and(|m| m > universe_max))
        {
            return Err(FamilyError::Invalid(format!(
                "{bad} is not contained in {{1..{universe_max}}}"
            )));
        }
        Ok(MaterializedFamily {
            universe_max,
            members,
            provenance: None,
        })
    }

    pub fn universe_max(&self) -> u32 {
        self.universe_max
    }

    pub fn provenance(&self) -> Option<&FamilySpec> {
        self.provenance.as_ref()
    }

    pub fn members(&self) -> &BTreeSet<FinSet> {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, s: &FinSet) -> bool {
        self.members.contains(s)
    }

    /// `⊑`-closure within the same universe.
    pub fn hat(&self) -> MaterializedFamily {
        let mut out = BTreeSet::new();
        for s in &self.members {
            for k in 0..=s.len() {
                out.insert(FinSet::from_sorted(s.as_slice()[..k].to_vec()));
            }
        }
        MaterializedFamily {
            universe_max: self.universe_max,
            members: out,
            provenance: self.provenance.clone().map(FamilySpec::hat),
        }
    }

    /// The `⊑`-maximal members.
    pub fn maximals(&self) -> MaterializedFamily {
        let members = self
            .members
            .iter()
            .filter(|s| self.proper_extension_of(s).is_none())
            .cloned()
            .collect();
        MaterializedFamily {
            universe_max: self.universe_max,
            members,
            provenance: self.provenance.clone().map(FamilySpec::maximals),
        }
    }

    /// In lexicographic order every proper extension of `s` directly follows
    /// `s` or one of its extensions, so the successor decides the question.
    fn proper_extension_of(&self, s: &FinSet) -> Option<&FinSet> {
        use std::ops::Bound::{Excluded, Unbounded};
        self.members
            .range((Excluded(s), Unbounded))
            .next()
            .filter(|t| s.is_proper_initial_segment_of(t))
    }

    /// Rank of every node of the `⊑`-closure: leaves get 0 and inner nodes
    /// `max(rank(child) + 1)`.
    pub fn hat_ranks(&self) -> HashMap<FinSet, usize> {
        let hat = self.hat();
        let mut nodes: Vec<&FinSet> = hat.members.iter().collect();
        nodes.sort_by_key(|s| std::cmp::Reverse(s.len()));
        let mut rank: HashMap<FinSet, usize> = HashMap::with_capacity(nodes.len());
        for node in nodes {
            let r = rank.get(node).copied().unwrap_or(0);
            rank.insert(node.clone(), r);
            if let Some(parent) = node
                .len()
                .checked_sub(1)
                .map(|k| node.prefix(k).expect("k < len"))
            {
                let e = rank.entry(parent).or_insert(0);
                *e = (*e).max(r + 1);
            }
        }
        rank
    }

    /// `o_{hat M}(∅)`, or `None` for the empty family.
    pub fn rank_finite(&self) -> Option<usize> {
        self.hat_ranks().get(&FinSet::empty()).copied()
    }

    pub fn regularity_report(&self) -> RegularityReport {
        let thin_witness = self
            .members
            .iter()
            .find_map(|s| self.proper_extension_of(s).map(|t| (s.clone(), t.clone())));
        let hereditary_witness = self.members.iter().find_map(|s| {
            (0..s.len()).find_map(|i| {
                let mut v = s.as_slice().to_vec();
                v.remove(i);
                let t = FinSet::from_sorted(v);
                (!self.members.contains(&t)).then(|| (s.clone(), t))
            })
        });
        // Closure under single-element increments yields closure under
        // every pointwise-larger set inside the universe.
        let spreading_witness = self.members.iter().find_map(|s| {
            let v = s.as_slice();
            (0..v.len()).find_map(|i| {
                let next = v[i] + 1;
                let room = v
                    .get(i + 1)
                    .map_or(next <= self.universe_max, |&u| next < u);
                if !room {
                    return None;
                }
                let mut w = v.to_vec();
                w[i] = next;
                let t = FinSet::from_sorted(w);
                (!self.members.contains(&t)).then(|| (s.clone(), t))
            })
        });
        RegularityReport {
            universe_max: self.universe_max,
            members: self.members.len(),
            thin: thin_witness.is_none(),
            hereditary: hereditary_witness.is_none(),
            spreading_within: spreading_witness.is_none(),
            compact_within: true,
            boundary_limited: true,
            thin_witness,
            hereditary_witness,
            spreading_witness,
        }
    }
}

/// Result of [`embed_shift`]: the first `len` elements of `L` and the number
/// of members `s` whose image `L(s)` was verified.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub seq: SeqSet,
    pub verified_members: usize,
}

/// Default search window for each new element of an embedding.
pub const EMBED_SCAN_CAP: u32 = 100_000;

/// Builds `L(1) < … < L(len)` with `L(s) ∈ S` for every `s ∈ R` with
/// `max s ≤ len`, for `o(R) ≤ o(S)`.
///
/// Each `L(j)` is the least value keeping, for every node `t` of the closure
/// of `R` that ends at `j`, the residual order of `S` at `L(t)` at least
/// the residual order of `R` at `t`. Spreading makes the condition monotone
/// in the candidate value, and residual orders drop strictly along the
/// tree, so a valid value always exists.
pub fn embed_shift(r: &FamilySpec, s: &FamilySpec, len: u32) -> Result<Embedding> {
    let (or, os) = (r.order()?, s.order()?);
    if or > os {
        return Err(FamilyError::OrderGate { lhs: or, rhs: os });
    }
    // Nodes of the closure of R whose residual order is positive, with images.
    let mut open: Vec<(Vec<u32>, Vec<u32>)> = vec![(Vec::new(), Vec::new())];
    let mut values: Vec<u32> = Vec::with_capacity(len as usize);
    let mut prev = 0u32;
    for j in 1..=len {
        let mut needs: Vec<(usize, Ordinal)> = Vec::new();
        for (idx, (node, _)) in open.iter().enumerate() {
            let mut child = node.clone();
            child.push(j);
            if let Some(o) = r.residual(&child)? {
                needs.push((idx, o));
            }
        }
        let mut chosen = None;
        let mut image = Vec::new();
        'scan: for x in prev + 1..=prev.saturating_add(EMBED_SCAN_CAP) {
            for (idx, need) in &needs {
                image.clear();
                image.extend_from_slice(&open[*idx].1);
                image.push(x);
                match s.residual(&image)? {
                    Some(o) if o >= *need => {}
                    _ => continue 'scan,
                }
            }
            chosen = Some(x);
            break;
        }
        let x = chosen.ok_or_else(|| {
            FamilyError::Unsupported(format!(
                "no admissible value for L({j}) within {EMBED_SCAN_CAP} of L({})",
                j - 1
            ))
        })?;
        for (idx, need) in needs {
            if !need.is_zero() {
                let (mut node, mut img) = open[idx].clone();
                node.push(j);
                img.push(x);
                open.push((node, img));
            }
        }
        values.push(x);
        prev = x;
    }
    let seq = SeqSet::finite_prefix(values)?;
    let verified_members = verify_embedding(r, s, &seq, len)?;
    Ok(Embedding {
        seq,
        verified_members,
    })
}

/// Checks `L(s) ∈ S` for every nonempty `s ∈ R` inside `{1..len}`; returns
/// the number of members checked.
pub fn verify_embedding(r: &FamilySpec, s: &FamilySpec, l: &SeqSet, len: u32) -> Result<usize> {
    let candidates: Vec<u32> = (1..=len).collect();
    let mut checked = 0usize;
    let mut failure: Option<Result<String>> = None;
    r.for_each_member_within(&candidates, |m| {
        if m.is_empty() {
            return ControlFlow::Continue(());
        }
        checked += 1;
        let image = match l.relocate_slice(m) {
            Ok(i) => i,
            Err(e) => {
                failure = Some(Err(e.into()));
                return ControlFlow::Break(());
            }
        };
        match s.contains_slice(&image) {
            Ok(true) => ControlFlow::Continue(()),
            Ok(false) => {
                failure = Some(Ok(format!(
                    "L({}) = {} is not in the target",
                    FinSet::from_sorted(m.to_vec()),
                    FinSet::from_sorted(image)
                )));
                ControlFlow::Break(())
            }
            Err(e) => {
                failure = Some(Err(e));
                ControlFlow::Break(())
            }
        }
    })?;
    match failure {
        None => Ok(checked),
        Some(Ok(msg)) => Err(FamilyError::VerificationFailed(msg)),
        Some(Err(e)) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fs(v: &[u32]) -> FinSet {
        FinSet::new(v.to_vec()).unwrap()
    }

    fn f(text: &str) -> FamilySpec {
        FamilySpec::parse(text, 1000).unwrap()
    }

    fn o(s: &str) -> Ordinal {
        s.parse().unwrap()
    }

    /// All subsets of {1..n}, by bitmask.
    fn all_subsets(n: u32) -> Vec<FinSet> {
        (0u64..1 << n)
            .map(|mask| FinSet::from_sorted((1..=n).filter(|i| mask >> (i - 1) & 1 == 1).collect()))
            .collect()
    }

    /// Brute-force unroll of the recursive construction with canonical
    /// fundamental sequences, written independently of `RxiWalk`.
    fn rxi_oracle(xi: &Ordinal, s: &[u32]) -> bool {
        if xi.is_zero() {
            s.is_empty()
        } else if let Some(z) = xi.predecessor() {
            !s.is_empty() && rxi_oracle(&z, &s[1..])
        } else {
            !s.is_empty() && (1..=s[0] as u64).any(|n| rxi_oracle(&xi.fundamental(n).unwrap(), s))
        }
    }

    #[test]
    fn contains_examples() {
        assert!(f("cube(2)").contains(&fs(&[3, 7])).unwrap());
        // {2,5,9} ∈ [ℕ]³ and 2 < {5,9}.
        assert!(f("deriv(cube(3),2)").contains(&fs(&[5, 9])).unwrap());
        assert!(!f("deriv(cube(3),6)").contains(&fs(&[5, 9])).unwrap());
        let expected = rxi_oracle(&o("w"), &[2, 4, 6]);
        assert_eq!(f("rxi(w)").contains(&fs(&[2, 4, 6])).unwrap(), expected);
        assert!(!expected, "|s| = 3 needs min s ≥ 3");
        assert!(f("rxi(w)").contains(&fs(&[3, 4, 6])).unwrap());
    }

    #[test]
    fn rxi_membership_matches_unrolled_recursion() {
        for xi in ["0", "1", "3", "w", "w+1", "w*2", "w^2", "w^2+w*3+1", "w^w"] {
            let xi = o(xi);
            let fam = FamilySpec::rxi(xi.clone());
            for s in all_subsets(9) {
                assert_eq!(
                    fam.contains(&s).unwrap(),
                    rxi_oracle(&xi, s.as_slice()),
                    "rxi({xi}) at {s}"
                );
            }
        }
    }

    #[test]
    fn hat_membership_matches_brute_force_extension() {
        // Any member extending t within {1..12} witnesses t ∈ hat(F); for
        // t inside {1..4} every family below has such a witness if any.
        for fam in [
            "cube(3)",
            "fmin(1,0)",
            "fmin(2,-1)",
            "rxi(w)",
            "rxi(w+2)",
            "rxi(3)",
        ] {
            let fam = f(fam);
            let members: Vec<FinSet> = all_subsets(12)
                .into_iter()
                .filter(|s| fam.contains(s).unwrap())
                .collect();
            for t in all_subsets(4) {
                let brute = members.iter().any(|m| t.is_initial_segment_of(m));
                assert_eq!(fam.hat_contains(&t).unwrap(), brute, "{fam} at {t}");
            }
        }
    }

    #[test]
    fn transform_examples() {
        let evens = "arith:2:2";
        let restrict = f(&format!("restrict(cube(2),{evens})"));
        assert!(restrict.contains(&fs(&[2, 6])).unwrap());
        assert!(!restrict.contains(&fs(&[2, 5])).unwrap());
        let gap = f(&format!("gaprestrict(cube(2),{evens})"));
        assert!(gap.contains(&fs(&[2, 6])).unwrap());
        assert!(!gap.contains(&fs(&[2, 4])).unwrap());
        let pre = f(&format!("preimage(cube(2),{evens})"));
        assert!(pre.contains(&fs(&[1, 3])).unwrap());
        let shift = f(&format!("shift(cube(2),{evens})"));
        assert!(shift.contains(&fs(&[2, 6])).unwrap());
        assert!(!shift.contains(&fs(&[3, 6])).unwrap());
    }

    #[test]
    fn gap_restriction_matches_witness_oracle() {
        let l = SeqSet::parse("arith:2:3", 100).unwrap();
        let lset: Vec<u32> = l.values(100).unwrap();
        let fam = FamilySpec::cube(3).restrict_gap(l);
        for s in all_subsets(14) {
            let v = s.as_slice();
            let oracle = v.len() == 3
                && v.iter().all(|x| lset.contains(x))
                && v.windows(2)
                    .all(|w| lset.iter().any(|&x| w[0] < x && x < w[1]));
            assert_eq!(fam.contains(&s).unwrap(), oracle, "{s}");
        }
    }

    #[test]
    fn preimage_roundtrip_with_relocate() {
        let l = SeqSet::parse("comp(arith:3:2,arith:1:2)", 60).unwrap();
        let base = f("fmin(1,0)");
        let pre = base.clone().preimage(l.clone());
        for s in all_subsets(10) {
            let image = l.relocate(&s).unwrap();
            assert_eq!(pre.contains(&s).unwrap(), base.contains(&image).unwrap());
        }
    }

    #[test]
    fn complete_examples() {
        let l = SeqSet::parse("arith:5:2", 100).unwrap();
        assert_eq!(complete(&f("cube(3)"), &l).unwrap(), fs(&[5, 7, 9]));
        let l = SeqSet::parse("arith:3:1", 100).unwrap();
        assert_eq!(complete(&f("fmin(1,0)"), &l).unwrap(), fs(&[3, 4, 5]));
        let l = SeqSet::parse("arith:1:2", 100).unwrap();
        assert!(matches!(
            complete(&f("sets({2,4})"), &l),
            Err(FamilyError::NotFoundWithinHorizon { .. })
        ));
        let short = SeqSet::parse("arith:50:1", 10).unwrap();
        assert!(matches!(
            complete(&f("fmin(1,0)"), &short),
            Err(FamilyError::NotFoundWithinHorizon { searched: 10 })
        ));
    }

    #[test]
    fn materialize_examples() {
        assert_eq!(materialize(&f("cube(2)"), 4).unwrap().len(), 6);
        let fm = materialize(&f("fmin(1,0)"), 4).unwrap();
        let oracle: BTreeSet<FinSet> = all_subsets(4)
            .into_iter()
            .filter(|s| s.min().is_some_and(|m| s.len() == m as usize))
            .collect();
        assert_eq!(fm.members(), &oracle);
        assert_eq!(
            oracle,
            [fs(&[1]), fs(&[2, 3]), fs(&[2, 4])].into_iter().collect()
        );
        let pairs: BTreeSet<FinSet> = (1..=3u32)
            .flat_map(|n| (n + 1..=3).map(move |m| fs(&[n, m])))
            .collect();
        assert_eq!(materialize(&f("rxi(2)"), 3).unwrap().members(), &pairs);
        assert_eq!(materialize(&f("cube(2)"), 3).unwrap().members(), &pairs);
        assert!(matches!(
            materialize(&f("cube(2)"), 1000),
            Err(FamilyError::UniverseTooLarge { .. })
        ));
    }

    #[test]
    fn materialized_membership_agrees_with_spec() {
        for fam in [
            "cube(3)",
            "hat(fmin(1,0))",
            "max(rxi(w))",
            "deriv(rxi(w*2),3)",
        ] {
            let fam = f(fam);
            let m = materialize(&fam, 10).unwrap();
            for s in all_subsets(10) {
                assert_eq!(m.contains(&s), fam.contains(&s).unwrap(), "{fam} at {s}");
            }
        }
    }

    #[test]
    fn hat_and_maximals_examples() {
        let m = MaterializedFamily::from_members(3, [fs(&[1, 2])]).unwrap();
        let h = m.hat();
        assert_eq!(
            h.members(),
            &[FinSet::empty(), fs(&[1]), fs(&[1, 2])]
                .into_iter()
                .collect()
        );
        assert_eq!(h.hat(), h);
        assert_eq!(h.maximals(), m);
        // Prefixes of pairs inside {1..4}: {4} starts no pair there.
        let c2 = materialize(&f("cube(2)"), 4).unwrap().hat();
        let oracle: BTreeSet<FinSet> = all_subsets(4)
            .into_iter()
            .filter(|s| s.len() < 2 && s.as_slice() != [4] || s.len() == 2)
            .collect();
        assert_eq!(c2.members(), &oracle);
        let spec_hat = materialize(&f("hat(cube(2))"), 4).unwrap();
        let oracle: BTreeSet<FinSet> = all_subsets(4)
            .into_iter()
            .filter(|s| s.len() <= 2)
            .collect();
        assert_eq!(spec_hat.members(), &oracle);
        let her =
            MaterializedFamily::from_members(2, [FinSet::empty(), fs(&[1]), fs(&[2])]).unwrap();
        assert_eq!(
            her.maximals().members(),
            &[fs(&[1]), fs(&[2])].into_iter().collect()
        );
        assert!(MaterializedFamily::from_members(2, [fs(&[3])]).is_err());
    }

    #[test]
    fn order_examples() {
        assert_eq!(f("cube(3)").order().unwrap(), o("3"));
        assert_eq!(f("rxi(w*2+1)").order().unwrap(), o("w*2+1"));
        assert_eq!(f("max(rxi(w))").order().unwrap(), o("w"));
        assert_eq!(f("fmin(1,0)").order().unwrap(), o("w"));
        assert_eq!(f("fmin(0,4)").order().unwrap(), o("4"));
        assert_eq!(f("deriv(cube(3),5)").order().unwrap(), o("2"));
        assert_eq!(f("deriv(fmin(1,0),5)").order().unwrap(), o("4"));
        assert_eq!(f("deriv(rxi(w+3),5)").order().unwrap(), o("w+2"));
        assert_eq!(f("deriv(rxi(w),5)").order().unwrap(), o("4"));
        assert_eq!(f("restrict(rxi(w^2),arith:3:7)").order().unwrap(), o("w^2"));
        assert_eq!(f("sets({1,2,3},{4})").order().unwrap(), o("3"));
        assert!(matches!(
            f("deriv(cube(0),1)").order(),
            Err(FamilyError::EmptyFamily)
        ));
    }

    #[test]
    fn rank_examples() {
        // Brute-force rank oracle: longest chain ∅ ⊏ … inside the closure.
        fn rank_oracle(members: &[FinSet]) -> usize {
            members.iter().map(FinSet::len).max().unwrap()
        }
        for n in 2..=6 {
            let m = materialize(&f("cube(2)"), n).unwrap();
            assert_eq!(m.rank_finite(), Some(2));
            let v: Vec<FinSet> = m.members().iter().cloned().collect();
            assert_eq!(rank_oracle(&v), 2);
        }
        let empty_only = MaterializedFamily::from_members(5, [FinSet::empty()]).unwrap();
        assert_eq!(empty_only.rank_finite(), Some(0));
        assert_eq!(
            MaterializedFamily::from_members(5, [])
                .unwrap()
                .rank_finite(),
            None
        );
    }

    #[test]
    fn rank_of_truncated_rxi_omega() {
        // Exhaustive tree rank: the closure of R_ω inside {1..n} is
        // {t : |t| ≤ min t}; the deepest chain starting at m has length
        // min(m, n - m + 1).
        let mut last = 0;
        for n in 1..=14 {
            let rank = materialize(&f("rxi(w)"), n).unwrap().rank_finite().unwrap();
            let oracle = (1..=n).map(|m| m.min(n - m + 1)).max().unwrap() as usize;
            assert_eq!(rank, oracle, "n = {n}");
            assert!(rank >= last);
            last = rank;
        }
    }

    #[test]
    fn regularity_examples() {
        let c2 = materialize(&f("cube(2)"), 5).unwrap();
        let r = c2.regularity_report();
        assert!(r.thin && !r.hereditary && r.spreading_within && r.compact_within);
        assert!(r.boundary_limited);
        assert!(!c2.hat().regularity_report().hereditary, "{{5}} is cut off");
        assert!(
            materialize(&f("hat(cube(2))"), 5)
                .unwrap()
                .regularity_report()
                .hereditary
        );
        let chain =
            MaterializedFamily::from_members(2, [FinSet::empty(), fs(&[1]), fs(&[1, 2])]).unwrap();
        let r = chain.regularity_report();
        assert!(!r.thin);
        assert!(r.thin_witness.is_some());
        let fm = materialize(&f("fmin(1,0)"), 6).unwrap().regularity_report();
        assert!(fm.thin && !fm.spreading_within);
        assert!(
            materialize(&f("hat(fmin(1,0))"), 6)
                .unwrap()
                .regularity_report()
                .spreading_within
        );
    }

    #[test]
    fn embed_examples() {
        let e = embed_shift(&f("hat(cube(2))"), &f("hat(cube(3))"), 50).unwrap();
        assert_eq!(e.seq.values(50).unwrap(), (1..=50).collect::<Vec<_>>());
        assert_eq!(e.verified_members, 50 + 50 * 49 / 2);

        let e = embed_shift(&f("hat(cube(2))"), &f("rxi(w)"), 50).unwrap();
        let l1 = e.seq.at(1).unwrap();
        assert!(l1 >= 2, "pairs {{L(1), L(j)}} need min ≥ 2");
        // Exhaustive oracle independent of the construction.
        for a in 1..=50u32 {
            assert!(f("rxi(w)").contains(&fs(&[e.seq.at(a).unwrap()])).unwrap());
            for b in a + 1..=50 {
                let img = fs(&[e.seq.at(a).unwrap(), e.seq.at(b).unwrap()]);
                assert!(f("rxi(w)").contains(&img).unwrap());
            }
        }

        assert!(matches!(
            embed_shift(&f("rxi(3)"), &f("rxi(2)"), 10),
            Err(FamilyError::OrderGate { .. })
        ));
    }

    #[test]
    fn embed_into_higher_order_targets() {
        for (r, s) in [
            ("hat(cube(3))", "hat(fmin(1,0))"),
            ("hat(fmin(1,0))", "hat(rxi(w*2))"),
            ("hat(rxi(w))", "hat(fmin(1,0))"),
            ("hat(cube(2))", "hat(cube(2))"),
        ] {
            let e = embed_shift(&f(r), &f(s), 16).unwrap();
            assert!(e.verified_members > 0, "{r} into {s}");
        }
    }

    #[test]
    fn dsl_roundtrip() {
        for text in [
            "cube(3)",
            "rxi(w^2+1)",
            "fmin(1,0)",
            "hat(max(rxi(w)))",
            "deriv(cube(3),2)",
            "restrict(cube(2),arith:2:2)",
            "gaprestrict(hat(fmin(2,-1)),list:{1,4};arith:9:3)",
            "shift(cube(1),comp(arith:2:2,all))",
            "preimage(cube(2),arith:2:2)",
            "sets({1,3},{2,4})",
            "sets()",
        ] {
            assert_eq!(f(text).to_string(), text);
        }
        assert!(FamilySpec::parse("fmin(0,0)", 10).is_err());
        assert!(FamilySpec::parse("cube(x)", 10).is_err());
        assert!(FamilySpec::parse("nope(1)", 10).is_err());
    }

    #[test]
    fn explicit_inside_restriction_uses_bounded_search() {
        let fam = f("restrict(sets({2,4,6},{2,5}),arith:2:2)");
        assert!(fam.has_extension(&fs(&[2])).unwrap());
        assert!(fam.has_extension(&fs(&[2, 4])).unwrap());
        assert!(!fam.has_extension(&fs(&[2, 4, 6])).unwrap());
        let fam = f("restrict(sets({2,5}),arith:2:2)");
        assert!(!fam.has_extension(&fs(&[2])).unwrap());
    }
}
