//! Sparse vectors, norms (including the plegma norm over a family),
//! F-sequences and the spreading-model estimator with its diagnostics.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::ControlFlow;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::family::{FamilyError, FamilySpec};
use crate::famset::{top_level_commas, FamsetError, FinSet, SeqSet};
use crate::plegma::{enumerate_plm, plegma_pair, EnumConfig, MapTable, PlegmaError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecnormError {
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Plegma(#[from] PlegmaError),
    #[error("cannot parse {0:?}")]
    Parse(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("the plegma norm needs an lp or sup base")]
    UnsupportedBase,
    #[error("cannot decode coordinate {0}")]
    Decode(u64),
    #[error("{0} is not a member of the coded family")]
    NotInFamily(FinSet),
    #[error("expected a set of size {expected}, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("support of {0} coordinates is too large for the plegma norm")]
    SupportTooLarge(usize),
    #[error("no tuples found within the horizon")]
    NoTuplesFound,
    #[error(
        "Cesàro means drift by {drift} between n = {from} and n = {to} (tolerance {tolerance})"
    )]
    NotStabilized {
        from: usize,
        to: usize,
        drift: f64,
        tolerance: f64,
    },
    #[error("every estimate is below {0}; the sequence looks trivial")]
    DegenerateNorm(f64),
}

impl From<FamsetError> for SpecnormError {
    fn from(e: FamsetError) -> Self {
        SpecnormError::Family(e.into())
    }
}

pub type Result<T> = std::result::Result<T, SpecnormError>;

/// Largest support handled by the exact plegma norm.
pub const PLEGMA_SUPPORT_CAP: usize = 24;

/// A finitely supported vector on coordinates `1, 2, …`, without stored
/// zeros.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVec {
    entries: Vec<(u64, f64)>,
}

impl SparseVec {
    pub fn zero() -> Self {
        SparseVec::default()
    }

    pub fn unit(i: u64) -> Result<Self> {
        Self::from_pairs([(i, 1.0)])
    }

    /// Sums repeated coordinates and drops zeros.
    pub fn from_pairs<I: IntoIterator<Item = (u64, f64)>>(pairs: I) -> Result<Self> {
        let mut map: BTreeMap<u64, f64> = BTreeMap::new();
        for (i, v) in pairs {
            if i == 0 {
                return Err(SpecnormError::Invalid("coordinates start at 1".into()));
            }
            if !v.is_finite() {
                return Err(SpecnormError::Invalid(format!("non-finite value at {i}")));
            }
            *map.entry(i).or_insert(0.0) += v;
        }
        Ok(SparseVec {
            entries: map.into_iter().filter(|&(_, v)| v != 0.0).collect(),
        })
    }

    fn from_sorted_unchecked(entries: Vec<(u64, f64)>) -> Self {
        SparseVec { entries }
    }

    pub fn entries(&self) -> &[(u64, f64)] {
        &self.entries
    }

    pub fn get(&self, i: u64) -> f64 {
        self.entries
            .binary_search_by_key(&i, |&(j, _)| j)
            .map_or(0.0, |k| self.entries[k].1)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn support(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().map(|&(i, _)| i)
    }

    /// `self + c·other`.
    pub fn axpy(&self, c: f64, other: &SparseVec) -> SparseVec {
        let (a, b) = (&self.entries, &other.entries);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            let (k, v) = match (a.get(i), b.get(j)) {
                (Some(&(ka, va)), Some(&(kb, vb))) if ka == kb => {
                    i += 1;
                    j += 1;
                    (ka, va + c * vb)
                }
                (Some(&(ka, va)), Some(&(kb, _))) if ka < kb => {
                    i += 1;
                    (ka, va)
                }
                (Some(&(ka, va)), None) => {
                    i += 1;
                    (ka, va)
                }
                (_, Some(&(kb, vb))) => {
                    j += 1;
                    (kb, c * vb)
                }
                (None, None) => unreachable!(),
            };
            if v != 0.0 {
                out.push((k, v));
            }
        }
        SparseVec::from_sorted_unchecked(out)
    }

    pub fn add(&self, other: &SparseVec) -> SparseVec {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &SparseVec) -> SparseVec {
        self.axpy(-1.0, other)
    }

    pub fn scaled(&self, c: f64) -> SparseVec {
        SparseVec::from_sorted_unchecked(
            self.entries
                .iter()
                .map(|&(i, v)| (i, c * v))
                .filter(|&(_, v)| v != 0.0)
                .collect(),
        )
    }
}

impl fmt::Display for SparseVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.entries.is_empty() {
            return f.write_str("0");
        }
        for (n, (i, v)) in self.entries.iter().enumerate() {
            if n > 0 {
                f.write_str(",")?;
            }
            write!(f, "{i}:{v}")?;
        }
        Ok(())
    }
}

impl FromStr for SparseVec {
    type Err = SpecnormError;

    /// `i:v,i:v`; `0` or an empty string is the zero vector.
    fn from_str(text: &str) -> Result<Self> {
        let t = text.trim();
        let t = t
            .strip_prefix('[')
            .and_then(|r| r.strip_suffix(']'))
            .unwrap_or(t);
        if t.is_empty() || t == "0" {
            return Ok(SparseVec::zero());
        }
        let bad = || SpecnormError::Parse(text.to_string());
        let mut pairs = Vec::new();
        for item in t.split(',') {
            let (i, v) = item.split_once(':').ok_or_else(bad)?;
            pairs.push((
                i.trim().parse::<u64>().map_err(|_| bad())?,
                v.trim().parse::<f64>().map_err(|_| bad())?,
            ));
        }
        SparseVec::from_pairs(pairs)
    }
}

impl Serialize for SparseVec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Coordinate of the basis vector `e_s`: `1 + Σ_{i∈s} 2^(i-1)`, for sets with
/// elements at most 63.
pub fn code_of(s: &FinSet) -> Result<u64> {
    let mut code = 0u64;
    for i in s.iter() {
        if i > 63 {
            return Err(SpecnormError::Invalid(format!(
                "{s} has elements above 63 and has no coordinate"
            )));
        }
        code |= 1 << (i - 1);
    }
    code.checked_add(1)
        .ok_or_else(|| SpecnormError::Invalid(format!("{s} has no coordinate")))
}

/// Inverse of [`code_of`].
pub fn decode_code(c: u64) -> Result<FinSet> {
    if c == 0 {
        return Err(SpecnormError::Decode(c));
    }
    let bits = c - 1;
    Ok(FinSet::from_sorted(
        (1..=64u32).filter(|i| bits >> (i - 1) & 1 == 1).collect(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub enum NormSpec {
    Lp(f64),
    Sup,
    /// `‖x‖_G = sup ‖Σ_{i≤l} a_{t_i} e_i‖` over plegma tuples `(t_i)` of `G`
    /// with `l ≤ t_1(1)`, coordinates coded by [`code_of`].
    Plegma {
        family: FamilySpec,
        base: Box<NormSpec>,
    },
}

impl NormSpec {
    pub fn lp(p: f64) -> Result<Self> {
        if !(p.is_finite() && p >= 1.0) {
            return Err(SpecnormError::Invalid(format!(
                "lp needs 1 ≤ p < ∞, got {p}"
            )));
        }
        Ok(NormSpec::Lp(p))
    }

    pub fn plegma(family: FamilySpec, base: NormSpec) -> Result<Self> {
        if matches!(base, NormSpec::Plegma { .. }) {
            return Err(SpecnormError::UnsupportedBase);
        }
        Ok(NormSpec::Plegma {
            family,
            base: Box::new(base),
        })
    }

    /// `lp(2)`, `sup`, `plegma(G, lp(1))`.
    pub fn parse(text: &str, horizon: u32) -> Result<Self> {
        let t = text.trim();
        let bad = || SpecnormError::Parse(text.to_string());
        if t == "sup" {
            return Ok(NormSpec::Sup);
        }
        let (name, args) = t
            .strip_suffix(')')
            .and_then(|r| r.split_once('('))
            .ok_or_else(bad)?;
        match name.trim() {
            "lp" => NormSpec::lp(args.trim().parse().map_err(|_| bad())?),
            "plegma" => {
                for (i, _) in top_level_commas(args) {
                    if let (Ok(g), Ok(base)) = (
                        FamilySpec::parse(&args[..i], horizon),
                        NormSpec::parse(&args[i + 1..], horizon),
                    ) {
                        return NormSpec::plegma(g, base);
                    }
                }
                Err(bad())
            }
            _ => Err(bad()),
        }
    }

    /// Norm of a vector given by its coordinate values only; valid for
    /// `Lp` and `Sup`.
    fn of_values<I: Iterator<Item = f64>>(&self, values: I) -> f64 {
        match self {
            NormSpec::Lp(p) => lp_of(*p, values.map(|v| (v, 1))),
            NormSpec::Sup => values.fold(0.0, |m, v| m.max(v.abs())),
            NormSpec::Plegma { .. } => unreachable!("plegma norms need coordinates"),
        }
    }
}

/// `(Σ count·|v|^p)^(1/p)`.
fn lp_of<I: Iterator<Item = (f64, u64)>>(p: f64, values: I) -> f64 {
    if p == 1.0 {
        values.map(|(v, c)| c as f64 * v.abs()).sum()
    } else if p == 2.0 {
        values.map(|(v, c)| c as f64 * v * v).sum::<f64>().sqrt()
    } else {
        values
            .map(|(v, c)| c as f64 * v.abs().powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    }
}

impl fmt::Display for NormSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormSpec::Lp(p) => write!(f, "lp({p})"),
            NormSpec::Sup => f.write_str("sup"),
            NormSpec::Plegma { family, base } => write!(f, "plegma({family},{base})"),
        }
    }
}

impl Serialize for NormSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

pub fn norm_eval(n: &NormSpec, x: &SparseVec) -> Result<f64> {
    match n {
        NormSpec::Lp(_) | NormSpec::Sup => Ok(n.of_values(x.entries.iter().map(|&(_, v)| v))),
        NormSpec::Plegma { family, base } => plegma_norm(family, base, x),
    }
}

/// Deleting zero coefficients from a plegma tuple leaves a plegma tuple with
/// no smaller first element, and the base norm is spreading and
/// 1-unconditional, so the supremum runs over plegma chains inside the
/// support.
fn plegma_norm(g: &FamilySpec, base: &NormSpec, x: &SparseVec) -> Result<f64> {
    let codes: Vec<u64> = x.support().collect();
    let support = PlegmaSupport::new(g, base, &codes, &mut HashMap::new())?;
    Ok(support.eval(&x.entries.iter().map(|&(_, v)| v).collect::<Vec<_>>()))
}

/// The plegma structure of a fixed set of coordinates, reusable for any
/// values on them.
struct PlegmaSupport {
    /// Position in the caller's coordinate list, in plegma order.
    order: Vec<usize>,
    /// `compat[i][j]`: the sets at sorted positions `i < j` form a plegma
    /// pair.
    compat: Vec<Vec<bool>>,
    /// `t(1)` of each sorted set.
    caps: Vec<usize>,
    /// `None` for a sup base.
    p: Option<f64>,
}

impl PlegmaSupport {
    fn new(
        g: &FamilySpec,
        base: &NormSpec,
        codes: &[u64],
        members: &mut HashMap<u64, bool>,
    ) -> Result<Self> {
        let p = match base {
            NormSpec::Lp(p) => Some(*p),
            NormSpec::Sup => None,
            NormSpec::Plegma { .. } => return Err(SpecnormError::UnsupportedBase),
        };
        let mut sets = Vec::with_capacity(codes.len());
        for &c in codes {
            let s = decode_code(c)?;
            let member = match members.get(&c) {
                Some(&m) => m,
                None => {
                    let m = !s.is_empty() && g.contains(&s)?;
                    members.insert(c, m);
                    m
                }
            };
            if !member {
                return Err(SpecnormError::NotInFamily(s));
            }
            sets.push(s);
        }
        if p.is_some() && sets.len() > PLEGMA_SUPPORT_CAP {
            return Err(SpecnormError::SupportTooLarge(sets.len()));
        }
        // Plegma tuples list their parts in increasing order of first elements.
        let mut order: Vec<usize> = (0..sets.len()).collect();
        order.sort_by(|&a, &b| sets[a].cmp(&sets[b]));
        let n = order.len();
        let compat = match p {
            Some(_) => (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            i < j
                                && plegma_pair(sets[order[i]].as_slice(), sets[order[j]].as_slice())
                        })
                        .collect()
                })
                .collect(),
            None => Vec::new(),
        };
        let caps = order
            .iter()
            .map(|&i| sets[i].as_slice()[0] as usize)
            .collect();
        Ok(PlegmaSupport {
            order,
            compat,
            caps,
            p,
        })
    }

    /// Norm of the vector with `values[i]` at the `i`-th coordinate.
    fn eval(&self, values: &[f64]) -> f64 {
        let Some(p) = self.p else {
            return values.iter().fold(0.0, |m, v| m.max(v.abs()));
        };
        let weights: Vec<f64> = self
            .order
            .iter()
            .map(|&i| values[i].abs().powf(p))
            .collect();
        let mut best = 0.0f64;
        let mut chain = Vec::with_capacity(weights.len());
        for first in 0..weights.len() {
            chain.clear();
            chain.push(first);
            clique_search(
                &self.compat,
                &weights,
                &mut chain,
                first + 1,
                self.caps[first],
                weights[first],
                &mut best,
            );
        }
        best.powf(1.0 / p)
    }
}

fn clique_search(
    compat: &[Vec<bool>],
    w: &[f64],
    chain: &mut Vec<usize>,
    from: usize,
    cap: usize,
    total: f64,
    best: &mut f64,
) {
    *best = best.max(total);
    if chain.len() == cap {
        return;
    }
    for j in from..w.len() {
        if chain.iter().all(|&i| compat[i][j]) {
            chain.push(j);
            clique_search(compat, w, chain, j + 1, cap, total + w[j], best);
            chain.pop();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FSeqSpec {
    /// `x_s = e_{max s}`.
    UnitAtMax,
    /// `x_s = e_{min s}`.
    UnitAtMin,
    /// `x_s = Σ_{i=s(1)}^{s(2)} e_i` for doubletons.
    IntervalSum,
    /// `x_s = Σ_{i∈s} e_i`.
    IndicatorSum,
    /// `x_t = e_t` for `t ∈ G`, coordinates coded by [`code_of`].
    BasisOfFamily(FamilySpec),
    /// `x_s = x0 + base(s)`.
    Shifted(Box<FSeqSpec>, SparseVec),
    /// Explicit values with an optional default for other sets.
    Table {
        entries: BTreeMap<FinSet, SparseVec>,
        default: Option<SparseVec>,
    },
}

impl FSeqSpec {
    pub fn shifted(self, x0: SparseVec) -> Self {
        FSeqSpec::Shifted(Box::new(self), x0)
    }

    pub fn constant(x: SparseVec) -> Self {
        FSeqSpec::Table {
            entries: BTreeMap::new(),
            default: Some(x),
        }
    }

    /// `x_s = e_{φ(s)}` for the keys of a map table.
    pub fn coded_table(table: &MapTable) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (k, v) in table.entries() {
            entries.insert(k.clone(), SparseVec::unit(code_of(v)?)?);
        }
        Ok(FSeqSpec::Table {
            entries,
            default: None,
        })
    }

    /// `unitmax`, `unitmin`, `interval`, `indicator`, `basisof(G)`,
    /// `shift(Q, vec)`, `const(vec)`.
    pub fn parse(text: &str, horizon: u32) -> Result<Self> {
        let t = text.trim();
        let bad = || SpecnormError::Parse(text.to_string());
        match t {
            "unitmax" => return Ok(FSeqSpec::UnitAtMax),
            "unitmin" => return Ok(FSeqSpec::UnitAtMin),
            "interval" => return Ok(FSeqSpec::IntervalSum),
            "indicator" => return Ok(FSeqSpec::IndicatorSum),
            _ => {}
        }
        let (name, args) = t
            .strip_suffix(')')
            .and_then(|r| r.split_once('('))
            .ok_or_else(bad)?;
        match name.trim() {
            "basisof" => Ok(FSeqSpec::BasisOfFamily(FamilySpec::parse(args, horizon)?)),
            "const" => Ok(FSeqSpec::constant(args.parse()?)),
            "shift" => {
                for (i, _) in top_level_commas(args) {
                    if let (Ok(q), Ok(x0)) = (
                        FSeqSpec::parse(&args[..i], horizon),
                        args[i + 1..].parse::<SparseVec>(),
                    ) {
                        return Ok(q.shifted(x0));
                    }
                }
                Err(bad())
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for FSeqSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FSeqSpec::UnitAtMax => f.write_str("unitmax"),
            FSeqSpec::UnitAtMin => f.write_str("unitmin"),
            FSeqSpec::IntervalSum => f.write_str("interval"),
            FSeqSpec::IndicatorSum => f.write_str("indicator"),
            FSeqSpec::BasisOfFamily(g) => write!(f, "basisof({g})"),
            FSeqSpec::Shifted(q, x0) => write!(f, "shift({q},{x0})"),
            FSeqSpec::Table { entries, default } => match (entries.is_empty(), default) {
                (true, Some(x)) => write!(f, "const({x})"),
                _ => write!(f, "table({} entries)", entries.len()),
            },
        }
    }
}

impl Serialize for FSeqSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

pub fn fseq_eval(q: &FSeqSpec, s: &FinSet) -> Result<SparseVec> {
    let unit = |i: Option<u32>| match i {
        Some(i) => SparseVec::unit(u64::from(i)),
        None => Err(SpecnormError::ArityMismatch {
            expected: 1,
            got: 0,
        }),
    };
    match q {
        FSeqSpec::UnitAtMax => unit(s.max()),
        FSeqSpec::UnitAtMin => unit(s.min()),
        FSeqSpec::IntervalSum => {
            if s.len() != 2 {
                return Err(SpecnormError::ArityMismatch {
                    expected: 2,
                    got: s.len(),
                });
            }
            let v = s.as_slice();
            Ok(SparseVec::from_sorted_unchecked(
                (v[0]..=v[1]).map(|i| (u64::from(i), 1.0)).collect(),
            ))
        }
        FSeqSpec::IndicatorSum => Ok(SparseVec::from_sorted_unchecked(
            s.iter().map(|i| (u64::from(i), 1.0)).collect(),
        )),
        FSeqSpec::BasisOfFamily(g) => {
            if !g.contains(s)? {
                return Err(SpecnormError::NotInFamily(s.clone()));
            }
            SparseVec::unit(code_of(s)?)
        }
        FSeqSpec::Shifted(base, x0) => Ok(x0.add(&fseq_eval(base, s)?)),
        FSeqSpec::Table { entries, default } => entries
            .get(s)
            .or(default.as_ref())
            .cloned()
            .ok_or_else(|| SpecnormError::Invalid(format!("the table has no value at {s}"))),
    }
}

#[derive(Debug, Clone)]
pub struct EstimateConfig {
    /// Tuples start at `L(threshold)` or later.
    pub threshold: u32,
    pub budget: Option<u64>,
    pub horizon: u32,
}

impl EstimateConfig {
    pub fn new(threshold: u32, horizon: u32) -> Self {
        EstimateConfig {
            threshold,
            budget: None,
            horizon,
        }
    }
}

/// Aggregate of `‖Σ a_i x_{s_i}‖` over the enumerated plegma tuples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub k: usize,
    pub coeffs: Vec<f64>,
    pub threshold: u32,
    pub tuple_count: u64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub spread: f64,
    pub coeffs_in_unit_box: bool,
    pub horizon_limited: bool,
    pub budget_exhausted: bool,
}

pub fn sm_estimate(
    f: &FamilySpec,
    q: &FSeqSpec,
    n: &NormSpec,
    coeffs: &[f64],
    l_seq: &SeqSet,
    cfg: &EstimateConfig,
) -> Result<EstimateReport> {
    let mut r = sm_estimate_batch(f, q, n, &[coeffs.to_vec()], l_seq, cfg)?;
    Ok(r.pop().expect("one report per coefficient vector"))
}

#[derive(Clone, Copy)]
struct Agg {
    min: f64,
    max: f64,
    sum: f64,
    count: u64,
}

impl Agg {
    fn new() -> Self {
        Agg {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            sum: 0.0,
            count: 0,
        }
    }

    fn add(&mut self, v: f64, times: u64) {
        self.min = self.min.min(v);
        self.max = self.max.max(v);
        self.sum += times as f64 * v;
        self.count += times;
    }
}

/// One enumeration pass serving several coefficient vectors of equal length.
///
/// For `Lp` the norm of `Σ a_i x_{s_i}` only depends on the multiset of
/// coordinate columns `(x_{s_1}(j), …, x_{s_k}(j))`, and for `Sup` on their
/// set, so tuples are grouped by that profile and each group is evaluated
/// once per coefficient vector.
pub fn sm_estimate_batch(
    f: &FamilySpec,
    q: &FSeqSpec,
    n: &NormSpec,
    coeff_sets: &[Vec<f64>],
    l_seq: &SeqSet,
    cfg: &EstimateConfig,
) -> Result<Vec<EstimateReport>> {
    let k = coeff_sets.first().map_or(0, Vec::len);
    if k == 0 || coeff_sets.iter().any(|c| c.len() != k) {
        return Err(SpecnormError::Invalid(
            "coefficient vectors must be nonempty and of equal length".into(),
        ));
    }
    if coeff_sets.iter().flatten().any(|a| !a.is_finite()) {
        return Err(SpecnormError::Invalid("coefficients must be finite".into()));
    }
    let mut cache: HashMap<Vec<u32>, SparseVec> = HashMap::new();
    let mut failure: Option<SpecnormError> = None;
    let enum_cfg = EnumConfig {
        l: k,
        first_min: cfg.threshold,
        budget: cfg.budget,
        horizon: cfg.horizon,
    };
    let eval_part = |p: &Vec<u32>, cache: &mut HashMap<Vec<u32>, SparseVec>| -> Result<()> {
        if !cache.contains_key(p.as_slice()) {
            let v = fseq_eval(q, &FinSet::from_sorted(p.clone()))?;
            cache.insert(p.clone(), v);
        }
        Ok(())
    };
    let mut aggs = vec![Agg::new(); coeff_sets.len()];
    let summary = match n {
        NormSpec::Lp(_) | NormSpec::Sup => {
            let dedupe_counts = matches!(n, NormSpec::Sup);
            let mut profiles: HashMap<Profile, u64> = HashMap::new();
            let summary = enumerate_plm(f, l_seq, &enum_cfg, |parts| {
                for p in parts {
                    if let Err(e) = eval_part(p, &mut cache) {
                        failure = Some(e);
                        return ControlFlow::Break(());
                    }
                }
                let vecs: Vec<&SparseVec> = parts.iter().map(|p| &cache[p.as_slice()]).collect();
                *profiles
                    .entry(column_profile(&vecs, dedupe_counts))
                    .or_insert(0) += 1;
                ControlFlow::Continue(())
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            let mut sorted: Vec<(Profile, u64)> = profiles.into_iter().collect();
            sorted.sort_by(|a, b| a.0.cmp(&b.0));
            for (profile, tuples) in &sorted {
                for (agg, a) in aggs.iter_mut().zip(coeff_sets) {
                    agg.add(profile_norm(n, profile, a), *tuples);
                }
            }
            summary
        }
        NormSpec::Plegma { family, base } => {
            let mut members: HashMap<u64, bool> = HashMap::new();
            let mut values = Vec::new();
            let summary = enumerate_plm(f, l_seq, &enum_cfg, |parts| {
                for p in parts {
                    if let Err(e) = eval_part(p, &mut cache) {
                        failure = Some(e);
                        return ControlFlow::Break(());
                    }
                }
                let vecs: Vec<&SparseVec> = parts.iter().map(|p| &cache[p.as_slice()]).collect();
                let mut codes: Vec<u64> = vecs.iter().flat_map(|v| v.support()).collect();
                codes.sort_unstable();
                codes.dedup();
                let support = match PlegmaSupport::new(family, base, &codes, &mut members) {
                    Ok(s) => s,
                    Err(e) => {
                        failure = Some(e);
                        return ControlFlow::Break(());
                    }
                };
                for (agg, a) in aggs.iter_mut().zip(coeff_sets) {
                    values.clear();
                    values.extend(codes.iter().map(|&c| {
                        vecs.iter()
                            .zip(a)
                            .map(|(v, &ai)| ai * v.get(c))
                            .sum::<f64>()
                    }));
                    agg.add(support.eval(&values), 1);
                }
                ControlFlow::Continue(())
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            summary
        }
    };
    if summary.yielded == 0 {
        return Err(SpecnormError::NoTuplesFound);
    }
    Ok(aggs
        .into_iter()
        .zip(coeff_sets)
        .map(|(agg, a)| {
            let mean = (agg.sum / agg.count as f64).clamp(agg.min, agg.max);
            EstimateReport {
                k,
                coeffs: a.clone(),
                threshold: cfg.threshold,
                tuple_count: agg.count,
                min: agg.min,
                max: agg.max,
                mean,
                spread: agg.max - agg.min,
                coeffs_in_unit_box: a.iter().all(|x| x.abs() <= 1.0),
                horizon_limited: summary.horizon_limited,
                budget_exhausted: summary.budget_exhausted,
            }
        })
        .collect())
}

/// Columns as bit patterns with multiplicities.
type Profile = Vec<(Vec<u64>, u64)>;

/// Sorted columns `(x_1(j), …, x_k(j))` as bit patterns, with
/// multiplicities (all 1 when `dedupe`).
fn column_profile(vecs: &[&SparseVec], dedupe: bool) -> Profile {
    let k = vecs.len();
    let mut cells: Vec<(u64, usize, f64)> = Vec::new();
    for (i, v) in vecs.iter().enumerate() {
        cells.extend(v.entries.iter().map(|&(c, x)| (c, i, x)));
    }
    cells.sort_unstable_by_key(|&(c, i, _)| (c, i));
    let mut cols: Vec<Vec<u64>> = Vec::new();
    let mut idx = 0;
    while idx < cells.len() {
        let c = cells[idx].0;
        let mut col = vec![0f64.to_bits(); k];
        while idx < cells.len() && cells[idx].0 == c {
            col[cells[idx].1] = cells[idx].2.to_bits();
            idx += 1;
        }
        cols.push(col);
    }
    cols.sort_unstable();
    let mut out: Vec<(Vec<u64>, u64)> = Vec::new();
    for col in cols {
        match out.last_mut() {
            Some((last, count)) if *last == col => {
                if !dedupe {
                    *count += 1;
                }
            }
            _ => out.push((col, 1)),
        }
    }
    out
}

fn profile_norm(n: &NormSpec, profile: &[(Vec<u64>, u64)], a: &[f64]) -> f64 {
    let dot = |col: &[u64]| {
        col.iter()
            .zip(a)
            .map(|(&bits, &ai)| ai * f64::from_bits(bits))
            .sum::<f64>()
    };
    match n {
        NormSpec::Lp(p) => lp_of(*p, profile.iter().map(|(col, c)| (dot(col), *c))),
        NormSpec::Sup => profile
            .iter()
            .fold(0.0, |m, (col, _)| m.max(dot(col).abs())),
        NormSpec::Plegma { .. } => unreachable!("profiles are only used for lp and sup"),
    }
}

/// One report per threshold, in increasing order of thresholds.
pub fn sm_converge(
    f: &FamilySpec,
    q: &FSeqSpec,
    n: &NormSpec,
    coeffs: &[f64],
    l_seq: &SeqSet,
    thresholds: &[u32],
    cfg: &EstimateConfig,
) -> Result<Vec<EstimateReport>> {
    if thresholds.is_empty() || thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SpecnormError::Invalid(
            "thresholds must be nonempty and strictly increasing".into(),
        ));
    }
    thresholds
        .iter()
        .map(|&t| {
            let c = EstimateConfig {
                threshold: t,
                ..cfg.clone()
            };
            sm_estimate(f, q, n, coeffs, l_seq, &c)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbeMode {
    TrivialPairs(f64),
    Separated(f64),
    Cauchy(f64),
    CesaroMean(usize),
}

impl ProbeMode {
    /// `trivial:EPS`, `separated:EPS`, `cauchy:EPS`, `cesaro:N`.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || SpecnormError::Parse(text.to_string());
        let (name, arg) = text.trim().split_once(':').ok_or_else(bad)?;
        let eps = || -> Result<f64> {
            let e: f64 = arg.trim().parse().map_err(|_| bad())?;
            if e > 0.0 && e.is_finite() {
                Ok(e)
            } else {
                Err(SpecnormError::Invalid(
                    "probe parameters must be positive".into(),
                ))
            }
        };
        match name.trim() {
            "trivial" => Ok(ProbeMode::TrivialPairs(eps()?)),
            "separated" => Ok(ProbeMode::Separated(eps()?)),
            "cauchy" => Ok(ProbeMode::Cauchy(eps()?)),
            "cesaro" => match arg.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(ProbeMode::CesaroMean(n)),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for ProbeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProbeMode::TrivialPairs(e) => write!(f, "trivial:{e}"),
            ProbeMode::Separated(e) => write!(f, "separated:{e}"),
            ProbeMode::Cauchy(e) => write!(f, "cauchy:{e}"),
            ProbeMode::CesaroMean(n) => write!(f, "cesaro:{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ProbeReport {
    TrivialPairs {
        epsilon: f64,
        pairs_scanned: u64,
        witness: Option<(FinSet, FinSet)>,
        distance: Option<f64>,
        horizon_limited: bool,
    },
    Separated {
        epsilon: f64,
        pairs_scanned: u64,
        all_separated: bool,
        min_distance: f64,
        max_distance: f64,
        failure: Option<(FinSet, FinSet)>,
        horizon_limited: bool,
    },
    Cauchy {
        epsilon: f64,
        pairs_scanned: u64,
        max_distance: f64,
        within_epsilon: bool,
        horizon_limited: bool,
    },
    CesaroMean {
        n: usize,
        tuples_scanned: u64,
        mean: SparseVec,
        max_deviation: f64,
        horizon_limited: bool,
    },
}

#[derive(Debug, Clone)]
pub struct ProbeConfig {
    pub first_min: u32,
    pub budget: Option<u64>,
    pub horizon: u32,
}

pub fn probe(
    f: &FamilySpec,
    q: &FSeqSpec,
    n: &NormSpec,
    l_seq: &SeqSet,
    mode: ProbeMode,
    cfg: &ProbeConfig,
) -> Result<ProbeReport> {
    let l = match mode {
        ProbeMode::CesaroMean(m) => m,
        _ => 2,
    };
    let enum_cfg = EnumConfig {
        l,
        first_min: cfg.first_min,
        budget: cfg.budget,
        horizon: cfg.horizon,
    };
    let mut failure: Option<SpecnormError> = None;
    let mut scanned = 0u64;
    let mut min_d = f64::INFINITY;
    let mut max_d = 0.0f64;
    let mut witness: Option<(FinSet, FinSet, f64)> = None;
    let mut reference: Option<SparseVec> = None;
    let mut run = |parts: &[Vec<u32>]| -> Result<ControlFlow<()>> {
        scanned += 1;
        let xs: Vec<SparseVec> = parts
            .iter()
            .map(|p| fseq_eval(q, &FinSet::from_sorted(p.clone())))
            .collect::<Result<_>>()?;
        if let ProbeMode::CesaroMean(m) = mode {
            let mut mean = SparseVec::zero();
            for x in &xs {
                mean = mean.axpy(1.0 / m as f64, x);
            }
            match &reference {
                None => reference = Some(mean),
                Some(r) => max_d = max_d.max(norm_eval(n, &mean.sub(r))?),
            }
            return Ok(ControlFlow::Continue(()));
        }
        let d = norm_eval(n, &xs[0].sub(&xs[1]))?;
        min_d = min_d.min(d);
        max_d = max_d.max(d);
        let pair = || {
            (
                FinSet::from_sorted(parts[0].clone()),
                FinSet::from_sorted(parts[1].clone()),
                d,
            )
        };
        match mode {
            ProbeMode::TrivialPairs(eps) if d < eps => {
                witness = Some(pair());
                return Ok(ControlFlow::Break(()));
            }
            ProbeMode::Separated(eps) if d <= eps && witness.is_none() => witness = Some(pair()),
            _ => {}
        }
        Ok(ControlFlow::Continue(()))
    };
    let summary = enumerate_plm(f, l_seq, &enum_cfg, |parts| match run(parts) {
        Ok(flow) => flow,
        Err(e) => {
            failure = Some(e);
            ControlFlow::Break(())
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    if scanned == 0 {
        return Err(SpecnormError::NoTuplesFound);
    }
    let horizon_limited = summary.horizon_limited;
    Ok(match mode {
        ProbeMode::TrivialPairs(epsilon) => ProbeReport::TrivialPairs {
            epsilon,
            pairs_scanned: scanned,
            distance: witness.as_ref().map(|w| w.2),
            witness: witness.map(|w| (w.0, w.1)),
            horizon_limited,
        },
        ProbeMode::Separated(epsilon) => ProbeReport::Separated {
            epsilon,
            pairs_scanned: scanned,
            all_separated: witness.is_none(),
            min_distance: min_d,
            max_distance: max_d,
            failure: witness.map(|w| (w.0, w.1)),
            horizon_limited,
        },
        ProbeMode::Cauchy(epsilon) => ProbeReport::Cauchy {
            epsilon,
            pairs_scanned: scanned,
            max_distance: max_d,
            within_epsilon: max_d < epsilon,
            horizon_limited,
        },
        ProbeMode::CesaroMean(n) => ProbeReport::CesaroMean {
            n,
            tuples_scanned: scanned,
            mean: reference.expect("at least one tuple"),
            max_deviation: max_d,
            horizon_limited,
        },
    })
}

/// `{-1, -1/2, 0, 1/2, 1}`.
pub const DEFAULT_GRID: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];

/// Every vector in `grid^k` except zero, in lexicographic order of grid
/// positions.
pub fn grid_vectors(grid: &[f64], k: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|v| {
                grid.iter().map(move |&g| {
                    let mut w = v.clone();
                    w.push(g);
                    w
                })
            })
            .collect();
    }
    out.retain(|v| v.iter().any(|&x| x != 0.0));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub k: usize,
    pub grid: Vec<f64>,
    pub vectors: usize,
    /// Largest `mean‖Σ_{i∈A} a_i x_{s_i}‖ / mean‖Σ a_i x_{s_i}‖` over grid
    /// vectors and subsets `A`.
    pub unconditionality_c: f64,
    /// The same ratio over initial segments `A = {1..m}`.
    pub basis_c: f64,
    pub tuple_spread_max: f64,
    pub estimate_only: bool,
    pub unconditionality_witness: Option<(Vec<f64>, Vec<f64>)>,
    pub basis_witness: Option<(Vec<f64>, Vec<f64>)>,
}

/// Tolerance below which a mean estimate counts as zero.
pub const DEGENERATE_TOL: f64 = 1e-9;

pub fn basis_diagnostics(
    f: &FamilySpec,
    q: &FSeqSpec,
    n: &NormSpec,
    l_seq: &SeqSet,
    k: usize,
    grid: &[f64],
    cfg: &EstimateConfig,
) -> Result<DiagnosticsReport> {
    if k == 0 || grid.is_empty() {
        return Err(SpecnormError::Invalid(
            "k and the grid must be nonempty".into(),
        ));
    }
    let vectors = grid_vectors(grid, k);
    if vectors.is_empty() {
        return Err(SpecnormError::Invalid(
            "the grid has no nonzero vectors".into(),
        ));
    }
    // Every grid vector and all of its coordinate restrictions.
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut batch: Vec<Vec<f64>> = Vec::new();
    let mut id = |v: Vec<f64>, batch: &mut Vec<Vec<f64>>| -> usize {
        let key: Vec<u64> = v.iter().map(|x| (x + 0.0).to_bits()).collect();
        *index.entry(key).or_insert_with(|| {
            batch.push(v);
            batch.len() - 1
        })
    };
    let mut plan: Vec<(usize, Vec<(usize, bool)>)> = Vec::with_capacity(vectors.len());
    for v in &vectors {
        let full = id(v.clone(), &mut batch);
        let mut subs = Vec::with_capacity(1 << k);
        for mask in 1u32..(1 << k) {
            let sub: Vec<f64> = (0..k)
                .map(|i| if mask >> i & 1 == 1 { v[i] } else { 0.0 })
                .collect();
            let prefix = (mask + 1).is_power_of_two();
            subs.push((id(sub, &mut batch), prefix));
        }
        plan.push((full, subs));
    }
    let reports = sm_estimate_batch(f, q, n, &batch, l_seq, cfg)?;
    let spread = reports.iter().fold(0.0f64, |m, r| m.max(r.spread));
    let mut unc = 0.0f64;
    let mut basis = 0.0f64;
    let mut unc_w = None;
    let mut basis_w = None;
    let mut any = false;
    for (full, subs) in &plan {
        let denom = reports[*full].mean;
        if denom < DEGENERATE_TOL {
            continue;
        }
        any = true;
        for &(s, prefix) in subs {
            let ratio = reports[s].mean / denom;
            if ratio > unc {
                unc = ratio;
                unc_w = Some((batch[*full].clone(), batch[s].clone()));
            }
            if prefix && ratio > basis {
                basis = ratio;
                basis_w = Some((batch[*full].clone(), batch[s].clone()));
            }
        }
    }
    if !any {
        return Err(SpecnormError::DegenerateNorm(DEGENERATE_TOL));
    }
    Ok(DiagnosticsReport {
        k,
        grid: grid.to_vec(),
        vectors: vectors.len(),
        unconditionality_c: unc,
        basis_c: basis,
        tuple_spread_max: spread,
        estimate_only: true,
        unconditionality_witness: unc_w,
        basis_witness: basis_w,
    })
}

#[derive(Debug, Clone)]
pub struct SingularConfig {
    pub n_list: Vec<usize>,
    pub horizon: u32,
    /// Allowed drift of the estimate between consecutive `n`; defaults to
    /// `2/√n` of the smaller `n`.
    pub tolerance: Option<f64>,
    /// Tuples used for the `‖(1/n)Σ e_i‖` estimate.
    pub identity_budget: u64,
    pub residual_k: usize,
    pub residual_budget: u64,
}

impl Default for SingularConfig {
    fn default() -> Self {
        SingularConfig {
            n_list: vec![4, 16, 64, 256],
            horizon: 4096,
            tolerance: None,
            identity_budget: 16,
            residual_k: 2,
            residual_budget: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularStep {
    pub n: usize,
    pub x0_estimate: SparseVec,
    /// `‖(1/n)Σ x_{s_j}‖` for the first tuple.
    pub cesaro_norm: f64,
    /// Distance from that Cesàro mean to the estimate.
    pub cesaro_gap: f64,
    pub drift: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularReport {
    pub steps: Vec<SingularStep>,
    pub x0_estimate: SparseVec,
    pub norm_x0: f64,
    /// Mean of `‖(1/n)Σ x_{s_j}‖` at the largest `n`.
    pub mean_norm_largest_n: f64,
    pub norm_identity_relative_gap: f64,
    pub norm_identity_within_2pct: bool,
    pub residual_reports: Vec<EstimateReport>,
}

/// Estimates the constant part `x0` of `x_s = x0 + x'_s`: for each `n` the
/// Cesàro means of three consecutive disjoint plegma `n`-tuples are combined
/// by a coordinatewise median, which discards contributions carried by a
/// single tuple.
pub fn singular_analysis(
    f: &FamilySpec,
    q: &FSeqSpec,
    n: &NormSpec,
    l_seq: &SeqSet,
    cfg: &SingularConfig,
) -> Result<SingularReport> {
    if cfg.n_list.is_empty() || cfg.n_list.windows(2).any(|w| w[0] >= w[1]) || cfg.n_list[0] == 0 {
        return Err(SpecnormError::Invalid(
            "n_list must be nonempty, positive and strictly increasing".into(),
        ));
    }
    let mut steps: Vec<SingularStep> = Vec::new();
    for &m in &cfg.n_list {
        let mut means = Vec::with_capacity(3);
        let mut first_min = 1u32;
        for _ in 0..3 {
            let (mean, last) = first_tuple_mean(f, q, l_seq, m, first_min, cfg.horizon)?;
            means.push(mean);
            first_min = l_seq.index_of(last)?.expect("tuple elements lie in L") + 1;
        }
        let est = coordinate_median(&means);
        let cesaro_norm = norm_eval(n, &means[0])?;
        let cesaro_gap = norm_eval(n, &means[0].sub(&est))?;
        let drift = match steps.last() {
            Some(prev) => {
                let d = norm_eval(n, &est.sub(&prev.x0_estimate))?;
                let tol = cfg.tolerance.unwrap_or(2.0 / (prev.n as f64).sqrt());
                if d > tol {
                    return Err(SpecnormError::NotStabilized {
                        from: prev.n,
                        to: m,
                        drift: d,
                        tolerance: tol,
                    });
                }
                Some(d)
            }
            None => None,
        };
        steps.push(SingularStep {
            n: m,
            x0_estimate: est,
            cesaro_norm,
            cesaro_gap,
            drift,
        });
    }
    let last = steps.last().expect("nonempty n_list");
    let x0 = last.x0_estimate.clone();
    let norm_x0 = norm_eval(n, &x0)?;
    let m = last.n;
    let identity = sm_estimate(
        f,
        q,
        n,
        &vec![1.0 / m as f64; m],
        l_seq,
        &EstimateConfig {
            threshold: 1,
            budget: Some(cfg.identity_budget),
            horizon: cfg.horizon,
        },
    )?;
    let gap = if norm_x0 > 0.0 {
        (identity.mean - norm_x0).abs() / norm_x0
    } else {
        identity.mean
    };
    let residual_q = q.clone().shifted(x0.scaled(-1.0));
    let residual_reports = sm_estimate_batch(
        f,
        &residual_q,
        n,
        &grid_vectors(&DEFAULT_GRID, cfg.residual_k),
        l_seq,
        &EstimateConfig {
            threshold: cfg.residual_k as u32,
            budget: Some(cfg.residual_budget),
            horizon: cfg.horizon,
        },
    )?;
    Ok(SingularReport {
        steps,
        x0_estimate: x0,
        norm_x0,
        mean_norm_largest_n: identity.mean,
        norm_identity_relative_gap: gap,
        norm_identity_within_2pct: gap <= 0.02,
        residual_reports,
    })
}

fn first_tuple_mean(
    f: &FamilySpec,
    q: &FSeqSpec,
    l_seq: &SeqSet,
    m: usize,
    first_min: u32,
    horizon: u32,
) -> Result<(SparseVec, u32)> {
    let cfg = EnumConfig {
        l: m,
        first_min,
        budget: Some(1),
        horizon,
    };
    let mut found: Option<Vec<Vec<u32>>> = None;
    enumerate_plm(f, l_seq, &cfg, |parts| {
        found = Some(parts.to_vec());
        ControlFlow::Break(())
    })?;
    let parts = found.ok_or(SpecnormError::NoTuplesFound)?;
    let mut sum = SparseVec::zero();
    let mut last = 0;
    for p in &parts {
        sum = sum.add(&fseq_eval(q, &FinSet::from_sorted(p.clone()))?);
        last = last.max(*p.last().expect("parts are nonempty"));
    }
    let mean = SparseVec::from_sorted_unchecked(
        sum.entries
            .iter()
            .map(|&(c, v)| (c, v / m as f64))
            .collect(),
    );
    Ok((mean, last))
}

fn coordinate_median(vs: &[SparseVec]) -> SparseVec {
    let mut coords: Vec<u64> = vs.iter().flat_map(|v| v.support()).collect();
    coords.sort_unstable();
    coords.dedup();
    let entries = coords
        .into_iter()
        .filter_map(|c| {
            let mut vals: Vec<f64> = vs.iter().map(|v| v.get(c)).collect();
            vals.sort_by(f64::total_cmp);
            let med = vals[vals.len() / 2];
            (med != 0.0).then_some((c, med))
        })
        .collect();
    SparseVec::from_sorted_unchecked(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plegma::interval_coding;

    fn fs(v: &[u32]) -> FinSet {
        FinSet::new(v.to_vec()).unwrap()
    }

    fn fam(t: &str) -> FamilySpec {
        FamilySpec::parse(t, 1000).unwrap()
    }

    fn vecp(t: &str) -> SparseVec {
        t.parse().unwrap()
    }

    #[test]
    fn norm_examples() {
        assert_eq!(
            norm_eval(&NormSpec::Lp(1.0), &vecp("1:1,2:1")).unwrap(),
            2.0
        );
        assert_eq!(norm_eval(&NormSpec::Sup, &vecp("1:3,7:-5")).unwrap(), 5.0);
        let g = NormSpec::parse("plegma(cube(2),lp(1))", 100).unwrap();
        let x = SparseVec::from_pairs([
            (code_of(&fs(&[1, 3])).unwrap(), 1.0),
            (code_of(&fs(&[2, 4])).unwrap(), 1.0),
        ])
        .unwrap();
        // The chain ({1,3},{2,4}) has length 2 > t_1(1) = 1, so only single
        // sets qualify.
        assert_eq!(norm_eval(&g, &x).unwrap(), 1.0);
        let y = SparseVec::from_pairs([
            (code_of(&fs(&[2, 4])).unwrap(), 1.0),
            (code_of(&fs(&[3, 5])).unwrap(), 1.0),
        ])
        .unwrap();
        assert_eq!(norm_eval(&g, &y).unwrap(), 2.0);
    }

    /// Exhaustive oracle: every subset of the support, ordered by first
    /// element, checked pairwise and against the length condition.
    fn plegma_norm_oracle(items: &[(FinSet, f64)], p: f64) -> f64 {
        let n = items.len();
        let mut best = 0.0f64;
        for mask in 1u32..(1 << n) {
            let mut chosen: Vec<&(FinSet, f64)> = (0..n)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| &items[i])
                .collect();
            chosen.sort_by_key(|(s, _)| s.as_slice()[0]);
            let ok = chosen.len() <= chosen[0].0.as_slice()[0] as usize
                && chosen.iter().enumerate().all(|(i, a)| {
                    chosen[i + 1..]
                        .iter()
                        .all(|b| plegma_pair(a.0.as_slice(), b.0.as_slice()))
                });
            if ok {
                let v: f64 = chosen
                    .iter()
                    .map(|(_, a)| a.abs().powf(p))
                    .sum::<f64>()
                    .powf(1.0 / p);
                best = best.max(v);
            }
        }
        best
    }

    #[test]
    fn plegma_norm_matches_subset_oracle() {
        let g = fam("cube(2)");
        let pairs: Vec<FinSet> = (1..=7u32)
            .flat_map(|a| (a + 1..=7).map(move |b| fs(&[a, b])))
            .collect();
        for p in [1.0, 2.0] {
            let norm = NormSpec::plegma(g.clone(), NormSpec::Lp(p)).unwrap();
            for start in 0..pairs.len() {
                let items: Vec<(FinSet, f64)> = pairs
                    .iter()
                    .cycle()
                    .skip(start)
                    .step_by(3)
                    .take(7)
                    .enumerate()
                    .map(|(i, s)| {
                        (
                            s.clone(),
                            (i as f64 + 1.0) * if i % 2 == 0 { 1.0 } else { -0.5 },
                        )
                    })
                    .collect();
                let mut items = items;
                items.sort_by(|a, b| a.0.cmp(&b.0));
                items.dedup_by(|a, b| a.0 == b.0);
                let x = SparseVec::from_pairs(items.iter().map(|(s, v)| (code_of(s).unwrap(), *v)))
                    .unwrap();
                let got = norm_eval(&norm, &x).unwrap();
                let want = plegma_norm_oracle(&items, p);
                assert!((got - want).abs() < 1e-12, "{x}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn plegma_norm_rejects_foreign_coordinates() {
        let norm = NormSpec::parse("plegma(cube(2),lp(1))", 10).unwrap();
        let x = SparseVec::unit(code_of(&fs(&[1, 2, 3])).unwrap()).unwrap();
        assert!(matches!(
            norm_eval(&norm, &x),
            Err(SpecnormError::NotInFamily(_))
        ));
        assert!(NormSpec::plegma(fam("cube(1)"), norm).is_err());
    }

    #[test]
    fn coding_roundtrip() {
        for s in [
            fs(&[]),
            fs(&[1]),
            fs(&[63]),
            fs(&[2, 5, 9]),
            fs(&[1, 2, 3, 4]),
        ] {
            assert_eq!(decode_code(code_of(&s).unwrap()).unwrap(), s);
        }
        assert!(code_of(&fs(&[64])).is_err());
        assert_eq!(code_of(&fs(&[])).unwrap(), 1);
    }

    #[test]
    fn fseq_examples() {
        assert_eq!(
            fseq_eval(&FSeqSpec::IntervalSum, &fs(&[2, 5])).unwrap(),
            vecp("2:1,3:1,4:1,5:1")
        );
        assert_eq!(
            fseq_eval(&FSeqSpec::UnitAtMax, &fs(&[3, 9])).unwrap(),
            vecp("9:1")
        );
        let q = FSeqSpec::parse("shift(unitmax,1:2)", 10).unwrap();
        assert_eq!(fseq_eval(&q, &fs(&[3, 9])).unwrap(), vecp("1:2,9:1"));
        assert!(matches!(
            fseq_eval(&FSeqSpec::IntervalSum, &fs(&[1, 2, 3])),
            Err(SpecnormError::ArityMismatch {
                expected: 2,
                got: 3
            })
        ));
        let b = FSeqSpec::parse("basisof(cube(2))", 10).unwrap();
        assert!(fseq_eval(&b, &fs(&[1])).is_err());
    }

    #[test]
    fn dsl_roundtrip() {
        for t in [
            "lp(2)",
            "sup",
            "plegma(max(hat(fmin(1,0))),lp(1))",
            "lp(1.5)",
        ] {
            assert_eq!(NormSpec::parse(t, 10).unwrap().to_string(), t);
        }
        for t in [
            "unitmax",
            "interval",
            "basisof(cube(2))",
            "shift(unitmax,1:0.5,3:-2)",
            "const(2:1)",
        ] {
            assert_eq!(FSeqSpec::parse(t, 10).unwrap().to_string(), t);
        }
        assert!(NormSpec::parse("lp(0.5)", 10).is_err());
        assert!(FSeqSpec::parse("shift(unitmax,x)", 10).is_err());
    }

    #[test]
    fn sparse_vec_arithmetic() {
        let a = vecp("1:1,3:2");
        let b = vecp("3:2,4:1");
        assert_eq!(a.sub(&b), vecp("1:1,4:-1"));
        assert_eq!(a.axpy(2.0, &b), vecp("1:1,3:6,4:2"));
        assert_eq!(a.scaled(0.0), SparseVec::zero());
        assert_eq!(vecp("2:1,2:-1"), SparseVec::zero());
        assert!("0:1".parse::<SparseVec>().is_err());
    }

    #[test]
    fn estimate_examples() {
        let all = SeqSet::all(1000);
        let c2 = fam("cube(2)");
        let r = sm_estimate(
            &c2,
            &FSeqSpec::UnitAtMax,
            &NormSpec::Lp(2.0),
            &[1.0, 1.0],
            &all,
            &EstimateConfig::new(1, 12),
        )
        .unwrap();
        assert!((r.min - 2f64.sqrt()).abs() < 1e-15 && r.spread == 0.0);
        assert_eq!(r.tuple_count, 495);
        let r = sm_estimate(
            &c2,
            &FSeqSpec::IntervalSum,
            &NormSpec::Sup,
            &[1.0, -1.0],
            &all,
            &EstimateConfig::new(1, 12),
        )
        .unwrap();
        assert_eq!((r.min, r.max), (1.0, 1.0));
        let r = sm_estimate(
            &c2,
            &FSeqSpec::IntervalSum,
            &NormSpec::Sup,
            &[1.0, 1.0],
            &all,
            &EstimateConfig::new(1, 12),
        )
        .unwrap();
        assert_eq!((r.min, r.max), (2.0, 2.0));
    }

    #[test]
    fn profile_path_matches_direct_evaluation() {
        let all = SeqSet::all(1000);
        let c2 = fam("cube(2)");
        let q = FSeqSpec::IntervalSum.shifted(vecp("1:0.25,4:-1"));
        let coeffs = [0.5, -1.0, 1.0];
        for n in [NormSpec::Lp(1.0), NormSpec::Lp(3.0), NormSpec::Sup] {
            let r = sm_estimate(&c2, &q, &n, &coeffs, &all, &EstimateConfig::new(2, 11)).unwrap();
            let (tuples, _) = crate::plegma::collect_plm(
                &c2,
                &all,
                &EnumConfig {
                    first_min: 2,
                    ..EnumConfig::new(3, 11)
                },
            )
            .unwrap();
            let vals: Vec<f64> = tuples
                .iter()
                .map(|t| {
                    let mut v = SparseVec::zero();
                    for (p, a) in t.parts().iter().zip(coeffs) {
                        v = v.axpy(a, &fseq_eval(&q, p).unwrap());
                    }
                    norm_eval(&n, &v).unwrap()
                })
                .collect();
            let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = vals.iter().cloned().fold(0.0, f64::max);
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            assert_eq!(r.tuple_count, vals.len() as u64);
            assert!((r.min - min).abs() < 1e-12 && (r.max - max).abs() < 1e-12);
            assert!((r.mean - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_sequence_estimates() {
        let all = SeqSet::all(1000);
        let x = vecp("1:1,2:-2");
        let q = FSeqSpec::constant(x.clone());
        let coeffs = [0.5, 1.0, -1.0];
        let r = sm_estimate(
            &fam("cube(1)"),
            &q,
            &NormSpec::Lp(2.0),
            &coeffs,
            &all,
            &EstimateConfig::new(1, 10),
        )
        .unwrap();
        let want = norm_eval(&NormSpec::Lp(2.0), &x.scaled(0.5)).unwrap();
        assert!(r.spread == 0.0 && (r.mean - want).abs() < 1e-12);
    }

    #[test]
    fn converge_schedule() {
        let all = SeqSet::all(1000);
        let rs = sm_converge(
            &fam("cube(2)"),
            &FSeqSpec::UnitAtMax,
            &NormSpec::Lp(2.0),
            &[1.0, -0.5],
            &all,
            &[1, 3, 5],
            &EstimateConfig::new(1, 14),
        )
        .unwrap();
        assert_eq!(rs.len(), 3);
        assert!(rs.iter().all(|r| r.spread == 0.0));
        assert!(sm_converge(
            &fam("cube(2)"),
            &FSeqSpec::UnitAtMax,
            &NormSpec::Sup,
            &[1.0],
            &all,
            &[3, 2],
            &EstimateConfig::new(1, 8)
        )
        .is_err());
    }

    #[test]
    fn probes() {
        let all = SeqSet::all(1000);
        let cfg = ProbeConfig {
            first_min: 1,
            budget: None,
            horizon: 12,
        };
        let r = probe(
            &fam("cube(1)"),
            &FSeqSpec::constant(vecp("1:1")),
            &NormSpec::Lp(2.0),
            &all,
            ProbeMode::TrivialPairs(0.1),
            &cfg,
        )
        .unwrap();
        match r {
            ProbeReport::TrivialPairs {
                witness,
                pairs_scanned,
                ..
            } => {
                assert_eq!(pairs_scanned, 1);
                assert_eq!(witness, Some((fs(&[1]), fs(&[2]))));
            }
            _ => panic!(),
        }
        let r = probe(
            &fam("cube(2)"),
            &FSeqSpec::UnitAtMax,
            &NormSpec::Lp(2.0),
            &all,
            ProbeMode::Separated(1.0),
            &cfg,
        )
        .unwrap();
        match r {
            ProbeReport::Separated {
                all_separated,
                min_distance,
                max_distance,
                ..
            } => {
                assert!(all_separated);
                assert!((min_distance - 2f64.sqrt()).abs() < 1e-15 && min_distance == max_distance);
            }
            _ => panic!(),
        }
        let q = FSeqSpec::UnitAtMax.shifted(vecp("1:0.5"));
        let r = probe(
            &fam("cube(1)"),
            &q,
            &NormSpec::Lp(2.0),
            &SeqSet::arithmetic(2, 1, 1000).unwrap(),
            ProbeMode::CesaroMean(4),
            &ProbeConfig {
                first_min: 1,
                budget: Some(50),
                horizon: 40,
            },
        )
        .unwrap();
        match r {
            ProbeReport::CesaroMean {
                mean,
                max_deviation,
                ..
            } => {
                assert_eq!(mean, vecp("1:0.5,2:0.25,3:0.25,4:0.25,5:0.25"));
                // Two means differ by at most the l2 norm of two disjoint
                // quarter-weight blocks of size 4.
                assert!(max_deviation <= 2.0 / 4f64.sqrt() + 1e-12);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn diagnostics_examples() {
        let all = SeqSet::all(1000);
        let grid = [-1.0, 1.0];
        let r = basis_diagnostics(
            &fam("cube(2)"),
            &FSeqSpec::UnitAtMax,
            &NormSpec::Lp(2.0),
            &all,
            3,
            &grid,
            &EstimateConfig::new(1, 10),
        )
        .unwrap();
        assert!((r.unconditionality_c - 1.0).abs() < 1e-9 && (r.basis_c - 1.0).abs() < 1e-9);
        let r = basis_diagnostics(
            &fam("cube(2)"),
            &FSeqSpec::IntervalSum,
            &NormSpec::Sup,
            &all,
            3,
            &grid,
            &EstimateConfig::new(1, 12),
        )
        .unwrap();
        assert!(r.unconditionality_c >= 1.5);
        assert!(matches!(
            basis_diagnostics(
                &fam("cube(1)"),
                &FSeqSpec::constant(SparseVec::zero()),
                &NormSpec::Sup,
                &all,
                2,
                &grid,
                &EstimateConfig::new(1, 6)
            ),
            Err(SpecnormError::DegenerateNorm(_))
        ));
    }

    #[test]
    fn basis_of_family_gives_l1() {
        let g = fam("max(hat(fmin(1,0)))");
        let norm = NormSpec::plegma(g.clone(), NormSpec::Lp(1.0)).unwrap();
        let q = FSeqSpec::BasisOfFamily(g.clone());
        let all = SeqSet::all(1000);
        let coeffs = [1.0, -0.5];
        let r = sm_estimate(&g, &q, &norm, &coeffs, &all, &EstimateConfig::new(2, 16)).unwrap();
        assert!(r.tuple_count > 0);
        assert!((r.min - 1.5).abs() < 1e-12 && (r.max - 1.5).abs() < 1e-12);
        let r = basis_diagnostics(
            &g,
            &q,
            &norm,
            &all,
            2,
            &[-1.0, 1.0],
            &EstimateConfig::new(2, 14),
        )
        .unwrap();
        assert!((r.basis_c - 1.0).abs() < 1e-9 && (r.unconditionality_c - 1.0).abs() < 1e-9);
    }

    #[test]
    fn coded_violating_sequence_gives_sup() {
        let g = fam("max(hat(fmin(1,0)))");
        let table = interval_coding(g.clone(), 20).unwrap();
        let q = FSeqSpec::coded_table(&table).unwrap();
        let norm = NormSpec::plegma(g, NormSpec::Lp(1.0)).unwrap();
        let r = sm_estimate(
            &fam("cube(1)"),
            &q,
            &norm,
            &[1.0, -0.5, 0.5],
            &SeqSet::all(1000),
            &EstimateConfig::new(3, 20),
        )
        .unwrap();
        assert_eq!((r.min, r.max), (1.0, 1.0));
    }

    #[test]
    fn singular_examples() {
        let all = SeqSet::all(10_000);
        let x0 = vecp("1:0.6,3:-0.8");
        let q = FSeqSpec::UnitAtMax.shifted(x0.clone());
        let cfg = SingularConfig {
            n_list: vec![4, 16, 64],
            ..Default::default()
        };
        let r = singular_analysis(&fam("cube(1)"), &q, &NormSpec::Lp(2.0), &all, &cfg).unwrap();
        assert!(r.norm_identity_within_2pct);
        assert!(norm_eval(&NormSpec::Lp(2.0), &r.x0_estimate.sub(&x0)).unwrap() < 1e-12);
        // Past the support of x0 the mean is x0 + (1/n)Σ e_i.
        let beyond = SeqSet::arithmetic(4, 1, 10_000).unwrap();
        let r = singular_analysis(&fam("cube(1)"), &q, &NormSpec::Lp(2.0), &beyond, &cfg).unwrap();
        for s in &r.steps {
            let closed = (1.0 + 1.0 / s.n as f64).sqrt();
            assert!((s.cesaro_norm - closed).abs() < 1e-12, "n = {}", s.n);
        }
        let r = singular_analysis(
            &fam("cube(1)"),
            &FSeqSpec::UnitAtMax,
            &NormSpec::Lp(2.0),
            &all,
            &cfg,
        )
        .unwrap();
        assert!(r.x0_estimate.is_zero());
        let c = vecp("2:1");
        let r = singular_analysis(
            &fam("cube(1)"),
            &FSeqSpec::constant(c.clone()),
            &NormSpec::Lp(2.0),
            &all,
            &cfg,
        )
        .unwrap();
        assert_eq!(r.x0_estimate, c);
        assert!(r.residual_reports.iter().all(|rep| rep.max == 0.0));
    }

    #[test]
    fn singular_detects_drift() {
        // x_{{n}} = n·e_1: the Cesàro means grow without bound.
        let entries = (1..=400u32)
            .map(|n| {
                (
                    fs(&[n]),
                    SparseVec::from_pairs([(1, f64::from(n))]).unwrap(),
                )
            })
            .collect();
        let q = FSeqSpec::Table {
            entries,
            default: None,
        };
        let cfg = SingularConfig {
            n_list: vec![4, 16],
            horizon: 400,
            ..Default::default()
        };
        assert!(matches!(
            singular_analysis(
                &fam("cube(1)"),
                &q,
                &NormSpec::Lp(2.0),
                &SeqSet::all(1000),
                &cfg
            ),
            Err(SpecnormError::NotStabilized { .. })
        ));
    }
}
