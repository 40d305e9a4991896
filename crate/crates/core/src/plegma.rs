//! Plegma tuples, their enumeration, the union codec, plegma paths and
//! plegma-preserving maps.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::ops::ControlFlow;

use serde::Serialize;
use thiserror::Error;

use crate::family::{embed_shift, FamilyError, FamilySpec};
use crate::famset::{precedes, FamsetError, FinSet, SeqSet};
use crate::ordinal::Ordinal;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlegmaError {
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error("part {index} is empty")]
    EmptyPart { index: usize },
    #[error("the parts do not form a plegma family")]
    NotPlegma,
    #[error("decoding is ambiguous: {0}")]
    DecodeAmbiguous(String),
    #[error("decoding failed: {0}")]
    DecodeFailed(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no plegma path within bounds: {0}")]
    NoPathWithinBounds(String),
    #[error("theorem contract violated: {0}")]
    TheoremViolation(String),
    #[error("invalid map entry: {0}")]
    InvalidEntry(String),
}

impl From<FamsetError> for PlegmaError {
    fn from(e: FamsetError) -> Self {
        PlegmaError::Family(e.into())
    }
}

pub type Result<T> = std::result::Result<T, PlegmaError>;

/// Whether `(s_1, …, s_l)` is a plegma family: listing the elements column
/// by column (`s_1(1), …, s_l(1), s_1(2), …`, skipping exhausted parts) gives
/// a strictly increasing sequence.
pub fn is_plegma(parts: &[FinSet]) -> Result<bool> {
    if let Some(index) = parts.iter().position(FinSet::is_empty) {
        return Err(PlegmaError::EmptyPart { index });
    }
    Ok(columns_increasing(parts.iter().map(FinSet::as_slice)))
}

fn columns_increasing<'a, I>(parts: I) -> bool
where
    I: Iterator<Item = &'a [u32]> + Clone,
{
    let depth = parts.clone().map(<[u32]>::len).max().unwrap_or(0);
    let mut last = 0u32;
    let mut first = true;
    for k in 0..depth {
        for p in parts.clone() {
            if let Some(&x) = p.get(k) {
                if !first && x <= last {
                    return false;
                }
                first = false;
                last = x;
            }
        }
    }
    true
}

/// `(a, b)` is a plegma pair.
pub fn plegma_pair(a: &[u32], b: &[u32]) -> bool {
    if a.is_empty() || b.is_empty() {
        return false;
    }
    (0..a.len().min(b.len())).all(|k| a[k] < b[k])
        && (0..b.len().min(a.len() - 1)).all(|k| b[k] < a[k + 1])
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct PlegmaTuple {
    parts: Vec<FinSet>,
}

impl PlegmaTuple {
    pub fn new(parts: Vec<FinSet>) -> Result<Self> {
        if parts.is_empty() {
            return Err(PlegmaError::Precondition(
                "a tuple needs at least one part".into(),
            ));
        }
        if !is_plegma(&parts)? {
            return Err(PlegmaError::NotPlegma);
        }
        Ok(PlegmaTuple { parts })
    }

    pub(crate) fn from_raw(parts: &[Vec<u32>]) -> Self {
        PlegmaTuple {
            parts: parts
                .iter()
                .map(|p| FinSet::from_sorted(p.clone()))
                .collect(),
        }
    }

    pub fn parts(&self) -> &[FinSet] {
        &self.parts
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn union(&self) -> FinSet {
        let mut all: Vec<u32> = self.parts.iter().flat_map(|p| p.iter()).collect();
        all.sort_unstable();
        FinSet::from_sorted(all)
    }

    pub fn lengths_nondecreasing(&self) -> bool {
        self.parts.windows(2).all(|w| w[0].len() <= w[1].len())
    }
}

impl fmt::Display for PlegmaTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, p) in self.parts.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{p}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone)]
pub struct EnumConfig {
    /// Number of parts.
    pub l: usize,
    /// Tuples start at `L(first_min)` or later.
    pub first_min: u32,
    /// Maximum number of tuples to yield.
    pub budget: Option<u64>,
    /// Only `L(1), …, L(horizon)` are used.
    pub horizon: u32,
}

impl EnumConfig {
    pub fn new(l: usize, horizon: u32) -> Self {
        EnumConfig {
            l,
            first_min: 1,
            budget: None,
            horizon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EnumSummary {
    pub yielded: u64,
    pub budget_exhausted: bool,
    /// The family has members beyond the last usable element, so the
    /// enumeration is a truncation.
    pub horizon_limited: bool,
}

/// Visits `Plm_l(F↾L)` with parts inside `{L(1), …, L(horizon)}` and
/// `s_1(1) ≥ L(first_min)`.
///
/// Tuples are produced in lexicographic order of their column-wise element
/// listings, which for a fixed `l` is also the order of the unions with
/// ties broken by shape.
pub fn enumerate_plm<V>(
    f: &FamilySpec,
    l_seq: &SeqSet,
    cfg: &EnumConfig,
    mut visit: V,
) -> Result<EnumSummary>
where
    V: FnMut(&[Vec<u32>]) -> ControlFlow<()>,
{
    if cfg.l == 0 {
        return Err(PlegmaError::Precondition("l must be at least 1".into()));
    }
    if cfg.first_min == 0 {
        return Err(PlegmaError::Precondition(
            "first_min must be at least 1".into(),
        ));
    }
    let h = cfg.horizon.min(l_seq.horizon());
    let universe = l_seq.values(h)?;
    l_seq.at(cfg.first_min)?;
    let last = universe.last().copied().unwrap_or(0);
    let horizon_limited = f.support_bound().is_none_or(|b| b > last);
    let mut walk = PlmWalk {
        f,
        universe,
        parts: vec![Vec::new(); cfg.l],
        summary: EnumSummary {
            yielded: 0,
            budget_exhausted: false,
            horizon_limited,
        },
        budget: cfg.budget,
        visit: &mut visit,
    };
    let active: Vec<usize> = (0..cfg.l).collect();
    let start = cfg.first_min as usize - 1;
    if walk.budget != Some(0) {
        let _ = walk.column(&active, 0, start)?;
    } else {
        walk.summary.budget_exhausted = true;
    }
    Ok(walk.summary)
}

/// Collects an enumeration into validated tuples.
pub fn collect_plm(
    f: &FamilySpec,
    l_seq: &SeqSet,
    cfg: &EnumConfig,
) -> Result<(Vec<PlegmaTuple>, EnumSummary)> {
    let mut out = Vec::new();
    let summary = enumerate_plm(f, l_seq, cfg, |parts| {
        out.push(PlegmaTuple::from_raw(parts));
        ControlFlow::Continue(())
    })?;
    Ok((out, summary))
}

struct PlmWalk<'a, V> {
    f: &'a FamilySpec,
    universe: Vec<u32>,
    parts: Vec<Vec<u32>>,
    summary: EnumSummary,
    budget: Option<u64>,
    visit: &'a mut V,
}

impl<V> PlmWalk<'_, V>
where
    V: FnMut(&[Vec<u32>]) -> ControlFlow<()>,
{
    fn column(&mut self, active: &[usize], pos: usize, next: usize) -> Result<ControlFlow<()>> {
        if pos == active.len() {
            let mut cont = Vec::with_capacity(active.len());
            return self.decide(active, 0, &mut cont, next);
        }
        let needed = active.len() - pos;
        if self.universe.len() < next + needed {
            return Ok(ControlFlow::Continue(()));
        }
        let i = active[pos];
        for u in next..=self.universe.len() - needed {
            self.parts[i].push(self.universe[u]);
            let flow = if self.f.in_hat(&self.parts[i])? {
                self.column(active, pos + 1, u + 1)?
            } else {
                ControlFlow::Continue(())
            };
            self.parts[i].pop();
            if flow.is_break() {
                return Ok(flow);
            }
        }
        Ok(ControlFlow::Continue(()))
    }

    /// Chooses, part by part, whether a part of the finished column stops
    /// (must be a member) or continues (must extend to a member).
    fn decide(
        &mut self,
        active: &[usize],
        idx: usize,
        cont: &mut Vec<usize>,
        next: usize,
    ) -> Result<ControlFlow<()>> {
        if idx == active.len() {
            if cont.is_empty() {
                self.summary.yielded += 1;
                if (self.visit)(&self.parts).is_break() {
                    return Ok(ControlFlow::Break(()));
                }
                if self.budget.is_some_and(|b| self.summary.yielded >= b) {
                    self.summary.budget_exhausted = true;
                    return Ok(ControlFlow::Break(()));
                }
                return Ok(ControlFlow::Continue(()));
            }
            let next_active = cont.clone();
            return self.column(&next_active, 0, next);
        }
        let i = active[idx];
        let stop = self.f.contains_slice(&self.parts[i])?;
        let go_on = self.f.has_ext(&self.parts[i])?;
        if stop && self.decide(active, idx + 1, cont, next)?.is_break() {
            return Ok(ControlFlow::Break(()));
        }
        if go_on {
            cont.push(i);
            let flow = self.decide(active, idx + 1, cont, next)?;
            cont.pop();
            if flow.is_break() {
                return Ok(flow);
            }
        }
        Ok(ControlFlow::Continue(()))
    }
}

/// The union of a tuple with nondecreasing part sizes, and its number of
/// parts.
pub fn union_encode(tuple: &PlegmaTuple) -> Result<(FinSet, usize)> {
    if !tuple.lengths_nondecreasing() {
        return Err(PlegmaError::Precondition(format!(
            "part sizes of {tuple} are not nondecreasing"
        )));
    }
    Ok((tuple.union(), tuple.len()))
}

/// Recovers the plegma `l`-tuple of members of the thin family `F` whose
/// union is `u`.
///
/// The first `l` elements of `u` start the parts; afterwards each column
/// continues exactly the parts that are not yet members, in order.
pub fn union_decode(f: &FamilySpec, u: &FinSet, l: usize) -> Result<PlegmaTuple> {
    if l == 0 {
        return Err(PlegmaError::Precondition("l must be at least 1".into()));
    }
    let elems = u.as_slice();
    let mut parts: Vec<Vec<u32>> = vec![Vec::new(); l];
    let mut open: Vec<usize> = (0..l).collect();
    let mut pos = 0usize;
    while !open.is_empty() {
        if pos + open.len() > elems.len() {
            return Err(PlegmaError::DecodeFailed(format!(
                "{u} runs out before parts {:?} are members",
                open.iter().map(|i| i + 1).collect::<Vec<_>>()
            )));
        }
        for &i in &open {
            parts[i].push(elems[pos]);
            pos += 1;
        }
        let mut still = Vec::with_capacity(open.len());
        for &i in &open {
            let member = f.contains_slice(&parts[i])?;
            let extends = f.has_ext(&parts[i])?;
            match (member, extends) {
                (true, true) => {
                    return Err(PlegmaError::DecodeAmbiguous(format!(
                        "{} is a member with proper extensions",
                        FinSet::from_sorted(parts[i].clone())
                    )))
                }
                (true, false) => {}
                (false, true) => still.push(i),
                (false, false) => {
                    return Err(PlegmaError::DecodeFailed(format!(
                        "{} starts no member",
                        FinSet::from_sorted(parts[i].clone())
                    )))
                }
            }
        }
        open = still;
    }
    if pos != elems.len() {
        return Err(PlegmaError::DecodeFailed(format!(
            "{} elements of {u} are left over",
            elems.len() - pos
        )));
    }
    let tuple = PlegmaTuple::new(parts.into_iter().map(FinSet::from_sorted).collect())?;
    if !tuple.lengths_nondecreasing() {
        return Err(PlegmaError::DecodeFailed(format!(
            "{tuple} has decreasing part sizes"
        )));
    }
    Ok(tuple)
}

/// Calls `emit(j)` for every index `j` with `(s, keys[j])` a plegma pair.
/// `keys` must be sorted lexicographically.
pub(crate) fn for_each_partner<E>(keys: &[FinSet], s: &[u32], mut emit: E) -> ControlFlow<()>
where
    E: FnMut(usize) -> ControlFlow<()>,
{
    if s.is_empty() {
        return ControlFlow::Continue(());
    }
    partners_in(keys, 0, keys.len(), 0, s, &mut emit)
}

fn partners_in<E>(
    keys: &[FinSet],
    mut lo: usize,
    hi: usize,
    k: usize,
    s: &[u32],
    emit: &mut E,
) -> ControlFlow<()>
where
    E: FnMut(usize) -> ControlFlow<()>,
{
    // Keys in lo..hi share a valid prefix of length k.
    if lo < hi && keys[lo].len() == k {
        if k > 0 {
            emit(lo)?;
        }
        lo += 1;
    }
    let range = &keys[lo..hi];
    let start = lo + range.partition_point(|t| t.as_slice()[k] <= s[k]);
    if k + 1 == s.len() {
        for j in start..hi {
            emit(j)?;
        }
        return ControlFlow::Continue(());
    }
    let end = lo + range.partition_point(|t| t.as_slice()[k] < s[k + 1]);
    let mut g = start;
    while g < end {
        let v = keys[g].as_slice()[k];
        let group_end = g + keys[g..end].partition_point(|t| t.as_slice()[k] <= v);
        partners_in(keys, g, group_end, k + 1, s, emit)?;
        g = group_end;
    }
    ControlFlow::Continue(())
}

/// Directed plegma graph on the members of `F↾↾L` inside
/// `{L(1), …, L(horizon)}`, vertices in lexicographic order.
#[derive(Debug, Clone)]
pub struct PlegmaGraph {
    vertices: Vec<FinSet>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl PlegmaGraph {
    pub fn build(f: &FamilySpec, l_seq: &SeqSet, horizon: u32) -> Result<Self> {
        let h = horizon.min(l_seq.horizon());
        let universe = l_seq.values(h)?;
        let restricted = f.clone().restrict_gap(l_seq.clone());
        let mut vertices = restricted.members_within(&universe, 5_000_000)?;
        vertices.retain(|v| !v.is_empty());
        vertices.sort();
        let mut offsets = Vec::with_capacity(vertices.len() + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for v in &vertices {
            let _ = for_each_partner(&vertices, v.as_slice(), |j| {
                targets.push(j as u32);
                ControlFlow::Continue(())
            });
            offsets.push(targets.len());
        }
        Ok(PlegmaGraph {
            vertices,
            offsets,
            targets,
        })
    }

    pub fn vertices(&self) -> &[FinSet] {
        &self.vertices
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn index_of(&self, s: &FinSet) -> Option<usize> {
        self.vertices.binary_search(s).ok()
    }

    fn successors(&self, v: usize) -> &[u32] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    /// BFS from vertex `src`: distances and BFS-tree parents. Successors are
    /// scanned in lexicographic order, so parents are the lexicographically
    /// first discoveries.
    pub fn bfs(&self, src: usize) -> (Vec<Option<u32>>, Vec<Option<u32>>) {
        let n = self.vertices.len();
        let mut dist = vec![None; n];
        let mut parent = vec![None; n];
        let mut queue = VecDeque::new();
        dist[src] = Some(0);
        queue.push_back(src);
        while let Some(v) = queue.pop_front() {
            let d = dist[v].expect("queued vertices have a distance");
            for &w in self.successors(v) {
                let w = w as usize;
                if dist[w].is_none() {
                    dist[w] = Some(d + 1);
                    parent[w] = Some(v as u32);
                    queue.push_back(w);
                }
            }
        }
        (dist, parent)
    }

    /// Shortest plegma path from `s0` to `s` with at most `max_len` edges.
    /// When `s0 < s` the length is checked against `|s0|`.
    pub fn path(&self, s0: &FinSet, s: &FinSet, max_len: u32) -> Result<Vec<FinSet>> {
        let lookup = |x: &FinSet| {
            self.index_of(x).ok_or_else(|| {
                PlegmaError::Precondition(format!("{x} is not a vertex of the restricted family"))
            })
        };
        let (a, b) = (lookup(s0)?, lookup(s)?);
        if !precedes(s0, s) {
            return Err(PlegmaError::Precondition(format!(
                "{s0} does not precede {s}"
            )));
        }
        let (dist, parent) = self.bfs(a);
        let d = dist[b].ok_or_else(|| {
            PlegmaError::NoPathWithinBounds(format!("{s} is unreachable from {s0}"))
        })?;
        let mut path = vec![self.vertices[b].clone()];
        let mut v = b;
        while let Some(p) = parent[v] {
            v = p as usize;
            path.push(self.vertices[v].clone());
        }
        path.reverse();
        check_path_contract(&path)?;
        if d > max_len {
            return Err(PlegmaError::NoPathWithinBounds(format!(
                "shortest path has {d} edges, more than {max_len}"
            )));
        }
        Ok(path)
    }
}

/// For `s0 < s` a shortest path has exactly `|s0|` edges and every path has
/// at least `min |s_i|` edges.
fn check_path_contract(path: &[FinSet]) -> Result<()> {
    let (first, last) = (&path[0], &path[path.len() - 1]);
    let len = path.len() - 1;
    if precedes(first, last) && len != first.len() {
        return Err(PlegmaError::TheoremViolation(format!(
            "shortest path from {first} to {last} has {len} edges instead of {}",
            first.len()
        )));
    }
    let min_part = path[..len].iter().map(FinSet::len).min().unwrap_or(0);
    if precedes(first, last) && len < min_part {
        return Err(PlegmaError::TheoremViolation(format!(
            "path from {first} to {last} has {len} edges, fewer than {min_part}"
        )));
    }
    for w in path.windows(2) {
        if !plegma_pair(w[0].as_slice(), w[1].as_slice()) {
            return Err(PlegmaError::TheoremViolation(format!(
                "({}, {}) on the path is not a plegma pair",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// Shortest plegma path from `s0` to `s` over `F↾↾L` inside
/// `{L(1), …, L(horizon)}`.
pub fn path_bfs(
    f: &FamilySpec,
    l_seq: &SeqSet,
    s0: &FinSet,
    s: &FinSet,
    max_len: u32,
    horizon: u32,
) -> Result<Vec<FinSet>> {
    PlegmaGraph::build(f, l_seq, horizon)?.path(s0, s, max_len)
}

/// A finite map between families; keys and values are checked on insert.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapTable {
    domain: FamilySpec,
    codomain: FamilySpec,
    entries: BTreeMap<FinSet, FinSet>,
}

impl MapTable {
    pub fn new(domain: FamilySpec, codomain: FamilySpec) -> Self {
        MapTable {
            domain,
            codomain,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, key: FinSet, value: FinSet) -> Result<()> {
        if !self.domain.contains(&key)? {
            return Err(PlegmaError::InvalidEntry(format!(
                "key {key} is not in {}",
                self.domain
            )));
        }
        if !self.codomain.contains(&value)? {
            return Err(PlegmaError::InvalidEntry(format!(
                "value {value} is not in {}",
                self.codomain
            )));
        }
        self.entries.insert(key, value);
        Ok(())
    }

    /// Builds `{t ↦ phi(t)}` over the given keys.
    pub fn from_fn<I, P>(
        domain: FamilySpec,
        codomain: FamilySpec,
        keys: I,
        mut phi: P,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = FinSet>,
        P: FnMut(&FinSet) -> FinSet,
    {
        let mut table = MapTable::new(domain, codomain);
        for k in keys {
            let v = phi(&k);
            table.insert(k, v)?;
        }
        Ok(table)
    }

    pub fn domain(&self) -> &FamilySpec {
        &self.domain
    }

    pub fn codomain(&self) -> &FamilySpec {
        &self.codomain
    }

    pub fn entries(&self) -> &BTreeMap<FinSet, FinSet> {
        &self.entries
    }

    pub fn get(&self, key: &FinSet) -> Option<&FinSet> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// `φ_N({n}) = {n, n + N}` for `n ≤ domain_max`, from `[ℕ]¹` to `[ℕ]²`.
pub fn shift_map(gap: u32, domain_max: u32) -> Result<MapTable> {
    if gap == 0 {
        return Err(PlegmaError::Precondition("the gap must be positive".into()));
    }
    MapTable::from_fn(
        FamilySpec::cube(1),
        FamilySpec::cube(2),
        (1..=domain_max).map(|n| FinSet::from_sorted(vec![n])),
        |k| {
            let n = k.as_slice()[0];
            FinSet::from_sorted(vec![n, n + gap])
        },
    )
}

/// `{n} ↦ {n+1, …, 2n+1}` for `n ≤ domain_max`, from `[ℕ]¹` into
/// `{s : |s| = min s}`. No two images form a plegma pair in either order.
pub fn interval_coding(codomain: FamilySpec, domain_max: u32) -> Result<MapTable> {
    MapTable::from_fn(
        FamilySpec::cube(1),
        codomain,
        (1..=domain_max).map(|n| FinSet::from_sorted(vec![n])),
        |k| {
            let n = k.as_slice()[0];
            FinSet::from_sorted((n + 1..=2 * n + 1).collect())
        },
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairWitness {
    pub keys: (FinSet, FinSet),
    pub images: (FinSet, FinSet),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MapReport {
    pub keys: usize,
    pub pairs_examined: u64,
    pub preserving_pairs: u64,
    pub reversed_pairs: u64,
    pub violating_pairs: u64,
    /// Every plegma pair of keys satisfies `|φ(s_1)| ≤ |φ(s_2)|`.
    pub pair_lengths_ok: bool,
    /// `|φ(s)| ≤ |s|` for every key.
    pub key_lengths_ok: bool,
    pub normal: bool,
    /// Stopped at the pair budget.
    pub truncated: bool,
    pub preserving_witness: Option<PairWitness>,
    pub reversed_witness: Option<PairWitness>,
    pub violating_witness: Option<PairWitness>,
    pub pair_length_witness: Option<PairWitness>,
    pub key_length_witness: Option<(FinSet, FinSet)>,
}

/// Classifies every plegma pair `(s_1, s_2)` of keys, up to `budget` pairs:
/// the images are a plegma pair in the same order, in reversed order, or in
/// neither (violating).
pub fn map_report(table: &MapTable, budget: Option<u64>) -> MapReport {
    let keys: Vec<FinSet> = table.entries.keys().cloned().collect();
    let values: Vec<&FinSet> = table.entries.values().collect();
    let mut r = MapReport {
        keys: keys.len(),
        pairs_examined: 0,
        preserving_pairs: 0,
        reversed_pairs: 0,
        violating_pairs: 0,
        pair_lengths_ok: true,
        key_lengths_ok: true,
        normal: true,
        truncated: false,
        preserving_witness: None,
        reversed_witness: None,
        violating_witness: None,
        pair_length_witness: None,
        key_length_witness: None,
    };
    for (k, v) in keys.iter().zip(&values) {
        if v.len() > k.len() {
            r.key_lengths_ok = false;
            r.key_length_witness
                .get_or_insert_with(|| (k.clone(), (*v).clone()));
        }
    }
    'outer: for (i, s) in keys.iter().enumerate() {
        let a = values[i];
        let flow = for_each_partner(&keys, s.as_slice(), |j| {
            if budget.is_some_and(|b| r.pairs_examined >= b) {
                r.truncated = true;
                return ControlFlow::Break(());
            }
            r.pairs_examined += 1;
            let b = values[j];
            let witness = || PairWitness {
                keys: (s.clone(), keys[j].clone()),
                images: (a.clone(), b.clone()),
            };
            if plegma_pair(a.as_slice(), b.as_slice()) {
                r.preserving_pairs += 1;
                if r.preserving_witness.is_none() {
                    r.preserving_witness = Some(witness());
                }
            } else if plegma_pair(b.as_slice(), a.as_slice()) {
                r.reversed_pairs += 1;
                if r.reversed_witness.is_none() {
                    r.reversed_witness = Some(witness());
                }
            } else {
                r.violating_pairs += 1;
                if r.violating_witness.is_none() {
                    r.violating_witness = Some(witness());
                }
            }
            if a.len() > b.len() {
                r.pair_lengths_ok = false;
                if r.pair_length_witness.is_none() {
                    r.pair_length_witness = Some(witness());
                }
            }
            ControlFlow::Continue(())
        });
        if flow.is_break() {
            break 'outer;
        }
    }
    r.normal = r.pair_lengths_ok && r.key_lengths_ok;
    r
}

#[derive(Debug, Clone)]
pub struct PreservingMapConfig {
    /// Target index set `M`; all of ℕ when absent.
    pub m: Option<SeqSet>,
    /// Stop collecting keys after this many.
    pub max_keys: usize,
}

impl Default for PreservingMapConfig {
    fn default() -> Self {
        PreservingMapConfig {
            m: None,
            max_keys: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IndexGuarantee {
    pub checked: usize,
    pub failures: usize,
    pub witness: Option<(FinSet, FinSet)>,
}

#[derive(Debug, Clone)]
pub struct PreservingMap {
    pub table: MapTable,
    pub order_domain: Ordinal,
    pub order_codomain: Ordinal,
    /// The embedding `L_0` of the codomain closure into the domain closure.
    pub l0: SeqSet,
    pub m: SeqSet,
    /// `N = L_0(M)` up to the horizon.
    pub n: Vec<u32>,
    pub keys_truncated: bool,
    /// Keys with no member `s` satisfying `L_0(s) ⊑ t`.
    pub uncovered: Vec<FinSet>,
    pub index_guarantee: IndexGuarantee,
}

/// Builds `φ : G↾N → F↾M` for `o(F) ≤ o(G)` inside `{1..H}`: with `L_0`
/// embedding the closure of `F` into the closure of `G`, `φ(t)` is the
/// member `s` of `F` with `L_0(s) ⊑ t`. Keys are the maximal elements of the
/// closure of `G`, so non-thin inputs are handled through their maximal
/// members.
pub fn construct_preserving_map(
    g: &FamilySpec,
    f: &FamilySpec,
    h: u32,
    cfg: &PreservingMapConfig,
) -> Result<PreservingMap> {
    let (og, of) = (g.order()?, f.order()?);
    if of > og {
        return Err(PlegmaError::Precondition(format!(
            "o(F) = {of} exceeds o(G) = {og}"
        )));
    }
    let g_keys = g.clone().hat().maximals();
    let embedding = embed_shift(&f.clone().hat(), &g_keys.clone().hat(), h)?;
    let l0 = embedding.seq;
    let m = match &cfg.m {
        Some(m) => m.clone(),
        None => SeqSet::all(h),
    };
    let mut n = Vec::new();
    for i in 1..=m.horizon() {
        let mi = m.at(i)?;
        if mi > h {
            break;
        }
        let v = l0.at(mi)?;
        if v > h {
            break;
        }
        n.push(v);
    }
    let mut keys = Vec::new();
    let mut keys_truncated = false;
    g_keys.for_each_member_within(&n, |t| {
        if keys.len() == cfg.max_keys {
            keys_truncated = true;
            return ControlFlow::Break(());
        }
        if !t.is_empty() {
            keys.push(t.to_vec());
        }
        ControlFlow::Continue(())
    })?;
    let mut table = MapTable::new(g_keys, f.clone());
    let mut uncovered = Vec::new();
    let mut guarantee = IndexGuarantee {
        checked: 0,
        failures: 0,
        witness: None,
    };
    for t in keys {
        let mut found = None;
        for k in 1..=t.len() {
            let pre = l0
                .preimage_slice(&t[..k])?
                .expect("keys lie inside the range of L_0");
            if f.contains_slice(&pre)? {
                found = Some(pre);
                break;
            }
        }
        let key = FinSet::from_sorted(t);
        let Some(value) = found else {
            uncovered.push(key);
            continue;
        };
        let value = FinSet::from_sorted(value);
        // Largest l with N(l) ≤ min t; then min φ(t) ≥ M(l) is required.
        let min_t = key.as_slice()[0];
        let l = n.partition_point(|&x| x <= min_t);
        if l > 0 {
            guarantee.checked += 1;
            let bound = m.at(l as u32)?;
            if value.as_slice().first().is_none_or(|&v| v < bound) {
                guarantee.failures += 1;
                guarantee
                    .witness
                    .get_or_insert_with(|| (key.clone(), value.clone()));
            }
        }
        table.insert(key, value)?;
    }
    Ok(PreservingMap {
        table,
        order_domain: og,
        order_codomain: of,
        l0,
        m,
        n,
        keys_truncated,
        uncovered,
        index_guarantee: guarantee,
    })
}
