//! Per-edge match probabilities and fanouts.
//!
//! For a directed edge `R -> S` (tuples of `R` probing `S`), `m` is the
//! probability that a probing tuple finds at least one match and `fo` is the
//! mean number of matches given that it finds one, so the classical
//! selectivity is `s = m * fo`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::query::JoinTree;
use crate::scalar::Scalar;

pub const STATS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeStats<S> {
    pub m: S,
    pub fo: S,
}

impl<S: Scalar> EdgeStats<S> {
    pub fn new(m: S, fo: S) -> Self {
        EdgeStats { m, fo }
    }

    /// Key/foreign-key edge: every probe finds exactly one match.
    pub fn unit() -> Self {
        EdgeStats {
            m: S::one(),
            fo: S::one(),
        }
    }

    pub fn s(&self) -> S {
        self.m * self.fo
    }

    pub fn is_valid(&self) -> bool {
        self.m >= S::zero() && self.m <= S::one() && self.fo >= S::one()
    }

    pub fn cast<T: Scalar>(&self) -> EdgeStats<T> {
        EdgeStats {
            m: T::lit(self.m.as_f64()),
            fo: T::lit(self.fo.as_f64()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub rows: u64,
    pub distinct: u64,
}

impl ColumnSummary {
    pub fn of(values: &[i64]) -> Self {
        let distinct = values.iter().collect::<HashSet<_>>().len() as u64;
        ColumnSummary {
            rows: values.len() as u64,
            distinct,
        }
    }
}

/// Estimate under uniformity and independence for `R` probing `S` with a
/// predicate of selectivity `sp` on `S`.
pub fn naive_stats<S: Scalar>(r: ColumnSummary, s: ColumnSummary, sp: S) -> EdgeStats<S> {
    if s.rows == 0 || s.distinct == 0 {
        return EdgeStats::new(S::zero(), S::one());
    }
    let vs = S::from_count(s.distinct);
    let vr = S::from_count(r.distinct.max(1));
    let rows = sp * S::from_count(s.rows);
    if rows < vs {
        return EdgeStats::new((rows / vr).min(S::one()), S::one());
    }
    EdgeStats::new(vs / vr.max(vs), rows / vs)
}

/// Correlated sample of probe-side rows: for every sampled row the number of
/// matches on the build side and one uniformly drawn matching build row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrelatedSample {
    pub rows: Vec<usize>,
    pub match_counts: Vec<u64>,
    pub match_samples: Vec<Option<usize>>,
}

impl CorrelatedSample {
    pub fn draw(probe: &[i64], build: &[i64], sample_size: usize, seed: u64) -> Result<Self> {
        if sample_size == 0 {
            return Err(Error::InvalidArgument("sample size must be positive".into()));
        }
        let mut by_key: HashMap<i64, Vec<usize>> = HashMap::new();
        for (i, &k) in build.iter().enumerate() {
            by_key.entry(k).or_default().push(i);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = sample_size.min(probe.len());
        let mut rows = index::sample(&mut rng, probe.len(), k).into_vec();
        rows.sort_unstable();
        let mut match_counts = Vec::with_capacity(k);
        let mut match_samples = Vec::with_capacity(k);
        for &r in &rows {
            match by_key.get(&probe[r]) {
                Some(m) => {
                    match_counts.push(m.len() as u64);
                    match_samples.push(Some(m[rng.gen_range(0..m.len())]));
                }
                None => {
                    match_counts.push(0);
                    match_samples.push(None);
                }
            }
        }
        Ok(CorrelatedSample {
            rows,
            match_counts,
            match_samples,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn estimate<S: Scalar>(&self) -> EdgeStats<S> {
        count_stats(self.len() as u64, &self.match_counts)
    }
}

fn count_stats<S: Scalar>(rows: u64, counts: &[u64]) -> EdgeStats<S> {
    if rows == 0 {
        return EdgeStats::new(S::zero(), S::one());
    }
    let matched = counts.iter().filter(|&&c| c > 0).count() as u64;
    let total: u64 = counts.iter().sum();
    let m = S::from_count(matched) / S::from_count(rows);
    let fo = if matched == 0 {
        S::one()
    } else {
        S::from_count(total) / S::from_count(matched)
    };
    EdgeStats::new(m, fo)
}

/// Sampling estimator for `probe -> build`; an empty probe side yields
/// `m = 0, fo = 1`.
pub fn sample_stats<S: Scalar>(
    probe: &[i64],
    build: &[i64],
    sample_size: usize,
    seed: u64,
) -> Result<EdgeStats<S>> {
    Ok(CorrelatedSample::draw(probe, build, sample_size, seed)?.estimate())
}

/// Exact statistics by counting every probe-side row.
pub fn exact_edge_stats<S: Scalar>(probe: &[i64], build: &[i64]) -> EdgeStats<S> {
    let mut freq: HashMap<i64, u64> = HashMap::new();
    for &k in build {
        *freq.entry(k).or_default() += 1;
    }
    let counts: Vec<u64> = probe.iter().map(|k| freq.get(k).copied().unwrap_or(0)).collect();
    count_stats(probe.len() as u64, &counts)
}

pub fn q_error<S: Scalar>(estimate: S, actual: S) -> S {
    if estimate == actual {
        return S::one();
    }
    if estimate <= S::zero() || actual <= S::zero() {
        return S::infinity();
    }
    (estimate / actual).max(actual / estimate)
}

/// Statistics for probing a child that was independently reduced to a
/// fraction `ratio` of its tuples.
pub fn adjusted_stats<S: Scalar>(base: EdgeStats<S>, ratio: S) -> EdgeStats<S> {
    if ratio <= S::zero() {
        return EdgeStats::new(S::zero(), S::one());
    }
    let keep = S::one() - (S::one() - ratio).powf(base.fo);
    if keep <= S::zero() {
        return EdgeStats::new(S::zero(), S::one());
    }
    EdgeStats::new(base.m * keep, (base.fo * ratio / keep).max(S::one()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub parent: String,
    pub child: String,
    pub m: f64,
    pub fo: f64,
}

/// On-disk statistics: directed edge stats plus relation cardinalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsFile {
    pub schema_version: u32,
    pub edges: Vec<EdgeRecord>,
    #[serde(default)]
    pub cardinalities: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub predicate_selectivity: BTreeMap<String, f64>,
}

impl Default for StatsFile {
    fn default() -> Self {
        StatsFile {
            schema_version: STATS_SCHEMA_VERSION,
            edges: Vec::new(),
            cardinalities: BTreeMap::new(),
            predicate_selectivity: BTreeMap::new(),
        }
    }
}

impl StatsFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn edge<S: Scalar>(&self, parent: &str, child: &str) -> Result<EdgeStats<S>> {
        self.edges
            .iter()
            .find(|e| e.parent == parent && e.child == child)
            .map(|e| EdgeStats::new(S::lit(e.m), S::lit(e.fo)))
            .ok_or_else(|| Error::MissingStats(format!("{parent} -> {child}")))
    }

    pub fn set_edge(&mut self, parent: &str, child: &str, st: EdgeStats<f64>) {
        match self
            .edges
            .iter_mut()
            .find(|e| e.parent == parent && e.child == child)
        {
            Some(e) => {
                e.m = st.m;
                e.fo = st.fo;
            }
            None => self.edges.push(EdgeRecord {
                parent: parent.into(),
                child: child.into(),
                m: st.m,
                fo: st.fo,
            }),
        }
    }

    pub fn cardinality(&self, rel: &str) -> Result<u64> {
        self.cardinalities
            .get(rel)
            .copied()
            .ok_or_else(|| Error::MissingStats(format!("cardinality of {rel}")))
    }
}

/// How [`collect_stats`] estimates each directed edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    Exact,
    Naive,
    Sample { size: usize, seed: u64 },
}

/// Statistics for both directions of every edge of `tree`.
pub fn collect_stats(
    catalog: &Catalog,
    tree: &JoinTree,
    estimator: Estimator,
    predicate_selectivity: &BTreeMap<String, f64>,
) -> Result<StatsFile> {
    let mut out = StatsFile {
        predicate_selectivity: predicate_selectivity.clone(),
        ..StatsFile::default()
    };
    for name in tree.names() {
        out.cardinalities
            .insert(name.clone(), catalog.relation(name)?.row_count as u64);
    }
    for (ei, e) in tree.edges().iter().enumerate() {
        let (a, b) = (&tree.names()[e.a], &tree.names()[e.b]);
        let (ka, kb) = catalog.join_keys(a, &e.a_attrs, b, &e.b_attrs)?;
        for (p, c, kp, kc) in [(a, b, &ka, &kb), (b, a, &kb, &ka)] {
            let st = match estimator {
                Estimator::Exact => exact_edge_stats(kp, kc),
                Estimator::Naive => {
                    let sp = predicate_selectivity.get(c).copied().unwrap_or(1.0);
                    naive_stats(ColumnSummary::of(kp), ColumnSummary::of(kc), sp)
                }
                Estimator::Sample { size, seed } => {
                    sample_stats(kp, kc, size, seed.wrapping_add(2 * ei as u64 + (p == b) as u64))?
                }
            };
            out.set_edge(p, c, st);
        }
    }
    Ok(out)
}
