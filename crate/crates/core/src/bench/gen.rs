//! Synthetic instances with controlled match probabilities and fanouts.
//!
//! Relations are `R1..Rn`. For every tree edge `p -> c`, `p` carries a key
//! column `k_<c>` and `c` carries `pk`. The parent's key column takes `V`
//! distinct values, spread evenly over its rows; the child holds
//! `round(m * V)` of those values, each repeated by a fanout draw.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, Relation};
use crate::error::{Error, Result};
use crate::query::{EdgeSpec, JoinTree, QuerySpec};
use crate::stats::{collect_stats, Estimator, StatsFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Shape {
    /// Center plus `k - 1` leaves.
    Star(usize),
    /// `k` relations in a line.
    Path(usize),
    /// Center with `a` children, each with `b` children of its own.
    Snowflake(usize, usize),
}

impl Shape {
    pub fn relations(self) -> usize {
        match self {
            Shape::Star(k) | Shape::Path(k) => k,
            Shape::Snowflake(a, b) => 1 + a + a * b,
        }
    }

    /// Parent of every relation, rooted at the driver: the center of stars
    /// and snowflakes, the middle relation of a path.
    pub fn parents(self) -> Vec<Option<usize>> {
        match self {
            Shape::Star(k) => (0..k).map(|i| if i == 0 { None } else { Some(0) }).collect(),
            Shape::Path(k) => {
                let mid = (k - 1) / 2;
                (0..k)
                    .map(|i| match i.cmp(&mid) {
                        std::cmp::Ordering::Equal => None,
                        std::cmp::Ordering::Less => Some(i + 1),
                        std::cmp::Ordering::Greater => Some(i - 1),
                    })
                    .collect()
            }
            Shape::Snowflake(a, b) => {
                let mut p = vec![None];
                p.extend((0..a).map(|_| Some(0)));
                for i in 0..a {
                    p.extend((0..b).map(|_| Some(1 + i)));
                }
                p
            }
        }
    }

    pub fn root(self) -> usize {
        match self {
            Shape::Path(k) => (k - 1) / 2,
            _ => 0,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Star(k) => write!(f, "star:{k}"),
            Shape::Path(k) => write!(f, "path:{k}"),
            Shape::Snowflake(a, b) => write!(f, "snowflake:{a},{b}"),
        }
    }
}

fn numbers<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad {what} parameter `{p}`")))
        })
        .collect()
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = s.split_once(':').unwrap_or((s, ""));
        let v: Vec<usize> = numbers(args, "shape")?;
        let shape = match (kind.to_ascii_lowercase().as_str(), v.as_slice()) {
            ("star", [k]) => Shape::Star(*k),
            ("path", [k]) => Shape::Path(*k),
            ("snowflake", [a, b]) => Shape::Snowflake(*a, *b),
            _ => return Err(Error::InvalidArgument(format!("unknown shape `{s}`"))),
        };
        if shape.relations() < 2 || matches!(shape, Shape::Snowflake(0, _)) {
            return Err(Error::InvalidArgument(format!("shape `{s}` needs at least two relations")));
        }
        Ok(shape)
    }
}

impl From<Shape> for String {
    fn from(s: Shape) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Shape {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// How many copies of each selected key a child receives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum FanoutSpec {
    /// Mean fanout `f` for every key; non-integer values mix floor and ceil.
    Constant(f64),
    /// One integer fanout per edge, uniform in `[lo, hi]`, shared by all keys.
    Uniform(u32, u32),
    /// Per key: normal with the given mean and variance, redrawn until it
    /// falls in `[1, 2 * mean - 1]`, then rounded.
    Normal { mean: f64, variance: f64 },
    /// Per key: exponential with the given mean, rounded, at least 1.
    Exponential(f64),
}

impl FanoutSpec {
    pub fn mean(&self) -> f64 {
        match *self {
            FanoutSpec::Constant(f) => f,
            FanoutSpec::Uniform(lo, hi) => (lo + hi) as f64 / 2.0,
            FanoutSpec::Normal { mean, .. } | FanoutSpec::Exponential(mean) => mean,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            FanoutSpec::Constant(f) => f >= 1.0,
            FanoutSpec::Uniform(lo, hi) => lo >= 1 && lo <= hi,
            FanoutSpec::Normal { mean, variance } => mean >= 1.0 && variance >= 0.0,
            FanoutSpec::Exponential(mean) => mean > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid fanout `{self}`")))
        }
    }

    /// Copies for `keys` selected keys of one edge.
    fn draw(&self, keys: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
        match *self {
            FanoutSpec::Constant(f) => {
                let base = f.floor() as u32;
                let extra = ((f - f.floor()) * keys as f64).round() as usize;
                let mut v = vec![base; keys];
                for i in index::sample(rng, keys, extra.min(keys)) {
                    v[i] += 1;
                }
                v
            }
            FanoutSpec::Uniform(lo, hi) => vec![rng.gen_range(lo..=hi); keys],
            FanoutSpec::Normal { mean, variance } => {
                let d = Normal::new(mean, variance.sqrt()).expect("validated");
                let hi = 2.0 * mean - 1.0;
                (0..keys)
                    .map(|_| loop {
                        let x: f64 = d.sample(rng);
                        if (1.0..=hi).contains(&x) {
                            break x.round() as u32;
                        }
                    })
                    .collect()
            }
            FanoutSpec::Exponential(mean) => {
                let d = Exp::new(1.0 / mean).expect("validated");
                (0..keys)
                    .map(|_| d.sample(rng).round().max(1.0) as u32)
                    .collect()
            }
        }
    }
}

impl fmt::Display for FanoutSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FanoutSpec::Constant(c) => write!(f, "constant:{c}"),
            FanoutSpec::Uniform(lo, hi) => write!(f, "uniform:{lo},{hi}"),
            FanoutSpec::Normal { mean, variance } => write!(f, "normal:{mean},{variance}"),
            FanoutSpec::Exponential(m) => write!(f, "exponential:{m}"),
        }
    }
}

impl FromStr for FanoutSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = s.split_once(':').unwrap_or(("constant", s));
        let v: Vec<f64> = numbers(args, "fanout")?;
        let spec = match (kind.to_ascii_lowercase().as_str(), v.as_slice()) {
            ("constant", [c]) => FanoutSpec::Constant(*c),
            ("uniform", [lo, hi]) if lo.fract() == 0.0 && hi.fract() == 0.0 => FanoutSpec::Uniform(*lo as u32, *hi as u32),
            ("normal", [mean, variance]) => FanoutSpec::Normal {
                mean: *mean,
                variance: *variance,
            },
            ("exponential", [m]) => FanoutSpec::Exponential(*m),
            _ => return Err(Error::InvalidArgument(format!("unknown fanout `{s}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<FanoutSpec> for String {
    fn from(s: FanoutSpec) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for FanoutSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Inclusive range of match probabilities, sampled per edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct MRange {
    pub lo: f64,
    pub hi: f64,
}

impl MRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::InvalidArgument(format!("match range {lo}:{hi} is not within (0, 1]")));
        }
        Ok(MRange { lo, hi })
    }

    pub fn fixed(m: f64) -> Result<Self> {
        Self::new(m, m)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.gen_range(self.lo..=self.hi)
        }
    }
}

impl fmt::Display for MRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.lo, self.hi)
    }
}

impl FromStr for MRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |_| Error::InvalidArgument(format!("bad match range `{s}`"));
        match s.split_once(':') {
            Some((lo, hi)) => Self::new(lo.trim().parse().map_err(bad)?, hi.trim().parse().map_err(bad)?),
            None => Self::fixed(s.trim().parse().map_err(bad)?),
        }
    }
}

impl From<MRange> for String {
    fn from(r: MRange) -> String {
        r.to_string()
    }
}

impl TryFrom<String> for MRange {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub shape: Shape,
    /// Driver cardinality.
    pub n: usize,
    pub m: MRange,
    pub fanout: FanoutSpec,
    pub seed: u64,
}

/// Target for one edge `parent -> child`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeTarget {
    pub m: f64,
    pub fanout: FanoutSpec,
}

/// Generated data with its query and the statistics measured on it.
#[derive(Debug, Clone)]
pub struct GeneratedInstance {
    pub catalog: Catalog,
    pub query: QuerySpec,
    /// Exact per-edge statistics of the generated data.
    pub stats: StatsFile,
    /// Requested targets, per relation; `None` for the driver.
    pub targets: Vec<Option<EdgeTarget>>,
    pub seed: u64,
}

impl GeneratedInstance {
    pub fn tree(&self) -> Result<JoinTree> {
        JoinTree::from_spec(&self.query)
    }

    pub fn driver(&self) -> &str {
        self.query.driver.as_deref().expect("generated queries name a driver")
    }

    /// Writes `catalog/`, `query.json` and `stats.json` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.catalog.save_dir(&dir.join("catalog"))?;
        self.query.write(&dir.join("query.json"))?;
        self.stats.write(&dir.join("stats.json"))
    }
}

pub fn relation_name(i: usize) -> String {
    format!("R{}", i + 1)
}

pub fn gen_synthetic(spec: &ShapeSpec) -> Result<GeneratedInstance> {
    spec.fanout.validate()?;
    let parents = spec.shape.parents();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let targets: Vec<Option<EdgeTarget>> = parents
        .iter()
        .map(|p| {
            p.map(|_| EdgeTarget {
                m: spec.m.sample(&mut rng),
                fanout: spec.fanout,
            })
        })
        .collect();
    gen_tree(&parents, spec.n, &targets, spec.seed)
}

/// Generates data for an arbitrary rooted tree. `parents[v]` is `v`'s parent
/// (exactly one `None`, the driver) and `targets[v]` the edge into `v`. The
/// number of distinct key values on a parent side is capped at `n`.
pub fn gen_tree(parents: &[Option<usize>], n: usize, targets: &[Option<EdgeTarget>], seed: u64) -> Result<GeneratedInstance> {
    let k = parents.len();
    let root = parents
        .iter()
        .position(Option::is_none)
        .ok_or_else(|| Error::InvalidArgument("tree has no root".into()))?;
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (v, p) in parents.iter().enumerate() {
        if let Some(p) = *p {
            children[p].push(v);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a09_e667_f3bc_c908);
    let mut rows = vec![0usize; k];
    rows[root] = n;
    let mut columns: Vec<Vec<(String, Vec<i64>)>> = vec![Vec::new(); k];
    let mut queue = std::collections::VecDeque::from([root]);
    let mut visited = 1;
    while let Some(v) = queue.pop_front() {
        for &c in &children[v] {
            let t = targets[c].ok_or_else(|| Error::InvalidArgument(format!("no target for {}", relation_name(c))))?;
            t.fanout.validate()?;
            if !(t.m > 0.0 && t.m <= 1.0) {
                return Err(Error::InvalidArgument(format!("match probability {} is not within (0, 1]", t.m)));
            }
            let domain = rows[v].min(n);
            let picked = (t.m * domain as f64).round() as usize;
            if picked == 0 {
                return Err(Error::Infeasible(format!(
                    "m = {} over {} key values selects no key for {}",
                    t.m,
                    domain,
                    relation_name(c)
                )));
            }
            let mut values: Vec<i64> = (0..domain as i64).collect();
            values.shuffle(&mut rng);
            let parent_col: Vec<i64> = (0..rows[v]).map(|i| values[i % domain]).collect();
            let keys = index::sample(&mut rng, domain, picked);
            let copies = t.fanout.draw(picked, &mut rng);
            let mut child_col = Vec::new();
            for (key, &f) in keys.iter().zip(&copies) {
                child_col.extend(std::iter::repeat_n(values[key], f as usize));
            }
            child_col.shuffle(&mut rng);
            rows[c] = child_col.len();
            columns[v].push((format!("k_{}", relation_name(c)), parent_col));
            columns[c].insert(0, ("pk".to_string(), child_col));
            queue.push_back(c);
            visited += 1;
        }
    }
    if visited != k {
        return Err(Error::DisconnectedQuery);
    }
    let mut catalog = Catalog::new();
    for (v, cols) in columns.into_iter().enumerate() {
        let cols = if cols.is_empty() {
            vec![("pk".to_string(), Vec::new())]
        } else {
            cols
        };
        catalog.insert(Relation::from_columns(relation_name(v), cols)?)?;
    }
    let query = QuerySpec {
        relations: (0..k).map(relation_name).collect(),
        edges: (0..k)
            .filter_map(|c| {
                parents[c].map(|p| EdgeSpec::new(&relation_name(p), &format!("k_{}", relation_name(c)), &relation_name(c), "pk"))
            })
            .collect(),
        driver: Some(relation_name(root)),
    };
    let tree = JoinTree::from_spec(&query)?;
    let stats = collect_stats(&catalog, &tree, Estimator::Exact, &BTreeMap::new())?;
    Ok(GeneratedInstance {
        catalog,
        query,
        stats,
        targets: targets.to_vec(),
        seed,
    })
}
