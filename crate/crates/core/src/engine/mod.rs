//! Vectorized execution of left-deep plans with exact probe counters.
//!
//! Intermediate tuples carry row ids of base relations; join keys are
//! gathered from per-edge key columns. STD materializes flat tuples after
//! every join, COM keeps one factorized chunk per driver chunk and expands
//! it at the end, BVP adds bitvector filters and SJ runs a bottom-up
//! semi-join pass before the joins.

mod factorized;
pub mod hash;
mod pipeline;
mod semijoin;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, DEFAULT_CHUNK_SIZE};
use crate::error::{Error, Result};
use crate::query::{JoinTree, Plan, RootedTree, SjPlan, Strategy};

pub use factorized::{ColumnGroup, FactorizedChunk};
pub use hash::{hash_key, BitVectorFilter, HashTable};
pub use semijoin::{semi_join_reduce, Reduction};

pub const DEFAULT_HASH_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    Flat,
    Factorized,
    CountOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecOptions {
    pub chunk_size: usize,
    pub output: OutputMode,
    pub hash_seed: u64,
    pub timeout: Option<Duration>,
    pub check_invariants: bool,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions {
            chunk_size: DEFAULT_CHUNK_SIZE,
            output: OutputMode::CountOnly,
            hash_seed: DEFAULT_HASH_SEED,
            timeout: None,
            check_invariants: true,
        }
    }
}

/// Exact counters, per relation where it applies: hash probes into a
/// relation's table, probes into its bitvector, semi-join probes into it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionStats {
    pub hash_probes: Vec<u64>,
    pub bitvector_probes: Vec<u64>,
    pub semijoin_probes: Vec<u64>,
    pub emitted_tuples: u64,
    pub expansion_steps: u64,
    pub invariant_violations: u64,
}

impl ExecutionStats {
    pub fn new(n: usize) -> Self {
        ExecutionStats {
            hash_probes: vec![0; n],
            bitvector_probes: vec![0; n],
            semijoin_probes: vec![0; n],
            ..Default::default()
        }
    }

    pub fn total_hash(&self) -> u64 {
        self.hash_probes.iter().sum()
    }

    pub fn total_bitvector(&self) -> u64 {
        self.bitvector_probes.iter().sum()
    }

    pub fn total_semijoin(&self) -> u64 {
        self.semijoin_probes.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSummary {
    pub strategy: Strategy,
    pub output: OutputMode,
    pub cardinality: u64,
    /// Result rows as row ids, one per relation in query declaration order.
    #[serde(skip)]
    pub rows: Option<Vec<Vec<u32>>>,
    /// Entries held in factorized chunks (COM strategies only).
    pub factorized_entries: u64,
    pub stats: ExecutionStats,
    pub wall_time_ms: f64,
    /// Set when the timeout fired; counters are then partial.
    pub timed_out: bool,
}

/// Per-query execution context: the rooted tree, per-edge key columns and
/// the build-side structures.
pub(crate) struct Context<'a> {
    pub tree: &'a RootedTree,
    /// `parent_keys[x]`: key of the edge `parent(x) -> x` for every row of
    /// the parent.
    pub parent_keys: Vec<Vec<i64>>,
    /// `child_keys[x]`: the same key for every row of `x`.
    pub child_keys: Vec<Vec<i64>>,
    pub tables: Vec<Option<HashTable>>,
    pub filters: Vec<Option<BitVectorFilter>>,
    pub driver_rows: Vec<u32>,
    pub order: Vec<usize>,
    pub opts: &'a ExecOptions,
    pub stats: ExecutionStats,
    pub deadline: Option<Instant>,
    pub timed_out: bool,
    pub rows: Option<Vec<Vec<u32>>>,
    pub cardinality: u64,
    pub factorized_entries: u64,
}

impl<'a> Context<'a> {
    fn new(catalog: &Catalog, tree: &'a RootedTree, order: Vec<usize>, opts: &'a ExecOptions) -> Result<Self> {
        let n = tree.len();
        let mut parent_keys = vec![Vec::new(); n];
        let mut child_keys = vec![Vec::new(); n];
        for x in tree.non_root() {
            let p = tree.parent[x].expect("non-root");
            let (pk, ck) = catalog.join_keys(tree.name(p), &tree.parent_attrs[x], tree.name(x), &tree.child_attrs[x])?;
            parent_keys[x] = pk;
            child_keys[x] = ck;
        }
        let root_rows = catalog.relation(tree.name(tree.root))?.row_count;
        if root_rows > u32::MAX as usize {
            return Err(Error::InvalidArgument("relation exceeds 2^32 rows".into()));
        }
        Ok(Context {
            tree,
            parent_keys,
            child_keys,
            tables: (0..n).map(|_| None).collect(),
            filters: (0..n).map(|_| None).collect(),
            driver_rows: (0..root_rows as u32).collect(),
            order,
            opts,
            stats: ExecutionStats::new(n),
            deadline: opts.timeout.map(|t| Instant::now() + t),
            timed_out: false,
            rows: match opts.output {
                OutputMode::Flat => Some(Vec::new()),
                _ => None,
            },
            cardinality: 0,
            factorized_entries: 0,
        })
    }

    fn build_tables(&mut self) {
        for x in self.tree.non_root() {
            let t = HashTable::build_all(&self.child_keys[x], self.opts.hash_seed);
            let ok = !self.opts.check_invariants || t.chains_complete();
            self.violation(ok);
            self.tables[x] = Some(t);
        }
    }

    fn build_filters(&mut self) {
        for x in self.tree.non_root() {
            self.filters[x] = Some(BitVectorFilter::build_all(&self.child_keys[x], self.opts.hash_seed));
        }
    }

    pub fn filter(&self, x: usize) -> &BitVectorFilter {
        self.filters[x].as_ref().expect("filter built")
    }

    pub fn check_deadline(&mut self) -> bool {
        if let Some(d) = self.deadline {
            if Instant::now() >= d {
                self.timed_out = true;
            }
        }
        self.timed_out
    }

    pub fn violation(&mut self, ok: bool) {
        if self.opts.check_invariants && !ok {
            self.stats.invariant_violations += 1;
        }
    }

    /// Records one result tuple given row ids in plan position order.
    pub fn emit(&mut self, by_position: &[u32]) {
        self.stats.emitted_tuples += 1;
        self.cardinality += 1;
        if let Some(rows) = &mut self.rows {
            let mut t = vec![0u32; by_position.len()];
            t[self.tree.root] = by_position[0];
            for (i, &x) in self.order.iter().enumerate() {
                t[x] = by_position[i + 1];
            }
            rows.push(t);
        }
    }
}

/// Executes `plan` over `catalog`. The plan's strategy selects the
/// operators; `opts.output` selects what is materialized.
pub fn execute(catalog: &Catalog, tree: &JoinTree, plan: &Plan, opts: &ExecOptions) -> Result<ResultSummary> {
    let rooted = tree.root_at(&plan.driver)?;
    let sj = SjPlan::from_plan(&rooted, plan)?;
    execute_rooted(catalog, &rooted, &sj, plan.strategy, opts)
}

pub fn execute_rooted(
    catalog: &Catalog,
    tree: &RootedTree,
    plan: &SjPlan,
    strategy: Strategy,
    opts: &ExecOptions,
) -> Result<ResultSummary> {
    if opts.chunk_size == 0 {
        return Err(Error::InvalidArgument("chunk size must be positive".into()));
    }
    plan.validate(tree)?;
    let start = Instant::now();
    let mut ctx = Context::new(catalog, tree, plan.order.clone(), opts)?;
    if strategy.uses_semijoins() {
        let red = semijoin::reduce_in_context(&mut ctx, plan);
        ctx.driver_rows = red.rows[tree.root].clone();
        ctx.tables = red.tables.into_iter().collect();
    } else {
        ctx.build_tables();
    }
    let bitvectors = strategy.uses_bitvectors();
    if bitvectors {
        ctx.build_filters();
    }
    if strategy.is_factorized() {
        factorized::run(&mut ctx, bitvectors)?;
    } else {
        pipeline::run(&mut ctx, bitvectors);
    }
    let timed_out = ctx.timed_out;
    Ok(ResultSummary {
        strategy,
        output: opts.output,
        cardinality: ctx.cardinality,
        rows: ctx.rows,
        factorized_entries: ctx.factorized_entries,
        stats: ctx.stats,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        timed_out,
    })
}
