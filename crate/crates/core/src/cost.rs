//! Analytical probe-count cost model.
//!
//! Every quantity is an expectation over driver tuples under the usual
//! independence assumptions. A plan's cost is assembled from per-step costs
//! that depend only on the *set* of relations already placed and on the
//! relation being placed, which is what lets the optimizer run a subset
//! dynamic program for every strategy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::query::{JoinTree, NodeSet, RootedTree, SjPlan, Strategy};
use crate::scalar::Scalar;
use crate::stats::{adjusted_stats, EdgeStats, StatsFile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights<S> {
    pub w_hash: S,
    pub w_bitvector: S,
    pub w_semijoin: S,
    pub w_emit: S,
    /// False-positive probability assumed for bitvector filters.
    pub epsilon: S,
}

impl<S: Scalar> Default for Weights<S> {
    fn default() -> Self {
        Weights {
            w_hash: S::one(),
            w_bitvector: S::lit(0.5),
            w_semijoin: S::lit(0.5),
            w_emit: S::one() / S::lit(14.0),
            epsilon: S::lit(0.01),
        }
    }
}

impl<S: Scalar> Weights<S> {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [self.w_hash, self.w_bitvector, self.w_semijoin, self.w_emit]
            .iter()
            .all(|w| *w >= S::zero());
        if !nonneg || self.epsilon < S::zero() || self.epsilon >= S::one() {
            return Err(Error::InvalidArgument(
                "weights must be non-negative and epsilon in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Rooted join tree annotated with the statistics of every parent-to-child
/// edge. Vectors are indexed by relation; the root carries `m = fo = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsTree<S> {
    pub tree: RootedTree,
    pub edges: Vec<EdgeStats<S>>,
    /// Driver cardinality after selections.
    pub n: S,
    pub cardinalities: Vec<S>,
    /// Per-probe cost of each relation's join operator.
    pub probe_cost: Vec<S>,
}

impl<S: Scalar> StatsTree<S> {
    pub fn new(tree: RootedTree, mut edges: Vec<EdgeStats<S>>, cardinalities: Vec<S>) -> Self {
        let n = cardinalities[tree.root];
        edges[tree.root] = EdgeStats::unit();
        let probe_cost = vec![S::one(); tree.len()];
        StatsTree {
            tree,
            edges,
            n,
            cardinalities,
            probe_cost,
        }
    }

    /// Reads the edge statistics for `tree`'s orientation from a stats file.
    /// The driver's predicate selectivity, if any, scales `n`.
    pub fn from_file(tree: RootedTree, file: &StatsFile) -> Result<Self> {
        let mut edges = vec![EdgeStats::unit(); tree.len()];
        for v in tree.non_root() {
            let p = tree.parent[v].expect("non-root has a parent");
            edges[v] = file.edge(tree.name(p), tree.name(v))?;
        }
        let cards = tree
            .names
            .iter()
            .map(|r| file.cardinality(r).map(S::from_count))
            .collect::<Result<Vec<_>>>()?;
        let mut st = StatsTree::new(tree, edges, cards);
        if let Some(sp) = file.predicate_selectivity.get(st.tree.name(st.tree.root)) {
            st.n = st.n * S::lit(*sp);
        }
        Ok(st)
    }

    pub fn rooted_from_file(tree: &JoinTree, driver: usize, file: &StatsFile) -> Result<Self> {
        Self::from_file(tree.root_at_index(driver), file)
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    pub fn root(&self) -> usize {
        self.tree.root
    }

    /// Expected result cardinality, identical for every plan and strategy.
    pub fn emitted(&self) -> S {
        self.tree
            .non_root()
            .fold(self.n, |acc, v| acc * self.edges[v].s())
    }

    /// Survival probability of the fragment of the subtree under `top` made of
    /// the relations in `members`.
    pub fn survival(&self, members: &NodeSet, top: usize) -> S {
        Evaluator::new(self, false, S::zero()).sigma(top, members, &NodeSet::empty())
    }

    /// Expected probes into `next` under the factorized representation once
    /// the relations in `placed` (root implied) have been joined.
    pub fn probes_com(&self, placed: &NodeSet, next: usize) -> Result<S> {
        let placed = placed.with(self.root());
        if !self.tree.eligible_next(&placed)?.contains(&next) {
            return Err(Error::InvalidPrefix(format!(
                "{} is not eligible after the given prefix",
                self.tree.name(next)
            )));
        }
        Ok(Evaluator::new(self, true, S::zero()).step(&placed, next).hash)
    }

    /// Tree for the join phase of full reduction: driver cardinality and
    /// fanouts after the bottom-up semi-join pass, all match probabilities 1.
    pub fn reduced(&self) -> StatsTree<S> {
        let ratio = self.reduction_ratios();
        let mut edges = self.edges.clone();
        for v in self.tree.non_root() {
            edges[v] = EdgeStats::new(S::one(), adjusted_stats(self.edges[v], ratio[v]).fo);
        }
        edges[self.root()] = EdgeStats::unit();
        StatsTree {
            tree: self.tree.clone(),
            edges,
            n: self.n * ratio[self.root()],
            cardinalities: self.cardinalities.clone(),
            probe_cost: self.probe_cost.clone(),
        }
    }

    /// Fraction of each relation's tuples surviving reduction by its subtree.
    pub fn reduction_ratios(&self) -> Vec<S> {
        let mut ratio = vec![S::one(); self.len()];
        for v in self.tree.post_order() {
            ratio[v] = self.tree.children[v]
                .iter()
                .fold(S::one(), |acc, &c| acc * self.adjusted_match(c, ratio[c]));
        }
        ratio
    }

    /// `m'` for probing child `c` after it was reduced to `ratio`.
    fn adjusted_match(&self, c: usize, ratio: S) -> S {
        adjusted_stats(self.edges[c], ratio).m
    }

    /// Adjusted statistics of every parent-to-child edge after reduction.
    pub fn adjusted_edges(&self) -> Vec<EdgeStats<S>> {
        let ratio = self.reduction_ratios();
        (0..self.len())
            .map(|v| {
                if v == self.root() {
                    EdgeStats::unit()
                } else {
                    adjusted_stats(self.edges[v], ratio[v])
                }
            })
            .collect()
    }
}

/// Expected probe counts per relation (hash probes into its table, probes
/// into its bitvector filter, semi-join probes into it) and totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown<S> {
    pub strategy: Strategy,
    pub hash_probes: Vec<S>,
    pub bitvector_probes: Vec<S>,
    pub semijoin_probes: Vec<S>,
    pub emitted: S,
    pub expansion_steps: S,
}

impl<S: Scalar> CostBreakdown<S> {
    fn zeros(strategy: Strategy, n: usize) -> Self {
        CostBreakdown {
            strategy,
            hash_probes: vec![S::zero(); n],
            bitvector_probes: vec![S::zero(); n],
            semijoin_probes: vec![S::zero(); n],
            emitted: S::zero(),
            expansion_steps: S::zero(),
        }
    }

    pub fn total_hash(&self) -> S {
        self.hash_probes.iter().copied().sum()
    }

    pub fn total_bitvector(&self) -> S {
        self.bitvector_probes.iter().copied().sum()
    }

    pub fn total_semijoin(&self) -> S {
        self.semijoin_probes.iter().copied().sum()
    }

    /// Weighted scalar cost with unit per-probe costs.
    pub fn weighted(&self, w: &Weights<S>) -> S {
        total_weighted_cost(
            self.total_hash(),
            self.total_bitvector(),
            self.total_semijoin(),
            self.emitted,
            w,
        )
    }
}

pub fn total_weighted_cost<S: Scalar>(hash: S, bitvector: S, semijoin: S, emitted: S, w: &Weights<S>) -> S {
    w.w_hash * hash + w.w_bitvector * bitvector + w.w_semijoin * semijoin + w.w_emit * emitted
}

/// Cost of placing one relation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCost<S> {
    pub hash: S,
    /// Probes into the filters of the placed relation's children, applied
    /// right after its join.
    pub bitvector: S,
}

/// Set-based cost evaluator for one execution mode.
#[derive(Debug, Clone, Copy)]
pub struct Evaluator<'a, S> {
    st: &'a StatsTree<S>,
    factorized: bool,
    bitvectors: bool,
    epsilon: S,
}

impl<'a, S: Scalar> Evaluator<'a, S> {
    /// `epsilon` is ignored unless bitvector filters are enabled through
    /// [`Evaluator::with_bitvectors`].
    pub fn new(st: &'a StatsTree<S>, factorized: bool, epsilon: S) -> Self {
        Evaluator {
            st,
            factorized,
            bitvectors: false,
            epsilon,
        }
    }

    pub fn with_bitvectors(mut self, on: bool) -> Self {
        self.bitvectors = on;
        self
    }

    /// Evaluator for the join phase of a non-semi-join strategy.
    pub fn for_strategy(st: &'a StatsTree<S>, strategy: Strategy, w: &Weights<S>) -> Self {
        Evaluator::new(st, strategy.is_factorized(), w.epsilon).with_bitvectors(strategy.uses_bitvectors())
    }

    pub fn stats(&self) -> &StatsTree<S> {
        self.st
    }

    fn pass(&self, v: usize) -> S {
        (self.st.edges[v].m + self.epsilon).min(S::one())
    }

    /// Survival of the branch under `v` given the placed and filtered sets.
    fn sigma(&self, v: usize, placed: &NodeSet, filtered: &NodeSet) -> S {
        if placed.contains(v) {
            let e = self.st.edges[v];
            let below = self.st.tree.children[v]
                .iter()
                .fold(S::one(), |acc, &c| acc * self.sigma(c, placed, filtered));
            if e.fo == S::one() {
                e.m * below
            } else {
                e.m * (S::one() - (S::one() - below).powf(e.fo))
            }
        } else if filtered.contains(v) {
            self.pass(v)
        } else {
            S::one()
        }
    }

    /// Live tuples (STD) or live entries of `group` (COM) given the state.
    fn population(&self, group: usize, placed: &NodeSet, filtered: &NodeSet) -> S {
        let st = self.st;
        if !self.factorized {
            let mut pop = st.n;
            for v in placed.iter() {
                if v != st.root() {
                    pop = pop * st.edges[v].s();
                }
            }
            for v in filtered.iter() {
                if !placed.contains(v) {
                    pop = pop * self.pass(v);
                }
            }
            return pop;
        }
        let path = st.tree.path_from_root(group);
        let mut pop = st.n;
        for (i, &u) in path.iter().enumerate() {
            if u != st.root() {
                pop = pop * st.edges[u].s();
            }
            let next = path.get(i + 1).copied();
            for &c in &st.tree.children[u] {
                if Some(c) != next {
                    pop = pop * self.sigma(c, placed, filtered);
                }
            }
        }
        pop
    }

    /// Relations whose filters have been applied once `placed` is joined.
    fn filtered_by(&self, placed: &NodeSet) -> NodeSet {
        let mut f = NodeSet::empty();
        if self.bitvectors {
            for v in placed.iter() {
                for &c in &self.st.tree.children[v] {
                    f.insert(c);
                }
            }
        }
        f
    }

    fn filter_probes(&self, owner: usize, placed: &NodeSet, filtered: &mut NodeSet, out: &mut Vec<(usize, S)>) {
        for &c in &self.st.tree.children[owner] {
            let probes = self.population(owner, placed, filtered);
            out.push((c, probes));
            filtered.insert(c);
        }
    }

    /// Bitvector probes charged before the first join, per filter.
    pub fn base_detail(&self) -> Vec<(usize, S)> {
        let mut out = Vec::new();
        if self.bitvectors {
            let placed = NodeSet::singleton(self.st.root());
            let mut filtered = NodeSet::empty();
            self.filter_probes(self.st.root(), &placed, &mut filtered, &mut out);
        }
        out
    }

    /// Hash probes into `x` and the filter probes that follow its join.
    /// `placed` must contain the root.
    pub fn step_detail(&self, placed: &NodeSet, x: usize) -> (S, Vec<(usize, S)>) {
        let filtered = self.filtered_by(placed);
        let parent = self.st.tree.parent[x].expect("placed relation has a parent");
        let hash = if self.factorized {
            self.population(parent, placed, &filtered)
        } else {
            self.population(x, placed, &filtered)
        };
        let mut out = Vec::new();
        if self.bitvectors {
            let after = placed.with(x);
            let mut f = filtered;
            self.filter_probes(x, &after, &mut f, &mut out);
        }
        (hash, out)
    }

    pub fn step(&self, placed: &NodeSet, x: usize) -> StepCost<S> {
        let (hash, filters) = self.step_detail(placed, x);
        StepCost {
            hash,
            bitvector: filters.iter().map(|(_, p)| *p).sum(),
        }
    }

    pub fn base_bitvector(&self) -> S {
        self.base_detail().iter().map(|(_, p)| *p).sum()
    }

    /// Weighted cost of the step, folding in the relation's probe cost.
    pub fn weighted_step(&self, placed: &NodeSet, x: usize, w: &Weights<S>) -> S {
        let s = self.step(placed, x);
        w.w_hash * self.st.probe_cost[x] * s.hash + w.w_bitvector * s.bitvector
    }

    pub fn weighted_base(&self, w: &Weights<S>) -> S {
        w.w_bitvector * self.base_bitvector()
    }

    /// Left fold of the weighted steps of `order`, excluding the emit term;
    /// the quantity minimized by the optimizer.
    pub fn objective(&self, order: &[usize], w: &Weights<S>) -> S {
        let mut placed = NodeSet::singleton(self.st.root());
        let mut cost = self.weighted_base(w);
        for &x in order {
            cost = cost + self.weighted_step(&placed, x, w);
            placed.insert(x);
        }
        cost
    }

    pub fn breakdown(&self, order: &[usize], strategy: Strategy) -> CostBreakdown<S> {
        let st = self.st;
        let mut b = CostBreakdown::zeros(strategy, st.len());
        for (c, p) in self.base_detail() {
            b.bitvector_probes[c] = b.bitvector_probes[c] + p;
        }
        let mut placed = NodeSet::singleton(st.root());
        for &x in order {
            let (hash, filters) = self.step_detail(&placed, x);
            b.hash_probes[x] = hash;
            for (c, p) in filters {
                b.bitvector_probes[c] = b.bitvector_probes[c] + p;
            }
            placed.insert(x);
        }
        b.emitted = st.emitted();
        if self.factorized {
            b.expansion_steps = b.emitted;
        }
        b
    }
}

pub fn cost_std<S: Scalar>(st: &StatsTree<S>, order: &[usize]) -> Result<CostBreakdown<S>> {
    st.tree.check_order(order)?;
    Ok(Evaluator::new(st, false, S::zero()).breakdown(order, Strategy::Std))
}

pub fn cost_com<S: Scalar>(st: &StatsTree<S>, order: &[usize]) -> Result<CostBreakdown<S>> {
    st.tree.check_order(order)?;
    Ok(Evaluator::new(st, true, S::zero()).breakdown(order, Strategy::Com))
}

pub fn cost_bvp<S: Scalar>(st: &StatsTree<S>, order: &[usize], epsilon: S, com: bool) -> Result<CostBreakdown<S>> {
    st.tree.check_order(order)?;
    let strategy = if com { Strategy::BvpCom } else { Strategy::BvpStd };
    Ok(Evaluator::new(st, com, epsilon)
        .with_bitvectors(true)
        .breakdown(order, strategy))
}

/// Expected semi-join probes of the reduction pass, charged to the probed
/// child. Children of a parent are probed in `plan.child_orders` and a tuple
/// stops at its first failed probe.
pub fn semijoin_probes<S: Scalar>(st: &StatsTree<S>, plan: &SjPlan) -> Vec<S> {
    let ratio = st.reduction_ratios();
    let mut probes = vec![S::zero(); st.len()];
    for p in st.tree.post_order() {
        let mut alive = if p == st.root() { st.n } else { st.cardinalities[p] };
        for &c in &plan.child_orders[p] {
            probes[c] = alive;
            alive = alive * st.adjusted_match(c, ratio[c]);
        }
    }
    probes
}

pub fn cost_sj<S: Scalar>(st: &StatsTree<S>, plan: &SjPlan, com: bool) -> Result<CostBreakdown<S>> {
    plan.validate(&st.tree)?;
    let reduced = st.reduced();
    let strategy = if com { Strategy::SjCom } else { Strategy::SjStd };
    let mut b = Evaluator::new(&reduced, com, S::zero()).breakdown(&plan.order, strategy);
    b.semijoin_probes = semijoin_probes(st, plan);
    b.emitted = st.emitted();
    if com {
        b.expansion_steps = b.emitted;
    }
    Ok(b)
}

/// Breakdown of `plan` under any strategy; child probe orders are only used
/// by the semi-join strategies.
pub fn cost_plan<S: Scalar>(st: &StatsTree<S>, plan: &SjPlan, strategy: Strategy, w: &Weights<S>) -> Result<CostBreakdown<S>> {
    match strategy {
        Strategy::Std => cost_std(st, &plan.order),
        Strategy::Com => cost_com(st, &plan.order),
        Strategy::BvpStd => cost_bvp(st, &plan.order, w.epsilon, false),
        Strategy::BvpCom => cost_bvp(st, &plan.order, w.epsilon, true),
        Strategy::SjStd => cost_sj(st, plan, false),
        Strategy::SjCom => cost_sj(st, plan, true),
    }
}

/// Weighted cost including per-relation probe costs.
pub fn weighted_plan_cost<S: Scalar>(st: &StatsTree<S>, b: &CostBreakdown<S>, w: &Weights<S>) -> S {
    let hash = b
        .hash_probes
        .iter()
        .zip(&st.probe_cost)
        .fold(S::zero(), |acc, (h, c)| acc + *h * *c);
    total_weighted_cost(hash, b.total_bitvector(), b.total_semijoin(), b.emitted, w)
}

/// Whether `lo`/`hi` are extreme selectivities or match probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    Selectivity,
    Match,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessBounds<S> {
    pub mode: BoundMode,
    pub theta: S,
    /// `None` when `lo == hi`.
    #[serde(rename = "theta_upper")]
    pub big_theta: Option<S>,
}

/// Fragility and robustness bounds for `n` relations whose parameter ranges
/// over `[lo, hi]`.
pub fn robustness_bounds<S: Scalar>(n: usize, lo: S, hi: S, mode: BoundMode) -> Result<RobustnessBounds<S>> {
    if n < 2 || lo <= S::zero() || hi < lo {
        return Err(Error::InvalidArgument(
            "robustness bounds need n >= 2 and 0 < lo <= hi".into(),
        ));
    }
    let k = (n - 1) as i32;
    let theta = if lo == S::one() {
        S::from_count(k as u64)
    } else {
        (S::one() - lo.powi(k)) / (S::one() - lo)
    };
    let big_theta = if lo == hi {
        None
    } else {
        let sum = (1..=(n as i32 - 2)).fold(S::zero(), |acc, i| acc + hi.powi(i) - lo.powi(i));
        Some(sum / (hi - lo))
    };
    Ok(RobustnessBounds {
        mode,
        theta,
        big_theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::tests::fig1_spec;
    use crate::query::{EdgeSpec, QuerySpec};
    use proptest::prelude::*;

    /// Running-example tree rooted at R1 with per-relation (m, fo), indexed
    /// R1..R6 -> 0..5.
    fn fig1(ms: [f64; 6], fos: [f64; 6], n: f64) -> StatsTree<f64> {
        let tree = JoinTree::from_spec(&fig1_spec()).unwrap().root_at("R1").unwrap();
        let edges = (0..6).map(|i| EdgeStats::new(ms[i], fos[i])).collect();
        let mut cards = vec![1000.0; 6];
        cards[0] = n;
        StatsTree::new(tree, edges, cards)
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
    }

    const R2: usize = 1;
    const R3: usize = 2;
    const R4: usize = 3;
    const R5: usize = 4;
    const R6: usize = 5;

    fn params() -> impl Strategy_<Value = ([f64; 6], [f64; 6])> {
        (
            proptest::array::uniform6(0.05f64..1.0),
            proptest::array::uniform6(1.0f64..6.0),
        )
    }
    use proptest::strategy::Strategy as Strategy_;

    #[test]
    fn survival_examples() {
        let st = fig1([1.0, 0.5, 0.5, 1.0, 1.0, 1.0], [1.0, 2.0, 1.0, 1.0, 1.0, 1.0], 1.0);
        let set: NodeSet = [R2, R3].into_iter().collect();
        assert!(close(st.survival(&set, R2), 0.375));
        let flat = fig1([1.0, 0.5, 0.4, 0.3, 0.9, 0.8], [1.0; 6], 1.0);
        let all: NodeSet = (0..6).collect();
        assert!(close(flat.survival(&all, 0), 0.5 * 0.4 * 0.3 * 0.9 * 0.8));
    }

    proptest! {
        #[test]
        fn survival_identity((ms, fos) in params()) {
            let st = fig1(ms, fos, 1.0);
            let set: NodeSet = [0, R2, R3, R4].into_iter().collect();
            let expected = ms[R2] * (1.0 - (1.0 - ms[R3] * ms[R4]).powf(fos[R2]));
            prop_assert!(close(st.survival(&set, 0), expected));
        }

        #[test]
        fn com_running_example((ms, fos) in params(), n in 1.0f64..1e5) {
            let st = fig1(ms, fos, n);
            let order = [R2, R3, R5, R4, R6];
            let b = cost_com(&st, &order).unwrap();
            let (m, f) = (ms, fos);
            let m23 = m[R2] * (1.0 - (1.0 - m[R3]).powf(f[R2]));
            let m1234 = m[R2] * (1.0 - (1.0 - m[R3] * m[R4]).powf(f[R2]));
            prop_assert!(close(b.hash_probes[R5], n * m23));
            let total = n * (1.0 + m[R2] * f[R2] + m23 + m[R2] * m[R5] * f[R2] * m[R3] + m1234 * m[R5] * f[R5]);
            prop_assert!(close(b.total_hash(), total));
            let s: Vec<f64> = (0..6).map(|i| m[i] * f[i]).collect();
            let std = cost_std(&st, &order).unwrap();
            let flat = n * (1.0 + s[R2] + s[R2] * s[R3] + s[R2] * s[R3] * s[R5] + s[R2] * s[R3] * s[R5] * s[R4]);
            prop_assert!(close(std.total_hash(), flat));
            prop_assert!(b.total_hash() <= std.total_hash() * (1.0 + 1e-12));
        }

        #[test]
        fn bvp_running_example((ms, fos) in params(), eps in 0.0f64..0.2, n in 1.0f64..1e5) {
            let mut ms = ms;
            // Keep m + eps below one so the displayed factors apply unclamped.
            for m in ms.iter_mut() { *m = m.min(0.79); }
            let st = fig1(ms, fos, n);
            let order = [R2, R3, R5, R4, R6];
            let (m, f, e) = (ms, fos, eps);
            let b = cost_bvp(&st, &order, eps, false).unwrap();
            let bv = n * (1.0 + (m[R2] + e) + m[R2] * (m[R5] + e) * f[R2] + m[R2] * (m[R5] + e) * f[R2] * (m[R3] + e)
                + m[R2] * m[R5] * f[R2] * m[R3] * f[R3] * (m[R4] + e) * f[R5]);
            prop_assert!(close(b.total_bitvector(), bv));
            let hash = n * ((m[R2] + e) * (m[R5] + e)
                + m[R2] * (m[R5] + e) * f[R2] * (m[R3] + e) * (m[R4] + e)
                + m[R2] * (m[R5] + e) * f[R2] * m[R3] * (m[R4] + e) * f[R3]
                + m[R2] * m[R5] * f[R2] * m[R3] * (m[R4] + e) * f[R3] * f[R5] * (m[R6] + e)
                + m[R2] * f[R2] * m[R3] * f[R3] * m[R4] * f[R4] * m[R5] * f[R5] * (m[R6] + e));
            prop_assert!(close(b.total_hash(), hash));
            let c = cost_bvp(&st, &order, eps, true).unwrap();
            let into_r5 = n * m[R2] * (m[R5] + e) * (1.0 - (1.0 - m[R3] * (m[R4] + e)).powf(f[R2]));
            prop_assert!(close(c.hash_probes[R5], into_r5));
        }

        #[test]
        fn sj_phase_one((ms, fos) in params(), cards in proptest::array::uniform6(1.0f64..1e4)) {
            let mut st = fig1(ms, fos, cards[0]);
            st.cardinalities = cards.to_vec();
            let mut plan = SjPlan::with_default_children(&st.tree, vec![R2, R3, R4, R5, R6]);
            plan.child_orders[0] = vec![R2, R5];
            plan.child_orders[R2] = vec![R3, R4];
            let probes = semijoin_probes(&st, &plan);
            let (m, f) = (ms, fos);
            let expected = cards[R2] + m[R3] * cards[R2] + cards[R5] + cards[0]
                + (1.0 - (1.0 - m[R3] * m[R4]).powf(f[R2])) * m[R2] * cards[0];
            prop_assert!(close(probes.iter().sum(), expected));
        }

        #[test]
        fn com_probes_depend_on_set_only((ms, fos) in params(), seed in 0u64..1000) {
            use rand::{SeedableRng, seq::SliceRandom};
            let st = fig1(ms, fos, 100.0);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let order = st.tree.random_order(&mut rng);
            let k = order.len() - 1;
            let prefix: NodeSet = order[..k].iter().copied().collect();
            let x = order[k];
            let reference = st.probes_com(&prefix, x).unwrap();
            let eval = Evaluator::new(&st, true, 0.0);
            for _ in 0..20 {
                let mut other = st.tree.random_order(&mut rng);
                other.retain(|v| prefix.contains(*v));
                other.shuffle(&mut rng);
                let set: NodeSet = other.iter().copied().chain([0]).collect();
                prop_assert_eq!(eval.step(&set, x).hash, reference);
            }
        }

        #[test]
        fn com_equals_std_at_unit_fanout(ms in proptest::array::uniform6(0.0f64..=1.0), seed in 0u64..1000) {
            use rand::SeedableRng;
            let st = fig1(ms, [1.0; 6], 500.0);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let order = st.tree.random_order(&mut rng);
            let a = cost_com(&st, &order).unwrap();
            let b = cost_std(&st, &order).unwrap();
            for v in 0..6 {
                prop_assert!(close(a.hash_probes[v], b.hash_probes[v]));
            }
        }

        #[test]
        fn monotone_in_match_probability((ms, fos) in params(), which in 1usize..6, bump in 0.0f64..0.5) {
            let st = fig1(ms, fos, 100.0);
            let mut hi = st.clone();
            hi.edges[which].m = (ms[which] + bump).min(1.0);
            let order = [R2, R3, R5, R4, R6];
            for com in [false, true] {
                let (a, b) = if com {
                    (cost_com(&st, &order).unwrap(), cost_com(&hi, &order).unwrap())
                } else {
                    (cost_std(&st, &order).unwrap(), cost_std(&hi, &order).unwrap())
                };
                for v in 0..6 {
                    prop_assert!(b.hash_probes[v] >= a.hash_probes[v] * (1.0 - 1e-12));
                }
            }
        }
    }

    #[test]
    fn single_join_std() {
        let spec = QuerySpec {
            relations: vec!["R".into(), "S".into()],
            edges: vec![EdgeSpec::new("R", "k", "S", "k")],
            driver: None,
        };
        let tree = JoinTree::from_spec(&spec).unwrap().root_at("R").unwrap();
        let st = StatsTree::new(tree, vec![EdgeStats::unit(), EdgeStats::new(0.5, 10.0)], vec![100.0, 50.0]);
        let b = cost_std(&st, &[1]).unwrap();
        assert_eq!(b.hash_probes, vec![0.0, 100.0]);
        assert_eq!(b.emitted, 500.0);
    }

    #[test]
    fn unit_fanout_stats_every_operator_gets_n() {
        let st = fig1([1.0; 6], [1.0; 6], 77.0);
        let b = cost_std(&st, &[R2, R3, R5, R4, R6]).unwrap();
        for v in 1..6 {
            assert_eq!(b.hash_probes[v], 77.0);
        }
    }

    #[test]
    fn bvp_degenerates_without_filtering() {
        let st = fig1([1.0; 6], [1.0, 2.0, 3.0, 1.0, 2.0, 1.0], 100.0);
        let order = [R2, R3, R5, R4, R6];
        for com in [false, true] {
            let plain = if com { cost_com(&st, &order) } else { cost_std(&st, &order) }.unwrap();
            let bvp = cost_bvp(&st, &order, 0.0, com).unwrap();
            assert_eq!(plain.hash_probes, bvp.hash_probes);
        }
    }

    #[test]
    fn sj_on_key_tree_reduces_nothing() {
        let st = fig1([1.0; 6], [1.0; 6], 100.0);
        let plan = SjPlan::with_default_children(&st.tree, vec![R2, R3, R4, R5, R6]);
        let sj = cost_sj(&st, &plan, true).unwrap();
        let com = cost_com(&st, &plan.order).unwrap();
        assert_eq!(sj.hash_probes, com.hash_probes);
        assert_eq!(st.reduction_ratios(), vec![1.0; 6]);
    }

    #[test]
    fn sj_com_phase_two_is_order_independent() {
        let st = fig1([1.0, 0.3, 0.6, 0.7, 0.2, 0.9], [1.0, 3.0, 2.0, 4.0, 5.0, 2.0], 1000.0);
        let totals: Vec<f64> = st
            .tree
            .all_orders()
            .into_iter()
            .map(|o| {
                let plan = SjPlan::with_default_children(&st.tree, o);
                cost_sj(&st, &plan, true).unwrap().total_hash()
            })
            .collect();
        assert!(totals.iter().all(|t| *t == totals[0]));
    }

    #[test]
    fn invalid_prefix_is_rejected() {
        let st = fig1([0.5; 6], [2.0; 6], 10.0);
        assert!(matches!(st.probes_com(&NodeSet::empty(), R3), Err(Error::InvalidPrefix(_))));
        assert!(matches!(st.probes_com(&NodeSet::singleton(R3), R4), Err(Error::InvalidPrefix(_))));
        assert!(cost_std(&st, &[R3, R2, R4, R5, R6]).is_err());
    }

    #[test]
    fn weighted_examples() {
        let w = Weights::<f64>::default();
        assert_eq!(total_weighted_cost(1000.0, 0.0, 0.0, 0.0, &w), 1000.0);
        assert_eq!(total_weighted_cost(0.0, 2000.0, 0.0, 0.0, &w), 1000.0);
        assert!(close(total_weighted_cost(0.0, 0.0, 0.0, 1400.0, &w), 100.0));
        assert!(w.validate().is_ok());
        assert!(Weights { epsilon: 1.0, ..w }.validate().is_err());
    }

    #[test]
    fn robustness_examples() {
        let b = robustness_bounds(2, 0.3, 0.9, BoundMode::Match).unwrap();
        assert!(close(b.theta, 1.0));
        let b = robustness_bounds(10, 0.5, 0.9, BoundMode::Match).unwrap();
        let series: f64 = (0..9).map(|i| 0.5f64.powi(i)).sum();
        assert_eq!(b.theta, 1.99609375);
        assert!(close(b.theta, series));
        assert!(robustness_bounds(5, 0.5, 0.5, BoundMode::Selectivity).unwrap().big_theta.is_none());
        // Difference quotient of sum_i x^i approaches its derivative.
        let m: f64 = 0.6;
        let h = 1e-7;
        let b = robustness_bounds(8, m, m + h, BoundMode::Match).unwrap();
        let deriv: f64 = (1..=6).map(|i| i as f64 * m.powi(i - 1)).sum();
        assert!((b.big_theta.unwrap() - deriv).abs() < 1e-5);
    }

    #[test]
    fn f32_instantiation() {
        let tree = JoinTree::from_spec(&fig1_spec()).unwrap().root_at("R1").unwrap();
        let st = StatsTree::<f32>::new(tree, vec![EdgeStats::new(0.5, 2.0); 6], vec![100.0; 6]);
        let b = cost_com(&st, &[R2, R3, R4, R5, R6]).unwrap();
        assert!(b.total_hash() > 0.0);
    }
}
