//! Join-order search for a fixed driver, and across drivers.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cost::{cost_plan, weighted_plan_cost, CostBreakdown, Evaluator, StatsTree, Weights};
use crate::error::{Error, Result};
use crate::query::{JoinTree, NodeSet, SjPlan, Strategy};
use crate::scalar::Scalar;
use crate::stats::StatsFile;

pub const DEFAULT_MAX_RELATIONS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Exhaustive,
    GreedyRank,
    GreedyTuples,
    GreedySurvival,
}

impl Algorithm {
    pub const GREEDY: [Algorithm; 3] = [Algorithm::GreedyRank, Algorithm::GreedyTuples, Algorithm::GreedySurvival];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Exhaustive => "exhaustive",
            Algorithm::GreedyRank => "greedy_rank",
            Algorithm::GreedyTuples => "greedy_tuples",
            Algorithm::GreedySurvival => "greedy_survival",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().trim_start_matches("greedy_").trim_start_matches("greedy-") {
            "exhaustive" | "dp" | "optimal" => Algorithm::Exhaustive,
            "rank" | "selectivity" => Algorithm::GreedyRank,
            "tuples" => Algorithm::GreedyTuples,
            "survival" => Algorithm::GreedySurvival,
            _ => return Err(Error::InvalidArgument(format!("unknown algorithm `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig<S> {
    pub algorithm: Algorithm,
    pub strategy: Strategy,
    pub weights: Weights<S>,
    pub enumerate_drivers: bool,
    pub max_relations: usize,
}

impl<S: Scalar> Default for OptimizerConfig<S> {
    fn default() -> Self {
        OptimizerConfig {
            algorithm: Algorithm::Exhaustive,
            strategy: Strategy::Com,
            weights: Weights::default(),
            enumerate_drivers: false,
            max_relations: DEFAULT_MAX_RELATIONS,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub subsets_expanded: u64,
    pub candidates_evaluated: u64,
    pub driver_searches: u64,
}

impl SearchStats {
    fn add(&mut self, o: &SearchStats) {
        self.subsets_expanded += o.subsets_expanded;
        self.candidates_evaluated += o.candidates_evaluated;
        self.driver_searches += o.driver_searches;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult<S> {
    pub plan: SjPlan,
    pub strategy: Strategy,
    pub breakdown: CostBreakdown<S>,
    /// Weighted cost including the emit term.
    pub cost: S,
    pub search: SearchStats,
    /// Best cost found for each driver tried, by relation index.
    pub per_driver: Vec<(usize, S)>,
}

fn by_cost_then_name<S: Scalar>(a: (S, &str), b: (S, &str)) -> Ordering {
    a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then_with(|| a.1.cmp(b.1))
}

/// Subset dynamic program over connected relation sets containing the
/// driver. Returns the order minimizing [`Evaluator::objective`].
pub fn dp_order<S: Scalar>(
    eval: &Evaluator<S>,
    w: &Weights<S>,
    max_relations: usize,
) -> Result<(Vec<usize>, S, SearchStats)> {
    let st = eval.stats();
    let n = st.len();
    if n > max_relations {
        return Err(Error::TooManyRelations { n, max: max_relations });
    }
    let root = st.root();
    let start = NodeSet::singleton(root);
    let mut best: HashMap<NodeSet, (S, usize)> = HashMap::new();
    best.insert(start, (eval.weighted_base(w), usize::MAX));
    let mut level: BTreeMap<NodeSet, S> = BTreeMap::from([(start, eval.weighted_base(w))]);
    let mut stats = SearchStats {
        driver_searches: 1,
        ..SearchStats::default()
    };
    for _ in 1..n {
        let mut next: BTreeMap<NodeSet, (S, usize)> = BTreeMap::new();
        for (set, cost) in &level {
            stats.subsets_expanded += 1;
            for x in st.tree.eligible_unchecked(set) {
                stats.candidates_evaluated += 1;
                let c = *cost + eval.weighted_step(set, x, w);
                let key = set.with(x);
                match next.get(&key) {
                    Some((old, _)) if *old <= c => {}
                    _ => {
                        next.insert(key, (c, x));
                    }
                }
            }
        }
        level = next.iter().map(|(k, (c, _))| (*k, *c)).collect();
        best.extend(next);
    }
    let full: NodeSet = (0..n).collect();
    let (cost, _) = best[&full];
    let mut order = Vec::with_capacity(n - 1);
    let mut cur = full;
    while cur != start {
        let (_, last) = best[&cur];
        order.push(last);
        cur.remove(last);
    }
    order.reverse();
    Ok((order, cost, stats))
}

/// Greedy construction of an order; ties broken by relation name.
pub fn greedy_order<S: Scalar>(st: &StatsTree<S>, heuristic: Algorithm) -> Result<(Vec<usize>, SearchStats)> {
    let com = Evaluator::new(st, true, S::zero());
    let mut placed = NodeSet::singleton(st.root());
    let mut order = Vec::with_capacity(st.len().saturating_sub(1));
    let mut stats = SearchStats {
        driver_searches: 1,
        ..SearchStats::default()
    };
    loop {
        let cands = st.tree.eligible_unchecked(&placed);
        if cands.is_empty() {
            break;
        }
        stats.subsets_expanded += 1;
        stats.candidates_evaluated += cands.len() as u64;
        let score = |x: usize| -> S {
            let e = st.edges[x];
            match heuristic {
                Algorithm::GreedyRank => (e.s() - S::one()) / st.probe_cost[x],
                Algorithm::GreedyTuples => com.step(&placed, x).hash * e.s(),
                Algorithm::GreedySurvival => st.survival(&placed.with(x), st.root()),
                Algorithm::Exhaustive => unreachable!("not a greedy heuristic"),
            }
        };
        let pick = cands
            .iter()
            .map(|&x| (score(x), x))
            .min_by(|a, b| by_cost_then_name((a.0, st.tree.name(a.1)), (b.0, st.tree.name(b.1))))
            .map(|(_, x)| x)
            .expect("non-empty candidates");
        placed.insert(pick);
        order.push(pick);
    }
    Ok((order, stats))
}

/// One ordering unit of the rank-ordering algorithm: a sequence of
/// relations that must stay contiguous.
#[derive(Debug, Clone)]
struct Module<S> {
    nodes: Vec<usize>,
    t: S,
    c: S,
}

impl<S: Scalar> Module<S> {
    fn rank(&self) -> S {
        if self.c > S::zero() {
            (self.t - S::one()) / self.c
        } else if self.t < S::one() {
            S::neg_infinity()
        } else if self.t > S::one() {
            S::infinity()
        } else {
            S::zero()
        }
    }

    fn then(mut self, o: Module<S>) -> Module<S> {
        self.c = self.c + self.t * o.c;
        self.t = self.t * o.t;
        self.nodes.extend(o.nodes);
        self
    }
}

/// Order minimizing `sum_k c_k * prod_{j<k} s_j` under the tree's precedence
/// constraints, by rank ordering with chain normalization.
pub fn rank_order<S: Scalar>(st: &StatsTree<S>, unit_cost: &[S]) -> Vec<usize> {
    // k-way merge of rank-ascending chains, ties by first relation name.
    fn merge<S: Scalar>(st: &StatsTree<S>, chains: Vec<Vec<Module<S>>>) -> Vec<Module<S>> {
        let mut chains: Vec<std::collections::VecDeque<Module<S>>> =
            chains.into_iter().map(Into::into).collect();
        let mut out = Vec::new();
        loop {
            let pick = chains
                .iter()
                .enumerate()
                .filter_map(|(i, c)| c.front().map(|m| (i, m)))
                .min_by(|a, b| {
                    by_cost_then_name(
                        (a.1.rank(), st.tree.name(a.1.nodes[0])),
                        (b.1.rank(), st.tree.name(b.1.nodes[0])),
                    )
                })
                .map(|(i, _)| i);
            match pick {
                Some(i) => out.push(chains[i].pop_front().expect("non-empty chain")),
                None => return out,
            }
        }
    }
    fn chain<S: Scalar>(st: &StatsTree<S>, unit_cost: &[S], v: usize) -> Vec<Module<S>> {
        let kids = st.tree.children[v].iter().map(|&c| chain(st, unit_cost, c)).collect();
        let mut rest = merge(st, kids).into_iter().peekable();
        let mut head = Module {
            nodes: vec![v],
            t: st.edges[v].s(),
            c: unit_cost[v],
        };
        // A relation must precede its subtree; fold it forward while it
        // outranks what follows.
        while rest.peek().is_some_and(|m| head.rank() > m.rank()) {
            head = head.then(rest.next().expect("peeked"));
        }
        std::iter::once(head).chain(rest).collect()
    }
    let kids = st.tree.children[st.root()]
        .iter()
        .map(|&c| chain(st, unit_cost, c))
        .collect();
    merge(st, kids).into_iter().flat_map(|m| m.nodes).collect()
}

/// Full-reduction plan for the driver of `st`: children probed by
/// increasing adjusted match probability, then a join order for the
/// reduced tree.
pub fn sj_plan_for_driver<S: Scalar>(st: &StatsTree<S>, com: bool, w: &Weights<S>) -> SjPlan {
    let adj = st.adjusted_edges();
    let mut plan = SjPlan::with_default_children(&st.tree, Vec::new());
    for kids in plan.child_orders.iter_mut() {
        kids.sort_by(|&a, &b| by_cost_then_name((adj[a].m, st.tree.name(a)), (adj[b].m, st.tree.name(b))));
    }
    let reduced = st.reduced();
    plan.order = if com {
        // Any order costs the same; sort by root-to-node fanout product.
        let mut prod = vec![S::one(); st.len()];
        for &v in &st.tree.bfs {
            if let Some(p) = st.tree.parent[v] {
                prod[v] = prod[p] * reduced.edges[v].fo;
            }
        }
        let mut order: Vec<usize> = st.tree.non_root().collect();
        order.sort_by(|&a, &b| {
            prod[a]
                .partial_cmp(&prod[b])
                .unwrap_or(Ordering::Equal)
                .then(st.tree.depth[a].cmp(&st.tree.depth[b]))
                .then_with(|| st.tree.name(a).cmp(st.tree.name(b)))
        });
        order
    } else {
        let unit: Vec<S> = reduced.probe_cost.iter().map(|c| w.w_hash * *c).collect();
        rank_order(&reduced, &unit)
    };
    plan
}

fn finish<S: Scalar>(st: &StatsTree<S>, plan: SjPlan, strategy: Strategy, w: &Weights<S>, search: SearchStats) -> Result<OptResult<S>> {
    let breakdown = cost_plan(st, &plan, strategy, w)?;
    let cost = weighted_plan_cost(st, &breakdown, w);
    Ok(OptResult {
        plan,
        strategy,
        breakdown,
        cost,
        search,
        per_driver: vec![(st.root(), cost)],
    })
}

/// Optimizes the join order for the driver at the root of `st`.
pub fn optimize<S: Scalar>(st: &StatsTree<S>, config: &OptimizerConfig<S>) -> Result<OptResult<S>> {
    let w = &config.weights;
    w.validate()?;
    let strategy = config.strategy;
    if strategy.uses_semijoins() {
        let com = strategy.is_factorized();
        let mut plan = sj_plan_for_driver(st, com, w);
        let mut search = SearchStats {
            driver_searches: 1,
            ..SearchStats::default()
        };
        if config.algorithm == Algorithm::Exhaustive {
            let reduced = st.reduced();
            let (order, _, s) = dp_order(&Evaluator::new(&reduced, com, S::zero()), w, config.max_relations)?;
            plan.order = order;
            search = s;
        }
        return finish(st, plan, strategy, w, search);
    }
    let eval = Evaluator::for_strategy(st, strategy, w);
    let (order, search) = match config.algorithm {
        Algorithm::Exhaustive => {
            let (o, _, s) = dp_order(&eval, w, config.max_relations)?;
            (o, s)
        }
        h => greedy_order(st, h)?,
    };
    finish(st, SjPlan::with_default_children(&st.tree, order), strategy, w, search)
}

/// Full-reduction optimizer over every driver.
pub fn optimize_sj<S: Scalar>(tree: &JoinTree, file: &StatsFile, com: bool, w: &Weights<S>) -> Result<OptResult<S>> {
    let config = OptimizerConfig {
        algorithm: Algorithm::GreedySurvival,
        strategy: if com { Strategy::SjCom } else { Strategy::SjStd },
        weights: *w,
        enumerate_drivers: true,
        max_relations: DEFAULT_MAX_RELATIONS,
    };
    optimize_all_drivers(tree, file, &config)
}

/// Runs the configured per-driver search for every relation as driver and
/// keeps the cheapest (ties by driver name).
pub fn optimize_all_drivers<S: Scalar>(tree: &JoinTree, file: &StatsFile, config: &OptimizerConfig<S>) -> Result<OptResult<S>> {
    let mut best: Option<OptResult<S>> = None;
    let mut search = SearchStats::default();
    let mut per_driver = Vec::with_capacity(tree.len());
    for d in 0..tree.len() {
        let st = StatsTree::rooted_from_file(tree, d, file)?;
        let r = optimize(&st, config)?;
        search.add(&r.search);
        per_driver.push((d, r.cost));
        let better = match &best {
            None => true,
            Some(b) => by_cost_then_name((r.cost, &tree.names()[d]), (b.cost, &tree.names()[b.plan.root])) == Ordering::Less,
        };
        if better {
            best = Some(r);
        }
    }
    let mut best = best.ok_or_else(|| Error::InvalidArgument("empty query".into()))?;
    best.search = search;
    best.per_driver = per_driver;
    Ok(best)
}

/// Optimizes for the query's driver, or for every driver when configured.
pub fn optimize_query<S: Scalar>(tree: &JoinTree, driver: Option<&str>, file: &StatsFile, config: &OptimizerConfig<S>) -> Result<OptResult<S>> {
    match driver {
        Some(d) if !config.enumerate_drivers => {
            let st = StatsTree::from_file(tree.root_at(d)?, file)?;
            optimize(&st, config)
        }
        _ => optimize_all_drivers(tree, file, config),
    }
}

/// Minimum objective over every valid order, by enumeration. Small trees only.
pub fn brute_force_order<S: Scalar>(eval: &Evaluator<S>, w: &Weights<S>) -> (Vec<usize>, S) {
    eval.stats()
        .tree
        .all_orders()
        .into_iter()
        .map(|o| {
            let c = eval.objective(&o, w);
            (o, c)
        })
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal))
        .expect("at least one order")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::{EdgeSpec, QuerySpec, RootedTree};
    use crate::stats::EdgeStats;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> RootedTree {
        let names: Vec<String> = (0..n).map(|i| format!("T{i:02}")).collect();
        let edges = (1..n)
            .map(|i| {
                let p = rng.gen_range(0..i);
                EdgeSpec::new(&names[p], "k", &names[i], "k")
            })
            .collect();
        let spec = QuerySpec {
            relations: names,
            edges,
            driver: None,
        };
        JoinTree::from_spec(&spec).unwrap().root_at_index(0)
    }

    fn random_stats(rng: &mut ChaCha8Rng, tree: RootedTree) -> StatsTree<f64> {
        let n = tree.len();
        let edges = (0..n)
            .map(|_| EdgeStats::new(rng.gen_range(0.05..1.0), rng.gen_range(1.0..8.0)))
            .collect();
        let cards = (0..n).map(|_| rng.gen_range(10.0..1e4)).collect();
        StatsTree::new(tree, edges, cards)
    }

    fn star(n: usize) -> RootedTree {
        let names: Vec<String> = (0..n).map(|i| format!("S{i}")).collect();
        let spec = QuerySpec {
            relations: names.clone(),
            edges: (1..n).map(|i| EdgeSpec::new("S0", "k", &names[i], "k")).collect(),
            driver: None,
        };
        JoinTree::from_spec(&spec).unwrap().root_at("S0").unwrap()
    }

    #[test]
    fn dp_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = Weights::default();
        for trial in 0..60 {
            let n = rng.gen_range(2..=7);
            let tree = random_tree(&mut rng, n);
            let st = random_stats(&mut rng, tree);
            for strategy in [Strategy::Std, Strategy::Com, Strategy::BvpStd, Strategy::BvpCom] {
                let eval = Evaluator::for_strategy(&st, strategy, &w);
                let (order, cost, _) = dp_order(&eval, &w, 20).unwrap();
                let (_, brute) = brute_force_order(&eval, &w);
                assert_eq!(cost, brute, "trial {trial} {strategy}");
                assert_eq!(eval.objective(&order, &w), cost);
            }
        }
    }

    #[test]
    fn dp_prefixes_are_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = Weights::default();
        let tree = random_tree(&mut rng, 7);
            let st = random_stats(&mut rng, tree);
        let eval = Evaluator::new(&st, true, 0.0);
        let (order, _, _) = dp_order(&eval, &w, 20).unwrap();
        for k in 1..order.len() {
            let prefix: NodeSet = order[..k].iter().copied().collect();
            let best = st
                .tree
                .all_orders()
                .into_iter()
                .filter(|o| o[..k].iter().copied().collect::<NodeSet>() == prefix)
                .map(|o| eval.objective(&o[..k], &w))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(eval.objective(&order[..k], &w), best);
        }
    }

    #[test]
    fn path_has_forced_order() {
        let spec = QuerySpec {
            relations: vec!["A".into(), "B".into(), "C".into()],
            edges: vec![EdgeSpec::new("A", "k", "B", "k"), EdgeSpec::new("B", "k", "C", "k")],
            driver: None,
        };
        let t = JoinTree::from_spec(&spec).unwrap().root_at("A").unwrap();
        let st = StatsTree::new(t, vec![EdgeStats::new(0.5, 3.0); 3], vec![10.0; 3]);
        let r = optimize(&st, &OptimizerConfig::default()).unwrap();
        assert_eq!(r.plan.order, vec![1, 2]);
    }

    #[test]
    fn too_many_relations() {
        let st = StatsTree::new(star(6), vec![EdgeStats::new(0.5, 2.0); 6], vec![10.0; 6]);
        let config = OptimizerConfig {
            max_relations: 5,
            ..OptimizerConfig::default()
        };
        assert!(matches!(optimize(&st, &config), Err(Error::TooManyRelations { n: 6, max: 5 })));
    }

    #[test]
    fn greedy_ties_by_name() {
        let st = StatsTree::new(star(5), vec![EdgeStats::new(0.5, 2.0); 5], vec![10.0; 5]);
        for h in Algorithm::GREEDY {
            let (order, _) = greedy_order(&st, h).unwrap();
            assert_eq!(order, vec![1, 2, 3, 4]);
        }
    }

    #[test]
    fn stars_follow_rank_order() {
        // Under COM a star costs N * sum of prefix products of m, so the
        // survival heuristic is exact; rank ordering on s is exact for the
        // flat cost, and every heuristic is exact at unit fanout.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = Weights::default();
        let gap = |eval: &Evaluator<f64>, order: &[usize]| {
            let (_, opt) = brute_force_order(eval, &w);
            (eval.objective(order, &w) - opt).abs() / opt
        };
        for _ in 0..30 {
            let n = rng.gen_range(3..=6);
            let mut st = random_stats(&mut rng, star(n));
            let com = Evaluator::new(&st, true, 0.0);
            let flat = Evaluator::new(&st, false, 0.0);
            assert!(gap(&com, &greedy_order(&st, Algorithm::GreedySurvival).unwrap().0) < 1e-9);
            assert!(gap(&flat, &greedy_order(&st, Algorithm::GreedyRank).unwrap().0) < 1e-9);
            for e in st.edges.iter_mut() {
                e.fo = 1.0;
            }
            let com = Evaluator::new(&st, true, 0.0);
            for h in Algorithm::GREEDY {
                assert!(gap(&com, &greedy_order(&st, h).unwrap().0) < 1e-9, "{h}");
            }
        }
    }

    #[test]
    fn rank_order_is_optimal_for_flat_costs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let w = Weights::default();
        for _ in 0..200 {
            let n = rng.gen_range(2..=7);
            let tree = random_tree(&mut rng, n);
            let st = random_stats(&mut rng, tree);
            let eval = Evaluator::new(&st, false, 0.0);
            let order = rank_order(&st, &vec![1.0; n]);
            st.tree.check_order(&order).unwrap();
            let (_, opt) = brute_force_order(&eval, &w);
            let c = eval.objective(&order, &w);
            assert!((c - opt).abs() <= 1e-9 * opt, "{c} vs {opt}");
        }
    }

    #[test]
    fn sj_children_by_adjusted_match() {
        let mut st = StatsTree::new(star(3), vec![EdgeStats::unit(); 3], vec![10.0; 3]);
        st.edges[1] = EdgeStats::new(0.8, 1.0);
        st.edges[2] = EdgeStats::new(0.2, 1.0);
        let plan = sj_plan_for_driver(&st, true, &Weights::default());
        assert_eq!(plan.child_orders[0], vec![2, 1]);
    }

    #[test]
    fn all_drivers_counts_searches() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for n in 2..=6 {
            let tree = random_tree(&mut rng, n);
            let jt = JoinTree::from_spec(&QuerySpec {
                relations: tree.names.clone(),
                edges: tree
                    .non_root()
                    .map(|v| EdgeSpec::new(tree.name(tree.parent[v].unwrap()), "k", tree.name(v), "k"))
                    .collect(),
                driver: None,
            })
            .unwrap();
            let mut file = StatsFile::default();
            for e in jt.edges() {
                let (a, b) = (&jt.names()[e.a], &jt.names()[e.b]);
                file.set_edge(a, b, EdgeStats::new(0.5, 2.0));
                file.set_edge(b, a, EdgeStats::new(0.7, 3.0));
            }
            for r in jt.names() {
                file.cardinalities.insert(r.clone(), 100);
            }
            let r = optimize_all_drivers(&jt, &file, &OptimizerConfig::<f64>::default()).unwrap();
            assert_eq!(r.search.driver_searches, n as u64);
            assert_eq!(r.per_driver.len(), n);
            let min = r.per_driver.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            assert_eq!(r.cost, min);
        }
    }

    #[test]
    fn algorithm_names() {
        assert_eq!("survival".parse::<Algorithm>().unwrap(), Algorithm::GreedySurvival);
        assert_eq!("greedy_rank".parse::<Algorithm>().unwrap(), Algorithm::GreedyRank);
        assert_eq!("exhaustive".parse::<Algorithm>().unwrap(), Algorithm::Exhaustive);
        assert!("foo".parse::<Algorithm>().is_err());
    }
}
