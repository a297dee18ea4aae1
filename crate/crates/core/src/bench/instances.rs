//! Hand-built and randomized instances used by tests and experiments.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;

use super::gen::{gen_tree, relation_name, EdgeTarget, FanoutSpec, GeneratedInstance, MRange};
use crate::catalog::{Catalog, Relation};
use crate::cost::{Evaluator, StatsTree, Weights};
use crate::error::{Error, Result};
use crate::optimizer::{dp_order, greedy_order, Algorithm};
use crate::query::{EdgeSpec, JoinTree, QuerySpec, Strategy};
use crate::scalar::Scalar;
use crate::stats::{collect_stats, EdgeStats, Estimator};

/// Random rooted tree shape with `n` nodes, node 0 the root. The root gets
/// 2 to 5 children and every other node 0 to 3 while nodes remain.
pub fn random_parents<R: Rng>(rng: &mut R, n: usize) -> Vec<Option<usize>> {
    let mut parents = vec![None; n.max(1)];
    let mut next = 1;
    let mut queue = VecDeque::from([0usize]);
    while next < n {
        let v = match queue.pop_front() {
            Some(v) => v,
            None => rng.gen_range(0..next),
        };
        let want = if v == 0 { rng.gen_range(2..=5) } else { rng.gen_range(0..=3) };
        for _ in 0..want.min(n - next) {
            parents[next] = Some(v);
            queue.push_back(next);
            next += 1;
        }
    }
    parents
}

/// Query over `R1..Rn` for a parent vector, with the generator's column
/// naming.
pub fn query_for_parents(parents: &[Option<usize>]) -> QuerySpec {
    let root = parents.iter().position(Option::is_none).unwrap_or(0);
    QuerySpec {
        relations: (0..parents.len()).map(relation_name).collect(),
        edges: parents
            .iter()
            .enumerate()
            .filter_map(|(c, p)| {
                p.map(|p| EdgeSpec::new(&relation_name(p), &format!("k_{}", relation_name(c)), &relation_name(c), "pk"))
            })
            .collect(),
        driver: Some(relation_name(root)),
    }
}

/// Statistics-only instance: random per-edge `m` in `m` and `fo` uniform in
/// `fo`, driver cardinality `n`.
pub fn random_stats_tree<S: Scalar, R: Rng>(
    rng: &mut R,
    parents: &[Option<usize>],
    n: f64,
    m: MRange,
    fo: (f64, f64),
) -> Result<StatsTree<S>> {
    let q = query_for_parents(parents);
    let tree = JoinTree::from_spec(&q)?.root_at(q.driver.as_deref().expect("driver set"))?;
    let edges = parents
        .iter()
        .map(|p| match p {
            None => EdgeStats::unit(),
            Some(_) => {
                let f = if fo.0 == fo.1 { fo.0 } else { rng.gen_range(fo.0..=fo.1) };
                EdgeStats::new(S::lit(m.sample(rng)), S::lit(f))
            }
        })
        .collect();
    let cards = vec![S::lit(n); parents.len()];
    Ok(StatsTree::new(tree, edges, cards))
}

/// Small random instance with real data: 2 to `max_relations` relations, at
/// most about 50 rows each, random match probabilities and fanouts, plus
/// dangling child rows and repeated parent keys.
pub fn random_small_instance<R: Rng>(rng: &mut R, max_relations: usize) -> Result<GeneratedInstance> {
    let k = rng.gen_range(2..=max_relations.max(2));
    let parents = random_parents(rng, k);
    let n = rng.gen_range(4..=15);
    let targets: Vec<Option<EdgeTarget>> = parents
        .iter()
        .map(|p| {
            p.map(|_| EdgeTarget {
                m: rng.gen_range(0.3..=1.0),
                fanout: FanoutSpec::Uniform(1, 3),
            })
        })
        .collect();
    let inst = gen_tree(&parents, n, &targets, rng.gen())?;
    let mut catalog = Catalog::new();
    for rel in inst.catalog.relations() {
        let mut cols: Vec<(String, Vec<i64>)> =
            rel.columns.iter().map(|c| (c.name.clone(), c.values.clone())).collect();
        let is_child = cols.iter().any(|(name, _)| name == "pk") && rel.name != inst.driver();
        if is_child && rel.row_count > 0 && rng.gen_bool(0.5) {
            for j in 0..rng.gen_range(1..=3) {
                let src = rng.gen_range(0..rel.row_count);
                for (name, values) in cols.iter_mut() {
                    let v = if name == "pk" { -1 - j } else { values[src] };
                    values.push(v);
                }
            }
        }
        catalog.insert(Relation::from_columns(rel.name.clone(), cols)?)?;
    }
    let stats = collect_stats(&catalog, &inst.tree()?, Estimator::Exact, &BTreeMap::new())?;
    Ok(GeneratedInstance {
        catalog,
        stats,
        ..inst
    })
}

/// A single driver tuple whose first three joins expand it into six
/// intermediate tuples before the join on another of its attributes.
/// Tree: R1 - {R2 via a, R5 via e}, R2 - {R3 via c, R4 via d}, R5 - R6 via f.
pub struct RedundantProbeInstance {
    pub catalog: Catalog,
    pub query: QuerySpec,
    pub order: Vec<String>,
}

pub fn redundant_probe_instance() -> Result<RedundantProbeInstance> {
    let rel = |name: &str, cols: Vec<(&str, Vec<i64>)>| {
        Relation::from_columns(name, cols.into_iter().map(|(c, v)| (c.to_string(), v)).collect())
    };
    let mut catalog = Catalog::new();
    catalog.insert(rel("R1", vec![("a", vec![1]), ("b", vec![7]), ("e", vec![5])])?)?;
    catalog.insert(rel("R2", vec![("a", vec![1, 2]), ("c", vec![10, 11]), ("d", vec![20, 21])])?)?;
    catalog.insert(rel("R3", vec![("c", vec![10, 10, 12])])?)?;
    catalog.insert(rel("R4", vec![("d", vec![20, 20, 20, 22])])?)?;
    catalog.insert(rel("R5", vec![("e", vec![5, 6]), ("f", vec![30, 31])])?)?;
    catalog.insert(rel("R6", vec![("f", vec![30, 30])])?)?;
    let query = QuerySpec {
        relations: (1..=6).map(|i| format!("R{i}")).collect(),
        edges: vec![
            EdgeSpec::new("R1", "a", "R2", "a"),
            EdgeSpec::new("R2", "c", "R3", "c"),
            EdgeSpec::new("R2", "d", "R4", "d"),
            EdgeSpec::new("R1", "e", "R5", "e"),
            EdgeSpec::new("R5", "f", "R6", "f"),
        ],
        driver: Some("R1".into()),
    };
    let order = ["R2", "R3", "R4", "R5", "R6"].iter().map(|s| s.to_string()).collect();
    Ok(RedundantProbeInstance { catalog, query, order })
}

/// Seven relations with `m = 0.5` everywhere and unit fanouts except on the
/// edges into R2 and R3, together with two orders that differ only in the
/// last two positions.
pub struct AsiCounterexample {
    pub instance: GeneratedInstance,
    pub order_a: Vec<String>,
    pub order_b: Vec<String>,
}

pub fn asi_counterexample(fo2: u32, fo3: u32) -> Result<AsiCounterexample> {
    if fo2 == 0 || fo3 == 0 {
        return Err(Error::InvalidArgument("fanouts must be positive".into()));
    }
    // R1 driver; R2, R3 under R1; R4, R5 under R2; R6, R7 under R3.
    let parents = [None, Some(0), Some(0), Some(1), Some(1), Some(2), Some(2)];
    let targets: Vec<Option<EdgeTarget>> = (0..7)
        .map(|v| {
            let fo = match v {
                1 => fo2,
                2 => fo3,
                _ => 1,
            };
            (v > 0).then_some(EdgeTarget {
                m: 0.5,
                fanout: FanoutSpec::Constant(fo as f64),
            })
        })
        .collect();
    let instance = gen_tree(&parents, 1000, &targets, 1)?;
    let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    Ok(AsiCounterexample {
        instance,
        order_a: names(&["R2", "R3", "R4", "R7", "R5", "R6"]),
        order_b: names(&["R2", "R3", "R4", "R7", "R6", "R5"]),
    })
}

/// Instance on which every greedy heuristic's order costs at least `f`
/// times the optimum under the factorized cost model.
pub struct AdversarialInstance {
    pub instance: GeneratedInstance,
    /// Relations on the decoy path below the driver.
    pub decoy_length: usize,
    /// Name of the relation with a single matching key.
    pub hidden: String,
    pub optimal_cost: f64,
    /// Cost of each heuristic's order.
    pub greedy_costs: Vec<(Algorithm, f64)>,
}

impl AdversarialInstance {
    pub fn ratio(&self, a: Algorithm) -> Option<f64> {
        self.greedy_costs
            .iter()
            .find(|(g, _)| *g == a)
            .map(|(_, c)| c / self.optimal_cost)
    }

    pub fn min_ratio(&self) -> f64 {
        self.greedy_costs
            .iter()
            .map(|(_, c)| c / self.optimal_cost)
            .fold(f64::INFINITY, f64::min)
    }
}

/// The driver has two branches. One is a chain `X -> Y` where `X` has
/// `m = 1, fo = 2` and `Y` matches a single key of `X`, so joining them
/// early removes nearly every driver tuple. The other is a decoy path of
/// relations with `m = 1 - 1/N` and unit fanout. Every greedy rule prefers
/// the decoy, whose cost grows with its length while the optimum stays
/// near `3N`. The path is lengthened until the target factor is reached.
pub fn adversarial_instance(f: f64) -> Result<AdversarialInstance> {
    if !(f > 1.0) {
        return Err(Error::InvalidArgument("target factor must exceed 1".into()));
    }
    let n = (100.0 * f).ceil().max(1000.0) as usize;
    let max_len = crate::query::MAX_NODES - 3;
    let mut len = 4usize;
    loop {
        let inst = build_adversarial(n, len)?;
        if inst.min_ratio() >= f {
            return Ok(inst);
        }
        if len == max_len {
            return Err(Error::Infeasible(format!("factor {f} needs more than {max_len} decoy relations")));
        }
        len = (len * 2).min(max_len);
    }
}

fn build_adversarial(n: usize, len: usize) -> Result<AdversarialInstance> {
    // 0 driver, 1 = X, 2 = Y, 3.. decoy path.
    let mut parents = vec![None, Some(0), Some(1)];
    let mut targets = vec![
        None,
        Some(EdgeTarget {
            m: 1.0,
            fanout: FanoutSpec::Constant(2.0),
        }),
        Some(EdgeTarget {
            m: 1.0 / n as f64,
            fanout: FanoutSpec::Constant(1.0),
        }),
    ];
    for i in 0..len {
        parents.push(Some(if i == 0 { 0 } else { 2 + i }));
        targets.push(Some(EdgeTarget {
            m: 1.0 - 1.0 / n as f64,
            fanout: FanoutSpec::Constant(1.0),
        }));
    }
    let instance = gen_tree(&parents, n, &targets, 2)?;
    let tree = instance.tree()?;
    let st = StatsTree::<f64>::rooted_from_file(&tree, 0, &instance.stats)?;
    let w = Weights::default();
    let eval = Evaluator::for_strategy(&st, Strategy::Com, &w);
    let (_, optimal_cost, _) = dp_order(&eval, &w, parents.len())?;
    let greedy_costs = Algorithm::GREEDY
        .iter()
        .map(|&a| Ok((a, eval.objective(&greedy_order(&st, a)?.0, &w))))
        .collect::<Result<Vec<_>>>()?;
    Ok(AdversarialInstance {
        instance,
        decoy_length: len,
        hidden: relation_name(2),
        optimal_cost,
        greedy_costs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn random_parents_form_rooted_trees() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for n in 2..12 {
            let p = random_parents(&mut rng, n);
            assert_eq!(p.len(), n);
            assert_eq!(p.iter().filter(|x| x.is_none()).count(), 1);
            assert!(p.iter().enumerate().all(|(i, x)| x.is_none_or(|x| x < i)));
            JoinTree::from_spec(&query_for_parents(&p)).unwrap();
        }
    }

    #[test]
    fn small_instances_stay_small() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let inst = random_small_instance(&mut rng, 6).unwrap();
            assert!(inst.catalog.relations().all(|r| r.row_count <= 50));
        }
    }
}
