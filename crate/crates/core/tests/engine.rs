use std::collections::BTreeSet;

use mmjoin::bench::{oracle_join, random_small_instance, redundant_probe_instance};
use mmjoin::engine::{execute, semi_join_reduce, ExecOptions, OutputMode};
use mmjoin::query::{SjPlan, Strategy};
use mmjoin::{JoinTree, Plan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sorted(mut rows: Vec<Vec<u32>>) -> Vec<Vec<u32>> {
    rows.sort_unstable();
    rows
}

fn flat(chunk_size: usize) -> ExecOptions {
    ExecOptions {
        chunk_size,
        output: OutputMode::Flat,
        ..ExecOptions::default()
    }
}

#[test]
fn all_strategies_match_nested_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..60 {
        let inst = random_small_instance(&mut rng, 6).unwrap();
        let tree = inst.tree().unwrap();
        let expected = sorted(oracle_join(&inst.catalog, &inst.query, 1_000_000).unwrap());
        let driver = tree.names()[rng.gen_range(0..tree.len())].clone();
        let rooted = tree.root_at(&driver).unwrap();
        let order = rooted.names_of(&rooted.random_order(&mut rng));
        let opts = flat(rng.gen_range(1..=8));
        for s in Strategy::ALL {
            let plan = Plan::new(driver.clone(), order.clone(), s);
            let res = execute(&inst.catalog, &tree, &plan, &opts).unwrap();
            assert_eq!(res.stats.invariant_violations, 0, "{s}");
            assert_eq!(res.cardinality as usize, expected.len(), "{s}");
            assert_eq!(res.stats.emitted_tuples as usize, expected.len(), "{s}");
            assert_eq!(sorted(res.rows.unwrap()), expected, "{s} driver {driver} order {order:?}");
            let counted = execute(
                &inst.catalog,
                &tree,
                &plan,
                &ExecOptions {
                    output: OutputMode::CountOnly,
                    ..opts.clone()
                },
            )
            .unwrap();
            assert_eq!(counted.cardinality as usize, expected.len());
            assert_eq!(counted.stats.hash_probes, res.stats.hash_probes);
        }
    }
}

#[test]
fn factorized_join_probes_once_per_driver_tuple() {
    let inst = redundant_probe_instance().unwrap();
    let tree = JoinTree::from_spec(&inst.query).unwrap();
    let r5 = tree.index_of("R5").unwrap();
    let run = |s| {
        let plan = Plan::new("R1", inst.order.clone(), s);
        execute(&inst.catalog, &tree, &plan, &flat(2048)).unwrap()
    };
    let std = run(Strategy::Std);
    let com = run(Strategy::Com);
    assert_eq!(std.stats.hash_probes[r5], 6);
    assert_eq!(com.stats.hash_probes[r5], 1);
    assert_eq!(std.cardinality, 12);
    assert_eq!(sorted(std.rows.unwrap()), sorted(com.rows.unwrap()));
}

#[test]
fn reduction_keeps_exactly_the_contributing_driver_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..30 {
        let inst = random_small_instance(&mut rng, 5).unwrap();
        let tree = inst.tree().unwrap();
        let rooted = tree.root_at(inst.driver()).unwrap();
        let plan = SjPlan::with_default_children(&rooted, rooted.random_order(&mut rng));
        let red = semi_join_reduce(&inst.catalog, &rooted, &plan, &ExecOptions::default()).unwrap();
        let rows = oracle_join(&inst.catalog, &inst.query, 1_000_000).unwrap();
        for v in 0..tree.len() {
            let contributing: BTreeSet<u32> = rows.iter().map(|t| t[v]).collect();
            let kept: BTreeSet<u32> = red.rows[v].iter().copied().collect();
            if v == rooted.root {
                assert_eq!(kept, contributing);
            } else {
                assert!(contributing.is_subset(&kept));
            }
        }
    }
}

#[test]
fn semijoin_com_join_probes_do_not_depend_on_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let inst = random_small_instance(&mut rng, 6).unwrap();
        let tree = inst.tree().unwrap();
        let rooted = tree.root_at(inst.driver()).unwrap();
        let mut seen = BTreeSet::new();
        for _ in 0..10 {
            let plan = Plan::new(inst.driver(), rooted.names_of(&rooted.random_order(&mut rng)), Strategy::SjCom);
            let res = execute(&inst.catalog, &tree, &plan, &ExecOptions::default()).unwrap();
            seen.insert(res.stats.hash_probes);
        }
        assert_eq!(seen.len(), 1);
    }
}
