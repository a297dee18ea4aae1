//! Bottom-up semi-join full reduction.

use super::{Context, ExecOptions, HashTable};
use crate::catalog::Catalog;
use crate::error::Result;
use crate::query::{RootedTree, SjPlan};

/// Surviving row ids of every relation, the hash tables built on them
/// (reused by the join phase) and the probes spent.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub rows: Vec<Vec<u32>>,
    pub tables: Vec<Option<HashTable>>,
    pub semijoin_probes: Vec<u64>,
}

/// Reduces every relation by its subtree, leaves first. A parent row is
/// kept when it matches in every child; children are probed in the plan's
/// per-parent order and probing stops at the first miss.
pub fn semi_join_reduce(catalog: &Catalog, tree: &RootedTree, plan: &SjPlan, opts: &ExecOptions) -> Result<Reduction> {
    plan.validate(tree)?;
    let mut ctx = Context::new(catalog, tree, plan.order.clone(), opts)?;
    Ok(reduce_in_context(&mut ctx, plan))
}

pub(crate) fn reduce_in_context(ctx: &mut Context<'_>, plan: &SjPlan) -> Reduction {
    let tree = ctx.tree;
    let n = tree.len();
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut tables: Vec<Option<HashTable>> = (0..n).map(|_| None).collect();
    let mut probes = vec![0u64; n];
    for v in tree.post_order() {
        let total = if v == tree.root {
            ctx.driver_rows.len()
        } else {
            ctx.child_keys[v].len()
        };
        let kids = &plan.child_orders[v];
        let kept: Vec<u32> = (0..total as u32)
            .filter(|&r| {
                kids.iter().all(|&c| {
                    probes[c] += 1;
                    let key = ctx.parent_keys[c][r as usize];
                    tables[c].as_ref().expect("child reduced first").contains(key)
                })
            })
            .collect();
        if v != tree.root {
            let t = HashTable::build(&ctx.child_keys[v], &kept, ctx.opts.hash_seed);
            ctx.violation(t.chains_complete());
            tables[v] = Some(t);
        }
        rows[v] = kept;
    }
    for (c, p) in probes.iter().enumerate() {
        ctx.stats.semijoin_probes[c] += p;
    }
    Reduction {
        rows,
        tables,
        semijoin_probes: probes,
    }
}
