//! Factorized (COM) execution: one chunk of column groups per driver chunk.
//!
//! Group 0 holds driver rows. Joining relation `x` appends a group whose
//! entries are grouped by the entries of the group of `x`'s parent:
//! `counts[i]` matches for parent entry `i`, stored from `prefix_sums[i]`.
//! A join probes each live parent entry once, however many flat tuples that
//! entry stands for.

use super::Context;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnGroup {
    pub relation: usize,
    pub parent_group: Option<usize>,
    /// Per parent entry.
    pub counts: Vec<u32>,
    pub prefix_sums: Vec<usize>,
    /// Per parent entry: at least one match was found.
    pub selection: Vec<bool>,
    /// Per parent entry: the entry was probed.
    pub probed: Vec<bool>,
    /// Per entry: row id of `relation`.
    pub rows: Vec<u32>,
    pub parent_entry: Vec<u32>,
    /// Per entry: not eliminated by a failed probe or filter on it.
    pub alive: Vec<bool>,
}

impl ColumnGroup {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn range(&self, parent_entry: usize) -> std::ops::Range<usize> {
        let s = self.prefix_sums[parent_entry];
        s..s + self.counts[parent_entry] as usize
    }

    /// Prefix-sum identity, payload length, parent links and
    /// selection/count agreement.
    pub fn is_consistent(&self) -> bool {
        let mut acc = 0usize;
        for i in 0..self.counts.len() {
            if self.prefix_sums[i] != acc || self.selection[i] != (self.counts[i] > 0) {
                return false;
            }
            if self.counts[i] > 0 && !self.probed[i] {
                return false;
            }
            for e in acc..acc + self.counts[i] as usize {
                if self.parent_entry.get(e) != Some(&(i as u32)) {
                    return false;
                }
            }
            acc += self.counts[i] as usize;
        }
        acc == self.rows.len() && self.alive.len() == self.rows.len() && self.parent_entry.len() == self.rows.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorizedChunk {
    pub groups: Vec<ColumnGroup>,
    /// Group holding each relation, once joined.
    pub group_of: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
}

impl FactorizedChunk {
    pub fn new(n_relations: usize, root: usize, driver_rows: &[u32]) -> Self {
        let n = driver_rows.len();
        let mut group_of = vec![None; n_relations];
        group_of[root] = Some(0);
        FactorizedChunk {
            groups: vec![ColumnGroup {
                relation: root,
                parent_group: None,
                counts: Vec::new(),
                prefix_sums: Vec::new(),
                selection: Vec::new(),
                probed: Vec::new(),
                rows: driver_rows.to_vec(),
                parent_entry: vec![0; n],
                alive: vec![true; n],
            }],
            group_of,
            children: vec![Vec::new()],
        }
    }

    pub fn entries(&self) -> usize {
        self.groups.iter().map(ColumnGroup::len).sum()
    }

    /// Entries that still contribute to the result: alive, every child group
    /// has a live entry in their range, and their ancestors are live.
    pub fn liveness(&self) -> Vec<Vec<bool>> {
        let g = self.groups.len();
        let mut up: Vec<Vec<bool>> = self.groups.iter().map(|gr| gr.alive.clone()).collect();
        for gi in (0..g).rev() {
            for &h in &self.children[gi] {
                let (head, tail) = up.split_at_mut(h);
                let child = &self.groups[h];
                for (e, flag) in head[gi].iter_mut().enumerate() {
                    if *flag {
                        *flag = child.range(e).any(|c| tail[0][c]);
                    }
                }
            }
        }
        for gi in 1..g {
            let p = self.groups[gi].parent_group.expect("non-driver group");
            let (head, tail) = up.split_at_mut(gi);
            for (e, flag) in tail[0].iter_mut().enumerate() {
                *flag = *flag && head[p][self.groups[gi].parent_entry[e] as usize];
            }
        }
        up
    }

    fn join(&mut self, ctx: &mut Context<'_>, x: usize) {
        let parent = ctx.tree.parent[x].expect("non-root");
        let pg = self.group_of[parent].expect("parent joined");
        let live = self.liveness();
        let table = ctx.tables[x].as_ref().expect("hash table built");
        let keys = &ctx.parent_keys[x];
        let n = self.groups[pg].len();
        let mut g = ColumnGroup {
            relation: x,
            parent_group: Some(pg),
            counts: vec![0; n],
            prefix_sums: vec![0; n],
            selection: vec![false; n],
            probed: vec![false; n],
            rows: Vec::new(),
            parent_entry: Vec::new(),
            alive: Vec::new(),
        };
        let mut probes = 0u64;
        for e in 0..n {
            g.prefix_sums[e] = g.rows.len();
            if !live[pg][e] {
                continue;
            }
            probes += 1;
            g.probed[e] = true;
            let key = keys[self.groups[pg].rows[e] as usize];
            table.for_each_match(key, |r| {
                g.rows.push(r);
                g.parent_entry.push(e as u32);
            });
            let c = (g.rows.len() - g.prefix_sums[e]) as u32;
            g.counts[e] = c;
            g.selection[e] = c > 0;
            if c == 0 {
                self.groups[pg].alive[e] = false;
            }
        }
        g.alive = vec![true; g.rows.len()];
        ctx.stats.hash_probes[x] += probes;
        let live_count = live[pg].iter().filter(|&&l| l).count() as u64;
        ctx.violation(probes == live_count);
        let gi = self.groups.len();
        self.groups.push(g);
        self.children.push(Vec::new());
        self.children[pg].push(gi);
        self.group_of[x] = Some(gi);
        if ctx.opts.check_invariants {
            let ok = self.groups.iter().skip(1).all(ColumnGroup::is_consistent)
                && self.groups[pg]
                    .alive
                    .iter()
                    .zip(&self.groups[gi].probed)
                    .zip(&self.groups[gi].counts)
                    .all(|((&a, &p), &c)| !(p && c == 0) || !a);
            ctx.violation(ok);
        }
    }

    /// Tests the live entries of `c`'s parent group against `c`'s filter.
    fn filter(&mut self, ctx: &mut Context<'_>, c: usize) {
        let parent = ctx.tree.parent[c].expect("non-root");
        let pg = self.group_of[parent].expect("parent joined");
        let live = self.liveness();
        let filter = ctx.filters[c].as_ref().expect("filter built");
        let keys = &ctx.parent_keys[c];
        let group = &mut self.groups[pg];
        let mut probes = 0u64;
        for e in 0..group.len() {
            if !live[pg][e] {
                continue;
            }
            probes += 1;
            if !filter.may_contain(keys[group.rows[e] as usize]) {
                group.alive[e] = false;
            }
        }
        ctx.stats.bitvector_probes[c] += probes;
    }

    /// Number of flat result tuples represented.
    pub fn count(&self, live: &[Vec<bool>]) -> Result<u64> {
        let g = self.groups.len();
        let mut cnt: Vec<Vec<u128>> = live
            .iter()
            .map(|l| l.iter().map(|&b| b as u128).collect())
            .collect();
        for gi in (0..g).rev() {
            for &h in &self.children[gi] {
                let (head, tail) = cnt.split_at_mut(h);
                let child = &self.groups[h];
                for (e, v) in head[gi].iter_mut().enumerate() {
                    if *v > 0 {
                        let sum: u128 = child.range(e).map(|c| tail[0][c]).sum();
                        *v = v.checked_mul(sum).ok_or(Error::Overflow)?;
                    }
                }
            }
        }
        let total: u128 = cnt[0].iter().sum();
        u64::try_from(total).map_err(|_| Error::Overflow)
    }

    /// Depth-first expansion over groups in creation order. Emits one tuple
    /// per combination of live entries; returns the number emitted.
    fn expand(&self, ctx: &mut Context<'_>, live: &[Vec<bool>]) -> u64 {
        let g = self.groups.len();
        let mut cursor = vec![0usize; g];
        let mut tuple = vec![0u32; g];
        let mut emitted = 0u64;
        let mut dead_ends = 0u64;
        for e in 0..self.groups[0].len() {
            if !live[0][e] {
                continue;
            }
            cursor[0] = e;
            tuple[0] = self.groups[0].rows[e];
            self.descend(ctx, live, 1, &mut cursor, &mut tuple, &mut emitted, &mut dead_ends);
        }
        ctx.violation(dead_ends == 0);
        emitted
    }

    #[allow(clippy::too_many_arguments)]
    fn descend(
        &self,
        ctx: &mut Context<'_>,
        live: &[Vec<bool>],
        gi: usize,
        cursor: &mut [usize],
        tuple: &mut [u32],
        emitted: &mut u64,
        dead_ends: &mut u64,
    ) {
        if gi == self.groups.len() {
            ctx.emit(tuple);
            *emitted += 1;
            return;
        }
        let group = &self.groups[gi];
        let pe = cursor[group.parent_group.expect("non-driver group")];
        let mut any = false;
        for e in group.range(pe) {
            if !live[gi][e] {
                continue;
            }
            any = true;
            cursor[gi] = e;
            tuple[gi] = group.rows[e];
            self.descend(ctx, live, gi + 1, cursor, tuple, emitted, dead_ends);
        }
        if !any {
            *dead_ends += 1;
        }
    }
}

pub(crate) fn run(ctx: &mut Context<'_>, bitvectors: bool) -> Result<()> {
    let tree = ctx.tree;
    let driver = std::mem::take(&mut ctx.driver_rows);
    let order = ctx.order.clone();
    for chunk in driver.chunks(ctx.opts.chunk_size) {
        if ctx.check_deadline() {
            break;
        }
        let mut fc = FactorizedChunk::new(tree.len(), tree.root, chunk);
        if bitvectors {
            for &c in &tree.children[tree.root] {
                fc.filter(ctx, c);
            }
        }
        for &x in &order {
            fc.join(ctx, x);
            if bitvectors {
                for &c in &tree.children[x] {
                    fc.filter(ctx, c);
                }
            }
        }
        ctx.factorized_entries += fc.entries() as u64;
        let live = fc.liveness();
        let n = if ctx.rows.is_some() {
            let n = fc.expand(ctx, &live);
            ctx.violation(fc.count(&live).ok() == Some(n));
            n
        } else {
            let n = fc.count(&live)?;
            ctx.stats.emitted_tuples += n;
            ctx.cardinality += n;
            n
        };
        ctx.stats.expansion_steps += n;
    }
    ctx.driver_rows = driver;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_chunk_is_consistent() {
        let fc = FactorizedChunk::new(3, 0, &[]);
        assert_eq!(fc.entries(), 0);
        assert_eq!(fc.count(&fc.liveness()).unwrap(), 0);
    }
}
