//! Flat (STD) push-based pipeline.

use super::Context;

#[derive(Debug, Clone, Copy)]
enum Stage {
    Filter(usize),
    Join(usize),
}

/// Row ids of the relations joined so far, one column per plan position.
#[derive(Debug, Clone, Default)]
struct TupleChunk {
    cols: Vec<Vec<u32>>,
}

impl TupleChunk {
    fn with_width(width: usize, capacity: usize) -> Self {
        TupleChunk {
            cols: (0..width).map(|_| Vec::with_capacity(capacity)).collect(),
        }
    }

    fn len(&self) -> usize {
        self.cols.first().map_or(0, Vec::len)
    }
}

struct Pipeline<'c, 'a> {
    ctx: &'c mut Context<'a>,
    stages: Vec<Stage>,
    /// Plan position of each relation.
    pos: Vec<usize>,
    buffers: Vec<TupleChunk>,
    rows_in: Vec<u64>,
    rows_out: Vec<u64>,
}

pub(crate) fn run(ctx: &mut Context<'_>, bitvectors: bool) {
    let tree = ctx.tree;
    let mut stages = Vec::new();
    let mut pos = vec![0; tree.len()];
    if bitvectors {
        stages.extend(tree.children[tree.root].iter().map(|&c| Stage::Filter(c)));
    }
    for (i, &x) in ctx.order.iter().enumerate() {
        pos[x] = i + 1;
        stages.push(Stage::Join(x));
        if bitvectors {
            stages.extend(tree.children[x].iter().map(|&c| Stage::Filter(c)));
        }
    }
    let k = stages.len();
    let mut widths = Vec::with_capacity(k);
    let mut w = 1;
    for s in &stages {
        if let Stage::Join(_) = s {
            w += 1;
        }
        widths.push(w);
    }
    let chunk_size = ctx.opts.chunk_size;
    let mut p = Pipeline {
        ctx,
        stages,
        pos,
        buffers: widths.iter().map(|&w| TupleChunk::with_width(w, chunk_size)).collect(),
        rows_in: vec![0; k],
        rows_out: vec![0; k],
    };
    let driver = std::mem::take(&mut p.ctx.driver_rows);
    for chunk in driver.chunks(chunk_size) {
        if p.ctx.check_deadline() {
            return;
        }
        p.push(0, TupleChunk { cols: vec![chunk.to_vec()] });
    }
    for i in 0..k {
        if p.buffers[i].len() > 0 {
            let out = std::mem::replace(&mut p.buffers[i], TupleChunk::with_width(widths[i], 0));
            p.push(i + 1, out);
        }
    }
    p.check_identities(driver.len() as u64);
    p.ctx.driver_rows = driver;
}

impl Pipeline<'_, '_> {
    fn push(&mut self, stage: usize, chunk: TupleChunk) {
        if chunk.len() == 0 {
            return;
        }
        if stage == self.stages.len() {
            self.sink(&chunk);
            return;
        }
        let n = chunk.len();
        self.rows_in[stage] += n as u64;
        match self.stages[stage] {
            Stage::Filter(c) => {
                let parent_col = &chunk.cols[self.pos[self.ctx.tree.parent[c].expect("non-root")]];
                let keys = &self.ctx.parent_keys[c];
                let filter = self.ctx.filter(c);
                let keep: Vec<bool> = parent_col.iter().map(|&r| filter.may_contain(keys[r as usize])).collect();
                self.ctx.stats.bitvector_probes[c] += n as u64;
                let out = TupleChunk {
                    cols: chunk
                        .cols
                        .iter()
                        .map(|col| col.iter().zip(&keep).filter(|(_, &k)| k).map(|(&v, _)| v).collect())
                        .collect(),
                };
                self.rows_out[stage] += out.len() as u64;
                self.push(stage + 1, out);
            }
            Stage::Join(x) => {
                let chunk_size = self.ctx.opts.chunk_size;
                let parent_col = self.pos[self.ctx.tree.parent[x].expect("non-root")];
                self.ctx.stats.hash_probes[x] += n as u64;
                for row in 0..n {
                    let key = self.ctx.parent_keys[x][chunk.cols[parent_col][row] as usize];
                    let buf = &mut self.buffers[stage];
                    let mut added = 0u64;
                    self.ctx.tables[x]
                        .as_ref()
                        .expect("hash table built")
                        .for_each_match(key, |m| {
                            for (c, col) in chunk.cols.iter().enumerate() {
                                buf.cols[c].push(col[row]);
                            }
                            buf.cols[chunk.cols.len()].push(m);
                            added += 1;
                        });
                    self.rows_out[stage] += added;
                    if self.buffers[stage].len() >= chunk_size {
                        let width = self.buffers[stage].cols.len();
                        let out = std::mem::replace(&mut self.buffers[stage], TupleChunk::with_width(width, chunk_size));
                        self.push(stage + 1, out);
                    }
                }
            }
        }
    }

    fn sink(&mut self, chunk: &TupleChunk) {
        if self.ctx.rows.is_some() {
            let mut t = vec![0u32; chunk.cols.len()];
            for row in 0..chunk.len() {
                for (c, col) in chunk.cols.iter().enumerate() {
                    t[c] = col[row];
                }
                self.ctx.emit(&t);
            }
        } else {
            let n = chunk.len() as u64;
            self.ctx.stats.emitted_tuples += n;
            self.ctx.cardinality += n;
        }
    }

    /// Every stage consumes exactly what its predecessor produced, and every
    /// consumed tuple is one probe.
    fn check_identities(&mut self, driver_rows: u64) {
        let mut expected_in = driver_rows;
        let mut ok = true;
        for (i, s) in self.stages.iter().enumerate() {
            ok &= self.rows_in[i] == expected_in;
            ok &= match *s {
                Stage::Join(x) => self.ctx.stats.hash_probes[x] == self.rows_in[i],
                Stage::Filter(c) => {
                    self.ctx.stats.bitvector_probes[c] == self.rows_in[i] && self.rows_out[i] <= self.rows_in[i]
                }
            };
            expected_in = self.rows_out[i];
        }
        ok &= self.ctx.stats.emitted_tuples == expected_in;
        self.ctx.violation(ok);
    }
}
