//! Nested-loop join used as a correctness reference. It reads raw column
//! values and evaluates every condition of the query directly, sharing no
//! code with the engine's key encoding or hash tables.

use crate::catalog::{Catalog, ColumnType};
use crate::error::{Error, Result};
use crate::query::QuerySpec;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Cell {
    Int(i64),
    Str(String),
}

/// One equality between an earlier-bound relation's column and a column of
/// the relation being bound.
struct Check {
    earlier: usize,
    earlier_col: Vec<Cell>,
    col: Vec<Cell>,
}

fn cells(catalog: &Catalog, rel: &str, attr: &str) -> Result<Vec<Cell>> {
    let r = catalog.relation(rel)?;
    let c = r.column(attr).ok_or_else(|| Error::UnknownAttribute {
        relation: rel.to_string(),
        attribute: attr.to_string(),
    })?;
    Ok((0..r.row_count)
        .map(|row| match c.ty {
            ColumnType::Int64 => Cell::Int(c.values[row]),
            ColumnType::Utf8Dict => Cell::Str(catalog.render(r, c, row)),
        })
        .collect())
}

/// All result tuples as row ids in the query's relation order. Fails with
/// `RowCapExceeded` once more than `row_cap` tuples are produced.
pub fn oracle_join(catalog: &Catalog, query: &QuerySpec, row_cap: u64) -> Result<Vec<Vec<u32>>> {
    let n = query.relations.len();
    let index = |name: &str| {
        query
            .relations
            .iter()
            .position(|r| r == name)
            .ok_or_else(|| Error::UnknownRelation(name.to_string()))
    };
    // Bind relations so every one after the first shares a condition with an
    // earlier one.
    let mut seq = Vec::with_capacity(n);
    let mut bound = vec![false; n];
    if n > 0 {
        seq.push(0);
        bound[0] = true;
    }
    while seq.len() < n {
        let next = query.edges.iter().find_map(|e| {
            let (l, r) = (index(&e.left).ok()?, index(&e.right).ok()?);
            match (bound[l], bound[r]) {
                (true, false) => Some(r),
                (false, true) => Some(l),
                _ => None,
            }
        });
        let x = next.ok_or(Error::DisconnectedQuery)?;
        bound[x] = true;
        seq.push(x);
    }
    let mut position = vec![0; n];
    for (i, &x) in seq.iter().enumerate() {
        position[x] = i;
    }
    let mut checks: Vec<Vec<Check>> = (0..n).map(|_| Vec::new()).collect();
    for e in &query.edges {
        let (l, r) = (index(&e.left)?, index(&e.right)?);
        let (lc, rc) = (cells(catalog, &e.left, &e.left_attr)?, cells(catalog, &e.right, &e.right_attr)?);
        let (later, check) = if position[l] < position[r] {
            (r, Check { earlier: l, earlier_col: lc, col: rc })
        } else {
            (l, Check { earlier: r, earlier_col: rc, col: lc })
        };
        checks[later].push(check);
    }
    let sizes: Vec<usize> = query
        .relations
        .iter()
        .map(|r| catalog.relation(r).map(|r| r.row_count))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    let mut tuple = vec![0u32; n];
    bind(0, &seq, &sizes, &checks, &mut tuple, &mut out, row_cap)?;
    Ok(out)
}

fn bind(
    depth: usize,
    seq: &[usize],
    sizes: &[usize],
    checks: &[Vec<Check>],
    tuple: &mut [u32],
    out: &mut Vec<Vec<u32>>,
    cap: u64,
) -> Result<()> {
    if depth == seq.len() {
        if out.len() as u64 >= cap {
            return Err(Error::RowCapExceeded(cap));
        }
        out.push(tuple.to_vec());
        return Ok(());
    }
    let x = seq[depth];
    for row in 0..sizes[x] {
        let ok = checks[x]
            .iter()
            .all(|c| c.col[row] == c.earlier_col[tuple[c.earlier] as usize]);
        if ok {
            tuple[x] = row as u32;
            bind(depth + 1, seq, sizes, checks, tuple, out, cap)?;
        }
    }
    Ok(())
}
