//! Acyclic join queries, rooted join trees and left-deep plans.
//!
//! A query is a set of relations connected by equi-join edges that must form
//! a tree. Rooting the tree at the driver relation orients every edge
//! parent to child; a plan is then a driver plus a permutation of the other
//! relations in which every relation appears after its parent (the
//! precedence constraint that rules out cartesian products).

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{Error, Result};

/// Maximum number of relations a [`NodeSet`] can hold.
pub const MAX_NODES: usize = 512;
const WORDS: usize = MAX_NODES / 64;

/// Fixed-width bitmask over relation indices.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct NodeSet([u64; WORDS]);

impl NodeSet {
    pub fn empty() -> Self {
        NodeSet([0; WORDS])
    }

    pub fn singleton(i: usize) -> Self {
        let mut s = Self::empty();
        s.insert(i);
        s
    }

    #[inline]
    pub fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    pub fn remove(&mut self, i: usize) {
        self.0[i / 64] &= !(1 << (i % 64));
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        self.0[i / 64] & (1 << (i % 64)) != 0
    }

    #[inline]
    pub fn with(mut self, i: usize) -> Self {
        self.insert(i);
        self
    }

    pub fn len(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + b)
            })
        })
    }
}

impl FromIterator<usize> for NodeSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = NodeSet::empty();
        for i in iter {
            s.insert(i);
        }
        s
    }
}

impl fmt::Debug for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub left: String,
    pub left_attr: String,
    pub right: String,
    pub right_attr: String,
}

impl EdgeSpec {
    pub fn new(left: &str, left_attr: &str, right: &str, right_attr: &str) -> Self {
        EdgeSpec {
            left: left.into(),
            left_attr: left_attr.into(),
            right: right.into(),
            right_attr: right_attr.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub relations: Vec<String>,
    pub edges: Vec<EdgeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driver: Option<String>,
}

impl QuerySpec {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

/// One join-graph edge; several conditions between the same pair of
/// relations collapse into one composite-key edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinEdge {
    pub a: usize,
    pub b: usize,
    pub a_attrs: Vec<String>,
    pub b_attrs: Vec<String>,
}

impl JoinEdge {
    /// Attributes on the side of `node`, which must be an endpoint.
    pub fn attrs_of(&self, node: usize) -> &[String] {
        if node == self.a {
            &self.a_attrs
        } else {
            &self.b_attrs
        }
    }
}

/// Unrooted join tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinTree {
    names: Vec<String>,
    edges: Vec<JoinEdge>,
    adj: Vec<Vec<(usize, usize)>>,
}

impl JoinTree {
    /// Builds the join graph and checks that it is a tree, without consulting
    /// a catalog.
    pub fn from_spec(spec: &QuerySpec) -> Result<Self> {
        let names = spec.relations.clone();
        let index: BTreeMap<&str, usize> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        if index.len() != names.len() {
            return Err(Error::InvalidArgument("duplicate relation name in query".into()));
        }
        if names.len() > MAX_NODES {
            return Err(Error::InvalidArgument(format!("more than {MAX_NODES} relations")));
        }
        let lookup = |n: &str| index.get(n).copied().ok_or_else(|| Error::UnknownRelation(n.into()));
        let mut edges: Vec<JoinEdge> = Vec::new();
        for e in &spec.edges {
            let (l, r) = (lookup(&e.left)?, lookup(&e.right)?);
            if l == r {
                return Err(Error::CyclicQuery);
            }
            if let Some(existing) = edges
                .iter_mut()
                .find(|x| (x.a == l && x.b == r) || (x.a == r && x.b == l))
            {
                let (la, ra) = if existing.a == l {
                    (&e.left_attr, &e.right_attr)
                } else {
                    (&e.right_attr, &e.left_attr)
                };
                existing.a_attrs.push(la.clone());
                existing.b_attrs.push(ra.clone());
            } else {
                edges.push(JoinEdge {
                    a: l,
                    b: r,
                    a_attrs: vec![e.left_attr.clone()],
                    b_attrs: vec![e.right_attr.clone()],
                });
            }
        }
        let n = names.len();
        let mut adj = vec![Vec::new(); n];
        for (ei, e) in edges.iter().enumerate() {
            adj[e.a].push((e.b, ei));
            adj[e.b].push((e.a, ei));
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        // Union-find: a repeated union means a cycle, leftovers mean a forest.
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut x = x;
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &edges {
            let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
            if ra == rb {
                return Err(Error::CyclicQuery);
            }
            parent[ra] = rb;
        }
        if n > 0 && edges.len() != n - 1 {
            return Err(Error::DisconnectedQuery);
        }
        Ok(JoinTree { names, edges, adj })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn edges(&self) -> &[JoinEdge] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, usize)] {
        &self.adj[node]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownRelation(name.to_string()))
    }

    pub fn root_at(&self, driver: &str) -> Result<RootedTree> {
        let root = self.index_of(driver)?;
        Ok(self.root_at_index(root))
    }

    pub fn root_at_index(&self, root: usize) -> RootedTree {
        let n = self.len();
        let mut parent = vec![None; n];
        let mut children = vec![Vec::new(); n];
        let mut parent_attrs = vec![Vec::new(); n];
        let mut child_attrs = vec![Vec::new(); n];
        let mut depth = vec![0; n];
        let mut order = vec![root];
        let mut seen = NodeSet::singleton(root);
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            for &(v, ei) in &self.adj[u] {
                if seen.contains(v) {
                    continue;
                }
                seen.insert(v);
                parent[v] = Some(u);
                children[u].push(v);
                parent_attrs[v] = self.edges[ei].attrs_of(u).to_vec();
                child_attrs[v] = self.edges[ei].attrs_of(v).to_vec();
                depth[v] = depth[u] + 1;
                order.push(v);
            }
        }
        RootedTree {
            names: self.names.clone(),
            root,
            parent,
            children,
            parent_attrs,
            child_attrs,
            depth,
            bfs: order,
        }
    }
}

/// Checks that every relation and attribute referenced by `spec` exists and
/// that the join graph is a tree.
pub fn validate_query(spec: &QuerySpec, catalog: &Catalog) -> Result<JoinTree> {
    for r in &spec.relations {
        catalog.relation(r)?;
    }
    for e in &spec.edges {
        for (rel, attr) in [(&e.left, &e.left_attr), (&e.right, &e.right_attr)] {
            if !spec.relations.contains(rel) {
                return Err(Error::UnknownRelation(rel.clone()));
            }
            catalog.relation(rel)?.values(attr)?;
        }
    }
    let tree = JoinTree::from_spec(spec)?;
    if let Some(d) = &spec.driver {
        tree.index_of(d)?;
    }
    Ok(tree)
}

/// Join tree oriented away from the driver. Per-node vectors are indexed by
/// relation index; `parent_attrs[v]` / `child_attrs[v]` are the join
/// attributes of the edge `parent(v) -> v` on each side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootedTree {
    pub names: Vec<String>,
    pub root: usize,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    pub parent_attrs: Vec<Vec<String>>,
    pub child_attrs: Vec<Vec<String>>,
    pub depth: Vec<usize>,
    /// Breadth-first order from the root.
    pub bfs: Vec<usize>,
}

impl RootedTree {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownRelation(name.to_string()))
    }

    pub fn non_root(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| i != self.root)
    }

    /// Nodes on the path from the root down to `node`, both included.
    pub fn path_from_root(&self, node: usize) -> Vec<usize> {
        let mut path = vec![node];
        let mut cur = node;
        while let Some(p) = self.parent[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Children before parents.
    pub fn post_order(&self) -> Vec<usize> {
        let mut v = self.bfs.clone();
        v.reverse();
        v
    }

    /// True when `set` contains the root and is closed under taking parents.
    pub fn is_connected_prefix(&self, set: &NodeSet) -> bool {
        set.contains(self.root)
            && set
                .iter()
                .all(|v| v == self.root || self.parent[v].is_some_and(|p| set.contains(p)))
    }

    /// Relations whose parent has been placed. `placed` may or may not
    /// include the root; the root is always treated as placed.
    pub fn eligible_next(&self, placed: &NodeSet) -> Result<Vec<usize>> {
        let placed = placed.with(self.root);
        if !self.is_connected_prefix(&placed) {
            return Err(Error::InvalidPrefix(format!(
                "{:?} is not connected to {}",
                placed.iter().map(|i| self.name(i)).collect::<Vec<_>>(),
                self.name(self.root)
            )));
        }
        Ok(self.eligible_unchecked(&placed))
    }

    pub(crate) fn eligible_unchecked(&self, placed: &NodeSet) -> Vec<usize> {
        let mut out = Vec::new();
        for v in placed.iter() {
            out.extend(self.children[v].iter().copied().filter(|c| !placed.contains(*c)));
        }
        out.sort_unstable();
        out
    }

    /// Checks that `order` is a permutation of the non-root relations obeying
    /// precedence constraints.
    pub fn check_order(&self, order: &[usize]) -> Result<()> {
        if order.len() + 1 != self.len() {
            return Err(Error::InvalidPlan(format!(
                "order has {} relations, expected {}",
                order.len(),
                self.len().saturating_sub(1)
            )));
        }
        let mut placed = NodeSet::singleton(self.root);
        for &v in order {
            if v >= self.len() || placed.contains(v) {
                return Err(Error::InvalidPlan(format!("relation index {v} repeated or out of range")));
            }
            match self.parent[v] {
                Some(p) if placed.contains(p) => placed.insert(v),
                _ => {
                    return Err(Error::InvalidPrefix(format!(
                        "{} placed before its parent",
                        self.name(v)
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn resolve_order(&self, names: &[String]) -> Result<Vec<usize>> {
        let order = names
            .iter()
            .map(|n| self.index_of(n))
            .collect::<Result<Vec<_>>>()?;
        self.check_order(&order)?;
        Ok(order)
    }

    /// Every valid order; intended for small trees (tests and oracles).
    pub fn all_orders(&self) -> Vec<Vec<usize>> {
        fn rec(t: &RootedTree, placed: NodeSet, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            let next = t.eligible_unchecked(&placed);
            if next.is_empty() {
                out.push(cur.clone());
                return;
            }
            for v in next {
                cur.push(v);
                rec(t, placed.with(v), cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(self, NodeSet::singleton(self.root), &mut Vec::new(), &mut out);
        out
    }

    /// Random valid order built by drawing uniformly from the eligible set at
    /// each step.
    pub fn random_order<R: rand::Rng>(&self, rng: &mut R) -> Vec<usize> {
        let mut placed = NodeSet::singleton(self.root);
        let mut order = Vec::with_capacity(self.len().saturating_sub(1));
        loop {
            let next = self.eligible_unchecked(&placed);
            if next.is_empty() {
                return order;
            }
            let v = next[rng.gen_range(0..next.len())];
            placed.insert(v);
            order.push(v);
        }
    }

    pub fn names_of(&self, order: &[usize]) -> Vec<String> {
        order.iter().map(|&i| self.names[i].clone()).collect()
    }
}

/// The six execution strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "STD")]
    Std,
    #[serde(rename = "COM")]
    Com,
    #[serde(rename = "BVP+STD")]
    BvpStd,
    #[serde(rename = "BVP+COM")]
    BvpCom,
    #[serde(rename = "SJ+STD")]
    SjStd,
    #[serde(rename = "SJ+COM")]
    SjCom,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Std,
        Strategy::Com,
        Strategy::BvpStd,
        Strategy::BvpCom,
        Strategy::SjStd,
        Strategy::SjCom,
    ];

    pub fn is_factorized(self) -> bool {
        matches!(self, Strategy::Com | Strategy::BvpCom | Strategy::SjCom)
    }

    pub fn uses_bitvectors(self) -> bool {
        matches!(self, Strategy::BvpStd | Strategy::BvpCom)
    }

    pub fn uses_semijoins(self) -> bool {
        matches!(self, Strategy::SjStd | Strategy::SjCom)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Std => "STD",
            Strategy::Com => "COM",
            Strategy::BvpStd => "BVP+STD",
            Strategy::BvpCom => "BVP+COM",
            Strategy::SjStd => "SJ+STD",
            Strategy::SjCom => "SJ+COM",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| !matches!(c, '+' | '-' | '_' | ' '))
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match norm.as_str() {
            "std" => Strategy::Std,
            "com" => Strategy::Com,
            "bvpstd" | "bvp" => Strategy::BvpStd,
            "bvpcom" | "combvp" => Strategy::BvpCom,
            "sjstd" | "sj" => Strategy::SjStd,
            "sjcom" | "comsj" => Strategy::SjCom,
            _ => return Err(Error::InvalidArgument(format!("unknown strategy `{s}`"))),
        })
    }
}

/// Left-deep plan: driver plus the join order of every other relation. For
/// the semi-join strategies `semijoin_orders` fixes the per-parent child
/// probe order of the reduction pass; absent entries default to the
/// children's declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub driver: String,
    pub order: Vec<String>,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub semijoin_orders: BTreeMap<String, Vec<String>>,
}

impl Plan {
    pub fn new(driver: impl Into<String>, order: Vec<String>, strategy: Strategy) -> Self {
        Plan {
            driver: driver.into(),
            order,
            strategy,
            semijoin_orders: BTreeMap::new(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

/// Full-reduction plan in index form: per-node child probe order for the
/// bottom-up semi-join pass and the join order of the second pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SjPlan {
    pub root: usize,
    pub child_orders: Vec<Vec<usize>>,
    pub order: Vec<usize>,
}

impl SjPlan {
    /// Children probed in declaration order.
    pub fn with_default_children(tree: &RootedTree, order: Vec<usize>) -> Self {
        SjPlan {
            root: tree.root,
            child_orders: tree.children.clone(),
            order,
        }
    }

    pub fn validate(&self, tree: &RootedTree) -> Result<()> {
        if self.root != tree.root {
            return Err(Error::InvalidPlan("semi-join plan rooted elsewhere".into()));
        }
        for (v, kids) in self.child_orders.iter().enumerate() {
            let mut a = kids.clone();
            let mut b = tree.children[v].clone();
            a.sort_unstable();
            b.sort_unstable();
            if a != b {
                return Err(Error::InvalidPlan(format!(
                    "semi-join order of {} is not a permutation of its children",
                    tree.name(v)
                )));
            }
        }
        tree.check_order(&self.order)
    }

    pub fn from_plan(tree: &RootedTree, plan: &Plan) -> Result<Self> {
        let order = tree.resolve_order(&plan.order)?;
        let mut sj = SjPlan::with_default_children(tree, order);
        for (parent, kids) in &plan.semijoin_orders {
            let p = tree.index_of(parent)?;
            sj.child_orders[p] = kids.iter().map(|k| tree.index_of(k)).collect::<Result<_>>()?;
        }
        sj.validate(tree)?;
        Ok(sj)
    }

    pub fn to_plan(&self, tree: &RootedTree, strategy: Strategy) -> Plan {
        let mut plan = Plan::new(tree.name(self.root), tree.names_of(&self.order), strategy);
        for (v, kids) in self.child_orders.iter().enumerate() {
            if !kids.is_empty() {
                plan.semijoin_orders
                    .insert(tree.name(v).to_string(), tree.names_of(kids));
            }
        }
        plan
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// The six-relation running example: R1 - {R2, R5}, R2 - {R3, R4}, R5 - R6.
    pub(crate) fn fig1_spec() -> QuerySpec {
        QuerySpec {
            relations: (1..=6).map(|i| format!("R{i}")).collect(),
            edges: vec![
                EdgeSpec::new("R1", "A", "R2", "A"),
                EdgeSpec::new("R2", "C", "R3", "C"),
                EdgeSpec::new("R2", "D", "R4", "D"),
                EdgeSpec::new("R1", "E", "R5", "E"),
                EdgeSpec::new("R5", "F", "R6", "F"),
            ],
            driver: Some("R1".into()),
        }
    }

    fn path_spec(names: &[&str]) -> QuerySpec {
        QuerySpec {
            relations: names.iter().map(|s| s.to_string()).collect(),
            edges: names
                .windows(2)
                .map(|w| EdgeSpec::new(w[0], "k", w[1], "k"))
                .collect(),
            driver: None,
        }
    }

    fn names(t: &RootedTree, v: &[usize]) -> Vec<String> {
        t.names_of(v)
    }

    #[test]
    fn fig1_tree_shape() {
        let t = JoinTree::from_spec(&fig1_spec()).unwrap().root_at("R1").unwrap();
        let kids = |n: &str| names(&t, &t.children[t.index_of(n).unwrap()]);
        assert_eq!(kids("R1"), vec!["R2", "R5"]);
        assert_eq!(kids("R2"), vec!["R3", "R4"]);
        assert_eq!(kids("R5"), vec!["R6"]);
    }

    #[test]
    fn rejects_cycles_and_forests() {
        let tri = QuerySpec {
            relations: vec!["R1".into(), "R2".into(), "R3".into()],
            edges: vec![
                EdgeSpec::new("R1", "a", "R2", "a"),
                EdgeSpec::new("R2", "b", "R3", "b"),
                EdgeSpec::new("R3", "c", "R1", "c"),
            ],
            driver: None,
        };
        assert!(matches!(JoinTree::from_spec(&tri), Err(Error::CyclicQuery)));
        let forest = QuerySpec {
            relations: (1..=4).map(|i| format!("R{i}")).collect(),
            edges: vec![EdgeSpec::new("R1", "a", "R2", "a"), EdgeSpec::new("R3", "a", "R4", "a")],
            driver: None,
        };
        assert!(matches!(JoinTree::from_spec(&forest), Err(Error::DisconnectedQuery)));
    }

    #[test]
    fn composite_edges_merge() {
        let spec = QuerySpec {
            relations: vec!["R".into(), "S".into()],
            edges: vec![EdgeSpec::new("R", "a", "S", "x"), EdgeSpec::new("S", "y", "R", "b")],
            driver: None,
        };
        let t = JoinTree::from_spec(&spec).unwrap();
        assert_eq!(t.edges().len(), 1);
        let r = t.root_at("R").unwrap();
        assert_eq!(r.parent_attrs[1], vec!["a", "b"]);
        assert_eq!(r.child_attrs[1], vec!["x", "y"]);
    }

    #[test]
    fn rooting_variants() {
        let t = JoinTree::from_spec(&path_spec(&["A", "B", "C"])).unwrap();
        let r = t.root_at("B").unwrap();
        assert_eq!(names(&r, &r.children[1]), vec!["A", "C"]);
        assert!(matches!(t.root_at("Z"), Err(Error::UnknownRelation(_))));
        let single = JoinTree::from_spec(&path_spec(&["A"])).unwrap().root_at("A").unwrap();
        assert!(single.children[0].is_empty());
    }

    #[test]
    fn eligible_sets() {
        let t = JoinTree::from_spec(&fig1_spec()).unwrap().root_at("R1").unwrap();
        let set = |ns: &[&str]| ns.iter().map(|n| t.index_of(n).unwrap()).collect::<NodeSet>();
        assert_eq!(names(&t, &t.eligible_next(&NodeSet::empty()).unwrap()), vec!["R2", "R5"]);
        assert_eq!(names(&t, &t.eligible_next(&set(&["R2"])).unwrap()), vec!["R3", "R4", "R5"]);
        assert!(t
            .eligible_next(&set(&["R2", "R3", "R4", "R5", "R6"]))
            .unwrap()
            .is_empty());
        assert!(matches!(t.eligible_next(&set(&["R3"])), Err(Error::InvalidPrefix(_))));
    }

    fn factorial(n: usize) -> usize {
        (1..=n).product()
    }

    #[test]
    fn order_counts() {
        for n in 2..=8 {
            let star = QuerySpec {
                relations: (0..n).map(|i| format!("S{i}")).collect(),
                edges: (1..n).map(|i| EdgeSpec::new("S0", "k", &format!("S{i}"), "k")).collect(),
                driver: None,
            };
            let t = JoinTree::from_spec(&star).unwrap().root_at("S0").unwrap();
            assert_eq!(t.all_orders().len(), factorial(n - 1));
            let names: Vec<String> = (0..n).map(|i| format!("P{i}")).collect();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let p = JoinTree::from_spec(&path_spec(&refs)).unwrap().root_at("P0").unwrap();
            assert_eq!(p.all_orders().len(), 1);
        }
    }

    #[test]
    fn orders_match_precedence_check() {
        // Every permutation passes check_order iff it is produced by eligible draws.
        let t = JoinTree::from_spec(&fig1_spec()).unwrap().root_at("R1").unwrap();
        let valid: std::collections::BTreeSet<Vec<usize>> = t.all_orders().into_iter().collect();
        let rest: Vec<usize> = t.non_root().collect();
        fn perms(v: &[usize]) -> Vec<Vec<usize>> {
            if v.len() <= 1 {
                return vec![v.to_vec()];
            }
            let mut out = Vec::new();
            for i in 0..v.len() {
                let mut rest = v.to_vec();
                let x = rest.remove(i);
                for mut p in perms(&rest) {
                    p.insert(0, x);
                    out.push(p);
                }
            }
            out
        }
        for p in perms(&rest) {
            assert_eq!(t.check_order(&p).is_ok(), valid.contains(&p));
        }
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("com".parse::<Strategy>().unwrap(), Strategy::Com);
        assert_eq!("BVP+COM".parse::<Strategy>().unwrap(), Strategy::BvpCom);
        assert_eq!("sj-std".parse::<Strategy>().unwrap(), Strategy::SjStd);
        assert!("nope".parse::<Strategy>().is_err());
        let json = serde_json::to_string(&Strategy::SjCom).unwrap();
        assert_eq!(json, "\"SJ+COM\"");
    }
}
