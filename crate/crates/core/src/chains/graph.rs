//! The chain graph.
//!
//! Nodes are `(depth, symbol)` pairs numbered `(depth - 1) * |syms| + sym`, so
//! two graphs over the same DTD agree on node identities. Edges are grouped
//! into components, one per step expression; a chain set is a set of
//! [`End`]s, each standing for every root path of its component that ends at
//! its node.
//!
//! Each component node keeps, per tag, the minimum number of occurrences of
//! that tag over its root paths. An edge towards `β` is only added while that
//! minimum is below `k`, and depth is capped at `k·|Σ|` (+1 for text), so every
//! k-chain is represented while the node count stays within
//! `(k·|Σ|+2)(|Σ|+1)`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use rustc_hash::{FxHashMap, FxHashSet};
use serde::Serialize;

use crate::lang::{Axis, ExprId};
use crate::schema::{format_labels, Dtd, Label, Sym};

use super::step::is_k_sym_chain;

pub type NodeId = u32;
pub type CompId = u32;

/// Component holding only the root node; `$root` is bound to it.
pub const ROOT_COMP: CompId = 0;

/// Root paths of `comp` ending at `node`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct End {
    pub comp: CompId,
    pub node: NodeId,
}

/// A used-chain end; closed ones stand for whole subtrees.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct VEnd {
    pub end: End,
    pub closed: bool,
}

/// Update-chain ends.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum UpdateEnd {
    /// `c:α` for every chain `c.α` of the end; always open.
    Split(End),
    /// `c:suffix` for every chain `c` of `prefix` (the empty chain when `None`).
    Graft { prefix: Option<End>, suffix: Arc<[Label]>, open: bool },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CdagStats {
    pub nodes: usize,
    pub edges: usize,
    pub components: usize,
}

struct NodeData {
    out: Vec<NodeId>,
    inn: Vec<NodeId>,
    min: Box<[u8]>,
    expanded: bool,
}

type ReachSets = FxHashMap<NodeId, Box<[u64]>>;

struct Comp {
    expr: Option<ExprId>,
    recursive: bool,
    nodes: FxHashMap<NodeId, NodeData>,
    edges: usize,
    version: u64,
    /// Per-node reach bitsets, tagged with the version they were built at.
    reach: Option<(u64, ReachSets)>,
}

impl Comp {
    fn new(expr: Option<ExprId>, recursive: bool) -> Comp {
        Comp { expr, recursive, nodes: FxHashMap::default(), edges: 0, version: 0, reach: None }
    }
}

enum Task {
    Lower(NodeId),
    Expand(NodeId),
}

pub struct Cdag {
    dtd: Arc<Dtd>,
    k: usize,
    syms: u32,
    tags: usize,
    max_depth: u32,
    comps: Vec<Comp>,
    by_expr: FxHashMap<ExprId, CompId>,
    version: u64,
    copied: FxHashSet<(CompId, CompId, NodeId)>,
    pending: Vec<Task>,
}

impl Cdag {
    pub fn new(dtd: Arc<Dtd>, k: usize) -> Cdag {
        let k = k.max(1);
        let tags = dtd.size();
        let mut g = Cdag {
            syms: dtd.num_syms() as u32,
            max_depth: (k * tags + 1) as u32,
            dtd,
            k,
            tags,
            comps: Vec::new(),
            by_expr: FxHashMap::default(),
            version: 0,
            copied: FxHashSet::default(),
            pending: Vec::new(),
        };
        g.comps.push(g.fresh_comp(None, false));
        g
    }

    fn fresh_comp(&self, expr: Option<ExprId>, recursive: bool) -> Comp {
        let mut c = Comp::new(expr, recursive);
        let mut min = vec![0u8; self.tags].into_boxed_slice();
        min[self.dtd.root_sym() as usize] = 1;
        c.nodes.insert(self.root(), NodeData { out: Vec::new(), inn: Vec::new(), min, expanded: false });
        c
    }

    pub fn dtd(&self) -> &Dtd {
        &self.dtd
    }

    pub fn dtd_arc(&self) -> Arc<Dtd> {
        self.dtd.clone()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Largest depth a node may have (text nodes; tags stop one level above).
    pub fn max_depth(&self) -> usize {
        self.max_depth as usize
    }

    pub fn node_id(&self, depth: usize, sym: Sym) -> NodeId {
        (depth as u32 - 1) * self.syms + sym as u32
    }

    pub fn depth(&self, n: NodeId) -> usize {
        (n / self.syms + 1) as usize
    }

    pub fn sym(&self, n: NodeId) -> Sym {
        (n % self.syms) as Sym
    }

    pub fn label(&self, n: NodeId) -> Label {
        self.dtd.label_of(self.sym(n))
    }

    pub fn root(&self) -> NodeId {
        self.node_id(1, self.dtd.root_sym())
    }

    pub fn root_end(&self) -> End {
        End { comp: ROOT_COMP, node: self.root() }
    }

    /// Changes so far; stable once inference has reached its fixpoint.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn num_comps(&self) -> usize {
        self.comps.len()
    }

    pub fn comp_expr(&self, c: CompId) -> Option<ExprId> {
        self.comps[c as usize].expr
    }

    pub fn comp_of(&self, expr: ExprId) -> Option<CompId> {
        self.by_expr.get(&expr).copied()
    }

    pub(crate) fn comp_for(&mut self, expr: ExprId, axis: Axis) -> CompId {
        if let Some(&c) = self.by_expr.get(&expr) {
            return c;
        }
        let recursive = matches!(axis, Axis::Descendant | Axis::DescendantOrSelf);
        let c = self.fresh_comp(Some(expr), recursive);
        self.comps.push(c);
        let id = (self.comps.len() - 1) as CompId;
        self.by_expr.insert(expr, id);
        id
    }

    pub(crate) fn begin_round(&mut self) {
        self.copied.clear();
    }

    pub fn contains(&self, c: CompId, n: NodeId) -> bool {
        self.comps[c as usize].nodes.contains_key(&n)
    }

    pub fn parents(&self, c: CompId, n: NodeId) -> &[NodeId] {
        self.comps[c as usize].nodes.get(&n).map(|d| d.inn.as_slice()).unwrap_or(&[])
    }

    pub fn children(&self, c: CompId, n: NodeId) -> &[NodeId] {
        self.comps[c as usize].nodes.get(&n).map(|d| d.out.as_slice()).unwrap_or(&[])
    }

    /// Node reached by following `labels` from the root inside component `c`.
    pub fn path_end(&self, c: CompId, labels: &[Label]) -> Option<NodeId> {
        let (first, rest) = labels.split_first()?;
        if self.dtd.sym_of(first)? != self.dtd.root_sym() || !self.contains(c, self.root()) {
            return None;
        }
        let mut n = self.root();
        for (i, l) in rest.iter().enumerate() {
            let s = self.dtd.sym_of(l)?;
            if i + 2 > self.max_depth as usize {
                return None;
            }
            let next = self.node_id(i + 2, s);
            if !self.children(c, n).contains(&next) {
                return None;
            }
            n = next;
        }
        Some(n)
    }

    /// Nodes of a component, sorted.
    pub fn comp_nodes(&self, c: CompId) -> Vec<NodeId> {
        let mut v: Vec<NodeId> = self.comps[c as usize].nodes.keys().copied().collect();
        v.sort_unstable();
        v
    }

    /// Strict ancestors of `n` in component `c`.
    pub fn ancestors(&self, c: CompId, n: NodeId) -> Vec<NodeId> {
        let mut seen = FxHashSet::default();
        let mut stack = vec![n];
        let mut out = Vec::new();
        while let Some(x) = stack.pop() {
            for &p in self.parents(c, x) {
                if seen.insert(p) {
                    out.push(p);
                    stack.push(p);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Parents of `nodes` along edges of the components built for `filter`.
    pub fn backward(&self, nodes: &[NodeId], filter: &[ExprId]) -> Vec<NodeId> {
        let mut out = BTreeSet::new();
        for &e in filter {
            if let Some(c) = self.comp_of(e) {
                for &n in nodes {
                    out.extend(self.parents(c, n).iter().copied());
                }
            }
        }
        out.into_iter().collect()
    }

    fn admissible(&self, c: CompId, x: NodeId, b: Sym) -> bool {
        let depth = self.depth(x) as u32 + 1;
        let text = b == self.dtd.text_sym();
        let cap = if text { self.max_depth } else { self.max_depth - 1 };
        if depth > cap || !self.dtd.reaches_sym(self.sym(x), b) {
            return false;
        }
        text || match self.comps[c as usize].nodes.get(&x) {
            Some(d) => (d.min[b as usize] as usize) < self.k,
            None => false,
        }
    }

    /// Lowers the counts of `b` from `a`, creating `b` if needed.
    fn relax(&mut self, c: CompId, a: NodeId, b: NodeId) -> bool {
        let sym = self.sym(b) as usize;
        let comp = &mut self.comps[c as usize];
        let mut cand = comp.nodes[&a].min.clone();
        if sym < self.tags {
            cand[sym] = cand[sym].saturating_add(1);
        }
        match comp.nodes.get_mut(&b) {
            None => {
                comp.nodes.insert(b, NodeData { out: Vec::new(), inn: Vec::new(), min: cand, expanded: false });
                true
            }
            Some(d) => {
                let mut lowered = false;
                for (m, x) in d.min.iter_mut().zip(cand.iter()) {
                    if x < m {
                        *m = *x;
                        lowered = true;
                    }
                }
                lowered
            }
        }
    }

    fn add_edge_raw(&mut self, c: CompId, a: NodeId, b: NodeId) {
        let lowered = self.relax(c, a, b);
        let comp = &mut self.comps[c as usize];
        let created = !comp.nodes[&a].out.contains(&b);
        if created {
            comp.nodes.get_mut(&a).expect("source").out.push(b);
            comp.nodes.get_mut(&b).expect("target").inn.push(a);
            comp.edges += 1;
        }
        if created || lowered {
            comp.version += 1;
            self.version += 1;
        }
        let comp = &self.comps[c as usize];
        if lowered && comp.nodes[&b].expanded {
            self.pending.push(Task::Lower(b));
        } else if lowered {
            // Children counts may drop too.
            if !comp.nodes[&b].out.is_empty() {
                self.pending.push(Task::Lower(b));
            }
        }
        if comp.recursive && comp.nodes[&a].expanded && !comp.nodes[&b].expanded {
            self.pending.push(Task::Expand(b));
        }
    }

    fn expand_once(&mut self, c: CompId, x: NodeId) {
        let depth = self.depth(x);
        for b in 0..self.syms as Sym {
            if self.admissible(c, x, b) {
                let y = self.node_id(depth + 1, b);
                self.add_edge_raw(c, x, y);
            }
        }
    }

    fn flush(&mut self, c: CompId) {
        while let Some(t) = self.pending.pop() {
            match t {
                Task::Lower(x) => {
                    let kids = self.comps[c as usize].nodes[&x].out.clone();
                    for y in kids {
                        self.add_edge_raw(c, x, y);
                    }
                    if self.comps[c as usize].nodes[&x].expanded {
                        self.expand_once(c, x);
                    }
                }
                Task::Expand(x) => {
                    let d = self.comps[c as usize].nodes.get_mut(&x).expect("node");
                    if d.expanded {
                        continue;
                    }
                    d.expanded = true;
                    self.expand_once(c, x);
                    for &y in &self.comps[c as usize].nodes[&x].out {
                        if !self.comps[c as usize].nodes[&y].expanded {
                            self.pending.push(Task::Expand(y));
                        }
                    }
                }
            }
        }
    }

    /// Copies into `dst` every edge of `src` lying on a root path to `n`.
    pub(crate) fn copy_closure(&mut self, dst: CompId, src: CompId, n: NodeId) {
        if dst == src {
            return;
        }
        let mut stack = vec![n];
        let mut edges = Vec::new();
        while let Some(y) = stack.pop() {
            if !self.copied.insert((dst, src, y)) {
                continue;
            }
            for &p in self.parents(src, y) {
                edges.push((p, y));
                stack.push(p);
            }
        }
        edges.sort_unstable_by_key(|&(p, y)| (self.depth(p), p, y));
        for (p, y) in edges {
            self.add_edge_raw(dst, p, y);
        }
        self.flush(dst);
    }

    /// Adds the admissible child edges of `n` accepted by `keep`; returns the children.
    pub(crate) fn extend_children(&mut self, c: CompId, n: NodeId, keep: impl Fn(Sym) -> bool) -> Vec<NodeId> {
        let depth = self.depth(n);
        let mut out = Vec::new();
        for b in 0..self.syms as Sym {
            if keep(b) && self.admissible(c, n, b) {
                let y = self.node_id(depth + 1, b);
                self.add_edge_raw(c, n, y);
                out.push(y);
            }
        }
        self.flush(c);
        out
    }

    /// Adds the edge `p -> (depth(p)+1, b)` when admissible.
    pub(crate) fn extend_one(&mut self, c: CompId, p: NodeId, b: Sym) -> Option<NodeId> {
        if !self.admissible(c, p, b) {
            return None;
        }
        let y = self.node_id(self.depth(p) + 1, b);
        self.add_edge_raw(c, p, y);
        self.flush(c);
        Some(y)
    }

    /// Expands everything below `n` in a recursive component.
    pub(crate) fn expand_below(&mut self, c: CompId, n: NodeId) {
        self.pending.push(Task::Expand(n));
        self.flush(c);
    }

    fn words(&self) -> usize {
        (self.max_depth as usize * self.syms as usize).div_ceil(64)
    }

    fn ensure_reach(&mut self, c: CompId) {
        let words = self.words();
        let comp = &mut self.comps[c as usize];
        if matches!(&comp.reach, Some((v, _)) if *v == comp.version) {
            return;
        }
        let mut order: Vec<NodeId> = comp.nodes.keys().copied().collect();
        order.sort_unstable_by(|a, b| b.cmp(a));
        let mut bits: FxHashMap<NodeId, Box<[u64]>> = FxHashMap::default();
        for x in order {
            let mut v = vec![0u64; words].into_boxed_slice();
            v[x as usize / 64] |= 1 << (x % 64);
            for y in &comp.nodes[&x].out {
                for (w, o) in v.iter_mut().zip(bits[y].iter()) {
                    *w |= *o;
                }
            }
            bits.insert(x, v);
        }
        comp.reach = Some((comp.version, bits));
    }

    fn decode(bits: &[u64]) -> Vec<NodeId> {
        let mut out = Vec::new();
        for (i, &w) in bits.iter().enumerate() {
            let mut w = w;
            while w != 0 {
                out.push((i * 64) as NodeId + w.trailing_zeros());
                w &= w - 1;
            }
        }
        out
    }

    /// Nodes reachable from `n` in `c`, including `n`, sorted.
    pub fn reachable(&mut self, c: CompId, n: NodeId) -> Vec<NodeId> {
        self.ensure_reach(c);
        let Some((_, bits)) = &self.comps[c as usize].reach else { unreachable!() };
        bits.get(&n).map(|v| Self::decode(v)).unwrap_or_default()
    }

    /// Union over `sources` of the nodes reachable from each (strictly below
    /// it when `strict`) whose symbol passes `keep`, sorted, together with
    /// whether each source reached a kept node of `good` (any kept node when
    /// `good` is `None`).
    pub(crate) fn reach_union(
        &mut self,
        c: CompId,
        sources: &[NodeId],
        strict: bool,
        keep: impl Fn(Sym) -> bool,
        good: Option<&[NodeId]>,
    ) -> (Vec<NodeId>, Vec<bool>) {
        self.ensure_reach(c);
        let words = self.words();
        let mut mask = vec![0u64; words];
        for s in 0..self.syms as Sym {
            if keep(s) {
                for d in 1..=self.max_depth as usize {
                    let id = self.node_id(d, s) as usize;
                    mask[id / 64] |= 1 << (id % 64);
                }
            }
        }
        let mut good_mask = mask.clone();
        if let Some(g) = good {
            good_mask.fill(0);
            for &n in g {
                if mask[n as usize / 64] & (1 << (n % 64)) != 0 {
                    good_mask[n as usize / 64] |= 1 << (n % 64);
                }
            }
        }
        let comp = &self.comps[c as usize];
        let Some((_, bits)) = &comp.reach else { unreachable!() };
        let mut acc = vec![0u64; words];
        let mut tmp = vec![0u64; words];
        let mut nonempty = Vec::with_capacity(sources.len());
        for &n in sources {
            tmp.fill(0);
            if let Some(d) = comp.nodes.get(&n) {
                let from: Vec<NodeId> = if strict { d.out.clone() } else { vec![n] };
                for y in from {
                    for (w, o) in tmp.iter_mut().zip(bits[&y].iter()) {
                        *w |= *o;
                    }
                }
            }
            let mut any = false;
            for (((a, t), m), g) in acc.iter_mut().zip(&tmp).zip(&mask).zip(&good_mask) {
                *a |= t & m;
                any |= t & g != 0;
            }
            nonempty.push(any);
        }
        (Self::decode(&acc), nonempty)
    }

    pub fn stats(&self) -> CdagStats {
        let mut nodes = FxHashSet::default();
        let mut edges = FxHashSet::default();
        for comp in &self.comps {
            for (&n, d) in &comp.nodes {
                nodes.insert(n);
                for &y in &d.out {
                    edges.insert((n, y));
                }
            }
        }
        CdagStats { nodes: nodes.len(), edges: edges.len(), components: self.comps.len() }
    }

    /// Root paths of `end` (as symbol vectors), or `None` past `limit`.
    pub fn paths(&self, end: End, limit: usize) -> Option<Vec<Vec<Sym>>> {
        let mut out = Vec::new();
        let mut stack: Vec<(NodeId, Vec<Sym>)> = vec![(end.node, vec![self.sym(end.node)])];
        if !self.contains(end.comp, end.node) {
            return Some(out);
        }
        while let Some((n, rev)) = stack.pop() {
            if n == self.root() {
                let mut p = rev;
                p.reverse();
                out.push(p);
                if out.len() > limit {
                    return None;
                }
                continue;
            }
            for &p in self.parents(end.comp, n) {
                let mut r = rev.clone();
                r.push(self.sym(p));
                stack.push((p, r));
            }
        }
        out.sort();
        out.dedup();
        Some(out)
    }

    /// Root paths of `end` that are k-chains, as labels.
    pub fn chains(&self, end: End, limit: usize) -> Option<Vec<Vec<Label>>> {
        let ps = self.paths(end, limit)?;
        Some(
            ps.into_iter()
                .filter(|p| is_k_sym_chain(p, self.k))
                .map(|p| p.iter().map(|&s| self.dtd.label_of(s)).collect())
                .collect(),
        )
    }

    /// One root path of `end`, as labels.
    pub fn some_chain(&self, end: End) -> Vec<Label> {
        let mut rev = vec![end.node];
        let mut n = end.node;
        while n != self.root() {
            match self.parents(end.comp, n).first() {
                Some(&p) => {
                    rev.push(p);
                    n = p;
                }
                None => break,
            }
        }
        rev.iter().rev().map(|&x| self.label(x)).collect()
    }

    /// Graphviz rendering. `marks` annotates nodes (e.g. with roles).
    pub fn to_dot(&self, marks: &[(NodeId, String)]) -> String {
        let mut codes: FxHashMap<(NodeId, NodeId), BTreeSet<ExprId>> = FxHashMap::default();
        let mut nodes = BTreeSet::new();
        for comp in &self.comps {
            for (&n, d) in &comp.nodes {
                nodes.insert(n);
                for &y in &d.out {
                    let e = codes.entry((n, y)).or_default();
                    if let Some(x) = comp.expr {
                        e.insert(x);
                    }
                }
            }
        }
        let mut ann: FxHashMap<NodeId, Vec<&str>> = FxHashMap::default();
        for (n, m) in marks {
            nodes.insert(*n);
            ann.entry(*n).or_default().push(m);
        }
        let mut s = String::from("digraph cdag {\n  node [shape=box];\n");
        for n in &nodes {
            let mut label = format!("{}:{}", self.depth(*n), self.label(*n));
            if let Some(a) = ann.get(n) {
                let mut a = a.clone();
                a.sort_unstable();
                a.dedup();
                label.push_str("\\n");
                label.push_str(&a.join(" "));
            }
            let _ = writeln!(s, "  n{n} [label=\"{label}\"];");
        }
        let mut es: Vec<_> = codes.into_iter().collect();
        es.sort();
        for ((a, b), c) in es {
            let c: Vec<String> = c.iter().map(|x| format!("e{x}")).collect();
            let _ = writeln!(s, "  n{a} -> n{b} [label=\"{}\"];", c.join(","));
        }
        s.push_str("}\n");
        s
    }

    pub fn describe_end(&self, e: End) -> String {
        format!("{}:{}@{}", self.depth(e.node), self.label(e.node), e.comp)
    }

    pub fn describe_update(&self, u: &UpdateEnd) -> String {
        match u {
            UpdateEnd::Split(e) => format!("split {}", self.describe_end(*e)),
            UpdateEnd::Graft { prefix, suffix, open } => format!(
                "{}:{}{}",
                prefix.map(|p| self.describe_end(p)).unwrap_or_default(),
                format_labels(suffix),
                if *open { ".*" } else { "" }
            ),
        }
    }
}
