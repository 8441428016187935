//! Conflict checking between query chains and update chains.
//!
//! An update chain `c:w` affects the chains `c.w'` for every non-empty prefix
//! `w'` of `w`, and every extension of `c.w` when it is open. A return chain,
//! or a used chain standing for a subtree, conflicts when it is a prefix of an
//! affected chain; any other used chain conflicts when it is itself affected.

use std::collections::BTreeSet;
use std::fmt;

use rustc_hash::{FxHashMap, FxHashSet};
use serde::Serialize;

use crate::chains::{
    analyze_query, analyze_update, naive, Cdag, CompId, NodeId, QueryAnalysis, QueryChains, UpdateAnalysis,
    UpdateChain, UpdateEnd, ROOT_COMP,
};
use crate::finite::pair_k;
use crate::lang::{Query, Update};
use crate::schema::{is_prefix, Chain, Dtd, Label};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ConflictKind {
    /// A returned subtree contains an affected node.
    RinU,
    /// An affected node is an ancestor of a returned one.
    UinR,
    /// A used node is affected.
    UinV,
}

impl fmt::Display for ConflictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConflictKind::RinU => "RinU",
            ConflictKind::UinR => "UinR",
            ConflictKind::UinV => "UinV",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Witness {
    pub query_chain: Chain,
    pub update_chain: UpdateChain,
    pub kind: ConflictKind,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} vs {} ({})", self.query_chain, self.update_chain, self.kind)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Independent,
    MaybeDependent,
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VerdictKind::Independent => "independent",
            VerdictKind::MaybeDependent => "maybe-dependent",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub result: VerdictKind,
    pub witnesses: Vec<Witness>,
    pub k_used: usize,
}

impl Verdict {
    fn from_witnesses(witnesses: BTreeSet<Witness>, k_used: usize) -> Verdict {
        let result = if witnesses.is_empty() { VerdictKind::Independent } else { VerdictKind::MaybeDependent };
        Verdict { result, witnesses: witnesses.into_iter().collect(), k_used }
    }

    pub fn is_independent(&self) -> bool {
        self.result == VerdictKind::Independent
    }
}

/// Role of a query chain in a conflict.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QueryRole {
    Return,
    Used { closed: bool },
}

/// Pairs `(c1, c2)` with `c1` a prefix of `c2`.
pub fn confl_plain(t1: &BTreeSet<Chain>, t2: &BTreeSet<Chain>) -> BTreeSet<(Chain, Chain)> {
    let mut out = BTreeSet::new();
    for a in t1 {
        for b in t2 {
            if a.is_prefix_of(b) {
                out.insert((a.clone(), b.clone()));
            }
        }
    }
    out
}

/// Conflict between one query chain and one update chain.
pub fn conflict(c: &[Label], role: QueryRole, u: &UpdateChain) -> Option<ConflictKind> {
    let full = u.full();
    let inside = is_prefix(c, &full);
    let below = u.open && c.len() > full.len() && is_prefix(&full, c);
    match role {
        QueryRole::Return if inside => Some(ConflictKind::RinU),
        QueryRole::Return if below => Some(ConflictKind::UinR),
        QueryRole::Return => None,
        QueryRole::Used { closed: true } => (inside || below).then_some(ConflictKind::UinV),
        QueryRole::Used { closed: false } => {
            ((inside && c.len() > u.prefix.len()) || below).then_some(ConflictKind::UinV)
        }
    }
}

/// Conflict check over explicit chain sets.
pub fn check_sets(q: &QueryChains, u: &BTreeSet<UpdateChain>, k_used: usize, max_witnesses: usize) -> Verdict {
    let mut ws = BTreeSet::new();
    let roles =
        q.r.iter()
            .map(|c| (c, QueryRole::Return))
            .chain(q.v.iter().map(|v| (&v.chain, QueryRole::Used { closed: v.closed })));
    'outer: for (c, role) in roles {
        for uc in u {
            if let Some(kind) = conflict(c.labels(), role, uc) {
                ws.insert(Witness { query_chain: c.clone(), update_chain: uc.clone(), kind });
                if ws.len() >= max_witnesses.max(1) {
                    break 'outer;
                }
            }
        }
    }
    Verdict::from_witnesses(ws, k_used)
}

/// Check with explicitly enumerated chain sets (`k` defaults to the pair bound).
pub fn check_materialized(d: &Dtd, q: &Query, u: &Update, k: Option<usize>) -> Verdict {
    let k = k.unwrap_or_else(|| pair_k(q, u)).max(1);
    let qc = naive::infer_query(d, k, q);
    let uc = naive::infer_update(d, k, u);
    check_sets(&qc, &uc, k, usize::MAX)
}

/// Check with graph-based inference (`k` defaults to the pair bound).
pub fn check(d: &Dtd, q: &Query, u: &Update, k: Option<usize>) -> Verdict {
    let k = k.unwrap_or_else(|| pair_k(q, u)).max(1);
    let qa = analyze_query(d, k, q);
    let ua = analyze_update(d, k, u);
    check_cdag(&qa, &ua, 16)
}

struct Joint {
    parent: FxHashMap<NodeId, NodeId>,
}

impl Joint {
    fn contains(&self, n: NodeId) -> bool {
        self.parent.contains_key(&n)
    }

    fn path(&self, g: &Cdag, n: NodeId) -> Vec<Label> {
        let mut v = vec![n];
        let mut x = n;
        while let Some(&p) = self.parent.get(&x) {
            if p == x {
                break;
            }
            v.push(p);
            x = p;
        }
        v.iter().rev().map(|&y| g.label(y)).collect()
    }
}

/// Nodes with a root path lying in both components.
fn joint(gq: &Cdag, cq: CompId, gu: &Cdag, cu: CompId) -> Joint {
    let root = gq.root();
    let mut parent = FxHashMap::default();
    parent.insert(root, root);
    if cq == ROOT_COMP || cu == ROOT_COMP {
        return Joint { parent };
    }
    let mut queue = vec![root];
    while let Some(x) = queue.pop() {
        let theirs = gu.children(cu, x);
        for &y in gq.children(cq, x) {
            if theirs.contains(&y) && !parent.contains_key(&y) {
                parent.insert(y, x);
                queue.push(y);
            }
        }
    }
    Joint { parent }
}

/// `n` and its ancestors in a component, each with a step towards `n`.
fn toward(g: &Cdag, c: CompId, n: NodeId) -> FxHashMap<NodeId, NodeId> {
    let mut next = FxHashMap::default();
    next.insert(n, n);
    let mut stack = vec![n];
    while let Some(x) = stack.pop() {
        for &p in g.parents(c, x) {
            if let std::collections::hash_map::Entry::Vacant(e) = next.entry(p) {
                e.insert(x);
                stack.push(p);
            }
        }
    }
    next
}

fn path_down(g: &Cdag, next: &FxHashMap<NodeId, NodeId>, from: NodeId) -> Vec<Label> {
    let mut out = Vec::new();
    let mut x = from;
    while let Some(&y) = next.get(&x) {
        if y == x {
            break;
        }
        out.push(g.label(y));
        x = y;
    }
    out
}

/// Strict descendants of `from` in a component, with BFS parents.
fn below(g: &Cdag, c: CompId, from: &[NodeId]) -> FxHashMap<NodeId, NodeId> {
    let mut parent = FxHashMap::default();
    let mut queue: Vec<NodeId> = from.to_vec();
    let start: FxHashSet<NodeId> = from.iter().copied().collect();
    while let Some(x) = queue.pop() {
        for &y in g.children(c, x) {
            if !start.contains(&y) && !parent.contains_key(&y) {
                parent.insert(y, x);
                queue.push(y);
            }
        }
    }
    parent
}

fn path_up(g: &Cdag, parent: &FxHashMap<NodeId, NodeId>, to: NodeId, stop: &dyn Fn(NodeId) -> bool) -> Vec<Label> {
    let mut v = Vec::new();
    let mut x = to;
    while !stop(x) {
        v.push(g.label(x));
        match parent.get(&x) {
            Some(&p) => x = p,
            None => break,
        }
    }
    v.reverse();
    v
}

struct QueryEnds {
    by_comp: Vec<(CompId, FxHashMap<NodeId, Vec<QueryRole>>)>,
}

impl QueryEnds {
    fn new(qa: &QueryAnalysis) -> QueryEnds {
        let mut m: std::collections::BTreeMap<CompId, FxHashMap<NodeId, Vec<QueryRole>>> = Default::default();
        for e in &qa.r {
            m.entry(e.comp).or_default().entry(e.node).or_default().push(QueryRole::Return);
        }
        for v in &qa.v {
            m.entry(v.end.comp).or_default().entry(v.end.node).or_default().push(QueryRole::Used { closed: v.closed });
        }
        QueryEnds { by_comp: m.into_iter().collect() }
    }
}

struct Collector {
    ws: BTreeSet<Witness>,
    max: usize,
}

impl Collector {
    fn full(&self) -> bool {
        self.ws.len() >= self.max
    }

    fn add(&mut self, query_chain: Vec<Label>, prefix: Vec<Label>, suffix: Vec<Label>, open: bool, kind: ConflictKind) {
        if !self.full() {
            let update_chain = UpdateChain { prefix, suffix, open };
            self.ws.insert(Witness { query_chain: Chain(query_chain), update_chain, kind });
        }
    }
}

fn covering_kind(role: QueryRole) -> Option<ConflictKind> {
    match role {
        QueryRole::Return => Some(ConflictKind::RinU),
        QueryRole::Used { closed: true } => Some(ConflictKind::UinV),
        QueryRole::Used { closed: false } => None,
    }
}

fn below_kind(role: QueryRole) -> ConflictKind {
    match role {
        QueryRole::Return => ConflictKind::UinR,
        QueryRole::Used { .. } => ConflictKind::UinV,
    }
}

fn affected_kind(role: QueryRole) -> ConflictKind {
    match role {
        QueryRole::Return => ConflictKind::RinU,
        QueryRole::Used { .. } => ConflictKind::UinV,
    }
}

/// Conflict check over two graphs built for the same DTD and `k`.
pub fn check_cdag(qa: &QueryAnalysis, ua: &UpdateAnalysis, max_witnesses: usize) -> Verdict {
    let (gq, gu) = (&qa.cdag, &ua.cdag);
    let ends = QueryEnds::new(qa);
    let mut joints: FxHashMap<(CompId, CompId), Joint> = FxHashMap::default();
    let mut out = Collector { ws: BTreeSet::new(), max: max_witnesses.max(1) };
    for u in &ua.u {
        if out.full() {
            break;
        }
        // (update comp, anchor node, suffix, open, anchor is the split node)
        let (cu, anchor, suffix, open, split): (CompId, Option<NodeId>, Vec<Label>, bool, bool) = match u {
            UpdateEnd::Split(e) => (e.comp, Some(e.node), vec![gu.label(e.node)], true, true),
            UpdateEnd::Graft { prefix, suffix, open } => {
                (prefix.map_or(ROOT_COMP, |p| p.comp), prefix.map(|p| p.node), suffix.to_vec(), *open, false)
            }
        };
        let up = anchor.map(|a| toward(gu, cu, a)).unwrap_or_default();
        for (cq, roles) in &ends.by_comp {
            let j = joints.entry((*cq, cu)).or_insert_with(|| joint(gq, *cq, gu, cu));
            // Query chains that are prefixes of the anchor chain.
            for (&n, rs) in roles {
                if !up.contains_key(&n) || !j.contains(n) {
                    continue;
                }
                for &role in rs {
                    let kind = if split && n == anchor.expect("split anchor") {
                        Some(affected_kind(role))
                    } else {
                        covering_kind(role)
                    };
                    if let Some(kind) = kind {
                        let qc = j.path(gq, n);
                        let mut full = qc.clone();
                        full.extend(path_down(gu, &up, n));
                        let (prefix, sfx) = if split {
                            let last = full.pop().expect("non-empty");
                            (full, vec![last])
                        } else {
                            (full, suffix.clone())
                        };
                        out.add(qc, prefix, sfx, open, kind);
                    }
                }
            }
            // Query chains running through the suffix and below.
            let (start, base, rest): (Vec<NodeId>, Vec<Label>, &[Label]) = match anchor {
                Some(a) if split => {
                    if !j.contains(a) {
                        continue;
                    }
                    (vec![a], j.path(gq, a), &[])
                }
                Some(a) => {
                    if !j.contains(a) {
                        continue;
                    }
                    (vec![a], j.path(gq, a), &suffix[..])
                }
                None => {
                    let root = gq.root();
                    if suffix.first() != Some(&gq.label(root)) {
                        continue;
                    }
                    (vec![root], Vec::new(), &suffix[1..])
                }
            };
            let update_chain = |base: &Vec<Label>| -> (Vec<Label>, Vec<Label>) {
                if split {
                    let mut p = base.clone();
                    let last = p.pop().expect("non-empty");
                    (p, vec![last])
                } else {
                    (base.clone(), suffix.clone())
                }
            };
            let (up_prefix, up_suffix) = update_chain(&base);
            let mut level = start.clone();
            let mut walk: FxHashMap<NodeId, NodeId> = FxHashMap::default();
            let prefix_of_walk = |walk: &FxHashMap<NodeId, NodeId>, n: NodeId, starts: &[NodeId]| -> Vec<Label> {
                let mut v = base.clone();
                if anchor.is_none() && starts.contains(&gq.root()) {
                    v.push(gq.label(gq.root()));
                }
                v.extend(path_up(gq, walk, n, &|x| starts.contains(&x)));
                v
            };
            if anchor.is_none() {
                for &role in roles.get(&gq.root()).map(Vec::as_slice).unwrap_or(&[]) {
                    let qc = vec![gq.label(gq.root())];
                    out.add(qc, up_prefix.clone(), up_suffix.clone(), open, affected_kind(role));
                }
            }
            for l in rest {
                let mut next = Vec::new();
                for &x in &level {
                    for &y in gq.children(*cq, x) {
                        if gq.label(y) == *l && !walk.contains_key(&y) {
                            walk.insert(y, x);
                            next.push(y);
                        }
                    }
                }
                for &y in &next {
                    for &role in roles.get(&y).map(Vec::as_slice).unwrap_or(&[]) {
                        let qc = prefix_of_walk(&walk, y, &start);
                        out.add(qc, up_prefix.clone(), up_suffix.clone(), open, affected_kind(role));
                    }
                }
                level = next;
            }
            if open && !level.is_empty() {
                let desc = below(gq, *cq, &level);
                for (&n, rs) in roles {
                    if !desc.contains_key(&n) {
                        continue;
                    }
                    for &role in rs {
                        let mut qc = prefix_of_walk(&walk, *level_root(&desc, &level, n), &start);
                        qc.extend(path_up(gq, &desc, n, &|x| level.contains(&x)));
                        out.add(qc, up_prefix.clone(), up_suffix.clone(), open, below_kind(role));
                    }
                }
            }
        }
    }
    Verdict::from_witnesses(out.ws, gq.k())
}

/// The start node a BFS descendant was reached from.
fn level_root<'a>(desc: &FxHashMap<NodeId, NodeId>, level: &'a [NodeId], n: NodeId) -> &'a NodeId {
    let mut x = n;
    loop {
        if let Some(p) = level.iter().find(|&&s| s == x) {
            return p;
        }
        match desc.get(&x) {
            Some(&p) => x = p,
            None => return &level[0],
        }
    }
}

/// Query and update analyses over the same `k`.
pub struct Analysis {
    pub query: QueryAnalysis,
    pub update: UpdateAnalysis,
    pub verdict: Verdict,
}

pub fn analyze(d: &Dtd, q: &Query, u: &Update, k: usize, max_witnesses: usize) -> Analysis {
    let query = analyze_query(d, k, q);
    let update = analyze_update(d, k, u);
    let verdict = check_cdag(&query, &update, max_witnesses);
    Analysis { query, update, verdict }
}

/// Ends of a query analysis by role, for display.
pub fn query_marks(qa: &QueryAnalysis) -> Vec<(NodeId, String)> {
    let mut v: Vec<(NodeId, String)> = qa.r.iter().map(|e| (e.node, format!("R{}", e.comp))).collect();
    v.extend(qa.v.iter().map(|x| (x.end.node, format!("{}{}", if x.closed { "V*" } else { "V" }, x.end.comp))));
    v
}

pub fn update_marks(ua: &UpdateAnalysis) -> Vec<(NodeId, String)> {
    let g = &ua.cdag;
    ua.u.iter()
        .filter_map(|u| match u {
            UpdateEnd::Split(e) => Some((e.node, format!("U{}:{}", e.comp, g.label(e.node)))),
            UpdateEnd::Graft { prefix: Some(p), suffix, .. } => {
                Some((p.node, format!("U{}:{}", p.comp, crate::schema::format_labels(suffix))))
            }
            UpdateEnd::Graft { prefix: None, .. } => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::naive;
    use crate::fixtures;
    use crate::lang::{parse_query, parse_update};
    use crate::schema::chain;

    fn uc(s: &str, open: bool) -> UpdateChain {
        let (p, x) = s.split_once(':').unwrap();
        UpdateChain { prefix: chain(p).0, suffix: chain(x).0, open }
    }

    #[test]
    fn conflict_kinds() {
        let del = uc("r.a:c", true);
        assert_eq!(conflict(chain("r.a.c.f").labels(), QueryRole::Return, &del), Some(ConflictKind::UinR));
        assert_eq!(conflict(chain("r.a").labels(), QueryRole::Return, &del), Some(ConflictKind::RinU));
        assert_eq!(conflict(chain("r.a.b").labels(), QueryRole::Return, &del), None);
        assert_eq!(conflict(chain("r.a").labels(), QueryRole::Used { closed: false }, &del), None);
        assert_eq!(conflict(chain("r.a").labels(), QueryRole::Used { closed: true }, &del), Some(ConflictKind::UinV));
        assert_eq!(
            conflict(chain("r.a.c").labels(), QueryRole::Used { closed: false }, &del),
            Some(ConflictKind::UinV)
        );
        let closed = uc("r.a:c", false);
        assert_eq!(conflict(chain("r.a.c.f").labels(), QueryRole::Return, &closed), None);
    }

    #[test]
    fn fixtures_match_expected() {
        for f in fixtures::ALL {
            let (d, q, u) = (f.dtd(), f.query(), f.update());
            let g = check(&d, &q, &u, None);
            let m = check_materialized(&d, &q, &u, None);
            assert_eq!(g.result, f.expected, "{} (graph): {:?}", f.name, g.witnesses);
            assert_eq!(m.result, f.expected, "{} (explicit): {:?}", f.name, m.witnesses);
        }
    }

    #[test]
    fn graph_matches_explicit() {
        for f in fixtures::ALL {
            let (d, q, u) = (f.dtd(), f.query(), f.update());
            let k = pair_k(&q, &u);
            let qa = analyze_query(&d, k, &q).materialize(1 << 20).unwrap();
            let qn = naive::infer_query(&d, k, &q);
            assert!(qn.r == qa.r, "{}: r {:?} vs {:?}", f.name, qn.r, qa.r);
            assert!(qn.v == qa.v, "{}: v {:?} vs {:?}", f.name, qn.v, qa.v);
            assert!(qn.e == qa.e, "{}: e {:?} vs {:?}", f.name, qn.e, qa.e);
            let ua = analyze_update(&d, k, &u).materialize(1 << 20).unwrap();
            let un = naive::infer_update(&d, k, &u);
            assert!(un == ua, "{}: u {:?} vs {:?}", f.name, un, ua);
        }
    }

    #[test]
    fn d1_witness() {
        let f = fixtures::get("d1").unwrap();
        let v = check(&f.dtd(), &f.query(), &f.update(), Some(2));
        let w =
            Witness { query_chain: chain("r.a.b"), update_chain: uc("r.a.b.f.a:c", true), kind: ConflictKind::RinU };
        assert!(v.witnesses.contains(&w), "{:?}", v.witnesses);
        let v1 = check(&f.dtd(), &f.query(), &f.update(), Some(1));
        assert!(v1.is_independent());
        for k in 2..6 {
            assert!(!check(&f.dtd(), &f.query(), &f.update(), Some(k)).is_independent());
        }
    }

    #[test]
    fn fig1_chains() {
        let f = fixtures::get("fig1").unwrap();
        let d = f.dtd();
        let qa = analyze_query(&d, 2, &f.query()).materialize(1000).unwrap();
        assert_eq!(qa.r, BTreeSet::from([chain("doc.a.c")]));
        let ua = analyze_update(&d, 2, &f.update()).materialize(1000).unwrap();
        assert_eq!(ua, BTreeSet::from([uc("doc.b:c", true)]));
    }

    #[test]
    fn bib_update_chains() {
        let d = fixtures::get("bib_title").unwrap().dtd();
        let u = parse_update(fixtures::BIB_INSERT_AUTHOR).unwrap();
        let ua = analyze_update(&d, pair_k(&parse_query("//title").unwrap(), &u), &u).materialize(1000).unwrap();
        let full: BTreeSet<String> = ua.iter().map(|c| c.to_string()).collect();
        assert_eq!(
            full,
            BTreeSet::from(["bib.book:author.first.#text".to_string(), "bib.book:author.second.#text".to_string()])
        );
    }

    #[test]
    fn sibling_chains() {
        let f = fixtures::get("sibling").unwrap();
        let qc = analyze_query(&f.dtd(), 1, &f.query()).materialize(1000).unwrap();
        assert_eq!(qc.r, BTreeSet::from([chain("a.c")]));
        assert!(qc.used_chains().contains(&chain("a.b")));
        let f = fixtures::get("sibling_rec").unwrap();
        let qc = analyze_query(&f.dtd(), 2, &f.query()).materialize(1000).unwrap();
        assert!(qc.r.contains(&chain("a.b.b")), "{:?}", qc.r);
        assert!(qc.used_chains().contains(&chain("a.b.c")));
    }

    #[test]
    fn nest_insert_chain() {
        let d = fixtures::get("nest_insert_child").unwrap().dtd();
        let u = parse_update(fixtures::NEST_INSERT).unwrap();
        assert_eq!(crate::finite::update_k(&u).k(), 3);
        let ua = analyze_update(&d, 3, &u).materialize(1000).unwrap();
        assert!(ua.iter().any(|c| c.full() == chain("a.b.b.b.c").0), "{ua:?}");
    }
}
