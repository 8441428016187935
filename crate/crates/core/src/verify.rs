//! Exhaustive dynamic checking of static verdicts over small valid documents.
//!
//! Besides the plain soundness check (a static `Independent` must never meet a
//! document where the update changes the query result), each instance can be
//! checked against the typing guarantees of inferred chains: a projection on
//! query chains preserves the result, update-involved nodes are typed by update
//! chains, and for independent pairs the two node sets are disjoint.

use serde::Serialize;

use crate::chains::{analyze_query, analyze_update, ElemChain, End, QueryAnalysis, UpdateAnalysis, UpdateEnd};
use crate::evaluator::{apply_update, involved_locations, run_query};
use crate::finite::pair_k;
use crate::independence::{check, VerdictKind};
use crate::lang::{Query, Update};
use crate::par::{self, Exec};
use crate::schema::{is_k_chain, is_prefix, Dtd, Label};
use crate::xmlstore::{enumerate_valid, value_equivalent, EnumBounds, Loc, Tree};

/// What happened on one document.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// Query or update evaluation failed (e.g. a non-singleton target).
    EvalError,
    /// The updated document is not valid.
    InvalidResult,
    Unchanged,
    Changed,
}

pub fn run_instance(d: &Dtd, t: &Tree, q: &Query, u: &Update) -> Outcome {
    let Ok((s1, r1)) = run_query(t, q) else { return Outcome::EvalError };
    let Ok(applied) = apply_update(t, u) else { return Outcome::EvalError };
    if !applied.tree.is_valid(d) {
        return Outcome::InvalidResult;
    }
    let Ok((s2, r2)) = run_query(&applied.tree, q) else { return Outcome::EvalError };
    if value_equivalent(&s1, &r1, &s2, &r2) {
        Outcome::Unchanged
    } else {
        Outcome::Changed
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DynamicStats {
    pub instances: usize,
    pub eval_errors: usize,
    pub invalid_results: usize,
    pub counterexamples: usize,
    /// Smallest-index document on which the result changed.
    pub first_counterexample: Option<String>,
}

impl DynamicStats {
    pub fn applicable(&self) -> usize {
        self.instances - self.eval_errors - self.invalid_results
    }

    fn add(&mut self, o: Outcome, t: &Tree) {
        self.instances += 1;
        match o {
            Outcome::EvalError => self.eval_errors += 1,
            Outcome::InvalidResult => self.invalid_results += 1,
            Outcome::Unchanged => {}
            Outcome::Changed => {
                self.counterexamples += 1;
                if self.first_counterexample.is_none() {
                    self.first_counterexample = Some(t.to_xml());
                }
            }
        }
    }

    /// Merges a later shard into this one.
    fn merge(mut self, later: DynamicStats) -> DynamicStats {
        self.instances += later.instances;
        self.eval_errors += later.eval_errors;
        self.invalid_results += later.invalid_results;
        self.counterexamples += later.counterexamples;
        if self.first_counterexample.is_none() {
            self.first_counterexample = later.first_counterexample;
        }
        self
    }
}

fn shard_count(n: usize, exec: Exec) -> usize {
    match exec {
        Exec::Sequential => 1,
        Exec::Parallel => (par::thread_cap().unwrap_or(16) * 4).min(n.max(1)),
    }
}

/// Runs every document; shards are merged in document order so the report
/// does not depend on scheduling.
pub fn run_all(d: &Dtd, trees: &[Tree], q: &Query, u: &Update, exec: Exec) -> DynamicStats {
    let shards = par::shards(trees.len(), shard_count(trees.len(), exec));
    par::map(exec, &shards, |r| {
        let mut s = DynamicStats::default();
        for t in &trees[r.clone()] {
            s.add(run_instance(d, t, q, u), t);
        }
        s
    })
    .into_iter()
    .fold(DynamicStats::default(), DynamicStats::merge)
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub verdict: VerdictKind,
    pub k: usize,
    pub max_depth: usize,
    pub max_repeat: usize,
    #[serde(flatten)]
    pub stats: DynamicStats,
    /// False only for a static `Independent` contradicted by a document.
    pub sound: bool,
    pub note: Option<String>,
}

pub fn verify(d: &Dtd, q: &Query, u: &Update, bounds: &EnumBounds, exec: Exec) -> VerifyReport {
    let verdict = check(d, q, u, None);
    let trees = enumerate_valid(d, bounds);
    let stats = run_all(d, &trees, q, u, exec);
    let note = if stats.instances == 0 {
        Some("no valid document within bounds".to_string())
    } else if stats.applicable() == 0 {
        Some("no applicable instance".to_string())
    } else {
        None
    };
    let sound = !(verdict.is_independent() && stats.counterexamples > 0);
    VerifyReport {
        verdict: verdict.result,
        k: verdict.k_used,
        max_depth: bounds.max_depth,
        max_repeat: bounds.max_repeat,
        stats,
        sound,
        note,
    }
}

/// Inferred chains with membership tests on concrete label paths.
pub struct ChainOracle {
    pub query: QueryAnalysis,
    pub update: UpdateAnalysis,
    pub k: usize,
}

impl ChainOracle {
    /// Analyses at `k_q + k_u + max_depth`, so every chain of a document of
    /// the given depth, and of anything inserted below it, is representable.
    pub fn new(d: &Dtd, q: &Query, u: &Update, max_depth: usize) -> ChainOracle {
        let k = pair_k(q, u) + max_depth;
        ChainOracle { query: analyze_query(d, k, q), update: analyze_update(d, k, u), k }
    }

    fn ends_at(&self, g: &crate::chains::Cdag, e: End, c: &[Label]) -> bool {
        let n = g.depth(e.node);
        c.len() >= n && is_k_chain(&c[..n], self.k) && g.path_end(e.comp, &c[..n]) == Some(e.node)
    }

    fn exact(&self, e: End, c: &[Label]) -> bool {
        let g = &self.query.cdag;
        c.len() == g.depth(e.node) && self.ends_at(g, e, c)
    }

    /// `c` is a returned chain or lies below one.
    pub fn in_returned(&self, c: &[Label]) -> bool {
        self.query.r.iter().any(|&e| self.ends_at(&self.query.cdag, e, c))
    }

    /// `c` is a used chain, or lies below a closed one.
    pub fn in_used(&self, c: &[Label]) -> bool {
        self.query.v.iter().any(
            |v| {
                if v.closed {
                    self.ends_at(&self.query.cdag, v.end, c)
                } else {
                    self.exact(v.end, c)
                }
            },
        )
    }

    /// `w` (a path inside a constructed element) is covered by an element chain.
    pub fn in_elements(&self, w: &[Label]) -> bool {
        self.query.e.iter().any(|e: &ElemChain| is_prefix(w, &e.labels) || (e.open && is_prefix(&e.labels, w)))
    }

    /// `c` is `p.s` with `p:s'` an update chain and `s` a non-empty prefix of
    /// `s'` (or an extension of it when open).
    pub fn in_update(&self, c: &[Label]) -> bool {
        let g = &self.update.cdag;
        let rest_ok = |rest: &[Label], suffix: &[Label], open: bool| {
            !rest.is_empty() && (is_prefix(rest, suffix) || (open && is_prefix(suffix, rest)))
        };
        self.update.u.iter().any(|u| match u {
            UpdateEnd::Split(e) => {
                let n = g.depth(e.node);
                c.len() >= n && is_k_chain(&c[..n], self.k) && g.path_end(e.comp, &c[..n]) == Some(e.node)
            }
            UpdateEnd::Graft { prefix: None, suffix, open } => rest_ok(c, suffix, *open),
            UpdateEnd::Graft { prefix: Some(p), suffix, open } => {
                let n = g.depth(p.node);
                c.len() >= n
                    && is_k_chain(&c[..n], self.k)
                    && g.path_end(p.comp, &c[..n]) == Some(p.node)
                    && rest_ok(&c[n..], suffix, *open)
            }
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PropertyStats {
    pub checked: usize,
    /// Query result changed on the projection to query chains.
    pub projection_failures: usize,
    /// A constructed result node escaped the element chains.
    pub element_failures: usize,
    /// An involved location had no update chain.
    pub typing_failures: usize,
    /// Independent pair with an involved location typed by query chains.
    pub overlap_failures: usize,
}

impl PropertyStats {
    pub fn failures(&self) -> usize {
        self.projection_failures + self.element_failures + self.typing_failures + self.overlap_failures
    }

    fn merge(mut self, o: PropertyStats) -> PropertyStats {
        self.checked += o.checked;
        self.projection_failures += o.projection_failures;
        self.element_failures += o.element_failures;
        self.typing_failures += o.typing_failures;
        self.overlap_failures += o.overlap_failures;
        self
    }
}

fn reachable(t: &Tree, store: &crate::xmlstore::Store, l: Loc) -> bool {
    store.contains(l) && store.component_root(l) == t.root
}

fn elem_paths(store: &crate::xmlstore::Store, l: Loc, path: &mut Vec<Label>, out: &mut Vec<Vec<Label>>) {
    path.push(store.label(l));
    out.push(path.clone());
    for &c in store.children(l) {
        elem_paths(store, c, path, out);
    }
    path.pop();
}

/// Checks one document. Instances whose update fails or breaks validity are
/// not counted.
pub fn check_properties(d: &Dtd, t: &Tree, q: &Query, u: &Update, o: &ChainOracle, independent: bool) -> PropertyStats {
    let mut st = PropertyStats::default();
    let Ok(applied) = apply_update(t, u) else { return st };
    if !applied.tree.is_valid(d) {
        return st;
    }
    let Ok((s1, r1)) = run_query(t, q) else { return st };
    st.checked = 1;

    let mut keep = t.locations_typed_by(|c| o.in_returned(c), true);
    keep.extend(t.locations_typed_by(|c| o.in_used(c), true));
    let projected = t.project(&keep);
    match run_query(&projected, q) {
        Ok((s2, r2)) if value_equivalent(&s1, &r1, &s2, &r2) => {}
        _ => st.projection_failures += 1,
    }

    let original = t.store.len();
    for &l in &r1 {
        if (l.0 as usize) < original {
            continue;
        }
        let mut paths = Vec::new();
        elem_paths(&s1, l, &mut Vec::new(), &mut paths);
        if paths.iter().any(|w| !o.in_elements(w)) {
            st.element_failures += 1;
            break;
        }
    }

    let before = &t.store;
    let after = &applied.tree.store;
    let in_query = |c: &[Label]| o.in_returned(c) || o.in_used(c);
    let mut typing_bad = false;
    let mut overlap_bad = false;
    for l in involved_locations(&applied.pending_store, &applied.commands) {
        for store in [before, after] {
            if !reachable(t, store, l) {
                continue;
            }
            let c = store.chain_of(l);
            typing_bad |= !o.in_update(&c);
            overlap_bad |= independent && in_query(&c);
        }
    }
    st.typing_failures += usize::from(typing_bad);
    st.overlap_failures += usize::from(overlap_bad);
    st
}

/// Property checks over every document, sharded like [`run_all`].
pub fn check_properties_all(
    d: &Dtd,
    trees: &[Tree],
    q: &Query,
    u: &Update,
    o: &ChainOracle,
    independent: bool,
    exec: Exec,
) -> PropertyStats {
    let shards = par::shards(trees.len(), shard_count(trees.len(), exec));
    par::map(exec, &shards, |r| {
        trees[r.clone()]
            .iter()
            .map(|t| check_properties(d, t, q, u, o, independent))
            .fold(PropertyStats::default(), PropertyStats::merge)
    })
    .into_iter()
    .fold(PropertyStats::default(), PropertyStats::merge)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn bounds() -> EnumBounds {
        EnumBounds::new(4, 2)
    }

    #[test]
    fn fig1_is_dynamically_independent() {
        let f = fixtures::get("fig1").unwrap();
        let r = verify(&f.dtd(), &f.query(), &f.update(), &bounds(), Exec::Sequential);
        assert_eq!(r.verdict, VerdictKind::Independent);
        assert!(r.stats.applicable() > 0);
        assert_eq!(r.stats.counterexamples, 0);
        assert!(r.sound);
    }

    #[test]
    fn control_has_counterexample() {
        let f = fixtures::get("control").unwrap();
        let r = verify(&f.dtd(), &f.query(), &f.update(), &bounds(), Exec::best());
        assert_eq!(r.verdict, VerdictKind::MaybeDependent);
        assert!(r.stats.counterexamples >= 1);
        assert!(r.stats.first_counterexample.is_some());
    }

    #[test]
    fn self_delete_has_counterexample() {
        let f = fixtures::get("control").unwrap();
        let q = crate::lang::parse_query("//c").unwrap();
        let u = crate::lang::parse_update("delete //c").unwrap();
        let r = verify(&f.dtd(), &q, &u, &bounds(), Exec::Sequential);
        assert_eq!(r.verdict, VerdictKind::MaybeDependent);
        assert!(r.stats.counterexamples >= 1);
    }

    #[test]
    fn inapplicable_update_is_reported() {
        let f = fixtures::get("fig1").unwrap();
        let u = crate::lang::parse_update("rename //c as a").unwrap();
        let d = f.dtd();
        let trees = enumerate_valid(&d, &EnumBounds::new(3, 2));
        let two_c: Vec<Tree> = trees
            .into_iter()
            .filter(|t| t.locations().iter().filter(|&&l| t.store.label(l) == Label::tag("c")).count() >= 2)
            .collect();
        let s = run_all(&d, &two_c, &f.query(), &u, Exec::Sequential);
        assert_eq!(s.applicable(), 0);
        let r = verify(&d, &f.query(), &u, &EnumBounds::new(2, 2), Exec::Sequential);
        assert_eq!(r.note.as_deref(), Some("no applicable instance"));
    }

    #[test]
    fn sharding_is_deterministic() {
        let f = fixtures::get("control").unwrap();
        let d = f.dtd();
        let trees = enumerate_valid(&d, &bounds());
        let a = run_all(&d, &trees, &f.query(), &f.update(), Exec::Sequential);
        let b = run_all(&d, &trees, &f.query(), &f.update(), Exec::Parallel);
        assert_eq!(a, b);
    }

    #[test]
    fn fixture_properties_hold() {
        for f in fixtures::ALL {
            let (d, q, u) = (f.dtd(), f.query(), f.update());
            let b = EnumBounds::new(4, 2);
            let trees = enumerate_valid(&d, &b);
            let o = ChainOracle::new(&d, &q, &u, b.max_depth);
            let indep = check(&d, &q, &u, None).is_independent();
            let p = check_properties_all(&d, &trees, &q, &u, &o, indep, Exec::best());
            assert_eq!(p.failures(), 0, "{}: {:?}", f.name, p);
            let s = run_all(&d, &trees, &q, &u, Exec::best());
            assert!(!(indep && s.counterexamples > 0), "{}: {:?}", f.name, s);
        }
    }
}
