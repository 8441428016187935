//! Bounds on the number of label repetitions a query or update can observe.
//!
//! `tag_frequency(a, e)` bounds how many `a`-typed nodes a single evaluation
//! step of `e` can move across without recursive axes; `recursive_steps(e)`
//! counts recursive axis steps. Their sum, maximised over labels, is the `k`
//! for which k-chains suffice.

use std::collections::BTreeSet;

use crate::chains::{analyze_query, TooLarge};
use crate::lang::{Axis, NodeTest, Query, QueryKind, Update, UpdateKind};
use crate::schema::{Dtd, Label, Tag};

/// Tag argument of [`tag_frequency`]; `Other` stands for any tag not
/// mentioned by the expression.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FreqTag<'a> {
    Named(&'a Tag),
    Other,
}

impl FreqTag<'_> {
    fn is(&self, t: &Tag) -> bool {
        matches!(self, FreqTag::Named(x) if *x == t)
    }
}

fn step_freq(a: &FreqTag, axis: Axis, test: &NodeTest) -> usize {
    if axis.is_recursive() {
        return 0;
    }
    match test {
        // A bare variable reference moves nowhere.
        NodeTest::Any if axis == Axis::SelfAxis => 0,
        NodeTest::Any => 1,
        NodeTest::Tag(t) if a.is(t) => 1,
        _ => 0,
    }
}

pub fn query_frequency(a: &FreqTag, q: &Query) -> usize {
    match &q.kind {
        QueryKind::Empty | QueryKind::Str(_) => 0,
        QueryKind::Step { axis, test, .. } => step_freq(a, *axis, test),
        QueryKind::Seq(x, y) => query_frequency(a, x).max(query_frequency(a, y)),
        QueryKind::If { cond, then, els } => {
            query_frequency(a, cond).max(query_frequency(a, then)).max(query_frequency(a, els))
        }
        QueryKind::For { bind, body, .. } | QueryKind::Let { bind, body, .. } => {
            query_frequency(a, bind) + query_frequency(a, body)
        }
        QueryKind::Elem(t, c) => query_frequency(a, c) + usize::from(a.is(t)),
    }
}

pub fn update_frequency(a: &FreqTag, u: &Update) -> usize {
    match &u.kind {
        UpdateKind::Empty => 0,
        UpdateKind::Seq(x, y) => update_frequency(a, x).max(update_frequency(a, y)),
        UpdateKind::If { cond, then, els } => {
            query_frequency(a, cond).max(update_frequency(a, then)).max(update_frequency(a, els))
        }
        UpdateKind::For { bind, body, .. } | UpdateKind::Let { bind, body, .. } => {
            query_frequency(a, bind) + update_frequency(a, body)
        }
        UpdateKind::Delete(t) => query_frequency(a, t),
        UpdateKind::Rename(t, b) => query_frequency(a, t) + usize::from(a.is(b)),
        UpdateKind::Insert { source, target, .. } => query_frequency(a, source) + query_frequency(a, target),
        UpdateKind::Replace { target, source } => query_frequency(a, target) + query_frequency(a, source),
    }
}

pub fn query_recursion(q: &Query) -> usize {
    match &q.kind {
        QueryKind::Empty | QueryKind::Str(_) => 0,
        QueryKind::Step { axis, .. } => usize::from(axis.is_recursive()),
        QueryKind::Seq(x, y) => query_recursion(x).max(query_recursion(y)),
        QueryKind::If { cond, then, els } => query_recursion(cond).max(query_recursion(then)).max(query_recursion(els)),
        QueryKind::For { bind, body, .. } | QueryKind::Let { bind, body, .. } => {
            query_recursion(bind) + query_recursion(body)
        }
        QueryKind::Elem(_, c) => query_recursion(c),
    }
}

pub fn update_recursion(u: &Update) -> usize {
    match &u.kind {
        UpdateKind::Empty => 0,
        UpdateKind::Seq(x, y) => update_recursion(x).max(update_recursion(y)),
        UpdateKind::If { cond, then, els } => {
            query_recursion(cond).max(update_recursion(then)).max(update_recursion(els))
        }
        UpdateKind::For { bind, body, .. } | UpdateKind::Let { bind, body, .. } => {
            query_recursion(bind) + update_recursion(body)
        }
        UpdateKind::Delete(t) | UpdateKind::Rename(t, _) => query_recursion(t),
        UpdateKind::Insert { source, target, .. } => query_recursion(source) + query_recursion(target),
        UpdateKind::Replace { target, source } => query_recursion(target) + query_recursion(source),
    }
}

/// Components of a bound: `k = frequency + recursion`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KBound {
    pub frequency: usize,
    pub recursion: usize,
}

impl KBound {
    pub fn k(&self) -> usize {
        self.frequency + self.recursion
    }
}

fn max_frequency(tags: &BTreeSet<Tag>, f: impl Fn(&FreqTag) -> usize) -> usize {
    tags.iter().map(|t| f(&FreqTag::Named(t))).chain(std::iter::once(f(&FreqTag::Other))).max().unwrap_or(0)
}

pub fn query_k(q: &Query) -> KBound {
    KBound { frequency: max_frequency(&q.tags(), |a| query_frequency(a, q)), recursion: query_recursion(q) }
}

pub fn update_k(u: &Update) -> KBound {
    KBound { frequency: max_frequency(&u.tags(), |a| update_frequency(a, u)), recursion: update_recursion(u) }
}

/// `k` used to analyse a query/update pair (at least 1).
pub fn pair_k(q: &Query, u: &Update) -> usize {
    (query_k(q).k() + update_k(u).k()).max(1)
}

/// One-step folds `c.a.c'.a.c'' -> c.a.c''` of a chain.
pub fn fold(labels: &[Label]) -> BTreeSet<Vec<Label>> {
    let mut out = BTreeSet::new();
    for i in 0..labels.len() {
        if labels[i].is_text() {
            continue;
        }
        for j in i + 1..labels.len() {
            if labels[j] == labels[i] {
                let mut v = labels[..=i].to_vec();
                v.extend_from_slice(&labels[j + 1..]);
                out.insert(v);
            }
        }
    }
    out
}

/// Whether `from` folds to `to` through chains all satisfying `allowed`.
pub fn folds_to(from: &[Label], to: &[Label], allowed: &dyn Fn(&[Label]) -> bool) -> bool {
    let mut seen: BTreeSet<Vec<Label>> = BTreeSet::new();
    let mut stack = vec![from.to_vec()];
    while let Some(c) = stack.pop() {
        if c == to {
            return true;
        }
        if !seen.insert(c.clone()) || c.len() <= to.len() {
            continue;
        }
        for f in fold(&c) {
            if allowed(&f) {
                stack.push(f);
            }
        }
    }
    false
}

/// Breadth-first folding of `from` through chains satisfying `allowed`,
/// stopping at the first chain satisfying `target`.
pub fn folds_into(from: &[Label], allowed: &dyn Fn(&[Label]) -> bool, target: &dyn Fn(&[Label]) -> bool) -> bool {
    let mut seen: BTreeSet<Vec<Label>> = BTreeSet::new();
    let mut queue = std::collections::VecDeque::from([from.to_vec()]);
    while let Some(c) = queue.pop_front() {
        if target(&c) {
            return true;
        }
        for f in fold(&c) {
            if allowed(&f) && seen.insert(f.clone()) {
                queue.push_back(f);
            }
        }
    }
    false
}

/// Chains inferred for `q` at `big_k` that do not fold, through chains
/// inferred at `big_k`, onto a chain inferred at `k_q`. Returned and used
/// chains are pooled.
pub fn unfolded_chains(d: &Dtd, q: &Query, big_k: usize, limit: usize) -> Result<Vec<Vec<Label>>, TooLarge> {
    let pool = |k: usize| -> Result<BTreeSet<Vec<Label>>, TooLarge> {
        let qc = analyze_query(d, k, q).materialize(limit)?;
        Ok(qc.r.iter().chain(qc.used_chains().iter()).map(|c| c.0.clone()).collect())
    };
    let small = pool(query_k(q).k().max(1))?;
    let big = pool(big_k)?;
    Ok(big.iter().filter(|c| !folds_into(c, &|f| big.contains(f), &|f| small.contains(f))).cloned().collect())
}

/// Upper bound on the nodes of the chain graph for `k`.
pub fn node_bound(d: &Dtd, k: usize) -> usize {
    let s = d.size();
    (k * s + 2) * (s + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse_query, parse_update};
    use crate::schema::chain;

    #[test]
    fn path_bounds() {
        assert_eq!(query_k(&parse_query("/r/a/b/f/a").unwrap()).k(), 2);
        assert_eq!(query_k(&parse_query("/r/a/b/f/*").unwrap()).k(), 2);
        assert_eq!(query_k(&parse_query("/descendant::b/descendant::c/descendant::e").unwrap()).k(), 3);
        assert_eq!(query_k(&parse_query("/descendant::b/a/b").unwrap()).k(), 2);
        let q = parse_query("/r/a/b/f/a").unwrap();
        assert_eq!(query_frequency(&FreqTag::Named(&Tag::new("b")), &q), 1);
    }

    #[test]
    fn nested_for_frequency() {
        let q = parse_query("for $x in /a/a return for $y in /a/b return ($x, $y)").unwrap();
        assert_eq!(query_frequency(&FreqTag::Named(&Tag::new("a")), &q), 3);
    }

    #[test]
    fn insert_bound() {
        let u = parse_update("for $x in /a/b return insert <b><b><c/></b></b> into $x").unwrap();
        assert_eq!(update_k(&u).k(), 3);
    }

    #[test]
    fn fixture_chains_fold_to_bound() {
        for f in crate::fixtures::ALL {
            let (d, q) = (f.dtd(), f.query());
            let kq = query_k(&q).k().max(1);
            for big in kq + 1..=kq + 2 {
                let bad = unfolded_chains(&d, &q, big, 100_000).unwrap();
                assert!(bad.is_empty(), "{} at {big}: {:?}", f.name, bad);
            }
        }
    }

    #[test]
    fn folding() {
        let f = fold(chain("r.a.b.f.a.c.f.a.e").labels());
        assert!(f.contains(chain("r.a.c.f.a.e").labels()));
        assert!(f.contains(chain("r.a.e").labels()));
    }
}
