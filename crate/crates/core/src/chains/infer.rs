//! Query and update inference over a [`Cdag`].
//!
//! Bodies of `for` are evaluated once per binding end and memoised on the
//! ends bound to their free variables. Components are shared by every
//! evaluation of their step, so a memoised result may have been computed
//! before some component it depends on grew; inference is therefore repeated
//! until a whole pass leaves the graph unchanged.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use rustc_hash::{FxHashMap, FxHashSet};

use crate::lang::{Axis, ExprId, InsertPos, NodeTest, Query, QueryKind, Update, UpdateKind, Var};
use crate::schema::{Chain, Dtd, Label, Sym};

use super::graph::{Cdag, End, NodeId, UpdateEnd, VEnd};
use super::lazy::LazySet;
use super::naive::{query_free_table, update_free_table};
use super::step::test_sym;
use super::{graft_ok, ElemChain, QueryChains, UpdateChain, UsedChain};

type Env = Vec<(Var, Arc<[End]>)>;
type Key = (ExprId, Vec<Arc<[End]>>);

#[derive(Clone, Default)]
struct QRes {
    r: LazySet<End>,
    v: LazySet<VEnd>,
    e: LazySet<ElemChain>,
}

struct Infer<'g> {
    g: &'g mut Cdag,
    dtd: Arc<Dtd>,
    free: &'g HashMap<ExprId, Vec<Var>>,
    qmemo: FxHashMap<Key, QRes>,
    umemo: FxHashMap<Key, LazySet<UpdateEnd>>,
}

fn lookup(env: &Env, x: &Var) -> Arc<[End]> {
    env.iter().rev().find(|(v, _)| v == x).map(|(_, e)| e.clone()).unwrap_or_else(|| Arc::from(Vec::new()))
}

fn bind(env: &Env, x: &Var, ends: Vec<End>) -> Env {
    let mut e = Vec::with_capacity(env.len() + 1);
    e.extend(env.iter().cloned());
    e.push((x.clone(), ends.into()));
    e
}

fn pick(xs: &[End], keep: &[bool]) -> Vec<End> {
    xs.iter().zip(keep).filter(|p| *p.1).map(|p| *p.0).collect()
}

/// Steps whose binding chains are not prefixes of their results.
fn records_used(axis: Axis) -> bool {
    !matches!(axis, Axis::SelfAxis | Axis::Child | Axis::DescendantOrSelf)
}

impl Infer<'_> {
    fn key(&self, id: ExprId, env: &Env) -> Key {
        let vars = self.free.get(&id).map(Vec::as_slice).unwrap_or(&[]);
        (id, vars.iter().map(|x| lookup(env, x)).collect())
    }

    fn test(&self, n: NodeId, t: &NodeTest) -> bool {
        test_sym(&self.dtd, self.g.sym(n), t)
    }

    fn step_from(&mut self, id: ExprId, b: End, axis: Axis, t: &NodeTest) -> Vec<End> {
        let (c, n) = (b.comp, b.node);
        let back = |nodes: Vec<NodeId>| nodes.into_iter().map(|m| End { comp: c, node: m }).collect::<Vec<_>>();
        let mut out = match axis {
            Axis::SelfAxis => vec![b],
            Axis::Parent => back(self.g.parents(c, n).to_vec()),
            Axis::Ancestor => back(self.g.ancestors(c, n)),
            Axis::AncestorOrSelf => {
                let mut v = self.g.ancestors(c, n);
                v.push(n);
                back(v)
            }
            Axis::Child => {
                let s = self.g.comp_for(id, axis);
                self.g.copy_closure(s, c, n);
                let dtd = self.dtd.clone();
                let kids = self.g.extend_children(s, n, |x| test_sym(&dtd, x, t));
                return kids.into_iter().map(|m| End { comp: s, node: m }).collect();
            }
            Axis::Descendant | Axis::DescendantOrSelf => {
                let s = self.g.comp_for(id, axis);
                self.g.copy_closure(s, c, n);
                self.g.expand_below(s, n);
                let mut v = self.g.reachable(s, n);
                if axis == Axis::Descendant {
                    v.retain(|&m| m != n);
                }
                v.into_iter().map(|m| End { comp: s, node: m }).collect()
            }
            Axis::FollowingSibling | Axis::PrecedingSibling => {
                let s = self.g.comp_for(id, axis);
                let a = self.g.sym(n);
                let mut v = Vec::new();
                for p in self.g.parents(c, n).to_vec() {
                    self.g.copy_closure(s, c, p);
                    let ps = self.g.sym(p);
                    for x in 0..self.dtd.num_syms() as Sym {
                        let ordered = if axis == Axis::FollowingSibling {
                            self.dtd.precedes_sym(ps, a, x)
                        } else {
                            self.dtd.precedes_sym(ps, x, a)
                        };
                        if ordered && test_sym(&self.dtd, x, t) {
                            if let Some(y) = self.g.extend_one(s, p, x) {
                                v.push(End { comp: s, node: y });
                            }
                        }
                    }
                }
                v
            }
        };
        out.retain(|e| self.test(e.node, t));
        out
    }

    /// Steps from every end of `binds`; returns the union of the results and,
    /// per bind, whether its own results meet `good` (any result when `None`).
    fn step_many(
        &mut self,
        id: ExprId,
        binds: &[End],
        axis: Axis,
        t: &NodeTest,
        good: Option<&FxHashSet<End>>,
    ) -> (Vec<End>, Vec<bool>) {
        if matches!(axis, Axis::Descendant | Axis::DescendantOrSelf) && binds.len() > 1 {
            let s = self.g.comp_for(id, axis);
            for b in binds {
                self.g.copy_closure(s, b.comp, b.node);
                self.g.expand_below(s, b.node);
            }
            let sources: Vec<NodeId> = binds.iter().map(|b| b.node).collect();
            let dtd = self.dtd.clone();
            let good: Option<Vec<NodeId>> = good.map(|g| g.iter().filter(|e| e.comp == s).map(|e| e.node).collect());
            let (nodes, nonempty) =
                self.g.reach_union(s, &sources, axis == Axis::Descendant, |x| test_sym(&dtd, x, t), good.as_deref());
            return (nodes.into_iter().map(|m| End { comp: s, node: m }).collect(), nonempty);
        }
        let mut r = Vec::new();
        let mut nonempty = Vec::with_capacity(binds.len());
        for &b in binds {
            let res = self.step_from(id, b, axis, t);
            nonempty.push(match good {
                None => !res.is_empty(),
                Some(g) => res.iter().any(|e| g.contains(e)),
            });
            r.extend(res);
        }
        r.sort_unstable();
        r.dedup();
        (r, nonempty)
    }

    /// Whether `body`, with `var` bound, is a path: a step on `var`, or a
    /// `for` over a step on `var` whose body is a path on the new variable
    /// and does not mention `var`.
    fn is_path(&self, body: &Query, var: &Var) -> bool {
        match &body.kind {
            QueryKind::Step { var: x, .. } => x == var,
            QueryKind::For { var: y, bind, body: inner } => {
                matches!(&bind.kind, QueryKind::Step { var: x, .. } if x == var)
                    && y != var
                    && !self.free.get(&inner.id).is_some_and(|f| f.contains(var))
                    && self.is_path(inner, y)
            }
            _ => false,
        }
    }

    /// A path body evaluated once per end of `xs`, all at once. Returns the
    /// union of results, per end whether it produced anything, the used ends
    /// among `xs` (valid only for ends that produced something) and the
    /// deeper used ends.
    fn path(&mut self, body: &Query, xs: &[End]) -> (Vec<End>, Vec<bool>, Vec<End>, Vec<End>) {
        match &body.kind {
            QueryKind::Step { axis, test, .. } => {
                let (r, ne) = self.step_many(body.id, xs, *axis, test, None);
                let own = if records_used(*axis) { pick(xs, &ne) } else { Vec::new() };
                (r, ne, own, Vec::new())
            }
            QueryKind::For { bind, body: inner, .. } => {
                let QueryKind::Step { axis, test, .. } = &bind.kind else { unreachable!() };
                let (ys, ne_step) = self.step_many(bind.id, xs, *axis, test, None);
                let (r, ne_y, own_y, mut deeper) = self.path(inner, &ys);
                let good: FxHashSet<End> = pick(&ys, &ne_y).into_iter().collect();
                let (_, ne) = self.step_many(bind.id, xs, *axis, test, Some(&good));
                let own = if records_used(*axis) { pick(xs, &ne_step) } else { Vec::new() };
                deeper.extend(good.iter().copied());
                deeper.extend(own_y.into_iter().filter(|y| good.contains(y)));
                (r, ne, own, deeper)
            }
            _ => unreachable!("checked by is_path"),
        }
    }

    fn query(&mut self, q: &Query, env: &Env) -> QRes {
        let key = self.key(q.id, env);
        if let Some(r) = self.qmemo.get(&key) {
            return r.clone();
        }
        let r = self.query_uncached(q, env);
        self.qmemo.insert(key, r.clone());
        r
    }

    fn query_uncached(&mut self, q: &Query, env: &Env) -> QRes {
        match &q.kind {
            QueryKind::Empty => QRes::default(),
            QueryKind::Str(_) => {
                QRes { e: LazySet::from_vec(vec![ElemChain::new(vec![Label::Text], false)]), ..QRes::default() }
            }
            QueryKind::Seq(a, b) => {
                let (x, y) = (self.query(a, env), self.query(b, env));
                QRes {
                    r: LazySet::union(vec![x.r, y.r]),
                    v: LazySet::union(vec![x.v, y.v]),
                    e: LazySet::union(vec![x.e, y.e]),
                }
            }
            QueryKind::If { cond, then, els } => {
                let c = self.query(cond, env);
                let (x, y) = (self.query(then, env), self.query(els, env));
                let used: Vec<VEnd> = c.r.flatten().into_iter().map(|end| VEnd { end, closed: false }).collect();
                QRes {
                    r: LazySet::union(vec![x.r, y.r]),
                    v: LazySet::union_with(vec![c.v, x.v, y.v], used),
                    e: LazySet::union(vec![x.e, y.e]),
                }
            }
            QueryKind::Step { var, axis, test } => {
                let binds = lookup(env, var);
                let (r, nonempty) = self.step_many(q.id, &binds, *axis, test, None);
                let v = if records_used(*axis) {
                    binds.iter().zip(nonempty).filter(|p| p.1).map(|(&end, _)| VEnd { end, closed: false }).collect()
                } else {
                    Vec::new()
                };
                QRes { r: LazySet::from_vec(r), v: LazySet::from_vec(v), e: LazySet::empty() }
            }
            QueryKind::For { var, bind: b, body } => {
                let s1 = self.query(b, env);
                if self.is_path(body, var) {
                    let ends = s1.r.flatten();
                    let (r, ne, own, deeper) = self.path(body, &ends);
                    let live: FxHashSet<End> = pick(&ends, &ne).into_iter().collect();
                    let used: Vec<VEnd> = live
                        .iter()
                        .copied()
                        .chain(own.into_iter().filter(|x| live.contains(x)))
                        .chain(deeper)
                        .map(|end| VEnd { end, closed: false })
                        .collect();
                    return QRes {
                        r: LazySet::from_vec(r),
                        v: LazySet::union_with(vec![s1.v], used),
                        e: LazySet::empty(),
                    };
                }
                let mut rp = Vec::new();
                let mut vp = vec![s1.v.clone()];
                let mut ep = Vec::new();
                let mut used = Vec::new();
                for end in s1.r.flatten() {
                    let sc = self.query(body, &bind(env, var, vec![end]));
                    if !sc.r.is_empty() || !sc.e.is_empty() {
                        vp.push(sc.v.clone());
                        used.push(VEnd { end, closed: false });
                    }
                    rp.push(sc.r);
                    ep.push(sc.e);
                }
                QRes { r: LazySet::union(rp), v: LazySet::union_with(vp, used), e: LazySet::union(ep) }
            }
            QueryKind::Let { var, bind: b, body } => {
                let s1 = self.query(b, env);
                let r1 = s1.r.flatten();
                let s2 = self.query(body, &bind(env, var, r1.clone()));
                let used = r1.into_iter().map(|end| VEnd { end, closed: false }).collect();
                QRes { r: s2.r, v: LazySet::union_with(vec![s1.v, s2.v], used), e: s2.e }
            }
            QueryKind::Elem(a, c) => {
                let s = self.query(c, env);
                let a = Label::Tag(a.clone());
                let r = s.r.flatten();
                let inner = s.e.flatten();
                let mut e: Vec<ElemChain> = Vec::new();
                let syms: BTreeSet<Sym> = r.iter().map(|x| self.g.sym(x.node)).collect();
                for x in syms {
                    e.push(ElemChain::new(vec![a.clone(), self.dtd.label_of(x)], true));
                }
                e.extend(inner.iter().map(|x| x.under(a.clone())));
                if r.is_empty() && inner.is_empty() {
                    e.push(ElemChain::new(vec![a], false));
                }
                let closed = r.into_iter().map(|end| VEnd { end, closed: true }).collect();
                QRes { r: LazySet::empty(), v: LazySet::union_with(vec![s.v], closed), e: LazySet::from_vec(e) }
            }
        }
    }

    /// Prefixes for updates at the parent of `b`; `None` stands for the empty
    /// prefix of the root.
    fn parent_prefixes(&self, b: End) -> Vec<Option<End>> {
        if b.node == self.g.root() {
            vec![None]
        } else {
            self.g.parents(b.comp, b.node).iter().map(|&p| Some(End { comp: b.comp, node: p })).collect()
        }
    }

    fn sources(&self, src: &QRes) -> Vec<(Arc<[Label]>, bool)> {
        let syms: BTreeSet<Sym> = src.r.flatten().iter().map(|x| self.g.sym(x.node)).collect();
        let mut out: Vec<(Arc<[Label]>, bool)> =
            syms.into_iter().map(|s| (Arc::from(vec![self.dtd.label_of(s)]), true)).collect();
        out.extend(src.e.flatten().into_iter().map(|e| (e.labels, e.open)));
        out
    }

    fn graft(&self, prefix: Option<End>, w: &Arc<[Label]>, open: bool, out: &mut Vec<UpdateEnd>) {
        if graft_ok(&self.dtd, prefix.map(|p| self.g.sym(p.node)), w) {
            out.push(UpdateEnd::Graft { prefix, suffix: w.clone(), open });
        }
    }

    fn update(&mut self, u: &Update, env: &Env) -> LazySet<UpdateEnd> {
        let key = self.key(u.id, env);
        if let Some(r) = self.umemo.get(&key) {
            return r.clone();
        }
        let r = self.update_uncached(u, env);
        self.umemo.insert(key, r.clone());
        r
    }

    fn update_uncached(&mut self, u: &Update, env: &Env) -> LazySet<UpdateEnd> {
        let mut out = Vec::new();
        match &u.kind {
            UpdateKind::Empty => {}
            UpdateKind::Seq(a, b) => {
                let (x, y) = (self.update(a, env), self.update(b, env));
                return LazySet::union(vec![x, y]);
            }
            UpdateKind::If { then, els, .. } => {
                let (x, y) = (self.update(then, env), self.update(els, env));
                return LazySet::union(vec![x, y]);
            }
            UpdateKind::For { var, bind: b, body } => {
                let s1 = self.query(b, env);
                let parts =
                    s1.r.flatten().into_iter().map(|end| self.update(body, &bind(env, var, vec![end]))).collect();
                return LazySet::union(parts);
            }
            UpdateKind::Let { var, bind: b, body } => {
                let s1 = self.query(b, env);
                return self.update(body, &bind(env, var, s1.r.flatten()));
            }
            UpdateKind::Delete(t) => {
                out.extend(self.query(t, env).r.flatten().into_iter().map(UpdateEnd::Split));
            }
            UpdateKind::Rename(t, tag) => {
                let w: Arc<[Label]> = Arc::from(vec![Label::Tag(tag.clone())]);
                for b in self.query(t, env).r.flatten() {
                    out.push(UpdateEnd::Split(b));
                    for p in self.parent_prefixes(b) {
                        self.graft(p, &w, true, &mut out);
                    }
                }
            }
            UpdateKind::Insert { source, pos, target } => {
                let src = self.query(source, env);
                let ws = self.sources(&src);
                for b in self.query(target, env).r.flatten() {
                    let prefixes = match pos {
                        p if p.is_into() => vec![Some(b)],
                        InsertPos::Before | InsertPos::After if b.node != self.g.root() => self.parent_prefixes(b),
                        _ => Vec::new(),
                    };
                    for p in prefixes {
                        for (w, open) in &ws {
                            self.graft(p, w, *open, &mut out);
                        }
                    }
                }
            }
            UpdateKind::Replace { target, source } => {
                let src = self.query(source, env);
                let ws = self.sources(&src);
                for b in self.query(target, env).r.flatten() {
                    out.push(UpdateEnd::Split(b));
                    if b.node == self.g.root() {
                        continue;
                    }
                    for p in self.parent_prefixes(b) {
                        for (w, open) in &ws {
                            self.graft(p, w, *open, &mut out);
                        }
                    }
                }
            }
        }
        LazySet::from_vec(out)
    }
}

/// Chains of a query as ends of a [`Cdag`].
pub struct QueryAnalysis {
    pub cdag: Cdag,
    pub r: Vec<End>,
    pub v: Vec<VEnd>,
    pub e: Vec<ElemChain>,
    /// Inference passes until the graph stopped changing.
    pub rounds: usize,
}

/// Update chains as ends of a [`Cdag`].
pub struct UpdateAnalysis {
    pub cdag: Cdag,
    pub u: Vec<UpdateEnd>,
    pub rounds: usize,
}

fn root_env(g: &Cdag) -> Env {
    vec![(Var::root(), Arc::from(vec![g.root_end()]))]
}

pub fn analyze_query(d: &Dtd, k: usize, q: &Query) -> QueryAnalysis {
    let mut free = HashMap::new();
    query_free_table(q, &mut free);
    let mut g = Cdag::new(Arc::new(d.clone()), k);
    let dtd = g.dtd_arc();
    let mut rounds = 0;
    loop {
        rounds += 1;
        g.begin_round();
        let before = g.version();
        let env = root_env(&g);
        let mut inf = Infer {
            g: &mut g,
            dtd: dtd.clone(),
            free: &free,
            qmemo: FxHashMap::default(),
            umemo: FxHashMap::default(),
        };
        let res = inf.query(q, &env);
        if g.version() == before {
            return QueryAnalysis { r: res.r.flatten(), v: res.v.flatten(), e: res.e.flatten(), cdag: g, rounds };
        }
    }
}

pub fn analyze_update(d: &Dtd, k: usize, u: &Update) -> UpdateAnalysis {
    let mut free = HashMap::new();
    update_free_table(u, &mut free);
    let mut g = Cdag::new(Arc::new(d.clone()), k);
    let dtd = g.dtd_arc();
    let mut rounds = 0;
    loop {
        rounds += 1;
        g.begin_round();
        let before = g.version();
        let env = root_env(&g);
        let mut inf = Infer {
            g: &mut g,
            dtd: dtd.clone(),
            free: &free,
            qmemo: FxHashMap::default(),
            umemo: FxHashMap::default(),
        };
        let res = inf.update(u, &env);
        if g.version() == before {
            return UpdateAnalysis { u: res.flatten(), cdag: g, rounds };
        }
    }
}

/// Too many chains to list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TooLarge;

impl QueryAnalysis {
    /// Lists the chains of every end (k-chains only). Fails past `limit`
    /// chains per end.
    pub fn materialize(&self, limit: usize) -> Result<QueryChains, TooLarge> {
        self.materialize_upto(limit, usize::MAX)
    }

    /// Like [`materialize`](Self::materialize), keeping chains of length at
    /// most `max_len`.
    pub fn materialize_upto(&self, limit: usize, max_len: usize) -> Result<QueryChains, TooLarge> {
        let g = &self.cdag;
        let short = |e: End| g.depth(e.node) <= max_len;
        let mut out = QueryChains::default();
        for &e in self.r.iter().filter(|&&e| short(e)) {
            for c in g.chains(e, limit).ok_or(TooLarge)? {
                out.r.insert(Chain(c));
            }
        }
        for v in self.v.iter().filter(|v| short(v.end)) {
            for c in g.chains(v.end, limit).ok_or(TooLarge)? {
                out.v.insert(UsedChain { chain: Chain(c), closed: v.closed });
            }
        }
        out.e.extend(self.e.iter().cloned());
        Ok(out)
    }
}

impl UpdateAnalysis {
    pub fn materialize(&self, limit: usize) -> Result<BTreeSet<UpdateChain>, TooLarge> {
        self.materialize_upto(limit, usize::MAX)
    }

    /// Keeps update chains whose prefix is at most `max_len` long.
    pub fn materialize_upto(&self, limit: usize, max_len: usize) -> Result<BTreeSet<UpdateChain>, TooLarge> {
        let g = &self.cdag;
        let mut out = BTreeSet::new();
        for u in &self.u {
            match u {
                UpdateEnd::Split(e) if g.depth(e.node) > max_len.saturating_add(1) => {}
                UpdateEnd::Graft { prefix: Some(p), .. } if g.depth(p.node) > max_len => {}
                UpdateEnd::Split(e) => {
                    for mut c in g.chains(*e, limit).ok_or(TooLarge)? {
                        let last = c.pop().expect("non-empty");
                        out.insert(UpdateChain { prefix: c, suffix: vec![last], open: true });
                    }
                }
                UpdateEnd::Graft { prefix: None, suffix, open } => {
                    out.insert(UpdateChain { prefix: Vec::new(), suffix: suffix.to_vec(), open: *open });
                }
                UpdateEnd::Graft { prefix: Some(p), suffix, open } => {
                    for c in g.chains(*p, limit).ok_or(TooLarge)? {
                        out.insert(UpdateChain { prefix: c, suffix: suffix.to_vec(), open: *open });
                    }
                }
            }
        }
        Ok(out)
    }
}
