//! Explicit-set chain inference over `C_d^k`.
//!
//! Every chain is listed individually, so sizes grow with `|C_d^k|`. Used as
//! the reference the graph inference is compared against.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use crate::lang::{Axis, ExprId, InsertPos, Query, QueryKind, Update, UpdateKind, Var};
use crate::schema::{Chain, Dtd, Label};

use super::step::{axis_sym, test_sym, SymChain};
use super::{graft_ok, ElemChain, QueryChains, UpdateChain, UsedChain};

type Env = Vec<(Var, Arc<Vec<SymChain>>)>;

#[derive(Default, Clone)]
struct Sets {
    r: BTreeSet<SymChain>,
    v: BTreeSet<(SymChain, bool)>,
    e: BTreeSet<ElemChain>,
}

impl Sets {
    fn absorb(&mut self, o: &Sets) {
        self.r.extend(o.r.iter().cloned());
        self.v.extend(o.v.iter().cloned());
        self.e.extend(o.e.iter().cloned());
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
struct SymUpdate {
    prefix: SymChain,
    suffix: Arc<[Label]>,
    open: bool,
}

type Key = (ExprId, Vec<Arc<Vec<SymChain>>>);

struct Naive<'a> {
    d: &'a Dtd,
    k: usize,
    free: HashMap<ExprId, Vec<Var>>,
    qmemo: HashMap<Key, Arc<Sets>>,
    umemo: HashMap<Key, Arc<BTreeSet<SymUpdate>>>,
}

fn lookup(env: &Env, x: &Var) -> Arc<Vec<SymChain>> {
    env.iter().rev().find(|(v, _)| v == x).map(|(_, c)| c.clone()).unwrap_or_default()
}

fn bind(env: &Env, x: &Var, cs: Vec<SymChain>) -> Env {
    let mut e = env.clone();
    e.push((x.clone(), Arc::new(cs)));
    e
}

fn is_forward(axis: Axis) -> bool {
    matches!(axis, Axis::SelfAxis | Axis::Child | Axis::DescendantOrSelf)
}

impl Naive<'_> {
    fn key(&self, id: ExprId, env: &Env) -> Key {
        let vars = self.free.get(&id).map(Vec::as_slice).unwrap_or(&[]);
        (id, vars.iter().map(|x| lookup(env, x)).collect())
    }

    fn query(&mut self, q: &Query, env: &Env) -> Arc<Sets> {
        let key = self.key(q.id, env);
        if let Some(s) = self.qmemo.get(&key) {
            return s.clone();
        }
        let s = Arc::new(self.query_uncached(q, env));
        self.qmemo.insert(key, s.clone());
        s
    }

    fn query_uncached(&mut self, q: &Query, env: &Env) -> Sets {
        let mut out = Sets::default();
        match &q.kind {
            QueryKind::Empty => {}
            QueryKind::Str(_) => {
                out.e.insert(ElemChain::new(vec![Label::Text], false));
            }
            QueryKind::Seq(a, b) => {
                out.absorb(&self.query(a, env));
                out.absorb(&self.query(b, env));
            }
            QueryKind::If { cond, then, els } => {
                let c = self.query(cond, env);
                out.v.extend(c.v.iter().cloned());
                out.v.extend(c.r.iter().map(|x| (x.clone(), false)));
                out.absorb(&self.query(then, env));
                out.absorb(&self.query(els, env));
            }
            QueryKind::Step { var, axis, test } => {
                for c in lookup(env, var).iter() {
                    let rc: Vec<SymChain> = axis_sym(self.d, self.k, c, *axis)
                        .into_iter()
                        .filter(|x| test_sym(self.d, *x.last().expect("non-empty"), test))
                        .collect();
                    if !is_forward(*axis) && !rc.is_empty() {
                        out.v.insert((c.clone(), false));
                    }
                    out.r.extend(rc);
                }
            }
            QueryKind::For { var, bind: b, body } => {
                let s1 = self.query(b, env);
                out.v.extend(s1.v.iter().cloned());
                for c in &s1.r {
                    let sc = self.query(body, &bind(env, var, vec![c.clone()]));
                    if !sc.r.is_empty() || !sc.e.is_empty() {
                        out.v.extend(sc.v.iter().cloned());
                        out.v.insert((c.clone(), false));
                    }
                    out.r.extend(sc.r.iter().cloned());
                    out.e.extend(sc.e.iter().cloned());
                }
            }
            QueryKind::Let { var, bind: b, body } => {
                let s1 = self.query(b, env);
                let s2 = self.query(body, &bind(env, var, s1.r.iter().cloned().collect()));
                out.v.extend(s1.v.iter().cloned());
                out.v.extend(s1.r.iter().map(|x| (x.clone(), false)));
                out.absorb(&Sets { r: s2.r.clone(), v: s2.v.clone(), e: s2.e.clone() });
            }
            QueryKind::Elem(a, c) => {
                let s = self.query(c, env);
                let a = Label::Tag(a.clone());
                out.v.extend(s.v.iter().cloned());
                out.v.extend(s.r.iter().map(|x| (x.clone(), true)));
                for x in &s.r {
                    let last = self.d.label_of(*x.last().expect("non-empty"));
                    out.e.insert(ElemChain::new(vec![a.clone(), last], true));
                }
                out.e.extend(s.e.iter().map(|x| x.under(a.clone())));
                if s.r.is_empty() && s.e.is_empty() {
                    out.e.insert(ElemChain::new(vec![a], false));
                }
            }
        }
        out
    }

    fn grafts(&self, prefix: &[u16], src: &Sets, out: &mut BTreeSet<SymUpdate>) {
        let mut push = |w: Vec<Label>, open: bool| {
            if graft_ok(self.d, prefix.last().copied(), &w) {
                out.insert(SymUpdate { prefix: prefix.to_vec(), suffix: w.into(), open });
            }
        };
        for c in &src.r {
            push(vec![self.d.label_of(*c.last().expect("non-empty"))], true);
        }
        for e in &src.e {
            push(e.labels.to_vec(), e.open);
        }
    }

    fn split(c: &SymChain, out: &mut BTreeSet<SymUpdate>, d: &Dtd) {
        let (prefix, last) = c.split_at(c.len() - 1);
        out.insert(SymUpdate { prefix: prefix.to_vec(), suffix: vec![d.label_of(last[0])].into(), open: true });
    }

    fn update(&mut self, u: &Update, env: &Env) -> Arc<BTreeSet<SymUpdate>> {
        let key = self.key(u.id, env);
        if let Some(s) = self.umemo.get(&key) {
            return s.clone();
        }
        let s = Arc::new(self.update_uncached(u, env));
        self.umemo.insert(key, s.clone());
        s
    }

    fn update_uncached(&mut self, u: &Update, env: &Env) -> BTreeSet<SymUpdate> {
        let mut out = BTreeSet::new();
        match &u.kind {
            UpdateKind::Empty => {}
            UpdateKind::Seq(a, b) => {
                out.extend(self.update(a, env).iter().cloned());
                out.extend(self.update(b, env).iter().cloned());
            }
            UpdateKind::If { then, els, .. } => {
                out.extend(self.update(then, env).iter().cloned());
                out.extend(self.update(els, env).iter().cloned());
            }
            UpdateKind::For { var, bind: b, body } => {
                let s1 = self.query(b, env);
                for c in &s1.r {
                    out.extend(self.update(body, &bind(env, var, vec![c.clone()])).iter().cloned());
                }
            }
            UpdateKind::Let { var, bind: b, body } => {
                let s1 = self.query(b, env);
                out.extend(self.update(body, &bind(env, var, s1.r.iter().cloned().collect())).iter().cloned());
            }
            UpdateKind::Delete(t) => {
                for c in &self.query(t, env).r {
                    Self::split(c, &mut out, self.d);
                }
            }
            UpdateKind::Rename(t, b) => {
                for c in &self.query(t, env).r {
                    Self::split(c, &mut out, self.d);
                    let w = vec![Label::Tag(b.clone())];
                    let prefix = &c[..c.len() - 1];
                    if graft_ok(self.d, prefix.last().copied(), &w) {
                        out.insert(SymUpdate { prefix: prefix.to_vec(), suffix: w.into(), open: true });
                    }
                }
            }
            UpdateKind::Insert { source, pos, target } => {
                let src = self.query(source, env);
                for c in &self.query(target, env).r {
                    match pos {
                        p if p.is_into() => self.grafts(c, &src, &mut out),
                        InsertPos::Before | InsertPos::After if c.len() > 1 => {
                            self.grafts(&c[..c.len() - 1], &src, &mut out)
                        }
                        _ => {}
                    }
                }
            }
            UpdateKind::Replace { target, source } => {
                let src = self.query(source, env);
                for c in &self.query(target, env).r {
                    Self::split(c, &mut out, self.d);
                    if c.len() > 1 {
                        self.grafts(&c[..c.len() - 1], &src, &mut out);
                    }
                }
            }
        }
        out
    }
}

pub(crate) fn query_free_table(q: &Query, out: &mut HashMap<ExprId, Vec<Var>>) {
    out.insert(q.id, q.free_vars().into_iter().collect());
    match &q.kind {
        QueryKind::Empty | QueryKind::Str(_) | QueryKind::Step { .. } => {}
        QueryKind::Seq(a, b) => {
            query_free_table(a, out);
            query_free_table(b, out);
        }
        QueryKind::Elem(_, c) => query_free_table(c, out),
        QueryKind::For { bind, body, .. } | QueryKind::Let { bind, body, .. } => {
            query_free_table(bind, out);
            query_free_table(body, out);
        }
        QueryKind::If { cond, then, els } => {
            query_free_table(cond, out);
            query_free_table(then, out);
            query_free_table(els, out);
        }
    }
}

pub(crate) fn update_free_table(u: &Update, out: &mut HashMap<ExprId, Vec<Var>>) {
    out.insert(u.id, u.free_vars().into_iter().collect());
    match &u.kind {
        UpdateKind::Empty => {}
        UpdateKind::Seq(a, b) => {
            update_free_table(a, out);
            update_free_table(b, out);
        }
        UpdateKind::For { bind, body, .. } | UpdateKind::Let { bind, body, .. } => {
            query_free_table(bind, out);
            update_free_table(body, out);
        }
        UpdateKind::If { cond, then, els } => {
            query_free_table(cond, out);
            update_free_table(then, out);
            update_free_table(els, out);
        }
        UpdateKind::Delete(t) | UpdateKind::Rename(t, _) => query_free_table(t, out),
        UpdateKind::Insert { source, target, .. } | UpdateKind::Replace { target, source } => {
            query_free_table(source, out);
            query_free_table(target, out);
        }
    }
}

fn root_env(d: &Dtd) -> Env {
    vec![(Var::root(), Arc::new(vec![vec![d.root_sym()]]))]
}

fn new_naive(d: &Dtd, k: usize) -> Naive<'_> {
    Naive { d, k: k.max(1), free: HashMap::new(), qmemo: HashMap::new(), umemo: HashMap::new() }
}

fn to_chain(d: &Dtd, c: &[u16]) -> Chain {
    super::step::to_chain(d, c)
}

/// Return, used and element chains of `q` with `$root` bound to the root chain.
pub fn infer_query(d: &Dtd, k: usize, q: &Query) -> QueryChains {
    let mut n = new_naive(d, k);
    query_free_table(q, &mut n.free);
    let s = n.query(q, &root_env(d));
    QueryChains {
        r: s.r.iter().map(|c| to_chain(d, c)).collect(),
        v: s.v.iter().map(|(c, closed)| UsedChain { chain: to_chain(d, c), closed: *closed }).collect(),
        e: s.e.clone(),
    }
}

/// Update chains of `u` with `$root` bound to the root chain.
pub fn infer_update(d: &Dtd, k: usize, u: &Update) -> BTreeSet<UpdateChain> {
    let mut n = new_naive(d, k);
    update_free_table(u, &mut n.free);
    let s = n.update(u, &root_env(d));
    s.iter()
        .map(|x| UpdateChain { prefix: to_chain(d, &x.prefix).0, suffix: x.suffix.to_vec(), open: x.open })
        .collect()
}
