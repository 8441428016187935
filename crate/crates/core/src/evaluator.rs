//! Reference semantics: query evaluation, pending update lists and their
//! application with snapshot semantics.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::lang::{Axis, InsertPos, NodeTest, Query, QueryKind, Update, UpdateKind, Var};
use crate::schema::Tag;
use crate::xmlstore::{value_equivalent, Loc, NodeData, Store, Tree};

pub type Env = HashMap<Var, Vec<Loc>>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("unbound variable {0}")]
    Unbound(Var),
    #[error("update target must be a single node, got {0}")]
    TargetCardinality(usize),
    #[error("invalid update target: {0}")]
    InvalidTarget(String),
    #[error("incompatible updates: {0}")]
    Incompatible(String),
}

/// A pending update command.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Command {
    Del(Loc),
    Ren(Loc, Tag),
    Ins(Vec<Loc>, InsertPos, Loc),
    Repl(Loc, Vec<Loc>),
}

/// Environment binding the root variable to the root of `t`.
pub fn root_env(t: &Tree) -> Env {
    HashMap::from([(Var::root(), vec![t.root])])
}

/// Evaluates `q`; constructed nodes are added to a copy of the store.
pub fn eval_query(store: &Store, env: &Env, q: &Query) -> Result<(Store, Vec<Loc>), EvalError> {
    let mut s = store.clone();
    let r = eval_in(&mut s, env, q)?;
    Ok((s, r))
}

/// Evaluates `q` in place; existing nodes are never modified.
pub fn eval_in(store: &mut Store, env: &Env, q: &Query) -> Result<Vec<Loc>, EvalError> {
    match &q.kind {
        QueryKind::Empty => Ok(Vec::new()),
        QueryKind::Str(s) => Ok(vec![store.new_text(s)]),
        QueryKind::Seq(a, b) => {
            let mut r = eval_in(store, env, a)?;
            r.extend(eval_in(store, env, b)?);
            Ok(r)
        }
        QueryKind::Elem(tag, content) => {
            let items = eval_in(store, env, content)?;
            let copies: Vec<Loc> = items.iter().map(|&l| store.deep_copy(l)).collect();
            Ok(vec![store.new_element(tag.clone(), copies)])
        }
        QueryKind::Step { var, axis, test } => {
            let ctx = env.get(var).ok_or_else(|| EvalError::Unbound(var.clone()))?;
            Ok(step(store, ctx, *axis, test))
        }
        QueryKind::For { var, bind, body } => {
            let items = eval_in(store, env, bind)?;
            let mut env2 = env.clone();
            let mut out = Vec::new();
            for l in items {
                env2.insert(var.clone(), vec![l]);
                out.extend(eval_in(store, &env2, body)?);
            }
            Ok(out)
        }
        QueryKind::Let { var, bind, body } => {
            let items = eval_in(store, env, bind)?;
            let mut env2 = env.clone();
            env2.insert(var.clone(), items);
            eval_in(store, &env2, body)
        }
        QueryKind::If { cond, then, els } => {
            if eval_in(store, env, cond)?.is_empty() {
                eval_in(store, env, els)
            } else {
                eval_in(store, env, then)
            }
        }
    }
}

pub fn test_matches(store: &Store, l: Loc, test: &NodeTest) -> bool {
    match (test, &store.node(l).data) {
        (NodeTest::Any, _) => true,
        (NodeTest::Text, NodeData::Text(_)) => true,
        (NodeTest::Tag(t), NodeData::Element { tag, .. }) => t == tag,
        _ => false,
    }
}

/// Nodes reached from `l` along `axis`, in document order.
pub fn axis_nodes(store: &Store, l: Loc, axis: Axis) -> Vec<Loc> {
    match axis {
        Axis::SelfAxis => vec![l],
        Axis::Child => store.children(l).to_vec(),
        Axis::Descendant => store.descendants(l),
        Axis::DescendantOrSelf => {
            let mut v = vec![l];
            v.extend(store.descendants(l));
            v
        }
        Axis::Parent => store.parent(l).into_iter().collect(),
        Axis::Ancestor => {
            let mut v = store.ancestors(l);
            v.reverse();
            v
        }
        Axis::AncestorOrSelf => {
            let mut v = store.ancestors(l);
            v.reverse();
            v.push(l);
            v
        }
        Axis::PrecedingSibling | Axis::FollowingSibling => match store.parent(l) {
            None => Vec::new(),
            Some(p) => {
                let sibs = store.children(p);
                let i = sibs.iter().position(|&c| c == l).expect("child of its parent");
                if axis == Axis::PrecedingSibling {
                    sibs[..i].to_vec()
                } else {
                    sibs[i + 1..].to_vec()
                }
            }
        },
    }
}

fn step(store: &Store, ctx: &[Loc], axis: Axis, test: &NodeTest) -> Vec<Loc> {
    let mut out: Vec<Loc> = Vec::new();
    for &l in ctx {
        out.extend(axis_nodes(store, l, axis).into_iter().filter(|&x| test_matches(store, x, test)));
    }
    if ctx.len() > 1 {
        store.sort_doc_order(&mut out);
    }
    out
}

/// Evaluates an update to its pending update list. Queries see the store as
/// it was before any command is applied.
pub fn build_upl(store: &Store, env: &Env, u: &Update) -> Result<(Store, Vec<Command>), EvalError> {
    let mut s = store.clone();
    let mut cmds = Vec::new();
    build_in(&mut s, env, u, &mut cmds)?;
    Ok((s, cmds))
}

fn single_target(store: &mut Store, env: &Env, q: &Query) -> Result<Loc, EvalError> {
    let t = eval_in(store, env, q)?;
    if t.len() != 1 {
        return Err(EvalError::TargetCardinality(t.len()));
    }
    Ok(t[0])
}

fn build_in(store: &mut Store, env: &Env, u: &Update, out: &mut Vec<Command>) -> Result<(), EvalError> {
    match &u.kind {
        UpdateKind::Empty => Ok(()),
        UpdateKind::Seq(a, b) => {
            build_in(store, env, a, out)?;
            build_in(store, env, b, out)
        }
        UpdateKind::For { var, bind, body } => {
            let items = eval_in(store, env, bind)?;
            let mut env2 = env.clone();
            for l in items {
                env2.insert(var.clone(), vec![l]);
                build_in(store, &env2, body, out)?;
            }
            Ok(())
        }
        UpdateKind::Let { var, bind, body } => {
            let items = eval_in(store, env, bind)?;
            let mut env2 = env.clone();
            env2.insert(var.clone(), items);
            build_in(store, &env2, body, out)
        }
        UpdateKind::If { cond, then, els } => {
            if eval_in(store, env, cond)?.is_empty() {
                build_in(store, env, els, out)
            } else {
                build_in(store, env, then, out)
            }
        }
        UpdateKind::Delete(t) => {
            for l in eval_in(store, env, t)? {
                out.push(Command::Del(l));
            }
            Ok(())
        }
        UpdateKind::Rename(t, tag) => {
            let l = single_target(store, env, t)?;
            if !store.is_element(l) {
                return Err(EvalError::InvalidTarget("rename of a text node".into()));
            }
            out.push(Command::Ren(l, tag.clone()));
            Ok(())
        }
        UpdateKind::Insert { source, pos, target } => {
            let items = eval_in(store, env, source)?;
            let l = single_target(store, env, target)?;
            if pos.is_into() && !store.is_element(l) {
                return Err(EvalError::InvalidTarget("insert into a text node".into()));
            }
            if !pos.is_into() && store.parent(l).is_none() {
                return Err(EvalError::InvalidTarget("insert next to a node without parent".into()));
            }
            let copies = items.iter().map(|&x| store.deep_copy(x)).collect();
            out.push(Command::Ins(copies, *pos, l));
            Ok(())
        }
        UpdateKind::Replace { target, source } => {
            let l = single_target(store, env, target)?;
            if store.parent(l).is_none() {
                return Err(EvalError::InvalidTarget("replace of a node without parent".into()));
            }
            let items = eval_in(store, env, source)?;
            let copies = items.iter().map(|&x| store.deep_copy(x)).collect();
            out.push(Command::Repl(l, copies));
            Ok(())
        }
    }
}

/// Applies a pending update list: renames, then insertions and replacements
/// (positions refer to the sibling lists before the update), then deletions.
pub fn apply_upl(store: &Store, cmds: &[Command]) -> Result<Store, EvalError> {
    let mut renames: HashMap<Loc, &Tag> = HashMap::new();
    let mut repl: HashMap<Loc, &Vec<Loc>> = HashMap::new();
    for c in cmds {
        match c {
            Command::Ren(l, t) => {
                if let Some(prev) = renames.insert(*l, t) {
                    if prev != t {
                        return Err(EvalError::Incompatible(format!("two renames of {l:?}")));
                    }
                }
            }
            Command::Repl(l, src) if repl.insert(*l, src).is_some() => {
                return Err(EvalError::Incompatible(format!("two replacements of {l:?}")));
            }
            _ => {}
        }
    }
    let mut s = store.clone();
    for (&l, &t) in &renames {
        s.rename(l, t.clone());
    }
    let mut firsts: BTreeMap<Loc, Vec<Loc>> = BTreeMap::new();
    let mut lasts: BTreeMap<Loc, Vec<Loc>> = BTreeMap::new();
    let mut befores: HashMap<Loc, Vec<Loc>> = HashMap::new();
    let mut afters: HashMap<Loc, Vec<Loc>> = HashMap::new();
    let mut parents: BTreeSet<Loc> = BTreeSet::new();
    for c in cmds {
        match c {
            Command::Ins(src, pos, l) => {
                match pos {
                    InsertPos::IntoFirst => firsts.entry(*l).or_default().extend(src),
                    InsertPos::Into | InsertPos::IntoLast => lasts.entry(*l).or_default().extend(src),
                    InsertPos::Before => befores.entry(*l).or_default().extend(src),
                    InsertPos::After => afters.entry(*l).or_default().extend(src),
                }
                if pos.is_into() {
                    parents.insert(*l);
                } else if let Some(p) = store.parent(*l) {
                    parents.insert(p);
                }
            }
            Command::Repl(l, _) => {
                if let Some(p) = store.parent(*l) {
                    parents.insert(p);
                }
            }
            _ => {}
        }
    }
    for p in parents {
        let mut kids: Vec<Loc> = firsts.get(&p).cloned().unwrap_or_default();
        for &c in store.children(p) {
            kids.extend(befores.get(&c).into_iter().flatten());
            match repl.get(&c) {
                Some(r) => kids.extend(r.iter()),
                None => kids.push(c),
            }
            kids.extend(afters.get(&c).into_iter().flatten());
        }
        kids.extend(lasts.get(&p).into_iter().flatten());
        s.set_children(p, kids);
    }
    for c in cmds {
        if let Command::Del(l) = c {
            if let Some(p) = s.parent(*l) {
                let kids: Vec<Loc> = s.children(p).iter().copied().filter(|x| x != l).collect();
                s.set_children(p, kids);
            }
        }
    }
    Ok(s)
}

/// Targets of deletions, renamings and replacements, and every node inserted
/// or put in place of a replaced node.
pub fn involved_locations(store: &Store, cmds: &[Command]) -> Vec<Loc> {
    let mut out = BTreeSet::new();
    for c in cmds {
        match c {
            Command::Del(l) | Command::Ren(l, _) => {
                out.insert(*l);
            }
            Command::Repl(l, src) => {
                out.insert(*l);
                for &x in src {
                    out.insert(x);
                    out.extend(store.descendants(x));
                }
            }
            Command::Ins(src, _, _) => {
                for &x in src {
                    out.insert(x);
                    out.extend(store.descendants(x));
                }
            }
        }
    }
    out.into_iter().collect()
}

/// Result of applying an update to a tree.
#[derive(Clone, Debug)]
pub struct Applied {
    /// Store after evaluating the update's queries (before applying commands).
    pub pending_store: Store,
    pub commands: Vec<Command>,
    /// The updated tree; detached nodes stay in the store but are unreachable.
    pub tree: Tree,
}

pub fn apply_update(t: &Tree, u: &Update) -> Result<Applied, EvalError> {
    let (pending_store, commands) = build_upl(&t.store, &root_env(t), u)?;
    let store = apply_upl(&pending_store, &commands)?;
    Ok(Applied { pending_store, commands, tree: Tree { store, root: t.root } })
}

pub fn run_query(t: &Tree, q: &Query) -> Result<(Store, Vec<Loc>), EvalError> {
    eval_query(&t.store, &root_env(t), q)
}

/// The query returns equivalent results before and after the update.
pub fn dynamic_independent(t: &Tree, q: &Query, u: &Update) -> Result<bool, EvalError> {
    let (s1, r1) = run_query(t, q)?;
    let updated = apply_update(t, u)?.tree;
    let (s2, r2) = run_query(&updated, q)?;
    Ok(value_equivalent(&s1, &r1, &s2, &r2))
}

/// Serialises a result sequence.
pub fn serialize_all(store: &Store, locs: &[Loc]) -> String {
    locs.iter().map(|&l| store.serialize(l)).collect::<Vec<_>>().join("")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse_query, parse_update};

    fn doc() -> Tree {
        Tree::parse("<doc><a><c/></a><b><c/></b><a><c/></a></doc>").unwrap()
    }

    fn q(t: &Tree, src: &str) -> String {
        let (s, r) = run_query(t, &parse_query(src).unwrap()).unwrap();
        serialize_all(&s, &r)
    }

    fn upd(t: &Tree, src: &str) -> String {
        apply_update(t, &parse_update(src).unwrap()).unwrap().tree.to_xml()
    }

    #[test]
    fn paths_and_constructors() {
        let t = doc();
        assert_eq!(q(&t, "//a//c"), "<c/><c/>");
        assert_eq!(q(&t, "/doc/b"), "<b><c/></b>");
        assert_eq!(q(&t, "<r>{//b}</r>"), "<r><b><c/></b></r>");
        assert_eq!(q(&t, "for $x in //c return $x/parent::node()"), "<a><c/></a><b><c/></b><a><c/></a>");
        assert_eq!(q(&t, "//b/following-sibling::a"), "<a><c/></a>");
        assert_eq!(q(&t, "//b/preceding-sibling::node()"), "<a><c/></a>");
        assert_eq!(q(&t, "if (//z) then \"y\" else \"n\""), "n");
    }

    #[test]
    fn delete_and_rename() {
        let t = doc();
        assert_eq!(upd(&t, "delete //b//c"), "<doc><a><c/></a><b/><a><c/></a></doc>");
        assert_eq!(upd(&t, "rename /doc/b as z"), "<doc><a><c/></a><z><c/></z><a><c/></a></doc>");
    }

    #[test]
    fn insert_positions_use_original_siblings() {
        let t = Tree::parse("<r><a/><b/></r>").unwrap();
        assert_eq!(upd(&t, "insert <x/> before /r/b, insert <y/> after /r/a, delete /r/a"), "<r><y/><x/><b/></r>");
        assert_eq!(upd(&t, "insert <x/> as first into /r, insert <y/> into /r"), "<r><x/><a/><b/><y/></r>");
        assert_eq!(upd(&t, "replace /r/a with (<p/>, <q/>)"), "<r><p/><q/><b/></r>");
    }

    #[test]
    fn snapshot_semantics() {
        let t = Tree::parse("<r><a/></r>").unwrap();
        // The second insert does not see the first one.
        let out = upd(&t, "insert <a/> into /r, for $x in /r/a return insert <b/> into $x");
        assert_eq!(out, "<r><a><b/></a><a/></r>");
    }

    #[test]
    fn errors() {
        let t = Tree::parse("<r><a/><a/></r>").unwrap();
        let err = |s: &str| apply_update(&t, &parse_update(s).unwrap()).unwrap_err();
        assert_eq!(err("rename /r/a as b"), EvalError::TargetCardinality(2));
        assert!(matches!(err("replace /r with <x/>"), EvalError::InvalidTarget(_)));
        let t1 = Tree::parse("<r><a/></r>").unwrap();
        let e = apply_update(&t1, &parse_update("replace /r/a with <x/>, replace /r/a with <y/>").unwrap());
        assert!(matches!(e, Err(EvalError::Incompatible(_))));
        let e = apply_update(&t1, &parse_update("rename /r/a as x, rename /r/a as y").unwrap());
        assert!(matches!(e, Err(EvalError::Incompatible(_))));
    }

    #[test]
    fn deleting_the_root_is_a_noop() {
        let t = doc();
        let a = apply_update(&t, &parse_update("delete /doc").unwrap()).unwrap();
        assert_eq!(a.tree.to_xml(), t.to_xml());
        assert_eq!(involved_locations(&a.pending_store, &a.commands), vec![t.root]);
    }

    #[test]
    fn dynamic_independence_on_worked_example() {
        let t = doc();
        let q1 = parse_query("//a//c").unwrap();
        let u1 = parse_update("delete //b//c").unwrap();
        assert!(dynamic_independent(&t, &q1, &u1).unwrap());
        let u2 = parse_update("delete //a//c").unwrap();
        assert!(!dynamic_independent(&t, &q1, &u2).unwrap());
    }
}
