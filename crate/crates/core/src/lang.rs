//! Query and update language: abstract syntax, parser and path desugaring.
//!
//! Paths are desugared while parsing: `e/s1/s2` becomes nested `for`
//! expressions over single steps, predicates become `for`/`if` filters and
//! absolute paths start from the root element bound to `$root`.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::schema::{is_name_char, Tag};

/// Preorder index of an expression node.
pub type ExprId = u32;

/// Name of the variable bound to the root element of the input tree.
pub const ROOT_VAR: &str = "root";

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(Arc<str>);

impl Var {
    pub fn new(name: &str) -> Var {
        Var(Arc::from(name))
    }

    pub fn root() -> Var {
        Var::new(ROOT_VAR)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Variables introduced by desugaring live in a namespace users cannot write.
    pub fn is_generated(&self) -> bool {
        self.0.starts_with('#')
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(n) = self.0.strip_prefix('#') {
            write!(f, "$_v{n}")
        } else {
            write!(f, "${}", self.0)
        }
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Axis {
    SelfAxis,
    Child,
    Descendant,
    DescendantOrSelf,
    Parent,
    Ancestor,
    AncestorOrSelf,
    PrecedingSibling,
    FollowingSibling,
}

impl Axis {
    pub const ALL: [Axis; 9] = [
        Axis::SelfAxis,
        Axis::Child,
        Axis::Descendant,
        Axis::DescendantOrSelf,
        Axis::Parent,
        Axis::Ancestor,
        Axis::AncestorOrSelf,
        Axis::PrecedingSibling,
        Axis::FollowingSibling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Axis::SelfAxis => "self",
            Axis::Child => "child",
            Axis::Descendant => "descendant",
            Axis::DescendantOrSelf => "descendant-or-self",
            Axis::Parent => "parent",
            Axis::Ancestor => "ancestor",
            Axis::AncestorOrSelf => "ancestor-or-self",
            Axis::PrecedingSibling => "preceding-sibling",
            Axis::FollowingSibling => "following-sibling",
        }
    }

    pub fn from_name(s: &str) -> Option<Axis> {
        Axis::ALL.into_iter().find(|a| a.name() == s)
    }

    /// Axes whose result may lie at unbounded distance.
    pub fn is_recursive(self) -> bool {
        matches!(self, Axis::Descendant | Axis::DescendantOrSelf | Axis::Ancestor | Axis::AncestorOrSelf)
    }

    /// Axes whose results alone witness their binding (no used chain needed).
    pub fn is_downward_inclusive(self) -> bool {
        matches!(self, Axis::SelfAxis | Axis::Child | Axis::DescendantOrSelf)
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum NodeTest {
    Tag(Tag),
    Text,
    Any,
}

impl fmt::Display for NodeTest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeTest::Tag(t) => write!(f, "{t}"),
            NodeTest::Text => f.write_str("text()"),
            NodeTest::Any => f.write_str("node()"),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Query {
    pub id: ExprId,
    pub kind: QueryKind,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum QueryKind {
    Empty,
    Seq(Box<Query>, Box<Query>),
    Elem(Tag, Box<Query>),
    Str(String),
    Step { var: Var, axis: Axis, test: NodeTest },
    For { var: Var, bind: Box<Query>, body: Box<Query> },
    Let { var: Var, bind: Box<Query>, body: Box<Query> },
    If { cond: Box<Query>, then: Box<Query>, els: Box<Query> },
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum InsertPos {
    Before,
    After,
    Into,
    IntoFirst,
    IntoLast,
}

impl InsertPos {
    pub fn keyword(self) -> &'static str {
        match self {
            InsertPos::Before => "before",
            InsertPos::After => "after",
            InsertPos::Into => "into",
            InsertPos::IntoFirst => "as first into",
            InsertPos::IntoLast => "as last into",
        }
    }

    /// Inserted nodes become children of the target.
    pub fn is_into(self) -> bool {
        matches!(self, InsertPos::Into | InsertPos::IntoFirst | InsertPos::IntoLast)
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Update {
    pub id: ExprId,
    pub kind: UpdateKind,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum UpdateKind {
    Empty,
    Seq(Box<Update>, Box<Update>),
    For { var: Var, bind: Box<Query>, body: Box<Update> },
    Let { var: Var, bind: Box<Query>, body: Box<Update> },
    If { cond: Box<Query>, then: Box<Update>, els: Box<Update> },
    Delete(Box<Query>),
    Rename(Box<Query>, Tag),
    Insert { source: Box<Query>, pos: InsertPos, target: Box<Query> },
    Replace { target: Box<Query>, source: Box<Query> },
}

/// Builders producing unnumbered nodes; call [`Query::numbered`] afterwards.
pub mod build {
    use super::*;

    fn q(kind: QueryKind) -> Query {
        Query { id: 0, kind }
    }

    fn u(kind: UpdateKind) -> Update {
        Update { id: 0, kind }
    }

    pub fn empty() -> Query {
        q(QueryKind::Empty)
    }

    pub fn seq(a: Query, b: Query) -> Query {
        q(QueryKind::Seq(Box::new(a), Box::new(b)))
    }

    pub fn seq_all(items: Vec<Query>) -> Query {
        let mut it = items.into_iter();
        match it.next() {
            None => empty(),
            Some(first) => it.fold(first, seq),
        }
    }

    pub fn elem(tag: &str, content: Query) -> Query {
        q(QueryKind::Elem(Tag::new(tag), Box::new(content)))
    }

    pub fn string(s: &str) -> Query {
        q(QueryKind::Str(s.to_string()))
    }

    pub fn step(var: &Var, axis: Axis, test: NodeTest) -> Query {
        q(QueryKind::Step { var: var.clone(), axis, test })
    }

    pub fn var(v: &Var) -> Query {
        step(v, Axis::SelfAxis, NodeTest::Any)
    }

    pub fn for_(var: &Var, bind: Query, body: Query) -> Query {
        q(QueryKind::For { var: var.clone(), bind: Box::new(bind), body: Box::new(body) })
    }

    pub fn let_(var: &Var, bind: Query, body: Query) -> Query {
        q(QueryKind::Let { var: var.clone(), bind: Box::new(bind), body: Box::new(body) })
    }

    pub fn if_(cond: Query, then: Query, els: Query) -> Query {
        q(QueryKind::If { cond: Box::new(cond), then: Box::new(then), els: Box::new(els) })
    }

    pub fn uempty() -> Update {
        u(UpdateKind::Empty)
    }

    pub fn useq(a: Update, b: Update) -> Update {
        u(UpdateKind::Seq(Box::new(a), Box::new(b)))
    }

    pub fn useq_all(items: Vec<Update>) -> Update {
        let mut it = items.into_iter();
        match it.next() {
            None => uempty(),
            Some(first) => it.fold(first, useq),
        }
    }

    pub fn ufor(var: &Var, bind: Query, body: Update) -> Update {
        u(UpdateKind::For { var: var.clone(), bind: Box::new(bind), body: Box::new(body) })
    }

    pub fn ulet(var: &Var, bind: Query, body: Update) -> Update {
        u(UpdateKind::Let { var: var.clone(), bind: Box::new(bind), body: Box::new(body) })
    }

    pub fn uif(cond: Query, then: Update, els: Update) -> Update {
        u(UpdateKind::If { cond: Box::new(cond), then: Box::new(then), els: Box::new(els) })
    }

    pub fn delete(target: Query) -> Update {
        u(UpdateKind::Delete(Box::new(target)))
    }

    pub fn rename(target: Query, tag: &str) -> Update {
        u(UpdateKind::Rename(Box::new(target), Tag::new(tag)))
    }

    pub fn insert(source: Query, pos: InsertPos, target: Query) -> Update {
        u(UpdateKind::Insert { source: Box::new(source), pos, target: Box::new(target) })
    }

    pub fn replace(target: Query, source: Query) -> Update {
        u(UpdateKind::Replace { target: Box::new(target), source: Box::new(source) })
    }
}

impl Query {
    /// Renumbers nodes in preorder starting from 0.
    pub fn numbered(mut self) -> Query {
        let mut next = 0;
        self.number_from(&mut next);
        self
    }

    pub(crate) fn number_from(&mut self, next: &mut ExprId) {
        self.id = *next;
        *next += 1;
        match &mut self.kind {
            QueryKind::Empty | QueryKind::Str(_) | QueryKind::Step { .. } => {}
            QueryKind::Seq(a, b) => {
                a.number_from(next);
                b.number_from(next);
            }
            QueryKind::Elem(_, c) => c.number_from(next),
            QueryKind::For { bind, body, .. } | QueryKind::Let { bind, body, .. } => {
                bind.number_from(next);
                body.number_from(next);
            }
            QueryKind::If { cond, then, els } => {
                cond.number_from(next);
                then.number_from(next);
                els.number_from(next);
            }
        }
    }

    /// Number of expression nodes.
    pub fn size(&self) -> usize {
        1 + match &self.kind {
            QueryKind::Empty | QueryKind::Str(_) | QueryKind::Step { .. } => 0,
            QueryKind::Seq(a, b) => a.size() + b.size(),
            QueryKind::Elem(_, c) => c.size(),
            QueryKind::For { bind, body, .. } | QueryKind::Let { bind, body, .. } => bind.size() + body.size(),
            QueryKind::If { cond, then, els } => cond.size() + then.size() + els.size(),
        }
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    pub(crate) fn collect_free(&self, bound: &mut Vec<Var>, out: &mut BTreeSet<Var>) {
        match &self.kind {
            QueryKind::Empty | QueryKind::Str(_) => {}
            QueryKind::Step { var, .. } => {
                if !bound.contains(var) {
                    out.insert(var.clone());
                }
            }
            QueryKind::Seq(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            QueryKind::Elem(_, c) => c.collect_free(bound, out),
            QueryKind::For { var, bind, body } | QueryKind::Let { var, bind, body } => {
                bind.collect_free(bound, out);
                bound.push(var.clone());
                body.collect_free(bound, out);
                bound.pop();
            }
            QueryKind::If { cond, then, els } => {
                cond.collect_free(bound, out);
                then.collect_free(bound, out);
                els.collect_free(bound, out);
            }
        }
    }

    /// Contains an element or text constructor.
    pub fn has_constructor(&self) -> bool {
        match &self.kind {
            QueryKind::Elem(..) | QueryKind::Str(_) => true,
            QueryKind::Empty | QueryKind::Step { .. } => false,
            QueryKind::Seq(a, b) => a.has_constructor() || b.has_constructor(),
            QueryKind::For { bind, body, .. } | QueryKind::Let { bind, body, .. } => {
                bind.has_constructor() || body.has_constructor()
            }
            QueryKind::If { cond, then, els } => {
                cond.has_constructor() || then.has_constructor() || els.has_constructor()
            }
        }
    }

    /// Tags mentioned in node tests or constructors.
    pub fn tags(&self) -> BTreeSet<Tag> {
        let mut out = BTreeSet::new();
        self.collect_tags(&mut out);
        out
    }

    pub(crate) fn collect_tags(&self, out: &mut BTreeSet<Tag>) {
        match &self.kind {
            QueryKind::Empty | QueryKind::Str(_) => {}
            QueryKind::Step { test, .. } => {
                if let NodeTest::Tag(t) = test {
                    out.insert(t.clone());
                }
            }
            QueryKind::Seq(a, b) => {
                a.collect_tags(out);
                b.collect_tags(out);
            }
            QueryKind::Elem(t, c) => {
                out.insert(t.clone());
                c.collect_tags(out);
            }
            QueryKind::For { bind, body, .. } | QueryKind::Let { bind, body, .. } => {
                bind.collect_tags(out);
                body.collect_tags(out);
            }
            QueryKind::If { cond, then, els } => {
                cond.collect_tags(out);
                then.collect_tags(out);
                els.collect_tags(out);
            }
        }
    }
}

impl Update {
    pub fn numbered(mut self) -> Update {
        let mut next = 0;
        self.number_from(&mut next);
        self
    }

    fn number_from(&mut self, next: &mut ExprId) {
        self.id = *next;
        *next += 1;
        match &mut self.kind {
            UpdateKind::Empty => {}
            UpdateKind::Seq(a, b) => {
                a.number_from(next);
                b.number_from(next);
            }
            UpdateKind::For { bind, body, .. } | UpdateKind::Let { bind, body, .. } => {
                bind.number_from(next);
                body.number_from(next);
            }
            UpdateKind::If { cond, then, els } => {
                cond.number_from(next);
                then.number_from(next);
                els.number_from(next);
            }
            UpdateKind::Delete(t) | UpdateKind::Rename(t, _) => t.number_from(next),
            UpdateKind::Insert { source, target, .. } => {
                source.number_from(next);
                target.number_from(next);
            }
            UpdateKind::Replace { target, source } => {
                target.number_from(next);
                source.number_from(next);
            }
        }
    }

    pub fn size(&self) -> usize {
        1 + match &self.kind {
            UpdateKind::Empty => 0,
            UpdateKind::Seq(a, b) => a.size() + b.size(),
            UpdateKind::For { bind, body, .. } | UpdateKind::Let { bind, body, .. } => bind.size() + body.size(),
            UpdateKind::If { cond, then, els } => cond.size() + then.size() + els.size(),
            UpdateKind::Delete(t) | UpdateKind::Rename(t, _) => t.size(),
            UpdateKind::Insert { source, target, .. } => source.size() + target.size(),
            UpdateKind::Replace { target, source } => target.size() + source.size(),
        }
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<Var>, out: &mut BTreeSet<Var>) {
        match &self.kind {
            UpdateKind::Empty => {}
            UpdateKind::Seq(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            UpdateKind::For { var, bind, body } | UpdateKind::Let { var, bind, body } => {
                bind.collect_free(bound, out);
                bound.push(var.clone());
                body.collect_free(bound, out);
                bound.pop();
            }
            UpdateKind::If { cond, then, els } => {
                cond.collect_free(bound, out);
                then.collect_free(bound, out);
                els.collect_free(bound, out);
            }
            UpdateKind::Delete(t) | UpdateKind::Rename(t, _) => t.collect_free(bound, out),
            UpdateKind::Insert { source, target, .. } => {
                source.collect_free(bound, out);
                target.collect_free(bound, out);
            }
            UpdateKind::Replace { target, source } => {
                target.collect_free(bound, out);
                source.collect_free(bound, out);
            }
        }
    }

    pub fn tags(&self) -> BTreeSet<Tag> {
        let mut out = BTreeSet::new();
        self.collect_tags(&mut out);
        out
    }

    fn collect_tags(&self, out: &mut BTreeSet<Tag>) {
        match &self.kind {
            UpdateKind::Empty => {}
            UpdateKind::Seq(a, b) => {
                a.collect_tags(out);
                b.collect_tags(out);
            }
            UpdateKind::For { bind, body, .. } | UpdateKind::Let { bind, body, .. } => {
                bind.collect_tags(out);
                body.collect_tags(out);
            }
            UpdateKind::If { cond, then, els } => {
                cond.collect_tags(out);
                then.collect_tags(out);
                els.collect_tags(out);
            }
            UpdateKind::Delete(t) => t.collect_tags(out),
            UpdateKind::Rename(t, b) => {
                t.collect_tags(out);
                out.insert(b.clone());
            }
            UpdateKind::Insert { source, target, .. } => {
                source.collect_tags(out);
                target.collect_tags(out);
            }
            UpdateKind::Replace { target, source } => {
                target.collect_tags(out);
                source.collect_tags(out);
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LangError {
    #[error("syntax error at offset {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unsupported construct: {0}")]
    Unsupported(String),
    #[error("unbound variable ${0}")]
    Unbound(String),
    #[error("constructors are not allowed in the binding of ${0}")]
    ConstructorInBinding(String),
}

/// Parses a query, desugars paths and numbers expression nodes.
pub fn parse_query(src: &str) -> Result<Query, LangError> {
    let mut p = Parser::new(src);
    let q = p.expr(None)?;
    p.skip_ws();
    if !p.at_end() {
        return p.err("unexpected trailing input");
    }
    let q = q.numbered();
    check_query(&q, &mut vec![Var::root()])?;
    Ok(q)
}

/// Parses an update, desugars paths and numbers expression nodes.
pub fn parse_update(src: &str) -> Result<Update, LangError> {
    let mut p = Parser::new(src);
    let u = p.uexpr()?;
    p.skip_ws();
    if !p.at_end() {
        return p.err("unexpected trailing input");
    }
    let u = u.numbered();
    check_update(&u, &mut vec![Var::root()])?;
    Ok(u)
}

fn check_binding(var: &Var, bind: &Query) -> Result<(), LangError> {
    if bind.has_constructor() {
        return Err(LangError::ConstructorInBinding(var.as_str().to_string()));
    }
    Ok(())
}

/// Scoping and binding restrictions.
pub fn check_query(q: &Query, bound: &mut Vec<Var>) -> Result<(), LangError> {
    match &q.kind {
        QueryKind::Empty | QueryKind::Str(_) => Ok(()),
        QueryKind::Step { var, .. } => {
            if bound.contains(var) {
                Ok(())
            } else {
                Err(LangError::Unbound(var.as_str().to_string()))
            }
        }
        QueryKind::Seq(a, b) => {
            check_query(a, bound)?;
            check_query(b, bound)
        }
        QueryKind::Elem(_, c) => check_query(c, bound),
        QueryKind::For { var, bind, body } | QueryKind::Let { var, bind, body } => {
            check_binding(var, bind)?;
            check_query(bind, bound)?;
            bound.push(var.clone());
            let r = check_query(body, bound);
            bound.pop();
            r
        }
        QueryKind::If { cond, then, els } => {
            check_query(cond, bound)?;
            check_query(then, bound)?;
            check_query(els, bound)
        }
    }
}

pub fn check_update(u: &Update, bound: &mut Vec<Var>) -> Result<(), LangError> {
    match &u.kind {
        UpdateKind::Empty => Ok(()),
        UpdateKind::Seq(a, b) => {
            check_update(a, bound)?;
            check_update(b, bound)
        }
        UpdateKind::For { var, bind, body } | UpdateKind::Let { var, bind, body } => {
            check_binding(var, bind)?;
            check_query(bind, bound)?;
            bound.push(var.clone());
            let r = check_update(body, bound);
            bound.pop();
            r
        }
        UpdateKind::If { cond, then, els } => {
            check_query(cond, bound)?;
            check_update(then, bound)?;
            check_update(els, bound)
        }
        UpdateKind::Delete(t) | UpdateKind::Rename(t, _) => check_query(t, bound),
        UpdateKind::Insert { source, target, .. } => {
            check_query(source, bound)?;
            check_query(target, bound)
        }
        UpdateKind::Replace { target, source } => {
            check_query(target, bound)?;
            check_query(source, bound)
        }
    }
}

/// A parsed location step before desugaring.
struct RawStep {
    axis: Axis,
    test: NodeTest,
    /// Context variable and conditions of `[...]` predicates.
    preds: Option<(Var, Vec<Query>)>,
}

enum PathBase {
    Document,
    Expr(Query),
}

struct Parser {
    src: Vec<char>,
    pos: usize,
    fresh: u32,
}

impl Parser {
    fn new(src: &str) -> Parser {
        Parser { src: src.chars().collect(), pos: 0, fresh: 0 }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, LangError> {
        Err(LangError::Syntax { pos: self.pos, msg: msg.into() })
    }

    fn fresh_var(&mut self) -> Var {
        self.fresh += 1;
        Var::new(&format!("#{}", self.fresh))
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<char> {
        self.src.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<char> {
        self.src.get(self.pos + off).copied()
    }

    fn skip_ws(&mut self) {
        loop {
            while self.peek().is_some_and(char::is_whitespace) {
                self.pos += 1;
            }
            // XQuery comments (: ... :)
            if self.starts_with("(:") {
                let mut depth = 0;
                while !self.at_end() {
                    if self.starts_with("(:") {
                        depth += 1;
                        self.pos += 2;
                    } else if self.starts_with(":)") {
                        depth -= 1;
                        self.pos += 2;
                        if depth == 0 {
                            break;
                        }
                    } else {
                        self.pos += 1;
                    }
                }
            } else {
                return;
            }
        }
    }

    fn starts_with(&self, s: &str) -> bool {
        s.chars().enumerate().all(|(i, c)| self.src.get(self.pos + i) == Some(&c))
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.starts_with(s) {
            self.pos += s.chars().count();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<(), LangError> {
        self.skip_ws();
        if self.eat(s) {
            Ok(())
        } else {
            self.err(format!("expected `{s}`"))
        }
    }

    /// Keyword at the cursor (not followed by a name character).
    fn at_kw(&self, kw: &str) -> bool {
        self.starts_with(kw) && !self.peek_at(kw.chars().count()).is_some_and(|c| is_name_char(c) || c == ':')
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        self.skip_ws();
        if self.at_kw(kw) {
            self.pos += kw.chars().count();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), LangError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.err(format!("expected `{kw}`"))
        }
    }

    /// Next non-blank character after the keyword at the cursor.
    fn after_kw(&self, kw: &str) -> Option<char> {
        let mut i = self.pos + kw.chars().count();
        while self.src.get(i).is_some_and(|c| c.is_whitespace()) {
            i += 1;
        }
        self.src.get(i).copied()
    }

    fn name(&mut self) -> Result<String, LangError> {
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_alphabetic() || c == '_' => self.pos += 1,
            _ => return self.err("expected a name"),
        }
        while self.peek().is_some_and(is_name_char) {
            self.pos += 1;
        }
        // A trailing '.' belongs to the surrounding syntax, not the name.
        while self.pos > start + 1 && self.src[self.pos - 1] == '.' {
            self.pos -= 1;
        }
        Ok(self.src[start..self.pos].iter().collect())
    }

    fn var_name(&mut self) -> Result<Var, LangError> {
        self.skip_ws();
        if !self.eat("$") {
            return self.err("expected a variable");
        }
        Ok(Var::new(&self.name()?))
    }

    // ---- queries ----

    fn expr(&mut self, ctx: Option<&Var>) -> Result<Query, LangError> {
        let mut items = vec![self.single(ctx)?];
        loop {
            self.skip_ws();
            if self.eat(",") {
                items.push(self.single(ctx)?);
            } else {
                break;
            }
        }
        Ok(build::seq_all(items))
    }

    fn is_flwor_start(&self) -> bool {
        (self.at_kw("for") && self.after_kw("for") == Some('$'))
            || (self.at_kw("let") && self.after_kw("let") == Some('$'))
    }

    fn is_if_start(&self) -> bool {
        self.at_kw("if")
            && !matches!(self.after_kw("if"), Some('/') | Some(':') | Some(',') | Some(')') | Some(']') | None)
    }

    fn single(&mut self, ctx: Option<&Var>) -> Result<Query, LangError> {
        self.skip_ws();
        if self.is_flwor_start() {
            let clauses = self.clauses(ctx)?;
            let body = self.single(ctx)?;
            return Ok(wrap_clauses(clauses, body, build::for_, build::let_, |c, b| build::if_(c, b, build::empty())));
        }
        if self.is_if_start() {
            self.expect_kw("if")?;
            let cond = self.condition(ctx)?;
            self.expect_kw("then")?;
            let then = self.single(ctx)?;
            let els = if self.eat_kw("else") { self.single(ctx)? } else { build::empty() };
            return Ok(build::if_(cond, then, els));
        }
        self.path_expr(ctx)
    }

    fn condition(&mut self, ctx: Option<&Var>) -> Result<Query, LangError> {
        self.skip_ws();
        if self.peek() == Some('(') {
            // `if (e) then` or `if (e)/p then`: parse as an ordinary expression.
            self.single(ctx)
        } else {
            self.single(ctx)
        }
    }

    /// `for $x in e (, $y in e)* | let $x := e` clauses, optional `where`,
    /// consumed through `return`.
    fn clauses(&mut self, ctx: Option<&Var>) -> Result<Vec<Clause>, LangError> {
        let mut out = Vec::new();
        loop {
            self.skip_ws();
            if self.eat_kw("for") {
                loop {
                    let v = self.var_name()?;
                    self.expect_kw("in")?;
                    let bind = self.single(ctx)?;
                    out.push(Clause::For(v, bind));
                    self.skip_ws();
                    if !self.eat(",") {
                        break;
                    }
                }
            } else if self.eat_kw("let") {
                loop {
                    let v = self.var_name()?;
                    self.expect(":=")?;
                    let bind = self.single(ctx)?;
                    out.push(Clause::Let(v, bind));
                    self.skip_ws();
                    if !self.eat(",") {
                        break;
                    }
                }
            } else if self.eat_kw("where") {
                let c = self.single(ctx)?;
                out.push(Clause::Where(c));
            } else if self.eat_kw("return") {
                return Ok(out);
            } else if self.at_kw("order") {
                return Err(LangError::Unsupported("order by".into()));
            } else {
                return self.err("expected `for`, `let`, `where` or `return`");
            }
        }
    }

    fn path_expr(&mut self, ctx: Option<&Var>) -> Result<Query, LangError> {
        self.skip_ws();
        let (base, mut steps) = if self.starts_with("//") {
            self.pos += 2;
            let mut steps = vec![RawStep { axis: Axis::DescendantOrSelf, test: NodeTest::Any, preds: None }];
            steps.extend(self.step(ctx)?);
            (PathBase::Document, steps)
        } else if self.starts_with("/") {
            self.pos += 1;
            self.skip_ws();
            if !self.at_step_start() {
                return Err(LangError::Unsupported("the document node `/` on its own".into()));
            }
            (PathBase::Document, self.step(ctx)?)
        } else if self.at_primary_start(ctx) {
            (PathBase::Expr(self.primary(ctx)?), Vec::new())
        } else if self.at_step_start() {
            match ctx {
                Some(c) => (PathBase::Expr(build::var(c)), self.step(ctx)?),
                None => return self.err("relative path outside a predicate (use `$var/...` or `/...`)"),
            }
        } else {
            return self.err("expected an expression");
        };
        loop {
            // No whitespace skipping before '/' would be needed, but allow it.
            let save = self.pos;
            self.skip_ws();
            if self.starts_with("//") {
                self.pos += 2;
                steps.push(RawStep { axis: Axis::DescendantOrSelf, test: NodeTest::Any, preds: None });
                steps.extend(self.step(ctx)?);
            } else if self.starts_with("/") {
                self.pos += 1;
                steps.extend(self.step(ctx)?);
            } else {
                self.pos = save;
                break;
            }
        }
        self.desugar_path(base, steps)
    }

    fn at_primary_start(&self, ctx: Option<&Var>) -> bool {
        match self.peek() {
            Some('$') | Some('(') | Some('"') | Some('\'') => true,
            Some('<') => self.peek_at(1).is_some_and(|c| c.is_alphabetic() || c == '_'),
            Some('.') => ctx.is_some() && self.peek_at(1) != Some('.'),
            _ => false,
        }
    }

    fn at_step_start(&self) -> bool {
        match self.peek() {
            Some(c) if c.is_alphabetic() || c == '_' || c == '*' || c == '@' => true,
            Some('.') => true,
            _ => false,
        }
    }

    fn primary(&mut self, ctx: Option<&Var>) -> Result<Query, LangError> {
        self.skip_ws();
        match self.peek() {
            Some('$') => {
                let v = self.var_name()?;
                Ok(build::var(&v))
            }
            Some('(') => {
                self.pos += 1;
                self.skip_ws();
                if self.eat(")") {
                    return Ok(build::empty());
                }
                let e = self.expr(ctx)?;
                self.expect(")")?;
                Ok(e)
            }
            Some(q @ ('"' | '\'')) => {
                self.pos += 1;
                let start = self.pos;
                while self.peek().is_some_and(|c| c != q) {
                    self.pos += 1;
                }
                if self.at_end() {
                    return self.err("unterminated string");
                }
                let s: String = self.src[start..self.pos].iter().collect();
                self.pos += 1;
                Ok(build::string(&s))
            }
            Some('<') => self.constructor(ctx),
            Some('.') => {
                self.pos += 1;
                Ok(build::var(ctx.expect("checked by at_primary_start")))
            }
            _ => self.err("expected an expression"),
        }
    }

    fn constructor(&mut self, ctx: Option<&Var>) -> Result<Query, LangError> {
        self.expect("<")?;
        let tag = self.name()?;
        self.skip_ws();
        if self.peek().is_some_and(|c| c.is_alphabetic()) {
            return Err(LangError::Unsupported("attributes in element constructors".into()));
        }
        if self.eat("/>") {
            return Ok(build::elem(&tag, build::empty()));
        }
        self.expect(">")?;
        let mut items = Vec::new();
        loop {
            if self.at_end() {
                return self.err(format!("unterminated element <{tag}>"));
            }
            if self.starts_with("</") {
                self.pos += 2;
                let close = self.name()?;
                if close != tag {
                    return self.err(format!("mismatched closing tag </{close}> for <{tag}>"));
                }
                self.expect(">")?;
                break;
            }
            let c = self.peek().unwrap();
            if c.is_whitespace() || c == ',' {
                self.pos += 1;
            } else if c == '{' {
                self.pos += 1;
                self.skip_ws();
                if !self.eat("}") {
                    items.push(self.expr(ctx)?);
                    self.expect("}")?;
                }
            } else if c == '<' {
                items.push(self.constructor(ctx)?);
            } else if matches!(c, '$' | '(' | '"' | '\'' | '/') || self.is_flwor_start() || self.is_if_start() {
                items.push(self.single(ctx)?);
            } else {
                let start = self.pos;
                while self.peek().is_some_and(|c| c != '<' && c != '{') {
                    self.pos += 1;
                }
                let text: String = self.src[start..self.pos].iter().collect();
                let text = text.trim();
                if !text.is_empty() {
                    items.push(build::string(text));
                }
            }
        }
        Ok(build::elem(&tag, build::seq_all(items)))
    }

    /// One written step, which may expand to several core steps.
    fn step(&mut self, ctx: Option<&Var>) -> Result<Vec<RawStep>, LangError> {
        self.skip_ws();
        let mut steps = if self.eat("..") {
            vec![RawStep { axis: Axis::Parent, test: NodeTest::Any, preds: None }]
        } else if self.peek() == Some('.') {
            self.pos += 1;
            vec![RawStep { axis: Axis::SelfAxis, test: NodeTest::Any, preds: None }]
        } else if self.peek() == Some('@') {
            return Err(LangError::Unsupported("attribute axis".into()));
        } else if self.peek() == Some('*') {
            self.pos += 1;
            vec![RawStep { axis: Axis::Child, test: NodeTest::Any, preds: None }]
        } else {
            let save = self.pos;
            let name = self.name()?;
            self.skip_ws();
            if self.eat("::") {
                self.skip_ws();
                let test = self.node_test()?;
                match name.as_str() {
                    "following" => vec![
                        RawStep { axis: Axis::AncestorOrSelf, test: NodeTest::Any, preds: None },
                        RawStep { axis: Axis::FollowingSibling, test: NodeTest::Any, preds: None },
                        RawStep { axis: Axis::DescendantOrSelf, test, preds: None },
                    ],
                    "preceding" => vec![
                        RawStep { axis: Axis::AncestorOrSelf, test: NodeTest::Any, preds: None },
                        RawStep { axis: Axis::PrecedingSibling, test: NodeTest::Any, preds: None },
                        RawStep { axis: Axis::DescendantOrSelf, test, preds: None },
                    ],
                    "attribute" | "namespace" => return Err(LangError::Unsupported(format!("{name} axis"))),
                    _ => match Axis::from_name(&name) {
                        Some(axis) => vec![RawStep { axis, test, preds: None }],
                        None => return self.err(format!("unknown axis `{name}`")),
                    },
                }
            } else {
                self.pos = save;
                let test = self.node_test()?;
                vec![RawStep { axis: Axis::Child, test, preds: None }]
            }
        };
        // Predicates apply to the last core step.
        loop {
            self.skip_ws();
            if !self.starts_with("[") {
                break;
            }
            self.pos += 1;
            let last = steps.last_mut().expect("nonempty");
            let w = match &last.preds {
                Some((w, _)) => w.clone(),
                None => {
                    self.fresh += 1;
                    Var::new(&format!("#{}", self.fresh))
                }
            };
            let cond = self.expr(Some(&w))?;
            self.expect("]")?;
            let last = steps.last_mut().expect("nonempty");
            last.preds.get_or_insert_with(|| (w.clone(), Vec::new())).1.push(cond);
        }
        let _ = ctx;
        Ok(steps)
    }

    fn node_test(&mut self) -> Result<NodeTest, LangError> {
        if self.eat("*") {
            return Ok(NodeTest::Any);
        }
        let name = self.name()?;
        let save = self.pos;
        self.skip_ws();
        if self.eat("(") {
            self.skip_ws();
            if !self.eat(")") {
                return Err(LangError::Unsupported(format!("function call {name}(...)")));
            }
            return match name.as_str() {
                "node" => Ok(NodeTest::Any),
                "text" => Ok(NodeTest::Text),
                _ => Err(LangError::Unsupported(format!("function call {name}()"))),
            };
        }
        self.pos = save;
        Ok(NodeTest::Tag(Tag::new(&name)))
    }

    fn desugar_path(&mut self, base: PathBase, steps: Vec<RawStep>) -> Result<Query, LangError> {
        match base {
            PathBase::Expr(e) => {
                if steps.is_empty() {
                    return Ok(e);
                }
                if let QueryKind::Step { var, axis: Axis::SelfAxis, test: NodeTest::Any } = &e.kind {
                    let v = var.clone();
                    return Ok(self.chain_steps(&v, steps));
                }
                let v = self.fresh_var();
                let rest = self.chain_steps(&v, steps);
                Ok(build::for_(&v, e, rest))
            }
            PathBase::Document => {
                // The document node is the parent of the root element.
                let mut steps = steps;
                let first = steps.remove(0);
                let merged = if first.axis == Axis::DescendantOrSelf
                    && first.test == NodeTest::Any
                    && first.preds.is_none()
                    && !steps.is_empty()
                    && matches!(steps[0].axis, Axis::Child | Axis::Descendant | Axis::DescendantOrSelf | Axis::SelfAxis)
                {
                    let s = steps.remove(0);
                    RawStep { axis: Axis::DescendantOrSelf, test: s.test, preds: s.preds }
                } else {
                    match first.axis {
                        Axis::Child => RawStep { axis: Axis::SelfAxis, ..first },
                        Axis::Descendant | Axis::DescendantOrSelf => RawStep { axis: Axis::DescendantOrSelf, ..first },
                        a => {
                            return Err(LangError::Unsupported(format!(
                                "axis {} applied to the document node",
                                a.name()
                            )))
                        }
                    }
                };
                steps.insert(0, merged);
                Ok(self.chain_steps(&Var::root(), steps))
            }
        }
    }

    fn chain_steps(&mut self, x: &Var, mut steps: Vec<RawStep>) -> Query {
        let first = steps.remove(0);
        let q = self.step_query(x, first);
        if steps.is_empty() {
            q
        } else {
            let v = self.fresh_var();
            let rest = self.chain_steps(&v, steps);
            build::for_(&v, q, rest)
        }
    }

    fn step_query(&mut self, x: &Var, s: RawStep) -> Query {
        let st = build::step(x, s.axis, s.test);
        match s.preds {
            None => st,
            Some((w, conds)) => {
                let mut body = build::var(&w);
                for c in conds.into_iter().rev() {
                    body = build::if_(c, body, build::empty());
                }
                build::for_(&w, st, body)
            }
        }
    }

    // ---- updates ----

    fn uexpr(&mut self) -> Result<Update, LangError> {
        let mut items = vec![self.usingle()?];
        loop {
            self.skip_ws();
            if self.eat(",") {
                items.push(self.usingle()?);
            } else {
                break;
            }
        }
        Ok(build::useq_all(items))
    }

    fn opt_node_kw(&mut self) {
        self.skip_ws();
        for kw in ["nodes", "node"] {
            if self.at_kw(kw) && self.after_kw(kw) != Some('(') {
                self.pos += kw.len();
                return;
            }
        }
    }

    fn usingle(&mut self) -> Result<Update, LangError> {
        self.skip_ws();
        if self.is_flwor_start() {
            let clauses = self.clauses(None)?;
            let body = self.usingle()?;
            return Ok(wrap_clauses(clauses, body, build::ufor, build::ulet, |c, b| build::uif(c, b, build::uempty())));
        }
        if self.is_if_start() {
            self.expect_kw("if")?;
            let cond = self.condition(None)?;
            self.expect_kw("then")?;
            let then = self.usingle()?;
            let els = if self.eat_kw("else") { self.usingle()? } else { build::uempty() };
            return Ok(build::uif(cond, then, els));
        }
        if self.peek() == Some('(') {
            self.pos += 1;
            self.skip_ws();
            if self.eat(")") {
                return Ok(build::uempty());
            }
            let u = self.uexpr()?;
            self.expect(")")?;
            return Ok(u);
        }
        if self.eat_kw("delete") {
            self.opt_node_kw();
            let t = self.single(None)?;
            return Ok(build::delete(t));
        }
        if self.eat_kw("rename") {
            self.opt_node_kw();
            let t = self.single(None)?;
            self.expect_kw("as")?;
            self.skip_ws();
            let tag = if let Some(q @ ('"' | '\'')) = self.peek() {
                self.pos += 1;
                let n = self.name()?;
                self.expect(&q.to_string())?;
                n
            } else {
                self.name()?
            };
            return Ok(build::rename(t, &tag));
        }
        if self.eat_kw("insert") {
            self.opt_node_kw();
            let src = self.single(None)?;
            let pos = if self.eat_kw("before") {
                InsertPos::Before
            } else if self.eat_kw("after") {
                InsertPos::After
            } else if self.eat_kw("into") {
                InsertPos::Into
            } else if self.eat_kw("as") {
                let p = if self.eat_kw("first") {
                    InsertPos::IntoFirst
                } else if self.eat_kw("last") {
                    InsertPos::IntoLast
                } else {
                    return self.err("expected `first` or `last`");
                };
                self.expect_kw("into")?;
                p
            } else {
                return self.err("expected an insert position");
            };
            let target = self.single(None)?;
            return Ok(build::insert(src, pos, target));
        }
        if self.eat_kw("replace") {
            if self.eat_kw("value") {
                return Err(LangError::Unsupported("replace value of".into()));
            }
            self.opt_node_kw();
            let t = self.single(None)?;
            self.expect_kw("with")?;
            let s = self.single(None)?;
            return Ok(build::replace(t, s));
        }
        self.err("expected an update (delete, rename, insert, replace, for, let, if)")
    }
}

enum Clause {
    For(Var, Query),
    Let(Var, Query),
    Where(Query),
}

fn wrap_clauses<T>(
    clauses: Vec<Clause>,
    body: T,
    mk_for: impl Fn(&Var, Query, T) -> T,
    mk_let: impl Fn(&Var, Query, T) -> T,
    mk_where: impl Fn(Query, T) -> T,
) -> T {
    let mut acc = body;
    for c in clauses.into_iter().rev() {
        acc = match c {
            Clause::For(v, b) => mk_for(&v, b, acc),
            Clause::Let(v, b) => mk_let(&v, b, acc),
            Clause::Where(c) => mk_where(c, acc),
        };
    }
    acc
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            QueryKind::Empty => f.write_str("()"),
            QueryKind::Seq(a, b) => write!(f, "({a}, {b})"),
            QueryKind::Elem(t, c) => match c.kind {
                QueryKind::Empty => write!(f, "<{t}/>"),
                _ => write!(f, "<{t}>{{{c}}}</{t}>"),
            },
            QueryKind::Str(s) => {
                if s.contains('"') {
                    write!(f, "'{s}'")
                } else {
                    write!(f, "\"{s}\"")
                }
            }
            QueryKind::Step { var, axis: Axis::SelfAxis, test: NodeTest::Any } => write!(f, "{var}"),
            QueryKind::Step { var, axis, test } => write!(f, "{var}/{}::{test}", axis.name()),
            QueryKind::For { var, bind, body } => write!(f, "(for {var} in {bind} return {body})"),
            QueryKind::Let { var, bind, body } => write!(f, "(let {var} := {bind} return {body})"),
            QueryKind::If { cond, then, els } => write!(f, "(if ({cond}) then {then} else {els})"),
        }
    }
}

impl fmt::Display for Update {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            UpdateKind::Empty => f.write_str("()"),
            UpdateKind::Seq(a, b) => write!(f, "({a}, {b})"),
            UpdateKind::For { var, bind, body } => write!(f, "(for {var} in {bind} return {body})"),
            UpdateKind::Let { var, bind, body } => write!(f, "(let {var} := {bind} return {body})"),
            UpdateKind::If { cond, then, els } => write!(f, "(if ({cond}) then {then} else {els})"),
            UpdateKind::Delete(t) => write!(f, "delete {t}"),
            UpdateKind::Rename(t, b) => write!(f, "rename {t} as {b}"),
            UpdateKind::Insert { source, pos, target } => {
                write!(f, "insert {source} {} {target}", pos.keyword())
            }
            UpdateKind::Replace { target, source } => write!(f, "replace {target} with {source}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(q: &Query) -> String {
        q.to_string()
    }

    #[test]
    fn single_child_step_from_variable() {
        let q = parse_query("$root/child::a").unwrap();
        assert_eq!(q.kind, QueryKind::Step { var: Var::root(), axis: Axis::Child, test: NodeTest::Tag(Tag::new("a")) });
    }

    #[test]
    fn absolute_paths_start_at_root_element() {
        assert_eq!(shape(&parse_query("/r").unwrap()), "$root/self::r");
        assert_eq!(shape(&parse_query("/descendant::b").unwrap()), "$root/descendant-or-self::b");
        assert_eq!(
            shape(&parse_query("//a//c").unwrap()),
            "(for $_v1 in $root/descendant-or-self::a return (for $_v2 in $_v1/descendant-or-self::node() return $_v2/child::c))"
        );
    }

    #[test]
    fn multi_step_paths_nest_fors_with_fresh_variables() {
        let q = parse_query("$x/a/b").map(|_| ()).unwrap_err();
        assert_eq!(q, LangError::Unbound("x".into()));
        let q = parse_query("for $x in /r return $x/a/b").unwrap();
        assert_eq!(shape(&q), "(for $x in $root/self::r return (for $_v1 in $x/child::a return $_v1/child::b))");
    }

    #[test]
    fn predicates_become_filters() {
        let q = parse_query("/r/a[b]").unwrap();
        assert_eq!(
            shape(&q),
            "(for $_v2 in $root/self::r return (for $_v1 in $_v2/child::a return (if ($_v1/child::b) then $_v1 else ())))"
        );
    }

    #[test]
    fn following_axis_is_rewritten() {
        let q = parse_query("for $x in /r return $x/following::a").unwrap();
        let s = shape(&q);
        assert!(s.contains("ancestor-or-self::node()"));
        assert!(s.contains("following-sibling::node()"));
        assert!(s.contains("descendant-or-self::a"));
    }

    #[test]
    fn constructors_with_bare_text_and_unbraced_content() {
        let q = parse_query("<author><first>Umberto</first><second>Eco</second></author>").unwrap();
        assert_eq!(shape(&q), "<author>{(<first>{\"Umberto\"}</first>, <second>{\"Eco\"}</second>)}</author>");
        let q = parse_query("for $x in /r return <r1>($x/a, <r2>$x/b</r2>)</r1>").unwrap();
        assert!(shape(&q).contains("<r2>{$x/child::b}</r2>"));
    }

    #[test]
    fn constructor_in_binding_rejected() {
        assert_eq!(parse_query("let $x := <a/> return <b>{$x}</b>"), Err(LangError::ConstructorInBinding("x".into())));
    }

    #[test]
    fn functions_and_attributes_rejected() {
        assert!(parse_query("count(/a)").is_err());
        assert!(matches!(parse_query("/a/@id"), Err(LangError::Unsupported(_))));
        assert!(matches!(parse_query("/a/b + 1"), Err(LangError::Syntax { .. })));
    }

    #[test]
    fn updates_parse() {
        let u = parse_update("for $x in //book return insert <author/> into $x").unwrap();
        assert!(matches!(u.kind, UpdateKind::For { .. }));
        let u = parse_update("delete //b//c").unwrap();
        assert!(matches!(u.kind, UpdateKind::Delete(_)));
        let u = parse_update("rename node /r/a as z, insert <x/> as first into /r").unwrap();
        assert!(matches!(u.kind, UpdateKind::Seq(..)));
        let u = parse_update("replace /r/a with <b/>").unwrap();
        assert!(matches!(u.kind, UpdateKind::Replace { .. }));
    }

    #[test]
    fn ids_are_preorder() {
        let q = parse_query("(/a, /b)").unwrap();
        let QueryKind::Seq(a, b) = &q.kind else { panic!() };
        assert_eq!((q.id, a.id, b.id), (0, 1, 2));
    }

    #[test]
    fn if_without_parentheses_or_else() {
        let q = parse_query("for $x in //node() return if $x/b then $x/a").unwrap();
        assert!(shape(&q).contains("(if ($x/child::b) then $x/child::a else ())"));
    }
}
