//! Stores of XML nodes, trees, projections and bounded enumeration of valid trees.

use std::cell::OnceCell;
use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::sync::Arc;

use quick_xml::events::Event;
use quick_xml::Reader;
use thiserror::Error;

use crate::schema::{Dtd, Label, Sym, Tag};

/// A node location. Fresh locations are handed out in increasing order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Loc(pub u32);

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NodeData {
    Element { tag: Tag, children: Vec<Loc> },
    Text(String),
}

#[derive(Clone, Debug)]
pub struct Node {
    pub data: NodeData,
    pub parent: Option<Loc>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StoreError {
    #[error("unknown location {0:?}")]
    UnknownLoc(Loc),
    #[error("XML parse error: {0}")]
    Xml(String),
    #[error("attributes are not supported (element `{0}`)")]
    Attributes(String),
    #[error("document has no root element")]
    NoRoot,
    #[error("document has more than one root element")]
    MultipleRoots,
    #[error("text outside the root element")]
    StrayText,
}

/// A partial map from locations to nodes.
#[derive(Clone, Debug, Default)]
pub struct Store {
    nodes: Vec<Node>,
}

impl Store {
    pub fn new() -> Store {
        Store::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, l: Loc) -> bool {
        (l.0 as usize) < self.nodes.len()
    }

    pub fn node(&self, l: Loc) -> &Node {
        &self.nodes[l.0 as usize]
    }

    pub fn get(&self, l: Loc) -> Result<&Node, StoreError> {
        self.nodes.get(l.0 as usize).ok_or(StoreError::UnknownLoc(l))
    }

    pub fn parent(&self, l: Loc) -> Option<Loc> {
        self.node(l).parent
    }

    pub fn children(&self, l: Loc) -> &[Loc] {
        match &self.node(l).data {
            NodeData::Element { children, .. } => children,
            NodeData::Text(_) => &[],
        }
    }

    pub fn label(&self, l: Loc) -> Label {
        match &self.node(l).data {
            NodeData::Element { tag, .. } => Label::Tag(tag.clone()),
            NodeData::Text(_) => Label::Text,
        }
    }

    pub fn is_element(&self, l: Loc) -> bool {
        matches!(self.node(l).data, NodeData::Element { .. })
    }

    pub fn new_text(&mut self, s: &str) -> Loc {
        let l = Loc(self.nodes.len() as u32);
        self.nodes.push(Node { data: NodeData::Text(s.to_string()), parent: None });
        l
    }

    /// A fresh element adopting `children` (which must be parentless).
    pub fn new_element(&mut self, tag: Tag, children: Vec<Loc>) -> Loc {
        let l = Loc(self.nodes.len() as u32);
        for &c in &children {
            self.nodes[c.0 as usize].parent = Some(l);
        }
        self.nodes.push(Node { data: NodeData::Element { tag, children }, parent: None });
        l
    }

    /// Copies the subtree at `l` to fresh locations; the copy has no parent.
    pub fn deep_copy(&mut self, l: Loc) -> Loc {
        match self.node(l).data.clone() {
            NodeData::Text(s) => self.new_text(&s),
            NodeData::Element { tag, children } => {
                let kids: Vec<Loc> = children.iter().map(|&c| self.deep_copy(c)).collect();
                self.new_element(tag, kids)
            }
        }
    }

    pub fn rename(&mut self, l: Loc, new_tag: Tag) {
        if let NodeData::Element { tag, .. } = &mut self.nodes[l.0 as usize].data {
            *tag = new_tag;
        }
    }

    /// Replaces the child list of `l`, fixing parent pointers.
    pub fn set_children(&mut self, l: Loc, new_children: Vec<Loc>) {
        let old: Vec<Loc> = self.children(l).to_vec();
        for c in old {
            if self.nodes[c.0 as usize].parent == Some(l) {
                self.nodes[c.0 as usize].parent = None;
            }
        }
        for &c in &new_children {
            self.nodes[c.0 as usize].parent = Some(l);
        }
        if let NodeData::Element { children, .. } = &mut self.nodes[l.0 as usize].data {
            *children = new_children;
        }
    }

    /// Root of the component containing `l`.
    pub fn component_root(&self, mut l: Loc) -> Loc {
        while let Some(p) = self.parent(l) {
            l = p;
        }
        l
    }

    /// Ancestors of `l`, nearest first.
    pub fn ancestors(&self, l: Loc) -> Vec<Loc> {
        let mut out = Vec::new();
        let mut cur = self.parent(l);
        while let Some(p) = cur {
            out.push(p);
            cur = self.parent(p);
        }
        out
    }

    /// Proper descendants of `l` in document order.
    pub fn descendants(&self, l: Loc) -> Vec<Loc> {
        let mut out = Vec::new();
        self.collect_descendants(l, &mut out);
        out
    }

    fn collect_descendants(&self, l: Loc, out: &mut Vec<Loc>) {
        for &c in self.children(l) {
            out.push(c);
            self.collect_descendants(c, out);
        }
    }

    /// Key ordering nodes by document order (trees ordered by root location).
    pub fn order_key(&self, l: Loc) -> (Loc, Vec<usize>) {
        let mut path = Vec::new();
        let mut cur = l;
        while let Some(p) = self.parent(cur) {
            let i = self.children(p).iter().position(|&c| c == cur).unwrap_or(0);
            path.push(i);
            cur = p;
        }
        path.reverse();
        (cur, path)
    }

    /// Sorts into document order and removes duplicates.
    pub fn sort_doc_order(&self, locs: &mut Vec<Loc>) {
        let mut keyed: Vec<((Loc, Vec<usize>), Loc)> = locs.iter().map(|&l| (self.order_key(l), l)).collect();
        keyed.sort();
        keyed.dedup_by(|a, b| a.1 == b.1);
        *locs = keyed.into_iter().map(|(_, l)| l).collect();
    }

    /// Label path from the component root to `l`.
    pub fn chain_of(&self, l: Loc) -> Vec<Label> {
        let mut v: Vec<Label> = self.ancestors(l).into_iter().map(|a| self.label(a)).collect();
        v.reverse();
        v.push(self.label(l));
        v
    }

    /// Canonical serialisation of the subtree at `l`.
    pub fn serialize(&self, l: Loc) -> String {
        let mut s = String::new();
        self.write_xml(l, &mut s);
        s
    }

    fn write_xml(&self, l: Loc, out: &mut String) {
        match &self.node(l).data {
            NodeData::Text(t) => out.push_str(&escape(t)),
            NodeData::Element { tag, children } => {
                if children.is_empty() {
                    let _ = write!(out, "<{tag}/>");
                } else {
                    let _ = write!(out, "<{tag}>");
                    for &c in children {
                        self.write_xml(c, out);
                    }
                    let _ = write!(out, "</{tag}>");
                }
            }
        }
    }

    /// Ordered-tree equality of two subtrees.
    pub fn subtree_eq(&self, a: Loc, other: &Store, b: Loc) -> bool {
        match (&self.node(a).data, &other.node(b).data) {
            (NodeData::Text(x), NodeData::Text(y)) => x == y,
            (NodeData::Element { tag: t1, children: c1 }, NodeData::Element { tag: t2, children: c2 }) => {
                t1 == t2 && c1.len() == c2.len() && c1.iter().zip(c2).all(|(&x, &y)| self.subtree_eq(x, other, y))
            }
            _ => false,
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Sequences of nodes are equivalent when they are pointwise isomorphic.
pub fn value_equivalent(s1: &Store, l1: &[Loc], s2: &Store, l2: &[Loc]) -> bool {
    l1.len() == l2.len() && l1.iter().zip(l2).all(|(&a, &b)| s1.subtree_eq(a, s2, b))
}

/// A store together with a root location.
#[derive(Clone, Debug)]
pub struct Tree {
    pub store: Store,
    pub root: Loc,
}

impl Tree {
    /// Parses an XML document. Whitespace-only text is dropped; attributes,
    /// which the data model lacks, are rejected.
    pub fn parse(xml: &str) -> Result<Tree, StoreError> {
        let mut reader = Reader::from_str(xml);
        reader.trim_text(false);
        let mut store = Store::new();
        // Each open element: (tag, children, pending text).
        let mut stack: Vec<(Tag, Vec<Loc>, String)> = Vec::new();
        let mut root: Option<Loc> = None;
        let flush = |store: &mut Store, frame: &mut (Tag, Vec<Loc>, String)| {
            if !frame.2.trim().is_empty() {
                let t = store.new_text(&frame.2);
                frame.1.push(t);
            }
            frame.2.clear();
        };
        loop {
            let ev = reader.read_event().map_err(|e| StoreError::Xml(e.to_string()))?;
            match ev {
                Event::Start(e) => {
                    let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                    if e.attributes().next().is_some() {
                        return Err(StoreError::Attributes(name));
                    }
                    if let Some(top) = stack.last_mut() {
                        flush(&mut store, top);
                    } else if root.is_some() {
                        return Err(StoreError::MultipleRoots);
                    }
                    stack.push((Tag::new(&name), Vec::new(), String::new()));
                }
                Event::Empty(e) => {
                    let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                    if e.attributes().next().is_some() {
                        return Err(StoreError::Attributes(name));
                    }
                    let l = store.new_element(Tag::new(&name), Vec::new());
                    match stack.last_mut() {
                        Some(top) => {
                            flush(&mut store, top);
                            top.1.push(l);
                        }
                        None if root.is_some() => return Err(StoreError::MultipleRoots),
                        None => root = Some(l),
                    }
                }
                Event::End(_) => {
                    let mut frame = stack.pop().ok_or_else(|| StoreError::Xml("unbalanced end tag".into()))?;
                    flush(&mut store, &mut frame);
                    let l = store.new_element(frame.0, frame.1);
                    match stack.last_mut() {
                        Some(top) => top.1.push(l),
                        None => root = Some(l),
                    }
                }
                Event::Text(t) => {
                    let s = t.unescape().map_err(|e| StoreError::Xml(e.to_string()))?;
                    match stack.last_mut() {
                        Some(top) => top.2.push_str(&s),
                        None if s.trim().is_empty() => {}
                        None => return Err(StoreError::StrayText),
                    }
                }
                Event::CData(c) => {
                    let s = String::from_utf8_lossy(&c.into_inner()).into_owned();
                    match stack.last_mut() {
                        Some(top) => top.2.push_str(&s),
                        None => return Err(StoreError::StrayText),
                    }
                }
                Event::Eof => break,
                _ => {}
            }
        }
        if !stack.is_empty() {
            return Err(StoreError::Xml("unclosed element".into()));
        }
        let root = root.ok_or(StoreError::NoRoot)?;
        // Renumber so that locations follow document order.
        let value = XmlValue::from_store(&store, root);
        Ok(value.to_tree())
    }

    pub fn to_xml(&self) -> String {
        self.store.serialize(self.root)
    }

    /// Locations of the tree (the root and its descendants), document order.
    pub fn locations(&self) -> Vec<Loc> {
        let mut v = vec![self.root];
        v.extend(self.store.descendants(self.root));
        v
    }

    /// Type of a location: its label.
    pub fn typ(&self, l: Loc) -> Result<Label, StoreError> {
        self.store.get(l)?;
        Ok(self.store.label(l))
    }

    /// Chain from the root of `l`'s tree to `l`.
    pub fn node_chain(&self, l: Loc) -> Result<Vec<Label>, StoreError> {
        self.store.get(l)?;
        Ok(self.store.chain_of(l))
    }

    /// Locations whose chain satisfies `typed`; with `subtree_closed`, whole
    /// subtrees below matching locations are included.
    pub fn locations_typed_by(&self, typed: impl Fn(&[Label]) -> bool, subtree_closed: bool) -> Vec<Loc> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        self.walk_typed(self.root, &mut path, &typed, subtree_closed, false, &mut out);
        out
    }

    fn walk_typed(
        &self,
        l: Loc,
        path: &mut Vec<Label>,
        typed: &impl Fn(&[Label]) -> bool,
        closed: bool,
        inside: bool,
        out: &mut Vec<Loc>,
    ) {
        path.push(self.store.label(l));
        let hit = inside || typed(path);
        if hit {
            out.push(l);
        }
        for &c in self.store.children(l) {
            self.walk_typed(c, path, typed, closed, closed && hit, out);
        }
        path.pop();
    }

    /// Restriction of the tree to `keep` closed under ancestors. Locations are
    /// preserved; the root is always kept.
    pub fn project(&self, keep: &[Loc]) -> Tree {
        let mut kept: HashSet<Loc> = HashSet::new();
        kept.insert(self.root);
        for &l in keep {
            let mut cur = Some(l);
            while let Some(x) = cur {
                if !kept.insert(x) {
                    break;
                }
                cur = self.store.parent(x);
            }
        }
        let mut store = self.store.clone();
        for l in self.locations() {
            if store.is_element(l) {
                let kids: Vec<Loc> = self.store.children(l).iter().copied().filter(|c| kept.contains(c)).collect();
                store.set_children(l, kids);
            }
        }
        Tree { store, root: self.root }
    }

    /// Checks validity against a DTD.
    pub fn is_valid(&self, d: &Dtd) -> bool {
        self.store.parent(self.root).is_none()
            && self.store.label(self.root) == d.root_label()
            && self.valid_at(d, self.root)
    }

    fn valid_at(&self, d: &Dtd, l: Loc) -> bool {
        match &self.store.node(l).data {
            NodeData::Text(_) => true,
            NodeData::Element { tag, children } => {
                let Some(model) = d.content(tag) else { return false };
                let word: Vec<Label> = children.iter().map(|&c| self.store.label(c)).collect();
                model.matches(&word) && children.iter().all(|&c| self.valid_at(d, c))
            }
        }
    }

    /// Length of the longest chain.
    pub fn depth(&self) -> usize {
        self.locations().iter().map(|&l| self.store.ancestors(l).len() + 1).max().unwrap_or(0)
    }
}

/// Validity of `t` with respect to `d`.
pub fn validate(d: &Dtd, t: &Tree) -> bool {
    t.is_valid(d)
}

/// An immutable XML value, used to build trees.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum XmlValue {
    Elem(Tag, Vec<Arc<XmlValue>>),
    Text(String),
}

impl XmlValue {
    pub fn from_store(s: &Store, l: Loc) -> XmlValue {
        match &s.node(l).data {
            NodeData::Text(t) => XmlValue::Text(t.clone()),
            NodeData::Element { tag, children } => {
                XmlValue::Elem(tag.clone(), children.iter().map(|&c| Arc::new(XmlValue::from_store(s, c))).collect())
            }
        }
    }

    /// Builds a tree whose locations follow document order.
    pub fn to_tree(&self) -> Tree {
        let mut store = Store::new();
        let root = self.build(&mut store, None);
        Tree { store, root }
    }

    fn build(&self, store: &mut Store, parent: Option<Loc>) -> Loc {
        let l = Loc(store.nodes.len() as u32);
        match self {
            XmlValue::Text(t) => {
                store.nodes.push(Node { data: NodeData::Text(t.clone()), parent });
            }
            XmlValue::Elem(tag, kids) => {
                store.nodes.push(Node { data: NodeData::Element { tag: tag.clone(), children: Vec::new() }, parent });
                let locs: Vec<Loc> = kids.iter().map(|k| k.build(store, Some(l))).collect();
                if let NodeData::Element { children, .. } = &mut store.nodes[l.0 as usize].data {
                    *children = locs;
                }
            }
        }
        l
    }
}

/// Bounds for [`enumerate_valid`].
#[derive(Clone, Debug)]
pub struct EnumBounds {
    /// Repetitions per `*`/`+` occurrence per node.
    pub max_repeat: usize,
    /// Maximal chain length (the root has length 1; text nodes count).
    pub max_depth: usize,
    /// Values used for text nodes.
    pub text_pool: Vec<String>,
}

impl EnumBounds {
    pub fn new(max_depth: usize, max_repeat: usize) -> EnumBounds {
        EnumBounds { max_repeat, max_depth, text_pool: vec!["x".to_string()] }
    }
}

struct Enumerator<'a> {
    d: &'a Dtd,
    b: &'a EnumBounds,
    /// Unrolled content words, computed on first visit.
    words: Vec<OnceCell<Vec<Vec<Sym>>>>,
}

impl<'a> Enumerator<'a> {
    fn new(d: &'a Dtd, b: &'a EnumBounds) -> Self {
        Enumerator { d, b, words: (0..d.size()).map(|_| OnceCell::new()).collect() }
    }

    /// At the depth limit only the empty content is possible.
    fn leaf_ok(&self, s: Sym) -> bool {
        self.d.content_sym(s).expect("declared").matches(&[])
    }

    fn words(&self, s: Sym) -> &[Vec<Sym>] {
        self.words[s as usize].get_or_init(|| {
            let m = self.d.content_sym(s).expect("declared");
            m.unroll(self.b.max_repeat)
                .into_iter()
                .map(|w| w.iter().map(|l| self.d.sym_of(l).expect("declared")).collect())
                .collect()
        })
    }

    fn count(&self, s: Sym, depth: usize, memo: &mut HashMap<(Sym, usize), u128>) -> u128 {
        if depth > self.b.max_depth {
            return 0;
        }
        if s == self.d.text_sym() {
            return self.b.text_pool.len() as u128;
        }
        if depth == self.b.max_depth {
            return u128::from(self.leaf_ok(s));
        }
        if let Some(&c) = memo.get(&(s, depth)) {
            return c;
        }
        let mut total: u128 = 0;
        for w in self.words(s) {
            let mut prod: u128 = 1;
            for &c in w {
                prod = prod.saturating_mul(self.count(c, depth + 1, memo));
                if prod == 0 {
                    break;
                }
            }
            total = total.saturating_add(prod);
        }
        memo.insert((s, depth), total);
        total
    }

    fn values(
        &self,
        s: Sym,
        depth: usize,
        memo: &mut HashMap<(Sym, usize), Arc<Vec<Arc<XmlValue>>>>,
    ) -> Arc<Vec<Arc<XmlValue>>> {
        if depth > self.b.max_depth {
            return Arc::new(Vec::new());
        }
        if let Some(v) = memo.get(&(s, depth)) {
            return v.clone();
        }
        let out: Vec<Arc<XmlValue>> = if s == self.d.text_sym() {
            self.b.text_pool.iter().map(|t| Arc::new(XmlValue::Text(t.clone()))).collect()
        } else if depth == self.b.max_depth {
            let tag = self.d.tags()[s as usize].clone();
            if self.leaf_ok(s) {
                vec![Arc::new(XmlValue::Elem(tag, Vec::new()))]
            } else {
                Vec::new()
            }
        } else {
            let tag = self.d.tags()[s as usize].clone();
            let mut out = Vec::new();
            let mut counts = HashMap::new();
            for w in self.words(s) {
                // prune before building: a child with no valid subtree kills the word
                if w.iter().any(|&c| self.count(c, depth + 1, &mut counts) == 0) {
                    continue;
                }
                let options: Vec<Arc<Vec<Arc<XmlValue>>>> =
                    w.iter().map(|&c| self.values(c, depth + 1, memo)).collect();
                if options.iter().any(|o| o.is_empty()) {
                    continue;
                }
                let mut idx = vec![0usize; options.len()];
                loop {
                    let kids = idx.iter().zip(&options).map(|(&i, o)| o[i].clone()).collect();
                    out.push(Arc::new(XmlValue::Elem(tag.clone(), kids)));
                    // Odometer over child choices, last position fastest.
                    let mut done = true;
                    let mut p = idx.len();
                    while p > 0 {
                        p -= 1;
                        idx[p] += 1;
                        if idx[p] < options[p].len() {
                            done = false;
                            break;
                        }
                        idx[p] = 0;
                    }
                    if done {
                        break;
                    }
                }
            }
            out
        };
        let out = Arc::new(out);
        memo.insert((s, depth), out.clone());
        out
    }
}

/// Number of trees [`enumerate_valid`] yields (saturating).
pub fn count_valid(d: &Dtd, b: &EnumBounds) -> u128 {
    let e = Enumerator::new(d, b);
    e.count(d.root_sym(), 1, &mut HashMap::new())
}

/// All valid trees within the bounds, in a deterministic order.
pub fn enumerate_valid(d: &Dtd, b: &EnumBounds) -> Vec<Tree> {
    let e = Enumerator::new(d, b);
    let vals = e.values(d.root_sym(), 1, &mut HashMap::new());
    vals.iter().map(|v| v.to_tree()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1() -> Dtd {
        Dtd::parse("<!ELEMENT doc (a|b)*> <!ELEMENT a (c)> <!ELEMENT b (c)> <!ELEMENT c EMPTY>").unwrap()
    }

    #[test]
    fn parse_and_serialize_roundtrip() {
        let xml = "<doc><a><c/></a><b><c/></b><t>hi &amp; bye</t></doc>";
        let t = Tree::parse(xml).unwrap();
        assert_eq!(t.to_xml(), xml);
        assert_eq!(t.locations(), (0..t.store.len() as u32).map(Loc).collect::<Vec<_>>());
    }

    #[test]
    fn whitespace_is_dropped_and_attributes_rejected() {
        let t = Tree::parse("<doc>\n  <a>\n <c/> </a>\n</doc>").unwrap();
        assert_eq!(t.to_xml(), "<doc><a><c/></a></doc>");
        assert!(matches!(Tree::parse("<a x='1'/>"), Err(StoreError::Attributes(_))));
    }

    #[test]
    fn node_chain_and_typing() {
        let t = Tree::parse("<doc><a><c/></a><b><c/></b></doc>").unwrap();
        let c_under_b = Loc(4);
        let chain: Vec<String> = t.node_chain(c_under_b).unwrap().iter().map(|l| l.to_string()).collect();
        assert_eq!(chain, ["doc", "b", "c"]);
        let hits = t.locations_typed_by(|c| c.len() == 2 && c[1] == Label::tag("a"), true);
        assert_eq!(hits, vec![Loc(1), Loc(2)]);
    }

    #[test]
    fn enumerate_fig1_small() {
        let b = EnumBounds::new(3, 1);
        let trees: Vec<String> = enumerate_valid(&fig1(), &b).iter().map(|t| t.to_xml()).collect();
        assert_eq!(trees, ["<doc/>", "<doc><a><c/></a></doc>", "<doc><b><c/></b></doc>"]);
        assert_eq!(count_valid(&fig1(), &b), 3);
    }

    #[test]
    fn enumerate_respects_depth() {
        let d = Dtd::parse(
            "<!ELEMENT r (a)> <!ELEMENT a (b,c,e)*> <!ELEMENT b (f)> <!ELEMENT c (f)>
             <!ELEMENT e (f)> <!ELEMENT f (a,g)> <!ELEMENT g EMPTY>",
        )
        .unwrap();
        let trees = enumerate_valid(&d, &EnumBounds::new(2, 1));
        assert_eq!(trees.len(), 1);
        assert_eq!(trees[0].to_xml(), "<r><a/></r>");
        for t in enumerate_valid(&d, &EnumBounds::new(6, 1)) {
            assert!(t.is_valid(&d));
            assert!(t.depth() <= 6);
        }
    }

    #[test]
    fn projection_keeps_ancestors() {
        let t = Tree::parse("<doc><a><c/></a><b><c/></b></doc>").unwrap();
        let p = t.project(&[Loc(4)]);
        assert_eq!(p.to_xml(), "<doc><b><c/></b></doc>");
    }
}
