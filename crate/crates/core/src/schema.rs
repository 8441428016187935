//! DTDs, labels and chains.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

/// An element name.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tag(Arc<str>);

impl Tag {
    pub fn new(name: &str) -> Tag {
        Tag(Arc::from(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<&str> for Tag {
    fn from(s: &str) -> Tag {
        Tag::new(s)
    }
}

/// A node type: an element tag or the text type.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Tag(Tag),
    Text,
}

/// Printed form of [`Label::Text`] inside chains.
pub const TEXT_LABEL: &str = "#text";

impl Label {
    pub fn tag(name: &str) -> Label {
        Label::Tag(Tag::new(name))
    }

    pub fn is_text(&self) -> bool {
        matches!(self, Label::Text)
    }

    pub fn as_tag(&self) -> Option<&Tag> {
        match self {
            Label::Tag(t) => Some(t),
            Label::Text => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Tag(t) => f.write_str(t.as_str()),
            Label::Text => f.write_str(TEXT_LABEL),
        }
    }
}

impl fmt::Debug for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// A sequence of labels, printed dot-separated (`doc.a.c`).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Chain(pub Vec<Label>);

impl Chain {
    pub fn labels(&self) -> &[Label] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> Option<&Label> {
        self.0.last()
    }

    pub fn child(&self, l: Label) -> Chain {
        let mut v = self.0.clone();
        v.push(l);
        Chain(v)
    }

    /// `self ⪯ other`: self is a prefix of other.
    pub fn is_prefix_of(&self, other: &Chain) -> bool {
        is_prefix(&self.0, &other.0)
    }
}

pub fn is_prefix(a: &[Label], b: &[Label]) -> bool {
    a.len() <= b.len() && a.iter().zip(b).all(|(x, y)| x == y)
}

pub fn format_labels(labels: &[Label]) -> String {
    let parts: Vec<String> = labels.iter().map(|l| l.to_string()).collect();
    parts.join(".")
}

impl fmt::Display for Chain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_labels(&self.0))
    }
}

impl fmt::Debug for Chain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Chain {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Chain, SchemaError> {
        if s.is_empty() {
            return Ok(Chain::default());
        }
        let labels = s
            .split('.')
            .map(|p| {
                if p == TEXT_LABEL {
                    Ok(Label::Text)
                } else if is_xml_name(p) {
                    Ok(Label::tag(p))
                } else {
                    Err(SchemaError::BadChain(s.to_string()))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Chain(labels))
    }
}

/// Convenience for tests and fixtures; panics on malformed input.
pub fn chain(s: &str) -> Chain {
    s.parse().expect("malformed chain literal")
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemaError {
    #[error("DTD syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("attribute declarations (ATTLIST) are not supported")]
    AttlistUnsupported,
    #[error("unsupported declaration: {0}")]
    Unsupported(String),
    #[error("element `{0}` is declared twice")]
    Duplicate(String),
    #[error("element `{used}` is used in the content of `{owner}` but never declared")]
    Undeclared { owner: String, used: String },
    #[error("root element `{0}` is not declared")]
    UnknownRoot(String),
    #[error("DTD declares no elements")]
    NoElements,
    #[error("malformed chain `{0}`")]
    BadChain(String),
}

/// Regular expression over labels.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum ContentModel {
    Empty,
    Atom(Label),
    Concat(Box<ContentModel>, Box<ContentModel>),
    Alt(Box<ContentModel>, Box<ContentModel>),
    Star(Box<ContentModel>),
    Plus(Box<ContentModel>),
    Opt(Box<ContentModel>),
}

impl ContentModel {
    pub fn atom(name: &str) -> ContentModel {
        ContentModel::Atom(Label::tag(name))
    }

    pub fn concat(items: Vec<ContentModel>) -> ContentModel {
        fold_binary(items, |a, b| ContentModel::Concat(Box::new(a), Box::new(b)))
    }

    pub fn alt(items: Vec<ContentModel>) -> ContentModel {
        fold_binary(items, |a, b| ContentModel::Alt(Box::new(a), Box::new(b)))
    }

    pub fn star(r: ContentModel) -> ContentModel {
        ContentModel::Star(Box::new(r))
    }

    pub fn plus(r: ContentModel) -> ContentModel {
        ContentModel::Plus(Box::new(r))
    }

    pub fn opt(r: ContentModel) -> ContentModel {
        ContentModel::Opt(Box::new(r))
    }

    /// Labels occurring in the expression.
    pub fn atoms(&self) -> BTreeSet<Label> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<Label>) {
        match self {
            ContentModel::Empty => {}
            ContentModel::Atom(l) => {
                out.insert(l.clone());
            }
            ContentModel::Concat(a, b) | ContentModel::Alt(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
            ContentModel::Star(r) | ContentModel::Plus(r) | ContentModel::Opt(r) => r.collect_atoms(out),
        }
    }

    /// Whether the label word belongs to the language of the expression.
    pub fn matches(&self, word: &[Label]) -> bool {
        self.ends(word, &BTreeSet::from([0])).contains(&word.len())
    }

    // Positions reachable after matching `self` from any of `starts`.
    fn ends(&self, word: &[Label], starts: &BTreeSet<usize>) -> BTreeSet<usize> {
        match self {
            ContentModel::Empty => starts.clone(),
            ContentModel::Atom(l) => {
                starts.iter().filter(|&&p| p < word.len() && &word[p] == l).map(|p| p + 1).collect()
            }
            ContentModel::Concat(a, b) => b.ends(word, &a.ends(word, starts)),
            ContentModel::Alt(a, b) => {
                let mut s = a.ends(word, starts);
                s.extend(b.ends(word, starts));
                s
            }
            ContentModel::Opt(r) => {
                let mut s = starts.clone();
                s.extend(r.ends(word, starts));
                s
            }
            ContentModel::Star(r) => r.closure(word, starts.clone()),
            ContentModel::Plus(r) => {
                let once = r.ends(word, starts);
                r.closure(word, once)
            }
        }
    }

    fn closure(&self, word: &[Label], mut acc: BTreeSet<usize>) -> BTreeSet<usize> {
        let mut frontier = acc.clone();
        while !frontier.is_empty() {
            let next = self.ends(word, &frontier);
            frontier = next.difference(&acc).copied().collect();
            acc.extend(frontier.iter().copied());
        }
        acc
    }

    /// All words obtained by unrolling each `*`/`+` at most `max_repeat` times
    /// (`+` at least once). Deduplicated, in a deterministic order.
    pub fn unroll(&self, max_repeat: usize) -> Vec<Vec<Label>> {
        let set = self.unroll_set(max_repeat);
        let mut v: Vec<Vec<Label>> = set.into_iter().collect();
        v.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        v
    }

    fn unroll_set(&self, n: usize) -> BTreeSet<Vec<Label>> {
        match self {
            ContentModel::Empty => BTreeSet::from([vec![]]),
            ContentModel::Atom(l) => BTreeSet::from([vec![l.clone()]]),
            ContentModel::Concat(a, b) => {
                let (wa, wb) = (a.unroll_set(n), b.unroll_set(n));
                let mut out = BTreeSet::new();
                for x in &wa {
                    for y in &wb {
                        let mut w = x.clone();
                        w.extend(y.iter().cloned());
                        out.insert(w);
                    }
                }
                out
            }
            ContentModel::Alt(a, b) => {
                let mut s = a.unroll_set(n);
                s.extend(b.unroll_set(n));
                s
            }
            ContentModel::Opt(r) => {
                let mut s = r.unroll_set(n);
                s.insert(vec![]);
                s
            }
            ContentModel::Star(r) => repeat_words(&r.unroll_set(n), 0, n),
            ContentModel::Plus(r) => repeat_words(&r.unroll_set(n), 1, n.max(1)),
        }
    }
}

fn repeat_words(base: &BTreeSet<Vec<Label>>, min: usize, max: usize) -> BTreeSet<Vec<Label>> {
    let mut out = BTreeSet::new();
    let mut layer: BTreeSet<Vec<Label>> = BTreeSet::from([vec![]]);
    for i in 0..=max {
        if i >= min {
            out.extend(layer.iter().cloned());
        }
        if i == max {
            break;
        }
        let mut next = BTreeSet::new();
        for w in &layer {
            for b in base {
                let mut x = w.clone();
                x.extend(b.iter().cloned());
                next.insert(x);
            }
        }
        layer = next;
    }
    out
}

fn fold_binary(items: Vec<ContentModel>, f: impl Fn(ContentModel, ContentModel) -> ContentModel) -> ContentModel {
    let mut it = items.into_iter();
    let first = it.next().unwrap_or(ContentModel::Empty);
    it.fold(first, f)
}

impl fmt::Display for ContentModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContentModel::Empty => f.write_str("EMPTY"),
            ContentModel::Atom(Label::Text) => f.write_str("#PCDATA"),
            ContentModel::Atom(l) => write!(f, "{l}"),
            ContentModel::Concat(a, b) => write!(f, "({a},{b})"),
            ContentModel::Alt(a, b) => write!(f, "({a}|{b})"),
            ContentModel::Star(r) => write!(f, "{r}*"),
            ContentModel::Plus(r) => write!(f, "{r}+"),
            ContentModel::Opt(r) => write!(f, "{r}?"),
        }
    }
}

/// `(α, β)` such that α may occur before β in some word of `r`.
pub fn sibling_order(r: &ContentModel) -> BTreeSet<(Label, Label)> {
    match r {
        ContentModel::Empty | ContentModel::Atom(_) => BTreeSet::new(),
        ContentModel::Concat(a, b) => {
            let mut s = sibling_order(a);
            s.extend(sibling_order(b));
            for x in a.atoms() {
                for y in b.atoms() {
                    s.insert((x.clone(), y));
                }
            }
            s
        }
        ContentModel::Alt(a, b) => {
            let mut s = sibling_order(a);
            s.extend(sibling_order(b));
            s
        }
        ContentModel::Star(a) | ContentModel::Plus(a) => {
            let mut s = sibling_order(a);
            let occ = a.atoms();
            for x in &occ {
                for y in &occ {
                    s.insert((x.clone(), y.clone()));
                }
            }
            s
        }
        ContentModel::Opt(a) => sibling_order(a),
    }
}

/// Compact symbol index: tags are `0..n` in declaration order, text is `n`.
pub type Sym = u16;

/// A DTD: alphabet, root and one content model per element.
#[derive(Clone)]
pub struct Dtd {
    tags: Vec<Tag>,
    index: HashMap<Tag, Sym>,
    root: Sym,
    models: Vec<ContentModel>,
    reach: Vec<bool>,
    order: Vec<Vec<bool>>,
}

impl fmt::Debug for Dtd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dtd(root={}", self.root_tag())?;
        for (t, m) in self.tags.iter().zip(&self.models) {
            write!(f, "; {t} <- {m}")?;
        }
        f.write_str(")")
    }
}

impl Dtd {
    /// Builds a DTD; the first declaration is the root unless `root` is given.
    pub fn new(decls: Vec<(Tag, ContentModel)>, root: Option<&str>) -> Result<Dtd, SchemaError> {
        if decls.is_empty() {
            return Err(SchemaError::NoElements);
        }
        let mut index = HashMap::new();
        for (i, (t, _)) in decls.iter().enumerate() {
            if index.insert(t.clone(), i as Sym).is_some() {
                return Err(SchemaError::Duplicate(t.to_string()));
            }
        }
        for (t, m) in &decls {
            for a in m.atoms() {
                if let Label::Tag(u) = &a {
                    if !index.contains_key(u) {
                        return Err(SchemaError::Undeclared { owner: t.to_string(), used: u.to_string() });
                    }
                }
            }
        }
        let root = match root {
            None => 0,
            Some(r) => *index.get(&Tag::new(r)).ok_or_else(|| SchemaError::UnknownRoot(r.to_string()))?,
        };
        let n = decls.len();
        let w = n + 1;
        let mut reach = vec![false; w * w];
        let mut order = Vec::with_capacity(n);
        let tags: Vec<Tag> = decls.iter().map(|(t, _)| t.clone()).collect();
        let models: Vec<ContentModel> = decls.into_iter().map(|(_, m)| m).collect();
        let sym = |l: &Label| match l {
            Label::Tag(t) => index[t] as usize,
            Label::Text => n,
        };
        for (i, m) in models.iter().enumerate() {
            for a in m.atoms() {
                reach[i * w + sym(&a)] = true;
            }
            let mut o = vec![false; w * w];
            for (x, y) in sibling_order(m) {
                o[sym(&x) * w + sym(&y)] = true;
            }
            order.push(o);
        }
        Ok(Dtd { tags, index, root, models, reach, order })
    }

    /// Parses `<!ELEMENT name model>` declarations.
    pub fn parse(text: &str) -> Result<Dtd, SchemaError> {
        Dtd::parse_with_root(text, None)
    }

    pub fn parse_with_root(text: &str, root: Option<&str>) -> Result<Dtd, SchemaError> {
        let decls = DtdParser { src: text.as_bytes(), pos: 0 }.declarations()?;
        Dtd::new(decls, root)
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    /// Number of element types.
    pub fn size(&self) -> usize {
        self.tags.len()
    }

    pub fn root_tag(&self) -> &Tag {
        &self.tags[self.root as usize]
    }

    pub fn root_label(&self) -> Label {
        Label::Tag(self.root_tag().clone())
    }

    pub fn root_sym(&self) -> Sym {
        self.root
    }

    pub fn text_sym(&self) -> Sym {
        self.tags.len() as Sym
    }

    /// Tags plus text.
    pub fn num_syms(&self) -> usize {
        self.tags.len() + 1
    }

    pub fn sym_of(&self, l: &Label) -> Option<Sym> {
        match l {
            Label::Tag(t) => self.index.get(t).copied(),
            Label::Text => Some(self.text_sym()),
        }
    }

    pub fn sym_of_tag(&self, t: &Tag) -> Option<Sym> {
        self.index.get(t).copied()
    }

    pub fn label_of(&self, s: Sym) -> Label {
        if s == self.text_sym() {
            Label::Text
        } else {
            Label::Tag(self.tags[s as usize].clone())
        }
    }

    pub fn content(&self, t: &Tag) -> Option<&ContentModel> {
        self.index.get(t).map(|&i| &self.models[i as usize])
    }

    pub fn content_sym(&self, s: Sym) -> Option<&ContentModel> {
        self.models.get(s as usize)
    }

    pub fn reaches_sym(&self, a: Sym, b: Sym) -> bool {
        (a as usize) < self.tags.len() && self.reach[a as usize * self.num_syms() + b as usize]
    }

    /// `a` may occur before `b` among the children of an element of type `parent`.
    pub fn precedes_sym(&self, parent: Sym, a: Sym, b: Sym) -> bool {
        match self.order.get(parent as usize) {
            Some(o) => o[a as usize * self.num_syms() + b as usize],
            None => false,
        }
    }

    /// β occurs in the content model of α.
    pub fn reaches(&self, a: &Label, b: &Label) -> bool {
        match (self.sym_of(a), self.sym_of(b)) {
            (Some(x), Some(y)) => self.reaches_sym(x, y),
            _ => false,
        }
    }

    pub fn is_chain(&self, labels: &[Label]) -> bool {
        if labels.is_empty() || self.sym_of(&labels[0]).is_none() {
            return false;
        }
        labels.windows(2).all(|w| self.reaches(&w[0], &w[1]))
    }

    /// A chain starting at the root.
    pub fn is_rooted_chain(&self, labels: &[Label]) -> bool {
        self.is_chain(labels) && labels[0] == self.root_label()
    }
}

/// Every label occurs at most `k` times.
pub fn is_k_chain(labels: &[Label], k: usize) -> bool {
    let mut counts: HashMap<&Label, usize> = HashMap::new();
    labels.iter().all(|l| {
        let c = counts.entry(l).or_insert(0);
        *c += 1;
        *c <= k
    })
}

/// Largest number of occurrences of a single label.
pub fn max_label_count(labels: &[Label]) -> usize {
    let mut counts: HashMap<&Label, usize> = HashMap::new();
    for l in labels {
        *counts.entry(l).or_insert(0) += 1;
    }
    counts.values().copied().max().unwrap_or(0)
}

pub fn is_xml_name(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(is_name_char)
}

pub(crate) fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-' || c == '.'
}

struct DtdParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl DtdParser<'_> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, SchemaError> {
        Err(SchemaError::Syntax { pos: self.pos, msg: msg.into() })
    }

    fn skip_ws(&mut self) {
        loop {
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.src[self.pos..].starts_with(b"<!--") {
                match find(&self.src[self.pos..], b"-->") {
                    Some(i) => self.pos += i + 3,
                    None => self.pos = self.src.len(),
                }
            } else if self.src[self.pos..].starts_with(b"<?") {
                match find(&self.src[self.pos..], b"?>") {
                    Some(i) => self.pos += i + 2,
                    None => self.pos = self.src.len(),
                }
            } else {
                return;
            }
        }
    }

    fn eat(&mut self, s: &[u8]) -> bool {
        if self.src[self.pos..].starts_with(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<(), SchemaError> {
        self.skip_ws();
        if self.eat(s.as_bytes()) {
            Ok(())
        } else {
            self.err(format!("expected `{s}`"))
        }
    }

    fn name(&mut self) -> Result<String, SchemaError> {
        self.skip_ws();
        let start = self.pos;
        let rest = std::str::from_utf8(&self.src[self.pos..]).unwrap_or("");
        let len: usize = rest
            .char_indices()
            .take_while(|&(i, c)| if i == 0 { c.is_alphabetic() || c == '_' } else { is_name_char(c) || c == ':' })
            .map(|(_, c)| c.len_utf8())
            .sum();
        if len == 0 {
            return self.err("expected a name");
        }
        self.pos += len;
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn declarations(mut self) -> Result<Vec<(Tag, ContentModel)>, SchemaError> {
        let mut out = Vec::new();
        loop {
            self.skip_ws();
            if self.pos >= self.src.len() {
                return Ok(out);
            }
            if self.eat(b"<!ELEMENT") {
                let name = self.name()?;
                self.skip_ws();
                let model = if self.eat(b"EMPTY") {
                    ContentModel::Empty
                } else if self.src[self.pos..].starts_with(b"ANY") {
                    return Err(SchemaError::Unsupported("ANY content".into()));
                } else {
                    self.model()?
                };
                self.expect(">")?;
                out.push((Tag::new(&name), model));
            } else if self.src[self.pos..].starts_with(b"<!ATTLIST") {
                return Err(SchemaError::AttlistUnsupported);
            } else if self.src[self.pos..].starts_with(b"<!") {
                let end = self.src[self.pos..]
                    .iter()
                    .position(|c| c.is_ascii_whitespace() || *c == b'>')
                    .unwrap_or(self.src.len() - self.pos);
                let what = String::from_utf8_lossy(&self.src[self.pos..self.pos + end]).into_owned();
                return Err(SchemaError::Unsupported(what));
            } else {
                return self.err("expected `<!ELEMENT`");
            }
        }
    }

    // model := particle ; particle := (group | name | #PCDATA) [*+?]
    fn model(&mut self) -> Result<ContentModel, SchemaError> {
        self.particle()
    }

    fn particle(&mut self) -> Result<ContentModel, SchemaError> {
        self.skip_ws();
        let base = if self.eat(b"(") {
            let first = self.particle()?;
            self.skip_ws();
            let mut items = vec![first];
            let sep = if self.src.get(self.pos) == Some(&b',') {
                Some(b',')
            } else if self.src.get(self.pos) == Some(&b'|') {
                Some(b'|')
            } else {
                None
            };
            if let Some(sep) = sep {
                while self.eat(&[sep]) {
                    items.push(self.particle()?);
                    self.skip_ws();
                }
            }
            self.skip_ws();
            if !self.eat(b")") {
                return self.err("expected `)` (mixing `,` and `|` needs parentheses)");
            }
            match sep {
                Some(b'|') => ContentModel::alt(items),
                _ => ContentModel::concat(items),
            }
        } else if self.eat(b"#PCDATA") {
            ContentModel::Atom(Label::Text)
        } else {
            ContentModel::Atom(Label::tag(&self.name()?))
        };
        let out = if self.eat(b"*") {
            ContentModel::star(base)
        } else if self.eat(b"+") {
            ContentModel::plus(base)
        } else if self.eat(b"?") {
            ContentModel::opt(base)
        } else {
            base
        };
        Ok(out)
    }
}

fn find(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d1() -> Dtd {
        Dtd::parse(
            "<!ELEMENT r (a)> <!ELEMENT a (b,c,e)*> <!ELEMENT b (f)> <!ELEMENT c (f)>
             <!ELEMENT e (f)> <!ELEMENT f (a,g)> <!ELEMENT g EMPTY>",
        )
        .unwrap()
    }

    #[test]
    fn parses_and_roots_at_first_declaration() {
        let d = d1();
        assert_eq!(d.root_tag().as_str(), "r");
        assert_eq!(d.size(), 7);
        assert!(d.reaches(&Label::tag("f"), &Label::tag("a")));
        assert!(!d.reaches(&Label::tag("g"), &Label::tag("a")));
    }

    #[test]
    fn chain_membership() {
        let d = d1();
        assert!(d.is_chain(chain("r.a.b.f.a.c").labels()));
        assert!(!d.is_chain(chain("r.b").labels()));
        assert!(!d.is_chain(&[]));
        assert!(is_k_chain(chain("r.a.b.f.a").labels(), 2));
        assert!(!is_k_chain(chain("r.a.b.f.a").labels(), 1));
    }

    #[test]
    fn attlist_rejected() {
        let e = Dtd::parse("<!ELEMENT a EMPTY><!ATTLIST a x CDATA #IMPLIED>").unwrap_err();
        assert_eq!(e, SchemaError::AttlistUnsupported);
    }

    #[test]
    fn undeclared_reference_rejected() {
        assert!(matches!(Dtd::parse("<!ELEMENT a (b)>"), Err(SchemaError::Undeclared { .. })));
    }

    #[test]
    fn mixed_content_and_pcdata() {
        let d = Dtd::parse("<!ELEMENT p (#PCDATA|em)*> <!ELEMENT em (#PCDATA)>").unwrap();
        let m = d.content(&Tag::new("p")).unwrap();
        assert!(m.matches(&[Label::Text, Label::tag("em"), Label::Text]));
        assert!(d.reaches(&Label::tag("em"), &Label::Text));
    }

    #[test]
    fn sibling_order_of_concat_star() {
        let m = ContentModel::concat(vec![
            ContentModel::atom("a"),
            ContentModel::star(ContentModel::alt(vec![ContentModel::atom("b"), ContentModel::atom("c")])),
        ]);
        let got = sibling_order(&m);
        let pairs = [("a", "b"), ("a", "c"), ("b", "c"), ("c", "b"), ("c", "c"), ("b", "b")];
        let want: BTreeSet<(Label, Label)> = pairs.iter().map(|(x, y)| (Label::tag(x), Label::tag(y))).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn matching_and_unrolling() {
        let m = ContentModel::concat(vec![ContentModel::atom("b"), ContentModel::star(ContentModel::atom("f"))]);
        assert!(m.matches(&[Label::tag("b")]));
        assert!(m.matches(&[Label::tag("b"), Label::tag("f"), Label::tag("f")]));
        assert!(!m.matches(&[Label::tag("f")]));
        assert_eq!(m.unroll(2).len(), 3);
    }

    #[test]
    fn chain_display_roundtrip() {
        let c = chain("bib.book.author.first.#text");
        assert_eq!(c.to_string(), "bib.book.author.first.#text");
        assert_eq!(c.last(), Some(&Label::Text));
    }
}
