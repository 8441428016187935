//! Axis and node-test chain functions over explicit chains of `C_d^k`.
//!
//! Chains are handled as symbol vectors (`Sym`, see [`Dtd::sym_of`]); the
//! [`axis_chains`] and [`test_chains`] wrappers work on labelled chains.

use std::collections::BTreeSet;

use crate::lang::{Axis, NodeTest};
use crate::schema::{Chain, Dtd, Sym};

pub type SymChain = Vec<Sym>;

/// Occurrences of `s` in `c`.
fn count(c: &[Sym], s: Sym) -> usize {
    c.iter().filter(|&&x| x == s).count()
}

/// `c.s` is a k-chain extension of the k-chain `c`.
pub fn can_extend(d: &Dtd, k: usize, c: &[Sym], s: Sym) -> bool {
    match c.last() {
        Some(&last) => d.reaches_sym(last, s) && count(c, s) < k,
        None => false,
    }
}

pub fn is_k_sym_chain(c: &[Sym], k: usize) -> bool {
    let mut seen: Vec<(Sym, usize)> = Vec::new();
    for &s in c {
        match seen.iter_mut().find(|(x, _)| *x == s) {
            Some((_, n)) => {
                *n += 1;
                if *n > k {
                    return false;
                }
            }
            None => seen.push((s, 1)),
        }
    }
    true
}

fn children(d: &Dtd, k: usize, c: &[Sym]) -> Vec<SymChain> {
    (0..d.num_syms() as Sym)
        .filter(|&s| can_extend(d, k, c, s))
        .map(|s| {
            let mut x = c.to_vec();
            x.push(s);
            x
        })
        .collect()
}

fn descendants(d: &Dtd, k: usize, c: &[Sym], out: &mut Vec<SymChain>) {
    for x in children(d, k, c) {
        descendants(d, k, &x, out);
        out.push(x);
    }
}

fn siblings(d: &Dtd, k: usize, c: &[Sym], following: bool) -> Vec<SymChain> {
    if c.len() < 2 {
        return Vec::new();
    }
    let (prefix, a) = (&c[..c.len() - 1], c[c.len() - 1]);
    let p = prefix[prefix.len() - 1];
    (0..d.num_syms() as Sym)
        .filter(|&b| {
            let ordered = if following { d.precedes_sym(p, a, b) } else { d.precedes_sym(p, b, a) };
            ordered && can_extend(d, k, prefix, b)
        })
        .map(|b| {
            let mut x = prefix.to_vec();
            x.push(b);
            x
        })
        .collect()
}

/// Chains reached from `c` along `axis`, staying inside `C_d^k`.
pub fn axis_sym(d: &Dtd, k: usize, c: &[Sym], axis: Axis) -> Vec<SymChain> {
    let mut out = Vec::new();
    match axis {
        Axis::SelfAxis => out.push(c.to_vec()),
        Axis::Child => out = children(d, k, c),
        Axis::Descendant => descendants(d, k, c, &mut out),
        Axis::DescendantOrSelf => {
            out.push(c.to_vec());
            descendants(d, k, c, &mut out);
        }
        Axis::Parent => {
            if c.len() > 1 {
                out.push(c[..c.len() - 1].to_vec());
            }
        }
        Axis::Ancestor => out.extend((1..c.len()).map(|i| c[..i].to_vec())),
        Axis::AncestorOrSelf => out.extend((1..=c.len()).map(|i| c[..i].to_vec())),
        Axis::FollowingSibling => out = siblings(d, k, c, true),
        Axis::PrecedingSibling => out = siblings(d, k, c, false),
    }
    out
}

pub fn test_sym(d: &Dtd, s: Sym, test: &NodeTest) -> bool {
    match test {
        NodeTest::Any => true,
        NodeTest::Text => s == d.text_sym(),
        NodeTest::Tag(t) => d.sym_of_tag(t) == Some(s),
    }
}

/// Labelled form of [`axis_sym`]. Chains with labels unknown to `d` have no
/// successors.
pub fn axis_chains(d: &Dtd, k: usize, c: &Chain, axis: Axis) -> BTreeSet<Chain> {
    let Some(syms) = to_syms(d, c) else { return BTreeSet::new() };
    axis_sym(d, k, &syms, axis).iter().map(|x| to_chain(d, x)).collect()
}

pub fn test_chains(d: &Dtd, cs: &BTreeSet<Chain>, test: &NodeTest) -> BTreeSet<Chain> {
    cs.iter()
        .filter(|c| match (c.last(), test) {
            (_, NodeTest::Any) => true,
            (Some(l), _) => d.sym_of(l).is_some_and(|s| test_sym(d, s, test)),
            (None, _) => false,
        })
        .cloned()
        .collect()
}

pub fn to_syms(d: &Dtd, c: &Chain) -> Option<SymChain> {
    c.labels().iter().map(|l| d.sym_of(l)).collect()
}

pub fn to_chain(d: &Dtd, c: &[Sym]) -> Chain {
    Chain(c.iter().map(|&s| d.label_of(s)).collect())
}

/// All rooted k-chains of `d`, or `None` when there are more than `limit`.
pub fn enumerate_k_chains(d: &Dtd, k: usize, limit: usize) -> Option<Vec<SymChain>> {
    let mut out = vec![vec![d.root_sym()]];
    let mut i = 0;
    while i < out.len() {
        let next = children(d, k, &out[i]);
        out.extend(next);
        if out.len() > limit {
            return None;
        }
        i += 1;
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::chain;

    fn set(items: &[&str]) -> BTreeSet<Chain> {
        items.iter().map(|s| chain(s)).collect()
    }

    #[test]
    fn sibling_axis() {
        let d = Dtd::parse("<!ELEMENT a (b+, c*)><!ELEMENT b EMPTY><!ELEMENT c EMPTY>").unwrap();
        let fs = axis_chains(&d, 1, &chain("a.b"), Axis::FollowingSibling);
        assert_eq!(fs, set(&["a.b", "a.c"]));
        let c = NodeTest::Tag(crate::schema::Tag::new("c"));
        assert_eq!(test_chains(&d, &fs, &c), set(&["a.c"]));
        assert_eq!(axis_chains(&d, 1, &chain("a.c"), Axis::PrecedingSibling), set(&["a.b", "a.c"]));
    }

    #[test]
    fn parent_axis() {
        let d = Dtd::parse("<!ELEMENT doc (a|b)*><!ELEMENT a (c)><!ELEMENT b (c)><!ELEMENT c EMPTY>").unwrap();
        assert_eq!(axis_chains(&d, 1, &chain("doc.a"), Axis::Parent), set(&["doc"]));
        assert_eq!(axis_chains(&d, 1, &chain("doc"), Axis::Parent), BTreeSet::new());
    }

    #[test]
    fn descendant_under_cap() {
        let d = Dtd::parse(
            "<!ELEMENT r (a)><!ELEMENT a (b,c,e)*><!ELEMENT b (f)><!ELEMENT c (f)>\
             <!ELEMENT e (f)><!ELEMENT f (a,g)><!ELEMENT g EMPTY>",
        )
        .unwrap();
        let ds = axis_chains(&d, 2, &chain("r.a"), Axis::Descendant);
        assert!(ds.contains(&chain("r.a.b.f.a")));
        assert!(ds.contains(&chain("r.a.c.f.a.e.f.g")));
        assert!(!ds.contains(&chain("r.a.b.f.a.b.f.a")));
        assert!(ds.iter().all(|c| crate::schema::is_k_chain(c.labels(), 2)));
        let texts = test_chains(&d, &ds, &NodeTest::Tag(crate::schema::Tag::new("g")));
        assert!(texts.iter().all(|c| c.last().unwrap().to_string() == "g"));
    }

    #[test]
    fn text_test() {
        let d = Dtd::parse("<!ELEMENT doc (a)*><!ELEMENT a (#PCDATA)>").unwrap();
        let cs = set(&["doc.a", "doc.a.#text"]);
        assert_eq!(test_chains(&d, &cs, &NodeTest::Text), set(&["doc.a.#text"]));
    }

    #[test]
    fn k_chain_count() {
        let d = Dtd::parse("<!ELEMENT a (a)*>").unwrap();
        assert_eq!(enumerate_k_chains(&d, 3, 100).unwrap().len(), 3);
        assert!(enumerate_k_chains(&d, 3, 2).is_none());
    }
}
