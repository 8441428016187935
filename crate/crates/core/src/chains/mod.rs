//! Chain inference.
//!
//! [`step`] navigates explicit chains, [`naive`] infers explicit chain sets
//! over an enumerated `C_d^k` (exponential; kept as an oracle), and [`graph`]
//! with [`infer`] compute the same sets as a layered graph whose nodes are
//! `(depth, label)` pairs.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::schema::{format_labels, Chain, Dtd, Label, Sym};

pub mod graph;
pub mod infer;
pub mod lazy;
pub mod naive;
pub mod step;

pub use graph::{Cdag, CdagStats, CompId, End, NodeId, UpdateEnd, VEnd, ROOT_COMP};
pub use infer::{analyze_query, analyze_update, QueryAnalysis, TooLarge, UpdateAnalysis};

/// A chain inside a constructed element, starting at the constructor's tag.
/// `open` chains stand for themselves and every extension of their last label.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct ElemChain {
    pub labels: Arc<[Label]>,
    pub open: bool,
}

impl ElemChain {
    pub fn new(labels: Vec<Label>, open: bool) -> ElemChain {
        ElemChain { labels: labels.into(), open }
    }

    pub fn under(&self, tag: Label) -> ElemChain {
        let mut v = Vec::with_capacity(self.labels.len() + 1);
        v.push(tag);
        v.extend(self.labels.iter().cloned());
        ElemChain::new(v, self.open)
    }
}

impl fmt::Display for ElemChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_labels(&self.labels))?;
        if self.open {
            f.write_str(".*")?;
        }
        Ok(())
    }
}

/// An update chain `prefix:suffix`. The prefix types the node whose content
/// changes (empty for the root itself); `open` suffixes also cover every
/// extension below their last label.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct UpdateChain {
    pub prefix: Vec<Label>,
    pub suffix: Vec<Label>,
    pub open: bool,
}

impl UpdateChain {
    /// `prefix.suffix`.
    pub fn full(&self) -> Vec<Label> {
        let mut v = self.prefix.clone();
        v.extend(self.suffix.iter().cloned());
        v
    }
}

impl fmt::Display for UpdateChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", format_labels(&self.prefix), format_labels(&self.suffix))
    }
}

/// A used chain; `closed` ones stand for their whole subtree.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct UsedChain {
    pub chain: Chain,
    pub closed: bool,
}

/// Explicit return, used and element chains of a query.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct QueryChains {
    pub r: BTreeSet<Chain>,
    pub v: BTreeSet<UsedChain>,
    pub e: BTreeSet<ElemChain>,
}

impl QueryChains {
    pub fn used_chains(&self) -> BTreeSet<Chain> {
        self.v.iter().map(|u| u.chain.clone()).collect()
    }
}

/// Whether `prefix:w` can type a node of a valid document: `w` is a chain
/// that may hang below the prefix (or is the root when the prefix is empty).
pub fn graft_ok(d: &Dtd, prefix_last: Option<Sym>, w: &[Label]) -> bool {
    let Some(first) = w.first() else { return false };
    let head = match prefix_last {
        Some(p) => d.reaches(&d.label_of(p), first),
        None => *first == d.root_label(),
    };
    head && w.windows(2).all(|x| d.reaches(&x[0], &x[1]))
}
