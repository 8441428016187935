//! Static independence analysis for XML queries and updates.
//!
//! A DTD is summarised by its chains (root-to-node label paths). Queries and
//! updates are typed by the chains they return, use and modify; a query and an
//! update are independent when no chain of one is a prefix of the other.

pub mod bench;
pub mod chains;
pub mod evaluator;
pub mod finite;
pub mod fixtures;
pub mod independence;
pub mod lang;
pub mod par;
pub mod schema;
pub mod verify;
pub mod xmlstore;

pub use chains::{Cdag, CdagStats, End, QueryAnalysis, QueryChains, UpdateAnalysis, UpdateChain};
pub use finite::pair_k;
pub use independence::{check, check_materialized, ConflictKind, Verdict, VerdictKind, Witness};
pub use lang::{parse_query, parse_update, Query, Update};
pub use schema::{Chain, ContentModel, Dtd, Label, Tag};
pub use xmlstore::{Loc, Store, Tree};
