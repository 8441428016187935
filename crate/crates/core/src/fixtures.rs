//! Named query/update pairs over small DTDs, with their expected verdicts.

use crate::independence::VerdictKind;
use crate::lang::{parse_query, parse_update, Query, Update};
use crate::schema::Dtd;

pub const FIG1_DTD: &str = include_str!("../fixtures/fig1.dtd");
pub const CONTROL_DTD: &str = include_str!("../fixtures/control.dtd");
pub const D1_DTD: &str = include_str!("../fixtures/d1.dtd");
pub const SIBLING_DTD: &str = include_str!("../fixtures/sibling.dtd");
pub const SIBLING_REC_DTD: &str = include_str!("../fixtures/sibling_rec.dtd");
pub const BIB_DTD: &str = include_str!("../fixtures/bib.dtd");
pub const NEST_INSERT_DTD: &str = include_str!("../fixtures/nest_insert.dtd");
pub const FIG2_DTD: &str = include_str!("../fixtures/fig2.dtd");

pub const BIB_INSERT_AUTHOR: &str =
    "for $x in //book return insert <author><first>Umberto</first><second>Eco</second></author> into $x";
pub const NEST_INSERT: &str = "for $x in /a/b return insert <b><b><c/></b></b> into $x";

#[derive(Clone, Copy, Debug)]
pub struct Fixture {
    pub name: &'static str,
    pub dtd: &'static str,
    pub query: &'static str,
    pub update: &'static str,
    pub expected: VerdictKind,
}

impl Fixture {
    pub fn dtd(&self) -> Dtd {
        Dtd::parse(self.dtd).expect("fixture dtd")
    }

    pub fn query(&self) -> Query {
        parse_query(self.query).expect("fixture query")
    }

    pub fn update(&self) -> Update {
        parse_update(self.update).expect("fixture update")
    }
}

use VerdictKind::{Independent, MaybeDependent};

const fn fx(
    name: &'static str,
    dtd: &'static str,
    query: &'static str,
    update: &'static str,
    expected: VerdictKind,
) -> Fixture {
    Fixture { name, dtd, query, update, expected }
}

pub const ALL: &[Fixture] = &[
    fx("fig1", FIG1_DTD, "//a//c", "delete //b//c", Independent),
    fx("control", CONTROL_DTD, "//a//c", "delete //b//c", MaybeDependent),
    fx("d1", D1_DTD, "/descendant::b", "delete /descendant::c", MaybeDependent),
    fx("d1_path", D1_DTD, "/r/a/b/f/a", "delete /r/a/c", Independent),
    fx("d1_parent", D1_DTD, "/r/a/b/f/a/parent::f", "delete /r/a/b/f/g", MaybeDependent),
    fx("sibling", SIBLING_DTD, "/a/b/following-sibling::c", "delete /a/b", MaybeDependent),
    fx("sibling_rec", SIBLING_REC_DTD, "/descendant::c/following-sibling::b", "delete //e", Independent),
    fx("sibling_rec_dep", SIBLING_REC_DTD, "/descendant::c/following-sibling::b", "delete //b/c", MaybeDependent),
    fx("bib_title", BIB_DTD, "//title", BIB_INSERT_AUTHOR, Independent),
    fx("bib_email", BIB_DTD, "//author/email", BIB_INSERT_AUTHOR, MaybeDependent),
    fx("bib_empty_author", BIB_DTD, "//title", "for $x in //book return insert <author/> into $x", Independent),
    fx(
        "bib_replace_title",
        BIB_DTD,
        "//author",
        "for $x in //title return replace $x with <title>X</title>",
        Independent,
    ),
    fx("bib_rename", BIB_DTD, "//author/first", "for $x in //author/email return rename $x as first", MaybeDependent),
    fx("bib_rename_title", BIB_DTD, "//title", "for $x in //author/email return rename $x as first", Independent),
    fx("nest_insert_child", NEST_INSERT_DTD, "/a/b/c", NEST_INSERT, Independent),
    fx("nest_insert_desc", NEST_INSERT_DTD, "//c", NEST_INSERT, MaybeDependent),
    fx("fig2", FIG2_DTD, "(//c/e, /a/d/c/f/ancestor::b)", "delete //b/c/f", Independent),
];

pub fn get(name: &str) -> Option<&'static Fixture> {
    ALL.iter().find(|f| f.name == name)
}
