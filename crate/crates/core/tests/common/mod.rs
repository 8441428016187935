//! Seeded random DTDs, queries and updates, produced as text.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use xmlqui::{parse_query, parse_update, Dtd, Query, Update};

pub const TAGS: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

pub struct Triple {
    pub dtd_text: String,
    pub query_text: String,
    pub update_text: String,
    pub dtd: Dtd,
    pub query: Query,
    pub update: Update,
}

fn atom(rng: &mut ChaCha8Rng, tags: &[&str]) -> String {
    // the root is picked less often, so most models are not recursive through it
    let t = if rng.gen_bool(0.1) { tags[0] } else { tags[rng.gen_range(1..tags.len())] };
    let suffix = ["", "?", "*", "*", "?", "+"][rng.gen_range(0..6)];
    format!("{t}{suffix}")
}

fn regex(rng: &mut ChaCha8Rng, tags: &[&str], depth: usize) -> String {
    if depth == 0 || rng.gen_bool(0.4) {
        return atom(rng, tags);
    }
    let n = rng.gen_range(1..=3);
    let parts: Vec<String> = (0..n).map(|_| regex(rng, tags, depth - 1)).collect();
    let sep = if rng.gen_bool(0.5) { "," } else { "|" };
    let suffix = ["", "", "*", "?"][rng.gen_range(0..4)];
    format!("({}){suffix}", parts.join(sep))
}

pub fn dtd_text(rng: &mut ChaCha8Rng, max_tags: usize) -> String {
    let n = rng.gen_range(2..=max_tags.clamp(2, TAGS.len()));
    let tags = &TAGS[..n];
    let mut out = String::new();
    for (i, t) in tags.iter().enumerate() {
        let body = match rng.gen_range(0..10) {
            0 if i > 0 => "EMPTY".to_string(),
            1 if i > 0 => "(#PCDATA)".to_string(),
            _ => {
                let r = regex(rng, tags, 2);
                if r.starts_with('(') {
                    r
                } else {
                    format!("({r})")
                }
            }
        };
        out.push_str(&format!("<!ELEMENT {t} {body}>\n"));
    }
    out
}

const AXES: [&str; 10] = [
    "child",
    "child",
    "descendant",
    "descendant-or-self",
    "self",
    "parent",
    "ancestor",
    "ancestor-or-self",
    "following-sibling",
    "preceding-sibling",
];

fn test(rng: &mut ChaCha8Rng, tags: &[&str]) -> String {
    if rng.gen_bool(0.2) {
        "node()".to_string()
    } else {
        tags.choose(rng).unwrap().to_string()
    }
}

fn steps(rng: &mut ChaCha8Rng, tags: &[&str], n: usize) -> String {
    (0..n).map(|_| format!("{}::{}", AXES.choose(rng).unwrap(), test(rng, tags))).collect::<Vec<_>>().join("/")
}

/// A rooted path of one to three steps.
pub fn path(rng: &mut ChaCha8Rng, tags: &[&str]) -> String {
    let n = rng.gen_range(1..=3);
    match rng.gen_range(0..3) {
        0 => format!("/{}", steps(rng, tags, n)),
        1 => format!("//{}", steps(rng, tags, n)),
        _ if n == 1 => format!("/{}", tags[0]),
        _ => format!("/{}/{}", tags[0], steps(rng, tags, n - 1)),
    }
}

pub fn query_text(rng: &mut ChaCha8Rng, tags: &[&str]) -> String {
    let p = path(rng, tags);
    match rng.gen_range(0..7) {
        0..=2 => p,
        3 => format!("for $x in {p} return $x/{}", steps(rng, tags, 1)),
        4 => format!("for $x in {p} return <z>$x/{}</z>", steps(rng, tags, 1)),
        5 => format!("for $x in {p} return if $x/{} then $x/{}", steps(rng, tags, 1), steps(rng, tags, 1)),
        _ => format!("({p}, {})", path(rng, tags)),
    }
}

fn fragment(rng: &mut ChaCha8Rng, tags: &[&str]) -> String {
    let t = tags[rng.gen_range(1..tags.len())];
    match rng.gen_range(0..3) {
        0 => format!("<{t}/>"),
        1 => format!("<{t}>x</{t}>"),
        _ => format!("<{t}><{}/></{t}>", tags.choose(rng).unwrap()),
    }
}

pub fn update_text(rng: &mut ChaCha8Rng, tags: &[&str]) -> String {
    let p = path(rng, tags);
    let t = tags.choose(rng).unwrap();
    match rng.gen_range(0..7) {
        0 | 1 => format!("delete {p}"),
        2 => format!("for $x in {p} return rename $x as {t}"),
        3 => {
            let pos = ["into", "as first into", "as last into", "before", "after"].choose(rng).unwrap();
            format!("for $x in {p} return insert {} {pos} $x", fragment(rng, tags))
        }
        4 => format!("for $x in {p} return replace $x with {}", fragment(rng, tags)),
        5 => format!("for $x in {p} return delete $x/{}", steps(rng, tags, 1)),
        _ => format!("delete {p}, for $x in {} return insert {} into $x", path(rng, tags), fragment(rng, tags)),
    }
}

/// Draws until the DTD, query and update all parse.
pub fn triple(rng: &mut ChaCha8Rng, max_tags: usize) -> Triple {
    loop {
        let dtd_text = dtd_text(rng, max_tags);
        let Ok(dtd) = Dtd::parse(&dtd_text) else { continue };
        let names: Vec<String> = dtd.tags().iter().map(|t| t.as_str().to_string()).collect();
        let tags: Vec<&str> = names.iter().map(String::as_str).collect();
        let query_text = query_text(rng, &tags);
        let update_text = update_text(rng, &tags);
        let (Ok(query), Ok(update)) = (parse_query(&query_text), parse_update(&update_text)) else { continue };
        return Triple { dtd_text, query_text, update_text, dtd, query, update };
    }
}
