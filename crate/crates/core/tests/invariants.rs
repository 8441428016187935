mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xmlqui::chains::naive::{infer_query, infer_update};
use xmlqui::chains::step::enumerate_k_chains;
use xmlqui::chains::{analyze_query, analyze_update, QueryChains};
use xmlqui::finite::node_bound;
use xmlqui::independence::check_sets;
use xmlqui::schema::sibling_order;
use xmlqui::{check, check_materialized, pair_k, parse_query, parse_update, ContentModel, Dtd, Label};

const LIMIT: usize = 20_000;

/// Explicit inference enumerates every k-chain; keep it to small sets.
fn small(d: &Dtd, k: usize) -> bool {
    enumerate_k_chains(d, k, LIMIT).is_some()
}

fn model() -> impl Strategy<Value = ContentModel> {
    let leaf =
        prop_oneof![Just(ContentModel::Empty), prop::sample::select(vec!["a", "b", "c"]).prop_map(ContentModel::atom),];
    leaf.prop_recursive(4, 16, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(ContentModel::concat),
            prop::collection::vec(inner.clone(), 2..4).prop_map(ContentModel::alt),
            inner.clone().prop_map(ContentModel::star),
            inner.clone().prop_map(ContentModel::plus),
            inner.prop_map(ContentModel::opt),
        ]
    })
}

/// Pairs read off the words of `r` with every repetition taken at most twice.
fn order_by_unrolling(r: &ContentModel) -> BTreeSet<(Label, Label)> {
    let mut out = BTreeSet::new();
    for w in r.unroll(2) {
        for i in 0..w.len() {
            for j in i + 1..w.len() {
                out.insert((w[i].clone(), w[j].clone()));
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, ..ProptestConfig::default() })]

    #[test]
    fn sibling_order_matches_unrolling(r in model()) {
        prop_assert_eq!(sibling_order(&r), order_by_unrolling(&r));
    }

    #[test]
    fn printed_queries_reparse_to_the_same_core(seed in any::<u64>()) {
        let t = common::triple(&mut ChaCha8Rng::seed_from_u64(seed), 4);
        let q = t.query.to_string();
        let again = parse_query(&q).unwrap_or_else(|e| panic!("{q}: {e}"));
        prop_assert_eq!(again.to_string(), q);
        let u = t.update.to_string();
        let again = parse_update(&u).unwrap_or_else(|e| panic!("{u}: {e}"));
        prop_assert_eq!(again.to_string(), u);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, ..ProptestConfig::default() })]

    /// One node stands for several chains, so emptiness tests are per node
    /// and the graph may keep chains the explicit inference drops. It never
    /// loses one, and it never turns a dependent pair independent.
    #[test]
    fn graph_inference_covers_explicit(seed in any::<u64>(), extra in 0usize..2) {
        let t = common::triple(&mut ChaCha8Rng::seed_from_u64(seed), 4);
        let k = pair_k(&t.query, &t.update) + extra;
        if !small(&t.dtd, k) {
            return Ok(());
        }
        let (Ok(qa), Ok(ua)) = (
            analyze_query(&t.dtd, k, &t.query).materialize(LIMIT),
            analyze_update(&t.dtd, k, &t.update).materialize(LIMIT),
        ) else {
            return Ok(());
        };
        let case = format!("{}{}\n{}", t.dtd_text, t.query_text, t.update_text);
        let qn = infer_query(&t.dtd, k, &t.query);
        prop_assert!(qa.r.is_superset(&qn.r), "r {:?}\n{case}", qn.r.difference(&qa.r).collect::<Vec<_>>());
        prop_assert!(qa.v.is_superset(&qn.v), "v {:?}\n{case}", qn.v.difference(&qa.v).collect::<Vec<_>>());
        prop_assert!(qa.e.is_superset(&qn.e), "e\n{case}");
        let un = infer_update(&t.dtd, k, &t.update);
        prop_assert!(ua.is_superset(&un), "u {:?}\n{case}", un.difference(&ua).collect::<Vec<_>>());
        if check(&t.dtd, &t.query, &t.update, Some(k)).is_independent() {
            prop_assert!(check_materialized(&t.dtd, &t.query, &t.update, Some(k)).is_independent(), "{case}");
        }
    }

    #[test]
    fn node_count_within_bound(seed in any::<u64>(), k in 1usize..12) {
        let t = common::triple(&mut ChaCha8Rng::seed_from_u64(seed), 6);
        let bound = node_bound(&t.dtd, k);
        prop_assert!(analyze_query(&t.dtd, k, &t.query).cdag.stats().nodes <= bound);
        prop_assert!(analyze_update(&t.dtd, k, &t.update).cdag.stats().nodes <= bound);
    }

    #[test]
    fn more_chains_never_restore_independence(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = common::triple(&mut rng, 4);
        let names: Vec<String> = t.dtd.tags().iter().map(|x| x.as_str().to_string()).collect();
        let tags: Vec<&str> = names.iter().map(String::as_str).collect();
        let other = loop {
            if let Ok(q) = parse_query(&common::query_text(&mut rng, &tags)) {
                break q;
            }
        };
        let k = pair_k(&t.query, &t.update);
        if !small(&t.dtd, k) {
            return Ok(());
        }
        let q = infer_query(&t.dtd, k, &t.query);
        let o = infer_query(&t.dtd, k, &other);
        let u = infer_update(&t.dtd, k, &t.update);
        let more = QueryChains {
            r: q.r.union(&o.r).cloned().collect(),
            v: q.v.union(&o.v).cloned().collect(),
            e: q.e.union(&o.e).cloned().collect(),
        };
        let base = check_sets(&q, &u, k, usize::MAX);
        let wider = check_sets(&more, &u, k, usize::MAX);
        prop_assert!(base.is_independent() || !wider.is_independent());
        prop_assert!(base.witnesses.iter().all(|w| wider.witnesses.contains(w)));
    }
}

/// `a.d.a.d.a.d` has no `c` below it within k = 3, but its graph node merges
/// paths with smaller label counts, so a `c` is reachable and the used chain
/// survives.
#[test]
fn shared_node_keeps_extra_used_chain() {
    let d =
        Dtd::parse("<!ELEMENT a (c*|d?|d*)*> <!ELEMENT b (b?)> <!ELEMENT c (b?)> <!ELEMENT d (d,(d?,a?,d*),(b?)?)>")
            .unwrap();
    let q = parse_query("//d//c").unwrap();
    let g = analyze_query(&d, 3, &q).materialize(LIMIT).unwrap();
    let n = infer_query(&d, 3, &q);
    assert_eq!(g.r, n.r);
    let extra: Vec<String> = g.v.difference(&n.v).map(|u| u.chain.to_string()).collect();
    assert_eq!(extra, ["a.d.a.d.a.d"]);
    assert!(g.v.is_superset(&n.v));
}
