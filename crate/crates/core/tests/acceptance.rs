//! One line per acceptance criterion: `PASS`/`FAIL`, the criterion, details.
//! Tolerances and sample sizes are the constants below.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xmlqui::bench::{dtd_family, expr_family, loglog_slope, run_cell};
use xmlqui::chains::step::enumerate_k_chains;
use xmlqui::chains::{analyze_query, analyze_update};
use xmlqui::finite::{node_bound, query_frequency, query_k, unfolded_chains, update_k, FreqTag};
use xmlqui::fixtures::{self, ALL};
use xmlqui::par::Exec;
use xmlqui::schema::chain;
use xmlqui::verify::{check_properties_all, run_all, verify, ChainOracle};
use xmlqui::xmlstore::{count_valid, enumerate_valid, EnumBounds};
use xmlqui::{check, check_materialized, pair_k, parse_query, parse_update, Tag, VerdictKind};

const RANDOM_TRIPLES: usize = 200;
const RANDOM_SEED: u64 = 0x5eed_2024;
const RANDOM_MAX_TAGS: usize = 6;
const ENUM_DEPTH: usize = 4;
const ENUM_REPEAT: usize = 2;
/// Documents per random DTD; larger DTDs are redrawn.
const MAX_DOCS: u128 = 20_000;
const SOUNDNESS_BUDGET: Duration = Duration::from_secs(600);
const MATERIALIZE_LIMIT: usize = 100_000;
const D5_LIMIT: Duration = Duration::from_secs(2);
const D10_LIMIT: Duration = Duration::from_secs(60);
const MAX_SLOPE: f64 = 5.0;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn worked_examples() -> Outcome {
    let f = fixtures::get("fig1").unwrap();
    let (d, q, u) = (f.dtd(), f.query(), f.update());
    let k = pair_k(&q, &u);
    ensure(check(&d, &q, &u, None).is_independent(), "fig1 not independent")?;
    let r = analyze_query(&d, k, &q).materialize(MATERIALIZE_LIMIT).unwrap().r;
    ensure(r == BTreeSet::from([chain("doc.a.c")]), format!("fig1 return chains {r:?}"))?;
    let uc: Vec<String> =
        analyze_update(&d, k, &u).materialize(MATERIALIZE_LIMIT).unwrap().iter().map(|c| c.to_string()).collect();
    ensure(uc == ["doc.b:c"], format!("fig1 update chains {uc:?}"))?;

    let f = fixtures::get("bib_title").unwrap();
    ensure(check(&f.dtd(), &f.query(), &f.update(), None).is_independent(), "titles vs author insert")?;

    let f = fixtures::get("control").unwrap();
    let (d, q, u) = (f.dtd(), f.query(), f.update());
    ensure(check(&d, &q, &u, None).result == VerdictKind::MaybeDependent, "control verdict")?;
    let rep = verify(&d, &q, &u, &EnumBounds::new(ENUM_DEPTH, ENUM_REPEAT), Exec::best());
    ensure(rep.stats.counterexamples > 0, "control: no dynamic counterexample")?;

    let f = fixtures::get("d1").unwrap();
    let (d, q, u) = (f.dtd(), f.query(), f.update());
    ensure(!check(&d, &q, &u, Some(2)).is_independent(), "d1 independent at k=2")?;
    for k in 2..=8 {
        ensure(!check(&d, &q, &u, Some(k)).is_independent(), format!("d1 independent at k={k}"))?;
    }
    Ok(format!("fig1, bib, control ({} counterexamples), d1 for k in 2..=8", rep.stats.counterexamples))
}

fn k_bounds() -> Outcome {
    let qk = |s: &str| query_k(&parse_query(s).unwrap()).k();
    let got = [
        qk("/r/a/b/f/a"),
        qk("/descendant::b/descendant::c/descendant::e"),
        qk("/descendant::b/a/b"),
        query_frequency(
            &FreqTag::Named(&Tag::new("a")),
            &parse_query("for $x in /a/a return for $y in /a/b return ($x, $y)").unwrap(),
        ),
        update_k(&parse_update(fixtures::NEST_INSERT).unwrap()).k(),
        qk("/descendant::c/following-sibling::b"),
    ];
    let want = [2, 3, 2, 3, 3, 2];
    ensure(got == want, format!("got {got:?}, want {want:?}"))?;
    Ok(format!("{got:?}"))
}

fn soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(RANDOM_SEED);
    let bounds = EnumBounds::new(ENUM_DEPTH, ENUM_REPEAT);
    let start = Instant::now();
    let (mut done, mut independent, mut instances, mut checked) = (0, 0, 0, 0);
    while done < RANDOM_TRIPLES {
        let t = common::triple(&mut rng, RANDOM_MAX_TAGS);
        if count_valid(&t.dtd, &bounds) > MAX_DOCS {
            continue;
        }
        let trees = enumerate_valid(&t.dtd, &bounds);
        let verdict = check(&t.dtd, &t.query, &t.update, None);
        let stats = run_all(&t.dtd, &trees, &t.query, &t.update, Exec::best());
        if stats.applicable() == 0 {
            continue;
        }
        let case = format!("dtd:\n{}query: {}\nupdate: {}", t.dtd_text, t.query_text, t.update_text);
        ensure(
            !(verdict.is_independent() && stats.counterexamples > 0),
            format!("unsound on {case}\ndocument: {:?}", stats.first_counterexample),
        )?;
        let oracle = ChainOracle::new(&t.dtd, &t.query, &t.update, ENUM_DEPTH);
        let props =
            check_properties_all(&t.dtd, &trees, &t.query, &t.update, &oracle, verdict.is_independent(), Exec::best());
        ensure(props.failures() == 0, format!("{props:?} on {case}"))?;
        done += 1;
        independent += usize::from(verdict.is_independent());
        instances += stats.applicable();
        checked += props.checked;
        ensure(start.elapsed() <= SOUNDNESS_BUDGET, "over time budget")?;
    }
    Ok(format!(
        "{done} triples ({independent} independent), {instances} instances, {checked} property checks, {:.1}s",
        start.elapsed().as_secs_f64()
    ))
}

fn finite_agreement() -> Outcome {
    let mut folded = 0;
    for f in ALL {
        let (d, q, u) = (f.dtd(), f.query(), f.update());
        let k = pair_k(&q, &u);
        let base = check(&d, &q, &u, Some(k)).result;
        for kk in [k + 1, k + 2] {
            let v = check(&d, &q, &u, Some(kk)).result;
            ensure(v == base, format!("{}: {base} at k={k}, {v} at k={kk}", f.name))?;
        }
        for big in [k, k + 1, k + 2] {
            let bad =
                unfolded_chains(&d, &q, big, MATERIALIZE_LIMIT).map_err(|_| format!("{}: too many chains", f.name))?;
            ensure(bad.is_empty(), format!("{}: unfolded at K={big}: {bad:?}", f.name))?;
            folded += 1;
        }
    }
    Ok(format!("{} fixtures, {folded} folding checks", ALL.len()))
}

fn cdag_equivalence() -> Outcome {
    let mut compared = 0;
    let mut bounded = 0;
    for f in ALL {
        let (d, q, u) = (f.dtd(), f.query(), f.update());
        let k = pair_k(&q, &u);
        if enumerate_k_chains(&d, k, MATERIALIZE_LIMIT).is_some() {
            let (g, m) = (check(&d, &q, &u, None), check_materialized(&d, &q, &u, None));
            ensure(g.result == m.result, format!("{}: graph {} vs explicit {}", f.name, g.result, m.result))?;
            compared += 1;
        }
        for kk in [k, k + 2] {
            let bound = node_bound(&d, kk);
            let n = analyze_query(&d, kk, &q).cdag.stats().nodes.max(analyze_update(&d, kk, &u).cdag.stats().nodes);
            ensure(n <= bound, format!("{}: {n} nodes > bound {bound} at k={kk}", f.name))?;
            bounded += 1;
        }
    }
    for (n, m, k) in [(5, 5, 15), (10, 10, 20)] {
        let c = run_cell(n, m, k);
        let bound = node_bound(&dtd_family(n), k);
        ensure(c.nodes <= bound, format!("d{n}/e{m} k={k}: {} nodes > bound {bound}", c.nodes))?;
        bounded += 1;
    }
    Ok(format!("{compared} verdict comparisons, {bounded} node bounds"))
}

fn scalability() -> Outcome {
    let mut parts = Vec::new();
    for k in [5, 10, 15] {
        let c = run_cell(5, 5, k);
        let t = Duration::from_secs_f64(c.millis / 1e3);
        ensure(t < D5_LIMIT, format!("d5/e5 k={k}: {t:?}"))?;
        parts.push(format!("d5/e5 k={k} {:.0}ms", c.millis));
    }
    let c = run_cell(10, 10, 20);
    let t = Duration::from_secs_f64(c.millis / 1e3);
    ensure(t < D10_LIMIT, format!("d10/e10: {t:?}"))?;
    parts.push(format!("d10/e10 k=20 {:.0}ms", c.millis));
    // time against |d| for a fixed query and k; best of three per point
    let q = expr_family(5);
    let pts: Vec<(f64, f64)> = [2usize, 3, 4, 6, 8, 10]
        .iter()
        .map(|&n| {
            let d = dtd_family(n);
            let best = (0..3)
                .map(|_| {
                    let s = Instant::now();
                    analyze_query(&d, 10, &q);
                    s.elapsed().as_secs_f64()
                })
                .fold(f64::INFINITY, f64::min);
            (n as f64, best)
        })
        .collect();
    let slope = loglog_slope(&pts);
    ensure(slope <= MAX_SLOPE, format!("log-log slope {slope:.2}"))?;
    parts.push(format!("slope {slope:.2}"));
    Ok(parts.join(", "))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 6] = [
        ("worked examples", worked_examples),
        ("k bounds", k_bounds),
        ("soundness and typing on random triples", soundness),
        ("finite/infinite agreement", finite_agreement),
        ("graph vs explicit check, node bound", cdag_equivalence),
        ("scalability", scalability),
    ];
    let mut failed = Vec::new();
    for (name, f) in criteria {
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".to_string()));
        match res {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(e) => {
                println!("FAIL {name}: {e}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
