use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use xmlqui::bench::{dtd_family, expr_family};
use xmlqui::chains::analyze_query;
use xmlqui::{check, check_materialized, fixtures};

fn family(c: &mut Criterion) {
    let mut group = c.benchmark_group("family");
    group.sample_size(10);
    for (n, m, k) in [(1, 1, 1), (3, 5, 10), (5, 5, 5), (5, 5, 10), (5, 5, 15), (10, 10, 10)] {
        let (d, q) = (dtd_family(n), expr_family(m));
        group.bench_function(BenchmarkId::from_parameter(format!("d{n}/e{m}/k{k}")), |b| {
            b.iter(|| analyze_query(&d, k, &q))
        });
    }
    group.finish();
}

fn fixture_checks(c: &mut Criterion) {
    let mut group = c.benchmark_group("fixtures");
    for name in ["fig1", "d1", "bib_email", "nest_insert_desc"] {
        let f = fixtures::get(name).unwrap();
        let (d, q, u) = (f.dtd(), f.query(), f.update());
        group.bench_function(BenchmarkId::new("graph", name), |b| b.iter(|| check(&d, &q, &u, None)));
        group.bench_function(BenchmarkId::new("explicit", name), |b| b.iter(|| check_materialized(&d, &q, &u, None)));
    }
    group.finish();
}

criterion_group!(benches, family, fixture_checks);
criterion_main!(benches);
