use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use xmlqui::fixtures;
use xmlqui::par::Exec;
use xmlqui::verify::run_all;
use xmlqui::xmlstore::{enumerate_valid, EnumBounds};

fn dynamic_check(c: &mut Criterion) {
    let mut group = c.benchmark_group("verify");
    group.sample_size(10);
    for name in ["control", "bib_title", "sibling_rec"] {
        let f = fixtures::get(name).unwrap();
        let (d, q, u) = (f.dtd(), f.query(), f.update());
        let trees = enumerate_valid(&d, &EnumBounds::new(5, 2));
        for (label, exec) in [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)] {
            group.bench_with_input(BenchmarkId::new(label, format!("{name}/{}", trees.len())), &trees, |b, ts| {
                b.iter(|| run_all(&d, ts, &q, &u, exec))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, dynamic_check);
criterion_main!(benches);
