use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use specforge_core::oracle::check_entailment_bounded;
use specforge_core::{parse_formula, BoundedDomain};

const CASES: [(&str, &str, &str); 3] = [
    ("two_vars", "x > 0 and y > x", "y > 1"),
    ("three_vars", "a <= b and b <= c", "a <= c"),
    ("four_vars", "s = i * (i - 1) / 2 and 0 <= i and i <= n and i < n", "s + i = (i + 1) * i / 2"),
];

fn entailment(c: &mut Criterion) {
    let mut group = c.benchmark_group("check_entailment_bounded");
    let dom = BoundedDomain::new(8);
    for (name, a, b) in CASES {
        let (a, b) = (parse_formula(a).unwrap(), parse_formula(b).unwrap());
        group.bench_with_input(BenchmarkId::from_parameter(name), &(a, b), |bench, (a, b)| {
            bench.iter(|| check_entailment_bounded(a, b, &dom).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, entailment);
criterion_main!(benches);
