use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ris_pricing::leader::{response_table, stackelberg_solve_with};
use ris_pricing::{purchase_decision, realize, solve_p1, PriceVector, PricingScheme, Scenario};

fn follower(c: &mut Criterion) {
    let mut scenario = Scenario::compact(4, 4, vec![8, 8]);
    scenario.rng_seed = 1;
    let (_, channels) = realize(&scenario);
    let free = PriceVector::non_uniform(vec![0.0; 2]);
    c.bench_function("solve_p1 M4 K4 2x8", |b| {
        b.iter(|| solve_p1(&channels, &free, &[true, true], &scenario).unwrap())
    });

    let scenario = Scenario::default();
    let (_, channels) = realize(&scenario);
    let prices = PriceVector::uniform(0.001, scenario.num_ris());
    c.bench_function("purchase_decision default", |b| {
        b.iter(|| purchase_decision(&channels, &prices, &scenario).unwrap())
    });
}

fn leader(c: &mut Criterion) {
    let scenario = Scenario::default();
    let (_, channels) = realize(&scenario);
    let mut group = c.benchmark_group("stackelberg default");
    group.sample_size(10);
    for (name, pricing) in [
        ("uniform", PricingScheme::Uniform),
        ("nonuniform", PricingScheme::NonUniform),
    ] {
        group.bench_function(name, |b| {
            b.iter_batched(
                || response_table(&channels, &scenario).unwrap(),
                |table| stackelberg_solve_with(&table, pricing).unwrap(),
                BatchSize::PerIteration,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, follower, leader);
criterion_main!(benches);
