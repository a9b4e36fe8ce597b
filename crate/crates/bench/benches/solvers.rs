use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use resin_bench::fixture;
use resin_core::filtering::enkf_update;
use resin_core::online::{rls_init, rls_update};
use resin_core::rng::split;
use resin_core::{build_prior, linalg, FilterState, PreparedStates};

fn pinv(c: &mut Criterion) {
    let mut group = c.benchmark_group("pinv");
    for n_r in [50, 100] {
        let states = fixture(n_r, 2000).states.into_matrix();
        group.bench_with_input(BenchmarkId::from_parameter(n_r), &states, |b, m| {
            b.iter(|| linalg::pinv_default(m).unwrap())
        });
    }
    group.finish();
}

fn drive(c: &mut Criterion) {
    let f = fixture(100, 2000);
    c.bench_function("drive/100x2000", |b| b.iter(|| f.params.drive_from_zero(&f.inputs).unwrap()));
}

fn unsupervised(c: &mut Criterion) {
    let f = fixture(100, 2000);
    c.bench_function("unsupervised_fullrank/100x2000", |b| {
        b.iter(|| PreparedStates::new(&f.states).unwrap().unsupervised_fullrank(&f.params, &mut split(0, 4)).unwrap())
    });
}

fn rls(c: &mut Criterion) {
    let f = fixture(50, 200);
    let mut rng = split(0, 4);
    c.bench_function("rls_step/50", |b| {
        let mut state = rls_init(&f.params);
        let mut t = 0;
        b.iter(|| {
            rls_update(&mut state, &f.params, f.states.column(t), f.states.column(t + 1), &mut rng).unwrap();
            t = (t + 1) % 200;
        })
    });
}

fn enkf(c: &mut Criterion) {
    let f = fixture(30, 1000);
    let prior = build_prior(&f.params, &f.states, &mut split(0, 4)).unwrap();
    let mut rng = split(0, 5);
    c.bench_function("enkf_step/30x300", |b| {
        let mut state = FilterState::standard(30, 300, 0.01, &mut rng).unwrap();
        let mut t = 0;
        b.iter(|| {
            enkf_update(&mut state, &prior, f.states.column(t), &mut rng).unwrap();
            t = (t + 1) % 1000;
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = pinv, drive, unsupervised, rls, enkf
}
criterion_main!(benches);
