use criterion::{criterion_group, criterion_main, Criterion};
use scatvox::encoding::{nested_cv_encode, CvOptions};
use scatvox::{batch_scatter, ScatteringConfig, Scatterer};
use scatvox_bench::{fixture_image, fixture_study};

fn scatter(c: &mut Criterion) {
    let mut group = c.benchmark_group("scatter");
    for (size, j, l) in [(64, 4, 4), (128, 5, 4), (128, 5, 8)] {
        let sc = Scatterer::new(&ScatteringConfig::new(2, j, l), size, size).unwrap();
        let u = fixture_image(size, 3);
        group.bench_function(format!("{size}px_J{j}_L{l}"), |b| b.iter(|| sc.coefficients(&u).unwrap()));
    }
    group.finish();
}

fn batch(c: &mut Criterion) {
    let images: Vec<_> = (0..24).map(|i| fixture_image(64, i)).collect();
    let config = ScatteringConfig::new(2, 4, 4);
    c.bench_function("batch_scatter_24x64px", |b| b.iter(|| batch_scatter(&images, &config).unwrap()));
}

fn ridge_cv(c: &mut Criterion) {
    let (x, y, sessions) = fixture_study(216, 181, 50);
    let options = CvOptions::default();
    let mut group = c.benchmark_group("encode");
    group.sample_size(10);
    group.bench_function("nested_cv_216x181_50vox", |b| b.iter(|| nested_cv_encode(&x, &y, &sessions, &options).unwrap()));
    group.finish();
}

criterion_group!(benches, scatter, batch, ridge_cv);
criterion_main!(benches);
