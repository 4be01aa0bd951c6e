use criterion::{black_box, criterion_group, criterion_main, Criterion};
use labnet_bench::{desk_example, desk_model};
use labnet_core::dsp::{extract_features, StftPlan};
use labnet_core::spatial::{encode_spatial_spectrum, triangulate, SpatialCodecConfig};
use labnet_core::train::{example_gradients, TrainExample};
use labnet_core::LabNet;

fn signal_path(c: &mut Criterion) {
    let example = desk_example(0.5);
    let cfg = desk_model();
    let plan = StftPlan::new(cfg.stft, example.mixture.len()).unwrap();
    c.bench_function("stft 6ch 0.5s", |b| b.iter(|| plan.stft(black_box(&example.mixture)).unwrap()));
    let spec = plan.stft(&example.mixture).unwrap();
    c.bench_function("features 6ch 0.5s", |b| b.iter(|| extract_features(black_box(&spec), 0).unwrap()));
    let codec = SpatialCodecConfig::default();
    c.bench_function("encode spectrum", |b| b.iter(|| encode_spatial_spectrum(black_box(73.5), &codec).unwrap()));
    c.bench_function("triangulate", |b| b.iter(|| triangulate(black_box(48.0), black_box(121.0), 0.28).unwrap()));
}

fn network(c: &mut Criterion) {
    let example = desk_example(0.5);
    let cfg = desk_model();
    let model = LabNet::new(cfg.clone(), 0).unwrap();
    let baseline = LabNet::new(cfg.clone().without_locator(), 0).unwrap();
    let mut group = c.benchmark_group("desk network 0.5s");
    group.sample_size(10);
    group.bench_function("inference", |b| b.iter(|| model.infer(black_box(&example.mixture)).unwrap()));
    let prepared = TrainExample::new(&example, &cfg).unwrap();
    group.bench_function("forward+backward", |b| {
        b.iter(|| example_gradients(&model, black_box(&prepared), (1.0, 10.0)).unwrap())
    });
    let prepared = TrainExample::new(&example, &baseline.config).unwrap();
    group.bench_function("forward+backward baseline", |b| {
        b.iter(|| example_gradients(&baseline, black_box(&prepared), (1.0, 10.0)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, signal_path, network);
criterion_main!(benches);
