use activscope::heads::{fit_forest_with, ForestConfig};
use activscope::nn::{extract_features, Preset, Tap};
use activscope::parallel::{init_thread_pool, Execution};
use activscope::scope::score_patches;
use activscope::synth::{generate_scenes, sample_split, DatasetManifest, PatchRequest, SceneSpec, Split};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn dataset() -> DatasetManifest {
    let scenes = generate_scenes(&SceneSpec::default(), 0, 2, Execution::Parallel).unwrap();
    let req = PatchRequest {
        patch_size: 64,
        n_pos: 32,
        n_neg: 32,
        tau: 0.8,
        grid_stride: 8,
        seed: 1,
        split: Split::Train,
    };
    sample_split(&scenes, &req).unwrap()
}

fn pipeline(c: &mut Criterion) {
    init_thread_pool();
    let data = dataset();
    let model = Preset::MiniAlex.build(1);
    let features = extract_features(&model, Tap::Fc1, &data, Execution::Parallel).unwrap();
    let forest = ForestConfig {
        n_trees: 50,
        ..ForestConfig::default()
    };

    let mut group = c.benchmark_group("extract_fc1");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| extract_features(&model, Tap::Fc1, &data, exec).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("score_channels");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| score_patches(&model, 7, &data, exec).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("fit_forest");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| fit_forest_with(&features, &forest, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
