use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use coverify_bench::Case;
use coverify_core::blobio::{read_blob_dump, render_blob_dump};
use coverify_core::{run_stage, three_way_compare, NumericMode, StageConfig, VerifierConfig};

fn stages(c: &mut Criterion) {
    for (name, case) in [("lenet", Case::lenet()), ("cifar", Case::cifar())] {
        let mut group = c.benchmark_group(name);
        for (label, cfg) in [
            ("sw", StageConfig::sw()),
            ("design_float32", StageConfig::design(NumericMode::Float32)),
            ("design_fixed", StageConfig::design(NumericMode::default_fixed())),
            ("hw_fixed", StageConfig::hw(NumericMode::default_fixed())),
        ] {
            group.bench_function(label, |b| {
                b.iter(|| run_stage(&case.net, &case.params, black_box(&case.image), &cfg).unwrap())
            });
        }
        group.finish();
    }
}

fn verification(c: &mut Criterion) {
    let case = Case::lenet();
    let mode = NumericMode::default_fixed();
    let sw = run_stage(&case.net, &case.params, &case.image, &StageConfig::sw()).unwrap();
    let design = run_stage(&case.net, &case.params, &case.image, &StageConfig::design(mode)).unwrap();
    let hw = run_stage(&case.net, &case.params, &case.image, &StageConfig::hw(mode)).unwrap();
    let cfg = VerifierConfig::default();
    c.bench_function("three_way_compare", |b| {
        b.iter(|| three_way_compare(black_box(&sw), &design, &hw, &cfg).unwrap())
    });
    let text = render_blob_dump(&design);
    c.bench_function("render_blob_dump", |b| b.iter(|| render_blob_dump(black_box(&design))));
    c.bench_function("read_blob_dump", |b| b.iter(|| read_blob_dump(black_box(&text)).unwrap()));
}

criterion_group!(benches, stages, verification);
criterion_main!(benches);
