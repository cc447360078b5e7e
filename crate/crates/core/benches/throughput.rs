use bcm_spectral::exec::Execution;
use bcm_spectral::model::{ExpPolyModel, Mode, SignalTrace};
use bcm_spectral::pipeline::{estimate_batch, EstimateOptions};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_complex::Complex64;
use std::hint::black_box;

fn model() -> ExpPolyModel {
    ExpPolyModel::new(vec![
        Mode::new(Complex64::new(-0.5, 2.0), vec![Complex64::new(1.0, 0.3), Complex64::new(-0.8, 0.6)]).unwrap(),
        Mode::new(Complex64::new(0.4, -3.0), vec![Complex64::new(0.9, -0.2)]).unwrap(),
        Mode::new(Complex64::new(-1.2, 5.5), vec![Complex64::new(0.0, 1.1)]).unwrap(),
    ])
    .unwrap()
}

fn traces(count: usize, n: usize) -> Vec<SignalTrace> {
    let base = model();
    (0..count)
        .map(|k| {
            let m = base.scaled(Complex64::from_polar(1.0, k as f64 * 0.1));
            m.synthesize(0.0, 1.0 / (n - 1) as f64, 2 * n - 1).unwrap()
        })
        .collect()
}

const STRATEGIES: [(&str, Execution); 2] =
    [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn bench_estimate_batch(c: &mut Criterion) {
    let batch = traces(16, 101);
    let opts = EstimateOptions::default();
    let mut group = c.benchmark_group("estimate_batch");
    group.sample_size(10);
    for (name, exec) in STRATEGIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| estimate_batch(black_box(&batch), &opts, exec))
        });
    }
    group.finish();
}

fn bench_synthesize(c: &mut Criterion) {
    let m = model();
    let mut group = c.benchmark_group("synthesize");
    for (name, exec) in STRATEGIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| m.synthesize_with(0.0, 1e-5, black_box(200_001), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_estimate_batch, bench_synthesize);
criterion_main!(benches);
