use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use dppsgd::dataset::{generate_synthetic, DataSet, FeatureLaw, SyntheticConfig, Task};
use dppsgd::dpp::{build_projection_kernel, DppSampler};
use dppsgd::estimators::{xi_dpp, LossFn, LossKind};
use dppsgd::experiments::pipeline::reference_params;
use dppsgd::kde::Kde;
use dppsgd::ope::OpeSpec;
use dppsgd::rng::{stream_id, stream_rng};
use dppsgd::sgd::exact_minimizer;
use dppsgd::Execution;

fn data(n: usize) -> DataSet {
    generate_synthetic(&SyntheticConfig::new(n, 3, FeatureLaw::Uniform, Task::Linear, 1)).unwrap()
}

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn kernel_build(c: &mut Criterion) {
    let mut g = c.benchmark_group("kernel_build");
    g.sample_size(10);
    for n in [1000, 4000] {
        let ds = data(n);
        let spec = OpeSpec::new(&reference_params(&ds), 32).unwrap();
        let kde = Kde::with_default_bandwidth(&ds);
        for (name, exec) in MODES {
            g.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| {
                b.iter(|| build_projection_kernel(&spec, &kde, &ds, exec).unwrap())
            });
        }
    }
    g.finish();
}

fn replicate_batch(c: &mut Criterion) {
    let mut g = c.benchmark_group("dpp_replicates");
    g.sample_size(10);
    let ds = data(2000);
    let loss = LossFn::new(LossKind::Linear, 0.1).unwrap();
    let theta = exact_minimizer(&ds, &loss).unwrap();
    let spec = OpeSpec::new(&reference_params(&ds), 16).unwrap();
    let pk = build_projection_kernel(&spec, &Kde::with_default_bandwidth(&ds), &ds, Execution::Sequential).unwrap();
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, 200), |b| {
            b.iter(|| {
                exec.map(200, |r| {
                    let mut rng = stream_rng(7, stream_id(2, 16, r));
                    let batch = DppSampler::new(&pk).sample(&mut rng).unwrap();
                    xi_dpp(&ds, &loss, &theta, &pk, &batch).unwrap().vector[0]
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, kernel_build, replicate_batch);
criterion_main!(benches);
