use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use momentlab::jacobi::{jacobi_eigenvalues, singular_values, DEFAULT_MAX_SWEEPS};
use momentlab::kernels::{nystrom_with, KernelTag};
use momentlab::operators::assemble_bh_j_with;
use momentlab::{Execution, PrecisionContext};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn svd(c: &mut Criterion) {
    let ctx = PrecisionContext::new(256).unwrap();
    let mut group = c.benchmark_group("svd_bh_j");
    group.sample_size(10);
    for n in [20usize, 40] {
        let m = assemble_bh_j_with(&ctx, 3 * n, n, Execution::Sequential);
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &m, |b, m| b.iter(|| singular_values(m, exec)));
        }
    }
    group.finish();
}

fn eigen(c: &mut Criterion) {
    let ctx = PrecisionContext::new(128).unwrap();
    let mut group = c.benchmark_group("eigen_nystrom");
    group.sample_size(10);
    for m in [32usize, 48] {
        let k = nystrom_with(&ctx, KernelTag::HausdorffJ, m, Execution::Sequential).unwrap();
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, m), &k, |b, k| {
                b.iter(|| jacobi_eigenvalues(k, exec, DEFAULT_MAX_SWEEPS).unwrap())
            });
        }
    }
    group.finish();
}

fn assembly(c: &mut Criterion) {
    let ctx = PrecisionContext::new(256).unwrap();
    let mut group = c.benchmark_group("assemble_bh_j");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new(name, 60), |b| b.iter(|| assemble_bh_j_with(&ctx, 180, 60, exec)));
    }
    group.finish();
}

criterion_group!(benches, svd, eigen, assembly);
criterion_main!(benches);
