//! One worker against the full pool on the heavy kernels. Building with
//! `--no-default-features` runs the same benches on the sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use julia_thermo::family::QuadraticFamily;
use julia_thermo::metric::{MetricContext, MetricOptions};
use julia_thermo::par;
use julia_thermo::poly::MarkedPolynomial;
use julia_thermo::thermo::{self, PeriodicAtoms, ThermoSystem};
use julia_thermo::Complex64;

fn thread_counts() -> Vec<usize> {
    let all = std::thread::available_parallelism().map_or(1, |n| n.get());
    if all > 1 {
        vec![1, all]
    } else {
        vec![1]
    }
}

fn kernels(c: &mut Criterion) {
    let f = MarkedPolynomial::quadratic(Complex64::new(-0.1, 0.05));
    let mut group = c.benchmark_group("kernels");
    group.sample_size(10);
    for threads in thread_counts() {
        group.bench_with_input(BenchmarkId::new("enumerate_n12", threads), &threads, |b, &t| {
            b.iter(|| par::with_threads(t, || PeriodicAtoms::enumerate(&f, 12).unwrap()))
        });
        let system = ThermoSystem::new(&f, &[8, 9, 10, 11, 12]).unwrap();
        group.bench_with_input(BenchmarkId::new("pressure_levels_8_12", threads), &threads, |b, &t| {
            b.iter(|| par::with_threads(t, || system.pressure(|z| z.re - f.derivative_at(z).norm().ln()).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("ulam_grid_100", threads), &threads, |b, &t| {
            b.iter(|| par::with_threads(t, || thermo::ulam_pressure(&f, |_| 0.0, 100, 0.05).unwrap()))
        });
        let ctx = MetricContext::new(&QuadraticFamily, &[-0.1, 0.05], 0.3, 9, MetricOptions::default()).unwrap();
        group.bench_with_input(BenchmarkId::new("hessian_n9", threads), &threads, |b, &t| {
            b.iter(|| par::with_threads(t, || ctx.hessian().unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
