//! Convergence sweep over a halving chain, scheduled sequentially and
//! with the data-parallel executor. Without the `parallel` feature both
//! variants run sequentially.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pdae_split::experiments::{halving_chain, reference_solution, ExecutionMode, ReferenceConfig, Study, StudyOptions};
use pdae_split::problems::{ProblemKind, ProblemSpec};
use pdae_split::splitting::{CorrectionKind, Scheme};

fn sweep(c: &mut Criterion) {
    let sys = ProblemSpec::new(ProblemKind::IntegralMean)
        .with_grid(80)
        .build()
        .unwrap();
    let taus = halving_chain(2e-2, 5);
    let finest = *taus.last().unwrap();
    let reference =
        reference_solution(&sys, &ReferenceConfig::for_finest_step(finest).with_cross_check(false)).unwrap();

    let mut group = c.benchmark_group("strang-sweep");
    group.sample_size(10);
    for (name, mode) in [
        ("sequential", ExecutionMode::Sequential),
        ("parallel", ExecutionMode::Parallel),
    ] {
        let options = StudyOptions {
            mode,
            ..StudyOptions::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(name), &options, |b, &options| {
            b.iter(|| {
                let study = Study::new(&sys, &reference, &taus, options).unwrap();
                study.global(Scheme::Strang, &CorrectionKind::NonlinearAtState).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
