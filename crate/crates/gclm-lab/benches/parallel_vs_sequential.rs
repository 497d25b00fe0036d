//! Ensemble throughput: rayon-backed `ensemble_map` vs the sequential
//! driver, on the workload the lab actually runs (many independent short
//! trajectories). Run with `cargo bench`; `--no-default-features` makes
//! the parallel path fall back to sequential, which should show up here
//! as near-identical timings.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use gclm_lab::ensemble::{ensemble_map, ensemble_map_seq};
use gclm_lab::forcing::{ForcingSpec, NoiseStream};
use gclm_lab::integrator::{run, RunOptions, SolverConfig, Stepper, TrajectoryState};
use gclm_lab::spectral::Field;

/// One short forced trajectory; returns the final squared norm so the
/// optimizer cannot discard the work.
fn trajectory(traj: u64) -> f64 {
    let cfg = SolverConfig::new(1.0, -2.0, 32, 0.01).expect("valid benchmark config");
    let forcing = ForcingSpec::single_band(ForcingSpec::DEFAULT_BETA).expect("valid forcing");
    let mut stepper = Stepper::new(cfg, forcing).expect("valid stepper");
    let mut state = TrajectoryState::new(
        Field::cosine(32, 1, 1.0),
        NoiseStream::new(11, traj),
        false,
    );
    let opts = RunOptions::new(1.0, 10).expect("valid run options");
    run(&mut stepper, &mut state, &opts, &mut []).expect("stable benchmark run");
    state.omega.l2_norm().powi(2)
}

fn bench_ensembles(c: &mut Criterion) {
    let mut group = c.benchmark_group("ensemble");
    group.sample_size(10);
    for &n in &[8usize, 32] {
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| {
            b.iter(|| ensemble_map(n, |i| trajectory(i as u64)))
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| ensemble_map_seq(n, |i| trajectory(i as u64)))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_ensembles);
criterion_main!(benches);
