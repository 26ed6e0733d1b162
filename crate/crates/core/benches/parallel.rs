//! Sequential versus rayon execution of the two data-parallel workloads:
//! a trajectory ensemble and a small entanglement map.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use resfluor::exec::Parallelism;
use resfluor::opalg::StateVector;
use resfluor::scenarios::{build_system, entanglement_map, HeraldingConfig, MollowConfig};
use resfluor::trajec::{run_ensemble, ChannelCounts, McwfEngine};

const MODES: [(&str, Parallelism); 2] = [("sequential", Parallelism::Sequential), ("rayon", Parallelism::Rayon)];

fn trajectories(c: &mut Criterion) {
    let cfg = HeraldingConfig {
        omega_drive: 1.0,
        delta: 1.85,
        detector_linewidth: 1.0,
        truncation: 3,
        trajectories: 256,
        duration: 50.0,
        burn_in: 10.0,
        windows: vec![1.0],
        histogram_half_range: 5.0,
        histogram_bins: 10,
        herald: "a2".into(),
        kappa: 0.5,
    };
    let model = build_system(&cfg.mollow(cfg.delta)).unwrap();
    let engine = McwfEngine::new(&model).unwrap();
    let psi0 = StateVector::basis(model.layout(), 0).unwrap();
    let proto = ChannelCounts::new(engine.labels().len(), cfg.burn_in);
    let mut group = c.benchmark_group("trajectory_ensemble");
    group.sample_size(10);
    for (name, par) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &par, |b, &par| {
            b.iter(|| run_ensemble(&engine, &psi0, cfg.duration, 1, cfg.trajectories, par, &proto).unwrap())
        });
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let base = MollowConfig { truncation: 3, ..MollowConfig::new(1.0, 0.0, 1.0) };
    let omegas = [1.0, 2.0, 3.0, 4.0];
    let deltas = [0.0, 2.0, 4.0, 6.0];
    let mut group = c.benchmark_group("entanglement_map");
    group.sample_size(10);
    for (name, par) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &par, |b, &par| {
            b.iter(|| entanglement_map(&base, &omegas, &deltas, par).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, trajectories, sweep);
criterion_main!(benches);
