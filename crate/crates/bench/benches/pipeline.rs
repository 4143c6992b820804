use criterion::{criterion_group, criterion_main, Criterion};
use rydkick_core::analysis::correlation_matrix;
use rydkick_core::basis::{assemble_kick_operator, Basis, BasisSpec, GridSpec, KickSettings, QuantumDefects, RadialBasis};
use rydkick_core::config::ScenarioConfig;
use rydkick_core::pipeline::Scenario;
use std::hint::black_box;

fn small_basis() -> RadialBasis {
    let spec = BasisSpec {
        n_min: 20,
        n_max: 45,
        l_max: 6,
        m: 0,
    };
    let basis = Basis::build(&spec, &QuantumDefects::cesium()).unwrap();
    RadialBasis::solve(&basis, &GridSpec::default()).unwrap()
}

fn kick(c: &mut Criterion) {
    let rb = small_basis();
    let settings = KickSettings::default();
    c.bench_function("radial_solve_n20-45_l6", |b| {
        b.iter(|| RadialBasis::solve(black_box(&rb.basis), &GridSpec::default()).unwrap())
    });
    c.bench_function("kick_assembly_window_columns", |b| {
        b.iter(|| assemble_kick_operator(black_box(&rb), 0.0014, &settings))
    });
}

fn ensemble(c: &mut Criterion) {
    let cfg = ScenarioConfig::from_toml_str("[basis]\nn_min = 20\nn_max = 45\nl_max = 1\n[hcp]\nenabled = false\n").unwrap();
    let s = Scenario::new(&cfg).unwrap();
    let packet = s.launch_packet().unwrap();
    let mut group = c.benchmark_group("ensemble");
    group.sample_size(10);
    group.bench_function("generate_100x500", |b| b.iter(|| s.ensemble(black_box(&packet), 1).unwrap()));
    let ens = s.ensemble(&packet, 1).unwrap();
    group.bench_function("correlate_and_fit", |b| b.iter(|| s.analyze(black_box(&ens)).unwrap()));
    group.bench_function("correlation_matrix", |b| b.iter(|| correlation_matrix(black_box(&ens)).unwrap()));
    group.finish();
}

criterion_group!(benches, kick, ensemble);
criterion_main!(benches);
