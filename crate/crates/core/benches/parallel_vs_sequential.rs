use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use randrelu::analysis::{scaling_study, sup_error_with, FitMode, StudyOptions};
use randrelu::exec::Execution;
use randrelu::network::build_importance_network_with;
use randrelu::representation::OracleOptions;
use randrelu::targets::gaussian_target;
use randrelu::{HiddenParamDistribution, RepresentationOracle};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn oracle_build(c: &mut Criterion) {
    let target = gaussian_target(1, 4).unwrap();
    let mut group = c.benchmark_group("oracle_build_1d");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let opts = OracleOptions {
                    exec,
                    ..OracleOptions::with_tol(1e-4)
                };
                RepresentationOracle::build(&target, 1.0, opts).unwrap()
            })
        });
    }
    group.finish();
}

fn certified_sup_error(c: &mut Criterion) {
    let target = gaussian_target(2, 5).unwrap();
    let oracle = RepresentationOracle::build(&target, 1.0, OracleOptions::with_tol(1e-3)).unwrap();
    let dist = HiddenParamDistribution::uniform(2, 1.0).unwrap();
    let net = build_importance_network_with(&oracle, &dist, 400, 0, Execution::Parallel).unwrap();
    let mut group = c.benchmark_group("sup_error_2d_g401");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sup_error_with(&net, &target, 1.0, 401, exec).unwrap())
        });
    }
    group.finish();
}

fn small_scaling_study(c: &mut Criterion) {
    let target = gaussian_target(1, 4).unwrap();
    let oracle = RepresentationOracle::build(&target, 1.0, OracleOptions::with_tol(1e-4)).unwrap();
    let dist = HiddenParamDistribution::uniform(1, 1.0).unwrap();
    let seeds: Vec<u64> = (0..5).collect();
    let mut group = c.benchmark_group("scaling_study_1d");
    group.sample_size(10);
    for (name, exec) in MODES {
        let opts = StudyOptions {
            grid_density: 10_001,
            exec,
            ..StudyOptions::for_dim(1)
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| scaling_study(&oracle, &dist, &[25, 50, 100], &seeds, FitMode::Importance, opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, oracle_build, certified_sup_error, small_scaling_study);
criterion_main!(benches);
