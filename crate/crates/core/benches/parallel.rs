//! Sequential vs. rayon-parallel execution of the batch workloads.

use std::f64::consts::{FRAC_PI_4, PI};
use std::hint::black_box;

use cfsync::controllers::{DvocParams, Setpoints};
use cfsync::fast::{build_fast_system, check_spectral_condition, spectrum};
use cfsync::freq::{
    criterion_sync, physical_reference, sync_loop_ratio, BranchDynamics, ContourOptions, DynamicNetwork,
};
use cfsync::network::{canon3, reduce};
use cfsync::par::{self, Execution};
use cfsync::sim::{simulate_many, InitialState, IntegratorConfig, ModelKind, Scenario, SimNetwork};
use cfsync::C64;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const W0: f64 = 100.0 * PI;
const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn setpoints() -> Vec<Setpoints> {
    vec![
        Setpoints::new(0.6, 0.4, 1.0).unwrap(),
        Setpoints::new(0.3, -0.2, 1.0).unwrap(),
        Setpoints::new(-0.4, 0.1, 1.0).unwrap(),
    ]
}

fn params(eta_pu: f64) -> DvocParams {
    DvocParams::from_per_unit(eta_pu, 5.0, 0.005, FRAC_PI_4, W0).unwrap()
}

fn ensemble(count: usize) -> Vec<Scenario> {
    let y = reduce(&canon3()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    (0..count)
        .map(|_| {
            let v0 = (0..3)
                .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            Scenario {
                network: SimNetwork::from_reduced(&y),
                params: vec![params(0.04); 3],
                setpoints: setpoints(),
                model: ModelKind::FastLinear,
                initial: InitialState::voltages(v0),
                events: vec![],
                integrator: IntegratorConfig::for_model(ModelKind::FastLinear, 0.05),
                exogenous: None,
            }
        })
        .collect()
}

fn sync_ensemble(c: &mut Criterion) {
    let scenarios = ensemble(16);
    let mut g = c.benchmark_group("sync_ensemble");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(simulate_many(exec, black_box(&scenarios))))
        });
    }
    g.finish();
}

fn nyquist_evaluation(c: &mut Criterion) {
    let net = DynamicNetwork::new(&canon3(), W0, BranchDynamics::RL).unwrap();
    let p = params(0.04);
    let reference: Vec<C64> = setpoints()
        .iter()
        .map(|s| physical_reference(&p, s, s.u_star()))
        .collect();
    let l = sync_loop_ratio(&net, &p, &reference, 0).unwrap();
    let mut g = c.benchmark_group("nyquist_curve");
    g.sample_size(20);
    for (name, exec) in MODES {
        let opts = ContourOptions {
            exec,
            ..Default::default()
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(criterion_sync(&l, &opts).unwrap()))
        });
    }
    g.finish();
}

fn condition_sweep(c: &mut Criterion) {
    let y = reduce(&canon3()).unwrap();
    let sp = setpoints();
    let u_f: Vec<f64> = sp.iter().map(|s| s.u_star()).collect();
    let etas: Vec<f64> = (1..=256).map(|i| 0.001 * i as f64).collect();
    let mut g = c.benchmark_group("condition_sweep");
    g.sample_size(20);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                par::map(exec, &etas, |&eta| {
                    let sys = build_fast_system(&y, &[params(eta); 3], &sp, &u_f).unwrap();
                    spectrum(&sys.a)
                        .map(|s| check_spectral_condition(&s, 1e-8).pass)
                        .unwrap_or(false)
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, sync_ensemble, nyquist_evaluation, condition_sweep);
criterion_main!(benches);
