use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kramers_core::eps::{EpsIntegrator, EpsScheme, ForcingQuadrature, LiveDriver, SchemeKind};
use kramers_core::transport::{solve_assignment, w2_sliced};
use kramers_core::{
    w2_1d, DriverState, EmpiricalMeasure, NoiseModel, ParticleEnsemble, PotentialSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}

fn eps_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("eps_step");
    for n in [256usize, 4096] {
        let model = NoiseModel::scalar_ou(1, 1.0, 1.0).unwrap();
        let pot = PotentialSpec::curie_weiss(1.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pos = EmpiricalMeasure::from_flat(1, uniform(&mut rng, n)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            let mut ens = ParticleEnsemble::eps_mode(pos.clone(), vec![0.0; n], 0.05).unwrap();
            let mut drv = DriverState::stationary(&model, &mut rng);
            let mut integ = EpsIntegrator::new(
                &model,
                &pot,
                EpsScheme::new(SchemeKind::Exponential, 0.0025),
                1.0,
            );
            b.iter(|| {
                let mut src = LiveDriver {
                    model: &model,
                    state: &mut drv,
                    rng: &mut rng,
                    quadrature: ForcingQuadrature::StepAverage,
                };
                black_box(integ.step(&mut ens, &mut src).unwrap())
            });
        });
    }
    group.finish();
}

fn transport(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = uniform(&mut rng, 16_000);
    let b = uniform(&mut rng, 16_000);
    c.bench_function("w2_1d/16000", |bench| {
        bench.iter(|| w2_1d(black_box(&a), black_box(&b)).unwrap())
    });

    let mut group = c.benchmark_group("assignment");
    for n in [64usize, 256] {
        let cost = uniform(&mut rng, n * n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, &n| {
            bench.iter(|| solve_assignment(n, black_box(&cost)))
        });
    }
    group.finish();

    let pa = EmpiricalMeasure::from_flat(3, uniform(&mut rng, 3 * 2000)).unwrap();
    let pb = EmpiricalMeasure::from_flat(3, uniform(&mut rng, 3 * 2000)).unwrap();
    c.bench_function("w2_sliced/2000x3d", |bench| {
        bench.iter(|| w2_sliced(black_box(&pa), black_box(&pb), 128, 5).unwrap())
    });
}

criterion_group!(benches, eps_step, transport);
criterion_main!(benches);
