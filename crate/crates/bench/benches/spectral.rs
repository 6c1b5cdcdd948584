//! Hot-path benchmarks: mode-sum evaluation of one driver increment, one
//! evolution step at desk-scale resolution, and one covariation sample.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scalelab_core::driver::{
    evaluate_drivers_into, sample_increment, DriverFields, SamplerConfig,
};
use scalelab_core::evolution::{step_with_scratch, ScaleState, StepOptions};
use scalelab_core::grid::GridSpec;

fn desk_spec() -> GridSpec {
    GridSpec::new(64, std::f64::consts::TAU * 3.0f64.exp()).unwrap()
}

fn bench_evaluate(c: &mut Criterion) {
    let spec = desk_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inc = sample_increment(0.5, 0.01, 1.01, &SamplerConfig::plane_wave(64), &mut rng).unwrap();
    let mut out = DriverFields::zeros(spec);
    c.bench_function("evaluate_drivers 64x64 grid, 64 modes", |b| {
        b.iter(|| evaluate_drivers_into(&inc, spec, &mut out))
    });
}

fn bench_step(c: &mut Criterion) {
    let spec = desk_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let opts = StepOptions::default();
    // warm the state a little so the transport terms are non-trivial
    let mut state = ScaleState::initial(spec, 0.1, true);
    let mut scratch = DriverFields::zeros(spec);
    for i in 0..10 {
        let s = i as f64 * 0.01;
        let inc =
            sample_increment(s, 0.01, state.lambda, &SamplerConfig::plane_wave(64), &mut rng)
                .unwrap();
        state = step_with_scratch(state, &inc, &opts, &mut scratch).unwrap();
    }
    let inc = sample_increment(0.1, 0.01, state.lambda, &SamplerConfig::plane_wave(64), &mut rng)
        .unwrap();
    c.bench_function("step 64x64 grid, 64 modes", |b| {
        b.iter_batched(
            || state.clone(),
            |s| step_with_scratch(s, &inc, &opts, &mut scratch).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = bench_evaluate, bench_step
}
criterion_main!(benches);
