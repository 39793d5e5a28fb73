use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use trendlag::tensor::{dense_forward, Activation, Mode, Network, NetworkSpec, RngState, Tape, Tensor};
use trendlag::train::{train, TrainConfig};
use trendlag_bench::{random_batch, synthetic_split};

fn dense(c: &mut Criterion) {
    let mut rng = RngState::new(1, "bench/dense");
    let mut t = |shape: Vec<usize>| {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.standard_normal()).collect()).unwrap()
    };
    // The forecaster's widest layer: 320 flattened inputs to 1024 units.
    let x = t(vec![4, 320]);
    let w = t(vec![320, 1024]);
    let b = t(vec![1024]);
    c.bench_function("dense 4x320x1024", |bench| {
        bench.iter(|| dense_forward(black_box(&x), &w, &b, Activation::Relu).unwrap())
    });
}

fn forward_backward(c: &mut Criterion) {
    let spec = NetworkSpec::forecaster(67);
    let mut net = Network::new(spec.clone(), &mut RngState::new(0, "bench/init")).unwrap();
    let x = random_batch(&spec, 4, 2);
    let y = Tensor::zeros(&[4, spec.outputs]);
    c.bench_function("forward batch 4", |bench| {
        bench.iter(|| {
            let mut tape = Tape::new();
            let mut rng = RngState::new(0, "bench/dropout");
            net.forward(&mut tape, x.clone(), Mode::Infer, &mut rng).unwrap()
        })
    });
    c.bench_function("forward+backward batch 4", |bench| {
        bench.iter(|| {
            let mut tape = Tape::new();
            let mut rng = RngState::new(0, "bench/dropout");
            let pred = net.forward(&mut tape, x.clone(), Mode::Train, &mut rng).unwrap();
            let target = tape.input(y.clone());
            let loss = tape.mse(pred, target).unwrap();
            tape.backward(loss, net.params_mut()).unwrap()
        })
    });
}

fn epochs(c: &mut Criterion) {
    let data = synthetic_split();
    let spec = NetworkSpec::forecaster(data.channels);
    let cfg = TrainConfig {
        max_epochs: 2,
        ..TrainConfig::default()
    };
    let mut g = c.benchmark_group("train");
    g.sample_size(10);
    g.bench_function("two epochs, 201 windows", |bench| {
        bench.iter_batched(|| data.clone(), |d| train(&spec, &d, &cfg, "bench").unwrap(), BatchSize::LargeInput)
    });
    g.finish();
}

criterion_group!(benches, dense, forward_backward, epochs);
criterion_main!(benches);
