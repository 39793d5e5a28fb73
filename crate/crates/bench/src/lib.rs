//! Shared inputs for the criterion benches.

use trendlag::series::{chronological_split, FeatureMatrix, SplitDataset};
use trendlag::synth::{generate_synthetic, SyntheticSpec};
use trendlag::tensor::{NetworkSpec, RngState, Tensor};
use trendlag::importance::prepare_target;

/// 262-week planted-signal split with the feature at lag 2.
pub fn synthetic_split() -> SplitDataset {
    let d = generate_synthetic(&SyntheticSpec::default()).expect("default spec is valid");
    let target = prepare_target(&d.target).expect("nonzero target");
    let m = FeatureMatrix::with_exogenous(&target, &d.planted, 2).expect("aligned");
    chronological_split(&m, 0.8).expect("enough rows")
}

pub fn random_batch(spec: &NetworkSpec, batch: usize, seed: u64) -> Tensor {
    let mut rng = RngState::new(seed, "bench/batch");
    let n = batch * spec.input_len * spec.input_channels;
    let data = (0..n).map(|_| rng.uniform() * 100.0).collect();
    Tensor::new(vec![batch, spec.input_len, spec.input_channels], data).expect("shape matches")
}
