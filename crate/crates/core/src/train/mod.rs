//! Model fitting: MSE loss, Adam, early stopping with best-weight
//! restoration and learning-rate reduction on plateau.

mod adam;
mod schedule;

pub use adam::{adam_update, OptimizerState};
pub use schedule::{EarlyStopping, PlateauScheduler, StopSignal};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::metrics::scaled_mae;
use crate::series::{SplitDataset, WindowSample};
use crate::tensor::{Mode, Network, NetworkSpec, RngState, Tape, Tensor, TensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("{0} set is empty")]
    EmptyData(&'static str),
    #[error("invalid training config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub min_lr: f64,
    pub initial_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Reshuffle training batches each epoch. Off by default so runs are
    /// reproducible from the seed alone.
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            max_epochs: 500,
            early_stop_patience: 15,
            plateau_patience: 5,
            plateau_factor: 0.1,
            min_lr: 1e-9,
            initial_lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            shuffle: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be >= 1".into());
        }
        if self.early_stop_patience == 0 || self.plateau_patience == 0 {
            return bad("patiences must be >= 1".into());
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad(format!("plateau_factor {} outside (0, 1)", self.plateau_factor));
        }
        if !(self.min_lr > 0.0) || !(self.initial_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("adam betas must lie in [0, 1) and epsilon > 0".into());
        }
        Ok(())
    }

    /// Canonical text form. Seeds are excluded so that runs differing only in
    /// their random stream share a checksum.
    pub fn canonical(&self) -> String {
        format!(
            "batch_size={} max_epochs={} early_stop_patience={} plateau_patience={} plateau_factor={:?} \
             min_lr={:?} initial_lr={:?} beta1={:?} beta2={:?} epsilon={:?} shuffle={}",
            self.batch_size,
            self.max_epochs,
            self.early_stop_patience,
            self.plateau_patience,
            self.plateau_factor,
            self.min_lr,
            self.initial_lr,
            self.beta1,
            self.beta2,
            self.epsilon,
            self.shuffle
        )
    }
}

/// SHA-256 over the training config and architecture, identifying "same
/// recipe" across runs.
pub fn recipe_checksum(cfg: &TrainConfig, spec: &NetworkSpec) -> String {
    let mut h = Sha256::new();
    h.update(cfg.canonical().as_bytes());
    h.update(b"\n");
    h.update(spec.describe().as_bytes());
    hex::encode(h.finalize())
}

/// Mean squared residual over all elements of two equal-shape tensors.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<f64, TrainError> {
    Ok(crate::tensor::mse_value(pred, target)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub events: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub network: Network,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose weights were restored.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop_reason: StopReason,
    pub weight_checksum: String,
    pub recipe_checksum: String,
}

impl TrainedModel {
    /// Inference-mode forecasts, one `horizon`-long vector per sample.
    pub fn predict(&self, samples: &[WindowSample]) -> Result<Vec<Vec<f64>>, TrainError> {
        if samples.is_empty() {
            return Ok(Vec::new());
        }
        let (x, _) = batch_tensors(samples, self.network.spec())?;
        let out = self.network.predict(x)?;
        let h = self.network.spec().outputs;
        Ok(out.data().chunks(h).map(<[f64]>::to_vec).collect())
    }

    pub fn loss_on(&self, samples: &[WindowSample]) -> Result<f64, TrainError> {
        if samples.is_empty() {
            return Err(TrainError::EmptyData("evaluation"));
        }
        let (x, y) = batch_tensors(samples, self.network.spec())?;
        mse_loss(&self.network.predict(x)?, &y)
    }

    /// Scaled MAE over every forecast step of every sample.
    pub fn mae_on(&self, samples: &[WindowSample]) -> Result<f64, TrainError> {
        let pred: Vec<f64> = self.predict(samples)?.into_iter().flatten().collect();
        let truth: Vec<f64> = samples.iter().flat_map(|s| s.targets.iter().copied()).collect();
        scaled_mae(&pred, &truth).map_err(|e| TrainError::Config(e.to_string()))
    }

    /// Plain-text per-epoch table.
    pub fn log_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>6} {:>14} {:>14} {:>10}  events", "epoch", "train_loss", "val_loss", "lr");
        for r in &self.history {
            let _ = writeln!(
                s,
                "{:>6} {:>14.6} {:>14.6} {:>10.3e}  {}",
                r.epoch,
                r.train_loss,
                r.val_loss,
                r.lr,
                r.events.join(",")
            );
        }
        let _ = writeln!(
            s,
            "# stop={:?} best_epoch={} best_val_loss={:.6} weights={}",
            self.stop_reason, self.best_epoch, self.best_val_loss, self.weight_checksum
        );
        s
    }
}

/// Stacks samples into `[batch, input_len, channels]` inputs and
/// `[batch, horizon]` targets.
pub fn batch_tensors(samples: &[WindowSample], spec: &NetworkSpec) -> Result<(Tensor, Tensor), TrainError> {
    let per = spec.input_len * spec.input_channels;
    let mut x = Vec::with_capacity(samples.len() * per);
    let mut y = Vec::with_capacity(samples.len() * spec.outputs);
    for s in samples {
        if s.inputs.len() != per || s.targets.len() != spec.outputs {
            return Err(TensorError::ShapeMismatch {
                layer: "batch".into(),
                expected: format!("{per} inputs and {} targets", spec.outputs),
                found: vec![s.inputs.len(), s.targets.len()],
            }
            .into());
        }
        x.extend_from_slice(&s.inputs);
        y.extend_from_slice(&s.targets);
    }
    let b = samples.len();
    Ok((
        Tensor::new(vec![b, spec.input_len, spec.input_channels], x)?,
        Tensor::new(vec![b, spec.outputs], y)?,
    ))
}

/// Fits a fresh network on `data.train`, monitoring `data.validation`.
///
/// Random streams are keyed by `cfg.seed` and `stream`: `init/<stream>` for
/// weights, `dropout/<stream>` for masks and `shuffle/<stream>` when
/// shuffling is on. Batches otherwise run in chronological order, and the
/// result is a pure function of `(spec, data, cfg, stream)`.
pub fn train(spec: &NetworkSpec, data: &SplitDataset, cfg: &TrainConfig, stream: &str) -> Result<TrainedModel, TrainError> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(TrainError::EmptyData("training"));
    }
    if data.validation.is_empty() {
        return Err(TrainError::EmptyData("validation"));
    }
    let mut init_rng = RngState::new(cfg.seed, format!("init/{stream}"));
    let mut dropout_rng = RngState::new(cfg.seed, format!("dropout/{stream}"));
    let mut shuffle_rng = RngState::new(cfg.seed, format!("shuffle/{stream}"));

    let mut network = Network::new(spec.clone(), &mut init_rng)?;
    let mut opt = OptimizerState::new(network.params(), cfg.initial_lr, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut early = EarlyStopping::new(cfg.early_stop_patience);
    let mut plateau = PlateauScheduler::new(cfg.plateau_patience, cfg.plateau_factor, cfg.min_lr);

    let (val_x, val_y) = batch_tensors(&data.validation, spec)?;
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let chronological = if cfg.shuffle {
        None
    } else {
        Some(make_batches(&data.train, &order, cfg.batch_size, spec)?)
    };

    let mut history = Vec::new();
    let mut best = network.snapshot();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=cfg.max_epochs {
        let lr = opt.lr();
        let shuffled;
        let batches = match &chronological {
            Some(b) => b,
            None => {
                shuffle_rng.shuffle(&mut order);
                shuffled = make_batches(&data.train, &order, cfg.batch_size, spec)?;
                &shuffled
            }
        };

        let mut loss_sum = 0.0;
        for (x, y) in batches {
            let mut tape = Tape::new();
            let pred = network.forward(&mut tape, x.clone(), Mode::Train, &mut dropout_rng)?;
            let target = tape.input(y.clone());
            let loss = tape.mse(pred, target)?;
            let lv = tape.value(loss).data()[0];
            if !lv.is_finite() {
                return Err(TrainError::Divergence { epoch, loss: lv });
            }
            loss_sum += lv * x.shape()[0] as f64;
            tape.backward(loss, network.params_mut())?;
            opt.step(network.params_mut())?;
        }
        let train_loss = loss_sum / data.train.len() as f64;

        let val_loss = match network.predict(val_x.clone()) {
            Ok(p) => mse_loss(&p, &val_y)?,
            Err(TensorError::NonFinite(_)) => f64::NAN,
            Err(e) => return Err(e.into()),
        };
        if !val_loss.is_finite() {
            return Err(TrainError::Divergence { epoch, loss: val_loss });
        }

        let mut events = Vec::new();
        let signal = early.update(epoch, val_loss);
        match signal {
            StopSignal::Improved => {
                best = network.snapshot();
                events.push("best".to_string());
            }
            StopSignal::Stop => events.push("early-stop".to_string()),
            StopSignal::Continue => {}
        }
        if signal != StopSignal::Stop {
            let next = plateau.update(val_loss, lr);
            if next != lr {
                opt.set_lr(next);
                events.push(format!("lr->{next:.1e}"));
            }
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
            events,
        });
        if signal == StopSignal::Stop {
            stop_reason = StopReason::Patience;
            break;
        }
    }

    network.restore(&best)?;
    let best_epoch = early.best_epoch().expect("at least one finite epoch");
    Ok(TrainedModel {
        weight_checksum: best.checksum(),
        recipe_checksum: recipe_checksum(cfg, spec),
        network,
        history,
        best_epoch,
        best_val_loss: early.best(),
        stop_reason,
    })
}

fn make_batches(
    samples: &[WindowSample],
    order: &[usize],
    batch_size: usize,
    spec: &NetworkSpec,
) -> Result<Vec<(Tensor, Tensor)>, TrainError> {
    order
        .chunks(batch_size)
        .map(|idx| {
            let chunk: Vec<WindowSample> = idx.iter().map(|&i| samples[i].clone()).collect();
            batch_tensors(&chunk, spec)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        TrainConfig::default().validate().unwrap();
        let bad = TrainConfig {
            plateau_factor: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn mse_examples() {
        let p = Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap();
        let t = Tensor::new(vec![1, 2], vec![3.0, 4.0]).unwrap();
        assert_eq!(mse_loss(&p, &t).unwrap(), 12.5);
        assert_eq!(mse_loss(&t, &t).unwrap(), 0.0);
        let wrong = Tensor::new(vec![2, 1], vec![0.0, 0.0]).unwrap();
        assert!(mse_loss(&p, &wrong).is_err());
    }

    #[test]
    fn recipe_checksum_ignores_seed() {
        let spec = NetworkSpec::forecaster(3);
        let a = TrainConfig { seed: 1, ..TrainConfig::default() };
        let b = TrainConfig { seed: 2, ..TrainConfig::default() };
        let c = TrainConfig { initial_lr: 1e-2, ..TrainConfig::default() };
        assert_eq!(recipe_checksum(&a, &spec), recipe_checksum(&b, &spec));
        assert_ne!(recipe_checksum(&a, &spec), recipe_checksum(&c, &spec));
    }
}
