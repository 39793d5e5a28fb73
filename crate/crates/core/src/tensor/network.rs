//! The convolutional forecaster: three same-padded convolutions with ReLU,
//! flatten, a ReLU hidden layer, dropout and a linear output layer.

use super::tape::{Activation, ParamId, ParamStore, Tape};
use super::{NodeId, Result, RngState, Tensor, TensorError, WeightSnapshot};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Time steps per input window.
    pub input_len: usize,
    /// Feature channels per time step.
    pub input_channels: usize,
    pub conv_filters: Vec<usize>,
    /// Odd kernel widths keep the padding symmetric.
    pub kernel_size: usize,
    pub hidden_units: usize,
    pub dropout: f64,
    /// Forecast horizon.
    pub outputs: usize,
}

impl NetworkSpec {
    /// Conv 32/64/128 (kernel 3) -> flatten -> dense 1024 -> dropout 0.3 -> dense 4.
    pub fn forecaster(input_channels: usize) -> Self {
        Self {
            input_len: 5,
            input_channels,
            conv_filters: vec![32, 64, 128],
            kernel_size: 3,
            hidden_units: 1024,
            dropout: 0.30,
            outputs: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TensorError::Invalid(m.to_string()));
        if self.input_len == 0 || self.input_channels == 0 {
            return bad("network input must be non-empty");
        }
        if self.kernel_size == 0 {
            return bad("kernel size must be >= 1");
        }
        if self.conv_filters.iter().any(|&f| f == 0) || self.hidden_units == 0 || self.outputs == 0 {
            return bad("layer widths must be >= 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn flatten_width(&self) -> usize {
        self.input_len * self.conv_filters.last().copied().unwrap_or(self.input_channels)
    }

    /// One line per layer, used in run provenance and config checksums.
    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        for f in &self.conv_filters {
            parts.push(format!("conv1d({f},k={},relu)", self.kernel_size));
        }
        parts.push("flatten".into());
        parts.push(format!("dense({},relu)", self.hidden_units));
        parts.push(format!("dropout({})", self.dropout));
        parts.push(format!("dense({},linear)", self.outputs));
        format!(
            "input={}x{} {}",
            self.input_len,
            self.input_channels,
            parts.join(" -> ")
        )
    }
}

/// Whether dropout is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Glorot (Xavier) normal initialisation: `N(0, 2 / (fan_in + fan_out))`.
///
/// Fans by shape: `[in, out]` for dense weights, `[kernel, in, out]` for
/// convolution weights (both fans scaled by the kernel width).
pub fn glorot_normal(shape: &[usize], rng: &mut RngState) -> Result<Tensor> {
    let (fan_in, fan_out) = match *shape {
        [i, o] => (i, o),
        [k, i, o] => (k * i, k * o),
        _ => {
            return Err(TensorError::Invalid(format!(
                "glorot_normal needs a [in, out] or [kernel, in, out] shape, got {shape:?}"
            )))
        }
    };
    if fan_in + fan_out == 0 {
        return Err(TensorError::Invalid("glorot_normal with zero fans".into()));
    }
    let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| std * rng.standard_normal()).collect();
    Tensor::new(shape.to_vec(), data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    store: ParamStore,
    convs: Vec<(ParamId, ParamId)>,
    hidden: (ParamId, ParamId),
    output: (ParamId, ParamId),
}

impl Network {
    /// Glorot-normal weights drawn in layer order from `rng`; zero biases.
    pub fn new(spec: NetworkSpec, rng: &mut RngState) -> Result<Self> {
        spec.validate()?;
        let mut store = ParamStore::new();
        let mut convs = Vec::new();
        let mut channels = spec.input_channels;
        for (i, &filters) in spec.conv_filters.iter().enumerate() {
            let w = glorot_normal(&[spec.kernel_size, channels, filters], rng)?;
            let wid = store.add(format!("conv{}.weight", i + 1), w);
            let bid = store.add(format!("conv{}.bias", i + 1), Tensor::zeros(&[filters]));
            convs.push((wid, bid));
            channels = filters;
        }
        let flat = spec.flatten_width();
        let hw = store.add("dense1.weight", glorot_normal(&[flat, spec.hidden_units], rng)?);
        let hb = store.add("dense1.bias", Tensor::zeros(&[spec.hidden_units]));
        let ow = store.add("output.weight", glorot_normal(&[spec.hidden_units, spec.outputs], rng)?);
        let ob = store.add("output.bias", Tensor::zeros(&[spec.outputs]));
        Ok(Self {
            spec,
            store,
            convs,
            hidden: (hw, hb),
            output: (ow, ob),
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Records a forward pass over a `[batch, input_len, input_channels]`
    /// tensor and returns the `[batch, outputs]` prediction node.
    pub fn forward(&self, tape: &mut Tape, input: Tensor, mode: Mode, rng: &mut RngState) -> Result<NodeId> {
        self.forward_with(&self.store, tape, input, mode, rng)
    }

    /// `forward` reading weights from `store`, which must share this
    /// network's parameter layout.
    pub(crate) fn forward_with(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        input: Tensor,
        mode: Mode,
        rng: &mut RngState,
    ) -> Result<NodeId> {
        let s = &self.spec;
        match *input.shape() {
            [_, l, c] if l == s.input_len && c == s.input_channels => {}
            _ => {
                return Err(TensorError::ShapeMismatch {
                    layer: "network input".into(),
                    expected: format!("[batch, {}, {}]", s.input_len, s.input_channels),
                    found: input.shape().to_vec(),
                })
            }
        }
        let mut x = tape.input(input);
        for &(w, b) in &self.convs {
            x = tape.conv1d(store, x, w, b)?;
            x = tape.relu(x);
        }
        x = tape.flatten(x);
        x = tape.dense(store, x, self.hidden.0, self.hidden.1)?;
        x = tape.activation(x, Activation::Relu);
        if mode == Mode::Train && s.dropout > 0.0 {
            x = tape.dropout(x, s.dropout, rng)?;
        }
        x = tape.dense(store, x, self.output.0, self.output.1)?;
        Ok(tape.activation(x, Activation::Identity))
    }

    /// Inference-mode prediction.
    pub fn predict(&self, input: Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        // Inference never draws from the stream.
        let mut unused = RngState::new(0, "infer");
        let out = self.forward(&mut tape, input, Mode::Infer, &mut unused)?;
        let value = tape.value(out).clone();
        value.ensure_finite("network output")?;
        Ok(value)
    }

    pub fn snapshot(&self) -> WeightSnapshot {
        WeightSnapshot::capture(&self.store)
    }

    pub fn restore(&mut self, snapshot: &WeightSnapshot) -> Result<()> {
        snapshot.apply(&mut self.store)
    }

    pub fn checksum(&self) -> String {
        self.snapshot().checksum()
    }
}
