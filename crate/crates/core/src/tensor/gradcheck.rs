//! Central finite-difference checks of the tape's reverse-mode gradients.

use serde::Serialize;

use super::{Mode, Network, NetworkSpec, ParamId, ParamStore, Result, RngState, Tape, Tensor};

/// Step used for the central differences.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    Conv1d,
    Dense,
    Relu,
    Dropout,
    Flatten,
    Mse,
    Network,
}

impl LayerKind {
    pub const ALL: [LayerKind; 7] = [
        LayerKind::Conv1d,
        LayerKind::Dense,
        LayerKind::Relu,
        LayerKind::Dropout,
        LayerKind::Flatten,
        LayerKind::Mse,
        LayerKind::Network,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv1d => "conv1d",
            LayerKind::Dense => "dense",
            LayerKind::Relu => "relu",
            LayerKind::Dropout => "dropout",
            LayerKind::Flatten => "flatten",
            LayerKind::Mse => "mse",
            LayerKind::Network => "network",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheck {
    pub kind: LayerKind,
    /// Coordinates compared.
    pub checked: usize,
    pub max_rel_error: f64,
    /// Where the worst coordinate sits, with both gradients.
    pub worst: String,
}

/// `|a - b| / max(|a|, |b|, floor)`; the floor keeps near-zero gradients
/// from turning round-off into large ratios.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let den = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / den
}

/// Scalar objective over a parameter store and one input tensor.
struct Case {
    store: ParamStore,
    input: Tensor,
    build: Box<dyn Fn(&mut Tape, &ParamStore, Tensor) -> Result<super::NodeId>>,
}

impl Case {
    fn eval(&self, input: &Tensor) -> Result<f64> {
        let mut tape = Tape::new();
        let out = (self.build)(&mut tape, &self.store, input.clone())?;
        Ok(tape.value(out).data()[0])
    }

    fn check(mut self, kind: LayerKind, rng: &mut RngState, per_tensor: usize) -> Result<GradCheck> {
        let mut tape = Tape::new();
        let x = self.input.clone();
        let out = (self.build)(&mut tape, &self.store, x)?;
        let report = tape.backward(out, &mut self.store)?;
        // Every case records its input as the first node.
        let input_grad = report
            .input_grad(super::NodeId(0))
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; self.input.len()]);

        let mut worst = 0.0f64;
        let mut worst_at = String::new();
        let mut checked = 0;
        let ids: Vec<ParamId> = self.store.ids().collect();
        for id in ids {
            let n = self.store.value(id).len();
            for idx in sample_indices(n, per_tensor, rng) {
                let analytic = self.store.grad(id).data()[idx];
                let orig = self.store.value(id).data()[idx];
                self.store.value_mut(id).data_mut()[idx] = orig + FD_STEP;
                let up = self.eval(&self.input)?;
                self.store.value_mut(id).data_mut()[idx] = orig - FD_STEP;
                let down = self.eval(&self.input)?;
                self.store.value_mut(id).data_mut()[idx] = orig;
                let numeric = (up - down) / (2.0 * FD_STEP);
                let e = relative_error(analytic, numeric);
                if e > worst {
                    worst = e;
                    worst_at = format!("{}[{idx}] analytic {analytic:.6e} numeric {numeric:.6e}", self.store.get(id).name());
                }
                checked += 1;
            }
        }
        for idx in sample_indices(self.input.len(), per_tensor, rng) {
            let mut x = self.input.clone();
            let orig = x.data()[idx];
            x.data_mut()[idx] = orig + FD_STEP;
            let up = self.eval(&x)?;
            x.data_mut()[idx] = orig - FD_STEP;
            let down = self.eval(&x)?;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let e = relative_error(input_grad[idx], numeric);
            if e > worst {
                worst = e;
                worst_at = format!("input[{idx}] analytic {:.6e} numeric {numeric:.6e}", input_grad[idx]);
            }
            checked += 1;
        }
        Ok(GradCheck {
            kind,
            checked,
            max_rel_error: worst,
            worst: worst_at,
        })
    }
}

fn sample_indices(n: usize, k: usize, rng: &mut RngState) -> Vec<usize> {
    if n <= k {
        return (0..n).collect();
    }
    (0..k).map(|_| (rng.next_u64() % n as u64) as usize).collect()
}

fn random(shape: &[usize], scale: f64, rng: &mut RngState) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| scale * rng.standard_normal()).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

fn coeffs(n: usize, rng: &mut RngState) -> Vec<f64> {
    (0..n).map(|_| rng.standard_normal()).collect()
}

/// One randomized trial for `kind`. Shapes, values and the scalar probe are
/// all drawn from `rng`.
pub fn check_layer(kind: LayerKind, rng: &mut RngState) -> Result<GradCheck> {
    let b = 1 + (rng.next_u64() % 3) as usize;
    let l = 3 + (rng.next_u64() % 4) as usize;
    let c = 1 + (rng.next_u64() % 4) as usize;
    let mut store = ParamStore::new();
    let case = match kind {
        LayerKind::Conv1d => {
            let k = [1, 3, 5][(rng.next_u64() % 3) as usize];
            let cout = 1 + (rng.next_u64() % 4) as usize;
            let w = store.add("w", random(&[k, c, cout], 0.5, rng));
            let bias = store.add("b", random(&[cout], 0.5, rng));
            let probe = coeffs(b * l * cout, rng);
            Case {
                store,
                input: random(&[b, l, c], 1.0, rng),
                build: Box::new(move |t, s, x| {
                    let x = t.input(x);
                    let y = t.conv1d(s, x, w, bias)?;
                    t.weighted_sum(y, probe.clone())
                }),
            }
        }
        LayerKind::Dense => {
            let (n_in, n_out) = (1 + (rng.next_u64() % 6) as usize, 1 + (rng.next_u64() % 5) as usize);
            let w = store.add("w", random(&[n_in, n_out], 0.5, rng));
            let bias = store.add("b", random(&[n_out], 0.5, rng));
            let probe = coeffs(b * n_out, rng);
            Case {
                store,
                input: random(&[b, n_in], 1.0, rng),
                build: Box::new(move |t, s, x| {
                    let x = t.input(x);
                    let y = t.dense(s, x, w, bias)?;
                    t.weighted_sum(y, probe.clone())
                }),
            }
        }
        LayerKind::Relu => {
            let probe = coeffs(b * l * c, rng);
            Case {
                store,
                input: away_from_zero(random(&[b, l, c], 1.0, rng)),
                build: Box::new(move |t, _, x| {
                    let x = t.input(x);
                    let y = t.relu(x);
                    t.weighted_sum(y, probe.clone())
                }),
            }
        }
        LayerKind::Dropout => {
            let seed = rng.next_u64();
            let p = 0.1 + 0.5 * rng.uniform();
            let probe = coeffs(b * l * c, rng);
            Case {
                store,
                input: random(&[b, l, c], 1.0, rng),
                build: Box::new(move |t, _, x| {
                    // Same mask on every evaluation.
                    let mut r = RngState::new(seed, "gradcheck/dropout");
                    let x = t.input(x);
                    let y = t.dropout(x, p, &mut r)?;
                    t.weighted_sum(y, probe.clone())
                }),
            }
        }
        LayerKind::Flatten => {
            let probe = coeffs(b * l * c, rng);
            Case {
                store,
                input: random(&[b, l, c], 1.0, rng),
                build: Box::new(move |t, _, x| {
                    let x = t.input(x);
                    let y = t.flatten(x);
                    t.weighted_sum(y, probe.clone())
                }),
            }
        }
        LayerKind::Mse => {
            let target = random(&[b, c], 1.0, rng);
            Case {
                store,
                input: random(&[b, c], 1.0, rng),
                build: Box::new(move |t, _, x| {
                    let x = t.input(x);
                    let y = t.input(target.clone());
                    t.mse(x, y)
                }),
            }
        }
        LayerKind::Network => return check_network(rng),
    };
    case.check(kind, rng, 12)
}

fn away_from_zero(mut t: Tensor) -> Tensor {
    for v in t.data_mut() {
        if v.abs() < 1e-3 {
            *v = if *v < 0.0 { -0.1 } else { 0.1 };
        }
    }
    t
}

/// Full forecaster topology (three convolutions, dense, dropout, linear
/// head) at reduced widths, five input steps, MSE against a random target.
pub fn check_network(rng: &mut RngState) -> Result<GradCheck> {
    let spec = NetworkSpec {
        input_len: 5,
        input_channels: 2 + (rng.next_u64() % 3) as usize,
        conv_filters: vec![3, 4, 5],
        kernel_size: 3,
        hidden_units: 8,
        dropout: 0.3,
        outputs: 4,
    };
    let b = 1 + (rng.next_u64() % 3) as usize;
    let net = Network::new(spec.clone(), rng)?;
    let seed = rng.next_u64();
    let input = random(&[b, spec.input_len, spec.input_channels], 1.0, rng);
    let target = random(&[b, spec.outputs], 1.0, rng);
    // Zero biases put dead units exactly on the ReLU kink; move to a
    // generic point.
    let mut store = net.params().clone();
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        if store.get(id).name().ends_with(".bias") {
            for v in store.value_mut(id).data_mut() {
                *v = 0.1 * rng.standard_normal();
            }
        }
    }
    let case = Case {
        store,
        input,
        build: Box::new(move |t, s, x| {
            let mut r = RngState::new(seed, "gradcheck/network");
            let y = net.forward_with(s, t, x, Mode::Train, &mut r)?;
            let target = t.input(target.clone());
            t.mse(y, target)
        }),
    };
    case.check(LayerKind::Network, rng, 8)
}
