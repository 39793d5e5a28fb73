use super::TrainError;
use crate::tensor::ParamStore;

/// Adam moments for every parameter of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl OptimizerState {
    pub fn new(store: &ParamStore, lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros = || store.iter().map(|p| vec![0.0; p.value().len()]).collect();
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
            lr,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// First and second moments of parameter `index`.
    pub fn moments(&self, index: usize) -> (&[f64], &[f64]) {
        (&self.m[index], &self.v[index])
    }

    /// One Adam update of every parameter from the gradients currently held
    /// in `store`. The step counter is incremented before bias correction.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<(), TrainError> {
        for p in store.iter() {
            if !p.grad().is_finite() {
                return Err(TrainError::NonFiniteGradient(p.name().to_string()));
            }
        }
        self.t += 1;
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let (theta, grad) = store.value_and_grad_mut(id);
            adam_update(
                theta,
                grad,
                &mut self.m[id.index()],
                &mut self.v[id.index()],
                self.t,
                self.lr,
                self.beta1,
                self.beta2,
                self.epsilon,
            );
        }
        Ok(())
    }
}

/// Elementwise Adam with bias correction:
///
/// ```text
/// m <- b1 m + (1 - b1) g
/// v <- b2 v + (1 - b2) g^2
/// theta <- theta - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
/// ```
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    theta: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) {
    debug_assert!(t >= 1);
    let bc1 = 1.0 - beta1.powi(t as i32);
    let bc2 = 1.0 - beta2.powi(t as i32);
    for (((th, &g), mi), vi) in theta.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
        *mi = beta1 * *mi + (1.0 - beta1) * g;
        *vi = beta2 * *vi + (1.0 - beta2) * g * g;
        let m_hat = *mi / bc1;
        let v_hat = *vi / bc2;
        *th -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_by_hand() {
        let (mut th, mut m, mut v) = ([1.0], [0.0], [0.0]);
        adam_update(&mut th, &[2.0], &mut m, &mut v, 1, 1e-3, 0.9, 0.999, 1e-8);
        assert!((m[0] - 0.2).abs() < 1e-15);
        assert!((v[0] - 0.004).abs() < 1e-15);
        let want = 1.0 - 1e-3 * 2.0 / (2.0 + 1e-8);
        assert!((th[0] - want).abs() < 1e-15);
        assert!((th[0] - 0.999).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let (mut th, mut m, mut v) = ([0.7], [0.0], [0.0]);
        adam_update(&mut th, &[0.0], &mut m, &mut v, 1, 1e-3, 0.9, 0.999, 1e-8);
        assert_eq!(th[0], 0.7);
    }

    #[test]
    fn descends_on_square() {
        let (mut th, mut m, mut v) = ([1.0f64], [0.0], [0.0]);
        let mut last = th[0].abs();
        for t in 1..=100 {
            let g = [2.0 * th[0]];
            adam_update(&mut th, &g, &mut m, &mut v, t, 1e-2, 0.9, 0.999, 1e-8);
            assert!(th[0].abs() < last);
            last = th[0].abs();
        }
        assert!(last < 0.5);
    }
}
