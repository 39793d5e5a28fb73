//! Validation-driven schedules. Both treat only a strictly lower loss as an
//! improvement and keep their own best value and counter.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopSignal {
    /// New best loss; the caller should snapshot weights.
    Improved,
    Continue,
    /// Patience exhausted; the caller should restore the snapshot.
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
            wait: 0,
        }
    }

    pub fn update(&mut self, epoch: usize, val_loss: f64) -> StopSignal {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = Some(epoch);
            self.wait = 0;
            return StopSignal::Improved;
        }
        self.wait += 1;
        if self.wait >= self.patience {
            StopSignal::Stop
        } else {
            StopSignal::Continue
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn wait(&self) -> usize {
        self.wait
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    patience: usize,
    factor: f64,
    min_lr: f64,
    best: f64,
    wait: usize,
}

impl PlateauScheduler {
    pub fn new(patience: usize, factor: f64, min_lr: f64) -> Self {
        Self {
            patience,
            factor,
            min_lr,
            best: f64::INFINITY,
            wait: 0,
        }
    }

    /// Returns the learning rate for the next epoch. After `patience`
    /// consecutive non-improvements the rate is multiplied by `factor`
    /// (floored at `min_lr`) and the counter resets.
    pub fn update(&mut self, val_loss: f64, lr: f64) -> f64 {
        if val_loss < self.best {
            self.best = val_loss;
            self.wait = 0;
            return lr;
        }
        self.wait += 1;
        if self.wait >= self.patience {
            self.wait = 0;
            return (lr * self.factor).max(self.min_lr);
        }
        lr
    }

    pub fn wait(&self) -> usize {
        self.wait
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decreasing_losses_never_stop() {
        let mut es = EarlyStopping::new(15);
        for (e, l) in (1..=50).zip((1..=50).rev()) {
            assert_eq!(es.update(e, l as f64), StopSignal::Improved);
        }
        assert_eq!(es.best_epoch(), Some(50));
    }

    #[test]
    fn stops_after_fifteen_flat_epochs() {
        let mut es = EarlyStopping::new(15);
        assert_eq!(es.update(1, 5.0), StopSignal::Improved);
        for e in 2..=15 {
            assert_eq!(es.update(e, 6.0), StopSignal::Continue);
        }
        assert_eq!(es.update(16, 6.0), StopSignal::Stop);
        assert_eq!(es.best_epoch(), Some(1));
    }

    #[test]
    fn improvement_resets_counter() {
        let mut es = EarlyStopping::new(15);
        es.update(1, 5.0);
        for e in 2..=15 {
            es.update(e, 6.0);
        }
        assert_eq!(es.update(16, 4.0), StopSignal::Improved);
        assert_eq!(es.wait(), 0);
    }

    #[test]
    fn ties_are_not_improvements() {
        let mut es = EarlyStopping::new(2);
        es.update(1, 1.0);
        assert_eq!(es.update(2, 1.0), StopSignal::Continue);
        assert_eq!(es.update(3, 1.0), StopSignal::Stop);
    }

    #[test]
    fn plateau_reduces_and_floors() {
        let mut p = PlateauScheduler::new(5, 0.1, 1e-9);
        let mut lr = p.update(1.0, 1e-3);
        for _ in 0..4 {
            lr = p.update(1.0, lr);
            assert_eq!(lr, 1e-3);
        }
        lr = p.update(1.0, lr);
        assert!((lr - 1e-4).abs() < 1e-18);
        for _ in 0..200 {
            lr = p.update(2.0, lr);
        }
        assert_eq!(lr, 1e-9);
    }

    #[test]
    fn improving_sequence_keeps_rate() {
        let mut p = PlateauScheduler::new(5, 0.1, 1e-9);
        for i in 0..30 {
            assert_eq!(p.update(100.0 - i as f64, 1e-3), 1e-3);
        }
    }
}
