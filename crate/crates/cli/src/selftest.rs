//! Built-in oracle checks for `trendlag selftest`.

use trendlag::importance::{run_grid, ExperimentData, ExperimentPlan, NamedSeries};
use trendlag::synth::{generate_synthetic, SyntheticSpec};
use trendlag::tensor::gradcheck::{check_layer, LayerKind};
use trendlag::tensor::RngState;
use trendlag::train::{adam_update, EarlyStopping, PlateauScheduler, StopSignal};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

pub fn gradient_checks(trials: usize, seed: u64) -> Vec<Check> {
    LayerKind::ALL
        .iter()
        .map(|&kind| {
            let mut rng = RngState::new(seed, format!("selftest/gradcheck/{}", kind.name()));
            let mut worst = 0.0f64;
            let mut at = String::new();
            for _ in 0..trials {
                match check_layer(kind, &mut rng) {
                    Ok(r) if r.max_rel_error >= worst => {
                        worst = r.max_rel_error;
                        at = r.worst;
                    }
                    Ok(_) => {}
                    Err(e) => return Check::new(format!("gradcheck {}", kind.name()), false, e.to_string()),
                }
            }
            Check::new(
                format!("gradcheck {}", kind.name()),
                worst < 1e-4,
                format!("{trials} trials, max relative error {worst:.2e} ({at})"),
            )
        })
        .collect()
}

/// Ten Adam steps on (theta - 3)^2 against an inline scalar script.
pub fn adam_trace() -> Check {
    let (lr, b1, b2, eps) = (1e-3, 0.9f64, 0.999f64, 1e-8);
    let (mut th, mut m, mut v) = ([1.0], [0.0], [0.0]);
    let (mut s_th, mut s_m, mut s_v) = (1.0f64, 0.0f64, 0.0f64);
    let mut worst = 0.0f64;
    for t in 1..=10u64 {
        let grad = [2.0 * (th[0] - 3.0)];
        adam_update(&mut th, &grad, &mut m, &mut v, t, lr, b1, b2, eps);
        let g = 2.0 * (s_th - 3.0);
        s_m = b1 * s_m + (1.0 - b1) * g;
        s_v = b2 * s_v + (1.0 - b2) * g * g;
        s_th -= lr * (s_m / (1.0 - b1.powi(t as i32))) / ((s_v / (1.0 - b2.powi(t as i32))).sqrt() + eps);
        worst = worst.max((th[0] - s_th).abs());
    }
    Check::new("adam trace", worst < 1e-10, format!("10 steps, max deviation {worst:.1e}"))
}

pub fn scheduler_checks() -> Vec<Check> {
    let mut es = EarlyStopping::new(15);
    let mut stop_at = None;
    for (epoch, loss) in [1.0].into_iter().chain(std::iter::repeat_n(1.0, 20)).enumerate() {
        if es.update(epoch + 1, loss) == StopSignal::Stop {
            stop_at = Some(epoch + 1);
            break;
        }
    }
    let es_ok = stop_at == Some(16) && es.best_epoch() == Some(1);

    let mut ps = PlateauScheduler::new(5, 0.1, 1e-9);
    let mut lr = 1e-3;
    let mut cuts = Vec::new();
    for epoch in 1..=40 {
        let next = ps.update(if epoch == 1 { 1.0 } else { 2.0 }, lr);
        if next != lr {
            cuts.push(epoch);
        }
        lr = next;
    }
    let ps_ok = cuts[..3] == [6, 11, 16] && lr == 1e-9;
    vec![
        Check::new("early stopping", es_ok, format!("patience 15 fired at epoch {stop_at:?}")),
        Check::new(
            "plateau schedule",
            ps_ok,
            format!("first cuts at epochs {:?}, final lr {lr:e}", &cuts[..cuts.len().min(3)]),
        ),
    ]
}

/// One synthetic grid: the planted lag should be significant and the
/// noise feature never.
pub fn planted_signal(seed: u64) -> Check {
    let spec = SyntheticSpec {
        seed,
        ..SyntheticSpec::default()
    };
    let data = match generate_synthetic(&spec) {
        Ok(d) => d,
        Err(e) => return Check::new("planted signal", false, e.to_string()),
    };
    let plan = ExperimentPlan {
        seed,
        ..ExperimentPlan::new("synthetic", vec!["planted".into(), "noise".into()])
    };
    let input = ExperimentData {
        target: data.target,
        features: vec![
            NamedSeries {
                name: "planted".into(),
                series: data.planted,
            },
            NamedSeries {
                name: "noise".into(),
                series: data.noise,
            },
        ],
    };
    match run_grid(&plan, &input) {
        Err(e) => Check::new("planted signal", false, e.to_string()),
        Ok(run) => {
            let r = run.report;
            let planted = r.cell("planted", spec.lag).is_some_and(|c| c.significant);
            let noise: Vec<i32> = r.cells.iter().filter(|c| c.feature == "noise" && c.significant).map(|c| c.lag).collect();
            let sig: Vec<String> = r.significant().map(|c| format!("{}@{}", c.feature, c.lag)).collect();
            Check::new(
                "planted signal",
                planted && noise.is_empty(),
                format!("seed {seed}, baseline {:.3}, significant cells [{}]", r.mae_baseline, sig.join(", ")),
            )
        }
    }
}

pub fn run_all(trials: usize, planted: bool, seed: u64) -> Vec<Check> {
    let mut out = gradient_checks(trials, seed);
    out.push(adam_trace());
    out.extend(scheduler_checks());
    if planted {
        out.push(planted_signal(seed));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_checks_pass() {
        assert!(adam_trace().passed);
        for c in scheduler_checks() {
            assert!(c.passed, "{}", c.line());
        }
        for c in gradient_checks(3, 9) {
            assert!(c.passed, "{}", c.line());
        }
    }
}
