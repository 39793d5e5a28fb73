use chrono::{Duration, NaiveDate};
use proptest::prelude::*;

use trendlag::importance::{classify_cell, permute_series};
use trendlag::series::{
    aggregate_weekly, apply_lag, chronological_split, make_windows, scale_global_max, FeatureMatrix, IncidentRecord,
    SeriesKind, WeeklySeries, HORIZON, INPUT_WEEKS, MONTH_DUMMIES, WEEK_DUMMIES,
};
use trendlag::tensor::RngState;
use trendlag::{scaled_mae, ssim_1d, SsimConfig};

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 1, 1).unwrap()
}

fn index_series(values: Vec<f64>) -> WeeklySeries {
    WeeklySeries::new(epoch(), values, SeriesKind::Index).unwrap()
}

fn counts(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0u32..30, len).prop_map(|v| v.into_iter().map(f64::from).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn aggregation_conserves_counts(offsets in prop::collection::vec(0i64..1826, 0..400)) {
        let end = NaiveDate::from_ymd_opt(2019, 12, 31).unwrap();
        let recs: Vec<_> = offsets.iter().map(|&d| IncidentRecord::on(epoch() + Duration::days(d))).collect();
        let s = aggregate_weekly(&recs, epoch(), end).unwrap();
        prop_assert_eq!(s.len(), 261);
        prop_assert_eq!(s.values().iter().sum::<f64>() as usize, recs.len());
        // Brute force: scan every record for every bucket.
        for (i, &v) in s.values().iter().enumerate() {
            let lo = epoch() + Duration::days(7 * i as i64);
            let hi = lo + Duration::days(7);
            let n = recs.iter().filter(|r| r.date >= lo && r.date < hi).count();
            prop_assert_eq!(v as usize, n);
        }
    }

    #[test]
    fn scaling_hits_one_hundred(raw in counts(1..80)) {
        prop_assume!(raw.iter().any(|&v| v > 0.0));
        let s = WeeklySeries::new(epoch(), raw.clone(), SeriesKind::RawCount).unwrap();
        let scaled = scale_global_max(&s).unwrap();
        let max = raw.iter().copied().fold(0.0, f64::max);
        prop_assert!(scaled.values().contains(&100.0));
        for (o, r) in scaled.values().iter().zip(&raw) {
            prop_assert!((0.0..=100.0).contains(o));
            prop_assert!((o - 100.0 * r / max).abs() < 1e-12);
        }
    }

    #[test]
    fn lag_round_trip(values in prop::collection::vec(0.0f64..=100.0, 5..60), lag in -3i32..=3) {
        let s = index_series(values.clone());
        let shifted = apply_lag(&s, lag).unwrap();
        for (i, v) in shifted.values.iter().enumerate() {
            let src = i as i64 - lag as i64;
            if (0..values.len() as i64).contains(&src) {
                prop_assert_eq!(*v, Some(values[src as usize]));
            } else {
                prop_assert_eq!(*v, None);
            }
        }
        let filled: Vec<f64> = shifted.values.iter().map(|v| v.unwrap_or(0.0)).collect();
        let back = apply_lag(&index_series(filled), -lag).unwrap();
        for (i, v) in back.values.iter().enumerate() {
            let mid = i as i64 + lag as i64;
            let src = mid - lag as i64;
            let defined = (0..values.len() as i64).contains(&mid) && (0..values.len() as i64).contains(&src);
            if defined {
                prop_assert_eq!(*v, Some(values[i]));
            }
        }
    }

    #[test]
    fn window_count_and_contiguity(raw in counts(9..120), lag in -1i32..=3) {
        prop_assume!(raw.iter().any(|&v| v > 0.0));
        let target = scale_global_max(&WeeklySeries::new(epoch(), raw.clone(), SeriesKind::RawCount).unwrap()).unwrap();
        let feature = index_series(raw.iter().map(|v| (v * 3.0).min(100.0)).collect());
        let m = FeatureMatrix::with_exogenous(&target, &feature, lag).unwrap();
        prop_assert_eq!(m.rows(), raw.len() - lag.unsigned_abs() as usize);
        prop_assert_eq!(m.channels(), 2 + WEEK_DUMMIES + MONTH_DUMMIES);
        for i in 0..m.rows() {
            let r = m.row(i);
            prop_assert_eq!(r[2..2 + WEEK_DUMMIES].iter().sum::<f64>(), 1.0);
            prop_assert_eq!(r[2 + WEEK_DUMMIES..].iter().sum::<f64>(), 1.0);
        }
        if m.rows() >= INPUT_WEEKS + HORIZON {
            let w = make_windows(&m, INPUT_WEEKS, HORIZON, 1).unwrap();
            prop_assert_eq!(w.len(), m.rows() - INPUT_WEEKS - HORIZON + 1);
            for s in &w {
                prop_assert_eq!(s.input_weeks.end, s.target_weeks.start);
                prop_assert_eq!(s.input_weeks.len(), INPUT_WEEKS);
                prop_assert_eq!(s.target_weeks.len(), HORIZON);
            }
        }
    }

    #[test]
    fn split_segments_are_disjoint(raw in counts(40..200), frac in 0.5f64..0.9) {
        prop_assume!(raw.iter().any(|&v| v > 0.0));
        let target = scale_global_max(&WeeklySeries::new(epoch(), raw, SeriesKind::RawCount).unwrap()).unwrap();
        let m = FeatureMatrix::baseline(&target).unwrap();
        if let Ok(split) = chronological_split(&m, frac) {
            prop_assert!(split.is_disjoint());
            let train_max = split.train.iter().map(|s| s.target_weeks.end).max().unwrap();
            let val_min = split.validation.iter().map(|s| s.input_weeks.start).min().unwrap();
            prop_assert!(train_max <= val_min);
        }
    }

    #[test]
    fn mae_identity_and_symmetry(x in prop::collection::vec(0.0f64..100.0, 1..50), y in prop::collection::vec(0.0f64..100.0, 1..50)) {
        prop_assert_eq!(scaled_mae(&x, &x).unwrap(), 0.0);
        let n = x.len().min(y.len());
        prop_assert_eq!(scaled_mae(&x[..n], &y[..n]).unwrap(), scaled_mae(&y[..n], &x[..n]).unwrap());
    }

    #[test]
    fn ssim_bounds_and_symmetry(pairs in prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), 11..80)) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let cfg = SsimConfig::default();
        let ab = ssim_1d(&a, &b, &cfg).unwrap();
        let ba = ssim_1d(&b, &a, &cfg).unwrap();
        prop_assert!((-1.0..=1.0).contains(&ab));
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((ssim_1d(&a, &a, &cfg).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn permutation_preserves_multiset(values in prop::collection::vec(0.0f64..=100.0, 1..120), seed in any::<u64>()) {
        let s = index_series(values);
        let p = permute_series(&s, &mut RngState::new(seed, "perm"));
        let again = permute_series(&s, &mut RngState::new(seed, "perm"));
        prop_assert_eq!(&p, &again);
        let mut a = p.values().to_vec();
        let mut b = s.values().to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
        prop_assert_eq!(p.epoch(), s.epoch());
    }

    #[test]
    fn classification_matches_definition(o in 0.0f64..20.0, b in 0.0f64..20.0, pi in -2.0f64..2.0) {
        let c = classify_cell(o, b, pi);
        prop_assert_eq!(c.improves, o < b);
        prop_assert_eq!(c.significant, o < b && pi > 0.0);
    }
}

#[test]
fn classification_exhaustive_small_grid() {
    // Every ordering of original vs baseline and sign of pi on a small lattice.
    let vals = [0.0, 0.5, 1.0, 1.5, 2.0];
    let pis = [-1.0, -1e-12, 0.0, 1e-12, 1.0];
    for &o in &vals {
        for &b in &vals {
            for &pi in &pis {
                let c = classify_cell(o, b, pi);
                let improves = o < b;
                assert_eq!(c.improves, improves, "({o}, {b}, {pi})");
                assert_eq!(c.significant, improves && pi > 0.0, "({o}, {b}, {pi})");
                for scale in [0.5, 3.0, 100.0] {
                    assert_eq!(classify_cell(o * scale, b * scale, pi * scale), c);
                }
            }
        }
    }
}
