use cpq::analytics::{
    expected_tail_count, mean_measure, p0_mass, priority_density, sojourn_time,
    stability_threshold, tail_pmf, waiting_time,
};
use cpq::oracle::{birth_death_stationary, BirthDeathSpec};
use cpq::{ExtendedReal, PriorityQuantile, SimConfig, SystemParams};
use proptest::prelude::*;

/// A stable point `(params, p)` with load `(1 - p) alpha / c` in `(0.01, 0.95)`.
fn stable_point() -> impl Strategy<Value = (SystemParams, f64)> {
    (1u32..=8, 0.01f64..0.95, 0.0f64..0.9).prop_map(|(c, load, p)| {
        let alpha = load * f64::from(c) / (1.0 - p);
        (SystemParams::new(alpha, c).unwrap(), p)
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

proptest! {
    #[test]
    fn pmf_is_a_distribution((sys, p) in stable_point()) {
        let mut total = 0.0;
        let mut mean = 0.0;
        for k in 0..4000u64 {
            let q = tail_pmf(&sys, p, k).unwrap();
            prop_assert!(q >= 0.0);
            total += q;
            mean += k as f64 * q;
        }
        prop_assert!((total - 1.0).abs() < 1e-9, "mass {total}");
        let e = expected_tail_count(&sys, p).finite().unwrap();
        prop_assert!(rel(mean, e) < 1e-8, "{mean} vs {e}");
        prop_assert_eq!(tail_pmf(&sys, p, 0).unwrap(), p0_mass(&sys, p).unwrap());
    }

    #[test]
    fn pmf_matches_birth_death_chain((sys, p) in stable_point()) {
        let spec = BirthDeathSpec::with_default_truncation(sys.tail_rate(p), sys.servers).unwrap();
        let pi = birth_death_stationary(&spec).unwrap();
        for (k, &expected) in pi.iter().enumerate().take(500) {
            prop_assert!((tail_pmf(&sys, p, k as u64).unwrap() - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn tail_count_decreases_and_density_is_positive(
        (sys, p) in stable_point(),
        step in 1e-3f64..0.1,
    ) {
        let q = (p + step).min(1.0);
        let hi = expected_tail_count(&sys, p).finite().unwrap();
        let lo = expected_tail_count(&sys, q).finite().unwrap();
        prop_assert!(lo <= hi);
        let m = priority_density(&sys, p).finite().unwrap();
        prop_assert!(m >= sys.alpha * (1.0 - 1e-12));
    }

    #[test]
    fn linkage_identities((sys, p) in stable_point()) {
        let m = priority_density(&sys, p).finite().unwrap();
        let s = sojourn_time(&sys, p).finite().unwrap();
        let w = waiting_time(&sys, p).finite().unwrap();
        prop_assert!(rel(s * sys.alpha, m) < 1e-15);
        prop_assert_eq!(w, s - 1.0);
        prop_assert!(w >= 0.0);
    }

    #[test]
    fn measure_is_additive((sys, p) in stable_point(), split in 0.0f64..1.0) {
        let b = p + (1.0 - p) * split;
        let whole = mean_measure(&sys, p, 1.0).unwrap().finite().unwrap();
        let left = mean_measure(&sys, p, b).unwrap().finite().unwrap();
        let right = mean_measure(&sys, b, 1.0).unwrap().finite().unwrap();
        prop_assert!((left + right - whole).abs() <= 1e-12 * whole.max(1.0));
        prop_assert!(rel(whole, expected_tail_count(&sys, p).finite().unwrap()) < 1e-12);
    }

    #[test]
    fn single_server_closed_form(alpha in 0.01f64..5.0, p in 0.0f64..1.0) {
        let sys = SystemParams::new(alpha, 1).unwrap();
        let lambda = (1.0 - p) * alpha;
        let m = priority_density(&sys, p);
        if lambda < 1.0 {
            let exact = alpha / ((1.0 - lambda) * (1.0 - lambda));
            prop_assert!(rel(m.finite().unwrap(), exact) < 1e-12);
        } else {
            prop_assert_eq!(m, ExtendedReal::Infinite);
        }
    }

    #[test]
    fn stability_split(alpha in 0.1f64..20.0, c in 1u32..10, p in 0.0f64..=1.0) {
        let sys = SystemParams::new(alpha, c).unwrap();
        let regime = stability_threshold(&sys);
        let stable = (1.0 - p) * alpha < f64::from(c);
        prop_assert_eq!(regime.is_stable_at(p), stable);
        prop_assert_eq!(sojourn_time(&sys, p).is_finite(), stable);
        prop_assert_eq!(expected_tail_count(&sys, p).is_finite(), stable);
    }

    #[test]
    fn transform_preserves_order(a in 0.0f64..1.0, b in 0.0f64..1.0, rate in 0.1f64..10.0) {
        let f = PriorityQuantile::Exponential { rate };
        if a < b {
            prop_assert!(f.apply(a) <= f.apply(b));
        }
    }
}

#[test]
fn transformed_run_has_same_order_of_departures() {
    let sys = SystemParams::new(1.8, 3).unwrap();
    let base = SimConfig::new(sys, 500.0, 5).unwrap();
    let custom = PriorityQuantile::custom(|u| u * u * u + 2.0);
    let a = cpq::simulate(&base).unwrap();
    let b = cpq::simulate(&base.clone().with_quantile(custom.clone())).unwrap();
    assert_eq!(a.records.len(), b.records.len());
    for (x, y) in a.records.iter().zip(&b.records) {
        assert_eq!(x.departure, y.departure);
        assert_eq!(custom.apply(x.priority), y.priority);
    }
}
