//! Long-run statistical checks of the simulator against known M/M/c values.

use cpq::analytics::expected_tail_count;
use cpq::oracle::reference_simulate;
use cpq::{simulate, SimConfig, SimTrace, SystemParams};

fn stable() -> SystemParams {
    SystemParams::new(1.5, 2).unwrap()
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[test]
fn time_average_population_matches_mmc_mean() {
    // M/M/2 with lambda = 1.5: E[N] = 24/7
    let exact = expected_tail_count(&stable(), 0.0).finite().unwrap();
    assert!((exact - 24.0 / 7.0).abs() < 1e-12);

    let config = SimConfig::new(stable(), 2e5, 3).unwrap().without_snapshots();
    let trace = simulate(&config).unwrap();
    let avg = trace.time_average_population();
    assert!((avg - exact).abs() / exact < 0.05, "{avg} vs {exact}");
}

#[test]
fn warm_up_discards_early_customers_only() {
    let config = SimConfig::new(stable(), 1e3, 8)
        .unwrap()
        .with_warmup(0.25)
        .unwrap()
        .without_snapshots();
    let trace = simulate(&config).unwrap();
    assert_eq!(trace.warmup_time, 250.0);
    assert!(trace.measured_records().all(|r| r.arrival_time >= 250.0));
    assert!(trace.records.iter().any(|r| r.arrival_time < 250.0));
}

fn mean_waiting(trace: &SimTrace) -> f64 {
    let w: Vec<f64> = trace.records.iter().filter_map(|r| r.waiting().finite()).collect();
    w.iter().sum::<f64>() / w.len() as f64
}

/// Both simulators measure waiting as arrival to the last service entry, so
/// they must agree on it even though it is not `s - 1` under preemption.
#[test]
fn waiting_times_agree_with_reference_simulator() {
    let reps = 12;
    let run = |f: fn(&SimConfig) -> cpq::Result<SimTrace>, offset: u64| -> Vec<f64> {
        (0..reps)
            .map(|r| {
                let config = SimConfig::new(stable(), 5e3, 17)
                    .unwrap()
                    .with_stream(offset + r)
                    .without_snapshots();
                mean_waiting(&f(&config).unwrap())
            })
            .collect()
    };
    let (fast, fast_sd) = mean_sd(&run(simulate, 0));
    let (slow, slow_sd) = mean_sd(&run(reference_simulate, 100));
    let half = |sd: f64| 3.0 * sd / (reps as f64).sqrt();
    assert!(
        (fast - slow).abs() <= half(fast_sd) + half(slow_sd),
        "{fast} +- {} vs {slow} +- {}",
        half(fast_sd),
        half(slow_sd)
    );
}
