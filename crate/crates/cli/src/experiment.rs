//! Replicated simulation study with on-disk artifacts.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! rep-000/trace.csv        per-customer log
//! rep-000/snapshots.csv    state seen by each arrival (optional)
//! rep-000/{m,s,w}_hat.csv  per-replication estimates at bin centres
//! pooled/{m,s,w}_hat.csv   estimates pooled over all replications
//! analytic/{m,s,w}.csv     closed forms at `curve_resolution` points
//! summary.json             config echo, p*, per-bin comparison
//! ```
//!
//! Replication `r` runs on random stream `r` of the base seed, so any single
//! replication can be reproduced on its own.

use std::fs;
use std::path::{Path, PathBuf};

use cpq::analytics::{self, stability_threshold};
use cpq::des::simulate_observed;
use cpq::estimate::{DensityAccumulator, DurationAccumulator};
use cpq::{BinGrid, CurveEstimate, CurveValue, ExtendedReal, SimConfig, SystemParams};
use rayon::prelude::*;
use serde::Serialize;

use crate::compare::{compare_curves, ComparisonReport};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::io;

#[derive(Debug, Clone, Serialize)]
pub struct ReplicationStats {
    pub replication: usize,
    pub stream: u64,
    pub customers: usize,
    pub censored: usize,
    pub events: u64,
    pub snapshots: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveSet {
    pub m: ComparisonReport,
    pub s: ComparisonReport,
    pub w: ComparisonReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub config: ExperimentConfig,
    pub p_star: Option<f64>,
    pub replications: Vec<ReplicationStats>,
    pub pooled: CurveSet,
}

struct Replication {
    stats: ReplicationStats,
    density: DensityAccumulator,
    sojourn: DurationAccumulator,
    waiting: DurationAccumulator,
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(CliError::io(path))
}

fn write_estimates(
    dir: &Path,
    density: &CurveEstimate,
    sojourn: &CurveEstimate,
    waiting: &CurveEstimate,
) -> Result<()> {
    io::write_curve(&dir.join("m_hat.csv"), density)?;
    io::write_curve(&dir.join("s_hat.csv"), sojourn)?;
    io::write_curve(&dir.join("w_hat.csv"), waiting)
}

fn run_replication(config: &ExperimentConfig, index: usize) -> Result<Replication> {
    let grid = config.grid()?;
    let dir = config.output_dir.join(format!("rep-{index:03}"));
    create_dir(&dir)?;

    let stream = index as u64;
    let sim = SimConfig::new(config.params, config.horizon, config.seed)?
        .with_stream(stream)
        .with_warmup(config.warmup_fraction)?
        .without_snapshots();

    let mut density = DensityAccumulator::new(grid);
    let trace = if config.write_snapshots {
        let mut writer = io::SnapshotWriter::create(&dir.join("snapshots.csv"))?;
        let trace = simulate_observed(&sim, &mut (&mut density, &mut writer))?;
        writer.finish()?;
        trace
    } else {
        simulate_observed(&sim, &mut density)?
    };
    io::write_trace(&dir.join("trace.csv"), &trace.records)?;

    let mut sojourn = DurationAccumulator::new(grid);
    let mut waiting = DurationAccumulator::new(grid);
    for r in trace.measured_records() {
        sojourn.add(r.priority, r.sojourn());
        waiting.add(r.priority, r.waiting());
    }

    let policy = config.censored_policy;
    let density_curve = density_or_undefined(&density, grid);
    write_estimates(&dir, &density_curve, &sojourn.finish(policy), &waiting.finish(policy))?;

    Ok(Replication {
        stats: ReplicationStats {
            replication: index,
            stream,
            customers: trace.records.len(),
            censored: trace.final_population,
            events: trace.event_count,
            snapshots: density.snapshots(),
        },
        density,
        sojourn,
        waiting,
    })
}

/// A run with no arrivals after warm-up has no density estimate at all.
fn density_or_undefined(acc: &DensityAccumulator, grid: BinGrid) -> CurveEstimate {
    acc.finish().unwrap_or_else(|_| CurveEstimate {
        grid,
        values: vec![CurveValue::Undefined; grid.bins()],
    })
}

fn dense_points(resolution: usize, f: impl Fn(f64) -> ExtendedReal) -> Vec<(f64, ExtendedReal)> {
    let last = (resolution - 1) as f64;
    (0..resolution)
        .map(|i| {
            let p = i as f64 / last;
            (p, f(p))
        })
        .collect()
}

type ClosedForm = fn(&SystemParams, f64) -> ExtendedReal;

fn write_analytic(dir: &Path, params: &SystemParams, resolution: usize) -> Result<()> {
    create_dir(dir)?;
    let curves: [(&str, ClosedForm); 3] = [
        ("m.csv", analytics::priority_density),
        ("s.csv", analytics::sojourn_time),
        ("w.csv", analytics::waiting_time),
    ];
    for (name, f) in curves {
        io::write_dense_curve(&dir.join(name), &dense_points(resolution, |p| f(params, p)))?;
    }
    Ok(())
}

/// Runs every replication, pools the estimates and writes all artifacts.
///
/// The configuration is validated before any simulation starts.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    config.validate()?;
    let grid = config.grid()?;
    create_dir(&config.output_dir)?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(workers) = config.workers {
        pool = pool.num_threads(workers);
    }
    let reps: Vec<Replication> = pool.build()?.install(|| {
        (0..config.replications)
            .into_par_iter()
            .map(|i| run_replication(config, i))
            .collect::<Result<_>>()
    })?;

    let mut density = DensityAccumulator::new(grid);
    let mut sojourn = DurationAccumulator::new(grid);
    let mut waiting = DurationAccumulator::new(grid);
    for rep in &reps {
        density.merge(&rep.density);
        sojourn.merge(&rep.sojourn);
        waiting.merge(&rep.waiting);
    }
    let policy = config.censored_policy;
    let density_curve = density_or_undefined(&density, grid);
    let sojourn_curve = sojourn.finish(policy);
    let waiting_curve = waiting.finish(policy);

    let pooled_dir = config.output_dir.join("pooled");
    create_dir(&pooled_dir)?;
    write_estimates(&pooled_dir, &density_curve, &sojourn_curve, &waiting_curve)?;
    write_analytic(
        &config.output_dir.join("analytic"),
        &config.params,
        config.curve_resolution,
    )?;

    let params = config.params;
    let summary = ExperimentSummary {
        config: config.clone(),
        p_star: stability_threshold(&params).p_star,
        replications: reps.into_iter().map(|r| r.stats).collect(),
        pooled: CurveSet {
            m: compare_curves(&density_curve, |p| analytics::priority_density(&params, p), false),
            s: compare_curves(&sojourn_curve, |p| analytics::sojourn_time(&params, p), false),
            w: compare_curves(&waiting_curve, |p| analytics::waiting_time(&params, p), false),
        },
    };
    io::write_json(&summary_path(&config.output_dir), &summary)?;
    Ok(summary)
}

pub fn summary_path(output_dir: &Path) -> PathBuf {
    output_dir.join("summary.json")
}
