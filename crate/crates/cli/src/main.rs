use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use cpq::{CensoredPolicy, CurveValue, ExtendedReal};
use cpq_cli::{run_experiment, ComparisonReport, ExperimentConfig, Preset, Result};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PresetArg {
    StablePaper,
    UnstablePaper,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Infinite,
    Exclude,
}

/// Simulate the continuous-priority preemptive M/M/c queue and compare the
/// estimated priority density, sojourn and waiting curves with the closed forms.
///
/// Settings are layered: built-in defaults, then `--config`, then `--preset`,
/// then individual flags.
#[derive(Debug, Parser)]
#[command(name = "cpq", version)]
struct Args {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Arrival rate.
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of servers.
    #[arg(long)]
    servers: Option<u32>,
    /// Simulated time per replication.
    #[arg(long)]
    horizon: Option<f64>,
    /// Bin width; must be 1/N for an integer N.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    /// How customers still present at the horizon enter the s and w estimates.
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    /// Fraction of the horizon discarded before measuring.
    #[arg(long)]
    warmup: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of points at which the closed forms are written.
    #[arg(long)]
    resolution: Option<usize>,
    /// Maximum number of replications run in parallel.
    #[arg(long)]
    workers: Option<usize>,
    /// Skip writing the per-arrival snapshot files.
    #[arg(long)]
    no_snapshots: bool,
}

impl Args {
    fn into_config(self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(preset) = self.preset {
            match preset {
                PresetArg::StablePaper => Preset::StablePaper,
                PresetArg::UnstablePaper => Preset::UnstablePaper,
            }
            .apply(&mut config);
        }
        if let Some(alpha) = self.alpha {
            config.params.alpha = alpha;
        }
        if let Some(servers) = self.servers {
            config.params.servers = servers;
        }
        if let Some(horizon) = self.horizon {
            config.horizon = horizon;
        }
        if let Some(delta) = self.delta {
            config.delta = delta;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(n) = self.replications {
            config.replications = n;
        }
        if let Some(policy) = self.policy {
            config.censored_policy = match policy {
                PolicyArg::Infinite => CensoredPolicy::Infinite,
                PolicyArg::Exclude => CensoredPolicy::Exclude,
            };
        }
        if let Some(warmup) = self.warmup {
            config.warmup_fraction = warmup;
        }
        if let Some(out) = self.out {
            config.output_dir = out;
        }
        if let Some(resolution) = self.resolution {
            config.curve_resolution = resolution;
        }
        if self.workers.is_some() {
            config.workers = self.workers;
        }
        if self.no_snapshots {
            config.write_snapshots = false;
        }
        Ok(config)
    }
}

fn cell(v: CurveValue) -> String {
    match v {
        CurveValue::Finite(x) => format!("{x:.4}"),
        CurveValue::Infinite => "inf".into(),
        CurveValue::Undefined => "-".into(),
    }
}

fn exact_cell(v: ExtendedReal) -> String {
    cell(v.into())
}

fn print_table(m: &ComparisonReport, s: &ComparisonReport, w: &ComparisonReport) {
    println!(
        "{:>7} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "p", "m", "m_hat", "s", "s_hat", "w", "w_hat"
    );
    for ((bm, bs), bw) in m.bins.iter().zip(&s.bins).zip(&w.bins) {
        println!(
            "{:>7.4} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
            bm.p,
            exact_cell(bm.analytic),
            cell(bm.estimate),
            exact_cell(bs.analytic),
            cell(bs.estimate),
            exact_cell(bw.analytic),
            cell(bw.estimate),
        );
    }
    for (name, r) in [("m", m), ("s", s), ("w", w)] {
        let fmt = |x: Option<f64>| x.map_or("-".to_owned(), |v| format!("{v:.4}"));
        println!(
            "{name}: mean rel err {}, max rel err {}, finiteness agrees in {}/{} bins",
            fmt(r.mean_rel_err),
            fmt(r.max_rel_err),
            r.classification_agree,
            r.classification_agree + r.classification_disagree,
        );
    }
}

fn run(args: Args) -> Result<()> {
    let config = args.into_config()?;
    let summary = run_experiment(&config)?;
    match summary.p_star {
        Some(p) => println!("stability threshold p* = {p:.4}"),
        None => println!("stable at every priority level"),
    }
    print_table(&summary.pooled.m, &summary.pooled.s, &summary.pooled.w);
    println!("artifacts written to {}", config.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
