//! Event-driven simulator of the priority-level point measure `x_t`.
//!
//! The state is the multiset of priority levels in system, kept in a
//! [`PriorityRegistry`]. The top `min(N, c)` entries are in service.
//!
//! Departures use one aggregate exponential clock of rate `min(N, c)`; when
//! it fires the departing customer is drawn uniformly from the in-service
//! set. With unit-rate exponential servers this has the same law as
//! per-customer clocks that are resampled on every service entry
//! (memorylessness), and it needs no clock bookkeeping on preemption.
//!
//! Random draws come from a ChaCha8 stream selected by `(seed, stream)` and
//! are consumed in a fixed order, so that runs with common random numbers
//! line up event for event:
//!
//! * arrival: priority level, then the next inter-arrival gap, then a fresh
//!   departure gap if the number of busy servers changed;
//! * departure: the in-service index of the departing customer, then the
//!   next departure gap if anyone remains.
//!
//! Scheduling always uses the uniform level. The configured
//! [`PriorityQuantile`] is applied only to the logged priorities, so any
//! strictly increasing transform leaves every event time unchanged.

mod registry;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analytics::{ExtendedReal, PriorityQuantile, SystemParams};
use crate::error::{Error, Result};

pub use registry::{Entry, Iter, PriorityRegistry};

/// Random stream for replication `stream` of base seed `seed`.
///
/// Replication `r` of an experiment uses stream `r`, so it can be rerun in
/// isolation.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Exponential variate by inversion, `U` in `[0, 1)`.
#[inline]
pub(crate) fn exp_gap<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(-u).ln_1p() / rate
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub params: SystemParams,
    pub horizon: f64,
    pub seed: u64,
    /// Sub-stream of `seed`, one per replication.
    pub stream: u64,
    pub priority_quantile: PriorityQuantile,
    /// Fraction of the horizon excluded from snapshots and observers.
    pub warmup_fraction: f64,
    /// Keep the full list of priorities seen by every arrival. Turn off for
    /// long overloaded runs and stream through an [`Observer`] instead.
    pub record_snapshots: bool,
}

impl SimConfig {
    pub fn new(params: SystemParams, horizon: f64, seed: u64) -> Result<Self> {
        let config = Self {
            params,
            horizon,
            seed,
            stream: 0,
            priority_quantile: PriorityQuantile::Identity,
            warmup_fraction: 0.0,
            record_snapshots: true,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "horizon must be finite and nonnegative, got {}",
                self.horizon
            )));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::InvalidParams(format!(
                "warmup fraction must lie in [0, 1), got {}",
                self.warmup_fraction
            )));
        }
        Ok(())
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn with_quantile(mut self, quantile: PriorityQuantile) -> Self {
        self.priority_quantile = quantile;
        self
    }

    pub fn with_warmup(mut self, fraction: f64) -> Result<Self> {
        self.warmup_fraction = fraction;
        self.validate()?;
        Ok(self)
    }

    pub fn without_snapshots(mut self) -> Self {
        self.record_snapshots = false;
        self
    }

    pub fn warmup_time(&self) -> f64 {
        self.warmup_fraction * self.horizon
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Departure {
    At(f64),
    /// Still in system at the horizon.
    Censored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CustomerRecord {
    pub customer_id: u64,
    /// Logged priority, after the quantile transform.
    pub priority: f64,
    pub arrival_time: f64,
    /// Start of the most recent service entry. A preemption does not clear it.
    pub last_service_entry: Option<f64>,
    pub departure: Departure,
}

impl CustomerRecord {
    pub fn is_censored(&self) -> bool {
        self.departure == Departure::Censored
    }

    pub fn departure_time(&self) -> Option<f64> {
        match self.departure {
            Departure::At(t) => Some(t),
            Departure::Censored => None,
        }
    }

    /// Arrival to departure; infinite when censored.
    pub fn sojourn(&self) -> ExtendedReal {
        match self.departure {
            Departure::At(t) => ExtendedReal::Finite(t - self.arrival_time),
            Departure::Censored => ExtendedReal::Infinite,
        }
    }

    /// Arrival to the start of the final service entry; infinite when censored.
    pub fn waiting(&self) -> ExtendedReal {
        match (self.departure, self.last_service_entry) {
            (Departure::At(_), Some(entry)) => ExtendedReal::Finite(entry - self.arrival_time),
            _ => ExtendedReal::Infinite,
        }
    }

    /// Time spent in system within `[0, horizon]`.
    pub fn time_in_system(&self, horizon: f64) -> f64 {
        self.departure_time().unwrap_or(horizon).min(horizon) - self.arrival_time
    }
}

/// State seen by one arrival, just before it joins.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    /// Sorted ascending.
    pub priorities: Vec<f64>,
}

pub type SnapshotSeries = Vec<Snapshot>;

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub records: Vec<CustomerRecord>,
    pub snapshots: SnapshotSeries,
    pub event_count: u64,
    pub final_population: usize,
    pub horizon: f64,
    pub warmup_time: f64,
}

impl SimTrace {
    /// Records of customers that arrived after the warm-up period.
    pub fn measured_records(&self) -> impl Iterator<Item = &CustomerRecord> {
        let start = self.warmup_time;
        self.records.iter().filter(move |r| r.arrival_time >= start)
    }

    /// Time-average number of customers in system over `[0, horizon]`,
    /// computed exactly from the records.
    pub fn time_average_population(&self) -> f64 {
        if self.horizon == 0.0 {
            return 0.0;
        }
        self.records
            .iter()
            .map(|r| r.time_in_system(self.horizon))
            .sum::<f64>()
            / self.horizon
    }
}

/// Hooks into a running simulation. Calls before the warm-up time are skipped.
pub trait Observer {
    /// Called at each arrival before the arriving customer is inserted.
    fn before_arrival(&mut self, _time: f64, _registry: &PriorityRegistry) {}

    /// Called for every maximal interval `[from, to)` over which the state
    /// is constant, including the final one up to the horizon.
    fn holding(&mut self, _from: f64, _to: f64, _registry: &PriorityRegistry) {}
}

impl Observer for () {}

impl<T: Observer + ?Sized> Observer for &mut T {
    fn before_arrival(&mut self, time: f64, registry: &PriorityRegistry) {
        (**self).before_arrival(time, registry);
    }

    fn holding(&mut self, from: f64, to: f64, registry: &PriorityRegistry) {
        (**self).holding(from, to, registry);
    }
}

impl<A: Observer, B: Observer> Observer for (A, B) {
    fn before_arrival(&mut self, time: f64, registry: &PriorityRegistry) {
        self.0.before_arrival(time, registry);
        self.1.before_arrival(time, registry);
    }

    fn holding(&mut self, from: f64, to: f64, registry: &PriorityRegistry) {
        self.0.holding(from, to, registry);
        self.1.holding(from, to, registry);
    }
}

pub fn simulate(config: &SimConfig) -> Result<SimTrace> {
    simulate_observed(config, &mut ())
}

/// Runs the simulation, forwarding state to `observer` as it evolves.
pub fn simulate_observed<O: Observer + ?Sized>(
    config: &SimConfig,
    observer: &mut O,
) -> Result<SimTrace> {
    config.validate()?;
    let alpha = config.params.alpha;
    let servers = config.params.servers as usize;
    let horizon = config.horizon;
    let warmup = config.warmup_time();
    let quantile = &config.priority_quantile;

    let mut rng = seeded_rng(config.seed, config.stream);
    let mut registry = PriorityRegistry::new();
    let mut records: Vec<CustomerRecord> = Vec::new();
    let mut snapshots = Vec::new();
    let mut event_count = 0u64;

    let mut now = 0.0;
    let mut next_arrival = exp_gap(&mut rng, alpha);
    let mut next_departure: Option<f64> = None;

    let observe_hold = |from: f64, to: f64, registry: &PriorityRegistry, obs: &mut O| {
        let from = from.max(warmup);
        if to > from {
            obs.holding(from, to, registry);
        }
    };

    loop {
        let (time, is_arrival) = match next_departure {
            Some(d) if d < next_arrival => (d, false),
            _ => (next_arrival, true),
        };
        if time > horizon {
            break;
        }
        observe_hold(now, time, &registry, observer);
        now = time;
        event_count += 1;

        if is_arrival {
            let level: f64 = rng.random();
            if now >= warmup {
                observer.before_arrival(now, &registry);
                if config.record_snapshots {
                    snapshots.push(Snapshot {
                        time: now,
                        priorities: registry.iter().map(|e| quantile.apply(e.level)).collect(),
                    });
                }
            }

            let id = records.len() as u64;
            let entry = Entry { level, id };
            let population = registry.len();
            let enters_service = match registry.lowest_in_service(servers) {
                None => true,
                // preempts the lowest in-service customer
                Some(lowest) => entry.order(&lowest).is_gt(),
            };
            records.push(CustomerRecord {
                customer_id: id,
                priority: quantile.apply(level),
                arrival_time: now,
                last_service_entry: enters_service.then_some(now),
                departure: Departure::Censored,
            });
            registry.insert(entry);

            next_arrival = now + exp_gap(&mut rng, alpha);
            if population < servers {
                let busy = (population + 1) as f64;
                next_departure = Some(now + exp_gap(&mut rng, busy));
            }
        } else {
            let population = registry.len();
            let busy = population.min(servers);
            let pick = rng.random_range(0..busy);
            let leaving = registry
                .nth_highest(pick)
                .expect("departure from a nonempty system");
            registry.remove(&leaving);
            records[leaving.id as usize].departure = Departure::At(now);

            if population > servers {
                let promoted = registry
                    .lowest_in_service(servers)
                    .expect("population still fills every server");
                records[promoted.id as usize].last_service_entry = Some(now);
            }
            let remaining = population - 1;
            next_departure =
                (remaining > 0).then(|| now + exp_gap(&mut rng, remaining.min(servers) as f64));
        }
    }
    observe_hold(now, horizon, &registry, observer);

    Ok(SimTrace {
        final_population: registry.len(),
        records,
        snapshots,
        event_count,
        horizon,
        warmup_time: warmup,
    })
}
