//! Independent numerical checks for the closed forms and the simulator.
//!
//! Nothing in here shares code with [`crate::analytics`] or the scheduling
//! loop in [`crate::des`]; the reference simulator has its own event queue,
//! customer set and clock handling.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::des::{CustomerRecord, Departure, SimConfig, SimTrace, Snapshot};
use crate::error::{Error, Result};

const MAX_TRUNCATION: usize = 1_000_000;

/// Birth-death chain with birth rate `lambda` and death rate `min(k, c)`,
/// truncated at population `truncation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BirthDeathSpec {
    pub lambda: f64,
    pub servers: u32,
    pub truncation: usize,
}

impl BirthDeathSpec {
    pub fn new(lambda: f64, servers: u32, truncation: usize) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) || servers == 0 {
            return Err(Error::InvalidParams(format!(
                "birth-death chain needs lambda >= 0 and c >= 1, got lambda = {lambda}, c = {servers}"
            )));
        }
        if lambda >= f64::from(servers) {
            return Err(Error::Unstable {
                p: 0.0,
                load: lambda,
                servers,
            });
        }
        if truncation < servers as usize {
            return Err(Error::InvalidParams(format!(
                "truncation {truncation} below server count {servers}"
            )));
        }
        Ok(Self {
            lambda,
            servers,
            truncation,
        })
    }

    /// `K = c + ceil(60 / (1 - lambda / c))`, capped at one million.
    pub fn with_default_truncation(lambda: f64, servers: u32) -> Result<Self> {
        let rho = lambda / f64::from(servers);
        let extra = if rho < 1.0 {
            (60.0 / (1.0 - rho)).ceil().min(MAX_TRUNCATION as f64) as usize
        } else {
            0
        };
        let k = (servers as usize + extra).min(MAX_TRUNCATION);
        Self::new(lambda, servers, k)
    }

    fn death_rate(&self, k: usize) -> f64 {
        k.min(self.servers as usize) as f64
    }
}

/// Stationary law of the truncated chain, from detailed balance
/// `pi[k+1] * min(k+1, c) = pi[k] * lambda`.
pub fn birth_death_stationary(spec: &BirthDeathSpec) -> Result<Vec<f64>> {
    let spec = BirthDeathSpec::new(spec.lambda, spec.servers, spec.truncation)?;
    let mut weights = Vec::with_capacity(spec.truncation + 1);
    weights.push(1.0f64);
    for k in 0..spec.truncation {
        let next = weights[k] * spec.lambda / spec.death_rate(k + 1);
        weights.push(next);
        if next > 1e250 {
            for w in &mut weights {
                *w *= 1e-250;
            }
        }
    }
    let total = neumaier_sum(weights.iter().copied());
    for w in &mut weights {
        *w /= total;
    }
    Ok(weights)
}

fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Central difference `(f(p + h) - f(p - h)) / 2h`.
pub fn finite_difference(f: impl Fn(f64) -> f64, p: f64, h: f64) -> Result<f64> {
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let hi = f(p + h);
    if !hi.is_finite() {
        return Err(Error::NonFinite(p + h));
    }
    let lo = f(p - h);
    if !lo.is_finite() {
        return Err(Error::NonFinite(p - h));
    }
    Ok((hi - lo) / (2.0 * h))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Time(f64);

impl Eq for Time {}

impl PartialOrd for Time {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Time {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Scheduling key: level, then earlier arrival ranks higher.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Rank(Time, Reverse<u64>);

/// Reference simulator with one exponential clock per in-service customer.
///
/// A customer draws a fresh unit-mean clock each time it enters service; a
/// preempted customer's clock is discarded. Completion events carry the
/// service-entry token they were scheduled under and are ignored once stale.
pub fn reference_simulate(config: &SimConfig) -> Result<SimTrace> {
    config.validate()?;
    let servers = config.params.servers as usize;
    let alpha = config.params.alpha;
    let horizon = config.horizon;
    let warmup = config.warmup_time();
    let quantile = &config.priority_quantile;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(config.stream);
    let exp = |rng: &mut ChaCha8Rng, rate: f64| -> f64 {
        let u: f64 = rng.random();
        -(1.0 - u).ln() / rate
    };

    let mut levels: Vec<f64> = Vec::new();
    let mut tokens: Vec<u64> = Vec::new();
    let mut records: Vec<CustomerRecord> = Vec::new();
    let mut snapshots = Vec::new();
    let mut present: BTreeSet<Rank> = BTreeSet::new();
    let mut serving: BTreeSet<Rank> = BTreeSet::new();
    let mut completions: BinaryHeap<Reverse<(Time, u64, u64)>> = BinaryHeap::new();
    let mut event_count = 0u64;

    let mut next_arrival = exp(&mut rng, alpha);

    let start_service = |id: u64,
                         now: f64,
                         rng: &mut ChaCha8Rng,
                         tokens: &mut Vec<u64>,
                         records: &mut Vec<CustomerRecord>,
                         completions: &mut BinaryHeap<Reverse<(Time, u64, u64)>>| {
        tokens[id as usize] += 1;
        records[id as usize].last_service_entry = Some(now);
        let done = now + exp(rng, 1.0);
        completions.push(Reverse((Time(done), id, tokens[id as usize])));
    };

    loop {
        while let Some(Reverse((_, id, token))) = completions.peek() {
            let rank = Rank(Time(levels[*id as usize]), Reverse(*id));
            if *token == tokens[*id as usize] && serving.contains(&rank) {
                break;
            }
            completions.pop();
        }
        let next_completion = completions.peek().map(|Reverse((t, _, _))| t.0);
        let arrival_first = next_completion.is_none_or(|d| next_arrival <= d);
        let now = if arrival_first {
            next_arrival
        } else {
            next_completion.unwrap()
        };
        if now > horizon {
            break;
        }
        event_count += 1;

        if arrival_first {
            if config.record_snapshots && now >= warmup {
                snapshots.push(Snapshot {
                    time: now,
                    priorities: present.iter().map(|r| quantile.apply(r.0 .0)).collect(),
                });
            }
            let id = records.len() as u64;
            let level: f64 = rng.random();
            levels.push(level);
            tokens.push(0);
            records.push(CustomerRecord {
                customer_id: id,
                priority: quantile.apply(level),
                arrival_time: now,
                last_service_entry: None,
                departure: Departure::Censored,
            });
            let rank = Rank(Time(level), Reverse(id));
            present.insert(rank);
            if serving.len() < servers {
                serving.insert(rank);
                start_service(id, now, &mut rng, &mut tokens, &mut records, &mut completions);
            } else {
                let lowest = *serving.first().expect("all servers busy");
                if rank > lowest {
                    serving.remove(&lowest);
                    serving.insert(rank);
                    start_service(id, now, &mut rng, &mut tokens, &mut records, &mut completions);
                }
            }
            next_arrival = now + exp(&mut rng, alpha);
        } else {
            let Reverse((_, id, _)) = completions.pop().expect("peeked completion");
            let rank = Rank(Time(levels[id as usize]), Reverse(id));
            serving.remove(&rank);
            present.remove(&rank);
            records[id as usize].departure = Departure::At(now);
            // highest waiting customer, if any
            if let Some(next) = present.iter().rev().find(|r| !serving.contains(r)).copied() {
                serving.insert(next);
                let next_id = next.1 .0;
                start_service(next_id, now, &mut rng, &mut tokens, &mut records, &mut completions);
            }
        }
    }

    Ok(SimTrace {
        final_population: present.len(),
        records,
        snapshots,
        event_count,
        horizon,
        warmup_time: warmup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::SystemParams;

    #[test]
    fn geometric_for_single_server() {
        let pi = birth_death_stationary(&BirthDeathSpec::new(0.5, 1, 200).unwrap()).unwrap();
        assert_eq!(pi.len(), 201);
        for (k, pk) in pi.iter().enumerate() {
            let expected = 0.5 * 0.5f64.powi(k as i32);
            assert!((pk - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_system_for_vanishing_load() {
        for c in [1, 2, 7] {
            let pi = birth_death_stationary(&BirthDeathSpec::new(1e-14, c, 50).unwrap()).unwrap();
            assert!((pi[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_server_idle_probability() {
        let pi = birth_death_stationary(&BirthDeathSpec::new(1.5, 2, 200).unwrap()).unwrap();
        assert!((pi[0] - 1.0 / 7.0).abs() < 1e-12);
        let total: f64 = pi.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn detailed_balance_and_truncation_insensitivity() {
        for (lambda, c) in [(0.3, 1), (1.5, 2), (2.7, 3), (4.5, 5)] {
            let spec = BirthDeathSpec::with_default_truncation(lambda, c).unwrap();
            let pi = birth_death_stationary(&spec).unwrap();
            let residual = (0..spec.truncation)
                .map(|k| (pi[k + 1] * spec.death_rate(k + 1) - pi[k] * lambda).abs())
                .fold(0.0, f64::max);
            assert!(residual < 1e-13, "residual {residual}");

            let doubled = BirthDeathSpec::new(lambda, c, 2 * spec.truncation).unwrap();
            let pi2 = birth_death_stationary(&doubled).unwrap();
            for k in 0..=spec.truncation {
                assert!((pi[k] - pi2[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_unstable_and_short_chains() {
        assert!(matches!(
            BirthDeathSpec::new(2.0, 2, 100),
            Err(Error::Unstable { .. })
        ));
        assert!(BirthDeathSpec::new(1.0, 4, 3).is_err());
        assert!(BirthDeathSpec::with_default_truncation(3.0, 2).is_err());
    }

    #[test]
    fn default_truncation_rule() {
        let spec = BirthDeathSpec::with_default_truncation(1.5, 2).unwrap();
        assert_eq!(spec.truncation, 2 + 240);
        let spec = BirthDeathSpec::with_default_truncation(0.5, 1).unwrap();
        assert_eq!(spec.truncation, 1 + 120);
    }

    #[test]
    fn finite_difference_basics() {
        assert_eq!(finite_difference(|_| 3.0, 0.4, 1e-3).unwrap(), 0.0);
        assert!((finite_difference(|x| x, 0.4, 1e-3).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            finite_difference(|x| if x > 0.5 { f64::INFINITY } else { x }, 0.5, 1e-3),
            Err(Error::NonFinite(_))
        ));
        assert!(finite_difference(|x| x, 0.4, 0.0).is_err());
    }

    #[test]
    fn reference_simulator_invariants() {
        let params = SystemParams::new(2.5, 2).unwrap();
        let cfg = SimConfig::new(params, 500.0, 4).unwrap();
        let trace = reference_simulate(&cfg).unwrap();
        assert_eq!(trace, reference_simulate(&cfg).unwrap());
        let censored = trace.records.iter().filter(|r| r.is_censored()).count();
        assert_eq!(censored, trace.final_population);
        assert_eq!(trace.snapshots.len(), trace.records.len());
        for r in &trace.records {
            if let (Some(entry), Some(d)) = (r.last_service_entry, r.departure_time()) {
                assert!(r.arrival_time <= entry && entry <= d);
            } else {
                assert!(r.is_censored());
            }
        }
    }

    #[test]
    fn reference_single_server_lone_customer() {
        let params = SystemParams::new(1e-2, 1).unwrap();
        let trace = reference_simulate(&SimConfig::new(params, 2000.0, 2).unwrap()).unwrap();
        let first = &trace.records[0];
        assert_eq!(first.last_service_entry, Some(first.arrival_time));
        let departure = first.departure_time().unwrap();
        assert!(trace.records.get(1).is_none_or(|r| r.arrival_time > departure));
    }
}
