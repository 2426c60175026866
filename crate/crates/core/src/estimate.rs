//! Binned estimators of `m`, `s` and `w` from simulation output.
//!
//! `[0, 1]` is cut into `N` half-open bins `[i/N, (i+1)/N)` centred at
//! `(i + 1/2)/N`; a priority of exactly `1.0` goes to the top bin. Per-bin
//! averages are joined by linear interpolation between centres and held
//! constant beyond the outermost centres.
//!
//! Accumulators are `(sum, count)` monoids, so replications can be
//! accumulated independently and merged.

use serde::{Deserialize, Serialize};

use crate::analytics::ExtendedReal;
use crate::des::{CustomerRecord, Observer, PriorityRegistry, Snapshot};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinGrid {
    bins: usize,
}

impl BinGrid {
    /// `delta` must be the reciprocal of an integer (up to 1e-9 relative).
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "bin width must lie in (0, 1), got {delta}"
            )));
        }
        let bins = (1.0 / delta).round();
        if ((bins * delta) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "bin width {delta} is not the reciprocal of an integer"
            )));
        }
        Self::with_bins(bins as usize)
    }

    pub fn with_bins(bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least two bins, got {bins}"
            )));
        }
        Ok(Self { bins })
    }

    #[inline]
    pub fn bins(&self) -> usize {
        self.bins
    }

    #[inline]
    pub fn delta(&self) -> f64 {
        1.0 / self.bins as f64
    }

    /// Lower edge of bin `i`; `edge(N) = 1`.
    #[inline]
    pub fn edge(&self, i: usize) -> f64 {
        i as f64 / self.bins as f64
    }

    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.bins as f64
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.bins).map(|i| self.center(i))
    }

    /// Bin holding `p`, or `None` outside `[0, 1]`.
    pub fn bin_of(&self, p: f64) -> Option<usize> {
        if !(0.0..=1.0).contains(&p) {
            return None;
        }
        let n = self.bins;
        let mut i = ((p * n as f64).floor() as usize).min(n - 1);
        // settle rounding at the edges against the same edge values count_in uses
        while i > 0 && p < self.edge(i) {
            i -= 1;
        }
        while i + 1 < n && p >= self.edge(i + 1) {
            i += 1;
        }
        Some(i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CensoredPolicy {
    /// A censored customer has infinite sojourn and waiting time.
    #[default]
    Infinite,
    /// Censored customers are dropped.
    Exclude,
}

/// One point of a curve: a finite value, `+inf`, or no data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurveValue {
    Finite(f64),
    Infinite,
    Undefined,
}

impl CurveValue {
    pub fn finite(&self) -> Option<f64> {
        match *self {
            CurveValue::Finite(x) => Some(x),
            _ => None,
        }
    }

    pub fn is_defined(&self) -> bool {
        !matches!(self, CurveValue::Undefined)
    }

    pub fn as_extended(&self) -> Option<ExtendedReal> {
        match *self {
            CurveValue::Finite(x) => Some(ExtendedReal::Finite(x)),
            CurveValue::Infinite => Some(ExtendedReal::Infinite),
            CurveValue::Undefined => None,
        }
    }
}

impl From<ExtendedReal> for CurveValue {
    fn from(x: ExtendedReal) -> Self {
        match x {
            ExtendedReal::Finite(v) => CurveValue::Finite(v),
            ExtendedReal::Infinite => CurveValue::Infinite,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveEstimate {
    pub grid: BinGrid,
    /// One value per bin centre.
    pub values: Vec<CurveValue>,
}

impl CurveEstimate {
    pub fn new(grid: BinGrid, values: Vec<CurveValue>) -> Result<Self> {
        if values.len() != grid.bins() {
            return Err(Error::InvalidArgument(format!(
                "{} values for {} bins",
                values.len(),
                grid.bins()
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every bin centre.
    pub fn from_fn(grid: BinGrid, f: impl Fn(f64) -> ExtendedReal) -> Self {
        let values = grid.centers().map(|p| f(p).into()).collect();
        Self { grid, values }
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, CurveValue)> + '_ {
        self.grid.centers().zip(self.values.iter().copied())
    }

    /// Piecewise-linear evaluation between bin centres.
    pub fn evaluate(&self, p: f64) -> Result<CurveValue> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "curve evaluated outside [0, 1] at {p}"
            )));
        }
        let n = self.grid.bins();
        let first = self.grid.center(0);
        let last = self.grid.center(n - 1);
        if p <= first {
            return Ok(self.values[0]);
        }
        if p >= last {
            return Ok(self.values[n - 1]);
        }
        let mut i = (((p - first) * n as f64).floor() as usize).min(n - 2);
        while i > 0 && p < self.grid.center(i) {
            i -= 1;
        }
        while i + 2 < n && p >= self.grid.center(i + 1) {
            i += 1;
        }
        let (x0, x1) = (self.grid.center(i), self.grid.center(i + 1));
        if p == x0 {
            return Ok(self.values[i]);
        }
        Ok(match (self.values[i], self.values[i + 1]) {
            (CurveValue::Undefined, _) | (_, CurveValue::Undefined) => CurveValue::Undefined,
            (CurveValue::Infinite, _) | (_, CurveValue::Infinite) => CurveValue::Infinite,
            (CurveValue::Finite(y0), CurveValue::Finite(y1)) => {
                let t = (p - x0) / (x1 - x0);
                CurveValue::Finite(y0 + t * (y1 - y0))
            }
        })
    }
}

/// Accumulates PASTA snapshots into per-bin occupancy totals.
///
/// Works either on recorded [`Snapshot`]s or live as an [`Observer`], which
/// avoids storing snapshots for long overloaded runs.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityAccumulator {
    grid: BinGrid,
    counts: Vec<u64>,
    snapshots: u64,
}

impl DensityAccumulator {
    pub fn new(grid: BinGrid) -> Self {
        Self {
            grid,
            counts: vec![0; grid.bins()],
            snapshots: 0,
        }
    }

    pub fn snapshots(&self) -> u64 {
        self.snapshots
    }

    /// Priorities outside `[0, 1]` are ignored.
    pub fn add_snapshot(&mut self, priorities: &[f64]) {
        self.snapshots += 1;
        for &p in priorities {
            if let Some(i) = self.grid.bin_of(p) {
                self.counts[i] += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &DensityAccumulator) {
        assert_eq!(self.grid, other.grid, "merging accumulators over different grids");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.snapshots += other.snapshots;
    }

    /// Mean occupancy of each bin, before scaling by `N`.
    pub fn bin_means(&self) -> Result<Vec<f64>> {
        if self.snapshots == 0 {
            return Err(Error::Empty("no snapshots to estimate from".into()));
        }
        let n = self.snapshots as f64;
        Ok(self.counts.iter().map(|&c| c as f64 / n).collect())
    }

    pub fn finish(&self) -> Result<CurveEstimate> {
        let scale = self.grid.bins() as f64;
        let values = self
            .bin_means()?
            .into_iter()
            .map(|mean| CurveValue::Finite(scale * mean))
            .collect();
        CurveEstimate::new(self.grid, values)
    }
}

impl Observer for DensityAccumulator {
    fn before_arrival(&mut self, _time: f64, registry: &PriorityRegistry) {
        self.snapshots += 1;
        let n = self.grid.bins();
        let mut below = 0;
        for i in 0..n {
            let upto = if i + 1 == n {
                registry.count_leq(1.0)
            } else {
                registry.count_lt(self.grid.edge(i + 1))
            };
            self.counts[i] += (upto - below) as u64;
            below = upto;
        }
    }
}

/// Per-bin `(sum, count, censored)` of a per-customer duration.
#[derive(Debug, Clone, PartialEq)]
pub struct DurationAccumulator {
    grid: BinGrid,
    sums: Vec<f64>,
    counts: Vec<u64>,
    censored: Vec<u64>,
}

impl DurationAccumulator {
    pub fn new(grid: BinGrid) -> Self {
        let n = grid.bins();
        Self {
            grid,
            sums: vec![0.0; n],
            counts: vec![0; n],
            censored: vec![0; n],
        }
    }

    pub fn add(&mut self, priority: f64, duration: ExtendedReal) {
        let Some(i) = self.grid.bin_of(priority) else {
            return;
        };
        match duration {
            ExtendedReal::Finite(d) => {
                self.sums[i] += d;
                self.counts[i] += 1;
            }
            ExtendedReal::Infinite => self.censored[i] += 1,
        }
    }

    pub fn merge(&mut self, other: &DurationAccumulator) {
        assert_eq!(self.grid, other.grid, "merging accumulators over different grids");
        for i in 0..self.grid.bins() {
            self.sums[i] += other.sums[i];
            self.counts[i] += other.counts[i];
            self.censored[i] += other.censored[i];
        }
    }

    pub fn censored(&self) -> &[u64] {
        &self.censored
    }

    pub fn finish(&self, policy: CensoredPolicy) -> CurveEstimate {
        let values = (0..self.grid.bins())
            .map(|i| {
                if policy == CensoredPolicy::Infinite && self.censored[i] > 0 {
                    CurveValue::Infinite
                } else if self.counts[i] == 0 {
                    CurveValue::Undefined
                } else {
                    CurveValue::Finite(self.sums[i] / self.counts[i] as f64)
                }
            })
            .collect();
        CurveEstimate {
            grid: self.grid,
            values,
        }
    }
}

/// `m̂`: `N` times the mean number of customers per bin seen by arrivals.
pub fn estimate_density(snapshots: &[Snapshot], grid: BinGrid) -> Result<CurveEstimate> {
    let mut acc = DensityAccumulator::new(grid);
    for snap in snapshots {
        acc.add_snapshot(&snap.priorities);
    }
    acc.finish()
}

fn estimate_duration<'a>(
    records: impl IntoIterator<Item = &'a CustomerRecord>,
    grid: BinGrid,
    policy: CensoredPolicy,
    duration: impl Fn(&CustomerRecord) -> ExtendedReal,
) -> CurveEstimate {
    let mut acc = DurationAccumulator::new(grid);
    for r in records {
        acc.add(r.priority, duration(r));
    }
    acc.finish(policy)
}

/// `ŝ`: mean sojourn time per bin.
pub fn estimate_sojourn<'a>(
    records: impl IntoIterator<Item = &'a CustomerRecord>,
    grid: BinGrid,
    policy: CensoredPolicy,
) -> CurveEstimate {
    estimate_duration(records, grid, policy, CustomerRecord::sojourn)
}

/// `ŵ`: mean time from arrival to the last service entry, per bin.
pub fn estimate_waiting<'a>(
    records: impl IntoIterator<Item = &'a CustomerRecord>,
    grid: BinGrid,
    policy: CensoredPolicy,
) -> CurveEstimate {
    estimate_duration(records, grid, policy, CustomerRecord::waiting)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::des::Departure;
    use proptest::prelude::*;

    fn grid(delta: f64) -> BinGrid {
        BinGrid::new(delta).unwrap()
    }

    fn record(priority: f64, arrival: f64, entry: Option<f64>, departure: Option<f64>) -> CustomerRecord {
        CustomerRecord {
            customer_id: 0,
            priority,
            arrival_time: arrival,
            last_service_entry: entry,
            departure: departure.map_or(Departure::Censored, Departure::At),
        }
    }

    fn snap(priorities: &[f64]) -> Snapshot {
        Snapshot {
            time: 0.0,
            priorities: priorities.to_vec(),
        }
    }

    #[test]
    fn grid_validation() {
        assert_eq!(grid(0.05).bins(), 20);
        assert_eq!(grid(0.5).bins(), 2);
        assert_eq!(grid(1.0 / 3.0).bins(), 3);
        assert!(BinGrid::new(0.3).is_err());
        assert!(BinGrid::new(0.0).is_err());
        assert!(BinGrid::new(1.0).is_err());
        assert!(BinGrid::new(-0.5).is_err());
        let g = grid(0.05);
        assert!((g.center(0) - 0.025).abs() < 1e-15);
        assert!((g.center(19) - 0.975).abs() < 1e-15);
    }

    #[test]
    fn bin_partition() {
        let g = grid(0.05);
        assert_eq!(g.bin_of(0.0), Some(0));
        assert_eq!(g.bin_of(0.05), Some(1));
        assert_eq!(g.bin_of(0.1), Some(2));
        assert_eq!(g.bin_of(0.7), Some(14));
        assert_eq!(g.bin_of(0.999_999), Some(19));
        assert_eq!(g.bin_of(1.0), Some(19));
        assert_eq!(g.bin_of(1.5), None);
        assert_eq!(g.bin_of(-0.1), None);
        for i in 0..20 {
            assert_eq!(g.bin_of(g.edge(i)), Some(i));
        }
    }

    #[test]
    fn density_examples() {
        let g = grid(0.5);
        let empty = estimate_density(&[snap(&[]), snap(&[])], g).unwrap();
        assert_eq!(empty.values, vec![CurveValue::Finite(0.0); 2]);

        let est = estimate_density(&[snap(&[0.1]), snap(&[0.1, 0.3])], g).unwrap();
        assert_eq!(est.values, vec![CurveValue::Finite(3.0), CurveValue::Finite(0.0)]);

        assert!(matches!(estimate_density(&[], g), Err(Error::Empty(_))));
    }

    #[test]
    fn observer_matches_recorded_snapshots() {
        let levels = [0.0, 0.049, 0.05, 0.5, 0.73, 0.9999];
        let registry = PriorityRegistry::from_entries(
            levels
                .iter()
                .enumerate()
                .map(|(i, &level)| crate::des::Entry { level, id: i as u64 }),
        );
        let g = grid(0.05);
        let mut live = DensityAccumulator::new(g);
        live.before_arrival(0.0, &registry);
        let mut offline = DensityAccumulator::new(g);
        offline.add_snapshot(&levels);
        assert_eq!(live, offline);
    }

    #[test]
    fn sojourn_examples() {
        let g = grid(0.5);
        let est = estimate_sojourn(&[record(0.7, 1.0, Some(1.0), Some(3.5))], g, CensoredPolicy::Infinite);
        assert_eq!(est.values, vec![CurveValue::Undefined, CurveValue::Finite(2.5)]);

        let records = [
            record(0.2, 0.0, Some(0.0), Some(2.0)),
            record(0.3, 1.0, None, None),
        ];
        let inf = estimate_sojourn(&records, g, CensoredPolicy::Infinite);
        assert_eq!(inf.values[0], CurveValue::Infinite);
        let excl = estimate_sojourn(&records, g, CensoredPolicy::Exclude);
        assert_eq!(excl.values[0], CurveValue::Finite(2.0));

        let only_censored = [record(0.2, 1.0, Some(1.0), None)];
        assert_eq!(
            estimate_sojourn(&only_censored, g, CensoredPolicy::Exclude).values[0],
            CurveValue::Undefined
        );
    }

    #[test]
    fn waiting_examples() {
        let g = grid(0.5);
        let never_waited = [record(0.6, 2.0, Some(2.0), Some(3.0))];
        assert_eq!(
            estimate_waiting(&never_waited, g, CensoredPolicy::Infinite).values[1],
            CurveValue::Finite(0.0)
        );
        // served at 0, preempted at 1, resumed at 4, departs at 5
        let preempted = [record(0.6, 0.0, Some(4.0), Some(5.0))];
        assert_eq!(
            estimate_waiting(&preempted, g, CensoredPolicy::Infinite).values[1],
            CurveValue::Finite(4.0)
        );
        let censored = [record(0.1, 0.0, Some(0.0), None)];
        assert_eq!(
            estimate_waiting(&censored, g, CensoredPolicy::Infinite).values[0],
            CurveValue::Infinite
        );
    }

    #[test]
    fn evaluate_examples() {
        let g = grid(0.5);
        let curve = CurveEstimate::new(g, vec![CurveValue::Finite(1.0), CurveValue::Finite(3.0)]).unwrap();
        assert_eq!(curve.evaluate(0.5).unwrap(), CurveValue::Finite(2.0));
        assert_eq!(curve.evaluate(0.25).unwrap(), CurveValue::Finite(1.0));
        assert_eq!(curve.evaluate(0.75).unwrap(), CurveValue::Finite(3.0));
        assert_eq!(curve.evaluate(0.0).unwrap(), CurveValue::Finite(1.0));
        assert_eq!(curve.evaluate(1.0).unwrap(), CurveValue::Finite(3.0));
        assert!(curve.evaluate(1.01).is_err());
        assert!(curve.evaluate(-0.01).is_err());

        let g = grid(0.25);
        let curve = CurveEstimate::new(
            g,
            vec![
                CurveValue::Finite(1.0),
                CurveValue::Infinite,
                CurveValue::Undefined,
                CurveValue::Finite(2.0),
            ],
        )
        .unwrap();
        assert_eq!(curve.evaluate(0.25).unwrap(), CurveValue::Infinite);
        assert_eq!(curve.evaluate(0.5).unwrap(), CurveValue::Undefined);
        assert_eq!(curve.evaluate(0.375).unwrap(), CurveValue::Infinite);
        assert_eq!(curve.evaluate(0.625).unwrap(), CurveValue::Undefined);
        assert_eq!(curve.evaluate(0.7).unwrap(), CurveValue::Undefined);
        assert_eq!(curve.evaluate(0.875).unwrap(), CurveValue::Finite(2.0));
    }

    #[test]
    fn evaluate_hits_centers_exactly() {
        let g = grid(0.05);
        let curve = CurveEstimate::new(g, (0..20).map(|i| CurveValue::Finite(f64::from(i).sqrt())).collect()).unwrap();
        for (i, p) in g.centers().enumerate() {
            assert_eq!(curve.evaluate(p).unwrap(), curve.values[i]);
        }
    }

    #[test]
    fn accumulators_merge_like_concatenation() {
        let g = grid(0.25);
        let a = [record(0.1, 0.0, Some(0.0), Some(1.0)), record(0.6, 0.0, Some(1.0), Some(4.0))];
        let b = [record(0.15, 2.0, Some(2.5), Some(3.0)), record(0.9, 1.0, None, None)];
        let mut left = DurationAccumulator::new(g);
        let mut right = DurationAccumulator::new(g);
        let mut both = DurationAccumulator::new(g);
        for r in &a {
            left.add(r.priority, r.sojourn());
            both.add(r.priority, r.sojourn());
        }
        for r in &b {
            right.add(r.priority, r.sojourn());
            both.add(r.priority, r.sojourn());
        }
        left.merge(&right);
        assert_eq!(left, both);
    }

    fn arb_record() -> impl Strategy<Value = CustomerRecord> {
        (0.0..1.0f64, 0.0..10.0f64, 0.0..5.0f64, 0.0..5.0f64, any::<bool>()).prop_map(
            |(p, arrival, wait, service, censored)| {
                record(
                    p,
                    arrival,
                    Some(arrival + wait),
                    (!censored).then_some(arrival + wait + service),
                )
            },
        )
    }

    proptest! {
        #[test]
        fn mass_consistency(snaps in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 0..12), 1..20)) {
            let g = grid(0.1);
            let series: Vec<Snapshot> = snaps.iter().map(|s| snap(s)).collect();
            let est = estimate_density(&series, g).unwrap();
            let total: f64 = est.values.iter().map(|v| v.finite().unwrap()).sum::<f64>() / g.bins() as f64;
            let mean_pop = snaps.iter().map(|s| s.len()).sum::<usize>() as f64 / snaps.len() as f64;
            prop_assert!((total - mean_pop).abs() < 1e-9);
        }

        #[test]
        fn exclude_never_exceeds_infinite(records in prop::collection::vec(arb_record(), 0..40)) {
            let g = grid(0.2);
            let pairs = [
                (estimate_sojourn(&records, g, CensoredPolicy::Exclude), estimate_sojourn(&records, g, CensoredPolicy::Infinite)),
                (estimate_waiting(&records, g, CensoredPolicy::Exclude), estimate_waiting(&records, g, CensoredPolicy::Infinite)),
            ];
            for (exc, inf) in pairs {
                for (a, b) in exc.values.iter().zip(&inf.values) {
                    if let (Some(a), Some(b)) = (a.as_extended(), b.as_extended()) {
                        prop_assert!(a <= b);
                    }
                }
            }
        }
    }
}
