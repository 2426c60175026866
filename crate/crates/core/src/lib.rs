//! Toolkit for the preemptive M/M/c queue whose customers carry priority
//! levels drawn from a continuum.
//!
//! Every customer receives an IID `U([0, 1])` priority at arrival. At every
//! instant the `c` highest-priority customers are in service and an arrival
//! preempts the lowest-priority in-service customer when all servers are
//! busy. Service times are exponential with unit mean.
//!
//! The crate is split into four parts:
//!
//! * [`analytics`]: closed-form equilibrium quantities (tail PMF of the
//!   population above `p`, priority density `m(p)`, sojourn and waiting
//!   times), with an explicit [`ExtendedReal`] codomain for overload.
//! * [`des`]: an event-driven simulator of the measure-valued state, backed
//!   by an order-statistic [`PriorityRegistry`].
//! * [`estimate`]: binned estimators of `m`, `s` and `w` from simulation
//!   output, with piecewise-linear interpolation.
//! * [`oracle`]: independent numerical cross-checks (birth-death solver,
//!   per-customer-clock simulator, central differences).

pub mod analytics;
pub mod des;
mod error;
pub mod estimate;
pub mod oracle;

pub use analytics::{ExtendedReal, PriorityQuantile, StabilityRegime, SystemParams};
pub use des::{
    simulate, simulate_observed, CustomerRecord, Departure, Observer, PriorityRegistry, SimConfig,
    SimTrace, Snapshot, SnapshotSeries,
};
pub use error::{Error, Result};
pub use estimate::{BinGrid, CensoredPolicy, CurveEstimate, CurveValue};
