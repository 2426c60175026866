//! Closed-form equilibrium results.
//!
//! Fix a priority level `p`. Customers above `p` never see customers below
//! it, so the tail count `X̄(p)` (customers with priority in `(p, 1]`) is the
//! population of an ordinary M/M/c queue with arrival rate `(1 - p) * alpha`
//! and unit-rate servers. Everything here follows from that reduction:
//!
//! * `P0(p)` and the tail PMF are the Erlang-C stationary law at load
//!   `(1 - p) * alpha / c`;
//! * `E[X̄(p)]` is the M/M/c mean population;
//! * the mean priority density is `m(p) = -d/dp E[X̄(p)]`;
//! * Little's law on the tail gives the sojourn time `s(p) = m(p) / alpha`
//!   and the waiting time `w(p) = s(p) - 1`.
//!
//! When `(1 - p) * alpha >= c` the tail queue is not positive recurrent.
//! Quantities that are infinite there return [`ExtendedReal::Infinite`];
//! quantities that do not exist there (PMF, `P0`, its derivative) return
//! [`Error::Unstable`].

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Above this server count factorials and powers are handled in log space.
const LOG_SPACE_SERVERS: u32 = 20;

/// Arrival rate and server count. Service rate is one per server.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub alpha: f64,
    pub servers: u32,
}

impl SystemParams {
    pub fn new(alpha: f64, servers: u32) -> Result<Self> {
        let params = Self { alpha, servers };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidParams(format!(
                "alpha must be positive and finite, got {}",
                self.alpha
            )));
        }
        if self.servers == 0 {
            return Err(Error::InvalidParams("server count must be at least 1".into()));
        }
        Ok(())
    }

    /// Arrival rate of customers with priority above `p`.
    #[inline]
    pub fn tail_rate(&self, p: f64) -> f64 {
        (1.0 - p) * self.alpha
    }

    /// Exact comparison, no epsilon: near the boundary the formulas return
    /// large finite values, which is the true behaviour.
    #[inline]
    pub fn is_stable_at(&self, p: f64) -> bool {
        self.tail_rate(p) < f64::from(self.servers)
    }

    fn servers_f64(&self) -> f64 {
        f64::from(self.servers)
    }
}

/// A nonnegative real or `+inf`.
///
/// Kept as a sum type so that `+inf` cannot leak into arithmetic as a float
/// sentinel and turn into NaN downstream.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum ExtendedReal {
    Finite(f64),
    Infinite,
}

impl ExtendedReal {
    pub const ZERO: Self = ExtendedReal::Finite(0.0);

    #[inline]
    pub fn is_finite(&self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    #[inline]
    pub fn finite(&self) -> Option<f64> {
        match *self {
            ExtendedReal::Finite(x) => Some(x),
            ExtendedReal::Infinite => None,
        }
    }

    /// Lossy conversion for plotting and interop; `Infinite` maps to `f64::INFINITY`.
    #[inline]
    pub fn to_f64(&self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }

    /// Applies `f` to a finite value; `Infinite` stays `Infinite`.
    #[inline]
    pub fn map(self, f: impl FnOnce(f64) -> f64) -> Self {
        match self {
            ExtendedReal::Finite(x) => ExtendedReal::Finite(f(x)),
            ExtendedReal::Infinite => ExtendedReal::Infinite,
        }
    }
}

impl From<f64> for ExtendedReal {
    fn from(x: f64) -> Self {
        if x == f64::INFINITY {
            ExtendedReal::Infinite
        } else {
            ExtendedReal::Finite(x)
        }
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedReal::Finite(x) => write!(f, "{x}"),
            ExtendedReal::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `alpha < c`: every priority level is stable.
    Stable,
    /// `alpha >= c`: levels at or below `p*` are unstable.
    CriticalOrUnstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityRegime {
    pub regime: Regime,
    /// `p* = 1 - c / alpha`, present only when `alpha >= c`.
    pub p_star: Option<f64>,
    params: SystemParams,
}

impl StabilityRegime {
    /// A level is stable iff `(1 - p) * alpha < c`.
    pub fn is_stable_at(&self, p: f64) -> bool {
        self.params.is_stable_at(p)
    }
}

pub fn stability_threshold(params: &SystemParams) -> StabilityRegime {
    let c = params.servers_f64();
    if params.alpha < c {
        StabilityRegime {
            regime: Regime::Stable,
            p_star: None,
            params: *params,
        }
    } else {
        StabilityRegime {
            regime: Regime::CriticalOrUnstable,
            p_star: Some(1.0 - c / params.alpha),
            params: *params,
        }
    }
}

/// Quantities of the tail M/M/c queue at level `p`, all scaled by `P0` so
/// that none of them overflows for large `c`.
#[derive(Debug, Clone, Copy)]
struct ErlangParts {
    /// Tail arrival rate `(1 - p) * alpha`.
    lambda: f64,
    /// `1 - lambda / c`, strictly positive.
    slack: f64,
    p0: f64,
    /// `P0 * lambda^c / c!`, i.e. `P(X̄ = c)`.
    at_c: f64,
    /// `P0 * (sum_{j<c-1} lambda^j / j! + lambda^(c-1) / ((c-1)! * slack))`.
    p0_times_s1: f64,
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|i| f64::from(i).ln()).sum()
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn erlang_parts(params: &SystemParams, p: f64) -> Result<ErlangParts> {
    params.validate()?;
    if !params.is_stable_at(p) {
        return Err(Error::Unstable {
            p,
            load: params.tail_rate(p),
            servers: params.servers,
        });
    }
    let c = params.servers;
    let cf = params.servers_f64();
    let lambda = params.tail_rate(p);
    let slack = 1.0 - lambda / cf;

    if c <= LOG_SPACE_SERVERS || lambda == 0.0 {
        // terms[i] = lambda^i / i!, with 0^0 = 1.
        let mut terms = Vec::with_capacity(c as usize + 1);
        let mut t = 1.0;
        terms.push(t);
        for i in 1..=c {
            t *= lambda / f64::from(i);
            terms.push(t);
        }
        let head: f64 = terms[..c as usize].iter().sum();
        let p0 = 1.0 / (head + terms[c as usize] / slack);
        let s1_head: f64 = terms[..c as usize - 1].iter().sum();
        let s1 = s1_head + terms[c as usize - 1] / slack;
        Ok(ErlangParts {
            lambda,
            slack,
            p0,
            at_c: terms[c as usize] * p0,
            p0_times_s1: s1 * p0,
        })
    } else {
        let ln_lambda = lambda.ln();
        let ln_slack = slack.ln();
        let mut ln_terms = Vec::with_capacity(c as usize + 1);
        let mut ln_fact = 0.0;
        ln_terms.push(0.0);
        for i in 1..=c {
            ln_fact += f64::from(i).ln();
            ln_terms.push(f64::from(i) * ln_lambda - ln_fact);
        }
        let cu = c as usize;
        let mut denom = ln_terms[..cu].to_vec();
        denom.push(ln_terms[cu] - ln_slack);
        let ln_p0 = -log_sum_exp(&denom);
        let mut s1 = ln_terms[..cu - 1].to_vec();
        s1.push(ln_terms[cu - 1] - ln_slack);
        let ln_s1 = log_sum_exp(&s1);
        Ok(ErlangParts {
            lambda,
            slack,
            p0: ln_p0.exp(),
            at_c: (ln_terms[cu] + ln_p0).exp(),
            p0_times_s1: (ln_s1 + ln_p0).exp(),
        })
    }
}

impl ErlangParts {
    /// `p0(p) / P0(p)`.
    fn derivative_ratio(&self, params: &SystemParams) -> f64 {
        let cf = params.servers_f64();
        -params.alpha * (self.p0_times_s1 + self.at_c / (cf * self.slack * self.slack))
    }
}

/// `P0(p) = P(X̄(p) = 0)`.
pub fn p0_mass(params: &SystemParams, p: f64) -> Result<f64> {
    Ok(erlang_parts(params, p)?.p0)
}

/// `p0(p) = -dP0/dp`, negative throughout the stable region.
pub fn p0_derivative(params: &SystemParams, p: f64) -> Result<f64> {
    let parts = erlang_parts(params, p)?;
    Ok(parts.p0 * parts.derivative_ratio(params))
}

/// `P(X̄(p) = k)`.
pub fn tail_pmf(params: &SystemParams, p: f64, k: u64) -> Result<f64> {
    let parts = erlang_parts(params, p)?;
    let c = u64::from(params.servers);
    if parts.lambda == 0.0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    if k > c {
        let rho = 1.0 - parts.slack;
        let excess = k - c;
        let tail = match i32::try_from(excess) {
            Ok(e) => rho.powi(e),
            Err(_) => (excess as f64 * rho.ln()).exp(),
        };
        return Ok(parts.at_c * tail);
    }
    if params.servers <= LOG_SPACE_SERVERS {
        let mut value = parts.p0;
        for i in 1..=k {
            value *= parts.lambda / i as f64;
        }
        Ok(value)
    } else {
        let k32 = k as u32;
        Ok((parts.p0.ln() + f64::from(k32) * parts.lambda.ln() - ln_factorial(k32)).exp())
    }
}

/// `E[X̄(p)]`, the mean number of customers with priority above `p`.
pub fn expected_tail_count(params: &SystemParams, p: f64) -> ExtendedReal {
    match erlang_parts(params, p) {
        Ok(parts) => {
            let cf = params.servers_f64();
            let queued = parts.lambda * parts.at_c / (cf * parts.slack * parts.slack);
            ExtendedReal::Finite(parts.lambda + queued)
        }
        Err(_) => ExtendedReal::Infinite,
    }
}

/// Mean priority density `m(p)`: the Lebesgue density of the mean
/// equilibrium measure of customer priorities.
pub fn priority_density(params: &SystemParams, p: f64) -> ExtendedReal {
    let Ok(parts) = erlang_parts(params, p) else {
        return ExtendedReal::Infinite;
    };
    let alpha = params.alpha;
    let cf = params.servers_f64();
    let slack2 = parts.slack * parts.slack;
    let ratio = parts.derivative_ratio(params);
    let bracket = (alpha * (cf + 1.0) * parts.at_c + parts.lambda * parts.at_c * ratio) / slack2
        + 2.0 * parts.lambda * alpha * parts.at_c / (cf * slack2 * parts.slack);
    // The queue-length term grows with load, so its p-derivative is <= 0.
    ExtendedReal::Finite(alpha + bracket.max(0.0) / cf)
}

/// `mu([a, b]) = E[X̄(a)] - E[X̄(b)]`.
pub fn mean_measure(params: &SystemParams, a: f64, b: f64) -> Result<ExtendedReal> {
    if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a > b {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= a <= b <= 1, got a = {a}, b = {b}"
        )));
    }
    if a == b {
        return Ok(ExtendedReal::ZERO);
    }
    Ok(match expected_tail_count(params, a) {
        ExtendedReal::Infinite => ExtendedReal::Infinite,
        ExtendedReal::Finite(upper) => {
            let lower = expected_tail_count(params, b)
                .finite()
                .expect("tail above a stable level is stable");
            ExtendedReal::Finite(upper - lower)
        }
    })
}

/// Expected sojourn time `s(p) = m(p) / alpha`.
pub fn sojourn_time(params: &SystemParams, p: f64) -> ExtendedReal {
    priority_density(params, p).map(|m| m / params.alpha)
}

/// Expected waiting time `w(p) = s(p) - 1`.
pub fn waiting_time(params: &SystemParams, p: f64) -> ExtendedReal {
    sojourn_time(params, p).map(|s| s - 1.0)
}

/// Maps a `U([0, 1])` level through a quantile function.
pub fn quantile_transform<F: Fn(f64) -> f64>(quantile: F, p: f64) -> f64 {
    quantile(p)
}

/// A nondecreasing map from uniform levels to the logged priority scale.
///
/// Scheduling only depends on the order of priorities, so the simulator
/// always schedules on the uniform level and applies the quantile for
/// reporting.
#[derive(Clone, Default)]
pub enum PriorityQuantile {
    #[default]
    Identity,
    /// Quantile of the exponential law, `-ln(1 - p) / rate`.
    Exponential { rate: f64 },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl PriorityQuantile {
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        PriorityQuantile::Custom(Arc::new(f))
    }

    #[inline]
    pub fn apply(&self, p: f64) -> f64 {
        match self {
            PriorityQuantile::Identity => p,
            PriorityQuantile::Exponential { rate } => quantile_transform(|u| -(-u).ln_1p() / rate, p),
            PriorityQuantile::Custom(f) => quantile_transform(f.as_ref(), p),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, PriorityQuantile::Identity)
    }
}

impl fmt::Debug for PriorityQuantile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorityQuantile::Identity => f.write_str("Identity"),
            PriorityQuantile::Exponential { rate } => {
                f.debug_struct("Exponential").field("rate", rate).finish()
            }
            PriorityQuantile::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}
