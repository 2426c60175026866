use cpq::{CurveEstimate, CurveValue, ExtendedReal};
use serde::{Serialize, Serializer};

/// Analytic and estimated value at one bin centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinComparison {
    pub p: f64,
    #[serde(serialize_with = "ser_extended")]
    pub analytic: ExtendedReal,
    #[serde(serialize_with = "ser_curve")]
    pub estimate: CurveValue,
    /// Present when both sides are finite.
    pub abs_err: Option<f64>,
    /// Present when both sides are finite and the analytic value is nonzero.
    pub rel_err: Option<f64>,
}

impl BinComparison {
    /// `None` when the estimate has no data.
    pub fn finiteness_agrees(&self) -> Option<bool> {
        self.estimate
            .as_extended()
            .map(|e| e.is_finite() == self.analytic.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub bins: Vec<BinComparison>,
    pub classification_agree: usize,
    pub classification_disagree: usize,
    pub undefined_bins: usize,
    pub max_rel_err: Option<f64>,
    pub mean_rel_err: Option<f64>,
}

impl ComparisonReport {
    /// Bins where both sides are finite.
    pub fn rows(&self) -> impl Iterator<Item = &BinComparison> {
        self.bins.iter().filter(|b| b.abs_err.is_some())
    }

    /// Fraction of defined bins whose finiteness matches, ignoring bins whose
    /// centre lies within `margin` of `threshold`.
    pub fn agreement_away_from(&self, threshold: f64, margin: f64) -> Option<f64> {
        let (agree, total) = self
            .bins
            .iter()
            .filter(|b| (b.p - threshold).abs() >= margin)
            .filter_map(BinComparison::finiteness_agrees)
            .fold((0usize, 0usize), |(a, t), ok| (a + usize::from(ok), t + 1));
        (total > 0).then(|| agree as f64 / total as f64)
    }
}

/// Compares an estimate with `analytic` sampled at every bin centre.
///
/// With `stable_region_only`, bins where the analytic value is infinite are
/// left out entirely.
pub fn compare_curves(
    estimate: &CurveEstimate,
    analytic: impl Fn(f64) -> ExtendedReal,
    stable_region_only: bool,
) -> ComparisonReport {
    let mut bins = Vec::with_capacity(estimate.values.len());
    for (p, est) in estimate.points() {
        let exact = analytic(p);
        if stable_region_only && !exact.is_finite() {
            continue;
        }
        let (abs_err, rel_err) = match (exact, est) {
            (ExtendedReal::Finite(a), CurveValue::Finite(e)) => {
                let abs = (e - a).abs();
                (Some(abs), (a != 0.0).then(|| abs / a.abs()))
            }
            _ => (None, None),
        };
        bins.push(BinComparison {
            p,
            analytic: exact,
            estimate: est,
            abs_err,
            rel_err,
        });
    }

    let mut agree = 0;
    let mut disagree = 0;
    let mut undefined = 0;
    for b in &bins {
        match b.finiteness_agrees() {
            Some(true) => agree += 1,
            Some(false) => disagree += 1,
            None => undefined += 1,
        }
    }
    let rels: Vec<f64> = bins.iter().filter_map(|b| b.rel_err).collect();
    let max_rel_err = rels.iter().copied().reduce(f64::max);
    let mean_rel_err = (!rels.is_empty()).then(|| rels.iter().sum::<f64>() / rels.len() as f64);

    ComparisonReport {
        bins,
        classification_agree: agree,
        classification_disagree: disagree,
        undefined_bins: undefined,
        max_rel_err,
        mean_rel_err,
    }
}

/// Numbers as JSON numbers, `+inf` as `"inf"`, no data as `null`.
pub(crate) fn ser_curve<S: Serializer>(v: &CurveValue, s: S) -> Result<S::Ok, S::Error> {
    match v {
        CurveValue::Finite(x) => s.serialize_f64(*x),
        CurveValue::Infinite => s.serialize_str("inf"),
        CurveValue::Undefined => s.serialize_none(),
    }
}

pub(crate) fn ser_extended<S: Serializer>(v: &ExtendedReal, s: S) -> Result<S::Ok, S::Error> {
    ser_curve(&CurveValue::from(*v), s)
}
