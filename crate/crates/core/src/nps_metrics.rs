//! Net-Promoter Score.
//!
//! Promoters rate 9-10, passives 7-8 and detractors 0-6 on the 0-10
//! recommend question; NPS is percent promoters minus percent detractors.
//! The definition is sometimes described as a "ratio" of promoters to
//! detractors, but the operational arithmetic is a subtraction and that is
//! what is computed here.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cvm_analytics::{cva, AnalyticsError};
use crate::ls_engine::FittedHierarchy;
use crate::rounding::fmt_fixed;
use crate::survey_store::{OutcomeKind, SurveySample};

#[derive(Debug, Error)]
pub enum NpsError {
    #[error("rating {0} outside 0..=10")]
    OutOfRange(i64),
    #[error("no ratings")]
    Empty,
    #[error("no own-supplier customers in the sample")]
    NoOwnCustomers,
    #[error(
        "averaging per-unit NPS values is refused: there is no agreed standard for \
         aggregating NPS across units; aggregate pooled respondents instead"
    )]
    AggregationRefused,
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NpsSegment {
    Promoter,
    Passive,
    Detractor,
}

pub fn classify(rating: i64) -> Result<NpsSegment, NpsError> {
    match rating {
        9..=10 => Ok(NpsSegment::Promoter),
        7..=8 => Ok(NpsSegment::Passive),
        0..=6 => Ok(NpsSegment::Detractor),
        other => Err(NpsError::OutOfRange(other)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpsResult {
    pub n: usize,
    pub pct_promoters: f64,
    pub pct_passives: f64,
    pub pct_detractors: f64,
    /// `pct_promoters - pct_detractors`, full precision.
    pub nps: f64,
    /// Counts for ratings 0..=10.
    pub rating_histogram: [usize; 11],
}

impl NpsResult {
    /// NPS at one decimal place, the reporting precision.
    pub fn nps_display(&self) -> String {
        fmt_fixed(self.nps, 1)
    }
}

impl fmt::Display for NpsResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "NPS = {} (n = {}; promoters {}%, passives {}%, detractors {}%)",
            self.nps_display(),
            self.n,
            fmt_fixed(self.pct_promoters, 1),
            fmt_fixed(self.pct_passives, 1),
            fmt_fixed(self.pct_detractors, 1),
        )
    }
}

pub fn nps<I>(ratings: I) -> Result<NpsResult, NpsError>
where
    I: IntoIterator,
    I::Item: Into<i64>,
{
    let mut hist = [0usize; 11];
    for r in ratings {
        let r: i64 = r.into();
        classify(r)?;
        hist[r as usize] += 1;
    }
    nps_from_histogram(hist)
}

pub fn nps_from_histogram(hist: [usize; 11]) -> Result<NpsResult, NpsError> {
    let n: usize = hist.iter().sum();
    if n == 0 {
        return Err(NpsError::Empty);
    }
    let promoters: usize = hist[9..=10].iter().sum();
    let passives: usize = hist[7..=8].iter().sum();
    let detractors: usize = hist[0..=6].iter().sum();
    let pct = |k: usize| 100.0 * k as f64 / n as f64;
    let (p, d) = (pct(promoters), pct(detractors));
    Ok(NpsResult {
        n,
        pct_promoters: p,
        pct_passives: pct(passives),
        pct_detractors: d,
        nps: p - d,
        rating_histogram: hist,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Pool all respondents, then compute one score.
    Pooled,
    /// Average per-unit scores. Always refused.
    AverageOfUnits,
}

/// Combine several units (branches, regions, ...) into one score.
pub fn aggregate_nps(units: &[Vec<u8>], method: Aggregation) -> Result<NpsResult, NpsError> {
    match method {
        Aggregation::Pooled => nps(units.iter().flatten().copied()),
        Aggregation::AverageOfUnits => Err(NpsError::AggregationRefused),
    }
}

/// NPS of the own customers' recommend outcomes.
pub fn sample_nps(own: &SurveySample) -> Result<NpsResult, NpsError> {
    nps(own
        .respondents()
        .iter()
        .filter_map(|r| r.outcome(OutcomeKind::Recommend)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Availability {
    Absent,
    Present,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrillDown {
    pub nps: Availability,
    pub cva: Availability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpsVsCva {
    pub nps: NpsResult,
    pub cva: i64,
    pub own_n: usize,
    pub competitor_n: usize,
    /// Whether each metric is benchmarked against competitors.
    pub competitive: DrillDown,
    pub drill_down: DrillDown,
    /// Internal nodes with a fitted model, i.e. profile tables available.
    pub profile_levels: usize,
}

/// Side-by-side record of what each metric can tell the analyst.
pub fn nps_vs_cva_report(
    own: &SurveySample,
    hierarchy: &FittedHierarchy,
    competitors: &SurveySample,
) -> Result<NpsVsCva, NpsError> {
    if own.is_empty() || own.competitor_only() {
        return Err(NpsError::NoOwnCustomers);
    }
    let nps = sample_nps(own)?;
    let cva = cva(hierarchy, own, competitors)?;
    let levels = hierarchy.models().len();
    Ok(NpsVsCva {
        nps,
        cva,
        own_n: own.len(),
        competitor_n: competitors.len(),
        competitive: DrillDown {
            nps: Availability::Absent,
            cva: Availability::Present,
        },
        drill_down: DrillDown {
            nps: Availability::Absent,
            cva: if levels > 0 {
                Availability::Present
            } else {
                Availability::Absent
            },
        },
        profile_levels: levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments() {
        assert_eq!(classify(9).unwrap(), NpsSegment::Promoter);
        assert_eq!(classify(10).unwrap(), NpsSegment::Promoter);
        assert_eq!(classify(7).unwrap(), NpsSegment::Passive);
        assert_eq!(classify(8).unwrap(), NpsSegment::Passive);
        assert_eq!(classify(0).unwrap(), classify(6).unwrap());
        assert_eq!(classify(0).unwrap(), NpsSegment::Detractor);
        assert!(classify(11).is_err());
        assert!(classify(-1).is_err());
    }

    #[test]
    fn ten_ratings() {
        let mut r = vec![9u8; 5];
        r.extend([7u8; 3]);
        r.extend([3u8; 2]);
        let res = nps(r).unwrap();
        assert_eq!(res.n, 10);
        assert_eq!(res.pct_promoters, 50.0);
        assert_eq!(res.pct_passives, 30.0);
        assert_eq!(res.pct_detractors, 20.0);
        assert_eq!(res.nps, 30.0);
        assert_eq!(res.rating_histogram[9], 5);
        assert_eq!(
            res.to_string(),
            "NPS = 30.0 (n = 10; promoters 50.0%, passives 30.0%, detractors 20.0%)"
        );
    }

    #[test]
    fn boundaries_and_errors() {
        assert_eq!(nps([10u8; 7]).unwrap().nps, 100.0);
        assert_eq!(nps([0u8, 6, 3]).unwrap().nps, -100.0);
        assert!(matches!(nps(Vec::<u8>::new()), Err(NpsError::Empty)));
        assert!(matches!(nps([5i64, 12]), Err(NpsError::OutOfRange(12))));
    }

    #[test]
    fn averaging_units_is_refused() {
        let units = vec![vec![9u8, 9, 3], vec![10u8, 0]];
        let pooled = aggregate_nps(&units, Aggregation::Pooled).unwrap();
        assert_eq!(pooled.n, 5);
        let err = aggregate_nps(&units, Aggregation::AverageOfUnits).unwrap_err();
        assert!(err.to_string().contains("no agreed standard"));
    }
}
