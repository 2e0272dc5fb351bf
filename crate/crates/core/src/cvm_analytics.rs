//! Customer value decision artifacts built on a fitted hierarchy: profile
//! tables, CVA, what-if predictions, improvement priorities, loyalty curves,
//! value maps, retention projections and top-box rates.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isotonic::pava_non_decreasing;
use crate::ls_engine::FittedHierarchy;
use crate::rounding::round_half_away;
use crate::survey_store::{node_mean, MeanWithHalfWidth, OutcomeKind, SurveyError, SurveySample};
use crate::value_tree::{path_to_root, NodeId, TreeError};

/// Default loyalty threshold: an outcome of 8, 9 or 10 counts as very willing.
pub const DEFAULT_LOYALTY_THRESHOLD: u8 = 8;
/// Default half-width of the fair-value band, in relative-percent points.
pub const DEFAULT_VALUE_MAP_BAND: f64 = 3.0;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("no fitted model for `{0}`")]
    MissingModel(NodeId),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Stats(#[from] SurveyError),
    #[error("competitor mean must be positive, got {0}")]
    NonPositiveCompetitor(f64),
    #[error("no competitor ratings for `{0}`")]
    NoCompetitorRatings(NodeId),
    #[error("no respondents with both a root rating and a {0} outcome")]
    NoLoyaltyData(OutcomeKind),
    #[error("threshold {0} outside 1..=10")]
    InvalidThreshold(u8),
    #[error("target proportion {0} outside (0, 1]")]
    InvalidTarget(f64),
    #[error("value-map inputs must be positive: {0}")]
    NonPositiveInput(String),
    #[error("band must be non-negative, got {0}")]
    NegativeBand(f64),
    #[error("retention rate {0} outside [0, 1]")]
    InvalidRate(f64),
    #[error("no ratings supplied")]
    EmptyRatings,
    #[error("top box must be a non-empty suffix of Poor < Fair < Good < Excellent")]
    BoxNotSuffix,
}

// ---------------------------------------------------------------------------
// Relative ratings and profile tables
// ---------------------------------------------------------------------------

/// `round(100 * own / competitor)`.
pub fn relative_rating(own: f64, competitor: f64) -> Result<i64, AnalyticsError> {
    if !(competitor > 0.0) || !competitor.is_finite() {
        return Err(AnalyticsError::NonPositiveCompetitor(competitor));
    }
    Ok(round_half_away(100.0 * own / competitor))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub driver: NodeId,
    pub label: String,
    pub coefficient: f64,
    pub impact_weight: i64,
    pub own_mean: MeanWithHalfWidth,
    /// `None` when the competitor sample does not rate this driver.
    pub competitor_mean: Option<MeanWithHalfWidth>,
    pub relative_rating: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileTable {
    pub parent: NodeId,
    pub parent_label: String,
    pub is_root: bool,
    pub rows: Vec<ProfileRow>,
    pub parent_own_mean: MeanWithHalfWidth,
    pub parent_competitor_mean: Option<MeanWithHalfWidth>,
    pub parent_relative: Option<i64>,
    pub r_squared: f64,
    pub model_n: usize,
}

impl ProfileTable {
    pub fn row(&self, driver: &str) -> Option<&ProfileRow> {
        self.rows.iter().find(|r| r.driver.as_str() == driver)
    }

    /// Largest half-width among the mean cells.
    pub fn max_half_width(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| std::iter::once(r.own_mean).chain(r.competitor_mean))
            .chain(std::iter::once(self.parent_own_mean))
            .chain(self.parent_competitor_mean)
            .map(|m| m.half_width)
            .fold(0.0, f64::max)
    }
}

fn competitor_stat(
    competitors: &SurveySample,
    node: &str,
) -> Result<Option<MeanWithHalfWidth>, AnalyticsError> {
    match node_mean(competitors, node) {
        Ok(m) => Ok(Some(m)),
        Err(SurveyError::NoRatings(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn relative_opt(
    own: &MeanWithHalfWidth,
    comp: Option<&MeanWithHalfWidth>,
) -> Result<Option<i64>, AnalyticsError> {
    comp.map(|c| relative_rating(own.mean, c.mean)).transpose()
}

/// Impact weights joined with own and competitor means for `parent`'s children.
pub fn profile_table(
    hierarchy: &FittedHierarchy,
    own: &SurveySample,
    competitors: &SurveySample,
    parent: &str,
) -> Result<ProfileTable, AnalyticsError> {
    let tree = hierarchy.tree();
    let pnode = tree.try_node(parent)?;
    let model = hierarchy
        .model(parent)
        .ok_or_else(|| AnalyticsError::MissingModel(pnode.id.clone()))?;

    let mut rows = Vec::with_capacity(pnode.children.len());
    for child in &pnode.children {
        let own_mean = node_mean(own, child.as_str())?;
        let competitor_mean = competitor_stat(competitors, child.as_str())?;
        let relative = relative_opt(&own_mean, competitor_mean.as_ref())?;
        rows.push(ProfileRow {
            driver: child.clone(),
            label: tree.label(child.as_str()).to_string(),
            coefficient: model.coefficient(child.as_str()).unwrap_or(0.0),
            impact_weight: model.impact_weight(child.as_str()).unwrap_or(0),
            own_mean,
            competitor_mean,
            relative_rating: relative,
        });
    }
    let parent_own_mean = node_mean(own, parent)?;
    let parent_competitor_mean = competitor_stat(competitors, parent)?;
    let parent_relative = relative_opt(&parent_own_mean, parent_competitor_mean.as_ref())?;
    Ok(ProfileTable {
        parent: pnode.id.clone(),
        parent_label: pnode.label.clone(),
        is_root: pnode.id == *tree.root(),
        rows,
        parent_own_mean,
        parent_competitor_mean,
        parent_relative,
        r_squared: model.fit.r_squared,
        model_n: model.fit.n,
    })
}

/// Profile tables for every fitted internal node, in tree pre-order.
pub fn all_profile_tables(
    hierarchy: &FittedHierarchy,
    own: &SurveySample,
    competitors: &SurveySample,
) -> Vec<Result<ProfileTable, AnalyticsError>> {
    hierarchy
        .tree()
        .internal_nodes()
        .iter()
        .map(|id| profile_table(hierarchy, own, competitors, id.as_str()))
        .collect()
}

/// Customer Value Added: the relative rating of the root.
pub fn cva(
    hierarchy: &FittedHierarchy,
    own: &SurveySample,
    competitors: &SurveySample,
) -> Result<i64, AnalyticsError> {
    let root = hierarchy.tree().root().clone();
    let own_mean = node_mean(own, root.as_str())?;
    let comp = competitor_stat(competitors, root.as_str())?
        .ok_or(AnalyticsError::NoCompetitorRatings(root))?;
    relative_rating(own_mean.mean, comp.mean)
}

// ---------------------------------------------------------------------------
// What-if
// ---------------------------------------------------------------------------

/// Product of child-in-parent coefficients from `node` up to the root.
pub fn path_slope(hierarchy: &FittedHierarchy, node: &str) -> Result<f64, AnalyticsError> {
    let path = path_to_root(hierarchy.tree(), node)?;
    let mut slope = 1.0;
    for pair in path.windows(2) {
        let (child, parent) = (&pair[0], &pair[1]);
        let model = hierarchy
            .model(parent.as_str())
            .ok_or_else(|| AnalyticsError::MissingModel(parent.clone()))?;
        slope *= model
            .coefficient(child.as_str())
            .ok_or_else(|| AnalyticsError::MissingModel(parent.clone()))?;
    }
    Ok(slope)
}

/// Predicted change in the root Value score when `node` moves by `delta`.
pub fn what_if(hierarchy: &FittedHierarchy, node: &str, delta: f64) -> Result<f64, AnalyticsError> {
    Ok(delta * path_slope(hierarchy, node)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfPrediction {
    pub node: NodeId,
    pub delta: f64,
    pub root_change: f64,
    pub warnings: Vec<String>,
}

/// [`what_if`] plus warnings when the shifted means leave the 1..10 scale.
pub fn what_if_with_bounds(
    hierarchy: &FittedHierarchy,
    own: &SurveySample,
    node: &str,
    delta: f64,
) -> Result<WhatIfPrediction, AnalyticsError> {
    let root_change = what_if(hierarchy, node, delta)?;
    let mut warnings = Vec::new();
    let root = hierarchy.tree().root().clone();
    for (id, shift) in [(node, delta), (root.as_str(), root_change)] {
        if let Ok(m) = node_mean(own, id) {
            let moved = m.mean + shift;
            if !(1.0..=10.0).contains(&moved) {
                warnings.push(format!(
                    "mean of `{id}` would move to {moved:.2}, outside the 1-10 scale; linear prediction is extrapolated"
                ));
            }
        }
    }
    Ok(WhatIfPrediction {
        node: NodeId::new(node),
        delta,
        root_change,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Priorities
// ---------------------------------------------------------------------------

/// Which nodes compete for improvement priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorityScope {
    /// Leaf attributes only: the level at which action is taken.
    #[default]
    Attributes,
    /// Every non-root node.
    AllNodes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorityEntry {
    pub node: NodeId,
    pub score: f64,
    pub path_slope: f64,
    /// `competitor_mean - own_mean` (may be negative; score clamps at 0).
    pub gap: f64,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Priorities {
    pub ranked: Vec<PriorityEntry>,
    pub excluded: Vec<(NodeId, String)>,
}

/// Rank nodes by predicted root gain from closing their competitive gap.
pub fn rank_priorities(
    hierarchy: &FittedHierarchy,
    own: &SurveySample,
    competitors: &SurveySample,
    scope: PriorityScope,
) -> Priorities {
    let tree = hierarchy.tree();
    let candidates: Vec<NodeId> = match scope {
        PriorityScope::Attributes => tree.leaves(),
        PriorityScope::AllNodes => tree.preorder().into_iter().skip(1).collect(),
    };
    let mut ranked = Vec::new();
    let mut excluded = Vec::new();
    for id in candidates {
        let entry = (|| -> Result<PriorityEntry, AnalyticsError> {
            let slope = path_slope(hierarchy, id.as_str())?;
            let own_m = node_mean(own, id.as_str())?;
            let comp_m = competitor_stat(competitors, id.as_str())?
                .ok_or_else(|| AnalyticsError::NoCompetitorRatings(id.clone()))?;
            let gap = comp_m.mean - own_m.mean;
            Ok(PriorityEntry {
                node: id.clone(),
                score: slope * gap.max(0.0),
                path_slope: slope,
                gap,
                depth: tree.depth(id.as_str())?,
            })
        })();
        match entry {
            Ok(e) => ranked.push(e),
            Err(e) => excluded.push((id, e.to_string())),
        }
    }
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(b.depth.cmp(&a.depth))
            .then_with(|| a.node.cmp(&b.node))
    });
    Priorities { ranked, excluded }
}

// ---------------------------------------------------------------------------
// Loyalty curve
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoyaltyCurve {
    pub outcome: OutcomeKind,
    pub threshold: u8,
    /// `(value_score, smoothed proportion)` at each populated integer bin.
    pub points: Vec<(f64, f64)>,
    pub raw_proportions: Vec<f64>,
    pub bin_counts: Vec<usize>,
}

impl LoyaltyCurve {
    /// Curve value at a (possibly fractional) Value score. Flat beyond the
    /// outermost bins.
    pub fn at(&self, score: f64) -> f64 {
        let pts = &self.points;
        let (first, last) = (pts[0], pts[pts.len() - 1]);
        if score <= first.0 {
            return first.1;
        }
        if score >= last.0 {
            return last.1;
        }
        let k = pts.partition_point(|p| p.0 <= score);
        let (x0, y0) = pts[k - 1];
        let (x1, y1) = pts[k];
        y0 + (y1 - y0) * (score - x0) / (x1 - x0)
    }

    pub fn max_proportion(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.1)
    }
}

/// Proportion of respondents with `outcome >= threshold`, binned by integer
/// root rating and smoothed to be non-decreasing.
pub fn loyalty_curve(
    sample: &SurveySample,
    outcome: OutcomeKind,
    threshold: u8,
) -> Result<LoyaltyCurve, AnalyticsError> {
    if !(1..=10).contains(&threshold) {
        return Err(AnalyticsError::InvalidThreshold(threshold));
    }
    let root = sample.tree().root().clone();
    let mut counts = [0usize; 11];
    let mut hits = [0usize; 11];
    for r in sample.respondents() {
        if let (Some(v), Some(o)) = (r.rating(root.as_str()), r.outcome(outcome)) {
            counts[v as usize] += 1;
            if o >= threshold {
                hits[v as usize] += 1;
            }
        }
    }
    let bins: Vec<usize> = (1..=10).filter(|&k| counts[k] > 0).collect();
    if bins.is_empty() {
        return Err(AnalyticsError::NoLoyaltyData(outcome));
    }
    let raw: Vec<f64> = bins
        .iter()
        .map(|&k| hits[k] as f64 / counts[k] as f64)
        .collect();
    let weights: Vec<f64> = bins.iter().map(|&k| counts[k] as f64).collect();
    let smooth = pava_non_decreasing(&raw, &weights);
    Ok(LoyaltyCurve {
        outcome,
        threshold,
        points: bins.iter().map(|&k| k as f64).zip(smooth).collect(),
        raw_proportions: raw,
        bin_counts: bins.iter().map(|&k| counts[k]).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoyaltyTarget {
    Score(f64),
    Unattainable { max_proportion: f64 },
}

/// Smallest Value score whose curve value reaches `target`.
pub fn value_target_for_loyalty(
    curve: &LoyaltyCurve,
    target: f64,
) -> Result<LoyaltyTarget, AnalyticsError> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(AnalyticsError::InvalidTarget(target));
    }
    let pts = &curve.points;
    if curve.max_proportion() < target {
        return Ok(LoyaltyTarget::Unattainable {
            max_proportion: curve.max_proportion(),
        });
    }
    if pts[0].1 >= target {
        return Ok(LoyaltyTarget::Score(pts[0].0));
    }
    for w in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if y1 >= target {
            let mut s = x0 + (target - y0) / (y1 - y0) * (x1 - x0);
            // guard against interpolation landing one ulp short
            while curve.at(s) < target && s < x1 {
                s = s.next_up();
            }
            return Ok(LoyaltyTarget::Score(s.min(x1)));
        }
    }
    unreachable!("max proportion reaches target")
}

// ---------------------------------------------------------------------------
// Value map
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueZone {
    SuperiorValue,
    FairValue,
    InferiorValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueMapPoint {
    pub supplier: String,
    pub relative_quality: f64,
    pub relative_price: f64,
    pub zone: ValueZone,
}

/// Classify `(supplier, relative_quality, relative_price)` points.
///
/// Both axes are satisfaction-relative percents, so the fair-value line is
/// `quality = 200 - price`; points within `band` of it (inclusive) are fair.
pub fn value_map(
    points: &[(String, f64, f64)],
    band: f64,
) -> Result<Vec<ValueMapPoint>, AnalyticsError> {
    if !(band >= 0.0) {
        return Err(AnalyticsError::NegativeBand(band));
    }
    points
        .iter()
        .map(|(supplier, q, p)| {
            if !(*q > 0.0 && *p > 0.0) {
                return Err(AnalyticsError::NonPositiveInput(format!(
                    "{supplier}: quality {q}, price {p}"
                )));
            }
            let excess = q - (200.0 - p);
            let zone = if excess.abs() <= band {
                ValueZone::FairValue
            } else if excess > 0.0 {
                ValueZone::SuperiorValue
            } else {
                ValueZone::InferiorValue
            };
            Ok(ValueMapPoint {
                supplier: supplier.clone(),
                relative_quality: *q,
                relative_price: *p,
                zone,
            })
        })
        .collect()
}

/// Relative quality and price for each supplier against all other suppliers
/// pooled, as integer percents.
pub fn supplier_value_points(
    sample: &SurveySample,
    quality_node: &str,
    price_node: &str,
) -> Result<Vec<(String, f64, f64)>, AnalyticsError> {
    let mut out = Vec::new();
    let mut suppliers = sample.suppliers();
    // own supplier first, then competitors alphabetically
    if let Some(i) = suppliers.iter().position(|s| s == sample.own_supplier()) {
        let own = suppliers.remove(i);
        suppliers.insert(0, own);
    }
    for s in suppliers {
        let mine = sample.filter(|r| r.supplier == s);
        let others = sample.filter(|r| r.supplier != s);
        if others.is_empty() {
            continue;
        }
        let rel = |node: &str| -> Result<f64, AnalyticsError> {
            let m = node_mean(&mine, node)?;
            let o = node_mean(&others, node)?;
            Ok(relative_rating(m.mean, o.mean)? as f64)
        };
        out.push((s.clone(), rel(quality_node)?, rel(price_node)?));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Retention and top-box
// ---------------------------------------------------------------------------

/// Expected survivors after `periods` at a constant per-period retention rate.
pub fn retention_projection(
    n0: f64,
    retention_rate: f64,
    periods: u32,
) -> Result<f64, AnalyticsError> {
    if !(0.0..=1.0).contains(&retention_rate) {
        return Err(AnalyticsError::InvalidRate(retention_rate));
    }
    Ok(n0 * retention_rate.powi(periods as i32))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SatisfactionCategory {
    Poor,
    Fair,
    Good,
    Excellent,
}

impl SatisfactionCategory {
    pub const ALL: [SatisfactionCategory; 4] = [
        SatisfactionCategory::Poor,
        SatisfactionCategory::Fair,
        SatisfactionCategory::Good,
        SatisfactionCategory::Excellent,
    ];
}

/// Percent of ratings that fall in the top `box` of categories.
pub fn top_box_rate(
    ratings: &[SatisfactionCategory],
    top: &BTreeSet<SatisfactionCategory>,
) -> Result<f64, AnalyticsError> {
    if ratings.is_empty() {
        return Err(AnalyticsError::EmptyRatings);
    }
    let Some(&lowest) = top.iter().next() else {
        return Err(AnalyticsError::BoxNotSuffix);
    };
    let suffix: BTreeSet<_> = SatisfactionCategory::ALL
        .into_iter()
        .filter(|c| *c >= lowest)
        .collect();
    if &suffix != top {
        return Err(AnalyticsError::BoxNotSuffix);
    }
    let hits = ratings.iter().filter(|c| top.contains(c)).count();
    Ok(100.0 * hits as f64 / ratings.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use SatisfactionCategory::*;

    #[test]
    fn relative_rating_cells() {
        assert_eq!(relative_rating(7.4, 7.7).unwrap(), 96);
        assert_eq!(relative_rating(7.1, 7.0).unwrap(), 101);
        assert_eq!(relative_rating(7.3, 7.5).unwrap(), 97);
        assert_eq!(relative_rating(6.1, 7.5).unwrap(), 81);
        assert_eq!(relative_rating(5.5, 5.5).unwrap(), 100);
        assert_eq!(relative_rating(8.0, 4.0).unwrap(), 200);
        assert!(relative_rating(7.0, 0.0).is_err());
        assert!(relative_rating(7.0, -1.0).is_err());
    }

    #[test]
    fn value_map_zones() {
        let pts = vec![
            ("a".to_string(), 100.0, 100.0),
            ("b".to_string(), 110.0, 100.0),
            ("c".to_string(), 96.0, 101.0),
            ("d".to_string(), 90.0, 100.0),
        ];
        let m = value_map(&pts, 3.0).unwrap();
        assert_eq!(m[0].zone, ValueZone::FairValue);
        assert_eq!(m[1].zone, ValueZone::SuperiorValue);
        assert_eq!(m[2].zone, ValueZone::FairValue);
        assert_eq!(m[3].zone, ValueZone::InferiorValue);
        assert_eq!(
            value_map(&pts[..1], 0.0).unwrap()[0].zone,
            ValueZone::FairValue
        );
        assert!(value_map(&[("x".into(), 0.0, 100.0)], 3.0).is_err());
        assert!(value_map(&pts, -1.0).is_err());
    }

    #[test]
    fn retention() {
        let r = retention_projection(1200.0, 0.9, 9).unwrap();
        assert!((r - 464.904_586_8).abs() < 1e-6);
        assert_eq!(retention_projection(250.0, 1.0, 7).unwrap(), 250.0);
        assert_eq!(retention_projection(100.0, 0.5, 1).unwrap(), 50.0);
        assert!(retention_projection(1.0, 1.1, 1).is_err());
    }

    #[test]
    fn top_box() {
        let mut ratings = vec![Excellent; 60];
        ratings.extend(vec![Good; 35]);
        ratings.extend(vec![Fair; 5]);
        let good_up: BTreeSet<_> = [Good, Excellent].into();
        let ex: BTreeSet<_> = [Excellent].into();
        assert!((top_box_rate(&ratings, &good_up).unwrap() - 95.0).abs() < 1e-12);
        assert!((top_box_rate(&ratings, &ex).unwrap() - 60.0).abs() < 1e-12);
        let poor = vec![Poor; 10];
        for b in [good_up.clone(), ex.clone(), [Fair, Good, Excellent].into()] {
            assert_eq!(top_box_rate(&poor, &b).unwrap(), 0.0);
        }
        assert!(top_box_rate(&ratings, &[Good].into()).is_err());
        assert!(top_box_rate(&ratings, &BTreeSet::new()).is_err());
        assert!(top_box_rate(&[], &ex).is_err());
    }

    #[test]
    fn curve_inversion() {
        let curve = LoyaltyCurve {
            outcome: OutcomeKind::Recommend,
            threshold: 8,
            points: vec![(5.0, 0.2), (6.0, 0.4), (7.0, 0.6), (8.0, 0.9)],
            raw_proportions: vec![0.2, 0.4, 0.6, 0.9],
            bin_counts: vec![1; 4],
        };
        assert!((curve.at(7.5) - 0.75).abs() < 1e-12);
        assert_eq!(curve.at(1.0), 0.2);
        assert_eq!(curve.at(10.0), 0.9);
        match value_target_for_loyalty(&curve, 0.75).unwrap() {
            LoyaltyTarget::Score(s) => assert!((s - 7.5).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            value_target_for_loyalty(&curve, 0.1).unwrap(),
            LoyaltyTarget::Score(5.0)
        );
        assert!(matches!(
            value_target_for_loyalty(&curve, 1.0).unwrap(),
            LoyaltyTarget::Unattainable { .. }
        ));
        assert!(value_target_for_loyalty(&curve, 0.0).is_err());
    }
}
