//! Seeded synthetic markets with a planted linear hierarchy.
//!
//! A [`GroundTruth`] fixes the tree, the child coefficients of every
//! internal node, per-profile leaf means and intercepts, noise levels and
//! the willingness link. [`generate_market`] turns it into a
//! [`SurveySample`]:
//!
//! * leaf rating = `round(mean + halo_sd * h + noise_sd * z)` clamped to 1..=10,
//!   where `h` is a per-respondent shared factor;
//! * internal rating = `round(intercept + sum(coef * child_rating) + noise_sd * z)`
//!   clamped to 1..=10, using the children's *observed* ratings;
//! * each outcome is "very willing" (>= threshold) with the link probability
//!   of the respondent's root rating.
//!
//! The number of random draws per respondent does not depend on any
//! parameter value, so changing a coefficient never shifts the stream.

mod calibrate;
pub mod rng;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::survey_store::{OutcomeKind, Respondent, Role, SurveySample};
use crate::value_tree::{NodeId, ValueTree};

pub use calibrate::{
    calibrate_to_tables, link_from_pairs, CalibrationTargets, LoyaltyTargets, NodeDefaults,
    TableRowTarget, TableTarget,
};
use rng::MarketRng;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid ground truth: {0}")]
    InvalidTruth(String),
    #[error("inconsistent targets: {0}")]
    InconsistentTargets(String),
    #[error("calibration did not converge: {0}")]
    NoConvergence(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplierSpec {
    pub label: String,
    pub n: usize,
    /// Key into [`GroundTruth::profiles`].
    pub profile: String,
}

/// Mean structure shared by one or more suppliers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SupplierProfile {
    /// Latent mean of every leaf attribute.
    pub leaf_means: BTreeMap<NodeId, f64>,
    /// Intercept of every internal node's equation.
    pub intercepts: BTreeMap<NodeId, f64>,
}

/// Probability of a very-willing outcome for each root rating 1..=10.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WillingnessLink {
    pub threshold: u8,
    pub probability: Vec<f64>,
}

impl WillingnessLink {
    pub fn at(&self, root_rating: u8) -> f64 {
        self.probability[(root_rating.clamp(1, 10) - 1) as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub tree: ValueTree,
    pub seed: u64,
    pub own_supplier: String,
    pub suppliers: Vec<SupplierSpec>,
    pub profiles: BTreeMap<String, SupplierProfile>,
    /// parent -> child -> coefficient
    pub coefficients: BTreeMap<NodeId, BTreeMap<NodeId, f64>>,
    /// Leaves: idiosyncratic sd. Internal nodes: equation noise sd.
    pub noise_sd: BTreeMap<NodeId, f64>,
    pub halo_sd: f64,
    pub decision_maker_share: f64,
    pub willingness_link: WillingnessLink,
}

impl GroundTruth {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidTruth(m));
        let tree = &self.tree;
        for id in tree.internal_nodes() {
            let coefs = self.coefficients.get(&id);
            for c in tree.children(id.as_str()) {
                match coefs.and_then(|m| m.get(c)) {
                    Some(v) if v.is_finite() => {}
                    _ => return bad(format!("missing coefficient for `{c}` in `{id}`")),
                }
            }
        }
        for id in tree.preorder() {
            match self.noise_sd.get(&id) {
                Some(&s) if s >= 0.0 && s.is_finite() => {}
                _ => return bad(format!("noise_sd for `{id}` missing or negative")),
            }
        }
        if self.suppliers.is_empty() {
            return bad("no suppliers".into());
        }
        for s in &self.suppliers {
            let Some(p) = self.profiles.get(&s.profile) else {
                return bad(format!(
                    "supplier `{}` uses unknown profile `{}`",
                    s.label, s.profile
                ));
            };
            for leaf in tree.leaves() {
                match p.leaf_means.get(&leaf) {
                    Some(&m) if (1.0..=10.0).contains(&m) => {}
                    _ => {
                        return bad(format!(
                            "profile `{}`: leaf mean for `{leaf}` missing or outside 1..10",
                            s.profile
                        ))
                    }
                }
            }
            for id in tree.internal_nodes() {
                if !p.intercepts.get(&id).is_some_and(|v| v.is_finite()) {
                    return bad(format!(
                        "profile `{}`: intercept for `{id}` missing",
                        s.profile
                    ));
                }
            }
        }
        if !(self.halo_sd >= 0.0) {
            return bad("halo_sd must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.decision_maker_share) {
            return bad("decision_maker_share outside [0, 1]".into());
        }
        let link = &self.willingness_link;
        if !(1..=10).contains(&link.threshold) {
            return bad("willingness threshold outside 1..=10".into());
        }
        if link.probability.len() != 10 {
            return bad("willingness link needs one probability per root rating 1..=10".into());
        }
        if link.probability.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("willingness probabilities outside [0, 1]".into());
        }
        if link.probability.windows(2).any(|w| w[1] < w[0]) {
            return bad("willingness link is not non-decreasing".into());
        }
        Ok(())
    }

    pub fn total_respondents(&self) -> usize {
        self.suppliers.iter().map(|s| s.n).sum()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("ground truth serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let t: GroundTruth =
            serde_json::from_str(text).map_err(|e| SimError::InvalidTruth(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }
}

pub(crate) fn to_rating(latent: f64) -> u8 {
    latent.round().clamp(1.0, 10.0) as u8
}

/// Internal-node equation; shared by generation and calibration so both
/// produce bit-identical ratings.
pub(crate) fn internal_latent(
    intercept: f64,
    coefs: &[f64],
    children: &[f64],
    sd: f64,
    z: f64,
) -> f64 {
    let mut lin = intercept;
    for (c, x) in coefs.iter().zip(children) {
        lin += c * x;
    }
    lin + sd * z
}

pub(crate) fn leaf_latent(mean: f64, halo_sd: f64, h: f64, sd: f64, z: f64) -> f64 {
    mean + halo_sd * h + sd * z
}

/// Outcome rating given the very-willing decision and a level uniform.
pub(crate) fn outcome_rating(willing: bool, threshold: u8, u: f64) -> u8 {
    if willing {
        let span = f64::from(11 - threshold);
        threshold + ((u * span).floor() as u8).min(10 - threshold)
    } else {
        // concentrated just below the threshold
        let drop = ((u * u) * f64::from(threshold)).floor() as u8;
        threshold - 1 - drop.min(threshold - 1)
    }
}

/// All random inputs for a market, drawn in a fixed order: per respondent,
/// role uniform, halo normal, one normal per node in pre-order, then a
/// (willing, level) uniform pair per outcome kind.
pub(crate) struct Draws {
    pub role: Vec<f64>,
    pub halo: Vec<f64>,
    /// `[node index in pre-order][respondent]`
    pub z: Vec<Vec<f64>>,
    /// `[outcome kind][respondent]` as (willing, level)
    pub outcome: [Vec<(f64, f64)>; 2],
}

impl Draws {
    pub fn new(seed: u64, n: usize, n_nodes: usize) -> Self {
        let mut rng = MarketRng::new(seed);
        let mut d = Draws {
            role: Vec::with_capacity(n),
            halo: Vec::with_capacity(n),
            z: vec![Vec::with_capacity(n); n_nodes],
            outcome: [Vec::with_capacity(n), Vec::with_capacity(n)],
        };
        for _ in 0..n {
            d.role.push(rng.uniform());
            d.halo.push(rng.normal());
            for col in d.z.iter_mut() {
                col.push(rng.normal());
            }
            for o in d.outcome.iter_mut() {
                let w = rng.uniform();
                let l = rng.uniform();
                o.push((w, l));
            }
        }
        d
    }
}

/// Ratings matrix for a market, before outcomes.
pub(crate) struct Layout {
    pub order: Vec<NodeId>,
    pub index: BTreeMap<NodeId, usize>,
    /// profile name per respondent
    pub profile_of: Vec<String>,
    pub supplier_of: Vec<String>,
}

impl Layout {
    pub fn new(truth: &GroundTruth) -> Self {
        let order = truth.tree.preorder();
        let index = order
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let mut profile_of = Vec::new();
        let mut supplier_of = Vec::new();
        for s in &truth.suppliers {
            for _ in 0..s.n {
                profile_of.push(s.profile.clone());
                supplier_of.push(s.label.clone());
            }
        }
        Layout {
            order,
            index,
            profile_of,
            supplier_of,
        }
    }
}

/// Compute every node column from a truth and its draws.
pub(crate) fn rating_columns(truth: &GroundTruth, layout: &Layout, draws: &Draws) -> Vec<Vec<u8>> {
    let n = layout.profile_of.len();
    let tree = &truth.tree;
    let mut cols = vec![Vec::new(); layout.order.len()];
    for id in tree.postorder() {
        let k = layout.index[&id];
        let sd = truth.noise_sd[&id];
        let col: Vec<u8> = if tree.is_internal(id.as_str()) {
            let children = tree.children(id.as_str());
            let coefs: Vec<f64> = children
                .iter()
                .map(|c| truth.coefficients[&id][c])
                .collect();
            let child_idx: Vec<usize> = children.iter().map(|c| layout.index[c]).collect();
            let mut xs = vec![0.0; children.len()];
            (0..n)
                .map(|i| {
                    for (x, &ci) in xs.iter_mut().zip(&child_idx) {
                        *x = f64::from(cols[ci][i]);
                    }
                    let a = truth.profiles[&layout.profile_of[i]].intercepts[&id];
                    to_rating(internal_latent(a, &coefs, &xs, sd, draws.z[k][i]))
                })
                .collect()
        } else {
            (0..n)
                .map(|i| {
                    let m = truth.profiles[&layout.profile_of[i]].leaf_means[&id];
                    to_rating(leaf_latent(
                        m,
                        truth.halo_sd,
                        draws.halo[i],
                        sd,
                        draws.z[k][i],
                    ))
                })
                .collect()
        };
        cols[k] = col;
    }
    cols
}

/// Deterministic synthetic survey sample.
pub fn generate_market(truth: &GroundTruth) -> Result<SurveySample, SimError> {
    truth.validate()?;
    let layout = Layout::new(truth);
    let n = layout.profile_of.len();
    let draws = Draws::new(truth.seed, n, layout.order.len());
    let cols = rating_columns(truth, &layout, &draws);
    let root_k = layout.index[truth.tree.root()];
    let link = &truth.willingness_link;
    let width = n.max(1).to_string().len().max(4);

    let respondents = (0..n)
        .map(|i| {
            let root = cols[root_k][i];
            let p = link.at(root);
            let outcome_ratings = OutcomeKind::ALL
                .iter()
                .enumerate()
                .map(|(k, kind)| {
                    let (w, l) = draws.outcome[k][i];
                    (*kind, outcome_rating(w < p, link.threshold, l))
                })
                .collect();
            Respondent {
                id: format!("r{:0width$}", i + 1),
                role: if draws.role[i] < truth.decision_maker_share {
                    Role::DecisionMaker
                } else {
                    Role::User
                },
                supplier: layout.supplier_of[i].clone(),
                node_ratings: layout
                    .order
                    .iter()
                    .enumerate()
                    .map(|(k, id)| (id.clone(), cols[k][i]))
                    .collect(),
                outcome_ratings,
            }
        })
        .collect();
    SurveySample::new(
        Arc::new(truth.tree.clone()),
        respondents,
        truth.own_supplier.clone(),
    )
    .map_err(|e| SimError::InvalidTruth(e.to_string()))
}
