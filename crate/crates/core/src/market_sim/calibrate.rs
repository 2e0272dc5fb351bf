//! Fit a [`GroundTruth`] whose generated sample reproduces published
//! profile-table cells and loyalty-curve anchors.
//!
//! Because the random draws are fixed by the seed, the generated sample is
//! a deterministic function of the planted parameters. Calibration walks
//! the tree bottom-up: leaf means are found by bisection, then for each
//! internal node the planted coefficients, equation noise and per-profile
//! intercepts are iterated until the fitted coefficients, R² and observed
//! means land on their targets. Finally the willingness link is set bin by
//! bin so the own-customer proportions hit the curve anchors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    generate_market, internal_latent, leaf_latent, outcome_rating, rating_columns, to_rating,
    Draws, GroundTruth, Layout, SimError, SupplierProfile, SupplierSpec, WillingnessLink,
};
use crate::cvm_analytics::{
    loyalty_curve, profile_table, relative_rating, value_target_for_loyalty, LoyaltyTarget,
};
use crate::ls_engine::{fit_hierarchy, fit_linear};
use crate::rounding::{percent, round_to};
use crate::survey_store::{split_by_supplier, OutcomeKind};
use crate::value_tree::{NodeId, ValueTree};

const COEF_TOL: f64 = 0.0015;
const MEAN_TOL: f64 = 0.0015;
const R2_TOL: f64 = 0.004;
const LOYALTY_TOL: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRowTarget {
    pub driver: NodeId,
    pub impact_weight: i64,
    pub own: f64,
    pub competitor: f64,
    pub relative: i64,
}

/// Integer cells of one profile table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableTarget {
    pub parent: NodeId,
    pub rows: Vec<TableRowTarget>,
    pub parent_own: f64,
    pub parent_competitor: f64,
    pub parent_relative: i64,
    #[serde(default)]
    pub r_squared: Option<f64>,
}

/// Values for nodes the tables do not mention.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NodeDefaults {
    /// node -> [own mean, competitor mean]
    pub means: BTreeMap<NodeId, [f64; 2]>,
    pub coefficients: BTreeMap<NodeId, BTreeMap<NodeId, f64>>,
    pub noise_sd: BTreeMap<NodeId, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoyaltyTargets {
    pub outcome: OutcomeKind,
    pub threshold: u8,
    /// `(value score, proportion very willing)` anchors.
    pub pairs: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    pub tree: ValueTree,
    pub seed: u64,
    pub own_supplier: String,
    pub suppliers: Vec<SupplierSpec>,
    pub halo_sd: f64,
    pub decision_maker_share: f64,
    pub defaults: NodeDefaults,
    pub tables: Vec<TableTarget>,
    pub loyalty: LoyaltyTargets,
    #[serde(default = "default_rounds")]
    pub max_rounds: usize,
}

fn default_rounds() -> usize {
    200
}

impl CalibrationTargets {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::InvalidTruth(e.to_string()))
    }
}

struct Resolved {
    own_profile: String,
    comp_profile: String,
    /// node -> [own, competitor]
    means: BTreeMap<NodeId, [f64; 2]>,
    coefs: BTreeMap<NodeId, Vec<f64>>,
    r2: BTreeMap<NodeId, f64>,
    noise: BTreeMap<NodeId, f64>,
}

fn inconsistent(msg: String) -> SimError {
    SimError::InconsistentTargets(msg)
}

fn resolve(t: &CalibrationTargets) -> Result<Resolved, SimError> {
    let tree = &t.tree;
    let own_profile = t
        .suppliers
        .iter()
        .find(|s| s.label == t.own_supplier)
        .map(|s| s.profile.clone())
        .ok_or_else(|| {
            inconsistent(format!(
                "own supplier `{}` not among suppliers",
                t.own_supplier
            ))
        })?;
    let mut comp_profiles: Vec<&str> = t
        .suppliers
        .iter()
        .filter(|s| s.label != t.own_supplier)
        .map(|s| s.profile.as_str())
        .collect();
    comp_profiles.dedup();
    let comp_profile = match comp_profiles.as_slice() {
        [p] if *p != own_profile => p.to_string(),
        _ => {
            return Err(inconsistent(
                "competitors must share exactly one profile distinct from the own profile".into(),
            ))
        }
    };

    // Table cells first, checked for internal consistency and conflicts.
    let mut means: BTreeMap<NodeId, [f64; 2]> = BTreeMap::new();
    let mut coefs: BTreeMap<NodeId, BTreeMap<NodeId, f64>> = BTreeMap::new();
    let mut r2 = BTreeMap::new();
    let mut set_mean = |node: &NodeId, own: f64, comp: f64, rel: i64| -> Result<(), SimError> {
        let computed = relative_rating(own, comp).map_err(|e| inconsistent(e.to_string()))?;
        if computed != rel {
            return Err(inconsistent(format!(
                "`{node}`: relative rating {rel} listed but {own}/{comp} gives {computed}"
            )));
        }
        if let Some(prev) = means.get(node) {
            if *prev != [own, comp] {
                return Err(inconsistent(format!(
                    "`{node}` has conflicting means {prev:?} and {:?}",
                    [own, comp]
                )));
            }
        }
        means.insert(node.clone(), [own, comp]);
        Ok(())
    };
    for table in &t.tables {
        let parent = tree
            .node(table.parent.as_str())
            .ok_or_else(|| inconsistent(format!("unknown table parent `{}`", table.parent)))?;
        set_mean(
            &table.parent,
            table.parent_own,
            table.parent_competitor,
            table.parent_relative,
        )?;
        for row in &table.rows {
            if !parent.children.contains(&row.driver) {
                return Err(inconsistent(format!(
                    "`{}` is not a child of `{}`",
                    row.driver, table.parent
                )));
            }
            set_mean(&row.driver, row.own, row.competitor, row.relative)?;
            coefs
                .entry(table.parent.clone())
                .or_default()
                .insert(row.driver.clone(), row.impact_weight as f64 / 100.0);
        }
        if let Some(r) = table.r_squared {
            if !(r > 0.0 && r < 1.0) {
                return Err(inconsistent(format!("R² target {r} outside (0, 1)")));
            }
            r2.insert(table.parent.clone(), r);
        }
    }

    for id in tree.preorder() {
        if !means.contains_key(&id) {
            let m = t
                .defaults
                .means
                .get(&id)
                .ok_or_else(|| inconsistent(format!("no mean target for `{id}`")))?;
            means.insert(id.clone(), *m);
        }
        if !t.defaults.noise_sd.contains_key(&id) {
            return Err(inconsistent(format!("no noise_sd default for `{id}`")));
        }
    }
    let mut coef_vecs = BTreeMap::new();
    for id in tree.internal_nodes() {
        let mut v = Vec::new();
        for c in tree.children(id.as_str()) {
            let val = coefs
                .get(&id)
                .and_then(|m| m.get(c))
                .or_else(|| t.defaults.coefficients.get(&id).and_then(|m| m.get(c)))
                .ok_or_else(|| {
                    inconsistent(format!("no coefficient target for `{c}` in `{id}`"))
                })?;
            v.push(*val);
        }
        coef_vecs.insert(id, v);
    }
    Ok(Resolved {
        own_profile,
        comp_profile,
        means,
        coefs: coef_vecs,
        r2,
        noise: t.defaults.noise_sd.clone(),
    })
}

fn mean_over(col: impl Iterator<Item = u8>, n: usize) -> f64 {
    col.map(f64::from).sum::<f64>() / n as f64
}

/// Bisection for the parameter at which a non-decreasing step function of
/// observed means is closest to `target`.
fn bisect_mean(mut lo: f64, mut hi: f64, target: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut best = (lo, f(lo));
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let m = f(mid);
        if (m - target).abs() < (best.1 - target).abs() {
            best = (mid, m);
        }
        if m < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best
}

/// Planted logistic shape through the first and last anchors, with the
/// integer bins around each anchor adjusted so linear interpolation passes
/// through it exactly.
pub fn link_from_pairs(pairs: &[(f64, f64)]) -> Result<Vec<f64>, SimError> {
    let mut pairs = pairs.to_vec();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pairs.len() < 2 {
        return Err(inconsistent(
            "at least two loyalty anchors are needed".into(),
        ));
    }
    for w in pairs.windows(2) {
        if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
            return Err(inconsistent(
                "loyalty anchors must increase in score and proportion".into(),
            ));
        }
    }
    for &(s, p) in &pairs {
        if !(1.0..=10.0).contains(&s) || !(p > 0.0 && p < 1.0) {
            return Err(inconsistent(format!(
                "loyalty anchor ({s}, {p}) out of range"
            )));
        }
    }
    let logit = |p: f64| (p / (1.0 - p)).ln();
    let (s0, p0) = pairs[0];
    let (s1, p1) = pairs[pairs.len() - 1];
    let slope = (logit(p1) - logit(p0)) / (s1 - s0);
    let mut link: Vec<f64> = (1..=10)
        .map(|k| 1.0 / (1.0 + (-(logit(p0) + slope * (k as f64 - s0))).exp()))
        .collect();

    let mut by_segment: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for &(s, p) in &pairs {
        let seg = (s.floor() as usize).clamp(1, 9);
        by_segment.entry(seg).or_default().push((s - seg as f64, p));
    }
    for (seg, pts) in by_segment {
        let (lo, hi) = (seg - 1, seg);
        match pts.as_slice() {
            [(t, p)] if *t == 0.0 => link[lo] = *p,
            [(t, p)] => link[hi] = link[lo] + (p - link[lo]) / t,
            [(t1, p1), (t2, p2)] => {
                let d = (p2 - p1) / (t2 - t1);
                link[lo] = p1 - t1 * d;
                link[hi] = link[lo] + d;
            }
            _ => {
                return Err(inconsistent(format!(
                    "more than two anchors between {seg} and {}",
                    seg + 1
                )))
            }
        }
    }
    let mut running = 0.0f64;
    for p in link.iter_mut() {
        *p = p.clamp(0.0, 1.0).max(running);
        running = *p;
    }
    // anchors must survive the monotone repair
    for &(s, p) in &pairs {
        let k = (s.floor() as usize).clamp(1, 9);
        let t = s - k as f64;
        let v = link[k - 1] + t * (link[k] - link[k - 1]);
        if (v - p).abs() > 1e-9 {
            return Err(inconsistent(format!(
                "anchor ({s}, {p}) not representable by a monotone link"
            )));
        }
    }
    Ok(link)
}

/// Build a ground truth reproducing `targets` on its own generated sample.
pub fn calibrate_to_tables(targets: &CalibrationTargets) -> Result<GroundTruth, SimError> {
    let tree = &targets.tree;
    let res = resolve(targets)?;
    let profiles = [res.own_profile.clone(), res.comp_profile.clone()];

    let mut truth = GroundTruth {
        tree: tree.clone(),
        seed: targets.seed,
        own_supplier: targets.own_supplier.clone(),
        suppliers: targets.suppliers.clone(),
        profiles: profiles
            .iter()
            .map(|p| (p.clone(), SupplierProfile::default()))
            .collect(),
        coefficients: BTreeMap::new(),
        noise_sd: res.noise.clone(),
        halo_sd: targets.halo_sd,
        decision_maker_share: targets.decision_maker_share,
        willingness_link: WillingnessLink {
            threshold: targets.loyalty.threshold,
            probability: vec![0.5; 10],
        },
    };

    let layout = Layout::new(&truth);
    let n = layout.profile_of.len();
    let rows: [Vec<usize>; 2] = [0, 1].map(|j| {
        (0..n)
            .filter(|&i| layout.profile_of[i] == profiles[j])
            .collect()
    });
    if rows.iter().any(Vec::is_empty) {
        return Err(inconsistent(
            "both own and competitor respondents are required".into(),
        ));
    }
    let draws = Draws::new(targets.seed, n, layout.order.len());
    let mut cols: Vec<Vec<u8>> = vec![vec![0; n]; layout.order.len()];

    for id in tree.postorder() {
        let k = layout.index[&id];
        let sd = res.noise[&id];
        let mt = res.means[&id];
        if !tree.is_internal(id.as_str()) {
            for j in 0..2 {
                let gen = |mu: f64| {
                    mean_over(
                        rows[j].iter().map(|&i| {
                            to_rating(leaf_latent(
                                mu,
                                truth.halo_sd,
                                draws.halo[i],
                                sd,
                                draws.z[k][i],
                            ))
                        }),
                        rows[j].len(),
                    )
                };
                let (mu, got) = bisect_mean(mt[j] - 4.0, mt[j] + 4.0, mt[j], gen);
                if (got - mt[j]).abs() > MEAN_TOL {
                    return Err(SimError::NoConvergence(format!(
                        "leaf `{id}` profile `{}`: mean {got:.4} vs target {}",
                        profiles[j], mt[j]
                    )));
                }
                if !(1.0..=10.0).contains(&mu) {
                    return Err(SimError::NoConvergence(format!(
                        "leaf `{id}` needs latent mean {mu:.3} outside 1..10"
                    )));
                }
                truth
                    .profiles
                    .get_mut(&profiles[j])
                    .unwrap()
                    .leaf_means
                    .insert(id.clone(), mu);
                for &i in &rows[j] {
                    cols[k][i] = to_rating(leaf_latent(
                        mu,
                        truth.halo_sd,
                        draws.halo[i],
                        sd,
                        draws.z[k][i],
                    ));
                }
            }
            continue;
        }

        let children = tree.children(id.as_str()).to_vec();
        let xs: Vec<Vec<f64>> = children
            .iter()
            .map(|c| {
                cols[layout.index[c]]
                    .iter()
                    .map(|&v| f64::from(v))
                    .collect()
            })
            .collect();
        let fit = calibrate_node(
            &id,
            &children,
            &xs,
            &draws.z[k],
            &rows,
            &res.coefs[&id],
            mt,
            res.r2.get(&id).copied(),
            sd,
            targets.max_rounds,
        )?;
        truth.noise_sd.insert(id.clone(), fit.sd);
        truth.coefficients.insert(
            id.clone(),
            children
                .iter()
                .cloned()
                .zip(fit.coefs.iter().copied())
                .collect(),
        );
        for j in 0..2 {
            truth
                .profiles
                .get_mut(&profiles[j])
                .unwrap()
                .intercepts
                .insert(id.clone(), fit.intercepts[j]);
        }
        cols[k] = fit.column;
    }

    // Sanity: the shared generator must reproduce the calibrated columns.
    debug_assert!(rating_columns(&truth, &layout, &draws) == cols);

    truth.willingness_link.probability = calibrate_link(targets, &layout, &draws, &cols, &rows[0])?;
    truth.validate()?;
    verify(&truth, targets, &res)?;
    Ok(truth)
}

struct NodeFit {
    coefs: Vec<f64>,
    intercepts: [f64; 2],
    sd: f64,
    column: Vec<u8>,
}

#[allow(clippy::too_many_arguments)]
fn calibrate_node(
    id: &NodeId,
    children: &[NodeId],
    xs: &[Vec<f64>],
    z: &[f64],
    rows: &[Vec<usize>; 2],
    coef_target: &[f64],
    mean_target: [f64; 2],
    r2_target: Option<f64>,
    sd0: f64,
    max_rounds: usize,
) -> Result<NodeFit, SimError> {
    let n = z.len();
    let names: Vec<&str> = children.iter().map(NodeId::as_str).collect();
    let child_means: [Vec<f64>; 2] = [0, 1].map(|j| {
        xs.iter()
            .map(|x| rows[j].iter().map(|&i| x[i]).sum::<f64>() / rows[j].len() as f64)
            .collect()
    });

    let mut coefs = coef_target.to_vec();
    let mut sd = sd0;
    let mut a = [0, 1].map(|j| {
        mean_target[j]
            - coefs
                .iter()
                .zip(&child_means[j])
                .map(|(c, m)| c * m)
                .sum::<f64>()
    });
    let mut row_x = vec![0.0; xs.len()];
    let mut rating = |i: usize, a: f64, coefs: &[f64], sd: f64| -> u8 {
        for (v, x) in row_x.iter_mut().zip(xs) {
            *v = x[i];
        }
        to_rating(internal_latent(a, coefs, &row_x, sd, z[i]))
    };
    let profile_of: Vec<usize> = {
        let mut p = vec![0; n];
        for &i in &rows[1] {
            p[i] = 1;
        }
        p
    };

    let mut last = String::new();
    for round in 0..max_rounds {
        let col: Vec<u8> = (0..n)
            .map(|i| rating(i, a[profile_of[i]], &coefs, sd))
            .collect();
        let y: Vec<f64> = col.iter().map(|&v| f64::from(v)).collect();
        let cols: Vec<(&str, &[f64])> = names
            .iter()
            .copied()
            .zip(xs.iter().map(Vec::as_slice))
            .collect();
        let fit =
            fit_linear(&y, &cols).map_err(|e| SimError::NoConvergence(format!("`{id}`: {e}")))?;
        let fitted: Vec<f64> = names.iter().map(|c| fit.coefficients[*c]).collect();
        let means = [0, 1].map(|j| mean_over(rows[j].iter().map(|&i| col[i]), rows[j].len()));

        let coef_err = coef_target
            .iter()
            .zip(&fitted)
            .map(|(t, f)| (t - f).abs())
            .fold(0.0, f64::max);
        let r2_err = r2_target.map_or(0.0, |t| (fit.r_squared - t).abs());
        let mean_err = (0..2)
            .map(|j| (means[j] - mean_target[j]).abs())
            .fold(0.0, f64::max);
        if coef_err <= COEF_TOL && r2_err <= R2_TOL && mean_err <= MEAN_TOL {
            return Ok(NodeFit {
                coefs,
                intercepts: a,
                sd,
                column: col,
            });
        }
        last = format!(
            "`{id}` after {round} rounds: coefficient error {coef_err:.4}, R² error {r2_err:.4}, mean error {mean_err:.4}"
        );

        // Damped fixed-point steps; damping grows with the round count to
        // settle oscillation between neighbouring rounding patterns.
        let damp = if round < 20 { 1.0 } else { 0.5 };
        for (k, c) in coefs.iter_mut().enumerate() {
            let step = damp * (coef_target[k] - fitted[k]);
            *c += step;
            for j in 0..2 {
                a[j] -= step * child_means[j][k];
            }
        }
        if let Some(t) = r2_target {
            let var_y = {
                let m = y.iter().sum::<f64>() / n as f64;
                y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64
            };
            let signal = fit.r_squared * var_y;
            let noise_now = (1.0 - fit.r_squared) * var_y;
            let noise_target = signal * (1.0 - t) / t;
            sd = (sd * sd + damp * (noise_target - noise_now))
                .max(0.0)
                .sqrt();
        }
        // Polish intercepts so the means land, holding the slopes fixed.
        for j in 0..2 {
            let gen = |aj: f64| {
                mean_over(
                    rows[j].iter().map(|&i| {
                        let mut v = vec![0.0; xs.len()];
                        for (vk, x) in v.iter_mut().zip(xs) {
                            *vk = x[i];
                        }
                        to_rating(internal_latent(aj, &coefs, &v, sd, z[i]))
                    }),
                    rows[j].len(),
                )
            };
            a[j] = bisect_mean(a[j] - 2.0, a[j] + 2.0, mean_target[j], gen).0;
        }
    }
    Err(SimError::NoConvergence(last))
}

fn calibrate_link(
    targets: &CalibrationTargets,
    layout: &Layout,
    draws: &Draws,
    cols: &[Vec<u8>],
    own_rows: &[usize],
) -> Result<Vec<f64>, SimError> {
    let planted = link_from_pairs(&targets.loyalty.pairs)?;
    let root = &cols[layout.index[targets.tree.root()]];
    let kind = OutcomeKind::ALL
        .iter()
        .position(|k| *k == targets.loyalty.outcome)
        .expect("outcome kind");
    let mut link = Vec::with_capacity(10);
    for bin in 1..=10u8 {
        let mut w: Vec<f64> = own_rows
            .iter()
            .filter(|&&i| root[i] == bin)
            .map(|&i| draws.outcome[kind][i].0)
            .collect();
        let p = planted[(bin - 1) as usize];
        if w.is_empty() {
            link.push(p);
            continue;
        }
        w.sort_by(f64::total_cmp);
        let m = w.len();
        let hits = ((p * m as f64).round() as usize).min(m);
        let lower = if hits == 0 { 0.0 } else { w[hits - 1] };
        let upper = if hits == m { 1.0 } else { w[hits] };
        link.push(0.5 * (lower + upper));
    }
    let mut running = 0.0f64;
    for p in link.iter_mut() {
        *p = p.max(running);
        running = *p;
    }
    // outcome_rating must place hits at or above the threshold
    debug_assert!(
        outcome_rating(true, targets.loyalty.threshold, 0.0) >= targets.loyalty.threshold
    );
    Ok(link)
}

/// Regenerate from the finished truth and confirm every target cell.
fn verify(
    truth: &GroundTruth,
    targets: &CalibrationTargets,
    res: &Resolved,
) -> Result<(), SimError> {
    let sample = generate_market(truth)?;
    let tree = sample.tree().clone();
    let hierarchy = fit_hierarchy(&sample, &tree);
    let (own, comp) = split_by_supplier(&sample);
    let fail = |m: String| Err(SimError::NoConvergence(m));

    for table in &targets.tables {
        let pt = profile_table(&hierarchy, &own, &comp, table.parent.as_str())
            .map_err(|e| SimError::NoConvergence(e.to_string()))?;
        let disp = |x: f64| round_to(x, 1);
        for row in &table.rows {
            let r = pt.row(row.driver.as_str()).expect("row exists");
            let cm = r.competitor_mean.expect("competitor mean").mean;
            if r.impact_weight != row.impact_weight
                || disp(r.own_mean.mean) != row.own
                || disp(cm) != row.competitor
                || r.relative_rating != Some(row.relative)
            {
                return fail(format!(
                    "table `{}` row `{}` does not reproduce",
                    table.parent, row.driver
                ));
            }
        }
        let pcm = pt.parent_competitor_mean.expect("competitor mean").mean;
        if disp(pt.parent_own_mean.mean) != table.parent_own
            || disp(pcm) != table.parent_competitor
            || pt.parent_relative != Some(table.parent_relative)
        {
            return fail(format!(
                "table `{}` parent row does not reproduce",
                table.parent
            ));
        }
        if let Some(r2) = table.r_squared {
            if percent(pt.r_squared) != percent(r2) {
                return fail(format!(
                    "table `{}` R² {:.4} vs {r2}",
                    table.parent, pt.r_squared
                ));
            }
        }
    }
    for (id, t) in &res.r2 {
        let got = hierarchy
            .model(id.as_str())
            .map(|m| m.fit.r_squared)
            .unwrap_or(0.0);
        if (got - t).abs() > 0.01 {
            return fail(format!("`{id}` R² {got:.4} vs {t}"));
        }
    }

    let curve = loyalty_curve(&own, targets.loyalty.outcome, targets.loyalty.threshold)
        .map_err(|e| SimError::NoConvergence(e.to_string()))?;
    for &(s, p) in &targets.loyalty.pairs {
        let got = curve.at(s);
        if (got - p).abs() > LOYALTY_TOL {
            return fail(format!("loyalty curve at {s} is {got:.3}, target {p}"));
        }
        if let Ok(LoyaltyTarget::Score(v)) = value_target_for_loyalty(&curve, p) {
            if (v - s).abs() > 0.1 {
                return fail(format!("loyalty target {p} needs score {v:.3}, anchor {s}"));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn link_passes_through_anchor_pair() {
        let link = link_from_pairs(&[(7.3, 0.63), (7.8, 0.80)]).unwrap();
        let at = |s: f64| {
            let k = s.floor() as usize;
            link[k - 1] + (s - k as f64) * (link[k] - link[k - 1])
        };
        assert!((at(7.3) - 0.63).abs() < 1e-12);
        assert!((at(7.8) - 0.80).abs() < 1e-12);
        assert!(link.windows(2).all(|w| w[0] <= w[1]));
        assert!((link[6] - 0.528).abs() < 1e-9);
        assert!((link[7] - 0.868).abs() < 1e-9);
    }

    #[test]
    fn link_rejects_bad_anchors() {
        assert!(link_from_pairs(&[(7.3, 0.63)]).is_err());
        assert!(link_from_pairs(&[(7.3, 0.63), (7.8, 0.5)]).is_err());
        assert!(link_from_pairs(&[(7.1, 0.6), (7.3, 0.63), (7.8, 0.80)]).is_err());
    }
}
