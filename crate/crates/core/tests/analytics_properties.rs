mod common;

use std::collections::BTreeSet;
use std::sync::OnceLock;

use common::*;
use cvm_core::cvm_analytics::{
    cva, loyalty_curve, path_slope, profile_table, rank_priorities, relative_rating,
    retention_projection, top_box_rate, value_map, value_target_for_loyalty, what_if,
    AnalyticsError, LoyaltyTarget, PriorityScope, SatisfactionCategory, ValueZone,
};
use cvm_core::ls_engine::{fit_hierarchy, fit_hierarchy_in_order, FittedHierarchy};
use cvm_core::survey_store::{node_mean, split_by_supplier, OutcomeKind, SurveySample};
use cvm_core::value_tree::path_to_root;
use proptest::prelude::*;

struct Fixture {
    sample: SurveySample,
    own: SurveySample,
    comp: SurveySample,
    h: FittedHierarchy,
}

fn fx() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let sample = auto_sample();
        let h = fit_hierarchy(&sample, sample.tree());
        let (own, comp) = split_by_supplier(&sample);
        Fixture {
            sample,
            own,
            comp,
            h,
        }
    })
}

proptest! {
    #[test]
    fn reciprocal_relative_ratings(a in 1.0f64..10.0, b in 1.0f64..10.0) {
        let ab = relative_rating(a, b).unwrap() as f64;
        let ba = relative_rating(b, a).unwrap() as f64;
        // each factor carries at most 0.5 of rounding error
        let bound = 0.5 * (ab + ba + 1.0) + 0.25;
        prop_assert!((ab * ba - 10_000.0).abs() <= bound, "{ab} x {ba}");
    }

    #[test]
    fn what_if_is_additive(a in -2.0f64..2.0, b in -2.0f64..2.0, k in 0usize..29) {
        let f = fx();
        let nodes = f.sample.tree().preorder();
        let node = nodes[1 + k % (nodes.len() - 1)].as_str();
        let whole = what_if(&f.h, node, a + b).unwrap();
        let parts = what_if(&f.h, node, a).unwrap() + what_if(&f.h, node, b).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-12 * (1.0 + a.abs() + b.abs()));
    }

    #[test]
    fn loyalty_target_is_reached(t in 0.01f64..=1.0) {
        let curve = loyalty_curve(&fx().own, OutcomeKind::Recommend, 8).unwrap();
        match value_target_for_loyalty(&curve, t).unwrap() {
            LoyaltyTarget::Score(s) => prop_assert!(curve.at(s) >= t),
            LoyaltyTarget::Unattainable { max_proportion } => prop_assert!(max_proportion < t),
        }
    }

    #[test]
    fn retention_never_grows(n0 in 0.0f64..5000.0, rate in 0.0f64..0.999, k in 0u32..40) {
        let a = retention_projection(n0, rate, k).unwrap();
        let b = retention_projection(n0, rate, k + 1).unwrap();
        prop_assert!(b <= a);
    }

    #[test]
    fn value_map_band_is_inclusive(q in 50.0f64..150.0, p in 50.0f64..150.0, band in 0.0f64..10.0) {
        let z = value_map(&[("s".into(), q, p)], band).unwrap()[0].zone;
        let excess = q - (200.0 - p);
        let want = if excess.abs() <= band {
            ValueZone::FairValue
        } else if excess > 0.0 {
            ValueZone::SuperiorValue
        } else {
            ValueZone::InferiorValue
        };
        prop_assert_eq!(z, want);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn node_mean_ignores_respondent_order(rot in 0usize..2000) {
        let s = &fx().sample;
        let mut rs = s.respondents().to_vec();
        rs.rotate_left(rot);
        let rotated = SurveySample::new(s.tree().clone(), rs, "us").unwrap();
        for node in ["worth_what_paid_for", "billing", "price"] {
            let a = node_mean(s, node).unwrap();
            let b = node_mean(&rotated, node).unwrap();
            prop_assert!((a.mean - b.mean).abs() < 1e-12);
            prop_assert!((a.half_width - b.half_width).abs() < 1e-12);
        }
    }
}

#[test]
fn what_if_composes_along_the_path() {
    let f = fx();
    let tree = f.sample.tree();
    for id in tree.preorder() {
        let Some(parent) = tree.parent(id.as_str()) else {
            continue;
        };
        if parent == tree.root() {
            continue;
        }
        let c = f.h.coefficient_in_parent(id.as_str()).unwrap();
        let child = what_if(&f.h, id.as_str(), 0.7).unwrap();
        let via_parent = c * what_if(&f.h, parent.as_str(), 0.7).unwrap();
        assert!((child - via_parent).abs() < 1e-12, "{id}");
        let product: f64 = path_to_root(tree, id.as_str())
            .unwrap()
            .iter()
            .take_while(|n| *n != tree.root())
            .map(|n| f.h.coefficient_in_parent(n.as_str()).unwrap())
            .product();
        assert!((path_slope(&f.h, id.as_str()).unwrap() - product).abs() < 1e-12);
    }
}

#[test]
fn path_to_root_follows_parent_edges() {
    let tree = auto_tree();
    for id in tree.preorder() {
        let path = path_to_root(&tree, id.as_str()).unwrap();
        assert!(path.len() <= tree.height());
        assert_eq!(path.last().unwrap(), tree.root());
        for w in path.windows(2) {
            assert_eq!(tree.parent(w[0].as_str()), Some(&w[1]));
        }
    }
}

#[test]
fn priorities_cover_every_scorable_leaf() {
    let f = fx();
    for scope in [PriorityScope::Attributes, PriorityScope::AllNodes] {
        let p = rank_priorities(&f.h, &f.own, &f.comp, scope);
        let ranked: BTreeSet<_> = p.ranked.iter().map(|e| e.node.clone()).collect();
        assert_eq!(ranked.len(), p.ranked.len(), "no duplicates");
        let expected: BTreeSet<_> = match scope {
            PriorityScope::Attributes => f.sample.tree().leaves().into_iter().collect(),
            PriorityScope::AllNodes => f.sample.tree().preorder().into_iter().skip(1).collect(),
        };
        assert_eq!(ranked, expected);
        assert!(p.excluded.is_empty());
        assert!(p.ranked.iter().all(|e| e.score >= 0.0));
        assert!(p.ranked.windows(2).all(|w| w[0].score >= w[1].score));
    }
}

#[test]
fn fitting_order_does_not_matter() {
    let f = fx();
    let tree = f.sample.tree();
    let mut order = tree.internal_nodes();
    order.reverse();
    order.rotate_left(3);
    let seq = fit_hierarchy_in_order(&f.sample, tree, &order);
    assert_eq!(seq.models().len(), f.h.models().len());
    for (id, m) in f.h.models() {
        let other = seq.model(id.as_str()).unwrap();
        assert_eq!(m.fit.intercept.to_bits(), other.fit.intercept.to_bits());
        for (c, v) in &m.fit.coefficients {
            assert_eq!(v.to_bits(), other.fit.coefficients[c].to_bits(), "{id}/{c}");
        }
    }
}

#[test]
fn split_partitions_the_sample() {
    let f = fx();
    assert_eq!(f.own.len() + f.comp.len(), f.sample.len());
    let ids: BTreeSet<_> = f
        .own
        .respondents()
        .iter()
        .chain(f.comp.respondents())
        .map(|r| r.id.clone())
        .collect();
    assert_eq!(ids.len(), f.sample.len());
}

#[test]
fn empty_competitors_leave_relative_cells_unavailable() {
    let f = fx();
    let none = f.sample.filter(|_| false);
    let t = profile_table(&f.h, &f.own, &none, "worth_what_paid_for").unwrap();
    assert!(t
        .rows
        .iter()
        .all(|r| r.relative_rating.is_none() && r.competitor_mean.is_none()));
    assert!(t.parent_relative.is_none());
    assert!(matches!(
        cva(&f.h, &f.own, &none),
        Err(AnalyticsError::NoCompetitorRatings(_))
    ));
}

#[test]
fn top_box_hides_the_spread() {
    use SatisfactionCategory::*;
    let mut ratings = vec![Excellent; 60];
    ratings.extend([Good; 35]);
    ratings.extend([Fair; 5]);
    let both: BTreeSet<_> = [Good, Excellent].into();
    assert!((top_box_rate(&ratings, &both).unwrap() - 95.0).abs() < 1e-12);
    assert!((top_box_rate(&ratings, &[Excellent].into()).unwrap() - 60.0).abs() < 1e-12);
    assert_eq!(top_box_rate(&[Poor; 10], &both).unwrap(), 0.0);
    assert!(top_box_rate(&ratings, &[Fair, Excellent].into()).is_err());
    assert!(top_box_rate(&[], &both).is_err());
}

#[test]
fn own_point_on_the_band_edge_is_fair() {
    let pts = value_map(
        &[
            ("us".into(), 96.0, 101.0),
            ("a".into(), 110.0, 100.0),
            ("b".into(), 100.0, 100.0),
        ],
        3.0,
    )
    .unwrap();
    assert_eq!(pts[0].zone, ValueZone::FairValue);
    assert_eq!(pts[1].zone, ValueZone::SuperiorValue);
    assert_eq!(pts[2].zone, ValueZone::FairValue);
}
