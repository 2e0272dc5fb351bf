#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use cvm_core::market_sim::{GroundTruth, SupplierProfile, SupplierSpec, WillingnessLink};
use cvm_core::survey_store::{ingest_responses, SurveySample};
use cvm_core::value_tree::{parse_tree_spec, NodeId, NodeKind, TreeNode, ValueTree};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

pub fn auto_tree() -> Arc<ValueTree> {
    Arc::new(parse_tree_spec(&read_fixture("auto_tree.toml")).unwrap())
}

pub fn auto_sample() -> SurveySample {
    let text = read_fixture("auto_survey.csv");
    ingest_responses(text.as_bytes(), auto_tree(), "us")
        .unwrap()
        .sample
}

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

fn design(cols: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            std::iter::once(1.0)
                .chain(cols.iter().map(|c| c[i]))
                .collect()
        })
        .collect()
}

fn gram(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = x[0].len();
    let mut g = vec![vec![0.0; p]; p];
    for row in x {
        for a in 0..p {
            for b in 0..p {
                g[a][b] += row[a] * row[b];
            }
        }
    }
    g
}

/// Brute-force normal equations: `[intercept, coef_1, ..]`.
pub fn normal_equations(y: &[f64], cols: &[Vec<f64>]) -> Vec<f64> {
    let x = design(cols, y.len());
    let g = gram(&x);
    let p = g.len();
    let xty: Vec<f64> = (0..p)
        .map(|a| x.iter().zip(y).map(|(r, v)| r[a] * v).sum())
        .collect();
    solve(g, xty)
}

/// Classical standard errors `sqrt(s² (XᵀX)⁻¹_jj)` matching [`normal_equations`].
pub fn standard_errors(y: &[f64], cols: &[Vec<f64>]) -> Vec<f64> {
    let beta = normal_equations(y, cols);
    let x = design(cols, y.len());
    let n = y.len();
    let p = beta.len();
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(r, v)| {
            let fit: f64 = r.iter().zip(&beta).map(|(a, b)| a * b).sum();
            (v - fit).powi(2)
        })
        .sum();
    let s2 = sse / (n - p) as f64;
    let g = gram(&x);
    (0..p)
        .map(|j| {
            let mut e = vec![0.0; p];
            e[j] = 1.0;
            (s2 * solve(g.clone(), e)[j]).sqrt()
        })
        .collect()
}

pub fn two_driver_tree() -> ValueTree {
    ValueTree::new(
        "two drivers",
        "value".into(),
        vec![
            TreeNode::new("value", "Value", NodeKind::Root, &["quality", "price"]),
            TreeNode::new("quality", "Quality", NodeKind::Attribute, &[]),
            TreeNode::new("price", "Price", NodeKind::Attribute, &[]),
        ],
    )
    .unwrap()
}

fn ids(pairs: &[(&str, f64)]) -> BTreeMap<NodeId, f64> {
    pairs.iter().map(|(k, v)| (NodeId::new(*k), *v)).collect()
}

/// Value = 1 + 0.51 Quality + 0.35 Price + noise, equal intercepts for all
/// suppliers.
pub fn planted_truth(seed: u64, n: usize, value_noise: f64) -> GroundTruth {
    let own = SupplierProfile {
        leaf_means: ids(&[("quality", 7.0), ("price", 6.8)]),
        intercepts: ids(&[("value", 1.0)]),
    };
    let comp = SupplierProfile {
        leaf_means: ids(&[("quality", 7.3), ("price", 6.9)]),
        intercepts: ids(&[("value", 1.0)]),
    };
    GroundTruth {
        tree: two_driver_tree(),
        seed,
        own_supplier: "us".into(),
        suppliers: vec![
            SupplierSpec {
                label: "us".into(),
                n: n / 2,
                profile: "own".into(),
            },
            SupplierSpec {
                label: "them".into(),
                n: n - n / 2,
                profile: "competitors".into(),
            },
        ],
        profiles: [("own".to_string(), own), ("competitors".to_string(), comp)].into(),
        coefficients: [(
            NodeId::new("value"),
            ids(&[("quality", 0.51), ("price", 0.35)]),
        )]
        .into(),
        noise_sd: ids(&[("value", value_noise), ("quality", 1.0), ("price", 1.0)]),
        halo_sd: 0.8,
        decision_maker_share: 0.7,
        willingness_link: WillingnessLink {
            threshold: 8,
            probability: vec![0.02, 0.04, 0.08, 0.15, 0.25, 0.4, 0.55, 0.75, 0.9, 0.97],
        },
    }
}
