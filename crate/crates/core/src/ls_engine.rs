//! Least-squares core and the hierarchical model fitter.
//!
//! [`fit_linear`] solves ordinary least squares with an intercept through a
//! Householder QR factorization of the design matrix. Survey regressors are
//! strongly correlated, so the normal equations are never formed here.
//!
//! [`fit_hierarchy`] runs one regression per internal tree node: the node's
//! observed rating on its children's observed ratings, with listwise
//! deletion scoped to that node. Models never read each other, so they are
//! fitted in parallel and the result does not depend on evaluation order.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rounding::percent;
use crate::survey_store::SurveySample;
use crate::value_tree::{NodeId, ValueTree};

pub const INTERCEPT_NAME: &str = "(intercept)";

/// Relative size below which a QR pivot counts as zero.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LsError {
    #[error("column `{name}` has {got} values, response has {expected}")]
    DimensionMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("insufficient observations: need at least {needed}, have {got}")]
    InsufficientObservations { needed: usize, got: usize },
    #[error("singular design: column `{column}` is linearly dependent on [{}]", .depends_on.join(", "))]
    Singular {
        column: String,
        depends_on: Vec<String>,
    },
    #[error("response is constant; R² is undefined")]
    ConstantResponse,
    #[error("non-finite value in `{0}`")]
    NonFinite(String),
    #[error("duplicate regressor name `{0}`")]
    DuplicateName(String),
}

impl LsError {
    /// Every column named by a singularity error (dependent column first).
    pub fn dependent_columns(&self) -> Vec<&str> {
        match self {
            LsError::Singular { column, depends_on } => std::iter::once(column.as_str())
                .chain(depends_on.iter().map(String::as_str))
                .collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub coefficients: BTreeMap<String, f64>,
    pub r_squared: f64,
    pub n: usize,
    pub residual_sd: f64,
}

impl LinearFit {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.coefficients.get(name).copied()
    }
}

/// OLS of `y` on the named columns plus an intercept.
pub fn fit_linear<S, V>(y: &[f64], columns: &[(S, V)]) -> Result<LinearFit, LsError>
where
    S: AsRef<str>,
    V: AsRef<[f64]>,
{
    let n = y.len();
    let p = columns.len() + 1;
    for (i, (name, values)) in columns.iter().enumerate() {
        let name = name.as_ref();
        if name == INTERCEPT_NAME || columns[..i].iter().any(|(s, _)| s.as_ref() == name) {
            return Err(LsError::DuplicateName(name.to_string()));
        }
        if values.as_ref().len() != n {
            return Err(LsError::DimensionMismatch {
                name: name.to_string(),
                expected: n,
                got: values.as_ref().len(),
            });
        }
        if values.as_ref().iter().any(|v| !v.is_finite()) {
            return Err(LsError::NonFinite(name.to_string()));
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(LsError::NonFinite("response".into()));
    }
    if n < p + 1 {
        return Err(LsError::InsufficientObservations {
            needed: p + 1,
            got: n,
        });
    }

    let names: Vec<&str> = std::iter::once(INTERCEPT_NAME)
        .chain(columns.iter().map(|(s, _)| s.as_ref()))
        .collect();

    // Column-major design matrix, intercept first.
    let mut a: Vec<Vec<f64>> = Vec::with_capacity(p);
    a.push(vec![1.0; n]);
    a.extend(columns.iter().map(|(_, v)| v.as_ref().to_vec()));
    let col_norms: Vec<f64> = a.iter().map(|c| norm(c)).collect();

    let qr = HouseholderQr::factor(a);
    for j in 0..p {
        let scale = col_norms[j].max(f64::MIN_POSITIVE);
        if qr.r[j][j].abs() <= RANK_TOLERANCE * scale {
            return Err(LsError::Singular {
                column: names[j].to_string(),
                depends_on: qr
                    .dependence(j)
                    .into_iter()
                    .map(|k| names[k].to_string())
                    .collect(),
            });
        }
    }

    let beta = qr.solve(y);

    let mean_y = y.iter().sum::<f64>() / n as f64;
    let mut sse = 0.0;
    let mut sst = 0.0;
    for i in 0..n {
        let mut fitted = beta[0];
        for (j, (_, col)) in columns.iter().enumerate() {
            fitted += beta[j + 1] * col.as_ref()[i];
        }
        sse += (y[i] - fitted).powi(2);
        sst += (y[i] - mean_y).powi(2);
    }
    if sst <= 0.0 {
        return Err(LsError::ConstantResponse);
    }
    let r_squared = (1.0 - sse / sst).clamp(0.0, 1.0);
    let residual_sd = (sse / (n - p) as f64).sqrt();

    Ok(LinearFit {
        intercept: beta[0],
        coefficients: names[1..]
            .iter()
            .zip(&beta[1..])
            .map(|(k, v)| (k.to_string(), *v))
            .collect(),
        r_squared,
        n,
        residual_sd,
    })
}

fn norm(v: &[f64]) -> f64 {
    // scaled to avoid overflow on large columns
    let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if m == 0.0 {
        return 0.0;
    }
    m * v.iter().map(|x| (x / m).powi(2)).sum::<f64>().sqrt()
}

/// Householder QR of a tall column-major matrix.
struct HouseholderQr {
    /// Reflector vectors, one per column, each of length n - j.
    reflectors: Vec<Vec<f64>>,
    /// Upper-triangular factor, row-major p x p.
    r: Vec<Vec<f64>>,
}

impl HouseholderQr {
    fn factor(mut a: Vec<Vec<f64>>) -> Self {
        let p = a.len();
        let n = a[0].len();
        let mut reflectors = Vec::with_capacity(p);
        for j in 0..p {
            let x = &a[j][j..];
            let alpha = norm(x);
            let mut v = x.to_vec();
            let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
            v[0] += sign * alpha;
            let vnorm = norm(&v);
            if vnorm > 0.0 {
                for vi in &mut v {
                    *vi /= vnorm;
                }
            }
            for col in a.iter_mut().skip(j) {
                apply_reflector(&v, &mut col[j..]);
            }
            debug_assert_eq!(a[j].len(), n);
            reflectors.push(v);
        }
        let r = (0..p)
            .map(|i| (0..p).map(|j| if j >= i { a[j][i] } else { 0.0 }).collect())
            .collect();
        HouseholderQr { reflectors, r }
    }

    fn solve(&self, y: &[f64]) -> Vec<f64> {
        let p = self.r.len();
        let mut qty = y.to_vec();
        for (j, v) in self.reflectors.iter().enumerate() {
            apply_reflector(v, &mut qty[j..]);
        }
        back_substitute(&self.r, &qty[..p], p)
    }

    /// Earlier columns that column `j` is a combination of, given that its
    /// pivot vanished.
    fn dependence(&self, j: usize) -> Vec<usize> {
        let rhs: Vec<f64> = (0..j).map(|i| self.r[i][j]).collect();
        let w = back_substitute(&self.r, &rhs, j);
        let scale = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        (0..j)
            .filter(|&k| scale > 0.0 && w[k].abs() > 1e-8 * scale)
            .collect()
    }
}

fn apply_reflector(v: &[f64], x: &mut [f64]) {
    let dot: f64 = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= 2.0 * dot * vi;
    }
}

/// Solve the leading `k x k` upper-triangular system.
fn back_substitute(r: &[Vec<f64>], b: &[f64], k: usize) -> Vec<f64> {
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = b[i];
        for j in i + 1..k {
            s -= r[i][j] * x[j];
        }
        x[i] = s / r[i][i];
    }
    x
}

// ---------------------------------------------------------------------------
// Hierarchy
// ---------------------------------------------------------------------------

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("node `{0}` is not in the tree")]
    UnknownNode(NodeId),
    #[error("node `{0}` is a leaf and has no model")]
    NotInternal(NodeId),
    #[error("node `{node}`: {complete} complete case(s), need at least {needed}")]
    InsufficientCases {
        node: NodeId,
        complete: usize,
        needed: usize,
    },
    #[error("node `{node}`: {source}")]
    Fit {
        node: NodeId,
        #[source]
        source: LsError,
    },
}

/// Regression of one internal node on its children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeModel {
    pub node: NodeId,
    /// Children in tree order.
    pub children: Vec<NodeId>,
    pub fit: LinearFit,
    /// `round(100 * coefficient)` per child.
    pub impact_weights: BTreeMap<NodeId, i64>,
    /// Children whose fitted coefficient is negative.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub negative_coefficients: Vec<NodeId>,
}

impl NodeModel {
    pub fn coefficient(&self, child: &str) -> Option<f64> {
        self.fit.coefficient(child)
    }

    pub fn impact_weight(&self, child: &str) -> Option<i64> {
        self.impact_weights.get(child).copied()
    }
}

/// Regress `node` on its children using respondents who rated all of them.
pub fn fit_node_model(
    sample: &SurveySample,
    tree: &ValueTree,
    node: &str,
) -> Result<NodeModel, ModelError> {
    let tnode = tree
        .node(node)
        .ok_or_else(|| ModelError::UnknownNode(NodeId::new(node)))?;
    if tnode.children.is_empty() {
        return Err(ModelError::NotInternal(tnode.id.clone()));
    }
    let children = &tnode.children;
    let mut y = Vec::new();
    let mut cols: Vec<(&str, Vec<f64>)> =
        children.iter().map(|c| (c.as_str(), Vec::new())).collect();
    'resp: for r in sample.respondents() {
        let Some(target) = r.rating(node) else {
            continue;
        };
        let mut row = Vec::with_capacity(children.len());
        for c in children {
            match r.rating(c.as_str()) {
                Some(v) => row.push(f64::from(v)),
                None => continue 'resp,
            }
        }
        y.push(f64::from(target));
        for (col, v) in cols.iter_mut().zip(row) {
            col.1.push(v);
        }
    }
    let needed = children.len() + 2;
    if y.len() < needed {
        return Err(ModelError::InsufficientCases {
            node: tnode.id.clone(),
            complete: y.len(),
            needed,
        });
    }
    let fit = fit_linear(&y, &cols).map_err(|source| ModelError::Fit {
        node: tnode.id.clone(),
        source,
    })?;
    Ok(node_model_from_fit(tnode.id.clone(), children.clone(), fit))
}

pub(crate) fn node_model_from_fit(
    node: NodeId,
    children: Vec<NodeId>,
    fit: LinearFit,
) -> NodeModel {
    let mut impact_weights = BTreeMap::new();
    let mut negative = Vec::new();
    for c in &children {
        let b = fit.coefficient(c.as_str()).unwrap_or(0.0);
        impact_weights.insert(c.clone(), percent(b));
        if b < 0.0 {
            negative.push(c.clone());
        }
    }
    NodeModel {
        node,
        children,
        fit,
        impact_weights,
        negative_coefficients: negative,
    }
}

/// One model per fit-able internal node, plus the reasons others failed.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedHierarchy {
    tree: Arc<ValueTree>,
    models: BTreeMap<NodeId, NodeModel>,
    unfit: BTreeMap<NodeId, String>,
}

impl FittedHierarchy {
    pub fn tree(&self) -> &Arc<ValueTree> {
        &self.tree
    }

    pub fn models(&self) -> &BTreeMap<NodeId, NodeModel> {
        &self.models
    }

    pub fn model(&self, node: &str) -> Option<&NodeModel> {
        self.models.get(node)
    }

    pub fn unfit(&self) -> &BTreeMap<NodeId, String> {
        &self.unfit
    }

    /// Coefficient of `child` in its parent's model.
    pub fn coefficient_in_parent(&self, child: &str) -> Option<f64> {
        let parent = self.tree.parent(child)?;
        self.model(parent.as_str())?.coefficient(child)
    }

    /// Machine-readable document.
    pub fn to_document(&self) -> HierarchyDocument {
        HierarchyDocument {
            tree: self.tree.name().to_string(),
            root: self.tree.root().clone(),
            models: self
                .tree
                .internal_nodes()
                .iter()
                .filter_map(|id| self.models.get(id).cloned())
                .collect(),
            unfit: self
                .unfit
                .iter()
                .map(|(node, reason)| UnfitNode {
                    node: node.clone(),
                    reason: reason.clone(),
                })
                .collect(),
        }
    }

    /// Rebuild from a document, checking it against `tree`.
    pub fn from_document(doc: HierarchyDocument, tree: Arc<ValueTree>) -> Result<Self, ModelError> {
        let mut models = BTreeMap::new();
        for m in doc.models {
            let node = tree
                .node(m.node.as_str())
                .ok_or_else(|| ModelError::UnknownNode(m.node.clone()))?;
            if node.children.is_empty() {
                return Err(ModelError::NotInternal(m.node.clone()));
            }
            models.insert(m.node.clone(), m);
        }
        let unfit = doc.unfit.into_iter().map(|u| (u.node, u.reason)).collect();
        Ok(FittedHierarchy {
            tree,
            models,
            unfit,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyDocument {
    pub tree: String,
    pub root: NodeId,
    pub models: Vec<NodeModel>,
    #[serde(default)]
    pub unfit: Vec<UnfitNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnfitNode {
    pub node: NodeId,
    pub reason: String,
}

/// Fit every internal node; per-node failures are recorded, never fatal.
pub fn fit_hierarchy(sample: &SurveySample, tree: &Arc<ValueTree>) -> FittedHierarchy {
    let results: Vec<(NodeId, Result<NodeModel, ModelError>)> = tree
        .internal_nodes()
        .into_par_iter()
        .map(|id| {
            let r = fit_node_model(sample, tree, id.as_str());
            (id, r)
        })
        .collect();
    assemble(tree.clone(), results)
}

/// Sequential variant fitting nodes in the given order.
pub fn fit_hierarchy_in_order(
    sample: &SurveySample,
    tree: &Arc<ValueTree>,
    order: &[NodeId],
) -> FittedHierarchy {
    let results = order
        .iter()
        .filter(|id| tree.is_internal(id.as_str()))
        .map(|id| (id.clone(), fit_node_model(sample, tree, id.as_str())))
        .collect();
    assemble(tree.clone(), results)
}

fn assemble(
    tree: Arc<ValueTree>,
    results: Vec<(NodeId, Result<NodeModel, ModelError>)>,
) -> FittedHierarchy {
    let mut models = BTreeMap::new();
    let mut unfit = BTreeMap::new();
    for (id, r) in results {
        match r {
            Ok(m) => {
                models.insert(id, m);
            }
            Err(e) => {
                unfit.insert(id, e.to_string());
            }
        }
    }
    FittedHierarchy {
        tree,
        models,
        unfit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 + 0.5 * v).collect();
        let fit = fit_linear(&y, &[("x", &x)]).unwrap();
        assert!((fit.intercept - 2.0).abs() < 1e-12);
        assert!((fit.coefficient("x").unwrap() - 0.5).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(fit.n, 10);
        assert!(fit.residual_sd < 1e-12);
    }

    #[test]
    fn duplicated_column_is_singular() {
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        let z: Vec<f64> = x.iter().map(|v| v * v).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 + v).collect();
        let err = fit_linear(&y, &[("x", &x), ("z", &z), ("x_copy", &x)]).unwrap_err();
        assert_eq!(err.dependent_columns(), vec!["x_copy", "x"]);
    }

    #[test]
    fn constant_column_depends_on_intercept() {
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        let c = vec![7.0; 10];
        let err = fit_linear(&x, &[("c", &c)]).unwrap_err();
        assert_eq!(err.dependent_columns(), vec!["c", INTERCEPT_NAME]);
    }

    #[test]
    fn too_few_rows() {
        let x = [1.0, 2.0];
        let err = fit_linear(&[1.0, 2.0], &[("x", &x)]).unwrap_err();
        assert_eq!(err, LsError::InsufficientObservations { needed: 3, got: 2 });
    }

    #[test]
    fn mismatched_and_constant_response() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!(matches!(
            fit_linear(&[1.0, 2.0, 3.0], &[("x", &x)]),
            Err(LsError::DimensionMismatch { .. })
        ));
        assert_eq!(
            fit_linear(&[5.0; 4], &[("x", &x)]).unwrap_err(),
            LsError::ConstantResponse
        );
    }

    #[test]
    fn residuals_are_orthogonal_to_columns() {
        let x1: Vec<f64> = (0..50).map(|i| ((i * 7) % 10) as f64 + 1.0).collect();
        let x2: Vec<f64> = (0..50).map(|i| ((i * 3) % 9) as f64 + 1.0).collect();
        let y: Vec<f64> = (0..50)
            .map(|i| 1.0 + 0.4 * x1[i] + 0.3 * x2[i] + ((i * 13) % 5) as f64 * 0.1)
            .collect();
        let fit = fit_linear(&y, &[("a", &x1), ("b", &x2)]).unwrap();
        let resid: Vec<f64> = (0..50)
            .map(|i| {
                y[i] - fit.intercept - fit.coefficients["a"] * x1[i] - fit.coefficients["b"] * x2[i]
            })
            .collect();
        for col in [&vec![1.0; 50], &x1, &x2] {
            let dot: f64 = col.iter().zip(&resid).map(|(a, b)| a * b).sum();
            assert!(dot.abs() / 50.0 < 1e-8);
        }
    }
}
