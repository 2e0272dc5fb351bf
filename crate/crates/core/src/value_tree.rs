//! Customer Value trees.
//!
//! A tree decomposes the overall Value rating ("worth what paid for") into
//! drivers, sub-processes and rated leaf attributes. Every internal node is
//! later explained by a regression on its children, so the structural rules
//! here (single root, single parent, no cycles, at least two children per
//! internal node) are what make the downstream models well posed.
//!
//! # File format
//!
//! Trees are stored as TOML. The document has a `name`, a `root` pointer and
//! one `[[node]]` table per node:
//!
//! ```toml
//! name = "Automobile purchase"
//! root = "worth_what_paid_for"
//!
//! [[node]]
//! id = "worth_what_paid_for"
//! label = "Worth What Paid For"
//! kind = "root"
//! children = ["quality", "price"]
//! ```
//!
//! `kind` is one of `root`, `driver`, `subprocess`, `attribute`. The
//! canonical serialization lists nodes in pre-order from the root.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of a tree node. Non-empty token of `[A-Za-z0-9_.-]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Whether this id is a usable token (non-empty, no separators).
    pub fn is_well_formed(&self) -> bool {
        !self.0.is_empty()
            && self
                .0
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

impl std::borrow::Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Root,
    Driver,
    Subprocess,
    Attribute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: NodeId,
    pub label: String,
    pub kind: NodeKind,
    #[serde(default)]
    pub children: Vec<NodeId>,
}

impl TreeNode {
    pub fn new(id: &str, label: &str, kind: NodeKind, children: &[&str]) -> Self {
        TreeNode {
            id: NodeId::new(id),
            label: label.to_string(),
            kind,
            children: children.iter().map(|c| NodeId::new(*c)).collect(),
        }
    }
}

/// One broken structural rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub node: NodeId,
    pub rule: Rule,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rule {
    MalformedId,
    DuplicateId,
    MissingRoot,
    RootKindMismatch,
    ExtraRoot,
    DanglingChild(NodeId),
    RepeatedChild(NodeId),
    MultipleParents,
    RootHasParent,
    Cycle,
    Unreachable,
    AttributeWithChildren,
    LeafNotAttribute,
    DegenerateInternal,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::MalformedId => write!(f, "malformed id"),
            Rule::DuplicateId => write!(f, "duplicate id"),
            Rule::MissingRoot => write!(f, "root pointer names no node"),
            Rule::RootKindMismatch => write!(f, "designated root is not of kind root"),
            Rule::ExtraRoot => write!(f, "node of kind root is not the designated root"),
            Rule::DanglingChild(c) => write!(f, "dangling child reference `{c}`"),
            Rule::RepeatedChild(c) => write!(f, "child `{c}` listed twice"),
            Rule::MultipleParents => write!(f, "node has more than one parent"),
            Rule::RootHasParent => write!(f, "root is listed as a child"),
            Rule::Cycle => write!(f, "cycle"),
            Rule::Unreachable => write!(f, "node not reachable from root"),
            Rule::AttributeWithChildren => write!(f, "attribute node has children"),
            Rule::LeafNotAttribute => write!(f, "leaf node is not an attribute"),
            Rule::DegenerateInternal => {
                write!(f, "degenerate internal node (fewer than 2 children)")
            }
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.node, self.rule)
    }
}

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate node id `{0}`")]
    DuplicateId(NodeId),
    #[error("node `{parent}` references unknown child `{child}`")]
    DanglingChild { parent: NodeId, child: NodeId },
    #[error("cycle through node `{0}`")]
    Cycle(NodeId),
    #[error("invalid tree: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl TreeError {
    fn from_violations(violations: Vec<Violation>) -> Self {
        // Surface the most specific error when there is one clear cause.
        for v in &violations {
            match &v.rule {
                Rule::DuplicateId => return TreeError::DuplicateId(v.node.clone()),
                Rule::DanglingChild(c) => {
                    return TreeError::DanglingChild {
                        parent: v.node.clone(),
                        child: c.clone(),
                    }
                }
                Rule::Cycle => return TreeError::Cycle(v.node.clone()),
                _ => {}
            }
        }
        TreeError::Invalid(violations)
    }
}

/// A Customer Value tree. Immutable once built.
///
/// `from_parts` accepts arbitrary (possibly broken) node lists so that
/// [`validate_tree`] can report on them; every other constructor only
/// yields trees with an empty validation report.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTree {
    name: String,
    root: NodeId,
    nodes: Vec<TreeNode>,
    index: HashMap<NodeId, usize>,
    parent: HashMap<NodeId, NodeId>,
}

impl ValueTree {
    pub fn from_parts(name: impl Into<String>, root: NodeId, nodes: Vec<TreeNode>) -> Self {
        let mut index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            index.entry(n.id.clone()).or_insert(i);
        }
        let mut parent = HashMap::new();
        for n in &nodes {
            for c in &n.children {
                parent.entry(c.clone()).or_insert_with(|| n.id.clone());
            }
        }
        ValueTree {
            name: name.into(),
            root,
            nodes,
            index,
            parent,
        }
    }

    /// Build and validate.
    pub fn new(
        name: impl Into<String>,
        root: NodeId,
        nodes: Vec<TreeNode>,
    ) -> Result<Self, TreeError> {
        let tree = Self::from_parts(name, root, nodes);
        let violations = validate_tree(&tree);
        if violations.is_empty() {
            Ok(tree)
        } else {
            Err(TreeError::from_violations(violations))
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn root(&self) -> &NodeId {
        &self.root
    }

    /// Nodes in declaration order.
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn node(&self, id: &str) -> Option<&TreeNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn try_node(&self, id: &str) -> Result<&TreeNode, TreeError> {
        self.node(id)
            .ok_or_else(|| TreeError::UnknownNode(NodeId::new(id)))
    }

    pub fn children(&self, id: &str) -> &[NodeId] {
        self.node(id).map(|n| n.children.as_slice()).unwrap_or(&[])
    }

    pub fn parent(&self, id: &str) -> Option<&NodeId> {
        self.parent.get(id)
    }

    pub fn is_internal(&self, id: &str) -> bool {
        !self.children(id).is_empty()
    }

    pub fn label(&self, id: &str) -> &str {
        self.node(id).map(|n| n.label.as_str()).unwrap_or("")
    }

    /// Node ids in pre-order from the root (children in declared order).
    pub fn preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut seen = HashSet::new();
        let mut stack = vec![self.root.clone()];
        while let Some(id) = stack.pop() {
            if !self.contains(id.as_str()) || !seen.insert(id.clone()) {
                continue;
            }
            for c in self.children(id.as_str()).iter().rev() {
                stack.push(c.clone());
            }
            out.push(id);
        }
        out
    }

    /// Node ids in post-order (every child before its parent).
    pub fn postorder(&self) -> Vec<NodeId> {
        fn visit(t: &ValueTree, id: &NodeId, seen: &mut HashSet<NodeId>, out: &mut Vec<NodeId>) {
            if !t.contains(id.as_str()) || !seen.insert(id.clone()) {
                return;
            }
            for c in t.children(id.as_str()) {
                visit(t, c, seen, out);
            }
            out.push(id.clone());
        }
        let mut out = Vec::with_capacity(self.nodes.len());
        visit(self, &self.root, &mut HashSet::new(), &mut out);
        out
    }

    /// Internal nodes in pre-order.
    pub fn internal_nodes(&self) -> Vec<NodeId> {
        self.preorder()
            .into_iter()
            .filter(|id| self.is_internal(id.as_str()))
            .collect()
    }

    /// Leaf attributes in pre-order.
    pub fn leaves(&self) -> Vec<NodeId> {
        self.preorder()
            .into_iter()
            .filter(|id| !self.is_internal(id.as_str()))
            .collect()
    }

    /// Number of edges between `id` and the root.
    pub fn depth(&self, id: &str) -> Result<usize, TreeError> {
        Ok(path_to_root(self, id)?.len() - 1)
    }

    /// Number of levels (a lone root has height 1).
    pub fn height(&self) -> usize {
        self.preorder()
            .iter()
            .filter_map(|id| self.depth(id.as_str()).ok())
            .max()
            .map_or(0, |d| d + 1)
    }

    /// Canonical TOML document (pre-order node listing).
    pub fn to_toml(&self) -> String {
        let doc = TreeDoc::from(self);
        toml::to_string(&doc).expect("tree document serializes")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeDoc {
    name: String,
    root: NodeId,
    #[serde(default, rename = "node")]
    nodes: Vec<TreeNode>,
}

impl From<&ValueTree> for TreeDoc {
    fn from(t: &ValueTree) -> Self {
        let mut nodes: Vec<TreeNode> = t
            .preorder()
            .iter()
            .filter_map(|id| t.node(id.as_str()).cloned())
            .collect();
        // anything unreachable (only possible for unvalidated trees) goes last
        let listed: HashSet<NodeId> = nodes.iter().map(|n| n.id.clone()).collect();
        nodes.extend(t.nodes.iter().filter(|n| !listed.contains(&n.id)).cloned());
        TreeDoc {
            name: t.name.clone(),
            root: t.root.clone(),
            nodes,
        }
    }
}

impl Serialize for ValueTree {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        TreeDoc::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ValueTree {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = TreeDoc::deserialize(d)?;
        ValueTree::new(doc.name, doc.root, doc.nodes).map_err(serde::de::Error::custom)
    }
}

/// Parse a TOML tree document; only valid trees are returned.
pub fn parse_tree_spec(text: &str) -> Result<ValueTree, TreeError> {
    if text.trim().is_empty() {
        return Err(TreeError::Syntax {
            line: 1,
            column: 1,
            message: "empty document".into(),
        });
    }
    let doc: TreeDoc = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((1, 1));
        TreeError::Syntax {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    ValueTree::new(doc.name, doc.root, doc.nodes)
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Check every structural rule. An empty report means the tree is valid.
pub fn validate_tree(tree: &ValueTree) -> Vec<Violation> {
    let mut out = Vec::new();
    let push = |out: &mut Vec<Violation>, node: &NodeId, rule: Rule| {
        out.push(Violation {
            node: node.clone(),
            rule,
        })
    };

    let mut seen = HashSet::new();
    for n in &tree.nodes {
        if !n.id.is_well_formed() {
            push(&mut out, &n.id, Rule::MalformedId);
        }
        if !seen.insert(n.id.clone()) {
            push(&mut out, &n.id, Rule::DuplicateId);
        }
    }

    match tree.node(tree.root.as_str()) {
        None => push(&mut out, &tree.root, Rule::MissingRoot),
        Some(r) if r.kind != NodeKind::Root => push(&mut out, &tree.root, Rule::RootKindMismatch),
        _ => {}
    }

    let mut parent_count: BTreeMap<&NodeId, usize> = BTreeMap::new();
    for n in &tree.nodes {
        if n.kind == NodeKind::Root && n.id != tree.root {
            push(&mut out, &n.id, Rule::ExtraRoot);
        }
        let mut local = HashSet::new();
        for c in &n.children {
            if !local.insert(c) {
                push(&mut out, &n.id, Rule::RepeatedChild(c.clone()));
                continue;
            }
            if !tree.contains(c.as_str()) {
                push(&mut out, &n.id, Rule::DanglingChild(c.clone()));
                continue;
            }
            *parent_count.entry(c).or_default() += 1;
        }
        match (n.kind, n.children.len()) {
            (NodeKind::Attribute, k) if k > 0 => push(&mut out, &n.id, Rule::AttributeWithChildren),
            (NodeKind::Attribute, _) => {}
            (_, 0) => push(&mut out, &n.id, Rule::LeafNotAttribute),
            (_, 1) => push(&mut out, &n.id, Rule::DegenerateInternal),
            _ => {}
        }
    }
    for (id, count) in &parent_count {
        if **id == tree.root {
            push(&mut out, id, Rule::RootHasParent);
        } else if *count > 1 {
            push(&mut out, id, Rule::MultipleParents);
        }
    }

    // Cycle detection over the whole child graph, not just the root's
    // component, so detached loops are reported as cycles too.
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let mut marks: HashMap<&NodeId, Mark> = HashMap::new();
    let mut cyclic: Vec<NodeId> = Vec::new();
    for start in &tree.nodes {
        if marks.contains_key(&start.id) {
            continue;
        }
        let mut stack: Vec<(&NodeId, usize)> = vec![(&start.id, 0)];
        marks.insert(&start.id, Mark::Open);
        while let Some((id, next)) = stack.pop() {
            let kids = tree.children(id.as_str());
            if next < kids.len() {
                stack.push((id, next + 1));
                let c = &kids[next];
                if !tree.contains(c.as_str()) {
                    continue;
                }
                match marks.get(c) {
                    Some(Mark::Open) => {
                        if !cyclic.contains(c) {
                            cyclic.push(c.clone());
                        }
                    }
                    Some(Mark::Done) => {}
                    None => {
                        marks.insert(c, Mark::Open);
                        stack.push((c, 0));
                    }
                }
            } else {
                marks.insert(id, Mark::Done);
            }
        }
    }
    for c in &cyclic {
        push(&mut out, c, Rule::Cycle);
    }

    if tree.contains(tree.root.as_str()) {
        let reachable: HashSet<NodeId> = tree.preorder().into_iter().collect();
        let mut reported = HashSet::new();
        for n in &tree.nodes {
            if !reachable.contains(&n.id) && reported.insert(n.id.clone()) {
                push(&mut out, &n.id, Rule::Unreachable);
            }
        }
    }
    out
}

/// Ids from `node` up to the root, inclusive at both ends.
pub fn path_to_root(tree: &ValueTree, node: &str) -> Result<Vec<NodeId>, TreeError> {
    let start = tree.try_node(node)?;
    let mut path = vec![start.id.clone()];
    let mut cur = start.id.clone();
    while let Some(p) = tree.parent(cur.as_str()) {
        if path.contains(p) || path.len() > tree.len() {
            return Err(TreeError::Cycle(p.clone()));
        }
        path.push(p.clone());
        cur = p.clone();
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Vec<TreeNode> {
        vec![
            TreeNode::new("v", "Value", NodeKind::Root, &["q", "p"]),
            TreeNode::new("q", "Quality", NodeKind::Driver, &["a", "b"]),
            TreeNode::new("a", "A", NodeKind::Attribute, &[]),
            TreeNode::new("b", "B", NodeKind::Attribute, &[]),
            TreeNode::new("p", "Price", NodeKind::Attribute, &[]),
        ]
    }

    #[test]
    fn valid_tree_has_empty_report() {
        let t = ValueTree::from_parts("t", "v".into(), small());
        assert!(validate_tree(&t).is_empty());
        assert_eq!(t.height(), 3);
        assert_eq!(t.internal_nodes(), vec![NodeId::new("v"), NodeId::new("q")]);
        assert_eq!(t.leaves().len(), 3);
        let post = t.postorder();
        assert_eq!(post.last().unwrap().as_str(), "v");
        assert_eq!(post.first().unwrap().as_str(), "a");
    }

    #[test]
    fn one_child_internal_node_is_degenerate() {
        let mut nodes = small();
        nodes[1].children = vec!["a".into()];
        nodes.retain(|n| n.id.as_str() != "b");
        let t = ValueTree::from_parts("t", "v".into(), nodes);
        let report = validate_tree(&t);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].node.as_str(), "q");
        assert!(report[0].to_string().contains("degenerate internal node"));
    }

    #[test]
    fn duplicate_ids_are_reported() {
        let mut nodes = small();
        nodes.push(TreeNode::new("a", "A again", NodeKind::Attribute, &[]));
        let t = ValueTree::from_parts("t", "v".into(), nodes);
        let report = validate_tree(&t);
        assert!(report
            .iter()
            .any(|v| v.rule == Rule::DuplicateId && v.node.as_str() == "a"));
        assert!(report[0].to_string().contains("duplicate id"));
    }

    #[test]
    fn self_loop_is_a_cycle() {
        let mut nodes = small();
        nodes[1].children.push("q".into());
        let err = ValueTree::new("t", "v".into(), nodes).unwrap_err();
        assert!(matches!(err, TreeError::Cycle(ref id) if id.as_str() == "q"));
    }

    #[test]
    fn dangling_and_kind_rules() {
        let mut nodes = small();
        nodes[1].children.push("zzz".into());
        let err = ValueTree::new("t", "v".into(), nodes).unwrap_err();
        assert!(matches!(err, TreeError::DanglingChild { .. }));

        let mut nodes = small();
        nodes[2].kind = NodeKind::Driver;
        let t = ValueTree::from_parts("t", "v".into(), nodes);
        assert!(validate_tree(&t)
            .iter()
            .any(|v| v.rule == Rule::LeafNotAttribute));

        let mut nodes = small();
        nodes.push(TreeNode::new("orphan", "O", NodeKind::Attribute, &[]));
        let t = ValueTree::from_parts("t", "v".into(), nodes);
        assert_eq!(validate_tree(&t)[0].rule, Rule::Unreachable);

        let mut nodes = small();
        nodes[4].children = vec!["a".into(), "b".into()];
        nodes[4].kind = NodeKind::Driver;
        let t = ValueTree::from_parts("t", "v".into(), nodes);
        assert!(validate_tree(&t)
            .iter()
            .any(|v| v.rule == Rule::MultipleParents));
    }

    #[test]
    fn path_to_root_walks_parents() {
        let t = ValueTree::new("t", "v".into(), small()).unwrap();
        let p: Vec<_> = path_to_root(&t, "a").unwrap();
        assert_eq!(p, vec![NodeId::new("a"), "q".into(), "v".into()]);
        assert_eq!(path_to_root(&t, "v").unwrap(), vec![NodeId::new("v")]);
        assert!(matches!(
            path_to_root(&t, "nope"),
            Err(TreeError::UnknownNode(_))
        ));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match parse_tree_spec("") {
            Err(TreeError::Syntax {
                line: 1, column: 1, ..
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match parse_tree_spec("name = \"x\"\nroot = \n") {
            Err(TreeError::Syntax { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn toml_round_trip() {
        let t = ValueTree::new("t", "v".into(), small()).unwrap();
        let text = t.to_toml();
        let back = parse_tree_spec(&text).unwrap();
        assert_eq!(back.to_toml(), text);
        assert!(text.contains("[[node]]"));
    }
}
