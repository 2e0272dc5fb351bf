mod common;

use common::*;
use cvm_core::ls_engine::{fit_hierarchy, FittedHierarchy, HierarchyDocument};
use cvm_core::survey_store::{
    ingest_responses, read_survey_records, write_survey_csv, write_survey_records,
};
use cvm_core::value_tree::{parse_tree_spec, validate_tree, NodeKind, TreeNode, ValueTree};
use proptest::prelude::*;

/// A valid tree from a parent vector: node `i` hangs under `parents[i - 1] % i`.
fn tree_from_parents(parents: &[usize]) -> Vec<TreeNode> {
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); parents.len() + 1];
    for (i, p) in parents.iter().enumerate() {
        children[p % (i + 1)].push(i + 1);
    }
    // internal nodes need at least two children
    let mut n = children.len();
    for k in 0..children.len() {
        while !children[k].is_empty() && children[k].len() < 2 || (k == 0 && children[0].len() < 2)
        {
            children[k].push(n);
            children.push(Vec::new());
            n += 1;
        }
    }
    let name = |i: usize| format!("n{i}");
    (0..children.len())
        .map(|i| {
            let kind = if i == 0 {
                NodeKind::Root
            } else if children[i].is_empty() {
                NodeKind::Attribute
            } else if children[0].contains(&i) {
                NodeKind::Driver
            } else {
                NodeKind::Subprocess
            };
            let kids: Vec<String> = children[i].iter().map(|&c| name(c)).collect();
            let refs: Vec<&str> = kids.iter().map(String::as_str).collect();
            TreeNode::new(&name(i), &format!("Node {i}"), kind, &refs)
        })
        .collect()
}

fn kind_str(k: NodeKind) -> &'static str {
    match k {
        NodeKind::Root => "root",
        NodeKind::Driver => "driver",
        NodeKind::Subprocess => "subprocess",
        NodeKind::Attribute => "attribute",
    }
}

fn render(root: &str, nodes: &[TreeNode]) -> String {
    let mut s = format!("name = \"t\"\nroot = \"{root}\"\n");
    for n in nodes {
        let kids: Vec<String> = n.children.iter().map(|c| format!("\"{c}\"")).collect();
        s.push_str(&format!(
            "\n[[node]]\nid = \"{}\"\nlabel = \"{}\"\nkind = \"{}\"\nchildren = [{}]\n",
            n.id,
            n.label,
            kind_str(n.kind),
            kids.join(", ")
        ));
    }
    s
}

proptest! {
    #[test]
    fn serialize_then_parse_is_identity(parents in prop::collection::vec(0usize..1000, 0..25)) {
        let tree = ValueTree::new("t", "n0".into(), tree_from_parents(&parents)).unwrap();
        let text = tree.to_toml();
        let back = parse_tree_spec(&text).unwrap();
        prop_assert_eq!(back.to_toml(), text);
        prop_assert_eq!(back.preorder(), tree.preorder());
        prop_assert_eq!(parse_tree_spec(&back.to_toml()).unwrap(), back);
    }

    #[test]
    fn parser_admits_only_valid_trees(
        parents in prop::collection::vec(0usize..1000, 0..15),
        op in 0usize..7,
        a in 0usize..100,
        b in 0usize..100,
    ) {
        let mut nodes = tree_from_parents(&parents);
        let n = nodes.len();
        let (i, j) = (a % n, b % n);
        match op {
            0 => nodes[i].id = nodes[j].id.clone(),
            1 => nodes[i].children.push("ghost".into()),
            2 => { let id = nodes[i].id.clone(); nodes[j].children.push(id); }
            3 => nodes[i].kind = NodeKind::Attribute,
            4 => nodes[i].kind = NodeKind::Root,
            5 => { nodes.remove(i); }
            _ => { let c = nodes[i].children.pop(); if let Some(c) = c { nodes[j].children.push(c); } }
        }
        if let Ok(tree) = parse_tree_spec(&render("n0", &nodes)) {
            prop_assert!(validate_tree(&tree).is_empty());
        }
    }
}

#[test]
fn fixture_trees_are_canonical() {
    for name in ["auto_tree.toml", "billing_tree.toml"] {
        let text = read_fixture(name);
        let tree = parse_tree_spec(&text).unwrap();
        assert_eq!(tree.to_toml(), text, "{name}");
        assert!(validate_tree(&tree).is_empty());
    }
}

#[test]
fn survey_csv_round_trips_byte_for_byte() {
    let text = read_fixture("auto_survey.csv");
    let sample = ingest_responses(text.as_bytes(), auto_tree(), "us")
        .unwrap()
        .sample;
    let mut out = Vec::new();
    write_survey_csv(&sample, &mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), text);
}

#[test]
fn survey_records_round_trip_field_for_field() {
    let sample = auto_sample();
    let mut buf = Vec::new();
    write_survey_records(&sample, &mut buf).unwrap();
    let back = read_survey_records(&buf[..], sample.tree().clone(), "us").unwrap();
    assert_eq!(back.respondents(), sample.respondents());
}

#[test]
fn hierarchy_document_round_trips() {
    let sample = auto_sample();
    let h = fit_hierarchy(&sample, sample.tree());
    let json = serde_json::to_string(&h.to_document()).unwrap();
    let doc: HierarchyDocument = serde_json::from_str(&json).unwrap();
    let back = FittedHierarchy::from_document(doc, sample.tree().clone()).unwrap();
    assert_eq!(back.to_document(), h.to_document());
}
