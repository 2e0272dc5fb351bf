//! Survey respondents, file ingestion and per-node descriptive statistics.
//!
//! # Survey file format
//!
//! Comma-separated text with a header row. Fixed leading columns
//! `respondent_id,role,supplier`, then one column per tree node holding an
//! integer rating 1..=10 (empty = not rated), then `outcome_recommend` and
//! `outcome_repurchase` holding 0..=10 or empty. `role` is
//! `decision_maker` or `user`. Node columns may appear in any order and may
//! be a subset of the tree; [`write_survey_csv`] always writes every node in
//! tree pre-order.
//!
//! The record export ([`write_survey_records`]) is JSON Lines with one
//! object per respondent carrying the same fields.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value_tree::{NodeId, ValueTree};

/// Normal-approximation 95% multiplier used for every half-width.
pub const HALF_WIDTH_Z: f64 = 1.96;

pub const NODE_RATING_MIN: u8 = 1;
pub const NODE_RATING_MAX: u8 = 10;
pub const OUTCOME_RATING_MAX: u8 = 10;

const FIXED_COLUMNS: [&str; 3] = ["respondent_id", "role", "supplier"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    DecisionMaker,
    User,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::DecisionMaker => "decision_maker",
            Role::User => "user",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "decision_maker" => Some(Role::DecisionMaker),
            "user" => Some(Role::User),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Recommend,
    Repurchase,
}

impl OutcomeKind {
    pub const ALL: [OutcomeKind; 2] = [OutcomeKind::Recommend, OutcomeKind::Repurchase];

    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeKind::Recommend => "recommend",
            OutcomeKind::Repurchase => "repurchase",
        }
    }

    pub fn column(self) -> &'static str {
        match self {
            OutcomeKind::Recommend => "outcome_recommend",
            OutcomeKind::Repurchase => "outcome_repurchase",
        }
    }
}

impl fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Respondent {
    pub id: String,
    pub role: Role,
    pub supplier: String,
    #[serde(default)]
    pub node_ratings: BTreeMap<NodeId, u8>,
    #[serde(default)]
    pub outcome_ratings: BTreeMap<OutcomeKind, u8>,
}

impl Respondent {
    pub fn rating(&self, node: &str) -> Option<u8> {
        self.node_ratings.get(node).copied()
    }

    pub fn outcome(&self, kind: OutcomeKind) -> Option<u8> {
        self.outcome_ratings.get(&kind).copied()
    }

    /// Check rating ranges and node membership against `tree`.
    pub fn check(&self, tree: &ValueTree) -> Result<(), String> {
        for (node, &r) in &self.node_ratings {
            if !tree.contains(node.as_str()) {
                return Err(format!("unknown node `{node}`"));
            }
            if !(NODE_RATING_MIN..=NODE_RATING_MAX).contains(&r) {
                return Err(format!("rating {r} for `{node}` outside 1..=10"));
            }
        }
        for (kind, &r) in &self.outcome_ratings {
            if r > OUTCOME_RATING_MAX {
                return Err(format!("outcome {kind} rating {r} outside 0..=10"));
            }
        }
        Ok(())
    }
}

/// Respondents rated against one tree, with the analyst's own supplier label.
#[derive(Debug, Clone)]
pub struct SurveySample {
    tree: Arc<ValueTree>,
    respondents: Vec<Respondent>,
    own_supplier: String,
}

impl SurveySample {
    /// Validates every respondent against the tree.
    pub fn new(
        tree: Arc<ValueTree>,
        respondents: Vec<Respondent>,
        own_supplier: impl Into<String>,
    ) -> Result<Self, SurveyError> {
        for (i, r) in respondents.iter().enumerate() {
            r.check(&tree).map_err(|message| {
                SurveyError::Rows(vec![RowError {
                    row: i + 1,
                    message,
                }])
            })?;
        }
        Ok(SurveySample {
            tree,
            respondents,
            own_supplier: own_supplier.into(),
        })
    }

    pub fn tree(&self) -> &Arc<ValueTree> {
        &self.tree
    }

    pub fn respondents(&self) -> &[Respondent] {
        &self.respondents
    }

    pub fn len(&self) -> usize {
        self.respondents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.respondents.is_empty()
    }

    pub fn own_supplier(&self) -> &str {
        &self.own_supplier
    }

    /// True when no respondent is a customer of the own supplier.
    pub fn competitor_only(&self) -> bool {
        !self
            .respondents
            .iter()
            .any(|r| r.supplier == self.own_supplier)
    }

    /// Distinct supplier labels, sorted.
    pub fn suppliers(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .respondents
            .iter()
            .map(|r| r.supplier.as_str())
            .collect();
        set.into_iter().map(str::to_string).collect()
    }

    /// Sub-sample keeping respondents matching `keep`.
    pub fn filter(&self, keep: impl Fn(&Respondent) -> bool) -> SurveySample {
        SurveySample {
            tree: self.tree.clone(),
            respondents: self
                .respondents
                .iter()
                .filter(|r| keep(r))
                .cloned()
                .collect(),
            own_supplier: self.own_supplier.clone(),
        }
    }

    /// Ratings of `node` from respondents who gave one.
    pub fn ratings(&self, node: &str) -> Vec<u8> {
        self.respondents
            .iter()
            .filter_map(|r| r.rating(node))
            .collect()
    }
}

/// Own customers versus everyone else (all competitors pooled).
pub fn split_by_supplier(sample: &SurveySample) -> (SurveySample, SurveySample) {
    let own = sample.own_supplier.clone();
    (
        sample.filter(|r| r.supplier == own),
        sample.filter(|r| r.supplier != own),
    )
}

/// Respondents of a single named supplier.
pub fn supplier_subsample(sample: &SurveySample, supplier: &str) -> SurveySample {
    sample.filter(|r| r.supplier == supplier)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanWithHalfWidth {
    pub mean: f64,
    /// `1.96 * sd / sqrt(n)` with the sample (n - 1) standard deviation.
    pub half_width: f64,
    pub n: usize,
}

impl MeanWithHalfWidth {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let half_width = if n > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            HALF_WIDTH_Z * (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        Some(MeanWithHalfWidth {
            mean,
            half_width,
            n,
        })
    }
}

/// Mean rating of `node` with missing ratings excluded.
pub fn node_mean(sample: &SurveySample, node: &str) -> Result<MeanWithHalfWidth, SurveyError> {
    let values: Vec<f64> = sample.ratings(node).into_iter().map(f64::from).collect();
    MeanWithHalfWidth::from_values(&values).ok_or_else(|| SurveyError::NoRatings(NodeId::new(node)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based data row (the header is row 0).
    pub row: usize,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {}: {}", self.row, self.message)
    }
}

#[derive(Debug, Error)]
pub enum SurveyError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("unknown node column `{0}`")]
    UnknownColumn(String),
    #[error("{} rejected row(s): {}", .0.len(), .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Rows(Vec<RowError>),
    #[error("no ratings for node `{0}`")]
    NoRatings(NodeId),
    #[error("record {line}: {message}")]
    Record { line: usize, message: String },
}

/// Result of a successful ingest.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub sample: SurveySample,
    pub warnings: Vec<String>,
}

enum Column {
    Id,
    Role,
    Supplier,
    Node(NodeId),
    Outcome(OutcomeKind),
}

/// Read a survey CSV. Every bad row is collected before failing.
pub fn ingest_responses(
    reader: impl Read,
    tree: Arc<ValueTree>,
    own_supplier: &str,
) -> Result<Ingested, SurveyError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| SurveyError::Header(e.to_string()))?
        .clone();

    let mut columns = Vec::with_capacity(headers.len());
    let mut seen = BTreeSet::new();
    for h in headers.iter() {
        if !seen.insert(h.to_string()) {
            return Err(SurveyError::Header(format!("duplicate column `{h}`")));
        }
        let col = match h {
            "respondent_id" => Column::Id,
            "role" => Column::Role,
            "supplier" => Column::Supplier,
            "outcome_recommend" => Column::Outcome(OutcomeKind::Recommend),
            "outcome_repurchase" => Column::Outcome(OutcomeKind::Repurchase),
            node if tree.contains(node) => Column::Node(NodeId::new(node)),
            other => return Err(SurveyError::UnknownColumn(other.to_string())),
        };
        columns.push(col);
    }
    for required in FIXED_COLUMNS {
        if !seen.contains(required) {
            return Err(SurveyError::Header(format!("missing column `{required}`")));
        }
    }

    let mut respondents = Vec::new();
    let mut errors = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                errors.push(RowError {
                    row,
                    message: format!("malformed row: {e}"),
                });
                continue;
            }
        };
        match parse_row(&record, &columns) {
            Ok(r) => respondents.push(r),
            Err(message) => errors.push(RowError { row, message }),
        }
    }
    if !errors.is_empty() {
        return Err(SurveyError::Rows(errors));
    }

    let mut warnings = Vec::new();
    if respondents.is_empty() {
        warnings.push("survey file has a header but no respondents".to_string());
    } else if !respondents.iter().any(|r| r.supplier == own_supplier) {
        warnings.push(format!(
            "no respondents for own supplier `{own_supplier}`; sample is competitor-only"
        ));
    }
    Ok(Ingested {
        sample: SurveySample {
            tree,
            respondents,
            own_supplier: own_supplier.to_string(),
        },
        warnings,
    })
}

fn parse_row(record: &csv::StringRecord, columns: &[Column]) -> Result<Respondent, String> {
    if record.len() != columns.len() {
        return Err(format!(
            "malformed row: expected {} fields, found {}",
            columns.len(),
            record.len()
        ));
    }
    let mut r = Respondent {
        id: String::new(),
        role: Role::DecisionMaker,
        supplier: String::new(),
        node_ratings: BTreeMap::new(),
        outcome_ratings: BTreeMap::new(),
    };
    for (field, col) in record.iter().zip(columns) {
        match col {
            Column::Id => r.id = field.to_string(),
            Column::Role => {
                r.role = Role::parse(field).ok_or_else(|| format!("unknown role `{field}`"))?
            }
            Column::Supplier => r.supplier = field.to_string(),
            Column::Node(node) => {
                if let Some(v) = parse_rating(field, NODE_RATING_MIN, NODE_RATING_MAX)
                    .map_err(|e| format!("node `{node}`: {e}"))?
                {
                    r.node_ratings.insert(node.clone(), v);
                }
            }
            Column::Outcome(kind) => {
                if let Some(v) = parse_rating(field, 0, OUTCOME_RATING_MAX)
                    .map_err(|e| format!("{}: {e}", kind.column()))?
                {
                    r.outcome_ratings.insert(*kind, v);
                }
            }
        }
    }
    if r.id.is_empty() {
        return Err("malformed row: empty respondent_id".into());
    }
    if r.supplier.is_empty() {
        return Err("malformed row: empty supplier".into());
    }
    Ok(r)
}

fn parse_rating(field: &str, lo: u8, hi: u8) -> Result<Option<u8>, String> {
    if field.is_empty() {
        return Ok(None);
    }
    let v: i64 = field
        .parse()
        .map_err(|_| format!("malformed rating `{field}`"))?;
    if v < i64::from(lo) || v > i64::from(hi) {
        return Err(format!("rating {v} out of range {lo}..={hi}"));
    }
    Ok(Some(v as u8))
}

/// Write the canonical CSV form (all tree nodes, pre-order).
pub fn write_survey_csv(sample: &SurveySample, writer: impl Write) -> Result<(), SurveyError> {
    let nodes = sample.tree.preorder();
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let mut header: Vec<&str> = FIXED_COLUMNS.to_vec();
    header.extend(nodes.iter().map(NodeId::as_str));
    header.extend(OutcomeKind::ALL.iter().map(|k| k.column()));
    w.write_record(&header).map_err(csv_io)?;

    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for r in &sample.respondents {
        row.clear();
        row.push(r.id.clone());
        row.push(r.role.as_str().to_string());
        row.push(r.supplier.clone());
        for n in &nodes {
            row.push(
                r.rating(n.as_str())
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
            );
        }
        for k in OutcomeKind::ALL {
            row.push(r.outcome(k).map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> SurveyError {
    SurveyError::Io(std::io::Error::other(e))
}

/// JSON Lines export, one respondent per line.
pub fn write_survey_records(
    sample: &SurveySample,
    mut writer: impl Write,
) -> Result<(), SurveyError> {
    for r in &sample.respondents {
        serde_json::to_writer(&mut writer, r).map_err(|e| SurveyError::Io(e.into()))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Read the JSON Lines export back.
pub fn read_survey_records(
    reader: impl BufRead,
    tree: Arc<ValueTree>,
    own_supplier: &str,
) -> Result<SurveySample, SurveyError> {
    let mut respondents = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: Respondent = serde_json::from_str(&line).map_err(|e| SurveyError::Record {
            line: i + 1,
            message: e.to_string(),
        })?;
        r.check(&tree).map_err(|message| SurveyError::Record {
            line: i + 1,
            message,
        })?;
        respondents.push(r);
    }
    Ok(SurveySample {
        tree,
        respondents,
        own_supplier: own_supplier.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value_tree::{NodeKind, TreeNode};

    fn tree() -> Arc<ValueTree> {
        Arc::new(
            ValueTree::new(
                "t",
                "v".into(),
                vec![
                    TreeNode::new("v", "Value", NodeKind::Root, &["q", "p"]),
                    TreeNode::new("q", "Quality", NodeKind::Attribute, &[]),
                    TreeNode::new("p", "Price", NodeKind::Attribute, &[]),
                ],
            )
            .unwrap(),
        )
    }

    fn resp(id: usize, supplier: &str, q: u8) -> Respondent {
        Respondent {
            id: id.to_string(),
            role: Role::DecisionMaker,
            supplier: supplier.into(),
            node_ratings: [(NodeId::new("q"), q)].into_iter().collect(),
            outcome_ratings: BTreeMap::new(),
        }
    }

    #[test]
    fn split_counts() {
        let mut rs: Vec<_> = (0..10).map(|i| resp(i, "us", 7)).collect();
        rs.extend((10..15).map(|i| resp(i, "A", 7)));
        rs.extend((15..20).map(|i| resp(i, "B", 7)));
        let s = SurveySample::new(tree(), rs, "us").unwrap();
        let (own, comp) = split_by_supplier(&s);
        assert_eq!((own.len(), comp.len()), (10, 10));

        let s = SurveySample::new(tree(), (0..4).map(|i| resp(i, "A", 7)).collect(), "us").unwrap();
        assert!(s.competitor_only());
        let (own, comp) = split_by_supplier(&s);
        assert_eq!((own.len(), comp.len()), (0, 4));

        let s =
            SurveySample::new(tree(), (0..4).map(|i| resp(i, "us", 7)).collect(), "us").unwrap();
        let (own, comp) = split_by_supplier(&s);
        assert_eq!((own.len(), comp.len()), (4, 0));
    }

    #[test]
    fn means_and_half_widths() {
        let s = SurveySample::new(tree(), vec![resp(0, "us", 7), resp(1, "us", 8)], "us").unwrap();
        let m = node_mean(&s, "q").unwrap();
        assert_eq!(m.mean, 7.5);
        assert_eq!(m.n, 2);
        // sd = sqrt(0.5)
        assert!((m.half_width - 1.96 * 0.5f64.sqrt() / 2f64.sqrt()).abs() < 1e-12);

        let constant = MeanWithHalfWidth::from_values(&[7.4; 100]).unwrap();
        assert!((constant.mean - 7.4).abs() < 1e-12);
        assert!(constant.half_width.abs() < 1e-12);

        assert!(matches!(node_mean(&s, "p"), Err(SurveyError::NoRatings(_))));
    }

    #[test]
    fn ingest_rejects_and_names_rows() {
        let csv = "respondent_id,role,supplier,v,q,p,outcome_recommend,outcome_repurchase\n\
                   r1,decision_maker,us,7,7,8,9,\n\
                   r2,decision_maker,us,7,11,8,9,\n\
                   r3,boss,us,7,7,8,9,\n";
        match ingest_responses(csv.as_bytes(), tree(), "us") {
            Err(SurveyError::Rows(rows)) => {
                assert_eq!(rows.len(), 2);
                assert_eq!(rows[0].row, 2);
                assert!(rows[0].message.contains("out of range"));
                assert_eq!(rows[1].row, 3);
                assert!(rows[1].message.contains("unknown role"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ingest_header_only_warns() {
        let csv = "respondent_id,role,supplier,v,q,p,outcome_recommend,outcome_repurchase\n";
        let ing = ingest_responses(csv.as_bytes(), tree(), "us").unwrap();
        assert_eq!(ing.sample.len(), 0);
        assert_eq!(ing.warnings.len(), 1);
    }

    #[test]
    fn ingest_unknown_column_and_short_row() {
        let csv = "respondent_id,role,supplier,zz\n";
        assert!(matches!(
            ingest_responses(csv.as_bytes(), tree(), "us"),
            Err(SurveyError::UnknownColumn(c)) if c == "zz"
        ));
        let csv = "respondent_id,role,supplier,q\nr1,user,us\n";
        assert!(matches!(
            ingest_responses(csv.as_bytes(), tree(), "us"),
            Err(SurveyError::Rows(rows)) if rows[0].message.contains("malformed")
        ));
    }

    #[test]
    fn csv_and_records_round_trip() {
        let csv = "respondent_id,role,supplier,v,q,p,outcome_recommend,outcome_repurchase\n\
                   r1,decision_maker,us,7,7,8,9,\n\
                   r2,user,A,,6,5,0,3\n";
        let s = ingest_responses(csv.as_bytes(), tree(), "us")
            .unwrap()
            .sample;
        let mut out = Vec::new();
        write_survey_csv(&s, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), csv);

        let mut rec = Vec::new();
        write_survey_records(&s, &mut rec).unwrap();
        let back = read_survey_records(rec.as_slice(), tree(), "us").unwrap();
        assert_eq!(back.respondents(), s.respondents());
    }
}
