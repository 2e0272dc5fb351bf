//! Rendering of profile tables, priorities, loyalty and value-map sections.
//!
//! A [`Report`] is computed once and rendered as plain text, markdown,
//! JSON records or plot-data CSV. Every number passes through
//! [`crate::rounding`].

use std::collections::BTreeMap;

use serde::Serialize;

use crate::cvm_analytics::{
    all_profile_tables, cva, loyalty_curve, rank_priorities, supplier_value_points, value_map,
    value_target_for_loyalty, what_if_with_bounds, AnalyticsError, LoyaltyCurve, LoyaltyTarget,
    Priorities, PriorityScope, ProfileTable, ValueMapPoint, ValueZone, WhatIfPrediction,
    DEFAULT_LOYALTY_THRESHOLD, DEFAULT_VALUE_MAP_BAND,
};
use crate::ls_engine::FittedHierarchy;
use crate::nps_metrics::{NpsResult, NpsVsCva};
use crate::rounding::{fmt_fixed, fmt_mean, percent};
use crate::survey_store::{node_mean, split_by_supplier, OutcomeKind, SurveySample};
use crate::value_tree::NodeId;

const UNAVAILABLE: &str = "n/a";
const PRIORITIES_SHOWN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Align {
    Left,
    Right,
}

/// Minimal table model rendered as aligned text or markdown.
#[derive(Debug, Clone)]
pub struct Table {
    pub headers: Vec<String>,
    pub align: Vec<Align>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: &[&str], align: &[Align]) -> Self {
        assert_eq!(headers.len(), align.len());
        Table {
            headers: headers.iter().map(|s| s.to_string()).collect(),
            align: align.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.headers.len(), "row width");
        self.rows.push(row);
    }

    fn widths(&self) -> Vec<usize> {
        (0..self.headers.len())
            .map(|c| {
                std::iter::once(&self.headers[c])
                    .chain(self.rows.iter().map(|r| &r[c]))
                    .map(|s| s.chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let widths = self.widths();
        let line = |cells: &[String]| -> String {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .zip(&self.align)
                .map(|((s, &w), a)| {
                    let pad = w - s.chars().count();
                    match a {
                        Align::Left => format!("{s}{}", " ".repeat(pad)),
                        Align::Right => format!("{}{s}", " ".repeat(pad)),
                    }
                })
                .collect();
            parts.join("  ").trim_end().to_string()
        };
        let mut out = line(&self.headers);
        out.push('\n');
        let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
        out.push_str(&rule.join("  "));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let row = |cells: &[String]| format!("| {} |\n", cells.join(" | "));
        let mut out = row(&self.headers);
        let rule: Vec<String> = self
            .align
            .iter()
            .map(|a| match a {
                Align::Left => "---".to_string(),
                Align::Right => "---:".to_string(),
            })
            .collect();
        out.push_str(&format!("|{}|\n", rule.join("|")));
        for r in &self.rows {
            out.push_str(&row(r));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub loyalty_threshold: u8,
    pub outcome: OutcomeKind,
    pub target_loyalty: Option<f64>,
    pub band: f64,
    pub what_if: Vec<(NodeId, f64)>,
    pub scope: PriorityScope,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            loyalty_threshold: DEFAULT_LOYALTY_THRESHOLD,
            outcome: OutcomeKind::Recommend,
            target_loyalty: None,
            band: DEFAULT_VALUE_MAP_BAND,
            what_if: Vec::new(),
            scope: PriorityScope::Attributes,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LoyaltySection {
    pub curve: LoyaltyCurve,
    pub current_score: f64,
    pub current_proportion: f64,
    pub target: Option<f64>,
    pub required: Option<LoyaltyTarget>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValueMapSection {
    pub quality_node: NodeId,
    pub price_node: NodeId,
    pub band: f64,
    pub points: Vec<ValueMapPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tree_name: String,
    pub root: NodeId,
    pub root_label: String,
    pub own_supplier: String,
    pub own_n: usize,
    pub competitor_n: usize,
    pub tables: Vec<ProfileTable>,
    pub cva: Option<i64>,
    pub priority_scope: PriorityScope,
    pub priorities: Option<Priorities>,
    pub loyalty: Option<LoyaltySection>,
    pub value_map: Option<ValueMapSection>,
    pub what_if: Vec<WhatIfPrediction>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub labels: BTreeMap<NodeId, String>,
}

impl Report {
    pub fn label<'a>(&'a self, id: &'a NodeId) -> &'a str {
        self.labels.get(id).map_or(id.as_str(), String::as_str)
    }
}

/// Compute every report section. Sections that cannot be computed from the
/// data become warnings; invalid options are errors.
pub fn build_report(
    sample: &SurveySample,
    hierarchy: &FittedHierarchy,
    opts: &ReportOptions,
) -> Result<Report, AnalyticsError> {
    let tree = hierarchy.tree().clone();
    let root = tree.root().clone();
    let (own, comp) = split_by_supplier(sample);
    let mut warnings = Vec::new();

    for (node, why) in hierarchy.unfit() {
        warnings.push(format!("no model for `{node}`: {why}"));
    }
    if comp.is_empty() {
        warnings.push("competitor sample is empty; relative ratings are unavailable".into());
    }

    let mut tables = Vec::new();
    for t in all_profile_tables(hierarchy, &own, &comp) {
        match t {
            Ok(t) => tables.push(t),
            Err(AnalyticsError::MissingModel(_)) => {}
            Err(e) => warnings.push(format!("profile table skipped: {e}")),
        }
    }

    let cva = if comp.is_empty() {
        None
    } else {
        match cva(hierarchy, &own, &comp) {
            Ok(v) => Some(v),
            Err(e) => {
                warnings.push(format!("CVA unavailable: {e}"));
                None
            }
        }
    };

    let priorities = if comp.is_empty() {
        None
    } else {
        Some(rank_priorities(hierarchy, &own, &comp, opts.scope))
    };

    if let Some(t) = opts.target_loyalty {
        if !(t > 0.0 && t <= 1.0) {
            return Err(AnalyticsError::InvalidTarget(t));
        }
    }
    let loyalty = match loyalty_curve(&own, opts.outcome, opts.loyalty_threshold) {
        Ok(curve) => {
            let current = node_mean(&own, root.as_str())?.mean;
            let required = opts
                .target_loyalty
                .map(|t| value_target_for_loyalty(&curve, t))
                .transpose()?;
            Some(LoyaltySection {
                current_proportion: curve.at(current),
                current_score: current,
                target: opts.target_loyalty,
                required,
                curve,
            })
        }
        Err(AnalyticsError::InvalidThreshold(t)) => {
            return Err(AnalyticsError::InvalidThreshold(t))
        }
        Err(e) => {
            warnings.push(format!("loyalty curve unavailable: {e}"));
            None
        }
    };

    if !(opts.band >= 0.0) {
        return Err(AnalyticsError::NegativeBand(opts.band));
    }
    let value_map = match tree.children(root.as_str()) {
        [q, p] if !comp.is_empty() => {
            let pts = supplier_value_points(sample, q.as_str(), p.as_str())?;
            Some(ValueMapSection {
                quality_node: q.clone(),
                price_node: p.clone(),
                band: opts.band,
                points: value_map(&pts, opts.band)?,
            })
        }
        [_, _] => None,
        _ => {
            warnings.push("value map needs a root with exactly two drivers".into());
            None
        }
    };

    let mut what_if = Vec::new();
    for (node, delta) in &opts.what_if {
        let w = what_if_with_bounds(hierarchy, &own, node.as_str(), *delta)?;
        warnings.extend(w.warnings.iter().cloned());
        what_if.push(w);
    }

    Ok(Report {
        tree_name: tree.name().to_string(),
        root_label: tree.label(root.as_str()).to_string(),
        root,
        own_supplier: sample.own_supplier().to_string(),
        own_n: own.len(),
        competitor_n: comp.len(),
        tables,
        cva,
        priority_scope: opts.scope,
        priorities,
        loyalty,
        value_map,
        what_if,
        warnings,
        labels: tree
            .nodes()
            .iter()
            .map(|n| (n.id.clone(), n.label.clone()))
            .collect(),
    })
}

fn opt_mean(m: Option<&crate::survey_store::MeanWithHalfWidth>) -> String {
    m.map_or(UNAVAILABLE.to_string(), |m| fmt_mean(m.mean))
}

fn opt_int(v: Option<i64>) -> String {
    v.map_or(UNAVAILABLE.to_string(), |v| v.to_string())
}

/// One profile table in the customary layout: drivers, then the parent row
/// carrying R² and, at the root, the CVA.
pub fn profile_table_grid(t: &ProfileTable) -> Table {
    let mut table = Table::new(
        &[
            "Driver",
            "Impact weight (%)",
            "Our company",
            "Competitors",
            "Relative rating (%)",
        ],
        &[
            Align::Left,
            Align::Right,
            Align::Right,
            Align::Right,
            Align::Right,
        ],
    );
    for r in &t.rows {
        table.push(vec![
            r.label.clone(),
            r.impact_weight.to_string(),
            fmt_mean(r.own_mean.mean),
            opt_mean(r.competitor_mean.as_ref()),
            opt_int(r.relative_rating),
        ]);
    }
    let relative = match (t.is_root, t.parent_relative) {
        (true, Some(v)) => format!("CVA = {v}"),
        (true, None) => format!("CVA = {UNAVAILABLE}"),
        (false, v) => opt_int(v),
    };
    table.push(vec![
        t.parent_label.clone(),
        format!("(R² = {}%)", percent(t.r_squared)),
        fmt_mean(t.parent_own_mean.mean),
        opt_mean(t.parent_competitor_mean.as_ref()),
        relative,
    ]);
    table
}

fn table_caption(t: &ProfileTable) -> String {
    format!(
        "Mean ratings ± {} (largest 95% half-width); model n = {}",
        fmt_fixed(t.max_half_width(), 1),
        t.model_n
    )
}

fn priorities_grid(r: &Report, p: &Priorities) -> Table {
    let mut table = Table::new(
        &["Rank", "Driver", "Path slope", "Gap", "Score"],
        &[
            Align::Right,
            Align::Left,
            Align::Right,
            Align::Right,
            Align::Right,
        ],
    );
    for (i, e) in p.ranked.iter().take(PRIORITIES_SHOWN).enumerate() {
        table.push(vec![
            (i + 1).to_string(),
            r.label(&e.node).to_string(),
            fmt_fixed(e.path_slope, 3),
            fmt_fixed(e.gap, 2),
            fmt_fixed(e.score, 3),
        ]);
    }
    table
}

fn loyalty_grid(l: &LoyaltySection) -> Table {
    let mut table = Table::new(
        &["Value score", "Respondents", "Observed (%)", "Smoothed (%)"],
        &[Align::Right, Align::Right, Align::Right, Align::Right],
    );
    for (k, (score, smooth)) in l.curve.points.iter().enumerate() {
        table.push(vec![
            fmt_fixed(*score, 0),
            l.curve.bin_counts[k].to_string(),
            percent(l.curve.raw_proportions[k]).to_string(),
            percent(*smooth).to_string(),
        ]);
    }
    table
}

fn value_map_grid(v: &ValueMapSection) -> Table {
    let mut table = Table::new(
        &["Supplier", "Relative quality", "Relative price", "Zone"],
        &[Align::Left, Align::Right, Align::Right, Align::Left],
    );
    for p in &v.points {
        table.push(vec![
            p.supplier.clone(),
            fmt_fixed(p.relative_quality, 0),
            fmt_fixed(p.relative_price, 0),
            zone_name(p.zone).to_string(),
        ]);
    }
    table
}

pub fn zone_name(z: ValueZone) -> &'static str {
    match z {
        ValueZone::SuperiorValue => "superior value",
        ValueZone::FairValue => "fair value",
        ValueZone::InferiorValue => "inferior value",
    }
}

fn outcome_phrase(o: OutcomeKind) -> &'static str {
    match o {
        OutcomeKind::Recommend => "recommend",
        OutcomeKind::Repurchase => "repurchase",
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Style {
    Text,
    Markdown,
}

fn render(r: &Report, style: Style) -> String {
    let heading = |level: usize, s: &str| match style {
        Style::Text => {
            let rule = if level == 1 { '=' } else { '-' };
            format!("{s}\n{}\n\n", rule.to_string().repeat(s.chars().count()))
        }
        Style::Markdown => format!("{} {s}\n\n", "#".repeat(level)),
    };
    let grid = |t: &Table| match style {
        Style::Text => t.to_text(),
        Style::Markdown => t.to_markdown(),
    };

    let mut out = heading(1, &format!("Customer value report: {}", r.tree_name));
    out.push_str(&format!(
        "Own supplier: {} (n = {}); competitors: n = {}\n\n",
        r.own_supplier, r.own_n, r.competitor_n
    ));

    for t in &r.tables {
        out.push_str(&heading(2, &format!("Profile: {}", t.parent_label)));
        out.push_str(&grid(&profile_table_grid(t)));
        out.push('\n');
        out.push_str(&table_caption(t));
        out.push_str("\n\n");
    }

    out.push_str(&heading(2, "Customer Value Added"));
    match r.cva {
        Some(v) => out.push_str(&format!("CVA = {v}\n\n")),
        None => out.push_str(&format!("CVA = {UNAVAILABLE} (no competitor ratings)\n\n")),
    }

    if !r.what_if.is_empty() {
        out.push_str(&heading(2, "What-if predictions"));
        for w in &r.what_if {
            out.push_str(&format!(
                "{} {}{} -> {} {}{} (≈ {})\n",
                r.label(&w.node),
                if w.delta >= 0.0 { "+" } else { "" },
                fmt_fixed(w.delta, 2),
                r.root_label,
                if w.root_change >= 0.0 { "+" } else { "" },
                fmt_fixed(w.root_change, 3),
                fmt_fixed(w.root_change, 2),
            ));
        }
        out.push('\n');
    }

    let scope = match r.priority_scope {
        PriorityScope::Attributes => "leaf attributes",
        PriorityScope::AllNodes => "all nodes",
    };
    out.push_str(&heading(2, &format!("Improvement priorities ({scope})")));
    match &r.priorities {
        Some(p) if !p.ranked.is_empty() => {
            out.push_str(&grid(&priorities_grid(r, p)));
            out.push('\n');
            if let Some(top) = p.ranked.first() {
                out.push_str(&format!("Focus first on: {}\n\n", r.label(&top.node)));
            }
        }
        _ => out.push_str(&format!("{UNAVAILABLE} (no competitor ratings)\n\n")),
    }

    if let Some(l) = &r.loyalty {
        out.push_str(&heading(
            2,
            &format!(
                "Loyalty curve (very willing to {}: rating >= {})",
                outcome_phrase(l.curve.outcome),
                l.curve.threshold
            ),
        ));
        out.push_str(&grid(&loyalty_grid(l)));
        out.push('\n');
        out.push_str(&format!(
            "Current Value score {} corresponds to {}% very willing to {}\n",
            fmt_mean(l.current_score),
            percent(l.current_proportion),
            outcome_phrase(l.curve.outcome)
        ));
        if let (Some(t), Some(req)) = (l.target, l.required) {
            match req {
                LoyaltyTarget::Score(s) => out.push_str(&format!(
                    "Target {}%: required Value score ≈ {}\n",
                    percent(t),
                    fmt_mean(s)
                )),
                LoyaltyTarget::Unattainable { max_proportion } => out.push_str(&format!(
                    "Target {}%: unattainable (curve maximum {}%)\n",
                    percent(t),
                    percent(max_proportion)
                )),
            }
        }
        out.push('\n');
    }

    if let Some(v) = &r.value_map {
        out.push_str(&heading(
            2,
            &format!("Value map (fair-value band ± {})", fmt_fixed(v.band, 1)),
        ));
        out.push_str(&grid(&value_map_grid(v)));
        out.push('\n');
    }

    let trimmed = out.trim_end().len();
    out.truncate(trimmed);
    out.push('\n');
    out
}

pub fn render_text(r: &Report) -> String {
    render(r, Style::Text)
}

pub fn render_markdown(r: &Report) -> String {
    render(r, Style::Markdown)
}

pub fn render_records(r: &Report) -> String {
    let mut s = serde_json::to_string_pretty(r).expect("report serializes");
    s.push('\n');
    s
}

/// Plot-data CSVs as `(file name, contents)` pairs.
pub fn plot_data(r: &Report) -> Vec<(String, String)> {
    let mut files = Vec::new();
    if let Some(l) = &r.loyalty {
        let mut s = String::from("value_score,respondents,observed,smoothed\n");
        for (k, (score, smooth)) in l.curve.points.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                fmt_fixed(*score, 0),
                l.curve.bin_counts[k],
                fmt_fixed(l.curve.raw_proportions[k], 6),
                fmt_fixed(*smooth, 6)
            ));
        }
        files.push(("loyalty_curve.csv".to_string(), s));
    }
    if let Some(v) = &r.value_map {
        let mut s = String::from("supplier,relative_quality,relative_price,zone\n");
        for p in &v.points {
            s.push_str(&format!(
                "{},{},{},{}\n",
                p.supplier,
                fmt_fixed(p.relative_quality, 0),
                fmt_fixed(p.relative_price, 0),
                zone_name(p.zone).replace(' ', "_")
            ));
        }
        files.push(("value_map.csv".to_string(), s));
    }
    let mut s =
        String::from("parent,driver,impact_weight,own_mean,competitor_mean,relative_rating\n");
    for t in &r.tables {
        for row in &t.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                t.parent,
                row.driver,
                row.impact_weight,
                fmt_fixed(row.own_mean.mean, 4),
                row.competitor_mean
                    .map_or(String::new(), |m| fmt_fixed(m.mean, 4)),
                row.relative_rating.map_or(String::new(), |v| v.to_string()),
            ));
        }
    }
    files.push(("profile_tables.csv".to_string(), s));
    files
}

/// The NPS line followed by the side-by-side comparison with CVA.
pub fn render_nps_text(cmp: &NpsVsCva, style_markdown: bool) -> String {
    let avail = |a: crate::nps_metrics::Availability| match a {
        crate::nps_metrics::Availability::Absent => "absent",
        crate::nps_metrics::Availability::Present => "present",
    };
    let mut table = Table::new(
        &["Metric", "Value", "Competitive benchmark", "Drill-down"],
        &[Align::Left, Align::Right, Align::Left, Align::Left],
    );
    table.push(vec![
        "NPS".into(),
        cmp.nps.nps_display(),
        avail(cmp.competitive.nps).into(),
        avail(cmp.drill_down.nps).into(),
    ]);
    table.push(vec![
        "CVA".into(),
        cmp.cva.to_string(),
        avail(cmp.competitive.cva).into(),
        format!(
            "{} ({} profile tables)",
            avail(cmp.drill_down.cva),
            cmp.profile_levels
        ),
    ]);
    let mut out = format!("{}\n\n", cmp.nps);
    out.push_str(&format!(
        "Own respondents: {}; competitor respondents: {}\n\n",
        cmp.own_n, cmp.competitor_n
    ));
    out.push_str(&if style_markdown {
        table.to_markdown()
    } else {
        table.to_text()
    });
    out
}

pub fn nps_histogram_csv(n: &NpsResult) -> String {
    let mut s = String::from("rating,count,segment\n");
    for (k, c) in n.rating_histogram.iter().enumerate() {
        let seg = match k {
            9..=10 => "promoter",
            7..=8 => "passive",
            _ => "detractor",
        };
        s.push_str(&format!("{k},{c},{seg}\n"));
    }
    s
}
