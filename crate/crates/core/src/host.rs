//! Headless stand-in for the visualization host: loaded relations, linked views, filters and
//! the preference assignments that describe them.
//!
//! Every piece of exploration structure (a view's relation, chart kind, role, displayed
//! attributes, current node, window geometry and filters, a relation's source and time column)
//! is mirrored by an implicit preference assignment. Mutations update both sides together, so a
//! snapshot of the assignments plus the dataset sources is enough to rebuild the state.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::assignment::{AssignmentKey, Assignments};
use crate::error::{Error, Result};
use crate::schema::{PreferenceSchema, ScopeLevel};
use crate::value::Value;

/// Preference ids the host keeps in sync with its structure.
pub mod prefs {
    pub const RELATION_SOURCE: &str = "relation.source";
    pub const RELATION_TIME_COLUMN: &str = "relation.time-column";
    pub const VIEW_RELATION: &str = "view.relation";
    pub const VIEW_KIND: &str = "view.kind";
    pub const VIEW_ROLE: &str = "view.role";
    pub const VIEW_ATTRIBUTES: &str = "view.attributes";
    pub const VIEW_CURRENT_NODE: &str = "view.current-node";
    pub const VIEW_WINDOW_GEOMETRY: &str = "view.window-geometry";
    pub const VIEW_FILTERS: &str = "view.filters";

    pub const RELATION_BOUND: [&str; 2] = [RELATION_SOURCE, RELATION_TIME_COLUMN];
    pub const VIEW_BOUND: [&str; 7] = [
        VIEW_RELATION,
        VIEW_KIND,
        VIEW_ROLE,
        VIEW_ATTRIBUTES,
        VIEW_CURRENT_NODE,
        VIEW_WINDOW_GEOMETRY,
        VIEW_FILTERS,
    ];

    pub fn is_host_bound(id: &str) -> bool {
        RELATION_BOUND.contains(&id) || VIEW_BOUND.contains(&id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Text,
    Temporal,
}

impl ColumnKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnKind::Numeric => "numeric",
            ColumnKind::Text => "text",
            ColumnKind::Temporal => "temporal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

/// A loaded dataset. Cells are kept as read; `columns` carries the inferred kinds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub name: String,
    pub source: PathBuf,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<String>>,
    pub time_column: Option<String>,
}

impl Relation {
    pub fn column(&self, name: &str) -> Option<(usize, &Column)> {
        self.columns.iter().enumerate().find(|(_, c)| c.name == name)
    }

    /// Covered date range of the time column, if any.
    pub fn period(&self) -> Option<(NaiveDate, NaiveDate)> {
        let (idx, _) = self.column(self.time_column.as_deref()?)?;
        self.rows
            .iter()
            .filter_map(|row| parse_temporal(&row[idx]))
            .reduce(|(lo, hi), (s, e)| (lo.min(s), hi.max(e)))
    }
}

string_enum!(ViewKind { Table => "table", Pie => "pie", Treemap => "treemap", Temporal => "temporal" });
string_enum!(ViewRole { Master => "master", Detail => "detail" });

/// Reference data item of a view: the root of the relation or one row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CurrentNode {
    #[default]
    Root,
    Row(usize),
}

impl fmt::Display for CurrentNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurrentNode::Root => f.write_str("root"),
            CurrentNode::Row(i) => write!(f, "{i}"),
        }
    }
}

impl FromStr for CurrentNode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "root" {
            return Ok(CurrentNode::Root);
        }
        match s.parse::<usize>() {
            Ok(i) if i.to_string() == s => Ok(CurrentNode::Row(i)),
            _ => Err(format!("current node `{s}` is neither `root` nor a row index")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowGeometry {
    pub x: i32,
    pub y: i32,
    pub width: u32,
    pub height: u32,
}

impl Default for WindowGeometry {
    fn default() -> Self {
        WindowGeometry {
            x: 0,
            y: 0,
            width: 640,
            height: 480,
        }
    }
}

impl fmt::Display for WindowGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x, self.y, self.width, self.height)
    }
}

impl FromStr for WindowGeometry {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || format!("window geometry `{s}` is not x,y,width,height");
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 4 {
            return Err(err());
        }
        Ok(WindowGeometry {
            x: parts[0].parse().map_err(|_| err())?,
            y: parts[1].parse().map_err(|_| err())?,
            width: parts[2].parse().map_err(|_| err())?,
            height: parts[3].parse().map_err(|_| err())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct View {
    pub id: String,
    pub relation: String,
    pub kind: ViewKind,
    pub role: ViewRole,
    pub attributes: Vec<String>,
    pub current_node: CurrentNode,
    pub geometry: WindowGeometry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Range { lo: f64, hi: f64 },
    Values(BTreeSet<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    pub id: String,
    pub view: String,
    pub attribute: String,
    pub criterion: Criterion,
}

/// Wire form of one filter inside the `view.filters` assignment.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilterEntry {
    id: String,
    attribute: String,
    criterion: Criterion,
}

/// Parameters of a new view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewSpec {
    pub id: String,
    pub relation: String,
    pub kind: ViewKind,
    pub role: ViewRole,
}

/// Interaction that changes implicit state.
#[derive(Debug, Clone, PartialEq)]
pub enum ExplorationAction {
    SetCurrentNode { view: String, node: CurrentNode },
    SetAttributes { view: String, attributes: Vec<String> },
    SetFilterRange { view: String, filter: String, attribute: String, lo: f64, hi: f64 },
    SetFilterValues { view: String, filter: String, attribute: String, values: BTreeSet<String> },
    RemoveFilter { view: String, filter: String },
    MoveWindow { view: String, geometry: WindowGeometry },
}

/// Load parameters of a relation, recorded instead of its data.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RelationRef {
    pub name: String,
    pub source: PathBuf,
    pub time_column: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ViewRef {
    pub id: String,
    pub relation: String,
    pub kind: ViewKind,
    pub role: ViewRole,
}

/// Structure needed to re-create relations and views before assignments are applied.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    pub relations: Vec<RelationRef>,
    pub views: Vec<ViewRef>,
}

/// Everything needed to bring a host back to one configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Snapshot {
    pub context: Context,
    pub assignments: Assignments,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApplicationState {
    schema: Arc<PreferenceSchema>,
    relations: BTreeMap<String, Relation>,
    views: BTreeMap<String, View>,
    filters: BTreeMap<String, Filter>,
    assignments: Assignments,
}

pub(crate) fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.'))
}

fn check_identifier(what: &str, s: &str) -> Result<()> {
    if is_identifier(s) {
        Ok(())
    } else {
        Err(Error::validation(what, format!("`{s}` must match [A-Za-z0-9._-]+")))
    }
}

/// `YYYY`, `YYYY-MM` or `YYYY-MM-DD`, as the interval of days it covers.
pub fn parse_temporal(text: &str) -> Option<(NaiveDate, NaiveDate)> {
    let t = text.trim();
    let digits = |s: &str, n: usize| s.len() == n && s.bytes().all(|b| b.is_ascii_digit());
    match t.len() {
        4 if digits(t, 4) => {
            let y = t.parse().ok()?;
            Some((NaiveDate::from_ymd_opt(y, 1, 1)?, NaiveDate::from_ymd_opt(y, 12, 31)?))
        }
        7 if digits(&t[..4], 4) && &t[4..5] == "-" && digits(&t[5..], 2) => {
            let start = NaiveDate::from_ymd_opt(t[..4].parse().ok()?, t[5..].parse().ok()?, 1)?;
            let next = if start.month() == 12 {
                NaiveDate::from_ymd_opt(start.year() + 1, 1, 1)?
            } else {
                NaiveDate::from_ymd_opt(start.year(), start.month() + 1, 1)?
            };
            Some((start, next.pred_opt()?))
        }
        10 => {
            let d = NaiveDate::parse_from_str(t, "%Y-%m-%d").ok()?;
            Some((d, d))
        }
        _ => None,
    }
}

fn infer_kind(cells: &[&str], designated_time: bool) -> ColumnKind {
    if cells.is_empty() {
        return if designated_time { ColumnKind::Temporal } else { ColumnKind::Text };
    }
    if designated_time && cells.iter().all(|c| parse_temporal(c).is_some()) {
        return ColumnKind::Temporal;
    }
    if cells.iter().all(|c| c.trim().len() == 10 && parse_temporal(c).is_some()) {
        return ColumnKind::Temporal;
    }
    if cells
        .iter()
        .all(|c| c.trim().parse::<f64>().map(f64::is_finite).unwrap_or(false))
    {
        return ColumnKind::Numeric;
    }
    ColumnKind::Text
}

/// Reads an RFC 4180 CSV file into a relation. A designated time column is read as temporal
/// when every cell is a year, year-month or full date.
pub fn read_relation(name: &str, path: &Path, time_column: Option<&str>) -> Result<Relation> {
    check_identifier("relation name", name)?;
    let source = std::path::absolute(path).map_err(|e| Error::io(path, e))?;
    let file = std::fs::File::open(&source).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingDataset { path: source.clone() }
        } else {
            Error::io(&source, e)
        }
    })?;
    let csv_err = |message: String| Error::Csv {
        path: source.clone(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(csv_err("no header".into()));
    }
    let mut seen = BTreeSet::new();
    for col in &header {
        if col.is_empty() || col.contains(',') || !col.chars().all(crate::xml::is_xml_char) {
            return Err(csv_err(format!("column name `{col}` is not usable")));
        }
        if !seen.insert(col.as_str()) {
            return Err(csv_err(format!("duplicate column `{col}`")));
        }
    }

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { expected_len, len, .. } => csv_err(format!(
                "ragged row {}: {len} fields, expected {expected_len}",
                i + 1
            )),
            _ => csv_err(e.to_string()),
        })?;
        rows.push(record.iter().map(str::to_owned).collect::<Vec<_>>());
    }

    if let Some(tc) = time_column {
        if !header.iter().any(|c| c == tc) {
            return Err(Error::validation("time column", format!("`{tc}` is not a column")));
        }
    }
    let columns: Vec<Column> = header
        .iter()
        .enumerate()
        .map(|(idx, name)| {
            let cells: Vec<&str> = rows.iter().map(|r| r[idx].as_str()).collect();
            Column {
                name: name.clone(),
                kind: infer_kind(&cells, time_column == Some(name.as_str())),
            }
        })
        .collect();
    if let Some(tc) = time_column {
        if columns.iter().any(|c| c.name == tc && c.kind != ColumnKind::Temporal) {
            return Err(Error::validation(
                "time column",
                format!("`{tc}` does not hold dates"),
            ));
        }
    }

    Ok(Relation {
        name: name.to_owned(),
        source,
        columns,
        rows,
        time_column: time_column.map(str::to_owned),
    })
}

impl ApplicationState {
    /// Fresh state: no data, every application-level preference at its default.
    pub fn new(schema: Arc<PreferenceSchema>) -> Result<Self> {
        for (ids, level) in [
            (&prefs::RELATION_BOUND[..], ScopeLevel::Relation),
            (&prefs::VIEW_BOUND[..], ScopeLevel::View),
        ] {
            for id in ids {
                let def = schema.lookup(id).ok_or_else(|| {
                    Error::validation(format!("<preference id=\"{id}\">"), "schema lacks a host preference")
                })?;
                if !def.applies_at(level) {
                    return Err(Error::validation(
                        format!("<preference id=\"{id}\">"),
                        format!("host preference must apply at {level} scope"),
                    ));
                }
            }
        }
        let assignments = schema
            .preferences()
            .filter(|d| d.applies_at(ScopeLevel::Application))
            .map(|d| (AssignmentKey::application(&d.id), d.default.clone()))
            .collect();
        Ok(ApplicationState {
            schema,
            relations: BTreeMap::new(),
            views: BTreeMap::new(),
            filters: BTreeMap::new(),
            assignments,
        })
    }

    pub fn schema(&self) -> &Arc<PreferenceSchema> {
        &self.schema
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relation> {
        self.relations.values()
    }

    pub fn relation(&self, name: &str) -> Option<&Relation> {
        self.relations.get(name)
    }

    pub fn views(&self) -> impl Iterator<Item = &View> {
        self.views.values()
    }

    pub fn view(&self, id: &str) -> Option<&View> {
        self.views.get(id)
    }

    pub fn filters(&self) -> impl Iterator<Item = &Filter> {
        self.filters.values()
    }

    pub fn assignments(&self) -> &Assignments {
        &self.assignments
    }

    pub fn get(&self, key: &AssignmentKey) -> Option<&Value> {
        self.assignments.get(key)
    }

    /// Loads a CSV file as a new relation named `name` (the file stem when absent).
    pub fn load_dataset(&mut self, path: &Path, name: Option<&str>, time_column: Option<&str>) -> Result<&Relation> {
        let name = match name {
            Some(n) => n.to_owned(),
            None => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
        };
        if self.relations.contains_key(&name) {
            return Err(Error::Conflict(format!("relation `{name}` is already loaded")));
        }
        let relation = read_relation(&name, path, time_column)?;
        self.insert_relation(relation);
        Ok(&self.relations[&name])
    }

    fn insert_relation(&mut self, relation: Relation) {
        let name = relation.name.clone();
        for def in self.schema.preferences().filter(|d| d.applies_at(ScopeLevel::Relation)) {
            if !prefs::is_host_bound(&def.id) {
                self.assignments
                    .insert(AssignmentKey::relation(&name, &def.id), def.default.clone());
            }
        }
        for (key, value) in encode_relation(&relation) {
            self.assignments.insert(key, value);
        }
        self.relations.insert(name, relation);
    }

    /// Opens a view on a loaded relation, showing every column from the root node.
    pub fn open_view(&mut self, spec: ViewSpec) -> Result<&View> {
        check_identifier("view id", &spec.id)?;
        if self.views.contains_key(&spec.id) {
            return Err(Error::Conflict(format!("view `{}` is already open", spec.id)));
        }
        let relation = self
            .relations
            .get(&spec.relation)
            .ok_or_else(|| Error::NotFound(format!("relation `{}`", spec.relation)))?;
        let view = View {
            id: spec.id.clone(),
            relation: spec.relation,
            kind: spec.kind,
            role: spec.role,
            attributes: relation.columns.iter().map(|c| c.name.clone()).collect(),
            current_node: CurrentNode::Root,
            geometry: WindowGeometry::default(),
        };
        for def in self.schema.preferences().filter(|d| d.applies_at(ScopeLevel::View)) {
            if !prefs::is_host_bound(&def.id) {
                self.assignments
                    .insert(AssignmentKey::view(&view.id, &def.id), def.default.clone());
            }
        }
        self.views.insert(view.id.clone(), view);
        self.sync_view(&spec.id);
        Ok(&self.views[&spec.id])
    }

    pub fn close_view(&mut self, id: &str) -> Result<()> {
        self.views
            .remove(id)
            .ok_or_else(|| Error::NotFound(format!("view `{id}`")))?;
        self.filters.retain(|_, f| f.view != id);
        self.assignments
            .retain(|k, _| !(k.scope == ScopeLevel::View && k.instance == id));
        Ok(())
    }

    /// Sets an explicit preference. Host-managed preferences change through
    /// [`mutate_exploration`](Self::mutate_exploration) instead.
    pub fn set_preference(&mut self, key: AssignmentKey, text: &str) -> Result<()> {
        let def = self.schema.get(&key.pref_id)?;
        let value = Value::parse(&def.kind, text).map_err(|_| Error::TypeMismatch {
            pref: key.pref_id.clone(),
            expected: def.kind.to_string(),
            value: text.to_owned(),
        })?;
        self.set_value(key, value)
    }

    pub fn set_value(&mut self, key: AssignmentKey, value: Value) -> Result<()> {
        let def = self.schema.get(&key.pref_id)?;
        if !def.applies_at(key.scope) {
            return Err(Error::ScopeNotApplicable {
                pref: key.pref_id,
                scope: key.scope.to_string(),
            });
        }
        key.check().map_err(|m| Error::validation(key.to_string(), m))?;
        if !value.matches(&def.kind) {
            return Err(Error::TypeMismatch {
                pref: key.pref_id.clone(),
                expected: def.kind.to_string(),
                value: value.canonical(),
            });
        }
        if prefs::is_host_bound(&key.pref_id) {
            return Err(Error::validation(
                key.to_string(),
                "managed by exploration actions, not set directly",
            ));
        }
        self.check_instance(key.scope, &key.instance)?;
        self.assignments.insert(key, value);
        Ok(())
    }

    fn check_instance(&self, scope: ScopeLevel, instance: &str) -> Result<()> {
        match scope {
            ScopeLevel::Application => Ok(()),
            ScopeLevel::Relation if self.relations.contains_key(instance) => Ok(()),
            ScopeLevel::View if self.views.contains_key(instance) => Ok(()),
            level => Err(Error::NotFound(format!("{level} `{instance}`"))),
        }
    }

    /// Applies one interaction, updating the host structure and its implicit assignments together.
    pub fn mutate_exploration(&mut self, action: ExplorationAction) -> Result<()> {
        match action {
            ExplorationAction::SetCurrentNode { view, node } => {
                let target = self.existing_view(&view)?.clone();
                let relation = &self.relations[&target.relation];
                if let CurrentNode::Row(i) = node {
                    if i >= relation.rows.len() {
                        return Err(Error::NotFound(format!(
                            "row {i} in relation `{}` ({} rows)",
                            relation.name,
                            relation.rows.len()
                        )));
                    }
                }
                let mut touched = vec![view.clone()];
                if target.role == ViewRole::Master {
                    touched.extend(
                        self.views
                            .values()
                            .filter(|v| v.role == ViewRole::Detail && v.relation == target.relation)
                            .map(|v| v.id.clone()),
                    );
                }
                for id in touched {
                    if let Some(v) = self.views.get_mut(&id) {
                        v.current_node = node;
                    }
                    self.sync_view(&id);
                }
            }
            ExplorationAction::SetAttributes { view, attributes } => {
                let target = self.existing_view(&view)?;
                let relation = &self.relations[&target.relation];
                let mut seen = BTreeSet::new();
                for a in &attributes {
                    if relation.column(a).is_none() {
                        return Err(Error::NotFound(format!("column `{a}` in relation `{}`", relation.name)));
                    }
                    if !seen.insert(a) {
                        return Err(Error::validation("attributes", format!("`{a}` listed twice")));
                    }
                }
                self.views.get_mut(&view).expect("checked").attributes = attributes;
                self.sync_view(&view);
            }
            ExplorationAction::SetFilterRange { view, filter, attribute, lo, hi } => {
                if !(lo.is_finite() && hi.is_finite()) {
                    return Err(Error::validation("filter range", "bounds must be finite"));
                }
                if lo > hi {
                    return Err(Error::validation(
                        "filter range",
                        format!("lower bound {lo} exceeds upper bound {hi}"),
                    ));
                }
                let lo = if lo == 0.0 { 0.0 } else { lo };
                let hi = if hi == 0.0 { 0.0 } else { hi };
                self.put_filter(view, filter, attribute, Criterion::Range { lo, hi }, true)?;
            }
            ExplorationAction::SetFilterValues { view, filter, attribute, values } => {
                if let Some(bad) = values.iter().find(|v| !v.chars().all(crate::xml::is_xml_char)) {
                    return Err(Error::validation("filter values", format!("`{bad:?}` cannot be stored")));
                }
                self.put_filter(view, filter, attribute, Criterion::Values(values), false)?;
            }
            ExplorationAction::RemoveFilter { view, filter } => {
                self.existing_view(&view)?;
                match self.filters.get(&filter) {
                    Some(f) if f.view == view => {
                        self.filters.remove(&filter);
                        self.sync_view(&view);
                    }
                    _ => return Err(Error::NotFound(format!("filter `{filter}` on view `{view}`"))),
                }
            }
            ExplorationAction::MoveWindow { view, geometry } => {
                self.existing_view(&view)?;
                self.views.get_mut(&view).expect("checked").geometry = geometry;
                self.sync_view(&view);
            }
        }
        Ok(())
    }

    fn existing_view(&self, id: &str) -> Result<&View> {
        self.views
            .get(id)
            .ok_or_else(|| Error::NotFound(format!("view `{id}`")))
    }

    fn put_filter(&mut self, view: String, id: String, attribute: String, criterion: Criterion, numeric: bool) -> Result<()> {
        check_identifier("filter id", &id)?;
        let target = self.existing_view(&view)?;
        let relation = &self.relations[&target.relation];
        let (_, column) = relation
            .column(&attribute)
            .ok_or_else(|| Error::NotFound(format!("column `{attribute}` in relation `{}`", relation.name)))?;
        if numeric && column.kind != ColumnKind::Numeric {
            return Err(Error::validation(
                "filter range",
                format!("column `{attribute}` is not numeric"),
            ));
        }
        if let Some(existing) = self.filters.get(&id) {
            if existing.view != view {
                return Err(Error::Conflict(format!(
                    "filter `{id}` belongs to view `{}`",
                    existing.view
                )));
            }
        }
        self.filters.insert(
            id.clone(),
            Filter {
                id,
                view: view.clone(),
                attribute,
                criterion,
            },
        );
        self.sync_view(&view);
        Ok(())
    }

    /// Rewrites the host-bound assignments of one view from its structure.
    fn sync_view(&mut self, id: &str) {
        let view = &self.views[id];
        let filters: Vec<&Filter> = self.filters.values().filter(|f| f.view == id).collect();
        for (key, value) in encode_view(view, &filters) {
            self.assignments.insert(key, value);
        }
    }

    /// Period covered by the time columns of relations shown in at least one view.
    pub fn displayed_period(&self) -> Option<(NaiveDate, NaiveDate)> {
        let shown: BTreeSet<&str> = self.views.values().map(|v| v.relation.as_str()).collect();
        self.relations
            .values()
            .filter(|r| shown.contains(r.name.as_str()))
            .filter_map(Relation::period)
            .reduce(|(lo, hi), (s, e)| (lo.min(s), hi.max(e)))
    }

    pub fn context(&self) -> Context {
        Context {
            relations: self
                .relations
                .values()
                .map(|r| RelationRef {
                    name: r.name.clone(),
                    source: r.source.clone(),
                    time_column: r.time_column.clone(),
                })
                .collect(),
            views: self
                .views
                .values()
                .map(|v| ViewRef {
                    id: v.id.clone(),
                    relation: v.relation.clone(),
                    kind: v.kind,
                    role: v.role,
                })
                .collect(),
        }
    }

    /// Complete assignment set plus the structure needed to rebuild it. Pure read.
    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            context: self.context(),
            assignments: self.assignments.clone(),
        }
    }

    /// Rebuilds this state from a snapshot, re-reading datasets from their sources.
    /// On error the state is left untouched.
    pub fn restore(&mut self, snapshot: &Snapshot) -> Result<()> {
        let rebuilt = Self::from_snapshot(self.schema.clone(), snapshot)?;
        *self = rebuilt;
        Ok(())
    }

    pub fn from_snapshot(schema: Arc<PreferenceSchema>, snapshot: &Snapshot) -> Result<Self> {
        let mut next = ApplicationState::new(schema)?;
        let ctx = &snapshot.context;

        for r in &ctx.relations {
            if next.relations.contains_key(&r.name) {
                return Err(Error::validation(format!("relation `{}`", r.name), "listed twice"));
            }
            let relation = read_relation(&r.name, &r.source, r.time_column.as_deref())?;
            next.relations.insert(relation.name.clone(), relation);
        }
        for v in &ctx.views {
            check_identifier("view id", &v.id)?;
            if next.views.contains_key(&v.id) {
                return Err(Error::validation(format!("view `{}`", v.id), "listed twice"));
            }
            if !next.relations.contains_key(&v.relation) {
                return Err(Error::NotFound(format!("relation `{}` of view `{}`", v.relation, v.id)));
            }
            next.views.insert(
                v.id.clone(),
                View {
                    id: v.id.clone(),
                    relation: v.relation.clone(),
                    kind: v.kind,
                    role: v.role,
                    attributes: Vec::new(),
                    current_node: CurrentNode::Root,
                    geometry: WindowGeometry::default(),
                },
            );
        }

        for (key, value) in &snapshot.assignments {
            let def = next.schema.get(&key.pref_id)?;
            if !def.applies_at(key.scope) {
                return Err(Error::ScopeNotApplicable {
                    pref: key.pref_id.clone(),
                    scope: key.scope.to_string(),
                });
            }
            key.check().map_err(|m| Error::validation(key.to_string(), m))?;
            next.check_instance(key.scope, &key.instance)?;
            if !value.matches(&def.kind) {
                return Err(Error::TypeMismatch {
                    pref: key.pref_id.clone(),
                    expected: def.kind.to_string(),
                    value: value.canonical(),
                });
            }
        }

        let lookup = |key: AssignmentKey| -> Result<&Value> {
            snapshot
                .assignments
                .get(&key)
                .ok_or_else(|| Error::validation(key.to_string(), "host preference missing from snapshot"))
        };
        let text = |key: AssignmentKey| -> Result<(String, String)> {
            let label = key.to_string();
            Ok((label, lookup(key)?.canonical()))
        };

        let view_ids: Vec<String> = next.views.keys().cloned().collect();
        for id in &view_ids {
            let relation = &next.relations[&next.views[id].relation];

            let (label, attrs) = text(AssignmentKey::view(id, prefs::VIEW_ATTRIBUTES))?;
            let attributes: Vec<String> = if attrs.is_empty() {
                Vec::new()
            } else {
                attrs.split(',').map(str::to_owned).collect()
            };
            if let Some(bad) = attributes.iter().find(|a| relation.column(a).is_none()) {
                return Err(Error::validation(label, format!("`{bad}` is not a column")));
            }

            let (label, node) = text(AssignmentKey::view(id, prefs::VIEW_CURRENT_NODE))?;
            let current_node: CurrentNode = node.parse().map_err(|m| Error::validation(label.clone(), m))?;
            if let CurrentNode::Row(i) = current_node {
                if i >= relation.rows.len() {
                    return Err(Error::validation(label, format!("row {i} does not exist")));
                }
            }

            let (label, geom) = text(AssignmentKey::view(id, prefs::VIEW_WINDOW_GEOMETRY))?;
            let geometry: WindowGeometry = geom.parse().map_err(|m| Error::validation(label, m))?;

            let (label, encoded) = text(AssignmentKey::view(id, prefs::VIEW_FILTERS))?;
            let entries: Vec<FilterEntry> =
                serde_json::from_str(&encoded).map_err(|e| Error::validation(label.clone(), e.to_string()))?;
            for entry in entries {
                check_identifier("filter id", &entry.id)?;
                let column = relation
                    .column(&entry.attribute)
                    .map(|(_, c)| c)
                    .ok_or_else(|| Error::validation(label.clone(), format!("`{}` is not a column", entry.attribute)))?;
                if let Criterion::Range { lo, hi } = entry.criterion {
                    if !(lo <= hi) || column.kind != ColumnKind::Numeric {
                        return Err(Error::validation(label.clone(), format!("bad range on `{}`", entry.attribute)));
                    }
                }
                if next.filters.contains_key(&entry.id) {
                    return Err(Error::validation(label.clone(), format!("filter `{}` listed twice", entry.id)));
                }
                next.filters.insert(
                    entry.id.clone(),
                    Filter {
                        id: entry.id,
                        view: id.clone(),
                        attribute: entry.attribute,
                        criterion: entry.criterion,
                    },
                );
            }

            let view = next.views.get_mut(id).expect("inserted above");
            view.attributes = attributes;
            view.current_node = current_node;
            view.geometry = geometry;
        }

        // Host-bound assignments must be exactly what the rebuilt structure encodes.
        let mut expected: Vec<(AssignmentKey, Value)> = Vec::new();
        for r in next.relations.values() {
            expected.extend(encode_relation(r));
        }
        for v in next.views.values() {
            let filters: Vec<&Filter> = next.filters.values().filter(|f| f.view == v.id).collect();
            expected.extend(encode_view(v, &filters));
        }
        for (key, value) in &expected {
            let found = lookup(key.clone())?;
            if found.canonical() != value.canonical() {
                return Err(Error::validation(
                    key.to_string(),
                    format!("`{}` disagrees with the context (`{}`)", found.canonical(), value.canonical()),
                ));
            }
        }

        next.assignments = snapshot.assignments.clone();
        Ok(next)
    }
}

fn encode_relation(relation: &Relation) -> Vec<(AssignmentKey, Value)> {
    vec![
        (
            AssignmentKey::relation(&relation.name, prefs::RELATION_SOURCE),
            Value::String(relation.source.to_string_lossy().into_owned()),
        ),
        (
            AssignmentKey::relation(&relation.name, prefs::RELATION_TIME_COLUMN),
            Value::String(relation.time_column.clone().unwrap_or_default()),
        ),
    ]
}

fn encode_view(view: &View, filters: &[&Filter]) -> Vec<(AssignmentKey, Value)> {
    let mut entries: Vec<FilterEntry> = filters
        .iter()
        .map(|f| FilterEntry {
            id: f.id.clone(),
            attribute: f.attribute.clone(),
            criterion: f.criterion.clone(),
        })
        .collect();
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    let filters_json = serde_json::to_string(&entries).expect("filter entries serialize");
    let key = |pref: &str| AssignmentKey::view(&view.id, pref);
    vec![
        (key(prefs::VIEW_RELATION), Value::String(view.relation.clone())),
        (key(prefs::VIEW_KIND), Value::Enum(view.kind.as_str().to_owned())),
        (key(prefs::VIEW_ROLE), Value::Enum(view.role.as_str().to_owned())),
        (key(prefs::VIEW_ATTRIBUTES), Value::AttributeList(view.attributes.clone())),
        (key(prefs::VIEW_CURRENT_NODE), Value::String(view.current_node.to_string())),
        (key(prefs::VIEW_WINDOW_GEOMETRY), Value::String(view.geometry.to_string())),
        (key(prefs::VIEW_FILTERS), Value::String(filters_json)),
    ]
}
