//! Engine calls shared by the command line and the service, so both front ends report the
//! same numbers for the same files.

use std::path::{Path, PathBuf};

use serde::Serialize;
use traceview_core::diff::{self, DiffReport};
use traceview_core::host::{Criterion, View};
use traceview_core::projection::{self, LabelMode, LayoutDocument, QualityMetrics};
use traceview_core::viewpoint::Summary;
use traceview_core::{ApplicationState, DistanceMatrix, Error, Layout2D, Result, Viewpoint};

use crate::workspace::Workspace;

pub fn load_viewpoint(ws: &Workspace, path: &Path) -> Result<Viewpoint> {
    Viewpoint::load_xml(path, ws.schema(), Some(ws.areas()))
}

/// Weighted diff of two viewpoint files; `left` and `right` name the sides in the report.
pub fn diff_files(ws: &Workspace, left: (&str, &Path), right: (&str, &Path)) -> Result<DiffReport> {
    let a = load_viewpoint(ws, left.1)?;
    let b = load_viewpoint(ws, right.1)?;
    let mut report = diff::diff(&a, &b, ws.schema())?;
    report.left = left.0.to_owned();
    report.right = right.0.to_owned();
    Ok(report)
}

pub struct Comparison {
    pub matrix: DistanceMatrix,
    pub layout: Layout2D,
    pub metrics: QualityMetrics,
}

impl Comparison {
    pub fn export(&self, mode: LabelMode) -> LayoutDocument {
        projection::export_layout(&self.layout, &self.metrics, mode)
    }
}

/// Projects labelled viewpoint files on the plane by their raw weighted distances.
pub fn compare_files(ws: &Workspace, entries: &[(String, PathBuf)]) -> Result<Comparison> {
    if entries.is_empty() {
        return Err(Error::Validation {
            element: "compare".into(),
            message: "at least one viewpoint is needed".into(),
        });
    }
    let mut seen = std::collections::BTreeSet::new();
    for (label, _) in entries {
        if !seen.insert(label) {
            return Err(Error::Validation {
                element: "compare".into(),
                message: format!("viewpoint `{label}` is listed twice"),
            });
        }
    }
    let viewpoints = entries
        .iter()
        .map(|(_, path)| load_viewpoint(ws, path))
        .collect::<Result<Vec<_>>>()?;
    let labels = entries.iter().map(|(label, _)| label.clone()).collect();
    let matrix = DistanceMatrix::from_viewpoints(labels, &viewpoints, ws.schema())?;
    let layout = projection::mds_project(&matrix);
    let metrics = projection::quality(&matrix, &layout)?;
    Ok(Comparison { matrix, layout, metrics })
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ColumnSummary {
    pub name: String,
    pub kind: &'static str,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RelationSummary {
    pub name: String,
    pub source: PathBuf,
    pub time_column: Option<String>,
    pub rows: usize,
    pub columns: Vec<ColumnSummary>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ViewSummary {
    pub id: String,
    pub relation: String,
    pub kind: String,
    pub role: String,
    pub attributes: Vec<String>,
    pub current_node: String,
    pub window_geometry: String,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FilterSummary {
    pub id: String,
    pub view: String,
    pub attribute: String,
    pub criterion: String,
}

/// Structured digest of an exploration state, shown instead of rendering charts.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StateSummary {
    pub relations: Vec<RelationSummary>,
    pub views: Vec<ViewSummary>,
    pub filters: Vec<FilterSummary>,
    pub assignments: usize,
    pub period_start: Option<String>,
    pub period_end: Option<String>,
}

fn view_summary(v: &View) -> ViewSummary {
    ViewSummary {
        id: v.id.clone(),
        relation: v.relation.clone(),
        kind: v.kind.to_string(),
        role: v.role.to_string(),
        attributes: v.attributes.clone(),
        current_node: v.current_node.to_string(),
        window_geometry: v.geometry.to_string(),
    }
}

pub fn criterion_text(c: &Criterion) -> String {
    match c {
        Criterion::Range { lo, hi } => format!("[{lo}, {hi}]"),
        Criterion::Values(values) => {
            let list: Vec<&str> = values.iter().map(String::as_str).collect();
            format!("{{{}}}", list.join(", "))
        }
    }
}

pub fn state_summary(state: &ApplicationState) -> StateSummary {
    let period = state.displayed_period();
    StateSummary {
        relations: state
            .relations()
            .map(|r| RelationSummary {
                name: r.name.clone(),
                source: r.source.clone(),
                time_column: r.time_column.clone(),
                rows: r.rows.len(),
                columns: r
                    .columns
                    .iter()
                    .map(|c| ColumnSummary {
                        name: c.name.clone(),
                        kind: c.kind.as_str(),
                    })
                    .collect(),
            })
            .collect(),
        views: state.views().map(view_summary).collect(),
        filters: state
            .filters()
            .map(|f| FilterSummary {
                id: f.id.clone(),
                view: f.view.clone(),
                attribute: f.attribute.clone(),
                criterion: criterion_text(&f.criterion),
            })
            .collect(),
        assignments: state.assignments().len(),
        period_start: period.map(|p| p.0.to_string()),
        period_end: period.map(|p| p.1.to_string()),
    }
}

/// Summary of the viewpoint stored at `path`, or the reason it cannot be read.
pub fn summary_of(ws: &Workspace, path: &Path) -> std::result::Result<Summary, Error> {
    load_viewpoint(ws, path).map(|vp| vp.summary(Some(ws.areas())))
}
