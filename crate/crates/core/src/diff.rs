//! Preference-level comparison of two viewpoints and the weighted distance between them.
//!
//! A key present on one side only counts with its full weight, values compare by canonical
//! text, and metadata never contributes. The distance is therefore the weight of the symmetric
//! difference of the two assignment sets, which is a pseudometric: zero on itself, symmetric,
//! and subadditive.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assignment::{AssignmentKey, Assignments};
use crate::error::{Error, Result};
use crate::schema::{PreferenceSchema, ScopeLevel};
use crate::value::Value;
use crate::viewpoint::Viewpoint;
use crate::weight::Weight;
use crate::xml::{self, Element, XmlWriter};

pub const FORMAT_VERSION: u32 = 1;

/// One side of a delta: the value's kind tag and canonical text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Side {
    pub kind: String,
    pub value: String,
}

impl Side {
    fn of(value: &Value, schema: &PreferenceSchema, key: &AssignmentKey) -> Result<Side> {
        Ok(Side {
            kind: schema.get(&key.pref_id)?.kind.tag().to_owned(),
            value: value.canonical(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PreferenceDelta {
    pub key: AssignmentKey,
    pub weight: Weight,
    /// `None` when the key is missing on that side.
    pub left: Option<Side>,
    pub right: Option<Side>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryDiff {
    pub name: String,
    pub distance: Weight,
    pub deltas: Vec<PreferenceDelta>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DiffReport {
    pub left: String,
    pub right: String,
    pub raw_distance: Weight,
    pub max_distance: Weight,
    /// Percentage in [0, 100] with six fractional digits.
    pub normalized_percent: Weight,
    /// Distance descending, ties by name.
    pub categories: Vec<CategoryDiff>,
}

impl DiffReport {
    /// The `k` categories contributing most, distance descending, ties by name.
    pub fn top_categories(&self, k: usize) -> Vec<(&str, Weight)> {
        self.categories
            .iter()
            .take(k)
            .map(|c| (c.name.as_str(), c.distance))
            .collect()
    }

    pub fn delta_count(&self) -> usize {
        self.categories.iter().map(|c| c.deltas.len()).sum()
    }
}

fn category_order(a: &CategoryDiff, b: &CategoryDiff) -> Ordering {
    b.distance.cmp(&a.distance).then_with(|| a.name.cmp(&b.name))
}

/// `100 * raw / max` in micro-percent, rounded half up. Only equal inputs give exactly 100 and
/// only a zero raw distance gives exactly 0; a zero maximum yields 0.
pub fn normalized_percent(raw: Weight, max: Weight) -> Weight {
    let (raw, max) = (raw.micros() as u128, max.micros() as u128);
    if raw == 0 || max == 0 {
        return Weight::ZERO;
    }
    if raw >= max {
        return Weight::from_units(100);
    }
    let scaled = (raw * 100_000_000 * 2 + max) / (2 * max);
    Weight::from_micros(scaled.clamp(1, 99_999_999) as u64)
}

fn weight_of(schema: &PreferenceSchema, key: &AssignmentKey) -> Result<Weight> {
    Ok(schema.get(&key.pref_id)?.weight)
}

/// Walks both assignment maps in key order, calling `f` on every key with its two sides.
fn merge<'a>(left: &'a Assignments, right: &'a Assignments, mut f: impl FnMut(&'a AssignmentKey, Option<&'a Value>, Option<&'a Value>) -> Result<()>) -> Result<()> {
    let mut l = left.iter().peekable();
    let mut r = right.iter().peekable();
    loop {
        match (l.peek(), r.peek()) {
            (None, None) => return Ok(()),
            (Some((lk, lv)), None) => {
                f(lk, Some(lv), None)?;
                l.next();
            }
            (None, Some((rk, rv))) => {
                f(rk, None, Some(rv))?;
                r.next();
            }
            (Some((lk, lv)), Some((rk, rv))) => match lk.cmp(rk) {
                Ordering::Less => {
                    f(lk, Some(lv), None)?;
                    l.next();
                }
                Ordering::Greater => {
                    f(rk, None, Some(rv))?;
                    r.next();
                }
                Ordering::Equal => {
                    f(lk, Some(lv), Some(rv))?;
                    l.next();
                    r.next();
                }
            },
        }
    }
}

fn differs(left: Option<&Value>, right: Option<&Value>) -> bool {
    match (left, right) {
        (Some(a), Some(b)) => a.canonical() != b.canonical(),
        _ => true,
    }
}

/// Sum of weights over the union of both key sets: the distance of two viewpoints that share
/// no value at all.
pub fn calibrate_scale(left: &Viewpoint, right: &Viewpoint, schema: &PreferenceSchema) -> Result<Weight> {
    let mut max = Weight::ZERO;
    merge(&left.assignments, &right.assignments, |key, _, _| {
        max += weight_of(schema, key)?;
        Ok(())
    })?;
    Ok(max)
}

/// Raw distance only, without building the report.
pub fn distance(left: &Assignments, right: &Assignments, schema: &PreferenceSchema) -> Result<Weight> {
    let mut raw = Weight::ZERO;
    merge(left, right, |key, l, r| {
        if differs(l, r) {
            raw += weight_of(schema, key)?;
        }
        Ok(())
    })?;
    Ok(raw)
}

fn check(vp: &Viewpoint, schema: &PreferenceSchema) -> Result<()> {
    vp.validate(schema, None).map_err(|e| Error::Validation {
        element: format!("viewpoint `{}`", vp.id()),
        message: e.to_string(),
    })
}

pub fn diff(left: &Viewpoint, right: &Viewpoint, schema: &PreferenceSchema) -> Result<DiffReport> {
    check(left, schema)?;
    check(right, schema)?;
    diff_unchecked(left, right, schema)
}

/// [`diff`] for viewpoints already validated against `schema`.
pub fn diff_unchecked(left: &Viewpoint, right: &Viewpoint, schema: &PreferenceSchema) -> Result<DiffReport> {
    let mut by_category: BTreeMap<&str, CategoryDiff> = BTreeMap::new();
    let mut raw = Weight::ZERO;
    let mut max = Weight::ZERO;
    merge(&left.assignments, &right.assignments, |key, l, r| {
        let def = schema.get(&key.pref_id)?;
        max += def.weight;
        if !differs(l, r) {
            return Ok(());
        }
        raw += def.weight;
        let entry = by_category.entry(def.category.as_str()).or_insert_with(|| CategoryDiff {
            name: def.category.clone(),
            distance: Weight::ZERO,
            deltas: Vec::new(),
        });
        entry.distance += def.weight;
        entry.deltas.push(PreferenceDelta {
            key: key.clone(),
            weight: def.weight,
            left: l.map(|v| Side::of(v, schema, key)).transpose()?,
            right: r.map(|v| Side::of(v, schema, key)).transpose()?,
        });
        Ok(())
    })?;
    let mut categories: Vec<CategoryDiff> = by_category.into_values().collect();
    categories.sort_by(category_order);
    Ok(DiffReport {
        left: left.id().to_owned(),
        right: right.id().to_owned(),
        raw_distance: raw,
        max_distance: max,
        normalized_percent: normalized_percent(raw, max),
        categories,
    })
}

/// Pairwise raw distances, symmetric with a zero diagonal.
pub fn distance_matrix(viewpoints: &[Viewpoint], schema: &PreferenceSchema) -> Result<Vec<Vec<Weight>>> {
    for vp in viewpoints {
        check(vp, schema)?;
    }
    let n = viewpoints.len();
    let mut m = vec![vec![Weight::ZERO; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = distance(&viewpoints[i].assignments, &viewpoints[j].assignments, schema)?;
            m[i][j] = d;
            m[j][i] = d;
        }
    }
    Ok(m)
}

pub fn to_xml(report: &DiffReport) -> String {
    let mut w = XmlWriter::new();
    let version = FORMAT_VERSION.to_string();
    let raw = report.raw_distance.to_string();
    let max = report.max_distance.to_string();
    let pct = report.normalized_percent.to_string();
    let attrs = [
        ("format-version", version.as_str()),
        ("left", report.left.as_str()),
        ("right", report.right.as_str()),
        ("raw-distance", raw.as_str()),
        ("max-distance", max.as_str()),
        ("normalized-percent", pct.as_str()),
    ];
    if report.categories.is_empty() {
        w.empty(0, "viewpoint-diff", &attrs);
        return w.finish();
    }
    w.open(0, "viewpoint-diff", &attrs);
    for category in &report.categories {
        let distance = category.distance.to_string();
        w.open(1, "category", &[("name", &category.name), ("distance", &distance)]);
        for delta in &category.deltas {
            let weight = delta.weight.to_string();
            w.open(
                2,
                "preference",
                &[
                    ("id", &delta.key.pref_id),
                    ("scope", delta.key.scope.as_str()),
                    ("instance", &delta.key.instance),
                    ("weight", &weight),
                ],
            );
            for (name, side) in [("left", &delta.left), ("right", &delta.right)] {
                match side {
                    Some(s) => w.text_element(3, name, &[("kind", &s.kind)], &s.value),
                    None => w.empty(3, name, &[("missing", "true")]),
                }
            }
            w.close(2, "preference");
        }
        w.close(1, "category");
    }
    w.close(0, "viewpoint-diff");
    w.finish()
}

pub fn write_xml(report: &DiffReport, path: &Path) -> Result<()> {
    xml::write_atomic(path, to_xml(report).as_bytes())
}

fn weight_attr(el: &Element, name: &str) -> Result<Weight> {
    let text = el.required(name)?;
    text.parse()
        .map_err(|e| Error::validation(format!("<{}>", el.name), format!("{name} `{text}`: {e}")))
}

fn parse_side(el: &Element) -> Result<Option<Side>> {
    match el.attr("missing") {
        Some("true") => Ok(None),
        Some(other) => Err(Error::validation(format!("<{}>", el.name), format!("missing=`{other}`"))),
        None => Ok(Some(Side {
            kind: el.required("kind")?.to_owned(),
            value: el.text.clone(),
        })),
    }
}

/// Reads a diff document back. Totals are checked against the listed deltas.
pub fn from_xml(document: &str) -> Result<DiffReport> {
    let root = xml::parse(document, "viewpoint-diff")?;
    if root.name != "viewpoint-diff" {
        return Err(Error::validation(format!("<{}>", root.name), "expected <viewpoint-diff> root"));
    }
    let version = root.required("format-version")?;
    if version != "1" {
        return Err(Error::FormatVersion {
            context: "viewpoint-diff".into(),
            found: version.to_owned(),
        });
    }
    root.expect_children(&["category"])?;
    let mut categories = Vec::new();
    for c in &root.children {
        c.expect_children(&["preference"])?;
        let mut deltas = Vec::new();
        for p in &c.children {
            p.expect_children(&["left", "right"])?;
            let scope: ScopeLevel = p
                .required("scope")?
                .parse()
                .map_err(|m: String| Error::validation("<preference>", m))?;
            let key = AssignmentKey::new(p.required("id")?, scope, p.required("instance")?)
                .map_err(|m| Error::validation("<preference>", m))?;
            let side = |name: &str| -> Result<Option<Side>> {
                let el = p
                    .child(name)
                    .ok_or_else(|| Error::validation("<preference>", format!("missing <{name}>")))?;
                parse_side(el)
            };
            deltas.push(PreferenceDelta {
                key,
                weight: weight_attr(p, "weight")?,
                left: side("left")?,
                right: side("right")?,
            });
        }
        let category = CategoryDiff {
            name: c.required("name")?.to_owned(),
            distance: weight_attr(c, "distance")?,
            deltas,
        };
        if category.distance != category.deltas.iter().map(|d| d.weight).sum() {
            return Err(Error::validation(
                format!("<category name=\"{}\">", category.name),
                "distance is not the sum of its preference weights",
            ));
        }
        categories.push(category);
    }
    let report = DiffReport {
        left: root.required("left")?.to_owned(),
        right: root.required("right")?.to_owned(),
        raw_distance: weight_attr(&root, "raw-distance")?,
        max_distance: weight_attr(&root, "max-distance")?,
        normalized_percent: weight_attr(&root, "normalized-percent")?,
        categories,
    };
    if report.raw_distance != report.categories.iter().map(|c| c.distance).sum() {
        return Err(Error::validation("<viewpoint-diff>", "raw-distance is not the sum of category distances"));
    }
    Ok(report)
}
