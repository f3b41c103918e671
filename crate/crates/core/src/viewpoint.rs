//! Viewpoints: a complete host configuration plus file, content and owner metadata, persisted
//! as one canonical XML document.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::area::AreaList;
use crate::assignment::{AssignmentKey, Assignments};
use crate::clock::{format_timestamp, parse_timestamp, session_user, Clock};
use crate::error::{Error, Result};
use crate::host::{is_identifier, ApplicationState, Context, RelationRef, Snapshot, ViewRef};
use crate::schema::{PreferenceSchema, ScopeLevel};
use crate::value::Value;
use crate::xml::{self, is_xml_char, Element, XmlWriter};

pub const FORMAT_VERSION: u32 = 1;

string_enum!(Priority { MustSee => "must-see", Interesting => "interesting", Facultative => "facultative" });
string_enum!(Attitude { GoodNews => "good-news", Neutral => "neutral", BadNews => "bad-news" });

impl Default for Priority {
    fn default() -> Self {
        Priority::Interesting
    }
}

impl Default for Attitude {
    fn default() -> Self {
        Attitude::Neutral
    }
}

impl Attitude {
    pub fn icon(self) -> &'static str {
        match self {
            Attitude::GoodNews => ":-)",
            Attitude::Neutral => ":-|",
            Attitude::BadNews => ":-(",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FileMeta {
    pub name: String,
    pub path: PathBuf,
    pub saved_at: DateTime<Utc>,
    pub image: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ContentMeta {
    pub area_id: Option<String>,
    pub period: Option<Period>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnerMeta {
    pub name: String,
    pub priority: Priority,
    pub attitude: Attitude,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub file: FileMeta,
    pub content: ContentMeta,
    pub owner: OwnerMeta,
}

/// User-supplied part of the metadata at capture time.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MetaDraft {
    pub name: String,
    pub description: String,
    pub priority: Priority,
    pub attitude: Attitude,
    pub area_id: Option<String>,
    pub image: Option<String>,
    /// Overrides the session identity.
    pub owner: Option<String>,
}

/// Metadata edits; `None` leaves a field as it is.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MetaChanges {
    pub name: Option<String>,
    pub description: Option<String>,
    pub priority: Option<Priority>,
    pub attitude: Option<Attitude>,
    pub area_id: Option<Option<String>>,
    pub image: Option<Option<String>>,
}

/// Flat metadata digest shown in listings, previews and tooltips.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Summary {
    pub name: String,
    pub image: Option<String>,
    pub area_id: Option<String>,
    pub area_name: Option<String>,
    pub area_icon: Option<String>,
    pub priority: Priority,
    pub attitude: Attitude,
    pub attitude_icon: String,
    pub owner: String,
    pub saved_at: String,
    pub description: String,
    pub period_start: Option<NaiveDate>,
    pub period_end: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Viewpoint {
    pub format_version: u32,
    pub meta: Meta,
    pub context: Context,
    pub assignments: Assignments,
}

fn check_text(element: &str, field: &str, text: &str) -> Result<()> {
    match text.chars().find(|c| !is_xml_char(*c)) {
        Some(c) => Err(Error::validation(
            element,
            format!("{field} contains U+{:04X}", c as u32),
        )),
        None => Ok(()),
    }
}

impl Meta {
    fn validate(&self, areas: Option<&AreaList>) -> Result<()> {
        if self.file.name.is_empty() {
            return Err(Error::validation("<file>", "name must not be empty"));
        }
        check_text("<file>", "name", &self.file.name)?;
        check_text("<file>", "path", &self.file.path.to_string_lossy())?;
        if let Some(image) = &self.file.image {
            if image.is_empty() {
                return Err(Error::validation("<file>", "image path must not be empty"));
            }
            check_text("<file>", "image", image)?;
        }
        check_text("<content>", "description", &self.content.description)?;
        if let Some(area) = &self.content.area_id {
            let known = match areas {
                Some(list) => list.contains(area),
                None => !area.is_empty(),
            };
            if !known {
                return Err(Error::validation("<content>", format!("unknown area `{area}`")));
            }
            check_text("<content>", "area-id", area)?;
        }
        if let Some(p) = &self.content.period {
            if p.start > p.end {
                return Err(Error::validation(
                    "<content>",
                    format!("period starts {} after it ends {}", p.start, p.end),
                ));
            }
        }
        if self.owner.name.is_empty() {
            return Err(Error::validation("<owner>", "name must not be empty"));
        }
        check_text("<owner>", "name", &self.owner.name)
    }
}

/// Checks one assignment against the schema and the viewpoint's context.
pub(crate) fn check_assignment(schema: &PreferenceSchema, context: &Context, key: &AssignmentKey, value: &Value) -> Result<()> {
    let def = schema.get(&key.pref_id)?;
    if !def.applies_at(key.scope) {
        return Err(Error::ScopeNotApplicable {
            pref: key.pref_id.clone(),
            scope: key.scope.to_string(),
        });
    }
    key.check().map_err(|m| Error::validation(key.to_string(), m))?;
    let known = match key.scope {
        ScopeLevel::Application => true,
        ScopeLevel::Relation => context.relations.iter().any(|r| r.name == key.instance),
        ScopeLevel::View => context.views.iter().any(|v| v.id == key.instance),
    };
    if !known {
        return Err(Error::validation(
            key.to_string(),
            format!("{} `{}` is not in the context", key.scope, key.instance),
        ));
    }
    if !value.matches(&def.kind) {
        return Err(Error::TypeMismatch {
            pref: key.pref_id.clone(),
            expected: def.kind.to_string(),
            value: value.canonical(),
        });
    }
    Ok(())
}

fn check_context(context: &Context) -> Result<()> {
    let mut relations = BTreeSet::new();
    for r in &context.relations {
        if !is_identifier(&r.name) {
            return Err(Error::validation("<relation>", format!("bad name `{}`", r.name)));
        }
        if !relations.insert(r.name.as_str()) {
            return Err(Error::validation(format!("<relation name=\"{}\">", r.name), "listed twice"));
        }
        check_text("<relation>", "source", &r.source.to_string_lossy())?;
        if let Some(tc) = &r.time_column {
            check_text("<relation>", "time-column", tc)?;
        }
    }
    let mut views = BTreeSet::new();
    for v in &context.views {
        if !is_identifier(&v.id) {
            return Err(Error::validation("<view>", format!("bad id `{}`", v.id)));
        }
        if !views.insert(v.id.as_str()) {
            return Err(Error::validation(format!("<view id=\"{}\">", v.id), "listed twice"));
        }
        if !relations.contains(v.relation.as_str()) {
            return Err(Error::validation(
                format!("<view id=\"{}\">", v.id),
                format!("relation `{}` is not in the context", v.relation),
            ));
        }
    }
    Ok(())
}

impl Viewpoint {
    /// Records the complete state of `state`, with metadata from `draft`.
    pub fn capture(state: &ApplicationState, draft: MetaDraft, clock: &dyn Clock) -> Result<Viewpoint> {
        let Snapshot { context, assignments } = state.snapshot();
        let meta = Meta {
            file: FileMeta {
                name: draft.name,
                path: PathBuf::new(),
                saved_at: clock.now(),
                image: draft.image,
            },
            content: ContentMeta {
                area_id: draft.area_id,
                period: state
                    .displayed_period()
                    .map(|(start, end)| Period { start, end }),
                description: draft.description,
            },
            owner: OwnerMeta {
                name: draft.owner.unwrap_or_else(session_user),
                priority: draft.priority,
                attitude: draft.attitude,
            },
        };
        meta.validate(None)?;
        Ok(Viewpoint {
            format_version: FORMAT_VERSION,
            meta,
            context,
            assignments,
        })
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            context: self.context.clone(),
            assignments: self.assignments.clone(),
        }
    }

    /// Brings `state` into this viewpoint's configuration.
    pub fn apply(&self, state: &mut ApplicationState) -> Result<()> {
        state.restore(&self.snapshot())
    }

    pub fn summary(&self, areas: Option<&AreaList>) -> Summary {
        let m = &self.meta;
        let area = m.content.area_id.as_deref().and_then(|id| areas?.get(id));
        Summary {
            name: m.file.name.clone(),
            image: m.file.image.clone(),
            area_id: m.content.area_id.clone(),
            area_name: area.map(|a| a.name.clone()),
            area_icon: area.map(|a| a.icon.clone()),
            priority: m.owner.priority,
            attitude: m.owner.attitude,
            attitude_icon: m.owner.attitude.icon().to_owned(),
            owner: m.owner.name.clone(),
            saved_at: format_timestamp(&m.file.saved_at),
            description: m.content.description.clone(),
            period_start: m.content.period.map(|p| p.start),
            period_end: m.content.period.map(|p| p.end),
        }
    }

    /// Display name used as the viewpoint's identity in diffs.
    pub fn id(&self) -> &str {
        &self.meta.file.name
    }

    /// Full validation against a schema and, when given, an area list.
    pub fn validate(&self, schema: &PreferenceSchema, areas: Option<&AreaList>) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersion {
                context: "viewpoint".into(),
                found: self.format_version.to_string(),
            });
        }
        self.meta.validate(areas)?;
        check_context(&self.context)?;
        for (key, value) in &self.assignments {
            check_assignment(schema, &self.context, key, value)?;
        }
        Ok(())
    }

    pub fn edit_metadata(&self, changes: MetaChanges, areas: Option<&AreaList>) -> Result<Viewpoint> {
        let mut next = self.clone();
        let m = &mut next.meta;
        if let Some(name) = changes.name {
            m.file.name = name;
        }
        if let Some(description) = changes.description {
            m.content.description = description;
        }
        if let Some(priority) = changes.priority {
            m.owner.priority = priority;
        }
        if let Some(attitude) = changes.attitude {
            m.owner.attitude = attitude;
        }
        if let Some(area) = changes.area_id {
            m.content.area_id = area;
        }
        if let Some(image) = changes.image {
            m.file.image = image;
        }
        next.meta.validate(areas)?;
        Ok(next)
    }

    /// Canonical document text. Bytes depend only on the viewpoint value.
    pub fn to_xml(&self, schema: &PreferenceSchema) -> Result<String> {
        let mut w = XmlWriter::new();
        let version = self.format_version.to_string();
        w.open(0, "viewpoint", &[("format-version", &version)]);
        w.open(1, "meta", &[]);

        let file = &self.meta.file;
        let path = file.path.to_string_lossy();
        let saved_at = format_timestamp(&file.saved_at);
        let mut attrs: Vec<(&str, &str)> = vec![("name", &file.name), ("path", &path), ("saved-at", &saved_at)];
        if let Some(image) = &file.image {
            attrs.push(("image", image));
        }
        w.empty(2, "file", &attrs);

        let content = &self.meta.content;
        let (start, end) = match &content.period {
            Some(p) => (p.start.to_string(), p.end.to_string()),
            None => (String::new(), String::new()),
        };
        let mut attrs: Vec<(&str, &str)> = Vec::new();
        if let Some(area) = &content.area_id {
            attrs.push(("area-id", area));
        }
        if content.period.is_some() {
            attrs.push(("period-start", &start));
            attrs.push(("period-end", &end));
        }
        w.text_element(2, "content", &attrs, &content.description);

        let owner = &self.meta.owner;
        w.empty(
            2,
            "owner",
            &[
                ("name", &owner.name),
                ("priority", owner.priority.as_str()),
                ("attitude", owner.attitude.as_str()),
            ],
        );
        w.close(1, "meta");

        let mut relations: Vec<&RelationRef> = self.context.relations.iter().collect();
        relations.sort_by(|a, b| a.name.cmp(&b.name));
        let mut views: Vec<&ViewRef> = self.context.views.iter().collect();
        views.sort_by(|a, b| a.id.cmp(&b.id));
        if relations.is_empty() && views.is_empty() {
            w.empty(1, "context", &[]);
        } else {
            w.open(1, "context", &[]);
            for r in relations {
                let source = r.source.to_string_lossy();
                let mut attrs: Vec<(&str, &str)> = vec![("name", &r.name), ("source", &source)];
                if let Some(tc) = &r.time_column {
                    attrs.push(("time-column", tc));
                }
                w.empty(2, "relation", &attrs);
            }
            for v in views {
                w.empty(
                    2,
                    "view",
                    &[
                        ("id", &v.id),
                        ("relation", &v.relation),
                        ("kind", v.kind.as_str()),
                        ("role", v.role.as_str()),
                    ],
                );
            }
            w.close(1, "context");
        }

        if self.assignments.is_empty() {
            w.empty(1, "preferences", &[]);
        } else {
            w.open(1, "preferences", &[]);
            for (key, value) in &self.assignments {
                let def = schema.get(&key.pref_id)?;
                w.text_element(
                    2,
                    "preference",
                    &[
                        ("id", &key.pref_id),
                        ("scope", key.scope.as_str()),
                        ("instance", &key.instance),
                        ("category", &def.category),
                        ("kind", def.kind.tag()),
                    ],
                    &value.canonical(),
                );
            }
            w.close(1, "preferences");
        }
        w.close(0, "viewpoint");
        Ok(w.finish())
    }

    /// Parses and validates a viewpoint document. Relative relation sources are resolved
    /// against `base_dir`.
    pub fn from_xml(
        document: &str,
        schema: &PreferenceSchema,
        areas: Option<&AreaList>,
        base_dir: Option<&Path>,
    ) -> Result<Viewpoint> {
        let root = xml::parse(document, "viewpoint")?;
        if root.name != "viewpoint" {
            return Err(Error::validation(format!("<{}>", root.name), "expected <viewpoint> root"));
        }
        let version = root.required("format-version")?;
        if version != "1" {
            return Err(Error::FormatVersion {
                context: "viewpoint".into(),
                found: version.to_owned(),
            });
        }
        root.expect_children(&["meta", "context", "preferences"])?;
        let single = |name: &str| -> Result<&Element> {
            let mut it = root.children.iter().filter(|c| c.name == name);
            match (it.next(), it.next()) {
                (Some(e), None) => Ok(e),
                (None, _) => Err(Error::validation("<viewpoint>", format!("missing <{name}>"))),
                _ => Err(Error::validation("<viewpoint>", format!("more than one <{name}>"))),
            }
        };

        let meta = parse_meta(single("meta")?)?;
        let context = parse_context(single("context")?, base_dir)?;
        let mut assignments = Assignments::new();
        let prefs = single("preferences")?;
        prefs.expect_children(&["preference"])?;
        for el in &prefs.children {
            let (key, value) = parse_preference(el, schema, &context)?;
            let label = key.to_string();
            if assignments.insert(key, value).is_some() {
                return Err(Error::validation(
                    format!("<preference id=\"{}\">", el.attr("id").unwrap_or_default()),
                    format!("{label} assigned twice"),
                ));
            }
        }

        let vp = Viewpoint {
            format_version: FORMAT_VERSION,
            meta,
            context,
            assignments,
        };
        vp.validate(schema, areas)?;
        Ok(vp)
    }

    pub fn load_xml(path: &Path, schema: &PreferenceSchema, areas: Option<&AreaList>) -> Result<Viewpoint> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = std::path::absolute(path).map_err(|e| Error::io(path, e))?;
        Self::from_xml(&text, schema, areas, base.parent()).map_err(|e| with_file_context(e, path))
    }

    /// Writes the canonical document atomically, refreshing `path` and `saved-at`.
    pub fn save_xml(&mut self, path: &Path, schema: &PreferenceSchema, clock: &dyn Clock) -> Result<()> {
        let previous = self.meta.file.clone();
        self.meta.file.path = std::path::absolute(path).map_err(|e| Error::io(path, e))?;
        self.meta.file.saved_at = clock.now();
        let written = self
            .to_xml(schema)
            .and_then(|text| xml::write_atomic(path, text.as_bytes()));
        if written.is_err() {
            self.meta.file = previous;
        }
        written
    }
}

fn with_file_context(err: Error, path: &Path) -> Error {
    match err {
        Error::Parse { message, .. } => Error::Parse {
            context: path.display().to_string(),
            message,
        },
        Error::FormatVersion { found, .. } => Error::FormatVersion {
            context: path.display().to_string(),
            found,
        },
        other => other,
    }
}

fn parse_enum<T: std::str::FromStr<Err = String>>(el: &Element, attr: &str) -> Result<T> {
    el.required(attr)?
        .parse()
        .map_err(|m: String| Error::validation(format!("<{}>", el.name), m))
}

fn parse_date(el: &Element, attr: &str) -> Result<NaiveDate> {
    let text = el.required(attr)?;
    NaiveDate::parse_from_str(text, "%Y-%m-%d")
        .ok()
        .filter(|d| d.format("%Y-%m-%d").to_string() == text)
        .ok_or_else(|| Error::validation(format!("<{}>", el.name), format!("{attr} `{text}` is not YYYY-MM-DD")))
}

fn parse_meta(meta: &Element) -> Result<Meta> {
    meta.expect_children(&["file", "content", "owner"])?;
    let get = |name: &str| -> Result<&Element> {
        meta.child(name)
            .ok_or_else(|| Error::validation("<meta>", format!("missing <{name}>")))
    };
    let file = get("file")?;
    let content = get("content")?;
    let owner = get("owner")?;

    let saved_at = parse_timestamp(file.required("saved-at")?).map_err(|m| Error::validation("<file>", m))?;
    let period = match (content.attr("period-start"), content.attr("period-end")) {
        (None, None) => None,
        (Some(_), Some(_)) => Some(Period {
            start: parse_date(content, "period-start")?,
            end: parse_date(content, "period-end")?,
        }),
        _ => {
            return Err(Error::validation(
                "<content>",
                "period-start and period-end go together",
            ))
        }
    };
    Ok(Meta {
        file: FileMeta {
            name: file.required("name")?.to_owned(),
            path: PathBuf::from(file.required("path")?),
            saved_at,
            image: file.attr("image").map(str::to_owned),
        },
        content: ContentMeta {
            area_id: content.attr("area-id").map(str::to_owned),
            period,
            description: content.text.clone(),
        },
        owner: OwnerMeta {
            name: owner.required("name")?.to_owned(),
            priority: parse_enum(owner, "priority")?,
            attitude: parse_enum(owner, "attitude")?,
        },
    })
}

fn parse_context(el: &Element, base_dir: Option<&Path>) -> Result<Context> {
    el.expect_children(&["relation", "view"])?;
    let mut context = Context::default();
    for r in el.children_named("relation") {
        let mut source = PathBuf::from(r.required("source")?);
        if source.is_relative() {
            if let Some(base) = base_dir {
                source = base.join(source);
            }
        }
        context.relations.push(RelationRef {
            name: r.required("name")?.to_owned(),
            source,
            time_column: r.attr("time-column").map(str::to_owned),
        });
    }
    for v in el.children_named("view") {
        context.views.push(ViewRef {
            id: v.required("id")?.to_owned(),
            relation: v.required("relation")?.to_owned(),
            kind: parse_enum(v, "kind")?,
            role: parse_enum(v, "role")?,
        });
    }
    context.relations.sort();
    context.views.sort();
    check_context(&context)?;
    Ok(context)
}

fn parse_preference(el: &Element, schema: &PreferenceSchema, context: &Context) -> Result<(AssignmentKey, Value)> {
    let id = el.required("id")?;
    let element = format!("<preference id=\"{id}\">");
    let def = schema.get(id)?;
    let scope: ScopeLevel = el
        .required("scope")?
        .parse()
        .map_err(|m: String| Error::validation(&element, m))?;
    let key = AssignmentKey {
        scope,
        instance: el.required("instance")?.to_owned(),
        pref_id: id.to_owned(),
    };
    let category = el.required("category")?;
    if category != def.category {
        return Err(Error::validation(
            &element,
            format!("category `{category}` but the schema says `{}`", def.category),
        ));
    }
    let kind = el.required("kind")?;
    if kind != def.kind.tag() {
        return Err(Error::validation(
            &element,
            format!("kind `{kind}` but the schema says `{}`", def.kind.tag()),
        ));
    }
    let value = Value::parse(&def.kind, &el.text).map_err(|_| Error::TypeMismatch {
        pref: id.to_owned(),
        expected: def.kind.to_string(),
        value: el.text.clone(),
    })?;
    check_assignment(schema, context, &key, &value)?;
    Ok((key, value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::FixedClock;
    use crate::host::{ViewKind, ViewRole, ViewSpec};
    use chrono::TimeZone;
    use std::sync::Arc;

    fn clock() -> FixedClock {
        FixedClock(Utc.with_ymd_and_hms(2013, 6, 1, 9, 30, 0).unwrap())
    }

    fn schema() -> Arc<PreferenceSchema> {
        Arc::new(PreferenceSchema::default_schema())
    }

    fn budget_state(dir: &Path) -> ApplicationState {
        let csv = dir.join("budget.csv");
        std::fs::write(&csv, "ministry,year,budget\nEducation,2010,5\nDefense,2011,7\nHealth,2012,3\n").unwrap();
        let mut s = ApplicationState::new(schema()).unwrap();
        s.load_dataset(&csv, Some("budget"), Some("year")).unwrap();
        s.open_view(ViewSpec {
            id: "pie1".into(),
            relation: "budget".into(),
            kind: ViewKind::Pie,
            role: ViewRole::Master,
        })
        .unwrap();
        s
    }

    fn draft() -> MetaDraft {
        MetaDraft {
            name: "overview".into(),
            description: "Budget <per> ministry & year\n  second line".into(),
            priority: Priority::MustSee,
            attitude: Attitude::BadNews,
            area_id: Some("fr".into()),
            image: Some("img/overview.png".into()),
            owner: Some("alice".into()),
        }
    }

    #[test]
    fn capture_derives_period_and_owner() {
        let dir = tempfile::tempdir().unwrap();
        let s = budget_state(dir.path());
        let vp = Viewpoint::capture(&s, draft(), &clock()).unwrap();
        let d = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).unwrap();
        assert_eq!(vp.meta.content.period, Some(Period { start: d(2010, 1, 1), end: d(2012, 12, 31) }));
        assert_eq!(vp.meta.owner.name, "alice");
        assert_eq!(vp.assignments, *s.assignments());

        let empty = ApplicationState::new(schema()).unwrap();
        let vp = Viewpoint::capture(&empty, draft(), &clock()).unwrap();
        assert_eq!(vp.meta.content.period, None);
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let s = budget_state(dir.path());
        let mut vp = Viewpoint::capture(&s, draft(), &clock()).unwrap();
        let path = dir.path().join("vp.xml");
        vp.save_xml(&path, &schema(), &clock()).unwrap();
        let first = std::fs::read(&path).unwrap();
        let mut loaded = Viewpoint::load_xml(&path, &schema(), Some(&AreaList::builtin())).unwrap();
        assert_eq!(loaded, vp);
        loaded.save_xml(&path, &schema(), &clock()).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn canonical_layout() {
        let dir = tempfile::tempdir().unwrap();
        let s = budget_state(dir.path());
        let vp = Viewpoint::capture(&s, draft(), &clock()).unwrap();
        let text = vp.to_xml(&schema()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        assert_eq!(lines[1], r#"<viewpoint format-version="1">"#);
        assert!(lines[3].starts_with(r#"    <file name="overview" path="" saved-at="2013-06-01T09:30:00Z""#));
        assert_eq!(
            lines[4],
            r#"    <content area-id="fr" period-start="2010-01-01" period-end="2012-12-31">Budget &lt;per&gt; ministry &amp; year"#
        );
        let keys: Vec<(String, String, String)> = roxmltree::Document::parse(&text)
            .unwrap()
            .descendants()
            .filter(|n| n.has_tag_name("preference"))
            .map(|n| {
                (
                    n.attribute("scope").unwrap().to_owned(),
                    n.attribute("instance").unwrap().to_owned(),
                    n.attribute("id").unwrap().to_owned(),
                )
            })
            .collect();
        let rank = |s: &str| ["application", "relation", "view"].iter().position(|x| *x == s).unwrap();
        let mut sorted = keys.clone();
        sorted.sort_by(|a, b| (rank(&a.0), &a.1, &a.2).cmp(&(rank(&b.0), &b.1, &b.2)));
        assert_eq!(keys, sorted);
        assert_eq!(keys.len(), vp.assignments.len());
    }

    #[test]
    fn empty_viewpoint_layout() {
        let s = ApplicationState::new(schema()).unwrap();
        let mut vp = Viewpoint::capture(&s, MetaDraft { name: "e".into(), owner: Some("o".into()), ..Default::default() }, &clock()).unwrap();
        vp.assignments.clear();
        let text = vp.to_xml(&schema()).unwrap();
        assert!(text.contains("\n  <context/>\n  <preferences/>\n</viewpoint>\n"), "{text}");
        assert!(text.contains("<content></content>"));
        assert_eq!(Viewpoint::from_xml(&text, &schema(), None, None).unwrap(), vp);
    }

    #[test]
    fn load_rejects_bad_documents() {
        let dir = tempfile::tempdir().unwrap();
        let s = budget_state(dir.path());
        let vp = Viewpoint::capture(&s, draft(), &clock()).unwrap();
        let text = vp.to_xml(&schema()).unwrap();
        let load = |t: &str| Viewpoint::from_xml(t, &schema(), Some(&AreaList::builtin()), None);

        let bad = text.replace(r#"priority="must-see""#, r#"priority="urgent""#);
        assert!(matches!(load(&bad), Err(Error::Validation { .. })));

        let bad = text.replace(
            r#"<preference id="ui.default-view-count" scope="application" instance="""#,
            r#"<preference id="ui.default-view-count" scope="view" instance="pie1""#,
        );
        assert!(matches!(load(&bad), Err(Error::ScopeNotApplicable { .. })));

        let bad = text.replace(r#"format-version="1""#, r#"format-version="2""#);
        assert!(matches!(load(&bad), Err(Error::FormatVersion { .. })));

        let bad = text.replace(r#"area-id="fr""#, r#"area-id="atlantis""#);
        assert!(matches!(load(&bad), Err(Error::Validation { .. })));

        let bad = text.replace(r#"id="treemap.show-labels""#, r#"id="treemap.labels""#);
        assert!(matches!(load(&bad), Err(Error::UnknownPreference(_))));

        let bad = text.replace(">true</preference>", ">maybe</preference>");
        assert!(matches!(load(&bad), Err(Error::TypeMismatch { .. })));

        assert!(matches!(load("<viewpoint"), Err(Error::Parse { .. })));
    }

    #[test]
    fn unwritable_directory_leaves_no_file() {
        let dir = tempfile::tempdir().unwrap();
        let s = ApplicationState::new(schema()).unwrap();
        let mut vp = Viewpoint::capture(&s, draft(), &clock()).unwrap();
        let before = vp.clone();
        let target = dir.path().join("missing").join("vp.xml");
        assert!(matches!(vp.save_xml(&target, &schema(), &clock()), Err(Error::Io { .. })));
        assert_eq!(vp, before);
        assert!(!dir.path().join("missing").exists());
    }

    #[test]
    fn edit_metadata_keeps_assignments() {
        let dir = tempfile::tempdir().unwrap();
        let s = budget_state(dir.path());
        let vp = Viewpoint::capture(&s, draft(), &clock()).unwrap();
        let edited = vp
            .edit_metadata(
                MetaChanges {
                    attitude: Some(Attitude::Neutral),
                    ..Default::default()
                },
                None,
            )
            .unwrap();
        assert_eq!(edited.assignments, vp.assignments);
        assert_eq!(edited.meta.owner.attitude, Attitude::Neutral);
        let areas = AreaList::builtin();
        let err = vp.edit_metadata(
            MetaChanges {
                area_id: Some(Some("zz".into())),
                ..Default::default()
            },
            Some(&areas),
        );
        assert!(err.is_err());
    }

    #[test]
    fn apply_restores_captured_state() {
        let dir = tempfile::tempdir().unwrap();
        let s = budget_state(dir.path());
        let vp = Viewpoint::capture(&s, draft(), &clock()).unwrap();
        let mut fresh = ApplicationState::new(schema()).unwrap();
        vp.apply(&mut fresh).unwrap();
        assert_eq!(fresh, s);
        let mut same = s.clone();
        vp.apply(&mut same).unwrap();
        assert_eq!(same, s);
    }
}
