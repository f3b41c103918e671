//! The preference universe: categories (nature of influence), the scope levels each
//! preference may be set at, and the weights used by the distance model.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::{PreferenceKind, Value};
use crate::weight::Weight;
use crate::xml::{self, Element, XmlWriter};

pub const SCHEMA_FORMAT_VERSION: u32 = 1;

const DEFAULT_SCHEMA: &str = include_str!("../data/default-schema.xml");

/// Level a preference applies to. Ordered application < relation < view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScopeLevel {
    Application,
    Relation,
    View,
}

impl ScopeLevel {
    pub const ALL: [ScopeLevel; 3] = [ScopeLevel::Application, ScopeLevel::Relation, ScopeLevel::View];

    pub fn as_str(self) -> &'static str {
        match self {
            ScopeLevel::Application => "application",
            ScopeLevel::Relation => "relation",
            ScopeLevel::View => "view",
        }
    }
}

impl fmt::Display for ScopeLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScopeLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "application" => Ok(ScopeLevel::Application),
            "relation" => Ok(ScopeLevel::Relation),
            "view" => Ok(ScopeLevel::View),
            other => Err(format!("unknown scope `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    /// Set through the preferences menu.
    Explicit,
    /// Follows from interaction with the views (current node, displayed attributes, ...).
    Implicit,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Explicit => "explicit",
            Origin::Implicit => "implicit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PreferenceCategory {
    pub name: String,
    pub display_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PreferenceDefinition {
    pub id: String,
    pub category: String,
    pub scopes: BTreeSet<ScopeLevel>,
    pub kind: PreferenceKind,
    pub weight: Weight,
    pub default: Value,
    pub origin: Origin,
}

impl PreferenceDefinition {
    pub fn applies_at(&self, level: ScopeLevel) -> bool {
        self.scopes.contains(&level)
    }
}

/// A validated schema. Immutable after loading.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceSchema {
    format_version: u32,
    categories: BTreeMap<String, PreferenceCategory>,
    preferences: BTreeMap<String, PreferenceDefinition>,
}

impl PreferenceSchema {
    /// The schema shipped with the crate: seven categories, weights documented inline.
    pub fn default_schema() -> Self {
        Self::from_xml(DEFAULT_SCHEMA).expect("shipped schema is valid")
    }

    pub fn default_schema_xml() -> &'static str {
        DEFAULT_SCHEMA
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_xml(&text)
    }

    pub fn from_xml(document: &str) -> Result<Self> {
        let root = xml::parse(document, "preference schema")?;
        if root.name != "preference-schema" {
            return Err(Error::validation(
                format!("<{}>", root.name),
                "expected <preference-schema> root",
            ));
        }
        let version = root.required("format-version")?;
        if version != SCHEMA_FORMAT_VERSION.to_string() {
            return Err(Error::FormatVersion {
                context: "preference schema".into(),
                found: version.into(),
            });
        }
        root.expect_children(&["category", "preference"])?;

        let mut categories = BTreeMap::new();
        for el in root.children_named("category") {
            let category = parse_category(el)?;
            if categories.contains_key(&category.name) {
                return Err(Error::validation(
                    element_label(el, "name"),
                    "duplicate category name",
                ));
            }
            categories.insert(category.name.clone(), category);
        }

        let mut preferences = BTreeMap::new();
        for el in root.children_named("preference") {
            let def = parse_preference(el)?;
            if !categories.contains_key(&def.category) {
                return Err(Error::validation(
                    element_label(el, "id"),
                    format!("unknown category `{}`", def.category),
                ));
            }
            if preferences.contains_key(&def.id) {
                return Err(Error::validation(element_label(el, "id"), "duplicate id"));
            }
            preferences.insert(def.id.clone(), def);
        }

        for el in root.children_named("category") {
            let name = el.required("name")?;
            if !preferences.values().any(|d| d.category == name) {
                return Err(Error::validation(
                    element_label(el, "name"),
                    "category declares no preferences",
                ));
            }
        }

        Ok(PreferenceSchema {
            format_version: SCHEMA_FORMAT_VERSION,
            categories,
            preferences,
        })
    }

    pub fn format_version(&self) -> u32 {
        self.format_version
    }

    pub fn categories(&self) -> impl Iterator<Item = &PreferenceCategory> {
        self.categories.values()
    }

    pub fn category(&self, name: &str) -> Option<&PreferenceCategory> {
        self.categories.get(name)
    }

    /// Definitions in id order.
    pub fn preferences(&self) -> impl Iterator<Item = &PreferenceDefinition> {
        self.preferences.values()
    }

    pub fn lookup(&self, id: &str) -> Option<&PreferenceDefinition> {
        self.preferences.get(id)
    }

    pub fn get(&self, id: &str) -> Result<&PreferenceDefinition> {
        self.lookup(id).ok_or_else(|| Error::UnknownPreference(id.to_owned()))
    }

    pub fn applicable_at(&self, id: &str, level: ScopeLevel) -> Result<bool> {
        Ok(self.get(id)?.applies_at(level))
    }

    pub fn total_weight(&self) -> Weight {
        self.preferences.values().map(|d| d.weight).sum()
    }

    /// Canonical document: categories then preferences, each sorted by name/id.
    pub fn to_xml(&self) -> String {
        let mut w = XmlWriter::new();
        let version = self.format_version.to_string();
        w.open(0, "preference-schema", &[("format-version", &version)]);
        for c in self.categories.values() {
            w.empty(1, "category", &[("name", &c.name), ("display-name", &c.display_name)]);
        }
        for d in self.preferences.values() {
            let scopes = d.scopes.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(",");
            let kind = d.kind.to_string();
            let weight = d.weight.to_string();
            let default = d.default.canonical();
            w.empty(
                1,
                "preference",
                &[
                    ("id", &d.id),
                    ("category", &d.category),
                    ("scopes", &scopes),
                    ("kind", &kind),
                    ("weight", &weight),
                    ("default", &default),
                    ("origin", d.origin.as_str()),
                ],
            );
        }
        w.close(0, "preference-schema");
        w.finish()
    }
}

fn element_label(el: &Element, key_attr: &str) -> String {
    match el.attr(key_attr) {
        Some(v) => format!("<{} {key_attr}=\"{v}\">", el.name),
        None => format!("<{}>", el.name),
    }
}

fn is_category_name(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.'))
}

fn parse_category(el: &Element) -> Result<PreferenceCategory> {
    let name = el.required("name")?;
    if !is_category_name(name) {
        return Err(Error::validation(
            element_label(el, "name"),
            "category name must match [a-z0-9-]+",
        ));
    }
    Ok(PreferenceCategory {
        name: name.to_owned(),
        display_name: el.attr("display-name").unwrap_or(name).to_owned(),
    })
}

fn parse_preference(el: &Element) -> Result<PreferenceDefinition> {
    let label = element_label(el, "id");
    let invalid = |msg: String| Error::validation(label.clone(), msg);

    let id = el.required("id")?;
    if !is_identifier(id) {
        return Err(invalid("id must match [A-Za-z0-9._-]+".into()));
    }
    let category = el.required("category")?;

    let mut scopes = BTreeSet::new();
    for part in el.required("scopes")?.split(',') {
        let level: ScopeLevel = part.trim().parse().map_err(invalid)?;
        if !scopes.insert(level) {
            return Err(invalid(format!("scope `{level}` listed twice")));
        }
    }

    let kind = PreferenceKind::parse(el.required("kind")?).map_err(invalid)?;
    let weight: Weight = el
        .required("weight")?
        .parse()
        .map_err(|e: crate::weight::ParseWeightError| invalid(e.to_string()))?;
    let default_text = el.required("default")?;
    let default = Value::parse(&kind, default_text)
        .map_err(|e| invalid(format!("default `{default_text}` is not a valid {kind}: {e}")))?;
    let origin = match el.attr("origin").unwrap_or("explicit") {
        "explicit" => Origin::Explicit,
        "implicit" => Origin::Implicit,
        other => return Err(invalid(format!("unknown origin `{other}`"))),
    };

    Ok(PreferenceDefinition {
        id: id.to_owned(),
        category: category.to_owned(),
        scopes,
        kind,
        weight,
        default,
        origin,
    })
}
