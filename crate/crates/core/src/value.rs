use std::fmt;

use serde::{Deserialize, Serialize};

use crate::xml::is_xml_char;

/// Value domain of a preference.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type", content = "values")]
pub enum PreferenceKind {
    Boolean,
    Integer,
    Decimal,
    String,
    Enum(Vec<String>),
    Color,
    AttributeList,
}

impl PreferenceKind {
    /// Short name used in viewpoint and diff documents (`enum` without its value list).
    pub fn tag(&self) -> &'static str {
        match self {
            PreferenceKind::Boolean => "boolean",
            PreferenceKind::Integer => "integer",
            PreferenceKind::Decimal => "decimal",
            PreferenceKind::String => "string",
            PreferenceKind::Enum(_) => "enum",
            PreferenceKind::Color => "color",
            PreferenceKind::AttributeList => "attribute-list",
        }
    }

    /// Parses the schema spelling, e.g. `enum(tiled|tabbed)`.
    pub fn parse(spelling: &str) -> Result<Self, String> {
        let kind = match spelling {
            "boolean" => PreferenceKind::Boolean,
            "integer" => PreferenceKind::Integer,
            "decimal" => PreferenceKind::Decimal,
            "string" => PreferenceKind::String,
            "color" => PreferenceKind::Color,
            "attribute-list" => PreferenceKind::AttributeList,
            other => {
                let inner = other
                    .strip_prefix("enum(")
                    .and_then(|s| s.strip_suffix(')'))
                    .ok_or_else(|| format!("unknown kind `{other}`"))?;
                let values: Vec<String> = inner.split('|').map(str::to_owned).collect();
                if values.iter().any(|v| v.is_empty()) {
                    return Err(format!("enum kind `{other}` has an empty value"));
                }
                let mut seen = std::collections::BTreeSet::new();
                if let Some(dup) = values.iter().find(|v| !seen.insert(v.as_str())) {
                    return Err(format!("enum kind `{other}` repeats `{dup}`"));
                }
                PreferenceKind::Enum(values)
            }
        };
        Ok(kind)
    }
}

impl fmt::Display for PreferenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PreferenceKind::Enum(values) => write!(f, "enum({})", values.join("|")),
            other => f.write_str(other.tag()),
        }
    }
}

/// A typed preference value. Equality is equality of the canonical text form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type", content = "value")]
pub enum Value {
    Boolean(bool),
    Integer(i64),
    Decimal(f64),
    String(String),
    Enum(String),
    Color([u8; 3]),
    AttributeList(Vec<String>),
}

impl Value {
    /// Parses `text` as a value of `kind`, accepting lenient spellings (`+5`, `#ABCDEF`) that
    /// normalize to one canonical form.
    pub fn parse(kind: &PreferenceKind, text: &str) -> Result<Value, String> {
        let value = match kind {
            PreferenceKind::Boolean => match text {
                "true" => Value::Boolean(true),
                "false" => Value::Boolean(false),
                _ => return Err("expected `true` or `false`".into()),
            },
            PreferenceKind::Integer => Value::Integer(
                text.trim()
                    .parse::<i64>()
                    .map_err(|_| "expected an integer".to_string())?,
            ),
            PreferenceKind::Decimal => {
                let x: f64 = text
                    .trim()
                    .parse()
                    .map_err(|_| "expected a decimal number".to_string())?;
                if !x.is_finite() {
                    return Err("expected a finite decimal number".into());
                }
                // -0 and 0 share one canonical spelling.
                Value::Decimal(if x == 0.0 { 0.0 } else { x })
            }
            PreferenceKind::String => {
                if let Some(c) = text.chars().find(|c| !is_xml_char(*c)) {
                    return Err(format!("character U+{:04X} cannot be stored", c as u32));
                }
                Value::String(text.to_owned())
            }
            PreferenceKind::Enum(allowed) => {
                if !allowed.iter().any(|a| a == text) {
                    return Err(format!("expected one of {}", allowed.join("|")));
                }
                Value::Enum(text.to_owned())
            }
            PreferenceKind::Color => Value::Color(parse_color(text)?),
            PreferenceKind::AttributeList => Value::AttributeList(parse_attribute_list(text)?),
        };
        Ok(value)
    }

    pub fn matches(&self, kind: &PreferenceKind) -> bool {
        match (self, kind) {
            (Value::Boolean(_), PreferenceKind::Boolean)
            | (Value::Integer(_), PreferenceKind::Integer)
            | (Value::Color(_), PreferenceKind::Color) => true,
            (Value::Decimal(x), PreferenceKind::Decimal) => x.is_finite(),
            (Value::String(s), PreferenceKind::String) => s.chars().all(is_xml_char),
            (Value::Enum(v), PreferenceKind::Enum(allowed)) => allowed.contains(v),
            (Value::AttributeList(names), PreferenceKind::AttributeList) => {
                parse_attribute_list(&names.join(",")).as_deref() == Ok(names.as_slice())
            }
            _ => false,
        }
    }

    pub fn canonical(&self) -> String {
        self.to_string()
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::String(s) | Value::Enum(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Boolean(b) => write!(f, "{b}"),
            Value::Integer(i) => write!(f, "{i}"),
            Value::Decimal(x) => write!(f, "{x}"),
            Value::String(s) | Value::Enum(s) => f.write_str(s),
            Value::Color([r, g, b]) => write!(f, "#{r:02x}{g:02x}{b:02x}"),
            Value::AttributeList(names) => f.write_str(&names.join(",")),
        }
    }
}

fn parse_color(text: &str) -> Result<[u8; 3], String> {
    let hex = text
        .strip_prefix('#')
        .filter(|h| h.len() == 6 && h.bytes().all(|b| b.is_ascii_hexdigit()))
        .ok_or_else(|| "expected a #rrggbb color".to_string())?;
    let channel = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).map_err(|e| e.to_string());
    Ok([channel(0)?, channel(2)?, channel(4)?])
}

/// Comma-separated attribute names; the empty string is the empty list.
fn parse_attribute_list(text: &str) -> Result<Vec<String>, String> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let names: Vec<String> = text.split(',').map(str::to_owned).collect();
    if names.iter().any(|n| n.is_empty()) {
        return Err("attribute list has an empty name".into());
    }
    if let Some(c) = text.chars().find(|c| !is_xml_char(*c)) {
        return Err(format!("character U+{:04X} cannot be stored", c as u32));
    }
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
        return Err(format!("attribute `{dup}` listed twice"));
    }
    Ok(names)
}
