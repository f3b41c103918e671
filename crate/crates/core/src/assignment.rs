use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::schema::ScopeLevel;
use crate::value::Value;

/// Where a preference value is set: the whole application, one relation, or one view.
///
/// Field order gives the canonical sort (scope, instance, pref id).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AssignmentKey {
    pub scope: ScopeLevel,
    /// Empty for application scope, the relation name or view id otherwise.
    pub instance: String,
    pub pref_id: String,
}

impl AssignmentKey {
    pub fn application(pref_id: impl Into<String>) -> Self {
        AssignmentKey {
            scope: ScopeLevel::Application,
            instance: String::new(),
            pref_id: pref_id.into(),
        }
    }

    pub fn relation(relation: impl Into<String>, pref_id: impl Into<String>) -> Self {
        AssignmentKey {
            scope: ScopeLevel::Relation,
            instance: relation.into(),
            pref_id: pref_id.into(),
        }
    }

    pub fn view(view: impl Into<String>, pref_id: impl Into<String>) -> Self {
        AssignmentKey {
            scope: ScopeLevel::View,
            instance: view.into(),
            pref_id: pref_id.into(),
        }
    }

    pub fn new(pref_id: impl Into<String>, scope: ScopeLevel, instance: impl Into<String>) -> Result<Self, String> {
        let key = AssignmentKey {
            scope,
            instance: instance.into(),
            pref_id: pref_id.into(),
        };
        key.check()?;
        Ok(key)
    }

    /// Instance is empty exactly at application scope.
    pub fn check(&self) -> Result<(), String> {
        match (self.scope, self.instance.is_empty()) {
            (ScopeLevel::Application, false) => Err("application scope takes no instance".into()),
            (ScopeLevel::Relation | ScopeLevel::View, true) => {
                Err(format!("{} scope needs an instance name", self.scope))
            }
            _ => Ok(()),
        }
    }

    /// Parses the command-line scope spelling: `application`, `relation:NAME` or `view:ID`.
    pub fn parse_scope(text: &str) -> Result<(ScopeLevel, String), String> {
        let (level, instance) = match text.split_once(':') {
            Some((level, instance)) => (level, instance),
            None => (text, ""),
        };
        let level: ScopeLevel = level.parse()?;
        let key = AssignmentKey::new("", level, instance)?;
        Ok((key.scope, key.instance))
    }

    pub fn scope_label(&self) -> String {
        match self.scope {
            ScopeLevel::Application => "application".into(),
            level => format!("{level}:{}", self.instance),
        }
    }
}

impl fmt::Display for AssignmentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} @ {}", self.pref_id, self.scope_label())
    }
}

pub type Assignments = BTreeMap<AssignmentKey, Value>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_is_scope_instance_id() {
        let mut keys = vec![
            AssignmentKey::view("v1", "a"),
            AssignmentKey::relation("r", "z"),
            AssignmentKey::application("b"),
            AssignmentKey::view("v0", "z"),
            AssignmentKey::application("a"),
        ];
        keys.sort();
        let labels: Vec<String> = keys.iter().map(|k| k.to_string()).collect();
        assert_eq!(
            labels,
            ["a @ application", "b @ application", "z @ relation:r", "z @ view:v0", "a @ view:v1"]
        );
    }

    #[test]
    fn instance_iff_not_application() {
        assert!(AssignmentKey::new("p", ScopeLevel::Application, "x").is_err());
        assert!(AssignmentKey::new("p", ScopeLevel::View, "").is_err());
        assert!(AssignmentKey::new("p", ScopeLevel::Relation, "r").is_ok());
    }

    #[test]
    fn scope_spelling() {
        assert_eq!(AssignmentKey::parse_scope("application").unwrap(), (ScopeLevel::Application, String::new()));
        assert_eq!(AssignmentKey::parse_scope("view:v1").unwrap(), (ScopeLevel::View, "v1".into()));
        assert!(AssignmentKey::parse_scope("view").is_err());
        assert!(AssignmentKey::parse_scope("window:1").is_err());
    }
}
