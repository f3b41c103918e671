//! Preloaded list of geographic areas a viewpoint can be tagged with.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_AREAS: &str = include_str!("../data/areas.csv");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Area {
    pub id: String,
    pub name: String,
    pub icon: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AreaList {
    areas: BTreeMap<String, Area>,
}

impl AreaList {
    /// ISO 3166-1 alpha-2 codes (lowercase) plus `world`.
    pub fn builtin() -> Self {
        Self::from_reader(DEFAULT_AREAS.as_bytes(), Path::new("<builtin areas>")).expect("bundled area list is valid")
    }

    pub fn builtin_csv() -> &'static str {
        DEFAULT_AREAS
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, path)
    }

    fn from_reader(reader: impl std::io::Read, path: &Path) -> Result<Self> {
        let csv_err = |message: String| Error::Csv {
            path: path.to_path_buf(),
            message,
        };
        let mut rdr = csv::Reader::from_reader(reader);
        let mut areas = BTreeMap::new();
        for record in rdr.deserialize::<Area>() {
            let area = record.map_err(|e| csv_err(e.to_string()))?;
            if area.id.is_empty() {
                return Err(csv_err("empty area id".into()));
            }
            if areas.insert(area.id.clone(), area.clone()).is_some() {
                return Err(csv_err(format!("duplicate area `{}`", area.id)));
            }
        }
        Ok(AreaList { areas })
    }

    pub fn get(&self, id: &str) -> Option<&Area> {
        self.areas.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.areas.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Area> {
        self.areas.values()
    }

    pub fn len(&self) -> usize {
        self.areas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.areas.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_has_world_and_countries() {
        let areas = AreaList::builtin();
        assert_eq!(areas.get("world").unwrap().name, "World");
        assert_eq!(areas.get("fr").unwrap().name, "France");
        assert_eq!(areas.len(), 250);
        assert!(!areas.contains("FR"));
    }

    #[test]
    fn rejects_duplicates() {
        let data = "id,name,icon\na,A,a.svg\na,B,b.svg\n";
        assert!(AreaList::from_reader(data.as_bytes(), Path::new("x")).is_err());
    }
}
