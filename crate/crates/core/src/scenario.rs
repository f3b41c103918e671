//! Scenarios: named, ordered lists of viewpoint file references, and a playback cursor.

use std::path::{Component, Path, PathBuf};

use serde::Serialize;

use crate::area::AreaList;
use crate::error::{Error, Result};
use crate::host::ApplicationState;
use crate::schema::PreferenceSchema;
use crate::viewpoint::{Summary, Viewpoint};
use crate::xml::{self, is_xml_char, XmlWriter};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScenarioStep<'a> {
    pub order: usize,
    pub reference: &'a Path,
}

/// Steps hold absolute, lexically normalized paths in memory; the file stores them relative
/// to its own directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub format_version: u32,
    name: String,
    path: PathBuf,
    refs: Vec<PathBuf>,
}

/// Absolute form of `path` with `.` and `..` resolved lexically.
pub fn normalize(path: &Path) -> PathBuf {
    let absolute = std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf());
    let mut out = PathBuf::new();
    for component in absolute.components() {
        match component {
            Component::CurDir => {}
            Component::ParentDir => {
                out.pop();
            }
            other => out.push(other),
        }
    }
    out
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() {
        return Err(Error::validation("<scenario>", "name must not be empty"));
    }
    if let Some(c) = name.chars().find(|c| !is_xml_char(*c)) {
        return Err(Error::validation("<scenario>", format!("name contains U+{:04X}", c as u32)));
    }
    Ok(())
}

impl Scenario {
    pub fn create(name: &str) -> Result<Scenario> {
        check_name(name)?;
        Ok(Scenario {
            format_version: FORMAT_VERSION,
            name: name.to_owned(),
            path: PathBuf::new(),
            refs: Vec::new(),
        })
    }

    pub fn from_refs<P: AsRef<Path>>(name: &str, refs: impl IntoIterator<Item = P>) -> Result<Scenario> {
        let mut sc = Scenario::create(name)?;
        sc.refs = refs.into_iter().map(|r| normalize(r.as_ref())).collect();
        for r in &sc.refs {
            check_ref(r)?;
        }
        Ok(sc)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rename(&mut self, name: &str) -> Result<()> {
        check_name(name)?;
        self.name = name.to_owned();
        Ok(())
    }

    /// Where the scenario was last saved or loaded from; empty for a new draft.
    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn refs(&self) -> &[PathBuf] {
        &self.refs
    }

    pub fn steps(&self) -> impl Iterator<Item = ScenarioStep<'_>> {
        self.refs.iter().enumerate().map(|(i, r)| ScenarioStep {
            order: i + 1,
            reference: r,
        })
    }

    /// Reference of the 1-based step `position`.
    pub fn step(&self, position: usize) -> Result<&Path> {
        self.check_position(position, self.refs.len())?;
        Ok(&self.refs[position - 1])
    }

    fn check_position(&self, position: usize, max: usize) -> Result<()> {
        if position == 0 || position > max {
            return Err(Error::OutOfRange { position, max });
        }
        Ok(())
    }

    /// Inserts `reference` so that it becomes step `position` (1..=n+1).
    pub fn insert_step(&mut self, position: usize, reference: &Path) -> Result<()> {
        self.check_position(position, self.refs.len() + 1)?;
        let reference = normalize(reference);
        check_ref(&reference)?;
        self.refs.insert(position - 1, reference);
        Ok(())
    }

    pub fn move_step(&mut self, from: usize, to: usize) -> Result<()> {
        self.check_position(from, self.refs.len())?;
        self.check_position(to, self.refs.len())?;
        let r = self.refs.remove(from - 1);
        self.refs.insert(to - 1, r);
        Ok(())
    }

    pub fn remove_step(&mut self, position: usize) -> Result<PathBuf> {
        self.check_position(position, self.refs.len())?;
        Ok(self.refs.remove(position - 1))
    }

    /// Canonical document for a file living in `dir`.
    pub fn to_xml(&self, dir: &Path) -> String {
        let mut w = XmlWriter::new();
        let version = self.format_version.to_string();
        let attrs = [("format-version", version.as_str()), ("name", self.name.as_str())];
        if self.refs.is_empty() {
            w.empty(0, "scenario", &attrs);
        } else {
            w.open(0, "scenario", &attrs);
            let dir = normalize(dir);
            for step in self.steps() {
                let stored = pathdiff::diff_paths(step.reference, &dir).unwrap_or_else(|| step.reference.to_path_buf());
                let order = step.order.to_string();
                w.empty(1, "step", &[("order", &order), ("ref", &stored.to_string_lossy())]);
            }
            w.close(0, "scenario");
        }
        w.finish()
    }

    /// Parses a scenario document; relative refs resolve against `dir`. Refs are not opened.
    pub fn from_xml(document: &str, dir: &Path) -> Result<Scenario> {
        let root = xml::parse(document, "scenario")?;
        if root.name != "scenario" {
            return Err(Error::validation(format!("<{}>", root.name), "expected <scenario> root"));
        }
        let version = root.required("format-version")?;
        if version != "1" {
            return Err(Error::FormatVersion {
                context: "scenario".into(),
                found: version.to_owned(),
            });
        }
        root.expect_children(&["step"])?;
        let mut sc = Scenario::create(root.required("name")?)?;
        let mut steps: Vec<(usize, PathBuf)> = Vec::new();
        for step in &root.children {
            let order_text = step.required("order")?;
            let order: usize = order_text
                .parse()
                .ok()
                .filter(|o: &usize| o.to_string() == order_text)
                .ok_or_else(|| Error::validation("<step>", format!("order `{order_text}` is not a positive integer")))?;
            let reference = step.required("ref")?;
            if reference.is_empty() {
                return Err(Error::validation(format!("<step order=\"{order}\">"), "empty ref"));
            }
            steps.push((order, normalize(&dir.join(reference))));
        }
        steps.sort_by_key(|(o, _)| *o);
        for (i, (order, _)) in steps.iter().enumerate() {
            if *order != i + 1 {
                return Err(Error::validation(
                    format!("<step order=\"{order}\">"),
                    format!("orders must run 1..{} without gaps or repeats", steps.len()),
                ));
            }
        }
        sc.refs = steps.into_iter().map(|(_, r)| r).collect();
        Ok(sc)
    }

    pub fn load_xml(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let path = normalize(path);
        let dir = path.parent().unwrap_or(Path::new("/"));
        let mut sc = Scenario::from_xml(&text, dir).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                context: path.display().to_string(),
                message,
            },
            other => other,
        })?;
        sc.path = path;
        Ok(sc)
    }

    pub fn save_xml(&mut self, path: &Path) -> Result<()> {
        let path = normalize(path);
        let dir = path.parent().unwrap_or(Path::new("/"));
        xml::write_atomic(&path, self.to_xml(dir).as_bytes())?;
        self.path = path;
        Ok(())
    }

    /// Metadata digest per step; unreadable steps are flagged instead of failing the whole list.
    pub fn preview(&self, schema: &PreferenceSchema, areas: Option<&AreaList>) -> Vec<StepPreview> {
        self.steps()
            .map(|step| {
                let loaded = Viewpoint::load_xml(step.reference, schema, areas);
                let (summary, error) = match loaded {
                    Ok(vp) => (Some(vp.summary(areas)), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                StepPreview {
                    order: step.order,
                    reference: step.reference.to_path_buf(),
                    broken: summary.is_none(),
                    summary,
                    error,
                }
            })
            .collect()
    }
}

fn check_ref(reference: &Path) -> Result<()> {
    let text = reference.to_string_lossy();
    if let Some(c) = text.chars().find(|c| !is_xml_char(*c)) {
        return Err(Error::validation("<step>", format!("ref contains U+{:04X}", c as u32)));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StepPreview {
    pub order: usize,
    pub reference: PathBuf,
    pub broken: bool,
    pub summary: Option<Summary>,
    pub error: Option<String>,
}

/// Playback cursor over a scenario. Positioning loads the step's viewpoint and applies it to the
/// state passed in; a failed positioning leaves both cursor and state as they were.
#[derive(Debug, Clone)]
pub struct Player {
    scenario: Scenario,
    position: Option<usize>,
}

impl Player {
    pub fn new(scenario: Scenario) -> Player {
        Player {
            scenario,
            position: None,
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// 1-based index of the current step, `None` before the first positioning.
    pub fn position(&self) -> Option<usize> {
        self.position
    }

    pub fn goto(&mut self, index: usize, state: &mut ApplicationState) -> Result<Viewpoint> {
        let path = self.scenario.step(index)?.to_path_buf();
        let step_err = |source: Error| Error::Step {
            index,
            path: path.clone(),
            source: Box::new(source),
        };
        let vp = Viewpoint::load_xml(&path, state.schema(), None).map_err(step_err)?;
        vp.apply(state).map_err(step_err)?;
        self.position = Some(index);
        Ok(vp)
    }

    pub fn next(&mut self, state: &mut ApplicationState) -> Result<Viewpoint> {
        let target = self.position.map_or(1, |p| p + 1);
        if target > self.scenario.len() {
            return Err(Error::EndOfScenario);
        }
        self.goto(target, state)
    }

    pub fn prev(&mut self, state: &mut ApplicationState) -> Result<Viewpoint> {
        match self.position {
            Some(p) if p > 1 => self.goto(p - 1, state),
            _ => Err(Error::StartOfScenario),
        }
    }
}
