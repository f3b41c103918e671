//! On-disk layout shared by the command line and the service.

use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use traceview_core::area::AreaList;
use traceview_core::clock::Clock;
use traceview_core::scenario::normalize;
use traceview_core::viewpoint::MetaDraft;
use traceview_core::{ApplicationState, Error, PreferenceSchema, Result, Viewpoint};

pub const CONFIG_FILE: &str = "traceview.toml";
pub const SESSION_FILE: &str = ".session.xml";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema: PathBuf,
    pub viewpoints: PathBuf,
    pub scenarios: PathBuf,
    #[serde(default)]
    pub areas: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            schema: "schema.xml".into(),
            viewpoints: "viewpoints".into(),
            scenarios: "scenarios".into(),
            areas: Some("areas.csv".into()),
        }
    }
}

/// A directory holding a schema, viewpoints, scenarios and the current session.
///
/// Without a config file the built-in schema and area list are used, so plain directories of
/// viewpoint files can be compared without `init`.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
    config: Config,
    configured: bool,
    schema: Arc<PreferenceSchema>,
    areas: Arc<AreaList>,
}

fn validation(element: &str, message: impl ToString) -> Error {
    Error::Validation {
        element: element.to_owned(),
        message: message.to_string(),
    }
}

fn io(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_owned(),
        source,
    }
}

impl Workspace {
    pub fn init(root: &Path) -> Result<Workspace> {
        let root = normalize(root);
        let config_path = root.join(CONFIG_FILE);
        if config_path.exists() {
            return Err(Error::Conflict(format!("{} already exists", config_path.display())));
        }
        let config = Config::default();
        for dir in [&root, &root.join(&config.viewpoints), &root.join(&config.scenarios)] {
            std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        }
        let schema_path = root.join(&config.schema);
        if !schema_path.exists() {
            traceview_core::xml::write_atomic(&schema_path, PreferenceSchema::default_schema_xml().as_bytes())?;
        }
        if let Some(areas) = &config.areas {
            let path = root.join(areas);
            if !path.exists() {
                traceview_core::xml::write_atomic(&path, AreaList::builtin_csv().as_bytes())?;
            }
        }
        let text = toml::to_string(&config).expect("config serializes");
        traceview_core::xml::write_atomic(&config_path, text.as_bytes())?;
        Workspace::open(&root)
    }

    pub fn open(root: &Path) -> Result<Workspace> {
        let root = normalize(root);
        let config_path = root.join(CONFIG_FILE);
        let (config, configured) = match std::fs::read_to_string(&config_path) {
            Ok(text) => (toml::from_str(&text).map_err(|e| validation(CONFIG_FILE, e.message()))?, true),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => (
                Config {
                    areas: None,
                    ..Config::default()
                },
                false,
            ),
            Err(e) => return Err(io(&config_path, e)),
        };
        let schema = if configured {
            PreferenceSchema::load(&root.join(&config.schema))?
        } else {
            PreferenceSchema::default_schema()
        };
        let areas = match &config.areas {
            Some(path) => AreaList::load(&root.join(path))?,
            None => AreaList::builtin(),
        };
        Ok(Workspace {
            root,
            config,
            configured,
            schema: Arc::new(schema),
            areas: Arc::new(areas),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn is_configured(&self) -> bool {
        self.configured
    }

    pub fn schema(&self) -> &Arc<PreferenceSchema> {
        &self.schema
    }

    pub fn schema_path(&self) -> PathBuf {
        self.root.join(&self.config.schema)
    }

    pub fn areas(&self) -> &AreaList {
        &self.areas
    }

    pub fn viewpoint_dir(&self) -> PathBuf {
        self.root.join(&self.config.viewpoints)
    }

    pub fn scenario_dir(&self) -> PathBuf {
        self.root.join(&self.config.scenarios)
    }

    pub fn session_path(&self) -> PathBuf {
        self.root.join(SESSION_FILE)
    }

    /// The persisted exploration session, or a fresh one.
    pub fn session(&self) -> Result<ApplicationState> {
        let path = self.session_path();
        if !path.exists() {
            return ApplicationState::new(self.schema.clone());
        }
        let vp = Viewpoint::load_xml(&path, &self.schema, None)?;
        ApplicationState::from_snapshot(self.schema.clone(), &vp.snapshot())
    }

    pub fn save_session(&self, state: &ApplicationState, clock: &dyn Clock) -> Result<()> {
        let draft = MetaDraft {
            name: "session".into(),
            ..Default::default()
        };
        let mut vp = Viewpoint::capture(state, draft, clock)?;
        vp.save_xml(&self.session_path(), &self.schema, clock)
    }

    /// Workspace-relative id of `path` with `/` separators, or the absolute path when it lies outside.
    pub fn id_of(&self, path: &Path) -> String {
        let path = normalize(path);
        match path.strip_prefix(&self.root) {
            Ok(rel) => rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/"),
            Err(_) => path.to_string_lossy().into_owned(),
        }
    }

    /// Path of a workspace-relative id. Ids may not leave the workspace.
    pub fn resolve(&self, id: &str) -> Result<PathBuf> {
        let rel = Path::new(id);
        let escapes = id.is_empty()
            || rel
                .components()
                .any(|c| !matches!(c, Component::Normal(_) | Component::CurDir));
        if escapes {
            return Err(validation("id", format!("`{id}` is not a workspace-relative path")));
        }
        Ok(self.root.join(rel))
    }

    pub fn viewpoint_ids(&self) -> Result<Vec<String>> {
        self.xml_ids(&self.viewpoint_dir())
    }

    pub fn scenario_ids(&self) -> Result<Vec<String>> {
        self.xml_ids(&self.scenario_dir())
    }

    fn xml_ids(&self, dir: &Path) -> Result<Vec<String>> {
        let mut found = Vec::new();
        let mut pending = vec![dir.to_path_buf()];
        while let Some(dir) = pending.pop() {
            let entries = match std::fs::read_dir(&dir) {
                Ok(entries) => entries,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => continue,
                Err(e) => return Err(io(&dir, e)),
            };
            for entry in entries {
                let path = entry.map_err(|e| io(&dir, e))?.path();
                let hidden = path.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.'));
                if hidden {
                    continue;
                }
                if path.is_dir() {
                    pending.push(path);
                } else if path.extension().is_some_and(|e| e == "xml") {
                    found.push(self.id_of(&path));
                }
            }
        }
        found.sort();
        Ok(found)
    }
}
