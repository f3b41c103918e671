use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use traceview_core::clock::{clock_from_env, Clock};
use traceview_core::diff::{self, DiffReport};
use traceview_core::host::{CurrentNode, ExplorationAction, ViewKind, ViewRole, ViewSpec, WindowGeometry};
use traceview_core::projection::LabelMode;
use traceview_core::scenario::Player;
use traceview_core::viewpoint::{Attitude, MetaChanges, MetaDraft, Priority};
use traceview_core::{AssignmentKey, Error, PreferenceSchema, Result, Scenario, ScopeLevel, Viewpoint, Weight};

use crate::engine;
use crate::workspace::Workspace;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "traceview", version, about = "Record, compare and replay exploration viewpoints")]
struct Cli {
    /// Workspace directory.
    #[arg(short, long, global = true, default_value = ".")]
    workspace: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create a workspace with the default schema and area list.
    Init,
    #[command(subcommand)]
    Schema(SchemaCommand),
    /// Load a CSV file into the session.
    Load {
        csv: PathBuf,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        time_column: Option<String>,
    },
    /// Set an explicit preference: scope is `application`, `relation:NAME` or `view:ID`.
    Set { pref: String, scope: String, value: String },
    #[command(subcommand)]
    Explore(ExploreCommand),
    /// Show the session state.
    Status,
    #[command(subcommand)]
    Vp(VpCommand),
    #[command(subcommand)]
    Scn(ScnCommand),
    /// Weighted difference between two viewpoints.
    Diff {
        a: PathBuf,
        b: PathBuf,
        /// Also write the full report as XML.
        #[arg(long)]
        xml: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        top: usize,
    },
    /// Place viewpoints on a plane and report projection quality.
    Compare {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Write the layout document as JSON.
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long, default_value = "computed")]
        label: LabelMode,
    },
    /// Serve the JSON API and the UI bundle.
    Serve {
        #[arg(long, default_value_t = 7341)]
        port: u16,
    },
}

#[derive(Debug, Subcommand)]
enum SchemaCommand {
    /// Check a schema file, the workspace schema by default.
    Validate { file: Option<PathBuf> },
}

#[derive(Debug, Subcommand)]
enum ExploreCommand {
    /// Open a view on a loaded relation.
    Open {
        id: String,
        relation: String,
        #[arg(long, default_value = "table")]
        kind: ViewKind,
        #[arg(long, default_value = "master")]
        role: ViewRole,
    },
    Close { view: String },
    /// Select `root` or a row number.
    Node { view: String, node: CurrentNode },
    /// Comma-separated attribute list.
    Attributes { view: String, attributes: String },
    Range {
        view: String,
        filter: String,
        attribute: String,
        #[arg(allow_negative_numbers = true)]
        lo: f64,
        #[arg(allow_negative_numbers = true)]
        hi: f64,
    },
    Values {
        view: String,
        filter: String,
        attribute: String,
        values: Vec<String>,
    },
    Unfilter { view: String, filter: String },
    /// Window geometry as `x,y,width,height`.
    Move {
        view: String,
        #[arg(allow_hyphen_values = true)]
        geometry: WindowGeometry,
    },
}

#[derive(Debug, Args)]
struct MetaArgs {
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    description: Option<String>,
    #[arg(long)]
    priority: Option<Priority>,
    #[arg(long)]
    attitude: Option<Attitude>,
    /// Area id, `none` to clear.
    #[arg(long)]
    area: Option<String>,
    /// Image reference, `none` to clear.
    #[arg(long)]
    image: Option<String>,
}

#[derive(Debug, Subcommand)]
enum VpCommand {
    /// Capture the session as a viewpoint file.
    Save {
        file: PathBuf,
        #[command(flatten)]
        meta: MetaArgs,
    },
    Show { file: PathBuf },
    /// Change metadata; preferences are left alone.
    Edit {
        file: PathBuf,
        #[command(flatten)]
        meta: MetaArgs,
    },
    /// Bring the session into the viewpoint's configuration.
    Apply { file: PathBuf },
}

#[derive(Debug, Subcommand)]
enum ScnCommand {
    New {
        file: PathBuf,
        #[arg(long)]
        name: String,
        refs: Vec<PathBuf>,
    },
    Add {
        file: PathBuf,
        viewpoint: PathBuf,
        /// 1-based position, the end by default.
        #[arg(long)]
        at: Option<usize>,
    },
    Move { file: PathBuf, from: usize, to: usize },
    Rm { file: PathBuf, position: usize },
    /// Apply one step to the session, or walk all steps in order.
    Play {
        file: PathBuf,
        #[arg(long)]
        step: Option<usize>,
    },
    Preview { file: PathBuf },
}

/// Runs the command line with `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let clock = match clock_from_env() {
        Ok(clock) => clock,
        Err(message) => {
            let _ = writeln!(err, "error: {message}");
            return EXIT_INVALID;
        }
    };
    match execute(cli, clock.as_ref(), out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_io() {
        EXIT_IO
    } else {
        EXIT_INVALID
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|source| Error::Io {
        path: "<stdout>".into(),
        source,
    })
}

fn execute(cli: Cli, clock: &dyn Clock, out: &mut dyn Write) -> Result<()> {
    let root = &cli.workspace;
    let text = match cli.command {
        Command::Init => {
            let ws = Workspace::init(root)?;
            format!("initialized workspace {}\n", ws.root().display())
        }
        Command::Schema(SchemaCommand::Validate { file }) => {
            let path = match file {
                Some(file) => file,
                None => Workspace::open(root)?.schema_path(),
            };
            let schema = PreferenceSchema::load(&path)?;
            format!(
                "{}: ok, {} preferences in {} categories, total weight {}\n",
                path.display(),
                schema.preferences().count(),
                schema.categories().count(),
                schema.total_weight()
            )
        }
        Command::Load {
            csv,
            name,
            time_column,
        } => {
            let ws = Workspace::open(root)?;
            let mut state = ws.session()?;
            let relation = state.load_dataset(&csv, name.as_deref(), time_column.as_deref())?;
            let mut text = format!("loaded relation {} ({} rows)\n", relation.name, relation.rows.len());
            for c in &relation.columns {
                let _ = writeln!(text, "  {}: {}", c.name, c.kind.as_str());
            }
            ws.save_session(&state, clock)?;
            text
        }
        Command::Set { pref, scope, value } => {
            let ws = Workspace::open(root)?;
            let mut state = ws.session()?;
            let key = parse_scope(&pref, &scope)?;
            state.set_preference(key.clone(), &value)?;
            ws.save_session(&state, clock)?;
            format!("{} = {}\n", describe_key(&key), state.get(&key).map(|v| v.canonical()).unwrap_or_default())
        }
        Command::Explore(action) => {
            let ws = Workspace::open(root)?;
            let mut state = ws.session()?;
            let text = explore(&mut state, action)?;
            ws.save_session(&state, clock)?;
            text
        }
        Command::Status => {
            let ws = Workspace::open(root)?;
            status_text(&ws.session()?)
        }
        Command::Vp(cmd) => vp(root, cmd, clock)?,
        Command::Scn(cmd) => scn(root, cmd, clock)?,
        Command::Diff { a, b, xml, top } => {
            let ws = Workspace::open(root)?;
            let report = engine::diff_files(&ws, (&label(&a), &a), (&label(&b), &b))?;
            if let Some(path) = xml {
                diff::write_xml(&report, &path)?;
            }
            diff_text(&report, top)
        }
        Command::Compare { files, layout, label: mode } => {
            let ws = Workspace::open(root)?;
            let entries: Vec<(String, PathBuf)> = files.iter().map(|f| (label(f), f.clone())).collect();
            let cmp = engine::compare_files(&ws, &entries)?;
            if let Some(path) = layout {
                traceview_core::projection::write_layout(&cmp.export(mode), &path)?;
            }
            compare_text(&cmp)
        }
        Command::Serve { port } => {
            let ws = Workspace::open(root)?;
            emit(out, &format!("serving {} on http://127.0.0.1:{port}\n", ws.root().display()))?;
            out.flush().ok();
            crate::service::serve(ws, port)?;
            String::new()
        }
    };
    emit(out, &text)
}

/// Label for a file argument: the path as typed.
fn label(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

fn parse_scope(pref: &str, scope: &str) -> Result<AssignmentKey> {
    let (level, instance) = match scope.split_once(':') {
        Some((level, instance)) => (level, instance),
        None => (scope, ""),
    };
    let level: ScopeLevel = level.parse().map_err(|message: String| Error::Validation {
        element: "scope".into(),
        message,
    })?;
    AssignmentKey::new(pref, level, instance).map_err(|message| Error::Validation {
        element: "scope".into(),
        message,
    })
}

fn describe_key(key: &AssignmentKey) -> String {
    if key.instance.is_empty() {
        format!("{} [{}]", key.pref_id, key.scope)
    } else {
        format!("{} [{}:{}]", key.pref_id, key.scope, key.instance)
    }
}

fn explore(state: &mut traceview_core::ApplicationState, action: ExploreCommand) -> Result<String> {
    let action = match action {
        ExploreCommand::Open { id, relation, kind, role } => {
            let view = state.open_view(ViewSpec { id, relation, kind, role })?;
            return Ok(format!("opened {} view {} on {}\n", view.kind, view.id, view.relation));
        }
        ExploreCommand::Close { view } => {
            state.close_view(&view)?;
            return Ok(format!("closed view {view}\n"));
        }
        ExploreCommand::Node { view, node } => ExplorationAction::SetCurrentNode { view, node },
        ExploreCommand::Attributes { view, attributes } => ExplorationAction::SetAttributes {
            view,
            attributes: attributes
                .split(',')
                .map(str::trim)
                .filter(|a| !a.is_empty())
                .map(str::to_owned)
                .collect(),
        },
        ExploreCommand::Range {
            view,
            filter,
            attribute,
            lo,
            hi,
        } => ExplorationAction::SetFilterRange {
            view,
            filter,
            attribute,
            lo,
            hi,
        },
        ExploreCommand::Values {
            view,
            filter,
            attribute,
            values,
        } => ExplorationAction::SetFilterValues {
            view,
            filter,
            attribute,
            values: values.into_iter().collect::<BTreeSet<_>>(),
        },
        ExploreCommand::Unfilter { view, filter } => ExplorationAction::RemoveFilter { view, filter },
        ExploreCommand::Move { view, geometry } => ExplorationAction::MoveWindow { view, geometry },
    };
    state.mutate_exploration(action)?;
    Ok("ok\n".into())
}

fn status_text(state: &traceview_core::ApplicationState) -> String {
    let s = engine::state_summary(state);
    let mut text = String::new();
    for r in &s.relations {
        let _ = writeln!(text, "relation {} ({} rows) from {}", r.name, r.rows, r.source.display());
    }
    for v in &s.views {
        let _ = writeln!(
            text,
            "view {} {} {} on {}: node {}, attributes [{}], window {}",
            v.id,
            v.kind,
            v.role,
            v.relation,
            v.current_node,
            v.attributes.join(", "),
            v.window_geometry
        );
    }
    for f in &s.filters {
        let _ = writeln!(text, "filter {} on {}.{}: {}", f.id, f.view, f.attribute, f.criterion);
    }
    if let (Some(start), Some(end)) = (&s.period_start, &s.period_end) {
        let _ = writeln!(text, "period {start} .. {end}");
    }
    let _ = writeln!(text, "{} preference assignments", s.assignments);
    text
}

fn optional(text: Option<String>) -> Option<Option<String>> {
    text.map(|t| if t == "none" { None } else { Some(t) })
}

fn vp(root: &Path, cmd: VpCommand, clock: &dyn Clock) -> Result<String> {
    let ws = Workspace::open(root)?;
    match cmd {
        VpCommand::Save { file, meta } => {
            let state = ws.session()?;
            let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let draft = MetaDraft {
                name: meta.name.unwrap_or(stem),
                description: meta.description.unwrap_or_default(),
                priority: meta.priority.unwrap_or_default(),
                attitude: meta.attitude.unwrap_or_default(),
                area_id: optional(meta.area).flatten(),
                image: optional(meta.image).flatten(),
                owner: None,
            };
            let mut vp = Viewpoint::capture(&state, draft, clock)?;
            vp.validate(ws.schema(), Some(ws.areas()))?;
            vp.save_xml(&file, ws.schema(), clock)?;
            Ok(format!("saved {} ({} preferences)\n", file.display(), vp.assignments.len()))
        }
        VpCommand::Show { file } => {
            let vp = engine::load_viewpoint(&ws, &file)?;
            Ok(show_text(&ws, &vp))
        }
        VpCommand::Edit { file, meta } => {
            let vp = engine::load_viewpoint(&ws, &file)?;
            let changes = MetaChanges {
                name: meta.name,
                description: meta.description,
                priority: meta.priority,
                attitude: meta.attitude,
                area_id: optional(meta.area),
                image: optional(meta.image),
            };
            let mut edited = vp.edit_metadata(changes, Some(ws.areas()))?;
            edited.save_xml(&file, ws.schema(), clock)?;
            Ok(format!("updated {}\n", file.display()))
        }
        VpCommand::Apply { file } => {
            let vp = engine::load_viewpoint(&ws, &file)?;
            let mut state = ws.session()?;
            vp.apply(&mut state)?;
            ws.save_session(&state, clock)?;
            Ok(format!("applied {}\n{}", vp.meta.file.name, status_text(&state)))
        }
    }
}

fn show_text(ws: &Workspace, vp: &Viewpoint) -> String {
    let s = vp.summary(Some(ws.areas()));
    let mut text = String::new();
    let _ = writeln!(text, "name: {}", s.name);
    let _ = writeln!(text, "saved-at: {}", s.saved_at);
    let _ = writeln!(text, "owner: {}", s.owner);
    let _ = writeln!(text, "priority: {}", s.priority);
    let _ = writeln!(text, "attitude: {} {}", s.attitude, s.attitude_icon);
    if let Some(area) = &s.area_id {
        let _ = writeln!(text, "area: {} {}", area, s.area_name.as_deref().unwrap_or(""));
    }
    if let (Some(start), Some(end)) = (s.period_start, s.period_end) {
        let _ = writeln!(text, "period: {start} .. {end}");
    }
    if let Some(image) = &s.image {
        let _ = writeln!(text, "image: {image}");
    }
    if !s.description.is_empty() {
        let _ = writeln!(text, "description: {}", s.description);
    }
    for r in &vp.context.relations {
        let _ = writeln!(text, "relation {} from {}", r.name, r.source.display());
    }
    for v in &vp.context.views {
        let _ = writeln!(text, "view {} {} {} on {}", v.id, v.kind, v.role, v.relation);
    }
    let _ = writeln!(text, "preferences ({}):", vp.assignments.len());
    for (key, value) in &vp.assignments {
        let _ = writeln!(text, "  {} = {}", describe_key(key), value.canonical());
    }
    text
}

fn scn(root: &Path, cmd: ScnCommand, clock: &dyn Clock) -> Result<String> {
    let ws = Workspace::open(root)?;
    match cmd {
        ScnCommand::New { file, name, refs } => {
            if file.exists() {
                return Err(Error::Conflict(format!("{} already exists", file.display())));
            }
            let mut scenario = Scenario::from_refs(&name, &refs)?;
            scenario.save_xml(&file)?;
            Ok(format!("created {} with {} steps\n", file.display(), scenario.len()))
        }
        ScnCommand::Add { file, viewpoint, at } => {
            let mut scenario = Scenario::load_xml(&file)?;
            let position = at.unwrap_or(scenario.len() + 1);
            scenario.insert_step(position, &viewpoint)?;
            scenario.save_xml(&file)?;
            Ok(format!("step {position} is {}\n", viewpoint.display()))
        }
        ScnCommand::Move { file, from, to } => {
            let mut scenario = Scenario::load_xml(&file)?;
            scenario.move_step(from, to)?;
            scenario.save_xml(&file)?;
            Ok(format!("moved step {from} to {to}\n"))
        }
        ScnCommand::Rm { file, position } => {
            let mut scenario = Scenario::load_xml(&file)?;
            let removed = scenario.remove_step(position)?;
            scenario.save_xml(&file)?;
            Ok(format!("removed step {position} ({})\n", removed.display()))
        }
        ScnCommand::Play { file, step } => {
            let scenario = Scenario::load_xml(&file)?;
            let total = scenario.len();
            let mut player = Player::new(scenario);
            let mut state = ws.session()?;
            let steps: Vec<usize> = match step {
                Some(i) => vec![i],
                None => (1..=total).collect(),
            };
            let mut text = String::new();
            let mut failure = None;
            for i in steps {
                match player.goto(i, &mut state) {
                    Ok(vp) => {
                        let s = vp.summary(Some(ws.areas()));
                        let _ = writeln!(text, "step {i}/{total}: {} [{} {}]", s.name, s.priority, s.attitude_icon);
                    }
                    Err(e) => {
                        failure = Some(e);
                        break;
                    }
                }
            }
            if player.position().is_some() {
                ws.save_session(&state, clock)?;
            }
            match failure {
                Some(e) => Err(e),
                None => Ok(text),
            }
        }
        ScnCommand::Preview { file } => {
            let scenario = Scenario::load_xml(&file)?;
            let mut text = format!("{} ({} steps)\n", scenario.name(), scenario.len());
            for step in scenario.preview(ws.schema(), Some(ws.areas())) {
                match (&step.summary, &step.error) {
                    (Some(s), _) => {
                        let _ = writeln!(
                            text,
                            "{}. {} [{} {}] {}",
                            step.order,
                            s.name,
                            s.priority,
                            s.attitude_icon,
                            ws.id_of(&step.reference)
                        );
                    }
                    (None, error) => {
                        let _ = writeln!(
                            text,
                            "{}. BROKEN {}: {}",
                            step.order,
                            ws.id_of(&step.reference),
                            error.as_deref().unwrap_or("unreadable")
                        );
                    }
                }
            }
            Ok(text)
        }
    }
}

/// Percent with at least one fractional digit, as in `0.0%` or `37.815126%`.
pub fn percent_text(p: Weight) -> String {
    let s = p.to_string();
    if s.contains('.') {
        format!("{s}%")
    } else {
        format!("{s}.0%")
    }
}

fn diff_text(report: &DiffReport, top: usize) -> String {
    let mut text = format!("global difference: {}\n", percent_text(report.normalized_percent));
    let _ = writeln!(text, "distance: {} of {}", report.raw_distance, report.max_distance);
    let _ = writeln!(text, "differing preferences: {}", report.delta_count());
    for (rank, (name, distance)) in report.top_categories(top).into_iter().enumerate() {
        let _ = writeln!(text, "{}. {name} {distance}", rank + 1);
    }
    text
}

fn compare_text(cmp: &engine::Comparison) -> String {
    let m = &cmp.metrics;
    let mut text = String::new();
    for (label, p) in cmp.layout.labels.iter().zip(&cmp.layout.points) {
        let _ = writeln!(text, "{label}: ({:.6}, {:.6})", p.x, p.y);
    }
    for pair in &m.pairs {
        let ratio = pair.ratio.map_or("-".to_owned(), |r| format!("{r:.6}"));
        let _ = writeln!(
            text,
            "{} - {}: computed {} layout {:.6} ratio {ratio}",
            cmp.layout.labels[pair.i], cmp.layout.labels[pair.j], pair.computed, pair.layout
        );
    }
    if let (Some(mean), Some(variance)) = (m.mean_ratio, m.variance_ratio) {
        let _ = writeln!(text, "ratio mean {mean:.9} variance {variance:.9}");
    }
    if m.excluded_pairs > 0 {
        let _ = writeln!(text, "{} pairs at distance 0 excluded", m.excluded_pairs);
    }
    if !cmp.layout.is_euclidean() {
        let _ = writeln!(text, "warning: distances are not Euclidean, {} negative eigenvalues", cmp.layout.negative_eigenvalues.len());
    }
    for bin in &m.histogram {
        let _ = writeln!(text, "[{:.6}, {:.6}] {}", bin.lo, bin.hi, bin.count);
    }
    text
}
