//! Seeded generators of schema-valid viewpoints and host mutation sequences, shared by the
//! property tests, the acceptance suite and the benchmarks.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::{TimeZone, Utc};
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::area::AreaList;
use crate::assignment::{AssignmentKey, Assignments};
use crate::host::{
    prefs, ApplicationState, Context, CurrentNode, ExplorationAction, RelationRef, ViewKind, ViewRef, ViewRole,
    ViewSpec, WindowGeometry,
};
use crate::schema::{PreferenceSchema, ScopeLevel};
use crate::value::{PreferenceKind, Value};
use crate::viewpoint::{Attitude, ContentMeta, FileMeta, Meta, OwnerMeta, Period, Priority, Viewpoint};
use crate::error::Result;

/// Characters that stress escaping: markup, quotes, whitespace kinds, and non-ASCII planes.
const TRICKY: &[char] = &[
    'a', 'Z', '0', ' ', '&', '<', '>', '"', '\'', '\t', '\n', '\r', ';', '=', '/', ',', 'é', 'ß', '€', '中', '\u{10348}',
    '\u{FFFD}', '#', '%',
];

pub fn random_text<R: Rng + ?Sized>(rng: &mut R, max_len: usize) -> String {
    let len = rng.random_range(0..=max_len);
    (0..len).map(|_| *TRICKY.choose(rng).unwrap()).collect()
}

fn random_identifier<R: Rng + ?Sized>(rng: &mut R, prefix: &str) -> String {
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789._-";
    let len = rng.random_range(1..=6);
    let tail: String = (0..len)
        .map(|_| *ALPHABET.choose(rng).unwrap() as char)
        .collect();
    format!("{prefix}{tail}")
}

fn random_name<R: Rng + ?Sized>(rng: &mut R) -> String {
    let mut s = random_text(rng, 12);
    s.insert(0, 'n');
    s
}

fn random_decimal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    match rng.random_range(0..4) {
        0 => rng.random_range(-1000..1000) as f64 / 8.0,
        1 => rng.random::<f64>() * 1e6 - 5e5,
        2 => f64::from_bits(rng.random::<u64>()),
        _ => rng.random_range(-1e-300..1e-300),
    }
}

pub fn random_value<R: Rng + ?Sized>(rng: &mut R, kind: &PreferenceKind) -> Value {
    match kind {
        PreferenceKind::Boolean => Value::Boolean(rng.random()),
        PreferenceKind::Integer => Value::Integer(if rng.random_bool(0.5) {
            rng.random_range(-100..100)
        } else {
            rng.random()
        }),
        PreferenceKind::Decimal => loop {
            let x = random_decimal(rng);
            if x.is_finite() {
                break Value::Decimal(if x == 0.0 { 0.0 } else { x });
            }
        },
        PreferenceKind::String => Value::String(random_text(rng, 16)),
        PreferenceKind::Enum(values) => Value::Enum(values.choose(rng).unwrap().clone()),
        PreferenceKind::Color => Value::Color(rng.random()),
        PreferenceKind::AttributeList => {
            let n = rng.random_range(0..4);
            let mut seen = BTreeSet::new();
            let names = (0..n)
                .map(|_| {
                    let mut s: String = random_text(rng, 6).chars().filter(|c| *c != ',').collect();
                    s.insert(0, 'c');
                    s
                })
                .filter(|s| seen.insert(s.clone()))
                .collect();
            Value::AttributeList(names)
        }
    }
}

fn random_meta<R: Rng + ?Sized>(rng: &mut R, areas: &AreaList) -> Meta {
    let area_ids: Vec<&str> = areas.iter().map(|a| a.id.as_str()).collect();
    let period = rng.random_bool(0.5).then(|| {
        let a = chrono::NaiveDate::from_ymd_opt(rng.random_range(1900..2100), rng.random_range(1..=12), rng.random_range(1..=28)).unwrap();
        let b = a + chrono::Duration::days(rng.random_range(0..5000));
        Period { start: a, end: b }
    });
    Meta {
        file: FileMeta {
            name: random_name(rng),
            path: PathBuf::from(format!("/viewpoints/{}", random_text(rng, 8).replace(['\r', '\n', '\t'], "_"))),
            saved_at: Utc.timestamp_opt(rng.random_range(0..4_102_444_800), 0).unwrap(),
            image: rng.random_bool(0.5).then(|| format!("img/{}.png", random_identifier(rng, "i"))),
        },
        content: ContentMeta {
            area_id: rng.random_bool(0.6).then(|| area_ids.choose(rng).unwrap().to_string()),
            period,
            description: random_text(rng, 40),
        },
        owner: OwnerMeta {
            name: random_name(rng),
            priority: *Priority::ALL.choose(rng).unwrap(),
            attitude: *Attitude::ALL.choose(rng).unwrap(),
        },
    }
}

fn random_context<R: Rng + ?Sized>(rng: &mut R, prefix: &str) -> Context {
    let mut context = Context::default();
    let mut names = BTreeSet::new();
    for _ in 0..rng.random_range(0..=3) {
        let name = random_identifier(rng, prefix);
        if names.insert(name.clone()) {
            context.relations.push(RelationRef {
                name,
                source: PathBuf::from(format!("/data/{}.csv", random_identifier(rng, "d"))),
                time_column: rng.random_bool(0.5).then(|| random_name(rng)),
            });
        }
    }
    let mut ids = BTreeSet::new();
    if !context.relations.is_empty() {
        for _ in 0..rng.random_range(0..=4) {
            let id = random_identifier(rng, prefix);
            if ids.insert(id.clone()) {
                context.views.push(ViewRef {
                    id,
                    relation: context.relations.choose(rng).unwrap().name.clone(),
                    kind: *ViewKind::ALL.choose(rng).unwrap(),
                    role: *ViewRole::ALL.choose(rng).unwrap(),
                });
            }
        }
    }
    context.relations.sort();
    context.views.sort();
    context
}

/// Every key the schema allows for `context`.
pub fn possible_keys(schema: &PreferenceSchema, context: &Context) -> Vec<AssignmentKey> {
    let mut keys = Vec::new();
    for def in schema.preferences() {
        for level in def.scopes.iter() {
            match level {
                ScopeLevel::Application => keys.push(AssignmentKey::application(&def.id)),
                ScopeLevel::Relation => keys.extend(context.relations.iter().map(|r| AssignmentKey::relation(&r.name, &def.id))),
                ScopeLevel::View => keys.extend(context.views.iter().map(|v| AssignmentKey::view(&v.id, &def.id))),
            }
        }
    }
    keys.sort();
    keys
}

fn random_assignments<R: Rng + ?Sized>(rng: &mut R, schema: &PreferenceSchema, keys: &[AssignmentKey], density: f64) -> Assignments {
    let mut out = Assignments::new();
    for k in keys {
        if rng.random_bool(density) {
            let kind = &schema.lookup(&k.pref_id).expect("key from schema").kind;
            out.insert(k.clone(), random_value(rng, kind));
        }
    }
    out
}

/// A schema-valid viewpoint with random context, assignments and metadata.
pub fn random_viewpoint<R: Rng + ?Sized>(rng: &mut R, schema: &PreferenceSchema, areas: &AreaList) -> Viewpoint {
    let context = random_context(rng, "");
    let keys = possible_keys(schema, &context);
    let density = rng.random_range(0.0..1.0);
    Viewpoint {
        format_version: 1,
        meta: random_meta(rng, areas),
        assignments: random_assignments(rng, schema, &keys, density),
        context,
    }
}

/// Viewpoints over a small shared key space with few values per key, so that random triples
/// overlap, agree and disagree in every combination.
pub fn random_related_viewpoints<R: Rng + ?Sized>(rng: &mut R, schema: &PreferenceSchema, areas: &AreaList, count: usize) -> Vec<Viewpoint> {
    let context = random_context(rng, "s");
    let keys = possible_keys(schema, &context);
    let palettes: Vec<Vec<Value>> = keys
        .iter()
        .map(|k| {
            let kind = &schema.lookup(&k.pref_id).expect("key from schema").kind;
            (0..2).map(|_| random_value(rng, kind)).collect()
        })
        .collect();
    (0..count)
        .map(|_| {
            let mut assignments = Assignments::new();
            for (k, p) in keys.iter().zip(&palettes) {
                if rng.random_bool(0.7) {
                    assignments.insert(k.clone(), p.choose(rng).unwrap().clone());
                }
            }
            Viewpoint {
                format_version: 1,
                meta: random_meta(rng, areas),
                context: context.clone(),
                assignments,
            }
        })
        .collect()
}

/// Two viewpoints whose assignment keys do not overlap: the right one has no
/// application-level keys and both use separate relation and view names.
pub fn disjoint_pair<R: Rng + ?Sized>(rng: &mut R, schema: &PreferenceSchema, areas: &AreaList) -> (Viewpoint, Viewpoint) {
    let mut make = |prefix: &str, keep_app: bool| {
        let context = random_context(rng, prefix);
        let keys: Vec<AssignmentKey> = possible_keys(schema, &context)
            .into_iter()
            .filter(|k| keep_app || k.scope != ScopeLevel::Application)
            .collect();
        let mut assignments = random_assignments(rng, schema, &keys, 0.5);
        if assignments.is_empty() {
            if let Some(k) = keys.first() {
                let kind = &schema.lookup(&k.pref_id).unwrap().kind;
                assignments.insert(k.clone(), random_value(rng, kind));
            }
        }
        Viewpoint {
            format_version: 1,
            meta: random_meta(rng, areas),
            context,
            assignments,
        }
    };
    let left = make("l", true);
    let right = make("r", false);
    (left, right)
}

/// A CSV file the mutation generator can load.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub path: PathBuf,
    pub time_column: Option<&'static str>,
}

/// Writes three small datasets into `dir`: a yearly budget table, a monthly series and a
/// table without temporal column.
pub fn write_datasets(dir: &Path) -> std::io::Result<Vec<Dataset>> {
    let budget = dir.join("budget.csv");
    let mut text = String::from("ministry,year,budget\n");
    for (i, m) in ["Education", "Defense", "Health", "Justice", "Culture", "Agriculture"].iter().enumerate() {
        for y in 2010..=2012 {
            text.push_str(&format!("{m},{y},{}\n", 1000 + 37 * i + 11 * (y as usize - 2010)));
        }
    }
    std::fs::write(&budget, text)?;

    let monthly = dir.join("monthly.csv");
    let mut text = String::from("month,region,amount,note\n");
    for m in 1..=12 {
        for r in ["north", "south"] {
            text.push_str(&format!("2011-{m:02},{r},{}.5,\"a, b\"\n", m * 3));
        }
    }
    std::fs::write(&monthly, text)?;

    let people = dir.join("people.csv");
    std::fs::write(&people, "name,age,city\nAda,36,London\nAlan,41,Manchester\nGrace,85,Arlington\n")?;

    Ok(vec![
        Dataset { path: budget, time_column: Some("year") },
        Dataset { path: monthly, time_column: Some("month") },
        Dataset { path: people, time_column: None },
    ])
}

/// One host operation, replayable against any state.
#[derive(Debug, Clone, PartialEq)]
pub enum HostOp {
    Load { path: PathBuf, name: String, time_column: Option<String> },
    Open(ViewSpec),
    Close(String),
    Set(AssignmentKey, String),
    Explore(ExplorationAction),
}

impl HostOp {
    pub fn apply(&self, state: &mut ApplicationState) -> Result<()> {
        match self {
            HostOp::Load { path, name, time_column } => state.load_dataset(path, Some(name), time_column.as_deref()).map(|_| ()),
            HostOp::Open(spec) => state.open_view(spec.clone()).map(|_| ()),
            HostOp::Close(id) => state.close_view(id),
            HostOp::Set(key, text) => state.set_preference(key.clone(), text),
            HostOp::Explore(action) => state.mutate_exploration(action.clone()),
        }
    }
}

/// Picks an operation that is likely (not guaranteed) to succeed on `state`.
pub fn random_op<R: Rng + ?Sized>(rng: &mut R, state: &ApplicationState, datasets: &[Dataset]) -> HostOp {
    let relations: Vec<_> = state.relations().collect();
    let views: Vec<_> = state.views().collect();
    let roll = rng.random_range(0..100);
    if relations.is_empty() || (roll < 8 && relations.len() < 4) {
        let d = datasets.choose(rng).unwrap();
        return HostOp::Load {
            path: d.path.clone(),
            name: random_identifier(rng, "r"),
            time_column: d.time_column.map(str::to_owned),
        };
    }
    if views.is_empty() || (roll < 20 && views.len() < 5) {
        return HostOp::Open(ViewSpec {
            id: random_identifier(rng, "v"),
            relation: relations.choose(rng).unwrap().name.clone(),
            kind: *ViewKind::ALL.choose(rng).unwrap(),
            role: *ViewRole::ALL.choose(rng).unwrap(),
        });
    }
    let view = *views.choose(rng).unwrap();
    let relation = state.relation(&view.relation).unwrap();
    let column = relation.columns.choose(rng).unwrap();
    match roll {
        20..=23 => HostOp::Close(view.id.clone()),
        24..=45 => {
            let schema = state.schema();
            let explicit: Vec<_> = schema.preferences().filter(|d| !prefs::is_host_bound(&d.id)).collect();
            let def = *explicit.choose(rng).unwrap();
            let level = *def.scopes.iter().collect::<Vec<_>>().choose(rng).unwrap();
            let key = match level {
                ScopeLevel::Application => AssignmentKey::application(&def.id),
                ScopeLevel::Relation => AssignmentKey::relation(&relations.choose(rng).unwrap().name, &def.id),
                ScopeLevel::View => AssignmentKey::view(&view.id, &def.id),
            };
            HostOp::Set(key, random_value(rng, &def.kind).canonical())
        }
        46..=60 => HostOp::Explore(ExplorationAction::SetCurrentNode {
            view: view.id.clone(),
            node: if rng.random_bool(0.2) || relation.rows.is_empty() {
                CurrentNode::Root
            } else {
                CurrentNode::Row(rng.random_range(0..relation.rows.len()))
            },
        }),
        61..=70 => {
            let mut attributes: Vec<String> = relation
                .columns
                .iter()
                .filter(|_| rng.random_bool(0.6))
                .map(|c| c.name.clone())
                .collect();
            if rng.random_bool(0.5) {
                attributes.reverse();
            }
            HostOp::Explore(ExplorationAction::SetAttributes {
                view: view.id.clone(),
                attributes,
            })
        }
        71..=80 => {
            let lo = rng.random_range(-100.0..2000.0);
            HostOp::Explore(ExplorationAction::SetFilterRange {
                view: view.id.clone(),
                filter: format!("f{}", rng.random_range(0..6)),
                attribute: column.name.clone(),
                lo,
                hi: lo + rng.random_range(0.0..500.0),
            })
        }
        81..=88 => {
            let idx = relation.column(&column.name).unwrap().0;
            let values = relation
                .rows
                .iter()
                .filter(|_| rng.random_bool(0.3))
                .map(|r| r[idx].clone())
                .collect();
            HostOp::Explore(ExplorationAction::SetFilterValues {
                view: view.id.clone(),
                filter: format!("f{}", rng.random_range(0..6)),
                attribute: column.name.clone(),
                values,
            })
        }
        89..=92 => HostOp::Explore(ExplorationAction::RemoveFilter {
            view: view.id.clone(),
            filter: format!("f{}", rng.random_range(0..6)),
        }),
        _ => HostOp::Explore(ExplorationAction::MoveWindow {
            view: view.id.clone(),
            geometry: WindowGeometry {
                x: rng.random_range(-500..2000),
                y: rng.random_range(-500..2000),
                width: rng.random_range(1..3000),
                height: rng.random_range(1..3000),
            },
        }),
    }
}

/// Applies `len` random operations, ignoring the ones the host rejects. Returns the operations
/// that succeeded.
pub fn random_session<R: Rng + ?Sized>(rng: &mut R, state: &mut ApplicationState, datasets: &[Dataset], len: usize) -> Vec<HostOp> {
    let mut applied = Vec::new();
    for _ in 0..len {
        let op = random_op(rng, state, datasets);
        if op.apply(state).is_ok() {
            applied.push(op);
        }
    }
    applied
}

/// A captured demo: the scenario file, its viewpoints in order, and the state each was taken from.
pub struct Demo {
    pub scenario: crate::scenario::Scenario,
    pub viewpoints: Vec<Viewpoint>,
    pub states: Vec<ApplicationState>,
}

fn demo_draft(name: &str, description: &str, priority: Priority, attitude: Attitude) -> crate::viewpoint::MetaDraft {
    crate::viewpoint::MetaDraft {
        name: name.into(),
        description: description.into(),
        priority,
        attitude,
        area_id: Some("fr".into()),
        image: None,
        owner: Some("analyst".into()),
    }
}

/// Explores a ministries budget file in six stages, saving one viewpoint per stage into `dir`
/// and a scenario `demo.scenario.xml` that plays them in order.
pub fn ministries_demo(
    dir: &Path,
    budget_csv: &Path,
    schema: std::sync::Arc<PreferenceSchema>,
    clock: &dyn crate::clock::Clock,
) -> Result<Demo> {
    use crate::viewpoint::{Attitude as A, Priority as P};
    let mut state = ApplicationState::new(schema.clone())?;
    let mut viewpoints = Vec::new();
    let mut states = Vec::new();
    let mut refs = Vec::new();
    let mut capture = |state: &ApplicationState, file: &str, draft: crate::viewpoint::MetaDraft| -> Result<()> {
        let mut vp = Viewpoint::capture(state, draft, clock)?;
        let path = dir.join(file);
        vp.save_xml(&path, &schema, clock)?;
        refs.push(path);
        viewpoints.push(vp);
        states.push(state.clone());
        Ok(())
    };
    let view = |id: &str, kind, role| ViewSpec {
        id: id.into(),
        relation: "budget".into(),
        kind,
        role,
    };

    state.load_dataset(budget_csv, Some("budget"), Some("year"))?;
    state.open_view(view("overview", ViewKind::Table, ViewRole::Master))?;
    capture(&state, "1-overview.xml", demo_draft("Overview", "All ministries, all years.", P::Interesting, A::Neutral))?;

    state.mutate_exploration(ExplorationAction::SetAttributes {
        view: "overview".into(),
        attributes: vec!["ministry".into(), "budget".into()],
    })?;
    state.open_view(view("shares", ViewKind::Pie, ViewRole::Detail))?;
    capture(&state, "2-shares.xml", demo_draft("Budget shares", "Share of each ministry.", P::MustSee, A::Neutral))?;

    state.mutate_exploration(ExplorationAction::SetCurrentNode {
        view: "overview".into(),
        node: CurrentNode::Row(0),
    })?;
    capture(&state, "3-education.xml", demo_draft("Education", "Largest budget line.", P::MustSee, A::GoodNews))?;

    state.mutate_exploration(ExplorationAction::SetFilterRange {
        view: "overview".into(),
        filter: "large".into(),
        attribute: "budget".into(),
        lo: 15.0,
        hi: 100.0,
    })?;
    capture(&state, "4-large.xml", demo_draft("Large budgets", "Ministries above 15.", P::Interesting, A::Neutral))?;

    let app = |id: &str| AssignmentKey::application(id);
    let at_view = |id: &str| AssignmentKey::view("overview", id);
    state.set_preference(at_view("timeline.period-start"), "2012")?;
    state.set_preference(at_view("timeline.period-end"), "2012")?;
    state.set_preference(app("ui.view-arrangement"), "tabbed")?;
    capture(&state, "5-latest.xml", demo_draft("Latest year", "Only 2012.", P::Interesting, A::BadNews))?;

    state.close_view("shares")?;
    state.open_view(view("map", ViewKind::Treemap, ViewRole::Master))?;
    state.mutate_exploration(ExplorationAction::MoveWindow {
        view: "map".into(),
        geometry: WindowGeometry {
            x: 640,
            y: 0,
            width: 640,
            height: 480,
        },
    })?;
    capture(&state, "6-treemap.xml", demo_draft("Treemap", "Sizes side by side.", P::Facultative, A::Neutral))?;

    let mut scenario = crate::scenario::Scenario::from_refs("Ministries budget", &refs)?;
    scenario.save_xml(&dir.join("demo.scenario.xml"))?;
    Ok(Demo {
        scenario,
        viewpoints,
        states,
    })
}

/// Two viewpoints over the same budget file that differ in what is displayed, in the global
/// window layout and in the timeline, and nowhere else.
pub fn contrasting_pair(
    budget_csv: &Path,
    schema: std::sync::Arc<PreferenceSchema>,
    clock: &dyn crate::clock::Clock,
) -> Result<(Viewpoint, Viewpoint)> {
    let build = |kind, attributes: [&str; 2], node, arrangement: &str, geometry, start: &str, periods: &str| {
        let mut state = ApplicationState::new(schema.clone())?;
        state.load_dataset(budget_csv, Some("budget"), Some("year"))?;
        state.open_view(ViewSpec {
            id: "main".into(),
            relation: "budget".into(),
            kind,
            role: ViewRole::Master,
        })?;
        state.mutate_exploration(ExplorationAction::SetAttributes {
            view: "main".into(),
            attributes: attributes.iter().map(|a| a.to_string()).collect(),
        })?;
        state.mutate_exploration(ExplorationAction::SetCurrentNode {
            view: "main".into(),
            node,
        })?;
        state.mutate_exploration(ExplorationAction::MoveWindow {
            view: "main".into(),
            geometry,
        })?;
        state.set_preference(AssignmentKey::application("ui.view-arrangement"), arrangement)?;
        state.set_preference(AssignmentKey::view("main", "timeline.period-start"), start)?;
        state.set_preference(AssignmentKey::application("timeline.max-periods"), periods)?;
        let draft = crate::viewpoint::MetaDraft {
            name: format!("{kind} view"),
            owner: Some("analyst".into()),
            ..Default::default()
        };
        Viewpoint::capture(&state, draft, clock)
    };
    let left = build(
        ViewKind::Table,
        ["ministry", "budget"],
        CurrentNode::Root,
        "tiled",
        WindowGeometry::default(),
        "2011",
        "5",
    )?;
    let right = build(
        ViewKind::Pie,
        ["ministry", "year"],
        CurrentNode::Row(2),
        "floating",
        WindowGeometry {
            x: 100,
            y: 50,
            width: 800,
            height: 600,
        },
        "2012",
        "3",
    )?;
    Ok((left, right))
}
