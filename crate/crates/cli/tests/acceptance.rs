//! End-to-end acceptance checks. Each criterion prints one PASS or FAIL line with its runtime
//! against the allowed bound; the process fails if any criterion fails.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{header, Method, Request};
use chrono::{TimeZone, Utc};
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tower::ServiceExt;
use traceview_cli::service::{router, Service};
use traceview_cli::Workspace;
use traceview_core::area::AreaList;
use traceview_core::clock::FixedClock;
use traceview_core::diff::{self, diff};
use traceview_core::projection::{mds_project, quality};
use traceview_core::scenario::Player;
use traceview_core::testkit::{
    contrasting_pair, disjoint_pair, ministries_demo, random_related_viewpoints, random_session, random_viewpoint,
    write_datasets,
};
use traceview_core::viewpoint::MetaDraft;
use traceview_core::{ApplicationState, DistanceMatrix, Error, PreferenceSchema, Viewpoint, Weight};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn clock() -> FixedClock {
    FixedClock(Utc.with_ymd_and_hms(2013, 4, 2, 8, 0, 0).unwrap())
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/ministries_budget.csv")
}

fn schema() -> Arc<PreferenceSchema> {
    Arc::new(PreferenceSchema::default_schema())
}

fn xml_roundtrip() -> Check {
    let schema = schema();
    let areas = AreaList::builtin();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..1000 {
        let mut vp = random_viewpoint(&mut rng, &schema, &areas);
        let pinned = FixedClock(vp.meta.file.saved_at);
        let path = dir.path().join(format!("{case}.xml"));
        vp.save_xml(&path, &schema, &pinned).map_err(|e| e.to_string())?;
        let first = std::fs::read(&path).map_err(|e| e.to_string())?;
        let mut loaded = Viewpoint::load_xml(&path, &schema, Some(&areas)).map_err(|e| format!("case {case}: {e}"))?;
        ensure!(loaded == vp, "case {case}: loaded viewpoint differs");
        loaded.save_xml(&path, &schema, &pinned).map_err(|e| e.to_string())?;
        ensure!(std::fs::read(&path).map_err(|e| e.to_string())? == first, "case {case}: re-save not byte-identical");
    }
    Ok("1000 viewpoints".into())
}

fn state_restore() -> Check {
    let schema = schema();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let datasets = write_datasets(dir.path()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut ops = 0;
    for case in 0..500 {
        let mut state = ApplicationState::new(schema.clone()).map_err(|e| e.to_string())?;
        let len = rng.random_range(0..=50);
        ops += random_session(&mut rng, &mut state, &datasets, len).len();
        let draft = MetaDraft {
            name: format!("s{case}"),
            owner: Some("acceptance".into()),
            ..Default::default()
        };
        let vp = Viewpoint::capture(&state, draft, &clock()).map_err(|e| e.to_string())?;
        let mut fresh = ApplicationState::new(schema.clone()).map_err(|e| e.to_string())?;
        vp.apply(&mut fresh).map_err(|e| format!("case {case}: {e}"))?;
        ensure!(fresh == state, "case {case}: restored state differs");
    }
    Ok(format!("500 sequences, {ops} successful mutations"))
}

fn metric_axioms() -> Check {
    let schema = schema();
    let areas = AreaList::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let hundred = Weight::from_units(100);
    let mut nonzero = 0;
    for case in 0..10_000 {
        let v = random_related_viewpoints(&mut rng, &schema, &areas, 3);
        let d = |a: &Viewpoint, b: &Viewpoint| diff(a, b, &schema).map_err(|e| e.to_string());
        for x in &v {
            ensure!(d(x, x)?.raw_distance == Weight::ZERO, "case {case}: d(v,v) != 0");
        }
        let (ab, ba) = (d(&v[0], &v[1])?, d(&v[1], &v[0])?);
        let (ac, cb) = (d(&v[0], &v[2])?, d(&v[2], &v[1])?);
        ensure!(
            ab.raw_distance == ba.raw_distance
                && ab.max_distance == ba.max_distance
                && ab.normalized_percent == ba.normalized_percent,
            "case {case}: asymmetric"
        );
        ensure!(ab.raw_distance <= ac.raw_distance + cb.raw_distance, "case {case}: triangle inequality");
        for r in [&ab, &ac, &cb] {
            ensure!(r.normalized_percent <= hundred, "case {case}: percent above 100");
        }
        if !ab.raw_distance.is_zero() {
            nonzero += 1;
        }
    }
    for case in 0..1000 {
        let (a, b) = disjoint_pair(&mut rng, &schema, &areas);
        let r = diff(&a, &b, &schema).map_err(|e| e.to_string())?;
        ensure!(r.normalized_percent == hundred, "disjoint case {case}: {}", r.normalized_percent);
    }
    Ok(format!("10000 triples ({nonzero} at non-zero distance), 1000 disjoint pairs"))
}

fn contrasting_categories() -> Check {
    let schema = schema();
    let (a, b) = contrasting_pair(&fixture(), schema.clone(), &clock()).map_err(|e| e.to_string())?;
    let report = diff(&a, &b, &schema).map_err(|e| e.to_string())?;

    // Differing preferences and their weights, read off the default schema by hand.
    let hand: [(&str, u64); 7] = [
        ("view.attributes", 5_000_000),
        ("view.current-node", 6_000_000),
        ("view.kind", 4_000_000),
        ("ui.view-arrangement", 3_000_000),
        ("view.window-geometry", 500_000),
        ("timeline.period-start", 1_500_000),
        ("timeline.max-periods", 2_500_000),
    ];
    let hand_sum: u64 = hand.iter().map(|(_, w)| w).sum();
    let mut differing: Vec<&str> = report
        .categories
        .iter()
        .flat_map(|c| &c.deltas)
        .map(|d| d.key.pref_id.as_str())
        .collect();
    differing.sort();
    let mut expected: Vec<&str> = hand.iter().map(|(id, _)| *id).collect();
    expected.sort();
    ensure!(differing == expected, "differing preferences {differing:?}");
    ensure!(
        report.raw_distance.micros() == hand_sum,
        "raw {} != hand sum {}",
        report.raw_distance,
        Weight::from_micros(hand_sum)
    );
    let top: Vec<&str> = report.top_categories(3).into_iter().map(|(n, _)| n).collect();
    ensure!(top == ["data-displayed", "ui-global-layout", "timeline"], "top categories {top:?}");
    ensure!(report.categories.len() == 3, "{} categories differ", report.categories.len());
    Ok(format!(
        "top-3 {} | raw {} of {} ({}%)",
        top.join(", "),
        report.raw_distance,
        report.max_distance,
        report.normalized_percent
    ))
}

fn euclid(points: &[(f64, f64)]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|a| points.iter().map(|b| (a.0 - b.0).hypot(a.1 - b.1)).collect())
        .collect()
}

fn matrix(values: Vec<Vec<f64>>) -> Result<DistanceMatrix, String> {
    let labels = (0..values.len()).map(|i| format!("p{i}")).collect();
    DistanceMatrix::new(labels, values).map_err(|e| e.to_string())
}

fn mds_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_error: f64 = 0.0;
    let mut worst_mean: f64 = 0.0;
    let mut worst_variance: f64 = 0.0;
    for case in 0..200 {
        let n = rng.random_range(2..=12);
        let points: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)))
            .collect();
        let m = matrix(euclid(&points))?;
        let layout = mds_project(&m);
        let q = quality(&m, &layout).map_err(|e| e.to_string())?;
        for pair in &q.pairs {
            worst_error = worst_error.max((pair.layout - pair.computed).abs());
        }
        let mean = q.mean_ratio.ok_or(format!("case {case}: no ratio"))?;
        worst_mean = worst_mean.max((mean - 1.0).abs());
        worst_variance = worst_variance.max(q.variance_ratio.unwrap_or(0.0));
    }
    ensure!(worst_error <= 1e-6, "max pairwise error {worst_error:e}");
    ensure!(worst_mean <= 1e-9, "mean ratio off by {worst_mean:e}");
    ensure!(worst_variance <= 1e-12, "ratio variance {worst_variance:e}");

    let equilateral = mds_project(&matrix(vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]])?);
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let d = equilateral.distance(i, j);
        ensure!((d - 1.0).abs() <= 1e-9, "equilateral pair {i}-{j} at {d}");
    }
    let collinear = mds_project(&matrix(vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]])?);
    ensure!((collinear.eigenvalues[0] - 2.0).abs() <= 1e-12, "collinear first eigenvalue {}", collinear.eigenvalues[0]);
    ensure!(collinear.eigenvalues[1].abs() <= 1e-12, "collinear second eigenvalue {}", collinear.eigenvalues[1]);
    for (p, x) in collinear.points.iter().zip([1.0, 0.0, -1.0]) {
        ensure!((p.x - x).abs() <= 1e-12 && p.y == 0.0, "collinear point ({}, {})", p.x, p.y);
    }
    Ok(format!(
        "200 sets, max error {worst_error:.1e}, max |mean-1| {worst_mean:.1e}, max variance {worst_variance:.1e}"
    ))
}

fn scenario_playback() -> Check {
    let schema = schema();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let csv = dir.path().join("ministries_budget.csv");
    std::fs::copy(fixture(), &csv).map_err(|e| e.to_string())?;
    let demo = ministries_demo(dir.path(), &csv, schema.clone(), &clock()).map_err(|e| e.to_string())?;
    ensure!(demo.scenario.len() == 6, "demo has {} steps", demo.scenario.len());
    let scenario = traceview_core::Scenario::load_xml(&dir.path().join("demo.scenario.xml")).map_err(|e| e.to_string())?;
    let mut player = Player::new(scenario);
    let mut state = ApplicationState::new(schema).map_err(|e| e.to_string())?;
    for i in 1..=6 {
        player.goto(i, &mut state).map_err(|e| e.to_string())?;
        ensure!(state == demo.states[i - 1], "goto({i}) restored a different state");
    }
    std::fs::remove_file(&demo.scenario.refs()[3]).map_err(|e| e.to_string())?;
    let err = match player.goto(4, &mut state) {
        Ok(_) => return Err("goto(4) succeeded after its file was deleted".into()),
        Err(e) => e,
    };
    ensure!(matches!(err, Error::Step { index: 4, .. }), "goto(4) failed with {err:?}");
    ensure!(err.to_string().contains("step 4"), "message does not name step 4: {err}");
    player.goto(3, &mut state).map_err(|e| format!("goto(3) after deletion: {e}"))?;
    ensure!(state == demo.states[2], "goto(3) after deletion restored a different state");
    Ok(format!("6 steps restored; deleted step: {err}"))
}

fn cli_service_parity() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ws = Workspace::init(dir.path()).map_err(|e| e.to_string())?;
    let schema = ws.schema().clone();
    let areas = AreaList::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ids = Vec::new();
    for group in 0..10 {
        for (k, mut vp) in random_related_viewpoints(&mut rng, &schema, &areas, 4).into_iter().enumerate() {
            let id = format!("viewpoints/g{group}-{k}.xml");
            let pinned = FixedClock(vp.meta.file.saved_at);
            vp.save_xml(&dir.path().join(&id), &schema, &pinned).map_err(|e| e.to_string())?;
            ids.push(id);
        }
    }
    let app = router(Service::new(ws).map_err(|e| e.to_string())?);
    let runtime = tokio::runtime::Builder::new_current_thread().build().map_err(|e| e.to_string())?;
    let out_xml = dir.path().join("diff.xml");
    let mut same_group = 0;
    for pair in 0..100 {
        // Half the pairs come from one related group so categories overlap.
        let a = rng.random_range(0..ids.len());
        let b = if pair % 2 == 0 { a / 4 * 4 + rng.random_range(0..4) } else { rng.random_range(0..ids.len()) };
        if a / 4 == b / 4 {
            same_group += 1;
        }
        let (left, right) = (&ids[a], &ids[b]);

        let argv = [
            "traceview",
            "-w",
            dir.path().to_str().unwrap(),
            "diff",
            &dir.path().join(left).display().to_string(),
            &dir.path().join(right).display().to_string(),
            "--xml",
            out_xml.to_str().unwrap(),
        ]
        .map(String::from);
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = traceview_cli::run(argv, &mut out, &mut err);
        ensure!(code == 0, "pair {pair}: cli exit {code}: {}", String::from_utf8_lossy(&err));
        let cli = diff::from_xml(&std::fs::read_to_string(&out_xml).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;

        let body = serde_json::json!({ "left": left, "right": right }).to_string();
        let request = Request::builder()
            .method(Method::POST)
            .uri("/diff")
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(body))
            .map_err(|e| e.to_string())?;
        let json: serde_json::Value = runtime.block_on(async {
            let response = app.clone().oneshot(request).await.map_err(|e| e.to_string())?;
            let bytes = response.into_body().collect().await.map_err(|e| e.to_string())?.to_bytes();
            serde_json::from_slice(&bytes).map_err(|e| e.to_string())
        })?;

        let weight = |v: &serde_json::Value| v.as_f64().and_then(Weight::from_f64);
        ensure!(weight(&json["rawDistance"]) == Some(cli.raw_distance), "pair {pair}: raw differs");
        ensure!(weight(&json["maxDistance"]) == Some(cli.max_distance), "pair {pair}: max differs");
        ensure!(
            weight(&json["normalizedPercent"]) == Some(cli.normalized_percent),
            "pair {pair}: normalized differs"
        );
        let service_order: Vec<&str> = json["categories"]
            .as_array()
            .ok_or("categories missing")?
            .iter()
            .map(|c| c["name"].as_str().unwrap_or(""))
            .collect();
        let cli_order: Vec<&str> = cli.categories.iter().map(|c| c.name.as_str()).collect();
        ensure!(service_order == cli_order, "pair {pair}: category order {service_order:?} vs {cli_order:?}");
        let printed = String::from_utf8_lossy(&out);
        ensure!(
            printed.contains(&traceview_cli::cli::percent_text(cli.normalized_percent)),
            "pair {pair}: printed percent differs"
        );
    }
    Ok(format!("100 pairs ({same_group} within a related group)"))
}

fn main() {
    let criteria: [(&str, Option<Duration>, fn() -> Check); 7] = [
        ("viewpoint XML round-trip", Some(Duration::from_secs(10)), xml_roundtrip),
        ("state restore", Some(Duration::from_secs(10)), state_restore),
        ("distance metric axioms", Some(Duration::from_secs(20)), metric_axioms),
        ("contrasting pair top categories", None, contrasting_categories),
        ("MDS exactness", Some(Duration::from_secs(10)), mds_exactness),
        ("scenario playback", Some(Duration::from_secs(5)), scenario_playback),
        ("CLI/service parity", None, cli_service_parity),
    ];
    let mut failed = 0;
    for (name, bound, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let over = bound.is_some_and(|b| elapsed > b);
        let limit = bound.map_or(String::new(), |b| format!(" < {} s", b.as_secs()));
        let (verdict, detail) = match (&result, over) {
            (Ok(detail), false) => ("PASS", detail.clone()),
            (Ok(detail), true) => ("FAIL", format!("too slow; {detail}")),
            (Err(reason), _) => ("FAIL", reason.clone()),
        };
        if verdict == "FAIL" {
            failed += 1;
        }
        println!("{verdict} {name} [{:.2} s{limit}]: {detail}", elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
