use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use traceview_core::area::AreaList;
use traceview_core::diff::{self, diff, normalized_percent};
use traceview_core::testkit::{disjoint_pair, random_related_viewpoints, random_viewpoint};
use traceview_core::{PreferenceSchema, Viewpoint, Weight};

/// Decimal text to integer micro-units, written separately from the crate's own parser.
fn micros(text: &str) -> u64 {
    let (whole, frac) = text.split_once('.').unwrap_or((text, ""));
    let mut frac = frac.to_owned();
    while frac.len() < 6 {
        frac.push('0');
    }
    whole.parse::<u64>().unwrap() * 1_000_000 + frac.parse::<u64>().unwrap()
}

/// Weights by preference id, read from the schema document with a third-party parser.
fn oracle_weights(schema_xml: &str) -> BTreeMap<String, u64> {
    let doc = roxmltree::Document::parse(schema_xml).unwrap();
    doc.descendants()
        .filter(|n| n.has_tag_name("preference"))
        .map(|n| (n.attribute("id").unwrap().to_owned(), micros(n.attribute("weight").unwrap())))
        .collect()
}

/// Assignment text by (scope, instance, id), read from a serialized viewpoint.
fn oracle_assignments(vp_xml: &str) -> BTreeMap<(String, String, String), String> {
    let doc = roxmltree::Document::parse(vp_xml).unwrap();
    doc.descendants()
        .filter(|n| n.has_tag_name("preference"))
        .map(|n| {
            (
                (
                    n.attribute("scope").unwrap().to_owned(),
                    n.attribute("instance").unwrap().to_owned(),
                    n.attribute("id").unwrap().to_owned(),
                ),
                n.text().unwrap_or("").to_owned(),
            )
        })
        .collect()
}

/// Brute-force (raw, max) over the union of keys of two serialized viewpoints.
fn oracle_distance(weights: &BTreeMap<String, u64>, a: &str, b: &str) -> (u64, u64) {
    let a = oracle_assignments(a);
    let b = oracle_assignments(b);
    let mut keys: Vec<_> = a.keys().chain(b.keys()).cloned().collect();
    keys.sort();
    keys.dedup();
    let mut raw = 0;
    let mut max = 0;
    for key in keys {
        let w = weights[&key.2];
        max += w;
        if a.get(&key) != b.get(&key) {
            raw += w;
        }
    }
    (raw, max)
}

#[test]
fn raw_distance_matches_brute_force_from_files() {
    let schema = PreferenceSchema::default_schema();
    let weights = oracle_weights(PreferenceSchema::default_schema_xml());
    let areas = AreaList::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..300 {
        let vps = if case % 2 == 0 {
            random_related_viewpoints(&mut rng, &schema, &areas, 2)
        } else {
            vec![random_viewpoint(&mut rng, &schema, &areas), random_viewpoint(&mut rng, &schema, &areas)]
        };
        let (a, b) = (&vps[0], &vps[1]);
        let report = diff(a, b, &schema).unwrap();
        let (raw, max) = oracle_distance(&weights, &a.to_xml(&schema).unwrap(), &b.to_xml(&schema).unwrap());
        assert_eq!(report.raw_distance.micros(), raw, "case {case}");
        assert_eq!(report.max_distance.micros(), max, "case {case}");
        let listed: u64 = report.categories.iter().flat_map(|c| &c.deltas).map(|d| d.weight.micros()).sum();
        assert_eq!(listed, raw);
    }
}

#[test]
fn metric_axioms_on_random_triples() {
    let schema = PreferenceSchema::default_schema();
    let areas = AreaList::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..1000 {
        let v = random_related_viewpoints(&mut rng, &schema, &areas, 3);
        let d = |x: &Viewpoint, y: &Viewpoint| diff(x, y, &schema).unwrap();
        let ab = d(&v[0], &v[1]);
        assert_eq!(d(&v[0], &v[0]).raw_distance, Weight::ZERO);
        assert_eq!(ab.raw_distance, d(&v[1], &v[0]).raw_distance, "case {case}");
        assert_eq!(ab.max_distance, d(&v[1], &v[0]).max_distance);
        assert!(
            ab.raw_distance <= d(&v[0], &v[2]).raw_distance + d(&v[2], &v[1]).raw_distance,
            "case {case}"
        );
        assert!(ab.normalized_percent <= Weight::from_units(100));
        assert_eq!(ab.raw_distance.is_zero(), v[0].assignments == v[1].assignments);
    }
}

#[test]
fn disjoint_pairs_are_one_hundred_percent() {
    let schema = PreferenceSchema::default_schema();
    let areas = AreaList::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..300 {
        let (a, b) = disjoint_pair(&mut rng, &schema, &areas);
        let r = diff(&a, &b, &schema).unwrap();
        assert_eq!(r.normalized_percent, Weight::from_units(100));
        assert_eq!(r.raw_distance, r.max_distance);
    }
}

#[test]
fn adding_a_differing_key_never_decreases_distance() {
    let schema = PreferenceSchema::default_schema();
    let areas = AreaList::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let v = random_related_viewpoints(&mut rng, &schema, &areas, 2);
        let before = diff(&v[0], &v[1], &schema).unwrap().raw_distance;
        let mut grown = v[1].clone();
        let extra = traceview_core::AssignmentKey::application("export.image-format");
        if v[0].assignments.contains_key(&extra) {
            grown.assignments.remove(&extra);
        } else {
            grown.assignments.insert(extra, traceview_core::Value::Enum("svg".into()));
        }
        let after = diff(&v[0], &grown, &schema).unwrap().raw_distance;
        assert!(after >= before);
    }
}

#[test]
fn metadata_edits_do_not_move_the_distance() {
    let schema = PreferenceSchema::default_schema();
    let areas = AreaList::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let vp = random_viewpoint(&mut rng, &schema, &areas);
    let edited = vp
        .edit_metadata(
            traceview_core::viewpoint::MetaChanges {
                description: Some("changed".into()),
                attitude: Some(traceview_core::viewpoint::Attitude::BadNews),
                ..Default::default()
            },
            Some(&areas),
        )
        .unwrap();
    assert_eq!(diff(&vp, &edited, &schema).unwrap().raw_distance, Weight::ZERO);
}

#[test]
fn top_categories_sort_oracle() {
    let text = r#"<?xml version="1.0" encoding="UTF-8"?>
<viewpoint-diff format-version="1" left="a" right="b" raw-distance="18" max-distance="20" normalized-percent="90">
  <category name="data" distance="8">
    <preference id="p" scope="application" instance="" weight="8">
      <left kind="integer">1</left>
      <right missing="true"/>
    </preference>
  </category>
  <category name="ui" distance="5">
    <preference id="q" scope="application" instance="" weight="5">
      <left kind="integer">1</left>
      <right kind="integer">2</right>
    </preference>
  </category>
  <category name="timeline" distance="4">
    <preference id="r" scope="application" instance="" weight="4">
      <left missing="true"/>
      <right kind="integer">2</right>
    </preference>
  </category>
  <category name="filter" distance="1">
    <preference id="s" scope="application" instance="" weight="1">
      <left kind="integer">1</left>
      <right kind="integer">2</right>
    </preference>
  </category>
</viewpoint-diff>
"#;
    let report = diff::from_xml(text).unwrap();
    let top: Vec<&str> = report.top_categories(3).into_iter().map(|(n, _)| n).collect();
    assert_eq!(top, ["data", "ui", "timeline"]);
    assert_eq!(diff::to_xml(&report), text);
}

proptest! {
    #[test]
    fn percent_stays_in_range(raw in 0u64..10_000_000_000, extra in 0u64..10_000_000_000) {
        let max = raw + extra;
        let p = normalized_percent(Weight::from_micros(raw), Weight::from_micros(max)).micros();
        prop_assert!(p <= 100_000_000);
        prop_assert_eq!(p == 0, raw == 0 || max == 0);
        prop_assert_eq!(p == 100_000_000, raw == max && raw > 0);
        if max > 0 {
            let exact = raw as f64 * 1e8 / max as f64;
            prop_assert!((p as f64 - exact).abs() <= 1.0);
        }
    }
}

#[test]
fn contrasting_pair_differs_in_three_categories() {
    use std::sync::Arc;
    let schema = Arc::new(PreferenceSchema::default_schema());
    let csv = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ministries_budget.csv");
    let clock = traceview_core::clock::FixedClock(chrono::Utc::now());
    let (a, b) = traceview_core::testkit::contrasting_pair(&csv, schema.clone(), &clock).unwrap();
    let report = diff(&a, &b, &schema).unwrap();

    // view.attributes 5, view.current-node 6, view.kind 4, ui.view-arrangement 3,
    // view.window-geometry 0.5, timeline.period-start 1.5, timeline.max-periods 2.5
    let hand = micros("5") + micros("6") + micros("4") + micros("3") + micros("0.5") + micros("1.5") + micros("2.5");
    assert_eq!(report.raw_distance.micros(), hand);
    let names: Vec<&str> = report.categories.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["data-displayed", "ui-global-layout", "timeline"]);
    let top: Vec<&str> = report.top_categories(3).into_iter().map(|(n, _)| n).collect();
    assert_eq!(top, ["data-displayed", "ui-global-layout", "timeline"]);
}
