use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use traceview_core::area::AreaList;
use traceview_core::clock::FixedClock;
use traceview_core::testkit::random_viewpoint;
use traceview_core::{PreferenceSchema, Viewpoint};

fn schema() -> PreferenceSchema {
    PreferenceSchema::default_schema()
}

#[test]
fn random_viewpoints_roundtrip_through_files() {
    let schema = schema();
    let areas = AreaList::builtin();
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..300 {
        let mut vp = random_viewpoint(&mut rng, &schema, &areas);
        let clock = FixedClock(vp.meta.file.saved_at);
        let path = dir.path().join(format!("vp{case}.xml"));
        vp.save_xml(&path, &schema, &clock).unwrap();
        let first = std::fs::read(&path).unwrap();
        let mut loaded = Viewpoint::load_xml(&path, &schema, Some(&areas)).unwrap();
        assert_eq!(loaded, vp, "case {case}");
        loaded.save_xml(&path, &schema, &clock).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first, "case {case}");
    }
}

/// Reads our documents with an unrelated XML parser and checks every value survives escaping.
#[test]
fn third_party_parser_sees_the_same_values() {
    let schema = schema();
    let areas = AreaList::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..200 {
        let vp = random_viewpoint(&mut rng, &schema, &areas);
        let text = vp.to_xml(&schema).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("case {case}: {e}\n{text}"));

        let mut seen = BTreeMap::new();
        for node in doc.descendants().filter(|n| n.has_tag_name("preference")) {
            let key = (
                node.attribute("scope").unwrap().to_owned(),
                node.attribute("instance").unwrap().to_owned(),
                node.attribute("id").unwrap().to_owned(),
            );
            seen.insert(key, node.text().unwrap_or("").to_owned());
        }
        let expected: BTreeMap<_, _> = vp
            .assignments
            .iter()
            .map(|(k, v)| {
                (
                    (k.scope.as_str().to_owned(), k.instance.clone(), k.pref_id.clone()),
                    v.canonical(),
                )
            })
            .collect();
        assert_eq!(seen, expected, "case {case}");

        let content = doc.descendants().find(|n| n.has_tag_name("content")).unwrap();
        assert_eq!(content.text().unwrap_or(""), vp.meta.content.description, "case {case}");
        let owner = doc.descendants().find(|n| n.has_tag_name("owner")).unwrap();
        assert_eq!(owner.attribute("name").unwrap(), vp.meta.owner.name);
        let relations: Vec<&str> = doc
            .descendants()
            .filter(|n| n.has_tag_name("relation"))
            .map(|n| n.attribute("name").unwrap())
            .collect();
        let mut sorted = relations.clone();
        sorted.sort();
        assert_eq!(relations, sorted);
    }
}

#[test]
fn equal_viewpoints_serialize_identically() {
    let schema = schema();
    let areas = AreaList::builtin();
    let mut a = ChaCha8Rng::seed_from_u64(3);
    let mut b = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let x = random_viewpoint(&mut a, &schema, &areas);
        let y = random_viewpoint(&mut b, &schema, &areas);
        assert_eq!(x.to_xml(&schema).unwrap(), y.to_xml(&schema).unwrap());
    }
}
