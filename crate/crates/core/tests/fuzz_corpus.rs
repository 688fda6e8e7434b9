//! Replays the checked-in fuzz seeds so the parsers see them on every test
//! run, not only under cargo-fuzz.

use std::fs;
use std::path::PathBuf;

use tourkit::bundle::ModelBundle;
use tourkit::data::{parse_photos, parse_pois, parse_trajectories, write_pois, Poi, PoiTable};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn table() -> PoiTable {
    PoiTable::new(vec![
        Poi::new(1, 55.9486, -3.1999, "Structures"),
        Poi::new(2, 55.9509, -3.1962, "Cultural"),
        Poi::new(3, 55.9527, -3.2050, "Park"),
    ])
    .unwrap()
}

#[test]
fn poi_seeds() {
    let mut accepted = 0;
    for (name, data) in seeds("parse_pois") {
        let Ok(t) = parse_pois(data.as_slice(), &name) else { continue };
        let mut out = Vec::new();
        write_pois(&mut out, &t).unwrap();
        let again = parse_pois(out.as_slice(), "roundtrip").unwrap();
        assert!(again.ids().eq(t.ids()), "{name}");
        accepted += 1;
    }
    assert_eq!(accepted, 2);
}

#[test]
fn trajectory_seeds() {
    let pois = table();
    let mut accepted = 0;
    for (name, data) in seeds("parse_trajectories") {
        let Ok(trajs) = parse_trajectories(data.as_slice(), &name, &pois) else { continue };
        for t in &trajs {
            assert!(t.pois().windows(2).all(|w| w[0] != w[1]), "{name}");
        }
        accepted += 1;
    }
    assert_eq!(accepted, 1);
}

#[test]
fn photo_seeds() {
    let accepted = seeds("parse_photos")
        .iter()
        .filter(|(name, data)| parse_photos(data.as_slice(), name).is_ok())
        .count();
    assert_eq!(accepted, 1);
}

#[test]
fn bundle_seeds() {
    let mut accepted = 0;
    for (_, data) in seeds("bundle_decode") {
        let Ok(text) = std::str::from_utf8(&data) else { continue };
        let Ok(b) = ModelBundle::from_json(text, None, false) else { continue };
        ModelBundle::from_json(&b.to_json().unwrap(), Some(&b.fingerprint), false).unwrap();
        accepted += 1;
    }
    assert_eq!(accepted, 1);
}
