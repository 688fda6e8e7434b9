#![no_main]
use libfuzzer_sys::fuzz_target;
use tourkit::data::{build_trajectories, parse_photos, Poi, PoiTable};

fuzz_target!(|data: &[u8]| {
    let Ok(photos) = parse_photos(data, "fuzz") else { return };
    let pois = PoiTable::new(vec![
        Poi::new(1, 55.9486, -3.1999, "Structures"),
        Poi::new(2, 55.9509, -3.1962, "Cultural"),
    ])
    .unwrap();
    if let Ok(trajs) = build_trajectories(&photos, &pois, 200.0, 28_800) {
        let visits: usize = trajs.iter().map(|t| t.len()).sum();
        assert!(visits <= photos.len());
    }
});
