#![no_main]
use libfuzzer_sys::fuzz_target;
use tourkit::data::{parse_trajectories, Poi, PoiTable};

fuzz_target!(|data: &[u8]| {
    let pois = PoiTable::new(vec![
        Poi::new(1, 55.9486, -3.1999, "Structures"),
        Poi::new(2, 55.9509, -3.1962, "Cultural"),
        Poi::new(3, 55.9527, -3.2050, "Park"),
    ])
    .unwrap();
    let Ok(trajs) = parse_trajectories(data, "fuzz", &pois) else { return };
    for t in &trajs {
        assert!(!t.is_empty());
        assert!(t.pois().iter().all(|&p| pois.contains(p)));
        assert!(t.pois().windows(2).all(|w| w[0] != w[1]));
    }
});
