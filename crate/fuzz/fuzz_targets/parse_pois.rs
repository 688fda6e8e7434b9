#![no_main]
use libfuzzer_sys::fuzz_target;
use tourkit::data::{parse_pois, write_pois};

fuzz_target!(|data: &[u8]| {
    let Ok(table) = parse_pois(data, "fuzz") else { return };
    // Anything accepted must survive a write/read round trip.
    let mut out = Vec::new();
    write_pois(&mut out, &table).expect("write accepted table");
    let again = parse_pois(out.as_slice(), "roundtrip").expect("reparse written table");
    assert_eq!(again.len(), table.len());
    assert!(again.ids().eq(table.ids()));
});
