#![no_main]
use libfuzzer_sys::fuzz_target;
use tourkit::bundle::ModelBundle;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(bundle) = ModelBundle::from_json(text, None, false) else { return };
    let encoded = bundle.to_json().expect("encode decoded bundle");
    ModelBundle::from_json(&encoded, Some(&bundle.fingerprint), false).expect("decode re-encoded bundle");
});
