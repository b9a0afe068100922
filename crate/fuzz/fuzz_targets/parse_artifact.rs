//! Fuzz the model-artifact JSON decoder: version probe, full deserialization
//! and structural validation must reject garbage without panicking.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = wincast::pipeline::parse_artifact(text);
    }
});
