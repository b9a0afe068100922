//! Fuzz the scoring-request decoder: any request body must produce either a
//! record batch or a field-level diagnostic, never a panic.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(body) = std::str::from_utf8(data) {
        let _ = wincast::serve::parse_score_body(body);
    }
});
