//! Fuzz the CSV history decoder: arbitrary bytes must either parse into a
//! record set or fail with an error, never panic or hang.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = wincast::ingest::parse_records(data, "fuzz");
});
