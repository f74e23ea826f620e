#![no_main]

use libfuzzer_sys::fuzz_target;
use shuntmeter::sampler::parse_mode_events;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_mode_events(text);
    }
});
