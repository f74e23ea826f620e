#![no_main]

use libfuzzer_sys::fuzz_target;
use shuntmeter::buffer_io::parse_flush_log;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_flush_log(text);
    }
});
